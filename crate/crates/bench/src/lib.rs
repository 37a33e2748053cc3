//! Fixtures shared by the benchmarks.

use epmac_core::ap::eta_faces;
use epmac_core::elliptic::{assemble_potential_system, LinearSystem};
use epmac_core::fields::{dual_average, interface_density, pressure};
use epmac_core::{preset, ApConfig, Mesh, State};

/// Mesh and initial state of a case preset at `n` cells per axis.
pub fn case_state(name: &str, n: usize) -> (Mesh, State) {
    let case = preset(name).expect("known case").with_cells(n);
    let mesh = case.mesh().expect("valid preset");
    let state = case
        .init_state(&mesh, &ApConfig::default().solver)
        .expect("initial state");
    (mesh, state)
}

/// The potential system of the first semi-implicit step from `state`.
pub fn potential_system(mesh: &Mesh, state: &State, dt: f64) -> LinearSystem {
    let rho = &state.rho;
    let p = pressure(rho, state.gamma).expect("positive density");
    let rs = interface_density(mesh, rho, state.gamma).expect("positive density");
    let eta = eta_faces(mesh, &dual_average(mesh, rho), ApConfig::default().eta).expect("positive density");
    assemble_potential_system(mesh, rho, &state.u, &p, &rs, &eta, dt, state.eps).expect("assembly")
}
