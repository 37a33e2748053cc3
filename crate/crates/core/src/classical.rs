//! Explicit collocated reference scheme with Rusanov fluxes.
//!
//! Stable only for `δt = O(ε)`; it is the baseline the semi-implicit scheme
//! is compared against.

use serde::{Deserialize, Serialize};

use crate::ap::poisson_residual;
use crate::diagnostics::{potential_energy, ActiveBound, EnergyTriple, StepReport, ENTROPY_TOL};
use crate::elliptic::{assemble_poisson, solve, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::{
    check_positive, pressure, relative_internal_energy, CellField, FaceField, State,
};
use crate::mesh::Mesh;

/// Wave speed used in the Rusanov dissipation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveSpeed {
    /// `s_K = |u_K·e_i + √(γρ_K^{γ−1})|`.
    Combined,
    /// `s_K = |u_K·e_i| + √(γρ_K^{γ−1})`.
    Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalConfig {
    /// Courant number of the wave-speed bound.
    pub cfl: f64,
    /// `δt ≤ dt_eps_factor · ε`.
    pub dt_eps_factor: f64,
    pub wave_speed: WaveSpeed,
    pub solver: SolverConfig,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            dt_eps_factor: 0.5,
            wave_speed: WaveSpeed::Combined,
            solver: SolverConfig::default(),
        }
    }
}

impl ClassicalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            return Err(Error::InvalidConfig(format!("cfl must be positive, got {}", self.cfl)));
        }
        if !(self.dt_eps_factor > 0.0 && self.dt_eps_factor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt/eps factor must be positive, got {}",
                self.dt_eps_factor
            )));
        }
        self.solver.validate()
    }
}

/// Cell-centred unknowns of the collocated scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocatedState {
    pub rho: CellField,
    /// One cell field per velocity component.
    pub u: Vec<CellField>,
    pub phi: CellField,
    pub t: f64,
    pub eps: f64,
    pub gamma: f64,
}

impl CollocatedState {
    /// Cell velocities as the average of the two adjacent face values.
    pub fn from_staggered(mesh: &Mesh, state: &State) -> Self {
        let u = (0..mesh.dim())
            .map(|d| {
                CellField(
                    (0..mesh.num_cells())
                        .map(|k| {
                            let [lo, hi] = mesh.cell_faces(k, d);
                            0.5 * (state.u[d][lo] + state.u[d][hi])
                        })
                        .collect(),
                )
            })
            .collect();
        Self {
            rho: state.rho.clone(),
            u,
            phi: state.phi.clone(),
            t: state.t,
            eps: state.eps,
            gamma: state.gamma,
        }
    }
}

pub fn wave_speed(rho: f64, u: f64, gamma: f64, kind: WaveSpeed) -> f64 {
    let c = (gamma * rho.powf(gamma - 1.0)).sqrt();
    match kind {
        WaveSpeed::Combined => (u + c).abs(),
        WaveSpeed::Split => u.abs() + c,
    }
}

/// Rusanov mass flux through `σ = K|L` in the `+e_i` direction.
///
/// `(ρ_K, u_K, s_K)` and `(ρ_L, u_L, s_L)` are density, normal velocity and
/// wave speed on the lower and upper side.
pub fn rusanov_flux(k: (f64, f64, f64), l: (f64, f64, f64)) -> f64 {
    0.5 * (k.0 * k.1 + l.0 * l.1) - 0.5 * k.2.max(l.2) * (l.0 - k.0)
}

/// Collocated gradient `(1/|K|) Σ |σ| q_σ ν_{σ,K}` with face averages;
/// exterior faces use `boundary(dir, face, q_K)`.
fn cell_gradient(
    mesh: &Mesh,
    q: &[f64],
    boundary: impl Fn(usize, usize, f64) -> f64,
) -> Vec<CellField> {
    let face_value = |d: usize, s: usize, k: usize| {
        let f = mesh.face(d, s);
        match (f.lower, f.upper) {
            (Some(a), Some(b)) => 0.5 * (q[a] + q[b]),
            _ => boundary(d, s, q[k]),
        }
    };
    (0..mesh.dim())
        .map(|d| {
            CellField(
                (0..mesh.num_cells())
                    .map(|k| {
                        let [lo, hi] = mesh.cell_faces(k, d);
                        (mesh.face(d, hi).area * face_value(d, hi, k)
                            - mesh.face(d, lo).area * face_value(d, lo, k))
                            / mesh.volume(k)
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Energies of a collocated state; the kinetic part uses cell masses.
pub fn collocated_energies(mesh: &Mesh, state: &CollocatedState) -> Result<EnergyTriple> {
    let internal = relative_internal_energy(&state.rho, state.gamma)?.integral(mesh);
    let kinetic = 0.5
        * (0..mesh.num_cells())
            .map(|k| {
                let u2: f64 = state.u.iter().map(|c| c[k] * c[k]).sum();
                mesh.volume(k) * state.rho[k] * u2
            })
            .sum::<f64>();
    let potential = potential_energy(mesh, &state.phi, state.eps);
    Ok(EnergyTriple::new(internal, kinetic, potential))
}

/// `min(cfl·h_min/max s, c_ε·ε)` and the bound that realised it.
pub fn classical_dt(mesh: &Mesh, state: &CollocatedState, config: &ClassicalConfig) -> (f64, ActiveBound) {
    let mut smax = 0.0f64;
    for k in 0..mesh.num_cells() {
        for c in &state.u {
            smax = smax.max(wave_speed(state.rho[k], c[k], state.gamma, config.wave_speed));
        }
    }
    let acoustic = config.cfl * mesh.h_min() / smax;
    let debye = config.dt_eps_factor * state.eps;
    if acoustic < debye {
        (acoustic, ActiveBound::Acoustic)
    } else {
        (debye, ActiveBound::Debye)
    }
}

pub fn step_classical(
    mesh: &Mesh,
    state: &CollocatedState,
    config: &ClassicalConfig,
    dt_cap: f64,
) -> Result<(CollocatedState, StepReport)> {
    config.validate()?;
    check_positive(&state.rho)?;
    let (mut dt, mut active) = classical_dt(mesh, state, config);
    if dt_cap < dt {
        dt = dt_cap;
        active = ActiveBound::OutputTime;
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositiveTimeStep(dt));
    }
    let n = mesh.num_cells();
    let gamma = state.gamma;

    // Face fluxes w.r.t. +e_i (area included) and their upwind momentum.
    let mut mass_div = vec![0.0; n];
    let mut mom_div = vec![vec![0.0; n]; mesh.dim()];
    for d in 0..mesh.dim() {
        for (_, f) in mesh.interior_faces(d) {
            let (k, l) = (f.lower.unwrap(), f.upper.unwrap());
            let side = |c: usize| {
                let u = state.u[d][c];
                (state.rho[c], u, wave_speed(state.rho[c], u, gamma, config.wave_speed))
            };
            let flux = f.area * rusanov_flux(side(k), side(l));
            let up = if flux >= 0.0 { k } else { l };
            mass_div[k] += flux;
            mass_div[l] -= flux;
            for (c, comp) in mom_div.iter_mut().enumerate() {
                comp[k] += flux * state.u[c][up];
                comp[l] -= flux * state.u[c][up];
            }
        }
    }
    let rho_new = CellField(
        (0..n)
            .map(|k| state.rho[k] - dt / mesh.volume(k) * mass_div[k])
            .collect(),
    );
    check_positive(&rho_new)?;

    let system = assemble_poisson(mesh, &rho_new, state.eps)?;
    let solution = solve(mesh, &system, &config.solver, Some(&state.phi))?;
    let p = pressure(&state.rho, gamma)?;
    let grad_p = cell_gradient(mesh, &p, |_, _, pk| pk);
    let grad_phi = cell_gradient(mesh, &solution.phi, |d, s, phik| {
        mesh.dirichlet_value(d, s).unwrap_or(phik)
    });
    let u_new: Vec<CellField> = (0..mesh.dim())
        .map(|d| {
            CellField(
                (0..n)
                    .map(|k| {
                        let m = state.rho[k] * state.u[d][k]
                            - dt / mesh.volume(k) * mom_div[d][k]
                            - dt * grad_p[d][k]
                            + dt * rho_new[k] * grad_phi[d][k];
                        m / rho_new[k]
                    })
                    .collect(),
            )
        })
        .collect();

    let new = CollocatedState {
        rho: rho_new,
        u: u_new,
        phi: solution.phi,
        t: state.t + dt,
        eps: state.eps,
        gamma,
    };
    let e_old = collocated_energies(mesh, state)?;
    let energies = collocated_energies(mesh, &new)?;
    let staggered = State {
        rho: new.rho.clone(),
        u: FaceField::zeros(mesh),
        phi: new.phi.clone(),
        t: new.t,
        eps: new.eps,
        gamma,
    };
    let max_rho_dev = new.rho.iter().fold(0.0, |m: f64, r| m.max((r - 1.0).abs()));
    let report = StepReport {
        step: 0,
        t: new.t,
        dt,
        active_bound: active,
        halvings: 0,
        solver_iterations: solution.report.iterations,
        solver_residual: solution.report.residual,
        energies,
        mass: new.rho.integral(mesh),
        max_rho_dev,
        max_div_u: collocated_divergence(mesh, &new).max_abs(),
        poisson_residual: poisson_residual(mesh, &staggered),
        max_dual_ratio: 0.0,
        eta_ok: true,
        entropy_ok: energies.total <= e_old.total + ENTROPY_TOL * e_old.total,
    };
    Ok((new, report))
}

/// Collocated divergence with face-averaged velocities, zero normal
/// velocity on walls.
pub fn collocated_divergence(mesh: &Mesh, state: &CollocatedState) -> CellField {
    let mut out = CellField::zeros(mesh);
    for d in 0..mesh.dim() {
        let g = cell_gradient(mesh, &state.u[d], |_, _, _| 0.0);
        for k in 0..mesh.num_cells() {
            out[k] += g[d][k];
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct ClassicalSolver {
    pub mesh: Mesh,
    pub state: CollocatedState,
    pub config: ClassicalConfig,
    pub e0: f64,
    pub steps: usize,
}

impl ClassicalSolver {
    pub fn new(mesh: Mesh, state: CollocatedState, config: ClassicalConfig) -> Result<Self> {
        config.validate()?;
        check_positive(&state.rho)?;
        let e0 = collocated_energies(&mesh, &state)?.total;
        Ok(Self {
            mesh,
            state,
            config,
            e0,
            steps: 0,
        })
    }

    pub fn step(&mut self, dt_cap: f64) -> Result<StepReport> {
        let e_old = collocated_energies(&self.mesh, &self.state)?.total;
        let (new, mut report) = step_classical(&self.mesh, &self.state, &self.config, dt_cap)?;
        self.steps += 1;
        report.step = self.steps;
        report.entropy_ok = report.energies.total <= e_old + ENTROPY_TOL * self.e0;
        self.state = new;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Boundary, GridSpec};

    const P: [Boundary; 2] = [Boundary::Periodic, Boundary::Periodic];

    #[test]
    fn rusanov_examples() {
        let s = wave_speed(1.3, 0.4, 2.0, WaveSpeed::Combined);
        assert!((rusanov_flux((1.3, 0.4, s), (1.3, 0.4, s)) - 1.3 * 0.4).abs() < 1e-15);
        // Pure diffusion at rest: −½ max(s)(ρ_L − ρ_K).
        let (sk, sl) = (wave_speed(1.0, 0.0, 2.0, WaveSpeed::Combined), wave_speed(2.0, 0.0, 2.0, WaveSpeed::Combined));
        assert!((sl - 2.0).abs() < 1e-15);
        assert!((rusanov_flux((1.0, 0.0, sk), (2.0, 0.0, sl)) + 1.0).abs() < 1e-15);
        // Swapping the sides flips the diffusive part only.
        let a = rusanov_flux((1.0, 0.3, sk), (2.0, -0.1, sl));
        let b = rusanov_flux((2.0, -0.1, sl), (1.0, 0.3, sk));
        assert!((a + b - (1.0 * 0.3 + 2.0 * -0.1)).abs() < 1e-15);
    }

    #[test]
    fn wave_speed_variants() {
        assert!((wave_speed(1.0, -3.0, 2.0, WaveSpeed::Combined) - (3.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((wave_speed(1.0, -3.0, 2.0, WaveSpeed::Split) - (3.0 + 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn rest_state_is_fixed_point() {
        let m = Mesh::new(&GridSpec::uniform_1d(16, 0.0, 1.0, P)).unwrap();
        let s = CollocatedState {
            rho: CellField::constant(&m, 1.0),
            u: vec![CellField::zeros(&m)],
            phi: CellField::zeros(&m),
            t: 0.0,
            eps: 1e-2,
            gamma: 2.0,
        };
        let (new, report) = step_classical(&m, &s, &ClassicalConfig::default(), f64::INFINITY).unwrap();
        assert_eq!(new.rho, s.rho);
        assert_eq!(new.u, s.u);
        assert_eq!(new.phi.max_abs(), 0.0);
        assert_eq!(report.active_bound, ActiveBound::Debye);
        assert!((report.dt - 0.5e-2).abs() < 1e-18);
    }

    #[test]
    fn collocated_gradient_exact_for_affine() {
        let nf = [Boundary::NoFlux, Boundary::NoFlux];
        let m = Mesh::new(&GridSpec::uniform_2d([6, 5], [0.0, 1.0], [0.0, 1.0], [nf, nf])).unwrap();
        let q = CellField::from_fn(&m, |x| 2.0 * x[0] - 3.0 * x[1]);
        let g = cell_gradient(&m, &q, |_, _, qk| qk);
        // Interior cells only: walls use the one-sided mirror value.
        for iy in 1..4 {
            for ix in 1..5 {
                let k = m.cell_index(ix, iy);
                assert!((g[0][k] - 2.0).abs() < 1e-12);
                assert!((g[1][k] + 3.0).abs() < 1e-12);
            }
        }
    }
}
