//! Energy functionals, conservation and entropy monitors, and the
//! quasineutrality measures shared by all schemes.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::{dual_average, relative_internal_energy, CellField, FaceField, State};
use crate::mesh::Mesh;
use crate::operators::{div, grad, BoundaryTreatment};

/// Relative tolerance of the discrete entropy inequality.
pub const ENTROPY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTriple {
    pub internal: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

impl EnergyTriple {
    pub fn new(internal: f64, kinetic: f64, potential: f64) -> Self {
        Self {
            internal,
            kinetic,
            potential,
            total: internal + kinetic + potential,
        }
    }
}

/// `𝓘 = Σ|K|Π_γ(ρ_K)`.
pub fn internal_energy(mesh: &Mesh, rho: &CellField, gamma: f64) -> Result<f64> {
    Ok(relative_internal_energy(rho, gamma)?.integral(mesh))
}

/// `½ Σ_{σ interior} |D_σ| ρ_{D_σ} u_σ²`.
pub fn kinetic_energy(mesh: &Mesh, rho: &CellField, u: &FaceField) -> f64 {
    let rd = dual_average(mesh, rho);
    let mut acc = 0.0;
    for d in 0..mesh.dim() {
        for (s, f) in mesh.interior_faces(d) {
            acc += f.dual * rd[d][s] * u[d][s] * u[d][s];
        }
    }
    0.5 * acc
}

/// `ε²/2 Σ_{σ interior} |D_σ| (∂φ)_σ²`.
pub fn potential_energy(mesh: &Mesh, phi: &CellField, eps: f64) -> f64 {
    let g = grad(mesh, phi, BoundaryTreatment::Potential);
    0.5 * eps * eps * g.dual_inner(&g, mesh)
}

pub fn energies(mesh: &Mesh, state: &State) -> Result<EnergyTriple> {
    Ok(EnergyTriple::new(
        internal_energy(mesh, &state.rho, state.gamma)?,
        kinetic_energy(mesh, &state.rho, &state.u),
        potential_energy(mesh, &state.phi, state.eps),
    ))
}

/// `Σ|K|ρ_K`.
pub fn total_mass(mesh: &Mesh, rho: &CellField) -> f64 {
    rho.integral(mesh)
}

/// `(‖ρ − 1‖_∞, ‖div u‖_∞)`.
pub fn quasineutrality_deviation(mesh: &Mesh, state: &State) -> (f64, f64) {
    let dev = state.rho.iter().fold(0.0, |m: f64, r| m.max((r - 1.0).abs()));
    (dev, div(mesh, &state.u).max_abs())
}

/// `‖u₀‖_{L²} + ε⁻² ‖ρ₀ − 1‖_∞`, with the dual-cell weighted norm of `u₀`.
pub fn well_prepared_measure(mesh: &Mesh, rho0: &CellField, u0: &FaceField, eps: f64) -> f64 {
    let l2 = u0.dual_inner(u0, mesh).sqrt();
    let dev = rho0.iter().fold(0.0, |m: f64, r| m.max((r - 1.0).abs()));
    l2 + dev / (eps * eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyVerdict {
    pub ok: bool,
    /// Index `n + 1` of the first energy with `E^{n+1} > E^n + tol·E⁰`.
    pub first_violation: Option<usize>,
}

/// Checks `E^{n+1} ≤ E^n + tol·E⁰` along a sequence of total energies.
pub fn entropy_monitor(totals: &[f64], tol: f64) -> EntropyVerdict {
    let e0 = totals.first().copied().unwrap_or(0.0);
    let first_violation = totals
        .windows(2)
        .position(|w| w[1] > w[0] + tol * e0)
        .map(|i| i + 1);
    EntropyVerdict {
        ok: first_violation.is_none(),
        first_violation,
    }
}

/// First index where the energy exceeds `factor·E⁰`.
pub fn energy_growth(totals: &[f64], factor: f64) -> Option<usize> {
    let e0 = totals.first().copied()?;
    totals.iter().position(|&e| !(e <= factor * e0))
}

/// Which restriction fixed the time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveBound {
    /// Velocity/pressure/potential bound of the semi-implicit scheme.
    Advective,
    /// Bound making the stabilisation quadratics solvable.
    Stabilization,
    /// Wave-speed bound of the explicit scheme.
    Acoustic,
    /// `δt ≤ c·ε` of the explicit scheme.
    Debye,
    /// Shortened to land on an output time.
    OutputTime,
}

impl ActiveBound {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActiveBound::Advective => "advective",
            ActiveBound::Stabilization => "stabilization",
            ActiveBound::Acoustic => "acoustic",
            ActiveBound::Debye => "debye",
            ActiveBound::OutputTime => "output_time",
        }
    }
}

/// Per-step record emitted by every scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub active_bound: ActiveBound,
    /// Time-step halvings forced by the a-posteriori check.
    pub halvings: usize,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub energies: EnergyTriple,
    pub mass: f64,
    pub max_rho_dev: f64,
    pub max_div_u: f64,
    /// `‖ε²Δφ − (ρ − 1)‖_∞` after the step.
    pub poisson_residual: f64,
    /// `max_σ ρⁿ_{D_σ}/ρ^{n+1}_{D_σ}`; zero where not applicable.
    pub max_dual_ratio: f64,
    /// `η_σ ≥ 1/ρ^{n+1}_{D_σ}` on every interior face.
    pub eta_ok: bool,
    pub entropy_ok: bool,
}

/// Flat CSV row of a [`StepReport`].
#[derive(Serialize)]
pub struct ReportRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub active_bound: &'static str,
    pub halvings: usize,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub internal: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
    pub mass: f64,
    pub max_rho_dev: f64,
    pub max_div_u: f64,
    pub poisson_residual: f64,
    pub max_dual_ratio: f64,
    pub eta_ok: bool,
    pub entropy_ok: bool,
}

impl From<&StepReport> for ReportRow {
    fn from(r: &StepReport) -> Self {
        Self {
            step: r.step,
            t: r.t,
            dt: r.dt,
            active_bound: r.active_bound.as_str(),
            halvings: r.halvings,
            solver_iterations: r.solver_iterations,
            solver_residual: r.solver_residual,
            internal: r.energies.internal,
            kinetic: r.energies.kinetic,
            potential: r.energies.potential,
            total: r.energies.total,
            mass: r.mass,
            max_rho_dev: r.max_rho_dev,
            max_div_u: r.max_div_u,
            poisson_residual: r.poisson_residual,
            max_dual_ratio: r.max_dual_ratio,
            eta_ok: r.eta_ok,
            entropy_ok: r.entropy_ok,
        }
    }
}
