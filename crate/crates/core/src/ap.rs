//! Semi-implicit, energy-stable, asymptotic-preserving scheme on the MAC grid.
//!
//! One step solves a single linear elliptic problem for the new potential,
//! then updates density and momentum explicitly. The stabilisation flux `Q`
//! and the potential shift `Λ` make the discrete total energy non-increasing
//! under the time-step restrictions computed here.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, ActiveBound, StepReport, ENTROPY_TOL};
use crate::elliptic::{assemble_potential_system, solve, LinearSystem, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::{
    check_positive, dual_average, helmholtz_second_of, interface_density, pressure, CellField,
    FaceField, State,
};
use crate::mesh::Mesh;
use crate::operators::{
    dual_fluxes, grad, laplacian, net_outflow, oriented_sum, upwind_convect, BoundaryTreatment,
    DualFluxes,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApConfig {
    /// Stabilisation constant, `η_σ = η/ρ_{D_σ}`; must exceed 5/4.
    pub eta: f64,
    /// Potential shift constant, at least 2.
    pub alpha: f64,
    /// Safety factor applied to the time-step bounds.
    pub safety: f64,
    pub max_halvings: usize,
    pub solver: SolverConfig,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            eta: 1.5,
            alpha: 2.0,
            safety: 0.9,
            max_halvings: 10,
            solver: SolverConfig::default(),
        }
    }
}

impl ApConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 1.25) {
            return Err(Error::InvalidConfig(format!(
                "eta must exceed 5/4, got {}",
                self.eta
            )));
        }
        if !(self.alpha >= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be at least 2, got {}",
                self.alpha
            )));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "safety factor must lie in (0, 1], got {}",
                self.safety
            )));
        }
        self.solver.validate()
    }
}

/// Upper bound of `ψ''_γ` over the current density range, with a 10% margin.
pub fn compute_c(rho: &CellField, gamma: f64) -> Result<f64> {
    check_positive(rho)?;
    let r = if gamma >= 2.0 { rho.max() } else { rho.min() };
    Ok(1.1 * helmholtz_second_of(r, gamma))
}

/// `η_σ = η/ρ_{D_σ}` on every face.
pub fn eta_faces(mesh: &Mesh, rho_dual: &FaceField, eta: f64) -> Result<FaceField> {
    if !(eta > 1.25) {
        return Err(Error::InvalidConfig(format!(
            "eta must exceed 5/4, got {eta}"
        )));
    }
    for d in 0..mesh.dim() {
        if let Some(s) = rho_dual[d].iter().position(|&r| !(r > 0.0)) {
            return Err(Error::NonPositiveDualDensity {
                dir: d,
                face: s,
                value: rho_dual[d][s],
            });
        }
    }
    Ok(FaceField::from_fn(mesh, |d, s| eta / rho_dual[d][s]))
}

/// Advective bound: the largest `δt` with
/// `δt max(|∂K|/|K|, |∂L|/|L|)(|u_σ| + √η √(|p_L − p_K| + ρ_σ|φ_L − φ_K|)) ≤ μ_{K,L}/5`
/// on every interior face, `μ = min(ρ_K, ρ_L)/ρ_σ`.
pub fn advective_bound(
    mesh: &Mesh,
    state: &State,
    p: &CellField,
    rho_sigma: &FaceField,
    phi: &[f64],
    eta: f64,
) -> f64 {
    let mut best = f64::INFINITY;
    for d in 0..mesh.dim() {
        for (s, f) in mesh.interior_faces(d) {
            let (k, l) = (f.lower.unwrap(), f.upper.unwrap());
            let ratio = (mesh.perimeter(k) / mesh.volume(k)).max(mesh.perimeter(l) / mesh.volume(l));
            let rs = rho_sigma[d][s];
            let speed = state.u[d][s].abs()
                + eta.sqrt() * ((p[l] - p[k]).abs() + rs * (phi[l] - phi[k]).abs()).sqrt();
            let mu = state.rho[k].min(state.rho[l]) / rs;
            let rhs = mu.min(5.0) / 5.0;
            if speed > 0.0 {
                best = best.min(rhs / (ratio * speed));
            }
        }
    }
    best
}

/// Stabilisation bound `δt ≤ ¼ (ρ_{D_σ}/a_σ)^{1/2}`,
/// `a_σ = (2C/Δ_σ)(|σ|/|D_σ|) ρ_σ²`.
pub fn stabilization_bound(mesh: &Mesh, rho_sigma: &FaceField, rho_dual: &FaceField, c: f64) -> f64 {
    let mut best = f64::INFINITY;
    for d in 0..mesh.dim() {
        for (s, f) in mesh.interior_faces(d) {
            let a = 2.0 * c * mesh.inv_delta(d, s) * f.area / f.dual * rho_sigma[d][s].powi(2);
            best = best.min(0.25 * (rho_dual[d][s] / a).sqrt());
        }
    }
    best
}

/// Largest `(δt/|D_σ|) Σ_ε |F_{ε,σ}| / ρ^{n+1}_{D_σ}` per unit `δt`.
fn dual_flux_rate(mesh: &Mesh, dual: &DualFluxes, rho_dual_new: &FaceField) -> f64 {
    let mut worst = 0.0f64;
    for d in 0..mesh.dim() {
        for (s, f) in mesh.interior_faces(d) {
            let sum: f64 = dual.of_face(mesh, d, s).iter().map(|v| v.abs()).sum();
            worst = worst.max(sum / (f.dual * rho_dual_new[d][s]));
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtChoice {
    pub dt: f64,
    pub active: ActiveBound,
    pub advective: f64,
    pub stabilization: f64,
}

/// Time step from the lagged bounds, `safety · min(advective, stabilization)`.
pub fn compute_dt(mesh: &Mesh, state: &State, phi_pred: &[f64], c: f64, eta: f64, safety: f64) -> Result<DtChoice> {
    let rs = interface_density(mesh, &state.rho, state.gamma)?;
    let rd = dual_average(mesh, &state.rho);
    let p = pressure(&state.rho, state.gamma)?;
    let advective = advective_bound(mesh, state, &p, &rs, phi_pred, eta);
    let stabilization = stabilization_bound(mesh, &rs, &rd, c);
    let (bound, active) = if advective < stabilization {
        (advective, ActiveBound::Advective)
    } else {
        (stabilization, ActiveBound::Stabilization)
    };
    let dt = safety * bound;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositiveTimeStep(dt));
    }
    Ok(DtChoice {
        dt,
        active,
        advective,
        stabilization,
    })
}

/// Intermediate quantities of one step, kept for inspection and tests.
#[derive(Clone, Debug)]
pub struct StepDetail {
    pub system: LinearSystem,
    /// `Q^{n+1}` on every face (zero on exterior faces).
    pub q: FaceField,
    /// Primal mass fluxes `|σ|(ρ_σ u_σ − Q_σ)` w.r.t. `+e_i`.
    pub flux: FaceField,
    pub lambda: CellField,
    pub c: f64,
}

/// Advances `state` by one step no longer than `dt_cap`.
pub fn step(
    mesh: &Mesh,
    state: &State,
    config: &ApConfig,
    dt_cap: f64,
) -> Result<(State, StepReport, StepDetail)> {
    config.validate()?;
    state.validate(mesh)?;
    let gamma = state.gamma;
    let eps = state.eps;

    let rs = interface_density(mesh, &state.rho, gamma)?;
    let rd = dual_average(mesh, &state.rho);
    let p = pressure(&state.rho, gamma)?;
    let eta_s = eta_faces(mesh, &rd, config.eta)?;
    let c = compute_c(&state.rho, gamma)?;
    let choice = compute_dt(mesh, state, &state.phi, c, config.eta, config.safety)?;
    let (mut dt, mut active) = (choice.dt, choice.active);
    if dt_cap < dt {
        dt = dt_cap;
        active = ActiveBound::OutputTime;
    }
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep(dt));
    }
    let gp = grad(mesh, &p, BoundaryTreatment::Natural);

    let mut halvings = 0;
    let (system, solution, q, flux, rho_new, rd_new) = loop {
        let system = assemble_potential_system(mesh, &state.rho, &state.u, &p, &rs, &eta_s, dt, eps)?;
        let solution = solve(mesh, &system, &config.solver, Some(&state.phi))?;
        let gphi = grad(mesh, &solution.phi, BoundaryTreatment::Potential);
        let mut q = FaceField::from_fn(mesh, |d, s| {
            eta_s[d][s] * dt * rs[d][s] * (gp[d][s] - rs[d][s] * gphi[d][s])
        });
        q.zero_exterior(mesh);
        let mut flux = FaceField::from_fn(mesh, |d, s| {
            mesh.face(d, s).area * (rs[d][s] * state.u[d][s] - q[d][s])
        });
        flux.zero_exterior(mesh);
        let rho_new = CellField(
            (0..mesh.num_cells())
                .map(|k| state.rho[k] - dt / mesh.volume(k) * net_outflow(mesh, &flux, k))
                .collect(),
        );
        let positive = check_positive(&rho_new);
        let acceptable = positive.is_ok() && {
            let rd_new = dual_average(mesh, &rho_new);
            let slack = 1.0 + 1e-12;
            let a = advective_bound(mesh, state, &p, &rs, &solution.phi, config.eta);
            let b = stabilization_bound(mesh, &rs, &rd_new, c);
            let rate = dual_flux_rate(mesh, &dual_fluxes(mesh, &flux), &rd_new);
            dt <= a * slack && dt <= b * slack && dt * rate <= 0.25 * slack
        };
        if acceptable {
            let rd_new = dual_average(mesh, &rho_new);
            break (system, solution, q, flux, rho_new, rd_new);
        }
        if halvings == config.max_halvings {
            positive?;
            return Err(Error::CflExhausted { halvings, dt });
        }
        halvings += 1;
        dt *= 0.5;
    };

    // Potential shift Λ_K = −α δt (C/|K|) Σ|σ| ρ_σ u_{σ,K}.
    let mut mass_flux = FaceField::from_fn(mesh, |d, s| rs[d][s] * state.u[d][s]);
    mass_flux.zero_exterior(mesh);
    let lambda = CellField(
        (0..mesh.num_cells())
            .map(|k| -config.alpha * dt * c / mesh.volume(k) * oriented_sum(mesh, &mass_flux, k))
            .collect(),
    );
    let phi_star = CellField(
        solution
            .phi
            .iter()
            .zip(lambda.iter())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let gstar = grad(mesh, &phi_star, BoundaryTreatment::Potential);
    let dual = dual_fluxes(mesh, &flux);
    let conv = upwind_convect(mesh, &dual, &state.u);
    let u_new = FaceField::from_fn(mesh, |d, s| {
        let f = mesh.face(d, s);
        if !f.is_interior() {
            return 0.0;
        }
        let momentum = rd[d][s] * state.u[d][s]
            - dt * (conv[d][s] / f.dual + gp[d][s] - rs[d][s] * gstar[d][s]);
        momentum / rd_new[d][s]
    });

    let new = State {
        rho: rho_new,
        u: u_new,
        phi: solution.phi,
        t: state.t + dt,
        eps,
        gamma,
    };

    let mut max_dual_ratio = 0.0f64;
    let mut eta_ok = true;
    for d in 0..mesh.dim() {
        for (s, _) in mesh.interior_faces(d) {
            max_dual_ratio = max_dual_ratio.max(rd[d][s] / rd_new[d][s]);
            eta_ok &= eta_s[d][s] * rd_new[d][s] >= 1.0;
        }
    }
    let e_old = diagnostics::energies(mesh, state)?;
    let energies = diagnostics::energies(mesh, &new)?;
    let (max_rho_dev, max_div_u) = diagnostics::quasineutrality_deviation(mesh, &new);
    let report = StepReport {
        step: 0,
        t: new.t,
        dt,
        active_bound: active,
        halvings,
        solver_iterations: solution.report.iterations,
        solver_residual: solution.report.residual,
        energies,
        mass: diagnostics::total_mass(mesh, &new.rho),
        max_rho_dev,
        max_div_u,
        poisson_residual: poisson_residual(mesh, &new),
        max_dual_ratio,
        eta_ok,
        entropy_ok: energies.total <= e_old.total + ENTROPY_TOL * e_old.total,
    };
    let detail = StepDetail {
        system,
        q,
        flux,
        lambda,
        c,
    };
    Ok((new, report, detail))
}

/// `‖ε²Δφ − (ρ − ρ̄)‖_∞`, with `ρ̄ = 1` when a Dirichlet condition fixes
/// the gauge and the mean density otherwise.
pub fn poisson_residual(mesh: &Mesh, state: &State) -> f64 {
    let lap = laplacian(mesh, &state.phi, BoundaryTreatment::Potential);
    let reference = if mesh.has_dirichlet() {
        1.0
    } else {
        state.rho.integral(mesh) / mesh.measure()
    };
    (0..mesh.num_cells())
        .map(|k| (state.eps * state.eps * lap[k] - (state.rho[k] - reference)).abs())
        .fold(0.0, f64::max)
}

/// Stepping driver holding the current state of a semi-implicit run.
#[derive(Clone, Debug)]
pub struct ApSolver {
    pub mesh: Mesh,
    pub state: State,
    pub config: ApConfig,
    /// Total energy of the initial state, the scale of the entropy check.
    pub e0: f64,
    pub steps: usize,
}

impl ApSolver {
    pub fn new(mesh: Mesh, state: State, config: ApConfig) -> Result<Self> {
        config.validate()?;
        state.validate(&mesh)?;
        let e0 = diagnostics::energies(&mesh, &state)?.total;
        Ok(Self {
            mesh,
            state,
            config,
            e0,
            steps: 0,
        })
    }

    pub fn step(&mut self, dt_cap: f64) -> Result<StepReport> {
        self.step_detailed(dt_cap).map(|(report, _)| report)
    }

    /// As [`ApSolver::step`], also returning the assembled system and fluxes.
    pub fn step_detailed(&mut self, dt_cap: f64) -> Result<(StepReport, StepDetail)> {
        let e_old = diagnostics::energies(&self.mesh, &self.state)?.total;
        let (new, mut report, detail) = step(&self.mesh, &self.state, &self.config, dt_cap)?;
        self.steps += 1;
        report.step = self.steps;
        report.entropy_ok = report.energies.total <= e_old + ENTROPY_TOL * self.e0;
        self.state = new;
        Ok((report, detail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Boundary, GridSpec};
    use std::f64::consts::PI;

    const P: [Boundary; 2] = [Boundary::Periodic, Boundary::Periodic];
    const NF: [Boundary; 2] = [Boundary::NoFlux, Boundary::NoFlux];

    fn uniform(mesh: &Mesh, u: f64, eps: f64, gamma: f64) -> State {
        State {
            rho: CellField::constant(mesh, 1.0),
            u: FaceField::from_fn(mesh, |_, _| u),
            phi: CellField::zeros(mesh),
            t: 0.0,
            eps,
            gamma,
        }
    }

    #[test]
    fn c_examples() {
        let m = Mesh::new(&GridSpec::uniform_1d(4, 0.0, 1.0, P)).unwrap();
        let rho = CellField(vec![0.5, 1.0, 2.0, 1.5]);
        assert!((compute_c(&rho, 2.0).unwrap() - 2.2).abs() < 1e-15);
        assert!((compute_c(&rho, 1.0).unwrap() - 2.2).abs() < 1e-15);
        assert!((compute_c(&CellField::constant(&m, 1.0), 1.4).unwrap() - 1.54).abs() < 1e-15);
    }

    #[test]
    fn eta_examples() {
        let m = Mesh::new(&GridSpec::uniform_1d(4, 0.0, 1.0, P)).unwrap();
        let ones = FaceField::from_fn(&m, |_, _| 1.0);
        assert!(eta_faces(&m, &ones, 1.5).unwrap().0[0].iter().all(|&e| e == 1.5));
        let twos = FaceField::from_fn(&m, |_, _| 2.0);
        assert!(eta_faces(&m, &twos, 1.5).unwrap().0[0].iter().all(|&e| e == 0.75));
        assert!(eta_faces(&m, &ones, 1.25).is_err());
        let cfg = ApConfig {
            eta: 1.25,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dt_bounds_by_hand() {
        let m = Mesh::new(&GridSpec::uniform_1d(100, 0.0, 1.0, P)).unwrap();
        let h = 0.01;
        let s = uniform(&m, 1.0, 0.1, 2.0);
        let choice = compute_dt(&m, &s, &s.phi, 2.2, 1.5, 1.0).unwrap();
        // δt (2/h) · 1 ≤ 1/5.
        assert!((choice.advective - 1e-3).abs() < 1e-15);
        // a_σ = 2·2.2·(2/h)·(1/h), since Δ_σ = h/2 for |∂K|/|K| = 2/h.
        let expect = 0.25 * (h * h / 8.8f64).sqrt();
        assert!((choice.stabilization - expect).abs() < 1e-15);
        assert_eq!(choice.active, ActiveBound::Stabilization);

        let rest = uniform(&m, 0.0, 0.1, 2.0);
        let choice = compute_dt(&m, &rest, &rest.phi, 2.2, 1.5, 0.9).unwrap();
        assert!(choice.advective.is_infinite());
        assert!((choice.dt - 0.9 * expect).abs() < 1e-15);
    }

    #[test]
    fn rest_state_is_fixed_point() {
        let m = Mesh::new(&GridSpec::uniform_2d([8, 6], [0.0, 1.0], [0.0, 1.0], [P, NF])).unwrap();
        let mut s = uniform(&m, 0.0, 1e-3, 1.4);
        s.u.zero_exterior(&m);
        let (new, report, _) = step(&m, &s, &ApConfig::default(), f64::INFINITY).unwrap();
        assert!(new.rho.iter().all(|&r| r == 1.0));
        assert_eq!(new.u.max_abs(), 0.0);
        assert_eq!(new.phi.max_abs(), 0.0);
        assert!(report.entropy_ok);
    }

    #[test]
    fn uniform_translation_is_fixed_point() {
        let m = Mesh::new(&GridSpec::uniform_2d([8, 8], [0.0, 1.0], [0.0, 1.0], [P, P])).unwrap();
        let s = uniform(&m, 0.7, 1e-2, 2.0);
        let (new, _, _) = step(&m, &s, &ApConfig::default(), f64::INFINITY).unwrap();
        for &r in new.rho.iter() {
            assert!((r - 1.0).abs() < 1e-14);
        }
        assert!(new.phi.max_abs() < 1e-12);
        for v in new.u.0.iter().flatten() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_conserves_mass_and_energy() {
        let m = Mesh::new(&GridSpec::uniform_1d(100, 0.0, 1.0, P)).unwrap();
        let eps = 1e-4;
        let mut s = uniform(&m, 0.0, eps, 2.0);
        s.u = FaceField::from_fn(&m, |d, f| 1.0 + eps * eps * (16.0 * PI * m.face(d, f).center[0]).cos());
        let e0 = diagnostics::energies(&m, &s).unwrap().total;
        let (new, report, _) = step(&m, &s, &ApConfig::default(), f64::INFINITY).unwrap();
        let m0 = s.rho.integral(&m);
        assert!((new.rho.integral(&m) - m0).abs() <= 1e-12 * m0);
        assert!(report.energies.total <= e0 * (1.0 + 1e-10));
        assert!(report.poisson_residual <= 1e-9);
    }

    #[test]
    fn output_cap_shortens_step() {
        let m = Mesh::new(&GridSpec::uniform_1d(20, 0.0, 1.0, P)).unwrap();
        let s = uniform(&m, 1.0, 0.1, 2.0);
        let (new, report, _) = step(&m, &s, &ApConfig::default(), 1e-5).unwrap();
        assert_eq!(report.active_bound, ActiveBound::OutputTime);
        assert_eq!(new.t, 1e-5);
    }
}
