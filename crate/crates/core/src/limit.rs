//! Quasineutral limit of the semi-implicit scheme: a projection-type scheme
//! for the stabilised incompressible Euler system with `ρ ≡ 1`.
//!
//! In step reports of this scheme the `poisson_residual` field carries the
//! post-step constraint residual `‖div(uⁿ − Qⁿ⁺¹)‖_∞`.

use crate::ap::{compute_dt, ApConfig};
use crate::diagnostics::{kinetic_energy, ActiveBound, EnergyTriple, StepReport};
use crate::elliptic::{assemble_limit_system, solve, SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::{helmholtz_second_of, CellField, FaceField, State};
use crate::mesh::Mesh;
use crate::operators::{div, dual_fluxes, grad, upwind_convect, BoundaryTreatment};

/// Relative tolerance of the kinetic-energy monitor of the limit scheme.
pub const KINETIC_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct LimitStep {
    pub u: FaceField,
    pub phi: CellField,
    pub q: FaceField,
    /// `‖div(uⁿ − Qⁿ⁺¹)‖_∞`.
    pub constraint: f64,
    pub solve: SolveReport,
}

/// One step of the limit scheme from `(uⁿ, φⁿ)`; `φⁿ` only warm-starts the solver.
#[allow(clippy::too_many_arguments)]
pub fn step_limit(
    mesh: &Mesh,
    u: &FaceField,
    phi: &CellField,
    dt: f64,
    eta: f64,
    alpha: f64,
    gamma: f64,
    solver: &SolverConfig,
) -> Result<LimitStep> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep(dt));
    }
    let system = assemble_limit_system(mesh, u, eta, dt)?;
    // The constraint is checked in the max norm while the solver controls the
    // 2-norm; tighten by √N so the former follows from the latter.
    let tight = SolverConfig {
        tol: (solver.tol / (mesh.num_cells() as f64).sqrt()).max(1e-14),
        ..*solver
    };
    let solution = solve(mesh, &system, &tight, Some(phi))?;
    let gphi = grad(mesh, &solution.phi, BoundaryTreatment::Potential);
    let mut q = FaceField::from_fn(mesh, |d, s| -eta * dt * gphi[d][s]);
    q.zero_exterior(mesh);
    let mut transport = FaceField::from_fn(mesh, |d, s| u[d][s] - q[d][s]);
    transport.zero_exterior(mesh);
    let constraint = div(mesh, &transport).max_abs();

    // The potential enters with the sign it has in the semi-implicit scheme,
    // whose ε → 0 limit this is: the force is +∇(φ − Λ).
    let c = 1.1 * helmholtz_second_of(1.0, gamma);
    let div_u = div(mesh, u);
    let phi_star = CellField(
        (0..mesh.num_cells())
            .map(|k| solution.phi[k] + alpha * dt * c * div_u[k])
            .collect(),
    );
    let gstar = grad(mesh, &phi_star, BoundaryTreatment::Potential);
    let flux = FaceField::from_fn(mesh, |d, s| mesh.face(d, s).area * transport[d][s]);
    let dual = dual_fluxes(mesh, &flux);
    let conv = upwind_convect(mesh, &dual, u);
    let u_new = FaceField::from_fn(mesh, |d, s| {
        let f = mesh.face(d, s);
        if f.is_interior() {
            u[d][s] - dt * (conv[d][s] / f.dual - gstar[d][s])
        } else {
            0.0
        }
    });
    Ok(LimitStep {
        u: u_new,
        phi: solution.phi,
        q,
        constraint,
        solve: solution.report,
    })
}

/// Stepping driver for the limit scheme; the density stays identically 1.
#[derive(Clone, Debug)]
pub struct LimitSolver {
    pub mesh: Mesh,
    pub state: State,
    pub config: ApConfig,
    pub steps: usize,
}

impl LimitSolver {
    pub fn new(mesh: Mesh, mut state: State, config: ApConfig) -> Result<Self> {
        config.validate()?;
        state.rho = CellField::constant(&mesh, 1.0);
        state.phi = CellField::zeros(&mesh);
        state.validate(&mesh)?;
        Ok(Self {
            mesh,
            state,
            config,
            steps: 0,
        })
    }

    pub fn step(&mut self, dt_cap: f64) -> Result<StepReport> {
        let c = 1.1 * helmholtz_second_of(1.0, self.state.gamma);
        let choice = compute_dt(
            &self.mesh,
            &self.state,
            &self.state.phi,
            c,
            self.config.eta,
            self.config.safety,
        )?;
        let (dt, active) = if dt_cap < choice.dt {
            (dt_cap, ActiveBound::OutputTime)
        } else {
            (choice.dt, choice.active)
        };
        let k_old = kinetic_energy(&self.mesh, &self.state.rho, &self.state.u);
        let out = step_limit(
            &self.mesh,
            &self.state.u,
            &self.state.phi,
            dt,
            self.config.eta,
            self.config.alpha,
            self.state.gamma,
            &self.config.solver,
        )?;
        self.state.u = out.u;
        self.state.phi = out.phi;
        self.state.t += dt;
        self.steps += 1;
        let kinetic = kinetic_energy(&self.mesh, &self.state.rho, &self.state.u);
        Ok(StepReport {
            step: self.steps,
            t: self.state.t,
            dt,
            active_bound: active,
            halvings: 0,
            solver_iterations: out.solve.iterations,
            solver_residual: out.solve.residual,
            energies: EnergyTriple::new(0.0, kinetic, 0.0),
            mass: self.mesh.measure(),
            max_rho_dev: 0.0,
            max_div_u: div(&self.mesh, &self.state.u).max_abs(),
            poisson_residual: out.constraint,
            max_dual_ratio: 1.0,
            eta_ok: true,
            entropy_ok: kinetic <= k_old * (1.0 + KINETIC_TOL),
        })
    }
}
