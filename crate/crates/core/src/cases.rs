//! Named initial-value problems and their discretised initial states.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elliptic::{assemble_poisson, solve, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::{check_positive, CellField, FaceField, State};
use crate::mesh::{Boundary, GridSpec, Mesh};

pub const CASE_NAMES: [&str; 4] = ["qn1d", "maxwell1d", "column2d", "qn2d"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Perturbed uniform flow at the quasineutral density, 1D periodic.
    Qn1d,
    /// Sinusoidal density perturbation of a static equilibrium, 1D periodic.
    Maxwell1d,
    /// Density step oscillating between no-flux walls, 2D.
    Column2d,
    /// Perturbed diagonal flow at the quasineutral density, 2D periodic.
    Qn2d,
}

impl CaseKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "qn1d" => Ok(CaseKind::Qn1d),
            "maxwell1d" => Ok(CaseKind::Maxwell1d),
            "column2d" => Ok(CaseKind::Column2d),
            "qn2d" => Ok(CaseKind::Qn2d),
            other => Err(Error::UnknownCase(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CaseKind::Qn1d => "qn1d",
            CaseKind::Maxwell1d => "maxwell1d",
            CaseKind::Column2d => "column2d",
            CaseKind::Qn2d => "qn2d",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CasePreset {
    pub kind: CaseKind,
    /// `[lo, hi]` per axis.
    pub domain: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
    pub boundary: Vec<[Boundary; 2]>,
    pub gamma: f64,
    pub eps: f64,
    /// Perturbation amplitude is `ε^delta_power` unless `delta` is set.
    pub delta_power: i32,
    pub delta: Option<f64>,
    /// Wavenumber factor of the perturbation, `sin(κπx)`.
    pub kappa: f64,
    /// Output times; `None` derives them from `ε`.
    pub output_times: Option<Vec<f64>>,
}

pub fn preset(name: &str) -> Result<CasePreset> {
    let kind = CaseKind::parse(name)?;
    let periodic = [Boundary::Periodic, Boundary::Periodic];
    let walls = [Boundary::NoFlux, Boundary::NoFlux];
    Ok(match kind {
        CaseKind::Qn1d => CasePreset {
            kind,
            domain: vec![[0.0, 1.0]],
            cells: vec![100],
            boundary: vec![periodic],
            gamma: 2.0,
            eps: 1e-4,
            delta_power: 2,
            delta: None,
            kappa: 16.0,
            output_times: None,
        },
        CaseKind::Maxwell1d => CasePreset {
            kind,
            domain: vec![[0.0, 1.0]],
            cells: vec![100],
            boundary: vec![periodic],
            gamma: 5.0 / 3.0,
            eps: 1e-4,
            delta_power: 1,
            delta: None,
            kappa: 2220.0,
            output_times: None,
        },
        CaseKind::Column2d => CasePreset {
            kind,
            domain: vec![[0.0, 1.0], [0.0, 1.0]],
            cells: vec![100, 100],
            boundary: vec![walls, walls],
            gamma: 1.4,
            eps: 1e-3,
            delta_power: 1,
            delta: None,
            kappa: 0.0,
            output_times: None,
        },
        CaseKind::Qn2d => CasePreset {
            kind,
            domain: vec![[0.0, 1.0], [0.0, 1.0]],
            cells: vec![100, 100],
            boundary: vec![periodic, periodic],
            gamma: 2.0,
            eps: 1e-2,
            delta_power: 2,
            delta: None,
            kappa: 16.0,
            output_times: None,
        },
    })
}

impl CasePreset {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| self.eps.powi(self.delta_power))
    }

    /// Oscillation period of the electrostatic restoring force, `2πε`.
    pub fn plasma_period(&self) -> f64 {
        2.0 * PI * self.eps
    }

    pub fn outputs(&self) -> Vec<f64> {
        if let Some(t) = &self.output_times {
            return t.clone();
        }
        match self.kind {
            CaseKind::Qn1d => vec![0.01, 0.1],
            CaseKind::Maxwell1d => vec![0.1],
            CaseKind::Column2d => vec![0.0, PI * self.eps, 2.0 * PI * self.eps],
            CaseKind::Qn2d if self.eps >= 1e-3 => vec![0.5, 2.0],
            CaseKind::Qn2d => vec![0.005],
        }
    }

    pub fn with_cells(mut self, n: usize) -> Self {
        self.cells = vec![n; self.dim()];
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.len() != self.dim() || self.boundary.len() != self.dim() {
            return Err(Error::InvalidConfig(format!(
                "case {}: expected {} cell counts",
                self.name(),
                self.dim()
            )));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Debye length must lie in (0, 1], got {}",
                self.eps
            )));
        }
        let t = self.outputs();
        if t.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "output times must be non-negative and increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            axes: self
                .domain
                .iter()
                .zip(&self.cells)
                .map(|(d, &n)| GridSpec::uniform_axis(n, d[0], d[1]))
                .collect(),
            boundary: self.boundary.clone(),
        }
    }

    pub fn rho0(&self, x: [f64; 2]) -> f64 {
        let delta = self.delta();
        match self.kind {
            CaseKind::Qn1d | CaseKind::Qn2d => 1.0,
            CaseKind::Maxwell1d => 1.0 + delta * (self.kappa * PI * x[0]).sin(),
            CaseKind::Column2d => {
                if x[0] < 0.5 {
                    1.0 - delta
                } else {
                    1.0 + delta
                }
            }
        }
    }

    /// Component `dir` of the initial velocity.
    pub fn u0(&self, dir: usize, x: [f64; 2]) -> f64 {
        let delta = self.delta();
        match self.kind {
            CaseKind::Qn1d => 1.0 + delta * (self.kappa * PI * x[0]).cos(),
            CaseKind::Maxwell1d | CaseKind::Column2d => 0.0,
            CaseKind::Qn2d => {
                let arg = self.kappa * PI * (x[0] + x[1]);
                if dir == 0 {
                    1.0 + delta * arg.sin()
                } else {
                    1.0 + delta * arg.cos()
                }
            }
        }
    }

    /// Composite Gauss subdivisions per cell and axis, keeping the phase
    /// change of `sin(κπx)` across one panel below 0.1.
    pub fn subdivisions(&self) -> usize {
        let h = self
            .domain
            .iter()
            .zip(&self.cells)
            .map(|(d, &n)| (d[1] - d[0]) / n as f64)
            .fold(0.0, f64::max);
        ((self.kappa * PI * h / 0.1).ceil() as usize).clamp(1, 2048)
    }

    pub fn mesh(&self) -> Result<Mesh> {
        self.validate()?;
        Mesh::new(&self.grid_spec())
    }

    /// Initial state: quadrature averages plus the matching potential.
    pub fn init_state(&self, mesh: &Mesh, solver: &SolverConfig) -> Result<State> {
        init_state(
            mesh,
            |x| self.rho0(x),
            |d, x| self.u0(d, x),
            self.eps,
            self.gamma,
            self.subdivisions(),
            solver,
        )
    }
}

const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Average of `f` over `[a, b]` with `pieces` composite 3-point Gauss panels.
pub fn gauss_average(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let w = (b - a) / pieces as f64;
    let mut acc = 0.0;
    for i in 0..pieces {
        let mid = a + (i as f64 + 0.5) * w;
        for (x, g) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            acc += g * f(mid + 0.5 * w * x);
        }
    }
    acc / (2.0 * pieces as f64)
}

/// Average over the box `[x0, x1] × [y0, y1]` (the second axis is ignored in 1D).
fn box_average(mesh: &Mesh, f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], y: [f64; 2], pieces: usize) -> f64 {
    if mesh.dim() == 1 {
        gauss_average(|s| f([s, 0.0]), x[0], x[1], pieces)
    } else {
        gauss_average(
            |t| gauss_average(|s| f([s, t]), x[0], x[1], pieces),
            y[0],
            y[1],
            pieces,
        )
    }
}

fn cell_box(mesh: &Mesh, k: usize) -> [[f64; 2]; 2] {
    let [nx, _] = mesh.shape();
    let (ix, iy) = (k % nx, k / nx);
    let ex = mesh.edges(0);
    let ey = mesh.edges(1);
    [[ex[ix], ex[ix + 1]], [ey[iy], ey[iy + 1]]]
}

/// Cell averages of `rho0`, dual-cell averages of `u0`, zero velocity on
/// walls, and the potential solving `−ε²Δφ = 1 − ρ`.
pub fn init_state(
    mesh: &Mesh,
    rho0: impl Fn([f64; 2]) -> f64,
    u0: impl Fn(usize, [f64; 2]) -> f64,
    eps: f64,
    gamma: f64,
    pieces: usize,
    solver: &SolverConfig,
) -> Result<State> {
    let rho = CellField(
        (0..mesh.num_cells())
            .map(|k| {
                let [x, y] = cell_box(mesh, k);
                box_average(mesh, &rho0, x, y, pieces)
            })
            .collect(),
    );
    check_positive(&rho)?;

    let u = FaceField::from_fn(mesh, |d, s| {
        let f = mesh.face(d, s);
        if !f.is_interior() {
            return 0.0;
        }
        // Each half of D_σ is half of an adjacent cell, cut along σ.
        let mut acc = 0.0;
        for (cell, weight, lower) in [(f.lower, f.half_lower, true), (f.upper, f.half_upper, false)] {
            let k = cell.unwrap();
            let mut b = cell_box(mesh, k);
            let mid = 0.5 * (b[d][0] + b[d][1]);
            if lower {
                b[d][0] = mid;
            } else {
                b[d][1] = mid;
            }
            acc += weight * box_average(mesh, &|x| u0(d, x), b[0], b[1], pieces);
        }
        acc / f.dual
    });

    let system = assemble_poisson(mesh, &rho, eps)?;
    let phi = solve(mesh, &system, solver, None)?.phi;
    Ok(State {
        rho,
        u,
        phi,
        t: 0.0,
        eps,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::well_prepared_measure;

    #[test]
    fn preset_values() {
        assert_eq!(preset("qn1d").unwrap().gamma, 2.0);
        let c = preset("column2d").unwrap();
        assert!((c.rho0([0.25, 0.3]) - (1.0 - 1e-3)).abs() < 1e-16);
        assert!((c.rho0([0.75, 0.3]) - (1.0 + 1e-3)).abs() < 1e-16);
        assert_eq!(c.outputs()[0], 0.0);
        let mut q = preset("qn2d").unwrap();
        q.delta = Some(0.0);
        assert_eq!((q.u0(0, [0.3, 0.1]), q.u0(1, [0.3, 0.1])), (1.0, 1.0));
        assert_eq!(q.outputs(), vec![0.5, 2.0]);
        assert_eq!(q.with_eps(1e-4).outputs(), vec![0.005]);
        assert!(matches!(preset("shock"), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn gauss_average_of_sine() {
        let (kappa, delta) = (16.0, 0.3);
        let (a, b) = (0.13, 0.131);
        let f = |x: f64| 1.0 + delta * (kappa * PI * x).sin();
        let exact = 1.0
            + delta * ((kappa * PI * a).cos() - (kappa * PI * b).cos()) / (kappa * PI * (b - a));
        assert!((gauss_average(f, a, b, 1) - exact).abs() < 1e-10);
    }

    #[test]
    fn aliased_maxwell_averages() {
        let c = preset("maxwell1d").unwrap();
        let m = c.mesh().unwrap();
        let s = c.init_state(&m, &SolverConfig::default()).unwrap();
        let (kp, d) = (c.kappa * PI, c.delta());
        for k in [0, 17, 99] {
            let [x, _] = cell_box(&m, k);
            let exact = 1.0 + d * ((kp * x[0]).cos() - (kp * x[1]).cos()) / (kp * (x[1] - x[0]));
            assert!((s.rho[k] - exact).abs() < 1e-10 * d, "cell {k}");
        }
    }

    #[test]
    fn qn1d_initial_state() {
        let c = preset("qn1d").unwrap();
        let m = c.mesh().unwrap();
        let s = c.init_state(&m, &SolverConfig::default()).unwrap();
        assert!(s.rho.iter().all(|&r| r == 1.0));
        assert_eq!(s.phi.max_abs(), 0.0);
        // Dual cells are centred on faces: average of 1 + δcos(κπx) over [x−h/2, x+h/2].
        let (h, d, kp) = (0.01, c.delta(), c.kappa * PI);
        for s_idx in [0, 1, 50] {
            let x = m.face(0, s_idx).center[0];
            let exact = 1.0 + d * ((kp * (x + h / 2.0)).sin() - (kp * (x - h / 2.0)).sin()) / (kp * h);
            assert!((s.u[0][s_idx] - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn walls_get_zero_velocity() {
        let mut c = preset("qn2d").unwrap().with_cells(8);
        c.boundary = vec![[Boundary::NoFlux, Boundary::NoFlux]; 2];
        let m = c.mesh().unwrap();
        let s = c.init_state(&m, &SolverConfig::default()).unwrap();
        assert!(s.u.has_zero_trace(&m));
        assert!(s.u[0][1] > 0.5);
    }

    #[test]
    fn column_potential_is_neumann_solution() {
        let c = preset("column2d").unwrap().with_cells(20);
        let m = c.mesh().unwrap();
        let s = c.init_state(&m, &SolverConfig::default()).unwrap();
        let res = crate::ap::poisson_residual(&m, &s);
        assert!(res < 1e-10, "{res}");
        assert!(s.phi.max_abs() > 1.0);
    }

    #[test]
    fn well_preparedness_of_presets() {
        for eps in [1e-1, 1e-2, 1e-4] {
            for name in ["qn1d", "qn2d"] {
                let c = preset(name).unwrap().with_eps(eps).with_cells(32);
                let m = c.mesh().unwrap();
                let s = c.init_state(&m, &SolverConfig::default()).unwrap();
                let w = well_prepared_measure(&m, &s.rho, &s.u, eps);
                assert!(w < 3.0, "{name} {eps} {w}");
            }
            let c = preset("maxwell1d").unwrap().with_eps(eps);
            let m = c.mesh().unwrap();
            let s = c.init_state(&m, &SolverConfig::default()).unwrap();
            let w = well_prepared_measure(&m, &s.rho, &s.u, eps);
            // Heavy aliasing shrinks the cell averages, but not their 1/ε growth.
            assert!(w > 5e-3 / eps, "maxwell {eps} {w}");
        }
    }
}
