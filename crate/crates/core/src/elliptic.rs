//! Symmetric assembly and preconditioned conjugate-gradient solution of the
//! cell-centred elliptic problems for the electrostatic potential.
//!
//! Every system has the form
//!
//! ```text
//! Σ_{σ∈E(K)} (|σ|²/|D_σ|) w_σ (φ_K − φ_{K_σ}) = b_K
//! ```
//!
//! i.e. the |K|-scaled form of `−div(w ∇φ) = b/|K|`, which is symmetric on
//! any tensor grid. Dirichlet faces are extra unknowns with identity rows;
//! their coupling to the neighbouring cell is moved to the right-hand side so
//! the matrix stays symmetric.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CellField, FaceField};
use crate::mesh::Mesh;
use crate::operators::{grad, oriented_sum, BoundaryTreatment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative tolerance on `‖Aφ − b‖₂ / ‖b‖₂`.
    pub tol: f64,
    /// Defaults to ten times the number of unknowns.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(col, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|e| e.0 == j).map(|e| e.1).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij − A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] += a;
            }
        }
        d
    }

    /// Coordinate text format, one `row col value` triple per line.
    pub fn write_coordinate(&self, mut w: impl Write) -> std::io::Result<()> {
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                writeln!(w, "{i} {j} {a:.17e}")?;
            }
        }
        Ok(())
    }
}

/// Assembled potential problem.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub num_cells: usize,
    /// `(direction, face)` of each Dirichlet unknown, after the cell unknowns.
    pub dirichlet_faces: Vec<(usize, usize)>,
    /// Constants span the kernel of the cell block (no Dirichlet face
    /// carries a positive weight).
    pub singular: bool,
}

impl LinearSystem {
    pub fn num_unknowns(&self) -> usize {
        self.matrix.n
    }
}

/// Builds the system from face weights `w_σ` and cell right-hand sides.
///
/// Weights on exterior faces are only read for Dirichlet faces.
pub fn assemble(mesh: &Mesh, weights: &FaceField, cell_rhs: Vec<f64>) -> Result<LinearSystem> {
    let n = mesh.num_cells();
    if n == 0 {
        return Err(Error::InvalidGrid("empty mesh".into()));
    }
    let mut dirichlet_faces = Vec::new();
    let mut face_slot = vec![Vec::new(); mesh.dim()];
    for (d, slots) in face_slot.iter_mut().enumerate() {
        *slots = vec![usize::MAX; mesh.num_faces(d)];
        for s in 0..mesh.num_faces(d) {
            if mesh.dirichlet_value(d, s).is_some() {
                slots[s] = n + dirichlet_faces.len();
                dirichlet_faces.push((d, s));
            }
        }
    }

    let mut rhs = cell_rhs;
    let mut anchored = false;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n + dirichlet_faces.len());
    for k in 0..n {
        let mut row = Vec::with_capacity(1 + 2 * mesh.dim());
        let mut diag = 0.0;
        for d in 0..mesh.dim() {
            for s in mesh.cell_faces(k, d) {
                let f = mesh.face(d, s);
                let w = weights[d][s];
                if !(w >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "negative elliptic weight {w} on face {s} (direction {d})"
                    )));
                }
                let c = f.area * f.area / f.dual * w;
                if let Some(other) = f.other(k) {
                    diag += c;
                    row.push((other, -c));
                } else if let Some(value) = mesh.dirichlet_value(d, s) {
                    diag += c;
                    rhs[k] += c * value;
                    anchored |= c > 0.0;
                }
            }
        }
        row.push((k, diag));
        rows.push(row);
    }
    for &(d, s) in &dirichlet_faces {
        rows.push(vec![(face_slot[d][s], 1.0)]);
        rhs.push(mesh.dirichlet_value(d, s).unwrap_or_default());
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_rows(rows),
        rhs,
        num_cells: n,
        dirichlet_faces,
        singular: !anchored,
    })
}

/// Reformulated implicit potential equation of the semi-implicit scheme.
///
/// `w_σ = ε² + η_σ δt² ρ_σ²` and `b_K = |K| ρ̂_K` with
/// `ρ̂_K = 1 − ρ_K + (δt/|K|) Σ |σ| (ρ_σ u_{σ,K} − η_σ δt ρ_σ (∂p)_{σ,K})`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_potential_system(
    mesh: &Mesh,
    rho: &CellField,
    u: &FaceField,
    p: &CellField,
    rho_sigma: &FaceField,
    eta_sigma: &FaceField,
    dt: f64,
    eps: f64,
) -> Result<LinearSystem> {
    if eta_sigma.0.iter().flatten().any(|&e| !(e >= 0.0)) {
        return Err(Error::InvalidConfig("negative stabilisation weight".into()));
    }
    // The stabilisation flux only lives on interior faces.
    let weights = FaceField::from_fn(mesh, |d, s| {
        let stab = if mesh.face(d, s).is_interior() {
            eta_sigma[d][s] * dt * dt * rho_sigma[d][s] * rho_sigma[d][s]
        } else {
            0.0
        };
        eps * eps + stab
    });
    let gp = grad(mesh, p, BoundaryTreatment::Natural);
    let mut flux = FaceField::from_fn(mesh, |d, s| {
        let r = rho_sigma[d][s];
        r * u[d][s] - eta_sigma[d][s] * dt * r * gp[d][s]
    });
    flux.zero_exterior(mesh);
    let rhs = (0..mesh.num_cells())
        .map(|k| mesh.volume(k) * (1.0 - rho[k]) + dt * oriented_sum(mesh, &flux, k))
        .collect();
    assemble(mesh, &weights, rhs)
}

/// `−ε² Δφ = 1 − ρ`, the electrostatic equation on its own.
pub fn assemble_poisson(mesh: &Mesh, rho: &CellField, eps: f64) -> Result<LinearSystem> {
    let weights = FaceField::from_fn(mesh, |_, _| eps * eps);
    let rhs = (0..mesh.num_cells())
        .map(|k| mesh.volume(k) * (1.0 - rho[k]))
        .collect();
    assemble(mesh, &weights, rhs)
}

/// Potential equation of the limit scheme: `−η δt² Δφ = δt div u`.
pub fn assemble_limit_system(mesh: &Mesh, u: &FaceField, eta: f64, dt: f64) -> Result<LinearSystem> {
    let weights = FaceField::from_fn(mesh, |d, s| {
        if mesh.face(d, s).is_interior() {
            eta * dt * dt
        } else {
            0.0
        }
    });
    let rhs = (0..mesh.num_cells())
        .map(|k| dt * oriented_sum(mesh, u, k))
        .collect();
    assemble(mesh, &weights, rhs)
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    /// Relative residual after every iteration, starting with the initial guess.
    pub history: Vec<f64>,
    /// `|Σ b_K| / |Ω|` before projection (singular systems only).
    pub compatibility_defect: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub phi: CellField,
    /// Values of the Dirichlet unknowns, aligned with `dirichlet_faces`.
    pub face_values: Vec<f64>,
    pub report: SolveReport,
}

/// Largest compatibility defect tolerated before the projection.
const COMPATIBILITY_LIMIT: f64 = 1e-8;

/// Solves the system with PCG, warm-started from `guess` when given.
///
/// Singular systems get their right-hand side projected to zero sum; the
/// returned potential then has zero volume-weighted mean.
pub fn solve(
    mesh: &Mesh,
    system: &LinearSystem,
    config: &SolverConfig,
    guess: Option<&[f64]>,
) -> Result<Solution> {
    config.validate()?;
    let n = system.num_unknowns();
    let mut b = system.rhs.clone();
    let mut defect = 0.0;
    if system.singular {
        let cells = &mut b[..system.num_cells];
        let sum: f64 = cells.iter().sum();
        defect = sum.abs() / mesh.measure();
        if defect > COMPATIBILITY_LIMIT {
            return Err(Error::IncompatibleRhs { defect });
        }
        let shift = sum / cells.len() as f64;
        cells.iter_mut().for_each(|v| *v -= shift);
    }

    let mut x = vec![0.0; n];
    if let Some(g) = guess {
        x[..g.len().min(n)].copy_from_slice(&g[..g.len().min(n)]);
    }
    for (i, &(d, s)) in system.dirichlet_faces.iter().enumerate() {
        x[system.num_cells + i] = mesh.dirichlet_value(d, s).unwrap_or_default();
    }

    let bnorm = norm(&b);
    let mut report = SolveReport {
        compatibility_defect: defect,
        ..SolveReport::default()
    };
    // A right-hand side at roundoff level of the natural scale |K| carries
    // no information; Krylov iterations on it stagnate in the null space.
    let floor = 64.0 * f64::EPSILON * norm(mesh.volumes());
    if bnorm <= floor {
        x.iter_mut().for_each(|v| *v = 0.0);
        report.history.push(0.0);
    } else {
        pcg(system, config, &b, bnorm, &mut x, &mut report)?;
    }

    let mut phi = CellField(x[..system.num_cells].to_vec());
    if system.singular {
        let mean = phi.integral(mesh) / mesh.measure();
        phi.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(Solution {
        phi,
        face_values: x[system.num_cells..].to_vec(),
        report,
    })
}

fn pcg(
    system: &LinearSystem,
    config: &SolverConfig,
    b: &[f64],
    bnorm: f64,
    x: &mut [f64],
    report: &mut SolveReport,
) -> Result<()> {
    let a = &system.matrix;
    let n = a.n;
    let max_iter = config.max_iter.unwrap_or(10 * n).max(1);
    let inv_diag: Vec<f64> = match config.preconditioner {
        Preconditioner::Diagonal => a
            .diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
        Preconditioner::None => vec![1.0; n],
    };

    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rel = norm(&r) / bnorm;
    report.history.push(rel);
    if rel <= config.tol {
        report.residual = rel;
        return Ok(());
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            report.iterations = it;
            report.residual = rel;
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: rel,
            });
        }
        let step = rz / pq;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * q[i];
        }
        rel = norm(&r) / bnorm;
        report.history.push(rel);
        report.iterations = it;
        report.residual = rel;
        if rel <= config.tol {
            return Ok(());
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: rel,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Row-wise M-matrix diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MMatrixReport {
    pub positive_diagonal: bool,
    pub nonpositive_offdiagonal: bool,
    pub diagonally_dominant: bool,
    /// Rows where dominance is strict.
    pub strict_rows: usize,
    /// First rows failing any of the checks.
    pub violations: Vec<usize>,
}

impl MMatrixReport {
    pub fn is_m_matrix(&self) -> bool {
        self.positive_diagonal && self.nonpositive_offdiagonal && self.diagonally_dominant
    }
}

pub fn is_m_matrix(system: &LinearSystem) -> MMatrixReport {
    let a = &system.matrix;
    let mut report = MMatrixReport {
        positive_diagonal: true,
        nonpositive_offdiagonal: true,
        diagonally_dominant: true,
        ..Default::default()
    };
    for i in 0..a.n {
        let mut diag = 0.0;
        let mut off = 0.0;
        let mut ok = true;
        for (j, v) in a.row(i) {
            if i == j {
                diag += v;
            } else {
                if v > 0.0 {
                    report.nonpositive_offdiagonal = false;
                    ok = false;
                }
                off += v.abs();
            }
        }
        if !(diag > 0.0) {
            report.positive_diagonal = false;
            ok = false;
        }
        if diag < off * (1.0 - 1e-12) {
            report.diagonally_dominant = false;
            ok = false;
        } else if diag > off * (1.0 + 1e-12) {
            report.strict_rows += 1;
        }
        if !ok && report.violations.len() < 16 {
            report.violations.push(i);
        }
    }
    report
}
