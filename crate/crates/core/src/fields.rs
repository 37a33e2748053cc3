//! Grid functions and the barotropic closures built on them.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// One value per primal cell.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CellField(pub Vec<f64>);

impl CellField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self(vec![0.0; mesh.num_cells()])
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Self(vec![value; mesh.num_cells()])
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self((0..mesh.num_cells()).map(|k| f(mesh.center(k))).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ_K |K| q_K`.
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        self.0.iter().zip(mesh.volumes()).map(|(q, v)| q * v).sum()
    }
}

impl Deref for CellField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for CellField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// One value per face, for every direction: `field[dir][σ]`.
///
/// Values are stored with respect to `+e_dir`. Exterior entries are kept so
/// that boundary data (Dirichlet gradients, boundary fluxes) has a home; for
/// zero-trace fields they are exactly zero.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FaceField(pub Vec<Vec<f64>>);

impl FaceField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self((0..mesh.dim()).map(|d| vec![0.0; mesh.num_faces(d)]).collect())
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(usize, usize) -> f64) -> Self {
        Self(
            (0..mesh.dim())
                .map(|d| (0..mesh.num_faces(d)).map(|s| f(d, s)).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Forces exterior entries to zero (the `H_{E,0}` trace condition).
    pub fn zero_exterior(&mut self, mesh: &Mesh) {
        for (d, comp) in self.0.iter_mut().enumerate() {
            for (s, v) in comp.iter_mut().enumerate() {
                if !mesh.face(d, s).is_interior() {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn has_zero_trace(&self, mesh: &Mesh) -> bool {
        self.0.iter().enumerate().all(|(d, comp)| {
            comp.iter()
                .enumerate()
                .all(|(s, v)| mesh.face(d, s).is_interior() || *v == 0.0)
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0, |m, v: &f64| m.max(v.abs()))
    }

    /// `Σ_i Σ_{σ interior} |D_σ| a_σ b_σ`.
    pub fn dual_inner(&self, other: &FaceField, mesh: &Mesh) -> f64 {
        let mut acc = 0.0;
        for d in 0..mesh.dim() {
            for (s, f) in mesh.interior_faces(d) {
                acc += f.dual * self[d][s] * other[d][s];
            }
        }
        acc
    }
}

impl Index<usize> for FaceField {
    type Output = Vec<f64>;
    fn index(&self, dir: usize) -> &Vec<f64> {
        &self.0[dir]
    }
}

impl IndexMut<usize> for FaceField {
    fn index_mut(&mut self, dir: usize) -> &mut Vec<f64> {
        &mut self.0[dir]
    }
}

/// Unknowns of the staggered schemes at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub rho: CellField,
    pub u: FaceField,
    pub phi: CellField,
    pub t: f64,
    pub eps: f64,
    pub gamma: f64,
}

impl State {
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        check_positive(&self.rho)?;
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Debye length must lie in (0, 1], got {}",
                self.eps
            )));
        }
        if !(self.gamma >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "adiabatic exponent must be >= 1, got {}",
                self.gamma
            )));
        }
        if self.rho.len() != mesh.num_cells() || self.phi.len() != mesh.num_cells() {
            return Err(Error::InvalidConfig("cell field size mismatch".into()));
        }
        if self.u.dim() != mesh.dim() {
            return Err(Error::InvalidConfig("velocity dimension mismatch".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_positive(rho: &[f64]) -> Result<()> {
    match rho.iter().position(|&r| !(r > 0.0)) {
        Some(cell) => Err(Error::NonPositiveDensity {
            cell,
            value: rho[cell],
        }),
        None => Ok(()),
    }
}

/// `p(ρ) = ρ^γ`.
#[inline]
pub fn pressure_of(rho: f64, gamma: f64) -> f64 {
    rho.powf(gamma)
}

/// Helmholtz function `ψ_γ`.
#[inline]
pub fn helmholtz_of(rho: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        rho * rho.ln()
    } else {
        rho.powf(gamma) / (gamma - 1.0)
    }
}

#[inline]
pub fn helmholtz_prime_of(rho: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        rho.ln() + 1.0
    } else {
        gamma * rho.powf(gamma - 1.0) / (gamma - 1.0)
    }
}

#[inline]
pub fn helmholtz_second_of(rho: f64, gamma: f64) -> f64 {
    gamma * rho.powf(gamma - 2.0)
}

/// Relative internal energy `Π_γ(ρ) = ψ_γ(ρ) − ψ_γ(1) − ψ'_γ(1)(ρ − 1)`.
///
/// Evaluated through `ln_1p`/`exp_m1` so the result keeps its relative
/// accuracy for `ρ` close to 1, where it is quadratically small.
#[inline]
pub fn relative_internal_energy_of(rho: f64, gamma: f64) -> f64 {
    let x = rho - 1.0;
    let l = x.ln_1p();
    let v = if gamma == 1.0 {
        rho * l - x
    } else {
        ((gamma * l).exp_m1() - gamma * x) / (gamma - 1.0)
    };
    v.max(0.0)
}

/// Interface density solving `ρ_K^γ − ρ_L^γ = ρ_σ (ψ'_γ(ρ_K) − ψ'_γ(ρ_L))`.
///
/// Logarithmic mean for `γ = 1`. Nearly equal states fall back to the
/// arithmetic mean, which agrees with the exact value to second order.
pub fn interface_density_of(a: f64, b: f64, gamma: f64) -> f64 {
    if a == b || (a - b).abs() < 1e-12 * a.max(b) {
        return 0.5 * (a + b);
    }
    let lt = ((b - a) / a).ln_1p(); // ln(b/a)
    let v = if gamma == 1.0 {
        (b - a) / lt
    } else {
        a * (gamma - 1.0) / gamma * (gamma * lt).exp_m1() / ((gamma - 1.0) * lt).exp_m1()
    };
    v.clamp(a.min(b), a.max(b))
}

pub fn pressure(rho: &CellField, gamma: f64) -> Result<CellField> {
    check_positive(rho)?;
    Ok(CellField(rho.iter().map(|&r| pressure_of(r, gamma)).collect()))
}

pub fn helmholtz(rho: &CellField, gamma: f64) -> Result<CellField> {
    check_positive(rho)?;
    Ok(CellField(rho.iter().map(|&r| helmholtz_of(r, gamma)).collect()))
}

pub fn helmholtz_prime(rho: &CellField, gamma: f64) -> Result<CellField> {
    check_positive(rho)?;
    Ok(CellField(
        rho.iter().map(|&r| helmholtz_prime_of(r, gamma)).collect(),
    ))
}

pub fn relative_internal_energy(rho: &CellField, gamma: f64) -> Result<CellField> {
    check_positive(rho)?;
    Ok(CellField(
        rho.iter()
            .map(|&r| relative_internal_energy_of(r, gamma))
            .collect(),
    ))
}

/// `ρ_σ` on every face. Exterior faces copy the adjacent cell value.
pub fn interface_density(mesh: &Mesh, rho: &CellField, gamma: f64) -> Result<FaceField> {
    check_positive(rho)?;
    Ok(FaceField::from_fn(mesh, |d, s| {
        let f = mesh.face(d, s);
        match (f.lower, f.upper) {
            (Some(k), Some(l)) => interface_density_of(rho[k], rho[l], gamma),
            (Some(k), None) | (None, Some(k)) => rho[k],
            (None, None) => unreachable!("face without cells"),
        }
    }))
}

/// Dual averages `|D_σ| ρ_{D_σ} = |D_{σ,K}| ρ_K + |D_{σ,L}| ρ_L`.
pub fn dual_average(mesh: &Mesh, rho: &CellField) -> FaceField {
    FaceField::from_fn(mesh, |d, s| {
        let f = mesh.face(d, s);
        let lo = f.lower.map_or(0.0, |k| f.half_lower * rho[k]);
        let hi = f.upper.map_or(0.0, |l| f.half_upper * rho[l]);
        (lo + hi) / f.dual
    })
}
