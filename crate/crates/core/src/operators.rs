//! Discrete gradient, divergence, Laplacian and the dual-mesh convection
//! operators of the staggered scheme.

use crate::fields::{CellField, FaceField};
use crate::mesh::Mesh;

/// How exterior faces are treated by [`grad`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTreatment {
    /// Zero gradient on every exterior face (pressure, densities).
    Natural,
    /// Use the mesh's boundary tags: zero gradient on no-flux sides, the
    /// prescribed value on Dirichlet sides.
    Potential,
}

/// `(∂^{(i)}_E q)_σ = |σ|/|D_σ| (q_{K_σ} − q_K) e^{(i)}·ν_{σ,K}`, stored w.r.t. `+e_i`.
pub fn grad(mesh: &Mesh, q: &[f64], bc: BoundaryTreatment) -> FaceField {
    FaceField::from_fn(mesh, |d, s| {
        let f = mesh.face(d, s);
        let scale = f.area / f.dual;
        match (f.lower, f.upper) {
            (Some(k), Some(l)) => scale * (q[l] - q[k]),
            (lower, upper) => {
                let boundary_value = match bc {
                    BoundaryTreatment::Natural => None,
                    BoundaryTreatment::Potential => mesh.dirichlet_value(d, s),
                };
                match (boundary_value, lower, upper) {
                    (None, _, _) => 0.0,
                    (Some(qd), Some(k), None) => scale * (qd - q[k]),
                    (Some(qd), None, Some(l)) => scale * (q[l] - qd),
                    _ => unreachable!("face without cells"),
                }
            }
        }
    })
}

/// `Σ_{σ∈E(K)} |σ| v_{σ,K}` for globally oriented face values `v`.
#[inline]
pub fn oriented_sum(mesh: &Mesh, v: &FaceField, k: usize) -> f64 {
    let mut acc = 0.0;
    for d in 0..mesh.dim() {
        let [lo, hi] = mesh.cell_faces(k, d);
        acc += mesh.face(d, hi).area * v[d][hi] - mesh.face(d, lo).area * v[d][lo];
    }
    acc
}

/// `Σ_{σ∈E(K)} F_{σ,K}` for fluxes that already carry the `|σ|` factor.
#[inline]
pub fn net_outflow(mesh: &Mesh, flux: &FaceField, k: usize) -> f64 {
    let mut acc = 0.0;
    for d in 0..mesh.dim() {
        let [lo, hi] = mesh.cell_faces(k, d);
        acc += flux[d][hi] - flux[d][lo];
    }
    acc
}

/// `(div_M v)_K = 1/|K| Σ_{σ∈E(K)} |σ| v_{σ,K}`.
pub fn div(mesh: &Mesh, v: &FaceField) -> CellField {
    CellField(
        (0..mesh.num_cells())
            .map(|k| oriented_sum(mesh, v, k) / mesh.volume(k))
            .collect(),
    )
}

pub fn laplacian(mesh: &Mesh, q: &[f64], bc: BoundaryTreatment) -> CellField {
    div(mesh, &grad(mesh, q, bc))
}

/// Mass fluxes across the edges of every dual cell, aligned with
/// [`Mesh::dual_edges`].
#[derive(Clone, Debug, PartialEq)]
pub struct DualFluxes(pub Vec<Vec<f64>>);

impl DualFluxes {
    /// Fluxes out of `D_σ`, one per entry of `mesh.dual_edges(dir, σ)`.
    pub fn of_face<'a>(&'a self, mesh: &Mesh, dir: usize, sigma: usize) -> &'a [f64] {
        let off = mesh.dual_edge_offsets(dir);
        &self.0[dir][off[sigma]..off[sigma + 1]]
    }
}

/// Dual fluxes as half-sums of the primal fluxes composing each dual edge.
///
/// `primal[dir][σ]` is the flux through `σ` in the `+e_dir` direction,
/// including the `|σ|` factor.
pub fn dual_fluxes(mesh: &Mesh, primal: &FaceField) -> DualFluxes {
    DualFluxes(
        (0..mesh.dim())
            .map(|d| {
                let offsets = mesh.dual_edge_offsets(d);
                let mut out = vec![0.0; *offsets.last().unwrap_or(&0)];
                for s in 0..mesh.num_faces(d) {
                    for (e, edge) in mesh.dual_edges(d, s).iter().enumerate() {
                        out[offsets[s] + e] = match edge.parts {
                            Some([(da, a), (db, b)]) => {
                                edge.sign * 0.5 * (primal[da][a] + primal[db][b])
                            }
                            None => 0.0,
                        };
                    }
                }
                out
            })
            .collect(),
    )
}

/// `Σ_{ε∈Ẽ(D_σ)} F_{ε,σ} u_{ε,up}` on interior faces, zero elsewhere.
///
/// The upwind value is `u_σ` for outgoing fluxes and `u_σ'` otherwise.
pub fn upwind_convect(mesh: &Mesh, dual: &DualFluxes, u: &FaceField) -> FaceField {
    FaceField::from_fn(mesh, |d, s| {
        let edges = mesh.dual_edges(d, s);
        let fluxes = dual.of_face(mesh, d, s);
        edges
            .iter()
            .zip(fluxes)
            .map(|(edge, &flux)| {
                if flux >= 0.0 {
                    flux * u[d][s]
                } else {
                    flux * edge.neighbor.map_or(0.0, |n| u[d][n])
                }
            })
            .sum()
    })
}

/// Net dual flux `Σ_ε F_{ε,σ}` per face.
pub fn dual_net_outflow(mesh: &Mesh, dual: &DualFluxes) -> FaceField {
    FaceField::from_fn(mesh, |d, s| dual.of_face(mesh, d, s).iter().sum())
}
