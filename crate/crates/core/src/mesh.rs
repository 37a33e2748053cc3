//! Rectilinear MAC grids in one and two space dimensions.
//!
//! Scalars live on primal cells, the `i`-th velocity component lives on the
//! faces normal to `e_i`. Every face `σ` owns a dual cell `D_σ` made of the
//! two half cells on either side of it (one half cell for exterior faces).
//!
//! Faces store their data with respect to the global orientation `+e_i`:
//! `lower` is the cell on the `-e_i` side, `upper` the one on the `+e_i` side.
//! For a cell `K`, `v_{σ,K} = v_σ · (e_i · ν_{σ,K})` is `+v_σ` on its upper
//! face and `-v_σ` on its lower face.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary tag of one side of one axis.
///
/// `Dirichlet` carries the prescribed value of the electrostatic potential on
/// that side. Velocities vanish on every non-periodic side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    NoFlux,
    Dirichlet(f64),
}

impl Boundary {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Boundary::Periodic)
    }
}

/// Geometry and boundary description of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cell-edge coordinates per axis, strictly increasing.
    pub axes: Vec<Vec<f64>>,
    /// `[lower side, upper side]` tag per axis.
    pub boundary: Vec<[Boundary; 2]>,
}

impl GridSpec {
    pub fn uniform_axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect()
    }

    pub fn uniform_1d(n: usize, lo: f64, hi: f64, boundary: [Boundary; 2]) -> Self {
        Self {
            axes: vec![Self::uniform_axis(n, lo, hi)],
            boundary: vec![boundary],
        }
    }

    pub fn uniform_2d(
        n: [usize; 2],
        x: [f64; 2],
        y: [f64; 2],
        boundary: [[Boundary; 2]; 2],
    ) -> Self {
        Self {
            axes: vec![
                Self::uniform_axis(n[0], x[0], x[1]),
                Self::uniform_axis(n[1], y[0], y[1]),
            ],
            boundary: boundary.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.axes.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if self.boundary.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} boundary entries for {dim} axes",
                self.boundary.len()
            )));
        }
        for (axis, edges) in self.axes.iter().enumerate() {
            if edges.len() < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} needs at least 2 cells"
                )));
            }
            if edges.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has non-finite coordinates"
                )));
            }
            if edges.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} coordinates are not strictly increasing"
                )));
            }
            let [lo, hi] = self.boundary[axis];
            if lo.is_periodic() != hi.is_periodic() {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: periodic on one side only"
                )));
            }
        }
        Ok(())
    }
}

/// Which side of the domain an exterior face sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Debug)]
pub struct Face {
    /// Cell on the `-e_i` side.
    pub lower: Option<usize>,
    /// Cell on the `+e_i` side.
    pub upper: Option<usize>,
    /// `|σ|`; equal to 1 in one dimension.
    pub area: f64,
    /// `|D_σ|`.
    pub dual: f64,
    /// `|D_{σ,lower}|`, zero when there is no lower cell.
    pub half_lower: f64,
    /// `|D_{σ,upper}|`, zero when there is no upper cell.
    pub half_upper: f64,
    pub center: [f64; 2],
    /// Set for exterior faces only.
    pub side: Option<Side>,
}

impl Face {
    pub fn is_interior(&self) -> bool {
        self.lower.is_some() && self.upper.is_some()
    }

    /// The cell on the other side of the face from `cell`.
    pub fn other(&self, cell: usize) -> Option<usize> {
        if self.lower == Some(cell) {
            self.upper
        } else {
            self.lower
        }
    }
}

/// One edge `ε` of a dual cell `D_σ`.
///
/// Its mass flux, outward from `D_σ`, is `sign · ½ (F_a + F_b)` where
/// `F_a, F_b` are the globally oriented primal fluxes of the two faces listed
/// in `parts`. Edges lying on the domain boundary have no parts and carry no
/// flux.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualEdge {
    /// `(direction, face)` pairs of the primal faces whose halves make up `ε`.
    pub parts: Option<[(usize, usize); 2]>,
    /// `+1` when the outward normal of `ε` (seen from `D_σ`) is `+e_j`.
    pub sign: f64,
    /// Face `σ'` (same direction as `σ`) with `ε = D_σ | D_σ'`.
    pub neighbor: Option<usize>,
}

impl DualEdge {
    pub fn on_boundary(&self) -> bool {
        self.parts.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    n: [usize; 2],
    edges: Vec<Vec<f64>>,
    boundary: Vec<[Boundary; 2]>,
    volume: Vec<f64>,
    center: Vec<[f64; 2]>,
    perimeter: Vec<f64>,
    faces: Vec<Vec<Face>>,
    /// `cell_faces[k][dir] = [lower face, upper face]`.
    cell_faces: Vec<[[usize; 2]; 2]>,
    /// `1/Δ_σ` on interior faces, zero elsewhere.
    inv_delta: Vec<Vec<f64>>,
    dual_edges: Vec<Vec<DualEdge>>,
    dual_offsets: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim();
        let mut edges = spec.axes.clone();
        if dim == 1 {
            edges.push(vec![0.0, 1.0]);
        }
        let n = [edges[0].len() - 1, edges[1].len() - 1];
        let mut boundary = spec.boundary.clone();
        if dim == 1 {
            // Degenerate transverse axis: never queried for faces.
            boundary.push([Boundary::NoFlux, Boundary::NoFlux]);
        }

        let width = |axis: usize, i: usize| edges[axis][i + 1] - edges[axis][i];
        let mid = |axis: usize, i: usize| 0.5 * (edges[axis][i + 1] + edges[axis][i]);

        let ncells = n[0] * n[1];
        let mut volume = Vec::with_capacity(ncells);
        let mut center = Vec::with_capacity(ncells);
        for iy in 0..n[1] {
            for ix in 0..n[0] {
                let v = if dim == 1 {
                    width(0, ix)
                } else {
                    width(0, ix) * width(1, iy)
                };
                volume.push(v);
                center.push([mid(0, ix), if dim == 1 { 0.0 } else { mid(1, iy) }]);
            }
        }

        let periodic = [boundary[0][0].is_periodic(), boundary[1][0].is_periodic()];
        let nf = |axis: usize| if periodic[axis] { n[axis] } else { n[axis] + 1 };

        let cell = |ix: usize, iy: usize| ix + n[0] * iy;
        let mut faces: Vec<Vec<Face>> = Vec::with_capacity(dim);
        let mut cell_faces = vec![[[usize::MAX; 2]; 2]; ncells];

        for dir in 0..dim {
            let other = 1 - dir;
            let (na, nb) = (nf(dir), n[other]);
            let mut list = Vec::with_capacity(na * nb);
            // Face numbering: along `dir` fastest for x-faces, keep the
            // natural (ix, iy) layout for y-faces.
            let face_id = |a: usize, b: usize| -> usize {
                if dir == 0 {
                    a + na * b
                } else {
                    b + n[0] * a
                }
            };
            let mut slots: Vec<Option<Face>> = vec![None; na * nb];
            for b in 0..nb {
                for a in 0..na {
                    let cell_at = |pos: usize| -> usize {
                        if dir == 0 {
                            cell(pos, b)
                        } else {
                            cell(b, pos)
                        }
                    };
                    let lower = if a > 0 {
                        Some(cell_at(a - 1))
                    } else if periodic[dir] {
                        Some(cell_at(n[dir] - 1))
                    } else {
                        None
                    };
                    let upper = if a < n[dir] { Some(cell_at(a)) } else { None };
                    let side = match (lower, upper) {
                        (None, _) => Some(Side::Lower),
                        (_, None) => Some(Side::Upper),
                        _ => None,
                    };
                    let area = if dim == 1 { 1.0 } else { width(other, b) };
                    let half_lower = lower.map_or(0.0, |k| 0.5 * volume[k]);
                    let half_upper = upper.map_or(0.0, |k| 0.5 * volume[k]);
                    let coord = edges[dir][a];
                    let tangential = if dim == 1 { 0.0 } else { mid(other, b) };
                    let center = if dir == 0 {
                        [coord, tangential]
                    } else {
                        [tangential, coord]
                    };
                    let id = face_id(a, b);
                    if let Some(k) = lower {
                        cell_faces[k][dir][1] = id;
                    }
                    if let Some(k) = upper {
                        cell_faces[k][dir][0] = id;
                    }
                    slots[id] = Some(Face {
                        lower,
                        upper,
                        area,
                        dual: half_lower + half_upper,
                        half_lower,
                        half_upper,
                        center,
                        side,
                    });
                }
            }
            list.extend(slots.into_iter().map(|f| f.expect("face slot filled")));
            faces.push(list);
        }

        let perimeter: Vec<f64> = (0..ncells)
            .map(|k| {
                (0..dim)
                    .map(|d| {
                        let [lo, hi] = cell_faces[k][d];
                        faces[d][lo].area + faces[d][hi].area
                    })
                    .sum()
            })
            .collect();

        let inv_delta = faces
            .iter()
            .map(|list| {
                list.iter()
                    .map(|f| match (f.lower, f.upper) {
                        (Some(k), Some(l)) => {
                            0.5 * (perimeter[k] / volume[k] + perimeter[l] / volume[l])
                        }
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();

        let mut mesh = Mesh {
            dim,
            n,
            edges,
            boundary,
            volume,
            center,
            perimeter,
            faces,
            cell_faces,
            inv_delta,
            dual_edges: Vec::new(),
            dual_offsets: Vec::new(),
        };
        mesh.build_dual_edges();
        Ok(mesh)
    }

    fn build_dual_edges(&mut self) {
        let mut all_edges = Vec::with_capacity(self.dim);
        let mut all_offsets = Vec::with_capacity(self.dim);
        for dir in 0..self.dim {
            let mut edges = Vec::new();
            let mut offsets = Vec::with_capacity(self.faces[dir].len() + 1);
            offsets.push(0);
            for (sigma, face) in self.faces[dir].iter().enumerate() {
                if let (Some(k), Some(l)) = (face.lower, face.upper) {
                    edges.extend(self.compute_dual_edges(dir, sigma, k, l));
                }
                offsets.push(edges.len());
            }
            all_edges.push(edges);
            all_offsets.push(offsets);
        }
        self.dual_edges = all_edges;
        self.dual_offsets = all_offsets;
    }

    fn compute_dual_edges(&self, dir: usize, sigma: usize, k: usize, l: usize) -> Vec<DualEdge> {
        let mut out = Vec::with_capacity(2 * self.dim);
        // Normal edges through the centers of L (upper) and K (lower).
        let up = self.cell_faces[l][dir][1];
        out.push(DualEdge {
            parts: Some([(dir, sigma), (dir, up)]),
            sign: 1.0,
            neighbor: Some(up),
        });
        let down = self.cell_faces[k][dir][0];
        out.push(DualEdge {
            parts: Some([(dir, down), (dir, sigma)]),
            sign: -1.0,
            neighbor: Some(down),
        });
        if self.dim == 2 {
            let t = 1 - dir;
            for (slot, sign) in [(1usize, 1.0), (0usize, -1.0)] {
                let fk = self.cell_faces[k][t][slot];
                let fl = self.cell_faces[l][t][slot];
                let tface = &self.faces[t][fk];
                let across = if slot == 1 { tface.upper } else { tface.lower };
                match across {
                    Some(k2) => out.push(DualEdge {
                        parts: Some([(t, fk), (t, fl)]),
                        sign,
                        neighbor: Some(self.cell_faces[k2][dir][1]),
                    }),
                    None => out.push(DualEdge {
                        parts: None,
                        sign,
                        neighbor: None,
                    }),
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis; the second entry is 1 in one dimension.
    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn num_cells(&self) -> usize {
        self.volume.len()
    }

    pub fn num_faces(&self, dir: usize) -> usize {
        self.faces[dir].len()
    }

    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        ix + self.n[0] * iy
    }

    pub fn volume(&self, k: usize) -> f64 {
        self.volume[k]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        self.center[k]
    }

    /// `|∂K| = Σ_{σ∈E(K)} |σ|`.
    pub fn perimeter(&self, k: usize) -> f64 {
        self.perimeter[k]
    }

    pub fn faces(&self, dir: usize) -> &[Face] {
        &self.faces[dir]
    }

    pub fn face(&self, dir: usize, sigma: usize) -> &Face {
        &self.faces[dir][sigma]
    }

    /// `[lower face, upper face]` of cell `k` in direction `dir`.
    pub fn cell_faces(&self, k: usize, dir: usize) -> [usize; 2] {
        self.cell_faces[k][dir]
    }

    /// `1/Δ_σ = ½(|∂K|/|K| + |∂L|/|L|)` on interior faces.
    pub fn inv_delta(&self, dir: usize, sigma: usize) -> f64 {
        self.inv_delta[dir][sigma]
    }

    pub fn boundary(&self, axis: usize) -> [Boundary; 2] {
        self.boundary[axis]
    }

    pub fn edges(&self, axis: usize) -> &[f64] {
        &self.edges[axis]
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.boundary[axis][0].is_periodic()
    }

    /// Boundary tag of an exterior face, `None` for interior faces.
    pub fn face_boundary(&self, dir: usize, sigma: usize) -> Option<Boundary> {
        self.faces[dir][sigma].side.map(|s| match s {
            Side::Lower => self.boundary[dir][0],
            Side::Upper => self.boundary[dir][1],
        })
    }

    pub fn dirichlet_value(&self, dir: usize, sigma: usize) -> Option<f64> {
        match self.face_boundary(dir, sigma) {
            Some(Boundary::Dirichlet(v)) => Some(v),
            _ => None,
        }
    }

    pub fn has_dirichlet(&self) -> bool {
        self.boundary[..self.dim]
            .iter()
            .flatten()
            .any(|b| matches!(b, Boundary::Dirichlet(_)))
    }

    /// Dual edges of `D_σ`; empty for exterior faces.
    pub fn dual_edges(&self, dir: usize, sigma: usize) -> &[DualEdge] {
        let off = &self.dual_offsets[dir];
        &self.dual_edges[dir][off[sigma]..off[sigma + 1]]
    }

    /// All dual edges of one direction, laid out face by face.
    pub fn dual_edge_offsets(&self, dir: usize) -> &[usize] {
        &self.dual_offsets[dir]
    }

    pub fn measure(&self) -> f64 {
        self.volume.iter().sum()
    }

    /// Smallest cell width over all axes.
    pub fn h_min(&self) -> f64 {
        (0..self.dim)
            .flat_map(|a| self.edges[a].windows(2).map(|w| w[1] - w[0]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn interior_faces(&self, dir: usize) -> impl Iterator<Item = (usize, &Face)> + '_ {
        self.faces[dir]
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_interior())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn periodic_1d_uniform() {
        let m = Mesh::new(&GridSpec::uniform_1d(
            4,
            0.0,
            1.0,
            [Boundary::Periodic, Boundary::Periodic],
        ))
        .unwrap();
        assert_eq!(m.num_cells(), 4);
        assert_eq!(m.num_faces(0), 4);
        for k in 0..4 {
            assert!(close(m.volume(k), 0.25));
        }
        for f in m.faces(0) {
            assert!(f.is_interior());
            assert_eq!(f.area, 1.0);
            assert!(close(f.dual, 0.25));
        }
        // Face 0 wraps: lower cell is the last one.
        assert_eq!(m.face(0, 0).lower, Some(3));
        assert_eq!(m.face(0, 0).upper, Some(0));
    }

    #[test]
    fn noflux_2d_uniform() {
        let nf = [Boundary::NoFlux, Boundary::NoFlux];
        let m = Mesh::new(&GridSpec::uniform_2d([2, 2], [0.0, 1.0], [0.0, 1.0], [nf, nf])).unwrap();
        assert_eq!(m.num_cells(), 4);
        assert_eq!(m.num_faces(0), 6);
        assert_eq!(m.num_faces(1), 6);
        for k in 0..4 {
            assert!(close(m.volume(k), 0.25));
            assert!(close(m.perimeter(k), 2.0));
        }
        let interior: Vec<_> = m.interior_faces(0).collect();
        assert_eq!(interior.len(), 2);
        for (_, f) in interior {
            assert!(close(f.area, 0.5));
            assert!(close(f.dual, 0.25));
        }
    }

    #[test]
    fn nonuniform_1d_measures() {
        let spec = GridSpec {
            axes: vec![vec![0.0, 0.1, 0.4, 1.0]],
            boundary: vec![[Boundary::NoFlux, Boundary::NoFlux]],
        };
        let m = Mesh::new(&spec).unwrap();
        let vols: Vec<f64> = (0..3).map(|k| m.volume(k)).collect();
        for (v, e) in vols.iter().zip([0.1, 0.3, 0.6]) {
            assert!(close(*v, e));
        }
        let duals: Vec<f64> = m.interior_faces(0).map(|(_, f)| f.dual).collect();
        assert_eq!(duals.len(), 2);
        assert!(close(duals[0], 0.2));
        assert!(close(duals[1], 0.45));
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = GridSpec {
            axes: vec![vec![0.0, 0.5, 0.4, 1.0]],
            boundary: vec![[Boundary::NoFlux, Boundary::NoFlux]],
        };
        assert!(matches!(Mesh::new(&bad), Err(Error::InvalidGrid(_))));
        let mixed = GridSpec::uniform_1d(4, 0.0, 1.0, [Boundary::Periodic, Boundary::NoFlux]);
        assert!(matches!(Mesh::new(&mixed), Err(Error::InvalidGrid(_))));
        let tiny = GridSpec::uniform_1d(1, 0.0, 1.0, [Boundary::NoFlux, Boundary::NoFlux]);
        assert!(Mesh::new(&tiny).is_err());
    }

    #[test]
    fn dual_edges_1d() {
        let m = Mesh::new(&GridSpec::uniform_1d(
            4,
            0.0,
            1.0,
            [Boundary::Periodic, Boundary::Periodic],
        ))
        .unwrap();
        // Face 2 sits between cells 1 and 2.
        let e = m.dual_edges(0, 2);
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].parts, Some([(0, 2), (0, 3)]));
        assert_eq!(e[0].sign, 1.0);
        assert_eq!(e[0].neighbor, Some(3));
        assert_eq!(e[1].parts, Some([(0, 1), (0, 2)]));
        assert_eq!(e[1].sign, -1.0);
        assert_eq!(e[1].neighbor, Some(1));
    }

    #[test]
    fn dual_edges_2d_with_wall() {
        let nf = [Boundary::NoFlux, Boundary::NoFlux];
        let m = Mesh::new(&GridSpec::uniform_2d([3, 2], [0.0, 1.0], [0.0, 1.0], [nf, nf])).unwrap();
        // x-face between cells (0,0) and (1,0): index 1 in row 0.
        let sigma = 1;
        let f = m.face(0, sigma);
        assert_eq!((f.lower, f.upper), (Some(0), Some(1)));
        let e = m.dual_edges(0, sigma);
        assert_eq!(e.len(), 4);
        // North edge: halves of the north faces of cells 0 and 1.
        let north = e[2];
        let [(d0, a), (d1, b)] = north.parts.unwrap();
        assert_eq!((d0, d1), (1, 1));
        assert_eq!(a, m.cell_faces(0, 1)[1]);
        assert_eq!(b, m.cell_faces(1, 1)[1]);
        assert_eq!(north.neighbor, Some(m.cell_faces(m.cell_index(0, 1), 0)[1]));
        // South edge lies on the wall.
        assert!(e[3].on_boundary());
        assert_eq!(e[3].neighbor, None);
    }
}
