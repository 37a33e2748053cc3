use epmac_core::elliptic::{assemble_potential_system, is_m_matrix};
use epmac_core::fields::{
    dual_average, helmholtz_prime_of, interface_density, interface_density_of, pressure, relative_internal_energy_of,
    CellField, FaceField,
};
use epmac_core::mesh::{Boundary, GridSpec, Mesh};
use epmac_core::operators::{div, dual_fluxes, grad, laplacian, net_outflow, BoundaryTreatment};
use epmac_core::{ap, verify};
use proptest::prelude::*;

const P: [Boundary; 2] = [Boundary::Periodic, Boundary::Periodic];
const NF: [Boundary; 2] = [Boundary::NoFlux, Boundary::NoFlux];

/// Strictly increasing node list from positive widths.
fn nodes(widths: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0];
    for w in widths {
        x.push(x.last().unwrap() + w);
    }
    x
}

fn bc() -> impl Strategy<Value = [Boundary; 2]> {
    prop_oneof![Just(P), Just(NF), Just([Boundary::Dirichlet(0.0), Boundary::NoFlux])]
}

/// Small nonuniform 1D or 2D meshes with mixed boundary kinds.
fn mesh() -> impl Strategy<Value = Mesh> {
    let axis = prop::collection::vec(0.05f64..1.0, 2..7);
    prop_oneof![
        (axis.clone(), bc()).prop_map(|(w, b)| Mesh::new(&GridSpec { axes: vec![nodes(&w)], boundary: vec![b] }).unwrap()),
        (axis.clone(), axis, bc(), bc()).prop_map(|(wx, wy, bx, by)| {
            Mesh::new(&GridSpec {
                axes: vec![nodes(&wx), nodes(&wy)],
                boundary: vec![bx, by],
            })
            .unwrap()
        }),
    ]
}

fn cells(mesh: &Mesh, seed: u64, lo: f64, hi: f64) -> CellField {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    verify::random_cells(&mut rng, mesh, lo, hi)
}

fn faces(mesh: &Mesh, seed: u64, lo: f64, hi: f64) -> FaceField {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    verify::random_faces(&mut rng, mesh, lo, hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn duality_holds_on_nonuniform_meshes(m in mesh(), seed in any::<u64>()) {
        let q = cells(&m, seed, -1.0, 1.0);
        let v = faces(&m, seed ^ 1, -1.0, 1.0);
        let (r, scale) = verify::duality_residual(&m, &q, &v, &div(&m, &v));
        prop_assert!(r <= 1e-12 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn interface_density_solves_its_defining_identity(a in 1e-3f64..1e3, b in 1e-3f64..1e3, gamma in 1.0f64..3.0) {
        let s = interface_density_of(a, b, gamma);
        prop_assert!(s >= a.min(b) && s <= a.max(b));
        let r = a.powf(gamma) - b.powf(gamma) - s * (helmholtz_prime_of(a, gamma) - helmholtz_prime_of(b, gamma));
        prop_assert!(r.abs() <= 1e-12 * a.max(b).powf(gamma), "{r:e}");
    }

    #[test]
    fn relative_internal_energy_is_nonnegative(rho in 1e-6f64..1e3, gamma in 1.0f64..3.0) {
        prop_assert!(relative_internal_energy_of(rho, gamma) >= 0.0);
    }

    #[test]
    fn net_outflows_telescope(m in mesh(), seed in any::<u64>()) {
        let flux = faces(&m, seed, -1.0, 1.0);
        let total: f64 = (0..m.num_cells()).map(|k| net_outflow(&m, &flux, k)).sum();
        let scale: f64 = flux.0.iter().flatten().map(|f| f.abs()).sum();
        prop_assert!(total.abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn dual_fluxes_are_antisymmetric(m in mesh(), seed in any::<u64>()) {
        let flux = faces(&m, seed, -1.0, 1.0);
        let dual = dual_fluxes(&m, &flux);
        for d in 0..m.dim() {
            for (s, _) in m.interior_faces(d) {
                let edges = m.dual_edges(d, s);
                for (e, &f) in edges.iter().zip(dual.of_face(&m, d, s)) {
                    // Edges towards a boundary face close a half dual cell
                    // with no counterpart.
                    if let Some(nb) = e.neighbor.filter(|&nb| m.face(d, nb).is_interior()) {
                        let back = m.dual_edges(d, nb)
                            .iter()
                            .zip(dual.of_face(&m, d, nb))
                            .find(|(o, _)| o.neighbor == Some(s) && o.parts == e.parts)
                            .map(|(_, &g)| g);
                        prop_assert!(back.is_some());
                        let g = back.unwrap();
                        prop_assert!((f + g).abs() <= 1e-14 * (1.0 + f.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn laplacian_is_negative_semidefinite(m in mesh(), seed in any::<u64>()) {
        let q = cells(&m, seed, -1.0, 1.0);
        let lap = laplacian(&m, &q, BoundaryTreatment::Potential);
        let quad: f64 = (0..m.num_cells()).map(|k| m.volume(k) * q[k] * lap[k]).sum();
        let g = grad(&m, &q, BoundaryTreatment::Potential);
        let scale: f64 = g.0.iter().flatten().map(|x| x * x).sum::<f64>() + 1e-300;
        prop_assert!(quad <= 1e-12 * scale);
    }

    #[test]
    fn potential_systems_are_m_matrices(m in mesh(), seed in any::<u64>(), gamma in 1.0f64..3.0,
                                        log_dt in -6.0f64..0.0, log_eps in -8.0f64..0.0) {
        let rho = cells(&m, seed, 0.05, 5.0);
        let u = faces(&m, seed ^ 2, -5.0, 5.0);
        let p = pressure(&rho, gamma).unwrap();
        let rs = interface_density(&m, &rho, gamma).unwrap();
        let eta = ap::eta_faces(&m, &dual_average(&m, &rho), 1.5).unwrap();
        let sys = assemble_potential_system(&m, &rho, &u, &p, &rs, &eta, 10f64.powf(log_dt), 10f64.powf(log_eps)).unwrap();
        let report = is_m_matrix(&sys);
        prop_assert!(report.is_m_matrix(), "{report:?}");
    }
}
