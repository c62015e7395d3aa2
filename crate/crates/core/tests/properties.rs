use std::sync::Arc;

use lattice_transport::experiment::ExperimentConfig;
use lattice_transport::operators::{Hamiltonian, OperatorExpr};
use lattice_transport::potentials::PotentialField;
use lattice_transport::propagation::{Propagator, DEFAULT_TOLERANCE};
use lattice_transport::spectral::{complement_projection_apply, dense_eigendecomposition, spectral_projection_apply, EnergyInterval};
use lattice_transport::transport::{interpolation_inequality, jensen_inequality};
use lattice_transport::{BoxGeometry, LatticeState};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geometry() -> impl Strategy<Value = Arc<BoxGeometry>> {
    prop_oneof![(1usize..40).prop_map(|l| (1, l)), (1usize..7).prop_map(|l| (2, l)), (1usize..3).prop_map(|l| (3, l))]
        .prop_map(|(d, l)| BoxGeometry::new(d, l).unwrap())
}

fn random_h(g: &Arc<BoxGeometry>, rng: &mut ChaCha8Rng, scale: f64) -> Hamiltonian {
    let v = (0..g.total_sites()).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
    Hamiltonian::new(PotentialField::from_values(g, v).unwrap())
}

fn apply(h: &Hamiltonian, expr: OperatorExpr, psi: &LatticeState) -> LatticeState {
    let mut out = LatticeState::zeros(h.geometry());
    h.apply_expr_into(expr, psi.amplitudes(), out.amplitudes_mut());
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn site_index_bijection(g in geometry()) {
        for i in 0..g.total_sites() {
            let s = g.site_of(i);
            prop_assert!(s.iter().all(|c| c.abs() <= g.radius()));
            prop_assert_eq!(g.index_of(&s), Some(i));
        }
    }

    #[test]
    fn weighted_norm_monotone_in_order(g in geometry(), seed in any::<u64>(), r in 0.0f64..3.0, dr in 0.0f64..2.0) {
        let psi = LatticeState::random(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = psi.weighted_norm_sq(r).unwrap();
        let b = psi.weighted_norm_sq(r + dr).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-14));
    }

    #[test]
    fn operator_symmetry_classes(g in geometry(), seed in any::<u64>(), scale in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&g, &mut rng, scale);
        let phi = LatticeState::random(&g, &mut rng);
        let psi = LatticeState::random(&g, &mut rng);
        for (expr, sign) in [
            (OperatorExpr::Hamiltonian, 1.0),
            (OperatorExpr::CommutatorQH, -1.0),
            (OperatorExpr::Dilation, -1.0),
            (OperatorExpr::DoubleCommutator, 1.0),
            (OperatorExpr::CompressedDoubleCommutator, 1.0),
            (OperatorExpr::PotentialCommutator, 1.0),
        ] {
            let lhs = phi.inner(&apply(&h, expr, &psi));
            let rhs = apply(&h, expr, &phi).inner(&psi) * sign;
            let scale = 1.0 + lhs.norm().max(rhs.norm());
            prop_assert!((lhs - rhs).norm() <= 1e-12 * scale, "{}: {lhs} vs {rhs}", expr.label());
        }
    }

    #[test]
    fn commutator_is_potential_blind(g in geometry(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&g, &mut rng, 4.0);
        let free = Hamiltonian::free(&g);
        let psi = LatticeState::random(&g, &mut rng);
        prop_assert_eq!(h.commutator_q_h(&psi).unwrap().l2_distance(&free.commutator_q_h(&psi).unwrap()), 0.0);
    }

    #[test]
    fn jensen_and_interpolation_hold(g in geometry(), seed in any::<u64>(), r in 0.05f64..2.0, dr in 0.05f64..2.0, m in 0.0f64..1.5) {
        let mut psi = LatticeState::random(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        psi.normalize().unwrap();
        let n = |x: f64| psi.weighted_norm_sq(x).unwrap().sqrt();
        prop_assert!(jensen_inequality(n(0.0), n(r), n(r + dr), r, r + dr).0);
        let rr = m + dr.min(0.95);
        prop_assert!(interpolation_inequality(n(m), n(rr), n(m + 1.0), m, rr).0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn propagation_unitary_and_reversible(l in 5usize..120, seed in any::<u64>(), t in -40.0f64..40.0) {
        let g = BoxGeometry::new(1, l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&g, &mut rng, 3.0);
        let psi = LatticeState::random(&g, &mut rng);
        let mut prop = Propagator::new(&h, None, DEFAULT_TOLERANCE).unwrap();
        let out = prop.evolve(&psi, 0.0, t).unwrap();
        prop_assert!((out.norm() - psi.norm()).abs() <= 1e-11);
        let back = prop.evolve(&out, t, -t).unwrap();
        prop_assert!(back.l2_distance(&psi) <= 1e-9);
    }

    #[test]
    fn projections_resolve_identity(l in 3usize..60, seed in any::<u64>(), lo in -3.0f64..2.0, w in 0.1f64..3.0) {
        let g = BoxGeometry::new(1, l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&g, &mut rng, 2.0);
        let dec = dense_eigendecomposition(&h, 4096).unwrap();
        let psi = LatticeState::random(&g, &mut rng);
        let i = EnergyInterval::open(lo, lo + w).unwrap();
        let p = spectral_projection_apply(&dec, &i, &psi);
        let q = complement_projection_apply(&dec, &i, &psi);
        prop_assert!(p.inner(&q).norm() <= 1e-12);
        let mut sum = p.clone();
        sum.amplitudes_mut().iter_mut().zip(q.amplitudes()).for_each(|(a, b)| *a += b);
        prop_assert!(sum.l2_distance(&psi) <= 1e-12);
        prop_assert!(spectral_projection_apply(&dec, &i, &p).l2_distance(&p) <= 1e-12);
    }

    #[test]
    fn config_round_trip(
        dim in 1usize..3,
        radius in 60usize..400,
        family in 0usize..4,
        a in 0.1f64..4.0,
        seed in any::<u32>(),
        count in 8usize..80,
        linear in any::<bool>(),
        tol in 1e-14f64..1e-6,
        theta in proptest::option::of(0.05f64..1.9),
    ) {
        let potential = match family {
            0 => "family = zero\n".to_string(),
            1 => format!("family = power_law\nc = {a}\nalpha = {}\n", a + 0.5),
            2 => format!("family = anderson\nlambda = {a}\nseed = {seed}\n"),
            _ => format!("family = periodic\npattern = {a}, -1, 0.25\n"),
        };
        let spacing = if linear { "linear" } else { "log" };
        let spectral = match theta {
            Some(th) if dim == 1 => format!("\n[spectral]\ntheta = {th}\ndelta_grid = 0.1, 0.5\n"),
            _ => String::new(),
        };
        let text = format!(
            "[run]\nname = p\nseed = {seed}\n\n[geometry]\ndim = {dim}\nradius = {radius}\n\n[potential]\n{potential}\n\
             [initial]\nkind = delta\n\n[times]\nstart = 1\ncount = {count}\nspacing = {spacing}\n\n\
             [fit]\ntolerance = 0.05\n\n[propagator]\ntolerance = {tol:e}\n{spectral}"
        );
        let cfg = ExperimentConfig::parse(&text, "p").unwrap();
        let again = ExperimentConfig::parse(&cfg.serialize(), "p").unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.serialize(), cfg.serialize());
        prop_assert_eq!(again.hash(), cfg.hash());
    }
}

#[test]
fn complex_scalar_sanity() {
    // the stencils are generic; real and complex paths must agree on real input
    let g = BoxGeometry::new(2, 4).unwrap();
    let h = random_h(&g, &mut ChaCha8Rng::seed_from_u64(9), 2.0);
    let real: Vec<f64> = (0..g.total_sites()).map(|i| (i as f64).sin()).collect();
    let mut out_r = vec![0.0; real.len()];
    h.apply_expr_into(OperatorExpr::DoubleCommutator, &real, &mut out_r);
    let cplx: Vec<Complex64> = real.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut out_c = vec![Complex64::new(0.0, 0.0); real.len()];
    h.apply_expr_into(OperatorExpr::DoubleCommutator, &cplx, &mut out_c);
    assert!(out_r.iter().zip(&out_c).all(|(a, b)| *a == b.re && b.im == 0.0));
}
