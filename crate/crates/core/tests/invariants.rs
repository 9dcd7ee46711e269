use proptest::prelude::*;

use factorlab::counter::{rudin_shapiro, trig_poly_norm};
use factorlab::disentangle::{disentangle, verify_certificate, SolveOptions, SolveOutcome, VerifyOptions};
use factorlab::model::{lp_norm, AtomicMeasureSpace, DiscreteFunction, ExponentProfile, Instance, OperatorMatrix};
use factorlab::vector::khintchine_check;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..3.0, n)
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![0.5f64..4.0, Just(1.0), Just(2.0), Just(f64::INFINITY)]
}

/// Two positive operators out of an `n`-atom X with no zero rows.
fn positive_instance() -> impl Strategy<Value = Instance> {
    (1usize..=3, 1usize..=3, 1usize..=3)
        .prop_flat_map(|(n, m1, m2)| {
            (
                weights(n),
                weights(m1),
                weights(m2),
                prop::collection::vec(0.05f64..1.0, n * m1),
                prop::collection::vec(0.05f64..1.0, n * m2),
                0.1f64..0.9,
                1.0f64..3.0,
                1.0f64..3.0,
            )
        })
        .prop_map(|(wx, w1, w2, e1, e2, t, p1, p2)| {
            let x = AtomicMeasureSpace::new(wx).unwrap();
            let t1 = OperatorMatrix::new(x.clone(), AtomicMeasureSpace::new(w1).unwrap(), e1, true).unwrap();
            let t2 = OperatorMatrix::new(x.clone(), AtomicMeasureSpace::new(w2).unwrap(), e2, true).unwrap();
            let profile = ExponentProfile::from_theta(&[t, 1.0 - t], vec![p1, p2], vec![p1 * 1.5, p2], None).unwrap();
            Instance::new(x, vec![t1, t2], profile, None).unwrap()
        })
}

fn inputs(inst: &Instance) -> impl Strategy<Value = Vec<DiscreteFunction>> {
    let dims: Vec<usize> = inst.operators().iter().map(|t| t.cols()).collect();
    dims.into_iter()
        .map(|m| prop::collection::vec(-2.0f64..2.0, m).prop_map(DiscreteFunction::new))
        .collect::<Vec<_>>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_are_homogeneous(w in weights(5), f in prop::collection::vec(-5.0f64..5.0, 5), c in -4.0f64..4.0, p in exponent()) {
        let space = AtomicMeasureSpace::new(w).unwrap();
        let f = DiscreteFunction::new(f);
        let a = lp_norm(&f.scaled(c), p, &space, None).unwrap();
        let b = c.abs() * lp_norm(&f, p, &space, None).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn norms_increase_with_the_exponent_on_probability_spaces(f in prop::collection::vec(-5.0f64..5.0, 6), p in 0.5f64..4.0, dp in 0.0f64..3.0) {
        let space = AtomicMeasureSpace::probability(6).unwrap();
        let f = DiscreteFunction::new(f);
        let lo = lp_norm(&f, p, &space, None).unwrap();
        let hi = lp_norm(&f, p + dp, &space, None).unwrap();
        let sup = lp_norm(&f, f64::INFINITY, &space, None).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12));
        prop_assert!(hi <= sup * (1.0 + 1e-12));
    }

    #[test]
    fn operators_are_linear((inst, fs, gs) in positive_instance().prop_flat_map(|i| { let a = inputs(&i); let b = inputs(&i); (Just(i), a, b) }), s in -3.0f64..3.0) {
        for (j, t) in inst.operators().iter().enumerate() {
            let sum = DiscreteFunction::new(fs[j].values().iter().zip(gs[j].values()).map(|(a, b)| a + s * b).collect());
            let lhs = t.apply(&sum).unwrap();
            let (a, b) = (t.apply(&fs[j]).unwrap(), t.apply(&gs[j]).unwrap());
            for x in 0..t.rows() {
                let expected = a.values()[x] + s * b.values()[x];
                prop_assert!((lhs.values()[x] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn ratio_is_scale_invariant((inst, fs) in positive_instance().prop_flat_map(|i| { let f = inputs(&i); (Just(i), f) }), c in 0.01f64..100.0) {
        let scaled: Vec<DiscreteFunction> = fs.iter().map(|f| f.scaled(c)).collect();
        let (a, b) = (inst.ratio(&fs).unwrap(), inst.ratio(&scaled).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
        let lhs = inst.evaluate_lhs(&fs).unwrap();
        let lhs_c = inst.evaluate_lhs(&scaled).unwrap();
        let g = inst.profile().gamma_sum();
        prop_assert!((lhs_c - c.powf(g) * lhs).abs() <= 1e-10 * lhs_c.max(1e-300));
    }

    #[test]
    fn certificates_bound_every_input((inst, fs) in positive_instance().prop_flat_map(|i| { let f = inputs(&i); (Just(i), f) })) {
        // any A above the supremum is certified, and then bounds every input
        let a = 1.5 * factorlab::oracle::estimate_best_constant(&inst, 4000, 1).unwrap().constant(&inst);
        let rep = disentangle(&inst, &SolveOptions { constant: Some(a), ..SolveOptions::default() }).unwrap();
        prop_assert_eq!(rep.outcome, SolveOutcome::Certified);
        let cert = rep.certificate.unwrap();
        let v = verify_certificate(&inst, &cert, &VerifyOptions { trials: 200, ..VerifyOptions::default() }).unwrap();
        prop_assert!(v.passed);
        let bound = a.powf(inst.profile().gamma_sum()) * inst.norm_product(&fs).unwrap();
        prop_assert!(inst.evaluate_lhs(&fs).unwrap() <= bound * (1.0 + 1e-6));
    }

    #[test]
    fn khintchine_two_is_isometric(a in prop::collection::vec(-3.0f64..3.0, 1..12)) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
        let r = khintchine_check(&a, 2.0, 0, 0).unwrap();
        prop_assert!(r.exact);
        prop_assert!((r.ratio - 1.0).abs() <= 1e-12);
        // q = 1 lies between 2^{-1/2} and 1
        let r1 = khintchine_check(&a, 1.0, 0, 0).unwrap();
        prop_assert!(r1.ratio >= 0.5f64.sqrt() - 1e-12 && r1.ratio <= 1.0 + 1e-12);
    }
}

#[test]
fn rudin_shapiro_pairs_conserve_energy() {
    for m in 0..=10 {
        let (p, q) = rudin_shapiro(m).unwrap();
        let grid = 8 << m;
        let (vp, vq) = (p.evaluate(grid).unwrap(), q.evaluate(grid).unwrap());
        let target = 2f64.powi(m as i32 + 1);
        for (a, b) in vp.iter().zip(&vq) {
            assert!((a.norm_sqr() + b.norm_sqr() - target).abs() <= 1e-9 * target);
        }
        let l2 = trig_poly_norm(&q, 2.0, grid).unwrap().value;
        assert!((l2 - 2f64.powf(m as f64 / 2.0)).abs() <= 1e-9 * l2);
    }
}
