use neckpinch::barrier::{d_part, supersolution_derivs, supersolution_eval, BarrierParams};
use neckpinch::flow::{round_sphere, GridSpec, Integrator, IntegratorConfig};
use neckpinch::hermite::{project, HermiteBasis, QuadratureRule};
use neckpinch::mz::{classify, decay_rate_fit, simulate_mz, synthetic_suite, ClassifyConfig};
use neckpinch::numerics::CubicHermite;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn classification_ignores_overall_scale(idx in 0usize..36, k in -3.0f64..3.0) {
        let suite = synthetic_suite();
        let (spec, _) = &suite[idx % suite.len()];
        let t = simulate_mz(spec);
        let cfg = ClassifyConfig::default();
        let a = classify(&t, &cfg).unwrap();
        let b = classify(&t.scaled(10f64.powf(k)), &cfg).unwrap();
        prop_assert_eq!(a.tag, b.tag);
        if let (Some(x), Some(y)) = (a.decay, b.decay) {
            prop_assert!((x.rate - y.rate).abs() < 1e-9);
        }
    }

    #[test]
    fn d_annihilates_z1(u in 0.2f64..10.0, tau in 1.0f64..1e3, b in 0.01f64..100.0, n in 2usize..8) {
        let p = BarrierParams { b, c: f64::MIN_POSITIVE, l: 11.0, tau0: 1.0, n };
        let z = supersolution_derivs(&p, tau, u).unwrap();
        let scale = z.z.abs() / (u * u) + z.z_u.abs() * (u + 1.0 / u);
        prop_assert!(d_part(z.z, z.z_u, u).abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn barrier_is_linear_in_b(u in 0.9f64..3.0, tau in 10.0f64..500.0, b in 0.01f64..10.0, c in 0.1f64..2.0) {
        let p = BarrierParams { b, c, l: 3.0, tau0: 1.0, n: 2 };
        let q = BarrierParams { b: 3.0 * b, ..p };
        let (z, z3) = (supersolution_eval(&p, tau, u).unwrap(), supersolution_eval(&q, tau, u).unwrap());
        prop_assert!((z3 - 3.0 * z).abs() <= 1e-14 * z.abs().max(1e-300));
    }

    #[test]
    fn projection_recovers_hermite_coefficients(c in prop::collection::vec(-5.0f64..5.0, 9)) {
        let basis = HermiteBasis::new(8);
        let rule = QuadratureRule::auto(40.0).unwrap();
        let g = |s: f64| c.iter().enumerate().map(|(k, ck)| ck * basis.eval(k, s).unwrap()).sum::<f64>();
        let p = project(&rule, &basis, g);
        for (got, want) in p.coeffs.iter().zip(&c) {
            prop_assert!((got - want).abs() < 1e-10);
        }
        prop_assert!(p.residual < 1e-8);
    }

    #[test]
    fn hermite_interpolant_reproduces_cubics(c in prop::collection::vec(-2.0f64..2.0, 4), z in 0.0f64..3.0) {
        let x: Vec<f64> = (0..13).map(|i| 0.25 * i as f64).collect();
        let f = |t: f64| c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
        let df = |t: f64| c[1] + 2.0 * c[2] * t + 3.0 * c[3] * t * t;
        let h = CubicHermite::exact(&x, &x.iter().map(|t| f(*t)).collect::<Vec<_>>(), &x.iter().map(|t| df(*t)).collect::<Vec<_>>());
        prop_assert!((h.eval(z) - f(z)).abs() < 1e-12);
        prop_assert!((h.derivative(z) - df(z)).abs() < 1e-11);
    }

    #[test]
    fn rate_fit_is_exact_on_exponentials(rate in -1.0f64..3.0, amp in 1e-3f64..1e3) {
        let tau: Vec<f64> = (0..50).map(|i| 1.0 + 0.2 * i as f64).collect();
        let v: Vec<f64> = tau.iter().map(|t| amp * (-rate * t).exp()).collect();
        let f = decay_rate_fit(&tau, &v, (1.0, 11.0)).unwrap();
        prop_assert!((f.rate - rate).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn snapshots_roundtrip_through_json(radius in 0.5f64..3.0, steps in 1u64..40) {
        let p = round_sphere(2, radius, GridSpec { nodes: 21, ..GridSpec::default() }).unwrap();
        let mut it = Integrator::new(p, IntegratorConfig { snapshot_stride: 10, ..IntegratorConfig::default() }).unwrap();
        it.advance(Some(steps)).unwrap();
        let traj = it.into_trajectory();
        let text = serde_json::to_string(&traj).unwrap();
        let back: neckpinch::flow::FlowTrajectory = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, traj);
    }
}
