use std::f64::consts::{LN_2, PI};

use proptest::prelude::*;

use lowrank_dre::sinc::{error_scale, min_m, SincRule, DEFAULT_STRIP};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rule_structure(
        t in 1e-3f64..10.0,
        d in 0.1f64..1.5,
        rho in 0.02f64..2.0,
        mu in 0.2f64..2.0,
        extra in 0usize..150,
    ) {
        let m = min_m(d, rho).unwrap() + extra;
        prop_assume!(m <= 400);
        let r = SincRule::new(t, d, rho, mu, m).unwrap();
        prop_assert_eq!(r.n_pos, (rho / mu * m as f64 + 1.0 - 1e-9).ceil() as usize);
        prop_assert!((r.h - (2.0 * PI * d / (rho * m as f64)).sqrt()).abs() <= 1e-14 * r.h);
        prop_assert!(r.h <= 2.0 * PI * d / LN_2);
        prop_assert_eq!(r.nodes.len(), m + r.n_pos + 1);
        prop_assert_eq!(r.weights.len(), r.nodes.len());
        // Far right nodes round to t once e^{-kh} < ε; weights stay exact.
        let resolved: Vec<f64> = r
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| (r.index_of(*i) as f64) * r.h < 30.0)
            .map(|(_, &z)| z)
            .collect();
        prop_assert!(resolved.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(resolved.iter().all(|&z| z > 0.0 && z < t));
        prop_assert!(r.nodes.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.nodes.iter().all(|&z| z > 0.0 && z <= t));
        for (&z, &w) in r.nodes.iter().zip(&r.weights) {
            prop_assert!(w > 0.0);
            prop_assert!((w - z * (t - z) / t).abs() <= 1e-14 * t);
        }
        prop_assert!((r.nodes[m] - t / 2.0).abs() <= 1e-15 * t);
        prop_assert!((r.weights[m] - t / 4.0).abs() <= 1e-15 * t);
    }
}

#[test]
fn weights_sum_to_interval_length() {
    for t in [0.01, 0.1, 1.0, 5.0] {
        let r = SincRule::new(t, DEFAULT_STRIP, 1.0, 1.0, 64).unwrap();
        let sum: f64 = r.scaled_weights().sum();
        assert!((sum - t).abs() <= 1e-8 * t, "t={t}: {sum}");
    }
}

#[test]
fn error_for_power_singularity_within_bound() {
    let d = DEFAULT_STRIP;
    let m = 48;
    for alpha in [0.0, 0.1, 0.25, 0.4] {
        let rho = 1.0 - 2.0 * alpha;
        for t in [0.01, 0.1, 1.0] {
            let r = SincRule::for_dle(t, d, alpha, m).unwrap();
            let got = r.integrate(|s| s.powf(-2.0 * alpha)).unwrap();
            let exact = t.powf(rho) / rho;
            let bound = 100.0 * t.powf(rho) * error_scale(d, rho, m);
            assert!(
                (got - exact).abs() <= bound,
                "α={alpha} t={t}: error {:.3e} > {bound:.3e}",
                (got - exact).abs()
            );
        }
    }
}
