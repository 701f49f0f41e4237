use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use lowrank_dre::decay::{fit_sqrt_decay, fit_time_power, verify_weyl, SingularSpectrum};

fn spectrum(m: f64, eta: f64, noise: &[f64]) -> SingularSpectrum {
    let sig: Vec<f64> = (1..=noise.len())
        .map(|k| m * (-eta * (k as f64).sqrt()).exp() * (1.0 + noise[k - 1]))
        .collect();
    let mut sig = sig;
    sig.sort_by(|a, b| b.total_cmp(a));
    SingularSpectrum::new(0.1, 16, 256, sig).unwrap()
}

fn psd(n: usize, k: usize, entries: &[f64]) -> DMatrix<f64> {
    let x = DMatrix::from_iterator(n, k, entries.iter().copied().take(n * k));
    &x * x.transpose()
}

fn sigmas(p: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = SymmetricEigen::new(p.clone())
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn sqrt_fit_is_scale_equivariant(
        m in 1e-3f64..1e3,
        eta in 0.5f64..6.0,
        noise in proptest::collection::vec(-0.2f64..0.2, 12..30),
        c in 1e-4f64..1e4,
    ) {
        let base = spectrum(m, eta, &noise);
        let scaled = SingularSpectrum::new(
            base.t, base.level, base.n,
            base.sigmas.iter().map(|s| c * s).collect(),
        ).unwrap();
        let k_max = base.len();
        let a = fit_sqrt_decay(&base, 2, 4, k_max, 0.0).unwrap();
        let b = fit_sqrt_decay(&scaled, 2, 4, k_max, 0.0).unwrap();
        prop_assert!((b.m - c * a.m).abs() <= 1e-10 * c * a.m);
        prop_assert!((b.eta - a.eta).abs() <= 1e-10 * a.eta.abs().max(1.0));
        prop_assert!((b.r2 - a.r2).abs() <= 1e-10);
    }

    #[test]
    fn time_power_is_invariant_under_time_rescaling(
        p in 0.1f64..2.0,
        amp in 1e-3f64..1e3,
        noise in proptest::collection::vec(-0.1f64..0.1, 10),
        c in 1e-3f64..1e3,
    ) {
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|j| {
                let t = 0.1 * 0.5f64.powi(9 - j);
                (t, amp * t.powf(p) * (1.0 + noise[j as usize]))
            })
            .collect();
        let stretched: Vec<(f64, f64)> = pts.iter().map(|&(t, s)| (c * t, s)).collect();
        let a = fit_time_power(&pts).unwrap();
        let b = fit_time_power(&stretched).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn weyl_holds_for_psd_sums(
        n in 1usize..=12,
        ka in 1usize..=12,
        kb in 1usize..=12,
        xa in proptest::collection::vec(-1.0f64..1.0, 144),
        xb in proptest::collection::vec(-1.0f64..1.0, 144),
    ) {
        let a = psd(n, ka.min(n), &xa);
        let b = psd(n, kb.min(n), &xb);
        let rep = verify_weyl(&sigmas(&a), &sigmas(&b), &sigmas(&(&a + &b)), 1e-10);
        prop_assert!(rep.passed(), "{:?}", rep.violations);
    }
}
