use hrtf4d::basis::{count_hsh, count_scs, eval_basis, index_set, BasisConfig, BasisEvaluator, BasisFamily, BasisIndex};
use hrtf4d::special_functions::real_sh;
use proptest::prelude::*;

const FS: f64 = 44100.0;

fn eta_for(family: BasisFamily, halves: u32) -> f64 {
    match family {
        BasisFamily::Hsh => halves as f64 / 2.0,
        // spherindrical orders are integers
        _ => (halves / 2) as f64,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_set_matches_counts(fam in 0usize..4, l in 0u32..=16, halves in 0u32..=140) {
        let family = BasisFamily::ALL[fam];
        let eta = eta_for(family, halves);
        let config = BasisConfig::new(family, l, eta, FS).unwrap();
        let set = index_set(&config);
        let expected = match family {
            BasisFamily::Hsh => count_hsh(l, eta).unwrap(),
            _ => count_scs(l, eta as u32),
        };
        prop_assert_eq!(set.len(), expected);
        prop_assert_eq!(set.len(), config.num_functions());
        prop_assert!(set.windows(2).all(|w| (w[0].n, w[0].l, w[0].m) < (w[1].n, w[1].l, w[1].m)));
    }

    #[test]
    fn hsh_symmetric_about_hyperequator(l in 0u32..=16, halves in 0u32..=140, f in 0.0f64..22050.0,
                                        phi in 0.0f64..6.28, theta in 0.0f64..3.14) {
        let config = BasisConfig::new(BasisFamily::Hsh, l, halves as f64 / 2.0, FS).unwrap();
        let ev = BasisEvaluator::new(&config);
        let sh = ev.sh_values(phi, theta);
        let mut a = vec![0.0; ev.len()];
        let mut b = vec![0.0; ev.len()];
        ev.combine_into(&sh, &ev.freq_values(f), &mut a);
        ev.combine_into(&sh, &ev.freq_values(FS - f), &mut b);
        let scale = a.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn evaluator_agrees_with_eval_basis(fam in 0usize..4, l in 0u32..=6, halves in 0u32..=24, f in 0.0f64..=22050.0,
                                        phi in 0.0f64..6.28, theta in 0.0f64..3.14) {
        let family = BasisFamily::ALL[fam];
        let config = BasisConfig::new(family, l, eta_for(family, halves), FS).unwrap();
        let ev = BasisEvaluator::new(&config);
        let row = ev.row(phi, theta, f).unwrap();
        for (idx, v) in ev.indices().iter().zip(&row) {
            let direct = eval_basis(&config, *idx, phi, theta, f).unwrap();
            prop_assert!((direct - v).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}

#[test]
fn hsh_fewer_functions_than_spherindrical() {
    for l in 1..=16 {
        let mut last_ratio = 0.0;
        for eta in 1..=70u32 {
            let h = count_hsh(l, eta as f64).unwrap();
            let s = count_scs(l, eta);
            assert!(h < s, "L={l} eta={eta}");
            let ratio = h as f64 / s as f64;
            assert!(ratio >= last_ratio, "ratio must grow with eta at L={l}");
            last_ratio = ratio;
        }
    }
}

#[test]
fn families_reduce_to_sh_at_constant_frequency_point() {
    let (phi, theta) = (1.1, 0.7);
    for (family, f) in [(BasisFamily::Shfs, 0.0), (BasisFamily::Shrfbs, FS / 2.0)] {
        let config = BasisConfig::new(family, 4, 8.0, FS).unwrap();
        for idx in index_set(&config) {
            let y = real_sh(idx.l as i32, idx.m, phi, theta).unwrap();
            let v = eval_basis(&config, idx, phi, theta, f).unwrap();
            assert!((v - y).abs() < 1e-12, "{family} {idx}");
        }
    }
    let config = BasisConfig::new(BasisFamily::Shfbs, 4, 8.0, FS).unwrap();
    for f in [0.0, 1234.5, 22050.0] {
        for idx in index_set(&config).into_iter().filter(|i| i.n == 0) {
            let y = real_sh(idx.l as i32, idx.m, phi, theta).unwrap();
            assert!((eval_basis(&config, idx, phi, theta, f).unwrap() - y).abs() < 1e-12);
        }
    }
    // Fourier–Bessel terms vanish at Nyquist
    for idx in index_set(&config).into_iter().filter(|i| i.n > 0) {
        assert!(eval_basis(&config, idx, phi, theta, FS / 2.0).unwrap().abs() < 1e-12);
    }
}

#[test]
fn invalid_configs_and_indices() {
    assert!(BasisConfig::new(BasisFamily::Shfs, 4, 16.5, FS).is_err());
    assert!(BasisConfig::new(BasisFamily::Hsh, 4, 16.25, FS).is_err());
    assert!(BasisConfig::new(BasisFamily::Hsh, 4, -1.0, FS).is_err());
    assert!(BasisConfig::new(BasisFamily::Hsh, 4, 8.0, 0.0).is_err());
    let hsh = BasisConfig::new(BasisFamily::Hsh, 4, 4.0, FS).unwrap();
    assert!(eval_basis(&hsh, BasisIndex::new(3, 2, 0), 0.0, 0.0, 0.0).is_err());
    assert!(eval_basis(&hsh, BasisIndex::new(2, 3, 0), 0.0, 0.0, 0.0).is_err());
    assert!(eval_basis(&hsh, BasisIndex::new(2, 2, 3), 0.0, 0.0, 0.0).is_err());
    assert!(eval_basis(&hsh, BasisIndex::new(2, 2, 0), 0.0, 0.0, 30000.0).is_err());
    assert!("legendre".parse::<BasisFamily>().is_err());
}
