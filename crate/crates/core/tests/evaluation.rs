mod common;

use common::*;
use hrtf4d::basis::{BasisConfig, BasisFamily};
use hrtf4d::dataset::{flip_right_ear, Direction, Ear, MagnitudeSet};
use hrtf4d::evaluation::{
    ard_are, mse, mse_by_direction, mse_by_frequency, overall_mse, pareto_indices, pareto_indices_brute_force, sweep,
    write_mse_by_direction_csv, write_mse_by_frequency_csv, write_sweep_csv, HearingRange, SweepGrid,
};
use hrtf4d::fitting::{decode_grid, fit, FitOptions, WeightSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> (Vec<Direction>, Vec<f64>) {
    (ring_grid(200), bin_freqs(FS, 128))
}

#[test]
fn mse_clamps_and_masks() {
    assert_eq!(mse(&[-1.0], &[1.0], &[true]).unwrap(), 100.0);
    assert_eq!(mse(&[2.0, 7.0], &[1.0, 1.0], &[true, false]).unwrap(), 100.0);
    assert!(mse(&[1.0], &[1.0, 2.0], &[true]).is_err());
    assert!(mse(&[1.0], &[0.0], &[true]).is_err());
}

proptest! {
    #[test]
    fn mse_is_scale_invariant(seed in 0u64..10_000, c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 50;
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let d: Vec<f64> = h.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        prop_assume!(mask.iter().any(|&m| m));
        let a = mse(&d, &h, &mask).unwrap();
        let hs: Vec<f64> = h.iter().map(|v| v * c).collect();
        let ds: Vec<f64> = d.iter().map(|v| v * c).collect();
        let b = mse(&ds, &hs, &mask).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn pareto_matches_brute_force(seed in 0u64..u64::MAX, len in 0usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // coarse values force plenty of ties and duplicates
        let points: Vec<(usize, f64)> = (0..len)
            .map(|_| (rng.random_range(1..60usize), rng.random_range(0..40u32) as f64 / 8.0))
            .collect();
        prop_assert_eq!(pareto_indices(&points), pareto_indices_brute_force(&points));
    }
}

#[test]
fn pareto_handles_large_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let points: Vec<(usize, f64)> = (0..10_000).map(|_| (rng.random_range(1..20_000usize), rng.random_range(0.0..10.0))).collect();
    assert_eq!(pareto_indices(&points), pareto_indices_brute_force(&points));
}

#[test]
fn overall_is_energy_weighted_combination_of_per_frequency() {
    let (dirs, freqs) = small();
    let data = smooth_field(&dirs, &freqs, 12, Ear::Left);
    let range = HearingRange::default();
    let cs = fit(&BasisConfig::new(BasisFamily::Hsh, 3, 4.0, FS).unwrap(), &data, &WeightSpec::default()).unwrap();
    let overall = overall_mse(&cs, &data, &range).unwrap();
    let per_freq = mse_by_frequency(&cs, &data, &range).unwrap();
    let in_range: Vec<usize> = (0..freqs.len()).filter(|&b| freqs[b] >= 20.0 && freqs[b] <= 20000.0).collect();
    assert_eq!(per_freq.len(), in_range.len());
    let mut errors = 0.0;
    let mut energy = 0.0;
    for (&(f, m), &b) in per_freq.iter().zip(&in_range) {
        assert_eq!(f, freqs[b]);
        let e: f64 = (0..dirs.len()).map(|d| data.get(d, b).powi(2)).sum();
        errors += m * e;
        energy += e;
    }
    assert!((errors / energy - overall).abs() <= 1e-12 * overall);
    assert!(overall > 0.0);
}

/// Mirrors a left-ear field onto the right ear: `H_R(φ) = H_L(−φ)`.
fn mirrored(data: &MagnitudeSet) -> MagnitudeSet {
    let flipped = flip_right_ear(&data.directions);
    let mut mags = Vec::with_capacity(data.magnitudes.len());
    for d in &flipped {
        let src = data
            .directions
            .iter()
            .position(|x| (x.azimuth - d.azimuth).abs() < 1e-9 && (x.inclination - d.inclination).abs() < 1e-9)
            .expect("grid is mirror-symmetric");
        mags.extend_from_slice(data.spectrum(src));
    }
    MagnitudeSet::new(data.subject_id.clone(), Ear::Right, data.fs, data.directions.clone(), data.freqs.clone(), mags).unwrap()
}

#[test]
fn per_direction_averages_mirrored_ears() {
    let (dirs, freqs) = small();
    let left = smooth_field(&dirs, &freqs, 31, Ear::Left);
    let right = mirrored(&left);
    let range = HearingRange::default();
    let config = BasisConfig::new(BasisFamily::Shrfbs, 3, 6.0, FS).unwrap();
    let cs_l = fit(&config, &left, &WeightSpec::default()).unwrap();
    let cs_r = fit(&config, &right, &WeightSpec::default()).unwrap();
    let rows = mse_by_direction(&cs_l, &cs_r, &left, &right, &range).unwrap();
    assert_eq!(rows.len(), dirs.len(), "one row per unique mirrored direction");

    // oracle: per-direction MSE of each ear, right ear looked up at the mirrored direction
    let per_dir = |cs, mags: &MagnitudeSet| -> Vec<f64> {
        let dec = decode_grid(cs, mags).unwrap();
        let nb = mags.num_freqs();
        (0..mags.num_directions())
            .map(|d| {
                let mask: Vec<bool> = mags.freqs.iter().map(|&f| (20.0..=20000.0).contains(&f)).collect();
                mse(&dec[d * nb..(d + 1) * nb], mags.spectrum(d), &mask).unwrap()
            })
            .collect()
    };
    let el = per_dir(&cs_l, &left);
    let er = per_dir(&cs_r, &right);
    let flipped = flip_right_ear(&dirs);
    for (i, (dir, v)) in rows.iter().enumerate() {
        assert!((dir.azimuth - dirs[i].azimuth).abs() < 1e-12);
        let j = flipped
            .iter()
            .position(|x| (x.azimuth - dir.azimuth).abs() < 1e-9 && (x.inclination - dir.inclination).abs() < 1e-9)
            .unwrap();
        let want = 0.5 * (el[i] + er[j]);
        assert!((v - want).abs() <= 1e-12 * want.max(1e-300), "direction {i}");
    }
    // mirrored data fitted independently gives mirrored errors
    for (i, _) in rows.iter().enumerate() {
        let j = flipped.iter().position(|x| (x.azimuth - dirs[i].azimuth).abs() < 1e-9 && (x.inclination - dirs[i].inclination).abs() < 1e-9).unwrap();
        assert!((el[i] - er[j]).abs() <= 1e-6 * el[i].max(1e-12));
    }
}

#[test]
fn per_direction_rejects_mismatched_grids() {
    let (dirs, freqs) = small();
    let left = smooth_field(&dirs, &freqs, 1, Ear::Left);
    let right = smooth_field(&dirs[..150], &freqs, 1, Ear::Right);
    let config = BasisConfig::new(BasisFamily::Hsh, 2, 2.0, FS).unwrap();
    let cs_l = fit(&config, &left, &WeightSpec::default()).unwrap();
    let cs_r = fit(&config, &right, &WeightSpec::default()).unwrap();
    assert!(mse_by_direction(&cs_l, &cs_r, &left, &right, &HearingRange::default()).is_err());
}

#[test]
fn ard_are_cases() {
    let hand = ard_are(&[vec![1.0], vec![3.0]]).unwrap();
    assert!((hand[0].ard + 50.0).abs() < 1e-12 && (hand[1].ard - 50.0).abs() < 1e-12);
    assert!(hand.iter().all(|r| (r.are - 50.0).abs() < 1e-12));

    let same = ard_are(&[vec![2.0, 4.0], vec![2.0, 4.0], vec![2.0, 4.0]]).unwrap();
    assert!(same.iter().all(|r| r.ard == 0.0 && r.are == 0.0));

    let dup = ard_are(&[vec![1.0, 5.0, 2.0], vec![3.0, 1.0, 2.5], vec![1.0, 5.0, 2.0], vec![2.0, 2.0, 9.0]]).unwrap();
    assert_eq!(dup[0], dup[2]);
    // signed deviations cancel across subjects
    let total: f64 = dup.iter().map(|r| r.ard).sum();
    assert!(total.abs() < 1e-12);

    assert!(ard_are(&[vec![1.0]]).is_err());
    assert!(ard_are(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    assert!(ard_are(&[vec![0.0], vec![0.0]]).is_err());
}

#[test]
fn sweep_constant_data() {
    let (dirs, freqs) = small();
    let c = vec![1.5; dirs.len() * freqs.len()];
    let mags = MagnitudeSet::new("c", Ear::Left, FS, dirs, freqs, c).unwrap();
    let grid = SweepGrid {
        families: vec![BasisFamily::Shfs],
        max_orders: vec![0],
        etas: vec![0.0],
        hsh_matched: false,
    };
    let result = sweep(&[mags], &grid, &WeightSpec::default(), &FitOptions::default(), &HearingRange::default()).unwrap();
    assert_eq!(result.entries.len(), 1);
    assert_eq!(result.entries[0].n_coeffs, 1);
    assert!(result.entries[0].mse.unwrap() < 1e-20);
}

#[test]
fn sweep_counts_monotonicity_and_failures() {
    let (dirs, freqs) = small();
    let left = smooth_field(&dirs, &freqs, 40, Ear::Left);
    let right = smooth_field(&dirs, &freqs, 41, Ear::Right);
    let grid = SweepGrid {
        families: vec![BasisFamily::Hsh, BasisFamily::Shfbs],
        max_orders: vec![2, 3],
        etas: vec![2.0, 4.0, 8.0],
        hsh_matched: false,
    };
    let result = sweep(&[left.clone(), right.clone()], &grid, &WeightSpec::default(), &FitOptions::default(), &HearingRange::default()).unwrap();
    assert_eq!(result.entries.len(), 12);
    for e in &result.entries {
        let config = BasisConfig::new(e.family, e.max_order, e.eta, FS).unwrap();
        assert_eq!(e.n_coeffs, config.num_functions());
    }
    for chunk in result.entries.chunks(3) {
        let m: Vec<f64> = chunk.iter().map(|e| e.mse.unwrap()).collect();
        assert!(m[1] <= m[0] * (1.0 + 1e-10) && m[2] <= m[1] * (1.0 + 1e-10), "{m:?}");
    }

    // a budget that fits the small configs but not the large one
    let grid = SweepGrid {
        families: vec![BasisFamily::Shfbs],
        max_orders: vec![1, 6],
        etas: vec![4.0],
        hsh_matched: false,
    };
    let rows = dirs.len() * (freqs.len() - 1);
    let options = FitOptions {
        mem_budget_bytes: (rows * 30 * 8) as u64,
        ..FitOptions::default()
    };
    let result = sweep(&[left], &grid, &WeightSpec::default(), &options, &HearingRange::default()).unwrap();
    assert!(result.entries[0].mse.is_some());
    assert!(result.entries[1].mse.is_none());
    assert!(result.entries[1].error.as_deref().unwrap().contains("exceeding the budget"));

    let mut out = Vec::new();
    write_sweep_csv(&mut out, &result).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "family,L,eta,n_coeffs,mse_percent,pareto_flag,status");
    assert!(lines[1].starts_with("shfbs,1,4,20,") && lines[1].ends_with(",1,ok"), "{}", lines[1]);
    assert!(lines[2].starts_with("shfbs,6,4,245,,0,\"failed: "), "{}", lines[2]);
}

#[test]
fn sweep_hsh_matched_counts() {
    let grid = SweepGrid {
        families: vec![BasisFamily::Hsh],
        max_orders: vec![4, 6, 9],
        etas: vec![16.0, 32.0, 64.0],
        hsh_matched: true,
    };
    let counts: Vec<usize> = grid.configs(FS).unwrap().iter().map(|c| c.num_functions()).collect();
    assert_eq!(counts, [420, 820, 1620, 840, 1624, 3192, 1720, 3320, 6520]);
}

#[test]
fn csv_writers_round_trip_doubles() {
    let mut out = Vec::new();
    write_mse_by_frequency_csv(&mut out, &[(344.53125, 0.1 + 0.2), (689.0625, 1.0 / 3.0)]).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("freq_hz,mse_percent"));
    let v: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(v, 0.1 + 0.2);

    let mut out = Vec::new();
    write_mse_by_direction_csv(&mut out, &[(Direction::from_degrees(-90.0, 30.0), 2.5)]).unwrap();
    let text = String::from_utf8(out).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(text.lines().next(), Some("azimuth_deg,elevation_deg,mse_percent"));
    assert!((row[0] - 270.0).abs() < 1e-12 && (row[1] - 30.0).abs() < 1e-12 && row[2] == 2.5);
}
