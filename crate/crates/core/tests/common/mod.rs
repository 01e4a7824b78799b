#![allow(dead_code)]

use std::f64::consts::PI;

use hrtf4d::basis::{BasisConfig, BasisEvaluator};
use hrtf4d::dataset::{Direction, Ear, MagnitudeSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FS: f64 = 44100.0;
pub const TAPS: usize = 256;

/// Rings every 10° of elevation with azimuth counts proportional to the ring
/// circumference, scaled until the grid holds exactly `target` points.
/// Azimuths start at 0, so the grid is mirror-symmetric about the median plane.
pub fn ring_grid(target: usize) -> Vec<Direction> {
    let counts = |c: f64| -> Vec<usize> {
        (-9..=9)
            .map(|k| {
                let el = (k as f64 * 10.0).to_radians();
                ((c * el.cos()).round() as usize).max(1)
            })
            .collect()
    };
    let mut scale = 1.0;
    let ring_counts = loop {
        let cs = counts(scale);
        if cs.iter().sum::<usize>() == target {
            break cs;
        }
        scale += 0.001;
        assert!(scale < 100.0, "no ring layout with {target} points");
    };
    let mut out = Vec::with_capacity(target);
    for (k, &n) in (-9..=9).zip(&ring_counts) {
        for i in 0..n {
            out.push(Direction::from_degrees(360.0 * i as f64 / n as f64, k as f64 * 10.0));
        }
    }
    out
}

pub fn hutubs_like_grid() -> Vec<Direction> {
    ring_grid(440)
}

pub fn bin_freqs(fs: f64, taps: usize) -> Vec<f64> {
    (0..=taps / 2).map(|k| k as f64 * fs / taps as f64).collect()
}

/// Basis values on a direction × frequency grid, row-major (direction outer).
pub fn grid_design(config: &BasisConfig, dirs: &[Direction], freqs: &[f64]) -> Vec<Vec<f64>> {
    let ev = BasisEvaluator::new(config);
    dirs.iter()
        .flat_map(|d| freqs.iter().map(move |&f| (d, f)))
        .map(|(d, f)| ev.row(d.azimuth, d.inclination, f).unwrap())
        .collect()
}

/// Random coefficients with magnitudes in [0.5, 1] and random signs.
pub fn random_coeffs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.5..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect()
}

/// Forward synthesis `H = X α`, with the constant coefficient (index 0, a
/// constant function in every family) raised until every value is ≥ 0.1.
/// Returns the adjusted coefficients and the magnitude set.
pub fn synthesize(config: &BasisConfig, dirs: &[Direction], freqs: &[f64], mut coeffs: Vec<f64>, ear: Ear) -> (Vec<f64>, MagnitudeSet) {
    let rows = grid_design(config, dirs, freqs);
    let eval = |c: &[f64]| -> Vec<f64> { rows.iter().map(|r| r.iter().zip(c).map(|(x, a)| x * a).sum()).collect() };
    let h = eval(&coeffs);
    let min = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let constant = rows[0][0];
    if min < 0.1 {
        coeffs[0] += (0.1 - min) / constant;
    }
    let h = eval(&coeffs);
    let mags = MagnitudeSet::new("synthetic", ear, config.fs(), dirs.to_vec(), freqs.to_vec(), h).unwrap();
    (coeffs, mags)
}

/// Smooth, strictly positive pseudo-random test field.
pub fn smooth_field(dirs: &[Direction], freqs: &[f64], seed: u64, ear: Ear) -> MagnitudeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lobes: Vec<(f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.2..PI - 0.2),
                rng.random_range(0.5..3.0),
                rng.random_range(1000.0..20000.0),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    let mut m = Vec::with_capacity(dirs.len() * freqs.len());
    for d in dirs {
        let unit = |az: f64, inc: f64| (inc.sin() * az.cos(), inc.sin() * az.sin(), inc.cos());
        let p = unit(d.azimuth, d.inclination);
        for &f in freqs {
            let mut v = 1.0;
            for &(az, inc, sharp, fc, amp) in &lobes {
                let q = unit(az, inc);
                let dot = p.0 * q.0 + p.1 * q.1 + p.2 * q.2;
                let spectral = (-((f - fc) / 4000.0).powi(2)).exp();
                v += amp * (sharp * (dot - 1.0)).exp() * spectral;
            }
            m.push(v);
        }
    }
    MagnitudeSet::new("smooth", ear, FS, dirs.to_vec(), freqs.to_vec(), m).unwrap()
}

pub fn max_rel_dev(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(g, w)| ((g - w) / w).abs()).fold(0.0, f64::max)
}
