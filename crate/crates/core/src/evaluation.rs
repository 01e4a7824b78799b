//! Reconstruction error metrics, subject-representative statistics, parameter
//! sweeps and Pareto selection.
//!
//! MSE is the energy-normalized squared error in linear magnitude, in percent.
//! Negative decoded magnitudes are clamped to 0 before comparison. Only
//! samples whose frequency lies in the hearing range take part.

use std::io::Write;

use serde::Serialize;

use crate::basis::{count_scs, BasisConfig, BasisFamily};
use crate::dataset::{flip_right_ear, hearing_range_mask, Direction, Ear, MagnitudeSet};
use crate::error::{Error, Result};
use crate::fitting::{decode_grid, fit_with, CoefficientSet, FitOptions, WeightSpec};

/// Frequency band that counts towards the error, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HearingRange {
    pub lower: f64,
    pub upper: f64,
}

impl Default for HearingRange {
    fn default() -> Self {
        Self {
            lower: 20.0,
            upper: 20_000.0,
        }
    }
}

/// Squared-error and reference-energy sums; MSE is their ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorSums {
    pub error: f64,
    pub energy: f64,
}

impl ErrorSums {
    pub fn add(&mut self, decoded: f64, reference: f64) {
        let d = decoded.max(0.0) - reference;
        self.error += d * d;
        self.energy += reference * reference;
    }

    pub fn merge(self, other: ErrorSums) -> ErrorSums {
        ErrorSums {
            error: self.error + other.error,
            energy: self.energy + other.energy,
        }
    }

    pub fn mse(&self) -> Result<f64> {
        if self.energy == 0.0 {
            return Err(Error::UndefinedDenominator);
        }
        Ok(100.0 * self.error / self.energy)
    }
}

/// `100 · Σ|max(Ĥ,0) − H|² / Σ|H|²` over the masked-in samples.
pub fn mse(decoded: &[f64], reference: &[f64], mask: &[bool]) -> Result<f64> {
    if decoded.len() != reference.len() || decoded.len() != mask.len() {
        return Err(Error::DimensionMismatch(format!(
            "mse inputs have lengths {}, {} and {}",
            decoded.len(),
            reference.len(),
            mask.len()
        )));
    }
    let mut sums = ErrorSums::default();
    for ((&d, &r), &m) in decoded.iter().zip(reference).zip(mask) {
        if m {
            sums.add(d, r);
        }
    }
    sums.mse()
}

/// Error sums per (direction, bin) cell of one ear, plus the in-range mask.
struct CellErrors {
    dirs: usize,
    bins: usize,
    mask: Vec<bool>,
    decoded: Vec<f64>,
}

fn cell_errors(cs: &CoefficientSet, mags: &MagnitudeSet, range: &HearingRange) -> Result<CellErrors> {
    if (cs.config.fs() - mags.fs).abs() > 1e-9 * mags.fs {
        return Err(Error::Mismatch(format!(
            "coefficients were fitted at {} Hz but the data is sampled at {} Hz",
            cs.config.fs(),
            mags.fs
        )));
    }
    Ok(CellErrors {
        dirs: mags.num_directions(),
        bins: mags.num_freqs(),
        mask: hearing_range_mask(&mags.freqs, range.lower, range.upper),
        decoded: decode_grid(cs, mags)?,
    })
}

impl CellErrors {
    fn sums_where(&self, mags: &MagnitudeSet, dir: Option<usize>, bin: Option<usize>) -> ErrorSums {
        let mut sums = ErrorSums::default();
        for d in 0..self.dirs {
            if dir.is_some_and(|x| x != d) {
                continue;
            }
            for b in 0..self.bins {
                if !self.mask[b] || bin.is_some_and(|x| x != b) {
                    continue;
                }
                sums.add(self.decoded[d * self.bins + b], mags.get(d, b));
            }
        }
        sums
    }
}

/// Overall MSE of one ear over all in-range samples.
pub fn overall_mse(cs: &CoefficientSet, mags: &MagnitudeSet, range: &HearingRange) -> Result<f64> {
    let cells = cell_errors(cs, mags, range)?;
    cells.sums_where(mags, None, None).mse()
}

/// MSE per in-range frequency bin, averaged over all directions.
pub fn mse_by_frequency(cs: &CoefficientSet, mags: &MagnitudeSet, range: &HearingRange) -> Result<Vec<(f64, f64)>> {
    let cells = cell_errors(cs, mags, range)?;
    (0..cells.bins)
        .filter(|&b| cells.mask[b])
        .map(|b| Ok((mags.freqs[b], cells.sums_where(mags, None, Some(b)).mse()?)))
        .collect()
}

fn mse_by_direction_single(cs: &CoefficientSet, mags: &MagnitudeSet, range: &HearingRange) -> Result<Vec<f64>> {
    let cells = cell_errors(cs, mags, range)?;
    (0..cells.dirs)
        .map(|d| cells.sums_where(mags, Some(d), None).mse())
        .collect()
}

fn same_direction(a: &Direction, b: &Direction) -> bool {
    const TOL: f64 = 1e-9;
    let dinc = (a.inclination - b.inclination).abs();
    if dinc > TOL {
        return false;
    }
    // azimuth is meaningless at the poles
    if a.inclination.sin().abs() < TOL {
        return true;
    }
    let daz = (a.azimuth - b.azimuth).rem_euclid(std::f64::consts::TAU);
    daz < TOL || std::f64::consts::TAU - daz < TOL
}

/// Per-direction MSE with both ears pooled: right-ear directions are mirrored
/// about the median plane, and values landing on the same direction are
/// averaged. Output is ordered like the left grid, followed by any mirrored
/// right-ear directions that have no left counterpart.
pub fn mse_by_direction(
    cs_left: &CoefficientSet,
    cs_right: &CoefficientSet,
    mags_l: &MagnitudeSet,
    mags_r: &MagnitudeSet,
    range: &HearingRange,
) -> Result<Vec<(Direction, f64)>> {
    if mags_l.num_directions() != mags_r.num_directions()
        || mags_l
            .directions
            .iter()
            .zip(&mags_r.directions)
            .any(|(a, b)| !same_direction(a, b))
    {
        return Err(Error::Mismatch("left and right ears use different direction grids".into()));
    }
    if mags_l.freqs != mags_r.freqs {
        return Err(Error::Mismatch("left and right ears use different frequency grids".into()));
    }
    let left = mse_by_direction_single(cs_left, mags_l, range)?;
    let right = mse_by_direction_single(cs_right, mags_r, range)?;
    let mirrored = flip_right_ear(&mags_r.directions);

    let mut entries: Vec<(Direction, f64, usize)> = mags_l.directions.iter().zip(&left).map(|(d, &v)| (*d, v, 1)).collect();
    for (dir, &v) in mirrored.iter().zip(&right) {
        match entries.iter_mut().find(|(d, _, _)| same_direction(d, dir)) {
            Some(entry) => {
                entry.1 += v;
                entry.2 += 1;
            }
            None => entries.push((*dir, v, 1)),
        }
    }
    Ok(entries.into_iter().map(|(d, sum, n)| (d, sum / n as f64)).collect())
}

/// Elementwise difference of two direction maps over the same directions (`a − b`).
pub fn direction_map_difference(a: &[(Direction, f64)], b: &[(Direction, f64)]) -> Result<Vec<(Direction, f64)>> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| !same_direction(&x.0, &y.0)) {
        return Err(Error::Mismatch("direction maps cover different directions".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x.0, x.1 - y.1)).collect())
}

/// Which ear(s) an [`ErrorReport`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarScope {
    Single(Ear),
    Averaged,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub config: BasisConfig,
    pub scope: EarScope,
    pub overall_mse: f64,
    pub mse_by_frequency: Vec<(f64, f64)>,
    /// Empty for single-ear reports built without the opposite ear.
    pub mse_by_direction: Vec<(Direction, f64)>,
}

impl ErrorReport {
    /// Report for one ear; the direction map uses that ear's own grid, unmirrored.
    pub fn single(cs: &CoefficientSet, mags: &MagnitudeSet, range: &HearingRange) -> Result<Self> {
        let by_dir = mse_by_direction_single(cs, mags, range)?;
        Ok(Self {
            config: cs.config,
            scope: EarScope::Single(cs.ear),
            overall_mse: overall_mse(cs, mags, range)?,
            mse_by_frequency: mse_by_frequency(cs, mags, range)?,
            mse_by_direction: mags.directions.iter().copied().zip(by_dir).collect(),
        })
    }

    /// Ear-averaged report: overall and per-frequency values are the mean of
    /// both ears; the direction map pools mirrored right-ear data.
    pub fn both_ears(
        cs_left: &CoefficientSet,
        cs_right: &CoefficientSet,
        mags_l: &MagnitudeSet,
        mags_r: &MagnitudeSet,
        range: &HearingRange,
    ) -> Result<Self> {
        if cs_left.config != cs_right.config {
            return Err(Error::Mismatch("left and right coefficient sets use different bases".into()));
        }
        let by_dir = mse_by_direction(cs_left, cs_right, mags_l, mags_r, range)?;
        let fl = mse_by_frequency(cs_left, mags_l, range)?;
        let fr = mse_by_frequency(cs_right, mags_r, range)?;
        Ok(Self {
            config: cs_left.config,
            scope: EarScope::Averaged,
            overall_mse: 0.5 * (overall_mse(cs_left, mags_l, range)? + overall_mse(cs_right, mags_r, range)?),
            mse_by_frequency: fl.iter().zip(&fr).map(|(l, r)| (l.0, 0.5 * (l.1 + r.1))).collect(),
            mse_by_direction: by_dir,
        })
    }
}

/// Average relative difference and average relative error of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Representativeness {
    pub ard: f64,
    pub are: f64,
}

/// ARD/ARE per subject from a subjects × configurations table of MSE values.
pub fn ard_are(table: &[Vec<f64>]) -> Result<Vec<Representativeness>> {
    if table.len() < 2 {
        return Err(Error::Invalid(format!("need at least 2 subjects, got {}", table.len())));
    }
    let configs = table[0].len();
    if configs == 0 {
        return Err(Error::Invalid("need at least one configuration".into()));
    }
    if let Some(row) = table.iter().position(|r| r.len() != configs) {
        return Err(Error::DimensionMismatch(format!(
            "subject row {row} has {} values, expected {configs}",
            table[row].len()
        )));
    }
    let means: Vec<f64> = (0..configs)
        .map(|c| table.iter().map(|r| r[c]).sum::<f64>() / table.len() as f64)
        .collect();
    if let Some(c) = means.iter().position(|&m| m == 0.0) {
        return Err(Error::Division(format!("mean MSE of configuration {c} is zero")));
    }
    Ok(table
        .iter()
        .map(|row| {
            let (mut ard, mut are) = (0.0, 0.0);
            for (v, mean) in row.iter().zip(&means) {
                let rel = (v - mean) / mean;
                ard += rel;
                are += rel.abs();
            }
            Representativeness {
                ard: 100.0 * ard / configs as f64,
                are: 100.0 * are / configs as f64,
            }
        })
        .collect())
}

/// One configuration of a sweep. `mse` is `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub family: BasisFamily,
    pub max_order: u32,
    pub eta: f64,
    pub n_coeffs: usize,
    pub mse: Option<f64>,
    pub error: Option<String>,
}

impl SweepEntry {
    pub fn ok(family: BasisFamily, max_order: u32, eta: f64, n_coeffs: usize, mse: f64) -> Self {
        Self {
            family,
            max_order,
            eta,
            n_coeffs,
            mse: Some(mse),
            error: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

fn dominates(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Positions (into `points`) of the undominated `(N, MSE)` points, sorted by
/// `N` then MSE. Dominance is weak: `≤` on both axes with one strict.
pub fn pareto_indices(points: &[(usize, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| !points[i].1.is_nan()).collect();
    order.sort_by(|&a, &b| points[a].0.cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1)));
    let mut kept = Vec::new();
    let mut best_before = f64::INFINITY; // lowest MSE among strictly smaller N
    let mut i = 0;
    while i < order.len() {
        let n = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == n {
            j += 1;
        }
        let group_min = points[order[i]].1;
        if group_min < best_before {
            kept.extend(order[i..j].iter().copied().filter(|&k| points[k].1 == group_min));
        }
        best_before = best_before.min(group_min);
        i = j;
    }
    kept
}

/// The undominated subset of successful entries, sorted by coefficient count.
pub fn pareto_frontier(entries: &SweepResult) -> SweepResult {
    let points: Vec<(usize, f64)> = entries
        .entries
        .iter()
        .map(|e| (e.n_coeffs, e.mse.unwrap_or(f64::NAN)))
        .collect();
    SweepResult {
        entries: pareto_indices(&points).into_iter().map(|i| entries.entries[i].clone()).collect(),
    }
}

/// O(n²) dominance check, used to cross-validate [`pareto_indices`].
pub fn pareto_indices_brute_force(points: &[(usize, f64)]) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..points.len())
        .filter(|&i| !points[i].1.is_nan())
        .filter(|&i| !points.iter().any(|&p| !p.1.is_nan() && dominates(p, points[i])))
        .collect();
    kept.sort_by(|&a, &b| points[a].0.cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1)));
    kept
}

/// A sweep grid: every family × L × η combination.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub families: Vec<BasisFamily>,
    pub max_orders: Vec<u32>,
    pub etas: Vec<f64>,
    /// Replace each HSH η by the order matching the spherindrical count at the same L.
    pub hsh_matched: bool,
}

impl SweepGrid {
    pub fn configs(&self, fs: f64) -> Result<Vec<BasisConfig>> {
        let mut out = Vec::new();
        for &family in &self.families {
            for &l in &self.max_orders {
                for &eta in &self.etas {
                    let eta = if family == BasisFamily::Hsh && self.hsh_matched {
                        if eta.fract() != 0.0 || eta < 0.0 {
                            return Err(Error::Invalid(format!("matched HSH orders need integer eta, got {eta}")));
                        }
                        crate::basis::matched_eta(l, eta as u32)
                    } else {
                        eta
                    };
                    out.push(BasisConfig::new(family, l, eta, fs)?);
                }
            }
        }
        Ok(out)
    }
}

/// Fits every configuration of `grid` to every ear in `ears` and records the
/// ear-averaged overall MSE. A failing configuration is recorded with its
/// error and the sweep continues.
pub fn sweep(
    ears: &[MagnitudeSet],
    grid: &SweepGrid,
    spec: &WeightSpec,
    options: &FitOptions,
    range: &HearingRange,
) -> Result<SweepResult> {
    let first = ears.first().ok_or_else(|| Error::Invalid("sweep needs at least one ear".into()))?;
    if ears.iter().any(|m| m.fs != first.fs) {
        return Err(Error::Mismatch("ears have different sampling frequencies".into()));
    }
    let configs = grid.configs(first.fs)?;
    let mut entries = Vec::with_capacity(configs.len());
    for config in configs {
        let outcome: Result<f64> = (|| {
            let mut total = 0.0;
            for mags in ears {
                let cs = fit_with(&config, mags, spec, options)?;
                total += overall_mse(&cs, mags, range)?;
            }
            Ok(total / ears.len() as f64)
        })();
        let (mse, error) = match outcome {
            Ok(v) => (Some(v), None),
            Err(e) => {
                log::warn!(
                    "sweep entry {} L={} eta={} failed: {e}",
                    config.family(),
                    config.max_order(),
                    config.eta()
                );
                (None, Some(e.to_string()))
            }
        };
        entries.push(SweepEntry {
            family: config.family(),
            max_order: config.max_order(),
            eta: config.eta(),
            n_coeffs: config.num_functions(),
            mse,
            error,
        });
    }
    Ok(SweepResult { entries })
}

/// Expected coefficient count of a sweep entry, for consistency checks.
pub fn expected_count(family: BasisFamily, max_order: u32, eta: f64) -> Result<usize> {
    match family {
        BasisFamily::Hsh => crate::basis::count_hsh(max_order, eta),
        _ => Ok(count_scs(max_order, eta as u32)),
    }
}

pub fn write_mse_by_frequency_csv<W: Write>(out: W, rows: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["freq_hz", "mse_percent"]).map_err(csv_err)?;
    for (f, v) in rows {
        w.write_record([f.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mse_by_direction_csv<W: Write>(out: W, rows: &[(Direction, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["azimuth_deg", "elevation_deg", "mse_percent"]).map_err(csv_err)?;
    for (d, v) in rows {
        w.write_record([d.azimuth_deg().to_string(), d.elevation_deg().to_string(), v.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `family,L,eta,n_coeffs,mse_percent,pareto_flag,status`; failed entries
/// leave `mse_percent` empty and carry the error in `status`.
pub fn write_sweep_csv<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    let points: Vec<(usize, f64)> = result
        .entries
        .iter()
        .map(|e| (e.n_coeffs, e.mse.unwrap_or(f64::NAN)))
        .collect();
    let mut flags = vec![false; points.len()];
    for i in pareto_indices(&points) {
        flags[i] = true;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "L", "eta", "n_coeffs", "mse_percent", "pareto_flag", "status"])
        .map_err(csv_err)?;
    for (e, flag) in result.entries.iter().zip(flags) {
        w.write_record([
            e.family.name().to_string(),
            e.max_order.to_string(),
            e.eta.to_string(),
            e.n_coeffs.to_string(),
            e.mse.map(|v| v.to_string()).unwrap_or_default(),
            (flag as u8).to_string(),
            match &e.error {
                None => "ok".to_string(),
                Some(msg) => format!("failed: {msg}"),
            },
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("CSV write failed: {e}"))
}
