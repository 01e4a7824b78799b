//! Weighted least-squares fitting of basis coefficients and decoding.
//!
//! All frequency-direction samples of one ear go into a single system
//! `(XᵀWX) α = XᵀWH`. The default solver never forms `XᵀWX`: rows are scaled
//! by `√w`, the augmented matrix `[√W X | √W H]` is reduced by Householder QR,
//! and `α` comes from back substitution on the triangular factor. The
//! normal-equations route (Cholesky on `XᵀWX`) is kept as a cross-check.

use std::path::Path;

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::qr::no_pivoting::factor::{qr_in_place, qr_in_place_scratch, recommended_block_size};
use faer::{Mat, MatRef, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisConfig, BasisEvaluator, BasisFamily};
use crate::dataset::{Direction, Ear, MagnitudeSet};
use crate::error::{Error, Result};

/// Default cap on the design matrix: 4 GiB.
pub const DEFAULT_MEM_BUDGET_BYTES: u64 = 4 << 30;

/// A frequency-direction triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub phi: f64,
    pub theta: f64,
    pub f: f64,
}

impl SamplePoint {
    pub fn new(phi: f64, theta: f64, f: f64) -> Self {
        Self { phi, theta, f }
    }

    pub fn at(direction: Direction, f: f64) -> Self {
        Self::new(direction.azimuth, direction.inclination, f)
    }
}

/// Pass band of the fitting weight: 1 inside `[f_l, f_u]`, 0 below, cosine taper above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub f_l: f64,
    pub f_u: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            f_l: 20.0,
            f_u: 20_000.0,
        }
    }
}

impl WeightSpec {
    pub fn new(f_l: f64, f_u: f64) -> Self {
        Self { f_l, f_u }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.f_l >= 0.0 && self.f_l < self.f_u && self.f_u < fs) {
            return Err(Error::Invalid(format!(
                "weight limits need 0 <= f_l < f_u < fs, got f_l={}, f_u={}, fs={fs}",
                self.f_l, self.f_u
            )));
        }
        Ok(())
    }
}

/// Fitting weight of one sample at frequency `f`.
pub fn weight(f: f64, spec: &WeightSpec, fs: f64) -> f64 {
    if f < spec.f_l {
        0.0
    } else if f <= spec.f_u {
        1.0
    } else {
        (2.0 * (f - spec.f_u) / (fs - spec.f_u) * std::f64::consts::PI).cos().max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    /// Householder QR of the `√W`-scaled system.
    #[default]
    Qr,
    /// Cholesky on `XᵀWX`.
    NormalEquations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub mem_budget_bytes: u64,
    pub solver: Solver,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mem_budget_bytes: DEFAULT_MEM_BUDGET_BYTES,
            solver: Solver::Qr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub weight: WeightSpec,
    /// `‖√W (X α − H)‖₂`
    pub residual_norm: f64,
    /// Ratio of extreme singular values of `√W X`.
    pub condition_estimate: f64,
    /// Samples with non-zero weight that entered the solve.
    pub rows_used: usize,
}

/// Fitted coefficients, ordered like [`crate::basis::index_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub config: BasisConfig,
    pub ear: Ear,
    pub subject_id: String,
    pub coeffs: Vec<f64>,
    pub fit_metadata: FitMetadata,
}

fn check_budget(rows: usize, cols: usize, budget: u64) -> Result<()> {
    let required = rows as u128 * cols as u128 * std::mem::size_of::<f64>() as u128;
    if required > budget as u128 {
        return Err(Error::MemoryBudget {
            rows,
            cols,
            required_bytes: required,
            budget_bytes: budget as u128,
        });
    }
    Ok(())
}

/// Fills a `K × (N + extra)` matrix whose first `N` columns are the basis
/// values at each sample multiplied by `scales[k]`; trailing columns are left zero.
fn build_rows(ev: &BasisEvaluator, samples: &[SamplePoint], scales: &[f64], extra: usize) -> Mat<f64> {
    let n = ev.len();
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .zip(scales.par_iter())
        .map(|(s, &scale)| {
            let mut row = vec![0.0; n];
            ev.combine_into(&ev.sh_values(s.phi, s.theta), &ev.freq_values(s.f), &mut row);
            if scale != 1.0 {
                row.iter_mut().for_each(|v| *v *= scale);
            }
            row
        })
        .collect();
    Mat::from_fn(samples.len(), n + extra, |i, j| if j < n { rows[i][j] } else { 0.0 })
}

fn check_samples(config: &BasisConfig, samples: &[SamplePoint]) -> Result<()> {
    for (k, s) in samples.iter().enumerate() {
        config
            .check_frequency(s.f)
            .map_err(|e| Error::domain(format!("sample {k}: {e}")))?;
        if !s.phi.is_finite() || !s.theta.is_finite() {
            return Err(Error::domain(format!("sample {k}: non-finite direction")));
        }
    }
    Ok(())
}

/// Design matrix `X[k, j] = X_j(Ω_k)`: rows follow `samples`, columns follow the index set.
pub fn assemble_design_matrix(config: &BasisConfig, samples: &[SamplePoint], mem_budget_bytes: u64) -> Result<Mat<f64>> {
    check_samples(config, samples)?;
    let ev = BasisEvaluator::new(config);
    check_budget(samples.len(), ev.len(), mem_budget_bytes)?;
    Ok(build_rows(&ev, samples, &vec![1.0; samples.len()], 0))
}

/// Solves `R x = b` for upper-triangular `R`.
fn back_substitute(r: MatRef<'_, f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in (i + 1)..n {
            acc -= r[(i, j)] * x[j];
        }
        x[i] = acc / r[(i, i)];
    }
    x
}

struct Solution {
    coeffs: Vec<f64>,
    residual_norm: f64,
    condition: f64,
}

fn rank_check(singular_values: &[f64], rows: usize, cols: usize) -> Result<f64> {
    let s_max = singular_values.first().copied().unwrap_or(0.0);
    let tol = rows.max(cols) as f64 * f64::EPSILON * s_max;
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    if rank < cols || s_max == 0.0 {
        return Err(Error::Underdetermined { rank, unknowns: cols });
    }
    Ok(s_max / singular_values[cols - 1])
}

/// QR on the augmented system `[A | b]`; the last column of `R` carries `Qᵀb`
/// and its bottom entry is the residual norm.
/// In-place Householder QR; `R` ends up in the upper triangle.
fn householder_qr(mut aug: Mat<f64>) -> Mat<f64> {
    let (rows, cols_aug) = aug.shape();
    let par = faer::get_global_parallelism();
    let block = recommended_block_size::<f64>(rows, cols_aug);
    let size = rows.min(cols_aug);
    let mut q_coeff = Mat::<f64>::zeros(block, size);
    let mut mem = MemBuffer::new(qr_in_place_scratch::<f64>(rows, cols_aug, block, par, Default::default()));
    qr_in_place(aug.as_mut(), q_coeff.as_mut(), par, MemStack::new(&mut mem), Default::default());
    aug
}

fn solve_qr(aug: Mat<f64>) -> Result<Solution> {
    let (rows, cols_aug) = aug.shape();
    let cols = cols_aug - 1;
    let aug = householder_qr(aug);

    let r = Mat::from_fn(cols, cols, |i, j| if j >= i { aug[(i, j)] } else { 0.0 });
    let qtb: Vec<f64> = (0..cols).map(|i| aug[(i, cols)]).collect();
    let residual_norm = if rows > cols { aug[(cols, cols)].abs() } else { 0.0 };
    drop(aug);

    let sv = r
        .singular_values()
        .map_err(|e| Error::Invalid(format!("SVD of the triangular factor did not converge: {e:?}")))?;
    let condition = rank_check(&sv, rows, cols)?;
    Ok(Solution {
        coeffs: back_substitute(r.as_ref(), &qtb),
        residual_norm,
        condition,
    })
}

fn solve_normal(aug: Mat<f64>) -> Result<Solution> {
    let (rows, cols_aug) = aug.shape();
    let cols = cols_aug - 1;
    let a = aug.get(.., ..cols);
    let b = aug.get(.., cols..);
    let gram: Mat<f64> = a.transpose() * a;
    let rhs: Mat<f64> = a.transpose() * b;
    let eig = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Invalid(format!("eigenvalues of the Gram matrix did not converge: {e:?}")))?;
    // singular values of A are square roots of the Gram eigenvalues
    let mut sv: Vec<f64> = eig.iter().map(|&e| e.max(0.0).sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let condition = rank_check(&sv, rows, cols)?;
    let llt = gram
        .llt(Side::Lower)
        .map_err(|_| Error::Underdetermined { rank: 0, unknowns: cols })?;
    use faer::linalg::solvers::Solve;
    let x = llt.solve(&rhs);
    let coeffs: Vec<f64> = (0..cols).map(|i| x[(i, 0)]).collect();
    let residual_norm = (0..rows)
        .map(|k| {
            let pred: f64 = (0..cols).map(|j| a[(k, j)] * coeffs[j]).sum();
            (pred - b[(k, 0)]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(Solution {
        coeffs,
        residual_norm,
        condition,
    })
}

/// Fits with default options (QR solver, 4 GiB budget).
pub fn fit(config: &BasisConfig, mags: &MagnitudeSet, spec: &WeightSpec) -> Result<CoefficientSet> {
    fit_with(config, mags, spec, &FitOptions::default())
}

/// Weighted system `[√W X | √W h]` over the nonzero-weight samples.
fn weighted_system(config: &BasisConfig, mags: &MagnitudeSet, spec: &WeightSpec, options: &FitOptions) -> Result<Mat<f64>> {
    if (config.fs() - mags.fs).abs() > 1e-9 * mags.fs {
        return Err(Error::Mismatch(format!(
            "basis sampling frequency {} Hz differs from data sampling frequency {} Hz",
            config.fs(),
            mags.fs
        )));
    }
    spec.validate(config.fs())?;

    let weights: Vec<f64> = mags.freqs.iter().map(|&f| weight(f, spec, config.fs())).collect();
    let mut samples = Vec::new();
    let mut scales = Vec::new();
    let mut targets = Vec::new();
    for (d, dir) in mags.directions.iter().enumerate() {
        for (b, &f) in mags.freqs.iter().enumerate() {
            if weights[b] > 0.0 {
                samples.push(SamplePoint::at(*dir, f));
                let sw = weights[b].sqrt();
                scales.push(sw);
                targets.push(sw * mags.get(d, b));
            }
        }
    }
    check_samples(config, &samples)?;

    let ev = BasisEvaluator::new(config);
    let n = ev.len();
    check_budget(samples.len(), n + 1, options.mem_budget_bytes)?;
    if samples.len() < n {
        return Err(Error::Underdetermined {
            rank: samples.len(),
            unknowns: n,
        });
    }

    let mut aug = build_rows(&ev, &samples, &scales, 1);
    for (k, &t) in targets.iter().enumerate() {
        aug[(k, n)] = t;
    }
    Ok(aug)
}

pub fn fit_with(config: &BasisConfig, mags: &MagnitudeSet, spec: &WeightSpec, options: &FitOptions) -> Result<CoefficientSet> {
    let aug = weighted_system(config, mags, spec, options)?;
    let n = aug.ncols() - 1;
    let rows_used = aug.nrows();
    let solution = match options.solver {
        Solver::Qr => solve_qr(aug)?,
        Solver::NormalEquations => solve_normal(aug)?,
    };
    log::debug!(
        "fit {} L={} eta={}: N={n}, rows={rows_used}, residual={:.3e}, cond={:.3e}",
        config.family(),
        config.max_order(),
        config.eta(),
        solution.residual_norm,
        solution.condition
    );
    Ok(CoefficientSet {
        config: *config,
        ear: mags.ear,
        subject_id: mags.subject_id.clone(),
        coeffs: solution.coeffs,
        fit_metadata: FitMetadata {
            weight: *spec,
            residual_norm: solution.residual_norm,
            condition_estimate: solution.condition,
            rows_used,
        },
    })
}

/// Norm of the weighted least-squares residual `‖√W (X α̂ − h)‖` without
/// solving for `α̂`, so it is defined even when the basis is numerically rank
/// deficient on the grid (the projection is still well posed).
pub fn weighted_residual(config: &BasisConfig, mags: &MagnitudeSet, spec: &WeightSpec, options: &FitOptions) -> Result<f64> {
    let aug = weighted_system(config, mags, spec, options)?;
    let (rows, cols) = (aug.nrows(), aug.ncols() - 1);
    let r = householder_qr(aug);
    Ok(if rows > cols { r[(cols, cols)].abs() } else { 0.0 })
}

/// `Ĥ(φ, θ, f) = Σ α_j X_j(φ, θ, f)` at every query; raw values, no clamping.
pub fn decode(cs: &CoefficientSet, queries: &[SamplePoint]) -> Result<Vec<f64>> {
    check_samples(&cs.config, queries)?;
    let ev = BasisEvaluator::new(&cs.config);
    if ev.len() != cs.coeffs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a basis of {} functions",
            cs.coeffs.len(),
            ev.len()
        )));
    }
    Ok(queries
        .par_iter()
        .map_init(
            || vec![0.0; ev.len()],
            |row, q| {
                ev.combine_into(&ev.sh_values(q.phi, q.theta), &ev.freq_values(q.f), row);
                row.iter().zip(&cs.coeffs).map(|(x, a)| x * a).sum()
            },
        )
        .collect())
}

/// Decodes on the full direction × frequency grid of `mags`, row-major like its magnitudes.
pub fn decode_grid(cs: &CoefficientSet, mags: &MagnitudeSet) -> Result<Vec<f64>> {
    let queries: Vec<SamplePoint> = mags
        .directions
        .iter()
        .flat_map(|d| mags.freqs.iter().map(move |&f| SamplePoint::at(*d, f)))
        .collect();
    decode(cs, &queries)
}

pub const COEFFICIENT_FORMAT_VERSION: u32 = 1;
pub const COEFFICIENT_ORDERING: &str = "lex(n,l,m)";

#[derive(Debug, Serialize, Deserialize)]
struct FitSummary {
    residual_norm: f64,
    condition_estimate: f64,
    rows_used: usize,
}

/// On-disk coefficient document.
#[derive(Debug, Serialize, Deserialize)]
struct CoefficientFile {
    format_version: u32,
    subject_id: String,
    ear: Ear,
    family: BasisFamily,
    #[serde(rename = "L")]
    max_order: u32,
    eta: f64,
    fs_hz: f64,
    weight: WeightSpec,
    ordering: String,
    coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitSummary>,
}

impl CoefficientSet {
    pub fn to_json(&self) -> Result<String> {
        let file = CoefficientFile {
            format_version: COEFFICIENT_FORMAT_VERSION,
            subject_id: self.subject_id.clone(),
            ear: self.ear,
            family: self.config.family(),
            max_order: self.config.max_order(),
            eta: self.config.eta(),
            fs_hz: self.config.fs(),
            weight: self.fit_metadata.weight,
            ordering: COEFFICIENT_ORDERING.to_string(),
            coeffs: self.coeffs.clone(),
            fit: Some(FitSummary {
                residual_norm: self.fit_metadata.residual_norm,
                condition_estimate: self.fit_metadata.condition_estimate,
                rows_used: self.fit_metadata.rows_used,
            }),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parse = |reason: String| Error::Parse {
            path: "<coefficients>".into(),
            reason,
        };
        let file: CoefficientFile = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
        if file.format_version != COEFFICIENT_FORMAT_VERSION {
            return Err(parse(format!("unsupported format_version {}", file.format_version)));
        }
        if file.ordering != COEFFICIENT_ORDERING {
            return Err(parse(format!("unsupported ordering '{}'", file.ordering)));
        }
        let config = BasisConfig::new(file.family, file.max_order, file.eta, file.fs_hz)?;
        if file.coeffs.len() != config.num_functions() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients but the {} basis with L={}, eta={} has {} functions",
                file.coeffs.len(),
                file.family,
                file.max_order,
                file.eta,
                config.num_functions()
            )));
        }
        let fit = file.fit.unwrap_or(FitSummary {
            residual_norm: f64::NAN,
            condition_estimate: f64::NAN,
            rows_used: 0,
        });
        Ok(Self {
            config,
            ear: file.ear,
            subject_id: file.subject_id,
            coeffs: file.coeffs,
            fit_metadata: FitMetadata {
                weight: file.weight,
                residual_norm: fit.residual_norm,
                condition_estimate: fit.condition_estimate,
                rows_used: fit.rows_used,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Parse {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }
}
