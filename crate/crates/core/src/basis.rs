//! The four 4D basis families, their index sets and pointwise evaluation.
//!
//! Every family pairs a real spherical harmonic `Y_l^m(φ, θ)` with a 1D
//! function of frequency:
//!
//! | family   | frequency factor                                      |
//! |----------|-------------------------------------------------------|
//! | `Hsh`    | `N_nl sin^l ψ C_{n-l}^{l+1}(cos ψ)`, `ψ = π f / fs`   |
//! | `Shfs`   | `cos(π n f / fs)`                                     |
//! | `Shfbs`  | `1` for `n = 0`, else `J_0(μ_n 2f/fs)`                |
//! | `Shrfbs` | `1` for `n = 0`, else `J_0(μ_n (1 - 2f/fs))`          |
//!
//! Coefficients are always ordered lexicographically by `(n, l, m)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special_functions::{gegenbauer_sequence, j0_root_unchecked, j0_unchecked, ln_factorial, real_sh_table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    /// Hyperspherical harmonics on the 3-sphere.
    Hsh,
    /// Spherical harmonics × cosine Fourier series.
    Shfs,
    /// Spherical harmonics × Fourier–Bessel series.
    Shfbs,
    /// Spherical harmonics × reversed Fourier–Bessel series.
    Shrfbs,
}

impl BasisFamily {
    pub const ALL: [BasisFamily; 4] = [Self::Hsh, Self::Shfs, Self::Shfbs, Self::Shrfbs];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hsh => "hsh",
            Self::Shfs => "shfs",
            Self::Shfbs => "shfbs",
            Self::Shrfbs => "shrfbs",
        }
    }

    /// True for the three spherindrical (SH × 1D series) families.
    pub fn is_spherindrical(self) -> bool {
        !matches!(self, Self::Hsh)
    }
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hsh" => Ok(Self::Hsh),
            "shfs" => Ok(Self::Shfs),
            "shfbs" => Ok(Self::Shfbs),
            "shrfbs" => Ok(Self::Shrfbs),
            other => Err(Error::Invalid(format!(
                "unknown basis family '{other}' (expected hsh, shfs, shfbs or shrfbs)"
            ))),
        }
    }
}

/// One basis function `(n, l, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisIndex {
    pub n: u32,
    pub l: u32,
    pub m: i32,
}

impl BasisIndex {
    pub const fn new(n: u32, l: u32, m: i32) -> Self {
        Self { n, l, m }
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.n, self.l, self.m)
    }
}

/// Converts a frequency approximation order to half steps, rejecting anything
/// that is not a non-negative multiple of 0.5.
fn eta_to_halves(eta: f64) -> Result<u32> {
    let twice = 2.0 * eta;
    if !(eta >= 0.0) || (twice - twice.round()).abs() > 1e-9 || twice > u32::MAX as f64 {
        return Err(Error::Invalid(format!(
            "frequency approximation order must be a non-negative multiple of 0.5, got {eta}"
        )));
    }
    Ok(twice.round() as u32)
}

/// Family, max SH order `L`, frequency approximation order `η` and sampling
/// frequency; fully determines a basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisConfig {
    family: BasisFamily,
    max_order: u32,
    eta_halves: u32,
    fs: f64,
}

impl BasisConfig {
    /// `eta` may take half values for [`BasisFamily::Hsh`] only.
    pub fn new(family: BasisFamily, max_order: u32, eta: f64, fs: f64) -> Result<Self> {
        let eta_halves = eta_to_halves(eta)?;
        if family.is_spherindrical() && eta_halves % 2 != 0 {
            return Err(Error::Invalid(format!(
                "{family} needs an integer frequency approximation order, got {eta}"
            )));
        }
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::Invalid(format!("sampling frequency must be positive, got {fs}")));
        }
        Ok(Self {
            family,
            max_order,
            eta_halves,
            fs,
        })
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    /// Max SH order `L` (`l_max = m_max = L`).
    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn eta(&self) -> f64 {
        self.eta_halves as f64 / 2.0
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Largest `n`: `2η` for HSH, `η` otherwise.
    pub fn n_max(&self) -> u32 {
        match self.family {
            BasisFamily::Hsh => self.eta_halves,
            _ => self.eta_halves / 2,
        }
    }

    pub fn num_functions(&self) -> usize {
        match self.family {
            BasisFamily::Hsh => count_hsh_halves(self.max_order, self.eta_halves),
            _ => count_scs(self.max_order, self.eta_halves / 2),
        }
    }

    /// Checks that `index` belongs to this basis.
    pub fn check_index(&self, index: BasisIndex) -> Result<()> {
        let BasisIndex { n, l, m } = index;
        let ok = n <= self.n_max()
            && l <= self.max_order
            && m.unsigned_abs() <= l
            && match self.family {
                BasisFamily::Hsh => l <= n && (n - l) % 2 == 0,
                _ => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "index {index} is not part of the {} basis with L={}, eta={}",
                self.family,
                self.max_order,
                self.eta()
            )))
        }
    }

    pub(crate) fn check_frequency(&self, f: f64) -> Result<()> {
        if !(f >= 0.0 && f <= self.fs / 2.0) {
            return Err(Error::domain(format!(
                "frequency {f} Hz outside [0, {}] Hz",
                self.fs / 2.0
            )));
        }
        Ok(())
    }
}

/// Linear frequency-to-hyperangle mapping `ψ = π f / fs`: DC at the hyperpole,
/// Nyquist on the hyperequator.
pub fn psi_of_f(f: f64, fs: f64) -> Result<f64> {
    if !(fs > 0.0) {
        return Err(Error::domain(format!("sampling frequency must be positive, got {fs}")));
    }
    if !(f >= 0.0 && f <= fs / 2.0) {
        return Err(Error::domain(format!("frequency {f} Hz outside [0, {}] Hz", fs / 2.0)));
    }
    Ok(PI * f / fs)
}

/// Number of functions in a spherindrical basis: `(L+1)²(η+1)`.
pub fn count_scs(max_order: u32, eta: u32) -> usize {
    let w = max_order as usize + 1;
    w * w * (eta as usize + 1)
}

fn count_hsh_halves(max_order: u32, n_max: u32) -> usize {
    (0..=n_max)
        .map(|n| {
            (0..=n.min(max_order))
                .filter(|l| (n - l) % 2 == 0)
                .map(|l| 2 * l as usize + 1)
                .sum::<usize>()
        })
        .sum()
}

/// Number of hyperequator-symmetric HSHs with `n ≤ 2η`, `l ≤ min(n, L)`.
pub fn count_hsh(max_order: u32, eta: f64) -> Result<usize> {
    Ok(count_hsh_halves(max_order, eta_to_halves(eta)?))
}

/// HSH frequency approximation order (in half steps) whose function count is
/// closest to the spherindrical count at `(L, η_scs)`; ties go to the larger order.
pub fn matched_eta(max_order: u32, eta_scs: u32) -> f64 {
    let target = count_scs(max_order, eta_scs) as i64;
    let mut best = (0u32, i64::MAX);
    let mut halves = 0u32;
    loop {
        let count = count_hsh_halves(max_order, halves) as i64;
        let diff = (count - target).abs();
        if diff <= best.1 {
            best = (halves, diff);
        }
        // counts are non-decreasing in η, so once past the target nothing closer follows
        if count > target {
            break;
        }
        halves += 1;
    }
    best.0 as f64 / 2.0
}

/// All indices of a basis, lexicographically ordered by `(n, l, m)`.
pub fn index_set(config: &BasisConfig) -> Vec<BasisIndex> {
    let l_cap = config.max_order;
    let mut out = Vec::with_capacity(config.num_functions());
    for n in 0..=config.n_max() {
        let l_top = match config.family {
            BasisFamily::Hsh => n.min(l_cap),
            _ => l_cap,
        };
        for l in 0..=l_top {
            if config.family == BasisFamily::Hsh && (n - l) % 2 != 0 {
                continue;
            }
            for m in -(l as i32)..=(l as i32) {
                out.push(BasisIndex::new(n, l, m));
            }
        }
    }
    out
}

/// Orthonormalizing prefactor of the real HSH `Z_nl^m`, computed in log space.
///
/// `2^l l! sqrt(2(n+1)(n-l)! / (π (n+l+1)!))`
pub fn hsh_normalization(n: u32, l: u32) -> f64 {
    let ln = l as f64 * std::f64::consts::LN_2
        + ln_factorial(l)
        + 0.5
            * (std::f64::consts::LN_2 + ((n + 1) as f64).ln() + ln_factorial(n - l)
                - PI.ln()
                - ln_factorial(n + l + 1));
    ln.exp()
}

/// Evaluates one basis function at `(φ, θ, f)`.
pub fn eval_basis(config: &BasisConfig, index: BasisIndex, phi: f64, theta: f64, f: f64) -> Result<f64> {
    config.check_index(index)?;
    config.check_frequency(f)?;
    let BasisIndex { n, l, m } = index;
    let y = crate::special_functions::real_sh(l as i32, m, phi, theta)?;
    let radial = match config.family {
        BasisFamily::Hsh => {
            let psi = PI * f / config.fs;
            let c = gegenbauer_sequence(n - l, l as f64 + 1.0, psi.cos())[(n - l) as usize];
            hsh_normalization(n, l) * psi.sin().powi(l as i32) * c
        }
        BasisFamily::Shfs => (PI * n as f64 * f / config.fs).cos(),
        BasisFamily::Shfbs if n == 0 => 1.0,
        BasisFamily::Shfbs => j0_unchecked(j0_root_unchecked(n) * 2.0 * f / config.fs),
        BasisFamily::Shrfbs if n == 0 => 1.0,
        BasisFamily::Shrfbs => j0_unchecked(j0_root_unchecked(n) * (1.0 - 2.0 * f / config.fs)),
    };
    Ok(y * radial)
}

/// Evaluates a whole basis at many points, sharing spherical-harmonic and
/// frequency-factor work between the columns that reuse them.
#[derive(Debug, Clone)]
pub struct BasisEvaluator {
    config: BasisConfig,
    indices: Vec<BasisIndex>,
    /// per column: position in the SH table and in the frequency-factor table
    sh_slot: Vec<usize>,
    freq_slot: Vec<usize>,
    /// (n, l) pairs of the frequency-factor table (l is 0 for spherindrical families)
    freq_terms: Vec<(u32, u32)>,
    hsh_norms: Vec<f64>,
    roots: Vec<f64>,
}

impl BasisEvaluator {
    pub fn new(config: &BasisConfig) -> Self {
        let indices = index_set(config);
        let mut freq_terms: Vec<(u32, u32)> = Vec::new();
        let mut freq_slot = Vec::with_capacity(indices.len());
        let mut sh_slot = Vec::with_capacity(indices.len());
        for idx in &indices {
            let key = match config.family {
                BasisFamily::Hsh => (idx.n, idx.l),
                _ => (idx.n, 0),
            };
            // indices are sorted by (n, l), so a repeated key is always the last one pushed
            if freq_terms.last() != Some(&key) {
                freq_terms.push(key);
            }
            freq_slot.push(freq_terms.len() - 1);
            sh_slot.push(((idx.l * idx.l + idx.l) as i64 + idx.m as i64) as usize);
        }
        let hsh_norms = match config.family {
            BasisFamily::Hsh => freq_terms.iter().map(|&(n, l)| hsh_normalization(n, l)).collect(),
            _ => Vec::new(),
        };
        let roots = match config.family {
            BasisFamily::Shfbs | BasisFamily::Shrfbs => {
                std::iter::once(0.0).chain(crate::special_functions::bessel_j0_roots(config.n_max())).collect()
            }
            _ => Vec::new(),
        };
        Self {
            config: *config,
            indices,
            sh_slot,
            freq_slot,
            freq_terms,
            hsh_norms,
            roots,
        }
    }

    pub fn config(&self) -> &BasisConfig {
        &self.config
    }

    pub fn indices(&self) -> &[BasisIndex] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// SH values needed by this basis at one direction.
    pub fn sh_values(&self, phi: f64, theta: f64) -> Vec<f64> {
        real_sh_table(self.config.max_order, phi, theta)
    }

    /// Frequency factors needed by this basis at one frequency (no range check).
    pub fn freq_values(&self, f: f64) -> Vec<f64> {
        let fs = self.config.fs;
        match self.config.family {
            BasisFamily::Hsh => {
                let psi = PI * f / fs;
                let (s, c) = psi.sin_cos();
                let mut out = Vec::with_capacity(self.freq_terms.len());
                let mut cache: Option<(u32, Vec<f64>)> = None;
                for (k, &(n, l)) in self.freq_terms.iter().enumerate() {
                    let n_top = self.config.n_max();
                    if cache.as_ref().map(|(cl, _)| *cl) != Some(l) {
                        cache = Some((l, gegenbauer_sequence(n_top - l, l as f64 + 1.0, c)));
                    }
                    let seq = &cache.as_ref().unwrap().1;
                    out.push(self.hsh_norms[k] * s.powi(l as i32) * seq[(n - l) as usize]);
                }
                out
            }
            BasisFamily::Shfs => self
                .freq_terms
                .iter()
                .map(|&(n, _)| (PI * n as f64 * f / fs).cos())
                .collect(),
            BasisFamily::Shfbs => self
                .freq_terms
                .iter()
                .map(|&(n, _)| if n == 0 { 1.0 } else { j0_unchecked(self.roots[n as usize] * 2.0 * f / fs) })
                .collect(),
            BasisFamily::Shrfbs => self
                .freq_terms
                .iter()
                .map(|&(n, _)| {
                    if n == 0 {
                        1.0
                    } else {
                        j0_unchecked(self.roots[n as usize] * (1.0 - 2.0 * f / fs))
                    }
                })
                .collect(),
        }
    }

    /// Combines precomputed SH and frequency tables into one row.
    pub fn combine_into(&self, sh: &[f64], freq: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = sh[self.sh_slot[j]] * freq[self.freq_slot[j]];
        }
    }

    /// Values of every basis function at one point, in index-set order.
    pub fn row(&self, phi: f64, theta: f64, f: f64) -> Result<Vec<f64>> {
        self.config.check_frequency(f)?;
        let mut out = vec![0.0; self.len()];
        self.combine_into(&self.sh_values(phi, theta), &self.freq_values(f), &mut out);
        Ok(out)
    }
}
