//! HRIR ingestion and magnitude spectra.
//!
//! A dataset on disk is a JSON manifest plus two CSV matrices:
//!
//! ```json
//! {
//!   "subject_id": "pp55",
//!   "fs_hz": 44100,
//!   "directions": [[0.0, 90.0], [0.0, 80.0], ...],
//!   "left_csv": "left.csv",
//!   "right_csv": "right.csv"
//! }
//! ```
//!
//! Directions are `[azimuth_deg, elevation_deg]` with elevation running from
//! −90 (bottom) to +90 (top). CSV paths are resolved relative to the manifest.
//! Each CSV holds one impulse response per row, no header.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left,
    Right,
}

impl Ear {
    pub fn name(self) -> &'static str {
        match self {
            Ear::Left => "left",
            Ear::Right => "right",
        }
    }
}

impl fmt::Display for Ear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ear {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Ear::Left),
            "right" | "r" => Ok(Ear::Right),
            other => Err(Error::Invalid(format!("unknown ear '{other}' (expected left or right)"))),
        }
    }
}

/// Direction on the unit sphere; inclination 0 is the zenith.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub azimuth: f64,
    pub inclination: f64,
}

impl Direction {
    pub fn new(azimuth: f64, inclination: f64) -> Self {
        Self { azimuth, inclination }
    }

    /// From measurement-style degrees (elevation +90 at the top).
    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth: azimuth_deg.to_radians().rem_euclid(TAU),
            inclination: PI / 2.0 - elevation_deg.to_radians(),
        }
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        (PI / 2.0 - self.inclination).to_degrees()
    }
}

/// Impulse responses of both ears on a shared direction grid, `D × T` each, row-major.
#[derive(Debug, Clone)]
pub struct HrirSet {
    pub subject_id: String,
    pub fs: f64,
    pub directions: Vec<Direction>,
    pub taps: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl HrirSet {
    pub fn new(
        subject_id: impl Into<String>,
        fs: f64,
        directions: Vec<Direction>,
        taps: usize,
        left: Vec<f64>,
        right: Vec<f64>,
    ) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::Invalid(format!("sampling frequency must be positive, got {fs}")));
        }
        if taps == 0 || taps % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "impulse responses need an even, non-zero length, got {taps}"
            )));
        }
        let expected = directions.len() * taps;
        for (ear, data) in [("left", &left), ("right", &right)] {
            if data.len() != expected {
                return Err(Error::DimensionMismatch(format!(
                    "{ear} ear holds {} samples, expected {} directions x {taps} taps",
                    data.len(),
                    directions.len()
                )));
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            fs,
            directions,
            taps,
            left,
            right,
        })
    }

    pub fn ear(&self, ear: Ear) -> &[f64] {
        match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        }
    }
}

/// One-sided linear magnitude spectra of one ear, `D × F`, row-major.
#[derive(Debug, Clone)]
pub struct MagnitudeSet {
    pub subject_id: String,
    pub ear: Ear,
    pub fs: f64,
    pub directions: Vec<Direction>,
    pub freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl MagnitudeSet {
    pub fn new(
        subject_id: impl Into<String>,
        ear: Ear,
        fs: f64,
        directions: Vec<Direction>,
        freqs: Vec<f64>,
        magnitudes: Vec<f64>,
    ) -> Result<Self> {
        if magnitudes.len() != directions.len() * freqs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} magnitudes for {} directions x {} frequencies",
                magnitudes.len(),
                directions.len(),
                freqs.len()
            )));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("frequencies must be strictly increasing".into()));
        }
        if freqs.iter().any(|&f| !(f >= 0.0 && f <= fs / 2.0)) {
            return Err(Error::Invalid(format!("frequencies must lie in [0, {}] Hz", fs / 2.0)));
        }
        if magnitudes.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Invalid("magnitudes must be finite and non-negative".into()));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            ear,
            fs,
            directions,
            freqs,
            magnitudes,
        })
    }

    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn num_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn get(&self, dir: usize, bin: usize) -> f64 {
        self.magnitudes[dir * self.freqs.len() + bin]
    }

    pub fn spectrum(&self, dir: usize) -> &[f64] {
        let f = self.freqs.len();
        &self.magnitudes[dir * f..(dir + 1) * f]
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    subject_id: String,
    fs_hz: f64,
    directions: Vec<[f64; 2]>,
    left_csv: PathBuf,
    right_csv: PathBuf,
}

fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = 0;
    let mut cols = None;
    let mut data = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "{}: row {} has {} columns, expected {c}",
                    path.display(),
                    i + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                reason: format!("row {}: '{field}' is not a number", i + 1),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), data))
}

/// Reads a manifest and both ear matrices.
pub fn load_hrir(manifest_path: impl AsRef<Path>) -> Result<HrirSet> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|source| Error::MissingFile {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let parse_err = |reason: String| Error::Parse {
        path: manifest_path.to_path_buf(),
        reason,
    };
    if manifest.directions.is_empty() {
        return Err(parse_err("directions list is empty".into()));
    }
    for (i, &[az, el]) in manifest.directions.iter().enumerate() {
        if !az.is_finite() || !(-90.0..=90.0).contains(&el) {
            return Err(parse_err(format!(
                "direction {i}: azimuth must be finite and elevation within [-90, 90], got [{az}, {el}]"
            )));
        }
    }
    if !(manifest.fs_hz > 0.0) {
        return Err(parse_err(format!("fs_hz must be positive, got {}", manifest.fs_hz)));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let (l_rows, l_cols, left) = read_matrix(&base.join(&manifest.left_csv))?;
    let (r_rows, r_cols, right) = read_matrix(&base.join(&manifest.right_csv))?;
    if (l_rows, l_cols) != (r_rows, r_cols) {
        return Err(Error::DimensionMismatch(format!(
            "left matrix is {l_rows}x{l_cols} but right matrix is {r_rows}x{r_cols}"
        )));
    }
    if l_rows != manifest.directions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} directions but {l_rows} impulse responses",
            manifest.directions.len()
        )));
    }
    let directions = manifest
        .directions
        .iter()
        .map(|&[az, el]| Direction::from_degrees(az, el))
        .collect();
    HrirSet::new(manifest.subject_id, manifest.fs_hz, directions, l_cols, left, right)
}

/// `|DFT|` of every impulse response of one ear, bins `0..=T/2` at `k·fs/T`.
pub fn magnitude_spectra(hrirs: &HrirSet, ear: Ear) -> MagnitudeSet {
    let taps = hrirs.taps;
    let bins = taps / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(taps);
    let mut buffer = vec![Complex::new(0.0, 0.0); taps];
    let mut magnitudes = Vec::with_capacity(hrirs.directions.len() * bins);
    for ir in hrirs.ear(ear).chunks_exact(taps) {
        for (b, &x) in buffer.iter_mut().zip(ir) {
            *b = Complex::new(x, 0.0);
        }
        fft.process(&mut buffer);
        magnitudes.extend(buffer[..bins].iter().map(|c| c.norm()));
    }
    let freqs = (0..bins).map(|k| k as f64 * hrirs.fs / taps as f64).collect();
    MagnitudeSet {
        subject_id: hrirs.subject_id.clone(),
        ear,
        fs: hrirs.fs,
        directions: hrirs.directions.clone(),
        freqs,
        magnitudes,
    }
}

/// Left–right mirror about the median plane: `φ → (2π − φ) mod 2π`.
pub fn flip_right_ear(dirs: &[Direction]) -> Vec<Direction> {
    dirs.iter()
        .map(|d| Direction::new((TAU - d.azimuth).rem_euclid(TAU), d.inclination))
        .collect()
}

/// `true` where `f_l ≤ f ≤ f_u`.
pub fn hearing_range_mask(freqs: &[f64], f_l: f64, f_u: f64) -> Vec<bool> {
    freqs.iter().map(|&f| f >= f_l && f <= f_u).collect()
}
