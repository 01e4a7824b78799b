//! Scalar special functions the 4D bases are built from.
//!
//! * associated Legendre functions `P_l^m(x)`, Condon–Shortley phase included,
//! * real spherical harmonics `Y_l^m(φ, θ)` (orthonormal on the unit sphere),
//! * Gegenbauer polynomials `C_ν^α(x)` from the three-term recurrence,
//! * the Bessel function `J_0` and its positive roots `μ_n`.
//!
//! Legendre values are produced in fully normalized form and only scaled back
//! to the unnormalized convention at the end, so degrees well past 32 never
//! touch a factorial directly.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// `ln(k!)` by direct summation; exact enough for the index ranges in use (k < 400).
pub(crate) fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Fully normalized associated Legendre values
/// `N_l^m P_l^m(x)` with `N_l^m = sqrt((2l+1)/(4π) (l-m)!/(l+m)!)`, for a fixed
/// order `m` and all degrees `m..=l_max`. Element `k` holds degree `m + k`.
fn normalized_legendre_column(l_max: u32, m: u32, x: f64) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    // diagonal seed: Ȳ_m^m
    let mut diag = 1.0 / (4.0 * PI).sqrt();
    for k in 1..=m {
        let k = k as f64;
        diag *= -((2.0 * k + 1.0) / (2.0 * k)).sqrt() * s;
    }
    let mut out = Vec::with_capacity((l_max - m + 1) as usize);
    out.push(diag);
    if l_max == m {
        return out;
    }
    out.push(x * (2.0 * m as f64 + 3.0).sqrt() * diag);
    let mf = m as f64;
    for l in (m + 2)..=l_max {
        let lf = l as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
        let k = (l - m) as usize;
        let next = a * (x * out[k - 1] - b * out[k - 2]);
        out.push(next);
    }
    out
}

fn sh_normalization(l: u32, m: u32) -> f64 {
    let ln_ratio = ln_factorial(l - m) - ln_factorial(l + m);
    ((2.0 * l as f64 + 1.0) / (4.0 * PI)).sqrt() * (0.5 * ln_ratio).exp()
}

/// Associated Legendre function `P_l^m(x)` with the Condon–Shortley phase `(-1)^m`.
pub fn assoc_legendre(l: i32, m: i32, x: f64) -> Result<f64> {
    if l < 0 || m < 0 || m > l {
        return Err(Error::domain(format!(
            "assoc_legendre needs 0 <= m <= l, got l={l}, m={m}"
        )));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::domain(format!("assoc_legendre needs |x| <= 1, got {x}")));
    }
    let (l, m) = (l as u32, m as u32);
    let column = normalized_legendre_column(l, m, x);
    Ok(column[(l - m) as usize] / sh_normalization(l, m))
}

/// Real spherical harmonic `Y_l^m(φ, θ)`: cosine branch for `m > 0`, sine branch
/// for `m < 0`, both scaled by √2 so the set is orthonormal over the sphere.
pub fn real_sh(l: i32, m: i32, phi: f64, theta: f64) -> Result<f64> {
    if l < 0 || m.abs() > l {
        return Err(Error::domain(format!(
            "real_sh needs |m| <= l, got l={l}, m={m}"
        )));
    }
    let am = m.unsigned_abs();
    let column = normalized_legendre_column(l as u32, am, theta.cos().clamp(-1.0, 1.0));
    let p = column[(l as u32 - am) as usize];
    Ok(match m {
        0 => p,
        m if m > 0 => std::f64::consts::SQRT_2 * p * (m as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * p * (am as f64 * phi).sin(),
    })
}

/// All real spherical harmonics up to degree `l_max` at one direction, in
/// `(l, m)` order: index `l*l + l + m`.
pub fn real_sh_table(l_max: u32, phi: f64, theta: f64) -> Vec<f64> {
    let x = theta.cos().clamp(-1.0, 1.0);
    let width = (l_max + 1) as usize;
    let mut out = vec![0.0; width * width];
    for m in 0..=l_max {
        let column = normalized_legendre_column(l_max, m, x);
        let (cos_m, sin_m) = if m == 0 {
            (1.0, 0.0)
        } else {
            let arg = m as f64 * phi;
            (
                std::f64::consts::SQRT_2 * arg.cos(),
                std::f64::consts::SQRT_2 * arg.sin(),
            )
        };
        for l in m..=l_max {
            let p = column[(l - m) as usize];
            let base = (l * l + l) as usize;
            if m == 0 {
                out[base] = p;
            } else {
                out[base + m as usize] = p * cos_m;
                out[base - m as usize] = p * sin_m;
            }
        }
    }
    out
}

/// Gegenbauer polynomial `C_ν^α(x)` by the forward three-term recurrence.
pub fn gegenbauer(nu: i32, alpha: f64, x: f64) -> Result<f64> {
    if nu < 0 {
        return Err(Error::domain(format!("gegenbauer needs nu >= 0, got {nu}")));
    }
    Ok(*gegenbauer_sequence(nu as u32, alpha, x).last().unwrap())
}

/// `C_0^α(x) ..= C_ν_max^α(x)`.
pub fn gegenbauer_sequence(nu_max: u32, alpha: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nu_max as usize + 1);
    out.push(1.0);
    if nu_max == 0 {
        return out;
    }
    out.push(2.0 * alpha * x);
    for nu in 2..=nu_max {
        let k = nu as usize;
        let nf = nu as f64;
        let next = (2.0 * x * (nf + alpha - 1.0) * out[k - 1] - (nf + 2.0 * alpha - 2.0) * out[k - 2]) / nf;
        out.push(next);
    }
    out
}

const SERIES_LIMIT: f64 = 8.0;
const ASYMPTOTIC_LIMIT: f64 = 40.0;

/// Bessel function of the first kind, order zero.
///
/// Power series below 8, Miller's backward recurrence (normalized by
/// `J_0 + 2 Σ J_2k = 1`) up to 40, Hankel asymptotic expansion above.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("bessel_j0 needs x >= 0, got {x}")));
    }
    Ok(j0_unchecked(x))
}

pub(crate) fn j0_unchecked(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        j0_series(x)
    } else if x < ASYMPTOTIC_LIMIT {
        j0_miller(x)
    } else {
        j0_asymptotic(x)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn j0_miller(x: f64) -> f64 {
    let mut start = (x as usize) + 40;
    if start % 2 == 1 {
        start += 1;
    }
    let mut next = 0.0; // J_{k+1}
    let mut current = 1e-300; // J_k
    let mut norm = 0.0;
    let mut j0 = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * current - next;
        next = current;
        current = prev; // now J_{k-1}
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * current;
        }
        if k - 1 == 0 {
            j0 = current;
        }
        if current.abs() > 1e250 {
            next *= 1e-250;
            current *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += j0;
    j0 / norm
}

fn j0_asymptotic(x: f64) -> f64 {
    // a_k = (-1)^k (1·9·25·…·(2k-1)²) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut xpow = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let kf = k as f64;
            a *= -(2.0 * kf - 1.0) * (2.0 * kf - 1.0) / (8.0 * kf);
            xpow *= x;
        }
        let term = a / xpow;
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// n-th positive root `μ_n` of `J_0` (1-based), by bisection around `(n - 1/4)π`.
pub fn bessel_j0_root(n: i32) -> Result<f64> {
    if n < 1 {
        return Err(Error::domain(format!("bessel_j0_root needs n >= 1, got {n}")));
    }
    Ok(j0_root_unchecked(n as u32))
}

pub(crate) fn j0_root_unchecked(n: u32) -> f64 {
    let guess = (n as f64 - 0.25) * PI;
    let mut lo = guess - 0.5;
    let mut hi = guess + 0.5;
    let mut f_lo = j0_unchecked(lo);
    debug_assert!(f_lo * j0_unchecked(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = j0_unchecked(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `μ_1 ..= μ_count`.
pub fn bessel_j0_roots(count: u32) -> Vec<f64> {
    (1..=count).map(j0_root_unchecked).collect()
}
