//! Closed-form constants: kernel normalization, the sharp Hardy constant,
//! the exponent map and its inverse, and the critical Sobolev exponent.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::quadrature::QuadratureSettings;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function on the reals (Lanczos, g = 7, reflection below 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

fn check_order(d: usize, s: f64) -> Result<()> {
    if d == 0 {
        return param("dimension must be positive");
    }
    if !(s > 0.0 && s < 1.0) {
        return param(format!("s = {s} outside (0,1)"));
    }
    Ok(())
}

fn check_subcritical(d: usize, s: f64) -> Result<()> {
    check_order(d, s)?;
    if (d as f64) <= 2.0 * s {
        return param(format!("d > 2s violated (d = {d}, s = {s})"));
    }
    Ok(())
}

/// a_{d,s} = 2^{2s} s Γ((d+2s)/2) / (π^{d/2} Γ(1−s)).
///
/// Only the order range and d ∈ {1,2} are checked here, so the formula can
/// be evaluated at the boundary case d = 2s as a check; `FracParams::new`
/// enforces d > 2s.
pub fn normalization_constant(d: usize, s: f64) -> Result<f64> {
    check_order(d, s)?;
    if d > 2 {
        return param(format!("dimension {d} unsupported (1 or 2)"));
    }
    let df = d as f64;
    Ok(2f64.powf(2.0 * s) * s * gamma((df + 2.0 * s) / 2.0) / (PI.powf(df / 2.0) * gamma(1.0 - s)))
}

/// Sharp whole-space Hardy constant Λ = 2^{2s} Γ²((d+2s)/4) / Γ²((d−2s)/4).
pub fn hardy_constant(d: usize, s: f64) -> Result<f64> {
    lambda_alpha(d, s, 0.0)
}

/// (d − 2s)/2, the right end of the exponent range.
pub fn alpha_max(d: usize, s: f64) -> f64 {
    (d as f64 - 2.0 * s) / 2.0
}

/// Λ₀(α); equals Λ at α = 0 and vanishes as α → (d−2s)/2.
pub fn lambda_alpha(d: usize, s: f64, alpha: f64) -> Result<f64> {
    check_subcritical(d, s)?;
    let am = alpha_max(d, s);
    if !(alpha >= 0.0 && alpha < am) {
        return param(format!("alpha = {alpha} outside [0, {am})"));
    }
    Ok(lambda_alpha_unchecked(d as f64, s, alpha))
}

fn lambda_alpha_unchecked(d: f64, s: f64, a: f64) -> f64 {
    2f64.powf(2.0 * s) * gamma((d + 2.0 * s + 2.0 * a) / 4.0) * gamma((d + 2.0 * s - 2.0 * a) / 4.0)
        / (gamma((d - 2.0 * s + 2.0 * a) / 4.0) * gamma((d - 2.0 * s - 2.0 * a) / 4.0))
}

/// Inverts Λ₀ on [0, (d−2s)/2) by bisection after checking, on 100 equispaced
/// samples, that Λ₀ is strictly decreasing there.
pub fn alpha_of_lambda(d: usize, s: f64, lambda: f64) -> Result<f64> {
    let big = hardy_constant(d, s)?;
    if !(lambda > 0.0 && lambda <= big * (1.0 + 1e-15)) {
        return param(format!("lambda = {lambda} outside (0, {big}]"));
    }
    let df = d as f64;
    let am = alpha_max(d, s);
    let f = |a: f64| lambda_alpha_unchecked(df, s, a);
    let mut prev = f64::INFINITY;
    for k in 0..100 {
        let v = f(am * k as f64 / 100.0);
        if !(v < prev) {
            return Err(Error::NonMonotone(format!("Lambda_0 not decreasing at sample {k} (d = {d}, s = {s})")));
        }
        prev = v;
    }
    if lambda >= big {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, am);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// 2*_s = 2d/(d − 2s).
pub fn critical_exponent(d: usize, s: f64) -> Result<f64> {
    check_subcritical(d, s)?;
    let df = d as f64;
    Ok(2.0 * df / (df - 2.0 * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormConstants {
    pub lambda_star: f64,
    pub two_star_s: f64,
    pub alpha_max: f64,
}

pub fn closed_form_constants(d: usize, s: f64) -> Result<ClosedFormConstants> {
    Ok(ClosedFormConstants {
        lambda_star: hardy_constant(d, s)?,
        two_star_s: critical_exponent(d, s)?,
        alpha_max: alpha_max(d, s),
    })
}

/// Dimension, order, normalization, and the quadrature knobs every kernel
/// routine reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub d: usize,
    pub s: f64,
    pub a_ds: f64,
    pub quad: QuadratureSettings,
}

impl FracParams {
    pub fn new(d: usize, s: f64) -> Result<Self> {
        Self::with_quadrature(d, s, QuadratureSettings::default())
    }

    pub fn with_quadrature(d: usize, s: f64, quad: QuadratureSettings) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return param(format!("dimension {d} unsupported (1 or 2)"));
        }
        check_subcritical(d, s)?;
        Ok(FracParams { d, s, a_ds: normalization_constant(d, s)?, quad })
    }

    pub fn hardy_constant(&self) -> f64 {
        lambda_alpha_unchecked(self.d as f64, self.s, 0.0)
    }

    pub fn critical_exponent(&self) -> f64 {
        2.0 * self.d as f64 / (self.d as f64 - 2.0 * self.s)
    }

    pub fn alpha_max(&self) -> f64 {
        alpha_max(self.d, self.s)
    }
}
