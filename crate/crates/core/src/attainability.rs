//! Sign of N_s w for the singular profile w = |x|^{−(d−2s)/2} over the
//! Neumann set, the three-piece split on the example geometry, and a
//! refinement-trend verdict on attainability.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::assemble;
use crate::constants::FracParams;
use crate::error::{Error, Result};
use crate::geometry::{build_grid, label_example1, DNConfig, Example1Params, FarField, Label, Point};
use crate::kernel::{angular_kernel, neumann_at, PointValue};
use crate::quadrature::{adaptive, adaptive_breaks};
use crate::spectral::{singularity_exponent_fit, smallest_hardy_eigen, SolverSettings};

const REL_TOL: f64 = 1e-10;
const MAX_PANELS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignVerdict {
    SufficientConditionHolds,
    Inconclusive,
}

/// J₁, J₂, J₃ without the factor a_{d,s}, with a summed error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JParts {
    #[serde(rename = "J1")]
    pub j1: f64,
    #[serde(rename = "J2")]
    pub j2: f64,
    #[serde(rename = "J3")]
    pub j3: f64,
    #[serde(rename = "J_error")]
    pub error: f64,
}

impl JParts {
    pub fn sum(&self) -> f64 {
        self.j1 + self.j2 + self.j3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub cell: usize,
    pub x: Point,
    pub value: f64,
    pub error: f64,
    #[serde(flatten)]
    pub j: Option<JParts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub n: usize,
    pub h: f64,
    pub lambda: f64,
    pub alpha_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainabilityReport {
    #[serde(rename = "min_Nsw")]
    pub min_nsw: f64,
    pub budget: f64,
    pub verdict: SignVerdict,
    pub points: Vec<PointReport>,
    pub trend: Vec<TrendRow>,
}

/// Exponent of the test profile, (d − 2s)/2.
pub fn profile_exponent(params: &FracParams) -> f64 {
    (params.d as f64 - 2.0 * params.s) / 2.0
}

fn norm(x: Point) -> f64 {
    x[0].hypot(x[1])
}

/// Radial part ∫_a^b (1 − σ^{−α₀}) σ^{d−1} K(σ) dσ.
fn radial_piece(a: f64, b: f64, params: &FracParams) -> Result<(f64, f64)> {
    if !(b > a) {
        return Ok((0.0, 0.0));
    }
    let a0 = profile_exponent(params);
    let d = params.d as i32;
    let mut bad = false;
    let f = |t: f64| match angular_kernel(t, params) {
        Ok(k) => (1.0 - t.powf(-a0)) * t.powi(d - 1) * k,
        Err(_) => {
            bad = true;
            0.0
        }
    };
    let r = adaptive(a, b, REL_TOL, 1e-15, f);
    if bad || !r.value.is_finite() {
        return Err(Error::Singularity(format!("radial integral on ({a}, {b}) hit sigma = 1")));
    }
    Ok((r.value, r.error))
}

/// Checks x is in the exact Neumann set of the example geometry.
fn check_neumann_point(x: Point, p: &Example1Params) -> Result<()> {
    let r = norm(x);
    if p.in_omega(x) || p.in_dirichlet(x) || r < p.eta || r > p.a_len {
        return Err(Error::Domain(format!("x = {x:?} is not in the Neumann set")));
    }
    Ok(())
}

/// J₁, J₃ by the radial K(σ) formula (exact for every x: the ball and
/// annulus are rotation invariant) and J₂ by nested adaptive quadrature
/// over the cylinder.
pub fn j_decomposition(x: Point, p: &Example1Params, params: &FracParams) -> Result<JParts> {
    check_neumann_point(x, p)?;
    p.check()?;
    let r = norm(x);
    let a0 = profile_exponent(params);
    let scale = r.powf(-a0 - 2.0 * params.s);
    let (j1, e1) = radial_piece(0.0, p.eps / r, params)?;
    let (j3, e3) = radial_piece(p.a_len / r, p.beta / r, params)?;
    let (j2, e2) = cylinder_integral(x, p, params);
    Ok(JParts { j1: scale * j1, j2, j3: scale * j3, error: scale * (e1 + e3) + e2 })
}

fn cylinder_integral(x: Point, p: &Example1Params, params: &FracParams) -> (f64, f64) {
    let a0 = profile_exponent(params);
    let wx = norm(x).powf(-a0);
    let expo = -(params.d as f64) - 2.0 * params.s;
    let kern = |y: Point| (wx - norm(y).powf(-a0)) * ((y[0] - x[0]).hypot(y[1] - x[1])).powf(expo);
    if params.d == 1 {
        let r = adaptive(p.eps, p.a_len, REL_TOL, 1e-15, |t| kern([t, 0.0]));
        return (r.value, r.error);
    }
    let mut worst_inner: f64 = 0.0;
    let outer = adaptive(-p.eps, p.eps, REL_TOL, 1e-15, |y1| {
        let top = (p.a_len * p.a_len - y1 * y1).sqrt();
        let inner = adaptive(p.eps, top, REL_TOL, 1e-16, |y0| kern([y0, y1]));
        worst_inner = worst_inner.max(inner.error);
        inner.value
    });
    (outer.value, outer.error + worst_inner * 2.0 * p.eps)
}

/// Sub-intervals (r₀, r₁), r₀ ≥ 0, of the ray x + r·e inside the disk |y| < R.
fn ray_disk(x: Point, e: Point, radius: f64) -> Option<(f64, f64)> {
    let b = x[0] * e[0] + x[1] * e[1];
    let c = x[0] * x[0] + x[1] * x[1] - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let (lo, hi) = (-b - sq, -b + sq);
    if hi <= 0.0 {
        return None;
    }
    Some((lo.max(0.0), hi))
}

fn ray_rect(x: Point, e: Point, lo: Point, hi: Point) -> Option<(f64, f64)> {
    let mut t0: f64 = 0.0;
    let mut t1 = f64::INFINITY;
    for k in 0..2 {
        if e[k].abs() < 1e-300 {
            if x[k] < lo[k] || x[k] > hi[k] {
                return None;
            }
        } else {
            let (a, b) = ((lo[k] - x[k]) / e[k], (hi[k] - x[k]) / e[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t1 > t0).then_some((t0, t1))
}

fn intersect(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> Option<(f64, f64)> {
    let ((a0, a1), (b0, b1)) = (a?, b?);
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    (hi > lo).then_some((lo, hi))
}

fn subtract(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> Vec<(f64, f64)> {
    let Some((a0, a1)) = a else { return vec![] };
    let Some((b0, b1)) = b else { return vec![(a0, a1)] };
    let mut out = Vec::new();
    if b0 > a0 {
        out.push((a0, b0.min(a1)));
    }
    if b1 < a1 {
        out.push((b1.max(a0), a1));
    }
    out.retain(|(l, h)| h > l);
    out
}

/// The three pieces independently, in polar coordinates about x: for each
/// direction the ray is clipped against the ball, cylinder and annulus and
/// integrated adaptively; the angle is integrated adaptively with breaks at
/// the direction of the origin, the tangents to the circles and the
/// directions of the cylinder corners.
pub fn direct_example1(x: Point, p: &Example1Params, params: &FracParams) -> Result<JParts> {
    check_neumann_point(x, p)?;
    p.check()?;
    let a0 = profile_exponent(params);
    let wx = norm(x).powf(-a0);
    let expo = -(params.d as f64) - 2.0 * params.s + (params.d as f64 - 1.0);
    let g = |r: f64, e: Point| (wx - norm([x[0] + r * e[0], x[1] + r * e[1]]).powf(-a0)) * r.powf(expo);
    let along = |lo: f64, hi: f64, e: Point, err: &mut f64| -> f64 {
        let rstar = -(x[0] * e[0] + x[1] * e[1]);
        let mut breaks = vec![lo];
        if rstar > lo && rstar < hi {
            breaks.push(rstar);
        }
        breaks.push(hi);
        let r = adaptive_breaks(&breaks, REL_TOL, 1e-16, MAX_PANELS, &mut |t| g(t, e));
        *err += r.error;
        r.value
    };
    let cyl_lo = [p.eps, -p.eps];
    let cyl_hi = [p.a_len, p.eps];
    let pieces = |e: Point, err: &mut f64| -> [f64; 3] {
        let ball = ray_disk(x, e, p.eps);
        let disk_a = ray_disk(x, e, p.a_len);
        let cyl = intersect(ray_rect(x, e, cyl_lo, cyl_hi), disk_a);
        let ann = subtract(ray_disk(x, e, p.beta), disk_a);
        let mut v = [0.0; 3];
        if let Some((l, h)) = ball {
            v[0] = along(l, h, e, err);
        }
        if let Some((l, h)) = cyl {
            v[1] = along(l, h, e, err);
        }
        for (l, h) in ann {
            v[2] += along(l, h, e, err);
        }
        v
    };
    if params.d == 1 {
        let mut err = 0.0;
        let mut out = [0.0; 3];
        for e in [[1.0, 0.0], [-1.0, 0.0]] {
            let v = pieces(e, &mut err);
            for k in 0..3 {
                out[k] += v[k];
            }
        }
        return Ok(JParts { j1: out[0], j2: out[1], j3: out[2], error: err });
    }
    let theta0 = (-x[1]).atan2(-x[0]);
    let r = norm(x);
    let mut breaks = vec![0.0, 2.0 * PI];
    let mut add = |t: f64| breaks.push((t - theta0).rem_euclid(2.0 * PI));
    add(theta0);
    for radius in [p.eps, p.a_len, p.beta] {
        if radius < r {
            let dt = (radius / r).asin();
            add(theta0 + dt);
            add(theta0 - dt);
        }
    }
    let yc = (p.a_len * p.a_len - p.eps * p.eps).sqrt();
    for c in [[p.eps, p.eps], [p.eps, -p.eps], [yc, p.eps], [yc, -p.eps]] {
        add((c[1] - x[1]).atan2(c[0] - x[0]));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut parts = [0.0; 3];
    let mut err = 0.0;
    for (k, part) in parts.iter_mut().enumerate() {
        let res = adaptive_breaks(&breaks, 1e-9, 1e-15, MAX_PANELS, &mut |t: f64| {
            let th = t + theta0;
            let mut inner_err = 0.0;
            let v = pieces([th.cos(), th.sin()], &mut inner_err);
            v[k]
        });
        *part = res.value;
        err += res.error;
    }
    Ok(JParts { j1: parts[0], j2: parts[1], j3: parts[2], error: err })
}

/// (1/A^{α₀+2s}) ∫₂^{β/A} (σ^{α₀} − 1) σ^{d−α₀−1} K(σ) dσ: a lower bound
/// for J₃ valid at every x with A/2 ≤ |x| ≤ A.
pub fn j3_lower_bound(p: &Example1Params, params: &FracParams) -> Result<f64> {
    let a0 = profile_exponent(params);
    let (v, _) = radial_piece(2.0, p.beta / p.a_len, params)?;
    Ok(p.a_len.powf(-a0 - 2.0 * params.s) * v)
}

/// Every `stride`-th NEUMANN cell center (in index order).
pub fn sample_points(config: &DNConfig, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::Parameter("sample stride must be positive".into()));
    }
    let cells = config.grid.cells_with(Label::Neumann);
    if cells.is_empty() {
        return Err(Error::Config("configuration has no NEUMANN cells".into()));
    }
    Ok(cells.into_iter().step_by(stride).collect())
}

fn budget_of(points: &[PointReport]) -> f64 {
    let worst = points.iter().map(|q| q.error).fold(0.0, f64::max);
    10.0 * worst + 1e-12
}

fn finish(points: Vec<PointReport>) -> AttainabilityReport {
    let min_nsw = points.iter().map(|q| q.value).fold(f64::INFINITY, f64::min);
    let budget = budget_of(&points);
    let verdict = if min_nsw > budget { SignVerdict::SufficientConditionHolds } else { SignVerdict::Inconclusive };
    AttainabilityReport { min_nsw, budget, verdict, points, trend: Vec::new() }
}

/// N_s of a closed-form profile over the grid's Ω cells at sampled Neumann
/// cell centers.
pub fn neumann_profile_test<F: Fn(Point) -> f64 + Sync>(
    config: &DNConfig,
    params: &FracParams,
    stride: usize,
    u: &F,
    pole: bool,
) -> Result<AttainabilityReport> {
    let cells = sample_points(config, stride)?;
    let points = cells
        .par_iter()
        .map(|&c| {
            let x = config.grid.center(c);
            let PointValue { value, error } = neumann_at(u, pole, x, &config.grid, params)?;
            Ok(PointReport { cell: c, x, value, error, j: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(points))
}

/// The sufficient condition N_s w ≥ 0 on the Neumann set, checked at cell
/// centers. On the example geometry the exact region is used through
/// `j_decomposition`; otherwise the grid's Ω cells.
pub fn neumann_sign_test(config: &DNConfig, params: &FracParams, stride: usize) -> Result<AttainabilityReport> {
    let a0 = profile_exponent(params);
    match config.example1() {
        Some(p) => {
            let cells = sample_points(config, stride)?;
            let points = cells
                .par_iter()
                .map(|&c| {
                    let x = config.grid.center(c);
                    let j = j_decomposition(x, p, params)?;
                    Ok(PointReport {
                        cell: c,
                        x,
                        value: params.a_ds * j.sum(),
                        error: params.a_ds * j.error,
                        j: Some(j),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(finish(points))
        }
        None => neumann_profile_test(config, params, stride, &|y: Point| norm(y).powf(-a0), true),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    #[serde(rename = "min_Nsw")]
    pub min_nsw: f64,
    pub budget: f64,
    pub verdict: SignVerdict,
    /// max |J₁| over the sampled points.
    pub j1_max_abs: f64,
    /// max |J₁ + J₂ + J₃ − direct| / |direct| over the checked points.
    pub direct_mismatch: Option<f64>,
}

/// ε-sweep of the sign test on the example geometry (d = 2 grid of
/// half-width L, n cells per side). With `check_direct`, every sampled point
/// is also evaluated by `direct_example1`.
pub fn eps_sweep(
    base: &Example1Params,
    eps_values: &[f64],
    half_width: f64,
    n: usize,
    params: &FracParams,
    stride: usize,
    check_direct: bool,
) -> Result<Vec<SweepRow>> {
    let grid = build_grid(params.d, half_width, n, FarField::FarNeumannTruncated)?;
    let mut rows = Vec::new();
    for &eps in eps_values {
        let p = Example1Params { eps, ..*base };
        let config = label_example1(&grid, &p)?;
        let rep = neumann_sign_test(&config, params, stride)?;
        let j1_max_abs = rep.points.iter().filter_map(|q| q.j.map(|j| j.j1.abs())).fold(0.0, f64::max);
        let direct_mismatch = if check_direct {
            let worst = rep
                .points
                .par_iter()
                .map(|q| {
                    let dir = direct_example1(q.x, &p, params)?;
                    let j = q.j.expect("example points carry J parts");
                    Ok((j.sum() - dir.sum()).abs() / dir.sum().abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Some(worst.into_iter().fold(0.0, f64::max))
        } else {
            None
        };
        rows.push(SweepRow {
            eps,
            min_nsw: rep.min_nsw,
            budget: rep.budget,
            verdict: rep.verdict,
            j1_max_abs,
            direct_mismatch,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttainVerdict {
    AttainedLike,
    NotAttainedLike,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictThresholds {
    /// Required gap to Λ in units of the last level-to-level drift.
    pub drift_factor: f64,
    /// Margin below (d − 2s)/2 for the fitted exponent.
    pub exponent_margin: f64,
    pub window: (f64, f64),
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        VerdictThresholds { drift_factor: 5.0, exponent_margin: 0.05, window: (0.02, 0.2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub verdict: AttainVerdict,
    pub lambda_star: f64,
    pub drift: f64,
    pub trend: Vec<TrendRow>,
}

/// λ_h and the fitted exponent over refinement levels, then a verdict:
/// attained-like when λ_h settles below Λ by more than `drift_factor`
/// drifts and the exponent stays clear of (d−2s)/2; not-attained-like when
/// λ_h is within that distance of Λ (or above it) and the exponent is not
/// clear of (d−2s)/2; inconclusive otherwise.
pub fn attainability_verdict<B: Fn(usize) -> Result<DNConfig>>(
    levels: &[usize],
    builder: B,
    params: &FracParams,
    thresholds: &VerdictThresholds,
    solver: SolverSettings,
) -> Result<VerdictReport> {
    if levels.len() < 3 {
        return Err(Error::Parameter(format!("need at least 3 refinement levels, got {}", levels.len())));
    }
    let mut trend = Vec::new();
    for &n in levels {
        let config = builder(n)?;
        let forms = assemble(&config, params)?;
        let r = smallest_hardy_eigen(&forms, solver.tol, solver.max_iter)?;
        let fit = singularity_exponent_fit(&forms, &r.eigvec, thresholds.window)?;
        trend.push(TrendRow { n, h: config.grid.h, lambda: r.lambda_h, alpha_hat: fit.alpha_hat });
    }
    let lambda_star = params.hardy_constant();
    let k = trend.len();
    let last = trend[k - 1];
    let drift = (last.lambda - trend[k - 2].lambda).abs();
    let cut = params.alpha_max() - thresholds.exponent_margin;
    let band = thresholds.drift_factor * drift;
    let verdict = if lambda_star - last.lambda > band && last.alpha_hat < cut {
        AttainVerdict::AttainedLike
    } else if last.lambda >= lambda_star - band && last.alpha_hat >= cut {
        AttainVerdict::NotAttainedLike
    } else {
        AttainVerdict::Inconclusive
    };
    Ok(VerdictReport { verdict, lambda_star, drift, trend })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::label_ball_config;

    fn ex1(eps: f64) -> Example1Params {
        Example1Params { eps, eta: 1.0, a_len: 2.0, m: 1.0, beta: 8.0 }
    }

    fn p2() -> FracParams {
        FracParams::new(2, 0.25).unwrap()
    }

    #[test]
    fn decomposition_matches_direct() {
        let params = p2();
        for x in [[0.0, 1.5], [-1.2, 0.9], [1.4, 1.2], [-1.9, 0.1]] {
            let p = ex1(0.1);
            let j = j_decomposition(x, &p, &params).unwrap();
            let d = direct_example1(x, &p, &params).unwrap();
            for (a, b) in [(j.j1, d.j1), (j.j2, d.j2), (j.j3, d.j3)] {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-8), "x = {x:?}: {a} vs {b}");
            }
            assert!(j.j1 < 0.0 && j.j3 > 0.0);
        }
    }

    #[test]
    fn decomposition_one_dimensional() {
        let params = FracParams::new(1, 0.25).unwrap();
        let p = ex1(0.1);
        let x = [-1.5, 0.0];
        let j = j_decomposition(x, &p, &params).unwrap();
        let d = direct_example1(x, &p, &params).unwrap();
        assert!((j.sum() - d.sum()).abs() < 1e-8 * d.sum().abs());
    }

    #[test]
    fn j1_shrinks_with_eps_and_j3_bound_holds() {
        let params = p2();
        let x = [0.0, 1.5];
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05, 0.02] {
            let j = j_decomposition(x, &ex1(eps), &params).unwrap();
            assert!(j.j1.abs() < prev);
            prev = j.j1.abs();
            assert!(j.j3 >= j3_lower_bound(&ex1(eps), &params).unwrap());
        }
    }

    #[test]
    fn j3_grows_with_beta() {
        let params = p2();
        let x = [-1.0, 1.3];
        let a = j_decomposition(x, &Example1Params { beta: 6.0, ..ex1(0.05) }, &params).unwrap();
        let b = j_decomposition(x, &Example1Params { beta: 8.0, ..ex1(0.05) }, &params).unwrap();
        assert!(b.j3 > a.j3 && b.j1 == a.j1 && b.j2 == a.j2);
    }

    #[test]
    fn outside_neumann_rejected() {
        let params = p2();
        assert!(matches!(j_decomposition([0.0, 0.5], &ex1(0.1), &params), Err(Error::Domain(_))));
        assert!(matches!(j_decomposition([1.5, 0.0], &ex1(0.1), &params), Err(Error::Domain(_))));
    }

    #[test]
    fn adjacent_neumann_is_negative_and_constant_is_zero() {
        let params = FracParams::new(1, 0.25).unwrap();
        let g = build_grid(1, 1.0, 64, FarField::FarNeumannTruncated).unwrap();
        let c = label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap();
        let r = neumann_sign_test(&c, &params, 1).unwrap();
        assert!(r.min_nsw < 0.0);
        assert_eq!(r.verdict, SignVerdict::Inconclusive);
        let z = neumann_profile_test(&c, &params, 1, &|_| 1.0, false).unwrap();
        assert!(z.points.iter().all(|q| q.value == 0.0));
        let none = label_ball_config(&g, 0.25, (0.25, 1.0)).unwrap();
        assert!(matches!(neumann_sign_test(&none, &params, 1), Err(Error::Config(_))));
    }

    #[test]
    fn verdict_needs_three_levels() {
        let params = FracParams::new(1, 0.25).unwrap();
        let b = |n: usize| {
            let g = build_grid(1, 1.0, n, FarField::FarNeumannTruncated)?;
            label_ball_config(&g, 0.5, (0.5, 1.0))
        };
        let r = attainability_verdict(&[32, 64], b, &params, &VerdictThresholds::default(), SolverSettings::default());
        assert!(matches!(r, Err(Error::Parameter(_))));
    }
}
