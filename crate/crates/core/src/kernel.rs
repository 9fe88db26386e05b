//! Singular-kernel quadrature for dν = dx dy / |x−y|^{d+2s}.
//!
//! Cells are translates of [0,h]^d, so the pair integral depends only on the
//! index offset and scales as h^{d−2s}. Writing it as ∫ T(z) |z|^{−d−2s} dz
//! with T the tent autocorrelation of the unit cell turns the 2D case into
//! four bilinear pieces, only three of which touch the singularity.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::constants::FracParams;
use crate::error::{Error, Result};
use crate::geometry::{Label, LabeledGrid, Point};
use crate::quadrature::{adaptive_breaks, gauss, gauss_graded_left, QuadratureSettings};

fn tent(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// Antiderivative-of-antiderivative of |t|^{−1−2s}, vanishing at 0.
fn g2(t: f64, s: f64) -> f64 {
    -t.abs().powf(1.0 - 2.0 * s) / (2.0 * s * (1.0 - 2.0 * s))
}

/// ∬_{[0,1]×[k,k+1]} |x−y|^{−1−2s}, k ≥ 1 (unit cells).
pub fn unit_weight_1d(k: usize, s: f64) -> f64 {
    let kf = k as f64;
    if k <= 64 {
        g2(kf + 1.0, s) - 2.0 * g2(kf, s) + g2(kf - 1.0, s)
    } else {
        let f = |t: f64| tent(t - kf) * t.powf(-1.0 - 2.0 * s);
        gauss(kf - 1.0, kf, 8, f) + gauss(kf, kf + 1.0, 8, f)
    }
}

/// ∫_{[0,1]²} P(t) |t|^{−2−2s} dt with P = c10 t1 + c01 t2 + c11 t1 t2, by
/// splitting along the diagonal and integrating the radial variable exactly.
fn duffy_corner(c10: f64, c01: f64, c11: f64, s: f64, n: usize) -> f64 {
    let e1 = 1.0 / (1.0 - 2.0 * s);
    let e2 = 1.0 / (2.0 - 2.0 * s);
    gauss(0.0, 1.0, n, |v| {
        let lin = (c10 + c01 * v) * e1 + (c01 + c10 * v) * e1;
        (lin + 2.0 * c11 * v * e2) * (1.0 + v * v).powf(-1.0 - s)
    })
}

/// ∬_{[0,1]²×([p,p+1]×[q,q+1])} |x−y|^{−2−2s} for (p, q) ≠ (0, 0).
pub fn unit_weight_2d(p: usize, q: usize, s: f64, qs: &QuadratureSettings) -> f64 {
    assert!(p + q > 0, "self pair has no finite weight");
    // Canonical order makes the table exactly symmetric.
    let (p, q) = (p.max(q), p.min(q));
    let (pf, qf) = (p as f64, q as f64);
    let mut total = 0.0;
    for x0 in [pf - 1.0, pf] {
        for y0 in [qf - 1.0, qf] {
            let (x1, y1) = (x0 + 1.0, y0 + 1.0);
            let corner_x = x0 == 0.0 || x1 == 0.0;
            let corner_y = y0 == 0.0 || y1 == 0.0;
            if corner_x && corner_y {
                // Tent factors as linear functions of t = |z| on [0,1].
                let sx = if x1 == 0.0 { -1.0 } else { 1.0 };
                let sy = if y1 == 0.0 { -1.0 } else { 1.0 };
                let (ax, bx) = (tent(-pf), tent(sx - pf) - tent(-pf));
                let (ay, by) = (tent(-qf), tent(sy - qf) - tent(-qf));
                debug_assert!(ax * ay == 0.0);
                total += duffy_corner(bx * ay, ax * by, bx * by, s, qs.duffy_gauss);
            } else {
                let dist = x0.abs().min(x1.abs()).max(y0.abs().min(y1.abs()));
                let m = if dist <= qs.near_threshold { qs.near_gauss } else { qs.far_gauss };
                let f = |z1: f64, z2: f64| tent(z1 - pf) * tent(z2 - qf) * (z1 * z1 + z2 * z2).powf(-1.0 - s);
                total += gauss(x0, x1, m, |z1| gauss(y0, y1, m, |z2| f(z1, z2)));
            }
        }
    }
    total
}

/// ∫_{[0,1]^2} ∫_{outside the unit cell} |x−y|^{−2−2s}.
pub fn unit_outflow_2d(s: f64, qs: &QuadratureSettings) -> f64 {
    let inner = 4.0 * duffy_corner(1.0, 1.0, -1.0, s, qs.duffy_gauss);
    let outer = (4.0 / s) * gauss(0.0, PI / 4.0, qs.duffy_gauss, |t| t.cos().powf(2.0 * s));
    inner + outer
}

/// ∫_0^1 ∫_{outside [0,1]} |x−y|^{−1−2s}.
pub fn unit_outflow_1d(s: f64) -> f64 {
    1.0 / (s * (1.0 - 2.0 * s))
}

/// Pair weights for every index offset of a grid, raw (without a_{d,s}).
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub d: usize,
    pub n: usize,
    pub h: f64,
    pub s: f64,
    scale: f64,
    unit: Vec<f64>,
}

impl WeightTable {
    pub fn new(d: usize, n: usize, h: f64, params: &FracParams) -> Self {
        let s = params.s;
        let unit = if d == 1 {
            (0..n).map(|k| if k == 0 { 0.0 } else { unit_weight_1d(k, s) }).collect()
        } else {
            (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let (p, q) = (idx / n, idx % n);
                    if p + q == 0 {
                        0.0
                    } else {
                        unit_weight_2d(p, q, s, &params.quad)
                    }
                })
                .collect()
        };
        WeightTable { d, n, h, s, scale: h.powf(d as f64 - 2.0 * s), unit }
    }

    pub fn for_grid(grid: &LabeledGrid, params: &FracParams) -> Self {
        Self::new(grid.d, grid.n, grid.h, params)
    }

    /// Raw weight between cells with axis offsets (dx, dy).
    #[inline]
    pub fn offset(&self, dx: usize, dy: usize) -> f64 {
        if self.d == 1 {
            self.scale * self.unit[dx]
        } else {
            self.scale * self.unit[dx * self.n + dy]
        }
    }

    #[inline]
    pub fn between(&self, grid: &LabeledGrid, i: usize, j: usize) -> f64 {
        let (ix, iy) = grid.coords(i);
        let (jx, jy) = grid.coords(j);
        self.offset(ix.abs_diff(jx), iy.abs_diff(jy))
    }

    /// ∫_{C_i} ∫_{y outside C_i} |x−y|^{−d−2s}.
    pub fn outflow(&self, params: &FracParams) -> f64 {
        let unit = if self.d == 1 { unit_outflow_1d(self.s) } else { unit_outflow_2d(self.s, &params.quad) };
        self.scale * unit
    }
}

/// Weight between two cells of a grid (raw, without a_{d,s}).
pub fn pair_weight(grid: &LabeledGrid, i: usize, j: usize, params: &FracParams) -> Result<f64> {
    if i == j {
        return Err(Error::Contract("pair_weight called with i == j".into()));
    }
    let (ix, iy) = grid.coords(i);
    let (jx, jy) = grid.coords(j);
    let (p, q) = (ix.abs_diff(jx), iy.abs_diff(jy));
    let unit = if grid.d == 1 { unit_weight_1d(p, params.s) } else { unit_weight_2d(p, q, params.s, &params.quad) };
    Ok(grid.h.powf(grid.d as f64 - 2.0 * params.s) * unit)
}

/// ∫_{C_i} ∫_{y outside the box} |x−y|^{−d−2s}, for every cell (raw).
///
/// 1D is closed form. 2D subtracts the in-box pair weights from the cell's
/// total outflow, so it is consistent with the table to rounding.
pub fn box_exterior_weights(grid: &LabeledGrid, table: &WeightTable, params: &FracParams) -> Vec<f64> {
    let s = params.s;
    let l = grid.half_width;
    if grid.d == 1 {
        let e = 1.0 - 2.0 * s;
        return (0..grid.cell_count())
            .map(|i| {
                let (lo, hi) = grid.bounds(i);
                let (a, b) = (lo[0], hi[0]);
                ((l - a).powf(e) - (l - b).powf(e) + (l + b).powf(e) - (l + a).powf(e)) / (2.0 * s * e)
            })
            .collect();
    }
    let n = grid.n;
    let out = table.outflow(params);
    (0..grid.cell_count())
        .into_par_iter()
        .map(|i| {
            let (ix, iy) = grid.coords(i);
            let mut acc = 0.0;
            for jy in 0..n {
                for jx in 0..n {
                    if jx != ix || jy != iy {
                        acc += table.offset(ix.abs_diff(jx), iy.abs_diff(jy));
                    }
                }
            }
            (out - acc).max(0.0)
        })
        .collect()
}

/// τ_i = a_{d,s} ∫_{C_i} ∫_{|y|>R} |x−y|^{−d−2s}: closed-form inner radial
/// integral, midpoint outer rule on a subdivided cell.
pub fn tail_weight(grid: &LabeledGrid, i: usize, r_box: f64, params: &FracParams) -> Result<f64> {
    let corner = grid.half_width * (grid.d as f64).sqrt();
    if r_box < corner * (1.0 - 1e-12) {
        return Err(Error::Parameter(format!("R_box = {r_box} below box circumradius {corner}")));
    }
    let s = params.s;
    let (lo, hi) = grid.bounds(i);
    let m = params.quad.subdivision.max(1);
    let inner = |x: Point| -> f64 {
        if grid.d == 1 {
            ((r_box - x[0]).powf(-2.0 * s) + (r_box + x[0]).powf(-2.0 * s)) / (2.0 * s)
        } else {
            let r2 = x[0] * x[0] + x[1] * x[1];
            gauss(0.0, 2.0 * PI, params.quad.tail_angular_points, |t| {
                let xe = x[0] * t.cos() + x[1] * t.sin();
                let rho = -xe + (xe * xe + r_box * r_box - r2).sqrt();
                rho.powf(-2.0 * s) / (2.0 * s)
            })
        }
    };
    let hx = (hi[0] - lo[0]) / m as f64;
    let mut acc = 0.0;
    if grid.d == 1 {
        for a in 0..m {
            acc += hx * inner([lo[0] + (a as f64 + 0.5) * hx, 0.0]);
        }
    } else {
        let hy = (hi[1] - lo[1]) / m as f64;
        for a in 0..m {
            for b in 0..m {
                acc += hx * hy * inner([lo[0] + (a as f64 + 0.5) * hx, lo[1] + (b as f64 + 0.5) * hy]);
            }
        }
    }
    Ok(params.a_ds * acc)
}

/// K(σ): the unit-sphere integral of |x′ − σ y′|^{−(d+2s)}.
pub fn angular_kernel(sigma: f64, params: &FracParams) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma = {sigma} must be a finite nonnegative ratio")));
    }
    if sigma == 1.0 {
        return Err(Error::Singularity("K(sigma) is infinite at sigma = 1".into()));
    }
    let s = params.s;
    if params.d == 1 {
        return Ok((1.0 - sigma).abs().powf(-1.0 - 2.0 * s) + (1.0 + sigma).powf(-1.0 - 2.0 * s));
    }
    // d = 2: the prefactor 2π^{1/2}/Γ(1/2) equals 2.
    let f = |t: f64| (1.0 - 2.0 * sigma * t.cos() + sigma * sigma).powf(-1.0 - s);
    let gap = (1.0 - sigma).abs();
    let n = params.quad.angular_points;
    if gap > 0.25 {
        return Ok(2.0 * gauss(0.0, PI, n, f));
    }
    // Peak of width |1−σ| at θ = 0: geometric panels.
    let mut acc = gauss(0.0, gap, 32, f);
    let mut lo = gap;
    while lo < PI {
        let hi = (4.0 * lo).min(PI);
        acc += gauss(lo, hi, 32, f);
        lo = hi;
    }
    Ok(2.0 * acc)
}

fn rect_dist(x: Point, lo: Point, hi: Point) -> f64 {
    let dx = (lo[0] - x[0]).max(0.0).max(x[0] - hi[0]);
    let dy = (lo[1] - x[1]).max(0.0).max(x[1] - hi[1]);
    dx.hypot(dy)
}

/// Integrates f(y) |x−y|^{−d−2s} over a cell not containing x.
///
/// Recursive 2^d splitting until each piece is no larger than its distance
/// to x; pieces with the origin as a corner and `pole` set use a polar rule
/// graded toward the origin. Returns (value, error estimate), the estimate
/// being the gap to a lower-order rule on the same pieces.
pub struct CellIntegrator<'a> {
    pub d: usize,
    pub s: f64,
    pub qs: &'a QuadratureSettings,
}

impl CellIntegrator<'_> {
    pub fn integrate<F: Fn(Point) -> f64>(&self, f: &F, x: Point, lo: Point, hi: Point, pole: bool) -> (f64, f64) {
        // Put the origin on a corner if it lies inside.
        if pole {
            let inside = |a: f64, b: f64| a < 0.0 && b > 0.0;
            if inside(lo[0], hi[0]) {
                let a = self.integrate(f, x, lo, [0.0, hi[1]], pole);
                let b = self.integrate(f, x, [0.0, lo[1]], hi, pole);
                return (a.0 + b.0, a.1 + b.1);
            }
            if self.d == 2 && inside(lo[1], hi[1]) {
                let a = self.integrate(f, x, lo, [hi[0], 0.0], pole);
                let b = self.integrate(f, x, [lo[0], 0.0], hi, pole);
                return (a.0 + b.0, a.1 + b.1);
            }
        }
        self.piece(f, x, lo, hi, pole, 0)
    }

    fn piece<F: Fn(Point) -> f64>(
        &self,
        f: &F,
        x: Point,
        lo: Point,
        hi: Point,
        pole: bool,
        depth: usize,
    ) -> (f64, f64) {
        let diam = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
        let dist = rect_dist(x, lo, hi);
        let at_origin = pole && (lo[0] == 0.0 || hi[0] == 0.0) && (self.d == 1 || lo[1] == 0.0 || hi[1] == 0.0);
        if diam > dist && depth < 40 {
            let mx = 0.5 * (lo[0] + hi[0]);
            if self.d == 1 {
                let a = self.piece(f, x, lo, [mx, 0.0], pole, depth + 1);
                let b = self.piece(f, x, [mx, 0.0], hi, pole, depth + 1);
                return (a.0 + b.0, a.1 + b.1);
            }
            let my = 0.5 * (lo[1] + hi[1]);
            let mut acc = (0.0, 0.0);
            for (l, h) in [(lo, [mx, my]), ([mx, lo[1]], [hi[0], my]), ([lo[0], my], [mx, hi[1]]), ([mx, my], hi)] {
                let r = self.piece(f, x, l, h, pole, depth + 1);
                acc.0 += r.0;
                acc.1 += r.1;
            }
            return acc;
        }
        let kern = |y: Point| {
            let r = (y[0] - x[0]).hypot(y[1] - x[1]);
            f(y) * r.powf(-(self.d as f64) - 2.0 * self.s)
        };
        if at_origin {
            let hi_v = self.polar_corner(&kern, lo, hi, 10);
            let lo_v = self.polar_corner(&kern, lo, hi, 6);
            return (hi_v, (hi_v - lo_v).abs());
        }
        let m = self.qs.far_gauss;
        let a = self.tensor(&kern, lo, hi, m);
        let b = self.tensor(&kern, lo, hi, m - 2);
        (a, (a - b).abs())
    }

    fn tensor<K: Fn(Point) -> f64>(&self, k: &K, lo: Point, hi: Point, m: usize) -> f64 {
        if self.d == 1 {
            gauss(lo[0], hi[0], m, |y| k([y, 0.0]))
        } else {
            gauss(lo[0], hi[0], m, |y0| gauss(lo[1], hi[1], m, |y1| k([y0, y1])))
        }
    }

    /// Cell with a corner at the origin; radial panels graded toward 0.
    fn polar_corner<K: Fn(Point) -> f64>(&self, k: &K, lo: Point, hi: Point, m: usize) -> f64 {
        let sx = if hi[0] > 0.0 { 1.0 } else { -1.0 };
        let a = if hi[0] > 0.0 { hi[0] } else { -lo[0] };
        if self.d == 1 {
            return gauss_graded_left(0.0, a, m, 40, |r| k([sx * r, 0.0]));
        }
        let sy = if hi[1] > 0.0 { 1.0 } else { -1.0 };
        let b = if hi[1] > 0.0 { hi[1] } else { -lo[1] };
        let split = (b / a).atan();
        let ray = |t: f64, rmax: f64| {
            let (c, sn) = (t.cos(), t.sin());
            gauss_graded_left(0.0, rmax, m, 40, |r| r * k([sx * r * c, sy * r * sn]))
        };
        let n = 2 * m;
        gauss(0.0, split, n, |t| ray(t, a / t.cos())) + gauss(split, PI / 2.0, n, |t| ray(t, b / t.sin()))
    }
}

/// Value and quadrature-error estimate of N_s u at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub value: f64,
    pub error: f64,
}

fn point_in_cell(x: Point, lo: Point, hi: Point, d: usize) -> bool {
    let inx = x[0] >= lo[0] && x[0] <= hi[0];
    inx && (d == 1 || (x[1] >= lo[1] && x[1] <= hi[1]))
}

/// N_s u(x) = a_{d,s} Σ_{j∈Ω} ∫_{C_j} (u(x) − u(y)) |x−y|^{−d−2s} dy for a
/// closed-form u; `pole` marks a singularity of u at the origin.
pub fn neumann_at<F: Fn(Point) -> f64 + Sync>(
    u: &F,
    pole: bool,
    x: Point,
    grid: &LabeledGrid,
    params: &FracParams,
) -> Result<PointValue> {
    let omega = grid.cells_with(Label::Omega);
    for &j in &omega {
        let (lo, hi) = grid.bounds(j);
        if point_in_cell(x, lo, hi, grid.d) {
            return Err(Error::Domain(format!("x = {x:?} lies in the closure of Omega")));
        }
    }
    let ux = u(x);
    let integ = CellIntegrator { d: grid.d, s: params.s, qs: &params.quad };
    let g = |y: Point| ux - u(y);
    let parts: Vec<(f64, f64)> = omega
        .par_iter()
        .map(|&j| {
            let (lo, hi) = grid.bounds(j);
            integ.integrate(&g, x, lo, hi, pole)
        })
        .collect();
    let (v, e) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(PointValue { value: params.a_ds * v, error: params.a_ds * e })
}

/// N_s of a piecewise-constant grid function (values on all cells, zero on
/// D) at the center of a NEUMANN cell.
pub fn neumann_at_grid(values: &[f64], cell: usize, grid: &LabeledGrid, params: &FracParams) -> Result<PointValue> {
    if grid.labels[cell] != Label::Neumann {
        return Err(Error::Domain(format!("cell {cell} is not a NEUMANN cell")));
    }
    let x = grid.center(cell);
    let integ = CellIntegrator { d: grid.d, s: params.s, qs: &params.quad };
    let one = |_: Point| 1.0;
    let ux = values[cell];
    let mut v = 0.0;
    let mut e = 0.0;
    for j in grid.cells_with(Label::Omega) {
        let (lo, hi) = grid.bounds(j);
        let (k, ke) = integ.integrate(&one, x, lo, hi, false);
        v += (ux - values[j]) * k;
        e += (ux - values[j]).abs() * ke;
    }
    Ok(PointValue { value: params.a_ds * v, error: params.a_ds * e })
}

/// (−Δ)^s u(x) as the symmetric second-difference integral
/// a_{d,s} ∫ (2u(x) − u(x+z) − u(x−z))/2 |z|^{−d−2s} dz, with `r0` a
/// breakpoint between the near and far radial ranges.
///
/// `pole` marks a singularity of u at the origin; x must differ from it.
pub fn frac_laplacian_at<F: Fn(Point) -> f64>(
    u: &F,
    pole: bool,
    x: Point,
    r0: f64,
    params: &FracParams,
) -> Result<PointValue> {
    let s = params.s;
    let xr = x[0].hypot(x[1]);
    if pole && xr == 0.0 {
        return Err(Error::Domain("x coincides with the pole of u".into()));
    }
    if !(r0 > 0.0) {
        return Err(Error::Parameter(format!("cutoff r0 = {r0} must be positive")));
    }
    let ux = u(x);
    let tol = params.quad.adaptive_tol;
    let tail_tol = params.quad.pv_tail_tol;
    // Radial line integral along direction e, over r ∈ (0, ∞), of
    // (2u(x) − u(x+re) − u(x−re)) r^{−1−2s}; `kinks` are radii where the
    // integrand is singular or non-smooth.
    let radial = |e: Point, kinks: &[f64]| -> (f64, f64) {
        let mut breaks = vec![0.0, r0];
        breaks.extend(kinks.iter().copied().filter(|&k| k > 0.0));
        let far = breaks.iter().copied().fold(r0, f64::max) * 2.0;
        breaks.push(far);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let g = |r: f64| {
            let p = [x[0] + r * e[0], x[1] + r * e[1]];
            let m = [x[0] - r * e[0], x[1] - r * e[1]];
            (2.0 * ux - u(p) - u(m)) * r.powf(-1.0 - 2.0 * s)
        };
        let near = adaptive_breaks(&breaks, tol, 0.0, 4000, &mut { g });
        // Beyond `far`: the 2u(x) part in closed form, the rest by shells.
        let mut total = near.value + ux * far.powf(-2.0 * s) / s;
        let mut err = near.error;
        let mut lo = far;
        for _ in 0..400 {
            let hi = 2.0 * lo;
            let h = |r: f64| {
                let p = [x[0] + r * e[0], x[1] + r * e[1]];
                let m = [x[0] - r * e[0], x[1] - r * e[1]];
                -(u(p) + u(m)) * r.powf(-1.0 - 2.0 * s)
            };
            let sh = adaptive_breaks(&[lo, hi], tol, 0.0, 200, &mut { h });
            total += sh.value;
            err += sh.error;
            lo = hi;
            if sh.value.abs() <= tail_tol * total.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (total, err)
    };
    if params.d == 1 {
        let kinks = if pole { vec![xr] } else { vec![] };
        let (v, e) = radial([1.0, 0.0], &kinks);
        return Ok(PointValue { value: params.a_ds * v, error: params.a_ds * e });
    }
    // d = 2: half-circle of directions, each line covering ±e.
    let theta0 = x[1].atan2(x[0]).rem_euclid(PI);
    let ang = |t: f64| {
        let e = [t.cos(), t.sin()];
        let along = x[0] * e[0] + x[1] * e[1];
        let kinks = if pole { vec![along.abs()] } else { vec![] };
        radial(e, &kinks)
    };
    let mut angular = |t: f64| ang(t).0;
    let res = adaptive_breaks(&[0.0, theta0, PI], tol, 0.0, 400, &mut angular);
    Ok(PointValue { value: params.a_ds * res.value, error: params.a_ds * res.error })
}
