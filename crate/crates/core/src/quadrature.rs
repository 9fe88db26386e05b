//! Gauss–Legendre rules (cached), adaptive Gauss–Kronrod, and the single
//! record of quadrature knobs carried by `FracParams`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSettings {
    /// Pairs whose center distance is at most this many cells are "near".
    pub near_threshold: f64,
    /// Per-axis subdivision of near cells.
    pub subdivision: usize,
    pub near_gauss: usize,
    pub far_gauss: usize,
    /// Rule for the smooth angular factor left after a Duffy transform.
    pub duffy_gauss: usize,
    /// Base rule for the angular kernel K(σ).
    pub angular_points: usize,
    /// Angular rule for polar cell integrals of |x|^{-2s}.
    pub hardy_angular_points: usize,
    /// Angular rule for ball-complement tails.
    pub tail_angular_points: usize,
    /// Tail cutoff for principal-value evaluation.
    pub pv_tail_tol: f64,
    /// Relative tolerance for adaptive routes.
    pub adaptive_tol: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            near_threshold: 4.0,
            subdivision: 4,
            near_gauss: 16,
            far_gauss: 8,
            duffy_gauss: 48,
            angular_points: 128,
            hardy_angular_points: 64,
            tail_angular_points: 128,
            pv_tail_tol: 1e-8,
            adaptive_tol: 1e-10,
        }
    }
}

pub type Rule = Arc<Vec<(f64, f64)>>;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("quadrature cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let rule = if n == 1 {
                vec![(0.0, 2.0)]
            } else {
                GaussLegendre::new(n).expect("Gauss-Legendre degree >= 2").into_node_weight_pairs()
            };
            Arc::new(rule)
        })
        .clone()
}

/// Fixed-order Gauss–Legendre on [a, b].
pub fn gauss<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    let rule = gauss_legendre(n);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = 0.0;
    for &(x, w) in rule.iter() {
        acc += w * f(c + r * x);
    }
    acc * r
}

/// Gauss–Legendre on [a, b] with `pieces` equal panels.
pub fn gauss_composite<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, pieces: usize, mut f: F) -> f64 {
    let step = (b - a) / pieces as f64;
    (0..pieces).map(|k| gauss(a + k as f64 * step, a + (k + 1) as f64 * step, n, &mut f)).sum()
}

/// Panels on [a, b] refined geometrically toward `a` (ratio 1/2, `levels`
/// panels plus a final one touching `a`). Suited to integrable endpoint
/// singularities; refinement stops once panels reach rounding resolution
/// of `a`, so a singular endpoint is best placed at 0.
pub fn gauss_graded_left<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, levels: usize, mut f: F) -> f64 {
    let mut acc = 0.0;
    let mut hi = b;
    let floor = 1e3 * f64::EPSILON * a.abs();
    for _ in 0..levels {
        if hi - a <= floor {
            break;
        }
        let lo = a + 0.5 * (hi - a);
        acc += gauss(lo, hi, n, &mut f);
        hi = lo;
    }
    acc + gauss(a, hi, n, &mut f)
}

/// Same as `gauss_graded_left` with the refinement toward `b`.
pub fn gauss_graded_right<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, levels: usize, mut f: F) -> f64 {
    gauss_graded_left(-b, -a, n, levels, |t| f(-t))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> (f64, f64) {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = r * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// Result of an adaptive integration: value and error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adaptive {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss–Kronrod (7/15) on [a, b]: bisects the panel with
/// the largest error until the total estimate falls below
/// max(abs_tol, rel_tol·|I|) or `max_panels` is reached.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, rel_tol: f64, abs_tol: f64, mut f: F) -> Adaptive {
    adaptive_breaks(&[a, b], rel_tol, abs_tol, 2000, &mut f)
}

/// `adaptive` with initial breakpoints (sorted, at least two).
pub fn adaptive_breaks<F: FnMut(f64) -> f64>(
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
    f: &mut F,
) -> Adaptive {
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(w[0], w[1], f);
            panels.push((w[0], w[1], v, e));
        }
    }
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || panels.len() >= max_panels {
            return Adaptive { value: total, error: err };
        }
        let (idx, _) =
            panels.iter().enumerate().fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (a, b, _, _) = panels[idx];
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return Adaptive { value: total, error: err };
        }
        let (v1, e1) = gk15(a, m, f);
        let (v2, e2) = gk15(m, b, f);
        panels[idx] = (a, m, v1, e1);
        panels.push((m, b, v2, e2));
    }
}
