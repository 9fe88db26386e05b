//! Constrained Rayleigh-type minimization: the subcritical problem with its
//! 1/n regularization, and the critical constants S_N, S_λ, T_{λ,N}.
//!
//! Every objective has the form Q(u) = (u'Au − λ u'Wu) / ‖u‖_q² with W a
//! diagonal Hardy weight and ‖·‖_q the discrete L^q norm over Ω. All
//! reported constants are values at computed points, hence upper bounds on
//! the discrete infima.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, lp_functional, GridFunction, NonlocalForms, RadialWeight};
use crate::constants::FracParams;
use crate::error::{Error, Result};
use crate::geometry::{build_grid, dirichlet_closure, label_ball_config, FarField};
use crate::spectral::smallest_hardy_eigen;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemilinearSpec {
    pub lambda: f64,
    pub p: f64,
    /// Regularization index n of the weight 1/(|x|^{2s} + 1/n); None is n = ∞.
    pub reg_n: Option<f64>,
}

impl SemilinearSpec {
    pub fn check(&self, params: &FracParams) -> Result<()> {
        let top = params.critical_exponent() - 1.0;
        if !(self.p > 1.0 && self.p <= top * (1.0 + 1e-15)) {
            return Err(Error::Parameter(format!("p = {} must lie in (1, {top}]", self.p)));
        }
        if let Some(n) = self.reg_n {
            if !(n >= 1.0) {
                return Err(Error::Parameter(format!("regularization index {n} must be >= 1")));
            }
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Parameter("lambda must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn is_critical(&self, params: &FracParams) -> bool {
        (self.p + 1.0 - params.critical_exponent()).abs() <= 1e-12
    }

    fn weight(&self) -> RadialWeight {
        match self.reg_n {
            Some(n) => RadialWeight::Regularized { n },
            None => RadialWeight::Power,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizationResult {
    pub value: f64,
    pub minimizer: GridFunction,
    pub el_residual: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizerSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MinimizerSettings {
    fn default() -> Self {
        MinimizerSettings { tol: 1e-8, max_iter: 5000, restarts: 20, seed: 0 }
    }
}

/// The objective (u'Au − u'(shift∘u)) / ‖u‖_q² on fixed forms.
pub struct Objective<'a> {
    pub forms: &'a NonlocalForms,
    /// λ times the Hardy weight diagonal.
    pub shift: DVector<f64>,
    pub q: f64,
    chol: &'a Cholesky<f64, Dyn>,
}

impl<'a> Objective<'a> {
    pub fn new(
        forms: &'a NonlocalForms,
        chol: &'a Cholesky<f64, Dyn>,
        lambda: f64,
        weight: &DVector<f64>,
        q: f64,
    ) -> Self {
        Objective { forms, shift: weight * lambda, q, chol }
    }

    fn lp(&self, u: &DVector<f64>) -> f64 {
        lp_functional(self.forms, u, self.q).expect("q > 1 checked by callers")
    }

    pub fn numerator(&self, u: &DVector<f64>) -> f64 {
        self.forms.energy(u) - u.dot(&self.shift.component_mul(u))
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        let l = self.lp(u);
        self.numerator(u) / (l * l)
    }

    /// (Ku, ‖Au‖) and the nonlinear term M_Ω u^{q−1} for u ≥ 0.
    fn pieces(&self, u: &DVector<f64>) -> (DVector<f64>, f64, DVector<f64>) {
        let au = &self.forms.a * u;
        let ku = &au - self.shift.component_mul(u);
        let nl = DVector::from_fn(u.len(), |k, _| {
            if self.forms.dofs.is_omega[k] {
                self.forms.mass[k] * u[k].max(0.0).powf(self.q - 1.0)
            } else {
                0.0
            }
        });
        (ku, au.norm(), nl)
    }

    /// Q(v) − Q(u) for ‖u‖_q = 1 without cancellation: the numerator
    /// change is 2δ'Ku + δ'Kδ and the norm change goes through expm1/ln1p.
    /// Returns (ΔQ, ‖v‖_q).
    fn delta(&self, u: &DVector<f64>, ku: &DVector<f64>, value: f64, v: &DVector<f64>) -> (f64, f64) {
        let d = v - u;
        let kd = &self.forms.a * &d - self.shift.component_mul(&d);
        let dn = 2.0 * d.dot(ku) + d.dot(&kd);
        let q = self.q;
        let mut sum_q = 0.0;
        for k in 0..u.len() {
            if !self.forms.dofs.is_omega[k] {
                continue;
            }
            let term = if u[k] > 0.0 { u[k].powf(q) * (q * (d[k] / u[k]).ln_1p()).exp_m1() } else { v[k].powf(q) };
            sum_q += self.forms.mass[k] * term;
        }
        let l2m1 = ((2.0 / q) * sum_q.ln_1p()).exp_m1();
        ((dn - value * l2m1) / (1.0 + l2m1), (1.0 + sum_q).powf(1.0 / q))
    }

    /// Projected, A-preconditioned gradient descent with Armijo backtracking
    /// on the set u ≥ 0, iterates kept at ‖u‖_q = 1. The history accumulates
    /// the accepted decrements (each strictly negative), so it never
    /// increases even when single decrements fall below one ulp.
    pub fn minimize(&self, init: &DVector<f64>, tol: f64, max_iter: usize) -> Result<MinimizationResult> {
        let mut u = init.map(|x| x.max(0.0));
        let l = self.lp(&u);
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::Parameter("initial guess has no positive mass on Omega".into()));
        }
        u /= l;
        let mut value = self.value(&u);
        let mut history = vec![value];
        let mut step: f64 = 1.0;
        let mut el = f64::INFINITY;
        for it in 0..=max_iter {
            let (ku, au_norm, nl) = self.pieces(&u);
            let r = &ku - &nl * value;
            el = r.norm() / au_norm;
            if el < tol {
                return Ok(self.result(u, value, el, history, it, true));
            }
            if it == max_iter {
                break;
            }
            let g = &r * 2.0;
            let dir = -self.chol.solve(&g);
            step = (2.0 * step).min(1.0);
            let mut accepted = None;
            while step > 1e-16 {
                let v = (&u + &dir * step).map(|x| x.max(0.0));
                let slope = g.dot(&(&v - &u));
                if slope < 0.0 {
                    let (dq, lv) = self.delta(&u, &ku, value, &v);
                    if lv > 0.0 && dq < 0.0 && dq <= 1e-4 * slope {
                        accepted = Some((v / lv, dq));
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((v, dq)) => {
                    u = v;
                    let last = *history.last().expect("history starts non-empty");
                    history.push(last + dq);
                    value = self.value(&u);
                }
                None => break,
            }
        }
        let it = history.len() - 1;
        Ok(self.result(u, value, el, history, it, false))
    }

    fn result(
        &self,
        u: DVector<f64>,
        value: f64,
        el: f64,
        history: Vec<f64>,
        it: usize,
        converged: bool,
    ) -> MinimizationResult {
        MinimizationResult {
            value,
            minimizer: GridFunction { values: u },
            el_residual: el,
            history,
            iterations: it,
            converged,
        }
    }
}

fn factor(forms: &NonlocalForms) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(forms.a.clone())
        .ok_or_else(|| Error::Factorization("stiffness matrix is not positive definite".into()))
}

fn require_converged(r: MinimizationResult, what: &str) -> Result<MinimizationResult> {
    if r.converged {
        Ok(r)
    } else {
        Err(Error::NonConvergence {
            what: what.into(),
            iterations: r.iterations,
            last_value: r.value,
            last_iterate: r.minimizer.values.iter().copied().collect(),
            history: r.history,
        })
    }
}

/// (Λ_{N,h}, Λ_h^{Dir}): the mixed eigenvalue and that of the same Ω with
/// everything else Dirichlet.
pub fn discrete_window(forms: &NonlocalForms) -> Result<(f64, f64)> {
    let mixed = smallest_hardy_eigen(forms, 1e-10, 1000)?.lambda_h;
    let config = crate::geometry::DNConfig {
        grid: forms.grid.clone(),
        kind: crate::geometry::GeometryKind::Custom,
        allow_empty_dirichlet: false,
    };
    let dir = assemble(&dirichlet_closure(&config)?, &forms.params)?;
    let full = smallest_hardy_eigen(&dir, 1e-10, 1000)?.lambda_h;
    Ok((mixed, full))
}

/// Minimizes (u'Au − λu'H_n u)/‖u‖²_{p+1} over u ≥ 0 from `init` (the
/// Λ_N eigenfunction when None), requiring Λ_{N,h} < λ < Λ_h^{Dir}.
pub fn subcritical_minimize(
    forms: &NonlocalForms,
    spec: &SemilinearSpec,
    init: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<MinimizationResult> {
    let window = discrete_window(forms)?;
    subcritical_minimize_in(forms, spec, init, tol, max_iter, window)
}

/// `subcritical_minimize` with a precomputed window (Λ_{N,h}, Λ_h^{Dir}).
pub fn subcritical_minimize_in(
    forms: &NonlocalForms,
    spec: &SemilinearSpec,
    init: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
    window: (f64, f64),
) -> Result<MinimizationResult> {
    spec.check(&forms.params)?;
    if spec.is_critical(&forms.params) {
        return Err(Error::Parameter("p must be subcritical here; use the critical routines".into()));
    }
    let (lo, hi) = window;
    if !(lo < spec.lambda && spec.lambda < hi) {
        return Err(Error::Parameter(format!("lambda = {} outside the window ({lo}, {hi})", spec.lambda)));
    }
    let chol = factor(forms)?;
    let weight = forms.hardy_with(spec.weight());
    let obj = Objective::new(forms, &chol, spec.lambda, &weight, spec.p + 1.0);
    let start = match init {
        Some(u) => u.clone(),
        None => smallest_hardy_eigen(forms, 1e-10, 1000)?.eigvec.values,
    };
    require_converged(obj.minimize(&start, tol, max_iter)?, "subcritical minimization")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegRow {
    /// None is n = ∞.
    pub n: Option<f64>,
    pub value: f64,
    pub el_residual: f64,
}

/// Regularization sweep, each level warm-started from the previous
/// minimizer. Since the weights grow with n, the values are non-increasing.
pub fn regularization_sweep(
    forms: &NonlocalForms,
    lambda: f64,
    p: f64,
    ns: &[Option<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<RegRow>> {
    let window = discrete_window(forms)?;
    let mut init: Option<DVector<f64>> = None;
    let mut rows = Vec::new();
    for &n in ns {
        let spec = SemilinearSpec { lambda, p, reg_n: n };
        let r = subcritical_minimize_in(forms, &spec, init.as_ref(), tol, max_iter, window)?;
        rows.push(RegRow { n, value: r.value, el_residual: r.el_residual });
        init = Some(r.minimizer.values);
    }
    Ok(rows)
}

/// exp(g), g standard normal per DOF, from a ChaCha8 stream.
pub fn random_positive(nd: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(nd, |_, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        g.exp()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStart {
    pub value: f64,
    /// Index of the winning start (0 is the deterministic start).
    pub best: usize,
    pub values: Vec<f64>,
    pub converged: Vec<bool>,
    /// (max − min)/min over all starts.
    pub spread: f64,
    pub minimizer: DVector<f64>,
}

fn multi_start(obj: &Objective, starts: &[DVector<f64>], settings: &MinimizerSettings) -> Result<MultiStart> {
    let runs =
        starts.par_iter().map(|u| obj.minimize(u, settings.tol, settings.max_iter)).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.value < runs[best].value {
            best = k;
        }
    }
    let values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values[best];
    Ok(MultiStart {
        value: lo,
        best,
        spread: (hi - lo) / lo.abs(),
        converged: runs.iter().map(|r| r.converged).collect(),
        values,
        minimizer: runs[best].minimizer.values.clone(),
    })
}

fn starts(
    forms: &NonlocalForms,
    first: DVector<f64>,
    extra: &[DVector<f64>],
    settings: &MinimizerSettings,
) -> Vec<DVector<f64>> {
    let mut v = vec![first];
    v.extend(extra.iter().cloned());
    for k in 0..settings.restarts {
        v.push(random_positive(forms.ndof(), settings.seed.wrapping_add(k as u64)));
    }
    v
}

/// Best value of (u'Au − λu'Hu)/‖u‖²_{2*_s} over the eigenfunction start,
/// the `extra` starts and `settings.restarts` seeded random starts.
pub fn critical_quotient_min(
    forms: &NonlocalForms,
    lambda: f64,
    extra: &[DVector<f64>],
    settings: &MinimizerSettings,
) -> Result<MultiStart> {
    let chol = factor(forms)?;
    let obj = Objective::new(forms, &chol, lambda, &forms.hardy, forms.params.critical_exponent());
    let eig = smallest_hardy_eigen(forms, 1e-10, 1000)?.eigvec.values;
    multi_start(&obj, &starts(forms, eig, extra, settings), settings)
}

/// S_{N,h}: the best Sobolev quotient u'Au/‖u‖²_{2*_s}.
pub fn sobolev_constant(forms: &NonlocalForms, settings: &MinimizerSettings) -> Result<MultiStart> {
    critical_quotient_min(forms, 0.0, &[], settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub half_width: f64,
    pub n: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholeSpaceEstimate {
    pub value: f64,
    pub uncertainty: f64,
    /// False when the c₀ + c₁/L fit was rejected and the largest box used.
    pub extrapolated: bool,
    pub boxes: Vec<BoxRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxSettings {
    /// Box half-widths as integer multiples of the base box (h fixed).
    pub scales: Vec<usize>,
    /// Ω radius as a fraction of the box half-width.
    pub radius_fraction: f64,
    pub restarts: usize,
}

impl Default for BoxSettings {
    fn default() -> Self {
        BoxSettings { scales: vec![1, 2, 4], radius_fraction: 0.5, restarts: 4 }
    }
}

/// S_λ from full-Dirichlet balls in growing boxes at the grid spacing of
/// `forms`, extrapolated in 1/L.
pub fn whole_space_constant(
    forms: &NonlocalForms,
    lambda: f64,
    boxes: &BoxSettings,
    settings: &MinimizerSettings,
) -> Result<WholeSpaceEstimate> {
    let params = &forms.params;
    if !(lambda >= 0.0 && lambda < params.hardy_constant()) {
        return Err(Error::Parameter(format!("S_lambda needs 0 <= lambda < Lambda, got {lambda}")));
    }
    if boxes.scales.len() < 2 {
        return Err(Error::Parameter("need at least two box scales".into()));
    }
    let (l0, n0) = (forms.grid.half_width, forms.grid.n);
    let local = MinimizerSettings { restarts: boxes.restarts, ..*settings };
    let mut rows = Vec::new();
    for &c in &boxes.scales {
        let grid = build_grid(params.d, l0 * c as f64, n0 * c, FarField::FarDirichlet)?;
        let r = boxes.radius_fraction * grid.half_width;
        let config = label_ball_config(&grid, r, (r, grid.half_width * (params.d as f64).sqrt()))?;
        let f = assemble(&config, params)?;
        let m = critical_quotient_min(&f, lambda, &[], &local)?;
        if !(m.value > 0.0) {
            return Err(Error::Parameter(format!(
                "lambda = {lambda} exceeds the discrete Dirichlet constant of a test box"
            )));
        }
        rows.push(BoxRow { half_width: grid.half_width, n: grid.n, value: m.value });
    }
    let xs: Vec<f64> = rows.iter().map(|b| 1.0 / b.half_width).collect();
    let ys: Vec<f64> = rows.iter().map(|b| b.value).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let c0 = my - sxy / sxx * mx;
    let last = *ys.last().expect("at least two boxes");
    let (value, extrapolated) = if c0 > 0.0 && c0 <= last { (c0, true) } else { (last, false) };
    Ok(WholeSpaceEstimate { value, uncertainty: (last - c0).abs(), extrapolated, boxes: rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalConstants {
    pub lambda: f64,
    pub lambda_n: f64,
    pub s_n: f64,
    pub s_n_spread: f64,
    pub s_lambda: WholeSpaceEstimate,
    pub t: f64,
    pub t_spread: f64,
    /// T − (1 − λ/Λ_{N,h})·S_N with both constants as computed.
    pub lower_bound_margin: f64,
    /// The same inequality at the T-minimizer u: Q_λ(u) − (1 − λ/Λ_{N,h})·Q_0(u).
    pub pointwise_margin: f64,
    pub seed: u64,
}

/// S_N, S_λ and T_{λ,N} for 0 ≤ λ < Λ_{N,h}. The T-minimizer is also used
/// as a start for S_N, so the computed S_N never exceeds its Sobolev
/// quotient.
pub fn critical_constants(
    forms: &NonlocalForms,
    lambda: f64,
    boxes: &BoxSettings,
    settings: &MinimizerSettings,
) -> Result<CriticalConstants> {
    let lambda_n = smallest_hardy_eigen(forms, 1e-10, 1000)?.lambda_h;
    if !(lambda >= 0.0 && lambda < lambda_n) {
        return Err(Error::Parameter(format!("need 0 <= lambda < Lambda_N,h = {lambda_n}, got {lambda}")));
    }
    let t = critical_quotient_min(forms, lambda, &[], settings)?;
    let s_n = critical_quotient_min(forms, 0.0, std::slice::from_ref(&t.minimizer), settings)?;
    let s_lambda = whole_space_constant(forms, lambda, boxes, settings)?;
    let factor = 1.0 - lambda / lambda_n;
    let chol = self::factor(forms)?;
    let sob = Objective::new(forms, &chol, 0.0, &forms.hardy, forms.params.critical_exponent());
    let pointwise_margin = t.value - factor * sob.value(&t.minimizer);
    Ok(CriticalConstants {
        lambda,
        lambda_n,
        s_n: s_n.value,
        s_n_spread: s_n.spread,
        s_lambda,
        t: t.value,
        t_spread: t.spread,
        lower_bound_margin: t.value - factor * s_n.value,
        pointwise_margin,
        seed: settings.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCheck {
    pub constants: CriticalConstants,
    /// T − min{S_λ, S_N}.
    pub gap: f64,
    pub uncertainty: f64,
    pub condition_holds: bool,
}

/// T_{λ,N} < min{S_λ, S_N} beyond the combined uncertainty. The restart
/// spread of each minimized constant and the extrapolation error of S_λ are
/// the uncertainties.
pub fn existence_condition_check(
    forms: &NonlocalForms,
    lambda: f64,
    boxes: &BoxSettings,
    settings: &MinimizerSettings,
) -> Result<ExistenceCheck> {
    let c = critical_constants(forms, lambda, boxes, settings)?;
    Ok(existence_from(c))
}

fn existence_from(c: CriticalConstants) -> ExistenceCheck {
    let (smin, su) = if c.s_lambda.value <= c.s_n {
        (c.s_lambda.value, c.s_lambda.uncertainty)
    } else {
        (c.s_n, c.s_n_spread * c.s_n)
    };
    let gap = c.t - smin;
    let uncertainty = su + c.t_spread * c.t.abs();
    ExistenceCheck { gap, uncertainty, condition_holds: gap + uncertainty < 0.0, constants: c }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBarRow {
    pub lambda: f64,
    /// (Λ_{N,h} − λ)·ū'Hū with ‖ū‖_{2*_s} = 1.
    pub upper_bound: f64,
    pub s_min: f64,
    pub below: bool,
    pub existence: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBar {
    pub lambda_n: f64,
    pub lambda_dir: f64,
    pub s_n: f64,
    pub ubar_hardy: f64,
    pub lambda_bar: Option<f64>,
    pub rows: Vec<LambdaBarRow>,
}

/// Smallest sampled λ whose upper bound on T_{λ,N} drops below
/// min{S_λ, S_N}; with `check_existence` each λ also gets the full check.
pub fn lambda_bar_search(
    forms: &NonlocalForms,
    lambdas: &[f64],
    boxes: &BoxSettings,
    settings: &MinimizerSettings,
    check_existence: bool,
) -> Result<LambdaBar> {
    let (lambda_n, lambda_dir) = discrete_window(forms)?;
    if !(lambda_n < lambda_dir) {
        return Err(Error::Parameter(format!("need Lambda_N,h = {lambda_n} < Lambda_h^Dir = {lambda_dir}")));
    }
    let eig = smallest_hardy_eigen(forms, 1e-10, 1000)?;
    let q = forms.params.critical_exponent();
    let ubar = &eig.eigvec.values / lp_functional(forms, &eig.eigvec.values, q)?;
    let ubar_hardy = forms.hardy_norm2(&ubar);
    let s_n = sobolev_constant(forms, settings)?.value;
    let mut rows = Vec::new();
    for &lambda in lambdas {
        if !(lambda >= 0.0 && lambda <= lambda_n) {
            return Err(Error::Parameter(format!("lambda = {lambda} outside [0, Lambda_N,h]")));
        }
        let s_lambda = whole_space_constant(forms, lambda, boxes, settings)?;
        let s_min = s_lambda.value.min(s_n);
        let upper_bound = (lambda_n - lambda) * ubar_hardy;
        let existence = if check_existence && lambda < lambda_n {
            Some(existence_condition_check(forms, lambda, boxes, settings)?.condition_holds)
        } else {
            None
        };
        rows.push(LambdaBarRow { lambda, upper_bound, s_min, below: upper_bound < s_min, existence });
    }
    let lambda_bar = rows
        .iter()
        .filter(|r| r.below)
        .map(|r| r.lambda)
        .fold(None, |a: Option<f64>, l| Some(a.map_or(l, |x| x.min(l))));
    Ok(LambdaBar { lambda_n, lambda_dir, s_n, ubar_hardy, lambda_bar, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{label_ball_config, shrinking_family};

    fn params() -> FracParams {
        FracParams::new(1, 0.25).unwrap()
    }

    /// Attained-like mixed configuration: Λ_{N,h} well below Λ_h^{Dir}.
    fn mixed() -> NonlocalForms {
        let g = build_grid(1, 1.0, 64, FarField::FarNeumannTruncated).unwrap();
        let base = label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap();
        assemble(&shrinking_family(&base, 2).unwrap(), &params()).unwrap()
    }

    #[test]
    fn subcritical_negative_value_and_monotone_history() {
        let f = mixed();
        let (lo, hi) = discrete_window(&f).unwrap();
        assert!(lo < hi);
        let spec = SemilinearSpec { lambda: 0.5 * (lo + hi), p: 2.0, reg_n: None };
        let r = subcritical_minimize(&f, &spec, None, 1e-8, 5000).unwrap();
        assert!(r.value < 0.0);
        assert!(r.el_residual < 1e-8);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.history.last() < r.history.first());
        let l = lp_functional(&f, &r.minimizer.values, 3.0).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        // The eigenfunction start is already negative.
        let eig = smallest_hardy_eigen(&f, 1e-10, 500).unwrap().eigvec.values;
        let chol = factor(&f).unwrap();
        let obj = Objective::new(&f, &chol, spec.lambda, &f.hardy, 3.0);
        assert!(r.value <= obj.value(&eig));
        assert!((obj.value(&eig) - obj.value(&(&eig * 2.5))).abs() < 1e-12 * obj.value(&eig).abs());
    }

    #[test]
    fn window_and_exponent_rejected() {
        let f = mixed();
        let (lo, _) = discrete_window(&f).unwrap();
        let below = SemilinearSpec { lambda: 0.5 * lo, p: 2.0, reg_n: None };
        assert!(matches!(subcritical_minimize(&f, &below, None, 1e-8, 100), Err(Error::Parameter(_))));
        let bad_p = SemilinearSpec { lambda: lo, p: 3.5, reg_n: None };
        assert!(bad_p.check(&f.params).is_err());
    }

    #[test]
    fn regularization_values_non_increasing() {
        let f = mixed();
        let (lo, hi) = discrete_window(&f).unwrap();
        let ns = [Some(1.0), Some(10.0), Some(100.0), None];
        let rows = regularization_sweep(&f, 0.5 * (lo + hi), 2.0, &ns, 1e-8, 5000).unwrap();
        assert!(rows.windows(2).all(|w| w[1].value <= w[0].value));
    }

    #[test]
    fn sobolev_positive_and_minimal() {
        let f = mixed();
        let s = MinimizerSettings { restarts: 4, ..Default::default() };
        let m = sobolev_constant(&f, &s).unwrap();
        assert!(m.value > 0.0);
        let chol = factor(&f).unwrap();
        let obj = Objective::new(&f, &chol, 0.0, &f.hardy, f.params.critical_exponent());
        let flat = DVector::from_element(f.ndof(), 1.0);
        assert!(m.value <= obj.value(&flat));
        let again = sobolev_constant(&f, &s).unwrap();
        assert_eq!(m.values, again.values);
    }

    #[test]
    fn t_at_zero_is_sobolev_and_bound_holds() {
        let f = mixed();
        let s = MinimizerSettings { restarts: 2, ..Default::default() };
        let b = BoxSettings { scales: vec![1, 2], ..Default::default() };
        let c0 = critical_constants(&f, 0.0, &b, &s).unwrap();
        assert!((c0.t - c0.s_n).abs() <= 1e-10 * c0.s_n);
        let ln = c0.lambda_n;
        let c = critical_constants(&f, 0.5 * ln, &b, &s).unwrap();
        assert!(c.lower_bound_margin >= -1e-12 && c.pointwise_margin >= -1e-12);
        assert!(c.s_lambda.value < c0.s_lambda.value);
        assert!(matches!(critical_constants(&f, ln, &b, &s), Err(Error::Parameter(_))));
    }

    #[test]
    fn upper_bound_is_linear() {
        let f = mixed();
        let s = MinimizerSettings { restarts: 2, ..Default::default() };
        let b = BoxSettings { scales: vec![1, 2], ..Default::default() };
        let (ln, _) = discrete_window(&f).unwrap();
        let r = lambda_bar_search(&f, &[0.5 * ln, 0.9 * ln, ln], &b, &s, false).unwrap();
        let slope = (r.rows[1].upper_bound - r.rows[0].upper_bound) / (0.4 * ln);
        assert!((slope + r.ubar_hardy).abs() < 1e-10 * r.ubar_hardy);
        assert_eq!(r.rows[2].upper_bound, 0.0);
        assert!(r.rows[2].below && r.lambda_bar.is_some());
    }
}
