//! The smallest eigenpair of the pencil (A, H), its spectral gap, the
//! shrinking-Dirichlet collapse experiment and the exponent fit near the pole.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, GridFunction, NonlocalForms};
use crate::constants::FracParams;
use crate::error::{Error, Result};
use crate::geometry::{shrinking_family, DNConfig, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-10, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub lambda_h: f64,
    pub eigvec: GridFunction,
    /// ‖Au − λHu‖₂ / ‖u‖₂ for the max-normalized eigenvector.
    pub residual: f64,
    pub iterations: usize,
    pub gap: Option<f64>,
}

/// Flip so the Ω-mean is positive (ties: largest-magnitude entry positive),
/// then scale to max-norm 1.
pub fn sign_normalize(forms: &NonlocalForms, u: &mut DVector<f64>) {
    let mean: f64 = forms.dofs.omega_dofs().iter().map(|&k| u[k]).sum();
    let flip = if mean != 0.0 {
        mean < 0.0
    } else {
        let k = u.iamax();
        u[k] < 0.0
    };
    if flip {
        u.neg_mut();
    }
    let m = u.amax();
    if m > 0.0 {
        *u /= m;
    }
}

fn weighted_norm2(w: &DVector<f64>, u: &DVector<f64>) -> f64 {
    u.iter().zip(w.iter()).map(|(x, w)| w * x * x).sum()
}

fn degenerate_answer(forms: &NonlocalForms) -> Error {
    let one = DVector::from_element(forms.ndof(), 1.0);
    let lambda = (forms.energy(&one) / forms.hardy_norm2(&one)).max(0.0);
    Error::Degenerate { lambda, eigvec: one.iter().copied().collect() }
}

fn is_pure_neumann(forms: &NonlocalForms) -> bool {
    forms.grid.far_field == crate::geometry::FarField::FarNeumannTruncated && forms.grid.count(Label::Dirichlet) == 0
}

/// Smallest generalized eigenvalue of (A, H) by inverse iteration from the
/// indicator of Ω. Once the Rayleigh quotient settles to 1e-4, one shifted
/// factorization A − σH (σ just below the estimate) speeds up the finish.
pub fn smallest_hardy_eigen(forms: &NonlocalForms, tol: f64, max_iter: usize) -> Result<SpectralResult> {
    smallest_weighted_eigen(forms, &forms.hardy, tol, max_iter)
}

/// `smallest_hardy_eigen` for the pencil (A, diag(weight)), the weight
/// nonnegative and positive somewhere on Ω.
pub fn smallest_weighted_eigen(
    forms: &NonlocalForms,
    weight: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralResult> {
    if is_pure_neumann(forms) {
        return Err(degenerate_answer(forms));
    }
    if weight.len() != forms.ndof() || weight.iter().any(|&h| h < 0.0) || weight.iter().all(|&h| h == 0.0) {
        return Err(Error::Parameter("weight must be nonnegative, nonzero and sized to the DOFs".into()));
    }
    let chol = Cholesky::new(forms.a.clone())
        .ok_or_else(|| Error::Factorization("stiffness matrix is not positive definite".into()))?;
    let mut shifted: Option<Cholesky<f64, Dyn>> = None;
    let mut u = DVector::from_fn(forms.ndof(), |k, _| if forms.dofs.is_omega[k] { 1.0 } else { 0.0 });
    u /= weighted_norm2(weight, &u).sqrt();
    let mut au = &forms.a * &u;
    let mut lambda = u.dot(&au) / weighted_norm2(weight, &u);
    let mut history = vec![lambda];
    for it in 1..=max_iter {
        let hu = u.component_mul(weight);
        let w = match &shifted {
            Some(c) => c.solve(&hu),
            None => chol.solve(&hu),
        };
        u = &w / weighted_norm2(weight, &w).sqrt();
        au = &forms.a * &u;
        let new = u.dot(&au) / weighted_norm2(weight, &u);
        let res = &au - u.component_mul(weight) * new;
        let rel = res.norm() / au.norm();
        let dl = (new - lambda).abs();
        lambda = new;
        history.push(lambda);
        if dl < tol * lambda && rel < tol {
            sign_normalize(forms, &mut u);
            let au = &forms.a * &u;
            let residual = (&au - u.component_mul(weight) * lambda).norm() / u.norm();
            return Ok(SpectralResult {
                lambda_h: lambda,
                eigvec: GridFunction { values: u },
                residual,
                iterations: it,
                gap: None,
            });
        }
        if shifted.is_none() && dl < 1e-4 * lambda {
            for offset in [1e-2, 5e-2, 2e-1] {
                let sigma = lambda * (1.0 - offset);
                let mut m = forms.a.clone();
                for k in 0..forms.ndof() {
                    m[(k, k)] -= sigma * weight[k];
                }
                if let Some(c) = Cholesky::new(m) {
                    shifted = Some(c);
                    break;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        what: "inverse iteration for the Hardy eigenvalue".into(),
        iterations: max_iter,
        last_value: lambda,
        last_iterate: u.iter().copied().collect(),
        history,
    })
}

/// Rayleigh quotient u'Au / u'Hu.
pub fn hardy_quotient(forms: &NonlocalForms, u: &DVector<f64>) -> Result<f64> {
    let den = forms.hardy_norm2(u);
    if !(den > 0.0) {
        return Err(Error::Parameter("u'Hu must be positive".into()));
    }
    Ok(forms.energy(u) / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gap: f64,
    /// Raised when the gap is below 1e-10·λ₁.
    pub multiplicity_warning: bool,
    /// Raised when the first eigenvector changes sign on Ω.
    pub sign_warning: bool,
    pub eigvec1: DVector<f64>,
}

/// Two smallest pencil eigenvalues by dense reduction: the N unknowns are
/// eliminated through the Schur complement (A_NN is diagonal because N–N
/// pairs carry no energy), then H_Ω^{−1/2} S H_Ω^{−1/2} is diagonalized.
pub fn spectral_gap(forms: &NonlocalForms) -> Result<GapResult> {
    let nd = forms.ndof();
    if nd > 4096 {
        return Err(Error::Parameter(format!("dense gap path limited to 4096 DOFs, got {nd}")));
    }
    let om = forms.dofs.omega_dofs();
    let nn = forms.dofs.neumann_dofs();
    if om.len() < 2 {
        return Err(Error::Parameter("need at least two Omega cells".into()));
    }
    let ann: Vec<f64> = nn.iter().map(|&k| forms.a[(k, k)]).collect();
    if ann.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Factorization("A_NN has a nonpositive diagonal entry".into()));
    }
    let no = om.len();
    let mut s = DMatrix::from_fn(no, no, |r, c| forms.a[(om[r], om[c])]);
    if !nn.is_empty() {
        let b = DMatrix::from_fn(nn.len(), no, |r, c| forms.a[(nn[r], om[c])] / ann[r].sqrt());
        s -= b.transpose() * &b;
    }
    let hinv: Vec<f64> = om.iter().map(|&k| 1.0 / forms.hardy[k].sqrt()).collect();
    let m = DMatrix::from_fn(no, no, |r, c| hinv[r] * s[(r, c)] * hinv[c]);
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..no).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let y = eig.eigenvectors.column(order[0]);
    let mut u = DVector::zeros(nd);
    for (r, &k) in om.iter().enumerate() {
        u[k] = hinv[r] * y[r];
    }
    for (r, &k) in nn.iter().enumerate() {
        let mut acc = 0.0;
        for &c in &om {
            acc += forms.a[(k, c)] * u[c];
        }
        u[k] = -acc / ann[r];
    }
    sign_normalize(forms, &mut u);
    let tiny = 1e-12 * u.amax();
    let sign_warning = om.iter().any(|&k| u[k] < -tiny);
    Ok(GapResult {
        lambda1: l1,
        lambda2: l2,
        gap: l2 - l1,
        multiplicity_warning: l2 - l1 < 1e-10 * l1.abs(),
        sign_warning,
        eigvec1: u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkRow {
    pub k: usize,
    pub dirichlet_cells: usize,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkResult {
    pub rows: Vec<ShrinkRow>,
    pub ratio: f64,
    pub monotone: bool,
}

/// λ_k for k = 0..=k_max along the shrinking family (k = 0 is the base).
pub fn shrinking_dirichlet_experiment(
    base: &DNConfig,
    params: &FracParams,
    k_max: usize,
    solver: SolverSettings,
) -> Result<ShrinkResult> {
    let mut rows = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let config = if k == 0 { base.clone() } else { shrinking_family(base, k)? };
        let forms = assemble(&config, params)?;
        let r = smallest_hardy_eigen(&forms, solver.tol, solver.max_iter)?;
        rows.push(ShrinkRow {
            k,
            dirichlet_cells: config.grid.count(Label::Dirichlet),
            lambda: r.lambda_h,
            residual: r.residual,
            iterations: r.iterations,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].lambda <= w[0].lambda + 1e-12);
    let ratio = rows[k_max].lambda / rows[0].lambda;
    Ok(ShrinkResult { rows, ratio, monotone })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub alpha_hat: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Negated least-squares slope of log|u| against log|x| over Ω cell centers
/// with r_min ≤ |x| ≤ r_max, the cells at the origin excluded.
pub fn singularity_exponent_fit(
    forms: &NonlocalForms,
    eigvec: &GridFunction,
    window: (f64, f64),
) -> Result<ExponentFit> {
    let (r_min, r_max) = window;
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(Error::Window(format!("bad window ({r_min}, {r_max})")));
    }
    let origin = forms.grid.origin_cells();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in forms.dofs.omega_dofs() {
        let cell = forms.dofs.cell_of[k];
        if origin.contains(&cell) {
            continue;
        }
        let r = forms.grid.radius(cell);
        let v = eigvec.values[k].abs();
        if r >= r_min && r <= r_max && v > 0.0 {
            xs.push(r.ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 6 {
        return Err(Error::Window(format!("{} samples in window, need at least 6", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Window("all samples at one radius".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ExponentFit { alpha_hat: -slope, r_squared, samples: xs.len() })
}
