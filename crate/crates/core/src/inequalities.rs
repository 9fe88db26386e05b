//! Discrete checks of the Hardy, Poincaré, Sobolev and regional
//! inequalities, the Picone inequality with its remainder identity, and the
//! Green identity, plus a seeded fuzz harness running all of them.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, discrete_operators, lp_functional, NonlocalForms};
use crate::constants::FracParams;
use crate::error::{Error, Result};
use crate::geometry::DNConfig;
use crate::semilinear::{sobolev_constant, MinimizerSettings};
use crate::spectral::{smallest_hardy_eigen, smallest_weighted_eigen};

/// Slack for quotient lower bounds and the Picone margin.
pub const QUOTIENT_SLACK: f64 = 1e-10;
/// Tolerance for identities that hold by construction.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiconeCheck {
    /// v'Av − Σ (v_i²/u_i)(Au)_i.
    pub margin: f64,
    /// The explicit pair sum Σ c_ij (v_i√(u_j/u_i) − v_j√(u_i/u_j))².
    pub remainder: f64,
}

/// Picone's inequality in discrete form. The left side uses the operator
/// rows of Au (discrete (−Δ)^s on Ω, discrete N_s on N).
pub fn picone_check(u: &DVector<f64>, v: &DVector<f64>, forms: &NonlocalForms) -> Result<PiconeCheck> {
    if u.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Parameter("u must be positive on every Omega and NEUMANN cell".into()));
    }
    let ops = discrete_operators(forms, u);
    let mut lhs = 0.0;
    for (&k, &r) in ops.omega_dofs.iter().zip(&ops.laplacian).chain(ops.neumann_dofs.iter().zip(&ops.neumann)) {
        lhs += v[k] * v[k] / u[k] * r;
    }
    let rhs = forms.energy(v);
    let nd = forms.ndof();
    let rows: Vec<f64> = (0..nd)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in (i + 1)..nd {
                let c = forms.coupling(i, j);
                if c != 0.0 {
                    let t = v[i] * u[j] - v[j] * u[i];
                    acc += c * t * t / (u[i] * u[j]);
                }
            }
            acc
        })
        .collect();
    let remainder = rows.iter().sum();
    Ok(PiconeCheck { margin: rhs - lhs, remainder })
}

/// |Σ_Ω v·(−Δ)^s_h u − u'Av + Σ_N v·N_{s,h} u| with u'Av taken from the pair
/// sum, independently of the assembled matrix.
pub fn green_identity_check(u: &DVector<f64>, v: &DVector<f64>, forms: &NonlocalForms) -> f64 {
    let ops = discrete_operators(forms, u);
    let om: f64 = ops.omega_dofs.iter().zip(&ops.laplacian).map(|(&k, r)| v[k] * r).sum();
    let nm: f64 = ops.neumann_dofs.iter().zip(&ops.neumann).map(|(&k, r)| v[k] * r).sum();
    (om - forms.bilinear_pairs(u, v) + nm).abs()
}

fn omega_mass(forms: &NonlocalForms) -> DVector<f64> {
    DVector::from_fn(forms.ndof(), |k, _| if forms.dofs.is_omega[k] { forms.mass[k] } else { 0.0 })
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if !(den > 0.0) {
        return Err(Error::Parameter(format!("{what}: zero denominator")));
    }
    Ok(num / den)
}

pub fn hardy_quotient(u: &DVector<f64>, forms: &NonlocalForms) -> Result<f64> {
    ratio(forms.energy(u), forms.hardy_norm2(u), "Hardy quotient")
}

/// u'Au / Σ_Ω h^d u².
pub fn poincare_quotient(u: &DVector<f64>, forms: &NonlocalForms) -> Result<f64> {
    let m = omega_mass(forms);
    let den: f64 = u.iter().zip(m.iter()).map(|(x, w)| w * x * x).sum();
    ratio(forms.energy(u), den, "Poincare quotient")
}

/// u'Au / ‖u‖²_{L^{2*_s}(Ω)}.
pub fn sobolev_quotient(u: &DVector<f64>, forms: &NonlocalForms) -> Result<f64> {
    let l = lp_functional(forms, u, forms.params.critical_exponent())?;
    ratio(forms.energy(u), l * l, "Sobolev quotient")
}

/// Ω×Ω energy over u'Hu.
pub fn regional_quotient(u: &DVector<f64>, forms: &NonlocalForms) -> Result<f64> {
    ratio(forms.regional_energy(u), forms.hardy_norm2(u), "regional quotient")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub trials: usize,
    /// min over trials of (RHS − LHS) for inequalities, of (−|residual|) for
    /// identities.
    pub worst_margin: f64,
    /// Trial indices that violated the check (seeded from the suite seed).
    pub failures: Vec<u64>,
}

/// Reference constants the quotient checks compare against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub hardy: f64,
    pub poincare: f64,
    pub sobolev: f64,
}

pub fn reference_bounds(forms: &NonlocalForms) -> Result<Bounds> {
    let hardy = smallest_hardy_eigen(forms, 1e-12, 1000)?.lambda_h;
    let poincare = smallest_weighted_eigen(forms, &omega_mass(forms), 1e-12, 1000)?.lambda_h;
    let settings = MinimizerSettings { restarts: 4, tol: 1e-10, ..Default::default() };
    let sobolev = sobolev_constant(forms, &settings)?.value;
    Ok(Bounds { hardy, poincare, sobolev })
}

const NAMES: [&str; 9] = [
    "picone",
    "picone_remainder_identity",
    "picone_equality_c1",
    "picone_equality_c3",
    "picone_equality_cm2",
    "green_identity",
    "hardy",
    "poincare",
    "sobolev",
];

/// Margins of one trial, in the order of `NAMES`, then the regional pair
/// (regional quotient, full-minus-regional energy).
fn trial(forms: &NonlocalForms, bounds: &Bounds, seed: u64, k: u64) -> Result<(Vec<(f64, bool)>, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let nd = forms.ndof();
    let mut normal = || DVector::from_fn(nd, |_, _| StandardNormal.sample(&mut rng));
    let g = normal();
    let mut u = g.map(f64::exp);
    u /= forms.energy(&u).sqrt();
    let mut v = normal();
    v /= forms.energy(&v).sqrt();
    let mut w = normal();
    w /= forms.energy(&w).sqrt();
    let mut out = Vec::with_capacity(NAMES.len());
    let pc = picone_check(&u, &v, forms)?;
    out.push((pc.margin, pc.margin >= -QUOTIENT_SLACK));
    let id = (pc.margin - pc.remainder).abs();
    out.push((-id, id <= IDENTITY_TOL));
    for c in [1.0, 3.0, -2.0] {
        let e = picone_check(&u, &(&u * c), forms)?.margin.abs();
        out.push((-e, e <= IDENTITY_TOL));
    }
    let gr = green_identity_check(&v, &w, forms);
    out.push((-gr, gr <= IDENTITY_TOL));
    for (q, b) in [
        (hardy_quotient(&v, forms)?, bounds.hardy),
        (poincare_quotient(&v, forms)?, bounds.poincare),
        (sobolev_quotient(&v, forms)?, bounds.sobolev),
    ] {
        let m = q - b;
        out.push((m, m >= -QUOTIENT_SLACK * b.max(1.0)));
    }
    let regional = regional_quotient(&v, forms)?;
    let gap = forms.energy(&v) - forms.regional_energy(&v);
    Ok((out, regional, gap))
}

/// All checks on `trials` seeded random functions; deterministic in `seed`.
/// Random DOFs are standard normal, positive functions exp(g), each scaled
/// to unit energy. The regional report carries the smallest measured
/// regional quotient and fails only if the regional energy ever exceeds the
/// full energy.
pub fn fuzz_forms(forms: &NonlocalForms, seed: u64, trials: usize) -> Result<Vec<InequalityReport>> {
    if trials == 0 {
        return Ok(Vec::new());
    }
    let bounds = reference_bounds(forms)?;
    fuzz_with_bounds(forms, &bounds, seed, trials)
}

pub fn fuzz_with_bounds(
    forms: &NonlocalForms,
    bounds: &Bounds,
    seed: u64,
    trials: usize,
) -> Result<Vec<InequalityReport>> {
    if trials == 0 {
        return Ok(Vec::new());
    }
    let results =
        (0..trials as u64).into_par_iter().map(|k| trial(forms, bounds, seed, k)).collect::<Result<Vec<_>>>()?;
    let mut reports: Vec<InequalityReport> = NAMES
        .iter()
        .map(|n| InequalityReport { name: n.to_string(), trials, worst_margin: f64::INFINITY, failures: Vec::new() })
        .collect();
    let mut regional =
        InequalityReport { name: "regional".into(), trials, worst_margin: f64::INFINITY, failures: Vec::new() };
    for (k, (margins, rq, gap)) in results.into_iter().enumerate() {
        for (rep, (m, ok)) in reports.iter_mut().zip(margins) {
            rep.worst_margin = rep.worst_margin.min(m);
            if !ok {
                rep.failures.push(k as u64);
            }
        }
        regional.worst_margin = regional.worst_margin.min(rq);
        if gap < -IDENTITY_TOL {
            regional.failures.push(k as u64);
        }
    }
    reports.push(regional);
    Ok(reports)
}

pub fn fuzz_suite(config: &DNConfig, params: &FracParams, seed: u64, trials: usize) -> Result<Vec<InequalityReport>> {
    let forms = assemble(config, params)?;
    fuzz_forms(&forms, seed, trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, label_ball_config, pure_neumann_config, FarField};

    fn forms() -> NonlocalForms {
        let g = build_grid(1, 1.0, 32, FarField::FarNeumannTruncated).unwrap();
        assemble(&label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap(), &FracParams::new(1, 0.25).unwrap()).unwrap()
    }

    #[test]
    fn picone_equality_and_rejection() {
        let f = forms();
        let u = DVector::from_fn(f.ndof(), |k, _| 1.0 + 0.1 * k as f64);
        let r = picone_check(&u, &u, &f).unwrap();
        assert!(r.margin.abs() < 1e-12 && r.remainder == 0.0);
        let r = picone_check(&u, &(&u * 3.0), &f).unwrap();
        assert!(r.margin.abs() < 1e-11);
        let mut bad = u.clone();
        bad[0] = 0.0;
        assert!(picone_check(&bad, &u, &f).is_err());
    }

    #[test]
    fn green_terms_vanish_for_constants_without_dirichlet() {
        let g = build_grid(1, 1.0, 32, FarField::FarNeumannTruncated).unwrap();
        let f = assemble(&pure_neumann_config(&g, 0.25).unwrap(), &FracParams::new(1, 0.25).unwrap()).unwrap();
        let one = DVector::from_element(f.ndof(), 1.0);
        let ops = discrete_operators(&f, &one);
        assert!(ops.laplacian.iter().chain(&ops.neumann).all(|r| r.abs() < 1e-12));
        assert!(green_identity_check(&one, &one, &f) < 1e-12);
    }

    #[test]
    fn fuzz_is_deterministic_and_clean() {
        let f = forms();
        let a = fuzz_forms(&f, 7, 40).unwrap();
        let b = fuzz_forms(&f, 7, 40).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.failures.is_empty(), "{r:?}");
        }
        assert!(fuzz_forms(&f, 7, 0).unwrap().is_empty());
    }

    #[test]
    fn eigenfunction_attains_hardy_bound() {
        let f = forms();
        let e = smallest_hardy_eigen(&f, 1e-12, 500).unwrap();
        let q = hardy_quotient(&e.eigvec.values, &f).unwrap();
        assert!((q - e.lambda_h).abs() < 1e-10);
    }
}
