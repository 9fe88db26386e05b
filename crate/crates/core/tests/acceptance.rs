//! Acceptance criteria, one `[PASS]`/`[FAIL] Cn` line each, tolerances and
//! runtime limits pinned. Run with `--nocapture` to see the report.

mod common;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use nlhardy::assembly::{assemble, NonlocalForms};
use nlhardy::attainability::{eps_sweep, SignVerdict};
use nlhardy::constants::{self, FracParams};
use nlhardy::geometry::{
    build_grid, dirichlet_closure, label_ball_config, pure_neumann_config, DNConfig, Example1Params, FarField,
};
use nlhardy::inequalities::{fuzz_forms, green_identity_check, InequalityReport};
use nlhardy::kernel::frac_laplacian_at;
use nlhardy::semilinear::{
    discrete_window, existence_condition_check, lambda_bar_search, regularization_sweep, subcritical_minimize_in,
    BoxSettings, MinimizerSettings, SemilinearSpec,
};
use nlhardy::spectral::{shrinking_dirichlet_experiment, smallest_hardy_eigen, SolverSettings};
use nlhardy::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn p(d: usize, s: f64) -> FracParams {
    FracParams::new(d, s).unwrap()
}

/// d = 1, L = 1, 64 cells, Ω = {|x| < 1/4}, D = {1/2 < |x| < 1}, truncated far field.
fn reference_config() -> DNConfig {
    let g = build_grid(1, 1.0, 64, FarField::FarNeumannTruncated).unwrap();
    label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap()
}

fn full_dirichlet(n: usize) -> DNConfig {
    let g = build_grid(1, 1.0, n, FarField::FarDirichlet).unwrap();
    label_ball_config(&g, 0.25, (0.25, 1.0)).unwrap()
}

fn lambda1(config: &DNConfig, params: &FracParams) -> f64 {
    let forms = assemble(config, params).unwrap();
    smallest_hardy_eigen(&forms, 1e-10, 500).unwrap().lambda_h
}

fn c1() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let d = 1 + k % 2;
        let s = if d == 1 { 0.02 + 0.024 * k as f64 } else { 0.03 + 0.045 * k as f64 };
        let l = constants::hardy_constant(d, s).unwrap();
        let l0 = constants::lambda_alpha(d, s, 0.0).unwrap();
        worst = worst.max((l0 - l).abs() / l);
    }
    // 30-digit Gamma-function oracle for Λ(1, 1/4)
    let oracle = 0.139_999_677_452_482_630_866_1;
    let l = constants::hardy_constant(1, 0.25).unwrap();
    let e_oracle = (l - oracle).abs();
    let e_pi = (constants::normalization_constant(1, 0.5).unwrap() - std::f64::consts::FRAC_1_PI).abs();
    outcome(
        worst <= 1e-14 && e_oracle <= 1e-12 && e_pi <= 1e-12,
        format!("max |Λ₀(0)−Λ|/Λ = {worst:.1e} over 20 (d,s); |Λ(1,1/4) − oracle| = {e_oracle:.1e}; |a_(1,1/2) − 1/π| = {e_pi:.1e}"),
    )
}

fn c2() -> Outcome {
    let prm = p(1, 0.25);
    let mut worst: f64 = 0.0;
    for alpha in [0.05, 0.1, 0.2] {
        // |y|^{-γ} with γ = (d − 2s)/2 − α
        let gamma = (1.0 - 0.5) / 2.0 - alpha;
        let target = constants::lambda_alpha(1, 0.25, alpha).unwrap();
        for i in 0..10 {
            let x = 0.1 + 0.2 * i as f64;
            let u = |y: [f64; 2]| y[0].abs().powf(-gamma);
            let v = frac_laplacian_at(&u, true, [x, 0.0], 0.1 * x, &prm).unwrap();
            let ratio = v.value * x.powf(0.5) / x.powf(-gamma);
            worst = worst.max((ratio - target).abs());
        }
    }
    outcome(worst < 1e-3, format!("max |(−Δ)^s w · |x|^(2s) / w − Λ₀(α)| = {worst:.2e} over 3 α × 10 points"))
}

fn c3() -> Outcome {
    let g = build_grid(1, 1.0, 64, FarField::FarNeumannTruncated).unwrap();
    let c = pure_neumann_config(&g, 0.25).unwrap();
    let forms = assemble(&c, &p(1, 0.25)).unwrap();
    match smallest_hardy_eigen(&forms, 1e-10, 500) {
        Err(Error::Degenerate { lambda, eigvec }) => {
            let first = eigvec[0];
            let spread = eigvec.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
            outcome(
                lambda.abs() < 1e-10 && spread == 0.0,
                format!("degenerate error, λ = {lambda:.1e}, eigenvector spread {spread:.1e}"),
            )
        }
        other => outcome(false, format!("expected a degenerate-config error, got {:?}", other.map(|r| r.lambda_h))),
    }
}

fn c4() -> Outcome {
    let prm = p(1, 0.25);
    let g = build_grid(1, 1.0, 64, FarField::FarNeumannTruncated).unwrap();
    let shells = [1.0, 0.9, 0.8, 0.7, 0.6];
    let configs: Vec<DNConfig> = shells.iter().map(|&r2| label_ball_config(&g, 0.25, (0.5, r2)).unwrap()).collect();
    let lams: Vec<f64> = configs.iter().map(|c| lambda1(c, &prm)).collect();
    let full = lambda1(&dirichlet_closure(&configs[0]).unwrap(), &prm);
    let monotone = lams.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let bounded = lams.iter().all(|&l| l <= full + 1e-12);
    outcome(
        monotone && bounded,
        format!(
            "λ₁ as D shrinks: {}; full Dirichlet {full:.6}",
            lams.iter().map(|l| format!("{l:.6}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c5() -> Outcome {
    let prm = p(1, 0.25);
    let star = prm.hardy_constant();
    let gaps: Vec<f64> =
        [64, 128, 256].iter().map(|&n| (lambda1(&full_dirichlet(n), &prm) - star).abs() / star).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && gaps[2] < 0.15,
        format!(
            "|λ_h − Λ|/Λ at n = 64, 128, 256: {:.4}, {:.4}, {:.4} (decreasing: {decreasing}; need < 0.15 at n = 256)",
            gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn c6() -> Outcome {
    let r = shrinking_dirichlet_experiment(&reference_config(), &p(1, 0.25), 8, SolverSettings::default()).unwrap();
    let monotone = r.rows.windows(2).all(|w| w[1].lambda <= w[0].lambda + 1e-12);
    outcome(monotone && r.ratio < 0.1, format!("λ_8/λ_0 = {:.4}, monotone {monotone}", r.ratio))
}

fn report<'a>(reports: &'a [InequalityReport], name: &str) -> &'a InequalityReport {
    reports.iter().find(|r| r.name == name).unwrap()
}

fn reference_forms() -> Vec<NonlocalForms> {
    let g2 = build_grid(2, 1.0, 16, FarField::FarNeumannTruncated).unwrap();
    let c2 = label_ball_config(&g2, 0.3, (0.6, 0.9)).unwrap();
    vec![assemble(&reference_config(), &p(1, 0.25)).unwrap(), assemble(&c2, &p(2, 0.3)).unwrap()]
}

fn c7() -> Outcome {
    let mut margin = f64::INFINITY;
    let mut equality: f64 = 0.0;
    let mut identity: f64 = 0.0;
    let mut failures = 0;
    for forms in reference_forms() {
        let reps = fuzz_forms(&forms, 0, 500).unwrap();
        margin = margin.min(report(&reps, "picone").worst_margin);
        for name in ["picone_equality_c1", "picone_equality_c3", "picone_equality_cm2"] {
            equality = equality.max(-report(&reps, name).worst_margin);
        }
        identity = identity.max(-report(&reps, "picone_remainder_identity").worst_margin);
        failures += reps.iter().filter(|r| r.name.starts_with("picone")).map(|r| r.failures.len()).sum::<usize>();
    }
    outcome(
        margin >= -1e-10 && equality <= 1e-12 && identity <= 1e-12 && failures == 0,
        format!("500 trials × 2 configs: min margin {margin:.3e}, max |equality| {equality:.1e}, max |margin − remainder| {identity:.1e}"),
    )
}

fn c8() -> Outcome {
    let mut worst: f64 = 0.0;
    for (f, forms) in reference_forms().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8 + f as u64);
        for _ in 0..50 {
            let nd = forms.ndof();
            let mut u = DVector::from_fn(nd, |_, _| StandardNormal.sample(&mut rng));
            let mut v = DVector::from_fn(nd, |_, _| StandardNormal.sample(&mut rng));
            u /= forms.energy(&u).sqrt();
            v /= forms.energy(&v).sqrt();
            worst = worst.max(green_identity_check(&u, &v, forms));
        }
    }
    outcome(worst < 1e-12, format!("max residual {worst:.2e} over 50 pairs × 2 configs"))
}

fn c9() -> Outcome {
    let base = Example1Params { eps: 0.1, eta: 1.0, a_len: 2.0, m: 1.0, beta: 8.0 };
    let eps: Vec<f64> = (0..6).map(|k| 0.02 + 0.036 * k as f64).collect();
    let rows = eps_sweep(&base, &eps, 9.0, 48, &p(2, 0.25), 1, true).unwrap();
    let first = &rows[0];
    let sign_ok = first.min_nsw > first.budget && first.verdict == SignVerdict::SufficientConditionHolds;
    // |J₁| shrinks as ε decreases toward 0
    let j1_ok = rows.windows(2).all(|w| w[0].j1_max_abs < w[1].j1_max_abs);
    let mismatch = rows.iter().map(|r| r.direct_mismatch.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    outcome(
        sign_ok && j1_ok && mismatch < 1e-3,
        format!(
            "ε = 0.02: min N_s w = {:.4} > budget {:.1e}; max|J₁| from {:.3} (ε = 0.02) to {:.3} (ε = 0.2); max J-sum vs direct {mismatch:.1e}",
            first.min_nsw,
            first.budget,
            first.j1_max_abs,
            rows[5].j1_max_abs
        ),
    )
}

fn c10() -> Outcome {
    let forms = assemble(&reference_config(), &p(1, 0.25)).unwrap();
    let window = discrete_window(&forms).unwrap();
    let lambda = 0.5 * (window.0 + window.1);
    let spec = SemilinearSpec { lambda, p: 2.0, reg_n: None };
    let r = subcritical_minimize_in(&forms, &spec, None, 1e-8, 5000, window).unwrap();
    let ns = [Some(1.0), Some(10.0), Some(100.0), None];
    let reg = regularization_sweep(&forms, lambda, 2.0, &ns, 1e-8, 5000).unwrap();
    let monotone = reg.windows(2).all(|w| w[1].value <= w[0].value + 1e-12);
    outcome(
        r.value < 0.0 && r.el_residual < 1e-6 && monotone,
        format!(
            "λ = {lambda:.5}: I = {:.5}, EL residual {:.1e}; n = 1, 10, 100, ∞: {}",
            r.value,
            r.el_residual,
            reg.iter().map(|x| format!("{:.4}", x.value)).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c11() -> Outcome {
    let forms = assemble(&reference_config(), &p(1, 0.25)).unwrap();
    let (lambda_n, _) = discrete_window(&forms).unwrap();
    let boxes = BoxSettings::default();
    let settings = MinimizerSettings::default();
    let mut worst = f64::INFINITY;
    for k in 0..6 {
        let c = existence_condition_check(&forms, lambda_n * k as f64 / 6.0, &boxes, &settings).unwrap();
        worst = worst.min(c.constants.lower_bound_margin.min(c.constants.pointwise_margin));
    }
    let fr = [0.5, 0.8, 0.9, 0.95, 0.99, 1.0];
    let lams: Vec<f64> = fr.iter().map(|f| f * lambda_n).collect();
    let bar = lambda_bar_search(&forms, &lams, &boxes, &settings, false).unwrap();
    let near = bar.rows.last().map(|r| r.below).unwrap_or(false);
    outcome(
        worst >= -1e-12 && bar.lambda_bar.is_some() && near,
        format!(
            "min over 6 λ of T − (1 − λ/Λ_N)S_N = {worst:.3e}; λ̄/Λ_N = {}",
            bar.lambda_bar.map(|l| format!("{:.3}", l / lambda_n)).unwrap_or("none".into())
        ),
    )
}

fn c12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let runs: [&[&str]; 5] = [
        &["hardy"],
        &["shrink"],
        &["semilinear"],
        &["verify", "--trials", "500", "--seed", "0"],
        &["critical", "--seed", "7", "--restarts", "4"],
    ];
    let mut diffs = Vec::new();
    for args in runs {
        let name = args[0];
        let mut a = args.to_vec();
        a.extend(["--out", d]);
        let mut payloads = Vec::new();
        for _ in 0..2 {
            let out = common::nlhardy(&a);
            if !out.status.success() {
                diffs.push(format!("{name} exited {:?}", out.status.code()));
            }
            payloads.push(std::fs::read(dir.path().join(format!("{name}.json"))).unwrap_or_default());
        }
        if payloads[0] != payloads[1] || payloads[0].is_empty() {
            diffs.push(name.to_string());
        }
    }
    outcome(diffs.is_empty(), format!("5 subcommands rerun with the same seed; differing: {diffs:?}"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome, Duration); 12] = [
        ("closed-form constants", c1, Duration::from_secs(1)),
        ("exponent identity", c2, Duration::from_secs(30)),
        ("Neumann degeneracy", c3, Duration::from_secs(5)),
        ("monotonicity and bound", c4, Duration::from_secs(60)),
        ("Dirichlet limit", c5, Duration::from_secs(300)),
        ("collapse under shrinking D", c6, Duration::from_secs(120)),
        ("Picone inequality", c7, Duration::from_secs(60)),
        ("Green identity", c8, Duration::from_secs(10)),
        ("attainability criterion", c9, Duration::from_secs(600)),
        ("subcritical minimization", c10, Duration::from_secs(120)),
        ("critical bounds", c11, Duration::from_secs(600)),
        ("reproducibility", c12, Duration::from_secs(600)),
    ];
    println!();
    let mut failed = Vec::new();
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let dt = t.elapsed();
        let pass = o.pass && dt <= *limit;
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] C{} {name}: {} ({:.2} s, limit {} s)", i + 1, o.detail, dt.as_secs_f64(), limit.as_secs());
        if !pass {
            failed.push(format!("C{}", i + 1));
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
