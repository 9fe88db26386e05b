//! Command-line front end: TOML run configuration with flag overrides,
//! experiment orchestration and JSON/CSV emission.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, write_matrix_triplets};
use crate::attainability::{
    attainability_verdict, eps_sweep, j3_lower_bound, neumann_sign_test, AttainabilityReport, SweepRow, VerdictReport,
    VerdictThresholds,
};
use crate::constants::{self, FracParams};
use crate::error::{Error, Result};
use crate::geometry::{
    build_grid, label_ball_config, label_custom, label_example1, pure_neumann_config, read_labels, DNConfig,
    Example1Params, FarField, Label,
};
use crate::inequalities::{fuzz_forms, InequalityReport};
use crate::output::{config_hash, num, to_json, write_csv_file};
use crate::quadrature::QuadratureSettings;
use crate::semilinear::{
    discrete_window, existence_condition_check, lambda_bar_search, regularization_sweep, subcritical_minimize_in,
    BoxSettings, ExistenceCheck, LambdaBar, MinimizerSettings, RegRow, SemilinearSpec,
};
use crate::spectral::{
    shrinking_dirichlet_experiment, smallest_hardy_eigen, spectral_gap, ShrinkResult, SolverSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GeometryKeyword {
    Ball,
    Example1,
    PureNeumann,
    CustomLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsBlock {
    pub d: usize,
    pub s: f64,
}

impl Default for ParamsBlock {
    fn default() -> Self {
        ParamsBlock { d: 1, s: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryBlock {
    pub kind: GeometryKeyword,
    pub half_width: f64,
    pub n: usize,
    pub far_field: FarField,
    pub r_omega: f64,
    pub r1: f64,
    pub r2: f64,
    pub labels_file: Option<String>,
    pub example1: Example1Params,
}

impl Default for GeometryBlock {
    fn default() -> Self {
        GeometryBlock {
            kind: GeometryKeyword::Ball,
            half_width: 1.0,
            n: 64,
            far_field: FarField::FarNeumannTruncated,
            r_omega: 0.25,
            r1: 0.5,
            r2: 1.0,
            labels_file: None,
            example1: Example1Params { eps: 0.1, eta: 1.0, a_len: 2.0, m: 1.0, beta: 8.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    /// Grid sizes for refinement tables and the attainability verdict.
    pub refinements: Vec<usize>,
    pub k_max: usize,
    pub stride: usize,
    /// "start:stop:count", inclusive, for the example geometry.
    pub eps_sweep: Option<String>,
    pub check_direct: bool,
    pub verdict: bool,
    pub gap: bool,
    /// Hardy coefficient for `semilinear`; the window midpoint when absent.
    pub lambda: Option<f64>,
    pub p: f64,
    /// Finite regularization indices; n = ∞ is always appended.
    pub reg_ns: Vec<f64>,
    /// λ-grid for `critical`, as fractions of Λ_{N,h}.
    pub lambda_fractions: Vec<f64>,
    /// λ-grid for the λ̄ search, as fractions of Λ_{N,h}.
    pub lambda_bar_fractions: Vec<f64>,
    pub trials: usize,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock {
            refinements: vec![64, 128, 256],
            k_max: 8,
            stride: 1,
            eps_sweep: None,
            check_direct: true,
            verdict: false,
            gap: false,
            lambda: None,
            p: 2.0,
            reg_ns: vec![1.0, 10.0, 100.0],
            lambda_fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8, 0.95],
            lambda_bar_fractions: vec![0.5, 0.8, 0.9, 0.95, 0.99, 1.0],
            trials: 500,
        }
    }
}

/// Everything a run depends on; the run is reproducible from this alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: String,
    pub params: ParamsBlock,
    pub geometry: GeometryBlock,
    pub quadrature: QuadratureSettings,
    pub solver: SolverSettings,
    pub minimizer: MinimizerSettings,
    pub boxes: BoxSettings,
    pub verdict: VerdictThresholds,
    pub experiment: ExperimentBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: "out".into(),
            params: ParamsBlock::default(),
            geometry: GeometryBlock::default(),
            quadrature: QuadratureSettings::default(),
            solver: SolverSettings::default(),
            minimizer: MinimizerSettings::default(),
            boxes: BoxSettings::default(),
            verdict: VerdictThresholds::default(),
            experiment: ExperimentBlock::default(),
        }
    }
}

impl RunConfig {
    /// Defaults for the example geometry: d = 2, L = 9, 48×48 cells.
    pub fn example1_preset() -> Self {
        let mut c = RunConfig::default();
        c.params.d = 2;
        c.geometry.kind = GeometryKeyword::Example1;
        c.geometry.half_width = 9.0;
        c.geometry.n = 48;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad configuration: {e}")))
    }

    pub fn frac_params(&self) -> Result<FracParams> {
        FracParams::with_quadrature(self.params.d, self.params.s, self.quadrature.clone())
    }

    /// The labeled configuration at grid size n.
    pub fn build(&self, n: usize) -> Result<DNConfig> {
        let g = &self.geometry;
        let grid = build_grid(self.params.d, g.half_width, n, g.far_field)?;
        match g.kind {
            GeometryKeyword::Ball => label_ball_config(&grid, g.r_omega, (g.r1, g.r2)),
            GeometryKeyword::PureNeumann => pure_neumann_config(&grid, g.r_omega),
            GeometryKeyword::Example1 => label_example1(&grid, &g.example1),
            GeometryKeyword::CustomLabels => {
                let path = g
                    .labels_file
                    .as_ref()
                    .ok_or_else(|| Error::Config("geometry.labels_file is required for kind = custom_labels".into()))?;
                label_custom(&grid, &read_labels(Path::new(path))?)
            }
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nlhardy", version, about = "Mixed Dirichlet-Neumann fractional Hardy constants and related problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub s: Option<f64>,
    /// Cells per axis.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryKeyword>,
    /// Labels file (one code per cell, 0 = Omega, 1 = Dirichlet, 2 = Neumann).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',')]
    pub refinements: Option<Vec<usize>>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form constants and the Λ₀(α) table.
    Constants {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 0.25)]
        s: f64,
        /// Also write constants.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest Hardy eigenpair and a refinement table.
    Hardy {
        #[command(flatten)]
        common: Common,
        /// Also compute the spectral gap (dense).
        #[arg(long)]
        gap: bool,
        /// Write the stiffness matrix as `i j value` triplets.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Shrinking-Dirichlet experiment.
    Shrink {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Sign test of N_s w on the Neumann set.
    Attain {
        #[command(flatten)]
        common: Common,
        /// start:stop:count
        #[arg(long)]
        eps_sweep: Option<String>,
        #[arg(long)]
        stride: Option<usize>,
        /// Also run the refinement-trend verdict.
        #[arg(long)]
        verdict: bool,
    },
    /// Subcritical minimization with the regularization sweep.
    Semilinear {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Critical constants, existence condition and λ̄ search.
    Critical {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Seeded inequality harness.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None if common.geometry == Some(GeometryKeyword::Example1) => RunConfig::example1_preset(),
        None => RunConfig::default(),
    };
    if let Some(k) = common.geometry {
        cfg.geometry.kind = k;
    }
    if let Some(d) = common.d {
        cfg.params.d = d;
    }
    if let Some(s) = common.s {
        cfg.params.s = s;
    }
    if let Some(n) = common.n {
        cfg.geometry.n = n;
    }
    if let Some(l) = common.half_width {
        cfg.geometry.half_width = l;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &common.labels {
        cfg.geometry.labels_file = Some(p.to_string_lossy().into_owned());
        cfg.geometry.kind = GeometryKeyword::CustomLabels;
    }
    if let Some(r) = &common.refinements {
        cfg.experiment.refinements = r.clone();
    }
    if let Some(o) = &common.out {
        cfg.output = o.to_string_lossy().into_owned();
    }
    cfg.minimizer.seed = cfg.seed;
    Ok(cfg)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: String,
    version: &'static str,
    config_hash: String,
    config: &'a RunConfig,
    result: T,
}

/// Writes `<cmd>.json` and a `<cmd>.log` sidecar (the only place with a
/// timestamp).
fn emit<T: Serialize>(cmd: &str, cfg: &RunConfig, result: T, started: Instant) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output);
    std::fs::create_dir_all(&dir)?;
    let env = Envelope {
        schema: format!("nlhardy/{cmd}/v1"),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(cfg)?,
        config: cfg,
        result,
    };
    let path = dir.join(format!("{cmd}.json"));
    std::fs::write(&path, to_json(&env)?)?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let log = format!(
        "command={cmd}\nfinished_unix={now}\nelapsed_s={:.3}\nconfig_hash={}\n",
        started.elapsed().as_secs_f64(),
        env.config_hash
    );
    std::fs::write(dir.join(format!("{cmd}.log")), log)?;
    Ok(path)
}

/// 12 significant digits.
fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..12).contains(&mag) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - mag).clamp(0, 40) as usize;
    format!("{x:.decimals$}")
}

#[derive(Serialize)]
struct AlphaRow {
    alpha: f64,
    lambda0: f64,
}

#[derive(Serialize)]
struct ConstantsOut {
    d: usize,
    s: f64,
    a_ds: f64,
    lambda_star: f64,
    two_star_s: f64,
    alpha_max: f64,
    table: Vec<AlphaRow>,
}

fn cmd_constants(d: usize, s: f64, out: Option<PathBuf>) -> Result<i32> {
    let params = FracParams::new(d, s)?;
    let amax = params.alpha_max();
    let table = (0..10)
        .map(|k| {
            let alpha = amax * k as f64 / 10.0;
            Ok(AlphaRow { alpha, lambda0: constants::lambda_alpha(d, s, alpha)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let res = ConstantsOut {
        d,
        s,
        a_ds: params.a_ds,
        lambda_star: params.hardy_constant(),
        two_star_s: params.critical_exponent(),
        alpha_max: amax,
        table,
    };
    println!("d = {d}, s = {s}");
    println!("a_ds        = {}", sig12(res.a_ds));
    println!("Lambda      = {}", sig12(res.lambda_star));
    println!("2*_s        = {}", sig12(res.two_star_s));
    println!("alpha_max   = {}", sig12(res.alpha_max));
    println!("alpha,Lambda0(alpha)");
    for r in &res.table {
        println!("{},{}", sig12(r.alpha), sig12(r.lambda0));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        #[derive(Serialize)]
        struct Out<'a> {
            schema: &'static str,
            version: &'static str,
            result: &'a ConstantsOut,
        }
        let env = Out { schema: "nlhardy/constants/v1", version: env!("CARGO_PKG_VERSION"), result: &res };
        std::fs::write(dir.join("constants.json"), to_json(&env)?)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct RefRow {
    n: usize,
    h: f64,
    lambda_h: f64,
    rel_gap: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct GapOut {
    lambda1: f64,
    lambda2: f64,
    gap: f64,
    multiplicity_warning: bool,
    sign_warning: bool,
}

#[derive(Serialize)]
struct HardyOut {
    lambda_h: f64,
    lambda_star: f64,
    rel_gap: f64,
    residual: Option<f64>,
    iterations: Option<usize>,
    degenerate: bool,
    ndof: usize,
    gap: Option<GapOut>,
    /// Eigenvector on all cells (zero on Dirichlet cells).
    eigvec: Vec<f64>,
    refinements: Vec<RefRow>,
}

struct Solved {
    lambda: f64,
    residual: Option<f64>,
    iterations: Option<usize>,
    degenerate: bool,
    eigvec: Vec<f64>,
}

fn solve(
    config: &DNConfig,
    params: &FracParams,
    solver: &SolverSettings,
) -> Result<(Solved, crate::assembly::NonlocalForms)> {
    let forms = assemble(config, params)?;
    let cells = forms.grid.cell_count();
    let s = match smallest_hardy_eigen(&forms, solver.tol, solver.max_iter) {
        Ok(r) => Solved {
            lambda: r.lambda_h,
            residual: Some(r.residual),
            iterations: Some(r.iterations),
            degenerate: false,
            eigvec: r.eigvec.to_cells(&forms.dofs, cells),
        },
        Err(Error::Degenerate { eigvec, .. }) => {
            let v = crate::assembly::GridFunction { values: nalgebra::DVector::from_vec(eigvec) };
            // the constant vector spans the kernel; its quotient is zero up to roundoff
            Solved {
                lambda: 0.0,
                residual: None,
                iterations: None,
                degenerate: true,
                eigvec: v.to_cells(&forms.dofs, cells),
            }
        }
        Err(e) => return Err(e),
    };
    Ok((s, forms))
}

fn cmd_hardy(cfg: RunConfig, gap: bool, dump: Option<PathBuf>) -> Result<i32> {
    let started = Instant::now();
    let params = cfg.frac_params()?;
    let star = params.hardy_constant();
    let config = cfg.build(cfg.geometry.n)?;
    let (main, forms) = solve(&config, &params, &cfg.solver)?;
    if let Some(p) = dump {
        write_matrix_triplets(&forms, std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    let gap = if (gap || cfg.experiment.gap) && !main.degenerate {
        let g = spectral_gap(&forms)?;
        Some(GapOut {
            lambda1: g.lambda1,
            lambda2: g.lambda2,
            gap: g.gap,
            multiplicity_warning: g.multiplicity_warning,
            sign_warning: g.sign_warning,
        })
    } else {
        None
    };
    let mut rows = Vec::new();
    if cfg.geometry.kind != GeometryKeyword::CustomLabels {
        for &n in &cfg.experiment.refinements {
            let c = cfg.build(n)?;
            let (r, _) = solve(&c, &params, &cfg.solver)?;
            rows.push(RefRow {
                n,
                h: c.grid.h,
                lambda_h: r.lambda,
                rel_gap: (r.lambda - star).abs() / star,
                degenerate: r.degenerate,
            });
        }
    }
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), num(r.h), num(r.lambda_h), num(r.rel_gap), r.degenerate.to_string()])
        .collect();
    let out = HardyOut {
        lambda_h: main.lambda,
        lambda_star: star,
        rel_gap: (main.lambda - star).abs() / star,
        residual: main.residual,
        iterations: main.iterations,
        degenerate: main.degenerate,
        ndof: forms.ndof(),
        gap,
        eigvec: main.eigvec,
        refinements: rows,
    };
    println!("lambda_h = {} (Lambda = {}), degenerate = {}", sig12(out.lambda_h), sig12(star), out.degenerate);
    let path = emit("hardy", &cfg, out, started)?;
    write_csv_file(
        &path.with_file_name("hardy_refinement.csv"),
        &["n", "h", "lambda_h", "rel_gap", "degenerate"],
        &csv,
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct ShrinkOut {
    #[serde(flatten)]
    result: ShrinkResult,
}

fn cmd_shrink(cfg: RunConfig, k_max: Option<usize>) -> Result<i32> {
    let started = Instant::now();
    let mut cfg = cfg;
    if let Some(k) = k_max {
        cfg.experiment.k_max = k;
    }
    let params = cfg.frac_params()?;
    let base = cfg.build(cfg.geometry.n)?;
    let r = shrinking_dirichlet_experiment(&base, &params, cfg.experiment.k_max, cfg.solver)?;
    let csv: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|w| vec![w.k.to_string(), num(w.lambda), num(w.residual), w.iterations.to_string()])
        .collect();
    println!("lambda_kmax / lambda_0 = {}, monotone = {}", sig12(r.ratio), r.monotone);
    let path = emit("shrink", &cfg, ShrinkOut { result: r }, started)?;
    write_csv_file(&path.with_file_name("shrink.csv"), &["k", "lambda", "residual", "iterations"], &csv)?;
    Ok(0)
}

/// Serialized name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

/// "a:b:k" → k evenly spaced values from a to b inclusive.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("sweep must be start:stop:count, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let k: usize = parts[2].trim().parse().map_err(|_| bad())?;
    match k {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()),
    }
}

#[derive(Serialize)]
struct AttainOut {
    /// Absent when there is no Neumann set and only the verdict was asked for.
    sign_test: Option<AttainabilityReport>,
    j3_lower_bound: Option<f64>,
    sweep: Vec<SweepRow>,
    refinement_verdict: Option<VerdictReport>,
}

fn cmd_attain(cfg: RunConfig, sweep: Option<String>, stride: Option<usize>, verdict: bool) -> Result<i32> {
    let started = Instant::now();
    let mut cfg = cfg;
    if let Some(s) = sweep {
        cfg.experiment.eps_sweep = Some(s);
    }
    if let Some(s) = stride {
        cfg.experiment.stride = s;
    }
    cfg.experiment.verdict |= verdict;
    let params = cfg.frac_params()?;
    let config = cfg.build(cfg.geometry.n)?;
    let no_neumann = config.grid.count(Label::Neumann) == 0;
    let mut report = if no_neumann && cfg.experiment.verdict {
        None
    } else {
        Some(neumann_sign_test(&config, &params, cfg.experiment.stride)?)
    };
    let is_example = cfg.geometry.kind == GeometryKeyword::Example1;
    let j3 = if is_example { Some(j3_lower_bound(&cfg.geometry.example1, &params)?) } else { None };
    let mut rows = Vec::new();
    if let Some(spec) = &cfg.experiment.eps_sweep {
        if !is_example {
            return Err(Error::Config("--eps-sweep needs the example1 geometry".into()));
        }
        let eps = parse_sweep(spec)?;
        rows = eps_sweep(
            &cfg.geometry.example1,
            &eps,
            cfg.geometry.half_width,
            cfg.geometry.n,
            &params,
            cfg.experiment.stride,
            cfg.experiment.check_direct,
        )?;
    }
    let refinement_verdict = if cfg.experiment.verdict {
        let v =
            attainability_verdict(&cfg.experiment.refinements, |n| cfg.build(n), &params, &cfg.verdict, cfg.solver)?;
        if let Some(r) = report.as_mut() {
            r.trend = v.trend.clone();
        }
        Some(v)
    } else {
        None
    };
    if let Some(r) = &report {
        println!("min N_s w = {} (budget {}), {}", sig12(r.min_nsw), sig12(r.budget), label(&r.verdict));
    }
    for r in &rows {
        println!("eps = {}: min N_s w = {}, {}", sig12(r.eps), sig12(r.min_nsw), label(&r.verdict));
    }
    if let Some(v) = &refinement_verdict {
        println!("refinement verdict: {} (drift {})", label(&v.verdict), sig12(v.drift));
    }
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.eps),
                num(r.min_nsw),
                num(r.budget),
                label(&r.verdict),
                num(r.j1_max_abs),
                r.direct_mismatch.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    let path = emit(
        "attain",
        &cfg,
        AttainOut { sign_test: report, j3_lower_bound: j3, sweep: rows, refinement_verdict },
        started,
    )?;
    if !csv.is_empty() {
        write_csv_file(
            &path.with_file_name("attain_sweep.csv"),
            &["eps", "min_Nsw", "budget", "verdict", "j1_max_abs", "direct_mismatch"],
            &csv,
        )?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct SemilinearOut {
    lambda_n: f64,
    lambda_dir: f64,
    lambda: f64,
    p: f64,
    value: f64,
    el_residual: f64,
    iterations: usize,
    regularization: Vec<RegRow>,
}

fn cmd_semilinear(cfg: RunConfig, lambda: Option<f64>, p: Option<f64>) -> Result<i32> {
    let started = Instant::now();
    let mut cfg = cfg;
    if lambda.is_some() {
        cfg.experiment.lambda = lambda;
    }
    if let Some(p) = p {
        cfg.experiment.p = p;
    }
    let params = cfg.frac_params()?;
    let forms = assemble(&cfg.build(cfg.geometry.n)?, &params)?;
    let window = discrete_window(&forms)?;
    let lam = cfg.experiment.lambda.unwrap_or(0.5 * (window.0 + window.1));
    let spec = SemilinearSpec { lambda: lam, p: cfg.experiment.p, reg_n: None };
    let (tol, it) = (cfg.minimizer.tol, cfg.minimizer.max_iter);
    let r = subcritical_minimize_in(&forms, &spec, None, tol, it, window)?;
    let mut ns: Vec<Option<f64>> = cfg.experiment.reg_ns.iter().map(|&n| Some(n)).collect();
    ns.push(None);
    let reg = regularization_sweep(&forms, lam, spec.p, &ns, tol, it)?;
    let hist: Vec<Vec<String>> = r.history.iter().enumerate().map(|(k, v)| vec![k.to_string(), num(*v)]).collect();
    println!("I = {} at lambda = {} (window {}, {})", sig12(r.value), sig12(lam), sig12(window.0), sig12(window.1));
    let out = SemilinearOut {
        lambda_n: window.0,
        lambda_dir: window.1,
        lambda: lam,
        p: spec.p,
        value: r.value,
        el_residual: r.el_residual,
        iterations: r.iterations,
        regularization: reg,
    };
    let path = emit("semilinear", &cfg, out, started)?;
    write_csv_file(&path.with_file_name("semilinear_history.csv"), &["iteration", "value"], &hist)?;
    Ok(0)
}

#[derive(Serialize)]
struct CriticalOut {
    rows: Vec<ExistenceCheck>,
    lambda_bar: LambdaBar,
    seed: u64,
    note: &'static str,
}

fn cmd_critical(cfg: RunConfig, restarts: Option<usize>) -> Result<i32> {
    let started = Instant::now();
    let mut cfg = cfg;
    if let Some(r) = restarts {
        cfg.minimizer.restarts = r;
    }
    let params = cfg.frac_params()?;
    let forms = assemble(&cfg.build(cfg.geometry.n)?, &params)?;
    let lambda_n = smallest_hardy_eigen(&forms, cfg.solver.tol, cfg.solver.max_iter)?.lambda_h;
    let mut rows = Vec::new();
    for &f in &cfg.experiment.lambda_fractions {
        rows.push(existence_condition_check(&forms, f * lambda_n, &cfg.boxes, &cfg.minimizer)?);
    }
    let lambdas: Vec<f64> = cfg.experiment.lambda_bar_fractions.iter().map(|f| f * lambda_n).collect();
    let bar = lambda_bar_search(&forms, &lambdas, &cfg.boxes, &cfg.minimizer, false)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let c = &r.constants;
            vec![
                num(c.lambda),
                num(c.t),
                num(c.s_n),
                num(c.s_lambda.value),
                num(c.lower_bound_margin),
                num(r.gap),
                r.condition_holds.to_string(),
            ]
        })
        .collect();
    for r in &rows {
        println!(
            "lambda = {}: T = {}, S_N = {}, S_lambda = {}, condition = {}",
            sig12(r.constants.lambda),
            sig12(r.constants.t),
            sig12(r.constants.s_n),
            sig12(r.constants.s_lambda.value),
            r.condition_holds
        );
    }
    let out = CriticalOut {
        rows,
        lambda_bar: bar,
        seed: cfg.seed,
        note: "all constants are values at computed points, i.e. upper bounds on the discrete infima",
    };
    let path = emit("critical", &cfg, out, started)?;
    write_csv_file(
        &path.with_file_name("critical.csv"),
        &["lambda", "T", "S_N", "S_lambda", "lower_bound_margin", "gap", "condition_holds"],
        &csv,
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct VerifyOut {
    seed: u64,
    trials: usize,
    passed: bool,
    reports: Vec<InequalityReport>,
}

fn cmd_verify(cfg: RunConfig, trials: Option<usize>) -> Result<i32> {
    let started = Instant::now();
    let mut cfg = cfg;
    if let Some(t) = trials {
        cfg.experiment.trials = t;
    }
    let params = cfg.frac_params()?;
    let forms = assemble(&cfg.build(cfg.geometry.n)?, &params)?;
    let reports = fuzz_forms(&forms, cfg.seed, cfg.experiment.trials)?;
    let mut failed = 0;
    for r in &reports {
        let ok = r.failures.is_empty();
        if !ok {
            failed += 1;
        }
        println!(
            "test {} ... {} ({} trials, worst margin {})",
            r.name,
            if ok { "ok" } else { "FAILED" },
            r.trials,
            sig12(r.worst_margin)
        );
    }
    println!(
        "test result: {}. {} passed; {} failed",
        if failed == 0 { "ok" } else { "FAILED" },
        reports.len() - failed,
        failed
    );
    let out = VerifyOut { seed: cfg.seed, trials: cfg.experiment.trials, passed: failed == 0, reports };
    emit("verify", &cfg, out, started)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

fn init_threads() {
    if let Some(n) = std::env::var("NLHARDY_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    init_threads();
    match cli.command {
        Command::Constants { d, s, out } => cmd_constants(d, s, out),
        Command::Hardy { common, gap, dump_matrix } => cmd_hardy(load(&common)?, gap, dump_matrix),
        Command::Shrink { common, k_max } => cmd_shrink(load(&common)?, k_max),
        Command::Attain { common, eps_sweep, stride, verdict } => {
            cmd_attain(load(&common)?, eps_sweep, stride, verdict)
        }
        Command::Semilinear { common, lambda, p } => cmd_semilinear(load(&common)?, lambda, p),
        Command::Critical { common, restarts } => cmd_critical(load(&common)?, restarts),
        Command::Verify { common, trials } => cmd_verify(load(&common)?, trials),
    }
}

/// Parses the process arguments, runs, and maps errors to exit codes
/// (0 success, 1 numerical failure, 2 configuration error).
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
