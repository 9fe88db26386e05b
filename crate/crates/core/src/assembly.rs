//! Discrete quadratic forms on a labeled grid.
//!
//! Unknowns live on Ω and N cells (D cells are fixed zeros). The energy keeps
//! a pair of cells only when at least one of them is in Ω, so N–N and D–D
//! interactions are absent, Ω–D pairs contribute to the Ω diagonal only, and
//! under a Dirichlet far field each Ω cell also interacts with the zero
//! exterior of the box.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::FracParams;
use crate::error::{Error, Result};
use crate::geometry::{validate, DNConfig, FarField, Label, LabeledGrid, Point};
use crate::kernel::{box_exterior_weights, WeightTable};
use crate::quadrature::{gauss, gauss_graded_left};

/// Radial weight of the Hardy mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialWeight {
    /// |x|^{−2s}
    Power,
    /// 1/(|x|^{2s} + 1/n)
    Regularized { n: f64 },
}

/// Degrees of freedom: the non-Dirichlet cells in increasing cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub cell_of: Vec<usize>,
    pub dof_of: Vec<Option<usize>>,
    pub is_omega: Vec<bool>,
}

impl DofMap {
    pub fn new(grid: &LabeledGrid) -> Self {
        let mut cell_of = Vec::new();
        let mut dof_of = vec![None; grid.cell_count()];
        let mut is_omega = Vec::new();
        for (i, &l) in grid.labels.iter().enumerate() {
            if l != Label::Dirichlet {
                dof_of[i] = Some(cell_of.len());
                cell_of.push(i);
                is_omega.push(l == Label::Omega);
            }
        }
        DofMap { cell_of, dof_of, is_omega }
    }

    pub fn len(&self) -> usize {
        self.cell_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_of.is_empty()
    }

    pub fn omega_dofs(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_omega[k]).collect()
    }

    pub fn neumann_dofs(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.is_omega[k]).collect()
    }
}

/// One value per non-Dirichlet cell; Dirichlet cells are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: DVector<f64>,
}

impl GridFunction {
    /// Values on every cell of the grid, zero on D.
    pub fn to_cells(&self, dofs: &DofMap, cell_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; cell_count];
        for (k, &c) in dofs.cell_of.iter().enumerate() {
            out[c] = self.values[k];
        }
        out
    }
}

/// Assembled forms over the DOFs.
#[derive(Debug, Clone)]
pub struct NonlocalForms {
    pub params: FracParams,
    pub grid: LabeledGrid,
    pub dofs: DofMap,
    /// Stiffness, a_{d,s}-normalized.
    pub a: DMatrix<f64>,
    /// Diagonal Hardy mass: ∫_{C_i} |x|^{−2s} on Ω rows, 0 on N rows.
    pub hardy: DVector<f64>,
    /// Diagonal plain mass h^d.
    pub mass: DVector<f64>,
    /// Diagonal-only part of the energy (Ω–D pairs and exterior), per DOF.
    pub diag_extra: DVector<f64>,
    pub tail_included: bool,
    pub weights: Arc<WeightTable>,
}

/// ∫ |x|^{−2s} over [0,a]×[0,b] in polar form; zero if a or b vanishes.
fn quadrant_power(a: f64, b: f64, s: f64, m: usize) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let e = 2.0 - 2.0 * s;
    let split = (b / a).atan();
    let lo = gauss(0.0, split, m, |t| (a / t.cos()).powf(e));
    let hi = gauss(split, PI / 2.0, m, |t| (b / t.sin()).powf(e));
    (lo + hi) / e
}

/// Splits [lo, hi] at 0 if it straddles it; returns |pieces| as (near, far)
/// distances from the axis.
fn axis_pieces(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    if lo < 0.0 && hi > 0.0 {
        vec![(0.0, -lo), (0.0, hi)]
    } else if hi <= 0.0 {
        vec![(-hi, -lo)]
    } else {
        vec![(lo, hi)]
    }
}

/// ∫_{C} |x|^{−2s} dx: closed form in 1D; in 2D the polar corner integral
/// (closed-form radial part, Gauss in angle) combined by inclusion–exclusion.
pub fn hardy_cell_integral(lo: Point, hi: Point, params: &FracParams) -> f64 {
    let s = params.s;
    if params.d == 1 {
        let e = 1.0 - 2.0 * s;
        let f = |x: f64| x.signum() * x.abs().powf(e) / e;
        return f(hi[0]) - f(lo[0]);
    }
    let m = params.quad.hardy_angular_points;
    let mut acc = 0.0;
    for (x0, x1) in axis_pieces(lo[0], hi[0]) {
        for (y0, y1) in axis_pieces(lo[1], hi[1]) {
            acc += quadrant_power(x1, y1, s, m) - quadrant_power(x0, y1, s, m) - quadrant_power(x1, y0, s, m)
                + quadrant_power(x0, y0, s, m);
        }
    }
    acc
}

/// ∫_{C} w(|x|) dx for w = 1/(|x|^{2s} + 1/n). Cells touching the origin use
/// a polar rule graded toward it; others a tensor Gauss rule. The node set
/// does not depend on n, so the result is monotone in n.
pub fn regularized_cell_integral(lo: Point, hi: Point, reg_n: f64, params: &FracParams) -> f64 {
    let s = params.s;
    let eps = 1.0 / reg_n;
    let w = |r: f64| 1.0 / (r.powf(2.0 * s) + eps);
    let touches = |a: f64, b: f64| a <= 0.0 && b >= 0.0;
    if params.d == 1 {
        if touches(lo[0], hi[0]) {
            return gauss_graded_left(0.0, -lo[0], 8, 60, w) + gauss_graded_left(0.0, hi[0], 8, 60, w);
        }
        return gauss(lo[0], hi[0], 16, |x| w(x.abs()));
    }
    if touches(lo[0], hi[0]) && touches(lo[1], hi[1]) {
        let m = params.quad.hardy_angular_points;
        let mut acc = 0.0;
        for (_, a) in axis_pieces(lo[0], hi[0]) {
            for (_, b) in axis_pieces(lo[1], hi[1]) {
                let radial = |rmax: f64| gauss_graded_left(0.0, rmax, 8, 60, |r| r * w(r));
                let split = (b / a).atan();
                acc +=
                    gauss(0.0, split, m, |t| radial(a / t.cos())) + gauss(split, PI / 2.0, m, |t| radial(b / t.sin()));
            }
        }
        return acc;
    }
    let f = |x: f64, y: f64| w(x.hypot(y));
    let (mx, my) = (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]));
    let mut acc = 0.0;
    for (x0, x1) in [(lo[0], mx), (mx, hi[0])] {
        for (y0, y1) in [(lo[1], my), (my, hi[1])] {
            acc += gauss(x0, x1, 8, |x| gauss(y0, y1, 8, |y| f(x, y)));
        }
    }
    acc
}

/// Hardy mass diagonal for a given radial weight (0 on N rows).
pub fn hardy_diagonal(grid: &LabeledGrid, dofs: &DofMap, weight: RadialWeight, params: &FracParams) -> DVector<f64> {
    let vals: Vec<f64> = (0..dofs.len())
        .into_par_iter()
        .map(|k| {
            if !dofs.is_omega[k] {
                return 0.0;
            }
            let (lo, hi) = grid.bounds(dofs.cell_of[k]);
            match weight {
                RadialWeight::Power => hardy_cell_integral(lo, hi, params),
                RadialWeight::Regularized { n } => regularized_cell_integral(lo, hi, n, params),
            }
        })
        .collect();
    DVector::from_vec(vals)
}

/// Builds A, H and M for a validated configuration.
pub fn assemble(config: &DNConfig, params: &FracParams) -> Result<NonlocalForms> {
    let problems = validate(config);
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let grid = &config.grid;
    if grid.d != params.d {
        return Err(Error::Parameter(format!("grid dimension {} != params dimension {}", grid.d, params.d)));
    }
    if params.s >= 0.5 {
        return Err(Error::Parameter(format!(
            "piecewise-constant cells need s < 1/2 (touching-cell energy diverges); got s = {}",
            params.s
        )));
    }
    let table = Arc::new(WeightTable::for_grid(grid, params));
    let far_dir = grid.far_field == FarField::FarDirichlet;
    let ext = if far_dir { box_exterior_weights(grid, &table, params) } else { vec![0.0; grid.cell_count()] };
    let dofs = DofMap::new(grid);
    let nd = dofs.len();
    let a_ds = params.a_ds;
    let dirichlet = grid.cells_with(Label::Dirichlet);

    let rows: Vec<(Vec<f64>, f64)> = (0..nd)
        .into_par_iter()
        .map(|r| {
            let i = dofs.cell_of[r];
            let omega_i = dofs.is_omega[r];
            let mut row = vec![0.0; nd];
            let mut diag = 0.0;
            for c in 0..nd {
                if c == r || !(omega_i || dofs.is_omega[c]) {
                    continue;
                }
                let w = a_ds * table.between(grid, i, dofs.cell_of[c]);
                row[c] = -w;
                diag += w;
            }
            let mut extra = 0.0;
            if omega_i {
                for &j in &dirichlet {
                    extra += table.between(grid, i, j);
                }
                extra += ext[i];
                extra *= a_ds;
            }
            row[r] = diag + extra;
            (row, extra)
        })
        .collect();
    let a = DMatrix::from_fn(nd, nd, |r, c| rows[r].0[c]);
    let diag_extra = DVector::from_iterator(nd, rows.iter().map(|x| x.1));
    let hardy = hardy_diagonal(grid, &dofs, RadialWeight::Power, params);
    let mass = DVector::from_element(nd, grid.h.powi(grid.d as i32));
    Ok(NonlocalForms {
        params: params.clone(),
        grid: grid.clone(),
        dofs,
        a,
        hardy,
        mass,
        diag_extra,
        tail_included: far_dir,
        weights: table,
    })
}

impl NonlocalForms {
    pub fn ndof(&self) -> usize {
        self.dofs.len()
    }

    pub fn energy(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.a * u))
    }

    pub fn hardy_norm2(&self, u: &DVector<f64>) -> f64 {
        u.iter().zip(self.hardy.iter()).map(|(x, w)| w * x * x).sum()
    }

    /// Coupling a_{d,s}·W_ij of two DOFs (zero for N–N pairs).
    pub fn coupling(&self, r: usize, c: usize) -> f64 {
        if r == c || !(self.dofs.is_omega[r] || self.dofs.is_omega[c]) {
            return 0.0;
        }
        self.params.a_ds * self.weights.between(&self.grid, self.dofs.cell_of[r], self.dofs.cell_of[c])
    }

    /// u'Av through the pair sum, independent of the assembled matrix.
    pub fn bilinear_pairs(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let nd = self.ndof();
        let partial: Vec<f64> = (0..nd)
            .into_par_iter()
            .map(|r| {
                let mut acc = self.diag_extra[r] * u[r] * v[r];
                for c in (r + 1)..nd {
                    let w = self.coupling(r, c);
                    if w != 0.0 {
                        acc += w * (u[r] - u[c]) * (v[r] - v[c]);
                    }
                }
                acc
            })
            .collect();
        partial.iter().sum()
    }

    /// Energy restricted to Ω×Ω pairs (the regional form).
    pub fn regional_energy(&self, u: &DVector<f64>) -> f64 {
        let om = self.dofs.omega_dofs();
        let mut acc = 0.0;
        for (k, &r) in om.iter().enumerate() {
            for &c in &om[k + 1..] {
                acc += self.coupling(r, c) * (u[r] - u[c]).powi(2);
            }
        }
        acc
    }

    /// Hardy diagonal with another radial weight on the same grid.
    pub fn hardy_with(&self, weight: RadialWeight) -> DVector<f64> {
        match weight {
            RadialWeight::Power => self.hardy.clone(),
            _ => hardy_diagonal(&self.grid, &self.dofs, weight, &self.params),
        }
    }
}

/// (Σ_{i∈Ω} h^d |u_i|^q)^{1/q}.
pub fn lp_functional(forms: &NonlocalForms, u: &DVector<f64>, q: f64) -> Result<f64> {
    if !(q > 1.0) {
        return Err(Error::Parameter(format!("exponent q = {q} must exceed 1")));
    }
    let mut acc = 0.0;
    for k in 0..forms.ndof() {
        if forms.dofs.is_omega[k] {
            acc += forms.mass[k] * u[k].abs().powf(q);
        }
    }
    Ok(acc.powf(1.0 / q))
}

/// r = Au split by row label: Ω rows give the discrete (−Δ)^s u, N rows the
/// discrete N_s u. Σ_Ω v r + Σ_N v r = v'Au holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperators {
    pub omega_dofs: Vec<usize>,
    pub laplacian: Vec<f64>,
    pub neumann_dofs: Vec<usize>,
    pub neumann: Vec<f64>,
}

pub fn discrete_operators(forms: &NonlocalForms, u: &DVector<f64>) -> DiscreteOperators {
    let r = &forms.a * u;
    let omega_dofs = forms.dofs.omega_dofs();
    let neumann_dofs = forms.dofs.neumann_dofs();
    DiscreteOperators {
        laplacian: omega_dofs.iter().map(|&k| r[k]).collect(),
        neumann: neumann_dofs.iter().map(|&k| r[k]).collect(),
        omega_dofs,
        neumann_dofs,
    }
}

/// Writes the upper triangle of A as `i j value` lines, 17 significant
/// digits, after a `# nlhardy A d s n L` header.
pub fn write_matrix_triplets<W: Write>(forms: &NonlocalForms, mut out: W) -> Result<()> {
    let g = &forms.grid;
    writeln!(out, "# nlhardy A {} {:.16e} {} {:.16e}", g.d, forms.params.s, g.n, g.half_width)?;
    let nd = forms.ndof();
    for r in 0..nd {
        for c in r..nd {
            let v = forms.a[(r, c)];
            if v != 0.0 {
                writeln!(out, "{r} {c} {v:.16e}")?;
            }
        }
    }
    Ok(())
}

/// Reads a triplet dump back into a dense symmetric matrix of size `nd`.
pub fn read_matrix_triplets<R: BufRead>(input: R, nd: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(nd, nd);
    for line in input.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let bad = || Error::Config(format!("bad triplet line: {line:?}"));
        let r: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let c: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let v: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        m[(r, c)] = v;
        m[(c, r)] = v;
    }
    Ok(m)
}
