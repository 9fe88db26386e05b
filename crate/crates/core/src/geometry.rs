//! Labeled Cartesian grids: the region Ω, the Dirichlet set D and the
//! Neumann set N, plus the far-field convention outside the box.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Omega = 0,
    Dirichlet = 1,
    Neumann = 2,
}

impl Label {
    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Omega),
            1 => Some(Label::Dirichlet),
            2 => Some(Label::Neumann),
            _ => None,
        }
    }
}

/// What lies outside the computational box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FarField {
    /// u = 0 outside the box; its interaction with Ω is integrated exactly.
    FarDirichlet,
    /// Interactions with the exterior are dropped (an approximation).
    FarNeumannTruncated,
}

/// Uniform grid on [-L, L]^d with `n` cells per side. The origin is a grid
/// vertex, so no cell center sits on the Hardy pole.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGrid {
    pub d: usize,
    pub half_width: f64,
    pub n: usize,
    pub h: f64,
    pub labels: Vec<Label>,
    pub far_field: FarField,
}

pub type Point = [f64; 2];

impl LabeledGrid {
    pub fn cell_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Axis indices (ix, iy); iy = 0 in one dimension.
    pub fn coords(&self, i: usize) -> (usize, usize) {
        if self.d == 1 {
            (i, 0)
        } else {
            (i % self.n, i / self.n)
        }
    }

    /// Row-major index.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        if self.d == 1 {
            ix
        } else {
            iy * self.n + ix
        }
    }

    fn axis_center(&self, k: usize) -> f64 {
        -self.half_width + (k as f64 + 0.5) * self.h
    }

    pub fn center(&self, i: usize) -> Point {
        let (ix, iy) = self.coords(i);
        if self.d == 1 {
            [self.axis_center(ix), 0.0]
        } else {
            [self.axis_center(ix), self.axis_center(iy)]
        }
    }

    /// Lower and upper corners; the unused second axis is [0, 0] in 1D.
    pub fn bounds(&self, i: usize) -> (Point, Point) {
        let (ix, iy) = self.coords(i);
        let lo = |k: usize| -self.half_width + k as f64 * self.h;
        if self.d == 1 {
            ([lo(ix), 0.0], [lo(ix + 1), 0.0])
        } else {
            ([lo(ix), lo(iy)], [lo(ix + 1), lo(iy + 1)])
        }
    }

    pub fn radius(&self, i: usize) -> f64 {
        let c = self.center(i);
        c[0].hypot(c[1])
    }

    /// The designated origin cell [0, h]^d.
    pub fn origin_cell(&self) -> usize {
        self.index(self.n / 2, if self.d == 1 { 0 } else { self.n / 2 })
    }

    /// The 2^d cells sharing the origin vertex.
    pub fn origin_cells(&self) -> Vec<usize> {
        let m = self.n / 2;
        if self.d == 1 {
            vec![m - 1, m]
        } else {
            vec![self.index(m - 1, m - 1), self.index(m, m - 1), self.index(m - 1, m), self.index(m, m)]
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn cells_with(&self, label: Label) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Face neighbours.
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let (ix, iy) = self.coords(i);
        let mut out = Vec::with_capacity(4);
        if ix > 0 {
            out.push(self.index(ix - 1, iy));
        }
        if ix + 1 < self.n {
            out.push(self.index(ix + 1, iy));
        }
        if self.d == 2 {
            if iy > 0 {
                out.push(self.index(ix, iy - 1));
            }
            if iy + 1 < self.n {
                out.push(self.index(ix, iy + 1));
            }
        }
        out
    }

    fn on_box_boundary(&self, i: usize) -> bool {
        let (ix, iy) = self.coords(i);
        let edge = |k: usize| k == 0 || k + 1 == self.n;
        edge(ix) || (self.d == 2 && edge(iy))
    }
}

/// All cells NEUMANN initially.
pub fn build_grid(d: usize, half_width: f64, n: usize, far_field: FarField) -> Result<LabeledGrid> {
    if !(d == 1 || d == 2) {
        return param(format!("dimension {d} unsupported (1 or 2)"));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return param(format!("box half-width {half_width} must be positive"));
    }
    if n < 8 || !n.is_multiple_of(2) {
        return param(format!("n = {n} must be even and at least 8"));
    }
    let h = 2.0 * half_width / n as f64;
    Ok(LabeledGrid { d, half_width, n, h, labels: vec![Label::Neumann; n.pow(d as u32)], far_field })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub eps: f64,
    pub eta: f64,
    pub a_len: f64,
    pub m: f64,
    pub beta: f64,
}

impl Example1Params {
    pub fn check(&self) -> Result<()> {
        let p = self;
        let mut bad = Vec::new();
        if !(0.0 < p.eps && p.eps < p.eta && p.eta < p.a_len && p.a_len < p.beta) {
            bad.push("need 0 < eps < eta < A < beta".to_string());
        }
        if !(p.eps < p.m) {
            bad.push("need eps < m".to_string());
        }
        if !(p.eps < (p.eta / 4.0).min(p.m / 4.0)) {
            bad.push("need eps < min(eta/4, m/4)".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn in_ball(&self, y: Point) -> bool {
        y[0].hypot(y[1]) < self.eps
    }

    /// Cylinder part, cut at |y| ≤ A so it does not overlap the annulus.
    pub fn in_cylinder(&self, y: Point) -> bool {
        y[0] >= self.eps && y[1].abs() < self.eps && y[0].hypot(y[1]) <= self.a_len
    }

    pub fn in_annulus(&self, y: Point) -> bool {
        let r = y[0].hypot(y[1]);
        self.a_len < r && r < self.beta
    }

    pub fn in_omega(&self, y: Point) -> bool {
        self.in_ball(y) || self.in_cylinder(y) || self.in_annulus(y)
    }

    pub fn in_dirichlet(&self, y: Point) -> bool {
        if self.in_omega(y) {
            return false;
        }
        let r = y[0].hypot(y[1]);
        let shell = self.eps < r && r < self.eta;
        let sleeve = self.eta <= y[0] && y[0] <= self.a_len && self.eps < y[1].abs() && y[1].abs() < self.m;
        shell || sleeve || r > self.beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryKind {
    Ball { r_omega: f64, r1: f64, r2: f64 },
    Example1(Example1Params),
    Custom,
    Shrunk { k: usize, kept: usize },
}

/// A labeled grid together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct DNConfig {
    pub grid: LabeledGrid,
    pub kind: GeometryKind,
    /// Permits an empty Dirichlet set under a truncated far field (the
    /// pure-Neumann diagnostic).
    pub allow_empty_dirichlet: bool,
}

impl DNConfig {
    pub fn labels(&self) -> &[Label] {
        &self.grid.labels
    }

    pub fn example1(&self) -> Option<&Example1Params> {
        match &self.kind {
            GeometryKind::Example1(p) => Some(p),
            _ => None,
        }
    }

    /// True when the discrete form has no definite part.
    pub fn is_pure_neumann(&self) -> bool {
        self.grid.far_field == FarField::FarNeumannTruncated && self.grid.count(Label::Dirichlet) == 0
    }
}

fn finish(config: DNConfig) -> Result<DNConfig> {
    let problems = validate(&config);
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Ω = {|x| < r_omega}, D = {r1 < |x| < r2}, N = the rest (cell centers).
///
/// r1 = r_omega gives the full-Dirichlet configuration, and r2 may reach the
/// box corner L·√d.
pub fn label_ball_config(grid: &LabeledGrid, r_omega: f64, shell: (f64, f64)) -> Result<DNConfig> {
    let (r1, r2) = shell;
    let corner = grid.half_width * (grid.d as f64).sqrt();
    if !(0.0 < r_omega && r_omega <= r1 && r1 < r2 && r2 <= corner * (1.0 + 1e-12)) {
        return param(format!("need 0 < r_omega <= r1 < r2 <= L*sqrt(d); got {r_omega}, {r1}, {r2}"));
    }
    let mut g = grid.clone();
    for i in 0..g.cell_count() {
        let r = g.radius(i);
        g.labels[i] = if r < r_omega {
            Label::Omega
        } else if r1 < r && r < r2 {
            Label::Dirichlet
        } else {
            Label::Neumann
        };
    }
    finish(DNConfig { grid: g, kind: GeometryKind::Ball { r_omega, r1, r2 }, allow_empty_dirichlet: false })
}

/// Ω = ball of radius r_omega and no Dirichlet cells at all, under a
/// truncated far field: the degenerate pure-Neumann diagnostic.
pub fn pure_neumann_config(grid: &LabeledGrid, r_omega: f64) -> Result<DNConfig> {
    let mut g = grid.clone();
    g.far_field = FarField::FarNeumannTruncated;
    for i in 0..g.cell_count() {
        g.labels[i] = if g.radius(i) < r_omega { Label::Omega } else { Label::Neumann };
    }
    let r = r_omega;
    finish(DNConfig { grid: g, kind: GeometryKind::Ball { r_omega: r, r1: r, r2: r }, allow_empty_dirichlet: true })
}

/// Same Ω, every other cell Dirichlet, Dirichlet far field: the reference
/// configuration for the whole-space constant on this grid.
pub fn dirichlet_closure(config: &DNConfig) -> Result<DNConfig> {
    let mut g = config.grid.clone();
    g.far_field = FarField::FarDirichlet;
    for l in g.labels.iter_mut() {
        if *l != Label::Omega {
            *l = Label::Dirichlet;
        }
    }
    finish(DNConfig { grid: g, kind: GeometryKind::Custom, allow_empty_dirichlet: false })
}

/// The three-piece region of the non-attainability example.
///
/// Midpoint labeling throughout, except that cells meeting the ball or the
/// cylinder are marked Ω, so the thin parts stay connected on coarse grids.
pub fn label_example1(grid: &LabeledGrid, p: &Example1Params) -> Result<DNConfig> {
    p.check()?;
    if !(p.beta < grid.half_width) {
        return Err(Error::Validation(vec![format!("beta = {} must be below L = {}", p.beta, grid.half_width)]));
    }
    let mut g = grid.clone();
    for i in 0..g.cell_count() {
        let c = g.center(i);
        let (lo, hi) = g.bounds(i);
        let meets_thin = if g.d == 1 {
            lo[0] < p.a_len && hi[0] > -p.eps
        } else {
            let ball = {
                let qx = 0f64.clamp(lo[0], hi[0]);
                let qy = 0f64.clamp(lo[1], hi[1]);
                qx.hypot(qy) < p.eps
            };
            let cyl = lo[0] < p.a_len && hi[0] > p.eps && lo[1] < p.eps && hi[1] > -p.eps;
            ball || cyl
        };
        g.labels[i] = if meets_thin || p.in_omega(c) {
            Label::Omega
        } else if p.in_dirichlet(c) {
            Label::Dirichlet
        } else {
            Label::Neumann
        };
    }
    finish(DNConfig { grid: g, kind: GeometryKind::Example1(*p), allow_empty_dirichlet: false })
}

/// Explicit labels, row-major.
pub fn label_custom(grid: &LabeledGrid, codes: &[u8]) -> Result<DNConfig> {
    if codes.len() != grid.cell_count() {
        return Err(Error::Validation(vec![format!(
            "label count {} != cell count {}",
            codes.len(),
            grid.cell_count()
        )]));
    }
    let mut g = grid.clone();
    for (i, &c) in codes.iter().enumerate() {
        g.labels[i] =
            Label::from_code(c).ok_or_else(|| Error::Validation(vec![format!("bad label {c} at cell {i}")]))?;
    }
    finish(DNConfig { grid: g, kind: GeometryKind::Custom, allow_empty_dirichlet: false })
}

/// Reads one integer label per line; blank lines and `#` comments skipped.
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: u8 =
            t.parse().map_err(|_| Error::Validation(vec![format!("line {}: not a label: {t:?}", lineno + 1)]))?;
        out.push(v);
    }
    Ok(out)
}

/// Squared distance from cell i's center to the nearest Ω center.
fn distance_to_omega(grid: &LabeledGrid, omega: &[usize], i: usize) -> f64 {
    let c = grid.center(i);
    omega
        .iter()
        .map(|&j| {
            let o = grid.center(j);
            (c[0] - o[0]).powi(2) + (c[1] - o[1]).powi(2)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Keeps the ⌈|D|/2^k⌉ Dirichlet cells nearest Ω and relabels the rest
/// NEUMANN. The ordering is fixed, so the family is nested in k.
pub fn shrinking_family(base: &DNConfig, k: usize) -> Result<DNConfig> {
    if k < 1 {
        return param("shrinking index k must be >= 1");
    }
    let grid = &base.grid;
    let omega = grid.cells_with(Label::Omega);
    let mut dir: Vec<(f64, usize)> =
        grid.cells_with(Label::Dirichlet).into_iter().map(|i| (distance_to_omega(grid, &omega, i), i)).collect();
    dir.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let total = dir.len();
    let keep = if k >= usize::BITS as usize { total.min(1) } else { total.div_ceil(1usize << k) };
    let mut g = grid.clone();
    for &(_, i) in &dir[keep..] {
        g.labels[i] = Label::Neumann;
    }
    Ok(DNConfig {
        grid: g,
        kind: GeometryKind::Shrunk { k, kept: keep },
        allow_empty_dirichlet: base.allow_empty_dirichlet,
    })
}

/// Violations of the labeled-grid invariants; empty means valid.
pub fn validate(config: &DNConfig) -> Vec<String> {
    let g = &config.grid;
    let mut out = Vec::new();
    if g.labels.len() != g.cell_count() {
        out.push(format!("{} labels for {} cells", g.labels.len(), g.cell_count()));
        return out;
    }
    let origin = g.origin_cell();
    if g.labels[origin] != Label::Omega {
        out.push(format!("origin cell {origin} labeled {:?}", g.labels[origin]));
    }
    let omega = g.cells_with(Label::Omega);
    if omega.is_empty() {
        out.push("Omega is empty".to_string());
    } else {
        let mut seen = vec![false; g.cell_count()];
        let mut queue = VecDeque::from([omega[0]]);
        seen[omega[0]] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for j in g.neighbours(i) {
                if !seen[j] && g.labels[j] == Label::Omega {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        if reached != omega.len() {
            out.push(format!("Omega disconnected ({reached} of {} cells reachable)", omega.len()));
        }
        if omega.iter().any(|&i| g.on_box_boundary(i)) {
            out.push("Omega touches the box boundary".to_string());
        }
    }
    if config.is_pure_neumann() && !config.allow_empty_dirichlet {
        out.push("empty Dirichlet set with a truncated far field".to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> Example1Params {
        Example1Params { eps: 0.1, eta: 1.0, a_len: 2.0, m: 1.0, beta: 8.0 }
    }

    #[test]
    fn grid_basics() {
        let g = build_grid(1, 2.0, 16, FarField::FarDirichlet).unwrap();
        assert_eq!(g.cell_count(), 16);
        assert!((g.h - 0.25).abs() < 1e-15);
        let g = build_grid(2, 1.0, 8, FarField::FarDirichlet).unwrap();
        assert_eq!(g.cell_count(), 64);
        let (lo, hi) = g.bounds(g.origin_cell());
        assert_eq!(lo, [0.0, 0.0]);
        assert_eq!(hi, [0.25, 0.25]);
        assert!(build_grid(1, 1.0, 9, FarField::FarDirichlet).is_err());
        assert!(build_grid(1, 1.0, 6, FarField::FarDirichlet).is_err());
        for i in 0..g.cell_count() {
            assert!(g.radius(i) > 0.0);
        }
    }

    #[test]
    fn ball_config_partition_and_nesting() {
        let g = build_grid(2, 1.0, 16, FarField::FarNeumannTruncated).unwrap();
        let a = label_ball_config(&g, 0.3, (0.5, 0.7)).unwrap();
        let b = label_ball_config(&g, 0.3, (0.5, 0.9)).unwrap();
        let total = a.grid.count(Label::Omega) + a.grid.count(Label::Dirichlet) + a.grid.count(Label::Neumann);
        assert_eq!(total, 256);
        for i in 0..256 {
            if a.labels()[i] == Label::Dirichlet {
                assert_eq!(b.labels()[i], Label::Dirichlet);
            }
        }
        assert!(b.grid.count(Label::Dirichlet) > a.grid.count(Label::Dirichlet));
        // a shell between cell centers leaves D empty
        let g1 = build_grid(1, 1.0, 16, FarField::FarNeumannTruncated).unwrap();
        let e = label_ball_config(&g1, 0.3, (0.95, 0.97));
        assert!(matches!(e, Err(Error::Validation(_))));
        assert!(label_ball_config(&g, 0.3, (0.2, 0.9)).is_err());
    }

    #[test]
    fn example1_labels() {
        let g = build_grid(2, 9.0, 48, FarField::FarDirichlet).unwrap();
        let c = label_example1(&g, &ex1()).unwrap();
        assert!(validate(&c).is_empty());
        let p = ex1();
        for i in c.grid.cells_with(Label::Neumann) {
            let r = c.grid.radius(i);
            assert!(r >= p.eta && r <= p.a_len * 2f64.sqrt(), "N cell at radius {r}");
        }
        assert_eq!(c.labels()[c.grid.origin_cell()], Label::Omega);
        // reflection across the x1 axis
        for ix in 0..48 {
            for iy in 0..48 {
                assert_eq!(c.labels()[c.grid.index(ix, iy)], c.labels()[c.grid.index(ix, 47 - iy)]);
            }
        }
        let mut bad = ex1();
        bad.eps = 0.3;
        assert!(label_example1(&g, &bad).is_err());
    }

    #[test]
    fn shrinking_is_nested() {
        let g = build_grid(1, 1.0, 64, FarField::FarNeumannTruncated).unwrap();
        let base = label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap();
        let nd = base.grid.count(Label::Dirichlet);
        let mut prev = base.clone();
        for k in 1..=8 {
            let c = shrinking_family(&base, k).unwrap();
            assert_eq!(c.grid.count(Label::Dirichlet), nd.div_ceil(1 << k));
            for i in 0..64 {
                if c.labels()[i] == Label::Dirichlet {
                    assert_eq!(prev.labels()[i], Label::Dirichlet);
                }
            }
            prev = c;
        }
        assert_eq!(shrinking_family(&base, 40).unwrap().grid.count(Label::Dirichlet), 1);
        assert!(shrinking_family(&base, 0).is_err());
    }

    #[test]
    fn validate_reports() {
        let g = build_grid(2, 1.0, 16, FarField::FarDirichlet).unwrap();
        let mut c = label_ball_config(&g, 0.3, (0.5, 0.9)).unwrap();
        let o = c.grid.origin_cell();
        c.grid.labels[o] = Label::Dirichlet;
        let v = validate(&c);
        assert_eq!(v.len(), 1, "{v:?}");
        let mut c = label_ball_config(&g, 0.3, (0.5, 0.9)).unwrap();
        let far = c.grid.index(12, 12);
        c.grid.labels[far] = Label::Omega;
        let v = validate(&c);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("disconnected"));
    }

    #[test]
    fn custom_labels_round_trip() {
        let g = build_grid(1, 1.0, 8, FarField::FarDirichlet).unwrap();
        let codes = [1, 1, 2, 0, 0, 2, 1, 1];
        let c = label_custom(&g, &codes).unwrap();
        assert_eq!(c.grid.count(Label::Omega), 2);
        assert!(label_custom(&g, &codes[..7]).is_err());
        assert!(label_custom(&g, &[1, 1, 2, 0, 0, 2, 1, 7]).is_err());
    }
}
