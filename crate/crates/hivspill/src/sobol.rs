//! Quadrature grids, Legendre polynomial chaos and Sobol indices.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{annual_series, integrate, IntegratorConfig};
use crate::model::{ModelSpec, StateVec};

pub const DEFAULT_NODE_CAP: usize = 20_000;

/// A uniformly distributed input on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertainInput {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl UncertainInput {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        UncertainInput {
            name: name.into(),
            lo,
            hi,
        }
    }

    fn map(&self, u: f64) -> f64 {
        self.lo + 0.5 * (u + 1.0) * (self.hi - self.lo)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    #[default]
    GaussLegendreTensor,
    ClenshawCurtisSmolyak,
}

#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub dims: usize,
    pub rule: Rule,
    pub level: usize,
    /// Nodes in the reference cube `[-1, 1]^d`.
    pub unit_nodes: Vec<Vec<f64>>,
    /// Nodes mapped onto the input intervals.
    pub nodes: Vec<Vec<f64>>,
    /// Probability weights; they sum to one and may be negative for Smolyak.
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `m`-point Gauss-Legendre rule on `[-1, 1]` with weights summing to one.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 1.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    (x, w)
}

/// Legendre `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Orthonormal Legendre polynomials `sqrt(2n+1) P_n(x)` for `n = 0..=deg`,
/// orthonormal under the uniform density on `[-1, 1]`.
pub fn legendre_orthonormal(deg: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(deg + 1);
    p.push(1.0);
    if deg >= 1 {
        p.push(x);
    }
    for k in 2..=deg {
        let kf = k as f64;
        p.push(((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf);
    }
    p.iter()
        .enumerate()
        .map(|(n, v)| v * (2.0 * n as f64 + 1.0).sqrt())
        .collect()
}

/// Nested Clenshaw-Curtis rule at a given level (1 point at level 1, then
/// `2^(l-1) + 1` points), weights summing to one.
pub fn clenshaw_curtis(level: usize) -> (Vec<f64>, Vec<f64>) {
    if level <= 1 {
        return (vec![0.0], vec![1.0]);
    }
    let n = (1usize << (level - 1)) + 1;
    let nm1 = (n - 1) as f64;
    let x = (0..n)
        .map(|j| -(std::f64::consts::PI * j as f64 / nm1).cos())
        .map(|v| if v.abs() < 1e-15 { 0.0 } else { v })
        .collect();
    let half = (n - 1) / 2;
    let w = (0..n)
        .map(|j| {
            let c = if j == 0 || j == n - 1 { 1.0 } else { 2.0 };
            let mut s = 1.0;
            for k in 1..=half {
                let b = if 2 * k == n - 1 { 1.0 } else { 2.0 };
                s -= b / (4.0 * (k * k) as f64 - 1.0)
                    * (2.0 * std::f64::consts::PI * (k * j) as f64 / nm1).cos();
            }
            0.5 * c * s / nm1
        })
        .collect();
    (x, w)
}

fn tensor(rules: &[(Vec<f64>, Vec<f64>)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut nodes = vec![Vec::new()];
    let mut weights = vec![1.0];
    for (x, w) in rules {
        let mut nn = Vec::with_capacity(nodes.len() * x.len());
        let mut nw = Vec::with_capacity(nodes.len() * x.len());
        for (node, wt) in nodes.iter().zip(&weights) {
            for (xi, wi) in x.iter().zip(w) {
                let mut p = node.clone();
                p.push(*xi);
                nn.push(p);
                nw.push(wt * wi);
            }
        }
        nodes = nn;
        weights = nw;
    }
    (nodes, weights)
}

fn compositions(total: usize, parts: usize, min: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in min..=total.saturating_sub(min * (parts - 1)) {
        for mut rest in compositions(total - first, parts - 1, min) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn smolyak(dims: usize, level: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let q = level + dims - 1;
    let mut acc: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    for total in q.saturating_sub(dims - 1).max(dims)..=q {
        let coef = if (q - total).is_multiple_of(2) { 1.0 } else { -1.0 } * binomial(dims - 1, q - total);
        for idx in compositions(total, dims, 1) {
            let rules: Vec<_> = idx.iter().map(|l| clenshaw_curtis(*l)).collect();
            let (nodes, weights) = tensor(&rules);
            for (x, w) in nodes.into_iter().zip(weights) {
                let key = x.iter().map(|v| (v * 1e12).round() as i64).collect();
                acc.entry(key).or_insert((x, 0.0)).1 += coef * w;
            }
        }
    }
    acc.into_values().unzip()
}

fn node_count(dims: usize, rule: Rule, level: usize) -> f64 {
    match rule {
        Rule::GaussLegendreTensor => (level as f64).powi(dims as i32),
        Rule::ClenshawCurtisSmolyak => {
            // Upper bound: the finest full tensor level across the combination.
            let m = |l: usize| if l <= 1 { 1.0 } else { ((1usize << (l - 1)) + 1) as f64 };
            compositions(level + dims - 1, dims, 1)
                .iter()
                .map(|c| c.iter().map(|l| m(*l)).product::<f64>())
                .sum()
        }
    }
}

pub fn build_grid(inputs: &[UncertainInput], rule: Rule, level: usize, cap: usize) -> Result<QuadratureGrid> {
    if level == 0 {
        return Err(Error::InvalidArgument("grid level must be >= 1".into()));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("at least one input is needed".into()));
    }
    for inp in inputs {
        if !(inp.lo <= inp.hi) {
            return Err(Error::InvalidArgument(format!(
                "input {} has lo {} > hi {}",
                inp.name, inp.lo, inp.hi
            )));
        }
    }
    let dims = inputs.len();
    let estimate = node_count(dims, rule, level);
    if estimate > cap as f64 {
        return Err(Error::DimensionOverflow {
            nodes: estimate.min(usize::MAX as f64) as usize,
            cap,
        });
    }
    let (unit_nodes, weights) = match rule {
        Rule::GaussLegendreTensor => tensor(&vec![gauss_legendre(level); dims]),
        Rule::ClenshawCurtisSmolyak => smolyak(dims, level),
    };
    if unit_nodes.len() > cap {
        return Err(Error::DimensionOverflow {
            nodes: unit_nodes.len(),
            cap,
        });
    }
    let nodes = unit_nodes
        .iter()
        .map(|u| u.iter().zip(inputs).map(|(x, inp)| inp.map(*x)).collect())
        .collect();
    Ok(QuadratureGrid {
        dims,
        rule,
        level,
        unit_nodes,
        nodes,
        weights,
    })
}

/// One model output vector per grid node, evaluated in parallel.
pub fn evaluate_ensemble<F>(model_fn: F, grid: &QuadratureGrid) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    grid.nodes
        .par_iter()
        .enumerate()
        .map(|(i, x)| model_fn(x).map_err(|e| e.context(format!("grid node {i} at {x:?}"))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcExpansion {
    pub dims: usize,
    pub total_degree: usize,
    pub index_set: Vec<Vec<usize>>,
    pub coeffs: Vec<f64>,
}

impl PcExpansion {
    /// Evaluates the expansion at a point of the reference cube.
    pub fn eval(&self, u: &[f64]) -> f64 {
        let basis: Vec<Vec<f64>> = u.iter().map(|x| legendre_orthonormal(self.total_degree, *x)).collect();
        self.index_set
            .iter()
            .zip(&self.coeffs)
            .map(|(p, d)| d * p.iter().enumerate().map(|(k, pk)| basis[k][*pk]).product::<f64>())
            .sum()
    }
}

/// Total-degree multi-indices `|p|_1 <= degree`, constant term first.
pub fn total_degree_set(dims: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        out.extend(compositions(total, dims, 0));
    }
    out
}

fn basis_matrix(grid: &QuadratureGrid, set: &[Vec<usize>], degree: usize) -> Vec<Vec<f64>> {
    grid.unit_nodes
        .iter()
        .map(|u| {
            let b: Vec<Vec<f64>> = u.iter().map(|x| legendre_orthonormal(degree, *x)).collect();
            set.iter()
                .map(|p| p.iter().enumerate().map(|(k, pk)| b[k][*pk]).product())
                .collect()
        })
        .collect()
}

/// Largest deviation of the discrete Gram matrix from the identity.
pub fn gram_deviation(grid: &QuadratureGrid, total_degree: usize) -> f64 {
    let set = total_degree_set(grid.dims, total_degree);
    let phi = basis_matrix(grid, &set, total_degree);
    let mut worst = 0.0f64;
    for a in 0..set.len() {
        for b in a..set.len() {
            let g: f64 = phi.iter().zip(&grid.weights).map(|(row, w)| w * row[a] * row[b]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

fn check_exactness(grid: &QuadratureGrid, total_degree: usize) -> Result<()> {
    match grid.rule {
        Rule::GaussLegendreTensor => {
            if 2 * grid.level - 1 < 2 * total_degree {
                return Err(Error::ExactnessViolation {
                    degree: total_degree,
                    detail: format!(
                        "{}-point Gauss-Legendre is exact to degree {}, need {}",
                        grid.level,
                        2 * grid.level - 1,
                        2 * total_degree
                    ),
                });
            }
        }
        Rule::ClenshawCurtisSmolyak => {
            let dev = gram_deviation(grid, total_degree);
            if dev > 1e-10 {
                return Err(Error::ExactnessViolation {
                    degree: total_degree,
                    detail: format!("Gram matrix deviates from identity by {dev:.3e}"),
                });
            }
        }
    }
    Ok(())
}

/// Discrete projection onto the total-degree Legendre basis.
pub fn fit_pce(samples: &[f64], grid: &QuadratureGrid, total_degree: usize) -> Result<PcExpansion> {
    if samples.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples for {} grid nodes",
            samples.len(),
            grid.len()
        )));
    }
    check_exactness(grid, total_degree)?;
    let set = total_degree_set(grid.dims, total_degree);
    let phi = basis_matrix(grid, &set, total_degree);
    let coeffs = (0..set.len())
        .map(|a| {
            phi.iter()
                .zip(&grid.weights)
                .zip(samples)
                .map(|((row, w), y)| w * y * row[a])
                .sum()
        })
        .collect();
    Ok(PcExpansion {
        dims: grid.dims,
        total_degree,
        index_set: set,
        coeffs,
    })
}

pub fn mean_var(pce: &PcExpansion) -> (f64, f64) {
    let mean = pce.coeffs[0];
    let var = pce.coeffs[1..].iter().map(|d| d * d).sum();
    (mean, var)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// False when the output variance is (numerically) zero.
    pub defined: bool,
}

pub fn sobol_indices(pce: &PcExpansion) -> SobolIndices {
    let (mean, variance) = mean_var(pce);
    let d = pce.dims;
    let floor = 1e-24 * mean * mean;
    if !(variance > floor) {
        return SobolIndices {
            first_order: vec![f64::NAN; d],
            total: vec![f64::NAN; d],
            mean,
            variance,
            defined: false,
        };
    }
    let mut first = vec![0.0; d];
    let mut total = vec![0.0; d];
    for (p, c) in pce.index_set.iter().zip(&pce.coeffs).skip(1) {
        let c2 = c * c;
        let active: Vec<usize> = (0..d).filter(|k| p[*k] != 0).collect();
        for &k in &active {
            total[k] += c2;
        }
        if let [k] = active[..] {
            first[k] += c2;
        }
    }
    SobolIndices {
        first_order: first.iter().map(|v| v / variance).collect(),
        total: total.iter().map(|v| v / variance).collect(),
        mean,
        variance,
        defined: true,
    }
}

/// Which group's PrEP fraction an input scales; `None` is a null input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyInput {
    pub input: UncertainInput,
    pub group: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SobolStudy {
    pub inputs: Vec<StudyInput>,
    pub rule: Rule,
    pub level: usize,
    pub total_degree: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Level used for the refinement comparison (usually `level + 1`).
    pub refine_level: Option<usize>,
    pub node_cap: usize,
}

impl SobolStudy {
    /// One input per group on `[-0.5, 4]` plus a null input, tensor
    /// Gauss-Legendre level 5 (checked against level 6), degree 4.
    pub fn default_for(spec: &ModelSpec, first_year: i32, last_year: i32) -> Self {
        let mut inputs: Vec<StudyInput> = spec
            .variant
            .labels()
            .iter()
            .enumerate()
            .map(|(k, l)| StudyInput {
                input: UncertainInput::new(format!("theta_{l}"), -0.5, 4.0),
                group: Some(k),
            })
            .collect();
        inputs.push(StudyInput {
            input: UncertainInput::new("theta_null", -0.5, 4.0),
            group: None,
        });
        SobolStudy {
            inputs,
            rule: Rule::GaussLegendreTensor,
            level: 5,
            total_degree: 4,
            first_year,
            last_year,
            refine_level: Some(6),
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SobolRecord {
    pub year: i32,
    pub output_group: String,
    pub indices: SobolIndices,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SobolReport {
    pub input_names: Vec<String>,
    pub rule: Rule,
    pub level: usize,
    pub nodes: usize,
    /// Nodes at which some PrEP fraction had to be clamped to `[0, 1]`.
    pub clamped_nodes: usize,
    pub boundary_affected: bool,
    pub records: Vec<SobolRecord>,
    /// Largest absolute change of any total index between the two levels.
    pub refinement_gap: Option<f64>,
}

impl SobolReport {
    pub fn get(&self, year: i32, group: &str) -> Option<&SobolIndices> {
        self.records
            .iter()
            .find(|r| r.year == year && r.output_group == group)
            .map(|r| &r.indices)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["year", "output_group", "input", "first_order", "total", "mean", "variance"])?;
        for r in &self.records {
            for (k, name) in self.input_names.iter().enumerate() {
                let fmt = |v: f64| if v.is_finite() { format!("{v}") } else { String::new() };
                wtr.write_record([
                    r.year.to_string(),
                    r.output_group.clone(),
                    name.clone(),
                    fmt(r.indices.first_order[k]),
                    fmt(r.indices.total[k]),
                    format!("{}", r.indices.mean),
                    format!("{}", r.indices.variance),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// PrEP fractions for one node: `eps_k = eps_k^0 (1 + theta_k)` clamped.
fn node_spec(spec: &ModelSpec, study: &SobolStudy, theta: &[f64]) -> (ModelSpec, bool) {
    let mut s = spec.clone();
    let mut clamped = false;
    for (inp, th) in study.inputs.iter().zip(theta) {
        if let Some(k) = inp.group {
            let e = spec.groups[k].epsilon * (1.0 + th);
            let c = e.clamp(0.0, 1.0);
            clamped |= c != e;
            s.groups[k].epsilon = c;
        }
    }
    (s, clamped)
}

fn run_level(
    spec: &ModelSpec,
    y_start: &StateVec,
    study: &SobolStudy,
    cfg: &IntegratorConfig,
    level: usize,
) -> Result<(SobolReport, usize)> {
    let inputs: Vec<UncertainInput> = study.inputs.iter().map(|i| i.input.clone()).collect();
    let grid = build_grid(&inputs, study.rule, level, study.node_cap)?;
    let run_cfg = cfg.with_span(study.first_year as f64, study.last_year as f64 + 1.0);
    let n = spec.n_groups();
    let years = (study.last_year - study.first_year + 1) as usize;
    let clamps: Vec<bool> = grid.nodes.iter().map(|th| node_spec(spec, study, th).1).collect();
    let clamped_nodes = clamps.iter().filter(|c| **c).count();
    if clamped_nodes > 0 {
        log::warn!("{clamped_nodes} grid nodes needed PrEP fractions clamped to [0, 1]");
    }
    let samples = evaluate_ensemble(
        |theta| {
            let (s, _) = node_spec(spec, study, theta);
            let traj = integrate(&s, y_start, &run_cfg)?;
            let annual = annual_series(&traj)?;
            Ok(annual.values.into_iter().flatten().collect())
        },
        &grid,
    )?;
    let labels = spec.variant.labels();
    let mut records = Vec::with_capacity(years * n);
    for y in 0..years {
        for (j, label) in labels.iter().enumerate() {
            let col: Vec<f64> = samples.iter().map(|s| s[y * n + j]).collect();
            let pce = fit_pce(&col, &grid, study.total_degree)?;
            records.push(SobolRecord {
                year: study.first_year + y as i32,
                output_group: label.to_string(),
                indices: sobol_indices(&pce),
            });
        }
    }
    Ok((
        SobolReport {
            input_names: inputs.iter().map(|i| i.name.clone()).collect(),
            rule: study.rule,
            level,
            nodes: grid.len(),
            clamped_nodes,
            boundary_affected: clamped_nodes > 0,
            records,
            refinement_gap: None,
        },
        grid.len(),
    ))
}

/// Sobol indices of annual incidence per year and group, starting from the
/// state `y_start` at `first_year`.
pub fn sobol_timeseries(
    spec: &ModelSpec,
    y_start: &StateVec,
    study: &SobolStudy,
    cfg: &IntegratorConfig,
) -> Result<SobolReport> {
    if study.last_year < study.first_year {
        return Err(Error::Config("sobol last_year precedes first_year".into()));
    }
    let (mut report, _) = run_level(spec, y_start, study, cfg, study.level)?;
    if let Some(fine) = study.refine_level {
        let (other, _) = run_level(spec, y_start, study, cfg, fine)?;
        let mut gap = 0.0f64;
        for (a, b) in report.records.iter().zip(&other.records) {
            if a.indices.defined && b.indices.defined {
                for (x, y) in a.indices.total.iter().zip(&b.indices.total) {
                    gap = gap.max((x - y).abs());
                }
            }
        }
        report.refinement_gap = Some(gap);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(d: usize) -> Vec<UncertainInput> {
        (0..d).map(|k| UncertainInput::new(format!("x{k}"), -1.0, 1.0)).collect()
    }

    #[test]
    fn two_point_gauss() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(x[0], -1.0 / 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(w[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(w[1], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn weights_sum_to_one() {
        for rule in [Rule::GaussLegendreTensor, Rule::ClenshawCurtisSmolyak] {
            for level in 1..=6 {
                for d in 1..=4 {
                    let g = build_grid(&unit(d), rule, level, DEFAULT_NODE_CAP).unwrap();
                    let s: f64 = g.weights.iter().sum();
                    assert!((s - 1.0).abs() < 1e-12, "{rule:?} L{level} d{d}: {s}");
                }
            }
        }
    }

    #[test]
    fn tensor_size_and_cap() {
        assert_eq!(build_grid(&unit(4), Rule::GaussLegendreTensor, 5, DEFAULT_NODE_CAP).unwrap().len(), 625);
        assert!(matches!(
            build_grid(&unit(4), Rule::GaussLegendreTensor, 12, DEFAULT_NODE_CAP),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn nodes_inside_intervals() {
        let inputs = vec![UncertainInput::new("a", -0.5, 4.0), UncertainInput::new("b", 2.0, 3.0)];
        for rule in [Rule::GaussLegendreTensor, Rule::ClenshawCurtisSmolyak] {
            let g = build_grid(&inputs, rule, 4, DEFAULT_NODE_CAP).unwrap();
            for x in &g.nodes {
                assert!((-0.5..=4.0).contains(&x[0]) && (2.0..=3.0).contains(&x[1]));
            }
        }
    }

    #[test]
    fn linear_projection() {
        let g = build_grid(&unit(2), Rule::GaussLegendreTensor, 3, DEFAULT_NODE_CAP).unwrap();
        let y: Vec<f64> = g.nodes.iter().map(|x| x[0]).collect();
        let pce = fit_pce(&y, &g, 2).unwrap();
        for (p, d) in pce.index_set.iter().zip(&pce.coeffs) {
            let expect = if *p == vec![1, 0] { 1.0 / 3f64.sqrt() } else { 0.0 };
            assert!((d - expect).abs() < 1e-12, "{p:?}: {d}");
        }
    }

    #[test]
    fn exactness_refused() {
        let g = build_grid(&unit(2), Rule::GaussLegendreTensor, 2, DEFAULT_NODE_CAP).unwrap();
        let y = vec![0.0; g.len()];
        assert!(matches!(fit_pce(&y, &g, 2), Err(Error::ExactnessViolation { .. })));
        let s = build_grid(&unit(2), Rule::ClenshawCurtisSmolyak, 2, DEFAULT_NODE_CAP).unwrap();
        let y = vec![0.0; s.len()];
        assert!(matches!(fit_pce(&y, &s, 3), Err(Error::ExactnessViolation { .. })));
    }

    #[test]
    fn smolyak_gram_identity() {
        let g = build_grid(&unit(4), Rule::ClenshawCurtisSmolyak, 5, DEFAULT_NODE_CAP).unwrap();
        assert!(gram_deviation(&g, 3) < 1e-10);
    }

    #[test]
    fn constant_is_undefined() {
        let g = build_grid(&unit(2), Rule::GaussLegendreTensor, 3, DEFAULT_NODE_CAP).unwrap();
        let pce = fit_pce(&vec![3.5; g.len()], &g, 2).unwrap();
        assert_relative_eq!(mean_var(&pce).0, 3.5, max_relative = 1e-14);
        assert!(!sobol_indices(&pce).defined);
    }
}
