//! Scenario batches, table validation and file outputs.

pub mod config;
pub mod golden;
pub mod plots;
pub mod presets;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::ClosureCache;
use crate::error::{Error, Result};
use crate::integrate::{annual_series, solve, IntegratorConfig, Method, OdeSystem, Trajectory};
use crate::model::{lambda_vectors, populations_flat, rhs_flat, with_time, ModelSpec, StateVec};
use crate::sobol::{sobol_timeseries, SobolReport, SobolStudy, StudyInput, UncertainInput};
use crate::spillover::{integrate_with_spillover, nnt, NntResult, SensitivityTrajectory};

pub use config::{load_config, parse_config, ScenarioConfig};
use golden::GoldenTable;

/// PrEP given as fixed person counts: `eps_j = min(1, E_j / S_j(t))` at every
/// evaluation.
struct PersonsSystem {
    spec: ModelSpec,
    persons: Vec<f64>,
    cache: ClosureCache,
}

impl OdeSystem for PersonsSystem {
    fn dim(&self) -> usize {
        3 * self.spec.n_groups()
    }

    fn nonneg_dim(&self) -> usize {
        self.dim()
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.spec.n_groups();
        for j in 0..n {
            let (e, s) = (self.persons[j], y[2 * j]);
            self.spec.groups[j].epsilon = if e <= 0.0 {
                0.0
            } else if s > e {
                e / s
            } else {
                1.0
            };
        }
        let pops = populations_flat(y, n);
        let mix = self
            .spec
            .mixing_at(&pops, Some(&mut self.cache))
            .map_err(|e| with_time(e, t))?;
        let lam = lambda_vectors(&self.spec, &pops, &mix)?;
        rhs_flat(&self.spec, &lam, y, dy);
        Ok(())
    }
}

fn integrator(method: Method, t0: f64, t1: f64) -> IntegratorConfig {
    IntegratorConfig { method, t0, t_end: t1 }
}

/// Integrates `spec` from `y0`, optionally with PrEP held at fixed person counts.
fn simulate(
    spec: &ModelSpec,
    y0: &StateVec,
    cfg: &IntegratorConfig,
    persons: Option<&[f64]>,
) -> Result<Trajectory> {
    let sol = match persons {
        None => {
            return crate::integrate::integrate(spec, y0, cfg);
        }
        Some(p) => {
            spec.validate()?;
            let mut sys = PersonsSystem {
                spec: spec.clone(),
                persons: p.to_vec(),
                cache: ClosureCache::default(),
            };
            solve(&mut sys, &y0.to_flat(), cfg)?
        }
    };
    Ok(Trajectory {
        variant: spec.variant,
        times: sol.times,
        states: sol.states,
        clamp_events: sol.clamp_events,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub label: String,
    pub group: Option<String>,
    pub additional_persons: f64,
    /// PrEP fraction applied to the intervention group at its start.
    pub epsilon: Option<f64>,
    /// Cumulative incidence per group over the reporting window.
    pub incidence: Vec<f64>,
    pub total: f64,
    pub prevented: Option<Vec<f64>>,
    pub prevented_total: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub model: String,
    pub groups: Vec<String>,
    pub report_first_year: i32,
    pub report_last_year: i32,
    pub baseline: ScenarioResult,
    pub scenarios: Vec<ScenarioResult>,
    pub files: Vec<String>,
}

/// Everything a run produced, kept in memory until written.
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub report: RunReport,
    pub baseline: Trajectory,
    pub scenarios: Vec<Trajectory>,
    pub spillover: Option<(Trajectory, SensitivityTrajectory)>,
    pub nnt: Vec<NntResult>,
    pub sobol: Option<SobolReport>,
}

fn window(traj: &Trajectory, first: i32, last: i32) -> Result<Vec<f64>> {
    annual_series(traj)?.window_sum(first, last)
}

fn baseline_run(cfg: &ScenarioConfig) -> Result<Trajectory> {
    let span = integrator(cfg.method, cfg.start_year as f64, cfg.report_last_year as f64 + 1.0);
    let persons = cfg.recompute_epsilon.then_some(&cfg.baseline_prep_persons[..]);
    simulate(&cfg.spec, &cfg.initial, &span, persons).map_err(|e| e.context("baseline"))
}

fn intervention_run(
    cfg: &ScenarioConfig,
    baseline: &Trajectory,
    iv: &config::ResolvedIntervention,
) -> Result<(Trajectory, f64)> {
    let t_start = iv.start_year as f64;
    let end = cfg.report_last_year as f64 + 1.0;
    let idx = baseline
        .index_of(t_start)
        .ok_or_else(|| Error::MissingSeries(format!("baseline state at {t_start}")))?;
    let mut prefix = Trajectory {
        variant: baseline.variant,
        times: baseline.times[..=idx].to_vec(),
        states: baseline.states[..=idx].to_vec(),
        clamp_events: Vec::new(),
    };
    if t_start >= end {
        return Ok((prefix, cfg.spec.groups[iv.group].epsilon));
    }
    let state = baseline.state(idx);
    let persons = cfg.baseline_prep_persons[iv.group] + iv.additional_persons;
    let s_k = state.s[iv.group];
    let eps = if s_k > 0.0 { (persons / s_k).min(1.0) } else { 1.0 };
    let span = integrator(cfg.method, t_start, end);
    let tail = if cfg.recompute_epsilon {
        let mut p = cfg.baseline_prep_persons.clone();
        p[iv.group] = persons;
        simulate(&cfg.spec, &state, &span, Some(&p))?
    } else {
        if persons > s_k {
            log::warn!("{}: {persons} persons exceed S = {s_k}; PrEP fraction clamped to 1", iv.label);
        }
        simulate(&cfg.spec.with_epsilon(iv.group, eps), &state, &span, None)?
    };
    prefix.append(tail);
    Ok((prefix, eps))
}

pub fn run_scenarios(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    let labels = cfg.spec.variant.labels();
    let (first, last) = (cfg.report_first_year, cfg.report_last_year);
    let baseline = baseline_run(cfg)?;
    let base_inc = window(&baseline, first, last)?;
    let runs: Vec<Result<(Trajectory, f64)>> = cfg
        .interventions
        .par_iter()
        .map(|iv| intervention_run(cfg, &baseline, iv).map_err(|e| e.context(format!("scenario {}", iv.label))))
        .collect();
    let mut scenarios = Vec::new();
    let mut results = Vec::new();
    for (iv, run) in cfg.interventions.iter().zip(runs) {
        let (traj, eps) = run?;
        let inc = window(&traj, first, last)?;
        let prevented: Vec<f64> = base_inc.iter().zip(&inc).map(|(b, s)| b - s).collect();
        results.push(ScenarioResult {
            label: iv.label.clone(),
            group: Some(labels[iv.group].to_string()),
            additional_persons: iv.additional_persons,
            epsilon: Some(eps),
            total: inc.iter().sum(),
            incidence: inc,
            prevented_total: Some(prevented.iter().sum()),
            prevented: Some(prevented),
        });
        scenarios.push(traj);
    }

    let origin = first as f64;
    let spill_needed = !cfg.outputs.spillover_sources.is_empty() || !cfg.outputs.nnt_pairs.is_empty();
    let origin_state = || -> Result<StateVec> {
        let i = baseline
            .index_of(origin)
            .ok_or_else(|| Error::MissingSeries(format!("baseline state at {origin}")))?;
        Ok(baseline.state(i))
    };
    let spillover = if spill_needed {
        let mut sources: Vec<usize> = Vec::new();
        let names = cfg
            .outputs
            .spillover_sources
            .iter()
            .chain(cfg.outputs.nnt_pairs.iter().map(|(_, k)| k));
        for s in names {
            let k = cfg.spec.group(s)?.index;
            if !sources.contains(&k) {
                sources.push(k);
            }
        }
        let ids: Vec<_> = sources
            .iter()
            .map(|k| crate::model::GroupId {
                variant: cfg.spec.variant,
                index: *k,
            })
            .collect();
        let mut y = origin_state()?;
        y.c = vec![0.0; y.c.len()];
        let span = integrator(cfg.method, origin, last as f64 + 1.0);
        Some(
            integrate_with_spillover(&cfg.spec, &y, &ids, cfg.outputs.spillover_form, &span)
                .map_err(|e| e.context("spillover"))?,
        )
    } else {
        None
    };
    let mut nnts = Vec::new();
    if let Some((traj, sens)) = &spillover {
        let max_t = (last + 1 - first) as f64;
        for (j, k) in &cfg.outputs.nnt_pairs {
            let (j, k) = (cfg.spec.group(j)?.index, cfg.spec.group(k)?.index);
            let mut t = 1.0;
            while t <= cfg.outputs.nnt_horizon.min(max_t) {
                nnts.push(nnt(sens, traj, cfg.spec.mu, j, k, t)?);
                t += 1.0;
            }
        }
    }
    let sobol = match &cfg.outputs.sobol {
        None => None,
        Some(s) => {
            let mut inputs: Vec<StudyInput> = labels
                .iter()
                .enumerate()
                .map(|(k, l)| StudyInput {
                    input: UncertainInput::new(format!("theta_{l}"), s.theta_lo, s.theta_hi),
                    group: Some(k),
                })
                .collect();
            if s.null_input {
                inputs.push(StudyInput {
                    input: UncertainInput::new("theta_null", s.theta_lo, s.theta_hi),
                    group: None,
                });
            }
            let study = SobolStudy {
                inputs,
                rule: s.rule,
                level: s.level,
                total_degree: s.total_degree,
                first_year: first,
                last_year: last,
                refine_level: s.refine_level,
                node_cap: crate::sobol::DEFAULT_NODE_CAP,
            };
            let mut y = origin_state()?;
            y.c = vec![0.0; y.c.len()];
            let span = integrator(cfg.method, origin, last as f64 + 1.0);
            Some(sobol_timeseries(&cfg.spec, &y, &study, &span).map_err(|e| e.context("sobol"))?)
        }
    };

    let report = RunReport {
        config_hash: cfg.hash.clone(),
        model: cfg.spec.variant.to_string(),
        groups: labels.iter().map(|s| s.to_string()).collect(),
        report_first_year: first,
        report_last_year: last,
        baseline: ScenarioResult {
            label: "baseline".into(),
            group: None,
            additional_persons: 0.0,
            epsilon: None,
            total: base_inc.iter().sum(),
            incidence: base_inc,
            prevented: None,
            prevented_total: None,
        },
        scenarios: results,
        files: Vec::new(),
    };
    Ok(ScenarioRun {
        config: cfg.clone(),
        report,
        baseline,
        scenarios,
        spillover,
        nnt: nnts,
        sobol,
    })
}

fn create(dir: &Path, name: &str, files: &mut Vec<String>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    files.push(name.to_string());
    Ok(BufWriter::new(f))
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

pub fn write_nnt_csv<W: std::io::Write>(rows: &[NntResult], labels: &[&str], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["j", "k", "T", "nnt_simple", "nnt_integral", "defined"])?;
    for r in rows {
        let cell = |v: f64| if r.defined { format!("{v}") } else { String::new() };
        wtr.write_record([
            labels[r.j].to_string(),
            labels[r.k].to_string(),
            format!("{}", r.horizon),
            cell(r.nnt_simple),
            cell(r.nnt_integral),
            r.defined.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes every requested output under `dir` and returns the report with the
/// file list filled in.
pub fn write_run(run: &ScenarioRun, dir: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let labels = run.config.spec.variant.labels();
    {
        let mut wtr = csv::Writer::from_writer(create(dir, "incidence.csv", &mut files)?);
        let mut header = vec!["scenario".to_string()];
        header.extend(labels.iter().map(|l| format!("incidence_{l}")));
        header.push("total".into());
        header.extend(labels.iter().map(|l| format!("prevented_{l}")));
        header.push("prevented_total".into());
        wtr.write_record(&header)?;
        for r in std::iter::once(&run.report.baseline).chain(&run.report.scenarios) {
            let mut rec = vec![r.label.clone()];
            rec.extend(r.incidence.iter().map(|v| format!("{v}")));
            rec.push(format!("{}", r.total));
            match &r.prevented {
                Some(p) => rec.extend(p.iter().map(|v| format!("{v}"))),
                None => rec.extend(labels.iter().map(|_| String::new())),
            }
            rec.push(r.prevented_total.map(|v| format!("{v}")).unwrap_or_default());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
    }
    if run.config.outputs.trajectories {
        run.baseline.write_csv(create(dir, "trajectory_baseline.csv", &mut files)?)?;
        for (r, t) in run.report.scenarios.iter().zip(&run.scenarios) {
            t.write_csv(create(dir, &format!("trajectory_{}.csv", sanitize(&r.label)), &mut files)?)?;
        }
    }
    if let Some((_, sens)) = &run.spillover {
        sens.write_csv(create(dir, "spillover.csv", &mut files)?)?;
    }
    if !run.nnt.is_empty() {
        write_nnt_csv(&run.nnt, labels, create(dir, "nnt.csv", &mut files)?)?;
    }
    if let Some(s) = &run.sobol {
        s.write_csv(create(dir, "sobol.csv", &mut files)?)?;
        let manifest = serde_json::json!({
            "rule": s.rule,
            "level": s.level,
            "nodes": s.nodes,
            "clamped_nodes": s.clamped_nodes,
            "boundary_affected": s.boundary_affected,
            "refinement_gap": s.refinement_gap,
            "inputs": s.input_names,
        });
        serde_json::to_writer_pretty(create(dir, "sobol_manifest.json", &mut files)?, &manifest)?;
    }
    let mut report = run.report.clone();
    files.push("report.json".into());
    report.files = files;
    let path: PathBuf = dir.join("report.json");
    let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub row: String,
    pub column: String,
    pub expected: f64,
    pub got: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableValidation {
    pub table: String,
    pub cells: Vec<CellCheck>,
    pub pass: bool,
    pub seconds: f64,
}

impl TableValidation {
    pub fn failures(&self) -> impl Iterator<Item = &CellCheck> {
        self.cells.iter().filter(|c| !c.pass)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["table", "row", "column", "expected", "got", "diff", "tolerance", "pass"])?;
        for c in &self.cells {
            wtr.write_record([
                self.table.clone(),
                c.row.clone(),
                c.column.clone(),
                format!("{}", c.expected),
                format!("{:.3}", c.got),
                format!("{:.3}", c.got - c.expected),
                format!("{:.3}", c.tolerance),
                c.pass.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check(row: &str, column: &str, expected: f64, got: f64, tolerance: f64) -> CellCheck {
    CellCheck {
        row: row.to_string(),
        column: column.to_string(),
        expected,
        got,
        tolerance,
        pass: (got - expected).abs() <= tolerance,
    }
}

/// Baseline cells within 2%; prevented counts within 5% or 25 persons,
/// whichever is larger.
pub fn validate_table(spec: &ModelSpec, y0: &StateVec, table: &GoldenTable, method: Method) -> Result<TableValidation> {
    if spec.variant != table.variant {
        return Err(Error::UnsupportedVariant(spec.variant.to_string()));
    }
    let clock = std::time::Instant::now();
    let mut cfg = ScenarioConfig::preset(spec.variant);
    cfg.spec = spec.clone();
    cfg.initial = y0.clone();
    cfg.method = method;
    cfg.outputs.trajectories = false;
    cfg.interventions = table
        .rows
        .iter()
        .map(|r| {
            Ok(config::ResolvedIntervention {
                label: format!("{}_{}", r.group, r.additional_persons),
                group: spec.group(r.group)?.index,
                additional_persons: r.additional_persons,
                start_year: presets::INTERVENTION_YEAR,
            })
        })
        .collect::<Result<_>>()?;
    let run = run_scenarios(&cfg)?;
    let mut cells = Vec::new();
    let base = golden::to_columns(spec.variant, &run.report.baseline.incidence);
    for (c, name) in golden::COLUMNS.iter().enumerate() {
        let e = table.baseline[c];
        cells.push(check("baseline", name, e, base[c], 0.02 * e));
    }
    let bt = table.baseline_total();
    cells.push(check("baseline", "total", bt, base.iter().sum(), 0.02 * bt));
    for (row, res) in table.rows.iter().zip(&run.report.scenarios) {
        let label = format!("{} +{}", row.group, row.additional_persons);
        let prevented = golden::to_columns(spec.variant, res.prevented.as_deref().unwrap_or_default());
        for (c, name) in golden::COLUMNS.iter().enumerate() {
            let e = row.prevented[c];
            cells.push(check(&label, name, e, prevented[c], (0.05 * e).max(25.0)));
        }
        let e = row.prevented_total();
        cells.push(check(&label, "total", e, prevented.iter().sum(), (0.05 * e).max(25.0)));
    }
    Ok(TableValidation {
        table: table.name.to_string(),
        pass: cells.iter().all(|c| c.pass),
        cells,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Both reference tables against the presets.
pub fn validate_tables() -> Result<Vec<TableValidation>> {
    [golden::basic_reference(), golden::risk_reference()]
        .iter()
        .map(|t| {
            let (spec, y0) = presets::georgia(t.variant);
            validate_table(&spec, &y0, t, Method::default())
        })
        .collect()
}

/// Baseline state at the start of the reporting window for a preset variant.
pub fn preset_origin(variant: crate::model::Variant) -> Result<(ModelSpec, StateVec)> {
    let (spec, y0) = presets::georgia(variant);
    let cfg = integrator(
        Method::default(),
        presets::START_YEAR as f64,
        presets::REPORT_FIRST_YEAR as f64,
    );
    let traj = crate::integrate::integrate(&spec, &y0, &cfg)?;
    let mut y = traj.last_state();
    y.c = vec![0.0; y.c.len()];
    Ok((spec, y))
}

