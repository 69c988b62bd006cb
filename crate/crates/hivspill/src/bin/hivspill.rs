use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hivspill::ngm::{build_ngm, rc_closed, rc_numeric};
use hivspill::scenario::config::SobolOutput;
use hivspill::scenario::plots::{emit_plot_data, Figure, PlotInputs};
use hivspill::scenario::{self, load_config, run_scenarios, write_nnt_csv, write_run, ScenarioConfig, ScenarioRun};
use hivspill::sobol::Rule;
use hivspill::spillover::SpilloverForm;
use hivspill::{Error, Result, Variant};

#[derive(Parser)]
#[command(name = "hivspill", version, about = "HIV PrEP scenario, spillover and sensitivity tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario configuration (JSON). Without it the Georgia preset is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Model variant when no configuration file is given.
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
    /// Print machine-readable JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Basic,
    Risk,
}

impl From<ModelArg> for Variant {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Basic => Variant::Basic,
            ModelArg::Risk => Variant::Risk,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Structural,
    XiCorrected,
    Exact,
}

impl From<FormArg> for SpilloverForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Structural => SpilloverForm::Structural,
            FormArg::XiCorrected => SpilloverForm::XiCorrected,
            FormArg::Exact => SpilloverForm::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    GaussLegendre,
    Smolyak,
}

#[derive(Subcommand)]
enum Command {
    /// Run the baseline and every configured intervention.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Integrate the spillover sensitivities from the start of the reporting window.
    Spillover {
        #[command(flatten)]
        common: Common,
        /// Source groups (default: all).
        #[arg(long, value_delimiter = ',')]
        sources: Vec<String>,
        #[arg(long, value_enum, default_value = "structural")]
        form: FormArg,
    },
    /// Number needed to treat for target/source pairs.
    Nnt {
        #[command(flatten)]
        common: Common,
        /// Pairs as `target:source` (default: all pairs).
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
        /// Horizon in whole years.
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value = "structural")]
        form: FormArg,
    },
    /// Next-generation matrices and reproduction numbers.
    Ngm {
        #[command(flatten)]
        common: Common,
        /// Fix the mixing fractions at their closure for the initial
        /// populations instead of closing them at the disease-free equilibrium.
        #[arg(long)]
        pin_mixing: bool,
    },
    /// Sobol indices of annual incidence with respect to PrEP scaling.
    Sobol {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        level: usize,
        #[arg(long, default_value_t = 4)]
        degree: usize,
        #[arg(long, value_enum, default_value = "gauss-legendre")]
        rule: RuleArg,
        /// Refinement level for the stability check; 0 disables it.
        #[arg(long, default_value_t = 6)]
        refine: usize,
    },
    /// Compare the presets against the reference incidence tables.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Write CSV data for the figure analogues.
    EmitPlots {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Figure::Prevalence, Figure::Spillover, Figure::Nnt])]
        figures: Vec<Figure>,
    },
}

fn base_config(c: &Common) -> Result<ScenarioConfig> {
    match &c.config {
        Some(path) => {
            let cfg = load_config(path)?;
            if let Some(m) = c.model {
                if Variant::from(m) != cfg.spec.variant {
                    return Err(Error::Config(format!(
                        "--model {} conflicts with the configuration's model {}",
                        Variant::from(m),
                        cfg.spec.variant
                    )));
                }
            }
            Ok(cfg)
        }
        None => Ok(ScenarioConfig::preset(c.model.map(Variant::from).unwrap_or(Variant::Basic))),
    }
}

/// Configuration for analyses that do not need the intervention runs.
fn analysis_config(c: &Common) -> Result<ScenarioConfig> {
    let mut cfg = base_config(c)?;
    cfg.interventions.clear();
    cfg.outputs.trajectories = false;
    cfg.outputs.spillover_sources.clear();
    cfg.outputs.nnt_pairs.clear();
    cfg.outputs.sobol = None;
    Ok(cfg)
}

fn all_labels(cfg: &ScenarioConfig) -> Vec<String> {
    cfg.spec.variant.labels().iter().map(|s| s.to_string()).collect()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn print_simulation(run: &ScenarioRun) {
    let r = &run.report;
    println!("{} model, {}..={}, config {}", r.model, r.report_first_year, r.report_last_year, &r.config_hash[..12]);
    print!("{:<22}", "scenario");
    for g in &r.groups {
        print!("{g:>12}");
    }
    println!("{:>12}{:>12}", "total", "prevented");
    for s in std::iter::once(&r.baseline).chain(&r.scenarios) {
        print!("{:<22}", s.label);
        for v in &s.incidence {
            print!("{:>12.0}", v);
        }
        let prevented = s.prevented_total.map(|v| format!("{v:.0}")).unwrap_or_default();
        println!("{:>12.0}{:>12}", s.total, prevented);
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = base_config(&common)?;
            let run = run_scenarios(&cfg)?;
            let report = write_run(&run, &common.out)?;
            if common.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_simulation(&run);
            }
        }
        Command::Spillover { common, sources, form } => {
            let mut cfg = analysis_config(&common)?;
            cfg.outputs.spillover_sources = if sources.is_empty() { all_labels(&cfg) } else { sources };
            cfg.outputs.spillover_form = form.into();
            let run = run_scenarios(&cfg)?;
            let (traj, sens) = run.spillover.as_ref().expect("spillover requested");
            std::fs::create_dir_all(&common.out)?;
            sens.write_csv(std::fs::File::create(common.out.join("spillover.csv"))?)?;
            let idx = traj.times.len() - 1;
            let labels = cfg.spec.variant.labels();
            let mut rows = Vec::new();
            for &k in &sens.sources {
                for (j, lj) in labels.iter().enumerate() {
                    let s_k = traj.states[idx][2 * k];
                    rows.push(json!({
                        "source": labels[k],
                        "target": lj,
                        "t": traj.times[idx],
                        "sigma": sens.sigma(idx, k, j),
                        "gamma": sens.gamma(idx, k, j),
                        "averted_per_person": -sens.gamma(idx, k, j) / s_k,
                    }));
                }
            }
            if common.json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!("{:<8}{:<8}{:>16}{:>16}{:>20}", "source", "target", "sigma", "gamma", "averted/person");
                for r in &rows {
                    println!(
                        "{:<8}{:<8}{:>16.4}{:>16.4}{:>20.6e}",
                        r["source"].as_str().unwrap_or_default(),
                        r["target"].as_str().unwrap_or_default(),
                        r["sigma"].as_f64().unwrap_or(f64::NAN),
                        r["gamma"].as_f64().unwrap_or(f64::NAN),
                        r["averted_per_person"].as_f64().unwrap_or(f64::NAN)
                    );
                }
            }
        }
        Command::Nnt { common, pairs, horizon, form } => {
            let mut cfg = analysis_config(&common)?;
            let labels = all_labels(&cfg);
            cfg.outputs.nnt_pairs = if pairs.is_empty() {
                labels
                    .iter()
                    .flat_map(|k| labels.iter().map(move |j| (j.clone(), k.clone())))
                    .collect()
            } else {
                pairs
                    .iter()
                    .map(|p| {
                        p.split_once(':')
                            .map(|(j, k)| (j.to_string(), k.to_string()))
                            .ok_or_else(|| Error::InvalidArgument(format!("pair `{p}` is not target:source")))
                    })
                    .collect::<Result<_>>()?
            };
            cfg.outputs.nnt_horizon = horizon;
            cfg.outputs.spillover_form = form.into();
            let run = run_scenarios(&cfg)?;
            std::fs::create_dir_all(&common.out)?;
            let l = cfg.spec.variant.labels();
            write_nnt_csv(&run.nnt, l, std::fs::File::create(common.out.join("nnt.csv"))?)?;
            let last: Vec<_> = run.nnt.iter().filter(|r| r.horizon == horizon).collect();
            if common.json {
                println!("{}", serde_json::to_string_pretty(&last)?);
            } else {
                println!("{:<8}{:<8}{:>6}{:>16}{:>16}", "target", "source", "T", "nnt_simple", "nnt_integral");
                for r in last {
                    let f = |v: f64| if r.defined { format!("{v:.1}") } else { "undefined".into() };
                    println!("{:<8}{:<8}{:>6}{:>16}{:>16}", l[r.j], l[r.k], r.horizon, f(r.nnt_simple), f(r.nnt_integral));
                }
            }
        }
        Command::Ngm { common, pin_mixing } => {
            let mut cfg = analysis_config(&common)?;
            if pin_mixing {
                cfg.spec = cfg.spec.pinned_at(&cfg.initial.populations())?;
            }
            let ngm = build_ngm(&cfg.spec).map_err(|e| match e {
                Error::InfeasibleClosure { .. } if !pin_mixing => {
                    e.context("mixing closure at the disease-free equilibrium (try --pin-mixing)")
                }
                e => e,
            })?;
            let numeric = rc_numeric(&ngm);
            let closed = rc_closed(&ngm)?;
            let out = json!({
                "model": cfg.spec.variant,
                "groups": cfg.spec.variant.labels(),
                "F": ngm.f,
                "V": ngm.v,
                "rc_numeric": numeric.value,
                "rc_closed_form": closed,
                "mixing": cfg.spec.mixing,
            });
            write_json(&common.out.join("ngm.json"), &out)?;
            if common.json {
                println!("{}", serde_json::to_string_pretty(&out)?);
            } else {
                let labels = cfg.spec.variant.labels();
                println!("F (rows: newly infected group, columns: infecting group)");
                print!("{:<8}", "");
                for l in labels {
                    print!("{l:>14}");
                }
                println!();
                for (l, row) in labels.iter().zip(&ngm.f) {
                    print!("{l:<8}");
                    for v in row {
                        print!("{v:>14.6e}");
                    }
                    println!();
                }
                println!("V diagonal: {:?}", ngm.v);
                println!("R_c numeric:     {:.12}", numeric.value);
                println!("R_c closed form: {:.12} ({:?})", closed.value, closed.method);
                if let Some(d) = &closed.diagnostic {
                    println!("  note: {d}");
                }
                for (k, v) in &closed.components {
                    println!("  {k:<14}{v:>22.12e}");
                }
            }
        }
        Command::Sobol { common, level, degree, rule, refine } => {
            let mut cfg = analysis_config(&common)?;
            let mut s = SobolOutput {
                rule: match rule {
                    RuleArg::GaussLegendre => Rule::GaussLegendreTensor,
                    RuleArg::Smolyak => Rule::ClenshawCurtisSmolyak,
                },
                level,
                total_degree: degree,
                refine_level: (refine > 0).then_some(refine),
                theta_lo: -0.5,
                theta_hi: 4.0,
                null_input: true,
            };
            if let Some(file) = base_config(&common)?.outputs.sobol {
                s.theta_lo = file.theta_lo;
                s.theta_hi = file.theta_hi;
                s.null_input = file.null_input;
            }
            cfg.outputs.sobol = Some(s);
            let run = run_scenarios(&cfg)?;
            let report = write_run(&run, &common.out)?;
            let sob = run.sobol.as_ref().expect("sobol requested");
            if common.json {
                println!("{}", serde_json::to_string_pretty(sob)?);
            } else {
                println!(
                    "{} nodes, {} clamped, refinement gap {}",
                    sob.nodes,
                    sob.clamped_nodes,
                    sob.refinement_gap.map(|g| format!("{g:.4}")).unwrap_or("n/a".into())
                );
                print!("{:<6}{:<8}", "year", "output");
                for n in &sob.input_names {
                    print!("{n:>14}");
                }
                println!();
                for r in &sob.records {
                    print!("{:<6}{:<8}", r.year, r.output_group);
                    for v in &r.indices.total {
                        print!("{v:>14.4}");
                    }
                    println!();
                }
                println!("files: {}", report.files.join(", "));
            }
        }
        Command::Validate { common } => {
            let tables = match (&common.config, common.model) {
                (None, None) => scenario::validate_tables()?,
                _ => {
                    let cfg = base_config(&common)?;
                    let golden = scenario::golden::for_variant(cfg.spec.variant);
                    vec![scenario::validate_table(&cfg.spec, &cfg.initial, &golden, cfg.method)?]
                }
            };
            std::fs::create_dir_all(&common.out)?;
            for t in &tables {
                t.write_csv(std::fs::File::create(common.out.join(format!("validate_{}.csv", t.table)))?)?;
            }
            if common.json {
                println!("{}", serde_json::to_string_pretty(&tables)?);
            } else {
                for t in &tables {
                    println!(
                        "{}: {} ({} cells, {} failing, {:.2} s)",
                        t.table,
                        if t.pass { "PASS" } else { "FAIL" },
                        t.cells.len(),
                        t.failures().count(),
                        t.seconds
                    );
                    for c in t.failures() {
                        println!(
                            "  {:<16}{:<8} expected {:>9.0} got {:>11.1} (tolerance {:.1})",
                            c.row, c.column, c.expected, c.got, c.tolerance
                        );
                    }
                }
            }
            return Ok(tables.iter().all(|t| t.pass));
        }
        Command::EmitPlots { common, figures } => {
            let mut cfg = analysis_config(&common)?;
            let labels = all_labels(&cfg);
            if figures.contains(&Figure::Spillover) || figures.contains(&Figure::Nnt) {
                cfg.outputs.spillover_sources = labels.clone();
            }
            if figures.contains(&Figure::Nnt) {
                cfg.outputs.nnt_pairs = labels
                    .iter()
                    .flat_map(|k| labels.iter().map(move |j| (j.clone(), k.clone())))
                    .collect();
            }
            if figures.contains(&Figure::Sobol) {
                cfg.outputs.sobol = Some(base_config(&common)?.outputs.sobol.unwrap_or(SobolOutput {
                    rule: Rule::GaussLegendreTensor,
                    level: 5,
                    total_degree: 4,
                    refine_level: Some(6),
                    theta_lo: -0.5,
                    theta_hi: 4.0,
                    null_input: true,
                }));
            }
            let run = run_scenarios(&cfg)?;
            let files = emit_plot_data(&PlotInputs::from_run(&run), &figures, &common.out)?;
            if common.json {
                println!("{}", json!({ "files": files }));
            } else {
                for f in files {
                    println!("{}", common.out.join(f).display());
                }
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
