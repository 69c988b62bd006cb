//! CSV bundles for figure reproduction.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioRun;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::sobol::SobolReport;
use crate::spillover::{NntResult, SensitivityTrajectory};

/// NNT values above this are left blank, like undefined ones.
pub const NNT_DISPLAY_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    /// Infected and prevalence per group over time.
    Prevalence,
    /// Per-person averted infections from the spillover system.
    Spillover,
    /// NNT against the horizon.
    Nnt,
    /// Total Sobol indices per year.
    Sobol,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Prevalence, Figure::Spillover, Figure::Nnt, Figure::Sobol];

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::Prevalence => "prevalence.csv",
            Figure::Spillover => "spillover_per_person.csv",
            Figure::Nnt => "nnt_curves.csv",
            Figure::Sobol => "sobol_total.csv",
        }
    }
}

#[derive(Default)]
pub struct PlotInputs<'a> {
    pub baseline: Option<&'a Trajectory>,
    pub spillover: Option<(&'a Trajectory, &'a SensitivityTrajectory)>,
    pub nnt: &'a [NntResult],
    pub sobol: Option<&'a SobolReport>,
}

impl<'a> PlotInputs<'a> {
    pub fn from_run(run: &'a ScenarioRun) -> Self {
        PlotInputs {
            baseline: Some(&run.baseline),
            spillover: run.spillover.as_ref().map(|(t, s)| (t, s)),
            nnt: &run.nnt,
            sobol: run.sobol.as_ref(),
        }
    }
}

fn whole_year_indices(times: &[f64]) -> Vec<usize> {
    times
        .iter()
        .enumerate()
        .filter(|(_, t)| (*t - t.round()).abs() < 1e-9)
        .map(|(i, _)| i)
        .collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn prevalence<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let labels = traj.variant.labels();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(labels.iter().map(|l| format!("infected_{l}")));
    header.extend(labels.iter().map(|l| format!("prevalence_{l}")));
    wtr.write_record(&header)?;
    for i in whole_year_indices(&traj.times) {
        let s = traj.state(i);
        let n = s.populations();
        let mut rec = vec![num(traj.times[i])];
        rec.extend(s.i.iter().map(|v| num(*v)));
        rec.extend(s.i.iter().zip(&n).map(|(i, n)| num(i / n)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn spillover<W: Write>(traj: &Trajectory, sens: &SensitivityTrajectory, w: W) -> Result<()> {
    let labels = traj.variant.labels();
    let n = labels.len();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    for &k in &sens.sources {
        for l in labels {
            header.push(format!("averted_{l}__{}", labels[k]));
        }
    }
    wtr.write_record(&header)?;
    for i in whole_year_indices(&sens.times) {
        let mut rec = vec![num(sens.times[i])];
        for &k in &sens.sources {
            let s_k = traj.states[i][2 * k];
            for j in 0..n {
                rec.push(num(-sens.gamma(i, k, j) / s_k));
            }
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Returns the blanked `(column, T, reason)` cells for the sidecar note.
fn nnt_curves<W: Write>(rows: &[NntResult], labels: &[&str], w: W) -> Result<Vec<(String, f64, &'static str)>> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut horizons: Vec<f64> = Vec::new();
    for r in rows {
        if !pairs.contains(&(r.j, r.k)) {
            pairs.push((r.j, r.k));
        }
        if !horizons.contains(&r.horizon) {
            horizons.push(r.horizon);
        }
    }
    horizons.sort_by(f64::total_cmp);
    let col = |(j, k): (usize, usize)| format!("{}__{}", labels[j], labels[k]);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["T".to_string()];
    header.extend(pairs.iter().map(|p| col(*p)));
    wtr.write_record(&header)?;
    let mut blanks = Vec::new();
    for t in &horizons {
        let mut rec = vec![num(*t)];
        for p in &pairs {
            let r = rows.iter().find(|r| (r.j, r.k) == *p && r.horizon == *t);
            let cell = match r {
                None => String::new(),
                Some(r) if !r.defined => {
                    blanks.push((col(*p), *t, "undefined (no infections averted)"));
                    String::new()
                }
                Some(r) if r.nnt_simple > NNT_DISPLAY_CAP => {
                    blanks.push((col(*p), *t, "above display cap"));
                    String::new()
                }
                Some(r) => num(r.nnt_simple),
            };
            rec.push(cell);
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(blanks)
}

fn sobol_total<W: Write>(rep: &SobolReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["year".to_string(), "output_group".to_string()];
    header.extend(rep.input_names.iter().cloned());
    wtr.write_record(&header)?;
    for r in &rep.records {
        let mut rec = vec![r.year.to_string(), r.output_group.clone()];
        rec.extend(r.indices.total.iter().map(|v| if v.is_finite() { num(*v) } else { String::new() }));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn open(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    let path = dir.join(name);
    let f = std::fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes one CSV per requested figure and returns the file names.
pub fn emit_plot_data(inputs: &PlotInputs<'_>, figures: &[Figure], dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for fig in figures {
        let name = fig.file_name();
        match fig {
            Figure::Prevalence => {
                let t = inputs.baseline.ok_or_else(|| Error::MissingSeries("baseline trajectory".into()))?;
                prevalence(t, open(dir, name)?)?;
            }
            Figure::Spillover => {
                let (t, s) = inputs
                    .spillover
                    .ok_or_else(|| Error::MissingSeries("spillover sensitivities".into()))?;
                spillover(t, s, open(dir, name)?)?;
            }
            Figure::Nnt => {
                if inputs.nnt.is_empty() {
                    return Err(Error::MissingSeries("nnt".into()));
                }
                let labels = inputs
                    .spillover
                    .map(|(t, _)| t.variant.labels())
                    .or(inputs.baseline.map(|t| t.variant.labels()))
                    .ok_or_else(|| Error::MissingSeries("model labels for nnt".into()))?;
                let blanks = nnt_curves(inputs.nnt, labels, open(dir, name)?)?;
                let mut note = open(dir, "nnt_curves.notes.txt")?;
                writeln!(
                    note,
                    "Blank cells in nnt_curves.csv are NNTs that are undefined (no infections averted) \
                     or larger than {NNT_DISPLAY_CAP:e} person-years."
                )?;
                for (c, t, why) in blanks {
                    writeln!(note, "{c} T={t}: {why}")?;
                }
                note.flush()?;
                files.push(name.to_string());
                files.push("nnt_curves.notes.txt".into());
                continue;
            }
            Figure::Sobol => {
                let s = inputs.sobol.ok_or_else(|| Error::MissingSeries("sobol indices".into()))?;
                sobol_total(s, open(dir, name)?)?;
            }
        }
        files.push(name.to_string());
    }
    Ok(files)
}
