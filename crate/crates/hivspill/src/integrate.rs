//! Fixed-step RK4 and adaptive Dormand-Prince 5(4) integration.
//!
//! Both methods land exactly on every whole calendar year inside the span so
//! that annual incidence is a plain difference of accumulators.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ModelSystem, StateVec, Variant};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    /// Leading components that must stay nonnegative.
    fn nonneg_dim(&self) -> usize {
        0
    }
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Rk4Fixed {
        dt: f64,
    },
    Rk45Adaptive {
        rtol: f64,
        atol: f64,
        dt_min: f64,
        dt_max: f64,
    },
}

impl Default for Method {
    fn default() -> Self {
        Method::Rk45Adaptive {
            rtol: 1e-8,
            atol: 1e-6,
            dt_min: 1e-10,
            dt_max: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t0: f64,
    pub t_end: f64,
}

impl IntegratorConfig {
    pub fn adaptive(t0: f64, t_end: f64) -> Self {
        IntegratorConfig {
            method: Method::default(),
            t0,
            t_end,
        }
    }

    pub fn rk4(dt: f64, t0: f64, t_end: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4Fixed { dt },
            t0,
            t_end,
        }
    }

    pub fn with_span(&self, t0: f64, t_end: f64) -> Self {
        IntegratorConfig { t0, t_end, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t0) {
            return Err(Error::InvalidArgument(format!(
                "t_end ({}) must exceed t0 ({})",
                self.t_end, self.t0
            )));
        }
        match self.method {
            Method::Rk4Fixed { dt } if !(dt > 0.0) => {
                Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")))
            }
            Method::Rk45Adaptive {
                rtol,
                atol,
                dt_min,
                dt_max,
            } if !(rtol > 0.0 && atol > 0.0 && dt_min > 0.0 && dt_max >= dt_min) => {
                Err(Error::InvalidArgument("rtol, atol, dt_min must be > 0 and dt_max >= dt_min".into()))
            }
            _ => Ok(()),
        }
    }

    fn neg_tol(&self) -> f64 {
        match self.method {
            Method::Rk4Fixed { .. } => 1e-6,
            Method::Rk45Adaptive { atol, .. } => atol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampEvent {
    pub t: f64,
    pub index: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub clamp_events: Vec<ClampEvent>,
}

fn breakpoints(t0: f64, t_end: f64) -> Vec<f64> {
    let mut b = Vec::new();
    let mut y = t0.floor() + 1.0;
    while y < t_end - 1e-9 {
        if y > t0 + 1e-9 {
            b.push(y);
        }
        y += 1.0;
    }
    b.push(t_end);
    b
}

fn check_negative(
    y: &mut [f64],
    nonneg: usize,
    tol: f64,
    t: f64,
    events: &mut Vec<ClampEvent>,
) -> Result<bool> {
    let mut clamped = false;
    for (index, v) in y.iter_mut().take(nonneg).enumerate() {
        if *v < 0.0 {
            if *v < -tol {
                return Err(Error::NegativeState {
                    index,
                    value: *v,
                    t,
                });
            }
            warn!("clamping component {index} = {v:e} to 0 at t = {t}");
            events.push(ClampEvent { t, index, value: *v });
            *v = 0.0;
            clamped = true;
        }
    }
    Ok(clamped)
}

pub fn solve<S: OdeSystem>(sys: &mut S, y0: &[f64], cfg: &IntegratorConfig) -> Result<Solution> {
    cfg.validate()?;
    let dim = sys.dim();
    if y0.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} components, system needs {dim}",
            y0.len()
        )));
    }
    let mut sol = Solution {
        times: vec![cfg.t0],
        states: vec![y0.to_vec()],
        clamp_events: Vec::new(),
    };
    let mut y = y0.to_vec();
    let mut t = cfg.t0;
    let nonneg = sys.nonneg_dim();
    let neg_tol = cfg.neg_tol();
    match cfg.method {
        Method::Rk4Fixed { dt } => {
            let mut ws = Rk4Work::new(dim);
            for b in breakpoints(cfg.t0, cfg.t_end) {
                let steps = ((b - t) / dt - 1e-9).ceil().max(1.0) as usize;
                let h = (b - t) / steps as f64;
                for s in 0..steps {
                    rk4_step(sys, t, &mut y, h, &mut ws)?;
                    t = if s + 1 == steps { b } else { t + h };
                    check_negative(&mut y, nonneg, neg_tol, t, &mut sol.clamp_events)?;
                    sol.times.push(t);
                    sol.states.push(y.clone());
                }
            }
        }
        Method::Rk45Adaptive {
            rtol,
            atol,
            dt_min,
            dt_max,
        } => {
            let mut dp = DoPri::new(dim);
            let mut h = dt_max.min(0.01 * (cfg.t_end - cfg.t0)).max(dt_min);
            sys.rhs(t, &y, &mut dp.k[0])?;
            for b in breakpoints(cfg.t0, cfg.t_end) {
                while t < b {
                    let last = h >= b - t - 1e-12 * b.abs().max(1.0);
                    let hs = if last { b - t } else { h };
                    let err = dp.attempt(sys, t, &y, hs, rtol, atol)?;
                    if err <= 1.0 {
                        t = if last { b } else { t + hs };
                        std::mem::swap(&mut y, &mut dp.y_new);
                        if check_negative(&mut y, nonneg, neg_tol, t, &mut sol.clamp_events)? {
                            sys.rhs(t, &y, &mut dp.k[0])?;
                        } else {
                            dp.k.swap(0, 6);
                        }
                        sol.times.push(t);
                        sol.states.push(y.clone());
                        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                        let proposed = (hs * fac).min(dt_max);
                        h = if last && hs < h { h.max(proposed) } else { proposed };
                    } else {
                        h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                        if h < dt_min {
                            return Err(Error::StepSizeUnderflow { t, h });
                        }
                    }
                }
            }
        }
    }
    Ok(sol)
}

struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(dim: usize) -> Self {
        Rk4Work {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn rk4_step<S: OdeSystem>(sys: &mut S, t: f64, y: &mut [f64], h: f64, w: &mut Rk4Work) -> Result<()> {
    sys.rhs(t, y, &mut w.k1)?;
    for i in 0..y.len() {
        w.tmp[i] = y[i] + 0.5 * h * w.k1[i];
    }
    sys.rhs(t + 0.5 * h, &w.tmp, &mut w.k2)?;
    for i in 0..y.len() {
        w.tmp[i] = y[i] + 0.5 * h * w.k2[i];
    }
    sys.rhs(t + 0.5 * h, &w.tmp, &mut w.k3)?;
    for i in 0..y.len() {
        w.tmp[i] = y[i] + h * w.k3[i];
    }
    sys.rhs(t + h, &w.tmp, &mut w.k4)?;
    for i in 0..y.len() {
        y[i] += h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
    Ok(())
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DoPri {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl DoPri {
    fn new(dim: usize) -> Self {
        DoPri {
            k: vec![vec![0.0; dim]; 7],
            tmp: vec![0.0; dim],
            y_new: vec![0.0; dim],
        }
    }

    /// One trial step; `k[0]` must hold f(t, y). Returns the scaled error norm.
    fn attempt<S: OdeSystem>(
        &mut self,
        sys: &mut S,
        t: f64,
        y: &[f64],
        h: f64,
        rtol: f64,
        atol: f64,
    ) -> Result<f64> {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (r, a) in A[s].iter().enumerate().take(s) {
                    acc += a * self.k[r][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            sys.rhs(t + C[s] * h, &self.tmp, &mut self.k[s])?;
            if s == 6 {
                self.y_new.copy_from_slice(&self.tmp);
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, es) in E.iter().enumerate() {
                e += es * self.k[s][i];
            }
            let sc = atol + rtol * y[i].abs().max(self.y_new[i].abs());
            err = err.max((h * e).abs() / sc);
        }
        if !err.is_finite() {
            err = 1e10;
        }
        Ok(err)
    }
}

/// Integrated model trajectory on the solver's accepted steps.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub variant: Variant,
    pub times: Vec<f64>,
    /// Flat states, see the model module for the layout.
    pub states: Vec<Vec<f64>>,
    pub clamp_events: Vec<ClampEvent>,
}

impl Trajectory {
    pub fn n_groups(&self) -> usize {
        self.variant.n_groups()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn state(&self, idx: usize) -> StateVec {
        StateVec::from_flat(&self.states[idx], self.n_groups())
    }

    pub fn last_state(&self) -> StateVec {
        self.state(self.times.len() - 1)
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let pos = self.times.partition_point(|x| *x < t - tol);
        (pos < self.times.len() && (self.times[pos] - t).abs() <= tol).then_some(pos)
    }

    /// State at `t`: exact at grid points, linear in between.
    pub fn state_at(&self, t: f64) -> Option<StateVec> {
        if let Some(i) = self.index_of(t) {
            return Some(self.state(i));
        }
        if t < self.t0() || t > self.t_end() {
            return None;
        }
        let i = self.times.partition_point(|x| *x < t);
        let (ta, tb) = (self.times[i - 1], self.times[i]);
        let w = (t - ta) / (tb - ta);
        let y: Vec<f64> = self.states[i - 1]
            .iter()
            .zip(&self.states[i])
            .map(|(a, b)| a + w * (b - a))
            .collect();
        Some(StateVec::from_flat(&y, self.n_groups()))
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn append(&mut self, other: Trajectory) {
        let skip = usize::from(!self.times.is_empty());
        self.times.extend(other.times.into_iter().skip(skip));
        self.states.extend(other.states.into_iter().skip(skip));
        self.clamp_events.extend(other.clamp_events);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let labels = self.variant.labels();
        let mut header = vec!["t".to_string()];
        for l in labels {
            header.push(format!("S_{l}"));
            header.push(format!("I_{l}"));
        }
        for l in labels {
            header.push(format!("C_{l}"));
        }
        wtr.write_record(&header)?;
        for (t, y) in self.times.iter().zip(&self.states) {
            let mut rec = vec![fmt_num(*t)];
            rec.extend(y.iter().map(|v| fmt_num(*v)));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn integrate(spec: &ModelSpec, y0: &StateVec, cfg: &IntegratorConfig) -> Result<Trajectory> {
    spec.validate()?;
    if y0.n_groups() != spec.n_groups() {
        return Err(Error::InvalidArgument("initial state does not match model".into()));
    }
    let flat = y0.to_flat();
    if let Some((index, value)) = flat.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeState {
            index,
            value: *value,
            t: cfg.t0,
        });
    }
    let mut sys = ModelSystem::new(spec);
    let sol = solve(&mut sys, &flat, cfg)?;
    Ok(Trajectory {
        variant: spec.variant,
        times: sol.times,
        states: sol.states,
        clamp_events: sol.clamp_events,
    })
}

/// Incidence per calendar year and group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnualIncidence {
    pub groups: Vec<String>,
    pub years: Vec<i32>,
    /// `values[y][j]`: incidence of group `j` during `years[y]`.
    pub values: Vec<Vec<f64>>,
}

impl AnnualIncidence {
    /// Per-group sums over `first..=last` calendar years.
    pub fn window_sum(&self, first: i32, last: i32) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.groups.len()];
        for year in first..=last {
            let idx = self
                .years
                .iter()
                .position(|y| *y == year)
                .ok_or_else(|| Error::MissingSeries(format!("incidence for {year}")))?;
            for (o, v) in out.iter_mut().zip(&self.values[idx]) {
                *o += v;
            }
        }
        Ok(out)
    }
}

fn is_whole(t: f64) -> bool {
    (t - t.round()).abs() <= 1e-9 * t.abs().max(1.0)
}

pub fn annual_series(traj: &Trajectory) -> Result<AnnualIncidence> {
    let (t0, t_end) = (traj.t0(), traj.t_end());
    if !is_whole(t0) || !is_whole(t_end) {
        return Err(Error::PartialYear { t0, t_end });
    }
    let n = traj.n_groups();
    let (y0, y1) = (t0.round() as i32, t_end.round() as i32);
    let mut years = Vec::new();
    let mut values = Vec::new();
    let cum = |t: f64| -> Result<Vec<f64>> {
        let i = traj
            .index_of(t)
            .ok_or_else(|| Error::MissingSeries(format!("state at t = {t}")))?;
        Ok(traj.states[i][2 * n..3 * n].to_vec())
    };
    let mut prev = cum(t0)?;
    for year in y0..y1 {
        let next = cum(year as f64 + 1.0)?;
        values.push(next.iter().zip(&prev).map(|(a, b)| a - b).collect());
        years.push(year);
        prev = next;
    }
    Ok(AnnualIncidence {
        groups: traj.variant.labels().iter().map(|s| s.to_string()).collect(),
        years,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dfe, GroupParams};
    use crate::scenario::presets;
    use approx::assert_relative_eq;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -0.3 * y[0];
            Ok(())
        }
    }

    #[test]
    fn exponential_decay_both_methods() {
        for cfg in [IntegratorConfig::adaptive(0.0, 10.0), IntegratorConfig::rk4(0.01, 0.0, 10.0)] {
            let sol = solve(&mut Decay, &[2.0], &cfg).unwrap();
            assert_relative_eq!(*sol.states.last().unwrap().first().unwrap(), 2.0 * (-3.0f64).exp(), max_relative = 1e-8);
            assert_eq!(*sol.times.last().unwrap(), 10.0);
        }
    }

    #[test]
    fn perfect_prep_gives_linear_decay() {
        let (mut spec, y0) = presets::georgia_basic();
        for g in spec.groups.iter_mut() {
            *g = GroupParams {
                pi: 0.0,
                delta: 0.0,
                epsilon: 1.0,
                ..*g
            };
        }
        let traj = integrate(&spec, &y0, &IntegratorConfig::adaptive(0.0, 10.0)).unwrap();
        let last = traj.last_state();
        for j in 0..3 {
            assert_relative_eq!(last.i[j], y0.i[j] * (-0.2f64).exp(), max_relative = 1e-8);
        }
    }

    #[test]
    fn whole_years_are_grid_points() {
        let (spec, y0) = presets::georgia_basic();
        let traj = integrate(&spec, &y0, &IntegratorConfig::adaptive(2017.0, 2021.0)).unwrap();
        for y in 2017..=2021 {
            assert!(traj.index_of(y as f64).is_some());
        }
        let ann = annual_series(&traj).unwrap();
        assert_eq!(ann.years, vec![2017, 2018, 2019, 2020]);
        let total: f64 = ann.values.iter().map(|r| r[0]).sum();
        let n = 3;
        let delta = traj.states.last().unwrap()[2 * n] - traj.states[0][2 * n];
        assert_eq!(total, delta);
    }

    #[test]
    fn partial_year_is_rejected() {
        let (spec, y0) = presets::georgia_basic();
        let traj = integrate(&spec, &y0, &IntegratorConfig::adaptive(2017.0, 2018.5)).unwrap();
        assert!(matches!(annual_series(&traj), Err(Error::PartialYear { .. })));
    }

    #[test]
    fn zero_infection_trajectory_has_zero_incidence() {
        let (spec, _) = presets::georgia_basic();
        let traj = integrate(&spec, &dfe(&spec), &IntegratorConfig::adaptive(0.0, 3.0)).unwrap();
        let ann = annual_series(&traj).unwrap();
        assert!(ann.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn negative_initial_state_is_rejected() {
        let (spec, mut y0) = presets::georgia_basic();
        y0.i[0] = -1.0;
        assert!(matches!(
            integrate(&spec, &y0, &IntegratorConfig::adaptive(0.0, 1.0)),
            Err(Error::NegativeState { .. })
        ));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (spec, y0) = presets::georgia_basic();
        let traj = integrate(&spec, &y0, &IntegratorConfig::rk4(0.5, 2017.0, 2018.0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, "t,S_msm,I_msm,S_hetf,I_hetf,S_hetm,I_hetm,C_msm,C_hetf,C_hetm");
        assert_eq!(text.lines().count(), 1 + traj.times.len());
    }
}
