//! Observed against expected curves over follow-up time: event counts, cumulative
//! hazards, net risks and cumulative incidence.
//!
//! Time is years since entry. Observed estimators use the usual tie convention: events
//! at `t` see everyone with exit time `>= t`, censorings at `t` leave afterwards.

use serde::{Deserialize, Serialize};

use crate::calib::{Cause, FollowUpRecord};
use crate::hazard::{cumulative_incidence_path, Hazard, ScaledHazard};
use crate::stats::{normal_quantile, poisson_exact_interval};

pub const CURVES_SCHEMA: &str = "bcrisk.curves/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMethod {
    Count,
    CumHazard,
    /// Net risk, expected as the baseline-cohort average.
    #[serde(rename = "net_risk_A")]
    NetRiskA,
    /// Net risk, expected from the at-risk mean hazard.
    #[serde(rename = "net_risk_B")]
    NetRiskB,
    Cif,
}

impl CurveMethod {
    pub const ALL: [CurveMethod; 5] =
        [CurveMethod::Count, CurveMethod::CumHazard, CurveMethod::NetRiskA, CurveMethod::NetRiskB, CurveMethod::Cif];

    pub fn tag(self) -> &'static str {
        match self {
            CurveMethod::Count => "count",
            CurveMethod::CumHazard => "cum_hazard",
            CurveMethod::NetRiskA => "net_risk_A",
            CurveMethod::NetRiskB => "net_risk_B",
            CurveMethod::Cif => "cif",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time: f64,
    pub observed: f64,
    pub obs_lo: f64,
    pub obs_hi: f64,
    pub expected: f64,
    /// Observed over expected; absent while nothing is expected.
    pub oe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub method: CurveMethod,
    pub cause: Cause,
    pub points: Vec<CurvePoint>,
}

/// Observed curve with pointwise limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub value: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Which value of the all-cause survivor enters the cumulative incidence jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivorLimit {
    /// `S(t-)`, just before the event time.
    #[default]
    Left,
    /// `S(t)`, after the events at `t`.
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridSpec {
    /// Every exit time with an event, whole years, and the last exit.
    EventsAndYears,
    /// Whole years up to the last exit.
    Years,
    Explicit { times: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub grid: GridSpec,
    pub limit: SurvivorLimit,
    pub level: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { grid: GridSpec::EventsAndYears, limit: SurvivorLimit::Left, level: 0.95 }
    }
}

/// Distinct exit times with the risk set size and counts of each way of leaving.
#[derive(Debug, Clone)]
pub struct EventTable {
    pub times: Vec<f64>,
    pub at_risk: Vec<f64>,
    /// `exits[c][k]`: number leaving at `times[k]` with cause code `c`.
    pub exits: [Vec<f64>; 3],
}

impl EventTable {
    pub fn new(records: &[FollowUpRecord]) -> Self {
        let mut exits: Vec<(f64, usize)> = records.iter().map(|r| (r.follow_up(), r.cause.code() as usize)).collect();
        exits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = exits.len() as f64;
        let mut table = EventTable { times: Vec::new(), at_risk: Vec::new(), exits: [Vec::new(), Vec::new(), Vec::new()] };
        let mut gone = 0.0;
        let mut i = 0;
        while i < exits.len() {
            let t = exits[i].0;
            let mut counts = [0.0; 3];
            while i < exits.len() && exits[i].0 == t {
                counts[exits[i].1] += 1.0;
                i += 1;
            }
            table.times.push(t);
            table.at_risk.push(n - gone);
            for c in 0..3 {
                table.exits[c].push(counts[c]);
            }
            gone += counts.iter().sum::<f64>();
        }
        table
    }

    fn events(&self, cause: Cause) -> &[f64] {
        &self.exits[cause.code() as usize]
    }

    fn all_events(&self, k: usize) -> f64 {
        self.exits[1][k] + self.exits[2][k]
    }

    /// Number of distinct times at or before `t`.
    fn upto(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }
}

/// Evaluation times for curves, starting at 0.
pub fn curve_grid(records: &[FollowUpRecord], spec: &GridSpec) -> Vec<f64> {
    let last = records.iter().map(|r| r.follow_up()).fold(0.0, f64::max);
    let mut grid = vec![0.0];
    match spec {
        GridSpec::Explicit { times } => grid.extend(times.iter().copied().filter(|t| *t >= 0.0)),
        GridSpec::Years | GridSpec::EventsAndYears => {
            let mut y = 1.0;
            while y <= last {
                grid.push(y);
                y += 1.0;
            }
            grid.push(last);
            if matches!(spec, GridSpec::EventsAndYears) {
                grid.extend(records.iter().filter(|r| r.cause != Cause::Censored).map(|r| r.follow_up()));
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Cumulative number of `cause` events by each grid time, with exact Poisson limits.
pub fn observed_count_curve(records: &[FollowUpRecord], cause: Cause, grid: &[f64], level: f64) -> Band {
    let table = EventTable::new(records);
    let d = table.events(cause);
    let mut cum = Vec::with_capacity(table.times.len() + 1);
    cum.push(0.0);
    for &x in d {
        cum.push(cum.last().unwrap() + x);
    }
    let value: Vec<f64> = grid.iter().map(|&t| cum[table.upto(t)]).collect();
    let (lo, hi) = value.iter().map(|&v| poisson_exact_interval(v as u64, level)).unzip();
    Band { value, lo, hi }
}

/// Piecewise-constant total of at-risk hazard rates `Σ_i Y_i(u) h_i(u)` and the risk set
/// size `Y(u)`, as breakpoints on the follow-up scale.
struct RateSweep {
    /// (time, change in total rate, change in risk set size)
    changes: Vec<(f64, f64, f64)>,
}

/// Running sum with Neumaier compensation, so that long add/remove sequences return
/// to zero without drift.
#[derive(Default)]
struct RunningSum {
    sum: f64,
    carry: f64,
}

impl RunningSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl RateSweep {
    fn new(records: &[FollowUpRecord], cause: Cause) -> Self {
        let mut changes = Vec::new();
        for r in records {
            let h: &ScaledHazard = r.hazard(cause);
            let fu = r.follow_up();
            changes.push((0.0, 0.0, 1.0));
            changes.push((fu, 0.0, -1.0));
            let knots = h.knots();
            let rates = h.base.rates();
            for (s, rate) in rates.iter().enumerate() {
                let lo = (knots[s] - r.entry_age).max(0.0);
                let hi = (knots[s + 1] - r.entry_age).min(fu);
                if hi > lo && *rate > 0.0 {
                    let v = rate * h.multiplier;
                    changes.push((lo, v, 0.0));
                    changes.push((hi, -v, 0.0));
                }
            }
        }
        changes.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { changes }
    }

    /// `∫_0^t S(u) du` (or `∫ S/Y` when `per_capita`) at each grid time.
    fn integrate(&self, grid: &[f64], per_capita: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        let (mut y, mut acc, mut now) = (0.0_f64, 0.0_f64, 0.0_f64);
        let mut rate = RunningSum::default();
        // Open rate segments; the rate is exactly zero when none are open.
        let mut open = 0i64;
        let mut i = 0;
        let advance = |to: f64, rate: f64, y: f64, acc: &mut f64, now: &mut f64| {
            if to > *now {
                let r = if per_capita { if y > 0.0 { rate / y } else { 0.0 } } else { rate };
                *acc += r.max(0.0) * (to - *now);
                *now = to;
            }
        };
        for &t in grid {
            while i < self.changes.len() && self.changes[i].0 <= t {
                let (at, dr, dy) = self.changes[i];
                advance(at, rate.value(), y, &mut acc, &mut now);
                if dr != 0.0 {
                    rate.add(dr);
                    open += if dr > 0.0 { 1 } else { -1 };
                    if open == 0 {
                        rate = RunningSum::default();
                    }
                }
                y += dy;
                i += 1;
            }
            advance(t, rate.value(), y, &mut acc, &mut now);
            out.push(acc);
        }
        out
    }
}

/// `Σ_i H_i(min(T_i, t))`: predicted events by time `t` over each subject's follow-up.
pub fn expected_count_curve(records: &[FollowUpRecord], cause: Cause, grid: &[f64]) -> Vec<f64> {
    RateSweep::new(records, cause).integrate(grid, false)
}

/// `Σ_i ∫_0^t Y_i(u) h_i(u) / Y(u) du`: the mean predicted hazard among those at risk.
pub fn expected_cum_hazard(records: &[FollowUpRecord], cause: Cause, grid: &[f64]) -> Vec<f64> {
    RateSweep::new(records, cause).integrate(grid, true)
}

/// Nelson-Aalen cumulative hazard with `± z·se` limits (variance `Σ d / Y²`).
pub fn nelson_aalen(records: &[FollowUpRecord], cause: Cause, grid: &[f64], level: f64) -> Band {
    let table = EventTable::new(records);
    let d = table.events(cause);
    let z = normal_quantile(0.5 + level / 2.0);
    let (mut h, mut v) = (vec![0.0], vec![0.0]);
    for k in 0..table.times.len() {
        let y = table.at_risk[k];
        h.push(h[k] + d[k] / y);
        v.push(v[k] + d[k] / (y * y));
    }
    let mut band = Band { value: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    for &t in grid {
        let k = table.upto(t);
        let se = v[k].sqrt();
        band.value.push(h[k]);
        band.lo.push((h[k] - z * se).max(0.0));
        band.hi.push(h[k] + z * se);
    }
    band
}

/// One minus the Kaplan-Meier survivor for `cause` (other exits censored), with
/// Greenwood limits.
pub fn kaplan_meier_risk(records: &[FollowUpRecord], cause: Cause, grid: &[f64], level: f64) -> Band {
    let table = EventTable::new(records);
    let d = table.events(cause);
    let z = normal_quantile(0.5 + level / 2.0);
    let (mut s, mut g) = (vec![1.0], vec![0.0]);
    for k in 0..table.times.len() {
        let y = table.at_risk[k];
        s.push(s[k] * (1.0 - d[k] / y));
        g.push(if y > d[k] { g[k] + d[k] / (y * (y - d[k])) } else { g[k] });
    }
    let mut band = Band { value: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    for &t in grid {
        let k = table.upto(t);
        let risk = 1.0 - s[k];
        let se = s[k] * g[k].sqrt();
        band.value.push(risk);
        band.lo.push((risk - z * se).max(0.0));
        band.hi.push((risk + z * se).min(1.0));
    }
    band
}

/// Net risk expected over the whole cohort at baseline: `1 - n⁻¹ Σ_i exp(-H_i(t))`.
pub fn expected_net_risk_baseline(records: &[FollowUpRecord], cause: Cause, grid: &[f64]) -> Vec<f64> {
    if records.is_empty() {
        return vec![0.0; grid.len()];
    }
    let n = records.len() as f64;
    let mut surv = vec![0.0; grid.len()];
    for r in records {
        let h = r.hazard(cause);
        let mut cum = 0.0;
        let mut prev = r.entry_age;
        for (s, &t) in surv.iter_mut().zip(grid) {
            let age = r.entry_age + t;
            cum += h.cumulative(prev, age);
            prev = age;
            *s += (-cum).exp();
        }
    }
    surv.iter().map(|s| 1.0 - s / n).collect()
}

/// Net risk from the at-risk expected cumulative hazard: `1 - exp(-H(t))`.
pub fn expected_net_risk_at_risk(records: &[FollowUpRecord], cause: Cause, grid: &[f64]) -> Vec<f64> {
    expected_cum_hazard(records, cause, grid).iter().map(|h| -(-h).exp_m1()).collect()
}

/// Aalen-Johansen cumulative incidence for `cause` with delta-method limits.
pub fn cif_observed(records: &[FollowUpRecord], cause: Cause, grid: &[f64], level: f64, limit: SurvivorLimit) -> Band {
    let table = EventTable::new(records);
    let d = table.events(cause);
    let z = normal_quantile(0.5 + level / 2.0);
    let m = table.times.len();
    // f[k]: incidence after the first k times; s_before[k]: all-cause survivor just before time k.
    let mut f = vec![0.0; m + 1];
    let mut s_before = vec![1.0; m];
    let mut s = 1.0;
    for k in 0..m {
        let y = table.at_risk[k];
        s_before[k] = s;
        let s_after = s * (1.0 - table.all_events(k) / y);
        let weight = match limit {
            SurvivorLimit::Left => s,
            SurvivorLimit::Right => s_after,
        };
        f[k + 1] = f[k] + weight * d[k] / y;
        s = s_after;
    }
    let mut band = Band { value: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    for &t in grid {
        let kt = table.upto(t);
        let ft = f[kt];
        let mut var = 0.0;
        for k in 0..kt {
            let y = table.at_risk[k];
            let dall = table.all_events(k);
            let dj = d[k];
            if dall == 0.0 {
                continue;
            }
            let gap = ft - f[k + 1];
            if y > dall {
                var += gap * gap * dall / (y * (y - dall));
            }
            var += s_before[k].powi(2) * dj * (y - dj) / (y * y * y);
            var -= 2.0 * gap * s_before[k] * dj / (y * y);
        }
        let se = var.max(0.0).sqrt();
        band.value.push(ft);
        band.lo.push((ft - z * se).max(0.0));
        band.hi.push((ft + z * se).min(1.0));
    }
    band
}

/// Mean predicted cumulative incidence over the baseline cohort: `n⁻¹ Σ_i P_i(t)`.
pub fn expected_cif_mean(records: &[FollowUpRecord], cause: Cause, grid: &[f64]) -> Vec<f64> {
    if records.is_empty() {
        return vec![0.0; grid.len()];
    }
    let n = records.len() as f64;
    let mut total = vec![0.0; grid.len()];
    for r in records {
        let ends: Vec<f64> = grid.iter().map(|t| r.entry_age + t).collect();
        let path = match cause {
            Cause::OtherDeath => cumulative_incidence_path(&r.h2, &r.h1, r.entry_age, &ends),
            _ => cumulative_incidence_path(&r.h1, &r.h2, r.entry_age, &ends),
        };
        for (a, p) in total.iter_mut().zip(path) {
            *a += p;
        }
    }
    total.iter().map(|x| x / n).collect()
}

fn ratio(o: f64, e: f64) -> Option<f64> {
    (e > 0.0).then(|| o / e)
}

fn series(method: CurveMethod, cause: Cause, grid: &[f64], obs: Band, expected: Vec<f64>) -> CurveSeries {
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &time)| CurvePoint {
            time,
            observed: obs.value[i],
            obs_lo: obs.lo[i],
            obs_hi: obs.hi[i],
            expected: expected[i],
            oe: ratio(obs.value[i], expected[i]),
        })
        .collect();
    CurveSeries { method, cause, points }
}

pub fn curve_series(records: &[FollowUpRecord], method: CurveMethod, cause: Cause, options: &CurveOptions) -> CurveSeries {
    let grid = curve_grid(records, &options.grid);
    let level = options.level;
    let (obs, expected) = match method {
        CurveMethod::Count => {
            (observed_count_curve(records, cause, &grid, level), expected_count_curve(records, cause, &grid))
        }
        CurveMethod::CumHazard => (nelson_aalen(records, cause, &grid, level), expected_cum_hazard(records, cause, &grid)),
        CurveMethod::NetRiskA => {
            (kaplan_meier_risk(records, cause, &grid, level), expected_net_risk_baseline(records, cause, &grid))
        }
        CurveMethod::NetRiskB => {
            (kaplan_meier_risk(records, cause, &grid, level), expected_net_risk_at_risk(records, cause, &grid))
        }
        CurveMethod::Cif => {
            (cif_observed(records, cause, &grid, level, options.limit), expected_cif_mean(records, cause, &grid))
        }
    };
    series(method, cause, &grid, obs, expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub schema: String,
    pub series: Vec<CurveSeries>,
}

/// Every curve method for `cause`.
pub fn all_curves(records: &[FollowUpRecord], cause: Cause, options: &CurveOptions) -> CurveSet {
    CurveSet {
        schema: CURVES_SCHEMA.to_string(),
        series: CurveMethod::ALL.iter().map(|&m| curve_series(records, m, cause, options)).collect(),
    }
}

/// Long-format CSV: `method,time,observed,obs_lo,obs_hi,expected_a,expected_b,oe`. The
/// expectation sits in `expected_b` for `net_risk_B` and in `expected_a` otherwise.
pub fn curves_to_csv(set: &CurveSet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "time", "observed", "obs_lo", "obs_hi", "expected_a", "expected_b", "oe"])
        .expect("write to memory");
    for s in &set.series {
        for p in &s.points {
            let e = p.expected.to_string();
            let (a, b) = if s.method == CurveMethod::NetRiskB { (String::new(), e) } else { (e, String::new()) };
            w.write_record([
                s.method.tag().to_string(),
                p.time.to_string(),
                p.observed.to_string(),
                p.obs_lo.to_string(),
                p.obs_hi.to_string(),
                a,
                b,
                p.oe.map_or_else(String::new, |v| v.to_string()),
            ])
            .expect("write to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
