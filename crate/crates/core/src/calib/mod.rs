//! Overall calibration of predicted hazards against observed follow-up.
//!
//! Records carry each subject's predicted cause-specific hazards on the age axis.
//! Follow-up time `u` is measured from entry, so age is `entry_age + u`.

mod io;
mod poisson;
mod report;

use serde::{Deserialize, Serialize};

use crate::hazard::{cumulative_incidence, cumulative_incidence_weighted, Hazard, ScaledHazard, StepSurvivor};
use crate::stats::{chi_sq_sf, poisson_exact_interval};

pub use io::{read_cohort, read_curves, write_cohort, CurveSet, ProfileSource};
pub use poisson::{
    calibration_in_the_large, calibration_slope, fit_poisson, segment_records, table2_fit, PoissonFit, PoissonTerm,
    Segment, Table2Fit, Table2Row,
};
pub use report::{calibrate, CalibrationOptions, CalibrationReport, ExpectedMethod, ExpectedValue, REPORT_SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum CalibError {
    #[error("record {id}: {message}")]
    InvalidRecord { id: String, message: String },
    #[error("record {id} has no potential censoring time")]
    MissingCensoringTime { id: String },
    #[error("no censoring events to estimate the censoring survivor from")]
    DegenerateCensorEstimate,
    #[error("expected count must be positive, got {0}")]
    NonPositiveE(f64),
    #[error("group {0} is empty or has no expected events")]
    EmptyGroup(String),
    #[error("need at least two groups")]
    TooFewGroups,
    #[error("Poisson fit did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("Poisson fit diverges on term {0} (separation)")]
    Separation(String),
    #[error("line {line}, field `{field}`: {message}")]
    Parse { line: u64, field: String, message: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

impl CalibError {
    /// Numerical failures as opposed to invalid input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CalibError::DegenerateCensorEstimate
                | CalibError::NonPositiveE(_)
                | CalibError::EmptyGroup(_)
                | CalibError::TooFewGroups
                | CalibError::NoConvergence(_)
                | CalibError::Separation(_)
        )
    }
}

/// How follow-up ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Censored,
    Breast,
    OtherDeath,
}

impl Cause {
    pub fn code(self) -> u8 {
        match self {
            Cause::Censored => 0,
            Cause::Breast => 1,
            Cause::OtherDeath => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Cause::Censored),
            1 => Some(Cause::Breast),
            2 => Some(Cause::OtherDeath),
            _ => None,
        }
    }
}

/// One subject's follow-up with their predicted hazards bound.
#[derive(Debug, Clone)]
pub struct FollowUpRecord {
    pub id: String,
    pub entry_age: f64,
    pub exit_age: f64,
    pub cause: Cause,
    /// Potential censoring time in years from entry, when known (also for subjects with events).
    pub censor_time: Option<f64>,
    pub h1: ScaledHazard,
    pub h2: ScaledHazard,
}

impl FollowUpRecord {
    pub fn new(
        id: impl Into<String>,
        entry_age: f64,
        exit_age: f64,
        cause: Cause,
        h1: ScaledHazard,
        h2: ScaledHazard,
    ) -> Result<Self, CalibError> {
        let id = id.into();
        if !(entry_age.is_finite() && exit_age.is_finite() && exit_age > entry_age) {
            return Err(CalibError::InvalidRecord {
                id,
                message: format!("exit age {exit_age} must exceed entry age {entry_age}"),
            });
        }
        Ok(Self { id, entry_age, exit_age, cause, censor_time: None, h1, h2 })
    }

    pub fn with_censor_time(mut self, tc: f64) -> Self {
        self.censor_time = Some(tc);
        self
    }

    pub fn follow_up(&self) -> f64 {
        self.exit_age - self.entry_age
    }

    pub fn hazard(&self, cause: Cause) -> &ScaledHazard {
        match cause {
            Cause::OtherDeath => &self.h2,
            _ => &self.h1,
        }
    }

    /// Predicted cumulative hazard for `cause` over the first `u` years of follow-up.
    pub fn cumulative(&self, cause: Cause, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        self.hazard(cause).cumulative(self.entry_age, self.entry_age + u)
    }

    /// Cumulative incidence for `cause` within `u` years of entry.
    pub fn risk(&self, cause: Cause, u: f64) -> f64 {
        let end = self.entry_age + u.max(0.0);
        match cause {
            Cause::OtherDeath => cumulative_incidence(&self.h2, &self.h1, self.entry_age, end),
            _ => cumulative_incidence(&self.h1, &self.h2, self.entry_age, end),
        }
    }

    pub fn event(&self, cause: Cause) -> bool {
        self.cause == cause && cause != Cause::Censored
    }
}

pub fn observed(records: &[FollowUpRecord], cause: Cause) -> u64 {
    records.iter().filter(|r| r.event(cause)).count() as u64
}

/// Sum of predicted cumulative hazards over each subject's observed at-risk interval.
pub fn expected_hazard_method(records: &[FollowUpRecord]) -> f64 {
    expected_hazard_method_for(records, Cause::Breast)
}

pub fn expected_hazard_method_for(records: &[FollowUpRecord], cause: Cause) -> f64 {
    records.iter().map(|r| r.cumulative(cause, r.follow_up())).sum()
}

/// Sum of cumulative incidence to a common horizon `a` years after entry.
pub fn expected_cif_fixed(records: &[FollowUpRecord], a: f64) -> f64 {
    records.iter().map(|r| r.risk(Cause::Breast, a)).sum()
}

/// Sum of cumulative incidence to each subject's known potential censoring time.
pub fn expected_cif_deterministic(records: &[FollowUpRecord]) -> Result<f64, CalibError> {
    records
        .iter()
        .map(|r| {
            r.censor_time
                .map(|tc| r.risk(Cause::Breast, tc))
                .ok_or_else(|| CalibError::MissingCensoringTime { id: r.id.clone() })
        })
        .sum()
}

/// Cumulative incidence weighted by the censoring survivor, integrated `horizon` years
/// from entry. With `survivor` absent it is estimated from the records by Kaplan-Meier.
pub fn expected_cif_stochastic(
    records: &[FollowUpRecord],
    survivor: Option<&StepSurvivor>,
    horizon: f64,
) -> Result<f64, CalibError> {
    let estimated;
    let sc = match survivor {
        Some(s) => s,
        None => {
            estimated = censoring_survivor(records)?;
            &estimated
        }
    };
    Ok(records
        .iter()
        .map(|r| cumulative_incidence_weighted(&r.h1, &r.h2, r.entry_age, r.entry_age + horizon, Some(sc)))
        .sum())
}

/// Sum of cumulative incidence to each subject's exit. Biased towards zero.
pub fn biased_sum_to_event(records: &[FollowUpRecord]) -> f64 {
    records.iter().map(|r| cumulative_incidence(&r.h1, &r.h2, r.entry_age, r.exit_age)).sum()
}

/// The fixed-horizon protocol that keeps every case diagnosed by `a` but only the
/// non-cases still under follow-up at `a`. Returns `(O, E)`; biased upwards in O/E
/// under censoring because censored non-cases drop out of `E`.
pub fn fixed_horizon_with_exclusion(records: &[FollowUpRecord], a: f64) -> (u64, f64) {
    let mut o = 0;
    let mut e = 0.0;
    for r in records {
        let case = r.cause == Cause::Breast && r.follow_up() <= a;
        if case || r.follow_up() >= a {
            o += u64::from(case);
            e += r.risk(Cause::Breast, a);
        }
    }
    (o, e)
}

/// Sum of net risks `1 - exp(-H1)` to each subject's exit. Biased towards zero.
pub fn biased_net_risk(records: &[FollowUpRecord]) -> f64 {
    records.iter().map(|r| -(-r.cumulative(Cause::Breast, r.follow_up())).exp_m1()).sum()
}

/// Kaplan-Meier estimate of the censoring survivor on the follow-up scale, treating
/// censorings as events and events as censored. At tied times, events of interest
/// (censorings) are counted before removals.
pub fn censoring_survivor(records: &[FollowUpRecord]) -> Result<StepSurvivor, CalibError> {
    let mut times: Vec<(f64, bool)> = records.iter().map(|r| (r.follow_up(), r.cause == Cause::Censored)).collect();
    if !times.iter().any(|t| t.1) {
        return Err(CalibError::DegenerateCensorEstimate);
    }
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = times.len() as f64;
    let mut s = 1.0;
    let mut out = StepSurvivor::one();
    let mut i = 0;
    while i < times.len() {
        let t = times[i].0;
        let (mut d, mut n) = (0.0, 0.0);
        while i < times.len() && times[i].0 == t {
            if times[i].1 {
                d += 1.0;
            }
            n += 1.0;
            i += 1;
        }
        if d > 0.0 {
            s *= 1.0 - d / at_risk;
            out.times.push(t);
            out.values.push(s);
        }
        at_risk -= n;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeRatio {
    pub observed: u64,
    pub expected: f64,
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
    pub covers_unity: bool,
}

/// O/E with an exact Poisson interval for the mean of O, treating E as fixed.
pub fn oe_ratio_with_ci(observed: u64, expected: f64, level: f64) -> Result<OeRatio, CalibError> {
    if !(expected > 0.0 && expected.is_finite()) {
        return Err(CalibError::NonPositiveE(expected));
    }
    let (lo, hi) = poisson_exact_interval(observed, level);
    let (lo, hi) = (lo / expected, hi / expected);
    Ok(OeRatio { observed, expected, ratio: observed as f64 / expected, lo, hi, covers_unity: lo <= 1.0 && 1.0 <= hi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSq {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Grouped goodness-of-fit statistic `Σ (O_k - E_k)^2 / E_k` on `K - 1` degrees of
/// freedom, with the `E_k` first rescaled so that `Σ E_k = Σ O_k`. The rescaling uses
/// up the degree of freedom; without it the reference distribution has `K` df (see
/// [`group_chi_sq_unadjusted`]).
pub fn group_chi_sq(groups: &[(f64, f64)]) -> Result<ChiSq, CalibError> {
    check_groups(groups)?;
    let total_o: f64 = groups.iter().map(|g| g.0).sum();
    let total_e: f64 = groups.iter().map(|g| g.1).sum();
    let scale = if total_o > 0.0 { total_o / total_e } else { 1.0 };
    let statistic = groups.iter().map(|&(o, e)| (o - e * scale).powi(2) / (e * scale)).sum();
    let df = groups.len() as u32 - 1;
    Ok(ChiSq { statistic, df, p_value: chi_sq_sf(statistic, df as f64) })
}

/// `Σ (O_k - E_k)^2 / E_k` with the model's own `E_k`, referred to `K` df.
pub fn group_chi_sq_unadjusted(groups: &[(f64, f64)]) -> Result<ChiSq, CalibError> {
    check_groups(groups)?;
    let statistic = groups.iter().map(|&(o, e)| (o - e).powi(2) / e).sum();
    let df = groups.len() as u32;
    Ok(ChiSq { statistic, df, p_value: chi_sq_sf(statistic, df as f64) })
}

fn check_groups(groups: &[(f64, f64)]) -> Result<(), CalibError> {
    if groups.len() < 2 {
        return Err(CalibError::TooFewGroups);
    }
    if let Some(k) = groups.iter().position(|g| !(g.1 > 0.0)) {
        return Err(CalibError::EmptyGroup(k.to_string()));
    }
    Ok(())
}

/// How subjects are grouped by predicted 10-year risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Grouping {
    /// Equal-sized groups by rank of predicted risk.
    Quantiles { groups: usize },
    /// Groups `[c_{k-1}, c_k)` on absolute risk.
    CutPoints { cuts: Vec<f64> },
}

impl Grouping {
    pub fn deciles() -> Self {
        Grouping::Quantiles { groups: 10 }
    }

    /// The clinical 10-year risk categories: <2%, 2-3%, 3-5%, 5-8%, >=8%.
    pub fn risk_categories() -> Self {
        Grouping::CutPoints { cuts: vec![0.02, 0.03, 0.05, 0.08] }
    }

    pub fn len(&self) -> usize {
        match self {
            Grouping::Quantiles { groups } => *groups,
            Grouping::CutPoints { cuts } => cuts.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            Grouping::Quantiles { groups } => (1..=*groups).map(|k| format!("Q{k}")).collect(),
            Grouping::CutPoints { cuts } => {
                let pct = |c: f64| format!("{}", (c * 1000.0).round() / 10.0);
                let mut out = Vec::with_capacity(cuts.len() + 1);
                out.push(format!("<{}%", pct(cuts[0])));
                for w in cuts.windows(2) {
                    out.push(format!("{}-{}%", pct(w[0]), pct(w[1])));
                }
                out.push(format!(">={}%", pct(*cuts.last().unwrap())));
                out
            }
        }
    }

    /// Group index of each score.
    pub fn assign(&self, scores: &[f64]) -> Vec<usize> {
        match self {
            Grouping::Quantiles { groups } => {
                let mut order: Vec<usize> = (0..scores.len()).collect();
                order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
                let mut out = vec![0; scores.len()];
                let n = scores.len().max(1);
                for (rank, &i) in order.iter().enumerate() {
                    out[i] = rank * groups / n;
                }
                out
            }
            Grouping::CutPoints { cuts } => scores.iter().map(|s| cuts.partition_point(|c| c <= s)).collect(),
        }
    }
}

/// Predicted breast cancer risk within 10 years of entry, the grouping score.
pub fn ten_year_risk(record: &FollowUpRecord) -> f64 {
    record.risk(Cause::Breast, 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub label: String,
    pub n: usize,
    pub observed: u64,
    pub expected: f64,
    pub oe: Option<OeRatio>,
}

/// Observed and hazard-method expected counts per group.
pub fn group_table(records: &[FollowUpRecord], grouping: &Grouping) -> Vec<GroupRow> {
    let scores: Vec<f64> = records.iter().map(ten_year_risk).collect();
    let idx = grouping.assign(&scores);
    let mut rows: Vec<GroupRow> = grouping
        .labels()
        .into_iter()
        .map(|label| GroupRow { label, n: 0, observed: 0, expected: 0.0, oe: None })
        .collect();
    for (r, &k) in records.iter().zip(&idx) {
        rows[k].n += 1;
        rows[k].observed += r.event(Cause::Breast) as u64;
        rows[k].expected += r.cumulative(Cause::Breast, r.follow_up());
    }
    for row in &mut rows {
        row.oe = oe_ratio_with_ci(row.observed, row.expected, 0.95).ok();
    }
    rows
}
