//! The calibration report: expected counts by method, O/E, grouped tests and the
//! Poisson regression table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::poisson::{calibration_in_the_large, calibration_slope, segment_records, table2_fit, PoissonTerm, Table2Fit};
use super::{
    biased_net_risk, biased_sum_to_event, expected_cif_deterministic, expected_cif_fixed, expected_cif_stochastic,
    expected_hazard_method, fixed_horizon_with_exclusion, group_chi_sq, group_chi_sq_unadjusted, group_table, observed, oe_ratio_with_ci, CalibError,
    Cause, ChiSq, FollowUpRecord, GroupRow, Grouping, OeRatio,
};
use crate::hazard::StepSurvivor;

pub const REPORT_SCHEMA: &str = "bcrisk.calibration/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedMethod {
    /// Sum of cumulative hazards over observed follow-up.
    Hazard,
    /// Sum of cumulative incidence to a common horizon.
    CifFixed,
    /// Sum of cumulative incidence to each known potential censoring time.
    CifDeterministic,
    /// Cumulative incidence weighted by the censoring survivor.
    CifStochastic,
    /// Sum of cumulative incidence to exit (biased).
    BiasedSum,
    /// Sum of net risk to exit (biased).
    BiasedNet,
    /// Cumulative incidence to the horizon over cases by then and non-cases followed that
    /// long (biased; has its own observed count).
    FixedExclusion,
}

impl ExpectedMethod {
    pub const ALL: [ExpectedMethod; 7] = [
        ExpectedMethod::Hazard,
        ExpectedMethod::CifFixed,
        ExpectedMethod::CifDeterministic,
        ExpectedMethod::CifStochastic,
        ExpectedMethod::BiasedSum,
        ExpectedMethod::BiasedNet,
        ExpectedMethod::FixedExclusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExpectedMethod::Hazard => "hazard",
            ExpectedMethod::CifFixed => "cif-fixed",
            ExpectedMethod::CifDeterministic => "cif-deterministic",
            ExpectedMethod::CifStochastic => "cif-stochastic",
            ExpectedMethod::BiasedSum => "biased-sum",
            ExpectedMethod::BiasedNet => "biased-net",
            ExpectedMethod::FixedExclusion => "fixed-exclusion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn biased(self) -> bool {
        matches!(self, ExpectedMethod::BiasedSum | ExpectedMethod::BiasedNet | ExpectedMethod::FixedExclusion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub grouping: Grouping,
    pub methods: Vec<ExpectedMethod>,
    /// Years from entry for the fixed-horizon and censoring-weighted methods; defaults to
    /// the longest follow-up.
    pub horizon: Option<f64>,
    /// Censoring survivor for the censoring-weighted method; Kaplan-Meier when absent.
    pub censor_survivor: Option<StepSurvivor>,
    pub level: f64,
    /// Reference group for the regression (index into the grouping).
    pub reference_group: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            grouping: Grouping::risk_categories(),
            methods: vec![ExpectedMethod::Hazard],
            horizon: None,
            censor_survivor: None,
            level: 0.95,
            reference_group: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedValue {
    pub method: ExpectedMethod,
    pub biased: bool,
    pub observed: u64,
    pub expected: f64,
    pub oe: OeRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub schema: String,
    pub n: usize,
    pub observed: u64,
    /// The hazard method first, then any others requested.
    pub expected: Vec<ExpectedValue>,
    pub groups: Vec<GroupRow>,
    pub chi_sq: Option<ChiSq>,
    pub chi_sq_unadjusted: Option<ChiSq>,
    pub calibration_in_the_large: PoissonTerm,
    pub gamma0: PoissonTerm,
    pub gamma1: PoissonTerm,
    pub gamma_covariance: Vec<Vec<f64>>,
    pub table2: Option<Table2Fit>,
    /// Why the regression table is missing (for example, no events in the reference group).
    pub table2_error: Option<String>,
}

pub fn calibrate(records: &[FollowUpRecord], options: &CalibrationOptions) -> Result<CalibrationReport, CalibError> {
    let o = observed(records, Cause::Breast);
    let horizon = options.horizon.unwrap_or_else(|| records.iter().map(|r| r.follow_up()).fold(0.0, f64::max));
    let mut methods = vec![ExpectedMethod::Hazard];
    methods.extend(options.methods.iter().copied().filter(|m| *m != ExpectedMethod::Hazard));
    let mut expected = Vec::with_capacity(methods.len());
    for method in methods {
        let (obs, e) = match method {
            ExpectedMethod::Hazard => (o, expected_hazard_method(records)),
            ExpectedMethod::CifFixed => (o, expected_cif_fixed(records, horizon)),
            ExpectedMethod::CifDeterministic => (o, expected_cif_deterministic(records)?),
            ExpectedMethod::CifStochastic => (o, expected_cif_stochastic(records, options.censor_survivor.as_ref(), horizon)?),
            ExpectedMethod::BiasedSum => (o, biased_sum_to_event(records)),
            ExpectedMethod::BiasedNet => (o, biased_net_risk(records)),
            ExpectedMethod::FixedExclusion => fixed_horizon_with_exclusion(records, horizon),
        };
        expected.push(ExpectedValue {
            method,
            biased: method.biased(),
            observed: obs,
            expected: e,
            oe: oe_ratio_with_ci(obs, e, options.level)?,
        });
    }

    let groups = group_table(records, &options.grouping);
    let pairs: Vec<(f64, f64)> = groups.iter().filter(|g| g.expected > 0.0).map(|g| (g.observed as f64, g.expected)).collect();
    let chi_sq = group_chi_sq(&pairs).ok();
    let chi_sq_unadjusted = group_chi_sq_unadjusted(&pairs).ok();

    let segments = segment_records(records)?;
    let citl = calibration_in_the_large(&segments, options.level)?;
    let slope = calibration_slope(&segments, options.level)?;
    let (table2, table2_error) =
        match table2_fit(records, &segments, &options.grouping, options.reference_group, options.level) {
            Ok(t) => (Some(t), None),
            Err(e @ (CalibError::EmptyGroup(_) | CalibError::Separation(_) | CalibError::NoConvergence(_))) => {
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
    Ok(CalibrationReport {
        schema: REPORT_SCHEMA.to_string(),
        n: records.len(),
        observed: o,
        expected,
        groups,
        chi_sq,
        chi_sq_unadjusted,
        calibration_in_the_large: citl.terms[0].clone(),
        gamma0: slope.terms[0].clone(),
        gamma1: slope.terms[1].clone(),
        gamma_covariance: slope.covariance,
        table2,
        table2_error,
    })
}

impl CalibrationReport {
    /// Plain-text summary with the regression table in the usual column order.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}, O = {}", self.n, self.observed);
        let _ = writeln!(s, "{:<22} {:>8} {:>12} {:>8} {:>18}  biased", "expected method", "O", "E", "O/E", "95% CI");
        for e in &self.expected {
            let _ = writeln!(
                s,
                "{:<22} {:>8} {:>12.2} {:>8.3} {:>18}  {}",
                e.method.name(),
                e.observed,
                e.expected,
                e.oe.ratio,
                format!("({:.3}-{:.3})", e.oe.lo, e.oe.hi),
                if e.biased { "yes" } else { "no" }
            );
        }
        if let Some(c) = &self.chi_sq {
            let _ = writeln!(s, "group chi-square {:.3} on {} df, p = {:.4}", c.statistic, c.df, c.p_value);
        }
        let g1 = &self.gamma1;
        let _ = writeln!(s, "gamma1 {:.3} (95% CI {:.3} to {:.3})", g1.estimate, g1.lo, g1.hi);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<22} {:>9} {:>7} {:>10} {:>16} {:>24}",
            "Term", "n", "O", "E", "O/E [univariate]", "O/E (95%CI) [adjusted]"
        );
        let Some(table2) = &self.table2 else {
            let _ = writeln!(s, "regression table unavailable: {}", self.table2_error.as_deref().unwrap_or("unknown"));
            return s;
        };
        for row in &table2.rows {
            let uni = row.univariate.as_ref().map_or_else(|| "-".to_string(), |u| format!("{:.2}", u.ratio));
            let adj = match (&row.adjusted, row.reference) {
                (_, true) => "1".to_string(),
                (Some(a), _) => format!("{:.2} ({:.2}-{:.2})", a.ratio, a.lo, a.hi),
                (None, _) => "-".to_string(),
            };
            let _ = writeln!(s, "{:<22} {:>9} {:>7} {:>10.1} {:>16} {:>24}", row.term, row.n, row.observed, row.expected, uni, adj);
        }
        if let Some(t) = &table2.group_test {
            let _ = writeln!(s, "risk-group likelihood ratio {:.3} on {} df, p = {:.4}", t.statistic, t.df, t.p_value);
        }
        s
    }
}
