//! Poisson regression calibration on person-year segments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{group_table, oe_ratio_with_ci, CalibError, Cause, FollowUpRecord, Grouping, OeRatio};
use crate::stats::{chi_sq_sf, normal_quantile};

const MAX_ITER: usize = 50;
/// Coefficients beyond this size mean the likelihood has no finite maximum.
const SEPARATION_BOUND: f64 = 30.0;

/// One year of a subject's follow-up (or the final partial year).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub record: usize,
    /// Follow-up year, 1 for `[0, 1)`.
    pub year: u32,
    pub length: f64,
    pub observed: f64,
    pub expected: f64,
}

/// Splits follow-up into yearly segments from entry. Segments with no predicted
/// hazard and no event carry no information and are dropped.
pub fn segment_records(records: &[FollowUpRecord]) -> Result<Vec<Segment>, CalibError> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let fu = r.follow_up();
        let mut year = 0u32;
        while (year as f64) < fu {
            let lo = year as f64;
            let hi = (lo + 1.0).min(fu);
            let last = hi >= fu;
            let observed = if last && r.event(Cause::Breast) { 1.0 } else { 0.0 };
            let expected = r.cumulative(Cause::Breast, hi) - r.cumulative(Cause::Breast, lo);
            year += 1;
            if expected > 0.0 {
                out.push(Segment { record: i, year, length: hi - lo, observed, expected });
            } else if observed > 0.0 {
                return Err(CalibError::InvalidRecord {
                    id: r.id.clone(),
                    message: "event in a segment with zero predicted hazard".to_string(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonTerm {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PoissonTerm {
    /// Estimate and Wald limits on the rate-ratio scale.
    pub fn ratio(&self) -> (f64, f64, f64) {
        (self.estimate.exp(), self.lo.exp(), self.hi.exp())
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    pub terms: Vec<PoissonTerm>,
    pub covariance: Vec<Vec<f64>>,
    pub deviance: f64,
    pub iterations: usize,
}

impl PoissonFit {
    pub fn term(&self, name: &str) -> Option<&PoissonTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

fn deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| if y > 0.0 { y * (y / m).ln() - (y - m) } else { m })
        .sum::<f64>()
}

/// Poisson log-linear model `log E[y] = offset + X β` by iteratively reweighted least
/// squares, with Wald intervals at `level`.
pub fn fit_poisson(
    y: &[f64],
    offset: &[f64],
    columns: &[Vec<f64>],
    names: &[&str],
    level: f64,
) -> Result<PoissonFit, CalibError> {
    let n = y.len();
    let p = columns.len();
    assert!(offset.len() == n && columns.iter().all(|c| c.len() == n) && names.len() == p);
    let weighted_system = |mu: &[f64], z: Option<&[f64]>| {
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        let mut row = vec![0.0; p];
        for i in 0..n {
            for (j, c) in columns.iter().enumerate() {
                row[j] = c[i];
            }
            let w = mu[i];
            for j in 0..p {
                let wj = w * row[j];
                for k in 0..=j {
                    a[(j, k)] += wj * row[k];
                }
                if let Some(z) = z {
                    b[j] += wj * z[i];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                a[(k, j)] = a[(j, k)];
            }
        }
        (a, b)
    };

    let mut mu: Vec<f64> = y.iter().map(|&v| v + 0.1).collect();
    let mut eta: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
    let mut beta = DVector::<f64>::zeros(p);
    let mut dev_old = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let z: Vec<f64> = (0..n).map(|i| eta[i] - offset[i] + (y[i] - mu[i]) / mu[i]).collect();
        let (a, b) = weighted_system(&mu, Some(&z));
        let chol = a.cholesky().ok_or_else(|| CalibError::Separation("singular design".to_string()))?;
        beta = chol.solve(&b);
        for i in 0..n {
            eta[i] = offset[i] + (0..p).map(|j| columns[j][i] * beta[j]).sum::<f64>();
            mu[i] = eta[i].exp();
        }
        let dev = deviance(y, &mu);
        if !dev.is_finite() {
            return Err(CalibError::NoConvergence(iterations));
        }
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < 1e-13 {
            converged = true;
            break;
        }
        dev_old = dev;
    }
    if !converged {
        return Err(CalibError::NoConvergence(iterations));
    }
    if let Some(j) = (0..p).find(|&j| !(beta[j].abs() < SEPARATION_BOUND)) {
        return Err(CalibError::Separation(names[j].to_string()));
    }
    let (info, _) = weighted_system(&mu, None);
    let cov = info.try_inverse().ok_or_else(|| CalibError::Separation("singular information".to_string()))?;
    let zq = normal_quantile(0.5 + level / 2.0);
    let terms = (0..p)
        .map(|j| {
            let se = cov[(j, j)].sqrt();
            PoissonTerm { name: names[j].to_string(), estimate: beta[j], se, lo: beta[j] - zq * se, hi: beta[j] + zq * se }
        })
        .collect();
    let covariance = (0..p).map(|j| (0..p).map(|k| cov[(j, k)]).collect()).collect();
    Ok(PoissonFit { terms, covariance, deviance: deviance(y, &mu), iterations })
}

/// `E[O] = exp(γ0) E`: the calibration-in-the-large ratio `θ = exp(γ0)`.
pub fn calibration_in_the_large(segments: &[Segment], level: f64) -> Result<PoissonFit, CalibError> {
    let y: Vec<f64> = segments.iter().map(|s| s.observed).collect();
    let offset: Vec<f64> = segments.iter().map(|s| s.expected.ln()).collect();
    fit_poisson(&y, &offset, &[vec![1.0; segments.len()]], &["gamma0"], level)
}

/// `E[O] = exp(γ0) E^γ1` per unit of follow-up time: the exposure enters as an offset
/// and the predicted annual rate `E / length` as the covariate, so that for whole-year
/// segments the model is exactly `exp(γ0 + γ1 log E)`.
pub fn calibration_slope(segments: &[Segment], level: f64) -> Result<PoissonFit, CalibError> {
    let y: Vec<f64> = segments.iter().map(|s| s.observed).collect();
    let offset: Vec<f64> = segments.iter().map(|s| s.length.ln()).collect();
    let log_rate: Vec<f64> = segments.iter().map(|s| (s.expected / s.length).ln()).collect();
    fit_poisson(&y, &offset, &[vec![1.0; segments.len()], log_rate], &["gamma0", "gamma1"], level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedRatio {
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub term: String,
    pub n: usize,
    pub observed: u64,
    pub expected: f64,
    pub univariate: Option<OeRatio>,
    /// None for the reference group and for terms that could not be estimated.
    pub adjusted: Option<AdjustedRatio>,
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRatioTest {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Fit {
    pub rows: Vec<Table2Row>,
    pub fit: PoissonFit,
    /// Joint test of the risk-group terms.
    pub group_test: Option<LikelihoodRatioTest>,
}

/// Poisson regression with offset `log E`, a year-1 indicator, a linear follow-up-time
/// term `(year - 2)` for years 2 and later, and risk-group indicators against
/// `reference`. Groups without events are left out of the fit.
pub fn table2_fit(
    records: &[FollowUpRecord],
    segments: &[Segment],
    grouping: &Grouping,
    reference: usize,
    level: f64,
) -> Result<Table2Fit, CalibError> {
    let scores: Vec<f64> = records.iter().map(super::ten_year_risk).collect();
    let group_of = grouping.assign(&scores);
    let groups = group_table(records, grouping);
    let fitted: Vec<bool> = groups.iter().map(|g| g.observed > 0).collect();
    if !fitted.get(reference).copied().unwrap_or(false) {
        return Err(CalibError::EmptyGroup(groups.get(reference).map_or_else(String::new, |g| g.label.clone())));
    }
    let used: Vec<&Segment> = segments.iter().filter(|s| fitted[group_of[s.record]]).collect();
    let y: Vec<f64> = used.iter().map(|s| s.observed).collect();
    let offset: Vec<f64> = used.iter().map(|s| s.expected.ln()).collect();
    let mut columns = vec![
        vec![1.0; used.len()],
        used.iter().map(|s| if s.year == 1 { 1.0 } else { 0.0 }).collect(),
        used.iter().map(|s| (s.year as f64 - 2.0).max(0.0)).collect(),
    ];
    let mut names: Vec<String> = vec!["intercept".into(), "year_1".into(), "year_2plus_time".into()];
    let base_columns = columns.len();
    for (k, g) in groups.iter().enumerate() {
        if k != reference && fitted[k] {
            columns.push(used.iter().map(|s| if group_of[s.record] == k { 1.0 } else { 0.0 }).collect());
            names.push(format!("group:{}", g.label));
        }
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let fit = fit_poisson(&y, &offset, &columns, &name_refs, level)?;
    let group_test = if columns.len() > base_columns {
        let reduced = fit_poisson(&y, &offset, &columns[..base_columns], &name_refs[..base_columns], level)?;
        let statistic = (reduced.deviance - fit.deviance).max(0.0);
        let df = (columns.len() - base_columns) as u32;
        Some(LikelihoodRatioTest { statistic, df, p_value: chi_sq_sf(statistic, df as f64) })
    } else {
        None
    };

    let adjusted = |name: &str| {
        fit.term(name).map(|t| {
            let (ratio, lo, hi) = t.ratio();
            AdjustedRatio { ratio, lo, hi }
        })
    };
    let summarize = |term: &str, pick: &dyn Fn(&Segment) -> bool, adj: Option<AdjustedRatio>, reference: bool| {
        let mut subjects: Vec<usize> = segments.iter().filter(|s| pick(s)).map(|s| s.record).collect();
        subjects.dedup();
        let observed = segments.iter().filter(|s| pick(s)).map(|s| s.observed).sum::<f64>() as u64;
        let expected = segments.iter().filter(|s| pick(s)).map(|s| s.expected).sum();
        Table2Row {
            term: term.to_string(),
            n: subjects.len(),
            observed,
            expected,
            univariate: oe_ratio_with_ci(observed, expected, level).ok(),
            adjusted: adj,
            reference,
        }
    };
    let mut rows = vec![
        Table2Row { n: records.len(), ..summarize("Overall (intercept)", &|_| true, adjusted("intercept"), false) },
        summarize("Year 1", &|s| s.year == 1, adjusted("year_1"), false),
        summarize("Year 2+ (time)", &|s| s.year >= 2, adjusted("year_2plus_time"), false),
    ];
    for (k, g) in groups.iter().enumerate() {
        let adj = if k == reference { None } else { adjusted(&format!("group:{}", g.label)) };
        rows.push(Table2Row {
            n: g.n,
            observed: g.observed,
            expected: g.expected,
            univariate: g.oe.clone(),
            ..summarize(&g.label, &|s| group_of[s.record] == k, adj, k == reference)
        });
    }
    Ok(Table2Fit { rows, fit, group_test })
}
