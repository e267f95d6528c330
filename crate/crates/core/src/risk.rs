//! Absolute breast cancer risk with competing mortality.
//!
//! The breast cancer hazard is the genetic hazard from the segregation model times the
//! relative hazard of the other risk factors. Within each year of age the genetic part
//! is the exact average `-ln(S_G(b)/S_G(a)) / (b - a)` of the genotype mixture, so the
//! hazard curve is piecewise constant and absolute risks are closed form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::factors::{
    combined_relative_hazard, CombinedHazard, DensitySurfaces, FactorContext, FactorContribution, FactorError,
    FactorTable, RiskProfile,
};
use crate::hazard::{cumulative_incidence, cumulative_incidence_path, Hazard, PiecewiseHazard};
use crate::pedigree::{
    cell_of, genetic_survivor, genotype_posterior, GeneticModel, GenotypePosterior, Pedigree, PedigreeError, PedigreeMember,
    SegregationError, SegregationParams, N_CELLS,
};
use crate::rates::{load_rate_table, RateCause, RateError, RateTable, MAX_AGE, MIN_AGE};

pub const ASSESSMENT_SCHEMA: &str = "bcrisk.assessment/1";

#[derive(Debug, thiserror::Error)]
pub enum RiskError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Pedigree(#[from] PedigreeError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Segregation(#[from] SegregationError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl RiskError {
    /// Numerical failures as opposed to invalid input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            RiskError::Segregation(SegregationError::NoConvergence { .. } | SegregationError::ZeroLikelihood)
        )
    }
}

/// Risk categories on 10-year risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskCategory {
    #[serde(rename = "<2%")]
    Below2,
    #[serde(rename = "2-3%")]
    From2To3,
    #[serde(rename = "3-5%")]
    From3To5,
    #[serde(rename = "5-8%")]
    From5To8,
    #[serde(rename = ">=8%")]
    AtLeast8,
}

impl RiskCategory {
    pub const ALL: [RiskCategory; 5] =
        [RiskCategory::Below2, RiskCategory::From2To3, RiskCategory::From3To5, RiskCategory::From5To8, RiskCategory::AtLeast8];

    pub fn from_risk(ten_year: f64) -> Self {
        if ten_year < 0.02 {
            RiskCategory::Below2
        } else if ten_year < 0.03 {
            RiskCategory::From2To3
        } else if ten_year < 0.05 {
            RiskCategory::From3To5
        } else if ten_year < 0.08 {
            RiskCategory::From5To8
        } else {
            RiskCategory::AtLeast8
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RiskCategory::Below2 => "<2%",
            RiskCategory::From2To3 => "2-3%",
            RiskCategory::From3To5 => "3-5%",
            RiskCategory::From5To8 => "5-8%",
            RiskCategory::AtLeast8 => ">=8%",
        }
    }
}

/// Which hazard the atypia/LCIS maximum rule selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxRuleBranch {
    BenignOnly,
    OtherFactors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxRuleOutcome {
    pub benign_only_ten_year_risk: f64,
    pub other_factors_ten_year_risk: f64,
    pub selected: MaxRuleBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeHazardReport {
    /// Multiplier applied to the genetic hazard (or to population incidence under the
    /// benign-only branch of the maximum rule).
    pub applied: f64,
    pub other_factors: f64,
    pub benign: f64,
    pub max_rule: Option<MaxRuleOutcome>,
    pub audit: Vec<FactorContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCell {
    /// 0 non-carrier, 1 BRCA1, 2 BRCA2.
    pub brca: u8,
    pub unknown_gene: bool,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub as_of_age: f64,
    pub brca1_carrier: f64,
    pub brca2_carrier: f64,
    pub unknown_gene_carrier: f64,
    pub cells: Vec<PosteriorCell>,
}

impl From<&GenotypePosterior> for PosteriorReport {
    fn from(p: &GenotypePosterior) -> Self {
        let cells: Vec<PosteriorCell> = (0..N_CELLS)
            .map(|d| {
                let (c1, c2) = cell_of(d);
                PosteriorCell { brca: c1, unknown_gene: c2 == 1, probability: p.weights[d] }
            })
            .collect();
        let sum = |f: &dyn Fn(&PosteriorCell) -> bool| cells.iter().filter(|c| f(c)).map(|c| c.probability).sum();
        Self {
            as_of_age: p.as_of_age,
            brca1_carrier: sum(&|c| c.brca == 1),
            brca2_carrier: sum(&|c| c.brca == 2),
            unknown_gene_carrier: sum(&|c| c.unknown_gene),
            cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSegment {
    pub from: f64,
    pub to: f64,
    pub breast: f64,
    pub other_mortality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub age: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRisk {
    pub years: f64,
    pub age: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub schema: String,
    pub parameter_version: String,
    pub t0: f64,
    pub ten_year_risk: f64,
    pub lifetime_risk: f64,
    pub risk_category: RiskCategory,
    pub horizons: Vec<HorizonRisk>,
    pub genotype_posterior: PosteriorReport,
    pub relative_hazard: RelativeHazardReport,
    pub hazard_curve: Vec<HazardSegment>,
    /// `P(t0, age)` at t0 and every whole age up to the model maximum.
    pub risk_curve: Vec<RiskPoint>,
}

/// Family and risk factors for one woman, as read from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectInput {
    #[serde(default)]
    pub profile: RiskProfile,
    /// Proband first. Absent means no family information.
    #[serde(default)]
    pub pedigree: Option<Vec<PedigreeMember>>,
}

impl SubjectInput {
    pub fn pedigree(&self) -> Result<Option<Pedigree>, RiskError> {
        Ok(self.pedigree.clone().map(Pedigree::new).transpose()?)
    }
}

/// An assessment request: current age, extra horizons in years, and the subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessRequest {
    pub age: f64,
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub profile: RiskProfile,
    #[serde(default)]
    pub pedigree: Option<Vec<PedigreeMember>>,
}

impl AssessRequest {
    pub fn subject(&self) -> SubjectInput {
        SubjectInput { profile: self.profile.clone(), pedigree: self.pedigree.clone() }
    }
}

/// Serialized form shared by every front end, so identical inputs give identical bytes.
pub fn assessment_json(a: &RiskAssessment) -> String {
    serde_json::to_string_pretty(a).expect("assessment serializes")
}

/// A fully specified breast cancer hazard for one woman from `t0`.
#[derive(Debug, Clone)]
pub struct SubjectHazard {
    pub t0: f64,
    pub posterior: GenotypePosterior,
    pub combined: CombinedHazard,
    pub max_rule: Option<MaxRuleOutcome>,
    pub applied: f64,
    /// Breast cancer hazard on `[t0, 85]`.
    pub breast: PiecewiseHazard,
}

#[derive(Debug, Clone)]
pub struct RiskModel {
    incidence: RateTable,
    mortality: RateTable,
    genetic: GeneticModel,
    factors: FactorTable,
    surfaces: DensitySurfaces,
    version: String,
}

impl Default for RiskModel {
    fn default() -> Self {
        Self::new(
            RateTable::default_incidence(),
            RateTable::default_mortality(),
            SegregationParams::default(),
            FactorTable::default(),
            DensitySurfaces::default(),
        )
        .expect("shipped parameters are consistent")
    }
}

impl RiskModel {
    pub fn new(
        incidence: RateTable,
        mortality: RateTable,
        params: SegregationParams,
        factors: FactorTable,
        surfaces: DensitySurfaces,
    ) -> Result<Self, RiskError> {
        let version = format!("{}+{}+{}", params.version, factors.version, surfaces.version);
        let genetic = GeneticModel::new(params, &incidence)?;
        Ok(Self { incidence, mortality, genetic, factors, surfaces, version })
    }

    /// Loads parameter files from `dir`; any file that is absent falls back to the
    /// shipped default. Recognized names: `breast_incidence.csv`, `other_mortality.csv`,
    /// `segregation.json`, `factors.json`, `density_surface.json`.
    pub fn from_dir(dir: &Path) -> Result<Self, RiskError> {
        if !dir.is_dir() {
            return Err(RiskError::Input(format!("parameter directory {} does not exist", dir.display())));
        }
        let read = |name: &str| -> Result<Option<String>, RiskError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(source) => Err(RiskError::Io { path: path.display().to_string(), source }),
            }
        };
        let incidence = match read("breast_incidence.csv")? {
            Some(s) => load_rate_table(s.as_bytes(), RateCause::Breast)?,
            None => RateTable::default_incidence(),
        };
        let mortality = match read("other_mortality.csv")? {
            Some(s) => load_rate_table(s.as_bytes(), RateCause::OtherMortality)?,
            None => RateTable::default_mortality(),
        };
        let params = match read("segregation.json")? {
            Some(s) => SegregationParams::from_json(&s)?,
            None => SegregationParams::default(),
        };
        let factors = match read("factors.json")? {
            Some(s) => FactorTable::from_json(&s)?,
            None => FactorTable::default(),
        };
        let surfaces = match read("density_surface.json")? {
            Some(s) => DensitySurfaces::from_json(&s)?,
            None => DensitySurfaces::default(),
        };
        Self::new(incidence, mortality, params, factors, surfaces)
    }

    /// Same parameters with a different competing-mortality table.
    pub fn with_mortality(&self, mortality: RateTable) -> Self {
        Self { mortality, ..self.clone() }
    }

    pub fn incidence(&self) -> &RateTable {
        &self.incidence
    }

    pub fn mortality(&self) -> &RateTable {
        &self.mortality
    }

    pub fn genetic(&self) -> &GeneticModel {
        &self.genetic
    }

    pub fn factor_table(&self) -> &FactorTable {
        &self.factors
    }

    pub fn density_surfaces(&self) -> &DensitySurfaces {
        &self.surfaces
    }

    pub fn parameter_version(&self) -> &str {
        &self.version
    }

    pub fn posterior(&self, ped: Option<&Pedigree>, t0: f64) -> Result<GenotypePosterior, RiskError> {
        check_t0(t0)?;
        let ped = match ped {
            Some(p) => {
                if let Some(a) = p.proband().breast_age {
                    return Err(RiskError::Input(format!("proband already had breast cancer at {a}")));
                }
                p.with_proband_censored_at(t0)?
            }
            // No family data: condition on breast-cancer-free survival only.
            None => {
                let prior = GenotypePosterior { weights: *self.genetic.prior(), as_of_age: 0.0 };
                return Ok(GenotypePosterior { weights: prior.updated_to(&self.genetic, t0), as_of_age: t0 });
            }
        };
        Ok(genotype_posterior(&ped, &self.genetic)?)
    }

    /// Year-averaged genetic hazard from `t0` to 85, breaking at whole ages.
    pub fn genetic_curve(&self, posterior: &GenotypePosterior, t0: f64) -> Result<PiecewiseHazard, RiskError> {
        check_t0(t0)?;
        let mut knots = vec![t0];
        let mut k = t0.floor() + 1.0;
        while k < MAX_AGE {
            knots.push(k);
            k += 1.0;
        }
        knots.push(MAX_AGE);
        let mut log_s = Vec::with_capacity(knots.len());
        for &x in &knots {
            log_s.push(genetic_survivor(posterior, &self.genetic, t0, x)?.ln());
        }
        let rates = knots
            .windows(2)
            .zip(log_s.windows(2))
            .map(|(k, s)| ((s[0] - s[1]) / (k[1] - k[0])).max(0.0))
            .collect();
        Ok(PiecewiseHazard::new(knots, rates).expect("whole-age grid is increasing"))
    }

    /// Breast cancer hazard for a woman assessed at `t0`, with the maximum rule resolved.
    pub fn subject_hazard(&self, ped: Option<&Pedigree>, profile: &RiskProfile, t0: f64) -> Result<SubjectHazard, RiskError> {
        let posterior = self.posterior(ped, t0)?;
        let combined = combined_relative_hazard(profile, FactorContext::from_profile(profile), &self.factors, &self.surfaces)?;
        let genetic = self.genetic_curve(&posterior, t0)?;
        let ten = (t0 + 10.0).min(MAX_AGE);
        let (breast, max_rule, applied) = if combined.max_rule_pending {
            let benign_only = self.incidence.hazard().restricted(t0, MAX_AGE).expect("t0 inside the table").scaled(combined.benign);
            let other = genetic.scaled(combined.other_factors);
            let h2 = self.mortality.hazard();
            let risk_benign = cumulative_incidence(&benign_only, h2, t0, ten);
            let risk_other = cumulative_incidence(&other, h2, t0, ten);
            let outcome = |selected| MaxRuleOutcome {
                benign_only_ten_year_risk: risk_benign,
                other_factors_ten_year_risk: risk_other,
                selected,
            };
            if risk_benign > risk_other {
                (benign_only, Some(outcome(MaxRuleBranch::BenignOnly)), combined.benign)
            } else {
                (other, Some(outcome(MaxRuleBranch::OtherFactors)), combined.other_factors)
            }
        } else {
            (genetic.scaled(combined.relative_hazard), None, combined.relative_hazard)
        };
        Ok(SubjectHazard { t0, posterior, combined, max_rule, applied, breast })
    }

    /// `P_x(t0, t)` for the given family and risk factors.
    pub fn absolute_risk(&self, ped: Option<&Pedigree>, profile: &RiskProfile, t0: f64, t: f64) -> Result<f64, RiskError> {
        if !(t >= t0 && t <= MAX_AGE) {
            return Err(RiskError::Input(format!("horizon age {t} must lie in [{t0}, {MAX_AGE}]")));
        }
        let h = self.subject_hazard(ped, profile, t0)?;
        Ok(cumulative_incidence(&h.breast, self.mortality.hazard(), t0, t))
    }

    pub fn assess_request(&self, req: &AssessRequest) -> Result<RiskAssessment, RiskError> {
        let ped = req.subject().pedigree()?;
        self.assess(ped.as_ref(), &req.profile, req.age, &req.horizons)
    }

    /// Full assessment at current age `t0`, with risks at `t0 + years` for each horizon.
    pub fn assess(
        &self,
        ped: Option<&Pedigree>,
        profile: &RiskProfile,
        t0: f64,
        horizons: &[f64],
    ) -> Result<RiskAssessment, RiskError> {
        for &y in horizons {
            if !(y > 0.0 && y.is_finite()) {
                return Err(RiskError::Input(format!("horizon {y} must be a positive number of years")));
            }
        }
        let h = self.subject_hazard(ped, profile, t0)?;
        let h2 = self.mortality.hazard();
        let ten_year_risk = cumulative_incidence(&h.breast, h2, t0, (t0 + 10.0).min(MAX_AGE));

        let mut curve_ages = vec![t0];
        let mut k = t0.floor() + 1.0;
        while k <= MAX_AGE {
            curve_ages.push(k);
            k += 1.0;
        }
        let curve = cumulative_incidence_path(&h.breast, h2, t0, &curve_ages);
        let lifetime_risk = *curve.last().unwrap();
        let risk_curve = curve_ages.iter().zip(&curve).map(|(&age, &risk)| RiskPoint { age, risk }).collect();
        let horizons = horizons
            .iter()
            .map(|&years| {
                let age = (t0 + years).min(MAX_AGE);
                HorizonRisk { years, age, risk: cumulative_incidence(&h.breast, h2, t0, age) }
            })
            .collect();
        let knots = h.breast.knots();
        let hazard_curve = knots
            .windows(2)
            .map(|w| HazardSegment { from: w[0], to: w[1], breast: h.breast.rate(w[0]), other_mortality: h2.rate(w[0]) })
            .collect();
        Ok(RiskAssessment {
            schema: ASSESSMENT_SCHEMA.to_string(),
            parameter_version: self.version.clone(),
            t0,
            ten_year_risk,
            lifetime_risk,
            risk_category: RiskCategory::from_risk(ten_year_risk),
            horizons,
            genotype_posterior: PosteriorReport::from(&h.posterior),
            relative_hazard: RelativeHazardReport {
                applied: h.applied,
                other_factors: h.combined.other_factors,
                benign: h.combined.benign,
                max_rule: h.max_rule,
                audit: h.combined.audit,
            },
            hazard_curve,
            risk_curve,
        })
    }
}

fn check_t0(t0: f64) -> Result<(), RiskError> {
    if !(MIN_AGE..MAX_AGE).contains(&t0) {
        return Err(RiskError::Input(format!("assessment age {t0} must lie in [{MIN_AGE}, {MAX_AGE})")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::{BenignDisease, HrtKind, HrtUse};
    use crate::pedigree::{BrcaTest, Sex};
    use crate::rates::RateBand;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn zero_mortality() -> RateTable {
        RateTable::new(RateCause::OtherMortality, vec![RateBand { age_lo: 20.0, age_hi: 85.0, rate: 0.0 }]).unwrap()
    }

    #[test]
    fn population_identity_without_mortality() {
        let m = RiskModel::default().with_mortality(zero_mortality());
        let neutral = RiskProfile::default();
        let inc = m.incidence().clone();
        for t0 in [20.0, 35.0, 47.0] {
            let a = m.assess(None, &neutral, t0, &[]).unwrap();
            for p in &a.risk_curve {
                let want = 1.0 - (-inc.cumulative_between(t0, p.age).unwrap()).exp();
                assert!((p.risk - want).abs() < 1e-10, "t0 {t0}, age {}: {} vs {want}", p.age, p.risk);
            }
        }
    }

    #[test]
    fn neutral_assessment_matches_population_cif() {
        let m = RiskModel::default();
        let a = m.assess(None, &RiskProfile::default(), 40.0, &[]).unwrap();
        let pop = cumulative_incidence(m.incidence().hazard(), m.mortality().hazard(), 40.0, 50.0);
        assert!((a.ten_year_risk - pop).abs() < 1e-6, "{} vs {pop}", a.ten_year_risk);
    }

    #[test]
    fn prior_average_matches_population_cif() {
        // With no family data the posterior is the genotype prior updated by survival.
        let m = RiskModel::default();
        let h2 = m.mortality().hazard();
        for t0 in [20.0, 33.5, 45.0, 70.0] {
            let a = m.assess(None, &RiskProfile::default(), t0, &[]).unwrap();
            for p in &a.risk_curve {
                let pop = cumulative_incidence(m.incidence().hazard(), h2, t0, p.age);
                assert!((p.risk - pop).abs() < 1e-6, "t0 {t0} age {}: {} vs {pop}", p.age, p.risk);
            }
        }
    }

    #[test]
    fn categories() {
        assert_eq!(RiskCategory::from_risk(0.09), RiskCategory::AtLeast8);
        assert_eq!(RiskCategory::from_risk(0.08), RiskCategory::AtLeast8);
        assert_eq!(RiskCategory::from_risk(0.0199), RiskCategory::Below2);
        assert_eq!(RiskCategory::from_risk(0.02), RiskCategory::From2To3);
        assert_eq!(RiskCategory::from_risk(0.049), RiskCategory::From3To5);
        assert_eq!(RiskCategory::from_risk(0.05), RiskCategory::From5To8);
    }

    #[test]
    fn proportional_hazards_and_monotone_risk() {
        let m = RiskModel::default();
        let base = m.subject_hazard(None, &RiskProfile::default(), 45.0).unwrap();
        let hrt = RiskProfile {
            hrt: Some(HrtUse::Current { kind: HrtKind::Combined, years_since_start: 5.0 }),
            ..Default::default()
        };
        let doubled = m.subject_hazard(None, &hrt, 45.0).unwrap();
        for t in [45.0, 50.5, 70.2] {
            assert_relative_eq!(doubled.breast.rate(t), 2.0 * base.breast.rate(t), max_relative = 1e-14);
        }
        let a = m.assess(None, &RiskProfile::default(), 45.0, &[]).unwrap();
        let b = m.assess(None, &hrt, 45.0, &[]).unwrap();
        assert!(b.ten_year_risk > a.ten_year_risk);
    }

    #[test]
    fn max_rule_picks_larger_branch() {
        let m = RiskModel::default();
        let ah = RiskProfile { benign_disease: Some(BenignDisease::AtypicalHyperplasia), ..Default::default() };
        let h = m.subject_hazard(None, &ah, 50.0).unwrap();
        let outcome = h.max_rule.clone().unwrap();
        // Population x 4 beats a neutral family history.
        assert_eq!(outcome.selected, MaxRuleBranch::BenignOnly);
        let benign_only = m.incidence().hazard().restricted(50.0, 85.0).unwrap().scaled(4.0);
        let want = cumulative_incidence(&benign_only, m.mortality().hazard(), 50.0, 60.0);
        assert_relative_eq!(outcome.benign_only_ten_year_risk, want, max_relative = 1e-14);
        let genetic = m.genetic_curve(&h.posterior, 50.0).unwrap();
        let other = cumulative_incidence(&genetic, m.mortality().hazard(), 50.0, 60.0);
        assert_relative_eq!(outcome.other_factors_ten_year_risk, other, max_relative = 1e-14);
        assert!(outcome.benign_only_ten_year_risk > outcome.other_factors_ten_year_risk);

        // A BRCA1 carrier keeps her genetic risk.
        let mut p = PedigreeMember::new("p", Sex::Female, 35.0);
        p.brca_test = BrcaTest::Brca1;
        let ped = Pedigree::new(vec![p]).unwrap();
        let h = m.subject_hazard(Some(&ped), &ah, 35.0).unwrap();
        assert_eq!(h.max_rule.unwrap().selected, MaxRuleBranch::OtherFactors);
    }

    #[test]
    fn closed_form_constant_case() {
        let h1 = PiecewiseHazard::constant(20.0, 85.0, 0.01).unwrap();
        let h2 = PiecewiseHazard::constant(20.0, 85.0, 0.02).unwrap();
        let p = cumulative_incidence(&h1, &h2, 40.0, 50.0);
        assert!((p - (1.0 - (-0.3f64).exp()) / 3.0).abs() < 1e-15);
        assert_eq!(cumulative_incidence(&h1, &h2, 40.0, 40.0), 0.0);
        let none = PiecewiseHazard::zero(20.0, 85.0);
        assert_relative_eq!(cumulative_incidence(&h1, &none, 40.0, 50.0), 1.0 - (-0.1f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn assessment_fields_are_consistent() {
        let m = RiskModel::default();
        let a = m.assess(None, &RiskProfile::default(), 47.0, &[5.0, 10.0, 50.0]).unwrap();
        assert_eq!(a.schema, ASSESSMENT_SCHEMA);
        assert!(a.ten_year_risk <= a.lifetime_risk);
        assert_eq!(a.risk_category, RiskCategory::from_risk(a.ten_year_risk));
        assert_eq!(a.horizons[1].risk, a.ten_year_risk);
        assert_eq!(a.horizons[2].age, 85.0);
        assert_eq!(a.risk_curve[0], RiskPoint { age: 47.0, risk: 0.0 });
        assert!(a.risk_curve.windows(2).all(|w| w[1].risk >= w[0].risk));
        assert_eq!(a.risk_curve.last().unwrap().risk, a.lifetime_risk);
        let json = assessment_json(&a);
        let back: RiskAssessment = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert!(m.assess(None, &RiskProfile::default(), 85.0, &[]).is_err());
        assert!(m.assess(None, &RiskProfile::default(), 40.0, &[-1.0]).is_err());
    }

    /// Midpoint rule on the CIF integrand, split at every hazard knot so the integrand
    /// is smooth on each piece.
    fn quadrature(h1: &PiecewiseHazard, h2: &PiecewiseHazard, a: f64, b: f64, step: f64) -> f64 {
        let mut cuts: Vec<f64> = h1.knots().iter().chain(h2.knots()).copied().filter(|&k| k > a && k < b).collect();
        cuts.extend([a, b]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (r1, r2) = (h1.rate(lo), h2.rate(lo));
            let start = h1.cumulative(a, lo) + h2.cumulative(a, lo);
            let n = ((hi - lo) / step).ceil().max(1.0) as usize;
            let dt = (hi - lo) / n as f64;
            for i in 0..n {
                let u = (i as f64 + 0.5) * dt;
                total += r1 * (-(start + (r1 + r2) * u)).exp() * dt;
            }
        }
        total
    }

    fn arb_profile() -> impl Strategy<Value = RiskProfile> {
        let benign = prop::sample::select(vec![
            None,
            Some(BenignDisease::NonProliferative),
            Some(BenignDisease::ProliferativeUsual),
            Some(BenignDisease::AtypicalHyperplasia),
            Some(BenignDisease::Lcis),
        ]);
        (
            prop::option::of(9.0f64..18.0),
            prop::option::of(1.45f64..1.85),
            prop::option::of(17.0f64..40.0),
            prop::option::of(0u8..4),
            benign,
        )
            .prop_map(|(menarche_age, height, bmi, hrt, benign_disease)| RiskProfile {
                menarche_age,
                height,
                bmi,
                hrt: hrt.map(|y| HrtUse::Current { kind: HrtKind::Combined, years_since_start: y as f64 }),
                benign_disease,
                ..Default::default()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn inequality_chain_and_quadrature(profile in arb_profile(), t0 in 20.0f64..80.0, span in 0.5f64..40.0) {
            let m = RiskModel::default();
            let t = (t0 + span).min(85.0);
            let h = m.subject_hazard(None, &profile, t0).unwrap();
            let p = cumulative_incidence(&h.breast, m.mortality().hazard(), t0, t);
            let big_h = h.breast.cumulative(t0, t);
            prop_assert!(p <= 1.0 - (-big_h).exp() + 1e-12);
            prop_assert!(1.0 - (-big_h).exp() <= big_h + 1e-12);
            let q = quadrature(&h.breast, m.mortality().hazard(), t0, t, 1e-4);
            prop_assert!((p - q).abs() < 1e-8, "{} vs {}", p, q);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn chain_rule(t0 in 20.0f64..60.0, d1 in 0.5f64..10.0, d2 in 0.5f64..15.0) {
            let m = RiskModel::default();
            let h = m.subject_hazard(None, &RiskProfile::default(), t0).unwrap();
            let h2 = m.mortality().hazard();
            let (t1, t2) = (t0 + d1, t0 + d1 + d2);
            let whole = cumulative_incidence(&h.breast, h2, t0, t2);
            let surv = (-(h.breast.cumulative(t0, t1) + h2.cumulative(t0, t1))).exp();
            let parts = cumulative_incidence(&h.breast, h2, t0, t1) + surv * cumulative_incidence(&h.breast, h2, t1, t2);
            prop_assert!((whole - parts).abs() < 1e-10);
        }
    }
}
