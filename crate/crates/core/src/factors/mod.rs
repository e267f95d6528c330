//! Relative hazard `r(x2)` from personal, hormonal and lifestyle factors, breast
//! density and SNPs.
//!
//! Each factor contributes `hr / mean_risk`; unknown factors contribute exactly 1.
//! Factors combine multiplicatively. Atypical hyperplasia and LCIS are handled by a
//! maximum rule downstream, so [`combined_relative_hazard`] reports them separately.

mod density;
mod table;

use serde::{Deserialize, Serialize};

pub use density::{density_residual, DensitySurface, DensitySurfaces};
pub use table::{
    Band, BandedFactor, BenignFactor, DensityConfig, FactorTable, HeightFactor, HrtFactor, MenopauseFactor,
    ParityFactor,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("invalid factor table: {0}")]
    InvalidTable(String),
    #[error("invalid profile field `{field}`: {message}")]
    InvalidProfile { field: String, message: String },
    #[error("density surface does not cover age {age}, BMI {bmi}")]
    SurfaceOutOfRange { age: f64, bmi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", deny_unknown_fields)]
pub enum Parity {
    Nulliparous,
    Parous { first_birth_age: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", deny_unknown_fields)]
pub enum Menopause {
    Pre,
    Post { age: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HrtKind {
    EstrogenOnly,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", deny_unknown_fields)]
pub enum HrtUse {
    Never,
    Current { kind: HrtKind, years_since_start: f64 },
    Past { kind: HrtKind, years_since_stop: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenignDisease {
    #[default]
    NoneKnown,
    NonProliferative,
    UnknownBiopsy,
    ProliferativeUsual,
    AtypicalHyperplasia,
    Lcis,
}

impl BenignDisease {
    /// Atypical hyperplasia and LCIS are handled by the maximum rule.
    pub fn uses_max_rule(self) -> bool {
        matches!(self, BenignDisease::AtypicalHyperplasia | BenignDisease::Lcis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityInput {
    VisualPercent { value: f64, age_at_mammogram: f64, #[serde(default)] bmi_at_mammogram: Option<f64> },
    VolumetricPercent { value: f64, age_at_mammogram: f64, #[serde(default)] bmi_at_mammogram: Option<f64> },
    Birads { category: u8, age_at_mammogram: f64 },
}

/// One SNP: risk-allele frequency, per-allele odds ratio and the number of risk alleles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snp {
    pub freq: f64,
    pub odds_ratio: f64,
    #[serde(default)]
    pub genotype: Option<u8>,
}

/// Non-familial risk factors. `None` (JSON null or absent) means unknown.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskProfile {
    #[serde(default)]
    pub menarche_age: Option<f64>,
    #[serde(default)]
    pub parity: Option<Parity>,
    #[serde(default)]
    pub menopause: Option<Menopause>,
    /// Metres.
    #[serde(default)]
    pub height: Option<f64>,
    /// kg/m².
    #[serde(default)]
    pub bmi: Option<f64>,
    #[serde(default)]
    pub hrt: Option<HrtUse>,
    #[serde(default)]
    pub benign_disease: Option<BenignDisease>,
    #[serde(default)]
    pub density: Option<DensityInput>,
    #[serde(default)]
    pub snps: Vec<Snp>,
}

impl RiskProfile {
    pub fn validate(&self) -> Result<(), FactorError> {
        let bad = |field: &str, message: String| Err(FactorError::InvalidProfile { field: field.to_string(), message });
        let in_range = |x: f64, lo: f64, hi: f64| x.is_finite() && x >= lo && x <= hi;
        if let Some(a) = self.menarche_age {
            if !in_range(a, 5.0, 25.0) {
                return bad("menarche_age", format!("{a} outside 5-25"));
            }
        }
        let first_birth = match self.parity {
            Some(Parity::Parous { first_birth_age }) => {
                if !in_range(first_birth_age, 10.0, 60.0) {
                    return bad("parity.first_birth_age", format!("{first_birth_age} outside 10-60"));
                }
                Some(first_birth_age)
            }
            _ => None,
        };
        let menopause_age = match self.menopause {
            Some(Menopause::Post { age }) => {
                if !in_range(age, 20.0, 70.0) {
                    return bad("menopause.age", format!("{age} outside 20-70"));
                }
                Some(age)
            }
            _ => None,
        };
        if let (Some(m), Some(b)) = (self.menarche_age, first_birth) {
            if b <= m {
                return bad("parity.first_birth_age", "first birth must follow menarche".to_string());
            }
        }
        if let (Some(m), Some(p)) = (self.menarche_age, menopause_age) {
            if p <= m {
                return bad("menopause.age", "menopause must follow menarche".to_string());
            }
        }
        if let Some(h) = self.height {
            if !in_range(h, 1.0, 2.3) {
                return bad("height", format!("{h} m outside 1.0-2.3"));
            }
        }
        if let Some(b) = self.bmi {
            if !in_range(b, 10.0, 80.0) {
                return bad("bmi", format!("{b} outside 10-80"));
            }
        }
        match self.hrt {
            Some(HrtUse::Current { years_since_start: y, .. }) | Some(HrtUse::Past { years_since_stop: y, .. })
                if !(y.is_finite() && y >= 0.0) =>
            {
                return bad("hrt", format!("years {y} must be non-negative"));
            }
            _ => {}
        }
        match self.density {
            Some(DensityInput::VisualPercent { value, age_at_mammogram, bmi_at_mammogram })
            | Some(DensityInput::VolumetricPercent { value, age_at_mammogram, bmi_at_mammogram }) => {
                if !in_range(value, 0.0, 100.0) {
                    return bad("density.value", format!("{value} outside 0-100"));
                }
                if !in_range(age_at_mammogram, 18.0, 100.0) {
                    return bad("density.age_at_mammogram", format!("{age_at_mammogram} outside 18-100"));
                }
                if let Some(b) = bmi_at_mammogram {
                    if !in_range(b, 10.0, 80.0) {
                        return bad("density.bmi_at_mammogram", format!("{b} outside 10-80"));
                    }
                }
            }
            Some(DensityInput::Birads { category, age_at_mammogram }) => {
                if !(1..=4).contains(&category) {
                    return bad("density.category", format!("BI-RADS category {category} outside 1-4"));
                }
                if !in_range(age_at_mammogram, 18.0, 100.0) {
                    return bad("density.age_at_mammogram", format!("{age_at_mammogram} outside 18-100"));
                }
            }
            None => {}
        }
        for (i, s) in self.snps.iter().enumerate() {
            if !(s.freq > 0.0 && s.freq < 1.0) {
                return bad(&format!("snps[{i}].freq"), format!("{} outside (0, 1)", s.freq));
            }
            if !(s.odds_ratio > 0.0 && s.odds_ratio.is_finite()) {
                return bad(&format!("snps[{i}].odds_ratio"), format!("{} must be positive", s.odds_ratio));
            }
            if s.genotype.is_some_and(|g| g > 2) {
                return bad(&format!("snps[{i}].genotype"), "genotype must be 0, 1 or 2".to_string());
            }
        }
        Ok(())
    }

    pub fn postmenopausal(&self) -> Option<bool> {
        match self.menopause {
            Some(Menopause::Pre) => Some(false),
            Some(Menopause::Post { .. }) => Some(true),
            None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorId {
    Menarche,
    Height,
    Bmi,
    Parity,
    Menopause,
    Hrt,
    BenignDisease,
    Density,
    Snps,
}

impl FactorId {
    pub const ALL: [FactorId; 9] = [
        FactorId::Menarche,
        FactorId::Height,
        FactorId::Bmi,
        FactorId::Parity,
        FactorId::Menopause,
        FactorId::Hrt,
        FactorId::BenignDisease,
        FactorId::Density,
        FactorId::Snps,
    ];
}

/// Evaluation context: only menopausal status matters for the current table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorContext {
    pub postmenopausal: Option<bool>,
}

impl FactorContext {
    pub fn from_profile(profile: &RiskProfile) -> Self {
        Self { postmenopausal: profile.postmenopausal() }
    }
}

/// One line of the audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorContribution {
    pub factor: FactorId,
    /// Raw hazard ratio before normalization; 1 when unknown.
    pub hazard_ratio: f64,
    pub mean_risk: f64,
    /// `hazard_ratio / mean_risk`, exactly 1 when the factor is unknown.
    pub multiplier: f64,
    pub known: bool,
    /// False when the multiplier is held back for the atypia/LCIS maximum rule.
    pub applied: bool,
}

fn contribution(factor: FactorId, known: Option<(f64, f64)>) -> FactorContribution {
    match known {
        Some((hr, mean)) => {
            FactorContribution { factor, hazard_ratio: hr, mean_risk: mean, multiplier: hr / mean, known: true, applied: true }
        }
        None => FactorContribution { factor, hazard_ratio: 1.0, mean_risk: 1.0, multiplier: 1.0, known: false, applied: true },
    }
}

/// Normalized relative hazard of a single factor.
pub fn factor_relative_hazard(
    profile: &RiskProfile,
    factor: FactorId,
    ctx: FactorContext,
    table: &FactorTable,
    surfaces: &DensitySurfaces,
) -> Result<FactorContribution, FactorError> {
    let known = match factor {
        FactorId::Menarche => profile.menarche_age.map(|a| (table.menarche_hr(a), table.menarche.mean)),
        FactorId::Height => profile.height.map(|h| (table.height.lookup(h), table.height.mean)),
        FactorId::Bmi => match (profile.bmi, ctx.postmenopausal) {
            (Some(b), Some(true)) => Some((table.bmi.lookup(b), table.bmi.mean)),
            _ => None,
        },
        FactorId::Parity => profile.parity.map(|p| {
            let first = match p {
                Parity::Nulliparous => None,
                Parity::Parous { first_birth_age } => Some(first_birth_age),
            };
            (table.parity_hr(first), table.parity.mean)
        }),
        FactorId::Menopause => match profile.menopause {
            Some(Menopause::Post { age }) => Some((table.menopause.lookup(age), table.menopause.mean)),
            _ => None,
        },
        FactorId::Hrt => profile.hrt.map(|h| (hrt_relative_hazard(&h, profile.bmi, table), table.hrt.mean)),
        FactorId::BenignDisease => profile.benign_disease.map(|b| (benign_relative_hazard(b, table), table.benign.mean)),
        FactorId::Density => match profile.density {
            Some(d) => density_relative_hazard(&d, profile.bmi, table, surfaces)?.map(|hr| (hr, table.density.mean)),
            None => None,
        },
        FactorId::Snps => {
            if profile.snps.iter().any(|s| s.genotype.is_some()) {
                Some((polygenic_relative_risk(&profile.snps), table.snp_mean))
            } else {
                None
            }
        }
    };
    Ok(contribution(factor, known))
}

/// Raw hormone-therapy ratio (before normalization).
pub fn hrt_relative_hazard(hrt: &HrtUse, bmi: Option<f64>, table: &FactorTable) -> f64 {
    table.hrt_hr(hrt, bmi)
}

pub fn benign_relative_hazard(state: BenignDisease, table: &FactorTable) -> f64 {
    table.benign_hr(state)
}

/// `per_sd_hr ^ residual`, or None when density does not apply.
pub fn density_relative_hazard(
    input: &DensityInput,
    fallback_bmi: Option<f64>,
    table: &FactorTable,
    surfaces: &DensitySurfaces,
) -> Result<Option<f64>, FactorError> {
    Ok(density_residual(input, fallback_bmi, &table.density, surfaces)?.map(|z| table.density.per_sd_hr.powf(z)))
}

/// Product over SNPs of genotype odds ratios `(1, or, or²)` divided by their
/// Hardy-Weinberg mean. Missing genotypes contribute 1.
pub fn polygenic_relative_risk(snps: &[Snp]) -> f64 {
    snps.iter()
        .filter_map(|s| s.genotype.map(|g| snp_relative_risk(s.freq, s.odds_ratio, g)))
        .product()
}

pub fn snp_relative_risk(p: f64, or: f64, genotype: u8) -> f64 {
    let mean = (1.0 - p) * (1.0 - p) + 2.0 * p * (1.0 - p) * or + p * p * or * or;
    or.powi(genotype as i32) / mean
}

/// Result of combining all factors for one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedHazard {
    /// Product of all applied multipliers.
    pub relative_hazard: f64,
    /// Product of every multiplier except benign disease.
    pub other_factors: f64,
    /// Normalized benign-disease multiplier.
    pub benign: f64,
    /// Set for atypical hyperplasia or LCIS: the benign multiplier was not applied and
    /// the risk module must choose between the two branches.
    pub max_rule_pending: bool,
    pub audit: Vec<FactorContribution>,
}

pub fn combined_relative_hazard(
    profile: &RiskProfile,
    ctx: FactorContext,
    table: &FactorTable,
    surfaces: &DensitySurfaces,
) -> Result<CombinedHazard, FactorError> {
    profile.validate()?;
    let mut audit = Vec::with_capacity(FactorId::ALL.len());
    for id in FactorId::ALL {
        audit.push(factor_relative_hazard(profile, id, ctx, table, surfaces)?);
    }
    let max_rule = profile.benign_disease.is_some_and(BenignDisease::uses_max_rule);
    let mut other = 1.0;
    let mut benign = 1.0;
    for c in audit.iter_mut() {
        if c.factor == FactorId::BenignDisease {
            benign = c.multiplier;
            c.applied = !max_rule;
        } else {
            other *= c.multiplier;
        }
    }
    let relative_hazard = audit.iter().filter(|c| c.applied).map(|c| c.multiplier).product();
    Ok(CombinedHazard { relative_hazard, other_factors: other, benign, max_rule_pending: max_rule, audit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tables() -> (FactorTable, DensitySurfaces) {
        (FactorTable::default(), DensitySurfaces::default())
    }

    fn one(profile: &RiskProfile, id: FactorId) -> f64 {
        let (t, s) = tables();
        factor_relative_hazard(profile, id, FactorContext::from_profile(profile), &t, &s).unwrap().multiplier
    }

    #[test]
    fn table_lookups() {
        let p = RiskProfile { menarche_age: Some(16.0), ..Default::default() };
        assert_eq!(one(&p, FactorId::Menarche), 0.88);
        let p = RiskProfile { height: Some(1.65), ..Default::default() };
        assert_relative_eq!(one(&p, FactorId::Height), 1.15 / 1.1, max_relative = 1e-14);
        let p = RiskProfile { bmi: Some(31.0), ..Default::default() };
        assert_eq!(one(&p, FactorId::Bmi), 1.0);
        let post = RiskProfile { bmi: Some(26.0), menopause: Some(Menopause::Post { age: 52.0 }), ..Default::default() };
        assert_relative_eq!(one(&post, FactorId::Bmi), 1.26 / 1.24, max_relative = 1e-14);
        let pre = RiskProfile { bmi: Some(26.0), menopause: Some(Menopause::Pre), ..Default::default() };
        assert_eq!(one(&pre, FactorId::Bmi), 1.0);
        assert_relative_eq!(one(&post, FactorId::Menopause), 1.14 / 1.08, max_relative = 1e-14);
        let early = RiskProfile { menopause: Some(Menopause::Post { age: 41.0 }), ..Default::default() };
        assert_relative_eq!(one(&early, FactorId::Menopause), 1.0 / 1.14 / 1.08, max_relative = 1e-14);
        let p = RiskProfile { parity: Some(Parity::Parous { first_birth_age: 19.0 }), ..Default::default() };
        assert_eq!(one(&p, FactorId::Parity), 0.74);
        let p = RiskProfile { parity: Some(Parity::Nulliparous), ..Default::default() };
        assert_eq!(one(&p, FactorId::Parity), 1.0);
    }

    #[test]
    fn menarche_categories() {
        let (t, _) = tables();
        let want = [(10.0, 1.16), (11.0, 1.07), (12.0, 1.07), (13.0, 1.0), (14.0, 0.98), (15.0, 0.93), (16.0, 0.88), (17.0, 0.81), (19.0, 0.81)];
        for (age, hr) in want {
            assert_eq!(t.menarche_hr(age), hr, "age {age}");
        }
    }

    #[test]
    fn hrt_schedule() {
        let (t, _) = tables();
        let cur = |kind, y| HrtUse::Current { kind, years_since_start: y };
        let past = |kind, y| HrtUse::Past { kind, years_since_stop: y };
        assert_eq!(hrt_relative_hazard(&cur(HrtKind::Combined, 3.0), None, &t), 2.0);
        assert_eq!(hrt_relative_hazard(&cur(HrtKind::Combined, 2.0), None, &t), 1.5);
        assert_eq!(hrt_relative_hazard(&cur(HrtKind::Combined, 0.5), None, &t), 1.0);
        assert_eq!(hrt_relative_hazard(&cur(HrtKind::EstrogenOnly, 10.0), None, &t), 1.4);
        assert_relative_eq!(hrt_relative_hazard(&past(HrtKind::EstrogenOnly, 1.0), None, &t), 1.0 + 0.4 * 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(hrt_relative_hazard(&past(HrtKind::Combined, 2.0), None, &t), 1.0 + 1.0 / 3.0, max_relative = 1e-14);
        assert_eq!(hrt_relative_hazard(&past(HrtKind::Combined, 3.0), None, &t), 1.0);
        assert_eq!(hrt_relative_hazard(&HrtUse::Never, None, &t), 1.0);
        // Obese: excess reduced by 10%; lean: increased by 10%.
        assert_relative_eq!(hrt_relative_hazard(&cur(HrtKind::Combined, 5.0), Some(32.0), &t), 1.9, max_relative = 1e-14);
        assert_relative_eq!(hrt_relative_hazard(&cur(HrtKind::Combined, 5.0), Some(22.0), &t), 2.1, max_relative = 1e-14);
        assert_eq!(hrt_relative_hazard(&cur(HrtKind::Combined, 5.0), Some(27.0), &t), 2.0);
    }

    #[test]
    fn benign_values() {
        let (t, _) = tables();
        assert_eq!(benign_relative_hazard(BenignDisease::NonProliferative, &t), 1.0);
        assert_eq!(benign_relative_hazard(BenignDisease::UnknownBiopsy, &t), 1.3);
        assert_eq!(benign_relative_hazard(BenignDisease::ProliferativeUsual, &t), 2.0);
        assert_eq!(benign_relative_hazard(BenignDisease::AtypicalHyperplasia, &t), 4.0);
        assert_eq!(benign_relative_hazard(BenignDisease::Lcis, &t), 8.0);
    }

    #[test]
    fn density_examples() {
        let (t, s) = tables();
        let expected = s.volumetric_percent.expected_at(50.0, 25.0).unwrap();
        let sd = s.volumetric_percent.sd;
        let at = |value: f64, age: f64| {
            let d = DensityInput::VolumetricPercent { value, age_at_mammogram: age, bmi_at_mammogram: Some(25.0) };
            density_relative_hazard(&d, None, &t, &s).unwrap()
        };
        assert_eq!(at(expected, 50.0), Some(1.0));
        assert_relative_eq!(at(expected + sd, 50.0).unwrap(), 1.4, max_relative = 1e-12);
        assert_relative_eq!(at(expected - 2.0 * sd, 50.0).unwrap(), 1.0 / 1.96, max_relative = 1e-12);
        assert_eq!(at(expected + sd, 38.0), None);
        let birads = DensityInput::Birads { category: 4, age_at_mammogram: 45.0 };
        assert_relative_eq!(density_relative_hazard(&birads, None, &t, &s).unwrap().unwrap(), 1.4f64.powf(1.4), max_relative = 1e-12);
        let no_bmi = DensityInput::VisualPercent { value: 30.0, age_at_mammogram: 50.0, bmi_at_mammogram: None };
        assert_eq!(density_relative_hazard(&no_bmi, None, &t, &s).unwrap(), None);
        assert!(density_relative_hazard(&no_bmi, Some(27.0), &t, &s).unwrap().is_some());
    }

    #[test]
    fn snp_examples() {
        assert_eq!(polygenic_relative_risk(&[]), 1.0);
        for g in 0..=2 {
            assert_relative_eq!(snp_relative_risk(0.3, 1.0, g), 1.0, max_relative = 1e-15);
        }
        assert_relative_eq!(snp_relative_risk(0.5, 2.0, 2), 4.0 / 2.25, max_relative = 1e-15);
        let missing = Snp { freq: 0.4, odds_ratio: 1.3, genotype: None };
        assert_eq!(polygenic_relative_risk(&[missing]), 1.0);
    }

    #[test]
    fn combined_examples() {
        let (t, s) = tables();
        let empty = RiskProfile::default();
        let c = combined_relative_hazard(&empty, FactorContext::from_profile(&empty), &t, &s).unwrap();
        assert_eq!(c.relative_hazard, 1.0);
        assert!(c.audit.iter().all(|a| !a.known));

        let p = RiskProfile { menarche_age: Some(16.0), height: Some(1.65), ..Default::default() };
        let c = combined_relative_hazard(&p, FactorContext::from_profile(&p), &t, &s).unwrap();
        assert_relative_eq!(c.relative_hazard, 0.88 * (1.15 / 1.1), max_relative = 1e-14);

        let ah = RiskProfile { benign_disease: Some(BenignDisease::AtypicalHyperplasia), ..p.clone() };
        let c = combined_relative_hazard(&ah, FactorContext::from_profile(&ah), &t, &s).unwrap();
        assert!(c.max_rule_pending);
        assert_eq!(c.benign, 4.0);
        assert_relative_eq!(c.other_factors, 0.88 * (1.15 / 1.1), max_relative = 1e-14);
        assert_relative_eq!(c.relative_hazard, c.other_factors, max_relative = 1e-15);
    }

    #[test]
    fn profile_validation() {
        let bad = RiskProfile { bmi: Some(5.0), ..Default::default() };
        assert!(matches!(bad.validate(), Err(FactorError::InvalidProfile { ref field, .. }) if field == "bmi"));
        let order = RiskProfile {
            menarche_age: Some(14.0),
            parity: Some(Parity::Parous { first_birth_age: 13.0 }),
            ..Default::default()
        };
        assert!(order.validate().is_err());
        let json = r#"{"menarche_age": 12, "hrt": {"status": "current", "kind": "combined", "years_since_start": 3}}"#;
        let p: RiskProfile = serde_json::from_str(json).unwrap();
        assert_eq!(p.hrt, Some(HrtUse::Current { kind: HrtKind::Combined, years_since_start: 3.0 }));
        assert!(serde_json::from_str::<RiskProfile>(r#"{"weight": 60}"#).is_err());
    }

    fn arb_profile() -> impl Strategy<Value = RiskProfile> {
        (
            prop::option::of(8.0f64..20.0),
            prop::option::of(prop_oneof![Just(Parity::Nulliparous), (21.0f64..45.0).prop_map(|a| Parity::Parous { first_birth_age: a })]),
            prop::option::of(prop_oneof![Just(Menopause::Pre), (40.0f64..60.0).prop_map(|a| Menopause::Post { age: a })]),
            prop::option::of(1.4f64..1.9),
            prop::option::of(16.0f64..40.0),
            prop::option::of(prop_oneof![
                Just(HrtUse::Never),
                (0.0f64..10.0).prop_map(|y| HrtUse::Current { kind: HrtKind::Combined, years_since_start: y }),
                (0.0f64..5.0).prop_map(|y| HrtUse::Past { kind: HrtKind::EstrogenOnly, years_since_stop: y }),
            ]),
            prop::option::of(prop_oneof![
                Just(BenignDisease::NoneKnown),
                Just(BenignDisease::UnknownBiopsy),
                Just(BenignDisease::ProliferativeUsual),
                Just(BenignDisease::AtypicalHyperplasia),
            ]),
            prop::option::of((0.0f64..60.0, 40.0f64..80.0).prop_map(|(v, a)| DensityInput::VolumetricPercent {
                value: v,
                age_at_mammogram: a,
                bmi_at_mammogram: None
            })),
            prop::collection::vec((0.01f64..0.99, 0.5f64..2.0, prop::option::of(0u8..3)), 0..5),
        )
            .prop_map(|(menarche_age, parity, menopause, height, bmi, hrt, benign_disease, density, snps)| RiskProfile {
                menarche_age,
                parity,
                menopause,
                height,
                bmi,
                hrt,
                benign_disease,
                density,
                snps: snps.into_iter().map(|(freq, odds_ratio, genotype)| Snp { freq, odds_ratio, genotype }).collect(),
            })
    }

    proptest! {
        #[test]
        fn hardy_weinberg_mean_is_one(p in 0.001f64..0.999, or in 0.05f64..20.0) {
            let hw = [(1.0 - p) * (1.0 - p), 2.0 * p * (1.0 - p), p * p];
            let mean: f64 = (0..3).map(|g| hw[g] * snp_relative_risk(p, or, g as u8)).sum();
            prop_assert!((mean - 1.0).abs() < 1e-12);
        }

        #[test]
        fn audit_product_reproduces_total(profile in arb_profile()) {
            let (t, s) = tables();
            let c = combined_relative_hazard(&profile, FactorContext::from_profile(&profile), &t, &s).unwrap();
            let prod: f64 = c.audit.iter().filter(|a| a.applied).map(|a| a.multiplier).product();
            prop_assert!((prod - c.relative_hazard).abs() <= 1e-12 * c.relative_hazard);
            prop_assert!(c.relative_hazard > 0.0 && c.relative_hazard.is_finite());
            for a in &c.audit {
                prop_assert!(a.multiplier > 0.0 && a.multiplier.is_finite());
            }
        }

        #[test]
        fn adding_a_factor_multiplies_by_its_ratio(profile in arb_profile(), menarche in 8.0f64..20.0) {
            let (t, s) = tables();
            let mut without = profile.clone();
            without.menarche_age = None;
            let mut with = profile;
            with.menarche_age = Some(menarche);
            if with.validate().is_ok() {
                let a = combined_relative_hazard(&without, FactorContext::from_profile(&without), &t, &s).unwrap();
                let b = combined_relative_hazard(&with, FactorContext::from_profile(&with), &t, &s).unwrap();
                prop_assert!((b.relative_hazard - a.relative_hazard * t.menarche_hr(menarche)).abs() < 1e-12 * b.relative_hazard);
            }
        }
    }
}
