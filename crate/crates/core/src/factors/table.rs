//! Hazard ratios and population mean-risk normalizers for the classic risk factors.

use serde::{Deserialize, Serialize};

use super::{BenignDisease, FactorError, HrtKind, HrtUse};

const DEFAULT_TABLE: &str = include_str!("../../data/factors.json");

/// Category `value < upper` (or the open top category when `upper` is null).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub upper: Option<f64>,
    pub hr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedFactor {
    pub mean: f64,
    pub bands: Vec<Band>,
}

impl BandedFactor {
    pub fn lookup(&self, value: f64) -> f64 {
        band_lookup(&self.bands, value)
    }
}

fn band_lookup(bands: &[Band], value: f64) -> f64 {
    bands.iter().find(|b| b.upper.is_none_or(|u| value < u)).map_or(1.0, |b| b.hr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightFactor {
    pub mean: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
    pub below_hr: f64,
    pub ramp_intercept: f64,
    pub ramp_slope: f64,
    pub above_hr: f64,
}

impl HeightFactor {
    pub fn lookup(&self, height: f64) -> f64 {
        if height < self.ramp_start {
            self.below_hr
        } else if height < self.ramp_end {
            self.ramp_intercept + self.ramp_slope * (height - self.ramp_start)
        } else {
            self.above_hr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityFactor {
    pub mean: f64,
    pub nulliparous_hr: f64,
    pub bands: Vec<Band>,
}

/// Hazard ratio `per_step_hr^k` where `k` counts `step_years` bands from the reference band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenopauseFactor {
    pub mean: f64,
    pub per_step_hr: f64,
    pub step_years: f64,
    pub reference_lo: f64,
}

impl MenopauseFactor {
    pub fn lookup(&self, age: f64) -> f64 {
        let steps = ((age - self.reference_lo) / self.step_years).floor();
        self.per_step_hr.powf(steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrtFactor {
    pub mean: f64,
    pub combined_max: f64,
    pub estrogen_only_max: f64,
    pub obese_bmi: f64,
    pub obese_excess_scale: f64,
    pub lean_bmi: f64,
    pub lean_excess_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenignFactor {
    pub mean: f64,
    pub non_proliferative: f64,
    pub unknown_biopsy: f64,
    pub proliferative_usual: f64,
    pub atypical_hyperplasia: f64,
    pub lcis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub mean: f64,
    pub per_sd_hr: f64,
    pub min_age: f64,
    /// Residual (in SD units) assigned to BI-RADS categories 1 to 4.
    pub birads_z: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorTable {
    pub version: String,
    pub menarche: BandedFactor,
    pub height: HeightFactor,
    pub bmi: BandedFactor,
    pub parity: ParityFactor,
    pub menopause: MenopauseFactor,
    pub hrt: HrtFactor,
    pub benign: BenignFactor,
    pub density: DensityConfig,
    pub snp_mean: f64,
}

impl FactorTable {
    pub fn from_json(text: &str) -> Result<Self, FactorError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let table: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| FactorError::InvalidTable(format!("{}: {}", e.path(), e.inner())))?;
        table.validate()?;
        Ok(table)
    }

    /// Every ratio and normalizer must be positive and finite.
    pub fn validate(&self) -> Result<(), FactorError> {
        let mut values = vec![
            self.menarche.mean,
            self.height.mean,
            self.height.below_hr,
            self.height.ramp_intercept,
            self.height.above_hr,
            self.bmi.mean,
            self.parity.mean,
            self.parity.nulliparous_hr,
            self.menopause.mean,
            self.menopause.per_step_hr,
            self.menopause.step_years,
            self.hrt.mean,
            self.hrt.combined_max,
            self.hrt.estrogen_only_max,
            self.hrt.obese_excess_scale,
            self.hrt.lean_excess_scale,
            self.benign.mean,
            self.benign.non_proliferative,
            self.benign.unknown_biopsy,
            self.benign.proliferative_usual,
            self.benign.atypical_hyperplasia,
            self.benign.lcis,
            self.density.mean,
            self.density.per_sd_hr,
            self.snp_mean,
        ];
        for bands in [&self.menarche.bands, &self.bmi.bands, &self.parity.bands] {
            if bands.is_empty() || bands.last().unwrap().upper.is_some() {
                return Err(FactorError::InvalidTable("banded factors need an open top band".to_string()));
            }
            values.extend(bands.iter().map(|b| b.hr));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(FactorError::InvalidTable(format!("non-positive entry {v}")));
        }
        Ok(())
    }

    pub fn menarche_hr(&self, age: f64) -> f64 {
        self.menarche.lookup(age)
    }

    pub fn parity_hr(&self, first_birth_age: Option<f64>) -> f64 {
        match first_birth_age {
            None => self.parity.nulliparous_hr,
            Some(a) => band_lookup(&self.parity.bands, a),
        }
    }

    /// Raw HRT ratio from the use/stop schedule, with the BMI interaction on the excess.
    pub fn hrt_hr(&self, hrt: &HrtUse, bmi: Option<f64>) -> f64 {
        let max = |kind: &HrtKind| match kind {
            HrtKind::Combined => self.hrt.combined_max,
            HrtKind::EstrogenOnly => self.hrt.estrogen_only_max,
        };
        let scale = match bmi {
            Some(b) if b >= self.hrt.obese_bmi => self.hrt.obese_excess_scale,
            Some(b) if b < self.hrt.lean_bmi => self.hrt.lean_excess_scale,
            _ => 1.0,
        };
        let year = |years: f64| years.ceil().max(1.0) as u32;
        let fraction = match hrt {
            HrtUse::Never => 0.0,
            HrtUse::Current { years_since_start, .. } => match year(*years_since_start) {
                1 => 0.0,
                2 => 0.5,
                _ => 1.0,
            },
            HrtUse::Past { years_since_stop, .. } => match year(*years_since_stop) {
                1 => 2.0 / 3.0,
                2 => 1.0 / 3.0,
                _ => 0.0,
            },
        };
        let excess = match hrt {
            HrtUse::Never => 0.0,
            HrtUse::Current { kind, .. } | HrtUse::Past { kind, .. } => max(kind) - 1.0,
        };
        1.0 + fraction * excess * scale
    }

    pub fn benign_hr(&self, state: BenignDisease) -> f64 {
        match state {
            BenignDisease::NoneKnown | BenignDisease::NonProliferative => self.benign.non_proliferative,
            BenignDisease::UnknownBiopsy => self.benign.unknown_biopsy,
            BenignDisease::ProliferativeUsual => self.benign.proliferative_usual,
            BenignDisease::AtypicalHyperplasia => self.benign.atypical_hyperplasia,
            BenignDisease::Lcis => self.benign.lcis,
        }
    }
}

impl Default for FactorTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("shipped factor table is valid")
    }
}
