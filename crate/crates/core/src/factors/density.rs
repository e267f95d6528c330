//! Mammographic density residuals against an age/BMI-expected surface.

use serde::{Deserialize, Serialize};

use super::table::DensityConfig;
use super::{DensityInput, FactorError};

const DEFAULT_SURFACES: &str = include_str!("../../data/density_surface.json");

/// Expected density on an age × BMI grid, with bilinear interpolation between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySurface {
    /// Population SD of the density measure, used to standardize residuals.
    pub sd: f64,
    pub ages: Vec<f64>,
    pub bmis: Vec<f64>,
    /// `expected[i][j]` at `(ages[i], bmis[j])`.
    pub expected: Vec<Vec<f64>>,
}

impl DensitySurface {
    pub fn validate(&self) -> Result<(), FactorError> {
        let increasing = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.ages) || !increasing(&self.bmis) {
            return Err(FactorError::InvalidTable("density surface axes must be increasing".to_string()));
        }
        if self.expected.len() != self.ages.len() || self.expected.iter().any(|r| r.len() != self.bmis.len()) {
            return Err(FactorError::InvalidTable("density surface grid has the wrong shape".to_string()));
        }
        if !(self.sd > 0.0) {
            return Err(FactorError::InvalidTable("density SD must be positive".to_string()));
        }
        Ok(())
    }

    pub fn expected_at(&self, age: f64, bmi: f64) -> Result<f64, FactorError> {
        let (i, fa) = locate(&self.ages, age).ok_or(FactorError::SurfaceOutOfRange { age, bmi })?;
        let (j, fb) = locate(&self.bmis, bmi).ok_or(FactorError::SurfaceOutOfRange { age, bmi })?;
        let e = &self.expected;
        let at = |di: usize, dj: usize| e[(i + di).min(self.ages.len() - 1)][(j + dj).min(self.bmis.len() - 1)];
        Ok((1.0 - fa) * (1.0 - fb) * at(0, 0) + (1.0 - fa) * fb * at(0, 1) + fa * (1.0 - fb) * at(1, 0) + fa * fb * at(1, 1))
    }
}

/// Cell index and fractional position of `x` on a grid, None outside it.
fn locate(grid: &[f64], x: f64) -> Option<(usize, f64)> {
    let (lo, hi) = (grid[0], *grid.last().unwrap());
    if !(x >= lo && x <= hi) {
        return None;
    }
    let i = (grid.partition_point(|&g| g <= x).max(1) - 1).min(grid.len() - 2);
    Some((i, (x - grid[i]) / (grid[i + 1] - grid[i])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySurfaces {
    pub version: String,
    pub visual_percent: DensitySurface,
    pub volumetric_percent: DensitySurface,
}

impl DensitySurfaces {
    pub fn from_json(text: &str) -> Result<Self, FactorError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| FactorError::InvalidTable(format!("{}: {}", e.path(), e.inner())))?;
        s.visual_percent.validate()?;
        s.volumetric_percent.validate()?;
        Ok(s)
    }
}

impl Default for DensitySurfaces {
    fn default() -> Self {
        Self::from_json(DEFAULT_SURFACES).expect("shipped density surfaces are valid")
    }
}

/// Standardized residual of observed against expected density, or None when the
/// factor does not apply (under the minimum age or no BMI available).
pub fn density_residual(
    input: &DensityInput,
    fallback_bmi: Option<f64>,
    config: &DensityConfig,
    surfaces: &DensitySurfaces,
) -> Result<Option<f64>, FactorError> {
    let (age, bmi) = match input {
        DensityInput::VisualPercent { age_at_mammogram, bmi_at_mammogram, .. }
        | DensityInput::VolumetricPercent { age_at_mammogram, bmi_at_mammogram, .. } => {
            (*age_at_mammogram, bmi_at_mammogram.or(fallback_bmi))
        }
        DensityInput::Birads { age_at_mammogram, .. } => (*age_at_mammogram, None),
    };
    if age < config.min_age {
        return Ok(None);
    }
    match input {
        DensityInput::Birads { category, .. } => Ok(Some(config.birads_z[(*category as usize).clamp(1, 4) - 1])),
        DensityInput::VisualPercent { value, .. } | DensityInput::VolumetricPercent { value, .. } => {
            let Some(bmi) = bmi else {
                return Ok(None);
            };
            let surface = match input {
                DensityInput::VisualPercent { .. } => &surfaces.visual_percent,
                _ => &surfaces.volumetric_percent,
            };
            let expected = surface.expected_at(age, bmi)?;
            Ok(Some((value - expected) / surface.sd))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bilinear_reproduces_linear_surface() {
        let s = DensitySurfaces::default().volumetric_percent;
        // The shipped volumetric surface is 16 - 0.15 (age - 40) - 0.4 (bmi - 20) away from its floor.
        for (age, bmi) in [(40.0, 20.0), (47.5, 23.3), (55.0, 15.0), (63.2, 28.9)] {
            let want = 16.0 - 0.15 * (age - 40.0) - 0.4 * (bmi - 20.0);
            assert_relative_eq!(s.expected_at(age, bmi).unwrap(), want, max_relative = 1e-12);
        }
        assert!(matches!(s.expected_at(95.0, 25.0), Err(FactorError::SurfaceOutOfRange { .. })));
        assert!(s.expected_at(90.0, 45.0).is_ok());
    }

    #[test]
    fn locate_edges() {
        let g = [1.0, 2.0, 4.0];
        assert_eq!(locate(&g, 1.0), Some((0, 0.0)));
        assert_eq!(locate(&g, 4.0), Some((1, 1.0)));
        assert_eq!(locate(&g, 3.0), Some((1, 0.5)));
        assert_eq!(locate(&g, 0.5), None);
    }
}
