//! Age-specific population rate tables.
//!
//! A [`RateTable`] holds contiguous age bands with a constant rate per
//! person-year in each band. Two tables drive the model: first breast cancer
//! incidence and mortality from causes other than breast cancer. Competing
//! mortality depends on age only.
//!
//! The shipped defaults (`data/*.csv`) are illustrative placeholders with a
//! realistic age profile, not registry data.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::hazard::{Hazard, PiecewiseHazard};

/// Lower end of the modelled age range.
pub const MIN_AGE: f64 = 20.0;
/// Upper end of the modelled age range; lifetime risk is risk to this age.
pub const MAX_AGE: f64 = 85.0;

const DEFAULT_INCIDENCE: &str = include_str!("../data/breast_incidence.csv");
const DEFAULT_MORTALITY: &str = include_str!("../data/other_mortality.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateCause {
    Breast,
    OtherMortality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBand {
    pub age_lo: f64,
    pub age_hi: f64,
    pub rate: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum RateError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("rate table is empty")]
    Empty,
    #[error("band {age_lo}-{age_hi}: rate {rate} is negative")]
    Negative { age_lo: f64, age_hi: f64, rate: f64 },
    #[error("band {age_lo}-{age_hi}: rate {rate} is not below 1 per year")]
    Implausible { age_lo: f64, age_hi: f64, rate: f64 },
    #[error("band {age_lo}-{age_hi} is empty or reversed")]
    Reversed { age_lo: f64, age_hi: f64 },
    #[error("gap between ages {from} and {to}")]
    Gap { from: f64, to: f64 },
    #[error("bands overlap between ages {from} and {to}")]
    Overlap { from: f64, to: f64 },
    #[error("table covers {lo}-{hi} but must cover {MIN_AGE}-{MAX_AGE}")]
    Coverage { lo: f64, hi: f64 },
    #[error("ages {lo}-{hi} are outside the table coverage")]
    OutOfRange { lo: f64, hi: f64 },
    #[error("age interval {lo}-{hi} must satisfy {MIN_AGE} <= lo < hi <= {MAX_AGE}")]
    BadInterval { lo: f64, hi: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An age interval inside the modelled range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeInterval {
    lo: f64,
    hi: f64,
}

impl AgeInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, RateError> {
        if !(lo >= MIN_AGE && hi <= MAX_AGE && lo < hi) {
            return Err(RateError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    cause: RateCause,
    bands: Vec<RateBand>,
    hazard: PiecewiseHazard,
}

impl RateTable {
    /// Validates bands: non-negative rates below 1, contiguous, covering the model range.
    pub fn new(cause: RateCause, mut bands: Vec<RateBand>) -> Result<Self, RateError> {
        if bands.is_empty() {
            return Err(RateError::Empty);
        }
        for b in &bands {
            if b.rate < 0.0 {
                return Err(RateError::Negative { age_lo: b.age_lo, age_hi: b.age_hi, rate: b.rate });
            }
            if !(b.rate < 1.0) {
                return Err(RateError::Implausible { age_lo: b.age_lo, age_hi: b.age_hi, rate: b.rate });
            }
            if !(b.age_hi > b.age_lo) {
                return Err(RateError::Reversed { age_lo: b.age_lo, age_hi: b.age_hi });
            }
        }
        bands.sort_by(|a, b| a.age_lo.total_cmp(&b.age_lo));
        for w in bands.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            if next.age_lo > prev.age_hi {
                return Err(RateError::Gap { from: prev.age_hi, to: next.age_lo });
            }
            if next.age_lo < prev.age_hi {
                return Err(RateError::Overlap { from: next.age_lo, to: prev.age_hi });
            }
        }
        let lo = bands[0].age_lo;
        let hi = bands[bands.len() - 1].age_hi;
        if lo > MIN_AGE || hi < MAX_AGE {
            return Err(RateError::Coverage { lo, hi });
        }
        let mut knots: Vec<f64> = bands.iter().map(|b| b.age_lo).collect();
        knots.push(hi);
        let hazard = PiecewiseHazard::new(knots, bands.iter().map(|b| b.rate).collect())
            .expect("validated bands form a hazard");
        Ok(Self { cause, bands, hazard })
    }

    pub fn cause(&self) -> RateCause {
        self.cause
    }

    pub fn bands(&self) -> &[RateBand] {
        &self.bands
    }

    pub fn hazard(&self) -> &PiecewiseHazard {
        &self.hazard
    }

    pub fn coverage(&self) -> (f64, f64) {
        self.hazard.support()
    }

    pub fn rate_at(&self, age: f64) -> f64 {
        self.hazard.rate(age)
    }

    /// Exact integral of the rate over a model age interval.
    pub fn cumulative_hazard(&self, interval: AgeInterval) -> f64 {
        self.hazard.cumulative(interval.lo, interval.hi)
    }

    /// Integral of the rate between arbitrary ages, which must lie inside the coverage.
    pub fn cumulative_between(&self, lo: f64, hi: f64) -> Result<f64, RateError> {
        let (c_lo, c_hi) = self.coverage();
        if !(lo >= c_lo && hi <= c_hi && lo <= hi) {
            return Err(RateError::OutOfRange { lo, hi });
        }
        Ok(self.hazard.cumulative(lo, hi))
    }

    /// Serializes in the `age_lo,age_hi,rate` CSV format.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("age_lo,age_hi,rate\n");
        for b in &self.bands {
            out.push_str(&format!("{},{},{}\n", b.age_lo, b.age_hi, b.rate));
        }
        out
    }

    pub fn default_incidence() -> Self {
        load_rate_table(DEFAULT_INCIDENCE.as_bytes(), RateCause::Breast).expect("shipped incidence table is valid")
    }

    pub fn default_mortality() -> Self {
        load_rate_table(DEFAULT_MORTALITY.as_bytes(), RateCause::OtherMortality)
            .expect("shipped mortality table is valid")
    }
}

#[derive(Deserialize)]
struct Row {
    age_lo: f64,
    age_hi: f64,
    rate: f64,
}

/// Reads a `age_lo,age_hi,rate` CSV stream into a validated table.
pub fn load_rate_table<R: Read>(source: R, cause: RateCause) -> Result<RateTable, RateError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(source);
    let mut bands = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        // Header is line 1.
        let row = row.map_err(|e| RateError::Parse { row: i + 2, message: e.to_string() })?;
        bands.push(RateBand { age_lo: row.age_lo, age_hi: row.age_hi, rate: row.rate });
    }
    RateTable::new(cause, bands)
}
