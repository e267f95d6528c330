//! Genotype-specific survivor functions and the baseline-survivor solve.
//!
//! Cells are indexed `c1 * 2 + c2` with `c1` in {0: non-carrier, 1: BRCA1, 2: BRCA2}
//! and `c2` in {0, 1} for the unknown dominant gene.

use serde::{Deserialize, Serialize};

use crate::hazard::{Hazard, PiecewiseHazard};
use crate::rates::{RateBand, RateTable, MAX_AGE};

use super::SegregationError;

const DEFAULT_PARAMS: &str = include_str!("../../data/segregation.json");

pub const N_CELLS: usize = 6;
/// Last age of the yearly grid; the grid runs over integer ages `0..=GRID_END`.
const GRID_END: usize = MAX_AGE as usize;

pub fn cell_index(c1: u8, c2: u8) -> usize {
    c1 as usize * 2 + c2 as usize
}

pub fn cell_of(index: usize) -> (u8, u8) {
    ((index / 2) as u8, (index % 2) as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreastPenetrance {
    pub brca1: Vec<RateBand>,
    pub brca2: Vec<RateBand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvarianPenetrance {
    pub brca1: Vec<RateBand>,
    pub brca2: Vec<RateBand>,
    pub non_carrier: Vec<RateBand>,
}

/// Fixed inputs of the segregation model. Penetrances are banded hazards from age 20;
/// they are zero before the first band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegregationParams {
    pub version: String,
    /// Population prevalence of unknown-gene carriage.
    pub beta: f64,
    /// Relative hazard of unknown-gene carriers, `exp(gamma)`.
    pub exp_gamma: f64,
    pub brca1_prev: f64,
    pub brca2_prev: f64,
    pub breast: BreastPenetrance,
    pub ovarian: OvarianPenetrance,
}

impl SegregationParams {
    pub fn gamma(&self) -> f64 {
        self.exp_gamma.ln()
    }

    pub fn from_json(text: &str) -> Result<Self, SegregationError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let params: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| SegregationError::InvalidParams(format!("{}: {}", e.path(), e.inner())))?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SegregationError> {
        let bad = |m: &str| Err(SegregationError::InvalidParams(m.to_string()));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.exp_gamma >= 1.0 && self.exp_gamma.is_finite()) {
            return bad("exp_gamma must be finite and at least 1");
        }
        for p in [self.brca1_prev, self.brca2_prev] {
            if !(p > 0.0 && p < 1.0) {
                return bad("BRCA prevalences must lie in (0, 1)");
            }
        }
        for bands in [
            &self.breast.brca1,
            &self.breast.brca2,
            &self.ovarian.brca1,
            &self.ovarian.brca2,
            &self.ovarian.non_carrier,
        ] {
            banded_hazard(bands)?;
        }
        Ok(())
    }
}

impl Default for SegregationParams {
    fn default() -> Self {
        Self::from_json(DEFAULT_PARAMS).expect("shipped segregation parameters are valid")
    }
}

/// Hazard on `[0, 85]` from bands, zero where no band applies.
fn banded_hazard(bands: &[RateBand]) -> Result<PiecewiseHazard, SegregationError> {
    let invalid = |m: String| SegregationError::InvalidParams(m);
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.age_lo.total_cmp(&b.age_lo));
    let mut knots = vec![0.0];
    let mut rates = Vec::new();
    for b in &sorted {
        let last = *knots.last().unwrap();
        if b.age_lo < last || b.age_hi <= b.age_lo || b.age_hi > MAX_AGE {
            return Err(invalid(format!("penetrance band {}-{} overlaps or leaves the age range", b.age_lo, b.age_hi)));
        }
        if !(b.rate >= 0.0 && b.rate < 1.0) {
            return Err(invalid(format!("penetrance rate {} out of range", b.rate)));
        }
        if b.age_lo > last {
            knots.push(b.age_lo);
            rates.push(0.0);
        }
        knots.push(b.age_hi);
        rates.push(b.rate);
    }
    if *knots.last().unwrap() < MAX_AGE {
        knots.push(MAX_AGE);
        rates.push(0.0);
    }
    PiecewiseHazard::new(knots, rates).map_err(|e| invalid(e.to_string()))
}

/// Solves `(1 - beta) S0 + beta S0^exp(gamma) = s_g` for `S0` in `[s_g, 1]`.
pub fn solve_baseline_survivor(s_g: f64, beta: f64, gamma: f64) -> Result<f64, SegregationError> {
    if !(s_g > 0.0 && s_g <= 1.0) || !(0.0..1.0).contains(&beta) || !(gamma >= 0.0) {
        return Err(SegregationError::InvalidParams(format!(
            "baseline solve needs s_g in (0,1], beta in [0,1), gamma >= 0; got {s_g}, {beta}, {gamma}"
        )));
    }
    let e = gamma.exp();
    let f = |s: f64| (1.0 - beta) * s + beta * s.powf(e) - s_g;
    let df = |s: f64| (1.0 - beta) + beta * e * s.powf(e - 1.0);
    let (mut lo, mut hi) = (s_g, 1.0_f64);
    if f(lo) >= 0.0 {
        return Ok(lo);
    }
    let mut s = s_g;
    for _ in 0..100 {
        let fs = f(s);
        if fs.abs() < 1e-14 {
            return Ok(s);
        }
        if fs < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - fs / df(s);
        s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-16 {
            return Ok(s);
        }
    }
    let fs = f(s);
    if fs.abs() < 1e-12 {
        Ok(s)
    } else {
        Err(SegregationError::NoConvergence { s_g, beta, gamma })
    }
}

/// Per-genotype breast and ovarian hazards on a yearly grid, calibrated so the
/// prior-weighted mixture reproduces the population incidence survivor at every integer age.
#[derive(Debug, Clone)]
pub struct GeneticModel {
    params: SegregationParams,
    prior: [f64; N_CELLS],
    breast: Vec<PiecewiseHazard>,
    ovarian: Vec<PiecewiseHazard>,
    /// Survivor `S_d(k)` for each cell at integer ages `k = 0..=85`.
    survivor: Vec<Vec<f64>>,
}

impl GeneticModel {
    pub fn new(params: SegregationParams, incidence: &RateTable) -> Result<Self, SegregationError> {
        params.validate()?;
        let pc1 = c1_prior(&params);
        let prior = cell_prior(&params);
        let b1 = banded_hazard(&params.breast.brca1)?;
        let b2 = banded_hazard(&params.breast.brca2)?;
        let pop = incidence.hazard();
        let gamma = params.gamma();
        let knots: Vec<f64> = (0..=GRID_END).map(|k| k as f64).collect();

        // Marginal survivor per c1 on the grid, then split by the unknown gene.
        let mut survivor = vec![vec![0.0; GRID_END + 1]; N_CELLS];
        for k in 0..=GRID_END {
            let age = k as f64;
            let s_pop = (-pop.cumulative(0.0, age)).exp();
            let s1 = (-b1.cumulative(0.0, age)).exp();
            let s2 = (-b2.cumulative(0.0, age)).exp();
            let s0 = (s_pop - pc1[1] * s1 - pc1[2] * s2) / pc1[0];
            if !(s0 > 0.0 && s0 <= 1.0 + 1e-15) {
                return Err(SegregationError::InconsistentPenetrance { age });
            }
            for (c1, s_g) in [s0.min(1.0), s1, s2].into_iter().enumerate() {
                let base = solve_baseline_survivor(s_g, params.beta, gamma)?;
                survivor[cell_index(c1 as u8, 0)][k] = base;
                survivor[cell_index(c1 as u8, 1)][k] = base.powf(params.exp_gamma);
            }
        }
        let mut breast = Vec::with_capacity(N_CELLS);
        for (d, s) in survivor.iter().enumerate() {
            let mut rates = Vec::with_capacity(GRID_END);
            for k in 0..GRID_END {
                let r = (s[k] / s[k + 1]).ln();
                if r < -1e-12 {
                    return Err(SegregationError::InconsistentPenetrance { age: k as f64 + 1.0 });
                }
                rates.push(r.max(0.0));
            }
            let h = PiecewiseHazard::new(knots.clone(), rates)
                .map_err(|e| SegregationError::InvalidParams(format!("cell {d}: {e}")))?;
            breast.push(h);
        }
        // Recompute survivors from the hazards so both views agree exactly.
        for (d, h) in breast.iter().enumerate() {
            for k in 0..=GRID_END {
                survivor[d][k] = (-h.cumulative(0.0, k as f64)).exp();
            }
        }
        let ovarian = vec![
            banded_hazard(&params.ovarian.non_carrier)?,
            banded_hazard(&params.ovarian.brca1)?,
            banded_hazard(&params.ovarian.brca2)?,
        ];
        Ok(Self { params, prior, breast, ovarian, survivor })
    }

    pub fn params(&self) -> &SegregationParams {
        &self.params
    }

    /// Population genotype distribution `p(c1) p(c2)`.
    pub fn prior(&self) -> &[f64; N_CELLS] {
        &self.prior
    }

    pub fn breast_hazard(&self, cell: usize) -> &PiecewiseHazard {
        &self.breast[cell]
    }

    pub fn ovarian_hazard(&self, c1: u8) -> &PiecewiseHazard {
        &self.ovarian[c1 as usize]
    }

    /// Breast-cancer-free survivor from birth to `age` for a cell.
    pub fn survivor(&self, cell: usize, age: f64) -> f64 {
        let age = age.clamp(0.0, MAX_AGE);
        let k = age.floor() as usize;
        if k >= GRID_END {
            return self.survivor[cell][GRID_END];
        }
        self.survivor[cell][k] * (-self.breast[cell].rate(k as f64) * (age - k as f64)).exp()
    }

    /// Density of a first breast cancer at `age`.
    pub fn breast_density(&self, cell: usize, age: f64) -> f64 {
        self.breast[cell].rate(age.min(MAX_AGE - 1e-9)) * self.survivor(cell, age)
    }

    pub fn ovarian_survivor(&self, c1: u8, age: f64) -> f64 {
        (-self.ovarian[c1 as usize].cumulative(0.0, age.clamp(0.0, MAX_AGE))).exp()
    }

    pub fn ovarian_density(&self, c1: u8, age: f64) -> f64 {
        self.ovarian[c1 as usize].rate(age.min(MAX_AGE - 1e-9)) * self.ovarian_survivor(c1, age)
    }
}

/// `p(c1)` with joint BRCA1/BRCA2 carriers counted as BRCA1.
pub fn c1_prior(params: &SegregationParams) -> [f64; 3] {
    let (p1, p2) = (params.brca1_prev, params.brca2_prev);
    [(1.0 - p1) * (1.0 - p2), p1, (1.0 - p1) * p2]
}

pub fn cell_prior(params: &SegregationParams) -> [f64; N_CELLS] {
    let pc1 = c1_prior(params);
    let mut out = [0.0; N_CELLS];
    for c1 in 0..3u8 {
        out[cell_index(c1, 0)] = pc1[c1 as usize] * (1.0 - params.beta);
        out[cell_index(c1, 1)] = pc1[c1 as usize] * params.beta;
    }
    out
}
