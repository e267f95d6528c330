//! Synthetic follow-up cohorts with known hazards, used as the ground truth for the
//! calibration estimators.
//!
//! Every subject draws from its own ChaCha8 stream: the generator is seeded with
//! `seed` and subject `i` uses stream `i`, so a cohort is bit-reproducible on any
//! platform and generation can run in parallel without changing the result.
//! Latent breast cancer, death and censoring times are sampled independently and the
//! earliest one is recorded.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{Cause, FollowUpRecord};
use crate::factors::{combined_relative_hazard, FactorContext, HrtKind, HrtUse, Menopause, Parity, RiskProfile};
use crate::hazard::{Hazard, PiecewiseHazard, ScaledHazard, StepSurvivor};
use crate::pedigree::{Pedigree, PedigreeMember, Sex};
use crate::risk::{RiskError, RiskModel};

const MODEL_MIN_AGE: f64 = 20.0;
const MODEL_MAX_AGE: f64 = 85.0;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] RiskError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EntryAges {
    Fixed { age: f64 },
    /// Continuous on `[lo, hi]`; whole years `lo..=hi` for the model source.
    Uniform { lo: f64, hi: f64 },
}

/// Mean-one spread of the breast cancer multiplier across subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Heterogeneity {
    /// `exp(σZ - σ²/2)`.
    LogNormal { sigma: f64 },
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum HazardSource {
    /// Constant hazards on the age scale.
    Constant {
        h1: f64,
        h2: f64,
        #[serde(default)]
        heterogeneity: Option<Heterogeneity>,
    },
    /// Banded hazards on the age scale sharing one set of knots.
    Banded {
        knots: Vec<f64>,
        h1: Vec<f64>,
        h2: Vec<f64>,
        #[serde(default)]
        heterogeneity: Option<Heterogeneity>,
    },
    /// Hazards from the risk model for randomly drawn families and risk factors.
    Model {
        #[serde(default)]
        sampler: ProfileSampler,
    },
}

/// Distribution of family history and risk factors for the model source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSampler {
    /// Probability the mother had breast cancer at 50.
    pub mother_affected: f64,
    /// Probability an older sister had breast cancer at 45 or younger.
    pub sister_affected: f64,
    pub nulliparous: f64,
    /// Probability a postmenopausal woman is on combined HRT.
    pub current_hrt: f64,
}

impl Default for ProfileSampler {
    fn default() -> Self {
        Self { mother_affected: 0.08, sister_affected: 0.04, nulliparous: 0.2, current_hrt: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Censoring {
    None,
    /// Everyone followed for exactly `years` unless an event comes first.
    Fixed { years: f64 },
    /// Potential censoring time uniform on `[lo, hi]` years, known and stored per record.
    Deterministic { lo: f64, hi: f64 },
    /// Independent exponential censoring.
    Exponential { rate: f64 },
    /// Independent censoring with this survivor on the follow-up scale.
    Step { survivor: StepSurvivor },
    /// Exponential censoring at `rate × m^power`, `m` the subject's breast cancer
    /// multiplier. Not independent of risk; for negative tests.
    RiskDependent {
        rate: f64,
        #[serde(default = "default_power")]
        power: f64,
    },
}

fn default_power() -> f64 {
    2.0
}

fn default_follow_up() -> f64 {
    10.0
}

fn default_deflation() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n: usize,
    pub seed: u64,
    pub entry: EntryAges,
    pub source: HazardSource,
    pub censoring: Censoring,
    /// Administrative end of follow-up in years.
    #[serde(default = "default_follow_up")]
    pub max_follow_up: f64,
    /// Multiplier on the true breast cancer hazard during the first year of follow-up.
    /// The recorded hazard is not deflated.
    #[serde(default = "default_deflation")]
    pub year1_deflation: f64,
}

impl SimSpec {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| SimError::InvalidSpec(format!("{}: {}", e.path(), e.inner())))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.year1_deflation > 0.0 && self.year1_deflation <= 1.0) {
            return bad(format!("year1_deflation {} must lie in (0, 1]", self.year1_deflation));
        }
        if !(self.max_follow_up > 0.0 && self.max_follow_up.is_finite()) {
            return bad(format!("max_follow_up {} must be positive", self.max_follow_up));
        }
        match self.entry {
            EntryAges::Fixed { age } if !(age >= 0.0 && age.is_finite()) => return bad(format!("entry age {age}")),
            EntryAges::Uniform { lo, hi } if !(lo >= 0.0 && hi >= lo && hi.is_finite()) => {
                return bad(format!("entry ages [{lo}, {hi}]"))
            }
            _ => {}
        }
        let nonneg = |xs: &[f64]| xs.iter().all(|x| *x >= 0.0 && x.is_finite());
        match &self.source {
            HazardSource::Constant { h1, h2, heterogeneity } => {
                if !nonneg(&[*h1, *h2]) {
                    return bad("hazards must be non-negative".into());
                }
                check_heterogeneity(heterogeneity.as_ref())?;
            }
            HazardSource::Banded { knots, h1, h2, heterogeneity } => {
                if !nonneg(h1) || !nonneg(h2) {
                    return bad("hazards must be non-negative".into());
                }
                if h1.len() + 1 != knots.len() || h2.len() + 1 != knots.len() {
                    return bad("banded hazards need one rate per interval between knots".into());
                }
                PiecewiseHazard::new(knots.clone(), h1.clone()).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
                check_heterogeneity(heterogeneity.as_ref())?;
            }
            HazardSource::Model { sampler } => {
                let p = [sampler.mother_affected, sampler.sister_affected, sampler.nulliparous, sampler.current_hrt];
                if !p.iter().all(|x| (0.0..=1.0).contains(x)) {
                    return bad("sampler probabilities must lie in [0, 1]".into());
                }
                let (lo, hi) = match self.entry {
                    EntryAges::Fixed { age } => (age, age),
                    EntryAges::Uniform { lo, hi } => (lo, hi),
                };
                if lo < MODEL_MIN_AGE || hi >= MODEL_MAX_AGE {
                    return bad(format!("model entry ages must lie in [{MODEL_MIN_AGE}, {MODEL_MAX_AGE})"));
                }
            }
        }
        match &self.censoring {
            Censoring::Fixed { years } if !(*years > 0.0) => bad(format!("fixed censoring at {years}")),
            Censoring::Deterministic { lo, hi } if !(*lo >= 0.0 && hi >= lo) => bad(format!("censoring on [{lo}, {hi}]")),
            Censoring::Exponential { rate } | Censoring::RiskDependent { rate, .. } if !(*rate >= 0.0) => {
                bad(format!("censoring rate {rate}"))
            }
            _ => Ok(()),
        }
    }
}

fn check_heterogeneity(h: Option<&Heterogeneity>) -> Result<(), SimError> {
    match h {
        Some(Heterogeneity::LogNormal { sigma }) if !(*sigma >= 0.0) => {
            Err(SimError::InvalidSpec(format!("sigma {sigma} must be non-negative")))
        }
        Some(Heterogeneity::Discrete { values, weights })
            if values.is_empty()
                || values.len() != weights.len()
                || values.iter().any(|v| !(*v >= 0.0))
                || weights.iter().any(|w| !(*w >= 0.0))
                || weights.iter().sum::<f64>() <= 0.0 =>
        {
            Err(SimError::InvalidSpec("discrete heterogeneity needs matching non-negative values and weights".into()))
        }
        _ => Ok(()),
    }
}

/// Exponential(1) draw.
fn unit_exponential<R: Rng>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Event time after `from` for a banded hazard by inverting the cumulative hazard;
/// infinite if the event would fall beyond the hazard's support.
pub fn piecewise_exponential_sample<R: Rng>(bands: &PiecewiseHazard, from: f64, rng: &mut R) -> f64 {
    bands.invert_from(from, unit_exponential(rng)).unwrap_or(f64::INFINITY)
}

/// Time of the first event for `multiplier × base` starting at `from`, with the rate
/// multiplied by `deflation` during `[from, from + 1)`.
fn deflated_sample(base: &PiecewiseHazard, multiplier: f64, deflation: f64, from: f64, target: f64) -> f64 {
    if multiplier <= 0.0 {
        return f64::INFINITY;
    }
    let target = target / multiplier;
    let first = base.cumulative(from, from + 1.0);
    let age = if deflation < 1.0 && target < deflation * first {
        base.invert_from(from, target / deflation)
    } else if deflation < 1.0 {
        base.invert_from(from, target - deflation * first + first)
    } else {
        base.invert_from(from, target)
    };
    age.map_or(f64::INFINITY, |a| a - from)
}

fn sample_censoring<R: Rng>(scheme: &Censoring, multiplier: f64, rng: &mut R) -> (f64, Option<f64>) {
    match scheme {
        Censoring::None => (f64::INFINITY, None),
        Censoring::Fixed { years } => (*years, Some(*years)),
        Censoring::Deterministic { lo, hi } => {
            let tc = lo + (hi - lo) * rng.random::<f64>();
            (tc, Some(tc))
        }
        Censoring::Exponential { rate } => (exp_time(*rate, rng), None),
        Censoring::RiskDependent { rate, power } => (exp_time(rate * multiplier.powf(*power), rng), None),
        Censoring::Step { survivor } => {
            let u: f64 = rng.random();
            let k = survivor.values.iter().position(|&s| s < u);
            (k.map_or(f64::INFINITY, |k| survivor.times[k]), None)
        }
    }
}

fn exp_time<R: Rng>(rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        unit_exponential(rng) / rate
    } else {
        f64::INFINITY
    }
}

fn draw_multiplier<R: Rng>(h: Option<&Heterogeneity>, rng: &mut R) -> f64 {
    match h {
        None => 1.0,
        Some(Heterogeneity::LogNormal { sigma }) => {
            let z: f64 = rng.sample(StandardNormal);
            (sigma * z - sigma * sigma / 2.0).exp()
        }
        Some(Heterogeneity::Discrete { values, weights }) => {
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (v, w) in values.iter().zip(weights) {
                if u < *w {
                    return *v;
                }
                u -= w;
            }
            *values.last().unwrap()
        }
    }
}

/// Family history classes for the model source: bit 0 mother affected, bit 1 sister.
const FAMILY_CLASSES: usize = 4;

fn family_pedigree(class: usize, entry: f64) -> Option<Pedigree> {
    if class == 0 {
        return None;
    }
    let mut members = vec![PedigreeMember::new("proband", Sex::Female, entry).with_parents("mother", "father")];
    let mut mother = PedigreeMember::new("mother", Sex::Female, entry + 28.0);
    if class & 1 == 1 {
        mother.breast_age = Some(50.0_f64.min(entry + 28.0));
    }
    members.push(mother);
    members.push(PedigreeMember::new("father", Sex::Male, entry + 30.0));
    if class & 2 == 2 {
        let mut sister = PedigreeMember::new("sister", Sex::Female, entry + 2.0).with_parents("mother", "father");
        sister.breast_age = Some(45.0_f64.min(entry + 2.0));
        members.push(sister);
    }
    Some(Pedigree::new(members).expect("generated family is valid"))
}

fn draw_profile<R: Rng>(s: &ProfileSampler, entry: f64, rng: &mut R) -> RiskProfile {
    let menarche = rng.random_range(11..=15) as f64;
    let parity = if rng.random::<f64>() < s.nulliparous {
        Parity::Nulliparous
    } else {
        Parity::Parous { first_birth_age: rng.random_range(19..=36) as f64 }
    };
    let height = 1.63 + 0.065 * rng.sample::<f64, _>(StandardNormal);
    let bmi = (26.0 + 4.5 * rng.sample::<f64, _>(StandardNormal)).clamp(16.0, 45.0);
    let post = entry >= 51.0;
    let menopause = if post { Menopause::Post { age: 51.0 } } else { Menopause::Pre };
    let hrt = if post && rng.random::<f64>() < s.current_hrt {
        HrtUse::Current { kind: HrtKind::Combined, years_since_start: rng.random_range(1..=10) as f64 }
    } else {
        HrtUse::Never
    };
    RiskProfile {
        menarche_age: Some(menarche),
        parity: Some(parity),
        menopause: Some(menopause),
        height: Some(height.clamp(1.4, 1.9)),
        bmi: Some(bmi),
        hrt: Some(hrt),
        ..RiskProfile::default()
    }
}

struct ModelHazards<'a> {
    model: &'a RiskModel,
    mortality: Arc<PiecewiseHazard>,
    /// Genetic curves by (whole entry age - 20) × family class, filled on first use.
    genetic: Vec<OnceLock<Result<Arc<PiecewiseHazard>, String>>>,
}

impl<'a> ModelHazards<'a> {
    fn new(model: &'a RiskModel) -> Self {
        let slots = (MODEL_MAX_AGE - MODEL_MIN_AGE) as usize * FAMILY_CLASSES;
        Self {
            model,
            mortality: Arc::new(model.mortality().hazard().clone()),
            genetic: (0..slots).map(|_| OnceLock::new()).collect(),
        }
    }

    fn genetic(&self, entry: f64, class: usize) -> Result<Arc<PiecewiseHazard>, SimError> {
        let slot = (entry - MODEL_MIN_AGE) as usize * FAMILY_CLASSES + class;
        self.genetic[slot]
            .get_or_init(|| {
                let ped = family_pedigree(class, entry);
                let post = self.model.posterior(ped.as_ref(), entry).map_err(|e| e.to_string())?;
                self.model.genetic_curve(&post, entry).map(Arc::new).map_err(|e| e.to_string())
            })
            .clone()
            .map_err(|e| SimError::Model(RiskError::Input(e)))
    }
}

enum Source<'a> {
    Explicit { h1: Arc<PiecewiseHazard>, h2: Arc<PiecewiseHazard>, heterogeneity: Option<Heterogeneity> },
    Model { hazards: ModelHazards<'a>, sampler: ProfileSampler },
}

/// A validated spec with its hazards prepared; reusable across seeds.
pub struct Simulator<'a> {
    spec: SimSpec,
    source: Source<'a>,
}

impl<'a> Simulator<'a> {
    /// `model` is required for the model source and ignored otherwise.
    pub fn new(spec: SimSpec, model: Option<&'a RiskModel>) -> Result<Self, SimError> {
        spec.validate()?;
        let source = match &spec.source {
            HazardSource::Constant { h1, h2, heterogeneity } => Source::Explicit {
                h1: Arc::new(PiecewiseHazard::constant(0.0, f64::MAX, *h1).expect("validated")),
                h2: Arc::new(PiecewiseHazard::constant(0.0, f64::MAX, *h2).expect("validated")),
                heterogeneity: heterogeneity.clone(),
            },
            HazardSource::Banded { knots, h1, h2, heterogeneity } => Source::Explicit {
                h1: Arc::new(PiecewiseHazard::new(knots.clone(), h1.clone()).expect("validated")),
                h2: Arc::new(PiecewiseHazard::new(knots.clone(), h2.clone()).expect("validated")),
                heterogeneity: heterogeneity.clone(),
            },
            HazardSource::Model { sampler } => {
                let model = model.ok_or_else(|| SimError::InvalidSpec("the model source needs a risk model".into()))?;
                Source::Model { hazards: ModelHazards::new(model), sampler: sampler.clone() }
            }
        };
        Ok(Self { spec, source })
    }

    pub fn spec(&self) -> &SimSpec {
        &self.spec
    }

    /// The cohort for the spec's own seed.
    pub fn simulate(&self) -> Result<Vec<FollowUpRecord>, SimError> {
        self.simulate_seed(self.spec.seed)
    }

    /// The cohort for another seed, everything else unchanged.
    pub fn simulate_seed(&self, seed: u64) -> Result<Vec<FollowUpRecord>, SimError> {
        (0..self.spec.n).into_par_iter().map(|i| self.subject(seed, i)).collect()
    }

    fn subject(&self, seed: u64, i: usize) -> Result<FollowUpRecord, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let spec = &self.spec;
        let whole_years = matches!(self.source, Source::Model { .. });
        let entry = match spec.entry {
            EntryAges::Fixed { age } => age,
            EntryAges::Uniform { lo, hi } if whole_years => rng.random_range(lo.ceil() as i64..=hi.floor() as i64) as f64,
            EntryAges::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        };
        let (h1, h2) = match &self.source {
            Source::Explicit { h1, h2, heterogeneity } => {
                let m = draw_multiplier(heterogeneity.as_ref(), &mut rng);
                (ScaledHazard::new(h1.clone(), m), ScaledHazard::new(h2.clone(), 1.0))
            }
            Source::Model { hazards, sampler } => {
                let entry = entry.floor();
                let class = usize::from(rng.random::<f64>() < sampler.mother_affected)
                    | (usize::from(rng.random::<f64>() < sampler.sister_affected) << 1);
                let profile = draw_profile(sampler, entry, &mut rng);
                let factors = &hazards.model;
                let combined = combined_relative_hazard(
                    &profile,
                    FactorContext::from_profile(&profile),
                    factors.factor_table(),
                    factors.density_surfaces(),
                )
                .map_err(RiskError::from)?;
                let base = hazards.genetic(entry, class)?;
                (ScaledHazard::new(base, combined.relative_hazard), ScaledHazard::new(hazards.mortality.clone(), 1.0))
            }
        };

        let t1 = deflated_sample(&h1.base, h1.multiplier, spec.year1_deflation, entry, unit_exponential(&mut rng));
        let t2 = deflated_sample(&h2.base, h2.multiplier, 1.0, entry, unit_exponential(&mut rng));
        let (tc, known) = sample_censoring(&spec.censoring, h1.multiplier, &mut rng);
        let support_end = match &self.source {
            Source::Model { .. } => MODEL_MAX_AGE - entry,
            Source::Explicit { .. } => f64::INFINITY,
        };
        let admin = spec.max_follow_up.min(support_end);
        let (exit, cause) = [(t1, Cause::Breast), (t2, Cause::OtherDeath), (tc, Cause::Censored), (admin, Cause::Censored)]
            .into_iter()
            .fold((f64::INFINITY, Cause::Censored), |best, x| if x.0 < best.0 { x } else { best });
        let record = FollowUpRecord::new(format!("s{i}"), entry, entry + exit, cause, h1, h2)
            .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        Ok(match known {
            Some(tc) => record.with_censor_time(tc.min(admin)),
            None => record,
        })
    }
}

/// Cohort for `spec`; `model` is needed only for the model source.
pub fn simulate(spec: &SimSpec, model: Option<&RiskModel>) -> Result<Vec<FollowUpRecord>, SimError> {
    Simulator::new(spec.clone(), model)?.simulate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::observed;

    fn constant_spec(n: usize, h1: f64, h2: f64, censoring: Censoring) -> SimSpec {
        SimSpec {
            n,
            seed: 11,
            entry: EntryAges::Uniform { lo: 40.0, hi: 60.0 },
            source: HazardSource::Constant { h1, h2, heterogeneity: None },
            censoring,
            max_follow_up: 10.0,
            year1_deflation: 1.0,
        }
    }

    #[test]
    fn event_fraction_matches_closed_form() {
        let n = 100_000;
        let rs = simulate(&constant_spec(n, 0.01, 0.0, Censoring::None), None).unwrap();
        let p = -(-0.1f64).exp_m1();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let frac = observed(&rs, Cause::Breast) as f64 / n as f64;
        assert!((frac - p).abs() < 3.0 * se, "{frac} vs {p}");
    }

    #[test]
    fn zero_breast_hazard_gives_no_cases() {
        let rs = simulate(&constant_spec(5000, 0.0, 0.05, Censoring::Exponential { rate: 0.1 }), None).unwrap();
        assert_eq!(observed(&rs, Cause::Breast), 0);
        assert!(observed(&rs, Cause::OtherDeath) > 0);
    }

    #[test]
    fn same_seed_same_cohort() {
        let spec = constant_spec(2000, 0.02, 0.01, Censoring::Deterministic { lo: 2.0, hi: 12.0 });
        let a = simulate(&spec, None).unwrap();
        let b = simulate(&spec, None).unwrap();
        let key = |r: &FollowUpRecord| (r.entry_age.to_bits(), r.exit_age.to_bits(), r.cause, r.censor_time.map(f64::to_bits));
        assert!(a.iter().zip(&b).all(|(x, y)| key(x) == key(y)));
        let c = Simulator::new(spec, None).unwrap().simulate_seed(12).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| key(x) != key(y)));
    }

    #[test]
    fn censoring_schemes_bound_follow_up() {
        let rs = simulate(&constant_spec(3000, 0.01, 0.01, Censoring::Fixed { years: 5.0 }), None).unwrap();
        assert!(rs.iter().all(|r| r.follow_up() <= 5.0 + 1e-12 && r.censor_time == Some(5.0)));
        let rs = simulate(&constant_spec(3000, 0.01, 0.01, Censoring::Deterministic { lo: 1.0, hi: 20.0 }), None).unwrap();
        assert!(rs.iter().all(|r| r.follow_up() <= r.censor_time.unwrap() + 1e-12 && r.censor_time.unwrap() <= 10.0));
        let step = StepSurvivor { times: vec![3.0, 6.0], values: vec![0.5, 0.0] };
        let rs = simulate(&constant_spec(4000, 0.0, 0.0, Censoring::Step { survivor: step }), None).unwrap();
        let near = |r: &FollowUpRecord, t: f64| (r.follow_up() - t).abs() < 1e-9;
        let at3 = rs.iter().filter(|r| near(r, 3.0)).count() as f64 / 4000.0;
        assert!((at3 - 0.5).abs() < 0.03, "{at3}");
        assert!(rs.iter().all(|r| near(r, 3.0) || near(r, 6.0)));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = constant_spec(10, 0.01, 0.0, Censoring::None);
        spec.year1_deflation = 0.0;
        assert!(matches!(simulate(&spec, None), Err(SimError::InvalidSpec(_))));
        let spec = constant_spec(0, 0.01, 0.0, Censoring::None);
        assert!(spec.validate().is_err());
        let spec = constant_spec(10, -0.01, 0.0, Censoring::None);
        assert!(spec.validate().is_err());
        let err = SimSpec::from_json(r#"{"n": 5, "seed": 1, "entry": {"kind": "fixed", "age": 50}, "source": {"kind": "constant", "h1": 0.01, "h2": 0}, "censoring": {"kind": "sometimes"}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("censoring"), "{err}");
        let mut model = constant_spec(10, 0.01, 0.0, Censoring::None);
        model.source = HazardSource::Model { sampler: ProfileSampler::default() };
        assert!(simulate(&model, None).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SimSpec {
            source: HazardSource::Banded {
                knots: vec![20.0, 50.0, 90.0],
                h1: vec![0.001, 0.003],
                h2: vec![0.002, 0.01],
                heterogeneity: Some(Heterogeneity::LogNormal { sigma: 0.5 }),
            },
            ..constant_spec(10, 0.0, 0.0, Censoring::RiskDependent { rate: 0.05, power: 2.0 })
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(SimSpec::from_json(&text).unwrap(), spec);
    }

    fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn inversion_sampling_matches_two_band_cdf() {
        let bands = PiecewiseHazard::new(vec![0.0, 2.0, 100.0], vec![0.3, 0.05]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..100_000).map(|_| piecewise_exponential_sample(&bands, 0.0, &mut rng)).collect();
        let cdf = |t: f64| 1.0 - (-(0.3 * t.min(2.0) + 0.05 * (t - 2.0).max(0.0))).exp();
        assert!(ks_distance(xs.clone(), cdf) < 0.01);
        // Analytic quantiles: below 1 - e^-0.6 in the first band, past it in the second.
        let mut sorted = xs;
        sorted.sort_by(f64::total_cmp);
        for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let want = if q < 1.0 - (-0.6f64).exp() { -(1.0 - q).ln() / 0.3 } else { 2.0 + (-(1.0 - q).ln() - 0.6) / 0.05 };
            let got = sorted[(q * 100_000.0) as usize];
            assert!((got - want).abs() < 0.05 * want.max(1.0), "q={q}: {got} vs {want}");
        }
    }

    #[test]
    fn constant_rate_is_exponential_and_zero_band_defers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = PiecewiseHazard::constant(0.0, 1e9, 0.2).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| piecewise_exponential_sample(&h, 0.0, &mut rng)).collect();
        assert!(ks_distance(xs, |t| 1.0 - (-0.2 * t).exp()) < 0.01);
        let gap = PiecewiseHazard::new(vec![0.0, 5.0, 1e9], vec![0.0, 1.0]).unwrap();
        assert!((0..1000).all(|_| piecewise_exponential_sample(&gap, 0.0, &mut rng) >= 5.0));
    }

    #[test]
    fn deflation_reduces_year_one_events_only() {
        let h = PiecewiseHazard::constant(0.0, 1e9, 0.5).unwrap();
        // Target below the deflated first-year mass stays in year one at half speed.
        assert!((deflated_sample(&h, 1.0, 0.5, 10.0, 0.1) - 0.4).abs() < 1e-12);
        // Past year one the full rate resumes after the deflated mass 0.25.
        assert!((deflated_sample(&h, 1.0, 0.5, 10.0, 0.75) - 2.0).abs() < 1e-12);
        assert!((deflated_sample(&h, 2.0, 1.0, 10.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_cohort_is_reproducible_and_plausible() {
        let model = RiskModel::default();
        let spec = SimSpec {
            n: 4000,
            seed: 3,
            entry: EntryAges::Uniform { lo: 40.0, hi: 70.0 },
            source: HazardSource::Model { sampler: ProfileSampler::default() },
            censoring: Censoring::Exponential { rate: 0.05 },
            max_follow_up: 10.0,
            year1_deflation: 1.0,
        };
        let sim = Simulator::new(spec, Some(&model)).unwrap();
        let a = sim.simulate().unwrap();
        let b = sim.simulate().unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.exit_age == y.exit_age && x.cause == y.cause));
        assert!(a.iter().all(|r| r.entry_age.fract() == 0.0 && r.exit_age <= 85.0));
        let m: Vec<f64> = a.iter().map(|r| r.h1.multiplier).collect();
        assert!(m.iter().any(|&x| x > 1.2) && m.iter().any(|&x| x < 0.8));
        let o = observed(&a, Cause::Breast) as f64;
        let e = crate::calib::expected_hazard_method(&a);
        assert!((o - e).abs() < 4.0 * e.sqrt(), "O={o} E={e}");
    }
}
