//! Family history and the genetic segregation model.
//!
//! A [`Pedigree`] records relatives, their breast/ovarian cancer or censoring ages and
//! BRCA test results. [`genotype_posterior`] turns it into carrier probabilities for the
//! proband (the first member), and [`genetic_survivor`] / [`genetic_hazard`] give the
//! genetic part of the breast cancer hazard.

mod format;
mod model;
mod peeling;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::hazard::Hazard;
use crate::rates::{MAX_AGE, MIN_AGE};

pub use format::{parse_pedigree, serialize_pedigree};
pub use model::{
    c1_prior, cell_index, cell_of, cell_prior, solve_baseline_survivor, BreastPenetrance, GeneticModel,
    OvarianPenetrance, SegregationParams, N_CELLS,
};
pub use peeling::{founder_prior, member_likelihood, proband_log_joint, state_cell, transmission, N_STATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrcaTest {
    #[default]
    Untested,
    Negative,
    Brca1,
    Brca2,
}

impl BrcaTest {
    /// Whether the test result allows carrier status `c1`.
    pub fn allows(self, c1: u8) -> bool {
        match self {
            BrcaTest::Untested => true,
            BrcaTest::Negative => c1 == 0,
            BrcaTest::Brca1 => c1 == 1,
            BrcaTest::Brca2 => c1 == 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedigreeMember {
    pub id: String,
    pub sex: Sex,
    #[serde(default)]
    pub mother_id: Option<String>,
    #[serde(default)]
    pub father_id: Option<String>,
    /// Age at first breast cancer diagnosis.
    #[serde(default)]
    pub breast_age: Option<f64>,
    #[serde(default)]
    pub ovarian_age: Option<f64>,
    /// Current age, or age at death or last contact.
    pub censor_age: f64,
    #[serde(default)]
    pub brca_test: BrcaTest,
}

impl PedigreeMember {
    pub fn new(id: impl Into<String>, sex: Sex, censor_age: f64) -> Self {
        Self {
            id: id.into(),
            sex,
            mother_id: None,
            father_id: None,
            breast_age: None,
            ovarian_age: None,
            censor_age,
            brca_test: BrcaTest::Untested,
        }
    }

    pub fn with_parents(mut self, mother: impl Into<String>, father: impl Into<String>) -> Self {
        self.mother_id = Some(mother.into());
        self.father_id = Some(father.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PedigreeError {
    #[error("pedigree has no members")]
    Empty,
    #[error("line {line}, field `{field}`: {message}")]
    Parse { line: u64, field: String, message: String },
    #[error("duplicate member id `{0}`")]
    DuplicateId(String),
    #[error("member `{child}` references unknown parent `{parent}`")]
    MissingParent { child: String, parent: String },
    #[error("unsupported pedigree: {0}")]
    Unsupported(String),
    #[error("invalid ages for `{id}`: {message}")]
    InvalidAges { id: String, message: String },
    #[error("proband `{0}` must be female")]
    MaleProband(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegregationError {
    #[error("invalid segregation parameters: {0}")]
    InvalidParams(String),
    #[error("baseline survivor solve did not converge for s_g={s_g}, beta={beta}, gamma={gamma}")]
    NoConvergence { s_g: f64, beta: f64, gamma: f64 },
    #[error("carrier penetrances exceed population incidence near age {age}")]
    InconsistentPenetrance { age: f64 },
    #[error("age {0} is outside the model range")]
    OutOfRange(f64),
    #[error("pedigree has zero likelihood under every proband genotype")]
    ZeroLikelihood,
    #[error(transparent)]
    Pedigree(#[from] PedigreeError),
}

/// A validated, loop-free family. Member 0 is the proband.
#[derive(Debug, Clone, PartialEq)]
pub struct Pedigree {
    members: Vec<PedigreeMember>,
    /// Parent indices per member.
    parents: Vec<Option<(usize, usize)>>,
}

impl Pedigree {
    pub fn new(members: Vec<PedigreeMember>) -> Result<Self, PedigreeError> {
        if members.is_empty() {
            return Err(PedigreeError::Empty);
        }
        let mut index = HashMap::new();
        for (i, m) in members.iter().enumerate() {
            if index.insert(m.id.clone(), i).is_some() {
                return Err(PedigreeError::DuplicateId(m.id.clone()));
            }
        }
        if members[0].sex != Sex::Female {
            return Err(PedigreeError::MaleProband(members[0].id.clone()));
        }
        let lookup = |child: &PedigreeMember, id: &str| {
            index.get(id).copied().ok_or_else(|| PedigreeError::MissingParent {
                child: child.id.clone(),
                parent: id.to_string(),
            })
        };
        let mut parents = Vec::with_capacity(members.len());
        for m in &members {
            validate_ages(m)?;
            let p = match (&m.mother_id, &m.father_id) {
                (None, None) => None,
                (Some(mo), Some(fa)) => {
                    let (mi, fi) = (lookup(m, mo)?, lookup(m, fa)?);
                    if members[mi].sex != Sex::Female || members[fi].sex != Sex::Male {
                        return Err(PedigreeError::Unsupported(format!(
                            "parents of `{}` must be one female mother and one male father",
                            m.id
                        )));
                    }
                    Some((mi, fi))
                }
                _ => {
                    return Err(PedigreeError::Unsupported(format!(
                        "member `{}` has only one parent recorded",
                        m.id
                    )))
                }
            };
            parents.push(p);
        }
        let ped = Self { members, parents };
        ped.check_acyclic()?;
        ped.check_loop_free()?;
        Ok(ped)
    }

    /// Proband only, untested, without events, censored at `age`.
    pub fn singleton(age: f64) -> Self {
        Self::new(vec![PedigreeMember::new("proband", Sex::Female, age)]).expect("singleton pedigree is valid")
    }

    pub fn members(&self) -> &[PedigreeMember] {
        &self.members
    }

    pub fn proband(&self) -> &PedigreeMember {
        &self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn parents_of(&self, i: usize) -> Option<(usize, usize)> {
        self.parents[i]
    }

    /// Copy with the proband censored at `age` (her current age at assessment).
    pub fn with_proband_censored_at(&self, age: f64) -> Result<Self, PedigreeError> {
        let mut members = self.members.clone();
        members[0].censor_age = age;
        Self::new(members)
    }

    fn check_acyclic(&self) -> Result<(), PedigreeError> {
        // 0 = unvisited, 1 = on stack, 2 = done.
        let mut state = vec![0u8; self.len()];
        for start in 0..self.len() {
            let mut stack = vec![(start, false)];
            while let Some((i, leaving)) = stack.pop() {
                if leaving {
                    state[i] = 2;
                    continue;
                }
                match state[i] {
                    2 => continue,
                    1 => {
                        return Err(PedigreeError::Unsupported(format!(
                            "member `{}` is their own ancestor",
                            self.members[i].id
                        )))
                    }
                    _ => {}
                }
                state[i] = 1;
                stack.push((i, true));
                if let Some((m, f)) = self.parents[i] {
                    for p in [m, f] {
                        if state[p] == 1 {
                            return Err(PedigreeError::Unsupported(format!(
                                "member `{}` is their own ancestor",
                                self.members[p].id
                            )));
                        }
                        if state[p] == 0 {
                            stack.push((p, false));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Rejects marriage loops: the graph of individuals and mating nodes must be a forest.
    fn check_loop_free(&self) -> Result<(), PedigreeError> {
        let n = self.len();
        let mut matings: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        for (child, p) in self.parents.iter().enumerate() {
            if let Some(pair) = *p {
                let next = n + matings.len();
                let node = *matings.entry(pair).or_insert_with(|| {
                    edges.push((pair.0, next));
                    edges.push((pair.1, next));
                    next
                });
                edges.push((child, node));
            }
        }
        let mut uf: Vec<usize> = (0..n + matings.len()).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for (a, b) in edges {
            let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
            if ra == rb {
                return Err(PedigreeError::Unsupported("pedigree contains a loop".to_string()));
            }
            uf[ra] = rb;
        }
        Ok(())
    }
}

fn validate_ages(m: &PedigreeMember) -> Result<(), PedigreeError> {
    let err = |message: String| Err(PedigreeError::InvalidAges { id: m.id.clone(), message });
    if !(m.censor_age.is_finite() && m.censor_age >= 0.0) {
        return err(format!("censor age {} must be a non-negative number", m.censor_age));
    }
    for (label, age) in [("breast", m.breast_age), ("ovarian", m.ovarian_age)] {
        if let Some(a) = age {
            if !(a.is_finite() && (MIN_AGE..=MAX_AGE).contains(&a)) {
                return err(format!("{label} cancer age {a} outside {MIN_AGE}-{MAX_AGE}"));
            }
            if a > m.censor_age {
                return err(format!("{label} cancer age {a} after censor age {}", m.censor_age));
            }
        }
    }
    Ok(())
}

/// Carrier probabilities `p(c1, c2 | family history)` for the proband, valid for a
/// proband known to be breast-cancer free at `as_of_age`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenotypePosterior {
    /// Weights indexed `c1 * 2 + c2`.
    pub weights: [f64; N_CELLS],
    pub as_of_age: f64,
}

impl GenotypePosterior {
    pub fn weight(&self, c1: u8, c2: u8) -> f64 {
        self.weights[cell_index(c1, c2)]
    }

    /// Point mass on one cell.
    pub fn degenerate(c1: u8, c2: u8, as_of_age: f64) -> Self {
        let mut weights = [0.0; N_CELLS];
        weights[cell_index(c1, c2)] = 1.0;
        Self { weights, as_of_age }
    }

    /// Weights conditional on being breast-cancer free at `age` instead of `as_of_age`.
    pub fn updated_to(&self, model: &GeneticModel, age: f64) -> [f64; N_CELLS] {
        let mut w = [0.0; N_CELLS];
        for (d, wd) in w.iter_mut().enumerate() {
            if self.weights[d] > 0.0 {
                let ratio = (-model.breast_hazard(d).cumulative(self.as_of_age.min(age), self.as_of_age.max(age))).exp();
                *wd = if age >= self.as_of_age { self.weights[d] * ratio } else { self.weights[d] / ratio };
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }
}

/// Likelihood of the family data given the proband's genotype cell.
pub fn pedigree_likelihood(ped: &Pedigree, cell: (u8, u8), model: &GeneticModel) -> Result<f64, SegregationError> {
    Ok(pedigree_log_likelihood(ped, cell, model)?.exp())
}

pub fn pedigree_log_likelihood(ped: &Pedigree, cell: (u8, u8), model: &GeneticModel) -> Result<f64, SegregationError> {
    let d = cell_index(cell.0, cell.1);
    let joint = proband_log_joint(ped, model);
    let ln_p = peeling::cell_log_sum(&joint, d);
    Ok(ln_p - model.prior()[d].ln())
}

/// Bayes posterior over the proband's six genotype cells.
pub fn genotype_posterior(ped: &Pedigree, model: &GeneticModel) -> Result<GenotypePosterior, SegregationError> {
    let joint = proband_log_joint(ped, model);
    let logs: Vec<f64> = (0..N_CELLS).map(|d| peeling::cell_log_sum(&joint, d)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SegregationError::ZeroLikelihood);
    }
    let mut weights = [0.0; N_CELLS];
    for (w, l) in weights.iter_mut().zip(&logs) {
        *w = (l - max).exp();
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GenotypePosterior { weights, as_of_age: ped.proband().censor_age.min(MAX_AGE) })
}

fn check_range(t: f64) -> Result<(), SegregationError> {
    if !(0.0..=MAX_AGE).contains(&t) {
        return Err(SegregationError::OutOfRange(t));
    }
    Ok(())
}

/// `S_G(t | x1)` conditional on breast-cancer-free survival to `t0`.
pub fn genetic_survivor(
    posterior: &GenotypePosterior,
    model: &GeneticModel,
    t0: f64,
    t: f64,
) -> Result<f64, SegregationError> {
    check_range(t0)?;
    check_range(t)?;
    if t < t0 {
        return Err(SegregationError::OutOfRange(t));
    }
    let w = posterior.updated_to(model, t0);
    Ok((0..N_CELLS)
        .filter(|&d| w[d] > 0.0)
        .map(|d| w[d] * (-model.breast_hazard(d).cumulative(t0, t)).exp())
        .sum())
}

/// Instantaneous genetic hazard `h_G(t | x1)` with weights updated by survival to `t`.
pub fn genetic_hazard(posterior: &GenotypePosterior, model: &GeneticModel, t: f64) -> Result<f64, SegregationError> {
    check_range(t)?;
    let w = posterior.updated_to(model, t);
    Ok((0..N_CELLS).map(|d| w[d] * model.breast_hazard(d).rate(t)).sum())
}

/// Average genetic hazard over `[a, b]` for someone cancer free at `a`:
/// `-ln(S_G(b|x1) / S_G(a|x1)) / (b - a)`.
pub fn genetic_mean_hazard(
    posterior: &GenotypePosterior,
    model: &GeneticModel,
    a: f64,
    b: f64,
) -> Result<f64, SegregationError> {
    let s = genetic_survivor(posterior, model, a, b)?;
    Ok(-s.ln() / (b - a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateTable;
    use approx::assert_relative_eq;

    fn model() -> GeneticModel {
        GeneticModel::new(SegregationParams::default(), &RateTable::default_incidence()).unwrap()
    }

    fn female(id: &str, age: f64) -> PedigreeMember {
        PedigreeMember::new(id, Sex::Female, age)
    }

    #[test]
    fn validation_errors() {
        let child = female("p", 40.0).with_parents("m", "f");
        assert!(matches!(Pedigree::new(vec![child.clone()]), Err(PedigreeError::MissingParent { .. })));
        let mut one = child.clone();
        one.father_id = None;
        let ped = Pedigree::new(vec![one, female("m", 60.0)]);
        assert!(matches!(ped, Err(PedigreeError::Unsupported(_))));
        let mut late = female("p", 40.0);
        late.breast_age = Some(45.0);
        assert!(matches!(Pedigree::new(vec![late]), Err(PedigreeError::InvalidAges { .. })));
        assert!(matches!(
            Pedigree::new(vec![female("p", 40.0), female("p", 50.0)]),
            Err(PedigreeError::DuplicateId(_))
        ));
    }

    #[test]
    fn rejects_cycles_and_loops() {
        // Ancestry cycle: a is the mother of b and b the mother of a.
        let a = female("a", 40.0).with_parents("b", "f");
        let b = female("b", 60.0).with_parents("a", "f");
        let f = PedigreeMember::new("f", Sex::Male, 70.0);
        assert!(Pedigree::new(vec![a, b, f]).is_err());

        // First-cousin marriage closes a loop.
        let mut v = vec![
            female("p", 30.0).with_parents("c1", "c2"),
            female("gm", 80.0),
            PedigreeMember::new("gf", Sex::Male, 80.0),
            female("s1", 55.0).with_parents("gm", "gf"),
            PedigreeMember::new("s2", Sex::Male, 55.0).with_parents("gm", "gf"),
            PedigreeMember::new("x1", Sex::Male, 55.0),
            female("x2", 55.0),
        ];
        v.push(female("c1", 35.0).with_parents("s1", "x1"));
        v.push(PedigreeMember::new("c2", Sex::Male, 35.0).with_parents("x2", "s2"));
        let err = Pedigree::new(v).unwrap_err();
        assert!(matches!(err, PedigreeError::Unsupported(ref m) if m.contains("loop")), "{err}");
    }

    #[test]
    fn singleton_likelihood_is_survival_product() {
        let m = model();
        let ped = Pedigree::singleton(45.0);
        for c1 in 0..3 {
            for c2 in 0..2 {
                let d = cell_index(c1, c2);
                let want = m.survivor(d, 45.0) * m.ovarian_survivor(c1, 45.0);
                let got = pedigree_likelihood(&ped, (c1, c2), &m).unwrap();
                assert_relative_eq!(got, want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn uninformative_young_proband_is_near_prior() {
        let m = model();
        let post = genotype_posterior(&Pedigree::singleton(20.0), &m).unwrap();
        for d in 0..N_CELLS {
            assert!((post.weights[d] - m.prior()[d]).abs() < 1e-3);
        }
        assert_relative_eq!(post.weights.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn tested_proband_pins_c1() {
        let m = model();
        let mut p = female("p", 40.0);
        p.brca_test = BrcaTest::Brca2;
        let post = genotype_posterior(&Pedigree::new(vec![p]).unwrap(), &m).unwrap();
        assert_relative_eq!(post.weight(2, 0) + post.weight(2, 1), 1.0, max_relative = 1e-14);
        assert_eq!(post.weight(0, 0), 0.0);
        assert_eq!(post.weight(1, 1), 0.0);
    }

    #[test]
    fn affected_mother_raises_carrier_probability() {
        let m = model();
        let base = genotype_posterior(&Pedigree::singleton(40.0), &m).unwrap();
        let mut mother = female("m", 60.0);
        mother.breast_age = Some(40.0);
        let ped = Pedigree::new(vec![
            female("p", 40.0).with_parents("m", "f"),
            mother,
            PedigreeMember::new("f", Sex::Male, 65.0),
        ])
        .unwrap();
        let post = genotype_posterior(&ped, &m).unwrap();
        assert!(post.weight(0, 1) > base.weight(0, 1));
        assert!(post.weight(1, 0) + post.weight(1, 1) > base.weight(1, 0) + base.weight(1, 1));
    }

    #[test]
    fn survivor_examples() {
        let m = model();
        let post = GenotypePosterior::degenerate(0, 0, 30.0);
        let s = genetic_survivor(&post, &m, 30.0, 60.0).unwrap();
        assert_relative_eq!(s, m.survivor(0, 60.0) / m.survivor(0, 30.0), max_relative = 1e-12);
        assert_eq!(genetic_survivor(&post, &m, 30.0, 30.0).unwrap(), 1.0);

        // Two-cell toy mixture with weights fixed at t0 is an arithmetic mixture.
        let mut toy = GenotypePosterior { weights: [0.0; N_CELLS], as_of_age: 40.0 };
        toy.weights[0] = 0.5;
        toy.weights[2] = 0.5;
        let s = genetic_survivor(&toy, &m, 40.0, 50.0).unwrap();
        let s0 = m.survivor(0, 50.0) / m.survivor(0, 40.0);
        let s1 = m.survivor(2, 50.0) / m.survivor(2, 40.0);
        assert_relative_eq!(s, 0.5 * s0 + 0.5 * s1, max_relative = 1e-12);
        assert!(genetic_survivor(&toy, &m, 40.0, 90.0).is_err());
    }

    #[test]
    fn hazard_brackets_and_matches_finite_difference() {
        let m = model();
        let mut post = GenotypePosterior { weights: [0.0; N_CELLS], as_of_age: 35.0 };
        post.weights = [0.5, 0.2, 0.1, 0.1, 0.05, 0.05];
        for t in [35.3, 41.7, 52.2, 66.6, 79.5] {
            let h = genetic_hazard(&post, &m, t).unwrap();
            let rates: Vec<f64> = (0..N_CELLS).map(|d| m.breast_hazard(d).rate(t)).collect();
            let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rates.iter().copied().fold(0.0, f64::max);
            assert!(h >= lo && h <= hi);
            let eps = 1e-5;
            let s_minus = genetic_survivor(&post, &m, 35.0, t - eps).unwrap();
            let s_plus = genetic_survivor(&post, &m, 35.0, t + eps).unwrap();
            let fd = -(s_plus.ln() - s_minus.ln()) / (2.0 * eps);
            assert_relative_eq!(fd, h, max_relative = 1e-6);
        }
        let nc = GenotypePosterior::degenerate(0, 0, 30.0);
        assert_eq!(genetic_hazard(&nc, &m, 50.5).unwrap(), m.breast_hazard(0).rate(50.5));
    }

    #[test]
    fn population_average_hazard_matches_incidence() {
        // Prior weights updated by survival reproduce the incidence rate, averaged per year.
        let inc = RateTable::default_incidence();
        let m = model();
        let prior = GenotypePosterior { weights: *m.prior(), as_of_age: 0.0 };
        for k in 20..85 {
            let a = k as f64;
            let avg = genetic_mean_hazard(&prior, &m, a, a + 1.0).unwrap();
            assert!((avg - inc.rate_at(a)).abs() < 1e-8, "age {a}: {avg} vs {}", inc.rate_at(a));
        }
    }
}
