//! Exact pedigree likelihood by variable elimination (peeling).
//!
//! Each person's genotype has 27 states: allele counts 0..=2 at the BRCA1, BRCA2 and
//! unknown-gene loci, which are inherited independently. State `s` encodes
//! `(brca1, brca2, unknown) = (s / 9, s / 3 % 3, s % 3)`.

use super::model::{cell_index, GeneticModel};
use super::{Pedigree, PedigreeMember, Sex};

pub const N_STATES: usize = 27;

fn alleles(s: usize) -> [usize; 3] {
    [s / 9, s / 3 % 3, s % 3]
}

/// Genotype cell `c1 * 2 + c2` of a 27-state genotype.
pub fn state_cell(s: usize) -> usize {
    let [a1, a2, u] = alleles(s);
    let c1 = if a1 > 0 {
        1
    } else if a2 > 0 {
        2
    } else {
        0
    };
    cell_index(c1, (u > 0) as u8)
}

fn allele_freq(prevalence: f64) -> f64 {
    1.0 - (1.0 - prevalence).sqrt()
}

fn hardy_weinberg(q: f64, count: usize) -> f64 {
    match count {
        0 => (1.0 - q) * (1.0 - q),
        1 => 2.0 * q * (1.0 - q),
        _ => q * q,
    }
}

/// Population frequency of a 27-state genotype.
pub fn founder_prior(model: &GeneticModel, s: usize) -> f64 {
    let p = model.params();
    let q = [allele_freq(p.brca1_prev), allele_freq(p.brca2_prev), allele_freq(p.beta)];
    alleles(s).iter().zip(q).map(|(&g, q)| hardy_weinberg(q, g)).product()
}

fn locus_transmission(child: usize, mother: usize, father: usize) -> f64 {
    let pm = mother as f64 / 2.0;
    let pf = father as f64 / 2.0;
    match child {
        0 => (1.0 - pm) * (1.0 - pf),
        1 => pm * (1.0 - pf) + (1.0 - pm) * pf,
        _ => pm * pf,
    }
}

/// Mendelian probability of a child's genotype given the parents' genotypes.
pub fn transmission(child: usize, mother: usize, father: usize) -> f64 {
    let (c, m, f) = (alleles(child), alleles(mother), alleles(father));
    (0..3).map(|l| locus_transmission(c[l], m[l], f[l])).product()
}

/// Probability of a member's observed phenotype and test result given their genotype.
/// Male phenotypes are not used.
pub fn member_likelihood(model: &GeneticModel, member: &PedigreeMember, s: usize) -> f64 {
    let cell = state_cell(s);
    let c1 = (cell / 2) as u8;
    if !member.brca_test.allows(c1) {
        return 0.0;
    }
    if member.sex == Sex::Male {
        return 1.0;
    }
    let breast = match member.breast_age {
        Some(a) => model.breast_density(cell, a),
        None => model.survivor(cell, member.censor_age),
    };
    let ovarian = match member.ovarian_age {
        Some(a) => model.ovarian_density(c1, a),
        None => model.ovarian_survivor(c1, member.censor_age),
    };
    breast * ovarian
}

#[derive(Debug, Clone)]
struct Factor {
    /// Sorted variable ids; the first is the most significant digit.
    vars: Vec<usize>,
    vals: Vec<f64>,
}

impl Factor {
    fn index_of(&self, assignment: &[usize], positions: &[usize]) -> usize {
        positions.iter().fold(0, |acc, &p| acc * N_STATES + assignment[p])
    }
}

/// Log of `P(family data, proband genotype = s)` for each of the 27 proband states.
pub fn proband_log_joint(ped: &Pedigree, model: &GeneticModel) -> [f64; N_STATES] {
    let n = ped.len();
    let mut factors: Vec<Factor> = Vec::with_capacity(2 * n);
    for (i, m) in ped.members().iter().enumerate() {
        let founder = ped.parents_of(i).is_none();
        let vals = (0..N_STATES)
            .map(|s| {
                let l = member_likelihood(model, m, s);
                if founder {
                    l * founder_prior(model, s)
                } else {
                    l
                }
            })
            .collect();
        factors.push(Factor { vars: vec![i], vals });
        if let Some((mo, fa)) = ped.parents_of(i) {
            let mut vars = vec![i, mo, fa];
            vars.sort_unstable();
            let mut vals = vec![0.0; N_STATES.pow(3)];
            let mut a = [0usize; 3];
            for (idx, v) in vals.iter_mut().enumerate() {
                a[0] = idx / (N_STATES * N_STATES);
                a[1] = idx / N_STATES % N_STATES;
                a[2] = idx % N_STATES;
                let get = |who: usize| a[vars.iter().position(|&x| x == who).unwrap()];
                *v = transmission(get(i), get(mo), get(fa));
            }
            factors.push(Factor { vars, vals });
        }
    }

    let mut log_scale = 0.0_f64;
    let mut remaining: Vec<usize> = (1..n).collect();
    while !remaining.is_empty() {
        // Greedy order: eliminate the variable whose product factor is smallest.
        let (pos, v) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &v)| (pos, v, union_scope(&factors, v).len()))
            .min_by_key(|&(_, v, size)| (size, v))
            .map(|(pos, v, _)| (pos, v))
            .unwrap();
        remaining.swap_remove(pos);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = rest;
        let mut f = sum_out(&touching, v);
        let max = f.vals.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            f.vals.iter_mut().for_each(|x| *x /= max);
            log_scale += max.ln();
        }
        factors.push(f);
    }

    let mut out = [log_scale; N_STATES];
    for (s, o) in out.iter_mut().enumerate() {
        let mut prod = 1.0;
        for f in &factors {
            prod *= match f.vars.len() {
                0 => f.vals[0],
                _ => f.vals[s],
            };
        }
        *o += prod.ln();
    }
    out
}

fn union_scope(factors: &[Factor], v: usize) -> Vec<usize> {
    let mut scope: Vec<usize> = factors.iter().filter(|f| f.vars.contains(&v)).flat_map(|f| f.vars.iter().copied()).collect();
    scope.sort_unstable();
    scope.dedup();
    scope
}

/// Multiplies `factors` and sums out variable `v`.
fn sum_out(factors: &[Factor], v: usize) -> Factor {
    let mut scope: Vec<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
    scope.sort_unstable();
    scope.dedup();
    let out_vars: Vec<usize> = scope.iter().copied().filter(|&x| x != v).collect();
    let v_pos = scope.iter().position(|&x| x == v).unwrap();
    let positions: Vec<Vec<usize>> = factors
        .iter()
        .map(|f| f.vars.iter().map(|x| scope.iter().position(|y| y == x).unwrap()).collect())
        .collect();
    let out_len = N_STATES.pow(out_vars.len() as u32);
    let mut vals = vec![0.0; out_len];
    let mut assignment = vec![0usize; scope.len()];
    for (o, val) in vals.iter_mut().enumerate() {
        let mut rem = o;
        for k in (0..out_vars.len()).rev() {
            let slot = if k >= v_pos { k + 1 } else { k };
            assignment[slot] = rem % N_STATES;
            rem /= N_STATES;
        }
        let mut total = 0.0;
        for sv in 0..N_STATES {
            assignment[v_pos] = sv;
            let mut prod = 1.0;
            for (f, pos) in factors.iter().zip(&positions) {
                prod *= f.vals[f.index_of(&assignment, pos)];
                if prod == 0.0 {
                    break;
                }
            }
            total += prod;
        }
        *val = total;
    }
    Factor { vars: out_vars, vals }
}

/// Log of the summed joint over the proband states mapping to cell `d`.
pub(super) fn cell_log_sum(joint: &[f64; N_STATES], d: usize) -> f64 {
    let logs: Vec<f64> = (0..N_STATES).filter(|&s| state_cell(s) == d).map(|s| joint[s]).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::super::model::{cell_prior, SegregationParams};
    use super::super::{BrcaTest, PedigreeMember};
    use super::*;
    use crate::rates::RateTable;
    use proptest::prelude::*;

    fn model() -> GeneticModel {
        GeneticModel::new(SegregationParams::default(), &RateTable::default_incidence()).unwrap()
    }

    /// Brute force over every genotype vector, children drawn in topological order.
    fn enumerate(ped: &Pedigree, m: &GeneticModel) -> [f64; N_STATES] {
        let n = ped.len();
        let mut order: Vec<usize> = Vec::new();
        let mut placed = vec![false; n];
        while order.len() < n {
            for i in 0..n {
                if !placed[i] && ped.parents_of(i).is_none_or(|(a, b)| placed[a] && placed[b]) {
                    placed[i] = true;
                    order.push(i);
                }
            }
        }
        let mut out = [0.0; N_STATES];
        let mut g = vec![0usize; n];
        fn rec(k: usize, w: f64, order: &[usize], g: &mut [usize], ped: &Pedigree, m: &GeneticModel, out: &mut [f64; N_STATES]) {
            if k == order.len() {
                out[g[0]] += w;
                return;
            }
            let i = order[k];
            for s in 0..N_STATES {
                let base = match ped.parents_of(i) {
                    None => founder_prior(m, s),
                    Some((a, b)) => transmission(s, g[a], g[b]),
                };
                let wi = w * base * member_likelihood(m, &ped.members()[i], s);
                if wi > 0.0 {
                    g[i] = s;
                    rec(k + 1, wi, order, g, ped, m, out);
                }
            }
        }
        rec(0, 1.0, &order, &mut g, ped, m, &mut out);
        out
    }

    #[test]
    fn founder_prior_marginals() {
        let m = model();
        let total: f64 = (0..N_STATES).map(|s| founder_prior(&m, s)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let cells = cell_prior(m.params());
        for (d, want) in cells.iter().enumerate() {
            let got: f64 = (0..N_STATES).filter(|&s| state_cell(s) == d).map(|s| founder_prior(&m, s)).sum();
            assert!((got - want).abs() < 1e-15, "cell {d}");
        }
    }

    #[test]
    fn transmission_rows_sum_to_one() {
        for mo in 0..N_STATES {
            for fa in 0..N_STATES {
                let t: f64 = (0..N_STATES).map(|c| transmission(c, mo, fa)).sum();
                assert!((t - 1.0).abs() < 1e-15);
            }
        }
    }

    fn assert_close(a: &[f64; N_STATES], b: &[f64; N_STATES]) {
        for s in 0..N_STATES {
            if b[s] == 0.0 {
                assert_eq!(a[s], f64::NEG_INFINITY, "state {s}");
            } else {
                assert!((a[s] - b[s].ln()).abs() < 1e-10, "state {s}: {} vs {}", a[s], b[s].ln());
            }
        }
    }

    #[test]
    fn tested_mother_matches_enumeration() {
        let m = model();
        let mut mother = PedigreeMember::new("m", Sex::Female, 62.0);
        mother.brca_test = BrcaTest::Brca1;
        mother.breast_age = Some(44.0);
        let ped = Pedigree::new(vec![
            PedigreeMember::new("p", Sex::Female, 38.0).with_parents("m", "f"),
            mother,
            PedigreeMember::new("f", Sex::Male, 64.0),
        ])
        .unwrap();
        assert_close(&proband_log_joint(&ped, &m), &enumerate(&ped, &m));
    }

    fn random_pedigree() -> impl Strategy<Value = Pedigree> {
        (prop::collection::vec((0u8..4, 0u32..1000), 1..7), prop::collection::vec((20.0f64..85.0, 0u8..8, 0u8..6), 6))
            .prop_map(|(ops, pheno)| build_pedigree(&ops, &pheno))
    }

    /// Grows a loop-free pedigree of at most 6 members from random operations.
    fn build_pedigree(ops: &[(u8, u32)], pheno: &[(f64, u8, u8)]) -> Pedigree {
        let mut members = vec![PedigreeMember::new("0", Sex::Female, 40.0)];
        for &(op, pick) in ops {
            if members.len() >= 6 {
                break;
            }
            let n = members.len();
            let target = pick as usize % n;
            match op {
                // Add both parents to someone who has none.
                0 | 1 if members[target].mother_id.is_none() && n + 2 <= 6 => {
                    let (mo, fa) = (n.to_string(), (n + 1).to_string());
                    members[target].mother_id = Some(mo.clone());
                    members[target].father_id = Some(fa.clone());
                    members.push(PedigreeMember::new(mo, Sex::Female, 60.0));
                    members.push(PedigreeMember::new(fa, Sex::Male, 60.0));
                }
                // Add a sibling.
                2 if members[target].mother_id.is_some() => {
                    let t = &members[target];
                    let sib = PedigreeMember::new(n.to_string(), if pick % 2 == 0 { Sex::Female } else { Sex::Male }, 45.0)
                        .with_parents(t.mother_id.clone().unwrap(), t.father_id.clone().unwrap());
                    members.push(sib);
                }
                // Add a child with a new spouse.
                3 if n + 2 <= 6 => {
                    let t = &members[target];
                    let (spouse_sex, tsex) = match t.sex {
                        Sex::Female => (Sex::Male, Sex::Female),
                        Sex::Male => (Sex::Female, Sex::Male),
                    };
                    let spouse = PedigreeMember::new(n.to_string(), spouse_sex, 50.0);
                    let (mo, fa) = match tsex {
                        Sex::Female => (t.id.clone(), spouse.id.clone()),
                        Sex::Male => (spouse.id.clone(), t.id.clone()),
                    };
                    members.push(spouse);
                    members.push(PedigreeMember::new((n + 1).to_string(), Sex::Female, 25.0).with_parents(mo, fa));
                }
                _ => {}
            }
        }
        for (m, &(age, ev, test)) in members.iter_mut().zip(pheno) {
            m.censor_age = age;
            if ev % 4 == 1 {
                m.breast_age = Some(20.0 + (age - 20.0) * 0.6);
            }
            if ev % 4 == 2 {
                m.ovarian_age = Some(20.0 + (age - 20.0) * 0.8);
            }
            if ev % 4 == 3 {
                m.breast_age = Some(20.0 + (age - 20.0) * 0.5);
                m.ovarian_age = Some(age);
            }
            m.brca_test = match test {
                1 => BrcaTest::Negative,
                2 => BrcaTest::Brca1,
                3 => BrcaTest::Brca2,
                _ => BrcaTest::Untested,
            };
        }
        members[0].censor_age = members[0].censor_age.max(members[0].breast_age.unwrap_or(0.0));
        Pedigree::new(members).expect("generator builds valid pedigrees")
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn peeling_equals_enumeration(ped in random_pedigree()) {
            let m = model();
            let peel = proband_log_joint(&ped, &m);
            let brute = enumerate(&ped, &m);
            for s in 0..N_STATES {
                if brute[s] == 0.0 {
                    prop_assert_eq!(peel[s], f64::NEG_INFINITY);
                } else {
                    prop_assert!((peel[s] - brute[s].ln()).abs() < 1e-10);
                }
            }
        }
    }
}
