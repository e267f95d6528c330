//! Cohort and hazard-curve CSV files.
//!
//! Cohort: `id,entry_age,exit_age,cause` (cause 0 censored, 1 breast, 2 other death)
//! with optional `censor_time` (potential censoring, years from entry) and either
//! `curve,multiplier` referring to a curve file or `profile` naming a JSON subject file
//! (`{"profile": …, "pedigree": […]}`) relative to a base directory.
//!
//! Curves: `curve,age_lo,age_hi,breast,other`, contiguous bands per curve id.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::PathBuf;
use std::sync::Arc;

use super::{CalibError, Cause, FollowUpRecord};
use crate::hazard::{Hazard, PiecewiseHazard, ScaledHazard};
use crate::risk::{RiskModel, SubjectInput};

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePair {
    pub breast: Arc<PiecewiseHazard>,
    pub other: Arc<PiecewiseHazard>,
}

pub type CurveSet = BTreeMap<String, CurvePair>;

/// Where `profile` cohort entries are resolved.
pub struct ProfileSource<'a> {
    pub model: &'a RiskModel,
    pub base_dir: PathBuf,
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(source)
}

fn parse_err(line: u64, field: &str, message: impl Into<String>) -> CalibError {
    CalibError::Parse { line, field: field.to_string(), message: message.into() }
}

fn csv_err(e: csv::Error) -> CalibError {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(line, "", e.to_string())
}

struct Columns {
    names: Vec<String>,
}

impl Columns {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize, CalibError> {
        self.index(name).ok_or_else(|| parse_err(1, name, "missing column"))
    }
}

fn number(record: &csv::StringRecord, i: usize, field: &str, line: u64) -> Result<f64, CalibError> {
    let s = record.get(i).unwrap_or("");
    s.parse::<f64>().map_err(|e| parse_err(line, field, format!("`{s}`: {e}")))
}

pub fn read_curves<R: Read>(source: R) -> Result<CurveSet, CalibError> {
    let mut rdr = reader(source);
    let cols = Columns { names: rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect() };
    let (ic, ilo, ihi) = (cols.require("curve")?, cols.require("age_lo")?, cols.require("age_hi")?);
    let (ib, io) = (cols.require("breast")?, cols.require("other")?);
    // curve -> (knots, breast rates, other rates)
    let mut raw: BTreeMap<String, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(ic).unwrap_or("").to_string();
        let lo = number(&rec, ilo, "age_lo", line)?;
        let hi = number(&rec, ihi, "age_hi", line)?;
        let b = number(&rec, ib, "breast", line)?;
        let o = number(&rec, io, "other", line)?;
        let entry = raw.entry(id).or_default();
        match entry.0.last() {
            None => entry.0.extend([lo, hi]),
            Some(&last) if last == lo => entry.0.push(hi),
            Some(&last) => return Err(parse_err(line, "age_lo", format!("band starts at {lo}, previous ended at {last}"))),
        }
        entry.1.push(b);
        entry.2.push(o);
    }
    raw.into_iter()
        .map(|(id, (knots, b, o))| {
            let bad = |e: crate::hazard::HazardError| parse_err(0, "curve", format!("curve {id}: {e}"));
            let breast = PiecewiseHazard::new(knots.clone(), b).map_err(bad)?;
            let other = PiecewiseHazard::new(knots, o).map_err(bad)?;
            Ok((id, CurvePair { breast: Arc::new(breast), other: Arc::new(other) }))
        })
        .collect()
}

pub fn read_cohort<R: Read>(
    source: R,
    curves: Option<&CurveSet>,
    profiles: Option<&ProfileSource<'_>>,
) -> Result<Vec<FollowUpRecord>, CalibError> {
    let mut rdr = reader(source);
    let cols = Columns { names: rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect() };
    let (iid, ientry, iexit, icause) =
        (cols.require("id")?, cols.require("entry_age")?, cols.require("exit_age")?, cols.require("cause")?);
    let itc = cols.index("censor_time");
    let icurve = cols.index("curve");
    let imult = cols.index("multiplier");
    let iprofile = cols.index("profile");
    if icurve.is_none() && iprofile.is_none() {
        return Err(parse_err(1, "curve", "cohort needs a `curve` or a `profile` column"));
    }
    let mut subjects: HashMap<String, SubjectInput> = HashMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let text = |i: usize| rec.get(i).unwrap_or("");
        let opt = |i: Option<usize>| i.map(text).filter(|s| !s.is_empty());
        let id = text(iid).to_string();
        let entry = number(&rec, ientry, "entry_age", line)?;
        let exit = number(&rec, iexit, "exit_age", line)?;
        let cause = text(icause)
            .parse::<u8>()
            .ok()
            .and_then(Cause::from_code)
            .ok_or_else(|| parse_err(line, "cause", format!("`{}` is not 0, 1 or 2", text(icause))))?;
        let (h1, h2) = if let Some(curve) = opt(icurve) {
            let set = curves.ok_or_else(|| parse_err(line, "curve", "no curve file supplied"))?;
            let pair = set.get(curve).ok_or_else(|| parse_err(line, "curve", format!("unknown curve `{curve}`")))?;
            let m = match opt(imult) {
                Some(s) => s.parse::<f64>().map_err(|e| parse_err(line, "multiplier", format!("`{s}`: {e}")))?,
                None => 1.0,
            };
            if !(m >= 0.0 && m.is_finite()) {
                return Err(parse_err(line, "multiplier", format!("{m} is not a non-negative number")));
            }
            (ScaledHazard::new(pair.breast.clone(), m), ScaledHazard::new(pair.other.clone(), 1.0))
        } else if let Some(path) = opt(iprofile) {
            let src = profiles.ok_or_else(|| parse_err(line, "profile", "profile references need a risk model"))?;
            if !subjects.contains_key(path) {
                let full = src.base_dir.join(path);
                let body = std::fs::read_to_string(&full)
                    .map_err(|e| CalibError::Io { path: full.display().to_string(), message: e.to_string() })?;
                let de = &mut serde_json::Deserializer::from_str(&body);
                let subject: SubjectInput = serde_path_to_error::deserialize(de)
                    .map_err(|e| parse_err(line, "profile", format!("{path}: {}: {}", e.path(), e.inner())))?;
                subjects.insert(path.to_string(), subject);
            }
            let subject = &subjects[path];
            let hazard = subject
                .pedigree()
                .and_then(|ped| src.model.subject_hazard(ped.as_ref(), &subject.profile, entry))
                .map_err(|e| parse_err(line, "profile", format!("{path}: {e}")))?;
            (
                ScaledHazard::unscaled(hazard.breast),
                ScaledHazard::unscaled(src.model.mortality().hazard().clone()),
            )
        } else {
            return Err(parse_err(line, "curve", "row has neither a curve nor a profile"));
        };
        let mut record = FollowUpRecord::new(id, entry, exit, cause, h1, h2)
            .map_err(|e| parse_err(line, "exit_age", e.to_string()))?;
        if let Some(s) = opt(itc) {
            let tc = s.parse::<f64>().map_err(|e| parse_err(line, "censor_time", format!("`{s}`: {e}")))?;
            record = record.with_censor_time(tc);
        }
        out.push(record);
    }
    Ok(out)
}

/// Cohort and curve CSV text for `records`. Subjects sharing base hazards share a curve.
pub fn write_cohort(records: &[FollowUpRecord]) -> (String, String) {
    let mut ids: HashMap<(usize, usize), String> = HashMap::new();
    let mut curves: Vec<(String, PiecewiseHazard, PiecewiseHazard)> = Vec::new();
    let mut cohort = csv::Writer::from_writer(Vec::new());
    cohort
        .write_record(["id", "entry_age", "exit_age", "cause", "censor_time", "curve", "multiplier"])
        .expect("write to memory");
    for r in records {
        // A scaled competing hazard cannot be shared, so it gets its own curve.
        let key = (Arc::as_ptr(&r.h1.base) as usize, if r.h2.multiplier == 1.0 { Arc::as_ptr(&r.h2.base) as usize } else { usize::MAX - curves.len() });
        let curve = ids
            .entry(key)
            .or_insert_with(|| {
                let id = format!("c{}", curves.len());
                curves.push((id.clone(), (*r.h1.base).clone(), r.h2.to_piecewise()));
                id
            })
            .clone();
        cohort
            .write_record([
                r.id.clone(),
                r.entry_age.to_string(),
                r.exit_age.to_string(),
                r.cause.code().to_string(),
                r.censor_time.map_or_else(String::new, |t| t.to_string()),
                curve,
                r.h1.multiplier.to_string(),
            ])
            .expect("write to memory");
    }
    let mut curve_csv = csv::Writer::from_writer(Vec::new());
    curve_csv.write_record(["curve", "age_lo", "age_hi", "breast", "other"]).expect("write to memory");
    for (id, breast, other) in &curves {
        // Both hazards on the union of their knots.
        let mut knots: Vec<f64> = breast.knots().iter().chain(other.knots()).copied().collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        for w in knots.windows(2) {
            curve_csv
                .write_record([
                    id.clone(),
                    w[0].to_string(),
                    w[1].to_string(),
                    breast.rate(w[0]).to_string(),
                    other.rate(w[0]).to_string(),
                ])
                .expect("write to memory");
        }
    }
    let text = |w: csv::Writer<Vec<u8>>| String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    (text(cohort), text(curve_csv))
}
