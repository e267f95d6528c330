//! Pedigree text format.
//!
//! Comma-separated, one member per line, with the header
//! `id,sex,mother_id,father_id,breast_age,ovarian_age,censor_age,brca_test`.
//! The first data row is the proband. Empty fields mean "none"; `sex` is `F` or `M`;
//! `brca_test` is one of `untested`, `negative`, `brca1`, `brca2` (empty = untested).
//! Fields containing commas or quotes are double-quoted with `""` escaping a quote.
//! Lines starting with `#` are comments.

use std::io::Read;

use super::{BrcaTest, Pedigree, PedigreeError, PedigreeMember, Sex};

const HEADER: [&str; 8] = ["id", "sex", "mother_id", "father_id", "breast_age", "ovarian_age", "censor_age", "brca_test"];

pub fn parse_pedigree<R: Read>(source: R) -> Result<Pedigree, PedigreeError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| PedigreeError::Parse { line: 1, field: String::new(), message: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(PedigreeError::Parse {
            line: 1,
            field: "header".to_string(),
            message: format!("expected `{}`", HEADER.join(",")),
        });
    }
    let mut members = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| PedigreeError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            field: String::new(),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |field: &str, message: String| PedigreeError::Parse { line, field: field.to_string(), message };
        let text = |i: usize| record.get(i).unwrap_or("");
        let opt_text = |i: usize| Some(text(i)).filter(|s| !s.is_empty()).map(str::to_string);
        let opt_age = |i: usize| -> Result<Option<f64>, PedigreeError> {
            match text(i) {
                "" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|e| err(HEADER[i], format!("`{s}`: {e}"))),
            }
        };
        let id = text(0).to_string();
        if id.is_empty() {
            return Err(err("id", "missing id".to_string()));
        }
        let sex = match text(1).to_ascii_lowercase().as_str() {
            "f" | "female" => Sex::Female,
            "m" | "male" => Sex::Male,
            s => return Err(err("sex", format!("`{s}` is not F or M"))),
        };
        let censor_age = opt_age(6)?.ok_or_else(|| err("censor_age", "missing censor age".to_string()))?;
        let brca_test = match text(7).to_ascii_lowercase().as_str() {
            "" | "untested" => BrcaTest::Untested,
            "negative" => BrcaTest::Negative,
            "brca1" => BrcaTest::Brca1,
            "brca2" => BrcaTest::Brca2,
            s => return Err(err("brca_test", format!("unknown test result `{s}`"))),
        };
        members.push(PedigreeMember {
            id,
            sex,
            mother_id: opt_text(2),
            father_id: opt_text(3),
            breast_age: opt_age(4)?,
            ovarian_age: opt_age(5)?,
            censor_age,
            brca_test,
        });
    }
    Pedigree::new(members)
}

pub fn serialize_pedigree(ped: &Pedigree) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(HEADER).expect("write to memory");
    let age = |a: Option<f64>| a.map_or_else(String::new, |x| x.to_string());
    for m in ped.members() {
        let sex = match m.sex {
            Sex::Female => "F",
            Sex::Male => "M",
        };
        let test = match m.brca_test {
            BrcaTest::Untested => "untested",
            BrcaTest::Negative => "negative",
            BrcaTest::Brca1 => "brca1",
            BrcaTest::Brca2 => "brca2",
        };
        writer
            .write_record([
                m.id.as_str(),
                sex,
                m.mother_id.as_deref().unwrap_or(""),
                m.father_id.as_deref().unwrap_or(""),
                &age(m.breast_age),
                &age(m.ovarian_age),
                &m.censor_age.to_string(),
                test,
            ])
            .expect("write to memory");
    }
    String::from_utf8(writer.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}
