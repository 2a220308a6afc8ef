//! Outcome evaluation of cluster assignments: Kaplan–Meier curves, the
//! k-group log-rank test, Cox proportional hazards, Harrell's concordance
//! and the Table-style report row built from them.
//!
//! Times are in months. Records are right-censored (`event == false` means
//! the subject was alive at `time`).

mod concordance;
mod cox;
mod km;
mod logrank;
mod report;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};

pub use concordance::{concordance_index, concordance_index_with, harrell_c, Concordance, BOOTSTRAP_RESAMPLES};
pub use cox::{cluster_indicators, cox_fit, cox_fit_with, max_pairwise_hr, CoxModel, CoxOptions, PairwiseHr, Ties};
pub use km::{kaplan_meier, KmCurve, KmStep};
pub use logrank::{chi2_sf, log_rank, log_rank_by_label, LogRank};
pub use report::{format_concordance, format_hr, format_p, format_table, MethodRow};

/// Three-year follow-up cap used by the synthetic generator.
pub const HORIZON_MONTHS: f64 = 36.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub id: String,
    pub time: f64,
    pub event: bool,
    pub age: Option<f64>,
    pub sex: Option<u8>,
}

impl SurvivalRecord {
    pub fn new(id: impl Into<String>, time: f64, event: bool) -> Result<Self> {
        let r = SurvivalRecord {
            id: id.into(),
            time,
            event,
            age: None,
            sex: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_covariates(mut self, age: f64, sex: u8) -> Result<Self> {
        self.age = Some(age);
        self.sex = Some(sex);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.time >= 0.0) || !self.time.is_finite() {
            return Err(Error::InvalidArgument(format!("`{}`: time {} must be finite and >= 0", self.id, self.time)));
        }
        if self.age.is_some_and(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(format!("`{}`: non-finite age", self.id)));
        }
        if self.sex.is_some_and(|s| s > 1) {
            return Err(Error::InvalidArgument(format!("`{}`: sex must be 0 or 1", self.id)));
        }
        Ok(())
    }
}

pub fn event_count(records: &[SurvivalRecord]) -> usize {
    records.iter().filter(|r| r.event).count()
}

/// Reorders `records` to follow `ids`. Every id must be present.
pub fn align_records(records: &[SurvivalRecord], ids: &[String]) -> Result<Vec<SurvivalRecord>> {
    let by_id: HashMap<&str, &SurvivalRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|r| (*r).clone())
                .ok_or_else(|| Error::Schema(format!("no survival record for patient `{id}`")))
        })
        .collect()
}

const BASE_HEADER: [&str; 3] = ["patient_id", "time_months", "event"];

pub fn read_survival_csv(path: impl AsRef<Path>) -> Result<Vec<SurvivalRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    survival_from_csv_reader(file).map_err(|e| match e {
        Error::Parse { msg, .. } => parse_err(path, msg),
        other => other,
    })
}

/// Header `patient_id,time_months,event` optionally followed by `age,sex`.
pub fn survival_from_csv_reader(reader: impl std::io::Read) -> Result<Vec<SurvivalRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err("<csv>", e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let covariates = if header == BASE_HEADER {
        false
    } else if header.len() == 5 && header[..3] == BASE_HEADER && header[3] == "age" && header[4] == "sex" {
        true
    } else {
        return Err(parse_err(
            "<csv>",
            format!("header `{}` is not `patient_id,time_months,event[,age,sex]`", header.join(",")),
        ));
    };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| parse_err("<csv>", format!("line {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(parse_err(
                "<csv>",
                format!("line {line}: {} fields, expected {}", rec.len(), header.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j].trim().parse().map_err(|_| {
                parse_err("<csv>", format!("line {line}, column `{}`: `{}` is not a number", header[j], &rec[j]))
            })
        };
        let event = match rec[2].trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err("<csv>", format!("line {line}: event `{other}` must be 0 or 1"))),
        };
        let mut record = SurvivalRecord {
            id,
            time: num(1)?,
            event,
            age: None,
            sex: None,
        };
        if covariates {
            record.age = Some(num(3)?);
            record.sex = Some(match rec[4].trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(parse_err("<csv>", format!("line {line}: sex `{other}` must be 0 or 1"))),
            });
        }
        record.validate().map_err(|e| parse_err("<csv>", format!("line {line}: {e}")))?;
        out.push(record);
    }
    Ok(out)
}

/// Writes the covariate columns only if every record has them.
pub fn survival_to_csv_string(records: &[SurvivalRecord]) -> String {
    let covariates = !records.is_empty() && records.iter().all(|r| r.age.is_some() && r.sex.is_some());
    let mut out = BASE_HEADER.join(",");
    if covariates {
        out.push_str(",age,sex");
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}", r.id, r.time, u8::from(r.event)));
        if covariates {
            out.push_str(&format!(",{},{}", r.age.unwrap(), r.sex.unwrap()));
        }
        out.push('\n');
    }
    out
}

pub fn write_survival_csv(records: &[SurvivalRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, survival_to_csv_string(records))?;
    Ok(())
}

#[cfg(test)]
pub(crate) fn records(rows: &[(f64, bool)]) -> Vec<SurvivalRecord> {
    rows.iter()
        .enumerate()
        .map(|(i, &(t, e))| SurvivalRecord::new(format!("s{i}"), t, e).unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_with_and_without_covariates() {
        let plain = records(&[(1.5, true), (36.0, false), (0.1 + 0.2, true)]);
        let back = survival_from_csv_reader(survival_to_csv_string(&plain).as_bytes()).unwrap();
        assert_eq!(back, plain);
        let full: Vec<_> = plain
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, r)| r.with_covariates(50.0 + i as f64 / 3.0, (i % 2) as u8).unwrap())
            .collect();
        let text = survival_to_csv_string(&full);
        assert!(text.starts_with("patient_id,time_months,event,age,sex\n"));
        assert_eq!(survival_from_csv_reader(text.as_bytes()).unwrap(), full);
    }

    #[test]
    fn csv_rejections() {
        let bad = [
            "id,time,event\na,1,1\n",
            "patient_id,time_months,event\na,1,2\n",
            "patient_id,time_months,event\na,-1,1\n",
            "patient_id,time_months,event\na,x,1\n",
            "patient_id,time_months,event\na,1\n",
            "patient_id,time_months,event,age,sex\na,1,1,60,3\n",
        ];
        for text in bad {
            assert!(matches!(survival_from_csv_reader(text.as_bytes()), Err(Error::Parse { .. })), "{text}");
        }
        assert!(matches!(
            survival_from_csv_reader("patient_id,time_months,event\na,1,1\na,2,0\n".as_bytes()),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn alignment_follows_ids() {
        let r = records(&[(1.0, true), (2.0, false)]);
        let aligned = align_records(&r, &["s1".into(), "s0".into()]).unwrap();
        assert_eq!(aligned[0].time, 2.0);
        assert!(align_records(&r, &["s9".into()]).is_err());
    }
}
