use serde::{Deserialize, Serialize};

use super::SurvivalRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    /// Survival just after `time`.
    pub survival: f64,
}

/// Product-limit estimate, one step per distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub n: usize,
    pub steps: Vec<KmStep>,
}

impl KmCurve {
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }

    /// `time,survival,at_risk`, one row per step.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("time,survival,at_risk\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{}\n", s.time, s.survival, s.at_risk));
        }
        out
    }
}

pub fn kaplan_meier(records: &[SurvivalRecord]) -> Result<KmCurve> {
    if records.is_empty() {
        return Err(Error::InsufficientData("Kaplan-Meier of an empty group".into()));
    }
    let mut sorted: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = sorted.len();
    let mut survival = 1.0;
    let mut steps = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut events = 0;
        while j < sorted.len() && sorted[j].0 == t {
            events += usize::from(sorted[j].1);
            j += 1;
        }
        if events > 0 {
            survival *= 1.0 - events as f64 / at_risk as f64;
            steps.push(KmStep {
                time: t,
                at_risk,
                events,
                survival,
            });
        }
        // censored subjects leave the risk set after their time
        at_risk -= j - i;
        i = j;
    }
    Ok(KmCurve {
        n: records.len(),
        steps,
    })
}
