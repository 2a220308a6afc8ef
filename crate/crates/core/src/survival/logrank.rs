use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SurvivalRecord;
use crate::error::{Error, Result};

/// Upper tail of the chi-square distribution, `Q(df/2, x/2)`.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(df as f64 / 2.0, x / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRank {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// k-group log-rank test with the hypergeometric covariance of the
/// observed-minus-expected event counts.
pub fn log_rank(groups: &[&[SurvivalRecord]]) -> Result<LogRank> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("log-rank needs at least 2 groups, got {k}")));
    }
    if let Some(g) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::InvalidArgument(format!("log-rank group {g} is empty")));
    }
    let mut times: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.iter().filter(|r| r.event).map(|r| r.time))
        .collect();
    if times.is_empty() {
        return Err(Error::InsufficientData("log-rank with no events".into()));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut observed = vec![0.0; k];
    let mut expected = vec![0.0; k];
    let mut var = DMatrix::<f64>::zeros(k, k);
    let mut at_risk = vec![0.0; k];
    let mut deaths = vec![0.0; k];
    for &t in &times {
        for (g, recs) in groups.iter().enumerate() {
            at_risk[g] = recs.iter().filter(|r| r.time >= t).count() as f64;
            deaths[g] = recs.iter().filter(|r| r.event && r.time == t).count() as f64;
        }
        let n: f64 = at_risk.iter().sum();
        let d: f64 = deaths.iter().sum();
        for g in 0..k {
            observed[g] += deaths[g];
            expected[g] += d * at_risk[g] / n;
        }
        if n > 1.0 {
            let scale = d * (n - d) / (n - 1.0);
            for g in 0..k {
                let pg = at_risk[g] / n;
                for h in 0..k {
                    let delta = if g == h { 1.0 } else { 0.0 };
                    var[(g, h)] += scale * pg * (delta - at_risk[h] / n);
                }
            }
        }
    }
    // the k statistics sum to zero; drop the last
    let diff = DVector::from_iterator(k - 1, (0..k - 1).map(|g| observed[g] - expected[g]));
    let v = var.view((0, 0), (k - 1, k - 1)).into_owned();
    let tol = 1e-12 * v.amax().max(1.0);
    let pinv = v
        .pseudo_inverse(tol)
        .map_err(|e| Error::Numeric(format!("log-rank covariance: {e}")))?;
    let chi2 = diff.dot(&(pinv * &diff)).max(0.0);
    let df = k - 1;
    Ok(LogRank {
        chi2,
        df,
        p: chi2_sf(chi2, df),
        observed,
        expected,
    })
}

/// Log-rank across the distinct values of `labels`, in ascending order.
pub fn log_rank_by_label(records: &[SurvivalRecord], labels: &[usize]) -> Result<LogRank> {
    if records.len() != labels.len() {
        return Err(Error::Shape(format!("{} records, {} labels", records.len(), labels.len())));
    }
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    let groups: Vec<Vec<SurvivalRecord>> = distinct
        .iter()
        .map(|&l| {
            records
                .iter()
                .zip(labels)
                .filter(|(_, &x)| x == l)
                .map(|(r, _)| r.clone())
                .collect()
        })
        .collect();
    let refs: Vec<&[SurvivalRecord]> = groups.iter().map(Vec::as_slice).collect();
    log_rank(&refs)
}
