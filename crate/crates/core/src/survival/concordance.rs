use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SurvivalRecord;
use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concordance {
    pub c: f64,
    /// Standard deviation of C over bootstrap resamples.
    pub se: f64,
    /// Resamples that had at least one comparable pair.
    pub resamples: usize,
}

/// Harrell's C: among pairs where subject `i` is known to fail first
/// (`i` has an event and `t_i < t_j`, or equal times with only `i` an
/// event), the fraction with `risk_i > risk_j`, counting risk ties as 1/2.
pub fn harrell_c(risk: &[f64], records: &[SurvivalRecord]) -> Result<f64> {
    if risk.len() != records.len() {
        return Err(Error::Shape(format!("{} risks, {} records", risk.len(), records.len())));
    }
    let idx: Vec<usize> = (0..records.len()).collect();
    c_of(risk, records, &idx).ok_or(Error::NoComparablePairs)
}

fn c_of(risk: &[f64], records: &[SurvivalRecord], idx: &[usize]) -> Option<f64> {
    let mut comparable = 0.0;
    let mut score = 0.0;
    for &i in idx {
        let ri = &records[i];
        if !ri.event {
            continue;
        }
        for &j in idx {
            let rj = &records[j];
            let earlier = ri.time < rj.time || (ri.time == rj.time && !rj.event);
            if !earlier {
                continue;
            }
            comparable += 1.0;
            if risk[i] > risk[j] {
                score += 1.0;
            } else if risk[i] == risk[j] {
                score += 0.5;
            }
        }
    }
    (comparable > 0.0).then(|| score / comparable)
}

pub fn concordance_index(risk: &[f64], records: &[SurvivalRecord], seed: u64) -> Result<Concordance> {
    concordance_index_with(risk, records, seed, BOOTSTRAP_RESAMPLES)
}

/// Resample `b` draws its indices from `ChaCha8Rng` seeded with `seed + b`.
pub fn concordance_index_with(
    risk: &[f64],
    records: &[SurvivalRecord],
    seed: u64,
    resamples: usize,
) -> Result<Concordance> {
    let c = harrell_c(risk, records)?;
    let n = records.len();
    let mut values = Vec::with_capacity(resamples);
    let mut idx = vec![0; n];
    for b in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
        for v in &mut idx {
            *v = rng.random_range(0..n);
        }
        if let Some(cb) = c_of(risk, records, &idx) {
            values.push(cb);
        }
    }
    let se = if values.len() > 1 {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(Concordance {
        c,
        se,
        resamples: values.len(),
    })
}
