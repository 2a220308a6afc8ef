use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::feature_names;
use crate::matrix::FeatureMatrix;
use crate::survival::{SurvivalRecord, HORIZON_MONTHS};

/// Monthly hazard giving 50% three-year survival.
pub const BASE_HAZARD: f64 = 0.019_254_088_348_887_37;

/// Desk-scale stand-in for an outcome-annotated imaging cohort. Clusters
/// are planted in feature space; survival is exponential per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCohortSpec {
    pub n: usize,
    pub sizes: Vec<usize>,
    pub features: usize,
    /// Scale of the per-cluster mean offsets relative to unit noise; 0
    /// makes the clusters indistinguishable.
    pub separation: f64,
    /// Monthly event hazard of each cluster.
    pub hazards: Vec<f64>,
    pub horizon: f64,
    /// Independent censoring times are uniform on `[0, censoring_max]`.
    pub censoring_max: f64,
}

impl Default for SyntheticCohortSpec {
    fn default() -> Self {
        SyntheticCohortSpec {
            n: 108,
            sizes: vec![46, 41, 21],
            features: 28,
            separation: 3.0,
            hazards: vec![BASE_HAZARD, BASE_HAZARD, 4.0 * BASE_HAZARD],
            horizon: HORIZON_MONTHS,
            censoring_max: 240.0,
        }
    }
}

impl SyntheticCohortSpec {
    /// Same sizes, no separation and equal hazards.
    pub fn null() -> Self {
        let d = SyntheticCohortSpec::default();
        SyntheticCohortSpec {
            separation: 0.0,
            hazards: vec![BASE_HAZARD; d.sizes.len()],
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("synthetic cohort: {msg}")));
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad(format!("cluster sizes {:?} must be positive", self.sizes));
        }
        if self.sizes.iter().sum::<usize>() != self.n {
            return bad(format!("cluster sizes {:?} do not sum to n = {}", self.sizes, self.n));
        }
        if self.hazards.len() != self.sizes.len() {
            return bad(format!("{} hazards for {} clusters", self.hazards.len(), self.sizes.len()));
        }
        if self.hazards.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return bad(format!("hazards {:?} must be positive", self.hazards));
        }
        if self.features == 0 {
            return bad("needs at least one feature".into());
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return bad(format!("separation {}", self.separation));
        }
        if !(self.horizon > 0.0) || !(self.censoring_max > 0.0) {
            return bad("horizon and censoring_max must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub features: FeatureMatrix,
    pub survival: Vec<SurvivalRecord>,
    /// Planted cluster of each patient, 1-based.
    pub labels: Vec<usize>,
}

impl SyntheticCohort {
    /// `patient_id,cluster` with the planted labels.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("patient_id,cluster\n");
        for (id, l) in self.features.ids().iter().zip(&self.labels) {
            out.push_str(&format!("{id},{l}\n"));
        }
        out
    }
}

fn column_names(p: usize) -> Vec<String> {
    let named = feature_names();
    if p == named.len() {
        named
    } else {
        (0..p).map(|j| format!("feature_{j}")).collect()
    }
}

pub fn generate_synthetic_cohort(spec: &SyntheticCohortSpec, seed: u64) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let p = spec.features;
    let centers: Vec<Vec<f64>> = spec
        .sizes
        .iter()
        .map(|_| (0..p).map(|_| spec.separation * unit.sample(&mut rng)).collect())
        .collect();
    let mut labels: Vec<usize> = spec
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &s)| std::iter::repeat_n(g + 1, s))
        .collect();
    labels.shuffle(&mut rng);

    let width = spec.n.to_string().len().max(3);
    let ids: Vec<String> = (1..=spec.n).map(|i| format!("P{i:0width$}")).collect();
    let mut data = Vec::with_capacity(spec.n * p);
    let mut survival = Vec::with_capacity(spec.n);
    let age = Normal::new(62.0f64, 10.0).expect("age distribution");
    for (id, &label) in ids.iter().zip(&labels) {
        let center = &centers[label - 1];
        data.extend(center.iter().map(|c| c + unit.sample(&mut rng)));
        let event_time = Exp::new(spec.hazards[label - 1]).expect("positive hazard").sample(&mut rng);
        let censor = rng.random_range(0.0..spec.censoring_max);
        let time = event_time.min(censor).min(spec.horizon);
        let record = SurvivalRecord::new(id.clone(), time, event_time <= censor.min(spec.horizon))?
            .with_covariates((age.sample(&mut rng) * 10.0).round() / 10.0, u8::from(rng.random_bool(0.5)))?;
        survival.push(record);
    }
    Ok(SyntheticCohort {
        features: FeatureMatrix::new(ids, column_names(p), data)?,
        survival,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::log_rank_by_label;

    #[test]
    fn default_shape_and_horizon() {
        let c = generate_synthetic_cohort(&SyntheticCohortSpec::default(), 1).unwrap();
        assert_eq!(c.features.nrows(), 108);
        assert_eq!(c.features.ncols(), 28);
        assert_eq!(c.survival.len(), 108);
        assert!(c.survival.iter().all(|r| r.time <= 36.0 && r.age.is_some()));
        for (g, want) in [(1, 46), (2, 41), (3, 21)] {
            assert_eq!(c.labels.iter().filter(|&&l| l == g).count(), want);
        }
        assert_eq!(c.features.ids()[0], "P001");
        assert!((BASE_HAZARD - (-(0.5f64).ln() / 36.0)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticCohortSpec::default();
        let a = generate_synthetic_cohort(&spec, 4).unwrap();
        assert_eq!(a, generate_synthetic_cohort(&spec, 4).unwrap());
        assert_ne!(a.features, generate_synthetic_cohort(&spec, 5).unwrap().features);
    }

    #[test]
    fn planted_hazards_are_detectable_with_true_labels() {
        let spec = SyntheticCohortSpec::default();
        let hits = (0..20)
            .filter(|&s| {
                let c = generate_synthetic_cohort(&spec, 100 + s).unwrap();
                log_rank_by_label(&c.survival, &c.labels).unwrap().p < 0.01
            })
            .count();
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SyntheticCohortSpec { n: 100, ..Default::default() },
            SyntheticCohortSpec { hazards: vec![0.1, 0.0, 0.1], ..Default::default() },
            SyntheticCohortSpec { hazards: vec![0.1], ..Default::default() },
            SyntheticCohortSpec { separation: -1.0, ..Default::default() },
        ];
        for spec in bad {
            assert!(generate_synthetic_cohort(&spec, 0).is_err());
        }
    }
}
