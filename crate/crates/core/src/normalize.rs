//! Coarse quantile coding of feature columns.
//!
//! Each column is cut at its 5th, 25th, 50th, 75th and 95th percentiles
//! (linear-interpolation rule) and values are replaced by one of seven
//! codes `0, 1/6, …, 5/6, 1`. Interior intervals are left-open and
//! right-closed; only values at or above the fitted maximum reach 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::matrix::FeatureMatrix;
use crate::stats::{percentile_sorted, sorted_copy};

pub const CODES: [f64; 7] = [0.0, 1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0, 1.0];

pub const CUT_PERCENTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];

const FORMAT: &str = "phenoclust-quantile-map";
const VERSION: u32 = 1;

/// Fitted cut points of one column: `[min, q5, q25, q50, q75, q95, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCuts {
    pub name: String,
    pub cuts: [f64; 7],
}

impl ColumnCuts {
    pub fn min(&self) -> f64 {
        self.cuts[0]
    }

    pub fn max(&self) -> f64 {
        self.cuts[6]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.cuts[1..6]
    }

    pub fn is_constant(&self) -> bool {
        self.min() == self.max()
    }

    /// Code level in `0..=6`.
    pub fn level(&self, x: f64) -> usize {
        if self.is_constant() {
            return 3;
        }
        if x >= self.max() {
            return 6;
        }
        self.thresholds().iter().take_while(|&&q| x > q).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    format: String,
    version: u32,
    n_fitted: usize,
    columns: Vec<ColumnCuts>,
}

impl QuantileMap {
    pub fn n_fitted(&self) -> usize {
        self.n_fitted
    }

    pub fn columns(&self) -> &[ColumnCuts] {
        &self.columns
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("quantile map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: QuantileMap =
            serde_json::from_str(text).map_err(|e| parse_err("<quantile map>", e.to_string()))?;
        if map.format != FORMAT || map.version != VERSION {
            return Err(parse_err(
                "<quantile map>",
                format!("unsupported format {} v{}", map.format, map.version),
            ));
        }
        for c in &map.columns {
            if c.cuts.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(parse_err(
                    "<quantile map>",
                    format!("cuts of `{}` are not non-decreasing", c.name),
                ));
            }
        }
        Ok(map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        QuantileMap::from_json(&text).map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(path, msg),
            other => other,
        })
    }
}

/// A matrix whose entries are all members of [`CODES`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix(FeatureMatrix);

impl NormalizedMatrix {
    pub fn from_matrix(m: FeatureMatrix) -> Result<Self> {
        if let Some(i) = m.data().iter().position(|v| code_level(*v).is_none()) {
            let p = m.ncols();
            return Err(Error::Schema(format!(
                "value {} at row `{}`, column `{}` is not a quantile code",
                m.data()[i],
                m.ids()[i / p],
                m.names()[i % p]
            )));
        }
        Ok(NormalizedMatrix(m))
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> FeatureMatrix {
        self.0
    }
}

/// Level `k` if `v` is exactly `CODES[k]`.
pub fn code_level(v: f64) -> Option<usize> {
    CODES.iter().position(|&c| c == v)
}

pub fn fit_quantiles(raw: &FeatureMatrix) -> Result<QuantileMap> {
    if raw.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "quantile fit needs at least 2 samples, got {}",
            raw.nrows()
        )));
    }
    let columns = (0..raw.ncols())
        .map(|j| {
            let sorted = sorted_copy(&raw.column(j));
            let mut cuts = [0.0; 7];
            cuts[0] = sorted[0];
            for (k, &q) in CUT_PERCENTILES.iter().enumerate() {
                cuts[k + 1] = percentile_sorted(&sorted, q);
            }
            cuts[6] = sorted[sorted.len() - 1];
            ColumnCuts {
                name: raw.names()[j].clone(),
                cuts,
            }
        })
        .collect();
    Ok(QuantileMap {
        format: FORMAT.to_string(),
        version: VERSION,
        n_fitted: raw.nrows(),
        columns,
    })
}

pub fn apply_quantile_map(map: &QuantileMap, raw: &FeatureMatrix) -> Result<NormalizedMatrix> {
    let fitted: Vec<&str> = map.columns.iter().map(|c| c.name.as_str()).collect();
    if fitted != raw.names().iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Schema(format!(
            "matrix columns {:?} do not match fitted columns {:?}",
            raw.names(),
            fitted
        )));
    }
    let p = raw.ncols();
    let data = raw
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| CODES[map.columns[i % p].level(x)])
        .collect();
    Ok(NormalizedMatrix(FeatureMatrix::new(
        raw.ids().to_vec(),
        raw.names().to_vec(),
        data,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(vals: &[f64]) -> FeatureMatrix {
        FeatureMatrix::anonymous(vals.len(), 1, vals.to_vec()).unwrap()
    }

    /// Code counts by sorting and assigning ranks directly, with ties
    /// resolved through the same interval rule.
    fn rank_oracle(vals: &[f64], cuts: &[f64; 7]) -> [usize; 7] {
        let mut counts = [0; 7];
        let mut sorted = vals.to_vec();
        sorted.sort_by(f64::total_cmp);
        for x in sorted {
            let k = if x >= cuts[6] {
                6
            } else if x <= cuts[1] {
                0
            } else if x <= cuts[2] {
                1
            } else if x <= cuts[3] {
                2
            } else if x <= cuts[4] {
                3
            } else if x <= cuts[5] {
                4
            } else {
                5
            };
            counts[k] += 1;
        }
        counts
    }

    #[test]
    fn uniform_thresholds() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let map = fit_quantiles(&column(&vals)).unwrap();
        let c = &map.columns()[0];
        let expect = [1.0, 5.95, 25.75, 50.5, 75.25, 95.05, 100.0];
        for (a, b) in c.cuts.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_and_two_sample_columns() {
        let map = fit_quantiles(&column(&[42.0; 5])).unwrap();
        assert!(map.columns()[0].cuts.iter().all(|&c| c == 42.0));
        let out = apply_quantile_map(&map, &column(&[42.0, 0.0, 99.0])).unwrap();
        assert!(out.matrix().data().iter().all(|&v| v == 0.5));

        let map = fit_quantiles(&column(&[0.0, 1.0])).unwrap();
        assert_eq!(map.columns()[0].cuts[3], 0.5);
    }

    #[test]
    fn extremes_map_to_end_codes() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let map = fit_quantiles(&column(&vals)).unwrap();
        let out = apply_quantile_map(&map, &column(&[100.0, 3.0, 1e9, -1e9, 96.0])).unwrap();
        assert_eq!(out.matrix().data(), &[1.0, 0.0, 1.0, 0.0, 5.0 / 6.0]);
    }

    #[test]
    fn self_application_matches_rank_oracle() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let m = column(&vals);
        let map = fit_quantiles(&m).unwrap();
        let out = apply_quantile_map(&map, &m).unwrap();
        let mut counts = [0usize; 7];
        for &v in out.matrix().data() {
            counts[code_level(v).unwrap()] += 1;
        }
        assert_eq!(counts, rank_oracle(&vals, &map.columns()[0].cuts));
        assert_eq!(counts, [5, 20, 25, 25, 20, 4, 1]);
    }

    #[test]
    fn schema_mismatch() {
        let map = fit_quantiles(&column(&[1.0, 2.0])).unwrap();
        let other = FeatureMatrix::new(vec!["a".into()], vec!["zz".into()], vec![1.0]).unwrap();
        assert!(matches!(apply_quantile_map(&map, &other), Err(Error::Schema(_))));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let m = FeatureMatrix::anonymous(4, 2, vec![0.1, 5.0, 0.3, 2.0, 0.7, -1.0, 1.0 / 3.0, 8.0]).unwrap();
        let map = fit_quantiles(&m).unwrap();
        assert_eq!(QuantileMap::from_json(&map.to_json()).unwrap(), map);
        let bad = map.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(QuantileMap::from_json(&bad).is_err());
        assert!(NormalizedMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn needs_two_samples() {
        assert!(fit_quantiles(&column(&[1.0])).is_err());
    }

    proptest! {
        #[test]
        fn codes_are_monotone_and_in_alphabet(
            fit in prop::collection::vec(-1e3f64..1e3, 2..60),
            probe in prop::collection::vec(-2e3f64..2e3, 1..40),
        ) {
            let map = fit_quantiles(&column(&fit)).unwrap();
            let out = apply_quantile_map(&map, &column(&probe)).unwrap();
            let codes = out.matrix().data();
            for &c in codes {
                prop_assert!(code_level(c).is_some());
            }
            for i in 0..probe.len() { for j in 0..probe.len() {
                if probe[i] <= probe[j] {
                    prop_assert!(codes[i] <= codes[j]);
                }
            }}
            let cuts = &map.columns()[0].cuts;
            prop_assert!(cuts.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
