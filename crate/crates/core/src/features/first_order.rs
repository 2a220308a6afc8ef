use super::preprocess::bin_index;
use super::volume::{Mask, Volume};
use super::{FeatureCategory, FeatureVector};
use crate::error::{Error, Result};
use crate::stats::{percentile_sorted, sorted_copy};

pub const FIRST_ORDER_NAMES: [&str; 14] = [
    "intensity_mean",
    "intensity_median",
    "intensity_minimum",
    "intensity_maximum",
    "intensity_range",
    "intensity_variance",
    "intensity_skewness",
    "intensity_kurtosis",
    "intensity_energy",
    "intensity_entropy",
    "intensity_p10",
    "intensity_p90",
    "intensity_iqr",
    "intensity_mad",
];

/// Histogram statistics over masked voxels. Entropy is computed over bins of
/// width `bin_width` anchored at the masked minimum (the same bins
/// [`discretize`](super::discretize) produces).
pub fn first_order_features(v: &Volume, m: &Mask, bin_width: f64) -> Result<FeatureVector> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    let vals = v.masked_values(m)?;
    if vals.is_empty() {
        return Err(Error::EmptyMask);
    }
    let values = first_order_values(&vals, bin_width);
    Ok(FeatureVector::from_parts(
        FIRST_ORDER_NAMES.iter().map(|s| s.to_string()).collect(),
        values.to_vec(),
        vec![FeatureCategory::Intensity; FIRST_ORDER_NAMES.len()],
    ))
}

fn first_order_values(vals: &[f64], bin_width: f64) -> [f64; 14] {
    let n = vals.len() as f64;
    let sorted = sorted_copy(vals);
    let mean = vals.iter().sum::<f64>() / n;
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];

    let (mut m2, mut m3, mut m4, mut mad, mut energy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &x in vals {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        mad += d.abs();
        energy += x * x;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut counts: Vec<usize> = Vec::new();
    for &x in vals {
        let b = bin_index(x, min, bin_width);
        if counts.len() < b {
            counts.resize(b, 0);
        }
        counts[b - 1] += 1;
    }
    let entropy = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        + 0.0;

    let p10 = percentile_sorted(&sorted, 0.10);
    let p90 = percentile_sorted(&sorted, 0.90);
    let iqr = percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25);

    [
        mean,
        percentile_sorted(&sorted, 0.5),
        min,
        max,
        max - min,
        m2,
        skewness,
        kurtosis,
        energy,
        entropy,
        p10,
        p90,
        iqr,
        mad,
    ]
}
