//! Gray-level co-occurrence texture statistics over the 13 unique 3D
//! neighbor offsets at distance 1.

use super::volume::{Mask, Volume};
use super::{FeatureCategory, FeatureVector};
use crate::error::{Error, Result};

pub const TEXTURE_NAMES: [&str; 8] = [
    "glcm_contrast",
    "glcm_dissimilarity",
    "glcm_homogeneity",
    "glcm_asm",
    "glcm_entropy",
    "glcm_correlation",
    "glcm_cluster_shade",
    "glcm_cluster_prominence",
];

/// One representative per antipodal pair of the 26-neighborhood.
pub const DIRECTIONS: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// Symmetric co-occurrence counts for one direction. Gray levels run
/// `1..=levels`; entry `(i, j)` is stored at `(i - 1) * levels + (j - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub offset: [isize; 3],
    pub levels: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Glcm {
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// Directional matrices for every direction that has at least one pair of
/// neighboring voxels both inside the mask.
pub fn glcm_matrices(binned: &Volume, m: &Mask) -> Result<Vec<Glcm>> {
    m.check_matches(binned)?;
    let dims = binned.dims();
    let mut levels = 0usize;
    for (&g, &inside) in binned.data().iter().zip(m.data()) {
        if inside != 0 {
            if !(g >= 1.0 && g.fract() == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "masked gray level {g} is not a positive integer bin"
                )));
            }
            levels = levels.max(g as usize);
        }
    }
    if levels == 0 {
        return Err(Error::EmptyMask);
    }

    let mut out = Vec::new();
    for off in DIRECTIONS {
        let mut counts = vec![0u64; levels * levels];
        let mut total = 0u64;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if !m.contains(x, y, z) {
                        continue;
                    }
                    let (nx, ny, nz) = (x as isize + off[0], y as isize + off[1], z as isize + off[2]);
                    if nx < 0
                        || ny < 0
                        || nz < 0
                        || nx as usize >= dims[0]
                        || ny as usize >= dims[1]
                        || nz as usize >= dims[2]
                    {
                        continue;
                    }
                    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                    if !m.contains(nx, ny, nz) {
                        continue;
                    }
                    let a = binned.get(x, y, z) as usize - 1;
                    let b = binned.get(nx, ny, nz) as usize - 1;
                    counts[a * levels + b] += 1;
                    counts[b * levels + a] += 1;
                    total += 2;
                }
            }
        }
        if total > 0 {
            out.push(Glcm {
                offset: off,
                levels,
                counts,
                total,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientPairs);
    }
    Ok(out)
}

/// The eight statistics of one normalized co-occurrence matrix, in
/// [`TEXTURE_NAMES`] order.
pub fn texture_statistics(p: &[f64], levels: usize) -> [f64; 8] {
    let level = |k: usize| (k + 1) as f64;
    let mut mu = 0.0;
    for i in 0..levels {
        for j in 0..levels {
            mu += level(i) * p[i * levels + j];
        }
    }
    let mut var = 0.0;
    let mut cross = 0.0;
    let (mut contrast, mut dissim, mut homog, mut asm, mut entropy, mut shade, mut prom) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..levels {
        for j in 0..levels {
            let pij = p[i * levels + j];
            if pij == 0.0 {
                continue;
            }
            let (gi, gj) = (level(i), level(j));
            let d = gi - gj;
            contrast += d * d * pij;
            dissim += d.abs() * pij;
            homog += pij / (1.0 + d * d);
            asm += pij * pij;
            entropy -= pij * pij.log2();
            var += (gi - mu) * (gi - mu) * pij;
            cross += gi * gj * pij;
            let s = gi + gj - 2.0 * mu;
            shade += s * s * s * pij;
            prom += s * s * s * s * pij;
        }
    }
    // matrices are symmetric, so both marginals share mean and variance
    let correlation = if var > 1e-14 {
        (cross - mu * mu) / var
    } else {
        1.0
    };
    [
        contrast,
        dissim,
        homog,
        asm,
        entropy + 0.0,
        correlation,
        shade,
        prom,
    ]
}

/// Texture statistics averaged over all directions with valid pairs.
pub fn glcm_features(binned: &Volume, m: &Mask) -> Result<FeatureVector> {
    let mats = glcm_matrices(binned, m)?;
    let mut acc = [0.0f64; 8];
    for g in &mats {
        let s = texture_statistics(&g.probabilities(), g.levels);
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v;
        }
    }
    let n = mats.len() as f64;
    Ok(FeatureVector::from_parts(
        TEXTURE_NAMES.iter().map(|s| s.to_string()).collect(),
        acc.iter().map(|a| a / n).collect(),
        vec![FeatureCategory::Texture; TEXTURE_NAMES.len()],
    ))
}
