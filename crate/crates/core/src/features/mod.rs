//! Masked-volume preprocessing and the 28-value feature vector
//! (14 intensity, 6 shape, 8 texture).

mod first_order;
mod glcm;
mod preprocess;
mod shape;
mod volume;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use first_order::{first_order_features, FIRST_ORDER_NAMES};
pub use glcm::{glcm_features, glcm_matrices, texture_statistics, Glcm, DIRECTIONS, TEXTURE_NAMES};
pub use preprocess::{
    discretize, resample_mask_nearest, resample_trilinear, resampled_dims, znormalize_and_cap,
};
pub use shape::{shape_features, SHAPE_NAMES};
pub use volume::{Dims, Mask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureCategory {
    Intensity,
    Shape,
    Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    names: Vec<String>,
    values: Vec<f64>,
    categories: Vec<FeatureCategory>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>, categories: Vec<FeatureCategory>) -> Result<Self> {
        if names.len() != values.len() || names.len() != categories.len() {
            return Err(Error::Shape(format!(
                "{} names, {} values, {} categories",
                names.len(),
                values.len(),
                categories.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Schema(format!("duplicate feature name `{dup}`")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("feature `{}` is not finite", names[i])));
        }
        Ok(FeatureVector {
            names,
            values,
            categories,
        })
    }

    pub(crate) fn from_parts(names: Vec<String>, values: Vec<f64>, categories: Vec<FeatureCategory>) -> Self {
        debug_assert!(names.len() == values.len() && names.len() == categories.len());
        FeatureVector {
            names,
            values,
            categories,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn categories(&self) -> &[FeatureCategory] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn concat(mut self, other: FeatureVector) -> Result<Self> {
        self.names.extend(other.names);
        self.values.extend(other.values);
        self.categories.extend(other.categories);
        FeatureVector::new(self.names, self.values, self.categories)
    }
}

/// Names of the default extractor output, in output order.
pub fn feature_names() -> Vec<String> {
    FIRST_ORDER_NAMES
        .iter()
        .chain(SHAPE_NAMES.iter())
        .chain(TEXTURE_NAMES.iter())
        .map(|s| s.to_string())
        .collect()
}

pub const DEFAULT_TARGET_SPACING: [f64; 3] = [3.0, 3.0, 3.0];
pub const DEFAULT_BIN_WIDTH: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// `None` skips resampling and works on the native grid.
    pub target_spacing: Option<[f64; 3]>,
    pub bin_width: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            target_spacing: Some(DEFAULT_TARGET_SPACING),
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

/// Parameters each stage actually ran with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub target_spacing: Option<[f64; 3]>,
    pub bin_width: f64,
    pub input_dims: Dims,
    pub resampled_dims: Dims,
    pub mask_voxels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub features: FeatureVector,
    pub provenance: Provenance,
}

/// resample -> z-normalize and cap -> discretize -> first-order ∥ shape ∥ texture.
pub fn extract_feature_vector(v: &Volume, m: &Mask, cfg: &ExtractionConfig) -> Result<Extraction> {
    m.check_matches(v).map_err(|e| e.at_stage("input"))?;
    let (vol, mask) = match cfg.target_spacing {
        Some(target) => {
            let vol = resample_trilinear(v, target).map_err(|e| e.at_stage("resample"))?;
            let mask = resample_mask_nearest(m, v.spacing(), target).map_err(|e| e.at_stage("resample"))?;
            (vol, mask)
        }
        None => (v.clone(), m.clone()),
    };
    let normalized = znormalize_and_cap(&vol, &mask).map_err(|e| e.at_stage("normalize-intensity"))?;
    let binned = discretize(&normalized, &mask, cfg.bin_width).map_err(|e| e.at_stage("discretize"))?;

    let intensity =
        first_order_features(&normalized, &mask, cfg.bin_width).map_err(|e| e.at_stage("first-order"))?;
    let shape = shape_features(&mask, vol.spacing()).map_err(|e| e.at_stage("shape"))?;
    let texture = glcm_features(&binned, &mask).map_err(|e| e.at_stage("texture"))?;

    let features = intensity.concat(shape)?.concat(texture)?;
    Ok(Extraction {
        features,
        provenance: Provenance {
            target_spacing: cfg.target_spacing,
            bin_width: cfg.bin_width,
            input_dims: v.dims(),
            resampled_dims: vol.dims(),
            mask_voxels: mask.count(),
        },
    })
}
