use nalgebra::{Matrix3, SymmetricEigen};

use super::volume::Mask;
use super::{FeatureCategory, FeatureVector};
use crate::error::{Error, Result};

pub const SHAPE_NAMES: [&str; 6] = [
    "shape_volume",
    "shape_surface_area",
    "shape_surface_volume_ratio",
    "shape_elongation",
    "shape_flatness",
    "shape_max_diameter",
];

const NEIGHBORS: [(isize, isize, isize, usize); 6] = [
    (1, 0, 0, 0),
    (-1, 0, 0, 0),
    (0, 1, 0, 1),
    (0, -1, 0, 1),
    (0, 0, 1, 2),
    (0, 0, -1, 2),
];

/// Shape descriptors of the foreground. Depends only on the mask and the
/// voxel spacing.
pub fn shape_features(m: &Mask, spacing: [f64; 3]) -> Result<FeatureVector> {
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "spacing must be positive, got {spacing:?}"
        )));
    }
    let fg = m.foreground();
    if fg.is_empty() {
        return Err(Error::EmptyMask);
    }
    let dims = m.dims();
    let face_area = [
        spacing[1] * spacing[2],
        spacing[0] * spacing[2],
        spacing[0] * spacing[1],
    ];

    let mut exposed = [0usize; 3];
    let mut boundary: Vec<[f64; 3]> = Vec::new();
    for &[x, y, z] in &fg {
        let mut on_surface = false;
        for &(dx, dy, dz, axis) in &NEIGHBORS {
            let (nx, ny, nz) = (x as isize + dx, y as isize + dy, z as isize + dz);
            let inside = nx >= 0
                && ny >= 0
                && nz >= 0
                && (nx as usize) < dims[0]
                && (ny as usize) < dims[1]
                && (nz as usize) < dims[2]
                && m.contains(nx as usize, ny as usize, nz as usize);
            if !inside {
                exposed[axis] += 1;
                on_surface = true;
            }
        }
        if on_surface {
            boundary.push(center(x, y, z, spacing));
        }
    }

    let volume = fg.len() as f64 * spacing.iter().product::<f64>();
    let surface: f64 = (0..3).map(|a| exposed[a] as f64 * face_area[a]).sum();

    let (l1, l2, l3) = principal_variances(&fg, spacing);
    let (elongation, flatness) = if l1 > 0.0 {
        ((l2 / l1).sqrt(), (l3 / l1).sqrt())
    } else {
        (1.0, 1.0)
    };

    // A hull vertex always has an exposed face, so the boundary voxels
    // contain the diameter endpoints.
    let mut diameter2 = 0.0f64;
    for (i, a) in boundary.iter().enumerate() {
        for b in &boundary[i + 1..] {
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
            diameter2 = diameter2.max(d2);
        }
    }

    Ok(FeatureVector::from_parts(
        SHAPE_NAMES.iter().map(|s| s.to_string()).collect(),
        vec![
            volume,
            surface,
            surface / volume,
            elongation,
            flatness,
            diameter2.sqrt(),
        ],
        vec![FeatureCategory::Shape; SHAPE_NAMES.len()],
    ))
}

fn center(x: usize, y: usize, z: usize, spacing: [f64; 3]) -> [f64; 3] {
    [
        x as f64 * spacing[0],
        y as f64 * spacing[1],
        z as f64 * spacing[2],
    ]
}

/// Eigenvalues (descending, clamped at 0) of the population covariance of
/// foreground voxel centers in physical units.
pub(crate) fn principal_variances(fg: &[[usize; 3]], spacing: [f64; 3]) -> (f64, f64, f64) {
    let n = fg.len() as f64;
    let pts: Vec<[f64; 3]> = fg.iter().map(|&[x, y, z]| center(x, y, z, spacing)).collect();
    let mut mu = [0.0; 3];
    for p in &pts {
        for a in 0..3 {
            mu[a] += p[a];
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += (p[r] - mu[r]) * (p[c] - mu[c]);
            }
        }
    }
    cov /= n;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    (ev[0], ev[1], ev[2])
}
