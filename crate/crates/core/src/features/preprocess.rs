//! Grid resampling and intensity preprocessing applied before feature
//! extraction.
//!
//! Physical coordinates put the corner of voxel `(0,0,0)` at the origin, so
//! the center of voxel `i` along an axis with spacing `s` sits at
//! `(i + 0.5) * s`.

use super::volume::{linear_index, Dims, Mask, Volume};
use crate::error::{Error, Result};

/// Output grid size for resampling `dims` at `spacing` onto `target`.
pub fn resampled_dims(dims: Dims, spacing: [f64; 3], target: [f64; 3]) -> Dims {
    let mut out = [1usize; 3];
    for a in 0..3 {
        let extent = dims[a] as f64 * spacing[a] / target[a];
        // absorb representation error so 4 * 1.5 / 1.5 stays 4
        out[a] = ((extent * (1.0 - 1e-12)).ceil() as usize).max(1);
    }
    out
}

fn check_target(target: [f64; 3]) -> Result<()> {
    if target.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "target spacing must be positive, got {target:?}"
        )));
    }
    Ok(())
}

/// Continuous input index of output voxel `i`, clamped to the input grid.
#[inline]
fn source_coord(i: usize, target: f64, spacing: f64, n_in: usize) -> f64 {
    let u = (i as f64 + 0.5) * target / spacing - 0.5;
    u.clamp(0.0, (n_in - 1) as f64)
}

/// Lower neighbor index and interpolation weight of the upper neighbor.
#[inline]
fn bracket(u: f64, n_in: usize) -> (usize, usize, f64) {
    if n_in == 1 {
        return (0, 0, 0.0);
    }
    let lo = (u.floor() as usize).min(n_in - 2);
    (lo, lo + 1, u - lo as f64)
}

pub fn resample_trilinear(v: &Volume, target: [f64; 3]) -> Result<Volume> {
    check_target(target)?;
    if v.spacing() == target {
        return Volume::new(v.dims(), target, v.data().to_vec());
    }
    let dims = v.dims();
    let spacing = v.spacing();
    let out_dims = resampled_dims(dims, spacing, target);

    let axis = |a: usize| -> Vec<(usize, usize, f64)> {
        (0..out_dims[a])
            .map(|i| bracket(source_coord(i, target[a], spacing[a], dims[a]), dims[a]))
            .collect()
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    let src = v.data();

    Volume::from_fn(out_dims, target, |i, j, k| {
        let (x0, x1, fx) = ax[i];
        let (y0, y1, fy) = ay[j];
        let (z0, z1, fz) = az[k];
        let at = |x, y, z| src[linear_index(dims, x, y, z)];
        let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
        let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
        let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
        let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    })
}

/// Nearest-neighbor resampling of a mask onto the grid produced by
/// [`resample_trilinear`] for the same spacings.
pub fn resample_mask_nearest(m: &Mask, spacing: [f64; 3], target: [f64; 3]) -> Result<Mask> {
    check_target(target)?;
    if spacing == target {
        return Ok(m.clone());
    }
    let dims = m.dims();
    let out_dims = resampled_dims(dims, spacing, target);
    let axis = |a: usize| -> Vec<usize> {
        (0..out_dims[a])
            .map(|i| {
                let u = source_coord(i, target[a], spacing[a], dims[a]);
                ((u + 0.5).floor() as usize).min(dims[a] - 1)
            })
            .collect()
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    Mask::from_fn(out_dims, |i, j, k| m.contains(ax[i], ay[j], az[k]))
}

/// Z-scores masked voxels with masked statistics, caps to ±3σ and maps
/// `[-3, 3]` affinely onto `[0, 100]`. Background becomes 0.
pub fn znormalize_and_cap(v: &Volume, m: &Mask) -> Result<Volume> {
    let vals = v.masked_values(m)?;
    if vals.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if vals.len() < 2 || var <= 0.0 {
        return Err(Error::ConstantRegion);
    }
    let sd = var.sqrt();
    let data = v
        .data()
        .iter()
        .zip(m.data())
        .map(|(&x, &inside)| {
            if inside == 0 {
                0.0
            } else {
                let z = ((x - mean) / sd).clamp(-3.0, 3.0);
                (z + 3.0) / 6.0 * 100.0
            }
        })
        .collect();
    Volume::new(v.dims(), v.spacing(), data)
}

/// Fixed-width binning relative to the masked minimum; bins start at 1 and
/// background is 0.
pub fn discretize(v: &Volume, m: &Mask, bin_width: f64) -> Result<Volume> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    let vals = v.masked_values(m)?;
    let Some(min) = vals.iter().copied().reduce(f64::min) else {
        return Err(Error::EmptyMask);
    };
    let data = v
        .data()
        .iter()
        .zip(m.data())
        .map(|(&x, &inside)| {
            if inside == 0 {
                0.0
            } else {
                bin_index(x, min, bin_width) as f64
            }
        })
        .collect();
    Volume::new(v.dims(), v.spacing(), data)
}

#[inline]
pub(crate) fn bin_index(x: f64, min: f64, bin_width: f64) -> usize {
    ((x - min) / bin_width).floor() as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Scalar trilinear interpolation written directly from the definition:
    /// weighted sum over the 8 corners of the enclosing cell.
    fn trilinear_oracle(v: &Volume, p: [f64; 3]) -> f64 {
        let dims = v.dims();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let u = (p[a] / v.spacing()[a] - 0.5).clamp(0.0, (dims[a] - 1) as f64);
            let lo = if dims[a] == 1 { 0 } else { (u.floor() as usize).min(dims[a] - 2) };
            base[a] = lo;
            frac[a] = u - lo as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                idx[a] = (base[a] + usize::from(up)).min(dims[a] - 1);
            }
            acc += w * v.get(idx[0], idx[1], idx[2]);
        }
        acc
    }

    #[test]
    fn identity_resample_is_bitwise() {
        let v = Volume::from_fn([3, 4, 5], [0.8, 1.1, 2.5], |x, y, z| {
            (x * 7 + y * 3 + z) as f64 * 0.37 - 1.0
        })
        .unwrap();
        let r = resample_trilinear(&v, v.spacing()).unwrap();
        assert_eq!(r.dims(), v.dims());
        for (a, b) in r.data().iter().zip(v.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn downsample_4cube_matches_oracle() {
        let v = Volume::from_fn([4, 4, 4], [1.0; 3], |x, y, z| (x + 4 * y + 16 * z) as f64).unwrap();
        let r = resample_trilinear(&v, [2.0; 3]).unwrap();
        assert_eq!(r.dims(), [2, 2, 2]);
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    let p = [(i as f64 + 0.5) * 2.0, (j as f64 + 0.5) * 2.0, (k as f64 + 0.5) * 2.0];
                    let expect = trilinear_oracle(&v, p);
                    assert!((r.get(i, j, k) - expect).abs() < 1e-12);
                }
            }
        }
        // centers land midway between voxel pairs, so the first output is the
        // mean of the 2x2x2 block {0,1,4,5,16,17,20,21}
        assert!((r.get(0, 0, 0) - 10.5).abs() < 1e-12);
    }

    #[test]
    fn output_dims_round_up() {
        assert_eq!(resampled_dims([10, 4, 1], [1.0, 1.5, 0.5], [3.0, 1.5, 3.0]), [4, 4, 1]);
        assert_eq!(resampled_dims([100, 100, 40], [0.75, 0.75, 7.5], [3.0; 3]), [25, 25, 100]);
    }

    #[test]
    fn mask_nearest_keeps_binarity_and_grid() {
        let m = Mask::from_fn([6, 6, 6], |x, y, z| x >= 2 && y >= 2 && z < 4).unwrap();
        let r = resample_mask_nearest(&m, [1.0; 3], [2.0; 3]).unwrap();
        assert_eq!(r.dims(), [3, 3, 3]);
        // output center 0 sits at physical 1.0 -> input voxel 1
        assert!(!r.contains(0, 1, 0));
        assert!(r.contains(1, 1, 0));
        assert!(!r.contains(1, 1, 2));
    }

    #[test]
    fn zscore_cap_hand_values() {
        // masked {1,2,3,4,100}: mean 22, population sd = sqrt(1522)
        let v = Volume::new([5, 1, 1], [1.0; 3], vec![1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        let m = Mask::full([5, 1, 1]).unwrap();
        let out = znormalize_and_cap(&v, &m).unwrap();
        let sd = 1522f64.sqrt();
        for (x, y) in v.data().iter().zip(out.data()) {
            let z = ((x - 22.0) / sd).clamp(-3.0, 3.0);
            assert!((y - (z + 3.0) * 100.0 / 6.0).abs() < 1e-12);
        }
        // 100 sits at z = 78 / 39.013 = 1.9993, just below the cap
        assert!((out.data()[4] - 83.3224).abs() < 1e-3);
    }

    #[test]
    fn zscore_caps_outlier_at_100() {
        // 99 zeros and one 10 put the outlier at z = sqrt(99) ~ 9.95
        let mut vals = vec![0.0; 99];
        vals.push(10.0);
        let v = Volume::new([100, 1, 1], [1.0; 3], vals).unwrap();
        let out = znormalize_and_cap(&v, &Mask::full([100, 1, 1]).unwrap()).unwrap();
        assert_eq!(out.data()[99], 100.0);
    }

    #[test]
    fn zscore_symmetric_mean_maps_to_50() {
        let v = Volume::new([4, 1, 1], [1.0; 3], vec![-1.0, 1.0, 3.0, 5.0]).unwrap();
        let m = Mask::full([4, 1, 1]).unwrap();
        let out = znormalize_and_cap(&v, &m).unwrap();
        let mean = out.data().iter().sum::<f64>() / 4.0;
        assert!((mean - 50.0).abs() < 1e-9);
    }

    #[test]
    fn zscore_background_and_errors() {
        let v = Volume::new([3, 1, 1], [1.0; 3], vec![5.0, 1.0, 9.0]).unwrap();
        let m = Mask::new([3, 1, 1], vec![0, 1, 1]).unwrap();
        assert_eq!(znormalize_and_cap(&v, &m).unwrap().data()[0], 0.0);
        let flat = Volume::new([3, 1, 1], [1.0; 3], vec![2.0; 3]).unwrap();
        assert!(matches!(znormalize_and_cap(&flat, &m), Err(Error::ConstantRegion)));
        let empty = Mask::new([3, 1, 1], vec![0; 3]).unwrap();
        assert!(matches!(znormalize_and_cap(&v, &empty), Err(Error::EmptyMask)));
    }

    #[test]
    fn discretize_hand_values() {
        let v = Volume::new([5, 1, 1], [1.0; 3], vec![0.0, 4.9, 5.0, 12.0, -50.0]).unwrap();
        let m = Mask::new([5, 1, 1], vec![1, 1, 1, 1, 0]).unwrap();
        let b = discretize(&v, &m, 5.0).unwrap();
        assert_eq!(b.data(), &[1.0, 1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn discretize_constant_and_full_range() {
        let c = Volume::new([3, 1, 1], [1.0; 3], vec![4.2; 3]).unwrap();
        let m = Mask::full([3, 1, 1]).unwrap();
        assert_eq!(discretize(&c, &m, 5.0).unwrap().data(), &[1.0; 3]);

        let ramp = Volume::from_fn([101, 1, 1], [1.0; 3], |x, _, _| x as f64).unwrap();
        let b = discretize(&ramp, &Mask::full([101, 1, 1]).unwrap(), 5.0).unwrap();
        let max = b.data().iter().copied().fold(0.0, f64::max);
        assert_eq!(max, 21.0);
    }

    proptest! {
        #[test]
        fn resample_stays_within_input_range(
            vals in prop::collection::vec(-100.0f64..100.0, 27),
            t in (0.3f64..4.0, 0.3f64..4.0, 0.3f64..4.0),
        ) {
            let v = Volume::new([3, 3, 3], [1.0, 1.2, 0.9], vals.clone()).unwrap();
            let r = resample_trilinear(&v, [t.0, t.1, t.2]).unwrap();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for &x in r.data() {
                prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
            }
        }

        #[test]
        fn resample_matches_scalar_oracle(
            vals in prop::collection::vec(-10.0f64..10.0, 60),
            t in (0.4f64..3.0, 0.4f64..3.0, 0.4f64..3.0),
        ) {
            let v = Volume::new([5, 4, 3], [1.0, 0.7, 1.9], vals).unwrap();
            let target = [t.0, t.1, t.2];
            let r = resample_trilinear(&v, target).unwrap();
            let [nx, ny, nz] = r.dims();
            for k in 0..nz { for j in 0..ny { for i in 0..nx {
                let p = [(i as f64 + 0.5) * t.0, (j as f64 + 0.5) * t.1, (k as f64 + 0.5) * t.2];
                prop_assert!((r.get(i, j, k) - trilinear_oracle(&v, p)).abs() < 1e-9);
            }}}
        }

        #[test]
        fn zscore_output_in_range(vals in prop::collection::vec(-1e3f64..1e3, 2..40)) {
            let n = vals.len();
            let v = Volume::new([n, 1, 1], [1.0; 3], vals.clone()).unwrap();
            let m = Mask::full([n, 1, 1]).unwrap();
            if let Ok(out) = znormalize_and_cap(&v, &m) {
                for &x in out.data() {
                    prop_assert!((0.0..=100.0).contains(&x));
                }
            }
        }

        #[test]
        fn discretize_is_monotone(vals in prop::collection::vec(0.0f64..100.0, 2..40), bw in 0.5f64..20.0) {
            let n = vals.len();
            let v = Volume::new([n, 1, 1], [1.0; 3], vals.clone()).unwrap();
            let b = discretize(&v, &Mask::full([n, 1, 1]).unwrap(), bw).unwrap();
            for i in 0..n { for j in 0..n {
                if vals[i] <= vals[j] {
                    prop_assert!(b.data()[i] <= b.data()[j]);
                }
            }}
            prop_assert!(b.data().contains(&1.0));
        }
    }
}
