use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative jitter added to every fitted covariance, as a fraction of the
/// mean diagonal.
pub const BASE_JITTER: f64 = 1e-6;

/// Number of ×10 escalations tried after the base jitter.
pub const JITTER_ESCALATIONS: u32 = 3;

/// Lower Cholesky factor of a covariance with the Gaussian normalizer
/// `-(d/2) ln 2π - ln|L|` folded in.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    d: usize,
    lower: Vec<f64>,
    log_norm: f64,
}

impl Factor {
    pub(crate) fn new(cov: &[f64], d: usize) -> Result<Self> {
        if cov.len() != d * d || d == 0 {
            return Err(Error::Shape(format!(
                "covariance has {} entries, expected {}",
                cov.len(),
                d * d
            )));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularCovariance);
        }
        if let Some(f) = Factor::try_plain(cov, d) {
            return Ok(f);
        }
        let scale = mean_diagonal(cov, d);
        if !(scale > 0.0) {
            return Err(Error::SingularCovariance);
        }
        let mut eps = BASE_JITTER * scale;
        for _ in 0..=JITTER_ESCALATIONS {
            let mut c = cov.to_vec();
            add_diagonal(&mut c, d, eps);
            if let Some(f) = Factor::try_plain(&c, d) {
                return Ok(f);
            }
            eps *= 10.0;
        }
        Err(Error::SingularCovariance)
    }

    fn try_plain(cov: &[f64], d: usize) -> Option<Self> {
        let chol = DMatrix::from_row_slice(d, d, cov).cholesky()?;
        let l = chol.l();
        let mut lower = vec![0.0; d * d];
        let mut log_det_half = 0.0;
        for r in 0..d {
            for c in 0..=r {
                lower[r * d + c] = l[(r, c)];
            }
            let diag = l[(r, r)];
            if !(diag > 0.0) || !diag.is_finite() {
                return None;
            }
            log_det_half += diag.ln();
        }
        let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half;
        Some(Factor { d, lower, log_norm })
    }

    /// Log-density at `x` for mean `mu`.
    pub(crate) fn log_pdf(&self, x: &[f64], mu: &[f64]) -> f64 {
        let d = self.d;
        // forward substitution L y = x - mu, accumulating |y|^2
        let mut y = [0.0f64; 8];
        let mut heap;
        let y: &mut [f64] = if d <= 8 {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut q = 0.0;
        for r in 0..d {
            let mut s = x[r] - mu[r];
            for c in 0..r {
                s -= self.lower[r * d + c] * y[c];
            }
            let v = s / self.lower[r * d + r];
            y[r] = v;
            q += v * v;
        }
        self.log_norm - 0.5 * q
    }
}

pub(crate) fn mean_diagonal(cov: &[f64], d: usize) -> f64 {
    (0..d).map(|k| cov[k * d + k]).sum::<f64>() / d as f64
}

pub(crate) fn add_diagonal(cov: &mut [f64], d: usize, eps: f64) {
    for k in 0..d {
        cov[k * d + k] += eps;
    }
}

/// Multivariate normal log-density with a row-major covariance. Jitter is
/// only added if the covariance does not factor as given.
pub fn log_gaussian_pdf(x: &[f64], mu: &[f64], cov: &[f64]) -> Result<f64> {
    let d = x.len();
    if mu.len() != d {
        return Err(Error::Shape(format!("point has dimension {d}, mean {}", mu.len())));
    }
    Ok(Factor::new(cov, d)?.log_pdf(x, mu))
}

/// Responsibility-weighted mean and covariance (divisor = total weight).
/// Eigenvalues below `floor` are raised to it, which is the maximum
/// likelihood covariance under that constraint; then the base jitter is
/// added.
pub(crate) fn weighted_moments(rows: &[f64], d: usize, w: &[f64], floor: f64) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; d];
    for (x, &wi) in rows.chunks_exact(d).zip(w) {
        for k in 0..d {
            mean[k] += wi * x[k];
        }
    }
    for v in &mut mean {
        *v /= total;
    }
    let mut cov = vec![0.0; d * d];
    let mut diff = vec![0.0; d];
    for (x, &wi) in rows.chunks_exact(d).zip(w) {
        if wi == 0.0 {
            continue;
        }
        for k in 0..d {
            diff[k] = x[k] - mean[k];
        }
        for r in 0..d {
            for c in 0..=r {
                cov[r * d + c] += wi * diff[r] * diff[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..=r {
            let v = cov[r * d + c] / total;
            cov[r * d + c] = v;
            cov[c * d + r] = v;
        }
    }
    if floor > 0.0 {
        clip_eigenvalues(&mut cov, d, floor);
    }
    let eps = BASE_JITTER * mean_diagonal(&cov, d);
    add_diagonal(&mut cov, d, eps);
    (mean, cov)
}

pub(crate) fn clip_eigenvalues(cov: &mut [f64], d: usize, floor: f64) {
    let eig = DMatrix::from_row_slice(d, d, cov).symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return;
    }
    let v = &eig.eigenvectors;
    for r in 0..d {
        for c in 0..=r {
            let x: f64 = (0..d).map(|k| v[(r, k)] * eig.eigenvalues[k].max(floor) * v[(c, k)]).sum();
            cov[r * d + c] = x;
            cov[c * d + r] = x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det3(a: &[f64]) -> f64 {
        a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
            + a[2] * (a[3] * a[7] - a[4] * a[6])
    }

    /// Adjugate over determinant.
    fn inv3(a: &[f64]) -> Vec<f64> {
        let det = det3(a);
        let cof = |r: usize, c: usize| {
            let rows: Vec<usize> = (0..3).filter(|&i| i != r).collect();
            let cols: Vec<usize> = (0..3).filter(|&j| j != c).collect();
            let m = |i: usize, j: usize| a[rows[i] * 3 + cols[j]];
            let minor = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
            if (r + c).is_multiple_of(2) {
                minor
            } else {
                -minor
            }
        };
        let mut inv = vec![0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                inv[c * 3 + r] = cof(r, c) / det;
            }
        }
        inv
    }

    #[test]
    fn analytic_values() {
        let v = log_gaussian_pdf(&[0.0], &[0.0], &[1.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((v + 0.91894).abs() < 1e-5);
        let v = log_gaussian_pdf(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((v + 1.83788).abs() < 1e-5);
    }

    #[test]
    fn matches_determinant_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let a: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            // A A^T + 0.5 I is SPD
            let mut s = vec![0.0; 9];
            for r in 0..3 {
                for c in 0..3 {
                    s[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * a[c * 3 + k]).sum::<f64>()
                        + if r == c { 0.5 } else { 0.0 };
                }
            }
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let inv = inv3(&s);
            let diff: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
            let mut q = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    q += diff[r] * inv[r * 3 + c] * diff[c];
                }
            }
            let oracle = -1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * det3(&s).ln() - 0.5 * q;
            let got = log_gaussian_pdf(&x, &mu, &s).unwrap();
            assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
        }
    }

    #[test]
    fn jitter_rescues_rank_deficient_and_zero_fails() {
        // rank one
        let cov = [1.0, 1.0, 1.0, 1.0];
        assert!(log_gaussian_pdf(&[0.0, 0.0], &[0.0, 0.0], &cov).unwrap().is_finite());
        assert!(matches!(
            log_gaussian_pdf(&[0.0, 0.0], &[0.0, 0.0], &[0.0; 4]),
            Err(Error::SingularCovariance)
        ));
        assert!(matches!(
            log_gaussian_pdf(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0, 0.0, -1.0]),
            Err(Error::SingularCovariance)
        ));
        assert!(log_gaussian_pdf(&[0.0], &[0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn weighted_moments_reduce_to_population_statistics() {
        let rows = [1.0, 2.0, 3.0, 6.0, 5.0, 1.0];
        let (m, c) = weighted_moments(&rows, 2, &[1.0, 1.0, 1.0], 0.0);
        assert!((m[0] - 3.0).abs() < 1e-15 && (m[1] - 3.0).abs() < 1e-15);
        let var_x = 8.0 / 3.0;
        let var_y = 14.0 / 3.0;
        let cov_xy = (-2.0 * -1.0 + 0.0 + 2.0 * -2.0) / 3.0;
        let eps = 1e-6 * (var_x + var_y) / 2.0;
        assert!((c[0] - var_x - eps).abs() < 1e-14);
        assert!((c[3] - var_y - eps).abs() < 1e-14);
        assert!((c[1] - cov_xy).abs() < 1e-14 && c[1] == c[2]);
    }

    #[test]
    fn eigenvalue_floor_only_lifts_thin_directions() {
        // points on the line y = x: eigenvalues 2 var and 0
        let rows = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let (_, c) = weighted_moments(&rows, 2, &[1.0; 4], 0.1);
        let var = 1.25;
        // eigenvalues (2.5, 0.1) along (1,1)/√2 and (1,-1)/√2, plus jitter
        let eps = 1e-6 * (2.5 + 0.1) / 2.0;
        assert!((c[0] - ((2.0 * var + 0.1) / 2.0 + eps)).abs() < 1e-12);
        assert!((c[1] - (2.0 * var - 0.1) / 2.0).abs() < 1e-12);
        let (_, untouched) = weighted_moments(&rows, 2, &[1.0; 4], 0.0);
        let (_, small) = weighted_moments(&[0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0], 2, &[1.0; 4], 0.5);
        assert_eq!(small, [1.0 + 1e-6, 0.0, 0.0, 1.0 + 1e-6]);
        assert!(Factor::new(&untouched, 2).is_ok());
    }
}
