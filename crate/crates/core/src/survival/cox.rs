use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::concordance::harrell_c;
use super::logrank::chi2_sf;
use super::{event_count, SurvivalRecord};
use crate::error::{Error, Result};

const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    Breslow,
    Efron,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub ties: Ties,
    pub max_iter: usize,
    /// Convergence when the score vector's Euclidean norm drops below this.
    pub tol: f64,
    /// Coefficients beyond this magnitude are reported as separation.
    pub max_abs_beta: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            ties: Ties::Breslow,
            max_iter: 100,
            tol: 1e-9,
            max_abs_beta: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub hazard_ratios: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub z: Vec<f64>,
    pub p_values: Vec<f64>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    /// Partial log-likelihood after each accepted Newton step, starting at
    /// β = 0.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Harrell's C of the linear predictor, if any pair is comparable.
    pub concordance: Option<f64>,
}

impl CoxModel {
    pub fn linear_predictor(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter()
            .map(|row| row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Partial log-likelihood with its score and observed information.
struct Eval {
    loglik: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

struct Problem {
    /// Centered covariates in descending time order.
    centered: Vec<Vec<f64>>,
    times: Vec<f64>,
    events: Vec<bool>,
    p: usize,
    ties: Ties,
}

impl Problem {
    fn new(records: &[SurvivalRecord], x: &[Vec<f64>], ties: Ties) -> Self {
        let p = x[0].len();
        let n = records.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| records[b].time.total_cmp(&records[a].time));
        let means: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        Problem {
            centered: order
                .iter()
                .map(|&i| x[i].iter().zip(&means).map(|(v, m)| v - m).collect())
                .collect(),
            times: order.iter().map(|&i| records[i].time).collect(),
            events: order.iter().map(|&i| records[i].event).collect(),
            p,
            ties,
        }
    }

    fn eval(&self, beta: &DVector<f64>) -> Eval {
        let p = self.p;
        let n = self.times.len();
        let eta: Vec<f64> = self
            .centered
            .iter()
            .map(|row| row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum())
            .collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

        let mut loglik = 0.0;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        // risk-set sums over everyone with time >= current
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        let mut i = 0;
        while i < n {
            let t = self.times[i];
            let mut j = i;
            let mut d0 = 0.0;
            let mut d1 = DVector::zeros(p);
            let mut d2 = DMatrix::zeros(p, p);
            let mut deaths = 0usize;
            while j < n && self.times[j] == t {
                let xj = DVector::from_column_slice(&self.centered[j]);
                s0 += w[j];
                s1.axpy(w[j], &xj, 1.0);
                s2.ger(w[j], &xj, &xj, 1.0);
                if self.events[j] {
                    deaths += 1;
                    loglik += eta[j] - shift;
                    grad += &xj;
                    d0 += w[j];
                    d1.axpy(w[j], &xj, 1.0);
                    d2.ger(w[j], &xj, &xj, 1.0);
                }
                j += 1;
            }
            for l in 0..deaths {
                let f = match self.ties {
                    Ties::Breslow => 0.0,
                    Ties::Efron => l as f64 / deaths as f64,
                };
                let a0 = s0 - f * d0;
                let a1 = &s1 - &d1 * f;
                let a2 = &s2 - &d2 * f;
                loglik -= a0.ln();
                grad.axpy(-1.0 / a0, &a1, 1.0);
                info += a2 / a0 - (&a1 * a1.transpose()) / (a0 * a0);
            }
            i = j;
        }
        Eval { loglik, grad, info }
    }
}

/// Cholesky factor of the information, rejecting pivots that are rounding
/// noise relative to the largest diagonal entry.
fn factor_information(info: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = info.clone().cholesky().ok_or(Error::Collinearity)?;
    let scale = info.diagonal().amax();
    let l = chol.l_dirty();
    if (0..info.nrows()).any(|j| !(l[(j, j)] * l[(j, j)] > 1e-10 * scale)) {
        return Err(Error::Collinearity);
    }
    Ok(chol)
}

fn check_inputs(records: &[SurvivalRecord], x: &[Vec<f64>]) -> Result<usize> {
    let n = records.len();
    if x.len() != n {
        return Err(Error::Shape(format!("{n} records, {} covariate rows", x.len())));
    }
    let p = x.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(Error::InvalidArgument("no covariates".into()));
    }
    if let Some(r) = x.iter().position(|r| r.len() != p) {
        return Err(Error::Shape(format!("covariate row {r} has {} values, expected {p}", x[r].len())));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite covariate".into()));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} subjects for {p} covariates")));
    }
    if event_count(records) == 0 {
        return Err(Error::InsufficientData("Cox model with no events".into()));
    }
    if let Some(j) = (0..p).find(|&j| x.iter().all(|r| r[j] == x[0][j])) {
        return Err(Error::InvalidArgument(format!("covariate {j} is constant")));
    }
    Ok(p)
}

pub fn cox_fit(records: &[SurvivalRecord], x: &[Vec<f64>]) -> Result<CoxModel> {
    cox_fit_with(records, x, &CoxOptions::default())
}

/// Newton–Raphson on the partial likelihood from β = 0, halving any step
/// that does not increase it.
pub fn cox_fit_with(records: &[SurvivalRecord], x: &[Vec<f64>], opts: &CoxOptions) -> Result<CoxModel> {
    let p = check_inputs(records, x)?;
    let prob = Problem::new(records, x, opts.ties);
    let mut beta = DVector::zeros(p);
    let mut cur = prob.eval(&beta);
    let null_log_likelihood = cur.loglik;
    let mut history = vec![cur.loglik];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if cur.grad.norm() < opts.tol {
            converged = true;
            break;
        }
        let chol = factor_information(&cur.info)?;
        let step = chol.solve(&cur.grad);
        // Near the optimum the predicted gain g'I^-1 g / 2 falls below the
        // resolution of the log-likelihood; there a step is judged by the
        // score norm instead.
        let resolution = 1e-12 * (1.0 + cur.loglik.abs());
        let below_resolution = cur.grad.dot(&step) / 2.0 < resolution;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &beta + &step * scale;
            let e = prob.eval(&cand);
            let better = if below_resolution {
                e.loglik >= cur.loglik - resolution && e.grad.norm() < cur.grad.norm()
            } else {
                e.loglik > cur.loglik
            };
            if better {
                accepted = Some((cand, e));
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        let Some((cand, e)) = accepted else {
            break;
        };
        beta = cand;
        cur = e;
        history.push(cur.loglik);
        if let Some(index) = beta.iter().position(|b| b.abs() > opts.max_abs_beta) {
            return Err(Error::Separation {
                index,
                value: beta[index],
            });
        }
    }
    if !converged && cur.grad.norm() >= opts.tol {
        return Err(Error::Numeric(format!(
            "Cox fit did not converge in {} iterations (score norm {:.3e})",
            opts.max_iter,
            cur.grad.norm()
        )));
    }
    // A monotone likelihood flattens out before |β| reaches the cap, so the
    // score test above passes. Probing past the cap along β tells it apart
    // from a finite maximum, beyond which the likelihood must fall.
    let index = beta.iamax();
    let largest = beta[index].abs();
    if largest > 0.0 {
        let far = &beta * ((opts.max_abs_beta + 1.0) / largest);
        if prob.eval(&far).loglik >= cur.loglik {
            return Err(Error::Separation {
                index,
                value: beta[index],
            });
        }
    }
    let cov = factor_information(&cur.info)?.inverse();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let z: Vec<f64> = coefficients.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let mut model = CoxModel {
        hazard_ratios: coefficients.iter().map(|b| b.exp()).collect(),
        ci_lower: coefficients.iter().zip(&std_errors).map(|(b, s)| (b - Z_95 * s).exp()).collect(),
        ci_upper: coefficients.iter().zip(&std_errors).map(|(b, s)| (b + Z_95 * s).exp()).collect(),
        p_values: z.iter().map(|z| chi2_sf(z * z, 1)).collect(),
        z,
        coefficients,
        std_errors,
        log_likelihood: cur.loglik,
        null_log_likelihood,
        history,
        iterations,
        gradient_norm: cur.grad.norm(),
        concordance: None,
    };
    model.concordance = harrell_c(&model.linear_predictor(x), records).ok();
    Ok(model)
}

/// Indicator columns for every label except the smallest, which is the
/// reference. Returns the columns and the ordered distinct labels.
pub fn cluster_indicators(labels: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let distinct: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let rows = labels
        .iter()
        .map(|l| distinct[1..].iter().map(|d| f64::from(u8::from(l == d))).collect())
        .collect();
    (rows, distinct)
}

/// Hazard ratio of `exposed` relative to `reference`, oriented so that
/// `hr >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseHr {
    pub reference: usize,
    pub exposed: usize,
    pub hr: f64,
    pub lower: f64,
    pub upper: f64,
    pub p: f64,
}

/// Univariate Cox fit for every unordered pair of clusters; returns the
/// pair with the largest hazard ratio. Pairs whose fit fails are skipped.
pub fn max_pairwise_hr(records: &[SurvivalRecord], labels: &[usize]) -> Result<PairwiseHr> {
    if records.len() != labels.len() {
        return Err(Error::Shape(format!("{} records, {} labels", records.len(), labels.len())));
    }
    let distinct: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.len() < 2 {
        return Err(Error::InsufficientData("pairwise hazard ratios need at least 2 clusters".into()));
    }
    let mut best: Option<PairwiseHr> = None;
    let mut last_err = None;
    for (ai, &a) in distinct.iter().enumerate() {
        for &b in &distinct[ai + 1..] {
            let (recs, x): (Vec<SurvivalRecord>, Vec<Vec<f64>>) = records
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == a || l == b)
                .map(|(r, &l)| (r.clone(), vec![f64::from(u8::from(l == b))]))
                .unzip();
            let m = match cox_fit(&recs, &x) {
                Ok(m) => m,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let (beta, se) = (m.coefficients[0], m.std_errors[0]);
            let row = if beta >= 0.0 {
                PairwiseHr {
                    reference: a,
                    exposed: b,
                    hr: m.hazard_ratios[0],
                    lower: m.ci_lower[0],
                    upper: m.ci_upper[0],
                    p: m.p_values[0],
                }
            } else {
                PairwiseHr {
                    reference: b,
                    exposed: a,
                    hr: (-beta).exp(),
                    lower: (-beta - Z_95 * se).exp(),
                    upper: (-beta + Z_95 * se).exp(),
                    p: m.p_values[0],
                }
            };
            if best.as_ref().is_none_or(|b| row.hr > b.hr) {
                best = Some(row);
            }
        }
    }
    best.ok_or_else(|| {
        Error::InsufficientData(format!(
            "no cluster pair admits a Cox fit (last: {})",
            last_err.map_or_else(|| "none".into(), |e| e.to_string())
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::super::records;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Breslow partial log-likelihood written out term by term.
    fn explicit_partial_loglik(recs: &[SurvivalRecord], x: &[f64], beta: f64) -> f64 {
        let mut l = 0.0;
        for (i, r) in recs.iter().enumerate() {
            if !r.event {
                continue;
            }
            let denom: f64 = recs
                .iter()
                .zip(x)
                .filter(|(s, _)| s.time >= r.time)
                .map(|(_, xj)| (beta * xj).exp())
                .sum();
            l += beta * x[i] - denom.ln();
        }
        l
    }

    /// Grid search then golden-section refinement.
    fn brute_force_beta(recs: &[SurvivalRecord], x: &[f64]) -> f64 {
        let f = |b: f64| explicit_partial_loglik(recs, x, b);
        let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.025).collect();
        let best = grid.iter().copied().fold(grid[0], |a, b| if f(b) > f(a) { b } else { a });
        let (mut lo, mut hi) = (best - 0.025, best + 0.025);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = hi - g * (hi - lo);
            let d = lo + g * (hi - lo);
            if f(c) > f(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn four_subject_binary_covariate_matches_brute_force() {
        let recs = records(&[(1.0, true), (2.0, true), (3.0, true), (4.0, true)]);
        for x in [[1.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]] {
            let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
            let m = cox_fit(&recs, &rows).unwrap();
            let want = brute_force_beta(&recs, &x);
            assert!((m.coefficients[0] - want).abs() < 1e-6, "{} vs {want}", m.coefficients[0]);
            assert!((m.log_likelihood - explicit_partial_loglik(&recs, &x, want)).abs() < 1e-9);
        }
    }

    #[test]
    fn random_small_cases_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 30 {
            let n = rng.random_range(3..=6);
            let rows: Vec<(f64, bool)> = (0..n)
                .map(|_| (f64::from(rng.random_range(1..5u8)), rng.random_bool(0.7)))
                .collect();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let recs = records(&rows);
            let cols: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
            let Ok(m) = cox_fit(&recs, &cols) else { continue };
            let want = brute_force_beta(&recs, &x);
            assert!((m.coefficients[0] - want).abs() < 1e-6, "{rows:?} {x:?}: {} vs {want}", m.coefficients[0]);
            checked += 1;
        }
    }

    #[test]
    fn monotone_likelihood_below_the_cap_is_separation() {
        // the highest covariate fails first and the other event is alone at risk
        let recs = records(&[(1.0, true), (2.0, true), (1.0, false)]);
        let x = vec![vec![0.98], vec![-0.82], vec![-0.40]];
        assert!(matches!(cox_fit(&recs, &x), Err(Error::Separation { index: 0, .. })));
    }

    #[test]
    fn symmetric_swap_gives_zero() {
        // each time point holds one subject with x = 1 and one with x = 0
        let recs = records(&[(1.0, true), (1.0, true), (2.0, false), (2.0, false), (3.0, true), (3.0, true)]);
        let x = vec![vec![1.0], vec![0.0], vec![0.0], vec![1.0], vec![1.0], vec![0.0]];
        for ties in [Ties::Breslow, Ties::Efron] {
            let m = cox_fit_with(&recs, &x, &CoxOptions { ties, ..Default::default() }).unwrap();
            assert!(m.coefficients[0].abs() < 1e-6);
            assert!((m.hazard_ratios[0] - 1.0).abs() < 1e-6);
            assert!(m.ci_lower[0] <= 1.0 && 1.0 <= m.ci_upper[0]);
        }
    }

    #[test]
    fn efron_matches_hand_formula_for_one_tie() {
        // two tied deaths at t=1 (x = 1, 0) and one at t=2 (x = 1)
        let recs = records(&[(1.0, true), (1.0, true), (2.0, true), (3.0, false)]);
        let x = [1.0, 0.0, 1.0, 0.0];
        let efron = |b: f64| {
            let e = |v: f64| (b * v).exp();
            let s = e(1.0) + 1.0 + e(1.0) + 1.0;
            let dset = e(1.0) + 1.0;
            b - s.ln() - (s - dset / 2.0).ln() + b - (e(1.0) + 1.0).ln()
        };
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let m = cox_fit_with(&recs, &rows, &CoxOptions { ties: Ties::Efron, ..Default::default() }).unwrap();
        let b = m.coefficients[0];
        assert!((m.log_likelihood - efron(b)).abs() < 1e-10);
        let h = 1e-5;
        assert!(((efron(b + h) - efron(b - h)) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn reported_quantities_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 60;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let rows: Vec<(f64, bool)> = x
            .iter()
            .map(|r| {
                let rate = (1.5 * r[0]).exp();
                (-rng.random_range(0.0f64..1.0).ln() / rate, rng.random_bool(0.8))
            })
            .collect();
        let m = cox_fit(&records(&rows), &x).unwrap();
        for j in 0..2 {
            assert!(m.std_errors[j] > 0.0);
            assert!(m.ci_lower[j] <= m.hazard_ratios[j] && m.hazard_ratios[j] <= m.ci_upper[j]);
            assert!((m.z[j] - m.coefficients[j] / m.std_errors[j]).abs() < 1e-12);
            let two_sided = statrs::function::erf::erfc(m.z[j].abs() / 2f64.sqrt());
            assert!((m.p_values[j] - two_sided).abs() < 1e-10 * two_sided);
        }
        assert!(m.history.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
        assert!(m.gradient_norm < 1e-9);
        assert!(m.concordance.unwrap() > 0.5);
    }

    #[test]
    fn error_cases() {
        let recs = records(&[(1.0, true), (2.0, true), (3.0, true), (4.0, false)]);
        // x perfectly ordered with failure time: monotone likelihood
        let sep: Vec<Vec<f64>> = [3.0, 2.0, 1.0, 0.0].iter().map(|&v| vec![v]).collect();
        assert!(matches!(cox_fit(&recs, &sep), Err(Error::Separation { index: 0, .. })));
        let collinear: Vec<Vec<f64>> = [1.0, 0.0, 1.0, 2.0].iter().map(|&v| vec![v, 2.0 * v]).collect();
        assert!(matches!(cox_fit(&recs, &collinear), Err(Error::Collinearity)));
        let constant = vec![vec![1.0]; 4];
        assert!(cox_fit(&recs, &constant).is_err());
        let censored = records(&[(1.0, false), (2.0, false)]);
        assert!(cox_fit(&censored, &[vec![0.0], vec![1.0]]).is_err());
        assert!(cox_fit(&recs[..1], &[vec![1.0]]).is_err());
    }

    #[test]
    fn pairwise_orientation_and_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut recs = Vec::new();
        let mut labels = Vec::new();
        for (label, rate) in [(1usize, 0.05), (2, 0.2), (3, 0.05)] {
            for i in 0..40 {
                let t = (-rng.random_range(0.0f64..1.0).ln() / rate).min(36.0);
                recs.push(SurvivalRecord::new(format!("{label}-{i}"), t, t < 36.0).unwrap());
                labels.push(label);
            }
        }
        let best = max_pairwise_hr(&recs, &labels).unwrap();
        assert_eq!(best.exposed, 2);
        assert!(best.hr >= 1.0 && best.lower <= best.hr && best.hr <= best.upper);
        assert!(best.p < 0.05);
        // the label values do not matter, only the grouping
        let shifted: Vec<usize> = labels.iter().map(|l| 10 - l).collect();
        let again = max_pairwise_hr(&recs, &shifted).unwrap();
        assert_eq!(again.exposed, 8);
        assert!((again.hr - best.hr).abs() < 1e-9);
        assert!(max_pairwise_hr(&recs, &vec![1; recs.len()]).is_err());
    }

    #[test]
    fn indicators_use_smallest_label_as_reference() {
        let (rows, distinct) = cluster_indicators(&[3, 1, 2, 3]);
        assert_eq!(distinct, vec![1, 2, 3]);
        assert_eq!(rows, vec![vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn shift_and_scale_equivariance(seed in 0u64..10_000, shift in -50.0f64..50.0, s in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rows: Vec<(f64, bool)> = x
                .iter()
                .map(|v| (-rng.random_range(0.0f64..1.0).ln() / (0.8 * v).exp(), rng.random_bool(0.7)))
                .collect();
            let recs = records(&rows);
            let base = cox_fit(&recs, &x.iter().map(|&v| vec![v]).collect::<Vec<_>>());
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let shifted = cox_fit(&recs, &x.iter().map(|&v| vec![v + shift]).collect::<Vec<_>>()).unwrap();
            let scaled = cox_fit(&recs, &x.iter().map(|&v| vec![v * s]).collect::<Vec<_>>()).unwrap();
            prop_assert!((shifted.coefficients[0] - base.coefficients[0]).abs() < 1e-8);
            prop_assert!((scaled.coefficients[0] - base.coefficients[0] / s).abs() < 1e-8);
            prop_assert_eq!(scaled.concordance, base.concordance);
            prop_assert!(base.history.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
            prop_assert!(base.gradient_norm < 1e-9 && shifted.gradient_norm < 1e-9);
        }
    }
}
