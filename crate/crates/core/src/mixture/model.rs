use std::fmt::Write as _;
use std::path::Path;

use crate::error::{parse_err, Error, Result};
use crate::matrix::FeatureMatrix;

use super::gaussian::{weighted_moments, Factor};

/// Free parameters of one full-covariance Gaussian in `d` dimensions.
pub fn params_per_component(d: usize) -> usize {
    d + d * (d + 1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    d: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major `d x d`.
    covariances: Vec<Vec<f64>>,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<f64>>) -> Result<Self> {
        let c = weights.len();
        if c == 0 {
            return Err(Error::InvalidArgument("a mixture needs at least one component".into()));
        }
        if means.len() != c || covariances.len() != c {
            return Err(Error::Shape(format!(
                "{c} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::Shape("zero-dimensional component".into()));
        }
        for m in 0..c {
            if means[m].len() != d || covariances[m].len() != d * d {
                return Err(Error::Shape(format!("component {m} does not have dimension {d}")));
            }
            if means[m].iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("component {m} has a non-finite mean")));
            }
            Factor::new(&covariances[m], d)?;
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("weights {weights:?} are not a distribution")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        Ok(MixtureModel {
            d,
            weights,
            means,
            covariances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Components with strictly positive weight.
    pub fn active_components(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, m: usize) -> &[f64] {
        &self.means[m]
    }

    pub fn covariance(&self, m: usize) -> &[f64] {
        &self.covariances[m]
    }

    pub(crate) fn factors(&self) -> Result<Vec<Factor>> {
        self.covariances.iter().map(|c| Factor::new(c, self.d)).collect()
    }

    fn check_data(&self, data: &FeatureMatrix) -> Result<()> {
        if data.ncols() != self.d {
            return Err(Error::Shape(format!(
                "data has {} columns, model dimension is {}",
                data.ncols(),
                self.d
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT} {VERSION}");
        let _ = writeln!(s, "components {}", self.components());
        let _ = writeln!(s, "dim {}", self.d);
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for m in 0..self.components() {
            let _ = writeln!(s, "weight {}", self.weights[m]);
            let _ = writeln!(s, "mean {}", join(&self.means[m]));
            let _ = writeln!(s, "cov {}", join(&self.covariances[m]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| parse_err("<gmm>", format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| parse_err("<gmm>", format!("unexpected end of file, expected `{key}`")))?;
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or("");
            if head != key {
                return Err(err(no, format!("expected `{key}`, found `{head}`")));
            }
            Ok((no, parts.map(str::to_string).collect()))
        };
        let nums = |no: usize, parts: &[String], want: usize| -> Result<Vec<f64>> {
            if parts.len() != want {
                return Err(err(no, format!("expected {want} values, found {}", parts.len())));
            }
            parts
                .iter()
                .map(|p| p.parse::<f64>().map_err(|_| err(no, format!("`{p}` is not a number"))))
                .collect()
        };
        let (no, version) = next(FORMAT)?;
        if version != [VERSION.to_string()] {
            return Err(err(no, format!("unsupported version {version:?}")));
        }
        let (no, c) = next("components")?;
        let c = nums(no, &c, 1)?[0] as usize;
        let (no, d) = next("dim")?;
        let d = nums(no, &d, 1)?[0] as usize;
        let (mut weights, mut means, mut covs) = (vec![], vec![], vec![]);
        for _ in 0..c {
            let (no, w) = next("weight")?;
            weights.push(nums(no, &w, 1)?[0]);
            let (no, mu) = next("mean")?;
            means.push(nums(no, &mu, d)?);
            let (no, cov) = next("cov")?;
            covs.push(nums(no, &cov, d * d)?);
        }
        MixtureModel::new(weights, means, covs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        MixtureModel::from_text(&std::fs::read_to_string(path)?).map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(path, msg),
            other => other,
        })
    }
}

const FORMAT: &str = "phenoclust-gmm";
const VERSION: u32 = 1;

/// Row-major `n x c` posterior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    c: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn new(c: usize, values: Vec<f64>) -> Result<Self> {
        if c == 0 || !values.len().is_multiple_of(c) {
            return Err(Error::Shape(format!("{} values do not form rows of {c}", values.len())));
        }
        for (i, row) in values.chunks_exact(c).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("responsibility row {i} sums to {s}")));
            }
        }
        Ok(Responsibilities { c, values })
    }

    pub fn components(&self) -> usize {
        self.c
    }

    pub fn nrows(&self) -> usize {
        self.values.len() / self.c
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.c..(i + 1) * self.c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.c];
        for row in self.values.chunks_exact(self.c) {
            for (a, v) in s.iter_mut().zip(row) {
                *a += v;
            }
        }
        s
    }
}

/// `ln Σ exp(v)` over a row; `None` if every entry is `-inf` or NaN.
pub(crate) fn log_sum_exp(v: &[f64]) -> Option<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    Some(max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln())
}

/// Posterior responsibilities and the total mixture log-likelihood.
pub fn e_step(model: &MixtureModel, data: &FeatureMatrix) -> Result<(Responsibilities, f64)> {
    model.check_data(data)?;
    let factors = model.factors()?;
    let c = model.components();
    let log_w: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut values = Vec::with_capacity(data.nrows() * c);
    let mut row = vec![0.0; c];
    let mut loglik = 0.0;
    for (i, x) in data.rows().enumerate() {
        for m in 0..c {
            row[m] = log_w[m] + factors[m].log_pdf(x, &model.means[m]);
        }
        let lse = log_sum_exp(&row).ok_or_else(|| {
            Error::Numeric(format!("sample `{}` has zero density under every component", data.ids()[i]))
        })?;
        loglik += lse;
        // normalizing the shifted exponentials directly keeps ties exact
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = values.len();
        values.extend(row.iter().map(|v| (v - top).exp()));
        let total: f64 = values[start..].iter().sum();
        for v in &mut values[start..] {
            *v /= total;
        }
    }
    Ok((Responsibilities { c, values }, loglik))
}

pub fn log_likelihood(model: &MixtureModel, data: &FeatureMatrix) -> Result<f64> {
    Ok(e_step(model, data)?.1)
}

/// Batch M-step with the message-length weight rule
/// `α_m ∝ max(0, W_m - N_p/2)`; components whose weight hits zero are
/// dropped.
pub fn m_step_annihilating(resp: &Responsibilities, data: &FeatureMatrix) -> Result<MixtureModel> {
    m_step_floored(resp, data, 0.0)
}

/// [`m_step_annihilating`] with covariance eigenvalues kept at or above
/// `floor`.
pub(crate) fn m_step_floored(resp: &Responsibilities, data: &FeatureMatrix, floor: f64) -> Result<MixtureModel> {
    if resp.nrows() != data.nrows() {
        return Err(Error::Shape(format!(
            "{} responsibility rows for {} samples",
            resp.nrows(),
            data.nrows()
        )));
    }
    let d = data.ncols();
    let half = params_per_component(d) as f64 / 2.0;
    let mass = resp.column_sums();
    let raw: Vec<f64> = mass.iter().map(|w| (w - half).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return Err(Error::DegenerateModel);
    }
    let (mut weights, mut means, mut covs) = (vec![], vec![], vec![]);
    let mut w = vec![0.0; data.nrows()];
    for m in 0..resp.components() {
        if raw[m] == 0.0 {
            continue;
        }
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = resp.row(i)[m];
        }
        let (mu, cov) = weighted_moments(data.data(), d, &w, floor);
        weights.push(raw[m] / total);
        means.push(mu);
        covs.push(cov);
    }
    MixtureModel::new(weights, means, covs)
}

/// Parameter-cost part of the message length for `n` samples.
pub fn message_length_penalty(model: &MixtureModel, n: usize) -> f64 {
    let np = params_per_component(model.d) as f64;
    let n = n as f64;
    let mut alive = 0.0;
    let mut weight_term = 0.0;
    for &a in &model.weights {
        if a > 0.0 {
            alive += 1.0;
            weight_term += (n * a / 12.0).ln();
        }
    }
    np / 2.0 * weight_term + alive / 2.0 * (n / 12.0).ln() + alive * (np + 1.0) / 2.0
}

pub fn message_length(model: &MixtureModel, data: &FeatureMatrix) -> Result<f64> {
    Ok(message_length_penalty(model, data.nrows()) - log_likelihood(model, data)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// 1-based cluster label per sample.
    pub labels: Vec<usize>,
    pub responsibilities: Responsibilities,
}

impl Assignment {
    pub fn components(&self) -> usize {
        self.responsibilities.components()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.components()];
        for &l in &self.labels {
            s[l - 1] += 1;
        }
        s
    }

    /// `patient_id,cluster,p_1..p_c`.
    pub fn to_csv_string(&self, ids: &[String]) -> String {
        let mut s = String::from("patient_id,cluster");
        for m in 1..=self.components() {
            let _ = write!(s, ",p_{m}");
        }
        s.push('\n');
        for (i, id) in ids.iter().enumerate() {
            let _ = write!(s, "{id},{}", self.labels[i]);
            for p in self.responsibilities.row(i) {
                let _ = write!(s, ",{p}");
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Assignment::to_csv_string`]; returns the ids as well.
    pub fn from_csv_str(text: &str) -> Result<(Vec<String>, Assignment)> {
        let m = FeatureMatrix::from_csv_reader(text.as_bytes())?;
        let c = m.ncols().saturating_sub(1);
        let expected: Vec<String> = std::iter::once("cluster".to_string())
            .chain((1..=c).map(|k| format!("p_{k}")))
            .collect();
        if c == 0 || m.names() != expected.as_slice() {
            return Err(parse_err("<assignments>", "header must be `patient_id,cluster,p_1..p_c`"));
        }
        let mut labels = Vec::with_capacity(m.nrows());
        let mut values = Vec::with_capacity(m.nrows() * c);
        for (i, row) in m.rows().enumerate() {
            let l = row[0];
            if l.fract() != 0.0 || l < 1.0 || l > c as f64 {
                return Err(parse_err("<assignments>", format!("line {}: cluster `{l}` out of range", i + 2)));
            }
            labels.push(l as usize);
            values.extend_from_slice(&row[1..]);
        }
        let responsibilities = Responsibilities::new(c, values)?;
        Ok((m.ids().to_vec(), Assignment { labels, responsibilities }))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Assignment)> {
        let path = path.as_ref();
        Assignment::from_csv_str(&std::fs::read_to_string(path)?).map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(path, msg),
            other => other,
        })
    }
}

pub(crate) fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (m, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = m;
        }
    }
    best
}

pub fn predict(model: &MixtureModel, data: &FeatureMatrix) -> Result<Assignment> {
    let (resp, _) = e_step(model, data)?;
    let labels = (0..resp.nrows()).map(|i| argmax_first(resp.row(i)) + 1).collect();
    Ok(Assignment {
        labels,
        responsibilities: resp,
    })
}
