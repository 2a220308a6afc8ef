use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

use super::gaussian::{clip_eigenvalues, mean_diagonal, weighted_moments, Factor};
use super::model::{
    e_step, log_sum_exp, m_step_floored, message_length_penalty, params_per_component, MixtureModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmMode {
    /// Update one component at a time, refreshing posteriors in between.
    ComponentWise,
    /// Full E-step followed by [`m_step_annihilating`].
    Batch,
}

/// Criterion used to pick among the converged candidates. Only message
/// length is meaningful for the annihilation path; the others exist for
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Mml,
    Bic,
    Aic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmlConfig {
    pub k_max: usize,
    pub k_min: usize,
    /// Relative message-length change that ends a phase.
    pub tol: f64,
    /// Sweeps per phase.
    pub max_iter: usize,
    pub seed: u64,
    pub mode: EmMode,
    /// Independent runs with seeds `seed, seed + 1, …`; the best is kept.
    pub restarts: usize,
    pub selection: Selection,
    /// Lower bound on the eigenvalues of every fitted covariance, as a
    /// fraction of the mean per-axis variance of the whole data set. Keeps
    /// components from collapsing onto a handful of points; 0 disables it.
    pub variance_floor: f64,
}

impl Default for MmlConfig {
    fn default() -> Self {
        MmlConfig {
            k_max: 25,
            k_min: 1,
            tol: 1e-5,
            max_iter: 100,
            seed: 0,
            mode: EmMode::ComponentWise,
            restarts: 1,
            selection: Selection::Mml,
            variance_floor: 0.25,
        }
    }
}

impl MmlConfig {
    pub fn with_seed(seed: u64) -> Self {
        MmlConfig {
            seed,
            ..MmlConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Init,
    Sweep,
    /// The smallest component was removed to start the next phase.
    ForcedKill,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub phase: usize,
    pub kind: TraceKind,
    pub components: usize,
    /// Components that died during this sweep.
    pub annihilated: usize,
    pub log_likelihood: f64,
    pub message_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub phase: usize,
    pub components: usize,
    pub log_likelihood: f64,
    pub message_length: f64,
    /// Value of the selection criterion (lower is better).
    pub score: f64,
    /// False if the phase stopped at `max_iter`.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitTrace {
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
    pub candidates: Vec<Candidate>,
    /// Index into `candidates`.
    pub selected: usize,
}

impl FitTrace {
    pub fn selected_candidate(&self) -> &Candidate {
        &self.candidates[self.selected]
    }

    /// Largest increase of message length between consecutive entries of
    /// one phase, ending in a sweep. Forced kills start a new phase and are
    /// not counted.
    pub fn max_sweep_increase(&self) -> f64 {
        self.sweep_changes(|_| true)
    }

    /// Largest increase over sweeps that annihilated nothing. Removing a
    /// component drops its (negative) weight penalty, so sweeps with a
    /// death can lengthen the message; sweeps without one cannot.
    pub fn max_fixed_support_increase(&self) -> f64 {
        self.sweep_changes(|e| e.annihilated == 0)
    }

    fn sweep_changes(&self, keep: impl Fn(&TraceEntry) -> bool) -> f64 {
        self.entries
            .windows(2)
            .filter(|w| w[0].phase == w[1].phase && w[1].kind == TraceKind::Sweep && keep(&w[1]))
            .map(|w| w[1].message_length - w[0].message_length)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct State<'a> {
    rows: &'a [f64],
    n: usize,
    d: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<Vec<f64>>,
    /// Per component, log-density of every sample.
    log_dens: Vec<Vec<f64>>,
    floor: f64,
}

impl<'a> State<'a> {
    fn k(&self) -> usize {
        self.weights.len()
    }

    fn densities(&self, mean: &[f64], cov: &[f64]) -> Result<Vec<f64>> {
        let f = Factor::new(cov, self.d)?;
        Ok(self.rows.chunks_exact(self.d).map(|x| f.log_pdf(x, mean)).collect())
    }

    fn from_model(rows: &'a [f64], d: usize, model: &MixtureModel, floor: f64) -> Result<Self> {
        let mut s = State {
            rows,
            n: rows.len() / d,
            d,
            weights: model.weights().to_vec(),
            means: (0..model.components()).map(|m| model.mean(m).to_vec()).collect(),
            covs: (0..model.components()).map(|m| model.covariance(m).to_vec()).collect(),
            log_dens: vec![],
            floor,
        };
        s.log_dens = (0..s.k())
            .map(|m| s.densities(&s.means[m], &s.covs[m]))
            .collect::<Result<_>>()?;
        Ok(s)
    }

    fn model(&self) -> Result<MixtureModel> {
        MixtureModel::new(self.weights.clone(), self.means.clone(), self.covs.clone())
    }

    /// Per-sample `ln Σ_j α_j N_j(x_i)`.
    fn log_mix(&self) -> Result<Vec<f64>> {
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut row = vec![0.0; self.k()];
        (0..self.n)
            .map(|i| {
                for m in 0..self.k() {
                    row[m] = log_w[m] + self.log_dens[m][i];
                }
                log_sum_exp(&row).ok_or_else(|| Error::Numeric(format!("sample {i} has zero mixture density")))
            })
            .collect()
    }

    fn log_likelihood(&self) -> Result<f64> {
        Ok(self.log_mix()?.iter().sum())
    }

    fn score(&self) -> Result<(f64, f64)> {
        let ll = self.log_likelihood()?;
        let penalty = message_length_penalty(&self.model()?, self.n);
        Ok((ll, penalty - ll))
    }

    fn remove(&mut self, m: usize) {
        self.weights.remove(m);
        self.means.remove(m);
        self.covs.remove(m);
        self.log_dens.remove(m);
    }

    fn renormalize(&mut self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateModel);
        }
        for w in &mut self.weights {
            *w /= total;
        }
        Ok(())
    }

    /// One pass over the components; returns how many were annihilated.
    ///
    /// Each step re-evaluates the posteriors of one component, refits its
    /// mean and covariance, and moves its weight to the minimizer of the
    /// EM surrogate of the message length along `α_m = t`, other weights
    /// rescaled by `(1 - t) / (1 - α_m)`. That minimizer is
    /// `(W_m - N_p/2) / (n - k N_p/2)`; a component with `W_m <= N_p/2`
    /// is annihilated.
    fn component_sweep(&mut self) -> Result<usize> {
        let half = params_per_component(self.d) as f64 / 2.0;
        let n = self.n as f64;
        let mut killed = 0;
        let mut w = vec![0.0; self.n];
        let mut m = 0;
        while m < self.k() {
            let lse = self.log_mix()?;
            let old = self.weights[m];
            let log_a = old.ln();
            for i in 0..self.n {
                w[i] = (log_a + self.log_dens[m][i] - lse[i]).exp();
            }
            let mass: f64 = w.iter().sum();
            let k = self.k() as f64;
            let t = if mass <= half {
                0.0
            } else if n - mass > half * (k - 1.0) {
                (mass - half) / (n - k * half)
            } else {
                // the other components cannot all pay for themselves; the
                // surrogate has no interior minimum, fall back to
                // update-and-renormalize
                let raw = (mass - half) / n;
                raw / (raw + 1.0 - old)
            };
            let update = if t > 0.0 {
                let (mean, cov) = weighted_moments(self.rows, self.d, &w, self.floor);
                match self.densities(&mean, &cov) {
                    Ok(dens) => Some((mean, cov, dens)),
                    Err(Error::SingularCovariance) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            match update {
                Some((mean, cov, dens)) => {
                    if old < 1.0 {
                        let scale = (1.0 - t) / (1.0 - old);
                        for (j, a) in self.weights.iter_mut().enumerate() {
                            *a = if j == m { t } else { *a * scale };
                        }
                    }
                    self.means[m] = mean;
                    self.covs[m] = cov;
                    self.log_dens[m] = dens;
                    self.renormalize()?;
                    m += 1;
                }
                None => {
                    self.remove(m);
                    self.renormalize()?;
                    killed += 1;
                }
            }
        }
        Ok(killed)
    }

    fn batch_sweep(&mut self, data: &FeatureMatrix) -> Result<usize> {
        let before = self.k();
        let (resp, _) = e_step(&self.model()?, data)?;
        let next = m_step_floored(&resp, data, self.floor)?;
        *self = State::from_model(self.rows, self.d, &next, self.floor)?;
        Ok(before - self.k())
    }
}

struct Run {
    model: MixtureModel,
    trace: FitTrace,
}

fn validate(data: &FeatureMatrix, cfg: &MmlConfig) -> Result<()> {
    let (n, d) = (data.nrows(), data.ncols());
    if d == 0 {
        return Err(Error::InvalidArgument("data has no columns".into()));
    }
    if n <= d + 1 {
        return Err(Error::InsufficientData(format!("{n} samples in {d} dimensions")));
    }
    if cfg.k_min == 0 || cfg.k_max < cfg.k_min {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k_min <= k_max, got k_min {} k_max {}",
            cfg.k_min, cfg.k_max
        )));
    }
    if n <= cfg.k_min {
        return Err(Error::InsufficientData(format!("{n} samples for k_min {}", cfg.k_min)));
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 || cfg.restarts == 0 {
        return Err(Error::InvalidArgument("tol, max_iter and restarts must be positive".into()));
    }
    if !(cfg.variance_floor >= 0.0) || !cfg.variance_floor.is_finite() {
        return Err(Error::InvalidArgument(format!("variance floor {}", cfg.variance_floor)));
    }
    Ok(())
}

fn initial_state<'a>(data: &'a FeatureMatrix, cfg: &MmlConfig, seed: u64) -> Result<State<'a>> {
    let (n, d) = (data.nrows(), data.ncols());
    let k = cfg.k_max.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let (_, mut cov) = weighted_moments(data.data(), d, &vec![1.0; n], 0.0);
    let floor = cfg.variance_floor * mean_diagonal(&cov, d);
    let shrink = (k as f64).powf(-2.0 / d as f64);
    for v in &mut cov {
        *v *= shrink;
    }
    // start inside the floored family so the first sweep cannot lengthen the message
    clip_eigenvalues(&mut cov, d, floor);
    Factor::new(&cov, d).map_err(|_| Error::FitFailure("data has no spread".into()))?;
    let model = MixtureModel::new(
        vec![1.0 / k as f64; k],
        picks.iter().map(|&i| data.row(i).to_vec()).collect(),
        vec![cov; k],
    )?;
    State::from_model(data.data(), d, &model, floor)
}

fn criterion(sel: Selection, ll: f64, ml: f64, c: usize, d: usize, n: usize) -> f64 {
    let q = (c * params_per_component(d) + c - 1) as f64;
    match sel {
        Selection::Mml => ml,
        Selection::Bic => -2.0 * ll + q * (n as f64).ln(),
        Selection::Aic => -2.0 * ll + 2.0 * q,
    }
}

fn single_run(data: &FeatureMatrix, cfg: &MmlConfig, seed: u64) -> Result<Run> {
    let (n, d) = (data.nrows(), data.ncols());
    let mut state = initial_state(data, cfg, seed)?;
    let mut entries = vec![];
    let mut candidates = vec![];
    let mut models = vec![];
    let entry = |phase, kind, s: &State, annihilated| -> Result<TraceEntry> {
        let (ll, ml) = s.score()?;
        if !ml.is_finite() {
            return Err(Error::Numeric("message length is not finite".into()));
        }
        Ok(TraceEntry {
            phase,
            kind,
            components: s.k(),
            annihilated,
            log_likelihood: ll,
            message_length: ml,
        })
    };
    entries.push(entry(0, TraceKind::Init, &state, 0)?);
    let mut phase = 0;
    loop {
        let mut prev = entries.last().unwrap().message_length;
        let mut converged = false;
        let mut failed = false;
        for _ in 0..cfg.max_iter {
            let killed = match cfg.mode {
                EmMode::ComponentWise => state.component_sweep(),
                EmMode::Batch => state.batch_sweep(data),
            };
            let killed = match killed {
                Ok(k) => k,
                Err(Error::DegenerateModel) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let e = entry(phase, TraceKind::Sweep, &state, killed)?;
            let ml = e.message_length;
            entries.push(e);
            if killed == 0 && (ml - prev).abs() < cfg.tol * prev.abs() {
                converged = true;
                break;
            }
            prev = ml;
        }
        if failed {
            break;
        }
        let last = entries.last().unwrap();
        candidates.push(Candidate {
            phase,
            components: state.k(),
            log_likelihood: last.log_likelihood,
            message_length: last.message_length,
            score: criterion(cfg.selection, last.log_likelihood, last.message_length, state.k(), d, n),
            converged,
        });
        models.push(state.model()?);
        if state.k() <= cfg.k_min {
            break;
        }
        let smallest = (0..state.k())
            .min_by(|&a, &b| state.weights[a].total_cmp(&state.weights[b]))
            .unwrap();
        state.remove(smallest);
        state.renormalize()?;
        phase += 1;
        entries.push(entry(phase, TraceKind::ForcedKill, &state, 0)?);
    }
    if candidates.is_empty() {
        return Err(Error::FitFailure(format!("every candidate degenerated (seed {seed})")));
    }
    // phases that ran out of sweeps only compete if none converged
    let any_converged = candidates.iter().any(|c| c.converged);
    let selected = (0..candidates.len())
        .filter(|&i| candidates[i].converged || !any_converged)
        .min_by(|&a, &b| candidates[a].score.total_cmp(&candidates[b].score))
        .unwrap();
    Ok(Run {
        model: models.swap_remove(selected),
        trace: FitTrace {
            seed,
            entries,
            candidates,
            selected,
        },
    })
}

/// Fits a Gaussian mixture by component-wise EM with annihilation, then
/// walks the component count down to `k_min` and keeps the candidate with
/// the best criterion (minimum message length by default).
pub fn fit_mml(data: &FeatureMatrix, cfg: &MmlConfig) -> Result<(MixtureModel, FitTrace)> {
    validate(data, cfg)?;
    let mut best: Option<Run> = None;
    let mut last_err = None;
    for r in 0..cfg.restarts {
        match single_run(data, cfg, cfg.seed.wrapping_add(r as u64)) {
            Ok(run) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| run.trace.selected_candidate().score < b.trace.selected_candidate().score);
                if better {
                    best = Some(run);
                }
            }
            Err(e @ (Error::FitFailure(_) | Error::DegenerateModel | Error::SingularCovariance)) => {
                last_err = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(run) => Ok((run.model, run.trace)),
        None => Err(match last_err {
            Some(Error::FitFailure(m)) => Error::FitFailure(m),
            Some(e) => Error::FitFailure(e.to_string()),
            None => Error::FitFailure("no run completed".into()),
        }),
    }
}
