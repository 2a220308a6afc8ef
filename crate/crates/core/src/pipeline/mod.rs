//! End-to-end runs over files: extraction (or a feature table, or a
//! synthetic cohort) → quantile codes → autoencoder latents → MML mixture →
//! survival evaluation. Every intermediate artifact is written to the
//! output directory, and `pipeline.log` records the stage boundaries.
//!
//! Survival data is read only by the evaluation stage. The earlier stages
//! take feature matrices and nothing else.

mod evaluate;
mod plot;
mod synthetic;

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{default_architecture, encode, loss_history_csv, train, AdamParams, Checkpoint, Loss, MlpNetwork, TrainConfig};
use crate::error::{parse_err, Error, Result};
use crate::features::{extract_feature_vector, feature_names, ExtractionConfig, Mask, Provenance, Volume};
use crate::matrix::FeatureMatrix;
use crate::mixture::{fit_mml, predict, EmMode, MmlConfig, Selection};
use crate::normalize::{apply_quantile_map, fit_quantiles};
use crate::survival::{read_survival_csv, write_survival_csv, BOOTSTRAP_RESAMPLES};

pub use evaluate::{evaluate_clusters, format_sizes, AdjustedHr, ClusterCurve, ClusterReport, PatientCluster, METHOD_NAME};
pub use plot::{emit_km_artifacts, km_svg};
pub use synthetic::{generate_synthetic_cohort, SyntheticCohort, SyntheticCohortSpec, BASE_HAZARD};

pub const CONFIG_FORMAT: &str = "phenoclust-pipeline";
pub const CONFIG_VERSION: u32 = 1;

/// File names inside the output directory.
pub mod artifacts {
    pub const CONFIG: &str = "config.toml";
    pub const LOG: &str = "pipeline.log";
    pub const PROVENANCE: &str = "extraction.json";
    pub const FEATURES: &str = "features.csv";
    pub const COHORT_SURVIVAL: &str = "cohort_survival.csv";
    pub const COHORT_LABELS: &str = "cohort_labels.csv";
    pub const QUANTILE_MAP: &str = "quantile_map.json";
    pub const NORMALIZED: &str = "normalized.csv";
    pub const CHECKPOINT: &str = "autoencoder.json";
    pub const LOSSES: &str = "training_loss.csv";
    pub const LATENT: &str = "latent.csv";
    pub const MODEL: &str = "gmm.txt";
    pub const TRACE: &str = "fit_trace.json";
    pub const ASSIGNMENTS: &str = "assignments.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.txt";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum InputConfig {
    /// Raw feature table plus survival CSV.
    Features { features: PathBuf, survival: PathBuf },
    /// CSV manifest `patient_id,image,mask` of VOL1 files plus survival CSV.
    Volumes { manifest: PathBuf, survival: PathBuf },
    /// Generated cohort; its seed is `seeds.cohort`.
    Synthetic(SyntheticCohortSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Full mirrored layer sizes; the default depends on the input width.
    pub architecture: Option<Vec<usize>>,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        AutoencoderConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
            architecture: None,
        }
    }
}

impl AutoencoderConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            loss: Loss::Bce,
            adam: AdamParams {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
        }
    }

    pub fn layer_sizes(&self, input_width: usize) -> Vec<usize> {
        self.architecture.clone().unwrap_or_else(|| default_architecture(input_width))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub k_max: usize,
    pub k_min: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: EmMode,
    pub restarts: usize,
    pub selection: Selection,
    pub variance_floor: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        let m = MmlConfig::default();
        MixtureConfig {
            k_max: m.k_max,
            k_min: m.k_min,
            tol: m.tol,
            max_iter: m.max_iter,
            mode: m.mode,
            restarts: m.restarts,
            selection: m.selection,
            variance_floor: m.variance_floor,
        }
    }
}

impl MixtureConfig {
    pub fn mml_config(&self, seed: u64) -> MmlConfig {
        MmlConfig {
            k_max: self.k_max,
            k_min: self.k_min,
            tol: self.tol,
            max_iter: self.max_iter,
            seed,
            mode: self.mode,
            restarts: self.restarts,
            selection: self.selection,
            variance_floor: self.variance_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub bootstrap_resamples: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        }
    }
}

/// Every source of randomness, stated explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub cohort: u64,
    pub ae_init: u64,
    pub ae_shuffle: u64,
    pub mixture: u64,
    pub bootstrap: u64,
}

impl Seeds {
    /// `master, master + 1, …` in field order.
    pub fn from_master(master: u64) -> Self {
        Seeds {
            cohort: master,
            ae_init: master.wrapping_add(1),
            ae_shuffle: master.wrapping_add(2),
            mixture: master.wrapping_add(3),
            bootstrap: master.wrapping_add(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub format: String,
    pub version: u32,
    pub out_dir: PathBuf,
    pub input: InputConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub autoencoder: AutoencoderConfig,
    #[serde(default)]
    pub mixture: MixtureConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub seeds: Seeds,
}

impl PipelineConfig {
    pub fn new(input: InputConfig, out_dir: impl Into<PathBuf>, seeds: Seeds) -> Self {
        PipelineConfig {
            format: CONFIG_FORMAT.into(),
            version: CONFIG_VERSION,
            out_dir: out_dir.into(),
            input,
            extraction: ExtractionConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            mixture: MixtureConfig::default(),
            evaluation: EvaluationConfig::default(),
            seeds,
        }
    }

    pub fn synthetic(spec: SyntheticCohortSpec, out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        PipelineConfig::new(InputConfig::Synthetic(spec), out_dir, Seeds::from_master(seed))
    }

    /// Relative paths are taken relative to `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| parse_err("<config>", e.to_string()))?;
        if cfg.format != CONFIG_FORMAT || cfg.version != CONFIG_VERSION {
            return Err(parse_err(
                "<config>",
                format!("expected format `{CONFIG_FORMAT}` version {CONFIG_VERSION}, got `{}` {}", cfg.format, cfg.version),
            ));
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        match &mut cfg.input {
            InputConfig::Features { features, survival } => {
                resolve(features);
                resolve(survival);
            }
            InputConfig::Volumes { manifest, survival } => {
                resolve(manifest);
                resolve(survival);
            }
            InputConfig::Synthetic(_) => {}
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::from_toml_str(&text, base).map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(path, msg),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match &self.input {
            InputConfig::Features { features, survival } => {
                require_file(features)?;
                require_file(survival)?;
            }
            InputConfig::Volumes { manifest, survival } => {
                require_file(manifest)?;
                require_file(survival)?;
            }
            InputConfig::Synthetic(spec) => spec.validate()?,
        }
        if let Some(spacing) = self.extraction.target_spacing {
            if spacing.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidArgument(format!("target spacing {spacing:?}")));
            }
        }
        if !(self.extraction.bin_width > 0.0) {
            return Err(Error::InvalidArgument(format!("bin width {}", self.extraction.bin_width)));
        }
        if self.evaluation.bootstrap_resamples == 0 {
            return Err(Error::InvalidArgument("bootstrap_resamples must be positive".into()));
        }
        Ok(())
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("input file {} does not exist", p.display())))
    }
}

/// Appends lines to `pipeline.log`, flushing each so that a failed run
/// keeps its history.
struct StageLog {
    file: File,
}

impl StageLog {
    fn create(path: &Path) -> Result<Self> {
        Ok(StageLog { file: File::create(path)? })
    }

    fn line(&mut self, msg: impl AsRef<str>) -> Result<()> {
        writeln!(self.file, "{}", msg.as_ref())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads a manifest `patient_id,image,mask` (paths relative to the
/// manifest) and extracts one feature row per patient, ordered by id.
pub fn extract_manifest(manifest: &Path, cfg: &ExtractionConfig) -> Result<(FeatureMatrix, Vec<(String, Provenance)>)> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(manifest).map_err(|e| parse_err(manifest, e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(manifest, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header != ["patient_id", "image", "mask"] {
        return Err(parse_err(manifest, "header must be `patient_id,image,mask`"));
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(manifest, format!("line {}: {e}", r + 2)))?;
        if rec.len() != 3 {
            return Err(parse_err(manifest, format!("line {}: expected 3 fields", r + 2)));
        }
        rows.push((rec[0].trim().to_string(), base.join(rec[1].trim()), base.join(rec[2].trim())));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateId(w[0].0.clone()));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut data = Vec::new();
    let mut provenance = Vec::new();
    for (id, image, mask) in rows {
        let v = Volume::read_vol1(&image)?;
        let m = Mask::read_vol1(&mask)?;
        let ex = extract_feature_vector(&v, &m, cfg)
            .map_err(|e| Error::InvalidVolume(format!("patient `{id}`: {e}")))?;
        data.extend_from_slice(ex.features.values());
        provenance.push((id.clone(), ex.provenance));
        ids.push(id);
    }
    Ok((FeatureMatrix::new(ids, feature_names(), data)?, provenance))
}

/// Runs every stage and writes all artifacts to `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ClusterReport> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(artifacts::CONFIG), cfg.to_toml_string())?;
    let mut log = StageLog::create(&out.join(artifacts::LOG))?;
    let result = run_stages(cfg, out, &mut log);
    if let Err(e) = &result {
        log.line(format!("FAILED: {e}"))?;
    }
    result
}

fn run_stages(cfg: &PipelineConfig, out: &Path, log: &mut StageLog) -> Result<ClusterReport> {
    let seeds = cfg.seeds;
    log.line(format!("{CONFIG_FORMAT} v{CONFIG_VERSION}"))?;
    log.line(format!(
        "seeds: cohort={} ae_init={} ae_shuffle={} mixture={} bootstrap={}",
        seeds.cohort, seeds.ae_init, seeds.ae_shuffle, seeds.mixture, seeds.bootstrap
    ))?;

    log.line("[1/5] extract: start")?;
    let (raw, survival_path) = match &cfg.input {
        InputConfig::Features { features, survival } => {
            let m = FeatureMatrix::read_csv(features).map_err(|e| e.at_stage("extract"))?;
            log.line(format!("  read {} patients x {} features", m.nrows(), m.ncols()))?;
            (m, survival.clone())
        }
        InputConfig::Volumes { manifest, survival } => {
            let (m, prov) = extract_manifest(manifest, &cfg.extraction).map_err(|e| e.at_stage("extract"))?;
            let text = serde_json::to_string_pretty(&prov).expect("provenance serializes");
            std::fs::write(out.join(artifacts::PROVENANCE), text + "\n")?;
            log.line(format!("  extracted {} patients x {} features", m.nrows(), m.ncols()))?;
            (m, survival.clone())
        }
        InputConfig::Synthetic(spec) => {
            let cohort = generate_synthetic_cohort(spec, seeds.cohort).map_err(|e| e.at_stage("extract"))?;
            let path = out.join(artifacts::COHORT_SURVIVAL);
            // outcomes go straight to disk; only evaluation reads them back
            write_survival_csv(&cohort.survival, &path)?;
            std::fs::write(out.join(artifacts::COHORT_LABELS), cohort.labels_csv())?;
            log.line(format!(
                "  synthetic cohort: {} patients, sizes {:?}, separation {}",
                spec.n, spec.sizes, spec.separation
            ))?;
            (cohort.features, path)
        }
    };
    raw.write_csv(out.join(artifacts::FEATURES))?;
    log.line("[1/5] extract: done")?;

    log.line("[2/5] normalize: start")?;
    let map = fit_quantiles(&raw).map_err(|e| e.at_stage("normalize"))?;
    let coded = apply_quantile_map(&map, &raw).map_err(|e| e.at_stage("normalize"))?;
    map.save(out.join(artifacts::QUANTILE_MAP))?;
    coded.matrix().write_csv(out.join(artifacts::NORMALIZED))?;
    log.line("[2/5] normalize: done")?;

    log.line("[3/5] train-ae: start")?;
    let sizes = cfg.autoencoder.layer_sizes(raw.ncols());
    let train_cfg = cfg.autoencoder.train_config(seeds.ae_shuffle);
    let trained = MlpNetwork::init(&sizes, seeds.ae_init)
        .and_then(|net| train(net, &coded, &train_cfg))
        .map_err(|e| e.at_stage("train-ae"))?;
    Checkpoint::new(&trained.net, Some(train_cfg), raw.names().to_vec()).save(out.join(artifacts::CHECKPOINT))?;
    std::fs::write(out.join(artifacts::LOSSES), loss_history_csv(&trained.losses))?;
    log.line(format!(
        "  layers {:?}, loss {:.6} -> {:.6}",
        sizes,
        trained.losses[0],
        trained.losses[trained.losses.len() - 1]
    ))?;
    log.line("[3/5] train-ae: done")?;

    log.line("[4/5] cluster: start")?;
    let latent = encode(&trained.net, coded.matrix()).map_err(|e| e.at_stage("encode"))?;
    latent.write_csv(out.join(artifacts::LATENT))?;
    let (model, trace) =
        fit_mml(&latent, &cfg.mixture.mml_config(seeds.mixture)).map_err(|e| e.at_stage("cluster"))?;
    model.save(out.join(artifacts::MODEL))?;
    std::fs::write(
        out.join(artifacts::TRACE),
        serde_json::to_string_pretty(&trace).expect("trace serializes") + "\n",
    )?;
    let assignment = predict(&model, &latent).map_err(|e| e.at_stage("cluster"))?;
    std::fs::write(out.join(artifacts::ASSIGNMENTS), assignment.to_csv_string(latent.ids()))?;
    log.line(format!("  selected {} components", model.components()))?;
    log.line("[4/5] cluster: done")?;

    log.line("[5/5] evaluate: start")?;
    log.line(format!("  survival data first read here: {}", survival_path.display()))?;
    let records = read_survival_csv(&survival_path).map_err(|e| e.at_stage("evaluate"))?;
    let report = evaluate_clusters(
        &assignment,
        latent.ids(),
        &records,
        seeds.bootstrap,
        cfg.evaluation.bootstrap_resamples,
    )
    .map_err(|e| e.at_stage("evaluate"))?;
    std::fs::write(out.join(artifacts::REPORT_JSON), report.to_json())?;
    std::fs::write(out.join(artifacts::REPORT_TEXT), report.to_text())?;
    emit_km_artifacts(&report, out).map_err(|e| e.at_stage("evaluate"))?;
    log.line(format!(
        "  clusters {} ({}), log-rank p {}",
        report.clusters,
        format_sizes(&report.sizes),
        report.log_rank_p()
    ))?;
    log.line("[5/5] evaluate: done")?;
    Ok(report)
}
