//! `phenoclust`: run the clustering pipeline end to end or one stage at a
//! time. Exit codes: 0 success, 2 invalid input or arguments, 3 numeric or
//! convergence failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phenoclust::autoencoder::{
    encode, holdout_split, loss_history_csv, reconstruction_loss, train, Checkpoint, MlpNetwork,
};
use phenoclust::features::ExtractionConfig;
use phenoclust::mixture::{fit_mml, predict, Assignment, EmMode};
use phenoclust::normalize::{apply_quantile_map, fit_quantiles, NormalizedMatrix, QuantileMap};
use phenoclust::pipeline::{
    artifacts, emit_km_artifacts, evaluate_clusters, extract_manifest, generate_synthetic_cohort, run_pipeline,
    AutoencoderConfig, EvaluationConfig, InputConfig, MixtureConfig, PipelineConfig, Seeds, SyntheticCohortSpec,
};
use phenoclust::survival::{read_survival_csv, write_survival_csv};
use phenoclust::{Error, FeatureMatrix, Result};

#[derive(Parser)]
#[command(name = "phenoclust", version, about = "Unsupervised imaging-phenotype clustering with survival evaluation")]
struct Cli {
    /// Master seed. Stage seeds are derived from it in the order cohort,
    /// autoencoder init, autoencoder shuffle, mixture, bootstrap.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for every output whose path is not given explicitly.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Pipeline config (TOML). Stage commands take their defaults from it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ComponentWise,
    Batch,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features from a manifest of masked volumes.
    Extract {
        /// CSV `patient_id,image,mask`; paths are relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Target voxel spacing in mm.
        #[arg(long, value_parser = parse_spacing, value_name = "X,Y,Z", conflicts_with = "native_spacing")]
        spacing: Option<[f64; 3]>,
        /// Skip resampling.
        #[arg(long)]
        native_spacing: bool,
        #[arg(long)]
        bin_width: Option<f64>,
        /// Per-patient record of the parameters used.
        #[arg(long)]
        provenance: Option<PathBuf>,
    },
    /// Map raw features to quantile codes.
    Normalize {
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply a saved map instead of fitting one.
        #[arg(long, value_name = "PATH")]
        quantile_map: Option<PathBuf>,
        /// Where a freshly fitted map is written.
        #[arg(long, value_name = "PATH", conflicts_with = "quantile_map")]
        map_out: Option<PathBuf>,
    },
    /// Train the autoencoder on quantile codes.
    TrainAe {
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_name = "PATH")]
        losses: Option<PathBuf>,
        /// Hold out this fraction of patients and report their loss.
        #[arg(long, value_name = "FRACTION")]
        holdout: Option<f64>,
    },
    /// Encode quantile codes to latent features.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the MML mixture to latent features and assign patients.
    Cluster {
        #[arg(long)]
        latent: PathBuf,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        kmin: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Model path, optionally followed by the assignments path.
        #[arg(long, num_args = 1..=2, value_names = ["MODEL", "ASSIGNMENTS"])]
        out: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Evaluate cluster assignments against survival outcomes.
    Evaluate {
        #[arg(long)]
        assignments: PathBuf,
        /// CSV `patient_id,time_months,event[,age,sex]`.
        #[arg(long)]
        survival: PathBuf,
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Run every stage from a config file.
    Pipeline,
    /// Write a synthetic cohort and a config that runs the pipeline on it.
    Synth {
        /// No separation and equal hazards.
        #[arg(long)]
        null: bool,
        #[arg(long)]
        separation: Option<f64>,
    },
}

fn parse_spacing(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|a| *a > 0.0) => Ok([x, y, z]),
        _ => Err("expected three positive numbers `x,y,z`".into()),
    }
}

struct Context {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    config: Option<PipelineConfig>,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let config = cli.config.as_deref().map(PipelineConfig::load).transpose()?;
        Ok(Context {
            seed: cli.seed,
            out_dir: cli.out_dir.clone(),
            config,
        })
    }

    fn seeds(&self) -> Result<Seeds> {
        match (self.seed, &self.config) {
            (Some(s), _) => Ok(Seeds::from_master(s)),
            (None, Some(c)) => Ok(c.seeds),
            (None, None) => Err(Error::InvalidArgument("a seed is required: pass --seed or --config".into())),
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| self.config.as_ref().map(|c| c.out_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn output(&self, explicit: Option<PathBuf>, name: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.out_dir().join(name))
    }

    fn extraction(&self) -> ExtractionConfig {
        self.config.as_ref().map(|c| c.extraction.clone()).unwrap_or_default()
    }

    fn autoencoder(&self) -> AutoencoderConfig {
        self.config.as_ref().map(|c| c.autoencoder.clone()).unwrap_or_default()
    }

    fn mixture(&self) -> MixtureConfig {
        self.config.as_ref().map(|c| c.mixture.clone()).unwrap_or_default()
    }

    fn evaluation(&self) -> EvaluationConfig {
        self.config.as_ref().map(|c| c.evaluation.clone()).unwrap_or_default()
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(&cli)?;
    match cli.command {
        Command::Extract {
            manifest,
            out,
            spacing,
            native_spacing,
            bin_width,
            provenance,
        } => {
            let mut cfg = ctx.extraction();
            if spacing.is_some() {
                cfg.target_spacing = spacing;
            }
            if native_spacing {
                cfg.target_spacing = None;
            }
            if let Some(b) = bin_width {
                cfg.bin_width = b;
            }
            if cfg.target_spacing.is_some_and(|s| s.iter().any(|v| !(*v > 0.0))) || !(cfg.bin_width > 0.0) {
                return Err(Error::InvalidArgument("spacing and bin width must be positive".into()));
            }
            let (features, prov) = extract_manifest(&manifest, &cfg)?;
            write(&ctx.output(out, artifacts::FEATURES), features.to_csv_string())?;
            let text = serde_json::to_string_pretty(&prov).expect("provenance serializes") + "\n";
            write(&ctx.output(provenance, artifacts::PROVENANCE), text)?;
        }
        Command::Normalize {
            input,
            out,
            quantile_map,
            map_out,
        } => {
            let raw = FeatureMatrix::read_csv(&input)?;
            let map = match quantile_map {
                Some(path) => QuantileMap::load(path)?,
                None => {
                    let map = fit_quantiles(&raw)?;
                    write(&ctx.output(map_out, artifacts::QUANTILE_MAP), map.to_json())?;
                    map
                }
            };
            let coded = apply_quantile_map(&map, &raw)?;
            write(&ctx.output(out, artifacts::NORMALIZED), coded.matrix().to_csv_string())?;
        }
        Command::TrainAe {
            input,
            out,
            epochs,
            batch,
            lr,
            losses,
            holdout,
        } => {
            let seeds = ctx.seeds()?;
            let mut ae = ctx.autoencoder();
            ae.epochs = epochs.unwrap_or(ae.epochs);
            ae.batch_size = batch.unwrap_or(ae.batch_size);
            ae.learning_rate = lr.unwrap_or(ae.learning_rate);
            let coded = NormalizedMatrix::from_matrix(FeatureMatrix::read_csv(&input)?)?;
            let (fit_rows, held) = match holdout {
                Some(f) => {
                    let (a, b) = holdout_split(&coded, f, seeds.ae_shuffle)?;
                    (a, Some(b))
                }
                None => (coded, None),
            };
            let names = fit_rows.matrix().names().to_vec();
            let train_cfg = ae.train_config(seeds.ae_shuffle);
            let net = MlpNetwork::init(&ae.layer_sizes(names.len()), seeds.ae_init)?;
            let trained = train(net, &fit_rows, &train_cfg)?;
            println!(
                "loss {:.6} -> {:.6} over {} epochs",
                trained.losses[0],
                trained.losses[trained.losses.len() - 1],
                trained.losses.len()
            );
            if let Some(h) = &held {
                println!(
                    "holdout loss {:.6} on {} patients",
                    reconstruction_loss(&trained.net, h)?,
                    h.matrix().nrows()
                );
            }
            let ck = Checkpoint::new(&trained.net, Some(train_cfg), names);
            write(&ctx.output(out, artifacts::CHECKPOINT), ck.to_json())?;
            write(&ctx.output(losses, artifacts::LOSSES), loss_history_csv(&trained.losses))?;
        }
        Command::Encode { model, input, out } => {
            let ck = Checkpoint::load(&model)?;
            let coded = NormalizedMatrix::from_matrix(FeatureMatrix::read_csv(&input)?)?;
            if coded.matrix().names() != ck.columns.as_slice() {
                return Err(Error::Schema(format!(
                    "{} columns do not match the checkpoint's training columns",
                    input.display()
                )));
            }
            let latent = encode(&ck.network()?, coded.matrix())?;
            write(&ctx.output(out, artifacts::LATENT), latent.to_csv_string())?;
        }
        Command::Cluster {
            latent,
            kmax,
            kmin,
            tol,
            max_iter,
            mode,
            restarts,
            out,
            trace,
        } => {
            let seeds = ctx.seeds()?;
            let mut mix = ctx.mixture();
            mix.k_max = kmax.unwrap_or(mix.k_max);
            mix.k_min = kmin.unwrap_or(mix.k_min);
            mix.tol = tol.unwrap_or(mix.tol);
            mix.max_iter = max_iter.unwrap_or(mix.max_iter);
            mix.restarts = restarts.unwrap_or(mix.restarts);
            if let Some(m) = mode {
                mix.mode = match m {
                    Mode::ComponentWise => EmMode::ComponentWise,
                    Mode::Batch => EmMode::Batch,
                };
            }
            let z = FeatureMatrix::read_csv(&latent)?;
            let (model, fit_trace) = fit_mml(&z, &mix.mml_config(seeds.mixture))?;
            let assignment = predict(&model, &z)?;
            println!("selected {} components, sizes {:?}", model.components(), assignment.sizes());
            let mut out = out.into_iter();
            write(&ctx.output(out.next(), artifacts::MODEL), model.to_text())?;
            write(&ctx.output(out.next(), artifacts::ASSIGNMENTS), assignment.to_csv_string(z.ids()))?;
            let text = serde_json::to_string_pretty(&fit_trace).expect("trace serializes") + "\n";
            write(&ctx.output(trace, artifacts::TRACE), text)?;
        }
        Command::Evaluate {
            assignments,
            survival,
            resamples,
        } => {
            let seeds = ctx.seeds()?;
            let resamples = resamples.unwrap_or(ctx.evaluation().bootstrap_resamples);
            let (ids, assignment) = Assignment::read_csv(&assignments)?;
            let records = read_survival_csv(&survival)?;
            let report = evaluate_clusters(&assignment, &ids, &records, seeds.bootstrap, resamples)?;
            let dir = ctx.out_dir();
            write(&dir.join(artifacts::REPORT_JSON), report.to_json())?;
            write(&dir.join(artifacts::REPORT_TEXT), report.to_text())?;
            for path in emit_km_artifacts(&report, &dir)? {
                println!("wrote {}", path.display());
            }
            print!("{}", report.to_text());
        }
        Command::Pipeline => {
            let Some(mut cfg) = ctx.config.clone() else {
                return Err(Error::InvalidArgument("pipeline needs --config".into()));
            };
            if let Some(s) = ctx.seed {
                cfg.seeds = Seeds::from_master(s);
            }
            if let Some(d) = &ctx.out_dir {
                cfg.out_dir = d.clone();
            }
            let report = run_pipeline(&cfg)?;
            println!("artifacts in {}", cfg.out_dir.display());
            print!("{}", report.to_text());
        }
        Command::Synth { null, separation } => {
            let seeds = ctx.seeds()?;
            let mut spec = if null {
                SyntheticCohortSpec::null()
            } else {
                SyntheticCohortSpec::default()
            };
            if let Some(s) = separation {
                spec.separation = s;
            }
            let cohort = generate_synthetic_cohort(&spec, seeds.cohort)?;
            let dir = ctx.out_dir();
            let features = dir.join(artifacts::FEATURES);
            let survival = dir.join("survival.csv");
            write(&features, cohort.features.to_csv_string())?;
            std::fs::create_dir_all(&dir)?;
            write_survival_csv(&cohort.survival, &survival)?;
            println!("wrote {}", survival.display());
            write(&dir.join(artifacts::COHORT_LABELS), cohort.labels_csv())?;
            let input = InputConfig::Features {
                features: PathBuf::from(artifacts::FEATURES),
                survival: PathBuf::from("survival.csv"),
            };
            let cfg = PipelineConfig::new(input, "run", seeds);
            write(&dir.join(artifacts::CONFIG), cfg.to_toml_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
