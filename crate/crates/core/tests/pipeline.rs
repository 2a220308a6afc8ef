use std::path::Path;

use phenoclust::autoencoder::{encode, Checkpoint};
use phenoclust::mixture::{predict, Assignment, MixtureModel};
use phenoclust::normalize::{apply_quantile_map, QuantileMap};
use phenoclust::pipeline::{
    artifacts, generate_synthetic_cohort, run_pipeline, ClusterReport, InputConfig, PipelineConfig, Seeds,
    SyntheticCohortSpec,
};
use phenoclust::survival::{align_records, kaplan_meier, read_survival_csv, write_survival_csv, SurvivalRecord};
use phenoclust::{Error, FeatureMatrix};

const BEFORE_EVALUATION: [&str; 9] = [
    artifacts::FEATURES,
    artifacts::QUANTILE_MAP,
    artifacts::NORMALIZED,
    artifacts::CHECKPOINT,
    artifacts::LOSSES,
    artifacts::LATENT,
    artifacts::MODEL,
    artifacts::TRACE,
    artifacts::ASSIGNMENTS,
];

fn features_config(dir: &Path, survival: &str, out: &str) -> PipelineConfig {
    let input = InputConfig::Features {
        features: dir.join("features.csv"),
        survival: dir.join(survival),
    };
    PipelineConfig::new(input, dir.join(out), Seeds::from_master(21))
}

fn write_cohort(dir: &Path, seed: u64) -> Vec<SurvivalRecord> {
    let cohort = generate_synthetic_cohort(&SyntheticCohortSpec::default(), seed).unwrap();
    cohort.features.write_csv(dir.join("features.csv")).unwrap();
    write_survival_csv(&cohort.survival, dir.join("survival.csv")).unwrap();
    cohort.survival
}

#[test]
fn outcomes_do_not_reach_the_stages_before_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let survival = write_cohort(dir, 12);
    // reverse the outcomes so every patient gets someone else's
    let times: Vec<(f64, bool)> = survival.iter().rev().map(|r| (r.time, r.event)).collect();
    let swapped: Vec<SurvivalRecord> = survival
        .iter()
        .zip(times)
        .map(|(r, (t, e))| SurvivalRecord::new(r.id.clone(), t, e).unwrap())
        .collect();
    write_survival_csv(&swapped, dir.join("swapped.csv")).unwrap();

    let a = run_pipeline(&features_config(dir, "survival.csv", "a")).unwrap();
    let b = run_pipeline(&features_config(dir, "swapped.csv", "b")).unwrap();
    for name in BEFORE_EVALUATION {
        let x = std::fs::read(dir.join("a").join(name)).unwrap();
        let y = std::fs::read(dir.join("b").join(name)).unwrap();
        assert!(x == y, "{name} depends on the outcomes");
    }
    assert_eq!(a.patients, b.patients);
    assert_ne!(a.log_rank, b.log_rank);

    let log = std::fs::read_to_string(dir.join("a").join(artifacts::LOG)).unwrap();
    let read_at = log.find("survival data first read").unwrap();
    assert!(read_at > log.find("[5/5] evaluate: start").unwrap());
    assert!(read_at > log.find("[4/5] cluster: done").unwrap());
}

#[test]
fn artifacts_reload_to_the_same_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cohort(dir, 5);
    let cfg = features_config(dir, "survival.csv", "run");
    let report = run_pipeline(&cfg).unwrap();
    let out = &cfg.out_dir;

    let text = std::fs::read_to_string(out.join(artifacts::REPORT_JSON)).unwrap();
    assert_eq!(ClusterReport::from_json(&text).unwrap(), report);
    assert_eq!(std::fs::read_to_string(out.join(artifacts::REPORT_TEXT)).unwrap(), report.to_text());

    let raw = FeatureMatrix::read_csv(out.join(artifacts::FEATURES)).unwrap();
    let map = QuantileMap::load(out.join(artifacts::QUANTILE_MAP)).unwrap();
    let coded = apply_quantile_map(&map, &raw).unwrap();
    assert_eq!(
        coded.matrix().to_csv_string(),
        std::fs::read_to_string(out.join(artifacts::NORMALIZED)).unwrap()
    );

    let net = Checkpoint::load(out.join(artifacts::CHECKPOINT)).unwrap().network().unwrap();
    let latent = encode(&net, coded.matrix()).unwrap();
    assert_eq!(latent, FeatureMatrix::read_csv(out.join(artifacts::LATENT)).unwrap());

    let model = MixtureModel::load(out.join(artifacts::MODEL)).unwrap();
    assert_eq!(model.components(), report.clusters);
    let (ids, stored) = Assignment::read_csv(out.join(artifacts::ASSIGNMENTS)).unwrap();
    assert_eq!(ids, latent.ids());
    let again = predict(&model, &latent).unwrap();
    assert_eq!(again.labels, stored.labels);
    assert_eq!(again.sizes(), report.sizes);
    assert_eq!(report.sizes.iter().sum::<usize>(), report.n);
}

#[test]
fn km_artifacts_match_the_estimator() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cohort(dir, 8);
    let cfg = features_config(dir, "survival.csv", "run");
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.clusters >= 2, "need a comparison to draw");

    let records = align_records(
        &read_survival_csv(dir.join("survival.csv")).unwrap(),
        &report.patients.iter().map(|p| p.id.clone()).collect::<Vec<_>>(),
    )
    .unwrap();
    for curve in &report.km {
        let group: Vec<SurvivalRecord> = records
            .iter()
            .zip(&report.patients)
            .filter(|(_, p)| p.label == curve.label)
            .map(|(r, _)| r.clone())
            .collect();
        let km = kaplan_meier(&group).unwrap();
        assert_eq!(km, curve.curve);
        let csv = std::fs::read_to_string(cfg.out_dir.join(format!("km_cluster_{}.csv", curve.label))).unwrap();
        assert_eq!(csv, km.to_csv_string());
        let survival: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(survival.windows(2).all(|w| w[1] <= w[0]));
    }

    let svg = std::fs::read_to_string(cfg.out_dir.join("km.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let paths: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("path")).collect();
    assert_eq!(paths.len(), report.km.len());
    let mut drawn: Vec<usize> = paths.iter().map(|p| p.attribute("data-cluster").unwrap().parse().unwrap()).collect();
    drawn.sort();
    let labels: Vec<usize> = report.km.iter().map(|c| c.label).collect();
    assert_eq!(drawn, labels);
    assert!(svg.contains("log-rank p"));
}

#[test]
fn missing_inputs_are_rejected_before_any_stage_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cohort(dir, 3);
    let cfg = features_config(dir, "missing.csv", "run");
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("missing.csv"), "{err}");
    assert!(!cfg.out_dir.exists());
}

#[test]
fn failed_stage_is_named_and_earlier_artifacts_are_kept() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let survival = write_cohort(dir, 3);
    write_survival_csv(&survival[1..], dir.join("partial.csv")).unwrap();
    let cfg = features_config(dir, "partial.csv", "run");
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "evaluate", .. }), "{err}");
    assert!(!err.is_numeric());
    assert!(cfg.out_dir.join(artifacts::ASSIGNMENTS).exists());
    assert!(!cfg.out_dir.join(artifacts::REPORT_JSON).exists());
    let log = std::fs::read_to_string(cfg.out_dir.join(artifacts::LOG)).unwrap();
    assert!(log.lines().last().unwrap().starts_with("FAILED: stage `evaluate`"), "{log}");
}
