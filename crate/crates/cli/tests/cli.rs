use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use phenoclust::features::{Mask, Volume};
use phenoclust::FeatureMatrix;

fn phenoclust(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phenoclust"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = phenoclust(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["--seed", "3", "--out-dir", "cohort", "synth"], dir);
    let stdout = ok(&["--config", "cohort/config.toml", "pipeline"], dir);
    assert!(stdout.contains("clusters selected"));
    let first = snapshot(&dir.join("cohort/run"));
    for name in ["report.json", "report.txt", "km.svg", "latent.csv", "assignments.csv", "gmm.txt", "pipeline.log"] {
        assert!(first.contains_key(name), "missing {name}");
    }
    ok(&["--config", "cohort/config.toml", "pipeline"], dir);
    assert_eq!(snapshot(&dir.join("cohort/run")), first);
}

#[test]
fn stage_commands_reproduce_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["--seed", "11", "--out-dir", "c", "synth"], dir);
    ok(&["--config", "c/config.toml", "pipeline"], dir);
    let s = ["--seed", "11", "--out-dir", "step"];
    let with = |extra: &[&str]| -> Vec<String> { s.iter().chain(extra).map(|a| a.to_string()).collect() };
    for extra in [
        &["normalize", "--in", "c/features.csv"][..],
        &["train-ae", "--in", "step/normalized.csv"],
        &["encode", "--model", "step/autoencoder.json", "--in", "step/normalized.csv"],
        &["cluster", "--latent", "step/latent.csv"],
        &["evaluate", "--assignments", "step/assignments.csv", "--survival", "c/survival.csv"],
    ] {
        let args = with(extra);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>(), dir);
    }
    let piped = snapshot(&dir.join("c/run"));
    let step = snapshot(&dir.join("step"));
    for (name, bytes) in &step {
        assert_eq!(Some(bytes), piped.get(name), "{name} differs");
    }
    assert!(step.len() >= 12);
}

#[test]
fn saved_quantile_map_reproduces_the_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["--seed", "1", "synth"], dir);
    ok(&["normalize", "--in", "features.csv", "--out", "a.csv", "--map-out", "map.json"], dir);
    ok(&["normalize", "--in", "features.csv", "--out", "b.csv", "--quantile-map", "map.json"], dir);
    assert_eq!(std::fs::read(dir.join("a.csv")).unwrap(), std::fs::read(dir.join("b.csv")).unwrap());
}

#[test]
fn holdout_reports_a_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["--seed", "2", "synth"], dir);
    ok(&["normalize", "--in", "features.csv"], dir);
    let out = ok(
        &["--seed", "2", "train-ae", "--in", "normalized.csv", "--epochs", "5", "--holdout", "0.2"],
        dir,
    );
    assert!(out.contains("holdout loss"), "{out}");
    assert!(out.contains("on 22 patients"), "{out}");
}

#[test]
fn extract_reads_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut manifest = String::from("patient_id,image,mask\n");
    for (i, id) in ["B", "A"].iter().enumerate() {
        let v = Volume::from_fn([10, 9, 8], [1.0, 1.0, 2.0], |x, y, z| {
            ((x * 7 + y * 3 + z * 5 + i * 11) % 13) as f64 * 10.0 + x as f64
        })
        .unwrap();
        let m = Mask::from_fn([10, 9, 8], |x, y, z| (2..8).contains(&x) && (2..7).contains(&y) && (1..7).contains(&z))
            .unwrap();
        v.write_vol1(dir.join(format!("{id}.vol"))).unwrap();
        m.write_vol1(dir.join(format!("{id}_mask.vol"))).unwrap();
        manifest.push_str(&format!("{id},{id}.vol,{id}_mask.vol\n"));
    }
    std::fs::write(dir.join("manifest.csv"), manifest).unwrap();
    ok(&["extract", "--manifest", "manifest.csv", "--out", "f.csv", "--spacing", "2,2,2"], dir);
    let f = FeatureMatrix::read_csv(dir.join("f.csv")).unwrap();
    assert_eq!(f.ids(), ["A", "B"]);
    assert_eq!(f.ncols(), 28);
    let prov = std::fs::read_to_string(dir.join("extraction.json")).unwrap();
    assert!(prov.contains("\"bin_width\": 5.0"), "{prov}");
}

#[test]
fn exit_codes_separate_input_from_numeric_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // no seed anywhere
    assert_eq!(phenoclust(&["synth"], dir).status.code(), Some(2));
    // clap usage error
    assert_eq!(phenoclust(&["cluster"], dir).status.code(), Some(2));
    assert_eq!(phenoclust(&["--config", "missing.toml", "pipeline"], dir).status.code(), Some(2));
    std::fs::write(dir.join("bad.csv"), "patient_id,a\np1,x\n").unwrap();
    let out = phenoclust(&["normalize", "--in", "bad.csv"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a number"));

    let mut latent = String::from("patient_id,latent_0,latent_1,latent_2\n");
    for i in 0..20 {
        latent.push_str(&format!("p{i},1,2,3\n"));
    }
    std::fs::write(dir.join("flat.csv"), latent).unwrap();
    let out = phenoclust(&["--seed", "0", "cluster", "--latent", "flat.csv"], dir);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stage_defaults_come_from_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["--seed", "4", "synth"], dir);
    let text = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    std::fs::write(dir.join("short.toml"), text.replace("epochs = 400", "epochs = 3")).unwrap();
    ok(&["normalize", "--in", "features.csv"], dir);
    ok(&["--config", "short.toml", "--out-dir", ".", "train-ae", "--in", "normalized.csv"], dir);
    let losses = std::fs::read_to_string(dir.join("training_loss.csv")).unwrap();
    assert_eq!(losses.lines().count(), 4);
}
