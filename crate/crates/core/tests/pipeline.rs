mod common;

use std::path::Path;

use cogbias::pipeline::{self, RunManifest, RunOptions};
use cogbias::scoring::{resistance, Dimension};

fn manifest(dir: &Path, k: usize, profile: &str) -> RunManifest {
    let data = common::data_dir();
    std::fs::write(dir.join("profile.toml"), profile).unwrap();
    let body = format!(
        r#"corpus = "{}"
lexicon = "{}"
base_seed = 9
k = {k}
output = "out"
parallelism = 2

[simulate]
profile = "profile.toml"
seed = 1

[[models]]
model_id = "m1"
endpoint = "http://localhost"
temperatures = [0.0, 1.0]
params_b = 3.0

[[models]]
model_id = "m2"
endpoint = "http://localhost"
temperatures = [0.0, 1.0]
params_b = 30.0
"#,
        data.join("corpus").display(),
        data.join("lexicon.toml").display(),
    );
    RunManifest::load(&common::write_manifest(dir, &body)).unwrap()
}

fn opts() -> RunOptions {
    RunOptions {
        simulate: true,
        ..Default::default()
    }
}

fn scores(m: &RunManifest) -> Vec<f64> {
    let cls = pipeline::cmd_score(m, &[Dimension::Model, Dimension::Bias]).unwrap();
    resistance(&cls, &[Dimension::Model, Dimension::Bias])
        .into_iter()
        .map(|r| r.score.unwrap())
        .collect()
}

#[test]
fn degenerate_profiles_give_extreme_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), 3, "default_p = 0.0\nunrelated_rate = 0.05\n");
    pipeline::cmd_pipeline(&m, &opts()).unwrap();
    let s = scores(&m);
    assert_eq!(s.len(), 16);
    assert!(s.iter().all(|v| *v == 1.0), "{s:?}");

    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), 3, "default_p = 1.0\nunrelated_rate = 0.05\n");
    pipeline::cmd_pipeline(&m, &opts()).unwrap();
    assert!(scores(&m).iter().all(|v| *v == 0.0));
}

#[test]
fn rerun_submits_nothing_new() {
    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), 2, "default_p = 0.4\n");
    let first = pipeline::cmd_pipeline(&m, &opts()).unwrap();
    assert_eq!(first.run.submitted, 8 * 2 * 5 * 4);
    let second = pipeline::cmd_pipeline(&m, &opts()).unwrap();
    assert_eq!(second.run.submitted, 0);
    assert_eq!(second.run.skipped, first.run.submitted);
}

#[test]
fn resume_fills_only_missing_responses() {
    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), 2, "default_p = 0.4\n");
    pipeline::cmd_pipeline(&m, &opts()).unwrap();
    let responses = m.layout().responses();
    let file = std::fs::read_dir(&responses).unwrap().next().unwrap().unwrap().path();
    let full = std::fs::read_to_string(&file).unwrap();
    let kept: Vec<&str> = full.lines().take(15).collect();
    std::fs::write(&file, kept.join("\n") + "\n").unwrap();

    let resumed = pipeline::cmd_run(&m, &RunOptions { resume: true, ..opts() }).unwrap();
    assert_eq!(resumed.submitted, 80 - 15);
    assert_eq!(std::fs::read_to_string(&file).unwrap(), full);
}

#[test]
fn later_stages_rerun_without_new_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), 2, "default_p = 0.4\n");
    pipeline::cmd_pipeline(&m, &opts()).unwrap();
    let layout = m.layout();
    let responses = common::tree_contents(&layout.responses());
    let classifications = std::fs::read(layout.classifications()).unwrap();

    std::fs::remove_dir_all(layout.extractions()).unwrap();
    std::fs::remove_file(layout.classifications()).unwrap();
    pipeline::cmd_extract(&m).unwrap();
    pipeline::cmd_score(&m, &[Dimension::Model, Dimension::Bias]).unwrap();
    pipeline::cmd_report(&m).unwrap();

    assert_eq!(common::tree_contents(&layout.responses()), responses);
    assert_eq!(std::fs::read(layout.classifications()).unwrap(), classifications);
}

#[test]
fn single_instance_per_template() {
    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), 1, "");
    let s = pipeline::cmd_expand(&m).unwrap();
    assert_eq!((s.templates, s.instances, s.prompts), (8, 8, 40));
}

#[test]
fn analysis_files_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), 2, "default_p = 0.4\ntemperature_slope = -0.1\n");
    pipeline::cmd_pipeline(&m, &opts()).unwrap();
    let dir = m.layout().analysis();
    for test in ["temperature", "size", "reasoning"] {
        let csv = std::fs::read_to_string(dir.join(format!("{test}.csv"))).unwrap();
        assert!(csv.starts_with("bias,F,p,beta,std_err,R2,n,df1,df2,note\n"), "{csv}");
        assert_eq!(csv.lines().count(), 9);
    }
    let reports = m.layout().reports();
    for name in ["model_by_bias.csv", "level_by_bias.md", "temperature_by_bias.csv"] {
        assert!(reports.join(name).is_file(), "{name}");
    }
}
