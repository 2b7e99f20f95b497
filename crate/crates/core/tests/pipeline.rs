use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use econgrasp::config::PipelineConfig;
use econgrasp::pipeline::{run_pipeline, Stage, ARTIFACTS, INCOMPLETE};

fn small(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::parse(
        "scenes=3\nn_views=30\nmin_objects=1\nmax_objects=2\ndensity=8000\n\
         samples=24\nfeature_dim=8\ntrain_scenes=2\nsteps=3\ngradcheck_seeds=1\n",
    )
    .unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn run_writes_every_artifact_and_clears_the_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let summary = run_pipeline(&small(&out)).unwrap();
    for f in ARTIFACTS {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join(INCOMPLETE).exists());
    let echo = small(&out).echo();
    for f in ARTIFACTS.iter().filter(|f| **f != "config.txt") {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with(&echo), "{f} lacks the config echo");
    }
    assert!(summary.gradients_pass());
    assert_eq!(summary.eval_scenes.len(), 1);
    let back = PipelineConfig::parse(&fs::read_to_string(out.join("config.txt")).unwrap()).unwrap();
    assert_eq!(back, small(&out));
}

#[test]
fn reruns_are_byte_identical_at_any_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = small(&out);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    one.install(|| run_pipeline(&cfg)).unwrap();
    let first = snapshot(&out);
    four.install(|| run_pipeline(&cfg)).unwrap();
    let second = snapshot(&out);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (k, v) in &first {
        assert!(v == &second[k], "{k} differs");
    }
}

#[test]
fn invalid_config_fails_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = small(&out);
    cfg.n_views = 0;
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Validate);
    assert!(!out.exists());
}

#[test]
fn failed_stage_leaves_the_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = small(&out);
    cfg.min_objects = 400;
    cfg.max_objects = 400;
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Synth);
    let marker = fs::read_to_string(out.join(INCOMPLETE)).unwrap();
    assert_eq!(marker.trim(), "stage=synth");
    assert!(!out.join("summary.txt").exists());
}

#[test]
fn foreign_directories_are_left_alone() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("notes.txt"), "keep me").unwrap();
    let cfg = small(tmp.path());
    assert!(run_pipeline(&cfg).is_err());
    assert_eq!(
        fs::read_to_string(tmp.path().join("notes.txt")).unwrap(),
        "keep me"
    );
}
