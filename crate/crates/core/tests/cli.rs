//! End-to-end checks of the command-line tool.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn segdiscover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segdiscover"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("run segdiscover")
}

fn ok(args: &[&str]) -> String {
    let out = segdiscover(args);
    assert!(
        out.status.success(),
        "segdiscover {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small synthetic dataset and returns its two manifests.
fn dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let out = ok(&["synth", "--out", s(dir), "--count", "4", "--size", "48", "--seed", "3"]);
    let mut lines = out.lines().map(PathBuf::from);
    (lines.next().unwrap(), lines.next().unwrap())
}

const SMALL: [&str; 8] = ["--K", "8", "--C", "4", "--epochs", "3", "--min-size", "40"];

fn read_tree(root: &Path, rel: &str) -> Vec<(String, Vec<u8>)> {
    let p = root.join(rel);
    if p.is_dir() {
        let mut names: Vec<_> = std::fs::read_dir(&p).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        names
            .into_iter()
            .map(|n| {
                (
                    format!("{rel}/{}", n.to_string_lossy()),
                    std::fs::read(p.join(&n)).unwrap(),
                )
            })
            .collect()
    } else {
        vec![(rel.to_string(), std::fs::read(&p).unwrap())]
    }
}

const ARTIFACTS: [&str; 11] = [
    "config.txt",
    "merge_log.txt",
    "primitives",
    "crops.txt",
    "embeddings.sgde",
    "kmeans.sgde",
    "assignments.txt",
    "pseudolabels",
    "refiner.sgdr",
    "loss.csv",
    "predictions",
];

#[test]
fn eval_of_ground_truth_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gt) = dataset(&dir.path().join("data"));
    let work = dir.path().join("work");
    let preds = work.join("predictions");
    std::fs::create_dir_all(&preds).unwrap();
    for i in 0..4 {
        std::fs::copy(
            dir.path().join(format!("data/gt/{i:03}.png")),
            preds.join(format!("{i:06}.png")),
        )
        .unwrap();
    }
    for matching in ["majority", "hungarian"] {
        let out = ok(&[
            "eval",
            "--workdir",
            s(&work),
            "--C",
            "4",
            "--gt",
            s(&gt),
            "--matching",
            matching,
        ]);
        assert!(out.contains("mIoU"), "{out}");
        let csv = std::fs::read_to_string(work.join("metrics.csv")).unwrap();
        for metric in ["mIoU", "wIoU", "pAcc"] {
            let line = csv.lines().find(|l| l.starts_with(&format!("{metric},"))).unwrap();
            let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(v, 1.0, "{metric} under {matching}");
        }
    }
}

#[test]
fn cluster_before_embed_fails_clearly() {
    let dir = tempfile::tempdir().unwrap();
    let out = segdiscover(&["cluster", "--workdir", s(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("embedding file not found"), "{err}");
}

#[test]
fn bad_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = segdiscover(&["embed", "--workdir", s(dir.path()), "--set", "no_such_key=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn pipeline_matches_stages_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, gt) = dataset(&dir.path().join("data"));

    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let work = dir.path().join(name);
        let mut args = vec![
            "pipeline",
            "--workdir",
            s(&work),
            "--manifest",
            s(&manifest),
            "--gt",
            s(&gt),
        ];
        args.extend(SMALL);
        let out = ok(&args);
        assert!(out.contains("refined") && out.contains("unrefined"), "{out}");
        runs.push(work);
    }

    let staged = dir.path().join("staged");
    let w = s(&staged);
    let mut first = vec!["primitives", "--workdir", w, "--manifest", s(&manifest)];
    first.extend(SMALL);
    ok(&first);
    for stage in ["crops", "embed", "cluster", "pseudolabel", "refine", "predict"] {
        ok(&[stage, "--workdir", w]);
    }
    ok(&["eval", "--workdir", w, "--gt", s(&gt), "--source", "pseudolabels"]);
    ok(&["eval", "--workdir", w, "--gt", s(&gt)]);
    ok(&["viz", "--workdir", w, "--gt", s(&gt)]);

    let mut artifacts = ARTIFACTS.to_vec();
    artifacts.extend(["metrics.csv", "metrics_pseudolabels.csv", "diagnostic.txt", "viz"]);
    for rel in artifacts {
        let a = read_tree(&runs[0], rel);
        assert_eq!(a, read_tree(&runs[1], rel), "{rel} differs between pipeline runs");
        assert_eq!(a, read_tree(&staged, rel), "{rel} differs between pipeline and stages");
    }
}

#[test]
fn changed_config_in_existing_workdir_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = dataset(&dir.path().join("data"));
    let work = dir.path().join("work");
    let mut args = vec!["primitives", "--workdir", s(&work), "--manifest", s(&manifest)];
    args.extend(SMALL);
    ok(&args);
    let out = segdiscover(&["crops", "--workdir", s(&work), "--C", "5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}
