//! Command-line front end: outputs and exit codes.

use std::path::Path;
use std::process::Command;

use saliency_prompt::head::load_checkpoint;
use saliency_prompt::pipeline::{read_log, EvalReport};
use saliency_prompt::proposal::ProposalManifest;
use saliency_prompt::tensor::read_tensor;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_saliency-prompt"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const CONFIG: &str = r#"{
  "num_kernels": 8,
  "steps": 10,
  "dataset": {"kind": "synthetic", "count": 3, "seed": 4}
}"#;

#[test]
fn full_workflow_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "cfg.json", CONFIG);
    write(
        d,
        "test.json",
        r#"{"kind": "synthetic", "count": 2, "seed": 9}"#,
    );

    assert_eq!(run(d, &["extract-features", "scene:3", "-o", "x.bin"]), 0);
    let x = read_tensor(d.join("x.bin")).unwrap();
    assert_eq!(x.shape(), &[40, 40, 9]);

    assert_eq!(run(d, &["propose-masks", "x.bin", "-o", "m.json"]), 0);
    let m = ProposalManifest::load(d.join("m.json")).unwrap();
    assert_eq!((m.height, m.width), (40, 40));
    assert!(!m.to_proposals().unwrap().is_empty());

    assert_eq!(run(d, &["pretrain", "-c", "cfg.json", "-o", "h.ckpt"]), 0);
    let state = load_checkpoint(d.join("h.ckpt")).unwrap();
    assert_eq!(state.step, 10);
    assert_eq!(read_log(d.join("h.ckpt.log.jsonl")).unwrap().len(), 10);
    assert!(d.join("h.ckpt.json").exists());

    assert_eq!(
        run(
            d,
            &["eval", "-k", "h.ckpt", "-d", "test.json", "-o", "r.json"]
        ),
        0
    );
    let report: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report.images, 2);
    assert_eq!(report.loss_curve.len(), 10);
    assert!(report.detection.ap50.is_some());

    assert_eq!(
        run(
            d,
            &[
                "export-heatmap",
                "-k",
                "h.ckpt",
                "-d",
                "test.json",
                "-o",
                "hm"
            ]
        ),
        0
    );
    let hm = read_tensor(d.join("hm/heatmap.bin")).unwrap();
    assert_eq!(hm.shape(), &[8, 200, 200]);
    assert!(d.join("hm/kernel_007.pgm").exists());
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "neg.json", r#"{"lr": -1.0}"#);
    write(d, "unknown.json", r#"{"learning_rate": 0.1}"#);
    write(d, "broken.json", "{");
    for cfg in ["neg.json", "unknown.json", "broken.json"] {
        assert_eq!(run(d, &["pretrain", "-c", cfg, "-o", "x.ckpt"]), 2, "{cfg}");
    }
    assert_eq!(run(d, &["extract-features", "scene:abc", "-o", "x.bin"]), 2);
    assert_eq!(run(d, &["no-such-command"]), 2);
}

#[test]
fn io_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(
        run(d, &["pretrain", "-c", "missing.json", "-o", "x.ckpt"]),
        3
    );
    assert_eq!(
        run(d, &["extract-features", "missing.ppm", "-o", "x.bin"]),
        3
    );
    write(d, "junk.bin", "not a tensor");
    assert_eq!(run(d, &["propose-masks", "junk.bin", "-o", "m.json"]), 3);
    write(
        d,
        "ds.json",
        r#"{"kind": "synthetic", "count": 1, "seed": 0}"#,
    );
    assert_eq!(
        run(
            d,
            &[
                "eval",
                "-k",
                "missing.ckpt",
                "-d",
                "ds.json",
                "-o",
                "r.json"
            ]
        ),
        3
    );
}

#[test]
fn divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "hot.json",
        r#"{
  "num_kernels": 8,
  "steps": 50,
  "lr": 1e300,
  "lr_schedule": "constant",
  "grad_clip": null,
  "dataset": {"kind": "synthetic", "count": 2, "seed": 4}
}"#,
    );
    assert_eq!(run(d, &["pretrain", "-c", "hot.json", "-o", "x.ckpt"]), 4);
}
