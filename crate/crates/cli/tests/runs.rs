use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};
use tslab::report::{average_rows, RunReport};
use tslab::run::{prepare_dataset, run, RunOptions};
use tslab::spec::ExperimentSpec;
use tslab_core::eval::evaluate_zero_shot;
use tslab_core::init::load_checkpoint;

fn tiny(kind: &str) -> Value {
    json!({
        "name": format!("tiny_{kind}"),
        "kind": kind,
        "preset": "tiny",
        "seeds": [0, 1],
        "train": {"lr": 1e-2, "batch_size": 8, "max_epochs": 2, "steps_per_epoch": 4},
        "finetune": {"lr": 1e-2, "batch_size": 8, "max_epochs": 2, "steps_per_epoch": 4},
        "text_proxy": {"vocab_size": 16, "markov_order": 1, "corpus_tokens": 2000, "pretrain_steps": 10,
                       "lr": 1e-2, "batch_size": 8, "support": 4, "boost_set": 4, "boost": 4.0},
        "corpus": {"families": [{"kind": "sinusoid_mix", "noise_std": 0.05}], "n_windows": 64},
        "datasets": [
            {"name": "sine", "source": "synthetic", "family": {"kind": "sinusoid_mix", "noise_std": 0.05},
             "n_series": 2, "length": 200},
            {"name": "walk", "source": "synthetic", "family": {"kind": "random_walk"},
             "n_series": 2, "length": 200}
        ],
        "corpus_sizes": [16, 32],
        "adapter_prototypes": 8,
    })
}

fn spec(v: Value) -> ExperimentSpec {
    ExperimentSpec::from_json(&v.to_string()).unwrap()
}

fn run_in(s: &ExperimentSpec, dir: &Path) -> RunReport {
    run(
        s,
        &RunOptions {
            out_dir: dir.to_path_buf(),
            quiet: true,
        },
    )
    .unwrap()
}

#[test]
fn zero_shot_run_writes_a_consistent_report() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(tiny("zero_shot_suite"));
    let rep = run_in(&s, dir.path());
    for f in ["report.json", "metrics.csv", "timings.json", "plots/train_curves.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_eq!(rep.per_seed.len(), 2);
    assert_eq!(rep.averaged.len(), 2 * 4);
    for (a, b) in rep.averaged.iter().zip(average_rows(&rep.per_seed)) {
        let m = rep.per_seed.iter().map(|s| s.rows.iter().find(|r| r.dataset == a.dataset && r.model == a.model).unwrap().mse);
        let mean = m.clone().sum::<f64>() / 2.0;
        assert!((a.mse - mean).abs() < 1e-12);
        assert_eq!(*a, b);
    }
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("seed,dataset,model,mse,mae,n_windows\n"));
    assert_eq!(RunReport::load(dir.path()).unwrap(), rep);
}

#[test]
fn report_is_rederivable_from_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(tiny("zero_shot_suite"));
    let rep = run_in(&s, dir.path());
    let geo = s.geometry();
    for seed in &rep.per_seed {
        for d in &s.datasets {
            let data = prepare_dataset(d, &geo).unwrap();
            for v in ["a", "b", "c", "di"] {
                let path = dir.path().join(format!("checkpoints/seed{}/{v}.tslb", seed.seed));
                assert!(rep.checkpoints.iter().any(|c| dir.path().join(c) == path));
                let (model, meta) = load_checkpoint(&path, None).unwrap();
                assert_eq!(meta.tags["model"], v);
                let got = evaluate_zero_shot(&model, &data.windows.test).unwrap();
                let row = seed.rows.iter().find(|r| r.dataset == d.name && r.model == v).unwrap();
                assert_eq!(got.mse.to_bits(), row.mse.to_bits());
                assert_eq!(got.mae.to_bits(), row.mae.to_bits());
            }
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let s = spec(tiny("few_shot_suite"));
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(&s, d1.path());
    run_in(&s, d2.path());
    for f in ["report.json", "metrics.csv", "plots/train_curves.csv"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn every_kind_runs_at_tiny_scale() {
    let kinds = [
        "three_gpt_comparison",
        "encoder_bias",
        "few_shot_suite",
        "vocab_alignment",
        "finetune_from_pretrained",
        "quantify_samples",
        "linear_baseline",
    ];
    for kind in kinds {
        let mut v = tiny(kind);
        v["seeds"] = json!([3]);
        if kind == "encoder_bias" {
            v["target"] = json!("sine");
        }
        let dir = tempfile::tempdir().unwrap();
        let rep = run_in(&spec(v), dir.path());
        assert!(!rep.averaged.is_empty(), "{kind}");
        assert!(rep.averaged.iter().all(|r| r.mse.is_finite() && r.mae.is_finite()), "{kind}");
    }
}

#[test]
fn few_shot_runs_both_modes_per_variant() {
    let mut v = tiny("few_shot_suite");
    v["seeds"] = json!([0]);
    let dir = tempfile::tempdir().unwrap();
    let rep = run_in(&spec(v), dir.path());
    for var in ["a", "b", "c"] {
        for mode in ["tune_encdec", "tune_backbone"] {
            assert!(rep.row("sine", &format!("{var}/{mode}")).is_some(), "{var}/{mode}");
        }
    }
}

#[test]
fn quantify_samples_emits_one_curve_row_per_size() {
    let mut v = tiny("quantify_samples");
    v["seeds"] = json!([0]);
    v["datasets"] = json!([v["datasets"][0]]);
    let dir = tempfile::tempdir().unwrap();
    let rep = run_in(&spec(v), dir.path());
    let curve = std::fs::read_to_string(dir.path().join("plots/samples_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2);
    assert!(rep.summary["datasets"]["sine"]["reached"].is_boolean());
}

#[test]
fn scaling_fit_recovers_a_planted_law() {
    let v = json!({
        "name": "fit",
        "kind": "scaling_fit",
        "seeds": [0],
        "planted": {"law": {"k2_sq": 2.0, "k1_sq_damped_lambda": 0.5, "noise_term": 0.01, "alpha_z": 1.5},
                    "n_observations": 50, "noise": 0.0},
        "horizon_params": {"n": 1e4, "d_data": 1e6, "d_f": 1.0, "d_i": 100.0, "d_i_s": 2.0, "s": 1.0,
                           "alpha_z": 1.5, "k1": 1.0, "k2": 1.0, "eta": 0.0, "lambda0": 1.0,
                           "sigma_m_sq": 0.01, "c0": 9.869604401089358}
    });
    let dir = tempfile::tempdir().unwrap();
    let rep = run_in(&spec(v), dir.path());
    for k in ["k2_sq", "k1_sq_damped_lambda", "noise_term", "alpha_z"] {
        let e = rep.summary["planted_relative_error"][k].as_f64().unwrap();
        assert!(e < 1e-6, "{k}: {e}");
    }
    assert!(rep.summary["optimal_horizon"]["small_model_lambert"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("plots/scaling_fit_seed0.csv").is_file());
}

#[test]
fn failed_run_leaves_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("short.csv");
    std::fs::write(&csv, "date,x\n1,1.0\n2,2.0\n3,3.0\n").unwrap();
    let mut v = tiny("zero_shot_suite");
    v["datasets"] = json!([{"name": "short", "source": "csv", "path": csv}]);
    let out = dir.path().join("out");
    let err = run(
        &spec(v),
        &RunOptions {
            out_dir: out.clone(),
            quiet: true,
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let marker = std::fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(!marker.trim().is_empty());
    assert!(!out.join("report.json").exists());
}

fn tslab(args: &[&str]) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_tslab")).args(args).output().unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn command_line_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    let mut v = tiny("linear_baseline");
    v["seeds"] = json!([0]);
    v["output_dir"] = json!(dir.path().join("run"));
    std::fs::write(&good, v.to_string()).unwrap();
    assert_eq!(tslab(&["validate", good.to_str().unwrap()]).0, 0);

    let bad = dir.path().join("bad.json");
    let mut b = v.clone();
    b["horizon"] = json!(6);
    b["datasets"] = json!([{"name": "x", "source": "csv", "path": "missing.csv"}]);
    std::fs::write(&bad, b.to_string()).unwrap();
    let (code, _, err) = tslab(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("H % P == 0") && err.contains("datasets[0].path"), "{err}");

    let (code, out, _) = tslab(&["run", "-q", good.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("| sine | MSE |"), "{out}");
    let run_dir = dir.path().join("run");
    let (code, md, _) = tslab(&["report", run_dir.to_str().unwrap(), "--format", "markdown-table"]);
    assert_eq!(code, 0);
    assert!(md.contains("**"), "{md}");
    let (_, csv, _) = tslab(&["report", run_dir.to_str().unwrap(), "--format", "csv"]);
    assert!(csv.starts_with("seed,dataset,model,mse,mae,n_windows"));
    let ckpt = run_dir.join("checkpoints/seed0/linear.tslb");
    let (code, info, _) = tslab(&["checkpoint", "inspect", ckpt.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(info.contains("\"tensors\""), "{info}");

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "date,x\n1,1.0\n2,2.0\n").unwrap();
    let mut f = v.clone();
    f["datasets"] = json!([{"name": "short", "source": "csv", "path": short}]);
    f["output_dir"] = json!(dir.path().join("failing"));
    let failing = dir.path().join("failing.json");
    std::fs::write(&failing, f.to_string()).unwrap();
    assert_eq!(tslab(&["run", "-q", failing.to_str().unwrap()]).0, 2);
    assert!(dir.path().join("failing/FAILED").is_file());
}
