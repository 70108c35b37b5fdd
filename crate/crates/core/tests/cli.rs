use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn manualpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manualpa"))
        .args(args)
        .env("MANUALPA_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = manualpa(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "config.toml" {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL: &str = "count = 12\nmin_parts = 4\nmax_parts = 7\npoints_per_part = 48\npoints = 24\n\
                     raster = 32\npatch = 16\ndim = 16\nheads = 2\nffn = 32\nlayers = 1\nbatch = 4\n\
                     epochs = 2\nworkers = 1\nnoise_scales = [0.0, 1.0]\nsweep_seeds = 1\nattn_samples = 1\n";

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["gen", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    }
    let ta = tree(&a);
    assert!(!ta.is_empty());
    assert_eq!(ta, tree(&b));
    assert!(a.join("config.toml").exists());
}

#[test]
fn pose_stage_requires_order_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = manualpa(&["train-pose", "--dataset", "nowhere", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("train-order") && err.contains("--gt-order"), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "epochz = 3\n").unwrap();
    let o = manualpa(&["gen", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let c = cfg.to_str().unwrap();
    ok(&["gen", "--config", c, "--out", &p("data")]);
    ok(&["train-order", "--config", c, "--dataset", &p("data"), "--out", &p("order")]);
    let order_ckpt = p("order/order.mpaw");
    assert!(Path::new(&order_ckpt).exists());
    assert!(dir.path().join("order/train_log.csv").exists());
    ok(&["train-pose", "--config", c, "--dataset", &p("data"), "--order-checkpoint", &order_ckpt, "--out", &p("pose")]);
    let pose_ckpt = p("pose/pose.mpaw");
    for mode in ["predicted", "gt", "none"] {
        let out = p(&format!("eval_{mode}"));
        let text = ok(&[
            "eval", "--config", c, "--dataset", &p("data"), "--checkpoint", &pose_ckpt,
            "--order-checkpoint", &order_ckpt, "--mode", mode, "--out", &out,
        ]);
        assert!(text.contains(&format!("mode {mode}")), "{text}");
        assert!(Path::new(&out).join("report.json").exists());
        assert!(Path::new(&out).join("report.csv").exists());
    }
    ok(&["kt-sweep", "--config", c, "--dataset", &p("data"), "--checkpoint", &pose_ckpt, "--out", &p("sweep")]);
    assert!(dir.path().join("sweep/kt_sweep.csv").exists());
    let text = ok(&[
        "export-attn", "--config", c, "--dataset", &p("data"), "--checkpoint", &pose_ckpt, "--mode", "gt", "--out", &p("attn"),
    ]);
    assert!(text.contains("attention hit rate"));
    assert!(dir.path().join("attn/attention_rate.csv").exists());
}
