use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
env = "bimodal_bandit"
iterations = 6
checkpoint_every = 3

[trainer]
batch_size = 8
warmup = 16
steps_per_iteration = 8
buffer_capacity = 256
n_q_samples = 1

[trainer.entropy]
n_actions = 8
states = 2

[trainer.value.net]
hidden = [8, 8]

[trainer.value.schedule]
steps = 3

[trainer.policy.net]
hidden = [8, 8]

[trainer.policy.schedule]
steps = 3
"#;

fn dsacd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsacd"))
        .args(args)
        .env_remove("DSACD_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    dsacd(&args)
}

#[test]
fn zero_iterations_writes_config_and_empty_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let o = train(&cfg, &out, &["--iterations", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("metrics.jsonl")).unwrap(), "");
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("iterations = 0"));
    assert!(resolved.contains("target_entropy = -1.0"));
    assert!(resolved.contains("[trainer.policy.schedule]"));
}

#[test]
fn missing_env_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "iterations = 1\n");
    let o = train(&cfg, &dir.path().join("run"), &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`env`"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_all_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{TINY}\n[trainer.alpha]\ninitail = 1.0\n"),
    );
    let o = train(
        &cfg,
        &dir.path().join("run"),
        &["--override", "trainer.gama=0.5"],
    );
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(
        err.contains("trainer.alpha.initail") && err.contains("trainer.gama"),
        "{err}"
    );
}

#[test]
fn same_seed_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let runs: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = train(&cfg, &out, &["--seed", "7", "--deterministic"]);
            assert!(o.status.success(), "{}", stderr(&o));
            fs::read_to_string(out.join("metrics.jsonl")).unwrap()
        })
        .collect();
    assert_eq!(runs[0].lines().count(), 6);
    assert_eq!(runs[0], runs[1]);

    // the snapshot alone reproduces the run
    let out = dir.path().join("c");
    let snapshot = dir.path().join("a").join("config.toml");
    let o = train(&snapshot, &out, &["--deterministic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(out.join("metrics.jsonl")).unwrap(),
        runs[0]
    );

    let out = dir.path().join("d");
    assert!(train(&cfg, &out, &["--seed", "8", "--deterministic"])
        .status
        .success());
    assert_ne!(
        fs::read_to_string(out.join("metrics.jsonl")).unwrap(),
        runs[0]
    );
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("out_dir = \"nested/run\"\n{TINY}"));
    let o = Command::new(env!("CARGO_BIN_EXE_dsacd"))
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--iterations",
            "0",
        ])
        .env("DSACD_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("nested/run/config.toml").exists());
}

#[test]
fn eval_and_plots_from_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = dir.path().join("run");
    assert!(train(&cfg, &run, &[]).status.success());
    let ckpt = run.join("checkpoint.ckpt");
    assert!(run.join("checkpoints/iter_0000003.ckpt").exists());
    let before = fs::read(&ckpt).unwrap();
    let metrics_before = fs::read(run.join("metrics.jsonl")).unwrap();

    let eval = |extra: &[&str]| {
        let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = dsacd(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    let a = eval(&[
        "--episodes",
        "5",
        "--seed",
        "3",
        "--deterministic",
        "--bias",
    ]);
    let b = eval(&[
        "--episodes",
        "5",
        "--seed",
        "3",
        "--deterministic",
        "--bias",
    ]);
    assert_eq!(a, b);
    assert_eq!(a["returns"].as_array().unwrap().len(), 5);
    assert!(a["bias"]["relative_bias"].is_number());

    let empty = eval(&["--episodes", "0"]);
    assert!(empty["mean_return"].is_null());
    assert_eq!(empty["returns"].as_array().unwrap().len(), 0);

    let plots = dir.path().join("plots");
    for kind in ["curves", "return_hist", "action_modes"] {
        let o = dsacd(&[
            "plot",
            "--kind",
            kind,
            "--run",
            run.to_str().unwrap(),
            "--samples",
            "40",
            "--out",
            plots.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{kind}: {}", stderr(&o));
        let svg = fs::read_to_string(plots.join(format!("{kind}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    let o = dsacd(&[
        "plot",
        "--kind",
        "trajectories",
        "--run",
        run.to_str().unwrap(),
    ]);
    assert!(!o.status.success(), "bandit has no trajectories to draw");
    assert!(dsacd(&[
        "plot",
        "--kind",
        "histogram",
        "--run",
        run.to_str().unwrap()
    ])
    .status
    .code()
    .is_some_and(|c| c != 0));

    // plotting and evaluation never touch the artifacts
    assert_eq!(fs::read(&ckpt).unwrap(), before);
    assert_eq!(fs::read(run.join("metrics.jsonl")).unwrap(), metrics_before);
}

#[test]
fn eval_rejects_mismatched_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = dir.path().join("run");
    assert!(train(&cfg, &run, &["--iterations", "0"]).status.success());
    let o = dsacd(&[
        "eval",
        "--checkpoint",
        run.join("checkpoint.ckpt").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--override",
        "env=two_goal_pointmass",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("dims"), "{}", stderr(&o));
}

#[test]
fn empty_metrics_still_plot() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.jsonl");
    fs::write(&metrics, "").unwrap();
    let o = dsacd(&[
        "plot",
        "--kind",
        "curves",
        "--metrics",
        metrics.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("curves.svg").exists());
}

#[test]
fn help_documents_every_flag() {
    let train = String::from_utf8(dsacd(&["train", "--help"]).stdout).unwrap();
    for flag in [
        "--config",
        "--override",
        "--seed",
        "--out",
        "--checkpoint",
        "DSACD_OUT",
    ] {
        assert!(train.contains(flag), "train --help lacks {flag}");
    }
    let eval = String::from_utf8(dsacd(&["eval", "--help"]).stdout).unwrap();
    for flag in ["--checkpoint", "--deterministic", "--bias", "--seed"] {
        assert!(eval.contains(flag), "eval --help lacks {flag}");
    }
    let plot = String::from_utf8(dsacd(&["plot", "--help"]).stdout).unwrap();
    assert!(plot.contains("--kind") && plot.contains("trajectories"));
}

#[test]
fn non_finite_training_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let o = train(
        &cfg,
        &out,
        &[
            "--override",
            "trainer.value_lr=1e300",
            "--override",
            "trainer.policy_lr=1e300",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
    assert!(out.join("aborted.ckpt").exists());
}

#[test]
fn resume_continues_the_metrics_stream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let full = dir.path().join("full");
    let keep = ["--deterministic", "--override", "checkpoint_buffer=true"];
    assert!(train(&cfg, &full, &keep).status.success());

    let split = dir.path().join("split");
    assert!(
        train(&cfg, &split, &[&keep[..], &["--iterations", "3"]].concat())
            .status
            .success()
    );
    let ckpt = split.join("checkpoints/iter_0000003.ckpt");
    let o = train(
        &cfg,
        &split,
        &[
            &keep[..],
            &["--iterations", "3", "--checkpoint", ckpt.to_str().unwrap()],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read_to_string(full.join("metrics.jsonl")).unwrap();
    let b = fs::read_to_string(split.join("metrics.jsonl")).unwrap();
    assert_eq!(b.lines().count(), 6);
    assert_eq!(a, b);
}
