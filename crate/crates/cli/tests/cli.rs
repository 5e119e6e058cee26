use std::process::Command;

fn ampsizer() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ampsizer"));
    c.env("AMPSIZER_THREADS", "2");
    c
}

#[test]
fn help_lists_every_stage() {
    let out = ampsizer().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for stage in ["vanguard", "train", "deploy", "parasitic", "pareto", "all"] {
        assert!(text.contains(stage), "{stage}");
    }
    for flag in ["--config", "--seed", "--out", "--bo-repeats", "--budget", "--goals"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn unknown_stage_fails() {
    assert!(!ampsizer().arg("sweep").output().unwrap().status.success());
}

#[test]
fn deploy_without_checkpoint_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = ampsizer().args(["deploy", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("checkpoint"));
}

#[test]
fn bad_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[bo]\nmax_simz = 3\n").unwrap();
    let out = ampsizer().arg("vanguard").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("max_simz"));
}

#[test]
fn bad_thread_count_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ampsizer()
        .env("AMPSIZER_THREADS", "zero")
        .args(["vanguard", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 1\n[train]\nmax_steps = 10\neval_interval = 300\neval_goals = 4\n").unwrap();
    let run = dir.path().join("run");
    let out = ampsizer()
        .arg("all")
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "9", "--budget", "500", "--goals", "7", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("of 7 goals"), "{stdout}");
    let snapshot = std::fs::read_to_string(run.join("config.toml")).unwrap();
    let value: toml::Table = snapshot.parse().unwrap();
    assert_eq!(value["seed"].as_integer(), Some(9));
    assert_eq!(value["train"]["total_env_evals"].as_integer(), Some(500));
    assert_eq!(value["train"]["max_steps"].as_integer(), Some(10));
    assert_eq!(value["deploy"]["goals"].as_integer(), Some(7));
    for f in ["results.jsonl", "start.json", "checkpoints/best.json", "plots/reward_vs_evals.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
}
