use std::path::Path;

use ampsizer::config::ExperimentConfig;
use ampsizer::log::{deterministic_view, parse_log, read_log, Payload, TrainEntry};
use ampsizer::pareto::ParetoMethod;
use ampsizer::plots::{emit_plot_data, FRONTIER_CSV, REWARD_CSV, STEPS_CSV, SUCCESS_CSV};
use ampsizer::run::{cmd_run, load_snapshot, Command, BEST_CHECKPOINT, CHECKPOINT_DIR, CONFIG_FILE, LOG_FILE, PLOT_DIR};
use ampsizer::Error;

fn quick_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = dir.to_path_buf();
    cfg.seed = 3;
    cfg.train.total_env_evals = 600;
    cfg.train.max_steps = 10;
    cfg.train.eval_interval = 300;
    cfg.train.eval_goals = 4;
    cfg.deploy.goals = 12;
    cfg.parasitic.goals = 3;
    cfg.pareto.budget = 120;
    cfg
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn all_runs_the_pipeline_once_and_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let cfg = quick_config(&a);
    cmd_run(Command::All, &cfg).unwrap();
    for f in [CONFIG_FILE, LOG_FILE] {
        assert!(a.join(f).exists(), "{f}");
    }
    assert!(a.join(CHECKPOINT_DIR).join(BEST_CHECKPOINT).exists());

    let records = read_log(&a.join(LOG_FILE)).unwrap().complete().unwrap();
    let kinds: Vec<&str> = records.iter().map(|r| r.payload.kind()).collect();
    let first_train = kinds.iter().position(|&k| k == "train").unwrap();
    let first_deploy = kinds.iter().position(|&k| k == "deploy").unwrap();
    assert!(kinds[..first_train].iter().all(|&k| k == "bo"));
    assert!(kinds[first_train..].iter().all(|&k| k != "bo"));
    assert!(kinds[first_train..first_deploy].iter().all(|&k| k == "train"));
    assert!(kinds[first_deploy + 1..].iter().all(|&k| k == "failure"));
    let iterations: Vec<usize> = records
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::Bo(b) => Some(b.iteration),
            _ => None,
        })
        .collect();
    assert!(iterations.len() <= cfg.bo.max_sims);
    assert!(iterations.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
    assert_eq!(iterations.iter().filter(|&&i| i == 1).count(), 1);

    // the snapshot alone reproduces the log
    let mut again = load_snapshot(&a).unwrap();
    assert_eq!(again, cfg);
    let b = tmp.path().join("b");
    again.output_dir = b.clone();
    cmd_run(Command::All, &again).unwrap();
    let log_a = std::fs::read_to_string(a.join(LOG_FILE)).unwrap();
    let log_b = std::fs::read_to_string(b.join(LOG_FILE)).unwrap();
    assert_eq!(deterministic_view(&log_a).unwrap(), deterministic_view(&log_b).unwrap());

    // rerunning into the same directory starts a fresh log
    cmd_run(Command::All, &cfg).unwrap();
    let log_c = std::fs::read_to_string(a.join(LOG_FILE)).unwrap();
    assert_eq!(deterministic_view(&log_a).unwrap(), deterministic_view(&log_c).unwrap());

    // plot tables recount the log
    let plots = a.join(PLOT_DIR);
    let batches = records
        .iter()
        .filter(|r| matches!(r.payload, Payload::Train(TrainEntry::Batch(_))))
        .count();
    assert_eq!(csv_rows(&plots.join(REWARD_CSV)).len(), batches);
    assert_eq!(csv_rows(&plots.join(SUCCESS_CSV)).len(), batches);
    let hist: usize = csv_rows(&plots.join(STEPS_CSV))
        .iter()
        .map(|r| r[1].parse::<usize>().unwrap() + r[2].parse::<usize>().unwrap())
        .sum();
    assert_eq!(hist, cfg.deploy.goals);
    assert!(csv_rows(&plots.join(FRONTIER_CSV)).is_empty());
}

#[test]
fn later_stages_need_earlier_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    assert!(matches!(cmd_run(Command::Deploy, &cfg), Err(Error::Checkpoint(_))));
    assert!(matches!(cmd_run(Command::Parasitic, &cfg), Err(Error::Checkpoint(_))));
    assert!(matches!(cmd_run(Command::Train, &cfg), Err(Error::Config(_))));
}

#[test]
fn stages_append_and_pareto_frontier_is_sorted() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(tmp.path());
    cfg.pareto.methods = vec![ParetoMethod::Random, ParetoMethod::Bo];
    cmd_run(Command::Vanguard, &cfg).unwrap();
    cmd_run(Command::Train, &cfg).unwrap();
    cmd_run(Command::Parasitic, &cfg).unwrap();
    cmd_run(Command::Pareto, &cfg).unwrap();
    let records = read_log(&tmp.path().join(LOG_FILE)).unwrap().complete().unwrap();
    let count = |k: &str| records.iter().filter(|r| r.payload.kind() == k).count();
    assert_eq!(count("parasitic"), cfg.parasitic.goals * cfg.parasitic.betas.len());
    assert_eq!(count("pareto"), 2);
    let frontier_points: usize = records
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::Pareto(p) => Some(p.outcome.frontier.len()),
            _ => None,
        })
        .sum();
    let rows = csv_rows(&tmp.path().join(PLOT_DIR).join(FRONTIER_CSV));
    assert_eq!(rows.len(), frontier_points);
    let power: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(power.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn malformed_log_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    cmd_run(Command::Vanguard, &cfg).unwrap();
    let path = tmp.path().join(LOG_FILE);
    let mut text = std::fs::read_to_string(&path).unwrap();
    let n = text.lines().count();
    let last = text.lines().last().unwrap().to_string();
    text.push_str(&last[..last.len() - 7]);
    let parsed = parse_log(&text).unwrap();
    assert_eq!(parsed.records.len(), n);
    assert_eq!(parsed.truncated, Some(n + 1));
    match parsed.complete() {
        Err(Error::Log { line, .. }) => assert_eq!(line, n + 1),
        other => panic!("{other:?}"),
    }
    let broken: String = text.lines().take(2).map(|l| format!("{l}\n")).collect::<String>() + "not json\n" + &last + "\n";
    assert!(matches!(parse_log(&broken), Err(Error::Log { line: 3, .. })));
    let records = parse_log(&broken.replace("not json\n", "")).unwrap().complete().unwrap();
    emit_plot_data(&records, &tmp.path().join("p")).unwrap();
}
