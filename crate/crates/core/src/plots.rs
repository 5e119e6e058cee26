//! CSV plot data derived from a results log.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::log::{Payload, ResultRecord, TrainEntry};

pub const REWARD_CSV: &str = "reward_vs_evals.csv";
pub const SUCCESS_CSV: &str = "success_vs_evals.csv";
pub const FRONTIER_CSV: &str = "pareto_frontier.csv";
pub const STEPS_CSV: &str = "deploy_steps_histogram.csv";

pub const REWARD_HEADER: [&str; 3] = ["batch", "env_evals", "mean_episode_reward"];
pub const SUCCESS_HEADER: [&str; 3] = ["batch", "env_evals", "success_rate"];
pub const FRONTIER_HEADER: [&str; 4] = ["method", "power_w", "gbw_hz", "fom"];
pub const STEPS_HEADER: [&str; 3] = ["steps", "successes", "failures"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invariant(format!("csv: {other:?}")),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the four plot files into `dir` and returns their paths. Each file
/// has a header even when no matching records exist.
pub fn emit_plot_data(records: &[ResultRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut reward = Vec::new();
    let mut success = Vec::new();
    let mut frontier = Vec::new();
    let mut steps: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        match &r.payload {
            Payload::Train(TrainEntry::Batch(b)) => {
                reward.push(vec![b.batch.to_string(), b.env_evals.to_string(), b.mean_episode_reward.to_string()]);
                success.push(vec![b.batch.to_string(), b.env_evals.to_string(), b.success_rate.to_string()]);
            }
            Payload::Pareto(p) => {
                for f in &p.outcome.frontier {
                    frontier.push((p.outcome.method.name(), *f));
                }
            }
            Payload::Deploy(d) => {
                for (&n, &ok) in d.steps.iter().zip(&d.success) {
                    let e = steps.entry(n).or_default();
                    if ok {
                        e.0 += 1;
                    } else {
                        e.1 += 1;
                    }
                }
            }
            _ => {}
        }
    }
    frontier.sort_by(|a, b| a.1.power_w.total_cmp(&b.1.power_w).then(b.1.gbw_hz.total_cmp(&a.1.gbw_hz)));
    let frontier: Vec<Vec<String>> = frontier
        .into_iter()
        .map(|(m, f)| vec![m.to_string(), f.power_w.to_string(), f.gbw_hz.to_string(), f.fom.to_string()])
        .collect();
    let steps: Vec<Vec<String>> = steps
        .into_iter()
        .map(|(n, (s, f))| vec![n.to_string(), s.to_string(), f.to_string()])
        .collect();

    let files = [
        (REWARD_CSV, &REWARD_HEADER[..], reward),
        (SUCCESS_CSV, &SUCCESS_HEADER[..], success),
        (FRONTIER_CSV, &FRONTIER_HEADER[..], frontier),
        (STEPS_CSV, &STEPS_HEADER[..], steps),
    ];
    let mut paths = Vec::new();
    for (name, header, rows) in files {
        let path = dir.join(name);
        write_csv(&path, header, &rows)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_plot_data(&[], dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let text = std::fs::read_to_string(dir.path().join(FRONTIER_CSV)).unwrap();
        assert_eq!(text, "method,power_w,gbw_hz,fom\n");
        for p in paths {
            assert_eq!(std::fs::read_to_string(p).unwrap().lines().count(), 1);
        }
    }
}
