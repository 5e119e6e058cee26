//! Append-only JSON-lines results log. Every line is one [`ResultRecord`].

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bo::BoState;
use crate::circuit::ParamVector;
use crate::deploy::{DeployMetrics, FailureReport, ParasiticOutcome};
use crate::error::{Error, Result};
use crate::pareto::ParetoOutcome;
use crate::rl::{Evaluation, TrainRecord};

pub const SCHEMA_VERSION: u32 = 1;

/// Keys whose values depend on wall-clock time.
pub const TIMING_KEYS: [&str; 4] = ["timestamp", "wall_ms", "t_sim", "fom_deploy"];

/// One vanguard evaluation. Initial-design samples have iteration 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTraceRecord {
    pub iteration: usize,
    pub params: ParamVector,
    pub reward: f64,
    pub best_so_far: f64,
}

impl BoTraceRecord {
    /// The trace of a finished run, one record per successful evaluation.
    pub fn trace(state: &BoState) -> Vec<BoTraceRecord> {
        let n_init = state.history.len().saturating_sub(state.iteration);
        let mut best = f64::NEG_INFINITY;
        state
            .history
            .iter()
            .enumerate()
            .map(|(i, s)| {
                best = best.max(s.reward);
                BoTraceRecord {
                    iteration: (i + 1).saturating_sub(n_init),
                    params: s.params.clone(),
                    reward: s.reward,
                    best_so_far: best,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainEntry {
    Batch(TrainRecord),
    Eval(Evaluation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployRecord {
    pub metrics: DeployMetrics,
    /// Simulations used per goal, in goal order.
    pub steps: Vec<usize>,
    pub success: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub goal_index: usize,
    pub report: FailureReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParasiticRecord {
    pub beta: f64,
    pub goal_index: usize,
    /// The policy meets the goal without parasitics.
    pub pre_layout_solvable: bool,
    pub outcome: ParasiticOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRecord {
    pub budget: usize,
    pub outcome: ParetoOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record_kind", content = "payload", rename_all = "lowercase")]
pub enum Payload {
    Bo(BoTraceRecord),
    Train(TrainEntry),
    Deploy(DeployRecord),
    Failure(FailureRecord),
    Parasitic(ParasiticRecord),
    Pareto(ParetoRecord),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Bo(_) => "bo",
            Payload::Train(_) => "train",
            Payload::Deploy(_) => "deploy",
            Payload::Failure(_) => "failure",
            Payload::Parasitic(_) => "parasitic",
            Payload::Pareto(_) => "pareto",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    /// RFC 3339, UTC.
    pub timestamp: String,
    #[serde(flatten)]
    pub payload: Payload,
}

impl ResultRecord {
    pub fn now(payload: Payload) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            payload,
        }
    }
}

pub struct ResultsLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ResultsLog {
    /// Creates or truncates the log.
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append_to(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record and flushes, so a crash leaves at most one partial line.
    pub fn write(&mut self, payload: Payload) -> Result<()> {
        let line = serde_json::to_string(&ResultRecord::now(payload))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogContents {
    pub records: Vec<ResultRecord>,
    /// 1-based line number of an unterminated, unparseable last line.
    pub truncated: Option<usize>,
}

impl LogContents {
    /// All records, or the truncation as an error.
    pub fn complete(self) -> Result<Vec<ResultRecord>> {
        match self.truncated {
            Some(line) => Err(Error::Log {
                line,
                reason: "truncated record".into(),
            }),
            None => Ok(self.records),
        }
    }
}

pub fn parse_log(text: &str) -> Result<LogContents> {
    let mut records = Vec::new();
    let mut truncated = None;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let line = i + 1;
        let body = raw.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultRecord>(body) {
            Ok(r) if r.schema_version != SCHEMA_VERSION => {
                return Err(Error::Log {
                    line,
                    reason: format!("schema version {} (expected {SCHEMA_VERSION})", r.schema_version),
                });
            }
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() && !raw.ends_with('\n') => truncated = Some(line),
            Err(e) => {
                return Err(Error::Log {
                    line,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(LogContents { records, truncated })
}

pub fn read_log(path: &Path) -> Result<LogContents> {
    parse_log(&std::fs::read_to_string(path)?)
}

/// The log with every timing-dependent field removed, one JSON value per line.
pub fn deterministic_view(text: &str) -> Result<Vec<Value>> {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(map) => {
                for k in TIMING_KEYS {
                    map.remove(k);
                }
                map.values_mut().for_each(strip);
            }
            Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut v: Value = serde_json::from_str(l).map_err(|e| Error::Log {
                line: i + 1,
                reason: e.to_string(),
            })?;
            strip(&mut v);
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(i: usize) -> Payload {
        Payload::Train(TrainEntry::Batch(TrainRecord {
            batch: i,
            env_evals: 300 * (i + 1),
            mean_episode_reward: -1.5 + i as f64 * 0.1,
            success_rate: 0.25,
            actor_loss: 0.01,
            value_loss: 0.2,
            entropy: 1.0,
            wall_ms: 12.5,
        }))
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut log = ResultsLog::create(&path).unwrap();
        log.write(batch(0)).unwrap();
        log.write(Payload::Train(TrainEntry::Eval(Evaluation {
            env_evals: 2000,
            success_rate: 0.5,
            mean_steps: 9.0,
        })))
        .unwrap();
        drop(log);
        let recs = read_log(&path).unwrap().complete().unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].payload, batch(0));
        assert!(matches!(recs[1].payload, Payload::Train(TrainEntry::Eval(_))));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.contains("\"record_kind\":\"train\"")));
    }

    #[test]
    fn truncated_tail_keeps_earlier_records() {
        let mut text = String::new();
        for i in 0..3 {
            text += &serde_json::to_string(&ResultRecord::now(batch(i))).unwrap();
            text.push('\n');
        }
        let full = serde_json::to_string(&ResultRecord::now(batch(3))).unwrap();
        text += &full[..full.len() / 2];
        let c = parse_log(&text).unwrap();
        assert_eq!(c.records.len(), 3);
        assert_eq!(c.truncated, Some(4));
        match c.complete() {
            Err(Error::Log { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let good = serde_json::to_string(&ResultRecord::now(batch(0))).unwrap();
        let text = format!("{good}\n{{\"oops\n{good}\n");
        assert!(matches!(parse_log(&text), Err(Error::Log { line: 2, .. })));
    }

    #[test]
    fn deterministic_view_drops_timing() {
        let a = serde_json::to_string(&ResultRecord::now(batch(1))).unwrap();
        let mut r = ResultRecord::now(batch(1));
        r.timestamp = "1970-01-01T00:00:00.000Z".into();
        if let Payload::Train(TrainEntry::Batch(b)) = &mut r.payload {
            b.wall_ms = 99.0;
        }
        let b = serde_json::to_string(&r).unwrap();
        assert_ne!(a, b);
        assert_eq!(deterministic_view(&a).unwrap(), deterministic_view(&b).unwrap());
    }
}
