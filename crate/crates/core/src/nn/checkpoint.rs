//! Policy weights as a UTF-8 JSON document. Weights are written with 17
//! significant digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::obs::ObsNormalizer;
use super::policy::{ActorCritic, PolicyDims};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub benchmark: String,
    pub normalization: ObsNormalizer,
    pub dims: PolicyDims,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    metadata: CheckpointMeta,
    layers: Vec<LayerRecord>,
}

/// Serializes the policy; identical weights always give identical bytes.
pub fn checkpoint_to_string(policy: &ActorCritic, meta: &CheckpointMeta) -> Result<String> {
    if meta.dims != policy.dims {
        return Err(Error::Checkpoint("metadata dims differ from the policy".into()));
    }
    let mut s = String::new();
    s.push_str("{\n");
    let _ = writeln!(s, "  \"format_version\": {FORMAT_VERSION},");
    let _ = writeln!(s, "  \"metadata\": {},", serde_json::to_string(meta)?);
    s.push_str("  \"layers\": [\n");
    let tensors = policy.named_tensors();
    for (k, (name, t)) in tensors.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::Checkpoint(format!("tensor `{name}` has non-finite values")));
        }
        let values: Vec<String> = t.data().iter().map(|v| format!("{v:.16e}")).collect();
        let _ = write!(
            s,
            "    {{\"name\": {}, \"shape\": [{}, {}], \"values\": [{}]}}",
            serde_json::to_string(name)?,
            t.rows(),
            t.cols(),
            values.join(", ")
        );
        s.push_str(if k + 1 < tensors.len() { ",\n" } else { "\n" });
    }
    s.push_str("  ]\n}\n");
    Ok(s)
}

/// Parses a checkpoint; `expected_benchmark` guards against loading the wrong circuit's policy.
pub fn checkpoint_from_str(text: &str, expected_benchmark: Option<&str>) -> Result<(ActorCritic, CheckpointMeta)> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    if let Some(b) = expected_benchmark {
        if file.metadata.benchmark != b {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on `{}`, not `{b}`",
                file.metadata.benchmark
            )));
        }
    }
    let mut policy = ActorCritic::new(file.metadata.dims, &mut ChaCha8Rng::seed_from_u64(0));
    let expected: Vec<(String, [usize; 2])> = policy
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    if expected.len() != file.layers.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, architecture needs {}",
            file.layers.len(),
            expected.len()
        )));
    }
    for ((name, shape), (slot, rec)) in expected.iter().zip(policy.tensors_mut().into_iter().zip(&file.layers)) {
        if &rec.name != name || rec.shape != shape.to_vec() {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                rec.name, rec.shape
            )));
        }
        *slot = Tensor::new(shape[0], shape[1], rec.values.clone())
            .map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
    }
    Ok((policy, file.metadata))
}

pub fn save_checkpoint(path: &Path, policy: &ActorCritic, meta: &CheckpointMeta) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(policy, meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected_benchmark: Option<&str>) -> Result<(ActorCritic, CheckpointMeta)> {
    checkpoint_from_str(&std::fs::read_to_string(path)?, expected_benchmark)
}
