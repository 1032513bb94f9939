//! The report file written by `optimize` and read back by `deform`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use optctrl::{FitReport, TargetSet, TetMesh};

use crate::config::{Distance, Method};
use crate::error::{CliError, CliResult};
use crate::io::read_text;

/// Stable JSON schema of a search result. Vertex indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub control_points: Vec<usize>,
    pub k: usize,
    pub mean_fit_distance: f64,
    pub per_target: Vec<f64>,
    pub initial_fps_distance: Option<f64>,
    pub evals: usize,
    pub passes: usize,
    pub seed: u64,
    pub timings_ms: BTreeMap<String, f64>,
    pub config_hash: String,
}

impl ReportJson {
    pub fn new(r: &FitReport, config_hash: String, timings_ms: BTreeMap<String, f64>) -> Self {
        Self {
            control_points: r.control_points.clone(),
            k: r.control_points.len(),
            mean_fit_distance: r.mean_distance,
            per_target: r.per_target.clone(),
            initial_fps_distance: r.initial_fps_distance,
            evals: r.eval_count,
            passes: r.passes_run,
            seed: r.seed,
            timings_ms,
            config_hash,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values are finite");
    s.push('\n');
    s
}

/// Everything that determines a report's content.
#[derive(Serialize)]
struct HashInput<'a> {
    method: Method,
    k: usize,
    epsilon_bits: String,
    seed: u64,
    passes: usize,
    trials: Option<usize>,
    distance: Distance,
    template_sha256: &'a str,
    targets_sha256: &'a str,
}

pub struct Provenance {
    pub method: Method,
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub passes: usize,
    pub trials: Option<usize>,
    pub distance: Distance,
}

/// SHA-256 over the resolved options and the input geometry, independent of
/// file paths.
pub fn config_hash(p: &Provenance, template: &TetMesh, targets: &TargetSet) -> String {
    let template_sha256 = hex(&template.content_hash());
    let mut h = Sha256::new();
    for t in targets.iter() {
        for v in t {
            for c in v {
                h.update(c.to_le_bytes());
            }
        }
    }
    let targets_sha256 = hex(&h.finalize());
    let input = HashInput {
        method: p.method,
        k: p.k,
        epsilon_bits: format!("{:016x}", p.epsilon.to_bits()),
        seed: p.seed,
        passes: p.passes,
        trials: p.trials,
        distance: p.distance,
        template_sha256: &template_sha256,
        targets_sha256: &targets_sha256,
    };
    let json = serde_json::to_vec(&input).expect("plain data");
    hex(&Sha256::digest(&json))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
