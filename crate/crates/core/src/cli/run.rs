use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::problems::{shape_fingerprint, Problem};
use crate::trainer::{
    evaluate, fine_tune, train, Checkpoint, Mode, OverheadCounters, TrainOutcome,
};
use crate::types::{LossPair, TraceRecord};

/// First line of every trace file; bump when the columns change.
pub const TRACE_SCHEMA: &str = "# rdbalance-trace v1";
pub const TRACE_HEADER: [&str; 9] = [
    "iteration",
    "L_R",
    "L_D",
    "w_R",
    "w_D",
    "s_R",
    "s_D",
    "‖d‖",
    "α",
];
pub const DIAGNOSTICS_SCHEMA: &str = "# rdbalance-diagnostics v1";
pub const DIAGNOSTICS_HEADER: [&str; 6] = [
    "iteration",
    "c_t",
    "raw_w_R",
    "raw_w_D",
    "kkt_lambda",
    "fallback",
];
pub const MANIFEST_FORMAT: &str = "rdbalance-run";

/// A from-scratch run counts as diverged when its held-out `L_R + L_D`
/// did not drop by at least this fraction.
pub const NON_IMPROVING_REL: f64 = 1e-3;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub rate: f64,
    pub distortion: f64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality_db: Option<f64>,
}

impl EvalSummary {
    fn new(problem: &dyn Problem, losses: LossPair) -> Self {
        Self {
            rate: losses.rate,
            distortion: losses.distortion,
            total: losses.total(),
            quality_db: problem.quality_db(&losses),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParentInfo {
    pub checkpoint_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerIteration {
    pub loss_evals: f64,
    pub grad_evals: f64,
    pub gram_builds: f64,
    pub balanced_directions: f64,
    pub logit_updates: f64,
}

impl From<&OverheadCounters> for PerIteration {
    fn from(c: &OverheadCounters) -> Self {
        let n = c.iterations.max(1) as f64;
        Self {
            loss_evals: c.loss_evals as f64 / n,
            grad_evals: c.grad_evals as f64 / n,
            gram_builds: c.gram_builds as f64 / n,
            balanced_directions: c.balanced_directions as f64 / n,
            logit_updates: c.logit_updates as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub version: u32,
    pub tool_version: &'static str,
    pub label: String,
    pub config_fingerprint: String,
    pub problem_fingerprint: String,
    pub mode: Mode,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub renormalize: bool,
    /// The balanced direction used `c_t ≡ 1`.
    pub renorm_fixed_to_one: bool,
    pub expected_divergent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<ParentInfo>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub started_at_unix: f64,
    pub wall_clock_seconds: f64,
    pub counters: OverheadCounters,
    pub per_iteration: PerIteration,
    pub initial_eval: EvalSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_eval: Option<EvalSummary>,
    pub artifacts: Vec<String>,
    pub config: ExperimentConfig,
}

/// Where a run starts from when it does not use the seeded initialization.
#[derive(Debug, Clone)]
pub struct Parent {
    pub checkpoint: Checkpoint,
    pub info: ParentInfo,
}

impl Parent {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let checkpoint: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| Error::Serde(e.to_string()))?;
        Ok(Self {
            checkpoint,
            info: ParentInfo {
                checkpoint_sha256: hex::encode(Sha256::digest(&bytes)),
                config_fingerprint: None,
                dir: path.parent().map(Path::to_path_buf),
            },
        })
    }

    /// The checkpoint a finished run wrote, hashed as stored on disk.
    pub fn from_run(run: &RunResult) -> Result<Option<Self>> {
        if run.outcome.is_none() {
            return Ok(None);
        }
        let mut parent = Self::load(&run.dir.join(CHECKPOINT_FILE))?;
        parent.info.config_fingerprint = Some(run.manifest.config_fingerprint.clone());
        Ok(Some(parent))
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub config: ExperimentConfig,
    pub parent: Option<Parent>,
    pub expected_divergent: bool,
}

impl RunSpec {
    pub fn new(label: impl Into<String>, config: ExperimentConfig) -> Self {
        Self {
            label: label.into(),
            config,
            parent: None,
            expected_divergent: false,
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub outcome: Option<TrainOutcome>,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        self.manifest.status == RunStatus::Diverged
    }
}

fn unix_now() -> (u64, u32) {
    let d = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    (d.as_secs(), d.subsec_millis())
}

/// Create a fresh directory `<prefix><fingerprint[..12]>-<unix seconds><ms>`
/// under `root`, adding a counter suffix if the name is taken.
pub fn create_run_dir(root: &Path, prefix: &str, fingerprint: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let (secs, ms) = unix_now();
    let stem = format!(
        "{prefix}{}-{secs}{ms:03}",
        &fingerprint[..12.min(fingerprint.len())]
    );
    for n in 0u32.. {
        let name = if n == 0 {
            stem.clone()
        } else {
            format!("{stem}-{n}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(dir, e)),
        }
    }
    unreachable!("run directory counter exhausted")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serde(format!("{other:?}")),
    }
}

fn schema_writer(path: &Path, schema: &str) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{schema}").map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = schema_writer(path, TRACE_SCHEMA)?;
    w.write_record(TRACE_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            r.losses.rate.to_string(),
            r.losses.distortion.to_string(),
            r.weights.rate().to_string(),
            r.weights.distortion().to_string(),
            r.speeds.rate.to_string(),
            r.speeds.distortion.to_string(),
            r.direction_norm.to_string(),
            r.step_size.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_diagnostics(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = schema_writer(path, DIAGNOSTICS_SCHEMA)?;
    w.write_record(DIAGNOSTICS_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            opt(r.renorm),
            opt(r.raw_weights.map(|w| w[0])),
            opt(r.raw_weights.map(|w| w[1])),
            opt(r.kkt_lambda),
            r.fallback.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Train (or fine-tune from `spec.parent`) and write the run's artifacts
/// into a new directory under `root`. Training failures are recorded in the
/// manifest; only configuration and I/O problems are returned as errors.
pub fn execute(spec: &RunSpec, root: &Path) -> Result<RunResult> {
    let config = &spec.config;
    let problem = config.problem.build()?;
    let fingerprint = config.fingerprint();
    let parent = match (&spec.parent, &config.train.fine_tune_from) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(path)) => Some(Parent::load(path)?),
        (None, None) => None,
    };
    let start_theta = match &parent {
        Some(p) => {
            p.checkpoint.check_compatible(problem.as_ref())?;
            p.checkpoint.theta.clone()
        }
        None => problem.initial_theta(config.train.seed),
    };
    let initial = evaluate(problem.as_ref(), &start_theta)?;

    let dir = create_run_dir(root, "", &fingerprint)?;
    let (started_secs, started_ms) = unix_now();
    let clock = Instant::now();
    let result = match &parent {
        Some(p) => fine_tune(&p.checkpoint, problem.as_ref(), &config.train),
        None => train(problem.as_ref(), &config.train),
    };
    let wall = clock.elapsed().as_secs_f64();

    let mut artifacts = Vec::new();
    let (status, reason, outcome, final_eval) = match result {
        Ok(outcome) => {
            let fin = evaluate(problem.as_ref(), &outcome.checkpoint.theta);
            let final_eval = fin
                .as_ref()
                .ok()
                .map(|l| EvalSummary::new(problem.as_ref(), *l));
            let (status, reason) = match fin {
                Err(e) => (
                    RunStatus::Diverged,
                    Some(format!("final evaluation failed: {e}")),
                ),
                Ok(l)
                    if parent.is_none()
                        && !(l.total() < initial.total() * (1.0 - NON_IMPROVING_REL)) =>
                {
                    (
                        RunStatus::Diverged,
                        Some(format!(
                            "held-out loss did not improve: {} -> {}",
                            initial.total(),
                            l.total()
                        )),
                    )
                }
                Ok(_) => (RunStatus::Completed, None),
            };
            outcome.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
            artifacts.push(CHECKPOINT_FILE.to_string());
            if config.output.trace {
                write_trace(&dir.join(TRACE_FILE), &outcome.trace)?;
                artifacts.push(TRACE_FILE.to_string());
            }
            if config.output.diagnostics {
                write_diagnostics(&dir.join(DIAGNOSTICS_FILE), &outcome.trace)?;
                artifacts.push(DIAGNOSTICS_FILE.to_string());
            }
            (status, reason, Some(outcome), final_eval)
        }
        Err(e @ Error::Diverged { .. }) => (RunStatus::Diverged, Some(e.to_string()), None, None),
        Err(e) => return Err(e),
    };
    artifacts.push(MANIFEST_FILE.to_string());

    let counters = outcome.as_ref().map(|o| o.counters).unwrap_or_default();
    let balanced = config.train.mode != Mode::Standard;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT,
        version: 1,
        tool_version: env!("CARGO_PKG_VERSION"),
        label: spec.label.clone(),
        config_fingerprint: fingerprint,
        problem_fingerprint: shape_fingerprint(problem.as_ref()),
        mode: config.train.mode,
        seed: config.train.seed,
        lambda: config.problem.lambda(),
        renormalize: config.train.renormalize,
        renorm_fixed_to_one: balanced && !config.train.renormalize,
        expected_divergent: spec.expected_divergent,
        parent: parent.map(|p| p.info),
        status,
        reason,
        started_at_unix: started_secs as f64 + started_ms as f64 / 1000.0,
        wall_clock_seconds: wall,
        per_iteration: PerIteration::from(&counters),
        counters,
        initial_eval: EvalSummary::new(problem.as_ref(), initial),
        final_eval,
        artifacts,
        config: config.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunResult {
        dir,
        manifest,
        outcome,
    })
}
