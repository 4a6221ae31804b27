use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, SweepConfig};
use super::run::{create_run_dir, execute, write_json, Parent, RunResult, RunSpec, RunStatus};
use crate::error::{Error, Result};
use crate::metrics::{bd_rate, write_curve_csv, RDCurve, RDPoint};
use crate::trainer::{Mode, TrainConfig};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunEntry {
    pub label: String,
    pub mode: Mode,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub dir: PathBuf,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distortion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality_db: Option<f64>,
    pub expected_divergent: bool,
}

impl From<&RunResult> for RunEntry {
    fn from(r: &RunResult) -> Self {
        let m = &r.manifest;
        let fin = m.final_eval.as_ref();
        Self {
            label: m.label.clone(),
            mode: m.mode,
            seed: m.seed,
            lambda: m.lambda,
            dir: r.dir.clone(),
            status: m.status,
            reason: m.reason.clone(),
            rate: fin.map(|e| e.rate),
            distortion: fin.map(|e| e.distortion),
            quality_db: fin.and_then(|e| e.quality_db),
            expected_divergent: m.expected_divergent,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveEntry {
    pub mode: Mode,
    pub seed: u64,
    pub file: PathBuf,
    pub points: Vec<RDPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BdRateEntry {
    pub mode: Mode,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bd_rate_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub format: &'static str,
    pub config_fingerprint: String,
    pub dir: PathBuf,
    pub runs: Vec<RunEntry>,
    pub curves: Vec<CurveEntry>,
    /// Each balanced mode against the standard curve of the same seed.
    pub bd_rate: Vec<BdRateEntry>,
    pub failed: usize,
}

/// Thread pool bounded by `workers` (default: available parallelism).
pub(crate) fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn variant(
    base: &ExperimentConfig,
    mode: Mode,
    seed: u64,
    lambda: Option<f64>,
) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    c.sweep = None;
    c.train.mode = mode;
    c.train.seed = seed;
    c.train.fine_tune_from = None;
    if let Some(l) = lambda {
        c.problem = c.problem.with_lambda(l)?;
    }
    Ok(c)
}

fn label(mode: Mode, seed: u64, lambda: Option<f64>) -> String {
    match lambda {
        Some(l) => format!("{}-seed{seed}-lambda{l}", mode.as_str()),
        None => format!("{}-seed{seed}", mode.as_str()),
    }
}

/// One mode and seed across the λ list, chained from the first λ when
/// requested.
fn run_group(
    base: &ExperimentConfig,
    sweep: &SweepConfig,
    mode: Mode,
    seed: u64,
    dir: &Path,
) -> Result<Vec<RunResult>> {
    let lambdas: Vec<Option<f64>> = if sweep.lambdas.is_empty() {
        vec![None]
    } else {
        sweep.lambdas.iter().copied().map(Some).collect()
    };
    let first = execute(
        &RunSpec::new(
            label(mode, seed, lambdas[0]),
            variant(base, mode, seed, lambdas[0])?,
        ),
        dir,
    )?;
    let root = if sweep.chain {
        Parent::from_run(&first)?
    } else {
        None
    };
    let mut out = vec![first];
    for &lambda in &lambdas[1..] {
        let mut config = variant(base, mode, seed, lambda)?;
        let mut spec = RunSpec::new(label(mode, seed, lambda), config.clone());
        if sweep.chain {
            match &root {
                Some(parent) => {
                    config.train.epochs = sweep.chain_epochs(&base.train);
                    spec.config = config;
                    spec.parent = Some(parent.clone());
                }
                // no checkpoint to chain from: the whole group failed
                None => continue,
            }
        }
        out.push(execute(&spec, dir)?);
    }
    Ok(out)
}

fn fine_tune_from_standard(
    base: &TrainConfig,
    standard: &RunResult,
    dir: &Path,
) -> Result<Option<RunResult>> {
    let Some(parent) = Parent::from_run(standard)? else {
        return Ok(None);
    };
    let mut config = standard.manifest.config.clone();
    config.train = TrainConfig::fine_tune_preset(&TrainConfig {
        seed: standard.manifest.seed,
        ..base.clone()
    });
    let mut spec = RunSpec::new(
        label(
            Mode::Solution2,
            standard.manifest.seed,
            standard.manifest.lambda,
        ),
        config,
    );
    spec.parent = Some(parent);
    execute(&spec, dir).map(Some)
}

fn curves(runs: &[RunResult], dir: &Path) -> Result<(Vec<CurveEntry>, Vec<BdRateEntry>)> {
    let mut groups: BTreeMap<(Mode, u64), Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.manifest.mode, r.manifest.seed))
            .or_default()
            .push(r);
    }
    let mut curves = Vec::new();
    let mut built: BTreeMap<(Mode, u64), std::result::Result<RDCurve, String>> = BTreeMap::new();
    for ((mode, seed), group) in groups {
        let points: Option<Vec<RDPoint>> = group
            .iter()
            .map(|r| {
                let e = r.manifest.final_eval.as_ref()?;
                (r.manifest.lambda.is_some() && r.manifest.status == RunStatus::Completed)
                    .then_some(RDPoint {
                        rate: e.rate,
                        quality: e.quality_db?,
                    })
            })
            .collect();
        let Some(points) = points else { continue };
        if points.len() < 2 {
            continue;
        }
        let file = dir.join(format!("curve-{}-seed{seed}.csv", mode.as_str()));
        let mut raw = points.clone();
        raw.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        write_points_csv(&raw, &file)?;
        built.insert(
            (mode, seed),
            RDCurve::new(mode.as_str(), points).map_err(|e| e.to_string()),
        );
        curves.push(CurveEntry {
            mode,
            seed,
            file,
            points: raw,
        });
    }
    let mut reports = Vec::new();
    for ((mode, seed), curve) in &built {
        if *mode == Mode::Standard {
            continue;
        }
        let Some(anchor) = built.get(&(Mode::Standard, *seed)) else {
            continue;
        };
        let result = match (anchor, curve) {
            (Ok(a), Ok(t)) => bd_rate(a, t).map_err(|e| e.to_string()),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        reports.push(BdRateEntry {
            mode: *mode,
            seed: *seed,
            bd_rate_percent: result.as_ref().ok().copied(),
            error: result.err(),
        });
    }
    Ok((curves, reports))
}

/// Points as measured, even when they do not form a valid curve.
fn write_points_csv(points: &[RDPoint], path: &Path) -> Result<()> {
    match RDCurve::new("sweep", points.to_vec()) {
        Ok(curve) => write_curve_csv(&curve, path),
        Err(_) => {
            let mut text = String::from("rate,quality\n");
            for p in points {
                text.push_str(&format!("{},{}\n", p.rate, p.quality));
            }
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn run_sweep(config: &ExperimentConfig, root: &Path) -> Result<SweepSummary> {
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("the sweep command needs a [sweep] section".into()))?;
    let fingerprint = config.fingerprint();
    let dir = create_run_dir(root, "sweep-", &fingerprint)?;
    let pool = pool(sweep.workers)?;

    let s2_from_standard = sweep.solution2_from_standard && sweep.modes.contains(&Mode::Solution2);
    let groups: Vec<(Mode, u64)> = sweep
        .modes
        .iter()
        .filter(|m| !(s2_from_standard && **m == Mode::Solution2))
        .flat_map(|m| sweep.seeds.iter().map(move |s| (*m, *s)))
        .collect();
    let first: Vec<Vec<RunResult>> = pool.install(|| {
        groups
            .par_iter()
            .map(|(mode, seed)| run_group(config, &sweep, *mode, *seed, &dir))
            .collect::<Result<_>>()
    })?;
    let mut runs: Vec<RunResult> = first.into_iter().flatten().collect();

    if s2_from_standard {
        let standard: Vec<&RunResult> = runs
            .iter()
            .filter(|r| r.manifest.mode == Mode::Standard)
            .collect();
        let tuned: Vec<Option<RunResult>> = pool.install(|| {
            standard
                .par_iter()
                .map(|r| fine_tune_from_standard(&config.train, r, &dir))
                .collect::<Result<_>>()
        })?;
        runs.extend(tuned.into_iter().flatten());
    }

    let (curves, bd) = curves(&runs, &dir)?;
    let failed = runs.iter().filter(|r| r.diverged()).count();
    let summary = SweepSummary {
        format: "rdbalance-sweep",
        config_fingerprint: fingerprint,
        dir: dir.clone(),
        runs: runs.iter().map(RunEntry::from).collect(),
        curves,
        bd_rate: bd,
        failed,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
