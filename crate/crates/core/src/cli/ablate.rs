use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{create_run_dir, execute, write_json, Parent, RunResult, RunSpec};
use super::sweep::{pool, RunEntry, SUMMARY_FILE};
use crate::error::{Error, Result};
use crate::trainer::{Mode, TrainConfig};

/// Logit decay values of the weight-decay ablation, in run order.
pub const GAMMA_SWEEP: [f64; 6] = [0.01, 0.015, 0.005, 0.001, 0.0005, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Preset {
    /// Balanced runs with and without the `c_t` renormalization.
    RenormOff,
    /// Solution 1 across the logit-decay grid; `γ = 0` is expected to fail.
    GammaSweep,
    /// Solution 1 as a fine-tuner and Solution 2 from scratch.
    CrossValidation,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::RenormOff => "renorm_off",
            Preset::GammaSweep => "gamma_sweep",
            Preset::CrossValidation => "cross_validation",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "renorm_off" => Ok(Preset::RenormOff),
            "gamma_sweep" => Ok(Preset::GammaSweep),
            "cross_validation" => Ok(Preset::CrossValidation),
            other => Err(Error::Config(format!("unknown ablation preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationEntry {
    #[serde(flatten)]
    pub run: RunEntry,
    pub renormalize: bool,
    pub renorm_fixed_to_one: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub fine_tuned: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationSummary {
    pub format: &'static str,
    pub preset: Preset,
    pub config_fingerprint: String,
    pub dir: PathBuf,
    pub runs: Vec<AblationEntry>,
    /// Runs that diverged without being expected to.
    pub unexpected_failures: usize,
}

/// A run that starts from another run's checkpoint.
struct Derived {
    spec: RunSpec,
    from: &'static str,
}

fn scratch(base: &ExperimentConfig, label: &str, edit: impl FnOnce(&mut TrainConfig)) -> RunSpec {
    let mut config = base.clone();
    config.sweep = None;
    config.train.fine_tune_from = None;
    edit(&mut config.train);
    RunSpec::new(label, config)
}

fn tuned(base: &ExperimentConfig, label: &str, mode: Mode, renormalize: bool) -> RunSpec {
    scratch(base, label, |t| {
        *t = TrainConfig {
            mode,
            renormalize,
            ..TrainConfig::fine_tune_preset(t)
        }
    })
}

fn plan(preset: Preset, base: &ExperimentConfig) -> (Vec<RunSpec>, Vec<Derived>) {
    let mode = |m: Mode| move |t: &mut TrainConfig| t.mode = m;
    match preset {
        Preset::RenormOff => (
            vec![
                scratch(base, "standard", mode(Mode::Standard)),
                scratch(base, "solution1", mode(Mode::Solution1)),
                scratch(base, "solution1-no-renorm", |t| {
                    t.mode = Mode::Solution1;
                    t.renormalize = false;
                }),
            ],
            vec![
                Derived {
                    spec: tuned(base, "solution2", Mode::Solution2, true),
                    from: "standard",
                },
                Derived {
                    spec: tuned(base, "solution2-no-renorm", Mode::Solution2, false),
                    from: "standard",
                },
            ],
        ),
        Preset::GammaSweep => (
            GAMMA_SWEEP
                .iter()
                .map(|&g| {
                    let mut spec = scratch(base, &format!("solution1-gamma{g}"), |t| {
                        t.mode = Mode::Solution1;
                        t.solution1.gamma = g;
                    });
                    spec.expected_divergent = g == 0.0;
                    spec
                })
                .collect(),
            Vec::new(),
        ),
        Preset::CrossValidation => (
            vec![
                scratch(base, "standard", mode(Mode::Standard)),
                scratch(base, "solution1", mode(Mode::Solution1)),
                scratch(base, "solution2-scratch", mode(Mode::Solution2)),
            ],
            vec![
                Derived {
                    spec: tuned(base, "solution2", Mode::Solution2, base.train.renormalize),
                    from: "standard",
                },
                Derived {
                    spec: tuned(
                        base,
                        "solution1-fine-tune",
                        Mode::Solution1,
                        base.train.renormalize,
                    ),
                    from: "standard",
                },
            ],
        ),
    }
}

fn entry(r: &RunResult) -> AblationEntry {
    let m = &r.manifest;
    AblationEntry {
        run: RunEntry::from(r),
        renormalize: m.renormalize,
        renorm_fixed_to_one: m.renorm_fixed_to_one,
        gamma: (m.mode == Mode::Solution1).then_some(m.config.train.solution1.gamma),
        fine_tuned: m.parent.is_some(),
    }
}

pub fn run_ablation(
    preset: Preset,
    config: &ExperimentConfig,
    root: &Path,
) -> Result<AblationSummary> {
    let fingerprint = config.fingerprint();
    let dir = create_run_dir(root, &format!("ablate-{}-", preset.as_str()), &fingerprint)?;
    let workers = config.sweep.as_ref().and_then(|s| s.workers);
    let pool = pool(workers)?;
    let (first, derived) = plan(preset, config);

    let mut runs: Vec<RunResult> = pool.install(|| {
        first
            .par_iter()
            .map(|spec| execute(spec, &dir))
            .collect::<Result<_>>()
    })?;
    let mut second = Vec::new();
    for d in derived {
        let source = runs
            .iter()
            .find(|r| r.manifest.label == d.from)
            .expect("planned source run");
        if let Some(parent) = Parent::from_run(source)? {
            second.push(RunSpec {
                parent: Some(parent),
                ..d.spec
            });
        }
    }
    let tuned: Vec<RunResult> = pool.install(|| {
        second
            .par_iter()
            .map(|spec| execute(spec, &dir))
            .collect::<Result<_>>()
    })?;
    runs.extend(tuned);

    let entries: Vec<AblationEntry> = runs.iter().map(entry).collect();
    let unexpected_failures = entries
        .iter()
        .filter(|e| e.run.status == super::run::RunStatus::Diverged && !e.run.expected_divergent)
        .count();
    let summary = AblationSummary {
        format: "rdbalance-ablation",
        preset,
        config_fingerprint: fingerprint,
        dir: dir.clone(),
        runs: entries,
        unexpected_failures,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
