//! Config-driven sweeps: each run trains one kernel variant on the copy
//! task and contributes one report row with its rank distribution, mode
//! string, accuracy, parameter count, and flop percentage.
//!
//! Rows run on a small worker pool (capped by the TTK_THREADS environment
//! variable); every row is seeded independently, so scheduling cannot
//! change any result. A row that fails is recorded and the sweep carries
//! on.

use crate::report::{ReportError, SweepReport, SweepRow};
use crate::shapes::{format_shape_string, parse_shape_string, ShapeParseError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;
use ttkit::linops::{build_report, FlopReport, LayerSpec, LinopError, VariantFlopSpec};
use ttkit::lstm::VariantSpec;
use ttkit::train::{train_loop, TaskSpec, TrainConfig, TrainError};
use ttkit::tt::RankDistribution;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one run")]
    EmptyRuns,
    #[error("run {index}: unknown variant {variant:?} (expected dense, low_rank, or tt)")]
    UnknownVariant { index: usize, variant: String },
    #[error("run {index}: variant {variant} requires field {field}")]
    MissingField {
        index: usize,
        variant: &'static str,
        field: &'static str,
    },
    #[error("run {index}: bad shape string: {source}")]
    Shape {
        index: usize,
        #[source]
        source: ShapeParseError,
    },
    #[error("cannot prepare output directory {path}: {source}")]
    OutputDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Flops(#[from] LinopError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// One sweep row before execution. `seed` and `steps` fall back to the
/// sweep-level values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub variant: String,
    #[serde(default)]
    pub modes: Option<String>,
    #[serde(default)]
    pub max_rank: Option<usize>,
    #[serde(default)]
    pub svd_dim: Option<usize>,
    pub lr: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub steps: Option<u64>,
}

/// The whole sweep: shared task and schedule, the runs, optional extra
/// flop-report layers, and output settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub task: TaskSpec,
    pub steps: u64,
    pub seed: u64,
    #[serde(default = "default_warm_steps")]
    pub warm_steps: u64,
    #[serde(default = "default_halve_every")]
    pub halve_every: u64,
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub flop_layers: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub formats: Vec<Format>,
    /// Writes 0 in the wall-time column so reruns with the same seeds are
    /// byte-identical.
    #[serde(default)]
    pub suppress_timing: bool,
}

fn default_warm_steps() -> u64 {
    6000
}

fn default_halve_every() -> u64 {
    600
}

/// Report plus per-row failure messages (aligned with the rows) and the
/// files written.
#[derive(Debug)]
pub struct SweepOutcome {
    pub report: SweepReport,
    pub row_errors: Vec<Option<String>>,
    pub written: Vec<PathBuf>,
}

impl SweepOutcome {
    pub fn any_failed(&self) -> bool {
        self.row_errors.iter().any(Option::is_some)
    }
}

fn variant_for_run(index: usize, run: &RunSpec) -> Result<VariantSpec, SweepError> {
    match run.variant.as_str() {
        "dense" => Ok(VariantSpec::Dense),
        "low_rank" => {
            let svd_dim = run.svd_dim.ok_or(SweepError::MissingField {
                index,
                variant: "low_rank",
                field: "svd_dim",
            })?;
            Ok(VariantSpec::LowRank { svd_dim })
        }
        "tt" => {
            let modes = run.modes.as_deref().ok_or(SweepError::MissingField {
                index,
                variant: "tt",
                field: "modes",
            })?;
            let max_rank = run.max_rank.ok_or(SweepError::MissingField {
                index,
                variant: "tt",
                field: "max_rank",
            })?;
            let (row_modes, col_modes) =
                parse_shape_string(modes).map_err(|source| SweepError::Shape { index, source })?;
            Ok(VariantSpec::Tt {
                row_modes,
                col_modes,
                max_rank,
            })
        }
        other => Err(SweepError::UnknownVariant {
            index,
            variant: other.to_string(),
        }),
    }
}

fn train_config(spec: &SweepSpec, run: &RunSpec, variant: VariantSpec) -> TrainConfig {
    TrainConfig {
        variant,
        base_rate: run.lr,
        seed: run.seed.unwrap_or(spec.seed),
        task: spec.task,
        steps: run.steps.unwrap_or(spec.steps),
        warm_steps: spec.warm_steps,
        halve_every: spec.halve_every,
    }
}

/// Kernel-layer flop spec for one run: the gate multiply of the cell, with
/// the batch as K.
fn kernel_layer(task: &TaskSpec, variant: &VariantSpec) -> LayerSpec {
    let m = task.vocab_size + task.hidden_size;
    let n = 4 * task.hidden_size;
    let flop_variant = match variant {
        VariantSpec::Dense => VariantFlopSpec::Dense,
        VariantSpec::LowRank { svd_dim } => VariantFlopSpec::LowRank { svd_dim: *svd_dim },
        VariantSpec::Tt {
            row_modes,
            col_modes,
            max_rank,
        } => VariantFlopSpec::Tt {
            row_modes: row_modes.clone(),
            col_modes: col_modes.clone(),
            max_rank: *max_rank,
        },
    };
    LayerSpec {
        name: "lstm_kernel".into(),
        m,
        n,
        k: task.batch,
        variant: flop_variant,
    }
}

fn row_skeleton(task: &TaskSpec, variant: &VariantSpec, lr: f64) -> Result<SweepRow, SweepError> {
    let m = task.vocab_size + task.hidden_size;
    let n = 4 * task.hidden_size;
    let (rank_dist, modes, params) = match variant {
        VariantSpec::Dense => ("dense".to_string(), "-".to_string(), (m * n) as u64),
        VariantSpec::LowRank { svd_dim } => (
            format!("svd:{svd_dim}"),
            "-".to_string(),
            (svd_dim * (m + n)) as u64,
        ),
        VariantSpec::Tt {
            row_modes,
            col_modes,
            max_rank,
        } => {
            let ranks = RankDistribution::capped(row_modes, col_modes, *max_rank);
            let r = ranks.ranks();
            let params: u64 = (0..row_modes.len())
                .map(|k| (r[k] * row_modes[k] * col_modes[k] * r[k + 1]) as u64)
                .sum();
            (
                ranks.to_string(),
                format_shape_string(row_modes, col_modes),
                params,
            )
        }
    };
    let flops = build_report(&[kernel_layer(task, variant)])?;
    Ok(SweepRow {
        rank_dist,
        modes,
        lr,
        accuracy: None,
        params,
        flop_percent: flops.percent,
        wall_time_s: 0.0,
    })
}

fn worker_count(rows: usize) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("TTK_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(hw);
    cap.min(rows).max(1)
}

/// Validates every run, executes them, and writes the requested formats.
/// Config problems and an unpreparable output directory abort before any
/// training; a failing row only empties its accuracy cell.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome, SweepError> {
    if spec.runs.is_empty() {
        return Err(SweepError::EmptyRuns);
    }
    let mut configs = Vec::with_capacity(spec.runs.len());
    for (index, run) in spec.runs.iter().enumerate() {
        let variant = variant_for_run(index, run)?;
        configs.push((train_config(spec, run, variant.clone()), variant, run.lr));
    }

    let out_dir = if spec.formats.is_empty() {
        None
    } else {
        let dir = spec.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|source| SweepError::OutputDir {
            path: dir.clone(),
            source,
        })?;
        Some(dir)
    };

    // Execute rows; results land in their slot regardless of scheduling.
    let results: Vec<Option<Result<ttkit::train::TrainResult, TrainError>>> = {
        let slots: Mutex<Vec<Option<Result<ttkit::train::TrainResult, TrainError>>>> =
            Mutex::new((0..configs.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = worker_count(configs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= configs.len() {
                        break;
                    }
                    let outcome = train_loop(&configs[idx].0);
                    slots.lock().unwrap()[idx] = Some(outcome);
                });
            }
        });
        slots.into_inner().unwrap()
    };

    let mut rows = Vec::with_capacity(configs.len());
    let mut row_errors = Vec::with_capacity(configs.len());
    for ((config, variant, lr), result) in configs.iter().zip(results) {
        let mut row = row_skeleton(&config.task, variant, *lr)?;
        match result.expect("every slot filled") {
            Ok(res) => {
                row.accuracy = Some(res.final_accuracy);
                row.wall_time_s = if spec.suppress_timing {
                    0.0
                } else {
                    res.wall_time_s
                };
                row_errors.push(None);
            }
            Err(err) => {
                row_errors.push(Some(err.to_string()));
            }
        }
        rows.push(row);
    }
    let report = SweepReport { rows };

    let mut written = Vec::new();
    if let Some(dir) = out_dir {
        for format in &spec.formats {
            let (name, payload) = match format {
                Format::Csv => ("report.csv", report.to_csv()?),
                Format::Json => ("report.json", report.to_json()?),
            };
            let path = dir.join(name);
            std::fs::write(&path, payload).map_err(|source| SweepError::Write {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        if let Some(layers) = &spec.flop_layers {
            let flops = report_flops(layers)?;
            for format in &spec.formats {
                let (name, payload) = match format {
                    Format::Csv => ("flop_report.csv", flops.to_csv()),
                    Format::Json => ("flop_report.json", flops.to_json()),
                };
                let path = dir.join(name);
                std::fs::write(&path, payload).map_err(|source| SweepError::Write {
                    path: path.clone(),
                    source,
                })?;
                written.push(path);
            }
        }
    }

    Ok(SweepOutcome {
        report,
        row_errors,
        written,
    })
}

/// Flop accounting for arbitrary layer descriptions.
pub fn report_flops(layers: &[LayerSpec]) -> Result<FlopReport, SweepError> {
    Ok(build_report(layers)?)
}

/// Loads a sweep spec from a JSON document.
pub fn load_spec(path: &Path) -> Result<SweepSpec, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}
