//! ttbench: run training sweeps over kernel variants, rank caps, and
//! learning rates, and write CSV/JSON reports with flop accounting.
//!
//! Exit codes: 0 success, 1 config error, 2 at least one training row
//! failed (the report is still written).

use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use ttbench::sweep::{load_spec, run_sweep, Format, RunSpec, SweepSpec};
use ttkit::train::TaskSpec;

#[derive(Parser, Debug)]
#[command(
    name = "ttbench",
    version,
    about = "TT-kernel training sweeps and flop reports"
)]
struct Cli {
    /// JSON sweep config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for the report files.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Comma-separated output formats: csv, json, or none.
    #[arg(long)]
    format: Option<String>,

    /// Base seed for every run without its own.
    #[arg(long)]
    seed: Option<u64>,

    /// Kernel variant for every run: dense, low_rank, or tt.
    #[arg(long)]
    variant: Option<String>,

    /// Core shape string for TT runs, e.g. "(2,2,12)x(2,2,32)".
    #[arg(long)]
    modes: Option<String>,

    /// Rank cap for TT runs.
    #[arg(long)]
    max_rank: Option<usize>,

    /// Inner dimension for low-rank runs.
    #[arg(long)]
    svd_dim: Option<usize>,

    /// Learning rate for every run.
    #[arg(long)]
    lr: Option<f64>,

    /// Training steps for every run.
    #[arg(long)]
    steps: Option<u64>,

    /// Write 0 in the wall-time column so reruns are byte-identical.
    #[arg(long)]
    suppress_timing: bool,
}

fn default_spec() -> SweepSpec {
    SweepSpec {
        task: TaskSpec {
            vocab_size: 16,
            seq_len: 8,
            batch: 16,
            hidden_size: 32,
        },
        steps: 2000,
        seed: 42,
        warm_steps: 6000,
        halve_every: 600,
        runs: vec![RunSpec {
            variant: "dense".into(),
            modes: None,
            max_rank: None,
            svd_dim: None,
            lr: 1e-3,
            seed: None,
            steps: None,
        }],
        flop_layers: None,
        out_dir: None,
        formats: vec![Format::Csv, Format::Json],
        suppress_timing: false,
    }
}

fn parse_formats(text: &str) -> Result<Vec<Format>, String> {
    if text == "none" || text.is_empty() {
        return Ok(vec![]);
    }
    text.split(',')
        .map(|part| match part.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        })
        .collect()
}

fn build_spec(cli: &Cli) -> Result<SweepSpec, String> {
    let mut spec = match &cli.config {
        Some(path) => load_spec(path)?,
        None => default_spec(),
    };
    if let Some(out) = &cli.out {
        spec.out_dir = Some(out.clone());
    }
    if let Some(format) = &cli.format {
        spec.formats = parse_formats(format)?;
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(steps) = cli.steps {
        spec.steps = steps;
        for run in &mut spec.runs {
            run.steps = None;
        }
    }
    for run in &mut spec.runs {
        if let Some(variant) = &cli.variant {
            run.variant = variant.clone();
        }
        if let Some(modes) = &cli.modes {
            run.modes = Some(modes.clone());
        }
        if let Some(max_rank) = cli.max_rank {
            run.max_rank = Some(max_rank);
        }
        if let Some(svd_dim) = cli.svd_dim {
            run.svd_dim = Some(svd_dim);
        }
        if let Some(lr) = cli.lr {
            run.lr = lr;
        }
    }
    if cli.suppress_timing {
        spec.suppress_timing = true;
    }
    if spec.out_dir.is_none() && !spec.formats.is_empty() {
        spec.out_dir = Some(PathBuf::from("ttbench_out"));
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match build_spec(&cli) {
        Ok(spec) => spec,
        Err(message) => {
            eprintln!("config error: {message}");
            return ExitCode::from(1);
        }
    };
    let outcome = match run_sweep(&spec) {
        Ok(outcome) => outcome,
        Err(err) => {
            eprintln!("config error: {err}");
            return ExitCode::from(1);
        }
    };

    println!("rank_dist,modes,lr,accuracy,params,flop_percent,wall_time_s");
    for row in &outcome.report.rows {
        let accuracy = row
            .accuracy
            .map(|a| a.to_string())
            .unwrap_or_else(|| "-".into());
        println!(
            "{},{},{},{},{},{},{}",
            row.rank_dist,
            row.modes,
            row.lr,
            accuracy,
            row.params,
            row.flop_percent,
            row.wall_time_s
        );
    }
    for (i, err) in outcome.row_errors.iter().enumerate() {
        if let Some(err) = err {
            eprintln!("row {i} failed: {err}");
        }
    }
    for path in &outcome.written {
        eprintln!("wrote {}", path.display());
    }
    if outcome.any_failed() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
