//! Acceptance suite: every criterion runs at its stated tolerance and time
//! budget and prints one pass/fail line.
//!
//! Run with `cargo test -p ttbench --test acceptance -- --nocapture` to see
//! the per-criterion lines and the trend report.
#![allow(clippy::needless_range_loop)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use ttbench::sweep::{run_sweep, RunSpec, SweepSpec};
use ttkit::linops::{
    dense_flops, dense_forward, low_rank_flops, low_rank_forward, tt_flops, tt_forward,
    LowRankFactors,
};
use ttkit::lstm::VariantSpec;
use ttkit::tensor::{DenseMatrix, DenseTensor};
use ttkit::train::{
    loss_and_gradients, train_loop, CopyTask, LRSchedule, ModelParams, TaskSpec, TrainConfig,
};
use ttkit::tt::{decompose, RankDistribution, TTCore, TTMatrix};

fn report(criterion: u32, name: &str, pass: bool, details: &str) {
    println!(
        "[criterion {criterion}] {name}: {} ({details})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} {name}: {details}");
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    let denom = b.frobenius_norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

fn random_tt(rng: &mut impl Rng, row_modes: &[usize], col_modes: &[usize], cap: usize) -> TTMatrix {
    let ranks = RankDistribution::capped(row_modes, col_modes, cap);
    let r = ranks.ranks();
    let cores = (0..row_modes.len())
        .map(|k| {
            let shape = vec![r[k], row_modes[k], col_modes[k], r[k + 1]];
            let len = shape.iter().product();
            let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            TTCore::new(DenseTensor::new(shape, data).unwrap()).unwrap()
        })
        .collect();
    TTMatrix::new(cores).unwrap()
}

#[test]
fn criterion_1_core_shape_fidelity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random_matrix(&mut rng, 1024, 2048);
    let tt = decompose(&w, &[2, 2, 256], &[2, 2, 512], 4).unwrap();
    let shapes: Vec<_> = tt.cores().iter().map(|c| c.shape()).collect();
    let want = vec![(1, 2, 2, 4), (4, 2, 2, 4), (4, 256, 512, 1)];
    let elapsed = start.elapsed();
    let pass = shapes == want && elapsed < Duration::from_secs(10);
    report(
        1,
        "core-shape fidelity",
        pass,
        &format!("shapes {shapes:?}, {elapsed:.2?}"),
    );
}

const SPLITS: &[(&[usize], &[usize])] = &[
    (&[2, 4], &[4, 2]),
    (&[8, 8], &[8, 8]),
    (&[2, 2, 2], &[2, 2, 2]),
    (&[4, 4, 4], &[4, 4, 2]),
    (&[2, 2, 16], &[2, 2, 8]),
    (&[2, 4, 8], &[8, 4, 2]),
    (&[3, 2], &[2, 3]),
    (&[2, 2, 2, 2], &[2, 2, 2, 2]),
    (&[16, 4], &[4, 16]),
    (&[2, 3, 2], &[3, 2, 2]),
];

#[test]
fn criterion_2_tt_exactness_and_truncation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_exact = 0.0f64;
    let mut worst_margin = f64::NEG_INFINITY;
    for trial in 0..200 {
        let (row_modes, col_modes) = SPLITS[trial % SPLITS.len()];
        let rows: usize = row_modes.iter().product();
        let cols: usize = col_modes.iter().product();
        let w = random_matrix(&mut rng, rows, cols);
        let tt = decompose(&w, row_modes, col_modes, rows.max(cols)).unwrap();
        worst_exact = worst_exact.max(rel_err(&tt.reconstruct(), &w));

        let cap = 1 + trial % 3;
        let (rounded, bond_errors) = tt.round_with_errors(cap).unwrap();
        let measured = tt
            .reconstruct()
            .sub(&rounded.reconstruct())
            .unwrap()
            .frobenius_norm();
        let bound: f64 = bond_errors.iter().map(|e| e * e).sum::<f64>().sqrt();
        worst_margin = worst_margin.max(measured - bound);
    }
    let elapsed = start.elapsed();
    let pass = worst_exact <= 1e-9 && worst_margin <= 1e-12 && elapsed < Duration::from_secs(60);
    report(
        2,
        "TT exactness and truncation",
        pass,
        &format!(
            "worst full-rank error {worst_exact:.2e}, worst bound margin {worst_margin:.2e}, {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_3_forward_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_tt = 0.0f64;
    for trial in 0..100 {
        let (row_modes, col_modes) = SPLITS[trial % SPLITS.len()];
        let rows: usize = row_modes.iter().product();
        let cols: usize = col_modes.iter().product();
        let tt = random_tt(&mut rng, row_modes, col_modes, 1 + trial % 4);
        let x = random_matrix(&mut rng, 1 + trial % 4, rows);
        let b: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = tt_forward(&x, &tt, &b).unwrap();
        let want = dense_forward(&x, &tt.reconstruct(), &b).unwrap();
        worst_tt = worst_tt.max(rel_err(&got, &want));
    }
    // Table 1 core shapes at rank cap 4, batch 4.
    {
        let tt = random_tt(&mut rng, &[2, 2, 256], &[2, 2, 512], 4);
        let x = random_matrix(&mut rng, 4, 1024);
        let b = vec![0.0; 2048];
        let got = tt_forward(&x, &tt, &b).unwrap();
        let want = dense_forward(&x, &tt.reconstruct(), &b).unwrap();
        worst_tt = worst_tt.max(rel_err(&got, &want));
    }

    let mut worst_lr = 0.0f64;
    for trial in 0..100 {
        let m = 2 + trial % 8;
        let n = 2 + (trial / 2) % 8;
        let d = 1 + trial % m.min(n);
        let k = 1 + trial % 4;
        let x = random_matrix(&mut rng, k, m);
        let f = LowRankFactors::new(random_matrix(&mut rng, m, d), random_matrix(&mut rng, d, n))
            .unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = low_rank_forward(&x, &f, &b).unwrap();
        let want = dense_forward(&x, &f.w1().matmul(f.w2()).unwrap(), &b).unwrap();
        worst_lr = worst_lr.max(rel_err(&got, &want));
    }
    let elapsed = start.elapsed();
    let pass = worst_tt <= 1e-8 && worst_lr <= 1e-10 && elapsed < Duration::from_secs(30);
    report(
        3,
        "forward equivalence",
        pass,
        &format!("worst TT {worst_tt:.2e}, worst low-rank {worst_lr:.2e}, {elapsed:.2?}"),
    );
}

/// Triple-loop dense forward counting 2 flops per multiply-add.
fn counted_dense(x: &DenseMatrix, w: &DenseMatrix) -> (DenseMatrix, u64) {
    let mut count = 0u64;
    let mut y = DenseMatrix::zeros(x.rows(), w.cols());
    for i in 0..x.rows() {
        for j in 0..w.cols() {
            let mut acc = 0.0;
            for k in 0..w.rows() {
                acc += x.get(i, k) * w.get(k, j);
                count += 2;
            }
            y.set(i, j, acc);
        }
    }
    (y, count)
}

/// Counter-instrumented left-to-right TT contraction with explicit index
/// arithmetic, independent of the library implementation.
fn counted_tt(x: &DenseMatrix, tt: &TTMatrix) -> (DenseMatrix, u64) {
    let mut count = 0u64;
    let batch = x.rows();
    let mut running = x.data().to_vec();
    for k in 0..tt.order() {
        let (rl, m, n, rr) = tt.cores()[k].shape();
        let suffix: usize = tt.row_modes()[k + 1..].iter().product();
        let prefix: usize = tt.col_modes()[..k].iter().product();
        let c = suffix * prefix;
        let core = tt.cores()[k].tensor().data();
        let mut next = vec![0.0; batch * c * n * rr];
        for ia in 0..batch {
            for ic in 0..c {
                for jn in 0..n {
                    for jr in 0..rr {
                        let mut acc = 0.0;
                        for ir in 0..rl {
                            for ib in 0..m {
                                acc += running[((ia * m + ib) * c + ic) * rl + ir]
                                    * core[((ir * m + ib) * n + jn) * rr + jr];
                                count += 2;
                            }
                        }
                        next[((ia * c + ic) * n + jn) * rr + jr] = acc;
                    }
                }
            }
        }
        running = next;
    }
    (DenseMatrix::new(batch, tt.cols(), running).unwrap(), count)
}

#[test]
fn criterion_4_flop_formula_conformance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pass = true;
    let mut notes = Vec::new();

    // Dense and low-rank counters across a small matrix of configurations.
    for (m, n, k, d) in [
        (4usize, 5usize, 3usize, 2usize),
        (8, 8, 1, 4),
        (16, 12, 7, 3),
        (1, 1, 1, 1),
    ] {
        let x = random_matrix(&mut rng, k, m);
        let w = random_matrix(&mut rng, m, n);
        let (_, dense_count) = counted_dense(&x, &w);
        pass &= dense_count == dense_flops(m, n, k);
        let w1 = random_matrix(&mut rng, m, d.min(m).min(n));
        let w2 = random_matrix(&mut rng, d.min(m).min(n), n);
        let (z, c1) = counted_dense(&x, &w1);
        let (_, c2) = counted_dense(&z, &w2);
        pass &= c1 + c2 == low_rank_flops(m, n, k, d.min(m).min(n));
    }

    // TT counters across mode splits, ranks, and batches.
    for (row_modes, col_modes, cap, k) in [
        (vec![2usize, 4], vec![3usize, 2], 2usize, 3usize),
        (vec![2, 2, 2], vec![2, 2, 2], 4, 2),
        (vec![4, 2, 2], vec![2, 4, 2], 3, 5),
        (vec![2, 2, 2, 2], vec![2, 2, 2, 2], 2, 1),
    ] {
        let tt = random_tt(&mut rng, &row_modes, &col_modes, cap);
        let rows: usize = row_modes.iter().product();
        let x = random_matrix(&mut rng, k, rows);
        let (y_ref, counted) = counted_tt(&x, &tt);
        let formula = tt_flops(&row_modes, &col_modes, &tt.rank_distribution(), k);
        pass &= counted == formula;
        let y = tt_forward(&x, &tt, &vec![0.0; tt.cols()]).unwrap();
        pass &= rel_err(&y, &y_ref) <= 1e-12;
    }

    // Table 1 configuration at K = 1, re-verified by the instrumented run.
    let tt = random_tt(&mut rng, &[2, 2, 256], &[2, 2, 512], 4);
    let x = random_matrix(&mut rng, 1, 1024);
    let (_, tt_count) = counted_tt(&x, &tt);
    let ranks = RankDistribution::capped(&[2, 2, 256], &[2, 2, 512], 4);
    pass &= tt_count == 4_276_224;
    pass &= tt_flops(&[2, 2, 256], &[2, 2, 512], &ranks, 1) == 4_276_224;
    pass &= dense_flops(1024, 2048, 1) == 4_194_304;
    notes.push(format!("table-1 counted {tt_count} vs dense 4194304"));

    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    notes.push(format!("{elapsed:.2?}"));
    report(4, "flop-formula conformance", pass, &notes.join(", "));
}

#[test]
fn criterion_5_parameter_accounting() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tt = random_tt(&mut rng, &[2, 2, 256], &[2, 2, 512], 4);
    let params = tt.parameter_count();
    let dense = 1024 * 2048;
    let ratio = dense as f64 / params as f64;
    let elapsed = start.elapsed();
    let pass = params == 524_368
        && dense == 2_097_152
        && (ratio - 4.0).abs() < 0.01
        && elapsed < Duration::from_secs(1);
    report(
        5,
        "parameter accounting",
        pass,
        &format!("{params} vs {dense} ({ratio:.2}x), {elapsed:.2?}"),
    );
}

#[test]
fn criterion_6_gradient_correctness() {
    let start = Instant::now();
    let task = TaskSpec {
        vocab_size: 4,
        seq_len: 3,
        batch: 2,
        hidden_size: 4,
    };
    let variants = [
        VariantSpec::Dense,
        VariantSpec::LowRank { svd_dim: 2 },
        VariantSpec::Tt {
            row_modes: vec![2, 2, 2],
            col_modes: vec![2, 2, 4],
            max_rank: 2,
        },
    ];
    let mut worst = 0.0f64;
    let mut coords = 0usize;
    for variant in &variants {
        let model = ModelParams::init(task.vocab_size, task.hidden_size, variant, 17).unwrap();
        let mut stream = CopyTask::new(task.vocab_size, task.seq_len, task.batch, 23);
        let batch = stream.next_batch();
        let (_, grads) = loss_and_gradients(&model, &batch).unwrap();
        let grad_leaves: Vec<Vec<f64>> = grads.leaves().iter().map(|l| l.to_vec()).collect();
        let eps = 1e-5;
        for (leaf_idx, leaf) in grad_leaves.iter().enumerate() {
            for coord in 0..leaf.len() {
                let mut plus = model.clone();
                plus.leaves_mut()[leaf_idx][coord] += eps;
                let mut minus = model.clone();
                minus.leaves_mut()[leaf_idx][coord] -= eps;
                let (lp, _) = loss_and_gradients(&plus, &batch).unwrap();
                let (lm, _) = loss_and_gradients(&minus, &batch).unwrap();
                let fd = (lp - lm) / (2.0 * eps);
                let analytic = leaf[coord];
                worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-6));
                coords += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-4 && elapsed < Duration::from_secs(120);
    report(
        6,
        "gradient correctness",
        pass,
        &format!(
            "{coords} coordinates over 3 variants, worst relative error {worst:.2e}, {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_7_schedule_exactness() {
    let start = Instant::now();
    let s = LRSchedule {
        base_rate: 0.0004,
        warm_steps: 6000,
        halve_every: 600,
        total_steps: 12_000,
    };
    let pass = s.rate(5999) == 0.0004
        && s.rate(6000) == 0.0002
        && s.rate(7200) == 0.00005
        && start.elapsed() < Duration::from_secs(1);
    report(
        7,
        "schedule exactness",
        pass,
        &format!(
            "rate(5999)={}, rate(6000)={}, rate(7200)={}",
            s.rate(5999),
            s.rate(6000),
            s.rate(7200)
        ),
    );
}

#[test]
fn criterion_8_desk_scale_training() {
    let task = TaskSpec {
        vocab_size: 16,
        seq_len: 8,
        batch: 16,
        hidden_size: 32,
    };
    let dense_config = TrainConfig {
        variant: VariantSpec::Dense,
        base_rate: 1e-3,
        seed: 42,
        task,
        steps: 2000,
        warm_steps: 6000,
        halve_every: 600,
    };
    let tt_config = TrainConfig {
        variant: VariantSpec::Tt {
            row_modes: vec![2, 2, 12],
            col_modes: vec![2, 2, 32],
            max_rank: 4,
        },
        ..dense_config.clone()
    };

    let t0 = Instant::now();
    let dense = train_loop(&dense_config).unwrap();
    let dense_time = t0.elapsed();
    let t1 = Instant::now();
    let tt = train_loop(&tt_config).unwrap();
    let tt_time = t1.elapsed();

    // Determinism: a second run must reproduce the curves bit for bit.
    let dense_again = train_loop(&dense_config).unwrap();
    let tt_again = train_loop(&tt_config).unwrap();
    let deterministic = dense.loss_curve == dense_again.loss_curve
        && dense.final_accuracy == dense_again.final_accuracy
        && tt.loss_curve == tt_again.loss_curve
        && tt.final_accuracy == tt_again.final_accuracy;

    let pass = dense.final_accuracy >= 0.95
        && tt.final_accuracy >= dense.final_accuracy - 0.05
        && dense_time < Duration::from_secs(300)
        && tt_time < Duration::from_secs(300)
        && deterministic;
    report(
        8,
        "desk-scale training",
        pass,
        &format!(
            "dense {:.4} in {dense_time:.2?}, TT rank-4 {:.4} in {tt_time:.2?}, deterministic {deterministic}",
            dense.final_accuracy, tt.final_accuracy
        ),
    );
}

#[test]
fn criterion_9_trend_echo_and_golden_sweep() {
    let ranks = [1usize, 2, 4];
    let rates = [0.0004f64, 0.0008, 0.0012];
    let runs: Vec<RunSpec> = ranks
        .iter()
        .flat_map(|&cap| {
            rates.iter().map(move |&lr| RunSpec {
                variant: "tt".into(),
                modes: Some("(2,2,12)x(2,2,32)".into()),
                max_rank: Some(cap),
                svd_dim: None,
                lr,
                seed: None,
                steps: None,
            })
        })
        .collect();
    let spec = SweepSpec {
        task: TaskSpec {
            vocab_size: 16,
            seq_len: 8,
            batch: 16,
            hidden_size: 32,
        },
        steps: 600,
        seed: 42,
        warm_steps: 6000,
        halve_every: 600,
        runs,
        flop_layers: None,
        out_dir: None,
        formats: vec![],
        suppress_timing: true,
    };

    let first = run_sweep(&spec).unwrap();
    let second = run_sweep(&spec).unwrap();
    let csv_a = first.report.to_csv().unwrap();
    let csv_b = second.report.to_csv().unwrap();
    let identical = csv_a == csv_b && !first.any_failed();

    // Archive the golden artifact under the workspace target directory.
    let golden_dir =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance");
    std::fs::create_dir_all(&golden_dir).unwrap();
    let golden_path = golden_dir.join("sweep_golden.csv");
    std::fs::write(&golden_path, &csv_a).unwrap();

    // The trend itself is reported, not asserted.
    let acc = |cap: usize, lr: f64| -> f64 {
        first
            .report
            .rows
            .iter()
            .find(|r| {
                r.lr == lr
                    && r.rank_dist
                        == RankDistribution::capped(&[2, 2, 12], &[2, 2, 32], cap).to_string()
            })
            .and_then(|r| r.accuracy)
            .unwrap()
    };
    let mut rank_trend_holds = true;
    for &lr in &rates {
        for pair in ranks.windows(2) {
            rank_trend_holds &= acc(pair[1], lr) >= acc(pair[0], lr);
        }
    }
    let mut rate_trend_holds = true;
    for &cap in &ranks {
        for pair in rates.windows(2) {
            rate_trend_holds &= acc(cap, pair[1]) >= acc(cap, pair[0]);
        }
    }
    println!("[criterion 9] trend report (not asserted):");
    for &cap in &ranks {
        let row: Vec<String> = rates
            .iter()
            .map(|&lr| format!("lr {lr}: {:.4}", acc(cap, lr)))
            .collect();
        println!("  rank cap {cap}: {}", row.join(", "));
    }
    println!(
        "  accuracy nondecreasing in rank cap: {rank_trend_holds}; in learning rate: {rate_trend_holds}"
    );

    report(
        9,
        "golden sweep determinism",
        identical,
        &format!(
            "two regenerations byte-identical: {identical}, archived {}",
            golden_path.display()
        ),
    );
}
