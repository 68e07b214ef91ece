//! Sequence copy task: uniform random tokens, one-hot encoded, with the
//! targets equal to the inputs. A deterministic stand-in for a real corpus
//! at desk scale.

use crate::tensor::DenseMatrix;
use crate::train::backprop::Batch;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Infinite deterministic stream of copy-task batches.
#[derive(Debug, Clone)]
pub struct CopyTask {
    vocab: usize,
    seq_len: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl CopyTask {
    /// `vocab` must be at least 2 so the task is nontrivial.
    pub fn new(vocab: usize, seq_len: usize, batch: usize, seed: u64) -> Self {
        assert!(vocab >= 2, "copy task needs vocab >= 2, got {vocab}");
        assert!(seq_len >= 1 && batch >= 1);
        Self {
            vocab,
            seq_len,
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// Draws the next batch; token order is fixed (step-major, then row) so
    /// a seed pins the entire stream.
    pub fn next_batch(&mut self) -> Batch {
        let mut inputs = Vec::with_capacity(self.seq_len);
        let mut targets = Vec::with_capacity(self.seq_len);
        for _ in 0..self.seq_len {
            let mut x = DenseMatrix::zeros(self.batch, self.vocab);
            let mut t = Vec::with_capacity(self.batch);
            for r in 0..self.batch {
                let token = self.rng.random_range(0..self.vocab);
                x.set(r, token, 1.0);
                t.push(token);
            }
            inputs.push(x);
            targets.push(t);
        }
        Batch { inputs, targets }
    }
}

impl Iterator for CopyTask {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        Some(self.next_batch())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_stream() {
        let mut a = CopyTask::new(8, 4, 3, 42);
        let mut b = CopyTask::new(8, 4, 3, 42);
        for _ in 0..5 {
            let ba = a.next_batch();
            let bb = b.next_batch();
            assert_eq!(ba.targets, bb.targets);
            for (x, y) in ba.inputs.iter().zip(&bb.inputs) {
                assert_eq!(x.data(), y.data());
            }
        }
    }

    #[test]
    fn targets_are_the_argmax_of_the_inputs() {
        let mut task = CopyTask::new(2, 1, 6, 7);
        let batch = task.next_batch();
        for r in 0..6 {
            let row = batch.inputs[0].row(r);
            let argmax = if row[0] >= row[1] { 0 } else { 1 };
            assert_eq!(batch.targets[0][r], argmax);
        }
    }

    #[test]
    fn token_distribution_is_uniform() {
        // 1e5 draws; every symbol frequency within one percentage point of
        // 1/V, plus a chi-square statistic far below the rejection region.
        let vocab = 8;
        let mut task = CopyTask::new(vocab, 10, 100, 1234);
        let mut counts = vec![0usize; vocab];
        let mut total = 0usize;
        while total < 100_000 {
            let batch = task.next_batch();
            for step in &batch.targets {
                for &t in step {
                    counts[t] += 1;
                    total += 1;
                }
            }
        }
        let expected = total as f64 / vocab as f64;
        let mut chi2 = 0.0;
        for &c in &counts {
            let freq = c as f64 / total as f64;
            assert!(
                (freq - 1.0 / vocab as f64).abs() <= 0.01,
                "symbol frequency {freq} drifts from uniform"
            );
            let diff = c as f64 - expected;
            chi2 += diff * diff / expected;
        }
        // 99.9th percentile of chi-square with 7 dof is about 24.3.
        assert!(chi2 < 24.3, "chi-square statistic {chi2}");
    }
}
