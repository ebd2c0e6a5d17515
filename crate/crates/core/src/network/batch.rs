use crate::error::{Error, Result};

/// Target id marking a padded position that contributes no loss.
pub const PAD: u32 = u32::MAX;

/// A token stream cut into `batch` contiguous segments, one per row.
///
/// The `n − 1` (input, target) pairs of an `n`-token stream are shared out
/// so segment lengths differ by at most one; every pair is scored exactly
/// once. Shorter segments are padded at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStream {
    inputs: Vec<Vec<u32>>,
    targets: Vec<Vec<u32>>,
    steps: usize,
}

impl BatchStream {
    pub fn new(tokens: &[u32], batch: usize, vocab_size: usize) -> Result<BatchStream> {
        if batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if tokens.len() < 2 {
            return Err(Error::invalid(format!(
                "token stream needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
        let pairs = tokens.len() - 1;
        let batch = batch.min(pairs);
        let (base, extra) = (pairs / batch, pairs % batch);
        let steps = base + usize::from(extra > 0);
        let mut inputs = Vec::with_capacity(batch);
        let mut targets = Vec::with_capacity(batch);
        let mut start = 0;
        for b in 0..batch {
            let len = base + usize::from(b < extra);
            let mut x = tokens[start..start + len].to_vec();
            let mut y = tokens[start + 1..start + len + 1].to_vec();
            x.resize(steps, 0);
            y.resize(steps, PAD);
            inputs.push(x);
            targets.push(y);
            start += len;
        }
        Ok(BatchStream { inputs, targets, steps })
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.len()
    }

    /// Longest segment length in prediction steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Input ids, `batch_size × steps`.
    pub fn token_ids(&self) -> &[Vec<u32>] {
        &self.inputs
    }

    /// Number of scored (non-padded) positions.
    pub fn num_targets(&self) -> usize {
        self.targets
            .iter()
            .map(|row| row.iter().filter(|&&y| y != PAD).count())
            .sum()
    }

    /// Consecutive windows of at most `len` steps.
    pub fn windows(&self, len: usize) -> impl Iterator<Item = Window> + '_ {
        let len = len.max(1);
        (0..self.steps).step_by(len).map(move |s| self.window(s, len))
    }

    pub fn num_windows(&self, len: usize) -> usize {
        self.steps.div_ceil(len.max(1))
    }

    fn window(&self, start: usize, len: usize) -> Window {
        let end = (start + len).min(self.steps);
        let batch = self.batch_size();
        let steps = end - start;
        let mut inputs = Vec::with_capacity(steps * batch);
        let mut targets = Vec::with_capacity(steps * batch);
        for t in start..end {
            for b in 0..batch {
                inputs.push(self.inputs[b][t]);
                targets.push(self.targets[b][t]);
            }
        }
        Window {
            inputs,
            targets,
            steps,
            batch,
        }
    }
}

/// `steps × batch` slice of a [`BatchStream`], stored time-major: position
/// `(t, b)` lives at index `t·batch + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub steps: usize,
    pub batch: usize,
}

impl Window {
    /// Builds a window from per-stream rows (`rows[b][t]`); the target of
    /// each position is the next token of its row, so a row of `L + 1`
    /// tokens yields `L` steps.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Window> {
        let batch = rows.len();
        let len = rows.first().map_or(0, |r| r.len());
        if batch == 0 || len < 2 {
            return Err(Error::invalid("window needs at least one row of two or more tokens"));
        }
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::shape("window rows must all have the same length"));
        }
        let steps = len - 1;
        let mut inputs = Vec::with_capacity(steps * batch);
        let mut targets = Vec::with_capacity(steps * batch);
        for t in 0..steps {
            for row in rows {
                inputs.push(row[t]);
                targets.push(row[t + 1]);
            }
        }
        Ok(Window {
            inputs,
            targets,
            steps,
            batch,
        })
    }

    pub fn positions(&self) -> usize {
        self.steps * self.batch
    }

    pub fn num_targets(&self) -> usize {
        self.targets.iter().filter(|&&y| y != PAD).count()
    }

    pub(crate) fn check(&self, vocab_size: usize) -> Result<()> {
        let n = self.steps * self.batch;
        if n == 0 || self.inputs.len() != n || self.targets.len() != n {
            return Err(Error::shape(format!(
                "window of {} steps x {} streams needs {n} inputs and targets, got {} and {}",
                self.steps,
                self.batch,
                self.inputs.len(),
                self.targets.len()
            )));
        }
        for &id in self.inputs.iter().chain(self.targets.iter().filter(|&&y| y != PAD)) {
            if id as usize >= vocab_size {
                return Err(Error::TokenOutOfRange { id, vocab_size });
            }
        }
        Ok(())
    }
}
