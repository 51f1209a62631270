use crate::error::{Error, Result};

/// The ego agent's record of `(observation ⊕ action one-hot)` rows over at
/// most `capacity` episodes, including the current (possibly empty) one.
///
/// Alongside the raw rows it caches, per episode, the sum of the encoder's
/// `f` outputs, so the mean embedding is available in `O(d_z)` per step.
/// The cache is only valid for the parameters it was computed with; call
/// [`crate::context::Encoder::refresh`] after a parameter update.
#[derive(Clone, Debug)]
pub struct Context {
    capacity: usize,
    input_dim: usize,
    d_z: usize,
    /// Flat `[num_items, input_dim]` rows.
    items: Vec<f64>,
    /// Item count at the end of every completed episode.
    episode_ends: Vec<usize>,
    /// Cached `f` sums of completed episodes.
    sums: Vec<Vec<f64>>,
    current_sum: Vec<f64>,
}

impl Context {
    pub fn new(capacity: usize, input_dim: usize, d_z: usize) -> Self {
        assert!(capacity >= 1);
        Context {
            capacity,
            input_dim,
            d_z,
            items: Vec::new(),
            episode_ends: Vec::with_capacity(capacity),
            sums: Vec::with_capacity(capacity),
            current_sum: vec![0.0; d_z],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn num_items(&self) -> usize {
        self.items.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn completed_episodes(&self) -> usize {
        self.episode_ends.len()
    }

    pub fn is_full(&self) -> bool {
        self.completed_episodes() >= self.capacity
    }

    pub fn items(&self) -> &[f64] {
        &self.items
    }

    pub fn episode_ends(&self) -> &[usize] {
        &self.episode_ends
    }

    fn current_start(&self) -> usize {
        self.episode_ends.last().copied().unwrap_or(0)
    }

    fn current_len(&self) -> usize {
        self.num_items() - self.current_start()
    }

    /// Appends one row to the current episode with its precomputed `f` output.
    pub fn push(&mut self, input: &[f64], f_out: &[f64]) -> Result<()> {
        if self.is_full() {
            return Err(Error::usage(format!(
                "context already holds {} complete episodes",
                self.capacity
            )));
        }
        if input.len() != self.input_dim || f_out.len() != self.d_z {
            return Err(Error::shape("context row or embedding width"));
        }
        self.items.extend_from_slice(input);
        self.current_sum.iter_mut().zip(f_out).for_each(|(s, v)| *s += v);
        Ok(())
    }

    /// Seals the current episode. Returns `true` once the context holds
    /// `capacity` complete episodes.
    pub fn seal(&mut self) -> Result<bool> {
        if self.current_len() == 0 {
            return Err(Error::usage("cannot close an empty episode"));
        }
        self.episode_ends.push(self.num_items());
        self.sums.push(std::mem::replace(&mut self.current_sum, vec![0.0; self.d_z]));
        Ok(self.is_full())
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.episode_ends.clear();
        self.sums.clear();
        self.current_sum.iter_mut().for_each(|s| *s = 0.0);
    }

    /// `(1/N) Σ_n (1/T_n) Σ_t f(...)` from the cached sums, counting the
    /// current episode only when it is non-empty. `None` for an empty context.
    pub fn mean_embedding(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let mut acc = vec![0.0; self.d_z];
        let mut start = 0;
        for (end, sum) in self.episode_ends.iter().zip(&self.sums) {
            let t = (end - start) as f64;
            acc.iter_mut().zip(sum).for_each(|(a, s)| *a += s / t);
            start = *end;
        }
        let mut n = self.sums.len();
        let cur = self.current_len();
        if cur > 0 {
            acc.iter_mut()
                .zip(&self.current_sum)
                .for_each(|(a, s)| *a += s / cur as f64);
            n += 1;
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Some(acc)
    }

    /// Replaces the cached sums from per-row `f` outputs (`[num_items, d_z]`).
    pub(crate) fn set_cached(&mut self, f_rows: &[f64]) {
        debug_assert_eq!(f_rows.len(), self.num_items() * self.d_z);
        let d = self.d_z;
        let sum_rows = |a: usize, b: usize| {
            let mut s = vec![0.0; d];
            for r in a..b {
                s.iter_mut().zip(&f_rows[r * d..(r + 1) * d]).for_each(|(x, v)| *x += v);
            }
            s
        };
        let mut start = 0;
        self.sums = self
            .episode_ends
            .iter()
            .map(|&end| {
                let s = sum_rows(start, end);
                start = end;
                s
            })
            .collect();
        self.current_sum = sum_rows(start, self.num_items());
    }
}
