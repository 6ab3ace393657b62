//! Binary sum tree over bond rates: O(log n) sampling proportional to rate,
//! O(log n) point updates.

/// Complete binary sum tree, leaves padded to a power of two.
#[derive(Debug, Clone)]
pub struct RateIndex {
    n_leaves: usize,
    size: usize,
    /// 1-based heap layout; `tree[1]` is the total rate.
    tree: Vec<f64>,
}

impl RateIndex {
    pub fn new(rates: &[f64]) -> Self {
        let n_leaves = rates.len();
        let size = n_leaves.next_power_of_two();
        let mut tree = vec![0.0; 2 * size];
        tree[size..size + n_leaves].copy_from_slice(rates);
        for i in (1..size).rev() {
            tree[i] = tree[2 * i] + tree[2 * i + 1];
        }
        RateIndex { n_leaves, size, tree }
    }

    pub fn len(&self) -> usize {
        self.n_leaves
    }

    pub fn is_empty(&self) -> bool {
        self.n_leaves == 0
    }

    #[inline]
    pub fn total_rate(&self) -> f64 {
        self.tree[1]
    }

    #[inline]
    pub fn rate(&self, i: usize) -> f64 {
        self.tree[self.size + i]
    }

    /// Sets leaf `i` and repairs the path to the root.
    #[inline]
    pub fn update(&mut self, i: usize, rate: f64) {
        let mut idx = self.size + i;
        self.tree[idx] = rate;
        idx /= 2;
        while idx >= 1 {
            self.tree[idx] = self.tree[2 * idx] + self.tree[2 * idx + 1];
            if idx == 1 {
                break;
            }
            idx /= 2;
        }
    }

    /// Finds the leaf whose cumulative-rate interval contains `u * total_rate`
    /// for `u` in `[0, 1)`.
    #[inline]
    pub fn sample(&self, u: f64) -> usize {
        let mut target = u * self.tree[1];
        let mut idx = 1usize;
        while idx < self.size {
            let left = self.tree[2 * idx];
            if target < left {
                idx *= 2;
            } else {
                target -= left;
                idx = 2 * idx + 1;
            }
        }
        (idx - self.size).min(self.n_leaves - 1)
    }

    /// Rebuilds all internal nodes from the leaves.
    pub fn rebuild(&mut self) {
        for i in (1..self.size).rev() {
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    /// Max relative mismatch between internal nodes and the sum of their children.
    pub fn audit(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.size {
            let kids = self.tree[2 * i] + self.tree[2 * i + 1];
            let scale = kids.abs().max(1e-300);
            worst = worst.max((self.tree[i] - kids).abs() / scale);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn total_and_updates() {
        let mut t = RateIndex::new(&[0.5, 0.25, 0.25, 1.0, 0.0]);
        assert!((t.total_rate() - 2.0).abs() < 1e-15);
        t.update(4, 2.0);
        assert!((t.total_rate() - 4.0).abs() < 1e-15);
        assert!(t.audit() < 1e-15);
    }

    #[test]
    fn sampling_respects_weights() {
        let rates = vec![0.1, 0.0, 0.4, 0.5];
        let t = RateIndex::new(&rates);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let trials = 200_000;
        for _ in 0..trials {
            counts[t.sample(rng.gen::<f64>())] += 1;
        }
        assert_eq!(counts[1], 0);
        for (i, &r) in rates.iter().enumerate() {
            let p = r / 1.0;
            let got = counts[i] as f64 / trials as f64;
            assert!((got - p).abs() < 4.0 * (p * (1.0 - p) / trials as f64).sqrt() + 1e-9);
        }
    }

    #[test]
    fn sample_never_lands_on_padding() {
        let t = RateIndex::new(&[1.0, 1.0, 1.0]); // padded to 4 leaves
        for u in [0.0, 0.3333, 0.6666, 0.999999, 0.5] {
            assert!(t.sample(u) < 3);
        }
    }
}
