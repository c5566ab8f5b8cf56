//! Fixed-capacity Fenwick tree over nonnegative weights.

#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>,
    values: Vec<f64>,
    top: usize,
}

impl Fenwick {
    pub fn new(capacity: usize) -> Self {
        let cap = capacity.max(1);
        Self {
            tree: vec![0.0; cap + 1],
            values: vec![0.0; cap],
            top: cap.next_power_of_two(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        let delta = value - self.values[idx];
        self.values[idx] = value;
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of the first `len` weights.
    pub fn prefix(&self, len: usize) -> f64 {
        let mut s = 0.0;
        let mut i = len;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.prefix(self.values.len())
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`, skipping
    /// zero weights. Targets at or beyond the total (rounding) land on the
    /// last positive weight.
    pub fn find(&self, target: f64) -> usize {
        let n = self.values.len();
        let mut pos = 0usize;
        let mut rem = target;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        let mut idx = pos.min(n - 1);
        while self.values[idx] <= 0.0 && idx > 0 {
            idx -= 1;
        }
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn find_respects_weights() {
        let mut f = Fenwick::new(5);
        for (i, w) in [1.0, 0.0, 2.0, 3.0, 0.0].into_iter().enumerate() {
            f.set(i, w);
        }
        assert_eq!(f.total(), 6.0);
        assert_eq!(f.find(0.0), 0);
        assert_eq!(f.find(0.999), 0);
        assert_eq!(f.find(1.0), 2);
        assert_eq!(f.find(2.5), 2);
        assert_eq!(f.find(3.0), 3);
        assert_eq!(f.find(5.999), 3);
        assert_eq!(f.find(6.0), 3);
    }

    proptest! {
        #[test]
        fn prefix_matches_naive(ws in proptest::collection::vec(0.0f64..10.0, 1..200), updates in proptest::collection::vec((0usize..200, 0.0f64..5.0), 0..50)) {
            let mut f = Fenwick::new(ws.len());
            let mut naive = ws.clone();
            for (i, &w) in ws.iter().enumerate() {
                f.set(i, w);
            }
            for (i, w) in updates {
                let i = i % ws.len();
                f.set(i, w);
                naive[i] = w;
            }
            for len in 0..=naive.len() {
                let s: f64 = naive[..len].iter().sum();
                prop_assert!((f.prefix(len) - s).abs() < 1e-9);
            }
        }
    }
}
