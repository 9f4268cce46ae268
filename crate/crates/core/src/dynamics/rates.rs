use serde::{Deserialize, Serialize};

/// Binary sum tree over non-negative leaf rates. Parents are always
/// re-summed from their two children, so updates never accumulate drift.
#[derive(Clone, Debug)]
pub struct SumTree {
    cap: usize,
    len: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let cap = len.max(1).next_power_of_two();
        Self {
            cap,
            len,
            nodes: vec![0.0; 2 * cap],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.cap + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        let mut node = self.cap + i;
        if self.nodes[node] == value {
            return;
        }
        self.nodes[node] = value;
        while node > 1 {
            node >>= 1;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf `i` with `sum(leaf[..i]) <= u < sum(leaf[..=i])`, together with
    /// `u - sum(leaf[..i])`. Rounding can land on an empty leaf; the nearest
    /// non-empty leaf to the left (or right) is returned in that case.
    pub fn find(&self, mut u: f64) -> (usize, f64) {
        let mut node = 1;
        while node < self.cap {
            let left = self.nodes[2 * node];
            if u < left {
                node *= 2;
            } else {
                u -= left;
                node = 2 * node + 1;
            }
        }
        let mut i = node - self.cap;
        if i >= self.len || self.leaf(i) <= 0.0 {
            let fallback = (0..self.len.min(i + 1))
                .rev()
                .find(|&j| self.leaf(j) > 0.0)
                .or_else(|| (i..self.len).find(|&j| self.leaf(j) > 0.0))
                .unwrap_or(0);
            i = fallback;
            u = self.leaf(i) * 0.5;
        } else if u >= self.leaf(i) {
            u = self.leaf(i) * 0.5;
        }
        (i, u.max(0.0))
    }

    /// Plain recomputation of the total from the leaves.
    pub fn leaf_sum(&self) -> f64 {
        neumaier(self.nodes[self.cap..self.cap + self.len].iter().copied())
    }
}

/// Compensated (Neumaier) summation.
pub fn neumaier<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// The three event classes of the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventClass {
    Exclusion = 0,
    Collision = 1,
    Boundary = 2,
}

/// Per-class rate trees: exclusion and collision indexed by site, boundary by
/// wall entry.
#[derive(Clone, Debug)]
pub struct RateIndex {
    pub(crate) trees: [SumTree; 3],
}

impl RateIndex {
    pub fn new(n_sites: usize, n_wall: usize) -> Self {
        Self {
            trees: [SumTree::new(n_sites), SumTree::new(n_sites), SumTree::new(n_wall)],
        }
    }

    pub fn class_total(&self, class: EventClass) -> f64 {
        self.trees[class as usize].total()
    }

    pub fn total(&self) -> f64 {
        neumaier(self.trees.iter().map(|t| t.total()))
    }

    /// Pick a class and a leaf for `u in [0, total)`.
    pub fn locate(&self, u: f64) -> (EventClass, usize, f64) {
        let a = self.trees[0].total();
        let b = self.trees[1].total();
        let c = self.trees[2].total();
        let (class, rest) = if u < a && a > 0.0 {
            (EventClass::Exclusion, u)
        } else if u - a < b && b > 0.0 {
            (EventClass::Collision, u - a)
        } else if c > 0.0 {
            (EventClass::Boundary, (u - a - b).min(c).max(0.0))
        } else if b > 0.0 {
            (EventClass::Collision, b * 0.5)
        } else {
            (EventClass::Exclusion, a * 0.5)
        };
        let (leaf, rem) = self.trees[class as usize].find(rest);
        (class, leaf, rem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn find_respects_cumulative_sums() {
        let mut t = SumTree::new(5);
        for (i, v) in [1.0, 0.0, 2.0, 0.5, 0.0].iter().enumerate() {
            t.set(i, *v);
        }
        assert_eq!(t.total(), 3.5);
        assert_eq!(t.find(0.3).0, 0);
        assert_eq!(t.find(1.0).0, 2);
        assert_eq!(t.find(2.99).0, 2);
        assert_eq!(t.find(3.2).0, 3);
        // past the end: rounding fallback to the last non-empty leaf
        assert_eq!(t.find(3.5).0, 3);
    }

    #[test]
    fn neumaier_beats_naive_sum() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier(xs), 2.0);
    }

    proptest! {
        #[test]
        fn total_tracks_leaf_updates(updates in proptest::collection::vec((0usize..37, 0.0f64..1e6), 1..300)) {
            let mut t = SumTree::new(37);
            let mut leaves = vec![0.0; 37];
            for (i, v) in updates {
                t.set(i, v);
                leaves[i] = v;
            }
            let direct = neumaier(leaves.iter().copied());
            prop_assert!((t.total() - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }
}
