use crate::model::box_indices;

/// Lexicographic ordering of `I_n = {0,…,n}^d`, first coordinate slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOrder {
    d: usize,
    n: usize,
}

impl GridOrder {
    pub fn new(d: usize, n: usize) -> Self {
        Self { d, n }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// `N = (n+1)^d`.
    pub fn len(&self) -> usize {
        (self.n + 1).pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of `k` in the ordering, or `None` if `k ∉ I_n`.
    pub fn position(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.d {
            return None;
        }
        let side = self.n as i64 + 1;
        k.iter().try_fold(0usize, |acc, &ki| {
            (0..side).contains(&ki).then(|| acc * side as usize + ki as usize)
        })
    }

    /// Inverse of [`GridOrder::position`].
    pub fn multi_index(&self, mut pos: usize) -> Vec<i64> {
        let side = self.n + 1;
        let mut k = vec![0i64; self.d];
        for slot in k.iter_mut().rev() {
            *slot = (pos % side) as i64;
            pos /= side;
        }
        k
    }

    /// All elements of `I_n` in order.
    pub fn indices(&self) -> Vec<Vec<i64>> {
        box_indices(self.d, 0, self.n as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lexicographic() {
        let g = GridOrder::new(2, 2);
        assert_eq!(g.len(), 9);
        let idx = g.indices();
        assert_eq!(idx[0], vec![0, 0]);
        assert_eq!(idx[1], vec![0, 1]);
        assert_eq!(idx[3], vec![1, 0]);
        assert_eq!(idx[8], vec![2, 2]);
        assert_eq!(g.position(&[3, 0]), None);
        assert_eq!(g.position(&[-1, 0]), None);
    }

    proptest! {
        #[test]
        fn index_round_trip(d in 1usize..4, n in 0usize..5, seed in any::<usize>()) {
            let g = GridOrder::new(d, n);
            let pos = seed % g.len();
            let k = g.multi_index(pos);
            prop_assert_eq!(g.position(&k), Some(pos));
            prop_assert_eq!(&g.indices()[pos], &k);
        }
    }
}
