use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.98,
            val: 0.01,
            test: 0.01,
        }
    }
}

impl SplitRatios {
    /// `(train, val, test)` sizes for `n` items: floor for val and test,
    /// remainder to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps products like 0.01 * 700 from flooring one short.
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let val = floor(self.val);
        let test = floor(self.test);
        (n - val - test, val, test)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r))
            || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be in [0, 1] and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Which part of a split to operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl<T> Split<T> {
    pub fn part(&self, part: SplitPart) -> &[T] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }
}

/// Seeded shuffle of `0..n`, partitioned into (train, val, test) index sets.
pub fn split_indices(n: usize, ratios: SplitRatios, seed: u64) -> Result<Split<usize>> {
    ratios.validate()?;
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 examples to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (_, val, test) = ratios.sizes(n);
    let train = order.split_off(val + test);
    let test_part = order.split_off(val);
    Ok(Split {
        train,
        val: order,
        test: test_part,
    })
}

pub fn split_dataset<T: Clone>(items: &[T], ratios: SplitRatios, seed: u64) -> Result<Split<T>> {
    let idx = split_indices(items.len(), ratios, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    Ok(Split {
        train: pick(&idx.train),
        val: pick(&idx.val),
        test: pick(&idx.test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn floor_rule_sizes() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(1850), (1814, 18, 18));
        assert_eq!(r.sizes(100), (98, 1, 1));
        assert_eq!(r.sizes(700), (686, 7, 7));
        assert_eq!(r.sizes(3), (3, 0, 0));
    }

    #[test]
    fn same_seed_same_membership() {
        let a = split_indices(500, SplitRatios::default(), 9).unwrap();
        let b = split_indices(500, SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = split_indices(500, SplitRatios::default(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_examples() {
        assert!(split_indices(2, SplitRatios::default(), 0).is_err());
    }

    #[test]
    fn bad_ratios() {
        let r = SplitRatios {
            train: 0.9,
            val: 0.2,
            test: 0.1,
        };
        assert!(split_indices(10, r, 0).is_err());
    }

    proptest! {
        #[test]
        fn partitions_exactly(n in 3usize..5000, seed in any::<u64>()) {
            let s = split_indices(n, SplitRatios::default(), seed).unwrap();
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
            let all: HashSet<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(s.val.len(), n / 100);
            prop_assert_eq!(s.test.len(), n / 100);
        }
    }
}
