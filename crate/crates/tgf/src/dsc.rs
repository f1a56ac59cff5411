//! Decreasing sorted counters: a multiset of named non-negative counters kept
//! in a dense array sorted by value, with per-value block boundaries.
//!
//! Every update (create/increase/decrease/delete) and every query used by the
//! feature catalogue (value, size, sum, max, median, count-with-value,
//! count-greater-than) runs in O(1) average time. Sortedness is restored on
//! update by swapping the touched counter with the head (increase) or tail
//! (decrease) of its value block; entries within a block are interchangeable.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DscError {
    #[error("counter {0:?} does not exist")]
    UnknownName(String),
    #[error("no counter currently holds value {0}")]
    UnknownValue(u64),
}

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    len: usize,
}

/// Decreasing sorted counters over names of type `K`.
#[derive(Debug, Clone, Default)]
pub struct Dsc<K: Eq + Hash + Clone + Debug> {
    entries: Vec<(K, u64)>,
    position: HashMap<K, usize>,
    blocks: HashMap<u64, Block>,
    total: u64,
}

impl<K: Eq + Hash + Clone + Debug> Dsc<K> {
    pub fn new() -> Self {
        Dsc {
            entries: Vec::new(),
            position: HashMap::new(),
            blocks: HashMap::new(),
            total: 0,
        }
    }

    /// Create the counter at 1 if absent, otherwise increment it.
    /// Returns the new value.
    pub fn increase(&mut self, name: K) -> u64 {
        match self.position.get(&name).copied() {
            None => {
                // Value 1 is minimal, so its block (if any) ends the array and
                // the appended entry extends it.
                let idx = self.entries.len();
                self.entries.push((name.clone(), 1));
                self.position.insert(name, idx);
                let b = self.blocks.entry(1).or_insert(Block { start: idx, len: 0 });
                b.len += 1;
                self.total += 1;
                1
            }
            Some(idx) => {
                let v = self.entries[idx].1;
                let head = self.blocks[&v].start;
                self.swap_entries(idx, head);
                // shrink old block from the front
                {
                    let b = self.blocks.get_mut(&v).unwrap();
                    b.start += 1;
                    b.len -= 1;
                    if b.len == 0 {
                        self.blocks.remove(&v);
                    }
                }
                self.entries[head].1 = v + 1;
                // block for v+1, if present, ends exactly at `head`
                let b = self
                    .blocks
                    .entry(v + 1)
                    .or_insert(Block { start: head, len: 0 });
                b.len += 1;
                self.total += 1;
                v + 1
            }
        }
    }

    /// Decrement the counter, removing it if it reaches 0. Returns the new
    /// value. Calling this on an absent name is a caller bug.
    pub fn decrease(&mut self, name: &K) -> Result<u64, DscError> {
        let idx = *self
            .position
            .get(name)
            .ok_or_else(|| DscError::UnknownName(format!("{name:?}")))?;
        let v = self.entries[idx].1;
        let tail = {
            let b = self.blocks[&v];
            b.start + b.len - 1
        };
        self.swap_entries(idx, tail);
        {
            let b = self.blocks.get_mut(&v).unwrap();
            b.len -= 1;
            if b.len == 0 {
                self.blocks.remove(&v);
            }
        }
        self.total -= 1;
        if v == 1 {
            // value 1 occupies the array tail, so this entry is last
            let (k, _) = self.entries.pop().unwrap();
            debug_assert_eq!(tail, self.entries.len());
            self.position.remove(&k);
            Ok(0)
        } else {
            self.entries[tail].1 = v - 1;
            // block for v-1, if present, starts right after `tail`
            match self.blocks.get_mut(&(v - 1)) {
                Some(b) => {
                    b.start -= 1;
                    b.len += 1;
                }
                None => {
                    self.blocks.insert(v - 1, Block { start: tail, len: 1 });
                }
            }
            Ok(v - 1)
        }
    }

    /// Current value of a counter, 0 if absent.
    pub fn value(&self, name: &K) -> u64 {
        self.position
            .get(name)
            .map_or(0, |&idx| self.entries[idx].1)
    }

    /// Number of live counters.
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// Sum of all counter values.
    pub fn sum(&self) -> u64 {
        self.total
    }

    /// Largest counter value, 0 when empty.
    pub fn max_value(&self) -> u64 {
        self.entries.first().map_or(0, |e| e.1)
    }

    /// Value at index ⌊size/2⌋ of the decreasing-sorted entries, 0 when empty.
    pub fn median_value(&self) -> u64 {
        if self.entries.is_empty() {
            0
        } else {
            self.entries[self.entries.len() / 2].1
        }
    }

    /// Number of counters holding exactly `v`; 0 for absent values and for 0.
    pub fn count_with_value(&self, v: u64) -> usize {
        self.blocks.get(&v).map_or(0, |b| b.len)
    }

    /// Number of counters strictly greater than `v`. Supported for v = 0
    /// (returns size) and for values currently held by some counter.
    pub fn count_greater_than(&self, v: u64) -> Result<usize, DscError> {
        if v == 0 {
            return Ok(self.entries.len());
        }
        self.blocks
            .get(&v)
            .map(|b| b.start)
            .ok_or(DscError::UnknownValue(v))
    }

    /// Sorted (name, value) sequence, for debugging and oracle comparison.
    pub fn dump(&self) -> Vec<(K, u64)> {
        self.entries.clone()
    }

    fn swap_entries(&mut self, i: usize, j: usize) {
        if i != j {
            self.entries.swap(i, j);
            *self.position.get_mut(&self.entries[i].0).unwrap() = i;
            *self.position.get_mut(&self.entries[j].0).unwrap() = j;
        }
    }

    /// Full structural check against the stored invariants. Test support.
    #[doc(hidden)]
    pub fn check_invariants(&self) {
        let mut sum = 0u64;
        for w in self.entries.windows(2) {
            assert!(w[0].1 >= w[1].1, "entries not sorted decreasing");
        }
        for (i, (k, v)) in self.entries.iter().enumerate() {
            assert!(*v >= 1, "zero-valued counter stored");
            assert_eq!(self.position[k], i, "position map inconsistent");
            let b = &self.blocks[v];
            assert!(b.start <= i && i < b.start + b.len, "entry outside its block");
            sum += v;
        }
        assert_eq!(self.position.len(), self.entries.len());
        assert_eq!(sum, self.total, "total out of sync");
        for (v, b) in &self.blocks {
            assert!(b.len > 0);
            for i in b.start..b.start + b.len {
                assert_eq!(self.entries[i].1, *v, "block holds foreign value");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Naive reference: a plain map plus full re-sort on every query.
    #[derive(Default)]
    struct NaiveCounters {
        values: HashMap<String, u64>,
    }

    impl NaiveCounters {
        fn increase(&mut self, name: &str) -> u64 {
            let v = self.values.entry(name.to_string()).or_insert(0);
            *v += 1;
            *v
        }
        fn decrease(&mut self, name: &str) -> u64 {
            let v = self.values.get_mut(name).expect("absent");
            *v -= 1;
            let out = *v;
            if out == 0 {
                self.values.remove(name);
            }
            out
        }
        fn sorted(&self) -> Vec<u64> {
            let mut v: Vec<u64> = self.values.values().copied().collect();
            v.sort_unstable_by(|a, b| b.cmp(a));
            v
        }
        fn median(&self) -> u64 {
            let s = self.sorted();
            if s.is_empty() {
                0
            } else {
                s[s.len() / 2]
            }
        }
    }

    #[test]
    fn creation_semantics() {
        let mut d = Dsc::new();
        assert_eq!(d.increase("a"), 1);
        assert_eq!(d.size(), 1);
        assert_eq!(d.max_value(), 1);
    }

    #[test]
    fn forced_ordering() {
        let mut d = Dsc::new();
        d.increase("a");
        d.increase("a");
        d.increase("a");
        d.increase("b");
        assert_eq!(d.value(&"a"), 3);
        assert_eq!(d.value(&"b"), 1);
        let vals: Vec<u64> = d.dump().iter().map(|e| e.1).collect();
        assert_eq!(vals, vec![3, 1]);
    }

    #[test]
    fn delete_at_zero() {
        let mut d = Dsc::new();
        d.increase("a");
        assert_eq!(d.decrease(&"a").unwrap(), 0);
        assert_eq!(d.value(&"a"), 0);
        assert_eq!(d.size(), 0);
    }

    #[test]
    fn decrease_in_block() {
        let mut d = Dsc::new();
        for _ in 0..3 {
            d.increase("a");
            d.increase("b");
        }
        d.increase("c");
        assert_eq!(d.decrease(&"a").unwrap(), 2);
        let vals: Vec<u64> = d.dump().iter().map(|e| e.1).collect();
        assert_eq!(vals, vec![3, 2, 1]);
        d.check_invariants();
    }

    #[test]
    fn decrease_unknown_is_error() {
        let mut d: Dsc<&str> = Dsc::new();
        assert!(d.decrease(&"nope").is_err());
    }

    #[test]
    fn empty_conventions() {
        let d: Dsc<&str> = Dsc::new();
        assert_eq!(d.size(), 0);
        assert_eq!(d.sum(), 0);
        assert_eq!(d.max_value(), 0);
        assert_eq!(d.median_value(), 0);
        assert_eq!(d.count_with_value(0), 0);
        assert_eq!(d.count_greater_than(0).unwrap(), 0);
    }

    #[test]
    fn median_convention() {
        let mut d = Dsc::new();
        d.increase("a");
        d.increase("a");
        d.increase("a");
        d.increase("b");
        // values [3,1], index floor(2/2)=1
        assert_eq!(d.max_value(), 3);
        assert_eq!(d.median_value(), 1);
    }

    #[test]
    fn count_queries() {
        let mut d = Dsc::new();
        for name in ["a", "b"] {
            for _ in 0..3 {
                d.increase(name);
            }
        }
        d.increase("c");
        d.increase("d");
        for _ in 0..5 {
            d.increase("e");
        }
        // values {5,3,3,1,1}
        assert_eq!(d.count_with_value(3), 2);
        assert_eq!(d.count_with_value(0), 0);
        assert_eq!(d.count_greater_than(3).unwrap(), 1);
        assert_eq!(d.count_greater_than(0).unwrap(), d.size());
        assert!(d.count_greater_than(4).is_err());
    }

    #[test]
    fn increase_then_decrease_restores_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut d = Dsc::new();
        for _ in 0..200 {
            d.increase(format!("n{}", rng.gen_range(0..30)));
        }
        let before = {
            let mut s = d.dump();
            s.sort();
            s
        };
        d.increase("n5".to_string());
        d.decrease(&"n5".to_string()).unwrap();
        let after = {
            let mut s = d.dump();
            s.sort();
            s
        };
        assert_eq!(before, after);
        d.check_invariants();
    }

    #[test]
    fn random_sequence_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut d = Dsc::new();
        let mut naive = NaiveCounters::default();
        for step in 0..10_000 {
            let name = format!("n{}", rng.gen_range(0..100));
            if naive.values.contains_key(&name) && rng.gen_bool(0.45) {
                let a = d.decrease(&name).unwrap();
                let b = naive.decrease(&name);
                assert_eq!(a, b);
            } else {
                assert_eq!(d.increase(name.clone()), naive.increase(&name));
            }
            if step % 37 == 0 {
                d.check_invariants();
            }
            let sorted = naive.sorted();
            assert_eq!(d.size(), sorted.len());
            assert_eq!(d.sum(), sorted.iter().sum::<u64>());
            assert_eq!(d.max_value(), sorted.first().copied().unwrap_or(0));
            assert_eq!(d.median_value(), naive.median());
            let dumped: Vec<u64> = d.dump().iter().map(|e| e.1).collect();
            assert_eq!(dumped, sorted);
            for &v in sorted.iter() {
                assert_eq!(
                    d.count_with_value(v),
                    sorted.iter().filter(|&&x| x == v).count()
                );
                assert_eq!(
                    d.count_greater_than(v).unwrap(),
                    sorted.iter().filter(|&&x| x > v).count()
                );
            }
        }
    }

    #[test]
    fn count_partition_property() {
        // count_with_value(v) + count_greater_than(v) = entries with value >= v
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Dsc::new();
        for _ in 0..3_000 {
            d.increase(format!("n{}", rng.gen_range(0..50)));
        }
        let sorted: Vec<u64> = d.dump().iter().map(|e| e.1).collect();
        let mut present: Vec<u64> = sorted.clone();
        present.dedup();
        for v in present {
            let ge = sorted.iter().filter(|&&x| x >= v).count();
            assert_eq!(d.count_with_value(v) + d.count_greater_than(v).unwrap(), ge);
        }
    }
}
