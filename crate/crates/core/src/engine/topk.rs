use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Total(f64);

impl Eq for Total {}

impl PartialOrd for Total {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Total {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The `k` largest values offered so far.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Total>>,
    /// Smallest retained value once full; everything at or below it is rejected
    /// without touching the heap.
    floor: f64,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self { k, heap: BinaryHeap::with_capacity(k + 1), floor: f64::NEG_INFINITY }
    }

    #[inline]
    pub fn offer(&mut self, x: f64) {
        if x <= self.floor {
            return;
        }
        self.heap.push(Reverse(Total(x)));
        if self.heap.len() > self.k {
            self.heap.pop();
        }
        if self.heap.len() == self.k {
            self.floor = self.heap.peek().map_or(f64::NEG_INFINITY, |r| r.0 .0);
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() == self.k
    }

    pub fn max(&self) -> Option<f64> {
        self.heap.iter().map(|r| r.0 .0).max_by(f64::total_cmp)
    }

    /// Descending order.
    pub fn to_sorted_desc(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.heap.iter().map(|r| r.0 .0).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_largest() {
        let mut t = TopK::new(3);
        for x in [5.0, 1.0, 7.0, 3.0, 9.0, 2.0, 7.0] {
            t.offer(x);
        }
        assert_eq!(t.to_sorted_desc(), vec![9.0, 7.0, 7.0]);
        assert_eq!(t.max(), Some(9.0));
    }

    #[test]
    fn partially_filled() {
        let mut t = TopK::new(4);
        t.offer(-1.0);
        assert!(!t.is_full());
        assert_eq!(t.to_sorted_desc(), vec![-1.0]);
    }
}
