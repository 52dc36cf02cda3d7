//! Exact summation of `f64` values.
//!
//! Node weights are summed as real numbers and only rounded once at the end,
//! so a retained weight does not depend on the order in which nodes are
//! visited. The exact pruner, the brute-force oracle and `retained_weight`
//! therefore agree bit-for-bit on every budget comparison.
//!
//! The representation is a list of non-overlapping partials in increasing
//! magnitude (Shewchuk's expansion arithmetic, as in `math.fsum`).

use alloc::vec::Vec;
use core::cmp::Ordering;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut s = Self::new();
        for v in values {
            s.add(v);
        }
        s
    }

    pub fn add(&mut self, value: f64) {
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                core::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        if x != 0.0 || self.partials.is_empty() {
            self.partials.push(x);
        }
    }

    pub fn add_sum(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn sub_sum(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(-p);
        }
    }

    pub fn plus(&self, other: &ExactSum) -> ExactSum {
        let mut out = self.clone();
        out.add_sum(other);
        out
    }

    pub fn minus(&self, other: &ExactSum) -> ExactSum {
        let mut out = self.clone();
        out.sub_sum(other);
        out
    }

    /// The exact sum rounded to the nearest `f64` (ties to even).
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: the remaining partials decide the rounding direction.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }

    /// Exact comparison of the two real sums.
    pub fn cmp_exact(&self, other: &ExactSum) -> Ordering {
        // A non-zero exact sum of doubles never rounds to zero.
        let d = self.minus(other).value();
        if d > 0.0 {
            Ordering::Greater
        } else if d < 0.0 {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
}
