//! Family-wise error rate control over a grid of hypotheses.
//!
//! P-values are indexed like the λ grid, ascending in λ. Each procedure
//! returns the ascending indices of rejected nulls, i.e. the λ values judged
//! risk-controlling.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FwerMethod {
    Bonferroni,
    Holm,
    #[default]
    FixedSequence,
}

/// Rejects every null with `p <= δ / N`.
pub fn bonferroni(pvalues: &[f64], delta: f64) -> Vec<usize> {
    let threshold = delta / pvalues.len() as f64;
    (0..pvalues.len()).filter(|&k| pvalues[k] <= threshold).collect()
}

/// Holm's step-down procedure: walk the sorted p-values and reject while
/// `p_(k) <= δ / (N - k + 1)`.
pub fn holm_bonferroni(pvalues: &[f64], delta: f64) -> Vec<usize> {
    let n = pvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut out: Vec<usize> = order
        .iter()
        .enumerate()
        .take_while(|&(rank, &k)| pvalues[k] <= delta / (n - rank) as f64)
        .map(|(_, &k)| k)
        .collect();
    out.sort_unstable();
    out
}

/// `count` evenly spaced start indices, ascending, always including 0.
pub fn evenly_spaced_starts(n: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, n.max(1));
    let mut starts: Vec<usize> = (0..count).map(|i| i * n / count).collect();
    starts.dedup();
    starts
}

/// Fixed-sequence testing from several starts. From each start the walk
/// moves toward larger λ and rejects while `p <= δ / |starts|`, stopping at
/// the first failure. Starts already rejected by an earlier walk are skipped.
pub fn fixed_sequence(pvalues: &[f64], delta: f64, starts: &[usize]) -> Vec<usize> {
    let n = pvalues.len();
    if starts.is_empty() {
        return Vec::new();
    }
    let threshold = delta / starts.len() as f64;
    let mut accepted = vec![false; n];
    for &start in starts {
        if start >= n || accepted[start] {
            continue;
        }
        let mut k = start;
        while k < n && pvalues[k] <= threshold {
            accepted[k] = true;
            k += 1;
        }
    }
    (0..n).filter(|&k| accepted[k]).collect()
}

pub fn apply(method: FwerMethod, pvalues: &[f64], delta: f64, fst_starts: usize) -> Vec<usize> {
    if pvalues.is_empty() {
        return Vec::new();
    }
    match method {
        FwerMethod::Bonferroni => bonferroni(pvalues, delta),
        FwerMethod::Holm => holm_bonferroni(pvalues, delta),
        FwerMethod::FixedSequence => {
            fixed_sequence(pvalues, delta, &evenly_spaced_starts(pvalues.len(), fst_starts))
        }
    }
}
