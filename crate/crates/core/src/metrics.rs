//! External clustering metrics: accuracy under the best cluster-to-class
//! matching, normalized mutual information, adjusted Rand index and
//! macro-F1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmiNorm {
    /// `I / sqrt(H(U) H(V))`
    #[default]
    Geometric,
    /// `I / ((H(U) + H(V)) / 2)`
    Arithmetic,
}

impl FromStr for NmiNorm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "geometric" => Ok(NmiNorm::Geometric),
            "arithmetic" => Ok(NmiNorm::Arithmetic),
            _ => Err(format!("expected geometric|arithmetic, got `{s}`")),
        }
    }
}

impl fmt::Display for NmiNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NmiNorm::Geometric => "geometric",
            NmiNorm::Arithmetic => "arithmetic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

impl MetricReport {
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            acc: sum(|r| r.acc),
            nmi: sum(|r| r.nmi),
            ari: sum(|r| r.ari),
            f1: sum(|r| r.f1),
        })
    }
}

/// Contingency table with rows indexed by dense truth classes and columns
/// by dense predicted clusters (both in ascending label order).
#[derive(Clone, Debug)]
struct Contingency {
    table: Vec<Vec<usize>>,
    truth_labels: Vec<usize>,
    pred_labels: Vec<usize>,
    n: usize,
}

impl Contingency {
    fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::InvalidArgument(format!(
                "label vectors differ in length: {} vs {}",
                truth.len(),
                pred.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::InvalidArgument("metrics need at least one node".into()));
        }
        let dense = |labels: &[usize]| {
            let map: BTreeMap<usize, usize> = labels
                .iter()
                .copied()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, l)| (l, i))
                .collect();
            let ids: Vec<usize> = labels.iter().map(|l| map[l]).collect();
            (map.into_keys().collect::<Vec<_>>(), ids)
        };
        let (truth_labels, t) = dense(truth);
        let (pred_labels, p) = dense(pred);
        let mut table = vec![vec![0usize; pred_labels.len()]; truth_labels.len()];
        for (&a, &b) in t.iter().zip(&p) {
            table[a][b] += 1;
        }
        Ok(Contingency {
            table,
            truth_labels,
            pred_labels,
            n: truth.len(),
        })
    }

    fn row_sums(&self) -> Vec<usize> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        (0..self.pred_labels.len())
            .map(|c| self.table.iter().map(|r| r[c]).sum())
            .collect()
    }

    /// For each dense predicted cluster, the dense truth class it maps to
    /// under the agreement-maximizing one-to-one matching. Ties between
    /// equally accurate matchings go to the one with the higher macro-F1,
    /// which keeps F1 independent of how clusters happen to be numbered.
    fn matching(&self) -> Vec<Option<usize>> {
        let (kt, kp) = (self.truth_labels.len(), self.pred_labels.len());
        let size = kt.max(kp);
        let (a, b) = (self.row_sums(), self.col_sums());
        // the F1 bonus sums to at most kt · eps < 1, below one agreement
        let eps = 0.5 / size as f64;
        let mut cost = vec![vec![0.0; size]; size];
        for (c, row) in cost.iter_mut().enumerate().take(kp) {
            for (t, v) in row.iter_mut().enumerate().take(kt) {
                let hits = self.table[t][c] as f64;
                let f1 = 2.0 * hits / (a[t] + b[c]) as f64;
                *v = -(hits + eps * f1);
            }
        }
        hungarian(&cost)
            .into_iter()
            .take(kp)
            .map(|t| (t < kt).then_some(t))
            .collect()
    }
}

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row. O(n³) shortest augmenting paths with potentials.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    // 1-based arrays, index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Maps every predicted label onto a truth label with the optimal
/// one-to-one matching. Unmatched clusters map to `None`.
pub fn best_mapping(truth: &[usize], pred: &[usize]) -> Result<BTreeMap<usize, Option<usize>>> {
    let ct = Contingency::new(truth, pred)?;
    Ok(ct
        .matching()
        .into_iter()
        .enumerate()
        .map(|(c, t)| (ct.pred_labels[c], t.map(|t| ct.truth_labels[t])))
        .collect())
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = Contingency::new(truth, pred)?;
    let hits: usize = ct
        .matching()
        .iter()
        .enumerate()
        .filter_map(|(c, t)| t.map(|t| ct.table[t][c]))
        .sum();
    Ok(hits as f64 / ct.n as f64)
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi(truth: &[usize], pred: &[usize], norm: NmiNorm) -> Result<f64> {
    let ct = Contingency::new(truth, pred)?;
    let (a, b) = (ct.row_sums(), ct.col_sums());
    let n = ct.n as f64;
    let (hu, hv) = (entropy(&a, ct.n), entropy(&b, ct.n));
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in ct.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (a[i] as f64 * b[j] as f64)).ln();
            }
        }
    }
    let denom = match norm {
        NmiNorm::Geometric => (hu * hv).sqrt(),
        NmiNorm::Arithmetic => 0.5 * (hu + hv),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(c: usize) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let ct = Contingency::new(truth, pred)?;
    let index: f64 = ct.table.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_a: f64 = ct.row_sums().into_iter().map(pairs).sum();
    let sum_b: f64 = ct.col_sums().into_iter().map(pairs).sum();
    let total = pairs(ct.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial in the same way: perfect agreement
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Macro-averaged F1 over the truth classes, comparing labels directly.
pub fn macro_f1(truth: &[usize], mapped_pred: &[Option<usize>]) -> Result<f64> {
    if truth.len() != mapped_pred.len() || truth.is_empty() {
        return Err(Error::InvalidArgument("macro_f1 needs equal-length, non-empty labels".into()));
    }
    let classes: std::collections::BTreeSet<usize> = truth.iter().copied().collect();
    let mut total = 0.0;
    for &c in &classes {
        let tp = truth.iter().zip(mapped_pred).filter(|(t, p)| **t == c && **p == Some(c)).count() as f64;
        let predicted = mapped_pred.iter().filter(|p| **p == Some(c)).count() as f64;
        let actual = truth.iter().filter(|t| **t == c).count() as f64;
        if tp > 0.0 {
            let (precision, recall) = (tp / predicted, tp / actual);
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(total / classes.len() as f64)
}

/// F1 after relabelling clusters with the accuracy-optimal matching.
pub fn f1_score(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let map = best_mapping(truth, pred)?;
    let mapped: Vec<Option<usize>> = pred.iter().map(|p| map[p]).collect();
    macro_f1(truth, &mapped)
}

pub fn evaluate(truth: &[usize], pred: &[usize], norm: NmiNorm) -> Result<MetricReport> {
    Ok(MetricReport {
        acc: accuracy(truth, pred)?,
        nmi: nmi(truth, pred, norm)?,
        ari: ari(truth, pred)?,
        f1: f1_score(truth, pred)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert!((accuracy(&[0, 0, 1, 1, 2], &[1, 1, 0, 2, 2]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(accuracy(&[0, 1, 2], &[0, 0, 0]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert!((ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(ari(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0], &[3]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0], NmiNorm::Geometric).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1], NmiNorm::Geometric).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 0], &[5, 5], NmiNorm::Arithmetic).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 1], &[5, 5], NmiNorm::Arithmetic).unwrap(), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert!((f1_score(&[0, 0, 1], &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(&[2, 2, 7], &[0, 0, 1]).unwrap(), 1.0);
        // extra cluster is left unmatched and never counts as a hit
        let f = f1_score(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap();
        assert!((f - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        assert_eq!(hungarian(&cost), vec![1, 0, 2]);
        assert!(hungarian(&[]).is_empty());
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(nmi(&[], &[], NmiNorm::Geometric).is_err());
        assert!(macro_f1(&[0], &[]).is_err());
    }

    fn labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..30).prop_flat_map(|n| (prop::collection::vec(0usize..4, n), prop::collection::vec(0usize..5, n)))
    }

    proptest! {
        #[test]
        fn metrics_invariant_to_cluster_renaming((truth, pred) in labels(), shift in 1usize..9) {
            // relabel clusters with a bijection: reversed order plus an offset
            let renamed: Vec<usize> = pred.iter().map(|p| 100 + shift * (10 - p)).collect();
            let a = evaluate(&truth, &pred, NmiNorm::Geometric).unwrap();
            let b = evaluate(&truth, &renamed, NmiNorm::Geometric).unwrap();
            prop_assert!((a.acc - b.acc).abs() < 1e-12);
            prop_assert!((a.nmi - b.nmi).abs() < 1e-12);
            prop_assert!((a.ari - b.ari).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }

        #[test]
        fn metrics_are_bounded((truth, pred) in labels()) {
            let r = evaluate(&truth, &pred, NmiNorm::Arithmetic).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.acc));
            prop_assert!((0.0..=1.0).contains(&r.nmi));
            prop_assert!((0.0..=1.0).contains(&r.f1));
            prop_assert!(r.ari <= 1.0 + 1e-12);
        }

        #[test]
        fn perfect_prediction_scores_one((truth, _) in labels()) {
            let r = evaluate(&truth, &truth, NmiNorm::Geometric).unwrap();
            prop_assert_eq!(r.acc, 1.0);
            prop_assert!((r.nmi - 1.0).abs() < 1e-12);
            prop_assert!((r.ari - 1.0).abs() < 1e-12);
            prop_assert!((r.f1 - 1.0).abs() < 1e-12);
        }
    }
}
