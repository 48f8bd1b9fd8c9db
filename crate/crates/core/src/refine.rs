//! Dual refinement of the learned structure: a cross-view similarity mask
//! and a pseudo-label agreement mask built from high-confidence K-means
//! assignments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// How `tau` selects the high-confidence nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceRule {
    /// Keep the `ceil(tau · N)` most confident nodes.
    #[default]
    Fraction,
    /// Keep nodes whose confidence is at least `tau`.
    Absolute,
}

impl FromStr for ConfidenceRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fraction" => Ok(ConfidenceRule::Fraction),
            "absolute" => Ok(ConfidenceRule::Absolute),
            _ => Err(format!("expected fraction|absolute, got `{s}`")),
        }
    }
}

impl fmt::Display for ConfidenceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfidenceRule::Fraction => "fraction",
            ConfidenceRule::Absolute => "absolute",
        })
    }
}

/// Pseudo-labels with their confidence and selection mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Confidence {
    pub labels: Vec<usize>,
    pub conf: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Confidence {
    pub fn selected(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// `F_v1 · F_v2ᵀ`; with unit rows this is the cross-view cosine matrix.
pub fn cross_view_similarity(tape: &mut Tape, f_v1: Var, f_v2: Var) -> Result<Var> {
    if tape.shape(f_v1) != tape.shape(f_v2) {
        return Err(Error::shape("cross_view_similarity", tape.shape(f_v1), tape.shape(f_v2)));
    }
    tape.matmul_nt(f_v1, f_v2)
}

/// Assigns each row of `fused` to its nearest centroid (lower index on ties)
/// and scores it with the softmax of negative squared centroid distances at
/// the assigned centroid.
pub fn confidence_select(fused: &Matrix, centroids: &Matrix, tau: f64, rule: ConfidenceRule) -> Result<Confidence> {
    let k = centroids.rows();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("confidence needs at least 2 centroids, got {k}")));
    }
    if fused.cols() != centroids.cols() {
        return Err(Error::shape("confidence_select", fused.shape(), centroids.shape()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} must lie in (0, 1]")));
    }
    let n = fused.rows();
    let mut labels = Vec::with_capacity(n);
    let mut conf = Vec::with_capacity(n);
    let mut dist = vec![0.0; k];
    for row in fused.iter_rows() {
        for (c, d) in dist.iter_mut().enumerate() {
            *d = row.iter().zip(centroids.row(c)).map(|(a, b)| (a - b) * (a - b)).sum();
        }
        let mut best = 0;
        for c in 1..k {
            if dist[c] < dist[best] {
                best = c;
            }
        }
        // softmax(−dist) at `best`, shifted by the minimum distance
        let total: f64 = dist.iter().map(|d| (dist[best] - d).exp()).sum();
        labels.push(best);
        conf.push(1.0 / total);
    }

    let mask = match rule {
        ConfidenceRule::Absolute => conf.iter().map(|&c| c >= tau).collect(),
        ConfidenceRule::Fraction => {
            // the epsilon keeps e.g. 0.95 · 100 from rounding up to 96
            let keep = ((tau * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
            let mut mask = vec![false; n];
            for &i in &order[..keep] {
                mask[i] = true;
            }
            mask
        }
    };
    Ok(Confidence { labels, conf, mask })
}

/// `Z[i][j] = [p_i = p_j]` when both nodes are selected, 1 otherwise.
pub fn pseudo_label_matrix(labels: &[usize], mask: &[bool]) -> Result<Matrix> {
    if labels.len() != mask.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} mask entries",
            labels.len(),
            mask.len()
        )));
    }
    let n = labels.len();
    let mut z = Matrix::ones(n, n);
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        for j in 0..n {
            if mask[j] && labels[i] != labels[j] {
                z[(i, j)] = 0.0;
            }
        }
    }
    Ok(z)
}

/// `Aug_S ⊙ clamp(S, 0, 1) ⊙ Z`, differentiable in `Aug_S` and `S`.
pub fn refine(tape: &mut Tape, aug_s: Var, similarity: Var, z: Var) -> Result<Var> {
    tape.gated_product(aug_s, similarity, z)
}

pub fn refine_values(aug_s: &Matrix, similarity: &Matrix, z: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let (a, s, z) = (
        tape.constant(aug_s.clone()),
        tape.constant(similarity.clone()),
        tape.constant(z.clone()),
    );
    let out = refine(&mut tape, a, s, z)?;
    Ok(tape.value(out).clone())
}
