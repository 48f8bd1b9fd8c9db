//! Fixed, non-learnable graph augmentations used as ablation baselines.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    MaskFeature,
    DropEdges,
    AddEdges,
    Diffusion,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::MaskFeature,
        BaselineKind::DropEdges,
        BaselineKind::AddEdges,
        BaselineKind::Diffusion,
    ];
}

impl FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mask_feature" => Ok(BaselineKind::MaskFeature),
            "drop_edges" => Ok(BaselineKind::DropEdges),
            "add_edges" => Ok(BaselineKind::AddEdges),
            "diffusion" => Ok(BaselineKind::Diffusion),
            _ => Err(format!("expected mask_feature|drop_edges|add_edges|diffusion, got `{s}`")),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::MaskFeature => "mask_feature",
            BaselineKind::DropEdges => "drop_edges",
            BaselineKind::AddEdges => "add_edges",
            BaselineKind::Diffusion => "diffusion",
        })
    }
}

/// A fixed second view: structure (binary adjacency or dense diffusion
/// matrix) and attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedView {
    pub structure: Matrix,
    pub attributes: Matrix,
}

pub fn baseline_augment(g: &Graph, kind: BaselineKind, rate: f64, seed: u64) -> Result<FixedView> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("augmentation rate {rate} is outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut structure = g.adjacency().clone();
    let mut attributes = g.attributes().clone();
    match kind {
        BaselineKind::MaskFeature => {
            let d = g.d();
            let masked = (rate * d as f64).floor() as usize;
            for r in 0..g.n() {
                let row = attributes.row_mut(r);
                for c in index::sample(&mut rng, d, masked) {
                    row[c] = 0.0;
                }
            }
        }
        BaselineKind::DropEdges => {
            let edges = g.edges();
            let count = (rate * edges.len() as f64).floor() as usize;
            for k in index::sample(&mut rng, edges.len(), count) {
                let (u, v) = edges[k];
                structure[(u, v)] = 0.0;
                structure[(v, u)] = 0.0;
            }
        }
        BaselineKind::AddEdges => {
            let count = (rate * g.edge_count() as f64).floor() as usize;
            let n = g.n();
            let free: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| structure[(i, j)] == 0.0)
                .collect();
            if count > free.len() {
                return Err(Error::InvalidArgument(format!(
                    "cannot add {count} edges: only {} node pairs are unconnected",
                    free.len()
                )));
            }
            for k in index::sample(&mut rng, free.len(), count) {
                let (u, v) = free[k];
                structure[(u, v)] = 1.0;
                structure[(v, u)] = 1.0;
            }
        }
        BaselineKind::Diffusion => {
            if rate > 0.0 {
                structure = ppr_diffusion(g.adjacency(), rate)?;
            }
        }
    }
    Ok(FixedView {
        structure,
        attributes,
    })
}

/// Personalized-PageRank diffusion `α (I − (1 − α) Â)^{-1}`.
pub fn ppr_diffusion(adj: &Matrix, teleport: f64) -> Result<Matrix> {
    if !(teleport > 0.0 && teleport <= 1.0) {
        return Err(Error::InvalidArgument(format!("teleport probability {teleport} must lie in (0, 1]")));
    }
    let a_hat = normalize_adjacency(adj).a_hat;
    let n = a_hat.rows();
    let mut system = Matrix::identity(n);
    system.axpy(-(1.0 - teleport), &a_hat);
    let mut inv = invert(system)?;
    inv.as_mut_slice().iter_mut().for_each(|v| *v *= teleport);
    Ok(inv)
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(mut a: Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .expect("non-empty range");
        assert!(a[(pivot, col)].abs() > 1e-12, "diffusion system is singular");
        if pivot != col {
            swap_rows(&mut a, pivot, col);
            swap_rows(&mut inv, pivot, col);
        }
        let p = a[(col, col)];
        a.row_mut(col).iter_mut().for_each(|v| *v /= p);
        inv.row_mut(col).iter_mut().for_each(|v| *v /= p);
        let (pivot_a, pivot_inv) = (a.row(col).to_vec(), inv.row(col).to_vec());
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[(r, col)];
            if f == 0.0 {
                continue;
            }
            for (v, p) in a.row_mut(r).iter_mut().zip(&pivot_a) {
                *v -= f * p;
            }
            for (v, p) in inv.row_mut(r).iter_mut().zip(&pivot_inv) {
                *v -= f * p;
            }
        }
    }
    inv.ensure_finite("ppr_diffusion")?;
    Ok(inv)
}

fn swap_rows(m: &mut Matrix, i: usize, j: usize) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for c in 0..cols {
        data.swap(i * cols + c, j * cols + c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Graph {
        let mut adj = Matrix::zeros(n, n);
        for i in 0..n {
            adj[(i, (i + 1) % n)] = 1.0;
            adj[((i + 1) % n, i)] = 1.0;
        }
        let x = Matrix::from_vec(n, 5, (0..n * 5).map(|v| v as f64 + 1.0).collect()).unwrap();
        Graph::new(x, adj, None, Some(2)).unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let g = cycle(6);
        for kind in BaselineKind::ALL {
            let v = baseline_augment(&g, kind, 0.0, 1).unwrap();
            assert_eq!(&v.structure, g.adjacency(), "{kind}");
            assert_eq!(&v.attributes, g.attributes(), "{kind}");
        }
    }

    #[test]
    fn drop_edges_counts() {
        let g = cycle(10);
        let v = baseline_augment(&g, BaselineKind::DropEdges, 0.2, 3).unwrap();
        let after = Graph::new(g.attributes().clone(), v.structure.clone(), None, Some(2)).unwrap();
        assert_eq!(after.edge_count(), 8);
        assert!(v.structure.is_symmetric(0.0));
    }

    #[test]
    fn add_edges_counts_and_complete_graph_error() {
        let g = cycle(10);
        let v = baseline_augment(&g, BaselineKind::AddEdges, 0.2, 3).unwrap();
        let after = Graph::new(g.attributes().clone(), v.structure, None, Some(2)).unwrap();
        assert_eq!(after.edge_count(), 12);
        let mut full = Matrix::ones(4, 4);
        for i in 0..4 {
            full[(i, i)] = 0.0;
        }
        let complete = Graph::new(Matrix::ones(4, 1), full, None, Some(2)).unwrap();
        assert!(baseline_augment(&complete, BaselineKind::AddEdges, 0.5, 0).is_err());
    }

    #[test]
    fn mask_feature_zeroes_per_node() {
        let g = cycle(6);
        let v = baseline_augment(&g, BaselineKind::MaskFeature, 0.4, 9).unwrap();
        for row in v.attributes.iter_rows() {
            // attributes are all nonzero, so exactly ⌊0.4·5⌋ = 2 are masked
            assert_eq!(row.iter().filter(|&&x| x == 0.0).count(), 2);
        }
    }

    #[test]
    fn reproducible_with_seed() {
        let g = cycle(12);
        for kind in BaselineKind::ALL {
            let a = baseline_augment(&g, kind, 0.2, 5).unwrap();
            let b = baseline_augment(&g, kind, 0.2, 5).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn diffusion_single_node_is_one() {
        let g = Graph::new(Matrix::ones(1, 1), Matrix::zeros(1, 1), None, Some(1)).unwrap();
        let v = baseline_augment(&g, BaselineKind::Diffusion, 0.2, 0).unwrap();
        assert!((v.structure[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diffusion_solves_the_linear_system() {
        let g = cycle(7);
        let s = ppr_diffusion(g.adjacency(), 0.2).unwrap();
        let a_hat = normalize_adjacency(g.adjacency()).a_hat;
        // (I − 0.8 Â) S = 0.2 I
        let lhs = s.sub(&a_hat.matmul(&s).unwrap().scale(0.8)).unwrap();
        assert!(lhs.max_abs_diff(&Matrix::identity(7).scale(0.2)) < 1e-12);
        // power-series oracle: α Σ_k ((1−α) Â)^k
        let mut term = Matrix::identity(7).scale(0.2);
        let mut series = term.clone();
        for _ in 0..400 {
            term = a_hat.matmul(&term).unwrap().scale(0.8);
            series = series.add(&term).unwrap();
        }
        assert!(series.max_abs_diff(&s) < 1e-12);
    }
}
