//! Stochastic block model graphs with Gaussian-blob node attributes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SbmSpec {
    pub n_per_block: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Euclidean distance between any two block means.
    pub attr_sep: f64,
    /// Attribute dimension; must be at least `blocks`.
    pub dim: usize,
    pub seed: u64,
}

impl SbmSpec {
    pub fn new(n_per_block: usize, blocks: usize, p_in: f64, p_out: f64, attr_sep: f64, seed: u64) -> Self {
        SbmSpec {
            n_per_block,
            blocks,
            p_in,
            p_out,
            attr_sep,
            dim: blocks.max(16),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")));
            }
        }
        if self.blocks == 0 || self.n_per_block == 0 {
            return Err(Error::InvalidArgument("need at least one block with one node".into()));
        }
        if self.dim < self.blocks {
            return Err(Error::InvalidArgument(format!(
                "attribute dimension {} is smaller than the block count {}",
                self.dim, self.blocks
            )));
        }
        if !(self.attr_sep >= 0.0) || !self.attr_sep.is_finite() {
            return Err(Error::InvalidArgument(format!("attr_sep = {} must be finite and >= 0", self.attr_sep)));
        }
        Ok(())
    }
}

/// Samples a planted-partition graph. Node `i` belongs to block
/// `i / n_per_block`; block `b` has attribute mean `attr_sep/√2 · e_b` plus
/// unit Gaussian noise, so distinct means sit exactly `attr_sep` apart.
pub fn stochastic_block_model(spec: &SbmSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.n_per_block * spec.blocks;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..n).map(|i| i / spec.n_per_block).collect();

    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }

    let offset = spec.attr_sep / std::f64::consts::SQRT_2;
    let mut x = Matrix::zeros(n, spec.dim);
    for (i, &b) in labels.iter().enumerate() {
        for (c, v) in x.row_mut(i).iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v = noise + if c == b { offset } else { 0.0 };
        }
    }
    Graph::new(x, adj, Some(labels), Some(spec.blocks))
}
