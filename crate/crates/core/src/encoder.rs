//! Shared (siamese) view encoder and view fusion.
//!
//! A view `(S, X)` is encoded as `normalize_rows(Ŝ^t X W)` where `Ŝ` is the
//! renormalized structure `D^{-1/2}(S + I)D^{-1/2}`. The product is evaluated
//! as `Ŝ^t (X W)`, which is the same matrix but keeps every `N×N` product at
//! embedding width.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{graph_filter, NormalizedGraph};
use crate::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct Encoder {
    weight: Matrix,
    filter_depth: usize,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, embedding_dim: usize, filter_depth: usize, rng: &mut R) -> Self {
        Encoder {
            weight: Matrix::glorot(input_dim, embedding_dim, rng),
            filter_depth,
        }
    }

    pub fn with_weight(weight: Matrix, filter_depth: usize) -> Self {
        Encoder { weight, filter_depth }
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn filter_depth(&self) -> usize {
        self.filter_depth
    }

    pub fn embedding_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Encodes a view whose structure may carry gradients.
    pub fn encode(&self, tape: &mut Tape, structure: Var, attributes: Var, weight: Var) -> Result<Var> {
        let (n, d) = tape.shape(attributes);
        if tape.shape(structure) != (n, n) {
            return Err(Error::shape("encode", tape.shape(structure), (n, d)));
        }
        if tape.value(structure).as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("encoder structure must be nonnegative".into()));
        }
        let norm = tape.sym_normalize(structure)?;
        let mut h = tape.matmul(attributes, weight)?;
        for _ in 0..self.filter_depth {
            h = tape.matmul(norm, h)?;
        }
        tape.row_l2_normalize(h)
    }

    /// Encodes a view whose filtered attributes `Ŝ^t X` are already known.
    pub fn encode_filtered(&self, tape: &mut Tape, filtered: Var, weight: Var) -> Result<Var> {
        let h = tape.matmul(filtered, weight)?;
        tape.row_l2_normalize(h)
    }

    /// `Ŝ^t X` for a fixed structure.
    pub fn prefilter(&self, ng: &NormalizedGraph, attributes: &Matrix) -> Result<Matrix> {
        graph_filter(ng, attributes, self.filter_depth)
    }

    /// Evaluates the encoder on plain matrices.
    pub fn apply(&self, structure: &Matrix, attributes: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let s = tape.constant(structure.clone());
        let x = tape.constant(attributes.clone());
        let w = tape.constant(self.weight.clone());
        let out = self.encode(&mut tape, s, x, w)?;
        Ok(tape.value(out).clone())
    }
}

/// `(F_v1 + F_v2) / 2`
pub fn fuse(tape: &mut Tape, f_v1: Var, f_v2: Var) -> Result<Var> {
    let sum = tape.add(f_v1, f_v2)?;
    tape.scale(sum, 0.5)
}

pub fn fuse_values(f_v1: &Matrix, f_v2: &Matrix) -> Result<Matrix> {
    Ok(f_v1.add(f_v2)?.scale(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};
    use crate::graph::normalize_adjacency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_structure(n: usize, seed: u64) -> Matrix {
        let mut r = rng(seed);
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && r.random::<f64>() < 0.5 {
                    s[(i, j)] = r.random::<f64>();
                }
            }
        }
        s
    }

    #[test]
    fn rows_are_unit_norm() {
        let enc = Encoder::new(3, 4, 2, &mut rng(1));
        let x = Matrix::standard_normal(5, 3, &mut rng(2));
        let f = enc.apply(&random_structure(5, 3), &x).unwrap();
        for row in f.iter_rows() {
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_case_returns_normalized_attributes() {
        let x = Matrix::from_rows(&[[3.0, 4.0], [1.0, 0.0], [0.6, 0.8]]).unwrap();
        let enc = Encoder::with_weight(Matrix::identity(2), 0);
        let f = enc.apply(&random_structure(3, 4), &x).unwrap();
        let expected = Matrix::from_rows(&[[0.6, 0.8], [1.0, 0.0], [0.6, 0.8]]).unwrap();
        assert!(f.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn matches_stepwise_composition() {
        let s = random_structure(4, 5);
        let x = Matrix::standard_normal(4, 3, &mut rng(6));
        let enc = Encoder::new(3, 2, 2, &mut rng(7));
        let got = enc.apply(&s, &x).unwrap();
        // normalize → filter → linear → normalize, in the literal order
        let ng = normalize_adjacency(&s);
        let filtered = graph_filter(&ng, &x, 2).unwrap();
        let mut h = filtered.matmul(enc.weight()).unwrap();
        for r in 0..h.rows() {
            let norm = h.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            h.row_mut(r).iter_mut().for_each(|v| *v /= norm);
        }
        assert!(got.max_abs_diff(&h) < 1e-12);

        let mut tape = Tape::new();
        let fx = tape.constant(enc.prefilter(&ng, &x).unwrap());
        let w = tape.constant(enc.weight().clone());
        let pre = enc.encode_filtered(&mut tape, fx, w).unwrap();
        assert!(tape.value(pre).max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn permutation_equivariant() {
        let n = 6;
        let s = random_structure(n, 8);
        let x = Matrix::standard_normal(n, 3, &mut rng(9));
        let enc = Encoder::new(3, 4, 2, &mut rng(10));
        let perm = [3, 0, 5, 1, 4, 2];
        let mut sp = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                sp[(i, j)] = s[(perm[i], perm[j])];
            }
        }
        let xp = x.select_rows(&perm);
        let f = enc.apply(&s, &x).unwrap();
        let fp = enc.apply(&sp, &xp).unwrap();
        assert!(fp.max_abs_diff(&f.select_rows(&perm)) < 1e-12);
    }

    #[test]
    fn rejects_negative_structure_and_bad_shapes() {
        let enc = Encoder::new(2, 2, 1, &mut rng(11));
        let x = Matrix::ones(2, 2);
        let mut s = Matrix::zeros(2, 2);
        s[(0, 1)] = -0.5;
        assert!(enc.apply(&s, &x).is_err());
        assert!(enc.apply(&Matrix::zeros(3, 3), &x).is_err());
    }

    #[test]
    fn fuse_examples() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert_eq!(fuse_values(&a, &b).unwrap(), Matrix::from_rows(&[[0.5, 0.5]]).unwrap());
        assert_eq!(fuse_values(&a, &a).unwrap(), a);
        assert_eq!(fuse_values(&a, &a.scale(-1.0)).unwrap(), Matrix::zeros(1, 2));
        assert!(fuse_values(&a, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn encode_gradients_match_finite_differences() {
        let s0 = random_structure(5, 12).map(|v| v + 0.1);
        let x0 = Matrix::standard_normal(5, 3, &mut rng(13));
        let enc = Encoder::new(3, 4, 2, &mut rng(14));
        let probe = Matrix::standard_normal(5, 4, &mut rng(15));
        let inputs = [s0, x0, enc.weight().clone()];
        let eval = |vals: &[Matrix]| -> (f64, Vec<Matrix>) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|m| tape.param(m.clone())).collect();
            let f = enc.encode(&mut tape, vars[0], vars[1], vars[2]).unwrap();
            let c = tape.constant(probe.clone());
            let h = tape.hadamard(f, c).unwrap();
            let l = tape.sum(h).unwrap();
            let g = tape.backward(l).unwrap();
            (tape.scalar(l), vars.iter().zip(vals).map(|(v, m)| g.wrt(*v, m.shape())).collect())
        };
        let (_, analytic) = eval(&inputs);
        for k in 0..3 {
            let numeric = central_difference(&inputs[k], 1e-4, |p| {
                let mut vals = inputs.to_vec();
                vals[k] = p.clone();
                eval(&vals).0
            });
            let err = relative_error(&analytic[k], &numeric);
            assert!(err < 1e-5, "input {k}: {err:e}");
        }
    }
}
