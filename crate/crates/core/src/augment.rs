//! Learnable augmentors that produce the second view `(Aug_S, Aug_X)`.
//!
//! Structure augmentors map the graph to an `N×N` nonnegative affinity:
//!
//! * `mlp`: rows of `A` through a two-layer perceptron, then clamped cosine
//!   similarity between the resulting rows.
//! * `gcn`: `relu(Â X W)`, then clamped cosine similarity.
//! * `attention`: GAT-style scores `leaky_relu(n_lᵀ W x_i + n_rᵀ W x_j)`,
//!   softmax-normalized over each node's neighbourhood in `A + I`.
//!
//! Attribute augmentors map `X` to an `N×D` matrix, either with a two-layer
//! perceptron or with `softmax(K Qᵀ / √D) V` self-attention over nodes.
//!
//! The `identity` kinds pass the original matrix through untouched and are
//! used for the reduced models in ablations.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Mlp,
    Gcn,
    Attention,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Mlp,
    Attention,
    Identity,
}

impl FromStr for StructureKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mlp" => Ok(StructureKind::Mlp),
            "gcn" => Ok(StructureKind::Gcn),
            "attention" => Ok(StructureKind::Attention),
            "identity" | "none" => Ok(StructureKind::Identity),
            _ => Err(format!("expected mlp|gcn|attention|identity, got `{s}`")),
        }
    }
}

impl FromStr for AttributeKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mlp" => Ok(AttributeKind::Mlp),
            "attention" => Ok(AttributeKind::Attention),
            "identity" | "none" => Ok(AttributeKind::Identity),
            _ => Err(format!("expected mlp|attention|identity, got `{s}`")),
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureKind::Mlp => "mlp",
            StructureKind::Gcn => "gcn",
            StructureKind::Attention => "attention",
            StructureKind::Identity => "identity",
        })
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeKind::Mlp => "mlp",
            AttributeKind::Attention => "attention",
            AttributeKind::Identity => "identity",
        })
    }
}

/// Graph-derived matrices computed once per training run.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub adjacency: Matrix,
    pub attributes: Matrix,
    /// `Â X`, the first GCN propagation of the raw attributes.
    pub propagated: Matrix,
    /// Support of `A + I`, row-major.
    pub neighbourhood: Rc<[bool]>,
}

impl GraphContext {
    pub fn new(graph: &Graph) -> Result<Self> {
        let n = graph.n();
        let adj = graph.adjacency();
        let ng = crate::graph::normalize(graph);
        let neighbourhood: Rc<[bool]> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                i == j || adj[(i, j)] != 0.0
            })
            .collect();
        Ok(GraphContext {
            adjacency: adj.clone(),
            attributes: graph.attributes().clone(),
            propagated: ng.a_hat.matmul(graph.attributes())?,
            neighbourhood,
        })
    }

    /// Places the constants on `tape`.
    pub fn register(&self, tape: &mut Tape) -> GraphInputs {
        GraphInputs {
            adjacency: tape.constant(self.adjacency.clone()),
            attributes: tape.constant(self.attributes.clone()),
            propagated: tape.constant(self.propagated.clone()),
            neighbourhood: self.neighbourhood.clone(),
        }
    }
}

/// Tape handles of a [`GraphContext`].
pub struct GraphInputs {
    pub adjacency: Var,
    pub attributes: Var,
    pub propagated: Var,
    pub neighbourhood: Rc<[bool]>,
}

/// Two-layer perceptron with relu hidden activation and linear output.
fn mlp(tape: &mut Tape, input: Var, p: &[Var]) -> Result<Var> {
    let h = tape.matmul(input, p[0])?;
    let h = tape.add_row_bias(h, p[1])?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, p[2])?;
    tape.add_row_bias(o, p[3])
}

/// Hidden bias at initialization. Slightly positive so that an all-zero
/// input row (an isolated node) still maps to a nonzero embedding.
const HIDDEN_BIAS_INIT: f64 = 0.1;

fn mlp_params<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Vec<Matrix> {
    vec![
        Matrix::glorot(input, hidden, rng),
        Matrix::filled(1, hidden, HIDDEN_BIAS_INIT),
        Matrix::glorot(hidden, output, rng),
        Matrix::zeros(1, output),
    ]
}

/// Cosine similarity of the rows of `f` with negatives clamped to zero.
fn clamped_self_similarity(tape: &mut Tape, f: Var) -> Result<Var> {
    let s = tape.cosine_similarity_matrix(f, f)?;
    tape.relu(s)
}

#[derive(Clone, Debug)]
pub struct StructureAugmentor {
    kind: StructureKind,
    params: Vec<Matrix>,
}

impl StructureAugmentor {
    /// Initializes parameters for a graph with `n` nodes and `d` attributes.
    pub fn new<R: Rng + ?Sized>(kind: StructureKind, n: usize, d: usize, hidden: usize, rng: &mut R) -> Self {
        let params = match kind {
            StructureKind::Mlp => mlp_params(n, hidden, hidden, rng),
            StructureKind::Gcn => vec![Matrix::glorot(d, hidden, rng)],
            StructureKind::Attention => vec![Matrix::glorot(d, hidden, rng), Matrix::glorot(hidden, 2, rng)],
            StructureKind::Identity => Vec::new(),
        };
        StructureAugmentor { kind, params }
    }

    /// Uses the given parameters, checked against the layout of `kind`.
    pub fn from_params(kind: StructureKind, params: Vec<Matrix>) -> Result<Self> {
        let ok = match kind {
            StructureKind::Mlp => {
                params.len() == 4
                    && params[1].shape() == (1, params[0].cols())
                    && params[2].rows() == params[0].cols()
                    && params[3].shape() == (1, params[2].cols())
            }
            StructureKind::Gcn => params.len() == 1,
            StructureKind::Attention => params.len() == 2 && params[1].shape() == (params[0].cols(), 2),
            StructureKind::Identity => params.is_empty(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("parameter layout does not fit a {kind} structure augmentor")));
        }
        Ok(StructureAugmentor { kind, params })
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    /// Records the forward pass; `p` are this augmentor's registered params.
    pub fn forward(&self, tape: &mut Tape, g: &GraphInputs, p: &[Var]) -> Result<Var> {
        match self.kind {
            StructureKind::Mlp => {
                let f = mlp(tape, g.adjacency, p)?;
                clamped_self_similarity(tape, f)
            }
            StructureKind::Gcn => {
                let f = tape.matmul(g.propagated, p[0])?;
                let f = tape.relu(f)?;
                clamped_self_similarity(tape, f)
            }
            StructureKind::Attention => {
                let h = tape.matmul(g.attributes, p[0])?;
                let scores = tape.matmul(h, p[1])?;
                let left = tape.col_slice(scores, 0, 1)?;
                let right = tape.col_slice(scores, 1, 2)?;
                let raw = tape.outer_sum(left, right)?;
                let raw = tape.activation(raw, Activation::LeakyRelu(ATTENTION_SLOPE))?;
                tape.masked_row_softmax(raw, &g.neighbourhood)
            }
            StructureKind::Identity => Ok(g.adjacency),
        }
    }

    /// Evaluates `Aug_S` for `graph` outside of training.
    pub fn apply(&self, graph: &Graph) -> Result<Matrix> {
        let mut tape = Tape::new();
        let inputs = GraphContext::new(graph)?.register(&mut tape);
        let vars: Vec<Var> = self.params.iter().map(|m| tape.param(m.clone())).collect();
        let out = self.forward(&mut tape, &inputs, &vars)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Clone, Debug)]
pub struct AttributeAugmentor {
    kind: AttributeKind,
    params: Vec<Matrix>,
}

impl AttributeAugmentor {
    pub fn new<R: Rng + ?Sized>(kind: AttributeKind, d: usize, hidden: usize, rng: &mut R) -> Self {
        let params = match kind {
            AttributeKind::Mlp => mlp_params(d, hidden, d, rng),
            AttributeKind::Attention => (0..3).map(|_| Matrix::glorot(d, d, rng)).collect(),
            AttributeKind::Identity => Vec::new(),
        };
        AttributeAugmentor { kind, params }
    }

    pub fn from_params(kind: AttributeKind, params: Vec<Matrix>) -> Result<Self> {
        let ok = match kind {
            AttributeKind::Mlp => {
                params.len() == 4
                    && params[1].shape() == (1, params[0].cols())
                    && params[2].rows() == params[0].cols()
                    && params[2].cols() == params[0].rows()
                    && params[3].shape() == (1, params[2].cols())
            }
            AttributeKind::Attention => {
                params.len() == 3 && params.iter().all(|w| w.rows() == w.cols() && w.shape() == params[0].shape())
            }
            AttributeKind::Identity => params.is_empty(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("parameter layout does not fit a {kind} attribute augmentor")));
        }
        Ok(AttributeAugmentor { kind, params })
    }

    pub fn kind(&self) -> AttributeKind {
        self.kind
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn forward(&self, tape: &mut Tape, g: &GraphInputs, p: &[Var]) -> Result<Var> {
        match self.kind {
            AttributeKind::Mlp => mlp(tape, g.attributes, p),
            AttributeKind::Attention => {
                let d = tape.shape(g.attributes).1;
                // row-major forms of Q = W_q Xᵀ etc.: Qᵀ = X W_qᵀ
                let q = tape.matmul_nt(g.attributes, p[0])?;
                let k = tape.matmul_nt(g.attributes, p[1])?;
                let v = tape.matmul_nt(g.attributes, p[2])?;
                let logits = tape.matmul_nt(k, q)?;
                let weights = tape.row_softmax(logits, 1.0 / (d as f64).sqrt())?;
                tape.matmul(weights, v)
            }
            AttributeKind::Identity => Ok(g.attributes),
        }
    }

    pub fn apply(&self, graph: &Graph) -> Result<Matrix> {
        let mut tape = Tape::new();
        let inputs = GraphContext::new(graph)?.register(&mut tape);
        let vars: Vec<Var> = self.params.iter().map(|m| tape.param(m.clone())).collect();
        let out = self.forward(&mut tape, &inputs, &vars)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_graph(n: usize, d: usize, seed: u64) -> Graph {
        let mut r = rng(seed);
        let mut adj = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if r.random::<f64>() < 0.4 {
                    adj[(i, j)] = 1.0;
                    adj[(j, i)] = 1.0;
                }
            }
        }
        Graph::new(Matrix::standard_normal(n, d, &mut r), adj, None, Some(2)).unwrap()
    }

    fn path3(x: Matrix) -> Graph {
        let adj = Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
        Graph::new(x, adj, None, Some(2)).unwrap()
    }

    fn relu(v: f64) -> f64 {
        v.max(0.0)
    }

    /// Straight-line cosine of two slices, 0 for zero vectors.
    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    /// Per-row perceptron written out with explicit loops.
    fn mlp_oracle(x: &Matrix, p: &[Matrix]) -> Matrix {
        let (w1, b1, w2, b2) = (&p[0], &p[1], &p[2], &p[3]);
        let mut out = Matrix::zeros(x.rows(), w2.cols());
        for i in 0..x.rows() {
            let mut hidden = vec![0.0; w1.cols()];
            for (h, hv) in hidden.iter_mut().enumerate() {
                let mut s = b1[(0, h)];
                for c in 0..x.cols() {
                    s += x[(i, c)] * w1[(c, h)];
                }
                *hv = relu(s);
            }
            for o in 0..w2.cols() {
                let mut s = b2[(0, o)];
                for (h, hv) in hidden.iter().enumerate() {
                    s += hv * w2[(h, o)];
                }
                out[(i, o)] = s;
            }
        }
        out
    }

    fn similarity_oracle(f: &Matrix) -> Matrix {
        let n = f.rows();
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = relu(cosine(f.row(i), f.row(j)));
            }
        }
        s
    }

    #[test]
    fn mlp_structure_matches_oracle_and_is_symmetric() {
        let g = random_graph(3, 4, 1);
        let aug = StructureAugmentor::new(StructureKind::Mlp, 3, 4, 5, &mut rng(2));
        let s = aug.apply(&g).unwrap();
        let expected = similarity_oracle(&mlp_oracle(g.adjacency(), aug.params()));
        assert!(s.max_abs_diff(&expected) < 1e-12);
        assert!(s.is_symmetric(1e-10));
        for i in 0..3 {
            assert!((s[(i, i)] - 1.0).abs() < 1e-12);
        }
        assert!(s.as_slice().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn mlp_structure_identical_rows_have_unit_affinity() {
        // nodes 0 and 2 of the path share the neighbourhood {1}
        let g = path3(Matrix::identity(3));
        let aug = StructureAugmentor::new(StructureKind::Mlp, 3, 3, 6, &mut rng(3));
        let s = aug.apply(&g).unwrap();
        assert!((s[(0, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gcn_structure_matches_oracle() {
        let g = random_graph(4, 3, 4);
        let aug = StructureAugmentor::new(StructureKind::Gcn, 4, 3, 5, &mut rng(5));
        let s = aug.apply(&g).unwrap();
        // Â built by hand from degrees of A + I
        let n = 4;
        let a = g.adjacency();
        let deg: Vec<f64> = (0..n).map(|i| 1.0 + (0..n).map(|j| a[(i, j)]).sum::<f64>()).collect();
        let w = &aug.params()[0];
        let x = g.attributes();
        let mut f = Matrix::zeros(n, w.cols());
        for i in 0..n {
            for h in 0..w.cols() {
                let mut s = 0.0;
                for j in 0..n {
                    let aij = a[(i, j)] + if i == j { 1.0 } else { 0.0 };
                    let coef = aij / (deg[i] * deg[j]).sqrt();
                    for c in 0..x.cols() {
                        s += coef * x[(j, c)] * w[(c, h)];
                    }
                }
                f[(i, h)] = relu(s);
            }
        }
        assert!(s.max_abs_diff(&similarity_oracle(&f)) < 1e-12);
        assert!(s.is_symmetric(1e-10));
    }

    #[test]
    fn gcn_structure_single_node_identity_weight() {
        let g = Graph::new(Matrix::from_rows(&[[0.5, -1.0, 2.0]]).unwrap(), Matrix::zeros(1, 1), None, Some(1)).unwrap();
        let aug = StructureAugmentor::from_params(StructureKind::Gcn, vec![Matrix::identity(3)]).unwrap();
        assert!((aug.apply(&g).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gcn_structure_duplicate_nodes() {
        // nodes 0 and 2 have equal attributes and equal neighbourhoods
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [1.0, 2.0]]).unwrap();
        let g = path3(x);
        let aug = StructureAugmentor::new(StructureKind::Gcn, 3, 2, 4, &mut rng(6));
        let s = aug.apply(&g).unwrap();
        // an all-negative pre-activation row leaves F zero and the affinity 0
        assert!((s[(0, 2)] - s[(0, 0)]).abs() < 1e-12);
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12 || s[(0, 0)] == 0.0);
    }

    #[test]
    fn attention_structure_matches_per_edge_oracle() {
        let g = path3(Matrix::standard_normal(3, 4, &mut rng(7)));
        let aug = StructureAugmentor::new(StructureKind::Attention, 3, 4, 3, &mut rng(8));
        let s = aug.apply(&g).unwrap();
        let (w, nv) = (&aug.params()[0], &aug.params()[1]);
        let x = g.attributes();
        let wx = |i: usize| -> Vec<f64> {
            (0..w.cols()).map(|h| (0..x.cols()).map(|c| x[(i, c)] * w[(c, h)]).sum()).collect()
        };
        let neighbours = [vec![0, 1], vec![0, 1, 2], vec![1, 2]];
        for i in 0..3 {
            let score = |j: usize| {
                let (wi, wj) = (wx(i), wx(j));
                let raw: f64 = (0..w.cols()).map(|h| nv[(h, 0)] * wi[h] + nv[(h, 1)] * wj[h]).sum();
                if raw > 0.0 { raw } else { 0.2 * raw }
            };
            let total: f64 = neighbours[i].iter().map(|&j| score(j).exp()).sum();
            for j in 0..3 {
                let expected = if neighbours[i].contains(&j) { score(j).exp() / total } else { 0.0 };
                assert!((s[(i, j)] - expected).abs() < 1e-12, "({i},{j})");
            }
        }
        assert_eq!(s[(0, 2)], 0.0);
        assert!((s[(0, 0)] + s[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_structure_zero_vector_is_uniform() {
        let g = path3(Matrix::standard_normal(3, 2, &mut rng(9)));
        let w = Matrix::glorot(2, 4, &mut rng(10));
        let aug = StructureAugmentor::from_params(StructureKind::Attention, vec![w, Matrix::zeros(4, 2)]).unwrap();
        let s = aug.apply(&g).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((s[(1, 2)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn attention_support_and_row_sums_on_random_graphs() {
        for seed in 0..5 {
            let g = random_graph(7, 3, 100 + seed);
            let aug = StructureAugmentor::new(StructureKind::Attention, 7, 3, 4, &mut rng(seed));
            let s = aug.apply(&g).unwrap();
            for i in 0..7 {
                let mut sum = 0.0;
                for j in 0..7 {
                    if i != j && g.adjacency()[(i, j)] == 0.0 {
                        assert_eq!(s[(i, j)], 0.0);
                    }
                    sum += s[(i, j)];
                }
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mlp_attribute_special_weights() {
        let g = random_graph(4, 3, 11);
        let zero = AttributeAugmentor::from_params(
            AttributeKind::Mlp,
            vec![Matrix::zeros(3, 5), Matrix::zeros(1, 5), Matrix::zeros(5, 3), Matrix::zeros(1, 3)],
        )
        .unwrap();
        assert_eq!(zero.apply(&g).unwrap(), Matrix::zeros(4, 3));

        let nonneg = g.attributes().map(f64::abs);
        let g = g.with_attributes(nonneg.clone()).unwrap();
        let id = AttributeAugmentor::from_params(
            AttributeKind::Mlp,
            vec![Matrix::identity(3), Matrix::zeros(1, 3), Matrix::identity(3), Matrix::zeros(1, 3)],
        )
        .unwrap();
        assert_eq!(id.apply(&g).unwrap(), nonneg);

        let aug = AttributeAugmentor::new(AttributeKind::Mlp, 3, 6, &mut rng(12));
        let out = aug.apply(&g).unwrap();
        assert!(out.max_abs_diff(&mlp_oracle(&nonneg, aug.params())) < 1e-12);
    }

    #[test]
    fn attention_attribute_identity_case() {
        let g = Graph::new(Matrix::identity(2), Matrix::zeros(2, 2), None, Some(2)).unwrap();
        let aug = AttributeAugmentor::from_params(AttributeKind::Attention, vec![Matrix::identity(2); 3]).unwrap();
        let out = aug.apply(&g).unwrap();
        // e^{1/√2} / (e^{1/√2} + 1)
        let p = (0.5f64.sqrt()).exp() / ((0.5f64.sqrt()).exp() + 1.0);
        let expected = Matrix::from_rows(&[[p, 1.0 - p], [1.0 - p, p]]).unwrap();
        assert!(out.max_abs_diff(&expected) < 1e-12);
        assert!((p - 0.6698).abs() < 1e-4);
    }

    #[test]
    fn attention_attribute_identical_rows() {
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0]; 4]).unwrap();
        let g = Graph::new(x, Matrix::zeros(4, 4), None, Some(2)).unwrap();
        let aug = AttributeAugmentor::new(AttributeKind::Attention, 3, 0, &mut rng(13));
        let out = aug.apply(&g).unwrap();
        for i in 1..4 {
            for c in 0..3 {
                assert!((out[(i, c)] - out[(0, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kinds_pass_through() {
        let g = random_graph(5, 2, 14);
        let s = StructureAugmentor::new(StructureKind::Identity, 5, 2, 3, &mut rng(0));
        let a = AttributeAugmentor::new(AttributeKind::Identity, 2, 3, &mut rng(0));
        assert_eq!(&s.apply(&g).unwrap(), g.adjacency());
        assert_eq!(&a.apply(&g).unwrap(), g.attributes());
    }

    #[test]
    fn from_params_rejects_bad_layouts() {
        assert!(StructureAugmentor::from_params(StructureKind::Attention, vec![Matrix::zeros(2, 3)]).is_err());
        assert!(AttributeAugmentor::from_params(AttributeKind::Attention, vec![Matrix::zeros(2, 3); 3]).is_err());
    }

    /// Gradient of `Σ C ⊙ out` w.r.t. every augmentor parameter.
    fn gradient_check(g: &Graph, params: &[Matrix], forward: impl Fn(&mut Tape, &GraphInputs, &[Var]) -> Result<Var>) {
        let ctx = GraphContext::new(g).unwrap();
        let probe_weights = |shape: (usize, usize)| Matrix::standard_normal(shape.0, shape.1, &mut rng(99));
        let eval = |ps: &[Matrix]| -> (f64, Vec<Matrix>) {
            let mut tape = Tape::new();
            let inputs = ctx.register(&mut tape);
            let vars: Vec<Var> = ps.iter().map(|m| tape.param(m.clone())).collect();
            let out = forward(&mut tape, &inputs, &vars).unwrap();
            let c = tape.constant(probe_weights(tape.shape(out)));
            let h = tape.hadamard(out, c).unwrap();
            let loss = tape.sum(h).unwrap();
            let grads = tape.backward(loss).unwrap();
            let gs = vars.iter().zip(ps).map(|(v, m)| grads.wrt(*v, m.shape())).collect();
            (tape.scalar(loss), gs)
        };
        let (_, analytic) = eval(params);
        for k in 0..params.len() {
            let numeric = central_difference(&params[k], 1e-4, |probe| {
                let mut ps = params.to_vec();
                ps[k] = probe.clone();
                eval(&ps).0
            });
            let err = relative_error(&analytic[k], &numeric);
            assert!(err < 1e-5, "param {k}: {err:e}\n{:?}\n{:?}", analytic[k], numeric);
        }
    }

    #[test]
    fn augmentor_gradients_match_finite_differences() {
        let g = random_graph(6, 3, 15);
        for kind in [StructureKind::Mlp, StructureKind::Gcn, StructureKind::Attention] {
            let aug = StructureAugmentor::new(kind, 6, 3, 4, &mut rng(16));
            gradient_check(&g, aug.params(), |t, gi, p| aug.forward(t, gi, p));
        }
        for kind in [AttributeKind::Mlp, AttributeKind::Attention] {
            let aug = AttributeAugmentor::new(kind, 3, 4, &mut rng(17));
            gradient_check(&g, aug.params(), |t, gi, p| aug.forward(t, gi, p));
        }
    }
}
