//! Attributed graphs: loading, validation, renormalized adjacency and the
//! low-pass feature filter used by the encoder.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// An undirected attributed graph with optional ground truth.
#[derive(Clone, Debug)]
pub struct Graph {
    x: Matrix,
    adj: Matrix,
    labels: Option<Vec<usize>>,
    k: usize,
}

impl Graph {
    /// Validates and assembles a graph. `k` defaults to the number of label
    /// classes when labels are given.
    pub fn new(x: Matrix, adj: Matrix, labels: Option<Vec<usize>>, k: Option<usize>) -> Result<Self> {
        let n = x.rows();
        if adj.shape() != (n, n) {
            return Err(Error::Dataset(format!(
                "adjacency is {}x{} but there are {n} attribute rows",
                adj.rows(),
                adj.cols()
            )));
        }
        x.ensure_finite("attributes")
            .map_err(|_| Error::Dataset("attributes contain non-finite values".into()))?;
        for i in 0..n {
            if adj[(i, i)] != 0.0 {
                return Err(Error::Dataset(format!("self-loop on node {i}")));
            }
            for j in 0..n {
                let v = adj[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Dataset(format!("adjacency entry ({i},{j}) = {v} is not binary")));
                }
                if v != adj[(j, i)] {
                    return Err(Error::Dataset(format!("adjacency is not symmetric at ({i},{j})")));
                }
            }
        }
        let label_k = labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1));
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dataset(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
        }
        let k = match (k, label_k) {
            (Some(k), Some(lk)) if lk > k => {
                return Err(Error::Dataset(format!(
                    "labels take {lk} values but k = {k}"
                )))
            }
            (Some(k), _) => k,
            (None, Some(lk)) => lk,
            (None, None) => {
                return Err(Error::Dataset(
                    "cluster count k must be given when labels are absent".into(),
                ))
            }
        };
        Ok(Graph { x, adj, labels, k })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn attributes(&self) -> &Matrix {
        &self.x
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adj
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adj[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn with_attributes(&self, x: Matrix) -> Result<Graph> {
        Graph::new(x, self.adj.clone(), self.labels.clone(), Some(self.k))
    }

    pub fn with_adjacency(&self, adj: Matrix) -> Result<Graph> {
        Graph::new(self.x.clone(), adj, self.labels.clone(), Some(self.k))
    }

    /// Applies a row normalization to the attributes.
    pub fn preprocess(&self, kind: Preprocess) -> Graph {
        let mut x = self.x.clone();
        for r in 0..x.rows() {
            let row = x.row_mut(r);
            let norm = match kind {
                Preprocess::None => continue,
                Preprocess::RowL1 => row.iter().map(|v| v.abs()).sum::<f64>(),
                Preprocess::RowL2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
            };
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Graph {
            x,
            adj: self.adj.clone(),
            labels: self.labels.clone(),
            k: self.k,
        }
    }

    /// Writes the attribute, edge and (when present) label files.
    pub fn save(&self, attr_path: &Path, edge_path: &Path, label_path: Option<&Path>) -> Result<()> {
        let mut attr = String::new();
        for row in self.x.iter_rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            attr.push_str(&line.join(","));
            attr.push('\n');
        }
        write_file(attr_path, attr.as_bytes())?;

        let mut edges = String::new();
        for (u, v) in self.edges() {
            edges.push_str(&format!("{u}\t{v}\n"));
        }
        write_file(edge_path, edges.as_bytes())?;

        if let (Some(path), Some(labels)) = (label_path, &self.labels) {
            let mut out = String::new();
            for l in labels {
                out.push_str(&format!("{l}\n"));
            }
            write_file(path, out.as_bytes())?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Optional attribute normalization applied after loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    #[default]
    None,
    RowL1,
    RowL2,
}

impl std::str::FromStr for Preprocess {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Preprocess::None),
            "row_l1" => Ok(Preprocess::RowL1),
            "row_l2" => Ok(Preprocess::RowL2),
            _ => Err(format!("expected none|row_l1|row_l2, got `{s}`")),
        }
    }
}

impl std::fmt::Display for Preprocess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preprocess::None => "none",
            Preprocess::RowL1 => "row_l1",
            Preprocess::RowL2 => "row_l2",
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a graph from an attribute file (comma-separated rows), an edge list
/// (`u<TAB>v`, 0-based, undirected) and an optional label file (one integer
/// per line). Duplicate edges collapse and self-loops are dropped.
pub fn load_graph(attr_path: &Path, edge_path: &Path, label_path: Option<&Path>, k: Option<usize>) -> Result<Graph> {
    let text = read(attr_path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(attr_path, lineno + 1, format!("bad attribute value `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    attr_path,
                    lineno + 1,
                    format!("ragged row: {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Dataset(format!("{} has no attribute rows", attr_path.display())));
    }
    let x = Matrix::from_rows(&rows)?;
    let n = x.rows();

    let text = read(edge_path)?;
    let mut adj = Matrix::zeros(n, n);
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(first) = parts.next() else { continue };
        let ends = [Some(first), parts.next()]
            .into_iter()
            .map(|t| {
                let t = t.ok_or_else(|| parse_err(edge_path, lineno + 1, "expected two node ids"))?;
                let id: usize = t
                    .parse()
                    .map_err(|_| parse_err(edge_path, lineno + 1, format!("bad node id `{t}`")))?;
                if id >= n {
                    return Err(parse_err(
                        edge_path,
                        lineno + 1,
                        format!("node id {id} out of range for {n} nodes"),
                    ));
                }
                Ok(id)
            })
            .collect::<Result<Vec<usize>>>()?;
        if parts.next().is_some() {
            return Err(parse_err(edge_path, lineno + 1, "expected exactly two node ids"));
        }
        let (u, v) = (ends[0], ends[1]);
        if u != v {
            adj[(u, v)] = 1.0;
            adj[(v, u)] = 1.0;
        }
    }

    let labels = match label_path {
        None => None,
        Some(path) => {
            let text = read(path)?;
            let mut labels = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                labels.push(
                    t.parse::<usize>()
                        .map_err(|_| parse_err(path, lineno + 1, format!("bad label `{t}`")))?,
                );
            }
            Some(labels)
        }
    };
    Graph::new(x, adj, labels, k)
}

/// Renormalized operators of a graph.
#[derive(Clone, Debug)]
pub struct NormalizedGraph {
    /// Degrees of `A + I`.
    pub degree: Vec<f64>,
    /// `A + I`.
    pub a_tilde: Matrix,
    /// `D̂^{-1/2} (A + I) D̂^{-1/2}`.
    pub a_hat: Matrix,
    /// `I − Â`.
    pub l_tilde: Matrix,
}

/// Symmetric renormalization of a (possibly weighted) nonnegative adjacency.
pub fn normalize_adjacency(adj: &Matrix) -> NormalizedGraph {
    let n = adj.rows();
    let mut a_tilde = adj.clone();
    for i in 0..n {
        a_tilde[(i, i)] += 1.0;
    }
    let degree = a_tilde.row_sums();
    let inv: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut a_hat = Matrix::zeros(n, n);
    let mut l_tilde = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            let v = inv[i] * a_tilde[(i, j)] * inv[j];
            a_hat[(i, j)] = v;
            l_tilde[(i, j)] -= v;
        }
    }
    NormalizedGraph {
        degree,
        a_tilde,
        a_hat,
        l_tilde,
    }
}

pub fn normalize(g: &Graph) -> NormalizedGraph {
    normalize_adjacency(g.adjacency())
}

/// `Â^t X`, applied one multiplication at a time.
pub fn graph_filter(ng: &NormalizedGraph, x: &Matrix, t: usize) -> Result<Matrix> {
    let mut out = x.clone();
    for _ in 0..t {
        out = ng.a_hat.matmul(&out)?;
    }
    Ok(out)
}
