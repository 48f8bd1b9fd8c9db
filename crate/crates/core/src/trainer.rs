//! Two-stage training loop.
//!
//! Each epoch augments the graph, encodes the original and augmented views
//! with a shared encoder, clusters the fused embedding, optionally refines
//! the learned structure (stage two), and takes one Adam step on
//! `L_a + α L_c` over every augmentor and encoder parameter.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::{AttributeAugmentor, AttributeKind, GraphContext, GraphInputs, StructureAugmentor, StructureKind};
use crate::autodiff::{NtXentVariant, Tape, Var};
use crate::baseline::{baseline_augment, BaselineKind, FixedView};
use crate::cluster::{ClusterResult, KMeans};
use crate::encoder::{fuse, Encoder};
use crate::error::{Error, Result};
use crate::graph::{normalize, Graph};
use crate::loss::{augmentation_loss, contrastive_loss_from_similarity, total_loss};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, MetricReport, NmiNorm};
use crate::optim::{clip_global_norm, Adam};
use crate::refine::{confidence_select, cross_view_similarity, pseudo_label_matrix, refine, ConfidenceRule};

/// Source of the second view.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Augmentation {
    /// Learned by the structure and attribute augmentors.
    #[default]
    Learnable,
    /// A fixed perturbation of the input graph.
    Baseline(BaselineKind),
}

impl FromStr for Augmentation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "learnable" {
            return Ok(Augmentation::Learnable);
        }
        s.parse::<BaselineKind>()
            .map(Augmentation::Baseline)
            .map_err(|_| format!("expected learnable|mask_feature|drop_edges|add_edges|diffusion, got `{s}`"))
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Augmentation::Learnable => f.write_str("learnable"),
            Augmentation::Baseline(kind) => kind.fmt(f),
        }
    }
}

/// Default learning rate for a known benchmark name.
pub fn preset_learning_rate(dataset: &str) -> Option<f64> {
    match dataset.to_ascii_lowercase().as_str() {
        "uat" => Some(1e-3),
        "cora" | "citeseer" => Some(1e-4),
        "amap" | "bat" => Some(1e-5),
        "eat" => Some(1e-7),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub tau: f64,
    pub temp: f64,
    pub lr: f64,
    pub epochs: usize,
    /// First epoch with refinement; equal to `epochs` disables stage two.
    pub stage2_start: usize,
    pub seed: u64,
    pub structure_augmentor: StructureKind,
    pub attribute_augmentor: AttributeKind,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub filter_depth: usize,
    /// Global gradient-norm cap; `0` disables clipping.
    pub grad_clip: f64,
    pub confidence_rule: ConfidenceRule,
    pub ntxent_variant: NtXentVariant,
    pub nmi_norm: NmiNorm,
    pub augmentation: Augmentation,
    pub augmentation_rate: f64,
    /// Keep augmentor parameters at their initial values.
    pub freeze_augmentors: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            tau: 0.95,
            temp: 0.5,
            lr: 1e-4,
            epochs: 400,
            stage2_start: 200,
            seed: 0,
            structure_augmentor: StructureKind::Attention,
            attribute_augmentor: AttributeKind::Mlp,
            hidden_dim: 256,
            embedding_dim: 128,
            filter_depth: 2,
            grad_clip: 5.0,
            confidence_rule: ConfidenceRule::Fraction,
            ntxent_variant: NtXentVariant::ExcludePositive,
            nmi_norm: NmiNorm::Geometric,
            augmentation: Augmentation::Learnable,
            augmentation_rate: 0.2,
            freeze_augmentors: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha = {} must be finite and >= 0", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau = {} must lie in (0, 1]", self.tau));
        }
        if !(self.temp > 0.0) || !self.temp.is_finite() {
            return bad(format!("temp = {} must be positive", self.temp));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr = {} must be positive", self.lr));
        }
        if self.stage2_start > self.epochs {
            return bad(format!(
                "stage2_start = {} exceeds epochs = {}",
                self.stage2_start, self.epochs
            ));
        }
        if self.hidden_dim == 0 || self.embedding_dim == 0 {
            return bad("hidden_dim and embedding_dim must be positive".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad(format!("grad_clip = {} must be >= 0", self.grad_clip));
        }
        if !(0.0..=1.0).contains(&self.augmentation_rate) {
            return bad(format!("augmentation_rate = {} is outside [0, 1]", self.augmentation_rate));
        }
        Ok(())
    }
}

/// Independent seed for one consumer of randomness (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_BASELINE: u64 = 2;
const STREAM_FINAL_KMEANS: u64 = 3;
const STREAM_EPOCH_KMEANS: u64 = 1 << 32;

/// Final clustering restarts.
const FINAL_N_INIT: usize = 10;

/// All trainable parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub structure: StructureAugmentor,
    pub attribute: AttributeAugmentor,
    pub encoder: Encoder,
}

impl Model {
    pub fn new(cfg: &TrainConfig, graph: &Graph) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_INIT));
        let (skind, akind) = match cfg.augmentation {
            Augmentation::Learnable => (cfg.structure_augmentor, cfg.attribute_augmentor),
            Augmentation::Baseline(_) => (StructureKind::Identity, AttributeKind::Identity),
        };
        let (n, d) = (graph.n(), graph.d());
        Model {
            structure: StructureAugmentor::new(skind, n, d, cfg.hidden_dim, &mut rng),
            attribute: AttributeAugmentor::new(akind, d, cfg.hidden_dim, &mut rng),
            encoder: Encoder::new(d, cfg.embedding_dim, cfg.filter_depth, &mut rng),
        }
    }

    /// Structure, attribute and encoder parameters, in that order.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.structure.params().iter().collect();
        out.extend(self.attribute.params());
        out.push(self.encoder.weight());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.structure.params_mut().iter_mut().collect();
        out.extend(self.attribute.params_mut().iter_mut());
        out.push(self.encoder.weight_mut());
        out
    }

    /// Number of leading entries of [`Model::params`] owned by augmentors.
    pub fn augmentor_param_count(&self) -> usize {
        self.structure.params().len() + self.attribute.params().len()
    }
}

/// Graph-derived constants shared by every epoch.
#[derive(Clone, Debug)]
pub struct TrainContext {
    pub graph: GraphContext,
    /// `Â^t X`, the encoder input of the original view.
    pub filtered: Matrix,
    pub fixed_view: Option<FixedView>,
    pub labels: Option<Vec<usize>>,
    pub k: usize,
}

impl TrainContext {
    pub fn new(cfg: &TrainConfig, graph: &Graph) -> Result<Self> {
        let ng = normalize(graph);
        let filtered = crate::graph::graph_filter(&ng, graph.attributes(), cfg.filter_depth)?;
        let fixed_view = match cfg.augmentation {
            Augmentation::Learnable => None,
            Augmentation::Baseline(kind) => Some(baseline_augment(
                graph,
                kind,
                cfg.augmentation_rate,
                derive_seed(cfg.seed, STREAM_BASELINE),
            )?),
        };
        Ok(TrainContext {
            graph: GraphContext::new(graph)?,
            filtered,
            fixed_view,
            labels: graph.labels().map(<[usize]>::to_vec),
            k: graph.k(),
        })
    }
}

/// Forward pass recorded on a tape.
pub struct Recorded {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub inputs: GraphInputs,
    pub aug_s: Var,
    pub aug_x: Var,
    pub f_v1: Var,
    pub f_v2: Var,
    pub fused: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Losses {
    pub total: f64,
    pub augmentation: f64,
    pub contrastive: f64,
}

/// Augments, encodes both views and fuses them.
pub fn record_forward(model: &Model, ctx: &TrainContext) -> Result<Recorded> {
    let mut tape = Tape::new();
    let inputs = ctx.graph.register(&mut tape);
    let params: Vec<Var> = model.params().into_iter().map(|m| tape.param(m.clone())).collect();
    let ns = model.structure.params().len();
    let na = model.attribute.params().len();
    let (aug_s, aug_x) = match &ctx.fixed_view {
        Some(view) => (
            tape.constant(view.structure.clone()),
            tape.constant(view.attributes.clone()),
        ),
        None => (
            model.structure.forward(&mut tape, &inputs, &params[..ns])?,
            model.attribute.forward(&mut tape, &inputs, &params[ns..ns + na])?,
        ),
    };
    let weight = params[ns + na];
    let filtered = tape.constant(ctx.filtered.clone());
    let f_v1 = model.encoder.encode_filtered(&mut tape, filtered, weight)?;
    let f_v2 = model.encoder.encode(&mut tape, aug_s, aug_x, weight)?;
    let fused = fuse(&mut tape, f_v1, f_v2)?;
    Ok(Recorded {
        tape,
        params,
        inputs,
        aug_s,
        aug_x,
        f_v1,
        f_v2,
        fused,
    })
}

/// Records `L_a + α L_c`, refining `Aug_S` with the pseudo-label mask `z`
/// when one is given. Returns (total, L_a, L_c).
pub fn record_objective(rec: &mut Recorded, cfg: &TrainConfig, z: Option<&Matrix>) -> Result<(Var, Var, Var)> {
    let tape = &mut rec.tape;
    // one similarity matrix serves both refinement and the contrastive term
    let s = cross_view_similarity(tape, rec.f_v1, rec.f_v2)?;
    let aug_s = match z {
        Some(z) => {
            let z = tape.constant(z.clone());
            refine(tape, rec.aug_s, s, z)?
        }
        None => rec.aug_s,
    };
    let la = augmentation_loss(tape, rec.inputs.adjacency, rec.inputs.attributes, aug_s, rec.aug_x)?;
    let lc = contrastive_loss_from_similarity(tape, s, cfg.temp, cfg.ntxent_variant)?;
    let total = total_loss(tape, la, lc, cfg.alpha)?;
    Ok((total, la, lc))
}

/// Objective value and its gradient for every model parameter, with an
/// optional frozen pseudo-label mask.
pub fn loss_and_gradients(model: &Model, ctx: &TrainContext, cfg: &TrainConfig, z: Option<&Matrix>) -> Result<(Losses, Vec<Matrix>)> {
    let mut rec = record_forward(model, ctx)?;
    let (total, la, lc) = record_objective(&mut rec, cfg, z)?;
    let mut grads = rec.tape.backward(total)?;
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|m| m.shape()).collect();
    let g = rec
        .params
        .iter()
        .zip(shapes)
        .map(|(&v, shape)| grads.take(v).unwrap_or_else(|| Matrix::zeros(shape.0, shape.1)))
        .collect();
    let losses = Losses {
        total: rec.tape.scalar(total),
        augmentation: rec.tape.scalar(la),
        contrastive: rec.tape.scalar(lc),
    };
    Ok((losses, g))
}

/// Objective value only.
pub fn loss_value(model: &Model, ctx: &TrainContext, cfg: &TrainConfig, z: Option<&Matrix>) -> Result<Losses> {
    let mut rec = record_forward(model, ctx)?;
    let (total, la, lc) = record_objective(&mut rec, cfg, z)?;
    Ok(Losses {
        total: rec.tape.scalar(total),
        augmentation: rec.tape.scalar(la),
        contrastive: rec.tape.scalar(lc),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_a: f64,
    pub loss_c: f64,
    /// Pre-clipping global gradient norm.
    pub grad_norm: f64,
    /// High-confidence nodes used for refinement (stage two only).
    pub refined_nodes: Option<usize>,
    pub metrics: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub nodes: usize,
    pub clusters: usize,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: Option<MetricReport>,
    pub final_inertia: f64,
    /// Kept out of the serialized report so equal runs serialize equally.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub embeddings: Matrix,
    pub assignments: Vec<usize>,
    pub model: Model,
}

/// Stateful driver of the epoch loop.
pub struct Trainer {
    cfg: TrainConfig,
    ctx: TrainContext,
    model: Model,
    adam: Adam,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, graph: &Graph) -> Result<Self> {
        cfg.validate()?;
        if graph.k() < 2 || graph.k() > graph.n() {
            return Err(Error::InvalidArgument(format!(
                "cannot form {} clusters from {} nodes",
                graph.k(),
                graph.n()
            )));
        }
        if graph.n() < 2 {
            return Err(Error::InvalidArgument("training needs at least two nodes".into()));
        }
        let ctx = TrainContext::new(&cfg, graph)?;
        let model = Model::new(&cfg, graph);
        let adam = Adam::new(cfg.lr, model.params().iter().map(|m| m.shape()))?;
        Ok(Trainer {
            cfg,
            ctx,
            model,
            adam,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn context(&self) -> &TrainContext {
        &self.ctx
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Runs one epoch and advances the epoch counter.
    pub fn step(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let record = self.run_epoch(epoch).map_err(|e| Error::Training {
            epoch,
            source: Box::new(e),
        })?;
        self.epoch += 1;
        Ok(record)
    }

    fn run_epoch(&mut self, epoch: usize) -> Result<EpochRecord> {
        let cfg = &self.cfg;
        let mut rec = record_forward(&self.model, &self.ctx)?;
        let fused = rec.tape.value(rec.fused).clone();
        let clusters = KMeans::new(self.ctx.k).fit(&fused, derive_seed(cfg.seed, STREAM_EPOCH_KMEANS + epoch as u64))?;

        let (z, refined_nodes) = if epoch >= cfg.stage2_start {
            let conf = confidence_select(&fused, &clusters.centroids, cfg.tau, cfg.confidence_rule)?;
            (Some(pseudo_label_matrix(&conf.labels, &conf.mask)?), Some(conf.selected()))
        } else {
            (None, None)
        };
        let (total, la, lc) = record_objective(&mut rec, cfg, z.as_ref())?;
        let mut adjoints = rec.tape.backward(total)?;
        let params = self.model.params();
        let frozen = if cfg.freeze_augmentors { self.model.augmentor_param_count() } else { 0 };
        let mut grads: Vec<Matrix> = rec
            .params
            .iter()
            .zip(&params)
            .enumerate()
            .map(|(i, (&v, m))| match adjoints.take(v) {
                Some(g) if i >= frozen => g,
                _ => Matrix::zeros(m.rows(), m.cols()),
            })
            .collect();
        drop(params);
        let grad_norm = clip_global_norm(&mut grads, cfg.grad_clip);
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite("gradient norm"));
        }
        self.adam.step(&mut self.model.params_mut(), &grads)?;

        let metrics = match &self.ctx.labels {
            Some(truth) => Some(evaluate(truth, &clusters.assignments, cfg.nmi_norm)?),
            None => None,
        };
        Ok(EpochRecord {
            epoch,
            loss_total: rec.tape.scalar(total),
            loss_a: rec.tape.scalar(la),
            loss_c: rec.tape.scalar(lc),
            grad_norm,
            refined_nodes,
            metrics,
        })
    }

    /// Fused embeddings of the current model.
    pub fn embed(&self) -> Result<Matrix> {
        let rec = record_forward(&self.model, &self.ctx)?;
        Ok(rec.tape.value(rec.fused).clone())
    }

    /// Final clustering of the current embeddings.
    pub fn cluster(&self) -> Result<(Matrix, ClusterResult)> {
        let fused = self.embed()?;
        let result = KMeans::new(self.ctx.k)
            .with_n_init(FINAL_N_INIT)
            .fit(&fused, derive_seed(self.cfg.seed, STREAM_FINAL_KMEANS))?;
        Ok((fused, result))
    }
}

/// Runs every configured epoch and the final clustering.
pub fn train(cfg: &TrainConfig, graph: &Graph) -> Result<TrainOutcome> {
    let start = Instant::now();
    let mut trainer = Trainer::new(cfg.clone(), graph)?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        epochs.push(trainer.step()?);
    }
    let (embeddings, clusters) = trainer.cluster().map_err(|e| Error::Training {
        epoch: cfg.epochs,
        source: Box::new(e),
    })?;
    let final_metrics = match graph.labels() {
        Some(truth) => Some(evaluate(truth, &clusters.assignments, cfg.nmi_norm)?),
        None => None,
    };
    let report = TrainReport {
        nodes: graph.n(),
        clusters: graph.k(),
        epochs,
        final_metrics,
        final_inertia: clusters.inertia,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        embeddings,
        assignments: clusters.assignments,
        model: trainer.model,
    })
}
