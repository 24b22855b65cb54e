//! Mini-batch self-supervised training with adaptive augmentation sampling.
//!
//! Every graph in a batch draws one pool entry, is augmented twice, and
//! contributes the contrastive plus matching loss between its two views. The
//! views' Hungarian F1 against their self-labeled correspondence is fed back
//! to the pool after the optimizer step. Only unlabeled graphs enter this
//! path; labeled pairs are used solely to select the best epoch.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{apply, self_ground_truth, AugError, AugmentedView, Correspondence};
use crate::autodiff::{DiffError, Tape, Var};
use crate::encoder::EncoderDims;
use crate::eval::{evaluate, f1_score};
use crate::graph::{Graph, GraphError, GraphPair};
use crate::loss::{matching_loss, node_contrastive_loss, total_loss, LossConfig, LossError};
use crate::matching::{hungarian, MatchError, MatcherConfig, Setting};
use crate::model::{BoundModel, Model};
use crate::optim::{Adam, AdamConfig};
use crate::pool::{BiasConfig, Pool, PoolError};
use crate::{seeded_rng, Scalar};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("graph {id} has feature width {found}, expected {expected}")]
    FeatureWidth { id: String, expected: usize, found: usize },
    #[error(transparent)]
    Augment(#[from] AugError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl TrainError {
    fn is_non_finite(&self) -> bool {
        matches!(
            self,
            TrainError::Match(MatchError::Diff(DiffError::NonFiniteValue { .. }))
                | TrainError::Match(MatchError::NonFiniteAffinity)
                | TrainError::Loss(LossError::Diff(DiffError::NonFiniteValue { .. }))
        )
    }
}

/// Encoder widths; the input width comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderShape {
    pub hidden: usize,
    pub projection: usize,
    pub layers: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        let d = EncoderDims::new(0);
        Self {
            hidden: d.hidden,
            projection: d.projection,
            layers: d.layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub bias: BiasConfig,
    pub loss: LossConfig,
    pub matcher: MatcherConfig,
    pub encoder: EncoderShape,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Minimum validation F1 gain that resets the patience counter.
    pub early_stop_eps: f64,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bias: BiasConfig::default(),
            loss: LossConfig::default(),
            matcher: MatcherConfig::default(),
            encoder: EncoderShape::default(),
            learning_rate: 5e-3,
            batch_size: 16,
            max_epochs: 200,
            early_stop_eps: 0.001,
            patience: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        self.bias.validate()?;
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if !(self.early_stop_eps >= 0.0) {
            return bad("early_stop_eps must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_opt > 0.0) {
            return bad("beta1 and beta2 must lie in [0, 1) and eps_opt must be positive");
        }
        if !(self.loss.temperature > 0.0) {
            return bad("loss.temperature must be positive");
        }
        if !(self.matcher.tau > 0.0) || self.matcher.max_iters == 0 || !(self.matcher.eps >= 0.0) {
            return bad("matcher needs tau > 0, max_iters >= 1 and eps >= 0");
        }
        let e = &self.encoder;
        if e.hidden == 0 || e.projection == 0 || e.layers == 0 {
            return bad("encoder widths and depth must be positive");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_opt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub l_node: f64,
    pub l_match: f64,
    pub train_f1: f64,
    pub val_f1: f64,
    /// Entropy of the pool's sampling distribution at the end of the epoch.
    pub pool_entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub skipped_batches: usize,
}

impl TrainLog {
    /// `epoch,loss,l_node,l_match,train_f1,val_f1`, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "loss", "l_node", "l_match", "train_f1", "val_f1"])
            .expect("in-memory write");
        for e in &self.epochs {
            w.write_record([e.epoch as f64, e.loss, e.l_node, e.l_match, e.train_f1, e.val_f1].map(|x| x.to_string()))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }
}

pub struct TrainOutcome<T: Scalar> {
    pub model: Model<T>,
    pub pool: Pool,
    pub log: TrainLog,
}

/// Per-graph result of one forward/backward pass.
struct GraphStep<T: Scalar> {
    grads: Vec<Array2<T>>,
    loss: f64,
    l_node: f64,
    l_match: f64,
    f1: f64,
}

/// Relabels view nodes by a random permutation so that node order carries
/// no information about the correspondence.
fn shuffle_view<T: Scalar>(view: AugmentedView<T>, rng: &mut impl Rng) -> AugmentedView<T> {
    let n = view.graph.num_nodes();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut origin_of = vec![None; n];
    for (v, &p) in perm.iter().enumerate() {
        origin_of[p] = view.origin_of[v];
    }
    AugmentedView {
        graph: view.graph.permuted(&perm),
        origin_of,
        trace: view.trace,
    }
}

fn graph_step<T: Scalar>(
    model: &Model<T>,
    graph: &Graph<T>,
    pool: &Pool,
    entry: usize,
    seed: u64,
    loss_cfg: &LossConfig,
) -> Result<Option<GraphStep<T>>, TrainError> {
    let mut rng = seeded_rng(seed, &[]);
    let e = &pool.entries[entry];
    let a = apply(&e.first, graph, &mut rng)?;
    let b = apply(&e.second, graph, &mut rng)?;
    let b = shuffle_view(b, &mut rng);
    let corr = self_ground_truth(&a, &b);
    if corr.is_empty() {
        return Ok(None);
    }
    let tape = Tape::new();
    let bound = model.bind(&tape, true);
    let out = view_pair_loss(&tape, &bound, &a.graph, &b.graph, &corr, &model.matcher, loss_cfg)?;
    let grads = tape.backward(out.total).map_err(LossError::from)?;
    let (total, l_node, l_match, soft) = (out.total, out.l_node, out.l_match, out.soft);
    let f1 = f1_score(&hungarian(&tape.value(soft)), &corr.pairs);
    Ok(Some(GraphStep {
        grads: bound.vars().iter().map(|&v| grads.wrt(v)).collect(),
        loss: tape.scalar(total).as_f64(),
        l_node: tape.scalar(l_node).as_f64(),
        l_match: tape.scalar(l_match).as_f64(),
        f1,
    }))
}

/// Loss terms of one pair of views, recorded on a tape.
pub struct PairLoss {
    pub total: Var,
    pub l_node: Var,
    pub l_match: Var,
    /// Sinkhorn output between the views.
    pub soft: Var,
}

/// Contrastive plus matching loss between two views with self-labeled
/// correspondence `corr`.
pub fn view_pair_loss<T: Scalar>(
    tape: &Tape<T>,
    bound: &BoundModel,
    a: &Graph<T>,
    b: &Graph<T>,
    corr: &Correspondence,
    matcher: &MatcherConfig,
    loss_cfg: &LossConfig,
) -> Result<PairLoss, TrainError> {
    let (soft, ha, hb) = bound.soft_match(tape, a, b, matcher)?;
    let za = bound.encoder.project(tape, ha).map_err(MatchError::from)?;
    let zb = bound.encoder.project(tape, hb).map_err(MatchError::from)?;
    let l_node = node_contrastive_loss(tape, za, zb, corr, T::of(loss_cfg.temperature))?;
    let l_match = matching_loss(tape, soft, corr, loss_cfg)?;
    let total = total_loss(tape, l_node, l_match).map_err(LossError::from)?;
    Ok(PairLoss {
        total,
        l_node,
        l_match,
        soft,
    })
}

/// Trains with a freshly sampled pool.
pub fn train<T: Scalar>(
    graphs: &[Graph<T>],
    val_pairs: &[GraphPair<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let pool = Pool::build(&cfg.bias, &mut seeded_rng(cfg.seed, &[0x9001]))?;
    train_with_pool(graphs, val_pairs, cfg, pool)
}

/// Trains starting from the given pool.
///
/// The monitored quantity is the mean Intersection F1 on `val_pairs`, or the
/// epoch's mean training F1 when no validation pairs are supplied.
pub fn train_with_pool<T: Scalar>(
    graphs: &[Graph<T>],
    val_pairs: &[GraphPair<T>],
    cfg: &TrainConfig,
    mut pool: Pool,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let first = graphs.first().ok_or(TrainError::EmptyDataset)?;
    if pool.is_empty() {
        return Err(TrainError::InvalidConfig("augmentation pool is empty".into()));
    }
    let width = first.feature_dim();
    if let Some(g) = graphs.iter().find(|g| g.feature_dim() != width) {
        return Err(TrainError::FeatureWidth {
            id: g.graph_id.clone(),
            expected: width,
            found: g.feature_dim(),
        });
    }
    let dims = EncoderDims {
        input: width,
        hidden: cfg.encoder.hidden,
        projection: cfg.encoder.projection,
        layers: cfg.encoder.layers,
    };
    let mut model = Model::init(cfg.seed, dims, cfg.matcher.clone());
    let shapes: Vec<_> = model.tensors().iter().map(|t| t.dim()).collect();
    let mut opt = Adam::new(cfg.adam(), &shapes);
    let mut rng = seeded_rng(cfg.seed, &[0x7a11]);
    let mut order: Vec<usize> = (0..graphs.len()).collect();

    let mut log = TrainLog {
        best_val_f1: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best_model = model.clone();
    let mut reference = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut sums, mut n_loss, mut f1_sum, mut n_f1) = ([0.0; 3], 0usize, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let sampler = pool.sampler(cfg.bias.sampler);
            let draws: Vec<(usize, usize, u64)> = batch
                .iter()
                .map(|&g| (g, sampler.sample(&mut rng), rng.random::<u64>()))
                .collect();
            let results: Result<Vec<_>, TrainError> = draws
                .par_iter()
                .map(|&(g, entry, seed)| graph_step(&model, &graphs[g], &pool, entry, seed, &cfg.loss))
                .collect();
            let results = match results {
                Ok(r) => r,
                Err(e) if e.is_non_finite() => {
                    log::warn!("epoch {epoch}: skipping batch after {e}");
                    log.skipped_batches += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let done: Vec<_> = draws
                .iter()
                .zip(results)
                .filter_map(|(d, r)| r.map(|r| (d.1, r)))
                .collect();
            if done.is_empty() {
                continue;
            }
            let scale = T::one() / T::from_usize(done.len()).unwrap();
            let mut grads: Vec<Array2<T>> = shapes.iter().map(|&s| Array2::zeros(s)).collect();
            for (_, step) in &done {
                for (acc, g) in grads.iter_mut().zip(&step.grads) {
                    acc.scaled_add(scale, g);
                }
            }
            opt.step(model.tensors_mut(), &grads);
            for (entry, step) in &done {
                pool.record_score(*entry, step.f1)?;
                sums[0] += step.loss;
                sums[1] += step.l_node;
                sums[2] += step.l_match;
                f1_sum += step.f1;
            }
            n_loss += done.len();
            n_f1 += done.len();
            pool.end_batch_update(&cfg.bias);
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        let train_f1 = mean(f1_sum, n_f1);
        let val_f1 = if val_pairs.is_empty() {
            train_f1
        } else {
            evaluate(&model, val_pairs, Setting::Intersection)?.mean
        };
        log.epochs.push(EpochStats {
            epoch,
            loss: mean(sums[0], n_loss),
            l_node: mean(sums[1], n_loss),
            l_match: mean(sums[2], n_loss),
            train_f1,
            val_f1,
            pool_entropy: pool.entropy(),
        });
        log::info!(
            "epoch {epoch}: loss {:.4} train_f1 {train_f1:.4} val_f1 {val_f1:.4}",
            mean(sums[0], n_loss)
        );
        if val_f1 > log.best_val_f1 {
            log.best_val_f1 = val_f1;
            log.best_epoch = epoch;
            best_model = model.clone();
        }
        if val_f1 > reference + cfg.early_stop_eps {
            reference = val_f1;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best_model,
        pool,
        log,
    })
}
