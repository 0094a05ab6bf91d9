//! Optimization, losses, metrics and the training loop.

use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::fusion::{Injection, Strategy};
use crate::graph::{Graph, LaplacianKind};
use crate::models::{Architecture, GraphInput, ModelConfig, ModelKind, Readout};
use crate::nn::{NormKind, ParamStore, RunningStats};
use crate::pe::{CategoryTable, PeConfig};
use crate::rng::SeedStreams;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
            t: 0,
        }
    }
}

/// One Adam update with bias correction. `weight_decay` adds `λ·θ` to the
/// gradient (L2 regularization).
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension {
            op: "adam_step",
            detail: format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                detail: format!("slot {i}: param {:?}, grad {:?}", p.shape(), g.shape()),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for j in 0..p.len() {
            let gj = g.data()[j] + weight_decay * p[j];
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * gj;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Reduce-on-plateau learning rate. Higher metric values are better.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub lr: f64,
    pub patience: usize,
    pub decay: f64,
    pub floor: f64,
    best: f64,
    bad_epochs: usize,
}

/// Result of feeding one validation metric to the schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrDecision {
    pub lr: f64,
    /// The learning rate fell below the floor.
    pub stop: bool,
}

impl LrSchedule {
    pub fn new(lr: f64, patience: usize, decay: f64, floor: f64) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be ≥ 1".into()));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Config(format!("lr_decay {decay} outside (0,1)")));
        }
        Ok(Self {
            lr,
            patience,
            decay,
            floor,
            best: f64::NEG_INFINITY,
            bad_epochs: 0,
        })
    }

    /// Records one epoch's metric. After `patience` consecutive epochs
    /// without improvement the rate is multiplied by `decay`.
    pub fn step(&mut self, metric: f64) -> LrDecision {
        if metric > self.best {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.decay;
                self.bad_epochs = 0;
            }
        }
        LrDecision {
            lr: self.lr,
            stop: self.lr < self.floor,
        }
    }
}

/// Mean negative log-likelihood over the rows listed in `idx`.
pub fn cross_entropy<'t>(logits: Var<'t>, labels: &[usize], idx: &[usize]) -> Result<Var<'t>> {
    if idx.is_empty() {
        return Err(Error::Contract("cross_entropy over an empty mask".into()));
    }
    if labels.len() != logits.rows() {
        return Err(Error::Dimension {
            op: "cross_entropy",
            detail: format!("{} labels for {} rows", labels.len(), logits.rows()),
        });
    }
    let picked: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let lp = logits.gather_rows(idx)?.log_softmax_rows()?.pick_cols(&picked)?;
    Ok(lp.mean().scale(-1.0))
}

/// Index of the largest entry per row; the first one wins ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows in `idx` whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::MetricUndefined("accuracy over an empty set".into()));
    }
    let pred = argmax_rows(logits);
    let hits = idx.iter().filter(|&&i| pred[i] == labels[i]).count();
    Ok(hits as f64 / idx.len() as f64)
}

/// Area under the ROC curve via the Mann–Whitney statistic with midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "auroc",
            detail: format!("{} scores for {} labels", scores.len(), labels.len()),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain { op: "auroc", detail: "NaN score".into() });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("AUROC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the midrank keeps every quantity an integer
    let mut pos_rank2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let rank2 = (i + 1 + j) as u64;
        pos_rank2 += rank2 * order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j;
    }
    let p = pos as u64;
    let u2 = pos_rank2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * neg as u64) as f64)
}

/// `Σ_{(u,v)∈E} ‖h_u/√(1+d_u) − h_v/√(1+d_v)‖²`.
pub fn dirichlet_energy(h: &Tensor, g: &Graph) -> Result<f64> {
    if h.rows() != g.n() {
        return Err(Error::Dimension {
            op: "dirichlet_energy",
            detail: format!("{} rows for {} nodes", h.rows(), g.n()),
        });
    }
    let scale: Vec<f64> = (0..g.n()).map(|u| 1.0 / (1.0 + g.degree(u) as f64).sqrt()).collect();
    let mut e = 0.0;
    for (u, v) in g.edges() {
        e += h
            .row(u)
            .iter()
            .zip(h.row(v))
            .map(|(a, b)| (a * scale[u] - b * scale[v]).powi(2))
            .sum::<f64>();
    }
    Ok(e)
}

/// Every hyperparameter of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub lr: f64,
    pub patience: usize,
    pub lr_decay: f64,
    pub lr_floor: f64,
    pub epochs: usize,
    /// Graphs per batch for graph-level inputs.
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub curvature: f64,
    pub hidden: usize,
    pub heads: usize,
    pub pe_dim: usize,
    pub pe_layers: usize,
    /// Width of the hyperbolic PE encoder.
    pub pe_hidden: usize,
    pub gt_layers: usize,
    pub norm_kind: NormKind,
    /// `None` disables positional encodings.
    pub category: Option<u32>,
    pub strategy: Strategy,
    pub injection: Injection,
    pub dropout: f64,
    pub laplacian: LaplacianKind,
    pub readout: Readout,
    pub gcnii_alpha: f64,
    pub gcnii_lambda: f64,
    /// Record the Dirichlet energy of the final hidden layer every epoch.
    pub track_energy: bool,
}

impl Default for TrainConfig {
    /// Graph-transformer defaults (4 layers, 8 heads, hidden 80, c = 1,
    /// PE dim 6 from a 2-layer encoder, batch norm, lr 1e-3 with patience 10).
    fn default() -> Self {
        Self {
            model: ModelKind::HypeGt,
            lr: 1e-3,
            patience: 10,
            lr_decay: 0.5,
            lr_floor: 1e-6,
            epochs: 1000,
            batch_size: 128,
            seed: 0,
            weight_decay: 0.0,
            curvature: 1.0,
            hidden: 80,
            heads: 8,
            pe_dim: 6,
            pe_layers: 2,
            pe_hidden: 16,
            gt_layers: 4,
            norm_kind: NormKind::Batch,
            category: Some(1),
            strategy: Strategy::V1,
            injection: Injection::EveryLayer,
            dropout: 0.0,
            laplacian: LaplacianKind::Sym,
            readout: Readout::Node,
            gcnii_alpha: 0.1,
            gcnii_lambda: 0.5,
            track_energy: false,
        }
    }
}

impl TrainConfig {
    /// Deep-GNN defaults: lr 0.01, hidden 64, PE dim 16 from a 2-layer
    /// encoder, dropout 0.5, weight decay 5e-4, 500 epochs.
    pub fn deep_gnn(model: ModelKind) -> Self {
        Self {
            model,
            lr: 0.01,
            epochs: 500,
            weight_decay: 5e-4,
            hidden: 64,
            pe_dim: 16,
            dropout: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lr_floor", self.lr_floor),
            ("curvature", self.curvature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be ≥ 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        LrSchedule::new(self.lr, self.patience, self.lr_decay, self.lr_floor)?;
        if let Some(c) = self.category {
            CategoryTable::default().get(c)?;
        }
        Ok(())
    }

    pub fn pe_config(&self, table: &CategoryTable) -> Result<Option<PeConfig>> {
        let Some(id) = self.category else { return Ok(None) };
        Ok(Some(PeConfig {
            k: self.pe_dim,
            pe_layers: self.pe_layers,
            hidden: self.pe_hidden,
            curvature: self.curvature,
            category: table.get(id)?,
            laplacian: self.laplacian,
            per_component: true,
        }))
    }

    pub fn model_config(&self, in_dim: usize, num_classes: usize, table: &CategoryTable) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            kind: self.model,
            in_dim,
            num_classes,
            hidden: self.hidden,
            heads: self.heads,
            layers: self.gt_layers,
            norm: self.norm_kind,
            dropout: self.dropout,
            strategy: self.strategy,
            injection: self.injection,
            pe: self.pe_config(table)?,
            readout: self.readout,
            gcnii_alpha: self.gcnii_alpha,
            gcnii_lambda: self.gcnii_lambda,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub run: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dirichlet_energy: Option<f64>,
}

impl EpochMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Parameters and normalization statistics at one point of training.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub params: ParamStore,
    pub stats: Vec<RunningStats>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Epoch 0 (initial state) onward; the last entry repeats the best
    /// epoch with its test accuracy and final-layer energy filled in.
    pub history: Vec<EpochMetrics>,
    pub best: Snapshot,
    pub test_acc: f64,
    /// Dirichlet energy of the best checkpoint's final hidden layer.
    pub final_energy: f64,
    pub architecture: Architecture,
}

struct Eval {
    loss: f64,
    val_loss: f64,
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
    hidden: Tensor,
}

fn evaluate(
    arch: &Architecture,
    params: &ParamStore,
    stats: &mut [RunningStats],
    input: &GraphInput,
    g: &Graph,
) -> Result<Eval> {
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let out = arch.forward(&tape, &p, input, stats, false, None)?;
    let logits = out.logits.value();
    let s = g.splits();
    let loss = cross_entropy(out.logits, g.labels(), &s.train)?.value().item()?;
    let val_loss = if s.val.is_empty() {
        loss
    } else {
        cross_entropy(out.logits, g.labels(), &s.val)?.value().item()?
    };
    Ok(Eval {
        loss,
        val_loss,
        train_acc: accuracy(&logits, g.labels(), &s.train)?,
        val_acc: if s.val.is_empty() { 0.0 } else { accuracy(&logits, g.labels(), &s.val)? },
        test_acc: if s.test.is_empty() { 0.0 } else { accuracy(&logits, g.labels(), &s.test)? },
        hidden: (*out.hidden.value()).clone(),
    })
}

/// Trains a node classifier on `g` for `cfg.epochs` epochs (full batch).
///
/// `observer` sees every epoch's metrics and may return `false` to end
/// the run early; the best-validation snapshot is still evaluated on the
/// test split.
pub fn train_loop(
    run: usize,
    cfg: &TrainConfig,
    g: &Graph,
    table: &CategoryTable,
    observer: &mut dyn FnMut(&EpochMetrics) -> bool,
) -> Result<RunResult> {
    cfg.validate()?;
    if g.splits().train.is_empty() {
        return Err(Error::Contract("graph has an empty training split".into()));
    }
    let model_cfg = cfg.model_config(g.features().cols(), g.num_classes(), table)?;
    let streams = SeedStreams::new(cfg.seed);
    let mut init_rng = streams.stream("init");
    let mut drop_rng = streams.stream("dropout");
    let mut params = ParamStore::new();
    let arch = Architecture::new(model_cfg, &mut params, &mut init_rng)?;
    let input = GraphInput::node_level(g, arch.config.pe.as_ref())?;
    let mut stats = arch.initial_stats();
    let mut adam = AdamState::new(params.values());
    let mut schedule = LrSchedule::new(cfg.lr, cfg.patience, cfg.lr_decay, cfg.lr_floor)?;
    let train_idx = &g.splits().train;

    let energy = |h: &Tensor| -> Result<Option<f64>> {
        if cfg.track_energy { dirichlet_energy(h, g).map(Some) } else { Ok(None) }
    };

    let e0 = evaluate(&arch, &params, &mut stats, &input, g)?;
    let mut history = vec![EpochMetrics {
        run,
        epoch: 0,
        lr: schedule.lr,
        train_loss: e0.loss,
        train_acc: e0.train_acc,
        val_acc: e0.val_acc,
        test_acc: None,
        dirichlet_energy: energy(&e0.hidden)?,
    }];
    let mut best = Snapshot { epoch: 0, params: params.clone(), stats: stats.clone() };
    let mut best_val = e0.val_acc;
    let mut keep_going = observer(&history[0]);

    let mut epoch = 0;
    while keep_going && epoch < cfg.epochs {
        epoch += 1;
        let lr = schedule.lr;
        {
            let tape = Tape::new();
            let p = params.bind(&tape);
            let out = arch.forward(&tape, &p, &input, &mut stats, true, Some(&mut drop_rng))?;
            let loss = cross_entropy(out.logits, g.labels(), train_idx)?;
            let value = loss.value().item()?;
            if !value.is_finite() {
                return Err(Error::NumericalStability(format!("loss became {value} at epoch {epoch}")));
            }
            let grads = tape.backward(loss)?;
            let gs: Vec<Tensor> = p.vars().iter().map(|&v| grads.wrt(v)).collect();
            adam_step(params.values_mut(), &gs, &mut adam, lr, cfg.weight_decay)?;
        }
        let e = evaluate(&arch, &params, &mut stats, &input, g)?;
        let m = EpochMetrics {
            run,
            epoch,
            lr,
            train_loss: e.loss,
            train_acc: e.train_acc,
            val_acc: e.val_acc,
            test_acc: None,
            dirichlet_energy: energy(&e.hidden)?,
        };
        if e.val_acc > best_val {
            best_val = e.val_acc;
            best = Snapshot { epoch, params: params.clone(), stats: stats.clone() };
        }
        keep_going = observer(&m);
        history.push(m);
        if schedule.step(-e.val_loss).stop {
            break;
        }
    }

    let mut best_stats = best.stats.clone();
    let fin = evaluate(&arch, &best.params, &mut best_stats, &input, g)?;
    let final_energy = dirichlet_energy(&fin.hidden, g)?;
    let summary = EpochMetrics {
        test_acc: Some(fin.test_acc),
        dirichlet_energy: Some(final_energy),
        ..history[best.epoch].clone()
    };
    observer(&summary);
    history.push(summary);
    Ok(RunResult {
        history,
        best,
        test_acc: fin.test_acc,
        final_energy,
        architecture: arch,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{sbm_generate, SbmParams};

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = vec![Tensor::from_rows(&[&[1.0, -2.0]])];
        let mut st = AdamState::new(&p);
        st.m[0] = Tensor::from_rows(&[&[0.5, 0.5]]);
        let before = p.clone();
        adam_step(&mut p, &[Tensor::zeros(1, 2)], &mut st, 0.1, 0.0).unwrap();
        assert_eq!(st.m[0], Tensor::from_rows(&[&[0.45, 0.45]]));
        // a nonzero first moment still moves the parameters; reset and retry
        let mut st = AdamState::new(&before);
        let mut p = before.clone();
        adam_step(&mut p, &[Tensor::zeros(1, 2)], &mut st, 0.1, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        for g in [1e-4, 0.3, -5.0] {
            let mut p = vec![Tensor::from_rows(&[&[0.0]])];
            let mut st = AdamState::new(&p);
            adam_step(&mut p, &[Tensor::from_rows(&[&[g]])], &mut st, 0.01, 0.0).unwrap();
            let delta = p[0].get(0, 0);
            assert!((delta + 0.01 * g.signum()).abs() <= 0.01 * 1e-3, "g={g} delta={delta}");
        }
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = vec![Tensor::zeros(1, 2)];
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &[Tensor::zeros(2, 1)], &mut st, 0.1, 0.0).is_err());
    }

    #[test]
    fn schedule_decays_after_patience_flat_epochs() {
        let mut s = LrSchedule::new(1.0, 10, 0.5, 1e-6).unwrap();
        for epoch in 1..=10 {
            assert_eq!(s.step(0.5).lr, 1.0, "epoch {epoch}");
        }
        assert_eq!(s.step(0.5).lr, 0.5);
        let mut s = LrSchedule::new(1.0, 3, 0.5, 1e-6).unwrap();
        for i in 0..100 {
            assert_eq!(s.step(i as f64).lr, 1.0);
        }
        let mut s = LrSchedule::new(1e-6, 1, 0.5, 1e-6).unwrap();
        s.step(1.0);
        assert!(s.step(1.0).stop);
    }

    #[test]
    fn cross_entropy_cases() {
        let tape = Tape::new();
        let uniform = tape.constant(Tensor::zeros(3, 2));
        let l = cross_entropy(uniform, &[0, 1, 0], &[0, 1, 2]).unwrap().value().item().unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let hand = tape.constant(Tensor::from_rows(&[&[1.0, 0.0]]));
        let l = cross_entropy(hand, &[0], &[0]).unwrap().value().item().unwrap();
        assert!((l - 0.313_261_687_518_222_8).abs() < 1e-12);
        let sure = tape.constant(Tensor::from_rows(&[&[800.0, 0.0]]));
        assert!(cross_entropy(sure, &[0], &[0]).unwrap().value().item().unwrap() < 1e-300);
        assert!(matches!(cross_entropy(hand, &[0], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.0, 1.0], &[false, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::MetricUndefined(_))));
    }

    #[test]
    fn dirichlet_energy_cases() {
        let e = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let h = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!((dirichlet_energy(&h, &e).unwrap() - 0.5).abs() < 1e-15);
        assert!((dirichlet_energy(&h.scale(2.0), &e).unwrap() - 2.0).abs() < 1e-15);
        let c4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        assert_eq!(dirichlet_energy(&Tensor::full(4, 3, 0.7), &c4).unwrap(), 0.0);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    fn toy() -> Graph {
        sbm_generate(&SbmParams { n: 40, p_in: 0.3, p_out: 0.02, seed: 9, ..Default::default() }).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            heads: 2,
            gt_layers: 1,
            pe_dim: 2,
            pe_hidden: 4,
            category: Some(5),
            epochs: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_only_evaluates() {
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        let r = train_loop(0, &cfg, &toy(), &CategoryTable::default(), &mut |_| true).unwrap();
        assert_eq!(r.history.len(), 2);
        assert_eq!(r.history[0].epoch, 0);
        assert_eq!(r.best.epoch, 0);
        assert!(r.history[1].test_acc.is_some());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let g = toy();
        let t = CategoryTable::default();
        let a = train_loop(0, &small_cfg(), &g, &t, &mut |_| true).unwrap();
        let b = train_loop(0, &small_cfg(), &g, &t, &mut |_| true).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best, b.best);
        let c = train_loop(0, &TrainConfig { seed: 1, ..small_cfg() }, &g, &t, &mut |_| true).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn first_epoch_lowers_loss() {
        let cfg = TrainConfig { epochs: 1, norm_kind: NormKind::Layer, ..small_cfg() };
        let r = train_loop(0, &cfg, &toy(), &CategoryTable::default(), &mut |_| true).unwrap();
        assert!(r.history[1].train_loss < r.history[0].train_loss);
    }
}
