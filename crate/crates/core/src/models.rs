//! Graph transformer layers, deep GCN baselines, and the assembled models.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{concat_cols, Tape, Var};
use crate::error::{Error, Result};
use crate::fusion::{fuse, inject_deep, Injection, PeAdapter, Strategy};
use crate::graph::Graph;
use crate::manifold::HBatch;
use crate::nn::{dropout, glorot, Bound, Linear, Norm, NormKind, ParamId, ParamStore, RunningStats};
use crate::pe::{PeConfig, PeEncoder};
use crate::rng::StreamRng;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Additive logit for attention pairs that must not interact.
pub const MASKED_LOGIT: f64 = -1e9;

/// Row-stochastic attention weights `softmax(QKᵀ/√d + mask)`.
pub fn attention_weights<'t>(q: Var<'t>, k: Var<'t>, mask: Option<Var<'t>>) -> Result<Var<'t>> {
    let d = q.cols() as f64;
    let mut logits = q.matmul(k.transpose()?)?.scale(1.0 / d.sqrt());
    if let Some(m) = mask {
        logits = logits.add(m)?;
    }
    logits.softmax_rows()
}

/// Single-head scaled dot-product attention over all node pairs.
pub fn self_attention<'t>(
    x: Var<'t>,
    wq: Var<'t>,
    wk: Var<'t>,
    wv: Var<'t>,
    mask: Option<Var<'t>>,
) -> Result<Var<'t>> {
    let a = attention_weights(x.matmul(wq)?, x.matmul(wk)?, mask)?;
    a.matmul(x.matmul(wv)?)
}

/// Multi-head attention weights. The per-head projections are stored
/// side by side: head `h` owns columns `h·d .. (h+1)·d` of each matrix.
#[derive(Clone, Debug)]
pub struct MhaParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    /// Output merge `M`, `hidden × hidden`.
    pub merge: ParamId,
    pub heads: usize,
    pub hidden: usize,
}

impl MhaParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, hidden: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || hidden % heads != 0 {
            return Err(Error::Config(format!(
                "hidden={hidden} is not divisible into {heads} heads"
            )));
        }
        Ok(Self {
            wq: store.add(format!("{name}.wq"), glorot(rng, hidden, hidden)),
            wk: store.add(format!("{name}.wk"), glorot(rng, hidden, hidden)),
            wv: store.add(format!("{name}.wv"), glorot(rng, hidden, hidden)),
            merge: store.add(format!("{name}.merge"), glorot(rng, hidden, hidden)),
            heads,
            hidden,
        })
    }

    pub fn d_out(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Concatenates `H` attention heads and merges them with `M`.
pub fn mha<'t>(x: Var<'t>, p: &Bound<'t>, params: &MhaParams, mask: Option<Var<'t>>) -> Result<Var<'t>> {
    let q = x.matmul(p.get(params.wq))?;
    let k = x.matmul(p.get(params.wk))?;
    let v = x.matmul(p.get(params.wv))?;
    let d = params.d_out();
    let heads = if params.heads == 1 {
        vec![attention_weights(q, k, mask)?.matmul(v)?]
    } else {
        (0..params.heads)
            .map(|h| {
                let (s, e) = (h * d, (h + 1) * d);
                attention_weights(q.slice_cols(s, e)?, k.slice_cols(s, e)?, mask)?
                    .matmul(v.slice_cols(s, e)?)
            })
            .collect::<Result<Vec<_>>>()?
    };
    concat_cols(&heads)?.matmul(p.get(params.merge))
}

/// One transformer block: attention, residual + norm, FFN, residual + norm.
#[derive(Clone, Debug)]
pub struct GtLayer {
    pub attn: MhaParams,
    pub norm1: Norm,
    pub ffn1: Linear,
    pub ffn2: Linear,
    pub norm2: Norm,
    /// Indices of the two norms' running statistics.
    pub stat_slots: (usize, usize),
}

impl GtLayer {
    /// The FFN is `hidden → 2·hidden → hidden`.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        norm: NormKind,
        stat_slots: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            attn: MhaParams::new(store, &format!("{name}.attn"), hidden, heads, rng)?,
            norm1: Norm::new(store, &format!("{name}.norm1"), norm, hidden),
            ffn1: Linear::new(store, &format!("{name}.ffn1"), hidden, 2 * hidden, true, rng),
            ffn2: Linear::new(store, &format!("{name}.ffn2"), 2 * hidden, hidden, true, rng),
            norm2: Norm::new(store, &format!("{name}.norm2"), norm, hidden),
            stat_slots,
        })
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        x: Var<'t>,
        mask: Option<Var<'t>>,
        stats: &mut [RunningStats],
        training: bool,
    ) -> Result<Var<'t>> {
        let xa = mha(x, p, &self.attn, mask)?;
        let x1 = self.norm1.forward(p, x.add(xa)?, stats.get_mut(self.stat_slots.0), training)?;
        let x2 = self.ffn2.forward(p, self.ffn1.forward(p, x1)?.relu())?;
        self.norm2.forward(p, x1.add(x2)?, stats.get_mut(self.stat_slots.1), training)
    }
}

/// `ReLU(Ĝ · H · W + b)`.
pub fn gcn_layer<'t>(h: Var<'t>, gcn: &Rc<CsrMatrix>, p: &Bound<'t>, lin: &Linear) -> Result<Var<'t>> {
    // Ĝ(HW) = (ĜH)W; multiplying by W first keeps the sparse product narrow
    // whenever the layer shrinks.
    let mut y = h.matmul(p.get(lin.weight))?.spmm(gcn)?;
    if let Some(b) = lin.bias {
        y = y.add_row(p.get(b))?;
    }
    Ok(y.relu())
}

/// `β_l = ln(λ/l + 1)`.
pub fn gcnii_beta(l: usize, lambda: f64) -> f64 {
    (lambda / l as f64 + 1.0).ln()
}

/// `ReLU(((1−α)Ĝ H_l + α H_0)((1−β)I + β W))`.
pub fn gcnii_layer<'t>(
    h: Var<'t>,
    h0: Var<'t>,
    gcn: &Rc<CsrMatrix>,
    w: Var<'t>,
    alpha: f64,
    beta: f64,
) -> Result<Var<'t>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("GCNII alpha {alpha} outside [0,1]")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Parameter(format!("GCNII beta {beta} outside [0,1]")));
    }
    let support = h.spmm(gcn)?.scale(1.0 - alpha).add(h0.scale(alpha))?;
    let mixed = support.scale(1.0 - beta).add(support.matmul(w)?.scale(beta))?;
    Ok(mixed.relu())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Graph transformer; the fusion strategy comes from the config.
    HypeGt,
    /// Graph transformer with tangent-space fusion.
    HypeGtV2,
    Gcn,
    JkNet,
    Gcnii,
}

impl ModelKind {
    pub fn is_transformer(self) -> bool {
        matches!(self, ModelKind::HypeGt | ModelKind::HypeGtV2)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::HypeGt => "hype-gt",
            ModelKind::HypeGtV2 => "hype-gtv2",
            ModelKind::Gcn => "gcn",
            ModelKind::JkNet => "jknet",
            ModelKind::Gcnii => "gcnii",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hype-gt" => Ok(Self::HypeGt),
            "hype-gtv2" => Ok(Self::HypeGtV2),
            "gcn" => Ok(Self::Gcn),
            "jknet" => Ok(Self::JkNet),
            "gcnii" => Ok(Self::Gcnii),
            _ => Err(Error::Config(format!(
                "unknown model `{s}` (hype-gt|hype-gtv2|gcn|jknet|gcnii)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Readout {
    /// Per-node logits.
    #[default]
    Node,
    /// Mean over each graph's nodes, then the classifier.
    Mean,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Node => "node",
            Readout::Mean => "mean",
        })
    }
}

impl FromStr for Readout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(Self::Node),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::Config(format!("unknown readout `{s}` (node|mean)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub in_dim: usize,
    pub num_classes: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Transformer blocks or GNN depth.
    pub layers: usize,
    pub norm: NormKind,
    pub dropout: f64,
    pub strategy: Strategy,
    pub injection: Injection,
    /// `None` runs the model without positional encodings.
    pub pe: Option<PeConfig>,
    pub readout: Readout,
    pub gcnii_alpha: f64,
    pub gcnii_lambda: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.num_classes == 0 || self.hidden == 0 {
            return Err(Error::Config("in_dim, num_classes and hidden must be ≥ 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if self.kind.is_transformer() && (self.heads == 0 || self.hidden % self.heads != 0) {
            return Err(Error::Config(format!(
                "hidden={} must be a multiple of heads={}",
                self.hidden, self.heads
            )));
        }
        if self.kind == ModelKind::HypeGtV2 && self.strategy != Strategy::V2 {
            return Err(Error::Config("hype-gtv2 always uses strategy v2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.kind == ModelKind::Gcnii {
            if !(self.gcnii_alpha > 0.0 && self.gcnii_alpha < 1.0) {
                return Err(Error::Config(format!("gcnii_alpha {} outside (0,1)", self.gcnii_alpha)));
            }
            if !(self.gcnii_lambda > 0.0) || gcnii_beta(1, self.gcnii_lambda) > 1.0 {
                return Err(Error::Config(format!(
                    "gcnii_lambda {} must be in (0, e−1]",
                    self.gcnii_lambda
                )));
            }
        }
        if let Some(pe) = &self.pe {
            pe.validate()?;
        }
        Ok(())
    }

    /// One-line architecture summary. HyPE-GT and HyPE-GTv2 differ only in
    /// the `fusion` field.
    pub fn architecture(&self) -> String {
        let family = if self.kind.is_transformer() { "gt".to_string() } else { self.kind.to_string() };
        let mut s = format!(
            "family={family} in={} classes={} hidden={} layers={} readout={}",
            self.in_dim, self.num_classes, self.hidden, self.layers, self.readout
        );
        if self.kind.is_transformer() {
            s.push_str(&format!(" heads={} norm={}", self.heads, self.norm));
        }
        if self.kind == ModelKind::Gcnii {
            s.push_str(&format!(" alpha={} lambda={}", self.gcnii_alpha, self.gcnii_lambda));
        }
        match &self.pe {
            None => s.push_str(" pe=off"),
            Some(pe) => {
                s.push_str(&format!(
                    " pe=category{} init={} manifold={} encoder={} k={} pe_layers={} pe_hidden={} c={} fusion={}",
                    pe.category.id,
                    pe.category.init,
                    pe.category.manifold,
                    pe.category.network,
                    pe.k,
                    pe.pe_layers,
                    pe.hidden,
                    pe.curvature,
                    self.strategy
                ));
                if !self.kind.is_transformer() {
                    s.push_str(&format!(" injection={}", self.injection));
                }
            }
        }
        s
    }
}

/// Precomputed, parameter-free inputs for one graph or a batch of graphs.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub features: Tensor,
    /// Self-loop-normalized propagation operator (block diagonal for batches).
    pub gcn: Rc<CsrMatrix>,
    /// Initial PE, if the model uses one.
    pub pe_init: Option<Tensor>,
    /// Additive attention mask keeping graphs of a batch apart.
    pub attn_mask: Option<Tensor>,
    /// `B × n` mean-pooling operator for graph-level readout.
    pub pool: Option<Rc<CsrMatrix>>,
}

impl GraphInput {
    pub fn node_level(g: &Graph, pe: Option<&PeConfig>) -> Result<Self> {
        let pe_init = pe.map(|c| pe_init_for(g, c)).transpose()?;
        Ok(Self {
            features: g.features().clone(),
            gcn: Rc::new(g.gcn_norm()),
            pe_init,
            attn_mask: None,
            pool: None,
        })
    }

    /// Stacks several graphs into one block-diagonal input with a pooling
    /// operator over each block.
    pub fn batch(graphs: &[Graph], pe: Option<&PeConfig>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Contract("empty graph batch".into()));
        }
        let d = graphs[0].features().cols();
        if graphs.iter().any(|g| g.features().cols() != d) {
            return Err(Error::Dimension {
                op: "GraphInput::batch",
                detail: "graphs disagree on feature dimension".into(),
            });
        }
        let total: usize = graphs.iter().map(Graph::n).sum();
        let mut features = Vec::with_capacity(total * d);
        let mut gcn_rows = Vec::with_capacity(total);
        let mut pool_rows = Vec::with_capacity(graphs.len());
        let mut mask = Tensor::full(total, total, MASKED_LOGIT);
        let mut pe_rows: Vec<f64> = Vec::new();
        let mut offset = 0;
        for g in graphs {
            let n = g.n();
            features.extend_from_slice(g.features().data());
            let local = g.gcn_norm();
            for r in 0..n {
                gcn_rows.push(local.row(r).map(|(c, v)| (c + offset, v)).collect());
                for c in 0..n {
                    mask.set(offset + r, offset + c, 0.0);
                }
            }
            pool_rows.push((offset..offset + n).map(|c| (c, 1.0 / n as f64)).collect());
            if let Some(cfg) = pe {
                pe_rows.extend_from_slice(pe_init_for(g, cfg)?.data());
            }
            offset += n;
        }
        Ok(Self {
            features: Tensor::matrix(total, d, features),
            gcn: Rc::new(CsrMatrix::from_rows(total, gcn_rows)),
            pe_init: pe.map(|c| Tensor::matrix(total, c.k, pe_rows)),
            attn_mask: (graphs.len() > 1).then_some(mask),
            pool: Some(Rc::new(CsrMatrix::from_rows(total, pool_rows))),
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }
}

fn pe_init_for(g: &Graph, cfg: &PeConfig) -> Result<Tensor> {
    crate::pe::init_pe(g, cfg.category.init, cfg.k, cfg.laplacian, cfg.per_component)
}

#[derive(Clone, Debug)]
enum Body {
    Gt { embed: Linear, layers: Vec<GtLayer> },
    Gcn { layers: Vec<Linear> },
    JkNet { layers: Vec<Linear> },
    Gcnii { input: Linear, weights: Vec<ParamId> },
}

/// Layer layout of a model; owns no parameter values.
#[derive(Clone, Debug)]
pub struct Architecture {
    pub config: ModelConfig,
    pe: Option<(PeEncoder, Option<PeAdapter>)>,
    body: Body,
    head: Linear,
    num_stats: usize,
}

/// Output of one forward pass.
pub struct ForwardOut<'t> {
    /// Per-node or per-graph logits.
    pub logits: Var<'t>,
    /// Final node representation before the classifier.
    pub hidden: Var<'t>,
}

impl Architecture {
    /// Registers all parameters in `store`, drawing initial values from `rng`.
    pub fn new<R: Rng>(config: ModelConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let pe = match &c.pe {
            None => None,
            Some(pc) => {
                let enc = PeEncoder::new(store, "pe", pc.clone(), rng)?;
                let adapter = (pc.k != c.hidden).then(|| PeAdapter::new(store, "pe.adapter", pc.k, c.hidden, rng));
                Some((enc, adapter))
            }
        };
        let mut num_stats = 0;
        let (body, head_in) = match c.kind {
            ModelKind::HypeGt | ModelKind::HypeGtV2 => {
                let embed = Linear::new(store, "embed", c.in_dim, c.hidden, true, rng);
                let mut layers = Vec::with_capacity(c.layers);
                for l in 0..c.layers {
                    let slots = (num_stats, num_stats + 1);
                    num_stats += 2;
                    layers.push(GtLayer::new(store, &format!("gt{l}"), c.hidden, c.heads, c.norm, slots, rng)?);
                }
                (Body::Gt { embed, layers }, c.hidden)
            }
            ModelKind::Gcn | ModelKind::JkNet => {
                let layers: Vec<Linear> = (0..c.layers)
                    .map(|l| {
                        let inp = if l == 0 { c.in_dim } else { c.hidden };
                        Linear::new(store, &format!("gcn{l}"), inp, c.hidden, true, rng)
                    })
                    .collect();
                if c.kind == ModelKind::Gcn {
                    (Body::Gcn { layers }, c.hidden)
                } else {
                    (Body::JkNet { layers }, c.layers * c.hidden)
                }
            }
            ModelKind::Gcnii => {
                let input = Linear::new(store, "input", c.in_dim, c.hidden, true, rng);
                let weights = (0..c.layers)
                    .map(|l| store.add(format!("gcnii{l}.weight"), glorot(rng, c.hidden, c.hidden)))
                    .collect();
                (Body::Gcnii { input, weights }, c.hidden)
            }
        };
        let head = Linear::new(store, "head", head_in, c.num_classes, true, rng);
        Ok(Self { config, pe, body, head, num_stats })
    }

    /// Fresh running statistics for every batch-norm layer.
    pub fn initial_stats(&self) -> Vec<RunningStats> {
        vec![RunningStats::new(self.config.hidden); self.num_stats]
    }

    /// The PE this model feeds into its layers (after the adapter).
    pub fn positional_encoding<'t>(&self, p: &Bound<'t>, input: &GraphInput) -> Result<Option<HBatch<'t>>> {
        let Some((enc, adapter)) = &self.pe else { return Ok(None) };
        let init = input.pe_init.as_ref().ok_or_else(|| {
            Error::Contract("model uses positional encodings but the input has none".into())
        })?;
        let tape = p.vars().first().map(|v| v.tape()).ok_or_else(|| {
            Error::Contract("empty parameter binding".into())
        })?;
        let pe = enc.forward(p, tape.constant(init.clone()), &input.gcn)?;
        match adapter {
            Some(a) => a.forward(p, &pe).map(Some),
            None => Ok(Some(pe)),
        }
    }

    /// Runs the model. `rng` drives dropout and is only consulted when
    /// `training`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        input: &GraphInput,
        stats: &mut [RunningStats],
        training: bool,
        mut rng: Option<&mut StreamRng>,
    ) -> Result<ForwardOut<'t>> {
        let c = &self.config;
        if input.features.cols() != c.in_dim {
            return Err(Error::Dimension {
                op: "model forward",
                detail: format!("features have {} columns, model expects {}", input.features.cols(), c.in_dim),
            });
        }
        let pe = self.positional_encoding(p, input)?;
        let x = tape.constant(input.features.clone());
        let mut drop = |v: Var<'t>| -> Result<Var<'t>> {
            match (&mut rng, training) {
                (Some(r), true) if c.dropout > 0.0 => dropout(v, c.dropout, &mut **r),
                _ => Ok(v),
            }
        };
        let inject = |h: Var<'t>, l: usize| -> Result<Var<'t>> {
            match &pe {
                Some(pe) if c.injection == Injection::EveryLayer || l + 1 == c.layers => {
                    inject_deep(h, pe, c.strategy)
                }
                _ => Ok(h),
            }
        };
        let hidden = match &self.body {
            Body::Gt { embed, layers } => {
                let mut h = embed.forward(p, drop(x)?)?;
                if let Some(pe) = &pe {
                    h = fuse(h, pe, c.strategy)?;
                }
                let mask = input.attn_mask.as_ref().map(|m| tape.constant(m.clone()));
                for layer in layers {
                    h = layer.forward(p, drop(h)?, mask, stats, training)?;
                }
                h
            }
            Body::Gcn { layers } => {
                let mut h = x;
                for (l, lin) in layers.iter().enumerate() {
                    h = inject(gcn_layer(drop(h)?, &input.gcn, p, lin)?, l)?;
                }
                h
            }
            Body::JkNet { layers } => {
                let mut h = x;
                let mut outs = Vec::with_capacity(layers.len());
                for (l, lin) in layers.iter().enumerate() {
                    h = inject(gcn_layer(drop(h)?, &input.gcn, p, lin)?, l)?;
                    outs.push(h);
                }
                concat_cols(&outs)?
            }
            Body::Gcnii { input: lin, weights } => {
                let h0 = lin.forward(p, drop(x)?)?.relu();
                let mut h = h0;
                for (l, &w) in weights.iter().enumerate() {
                    let beta = gcnii_beta(l + 1, c.gcnii_lambda);
                    h = gcnii_layer(drop(h)?, h0, &input.gcn, p.get(w), c.gcnii_alpha, beta)?;
                    h = inject(h, l)?;
                }
                h
            }
        };
        let readout = match (c.readout, &input.pool) {
            (Readout::Node, _) => hidden,
            (Readout::Mean, Some(pool)) => hidden.spmm(pool)?,
            (Readout::Mean, None) => {
                return Err(Error::Contract("mean readout needs a pooling operator".into()))
            }
        };
        let logits = self.head.forward(p, drop(readout)?)?;
        Ok(ForwardOut { logits, hidden })
    }
}
