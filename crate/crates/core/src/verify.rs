//! Property suites run by `hypegt verify`.
//!
//! Every check reports the measured quantity next to its bound, so a
//! passing run still documents how much headroom each property has.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::fusion::{fuse_v1, fuse_v2};
use crate::gradcheck::grad_check_many;
use crate::graph::{Graph, LaplacianKind};
use crate::manifold::{exp_o, log_o, mobius_add, tan_proj, HBatch, ManifoldKind, ManifoldSpec};
use crate::models::{
    attention_weights, gcn_layer, gcnii_beta, gcnii_layer, mha, Architecture, GraphInput, GtLayer,
    MhaParams, ModelConfig, ModelKind, Readout,
};
use crate::nn::{glorot, Bound, Linear, NormKind, ParamStore};
use crate::pe::{hgcn_forward, hnn_forward, lap_pe, rw_pe, CategoryTable, HypLayer, PeConfig, PeEncoder};
use crate::rng::{SeedStreams, StreamRng};
use crate::sbm::{sbm_generate, SbmParams};
use crate::tensor::Tensor;
use crate::training::{auroc, cross_entropy, dirichlet_energy};
use crate::fusion::{Injection, Strategy};

/// Step for central differences.
pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    Exactly,
    Below,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
}

impl Check {
    fn new(suite: &'static str, name: impl Into<String>, measured: f64, relation: Relation, bound: f64) -> Self {
        Self { suite, name: name.into(), measured, bound, relation }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.measured <= self.bound,
            Relation::Exactly => self.measured == self.bound,
            Relation::Below => self.measured < self.bound,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::Exactly => "==",
            Relation::Below => "<",
        };
        write!(
            f,
            "{} {:<9} {}: measured {:.3e} {rel} {:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.bound
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Manifolds,
    Pe,
    Grads,
    Models,
    Metrics,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manifolds" => Ok(Self::Manifolds),
            "pe" => Ok(Self::Pe),
            "grads" => Ok(Self::Grads),
            "models" => Ok(Self::Models),
            "metrics" => Ok(Self::Metrics),
            "all" => Ok(Self::All),
            _ => Err(Error::Config(format!(
                "unknown suite `{s}` (manifolds|pe|grads|models|metrics|all)"
            ))),
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let s = SeedStreams::new(seed);
    Ok(match suite {
        Suite::Manifolds => manifold_checks(&s)?,
        Suite::Pe => pe_checks(&s)?,
        Suite::Grads => grad_checks(&s)?,
        Suite::Models => model_checks(&s)?,
        Suite::Metrics => metric_checks(&s)?,
        Suite::All => {
            let mut all = Vec::new();
            for one in [Suite::Manifolds, Suite::Pe, Suite::Grads, Suite::Models, Suite::Metrics] {
                all.extend(run_suite(one, seed)?);
            }
            all
        }
    })
}

pub const CURVATURES: [f64; 3] = [0.5, 1.0, 2.0];

/// All six (manifold, curvature) pairs.
pub fn all_specs() -> Vec<ManifoldSpec> {
    let mut v = Vec::new();
    for kind in [ManifoldKind::Hyperboloid, ManifoldKind::PoincareBall] {
        for c in CURVATURES {
            v.push(ManifoldSpec::new(kind, c).expect("positive curvature"));
        }
    }
    v
}

/// Uniform in the ball of radius `r`.
pub fn random_in_ball<R: Rng>(rng: &mut R, dim: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-r..r)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= r * r {
            return v;
        }
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

/// Connected random graph: a random spanning path plus independent extra
/// edges with probability `p`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p && !edges.contains(&(u, v)) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).expect("valid random graph")
}

/// `(Â^s)_{ii}` by explicit dense powers.
pub fn rw_pe_dense(g: &Graph, k: usize) -> Result<Tensor> {
    let a = g.rw_matrix()?.to_dense();
    let n = g.n();
    let mut power = Tensor::eye(n);
    let mut out = Tensor::zeros(n, k);
    for s in 0..k {
        power = power.matmul(&a)?;
        for i in 0..n {
            out.set(i, s, power.get(i, i));
        }
    }
    Ok(out)
}

fn manifold_checks(s: &SeedStreams) -> Result<Vec<Check>> {
    const SUITE: &str = "manifolds";
    let mut rng = s.stream("verify.manifolds");
    let mut out = Vec::new();
    for spec in all_specs() {
        let k = 4;
        let tape = Tape::new();
        let rows: Vec<f64> = (0..100).flat_map(|_| random_in_ball(&mut rng, k, 3.0)).collect();
        let v = tape.constant(Tensor::matrix(100, k, rows));
        let x = exp_o(spec, tan_proj(spec, v)?)?;
        let back = crate::manifold::tangent_coords(spec, log_o(&x)?)?;
        out.push(Check::new(
            SUITE,
            format!("exp/log roundtrip {} c={}", spec.kind(), spec.c()),
            back.value().max_abs_diff(&v.value()),
            Relation::AtMost,
            1e-8,
        ));
        out.push(Check::new(
            SUITE,
            format!("exp_o output on manifold {} c={}", spec.kind(), spec.c()),
            x.violation(),
            Relation::AtMost,
            1e-8,
        ));
        if spec.kind() == ManifoldKind::PoincareBall {
            let zero = HBatch { spec, points: tape.constant(Tensor::zeros(100, k)) };
            let left = mobius_add(&zero, &x)?;
            let neg = HBatch { spec, points: x.points.scale(-1.0) };
            let inv = mobius_add(&neg, &x)?;
            out.push(Check::new(
                SUITE,
                format!("mobius left identity c={}", spec.c()),
                left.points.value().max_abs_diff(&x.points.value()),
                Relation::AtMost,
                1e-12,
            ));
            out.push(Check::new(
                SUITE,
                format!("mobius left inverse c={}", spec.c()),
                inv.points.value().max_abs(),
                Relation::AtMost,
                1e-12,
            ));
        }
    }
    Ok(out)
}

fn pe_checks(s: &SeedStreams) -> Result<Vec<Check>> {
    const SUITE: &str = "pe";
    let mut rng = s.stream("verify.pe");
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=64);
        let k = rng.random_range(1..=8);
        let p = rng.random_range(0.02..0.3);
        let g = random_connected_graph(&mut rng, n, p);
        worst = worst.max(rw_pe(&g, k)?.max_abs_diff(&rw_pe_dense(&g, k)?));
    }
    out.push(Check::new(SUITE, "rw_pe vs dense power (50 graphs)", worst, Relation::AtMost, 1e-12));

    let (mut resid, mut gram) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(3..=40);
        let p = rng.random_range(0.05..0.4);
        let g = random_connected_graph(&mut rng, n, p);
        let k = rng.random_range(1..n.min(9));
        let pe = lap_pe(&g, k, LaplacianKind::Sym, false)?;
        let l = g.sym_norm_laplacian()?;
        let lu = l.matmul(&pe)?;
        for j in 0..k {
            let col: Vec<f64> = (0..n).map(|i| pe.get(i, j)).collect();
            let lambda: f64 = (0..n).map(|i| col[i] * lu.get(i, j)).sum();
            let r: f64 = (0..n).map(|i| (lu.get(i, j) - lambda * col[i]).powi(2)).sum::<f64>().sqrt();
            resid = resid.max(r);
        }
        let g_mat = pe.matmul_tn(&pe)?;
        gram = gram.max(g_mat.max_abs_diff(&Tensor::eye(k)));
    }
    out.push(Check::new(SUITE, "lap_pe eigen residual (20 graphs)", resid, Relation::AtMost, 1e-8));
    out.push(Check::new(SUITE, "lap_pe Gram orthonormality", gram, Relation::AtMost, 1e-8));

    let table = CategoryTable::default();
    let mut worst = 0.0f64;
    for draw in 0..100u32 {
        let cat = table.get(draw % 8 + 1)?;
        let g = random_connected_graph(&mut rng, 12, 0.25);
        let cfg = PeConfig { k: 3, pe_layers: 1 + (draw as usize % 3), hidden: 5, curvature: CURVATURES[draw as usize % 3], ..PeConfig::new(cat) };
        let mut store = ParamStore::new();
        let enc = PeEncoder::new(&mut store, "pe", cfg, &mut rng)?;
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let h = crate::pe::generate_pe(&tape, &g, &enc, &p)?;
        worst = worst.max(h.violation());
    }
    out.push(Check::new(SUITE, "encoder outputs on manifold (100 draws)", worst, Relation::AtMost, 1e-8));

    let mut worst = 0.0f64;
    for spec in [ManifoldSpec::hyperboloid(1.0)?, ManifoldSpec::poincare(1.0)?] {
        for _ in 0..10 {
            worst = worst.max(hgcn_permutation_error(&mut rng, spec, 24)?);
        }
    }
    out.push(Check::new(SUITE, "hgcn_forward permutation equivariance (20 perms)", worst, Relation::AtMost, 1e-10));
    Ok(out)
}

fn random_hyp_layers<'t>(tape: &'t Tape, rng: &mut StreamRng, dims: &[usize]) -> Vec<HypLayer<'t>> {
    dims.windows(2)
        .map(|w| HypLayer {
            weight: tape.constant(glorot(rng, w[0], w[1])),
            bias: tape.constant(random_matrix(rng, 1, w[1], 0.3)),
        })
        .collect()
}

/// Max deviation between `hgcn(permuted graph)` and the permuted output.
pub fn hgcn_permutation_error(rng: &mut StreamRng, spec: ManifoldSpec, n: usize) -> Result<f64> {
    let g = random_connected_graph(rng, n, 0.15);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let gp = g.permute(&perm)?;
    let p_hat = random_matrix(rng, n, 3, 0.8);
    let mut p_hat_perm = Tensor::zeros(n, 3);
    for i in 0..n {
        p_hat_perm.row_mut(perm[i]).copy_from_slice(p_hat.row(i));
    }
    let tape = Tape::new();
    let layers = random_hyp_layers(&tape, rng, &[3, 4, 3]);
    let a = hgcn_forward(tape.constant(p_hat), &Rc::new(g.gcn_norm()), &layers, spec)?.points.value();
    let b = hgcn_forward(tape.constant(p_hat_perm), &Rc::new(gp.gcn_norm()), &layers, spec)?.points.value();
    let mut worst = 0.0f64;
    for i in 0..n {
        for (x, y) in a.row(i).iter().zip(b.row(perm[i])) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Named gradient checks through every layer type, five points each.
pub fn layer_grad_errors(s: &SeedStreams) -> Result<Vec<(String, f64)>> {
    let mut rng = s.stream("verify.grads");
    let mut out: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, err: f64| {
        match out.iter_mut().find(|(n, _)| n == name) {
            Some((_, e)) => *e = e.max(err),
            None => out.push((name.to_string(), err)),
        }
    };
    let specs = [ManifoldSpec::hyperboloid(1.0)?, ManifoldSpec::poincare(1.0)?];
    let sbm5 = sbm_generate(&SbmParams { n: 5, p_in: 1.0, p_out: 0.3, seed: 4, ..Default::default() })?;
    let gcn5 = Rc::new(sbm5.gcn_norm());

    for _point in 0..5 {
        for spec in specs {
            // hyperbolic encoders: p̂ 4×3 (or 5×3), two layers 3→3→3
            let hyp_inputs = |rng: &mut StreamRng, n: usize| -> Vec<Tensor> {
                vec![
                    random_matrix(rng, n, 3, 0.7),
                    glorot(rng, 3, 3),
                    random_matrix(rng, 1, 3, 0.3),
                    glorot(rng, 3, 3),
                    random_matrix(rng, 1, 3, 0.3),
                ]
            };
            let layers_of = |v: &[Var<'_>]| -> Vec<(usize, usize)> { let _ = v; vec![(1, 2), (3, 4)] };
            let xs = hyp_inputs(&mut rng, 4);
            let e = grad_check_many(
                |_, v| {
                    let layers: Vec<HypLayer> = layers_of(v).into_iter().map(|(w, b)| HypLayer { weight: v[w], bias: v[b] }).collect();
                    let h = hnn_forward(v[0], &layers, spec)?;
                    Ok(h.points.square().sum())
                },
                &xs,
                FD_STEP,
            )?;
            record("hnn_forward", e);
            let xs = hyp_inputs(&mut rng, 5);
            let e = grad_check_many(
                |_, v| {
                    let layers: Vec<HypLayer> = layers_of(v).into_iter().map(|(w, b)| HypLayer { weight: v[w], bias: v[b] }).collect();
                    let h = hgcn_forward(v[0], &gcn5, &layers, spec)?;
                    Ok(h.points.square().sum())
                },
                &xs,
                FD_STEP,
            )?;
            record("hgcn_forward", e);

            let xs = vec![random_matrix(&mut rng, 4, 3, 1.0), random_matrix(&mut rng, 4, 3, 0.8)];
            let w = random_matrix(&mut rng, 4, 3, 1.0);
            for (name, v1) in [("fuse_v1", true), ("fuse_v2", false)] {
                let e = grad_check_many(
                    |tape, v| {
                        let p = exp_o(spec, tan_proj(spec, v[1])?)?;
                        let y = if v1 { fuse_v1(v[0], &p)? } else { fuse_v2(v[0], &p)? };
                        Ok(y.mul(tape.constant(w.clone()))?.sum())
                    },
                    &xs,
                    FD_STEP,
                )?;
                record(name, e);
            }
        }

        for norm in [NormKind::Batch, NormKind::Layer] {
            let mut store = ParamStore::new();
            let layer = GtLayer::new(&mut store, "gt", 8, 2, norm, (0, 1), &mut rng)?;
            for v in store.values_mut() {
                if v.rows() == 1 {
                    *v = random_matrix(&mut rng, 1, v.cols(), 0.5).map(|x| x + 1.0);
                }
            }
            let mut xs = vec![random_matrix(&mut rng, 4, 8, 1.0)];
            xs.extend(store.values().iter().cloned());
            let w = random_matrix(&mut rng, 4, 8, 1.0);
            let e = grad_check_many(
                |tape, v| {
                    let p = Bound::from_vars(v[1..].to_vec());
                    let y = layer.forward(&p, v[0], None, &mut [], true)?;
                    Ok(y.mul(tape.constant(w.clone()))?.sum())
                },
                &xs,
                FD_STEP,
            )?;
            record("gt_layer", e);
        }

        let xs = vec![random_matrix(&mut rng, 5, 3, 1.0), glorot(&mut rng, 3, 4), random_matrix(&mut rng, 1, 4, 0.5)];
        let w = random_matrix(&mut rng, 5, 4, 1.0);
        let e = grad_check_many(
            |tape, v| {
                let mut store = ParamStore::new();
                let lin = Linear { weight: store.add("w", Tensor::zeros(3, 4)), bias: Some(store.add("b", Tensor::zeros(1, 4))), in_dim: 3, out_dim: 4 };
                let p = Bound::from_vars(v[1..].to_vec());
                Ok(gcn_layer(v[0], &gcn5, &p, &lin)?.mul(tape.constant(w.clone()))?.sum())
            },
            &xs,
            FD_STEP,
        )?;
        record("gcn_layer", e);

        let xs = vec![random_matrix(&mut rng, 5, 4, 1.0), random_matrix(&mut rng, 5, 4, 1.0), glorot(&mut rng, 4, 4)];
        let w = random_matrix(&mut rng, 5, 4, 1.0);
        let beta = gcnii_beta(2, 0.5);
        let e = grad_check_many(
            |tape, v| Ok(gcnii_layer(v[0], v[1], &gcn5, v[2], 0.1, beta)?.mul(tape.constant(w.clone()))?.sum()),
            &xs,
            FD_STEP,
        )?;
        record("gcnii_layer", e);

        let xs = vec![random_matrix(&mut rng, 6, 3, 2.0)];
        let e = grad_check_many(|_, v| cross_entropy(v[0], &[0, 2, 1, 1, 0, 2], &[0, 1, 3, 5]), &xs, FD_STEP)?;
        record("cross_entropy", e);

        for kind in [ModelKind::JkNet, ModelKind::HypeGt] {
            let e = model_grad_error(&mut rng, kind, &sbm5)?;
            record(if kind == ModelKind::JkNet { "jknet_forward" } else { "hype-gt full forward" }, e);
        }
    }
    Ok(out)
}

fn model_grad_error(rng: &mut StreamRng, kind: ModelKind, g: &Graph) -> Result<f64> {
    let table = CategoryTable::default();
    let pe = PeConfig { k: 2, pe_layers: 1, hidden: 3, ..PeConfig::new(table.get(8)?) };
    let cfg = ModelConfig {
        kind,
        in_dim: g.features().cols(),
        num_classes: 2,
        hidden: 4,
        heads: 2,
        layers: 2,
        norm: NormKind::Layer,
        dropout: 0.0,
        strategy: Strategy::V1,
        injection: Injection::EveryLayer,
        pe: Some(pe),
        readout: Readout::Node,
        gcnii_alpha: 0.1,
        gcnii_lambda: 0.5,
    };
    let mut store = ParamStore::new();
    let arch = Architecture::new(cfg, &mut store, rng)?;
    let input = GraphInput::node_level(g, arch.config.pe.as_ref())?;
    let idx: Vec<usize> = (0..g.n()).collect();
    grad_check_many(
        |tape, v| {
            let p = Bound::from_vars(v.to_vec());
            let out = arch.forward(tape, &p, &input, &mut [], true, None)?;
            cross_entropy(out.logits, g.labels(), &idx)
        },
        store.values(),
        FD_STEP,
    )
}

fn grad_checks(s: &SeedStreams) -> Result<Vec<Check>> {
    Ok(layer_grad_errors(s)?
        .into_iter()
        .map(|(name, e)| Check::new("grads", format!("{name} (5 points)"), e, Relation::AtMost, GRAD_TOL))
        .collect())
}

/// Max deviation of `gt_layer(PX)` from `P·gt_layer(X)`.
pub fn gt_permutation_error(rng: &mut StreamRng, n: usize, norm: NormKind) -> Result<f64> {
    let mut store = ParamStore::new();
    let layer = GtLayer::new(&mut store, "gt", 8, 2, norm, (0, 1), rng)?;
    let x = random_matrix(rng, n, 8, 1.0);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut xp = Tensor::zeros(n, 8);
    for i in 0..n {
        xp.row_mut(perm[i]).copy_from_slice(x.row(i));
    }
    let tape = Tape::new();
    let p = store.bind_frozen(&tape);
    let mut stats = vec![crate::nn::RunningStats::new(8); 2];
    let a = layer.forward(&p, tape.constant(x), None, &mut stats, true)?.value();
    let b = layer.forward(&p, tape.constant(xp), None, &mut stats, true)?.value();
    let mut worst = 0.0f64;
    for i in 0..n {
        for (u, v) in a.row(i).iter().zip(b.row(perm[i])) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

fn model_checks(s: &SeedStreams) -> Result<Vec<Check>> {
    const SUITE: &str = "models";
    let mut rng = s.stream("verify.models");
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=32);
        let tape = Tape::new();
        let q = tape.constant(random_matrix(&mut rng, n, 4, 3.0));
        let k = tape.constant(random_matrix(&mut rng, n, 4, 3.0));
        let a = attention_weights(q, k, None)?.value();
        for r in 0..n {
            worst = worst.max((a.row(r).iter().sum::<f64>() - 1.0).abs());
        }
    }
    out.push(Check::new(SUITE, "attention rows sum to 1", worst, Relation::AtMost, 1e-12));

    let mut worst = 0.0f64;
    for t in 0..20 {
        let n = rng.random_range(2..=32);
        let norm = if t % 2 == 0 { NormKind::Batch } else { NormKind::Layer };
        worst = worst.max(gt_permutation_error(&mut rng, n, norm)?);
    }
    out.push(Check::new(SUITE, "gt_layer permutation equivariance (20 perms)", worst, Relation::AtMost, 1e-10));

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=32);
        let mut store = ParamStore::new();
        let params = MhaParams::new(&mut store, "a", 8, 4, &mut rng)?;
        let x = random_matrix(&mut rng, n, 8, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut xp = Tensor::zeros(n, 8);
        for i in 0..n {
            xp.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let a = mha(tape.constant(x), &p, &params, None)?.value();
        let b = mha(tape.constant(xp), &p, &params, None)?.value();
        for i in 0..n {
            for (u, v) in a.row(i).iter().zip(b.row(perm[i])) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    out.push(Check::new(SUITE, "mha permutation equivariance (20 perms)", worst, Relation::AtMost, 1e-10));

    let (nonfinite, mismatches) = full_forward_trials(&mut rng, 1000)?;
    out.push(Check::new(SUITE, "full HyPE-GT forward non-finite outputs (1000 trials)", nonfinite as f64, Relation::Exactly, 0.0));
    out.push(Check::new(SUITE, "full HyPE-GT forward nondeterministic repeats", mismatches as f64, Relation::Exactly, 0.0));
    Ok(out)
}

/// Runs a mean-pooled HyPE-GT over random small graph batches; returns
/// (non-finite outputs, forwards that differed when repeated).
pub fn full_forward_trials(rng: &mut StreamRng, trials: usize) -> Result<(usize, usize)> {
    let table = CategoryTable::default();
    let (mut nonfinite, mut mismatches) = (0, 0);
    for t in 0..trials {
        let cat = table.get(t as u32 % 8 + 1)?;
        let graphs: Vec<Graph> = (0..2)
            .map(|_| {
                let n = rng.random_range(4..=8);
                let mut g = random_connected_graph(rng, n, 0.3);
                g = Graph::new(n, &g.edges().collect::<Vec<_>>(), random_matrix(rng, n, 3, 3.0), vec![0; n], 1, Default::default())
                    .expect("valid graph");
                g
            })
            .collect();
        let pe = PeConfig { k: 2, pe_layers: 2, hidden: 4, ..PeConfig::new(cat) };
        let cfg = ModelConfig {
            kind: ModelKind::HypeGt,
            in_dim: 3,
            num_classes: 3,
            hidden: 8,
            heads: 2,
            layers: 2,
            norm: NormKind::Batch,
            dropout: 0.0,
            strategy: if t % 2 == 0 { Strategy::V1 } else { Strategy::V2 },
            injection: Injection::EveryLayer,
            pe: Some(pe),
            readout: Readout::Mean,
            gcnii_alpha: 0.1,
            gcnii_lambda: 0.5,
        };
        let seed: u64 = rng.random();
        let run = || -> Result<Tensor> {
            let mut store = ParamStore::new();
            let mut init = SeedStreams::new(seed).stream("init");
            let arch = Architecture::new(cfg.clone(), &mut store, &mut init)?;
            let input = GraphInput::batch(&graphs, arch.config.pe.as_ref())?;
            let tape = Tape::new();
            let p = store.bind_frozen(&tape);
            let mut stats = arch.initial_stats();
            Ok((*arch.forward(&tape, &p, &input, &mut stats, true, None)?.logits.value()).clone())
        };
        let a = run()?;
        if !a.is_finite() {
            nonfinite += 1;
        }
        if run()? != a {
            mismatches += 1;
        }
    }
    Ok((nonfinite, mismatches))
}

/// `Σ[s⁺>s⁻] + ½Σ[s⁺=s⁻]` over all pairs, normalized.
pub fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num2 = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            num2 += match scores[i].partial_cmp(&scores[j]) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    num2 as f64 / (2 * pairs) as f64
}

/// Final-layer energy of a randomly initialized plain GCN of `depth` layers.
pub fn gcn_energy_at_depth(g: &Graph, depth: usize, seed: u64) -> Result<f64> {
    let cfg = ModelConfig {
        kind: ModelKind::Gcn,
        in_dim: g.features().cols(),
        num_classes: g.num_classes(),
        hidden: 16,
        heads: 1,
        layers: depth,
        norm: NormKind::Batch,
        dropout: 0.0,
        strategy: Strategy::V1,
        injection: Injection::EveryLayer,
        pe: None,
        readout: Readout::Node,
        gcnii_alpha: 0.1,
        gcnii_lambda: 0.5,
    };
    let mut store = ParamStore::new();
    let arch = Architecture::new(cfg, &mut store, &mut SeedStreams::new(seed).stream("init"))?;
    let input = GraphInput::node_level(g, None)?;
    let tape = Tape::new();
    let p = store.bind_frozen(&tape);
    let out = arch.forward(&tape, &p, &input, &mut [], false, None)?;
    dirichlet_energy(&out.hidden.value(), g)
}

fn metric_checks(s: &SeedStreams) -> Result<Vec<Check>> {
    const SUITE: &str = "metrics";
    let mut rng = s.stream("verify.metrics");
    let mut out = Vec::new();

    let mut mismatches = 0usize;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        // coarse scores so ties are common
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 4.0).collect();
        if auroc(&scores, &labels)? != auroc_pairwise(&scores, &labels) {
            mismatches += 1;
        }
    }
    out.push(Check::new(SUITE, "auroc vs pairwise count (100 instances)", mismatches as f64, Relation::Exactly, 0.0));

    let tape = Tape::new();
    let ce = cross_entropy(tape.constant(Tensor::from_rows(&[&[1.0, 0.0]])), &[0], &[0])?.value().item()?;
    let expect = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
    out.push(Check::new(SUITE, "cross_entropy hand case", (ce - expect).abs(), Relation::AtMost, 1e-15));

    let edge = Graph::from_edges(2, &[(0, 1)])?;
    let e = dirichlet_energy(&Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]), &edge)?;
    out.push(Check::new(SUITE, "dirichlet_energy single edge", (e - 0.5).abs(), Relation::AtMost, 1e-15));

    let g = sbm_generate(&SbmParams { n: 300, seed: s.seed(), ..Default::default() })?;
    let shallow = gcn_energy_at_depth(&g, 2, s.seed())?;
    let deep = gcn_energy_at_depth(&g, 64, s.seed())?;
    out.push(Check::new(SUITE, "GCN energy ratio depth 64 / depth 2", deep / shallow, Relation::Below, 1.0));
    Ok(out)
}

/// Checks that a checkpoint file parses, matches its checksum and
/// restores into its recorded architecture.
pub fn checkpoint_check(text: &str) -> Check {
    let ok = crate::checkpoint::Checkpoint::parse(text)
        .and_then(|ck| ck.restore(&CategoryTable::default()).map(|_| ()));
    Check::new(
        "checkpoint",
        match &ok {
            Ok(()) => "integrity".to_string(),
            Err(e) => format!("integrity ({e})"),
        },
        if ok.is_ok() { 0.0 } else { 1.0 },
        Relation::Exactly,
        0.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_all_pass(suite: Suite) {
        let checks = run_suite(suite, 0).unwrap();
        assert!(!checks.is_empty());
        for c in &checks {
            println!("{c}");
        }
        assert!(checks.iter().all(Check::passed), "{:#?}", checks.iter().filter(|c| !c.passed()).collect::<Vec<_>>());
    }

    #[test]
    fn manifolds_suite() {
        assert_all_pass(Suite::Manifolds);
    }

    #[test]
    fn pe_suite() {
        assert_all_pass(Suite::Pe);
    }

    #[test]
    fn grads_suite() {
        assert_all_pass(Suite::Grads);
    }

    #[test]
    fn models_suite() {
        assert_all_pass(Suite::Models);
    }

    #[test]
    fn metrics_suite() {
        assert_all_pass(Suite::Metrics);
    }

    #[test]
    fn unknown_suite_is_config_error() {
        assert!(matches!("nope".parse::<Suite>(), Err(Error::Config(_))));
    }
}
