//! Hyperbolic positional encodings.
//!
//! A PE category picks an initialization (Laplacian eigenvectors or
//! random-walk return probabilities), a manifold, and an encoder network
//! (HNN or HGCN). The initial encoding is projected by a learned `W₀`, mapped
//! onto the manifold and refined by `L` hyperbolic layers.

use std::fmt::{self, Write as _};
use std::rc::Rc;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::eigen::{fix_sign, sym_eigen, SymEigen};
use crate::error::{Error, Result};
use crate::graph::{Graph, LaplacianKind};
use crate::manifold::{
    exp_o, log_o, manifold_add, proj, tan_proj, tangent_coords, tile_rows, HBatch, ManifoldKind,
    ManifoldSpec,
};
use crate::nn::{glorot, Bound, ParamId, ParamStore};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Intermediate points further off the manifold than this abort the forward.
pub const STABILITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PeInit {
    LapPE,
    RWPE,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Hnn,
    Hgcn,
}

impl fmt::Display for PeInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeInit::LapPE => "LapPE",
            PeInit::RWPE => "RWPE",
        })
    }
}

impl FromStr for PeInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LapPE" => Ok(Self::LapPE),
            "RWPE" => Ok(Self::RWPE),
            _ => Err(Error::Config(format!("unknown PE init `{s}` (LapPE|RWPE)"))),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Hnn => "HNN",
            EncoderKind::Hgcn => "HGCN",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HNN" => Ok(Self::Hnn),
            "HGCN" => Ok(Self::Hgcn),
            _ => Err(Error::Config(format!("unknown encoder `{s}` (HNN|HGCN)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PeCategory {
    pub id: u8,
    pub init: PeInit,
    pub manifold: ManifoldKind,
    pub network: EncoderKind,
}

impl fmt::Display for PeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {{{}, {}, {}}}", self.id, self.init, self.manifold, self.network)
    }
}

/// Shipped category table, one `id init manifold network` line per category.
pub const DEFAULT_CATEGORY_TABLE: &str = "\
1 LapPE Hyperboloid HGCN
2 LapPE Hyperboloid HNN
3 LapPE PoincareBall HNN
4 LapPE PoincareBall HGCN
5 RWPE Hyperboloid HGCN
6 RWPE Hyperboloid HNN
7 RWPE PoincareBall HGCN
8 RWPE PoincareBall HNN
";

/// Bijection between category ids 1–8 and (init, manifold, network).
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryTable {
    entries: [PeCategory; 8],
}

impl Default for CategoryTable {
    fn default() -> Self {
        Self::parse(DEFAULT_CATEGORY_TABLE).expect("default table is valid")
    }
}

impl CategoryTable {
    /// Parses `id init manifold network` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut slots: [Option<PeCategory>; 8] = [None; 8];
        for (lno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(Error::Parse {
                    line: lno + 1,
                    msg: "expected `id init manifold network`".into(),
                });
            }
            let id: u8 = toks[0].parse().map_err(|_| Error::Parse {
                line: lno + 1,
                msg: format!("bad category id `{}`", toks[0]),
            })?;
            if !(1..=8).contains(&id) {
                return Err(Error::Config(format!("category id {id} outside 1..=8")));
            }
            let cat = PeCategory {
                id,
                init: toks[1].parse()?,
                manifold: toks[2].parse()?,
                network: toks[3].parse()?,
            };
            if slots[id as usize - 1].is_some() {
                return Err(Error::Config(format!("category {id} defined twice")));
            }
            slots[id as usize - 1] = Some(cat);
        }
        let mut entries = Vec::with_capacity(8);
        for (i, s) in slots.iter().enumerate() {
            entries.push(s.ok_or_else(|| Error::Config(format!("category {} missing", i + 1)))?);
        }
        for i in 0..8 {
            for j in 0..i {
                let (a, b) = (&entries[i], &entries[j]);
                if (a.init, a.manifold, a.network) == (b.init, b.manifold, b.network) {
                    return Err(Error::Config(format!(
                        "categories {} and {} share a triplet",
                        b.id, a.id
                    )));
                }
            }
        }
        Ok(Self {
            entries: entries.try_into().expect("eight entries"),
        })
    }

    pub fn get(&self, id: u32) -> Result<PeCategory> {
        if !(1..=8).contains(&id) {
            return Err(Error::Config(format!("PE category {id} outside 1..=8")));
        }
        Ok(self.entries[id as usize - 1])
    }

    pub fn iter(&self) -> impl Iterator<Item = &PeCategory> {
        self.entries.iter()
    }
}

/// Shape of one PE pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct PeConfig {
    /// Initial and output PE dimension.
    pub k: usize,
    /// Encoder depth `L`.
    pub pe_layers: usize,
    /// Encoder width.
    pub hidden: usize,
    pub curvature: f64,
    pub category: PeCategory,
    pub laplacian: LaplacianKind,
    /// Compute LapPE per connected component instead of failing.
    pub per_component: bool,
}

impl PeConfig {
    pub fn new(category: PeCategory) -> Self {
        Self {
            k: 6,
            pe_layers: 2,
            hidden: 16,
            curvature: 1.0,
            category,
            laplacian: LaplacianKind::Sym,
            per_component: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("PE dimension k must be ≥ 1".into()));
        }
        if !(1..=5).contains(&self.pe_layers) {
            return Err(Error::Config(format!(
                "pe_layers must be in 1..=5, got {}",
                self.pe_layers
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("PE encoder width must be ≥ 1".into()));
        }
        self.spec().map(|_| ())
    }

    pub fn spec(&self) -> Result<ManifoldSpec> {
        ManifoldSpec::new(self.category.manifold, self.curvature)
    }
}

/// Laplacian eigenvector encoding, `n × k`.
///
/// Columns are the eigenvectors for the `k` smallest eigenvalues after the
/// trivial one, sign-fixed and unit norm. With `per_component`, each
/// connected component is decomposed on its own and fills its own rows;
/// components with fewer than `k + 1` nodes leave the surplus columns zero.
pub fn lap_pe(g: &Graph, k: usize, kind: LaplacianKind, per_component: bool) -> Result<Tensor> {
    let n = g.n();
    if k >= n {
        return Err(Error::Rank { k, available: n.saturating_sub(1) });
    }
    let comps = g.connected_components();
    if comps.len() == 1 {
        let eig = sym_eigen(&g.laplacian(kind)?)?;
        return Ok(lap_pe_from_eigen(&eig, k));
    }
    if !per_component {
        return Err(Error::Connectivity { components: comps.len() });
    }
    let mut out = Tensor::zeros(n, k);
    for nodes in comps {
        let sub = g.induced_subgraph(&nodes)?;
        let eig = sym_eigen(&sub.laplacian(kind)?)?;
        let take = k.min(nodes.len() - 1);
        let local = lap_pe_from_eigen(&eig, take);
        for (i, &u) in nodes.iter().enumerate() {
            for j in 0..take {
                out.set(u, j, local.get(i, j));
            }
        }
    }
    Ok(out)
}

/// Columns `1..=k` of a decomposition, canonicalized (sign-fixed, unit norm).
pub fn lap_pe_from_eigen(eig: &SymEigen, k: usize) -> Tensor {
    let n = eig.vectors.rows();
    let mut out = Tensor::zeros(n, k);
    for j in 0..k {
        let mut col: Vec<f64> = (0..n).map(|i| eig.vectors.get(i, j + 1)).collect();
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in col.iter_mut() {
            *x /= norm;
        }
        fix_sign(&mut col);
        for (i, x) in col.into_iter().enumerate() {
            out.set(i, j, x);
        }
    }
    out
}

/// Random-walk encoding, `n × k`: entry `(i, s−1)` is `(Â^s)_{ii}`.
///
/// Computed by pushing the identity through `Â` one sparse product at a
/// time, i.e. `n` simultaneous mat-vec probes per step.
pub fn rw_pe(g: &Graph, k: usize) -> Result<Tensor> {
    let a_hat = g.rw_matrix()?;
    let n = g.n();
    let mut probe = Tensor::eye(n);
    let mut out = Tensor::zeros(n, k);
    for s in 0..k {
        probe = a_hat.matmul_dense(&probe)?;
        for i in 0..n {
            out.set(i, s, probe.get(i, i));
        }
    }
    Ok(out)
}

/// Initial encoding for `init`.
pub fn init_pe(g: &Graph, init: PeInit, k: usize, laplacian: LaplacianKind, per_component: bool) -> Result<Tensor> {
    match init {
        PeInit::LapPE => lap_pe(g, k, laplacian, per_component),
        PeInit::RWPE => rw_pe(g, k),
    }
}

/// `p̂ = p_init · W₀`.
pub fn project_init<'t>(p_init: Var<'t>, w0: Var<'t>) -> Result<Var<'t>> {
    p_init.matmul(w0)
}

/// Weight and bias of one hyperbolic layer.
#[derive(Clone, Copy, Debug)]
pub struct HypLayer<'t> {
    /// Tangent-space linear map, `in × out`.
    pub weight: Var<'t>,
    /// Euclidean bias `b̂`, `1 × out`; the bias point is `exp_o(tan_proj(b̂))`.
    pub bias: Var<'t>,
}

fn check_stable(x: &HBatch<'_>, what: &str) -> Result<()> {
    let v = x.violation();
    if !(v <= STABILITY_TOL) {
        return Err(Error::NumericalStability(format!(
            "{what}: manifold violation {v:e} exceeds {STABILITY_TOL:e}"
        )));
    }
    Ok(())
}

/// Hyperbolic linear step: `proj(exp_o(W · log_o(h)) ⊕ b)`.
fn hyp_linear<'t>(h: &HBatch<'t>, layer: &HypLayer<'t>) -> Result<HBatch<'t>> {
    let spec = h.spec;
    let u = tangent_coords(spec, log_o(h)?)?;
    let mapped = exp_o(spec, tan_proj(spec, u.matmul(layer.weight)?)?)?;
    let bias_row = exp_o(spec, tan_proj(spec, layer.bias)?)?;
    let bias = HBatch {
        spec,
        points: tile_rows(bias_row.points, h.rows())?,
    };
    let sum = manifold_add(&mapped, &bias)?;
    let out = proj(spec, sum.points)?;
    check_stable(&out, "hyperbolic linear")?;
    Ok(out)
}

/// HNN: per-node hyperbolic feed-forward layers, no graph structure.
///
/// `h⁰ = exp_o(tan_proj(p̂))`, then per layer
/// `h^{l+1} = exp_o(ReLU(log_o(proj(exp_o(W_l·log_o h^l) ⊕ b_l))))`.
pub fn hnn_forward<'t>(p_hat: Var<'t>, layers: &[HypLayer<'t>], spec: ManifoldSpec) -> Result<HBatch<'t>> {
    encoder_forward(p_hat, layers, spec, None)
}

/// HGCN: as [`hnn_forward`] with tangent-space aggregation
/// `h^{l+1} = exp_o(ReLU(Ĝ · log_o(h̃^l)))`, `Ĝ = gcn_norm(g)`.
pub fn hgcn_forward<'t>(
    p_hat: Var<'t>,
    gcn: &Rc<CsrMatrix>,
    layers: &[HypLayer<'t>],
    spec: ManifoldSpec,
) -> Result<HBatch<'t>> {
    encoder_forward(p_hat, layers, spec, Some(gcn))
}

fn encoder_forward<'t>(
    p_hat: Var<'t>,
    layers: &[HypLayer<'t>],
    spec: ManifoldSpec,
    gcn: Option<&Rc<CsrMatrix>>,
) -> Result<HBatch<'t>> {
    if layers.is_empty() {
        return Err(Error::Config("hyperbolic encoder needs at least one layer".into()));
    }
    let mut h = exp_o(spec, tan_proj(spec, p_hat)?)?;
    check_stable(&h, "encoder input")?;
    for layer in layers {
        let lin = hyp_linear(&h, layer)?;
        let mut t = log_o(&lin)?;
        if let Some(g) = gcn {
            t = t.spmm(g)?;
        }
        h = exp_o(spec, t.relu())?;
        check_stable(&h, "encoder layer")?;
    }
    Ok(h)
}

/// Learnable parameters of one PE pipeline.
#[derive(Clone, Debug)]
pub struct PeEncoder {
    pub config: PeConfig,
    pub w0: ParamId,
    pub layers: Vec<(ParamId, ParamId)>,
}

impl PeEncoder {
    /// Registers `W₀` (`k × hidden`) and `L` layers (`hidden → hidden`, the
    /// last one `hidden → k`) in `store`. Weights are Glorot, biases zero.
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, config: PeConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let w0 = store.add(format!("{prefix}.w0"), glorot(rng, config.k, config.hidden));
        let mut layers = Vec::with_capacity(config.pe_layers);
        for l in 0..config.pe_layers {
            let out = if l + 1 == config.pe_layers { config.k } else { config.hidden };
            let w = store.add(format!("{prefix}.layer{l}.weight"), glorot(rng, config.hidden, out));
            let b = store.add(format!("{prefix}.layer{l}.bias"), Tensor::zeros(1, out));
            layers.push((w, b));
        }
        Ok(Self { config, w0, layers })
    }

    pub fn spec(&self) -> ManifoldSpec {
        self.config.spec().expect("validated at construction")
    }

    /// Output PE dimension (intrinsic).
    pub fn out_dim(&self) -> usize {
        self.config.k
    }

    /// Initial (non-learned) encoding of `g` for this category.
    pub fn initial(&self, g: &Graph) -> Result<Tensor> {
        let c = &self.config;
        init_pe(g, c.category.init, c.k, c.laplacian, c.per_component)
    }

    /// `p_k^ℍ` for the graph whose initial encoding is `p_init` and whose
    /// propagation operator is `gcn`.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        p_init: Var<'t>,
        gcn: &Rc<CsrMatrix>,
    ) -> Result<HBatch<'t>> {
        let p_hat = project_init(p_init, p.get(self.w0))?;
        let layers: Vec<HypLayer<'t>> = self
            .layers
            .iter()
            .map(|&(w, b)| HypLayer { weight: p.get(w), bias: p.get(b) })
            .collect();
        let spec = self.spec();
        match self.config.category.network {
            EncoderKind::Hnn => hnn_forward(p_hat, &layers, spec),
            EncoderKind::Hgcn => hgcn_forward(p_hat, gcn, &layers, spec),
        }
    }
}

/// One-shot PE generation for `g`: initial encoding, `W₀`, encoder.
pub fn generate_pe<'t>(
    tape: &'t Tape,
    g: &Graph,
    encoder: &PeEncoder,
    p: &Bound<'t>,
) -> Result<HBatch<'t>> {
    let init = tape.constant(encoder.initial(g)?);
    let gcn = Rc::new(g.gcn_norm());
    encoder.forward(p, init, &gcn)
}

/// Detached PE rows with their header metadata, for export.
#[derive(Clone, Debug, PartialEq)]
pub struct PeTable {
    pub k: usize,
    pub spec: ManifoldSpec,
    pub category: u8,
    /// `n × ambient_dim(k)`.
    pub points: Tensor,
}

impl PeTable {
    /// Header `n k manifold c category`, then one row of ambient
    /// coordinates per node in shortest round-trip decimal.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            self.points.rows(),
            self.k,
            self.spec.kind(),
            self.spec.c(),
            self.category
        );
        for r in 0..self.points.rows() {
            let row: Vec<String> = self.points.row(r).iter().map(|x| x.to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or(Error::Parse { line: 1, msg: "empty PE file".into() })?
            .split_whitespace()
            .collect();
        if header.len() != 5 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `n k manifold c category`".into(),
            });
        }
        let bad = |what: &str| Error::Parse { line: 1, msg: format!("bad {what}") };
        let n: usize = header[0].parse().map_err(|_| bad("n"))?;
        let k: usize = header[1].parse().map_err(|_| bad("k"))?;
        let kind: ManifoldKind = header[2].parse()?;
        let c: f64 = header[3].parse().map_err(|_| bad("curvature"))?;
        let category: u8 = header[4].parse().map_err(|_| bad("category"))?;
        let spec = ManifoldSpec::new(kind, c)?;
        let d = spec.ambient_dim(k);
        let mut data = Vec::with_capacity(n * d);
        for r in 0..n {
            let line = lines.next().ok_or(Error::Parse {
                line: r + 2,
                msg: "missing PE row".into(),
            })?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse { line: r + 2, msg: "bad coordinate".into() })?;
            if row.len() != d {
                return Err(Error::Parse {
                    line: r + 2,
                    msg: format!("expected {d} coordinates"),
                });
            }
            data.extend(row);
        }
        if lines.next().is_some_and(|l| !l.trim().is_empty()) {
            return Err(Error::Parse { line: n + 2, msg: "trailing data".into() });
        }
        Ok(Self {
            k,
            spec,
            category,
            points: Tensor::matrix(n, d, data),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;

    fn k3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn default_table_matches_documented_mapping() {
        let t = CategoryTable::default();
        let c4 = t.get(4).unwrap();
        assert_eq!(
            (c4.init, c4.manifold, c4.network),
            (PeInit::LapPE, ManifoldKind::PoincareBall, EncoderKind::Hgcn)
        );
        assert_eq!(t.get(1).unwrap().network, EncoderKind::Hgcn);
        assert_eq!(t.get(2).unwrap().network, EncoderKind::Hnn);
        assert_eq!(t.get(7).unwrap().network, EncoderKind::Hgcn);
        assert!(t.get(0).is_err());
        assert!(t.get(9).is_err());
    }

    #[test]
    fn table_rejects_duplicates_and_gaps() {
        let dup = DEFAULT_CATEGORY_TABLE.replace("8 RWPE PoincareBall HNN", "8 RWPE PoincareBall HGCN");
        assert!(CategoryTable::parse(&dup).is_err());
        let gap: String = DEFAULT_CATEGORY_TABLE.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(CategoryTable::parse(&gap).is_err());
    }

    #[test]
    fn rw_pe_small_graphs() {
        let p2 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let r = rw_pe(&p2, 3).unwrap();
        for i in 0..2 {
            assert_eq!(r.row(i), &[0.0, 1.0, 0.0]);
        }
        let r = rw_pe(&k3(), 3).unwrap();
        for i in 0..3 {
            assert_eq!(r.row(i), &[0.0, 0.5, 0.25]);
        }
        assert!(rw_pe(&Graph::from_edges(3, &[(0, 1)]).unwrap(), 2).is_err());
    }

    #[test]
    fn lap_pe_k3() {
        let g = k3();
        let pe = lap_pe(&g, 1, LaplacianKind::Sym, false).unwrap();
        let col: Vec<f64> = (0..3).map(|i| pe.get(i, 0)).collect();
        // orthogonal to D^{1/2}·1 (all degrees equal here)
        assert!(col.iter().sum::<f64>().abs() < 1e-12);
        let l = g.sym_norm_laplacian().unwrap();
        let v = Tensor::matrix(3, 1, col.clone());
        let lv = l.matmul(&v).unwrap();
        let resid: f64 = (0..3).map(|i| (lv.get(i, 0) - 1.5 * col[i]).powi(2)).sum::<f64>().sqrt();
        assert!(resid <= 1e-8);
        assert!((col.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lap_pe_errors() {
        assert!(matches!(lap_pe(&k3(), 3, LaplacianKind::Sym, true), Err(Error::Rank { .. })));
        let two = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            lap_pe(&two, 1, LaplacianKind::Sym, false),
            Err(Error::Connectivity { components: 2 })
        ));
        let pe = lap_pe(&two, 1, LaplacianKind::Sym, true).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pe.get(0, 0) - h).abs() < 1e-12 && (pe.get(1, 0) + h).abs() < 1e-12);
        assert!((pe.get(2, 0) - h).abs() < 1e-12 && (pe.get(3, 0) + h).abs() < 1e-12);
    }

    #[test]
    fn lap_pe_is_invariant_to_solver_sign() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]).unwrap();
        let eig = sym_eigen(&g.sym_norm_laplacian().unwrap()).unwrap();
        let flipped = SymEigen { values: eig.values.clone(), vectors: eig.vectors.scale(-1.0) };
        assert_eq!(lap_pe_from_eigen(&eig, 3), lap_pe_from_eigen(&flipped, 3));
    }

    fn encoder_fixture(network: EncoderKind, manifold: ManifoldKind, layers: usize) -> (ParamStore, PeEncoder) {
        let cat = PeCategory { id: 1, init: PeInit::RWPE, manifold, network };
        let cfg = PeConfig { k: 3, pe_layers: layers, hidden: 4, ..PeConfig::new(cat) };
        let mut store = ParamStore::new();
        let mut rng = SeedStreams::new(5).stream("init");
        let enc = PeEncoder::new(&mut store, "pe", cfg, &mut rng).unwrap();
        (store, enc)
    }

    #[test]
    fn zero_weights_map_every_node_to_origin() {
        for manifold in [ManifoldKind::Hyperboloid, ManifoldKind::PoincareBall] {
            let (mut store, enc) = encoder_fixture(EncoderKind::Hnn, manifold, 1);
            for v in store.values_mut() {
                *v = Tensor::zeros_like(v);
            }
            let tape = Tape::new();
            let p = store.bind(&tape);
            let init = tape.constant(Tensor::matrix(4, 3, (0..12).map(|i| i as f64 * 0.1).collect()));
            let gcn = Rc::new(CsrMatrix::identity(4));
            let out = enc.forward(&p, init, &gcn).unwrap().points.value();
            assert_eq!(*out, enc.spec().origin_rows(4, 3));
        }
    }

    #[test]
    fn edgeless_hgcn_matches_hnn() {
        for manifold in [ManifoldKind::Hyperboloid, ManifoldKind::PoincareBall] {
            let (store, hnn) = encoder_fixture(EncoderKind::Hnn, manifold, 2);
            let mut hgcn = hnn.clone();
            hgcn.config.category.network = EncoderKind::Hgcn;
            let g = Graph::from_edges(4, &[]).unwrap();
            let gcn = Rc::new(g.gcn_norm());
            let tape = Tape::new();
            let p = store.bind(&tape);
            let init = tape.constant(Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()));
            let a = hnn.forward(&p, init, &gcn).unwrap().points.value();
            let b = hgcn.forward(&p, init, &gcn).unwrap().points.value();
            assert!(a.max_abs_diff(&b) < 1e-14);
        }
    }

    #[test]
    fn pe_table_round_trip() {
        let t = PeTable {
            k: 2,
            spec: ManifoldSpec::hyperboloid(0.5).unwrap(),
            category: 5,
            points: Tensor::matrix(2, 3, vec![std::f64::consts::SQRT_2, 0.0, 0.0, 2.0, 0.1, -1.3e-17]),
        };
        let text = t.to_text();
        assert!(text.starts_with("2 2 Hyperboloid 0.5 5\n"));
        let back = PeTable::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), text);
        assert!(PeTable::parse("2 2 Hyperboloid 0.5 5\n1 0 0\n").is_err());
    }
}
