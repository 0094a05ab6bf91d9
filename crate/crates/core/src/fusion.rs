//! Combining Euclidean node features with hyperbolic positional encodings.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::manifold::{exp_o, log_o, manifold_add, tan_proj, tangent_coords, HBatch};
use crate::nn::{Bound, Linear, ParamStore};

/// Fusion strategy: `V1` adds on the manifold, `V2` adds in tangent space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Strategy {
    #[default]
    V1,
    V2,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::V1 => "v1",
            Strategy::V2 => "v2",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v1" => Ok(Self::V1),
            "v2" => Ok(Self::V2),
            _ => Err(Error::Config(format!("unknown strategy `{s}` (v1|v2)"))),
        }
    }
}

/// Where PEs enter a deep GNN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Injection {
    #[default]
    EveryLayer,
    FinalLayerOnly,
}

impl fmt::Display for Injection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Injection::EveryLayer => "every_layer",
            Injection::FinalLayerOnly => "final_layer_only",
        })
    }
}

impl FromStr for Injection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "every_layer" => Ok(Self::EveryLayer),
            "final_layer_only" => Ok(Self::FinalLayerOnly),
            _ => Err(Error::Config(format!(
                "unknown injection `{s}` (every_layer|final_layer_only)"
            ))),
        }
    }
}

fn check_dims(x: Var<'_>, p: &HBatch<'_>, op: &'static str) -> Result<()> {
    if x.rows() != p.rows() || x.cols() != p.intrinsic_dim() {
        return Err(Error::Dimension {
            op,
            detail: format!(
                "features {:?} vs PE {} rows of intrinsic dim {}",
                x.shape(),
                p.rows(),
                p.intrinsic_dim()
            ),
        });
    }
    let v = p.violation();
    if !(v <= crate::manifold::INPUT_TOL) {
        return Err(Error::Manifold {
            op,
            detail: format!("PE off manifold by {v:e}"),
        });
    }
    Ok(())
}

/// `log_o(exp_o(tan_proj(x̂)) ⊕ p)`, in intrinsic tangent coordinates.
pub fn fuse_v1<'t>(x: Var<'t>, p: &HBatch<'t>) -> Result<Var<'t>> {
    check_dims(x, p, "fuse_v1")?;
    let xh = exp_o(p.spec, tan_proj(p.spec, x)?)?;
    let sum = manifold_add(&xh, p)?;
    tangent_coords(p.spec, log_o(&sum)?)
}

/// `x̂ + log_o(p)`.
pub fn fuse_v2<'t>(x: Var<'t>, p: &HBatch<'t>) -> Result<Var<'t>> {
    check_dims(x, p, "fuse_v2")?;
    x.add(tangent_coords(p.spec, log_o(p)?)?)
}

pub fn fuse<'t>(x: Var<'t>, p: &HBatch<'t>, strategy: Strategy) -> Result<Var<'t>> {
    match strategy {
        Strategy::V1 => fuse_v1(x, p),
        Strategy::V2 => fuse_v2(x, p),
    }
}

/// Fuses PEs into a hidden representation of a deep GNN.
pub fn inject_deep<'t>(h: Var<'t>, p: &HBatch<'t>, strategy: Strategy) -> Result<Var<'t>> {
    fuse(h, p, strategy)
}

/// Learned map from PE tangent vectors (dim `k`) to a wider or narrower
/// feature space, re-entering the manifold at the target dimension.
#[derive(Clone, Debug)]
pub struct PeAdapter {
    pub linear: Linear,
}

impl PeAdapter {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, k: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            linear: Linear::new(store, name, k, dim, false, rng),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, pe: &HBatch<'t>) -> Result<HBatch<'t>> {
        let t = tangent_coords(pe.spec, log_o(pe)?)?;
        exp_o(pe.spec, tan_proj(pe.spec, self.linear.forward(p, t)?)?)
    }
}
