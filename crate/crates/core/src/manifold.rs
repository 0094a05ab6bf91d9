//! Hyperboloid (Lorentz) and Poincaré-ball geometry at the origin.
//!
//! Curvature is stored as a positive magnitude `c` (sectional curvature
//! `−c`). Hyperboloid points satisfy `⟨x,x⟩ = −1/c` with `x₀ > 0`; ball
//! points satisfy `c‖x‖² < 1`. Everything runs on the tape so the maps can
//! sit inside trainable layers.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{concat_cols, RadialFn, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ball points are clipped back to this fraction of the radius.
pub const BALL_MARGIN: f64 = 1e-5;

/// Points further off the manifold than this are rejected as inputs.
pub const INPUT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    Hyperboloid,
    PoincareBall,
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ManifoldKind::Hyperboloid => "Hyperboloid",
            ManifoldKind::PoincareBall => "PoincareBall",
        })
    }
}

impl FromStr for ManifoldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Hyperboloid" => Ok(Self::Hyperboloid),
            "PoincareBall" => Ok(Self::PoincareBall),
            _ => Err(Error::Config(format!("unknown manifold `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldSpec {
    kind: ManifoldKind,
    c: f64,
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Parameter(format!("curvature magnitude must be > 0, got {c}")));
        }
        Ok(Self { kind, c })
    }

    pub fn hyperboloid(c: f64) -> Result<Self> {
        Self::new(ManifoldKind::Hyperboloid, c)
    }

    pub fn poincare(c: f64) -> Result<Self> {
        Self::new(ManifoldKind::PoincareBall, c)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn sqrt_c(&self) -> f64 {
        self.c.sqrt()
    }

    /// Coordinates per point for intrinsic dimension `k`.
    pub fn ambient_dim(&self, k: usize) -> usize {
        match self.kind {
            ManifoldKind::Hyperboloid => k + 1,
            ManifoldKind::PoincareBall => k,
        }
    }

    /// Intrinsic dimension for `ambient` coordinates per point.
    pub fn intrinsic_dim(&self, ambient: usize) -> usize {
        match self.kind {
            ManifoldKind::Hyperboloid => ambient.saturating_sub(1),
            ManifoldKind::PoincareBall => ambient,
        }
    }

    /// The origin `o` as a `1 × ambient` row.
    pub fn origin(&self, k: usize) -> Tensor {
        self.origin_rows(1, k)
    }

    pub fn origin_rows(&self, n: usize, k: usize) -> Tensor {
        let d = self.ambient_dim(k);
        let mut t = Tensor::zeros(n, d);
        if self.kind == ManifoldKind::Hyperboloid {
            let x0 = 1.0 / self.sqrt_c();
            for r in 0..n {
                t.set(r, 0, x0);
            }
        }
        t
    }

    /// Worst per-row deviation from the manifold.
    ///
    /// Hyperboloid: `c·|⟨x,x⟩ + 1/c|` divided by `max(1, c·x₀²)`, the size of
    /// the terms being cancelled; rows with `x₀ ≤ 0` count as infinitely far.
    /// Ball: `max(0, c‖x‖² − 1)`, and exactly-on-boundary rows count as
    /// `f64::EPSILON` so a strict check can see them.
    pub fn violation(&self, x: &Tensor) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..x.rows() {
            let row = x.row(r);
            let v = match self.kind {
                ManifoldKind::Hyperboloid => {
                    if !(row[0] > 0.0) {
                        f64::INFINITY
                    } else {
                        let inner = minkowski(row, row);
                        self.c * (inner + 1.0 / self.c).abs() / (self.c * row[0] * row[0]).max(1.0)
                    }
                }
                ManifoldKind::PoincareBall => {
                    let q = self.c * crate::tensor::dot(row, row);
                    if q >= 1.0 {
                        (q - 1.0).max(f64::EPSILON)
                    } else {
                        0.0
                    }
                }
            };
            if v.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(v);
        }
        worst
    }

    fn check_input(&self, op: &'static str, x: &Tensor) -> Result<()> {
        let v = self.violation(x);
        if v > INPUT_TOL {
            return Err(Error::Manifold {
                op,
                detail: format!("{} violation {v:e} exceeds {INPUT_TOL:e}", self.kind),
            });
        }
        Ok(())
    }
}

/// Points on a manifold, one per row.
#[derive(Clone, Copy, Debug)]
pub struct HBatch<'t> {
    pub spec: ManifoldSpec,
    pub points: Var<'t>,
}

impl<'t> HBatch<'t> {
    pub fn rows(&self) -> usize {
        self.points.rows()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.spec.intrinsic_dim(self.points.cols())
    }

    pub fn violation(&self) -> f64 {
        self.spec.violation(&self.points.value())
    }
}

fn minkowski(x: &[f64], y: &[f64]) -> f64 {
    -x[0] * y[0] + crate::tensor::dot(&x[1..], &y[1..])
}

/// `−x₀y₀ + Σ_{i≥1} xᵢyᵢ`.
pub fn minkowski_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Dimension {
            op: "minkowski_inner",
            detail: format!("{} vs {}", x.len(), y.len()),
        });
    }
    Ok(minkowski(x, y))
}

/// Origin points for `n` rows as a constant batch.
pub fn origin<'t>(tape: &'t crate::autodiff::Tape, spec: ManifoldSpec, n: usize, k: usize) -> HBatch<'t> {
    HBatch {
        spec,
        points: tape.constant(spec.origin_rows(n, k)),
    }
}

/// Embeds Euclidean vectors into the tangent space at the origin.
pub fn tan_proj<'t>(spec: ManifoldSpec, e: Var<'t>) -> Result<Var<'t>> {
    match spec.kind {
        ManifoldKind::Hyperboloid => {
            let zeros = e.tape().constant(Tensor::zeros(e.rows(), 1));
            concat_cols(&[zeros, e])
        }
        ManifoldKind::PoincareBall => Ok(e),
    }
}

/// Inverse of [`tan_proj`]: Euclidean coordinates of an origin tangent vector.
pub fn tangent_coords<'t>(spec: ManifoldSpec, v: Var<'t>) -> Result<Var<'t>> {
    match spec.kind {
        ManifoldKind::Hyperboloid => v.slice_cols(1, v.cols()),
        ManifoldKind::PoincareBall => Ok(v),
    }
}

fn ball_clip<'t>(spec: ManifoldSpec, x: Var<'t>) -> Result<Var<'t>> {
    x.ball_clip(1.0 / spec.c, (1.0 - BALL_MARGIN) / spec.sqrt_c())
}

/// Exponential map at the origin.
pub fn exp_o<'t>(spec: ManifoldSpec, v: Var<'t>) -> Result<HBatch<'t>> {
    let s = spec.sqrt_c();
    let points = match spec.kind {
        ManifoldKind::Hyperboloid => {
            let val = v.value();
            for r in 0..val.rows() {
                let row = val.row(r);
                if row[0].abs() > 1e-12 * (1.0 + row[1..].iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
                    return Err(Error::TangentSpace(format!(
                        "row {r} has time component {} at the origin",
                        row[0]
                    )));
                }
            }
            let spatial = v.slice_cols(1, v.cols())?;
            let x0 = spatial.radial(RadialFn::CoshScaled { s })?;
            let xs = spatial.mul_col(spatial.radial(RadialFn::Sinhc { s })?)?;
            concat_cols(&[x0, xs])?
        }
        ManifoldKind::PoincareBall => {
            let scaled = v.mul_col(v.radial(RadialFn::Tanhc { s })?)?;
            ball_clip(spec, scaled)?
        }
    };
    Ok(HBatch { spec, points })
}

/// Logarithmic map at the origin.
pub fn log_o<'t>(x: &HBatch<'t>) -> Result<Var<'t>> {
    let spec = x.spec;
    let s = spec.sqrt_c();
    spec.check_input("log_o", &x.points.value())?;
    match spec.kind {
        ManifoldKind::Hyperboloid => {
            let xs = x.points.slice_cols(1, x.points.cols())?;
            let v = xs.mul_col(xs.radial(RadialFn::Arsinhc { s })?)?;
            tan_proj(spec, v)
        }
        ManifoldKind::PoincareBall => {
            let p = ball_clip(spec, x.points)?;
            p.mul_col(p.radial(RadialFn::Artanhc { s })?)
        }
    }
}

/// Möbius addition `x ⊕_c y` on the Poincaré ball.
pub fn mobius_add<'t>(x: &HBatch<'t>, y: &HBatch<'t>) -> Result<HBatch<'t>> {
    let spec = x.spec;
    if spec.kind != ManifoldKind::PoincareBall || y.spec != spec {
        return Err(Error::Parameter(
            "mobius_add needs two batches on the same Poincaré ball".into(),
        ));
    }
    spec.check_input("mobius_add", &x.points.value())?;
    spec.check_input("mobius_add", &y.points.value())?;
    let c = spec.c;
    let (a, b) = (x.points, y.points);
    let xy = a.mul(b)?.row_sum()?;
    let x2 = a.square().row_sum()?;
    let y2 = b.square().row_sum()?;
    let coef_x = xy.scale(2.0 * c).add(y2.scale(c))?.shift(1.0);
    let coef_y = x2.scale(-c).shift(1.0);
    let denom = xy.scale(2.0 * c).add(x2.mul(y2)?.scale(c * c))?.shift(1.0);
    let num = a.mul_col(coef_x)?.add(b.mul_col(coef_y)?)?;
    let points = ball_clip(spec, num.div_col(denom)?)?;
    Ok(HBatch { spec, points })
}

/// Hyperboloid addition realized in the origin tangent space:
/// `proj(exp_o(log_o x + log_o y))`.
pub fn hyperboloid_add<'t>(x: &HBatch<'t>, y: &HBatch<'t>) -> Result<HBatch<'t>> {
    let spec = x.spec;
    if spec.kind != ManifoldKind::Hyperboloid || y.spec != spec {
        return Err(Error::Parameter(
            "hyperboloid_add needs two batches on the same hyperboloid".into(),
        ));
    }
    let sum = log_o(x)?.add(log_o(y)?)?;
    let e = exp_o(spec, sum)?;
    proj(spec, e.points)
}

/// `⊕_c` for whichever manifold the batches live on.
pub fn manifold_add<'t>(x: &HBatch<'t>, y: &HBatch<'t>) -> Result<HBatch<'t>> {
    match x.spec.kind {
        ManifoldKind::Hyperboloid => hyperboloid_add(x, y),
        ManifoldKind::PoincareBall => mobius_add(x, y),
    }
}

/// Re-projects arbitrary finite points onto the manifold. Idempotent.
pub fn proj<'t>(spec: ManifoldSpec, x: Var<'t>) -> Result<HBatch<'t>> {
    let points = match spec.kind {
        ManifoldKind::Hyperboloid => {
            let xs = x.slice_cols(1, x.cols())?;
            let x0 = xs.radial(RadialFn::SqrtOffset { a: 1.0 / spec.c })?;
            concat_cols(&[x0, xs])?
        }
        ManifoldKind::PoincareBall => ball_clip(spec, x)?,
    };
    Ok(HBatch { spec, points })
}

/// Repeats a `1×d` row `n` times (differentiably).
pub fn tile_rows<'t>(row: Var<'t>, n: usize) -> Result<Var<'t>> {
    let ones = row.tape().constant(Tensor::full(n, 1, 1.0));
    ones.matmul(row)
}
