//! Named parameter storage and small building blocks shared by the models.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered, named set of learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Replaces every value, checking names and shapes match.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Config("parameter names differ from the model layout".into()));
        }
        for (name, (mine, theirs)) in self.names.iter().zip(self.values.iter().zip(&other.values)) {
            if mine.shape() != theirs.shape() {
                return Err(Error::Config(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    mine.shape(),
                    theirs.shape()
                )));
            }
        }
        self.values = other.values.clone();
        Ok(())
    }

    /// Puts every parameter on `tape` as a gradient-receiving leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.values.iter().map(|v| tape.param(v.clone())).collect(),
        }
    }

    /// Puts every parameter on `tape` as a constant (inference).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.values.iter().map(|v| tape.constant(v.clone())).collect(),
        }
    }
}

/// Parameters of one forward pass, as tape variables.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    /// Builds a binding from explicit variables (used by gradient checks).
    pub fn from_vars(vars: Vec<Var<'t>>) -> Self {
        Self { vars }
    }
}

/// Glorot/Xavier uniform initialization for a `fan_in × fan_out` weight.
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::matrix(
        fan_in,
        fan_out,
        (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect(),
    )
}

/// Inverted dropout: zeroes entries with probability `rate`, scales the rest
/// by `1/(1−rate)`.
pub fn dropout<'t, R: Rng>(x: Var<'t>, rate: f64, rng: &mut R) -> Result<Var<'t>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate {rate} outside [0,1)")));
    }
    if rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.rows() * x.cols())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    x.mul(x.tape().constant(Tensor::matrix(x.rows(), x.cols(), mask)))
}

/// Affine map `x·W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(rng, in_dim, out_dim));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim)));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let y = x.matmul(p.get(self.weight))?;
        match self.bias {
            Some(b) => y.add_row(p.get(b)),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormKind {
    #[default]
    Batch,
    Layer,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormKind::Batch => "batch",
            NormKind::Layer => "layer",
        })
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(Self::Batch),
            "layer" => Ok(Self::Layer),
            _ => Err(Error::Config(format!("unknown norm `{s}` (batch|layer)"))),
        }
    }
}

pub const NORM_EPS: f64 = 1e-5;

/// Batch or layer normalization with a learned per-feature affine map.
///
/// Batch statistics are computed over all rows of the input. Running
/// averages (momentum 0.1) are tracked outside the tape and used when
/// `training` is false.
#[derive(Clone, Debug)]
pub struct Norm {
    pub kind: NormKind,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

/// Running mean/variance for one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const BN_MOMENTUM: f64 = 0.1;

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, kind: NormKind, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(1, dim, 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(1, dim));
        Self {
            kind,
            gamma,
            beta,
            dim,
        }
    }

    /// Normalizes `x`. In batch mode with `stats` given and `training`, the
    /// running averages are updated; without `training`, they are used.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        x: Var<'t>,
        stats: Option<&mut RunningStats>,
        training: bool,
    ) -> Result<Var<'t>> {
        let normalized = match self.kind {
            NormKind::Layer => {
                let k = x.cols() as f64;
                let mean = x.row_sum()?.scale(1.0 / k);
                let centered = x.add_col(mean.scale(-1.0))?;
                let var = centered.square().row_sum()?.scale(1.0 / k);
                let std = var.shift(NORM_EPS).sqrt()?;
                centered.div_col(std)?
            }
            NormKind::Batch => match (stats, training) {
                (Some(stats), false) => {
                    let tape = x.tape();
                    let shift = tape.constant(Tensor::matrix(
                        1,
                        self.dim,
                        stats.mean.iter().map(|m| -m).collect(),
                    ));
                    let inv = tape.constant(Tensor::matrix(
                        1,
                        self.dim,
                        stats.var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect(),
                    ));
                    x.add_row(shift)?.mul_row(inv)?
                }
                (stats, _) => {
                    let mean = x.col_mean()?;
                    let centered = x.add_row(mean.scale(-1.0))?;
                    let var = centered.square().col_mean()?;
                    if let Some(stats) = stats {
                        let n = x.rows() as f64;
                        let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                        for (i, (&m, &v)) in mean.value().data().iter().zip(var.value().data()).enumerate() {
                            stats.mean[i] = (1.0 - BN_MOMENTUM) * stats.mean[i] + BN_MOMENTUM * m;
                            stats.var[i] =
                                (1.0 - BN_MOMENTUM) * stats.var[i] + BN_MOMENTUM * v * unbiased;
                        }
                    }
                    let std = var.shift(NORM_EPS).sqrt()?;
                    let ones = x.tape().constant(Tensor::full(1, self.dim, 1.0));
                    centered.mul_row(ones.div(std)?)?
                }
            },
        };
        normalized.mul_row(p.get(self.gamma))?.add_row(p.get(self.beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;

    #[test]
    fn glorot_is_bounded_and_seeded() {
        let mut a = SeedStreams::new(1).stream("init");
        let mut b = SeedStreams::new(1).stream("init");
        let w = glorot(&mut a, 4, 6);
        assert_eq!(w, glorot(&mut b, 4, 6));
        let limit = (6.0f64 / 10.0).sqrt();
        assert!(w.data().iter().all(|x| x.abs() <= limit));
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut store = ParamStore::new();
        let norm = Norm::new(&mut store, "n", NormKind::Layer, 3);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(Tensor::from_rows(&[&[1.0, 2.0, 6.0], &[-1.0, 0.0, 1.0]]));
        let y = norm.forward(&p, x, None, true).unwrap().value();
        for r in 0..2 {
            let row = y.row(r);
            let mean: f64 = row.iter().sum::<f64>() / 3.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_tracks_running_stats() {
        let mut store = ParamStore::new();
        let norm = Norm::new(&mut store, "n", NormKind::Batch, 2);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(Tensor::from_rows(&[&[1.0, 10.0], &[3.0, 10.0]]));
        let mut stats = RunningStats::new(2);
        let y = norm.forward(&p, x, Some(&mut stats), true).unwrap().value();
        assert!((y.get(0, 0) + y.get(1, 0)).abs() < 1e-12);
        assert!((stats.mean[0] - 0.2).abs() < 1e-12);
        assert!((stats.var[1] - 0.9).abs() < 1e-12);
        let z = norm.forward(&p, x, Some(&mut stats), false).unwrap().value();
        assert!(z.is_finite());
    }

    #[test]
    fn load_from_checks_shapes() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::zeros(2, 2));
        let mut b = ParamStore::new();
        b.add("w", Tensor::zeros(2, 3));
        assert!(a.load_from(&b).is_err());
        let mut c = ParamStore::new();
        c.add("w", Tensor::full(2, 2, 1.0));
        a.load_from(&c).unwrap();
        assert_eq!(a.values()[0], Tensor::full(2, 2, 1.0));
    }
}
