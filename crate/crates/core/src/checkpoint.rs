//! Plain-text model checkpoints.
//!
//! ```text
//! hypegt-checkpoint 1
//! arch family=gt in=2 classes=2 ...
//! dims 2 2
//! epoch 12
//! config model = hype-gt
//! ...
//! param embed.weight 2 80
//! <one line of values per row>
//! stats 80
//! <means>
//! <variances>
//! checksum 0123456789abcdef
//! ```
//!
//! The checksum is FNV-1a over every preceding byte. Values use the
//! shortest round-trip decimal form, so save → load is bit exact.

use std::fmt::Write as _;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::nn::{ParamStore, RunningStats};
use crate::pe::CategoryTable;
use crate::rng::SeedStreams;
use crate::tensor::Tensor;
use crate::training::{Snapshot, TrainConfig};

const MAGIC: &str = "hypegt-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub in_dim: usize,
    pub num_classes: usize,
    pub epoch: usize,
    pub config: TrainConfig,
    pub params: ParamStore,
    pub stats: Vec<RunningStats>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    pub fn new(config: &TrainConfig, arch: &Architecture, snapshot: &Snapshot) -> Self {
        Self {
            arch: arch.config.architecture(),
            in_dim: arch.config.in_dim,
            num_classes: arch.config.num_classes,
            epoch: snapshot.epoch,
            config: config.clone(),
            params: snapshot.params.clone(),
            stats: snapshot.stats.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "arch {}", self.arch);
        let _ = writeln!(s, "dims {} {}", self.in_dim, self.num_classes);
        let _ = writeln!(s, "epoch {}", self.epoch);
        for line in self.config.to_kv_lines() {
            let _ = writeln!(s, "config {line}");
        }
        for (name, t) in self.params.iter() {
            let _ = writeln!(s, "param {name} {} {}", t.rows(), t.cols());
            for r in 0..t.rows() {
                let _ = writeln!(s, "{}", join(t.row(r)));
            }
        }
        for st in &self.stats {
            let _ = writeln!(s, "stats {}", st.mean.len());
            let _ = writeln!(s, "{}", join(&st.mean));
            let _ = writeln!(s, "{}", join(&st.var));
        }
        let sum = fnv1a(s.as_bytes());
        let _ = writeln!(s, "checksum {sum:016x}");
        s
    }

    /// Parses and checks the checksum; does not validate against a model.
    pub fn parse(text: &str) -> Result<Self> {
        let body_end = text
            .rfind("checksum ")
            .ok_or(Error::Parse { line: 0, msg: "missing checksum".into() })?;
        let (body, tail) = text.split_at(body_end);
        let want = u64::from_str_radix(tail.trim_start_matches("checksum ").trim(), 16)
            .map_err(|_| Error::Parse { line: 0, msg: "malformed checksum".into() })?;
        if fnv1a(body.as_bytes()) != want {
            return Err(Error::Parse { line: 0, msg: "checksum mismatch (corrupted checkpoint)".into() });
        }

        let lines: Vec<&str> = body.lines().collect();
        let mut i = 0;
        let err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let next = |i: &mut usize| -> Result<&str> {
            let l = lines.get(*i).copied().ok_or_else(|| err(*i, "unexpected end of checkpoint"))?;
            *i += 1;
            Ok(l)
        };
        if next(&mut i)? != MAGIC {
            return Err(err(0, "not a checkpoint"));
        }
        let arch = next(&mut i)?
            .strip_prefix("arch ")
            .ok_or_else(|| err(1, "expected `arch`"))?
            .to_string();
        let dims: Vec<usize> = next(&mut i)?
            .strip_prefix("dims ")
            .ok_or_else(|| err(2, "expected `dims`"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(2, "bad dims")))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(err(2, "dims needs two values"));
        }
        let epoch: usize = next(&mut i)?
            .strip_prefix("epoch ")
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err(3, "expected `epoch N`"))?;
        let mut cfg_text = String::new();
        while let Some(l) = lines.get(i).and_then(|l| l.strip_prefix("config ")) {
            cfg_text.push_str(l);
            cfg_text.push('\n');
            i += 1;
        }
        let mut kv = KvConfig::parse(&cfg_text)?;
        let config = TrainConfig::from_kv(&mut kv)?;
        kv.finish()?;

        let parse_row = |line: usize, s: &str, len: usize| -> Result<Vec<f64>> {
            let row: Vec<f64> = s
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(line, "bad number")))
                .collect::<Result<_>>()?;
            if row.len() != len {
                return Err(err(line, &format!("expected {len} values, found {}", row.len())));
            }
            Ok(row)
        };
        let mut params = ParamStore::new();
        while let Some(rest) = lines.get(i).and_then(|l| l.strip_prefix("param ")) {
            let at = i;
            i += 1;
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(err(at, "expected `param name rows cols`"));
            }
            let (r, c): (usize, usize) = match (toks[1].parse(), toks[2].parse()) {
                (Ok(r), Ok(c)) => (r, c),
                _ => return Err(err(at, "bad parameter shape")),
            };
            let mut data = Vec::with_capacity(r * c);
            for _ in 0..r {
                let at = i;
                data.extend(parse_row(at, next(&mut i)?, c)?);
            }
            params.add(toks[0], Tensor::matrix(r, c, data));
        }
        let mut stats = Vec::new();
        while let Some(rest) = lines.get(i).and_then(|l| l.strip_prefix("stats ")) {
            let at = i;
            i += 1;
            let d: usize = rest.trim().parse().map_err(|_| err(at, "bad stats width"))?;
            let mean = parse_row(i, next(&mut i)?, d)?;
            let var = parse_row(i, next(&mut i)?, d)?;
            stats.push(RunningStats { mean, var });
        }
        if i != lines.len() {
            return Err(err(i, "unexpected content"));
        }
        Ok(Self {
            arch,
            in_dim: dims[0],
            num_classes: dims[1],
            epoch,
            config,
            params,
            stats,
        })
    }

    /// Rebuilds the architecture from the embedded config and checks that
    /// it matches the recorded architecture line, parameter names and
    /// shapes, statistics layout, and that every value is finite.
    pub fn restore(&self, table: &CategoryTable) -> Result<(Architecture, ParamStore)> {
        let model_cfg = self.config.model_config(self.in_dim, self.num_classes, table)?;
        let mut store = ParamStore::new();
        let mut rng = SeedStreams::new(0).stream("init");
        let arch = Architecture::new(model_cfg, &mut store, &mut rng)?;
        if arch.config.architecture() != self.arch {
            return Err(Error::Config(format!(
                "architecture line does not match config:\n  recorded: {}\n  rebuilt:  {}",
                self.arch,
                arch.config.architecture()
            )));
        }
        store.load_from(&self.params)?;
        let expected = arch.initial_stats();
        if expected.len() != self.stats.len()
            || expected.iter().zip(&self.stats).any(|(a, b)| a.mean.len() != b.mean.len())
        {
            return Err(Error::Config("normalization statistics do not match the model".into()));
        }
        if store.values().iter().any(|t| !t.is_finite())
            || self.stats.iter().any(|s| s.mean.iter().chain(&s.var).any(|x| !x.is_finite()))
        {
            return Err(Error::NumericalStability("checkpoint holds non-finite values".into()));
        }
        Ok((arch, store))
    }
}
