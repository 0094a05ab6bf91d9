//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every key must be consumed by
//! the command reading the file; leftovers are reported as errors so a typo
//! never silently falls back to a default.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::{Injection, Strategy};
use crate::graph::LaplacianKind;
use crate::models::{ModelKind, Readout};
use crate::nn::NormKind;
use crate::sbm::SbmParams;
use crate::training::TrainConfig;

#[derive(Clone, Debug, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse { line: i + 1, msg: "empty key".into() });
            }
            if entries.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{k}`") });
            }
        }
        Ok(Self { entries })
    }

    /// Sets or overrides a value (command-line flags take precedence).
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let Some((line, raw)) = self.entries.remove(key) else { return Ok(None) };
        raw.parse::<T>().map(Some).map_err(|_| Error::Config(format!(
            "{}invalid value `{raw}` for `{key}`",
            if line > 0 { format!("line {line}: ") } else { String::new() }
        )))
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Removes and parses a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(raw) = self.take::<String>(key)? else { return Ok(None) };
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse::<T>()
                    .map_err(|_| Error::Config(format!("invalid list item `{}` for `{key}`", t.trim())))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<String> = self
            .entries
            .iter()
            .map(|(k, (line, _))| if *line > 0 { format!("`{k}` (line {line})") } else { format!("`{k}`") })
            .collect();
        Err(Error::Config(format!("unknown configuration keys: {}", keys.join(", "))))
    }
}

/// Parses `off` as `None`, anything else as a category id.
pub fn parse_category(s: &str) -> Result<Option<u32>> {
    if s == "off" {
        return Ok(None);
    }
    s.parse::<u32>()
        .map(Some)
        .map_err(|_| Error::Config(format!("invalid PE category `{s}` (1..8 or off)")))
}

impl SbmParams {
    /// Reads `n`, `blocks`, `p_in`, `p_out`, `feature_dim`, `label_noise`
    /// and `seed`.
    pub fn from_kv(kv: &mut KvConfig) -> Result<Self> {
        let d = SbmParams::default();
        let p = SbmParams {
            n: kv.take_or("n", d.n)?,
            num_blocks: kv.take_or("blocks", d.num_blocks)?,
            p_in: kv.take_or("p_in", d.p_in)?,
            p_out: kv.take_or("p_out", d.p_out)?,
            feature_dim: kv.take_or("feature_dim", d.feature_dim)?,
            label_noise: kv.take_or("label_noise", d.label_noise)?,
            seed: kv.take_or("seed", d.seed)?,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

impl TrainConfig {
    /// Reads every training key, starting from the defaults of the chosen
    /// model family (`model` decides which).
    pub fn from_kv(kv: &mut KvConfig) -> Result<Self> {
        let model: ModelKind = kv.take_or("model", ModelKind::HypeGt)?;
        let base = if model.is_transformer() {
            TrainConfig { model, ..TrainConfig::default() }
        } else {
            TrainConfig::deep_gnn(model)
        };
        let category = match kv.take::<String>("category")? {
            Some(s) => parse_category(&s)?,
            None => base.category,
        };
        let default_strategy = if model == ModelKind::HypeGtV2 { Strategy::V2 } else { base.strategy };
        let cfg = TrainConfig {
            model,
            lr: kv.take_or("lr", base.lr)?,
            patience: kv.take_or("patience", base.patience)?,
            lr_decay: kv.take_or("lr_decay", base.lr_decay)?,
            lr_floor: kv.take_or("lr_floor", base.lr_floor)?,
            epochs: kv.take_or("epochs", base.epochs)?,
            batch_size: kv.take_or("batch_size", base.batch_size)?,
            seed: kv.take_or("seed", base.seed)?,
            weight_decay: kv.take_or("weight_decay", base.weight_decay)?,
            curvature: kv.take_or("curvature", base.curvature)?,
            hidden: kv.take_or("hidden", base.hidden)?,
            heads: kv.take_or("heads", base.heads)?,
            pe_dim: kv.take_or("pe_dim", base.pe_dim)?,
            pe_layers: kv.take_or("pe_layers", base.pe_layers)?,
            pe_hidden: kv.take_or("pe_hidden", base.pe_hidden)?,
            gt_layers: kv.take_or("layers", base.gt_layers)?,
            norm_kind: kv.take_or::<NormKind>("norm", base.norm_kind)?,
            category,
            strategy: kv.take_or("strategy", default_strategy)?,
            injection: kv.take_or::<Injection>("injection", base.injection)?,
            dropout: kv.take_or("dropout", base.dropout)?,
            laplacian: kv.take_or::<LaplacianKind>("laplacian", base.laplacian)?,
            readout: kv.take_or::<Readout>("readout", base.readout)?,
            gcnii_alpha: kv.take_or("gcnii_alpha", base.gcnii_alpha)?,
            gcnii_lambda: kv.take_or("gcnii_lambda", base.gcnii_lambda)?,
            track_energy: kv.take_or("track_energy", base.track_energy)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config in the same `key = value` form it is read from.
    pub fn to_kv_lines(&self) -> Vec<String> {
        let category = self.category.map_or("off".to_string(), |c| c.to_string());
        vec![
            format!("model = {}", self.model),
            format!("lr = {}", self.lr),
            format!("patience = {}", self.patience),
            format!("lr_decay = {}", self.lr_decay),
            format!("lr_floor = {}", self.lr_floor),
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("seed = {}", self.seed),
            format!("weight_decay = {}", self.weight_decay),
            format!("curvature = {}", self.curvature),
            format!("hidden = {}", self.hidden),
            format!("heads = {}", self.heads),
            format!("pe_dim = {}", self.pe_dim),
            format!("pe_layers = {}", self.pe_layers),
            format!("pe_hidden = {}", self.pe_hidden),
            format!("layers = {}", self.gt_layers),
            format!("norm = {}", self.norm_kind),
            format!("category = {category}"),
            format!("strategy = {}", self.strategy),
            format!("injection = {}", self.injection),
            format!("dropout = {}", self.dropout),
            format!("laplacian = {}", self.laplacian),
            format!("readout = {}", self.readout),
            format!("gcnii_alpha = {}", self.gcnii_alpha),
            format!("gcnii_lambda = {}", self.gcnii_lambda),
            format!("track_energy = {}", self.track_energy),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_unknown_keys() {
        let mut kv = KvConfig::parse("# header\nn = 40  # nodes\n\np_in=0.3\nbogus = 1\n").unwrap();
        let p = SbmParams::from_kv(&mut kv).unwrap();
        assert_eq!((p.n, p.p_in), (40, 0.3));
        let err = kv.finish().unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line 5"), "{err}");
    }

    #[test]
    fn bad_lines_and_values() {
        assert!(KvConfig::parse("novalue\n").is_err());
        assert!(KvConfig::parse("a = 1\na = 2\n").is_err());
        let mut kv = KvConfig::parse("n = ten\n").unwrap();
        assert!(SbmParams::from_kv(&mut kv).is_err());
        let mut kv = KvConfig::parse("p_in = 0.01\np_out = 0.1\n").unwrap();
        assert!(matches!(SbmParams::from_kv(&mut kv), Err(Error::Config(_))));
    }

    #[test]
    fn train_config_round_trips_through_kv() {
        let mut kv = KvConfig::parse("model = gcn\ncategory = 4\nlayers = 16\nhidden = 16\n").unwrap();
        let cfg = TrainConfig::from_kv(&mut kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.category, Some(4));
        let mut again = KvConfig::parse(&cfg.to_kv_lines().join("\n")).unwrap();
        assert_eq!(TrainConfig::from_kv(&mut again).unwrap(), cfg);
        again.finish().unwrap();
    }

    #[test]
    fn gtv2_defaults_to_tangent_fusion() {
        let mut kv = KvConfig::parse("model = hype-gtv2\n").unwrap();
        assert_eq!(TrainConfig::from_kv(&mut kv).unwrap().strategy, Strategy::V2);
        let mut kv = KvConfig::parse("category = off\n").unwrap();
        assert_eq!(TrainConfig::from_kv(&mut kv).unwrap().category, None);
        let mut kv = KvConfig::parse("category = 9\n").unwrap();
        assert!(TrainConfig::from_kv(&mut kv).is_err());
    }

    #[test]
    fn lists() {
        let mut kv = KvConfig::parse("depths = 2, 4,8\n").unwrap();
        assert_eq!(kv.take_list::<usize>("depths").unwrap(), Some(vec![2, 4, 8]));
    }
}
