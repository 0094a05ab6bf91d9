//! Stochastic block model graphs for desk-scale experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Graph, Splits};
use crate::rng::SeedStreams;
use crate::tensor::Tensor;

/// Standard deviation of the Gaussian jitter added to every feature.
pub const FEATURE_JITTER: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SbmParams {
    pub n: usize,
    pub num_blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Fraction of nodes whose feature indicator points at a wrong block.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            n: 300,
            num_blocks: 2,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 2,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 {
            return Err(Error::Parameter("num_blocks must be ≥ 1".into()));
        }
        if self.n < self.num_blocks {
            return Err(Error::Parameter(format!(
                "n={} is smaller than num_blocks={}",
                self.n, self.num_blocks
            )));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::Parameter(format!(
                "need 0 ≤ p_out < p_in ≤ 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.feature_dim < self.num_blocks {
            return Err(Error::Parameter(format!(
                "feature_dim={} cannot hold a one-hot over {} blocks",
                self.feature_dim, self.num_blocks
            )));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::Parameter(format!("label_noise {} outside [0,1]", self.label_noise)));
        }
        Ok(())
    }

    /// Block of each node; blocks are contiguous and differ in size by ≤ 1.
    pub fn block_labels(&self) -> Vec<usize> {
        let base = self.n / self.num_blocks;
        let extra = self.n % self.num_blocks;
        (0..self.num_blocks)
            .flat_map(|b| std::iter::repeat_n(b, base + usize::from(b < extra)))
            .collect()
    }
}

/// Samples a graph. Deterministic in `params.seed`.
pub fn sbm_generate(params: &SbmParams) -> Result<Graph> {
    params.validate()?;
    let streams = SeedStreams::new(params.seed);
    let labels = params.block_labels();
    let n = params.n;

    let mut rng = streams.stream("graph");
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut rng = streams.stream("features");
    let jitter = Normal::new(0.0, FEATURE_JITTER).expect("valid normal");
    let mut features = Tensor::zeros(n, params.feature_dim);
    for (u, &label) in labels.iter().enumerate() {
        let mut shown = label;
        if params.num_blocks > 1 && rng.random::<f64>() < params.label_noise {
            let other = rng.random_range(0..params.num_blocks - 1);
            shown = if other >= label { other + 1 } else { other };
        }
        let row = features.row_mut(u);
        row[shown] = 1.0;
        for x in row.iter_mut() {
            *x += jitter.sample(&mut rng);
        }
    }

    let mut rng = streams.stream("split");
    let mut splits = Splits::default();
    for b in 0..params.num_blocks {
        let mut members: Vec<usize> = (0..n).filter(|&u| labels[u] == b).collect();
        members.shuffle(&mut rng);
        let m = members.len();
        let n_train = (0.6 * m as f64).round() as usize;
        let n_val = ((0.2 * m as f64).round() as usize).min(m - n_train);
        splits.train.extend_from_slice(&members[..n_train]);
        splits.val.extend_from_slice(&members[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&members[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();

    Graph::new(n, &edges, features, labels, params.num_blocks, splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_blocks_give_disjoint_triangles() {
        let g = sbm_generate(&SbmParams {
            n: 6,
            num_blocks: 2,
            p_in: 1.0,
            p_out: 0.0,
            feature_dim: 2,
            label_noise: 0.0,
            seed: 3,
        })
        .unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        assert_eq!(g.labels(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SbmParams { n: 40, seed: 11, ..Default::default() };
        assert_eq!(sbm_generate(&p).unwrap(), sbm_generate(&p).unwrap());
        let q = SbmParams { seed: 12, ..p.clone() };
        assert_ne!(sbm_generate(&p).unwrap(), sbm_generate(&q).unwrap());
    }

    #[test]
    fn invalid_parameters() {
        let base = SbmParams::default();
        assert!(sbm_generate(&SbmParams { n: 1, ..base.clone() }).is_err());
        assert!(sbm_generate(&SbmParams { p_in: 0.01, p_out: 0.1, ..base.clone() }).is_err());
        assert!(sbm_generate(&SbmParams { feature_dim: 1, ..base }).is_err());
    }

    #[test]
    fn within_block_density_tracks_p_in() {
        let mut within = 0usize;
        let mut pairs = 0usize;
        for seed in 0..20 {
            let p = SbmParams { n: 300, p_in: 0.1, p_out: 0.01, seed, ..Default::default() };
            let g = sbm_generate(&p).unwrap();
            let lab = g.labels();
            within += g.edges().filter(|&(u, v)| lab[u] == lab[v]).count();
            pairs += 2 * (150 * 149 / 2);
        }
        let density = within as f64 / pairs as f64;
        assert!((density - 0.1).abs() <= 0.03, "density {density}");
    }

    #[test]
    fn splits_are_stratified_60_20_20() {
        let g = sbm_generate(&SbmParams { n: 100, ..Default::default() }).unwrap();
        let s = g.splits();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
        let per_block = |v: &[usize], b| v.iter().filter(|&&u| g.labels()[u] == b).count();
        assert_eq!(per_block(&s.train, 0), 30);
        assert_eq!(per_block(&s.test, 1), 10);
    }

    #[test]
    fn no_cross_block_components_without_p_out() {
        let g = sbm_generate(&SbmParams { n: 60, num_blocks: 3, p_in: 0.2, p_out: 0.0, feature_dim: 3, ..Default::default() }).unwrap();
        for comp in g.connected_components() {
            let b = g.labels()[comp[0]];
            assert!(comp.iter().all(|&u| g.labels()[u] == b));
        }
    }
}
