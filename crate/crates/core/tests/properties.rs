use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hypegt_core::config::KvConfig;
use hypegt_core::graph::{parse_graph, Graph};
use hypegt_core::manifold::{
    exp_o, log_o, manifold_add, mobius_add, tan_proj, tangent_coords, HBatch, ManifoldKind, ManifoldSpec,
};
use hypegt_core::pe::rw_pe;
use hypegt_core::sbm::{sbm_generate, SbmParams};
use hypegt_core::training::{auroc, dirichlet_energy, mean_std, TrainConfig};
use hypegt_core::verify::random_connected_graph;
use hypegt_core::{Tape, Tensor};

fn spec_strategy() -> impl Strategy<Value = ManifoldSpec> {
    (prop_oneof![Just(ManifoldKind::Hyperboloid), Just(ManifoldKind::PoincareBall)], 0.1f64..4.0)
        .prop_map(|(k, c)| ManifoldSpec::new(k, c).unwrap())
}

fn tangent(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exp_then_log_is_identity(spec in spec_strategy(), v in tangent(3)) {
        let tape = Tape::new();
        let e = tape.constant(Tensor::from_rows(&[&v]));
        let x = exp_o(spec, tan_proj(spec, e).unwrap()).unwrap();
        prop_assert!(x.violation() <= 1e-8);
        let back = tangent_coords(spec, log_o(&x).unwrap()).unwrap().value();
        prop_assert!(back.max_abs_diff(&e.value()) <= 1e-8);
    }

    #[test]
    fn manifold_addition_stays_on_manifold(spec in spec_strategy(), a in tangent(2), b in tangent(2)) {
        let tape = Tape::new();
        let x = exp_o(spec, tan_proj(spec, tape.constant(Tensor::from_rows(&[&a]))).unwrap()).unwrap();
        let y = exp_o(spec, tan_proj(spec, tape.constant(Tensor::from_rows(&[&b]))).unwrap()).unwrap();
        let z = manifold_add(&x, &y).unwrap();
        prop_assert!(z.violation() <= 1e-8);
        prop_assert!(z.points.value().is_finite());
    }

    #[test]
    fn mobius_identity_and_inverse(c in 0.1f64..4.0, a in tangent(3)) {
        let spec = ManifoldSpec::poincare(c).unwrap();
        let tape = Tape::new();
        let x = exp_o(spec, tan_proj(spec, tape.constant(Tensor::from_rows(&[&a]))).unwrap()).unwrap();
        let zero = HBatch { spec, points: tape.constant(Tensor::zeros(1, 3)) };
        let id = mobius_add(&zero, &x).unwrap().points.value();
        prop_assert!(id.max_abs_diff(&x.points.value()) <= 1e-12);
        let neg = HBatch { spec, points: x.points.scale(-1.0) };
        prop_assert!(mobius_add(&neg, &x).unwrap().points.value().max_abs() <= 1e-12);
    }

    #[test]
    fn rw_pe_entries_are_return_probabilities(seed in 0u64..1000, n in 2usize..30, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.2);
        let pe = rw_pe(&g, k).unwrap();
        for i in 0..n {
            // no self-loops: a one-step walk never returns
            prop_assert_eq!(pe.get(i, 0), 0.0);
            for s in 0..k {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&pe.get(i, s)));
            }
        }
    }

    #[test]
    fn auroc_reverses_under_negation(scores in prop::collection::vec(0u8..5, 2..30), flips in prop::collection::vec(any::<bool>(), 30)) {
        let n = scores.len();
        let mut labels: Vec<bool> = flips[..n].to_vec();
        labels[0] = true;
        labels[1] = false;
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = auroc(&s, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + auroc(&neg, &labels).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_is_nonnegative_and_vanishes_on_degree_scaled_rows(seed in 0u64..1000, n in 2usize..20, row in tangent(3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.3);
        let h = hypegt_core::verify::random_matrix(&mut rng, n, 3, 1.0);
        prop_assert!(dirichlet_energy(&h, &g).unwrap() >= 0.0);
        // h_u = √(1+d_u)·r makes every normalized difference zero
        let mut scaled = Tensor::zeros(n, 3);
        for u in 0..n {
            let s = (1.0 + g.degree(u) as f64).sqrt();
            for c in 0..3 {
                scaled.set(u, c, row[c] * s);
            }
        }
        prop_assert!(dirichlet_energy(&scaled, &g).unwrap() < 1e-20);
    }

    #[test]
    fn graph_text_round_trip(seed in 0u64..500, n in 4usize..60) {
        let g = sbm_generate(&SbmParams { n, p_in: 0.4, p_out: 0.05, seed, ..Default::default() }).unwrap();
        let text = g.to_text();
        let back = parse_graph(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn permuted_graph_keeps_degrees(seed in 0u64..500, n in 2usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.2);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let gp: Graph = g.permute(&perm).unwrap();
        for u in 0..n {
            prop_assert_eq!(g.degree(u), gp.degree(perm[u]));
        }
        prop_assert_eq!(g.num_edges(), gp.num_edges());
    }

    #[test]
    fn mean_std_bounds(xs in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let (m, s) = mean_std(&xs);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        prop_assert!(s >= 0.0 && s <= (hi - lo) + 1e-12);
    }

    #[test]
    fn train_config_kv_round_trip(hidden in 1usize..200, lr in 1e-5f64..1.0, cat in 0u32..9, layers in 1usize..64) {
        let cfg = TrainConfig {
            hidden,
            heads: 1,
            lr,
            gt_layers: layers,
            category: if cat == 0 { None } else { Some(cat) },
            ..TrainConfig::default()
        };
        let mut kv = KvConfig::parse(&cfg.to_kv_lines().join("\n")).unwrap();
        prop_assert_eq!(TrainConfig::from_kv(&mut kv).unwrap(), cfg);
        kv.finish().unwrap();
    }
}
