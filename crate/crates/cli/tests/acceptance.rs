//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use hypegt_cli::{run_oversmooth, OversmoothPlan, SweepResult};
use hypegt_core::fusion::Strategy;
use hypegt_core::graph::{Graph, LaplacianKind};
use hypegt_core::manifold::{exp_o, log_o, mobius_add, tan_proj, tangent_coords, HBatch, ManifoldKind, ManifoldSpec};
use hypegt_core::nn::ParamStore;
use hypegt_core::pe::{generate_pe, lap_pe, rw_pe, CategoryTable, PeConfig, PeEncoder};
use hypegt_core::rng::SeedStreams;
use hypegt_core::sbm::{sbm_generate, SbmParams};
use hypegt_core::training::{auroc, train_loop, TrainConfig};
use hypegt_core::verify::{gt_permutation_error, hgcn_permutation_error, layer_grad_errors, random_connected_graph};
use hypegt_core::nn::NormKind;
use hypegt_core::{Tape, Tensor};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = SeedStreams::new(100).stream("acceptance.geometry");
    let mut roundtrip = 0.0f64;
    let mut mobius = 0.0f64;
    for kind in [ManifoldKind::Hyperboloid, ManifoldKind::PoincareBall] {
        for c in [0.5, 1.0, 2.0] {
            let spec = ManifoldSpec::new(kind, c).unwrap();
            let tape = Tape::new();
            let mut rows = Vec::new();
            while rows.len() < 100 * 4 {
                let v: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
                if v.iter().map(|x| x * x).sum::<f64>() <= 9.0 {
                    rows.extend(v);
                }
            }
            let v = tape.constant(Tensor::matrix(100, 4, rows));
            let x = exp_o(spec, tan_proj(spec, v).unwrap()).unwrap();
            let back = tangent_coords(spec, log_o(&x).unwrap()).unwrap();
            roundtrip = roundtrip.max(back.value().max_abs_diff(&v.value()));
            if kind == ManifoldKind::PoincareBall {
                let zero = HBatch { spec, points: tape.constant(Tensor::zeros(100, 4)) };
                mobius = mobius.max(mobius_add(&zero, &x).unwrap().points.value().max_abs_diff(&x.points.value()));
                let neg = HBatch { spec, points: x.points.scale(-1.0) };
                mobius = mobius.max(mobius_add(&neg, &x).unwrap().points.value().max_abs());
            }
        }
    }
    let table = CategoryTable::default();
    let mut on_manifold = 0.0f64;
    for draw in 0..100u32 {
        let g = random_connected_graph(&mut rng, 16, 0.2);
        let cfg = PeConfig {
            k: 4,
            pe_layers: 1 + draw as usize % 3,
            hidden: 6,
            curvature: [0.5, 1.0, 2.0][draw as usize % 3],
            ..PeConfig::new(table.get(draw % 8 + 1).unwrap())
        };
        let mut store = ParamStore::new();
        let enc = PeEncoder::new(&mut store, "pe", cfg, &mut rng).unwrap();
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        on_manifold = on_manifold.max(generate_pe(&tape, &g, &enc, &p).unwrap().violation());
    }
    let elapsed = start.elapsed();
    outcome(
        roundtrip <= 1e-8 && mobius <= 1e-12 && on_manifold <= 1e-8 && within(elapsed, Duration::from_secs(5)),
        format!(
            "exp/log roundtrip {roundtrip:.2e} (<=1e-8), mobius identity/inverse {mobius:.2e} (<=1e-12), \
             encoder on-manifold {on_manifold:.2e} (<=1e-8), {elapsed:.2?} (<5s)"
        ),
    )
}

fn dense_rw_diagonals(g: &Graph, k: usize) -> Vec<Vec<f64>> {
    let n = g.n();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if g.has_edge(i, j) { 1.0 / g.degree(j) as f64 } else { 0.0 }).collect())
        .collect();
    let mut power = a.clone();
    let mut diag = Vec::new();
    for _ in 0..k {
        diag.push((0..n).map(|i| power[i][i]).collect());
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for l in 0..n {
                if power[i][l] != 0.0 {
                    for j in 0..n {
                        next[i][j] += power[i][l] * a[l][j];
                    }
                }
            }
        }
        power = next;
    }
    diag
}

fn auroc_brute(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = SeedStreams::new(101).stream("acceptance.oracles");
    let mut rw = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=64);
        let k = rng.random_range(1..=8);
        let p = rng.random_range(0.02..0.3);
        let g = random_connected_graph(&mut rng, n, p);
        let pe = rw_pe(&g, k).unwrap();
        for (s, diag) in dense_rw_diagonals(&g, k).iter().enumerate() {
            for i in 0..n {
                rw = rw.max((pe.get(i, s) - diag[i]).abs());
            }
        }
    }
    let mut auroc_mismatch = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=60);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64 * 0.5).collect();
        if auroc(&scores, &labels).unwrap() != auroc_brute(&scores, &labels) {
            auroc_mismatch += 1;
        }
    }
    let (mut resid, mut gram) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(3..=48);
        let p = rng.random_range(0.05..0.4);
        let g = random_connected_graph(&mut rng, n, p);
        let k = rng.random_range(1..n.min(9));
        let u = lap_pe(&g, k, LaplacianKind::Sym, false).unwrap();
        // L = I − D^{-1/2} A D^{-1/2}, applied column by column
        for j in 0..k {
            let col: Vec<f64> = (0..n).map(|i| u.get(i, j)).collect();
            let lu: Vec<f64> = (0..n)
                .map(|i| {
                    col[i] - g.neighbors(i).iter().map(|&v| col[v] / ((g.degree(i) * g.degree(v)) as f64).sqrt()).sum::<f64>()
                })
                .collect();
            let lambda: f64 = col.iter().zip(&lu).map(|(a, b)| a * b).sum();
            let r = col.iter().zip(&lu).map(|(a, b)| (b - lambda * a).powi(2)).sum::<f64>().sqrt();
            resid = resid.max(r);
            for j2 in 0..k {
                let dot: f64 = (0..n).map(|i| u.get(i, j) * u.get(i, j2)).sum();
                gram = gram.max((dot - if j == j2 { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        rw <= 1e-12 && auroc_mismatch == 0 && resid <= 1e-8 && gram <= 1e-8 && within(elapsed, Duration::from_secs(30)),
        format!(
            "rw_pe vs dense powers {rw:.2e} (<=1e-12, 50 graphs), auroc mismatches {auroc_mismatch}/100 (exact), \
             lap_pe residual {resid:.2e} and Gram {gram:.2e} (<=1e-8), {elapsed:.2?} (<30s)"
        ),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let errors = layer_grad_errors(&SeedStreams::new(102)).unwrap();
    let required = [
        "hnn_forward",
        "hgcn_forward",
        "fuse_v1",
        "fuse_v2",
        "gt_layer",
        "gcn_layer",
        "gcnii_layer",
        "cross_entropy",
    ];
    let missing: Vec<&str> = required.iter().copied().filter(|r| !errors.iter().any(|(n, _)| n == r)).collect();
    let worst = errors.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let listed: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        missing.is_empty() && worst <= 1e-4 && within(elapsed, Duration::from_secs(120)),
        format!("max relative error {worst:.2e} (<=1e-4, h=1e-5, 5 points each) [{}], {elapsed:.2?} (<2min)", listed.join(", ")),
    )
}

fn equivariance() -> Outcome {
    let mut rng = SeedStreams::new(103).stream("acceptance.equivariance");
    let mut gt = 0.0f64;
    let mut hgcn = 0.0f64;
    for t in 0..20 {
        let n = rng.random_range(2..=32);
        let norm = if t % 2 == 0 { NormKind::Batch } else { NormKind::Layer };
        gt = gt.max(gt_permutation_error(&mut rng, n, norm).unwrap());
        let spec = if t % 2 == 0 { ManifoldSpec::hyperboloid(1.0) } else { ManifoldSpec::poincare(1.0) }.unwrap();
        let n = rng.random_range(2..=32);
        hgcn = hgcn.max(hgcn_permutation_error(&mut rng, spec, n).unwrap());
    }
    outcome(
        gt <= 1e-10 && hgcn <= 1e-10,
        format!("gt_layer {gt:.2e}, hgcn_forward {hgcn:.2e} (<=1e-10, 20 permutations, n<=32)"),
    )
}

/// Desk-scale sweep: hidden and PE width 16, fixed learning rate over the
/// 200-epoch budget, SBM sampled per seed.
const OVERSMOOTH_CONFIG: &str = "\
model = gcn
depths = 8, 16, 32
categories = off, 3, 4
strategies = v1
seeds = 0, 1, 2, 3
epochs = 200
hidden = 16
pe_dim = 16
patience = 1000
sbm.n = 300
sbm.blocks = 2
sbm.p_in = 0.1
sbm.p_out = 0.01
";

fn find(results: &[SweepResult], depth: usize, category: Option<u32>) -> &SweepResult {
    results.iter().find(|r| r.row.depth == depth && r.row.category == category).expect("row present")
}

fn oversmoothing() -> Outcome {
    let start = Instant::now();
    let plan = OversmoothPlan::parse(OVERSMOOTH_CONFIG).unwrap();
    let results = run_oversmooth(&plan, None).map_err(|e| e.message).unwrap();
    let elapsed = start.elapsed();

    // (a) majority baseline on each seed's test split
    let baseline: Vec<f64> = plan
        .seeds
        .iter()
        .map(|&seed| {
            let g = sbm_generate(&SbmParams { seed, ..plan.sbm.clone() }).unwrap();
            let test = &g.splits().test;
            let mut counts = vec![0usize; g.num_classes()];
            for &i in test {
                counts[g.labels()[i]] += 1;
            }
            *counts.iter().max().unwrap() as f64 / test.len() as f64
        })
        .collect();
    let plain32 = &find(&results, 32, None).test_acc;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let gap = (mean(plain32) - mean(&baseline)).abs();
    let a = gap <= 0.05;

    // (b) best of categories 3 and 4 strictly above plain, per seed
    let mut b = true;
    let mut b_detail = Vec::new();
    for depth in [8, 16, 32] {
        let plain = &find(&results, depth, None).test_acc;
        let c3 = &find(&results, depth, Some(3)).test_acc;
        let c4 = &find(&results, depth, Some(4)).test_acc;
        let wins = (0..plain.len()).filter(|&s| c3[s].max(c4[s]) > plain[s]).count();
        b &= wins >= 3;
        b_detail.push(format!(
            "depth {depth}: {wins}/4 (plain {:?}, best PE {:?})",
            plain.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            (0..plain.len()).map(|s| (c3[s].max(c4[s]) * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ));
    }

    // (c) energy at depth 32, every seed, for the injected categories
    let plain_e = &find(&results, 32, None).energy;
    let mut c = true;
    for cat in [3, 4] {
        let e = &find(&results, 32, Some(cat)).energy;
        c &= e.iter().zip(plain_e).all(|(pe, pl)| pe > pl);
    }
    let time_ok = within(elapsed, Duration::from_secs(600));
    let tag = |ok: bool| if ok { "pass" } else { "FAIL" };
    outcome(
        a && b && c && time_ok,
        format!(
            "(a) {}: depth-32 plain GCN {:.3} vs majority {:.3}, gap {gap:.3} (<=0.05); \
             (b) {}: {}; (c) {}: depth-32 energy plain {:?} vs PE cat3 {:?} cat4 {:?}; {elapsed:.2?} (<10min)",
            tag(a),
            mean(plain32),
            mean(&baseline),
            tag(b),
            b_detail.join("; "),
            tag(c),
            plain_e.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            find(&results, 32, Some(3)).energy.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            find(&results, 32, Some(4)).energy.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
        ),
    )
}

fn gt_sanity() -> Outcome {
    let start = Instant::now();
    let g = sbm_generate(&SbmParams { n: 500, seed: 0, ..Default::default() }).unwrap();
    let table = CategoryTable::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for category in [1, 8] {
        for strategy in [Strategy::V1, Strategy::V2] {
            let cfg = TrainConfig { epochs: 300, category: Some(category), strategy, ..TrainConfig::default() };
            assert_eq!((cfg.hidden, cfg.heads, cfg.gt_layers, cfg.curvature), (80, 8, 4, 1.0));
            let mut reached = None;
            train_loop(0, &cfg, &g, &table, &mut |m| {
                if m.epoch > 0 && m.train_acc >= 0.9 && reached.is_none() {
                    reached = Some(m.epoch);
                }
                reached.is_none()
            })
            .unwrap();
            ok &= reached.is_some();
            detail.push(format!(
                "category {category} {strategy}: {}",
                reached.map_or("never".to_string(), |e| format!("epoch {e}"))
            ));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        ok && within(elapsed, Duration::from_secs(300)),
        format!("train acc >= 0.90 within 300 epochs: {}; {elapsed:.2?} (<5min)", detail.join(", ")),
    )
}

fn hypegt(dir: &Path, args: &[&str], threads: &str) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hypegt"))
        .args(args)
        .current_dir(dir)
        .env("HYPEGT_THREADS", threads)
        .output()
        .expect("binary runs")
}

const SWEEP_CONFIG: &str = "\
model = hype-gt
mode = pe_layers
depths = 2
categories = 3
hidden = 16
heads = 2
pe_dim = 4
epochs = 15
seeds = 0, 1
sbm.n = 80
sbm.p_in = 0.3
";

fn pe_layer_sweep() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sweep.cfg"), SWEEP_CONFIG).unwrap();
    let o = hypegt(dir.path(), &["oversmooth", "--config", "sweep.cfg", "--out", "sweep.csv"], "2");
    if o.status.code() != Some(0) {
        return outcome(false, format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    let header_ok = lines.first() == Some(&"pe_layers,depth,category,strategy,test_acc_mean,test_acc_std,energy");
    let levels: Vec<String> = lines.iter().skip(1).map(|l| l.split(',').next().unwrap_or("").to_string()).collect();
    let levels_ok = levels == ["1", "2", "3", "4", "5"];
    let rows_ok = lines.iter().skip(1).all(|l| {
        let f: Vec<&str> = l.split(',').collect();
        f.len() == 7 && f[4..].iter().all(|x| x.parse::<f64>().is_ok_and(f64::is_finite))
    });
    outcome(
        header_ok && levels_ok && rows_ok,
        format!("rows for L = {} (expected 1..5), header ok {header_ok}, numeric fields ok {rows_ok}", levels.join(",")),
    )
}

fn run_all_commands(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    fs::write(dir.join("sbm.cfg"), "n = 80\np_in = 0.3\np_out = 0.02\nseed = 5\n").unwrap();
    fs::write(dir.join("train.cfg"), "graph = g.txt\nhidden = 8\nheads = 2\nlayers = 2\nepochs = 8\npe_dim = 3\ncategory = 7\n").unwrap();
    fs::write(
        dir.join("os.cfg"),
        "depths = 2,4\ncategories = off,4\nepochs = 5\nhidden = 8\npe_dim = 4\nsbm.n = 60\nsbm.p_in = 0.3\nseeds = 0,1,2\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    let mut record = |args: &[&str]| {
        let o = hypegt(dir, args, threads);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        outputs.push((args.join(" "), o.stdout));
    };
    record(&["gen-graph", "--config", "sbm.cfg", "--out", "g.txt"]);
    record(&["gen-pe", "--graph", "g.txt", "--category", "6", "--seed", "3", "--out", "pe.txt"]);
    record(&["train", "--config", "train.cfg", "--seeds", "1,2,3", "--out", "run"]);
    record(&["train", "--config", "train.cfg", "--inspect"]);
    record(&["verify", "models", "--seed", "4"]);
    record(&["oversmooth", "--config", "os.cfg", "--out", "os.csv"]);
    let mut files = vec!["g.txt", "pe.txt", "os.csv", "run/metrics.jsonl", "run/aggregate.json"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    files.extend((1..=3).map(|s| format!("run/checkpoint-seed{s}.txt")));
    for f in files {
        let bytes = fs::read(dir.join(&f)).unwrap();
        outputs.push((f, bytes));
    }
    outputs
}

fn determinism() -> Outcome {
    let runs: Vec<Vec<(String, Vec<u8>)>> = ["1", "4", "4"]
        .iter()
        .map(|threads| run_all_commands(tempfile::tempdir().unwrap().path(), threads))
        .collect();
    let mut differing = Vec::new();
    for (i, (name, bytes)) in runs[0].iter().enumerate() {
        if runs[1..].iter().any(|r| &r[i].1 != bytes) {
            differing.push(name.clone());
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} outputs compared across 3 invocations (1 and 4 worker threads), differing: {}",
            runs[0].len(),
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") }
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    // `cargo test -- --list` and filters come through as arguments
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 8] = [
        ("geometry", geometry),
        ("oracle-equivalence", oracle_equivalence),
        ("gradients", gradients),
        ("equivariance", equivariance),
        ("over-smoothing", oversmoothing),
        ("gt-sanity", gt_sanity),
        ("pe-layer-sweep", pe_layer_sweep),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !args.is_empty() && !args.iter().any(|a| name.contains(a.as_str())) {
            continue;
        }
        ran += 1;
        let result = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())))));
        println!("{} {name}: {}", if result.passed { "PASS" } else { "FAIL" }, result.detail);
        failed += usize::from(!result.passed);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
