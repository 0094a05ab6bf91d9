//! Command implementations behind the `hypegt` binary.
//!
//! Commands return their outputs as values; [`execute`] does the file and
//! terminal I/O. Runs fan out over a rayon pool (size from
//! `HYPEGT_THREADS`) and are always collected back in seed order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use hypegt_core::checkpoint::Checkpoint;
use hypegt_core::config::{parse_category, KvConfig};
use hypegt_core::fusion::Strategy;
use hypegt_core::graph::{parse_graph, Graph};
use hypegt_core::models::ModelKind;
use hypegt_core::nn::ParamStore;
use hypegt_core::pe::{generate_pe, CategoryTable, PeConfig, PeEncoder, PeTable, STABILITY_TOL};
use hypegt_core::rng::SeedStreams;
use hypegt_core::sbm::{sbm_generate, SbmParams};
use hypegt_core::training::{mean_std, train_loop, EpochMetrics, TrainConfig};
use hypegt_core::verify::{checkpoint_check, run_suite, Check, Suite};
use hypegt_core::{Error, Tape, Tensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// A command error with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAILURE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Parameter(_)
            | Error::Rank { .. }
            | Error::Connectivity { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "hypegt", version, about = "Hyperbolic positional encodings for graph transformers and deep GNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a stochastic block model graph.
    GenGraph {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a graph with a randomly initialized PE pipeline.
    GenPe {
        #[arg(long)]
        graph: PathBuf,
        /// Category id 1..8.
        #[arg(long)]
        category: u32,
        #[arg(long, default_value_t = 6)]
        k: usize,
        /// Hyperbolic encoder layers.
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per seed on a node-classification graph.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `graph` from the config.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[command(flatten)]
        runs: RunArgs,
        /// Output directory for metrics, aggregate and checkpoints.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the architecture line and exit without training.
        #[arg(long)]
        inspect: bool,
    },
    /// Run property suites: manifolds, pe, grads, models, metrics or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also check the integrity of a checkpoint file.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Accuracy and final-layer energy across depths and PE settings.
    Oversmooth {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        runs: RunArgs,
        /// CSV destination (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// First seed; runs use seed, seed+1, ...
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Explicit comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

impl RunArgs {
    /// Seeds from the flags, falling back to `default`.
    pub fn resolve(&self, default: &[u64]) -> CliResult<Vec<u64>> {
        let seeds = match (&self.seeds, self.seed, self.runs) {
            (Some(_), Some(_), _) => return Err(CliError::usage("--seed and --seeds are mutually exclusive")),
            (Some(list), _, Some(r)) if r != list.len() => {
                return Err(CliError::usage(format!("--runs {r} but --seeds lists {} seeds", list.len())))
            }
            (Some(list), _, _) => list.clone(),
            (None, Some(s), r) => (0..r.unwrap_or(1) as u64).map(|i| s + i).collect(),
            (None, None, Some(r)) => (0..r as u64).collect(),
            (None, None, None) => default.to_vec(),
        };
        if seeds.is_empty() {
            return Err(CliError::usage("no runs requested"));
        }
        Ok(seeds)
    }
}

/// Worker pool sized by `HYPEGT_THREADS` (rayon's default when unset).
pub fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("HYPEGT_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::usage(format!("HYPEGT_THREADS must be a positive integer, got `{raw}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::failure(e.to_string()))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

pub fn load_graph(path: &Path) -> CliResult<Graph> {
    parse_graph(&read(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Parses an SBM config; `seed` overrides the file.
pub fn gen_graph(config_text: &str, seed: Option<u64>) -> CliResult<Graph> {
    let mut kv = KvConfig::parse(config_text)?;
    if let Some(s) = seed {
        kv.set("seed", s);
    }
    let params = SbmParams::from_kv(&mut kv)?;
    kv.finish()?;
    Ok(sbm_generate(&params)?)
}

pub struct GenPeOutput {
    /// Euclidean initial encoding fed to the pipeline.
    pub init: Tensor,
    pub table: PeTable,
}

pub fn gen_pe(g: &Graph, category: u32, k: usize, layers: usize, seed: u64) -> CliResult<GenPeOutput> {
    let table = CategoryTable::default();
    let cat = table.get(category).map_err(|e| CliError::usage(e.to_string()))?;
    let cfg = PeConfig { k, pe_layers: layers, ..PeConfig::new(cat) };
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut rng = SeedStreams::new(seed).stream("init");
    let encoder = PeEncoder::new(&mut store, "pe", cfg, &mut rng)?;
    let init = encoder.initial(g)?;
    let tape = Tape::new();
    let p = store.bind_frozen(&tape);
    let h = generate_pe(&tape, g, &encoder, &p)?;
    let violation = h.violation();
    if violation > STABILITY_TOL {
        return Err(CliError::failure(format!("encoded rows leave the manifold (violation {violation:e})")));
    }
    Ok(GenPeOutput {
        init,
        table: PeTable { k, spec: encoder.spec(), category: cat.id, points: (*h.points.value()).clone() },
    })
}

pub struct RunOutput {
    pub seed: u64,
    pub history: Vec<EpochMetrics>,
    pub test_acc: f64,
    pub final_energy: f64,
    pub checkpoint: String,
}

/// Trains one run per seed in parallel; results are in `seeds` order.
pub fn train_runs(cfg: &TrainConfig, g: &Graph, seeds: &[u64]) -> CliResult<Vec<RunOutput>> {
    let table = CategoryTable::default();
    let pool = thread_pool()?;
    let results: Vec<CliResult<RunOutput>> = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(run, &seed)| {
                let cfg = TrainConfig { seed, ..cfg.clone() };
                let r = train_loop(run, &cfg, g, &table, &mut |_| true)?;
                let checkpoint = Checkpoint::new(&cfg, &r.architecture, &r.best).to_text();
                Ok(RunOutput { seed, history: r.history, test_acc: r.test_acc, final_energy: r.final_energy, checkpoint })
            })
            .collect()
    });
    results.into_iter().collect()
}

fn stat(xs: &[f64]) -> serde_json::Value {
    let (mean, std) = mean_std(xs);
    json!({ "mean": mean, "std": std })
}

/// `{mean, std}` of each final metric over runs.
pub fn aggregate(runs: &[RunOutput]) -> serde_json::Value {
    let last = |f: fn(&EpochMetrics) -> f64| -> Vec<f64> {
        runs.iter().map(|r| f(r.history.last().expect("summary record"))).collect()
    };
    json!({
        "seeds": runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
        "best_epoch": runs.iter().map(|r| r.history.last().map_or(0, |m| m.epoch)).collect::<Vec<_>>(),
        "train_acc": stat(&last(|m| m.train_acc)),
        "val_acc": stat(&last(|m| m.val_acc)),
        "test_acc": stat(&runs.iter().map(|r| r.test_acc).collect::<Vec<_>>()),
        "dirichlet_energy": stat(&runs.iter().map(|r| r.final_energy).collect::<Vec<_>>()),
    })
}

/// Reads a training config plus the CLI-only `graph` key.
pub fn parse_train_config(text: &str) -> CliResult<(TrainConfig, Option<PathBuf>)> {
    let mut kv = KvConfig::parse(text)?;
    let graph = kv.take::<String>("graph")?.map(PathBuf::from);
    let cfg = TrainConfig::from_kv(&mut kv)?;
    kv.finish()?;
    Ok((cfg, graph))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Depth,
    PeLayers,
}

/// A parsed over-smoothing sweep.
#[derive(Clone, Debug)]
pub struct OversmoothPlan {
    pub base: TrainConfig,
    pub mode: SweepMode,
    pub depths: Vec<usize>,
    pub categories: Vec<Option<u32>>,
    pub strategies: Vec<Strategy>,
    pub pe_layers: Vec<usize>,
    pub seeds: Vec<u64>,
    /// A fixed graph; otherwise an SBM is sampled per seed.
    pub graph: Option<PathBuf>,
    pub sbm: SbmParams,
}

/// One CSV row before aggregation over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub pe_layers: Option<usize>,
    pub depth: usize,
    pub category: Option<u32>,
    pub strategy: Option<Strategy>,
}

impl OversmoothPlan {
    /// Keys: `depths`, `categories` (`off` or ids), `strategies`, `seeds`,
    /// `mode` (`depth` | `pe_layers`), `pe_layers_sweep`, `graph`, `sbm.*`
    /// SBM keys (sampled with each run's seed), and every training key
    /// except `layers` and `category`. The model defaults to `gcn`.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut kv = KvConfig::parse(text)?;
        for key in ["layers", "category"] {
            if kv.contains(key) {
                return Err(CliError::usage(format!(
                    "`{key}` is swept; use `{}` instead",
                    if key == "layers" { "depths" } else { "categories" }
                )));
            }
        }
        if !kv.contains("model") {
            kv.set("model", ModelKind::Gcn);
        }
        let mode = match kv.take::<String>("mode")?.as_deref() {
            None | Some("depth") => SweepMode::Depth,
            Some("pe_layers") => SweepMode::PeLayers,
            Some(other) => return Err(CliError::usage(format!("unknown mode `{other}` (depth|pe_layers)"))),
        };
        let depths = kv.take_list::<usize>("depths")?.unwrap_or_else(|| vec![2, 4, 8, 16, 32]);
        let categories = match kv.take_list::<String>("categories")? {
            Some(list) => list.iter().map(|s| parse_category(s)).collect::<Result<Vec<_>, _>>()?,
            None => vec![None, Some(3), Some(4)],
        };
        let strategies = kv.take_list::<Strategy>("strategies")?.unwrap_or_else(|| vec![Strategy::V1]);
        let pe_layers = kv.take_list::<usize>("pe_layers_sweep")?.unwrap_or_else(|| (1..=5).collect());
        let seeds = kv.take_list::<u64>("seeds")?.unwrap_or_else(|| (0..4).collect());
        let graph = kv.take::<String>("graph")?.map(PathBuf::from);

        let mut sbm_kv = KvConfig::default();
        for key in ["n", "blocks", "p_in", "p_out", "feature_dim", "label_noise"] {
            if let Some(v) = kv.take::<String>(&format!("sbm.{key}"))? {
                sbm_kv.set(key, v);
            }
        }
        let sbm = SbmParams::from_kv(&mut sbm_kv)?;
        let base = TrainConfig::from_kv(&mut kv)?;
        kv.finish()?;

        if depths.is_empty() || categories.is_empty() || strategies.is_empty() || seeds.is_empty() {
            return Err(CliError::usage("depths, categories, strategies and seeds must be non-empty"));
        }
        if mode == SweepMode::PeLayers && (pe_layers.is_empty() || categories.iter().all(Option::is_none)) {
            return Err(CliError::usage("pe_layers mode needs a non-empty pe_layers_sweep and a PE category"));
        }
        let table = CategoryTable::default();
        for c in categories.iter().flatten() {
            table.get(*c)?;
        }
        for &d in &depths {
            TrainConfig { gt_layers: d, ..base.clone() }.validate()?;
        }
        Ok(Self { base, mode, depths, categories, strategies, pe_layers, seeds, graph, sbm })
    }

    /// Rows in output order: PE layers (pe_layers mode), then depth, then
    /// category in config order, then strategy. PE-off rows appear once.
    pub fn rows(&self) -> Vec<SweepRow> {
        let levels: Vec<Option<usize>> = match self.mode {
            SweepMode::Depth => vec![None],
            SweepMode::PeLayers => self.pe_layers.iter().copied().map(Some).collect(),
        };
        let mut rows = Vec::new();
        for &pe_layers in &levels {
            for &depth in &self.depths {
                for &category in &self.categories {
                    match category {
                        None if self.mode == SweepMode::PeLayers => {}
                        None => rows.push(SweepRow { pe_layers, depth, category, strategy: None }),
                        Some(_) => rows.extend(self.strategies.iter().map(|&s| SweepRow {
                            pe_layers,
                            depth,
                            category,
                            strategy: Some(s),
                        })),
                    }
                }
            }
        }
        rows
    }

    pub fn config_for(&self, row: &SweepRow, seed: u64) -> TrainConfig {
        TrainConfig {
            gt_layers: row.depth,
            category: row.category,
            strategy: row.strategy.unwrap_or(self.base.strategy),
            pe_layers: row.pe_layers.unwrap_or(self.base.pe_layers),
            seed,
            ..self.base.clone()
        }
    }
}

/// Per-row results, one `(test_acc, energy)` per seed.
pub struct SweepResult {
    pub row: SweepRow,
    pub test_acc: Vec<f64>,
    pub energy: Vec<f64>,
}

pub fn run_oversmooth(plan: &OversmoothPlan, fixed_graph: Option<&Graph>) -> CliResult<Vec<SweepResult>> {
    let table = CategoryTable::default();
    let graphs: Vec<Graph> = match fixed_graph {
        Some(g) => vec![g.clone()],
        None => plan
            .seeds
            .iter()
            .map(|&seed| sbm_generate(&SbmParams { seed, ..plan.sbm.clone() }))
            .collect::<Result<_, _>>()?,
    };
    let rows = plan.rows();
    let jobs: Vec<(usize, usize)> =
        (0..rows.len()).flat_map(|r| (0..plan.seeds.len()).map(move |s| (r, s))).collect();
    let pool = thread_pool()?;
    let outs: Vec<CliResult<(f64, f64)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, s)| {
                let cfg = plan.config_for(&rows[r], plan.seeds[s]);
                let g = &graphs[if fixed_graph.is_some() { 0 } else { s }];
                let res = train_loop(s, &cfg, g, &table, &mut |_| true)?;
                Ok((res.test_acc, res.final_energy))
            })
            .collect()
    });
    let outs: Vec<(f64, f64)> = outs.into_iter().collect::<CliResult<_>>()?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(r, row)| {
            let chunk = &outs[r * plan.seeds.len()..(r + 1) * plan.seeds.len()];
            SweepResult {
                row,
                test_acc: chunk.iter().map(|x| x.0).collect(),
                energy: chunk.iter().map(|x| x.1).collect(),
            }
        })
        .collect())
}

pub fn oversmooth_csv(mode: SweepMode, results: &[SweepResult]) -> String {
    let mut s = String::new();
    if mode == SweepMode::PeLayers {
        s.push_str("pe_layers,");
    }
    s.push_str("depth,category,strategy,test_acc_mean,test_acc_std,energy\n");
    for r in results {
        let (mean, std) = mean_std(&r.test_acc);
        let (energy, _) = mean_std(&r.energy);
        if let Some(l) = r.row.pe_layers {
            let _ = write!(s, "{l},");
        }
        let _ = writeln!(
            s,
            "{},{},{},{mean},{std},{energy}",
            r.row.depth,
            r.row.category.map_or("off".to_string(), |c| c.to_string()),
            r.row.strategy.map_or("-".to_string(), |st| st.to_string()),
        );
    }
    s
}

/// Runs one suite (plus the optional checkpoint check).
pub fn verify(suite: &str, seed: u64, checkpoint: Option<&str>) -> CliResult<Vec<Check>> {
    let suite: Suite = suite.parse().map_err(|e: Error| CliError::usage(e.to_string()))?;
    let mut checks = run_suite(suite, seed)?;
    if let Some(text) = checkpoint {
        checks.push(checkpoint_check(text));
    }
    Ok(checks)
}

/// Executes a parsed command; returns the exit code.
pub fn execute(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::GenGraph { config, seed, out } => {
            let g = gen_graph(&read(&config)?, seed)?;
            write(&out, &g.to_text())?;
            println!("{} {} {}", g.n(), g.num_edges(), g.num_classes());
            Ok(EXIT_OK)
        }
        Command::GenPe { graph, category, k, layers, seed, out } => {
            let g = load_graph(&graph)?;
            let pe = gen_pe(&g, category, k, layers, seed)?;
            write(&out, &pe.table.to_text())?;
            println!("{} {} {} {}", pe.table.points.rows(), pe.table.k, pe.table.spec.kind(), pe.table.category);
            Ok(EXIT_OK)
        }
        Command::Train { config, graph, runs, out, inspect } => {
            let (cfg, cfg_graph) = parse_train_config(&read(&config)?)?;
            let graph_path = graph
                .or(cfg_graph)
                .ok_or_else(|| CliError::usage("no graph given (set `graph` in the config or pass --graph)"))?;
            let g = load_graph(&graph_path)?;
            if inspect {
                let mc = cfg.model_config(g.features().cols(), g.num_classes(), &CategoryTable::default())?;
                println!("arch {}", mc.architecture());
                return Ok(EXIT_OK);
            }
            let seeds = runs.resolve(&[cfg.seed])?;
            let results = train_runs(&cfg, &g, &seeds)?;
            let mut jsonl = String::new();
            for r in &results {
                for m in &r.history {
                    jsonl.push_str(&m.to_json());
                    jsonl.push('\n');
                }
            }
            let agg = serde_json::to_string(&aggregate(&results)).expect("aggregate serializes");
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)
                        .map_err(|e| CliError::failure(format!("cannot create {}: {e}", dir.display())))?;
                    write(&dir.join("metrics.jsonl"), &jsonl)?;
                    write(&dir.join("aggregate.json"), &format!("{agg}\n"))?;
                    for r in &results {
                        write(&dir.join(format!("checkpoint-seed{}.txt", r.seed)), &r.checkpoint)?;
                    }
                }
                None => print!("{jsonl}"),
            }
            println!("{agg}");
            Ok(EXIT_OK)
        }
        Command::Verify { suite, seed, checkpoint } => {
            let text = checkpoint.as_deref().map(read).transpose()?;
            let checks = verify(&suite, seed, text.as_deref())?;
            let mut failed = 0;
            for c in &checks {
                println!("{c}");
                failed += usize::from(!c.passed());
            }
            println!("{} checks, {failed} failed", checks.len());
            Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Oversmooth { config, runs, out } => {
            let mut plan = OversmoothPlan::parse(&read(&config)?)?;
            plan.seeds = runs.resolve(&plan.seeds)?;
            let fixed = plan.graph.as_deref().map(load_graph).transpose()?;
            let results = run_oversmooth(&plan, fixed.as_ref())?;
            let csv = oversmooth_csv(plan.mode, &results);
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(EXIT_OK)
        }
    }
}
