use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use treeshift::adaptation::{
    evaluate_strategy, write_cumulative_adaptations_csv, write_strategy_runs_csv, StrategyEvaluation,
    StrategyKind,
};
use treeshift::benchmark::{
    density_grid, fit_gaussian, rank_fixed_bijections, run_random_benchmark, write_children_heatmap_csv,
    write_density_csv, write_heatmap_csv, BenchmarkSample, KdeEstimate,
};
use treeshift::learning::{run_phase, InitialSelection, LearningConfig, LearningTrace};
use treeshift::metrics::{rank_population, rank_population_many, write_scores_csv, MetricId};
use treeshift::plans::{
    build_energy_style_profile, generate_synthetic, load_population, write_population, Plan, Population,
};
use treeshift::seeding::derive_tagged;
use treeshift::topology::{
    build_balanced_tree, place_by_ranking, random_bijection, write_topology_csv, Bijection, SortOrder,
    TreeTopology,
};

use crate::config::{DatasetSpec, RunConfig};
use crate::error::CliError;

/// Build or load the configured population.
pub fn load_dataset(cfg: &RunConfig) -> Result<Population, CliError> {
    let seed = derive_tagged(cfg.seed, "dataset", 0);
    match &cfg.dataset {
        DatasetSpec::Directory { path } => load_population(path).map_err(CliError::data),
        DatasetSpec::Synthetic { n, k, d, mean, stdev } => {
            generate_synthetic(*n, *k, *d, *mean, *stdev, seed).map_err(CliError::config)
        }
        DatasetSpec::EnergyStyle { base, n, d, mean, stdev } => {
            let bases: Vec<Plan> = match base {
                Some(dir) => {
                    let pop = load_population(dir).map_err(CliError::data)?;
                    pop.agents().iter().map(|a| a.plan(0).clone()).collect()
                }
                None => generate_synthetic(*n, 1, *d, *mean, *stdev, seed)
                    .map_err(CliError::config)?
                    .agents()
                    .iter()
                    .map(|a| a.plan(0).clone())
                    .collect(),
            };
            let agents = bases
                .iter()
                .enumerate()
                .map(|(id, b)| build_energy_style_profile(id, b, derive_tagged(seed, "energy", id as u64)))
                .collect::<treeshift::Result<Vec<_>>>()
                .map_err(CliError::data)?;
            Population::new(agents).map_err(CliError::data)
        }
    }
}

fn tree_for(pop: &Population, children: usize) -> Result<TreeTopology, CliError> {
    build_balanced_tree(pop.len(), children).map_err(CliError::config)
}

fn engine(cfg: &RunConfig, initial: InitialSelection) -> Result<LearningConfig, CliError> {
    let lc = cfg.engine.learning_config(initial);
    lc.validate().map_err(CliError::config)?;
    Ok(lc)
}

/// Engine for benchmark runs; every sample draws its own initial selection.
fn sample_engine(cfg: &RunConfig) -> Result<LearningConfig, CliError> {
    engine(cfg, InitialSelection::Random { seed: 0 })
}

fn dataset_tag(cfg: &RunConfig) -> String {
    match &cfg.dataset {
        DatasetSpec::Directory { path } => path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        DatasetSpec::Synthetic { n, k, d, .. } => format!("synthetic-{n}x{k}x{d}"),
        DatasetSpec::EnergyStyle { n, d, base: None, .. } => format!("energy-style-{n}x{d}"),
        DatasetSpec::EnergyStyle { base: Some(_), .. } => "energy-style".into(),
    }
}

fn metric_list(cfg: &RunConfig) -> Result<Vec<MetricId>, CliError> {
    match &cfg.rank.metrics {
        None => Ok(MetricId::all()),
        Some(names) if names.is_empty() => Err(CliError::Config("metric list is empty".into())),
        Some(names) => names
            .iter()
            .map(|n| n.parse().map_err(CliError::config))
            .collect(),
    }
}

/// Output sink that records every file it creates.
pub struct Outputs {
    dir: PathBuf,
    hash: String,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out_dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.out_dir.display())))?;
        Ok(Outputs {
            dir: cfg.out_dir.clone(),
            hash: cfg.hash(),
            written: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Write `name` under the output directory. With `comment`, a
    /// `# config_hash=...` line precedes the body.
    fn csv(
        &mut self,
        name: &str,
        comment: bool,
        body: impl FnOnce(&mut BufWriter<File>, &str) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
        }
        let io_err = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
        let mut out = BufWriter::new(File::create(&path).map_err(io_err)?);
        if comment {
            writeln!(out, "# config_hash={}", self.hash).map_err(io_err)?;
        }
        body(&mut out, &self.hash).map_err(io_err)?;
        out.flush().map_err(io_err)?;
        self.written.push(path);
        Ok(())
    }
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let pop = load_dataset(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.out_dir.display())))?;
    write_population(&pop, &cfg.out_dir).map_err(CliError::runtime)?;
    Ok((0..pop.len())
        .map(|id| cfg.out_dir.join(format!("agent_{id}.plans")))
        .collect())
}

fn parse_placement(spec: &str) -> Result<Option<(SortOrder, MetricId)>, CliError> {
    if spec == "random" {
        return Ok(None);
    }
    let (order, metric) = spec
        .split_once('-')
        .ok_or_else(|| CliError::Config(format!("placement `{spec}` is neither `random` nor ASC-/DESC-<metric>")))?;
    let order = match order {
        "ASC" => SortOrder::Ascending,
        "DESC" => SortOrder::Descending,
        _ => return Err(CliError::Config(format!("placement `{spec}` must start with ASC- or DESC-"))),
    };
    Ok(Some((order, metric.parse().map_err(CliError::config)?)))
}

pub struct RunOutcome {
    pub trace: LearningTrace,
    pub files: Vec<PathBuf>,
}

pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let placement_spec = parse_placement(&cfg.run.placement)?;
    let pop = load_dataset(cfg)?;
    let tree = tree_for(&pop, cfg.tree.children)?;
    let placement: Bijection = match placement_spec {
        None => random_bijection(&tree, derive_tagged(cfg.seed, "placement", 0)),
        Some((order, metric)) => {
            place_by_ranking(&tree, &rank_population(metric, &pop), order).map_err(CliError::runtime)?
        }
    };
    let lc = engine(cfg, InitialSelection::Random { seed: derive_tagged(cfg.seed, "initial", 0) })?;
    let trace = run_phase(&pop, &tree, &placement, &lc).map_err(CliError::runtime)?;

    let mut out = Outputs::new(cfg)?;
    out.csv("trace.csv", true, |w, _| trace.write_csv(w))?;
    out.csv("selections.csv", true, |w, _| trace.write_selections_csv(w))?;
    out.csv("topology.csv", true, |w, _| write_topology_csv(w, &tree, &placement))?;
    Ok(RunOutcome { trace, files: out.written })
}

fn sample_for(cfg: &RunConfig, pop: &Population, tree: &TreeTopology) -> Result<BenchmarkSample, CliError> {
    if cfg.benchmark.samples == 0 {
        return Err(CliError::Config("benchmark.samples must be >= 1".into()));
    }
    run_random_benchmark(pop, tree, cfg.benchmark.samples, cfg.seed, &sample_engine(cfg)?, &dataset_tag(cfg))
        .map_err(CliError::runtime)
}

pub struct BenchmarkOutcome {
    pub sample: BenchmarkSample,
    pub files: Vec<PathBuf>,
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<BenchmarkOutcome, CliError> {
    let pop = load_dataset(cfg)?;
    let tree = tree_for(&pop, cfg.tree.children)?;
    let sample = sample_for(cfg, &pop, &tree)?;

    let mut out = Outputs::new(cfg)?;
    out.csv("sample.csv", false, |w, hash| sample.write_csv(w, hash))?;
    if sample.len() >= 2 {
        let fit = fit_gaussian(&sample).map_err(CliError::runtime)?;
        let h = cfg.benchmark.bandwidth.bandwidth(sample.len(), &fit).map_err(CliError::runtime)?;
        let kde = KdeEstimate::new(&sample, h).map_err(CliError::runtime)?;
        let grid = density_grid(&kde, &fit, cfg.benchmark.density_grid).map_err(CliError::config)?;
        out.csv("density.csv", false, |w, hash| write_density_csv(w, &kde, &fit, &grid, hash))?;
    }
    Ok(BenchmarkOutcome { sample, files: out.written })
}

pub fn cmd_rank_metrics(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let metrics = metric_list(cfg)?;
    if cfg.rank.children.is_empty() {
        return Err(CliError::Config("rank.children is empty".into()));
    }
    let pop = load_dataset(cfg)?;
    let lc = engine(cfg, InitialSelection::Random { seed: derive_tagged(cfg.seed, "initial", 0) })?;

    let mut out = Outputs::new(cfg)?;
    let scores = rank_population_many(&metrics, &pop);
    let table: Vec<(MetricId, Vec<_>)> = metrics.iter().copied().zip(scores).collect();
    out.csv("scores.csv", true, |w, _| write_scores_csv(w, &table))?;

    let mut sweep = Vec::new();
    for &m in &cfg.rank.children {
        let tree = tree_for(&pop, m)?;
        let sample = sample_for(cfg, &pop, &tree)?;
        let rows = rank_fixed_bijections(&pop, &tree, &metrics, &sample, &lc).map_err(CliError::runtime)?;
        if cfg.rank.children.len() == 1 {
            out.csv("heatmap.csv", false, |w, hash| write_heatmap_csv(w, &rows, hash))?;
        }
        sweep.extend(rows.into_iter().map(|r| (m, r)));
    }
    if cfg.rank.children.len() > 1 {
        out.csv("heatmap_children.csv", false, |w, hash| write_children_heatmap_csv(w, &sweep, hash))?;
    }
    Ok(out.written)
}

fn strategy_grid(cfg: &RunConfig) -> Result<Vec<StrategyKind>, CliError> {
    let s = &cfg.strategy;
    if let Some(&o) = s.offsets.iter().find(|&&o| o == 0) {
        return Err(CliError::Config(format!("strategy offset {o} must be >= 1")));
    }
    if let Some(t) = s.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::Config(format!("strategy threshold {t} outside [0, 1]")));
    }
    if let Some(p) = s.percentiles.iter().find(|&&p| p == 0 || p > 100) {
        return Err(CliError::Config(format!("baseline percentile {p} outside 1..=100")));
    }
    if s.repetitions == 0 || s.total_iterations == 0 {
        return Err(CliError::Config("strategy repetitions and total_iterations must be >= 1".into()));
    }
    let mut grid: Vec<StrategyKind> = s
        .offsets
        .iter()
        .map(|&offset| StrategyKind::ConvergenceLongTerm { offset })
        .collect();
    grid.extend(s.thresholds.iter().map(|&threshold| StrategyKind::CostReductionShortTerm { threshold }));
    if grid.is_empty() || s.percentiles.is_empty() {
        return Err(CliError::Config("strategy grid is empty".into()));
    }
    Ok(grid)
}

fn adaptation_file(e: &StrategyEvaluation) -> String {
    format!("adaptations/{}_{}_p{}.csv", e.strategy.label(), e.strategy.parameter(), e.percentile)
}

pub struct StrategyOutcome {
    pub evaluations: Vec<StrategyEvaluation>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_strategy(cfg: &RunConfig) -> Result<StrategyOutcome, CliError> {
    let grid = strategy_grid(cfg)?;
    let pop = load_dataset(cfg)?;
    let tree = tree_for(&pop, cfg.tree.children)?;
    let sample = sample_for(cfg, &pop, &tree)?;
    let s = &cfg.strategy;

    let mut evaluations = Vec::new();
    for kind in grid {
        evaluations.extend(
            evaluate_strategy(&pop, &tree, &sample, kind, &s.percentiles, s.repetitions, s.total_iterations, cfg.seed)
                .map_err(CliError::runtime)?,
        );
    }

    let mut out = Outputs::new(cfg)?;
    out.csv("sample.csv", false, |w, hash| sample.write_csv(w, hash))?;
    out.csv("strategy_runs.csv", true, |w, _| write_strategy_runs_csv(w, &evaluations))?;
    out.csv("improvement.csv", true, |w, _| {
        writeln!(w, "strategy,offset_or_threshold,percentile,baseline_cost,mean_improvement,stdev_improvement,used,skipped")?;
        for e in &evaluations {
            let i = &e.improvement;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                e.strategy.label(),
                e.strategy.parameter(),
                e.percentile,
                e.baseline_cost,
                i.mean,
                i.stdev,
                i.used,
                i.skipped
            )?;
        }
        Ok(())
    })?;
    for e in &evaluations {
        let runs: Vec<_> = e.runs.iter().collect();
        out.csv(&adaptation_file(e), true, |w, _| {
            write_cumulative_adaptations_csv(w, &runs, s.total_iterations)
        })?;
    }
    Ok(StrategyOutcome {
        evaluations,
        files: out.written,
    })
}

/// Runs `f` on a pool with the configured worker count.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(CliError::runtime)?;
    Ok(pool.install(f))
}
