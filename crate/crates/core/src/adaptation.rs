//! Online structural self-adaptation.
//!
//! A strategy runs consecutive learning phases over a global iteration budget.
//! When its trigger fires, agents are repositioned (a new bijection) and the next
//! phase starts from memorized selections instead of random ones.
//!
//! Global iteration accounting: the first phase's iteration 0 is global
//! iteration 0, and every later phase's iteration 0 (the restored selections)
//! takes the global slot right after the previous phase's last iteration.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark::BenchmarkSample;
use crate::error::{Error, Result};
use crate::learning::{
    costs_equal, random_selection, run_phase, InitialSelection, LearningConfig, LearningTrace,
    SubtreeRule,
    Phase, DEFAULT_CONVERGENCE_TOLERANCE,
};
use crate::metrics::{rank_population, MetricId};
use crate::plans::Population;
use crate::seeding::derive_tagged;
use crate::topology::{place_by_ranking, random_bijection, Bijection, SortOrder, TreeTopology};

pub const DEFAULT_TOTAL_ITERATIONS: usize = 100;
pub const DEFAULT_REPETITIONS: usize = 100;

/// Relative cost drop between consecutive iterations, `(prev - curr) / prev`.
/// A zero previous cost is already optimal and has slope 0.
pub fn slope(g_prev: f64, g_curr: f64) -> f64 {
    if g_prev == 0.0 {
        0.0
    } else {
        (g_prev - g_curr) / g_prev
    }
}

/// Absolute cost drop between consecutive iterations.
pub fn residual(g_prev: f64, g_curr: f64) -> f64 {
    g_prev - g_curr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryScheme {
    /// Restore the selections of the previous phase's last iteration.
    ShortTerm,
    /// Restore the selections of phase-local iteration `offset` (1-based; iteration
    /// 0 is the phase's initialization).
    LongTerm { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCriterion {
    Convergence,
    CostReduction { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BijectionSource {
    Random { seed: u64 },
    Deterministic { metric: MetricId, order: SortOrder },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub memory: MemoryScheme,
    pub trigger: TriggerCriterion,
    pub total_iterations: usize,
    pub bijection_source: BijectionSource,
    pub initial_selection: InitialSelection,
    pub convergence_tolerance: f64,
    #[serde(default)]
    pub subtree_rule: SubtreeRule,
}

impl StrategyConfig {
    /// Convergence trigger with long-term memory.
    pub fn convergence_long_term(offset: usize, bijection_seed: u64, initial: InitialSelection) -> Self {
        StrategyConfig {
            memory: MemoryScheme::LongTerm { offset },
            trigger: TriggerCriterion::Convergence,
            total_iterations: DEFAULT_TOTAL_ITERATIONS,
            bijection_source: BijectionSource::Random { seed: bijection_seed },
            initial_selection: initial,
            convergence_tolerance: DEFAULT_CONVERGENCE_TOLERANCE,
            subtree_rule: SubtreeRule::default(),
        }
    }

    /// Cost-reduction trigger with short-term memory.
    pub fn cost_reduction_short_term(threshold: f64, bijection_seed: u64, initial: InitialSelection) -> Self {
        StrategyConfig {
            memory: MemoryScheme::ShortTerm,
            trigger: TriggerCriterion::CostReduction { threshold },
            total_iterations: DEFAULT_TOTAL_ITERATIONS,
            bijection_source: BijectionSource::Random { seed: bijection_seed },
            initial_selection: initial,
            convergence_tolerance: DEFAULT_CONVERGENCE_TOLERANCE,
            subtree_rule: SubtreeRule::default(),
        }
    }

    pub fn with_total_iterations(mut self, total: usize) -> Self {
        self.total_iterations = total;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let MemoryScheme::LongTerm { offset: 0 } = self.memory {
            return Err(Error::invalid("memory offset must be >= 1"));
        }
        if let TriggerCriterion::CostReduction { threshold } = self.trigger {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
            }
        }
        if self.total_iterations == 0 {
            return Err(Error::invalid("total_iterations must be >= 1"));
        }
        if !(self.convergence_tolerance.is_finite() && self.convergence_tolerance >= 0.0) {
            return Err(Error::invalid("convergence_tolerance must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Selections restored at the start of the next phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memorized {
    pub selection: Vec<usize>,
    /// Phase-local iteration the selections come from.
    pub iteration: usize,
    /// The phase ended before reaching the memory offset.
    pub early_convergence: bool,
}

pub fn memorize(trace: &LearningTrace, memory: MemoryScheme) -> Memorized {
    let last = trace.last_iteration();
    match memory {
        MemoryScheme::LongTerm { offset } if offset <= last => Memorized {
            selection: trace.selections_per_iteration[offset].clone(),
            iteration: offset,
            early_convergence: false,
        },
        MemoryScheme::LongTerm { .. } => Memorized {
            selection: trace.final_selection().to_vec(),
            iteration: last,
            early_convergence: true,
        },
        MemoryScheme::ShortTerm => Memorized {
            selection: trace.final_selection().to_vec(),
            iteration: last,
            early_convergence: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The global iteration budget is spent.
    Budget,
    /// A phase converged before its memory offset.
    EarlyConvergence,
    /// The slope stayed zero across an adaptation boundary.
    FlatAcrossAdaptation,
    /// A phase converged and the trigger never fires (threshold 0).
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTrace {
    pub phases: Vec<LearningTrace>,
    /// Global iterations at which a repositioning was triggered.
    pub adaptation_iterations: Vec<usize>,
    pub terminated_at: usize,
    pub termination: Termination,
    pub final_cost: f64,
}

impl StrategyTrace {
    pub fn adaptations(&self) -> usize {
        self.adaptation_iterations.len()
    }

    /// Global iteration of each phase's iteration 0.
    pub fn phase_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.phases.len());
        let mut next = 0;
        for p in &self.phases {
            starts.push(next);
            next += p.len();
        }
        starts
    }

    /// Number of adaptations at or before each global iteration `0..horizon`.
    pub fn cumulative_adaptations(&self, horizon: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(horizon);
        let mut seen = 0;
        for t in 0..horizon {
            while seen < self.adaptation_iterations.len() && self.adaptation_iterations[seen] <= t {
                seen += 1;
            }
            out.push(seen);
        }
        out
    }
}

struct BijectionStream<'a> {
    tree: &'a TreeTopology,
    source: &'a BijectionSource,
    fixed: Option<Bijection>,
    drawn: u64,
}

impl<'a> BijectionStream<'a> {
    fn new(pop: &Population, tree: &'a TreeTopology, source: &'a BijectionSource) -> Result<Self> {
        let fixed = match source {
            BijectionSource::Deterministic { metric, order } => {
                Some(place_by_ranking(tree, &rank_population(*metric, pop), *order)?)
            }
            BijectionSource::Random { .. } => None,
        };
        Ok(BijectionStream {
            tree,
            source,
            fixed,
            drawn: 0,
        })
    }

    fn next(&mut self) -> Bijection {
        self.drawn += 1;
        match (self.source, &self.fixed) {
            (_, Some(b)) => b.clone(),
            (BijectionSource::Random { seed }, None) => {
                random_bijection(self.tree, derive_tagged(*seed, "adaptation", self.drawn))
            }
            (BijectionSource::Deterministic { .. }, None) => unreachable!(),
        }
    }
}

enum PhaseEnd {
    Triggered { flat: bool },
    Stop(Termination),
}

/// Run learning phases with structural self-adaptation until a termination rule
/// fires or the global budget is spent.
pub fn run_strategy(
    pop: &Population,
    tree: &TreeTopology,
    initial_b: &Bijection,
    cfg: &StrategyConfig,
) -> Result<StrategyTrace> {
    cfg.validate()?;
    let mut bijections = BijectionStream::new(pop, tree, &cfg.bijection_source)?;
    let mut selection = match &cfg.initial_selection {
        InitialSelection::Random { seed } => random_selection(pop, *seed),
        InitialSelection::Given(s) => s.clone(),
    };
    let mut placement = initial_b.clone();
    let total = cfg.total_iterations;
    let tol = cfg.convergence_tolerance;

    let mut phases = Vec::new();
    let mut adaptations = Vec::new();
    let mut start = 0usize;
    let mut previous_ended_flat = false;

    loop {
        let mut phase = Phase::new(pop, tree, &placement, &selection, cfg.subtree_rule)?;
        let end = loop {
            if start + phase.iteration() + 1 >= total {
                break PhaseEnd::Stop(Termination::Budget);
            }
            let prev = phase.cost();
            let cur = phase.step();
            let t = phase.iteration();
            let flat = costs_equal(prev, cur, tol);

            if t == 1 && flat && previous_ended_flat && cfg.memory == MemoryScheme::ShortTerm {
                break PhaseEnd::Stop(Termination::FlatAcrossAdaptation);
            }
            let fire = match cfg.trigger {
                TriggerCriterion::Convergence => flat,
                TriggerCriterion::CostReduction { threshold } => slope(prev, cur) < threshold,
            };
            if fire {
                break PhaseEnd::Triggered { flat };
            }
            if flat {
                break PhaseEnd::Stop(Termination::Converged);
            }
        };

        let last = phase.iteration();
        let mut trace = phase.into_trace();
        if let PhaseEnd::Triggered { flat: true } | PhaseEnd::Stop(Termination::Converged) = end {
            trace.converged_at = Some(last);
        }

        let termination = match end {
            PhaseEnd::Stop(reason) => Some(reason),
            PhaseEnd::Triggered { .. } if start + last + 1 >= total => Some(Termination::Budget),
            PhaseEnd::Triggered { flat } => {
                let memorized = memorize(&trace, cfg.memory);
                if memorized.early_convergence {
                    Some(Termination::EarlyConvergence)
                } else {
                    adaptations.push(start + last);
                    selection = memorized.selection;
                    placement = bijections.next();
                    previous_ended_flat = flat;
                    None
                }
            }
        };

        let final_cost = trace.final_cost();
        phases.push(trace);
        if let Some(termination) = termination {
            return Ok(StrategyTrace {
                phases,
                adaptation_iterations: adaptations,
                terminated_at: start + last,
                termination,
                final_cost,
            });
        }
        start += last + 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementStats {
    /// Mean of `(baseline - strategy) / baseline`; positive favours the strategy.
    pub mean: f64,
    /// Population standard deviation over the used pairs.
    pub stdev: f64,
    pub used: usize,
    /// Pairs skipped because the baseline cost was 0.
    pub skipped: usize,
}

pub fn relative_improvement(baseline_final_costs: &[f64], strategy_final_costs: &[f64]) -> Result<ImprovementStats> {
    if baseline_final_costs.len() != strategy_final_costs.len() || baseline_final_costs.is_empty() {
        return Err(Error::invalid(format!(
            "need equal-length non-empty cost lists, got {} and {}",
            baseline_final_costs.len(),
            strategy_final_costs.len()
        )));
    }
    let ratios: Vec<f64> = baseline_final_costs
        .iter()
        .zip(strategy_final_costs)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, s)| (b - s) / b)
        .collect();
    let skipped = baseline_final_costs.len() - ratios.len();
    if ratios.is_empty() {
        return Err(Error::invalid("every baseline cost is 0; relative improvement undefined"));
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let stdev = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ImprovementStats {
        mean,
        stdev,
        used: ratios.len(),
        skipped,
    })
}

/// The two online strategies with their swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Convergence trigger, long-term memory with the given offset.
    ConvergenceLongTerm { offset: usize },
    /// Cost-reduction trigger with the given threshold, short-term memory.
    CostReductionShortTerm { threshold: f64 },
}

impl StrategyKind {
    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::ConvergenceLongTerm { .. } => "convergence-long-term",
            StrategyKind::CostReductionShortTerm { .. } => "cost-reduction-short-term",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            StrategyKind::ConvergenceLongTerm { offset } => offset as f64,
            StrategyKind::CostReductionShortTerm { threshold } => threshold,
        }
    }

    pub fn config(&self, bijection_seed: u64, initial: InitialSelection, total_iterations: usize) -> StrategyConfig {
        let cfg = match *self {
            StrategyKind::ConvergenceLongTerm { offset } => {
                StrategyConfig::convergence_long_term(offset, bijection_seed, initial)
            }
            StrategyKind::CostReductionShortTerm { threshold } => {
                StrategyConfig::cost_reduction_short_term(threshold, bijection_seed, initial)
            }
        };
        cfg.with_total_iterations(total_iterations)
    }
}

/// One repetition of one strategy from one baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub repetition: usize,
    pub strategy: StrategyKind,
    pub percentile: u32,
    pub baseline_cost: f64,
    pub final_cost: f64,
    pub adaptations: usize,
    pub terminated_at: usize,
    pub cumulative_adaptations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEvaluation {
    pub strategy: StrategyKind,
    pub percentile: u32,
    pub baseline_cost: f64,
    pub improvement: ImprovementStats,
    pub runs: Vec<StrategyRun>,
}

/// Evaluate a strategy against baselines drawn from a random-bijection sample.
///
/// For each baseline percentile, the sample member at that nearest-rank position
/// gives the initial placement and initial selection. The baseline is a plain
/// learning phase with the same budget; each repetition runs the strategy from
/// the same start with its own repositioning stream.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_strategy(
    pop: &Population,
    tree: &TreeTopology,
    sample: &BenchmarkSample,
    strategy: StrategyKind,
    percentiles: &[u32],
    repetitions: usize,
    total_iterations: usize,
    seed: u64,
) -> Result<Vec<StrategyEvaluation>> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be >= 1"));
    }
    percentiles
        .iter()
        .map(|&pct| {
            let member = sample.member_at_percentile(pct)?;
            let placement = member.bijection(tree);
            let initial = InitialSelection::Given(member.initial_selection(pop));
            let baseline_cfg = LearningConfig {
                initial_selection: initial.clone(),
                ..sample.engine().clone()
            }
            .with_max_iterations(total_iterations);
            let baseline_cost = run_phase(pop, tree, &placement, &baseline_cfg)?.final_cost();

            let runs = (0..repetitions)
                .into_par_iter()
                .map(|r| {
                    let stream = derive_tagged(seed, "repetition", r as u64);
                    let mut cfg = strategy.config(stream, initial.clone(), total_iterations);
                    cfg.convergence_tolerance = sample.engine().convergence_tolerance;
                    cfg.subtree_rule = sample.engine().subtree_rule;
                    let trace = run_strategy(pop, tree, &placement, &cfg)?;
                    Ok(StrategyRun {
                        repetition: r,
                        strategy,
                        percentile: pct,
                        baseline_cost,
                        final_cost: trace.final_cost,
                        adaptations: trace.adaptations(),
                        terminated_at: trace.terminated_at,
                        cumulative_adaptations: trace.cumulative_adaptations(total_iterations),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let baselines = vec![baseline_cost; runs.len()];
            let finals: Vec<f64> = runs.iter().map(|r| r.final_cost).collect();
            Ok(StrategyEvaluation {
                strategy,
                percentile: pct,
                baseline_cost,
                improvement: relative_improvement(&baselines, &finals)?,
                runs,
            })
        })
        .collect()
}

/// CSV with header
/// `repetition,strategy,offset_or_threshold,percentile,final_cost,adaptations,terminated_at`.
pub fn write_strategy_runs_csv<W: Write>(out: &mut W, evals: &[StrategyEvaluation]) -> io::Result<()> {
    writeln!(
        out,
        "repetition,strategy,offset_or_threshold,percentile,final_cost,adaptations,terminated_at"
    )?;
    for e in evals {
        for r in &e.runs {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.repetition,
                r.strategy.label(),
                r.strategy.parameter(),
                r.percentile,
                r.final_cost,
                r.adaptations,
                r.terminated_at
            )?;
        }
    }
    Ok(())
}

/// CSV with header `iteration,cumulative_adaptations`, averaged over the given runs.
pub fn write_cumulative_adaptations_csv<W: Write>(out: &mut W, runs: &[&StrategyRun], horizon: usize) -> io::Result<()> {
    writeln!(out, "iteration,cumulative_adaptations")?;
    for t in 0..horizon {
        let mean = if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.cumulative_adaptations[t] as f64).sum::<f64>() / runs.len() as f64
        };
        writeln!(out, "{t},{mean}")?;
    }
    Ok(())
}
