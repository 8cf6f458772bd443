//! Tree-coordinated collective learning.
//!
//! Each iteration has a bottom-up pass in which every agent, after its children,
//! chooses the plan that minimizes the global cost given the previous global
//! response and its children's fresh subtree aggregates, and a top-down pass that
//! distributes the new global response. Alongside its own plan, a parent decides
//! which of its children's new subtree configurations to approve (see
//! [`SubtreeRule`]). An agent only commits a new subtree configuration when it
//! lowers the cost below the previous iteration's, so the global cost never
//! increases within a phase. Each pass sends one message per tree edge.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plans::{Plan, Population};
use crate::seeding::rng;
use crate::topology::{Bijection, TreeTopology};

pub const DEFAULT_MAX_ITERATIONS: usize = 40;
pub const DEFAULT_CONVERGENCE_TOLERANCE: f64 = 1e-9;

/// Population variance of the aggregate's elements.
pub fn global_cost(aggregate: &[f64]) -> Result<f64> {
    if aggregate.is_empty() {
        return Err(Error::invalid("global cost of an empty vector"));
    }
    Ok(variance(aggregate))
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Variance of `a + b` without materializing the sum.
fn variance_of_sum(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean = a.iter().zip(b).map(|(x, y)| x + y).sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let dev = x + y - mean;
            dev * dev
        })
        .sum::<f64>()
        / n
}

/// Whether two consecutive costs are equal within a relative tolerance.
pub fn costs_equal(previous: f64, current: f64, tolerance: f64) -> bool {
    (previous - current).abs() <= tolerance * previous.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSelection {
    /// Uniformly random plan index per agent.
    Random { seed: u64 },
    /// Plan index per agent, indexed by agent id.
    Given(Vec<usize>),
}

/// Above this many children, per-child approval is searched greedily instead of
/// over every subset.
pub const EXHAUSTIVE_APPROVAL_CHILDREN: usize = 6;

/// How a parent combines its children's new subtree configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtreeRule {
    /// Approve or reject each child's new subtree separately, jointly with the
    /// parent's own plan choice. Rejected children revert to their previous
    /// subtree selections.
    #[default]
    PerChild,
    /// Take all children's new subtrees; if the result does not lower the cost,
    /// revert the whole subtree.
    Whole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub max_iterations: usize,
    /// Weight of the local cost; only 0 is supported.
    pub lambda: f64,
    pub convergence_tolerance: f64,
    pub initial_selection: InitialSelection,
    #[serde(default)]
    pub subtree_rule: SubtreeRule,
}

impl LearningConfig {
    pub fn new(initial_selection: InitialSelection) -> Self {
        LearningConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            lambda: 0.0,
            convergence_tolerance: DEFAULT_CONVERGENCE_TOLERANCE,
            initial_selection,
            subtree_rule: SubtreeRule::default(),
        }
    }

    pub fn with_max_iterations(mut self, t: usize) -> Self {
        self.max_iterations = t;
        self
    }

    pub fn with_subtree_rule(mut self, rule: SubtreeRule) -> Self {
        self.subtree_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if self.lambda != 0.0 {
            return Err(Error::invalid(format!(
                "lambda = {} is not supported; only the global cost is optimized (lambda = 0)",
                self.lambda
            )));
        }
        if !(self.convergence_tolerance.is_finite() && self.convergence_tolerance >= 0.0) {
            return Err(Error::invalid("convergence_tolerance must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Per-iteration record of one learning phase. Index 0 is the initial selection;
/// index `t` is learning iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    pub cost_per_iteration: Vec<f64>,
    pub selections_per_iteration: Vec<Vec<usize>>,
    pub messages_per_iteration: Vec<u64>,
    pub converged_at: Option<usize>,
}

impl LearningTrace {
    fn start(cost: f64, selection: Vec<usize>, messages: u64) -> Self {
        LearningTrace {
            cost_per_iteration: vec![cost],
            selections_per_iteration: vec![selection],
            messages_per_iteration: vec![messages],
            converged_at: None,
        }
    }

    fn record(&mut self, cost: f64, selection: Vec<usize>, messages: u64) {
        self.cost_per_iteration.push(cost);
        self.selections_per_iteration.push(selection);
        self.messages_per_iteration.push(messages);
    }

    /// Number of recorded iterations, including iteration 0.
    pub fn len(&self) -> usize {
        self.cost_per_iteration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost_per_iteration.is_empty()
    }

    pub fn last_iteration(&self) -> usize {
        self.len() - 1
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_per_iteration.last().expect("trace has iteration 0")
    }

    pub fn final_selection(&self) -> &[usize] {
        self.selections_per_iteration.last().expect("trace has iteration 0")
    }

    /// CSV with header `iteration,global_cost,messages`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "iteration,global_cost,messages")?;
        for (t, (c, m)) in self
            .cost_per_iteration
            .iter()
            .zip(&self.messages_per_iteration)
            .enumerate()
        {
            writeln!(out, "{t},{c},{m}")?;
        }
        Ok(())
    }

    /// CSV with header `iteration,agent_id,plan_index`.
    pub fn write_selections_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "iteration,agent_id,plan_index")?;
        for (t, sel) in self.selections_per_iteration.iter().enumerate() {
            for (agent, plan) in sel.iter().enumerate() {
                writeln!(out, "{t},{agent},{plan}")?;
            }
        }
        Ok(())
    }
}

/// Check a selection vector against the population's plan counts.
fn validate_selection(pop: &Population, selection: &[usize]) -> Result<()> {
    if selection.len() != pop.len() {
        return Err(Error::invalid(format!(
            "selection has {} entries for {} agents",
            selection.len(),
            pop.len()
        )));
    }
    for (agent, &idx) in selection.iter().enumerate() {
        if idx >= pop.agent(agent).len() {
            return Err(Error::invalid(format!(
                "agent {agent} has {} plans, selected index {idx}",
                pop.agent(agent).len()
            )));
        }
    }
    Ok(())
}

/// Random initial selection, one uniform plan index per agent.
pub fn random_selection(pop: &Population, seed: u64) -> Vec<usize> {
    let mut rng = rng(seed);
    pop.agents().iter().map(|a| rng.random_range(0..a.len())).collect()
}

/// Global cost of a selection, summing plans in agent order. Independent of the
/// tree and used to cross-check the engine.
pub fn recompute_cost_from_selections(pop: &Population, selection: &[usize]) -> Result<f64> {
    validate_selection(pop, selection)?;
    let mut total = vec![0.0; pop.dimension()];
    for (agent, &idx) in selection.iter().enumerate() {
        for (t, v) in total.iter_mut().zip(pop.agent(agent).plan(idx).values()) {
            *t += v;
        }
    }
    global_cost(&total)
}

/// Learning state on a placed tree, advanced one iteration at a time.
///
/// Used directly by the self-adaptation strategies, which inspect the cost after
/// every iteration; [`run_phase`] wraps it with the convergence rule.
pub struct Phase<'a> {
    pop: &'a Population,
    tree: &'a TreeTopology,
    agent_at: Vec<usize>,
    d: usize,
    /// Agent-indexed plan choice.
    selected: Vec<usize>,
    /// Node-indexed subtree aggregates, `n × d` row-major.
    subtree: Vec<f64>,
    cost: f64,
    messages: u64,
    rule: SubtreeRule,
    trace: LearningTrace,
}

impl<'a> Phase<'a> {
    pub fn new(
        pop: &'a Population,
        tree: &'a TreeTopology,
        placement: &Bijection,
        initial: &[usize],
        rule: SubtreeRule,
    ) -> Result<Self> {
        if tree.len() != pop.len() || placement.len() != pop.len() {
            return Err(Error::invalid(format!(
                "population of {} agents, tree of {} nodes, bijection of {} agents",
                pop.len(),
                tree.len(),
                placement.len()
            )));
        }
        validate_selection(pop, initial)?;
        let d = pop.dimension();
        let mut phase = Phase {
            pop,
            tree,
            agent_at: placement.agent_at(),
            d,
            selected: initial.to_vec(),
            subtree: vec![0.0; pop.len() * d],
            cost: 0.0,
            messages: 2 * (pop.len() as u64 - 1),
            rule,
            trace: LearningTrace::start(0.0, Vec::new(), 0),
        };
        phase.aggregate_all();
        phase.cost = variance(phase.global());
        phase.trace = LearningTrace::start(phase.cost, phase.selected.clone(), phase.messages);
        Ok(phase)
    }

    fn plan_values(&self, node: usize, plan: usize) -> &'a [f64] {
        let pop: &'a Population = self.pop;
        pop.agent(self.agent_at[node]).plan(plan).values()
    }

    fn row(&self, node: usize) -> &[f64] {
        &self.subtree[node * self.d..(node + 1) * self.d]
    }

    /// Initial aggregation of the selected plans up the tree.
    fn aggregate_all(&mut self) {
        let d = self.d;
        for &node in self.tree.fill_order() {
            let own = self.plan_values(node, self.selected[self.agent_at[node]]);
            let mut acc = own.to_vec();
            for &c in self.tree.children(node) {
                for (a, v) in acc.iter_mut().zip(&self.subtree[c * d..(c + 1) * d]) {
                    *a += v;
                }
            }
            self.subtree[node * d..(node + 1) * d].copy_from_slice(&acc);
        }
    }

    pub fn global(&self) -> &[f64] {
        self.row(0)
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn selection(&self) -> &[usize] {
        &self.selected
    }

    /// Index of the last executed iteration (0 before the first step).
    pub fn iteration(&self) -> usize {
        self.trace.last_iteration()
    }

    pub fn trace(&self) -> &LearningTrace {
        &self.trace
    }

    pub fn into_trace(self) -> LearningTrace {
        self.trace
    }

    /// Run one bottom-up / top-down iteration and return the new global cost.
    pub fn step(&mut self) -> f64 {
        let d = self.d;
        let prev_global = self.global().to_vec();
        let prev_cost = self.cost;
        let prev_selected = self.selected.clone();
        let prev_subtree = self.subtree.clone();

        let mut base = vec![0.0; d];
        for &node in self.tree.fill_order() {
            let children = self.tree.children(node);
            // Everything outside this subtree plus the children's previous
            // aggregates, all as of the previous iteration.
            let prev_own = &prev_subtree[node * d..(node + 1) * d];
            for j in 0..d {
                base[j] = prev_global[j] - prev_own[j];
            }
            let deltas: Vec<Vec<f64>> = children
                .iter()
                .map(|&c| {
                    let old = &prev_subtree[c * d..(c + 1) * d];
                    for (b, v) in base.iter_mut().zip(old) {
                        *b += v;
                    }
                    self.row(c).iter().zip(old).map(|(n, o)| n - o).collect()
                })
                .collect();

            let plans = self.pop.agent(self.agent_at[node]).plans();
            let (plan, approved, cost) = match self.rule {
                SubtreeRule::Whole => {
                    let ctx = context(&base, &deltas, &vec![true; deltas.len()]);
                    best_exhaustive(plans, &[(vec![true; deltas.len()], ctx)])
                }
                SubtreeRule::PerChild if deltas.len() <= EXHAUSTIVE_APPROVAL_CHILDREN => {
                    // Subsets in descending bit order so that, on ties, approving
                    // more children wins.
                    let m = deltas.len();
                    let candidates: Vec<(Vec<bool>, Vec<f64>)> = (0..1u32 << m)
                        .rev()
                        .map(|mask| {
                            let approve: Vec<bool> = (0..m).map(|k| mask >> k & 1 == 1).collect();
                            let ctx = context(&base, &deltas, &approve);
                            (approve, ctx)
                        })
                        .collect();
                    best_exhaustive(plans, &candidates)
                }
                SubtreeRule::PerChild => best_greedy(plans, &base, &deltas),
            };

            if cost < prev_cost {
                let agent = self.agent_at[node];
                self.selected[agent] = plan;
                for (&c, &ok) in children.iter().zip(&approved) {
                    if !ok {
                        self.revert_subtree(c, &prev_selected, &prev_subtree);
                    }
                }
                let own = self.plan_values(node, plan);
                let mut acc = own.to_vec();
                for &c in children {
                    for (a, v) in acc.iter_mut().zip(&self.subtree[c * d..(c + 1) * d]) {
                        *a += v;
                    }
                }
                self.subtree[node * d..(node + 1) * d].copy_from_slice(&acc);
            } else {
                self.revert_subtree(node, &prev_selected, &prev_subtree);
            }
        }

        self.cost = variance(self.global());
        self.trace.record(self.cost, self.selected.clone(), self.messages);
        self.cost
    }

    /// Restore the previous iteration's selections and aggregates below `node`.
    fn revert_subtree(&mut self, node: usize, prev_selected: &[usize], prev_subtree: &[f64]) {
        let d = self.d;
        let (agent_at, selected, subtree) = (&self.agent_at, &mut self.selected, &mut self.subtree);
        self.tree.for_each_in_subtree(node, |v| {
            let a = agent_at[v];
            selected[a] = prev_selected[a];
            subtree[v * d..(v + 1) * d].copy_from_slice(&prev_subtree[v * d..(v + 1) * d]);
        });
    }
}

fn context(base: &[f64], deltas: &[Vec<f64>], approve: &[bool]) -> Vec<f64> {
    let mut ctx = base.to_vec();
    for (delta, _) in deltas.iter().zip(approve).filter(|(_, &ok)| ok) {
        for (c, v) in ctx.iter_mut().zip(delta) {
            *c += v;
        }
    }
    ctx
}

/// Lowest-cost (plan, approval) pair; ties keep the lowest plan index, then the
/// earliest candidate.
fn best_exhaustive(plans: &[Plan], candidates: &[(Vec<bool>, Vec<f64>)]) -> (usize, Vec<bool>, f64) {
    let mut best = (0, 0, f64::INFINITY);
    for (idx, plan) in plans.iter().enumerate() {
        for (ci, (_, ctx)) in candidates.iter().enumerate() {
            let c = variance_of_sum(ctx, plan.values());
            if c < best.2 {
                best = (idx, ci, c);
            }
        }
    }
    (best.0, candidates[best.1].0.clone(), best.2)
}

/// For each plan, start from approving every child and flip single approvals
/// while that strictly lowers the cost.
fn best_greedy(plans: &[Plan], base: &[f64], deltas: &[Vec<f64>]) -> (usize, Vec<bool>, f64) {
    let mut best = (0, vec![true; deltas.len()], f64::INFINITY);
    for (idx, plan) in plans.iter().enumerate() {
        let mut approve = vec![true; deltas.len()];
        let mut ctx = context(base, deltas, &approve);
        let mut cost = variance_of_sum(&ctx, plan.values());
        let mut improved = true;
        while improved {
            improved = false;
            for (k, delta) in deltas.iter().enumerate() {
                let sign = if approve[k] { -1.0 } else { 1.0 };
                let trial: Vec<f64> = ctx.iter().zip(delta).map(|(c, v)| c + sign * v).collect();
                let c = variance_of_sum(&trial, plan.values());
                if c < cost {
                    approve[k] = !approve[k];
                    ctx = trial;
                    cost = c;
                    improved = true;
                }
            }
        }
        if cost < best.2 {
            best = (idx, approve, cost);
        }
    }
    best
}

/// Run one learning phase until convergence or `max_iterations` recorded
/// iterations (iteration 0 included).
pub fn run_phase(
    pop: &Population,
    tree: &TreeTopology,
    placement: &Bijection,
    cfg: &LearningConfig,
) -> Result<LearningTrace> {
    cfg.validate()?;
    let initial = match &cfg.initial_selection {
        InitialSelection::Random { seed } => random_selection(pop, *seed),
        InitialSelection::Given(sel) => sel.clone(),
    };
    let mut phase = Phase::new(pop, tree, placement, &initial, cfg.subtree_rule)?;
    while phase.iteration() + 1 < cfg.max_iterations {
        let prev = phase.cost();
        let cur = phase.step();
        if costs_equal(prev, cur, cfg.convergence_tolerance) {
            let t = phase.iteration();
            let mut trace = phase.into_trace();
            trace.converged_at = Some(t);
            return Ok(trace);
        }
    }
    Ok(phase.into_trace())
}
