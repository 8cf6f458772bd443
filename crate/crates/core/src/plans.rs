//! Agent plans, populations, dataset files and plan generation schemes.
//!
//! A dataset is a directory holding one file per agent, `agent_<id>.plans`, with
//! one plan per line written as `<local_cost>:<v1>,<v2>,...,<vd>`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng};

/// Number of plans in an energy-style profile: the base plan plus three of each scheme.
pub const ENERGY_STYLE_PLANS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    values: Vec<f64>,
    local_cost: f64,
}

impl Plan {
    pub fn new(values: Vec<f64>, local_cost: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("plan must have at least one value"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("plan value {v} is not finite")));
        }
        if !(local_cost.is_finite() && local_cost >= 0.0) {
            return Err(Error::invalid(format!(
                "local cost {local_cost} must be finite and non-negative"
            )));
        }
        Ok(Plan { values, local_cost })
    }

    /// Plan with zero local cost.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Plan::new(values, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn local_cost(&self) -> f64 {
        self.local_cost
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    fn with_values(&self, values: Vec<f64>) -> Plan {
        Plan {
            values,
            local_cost: self.local_cost,
        }
    }
}

/// Net trip encoding used by bike-sharing datasets: one entry per station,
/// `-1` at the (1-based) origin station and `+1` at the destination.
pub fn bicycle_trip_plan(origin: usize, destination: usize, stations: usize) -> Result<Plan> {
    if origin == 0 || destination == 0 || origin > stations || destination > stations {
        return Err(Error::invalid(format!(
            "stations are numbered 1..={stations}, got trip {origin} -> {destination}"
        )));
    }
    let mut values = vec![0.0; stations];
    values[origin - 1] -= 1.0;
    values[destination - 1] += 1.0;
    Plan::from_values(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    agent_id: usize,
    plans: Vec<Plan>,
}

impl AgentProfile {
    pub fn new(agent_id: usize, plans: Vec<Plan>) -> Result<Self> {
        let Some(first) = plans.first() else {
            return Err(Error::invalid(format!("agent {agent_id} has no plans")));
        };
        let d = first.dimension();
        if let Some(p) = plans.iter().find(|p| p.dimension() != d) {
            return Err(Error::invalid(format!(
                "agent {agent_id}: plan dimension {} differs from {d}",
                p.dimension()
            )));
        }
        Ok(AgentProfile { agent_id, plans })
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    pub fn plan(&self, index: usize) -> &Plan {
        &self.plans[index]
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.plans[0].dimension()
    }
}

/// The agent set. Agent ids are contiguous from 0 and agents are stored in id
/// order, so an agent's id is also its index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    agents: Vec<AgentProfile>,
    dimension: usize,
}

impl Population {
    pub fn new(mut agents: Vec<AgentProfile>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::invalid("population needs at least one agent"));
        }
        agents.sort_by_key(AgentProfile::agent_id);
        for (i, a) in agents.iter().enumerate() {
            if a.agent_id() != i {
                return Err(Error::invalid(format!(
                    "agent ids must be unique and contiguous from 0, found {} at position {i}",
                    a.agent_id()
                )));
            }
        }
        let dimension = agents[0].dimension();
        if let Some(a) = agents.iter().find(|a| a.dimension() != dimension) {
            return Err(Error::invalid(format!(
                "agent {} has dimension {}, expected {dimension}",
                a.agent_id(),
                a.dimension()
            )));
        }
        Ok(Population { agents, dimension })
    }

    pub fn agents(&self) -> &[AgentProfile] {
        &self.agents
    }

    pub fn agent(&self, id: usize) -> &AgentProfile {
        &self.agents[id]
    }

    /// Number of agents, `n`.
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Plan dimension, `d`.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Largest plan count over all agents.
    pub fn max_plans(&self) -> usize {
        self.agents.iter().map(AgentProfile::len).max().unwrap_or(0)
    }
}

fn parse_plan_line(line: &str) -> std::result::Result<Plan, String> {
    let (cost, values) = line
        .split_once(':')
        .ok_or_else(|| "missing `:` between local cost and values".to_string())?;
    let cost: f64 = cost
        .trim()
        .parse()
        .map_err(|e| format!("bad local cost `{}`: {e}", cost.trim()))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad plan value `{}`: {e}", v.trim()))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Plan::new(values, cost).map_err(|e| e.to_string())
}

fn agent_id_from_file_name(name: &str) -> Option<usize> {
    name.strip_prefix("agent_")?.strip_suffix(".plans")?.parse().ok()
}

/// Load a dataset directory of `agent_<id>.plans` files.
pub fn load_population(dir: impl AsRef<Path>) -> Result<Population> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;

    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some(id) = name.to_str().and_then(agent_id_from_file_name) {
            files.push((id, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::EmptyDataset { path: dir.into() });
    }
    files.sort();
    for pair in files.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateAgent {
                path: pair[1].1.clone(),
                id: pair[1].0,
            });
        }
    }
    if let Some((expected, _)) = files.iter().enumerate().find(|(i, (id, _))| i != id) {
        return Err(Error::MissingAgent {
            path: dir.into(),
            id: expected,
        });
    }

    let mut dimension: Option<usize> = None;
    let mut agents = Vec::with_capacity(files.len());
    for (id, path) in files {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut plans = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let plan = parse_plan_line(line).map_err(|message| Error::Parse {
                path: path.clone(),
                line: lineno + 1,
                message,
            })?;
            let expected = *dimension.get_or_insert(plan.dimension());
            if plan.dimension() != expected {
                return Err(Error::DimensionMismatch {
                    path,
                    line: lineno + 1,
                    expected,
                    found: plan.dimension(),
                });
            }
            plans.push(plan);
        }
        if plans.is_empty() {
            return Err(Error::Parse {
                path,
                line: 0,
                message: "agent file contains no plans".into(),
            });
        }
        agents.push(AgentProfile { agent_id: id, plans });
    }
    Population::new(agents)
}

/// Format one plan as a dataset line (without the line feed).
pub fn format_plan_line(plan: &Plan) -> String {
    let values: Vec<String> = plan.values.iter().map(|v| v.to_string()).collect();
    format!("{}:{}", plan.local_cost, values.join(","))
}

/// Write a population as a dataset directory, creating it if needed.
pub fn write_population(pop: &Population, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for agent in pop.agents() {
        let path = dir.join(format!("agent_{}.plans", agent.agent_id()));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        for plan in agent.plans() {
            writeln!(out, "{}", format_plan_line(plan)).map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Population with i.i.d. Normal(mean, stdev^2) plan values and zero local costs.
pub fn generate_synthetic(
    n: usize,
    k: usize,
    d: usize,
    mean: f64,
    stdev: f64,
    seed: u64,
) -> Result<Population> {
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::invalid("synthetic population needs n, k, d >= 1"));
    }
    if !(stdev.is_finite() && stdev >= 0.0 && mean.is_finite()) {
        return Err(Error::invalid(format!("invalid normal parameters mean={mean}, stdev={stdev}")));
    }
    let normal = Normal::new(mean, stdev)
        .map_err(|e| Error::invalid(format!("normal({mean}, {stdev}): {e}")))?;
    let mut rng = rng(seed);
    let agents = (0..n)
        .map(|id| {
            let plans = (0..k)
                .map(|_| Plan::from_values((0..d).map(|_| normal.sample(&mut rng)).collect()))
                .collect::<Result<Vec<_>>>()?;
            Ok(AgentProfile { agent_id: id, plans })
        })
        .collect::<Result<Vec<_>>>()?;
    Population::new(agents)
}

/// SHUFFLE scheme: a uniformly random permutation of the base plan's values.
pub fn shuffle_scheme(base: &Plan, seed: u64) -> Plan {
    let mut values = base.values.clone();
    values.shuffle(&mut rng(seed));
    base.with_values(values)
}

/// Swap the given index pairs in sequence on a copy of `base`.
pub fn apply_swaps(base: &Plan, swaps: &[(usize, usize)]) -> Result<Plan> {
    let d = base.dimension();
    let mut values = base.values.clone();
    for &(i, j) in swaps {
        if i >= d || j >= d {
            return Err(Error::invalid(format!("swap ({i}, {j}) out of range for d={d}")));
        }
        values.swap(i, j);
    }
    Ok(base.with_values(values))
}

/// SWAP-`pairs` scheme: `pairs` random index pairs `(i, j)`, `i != j`, drawn with
/// replacement and swapped sequentially.
pub fn swap_scheme(base: &Plan, pairs: usize, seed: u64) -> Result<Plan> {
    let d = base.dimension();
    if pairs > 0 && d < 2 {
        return Err(Error::invalid("swap scheme needs d >= 2"));
    }
    let mut rng = rng(seed);
    let swaps: Vec<(usize, usize)> = (0..pairs)
        .map(|_| {
            let i = rng.random_range(0..d);
            let mut j = rng.random_range(0..d - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();
    apply_swaps(base, &swaps)
}

/// Ten-plan profile in the style of the energy dataset: the base plan, three
/// SHUFFLE plans, three SWAP-15 plans and three SWAP-30 plans, in that order.
pub fn build_energy_style_profile(agent_id: usize, base: &Plan, seed: u64) -> Result<AgentProfile> {
    let mut plans = Vec::with_capacity(ENERGY_STYLE_PLANS);
    plans.push(base.clone());
    let mut stream = 0u64;
    let mut next_seed = || {
        stream += 1;
        derive_seed(seed, stream)
    };
    for _ in 0..3 {
        plans.push(shuffle_scheme(base, next_seed()));
    }
    for pairs in [15, 30] {
        for _ in 0..3 {
            // d = 1 cannot be swapped; every permutation of it is the plan itself
            let plan = if base.dimension() < 2 {
                base.clone()
            } else {
                swap_scheme(base, pairs, next_seed())?
            };
            plans.push(plan);
        }
    }
    AgentProfile::new(agent_id, plans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(v: &[f64]) -> Plan {
        Plan::from_values(v.to_vec()).unwrap()
    }

    fn sorted(p: &Plan) -> Vec<f64> {
        let mut v = p.values().to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
    }

    #[test]
    fn rejects_non_finite_values_and_negative_cost() {
        assert!(Plan::from_values(vec![1.0, f64::NAN]).is_err());
        assert!(Plan::from_values(vec![f64::INFINITY]).is_err());
        assert!(Plan::new(vec![1.0], -0.5).is_err());
        assert!(Plan::from_values(vec![]).is_err());
    }

    #[test]
    fn bicycle_trip_encoding() {
        let p = bicycle_trip_plan(1, 3, 5).unwrap();
        assert_eq!(p.values(), &[-1.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(bicycle_trip_plan(0, 3, 5).is_err());
        assert!(bicycle_trip_plan(1, 6, 5).is_err());
        assert_eq!(bicycle_trip_plan(2, 2, 3).unwrap().values(), &[0.0; 3]);
    }

    #[test]
    fn parse_line() {
        let p = parse_plan_line("0.5:1,2.5,-3").unwrap();
        assert_eq!(p.local_cost(), 0.5);
        assert_eq!(p.values(), &[1.0, 2.5, -3.0]);
        assert!(parse_plan_line("1,2,3").is_err());
        assert!(parse_plan_line("0:1,x").is_err());
        assert!(parse_plan_line("0:1,,2").is_err());
    }

    #[test]
    fn synthetic_degenerate_and_deterministic() {
        let p = generate_synthetic(3, 2, 4, 2.5, 0.0, 1).unwrap();
        assert!(p
            .agents()
            .iter()
            .flat_map(|a| a.plans())
            .all(|pl| pl.values().iter().all(|&v| v == 2.5)));
        let a = generate_synthetic(5, 3, 7, 0.0, 1.0, 99).unwrap();
        let b = generate_synthetic(5, 3, 7, 0.0, 1.0, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(5, 3, 7, 0.0, 1.0, 100).unwrap();
        assert_ne!(a, c);
        assert!(generate_synthetic(0, 1, 1, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn synthetic_table_shape() {
        let p = generate_synthetic(1000, 16, 100, 0.0, 1.0, 7).unwrap();
        assert_eq!(p.len(), 1000);
        assert_eq!(p.dimension(), 100);
        assert!(p.agents().iter().all(|a| a.len() == 16));
    }

    #[test]
    fn shuffle_preserves_values() {
        let base = plan(&[1.0, 2.0, 3.0, 4.0]);
        let s = shuffle_scheme(&base, 11);
        assert_eq!(sorted(&s), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(shuffle_scheme(&plan(&[5.0, 5.0, 5.0]), 3).values(), &[5.0; 3]);
        let (m0, s0) = mean_std(base.values());
        let (m1, s1) = mean_std(s.values());
        assert!((m0 - m1).abs() < 1e-12 && (s0 - s1).abs() < 1e-12);
    }

    #[test]
    fn forced_and_identity_swaps() {
        let base = plan(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(apply_swaps(&base, &[(0, 3)]).unwrap().values(), &[4.0, 2.0, 3.0, 1.0]);
        assert_eq!(swap_scheme(&base, 0, 5).unwrap(), base);
        assert!(swap_scheme(&plan(&[1.0]), 1, 0).is_err());
    }

    #[test]
    fn swap_15_on_144_keeps_multiset() {
        let base = generate_synthetic(1, 1, 144, 0.0, 1.0, 3).unwrap().agent(0).plan(0).clone();
        let s = swap_scheme(&base, 15, 8).unwrap();
        assert_ne!(s, base);
        assert_eq!(sorted(&s), sorted(&base));
    }

    #[test]
    fn energy_style_profile() {
        let base = plan(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let prof = build_energy_style_profile(4, &base, 21).unwrap();
        assert_eq!(prof.len(), ENERGY_STYLE_PLANS);
        assert_eq!(prof.agent_id(), 4);
        assert_eq!(prof.plan(0), &base);
        let (m0, s0) = mean_std(base.values());
        for p in prof.plans() {
            assert_eq!(sorted(p), sorted(&base));
            let (m, s) = mean_std(p.values());
            assert!((m - m0).abs() < 1e-12 && (s - s0).abs() < 1e-12);
        }
        let constant = build_energy_style_profile(0, &plan(&[2.0; 6]), 1).unwrap();
        assert!(constant.plans().iter().all(|p| p.values() == [2.0; 6]));
    }
}
