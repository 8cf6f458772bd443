//! Balanced m-ary trees and agent placements on them.
//!
//! Trees are complete and heap-indexed in breadth-first order: the children of
//! node `i` are `m·i + 1 ..= m·i + m` (those below `n`). A [`Bijection`] assigns
//! every agent to exactly one node; two placements of the same agents on the same
//! tree are isomorphic graphs.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RankingScore;
use crate::seeding::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    m: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    fill_order: Vec<usize>,
}

impl TreeTopology {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Maximum number of children per node.
    pub fn branching(&self) -> usize {
        self.m
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.children.iter().filter(|c| c.is_empty()).count()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.iter().flatten().count()
    }

    /// Nodes from the deepest level up to the root, left to right within a level.
    /// Every node appears after all of its children.
    pub fn fill_order(&self) -> &[usize] {
        &self.fill_order
    }

    /// Visit every node of the subtree rooted at `node`, level by level.
    pub fn for_each_in_subtree(&self, node: usize, mut f: impl FnMut(usize)) {
        let n = self.len();
        let (mut lo, mut hi) = (node, node);
        while lo < n {
            for v in lo..=hi.min(n - 1) {
                f(v);
            }
            lo = self.m * lo + 1;
            hi = self.m * hi + self.m;
        }
    }
}

/// Complete `m`-ary tree on `n` nodes.
pub fn build_balanced_tree(n: usize, m: usize) -> Result<TreeTopology> {
    if n == 0 {
        return Err(Error::invalid("tree needs at least one node"));
    }
    if m < 2 {
        return Err(Error::invalid(format!("branching factor must be >= 2, got {m}")));
    }
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut depth = vec![0; n];
    for v in 1..n {
        let p = (v - 1) / m;
        parent[v] = Some(p);
        children[p].push(v);
        depth[v] = depth[p] + 1;
    }
    let mut fill_order: Vec<usize> = (0..n).collect();
    fill_order.sort_by_key(|&v| (std::cmp::Reverse(depth[v]), v));
    Ok(TreeTopology {
        m,
        parent,
        children,
        depth,
        fill_order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Ascending,
    Descending,
}

impl SortOrder {
    pub const BOTH: [SortOrder; 2] = [SortOrder::Ascending, SortOrder::Descending];

    /// `ASC` / `DESC`, the prefix used in metric display names.
    pub fn label(self) -> &'static str {
        match self {
            SortOrder::Ascending => "ASC",
            SortOrder::Descending => "DESC",
        }
    }
}

/// Agent-to-node assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bijection {
    position_of: Vec<usize>,
}

impl Bijection {
    pub fn new(position_of: Vec<usize>) -> Result<Self> {
        let n = position_of.len();
        let mut seen = vec![false; n];
        for &p in &position_of {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid(format!(
                    "not a permutation of 0..{n}: position {p} out of range or repeated"
                )));
            }
        }
        Ok(Bijection { position_of })
    }

    pub fn identity(n: usize) -> Self {
        Bijection {
            position_of: (0..n).collect(),
        }
    }

    /// Agents listed in fill order: the i-th agent takes the i-th position of
    /// [`TreeTopology::fill_order`].
    pub fn from_fill_sequence(tree: &TreeTopology, agents: &[usize]) -> Result<Self> {
        if agents.len() != tree.len() {
            return Err(Error::invalid(format!(
                "{} agents for a tree of {} nodes",
                agents.len(),
                tree.len()
            )));
        }
        let mut position_of = vec![usize::MAX; agents.len()];
        for (&agent, &node) in agents.iter().zip(tree.fill_order()) {
            if agent >= agents.len() || position_of[agent] != usize::MAX {
                return Err(Error::invalid(format!("agent {agent} out of range or repeated")));
            }
            position_of[agent] = node;
        }
        Ok(Bijection { position_of })
    }

    pub fn len(&self) -> usize {
        self.position_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position_of.is_empty()
    }

    pub fn position_of(&self, agent: usize) -> usize {
        self.position_of[agent]
    }

    pub fn positions(&self) -> &[usize] {
        &self.position_of
    }

    /// Node-indexed inverse: `agent_at()[node]` is the agent hosted there.
    pub fn agent_at(&self) -> Vec<usize> {
        let mut inv = vec![0; self.len()];
        for (agent, &node) in self.position_of.iter().enumerate() {
            inv[node] = agent;
        }
        inv
    }

    /// Follow this placement by a relabelling of nodes: agent `a` ends up at
    /// `node_map.position_of(self.position_of(a))`.
    pub fn then(&self, node_map: &Bijection) -> Result<Bijection> {
        if node_map.len() != self.len() {
            return Err(Error::invalid("bijections of different sizes"));
        }
        Ok(Bijection {
            position_of: self.position_of.iter().map(|&p| node_map.position_of[p]).collect(),
        })
    }
}

/// Sort agents by score (ties by agent id ascending, in both orders) and fill the
/// tree bottom-up, breadth-first.
pub fn place_by_ranking(
    tree: &TreeTopology,
    scores: &[RankingScore],
    order: SortOrder,
) -> Result<Bijection> {
    if scores.len() != tree.len() {
        return Err(Error::invalid(format!(
            "{} scores for a tree of {} nodes",
            scores.len(),
            tree.len()
        )));
    }
    let mut ranked: Vec<&RankingScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        let by_score = match order {
            SortOrder::Ascending => a.score.total_cmp(&b.score),
            SortOrder::Descending => b.score.total_cmp(&a.score),
        };
        by_score.then(a.agent_id.cmp(&b.agent_id))
    });
    let agents: Vec<usize> = ranked.iter().map(|s| s.agent_id).collect();
    Bijection::from_fill_sequence(tree, &agents)
}

/// Uniformly random placement: a seeded Fisher-Yates shuffle of the agents,
/// mapped through the bottom-up fill order.
pub fn random_bijection(tree: &TreeTopology, seed: u64) -> Bijection {
    let mut agents: Vec<usize> = (0..tree.len()).collect();
    agents.shuffle(&mut rng(seed));
    Bijection::from_fill_sequence(tree, &agents).expect("shuffled agents form a permutation")
}

/// Agent-indexed view of a placed tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentView {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub is_leaf: Vec<bool>,
}

pub fn apply_bijection(tree: &TreeTopology, b: &Bijection) -> Result<AgentView> {
    if b.len() != tree.len() {
        return Err(Error::invalid(format!(
            "bijection over {} agents for a tree of {} nodes",
            b.len(),
            tree.len()
        )));
    }
    let agent_at = b.agent_at();
    let n = tree.len();
    let mut view = AgentView {
        parent: vec![None; n],
        children: vec![Vec::new(); n],
        is_leaf: vec![false; n],
    };
    for agent in 0..n {
        let node = b.position_of(agent);
        view.parent[agent] = tree.parent(node).map(|p| agent_at[p]);
        view.children[agent] = tree.children(node).iter().map(|&c| agent_at[c]).collect();
        view.is_leaf[agent] = tree.is_leaf(node);
    }
    Ok(view)
}

/// CSV with header `node,parent,depth,agent_id`; the root's parent is empty.
pub fn write_topology_csv<W: Write>(out: &mut W, tree: &TreeTopology, b: &Bijection) -> io::Result<()> {
    let agent_at = b.agent_at();
    writeln!(out, "node,parent,depth,agent_id")?;
    for (node, agent) in agent_at.iter().enumerate() {
        let parent = tree.parent(node).map(|p| p.to_string()).unwrap_or_default();
        writeln!(out, "{node},{parent},{},{agent}", tree.depth(node))?;
    }
    Ok(())
}
