//! Trace checks shared by the integration and acceptance suites.

use treeshift::adaptation::StrategyTrace;
use treeshift::learning::LearningTrace;

/// Relative slack for re-summation noise when the same selections are
/// aggregated along a different tree.
pub const REL_SLACK: f64 = 1e-12;

pub fn le(a: f64, b: f64) -> bool {
    a <= b + REL_SLACK * b.abs().max(1.0)
}

/// Iterations `t >= 2` with `G(t) > G(t-1)`.
pub fn monotonicity_violations(trace: &LearningTrace) -> usize {
    trace
        .cost_per_iteration
        .windows(2)
        .skip(1)
        .filter(|w| !le(w[1], w[0]))
        .count()
}

/// Phases whose final cost exceeds the previous phase's cost at `offset`.
pub fn cross_phase_violations(trace: &StrategyTrace, offset: usize) -> usize {
    trace
        .phases
        .windows(2)
        .filter(|w| {
            let reference = w[0].cost_per_iteration[offset.min(w[0].last_iteration())];
            !le(w[1].final_cost(), reference)
        })
        .count()
}

/// Adaptations fire at global iterations 1, 3, 5, ... with no gaps.
pub fn adapts_every_two_iterations(trace: &StrategyTrace) -> bool {
    trace
        .adaptation_iterations
        .iter()
        .enumerate()
        .all(|(i, &t)| t == 2 * i + 1)
}
