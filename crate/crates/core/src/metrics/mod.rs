//! Deterministic meta-feature metrics over an agent's plan set.
//!
//! Each metric reduces the plan set `P_a` of one agent to a scalar ranking score.
//! Correlation metrics aggregate over the ordered pairs of `P_a × P_a` (self-pairs
//! included) and over a per-coordinate contribution `corr(p1, p2)_j`:
//!
//! * Pearson: `z1_j · z2_j`, with `z` the plan standardized by its mean and
//!   population standard deviation, so the mean over `j` is Pearson's r.
//! * Spearman: the same contribution on average-rank transformed plans.
//! * Kendall: `mean_{i≠j} sign((p1_j − p1_i)(p2_j − p2_i))`, whose mean over `j`
//!   is Kendall's tau-a.
//!
//! A constant plan contributes 0 everywhere.

mod transform;

use std::cell::OnceCell;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plans::{AgentProfile, Population};

pub use transform::{dct, dft, dft_magnitudes, dst, TransformType};

/// Number of metrics in the reference list.
pub const METRIC_COUNT: usize = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Avg,
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Extremum {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrKind {
    Pearson,
    Kendall,
    Spearman,
}

/// Outer aggregation over plan pairs, inner aggregation over coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrShape {
    /// `avg-corr`: mean over pairs of mean over j
    Avg,
    /// `max-avg-corr`
    MaxAvg,
    /// `min-avg-corr`
    MinAvg,
    /// `avg-max-corr`
    AvgMax,
    /// `avg-min-corr`
    AvgMin,
    /// `max-corr`: max over pairs of *min* over j, as listed in the reference table
    MaxMin,
    /// `min-corr`
    MinMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spectral {
    Dct,
    Dst,
}

/// Outer aggregation over plans, inner aggregation over coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoeffShape {
    Avg,
    Max,
    Min,
    AvgMax,
    AvgMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DftMetric {
    SumOfZero,
    MaxOfZero,
    SumNonZero,
    MaxNonZero,
    SumAll,
    AvgStdev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricId {
    Stdev(Aggregate),
    Value(Extremum),
    Correlation(CorrShape, CorrKind),
    Coefficient(Spectral, TransformType, CoeffShape),
    Dft(DftMetric),
}

impl MetricId {
    /// All metrics in reference-table order.
    pub fn all() -> Vec<MetricId> {
        use MetricId::*;
        let mut all = vec![
            Stdev(Aggregate::Avg),
            Stdev(Aggregate::Max),
            Stdev(Aggregate::Min),
            Value(Extremum::Max),
            Value(Extremum::Min),
        ];
        for shape in [
            CorrShape::Avg,
            CorrShape::MaxAvg,
            CorrShape::MinAvg,
            CorrShape::AvgMax,
            CorrShape::AvgMin,
            CorrShape::MaxMin,
            CorrShape::MinMin,
        ] {
            for kind in [CorrKind::Pearson, CorrKind::Kendall, CorrKind::Spearman] {
                all.push(Correlation(shape, kind));
            }
        }
        for family in [Spectral::Dct, Spectral::Dst] {
            for shape in [
                CoeffShape::Avg,
                CoeffShape::Max,
                CoeffShape::Min,
                CoeffShape::AvgMax,
                CoeffShape::AvgMin,
            ] {
                for t in TransformType::ALL {
                    all.push(Coefficient(family, t, shape));
                }
            }
        }
        for m in [
            DftMetric::SumOfZero,
            DftMetric::MaxOfZero,
            DftMetric::SumNonZero,
            DftMetric::MaxNonZero,
            DftMetric::SumAll,
            DftMetric::AvgStdev,
        ] {
            all.push(Dft(m));
        }
        all
    }

    /// Canonical display name, e.g. `avg-min-dst1-coeff`.
    pub fn name(&self) -> String {
        match *self {
            MetricId::Stdev(a) => format!("{}-stdev", aggregate_name(a)),
            MetricId::Value(Extremum::Max) => "max-value".into(),
            MetricId::Value(Extremum::Min) => "min-value".into(),
            MetricId::Correlation(shape, kind) => {
                let prefix = match shape {
                    CorrShape::Avg => "avg",
                    CorrShape::MaxAvg => "max-avg",
                    CorrShape::MinAvg => "min-avg",
                    CorrShape::AvgMax => "avg-max",
                    CorrShape::AvgMin => "avg-min",
                    CorrShape::MaxMin => "max",
                    CorrShape::MinMin => "min",
                };
                let kind = match kind {
                    CorrKind::Pearson => "pearson",
                    CorrKind::Kendall => "kendall",
                    CorrKind::Spearman => "spearman",
                };
                format!("{prefix}-corr-{kind}")
            }
            MetricId::Coefficient(family, t, shape) => {
                let prefix = match shape {
                    CoeffShape::Avg => "avg",
                    CoeffShape::Max => "max",
                    CoeffShape::Min => "min",
                    CoeffShape::AvgMax => "avg-max",
                    CoeffShape::AvgMin => "avg-min",
                };
                let family = match family {
                    Spectral::Dct => "dct",
                    Spectral::Dst => "dst",
                };
                format!("{prefix}-{family}{}-coeff", t.kind())
            }
            MetricId::Dft(m) => match m {
                DftMetric::SumOfZero => "sum-of-0-dft-coeff",
                DftMetric::MaxOfZero => "max-of-0-dft-coeff",
                DftMetric::SumNonZero => "sum-non0-dft-coeff",
                DftMetric::MaxNonZero => "max-non0-dft-coeff",
                DftMetric::SumAll => "sum-all-dft-coeff",
                DftMetric::AvgStdev => "avg-stdev-dft-coeff",
            }
            .into(),
        }
    }
}

fn aggregate_name(a: Aggregate) -> &'static str {
    match a {
        Aggregate::Avg => "avg",
        Aggregate::Max => "max",
        Aggregate::Min => "min",
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

impl Serialize for MetricId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingScore {
    pub agent_id: usize,
    pub score: f64,
}

/// mean, max and min of a sequence; the sequence must be non-empty.
#[derive(Debug, Clone, Copy)]
struct Summary {
    mean: f64,
    max: f64,
    min: f64,
}

impl Summary {
    fn of(values: impl IntoIterator<Item = f64>) -> Summary {
        let (mut sum, mut n) = (0.0, 0usize);
        let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
        for v in values {
            sum += v;
            n += 1;
            max = max.max(v);
            min = min.min(v);
        }
        Summary {
            mean: sum / n as f64,
            max,
            min,
        }
    }
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Population standard deviation; exactly 0 for a constant vector.
fn stdev(x: &[f64]) -> f64 {
    if is_constant(x) {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn standardize(x: &[f64]) -> Vec<f64> {
    if is_constant(x) {
        return vec![0.0; x.len()];
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = stdev(x);
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn kendall_contributions(x: &[f64], y: &[f64]) -> Vec<f64> {
    let d = x.len();
    if d < 2 {
        return vec![0.0; d];
    }
    (0..d)
        .map(|j| {
            let s: f64 = (0..d)
                .filter(|&i| i != j)
                .map(|i| {
                    let p = (x[j] - x[i]) * (y[j] - y[i]);
                    if p > 0.0 {
                        1.0
                    } else if p < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .sum();
            s / (d - 1) as f64
        })
        .collect()
}

/// Per-coordinate summaries of a correlation kind for every ordered plan pair.
struct PairTable {
    k: usize,
    pairs: Vec<Summary>,
}

impl PairTable {
    fn build(profile: &AgentProfile, kind: CorrKind) -> PairTable {
        let plans: Vec<&[f64]> = profile.plans().iter().map(|p| p.values()).collect();
        let k = plans.len();
        let prepared: Vec<Vec<f64>> = match kind {
            CorrKind::Pearson => plans.iter().map(|p| standardize(p)).collect(),
            CorrKind::Spearman => plans
                .iter()
                .map(|p| standardize(&average_ranks(p)))
                .collect(),
            CorrKind::Kendall => plans.iter().map(|p| p.to_vec()).collect(),
        };
        let mut pairs = vec![Summary { mean: 0.0, max: 0.0, min: 0.0 }; k * k];
        for a in 0..k {
            for b in a..k {
                let s = match kind {
                    CorrKind::Kendall => Summary::of(kendall_contributions(&prepared[a], &prepared[b])),
                    _ => Summary::of(prepared[a].iter().zip(&prepared[b]).map(|(u, v)| u * v)),
                };
                pairs[a * k + b] = s;
                pairs[b * k + a] = s;
            }
        }
        PairTable { k, pairs }
    }

    fn score(&self, shape: CorrShape) -> f64 {
        debug_assert_eq!(self.pairs.len(), self.k * self.k);
        let p = &self.pairs;
        let over = |f: fn(&Summary) -> f64| Summary::of(p.iter().map(f));
        match shape {
            CorrShape::Avg => over(|s| s.mean).mean,
            CorrShape::MaxAvg => over(|s| s.mean).max,
            CorrShape::MinAvg => over(|s| s.mean).min,
            CorrShape::AvgMax => over(|s| s.max).mean,
            CorrShape::AvgMin => over(|s| s.min).mean,
            CorrShape::MaxMin => over(|s| s.min).max,
            CorrShape::MinMin => over(|s| s.min).min,
        }
    }
}

fn transform_index(family: Spectral, t: TransformType) -> usize {
    let base = match family {
        Spectral::Dct => 0,
        Spectral::Dst => 3,
    };
    base + t.kind() as usize - 1
}

/// Lazily computed intermediate results for one agent's plan set, shared by
/// every metric evaluated on it.
pub struct ProfileFeatures<'a> {
    profile: &'a AgentProfile,
    stdevs: OnceCell<Vec<f64>>,
    pairs: [OnceCell<PairTable>; 3],
    coefficients: [OnceCell<Vec<Vec<f64>>>; 6],
    spectra: OnceCell<Vec<Vec<Complex64>>>,
}

impl<'a> ProfileFeatures<'a> {
    pub fn new(profile: &'a AgentProfile) -> Self {
        ProfileFeatures {
            profile,
            stdevs: OnceCell::new(),
            pairs: Default::default(),
            coefficients: Default::default(),
            spectra: OnceCell::new(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &'a [f64]> {
        self.profile.plans().iter().map(|p| p.values())
    }

    fn stdevs(&self) -> &[f64] {
        self.stdevs.get_or_init(|| self.values().map(stdev).collect())
    }

    fn pair_table(&self, kind: CorrKind) -> &PairTable {
        let idx = match kind {
            CorrKind::Pearson => 0,
            CorrKind::Kendall => 1,
            CorrKind::Spearman => 2,
        };
        self.pairs[idx].get_or_init(|| PairTable::build(self.profile, kind))
    }

    fn coefficients(&self, family: Spectral, t: TransformType) -> &[Vec<f64>] {
        self.coefficients[transform_index(family, t)].get_or_init(|| {
            self.values()
                .map(|x| {
                    // A single sample has no type-I cosine basis; its one coefficient is x_0.
                    if family == Spectral::Dct && t == TransformType::I && x.len() == 1 {
                        return x.to_vec();
                    }
                    let r = match family {
                        Spectral::Dct => dct(t, x),
                        Spectral::Dst => dst(t, x),
                    };
                    r.expect("plans are non-empty")
                })
                .collect()
        })
    }

    fn spectra(&self) -> &[Vec<Complex64>] {
        self.spectra
            .get_or_init(|| self.values().map(|x| dft(x).expect("plans are non-empty")).collect())
    }

    pub fn evaluate(&self, metric: MetricId) -> f64 {
        match metric {
            MetricId::Stdev(a) => {
                let s = Summary::of(self.stdevs().iter().copied());
                match a {
                    Aggregate::Avg => s.mean,
                    Aggregate::Max => s.max,
                    Aggregate::Min => s.min,
                }
            }
            MetricId::Value(e) => {
                let s = Summary::of(self.values().flatten().copied());
                match e {
                    Extremum::Max => s.max,
                    Extremum::Min => s.min,
                }
            }
            MetricId::Correlation(shape, kind) => self.pair_table(kind).score(shape),
            MetricId::Coefficient(family, t, shape) => {
                let per_plan: Vec<Summary> = self
                    .coefficients(family, t)
                    .iter()
                    .map(|c| Summary::of(c.iter().copied()))
                    .collect();
                let over = |f: fn(&Summary) -> f64| Summary::of(per_plan.iter().map(f));
                match shape {
                    CoeffShape::Avg => over(|s| s.mean).mean,
                    CoeffShape::Max => over(|s| s.max).max,
                    CoeffShape::Min => over(|s| s.min).min,
                    CoeffShape::AvgMax => over(|s| s.max).mean,
                    CoeffShape::AvgMin => over(|s| s.min).mean,
                }
            }
            MetricId::Dft(m) => self.dft_metric(m),
        }
    }

    fn dft_metric(&self, m: DftMetric) -> f64 {
        let spectra = self.spectra();
        match m {
            DftMetric::SumOfZero => spectra.iter().map(|f| f[0]).sum::<Complex64>().norm(),
            DftMetric::MaxOfZero => spectra
                .iter()
                .map(|f| f[0].re)
                .fold(f64::NEG_INFINITY, f64::max)
                .abs(),
            DftMetric::SumNonZero => spectra
                .iter()
                .flat_map(|f| f[1..].iter())
                .sum::<Complex64>()
                .norm(),
            // Complex coefficients are ordered by modulus.
            DftMetric::MaxNonZero => spectra
                .iter()
                .flat_map(|f| f[1..].iter())
                .map(|c| c.norm())
                .fold(0.0, f64::max),
            DftMetric::SumAll => spectra.iter().flat_map(|f| f.iter()).sum::<Complex64>().norm(),
            DftMetric::AvgStdev => {
                let total: f64 = spectra
                    .iter()
                    .map(|f| {
                        let n = f.len() as f64;
                        let mean = f.iter().sum::<Complex64>() / n;
                        (f.iter().map(|c| (c - mean).norm_sqr()).sum::<f64>() / n).sqrt()
                    })
                    .sum();
                (total / spectra.len() as f64).abs()
            }
        }
    }
}

pub fn evaluate_metric(metric: MetricId, profile: &AgentProfile) -> RankingScore {
    RankingScore {
        agent_id: profile.agent_id(),
        score: ProfileFeatures::new(profile).evaluate(metric),
    }
}

/// One score per agent, in agent id order.
pub fn rank_population(metric: MetricId, pop: &Population) -> Vec<RankingScore> {
    pop.agents()
        .par_iter()
        .map(|a| evaluate_metric(metric, a))
        .collect()
}

/// Scores for several metrics at once; `result[i]` belongs to `metrics[i]`.
/// Intermediate transforms are computed once per agent.
pub fn rank_population_many(metrics: &[MetricId], pop: &Population) -> Vec<Vec<RankingScore>> {
    let per_agent: Vec<Vec<f64>> = pop
        .agents()
        .par_iter()
        .map(|a| {
            let f = ProfileFeatures::new(a);
            metrics.iter().map(|&m| f.evaluate(m)).collect()
        })
        .collect();
    metrics
        .iter()
        .enumerate()
        .map(|(i, _)| {
            per_agent
                .iter()
                .enumerate()
                .map(|(agent_id, scores)| RankingScore {
                    agent_id,
                    score: scores[i],
                })
                .collect()
        })
        .collect()
}

/// CSV with header `agent_id,metric,score`.
pub fn write_scores_csv<W: Write>(
    out: &mut W,
    rows: &[(MetricId, Vec<RankingScore>)],
) -> io::Result<()> {
    writeln!(out, "agent_id,metric,score")?;
    for (metric, scores) in rows {
        for s in scores {
            writeln!(out, "{},{},{}", s.agent_id, metric, s.score)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plans::{build_energy_style_profile, generate_synthetic, Plan};

    fn profile(plans: &[&[f64]]) -> AgentProfile {
        AgentProfile::new(
            0,
            plans.iter().map(|p| Plan::from_values(p.to_vec()).unwrap()).collect(),
        )
        .unwrap()
    }

    fn score(name: &str, p: &AgentProfile) -> f64 {
        evaluate_metric(name.parse().unwrap(), p).score
    }

    #[test]
    fn sixty_two_distinct_names() {
        let all = MetricId::all();
        assert_eq!(all.len(), METRIC_COUNT);
        let mut names: Vec<String> = all.iter().map(MetricId::name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), METRIC_COUNT);
        for m in &all {
            assert_eq!(&m.name().parse::<MetricId>().unwrap(), m);
        }
        assert!("avg-foo".parse::<MetricId>().is_err());
        for n in ["avg-stdev", "min-corr-pearson", "avg-min-dst1-coeff", "sum-of-0-dft-coeff"] {
            assert!(n.parse::<MetricId>().is_ok(), "{n}");
        }
    }

    #[test]
    fn basic_examples() {
        assert_eq!(score("max-value", &profile(&[&[1.0, 2.0], &[3.0, 0.0]])), 3.0);
        assert_eq!(score("min-value", &profile(&[&[1.0, 2.0], &[3.0, 0.0]])), 0.0);
        assert_eq!(score("avg-stdev", &profile(&[&[0.0, 2.0]])), 1.0);
        assert!((score("sum-of-0-dft-coeff", &profile(&[&[1.0; 4]])) - 4.0).abs() < 1e-12);
        assert_eq!(score("min-stdev", &profile(&[&[0.1, 0.1, 0.1], &[1.0, 2.0, 4.0]])), 0.0);
    }

    #[test]
    fn self_pair_correlation_is_one() {
        let p = profile(&[&[0.3, 1.0, -2.0, 5.0]]);
        for kind in ["pearson", "kendall", "spearman"] {
            let s = score(&format!("avg-corr-{kind}"), &p);
            assert!((s - 1.0).abs() < 1e-12, "{kind}: {s}");
        }
    }

    #[test]
    fn constant_plans_give_finite_scores() {
        let p = profile(&[&[0.1, 0.1, 0.1], &[2.0, 2.0, 2.0]]);
        for m in MetricId::all() {
            let s = evaluate_metric(m, &p).score;
            assert!(s.is_finite(), "{m}: {s}");
        }
        assert_eq!(score("avg-corr-pearson", &p), 0.0);
        let single = profile(&[&[4.0]]);
        for m in MetricId::all() {
            assert!(evaluate_metric(m, &single).score.is_finite(), "{m}");
        }
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn kendall_mean_is_tau_a() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        // 10 pairs, 2 discordant -> tau-a = 6/10
        let c = kendall_contributions(&x, &y);
        let tau = c.iter().sum::<f64>() / c.len() as f64;
        assert!((tau - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rank_population_is_per_agent_and_deterministic() {
        let pop = generate_synthetic(6, 3, 5, 0.0, 1.0, 4).unwrap();
        let m: MetricId = "avg-max-dct2-coeff".parse().unwrap();
        let a = rank_population(m, &pop);
        assert_eq!(a.len(), 6);
        assert!(a.iter().enumerate().all(|(i, s)| s.agent_id == i));
        let b = rank_population(m, &pop);
        assert!(a.iter().zip(&b).all(|(x, y)| x.score.to_bits() == y.score.to_bits()));
        let many = rank_population_many(&[m, "max-stdev".parse().unwrap()], &pop);
        assert_eq!(many[0], a);
    }

    #[test]
    fn energy_style_profiles_share_avg_stdev() {
        let base = generate_synthetic(1, 1, 24, 1.0, 2.0, 9).unwrap().agent(0).plan(0).clone();
        let agents = (0..3)
            .map(|i| build_energy_style_profile(i, &base, 100 + i as u64).unwrap())
            .collect();
        let pop = Population::new(agents).unwrap();
        let scores = rank_population(MetricId::Stdev(Aggregate::Avg), &pop);
        for s in &scores {
            assert!((s.score - scores[0].score).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_csv() {
        let p = profile(&[&[1.0, 2.0]]);
        let pop = Population::new(vec![p]).unwrap();
        let m = MetricId::Value(Extremum::Max);
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &[(m, rank_population(m, &pop))]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "agent_id,metric,score\n0,max-value,2\n");
    }
}
