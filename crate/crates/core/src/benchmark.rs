//! Optimality evaluation against a sample of random isomorphic placements.
//!
//! Converged costs from many random bijections form an empirical reference
//! distribution. Any other placement is then scored by the percentile its cost
//! falls at, which makes results comparable across datasets.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{random_selection, run_phase, InitialSelection, LearningConfig};
use crate::metrics::{rank_population_many, MetricId};
use crate::plans::Population;
use crate::seeding::{derive_seed, derive_tagged};
use crate::topology::{place_by_ranking, random_bijection, Bijection, SortOrder, TreeTopology};

/// One random-bijection run. The seeds reproduce its placement and initial
/// selection exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMember {
    pub index: u64,
    pub cost: f64,
    pub converged: bool,
    pub bijection_seed: u64,
    pub selection_seed: u64,
}

impl SampleMember {
    fn seeds(base_seed: u64, index: u64) -> (u64, u64) {
        let s = derive_seed(base_seed, index);
        (derive_tagged(s, "bijection", 0), derive_tagged(s, "selection", 0))
    }

    pub fn bijection(&self, tree: &TreeTopology) -> Bijection {
        random_bijection(tree, self.bijection_seed)
    }

    pub fn initial_selection(&self, pop: &Population) -> Vec<usize> {
        random_selection(pop, self.selection_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    members: Vec<SampleMember>,
    base_seed: u64,
    dataset_tag: String,
    engine: LearningConfig,
}

impl BenchmarkSample {
    fn from_members(
        mut members: Vec<SampleMember>,
        base_seed: u64,
        dataset_tag: &str,
        engine: &LearningConfig,
    ) -> Self {
        members.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.index.cmp(&b.index)));
        BenchmarkSample {
            members,
            base_seed,
            dataset_tag: dataset_tag.to_string(),
            engine: engine.clone(),
        }
    }

    /// Build a sample from bare costs, e.g. for density work on external data.
    pub fn from_costs(costs: &[f64], dataset_tag: &str) -> Result<Self> {
        if let Some(c) = costs.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("sample cost {c} is not finite")));
        }
        let members = costs
            .iter()
            .enumerate()
            .map(|(i, &cost)| SampleMember {
                index: i as u64,
                cost,
                converged: true,
                bijection_seed: 0,
                selection_seed: 0,
            })
            .collect();
        let engine = LearningConfig::new(InitialSelection::Random { seed: 0 });
        Ok(BenchmarkSample::from_members(members, 0, dataset_tag, &engine))
    }

    /// Combine two partial samples drawn with the same base seed.
    pub fn merge(mut self, other: BenchmarkSample) -> Result<Self> {
        if self.base_seed != other.base_seed || self.engine != other.engine {
            return Err(Error::invalid("cannot merge samples with different seeds or engines"));
        }
        self.members.extend(other.members);
        Ok(BenchmarkSample::from_members(
            self.members,
            self.base_seed,
            &self.dataset_tag,
            &self.engine,
        ))
    }

    /// Members sorted by ascending cost (ties by index).
    pub fn members(&self) -> &[SampleMember] {
        &self.members
    }

    pub fn costs(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.cost).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn dataset_tag(&self) -> &str {
        &self.dataset_tag
    }

    pub fn engine(&self) -> &LearningConfig {
        &self.engine
    }

    /// Runs that hit the iteration cap before converging.
    pub fn unconverged(&self) -> usize {
        self.members.iter().filter(|m| !m.converged).count()
    }

    /// Nearest-rank member at percentile `pct` (1..=100).
    pub fn member_at_percentile(&self, pct: u32) -> Result<&SampleMember> {
        if self.members.is_empty() {
            return Err(Error::invalid("empty benchmark sample"));
        }
        if pct == 0 || pct > 100 {
            return Err(Error::invalid(format!("percentile {pct} outside 1..=100")));
        }
        let rank = (pct as usize * self.members.len()).div_ceil(100).max(1);
        Ok(&self.members[rank - 1])
    }

    /// CSV with a `#` metadata line and header `rank,cost`; ranks start at 1.
    pub fn write_csv<W: Write>(&self, out: &mut W, config_hash: &str) -> io::Result<()> {
        writeln!(
            out,
            "# n_samples={} base_seed={} dataset={} config_hash={} unconverged={}",
            self.len(),
            self.base_seed,
            self.dataset_tag,
            config_hash,
            self.unconverged()
        )?;
        writeln!(out, "rank,cost")?;
        for (i, m) in self.members.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, m.cost)?;
        }
        Ok(())
    }
}

/// Run the sample members with indices in `range`. Each member's seeds depend
/// only on `(base_seed, index)`, so any split of the index range merges into the
/// same sample.
pub fn run_benchmark_range(
    pop: &Population,
    tree: &TreeTopology,
    range: Range<u64>,
    base_seed: u64,
    cfg: &LearningConfig,
    dataset_tag: &str,
) -> Result<BenchmarkSample> {
    cfg.validate()?;
    if range.is_empty() {
        return Err(Error::invalid("benchmark needs at least one sample"));
    }
    let members = range
        .into_par_iter()
        .map(|index| {
            let (bijection_seed, selection_seed) = SampleMember::seeds(base_seed, index);
            let run_cfg = LearningConfig {
                initial_selection: InitialSelection::Random { seed: selection_seed },
                ..cfg.clone()
            };
            let placement = random_bijection(tree, bijection_seed);
            let trace = run_phase(pop, tree, &placement, &run_cfg)?;
            Ok(SampleMember {
                index,
                cost: trace.final_cost(),
                converged: trace.converged_at.is_some(),
                bijection_seed,
                selection_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkSample::from_members(members, base_seed, dataset_tag, cfg))
}

pub fn run_random_benchmark(
    pop: &Population,
    tree: &TreeTopology,
    n_samples: usize,
    base_seed: u64,
    cfg: &LearningConfig,
    dataset_tag: &str,
) -> Result<BenchmarkSample> {
    run_benchmark_range(pop, tree, 0..n_samples as u64, base_seed, cfg, dataset_tag)
}

/// Position of `cost` within the sorted sample, in `[0, 1]`, interpolating
/// linearly between neighbouring ranks: rank `i` (0-based) of `n` maps to
/// `i / (n - 1)`.
pub fn percentile_of(cost: f64, sample: &BenchmarkSample) -> Result<f64> {
    percentile_in_sorted(&sample.costs(), cost)
}

pub fn percentile_in_sorted(sorted: &[f64], cost: f64) -> Result<f64> {
    let (Some(&min), Some(&max)) = (sorted.first(), sorted.last()) else {
        return Err(Error::invalid("percentile of an empty sample"));
    };
    if cost <= min {
        return Ok(0.0);
    }
    if cost >= max {
        return Ok(1.0);
    }
    // min < cost < max, so 1 <= at_or_below <= n - 1
    let at_or_below = sorted.partition_point(|&c| c <= cost);
    let i = at_or_below - 1;
    let (lo, hi) = (sorted[i], sorted[i + 1]);
    let frac = if hi > lo { (cost - lo) / (hi - lo) } else { 0.0 };
    Ok((i as f64 + frac) / (sorted.len() - 1) as f64)
}

/// `n^(-1/5)`.
pub fn silverman_bandwidth(n_s: usize) -> Result<f64> {
    if n_s == 0 {
        return Err(Error::invalid("bandwidth needs at least one sample"));
    }
    Ok((n_s as f64).powf(-0.2))
}

/// How the KDE bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// `n^(-1/5)`, independent of the data scale.
    #[default]
    Silverman,
    /// `σ · n^(-1/5)` with σ from the Gaussian fit, for costs far from unit scale.
    SilvermanScaled,
}

impl BandwidthRule {
    pub fn bandwidth(self, n_s: usize, fit: &GaussianFit) -> Result<f64> {
        let h = silverman_bandwidth(n_s)?;
        match self {
            BandwidthRule::Silverman => Ok(h),
            BandwidthRule::SilvermanScaled if fit.sigma2 > 0.0 => Ok(h * fit.sigma2.sqrt()),
            BandwidthRule::SilvermanScaled => Err(Error::invalid("scaled bandwidth of a zero-variance sample")),
        }
    }
}

fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Gaussian kernel density estimate over a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    points: Vec<f64>,
    bandwidth: f64,
}

impl KdeEstimate {
    pub fn new(sample: &BenchmarkSample, bandwidth: f64) -> Result<Self> {
        KdeEstimate::from_points(sample.costs(), bandwidth)
    }

    pub fn from_points(points: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid(format!("bandwidth {bandwidth} must be > 0")));
        }
        if points.is_empty() {
            return Err(Error::invalid("density estimate of an empty sample"));
        }
        Ok(KdeEstimate { points, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.points.iter().map(|c| std_normal_pdf((x - c) / h)).sum();
        sum / (self.points.len() as f64 * h)
    }

    fn range(&self) -> (f64, f64) {
        let lo = self.points.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

pub fn kde_density(sample: &BenchmarkSample, bandwidth: f64, x: f64) -> Result<f64> {
    Ok(KdeEstimate::new(sample, bandwidth)?.density(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianFit {
    /// Density of Normal(mu, sigma2); `None` for a degenerate fit.
    pub fn density(&self, x: f64) -> Option<f64> {
        if self.sigma2 > 0.0 {
            let sigma = self.sigma2.sqrt();
            Some(std_normal_pdf((x - self.mu) / sigma) / sigma)
        } else {
            None
        }
    }
}

/// `mu` is the sample median, `sigma2` the population variance.
pub fn fit_gaussian(sample: &BenchmarkSample) -> Result<GaussianFit> {
    fit_gaussian_sorted(&sample.costs())
}

fn fit_gaussian_sorted(sorted: &[f64]) -> Result<GaussianFit> {
    let n = sorted.len();
    if n < 2 {
        return Err(Error::invalid("gaussian fit needs at least two samples"));
    }
    let mu = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sigma2 = sorted.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(GaussianFit { mu, sigma2 })
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + step * i as f64).collect()
}

/// Maximum absolute difference between the KDE and the fitted Gaussian over a
/// uniform grid spanning the sample range extended by 3σ on both sides.
pub fn density_mismatch(kde: &KdeEstimate, fit: &GaussianFit, grid: usize) -> Result<f64> {
    if grid < 2 {
        return Err(Error::invalid("mismatch grid needs at least two points"));
    }
    if fit.density(fit.mu).is_none() {
        return Err(Error::invalid("gaussian fit has zero variance"));
    }
    let (lo, hi) = kde.range();
    let pad = 3.0 * fit.sigma2.sqrt();
    Ok(linspace(lo - pad, hi + pad, grid)
        .into_iter()
        .map(|x| (kde.density(x) - fit.density(x).unwrap_or(0.0)).abs())
        .fold(0.0, f64::max))
}

/// Grid wide enough to hold practically all mass of both densities.
pub fn density_grid(kde: &KdeEstimate, fit: &GaussianFit, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::invalid("density grid needs at least two points"));
    }
    let (lo, hi) = kde.range();
    let pad = (5.0 * fit.sigma2.sqrt()).max(6.0 * kde.bandwidth());
    Ok(linspace(lo.min(fit.mu) - pad, hi.max(fit.mu) + pad, count))
}

/// CSV with header `x,kde,parametric`, preceded by a `#` metadata line.
pub fn write_density_csv<W: Write>(
    out: &mut W,
    kde: &KdeEstimate,
    fit: &GaussianFit,
    grid: &[f64],
    config_hash: &str,
) -> io::Result<()> {
    writeln!(
        out,
        "# bandwidth={} mu={} sigma2={} config_hash={config_hash}",
        kde.bandwidth(),
        fit.mu,
        fit.sigma2
    )?;
    writeln!(out, "x,kde,parametric")?;
    for &x in grid {
        writeln!(out, "{x},{},{}", kde.density(x), fit.density(x).unwrap_or(0.0))?;
    }
    Ok(())
}

/// Euclidean distance between two points of the per-dataset percentile space.
pub fn percentile_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedBijectionRow {
    pub metric: MetricId,
    pub order: SortOrder,
    pub cost: f64,
    pub percentile: f64,
}

impl FixedBijectionRow {
    /// `ASC-min-value` style label.
    pub fn label(&self) -> String {
        format!("{}-{}", self.order.label(), self.metric)
    }
}

/// Place agents by every metric in both orders, learn, and locate each converged
/// cost within the sample.
pub fn rank_fixed_bijections(
    pop: &Population,
    tree: &TreeTopology,
    metrics: &[MetricId],
    sample: &BenchmarkSample,
    cfg: &LearningConfig,
) -> Result<Vec<FixedBijectionRow>> {
    if metrics.is_empty() {
        return Err(Error::invalid("no metrics to rank"));
    }
    let sorted = sample.costs();
    let scores = rank_population_many(metrics, pop);
    let jobs: Vec<(MetricId, SortOrder)> = metrics
        .iter()
        .flat_map(|&m| SortOrder::BOTH.map(|o| (m, o)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(i, &(metric, order))| {
            let placement = place_by_ranking(tree, &scores[i / 2], order)?;
            let cost = run_phase(pop, tree, &placement, cfg)?.final_cost();
            Ok(FixedBijectionRow {
                metric,
                order,
                cost,
                percentile: percentile_in_sorted(&sorted, cost)?,
            })
        })
        .collect()
}

/// CSV with header `metric,order,cost,percentile`.
pub fn write_heatmap_csv<W: Write>(out: &mut W, rows: &[FixedBijectionRow], config_hash: &str) -> io::Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "metric,order,cost,percentile")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.metric, r.order.label(), r.cost, r.percentile)?;
    }
    Ok(())
}

/// CSV with header `metric,order,children,percentile`.
pub fn write_children_heatmap_csv<W: Write>(
    out: &mut W,
    rows: &[(usize, FixedBijectionRow)],
    config_hash: &str,
) -> io::Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "metric,order,children,percentile")?;
    for (children, r) in rows {
        writeln!(out, "{},{},{children},{}", r.metric, r.order.label(), r.percentile)?;
    }
    Ok(())
}

/// Summary of a sorted cost curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveShape {
    /// Fraction of samples outside the Tukey fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
    pub extreme_fraction: f64,
    /// R² of a least-squares line through the interquartile part of the curve
    /// (cost against rank).
    pub middle_r2: f64,
    /// `(max - min) / max`.
    pub reduction: f64,
}

pub fn curve_shape(sample: &BenchmarkSample) -> Result<CurveShape> {
    let c = sample.costs();
    let n = c.len();
    if n < 8 {
        return Err(Error::invalid("curve shape needs at least 8 samples"));
    }
    let q = |p: f64| c[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let (q1, q3) = (q(0.25), q(0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let extremes = c.iter().filter(|&&v| v < lo || v > hi).count();

    let (a, b) = (n / 4, (3 * n) / 4);
    let xs: Vec<f64> = (a..b).map(|i| i as f64).collect();
    let ys = &c[a..b];
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let middle_r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };

    let (min, max) = (c[0], c[n - 1]);
    Ok(CurveShape {
        extreme_fraction: extremes as f64 / n as f64,
        middle_r2,
        reduction: if max > 0.0 { (max - min) / max } else { 0.0 },
    })
}
