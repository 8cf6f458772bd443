//! Run configuration: one TOML file, every field optional, plus flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use treeshift::benchmark::BandwidthRule;
use treeshift::learning::{
    InitialSelection, LearningConfig, SubtreeRule, DEFAULT_CONVERGENCE_TOLERANCE, DEFAULT_MAX_ITERATIONS,
};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Never affects results.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub tree: TreeSpec,
    pub engine: EngineSpec,
    pub run: RunSpec,
    pub benchmark: BenchmarkSpec,
    pub rank: RankSpec,
    pub strategy: StrategySpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            workers: 0,
            out_dir: PathBuf::from("out"),
            dataset: DatasetSpec::default(),
            tree: TreeSpec::default(),
            engine: EngineSpec::default(),
            run: RunSpec::default(),
            benchmark: BenchmarkSpec::default(),
            rank: RankSpec::default(),
            strategy: StrategySpec::default(),
        }
    }
}

/// Where the population comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// A directory of `agent_<id>.plans` files.
    Directory { path: PathBuf },
    /// i.i.d. Normal(mean, stdev²) plan values.
    Synthetic {
        n: usize,
        k: usize,
        d: usize,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        stdev: f64,
    },
    /// Ten plans per agent derived from one base plan (base, 3 shuffles,
    /// 3 SWAP-15, 3 SWAP-30). Bases are the first plan of each agent in `base`,
    /// or Normal(mean, stdev²) vectors of length `d` when no directory is given.
    EnergyStyle {
        #[serde(default)]
        base: Option<PathBuf>,
        #[serde(default = "hundred")]
        n: usize,
        #[serde(default = "energy_d")]
        d: usize,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        stdev: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn hundred() -> usize {
    100
}

fn energy_d() -> usize {
    144
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            n: 100,
            k: 16,
            d: 100,
            mean: 0.0,
            stdev: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSpec {
    pub children: usize,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec { children: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSpec {
    pub max_iterations: usize,
    pub convergence_tolerance: f64,
    pub subtree_rule: SubtreeRule,
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            convergence_tolerance: DEFAULT_CONVERGENCE_TOLERANCE,
            subtree_rule: SubtreeRule::default(),
        }
    }
}

impl EngineSpec {
    pub fn learning_config(&self, initial: InitialSelection) -> LearningConfig {
        LearningConfig {
            max_iterations: self.max_iterations,
            lambda: 0.0,
            convergence_tolerance: self.convergence_tolerance,
            initial_selection: initial,
            subtree_rule: self.subtree_rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    /// `random`, or a sorted metric placement such as `DESC-min-value`.
    pub placement: String,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            placement: "random".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub samples: usize,
    pub density_grid: usize,
    pub bandwidth: BandwidthRule,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            samples: 1000,
            density_grid: 512,
            bandwidth: BandwidthRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSpec {
    /// Metric display names; absent means all 62.
    pub metrics: Option<Vec<String>>,
    pub children: Vec<usize>,
}

impl Default for RankSpec {
    fn default() -> Self {
        RankSpec {
            metrics: None,
            children: (2..=14).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySpec {
    pub offsets: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub percentiles: Vec<u32>,
    pub repetitions: usize,
    pub total_iterations: usize,
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec {
            offsets: (1..=20).collect(),
            thresholds: (1..=9).map(|i| i as f64 / 10.0).collect(),
            percentiles: vec![10, 50, 90],
            repetitions: 100,
            total_iterations: 100,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub children: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Apply flag overrides. A `--children` list sets the rank sweep; a single
    /// value also sets the tree used by every other command.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(workers) = o.workers {
            self.workers = workers;
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(path) = &o.dataset {
            self.dataset = DatasetSpec::Directory { path: path.clone() };
        }
        if let Some(children) = &o.children {
            if children.is_empty() {
                return Err(CliError::Config("--children needs at least one value".into()));
            }
            self.rank.children = children.clone();
            self.tree.children = children[0];
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the configuration with the fields that cannot change results
    /// (worker count, output directory) blanked.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        canonical.out_dir = PathBuf::new();
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }
}
