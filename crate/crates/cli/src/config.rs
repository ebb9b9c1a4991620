//! Experiment configuration documents.

use std::path::PathBuf;

use blockmix::percolation::Variant;
use blockmix::synth::SynthSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub graph: Option<GraphSource>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub partition: PartitionSource,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    pub couple: Option<CoupleConfig>,
    pub percolate: Option<PercolateConfig>,
    pub uniformity: Option<UniformityConfig>,
    pub spectral: Option<SpectralConfig>,
    pub bench: Option<BenchConfig>,
    pub sample: Option<SampleConfig>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSource {
    Generate {
        n: usize,
        d: f64,
        seed: u64,
    },
    File(PathBuf),
    /// `path:5`, `cycle:6`, `complete:4`, `star:3`, `empty:2`, `petersen`,
    /// `heawood`.
    Named(String),
    Synthetic(SynthSpec),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub epsilon: Option<f64>,
    /// Expected degree; defaults to the generator's `d` or the average degree.
    pub d: Option<f64>,
    /// Defaults to `⌈(α+ε)d⌉`.
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub r: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionSource {
    #[default]
    Singletons,
    Whole,
    Build,
    File(PathBuf),
    /// Only with a synthetic graph: the block plus pendant singletons.
    Synthetic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKindConfig {
    #[default]
    Glauber,
    Block,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelConfig {
    #[default]
    Coloring,
    Hardcore,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default)]
    pub kind: ChainKindConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "one")]
    pub replicas: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            kind: ChainKindConfig::Glauber,
            model: ModelConfig::Coloring,
            steps: default_steps(),
            replicas: 1,
        }
    }
}

fn default_steps() -> u64 {
    1000
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// 1 if the configuration is proper.
    Valid,
    /// Number of vertices per color (or per occupancy state).
    ColorCounts,
    /// Number of occupied vertices.
    Occupancy,
    /// The full state vector.
    Spins,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub cadence: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoupleMode {
    Contraction,
    Time,
    Trace,
    Propagation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    pub mode: CoupleMode,
    #[serde(default = "default_trials")]
    pub pairs: usize,
    pub t_max: Option<u64>,
    #[serde(default = "one")]
    pub replicas: usize,
    /// Trace cadence in steps.
    #[serde(default = "one_u64")]
    pub cadence: u64,
    pub block: Option<usize>,
    pub u_star: Option<usize>,
}

fn default_trials() -> usize {
    10_000
}

fn one_u64() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercolateMode {
    Tail,
    Domination,
    Beta,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercolateConfig {
    pub mode: PercolateMode,
    pub block: Option<usize>,
    pub u_star: Option<usize>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_variant() -> Variant {
    Variant::Simple
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformityConfig {
    #[serde(default = "five")]
    pub c0: f64,
    #[serde(default = "five")]
    pub c: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn five() -> f64 {
    5.0
}

fn default_probes() -> usize {
    200
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    /// Mixing-time threshold.
    pub eps: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub block_sizes: Vec<usize>,
    pub ks: Vec<usize>,
    #[serde(default = "default_fixed_k")]
    pub fixed_k: usize,
    #[serde(default = "default_fixed_size")]
    pub fixed_size: usize,
    #[serde(default = "five_usize")]
    pub batches: usize,
}

fn default_fixed_k() -> usize {
    16
}

fn default_fixed_size() -> usize {
    200
}

fn five_usize() -> usize {
    5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub block: Option<usize>,
    #[serde(default = "one")]
    pub draws: usize,
}
