use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RomError};
use crate::excitation::PrmsConfig;
use crate::mlp::{default_layer_dims, TrainConfig};
use crate::plant::{PlantConfig, NUM_INPUTS};

/// Everything one experiment needs; every command reads the same file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; every random stream is derived from it (see [`Seeds`]).
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plant: PlantConfig,
    pub excitation: ExcitationConfig,
    pub simulate: SimulateConfig,
    pub reduce: ReduceConfig,
    pub train: TrainSection,
    pub estimate: EstimateConfig,
}

/// PRMS shape shared by every trajectory; horizon and seed are set per use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    pub levels: usize,
    pub bounds: [[f64; 2]; NUM_INPUTS],
    pub hold_range_samples: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Number of plant steps; the snapshot matrix has one more column.
    pub horizon_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceConfig {
    /// Orders scored in the validation sweep.
    pub sweep_orders: Vec<usize>,
    /// Order of the persisted basis used downstream.
    pub order: usize,
    pub validation_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Reduced-state transition pairs `([u; xi(k)], xi(k+1))`.
    pub pairs: usize,
    /// Length of each PRMS trajectory the pairs are cut from.
    pub trajectory_samples: usize,
    /// Each trajectory starts at a random snapshot plus uniform noise of
    /// this fraction of the per-state range.
    pub start_perturbation: f64,
    /// Hidden widths; empty means the default three layers of 128.
    pub hidden_layers: Vec<usize>,
    /// Fit an affine map by least squares and train the network on what
    /// it leaves over.
    pub affine_skip: bool,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub optimizer: OptimizerConfig,
}

/// Adam settings of the experiment; the shuffle seed is derived, not set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { batch_size: 32, learning_rate: 3e-3, lr_decay: 0.97, max_epochs: 100, early_stop_patience: 20 }
    }
}

impl OptimizerConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            early_stop_patience: self.early_stop_patience,
            seed,
            lr_decay: self.lr_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub horizon_samples: usize,
    /// Noise standard deviations relative to the steady state.
    pub noise_relative: f64,
    /// Leading filter steps left out of the error summary.
    pub burn_in: usize,
    /// Initial covariance `p0_variance * I` in reduced coordinates.
    pub p0_variance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("runs/default"),
            plant: PlantConfig::default(),
            excitation: ExcitationConfig::default(),
            simulate: SimulateConfig::default(),
            reduce: ReduceConfig::default(),
            train: TrainSection::default(),
            estimate: EstimateConfig::default(),
        }
    }
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        let p = PrmsConfig::default();
        Self { levels: p.levels, bounds: p.bounds, hold_range_samples: p.hold_range_samples }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        // 100 hours at one sample every 30 s
        Self { horizon_samples: 12_000 }
    }
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self { sweep_orders: (2..=9).map(|k| 10 * k).collect(), order: 30, validation_samples: 600 }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            pairs: 100_000,
            trajectory_samples: 200,
            start_perturbation: 0.05,
            hidden_layers: Vec::new(),
            affine_skip: true,
            train_fraction: 0.7,
            validation_fraction: 0.2,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { horizon_samples: 600, noise_relative: 0.01, burn_in: 50, p0_variance: 0.1 }
    }
}

impl ExcitationConfig {
    pub fn prms(&self, horizon_samples: usize, seed: u64) -> PrmsConfig {
        PrmsConfig { levels: self.levels, bounds: self.bounds, hold_range_samples: self.hold_range_samples, horizon_samples, seed }
    }
}

impl TrainSection {
    pub fn layer_dims(&self, order: usize) -> Vec<usize> {
        if self.hidden_layers.is_empty() {
            return default_layer_dims(order);
        }
        let mut dims = vec![NUM_INPUTS + order];
        dims.extend(&self.hidden_layers);
        dims.push(order);
        dims
    }
}

/// Seeds of the independent random streams of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub snapshots: u64,
    pub validation: u64,
    pub estimate: u64,
    pub noise: u64,
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
    /// Training trajectory `j` uses `training + j`.
    pub training: u64,
}

impl Seeds {
    pub fn derive(base: u64) -> Self {
        Self {
            snapshots: base,
            validation: base.wrapping_add(1),
            estimate: base.wrapping_add(2),
            noise: base.wrapping_add(3),
            split: base.wrapping_add(4),
            init: base.wrapping_add(5),
            shuffle: base.wrapping_add(6),
            training: base.wrapping_add(1000),
        }
    }
}

impl ExperimentConfig {
    /// The small profile for CI: 2,000 snapshots and 10,000 training pairs.
    pub fn apply_fast_profile(&mut self) {
        self.simulate.horizon_samples = 2_000;
        self.train.pairs = 10_000;
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| RomError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RomError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RomError::Config(msg));
        self.plant.validate()?;
        self.excitation.prms(1, 0).validate()?;
        let n = self.plant.state_dim();
        let snapshots = self.simulate.horizon_samples + 1;
        if self.simulate.horizon_samples == 0 {
            return bad("simulate.horizon_samples must be positive".into());
        }
        let max_order = n.min(snapshots);
        let r = &self.reduce;
        if r.order == 0 || r.order > max_order {
            return bad(format!("reduce.order must lie in 1..={max_order}, got {}", r.order));
        }
        if let Some(&o) = r.sweep_orders.iter().find(|&&o| o == 0 || o > max_order) {
            return bad(format!("sweep order {o} outside 1..={max_order}"));
        }
        if r.validation_samples == 0 {
            return bad("reduce.validation_samples must be positive".into());
        }
        let t = &self.train;
        if t.pairs < 10 || t.trajectory_samples == 0 {
            return bad("train.pairs must be at least 10 and train.trajectory_samples positive".into());
        }
        if !(0.0..1.0).contains(&t.start_perturbation) {
            return bad(format!("train.start_perturbation must lie in [0, 1), got {}", t.start_perturbation));
        }
        if t.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(t.train_fraction > 0.0 && t.validation_fraction > 0.0 && t.train_fraction + t.validation_fraction < 1.0) {
            return bad(format!("split fractions {} / {} leave no test set", t.train_fraction, t.validation_fraction));
        }
        t.optimizer.train_config(0).validate()?;
        let e = &self.estimate;
        if e.horizon_samples == 0 || e.burn_in >= e.horizon_samples {
            return bad(format!("estimate.burn_in ({}) must be below a positive horizon ({})", e.burn_in, e.horizon_samples));
        }
        if !(e.noise_relative >= 0.0 && e.noise_relative.is_finite()) {
            return bad(format!("estimate.noise_relative must be finite and nonnegative, got {}", e.noise_relative));
        }
        if !(e.p0_variance > 0.0 && e.p0_variance.is_finite()) {
            return bad(format!("estimate.p0_variance must be positive, got {}", e.p0_variance));
        }
        Ok(())
    }
}
