use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{MlpGrads, MlpParams};
use crate::error::{Result, RomError};

/// Transition pairs, one sample per column: `inputs` holds `[u; xi(k)]`,
/// `targets` holds `xi(k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub split: Split,
}

/// Disjoint sample index sets covering the whole dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Shuffles `0..samples` with `seed` and cuts it into train/validation/test
    /// chunks of the given fractions (the test set takes the remainder).
    pub fn shuffled(samples: usize, train_fraction: f64, validation_fraction: f64, seed: u64) -> Result<Split> {
        if !(train_fraction > 0.0 && validation_fraction >= 0.0 && train_fraction + validation_fraction <= 1.0) {
            return Err(RomError::config(format!("invalid split fractions {train_fraction} / {validation_fraction}")));
        }
        let mut idx: Vec<usize> = (0..samples).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train_fraction * samples as f64).round() as usize;
        let n_val = ((validation_fraction * samples as f64).round() as usize).min(samples - n_train);
        let test = idx.split_off(n_train + n_val);
        let validation = idx.split_off(n_train);
        Ok(Split { train: idx, validation, test })
    }

    pub fn is_partition_of(&self, samples: usize) -> bool {
        let mut seen = vec![false; samples];
        for &i in self.train.iter().chain(&self.validation).chain(&self.test) {
            if i >= samples || std::mem::replace(&mut seen[i], true) {
                return false;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, split: Split) -> Result<Self> {
        if inputs.ncols() != targets.ncols() {
            return Err(RomError::contract(format!("{} inputs vs {} targets", inputs.ncols(), targets.ncols())));
        }
        if inputs.ncols() == 0 {
            return Err(RomError::contract("empty dataset"));
        }
        if !split.is_partition_of(inputs.ncols()) {
            return Err(RomError::contract("split is not a partition of the samples"));
        }
        Ok(Self { inputs, targets, split })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.inputs.select_columns(idx), self.targets.select_columns(idx))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Per-epoch multiplicative learning-rate decay; 1 keeps it constant.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 256, learning_rate: 1e-3, max_epochs: 300, early_stop_patience: 20, seed: 0, lr_decay: 1.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(RomError::config("batch_size, max_epochs and early_stop_patience must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(RomError::config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(RomError::config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen.
    pub params: MlpParams,
    pub best_epoch: usize,
    /// Epoch 0 is the initialization.
    pub history: Vec<EpochLoss>,
}

struct Adam {
    m: MlpGrads,
    v: MlpGrads,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(p: &MlpParams) -> Self {
        let zeros = || MlpGrads {
            weights: p.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: p.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        };
        Self { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, p: &mut MlpParams, g: &MlpGrads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let update = |param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..param.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
            }
        };
        for l in 0..p.weights.len() {
            update(p.weights[l].as_mut_slice(), g.weights[l].as_slice(), self.m.weights[l].as_mut_slice(), self.v.weights[l].as_mut_slice());
            update(p.biases[l].as_mut_slice(), g.biases[l].as_slice(), self.m.biases[l].as_mut_slice(), self.v.biases[l].as_mut_slice());
        }
    }
}

/// Mini-batch Adam with early stopping on the validation loss. When the split
/// has no validation samples the training loss is used instead.
pub fn train(params: &MlpParams, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.inputs.nrows() != params.input_dim() || data.targets.nrows() != params.output_dim() {
        return Err(RomError::contract(format!(
            "dataset is {} -> {} but network is {} -> {}",
            data.inputs.nrows(),
            data.targets.nrows(),
            params.input_dim(),
            params.output_dim()
        )));
    }
    if data.split.train.is_empty() {
        return Err(RomError::contract("no training samples"));
    }
    let (train_x, train_y) = data.select(&data.split.train);
    let val = (!data.split.validation.is_empty()).then(|| data.select(&data.split.validation));
    let evaluate = |p: &MlpParams, epoch: usize| -> Result<EpochLoss> {
        let train = p.loss(&train_x, &train_y)?;
        let validation = match &val {
            Some((x, y)) => p.loss(x, y)?,
            None => train,
        };
        if !train.is_finite() || !validation.is_finite() {
            return Err(RomError::Divergence { epoch, learning_rate: config.learning_rate });
        }
        Ok(EpochLoss { epoch, train, validation })
    };

    let mut current = params.clone();
    let mut best = current.clone();
    let mut history = vec![evaluate(&current, 0)?];
    let mut best_loss = history[0].validation;
    let mut best_epoch = 0;
    let mut adam = Adam::new(&current);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_x.ncols()).collect();

    let mut lr = config.learning_rate;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let bx = train_x.select_columns(chunk);
            let by = train_y.select_columns(chunk);
            let (loss, grads) = current.loss_and_gradient(&bx, &by)?;
            if !loss.is_finite() {
                return Err(RomError::Divergence { epoch, learning_rate: config.learning_rate });
            }
            adam.step(&mut current, &grads, lr);
        }
        lr *= config.lr_decay;
        let record = evaluate(&current, epoch)?;
        history.push(record);
        if record.validation < best_loss {
            best_loss = record.validation;
            best_epoch = epoch;
            best = current.clone();
        } else if epoch - best_epoch >= config.early_stop_patience {
            break;
        }
    }
    Ok(TrainOutcome { params: best, best_epoch, history })
}
