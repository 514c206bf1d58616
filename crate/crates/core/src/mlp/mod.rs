//! Feed-forward surrogate of the one-step reduced dynamics.

mod io;
mod network;
mod surrogate;
mod train;

pub use io::{model_to_bytes, read_model, write_model, MODEL_MAGIC};
pub use network::{default_layer_dims, Activation, MlpGrads, MlpParams};
pub use surrogate::{rollout, FeatureScaling, ReducedDynamics, Surrogate, SurrogateFrame};
pub use train::{train, Dataset, EpochLoss, Split, TrainConfig, TrainOutcome};
