//! Two-layer ReLU Q-networks with path-norm regularization.

mod barron;
mod net;
mod train;

pub use barron::{make_barron_target, BarronTarget};
pub use net::{relu, TwoLayerQ};
pub use train::{objective, train_regularized, RegressionData, TrainConfig, TrainOutcome};
