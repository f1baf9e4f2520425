//! Dense encoder networks with exact reverse-mode gradients, SGD with
//! momentum, and the warmup/step-decay/early-stop training schedule.

mod encoder;
mod loss;
mod net;
mod optim;

pub use encoder::{ClassifierHead, Encoder, Forward, GradientTape, HeadId, Modality};
pub use loss::{argmax, softmax_ce_loss};
pub use net::{Activation, DenseLayer, DenseNet};
pub use optim::{early_stop_check, Sgd, TrainingSchedule};
