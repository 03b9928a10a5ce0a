//! Adversarial training: condition sampling, losses, optimizers, the step
//! loop, checkpoints and logs.

mod log;
mod loss;
mod optim;
mod sampler;
mod trainer;

pub use log::{read_eval_log, read_loss_log, EvalLog, EvalRecord, LossLog, EVAL_LOG_HEADER, LOSS_LOG_HEADER};
pub use loss::{
    discriminator_loss, discriminator_loss_and_grad, generator_loss, generator_loss_and_grad, sigmoid, softplus,
};
pub use optim::{Adam, EmaState};
pub use sampler::{ConditionSampler, SamplingMode};
pub use trainer::{EpochSummary, StepRecord, TrainConfig, Trainer, TrainingData};

#[cfg(test)]
mod tests;
