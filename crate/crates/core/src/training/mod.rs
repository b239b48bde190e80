//! Loss assembly, optimizers and the experiment loop.

mod adam;
mod lbfgs;
mod loss;
mod run;

pub use adam::{cosine_lr, AdamConfig, AdamState};
pub use lbfgs::{lbfgs_run, LbfgsConfig, LbfgsOutcome, LbfgsStop};
pub use loss::{loss_and_grad, LossParts, Phases};
pub use run::{
    build_model, score_scalar_field, sweep, train, Model, RunRecord, SweepStats, TrainOptions,
};

/// Optimizer schedule: a cosine-decayed first stage, then optionally a
/// quasi-Newton stage run until convergence.
#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub adam_iters: usize,
    pub adam_lr: f64,
    pub adam: AdamConfig,
    pub lbfgs: Option<LbfgsConfig>,
}

impl OptimizerConfig {
    pub fn adam_only(iters: usize, lr: f64) -> Self {
        OptimizerConfig { adam_iters: iters, adam_lr: lr, adam: AdamConfig::default(), lbfgs: None }
    }

    pub fn two_stage(adam_iters: usize, lr: f64, lbfgs_iters: usize) -> Self {
        OptimizerConfig {
            adam_iters,
            adam_lr: lr,
            adam: AdamConfig::default(),
            lbfgs: Some(LbfgsConfig { max_iters: lbfgs_iters, ..LbfgsConfig::default() }),
        }
    }
}
