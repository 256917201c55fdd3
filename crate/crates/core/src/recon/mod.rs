//! Masked slot-sequence reconstruction: composite loss, a small token/channel
//! mixing network with hand-written backpropagation, the three-phase masking
//! curriculum, progressive unfreezing and iterative self-training on a
//! target region.

mod dtw;
mod gemm;
mod loss;
mod model;
mod optim;
mod reconstruct;
mod train;
mod transfer;
mod unfreeze;

pub use dtw::loss_dtw;
pub use loss::{
    loss_and_grad, loss_ce, loss_total, loss_transition, LossParts, LossWeights, ProbTensor,
};
pub use model::{Architecture, LayerGroup, Model, ParamTensor};
pub use optim::Adam;
pub use reconstruct::{complete_batch, reconstruct, reconstruct_batch, Reconstruction};
pub use train::{
    metrics_csv, phase_lengths, phase_of, train, EpochMetrics, Phase, TrainConfig, TrainOutcome,
    TrainSample, TrainSchedule,
};
pub use transfer::{
    retained_count, semi_supervised_transfer, StopReason, TransferConfig, TransferOutcome,
    TransferRow,
};
pub use unfreeze::{progressive_unfreeze, FreezeState};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReconError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence is empty")]
    EmptySequence,
    #[error("scored slot {slot} of sample {sample} has no activity in the target")]
    UnscoredTarget { sample: usize, slot: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no training data")]
    NoData,
    #[error("grid is fully masked; use the generation path")]
    FullyMasked,
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}
