//! Optimizers, the feedforward classifier, recurrent cells and the
//! training loops that drive them.

mod classifier;
mod optim;
mod params;
mod recurrent;
mod train;

pub use classifier::{accuracy, predictions, Classifier, NetworkSpec};
pub use optim::{
    clip_global_norm, Optimizer, OptimizerConfig, OptimizerKind, StepDecay, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};
pub use params::{Param, ParamStore};
pub use recurrent::{
    Activation, CellKind, GruParts, InputInit, RecInit, RecurrentCellSpec, RecurrentModel,
    DEFAULT_GATE_BIAS_Z, LOW_VARIANCE,
};
pub use train::{
    copy_loss_and_grads, evaluate_classifier, evaluate_copy, evaluate_seq, seq_loss_and_grads,
    train_classifier, train_copy, train_seq_image, CopyEval, CopyReport, CopySchedule, EpochSchedule,
    EvalSummary, Labeled, MetricRecord, Metrics,
};
