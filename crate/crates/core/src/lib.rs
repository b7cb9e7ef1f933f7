//! Learned structured subsampling for multidimensional acquisition.
//!
//! A single logits vector spanning every acquisition axis is trained with a
//! Gumbel-softmax sampler so that a total sample budget is split across the
//! axes automatically. The training signal is the trace of the Fisher
//! information of a parametric forward model, evaluated through a
//! Kronecker-structured selection operator that is never materialized.
//!
//! Modules:
//! - [`model`]: synthetic pulse-echo ultrasound forward model and Jacobian.
//! - [`sampling`]: Gumbel top-K sampling, soft selection matrices, hardening.
//! - [`fim`]: Kronecker operator, Fisher information, Cramér-Rao bound.
//! - [`train`]: the learning objective, its gradient and the training loop.
//! - [`baselines`]: uniform, greedy, per-axis and flat learned selectors.
//! - [`recovery`]: complex FISTA sparse localization and image metrics.

pub mod baselines;
pub mod error;
pub mod fim;
pub mod model;
pub mod recovery;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub use fim::{CrbSummary, FisherMatrix, Sampling, WeightTensor};
pub use model::{ArrayGeometry, Dataset, ForwardModel, FrequencyGrid, PulseSpec, Roi, Scatterer};
pub use sampling::{AxisLayout, HardSelection, PriorityWeights, StructuredSelector};
pub use train::{Mode, TrainConfig, TrainReport};
