//! Reverse-mode gradients of the cascade, ADAM, and the training loop.
//!
//! The tape is coarse: one record per stage holding the stage input, the
//! GDC, GLP, and unscaled MSSA outputs, and the per-window attention
//! intermediates. The reverse pass applies hand-written vector-Jacobian
//! products for each of those operations. FFTs and SPIRiT calibration sit
//! outside the graph.

mod adam;
mod fit;
mod tape;

pub use adam::{adam_step, AdamState};
pub use fit::{fit, fit_from, loss_and_grad, mean_loss, prepare_samples, FitResult, StepLog, TrainConfig, TrainSample};
pub use tape::{flatten_params, param_names, unflatten_params, CascadeGrads, GradTape, StageGrads};

use crate::data::KSpace;
use crate::error::{Error, Result};

/// `||pred - truth||^2 / ||truth||^2`.
pub fn loss_kspace(pred: &KSpace, truth: &KSpace) -> Result<f64> {
    let denom = truth.norm_sqr();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("ground truth is zero".into()));
    }
    Ok(pred.sub(truth)?.norm_sqr() / denom)
}

/// Real-pair gradient of [`loss_kspace`] with respect to `pred`.
pub fn loss_kspace_grad(pred: &KSpace, truth: &KSpace) -> Result<KSpace> {
    let denom = truth.norm_sqr();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("ground truth is zero".into()));
    }
    Ok(pred.sub(truth)?.scale(2.0 / denom))
}
