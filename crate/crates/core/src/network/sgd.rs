use super::{Gradients, Network, ThresholdMode};
use crate::{Error, Result};

/// Momentum buffers, one per real parameter component.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SgdState {
    velocity: Option<Gradients>,
}

impl SgdState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self) -> Option<&Gradients> {
        self.velocity.as_ref()
    }
}

/// One step of SGD with momentum, applied to real and imaginary parts
/// independently:
///
/// ```text
/// v <- momentum * v + grad
/// p <- p - lr * v
/// ```
///
/// Thresholds stay untouched when the network keeps them at zero.
pub fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64, momentum: f64, state: &mut SgdState) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidInput(format!("learning rate must be positive, got {lr}")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidInput(format!("momentum must lie in [0, 1), got {momentum}")));
    }
    let shapes_match = grads.layers.len() == net.layers.len()
        && grads
            .layers
            .iter()
            .zip(&net.layers)
            .all(|(g, l)| g.weights.len() == l.weights.len() && g.thresholds.len() == l.thresholds.len());
    if !shapes_match {
        return Err(Error::DimensionMismatch("gradients do not match network parameters".into()));
    }

    let velocity = state.velocity.get_or_insert_with(|| Gradients::zeros_like(net));
    let train_thresholds = net.threshold_mode == ThresholdMode::Trainable;
    for ((layer, g), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        for ((p, gi), vi) in layer.weights.iter_mut().zip(&g.weights).zip(&mut v.weights) {
            *vi = *vi * momentum + gi;
            *p -= *vi * lr;
        }
        if train_thresholds {
            for ((p, gi), vi) in layer.thresholds.iter_mut().zip(&g.thresholds).zip(&mut v.thresholds) {
                *vi = *vi * momentum + gi;
                *p -= *vi * lr;
            }
        }
    }
    Ok(())
}
