use super::params::HeadParams;
use crate::error::{Error, Result};

/// Momentum SGD: `v <- momentum * v + g; theta <- theta - lr * v`.
pub fn sgd_step(
    params: &mut HeadParams,
    velocity: &mut HeadParams,
    grads: &HeadParams,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if grads
        .fields()
        .iter()
        .any(|f| f.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("gradient".into()));
    }
    velocity.scale(momentum);
    velocity.axpy(1.0, grads);
    params.axpy(-lr, velocity);
    params.validate()
}
