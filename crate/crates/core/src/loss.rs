//! Huber and pseudo-Huber losses.

use crate::linalg::Vector;

/// Huber loss: quadratic on `[-tau, tau]`, linear outside.
pub fn huber_value(x: f64, tau: f64) -> f64 {
    let a = x.abs();
    if a <= tau {
        0.5 * x * x
    } else {
        tau * a - 0.5 * tau * tau
    }
}

/// Derivative of [`huber_value`], i.e. `x` clipped to `[-tau, tau]`.
pub fn huber_deriv(x: f64, tau: f64) -> f64 {
    x.clamp(-tau, tau)
}

/// Smooth pseudo-Huber surrogate `tau^2 (sqrt(1 + (x/tau)^2) - 1)`.
pub fn pseudo_huber_value(x: f64, tau: f64) -> f64 {
    let r = x / tau;
    // sqrt(1 + r^2) - 1 rewritten to avoid cancellation for small r.
    tau * tau * (r * r) / ((1.0 + r * r).sqrt() + 1.0)
}

pub fn pseudo_huber_deriv(x: f64, tau: f64) -> f64 {
    let r = x / tau;
    x / (1.0 + r * r).sqrt()
}

/// Second derivative, bounded by 1.
pub fn pseudo_huber_second(x: f64, tau: f64) -> f64 {
    let r = x / tau;
    (1.0 + r * r).powf(-1.5)
}

/// Value and gradient of the scale-normalized round loss at `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    /// Normalized residual `(r - <theta, x>) / sigma`.
    pub residual: f64,
    pub value: f64,
    /// Clipped residual; `|scalar_deriv| <= tau`.
    pub scalar_deriv: f64,
    pub gradient: Vector,
}

/// Huber loss of `z = (r - <theta, x>) / sigma` and its gradient in `theta`.
pub fn loss_gradient(theta: &Vector, x: &Vector, r: f64, sigma: f64, tau: f64) -> LossEval {
    let residual = (r - theta.dot(x)) / sigma;
    let scalar_deriv = huber_deriv(residual, tau);
    LossEval {
        residual,
        value: huber_value(residual, tau),
        scalar_deriv,
        gradient: x * (-scalar_deriv / sigma),
    }
}
