//! Smoothed L0.5 penalty.
//!
//! Above the transition point `a` the penalty is `√|w|`; below it the square
//! root is taken of a quartic that matches value and slope at `|w| = a` and
//! stays differentiable at zero.

use serde::{Deserialize, Serialize};

use crate::eql_net::{EqlParams, Gradients};
use crate::error::{EqlError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub lambda: f64,
    pub a: f64,
}

impl RegConfig {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        let cfg = RegConfig { lambda, a };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(EqlError::Config(format!("a must be positive, got {}", self.a)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(EqlError::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

fn check_a<T: Scalar>(a: T) -> Result<()> {
    if a > T::zero() && a.is_finite() {
        Ok(())
    } else {
        Err(EqlError::Config(format!("a must be positive, got {a}")))
    }
}

/// Inner quartic `p(w)` and its derivative.
#[inline]
fn quartic<T: Scalar>(w: T, a: T) -> (T, T) {
    let w2 = w * w;
    let a3 = a * a * a;
    let p = -w2 * w2 / (T::of(8.0) * a3) + T::of(3.0) * w2 / (T::of(4.0) * a) + T::of(3.0) * a / T::of(8.0);
    let dp = -w2 * w / (T::of(2.0) * a3) + T::of(3.0) * w / (T::of(2.0) * a);
    (p, dp)
}

#[inline]
pub(crate) fn penalty_unchecked<T: Scalar>(w: T, a: T) -> T {
    if w.abs() >= a {
        w.abs().sqrt()
    } else {
        quartic(w, a).0.sqrt()
    }
}

#[inline]
pub(crate) fn penalty_grad_unchecked<T: Scalar>(w: T, a: T) -> T {
    if w.abs() >= a {
        w.signum() / (T::of(2.0) * w.abs().sqrt())
    } else {
        let (p, dp) = quartic(w, a);
        dp / (T::of(2.0) * p.sqrt())
    }
}

pub fn penalty<T: Scalar>(w: T, a: T) -> Result<T> {
    check_a(a)?;
    Ok(penalty_unchecked(w, a))
}

pub fn penalty_grad<T: Scalar>(w: T, a: T) -> Result<T> {
    check_a(a)?;
    Ok(penalty_grad_unchecked(w, a))
}

/// `λ · Σ penalty(w, a)` over unmasked weights.
pub fn total_penalty<T: Scalar>(p: &EqlParams<T>, cfg: &RegConfig) -> Result<T> {
    cfg.validate()?;
    if cfg.lambda == 0.0 {
        return Ok(T::zero());
    }
    let a = T::of(cfg.a);
    let mut acc = T::zero();
    for (m, mask) in p.weights().iter().zip(p.masks()) {
        for (w, keep) in m.as_slice().iter().zip(mask) {
            if *keep {
                acc += penalty_unchecked(*w, a);
            }
        }
    }
    Ok(T::of(cfg.lambda) * acc)
}

/// Add `λ · ∂penalty/∂w` into `grads` at unmasked positions.
pub fn add_penalty_grad<T: Scalar>(
    p: &EqlParams<T>,
    cfg: &RegConfig,
    grads: &mut Gradients<T>,
) -> Result<()> {
    cfg.validate()?;
    if cfg.lambda == 0.0 {
        return Ok(());
    }
    let (lambda, a) = (T::of(cfg.lambda), T::of(cfg.a));
    for ((m, mask), gm) in p.weights().iter().zip(p.masks()).zip(&mut grads.mats) {
        for ((w, keep), g) in m.as_slice().iter().zip(mask).zip(gm.as_mut_slice()) {
            if *keep {
                *g += lambda * penalty_grad_unchecked(*w, a);
            }
        }
    }
    Ok(())
}
