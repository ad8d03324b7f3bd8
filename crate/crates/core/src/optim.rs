//! RMSProp with mask-aware updates.

use crate::eql_net::{EqlParams, Gradients};
use crate::error::{EqlError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RmsState<T> {
    v: Vec<Vec<T>>,
    pub lr: T,
    pub rho: T,
    pub eps: T,
}

impl<T: Scalar> RmsState<T> {
    pub fn new(p: &EqlParams<T>, lr: f64, rho: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(EqlError::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(EqlError::Config(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(EqlError::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(RmsState {
            v: p.weights()
                .iter()
                .map(|m| vec![T::zero(); m.as_slice().len()])
                .collect(),
            lr: T::of(lr),
            rho: T::of(rho),
            eps: T::of(eps),
        })
    }

    /// Running mean of squared gradients, one vector per weight matrix.
    pub fn v(&self) -> &[Vec<T>] {
        &self.v
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(EqlError::Config(format!("learning rate must be positive, got {lr}")));
        }
        self.lr = T::of(lr);
        Ok(())
    }

    /// One in-place update. Frozen weights and their `v` are left alone.
    pub fn step(&mut self, p: &mut EqlParams<T>, g: &Gradients<T>) -> Result<()> {
        if g.mats.len() != self.v.len() || p.weights().len() != self.v.len() {
            return Err(EqlError::Dimension {
                what: "gradient matrices",
                expected: self.v.len(),
                got: g.mats.len(),
            });
        }
        for ((v, gm), m) in self.v.iter().zip(&g.mats).zip(p.weights()) {
            if v.len() != gm.as_slice().len() || v.len() != m.as_slice().len() {
                return Err(EqlError::Dimension {
                    what: "gradient matrix",
                    expected: v.len(),
                    got: gm.as_slice().len(),
                });
            }
        }
        let one_minus = T::one() - self.rho;
        let (weights, masks) = p.weights_and_masks_mut();
        for (((m, mask), gm), v) in weights.iter_mut().zip(masks).zip(&g.mats).zip(&mut self.v) {
            for (((w, keep), gi), vi) in m
                .as_mut_slice()
                .iter_mut()
                .zip(mask)
                .zip(gm.as_slice())
                .zip(v.iter_mut())
            {
                if !*keep {
                    continue;
                }
                *vi = self.rho * *vi + one_minus * *gi * *gi;
                *w -= self.lr * *gi / (vi.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Functional form of [`step`](Self::step).
    pub fn stepped(&self, p: &EqlParams<T>, g: &Gradients<T>) -> Result<(EqlParams<T>, Self)> {
        let mut p = p.clone();
        let mut s = self.clone();
        s.step(&mut p, g)?;
        Ok((p, s))
    }
}
