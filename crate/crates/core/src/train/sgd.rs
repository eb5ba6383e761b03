//! Stochastic gradient descent on the integrated truncation error.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainData;
use crate::error::{Error, Result};
use crate::field::Mask;
use crate::twin::{truncation_error, truncation_gradient, TwinModel};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SgdConfig {
    /// Fixed step `lambda`. `None` starts from `T / |grad T|^2` and adapts per epoch.
    pub step: Option<f64>,
    /// Time rows per mini-batch; 0 means the whole grid.
    pub batch_rows: usize,
    pub epochs: usize,
    /// Stop when an epoch changes `T` by at most this relative amount.
    pub tol: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            step: None,
            batch_rows: 4,
            epochs: 500,
            tol: 1e-9,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.step {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::invalid("sgd.step", "must be finite and non-negative"));
            }
        }
        if self.epochs == 0 {
            return Err(Error::invalid("sgd.epochs", "need at least one epoch"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("sgd.tol", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SgdReport {
    pub alphas: Vec<f64>,
    pub initial: f64,
    pub final_value: f64,
    /// `T` after each epoch, rejected epochs included.
    pub history: Vec<f64>,
    pub epochs: usize,
    pub final_step: f64,
    pub converged: bool,
}

/// Mini-batch SGD on `T` starting from the twin's coefficients. Batches are
/// groups of whole time rows, shuffled every epoch. Performs no twin PDE solve.
pub fn sgd_pretrain(twin: &TwinModel, data: &TrainData, config: &SgdConfig, seed: u64) -> Result<SgdReport> {
    config.validate()?;
    let grid = data.gray.grid().clone();
    let (m, n) = (grid.m(), grid.n());
    let mut probe = twin.clone();
    let mut alphas = twin.dict().alphas().to_vec();
    let t0 = truncation_error(&probe, &data.gray, &data.control, &data.weights, None)?;
    let mut step = match config.step {
        Some(s) => s,
        None => {
            let (_, g) = truncation_gradient(&probe, &data.gray, &data.control, &data.weights, None)?;
            let gg: f64 = g.iter().map(|v| v * v).sum();
            if gg > 0.0 {
                t0 / gg
            } else {
                0.0
            }
        }
    };
    let adaptive = config.step.is_none();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (1..m).collect();
    let per_batch = if config.batch_rows == 0 {
        rows.len()
    } else {
        config.batch_rows.min(rows.len())
    };
    let mut current = t0;
    let mut history = Vec::new();
    let mut converged = t0 == 0.0 || step == 0.0;
    let mut epochs = 0;
    while !converged && epochs < config.epochs {
        epochs += 1;
        let start = alphas.clone();
        rows.shuffle(&mut rng);
        let mut failed = false;
        for batch in rows.chunks(per_batch) {
            let mut mask = Mask::empty(&grid);
            for &i in batch {
                for j in 0..n {
                    mask.set(i, j, true);
                }
            }
            probe.set_alphas(&alphas)?;
            match truncation_gradient(&probe, &data.gray, &data.control, &data.weights, Some(&mask)) {
                Ok((_, g)) => {
                    for (a, gi) in alphas.iter_mut().zip(&g) {
                        *a -= step * gi;
                    }
                }
                Err(e) if e.is_numerical() && adaptive => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        probe.set_alphas(&alphas)?;
        let value = if failed {
            f64::INFINITY
        } else {
            match truncation_error(&probe, &data.gray, &data.control, &data.weights, None) {
                Ok(v) => v,
                Err(e) if e.is_numerical() && adaptive => f64::INFINITY,
                Err(e) => return Err(e),
            }
        };
        history.push(value);
        if adaptive {
            if value < current {
                let rel = (current - value) / current;
                current = value;
                step *= 1.1;
                converged = rel <= config.tol || value == 0.0;
            } else {
                alphas = start;
                step *= 0.5;
                converged = step == 0.0;
            }
        } else {
            if !(value <= 10.0 * current) {
                return Err(Error::Diverged(format!(
                    "truncation error rose from {current:.3e} to {value:.3e} in epoch {epochs} at step {step:.3e}"
                )));
            }
            let rel = (current - value).abs() / current.max(f64::MIN_POSITIVE);
            current = value;
            converged = rel <= config.tol;
        }
    }
    Ok(SgdReport {
        alphas,
        initial: t0,
        final_value: current,
        history,
        epochs,
        final_step: step,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::realizable;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_step_leaves_alpha_unchanged() {
        let (twin, data, _) = realizable();
        let cfg = SgdConfig {
            step: Some(0.0),
            epochs: 3,
            ..Default::default()
        };
        let r = sgd_pretrain(&twin, &data, &cfg, 1).unwrap();
        assert_eq!(r.alphas, twin.dict().alphas());
    }

    #[test]
    fn full_batch_epoch_is_one_gradient_step() {
        let (twin, data, _) = realizable();
        let cfg = SgdConfig {
            step: Some(0.5),
            batch_rows: 0,
            epochs: 1,
            ..Default::default()
        };
        let r = sgd_pretrain(&twin, &data, &cfg, 1).unwrap();
        let (_, g) = truncation_gradient(&twin, &data.gray, &data.control, &data.weights, None).unwrap();
        for ((a, a0), gi) in r.alphas.iter().zip(twin.dict().alphas()).zip(&g) {
            assert_relative_eq!(*a, a0 - 0.5 * gi, epsilon = 1e-14);
        }
    }

    #[test]
    fn auto_step_reduces_truncation_error_without_solves() {
        let (twin, data, _) = realizable();
        let r = sgd_pretrain(&twin, &data, &SgdConfig::default(), 3).unwrap();
        assert!(r.final_value <= 0.01 * r.initial, "{} -> {}", r.initial, r.final_value);
        assert_eq!(twin.solves(), 0);
    }

    #[test]
    fn huge_fixed_step_is_reported_as_divergence() {
        let (twin, data, _) = realizable();
        let cfg = SgdConfig {
            step: Some(1e9),
            ..Default::default()
        };
        let err = sgd_pretrain(&twin, &data, &cfg, 0).unwrap_err();
        assert!(err.is_numerical());
    }
}
