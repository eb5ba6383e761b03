//! Comparisons against the exact gray-box flux. Only built with the `oracle` feature.

use alloc::vec::Vec;

use crate::basis::Dictionary;
use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::graybox::{graybox_solve, FluxKind, GrayBoxCase};
use crate::scheme::{self, ScalarFlux};

/// One sample of the exact and inferred flux.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FluxSample {
    pub u: f64,
    pub f_true: f64,
    pub f_twin: f64,
    pub df_true: f64,
    pub df_twin: f64,
    pub in_range: bool,
}

/// Samples both fluxes at `samples` evenly spaced points of `plot_range`,
/// flagging those inside `range`.
pub fn flux_compare(
    dict: &Dictionary,
    kind: FluxKind,
    range: (f64, f64),
    plot_range: (f64, f64),
    samples: usize,
) -> Vec<FluxSample> {
    let (a, b) = plot_range;
    let h = if samples > 1 { (b - a) / (samples - 1) as f64 } else { 0.0 };
    (0..samples)
        .map(|k| {
            let u = if k + 1 == samples { b } else { a + h * k as f64 };
            let (f_true, df_true) = kind.eval(u);
            let e = dict.eval_scalar(u);
            FluxSample {
                u,
                f_true,
                f_twin: e.f,
                df_true,
                df_twin: e.df,
                in_range: u >= range.0 && u <= range.1,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FluxRecovery {
    pub range: (f64, f64),
    /// `|dF~ - dF|_2 / |dF|_2` on the range, trapezoid in `u`.
    pub derivative_rel_l2: f64,
    /// Mean of `F~ - F` on the range.
    pub offset: f64,
    /// `max - min` of `F~ - F` on the range.
    pub offset_spread: f64,
    /// Spread relative to the range of `F` over the same interval.
    pub offset_spread_rel: f64,
}

/// Derivative error and constant-offset diagnostic on `range`.
pub fn flux_recovery_report(dict: &Dictionary, kind: FluxKind, range: (f64, f64), samples: usize) -> Result<FluxRecovery> {
    if !(range.1 > range.0) || samples < 2 {
        return Err(Error::invalid("range", "need u_max > u_min and at least two samples"));
    }
    let pts = flux_compare(dict, kind, range, range, samples);
    let h = (range.1 - range.0) / (samples - 1) as f64;
    let (mut num, mut den, mut mean) = (0.0, 0.0, 0.0);
    let (mut dlo, mut dhi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut flo, mut fhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (k, p) in pts.iter().enumerate() {
        let w = if k == 0 || k + 1 == samples { 0.5 * h } else { h };
        let e = p.df_twin - p.df_true;
        num += w * e * e;
        den += w * p.df_true * p.df_true;
        let d = p.f_twin - p.f_true;
        mean += w * d;
        dlo = dlo.min(d);
        dhi = dhi.max(d);
        flo = flo.min(p.f_true);
        fhi = fhi.max(p.f_true);
    }
    let derivative_rel_l2 = if den > 0.0 {
        libm::sqrt(num / den)
    } else {
        libm::sqrt(num)
    };
    let spread = dhi - dlo;
    Ok(FluxRecovery {
        range,
        derivative_rel_l2,
        offset: mean / (range.1 - range.0),
        offset_spread: spread,
        offset_spread_rel: if fhi > flo { spread / (fhi - flo) } else { spread },
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonotonicitySweep {
    pub eps: Vec<f64>,
    /// `max |u~ - u|` over the space-time grid for each perturbation.
    pub sup_mismatch: Vec<f64>,
    pub non_decreasing: bool,
}

struct Shifted {
    kind: FluxKind,
    eps: f64,
}

impl ScalarFlux for Shifted {
    fn eval(&self, u: f64) -> (f64, f64) {
        let (f, df) = self.kind.eval(u);
        (f + self.eps * u, df + self.eps)
    }
}

/// Solves with `dF/du + eps` for each `eps` on the gray-box scheme and
/// measures the sup-norm distance to the unperturbed gray-box solution.
pub fn monotonicity_sweep(case: &GrayBoxCase, control: &ControlField, eps: &[f64]) -> Result<MonotonicitySweep> {
    let gray = graybox_solve(case, control)?;
    let setup = case.setup()?;
    let mut sup = Vec::with_capacity(eps.len());
    for &e in eps {
        let flux = Shifted { kind: case.flux, eps: e };
        let traj = scheme::run_explicit(&setup, &flux, control, setup.initial(), 0, setup.total_steps())?;
        let field = setup.to_field(&traj.output_rows(&setup))?;
        let d = field
            .values()
            .iter()
            .zip(gray.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        sup.push(d);
    }
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[a].abs().total_cmp(&eps[b].abs()));
    let non_decreasing = order.windows(2).all(|w| sup[w[0]] <= sup[w[1]]);
    Ok(MonotonicitySweep {
        eps: eps.to_vec(),
        sup_mismatch: sup,
        non_decreasing,
    })
}
