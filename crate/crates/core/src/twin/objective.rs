use alloc::vec;
use alloc::vec::Vec;

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::field::{Mask, QuadratureWeights, SpaceTimeField};

/// Objectives differentiable through the twin.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `int (u(T, x) - target)^2 dx`, trapezoid in space.
    TerminalQuadratic { target: f64 },
    /// `sum w (state_weight (u - target)^2 + control_weight c^2)`.
    SpaceTime {
        target: SpaceTimeField,
        weights: QuadratureWeights,
        state_weight: f64,
        control_weight: f64,
    },
    /// `sum_mask w (u - gray)^2`.
    Mismatch {
        gray: SpaceTimeField,
        weights: QuadratureWeights,
        mask: Option<Mask>,
    },
}

impl Objective {
    pub fn terminal(target: f64) -> Self {
        Objective::TerminalQuadratic { target }
    }

    fn check(&self, field: &SpaceTimeField) -> Result<()> {
        let (other, w) = match self {
            Objective::TerminalQuadratic { .. } => return Ok(()),
            Objective::SpaceTime { target, weights, .. } => (target, weights),
            Objective::Mismatch { gray, weights, .. } => (gray, weights),
        };
        other.check_same_shape(field)?;
        let g = field.grid();
        if w.shape() != (g.m(), g.n()) {
            return Err(Error::shape(
                alloc::format!("{}x{} weights", g.m(), g.n()),
                alloc::format!("{}x{}", w.shape().0, w.shape().1),
            ));
        }
        Ok(())
    }

    pub fn value(&self, field: &SpaceTimeField, control: &ControlField) -> Result<f64> {
        self.check(field)?;
        Ok(match self {
            Objective::TerminalQuadratic { target } => crate::graybox::terminal_quadratic(field, *target),
            Objective::SpaceTime {
                target,
                weights,
                state_weight,
                control_weight,
            } => {
                let diff = field.difference(target)?;
                let s = crate::field::weighted_sq_norm(&diff, weights, None)?;
                state_weight * s + control_weight * control_energy(weights, control)
            }
            Objective::Mismatch { gray, weights, mask } => {
                super::mismatch(field, gray, weights, mask.as_ref())?
            }
        })
    }

    /// `d xi / d u_ij` as an `M x N` array.
    pub fn state_grad(&self, field: &SpaceTimeField) -> Result<Vec<f64>> {
        self.check(field)?;
        let g = field.grid();
        let (m, n) = (g.m(), g.n());
        let mut out = vec![0.0; m * n];
        match self {
            Objective::TerminalQuadratic { target } => {
                let dx = g.dx();
                let last = field.row(0, m - 1);
                for j in 0..n {
                    let w = if j == 0 || j == n - 1 { 0.5 * dx } else { dx };
                    out[(m - 1) * n + j] = 2.0 * w * (last[j] - target);
                }
            }
            Objective::SpaceTime {
                target,
                weights,
                state_weight,
                ..
            } => {
                for (p, o) in out.iter_mut().enumerate() {
                    let (i, j) = (p / n, p % n);
                    *o = 2.0 * state_weight * weights.at(i, j) * (field.at(0, i, j) - target.at(0, i, j));
                }
            }
            Objective::Mismatch { gray, weights, mask } => {
                for (p, o) in out.iter_mut().enumerate() {
                    let (i, j) = (p / n, p % n);
                    if mask.as_ref().map_or(true, |mk| mk.contains(i, j)) {
                        *o = 2.0 * weights.at(i, j) * (field.at(0, i, j) - gray.at(0, i, j));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Explicit `d xi / d c`.
    pub fn control_grad(&self, control: &ControlField) -> Vec<f64> {
        let mut out = vec![0.0; control.dofs()];
        if let Objective::SpaceTime {
            weights,
            control_weight,
            ..
        } = self
        {
            match control {
                ControlField::Scalar { value } => out[0] = 2.0 * control_weight * value * weights.total(),
                ControlField::Grid { values } => {
                    for (o, (c, w)) in out.iter_mut().zip(values.iter().zip(weights.values())) {
                        *o = 2.0 * control_weight * w * c;
                    }
                }
            }
        }
        out
    }
}

fn control_energy(weights: &QuadratureWeights, control: &ControlField) -> f64 {
    match control {
        ControlField::Scalar { value } => value * value * weights.total(),
        ControlField::Grid { values } => values.iter().zip(weights.values()).map(|(c, w)| w * c * c).sum(),
    }
}
