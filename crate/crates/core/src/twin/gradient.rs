use alloc::vec;
use alloc::vec::Vec;

pub use super::adjoint::Want;
use super::adjoint::TwinSteps;
use super::{cells_of, check_grid, Objective, TwinModel};
use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::field::{Mask, QuadratureWeights, SpaceTimeField};
use crate::tape::timestep_adjoint;

/// Objective value with its adjoint gradients from one forward and one backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub value: f64,
    /// `d xi / d alpha`, zeros unless requested.
    pub d_alpha: Vec<f64>,
    /// `d xi / d c` in the control's layout, zeros unless requested.
    pub d_control: Vec<f64>,
    /// The twin solution the gradient was taken at.
    pub field: SpaceTimeField,
}

pub fn adjoint_gradients(
    twin: &TwinModel,
    objective: &Objective,
    control: &ControlField,
    want: Want,
) -> Result<Gradients> {
    let setup = twin.setup();
    let traj = twin.trajectory(control)?;
    let field = setup.to_field(&traj.output_rows(setup))?;
    let value = objective.value(&field, control)?;
    let node = objective.state_grad(&field)?;
    let n = setup.grid().n();
    let sub = setup.substeps();
    let l = twin.dict().len();

    let steps = TwinSteps::new(setup, twin.dict(), control, twin.scheme(), &traj.states, 0, want)?;
    let mut seed = vec![0.0; l + control.dofs()];
    if want.control {
        seed[l..].copy_from_slice(&objective.control_grad(control));
    }
    let adj = timestep_adjoint(
        &steps,
        |t, buf| {
            if t % sub == 0 {
                add_row_seed(&node[(t / sub) * n..(t / sub + 1) * n], buf);
            }
        },
        &seed,
    )?;
    let mut d_alpha = adj.d_params;
    let d_control = d_alpha.split_off(l);
    Ok(Gradients {
        value,
        d_alpha,
        d_control,
        field,
    })
}

/// Folds a node row (with the duplicated periodic node) into a cell adjoint.
fn add_row_seed(row: &[f64], buf: &mut [f64]) {
    let n = row.len();
    for j in 0..n - 1 {
        buf[j] += row[j];
    }
    buf[0] += row[n - 1];
}

/// `(M, dM/dalpha)` for the mismatch against `gray` on `mask`.
pub fn grad_mismatch_alpha(
    twin: &TwinModel,
    gray: &SpaceTimeField,
    control: &ControlField,
    weights: &QuadratureWeights,
    mask: Option<&Mask>,
) -> Result<(f64, Vec<f64>)> {
    check_grid(twin, gray)?;
    let obj = Objective::Mismatch {
        gray: gray.clone(),
        weights: weights.clone(),
        mask: mask.cloned(),
    };
    let g = adjoint_gradients(twin, &obj, control, Want::ALPHA)?;
    Ok((g.value, g.d_alpha))
}

/// `(xi, d xi / d c)` over every control degree of freedom.
pub fn grad_objective_control(
    twin: &TwinModel,
    objective: &Objective,
    control: &ControlField,
) -> Result<(f64, Vec<f64>)> {
    let g = adjoint_gradients(twin, objective, control, Want::CONTROL)?;
    Ok((g.value, g.d_control))
}

/// `(T, dT/dalpha)` for the integrated truncation error. Only rows touched by
/// `mask` are advanced; no full PDE solve is performed.
pub fn truncation_gradient(
    twin: &TwinModel,
    gray: &SpaceTimeField,
    control: &ControlField,
    weights: &QuadratureWeights,
    mask: Option<&Mask>,
) -> Result<(f64, Vec<f64>)> {
    check_grid(twin, gray)?;
    control.validate(gray.grid())?;
    let setup = twin.setup();
    let (m, n) = (gray.grid().m(), gray.grid().n());
    let sub = setup.substeps();
    let l = twin.dict().len();
    let mut value = 0.0;
    let mut grad = vec![0.0; l];
    let mut seed_row = vec![0.0; n];
    let zero_params = vec![0.0; l + control.dofs()];
    for i in 1..m {
        if let Some(mk) = mask {
            if !(0..n).any(|j| mk.contains(i, j)) {
                continue;
            }
        }
        let first = (i - 1) * sub;
        let traj = twin.advance(control, cells_of(gray, i - 1), first, sub)?;
        let end = traj.state(sub);
        let row = gray.row(0, i);
        for j in 0..n {
            let on = mask.map_or(true, |mk| mk.contains(i, j));
            let tau = row[j] - end[if j == n - 1 { 0 } else { j }];
            let w = weights.at(i, j);
            seed_row[j] = if on { -2.0 * w * tau } else { 0.0 };
            if on {
                value += w * tau * tau;
            }
        }
        let steps = TwinSteps::new(setup, twin.dict(), control, twin.scheme(), &traj.states, first, Want::ALPHA)?;
        let adj = timestep_adjoint(
            &steps,
            |t, buf| {
                if t == sub {
                    add_row_seed(&seed_row, buf);
                }
            },
            &zero_params,
        )?;
        for (g, d) in grad.iter_mut().zip(&adj.d_params[..l]) {
            *g += d;
        }
    }
    Ok((value, grad))
}

/// Central difference `(f(x + delta e_i) - f(x - delta e_i)) / (2 delta)`.
pub fn fd_component<F>(mut f: F, x: &[f64], i: usize, delta: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    probe[i] = x[i] + delta;
    let plus = f(&probe)?;
    probe[i] = x[i] - delta;
    let minus = f(&probe)?;
    Ok((plus - minus) / (2.0 * delta))
}

/// Central differences for every component; `2 len(x)` evaluations.
pub fn fd_gradient<F>(mut f: F, x: &[f64], delta: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    (0..x.len()).map(|i| fd_component(&mut f, x, i, delta)).collect()
}

/// `sum w (g/w - h/w)^2` over a full-grid control gradient. Dividing by the
/// node weight turns a per-node gradient into a density that converges under
/// refinement.
pub fn integrated_gradient_error(g: &[f64], h: &[f64], weights: &QuadratureWeights) -> Result<f64> {
    let w = weights.values();
    if g.len() != w.len() || h.len() != w.len() {
        return Err(Error::shape(
            alloc::format!("{} gradient entries", w.len()),
            alloc::format!("{} and {}", g.len(), h.len()),
        ));
    }
    Ok(g.iter().zip(h).zip(w).map(|((a, b), wi)| (a - b) * (a - b) / wi).sum())
}

/// Adjoint gradient next to a finite-difference oracle on selected components.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientReport {
    pub gradient: Vec<f64>,
    pub components: Vec<usize>,
    pub oracle: Option<Vec<f64>>,
    /// Per checked component: relative error, or absolute error where the oracle is zero.
    pub errors: Vec<f64>,
    pub max_rel_err: f64,
}

impl GradientReport {
    pub fn new(gradient: Vec<f64>, components: Vec<usize>, oracle: Option<Vec<f64>>) -> Result<Self> {
        if let Some(&bad) = components.iter().find(|&&c| c >= gradient.len()) {
            return Err(Error::invalid(
                "components",
                alloc::format!("index {bad} out of range for {} controls", gradient.len()),
            ));
        }
        let errors: Vec<f64> = match &oracle {
            None => Vec::new(),
            Some(o) => {
                if o.len() != components.len() {
                    return Err(Error::shape(
                        alloc::format!("{} oracle values", components.len()),
                        alloc::format!("{}", o.len()),
                    ));
                }
                components
                    .iter()
                    .zip(o)
                    .map(|(&c, &fd)| {
                        let diff = (gradient[c] - fd).abs();
                        if fd == 0.0 {
                            diff
                        } else {
                            diff / fd.abs()
                        }
                    })
                    .collect()
            }
        };
        let max_rel_err = errors.iter().fold(0.0f64, |m, &e| m.max(e));
        Ok(GradientReport {
            gradient,
            components,
            oracle,
            errors,
            max_rel_err,
        })
    }
}
