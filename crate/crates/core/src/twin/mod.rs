//! The twin model: the gray box's discretization with the flux replaced by a
//! sigmoid dictionary, plus its discrete adjoint.

mod adjoint;
mod gradient;
mod implicit;
mod objective;

pub use gradient::{
    adjoint_gradients, fd_component, fd_gradient, grad_mismatch_alpha, integrated_gradient_error, grad_objective_control,
    truncation_gradient, GradientReport, Gradients, Want,
};
pub use objective::Objective;
pub(crate) use adjoint::TwinSteps;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::basis::Dictionary;
use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::field::{Mask, QuadratureWeights, SpaceTimeField};
use crate::scheme::{self, Setup, Trajectory};

/// Time-marching scheme of the twin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    /// Same scheme as the gray box.
    #[default]
    RusanovForwardEuler,
    /// Linearly implicit first-order upwind, `(I + r L(a(u^n))) u^{n+1} = u^n + dt q`
    /// with `(L v)_j = a_j v_j - a_{j-1} v_{j-1}` and `a = F'(u^n)`.
    ImplicitUpwindLinear,
}

/// Counts full twin PDE solves. Clones share the count.
#[derive(Debug, Clone, Default)]
pub struct SolveCounter(Arc<AtomicUsize>);

impl SolveCounter {
    pub fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone)]
pub struct TwinModel {
    dict: Dictionary,
    setup: Setup,
    scheme: Scheme,
    counter: SolveCounter,
}

impl TwinModel {
    pub fn new(dict: Dictionary, setup: Setup) -> Self {
        TwinModel {
            dict,
            setup,
            scheme: Scheme::default(),
            counter: SolveCounter::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Shares `counter` instead of a private one.
    pub fn with_counter(mut self, counter: SolveCounter) -> Self {
        self.counter = counter;
        self
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn setup(&self) -> &Setup {
        &self.setup
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn counter(&self) -> &SolveCounter {
        &self.counter
    }

    /// Twin PDE solves so far.
    pub fn solves(&self) -> usize {
        self.counter.get()
    }

    pub fn set_alphas(&mut self, alphas: &[f64]) -> Result<()> {
        self.dict.set_alphas(alphas)
    }

    /// Same setup, scheme and counter with another dictionary.
    pub fn with_dict(&self, dict: Dictionary) -> Self {
        TwinModel {
            dict,
            setup: self.setup.clone(),
            scheme: self.scheme,
            counter: self.counter.clone(),
        }
    }

    /// Steps `first .. first + count` from `start` without counting a solve.
    pub(crate) fn advance(
        &self,
        control: &ControlField,
        start: &[f64],
        first: usize,
        count: usize,
    ) -> Result<Trajectory> {
        match self.scheme {
            Scheme::RusanovForwardEuler => {
                scheme::run_explicit(&self.setup, &self.dict, control, start, first, count)
            }
            Scheme::ImplicitUpwindLinear => {
                implicit::run(&self.setup, &self.dict, control, start, first, count)
            }
        }
    }

    /// One full, counted PDE solve.
    pub(crate) fn trajectory(&self, control: &ControlField) -> Result<Trajectory> {
        control.validate(self.setup.grid())?;
        self.counter.bump();
        self.advance(control, self.setup.initial(), 0, self.setup.total_steps())
    }
}

/// Solves the twin PDE and returns its space-time solution.
pub fn twin_solve(twin: &TwinModel, control: &ControlField) -> Result<SpaceTimeField> {
    let traj = twin.trajectory(control)?;
    twin.setup.to_field(&traj.output_rows(&twin.setup))
}

fn check_grid(twin: &TwinModel, gray: &SpaceTimeField) -> Result<()> {
    if gray.grid() != twin.setup.grid() || gray.k() != 1 {
        return Err(Error::shape(
            alloc::format!("k=1 field on the twin's {}x{} grid", twin.setup.grid().m(), twin.setup.grid().n()),
            alloc::format!("k={} field on a {}x{} grid", gray.k(), gray.grid().m(), gray.grid().n()),
        ));
    }
    Ok(())
}

/// Distinct cell values of row `i`.
pub(crate) fn cells_of(field: &SpaceTimeField, i: usize) -> &[f64] {
    let n = field.grid().n();
    &field.row(0, i)[..n - 1]
}

/// One-interval defect `tau_ij = u_{i,j} - G(u_{i-1})_j` of the gray solution
/// under the twin's step operator; row 0 is zero. No PDE solve is counted.
pub fn residual_field(
    twin: &TwinModel,
    gray: &SpaceTimeField,
    control: &ControlField,
) -> Result<SpaceTimeField> {
    check_grid(twin, gray)?;
    control.validate(gray.grid())?;
    let grid = gray.grid();
    let (m, n) = (grid.m(), grid.n());
    let sub = twin.setup.substeps();
    let mut tau = vec![0.0; m * n];
    for i in 1..m {
        let traj = twin.advance(control, cells_of(gray, i - 1), (i - 1) * sub, sub)?;
        let end = traj.state(sub);
        let row = gray.row(0, i);
        for j in 0..n - 1 {
            tau[i * n + j] = row[j] - end[j];
        }
        tau[i * n + n - 1] = row[n - 1] - end[0];
    }
    SpaceTimeField::new(grid.clone(), 1, tau)
}

/// `sum_mask w (twin - gray)^2`.
pub fn mismatch(
    twin_sol: &SpaceTimeField,
    gray: &SpaceTimeField,
    weights: &QuadratureWeights,
    mask: Option<&Mask>,
) -> Result<f64> {
    let diff = twin_sol.difference(gray)?;
    crate::field::weighted_sq_norm(&diff, weights, mask)
}

/// `sum_mask w tau^2` from [`residual_field`].
pub fn truncation_error(
    twin: &TwinModel,
    gray: &SpaceTimeField,
    control: &ControlField,
    weights: &QuadratureWeights,
    mask: Option<&Mask>,
) -> Result<f64> {
    let tau = residual_field(twin, gray, control)?;
    crate::field::weighted_sq_norm(&tau, weights, mask)
}

/// Per-cell `(F, F', F'')` of the dictionary at `u`.
pub(crate) fn flux_table(dict: &Dictionary, u: &[f64], out: &mut Vec<(f64, f64, f64)>) {
    out.clear();
    out.extend(u.iter().map(|&v| {
        let e = dict.eval_scalar(v);
        (e.f, e.df, e.d2f)
    }));
}
