//! First-order finite-volume machinery shared by the gray box and the twin.
//!
//! The periodic domain has `N - 1` cells; node `j < N - 1` carries cell `j`
//! and node `N - 1` repeats cell 0. Each output interval is split into a
//! fixed number of forward-Euler substeps. Controls are linear in time
//! between output rows; the source of cell 0 averages nodes 0 and `N - 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::field::{Grid, SpaceTimeField};
use crate::math;
use crate::tape::DEFAULT_SMOOTH_EPS;

/// A scalar flux with its derivative.
pub trait ScalarFlux {
    /// `(F(u), F'(u))`.
    fn eval(&self, u: f64) -> (f64, f64);
}

impl ScalarFlux for crate::basis::Dictionary {
    #[inline]
    fn eval(&self, u: f64) -> (f64, f64) {
        let e = self.eval_scalar(u);
        (e.f, e.df)
    }
}

/// Everything about a run except the flux: grid, initial state, time substeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    grid: Grid,
    initial: Vec<f64>,
    substeps: usize,
    smooth_eps: f64,
}

impl Setup {
    /// `initial` holds one value per cell (`N - 1` values).
    pub fn new(grid: Grid, initial: Vec<f64>, substeps: usize) -> Result<Self> {
        if initial.len() != grid.n() - 1 {
            return Err(Error::shape(
                format!("{} cell values", grid.n() - 1),
                format!("{}", initial.len()),
            ));
        }
        if substeps == 0 {
            return Err(Error::invalid("substeps", "need at least one substep"));
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: "initial condition".into(),
            });
        }
        Ok(Setup {
            grid,
            initial,
            substeps,
            smooth_eps: DEFAULT_SMOOTH_EPS,
        })
    }

    pub fn with_smooth_eps(mut self, eps: f64) -> Self {
        self.smooth_eps = eps;
        self
    }

    /// Initial state taken from row 0 of an observed field.
    pub fn from_field_initial(field: &SpaceTimeField, substeps: usize) -> Result<Self> {
        let n = field.grid().n();
        Setup::new(field.grid().clone(), field.row(0, 0)[..n - 1].to_vec(), substeps)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn smooth_eps(&self) -> f64 {
        self.smooth_eps
    }

    pub fn cells(&self) -> usize {
        self.grid.n() - 1
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    /// Internal time step.
    pub fn dt(&self) -> f64 {
        self.grid.dt() / self.substeps as f64
    }

    pub fn total_steps(&self) -> usize {
        (self.grid.m() - 1) * self.substeps
    }

    /// `(output row, theta)` of the substep starting at global step `s`.
    #[inline]
    pub(crate) fn step_time(&self, s: usize) -> (usize, f64) {
        let row = s / self.substeps;
        let k = s % self.substeps;
        (row, k as f64 / self.substeps as f64)
    }

    /// Source of `cell` at the start of global step `s`.
    #[inline]
    pub(crate) fn source(&self, control: &ControlField, s: usize, cell: usize) -> f64 {
        match control {
            ControlField::Scalar { value } => *value,
            ControlField::Grid { .. } => {
                let (row, theta) = self.step_time(s);
                let n = self.grid.n();
                let node = |i: usize| {
                    if cell == 0 {
                        0.5 * (control.at(n, i, 0) + control.at(n, i, n - 1))
                    } else {
                        control.at(n, i, cell)
                    }
                };
                let mut v = (1.0 - theta) * node(row);
                if theta > 0.0 {
                    v += theta * node(row + 1);
                }
                v
            }
        }
    }

    /// Adds `coef * d source(s, cell) / d c` into `grad` (control layout).
    #[inline]
    pub(crate) fn source_adjoint(
        &self,
        control: &ControlField,
        s: usize,
        cell: usize,
        coef: f64,
        grad: &mut [f64],
    ) {
        match control {
            ControlField::Scalar { .. } => grad[0] += coef,
            ControlField::Grid { .. } => {
                let (row, theta) = self.step_time(s);
                let n = self.grid.n();
                let mut put = |i: usize, w: f64| {
                    if cell == 0 {
                        grad[i * n] += 0.5 * w;
                        grad[i * n + n - 1] += 0.5 * w;
                    } else {
                        grad[i * n + cell] += w;
                    }
                };
                put(row, coef * (1.0 - theta));
                if theta > 0.0 {
                    put(row + 1, coef * theta);
                }
            }
        }
    }

    /// Expands per-output-row cell states into an `M x N` field.
    pub(crate) fn to_field(&self, rows: &[f64]) -> Result<SpaceTimeField> {
        let (m, n, nc) = (self.grid.m(), self.grid.n(), self.cells());
        let mut values = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &rows[i * nc..(i + 1) * nc];
            values.extend_from_slice(row);
            values.push(row[0]);
        }
        SpaceTimeField::new(self.grid.clone(), 1, values)
    }

    /// Courant number that an explicit step with wave speed bound `speed` would have.
    pub fn courant(&self, speed: f64) -> f64 {
        self.dt() * speed / self.dx()
    }
}

/// Substeps per output interval keeping `dt * speed / dx <= cfl`.
pub fn substeps_for(grid: &Grid, speed: f64, cfl: f64) -> usize {
    let needed = grid.dt() * speed.abs() / (cfl * grid.dx());
    (math::ceil(needed - 1e-12) as usize).max(1)
}

/// Rusanov numerical flux between a left and right state.
#[inline]
pub(crate) fn rusanov(u_l: f64, u_r: f64, f_l: f64, f_r: f64, a_l: f64, a_r: f64, eps: f64) -> f64 {
    let s = math::smooth_max(math::smooth_abs(a_l, eps), math::smooth_abs(a_r, eps), eps);
    0.5 * (f_l + f_r) - 0.5 * s * (u_r - u_l)
}

/// One explicit Rusanov / forward-Euler substep: `next = G(cur)`.
/// Returns the largest Courant number seen.
pub(crate) fn rusanov_step<F: ScalarFlux + ?Sized>(
    setup: &Setup,
    flux: &F,
    control: &ControlField,
    s: usize,
    cur: &[f64],
    next: &mut [f64],
    scratch: &mut Vec<(f64, f64)>,
) -> f64 {
    let nc = cur.len();
    let dt = setup.dt();
    let r = dt / setup.dx();
    let eps = setup.smooth_eps;
    scratch.clear();
    scratch.extend(cur.iter().map(|&u| flux.eval(u)));
    let mut max_speed: f64 = 0.0;
    // interface j+1/2 between cells j and j+1
    let mut h_left = {
        let l = nc - 1;
        let (fl, al) = scratch[l];
        let (fr, ar) = scratch[0];
        rusanov(cur[l], cur[0], fl, fr, al, ar, eps)
    };
    for j in 0..nc {
        let jr = if j + 1 == nc { 0 } else { j + 1 };
        let (fl, al) = scratch[j];
        let (fr, ar) = scratch[jr];
        max_speed = max_speed.max(al.abs()).max(ar.abs());
        let h_right = rusanov(cur[j], cur[jr], fl, fr, al, ar, eps);
        next[j] = cur[j] - r * (h_right - h_left) + dt * setup.source(control, s, j);
        h_left = h_right;
    }
    r * max_speed
}

/// All substep states of an explicit run, `(total_steps + 1) x cells`.
#[derive(Debug, Clone)]
pub(crate) struct Trajectory {
    pub states: Vec<f64>,
    pub cells: usize,
    pub max_courant: f64,
}

impl Trajectory {
    pub fn state(&self, s: usize) -> &[f64] {
        &self.states[s * self.cells..(s + 1) * self.cells]
    }

    /// Output rows (every `substeps`-th state).
    pub fn output_rows(&self, setup: &Setup) -> Vec<f64> {
        let m = setup.grid().m();
        let mut rows = Vec::with_capacity(m * self.cells);
        for i in 0..m {
            rows.extend_from_slice(self.state(i * setup.substeps()));
        }
        rows
    }
}

/// Explicit run from `start` over global steps `first..first + count`.
pub(crate) fn run_explicit<F: ScalarFlux + ?Sized>(
    setup: &Setup,
    flux: &F,
    control: &ControlField,
    start: &[f64],
    first: usize,
    count: usize,
) -> Result<Trajectory> {
    let nc = start.len();
    let mut states = vec![0.0; (count + 1) * nc];
    states[..nc].copy_from_slice(start);
    let mut scratch = Vec::with_capacity(nc);
    let mut max_courant: f64 = 0.0;
    for k in 0..count {
        let (done, rest) = states.split_at_mut((k + 1) * nc);
        let cur = &done[k * nc..];
        let next = &mut rest[..nc];
        let courant = rusanov_step(setup, flux, control, first + k, cur, next, &mut scratch);
        if !courant.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: first + k });
        }
        if courant > 1.0 {
            let required = math::ceil(setup.substeps() as f64 * courant) as usize;
            return Err(Error::CflViolation {
                step: first + k,
                courant,
                required_substeps: required,
            });
        }
        max_courant = max_courant.max(courant);
    }
    Ok(Trajectory {
        states,
        cells: nc,
        max_courant,
    })
}

/// Row sums `sum_j u_ij dx` over the distinct cells.
pub fn cell_mass(field: &SpaceTimeField) -> Vec<f64> {
    let grid = field.grid();
    let (m, n) = (grid.m(), grid.n());
    (0..m)
        .map(|i| field.row(0, i)[..n - 1].iter().sum::<f64>() * grid.dx())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::build_grid;

    struct Linear(f64);
    impl ScalarFlux for Linear {
        fn eval(&self, u: f64) -> (f64, f64) {
            (self.0 * u, self.0)
        }
    }

    #[test]
    fn substep_count_respects_cfl() {
        let g = build_grid(11, 65, 1.0, (0.0, 1.0)).unwrap();
        let n = substeps_for(&g, 1.0, 0.5);
        assert_eq!(n, 13);
        assert!(g.dt() / n as f64 / g.dx() <= 0.5);
        assert_eq!(substeps_for(&g, 0.0, 0.5), 1);
    }

    #[test]
    fn explicit_run_flags_cfl_violation() {
        let g = build_grid(3, 9, 1.0, (0.0, 1.0)).unwrap();
        let setup = Setup::new(g, vec![0.5; 8], 1).unwrap();
        let err = run_explicit(&setup, &Linear(1.0), &ControlField::scalar(0.0), setup.initial(), 0, 2)
            .unwrap_err();
        match err {
            Error::CflViolation {
                required_substeps, ..
            } => assert_eq!(required_substeps, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn source_interpolates_between_rows() {
        let g = build_grid(3, 4, 1.0, (0.0, 1.0)).unwrap();
        let setup = Setup::new(g.clone(), vec![0.0; 3], 4).unwrap();
        let mut values = vec![0.0; g.len()];
        values[g.index(0, 1)] = 1.0;
        values[g.index(1, 1)] = 3.0;
        values[g.index(0, 0)] = 2.0;
        values[g.index(0, 3)] = 4.0;
        let c = ControlField::Grid { values };
        assert_eq!(setup.source(&c, 0, 1), 1.0);
        assert_eq!(setup.source(&c, 2, 1), 2.0);
        assert_eq!(setup.source(&c, 4, 1), 3.0);
        assert_eq!(setup.source(&c, 0, 0), 3.0);

        let mut grad = vec![0.0; g.len()];
        setup.source_adjoint(&c, 1, 0, 1.0, &mut grad);
        assert_eq!(grad[g.index(0, 0)], 0.375);
        assert_eq!(grad[g.index(0, 3)], 0.375);
        assert_eq!(grad[g.index(1, 0)], 0.125);
        assert_eq!(grad.iter().sum::<f64>(), 1.0);
    }
}
