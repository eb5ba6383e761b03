//! Step residuals of the twin schemes for [`timestep_adjoint`](crate::tape::timestep_adjoint).
//!
//! Parameters are laid out as `[alpha_0 .. alpha_{L-1}, c_0 .. c_{d-1}]`.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::{flux_table, implicit, Scheme};
use crate::basis::Dictionary;
use crate::control::ControlField;
use crate::error::Result;
use crate::scheme::Setup;
use crate::tape::{NodeId, StepResidual, Tape};

/// The Rusanov interface flux recorded once and replayed per interface.
pub(crate) struct RusanovKernel {
    tape: Tape,
    out: NodeId,
    grads: [f64; 6],
}

impl RusanovKernel {
    pub fn new(smooth_eps: f64) -> Result<Self> {
        let mut t = Tape::with_smooth_eps(smooth_eps);
        let u_l = t.input(0.0)?;
        let u_r = t.input(0.0)?;
        let f_l = t.input(0.0)?;
        let f_r = t.input(0.0)?;
        let a_l = t.input(0.0)?;
        let a_r = t.input(0.0)?;
        let half = t.constant(0.5)?;
        let sum = t.add(f_l, f_r)?;
        let avg = t.mul(half, sum)?;
        let abs_l = t.smooth_abs(a_l)?;
        let abs_r = t.smooth_abs(a_r)?;
        let speed = t.smooth_max(abs_l, abs_r)?;
        let jump = t.sub(u_r, u_l)?;
        let visc = t.mul(speed, jump)?;
        let half_visc = t.mul(half, visc)?;
        let out = t.sub(avg, half_visc)?;
        t.mark_output(out);
        Ok(RusanovKernel {
            tape: t,
            out,
            grads: [0.0; 6],
        })
    }

    /// Partials of `H` w.r.t. `(u_L, u_R, F_L, F_R, a_L, a_R)`.
    #[inline]
    pub fn partials(&mut self, inputs: [f64; 6]) -> Result<[f64; 6]> {
        self.tape.replay(&inputs)?;
        self.tape.backward_into(self.out, &mut self.grads)?;
        Ok(self.grads)
    }
}

/// What the backward sweep should accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub alpha: bool,
    pub control: bool,
}

impl Want {
    pub const ALPHA: Want = Want {
        alpha: true,
        control: false,
    };
    pub const CONTROL: Want = Want {
        alpha: false,
        control: true,
    };
    pub const BOTH: Want = Want {
        alpha: true,
        control: true,
    };
}

struct Scratch {
    kernel: RusanovKernel,
    table: Vec<(f64, f64, f64)>,
    g_u: Vec<f64>,
    cf: Vec<f64>,
    ca: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

/// Residual `F_{t+1} = x_{t+1} - G(x_t)` (explicit) or
/// `A(x_t) x_{t+1} - x_t - dt q` (implicit) over stored states.
pub(crate) struct TwinSteps<'a> {
    pub setup: &'a Setup,
    pub dict: &'a Dictionary,
    pub control: &'a ControlField,
    pub scheme: Scheme,
    /// `(steps + 1) x cells` states.
    pub states: &'a [f64],
    /// Global index of the first step.
    pub first: usize,
    pub want: Want,
    scratch: RefCell<Scratch>,
}

impl<'a> TwinSteps<'a> {
    pub fn new(
        setup: &'a Setup,
        dict: &'a Dictionary,
        control: &'a ControlField,
        scheme: Scheme,
        states: &'a [f64],
        first: usize,
        want: Want,
    ) -> Result<Self> {
        let nc = setup.cells();
        let l = dict.len();
        Ok(TwinSteps {
            setup,
            dict,
            control,
            scheme,
            states,
            first,
            want,
            scratch: RefCell::new(Scratch {
                kernel: RusanovKernel::new(setup.smooth_eps())?,
                table: Vec::with_capacity(nc),
                g_u: vec![0.0; nc],
                cf: vec![0.0; nc],
                ca: vec![0.0; nc],
                phi: vec![0.0; l],
                dphi: vec![0.0; l],
                diag: Vec::with_capacity(nc),
                off: Vec::with_capacity(nc),
            }),
        })
    }

    fn state(&self, t: usize) -> &[f64] {
        let nc = self.setup.cells();
        &self.states[t * nc..(t + 1) * nc]
    }

    fn explicit_apply(&self, step: usize, mu: &[f64], d_prev: &mut [f64], d_param: &mut [f64]) -> Result<()> {
        let nc = self.setup.cells();
        let r = self.setup.dt() / self.setup.dx();
        let u = self.state(step);
        let mut guard = self.scratch.borrow_mut();
        let sc = &mut *guard;
        flux_table(self.dict, u, &mut sc.table);
        for v in sc.g_u.iter_mut().chain(sc.cf.iter_mut()).chain(sc.ca.iter_mut()) {
            *v = 0.0;
        }
        for k in 0..nc {
            let kr = if k + 1 == nc { 0 } else { k + 1 };
            let hbar = r * (mu[kr] - mu[k]);
            if hbar == 0.0 {
                continue;
            }
            let (f_l, a_l, _) = sc.table[k];
            let (f_r, a_r, _) = sc.table[kr];
            let p = sc.kernel.partials([u[k], u[kr], f_l, f_r, a_l, a_r])?;
            sc.g_u[k] += hbar * p[0];
            sc.g_u[kr] += hbar * p[1];
            sc.cf[k] += hbar * p[2];
            sc.cf[kr] += hbar * p[3];
            sc.ca[k] += hbar * p[4];
            sc.ca[kr] += hbar * p[5];
        }
        // F = x' - G(x): (dF/dx)^T mu = -(dG/dx)^T mu
        for j in 0..nc {
            let (_, df, d2f) = sc.table[j];
            d_prev[j] -= mu[j] + sc.g_u[j] + sc.cf[j] * df + sc.ca[j] * d2f;
        }
        let l = self.dict.len();
        if self.want.alpha && l > 0 {
            for j in 0..nc {
                if sc.cf[j] == 0.0 && sc.ca[j] == 0.0 {
                    continue;
                }
                self.dict.basis_partials(u[j], &mut sc.phi, &mut sc.dphi);
                for i in 0..l {
                    d_param[i] -= sc.cf[j] * sc.phi[i] + sc.ca[j] * sc.dphi[i];
                }
            }
        }
        Ok(())
    }

    fn implicit_apply(&self, step: usize, mu: &[f64], d_prev: &mut [f64], d_param: &mut [f64]) -> Result<()> {
        let nc = self.setup.cells();
        let r = self.setup.dt() / self.setup.dx();
        let u = self.state(step);
        let next = self.state(step + 1);
        let mut guard = self.scratch.borrow_mut();
        let sc = &mut *guard;
        flux_table(self.dict, u, &mut sc.table);
        // row j of A x' holds r (a_j x'_j - a_{j-1} x'_{j-1}); a_k feeds rows k and k+1
        for k in 0..nc {
            let kr = if k + 1 == nc { 0 } else { k + 1 };
            sc.cf[k] = r * next[k] * (mu[k] - mu[kr]);
        }
        for j in 0..nc {
            let d2f = sc.table[j].2;
            d_prev[j] += sc.cf[j] * d2f - mu[j];
        }
        let l = self.dict.len();
        if self.want.alpha && l > 0 {
            for j in 0..nc {
                if sc.cf[j] == 0.0 {
                    continue;
                }
                self.dict.basis_partials(u[j], &mut sc.phi, &mut sc.dphi);
                for i in 0..l {
                    d_param[i] += sc.cf[j] * sc.dphi[i];
                }
            }
        }
        Ok(())
    }
}

impl StepResidual for TwinSteps<'_> {
    fn num_steps(&self) -> usize {
        self.states.len() / self.setup.cells() - 1
    }

    fn state_dim(&self) -> usize {
        self.setup.cells()
    }

    fn param_dim(&self) -> usize {
        self.dict.len() + self.control.dofs()
    }

    fn solve_transposed(&self, step: usize, rhs: &mut [f64]) -> Result<()> {
        match self.scheme {
            Scheme::RusanovForwardEuler => Ok(()),
            Scheme::ImplicitUpwindLinear => {
                let mut guard = self.scratch.borrow_mut();
                let sc = &mut *guard;
                implicit::coefficients(self.setup, self.dict, self.state(step), &mut sc.diag, &mut sc.off);
                implicit::solve_cyclic_lower_transposed(&sc.diag, &sc.off, rhs, self.first + step)
            }
        }
    }

    fn transpose_apply(&self, step: usize, mu: &[f64], d_prev: &mut [f64], d_param: &mut [f64]) -> Result<()> {
        match self.scheme {
            Scheme::RusanovForwardEuler => self.explicit_apply(step, mu, d_prev, d_param)?,
            Scheme::ImplicitUpwindLinear => self.implicit_apply(step, mu, d_prev, d_param)?,
        }
        if self.want.control {
            let l = self.dict.len();
            let dt = self.setup.dt();
            let grad = &mut d_param[l..];
            for (j, &m) in mu.iter().enumerate() {
                self.setup.source_adjoint(self.control, self.first + step, j, -dt * m, grad);
            }
        }
        Ok(())
    }
}
