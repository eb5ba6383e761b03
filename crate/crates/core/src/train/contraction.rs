//! Numerical check of the mismatch bound for contractive twins.
//!
//! The step map is measured on mean-zero perturbations: a conservative
//! periodic scheme carries the constant mode through unchanged, and the
//! difference between two solutions with the same initial mass and source
//! never leaves the mean-zero subspace.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainData;
use crate::error::{Error, Result};
use crate::tape::timestep_adjoint;
use crate::twin::{cells_of, mismatch, truncation_error, twin_solve, TwinModel, TwinSteps, Want};

/// Gap below one that `beta` must leave for the bound to be asserted.
pub const BETA_MARGIN: f64 = 0.01;
const PAIRS: usize = 64;
const POWER_ITERS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContractionReport {
    /// Largest ratio over random state pairs.
    pub beta_pairs: f64,
    /// Largest power-iteration estimate over the output intervals.
    pub beta_power: f64,
    pub beta: f64,
    pub mismatch: f64,
    pub truncation: f64,
    /// `beta + margin < 1`.
    pub applicable: bool,
    /// `T / (1 - beta)`.
    pub bound: f64,
    /// `M <= T / (1 - beta)`; `None` when not applicable.
    pub holds: Option<bool>,
    /// `T / (1 - sqrt(beta))^2`, from the triangle inequality on unsquared norms.
    pub sqrt_bound: f64,
    pub sqrt_holds: Option<bool>,
}

/// Estimates the contraction factor of the twin's one-interval map in the
/// weighted norm and compares `M` with `T / (1 - beta)`.
pub fn contraction_check(twin: &TwinModel, data: &TrainData, seed: u64) -> Result<ContractionReport> {
    let w = &data.weights;
    if !w.is_time_independent() {
        return Err(Error::invalid("weights", "the bound needs time-independent quadrature weights"));
    }
    let grid = data.gray.grid();
    let (m, n) = (grid.m(), grid.n());
    let nc = n - 1;
    // the duplicated periodic node adds its weight to cell 0
    let mut cw: Vec<f64> = (0..nc).map(|j| w.at(0, j)).collect();
    cw[0] += w.at(0, n - 1);
    let norm2 = |v: &[f64]| v.iter().zip(&cw).map(|(x, c)| c * x * x).sum::<f64>();
    let project = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    };
    let sub = twin.setup().substeps();
    let map = |start: &[f64], i: usize| -> Result<Vec<f64>> {
        Ok(twin.advance(&data.control, start, i * sub, sub)?.state(sub).to_vec())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = data.gray.range();
    let scale = (hi - lo).max(1e-3);

    let mut beta_pairs: f64 = 0.0;
    for _ in 0..PAIRS {
        let i = rng.random_range(0..m - 1);
        let a = cells_of(&data.gray, i).to_vec();
        let amp = scale * libm::pow(10.0, rng.random_range(-4.0..-1.0));
        let mut v: Vec<f64> = (0..nc).map(|_| rng.random_range(-1.0..1.0)).collect();
        project(&mut v);
        let b: Vec<f64> = a.iter().zip(&v).map(|(x, d)| x + amp * d).collect();
        let ga = map(&a, i)?;
        let gb = map(&b, i)?;
        let diff: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| x - y).collect();
        let den = norm2(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        if den > 0.0 {
            beta_pairs = beta_pairs.max(norm2(&diff) / den);
        }
    }

    // power iteration on W^-1 J^T W J over each interval
    let mut beta_power: f64 = 0.0;
    let zero_params = vec![0.0; twin.dict().len() + data.control.dofs()];
    for i in 0..m - 1 {
        let a = cells_of(&data.gray, i).to_vec();
        let traj = twin.advance(&data.control, &a, i * sub, sub)?;
        let steps = TwinSteps::new(
            twin.setup(),
            twin.dict(),
            &data.control,
            twin.scheme(),
            &traj.states,
            i * sub,
            Want { alpha: false, control: false },
        )?;
        let mut v: Vec<f64> = (0..nc).map(|_| rng.random_range(-1.0..1.0)).collect();
        project(&mut v);
        let mut est = 0.0;
        for _ in 0..POWER_ITERS {
            let nv = libm::sqrt(norm2(&v));
            if nv == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let jv = tangent(twin, &data.control, &a, &v, i * sub, sub)?;
            est = norm2(&jv);
            let seed_vec: Vec<f64> = jv.iter().zip(&cw).map(|(x, c)| c * x).collect();
            let adj = timestep_adjoint(
                &steps,
                |t, buf| {
                    if t == sub {
                        buf.iter_mut().zip(&seed_vec).for_each(|(b, s)| *b += s);
                    }
                },
                &zero_params,
            )?;
            v = adj.d_initial.iter().zip(&cw).map(|(x, c)| x / c).collect();
            project(&mut v);
        }
        beta_power = beta_power.max(est);
    }

    let beta = beta_pairs.max(beta_power);
    let sol = twin_solve(twin, &data.control)?;
    let mis = mismatch(&sol, &data.gray, w, None)?;
    let tru = truncation_error(twin, &data.gray, &data.control, w, None)?;
    let applicable = beta + BETA_MARGIN < 1.0;
    let bound = if beta < 1.0 { tru / (1.0 - beta) } else { f64::INFINITY };
    let sq = 1.0 - libm::sqrt(beta.max(0.0));
    let sqrt_bound = if beta < 1.0 { tru / (sq * sq) } else { f64::INFINITY };
    Ok(ContractionReport {
        beta_pairs,
        beta_power,
        beta,
        mismatch: mis,
        truncation: tru,
        applicable,
        bound,
        holds: applicable.then_some(mis <= bound),
        sqrt_bound,
        sqrt_holds: applicable.then_some(mis <= sqrt_bound),
    })
}

/// `J v` of the interval map by central differences.
fn tangent(
    twin: &TwinModel,
    control: &crate::control::ControlField,
    a: &[f64],
    v: &[f64],
    first: usize,
    sub: usize,
) -> Result<Vec<f64>> {
    let h = 1e-6;
    let plus: Vec<f64> = a.iter().zip(v).map(|(x, d)| x + h * d).collect();
    let minus: Vec<f64> = a.iter().zip(v).map(|(x, d)| x - h * d).collect();
    let gp = twin.advance(control, &plus, first, sub)?;
    let gm = twin.advance(control, &minus, first, sub)?;
    Ok(gp.state(sub).iter().zip(gm.state(sub)).map(|(p, q)| (p - q) / (2.0 * h)).collect())
}
