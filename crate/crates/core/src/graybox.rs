//! Reference simulators. Training code only ever sees their output fields.

use alloc::format;
use alloc::vec::Vec;

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::field::{Grid, SpaceTimeField};
use crate::math;
use crate::scheme::{self, ScalarFlux, Setup};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum FluxKind {
    BuckleyLeverett,
    LinearAdvection { speed: f64 },
    Burgers,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum InitialCondition {
    /// `offset + amplitude * sin(2 pi (x - x_lo) / L)`.
    Sine { amplitude: f64, offset: f64 },
    /// `height * exp(-((x - center) / width)^2)`.
    Gaussian { center: f64, width: f64, height: f64 },
    /// `left` for `x < jump_pos`, else `right`.
    Step { left: f64, right: f64, jump_pos: f64 },
}

impl InitialCondition {
    pub fn eval(&self, x: f64, domain: (f64, f64)) -> f64 {
        match *self {
            InitialCondition::Sine { amplitude, offset } => {
                let phase = (x - domain.0) / (domain.1 - domain.0);
                offset + amplitude * math::sin(2.0 * core::f64::consts::PI * phase)
            }
            InitialCondition::Gaussian {
                center,
                width,
                height,
            } => {
                let z = (x - center) / width;
                height * math::exp(-z * z)
            }
            InitialCondition::Step {
                left,
                right,
                jump_pos,
            } => {
                if x < jump_pos {
                    left
                } else {
                    right
                }
            }
        }
    }
}

impl FluxKind {
    #[inline]
    pub(crate) fn eval(&self, u: f64) -> (f64, f64) {
        match *self {
            FluxKind::BuckleyLeverett => {
                let v = 1.0 - u;
                let d = 1.0 + 2.0 * v * v;
                let f = u * u / d;
                let df = (2.0 * u * d + 4.0 * u * u * v) / (d * d);
                (f, df)
            }
            FluxKind::LinearAdvection { speed } => (speed * u, speed),
            FluxKind::Burgers => (0.5 * u * u, u),
        }
    }

    /// Upper bound of `|F'|` over `[lo, hi]`.
    pub(crate) fn max_speed(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            FluxKind::LinearAdvection { speed } => speed.abs(),
            FluxKind::Burgers => lo.abs().max(hi.abs()),
            FluxKind::BuckleyLeverett => {
                // fine sampling plus a small margin; F' is smooth on [0, 1]
                let samples = 2048;
                let mut best: f64 = 0.0;
                for k in 0..=samples {
                    let u = lo + (hi - lo) * k as f64 / samples as f64;
                    best = best.max(self.eval(u).1.abs());
                }
                best * 1.001
            }
        }
    }

    fn valid_range(&self) -> Option<(f64, f64)> {
        match self {
            FluxKind::BuckleyLeverett => Some((0.0, 1.0)),
            _ => None,
        }
    }
}

struct Truth(FluxKind);

impl ScalarFlux for Truth {
    #[inline]
    fn eval(&self, u: f64) -> (f64, f64) {
        self.0.eval(u)
    }
}

/// A gray-box run: flux, initial condition, grid and target Courant number.
/// Boundaries are always periodic.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrayBoxCase {
    pub flux: FluxKind,
    pub ic: InitialCondition,
    pub grid: Grid,
    pub cfl: f64,
}

impl GrayBoxCase {
    pub fn new(flux: FluxKind, ic: InitialCondition, grid: Grid, cfl: f64) -> Result<Self> {
        let case = GrayBoxCase { flux, ic, grid, cfl };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::invalid("cfl", format!("must lie in (0, 0.5], got {}", self.cfl)));
        }
        let cells = self.initial_cells();
        if let Some(p) = cells.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("initial condition at node {p}"),
            });
        }
        if let Some((lo, hi)) = self.flux.valid_range() {
            if let Some(v) = cells.iter().find(|&&v| v < lo || v > hi) {
                return Err(Error::invalid(
                    "ic",
                    format!("value {v} outside the physical range [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    /// Initial value of each distinct cell.
    pub fn initial_cells(&self) -> Vec<f64> {
        let n = self.grid.n();
        let dom = self.grid.domain();
        self.grid.x_nodes()[..n - 1]
            .iter()
            .map(|&x| self.ic.eval(x, dom))
            .collect()
    }

    /// Substeps per output interval. Depends on the case only, never on the control.
    pub fn substeps(&self) -> usize {
        let cells = self.initial_cells();
        let (lo, hi) = match self.flux {
            FluxKind::BuckleyLeverett => (0.0, 1.0),
            _ => cells
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        };
        scheme::substeps_for(&self.grid, self.flux.max_speed(lo, hi), self.cfl)
    }

    /// Flux-free description handed to the twin.
    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        Setup::new(self.grid.clone(), self.initial_cells(), self.substeps())
    }
}

/// Run metadata next to the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayBoxRun {
    pub field: SpaceTimeField,
    pub substeps: usize,
    pub max_courant: f64,
    /// Largest relative change of `sum u dx` over the output rows.
    pub mass_drift: f64,
}

/// Solves the gray-box conservation law for `control`.
pub fn graybox_solve(case: &GrayBoxCase, control: &ControlField) -> Result<SpaceTimeField> {
    graybox_run(case, control).map(|r| r.field)
}

pub fn graybox_run(case: &GrayBoxCase, control: &ControlField) -> Result<GrayBoxRun> {
    let setup = case.setup()?;
    control.validate(&case.grid)?;
    let traj = scheme::run_explicit(
        &setup,
        &Truth(case.flux),
        control,
        setup.initial(),
        0,
        setup.total_steps(),
    )?;
    let field = setup.to_field(&traj.output_rows(&setup))?;
    let mass = scheme::cell_mass(&field);
    let scale = mass[0].abs().max(f64::MIN_POSITIVE);
    let mass_drift = mass.iter().fold(0.0f64, |d, m| d.max((m - mass[0]).abs() / scale));
    Ok(GrayBoxRun {
        field,
        substeps: setup.substeps(),
        max_courant: traj.max_courant,
        mass_drift,
    })
}

/// `xi = int (u(T, x) - 1/2)^2 dx`, trapezoid in space.
pub fn graybox_objective(solution: &SpaceTimeField) -> f64 {
    terminal_quadratic(solution, 0.5)
}

pub(crate) fn terminal_quadratic(solution: &SpaceTimeField, target: f64) -> f64 {
    let grid = solution.grid();
    let last = solution.row(0, grid.m() - 1);
    let n = grid.n();
    let dx = grid.dx();
    last.iter()
        .enumerate()
        .map(|(j, &u)| {
            let w = if j == 0 || j == n - 1 { 0.5 * dx } else { dx };
            w * (u - target) * (u - target)
        })
        .sum()
}

/// Exact flux and derivative. Verification only.
#[cfg(feature = "oracle")]
pub fn true_flux(kind: FluxKind, u: f64) -> (f64, f64) {
    kind.eval(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::build_grid;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn bl_case(m: usize, n: usize) -> GrayBoxCase {
        GrayBoxCase::new(
            FluxKind::BuckleyLeverett,
            InitialCondition::Sine {
                amplitude: 0.45,
                offset: 0.5,
            },
            build_grid(m, n, 1.0, (0.0, 1.0)).unwrap(),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn bl_flux_values() {
        let f = |u| FluxKind::BuckleyLeverett.eval(u);
        assert_eq!(f(0.0).0, 0.0);
        assert_eq!(f(1.0).0, 1.0);
        assert_relative_eq!(f(0.5).0, 1.0 / 6.0, epsilon = 1e-15);
        let h = 1e-6;
        for &u in &[0.1, 0.5, 0.9] {
            let fd = (f(u + h).0 - f(u - h).0) / (2.0 * h);
            assert_relative_eq!(f(u).1, fd, max_relative = 1e-8);
        }
        let s = FluxKind::BuckleyLeverett.max_speed(0.0, 1.0);
        assert!((s - 2.0808 * 1.001).abs() < 1e-3, "{s}");
    }

    #[test]
    fn zero_ic_stays_zero() {
        let case = GrayBoxCase::new(
            FluxKind::Burgers,
            InitialCondition::Sine {
                amplitude: 0.0,
                offset: 0.0,
            },
            build_grid(5, 9, 1.0, (0.0, 1.0)).unwrap(),
            0.5,
        )
        .unwrap();
        let f = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bl_respects_bounds_and_conserves() {
        let case = bl_case(21, 64);
        let run = graybox_run(&case, &ControlField::scalar(0.0)).unwrap();
        let (lo, hi) = run.field.range();
        assert!(lo >= 0.05 - 1e-12 && hi <= 0.95 + 1e-12, "{lo} {hi}");
        assert!(run.mass_drift < 1e-12);
        assert!(run.max_courant <= 0.5 + 1e-12);
    }

    #[test]
    fn objective_examples() {
        let g = build_grid(2, 201, 1.0, (0.0, 1.0)).unwrap();
        let half = SpaceTimeField::from_fn(g.clone(), |_, _| 0.5).unwrap();
        assert_eq!(graybox_objective(&half), 0.0);
        let one = SpaceTimeField::from_fn(g.clone(), |_, _| 1.0).unwrap();
        assert_relative_eq!(graybox_objective(&one), 0.25, epsilon = 1e-14);
        let s = SpaceTimeField::from_fn(g, |_, x| 0.5 + math::sin(2.0 * core::f64::consts::PI * x)).unwrap();
        assert_relative_eq!(graybox_objective(&s), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_cases() {
        let g = build_grid(3, 9, 1.0, (0.0, 1.0)).unwrap();
        let sine = InitialCondition::Sine {
            amplitude: 0.45,
            offset: 0.5,
        };
        assert!(GrayBoxCase::new(FluxKind::BuckleyLeverett, sine, g.clone(), 0.9).is_err());
        let wild = InitialCondition::Sine {
            amplitude: 1.0,
            offset: 0.5,
        };
        assert!(GrayBoxCase::new(FluxKind::BuckleyLeverett, wild, g.clone(), 0.5).is_err());
        let case = GrayBoxCase::new(FluxKind::Burgers, sine, g, 0.5).unwrap();
        assert!(graybox_solve(&case, &ControlField::Grid { values: vec![0.0; 5] }).is_err());
    }
}
