//! Fitting the twin to gray-box data: inner minimization, pre-training,
//! cross validation and adaptive basis construction.

mod adaptive;
pub mod bfgs;
mod contraction;
mod cv;
mod sgd;

pub use adaptive::{
    adaptive_train, candidate_significance, member_significance, pretrain_finetune, StepKind, StepRecord,
    TrainReport,
};
pub use bfgs::{BfgsConfig, BfgsResult};
pub use contraction::{contraction_check, ContractionReport};
pub use cv::{cross_validate, FoldSplit};
pub use sgd::{sgd_pretrain, SgdConfig, SgdReport};

use alloc::vec::Vec;

use crate::basis::BasisId;
use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::field::{trapezoid_weights, Mask, QuadratureWeights, SpaceTimeField};
use crate::twin::{
    grad_mismatch_alpha, mismatch, truncation_error, truncation_gradient, twin_solve, TwinModel,
};

/// What the inner optimizer, significance and validation measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    /// Solution mismatch; each evaluation solves the twin.
    Mismatch,
    /// Integrated truncation error; never solves the twin.
    Truncation,
}

/// Observed gray-box data the twin is fitted to.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub gray: SpaceTimeField,
    pub control: ControlField,
    pub weights: QuadratureWeights,
}

impl TrainData {
    /// Trapezoid weights, the given control.
    pub fn new(gray: SpaceTimeField, control: ControlField) -> Result<Self> {
        control.validate(gray.grid())?;
        let weights = trapezoid_weights(gray.grid());
        Ok(TrainData { gray, control, weights })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub k_folds: usize,
    /// Weight of the smoothed `sum |alpha|` penalty.
    pub l1_weight: f64,
    pub bfgs: BfgsConfig,
    pub sgd: SgdConfig,
    /// Starting dictionary; `None` picks one basis covering the data range.
    pub initial: Option<Vec<BasisId>>,
    pub max_outer_iters: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_folds: 2,
            l1_weight: 0.0,
            bfgs: BfgsConfig::default(),
            sgd: SgdConfig::default(),
            initial: None,
            max_outer_iters: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::invalid("k_folds", "need at least 2 folds"));
        }
        if !(self.l1_weight >= 0.0) {
            return Err(Error::invalid("l1_weight", "must be non-negative"));
        }
        let b = &self.bfgs;
        if !(b.grad_tol > 0.0) || b.max_iters == 0 || !(b.armijo_c1 > 0.0 && b.armijo_c1 < 1.0) {
            return Err(Error::invalid("bfgs", "need grad_tol > 0, max_iters > 0, 0 < armijo_c1 < 1"));
        }
        if !(b.backtrack > 0.0 && b.backtrack < 1.0) {
            return Err(Error::invalid("bfgs.backtrack", "must lie in (0, 1)"));
        }
        self.sgd.validate()
    }
}

const L1_EPS: f64 = 1e-8;

/// Metric value on `mask` (no regularization).
pub fn metric_value(twin: &TwinModel, data: &TrainData, metric: Metric, mask: Option<&Mask>) -> Result<f64> {
    match metric {
        Metric::Mismatch => mismatch(&twin_solve(twin, &data.control)?, &data.gray, &data.weights, mask),
        Metric::Truncation => truncation_error(twin, &data.gray, &data.control, &data.weights, mask),
    }
}

/// Metric value and its gradient w.r.t. the dictionary coefficients.
pub fn metric_gradient(
    twin: &TwinModel,
    data: &TrainData,
    metric: Metric,
    mask: Option<&Mask>,
) -> Result<(f64, Vec<f64>)> {
    match metric {
        Metric::Mismatch => grad_mismatch_alpha(twin, &data.gray, &data.control, &data.weights, mask),
        Metric::Truncation => truncation_gradient(twin, &data.gray, &data.control, &data.weights, mask),
    }
}

/// Outcome of [`minimize_inner`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub alphas: Vec<f64>,
    /// Metric at `alphas`, without the penalty.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

/// BFGS on `metric + l1_weight sum sqrt(alpha^2 + eps^2)` from the twin's current coefficients.
pub fn minimize_inner(
    twin: &TwinModel,
    data: &TrainData,
    metric: Metric,
    mask: Option<&Mask>,
    config: &TrainConfig,
) -> Result<InnerResult> {
    if twin.dict().is_empty() {
        return Err(Error::invalid("dict", "cannot optimize an empty dictionary"));
    }
    let lam = config.l1_weight;
    let mut probe = twin.clone();
    let res = bfgs::minimize(
        |a| {
            probe.set_alphas(a)?;
            let (mut v, mut g) = metric_gradient(&probe, data, metric, mask)?;
            if lam > 0.0 {
                for (gi, &ai) in g.iter_mut().zip(a) {
                    let s = crate::math::smooth_abs(ai, L1_EPS);
                    v += lam * s;
                    *gi += lam * ai / s;
                }
            }
            Ok((v, g))
        },
        twin.dict().alphas(),
        &config.bfgs,
    )?;
    let penalty: f64 = if lam > 0.0 {
        res.x.iter().map(|&a| lam * crate::math::smooth_abs(a, L1_EPS)).sum()
    } else {
        0.0
    };
    Ok(InnerResult {
        value: res.value - penalty,
        alphas: res.x,
        iterations: res.iterations,
        converged: res.converged,
        line_search_failed: res.line_search_failed,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::basis::Dictionary;
    use crate::field::build_grid;
    use crate::graybox::{FluxKind, GrayBoxCase, InitialCondition};
    use alloc::vec;

    pub fn bl_case(m: usize, n: usize, amplitude: f64) -> GrayBoxCase {
        GrayBoxCase::new(
            FluxKind::BuckleyLeverett,
            InitialCondition::Sine {
                amplitude,
                offset: 0.5,
            },
            build_grid(m, n, 1.0, (0.0, 1.0)).unwrap(),
            0.5,
        )
        .unwrap()
    }

    pub fn realizable() -> (TwinModel, TrainData, Vec<f64>) {
        let case = bl_case(11, 17, 0.4);
        let ids = vec![BasisId::univariate(1, 1), BasisId::univariate(2, 3)];
        let truth = vec![0.8, 0.3];
        let gen = TwinModel::new(Dictionary::from_parts(ids.clone(), truth.clone()).unwrap(), case.setup().unwrap());
        let gray = twin_solve(&gen, &ControlField::scalar(0.0)).unwrap();
        let twin = TwinModel::new(Dictionary::from_parts(ids, vec![0.5, 0.0]).unwrap(), case.setup().unwrap());
        (twin, TrainData::new(gray, ControlField::scalar(0.0)).unwrap(), truth)
    }

    #[test]
    fn realizable_data_is_recovered() {
        let (twin, data, truth) = realizable();
        let start = metric_value(&twin, &data, Metric::Mismatch, None).unwrap();
        let r = minimize_inner(&twin, &data, Metric::Mismatch, None, &TrainConfig::default()).unwrap();
        assert!(r.value <= 1e-8 * start, "{} vs {start}", r.value);
        for (a, t) in r.alphas.iter().zip(&truth) {
            assert!((a - t).abs() < 1e-3, "{a} vs {t}");
        }
    }

    #[test]
    fn warm_start_at_optimum_stays_put() {
        let (twin, data, truth) = realizable();
        let at_opt = twin.with_dict(twin.dict().with_alphas(&truth).unwrap());
        let r = minimize_inner(&at_opt, &data, Metric::Mismatch, None, &TrainConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.alphas, truth);
    }

    #[test]
    fn l1_penalty_shrinks_coefficients() {
        let (twin, data, _) = realizable();
        let cfg = TrainConfig {
            l1_weight: 1e-3,
            ..Default::default()
        };
        let plain = minimize_inner(&twin, &data, Metric::Truncation, None, &TrainConfig::default()).unwrap();
        let reg = minimize_inner(&twin, &data, Metric::Truncation, None, &cfg).unwrap();
        let norm = |a: &[f64]| a.iter().map(|v| v.abs()).sum::<f64>();
        assert!(norm(&reg.alphas) < norm(&plain.alphas));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            k_folds: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
