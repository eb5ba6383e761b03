//! Adaptive basis construction: forward-backward steps under cross validation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::cv::{cross_validate, FoldSplit};
use super::{metric_gradient, minimize_inner, Metric, TrainConfig, TrainData};
use crate::basis::{neighborhood, BasisId, Dictionary};
use crate::error::{Error, Result};
use crate::twin::TwinModel;

/// `|d metric / d alpha_l|` at `alpha_l = 0` for each candidate, with the
/// dictionary at its current coefficients. One adjoint pass for all candidates.
pub fn candidate_significance(
    twin: &TwinModel,
    data: &TrainData,
    metric: Metric,
    candidates: &[BasisId],
) -> Result<Vec<f64>> {
    let mut dict = twin.dict().clone();
    for id in candidates {
        if dict.contains(id) {
            return Err(Error::DuplicateBasis(id.label()));
        }
        dict.push(id.clone(), 0.0)?;
    }
    let base = twin.dict().len();
    let (_, g) = metric_gradient(&twin.with_dict(dict), data, metric, None)?;
    Ok(g[base..].iter().map(|v| v.abs()).collect())
}

/// Significance of each member as if it were a candidate: `|d metric / d alpha_l|`
/// with `alpha_l` set to zero and every other coefficient kept. Infinite when
/// the twin fails to run with `alpha_l = 0`.
pub fn member_significance(twin: &TwinModel, data: &TrainData, metric: Metric) -> Result<Vec<f64>> {
    let alphas = twin.dict().alphas().to_vec();
    let mut out = Vec::with_capacity(alphas.len());
    for l in 0..alphas.len() {
        let mut a = alphas.clone();
        a[l] = 0.0;
        // a member the twin cannot run without is as significant as it gets
        match metric_gradient(&twin.with_dict(twin.dict().with_alphas(&a)?), data, metric, None) {
            Ok((_, g)) => out.push(g[l].abs()),
            Err(e) if e.is_numerical() => out.push(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StepKind {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub outer: usize,
    pub kind: StepKind,
    pub basis: BasisId,
    pub significance: f64,
    /// Mean validation error of the trial dictionary.
    pub validation: f64,
    pub accepted: bool,
    pub dict_size: usize,
    /// Full-data metric after re-optimizing (accepted steps only).
    pub metric_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub metric: Metric,
    pub steps: Vec<StepRecord>,
    pub initial_dict: Vec<BasisId>,
    /// Full-data metric after the first inner minimization.
    pub initial_metric: f64,
    pub final_metric: f64,
    /// Validation error of the final dictionary (infinite if no step was accepted).
    pub final_validation: f64,
    pub final_dict_size: usize,
    pub outer_iterations: usize,
    pub max_outer_reached: bool,
    pub inner_iterations: usize,
    pub line_search_failures: usize,
    /// Twin PDE solves spent.
    pub solves: usize,
    pub notes: Vec<String>,
}

impl TrainReport {
    /// Validation errors of accepted steps, in order.
    pub fn accepted_validation(&self) -> Vec<f64> {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.validation).collect()
    }
}

/// Relative slack when comparing validation errors.
const ACCEPT_SLACK: f64 = 1e-12;

fn improves(new: f64, best: f64) -> bool {
    new.is_finite() && (best.is_infinite() || new < best - ACCEPT_SLACK * best.abs())
}

/// Initial dictionary: the configured bases, else one basis covering the data range.
fn initial_dictionary(data: &TrainData, config: &TrainConfig) -> Result<Dictionary> {
    let ids = match &config.initial {
        Some(ids) if !ids.is_empty() => ids.clone(),
        Some(_) => return Err(Error::invalid("initial", "initial dictionary is empty")),
        None => {
            let (lo, hi) = data.gray.range();
            vec![BasisId::covering(lo, hi)]
        }
    };
    let n = ids.len();
    Dictionary::from_parts(ids, vec![0.0; n])
}

fn pick_max(ids: &[BasisId], s: &[f64]) -> usize {
    // ties go to the lower id
    let mut best = 0;
    for k in 1..ids.len() {
        if s[k] > s[best] || (s[k] == s[best] && ids[k] < ids[best]) {
            best = k;
        }
    }
    best
}

fn pick_min(ids: &[BasisId], s: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..ids.len() {
        if s[k] < s[best] || (s[k] == s[best] && ids[k] < ids[best]) {
            best = k;
        }
    }
    best
}

struct Run<'a> {
    data: &'a TrainData,
    metric: Metric,
    config: &'a TrainConfig,
    split: FoldSplit,
    report: TrainReport,
}

impl Run<'_> {
    fn fit(&mut self, twin: &TwinModel) -> Result<(TwinModel, f64)> {
        let r = minimize_inner(twin, self.data, self.metric, None, self.config)?;
        self.report.inner_iterations += r.iterations;
        self.report.line_search_failures += usize::from(r.line_search_failed);
        Ok((twin.with_dict(twin.dict().with_alphas(&r.alphas)?), r.value))
    }

    fn validate(&mut self, twin: &TwinModel) -> Result<f64> {
        match cross_validate(twin, self.data, &self.split, self.metric, self.config) {
            Ok(cv) => {
                self.report.inner_iterations += cv.inner_iterations;
                self.report.line_search_failures += cv.line_search_failures;
                Ok(cv.mean)
            }
            // a trial dictionary whose twin cannot be run is simply worse
            Err(e) if e.is_numerical() => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// Adaptive basis construction: fit, then alternate forward (add the most significant
/// neighbor) and backward (drop the least significant member) steps, each
/// kept only if the cross-validation error decreases. Stops at the first
/// rejected forward step. `base` supplies setup, scheme and solve counter.
pub fn adaptive_train(
    base: &TwinModel,
    data: &TrainData,
    config: &TrainConfig,
    metric: Metric,
) -> Result<(TwinModel, TrainReport)> {
    config.validate()?;
    let solves_before = base.solves();
    let dict = initial_dictionary(data, config)?;
    let mut run = Run {
        data,
        metric,
        config,
        split: FoldSplit::new(data.gray.grid(), config.k_folds, config.seed)?,
        report: TrainReport {
            metric,
            steps: Vec::new(),
            initial_dict: dict.ids().to_vec(),
            initial_metric: f64::NAN,
            final_metric: f64::NAN,
            final_validation: f64::INFINITY,
            final_dict_size: 0,
            outer_iterations: 0,
            max_outer_reached: false,
            inner_iterations: 0,
            line_search_failures: 0,
            solves: 0,
            notes: vec![String::from(
                "backward-step significance is recomputed at the re-optimized coefficients",
            )],
        },
    };
    let (mut twin, mut value) = run.fit(&base.with_dict(dict))?;
    run.report.initial_metric = value;
    let mut best = f64::INFINITY;
    let mut outer = 0;
    loop {
        if outer >= config.max_outer_iters {
            run.report.max_outer_reached = true;
            break;
        }
        outer += 1;

        // forward step
        let ids = twin.dict().ids().to_vec();
        let candidates: Vec<BasisId> = neighborhood(&ids).into_iter().filter(|c| !ids.contains(c)).collect();
        if candidates.is_empty() {
            break;
        }
        let s = candidate_significance(&twin, data, metric, &candidates)?;
        let pick = pick_max(&candidates, &s);
        let added = candidates[pick].clone();
        let mut grown = twin.dict().clone();
        grown.push(added.clone(), 0.0)?;
        let trial = twin.with_dict(grown);
        let cv = run.validate(&trial)?;
        let accepted = improves(cv, best);
        let mut record = StepRecord {
            outer,
            kind: StepKind::Forward,
            basis: added.clone(),
            significance: s[pick],
            validation: cv,
            accepted,
            dict_size: trial.dict().len(),
            metric_after: None,
        };
        if !accepted {
            record.dict_size = twin.dict().len();
            run.report.steps.push(record);
            break;
        }
        best = cv;
        let (fitted, v) = run.fit(&trial)?;
        twin = fitted;
        value = v;
        record.metric_after = Some(v);
        run.report.steps.push(record);

        // backward step
        let s = member_significance(&twin, data, metric)?;
        let ids = twin.dict().ids().to_vec();
        let drop = pick_min(&ids, &s);
        if ids[drop] == added || ids.len() < 2 {
            continue;
        }
        let mut shrunk = twin.dict().clone();
        let (removed, _) = shrunk.remove(drop);
        let trial = twin.with_dict(shrunk);
        let cv = run.validate(&trial)?;
        let accepted = improves(cv, best);
        let mut record = StepRecord {
            outer,
            kind: StepKind::Backward,
            basis: removed,
            significance: s[drop],
            validation: cv,
            accepted,
            dict_size: if accepted { trial.dict().len() } else { twin.dict().len() },
            metric_after: None,
        };
        if accepted {
            best = cv;
            let (fitted, v) = run.fit(&trial)?;
            twin = fitted;
            value = v;
            record.metric_after = Some(v);
        }
        run.report.steps.push(record);
    }
    run.report.outer_iterations = outer;
    run.report.final_metric = value;
    run.report.final_validation = best;
    run.report.final_dict_size = twin.dict().len();
    run.report.solves = base.solves() - solves_before;
    Ok((twin, run.report))
}

/// Adaptive training on the truncation error, then coefficient-only
/// fine-tuning on the mismatch. Returns the twin, the pre-training report
/// and the fine-tuned mismatch.
pub fn pretrain_finetune(
    base: &TwinModel,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<(TwinModel, TrainReport, f64)> {
    let (pre, report) = adaptive_train(base, data, config, Metric::Truncation)?;
    let fit = minimize_inner(&pre, data, Metric::Mismatch, None, config)?;
    let tuned = pre.with_dict(pre.dict().with_alphas(&fit.alphas)?);
    Ok((tuned, report, fit.value))
}
