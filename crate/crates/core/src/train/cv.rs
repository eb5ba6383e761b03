//! k-fold cross validation over space-time nodes.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{metric_value, minimize_inner, Metric, TrainConfig, TrainData};
use crate::error::{Error, Result};
use crate::field::{Grid, Mask};
use crate::twin::TwinModel;

/// Random assignment of every grid node to one of `k_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldSplit {
    k_folds: usize,
    m: usize,
    n: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldSplit {
    /// Balanced folds (sizes differ by at most one), shuffled with `seed`.
    pub fn new(grid: &Grid, k_folds: usize, seed: u64) -> Result<Self> {
        if k_folds < 2 || k_folds > grid.len() {
            return Err(Error::invalid("k_folds", "need 2 <= k_folds <= number of nodes"));
        }
        let mut assignment: Vec<usize> = (0..grid.len()).map(|p| p % k_folds).collect();
        assignment.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(FoldSplit {
            k_folds,
            m: grid.m(),
            n: grid.n(),
            assignment,
            seed,
        })
    }

    pub fn k_folds(&self) -> usize {
        self.k_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn fold_of(&self, i: usize, j: usize) -> usize {
        self.assignment[i * self.n + j]
    }

    pub fn fold_size(&self, fold: usize) -> usize {
        self.assignment.iter().filter(|&&f| f == fold).count()
    }

    /// Nodes of `fold`.
    pub fn fold_mask(&self, grid: &Grid, fold: usize) -> Result<Mask> {
        if (grid.m(), grid.n()) != (self.m, self.n) {
            return Err(Error::shape(
                alloc::format!("{}x{} grid", self.m, self.n),
                alloc::format!("{}x{}", grid.m(), grid.n()),
            ));
        }
        Mask::from_bits(grid, self.assignment.iter().map(|&f| f == fold).collect())
    }
}

/// Per-fold validation errors and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub mean: f64,
    pub per_fold: Vec<f64>,
    pub inner_iterations: usize,
    pub line_search_failures: usize,
}

/// Trains one twin per fold on the other folds, warm-started from the twin's
/// coefficients, and validates it on the held-out fold.
pub fn cross_validate(
    twin: &TwinModel,
    data: &TrainData,
    split: &FoldSplit,
    metric: Metric,
    config: &TrainConfig,
) -> Result<CvResult> {
    let grid = data.gray.grid();
    let mut per_fold = Vec::with_capacity(split.k_folds());
    let mut inner_iterations = 0;
    let mut line_search_failures = 0;
    for fold in 0..split.k_folds() {
        let held = split.fold_mask(grid, fold)?;
        let train = held.complement();
        let fit = minimize_inner(twin, data, metric, Some(&train), config)?;
        inner_iterations += fit.iterations;
        line_search_failures += usize::from(fit.line_search_failed);
        let trained = twin.with_dict(twin.dict().with_alphas(&fit.alphas)?);
        per_fold.push(metric_value(&trained, data, metric, Some(&held))?);
    }
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(CvResult {
        mean,
        per_fold,
        inner_iterations,
        line_search_failures,
    })
}
