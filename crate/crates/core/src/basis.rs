//! Tensor-product logistic-sigmoid bases.
//!
//! A univariate basis `(j, eta)` is `phi(2^j u - eta)`: resolution `j`,
//! center `eta / 2^j`. Multivariate bases are products over input dimensions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math;

/// The logistic sigmoid `1 / (1 + e^-u)`.
#[inline]
pub fn mother_sigmoid(u: f64) -> f64 {
    math::logistic(u)
}

/// Resolution and shift per input dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BasisId {
    pub j: Vec<i32>,
    pub eta: Vec<i64>,
}

impl BasisId {
    pub fn new(j: Vec<i32>, eta: Vec<i64>) -> Result<Self> {
        if j.is_empty() || j.len() != eta.len() {
            return Err(Error::invalid(
                "basis",
                format!("need matching nonempty j/eta, got {} and {}", j.len(), eta.len()),
            ));
        }
        Ok(BasisId { j, eta })
    }

    /// Univariate basis `(j, eta)`.
    pub fn univariate(j: i32, eta: i64) -> Self {
        BasisId {
            j: vec![j],
            eta: vec![eta],
        }
    }

    pub fn dim(&self) -> usize {
        self.j.len()
    }

    /// Center `eta_d / 2^j_d` of dimension `d`.
    pub fn center(&self, d: usize) -> f64 {
        self.eta[d] as f64 * math::pow2(-self.j[d])
    }

    pub fn resolution_sum(&self) -> i64 {
        self.j.iter().map(|&j| j as i64).sum()
    }

    /// Coarsest univariate basis centered on `[u_min, u_max]`:
    /// `j = ceil(log2(1 / width))`, center at the dyadic point nearest the midpoint.
    pub fn covering(u_min: f64, u_max: f64) -> Self {
        let width = (u_max - u_min).max(1e-12);
        let j = math::ceil(math::log2(1.0 / width)) as i32;
        let mid = 0.5 * (u_min + u_max);
        let eta = math::floor(mid * math::pow2(j) + 0.5) as i64;
        BasisId::univariate(j, eta)
    }

    pub fn label(&self) -> String {
        format!("(j={:?}, eta={:?})", self.j, self.eta)
    }
}

/// Deterministic order: lower total resolution first, then lexicographic `(j, eta)`.
impl Ord for BasisId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.resolution_sum()
            .cmp(&other.resolution_sum())
            .then_with(|| self.j.cmp(&other.j))
            .then_with(|| self.eta.cmp(&other.eta))
    }
}

impl PartialOrd for BasisId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Value and first two derivatives of `phi(2^j u - eta)`.
#[inline]
pub(crate) fn univariate_eval(j: i32, eta: i64, u: f64) -> (f64, f64, f64) {
    let scale = math::pow2(j);
    let s = mother_sigmoid(scale * u - eta as f64);
    let ds = s * (1.0 - s);
    (s, scale * ds, scale * scale * ds * (1.0 - 2.0 * s))
}

/// `prod_d phi(2^{j_d} u_d - eta_d)` and its gradient w.r.t. `u`.
pub fn eval_basis(id: &BasisId, u: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(id.dim(), u.len());
    let factors: Vec<(f64, f64)> = (0..id.dim())
        .map(|d| {
            let (v, dv, _) = univariate_eval(id.j[d], id.eta[d], u[d]);
            (v, dv)
        })
        .collect();
    let value = factors.iter().map(|f| f.0).product();
    let grad = (0..id.dim())
        .map(|d| {
            factors
                .iter()
                .enumerate()
                .map(|(e, f)| if e == d { f.1 } else { f.0 })
                .product()
        })
        .collect();
    (value, grad)
}

/// Scalar flux evaluation: value and first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluxEval {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

/// Active basis set with coefficients, `F(u) = sum_i alpha_i phi_i(u)`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dictionary {
    ids: Vec<BasisId>,
    alphas: Vec<f64>,
}

impl Dictionary {
    pub fn new() -> Self {
        Dictionary::default()
    }

    pub fn from_parts(ids: Vec<BasisId>, alphas: Vec<f64>) -> Result<Self> {
        if ids.len() != alphas.len() {
            return Err(Error::shape(
                format!("{} coefficients", ids.len()),
                format!("{}", alphas.len()),
            ));
        }
        let mut d = Dictionary::new();
        for (id, a) in ids.into_iter().zip(alphas) {
            d.push(id, a)?;
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[BasisId] {
        &self.ids
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn set_alphas(&mut self, alphas: &[f64]) -> Result<()> {
        if alphas.len() != self.alphas.len() {
            return Err(Error::shape(
                format!("{} coefficients", self.alphas.len()),
                format!("{}", alphas.len()),
            ));
        }
        self.alphas.copy_from_slice(alphas);
        Ok(())
    }

    pub fn with_alphas(&self, alphas: &[f64]) -> Result<Self> {
        let mut d = self.clone();
        d.set_alphas(alphas)?;
        Ok(d)
    }

    /// Input dimension, or `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        self.ids.first().map(BasisId::dim)
    }

    pub fn contains(&self, id: &BasisId) -> bool {
        self.ids.contains(id)
    }

    pub fn position(&self, id: &BasisId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn push(&mut self, id: BasisId, alpha: f64) -> Result<()> {
        if self.contains(&id) {
            return Err(Error::DuplicateBasis(id.label()));
        }
        if let Some(k) = self.dim() {
            if id.dim() != k {
                return Err(Error::invalid(
                    "basis",
                    format!("dimension {} does not match dictionary dimension {k}", id.dim()),
                ));
            }
        }
        self.ids.push(id);
        self.alphas.push(alpha);
        Ok(())
    }

    pub fn remove(&mut self, index: usize) -> (BasisId, f64) {
        (self.ids.remove(index), self.alphas.remove(index))
    }

    /// Multivariate `F(u)` and gradient.
    pub fn eval_flux(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut grad = vec![0.0; u.len()];
        for (id, &a) in self.ids.iter().zip(&self.alphas) {
            let (v, g) = eval_basis(id, u);
            f += a * v;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += a * gi;
            }
        }
        (f, grad)
    }

    /// Univariate `F`, `F'`, `F''`. Requires a univariate dictionary (or empty).
    #[inline]
    pub fn eval_scalar(&self, u: f64) -> FluxEval {
        let mut out = FluxEval::default();
        for (id, &a) in self.ids.iter().zip(&self.alphas) {
            let (v, dv, d2v) = univariate_eval(id.j[0], id.eta[0], u);
            out.f += a * v;
            out.df += a * dv;
            out.d2f += a * d2v;
        }
        out
    }

    /// Per-basis `phi_i(u)` and `phi_i'(u)` (univariate) for coefficient partials.
    pub fn basis_partials(&self, u: f64, phi: &mut [f64], dphi: &mut [f64]) {
        for (i, id) in self.ids.iter().enumerate() {
            let (v, dv, _) = univariate_eval(id.j[0], id.eta[0], u);
            phi[i] = v;
            dphi[i] = dv;
        }
    }
}

/// Union of the neighborhoods of `ids`: per basis and dimension one finer basis
/// with the same center and two shifted bases, deduplicated and sorted.
pub fn neighborhood(ids: &[BasisId]) -> Vec<BasisId> {
    let mut out = BTreeSet::new();
    for id in ids {
        for candidate in single_neighborhood(id) {
            out.insert(candidate);
        }
    }
    out.into_iter().collect()
}

/// The `3k` neighbors of one basis, in dimension order (finer, then shifts).
pub fn single_neighborhood(id: &BasisId) -> Vec<BasisId> {
    let mut out = Vec::with_capacity(3 * id.dim());
    for d in 0..id.dim() {
        let mut finer = id.clone();
        finer.j[d] += 1;
        finer.eta[d] *= 2;
        out.push(finer);
        for shift in [1i64, -1] {
            let mut moved = id.clone();
            moved.eta[d] += shift;
            out.push(moved);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn mother_sigmoid_examples() {
        assert_eq!(mother_sigmoid(0.0), 0.5);
        assert!(mother_sigmoid(40.0) > 1.0 - 1e-15);
        for &u in &[0.3, 1.7, 12.0] {
            assert!((mother_sigmoid(-u) - (1.0 - mother_sigmoid(u))).abs() <= 1e-15);
        }
        assert!(mother_sigmoid(-800.0) >= 0.0 && mother_sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn eval_basis_examples() {
        assert_eq!(eval_basis(&BasisId::univariate(0, 0), &[0.0]).0, 0.5);
        assert_eq!(eval_basis(&BasisId::univariate(1, 1), &[0.5]).0, 0.5);
        let id2 = BasisId::new(vec![0, 0], vec![0, 0]).unwrap();
        assert_eq!(eval_basis(&id2, &[0.0, 0.0]).0, 0.25);
    }

    #[test]
    fn eval_flux_examples() {
        let empty = Dictionary::new();
        assert_eq!(empty.eval_flux(&[0.3]).0, 0.0);
        assert_eq!(empty.eval_scalar(0.3), FluxEval::default());

        let d = Dictionary::from_parts(vec![BasisId::univariate(0, 0)], vec![2.0]).unwrap();
        assert_eq!(d.eval_flux(&[0.0]).0, 1.0);

        let d = Dictionary::from_parts(
            vec![BasisId::univariate(0, 0), BasisId::univariate(2, 1)],
            vec![0.4, -1.3],
        )
        .unwrap();
        let s = d.with_alphas(&[0.4 * 3.0, -1.3 * 3.0]).unwrap();
        for &u in &[-1.0, 0.0, 0.37, 2.0] {
            assert_relative_eq!(s.eval_scalar(u).f, 3.0 * d.eval_scalar(u).f, max_relative = 1e-14);
        }
    }

    #[test]
    fn duplicate_and_mixed_dimension_rejected() {
        let mut d = Dictionary::new();
        d.push(BasisId::univariate(0, 0), 1.0).unwrap();
        assert!(matches!(d.push(BasisId::univariate(0, 0), 2.0), Err(Error::DuplicateBasis(_))));
        assert!(d.push(BasisId::new(vec![0, 0], vec![0, 0]).unwrap(), 1.0).is_err());
    }

    #[test]
    fn neighborhood_examples() {
        assert_eq!(
            neighborhood(&[BasisId::univariate(0, 0)]),
            vec![
                BasisId::univariate(0, -1),
                BasisId::univariate(0, 1),
                BasisId::univariate(1, 0)
            ]
        );
        let mut got = neighborhood(&[BasisId::univariate(1, 1)]);
        got.sort_by(|a, b| a.eta.cmp(&b.eta));
        assert_eq!(
            got,
            vec![
                BasisId::univariate(1, 0),
                BasisId::univariate(1, 2),
                BasisId::univariate(2, 2)
            ]
        );
        // the finer neighbor keeps the center
        assert_eq!(BasisId::univariate(2, 2).center(0), BasisId::univariate(1, 1).center(0));

        let id = BasisId::new(vec![0, 1], vec![3, -2]).unwrap();
        assert_eq!(single_neighborhood(&id).len(), 6);
        assert_eq!(neighborhood(&[id]).len(), 6);
    }

    #[test]
    fn neighborhood_union_deduplicates() {
        let a = BasisId::univariate(0, 0);
        let b = BasisId::univariate(0, 2);
        // both produce (0, 1)
        assert_eq!(neighborhood(&[a, b]).len(), 5);
    }

    #[test]
    fn covering_basis() {
        assert_eq!(BasisId::covering(0.05, 0.95), BasisId::univariate(1, 1));
        assert_eq!(BasisId::covering(0.4, 0.6), BasisId::univariate(3, 4));
        assert_eq!(BasisId::covering(0.0, 1.0), BasisId::univariate(0, 1));
    }

    #[test]
    fn tie_break_order() {
        let mut v = vec![
            BasisId::univariate(2, 0),
            BasisId::univariate(1, 3),
            BasisId::univariate(1, -1),
            BasisId::univariate(0, 5),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                BasisId::univariate(0, 5),
                BasisId::univariate(1, -1),
                BasisId::univariate(1, 3),
                BasisId::univariate(2, 0)
            ]
        );
    }

    #[test]
    fn connectivity_by_breadth_first_search() {
        // every (j, eta) with j in j0..=j0+3, |center| <= 2 is reachable from (j0, eta0)
        let start = BasisId::univariate(0, 0);
        let in_box = |b: &BasisId| b.j[0] <= 3 && b.center(0).abs() <= 2.0;
        let mut seen = BTreeSet::new();
        let mut frontier = vec![start.clone()];
        seen.insert(start);
        while let Some(b) = frontier.pop() {
            for nb in single_neighborhood(&b) {
                if in_box(&nb) && seen.insert(nb.clone()) {
                    frontier.push(nb);
                }
            }
        }
        for j in 0..=3 {
            let reach = 2i64 << j;
            for eta in -reach..=reach {
                assert!(seen.contains(&BasisId::univariate(j, eta)), "({j}, {eta}) unreachable");
            }
        }
    }

    proptest! {
        #[test]
        fn self_similarity(j in -4i32..8, eta in -50i64..50, u in -3.0f64..3.0) {
            let direct = mother_sigmoid(libm::ldexp(1.0, j) * u - eta as f64);
            prop_assert_eq!(eval_basis(&BasisId::univariate(j, eta), &[u]).0, direct);
        }

        #[test]
        fn flux_gradient_matches_central_differences(
            a in proptest::collection::vec(-2.0f64..2.0, 3),
            u0 in -1.0f64..1.0,
            u1 in -1.0f64..1.0,
        ) {
            let ids = vec![
                BasisId::new(vec![0, 1], vec![0, 1]).unwrap(),
                BasisId::new(vec![2, 0], vec![1, -1]).unwrap(),
                BasisId::new(vec![1, 2], vec![-1, 3]).unwrap(),
            ];
            let d = Dictionary::from_parts(ids, a).unwrap();
            let u = [u0, u1];
            let (_, g) = d.eval_flux(&u);
            let h = 1e-6;
            for k in 0..2 {
                let mut up = u; up[k] += h;
                let mut dn = u; dn[k] -= h;
                let fd = (d.eval_flux(&up).0 - d.eval_flux(&dn).0) / (2.0 * h);
                prop_assert!((g[k] - fd).abs() <= 1e-7 * fd.abs().max(1.0), "{} vs {}", g[k], fd);
            }
        }

        #[test]
        fn scalar_second_derivative_matches_differences(
            a in proptest::collection::vec(-2.0f64..2.0, 3),
            u in -1.0f64..2.0,
        ) {
            let d = Dictionary::from_parts(
                vec![BasisId::univariate(0, 0), BasisId::univariate(2, 1), BasisId::univariate(3, 5)],
                a,
            ).unwrap();
            let h = 1e-6;
            let e = d.eval_scalar(u);
            let fd1 = (d.eval_scalar(u + h).f - d.eval_scalar(u - h).f) / (2.0 * h);
            let fd2 = (d.eval_scalar(u + h).df - d.eval_scalar(u - h).df) / (2.0 * h);
            prop_assert!((e.df - fd1).abs() <= 1e-7 * fd1.abs().max(1.0));
            prop_assert!((e.d2f - fd2).abs() <= 1e-6 * fd2.abs().max(1.0));
        }

        #[test]
        fn constant_offset_leaves_derivative_unchanged(
            a in proptest::collection::vec(-2.0f64..2.0, 2),
            c in -5.0f64..5.0,
            u in 0.0f64..1.0,
        ) {
            // a basis far below the data range acts as a constant on [0, 1]
            let base = Dictionary::from_parts(
                vec![BasisId::univariate(1, 1), BasisId::univariate(3, 4)],
                a.clone(),
            ).unwrap();
            let mut shifted = base.clone();
            shifted.push(BasisId::univariate(4, -1000), c).unwrap();
            let b = base.eval_scalar(u);
            let s = shifted.eval_scalar(u);
            prop_assert!((s.f - b.f - c).abs() <= 1e-12 * (1.0 + c.abs()));
            prop_assert!((s.df - b.df).abs() <= 1e-12);
        }
    }
}
