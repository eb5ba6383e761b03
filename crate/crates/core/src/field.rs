//! Space-time grids, quadrature weights and discretized solution fields.
//!
//! Values are stored row-major: time index `i` outer, space index `j` inner,
//! one `M x N` block per conserved variable.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Uniform tensor-product grid on `[0, T] x [x_lo, x_hi]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    m: usize,
    n: usize,
    t_final: f64,
    x_lo: f64,
    x_hi: f64,
    t_nodes: Vec<f64>,
    x_nodes: Vec<f64>,
}

/// Builds a uniform grid with `m` time nodes and `n` space nodes.
pub fn build_grid(m: usize, n: usize, t_final: f64, domain: (f64, f64)) -> Result<Grid> {
    let (x_lo, x_hi) = domain;
    if m < 2 {
        return Err(Error::invalid("M", format!("need at least 2 time nodes, got {m}")));
    }
    if n < 2 {
        return Err(Error::invalid("N", format!("need at least 2 space nodes, got {n}")));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::invalid("T", format!("final time must be positive, got {t_final}")));
    }
    if !(x_hi > x_lo) || !x_lo.is_finite() || !x_hi.is_finite() {
        return Err(Error::invalid(
            "domain",
            format!("need x_hi > x_lo, got ({x_lo}, {x_hi})"),
        ));
    }
    let dt = t_final / (m - 1) as f64;
    let dx = (x_hi - x_lo) / (n - 1) as f64;
    let mut t_nodes: Vec<f64> = (0..m).map(|i| i as f64 * dt).collect();
    let mut x_nodes: Vec<f64> = (0..n).map(|j| x_lo + j as f64 * dx).collect();
    t_nodes[m - 1] = t_final;
    x_nodes[n - 1] = x_hi;
    Ok(Grid {
        m,
        n,
        t_final,
        x_lo,
        x_hi,
        t_nodes,
        x_nodes,
    })
}

impl Grid {
    /// Number of time nodes.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of space nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x_lo, self.x_hi)
    }

    pub fn length(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn dt(&self) -> f64 {
        self.t_final / (self.m - 1) as f64
    }

    pub fn dx(&self) -> f64 {
        self.length() / (self.n - 1) as f64
    }

    /// Number of space-time nodes, `M * N`.
    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    pub(crate) fn same_shape(&self, other: &Grid) -> bool {
        self.m == other.m && self.n == other.n
    }
}

/// Positive quadrature weights `w_ij`, one per space-time node.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    m: usize,
    n: usize,
    w: Vec<f64>,
}

fn trapezoid_1d(count: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; count];
    w[0] = 0.5 * h;
    w[count - 1] = 0.5 * h;
    w
}

/// Tensor-product trapezoid weights for `grid`.
pub fn trapezoid_weights(grid: &Grid) -> QuadratureWeights {
    let wt = trapezoid_1d(grid.m, grid.dt());
    let wx = trapezoid_1d(grid.n, grid.dx());
    let mut w = Vec::with_capacity(grid.len());
    for &a in &wt {
        for &b in &wx {
            w.push(a * b);
        }
    }
    QuadratureWeights {
        m: grid.m,
        n: grid.n,
        w,
    }
}

impl QuadratureWeights {
    /// Weights `w_ij = w_j * T / M`: spatial trapezoid, identical on every time row.
    /// They still integrate the constant 1 to `T * |Omega|`.
    pub fn time_independent(grid: &Grid) -> Self {
        let wx = trapezoid_1d(grid.n, grid.dx());
        let row_scale = grid.t_final / grid.m as f64;
        let mut w = Vec::with_capacity(grid.len());
        for _ in 0..grid.m {
            w.extend(wx.iter().map(|b| b * row_scale));
        }
        QuadratureWeights {
            m: grid.m,
            n: grid.n,
            w,
        }
    }

    pub fn from_values(grid: &Grid, w: Vec<f64>) -> Result<Self> {
        if w.len() != grid.len() {
            return Err(Error::shape(
                format!("{} weights", grid.len()),
                format!("{}", w.len()),
            ));
        }
        if let Some(bad) = w.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "weights",
                format!("weight {bad} is not a positive finite number"),
            ));
        }
        Ok(QuadratureWeights {
            m: grid.m,
            n: grid.n,
            w,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    /// True when every time row carries the same spatial weights.
    pub fn is_time_independent(&self) -> bool {
        let first = &self.w[..self.n];
        self.w.chunks(self.n).all(|row| row == first)
    }
}

/// Subset of grid nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    m: usize,
    n: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn full(grid: &Grid) -> Self {
        Mask {
            m: grid.m,
            n: grid.n,
            bits: vec![true; grid.len()],
        }
    }

    pub fn empty(grid: &Grid) -> Self {
        Mask {
            m: grid.m,
            n: grid.n,
            bits: vec![false; grid.len()],
        }
    }

    pub fn from_bits(grid: &Grid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::shape(
                format!("{} mask entries", grid.len()),
                format!("{}", bits.len()),
            ));
        }
        Ok(Mask {
            m: grid.m,
            n: grid.n,
            bits,
        })
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.bits[i * self.n + j] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn complement(&self) -> Mask {
        Mask {
            m: self.m,
            n: self.n,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }
}

/// A `k`-variable discretized solution on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    k: usize,
    grid: Grid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    /// Validates shape and finiteness.
    pub fn new(grid: Grid, k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k", "need at least one conserved variable"));
        }
        let expected = k * grid.len();
        if values.len() != expected {
            return Err(Error::shape(
                format!("{expected} values (k={k}, M={}, N={})", grid.m, grid.n),
                format!("{}", values.len()),
            ));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            let var = p / grid.len();
            let rest = p % grid.len();
            return Err(Error::NonFinite {
                location: format!("var {var}, i={}, j={}", rest / grid.n, rest % grid.n),
            });
        }
        Ok(SpaceTimeField { k, grid, values })
    }

    pub fn zeros(grid: Grid, k: usize) -> Self {
        let len = k * grid.len();
        SpaceTimeField {
            k,
            grid,
            values: vec![0.0; len],
        }
    }

    /// Single-variable field from `f(t, x)`.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for &t in grid.t_nodes() {
            for &x in grid.x_nodes() {
                values.push(f(t, x));
            }
        }
        SpaceTimeField::new(grid, 1, values)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value of variable `var` at node `(i, j)`.
    #[inline]
    pub fn at(&self, var: usize, i: usize, j: usize) -> f64 {
        self.values[var * self.grid.len() + i * self.grid.n + j]
    }

    /// Time row `i` of variable `var`.
    pub fn row(&self, var: usize, i: usize) -> &[f64] {
        let start = var * self.grid.len() + i * self.grid.n;
        &self.values[start..start + self.grid.n]
    }

    /// `(min, max)` over all variables and nodes.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub(crate) fn check_same_shape(&self, other: &SpaceTimeField) -> Result<()> {
        if self.k != other.k || !self.grid.same_shape(&other.grid) {
            return Err(Error::shape(
                format!("k={}, M={}, N={}", self.k, self.grid.m, self.grid.n),
                format!("k={}, M={}, N={}", other.k, other.grid.m, other.grid.n),
            ));
        }
        Ok(())
    }

    /// Pointwise difference `self - other`, skipping the finiteness check.
    pub fn difference(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(SpaceTimeField {
            k: self.k,
            grid: self.grid.clone(),
            values,
        })
    }
}

/// `sum_{(i,j) in mask} w_ij * sum_vars value^2`; the full grid when `mask` is `None`.
pub fn weighted_sq_norm(
    field: &SpaceTimeField,
    weights: &QuadratureWeights,
    mask: Option<&Mask>,
) -> Result<f64> {
    let grid = field.grid();
    if weights.shape() != (grid.m, grid.n) {
        return Err(Error::shape(
            format!("weights {}x{}", grid.m, grid.n),
            format!("{}x{}", weights.m, weights.n),
        ));
    }
    if let Some(mask) = mask {
        if mask.shape() != (grid.m, grid.n) {
            return Err(Error::shape(
                format!("mask {}x{}", grid.m, grid.n),
                format!("{}x{}", mask.m, mask.n),
            ));
        }
    }
    let mut total = 0.0;
    for i in 0..grid.m {
        for j in 0..grid.n {
            if mask.map_or(true, |m| m.contains(i, j)) {
                let mut s = 0.0;
                for var in 0..field.k {
                    let v = field.at(var, i, j);
                    s += v * v;
                }
                total += weights.at(i, j) * s;
            }
        }
    }
    Ok(total)
}
