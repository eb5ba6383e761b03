//! Thin wrappers over `libm` so the crate builds without `std`.

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// `2^e` for integer `e`, exact for the exponent range used by sigmoid bases.
#[inline]
pub(crate) fn pow2(e: i32) -> f64 {
    libm::ldexp(1.0, e)
}

/// Logistic function, evaluated so that neither tail overflows.
#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `sqrt(x^2 + eps^2)`.
#[inline]
pub(crate) fn smooth_abs(x: f64, eps: f64) -> f64 {
    sqrt(x * x + eps * eps)
}

/// `(a + b + smooth_abs(a - b)) / 2`.
#[inline]
pub(crate) fn smooth_max(a: f64, b: f64, eps: f64) -> f64 {
    0.5 * (a + b + smooth_abs(a - b, eps))
}
