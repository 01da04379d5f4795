//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the library is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every value we feed through here is finite.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits the scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Number of mantissa bits, used to guard dyadic grids against
    /// collapsing below float resolution.
    fn mantissa_bits() -> u32;
}

impl Real for f32 {
    fn mantissa_bits() -> u32 {
        f32::MANTISSA_DIGITS
    }
}

impl Real for f64 {
    fn mantissa_bits() -> u32 {
        f64::MANTISSA_DIGITS
    }
}

/// `x log2(1/x)` with the continuous extension `0 ↦ 0`.
#[inline]
pub(crate) fn xlog_inv<S: Real>(x: S) -> S {
    if x <= S::zero() {
        S::zero()
    } else {
        -x * x.log2()
    }
}

/// Ordinary least squares fit `y = slope x + intercept`.
/// Returns `(slope, intercept, residuals)`.
pub(crate) fn least_squares<S: Real>(xs: &[S], ys: &[S]) -> (S, S, Vec<S>) {
    debug_assert_eq!(xs.len(), ys.len());
    let n = S::from_count(xs.len());
    let mx = xs.iter().copied().sum::<S>() / n;
    let my = ys.iter().copied().sum::<S>() / n;
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
    }
    let slope = if sxx > S::zero() { sxy / sxx } else { S::zero() };
    let intercept = my - slope * mx;
    let residuals = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| y - (slope * x + intercept))
        .collect();
    (slope, intercept, residuals)
}

/// Standard error of the least squares slope, zero when there are fewer than
/// three points.
pub(crate) fn slope_stderr<S: Real>(xs: &[S], residuals: &[S]) -> S {
    if xs.len() < 3 {
        return S::zero();
    }
    let n = S::from_count(xs.len());
    let mx = xs.iter().copied().sum::<S>() / n;
    let sxx: S = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if sxx <= S::zero() {
        return S::zero();
    }
    let rss: S = residuals.iter().map(|&r| r * r).sum();
    (rss / (n - S::lit(2.0)) / sxx).sqrt()
}

/// Shortest lossless decimal used in every CSV column.
pub fn fmt_real<S: Real>(x: S) -> String {
    if S::mantissa_bits() > 24 {
        format!("{:.16e}", x)
    } else {
        format!("{:.8e}", x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_line() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (s, b, r) = least_squares(&xs, &ys);
        assert!((s - 2.5).abs() < 1e-12);
        assert!((b + 1.0).abs() < 1e-12);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(slope_stderr(&xs, &r), 0.0);
    }

    #[test]
    fn fmt_real_round_trips() {
        let x = 0.1f64 + 0.2;
        assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        let y = 1.0f32 / 3.0;
        assert_eq!(fmt_real(y).parse::<f32>().unwrap(), y);
    }

    #[test]
    fn xlog_inv_edges() {
        assert_eq!(xlog_inv(0.0f64), 0.0);
        assert_eq!(xlog_inv(1.0f64), 0.0);
        assert!((xlog_inv(0.5f64) - 0.5).abs() < 1e-15);
        assert!((xlog_inv(0.25f32) - 0.5).abs() < 1e-6);
    }
}
