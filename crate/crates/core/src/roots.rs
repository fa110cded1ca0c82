//! Safeguarded Newton iteration inside a sign-changing bracket.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

const MAX_ITER: usize = 200;

/// Finds a root of `f` in `[lo, hi]`; `f` returns `(value, derivative)`.
///
/// Newton steps are taken when they stay inside the current bracket, otherwise
/// the bracket is bisected. Requires `f(lo)` and `f(hi)` of opposite sign.
pub fn newton_bisect<T: Real, F: FnMut(T) -> (T, T)>(
    mut f: F,
    mut lo: T,
    mut hi: T,
    x_tol: T,
) -> Result<T> {
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if f_lo == T::zero() {
        return Ok(lo);
    }
    if f_hi == T::zero() {
        return Ok(hi);
    }
    if (f_lo > T::zero()) == (f_hi > T::zero()) {
        return Err(Error::RootFinding(format!(
            "no sign change on [{lo}, {hi}]"
        )));
    }
    // orient so that f(lo) < 0 < f(hi)
    if f_lo > T::zero() {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut x = (lo + hi) / lit(2.0);
    for _ in 0..MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == T::zero() {
            return Ok(x);
        }
        if fx < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let inside = dfx != T::zero()
            && newton.is_finite()
            && (newton - lo) * (newton - hi) < T::zero();
        let next = if inside {
            newton
        } else {
            (lo + hi) / lit(2.0)
        };
        if (next - x).abs() <= x_tol * (T::one() + next.abs()) || (hi - lo).abs() <= x_tol {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::RootFinding(format!(
        "no convergence after {MAX_ITER} iterations (bracket [{lo}, {hi}])"
    )))
}
