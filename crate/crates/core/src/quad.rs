//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
/// Levels always subdivided before the error estimate is trusted.
const MIN_DEPTH: u32 = 4;

/// Integrates `f` over `[a, b]` to an absolute tolerance `tol`.
///
/// Returns a convergence error carrying the worst local error estimate when
/// some subinterval hits the recursion limit before meeting its share of the
/// tolerance.
pub(crate) fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(a, b, fa, fm, fb);
    let mut worst = 0.0f64;
    let value = recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut worst)?;
    if worst > 0.0 {
        return Err(Error::Convergence {
            what: "adaptive Simpson quadrature",
            achieved: worst,
        });
    }
    Ok(value)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    worst: &mut f64,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol && depth <= MAX_DEPTH - MIN_DEPTH {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        *worst = worst.max(delta.abs() / 15.0);
        return Ok(left + right + delta / 15.0);
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_and_exponentials() {
        let v = adaptive_simpson(&|x: f64| Ok(x * x), 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| Ok((-x).exp()), 0.0, 30.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-30.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn reports_unreachable_tolerance() {
        let r = adaptive_simpson(&|x: f64| Ok(if x < 0.3 { 0.0 } else { 1.0 }), 0.0, 1.0, 0.0);
        assert!(matches!(r, Err(Error::Convergence { .. })));
    }
}
