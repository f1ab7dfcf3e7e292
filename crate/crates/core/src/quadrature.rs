//! Adaptive composite Simpson quadrature.
//!
//! Every integral in the crate is one-dimensional, so this is the oracle for
//! partition functions, normalization checks and the bound evaluators.

use crate::error::{Error, Result};

/// Maximum number of bisection levels below each top-level interval.
pub const MAX_DEPTH: u32 = 20;

/// Integrates `f` over `[lo, hi]` to an absolute error target of `tol`.
pub fn integrate<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_with_depth(&f, lo, hi, tol, MAX_DEPTH)
}

/// Like [`integrate`], with an explicit subdivision limit.
pub fn integrate_with_depth<F>(f: &F, lo: f64, hi: f64, tol: f64, max_depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite()) || tol <= 0.0 {
        return Err(Error::invalid(format!(
            "quadrature needs finite bounds and positive tolerance, got [{lo}, {hi}] tol={tol}"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if lo > hi {
        return integrate_with_depth(f, hi, lo, tol, max_depth).map(|v| -v);
    }
    let mid = 0.5 * (lo + hi);
    let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
    let whole = simpson(lo, hi, flo, fmid, fhi);
    refine(f, lo, hi, flo, fmid, fhi, whole, tol, max_depth).ok_or(Error::QuadratureDiverged { lo, hi, max_depth })
}

/// Relative inward offset of piece endpoints, so that a jump sitting exactly
/// on a breakpoint is never sampled from the wrong side.
const EDGE_NUDGE: f64 = 1e-13;

/// Integrates over `[breaks[0], breaks[last]]`, restarting the adaptive
/// scheme on every piece. `breaks` must be sorted; the tolerance is shared
/// evenly between the pieces. The integrand may jump at a breakpoint.
pub fn integrate_pieces<F>(f: F, breaks: &[f64], tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if breaks.len() < 2 {
        return Ok(0.0);
    }
    let pieces = (breaks.len() - 1) as f64;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let nudge = EDGE_NUDGE * (w[1] - w[0]);
            total += integrate_with_depth(&f, w[0] + nudge, w[1] - nudge, tol / pieces, MAX_DEPTH)?;
        }
    }
    Ok(total)
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    // Interval width can no longer be halved in floating point.
    if delta.abs() <= 15.0 * tol || lm <= a || rm >= b {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn std_normal(z: f64) -> f64 {
        (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn normal_density_integrates_to_one() {
        let v = integrate(std_normal, -12.0, 12.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn odd_integrand_vanishes() {
        let v = integrate(|z| z * std_normal(z), -12.0, 12.0, 1e-12).unwrap();
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn square_root_of_normal_matches_closed_form() {
        // ∫ N(0,1)^{1/2} = (2π)^{1/4}·√2
        let v = integrate(|z| std_normal(z).sqrt(), -12.0, 12.0, 1e-11).unwrap();
        let exact = (2.0 * PI).powf(0.25) * 2f64.sqrt();
        assert!((v - 2.23903).abs() < 1e-5);
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let a = integrate(|z| z * z, 0.0, 2.0, 1e-12).unwrap();
        let b = integrate(|z| z * z, 2.0, 0.0, 1e-12).unwrap();
        assert!((a - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(a, -b);
    }

    #[test]
    fn pieces_handle_discontinuities() {
        let step = |z: f64| if (0.0..=1.0).contains(&z) { 1.0 } else { 0.0 };
        let v = integrate_pieces(step, &[-3.0, 0.0, 1.0, 3.0], 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
        let half_open = |z: f64| if (0.0..1.0).contains(&z) { 1.0 } else { 0.0 };
        let v = integrate_pieces(half_open, &[-3.0, 0.0, 1.0, 3.0], 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn nan_integrand_reports_divergence() {
        let r = integrate(|z| if z > 0.3 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-10);
        assert!(matches!(r, Err(Error::QuadratureDiverged { .. })));
    }

    #[test]
    fn depth_limit_is_enforced() {
        let r = integrate_with_depth(&|z: f64| (1.0 / (z + 1e-9)).sin(), 0.0, 1.0, 1e-14, 3);
        assert!(r.is_err());
    }
}
