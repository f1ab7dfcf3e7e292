//! Numeric evaluators for the excess-risk-to-error bounds, and reports that
//! compare them with measured errors.
//!
//! Every bound takes the classifier's excess risk `delta`. Callers holding a
//! Monte Carlo estimate should pass [`ExcessRisk::upper`](crate::classifier::ExcessRisk::upper)
//! so that noise in `δ̂` cannot manufacture a violation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::dist::Mixture;
use crate::error::{Error, Result};
use crate::estimator::tempered_oracle;

/// Number of τ values the existential-τ bounds are maximized over.
pub const TAU_GRID_POINTS: usize = 25;

/// Default absolute quadrature tolerance for bound integrals.
pub const BOUND_TOL: f64 = 1e-10;

/// Relative slack of soundness comparisons. Equality instances have a
/// constant integrand, so their standard error is zero and only quadrature
/// and rounding error separate the two sides.
pub const SOUNDNESS_SLACK: f64 = 1e-9;

const GAMMA_EDGE: f64 = 1e-12;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 - GAMMA_EDGE {
        Ok(())
    } else {
        Err(Error::invalid(format!("γ must lie in (0, 1-1e-12), got {gamma}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("excess risk must be finite and >= 0, got {delta}")))
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be >= 1, got {t}")))
    }
}

/// `n` evenly spaced points on `[1, T]`.
pub fn tau_grid(temperature: f64, n: usize) -> Vec<f64> {
    if n <= 1 || temperature == 1.0 {
        return vec![temperature];
    }
    (0..n).map(|i| 1.0 + (temperature - 1.0) * i as f64 / (n - 1) as f64).collect()
}

/// Default Hölder exponent for the tempered forget bound: `2T`, or the
/// `k → 1` limit when `T = 1`.
///
/// `k = T` is not usable for `T > 1`: the integrability exponent
/// `(k−T)/(T(k−1))` is then zero and `∫p⁰` diverges on unbounded supports.
pub fn default_k(temperature: f64) -> f64 {
    if temperature == 1.0 {
        1.0
    } else {
        2.0 * temperature
    }
}

/// `δ/(1−γ)`.
pub fn thm1_retain_bound(delta: f64, gamma: f64) -> Result<f64> {
    check_delta(delta)?;
    check_gamma(gamma)?;
    Ok(delta / (1.0 - gamma))
}

/// `‖p_f‖_∞·√(2δ/(1−γ))`.
pub fn thm2_forget_bound(delta: f64, gamma: f64, pf_inf: f64) -> Result<f64> {
    check_delta(delta)?;
    check_gamma(gamma)?;
    Ok(pf_inf * (2.0 * delta / (1.0 - gamma)).sqrt())
}

/// `‖p_f‖_∞·γ(1−e^{−δ/γ}) / (1−γe^{−δ/γ})`, attained by the witness
/// classifier on disjoint uniform supports.
pub fn thm3_forget_lower_bound(delta: f64, gamma: f64, pf_inf: f64) -> Result<f64> {
    check_delta(delta)?;
    check_gamma(gamma)?;
    let x = -delta / gamma;
    Ok(pf_inf * gamma * (-x.exp_m1()) / (1.0 - gamma * x.exp()))
}

/// `√(δ/2)`, the bound on `E_p|f* − f̂|`.
pub fn lemma1_l1_bound(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok((delta / 2.0).sqrt())
}

/// Lower bound on `∫p^{1/T}·f̂` for any `f̂` with excess risk at most `delta`.
pub fn lemma2_partition_lower_bound(m: &Mixture, delta: f64, temperature: f64) -> Result<f64> {
    check_delta(delta)?;
    check_temperature(temperature)?;
    let g = m.gamma();
    check_gamma(g)?;
    let t = temperature;
    let h = m.retain().entropy();
    Ok((1.0 - g).powf((t + 1.0) / t) * (((t - 1.0) / t) * h - (delta - g * g.ln()) / (1.0 - g)).exp())
}

/// `A(T,γ)`: the partition lower bound at zero excess risk.
pub fn partition_constant(m: &Mixture, temperature: f64) -> Result<f64> {
    lemma2_partition_lower_bound(m, 0.0, temperature)
}

/// `∫p^e` over the mixture support (`p = 0` contributes nothing).
fn power_integral(m: &Mixture, exponent: f64, tol: f64) -> Result<f64> {
    if exponent == 0.0 && m.is_gaussian() {
        return Ok(f64::INFINITY);
    }
    if exponent == 0.0 {
        let unbounded = [m.retain(), m.forget()].iter().any(|c| c.as_gaussian().is_some());
        if unbounded {
            return Ok(f64::INFINITY);
        }
    }
    // p^e is p tempered at 1/e, so the matching window is used.
    let window_t = if exponent > 0.0 { (1.0 / exponent).max(1.0) } else { 1.0 };
    m.integrate(
        |z| {
            let p = m.density(z);
            if p > 0.0 {
                p.powf(exponent)
            } else {
                0.0
            }
        },
        window_t,
        tol,
    )
}

/// Tempering bias `(1−1/T)·‖p_f‖_{2,p_r^(τ)}·Std_{p_r^(τ)}[ln p]` at one τ.
pub fn thm4_bias_at(m: &Mixture, temperature: f64, tau: f64, tol: f64) -> Result<f64> {
    if temperature == 1.0 {
        return Ok(0.0);
    }
    let q = tempered_oracle(m, tau)?;
    let weighted = |g: &dyn Fn(f64) -> f64| {
        m.integrate(
            |z| {
                let d = q.density(z);
                if d > 0.0 {
                    d * g(z)
                } else {
                    0.0
                }
            },
            tau,
            tol,
        )
    };
    let pf_norm_sq = weighted(&|z| {
        let f = m.forget().density(z);
        f * f
    })?;
    if pf_norm_sq == 0.0 {
        return Ok(0.0);
    }
    let mean = weighted(&|z| m.log_density(z))?;
    let var = weighted(&|z| {
        let d = m.log_density(z) - mean;
        d * d
    })?;
    Ok((1.0 - 1.0 / temperature) * pf_norm_sq.sqrt() * var.max(0.0).sqrt())
}

/// Tempered Forget Error bound, maximized over `tau_grid`.
pub fn thm4_forget_bound(m: &Mixture, delta: f64, temperature: f64, k: f64, tau_grid: &[f64]) -> Result<f64> {
    thm4_forget_bound_with_tol(m, delta, temperature, k, tau_grid, BOUND_TOL)
}

pub fn thm4_forget_bound_with_tol(
    m: &Mixture,
    delta: f64,
    temperature: f64,
    k: f64,
    tau_grid: &[f64],
    tol: f64,
) -> Result<f64> {
    check_delta(delta)?;
    check_temperature(temperature)?;
    let g = m.gamma();
    check_gamma(g)?;
    let t = temperature;
    if !(k >= t) {
        return Err(Error::invalid(format!("Hölder exponent k={k} must be >= T={t}")));
    }
    check_tau_grid(tau_grid, t)?;

    let a = partition_constant(m, t)?;
    let pf_root = m.forget_peak().powf(1.0 / t);
    let half = delta / 2.0;
    let second = pf_root * half.powf(1.0 / (2.0 * t)) / a;

    // k = T = 1 is the k → 1 limit: the exponent tends to 1 and ∫p = 1.
    let power_term = if t == 1.0 && k == 1.0 {
        1.0
    } else {
        let e = (k - t) / (t * (k - 1.0));
        power_integral(m, e, tol)?.powf((k - 1.0) / k)
    };
    let third = if delta == 0.0 {
        0.0
    } else {
        pf_root * power_term * half.powf(1.0 / (2.0 * k)) / (a * a * (-delta / (1.0 - g)).exp())
    };

    let mut bias = 0.0f64;
    for &tau in tau_grid {
        bias = bias.max(thm4_bias_at(m, t, tau, tol)?);
    }
    Ok(bias + second + third)
}

/// Tempered Retain Error bound, maximized over `tau_grid`.
pub fn thm5_retain_bound(m: &Mixture, delta: f64, temperature: f64, tau_grid: &[f64]) -> Result<f64> {
    thm5_retain_bound_with_tol(m, delta, temperature, tau_grid, BOUND_TOL)
}

pub fn thm5_retain_bound_with_tol(
    m: &Mixture,
    delta: f64,
    temperature: f64,
    tau_grid: &[f64],
    tol: f64,
) -> Result<f64> {
    let base = thm1_retain_bound(delta, m.gamma())?;
    check_temperature(temperature)?;
    if temperature == 1.0 {
        return Ok(base);
    }
    check_tau_grid(tau_grid, temperature)?;
    let h = m.retain().entropy();
    let mut worst = f64::NEG_INFINITY;
    for &tau in tau_grid {
        // |ln p| has a kink wherever p = 1.
        let kinks = m.level_crossings(1.0, tau);
        let numer = m.integrate_with_breaks(
            |z| {
                let lp = m.log_density(z);
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    (lp / tau).exp() * lp.abs()
                }
            },
            tau,
            tol,
            &kinks,
        )?;
        let denom = lemma2_partition_lower_bound(m, delta, tau)?;
        worst = worst.max(numer / denom - h);
    }
    Ok(base + (1.0 - 1.0 / temperature) * worst)
}

fn check_tau_grid(grid: &[f64], temperature: f64) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&tau| !(1.0..=temperature).contains(&tau)) {
        return Err(Error::invalid(format!("τ grid must be nonempty and lie in [1, {temperature}]")));
    }
    Ok(())
}

/// Tuned regularization `λ*` and the expected excess-risk bound it attains
/// for `n` samples.
pub fn prop1_risk_bound(n: usize, phi_star_norm: f64, expected_feature_sq_norm: f64) -> Result<(f64, f64)> {
    if n == 0 || !(phi_star_norm > 0.0) || !(expected_feature_sq_norm > 0.0) {
        return Err(Error::invalid("risk bound needs n >= 1 and positive norms"));
    }
    let root = (2.0 * expected_feature_sq_norm / n as f64).sqrt();
    Ok((root / phi_star_norm, 2.0 * phi_star_norm * root))
}

/// Closed form of `∫N(0,v)^{1/τ}·|ln N(0,v)|`, valid where `ln p ≤ 0`
/// everywhere, i.e. `v ≥ 1/(2π)`.
///
/// `N(0,v)^{1/τ} = (2πv)^{(τ−1)/(2τ)}·√τ·N(0,τv)` and
/// `E_{N(0,τv)}|ln N(0,v)| = τ/2 + ½ln(2πv)`.
pub fn tempered_gaussian_log_integral(v: f64, tau: f64) -> Result<f64> {
    if !(v >= 1.0 / (2.0 * PI)) {
        return Err(Error::invalid(format!("closed form needs v >= 1/(2π), got {v}")));
    }
    check_temperature(tau)?;
    let c = 2.0 * PI * v;
    Ok(c.powf((tau - 1.0) / (2.0 * tau)) * tau.sqrt() * (tau / 2.0 + 0.5 * c.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// The measured value must not exceed the bound.
    Upper,
    /// The measured value must not fall below the bound.
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bound_name: String,
    pub kind: BoundKind,
    pub inputs: BTreeMap<String, f64>,
    pub bound_value: f64,
    pub measured_value: f64,
    pub measured_std_err: f64,
    pub sound: bool,
}

impl BoundReport {
    pub fn upper(
        name: impl Into<String>,
        inputs: BTreeMap<String, f64>,
        bound_value: f64,
        measured_value: f64,
        measured_std_err: f64,
    ) -> Self {
        let slack = SOUNDNESS_SLACK * bound_value.abs().max(1.0);
        let sound = measured_value <= bound_value + 3.0 * measured_std_err + slack;
        Self {
            bound_name: name.into(),
            kind: BoundKind::Upper,
            inputs,
            bound_value,
            measured_value,
            measured_std_err,
            sound,
        }
    }

    pub fn lower(
        name: impl Into<String>,
        inputs: BTreeMap<String, f64>,
        bound_value: f64,
        measured_value: f64,
        measured_std_err: f64,
    ) -> Self {
        let slack = SOUNDNESS_SLACK * bound_value.abs().max(1.0);
        let sound = bound_value <= measured_value + 3.0 * measured_std_err + slack;
        Self {
            bound_name: name.into(),
            kind: BoundKind::Lower,
            inputs,
            bound_value,
            measured_value,
            measured_std_err,
            sound,
        }
    }
}
