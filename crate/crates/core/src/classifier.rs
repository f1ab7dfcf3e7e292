//! Probabilistic classifiers for the retain-vs-forget surrogate task.
//!
//! A classifier estimates `f*(z) = P(s=1 | z) = (1-γ)·p_r(z)/p(z)`. The
//! learned model is logistic regression on the quadratic feature map
//! `[1, z, z²]`, which contains the exact posterior of any two-Gaussian
//! mixture. The piecewise-constant witness saturates a given excess-risk
//! budget on disjoint supports.

use rand::Rng;

use crate::dist::{Mixture, UniformComponent};
use crate::error::{Error, Result};

/// Predictions are clamped to `[PRED_CLAMP, 1 - PRED_CLAMP]` before taking
/// logarithms in the cross-entropy.
pub const PRED_CLAMP: f64 = 1e-12;

/// Anything that multiplies the tempered base density pointwise.
pub trait Tilt: Send + Sync {
    /// `ln tilt(z)`; `-∞` where the tilt vanishes.
    fn ln_tilt(&self, z: f64) -> f64;

    fn tilt(&self, z: f64) -> f64 {
        self.ln_tilt(z).exp()
    }
}

/// An estimate of the class posterior `P(s=1 | z)`.
pub trait Classifier: Send + Sync {
    fn predict(&self, z: f64) -> f64;

    fn ln_predict(&self, z: f64) -> f64 {
        self.predict(z).ln()
    }

    /// `ln(1 - predict(z))`.
    fn ln_one_minus_predict(&self, z: f64) -> f64 {
        (-self.predict(z)).ln_1p()
    }
}

impl<C: Classifier> Tilt for C {
    fn ln_tilt(&self, z: f64) -> f64 {
        self.ln_predict(z)
    }

    fn tilt(&self, z: f64) -> f64 {
        self.predict(z)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Cross-entropy of one labeled point given `ln f` and `ln(1-f)`, with the
/// prediction clamped to `[PRED_CLAMP, 1-PRED_CLAMP]`.
pub fn clamped_cross_entropy(ln_f: f64, ln_one_minus_f: f64, s: bool) -> f64 {
    let lo = PRED_CLAMP.ln();
    let hi = (-PRED_CLAMP).ln_1p();
    if s {
        -ln_f.clamp(lo, hi)
    } else {
        -ln_one_minus_f.clamp(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Vec<(f64, bool)>,
    source_gamma: f64,
    observed_mu: f64,
}

impl LabeledDataset {
    pub fn new(points: Vec<(f64, bool)>, source_gamma: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("dataset must contain at least one point"));
        }
        let forget = points.iter().filter(|(_, s)| !s).count();
        let observed_mu = forget as f64 / points.len() as f64;
        Ok(Self { points, source_gamma, observed_mu })
    }

    /// Draws `n` labeled points from the generative model of `m`.
    pub fn sample<R: Rng + ?Sized>(m: &Mixture, rng: &mut R, n: usize) -> Result<Self> {
        Self::new(m.sample_labeled(rng, n), m.gamma())
    }

    pub fn points(&self) -> &[(f64, bool)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_gamma(&self) -> f64 {
        self.source_gamma
    }

    /// Empirical fraction of forget (`s = 0`) labels.
    pub fn observed_mu(&self) -> f64 {
        self.observed_mu
    }
}

#[inline]
pub fn features(z: f64) -> [f64; 3] {
    [1.0, z, z * z]
}

/// `f(z) = σ(w0 + w1·z + w2·z²)` trained with an ℓ2 penalty `λ‖w‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadClassifier {
    pub weights: [f64; 3],
    pub lambda: f64,
}

impl QuadClassifier {
    pub fn new(weights: [f64; 3], lambda: f64) -> Self {
        Self { weights, lambda }
    }

    pub fn logit(&self, z: f64) -> f64 {
        let w = &self.weights;
        w[0] + z * (w[1] + z * w[2])
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Mean clamped cross-entropy on `data`, plus `λ‖w‖²` when `regularized`.
    pub fn loss(&self, data: &LabeledDataset, regularized: bool) -> f64 {
        let ce = cross_entropy(self, data);
        if regularized {
            ce + self.lambda * self.weights.iter().map(|w| w * w).sum::<f64>()
        } else {
            ce
        }
    }
}

impl Classifier for QuadClassifier {
    fn predict(&self, z: f64) -> f64 {
        sigmoid(self.logit(z))
    }

    fn ln_predict(&self, z: f64) -> f64 {
        -softplus(-self.logit(z))
    }

    fn ln_one_minus_predict(&self, z: f64) -> f64 {
        -softplus(self.logit(z))
    }
}

/// Mean clamped cross-entropy of any classifier on a labeled sample.
pub fn cross_entropy<C: Classifier + ?Sized>(clf: &C, data: &LabeledDataset) -> f64 {
    let total: f64 = data
        .points()
        .iter()
        .map(|&(z, s)| clamped_cross_entropy(clf.ln_predict(z), clf.ln_one_minus_predict(z), s))
        .sum();
    total / data.len() as f64
}

/// Stopping rule for [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Converged once the gradient norm drops to this value.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Gradient norm above which hitting `max_iter` is an error.
    pub fail_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 10_000, fail_tol: 1e-4, armijo: 1e-4 }
    }
}

/// Value, gradient and Hessian of the regularized logistic objective
/// `(1/n)Σ [softplus(x_i) - s_i·x_i] + λ‖w‖²` with `x_i = w·φ(z_i)`.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad: [f64; 3],
    pub hessian: [[f64; 3]; 3],
}

pub fn objective(weights: &[f64; 3], data: &LabeledDataset, lambda: f64) -> ObjectiveEval {
    let n = data.len() as f64;
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    let mut hessian = [[0.0; 3]; 3];
    for &(z, s) in data.points() {
        let phi = features(z);
        let x = weights[0] * phi[0] + weights[1] * phi[1] + weights[2] * phi[2];
        let y = if s { 1.0 } else { 0.0 };
        value += softplus(x) - y * x;
        let p = sigmoid(x);
        let r = p - y;
        let h = p * (1.0 - p);
        for i in 0..3 {
            grad[i] += r * phi[i];
            for j in 0..3 {
                hessian[i][j] += h * phi[i] * phi[j];
            }
        }
    }
    value /= n;
    let mut penalty = 0.0;
    for i in 0..3 {
        grad[i] = grad[i] / n + 2.0 * lambda * weights[i];
        penalty += weights[i] * weights[i];
        for h in hessian[i].iter_mut() {
            *h /= n;
        }
        hessian[i][i] += 2.0 * lambda;
    }
    ObjectiveEval { value: value + lambda * penalty, grad, hessian }
}

pub fn objective_value(weights: &[f64; 3], data: &LabeledDataset, lambda: f64) -> f64 {
    let ce: f64 = data
        .points()
        .iter()
        .map(|&(z, s)| {
            let phi = features(z);
            let x = weights[0] * phi[0] + weights[1] * phi[1] + weights[2] * phi[2];
            softplus(x) - if s { x } else { 0.0 }
        })
        .sum();
    ce / data.len() as f64 + lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Solves `H d = -g` by Cholesky; `None` when `H` is not numerically SPD.
fn newton_direction(h: &[[f64; 3]; 3], g: &[f64; 3]) -> Option<[f64; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let sum = h[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(sum > 1e-300) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        let mut sum = -g[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut d = [0.0; 3];
    for i in (0..3).rev() {
        let mut sum = y[i];
        for k in i + 1..3 {
            sum -= l[k][i] * d[k];
        }
        d[i] = sum / l[i][i];
    }
    d.iter().all(|v| v.is_finite()).then_some(d)
}

fn norm3(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub classifier: QuadClassifier,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Regularized objective after every accepted step, starting at the
    /// zero initialization.
    pub objective_trace: Vec<f64>,
}

/// Minimizes the regularized cross-entropy from the zero vector.
///
/// Damped Newton steps with Armijo backtracking; falls back to steepest
/// descent when the Hessian is not numerically positive definite. Fully
/// deterministic in its inputs.
pub fn train(data: &LabeledDataset, lambda: f64, opt: &OptimizerConfig) -> Result<QuadClassifier> {
    train_with_report(data, lambda, opt).map(|r| r.classifier)
}

pub fn train_with_report(data: &LabeledDataset, lambda: f64, opt: &OptimizerConfig) -> Result<TrainReport> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("regularization must be >= 0, got {lambda}")));
    }
    let mut w = [0.0; 3];
    let mut eval = objective(&w, data, lambda);
    let mut trace = vec![eval.value];
    let mut iterations = 0;
    while iterations < opt.max_iter {
        let gnorm = norm3(&eval.grad);
        if gnorm <= opt.grad_tol {
            break;
        }
        let mut d = newton_direction(&eval.hessian, &eval.grad).filter(|d| dot3(d, &eval.grad) < 0.0).unwrap_or([
            -eval.grad[0],
            -eval.grad[1],
            -eval.grad[2],
        ]);
        let mut slope = dot3(&d, &eval.grad);
        if slope >= 0.0 {
            d = [-eval.grad[0], -eval.grad[1], -eval.grad[2]];
            slope = -gnorm * gnorm;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let cand = [w[0] + step * d[0], w[1] + step * d[1], w[2] + step * d[2]];
            let v = objective_value(&cand, data, lambda);
            if cand == w {
                break;
            }
            if v.is_finite() && v < eval.value && v <= eval.value + opt.armijo * step * slope {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some(cand) => {
                w = cand;
                eval = objective(&w, data, lambda);
                trace.push(eval.value);
            }
            // No representable decrease left along the search direction.
            None => break,
        }
    }
    let grad_norm = norm3(&eval.grad);
    if grad_norm > opt.fail_tol {
        return Err(Error::NotConverged { grad_norm });
    }
    Ok(TrainReport { classifier: QuadClassifier::new(w, lambda), iterations, grad_norm, objective_trace: trace })
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Closed-form posterior `(1-γ)p_r/p` of a two-Gaussian mixture, written as a
/// sigmoid of a quadratic.
pub fn bayes_classifier(m: &Mixture) -> Result<QuadClassifier> {
    let (r, f) = match (m.retain().as_gaussian(), m.forget().as_gaussian()) {
        (Some(r), Some(f)) => (r, f),
        _ => return Err(Error::invalid("closed-form Bayes weights need two Gaussian components")),
    };
    let g = m.gamma();
    let (mr, vr, mf, vf) = (r.mean(), r.variance(), f.mean(), f.variance());
    let w2 = 1.0 / (2.0 * vf) - 1.0 / (2.0 * vr);
    let w1 = mr / vr - mf / vf;
    let w0 = ((1.0 - g) / g).ln() + 0.5 * (vf / vr).ln() + mf * mf / (2.0 * vf) - mr * mr / (2.0 * vr);
    Ok(QuadClassifier::new([w0, w1, w2], 0.0))
}

/// Exact posterior of an arbitrary mixture, evaluated in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesOracle {
    mixture: Mixture,
}

impl BayesOracle {
    pub fn new(mixture: Mixture) -> Self {
        Self { mixture }
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }
}

impl Classifier for BayesOracle {
    fn predict(&self, z: f64) -> f64 {
        self.ln_predict(z).exp()
    }

    fn ln_predict(&self, z: f64) -> f64 {
        let m = &self.mixture;
        let lp = m.log_density(z);
        if lp == f64::NEG_INFINITY {
            // Outside the support the posterior falls back to the prior.
            return (1.0 - m.gamma()).ln();
        }
        ((1.0 - m.gamma()).ln() + m.retain().log_density(z) - lp).min(0.0)
    }

    fn ln_one_minus_predict(&self, z: f64) -> f64 {
        let m = &self.mixture;
        let lp = m.log_density(z);
        if lp == f64::NEG_INFINITY {
            return m.gamma().ln();
        }
        (m.gamma().ln() + m.forget().log_density(z) - lp).min(0.0)
    }
}

/// Constant prediction, used for baselines and degenerate tilts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantClassifier(pub f64);

impl Classifier for ConstantClassifier {
    fn predict(&self, _z: f64) -> f64 {
        self.0
    }
}

/// Piecewise-constant classifier on two disjoint intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseClassifier {
    pub retain_support: UniformComponent,
    pub forget_support: UniformComponent,
    pub retain_support_value: f64,
    pub forget_support_value: f64,
}

impl PiecewiseClassifier {
    pub fn new(
        retain_support: UniformComponent,
        forget_support: UniformComponent,
        retain_support_value: f64,
        forget_support_value: f64,
    ) -> Result<Self> {
        if retain_support.overlaps(&forget_support) {
            return Err(Error::invalid("piecewise classifier supports must be disjoint"));
        }
        for v in [retain_support_value, forget_support_value] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("classifier values must lie in [0,1], got {v}")));
            }
        }
        Ok(Self { retain_support, forget_support, retain_support_value, forget_support_value })
    }
}

impl Classifier for PiecewiseClassifier {
    fn predict(&self, z: f64) -> f64 {
        if self.forget_support.contains(z) {
            self.forget_support_value
        } else {
            self.retain_support_value
        }
    }
}

/// `ε = 1 - exp(-δ/γ)`: the forget-support value whose excess risk
/// `-γ·ln(1-ε)` is exactly `δ`.
pub fn witness_epsilon(delta: f64, gamma: f64) -> f64 {
    -(-delta / gamma).exp_m1()
}

/// Classifier that is 1 on the retain support and `ε` on the forget support,
/// spending exactly an excess-risk budget of `delta`.
pub fn witness_classifier(
    delta: f64,
    gamma: f64,
    retain_support: UniformComponent,
    forget_support: UniformComponent,
) -> Result<PiecewiseClassifier> {
    if !(delta >= 0.0) || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("witness needs δ >= 0 and γ in (0,1), got δ={delta}, γ={gamma}")));
    }
    PiecewiseClassifier::new(retain_support, forget_support, 1.0, witness_epsilon(delta, gamma))
}

/// Monte Carlo excess risk with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessRisk {
    pub delta_hat: f64,
    pub std_err: f64,
}

impl ExcessRisk {
    /// `δ̂ + 3·SE`, the value bounds are evaluated at.
    pub fn upper(&self) -> f64 {
        (self.delta_hat + 3.0 * self.std_err).max(0.0)
    }
}

/// Estimates `E[ℓ(f̂(z), s) - ℓ(f*(z), s)]` with `(z, s)` drawn jointly from
/// the generative model of `m`.
pub fn estimate_excess_risk<C, B, R>(clf: &C, m: &Mixture, bayes: &B, n_mc: usize, rng: &mut R) -> ExcessRisk
where
    C: Classifier + ?Sized,
    B: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, (z, s)) in m.sample_labeled(rng, n_mc).into_iter().enumerate() {
        let d = clamped_cross_entropy(clf.ln_predict(z), clf.ln_one_minus_predict(z), s)
            - clamped_cross_entropy(bayes.ln_predict(z), bayes.ln_one_minus_predict(z), s);
        let k = (i + 1) as f64;
        let delta = d - mean;
        mean += delta / k;
        m2 += delta * (d - mean);
    }
    let var = if n_mc > 1 { m2 / (n_mc - 1) as f64 } else { 0.0 };
    ExcessRisk { delta_hat: mean, std_err: (var / n_mc as f64).sqrt() }
}

/// Monte Carlo population risk `E[ℓ(f̂(z), s)]` with its standard error.
pub fn estimate_population_risk<C, R>(clf: &C, m: &Mixture, n_mc: usize, rng: &mut R) -> (f64, f64)
where
    C: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    let losses: Vec<f64> = m
        .sample_labeled(rng, n_mc)
        .into_iter()
        .map(|(z, s)| clamped_cross_entropy(clf.ln_predict(z), clf.ln_one_minus_predict(z), s))
        .collect();
    mean_and_se(&losses)
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Tilt factor `μ·f / ((μ-γ)·f + γ(1-μ))` for a classifier trained on data
/// whose forget fraction `μ` differs from the population weight `γ`.
pub fn imbalance_corrected_tilt(f_mu: f64, mu: f64, gamma: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0 && gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("μ and γ must lie in (0,1), got μ={mu}, γ={gamma}")));
    }
    let denom = (mu - gamma) * f_mu + gamma * (1.0 - mu);
    if !(denom > 0.0) {
        return Err(Error::NonPositiveDenominator(denom));
    }
    Ok(mu * f_mu / denom)
}

/// Wraps a classifier trained at forget fraction `mu` so that it tilts a
/// mixture of weight `gamma` towards its retain component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceCorrected<C> {
    inner: C,
    mu: f64,
    gamma: f64,
}

impl<C: Classifier> ImbalanceCorrected<C> {
    pub fn new(inner: C, mu: f64, gamma: f64) -> Result<Self> {
        imbalance_corrected_tilt(0.5, mu, gamma)?;
        Ok(Self { inner, mu, gamma })
    }
}

impl<C: Classifier> Tilt for ImbalanceCorrected<C> {
    fn ln_tilt(&self, z: f64) -> f64 {
        let f = self.inner.predict(z);
        // The denominator is affine in f and positive at f=0 and f=1.
        let denom = (self.mu - self.gamma) * f + self.gamma * (1.0 - self.mu);
        self.mu.ln() + self.inner.ln_predict(z) - denom.ln()
    }
}
