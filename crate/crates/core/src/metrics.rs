//! Retain Error `KL(p_r ‖ p̂_r)` and Forget Error `E_{p_f}|p_r − p̂_r|`.

use rand::Rng;

use crate::classifier::{mean_and_se, witness_classifier, witness_epsilon, PiecewiseClassifier, Tilt, PRED_CLAMP};
use crate::dist::{Mixture, UniformComponent};
use crate::error::{Error, Result};
use crate::estimator::T3Estimator;

/// Default number of Monte Carlo draws per error.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_mc: usize,
}

impl ErrorEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let (value, std_err) = mean_and_se(xs);
        Self { value, std_err, n_mc: xs.len() }
    }
}

/// `ln p̂(z)` with the tilt clamped below at [`PRED_CLAMP`].
fn clamped_ln_estimate(ln_p: f64, ln_f: f64, temperature: f64, ln_partition: f64) -> f64 {
    ln_p / temperature + ln_f.max(PRED_CLAMP.ln()) - ln_partition
}

/// Monte Carlo `KL(p_r ‖ p̂)` over `z ∼ p_r`.
pub fn retain_error<C, R>(e: &T3Estimator<C>, m: &Mixture, n_mc: usize, rng: &mut R) -> ErrorEstimate
where
    C: Tilt,
    R: Rng + ?Sized,
{
    let est = e.mixture();
    let terms: Vec<f64> = m
        .retain()
        .sample(rng, n_mc)
        .into_iter()
        .map(|z| {
            let ln_hat =
                clamped_ln_estimate(est.log_density(z), e.classifier().ln_tilt(z), e.temperature(), e.ln_partition());
            m.retain().log_density(z) - ln_hat
        })
        .collect();
    ErrorEstimate::from_samples(&terms)
}

/// Monte Carlo `E_{p_f}|p_r − p̂|`.
pub fn forget_error<C, R>(e: &T3Estimator<C>, m: &Mixture, n_mc: usize, rng: &mut R) -> ErrorEstimate
where
    C: Tilt,
    R: Rng + ?Sized,
{
    let terms: Vec<f64> =
        m.forget().sample(rng, n_mc).into_iter().map(|z| (m.retain().density(z) - e.density(z)).abs()).collect();
    ErrorEstimate::from_samples(&terms)
}

/// Draws from `p_r` and `p_f` with the temperature-independent quantities
/// precomputed, so one trained classifier can be scored at many
/// temperatures on common random numbers.
#[derive(Debug, Clone)]
pub struct SampleCache {
    // (ln p_r, ln p, ln f̂) at z ∼ p_r
    retain: Vec<[f64; 3]>,
    // (p_r, ln p, ln f̂) at z ∼ p_f
    forget: Vec<[f64; 3]>,
}

impl SampleCache {
    pub fn new<C, R>(m: &Mixture, clf: &C, n_mc: usize, rng: &mut R) -> Self
    where
        C: Tilt + ?Sized,
        R: Rng + ?Sized,
    {
        let retain = m
            .retain()
            .sample(rng, n_mc)
            .into_iter()
            .map(|z| [m.retain().log_density(z), m.log_density(z), clf.ln_tilt(z)])
            .collect();
        let forget = m
            .forget()
            .sample(rng, n_mc)
            .into_iter()
            .map(|z| [m.retain().density(z), m.log_density(z), clf.ln_tilt(z)])
            .collect();
        Self { retain, forget }
    }

    pub fn n_mc(&self) -> usize {
        self.retain.len()
    }

    /// Retain and Forget Error of `p^{1/T}·f̂ / exp(ln_partition)`.
    pub fn errors(&self, temperature: f64, ln_partition: f64) -> (ErrorEstimate, ErrorEstimate) {
        let retain: Vec<f64> = self
            .retain
            .iter()
            .map(|&[ln_pr, ln_p, ln_f]| ln_pr - clamped_ln_estimate(ln_p, ln_f, temperature, ln_partition))
            .collect();
        let forget: Vec<f64> = self
            .forget
            .iter()
            .map(|&[pr, ln_p, ln_f]| {
                let hat = if ln_f == f64::NEG_INFINITY || ln_p == f64::NEG_INFINITY {
                    0.0
                } else {
                    (ln_p / temperature + ln_f - ln_partition).exp()
                };
                (pr - hat).abs()
            })
            .collect();
        (ErrorEstimate::from_samples(&retain), ErrorEstimate::from_samples(&forget))
    }

    pub fn errors_for<C: Tilt>(&self, e: &T3Estimator<C>) -> (ErrorEstimate, ErrorEstimate) {
        self.errors(e.temperature(), e.ln_partition())
    }
}

/// The disjoint-uniform instance on which the excess-risk budget `delta`
/// is spent entirely on the forget support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessInstance {
    pub gamma: f64,
    pub delta: f64,
    pub retain_support: UniformComponent,
    pub forget_support: UniformComponent,
}

impl WitnessInstance {
    pub fn new(
        gamma: f64,
        delta: f64,
        retain_support: UniformComponent,
        forget_support: UniformComponent,
    ) -> Result<Self> {
        if retain_support.overlaps(&forget_support) {
            return Err(Error::invalid("witness supports must be disjoint"));
        }
        if !(gamma > 0.0 && gamma < 1.0) || !(delta >= 0.0) {
            return Err(Error::invalid(format!("witness needs γ in (0,1) and δ >= 0, got γ={gamma}, δ={delta}")));
        }
        Ok(Self { gamma, delta, retain_support, forget_support })
    }

    /// Retain support `[-2, -1]`, forget support `[0, 1]`.
    pub fn unit(gamma: f64, delta: f64) -> Result<Self> {
        Self::new(gamma, delta, UniformComponent::new(-2.0, -1.0)?, UniformComponent::new(0.0, 1.0)?)
    }

    pub fn epsilon(&self) -> f64 {
        witness_epsilon(self.delta, self.gamma)
    }

    pub fn mixture(&self) -> Result<Mixture> {
        Mixture::new(self.gamma, self.retain_support, self.forget_support)
    }

    pub fn classifier(&self) -> Result<PiecewiseClassifier> {
        witness_classifier(self.delta, self.gamma, self.retain_support, self.forget_support)
    }

    /// The untempered estimator built from the witness classifier.
    pub fn estimator(&self) -> Result<T3Estimator<PiecewiseClassifier>> {
        T3Estimator::with_quadrature(self.mixture()?, self.classifier()?, 1.0)
    }
}

/// Exact `(retain, forget)` errors of the witness estimator.
pub fn closed_form_errors(w: &WitnessInstance) -> Result<(f64, f64)> {
    if w.retain_support.overlaps(&w.forget_support) {
        return Err(Error::invalid("closed forms need disjoint supports"));
    }
    let g = w.gamma;
    let eps = w.epsilon();
    let norm = (1.0 - g) + g * eps;
    let retain = (norm / (1.0 - g)).ln();
    let forget = w.forget_support.peak_density() * g * eps / norm;
    Ok((retain, forget))
}
