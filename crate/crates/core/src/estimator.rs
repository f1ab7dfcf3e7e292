//! The tempered, tilted estimate `p̂_r(z) = p(z)^{1/T}·f̂(z) / Z` and its
//! partition function.

use rand::Rng;

use crate::classifier::{BayesOracle, Tilt};
use crate::dist::Mixture;
use crate::error::{Error, Result};

/// Absolute tolerance of partition-function quadrature.
pub const PARTITION_TOL: f64 = 1e-11;

/// Default number of draws for importance-sampled partition functions.
pub const DEFAULT_IS_SAMPLES: usize = 100_000;

/// Minimum effective sample size, as a fraction of the draws.
const MIN_ESS_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionMethod {
    Quadrature,
    ImportanceSampling { n_mc: usize },
}

#[derive(Debug, Clone)]
pub struct T3Estimator<C> {
    mixture: Mixture,
    classifier: C,
    temperature: f64,
    partition: f64,
    ln_partition: f64,
    method: PartitionMethod,
    partition_std_err: f64,
}

impl<C: Tilt> T3Estimator<C> {
    /// Normalizes `p^{1/T}·f̂` with the requested method. The RNG is only
    /// consumed by importance sampling.
    pub fn build<R: Rng + ?Sized>(
        mixture: Mixture,
        classifier: C,
        temperature: f64,
        method: PartitionMethod,
        rng: &mut R,
    ) -> Result<Self> {
        check_temperature(temperature)?;
        let (partition, std_err) = match method {
            PartitionMethod::Quadrature => (quadrature_partition(&mixture, &classifier, temperature)?, 0.0),
            PartitionMethod::ImportanceSampling { n_mc } => {
                importance_sampled_partition(&mixture, &classifier, temperature, n_mc, rng)?
            }
        };
        Self::from_parts(mixture, classifier, temperature, partition, method, std_err)
    }

    /// Quadrature-normalized estimator; needs no randomness.
    pub fn with_quadrature(mixture: Mixture, classifier: C, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        let partition = quadrature_partition(&mixture, &classifier, temperature)?;
        Self::from_parts(mixture, classifier, temperature, partition, PartitionMethod::Quadrature, 0.0)
    }

    fn from_parts(
        mixture: Mixture,
        classifier: C,
        temperature: f64,
        partition: f64,
        method: PartitionMethod,
        partition_std_err: f64,
    ) -> Result<Self> {
        if !(partition > 0.0) || !partition.is_finite() {
            return Err(Error::invalid(format!("partition function must be positive and finite, got {partition}")));
        }
        Ok(Self {
            mixture,
            classifier,
            temperature,
            partition,
            ln_partition: partition.ln(),
            method,
            partition_std_err,
        })
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn classifier(&self) -> &C {
        &self.classifier
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn partition(&self) -> f64 {
        self.partition
    }

    pub fn ln_partition(&self) -> f64 {
        self.ln_partition
    }

    pub fn partition_method(&self) -> PartitionMethod {
        self.method
    }

    pub fn partition_std_err(&self) -> f64 {
        self.partition_std_err
    }

    /// `ln p(z)/T + ln f̂(z)`, before normalization.
    pub fn ln_unnormalized(&self, z: f64) -> f64 {
        ln_tilted(&self.mixture, &self.classifier, self.temperature, z)
    }

    pub fn ln_density(&self, z: f64) -> f64 {
        self.ln_unnormalized(z) - self.ln_partition
    }

    pub fn density(&self, z: f64) -> f64 {
        self.ln_density(z).exp()
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be >= 1, got {t}")))
    }
}

fn ln_tilted<C: Tilt + ?Sized>(m: &Mixture, clf: &C, temperature: f64, z: f64) -> f64 {
    let lp = m.log_density(z);
    if lp == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lf = clf.ln_tilt(z);
    if lf == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    lp / temperature + lf
}

/// `∫ p^{1/T}·f̂` by adaptive Simpson over the mixture's integration window.
pub fn quadrature_partition<C: Tilt + ?Sized>(m: &Mixture, clf: &C, temperature: f64) -> Result<f64> {
    m.integrate(|z| ln_tilted(m, clf, temperature, z).exp(), temperature, PARTITION_TOL)
}

/// Importance-sampled `∫ p^{1/T}·f̂` and its standard error.
///
/// The proposal is the sum of the separately tempered components, weighted
/// as if they did not overlap; the importance weights use the exact
/// `p^{1/T}·f̂`, so overlap only costs variance.
pub fn importance_sampled_partition<C, R>(
    m: &Mixture,
    clf: &C,
    temperature: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<(f64, f64)>
where
    C: Tilt + ?Sized,
    R: Rng + ?Sized,
{
    if n_mc < 2 {
        return Err(Error::invalid("importance sampling needs at least two draws"));
    }
    let g = m.gamma();
    let (retain_t, zr) = m.retain().temper(temperature)?;
    let (forget_t, zf) = m.forget().temper(temperature)?;
    let wr = (1.0 - g).powf(1.0 / temperature) * zr;
    let wf = g.powf(1.0 / temperature) * zf;
    let pr = wr / (wr + wf);
    let ln_q =
        |z: f64| crate::dist::log_add(pr.ln() + retain_t.log_density(z), (1.0 - pr).ln() + forget_t.log_density(z));
    let mut weights = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let z = if rng.random::<f64>() < pr { retain_t.sample_one(rng) } else { forget_t.sample_one(rng) };
        let lt = ln_tilted(m, clf, temperature, z);
        weights.push(if lt == f64::NEG_INFINITY { 0.0 } else { (lt - ln_q(z)).exp() });
    }
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    let ess = if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 };
    if ess < MIN_ESS_FRACTION * n_mc as f64 {
        return Err(Error::DegenerateImportanceWeights { ess, n: n_mc });
    }
    let (mean, se) = crate::classifier::mean_and_se(&weights);
    Ok((mean, se))
}

/// The τ-tempered oracle `p_r^{(τ)} ∝ p^{1/τ}·f*`, normalized by quadrature.
pub fn tempered_oracle(m: &Mixture, tau: f64) -> Result<T3Estimator<BayesOracle>> {
    T3Estimator::with_quadrature(*m, BayesOracle::new(*m), tau)
}
