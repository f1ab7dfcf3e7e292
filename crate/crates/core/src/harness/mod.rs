//! Seeded sweeps over the Gaussian world: λ search, the temperature sweeps
//! over forget sharpness and sample size, the bound-soundness sweep, and
//! their CSV/SVG output.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundReport};
use crate::classifier::{
    bayes_classifier, estimate_excess_risk, estimate_population_risk, mean_and_se, train, BayesOracle, Classifier,
    LabeledDataset, OptimizerConfig,
};
use crate::dist::Mixture;
use crate::error::{Error, Result};
use crate::estimator::{quadrature_partition, T3Estimator};
use crate::metrics::{forget_error, retain_error, SampleCache, WitnessInstance};

pub mod checks;
pub mod emit;

pub use emit::{csv_string, emit, parse_csv, svg_string, write_csv, write_svgs, Metric, CSV_HEADER};

/// Environment variable that replaces `base_seed`.
pub const SEED_ENV: &str = "T3_SEED";

// Stream tags keep λ-search and soundness draws apart from sweep trials.
const LAMBDA_STREAM: u64 = 0x6c61_6d62_6461;
const SOUNDNESS_STREAM: u64 = 0x736f_756e_6421;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub mu_r: f64,
    pub mu_f: f64,
    pub v_r: f64,
    /// Forget variances of the sharpness sweep.
    pub v_f: Vec<f64>,
    /// Sample size of the sharpness sweep.
    pub n: usize,
    /// Sample sizes of the sample-size sweep.
    pub n_list: Vec<usize>,
    /// Forget variance of the sample-size sweep.
    pub sweep_n_v_f: f64,
    pub temperatures: Vec<f64>,
    pub trials: usize,
    pub lambda_grid: Vec<f64>,
    pub lambda_trials: usize,
    /// Monte Carlo draws per error, excess-risk and population-risk estimate.
    pub n_mc: usize,
    pub base_seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub soundness_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            mu_r: 1.0,
            mu_f: 0.0,
            v_r: 1.0,
            v_f: vec![1e-6, 1e-3, 1.0],
            n: 100,
            n_list: vec![25, 50, 100, 200, 400],
            sweep_n_v_f: 1e-3,
            temperatures: (10..=30).map(|i| i as f64 / 10.0).collect(),
            trials: 200,
            lambda_grid: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0],
            lambda_trials: 10,
            n_mc: 100_000,
            base_seed: 0,
            workers: 0,
            soundness_trials: 50,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the `T3_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.base_seed =
                v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config fields are plain TOML values")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0,1), got {}", self.gamma));
        }
        if !(self.v_r > 0.0) || self.v_f.iter().chain([&self.sweep_n_v_f]).any(|v| !(*v > 0.0)) {
            return bad("variances must be positive".into());
        }
        if !self.mu_r.is_finite() || !self.mu_f.is_finite() {
            return bad("means must be finite".into());
        }
        if self.temperatures.is_empty() || self.temperatures.iter().any(|t| !(*t >= 1.0) || !t.is_finite()) {
            return bad("temperatures must be a nonempty list of finite values >= 1".into());
        }
        if self.trials == 0 || self.lambda_trials == 0 {
            return bad("trials and lambda_trials must be >= 1".into());
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("lambda_grid must be a nonempty list of finite values >= 0".into());
        }
        if self.n < 2 || self.n_list.iter().any(|&n| n < 2) {
            return bad("sample sizes must be >= 2".into());
        }
        if self.n_mc < 2 {
            return bad("n_mc must be >= 2".into());
        }
        Ok(())
    }

    pub fn mixture(&self, v_f: f64) -> Result<Mixture> {
        Mixture::gaussian(self.gamma, self.mu_r, self.v_r, self.mu_f, v_f)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index`: a function of `(base_seed, index)` only.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ index)
}

fn stream_seed(base_seed: u64, stream: u64, index: u64) -> u64 {
    trial_seed(splitmix64(base_seed ^ stream), index)
}

/// One `(trial, T)` point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub v_f: f64,
    pub n: usize,
    pub temperature: f64,
    pub lambda: f64,
    pub delta_hat: f64,
    pub delta_se: f64,
    pub retain_err: f64,
    pub retain_se: f64,
    pub forget_err: f64,
    pub forget_se: f64,
    /// Seconds spent on the whole trial; not written to CSV.
    pub wall_time: f64,
}

/// Across-trial mean and standard error at one `(v_f, n, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub v_f: f64,
    pub n: usize,
    pub temperature: f64,
    pub lambda: f64,
    pub trials: usize,
    pub retain_mean: f64,
    pub retain_se: f64,
    pub forget_mean: f64,
    pub forget_se: f64,
    pub delta_mean: f64,
}

/// Which parameter distinguishes the series of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ForgetVariance,
    SampleSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub name: String,
    pub axis: SweepAxis,
    pub records: Vec<TrialRecord>,
}

impl SweepTable {
    pub fn new(name: impl Into<String>, axis: SweepAxis) -> Self {
        Self { name: name.into(), axis, records: Vec::new() }
    }

    /// Distinct `(v_f, n)` settings in first-appearance order.
    pub fn settings(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in &self.records {
            if !out.iter().any(|&(v, n)| v == r.v_f && n == r.n) {
                out.push((r.v_f, r.n));
            }
        }
        out
    }

    /// Per-temperature summary of one setting, in ascending `T`.
    pub fn summary(&self, v_f: f64, n: usize) -> Vec<SummaryRow> {
        let mut by_t: BTreeMap<u64, Vec<&TrialRecord>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.v_f == v_f && r.n == n) {
            by_t.entry(r.temperature.to_bits()).or_default().push(r);
        }
        let mut rows: Vec<SummaryRow> = by_t
            .into_values()
            .map(|rs| {
                let retain: Vec<f64> = rs.iter().map(|r| r.retain_err).collect();
                let forget: Vec<f64> = rs.iter().map(|r| r.forget_err).collect();
                let delta: Vec<f64> = rs.iter().map(|r| r.delta_hat).collect();
                let (retain_mean, retain_se) = mean_and_se(&retain);
                let (forget_mean, forget_se) = mean_and_se(&forget);
                SummaryRow {
                    v_f,
                    n,
                    temperature: rs[0].temperature,
                    lambda: rs[0].lambda,
                    trials: rs.len(),
                    retain_mean,
                    retain_se,
                    forget_mean,
                    forget_se,
                    delta_mean: mean_and_se(&delta).0,
                }
            })
            .collect();
        rows.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
        rows
    }

    /// Temperature with the lowest mean Forget Error; ties go to the smaller `T`.
    pub fn forget_argmin(&self, v_f: f64, n: usize) -> Option<f64> {
        let rows = self.summary(v_f, n);
        let mut best: Option<&SummaryRow> = None;
        for r in &rows {
            if best.is_none_or(|b| r.forget_mean < b.forget_mean) {
                best = Some(r);
            }
        }
        best.map(|r| r.temperature)
    }
}

/// `λ` from the grid with the lowest mean population risk over
/// `lambda_trials` fresh datasets; every `λ` sees the same datasets and the
/// same evaluation draws, and exact ties go to the larger `λ`.
pub fn lambda_search(cfg: &ExperimentConfig, v_f: f64, n: usize) -> Result<f64> {
    let m = cfg.mixture(v_f)?;
    let opt = OptimizerConfig::default();
    let tag = v_f.to_bits() ^ (n as u64).rotate_left(32);
    let mut risks = vec![0.0; cfg.lambda_grid.len()];
    for j in 0..cfg.lambda_trials {
        let seed = stream_seed(cfg.base_seed, LAMBDA_STREAM ^ tag, j as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = LabeledDataset::sample(&m, &mut rng, n)?;
        let eval_seed = rng.random::<u64>();
        for (k, &lambda) in cfg.lambda_grid.iter().enumerate() {
            let clf = train(&data, lambda, &opt)?;
            let (risk, _) = estimate_population_risk(&clf, &m, cfg.n_mc, &mut ChaCha8Rng::seed_from_u64(eval_seed));
            risks[k] += risk / cfg.lambda_trials as f64;
        }
    }
    let mut best = 0;
    for k in 1..risks.len() {
        let better = risks[k] < risks[best];
        let tie_larger = risks[k] == risks[best] && cfg.lambda_grid[k] > cfg.lambda_grid[best];
        if better || tie_larger {
            best = k;
        }
    }
    Ok(cfg.lambda_grid[best])
}

/// Trains on one fresh dataset and measures both errors at every temperature.
/// The MC draws are shared across temperatures.
pub fn run_trial(cfg: &ExperimentConfig, v_f: f64, n: usize, lambda: f64, index: u64) -> Result<Vec<TrialRecord>> {
    let start = Instant::now();
    let m = cfg.mixture(v_f)?;
    let seed = trial_seed(cfg.base_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = LabeledDataset::sample(&m, &mut rng, n)?;
    let clf = train(&data, lambda, &OptimizerConfig::default())?;
    let risk = estimate_excess_risk(&clf, &m, &BayesOracle::new(m), cfg.n_mc, &mut rng);
    let cache = SampleCache::new(&m, &clf, cfg.n_mc, &mut rng);
    let mut out = Vec::with_capacity(cfg.temperatures.len());
    for &t in &cfg.temperatures {
        let z = quadrature_partition(&m, &clf, t)?;
        let (retain, forget) = cache.errors(t, z.ln());
        out.push(TrialRecord {
            seed,
            v_f,
            n,
            temperature: t,
            lambda,
            delta_hat: risk.delta_hat,
            delta_se: risk.std_err,
            retain_err: retain.value,
            retain_se: retain.std_err,
            forget_err: forget.value,
            forget_se: forget.std_err,
            wall_time: 0.0,
        });
    }
    let elapsed = start.elapsed().as_secs_f64();
    for r in &mut out {
        r.wall_time = elapsed;
    }
    Ok(out)
}

fn run_settings(cfg: &ExperimentConfig, name: &str, axis: SweepAxis, settings: &[(f64, usize)]) -> Result<SweepTable> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let mut table = SweepTable::new(name, axis);
    for &(v_f, n) in settings {
        let lambda = pool.install(|| lambda_search(cfg, v_f, n))?;
        let trials: Vec<Vec<TrialRecord>> = pool.install(|| {
            (0..cfg.trials as u64).into_par_iter().map(|i| run_trial(cfg, v_f, n, lambda, i)).collect::<Result<_>>()
        })?;
        table.records.extend(trials.into_iter().flatten());
    }
    Ok(table)
}

/// Temperature sweep for each forget variance in `cfg.v_f` at sample size `cfg.n`.
pub fn run_experiment1(cfg: &ExperimentConfig) -> Result<SweepTable> {
    let settings: Vec<(f64, usize)> = cfg.v_f.iter().map(|&v| (v, cfg.n)).collect();
    run_settings(cfg, "sweep_vf", SweepAxis::ForgetVariance, &settings)
}

/// Temperature sweep for each sample size in `cfg.n_list` at `cfg.sweep_n_v_f`.
pub fn run_experiment2(cfg: &ExperimentConfig) -> Result<SweepTable> {
    let settings: Vec<(f64, usize)> = cfg.n_list.iter().map(|&n| (cfg.sweep_n_v_f, n)).collect();
    run_settings(cfg, "sweep_n", SweepAxis::SampleSize, &settings)
}

/// Randomized Gaussian instance for the soundness sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomInstance {
    pub mixture: Mixture,
    pub n: usize,
    pub lambda: f64,
}

pub fn random_instance<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<RandomInstance> {
    let gamma = rng.random_range(0.05..0.5);
    let mu_r = rng.random_range(-2.0..2.0);
    let mu_f = rng.random_range(-2.0..2.0);
    let v_r = 10f64.powf(rng.random_range(-0.6..0.6));
    let v_f = 10f64.powf(rng.random_range(-4.0..0.6));
    let sizes = [25, 50, 100, 200, 400];
    let n = sizes[rng.random_range(0..sizes.len())];
    let lambda = cfg.lambda_grid[rng.random_range(0..cfg.lambda_grid.len())];
    Ok(RandomInstance { mixture: Mixture::gaussian(gamma, mu_r, v_r, mu_f, v_f)?, n, lambda })
}

/// `E_p|f* − f̂|` by Monte Carlo.
pub fn classifier_l1_gap<C, B, R>(clf: &C, bayes: &B, m: &Mixture, n_mc: usize, rng: &mut R) -> (f64, f64)
where
    C: Classifier + ?Sized,
    B: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    let gaps: Vec<f64> = m.sample(rng, n_mc).into_iter().map(|z| (clf.predict(z) - bayes.predict(z)).abs()).collect();
    mean_and_se(&gaps)
}

/// Temperature at which the tempered guarantees are exercised.
const SOUNDNESS_TEMPERATURE: f64 = 2.0;

fn instance_inputs(m: &Mixture, extra: &[(&str, f64)]) -> BTreeMap<String, f64> {
    let mut inputs = BTreeMap::new();
    inputs.insert("gamma".to_string(), m.gamma());
    inputs.insert("mu_r".to_string(), m.retain().mean());
    inputs.insert("v_r".to_string(), m.retain().variance());
    inputs.insert("mu_f".to_string(), m.forget().mean());
    inputs.insert("v_f".to_string(), m.forget().variance());
    for (k, v) in extra {
        inputs.insert((*k).to_string(), *v);
    }
    inputs
}

/// Every guarantee checked on one classifier of one instance, with the
/// excess risk taken as `δ̂ + 3·SE`.
fn gaussian_reports<C, R>(
    m: &Mixture,
    clf: &C,
    extra: &[(&str, f64)],
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<BoundReport>>
where
    C: Classifier + Clone,
    R: Rng + ?Sized,
{
    let g = m.gamma();
    let bayes = BayesOracle::new(*m);
    let risk = estimate_excess_risk(clf, m, &bayes, n_mc, rng);
    let delta = risk.upper();
    let mut extra = extra.to_vec();
    extra.extend([("delta_hat", risk.delta_hat), ("delta_se", risk.std_err), ("delta", delta)]);
    let inputs = instance_inputs(m, &extra);

    let e1 = T3Estimator::with_quadrature(*m, clf.clone(), 1.0)?;
    let retain1 = retain_error(&e1, m, n_mc, rng);
    let forget1 = forget_error(&e1, m, n_mc, rng);
    let (gap, gap_se) = classifier_l1_gap(clf, &bayes, m, n_mc, rng);

    let t = SOUNDNESS_TEMPERATURE;
    let et = T3Estimator::with_quadrature(*m, clf.clone(), t)?;
    let retain_t = retain_error(&et, m, n_mc, rng);
    let forget_t = forget_error(&et, m, n_mc, rng);
    let grid = bounds::tau_grid(t, bounds::TAU_GRID_POINTS);
    let mut inputs_t = inputs.clone();
    inputs_t.insert("T".to_string(), t);

    let mut k_inputs = inputs_t.clone();
    let k = bounds::default_k(t);
    k_inputs.insert("k".to_string(), k);

    Ok(vec![
        BoundReport::upper(
            "thm1",
            inputs.clone(),
            bounds::thm1_retain_bound(delta, g)?,
            retain1.value,
            retain1.std_err,
        ),
        BoundReport::upper(
            "thm2",
            inputs.clone(),
            bounds::thm2_forget_bound(delta, g, m.forget_peak())?,
            forget1.value,
            forget1.std_err,
        ),
        BoundReport::upper("lemma1", inputs.clone(), bounds::lemma1_l1_bound(delta)?, gap, gap_se),
        BoundReport::lower(
            "lemma2",
            inputs_t.clone(),
            bounds::lemma2_partition_lower_bound(m, delta, t)?,
            et.partition(),
            0.0,
        ),
        BoundReport::upper(
            "thm4",
            k_inputs,
            bounds::thm4_forget_bound(m, delta, t, k, &grid)?,
            forget_t.value,
            forget_t.std_err,
        ),
        BoundReport::upper(
            "thm5",
            inputs_t,
            bounds::thm5_retain_bound(m, delta, t, &grid)?,
            retain_t.value,
            retain_t.std_err,
        ),
    ])
}

/// Number of Bayes-oracle and witness trials added to the trained ones.
const SOUNDNESS_EXTRA_TRIALS: usize = 5;

/// Trained classifiers on `cfg.soundness_trials` random instances, Bayes
/// oracles on a few more, and witness classifiers against the lower bound.
pub fn run_soundness_sweep(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let n_mc = cfg.n_mc;
    let trained: Vec<Vec<BoundReport>> = pool.install(|| {
        (0..cfg.soundness_trials as u64)
            .into_par_iter()
            .map(|i| {
                let seed = stream_seed(cfg.base_seed, SOUNDNESS_STREAM, i);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inst = random_instance(cfg, &mut rng)?;
                let data = LabeledDataset::sample(&inst.mixture, &mut rng, inst.n)?;
                let clf = train(&data, inst.lambda, &OptimizerConfig::default())?;
                let extra = [("trial", i as f64), ("n", inst.n as f64), ("lambda", inst.lambda)];
                gaussian_reports(&inst.mixture, &clf, &extra, n_mc, &mut rng)
            })
            .collect::<Result<_>>()
    })?;
    let mut out: Vec<BoundReport> = trained.into_iter().flatten().collect();

    for i in 0..SOUNDNESS_EXTRA_TRIALS as u64 {
        let seed = stream_seed(cfg.base_seed, SOUNDNESS_STREAM ^ 1, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(cfg, &mut rng)?;
        let bayes = bayes_classifier(&inst.mixture)?;
        let extra = [("trial", i as f64), ("bayes", 1.0)];
        out.extend(gaussian_reports(&inst.mixture, &bayes, &extra, n_mc, &mut rng)?);
    }

    for i in 0..SOUNDNESS_EXTRA_TRIALS as u64 {
        let seed = stream_seed(cfg.base_seed, SOUNDNESS_STREAM ^ 2, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = rng.random_range(0.05..0.5);
        let delta = 10f64.powf(rng.random_range(-4.0..-1.0));
        let w = WitnessInstance::unit(gamma, delta)?;
        let m = w.mixture()?;
        let e = w.estimator()?;
        let forget = forget_error(&e, &m, n_mc, &mut rng);
        let mut inputs = BTreeMap::new();
        inputs.insert("trial".to_string(), i as f64);
        inputs.insert("gamma".to_string(), gamma);
        inputs.insert("delta".to_string(), delta);
        out.push(BoundReport::lower(
            "thm3",
            inputs,
            bounds::thm3_forget_lower_bound(delta, gamma, m.forget_peak())?,
            forget.value,
            forget.std_err,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            v_f: vec![1e-3, 1.0],
            n_list: vec![25, 100],
            temperatures: vec![1.0, 2.0],
            trials: 3,
            lambda_grid: vec![1e-3, 1e-1],
            lambda_trials: 2,
            n_mc: 2_000,
            base_seed: 11,
            workers: 1,
            soundness_trials: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_follow_the_synthetic_setup() {
        let c = ExperimentConfig::default();
        assert_eq!((c.gamma, c.mu_r, c.mu_f, c.v_r), (0.1, 1.0, 0.0, 1.0));
        assert_eq!(c.v_f, vec![1e-6, 1e-3, 1.0]);
        assert_eq!(c.temperatures.len(), 21);
        assert_eq!(c.temperatures[0], 1.0);
        assert_eq!(c.temperatures[5], 1.5);
        assert_eq!(c.temperatures[20], 3.0);
        assert_eq!(c.trials, 200);
        assert_eq!(c.lambda_grid.len(), 9);
        c.validate().unwrap();
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = ExperimentConfig::from_toml_str("trials = 7\nv_f = [0.5]\nbase_seed = 3\n").unwrap();
        assert_eq!(c.trials, 7);
        assert_eq!(c.v_f, vec![0.5]);
        assert_eq!(c.base_seed, 3);
        assert_eq!(c.gamma, 0.1);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml_str("tirals = 3"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml_str("temperatures = [0.5, 1.0]").is_err());
        assert!(ExperimentConfig::from_toml_str("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("gamma = 1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("lambda_grid = []").is_err());
    }

    #[test]
    fn seed_override() {
        let mut c = ExperimentConfig::default();
        c.apply_seed_override(None).unwrap();
        assert_eq!(c.base_seed, 0);
        c.apply_seed_override(Some(" 42 ")).unwrap();
        assert_eq!(c.base_seed, 42);
        assert!(c.apply_seed_override(Some("-1")).is_err());
    }

    #[test]
    fn load_reports_missing_file_path() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/t3.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/t3.toml"));
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..1000).map(|i| trial_seed(5, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(trial_seed(5, 17), seeds[17]);
        assert_ne!(trial_seed(6, 17), seeds[17]);
    }

    #[test]
    fn single_lambda_grid_returns_it() {
        let cfg = ExperimentConfig { lambda_grid: vec![0.37], ..small() };
        assert_eq!(lambda_search(&cfg, 1e-3, 50).unwrap(), 0.37);
    }

    #[test]
    fn lambda_search_separates_clear_winner_deterministically() {
        // λ = 100 pins f̂ near 1/2, far worse than λ = 1e-3.
        let cfg = ExperimentConfig { lambda_grid: vec![100.0, 1e-3], ..small() };
        let a = lambda_search(&cfg, 1.0, 100).unwrap();
        let b = lambda_search(&cfg, 1.0, 100).unwrap();
        assert_eq!(a, 1e-3);
        assert_eq!(a, b);
    }

    #[test]
    fn trials_do_not_depend_on_their_neighbours() {
        let cfg = small();
        let three = run_trial(&cfg, 1e-3, 50, 1e-2, 2).unwrap();
        let more = ExperimentConfig { trials: 9, base_seed: cfg.base_seed, ..small() };
        let again = run_trial(&more, 1e-3, 50, 1e-2, 2).unwrap();
        let strip =
            |rs: Vec<TrialRecord>| rs.into_iter().map(|r| TrialRecord { wall_time: 0.0, ..r }).collect::<Vec<_>>();
        assert_eq!(strip(three), strip(again));
    }

    #[test]
    fn experiment_tables_have_every_point() {
        let cfg = small();
        let t1 = run_experiment1(&cfg).unwrap();
        assert_eq!(t1.records.len(), 2 * 3 * 2);
        assert_eq!(t1.settings(), vec![(1e-3, 100), (1.0, 100)]);
        let t2 = run_experiment2(&cfg).unwrap();
        assert_eq!(t2.settings(), vec![(1e-3, 25), (1e-3, 100)]);
        for r in t1.records.iter().chain(&t2.records) {
            assert!(r.delta_se >= 0.0 && r.retain_se >= 0.0 && r.forget_se >= 0.0);
            assert!(r.wall_time >= 0.0);
            assert!(cfg.lambda_grid.contains(&r.lambda));
        }
        let rows = t1.summary(1.0, 100);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].trials, 3);
        let mean: f64 =
            t1.records.iter().filter(|r| r.v_f == 1.0 && r.temperature == 2.0).map(|r| r.forget_err).sum::<f64>() / 3.0;
        assert!((rows[1].forget_mean - mean).abs() < 1e-15);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let a = run_experiment1(&small()).unwrap();
        let b = run_experiment1(&ExperimentConfig { workers: 3, ..small() }).unwrap();
        assert_eq!(csv_string(&a), csv_string(&b));
    }

    #[test]
    fn argmin_prefers_lower_mean_then_smaller_t() {
        let rec = |t: f64, f: f64| TrialRecord {
            seed: 0,
            v_f: 1.0,
            n: 10,
            temperature: t,
            lambda: 0.1,
            delta_hat: 0.0,
            delta_se: 0.0,
            retain_err: 0.0,
            retain_se: 0.0,
            forget_err: f,
            forget_se: 0.0,
            wall_time: 0.0,
        };
        let mut t = SweepTable::new("x", SweepAxis::ForgetVariance);
        t.records = vec![rec(2.0, 0.5), rec(1.0, 0.5), rec(3.0, 0.7)];
        assert_eq!(t.forget_argmin(1.0, 10), Some(1.0));
        t.records.push(rec(2.5, 0.1));
        assert_eq!(t.forget_argmin(1.0, 10), Some(2.5));
        assert_eq!(t.forget_argmin(2.0, 10), None);
    }

    #[test]
    fn soundness_sweep_reports_every_guarantee() {
        let reports = run_soundness_sweep(&small()).unwrap();
        for name in ["thm1", "thm2", "lemma1", "lemma2", "thm4", "thm5"] {
            assert_eq!(reports.iter().filter(|r| r.bound_name == name).count(), 4 + SOUNDNESS_EXTRA_TRIALS, "{name}");
        }
        assert_eq!(reports.iter().filter(|r| r.bound_name == "thm3").count(), SOUNDNESS_EXTRA_TRIALS);
        for r in &reports {
            if matches!(r.bound_name.as_str(), "thm1" | "thm2" | "thm3") {
                assert!(r.sound, "{r:?}");
            }
            assert!(r.measured_std_err >= 0.0);
        }
        // Bayes-oracle trials measure essentially zero error.
        for r in reports.iter().filter(|r| r.inputs.contains_key("bayes") && r.bound_name == "thm1") {
            assert!(r.measured_value.abs() < 1e-6, "{r:?}");
        }
    }
}
