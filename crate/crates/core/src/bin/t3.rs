use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use t3_core::bounds::{thm3_forget_lower_bound, BoundKind};
use t3_core::harness::{self, checks, ExperimentConfig, SweepTable};
use t3_core::metrics::{closed_form_errors, forget_error, retain_error, WitnessInstance, DEFAULT_MC_SAMPLES};
use t3_core::tinylm::{run_unlearning, TinyCorpus, UnlearnConfig};

#[derive(Parser)]
#[command(
    name = "t3",
    version,
    about = "Tempered, tilted density-ratio unlearning: sweeps, bounds and a toy language model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file of experiment settings; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV, charts and effective config.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `trials` from the config.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides `workers` from the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Temperature sweep over forget variances.
    SweepVf(SweepArgs),
    /// Temperature sweep over sample sizes.
    SweepN(SweepArgs),
    /// Evaluate every bound against measured errors on random instances.
    Bounds {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `soundness_trials` from the config.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Witness instance against the Forget Error lower bound.
    VerifyLb {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        n_mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Unlearn the forget split of a QA corpus with the tiny language model.
    Tinylm {
        /// Tab-separated corpus; the bundled demo corpus if omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the property checks.
    Check {
        /// Full-size sweeps (200 trials) instead of the 50-trial CI mode.
        #[arg(long)]
        full: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let mut cfg = ExperimentConfig::default();
            cfg.apply_seed_override(std::env::var(harness::SEED_ENV).ok().as_deref())?;
            cfg
        }
    })
}

fn print_table(table: &SweepTable) {
    for (v_f, n) in table.settings() {
        let rows = table.summary(v_f, n);
        let lambda = rows.first().map_or(f64::NAN, |r| r.lambda);
        println!("v_f={v_f:e} n={n} lambda={lambda:e} argmin_T(forget)={:?}", table.forget_argmin(v_f, n));
        for r in rows {
            println!(
                "  T={:.2} retain={:.5}±{:.5} forget={:.5}±{:.5}",
                r.temperature, r.retain_mean, r.retain_se, r.forget_mean, r.forget_se
            );
        }
    }
}

fn sweep(args: &SweepArgs, by_n: bool) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let start = Instant::now();
    let table = if by_n { harness::run_experiment2(&cfg)? } else { harness::run_experiment1(&cfg)? };
    print_table(&table);
    for p in harness::emit(&table, &cfg.to_toml_string(), &args.out)? {
        println!("wrote {}", p.display());
    }
    eprintln!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn bounds(config: Option<&Path>, out: Option<&Path>, trials: Option<usize>) -> Result<bool> {
    let mut cfg = load_config(config)?;
    if let Some(t) = trials {
        cfg.soundness_trials = t;
    }
    let reports = harness::run_soundness_sweep(&cfg)?;
    let mut csv = String::from("bound,kind,bound_value,measured,measured_se,sound,inputs\n");
    for r in &reports {
        let kind = if r.kind == BoundKind::Upper { "upper" } else { "lower" };
        let inputs: Vec<String> = r.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        csv.push_str(&format!(
            "{},{kind},{},{},{},{},{}\n",
            r.bound_name,
            r.bound_value,
            r.measured_value,
            r.measured_std_err,
            r.sound,
            inputs.join(";")
        ));
    }
    let mut names: Vec<&str> = Vec::new();
    for r in &reports {
        if !names.contains(&r.bound_name.as_str()) {
            names.push(&r.bound_name);
        }
    }
    let mut all_sound = true;
    for name in names {
        let total = reports.iter().filter(|r| r.bound_name == name).count();
        let sound = reports.iter().filter(|r| r.bound_name == name && r.sound).count();
        all_sound &= sound == total;
        println!("{name}: {sound}/{total} sound");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("bounds.csv");
        std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(all_sound)
}

fn verify_lb(gamma: f64, delta: f64, n_mc: usize, seed: u64) -> Result<bool> {
    let w = WitnessInstance::unit(gamma, delta)?;
    let m = w.mixture()?;
    let (retain_cf, forget_cf) = closed_form_errors(&w)?;
    let lb = thm3_forget_lower_bound(delta, gamma, m.forget_peak())?;
    let e = w.estimator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = forget_error(&e, &m, n_mc, &mut rng);
    let r = retain_error(&e, &m, n_mc, &mut rng);
    println!("epsilon = {:.12e}", w.epsilon());
    println!("lower bound        = {lb:.15e}");
    println!("closed-form forget = {forget_cf:.15e} (gap {:.2e})", (forget_cf - lb).abs());
    println!("MC forget          = {:.15e} ± {:.2e}", f.value, f.std_err);
    println!("closed-form retain = {retain_cf:.15e}, MC retain = {:.15e} ± {:.2e}", r.value, r.std_err);
    let ok = (forget_cf - lb).abs() <= 1e-12 && (f.value - forget_cf).abs() <= 3.0 * f.std_err + checks::NUMERIC_FLOOR;
    println!("{}", if ok { "equality holds" } else { "equality FAILED" });
    Ok(ok)
}

fn tinylm(corpus: Option<&Path>, temperature: f64, seed: u64) -> Result<()> {
    let corpus = match corpus {
        Some(p) => TinyCorpus::load(p)?,
        None => TinyCorpus::demo(),
    };
    let cfg = UnlearnConfig { temperature, seed, ..UnlearnConfig::default() };
    let report = run_unlearning(&corpus, &cfg)?;
    println!("temperature {}", report.temperature);
    for s in &report.splits {
        println!(
            "{:>12}: probability {:.4}  rouge-L {:.4}  TR+ {:.4}",
            s.split.name(),
            s.probability,
            s.rouge,
            s.tr_plus
        );
    }
    println!("forget quality: KS {:.4}, p = {:.4e}", report.forget_quality.0, report.forget_quality.1);
    println!("model utility {:.4}, MU-ROUGE {:.4}", report.model_utility, report.mu_rouge);
    let min_red = report.forget_prob_reductions.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("min forget-answer probability reduction {min_red:.1}x");
    println!("retain greedy decodes unchanged {:.1}%", 100.0 * report.retain_decodes_unchanged);
    Ok(())
}

fn check(full: bool) -> Result<bool> {
    let mut cfg = load_config(None)?;
    if !full {
        cfg.trials = 50;
        cfg.n_mc = 20_000;
        cfg.soundness_trials = 20;
    }
    let mut outcomes = vec![
        checks::witness_equality(DEFAULT_MC_SAMPLES, 1)?,
        checks::oracle_recovery(DEFAULT_MC_SAMPLES, 2)?,
        checks::gradient_check(3)?,
        checks::bound_soundness(&cfg)?,
    ];
    let vf = harness::run_experiment1(&cfg)?;
    outcomes.push(checks::sweep_vf_shape(&vf, !full));
    let n = harness::run_experiment2(&cfg)?;
    outcomes.push(checks::sweep_n_shape(&n));
    outcomes.push(checks::analytic_vs_quadrature()?);
    outcomes.push(checks::prop1_rate(100, if full { DEFAULT_MC_SAMPLES } else { 20_000 }, 4)?);
    outcomes.push(checks::tinylm_suite(5)?);
    let mut small = cfg.clone();
    small.trials = 4;
    small.n_mc = 2_000;
    outcomes.push(checks::determinism(&small)?);
    for o in &outcomes {
        println!("{o}");
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SweepVf(a) => sweep(a, false).map(|_| true),
        Command::SweepN(a) => sweep(a, true).map(|_| true),
        Command::Bounds { config, out, trials } => bounds(config.as_deref(), out.as_deref(), *trials),
        Command::VerifyLb { gamma, delta, n_mc, seed } => verify_lb(*gamma, *delta, *n_mc, *seed),
        Command::Tinylm { corpus, temperature, seed } => tinylm(corpus.as_deref(), *temperature, *seed).map(|_| true),
        Command::Check { full } => check(*full),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
