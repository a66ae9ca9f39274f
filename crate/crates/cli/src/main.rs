use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fqilab::fqi::run_fqi;
use fqilab::harness::{
    evaluate_gap, run_assumptions, run_rate_experiment, write_assumptions, write_results, AssumptionsConfig,
    ExperimentConfig, FqiRunConfig,
};
use fqilab::kernel::KernelSpec;
use fqilab::mdp::build_env;
use fqilab::spectral::{decay_exponent, eig_sequence, l2_minimax_rate, linf_lower_bound};
use fqilab::stats::median;

#[derive(Parser)]
#[command(name = "lab", version, about = "Fitted Q-iteration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single FQI runs.
    Fqi {
        #[command(subcommand)]
        command: FqiCommand,
    },
    /// Suboptimality gap against sample size over a grid of seeds.
    Rates {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `output` entry of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rademacher and concentration checks.
    Assumptions {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mercer spectra on the sphere and the lower bounds built from them.
    Spectral {
        #[command(subcommand)]
        command: SpectralCommand,
    },
}

#[derive(Subcommand)]
enum FqiCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Linf,
    L2,
}

#[derive(Subcommand)]
enum SpectralCommand {
    /// Writes `index,degree,eigenvalue,multiplicity`.
    Eigs {
        #[arg(long)]
        kernel: KernelSpec,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes `n,bound` on a log-spaced grid.
    Bound {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value = "lap")]
        kernel: KernelSpec,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Eigenvalues computed before the power-law tail takes over.
        #[arg(long, default_value_t = 2000)]
        count: usize,
        /// Decay exponent for the L2 rate; fitted from the kernel spectrum when absent.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 100)]
        n_min: usize,
        #[arg(long, default_value_t = 1000)]
        n_max: usize,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn out_dir(flag: Option<PathBuf>, config: Option<&PathBuf>, fallback: &str) -> PathBuf {
    flag.or_else(|| config.cloned()).unwrap_or_else(|| PathBuf::from(fallback))
}

fn fqi_run(path: &Path) -> Result<()> {
    let cfg = FqiRunConfig::load(path)?;
    let mdp = build_env(&cfg.env.parse()?)?;
    let plan = mdp.default_plan();
    let lambda = cfg.lambda.resolve(mdp.as_ref(), &cfg.backend, cfg.n);
    let run = run_fqi(mdp.as_ref(), &plan, &cfg.backend, lambda, cfg.n, cfg.seed)?;
    let init = plan.steps[0].state_marginal();
    let gap = evaluate_gap(mdp.as_ref(), &run.policy, &init, cfg.eval_episodes, cfg.seed)?;
    println!("env            {}", cfg.env);
    println!("lambda         {lambda:.6e}");
    println!("simulator      {} calls", run.simulator_calls);
    for s in &run.fitted.steps {
        println!(
            "step {:<3}      objective {:.6e}  Lambda {:.6}  {:.3}s",
            s.step, s.objective, s.regularizer, s.fit_seconds
        );
    }
    println!("return         {:.6} (se {:.2e})", gap.policy_return, gap.std_err);
    match gap.optimal_return {
        Some(opt) => println!("optimal        {opt:.6}\ngap            {:.6e}", gap.gap),
        None => println!("gap            unavailable (no exact optimum for this environment)"),
    }
    if let Some(out) = &cfg.output {
        let json = serde_json::to_string_pretty(run.fitted.as_ref())?;
        fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
        println!("model          {}", out.display());
    }
    Ok(())
}

fn rates(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    let result = run_rate_experiment(&cfg)?;
    let dir = out_dir(out, cfg.output.as_ref(), "results/rates");
    write_results(&result, Some(&cfg), &dir)?;
    println!("{:>8} {:>14} {:>14} {:>14} {:>6}", "n", "median gap", "q25", "q75", "cells");
    for a in &result.aggregate {
        println!(
            "{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>6}",
            a.n, a.median_gap, a.q25_gap, a.q75_gap, a.cells
        );
    }
    if result.rows.iter().any(|r| r.gap.is_nan()) {
        println!("{:>8} {:>14}", "n", "median return");
        for a in &result.aggregate {
            let returns: Vec<f64> = result
                .details
                .iter()
                .filter(|d| d.n == a.n && d.error.is_none())
                .map(|d| d.policy_return)
                .collect();
            println!("{:>8} {:>14.6e}", a.n, median(&returns));
        }
    }
    match result.slope {
        Some(s) => match s.half_width {
            Some(hw) => println!("slope {:.4} +- {:.4}", s.slope, hw),
            None => println!("slope {:.4}", s.slope),
        },
        None => println!("slope unavailable"),
    }
    if let Some(k) = result.kappa {
        println!("kappa {k:.6}");
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn assumptions(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = AssumptionsConfig::load(path)?;
    let report = run_assumptions(&cfg)?;
    let dir = out_dir(out, cfg.output.as_ref(), "results/assumptions");
    write_assumptions(&report, &dir)?;
    for r in &report.rademacher {
        println!(
            "step {} {:<16} estimate {:.5} (se {:.1e})  envelope {:.5}  bound {:.5}  {}",
            r.step,
            r.ball,
            r.estimate,
            r.std_err,
            r.envelope,
            r.bound,
            if r.within_bound { "ok" } else { "EXCEEDS" }
        );
    }
    match (&report.concentration, &report.concentration_error) {
        (Some(k), _) => println!("kappa_h {k:?}  kappa {:.6}", report.kappa.unwrap_or(f64::NAN)),
        (None, Some(e)) => println!("concentration unavailable: {e}"),
        _ => {}
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn log_grid(lo: usize, hi: usize, points: usize) -> Result<Vec<usize>> {
    if lo == 0 || hi < lo || points < 2 {
        bail!("need 0 < n_min <= n_max and at least two points");
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut ns: Vec<usize> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    ns.dedup();
    Ok(ns)
}

fn spectral(cmd: SpectralCommand) -> Result<()> {
    match cmd {
        SpectralCommand::Eigs { kernel, dim, count, out } => {
            let seq = eig_sequence(kernel, dim, count)?;
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["index", "degree", "eigenvalue", "multiplicity"])?;
            for (i, e) in seq.entries.iter().enumerate() {
                w.serialize((i + 1, e.degree, e.value, e.multiplicity))?;
            }
            w.flush()?;
            if !seq.warnings.is_empty() {
                log::warn!("{} degrees exceeded the quadrature error estimate", seq.warnings.len());
            }
            println!("{} eigenvalues written to {}", seq.len(), out.display());
        }
        SpectralCommand::Bound {
            mode,
            kernel,
            dim,
            count,
            alpha,
            n_min,
            n_max,
            points,
            out,
        } => {
            let ns = log_grid(n_min, n_max, points)?;
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["n", "bound"])?;
            match mode {
                Mode::Linf => {
                    let seq = eig_sequence(kernel, dim, count)?.with_power_law_tail()?;
                    for n in ns {
                        w.serialize((n, linf_lower_bound(&seq, n)?))?;
                    }
                }
                Mode::L2 => {
                    let alpha = match alpha {
                        Some(a) => a,
                        None => {
                            let seq = eig_sequence(kernel, dim, count)?;
                            -decay_exponent(&seq, (count / 20).max(1), count)?
                        }
                    };
                    for n in ns {
                        w.serialize((n, l2_minimax_rate(alpha, n as f64)?))?;
                    }
                }
            }
            w.flush()?;
            println!("bound written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Fqi {
            command: FqiCommand::Run { config },
        } => fqi_run(&config),
        Command::Rates { config, out } => rates(&config, out),
        Command::Assumptions { config, out } => assumptions(&config, out),
        Command::Spectral { command } => spectral(command),
    }
}
