//! `hjbppo`: train, compare, evaluate and check the LQR oracle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hjbppo::config::{Overrides, RunConfig};
use hjbppo::environments::{verify_oracle, LqrProblem};
use hjbppo::metrics::{export_svg, Family, SMOOTHING_WINDOW};
use hjbppo::trainer::{self, Algorithm, TrainingRun};
use hjbppo::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_ORACLE: u8 = 3;

#[derive(Parser)]
#[command(name = "hjbppo", version, about = "PPO and HJB-regularized PPO on analytic control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from `checkpoint.ckpt` in the output directory if present.
        #[arg(long)]
        resume: bool,
    },
    /// Train PPO and HJBPPO on the same seeds and overlay the results.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Roll out a checkpoint's mode controller and report the mean reward.
    Evaluate {
        /// Checkpoint file or run directory.
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the Riccati solution against the HJB optimality conditions.
    VerifyOracle {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    timesteps: Option<u64>,
    #[arg(long = "lambda-hjb")]
    lambda_hjb: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Runtime(String),
    Oracle(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Toml(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train { run, resume } => cmd_train(&run, resume),
        Command::Compare { run } => cmd_compare(&run),
        Command::Evaluate {
            checkpoint,
            episodes,
            seed,
        } => cmd_evaluate(&checkpoint, episodes, seed),
        Command::VerifyOracle { run } => cmd_verify_oracle(&run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Oracle(m)) => {
            eprintln!("oracle check failed: {m}");
            ExitCode::from(EXIT_ORACLE)
        }
    }
}

/// File config, then flags on top, then full validation.
fn load_config(args: &RunArgs) -> std::result::Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let algorithm = args
        .algorithm
        .as_deref()
        .map(str::parse::<Algorithm>)
        .transpose()?;
    config.apply(&Overrides {
        seed: args.seed,
        algorithm,
        environment: args.env.clone(),
        total_timesteps: args.timesteps,
        lambda_hjb: args.lambda_hjb,
        output_dir: args.out.clone(),
    });
    config.validate()?;
    Ok(config)
}

fn warn_if_ppo_equivalent(config: &RunConfig) -> CmdResult {
    if config.algorithm == Algorithm::Hjbppo && config.effective_lambda_hjb()? == 0.0 {
        eprintln!("warning: lambda_hjb = 0 makes hjbppo identical to ppo");
    }
    Ok(())
}

fn progress(run: &TrainingRun, outcome: &trainer::IterationOutcome) {
    let m = &run.metrics;
    let reward = m.final_window_mean(SMOOTHING_WINDOW, |e| e.reward).unwrap_or(f64::NAN);
    let guard = if outcome.guard_active { " (HJB weight reduced)" } else { "" };
    eprintln!(
        "[{} seed {}] iteration {}/{} timesteps {} reward(50) {:.4} MSE_u {:.3e} MSE_f {:.3e}{guard}",
        run.config.algorithm.as_str(),
        run.config.hyperparameters.seed,
        run.iteration,
        run.total_iterations(),
        run.collector.timesteps(),
        reward,
        outcome.report.mse_u,
        outcome.report.mse_f,
    );
}

fn cmd_train(args: &RunArgs, resume: bool) -> CmdResult {
    let config = load_config(args)?;
    warn_if_ppo_equivalent(&config)?;
    let mut cb = progress;
    let run = trainer::train_with(&config, resume, Some(&mut cb))?;
    println!("{}", summary_header());
    println!("{}", summary_row(&run));
    println!("artifacts written to {}", config.output_dir.display());
    Ok(())
}

fn summary_header() -> String {
    "algorithm,seed,episodes,final_reward_mean,final_reward_std,final_hjb_loss,final_bellman_loss".into()
}

fn summary_row(run: &TrainingRun) -> String {
    let m = &run.metrics;
    let (rm, rs) = m
        .final_window_stats(SMOOTHING_WINDOW, |e| e.reward)
        .unwrap_or((f64::NAN, f64::NAN));
    let h = m.final_window_mean(SMOOTHING_WINDOW, |e| e.hjb_loss).unwrap_or(f64::NAN);
    let b = m.final_window_mean(SMOOTHING_WINDOW, |e| e.bellman_loss).unwrap_or(f64::NAN);
    format!(
        "{},{},{},{rm:e},{rs:e},{h:e},{b:e}",
        run.config.algorithm.as_str(),
        run.config.hyperparameters.seed,
        m.episodes.len()
    )
}

fn cmd_compare(args: &RunArgs) -> CmdResult {
    let base = load_config(args)?;
    let seeds = match args.seed {
        Some(s) => vec![s],
        None => base.compare.seeds.clone(),
    };
    let root = base.output_dir.clone();
    let mut runs: Vec<TrainingRun> = Vec::new();
    for &seed in &seeds {
        for algorithm in [Algorithm::Ppo, Algorithm::Hjbppo] {
            let mut c = base.clone();
            c.algorithm = algorithm;
            c.hyperparameters.seed = seed;
            c.output_dir = root.join(format!("{}_seed{seed}", algorithm.as_str()));
            warn_if_ppo_equivalent(&c)?;
            let mut cb = progress;
            runs.push(trainer::train_with(&c, false, Some(&mut cb))?);
        }
    }
    // Both algorithms share every random draw until the first update, so the
    // episodes finished during the first collection must agree exactly.
    for pair in runs.chunks(2) {
        let first = |r: &TrainingRun| {
            let n = r.metrics.iterations.first().map_or(0, |i| i.episodes) as usize;
            r.metrics.episodes[..n.min(r.metrics.episodes.len())].to_vec()
        };
        if first(&pair[0]) != first(&pair[1]) {
            return Err(Failure::Runtime(format!(
                "seed {}: first-iteration rollouts of ppo and hjbppo differ",
                pair[0].config.hyperparameters.seed
            )));
        }
    }
    for family in Family::ALL {
        let series: Vec<_> = runs
            .iter()
            .filter(|r| !r.metrics.episodes.is_empty())
            .map(|r| {
                let label = format!("{} seed {}", r.config.algorithm.as_str(), r.config.hyperparameters.seed);
                r.metrics.series(family, &label)
            })
            .collect();
        if !series.is_empty() {
            let path = root.join(format!("overlay_{}", family.file_name()));
            export_svg(&path, &family.chart(), &series)?;
        }
    }
    let mut table = summary_header();
    for r in &runs {
        let _ = write!(table, "\n{}", summary_row(r));
    }
    table.push('\n');
    let path = root.join("summary.csv");
    std::fs::write(&path, &table).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    print!("{table}");
    Ok(())
}

fn cmd_evaluate(path: &Path, episodes: usize, seed: u64) -> CmdResult {
    let file = if path.is_dir() {
        trainer::checkpoint_in(path)
    } else {
        path.to_owned()
    };
    let run = TrainingRun::load_checkpoint(&file)?;
    if episodes == 0 {
        return Err(Failure::Validation("--episodes must be at least 1".into()));
    }
    let rewards = trainer::evaluate(&run.policy, run.env(), episodes, seed)?;
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rewards.len() as f64).sqrt();
    println!(
        "{} on {} after {} timesteps: mean reward {mean:.6} (std {std:.6}) over {episodes} episodes",
        run.config.algorithm.as_str(),
        run.env().spec().name,
        run.collector.timesteps()
    );
    Ok(())
}

fn cmd_verify_oracle(args: &RunArgs) -> CmdResult {
    let mut args = args.clone();
    args.env.get_or_insert_with(|| "lqr".into());
    let config = load_config(&args)?;
    let env = config.build_environment()?;
    let problem: &LqrProblem = env
        .lqr()
        .ok_or_else(|| Failure::Validation(format!("verify-oracle needs the lqr environment, got `{}`", env.spec().name)))?;
    let gamma = env.spec().continuous_gamma();
    // 10×10 grid over twice the initial-state box.
    let r = 2.0 * env.init_radius().max(0.5);
    let n = problem.state_dim();
    let probes: Vec<Vec<f64>> = (0..100)
        .map(|k| {
            (0..n)
                .map(|d| {
                    let i = if d % 2 == 0 { k % 10 } else { k / 10 };
                    -r + 2.0 * r * i as f64 / 9.0
                })
                .collect()
        })
        .collect();
    let report = verify_oracle(problem, gamma, &probes, &[-0.5, -0.1, 0.1, 0.5])
        .map_err(|e| Failure::Oracle(e.to_string()))?;
    println!("continuous discount gamma   {gamma:.12}");
    println!("P                           {:?}", report.p.as_slice());
    println!("CARE residual norm          {:.3e}  (tolerance 1e-9)", report.care_residual);
    println!("max |HJB residual|          {:.3e}  (tolerance 1e-8, {} probes)", report.max_hjb_residual, probes.len());
    println!("min supremand margin        {:.3e}  (must be > 0)", report.min_sup_margin);
    if report.passes(1e-9, 1e-8) {
        println!("oracle verified");
        Ok(())
    } else {
        Err(Failure::Oracle("a tolerance was exceeded".into()))
    }
}
