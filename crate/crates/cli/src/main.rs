use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qprecond::harness::{
    build_problem, compare_csv, compare_report, learning_rate_sweep, problem_for, run_algorithm, run_experiment,
    sweep_csv, write_artifacts, Algorithm, ExperimentConfig, Summary,
};
use qprecond::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_INPUT: u8 = 3;

/// Communication-metered distributed optimization experiments.
#[derive(Debug, Parser)]
#[command(name = "qprecond", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one algorithm and write trace.csv, ledger.csv and summary.txt.
    Run(Common),
    /// Run several algorithms on the same problem and write compare.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms.
        #[arg(long, value_delimiter = ',', default_value = "qpgd,pgd,gd,qsgd")]
        algos: Vec<Algorithm>,
    },
    /// Try step sizes 2^0, 2^-1, ..., 2^-steps for gd or qsgd.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 12)]
        steps: u32,
    },
}

/// Settings applied after `--config`, in the order listed.
#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `synthetic` or a LIBSVM file path.
    #[arg(long)]
    dataset: Option<String>,
    /// `quadratic` or `logistic`.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    /// Target function gap.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

impl Common {
    fn config(&self) -> qprecond::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("loss", &self.loss),
            ("nodes", &self.nodes),
            ("algo", &self.algo),
            ("eps", &self.eps),
            ("seed", &self.seed),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.extra {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> qprecond::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.config()?;
            let out = run_experiment(&cfg)?;
            print!("{}", out.summary.to_text());
        }
        Command::Compare { common, algos } => {
            let cfg = common.config()?;
            let base = build_problem(&cfg)?;
            let mut traces = Vec::new();
            for algo in algos {
                let prob = problem_for(&base, &cfg, algo)?;
                let (trace, ledger) = run_algorithm(&prob, &cfg, algo)?;
                let summary = Summary {
                    algorithm: algo,
                    nodes: prob.nodes(),
                    dim: prob.dim(),
                    rounds: trace.rounds_used(),
                    converged: trace.converged,
                    final_fgap: trace.final_fgap(),
                    total_bits: trace.total_bits(),
                    overhead_bits: trace.total_overhead(),
                    baseline_bits: None,
                    ratio_vs_baseline: None,
                };
                write_artifacts(&cfg.out.join(algo.name()), &trace, &ledger, &summary)?;
                traces.push(trace);
            }
            let table = compare_csv(&compare_report(&traces, cfg.eps)?);
            fs::create_dir_all(&cfg.out)?;
            fs::write(cfg.out.join("compare.csv"), &table)?;
            print!("{table}");
        }
        Command::Sweep { common, steps } => {
            let cfg = common.config()?;
            let (rows, best) = learning_rate_sweep(&cfg, steps)?;
            let table = sweep_csv(&rows);
            fs::create_dir_all(&cfg.out)?;
            fs::write(cfg.out.join("sweep.csv"), &table)?;
            print!("{table}");
            match best {
                Some(eta) => println!("largest converged eta = {eta:e}"),
                None => println!("largest converged eta = none"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invariant_violation() {
                EXIT_INVARIANT
            } else if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_FAILURE
            })
        }
    }
}
