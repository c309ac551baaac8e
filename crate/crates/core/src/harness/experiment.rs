//! Algorithm dispatch, artifact export and comparison tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{Algorithm, DatasetSource, ExperimentConfig, LossChoice, RadiusRule};
use super::libsvm::load_libsvm;
use super::synthetic::{gen_synthetic, newton_start, partition, SyntheticKind};
use crate::baselines::{gd_full, pgd_full, qsgd_gd};
use crate::error::{Error, Result};
use crate::glm_model::{GlmProblem, LossKind};
use crate::net_sim::{BitLedger, Network, Topology};
use crate::q_newton::{newton_run, NewtonParams};
use crate::qpgd::{qpgd_run, QpgdParams};
use crate::trace::{StopRule, Trace};

/// Builds the configured problem, starting at the origin.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<GlmProblem> {
    cfg.validate()?;
    let loss = match cfg.loss {
        LossChoice::Quadratic => LossKind::Quadratic,
        LossChoice::Logistic => LossKind::Logistic { rho: cfg.rho },
    };
    match &cfg.dataset {
        DatasetSource::Synthetic { rows, dim } => {
            let kind = match loss {
                LossKind::Quadratic => SyntheticKind::LeastSquares { noise: cfg.noise },
                LossKind::Logistic { rho } => SyntheticKind::Logistic { rho },
            };
            gen_synthetic(*rows, *dim, cfg.nodes, cfg.seed, kind)
        }
        DatasetSource::Libsvm { path, dim } => {
            let data = load_libsvm(path, *dim, cfg.loss == LossChoice::Logistic)?;
            let shards = partition(&data, cfg.nodes, cfg.seed)?;
            GlmProblem::new(shards, loss, nalgebra::DVector::zeros(data.dim()))
        }
    }
}

/// `2/(μ + γ)` for the global objective.
pub fn default_step(prob: &GlmProblem) -> f64 {
    2.0 / (prob.mu() + prob.gamma())
}

/// The problem as seen by `algo`: quantized Newton moves `x⁰` into its
/// convergence ball, every other method keeps the configured start.
pub fn problem_for(prob: &GlmProblem, cfg: &ExperimentConfig, algo: Algorithm) -> Result<GlmProblem> {
    match algo {
        Algorithm::QNewton => {
            let params = NewtonParams::new(prob, cfg.alpha, cfg.sigma)?;
            prob.with_x0(newton_start(prob, params.ball_radius(), cfg.seed)?)
        }
        _ => Ok(prob.clone()),
    }
}

/// Runs `algo` on `prob` (already positioned by [`problem_for`]).
pub fn run_algorithm(prob: &GlmProblem, cfg: &ExperimentConfig, algo: Algorithm) -> Result<(Trace, BitLedger)> {
    let mut net = Network::new(Topology::star(prob.nodes())?);
    let stop = StopRule::to_fgap(cfg.eps, cfg.max_rounds);
    let eta = cfg.eta.unwrap_or_else(|| default_step(prob));
    let trace = match algo {
        Algorithm::Qpgd => {
            let d = match cfg.radius {
                RadiusRule::Oracle => prob.init_radius(),
                RadiusRule::Values => prob.init_radius_from_values(),
            };
            qpgd_run(prob, &QpgdParams::new(prob, d)?, &mut net, stop)?.trace
        }
        Algorithm::QNewton => newton_run(prob, &NewtonParams::new(prob, cfg.alpha, cfg.sigma)?, &mut net, stop)?,
        Algorithm::Gd => gd_full(prob, eta, &mut net, stop)?,
        Algorithm::Pgd => pgd_full(prob, &mut net, stop)?,
        Algorithm::Qsgd => qsgd_gd(prob, eta, cfg.levels, cfg.seed, &mut net, stop)?,
    };
    Ok((trace, net.into_ledger()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub nodes: usize,
    pub dim: usize,
    pub rounds: usize,
    pub converged: bool,
    pub final_fgap: f64,
    pub total_bits: u64,
    pub overhead_bits: u64,
    pub baseline_bits: Option<u64>,
    pub ratio_vs_baseline: Option<f64>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        writeln!(s, "algorithm = {}", self.algorithm).unwrap();
        writeln!(s, "nodes = {}", self.nodes).unwrap();
        writeln!(s, "dim = {}", self.dim).unwrap();
        writeln!(s, "rounds = {}", self.rounds).unwrap();
        writeln!(s, "converged = {}", self.converged).unwrap();
        writeln!(s, "final_fgap = {:e}", self.final_fgap).unwrap();
        writeln!(s, "total_bits = {}", self.total_bits).unwrap();
        writeln!(s, "overhead_bits = {}", self.overhead_bits).unwrap();
        writeln!(s, "gd32_bits = {}", opt(self.baseline_bits.map(|b| b.to_string()))).unwrap();
        writeln!(
            s,
            "ratio_vs_gd32 = {}",
            opt(self.ratio_vs_baseline.map(|r| format!("{r:.6}")))
        )
        .unwrap();
        s
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trace: Trace,
    pub ledger: BitLedger,
    pub summary: Summary,
}

/// Runs the configured algorithm and the 32-bit gradient-descent baseline
/// from the same start, then writes `trace.csv`, `ledger.csv` and
/// `summary.txt` into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let base = build_problem(cfg)?;
    let prob = problem_for(&base, cfg, cfg.algorithm)?;
    let (trace, ledger) = run_algorithm(&prob, cfg, cfg.algorithm)?;

    let baseline = if cfg.algorithm == Algorithm::Gd {
        Some(trace.clone())
    } else {
        run_algorithm(&prob, cfg, Algorithm::Gd).ok().map(|(t, _)| t)
    };
    let baseline_bits = baseline
        .as_ref()
        .and_then(|b| if b.converged { Some(b.total_bits()) } else { None });
    let summary = Summary {
        algorithm: cfg.algorithm,
        nodes: prob.nodes(),
        dim: prob.dim(),
        rounds: trace.rounds_used(),
        converged: trace.converged,
        final_fgap: trace.final_fgap(),
        total_bits: trace.total_bits(),
        overhead_bits: trace.total_overhead(),
        baseline_bits,
        ratio_vs_baseline: baseline_bits
            .filter(|&b| b > 0 && trace.converged)
            .map(|b| trace.total_bits() as f64 / b as f64),
    };
    write_artifacts(&cfg.out, &trace, &ledger, &summary)?;
    Ok(ExperimentOutput { trace, ledger, summary })
}

pub fn write_artifacts(dir: &Path, trace: &Trace, ledger: &BitLedger, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    fs::write(dir.join("trace.csv"), buf)?;
    let mut buf = Vec::new();
    ledger.write_csv(&mut buf)?;
    fs::write(dir.join("ledger.csv"), buf)?;
    fs::write(dir.join("summary.txt"), summary.to_text())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub algorithm: String,
    pub rounds_to_eps: Option<usize>,
    pub total_bits: Option<u64>,
    pub ratio_vs_gd: Option<f64>,
}

/// One row per trace, in input order. Bits are counted up to the first
/// state with `fgap ≤ eps`; the ratio is taken against the trace named
/// `gd`, if present.
pub fn compare_report(traces: &[Trace], eps: f64) -> Result<Vec<CompareRow>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Config("comparison needs at least one trace".into()))?;
    if let Some(t) = traces
        .iter()
        .find(|t| t.problem_fingerprint != first.problem_fingerprint)
    {
        return Err(Error::Config(format!(
            "traces '{}' and '{}' come from different problems",
            first.algorithm, t.algorithm
        )));
    }
    let gd_bits = traces.iter().find(|t| t.algorithm == "gd").and_then(|t| t.bits_to(eps));
    Ok(traces
        .iter()
        .map(|t| {
            let bits = t.bits_to(eps);
            CompareRow {
                algorithm: t.algorithm.clone(),
                rounds_to_eps: t.rounds_to(eps),
                total_bits: bits,
                ratio_vs_gd: match (bits, gd_bits) {
                    (Some(b), Some(g)) if g > 0 => Some(b as f64 / g as f64),
                    _ => None,
                },
            }
        })
        .collect())
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("algorithm,rounds_to_eps,total_bits,ratio_vs_gd\n");
    for r in rows {
        let dash = || "-".to_string();
        writeln!(
            s,
            "{},{},{},{}",
            r.algorithm,
            r.rounds_to_eps.map_or_else(dash, |v| v.to_string()),
            r.total_bits.map_or_else(dash, |v| v.to_string()),
            r.ratio_vs_gd.map_or_else(dash, |v| format!("{v:.6}")),
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepOutcome {
    Converged { rounds: usize, bits: u64 },
    Stalled { final_fgap: f64 },
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub outcome: SweepOutcome,
}

/// Step sizes `2⁰, 2⁻¹, …, 2⁻ᵏ` for gd or qsgd. Returns the rows and the
/// largest step that converged.
pub fn learning_rate_sweep(cfg: &ExperimentConfig, steps: u32) -> Result<(Vec<SweepRow>, Option<f64>)> {
    if !matches!(cfg.algorithm, Algorithm::Gd | Algorithm::Qsgd) {
        return Err(Error::Config(format!(
            "sweep supports gd and qsgd, not {}",
            cfg.algorithm
        )));
    }
    let prob = build_problem(cfg)?;
    let mut rows = Vec::new();
    let mut best = None;
    for k in 0..=steps {
        let eta = 0.5f64.powi(k as i32);
        let mut c = cfg.clone();
        c.eta = Some(eta);
        let outcome = match run_algorithm(&prob, &c, cfg.algorithm) {
            Ok((t, _)) if t.converged => SweepOutcome::Converged {
                rounds: t.rounds_used(),
                bits: t.total_bits(),
            },
            Ok((t, _)) => SweepOutcome::Stalled {
                final_fgap: t.final_fgap(),
            },
            Err(Error::Diverged { .. }) => SweepOutcome::Diverged,
            Err(e) => return Err(e),
        };
        if best.is_none() && matches!(outcome, SweepOutcome::Converged { .. }) {
            best = Some(eta);
        }
        rows.push(SweepRow { eta, outcome });
    }
    Ok((rows, best))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("eta,outcome,rounds,bits,final_fgap\n");
    for r in rows {
        match &r.outcome {
            SweepOutcome::Converged { rounds, bits } => writeln!(s, "{:e},converged,{rounds},{bits},-", r.eta),
            SweepOutcome::Stalled { final_fgap } => writeln!(s, "{:e},stalled,-,-,{final_fgap:e}", r.eta),
            SweepOutcome::Diverged => writeln!(s, "{:e},diverged,-,-,-", r.eta),
        }
        .unwrap();
    }
    s
}
