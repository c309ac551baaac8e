//! Per-round traces shared by every algorithm.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// When to stop iterating: the first state with `fgap ≤ target_fgap`, or
/// after `max_rounds` communication rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub target_fgap: Option<f64>,
    pub max_rounds: usize,
}

impl StopRule {
    pub fn to_fgap(target: f64, max_rounds: usize) -> Self {
        StopRule {
            target_fgap: Some(target),
            max_rounds,
        }
    }

    pub fn rounds(max_rounds: usize) -> Self {
        StopRule {
            target_fgap: None,
            max_rounds,
        }
    }

    pub fn done(&self, t: usize, fgap: f64) -> bool {
        t >= self.max_rounds || self.target_fgap.is_some_and(|e| fgap <= e)
    }
}

/// State after `t` rounds and the communication spent in round `t`.
///
/// `bits_round` is zero on the final row: the stopping test runs before any
/// message of that round is sent.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub t: usize,
    /// `‖x_t − x*‖`.
    pub err: f64,
    /// `f(x_t) − f*`.
    pub fgap: f64,
    /// Theoretical bound on `err`; NaN when the method has none.
    pub bound: f64,
    /// Slack of each checked inequality, `bound − observed`, in the order of
    /// [`Trace::slack_names`].
    pub slacks: Vec<f64>,
    pub matrix_bits: u64,
    pub vector_bits: u64,
    pub bits_round: u64,
    pub bits_total: u64,
    pub overhead_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algorithm: String,
    pub slack_names: Vec<String>,
    pub rounds: Vec<RoundTrace>,
    pub x_final: DVector<f64>,
    pub converged: bool,
    pub problem_fingerprint: u64,
}

impl Trace {
    pub fn new(algorithm: &str, slack_names: &[&str], problem_fingerprint: u64, dim: usize) -> Self {
        Trace {
            algorithm: algorithm.to_string(),
            slack_names: slack_names.iter().map(|s| s.to_string()).collect(),
            rounds: Vec::new(),
            x_final: DVector::zeros(dim),
            converged: false,
            problem_fingerprint,
        }
    }

    /// Appends a row, filling `t`, `bits_round` and `bits_total`.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        err: f64,
        fgap: f64,
        bound: f64,
        slacks: Vec<f64>,
        matrix_bits: u64,
        vector_bits: u64,
        overhead_bits: u64,
    ) {
        debug_assert_eq!(slacks.len(), self.slack_names.len());
        let prev = self.rounds.last().map_or(0, |r| r.bits_total);
        let bits_round = matrix_bits + vector_bits;
        self.rounds.push(RoundTrace {
            t: self.rounds.len(),
            err,
            fgap,
            bound,
            slacks,
            matrix_bits,
            vector_bits,
            bits_round,
            bits_total: prev + bits_round,
            overhead_bits,
        });
    }

    pub fn total_bits(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.bits_total)
    }

    pub fn total_overhead(&self) -> u64 {
        self.rounds.iter().map(|r| r.overhead_bits).sum()
    }

    /// Number of communication rounds performed.
    pub fn rounds_used(&self) -> usize {
        self.rounds.len().saturating_sub(1)
    }

    pub fn final_fgap(&self) -> f64 {
        self.rounds.last().map_or(f64::NAN, |r| r.fgap)
    }

    /// Smallest slack over all rows and checks; `+∞` if nothing was checked.
    pub fn min_slack(&self) -> f64 {
        self.rounds
            .iter()
            .flat_map(|r| r.slacks.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Bits spent until the first row with `fgap ≤ eps`.
    pub fn bits_to(&self, eps: f64) -> Option<u64> {
        let idx = self.rounds.iter().position(|r| r.fgap <= eps)?;
        Some(if idx == 0 { 0 } else { self.rounds[idx - 1].bits_total })
    }

    pub fn rounds_to(&self, eps: f64) -> Option<usize> {
        self.rounds.iter().position(|r| r.fgap <= eps)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::from("t,err,fgap,bound");
        for name in &self.slack_names {
            header.push_str(",slack_");
            header.push_str(name);
        }
        header.push_str(",matrix_bits,vector_bits,bits_round,bits_total,overhead_bits");
        writeln!(out, "{header}")?;
        for r in &self.rounds {
            if r.slacks.len() != self.slack_names.len() {
                return Err(Error::Config(format!(
                    "trace row {} has {} slacks, header has {}",
                    r.t,
                    r.slacks.len(),
                    self.slack_names.len()
                )));
            }
            write!(out, "{},{:e},{:e},{:e}", r.t, r.err, r.fgap, r.bound)?;
            for s in &r.slacks {
                write!(out, ",{s:e}")?;
            }
            writeln!(
                out,
                ",{},{},{},{},{}",
                r.matrix_bits, r.vector_bits, r.bits_round, r.bits_total, r.overhead_bits
            )?;
        }
        Ok(())
    }
}
