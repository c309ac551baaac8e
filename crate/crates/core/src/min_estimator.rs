//! Quantized estimate of the global minimum value `f*`.
//!
//! Once an iterate is within `√(ε/γ)` of `x*`, each node sends its local
//! cost `f_i(x_t)` quantized to `ε/2` against the master's own local cost;
//! the master averages. Local costs at a common point differ by at most
//! `2(γC² + c)`, which fixes the scalar quantizer's input radius.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::glm_model::GlmProblem;
use crate::net_sim::Network;
use crate::protocol::{gather_vectors, slack};

pub const TAG_FMIN: &str = "fmin";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEstConfig {
    /// `C ≥ max_i ‖x* − x_i*‖`.
    pub spread: f64,
    /// `c ≥ max_i |f_i*|`.
    pub min_bound: f64,
    pub eps: f64,
    /// Smoothness bound valid for `f` and every `f_i`.
    pub gamma: f64,
}

impl MinEstConfig {
    pub fn new(spread: f64, min_bound: f64, eps: f64, gamma: f64) -> Result<Self> {
        if !(spread >= 0.0) || !(min_bound >= 0.0) {
            return Err(Error::Config("C and c must be nonnegative".into()));
        }
        if !(eps > 0.0) || !(gamma > 0.0) {
            return Err(Error::Config("eps and gamma must be positive".into()));
        }
        Ok(MinEstConfig {
            spread,
            min_bound,
            eps,
            gamma,
        })
    }

    /// `C` and `c` from the exact local minimizers.
    pub fn from_problem(prob: &GlmProblem, eps: f64) -> Result<Self> {
        Self::new(
            prob.minimizer_spread(),
            prob.local_minimum_bound(),
            eps,
            prob.gamma_all(),
        )
    }

    /// `c` from `0 ≤ f_i* ≤ f_i(x⁰) ≤ n·f(x⁰)` instead of the exact minima.
    pub fn from_problem_value_bound(prob: &GlmProblem, eps: f64) -> Result<Self> {
        let c = prob.nodes() as f64 * prob.global_value(prob.x0());
        Self::new(prob.minimizer_spread(), c, eps, prob.gamma_all())
    }

    /// `2(γC² + c)`.
    pub fn input_radius(&self) -> f64 {
        2.0 * (self.gamma * self.spread * self.spread + self.min_bound)
    }

    /// Payload bits of one scalar message.
    pub fn bits_per_worker(&self) -> u64 {
        let half = self.eps / 2.0;
        let y = self.input_radius();
        if y <= half {
            return 0;
        }
        let m = ((y + half) / half).floor() as u64 + 1;
        u64::from(64 - (m - 1).leading_zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEstimate {
    pub value: f64,
    pub bits_per_worker: u64,
}

/// Returns `(1/n)·Σ Q(f_i(x_t), f_{i₀}(x_t), 2(γC² + c), ε/2)`.
pub fn estimate_min(
    prob: &GlmProblem,
    x_t: &DVector<f64>,
    cfg: &MinEstConfig,
    net: &mut Network,
) -> Result<MinEstimate> {
    let n = prob.nodes();
    if net.topology().nodes() != n {
        return Err(Error::Config(format!(
            "network has {} nodes, problem has {}",
            net.topology().nodes(),
            n
        )));
    }
    let r = (cfg.eps / cfg.gamma).sqrt();
    slack("‖x_t − x*‖ ≤ √(ε/γ)", r, (x_t - prob.x_star()).norm())?;
    let c = cfg.spread;
    slack(
        "C² + ε/γ + C·√(ε/γ) ≤ 2C² (ε small enough for C)",
        2.0 * c * c,
        c * c + r * r + c * r,
    )?;

    let master = net.topology().master();
    let values: Vec<Vec<f64>> = (0..n).map(|i| vec![prob.local_value(i, x_t)]).collect();
    let refs = vec![values[master].clone(); n];
    let before = net.ledger().total_bits();
    let (decoded, _) = gather_vectors(net, TAG_FMIN, &values, &refs, cfg.input_radius(), cfg.eps / 2.0)?;
    let charged = net.ledger().total_bits() - before;
    let workers = net.topology().worker_count() as u64;
    let value = decoded.iter().map(|v| v[0]).sum::<f64>() / n as f64;
    Ok(MinEstimate {
        value,
        bits_per_worker: charged.checked_div(workers).unwrap_or_else(|| cfg.bits_per_worker()),
    })
}
