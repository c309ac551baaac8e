//! Reference methods: full-precision gradient descent with and without
//! preconditioning, and QSGD-compressed gradient descent.
//!
//! Full-precision methods compute in f64 but are charged 32 bits per
//! coordinate per message.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glm_model::GlmProblem;
use crate::net_sim::{Message, Network};
use crate::protocol::slack;
use crate::qpgd::Preconditioner;
use crate::sym_codec::{packed_len, SymMatrix};
use crate::trace::{StopRule, Trace};

/// Header of a QSGD message: the norm as one 64-bit scalar.
pub const QSGD_OVERHEAD_BITS: u64 = 64;
const DIVERGENCE_WINDOW: usize = 10;
const DIVERGENCE_FACTOR: f64 = 10.0;

fn check_nodes(prob: &GlmProblem, net: &Network) -> Result<()> {
    if net.topology().nodes() != prob.nodes() {
        return Err(Error::Config(format!(
            "network has {} nodes, problem has {}",
            net.topology().nodes(),
            prob.nodes()
        )));
    }
    Ok(())
}

/// Fails when the error grew tenfold over the last ten rounds or stopped
/// being finite.
fn check_divergence(trace: &Trace) -> Result<()> {
    let rows = &trace.rounds;
    let last = rows.last().expect("non-empty");
    if !last.err.is_finite() || !last.fgap.is_finite() {
        return Err(Error::Diverged {
            round: last.t,
            error: last.err,
        });
    }
    if rows.len() > DIVERGENCE_WINDOW {
        let past = rows[rows.len() - 1 - DIVERGENCE_WINDOW].err;
        if last.err > DIVERGENCE_FACTOR * past {
            return Err(Error::Diverged {
                round: last.t,
                error: last.err,
            });
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn push_row(
    trace: &mut Trace,
    net: &Network,
    prob: &GlmProblem,
    x: &DVector<f64>,
    round: usize,
    bound: f64,
    slacks: Vec<f64>,
    communicated: bool,
) {
    let err = (x - prob.x_star()).norm();
    let (m, v, o) = if communicated {
        let l = net.ledger();
        (
            l.bits_with_prefix(round, "precond"),
            l.bits_in_round(round) - l.bits_with_prefix(round, "precond"),
            l.overhead_in_round(round),
        )
    } else {
        (0, 0, 0)
    };
    trace.push(err, prob.gap(x), bound, slacks, m, v, o);
}

/// Averages full-precision local gradients at the master and broadcasts
/// the result.
fn exchange_gradient(prob: &GlmProblem, net: &mut Network, x: &DVector<f64>) -> Result<DVector<f64>> {
    let d = prob.dim();
    let msgs = (0..prob.nodes())
        .map(|i| Message::full_precision(prob.local_grad(i, x), d))
        .collect();
    let grads = net.gather("grad_gather", msgs)?;
    let avg = grads.iter().fold(DVector::zeros(d), |acc, g| acc + g) / prob.nodes() as f64;
    net.broadcast("grad_broadcast", Message::full_precision(avg, d))
}

/// `x_{t+1} = x_t − η·∇f(x_t)`.
pub fn gd_full(prob: &GlmProblem, eta: f64, net: &mut Network, stop: StopRule) -> Result<Trace> {
    check_nodes(prob, net)?;
    let start = net.round();
    let mut trace = Trace::new("gd", &[], prob.fingerprint(), prob.dim());
    let mut x = prob.x0().clone();
    for t in 0.. {
        let round = start + t;
        net.set_round(round)?;
        if stop.done(t, prob.gap(&x)) {
            push_row(&mut trace, net, prob, &x, round, f64::NAN, vec![], false);
            trace.converged = stop.target_fgap.is_some_and(|e| prob.gap(&x) <= e);
            break;
        }
        let g = exchange_gradient(prob, net, &x)?;
        push_row(&mut trace, net, prob, &x, round, f64::NAN, vec![], true);
        check_divergence(&trace)?;
        x -= g * eta;
    }
    trace.x_final = x;
    Ok(trace)
}

/// Preconditioned descent with the exact covariance `M` and
/// `η = 2/(μ_ℓ + γ_ℓ)`. Follows the same message pattern as the quantized
/// method: the local covariances are gathered and the average broadcast
/// once, then every round gathers local directions `M⁻¹∇f_i` and broadcasts
/// their average. The error is checked against `(1 − 1/κ_ℓ)ᵗ·‖x⁰ − x*‖`.
pub fn pgd_full(prob: &GlmProblem, net: &mut Network, stop: StopRule) -> Result<Trace> {
    let eta = 2.0 / (prob.mu_l() + prob.gamma_l());
    let rate = 1.0 - 1.0 / prob.kappa_l();
    pgd_full_with(prob, prob.covariance(), eta, Some(rate), net, stop)
}

/// Preconditioned descent with a caller-supplied preconditioner and step.
/// With `rate = Some(r)` each iterate is checked against
/// `rᵗ·‖x⁰ − x*‖` up to a rounding floor.
pub fn pgd_full_with(
    prob: &GlmProblem,
    preconditioner: &SymMatrix,
    eta: f64,
    rate: Option<f64>,
    net: &mut Network,
    stop: StopRule,
) -> Result<Trace> {
    check_nodes(prob, net)?;
    let d = prob.dim();
    let n = prob.nodes();
    let start = net.round();
    let names: &[&str] = if rate.is_some() { &["iterate"] } else { &[] };
    let mut trace = Trace::new("pgd", names, prob.fingerprint(), d);

    let msgs = (0..n).map(|_| Message::full_precision((), packed_len(d))).collect();
    net.gather("precond_gather", msgs)?;
    net.broadcast("precond_broadcast", Message::full_precision((), packed_len(d)))?;
    let pre = Preconditioner::from_matrix(preconditioner.clone())?;

    let x0 = prob.x0().clone();
    let e0 = (&x0 - prob.x_star()).norm();
    let floor = 1e3 * f64::EPSILON * prob.kappa_m() * (prob.x_star().norm() + e0);
    let mut x = x0;
    for t in 0.. {
        let round = start + t;
        net.set_round(round)?;
        let (bound, slacks) = match rate {
            Some(r) => {
                let b = r.powi(t as i32) * e0;
                let err = (&x - prob.x_star()).norm();
                (
                    b,
                    vec![slack(
                        &format!("round {t}: ‖x_t − x*‖ ≤ (1 − 1/κ_ℓ)ᵗ·‖x⁰ − x*‖"),
                        b + floor,
                        err,
                    )?],
                )
            }
            None => (f64::NAN, vec![]),
        };
        if stop.done(t, prob.gap(&x)) {
            push_row(&mut trace, net, prob, &x, round, bound, slacks, t == 0);
            trace.converged = stop.target_fgap.is_some_and(|e| prob.gap(&x) <= e);
            break;
        }
        let msgs = (0..n)
            .map(|i| Message::full_precision(pre.solve(&prob.local_grad(i, &x)), d))
            .collect();
        let dirs = net.gather("dir_gather", msgs)?;
        let avg = dirs.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n as f64;
        let v = net.broadcast("dir_broadcast", Message::full_precision(avg, d))?;
        push_row(&mut trace, net, prob, &x, round, bound, slacks, true);
        check_divergence(&trace)?;
        x -= v * eta;
    }
    trace.x_final = x;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsgdOutput {
    pub value: Vec<f64>,
    pub bits: u64,
    pub overhead_bits: u64,
}

/// Payload bits of one QSGD message with `levels` levels: one sign-and-level
/// symbol from `2·levels + 1` values per coordinate.
pub fn qsgd_bits(dim: usize, levels: u32) -> u64 {
    let symbols = 2 * u64::from(levels) + 1;
    dim as u64 * u64::from(64 - (symbols - 1).leading_zeros())
}

/// Unbiased stochastic rounding of `|g_j|/‖g‖₂` to the grid `{0, 1/s, …, 1}`.
pub fn qsgd_quantize<R: Rng + ?Sized>(g: &[f64], levels: u32, rng: &mut R) -> Result<QsgdOutput> {
    if levels == 0 {
        return Err(Error::Config("QSGD needs at least one level".into()));
    }
    let bits = qsgd_bits(g.len(), levels);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(QsgdOutput {
            value: vec![0.0; g.len()],
            bits,
            overhead_bits: QSGD_OVERHEAD_BITS,
        });
    }
    let s = f64::from(levels);
    let value = g
        .iter()
        .map(|&v| {
            let r = v.abs() / norm * s;
            let lower = r.floor();
            let level = if rng.random::<f64>() < r - lower {
                lower + 1.0
            } else {
                lower
            };
            v.signum() * norm * level / s
        })
        .collect();
    Ok(QsgdOutput {
        value,
        bits,
        overhead_bits: QSGD_OVERHEAD_BITS,
    })
}

/// [`qsgd_quantize`] with a fresh generator seeded by `seed`.
pub fn qsgd_quantize_seeded(g: &[f64], levels: u32, seed: u64) -> Result<QsgdOutput> {
    qsgd_quantize(g, levels, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Gradient descent where every node sends the QSGD-quantized change of
/// its local gradient since its last message, and the master sends the
/// quantized change of the averaged estimate.
pub fn qsgd_gd(
    prob: &GlmProblem,
    eta: f64,
    levels: u32,
    seed: u64,
    net: &mut Network,
    stop: StopRule,
) -> Result<Trace> {
    check_nodes(prob, net)?;
    let d = prob.dim();
    let n = prob.nodes();
    let start = net.round();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Trace::new("qsgd", &[], prob.fingerprint(), d);
    let mut local_est = vec![DVector::zeros(d); n];
    let mut global_est = DVector::zeros(d);
    let mut x = prob.x0().clone();
    for t in 0.. {
        let round = start + t;
        net.set_round(round)?;
        if stop.done(t, prob.gap(&x)) {
            push_row(&mut trace, net, prob, &x, round, f64::NAN, vec![], false);
            trace.converged = stop.target_fgap.is_some_and(|e| prob.gap(&x) <= e);
            break;
        }
        let mut msgs = Vec::with_capacity(n);
        for (i, est) in local_est.iter().enumerate() {
            let diff = prob.local_grad(i, &x) - est;
            let q = qsgd_quantize(diff.as_slice(), levels, &mut rng)?;
            msgs.push(Message::with_cost(DVector::from_vec(q.value), q.bits, q.overhead_bits));
        }
        let diffs = net.gather("qsgd_gather", msgs)?;
        for (est, q) in local_est.iter_mut().zip(diffs) {
            *est += q;
        }
        let avg = local_est.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n as f64;
        let q = qsgd_quantize((avg - &global_est).as_slice(), levels, &mut rng)?;
        let q = net.broadcast(
            "qsgd_broadcast",
            Message::with_cost(DVector::from_vec(q.value), q.bits, q.overhead_bits),
        )?;
        global_est += q;
        push_row(&mut trace, net, prob, &x, round, f64::NAN, vec![], true);
        check_divergence(&trace)?;
        x -= &global_est * eta;
    }
    trace.x_final = x;
    Ok(trace)
}
