//! Quantized Newton's method.
//!
//! Every round the nodes refresh a shared quantized Hessian `H_t` (each node
//! encodes its local Hessian against its previous estimate) and then
//! exchange quantized Newton directions `H_t⁻¹∇f_i(x_t)`. Radii follow the
//! schedules `G(t)` and `P(t)`, which shrink by `(1+α)/2` per round. The
//! method is local: `x⁰` must lie within `αμ/(2σ)` of the global and every
//! local minimizer.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::error::{Error, Result};
use crate::glm_model::GlmProblem;
use crate::net_sim::Network;
use crate::protocol::{broadcast_vector, from_vec, gather_vectors, packed, slack, to_vec, unpacked};
use crate::sym_codec::SymMatrix;
use crate::trace::{StopRule, Trace};

pub const TAG_HESS_GATHER: &str = "hess_gather";
pub const TAG_HESS_BROADCAST: &str = "hess_broadcast";
pub const TAG_DIR_GATHER: &str = "dir_gather";
pub const TAG_DIR_BROADCAST: &str = "dir_broadcast";

/// Per-round checks recorded in the trace, in column order.
pub const SLACK_NAMES: [&str; 10] = [
    "iterate",
    "local_hessian",
    "global_hessian",
    "local_direction",
    "global_direction",
    "min_eigenvalue",
    "hessian_gather_radius",
    "hessian_broadcast_radius",
    "direction_gather_radius",
    "direction_broadcast_radius",
];

/// Relative tolerance on `λ_min(H_t) ≥ μ/2`.
const EIGEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    pub alpha: f64,
    pub theta: f64,
    pub k: f64,
    pub mu: f64,
    /// Bound on every local and the global Hessian norm.
    pub gamma: f64,
    pub kappa: f64,
    pub sigma: f64,
}

impl NewtonParams {
    /// `sigma_override` replaces the problem's Hessian-Lipschitz bound; it is
    /// required when that bound is zero.
    pub fn new(prob: &GlmProblem, alpha: f64, sigma_override: Option<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let sigma = sigma_override.unwrap_or(prob.sigma());
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Refused(format!(
                "quantized Newton needs a positive Hessian-Lipschitz bound, got sigma = {sigma}; \
                 quadratic objectives should use qpgd or pass an explicit sigma"
            )));
        }
        let mu = prob.mu();
        let gamma = prob.gamma_all();
        Ok(NewtonParams {
            alpha,
            theta: alpha * (1.0 - alpha) / 4.0,
            k: 2.0 / alpha,
            mu,
            gamma,
            kappa: gamma / mu,
            sigma,
        })
    }

    fn decay(&self, t: usize) -> f64 {
        (0.5 * (1.0 + self.alpha)).powi(t as i32)
    }

    /// `G(t) = (μ/4)·α·((1+α)/2)ᵗ`.
    pub fn g(&self, t: usize) -> f64 {
        0.25 * self.mu * self.alpha * self.decay(t)
    }

    /// `P(t) = (μ/(2σ))·K·α·((1+α)/2)ᵗ`.
    pub fn p(&self, t: usize) -> f64 {
        self.mu / (2.0 * self.sigma) * self.k * self.alpha * self.decay(t)
    }

    /// Radius of the initialization ball, `αμ/(2σ)`.
    pub fn ball_radius(&self) -> f64 {
        self.alpha * self.mu / (2.0 * self.sigma)
    }

    /// `(αμ/(2σ))·((1+α)/2)ᵗ`.
    pub fn iterate_bound(&self, t: usize) -> f64 {
        self.ball_radius() * self.decay(t)
    }

    /// Rounds after which the iterate bound guarantees `f − f* ≤ eps`
    /// through `f − f* ≤ (γ_f/2)‖x − x*‖²`.
    pub fn rounds_needed(&self, gamma_f: f64, eps: f64) -> usize {
        let ratio = 0.5 * gamma_f * self.ball_radius().powi(2) / eps;
        if ratio <= 1.0 {
            return 0;
        }
        (ratio.ln() / (2.0 * (2.0 / (1.0 + self.alpha)).ln())).ceil() as usize
    }
}

/// Node-side state after round `t`.
#[derive(Debug, Clone)]
pub struct NewtonState {
    pub t: usize,
    pub x: DVector<f64>,
    pub local_hessians: Vec<SymMatrix>,
    pub hessian: SymMatrix,
    pub local_directions: Vec<DVector<f64>>,
    pub direction: DVector<f64>,
    /// Slacks of the checks performed when this state was built.
    pub slacks: Vec<f64>,
}

fn factor(h: &SymMatrix, params: &NewtonParams, t: usize) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let lam = h.min_eigenvalue();
    let floor = 0.5 * params.mu * (1.0 - EIGEN_TOLERANCE);
    let s = slack(&format!("round {t}: μ/2 ≤ λ_min(H_t)"), lam, floor)?;
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::violation(format!("round {t}: H_t positive definite"), floor, lam))?;
    Ok((chol, s))
}

/// Checks the ball condition, then runs the round-0 exchanges at `x`.
pub fn newton_init(
    prob: &GlmProblem,
    params: &NewtonParams,
    net: &mut Network,
    x: &DVector<f64>,
) -> Result<NewtonState> {
    let distance = prob.max_distance_to_minimizers(x);
    let radius = params.ball_radius();
    if !(distance <= radius) {
        return Err(Error::BallCondition { distance, radius });
    }
    let master = net.topology().master();
    exchange(prob, params, net, 0, x.clone(), None, master)
}

/// One round: `x_{t+1} = x_t − v_t`, then the Hessian and direction
/// exchanges at `x_{t+1}`.
pub fn newton_round(
    prob: &GlmProblem,
    params: &NewtonParams,
    net: &mut Network,
    state: &NewtonState,
) -> Result<NewtonState> {
    let x = &state.x - &state.direction;
    let master = net.topology().master();
    exchange(prob, params, net, state.t + 1, x, Some(state), master)
}

fn exchange(
    prob: &GlmProblem,
    params: &NewtonParams,
    net: &mut Network,
    t: usize,
    x: DVector<f64>,
    prev: Option<&NewtonState>,
    master: usize,
) -> Result<NewtonState> {
    let n = prob.nodes();
    let nf = n as f64;
    let d = prob.dim();
    let root_d = (d as f64).sqrt();
    let kappa = params.kappa;
    let g = params.g(t);
    let p = params.p(t);

    let iterate_slack = slack(
        &format!("round {t}: ‖x_t − x*‖ ≤ (αμ/(2σ))·((1+α)/2)ᵗ"),
        params.iterate_bound(t),
        (&x - prob.x_star()).norm(),
    )?;

    // Hessians
    let true_local: Vec<SymMatrix> = (0..n).map(|i| prob.local_hessian(i, &x)).collect();
    let true_global = SymMatrix::mean(&true_local).expect("n ≥ 1");
    let packed_local: Vec<Vec<f64>> = true_local.iter().map(packed).collect();
    let eps_h = g / (2.0 * 2f64.sqrt() * kappa);
    let (y_hg, hg_refs, y_hb, hb_refs) = match prev {
        None => (
            2.0 * root_d * params.gamma,
            vec![packed_local[master].clone(); n],
            root_d * (g / (2.0 * kappa) + 2.0 * params.gamma),
            packed_local.clone(),
        ),
        Some(s) => (
            10.0 * root_d / (1.0 + params.alpha) * g,
            s.local_hessians.iter().map(packed).collect(),
            root_d * (1.0 / (2.0 * kappa) + 10.0 / (1.0 + params.alpha)) * g,
            vec![packed(&s.hessian); n],
        ),
    };
    let (decoded, hg_slack) = gather_vectors(net, TAG_HESS_GATHER, &packed_local, &hg_refs, y_hg, eps_h)?;
    let local_hessians: Vec<SymMatrix> = decoded.into_iter().map(|v| unpacked(d, v)).collect::<Result<_>>()?;
    let mut local_h_slack = f64::INFINITY;
    for (i, (h, truth)) in local_hessians.iter().zip(&true_local).enumerate() {
        local_h_slack = local_h_slack.min(slack(
            &format!("round {t}: ‖H_t^{i} − ∇²f_{i}(x_t)‖ ≤ G(t)/(2κ)"),
            g / (2.0 * kappa),
            h.sub(truth).spectral_norm(),
        )?);
    }
    let s_mean = SymMatrix::mean(&local_hessians).expect("n ≥ 1");
    let (h, hb_slack) = broadcast_vector(net, TAG_HESS_BROADCAST, &packed(&s_mean), &hb_refs, y_hb, eps_h)?;
    let hessian = unpacked(d, h)?;
    let global_h_slack = slack(
        &format!("round {t}: ‖H_t − ∇²f(x_t)‖ ≤ G(t)/κ"),
        g / kappa,
        hessian.sub(&true_global).spectral_norm(),
    )?;
    let (chol, eig_slack) = factor(&hessian, params, t)?;

    // directions
    let eps_v = params.theta * p / 2.0;
    let local: Vec<Vec<f64>> = (0..n).map(|i| to_vec(&chol.solve(&prob.local_grad(i, &x)))).collect();
    let (y_vg, vg_refs, y_vb, vb_refs) = match prev {
        None => (
            4.0 * kappa * p,
            vec![local[master].clone(); n],
            (params.theta / 2.0 + 4.0 * kappa) * p,
            local.clone(),
        ),
        Some(s) => (
            11.0 * kappa * p,
            s.local_directions.iter().map(to_vec).collect(),
            (params.theta / 2.0 + 11.0 * kappa) * p,
            vec![to_vec(&s.direction); n],
        ),
    };
    let (decoded, vg_slack) = gather_vectors(net, TAG_DIR_GATHER, &local, &vg_refs, y_vg, eps_v)?;
    let mut local_v_slack = f64::INFINITY;
    for (i, (u, v)) in local.iter().zip(&decoded).enumerate() {
        let e = (from_vec(u.clone()) - from_vec(v.clone())).norm();
        local_v_slack = local_v_slack.min(slack(
            &format!("round {t}: ‖H_t⁻¹∇f_{i}(x_t) − v_{i}‖ ≤ θP(t)/2"),
            eps_v,
            e,
        )?);
    }
    let local_directions: Vec<DVector<f64>> = decoded.into_iter().map(from_vec).collect();
    let avg = local_directions.iter().fold(DVector::zeros(d), |acc, v| acc + v) / nf;
    let (v, vb_slack) = broadcast_vector(net, TAG_DIR_BROADCAST, avg.as_slice(), &vb_refs, y_vb, eps_v)?;
    let direction = from_vec(v);
    let exact = chol.solve(&prob.global_grad(&x));
    let global_v_slack = slack(
        &format!("round {t}: ‖H_t⁻¹∇f(x_t) − v‖ ≤ θP(t)"),
        params.theta * p,
        (&exact - &direction).norm(),
    )?;

    Ok(NewtonState {
        t,
        x,
        local_hessians,
        hessian,
        local_directions,
        direction,
        slacks: vec![
            iterate_slack,
            local_h_slack,
            global_h_slack,
            local_v_slack,
            global_v_slack,
            eig_slack,
            hg_slack,
            hb_slack,
            vg_slack,
            vb_slack,
        ],
    })
}

/// Iterates from `prob.x0()` until `stop` fires. The stopping test runs on
/// `x_t` before round `t` communicates.
pub fn newton_run(prob: &GlmProblem, params: &NewtonParams, net: &mut Network, stop: StopRule) -> Result<Trace> {
    if net.topology().nodes() != prob.nodes() {
        return Err(Error::Config(format!(
            "network has {} nodes, problem has {}",
            net.topology().nodes(),
            prob.nodes()
        )));
    }
    let start_round = net.round();
    let mut trace = Trace::new("qnewton", &SLACK_NAMES, prob.fingerprint(), prob.dim());
    let mut state: Option<NewtonState> = None;
    let mut x = prob.x0().clone();
    for t in 0.. {
        let fgap = prob.gap(&x);
        let err = (&x - prob.x_star()).norm();
        let bound = params.iterate_bound(t);
        if stop.done(t, fgap) {
            let s = slack(&format!("round {t}: ‖x_t − x*‖ ≤ (αμ/(2σ))·((1+α)/2)ᵗ"), bound, err)?;
            let mut slacks = vec![f64::NAN; SLACK_NAMES.len()];
            slacks[0] = s;
            trace.push(err, fgap, bound, slacks, 0, 0, 0);
            trace.converged = stop.target_fgap.is_some_and(|e| fgap <= e);
            break;
        }
        let round = start_round + t;
        net.set_round(round)?;
        let next = match &state {
            None => newton_init(prob, params, net, &x)?,
            Some(s) => newton_round(prob, params, net, s)?,
        };
        let ledger = net.ledger();
        trace.push(
            err,
            fgap,
            bound,
            next.slacks.clone(),
            ledger.bits_with_prefix(round, "hess"),
            ledger.bits_with_prefix(round, "dir"),
            ledger.overhead_in_round(round),
        );
        x = &next.x - &next.direction;
        state = Some(next);
    }
    net.ledger().verify()?;
    trace.x_final = x;
    Ok(trace)
}
