//! Generalized linear model objectives distributed over `n` nodes.
//!
//! Node `i` owns rows `A_i` and its local cost is `f_i(x) = ℓ_i(A_i x)`; the
//! global objective is `f = (1/n)·Σ f_i`. Two losses are supported:
//!
//! * quadratic: `ℓ_i(z) = ½‖z − b_i‖²`, so `μ_ℓ = γ_ℓ = 1`;
//! * logistic with a margin penalty:
//!   `ℓ_i(z) = Σ_j log(1 + e^{−y_j z_j}) + (ρ/2)·z_j²`, so `μ_ℓ = ρ` and
//!   `γ_ℓ = 1/4 + ρ`.
//!
//! Every constant the distributed algorithms need (spectra of the averaged
//! covariance `M = (1/n)·Σ A_iᵀA_i`, curvature bounds, Hessian-Lipschitz
//! bound, reference minimizers) is computed exactly at construction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sym_codec::SymMatrix;

/// `sup |d³/dz³ log(1 + e^{−z})| = 1/(6√3)`.
pub const LOGISTIC_THIRD_DERIVATIVE_BOUND: f64 = 0.096_225_044_864_937_63;

const SAMPLE_SEED: u64 = 0x005e_ed0f_9a11;
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Quadratic,
    /// Targets are labels in `{−1, +1}`; `rho > 0` is the margin penalty.
    Logistic {
        rho: f64,
    },
}

impl LossKind {
    /// `(μ_ℓ, γ_ℓ)`.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match *self {
            LossKind::Quadratic => (1.0, 1.0),
            LossKind::Logistic { rho } => (rho, 0.25 + rho),
        }
    }

    fn value(&self, z: f64, target: f64) -> f64 {
        match *self {
            LossKind::Quadratic => 0.5 * (z - target) * (z - target),
            LossKind::Logistic { rho } => softplus(-target * z) + 0.5 * rho * z * z,
        }
    }

    fn first(&self, z: f64, target: f64) -> f64 {
        match *self {
            LossKind::Quadratic => z - target,
            LossKind::Logistic { rho } => -target * sigmoid(-target * z) + rho * z,
        }
    }

    fn second(&self, z: f64, target: f64) -> f64 {
        match *self {
            LossKind::Quadratic => 1.0,
            LossKind::Logistic { rho } => {
                let s = sigmoid(target * z);
                s * (1.0 - s) + rho
            }
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Rows and targets owned by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub a: DMatrix<f64>,
    pub targets: DVector<f64>,
}

impl Shard {
    pub fn new(a: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if a.nrows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: targets.len(),
            });
        }
        Ok(Shard { a, targets })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, loss: &LossKind, x: &DVector<f64>) -> f64 {
        let z = &self.a * x;
        z.iter()
            .zip(self.targets.iter())
            .map(|(&zj, &tj)| loss.value(zj, tj))
            .sum()
    }

    fn grad(&self, loss: &LossKind, x: &DVector<f64>) -> DVector<f64> {
        let z = &self.a * x;
        let w = DVector::from_iterator(
            z.len(),
            z.iter().zip(self.targets.iter()).map(|(&zj, &tj)| loss.first(zj, tj)),
        );
        self.a.tr_mul(&w)
    }

    fn hessian(&self, loss: &LossKind, x: &DVector<f64>) -> SymMatrix {
        let z = &self.a * x;
        let mut scaled = self.a.clone();
        for (j, (&zj, &tj)) in z.iter().zip(self.targets.iter()).enumerate() {
            let w = loss.second(zj, tj);
            scaled.row_mut(j).scale_mut(w);
        }
        SymMatrix::from_matrix(self.a.tr_mul(&scaled)).expect("square")
    }
}

/// A distributed GLM instance with all problem constants precomputed.
#[derive(Debug, Clone)]
pub struct GlmProblem {
    shards: Vec<Shard>,
    loss: LossKind,
    dim: usize,
    mu_l: f64,
    gamma_l: f64,
    m: SymMatrix,
    local_m: Vec<SymMatrix>,
    lam_min_m: f64,
    lam_max_m: f64,
    lam_max_local: f64,
    sampled_mu: f64,
    sampled_gamma: f64,
    sigma: f64,
    x_star: DVector<f64>,
    f_star: f64,
    local_minimizers: Vec<DVector<f64>>,
    local_minima: Vec<f64>,
    x0: DVector<f64>,
}

impl GlmProblem {
    /// Validates the data and computes every problem constant.
    pub fn new(shards: Vec<Shard>, loss: LossKind, x0: DVector<f64>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Config("at least one node is required".into()));
        }
        let dim = shards[0].a.ncols();
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        for shard in &shards {
            if shard.a.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: shard.a.ncols(),
                });
            }
        }
        if x0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x0.len(),
            });
        }
        if let LossKind::Logistic { rho } = loss {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::Config(format!(
                    "logistic loss needs a positive margin penalty rho, got {rho}"
                )));
            }
            for shard in &shards {
                if shard.targets.iter().any(|&t| t != 1.0 && t != -1.0) {
                    return Err(Error::Config("logistic labels must be -1 or +1".into()));
                }
            }
        }

        let stacked = stack_rows(&shards, dim);
        check_full_rank(&stacked, "stacked data matrix A")?;
        for (i, shard) in shards.iter().enumerate() {
            if shard.rows() < dim {
                return Err(Error::RankDeficient(format!(
                    "node {i} holds {} rows for dimension {dim}; its local minimizer is not unique",
                    shard.rows()
                )));
            }
            check_full_rank(&shard.a, &format!("local data matrix A_{i}"))?;
        }

        let n = shards.len();
        let local_m: Vec<SymMatrix> = shards.iter().map(|s| SymMatrix::gram(&s.a)).collect();
        let m = SymMatrix::mean(&local_m).expect("non-empty").scale(1.0);
        let eig = m.eigenvalues();
        let (lam_min_m, lam_max_m) = (eig[0], eig[dim - 1]);
        let lam_max_local = local_m
            .iter()
            .map(SymMatrix::max_eigenvalue)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mu_l, gamma_l) = loss.curvature_bounds();

        let sigma = match loss {
            LossKind::Quadratic => 0.0,
            LossKind::Logistic { .. } => {
                let per_node = shards
                    .iter()
                    .map(|s| s.a.row_iter().map(|r| r.norm().powi(3)).sum::<f64>());
                LOGISTIC_THIRD_DERIVATIVE_BOUND * per_node.fold(0.0, f64::max)
            }
        };

        let mut prob = GlmProblem {
            shards,
            loss,
            dim,
            mu_l,
            gamma_l,
            m,
            local_m,
            lam_min_m,
            lam_max_m,
            lam_max_local,
            sampled_mu: f64::NAN,
            sampled_gamma: f64::NAN,
            sigma,
            x_star: DVector::zeros(dim),
            f_star: 0.0,
            local_minimizers: Vec::with_capacity(n),
            local_minima: Vec::with_capacity(n),
            x0,
        };

        let x_star = newton_oracle(|x| prob.global_grad(x), |x| prob.global_hessian(x), DVector::zeros(dim))?;
        prob.f_star = prob.global_value(&x_star);
        prob.x_star = x_star;
        for i in 0..n {
            let xi = newton_oracle(
                |x| prob.shards[i].grad(&prob.loss, x),
                |x| prob.shards[i].hessian(&prob.loss, x),
                prob.x_star.clone(),
            )?;
            prob.local_minima.push(prob.shards[i].value(&prob.loss, &xi));
            prob.local_minimizers.push(xi);
        }
        prob.sample_hessian_spectrum();
        Ok(prob)
    }

    /// Same data, different starting point.
    pub fn with_x0(&self, x0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x0.len(),
            });
        }
        let mut out = self.clone();
        out.x0 = x0;
        Ok(out)
    }

    fn sample_hessian_spectrum(&mut self) {
        let mut points = vec![DVector::zeros(self.dim), self.x0.clone(), self.x_star.clone()];
        points.extend(self.local_minimizers.iter().cloned());
        let scale = 1.0 + self.x_star.norm();
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        for _ in 0..8 {
            let p = DVector::from_fn(self.dim, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0));
            points.push(p);
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &points {
            let eig = self.global_hessian(p).eigenvalues();
            lo = lo.min(eig[0]);
            hi = hi.max(eig[self.dim - 1]);
        }
        self.sampled_mu = lo;
        self.sampled_gamma = hi;
    }

    pub fn nodes(&self) -> usize {
        self.shards.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn total_rows(&self) -> usize {
        self.shards.iter().map(Shard::rows).sum()
    }

    pub fn mu_l(&self) -> f64 {
        self.mu_l
    }

    pub fn gamma_l(&self) -> f64 {
        self.gamma_l
    }

    pub fn kappa_l(&self) -> f64 {
        self.gamma_l / self.mu_l
    }

    /// `M = (1/n)·Σ A_iᵀA_i`.
    pub fn covariance(&self) -> &SymMatrix {
        &self.m
    }

    /// `M_i = A_iᵀA_i`.
    pub fn local_covariance(&self, i: usize) -> &SymMatrix {
        &self.local_m[i]
    }

    pub fn lam_min_m(&self) -> f64 {
        self.lam_min_m
    }

    pub fn lam_max_m(&self) -> f64 {
        self.lam_max_m
    }

    pub fn kappa_m(&self) -> f64 {
        self.lam_max_m / self.lam_min_m
    }

    /// Largest eigenvalue over all local covariances.
    pub fn lam_max_local(&self) -> f64 {
        self.lam_max_local
    }

    /// Strong convexity of `f` valid on all of ℝ^d: `μ_ℓ·λ_min(M)`.
    pub fn mu(&self) -> f64 {
        self.mu_l * self.lam_min_m
    }

    /// Smoothness of `f` valid on all of ℝ^d: `γ_ℓ·λ_max(M)`.
    pub fn gamma(&self) -> f64 {
        self.gamma_l * self.lam_max_m
    }

    pub fn kappa(&self) -> f64 {
        self.gamma() / self.mu()
    }

    /// Smoothness bound holding for `f` and every `f_i`.
    pub fn gamma_all(&self) -> f64 {
        self.gamma_l * self.lam_max_m.max(self.lam_max_local)
    }

    /// Extreme Hessian eigenvalues of `f` over a fixed sample of points.
    pub fn sampled_hessian_bounds(&self) -> (f64, f64) {
        (self.sampled_mu, self.sampled_gamma)
    }

    /// Relative slacks of `λ_min(∇²f) ≥ μ_ℓ·λ_min(M)` and
    /// `λ_max(∇²f) ≤ γ_ℓ·λ_max(M)` over the sampled points. Nonnegative
    /// values mean the inequalities hold.
    pub fn curvature_inequality_slack(&self) -> (f64, f64) {
        let lower = self.mu();
        let upper = self.gamma();
        (
            (self.sampled_mu - lower) / lower.abs().max(f64::MIN_POSITIVE),
            (upper - self.sampled_gamma) / upper.abs().max(f64::MIN_POSITIVE),
        )
    }

    /// Hessian-Lipschitz bound valid for `f` and every `f_i`. Zero for the
    /// quadratic loss.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn local_minimizer(&self, i: usize) -> &DVector<f64> {
        &self.local_minimizers[i]
    }

    pub fn local_minimum(&self, i: usize) -> f64 {
        self.local_minima[i]
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    /// `max_i {‖x − x*‖, ‖x − x_i*‖}`.
    pub fn max_distance_to_minimizers(&self, x: &DVector<f64>) -> f64 {
        self.local_minimizers
            .iter()
            .map(|xi| (x - xi).norm())
            .fold((x - &self.x_star).norm(), f64::max)
    }

    /// Initialization radius `D` for the configured `x⁰`.
    pub fn init_radius(&self) -> f64 {
        self.max_distance_to_minimizers(&self.x0)
    }

    /// Radius from strong convexity and nonnegative costs:
    /// `‖x⁰ − x*‖² ≤ (2/μ)·f(x⁰)`, and likewise per node.
    pub fn init_radius_from_values(&self) -> f64 {
        let global = (2.0 * self.global_value(&self.x0) / self.mu()).sqrt();
        (0..self.nodes())
            .map(|i| {
                let mu_i = self.mu_l * self.local_m[i].min_eigenvalue();
                (2.0 * self.local_value(i, &self.x0) / mu_i).sqrt()
            })
            .fold(global, f64::max)
    }

    /// `C = max_i ‖x* − x_i*‖`.
    pub fn minimizer_spread(&self) -> f64 {
        self.local_minimizers
            .iter()
            .map(|xi| (xi - &self.x_star).norm())
            .fold(0.0, f64::max)
    }

    /// `c = max_i |f_i*|`.
    pub fn local_minimum_bound(&self) -> f64 {
        self.local_minima.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn try_local_grad(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.local_grad(i, x))
    }

    pub fn try_local_hessian(&self, i: usize, x: &DVector<f64>) -> Result<SymMatrix> {
        self.check_dim(x)?;
        Ok(self.local_hessian(i, x))
    }

    /// `f_i(x)`. Panics on dimension mismatch; see the `try_` variants.
    pub fn local_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.shards[i].value(&self.loss, x)
    }

    /// `∇f_i(x) = A_iᵀ∇ℓ_i(A_i x)`.
    pub fn local_grad(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        self.shards[i].grad(&self.loss, x)
    }

    /// `∇²f_i(x) = A_iᵀ∇²ℓ_i(A_i x)A_i`.
    pub fn local_hessian(&self, i: usize, x: &DVector<f64>) -> SymMatrix {
        match self.loss {
            LossKind::Quadratic => self.local_m[i].clone(),
            LossKind::Logistic { .. } => self.shards[i].hessian(&self.loss, x),
        }
    }

    pub fn global_value(&self, x: &DVector<f64>) -> f64 {
        let n = self.nodes() as f64;
        (0..self.nodes()).map(|i| self.local_value(i, x)).sum::<f64>() / n
    }

    pub fn global_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.nodes() as f64;
        let mut g = DVector::zeros(self.dim);
        for i in 0..self.nodes() {
            g += self.local_grad(i, x);
        }
        g / n
    }

    pub fn global_hessian(&self, x: &DVector<f64>) -> SymMatrix {
        match self.loss {
            LossKind::Quadratic => self.m.clone(),
            LossKind::Logistic { .. } => {
                let hs: Vec<SymMatrix> = (0..self.nodes()).map(|i| self.local_hessian(i, x)).collect();
                SymMatrix::mean(&hs).expect("non-empty")
            }
        }
    }

    /// `f(x) − f*`.
    pub fn gap(&self, x: &DVector<f64>) -> f64 {
        self.global_value(x) - self.f_star
    }

    /// Empirical Hessian-Lipschitz ratio `‖∇²g(x) − ∇²g(x')‖/‖x − x'‖` over
    /// random pairs near `x*`, maximized over `g ∈ {f, f_1, …, f_n}`.
    pub fn hessian_lipschitz_estimate(&self, pairs: usize, radius: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = 0.0f64;
        for _ in 0..pairs {
            let p = &self.x_star + DVector::from_fn(self.dim, |_, _| radius * (2.0 * rng.random::<f64>() - 1.0));
            let q = &p + DVector::from_fn(self.dim, |_, _| 1e-2 * radius * (2.0 * rng.random::<f64>() - 1.0));
            let step = (&p - &q).norm();
            if step == 0.0 {
                continue;
            }
            best = best.max(self.global_hessian(&p).sub(&self.global_hessian(&q)).spectral_norm() / step);
            for i in 0..self.nodes() {
                let diff = self.local_hessian(i, &p).sub(&self.local_hessian(i, &q));
                best = best.max(diff.spectral_norm() / step);
            }
        }
        best
    }

    /// Order-sensitive digest of the data and loss, used to check that
    /// traces being compared came from the same instance. The starting point
    /// is excluded.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.nodes() as u64);
        feed(match self.loss {
            LossKind::Quadratic => 0,
            LossKind::Logistic { rho } => rho.to_bits(),
        });
        feed(self.dim as u64);
        for shard in &self.shards {
            feed(shard.rows() as u64);
            for v in shard.a.iter().chain(shard.targets.iter()) {
                feed(v.to_bits());
            }
        }
        h
    }
}

fn stack_rows(shards: &[Shard], dim: usize) -> DMatrix<f64> {
    let rows: usize = shards.iter().map(Shard::rows).sum();
    let mut out = DMatrix::zeros(rows, dim);
    let mut r = 0;
    for shard in shards {
        out.rows_mut(r, shard.rows()).copy_from(&shard.a);
        r += shard.rows();
    }
    out
}

fn check_full_rank(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() < a.ncols() {
        return Err(Error::RankDeficient(format!(
            "{what} has {} rows for {} columns",
            a.nrows(),
            a.ncols()
        )));
    }
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(Error::RankDeficient(format!(
            "{what}: smallest singular value {min:.3e} vs largest {max:.3e}"
        )));
    }
    Ok(())
}

/// Damped Newton iteration used as the ground-truth minimizer.
fn newton_oracle(
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    hess: impl Fn(&DVector<f64>) -> SymMatrix,
    start: DVector<f64>,
) -> Result<DVector<f64>> {
    let mut x = start;
    let mut g = grad(&x);
    for _ in 0..200 {
        let gnorm = g.norm();
        if gnorm <= 1e-12 {
            break;
        }
        let chol = hess(&x)
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("Hessian is not positive definite".into()))?;
        let step = chol.solve(&g);
        // backtrack on the gradient norm; stop once rounding dominates
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-8 {
            let cand = &x - &step * t;
            let gc = grad(&cand);
            if gc.norm() < gnorm {
                accepted = Some((cand, gc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, gc)) => {
                x = cand;
                g = gc;
            }
            None => break,
        }
    }
    Ok(x)
}
