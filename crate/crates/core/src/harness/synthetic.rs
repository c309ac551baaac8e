//! Seeded synthetic problems and row partitioning.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::libsvm::Dataset;
use crate::error::{Error, Result};
use crate::glm_model::{GlmProblem, LossKind, Shard};

const MAX_ATTEMPTS: u64 = 5;
/// Variance of the planted minimizer's entries in the least-squares recipe.
pub const TARGET_VARIANCE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// Gaussian rows, planted `x̂` with variance-1000 entries,
    /// `b = A·x̂ + noise·N(0, 1)`.
    LeastSquares { noise: f64 },
    /// Unit-norm Gaussian rows, labels drawn from a planted logistic model.
    Logistic { rho: f64 },
}

impl SyntheticKind {
    pub fn loss(&self) -> LossKind {
        match *self {
            SyntheticKind::LeastSquares { .. } => LossKind::Quadratic,
            SyntheticKind::Logistic { rho } => LossKind::Logistic { rho },
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(rng))
}

/// Draws a dataset with `m` rows in dimension `d`.
pub fn synthetic_dataset(m: usize, d: usize, seed: u64, kind: SyntheticKind) -> Result<Dataset> {
    if d == 0 || m <= d {
        return Err(Error::Config(format!(
            "synthetic data needs m > d ≥ 1, got m = {m}, d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SyntheticKind::LeastSquares { noise } => {
            if !(noise >= 0.0) {
                return Err(Error::Config(format!("noise must be nonnegative, got {noise}")));
            }
            let a = gaussian_matrix(&mut rng, m, d);
            let planted = Normal::new(0.0, TARGET_VARIANCE.sqrt()).expect("valid normal");
            let x_hat = DVector::from_fn(d, |_, _| planted.sample(&mut rng));
            let mut b = &a * &x_hat;
            for v in b.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise * z;
            }
            Ok(Dataset { a, targets: b })
        }
        SyntheticKind::Logistic { .. } => {
            let mut a = gaussian_matrix(&mut rng, m, d);
            for mut row in a.row_iter_mut() {
                let norm = row.norm();
                if norm > 0.0 {
                    row /= norm;
                }
            }
            let w = DVector::from_fn(d, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                2.0 * z
            });
            let margins = &a * &w;
            let labels = margins.map(|z| {
                let p = 1.0 / (1.0 + (-z).exp());
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    -1.0
                }
            });
            Ok(Dataset { a, targets: labels })
        }
    }
}

/// Shuffles rows with `seed` and deals them into `n` contiguous blocks
/// whose sizes differ by at most one.
pub fn partition(data: &Dataset, n: usize, seed: u64) -> Result<Vec<Shard>> {
    if n == 0 {
        return Err(Error::Config("at least one node is required".into()));
    }
    let m = data.rows();
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = m / n;
    let extra = m % n;
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        let idx = &order[start..start + len];
        let a = DMatrix::from_fn(len, data.dim(), |r, c| data.a[(idx[r], c)]);
        let b = DVector::from_fn(len, |r, _| data.targets[idx[r]]);
        shards.push(Shard::new(a, b)?);
        start += len;
    }
    Ok(shards)
}

/// Builds a problem from a seeded synthetic dataset, starting at the origin.
/// Rank-deficient draws are retried with derived seeds, at most five times
/// in total.
pub fn gen_synthetic(m: usize, d: usize, n: usize, seed: u64, kind: SyntheticKind) -> Result<GlmProblem> {
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let sub = seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let data = synthetic_dataset(m, d, sub, kind)?;
        let shards = partition(&data, n, sub ^ 0x5151_5151)?;
        match GlmProblem::new(shards, kind.loss(), DVector::zeros(d)) {
            Err(e @ Error::RankDeficient(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

/// A start point inside the Newton ball: a random offset from `x*` of
/// length `radius`, halved until every minimizer is within `radius`.
pub fn newton_start(prob: &GlmProblem, radius: f64, seed: u64) -> Result<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = DVector::from_fn(prob.dim(), |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let dir = dir.normalize();
    let mut scale = radius;
    for _ in 0..60 {
        let x = prob.x_star() + &dir * scale;
        if prob.max_distance_to_minimizers(&x) <= radius {
            return Ok(x);
        }
        scale *= 0.5;
    }
    Err(Error::BallCondition {
        distance: prob.max_distance_to_minimizers(prob.x_star()),
        radius,
    })
}
