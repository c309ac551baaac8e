use std::path::Path;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qprecond::baselines::qsgd_quantize_seeded;
use qprecond::glm_model::GlmProblem;
use qprecond::harness::{gen_synthetic, parse_libsvm, to_libsvm_string, Dataset, SyntheticKind};
use qprecond::net_sim::{Message, Network, Topology};
use qprecond::quantizer::{decode, encode, quantize, EncodedBlob, QuantSpec};
use qprecond::sym_codec::{phi, quantize_sym, SymMatrix};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A reference point at distance `frac·y` from `x` along `dir`.
fn offset(x: &[f64], dir: &[f64], y: f64, frac: f64) -> Vec<f64> {
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    x.iter().zip(dir).map(|(a, b)| a + b / norm * y * frac).collect()
}

fn vec_and_dir(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        (
            prop::collection::vec(-1e3..1e3f64, d),
            prop::collection::vec(-1.0..1.0f64, d),
        )
    })
}

fn sym_pair(d: usize) -> impl Strategy<Value = (SymMatrix, SymMatrix)> {
    let m = prop::collection::vec(-10.0..10.0f64, d * d);
    (m.clone(), m).prop_map(move |(a, b)| {
        (
            SymMatrix::from_row_slice(d, &a).unwrap(),
            SymMatrix::from_row_slice(d, &b).unwrap(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn quantizer_output_within_eps((x, dir) in vec_and_dir(64), y in 1e-3..1e3f64, ratio in 1e-4..2.0f64, frac in 0.0..=1.0f64) {
        let eps = y * ratio;
        let x_ref = offset(&x, &dir, y, frac);
        prop_assume!(dist(&x, &x_ref) <= y);
        let q = quantize(&x, &x_ref, y, eps, true).unwrap();
        prop_assert!(dist(&q.value, &x) <= eps * (1.0 + 1e-12));
    }

    #[test]
    fn decoding_is_reference_independent((x, dir) in vec_and_dir(16), y in 1e-2..1e2f64, ratio in 1e-3..0.5f64, f1 in 0.0..=1.0f64, f2 in 0.0..=1.0f64) {
        let spec = QuantSpec::new(x.len(), y, y * ratio).unwrap();
        let blob = encode(&x, &spec).unwrap();
        let r1 = offset(&x, &dir, y, f1);
        let r2 = offset(&x, &dir.iter().map(|v| -v).collect::<Vec<_>>(), y, f2);
        prop_assume!(dist(&x, &r1) <= y && dist(&x, &r2) <= y);
        prop_assert_eq!(decode(&blob, &r1).unwrap(), decode(&blob, &r2).unwrap());
    }

    #[test]
    fn encoding_is_deterministic_and_packs_losslessly((x, _dir) in vec_and_dir(32), y in 1e-2..1e2f64, ratio in 1e-3..2.0f64) {
        let spec = QuantSpec::new(x.len(), y, y * ratio).unwrap();
        let a = encode(&x, &spec).unwrap();
        let b = encode(&x, &spec).unwrap();
        prop_assert_eq!(&a, &b);
        let bytes = a.pack();
        prop_assert_eq!(bytes.len() as u64, a.payload_bits().div_ceil(8));
        prop_assert_eq!(EncodedBlob::unpack(&bytes, spec).unwrap(), a);
    }

    #[test]
    fn phi_distortion_bounds((p, q) in (2usize..=12).prop_flat_map(sym_pair)) {
        let diff = p.sub(&q);
        let d = diff.dim() as f64;
        let spectral = diff.spectral_norm();
        let packed = phi(&diff).as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = spectral.max(packed).max(1e-300);
        prop_assert!((spectral - packed / d.sqrt()) / scale >= -1e-9);
        prop_assert!((2f64.sqrt() * packed - spectral) / scale >= -1e-9);
        // the Frobenius norm sits between the packed norm and √2 times it
        prop_assert!(diff.frobenius_norm() >= packed * (1.0 - 1e-12));
        prop_assert!(diff.frobenius_norm() <= 2f64.sqrt() * packed * (1.0 + 1e-12));
    }

    #[test]
    fn quantize_sym_spectral_error((p, q) in (2usize..=8).prop_flat_map(sym_pair), ratio in 1e-3..0.5f64) {
        let y = dist(phi(&p).as_slice(), phi(&q).as_slice()) + 1e-9;
        let eps = y * ratio;
        let out = quantize_sym(&p, &q, y, eps, true).unwrap();
        prop_assert!(out.matrix.sub(&p).spectral_norm() <= 2f64.sqrt() * eps * (1.0 + 1e-9));
    }

    #[test]
    fn libsvm_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); s };
        let a = DMatrix::from_fn(rows, cols, |_, _| {
            let v = next();
            if v % 3 == 0 { 0.0 } else { (v >> 11) as f64 / (1u64 << 40) as f64 - 2000.0 }
        });
        let targets = DVector::from_fn(rows, |_, _| (next() % 7) as f64 - 3.0);
        let ds = Dataset { a, targets };
        let back = parse_libsvm(&to_libsvm_string(&ds), Path::new("mem"), Some(cols), false).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn ledger_conserves_bits(n in 1usize..6, ops in prop::collection::vec((any::<bool>(), 0u64..200), 0..30)) {
        let mut net = Network::new(Topology::star(n).unwrap());
        let mut expected = 0u64;
        for (k, (is_gather, bits)) in ops.into_iter().enumerate() {
            net.set_round(k / 3).unwrap();
            if is_gather {
                let msgs = (0..n).map(|i| Message::with_cost((), bits + i as u64, 1)).collect();
                net.gather("g", msgs).unwrap();
                expected += (1..n).map(|i| bits + i as u64).sum::<u64>();
            } else {
                net.broadcast("b", Message::with_cost((), bits, 1)).unwrap();
                expected += (n as u64 - 1) * bits;
            }
        }
        prop_assert_eq!(net.ledger().total_bits(), expected);
        net.ledger().verify().unwrap();
        let report = net.ledger().report();
        prop_assert_eq!(report.iter().map(|r| r.bits_this_round).sum::<u64>(), expected);
    }
}

fn problems() -> impl Strategy<Value = GlmProblem> {
    (any::<u64>(), any::<bool>(), 1usize..4).prop_map(|(seed, logistic, n)| {
        let kind = if logistic {
            SyntheticKind::Logistic { rho: 0.3 }
        } else {
            SyntheticKind::LeastSquares { noise: 1.0 }
        };
        gen_synthetic(30 * n, 3, n, seed, kind).unwrap()
    })
}

fn random_point(seed: u64, d: usize, scale: f64) -> DVector<f64> {
    let mut s = seed | 1;
    DVector::from_fn(d, |_, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        scale * ((s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_central_differences(prob in problems(), seed in any::<u64>()) {
        let scale = 1.0 + prob.x_star().norm();
        for k in 0..20u64 {
            let x = random_point(seed.wrapping_add(k), prob.dim(), scale);
            for i in 0..prob.nodes() {
                let g = prob.local_grad(i, &x);
                let h = 1e-6 * (1.0 + x.norm());
                let fd = DVector::from_fn(prob.dim(), |j, _| {
                    let mut e = DVector::zeros(prob.dim());
                    e[j] = h;
                    (prob.local_value(i, &(&x + &e)) - prob.local_value(i, &(&x - &e))) / (2.0 * h)
                });
                let rel = (&fd - &g).norm() / g.norm().max(1.0);
                prop_assert!(rel <= 1e-6, "relative gradient error {rel}");
            }
        }
    }

    #[test]
    fn hessians_match_differenced_gradients(prob in problems(), seed in any::<u64>()) {
        let x = random_point(seed, prob.dim(), 1.0 + prob.x_star().norm());
        for i in 0..prob.nodes() {
            let hess = prob.local_hessian(i, &x);
            let h = 1e-5 * (1.0 + x.norm());
            let mut fd = DMatrix::zeros(prob.dim(), prob.dim());
            for j in 0..prob.dim() {
                let mut e = DVector::zeros(prob.dim());
                e[j] = h;
                let col = (prob.local_grad(i, &(&x + &e)) - prob.local_grad(i, &(&x - &e))) / (2.0 * h);
                fd.set_column(j, &col);
            }
            let rel = (&fd - hess.as_matrix()).norm() / hess.frobenius_norm();
            prop_assert!(rel <= 1e-5, "relative Hessian error {rel}");
        }
    }

    #[test]
    fn curvature_inequalities_hold(prob in problems()) {
        let (lower, upper) = prob.curvature_inequality_slack();
        prop_assert!(lower >= -1e-9 && upper >= -1e-9, "{lower} {upper}");
        let explicit = SymMatrix::mean(&(0..prob.nodes()).map(|i| SymMatrix::gram(&prob.shards()[i].a)).collect::<Vec<_>>()).unwrap();
        let rel = prob.covariance().sub(&explicit).frobenius_norm() / explicit.frobenius_norm();
        prop_assert!(rel <= 1e-12);
    }

    #[test]
    fn global_quantities_average_the_shards(prob in problems(), seed in any::<u64>()) {
        let x = random_point(seed, prob.dim(), 3.0);
        let n = prob.nodes() as f64;
        let g: DVector<f64> = (0..prob.nodes()).map(|i| prob.local_grad(i, &x)).fold(DVector::zeros(prob.dim()), |a, b| a + b) / n;
        prop_assert!((prob.global_grad(&x) - &g).norm() <= 1e-12 * g.norm().max(1.0));
        let v: f64 = (0..prob.nodes()).map(|i| prob.local_value(i, &x)).sum::<f64>() / n;
        prop_assert!((prob.global_value(&x) - v).abs() <= 1e-12 * v.abs().max(1.0));
        prop_assert!(prob.global_grad(prob.x_star()).norm() <= 1e-10 * (1.0 + prob.x_star().norm()));
    }

    #[test]
    fn qsgd_is_unbiased(g in prop::collection::vec(-5.0..5.0f64, 1..5), levels in 1u32..5, seed in any::<u64>()) {
        let draws = 4000;
        let mut mean = vec![0.0; g.len()];
        let mut sq = vec![0.0; g.len()];
        for k in 0..draws {
            let q = qsgd_quantize_seeded(&g, levels, seed.wrapping_add(k)).unwrap();
            for j in 0..g.len() {
                mean[j] += q.value[j];
                sq[j] += q.value[j] * q.value[j];
            }
        }
        for j in 0..g.len() {
            let m = mean[j] / draws as f64;
            let var = (sq[j] / draws as f64 - m * m).max(0.0);
            let se = (var / draws as f64).sqrt();
            prop_assert!((m - g[j]).abs() <= 6.0 * se + 1e-12, "coordinate {j}: mean {m}, target {}", g[j]);
        }
    }
}

#[test]
fn quadratic_preconditioned_hessian_is_identity() {
    let prob = gen_synthetic(120, 4, 3, 5, SyntheticKind::LeastSquares { noise: 0.5 }).unwrap();
    let chol = prob.covariance().cholesky().unwrap();
    let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let prod = chol.solve(prob.global_hessian(&x).as_matrix());
    assert!((prod - DMatrix::identity(4, 4)).norm() <= 1e-10);
}

#[test]
fn logistic_lipschitz_bound_dominates_finite_differences() {
    let prob = gen_synthetic(90, 3, 3, 2, SyntheticKind::Logistic { rho: 0.5 }).unwrap();
    let est = prob.hessian_lipschitz_estimate(40, 1.0, 8);
    assert!(est <= prob.sigma(), "{est} > {}", prob.sigma());
}
