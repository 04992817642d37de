mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sparsegan::diff::{grad_check_with, GradCheckOptions, Graph, Tensor};
use sparsegan::sparse::{
    least_squares, projection_matrix, sparse_backward, sparse_encode, Dictionary, PursuitConfig, Selection,
};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_dict(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dictionary {
    Dictionary::new(random_vec(rng, n * d), n, d).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random orthonormal rows via Gram-Schmidt.
fn orthonormal_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < n {
        let mut v = random_vec(rng, d);
        for r in &rows {
            let p = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(x, y)| *x -= p * y);
        }
        let nv = norm(&v);
        if nv > 1e-3 {
            rows.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_history_never_increases(seed in any::<u64>(), n in 12usize..40, d in 2usize..12, l in 1usize..12) {
        let mut rng = common::rng(seed);
        let dict = random_dict(&mut rng, n, d);
        let h = random_vec(&mut rng, d);
        let code = sparse_encode(&h, &dict, &PursuitConfig::new(l)).unwrap();
        for w in code.residual_norm_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * norm(&h));
        }
        prop_assert!(code.support_len() <= l.min(n));
    }

    #[test]
    fn residual_is_orthogonal_to_support(seed in any::<u64>(), n in 12usize..40, d in 2usize..12, l in 1usize..12) {
        let mut rng = common::rng(seed);
        let dict = random_dict(&mut rng, n, d);
        let h = random_vec(&mut rng, d);
        let code = sparse_encode(&h, &dict, &PursuitConfig::new(l)).unwrap();
        prop_assume!(code.ridge == 0.0);
        for &i in &code.indices {
            prop_assert!(dot(&code.residual, dict.atom(i)).abs() <= 1e-8 * norm(&h));
        }
        let recon: Vec<f64> = h.iter().zip(&code.residual).map(|(a, b)| a - b).collect();
        for (a, b) in recon.iter().zip(&code.reconstruction) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent_and_symmetric(seed in any::<u64>(), n in 12usize..40, d in 2usize..12, l in 1usize..12) {
        let mut rng = common::rng(seed);
        let dict = random_dict(&mut rng, n, d);
        let h = random_vec(&mut rng, d);
        let code = sparse_encode(&h, &dict, &PursuitConfig::new(l)).unwrap();
        prop_assume!(code.ridge == 0.0 && !code.indices.is_empty());
        let p = projection_matrix(&code, &dict).unwrap();
        let mut err = 0.0;
        for i in 0..d {
            for j in 0..d {
                let pp: f64 = (0..d).map(|k| p[i * d + k] * p[k * d + j]).sum();
                err += (pp - p[i * d + j]).powi(2);
                prop_assert!((p[i * d + j] - p[j * d + i]).abs() < 1e-10);
            }
        }
        prop_assert!(err.sqrt() < 1e-8);
        let ph: Vec<f64> = (0..d).map(|i| dot(&p[i * d..(i + 1) * d], &h)).collect();
        for (a, b) in ph.iter().zip(&code.reconstruction) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn re_encoding_orthonormal_never_increases_error(seed in any::<u64>(), d in 2usize..12, l in 1usize..12) {
        let mut rng = common::rng(seed);
        let dict = Dictionary::new(orthonormal_rows(&mut rng, d, d).concat(), d, d).unwrap();
        let h = random_vec(&mut rng, d);
        let cfg = PursuitConfig { iterations: l.min(d), selection: Selection::AbsInnerProduct };
        let first = sparse_encode(&h, &dict, &cfg).unwrap();
        let second = sparse_encode(&first.reconstruction, &dict, &cfg).unwrap();
        let err2: Vec<f64> = h.iter().zip(&second.reconstruction).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&err2) <= first.residual_norm() + 1e-10);
    }

    #[test]
    fn orthonormal_span_is_recovered(seed in any::<u64>(), d in 2usize..16, k in 1usize..6) {
        let k = k.min(d);
        let mut rng = common::rng(seed);
        let rows = orthonormal_rows(&mut rng, d, d);
        let dict = Dictionary::new(rows.concat(), d, d).unwrap();
        let mut h = vec![0.0; d];
        for r in rows.iter().take(k) {
            let c = rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            h.iter_mut().zip(r).for_each(|(x, y)| *x += c * y);
        }
        let cfg = PursuitConfig { iterations: 10, selection: Selection::AbsInnerProduct };
        let code = sparse_encode(&h, &dict, &cfg).unwrap();
        prop_assert!(code.residual_norm() < 1e-10);
        prop_assert_eq!(code.support_len(), k);
    }

    #[test]
    fn least_squares_matches_normal_equations(seed in any::<u64>(), d in 3usize..16, k in 1usize..6) {
        let k = k.min(d);
        let mut rng = common::rng(seed);
        let m = random_vec(&mut rng, k * d);
        let h = random_vec(&mut rng, d);
        let ls = least_squares(&m, k, &h).unwrap();
        let mm = DMatrix::from_row_slice(k, d, &m);
        let gram = &mm * mm.transpose();
        let rhs = &mm * DVector::from_row_slice(&h);
        let oracle = gram.lu().solve(&rhs).unwrap();
        for (a, b) in ls.coeffs.iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn excluded_atoms_never_selected(seed in any::<u64>(), n in 4usize..20, d in 2usize..8) {
        let mut rng = common::rng(seed);
        let excluded: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.3).collect();
        prop_assume!(excluded.len() < n);
        let dict = Dictionary::with_excluded(random_vec(&mut rng, n * d), n, d, &excluded).unwrap();
        let h = random_vec(&mut rng, d);
        let l = d.min(n - excluded.len());
        let code = sparse_encode(&h, &dict, &PursuitConfig::new(l)).unwrap();
        prop_assert!(code.indices.iter().all(|i| !excluded.contains(i)));
    }
}

#[test]
fn state_gradient_is_projection_of_output_gradient() {
    let mut rng = common::rng(21);
    for _ in 0..20 {
        let dict = random_dict(&mut rng, 30, 6);
        let h = random_vec(&mut rng, 6);
        let code = sparse_encode(&h, &dict, &PursuitConfig::new(3)).unwrap();
        let g = random_vec(&mut rng, 6);
        let p = projection_matrix(&code, &dict).unwrap();
        let back = sparse_backward(&g, &code, &dict).unwrap();
        for i in 0..6 {
            assert!((back[i] - dot(&p[i * 6..(i + 1) * 6], &g)).abs() < 1e-10);
        }
    }
}

fn sparse_loss_check(freeze_atoms: bool, seed: u64) -> sparsegan::diff::GradCheckReport {
    let mut rng = common::rng(seed);
    let h = common::rand_tensor(&mut rng, &[1, 6], 1.0);
    let atoms = common::rand_tensor(&mut rng, &[12, 6], 1.0);
    let cfg = PursuitConfig::new(4);
    let opts = GradCheckOptions {
        stable_only: true,
        ..GradCheckOptions::default()
    };
    grad_check_with(
        |g: &mut Graph, v| {
            let s = g.sparse_encode(v[0], v[1], &[0], &cfg, freeze_atoms)?;
            common::weighted_sum(g, s)
        },
        &[h, atoms],
        &opts,
    )
    .unwrap()
}

#[test]
fn sparse_op_passes_grad_check_through_state_and_atoms() {
    for seed in 0..10 {
        let r = sparse_loss_check(false, seed);
        assert!(r.checked > 0);
        assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn frozen_atoms_receive_no_gradient() {
    let mut rng = common::rng(1);
    let mut g = Graph::new();
    let h = g.param(common::rand_tensor(&mut rng, &[1, 5], 1.0));
    let atoms = g.param(common::rand_tensor(&mut rng, &[9, 5], 1.0));
    let s = g.sparse_encode(h, atoms, &[], &PursuitConfig::new(3), true).unwrap();
    let loss = common::weighted_sum(&mut g, s).unwrap();
    g.backward(loss).unwrap();
    assert!(g.grad(h).is_some());
    let zero = Tensor::zeros(&[9, 5]);
    assert!(g.grad(atoms).is_none_or(|t| *t == zero));
}

#[test]
fn support_is_recorded_on_the_tape() {
    let mut rng = common::rng(2);
    let mut g = Graph::new();
    let h = g.constant(common::rand_tensor(&mut rng, &[1, 5], 1.0));
    let atoms = g.constant(common::rand_tensor(&mut rng, &[9, 5], 1.0));
    let s = g.sparse_encode(h, atoms, &[0], &PursuitConfig::new(3), false).unwrap();
    let code = g.sparse_code(s).unwrap();
    assert_eq!(code.support_len(), 3);
    assert!(!code.indices.contains(&0));
    assert_eq!(g.sparse_codes().len(), 1);
}

/// Greedy selection on a general dictionary can pick a different support
/// for the reconstruction than for the original state, so re-encoding may
/// lose accuracy.
#[test]
fn re_encoding_general_dictionary_can_increase_error() {
    let found = (0..200u64).any(|seed| {
        let mut rng = common::rng(seed);
        let dict = random_dict(&mut rng, 14, 10);
        let h = random_vec(&mut rng, 10);
        let cfg = PursuitConfig::new(4);
        let first = sparse_encode(&h, &dict, &cfg).unwrap();
        let second = sparse_encode(&first.reconstruction, &dict, &cfg).unwrap();
        let err2: Vec<f64> = h.iter().zip(&second.reconstruction).map(|(a, b)| a - b).collect();
        norm(&err2) > first.residual_norm() + 1e-6
    });
    assert!(found);
}
