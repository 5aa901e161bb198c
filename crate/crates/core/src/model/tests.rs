use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

type Mat = Vec<Vec<f64>>;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    (0..r)
        .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn to_tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

fn to_mat(t: &Tensor) -> Mat {
    let (r, _) = t.dims2().unwrap();
    (0..r).map(|i| t.row(i).to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

fn softmax_vec(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn mean_rows(m: &[Vec<f64>]) -> Vec<f64> {
    let d = m[0].len();
    let mut out = vec![0.0; d];
    for r in m {
        for j in 0..d {
            out[j] += r[j] / m.len() as f64;
        }
    }
    out
}

/// Scaled dot-product attention, one step at a time.
fn attention_oracle(z: &Mat, wq: &Mat, wk: &Mat, wv: &Mat) -> (Mat, Mat) {
    let d = z[0].len();
    let (q, k, v) = (mm(z, wq), mm(z, wk), mm(z, wv));
    let l = z.len();
    let mut a = vec![vec![0.0; l]; l];
    for i in 0..l {
        let scores: Vec<f64> = (0..l)
            .map(|j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
            .collect();
        a[i] = softmax_vec(&scores);
    }
    (mm(&a, &v), a)
}

fn pool_oracle(z: &Mat, s: usize) -> Mat {
    z.chunks(s).map(mean_rows).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn tiny_config() -> CttsConfig {
    CttsConfig {
        seq_len: 8,
        d_model: 4,
        k_min: 2,
        k_max: 3,
        scales: vec![1, 2],
        num_segments: 2,
        mlp_hidden: 8,
        ..CttsConfig::default()
    }
}

fn ready_params(config: &CttsConfig, seed: u64) -> CttsParams {
    let mut p = init_params(config, seed).unwrap();
    p.freeze_sigma_max(0.01).unwrap();
    p
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

#[test]
fn select_kernel_examples() {
    assert_eq!(select_kernel(0.02, 0.02, 2, 7).unwrap(), 7);
    assert_eq!(select_kernel(0.0, 0.02, 2, 7).unwrap(), 2);
    assert_eq!(select_kernel(0.01, 0.02, 2, 7).unwrap(), 3);
    assert_eq!(select_kernel(5.0, 0.02, 2, 7).unwrap(), 7);
    assert!(select_kernel(0.01, 0.0, 2, 7).is_err());
    assert!(select_kernel(-0.01, 0.02, 2, 7).is_err());
}

#[test]
fn cnn_frontend_zero_weights_give_zero_tokens() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(6, 1, vec![0.3, 0.1, 0.9, 0.5, 0.2, 0.7]).unwrap());
    let w = tape.constant(Tensor::zeros(&[3, 1, 4]));
    let b = tape.constant(Tensor::zeros(&[4]));
    let out = cnn_frontend(&mut tape, x, w, b).unwrap();
    assert_eq!(tape.value(out).shape(), &[6, 4]);
    assert!(tape.value(out).values().iter().all(|&v| v == 0.0));
}

#[test]
fn cnn_frontend_unit_kernel_is_pointwise_affine_relu() {
    let xs = [0.2, -0.5, 1.0, 0.0];
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(4, 1, xs.to_vec()).unwrap());
    let w = tape.constant(Tensor::new(vec![1, 1, 2], vec![2.0, -1.0]).unwrap());
    let b = tape.constant(Tensor::vector(vec![0.1, 0.2]).unwrap());
    let out = cnn_frontend(&mut tape, x, w, b).unwrap();
    for (t, &xv) in xs.iter().enumerate() {
        let row = tape.value(out).row(t);
        assert!((row[0] - (2.0 * xv + 0.1).max(0.0)).abs() < 1e-15);
        assert!((row[1] - (-xv + 0.2).max(0.0)).abs() < 1e-15);
    }
}

#[test]
fn cnn_frontend_matches_padded_convolution_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 1..=7 {
        let (t_len, d) = (20, 5);
        let xs = random_inputs(&mut rng, t_len);
        let wv: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bv: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(t_len, 1, xs.clone()).unwrap());
        let w = tape.constant(Tensor::new(vec![k, 1, d], wv.clone()).unwrap());
        let b = tape.constant(Tensor::vector(bv.clone()).unwrap());
        let out = cnn_frontend(&mut tape, x, w, b).unwrap();
        let left = (k - 1) / 2;
        for t in 0..t_len {
            for c in 0..d {
                let mut acc = bv[c];
                for j in 0..k {
                    let s = t as isize + j as isize - left as isize;
                    if s >= 0 && (s as usize) < t_len {
                        acc += wv[j * d + c] * xs[s as usize];
                    }
                }
                assert!((tape.value(out).row(t)[c] - acc.max(0.0)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn positional_encoding_first_row_alternates() {
    let p = positional_encoding(5, 6);
    assert_eq!(p.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
}

#[test]
fn positional_encoding_of_zero_tokens_is_the_table() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(&[7, 4]));
    let out = positional_encode(&mut tape, z).unwrap();
    assert_eq!(tape.value(out), &positional_encoding(7, 4));
}

#[test]
fn positional_encoding_direct_formula() {
    let p = positional_encoding(4, 4);
    for t in 0..4 {
        let tf = t as f64;
        let expect = [tf.sin(), tf.cos(), (tf / 100.0).sin(), (tf / 100.0).cos()];
        assert!(max_diff(p.row(t), &expect) < 1e-15);
    }
}

#[test]
fn positional_encoding_rejects_odd_width() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(&[3, 3]));
    assert!(positional_encode(&mut tape, z).is_err());
}

#[test]
fn attention_over_one_token_returns_its_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = rand_mat(&mut rng, 1, 4);
    let ws: Vec<Mat> = (0..3).map(|_| rand_mat(&mut rng, 4, 4)).collect();
    let mut tape = Tape::new();
    let zv = tape.constant(to_tensor(&z));
    let [q, k, v] = [0, 1, 2].map(|i| tape.constant(to_tensor(&ws[i])));
    let (out, a) = self_attention(&mut tape, zv, q, k, v).unwrap();
    assert_eq!(tape.value(a).values(), &[1.0]);
    assert!(max_diff(tape.value(out).values(), &mm(&z, &ws[2])[0]) < 1e-15);
}

#[test]
fn zero_query_key_weights_give_uniform_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = rand_mat(&mut rng, 6, 4);
    let mut tape = Tape::new();
    let zv = tape.constant(to_tensor(&z));
    let zero = tape.constant(Tensor::zeros(&[4, 4]));
    let v = tape.constant(to_tensor(&rand_mat(&mut rng, 4, 4)));
    let (_, a) = self_attention(&mut tape, zv, zero, zero, v).unwrap();
    assert!(tape.value(a).values().iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
}

#[test]
fn attention_matches_step_by_step_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let z = rand_mat(&mut rng, 5, 4);
        let ws: Vec<Mat> = (0..3).map(|_| rand_mat(&mut rng, 4, 4)).collect();
        let (expect_out, expect_a) = attention_oracle(&z, &ws[0], &ws[1], &ws[2]);
        let mut tape = Tape::new();
        let zv = tape.constant(to_tensor(&z));
        let [q, k, v] = [0, 1, 2].map(|i| tape.constant(to_tensor(&ws[i])));
        let (out, a) = self_attention(&mut tape, zv, q, k, v).unwrap();
        assert!(max_diff(tape.value(out).values(), &expect_out.concat()) < 1e-12);
        assert!(max_diff(tape.value(a).values(), &expect_a.concat()) < 1e-12);
    }
}

fn run_multi_scale(z: &Mat, ws: &[Mat], scales: &[usize]) -> (Vec<Vec<f64>>, Mat) {
    let mut tape = Tape::new();
    let zv = tape.constant(to_tensor(z));
    let [q, k, v] = [0, 1, 2].map(|i| tape.constant(to_tensor(&ws[i])));
    let ms = multi_scale_attention(&mut tape, zv, q, k, v, scales).unwrap();
    let pooled = ms.pooled.iter().map(|&p| tape.value(p).values().to_vec()).collect();
    (pooled, to_mat(tape.value(ms.full_res)))
}

#[test]
fn single_scale_pools_the_attention_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = rand_mat(&mut rng, 8, 4);
    let ws: Vec<Mat> = (0..3).map(|_| rand_mat(&mut rng, 4, 4)).collect();
    let (pooled, full) = run_multi_scale(&z, &ws, &[1]);
    let (out, _) = attention_oracle(&z, &ws[0], &ws[1], &ws[2]);
    assert_eq!(pooled.len(), 1);
    assert!(max_diff(&pooled[0], &mean_rows(&out)) < 1e-12);
    assert!(max_diff(&full.concat(), &out.concat()) < 1e-12);
}

#[test]
fn full_length_scale_attends_over_one_token() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = rand_mat(&mut rng, 8, 4);
    let ws: Vec<Mat> = (0..3).map(|_| rand_mat(&mut rng, 4, 4)).collect();
    let (pooled, _) = run_multi_scale(&z, &ws, &[1, 8]);
    let expect = mm(&vec![mean_rows(&z)], &ws[2]);
    assert!(max_diff(&pooled[1], &expect[0]) < 1e-12);
}

#[test]
fn multi_scale_matches_pool_attend_pool_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for t_len in [8, 9] {
        let z = rand_mat(&mut rng, t_len, 4);
        let ws: Vec<Mat> = (0..3).map(|_| rand_mat(&mut rng, 4, 4)).collect();
        let (pooled, _) = run_multi_scale(&z, &ws, &[1, 2]);
        for (i, s) in [1, 2].into_iter().enumerate() {
            let tokens = pool_oracle(&z, s);
            assert_eq!(tokens.len(), t_len.div_ceil(s));
            let (out, _) = attention_oracle(&tokens, &ws[0], &ws[1], &ws[2]);
            assert!(max_diff(&pooled[i], &mean_rows(&out)) < 1e-12);
        }
    }
}

#[test]
fn multi_scale_rejects_bad_scales() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(&[4, 2]));
    let w = tape.constant(Tensor::identity(2));
    assert!(multi_scale_attention(&mut tape, z, w, w, w, &[1, 5]).is_err());
    assert!(multi_scale_attention(&mut tape, z, w, w, w, &[2]).is_err());
}

fn run_segmentation(full: &Mat, pooled: &[Vec<f64>], scale_logits: &[f64], seg_logits: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let f = tape.constant(to_tensor(full));
    let p: Vec<Var> = pooled
        .iter()
        .map(|u| tape.constant(Tensor::matrix(1, u.len(), u.clone()).unwrap()))
        .collect();
    let a = tape.constant(Tensor::vector(scale_logits.to_vec()).unwrap());
    let w = tape.constant(Tensor::vector(seg_logits.to_vec()).unwrap());
    let seg = adaptive_segmentation(&mut tape, f, &p, a, w, seg_logits.len()).unwrap();
    tape.value(seg.h_seg).values().to_vec()
}

#[test]
fn one_segment_one_scale_adds_mean_and_pooled() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let full = rand_mat(&mut rng, 8, 4);
    let u = rand_mat(&mut rng, 1, 4);
    let h = run_segmentation(&full, &u, &[0.3], &[-1.2]);
    let expect: Vec<f64> = mean_rows(&full).iter().zip(&u[0]).map(|(a, b)| a + b).collect();
    assert!(max_diff(&h, &expect) < 1e-12);
}

#[test]
fn constant_rows_make_segment_weights_irrelevant() {
    let c = vec![0.5, -1.0, 2.0, 0.25];
    let full = vec![c.clone(); 8];
    let u = vec![vec![0.0; 4]];
    for logits in [[0.0, 0.0, 0.0, 0.0], [3.0, -2.0, 0.5, 1.0]] {
        let h = run_segmentation(&full, &u, &[0.0], &logits);
        assert!(max_diff(&h, &c) < 1e-12);
    }
}

#[test]
fn segmentation_matches_slice_mean_weigh_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for t_len in [8, 10] {
        let full = rand_mat(&mut rng, t_len, 4);
        let pooled = rand_mat(&mut rng, 2, 4);
        let a_logits = [0.4, -0.7];
        let w_logits = [1.0, -0.5, 0.2, 0.0];
        let h = run_segmentation(&full, &pooled, &a_logits, &w_logits);
        let base = t_len / 4;
        let bounds = [0, base, 2 * base, 3 * base, t_len];
        let omega = softmax_vec(&w_logits);
        let alpha = softmax_vec(&a_logits);
        let mut expect = vec![0.0; 4];
        for k in 0..4 {
            let m = mean_rows(&full[bounds[k]..bounds[k + 1]]);
            for j in 0..4 {
                expect[j] += omega[k] * m[j];
            }
        }
        for (s, u) in pooled.iter().enumerate() {
            for j in 0..4 {
                expect[j] += alpha[s] * u[j];
            }
        }
        assert!(max_diff(&h, &expect) < 1e-12);
    }
}

#[test]
fn segment_groups_last_absorbs_remainder() {
    assert_eq!(segment_groups(10, 4), vec![0..2, 2..4, 4..6, 6..10]);
    assert_eq!(segment_groups(8, 1), vec![0..8]);
    assert_eq!(pooling_groups(5, 2), vec![0..2, 2..4, 4..5]);
}

#[test]
fn forward_probabilities_are_a_distribution_and_deterministic() {
    let config = CttsConfig::default();
    let params = ready_params(&config, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let x = random_inputs(&mut rng, 80);
        let sigma = rng.random_range(0.0..0.02);
        let a = forward_inputs(&x, sigma, &params, &config).unwrap();
        let b = forward_inputs(&x, sigma, &params, &config).unwrap();
        assert_eq!(a, b);
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.probs.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(a.per_scale_pooled.len(), 3);
        assert_eq!(a.segment_vectors.len(), 4);
    }
}

#[test]
fn forward_requires_frozen_sigma_and_matching_length() {
    let config = CttsConfig::default();
    let raw = init_params(&config, 0).unwrap();
    assert!(forward_inputs(&[0.5; 80], 0.01, &raw, &config).is_err());
    let params = ready_params(&config, 0);
    assert!(matches!(
        forward_inputs(&[0.5; 79], 0.01, &params, &config),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn tiny_model_gradients_match_finite_differences() {
    let config = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (seed, sigma) in [(1, 0.004), (2, 0.009)] {
        let params = ready_params(&config, seed);
        let x = random_inputs(&mut rng, 8);
        let report = gradient_check(&x, sigma, 2, &params, &config, 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

#[test]
fn unselected_kernels_get_zero_gradient() {
    let config = tiny_config();
    let params = ready_params(&config, 3);
    let (_, g) = loss_and_gradients(&[0.2, 0.9, 0.4, 0.1, 0.8, 0.5, 0.3, 0.6], 0.0, 1, 1.0, &params, &config).unwrap();
    // sigma 0 selects k_min = 2, bank entry 0
    assert!(g.0[0].iter().any(|&v| v != 0.0));
    assert!(g.0[2].iter().chain(&g.0[3]).all(|&v| v == 0.0));
}

#[test]
fn weighted_loss_scales_gradients() {
    let config = tiny_config();
    let params = ready_params(&config, 4);
    let x = [0.1, 0.3, 0.2, 0.9, 0.7, 0.4, 0.0, 1.0];
    let (l1, g1) = loss_and_gradients(&x, 0.005, 0, 1.0, &params, &config).unwrap();
    let (l2, g2) = loss_and_gradients(&x, 0.005, 0, 2.5, &params, &config).unwrap();
    assert!((l2 - 2.5 * l1).abs() < 1e-12);
    assert!((loss(&x, 0.005, 0, &params, &config).unwrap() - l1).abs() < 1e-15);
    for (a, b) in g1.0.iter().flatten().zip(g2.0.iter().flatten()) {
        assert!((b - 2.5 * a).abs() < 1e-12);
    }
}

#[test]
fn init_is_deterministic_with_zero_biases_and_logits() {
    let config = CttsConfig::default();
    let a = init_params(&config, 21).unwrap();
    assert_eq!(a, init_params(&config, 21).unwrap());
    assert_ne!(a, init_params(&config, 22).unwrap());
    assert!(a.scale_logits.values().iter().all(|&v| v == 0.0));
    assert!(a.segment_logits.values().iter().all(|&v| v == 0.0));
    assert!(a.mlp1_b.values().iter().all(|&v| v == 0.0));
    assert_eq!(crate::numerics::softmax(a.scale_logits.values()), vec![1.0 / 3.0; 3]);
}

#[test]
fn glorot_variance_of_square_init() {
    let config = CttsConfig {
        d_model: 64,
        ..CttsConfig::default()
    };
    let p = init_params(&config, 5).unwrap();
    let v = p.w_q.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let expect = 6.0 / 128.0 / 3.0;
    assert!((var - expect).abs() < 0.2 * expect, "{var} vs {expect}");
}

#[test]
fn sigma_max_freezes_once() {
    let mut p = init_params(&tiny_config(), 0).unwrap();
    assert!(p.freeze_sigma_max(0.0).is_err());
    p.freeze_sigma_max(0.5).unwrap();
    assert!(p.freeze_sigma_max(0.6).is_err());
    assert_eq!(p.sigma_max(), Some(0.5));
}

fn permutation_trace(config: &CttsConfig, params: &CttsParams, tokens: &Mat, perm: &[usize]) -> Vec<f64> {
    let permuted: Mat = perm.iter().map(|&i| tokens[i].clone()).collect();
    forward_from_tokens(&to_tensor(&permuted), params, config)
        .unwrap()
        .h_seg
}

#[test]
fn permutation_invariance_without_position_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut config = CttsConfig {
        scales: vec![1],
        num_segments: 1,
        positional_encoding: false,
        ..CttsConfig::default()
    };
    let params = ready_params(&config, 31);
    let tokens = rand_mat(&mut rng, 80, 16);
    let identity: Vec<usize> = (0..80).collect();
    let mut perm = identity.clone();
    for i in (1..80).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let base = permutation_trace(&config, &params, &tokens, &identity);
    assert!(max_diff(&base, &permutation_trace(&config, &params, &tokens, &perm)) < 1e-9);

    config.positional_encoding = true;
    let base = permutation_trace(&config, &params, &tokens, &identity);
    assert!(max_diff(&base, &permutation_trace(&config, &params, &tokens, &perm)) > 1e-6);
}

#[test]
fn logit_shift_leaves_h_seg_unchanged() {
    let config = CttsConfig::default();
    let mut params = ready_params(&config, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for v in params
        .scale_logits
        .values_mut()
        .iter_mut()
        .chain(params.segment_logits.values_mut())
    {
        *v = rng.random_range(-1.0..1.0);
    }
    let x = random_inputs(&mut rng, 80);
    let base = forward_inputs(&x, 0.004, &params, &config).unwrap().h_seg;
    let mut shifted = params.clone();
    shifted.scale_logits.values_mut().iter_mut().for_each(|v| *v += 3.7);
    shifted.segment_logits.values_mut().iter_mut().for_each(|v| *v -= 1.9);
    let moved = forward_inputs(&x, 0.004, &shifted, &config).unwrap().h_seg;
    assert!(max_diff(&base, &moved) < 1e-12);
}

#[test]
fn attention_rows_are_stochastic() {
    let config = CttsConfig::default();
    let params = ready_params(&config, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..10 {
        let trace = forward_inputs(
            &random_inputs(&mut rng, 80),
            rng.random_range(0.0..0.02),
            &params,
            &config,
        )
        .unwrap();
        for a in &trace.per_scale_attention {
            for r in to_mat(a) {
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(r.iter().all(|&x| x >= 0.0));
            }
        }
    }
}

#[test]
fn config_validation() {
    assert!(CttsConfig::default().validate().is_ok());
    let bad = [
        CttsConfig {
            d_model: 3,
            ..CttsConfig::default()
        },
        CttsConfig {
            k_min: 5,
            k_max: 4,
            ..CttsConfig::default()
        },
        CttsConfig {
            scales: vec![2, 4],
            ..CttsConfig::default()
        },
        CttsConfig {
            scales: vec![1, 81],
            ..CttsConfig::default()
        },
        CttsConfig {
            num_segments: 81,
            ..CttsConfig::default()
        },
        CttsConfig {
            num_classes: 2,
            ..CttsConfig::default()
        },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
    }
}

#[test]
fn checkpoint_round_trip_is_byte_stable() {
    let config = tiny_config();
    let ckpt = Checkpoint {
        config: config.clone(),
        params: ready_params(&config, 60),
        train_seed: 9,
    };
    let text = ckpt.to_text();
    let back = Checkpoint::from_text(&text).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_text(), text);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    loaded.save(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn checkpoint_rejects_damage() {
    let config = tiny_config();
    let text = Checkpoint {
        config: config.clone(),
        params: ready_params(&config, 61),
        train_seed: 0,
    }
    .to_text();
    assert!(Checkpoint::from_text("hello\n").is_err());
    assert!(Checkpoint::from_text(&text.replace("d_model 4", "d_model 6")).is_err());
    assert!(Checkpoint::from_text(&text.replace("end\n", "")).is_err());
    let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
    assert!(Checkpoint::from_text(&truncated).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn select_kernel_is_monotone_and_clamped(a in 0.0f64..0.05, b in 0.0f64..0.05, sigma_max in 1e-4f64..0.05) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let k_lo = select_kernel(lo, sigma_max, 2, 7).unwrap();
        let k_hi = select_kernel(hi, sigma_max, 2, 7).unwrap();
        prop_assert!(k_lo <= k_hi);
        prop_assert!((2..=7).contains(&k_lo) && (2..=7).contains(&k_hi));
    }
}
