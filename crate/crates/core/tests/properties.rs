//! Randomized invariants over the public API.

use gpiwt::attention::{
    attention_weights, mssa, partition, rel_pos_matrix, unpartition, HeadParams, LineAxis, MssaParams, RelPosBias,
    WindowPlan,
};
use gpiwt::ctensor::{
    cholesky_logdet, fft2_centered, hermitian_eigvals, hermitian_solve, ifft2_centered, softmax_cols, CArray, CMatrix,
    HermitianMatrix, RMatrix, C64,
};
use gpiwt::data::{make_mask, KSpace, MaskPattern};
use gpiwt::metrics::{nmse, psnr, ssim, MagnitudeImage};
use gpiwt::oracle::{haar_unitary, slr_value, DenseOperator};
use gpiwt::spirit::{apply_g, apply_g_adjoint, glp, SpiritKernel};
use gpiwt::training::{adam_step, AdamState};
use gpiwt::unroll::{stage_forward, CascadeConfig, CascadeParams, ReconProblem};
use proptest::prelude::*;
use rand::Rng;
use gpiwt::rng::Rng as StreamRng;

fn rng(seed: u64) -> StreamRng {
    gpiwt::rng::stream(seed, "properties")
}

fn rc(r: &mut StreamRng) -> C64 {
    C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

fn random_k(n1: usize, n2: usize, nc: usize, r: &mut StreamRng) -> KSpace {
    KSpace::from_vec(n1, n2, nc, (0..n1 * n2 * nc).map(|_| rc(r)).collect()).unwrap()
}

fn random_kernel(nc: usize, kw: usize, r: &mut StreamRng) -> SpiritKernel {
    let h = kw / 2;
    let mut w = CArray::zeros(&[nc, nc, kw, kw]);
    for o in 0..nc {
        for i in 0..nc {
            for a in 0..kw {
                for b in 0..kw {
                    if !(o == i && a == h && b == h) {
                        w.data_mut()[((o * nc + i) * kw + a) * kw + b] = rc(r).scale(0.3);
                    }
                }
            }
        }
    }
    SpiritKernel::new(w, 0.0).unwrap()
}

fn random_mssa(heads: usize, d: usize, nc: usize, plan: &WindowPlan, r: &mut StreamRng) -> MssaParams {
    MssaParams {
        heads: (0..heads)
            .map(|_| HeadParams {
                q: CMatrix::from_fn(d, nc, |_, _| rc(r)),
            })
            .collect(),
        biases: (0..heads)
            .map(|_| {
                let mut b = RelPosBias::zeros(plan);
                b.table.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
                b
            })
            .collect(),
        gamma: r.random_range(0.3..1.5),
    }
}

fn plan_for(n: usize, line: bool, w: usize) -> WindowPlan {
    if line {
        WindowPlan::linear(n, n, LineAxis::Rows).unwrap()
    } else {
        WindowPlan::square(n, n, w).unwrap()
    }
}

fn image(n: usize, r: &mut StreamRng) -> MagnitudeImage {
    MagnitudeImage::new(n, n, (0..n * n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fft_round_trip_and_parseval(seed in any::<u64>(), log_n in 1u32..5, nc in 1usize..4) {
        let n = 1 << log_n;
        let x = random_k(n, n, nc, &mut rng(seed)).into_values();
        let y = fft2_centered(&x).unwrap();
        let back = ifft2_centered(&y).unwrap();
        prop_assert!(back.max_abs_diff(&x) <= 1e-12);
        prop_assert!((y.norm_sqr() - x.norm_sqr()).abs() <= 1e-10 * x.norm_sqr());
    }

    #[test]
    fn logdet_matches_eigenvalues_and_solve_residual(seed in any::<u64>(), n in 1usize..17) {
        let mut r = rng(seed);
        let b = CMatrix::from_fn(n + 2, n, |_, _| rc(&mut r));
        let a = HermitianMatrix::shifted_gram(&b, 1.0);
        let eig: f64 = hermitian_eigvals(&a).unwrap().iter().map(|e| e.ln()).sum();
        prop_assert!((cholesky_logdet(&a).unwrap() - eig).abs() <= 1e-9);

        let rhs = CMatrix::from_fn(n, 3, |_, _| rc(&mut r));
        let x = hermitian_solve(&a, &rhs).unwrap();
        let res = a.matrix().matmul(&x).unwrap().add(&rhs.scale(-1.0)).unwrap();
        prop_assert!(res.frobenius() <= 1e-10 * rhs.frobenius());
    }

    #[test]
    fn softmax_columns_are_distributions(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..6) {
        let mut r = rng(seed);
        let m = RMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-30.0..30.0)).collect()).unwrap();
        let s = softmax_cols(&m);
        for j in 0..cols {
            let total: f64 = (0..rows).map(|i| s.get(i, j)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!((0..rows).all(|i| s.get(i, j) > 0.0 && s.get(i, j) <= 1.0));
        }
    }

    #[test]
    fn partition_is_a_bijection(seed in any::<u64>(), log_n in 2u32..5, nc in 1usize..4, line in any::<bool>()) {
        let n = 1 << log_n;
        let k = random_k(n, n, nc, &mut rng(seed));
        let plan = plan_for(n, line, 2);
        let parts = partition(&k, &plan).unwrap();
        prop_assert_eq!(unpartition(&parts, &plan, nc).unwrap(), k);
    }

    #[test]
    fn attention_columns_sum_to_one(seed in any::<u64>(), nc in 1usize..4, d in 1usize..4, line in any::<bool>()) {
        let mut r = rng(seed);
        let plan = plan_for(8, line, 4);
        let k = random_k(8, 8, nc, &mut r);
        let p = random_mssa(1, d, nc, &plan, &mut r);
        let b = rel_pos_matrix(&p.biases[0], &plan).unwrap();
        for x in partition(&k, &plan).unwrap() {
            let a = attention_weights(&x, &p.heads[0], &b).unwrap();
            for j in 0..a.cols {
                let total: f64 = (0..a.rows).map(|i| a.get(i, j)).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mssa_keeps_shape_and_is_window_local(
        seed in any::<u64>(), nc in 1usize..4, heads in 1usize..4, d in 1usize..4, line in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let plan = plan_for(8, line, 4);
        let k = random_k(8, 8, nc, &mut r);
        let p = random_mssa(heads, d, nc, &plan, &mut r);
        let out = mssa(&k, &p, &plan).unwrap();
        prop_assert_eq!(out.dims(), k.dims());

        // perturb everything outside window 0; its outputs must not move
        let inside = &plan.windows()[0];
        let mut other = random_k(8, 8, nc, &mut r);
        for &pos in inside {
            for c in 0..nc {
                other.data_mut()[pos * nc + c] = k.data()[pos * nc + c];
            }
        }
        let out2 = mssa(&other, &p, &plan).unwrap();
        for &pos in inside {
            for c in 0..nc {
                prop_assert_eq!(out.data()[pos * nc + c], out2.data()[pos * nc + c]);
            }
        }
    }

    #[test]
    fn single_token_windows_with_tight_frame_scale_by_gamma_squared(
        seed in any::<u64>(), nc in 1usize..5, gamma in 0.1f64..2.0,
    ) {
        let mut r = rng(seed);
        let plan = WindowPlan::square(8, 8, 1).unwrap();
        let u = haar_unitary(nc, &mut r);
        // one single-row head per row of the unitary
        let heads: Vec<HeadParams> = (0..nc)
            .map(|a| HeadParams { q: CMatrix::from_fn(1, nc, |_, j| u.get(a, j)) })
            .collect();
        let p = MssaParams {
            biases: heads.iter().map(|_| RelPosBias::zeros(&plan)).collect(),
            heads,
            gamma,
        };
        let k = random_k(8, 8, nc, &mut r);
        let out = mssa(&k, &p, &plan).unwrap();
        let want = k.scale(gamma * gamma);
        prop_assert!(out.sub(&want).unwrap().norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn glp_is_self_adjoint_and_psd(seed in any::<u64>(), nc in 1usize..4, half in 0usize..3) {
        let mut r = rng(seed);
        let kw = 2 * half + 1;
        let g = random_kernel(nc, kw, &mut r);
        let x = random_k(8, 8, nc, &mut r);
        let y = random_k(8, 8, nc, &mut r);
        let scale = x.norm() * y.norm();
        let adj = apply_g(&x, &g).unwrap().dot(&y).unwrap() - x.dot(&apply_g_adjoint(&y, &g).unwrap()).unwrap();
        prop_assert!(adj.norm() <= 1e-10 * scale);
        let gx = glp(&x, &g).unwrap();
        let herm = gx.dot(&y).unwrap() - x.dot(&glp(&y, &g).unwrap()).unwrap();
        prop_assert!(herm.norm() <= 1e-10 * scale);
        let q = x.dot(&gx).unwrap();
        prop_assert!(q.im.abs() <= 1e-10 * x.norm_sqr() && q.re >= -1e-10 * x.norm_sqr());
    }

    #[test]
    fn slr_value_is_invariant_under_conjugated_unitaries(seed in any::<u64>(), nc in 1usize..4, heads in 1usize..3) {
        let mut r = rng(seed);
        let k = random_k(4, 4, nc, &mut r);
        let qs: Vec<DenseOperator> = (0..heads)
            .map(|_| DenseOperator { matrix: CMatrix::from_fn(2, nc, |_, _| rc(&mut r)) })
            .collect();
        let u = haar_unitary(nc, &mut r);
        // k -> U k on the coil axis, Q -> Q U^H
        let mut uk = KSpace::zeros(4, 4, nc);
        for p in 0..16 {
            for a in 0..nc {
                let v: C64 = (0..nc).map(|b| u.get(a, b) * k.data()[p * nc + b]).sum();
                uk.data_mut()[p * nc + a] = v;
            }
        }
        let uq: Vec<DenseOperator> = qs
            .iter()
            .map(|q| DenseOperator { matrix: q.matrix.matmul(&u.adjoint()).unwrap() })
            .collect();
        let a = slr_value(&k, &qs, 0.7).unwrap();
        let b = slr_value(&uk, &uq, 0.7).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn stage_without_attention_is_linear(seed in any::<u64>(), mu in 0.1f64..1.0, l2 in 0.0f64..1.0) {
        let mut r = rng(seed);
        let mask = make_mask(MaskPattern::Random, 2.0, 4, 8, 8, seed).unwrap();
        let g = random_kernel(2, 3, &mut r);
        // the update is affine in k with offset mu*y; y = 0 isolates the linear part
        let pr = ReconProblem::new(KSpace::zeros(8, 8, 2), mask, g).unwrap();
        let cfg = CascadeConfig { stages: 1, heads: 1, window: 4, mu, lambda1: 0.0, lambda2: l2, ..CascadeConfig::default() };
        let params = CascadeParams::init(&cfg, 8, 8, 2, seed).unwrap();
        let stage = &params.stages()[0];
        let a = random_k(8, 8, 2, &mut r);
        let b = random_k(8, 8, 2, &mut r);
        let s: f64 = r.random_range(-2.0..2.0);
        let lhs = stage_forward(&a.axpy(s, &b).unwrap(), &pr, stage).unwrap();
        let rhs = stage_forward(&a, &pr, stage).unwrap().axpy(s, &stage_forward(&b, &pr, stage).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn adam_with_zero_rate_is_identity(seed in any::<u64>(), len in 1usize..20, steps in 1usize..5) {
        let mut r = rng(seed);
        let start: Vec<f64> = (0..len).map(|_| r.random_range(-3.0..3.0)).collect();
        let mut params = start.clone();
        let mut state = AdamState::new(len, 0.0, 0.99);
        for e in 0..steps {
            let grads: Vec<f64> = (0..len).map(|_| r.random_range(-3.0..3.0)).collect();
            adam_step(&mut state, &mut params, &grads, e).unwrap();
        }
        prop_assert_eq!(params, start);
    }

    #[test]
    fn metric_identities_and_nmse_scaling(seed in any::<u64>(), n in 11usize..24, s in 0.01f64..0.5) {
        let mut r = rng(seed);
        let x = image(n, &mut r);
        prop_assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        prop_assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        prop_assert!((ssim(&x, &x).unwrap() - 1.0).abs() <= 1e-12);

        let e: Vec<f64> = (0..n * n).map(|_| r.random_range(0.0..s)).collect();
        let with = |f: f64| MagnitudeImage::new(n, n, x.data().iter().zip(&e).map(|(a, b)| a + f * b).collect()).unwrap();
        let one = nmse(&x, &with(1.0)).unwrap();
        let two = nmse(&x, &with(2.0)).unwrap();
        prop_assert!((two - 4.0 * one).abs() <= 1e-9 * two);
    }
}
