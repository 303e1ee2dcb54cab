use super::*;
use crate::attention::mssa;
use crate::ctensor::C64;
use crate::data::{gen_coil_sens, gen_phantom, make_mask, simulate_kspace, MaskPattern, PhantomSpec};
use crate::spirit::{apply_g, apply_g_adjoint};
use rand::Rng;

fn random_k(n1: usize, n2: usize, nc: usize, seed: u64) -> KSpace {
    let mut rng = crate::rng::stream(seed, "unroll-k");
    let data = (0..n1 * n2 * nc)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    KSpace::from_vec(n1, n2, nc, data).unwrap()
}

fn problem(n: usize, nc: usize, seed: u64) -> (ReconProblem, KSpace) {
    let img = gen_phantom(&PhantomSpec::shepp_logan(n, n), seed).unwrap();
    let sens = gen_coil_sens(nc, n, n, seed).unwrap();
    let full = simulate_kspace(&img, &sens, 0.0, seed).unwrap();
    let mask = make_mask(MaskPattern::Random, 1.6, 4, n, n, seed).unwrap();
    (ReconProblem::from_full(&full, &mask, 3, 1e-3).unwrap(), full)
}

fn config(t: usize) -> CascadeConfig {
    CascadeConfig {
        stages: t,
        heads: 2,
        window: 4,
        ..CascadeConfig::default()
    }
}

fn set_scalars(p: &mut CascadeParams, mu: f64, l1: f64, l2: f64) {
    for s in p.stages_mut() {
        s.mu = mu;
        s.lambda1 = l1;
        s.lambda2 = l2;
    }
}

#[test]
fn gdc_cases() {
    let (pr, full) = problem(8, 2, 1);
    assert_eq!(gdc(&full, &pr.y, &pr.mask).unwrap().norm(), 0.0);
    let k = random_k(8, 8, 2, 2);
    let zero = KSpace::zeros(8, 8, 2);
    assert_eq!(gdc(&k, &zero, &pr.mask).unwrap(), undersample(&k, &pr.mask).unwrap());
}

#[test]
fn gdc_matches_dense_projection() {
    let (pr, _) = problem(8, 2, 3);
    let k = random_k(8, 8, 2, 4);
    let n = k.data().len();
    let m = CMatrix::from_fn(n, n, |i, j| {
        let col = (i / 2) % 8;
        if i == j && pr.mask.is_sampled(col) {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let vk = CMatrix::from_vec(n, 1, k.data().to_vec()).unwrap();
    let vy = CMatrix::from_vec(n, 1, pr.y.data().to_vec()).unwrap();
    let want = m.adjoint().matmul(&m.matmul(&vk).unwrap()).unwrap().add(&m.adjoint().matmul(&vy).unwrap().scale(-1.0)).unwrap();
    let got = gdc(&k, &pr.y, &pr.mask).unwrap();
    for (a, b) in got.data().iter().zip(&want.data) {
        assert!((a - b).norm() < 1e-15);
    }
}

#[test]
fn stage_special_cases() {
    let (pr, _) = problem(8, 2, 5);
    let k = random_k(8, 8, 2, 6);
    let mut p = CascadeParams::init(&config(1), 8, 8, 2, 7).unwrap();
    set_scalars(&mut p, 1.0, 0.0, 0.0);
    let out = stage_forward(&k, &pr, &p.stages()[0]).unwrap();
    for r in 0..8 {
        for c in 0..8 {
            for coil in 0..2 {
                let want = if pr.mask.is_sampled(c) { pr.y.get(r, c, coil) } else { k.get(r, c, coil) };
                assert!((out.get(r, c, coil) - want).norm() < 1e-15);
            }
        }
    }
    set_scalars(&mut p, 0.0, 0.3, 0.4);
    assert_eq!(stage_forward(&k, &pr, &p.stages()[0]).unwrap(), k);
}

#[test]
fn stage_matches_term_by_term_sum() {
    let (pr, _) = problem(8, 2, 8);
    let k = random_k(8, 8, 2, 9);
    let mut p = CascadeParams::init(&config(2), 8, 8, 2, 10).unwrap();
    for (i, s) in p.stages_mut().iter_mut().enumerate() {
        s.mu = 0.7;
        s.lambda1 = 0.3;
        s.lambda2 = 0.2;
        s.mssa.gamma = 0.9 + 0.1 * i as f64;
        s.mssa.biases[0].table[0] = 0.5;
    }
    for s in p.stages() {
        let out = stage_forward(&k, &pr, s).unwrap();
        let mut want = KSpace::zeros(8, 8, 2);
        let attn = mssa(&k, &s.mssa, &s.plan).unwrap();
        let r = apply_g(&k, &pr.g).unwrap().sub(&k).unwrap();
        let l = apply_g_adjoint(&r, &pr.g).unwrap().sub(&r).unwrap();
        for idx in 0..want.data().len() {
            let col = (idx / 2) % 8;
            let m = if pr.mask.is_sampled(col) { 1.0 } else { 0.0 };
            let term_gdc = (k.data()[idx] - pr.y.data()[idx]) * m;
            want.data_mut()[idx] = k.data()[idx] * (1.0 - s.lambda1 * s.mu * s.gamma()) - term_gdc * s.mu
                + attn.data()[idx] * (s.mu * s.lambda1)
                - l.data()[idx] * (s.mu * s.lambda2);
        }
        assert!(out.sub(&want).unwrap().norm() < 1e-12);
    }
}

#[test]
fn stage_is_linear_without_attention() {
    let (pr, _) = problem(8, 2, 11);
    let mut p = CascadeParams::init(&config(1), 8, 8, 2, 12).unwrap();
    set_scalars(&mut p, 0.6, 0.0, 0.3);
    // with y = 0 the update is linear, not just affine
    let pr0 = ReconProblem::new(KSpace::zeros(8, 8, 2), pr.mask.clone(), pr.g.clone()).unwrap();
    let s = &p.stages()[0];
    let a = random_k(8, 8, 2, 13);
    let b = random_k(8, 8, 2, 14);
    let f = |k: &KSpace| stage_forward(k, &pr0, s).unwrap();
    let sum = f(&a.axpy(1.0, &b).unwrap());
    assert!(sum.sub(&f(&a).axpy(1.0, &f(&b)).unwrap()).unwrap().norm() < 1e-12);
    assert!(f(&a.scale(-2.5)).sub(&f(&a).scale(-2.5)).unwrap().norm() < 1e-12);
}

#[test]
fn cascade_cases() {
    let (pr, _) = problem(8, 2, 15);
    let p0 = CascadeParams::init(&config(0), 8, 8, 2, 16).unwrap();
    assert_eq!(cascade_forward(&pr, &p0).unwrap(), pr.y);

    let mut p = CascadeParams::init(&config(3), 8, 8, 2, 17).unwrap();
    set_scalars(&mut p, 1.0, 0.0, 0.0);
    // zero-filled y is already data consistent, so every stage is a fixed point
    let out = cascade_forward(&pr, &p).unwrap();
    assert!(out.sub(&pr.y).unwrap().norm() <= 1e-15 * pr.y.norm());

    let k = random_k(8, 8, 2, 18);
    let s = &p.stages()[0];
    let once = stage_forward(&k, &pr, s).unwrap();
    assert!(stage_forward(&once, &pr, s).unwrap().sub(&once).unwrap().norm() <= 1e-15 * once.norm());
}

#[test]
fn cascade_is_composition_and_deterministic() {
    let (pr, _) = problem(8, 2, 19);
    let p = CascadeParams::init(&config(2), 8, 8, 2, 20).unwrap();
    let manual = stage_forward(&stage_forward(&pr.y, &pr, &p.stages()[0]).unwrap(), &pr, &p.stages()[1]).unwrap();
    let out = cascade_forward(&pr, &p).unwrap();
    assert_eq!(out, manual);
    assert_eq!(cascade_forward(&pr, &p).unwrap(), out);
    let (rec_out, recs) = cascade_forward_recorded(&pr, &p).unwrap();
    assert_eq!(rec_out, out);
    assert_eq!(recs.len(), 2);
}

#[test]
fn hard_dc_restores_measurement() {
    let (pr, _) = problem(8, 2, 21);
    let mut p = CascadeParams::init(&config(2), 8, 8, 2, 22).unwrap();
    p.hard_dc = true;
    let out = cascade_forward(&pr, &p).unwrap();
    assert_eq!(undersample(&out, &pr.mask).unwrap(), pr.y);
}

#[test]
fn parity_is_enforced() {
    let p = CascadeParams::init(&config(2), 8, 8, 2, 23).unwrap();
    assert_eq!(p.stages()[0].plan.mode(), WindowMode::Square);
    assert_eq!(p.stages()[1].plan.mode(), WindowMode::Linear);
    let mut swapped = p.stages().to_vec();
    swapped.reverse();
    assert!(CascadeParams::new(swapped).is_err());

    let square_only = CascadeParams::init(
        &CascadeConfig {
            line_windows: false,
            ..config(3)
        },
        8,
        8,
        2,
        23,
    )
    .unwrap();
    assert!(square_only.stages().iter().all(|s| s.plan.mode() == WindowMode::Square));
    let mut mixed = square_only.stages().to_vec();
    mixed[1] = p.stages()[1].clone();
    mixed.swap(0, 1);
    assert!(CascadeParams::new(mixed).is_err());
}

#[test]
fn init_heads_form_a_tight_frame() {
    let p = CascadeParams::init(&config(1), 8, 8, 3, 24).unwrap();
    let heads = &p.stages()[0].mssa.heads;
    let mut frame = CMatrix::zeros(3, 3);
    for h in heads {
        frame = frame.add(&h.q.adj_matmul(&h.q).unwrap()).unwrap();
    }
    assert!(frame.add(&CMatrix::identity(3).scale(-1.0)).unwrap().frobenius() < 1e-12);
}

#[test]
fn problem_rejects_data_outside_mask() {
    let (pr, full) = problem(8, 2, 25);
    assert!(ReconProblem::new(full, pr.mask.clone(), pr.g.clone()).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = CascadeParams::init(&config(3), 8, 8, 2, 26).unwrap();
    p.stages_mut()[1].mu = 0.1 + 0.2;
    p.stages_mut()[2].mssa.biases[1].table[3] = -1.0 / 3.0;
    p.hard_dc = true;
    save_checkpoint(dir.path(), &p).unwrap();
    let q = load_checkpoint(dir.path()).unwrap();
    assert_eq!(p, q);
    for (a, b) in p.stages().iter().zip(q.stages()) {
        assert_eq!(a.mu.to_bits(), b.mu.to_bits());
    }

    let empty = CascadeParams::init(&config(0), 8, 8, 2, 27).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    save_checkpoint(dir2.path(), &empty).unwrap();
    assert_eq!(load_checkpoint(dir2.path()).unwrap(), empty);
}
