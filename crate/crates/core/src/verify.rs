//! Named numerical self-checks, reported as CSV.
//!
//! Each check compares an implementation path against an independent one
//! (dense matrices, eigenvalues, finite differences, closed forms) and
//! records the measured error next to its tolerance.

use std::fmt::Write as _;

use rand::Rng;

use crate::ctensor::{CArray, CMatrix, C64};
use crate::data::{gen_coil_sens, gen_phantom, make_mask, simulate_kspace, KSpace, MaskPattern, PhantomSpec};
use crate::error::Result;
use crate::metrics::{nmse, psnr, ssim, MagnitudeImage};
use crate::oracle::{
    approx_gap, filter_to_operator, hankelize, slr_grad_exact, slr_value, slr_value_spectral, tight_frame_heads,
    AnnihilationFilter, DenseOperator,
};
use crate::spirit::{apply_g, apply_g_adjoint, consistency, glp};
use crate::training::{flatten_params, loss_and_grad, loss_kspace, unflatten_params, TrainSample};
use crate::unroll::{cascade_forward, CascadeConfig, CascadeParams, ReconProblem};

/// Deliberate corruption used to confirm that the harness can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Perturbs every analytic gradient before it is compared.
    Gradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst error seen (or the failing fraction, for the network check).
    pub measured: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn max_err(name: &'static str, measured: f64, tolerance: f64) -> Self {
        CheckResult {
            name,
            passed: measured <= tolerance,
            measured,
            tolerance,
        }
    }
}

fn rc<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn random_k<R: Rng>(n1: usize, n2: usize, nc: usize, rng: &mut R) -> KSpace {
    KSpace::from_vec(n1, n2, nc, (0..n1 * n2 * nc).map(|_| rc(rng)).collect()).expect("finite")
}

fn random_heads<R: Rng>(h: usize, d: usize, nc: usize, rng: &mut R) -> Vec<DenseOperator> {
    (0..h)
        .map(|_| DenseOperator {
            matrix: CMatrix::from_fn(d, nc, |_, _| rc(rng)),
        })
        .collect()
}

fn hankel_equivalence(seed: u64) -> Result<CheckResult> {
    let mut rng = crate::rng::stream(seed, "verify/hankel");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n1, n2, nc) = (rng.random_range(3..=8), rng.random_range(3..=8), rng.random_range(1..=2));
        let (d1, d2) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let k = random_k(n1, n2, nc, &mut rng);
        let s = CArray::from_vec(&[d1, d2, nc], (0..d1 * d2 * nc).map(|_| rc(&mut rng)).collect())?;
        let sv = CMatrix::from_vec(d1 * d2 * nc, 1, s.data().to_vec())?;
        let hs = hankelize(&k, (d1, d2))?.matmul(&sv)?;
        let q = filter_to_operator(&AnnihilationFilter::new(s)?, n1, n2)?;
        let qk = q.matrix.matmul(&CMatrix::from_vec(n1 * n2 * nc, 1, k.data().to_vec())?)?;
        worst = worst.max((hs.frobenius() - qk.frobenius()).abs());
    }
    Ok(CheckResult::max_err("hankel_equivalence", worst, 1e-10))
}

fn spectral_identity(seed: u64) -> Result<CheckResult> {
    let mut rng = crate::rng::stream(seed, "verify/spectral");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n1, n2, nc) = (rng.random_range(2..=5), rng.random_range(2..=5), rng.random_range(1..=3));
        let k = random_k(n1, n2, nc, &mut rng);
        let heads = random_heads(rng.random_range(1..=3), rng.random_range(1..=3), nc, &mut rng);
        let gamma = rng.random_range(0.01..2.0);
        let a = slr_value(&k, &heads, gamma)?;
        let b = slr_value_spectral(&k, &heads, gamma)?;
        worst = worst.max((a - b).abs());
    }
    Ok(CheckResult::max_err("spectral_identity", worst, 1e-9))
}

fn slr_gradient_fd(seed: u64, fault: Fault) -> Result<CheckResult> {
    let mut rng = crate::rng::stream(seed, "verify/slr-grad");
    let k = random_k(8, 8, 1, &mut rng);
    let heads = random_heads(2, 2, 1, &mut rng);
    let gamma = 0.3;
    let mut g = slr_grad_exact(&k, &heads, gamma)?;
    if fault == Fault::Gradient {
        g = g.scale(1.01);
    }
    let h = 1e-5;
    let (mut diff, mut norm) = (0.0, 0.0);
    for i in 0..k.data().len() {
        for part in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
            let mut up = k.clone();
            up.data_mut()[i] += part * h;
            let mut down = k.clone();
            down.data_mut()[i] -= part * h;
            let num = (slr_value(&up, &heads, gamma)? - slr_value(&down, &heads, gamma)?) / (2.0 * h);
            let ana = if part.re == 1.0 { g.data()[i].re } else { g.data()[i].im };
            diff += (num - ana) * (num - ana);
            norm += ana * ana;
        }
    }
    let worst = (diff / norm).sqrt();
    Ok(CheckResult::max_err("slr_gradient_fd", worst, 1e-6))
}

fn approx_regime(seed: u64) -> Result<CheckResult> {
    let mut rng = crate::rng::stream(seed, "verify/approx");
    let mut worst = f64::INFINITY;
    for _ in 0..10 {
        let k = random_k(4, 4, 4, &mut rng);
        let heads = tight_frame_heads(4, 2, &mut rng)?;
        worst = worst.min(approx_gap(&k, &heads, 1e-3)?.cosine);
    }
    Ok(CheckResult {
        name: "approx_cosine_small_gamma",
        passed: worst > 0.99,
        measured: worst,
        tolerance: 0.99,
    })
}

fn tiny_sample(n: usize, nc: usize, seed: u64) -> Result<TrainSample> {
    let mut rng = crate::rng::stream(seed, "verify/sample");
    let img = gen_phantom(&PhantomSpec::random(n, n, 4, &mut rng), seed)?;
    let sens = gen_coil_sens(nc, n, n, seed)?;
    let full = simulate_kspace(&img, &sens, 0.0, seed)?;
    let mask = make_mask(MaskPattern::Random, 2.0, 6, n, n, seed)?;
    Ok(TrainSample {
        problem: ReconProblem::from_full(&full, &mask, 3, 1e-3)?,
        truth: full,
    })
}

fn network_gradient_fd(seed: u64, fault: Fault) -> Result<CheckResult> {
    let sample = tiny_sample(16, 2, seed)?;
    let cfg = CascadeConfig {
        stages: 2,
        heads: 2,
        window: 2,
        lambda1: 0.4,
        ..CascadeConfig::default()
    };
    let mut params = CascadeParams::init(&cfg, 16, 16, 2, seed)?;
    let mut rng = crate::rng::stream(seed, "verify/net");
    for s in params.stages_mut() {
        for b in &mut s.mssa.biases {
            b.table.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    let (_, grads) = loss_and_grad(&sample, &params)?;
    let mut analytic = grads.flatten();
    if fault == Fault::Gradient {
        analytic.iter_mut().for_each(|g| *g = *g * 1.01 + 1e-6);
    }
    let base = flatten_params(&params);
    let eval = |x: &[f64]| -> Result<f64> {
        let mut p = params.clone();
        unflatten_params(&mut p, x)?;
        loss_kspace(&cascade_forward(&sample.problem, &p)?, &sample.truth)
    };
    let h = 1e-5;
    let mut bad = 0;
    for i in 0..base.len() {
        let mut x = base.clone();
        x[i] += h;
        let up = eval(&x)?;
        x[i] -= 2.0 * h;
        let down = eval(&x)?;
        let num = (up - down) / (2.0 * h);
        let a = analytic[i];
        let ok = if a.abs() < 1e-8 { (a - num).abs() < 1e-8 } else { (a - num).abs() <= 1e-4 * a.abs() };
        if !ok {
            bad += 1;
        }
    }
    let frac_bad = bad as f64 / base.len() as f64;
    Ok(CheckResult::max_err("network_gradient_fd", frac_bad, 0.05))
}

fn dc_fixed_point(seed: u64) -> Result<CheckResult> {
    let sample = tiny_sample(16, 2, seed)?;
    let cfg = CascadeConfig {
        stages: 3,
        heads: 1,
        window: 4,
        mu: 1.0,
        lambda1: 0.0,
        lambda2: 0.0,
        ..CascadeConfig::default()
    };
    let params = CascadeParams::init(&cfg, 16, 16, 2, seed)?;
    let out = cascade_forward(&sample.problem, &params)?;
    let (_, n2, nc) = out.dims();
    let mut worst: f64 = 0.0;
    for (p, (o, y)) in out.data().chunks(nc).zip(sample.problem.y.data().chunks(nc)).enumerate() {
        if sample.problem.mask.is_sampled(p % n2) {
            for (a, b) in o.iter().zip(y) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    Ok(CheckResult::max_err("dc_fixed_point", worst, 1e-14))
}

fn glp_probes(seed: u64) -> Result<CheckResult> {
    let sample = tiny_sample(16, 2, seed)?;
    let g = &sample.problem.g;
    let mut rng = crate::rng::stream(seed, "verify/glp");
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = random_k(16, 16, 2, &mut rng);
        let y = random_k(16, 16, 2, &mut rng);
        let adj = apply_g(&x, g)?.dot(&y)? - x.dot(&apply_g_adjoint(&y, g)?)?;
        let gx = glp(&x, g)?;
        let herm = gx.dot(&y)? - glp(&y, g)?.dot(&x)?.conj();
        let q = gx.dot(&x)?;
        worst = worst.max(adj.norm()).max(herm.norm()).max(q.im.abs()).max((-q.re).max(0.0));
    }
    Ok(CheckResult::max_err("glp_adjoint_psd", worst, 1e-10))
}

fn spirit_consistency(seed: u64) -> Result<CheckResult> {
    let img = gen_phantom(&PhantomSpec::shepp_logan(64, 64), seed)?;
    let sens = gen_coil_sens(4, 64, 64, seed)?;
    let full = simulate_kspace(&img, &sens, 0.0, seed)?;
    let mask = make_mask(MaskPattern::Random, 4.0, 12, 64, 64, seed)?;
    let g = crate::spirit::calibrate(&full, &mask, 5, 1e-3)?;
    Ok(CheckResult::max_err("spirit_consistency", consistency(&full, &g)?, 0.05))
}

fn metric_closed_forms() -> Result<CheckResult> {
    let n = 16;
    let x: Vec<f64> = (0..n * n).map(|i| if i == 0 { 1.0 } else { 0.5 }).collect();
    let r = MagnitudeImage::new(n, n, x.clone())?;
    let shifted = MagnitudeImage::new(n, n, x.iter().map(|v| v + 0.01).collect())?;
    let scaled = MagnitudeImage::new(n, n, x.iter().map(|v| v * 1.1).collect())?;
    let errs = [
        nmse(&r, &r)?,
        if psnr(&r, &r)? == f64::INFINITY { 0.0 } else { 1.0 },
        (psnr(&r, &shifted)? - 40.0).abs(),
        (nmse(&r, &scaled)? - 1.0).abs(),
        (ssim(&r, &r)? - 1.0).abs(),
    ];
    Ok(CheckResult::max_err("metric_closed_forms", errs.iter().copied().fold(0.0, f64::max), 1e-9))
}

/// Runs every check with `seed` for the random instances.
pub fn run_checks(seed: u64, fault: Fault) -> Result<Vec<CheckResult>> {
    Ok(vec![
        hankel_equivalence(seed)?,
        spectral_identity(seed)?,
        slr_gradient_fd(seed, fault)?,
        approx_regime(seed)?,
        network_gradient_fd(seed, fault)?,
        dc_fixed_point(seed)?,
        glp_probes(seed)?,
        spirit_consistency(seed)?,
        metric_closed_forms()?,
    ])
}

pub const VERIFY_CSV_HEADER: &str = "check,status,measured,tolerance";

pub fn report_csv(results: &[CheckResult]) -> String {
    let mut out = String::from(VERIFY_CSV_HEADER);
    out.push('\n');
    for r in results {
        let status = if r.passed { "pass" } else { "fail" };
        let _ = writeln!(out, "{},{status},{:e},{:e}", r.name, r.measured, r.tolerance);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_a_clean_build() {
        let results = run_checks(7, Fault::None).unwrap();
        for r in &results {
            assert!(r.passed, "{r:?}");
        }
        let csv = report_csv(&results);
        assert!(csv.contains("hankel_equivalence,pass"));
        assert!(csv.contains("network_gradient_fd,pass"));
    }

    #[test]
    fn injected_gradient_fault_is_caught() {
        let results = run_checks(7, Fault::Gradient).unwrap();
        let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        assert!(failed.contains(&"slr_gradient_fd"));
        assert!(failed.contains(&"network_gradient_fd"));
    }
}
