//! The unrolled cascade.
//!
//! Each stage applies
//!
//! ```text
//! k' = (1 - l1 mu gamma) k - mu GDC(k, y) + mu l1 MSSA(k) - mu l2 GLP(k, G)
//! ```
//!
//! with its own scalars and attention parameters. Even stages attend over
//! square windows, odd stages over lines (or squares too, for the ablation
//! without line windows). The cascade starts from the zero-filled
//! measurement.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::attention::{mssa_unscaled, HeadParams, LineAxis, MssaParams, MssaRecord, RelPosBias, WindowMode, WindowPlan};
use crate::ctensor::CMatrix;
use crate::data::{undersample, KSpace, SampleMask};
use crate::error::{Error, Result};
use crate::oracle::haar_unitary;
use crate::spirit::{calibrate, glp, SpiritKernel};

/// Learnable parameters of one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageParams {
    pub mu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Attention heads, biases, and `gamma`.
    pub mssa: MssaParams,
    pub plan: WindowPlan,
}

impl StageParams {
    pub fn gamma(&self) -> f64 {
        self.mssa.gamma
    }

    fn check_finite(&self) -> Result<()> {
        let scalars = [self.mu, self.lambda1, self.lambda2, self.mssa.gamma];
        let tensors_ok = self.mssa.heads.iter().all(|h| h.q.is_finite())
            && self.mssa.biases.iter().all(|b| b.table.iter().all(|v| v.is_finite()));
        if scalars.iter().all(|v| v.is_finite()) && tensors_ok {
            Ok(())
        } else {
            Err(Error::NonFinite("stage parameters".into()))
        }
    }
}

/// `T` stages plus the optional terminal data-consistency replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeParams {
    stages: Vec<StageParams>,
    /// Overwrite sampled entries of the output with `y`. Off by default.
    pub hard_dc: bool,
}

impl CascadeParams {
    /// Checks that stage `t` uses square windows when `t` is even and lines
    /// when odd (unless every stage is square), and that all stages share one
    /// grid and coil count.
    pub fn new(stages: Vec<StageParams>) -> Result<Self> {
        let all_square = stages.iter().all(|s| s.plan.mode() == WindowMode::Square);
        for (t, s) in stages.iter().enumerate() {
            let want = if t % 2 == 0 || all_square { WindowMode::Square } else { WindowMode::Linear };
            if s.plan.mode() != want {
                return Err(Error::InvalidArgument(format!(
                    "stage {t} must use {want} windows, got {}",
                    s.plan.mode()
                )));
            }
            if s.plan.grid() != stages[0].plan.grid() {
                return Err(Error::InvalidArgument(format!("stage {t} plan is for a different grid")));
            }
            let nc = s.mssa.heads.first().map_or(0, |h| h.q.cols);
            if nc != stages[0].mssa.heads.first().map_or(0, |h| h.q.cols) {
                return Err(Error::InvalidArgument(format!("stage {t} has a different coil count")));
            }
            s.mssa.validate(nc, &s.plan)?;
            s.check_finite()?;
        }
        Ok(CascadeParams { stages, hard_dc: false })
    }

    /// Fresh parameters following `config`.
    ///
    /// Each head's projection is a `d_h x nc` block of an independent Haar
    /// unitary, scaled so that `sum_h q_h^H q_h` is the identity (exactly
    /// when `d_h >= nc`, in expectation otherwise). Bias tables start at 0.
    pub fn init(config: &CascadeConfig, n1: usize, n2: usize, nc: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let dh = config.d_head.unwrap_or(nc);
        let dim = dh.max(nc);
        let scale = ((nc as f64 / dh as f64).max(1.0) / config.heads as f64).sqrt();
        let square = WindowPlan::square(n1, n2, config.window)?;
        let linear = WindowPlan::linear(n1, n2, config.line_axis)?;
        let mut stages = Vec::with_capacity(config.stages);
        for t in 0..config.stages {
            let plan = if t % 2 == 0 || !config.line_windows { square.clone() } else { linear.clone() };
            let heads = (0..config.heads)
                .map(|h| {
                    let mut rng = crate::rng::stream(seed, &format!("cascade/stage{t}/head{h}"));
                    let u = haar_unitary(dim, &mut rng);
                    HeadParams {
                        q: CMatrix::from_fn(dh, nc, |i, j| u.get(i, j) * scale),
                    }
                })
                .collect();
            let biases = (0..config.heads).map(|_| RelPosBias::zeros(&plan)).collect();
            stages.push(StageParams {
                mu: config.mu,
                lambda1: config.lambda1,
                lambda2: config.lambda2,
                mssa: MssaParams {
                    heads,
                    biases,
                    gamma: config.gamma,
                },
                plan,
            });
        }
        let mut p = CascadeParams::new(stages)?;
        p.hard_dc = config.hard_dc;
        Ok(p)
    }

    pub fn stages(&self) -> &[StageParams] {
        &self.stages
    }

    /// Mutable access to scalar and tensor values. Window plans must not be
    /// swapped between parities; [`CascadeParams::new`] is the checked path.
    pub fn stages_mut(&mut self) -> &mut [StageParams] {
        &mut self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// `(n1, n2, nc)` the parameters were built for, if `T > 0`.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        let s = self.stages.first()?;
        let (n1, n2) = s.plan.grid();
        Some((n1, n2, s.mssa.heads[0].q.cols))
    }
}

/// Hyperparameters of a fresh cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeConfig {
    /// Number of stages `T`.
    pub stages: usize,
    pub heads: usize,
    /// Head width; `None` means `nc`.
    pub d_head: Option<usize>,
    /// Square window side.
    pub window: usize,
    pub line_axis: LineAxis,
    /// Odd stages use line windows; when off, every stage is square.
    pub line_windows: bool,
    pub mu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub hard_dc: bool,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            stages: 10,
            heads: 6,
            d_head: None,
            window: 4,
            line_axis: LineAxis::Rows,
            line_windows: true,
            mu: 0.5,
            lambda1: 0.1,
            lambda2: 0.1,
            gamma: 1.0,
            hard_dc: false,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.window == 0 || self.d_head == Some(0) {
            return Err(Error::InvalidArgument("heads, window and d_head must be positive".into()));
        }
        if ![self.mu, self.lambda1, self.lambda2, self.gamma].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("initial scalars must be finite".into()));
        }
        Ok(())
    }
}

/// Measurement, mask, and the calibrated kernel for one slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconProblem {
    pub y: KSpace,
    pub mask: SampleMask,
    pub g: SpiritKernel,
}

impl ReconProblem {
    /// Checks shapes and that `y` vanishes outside the mask.
    pub fn new(y: KSpace, mask: SampleMask, g: SpiritKernel) -> Result<Self> {
        let (n1, n2, nc) = y.dims();
        if (mask.n1, mask.n2) != (n1, n2) {
            return Err(Error::shape(&[n1, n2], &[mask.n1, mask.n2]));
        }
        if g.nc() != nc {
            return Err(Error::shape(&[nc], &[g.nc()]));
        }
        if undersample(&y, &mask)? != y {
            return Err(Error::InvalidArgument("measurement has data outside the mask".into()));
        }
        Ok(ReconProblem { y, mask, g })
    }

    /// Undersamples `full` and calibrates `G` from the ACS block.
    pub fn from_full(full: &KSpace, mask: &SampleMask, kw: usize, tikhonov: f64) -> Result<Self> {
        let y = undersample(full, mask)?;
        let g = calibrate(&y, mask, kw, tikhonov)?;
        ReconProblem::new(y, mask.clone(), g)
    }

    pub fn zero_filled(&self) -> KSpace {
        self.y.clone()
    }
}

/// `M k - M y`.
pub fn gdc(k: &KSpace, y: &KSpace, mask: &SampleMask) -> Result<KSpace> {
    k.check_same_shape(y)?;
    undersample(&k.sub(y)?, mask)
}

/// Intermediates of one stage kept for the reverse pass.
#[derive(Clone, Debug)]
pub(crate) struct StageRecord {
    pub k: KSpace,
    pub gdc: KSpace,
    /// MSSA output without the `gamma^2` factor.
    pub m0: KSpace,
    pub glp: KSpace,
    pub mssa: MssaRecord,
}

fn stage_impl(k: &KSpace, problem: &ReconProblem, p: &StageParams, keep: bool) -> Result<(KSpace, Option<StageRecord>)> {
    let d = gdc(k, &problem.y, &problem.mask)?;
    let (m0, rec) = mssa_unscaled(k, &p.mssa, &p.plan, keep)?;
    let l = glp(k, &problem.g)?;
    let gamma = p.gamma();
    let a = 1.0 - p.lambda1 * p.mu * gamma;
    let b = p.mu * p.lambda1 * gamma * gamma;
    let mut out = k.scale(a);
    out = out.axpy(-p.mu, &d)?;
    out = out.axpy(b, &m0)?;
    out = out.axpy(-p.mu * p.lambda2, &l)?;
    if !out.values().is_finite() {
        return Err(Error::NonFinite("stage output".into()));
    }
    let record = rec.map(|mssa| StageRecord {
        k: k.clone(),
        gdc: d,
        m0,
        glp: l,
        mssa,
    });
    Ok((out, record))
}

/// One update step.
pub fn stage_forward(k: &KSpace, problem: &ReconProblem, params: &StageParams) -> Result<KSpace> {
    Ok(stage_impl(k, problem, params, false)?.0)
}

pub(crate) fn stage_forward_recorded(k: &KSpace, problem: &ReconProblem, params: &StageParams) -> Result<(KSpace, StageRecord)> {
    let (out, rec) = stage_impl(k, problem, params, true)?;
    Ok((out, rec.expect("record requested")))
}

/// Replaces sampled entries of `k` with `y`.
pub fn hard_data_consistency(k: &KSpace, y: &KSpace, mask: &SampleMask) -> Result<KSpace> {
    k.check_same_shape(y)?;
    let (_, n2, nc) = k.dims();
    let mut out = k.clone();
    for (p, (o, v)) in out.data_mut().chunks_mut(nc).zip(y.data().chunks(nc)).enumerate() {
        if mask.is_sampled(p % n2) {
            o.copy_from_slice(v);
        }
    }
    Ok(out)
}

fn check_problem(problem: &ReconProblem, params: &CascadeParams) -> Result<()> {
    if let Some(dims) = params.dims() {
        if dims != problem.y.dims() {
            let (a, b, c) = dims;
            let (x, y, z) = problem.y.dims();
            return Err(Error::shape(&[a, b, c], &[x, y, z]));
        }
    }
    Ok(())
}

/// `k^T` starting from the zero-filled measurement.
pub fn cascade_forward(problem: &ReconProblem, params: &CascadeParams) -> Result<KSpace> {
    check_problem(problem, params)?;
    let mut k = problem.zero_filled();
    for s in params.stages() {
        k = stage_forward(&k, problem, s)?;
    }
    if params.hard_dc {
        k = hard_data_consistency(&k, &problem.y, &problem.mask)?;
    }
    Ok(k)
}

pub(crate) fn cascade_forward_recorded(problem: &ReconProblem, params: &CascadeParams) -> Result<(KSpace, Vec<StageRecord>)> {
    check_problem(problem, params)?;
    let mut k = problem.zero_filled();
    let mut records = Vec::with_capacity(params.len());
    for s in params.stages() {
        let (next, rec) = stage_forward_recorded(&k, problem, s)?;
        records.push(rec);
        k = next;
    }
    if params.hard_dc {
        k = hard_data_consistency(&k, &problem.y, &problem.mask)?;
    }
    Ok((k, records))
}

#[cfg(test)]
mod tests;
