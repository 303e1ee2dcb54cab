use crate::attention::mssa_unscaled_backward;
use crate::ctensor::{re_dot, CMatrix};
use crate::data::{undersample, KSpace};
use crate::error::{Error, Result};
use crate::spirit::glp;
use crate::unroll::{cascade_forward_recorded, CascadeParams, ReconProblem, StageParams, StageRecord};

/// Gradient of a real loss with respect to one stage's parameters, in the
/// real-pair convention (`d/d re + i d/d im` for complex entries).
#[derive(Clone, Debug, PartialEq)]
pub struct StageGrads {
    pub mu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub q: Vec<CMatrix>,
    pub tables: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeGrads {
    pub stages: Vec<StageGrads>,
}

impl CascadeGrads {
    pub fn zeros_like(params: &CascadeParams) -> Self {
        CascadeGrads {
            stages: params
                .stages()
                .iter()
                .map(|s| StageGrads {
                    mu: 0.0,
                    lambda1: 0.0,
                    lambda2: 0.0,
                    gamma: 0.0,
                    q: s.mssa.heads.iter().map(|h| CMatrix::zeros(h.q.rows, h.q.cols)).collect(),
                    tables: s.mssa.biases.iter().map(|b| vec![0.0; b.table.len()]).collect(),
                })
                .collect(),
        }
    }

    /// Same order as [`flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.extend([s.mu, s.lambda1, s.lambda2, s.gamma]);
            for q in &s.q {
                for z in &q.data {
                    out.extend([z.re, z.im]);
                }
            }
            for t in &s.tables {
                out.extend_from_slice(t);
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.stages {
            g.mu *= s;
            g.lambda1 *= s;
            g.lambda2 *= s;
            g.gamma *= s;
            for q in &mut g.q {
                *q = q.scale(s);
            }
            for t in &mut g.tables {
                t.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// `self += other`; shapes must match.
    pub fn accumulate(&mut self, other: &CascadeGrads) -> Result<()> {
        if self.stages.len() != other.stages.len() {
            return Err(Error::shape(&[self.stages.len()], &[other.stages.len()]));
        }
        for (a, b) in self.stages.iter_mut().zip(&other.stages) {
            a.mu += b.mu;
            a.lambda1 += b.lambda1;
            a.lambda2 += b.lambda2;
            a.gamma += b.gamma;
            for (x, y) in a.q.iter_mut().zip(&b.q) {
                *x = x.add(y)?;
            }
            for (x, y) in a.tables.iter_mut().zip(&b.tables) {
                if x.len() != y.len() {
                    return Err(Error::shape(&[x.len()], &[y.len()]));
                }
                x.iter_mut().zip(y).for_each(|(u, v)| *u += v);
            }
        }
        Ok(())
    }

    /// Zeroes the attention parameters, `lambda1`, and `gamma`.
    pub fn freeze_attention(&mut self) {
        for g in &mut self.stages {
            g.lambda1 = 0.0;
            g.gamma = 0.0;
            for q in &mut g.q {
                q.data.iter_mut().for_each(|z| *z = Default::default());
            }
            for t in &mut g.tables {
                t.fill(0.0);
            }
        }
    }

    pub fn freeze_glp(&mut self) {
        for g in &mut self.stages {
            g.lambda2 = 0.0;
        }
    }
}

/// All learnable values as one real vector: per stage `mu, lambda1, lambda2,
/// gamma`, then every head's `q` as `(re, im)` pairs, then every bias table.
pub fn flatten_params(params: &CascadeParams) -> Vec<f64> {
    let mut out = Vec::new();
    for s in params.stages() {
        out.extend([s.mu, s.lambda1, s.lambda2, s.mssa.gamma]);
        for h in &s.mssa.heads {
            for z in &h.q.data {
                out.extend([z.re, z.im]);
            }
        }
        for b in &s.mssa.biases {
            out.extend_from_slice(&b.table);
        }
    }
    out
}

/// Inverse of [`flatten_params`] onto existing parameters.
pub fn unflatten_params(params: &mut CascadeParams, values: &[f64]) -> Result<()> {
    let want = flatten_params(params).len();
    if values.len() != want {
        return Err(Error::shape(&[want], &[values.len()]));
    }
    let mut it = values.iter().copied();
    let mut next = || it.next().expect("length checked");
    for s in params.stages_mut() {
        s.mu = next();
        s.lambda1 = next();
        s.lambda2 = next();
        s.mssa.gamma = next();
        for h in &mut s.mssa.heads {
            for z in &mut h.q.data {
                z.re = next();
                z.im = next();
            }
        }
        for b in &mut s.mssa.biases {
            for v in &mut b.table {
                *v = next();
            }
        }
    }
    Ok(())
}

/// Human-readable label of every entry of [`flatten_params`].
pub fn param_names(params: &CascadeParams) -> Vec<String> {
    let mut out = Vec::new();
    for (t, s) in params.stages().iter().enumerate() {
        for n in ["mu", "lambda1", "lambda2", "gamma"] {
            out.push(format!("stage{t}.{n}"));
        }
        for (h, head) in s.mssa.heads.iter().enumerate() {
            for i in 0..head.q.data.len() {
                out.push(format!("stage{t}.head{h}.q[{i}].re"));
                out.push(format!("stage{t}.head{h}.q[{i}].im"));
            }
        }
        for (h, b) in s.mssa.biases.iter().enumerate() {
            for i in 0..b.table.len() {
                out.push(format!("stage{t}.head{h}.bias[{i}]"));
            }
        }
    }
    out
}

/// Recorded forward pass of the cascade on one problem.
#[derive(Debug)]
pub struct GradTape<'a> {
    problem: &'a ReconProblem,
    records: Vec<StageRecord>,
    output: KSpace,
    hard_dc: bool,
}

impl<'a> GradTape<'a> {
    /// Runs the cascade and keeps every intermediate the reverse pass needs.
    pub fn record(problem: &'a ReconProblem, params: &CascadeParams) -> Result<Self> {
        let (output, records) = cascade_forward_recorded(problem, params)?;
        Ok(GradTape {
            problem,
            records,
            output,
            hard_dc: params.hard_dc,
        })
    }

    pub fn output(&self) -> &KSpace {
        &self.output
    }

    /// Pulls `grad_out` (gradient of the loss at the cascade output) back to
    /// every parameter. `params` must be the ones the tape was recorded with.
    pub fn backward(&self, params: &CascadeParams, grad_out: &KSpace) -> Result<CascadeGrads> {
        if params.len() != self.records.len() || params.hard_dc != self.hard_dc {
            return Err(Error::Precondition(format!(
                "tape holds {} stages, parameters have {}",
                self.records.len(),
                params.len()
            )));
        }
        grad_out.check_same_shape(&self.output)?;
        let mut g = grad_out.clone();
        if self.hard_dc {
            // sampled entries were overwritten with y
            g = g.sub(&undersample(&g, &self.problem.mask)?)?;
        }
        let mut stages = Vec::with_capacity(self.records.len());
        for (s, rec) in params.stages().iter().zip(&self.records).rev() {
            let (grads, gk) = stage_backward(s, rec, self.problem, &g)?;
            stages.push(grads);
            g = gk;
        }
        stages.reverse();
        Ok(CascadeGrads { stages })
    }
}

fn stage_backward(
    s: &StageParams,
    rec: &StageRecord,
    problem: &ReconProblem,
    g: &KSpace,
) -> Result<(StageGrads, KSpace)> {
    let (mu, l1, l2, gamma) = (s.mu, s.lambda1, s.lambda2, s.mssa.gamma);
    let a = re_dot(g.data(), rec.k.data());
    let b = re_dot(g.data(), rec.gdc.data());
    let c = re_dot(g.data(), rec.m0.data());
    let d = re_dot(g.data(), rec.glp.data());

    let coef = mu * l1 * gamma * gamma;
    let attn = (coef != 0.0).then(|| mssa_unscaled_backward(&rec.mssa, &s.mssa, &s.plan, &g.scale(coef)));

    let mut gk = g.scale(1.0 - l1 * mu * gamma);
    gk = gk.axpy(-mu, &undersample(g, &problem.mask)?)?;
    gk = gk.axpy(-mu * l2, &glp(g, &problem.g)?)?;
    let (gq, tables) = match attn {
        Some(m) => {
            gk = gk.axpy(1.0, &m.k)?;
            (m.q, m.tables)
        }
        None => (
            s.mssa.heads.iter().map(|h| CMatrix::zeros(h.q.rows, h.q.cols)).collect(),
            s.mssa.biases.iter().map(|t| vec![0.0; t.table.len()]).collect(),
        ),
    };
    let grads = StageGrads {
        mu: -l1 * gamma * a - b + l1 * gamma * gamma * c - l2 * d,
        lambda1: -mu * gamma * a + mu * gamma * gamma * c,
        lambda2: -mu * d,
        gamma: -l1 * mu * a + 2.0 * mu * l1 * gamma * c,
        q: gq,
        tables,
    };
    Ok((grads, gk))
}
