//! Windowed subspace self-attention.
//!
//! One head projects the coil vector of every token with a single matrix
//! `q` (`d_h x nc`), so queries, keys, and values coincide: `v = q x`. Within
//! a window the head returns `v * softmax_cols(Re(v^H v) + B)`, and MSSA
//! recombines the heads as `gamma^2 * sum_h q_h^H * ssa_h`.
//!
//! Internally tokens are stored row-wise (`n x nc`, coil fastest), which is
//! the transpose of the public `nc x n` token matrices.

mod window;

pub use window::{partition, unpartition, LineAxis, WindowMode, WindowPlan};

use crate::ctensor::{softmax_cols_in_place, CMatrix, RMatrix, C64};
use crate::data::KSpace;
use crate::error::{Error, Result};
use crate::par;

/// Learnable per-head projection.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub q: CMatrix,
}

/// Learnable relative-position table for one head.
#[derive(Clone, Debug, PartialEq)]
pub struct RelPosBias {
    pub table: Vec<f64>,
    /// Window shape (`rows x cols`) the table is laid out for.
    pub window: (usize, usize),
}

impl RelPosBias {
    pub fn zeros(plan: &WindowPlan) -> Self {
        RelPosBias {
            table: vec![0.0; plan.bias_table_len()],
            window: plan.window_shape(),
        }
    }

    fn check(&self, plan: &WindowPlan) -> Result<()> {
        if self.window != plan.window_shape() || self.table.len() != plan.bias_table_len() {
            return Err(Error::InvalidArgument(format!(
                "bias table for window {:?} (len {}) does not fit plan window {:?}",
                self.window,
                self.table.len(),
                plan.window_shape()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MssaParams {
    pub heads: Vec<HeadParams>,
    pub biases: Vec<RelPosBias>,
    pub gamma: f64,
}

impl MssaParams {
    pub fn validate(&self, nc: usize, plan: &WindowPlan) -> Result<()> {
        if self.heads.is_empty() || self.heads.len() != self.biases.len() {
            return Err(Error::InvalidArgument(format!(
                "need H >= 1 heads with one bias each, got {} heads and {} biases",
                self.heads.len(),
                self.biases.len()
            )));
        }
        let dh = self.heads[0].q.rows;
        for h in &self.heads {
            if h.q.rows != dh || h.q.cols != nc {
                return Err(Error::shape(&[dh, nc], &[h.q.rows, h.q.cols]));
            }
        }
        for b in &self.biases {
            b.check(plan)?;
        }
        Ok(())
    }
}

/// Dense `B` with `B[i][j] = table[index(offset(i, j))]`.
pub fn rel_pos_matrix(bias: &RelPosBias, plan: &WindowPlan) -> Result<RMatrix> {
    bias.check(plan)?;
    let n = plan.tokens_per_window();
    RMatrix::from_vec(n, n, expand_bias(bias, plan))
}

fn expand_bias(bias: &RelPosBias, plan: &WindowPlan) -> Vec<f64> {
    plan.rel_index_map().iter().map(|&i| bias.table[i]).collect()
}

/// Forward intermediates of one head on one window.
#[derive(Clone, Debug)]
pub(crate) struct HeadRecord {
    /// `n x d`
    v: Vec<C64>,
    /// `n x n`, column-stochastic
    a: Vec<f64>,
    /// `n x d`, the SSA output transposed
    z: Vec<C64>,
}

fn head_forward(x: &[C64], n: usize, nc: usize, q: &CMatrix, bias: &[f64]) -> HeadRecord {
    let d = q.rows;
    let mut v = vec![C64::new(0.0, 0.0); n * d];
    for i in 0..n {
        let xi = &x[i * nc..(i + 1) * nc];
        for a in 0..d {
            let qa = &q.data[a * nc..(a + 1) * nc];
            v[i * d + a] = qa.iter().zip(xi).map(|(q, x)| q * x).sum();
        }
    }
    let mut s = bias.to_vec();
    for i in 0..n {
        let vi = &v[i * d..(i + 1) * d];
        for j in i..n {
            let vj = &v[j * d..(j + 1) * d];
            let g: f64 = vi.iter().zip(vj).map(|(p, r)| p.re * r.re + p.im * r.im).sum();
            s[i * n + j] += g;
            if j != i {
                s[j * n + i] += g;
            }
        }
    }
    softmax_cols_in_place(&mut s, n, n);
    let mut z = vec![C64::new(0.0, 0.0); n * d];
    for i in 0..n {
        let vi = &v[i * d..(i + 1) * d];
        let arow = &s[i * n..(i + 1) * n];
        for (j, &w) in arow.iter().enumerate() {
            let zj = &mut z[j * d..(j + 1) * d];
            for (zz, vv) in zj.iter_mut().zip(vi) {
                *zz += vv * w;
            }
        }
    }
    HeadRecord { v, a: s, z }
}

/// Adds `q^H z` (token rows) into `out`.
fn add_recombined(out: &mut [C64], z: &[C64], q: &CMatrix, n: usize) {
    let (d, nc) = (q.rows, q.cols);
    for j in 0..n {
        let zj = &z[j * d..(j + 1) * d];
        let oj = &mut out[j * nc..(j + 1) * nc];
        for (a, &za) in zj.iter().enumerate() {
            let qa = &q.data[a * nc..(a + 1) * nc];
            for (o, qv) in oj.iter_mut().zip(qa) {
                *o += qv.conj() * za;
            }
        }
    }
}

/// Single-head attention on an `nc x n` token matrix; returns `d_h x n`.
pub fn ssa(x: &CMatrix, head: &HeadParams, b: &RMatrix) -> Result<CMatrix> {
    let (nc, n) = (x.rows, x.cols);
    if head.q.cols != nc {
        return Err(Error::shape(&[head.q.rows, nc], &[head.q.rows, head.q.cols]));
    }
    if (b.rows, b.cols) != (n, n) {
        return Err(Error::shape(&[n, n], &[b.rows, b.cols]));
    }
    let rows = x.adjoint().data.iter().map(|z| z.conj()).collect::<Vec<_>>();
    let rec = head_forward(&rows, n, nc, &head.q, &b.data);
    let d = head.q.rows;
    Ok(CMatrix::from_fn(d, n, |a, j| rec.z[j * d + a]))
}

/// Attention weights `softmax_cols(Re(v^H v) + B)` for one head and window.
pub fn attention_weights(x: &CMatrix, head: &HeadParams, b: &RMatrix) -> Result<RMatrix> {
    let (nc, n) = (x.rows, x.cols);
    if head.q.cols != nc || (b.rows, b.cols) != (n, n) {
        return Err(Error::InvalidArgument("attention operand shapes disagree".into()));
    }
    let rows = x.adjoint().data.iter().map(|z| z.conj()).collect::<Vec<_>>();
    RMatrix::from_vec(n, n, head_forward(&rows, n, nc, &head.q, &b.data).a)
}

/// `gamma^2 * sum_h q_h^H ssa(x | q_h, B_h)` over every window of `plan`.
pub fn mssa(k: &KSpace, params: &MssaParams, plan: &WindowPlan) -> Result<KSpace> {
    let (m0, _) = mssa_unscaled(k, params, plan, false)?;
    Ok(m0.scale(params.gamma * params.gamma))
}

#[derive(Clone, Debug)]
pub(crate) struct WindowRecord {
    x: Vec<C64>,
    heads: Vec<HeadRecord>,
}

#[derive(Clone, Debug)]
pub(crate) struct MssaRecord {
    windows: Vec<WindowRecord>,
}

/// MSSA without the `gamma^2` factor; optionally keeps what the backward
/// pass needs.
pub(crate) fn mssa_unscaled(
    k: &KSpace,
    params: &MssaParams,
    plan: &WindowPlan,
    keep: bool,
) -> Result<(KSpace, Option<MssaRecord>)> {
    plan.check_kspace(k)?;
    let nc = k.nc();
    params.validate(nc, plan)?;
    let n = plan.tokens_per_window();
    let biases: Vec<Vec<f64>> = params.biases.iter().map(|b| expand_bias(b, plan)).collect();
    let data = k.data();
    let per_window = par::map(plan.windows(), |toks| {
        let mut x = Vec::with_capacity(n * nc);
        for &p in toks {
            x.extend_from_slice(&data[p * nc..(p + 1) * nc]);
        }
        let mut out = vec![C64::new(0.0, 0.0); n * nc];
        let mut heads = Vec::with_capacity(if keep { params.heads.len() } else { 0 });
        for (head, bias) in params.heads.iter().zip(&biases) {
            let rec = head_forward(&x, n, nc, &head.q, bias);
            add_recombined(&mut out, &rec.z, &head.q, n);
            if keep {
                heads.push(rec);
            }
        }
        (out, keep.then_some(WindowRecord { x, heads }))
    });
    let (n1, n2) = plan.grid();
    let mut result = KSpace::zeros(n1, n2, nc);
    let rd = result.data_mut();
    let mut records = Vec::with_capacity(if keep { per_window.len() } else { 0 });
    for ((out, rec), toks) in per_window.into_iter().zip(plan.windows()) {
        for (t, &p) in toks.iter().enumerate() {
            rd[p * nc..(p + 1) * nc].copy_from_slice(&out[t * nc..(t + 1) * nc]);
        }
        if let Some(r) = rec {
            records.push(r);
        }
    }
    Ok((result, keep.then_some(MssaRecord { windows: records })))
}

/// Gradients of a real loss through [`mssa_unscaled`], real-pair convention.
#[derive(Clone, Debug)]
pub(crate) struct MssaGrads {
    pub k: KSpace,
    pub q: Vec<CMatrix>,
    pub tables: Vec<Vec<f64>>,
}

pub(crate) fn mssa_unscaled_backward(
    record: &MssaRecord,
    params: &MssaParams,
    plan: &WindowPlan,
    grad_out: &KSpace,
) -> MssaGrads {
    let nc = grad_out.nc();
    let n = plan.tokens_per_window();
    let rel = plan.rel_index_map();
    let table_len = plan.bias_table_len();
    let gdata = grad_out.data();
    let idx: Vec<usize> = (0..plan.windows().len()).collect();
    let per_window = par::map(&idx, |&w| {
        let toks = &plan.windows()[w];
        let rec = &record.windows[w];
        let mut g0 = Vec::with_capacity(n * nc);
        for &p in toks {
            g0.extend_from_slice(&gdata[p * nc..(p + 1) * nc]);
        }
        let mut gx = vec![C64::new(0.0, 0.0); n * nc];
        let mut gqs = Vec::with_capacity(params.heads.len());
        let mut gtabs = Vec::with_capacity(params.heads.len());
        for (head, hr) in params.heads.iter().zip(&rec.heads) {
            let (gq, gt) = head_backward(&rec.x, &g0, n, nc, &head.q, hr, rel, table_len, &mut gx);
            gqs.push(gq);
            gtabs.push(gt);
        }
        (gx, gqs, gtabs)
    });
    let (n1, n2) = plan.grid();
    let mut gk = KSpace::zeros(n1, n2, nc);
    let mut gq: Vec<CMatrix> = params.heads.iter().map(|h| CMatrix::zeros(h.q.rows, h.q.cols)).collect();
    let mut gt: Vec<Vec<f64>> = vec![vec![0.0; table_len]; params.heads.len()];
    {
        let kd = gk.data_mut();
        for ((gx, gqs, gtabs), toks) in per_window.into_iter().zip(plan.windows()) {
            for (t, &p) in toks.iter().enumerate() {
                kd[p * nc..(p + 1) * nc].copy_from_slice(&gx[t * nc..(t + 1) * nc]);
            }
            for (acc, g) in gq.iter_mut().zip(gqs) {
                for (a, b) in acc.data.iter_mut().zip(g.data) {
                    *a += b;
                }
            }
            for (acc, g) in gt.iter_mut().zip(gtabs) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }
    MssaGrads { k: gk, q: gq, tables: gt }
}

#[allow(clippy::too_many_arguments)]
fn head_backward(
    x: &[C64],
    g0: &[C64],
    n: usize,
    nc: usize,
    q: &CMatrix,
    rec: &HeadRecord,
    rel: &[usize],
    table_len: usize,
    gx: &mut [C64],
) -> (CMatrix, Vec<f64>) {
    let d = q.rows;
    let (v, a, z) = (&rec.v, &rec.a, &rec.z);
    let mut gq = CMatrix::zeros(d, nc);
    // out = q^H z: dq += z g0^H, dz = q g0
    let mut gz = vec![C64::new(0.0, 0.0); n * d];
    for j in 0..n {
        let gj = &g0[j * nc..(j + 1) * nc];
        for aa in 0..d {
            let zja = z[j * d + aa];
            let qa = &q.data[aa * nc..(aa + 1) * nc];
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..nc {
                gq.data[aa * nc + c] += zja * gj[c].conj();
                acc += qa[c] * gj[c];
            }
            gz[j * d + aa] = acc;
        }
    }
    // z_j = sum_i a_ij v_i: dv_i += sum_j a_ij dz_j, da_ij = Re<v_i, dz_j>
    let mut gv = vec![C64::new(0.0, 0.0); n * d];
    let mut gs = vec![0.0; n * n];
    for i in 0..n {
        let vi = &v[i * d..(i + 1) * d];
        for j in 0..n {
            let gzj = &gz[j * d..(j + 1) * d];
            let w = a[i * n + j];
            let mut ga = 0.0;
            for aa in 0..d {
                gv[i * d + aa] += gzj[aa] * w;
                ga += vi[aa].re * gzj[aa].re + vi[aa].im * gzj[aa].im;
            }
            gs[i * n + j] = ga;
        }
    }
    // column softmax backward
    for j in 0..n {
        let mut dotp = 0.0;
        for i in 0..n {
            dotp += a[i * n + j] * gs[i * n + j];
        }
        for i in 0..n {
            gs[i * n + j] = a[i * n + j] * (gs[i * n + j] - dotp);
        }
    }
    let mut gt = vec![0.0; table_len];
    for (g, &r) in gs.iter().zip(rel) {
        gt[r] += g;
    }
    // S = Re(v^H v) + B: dv_i += sum_j (gs_ij + gs_ji) v_j
    for i in 0..n {
        for j in 0..n {
            let w = gs[i * n + j] + gs[j * n + i];
            if w == 0.0 {
                continue;
            }
            for aa in 0..d {
                let vj = v[j * d + aa];
                gv[i * d + aa] += vj * w;
            }
        }
    }
    // v = q x: dq += dv x^H, dx = q^H dv
    for i in 0..n {
        let xi = &x[i * nc..(i + 1) * nc];
        let gvi = &gv[i * d..(i + 1) * d];
        let gxi = &mut gx[i * nc..(i + 1) * nc];
        for aa in 0..d {
            let qa = &q.data[aa * nc..(aa + 1) * nc];
            for c in 0..nc {
                gq.data[aa * nc + c] += gvi[aa] * xi[c].conj();
                gxi[c] += qa[c].conj() * gvi[aa];
            }
        }
    }
    (gq, gt)
}
