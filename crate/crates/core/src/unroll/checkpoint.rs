//! Checkpoint directories: one CKS file per tensor plus `manifest.txt`.
//!
//! Scalars are written with Rust's shortest round-trip float formatting, so a
//! reload reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use super::{CascadeParams, StageParams};
use crate::attention::{HeadParams, LineAxis, MssaParams, RelPosBias, WindowMode, WindowPlan};
use crate::ctensor::{CArray, CMatrix, C64};
use crate::data::{parse_manifest, read_array, write_array};
use crate::error::{Error, Result};

pub fn save_checkpoint(dir: impl AsRef<Path>, params: &CascadeParams) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut m = String::from("# gpiwt checkpoint\n");
    m += &format!("stages = {}\nhard_dc = {}\n", params.len(), params.hard_dc);
    if let Some((n1, n2, nc)) = params.dims() {
        m += &format!("n1 = {n1}\nn2 = {n2}\nnc = {nc}\n");
    }
    for (t, s) in params.stages().iter().enumerate() {
        let (wr, wc) = s.plan.window_shape();
        m += &format!(
            "stage.{t}.mode = {}\nstage.{t}.window = {wr}x{wc}\nstage.{t}.mu = {:?}\nstage.{t}.lambda1 = {:?}\nstage.{t}.lambda2 = {:?}\nstage.{t}.gamma = {:?}\nstage.{t}.heads = {}\n",
            s.plan.mode(),
            s.mu,
            s.lambda1,
            s.lambda2,
            s.mssa.gamma,
            s.mssa.heads.len()
        );
        for (h, (head, bias)) in s.mssa.heads.iter().zip(&s.mssa.biases).enumerate() {
            let qname = format!("stage{t}_head{h}_q.cks");
            let bname = format!("stage{t}_head{h}_bias.cks");
            write_array(dir.join(&qname), &CArray::from_vec(&[head.q.rows, head.q.cols], head.q.data.clone())?)?;
            write_array(dir.join(&bname), &CArray::from_real(&[bias.table.len()], &bias.table)?)?;
            m += &format!(
                "stage.{t}.head.{h}.q = {qname} {}x{}\nstage.{t}.head.{h}.bias = {bname} {}\n",
                head.q.rows,
                head.q.cols,
                bias.table.len()
            );
        }
    }
    fs::write(dir.join("manifest.txt"), m)?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<CascadeParams> {
    let dir = dir.as_ref();
    let kv = parse_manifest(&fs::read_to_string(dir.join("manifest.txt"))?)?;
    let get = |k: &str| {
        kv.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("checkpoint manifest lacks '{k}'")))
    };
    fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::Format(format!("bad value '{v}' for '{k}'")))
    }
    let num = |k: &str| -> Result<usize> { parse(k, get(k)?) };
    let real = |k: &str| -> Result<f64> { parse(k, get(k)?) };

    let count = num("stages")?;
    let hard_dc: bool = parse("hard_dc", get("hard_dc")?)?;
    if count == 0 {
        let mut p = CascadeParams::new(Vec::new())?;
        p.hard_dc = hard_dc;
        return Ok(p);
    }
    let (n1, n2, nc) = (num("n1")?, num("n2")?, num("nc")?);
    let mut stages = Vec::with_capacity(count);
    for t in 0..count {
        let key = |s: &str| format!("stage.{t}.{s}");
        let mode: WindowMode = get(&key("mode"))?.parse()?;
        let window = get(&key("window"))?;
        let (wr, wc) = window
            .split_once('x')
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
            .ok_or_else(|| Error::Format(format!("bad window '{window}'")))?;
        let plan = match mode {
            WindowMode::Square => WindowPlan::square(n1, n2, wr)?,
            WindowMode::Linear if wr == 1 && wc == n2 => WindowPlan::linear(n1, n2, LineAxis::Rows)?,
            WindowMode::Linear => WindowPlan::linear(n1, n2, LineAxis::Cols)?,
        };
        if plan.window_shape() != (wr, wc) {
            return Err(Error::Format(format!("stage {t}: window {window} does not fit grid {n1}x{n2}")));
        }
        let nh = num(&key("heads"))?;
        let mut heads = Vec::with_capacity(nh);
        let mut biases = Vec::with_capacity(nh);
        for h in 0..nh {
            let file = |s: &str| -> Result<CArray> {
                let entry = get(&key(&format!("head.{h}.{s}")))?;
                let name = entry.split_whitespace().next().unwrap_or("");
                read_array(dir.join(name))
            };
            let q = file("q")?;
            let (rows, cols) = match *q.shape() {
                [r, c] if c == nc => (r, c),
                _ => return Err(Error::shape(&[0, nc], q.shape())),
            };
            heads.push(HeadParams {
                q: CMatrix::from_vec(rows, cols, q.into_vec())?,
            });
            let b = file("bias")?;
            if b.data().iter().any(|z| z.im != 0.0) {
                return Err(Error::Format("bias table must be real".into()));
            }
            biases.push(RelPosBias {
                table: b.data().iter().map(|z: &C64| z.re).collect(),
                window: plan.window_shape(),
            });
        }
        stages.push(StageParams {
            mu: real(&key("mu"))?,
            lambda1: real(&key("lambda1"))?,
            lambda2: real(&key("lambda2"))?,
            mssa: MssaParams {
                heads,
                biases,
                gamma: real(&key("gamma"))?,
            },
            plan,
        });
    }
    let mut p = CascadeParams::new(stages)?;
    p.hard_dc = hard_dc;
    Ok(p)
}
