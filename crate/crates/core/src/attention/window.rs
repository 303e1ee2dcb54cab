use std::fmt;
use std::str::FromStr;

use crate::ctensor::CMatrix;
use crate::data::KSpace;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    Square,
    Linear,
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::Square => "square",
            WindowMode::Linear => "linear",
        })
    }
}

impl FromStr for WindowMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(WindowMode::Square),
            "linear" => Ok(WindowMode::Linear),
            _ => Err(Error::InvalidArgument(format!("unknown window mode '{s}'"))),
        }
    }
}

/// Orientation of linear windows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LineAxis {
    /// Each window is one full row (`1 x n2`).
    #[default]
    Rows,
    /// Each window is one full column (`n1 x 1`).
    Cols,
}

impl fmt::Display for LineAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LineAxis::Rows => "rows",
            LineAxis::Cols => "cols",
        })
    }
}

impl FromStr for LineAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(LineAxis::Rows),
            "cols" => Ok(LineAxis::Cols),
            _ => Err(Error::InvalidArgument(format!("unknown line axis '{s}'"))),
        }
    }
}

/// Non-overlapping tiling of an `n1 x n2` grid into equally shaped windows.
///
/// Every window has `win_rows x win_cols` tokens listed row-major in local
/// coordinates; `windows[w][t]` is the flat grid position `r * n2 + c` of
/// token `t` of window `w`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowPlan {
    mode: WindowMode,
    n1: usize,
    n2: usize,
    win_rows: usize,
    win_cols: usize,
    windows: Vec<Vec<usize>>,
    rel_index: Vec<usize>,
}

impl WindowPlan {
    pub fn square(n1: usize, n2: usize, w: usize) -> Result<Self> {
        if w == 0 || n1 % w != 0 || n2 % w != 0 {
            return Err(Error::InvalidArgument(format!(
                "square window {w} does not divide grid {n1}x{n2}"
            )));
        }
        Ok(Self::tiled(WindowMode::Square, n1, n2, w, w))
    }

    pub fn linear(n1: usize, n2: usize, axis: LineAxis) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        Ok(match axis {
            LineAxis::Rows => Self::tiled(WindowMode::Linear, n1, n2, 1, n2),
            LineAxis::Cols => Self::tiled(WindowMode::Linear, n1, n2, n1, 1),
        })
    }

    /// One window holding the whole grid.
    pub fn global(n1: usize, n2: usize) -> Self {
        Self::tiled(WindowMode::Square, n1, n2, n1, n2)
    }

    fn tiled(mode: WindowMode, n1: usize, n2: usize, wr: usize, wc: usize) -> Self {
        let mut windows = Vec::with_capacity((n1 / wr) * (n2 / wc));
        for br in 0..n1 / wr {
            for bc in 0..n2 / wc {
                let mut toks = Vec::with_capacity(wr * wc);
                for i in 0..wr {
                    for j in 0..wc {
                        toks.push((br * wr + i) * n2 + bc * wc + j);
                    }
                }
                windows.push(toks);
            }
        }
        let n = wr * wc;
        let mut rel_index = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let dr = (a / wc) as isize - (b / wc) as isize;
                let dc = (a % wc) as isize - (b % wc) as isize;
                let idx = (dr + wr as isize - 1) * (2 * wc as isize - 1) + (dc + wc as isize - 1);
                rel_index.push(idx as usize);
            }
        }
        WindowPlan {
            mode,
            n1,
            n2,
            win_rows: wr,
            win_cols: wc,
            windows,
            rel_index,
        }
    }

    pub fn mode(&self) -> WindowMode {
        self.mode
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn window_shape(&self) -> (usize, usize) {
        (self.win_rows, self.win_cols)
    }

    pub fn tokens_per_window(&self) -> usize {
        self.win_rows * self.win_cols
    }

    pub fn windows(&self) -> &[Vec<usize>] {
        &self.windows
    }

    /// Length of a relative-position table for this geometry.
    pub fn bias_table_len(&self) -> usize {
        (2 * self.win_rows - 1) * (2 * self.win_cols - 1)
    }

    /// Table index of the offset between tokens `a` and `b`, i.e.
    /// `(dr + h - 1) * (2w - 1) + (dc + w - 1)` with `(dr, dc) = pos_a - pos_b`.
    #[inline]
    pub fn rel_index(&self, a: usize, b: usize) -> usize {
        self.rel_index[a * self.tokens_per_window() + b]
    }

    pub(crate) fn rel_index_map(&self) -> &[usize] {
        &self.rel_index
    }

    pub fn check_kspace(&self, k: &KSpace) -> Result<()> {
        if (k.n1(), k.n2()) != (self.n1, self.n2) {
            return Err(Error::shape(&[self.n1, self.n2], &[k.n1(), k.n2()]));
        }
        Ok(())
    }
}

/// Token matrices (`nc x n_tokens`, column `j` is the coil vector of token
/// `j`), one per window.
pub fn partition(k: &KSpace, plan: &WindowPlan) -> Result<Vec<CMatrix>> {
    plan.check_kspace(k)?;
    let nc = k.nc();
    Ok(plan
        .windows()
        .iter()
        .map(|toks| {
            CMatrix::from_fn(nc, toks.len(), |c, t| k.data()[toks[t] * nc + c])
        })
        .collect())
}

pub fn unpartition(windows: &[CMatrix], plan: &WindowPlan, nc: usize) -> Result<KSpace> {
    let (n1, n2) = plan.grid();
    if windows.len() != plan.windows().len() {
        return Err(Error::shape(&[plan.windows().len()], &[windows.len()]));
    }
    let mut k = KSpace::zeros(n1, n2, nc);
    let d = k.data_mut();
    for (m, toks) in windows.iter().zip(plan.windows()) {
        if (m.rows, m.cols) != (nc, toks.len()) {
            return Err(Error::shape(&[nc, toks.len()], &[m.rows, m.cols]));
        }
        for (t, &pos) in toks.iter().enumerate() {
            for c in 0..nc {
                d[pos * nc + c] = m.get(c, t);
            }
        }
    }
    Ok(k)
}
