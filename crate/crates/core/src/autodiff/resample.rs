use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source taps `(i0, w0, i1, w1)` of 2x linear upsampling along one axis,
/// half-pixel centers, source coordinate clamped at the low edge.
fn linear_taps(n: usize) -> Vec<(usize, f64, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            let frac = src - i0 as f64;
            (i0, 1.0 - frac, i1, frac)
        })
        .collect()
}

fn chw(g: &Graph, x: Var, op: &str) -> Result<(usize, usize, usize)> {
    match *g.shape(x) {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::shape(format!("{op} expects [C,H,W], got {s:?}"))),
    }
}

impl Graph {
    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = chw(self, x, "upsample_nearest2")?;
        let src = self.data(x);
        let mut out = Vec::with_capacity(c * 4 * h * w);
        for ch in 0..c {
            for i in 0..2 * h {
                for j in 0..2 * w {
                    out.push(src[(ch * h + i / 2) * w + j / 2]);
                }
            }
        }
        let v = Tensor::from_parts(vec![c, 2 * h, 2 * w], out);
        Ok(self.push(Op::UpsampleNearest2(x), v))
    }

    /// 2x bilinear upsampling with half-pixel alignment.
    pub fn upsample_bilinear2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = chw(self, x, "upsample_bilinear2")?;
        let (ty, tx) = (linear_taps(h), linear_taps(w));
        let src = self.data(x);
        let mut out = Vec::with_capacity(c * 4 * h * w);
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for &(y0, wy0, y1, wy1) in &ty {
                for &(x0, wx0, x1, wx1) in &tx {
                    let v = wy0 * (wx0 * plane[y0 * w + x0] + wx1 * plane[y0 * w + x1])
                        + wy1 * (wx0 * plane[y1 * w + x0] + wx1 * plane[y1 * w + x1]);
                    out.push(v);
                }
            }
        }
        let v = Tensor::from_parts(vec![c, 2 * h, 2 * w], out);
        Ok(self.push(Op::UpsampleBilinear2(x), v))
    }
}

pub(super) fn nearest2_backward(acc: &mut Accumulator<'_>, x: Var, dy: &[f64]) {
    let s = acc.graph().shape(x);
    let (c, h, w) = (s[0], s[1], s[2]);
    acc.add_with(x, |g| {
        for ch in 0..c {
            for i in 0..2 * h {
                for j in 0..2 * w {
                    g[(ch * h + i / 2) * w + j / 2] += dy[(ch * 2 * h + i) * 2 * w + j];
                }
            }
        }
    });
}

pub(super) fn bilinear2_backward(acc: &mut Accumulator<'_>, x: Var, dy: &[f64]) {
    let s = acc.graph().shape(x);
    let (c, h, w) = (s[0], s[1], s[2]);
    let (ty, tx) = (linear_taps(h), linear_taps(w));
    acc.add_with(x, |g| {
        let mut k = 0;
        for ch in 0..c {
            let plane = &mut g[ch * h * w..(ch + 1) * h * w];
            for &(y0, wy0, y1, wy1) in &ty {
                for &(x0, wx0, x1, wx1) in &tx {
                    let d = dy[k];
                    k += 1;
                    plane[y0 * w + x0] += wy0 * wx0 * d;
                    plane[y0 * w + x1] += wy0 * wx1 * d;
                    plane[y1 * w + x0] += wy1 * wx0 * d;
                    plane[y1 * w + x1] += wy1 * wx1 * d;
                }
            }
        }
    });
}
