use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stride, zero padding and channel grouping of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub fn new(stride: usize, pad: usize) -> Self {
        Self { stride, pad_h: pad, pad_w: pad, groups: 1 }
    }

    /// Stride 1 with the padding that preserves spatial size for the odd
    /// kernel in `weight_shape` (`[O, C/groups, kh, kw]`).
    pub fn same(weight_shape: &[usize], groups: usize) -> Self {
        Self { stride: 1, pad_h: weight_shape[2] / 2, pad_w: weight_shape[3] / 2, groups }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

/// Set of active spatial sites for submanifold convolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSiteMask {
    height: usize,
    width: usize,
    active: Vec<bool>,
}

impl ActiveSiteMask {
    pub fn all_active(height: usize, width: usize) -> Self {
        Self { height, width, active: vec![true; height * width] }
    }

    pub fn all_inactive(height: usize, width: usize) -> Self {
        Self { height, width, active: vec![false; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let active = (0..height * width).map(|k| f(k / width, k % width)).collect();
        Self { height, width, active }
    }

    /// Sites where any channel of a `[C, H, W]` tensor is non-zero.
    pub fn nonzero(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 {
            return Err(Error::shape(format!("active-site mask needs [C, H, W], got {s:?}")));
        }
        let plane = s[1] * s[2];
        Ok(Self::from_fn(s[1], s[2], |i, j| {
            (0..s[0]).any(|c| t.data()[c * plane + i * s[2] + j] != 0.0)
        }))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[i * self.width + j]
    }

    pub fn count_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

struct ConvDims {
    h: usize,
    w: usize,
    o: usize,
    cg: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_dims(xs: &[usize], ws: &[usize], geom: &ConvGeom) -> Result<ConvDims> {
    if xs.len() != 3 || ws.len() != 4 {
        return Err(Error::shape(format!("conv2d expects x [C,H,W] and w [O,C/g,kh,kw], got {xs:?}, {ws:?}")));
    }
    let (c, h, w) = (xs[0], xs[1], xs[2]);
    let (o, cg, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let g = geom.groups;
    if g == 0 || c % g != 0 || o % g != 0 || cg != c / g {
        return Err(Error::shape(format!("conv2d: groups={g} incompatible with x {xs:?} and w {ws:?}")));
    }
    if geom.stride == 0 {
        return Err(Error::config("conv2d stride must be positive"));
    }
    let (hp, wp) = (h + 2 * geom.pad_h, w + 2 * geom.pad_w);
    if hp < kh || wp < kw {
        return Err(Error::shape(format!("conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")));
    }
    let oh = (hp - kh) / geom.stride + 1;
    let ow = (wp - kw) / geom.stride + 1;
    Ok(ConvDims { h, w, o, cg, kh, kw, oh, ow })
}

/// Visits every (output, weight, input) index triple in the fixed summation
/// order: output row-major, then input channel, then kernel row-major.
/// Inactive output sites and inactive input sites are skipped.
#[inline]
fn for_each_tap(d: &ConvDims, geom: &ConvGeom, mask: Option<&ActiveSiteMask>, mut f: impl FnMut(usize, usize, usize)) {
    let per_group = d.o / geom.groups;
    for o in 0..d.o {
        let c0 = (o / per_group) * d.cg;
        for i in 0..d.oh {
            for j in 0..d.ow {
                if let Some(m) = mask {
                    if !m.is_active(i, j) {
                        continue;
                    }
                }
                let out_idx = (o * d.oh + i) * d.ow + j;
                for cc in 0..d.cg {
                    let c = c0 + cc;
                    for a in 0..d.kh {
                        let Some(ii) = (i * geom.stride + a).checked_sub(geom.pad_h).filter(|&v| v < d.h) else {
                            continue;
                        };
                        for b in 0..d.kw {
                            let Some(jj) = (j * geom.stride + b).checked_sub(geom.pad_w).filter(|&v| v < d.w)
                            else {
                                continue;
                            };
                            if let Some(m) = mask {
                                if !m.is_active(ii, jj) {
                                    continue;
                                }
                            }
                            let w_idx = ((o * d.cg + cc) * d.kh + a) * d.kw + b;
                            let x_idx = (c * d.h + ii) * d.w + jj;
                            f(out_idx, w_idx, x_idx);
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    /// Dense 2-D cross-correlation, `x [C,H,W]`, `w [O,C/groups,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let d = conv_dims(self.shape(x), self.shape(w), &geom)?;
        let (xv, wv) = (self.data(x), self.data(w));
        let mut out = vec![0.0; d.o * d.oh * d.ow];
        for_each_tap(&d, &geom, None, |oi, wi, xi| out[oi] += wv[wi] * xv[xi]);
        let v = Tensor::from_parts(vec![d.o, d.oh, d.ow], out);
        Ok(self.push(Op::Conv2d { x, w, geom }, v))
    }

    /// Submanifold convolution with a full (channel-mixing) kernel.
    pub fn conv2d_sparse(&mut self, x: Var, w: Var, mask: &ActiveSiteMask) -> Result<Var> {
        self.conv2d_sparse_grouped(x, w, mask, 1)
    }

    /// Submanifold convolution: stride 1, same padding, odd kernel extents.
    /// Output at an inactive site is 0 and only active input sites contribute,
    /// so an all-active mask reproduces the dense same-padded convolution.
    /// `groups == C` with `w [C,1,kh,kw]` gives a depthwise convolution.
    pub fn conv2d_sparse_grouped(&mut self, x: Var, w: Var, mask: &ActiveSiteMask, groups: usize) -> Result<Var> {
        let ws = self.shape(w);
        if ws.len() != 4 {
            return Err(Error::shape(format!("conv2d_sparse weight must be [O,C/g,kh,kw], got {ws:?}")));
        }
        if ws[2] % 2 == 0 || ws[3] % 2 == 0 {
            return Err(Error::config(format!("conv2d_sparse needs odd kernel extents, got {}x{}", ws[2], ws[3])));
        }
        let geom = ConvGeom::same(ws, groups);
        let d = conv_dims(self.shape(x), ws, &geom)?;
        if mask.height != d.h || mask.width != d.w {
            return Err(Error::shape(format!(
                "active-site mask {}x{} does not match input {}x{}",
                mask.height, mask.width, d.h, d.w
            )));
        }
        let (xv, wv) = (self.data(x), self.data(w));
        let mut out = vec![0.0; d.o * d.oh * d.ow];
        for_each_tap(&d, &geom, Some(mask), |oi, wi, xi| out[oi] += wv[wi] * xv[xi]);
        let v = Tensor::from_parts(vec![d.o, d.oh, d.ow], out);
        Ok(self.push(Op::Conv2dSparse { x, w, mask: mask.clone(), groups }, v))
    }

    /// Same-padded 1-D cross-correlation of a sequence `x [L]` with an odd
    /// kernel `w [kc]`.
    pub fn conv1d_channels(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 1 || ws.len() != 1 {
            return Err(Error::shape(format!("conv1d_channels expects [L] and [kc], got {xs:?}, {ws:?}")));
        }
        if ws[0] % 2 == 0 {
            return Err(Error::config(format!("conv1d kernel size must be odd, got {}", ws[0])));
        }
        let out = conv1d_raw(self.data(x), self.data(w));
        let v = Tensor::from_parts(xs.to_vec(), out);
        Ok(self.push(Op::Conv1d { x, w }, v))
    }
}

fn conv1d_taps(len: usize, kc: usize, mut f: impl FnMut(usize, usize, usize)) {
    let half = kc / 2;
    for i in 0..len {
        for t in 0..kc {
            if let Some(src) = (i + t).checked_sub(half).filter(|&s| s < len) {
                f(i, t, src);
            }
        }
    }
}

fn conv1d_raw(x: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    conv1d_taps(x.len(), w.len(), |i, t, src| out[i] += w[t] * x[src]);
    out
}

pub(super) fn conv2d_backward(
    acc: &mut Accumulator<'_>,
    x: Var,
    w: Var,
    geom: &ConvGeom,
    mask: Option<&ActiveSiteMask>,
    dy: &[f64],
) {
    let graph = acc.graph();
    let d = conv_dims(graph.shape(x), graph.shape(w), geom).expect("validated in forward");
    let (xv, wv) = (graph.data(x), graph.data(w));
    acc.add_with(x, |g| for_each_tap(&d, geom, mask, |oi, wi, xi| g[xi] += wv[wi] * dy[oi]));
    acc.add_with(w, |g| for_each_tap(&d, geom, mask, |oi, wi, xi| g[wi] += xv[xi] * dy[oi]));
}

pub(super) fn conv1d_backward(acc: &mut Accumulator<'_>, x: Var, w: Var, dy: &[f64]) {
    let graph = acc.graph();
    let (xv, wv) = (graph.data(x), graph.data(w));
    acc.add_with(x, |g| conv1d_taps(xv.len(), wv.len(), |i, t, src| g[src] += wv[t] * dy[i]));
    acc.add_with(w, |g| conv1d_taps(xv.len(), wv.len(), |i, t, src| g[t] += xv[src] * dy[i]));
}
