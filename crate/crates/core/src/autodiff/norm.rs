use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-group statistics of an instance normalization.
///
/// `std = sqrt(max(var, eps))` with the biased variance, so any group whose
/// variance exceeds `eps` is standardized exactly, and a constant group maps
/// to zeros with `std = sqrt(eps)`.
#[derive(Clone, Debug)]
pub(crate) struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Group variance fell at or below `eps`; `std` is the constant floor.
    pub clamped: Vec<bool>,
    pub group_len: usize,
}

impl Graph {
    /// Normalizes every `[H, W]` plane of `x` (shape `[..., H, W]`) to zero
    /// mean and unit variance. Returns `(y, std)` where `std` holds one value
    /// per plane with the leading shape of `x` (`[1]` for a single plane).
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<(Var, Var)> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(Error::shape(format!("instance_norm needs [..., H, W], got {s:?}")));
        }
        let group_len = s[s.len() - 2] * s[s.len() - 1];
        if group_len < 2 {
            return Err(Error::shape(format!("instance_norm needs H*W >= 2, got {s:?}")));
        }
        let stats = instance_stats(self.data(x), group_len, eps);
        let y: Vec<f64> = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, v)| (v - stats.mean[i / group_len]) / stats.std[i / group_len])
            .collect();
        let mut std_shape = s[..s.len() - 2].to_vec();
        if std_shape.is_empty() {
            std_shape.push(1);
        }
        let std_value = Tensor::from_parts(std_shape, stats.std.clone());
        let y_value = Tensor::from_parts(s, y);
        let y = self.push(Op::InstanceNorm { x, stats: stats.clone() }, y_value);
        let std = self.push(Op::InstanceStd { x, stats }, std_value);
        Ok((y, std))
    }

    /// Standardizes each row of a matrix with `sqrt(var + eps)`; no affine part.
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::shape(format!("layer_norm_rows needs a matrix, got {s:?}")));
        }
        let n = s[1];
        let mut out = Vec::with_capacity(s[0] * n);
        let mut inv_std = Vec::with_capacity(s[0]);
        for row in self.data(x).chunks_exact(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            out.extend(row.iter().map(|v| (v - mean) * inv));
            inv_std.push(inv);
        }
        let v = Tensor::from_parts(s, out);
        Ok(self.push(Op::LayerNormRows { x, inv_std }, v))
    }
}

fn instance_stats(data: &[f64], group_len: usize, eps: f64) -> NormStats {
    let groups = data.len() / group_len;
    let mut stats = NormStats {
        mean: Vec::with_capacity(groups),
        std: Vec::with_capacity(groups),
        clamped: Vec::with_capacity(groups),
        group_len,
    };
    for g in data.chunks_exact(group_len) {
        let mean = g.iter().sum::<f64>() / group_len as f64;
        let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group_len as f64;
        let clamped = var <= eps;
        stats.mean.push(mean);
        stats.std.push(if clamped { eps.sqrt() } else { var.sqrt() });
        stats.clamped.push(clamped);
    }
    stats
}

/// `dx = (dy - mean(dy) - y * mean(dy * y)) / std` per group; the last term
/// drops out when the std is the constant floor.
fn standardize_backward(g: &mut [f64], y: &[f64], dy: &[f64], n: usize, inv_std: impl Fn(usize) -> (f64, bool)) {
    for (k, ((gg, yg), dg)) in g.chunks_exact_mut(n).zip(y.chunks_exact(n)).zip(dy.chunks_exact(n)).enumerate() {
        let (inv, tracks_var) = inv_std(k);
        let mean_dy = dg.iter().sum::<f64>() / n as f64;
        let mean_dyy = if tracks_var {
            dg.iter().zip(yg).map(|(d, y)| d * y).sum::<f64>() / n as f64
        } else {
            0.0
        };
        for i in 0..n {
            gg[i] += inv * (dg[i] - mean_dy - yg[i] * mean_dyy);
        }
    }
}

pub(super) fn layer_norm_backward(acc: &mut Accumulator<'_>, x: Var, y: &[f64], inv_std: &[f64], dy: &[f64]) {
    let n = acc.graph().shape(x)[1];
    acc.add_with(x, |g| standardize_backward(g, y, dy, n, |k| (inv_std[k], true)));
}

pub(super) fn instance_norm_backward(acc: &mut Accumulator<'_>, x: Var, y: &[f64], stats: &NormStats, dy: &[f64]) {
    acc.add_with(x, |g| {
        standardize_backward(g, y, dy, stats.group_len, |k| (1.0 / stats.std[k], !stats.clamped[k]))
    });
}

/// d std / dx_i = (x_i - mean) / (n * std) for unclamped groups.
pub(super) fn instance_std_backward(acc: &mut Accumulator<'_>, x: Var, stats: &NormStats, dy: &[f64]) {
    let xv = acc.graph().data(x);
    let n = stats.group_len;
    acc.add_with(x, |g| {
        for (k, (gg, xg)) in g.chunks_exact_mut(n).zip(xv.chunks_exact(n)).enumerate() {
            if stats.clamped[k] {
                continue;
            }
            let scale = dy[k] / (n as f64 * stats.std[k]);
            for i in 0..n {
                gg[i] += scale * (xg[i] - stats.mean[k]);
            }
        }
    });
}
