//! Functional pieces of the MAGA query path and attention.

use crate::autodiff::{ActiveSiteMask, Graph, Var};
use crate::error::{Error, Result};

use super::config::Branch;

/// `[N, D]` tokens to a `[D, Hp, Wp]` map; token `i` lands at
/// `(i / Wp, i % Wp)`.
pub fn tokens_to_map(g: &mut Graph, tokens: Var, hp: usize, wp: usize) -> Result<Var> {
    let s = g.shape(tokens).to_vec();
    if s.len() != 2 || s[0] != hp * wp {
        return Err(Error::shape(format!("tokens {s:?} do not tile a {hp}x{wp} grid")));
    }
    let t = g.transpose(tokens)?;
    g.reshape(t, &[s[1], hp, wp])
}

/// Inverse of [`tokens_to_map`].
pub fn map_to_tokens(g: &mut Graph, map: Var) -> Result<Var> {
    let s = g.shape(map).to_vec();
    if s.len() != 3 {
        return Err(Error::shape(format!("feature map must be [D, Hp, Wp], got {s:?}")));
    }
    let flat = g.reshape(map, &[s[0], s[1] * s[2]])?;
    g.transpose(flat)
}

/// Depthwise kernels of one branch, in application order. Horizontal stages
/// are `[C, 1, 1, k]`, vertical stages `[C, 1, k, 1]`.
#[derive(Clone, Debug)]
pub struct BranchKernels {
    pub branch: Branch,
    pub stages: Vec<Var>,
}

/// Per-branch feature maps, all `[C, Hp, Wp]`, in canonical branch order.
#[derive(Clone, Debug)]
pub struct BranchStack {
    pub branches: Vec<Branch>,
    pub maps: Vec<Var>,
}

/// Runs each configured branch over `q` (`[C, Hp, Wp]`) as depthwise
/// submanifold convolutions restricted to `mask`.
pub fn tetris_branches(g: &mut Graph, q: Var, kernels: &[BranchKernels], mask: &ActiveSiteMask) -> Result<BranchStack> {
    if kernels.is_empty() {
        return Err(Error::config("at least one branch is required"));
    }
    let channels = g.shape(q)[0];
    let mut stack = BranchStack { branches: Vec::new(), maps: Vec::new() };
    for bk in kernels {
        let orientations = bk.branch.stages();
        if orientations.len() != bk.stages.len() {
            return Err(Error::config(format!(
                "branch {} needs {} kernels, got {}",
                bk.branch.name(),
                orientations.len(),
                bk.stages.len()
            )));
        }
        let mut cur = q;
        for (&horizontal, &kernel) in orientations.iter().zip(&bk.stages) {
            let ks = g.shape(kernel);
            let oriented = if horizontal { ks[2] == 1 } else { ks[3] == 1 };
            if ks.len() != 4 || ks[0] != channels || ks[1] != 1 || !oriented {
                return Err(Error::shape(format!(
                    "branch {} kernel {ks:?} is not a depthwise {} kernel for {channels} channels",
                    bk.branch.name(),
                    if horizontal { "1 x k" } else { "k x 1" }
                )));
            }
            cur = g.conv2d_sparse_grouped(cur, kernel, mask, channels)?;
        }
        stack.branches.push(bk.branch);
        stack.maps.push(cur);
    }
    Ok(stack)
}

/// Intermediate results of [`morpho_reweight`].
#[derive(Clone, Debug)]
pub struct MorphoOutput {
    /// Branch-wise maximum of the reweighted maps, `[C, Hp, Wp]`.
    pub fused: Var,
    /// Sigmoid reweighting factors, one per (branch, channel), `[B * C]`.
    pub weights: Var,
    /// Instance-normalized branch maps, `[B, C, Hp, Wp]`.
    pub normalized: Var,
    /// Per-(branch, channel) standard deviations, `[B, C]`.
    pub std: Var,
    /// Winning branch position for every output element.
    pub winners: Vec<usize>,
}

/// Instance-normalizes each branch, turns the per-(branch, channel) standard
/// deviations into sigmoid weights through a same-padded 1-D convolution,
/// scales the normalized maps by them and keeps the maximum over branches.
pub fn morpho_reweight(g: &mut Graph, stack: &BranchStack, reweight_kernel: Var, eps: f64) -> Result<MorphoOutput> {
    let first = *stack.maps.first().ok_or_else(|| Error::config("empty branch stack"))?;
    let s = g.shape(first).to_vec();
    let (c, h, w) = (s[0], s[1], s[2]);
    let nb = stack.maps.len();
    let mut lifted = Vec::with_capacity(nb);
    for &m in &stack.maps {
        if g.shape(m) != s.as_slice() {
            return Err(Error::shape(format!("branch maps differ: {:?} vs {s:?}", g.shape(m))));
        }
        lifted.push(g.reshape(m, &[1, c, h, w])?);
    }
    let stacked = if nb == 1 { lifted[0] } else { g.concat(&lifted, 0)? };
    let (normalized, std) = g.instance_norm(stacked, eps)?;
    let descriptors = g.reshape(std, &[nb * c])?;
    let mixed = g.conv1d_channels(descriptors, reweight_kernel)?;
    let weights = g.sigmoid(mixed);
    let flat = g.reshape(normalized, &[nb * c, h, w])?;
    let scaled = g.mul_channel(flat, weights)?;
    let scaled = g.reshape(scaled, &[nb, c, h, w])?;
    let (fused, winners) = g.max_over_axis(scaled, 0)?;
    Ok(MorphoOutput { fused, weights, normalized, std, winners })
}

/// Enriched query: elementwise product of the fused morphology map with the
/// query map it came from.
pub fn maga_gate(g: &mut Graph, fused: Var, q: Var) -> Result<Var> {
    g.mul(fused, q)
}

/// Multi-head scaled dot-product attention over `[N, D]` queries, keys and
/// values. Each head sees `D / heads` columns and scales logits by
/// `1 / sqrt(D / heads)`. Returns the concatenated head outputs (before any
/// output projection) and each head's `[N, N]` attention matrix.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> Result<(Var, Vec<Var>)> {
    let s = g.shape(q).to_vec();
    if s.len() != 2 || g.shape(k) != s.as_slice() || g.shape(v) != s.as_slice() {
        return Err(Error::shape(format!(
            "attention needs equal [N, D] operands, got {s:?}, {:?}, {:?}",
            g.shape(k),
            g.shape(v)
        )));
    }
    let d = s[1];
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!("{heads} heads do not divide embedding dim {d}")));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut maps = Vec::with_capacity(heads);
    for head in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.narrow(q, 1, head * dh, dh)?,
                g.narrow(k, 1, head * dh, dh)?,
                g.narrow(v, 1, head * dh, dh)?,
            )
        };
        let kt = g.transpose(kh)?;
        let logits = g.matmul(qh, kt)?;
        let logits = g.scale(logits, scale);
        let a = g.softmax_rows(logits)?;
        outs.push(g.matmul(a, vh)?);
        maps.push(a);
    }
    let out = if heads == 1 { outs[0] } else { g.concat(&outs, 1)? };
    Ok((out, maps))
}
