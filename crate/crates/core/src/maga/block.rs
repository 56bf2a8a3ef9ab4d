use crate::autodiff::{ActiveSiteMask, Graph, Var};
use crate::error::{Error, Result};
use crate::optim::{Bound, ParamId, ParamRole, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

use super::config::{Branch, MagaConfig};
use super::ops::{self, BranchKernels, MorphoOutput};

/// Standard deviation of the normal initializer for projections.
pub const INIT_STD: f64 = 0.02;

/// Parameters of the query-side morphology path.
#[derive(Clone, Debug)]
pub struct MorphoParams {
    pub branches: Vec<(Branch, Vec<ParamId>)>,
    pub reweight: ParamId,
}

/// Parameters of one pre-norm transformer block. `morpho` is `None` for a
/// plain self-attention block.
#[derive(Clone, Debug)]
pub struct MagaBlockParams {
    pub ln1_scale: ParamId,
    pub ln1_shift: ParamId,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub ln2_scale: ParamId,
    pub ln2_shift: ParamId,
    pub mlp_in: ParamId,
    pub mlp_in_bias: ParamId,
    pub mlp_out: ParamId,
    pub mlp_out_bias: ParamId,
    pub morpho: Option<MorphoParams>,
}

pub(crate) fn normal(rng: &mut SplitMix64, shape: &[usize], std: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.normal(0.0, std))
}

/// Depthwise kernel with a single 1 at the center of every channel.
pub fn delta_kernel(channels: usize, kh: usize, kw: usize) -> Tensor {
    let per = kh * kw;
    Tensor::from_fn(&[channels, 1, kh, kw], |i| if i % per == per / 2 { 1.0 } else { 0.0 })
}

impl MagaBlockParams {
    /// Registers a block's parameters under `prefix`. Projections and MLP
    /// weights are drawn from N(0, 0.02^2); directional kernels start as
    /// deltas and the reweighting kernel at zero.
    pub fn register(store: &mut ParamStore, prefix: &str, cfg: &MagaConfig, morpho: bool, rng: &mut SplitMix64) -> Self {
        let d = cfg.embed_dim;
        let hidden = d * cfg.mlp_ratio;
        let mut add = |name: &str, role, t| store.add(format!("{prefix}.{name}"), role, t);
        let ln1_scale = add("ln1.scale", ParamRole::NormScale, Tensor::ones(&[d]));
        let ln1_shift = add("ln1.shift", ParamRole::NormShift, Tensor::zeros(&[d]));
        let w_q = add("attn.w_q", ParamRole::Weight, normal(rng, &[d, d], INIT_STD));
        let w_k = add("attn.w_k", ParamRole::Weight, normal(rng, &[d, d], INIT_STD));
        let w_v = add("attn.w_v", ParamRole::Weight, normal(rng, &[d, d], INIT_STD));
        let w_o = add("attn.w_o", ParamRole::Weight, normal(rng, &[d, d], INIT_STD));
        let morpho = morpho.then(|| {
            let k = cfg.kernel_size;
            let branches = cfg
                .branches
                .branches()
                .into_iter()
                .map(|b| {
                    let ids = b
                        .stages()
                        .iter()
                        .enumerate()
                        .map(|(i, &horizontal)| {
                            let kernel = if horizontal { delta_kernel(d, 1, k) } else { delta_kernel(d, k, 1) };
                            add(&format!("tetris.{}.{i}", b.name()), ParamRole::Kernel, kernel)
                        })
                        .collect();
                    (b, ids)
                })
                .collect();
            let reweight = add("tetris.reweight", ParamRole::Kernel, Tensor::zeros(&[cfg.reweight_kernel]));
            MorphoParams { branches, reweight }
        });
        let ln2_scale = add("ln2.scale", ParamRole::NormScale, Tensor::ones(&[d]));
        let ln2_shift = add("ln2.shift", ParamRole::NormShift, Tensor::zeros(&[d]));
        let mlp_in = add("mlp.w1", ParamRole::Weight, normal(rng, &[d, hidden], INIT_STD));
        let mlp_in_bias = add("mlp.b1", ParamRole::Bias, Tensor::zeros(&[hidden]));
        let mlp_out = add("mlp.w2", ParamRole::Weight, normal(rng, &[hidden, d], INIT_STD));
        let mlp_out_bias = add("mlp.b2", ParamRole::Bias, Tensor::zeros(&[d]));
        Self {
            ln1_scale,
            ln1_shift,
            w_q,
            w_k,
            w_v,
            w_o,
            ln2_scale,
            ln2_shift,
            mlp_in,
            mlp_in_bias,
            mlp_out,
            mlp_out_bias,
            morpho,
        }
    }

    pub fn is_maga(&self) -> bool {
        self.morpho.is_some()
    }
}

/// What a block produced, beyond its output tokens.
#[derive(Clone, Debug)]
pub struct BlockOutput {
    pub tokens: Var,
    /// Enriched query tokens fed to attention (plain projected queries for
    /// non-MAGA blocks).
    pub queries: Var,
    pub attention: Vec<Var>,
    pub morpho: Option<MorphoOutput>,
}

fn layer_norm(g: &mut Graph, x: Var, scale: Var, shift: Var, eps: f64) -> Result<Var> {
    let n = g.layer_norm_rows(x, eps)?;
    let n = g.mul_last(n, scale)?;
    g.add_last(n, shift)
}

/// `x + Attn(LN(x))` followed by `x + MLP(LN(x))` on `[N, D]` tokens laid out
/// on an `hp x wp` grid. For MAGA blocks the query path runs
/// tokens -> W_Q -> map -> branches -> reweight/max -> gate -> tokens.
pub fn maga_block(
    g: &mut Graph,
    bound: &Bound,
    p: &MagaBlockParams,
    cfg: &MagaConfig,
    x: Var,
    hp: usize,
    wp: usize,
) -> Result<BlockOutput> {
    let s = g.shape(x).to_vec();
    if s.len() != 2 || s[0] != hp * wp || s[1] != cfg.embed_dim {
        return Err(Error::shape(format!(
            "block input {s:?} does not match a {hp}x{wp} grid of {} dims",
            cfg.embed_dim
        )));
    }
    let v = |id: ParamId| bound.var(id);

    let h = layer_norm(g, x, v(p.ln1_scale), v(p.ln1_shift), cfg.layer_norm_eps)?;
    let q = g.matmul(h, v(p.w_q))?;
    let k = g.matmul(h, v(p.w_k))?;
    let val = g.matmul(h, v(p.w_v))?;

    let (queries, morpho) = match &p.morpho {
        Some(mp) => {
            let q_map = ops::tokens_to_map(g, q, hp, wp)?;
            let kernels: Vec<BranchKernels> = mp
                .branches
                .iter()
                .map(|(b, ids)| BranchKernels { branch: *b, stages: ids.iter().map(|id| v(*id)).collect() })
                .collect();
            let mask = ActiveSiteMask::all_active(hp, wp);
            let stack = ops::tetris_branches(g, q_map, &kernels, &mask)?;
            let morpho = ops::morpho_reweight(g, &stack, v(mp.reweight), cfg.norm_eps)?;
            let enriched = ops::maga_gate(g, morpho.fused, q_map)?;
            (ops::map_to_tokens(g, enriched)?, Some(morpho))
        }
        None => (q, None),
    };

    let (attn, maps) = ops::attention(g, queries, k, val, cfg.heads)?;
    let attn = g.matmul(attn, v(p.w_o))?;
    let x1 = g.add(x, attn)?;

    let h2 = layer_norm(g, x1, v(p.ln2_scale), v(p.ln2_shift), cfg.layer_norm_eps)?;
    let m = g.matmul(h2, v(p.mlp_in))?;
    let m = g.add_last(m, v(p.mlp_in_bias))?;
    let m = g.gelu(m);
    let m = g.matmul(m, v(p.mlp_out))?;
    let m = g.add_last(m, v(p.mlp_out_bias))?;
    let tokens = g.add(x1, m)?;

    Ok(BlockOutput { tokens, queries, attention: maps, morpho })
}
