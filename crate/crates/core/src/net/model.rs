use crate::autodiff::{ConvGeom, Graph, Var};
use crate::error::{Error, Result};
use crate::maga::{self, MagaBlockParams};
use crate::optim::{Bound, ParamId, ParamRole, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

use super::config::NetConfig;

/// Convolution weight and bias.
#[derive(Clone, Copy, Debug)]
pub struct ConvParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvParams {
    /// Weight `[out, inp, k, k]` drawn from `N(0, 1/fan_in)`, bias zero.
    fn register(store: &mut ParamStore, prefix: &str, out: usize, inp: usize, k: usize, rng: &mut SplitMix64) -> Self {
        let std = 1.0 / ((inp * k * k) as f64).sqrt();
        let weight = store.add(format!("{prefix}.weight"), ParamRole::Weight, maga::normal_init(rng, &[out, inp, k, k], std));
        let bias = store.add(format!("{prefix}.bias"), ParamRole::Bias, Tensor::zeros(&[out]));
        Self { weight, bias }
    }

    fn apply(&self, g: &mut Graph, bound: &Bound, x: Var, geom: ConvGeom) -> Result<Var> {
        let y = g.conv2d(x, bound.var(self.weight), geom)?;
        g.add_channel(y, bound.var(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct PatchEmbedParams {
    pub proj: ConvParams,
    pub pos: ParamId,
}

/// One decoder stage: which detail scales are concatenated onto the
/// running map before its 3x3 convolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderStage {
    /// Downsampling factor of the stage's output.
    pub scale: usize,
    pub details: Vec<usize>,
}

/// Fusion schedule for semantic features at scale `patch`. With `patch <= 8`
/// the first stage runs at the semantic scale and takes every detail map at
/// that scale or coarser (coarser ones bilinearly upsampled to it); each
/// later stage upsamples by 2 and takes the detail map of its scale. With
/// `patch = 16` the first stage already sits at `H/8`.
pub fn decoder_plan(patch: usize) -> Result<Vec<DecoderStage>> {
    if !NetConfig::PATCH_SIZES.contains(&patch) {
        return Err(Error::config(format!("no decoder schedule for patch size {patch}")));
    }
    let first = patch.min(8);
    let mut stages = vec![DecoderStage { scale: first, details: [8, 4, 2].into_iter().filter(|&f| f >= first).collect() }];
    let mut scale = first / 2;
    while scale >= 2 {
        stages.push(DecoderStage { scale, details: vec![scale] });
        scale /= 2;
    }
    Ok(stages)
}

#[derive(Clone, Debug)]
pub struct DecoderParams {
    /// Scale of the semantic map fed in.
    pub patch: usize,
    pub plan: Vec<DecoderStage>,
    pub stages: Vec<ConvParams>,
    pub out: ConvParams,
}

/// Every parameter handle of the network.
#[derive(Clone, Debug)]
pub struct NetParams {
    pub embed: PatchEmbedParams,
    pub blocks: Vec<MagaBlockParams>,
    pub norm_scale: ParamId,
    pub norm_shift: ParamId,
    pub detail: [ConvParams; 3],
    pub decoder: DecoderParams,
}

impl NetParams {
    pub fn register(store: &mut ParamStore, cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SplitMix64::new(cfg.seed);
        let d = cfg.embed_dim;
        let (hp, wp) = cfg.grid();
        let embed = PatchEmbedParams {
            proj: ConvParams::register(store, "embed.proj", d, 4, cfg.patch, &mut rng),
            pos: store.add("embed.pos", ParamRole::Embedding, Tensor::zeros(&[hp * wp, d])),
        };
        let mcfg = cfg.maga();
        let blocks = (0..cfg.depth)
            .map(|i| MagaBlockParams::register(store, &format!("encoder.{i}"), &mcfg, cfg.is_maga_block(i), &mut rng))
            .collect();
        let norm_scale = store.add("encoder.norm.scale", ParamRole::NormScale, Tensor::ones(&[d]));
        let norm_shift = store.add("encoder.norm.shift", ParamRole::NormShift, Tensor::zeros(&[d]));
        let detail = [
            ConvParams::register(store, "detail.0", cfg.c2, 4, 3, &mut rng),
            ConvParams::register(store, "detail.1", cfg.c4, cfg.c2, 3, &mut rng),
            ConvParams::register(store, "detail.2", cfg.c8, cfg.c4, 3, &mut rng),
        ];
        let plan = decoder_plan(cfg.patch)?;
        let width_at = |f: usize| match f {
            2 => cfg.c2,
            4 => cfg.c4,
            _ => cfg.c8,
        };
        let mut prev = d;
        let mut stages = Vec::with_capacity(plan.len());
        for (i, st) in plan.iter().enumerate() {
            let inp = prev + st.details.iter().map(|&f| width_at(f)).sum::<usize>();
            stages.push(ConvParams::register(store, &format!("decoder.{i}"), cfg.decoder_width, inp, 3, &mut rng));
            prev = cfg.decoder_width;
        }
        let out = ConvParams::register(store, "decoder.out", 1, prev, 3, &mut rng);
        Ok(Self { embed, blocks, norm_scale, norm_shift, detail, decoder: DecoderParams { patch: cfg.patch, plan, stages, out } })
    }
}

/// Values recorded during one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub tokens: Vec<Var>,
    /// Detail features at `H/2`, `H/4`, `H/8`.
    pub details: [Var; 3],
    pub semantic: Var,
    pub decoder: Vec<Var>,
    pub alpha: Var,
}

/// Non-overlapping `s x s` patches of `image4 [4,H,W]` projected to `[N, D]`
/// tokens, plus the positional embedding.
pub fn patch_embed(g: &mut Graph, bound: &Bound, p: &PatchEmbedParams, image4: Var, patch: usize) -> Result<Var> {
    let s = g.shape(image4).to_vec();
    if s.len() != 3 || s[0] != 4 {
        return Err(Error::shape(format!("patch embedding expects [4, H, W], got {s:?}")));
    }
    if patch == 0 || s[1] % patch != 0 || s[2] % patch != 0 {
        return Err(Error::shape(format!("patch size {patch} does not divide {}x{}", s[1], s[2])));
    }
    let map = p.proj.apply(g, bound, image4, ConvGeom::new(patch, 0))?;
    let tokens = maga::map_to_tokens(g, map)?;
    g.add(tokens, bound.var(p.pos))
}

/// Three `3x3` stride-2 convolutions, each followed by instance
/// normalization and GELU.
pub fn detail_branch(g: &mut Graph, bound: &Bound, p: &[ConvParams; 3], image4: Var) -> Result<[Var; 3]> {
    let s = g.shape(image4).to_vec();
    if s.len() != 3 || s[1] % 8 != 0 || s[2] % 8 != 0 {
        return Err(Error::shape(format!("detail branch needs [C, H, W] with H, W divisible by 8, got {s:?}")));
    }
    let mut x = image4;
    let mut out = [x; 3];
    for (i, conv) in p.iter().enumerate() {
        let y = conv.apply(g, bound, x, ConvGeom::new(2, 1))?;
        let (y, _) = g.instance_norm(y, 1e-5)?;
        x = g.gelu(y);
        out[i] = x;
    }
    Ok(out)
}

/// Progressive upsample-concatenate-convolve decoder from the `[D, H/s, W/s]`
/// semantic map to a `[1, H, W]` alpha matte. Returns the matte and the
/// output of every stage.
pub fn decoder_fuse(g: &mut Graph, bound: &Bound, p: &DecoderParams, sem: Var, details: [Var; 3]) -> Result<(Var, Vec<Var>)> {
    let detail_at = |f: usize| details[f.trailing_zeros() as usize - 1];
    let mut x = sem;
    let mut scale = p.patch;
    let mut trace = Vec::with_capacity(p.stages.len());
    for (st, conv) in p.plan.iter().zip(&p.stages) {
        while scale > st.scale {
            x = g.upsample_bilinear2(x)?;
            scale /= 2;
        }
        let mut parts = vec![x];
        for &f in &st.details {
            let mut d = detail_at(f);
            let mut s = f;
            while s > st.scale {
                d = g.upsample_bilinear2(d)?;
                s /= 2;
            }
            parts.push(d);
        }
        let target = g.shape(x)[1..].to_vec();
        for &part in &parts[1..] {
            if g.shape(part)[1..] != target[..] {
                return Err(Error::config(format!(
                    "decoder stage at 1/{} expects {:?} maps, got {:?}",
                    st.scale,
                    target,
                    &g.shape(part)[1..]
                )));
            }
        }
        let cat = g.concat(&parts, 0)?;
        let w = bound.var(conv.weight);
        let y = conv.apply(g, bound, cat, ConvGeom::same(g.shape(w), 1))?;
        x = g.gelu(y);
        trace.push(x);
    }
    let x = g.upsample_bilinear2(x)?;
    let w = bound.var(p.out.weight);
    let logits = p.out.apply(g, bound, x, ConvGeom::same(g.shape(w), 1))?;
    let alpha = g.sigmoid(logits);
    trace.push(alpha);
    Ok((alpha, trace))
}

/// Checks that every trimap value is one of 0, 0.5, 1.
pub fn validate_trimap(trimap: &Tensor) -> Result<()> {
    if let Some((i, v)) = trimap.data().iter().enumerate().find(|(_, v)| ![0.0, 0.5, 1.0].contains(*v)) {
        return Err(Error::input(format!("trimap value {v} at index {i} is not 0, 0.5 or 1")));
    }
    Ok(())
}

/// Full pipeline on `image [3,H,W]` and `trimap [1,H,W]` graph values.
pub fn forward(g: &mut Graph, bound: &Bound, p: &NetParams, cfg: &NetConfig, image: Var, trimap: Var) -> Result<ForwardTrace> {
    let (h, w) = (cfg.height, cfg.width);
    if g.shape(image) != [3, h, w] || g.shape(trimap) != [1, h, w] {
        return Err(Error::shape(format!(
            "expected image [3, {h}, {w}] and trimap [1, {h}, {w}], got {:?} and {:?}",
            g.shape(image),
            g.shape(trimap)
        )));
    }
    validate_trimap(g.value(trimap))?;
    let x4 = g.concat(&[image, trimap], 0)?;
    let mut tokens = patch_embed(g, bound, &p.embed, x4, cfg.patch)?;
    let (hp, wp) = cfg.grid();
    let mcfg = cfg.maga();
    let mut trace_tokens = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        tokens = maga::maga_block(g, bound, block, &mcfg, tokens, hp, wp)?.tokens;
        trace_tokens.push(tokens);
    }
    let normed = g.layer_norm_rows(tokens, mcfg.layer_norm_eps)?;
    let normed = g.mul_last(normed, bound.var(p.norm_scale))?;
    let normed = g.add_last(normed, bound.var(p.norm_shift))?;
    let semantic = maga::tokens_to_map(g, normed, hp, wp)?;
    let details = detail_branch(g, bound, &p.detail, x4)?;
    let (alpha, decoder) = decoder_fuse(g, bound, &p.decoder, semantic, details)?;
    Ok(ForwardTrace { tokens: trace_tokens, details, semantic, decoder, alpha })
}

/// A network configuration with its parameters.
#[derive(Clone, Debug)]
pub struct MattingNet {
    pub config: NetConfig,
    pub params: NetParams,
    pub store: ParamStore,
}

impl MattingNet {
    pub fn new(config: NetConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let params = NetParams::register(&mut store, &config)?;
        Ok(Self { config, params, store })
    }

    /// Records the forward pass on `g` with the parameters bound as leaves.
    pub fn trace(&self, g: &mut Graph, image: &Tensor, trimap: &Tensor) -> Result<(Bound, ForwardTrace)> {
        let bound = self.store.bind(g);
        let image = g.constant(image.clone());
        let trimap = g.constant(trimap.clone());
        let t = forward(g, &bound, &self.params, &self.config, image, trimap)?;
        Ok((bound, t))
    }

    /// Predicted `[1, H, W]` alpha matte.
    pub fn predict(&self, image: &Tensor, trimap: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (_, t) = self.trace(&mut g, image, trimap)?;
        Ok(g.value(t.alpha).clone())
    }
}
