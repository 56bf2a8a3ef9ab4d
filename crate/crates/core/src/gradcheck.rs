//! Central finite-difference gradient checking.
//!
//! Each coordinate is compared as `|a - n| / max(|a|, |n|, 1e-8)` where `a`
//! is the analytic gradient and `n = (f(x + h) - f(x - h)) / 2h`.

use crate::autodiff::{ActiveSiteMask, ConvGeom, Graph, OpKind, Var};
use crate::error::Result;
use crate::maga::{maga_block, MagaBlockParams, MagaConfig};
use crate::net::{forward, NetConfig, NetParams};
use crate::optim::{Bound, Param, ParamRole, ParamStore};
use crate::rng::{derive_seed, SplitMix64};
use crate::synth::make_dataset;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-8;
/// Pass threshold for single operations.
pub const OP_TOLERANCE: f64 = 1e-5;
/// Pass threshold for the whole network.
pub const NETWORK_TOLERANCE: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Which coordinates of each input get a finite-difference probe.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// Up to `per_tensor` distinct coordinates per input, chosen by `seed`.
    Sample { per_tensor: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub max_rel_err: f64,
    /// Input index and flat coordinate of the worst mismatch.
    pub worst: Option<(usize, usize)>,
    pub probes: usize,
}

impl CheckOutcome {
    fn merge(&mut self, other: &CheckOutcome) {
        if other.max_rel_err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.probes += other.probes;
    }

    pub fn empty() -> Self {
        Self { max_rel_err: 0.0, worst: None, probes: 0 }
    }
}

/// Checks `d loss / d inputs` where `build` records a scalar loss on a fresh
/// graph from leaves holding `inputs`. `tamper` may alter the analytic
/// gradients before comparison (negative-control fixtures).
pub fn check<F>(inputs: &[Tensor], coords: Coords, h: f64, build: F, tamper: Option<&dyn Fn(&mut [Tensor])>) -> Result<CheckOutcome>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let mut analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(&g, *v)).collect();
    if let Some(t) = tamper {
        t(&mut analytic);
    }

    let mut outcome = CheckOutcome::empty();
    let mut probe_values = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for idx in select_coords(input.numel(), coords, k) {
            let x0 = input.data()[idx];
            probe_values[k].set_flat(idx, x0 + h);
            let plus = eval(&probe_values)?;
            probe_values[k].set_flat(idx, x0 - h);
            let minus = eval(&probe_values)?;
            probe_values[k].set_flat(idx, x0);
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[k].data()[idx], numeric);
            outcome.merge(&CheckOutcome { max_rel_err: err, worst: Some((k, idx)), probes: 1 });
        }
    }
    Ok(outcome)
}

/// [`check`] over every tensor of `store` followed by `extra` inputs. The
/// builder receives the parameters as a [`Bound`] and the extra leaves.
pub fn check_params<F>(store: &ParamStore, extra: &[Tensor], coords: Coords, h: f64, build: F) -> Result<CheckOutcome>
where
    F: Fn(&mut Graph, &Bound, &[Var]) -> Result<Var>,
{
    check_params_where(store, extra, coords, h, |_| true, build)
}

/// [`check_params`] probing only the parameters selected by `probe`; the
/// others enter the graph as constants. Input indices in the outcome count
/// the selected parameters first, then `extra`.
pub fn check_params_where<F, P>(store: &ParamStore, extra: &[Tensor], coords: Coords, h: f64, probe: P, build: F) -> Result<CheckOutcome>
where
    F: Fn(&mut Graph, &Bound, &[Var]) -> Result<Var>,
    P: Fn(&Param) -> bool,
{
    let selected: Vec<bool> = store.iter().map(&probe).collect();
    let mut inputs: Vec<Tensor> = store.iter().filter(|p| probe(p)).map(|p| p.value.clone()).collect();
    let n = inputs.len();
    inputs.extend_from_slice(extra);
    check(
        &inputs,
        coords,
        h,
        |g, vars| {
            let mut next = vars[..n].iter();
            let all = store
                .iter()
                .zip(&selected)
                .map(|(p, &on)| if on { *next.next().expect("one var per selected parameter") } else { g.constant(p.value.clone()) })
                .collect();
            build(g, &Bound::from_vars(all), &vars[n..])
        },
        None,
    )
}

pub(crate) fn select_coords(numel: usize, coords: Coords, input_index: usize) -> Vec<usize> {
    match coords {
        Coords::All => (0..numel).collect(),
        Coords::Sample { per_tensor, .. } if per_tensor >= numel => (0..numel).collect(),
        Coords::Sample { per_tensor, seed } => {
            let mut rng = SplitMix64::new(derive_seed(seed, input_index as u64));
            let mut picked: Vec<usize> = Vec::with_capacity(per_tensor);
            while picked.len() < per_tensor {
                let i = rng.range(0, numel);
                if !picked.contains(&i) {
                    picked.push(i);
                }
            }
            picked.sort_unstable();
            picked
        }
    }
}

/// Random tensor with entries uniform in `[-1, 1)`.
pub fn random_tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
}

/// Reduces `out` to a scalar through fixed random weights so every output
/// element carries a distinct, non-trivial upstream gradient.
pub fn projection_loss(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut rng = SplitMix64::new(seed);
    let w = random_tensor(&mut rng, g.shape(out));
    let w = g.constant(w);
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

/// [`projection_loss`] of `out - base` for a fixed `base`, normally the
/// output at the unperturbed point. The gradient is unchanged, but the
/// perturbed outputs are differenced against `base` exactly before being
/// weighted, so less rounding noise reaches the finite differences.
pub fn centered_projection_loss(g: &mut Graph, out: Var, base: &Tensor, seed: u64) -> Result<Var> {
    let b = g.constant(base.clone());
    let d = g.sub(out, b)?;
    projection_loss(g, d, seed)
}

/// Overwrites every parameter with a random draw: entries uniform in
/// `[-1, 1)`, except normalization scales, which are drawn in `[0.5, 1.5)`.
pub fn randomize_params(store: &mut ParamStore, seed: u64) {
    let mut rng = SplitMix64::new(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        let t = random_tensor(&mut rng, &shape);
        let t = if store.param(id).role == ParamRole::NormScale { t.map(|v| 1.0 + 0.5 * v) } else { t };
        store.set(id, t).expect("shape preserved");
    }
}

/// One op's result across all seeds.
#[derive(Clone, Debug)]
pub struct OpReport {
    pub op: OpKind,
    pub outcome: CheckOutcome,
    pub seeds: usize,
}

impl OpReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.outcome.max_rel_err < tolerance
    }
}

/// Runs the finite-difference check for every [`OpKind`] over `seeds`
/// random small cases (extents at most 4x4x6x6). `corrupt` perturbs the
/// analytic gradient of one op, to demonstrate the check catches it.
pub fn op_suite(base_seed: u64, seeds: usize, corrupt: Option<OpKind>) -> Result<Vec<OpReport>> {
    OpKind::ALL
        .iter()
        .map(|&op| {
            let mut total = CheckOutcome::empty();
            for s in 0..seeds {
                let seed = derive_seed(base_seed ^ op as u64, s as u64);
                let tamper = |grads: &mut [Tensor]| {
                    let v = grads[0].data()[0];
                    grads[0].set_flat(0, v + 1e-3 * (1.0 + v.abs()));
                };
                let tamper_ref: Option<&dyn Fn(&mut [Tensor])> =
                    if corrupt == Some(op) { Some(&tamper) } else { None };
                let outcome = check_op_case(op, seed, tamper_ref)?;
                total.merge(&outcome);
            }
            Ok(OpReport { op, outcome: total, seeds })
        })
        .collect()
}

/// Builds a random case exercising `op` and checks it with all coordinates.
pub fn check_op_case(op: OpKind, seed: u64, tamper: Option<&dyn Fn(&mut [Tensor])>) -> Result<CheckOutcome> {
    let mut rng = SplitMix64::new(seed);
    let loss_seed = rng.next_u64();
    let mut dim = |lo: usize, hi: usize| rng.range(lo, hi + 1);
    let (m, n, p) = (dim(1, 4), dim(2, 6), dim(1, 4));
    let (c, h, w) = (dim(1, 4), dim(2, 6), dim(2, 6));
    let batch = dim(1, 4);
    let k_odd = [1, 3, 5][dim(0, 2)];
    let kh = [1, 3][dim(0, 1)];
    let choice = dim(0, 1);
    let stride = dim(1, 2);
    let conv_out = dim(1, 4);

    let mut rng = SplitMix64::new(seed ^ 0xA5A5);
    let mut t = |shape: &[usize]| random_tensor(&mut rng, shape);

    type Builder = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;
    let (inputs, build): (Vec<Tensor>, Builder) = match op {
        OpKind::Add => (vec![t(&[m, n]), t(&[m, n])], Box::new(|g, v| g.add(v[0], v[1]))),
        OpKind::Sub => (vec![t(&[m, n]), t(&[m, n])], Box::new(|g, v| g.sub(v[0], v[1]))),
        OpKind::Mul => (vec![t(&[c, h, w]), t(&[c, h, w])], Box::new(|g, v| g.mul(v[0], v[1]))),
        OpKind::Scale => (vec![t(&[m, n])], Box::new(|g, v| Ok(g.scale(v[0], -1.7)))),
        OpKind::AddChannel => (vec![t(&[c, h, w]), t(&[c])], Box::new(|g, v| g.add_channel(v[0], v[1]))),
        OpKind::MulChannel => (vec![t(&[c, h, w]), t(&[c])], Box::new(|g, v| g.mul_channel(v[0], v[1]))),
        OpKind::AddLast => (vec![t(&[m, n]), t(&[n])], Box::new(|g, v| g.add_last(v[0], v[1]))),
        OpKind::MulLast => (vec![t(&[m, n]), t(&[n])], Box::new(|g, v| g.mul_last(v[0], v[1]))),
        OpKind::Matmul => (vec![t(&[m, n]), t(&[n, p])], Box::new(|g, v| g.matmul(v[0], v[1]))),
        OpKind::Transpose => (vec![t(&[m, n])], Box::new(|g, v| g.transpose(v[0]))),
        OpKind::Reshape => (vec![t(&[c, h, w])], Box::new(move |g, v| g.reshape(v[0], &[c * h, w]))),
        OpKind::Concat => (
            vec![t(&[c, h, w]), t(&[c, p, w])],
            Box::new(|g, v| g.concat(&[v[0], v[1]], 1)),
        ),
        OpKind::Narrow => (vec![t(&[c, h, w])], Box::new(move |g, v| g.narrow(v[0], 2, 1, w - 1))),
        OpKind::Sum => (vec![t(&[c, h, w])], Box::new(|g, v| Ok(g.sum(v[0])))),
        OpKind::Mean => (vec![t(&[c, h, w])], Box::new(|g, v| Ok(g.mean(v[0])))),
        OpKind::Abs => (vec![t(&[c, h, w])], Box::new(|g, v| Ok(g.abs(v[0])))),
        OpKind::Sigmoid => (vec![t(&[c, h, w]).map(|x| 4.0 * x)], Box::new(|g, v| Ok(g.sigmoid(v[0])))),
        OpKind::Relu => (vec![t(&[c, h, w])], Box::new(|g, v| Ok(g.relu(v[0])))),
        OpKind::Gelu => (vec![t(&[c, h, w]).map(|x| 3.0 * x)], Box::new(|g, v| Ok(g.gelu(v[0])))),
        OpKind::SoftmaxRows => (vec![t(&[m, n]).map(|x| 3.0 * x)], Box::new(|g, v| g.softmax_rows(v[0]))),
        OpKind::LayerNormRows => (vec![t(&[m, n])], Box::new(|g, v| g.layer_norm_rows(v[0], 1e-6))),
        OpKind::InstanceNorm => (
            vec![t(&[batch, c, h, w])],
            Box::new(|g, v| Ok(g.instance_norm(v[0], 1e-5)?.0)),
        ),
        OpKind::InstanceStd => (
            vec![t(&[batch, c, h, w])],
            Box::new(|g, v| Ok(g.instance_norm(v[0], 1e-5)?.1)),
        ),
        OpKind::Conv2d => {
            let groups = if choice == 1 { c } else { 1 };
            let out = if groups == 1 { conv_out } else { c };
            let geom = ConvGeom { stride, pad_h: kh / 2, pad_w: 1, groups };
            (
                vec![t(&[c, h, w]), t(&[out, c / groups, kh, 3])],
                Box::new(move |g, v| g.conv2d(v[0], v[1], geom)),
            )
        }
        OpKind::Conv2dSparse => {
            let mut mrng = SplitMix64::new(seed ^ 0x5EED);
            let mask = ActiveSiteMask::from_fn(h, w, |_, _| mrng.next_f64() < 0.6);
            (
                vec![t(&[c, h, w]), t(&[conv_out, c, kh, k_odd])],
                Box::new(move |g, v| g.conv2d_sparse(v[0], v[1], &mask)),
            )
        }
        OpKind::Conv1d => (vec![t(&[n * c]), t(&[k_odd])], Box::new(|g, v| g.conv1d_channels(v[0], v[1]))),
        OpKind::MaxOverAxis => (
            vec![t(&[batch + 1, c, h])],
            Box::new(move |g, v| Ok(g.max_over_axis(v[0], choice)?.0)),
        ),
        OpKind::UpsampleNearest2 => (vec![t(&[c, h, w])], Box::new(|g, v| g.upsample_nearest2(v[0]))),
        OpKind::UpsampleBilinear2 => (vec![t(&[c, h, w])], Box::new(|g, v| g.upsample_bilinear2(v[0]))),
    };

    check(
        &inputs,
        Coords::All,
        DEFAULT_STEP,
        |g, vars| {
            let out = build(g, vars)?;
            debug_assert_eq!(g.op_kind(out), Some(op));
            projection_loss(g, out, loss_seed)
        },
        tamper,
    )
}

/// True for biases that feed straight into an instance norm. The norm
/// removes any per-channel constant, so their exact gradient is zero and a
/// finite-difference probe only measures rounding noise.
pub fn is_normalized_away(p: &Param) -> bool {
    p.name.starts_with("detail.") && p.name.ends_with(".bias")
}

/// Network parameters redrawn at random, with weight matrices and kernels
/// scaled by `sqrt(3 / fan_in)` so activations stay near unit scale and no
/// sigmoid saturates at the probe point.
pub fn conditioned_network(cfg: &NetConfig, seed: u64) -> Result<(ParamStore, NetParams)> {
    let mut store = ParamStore::new();
    let p = NetParams::register(&mut store, cfg)?;
    randomize_params(&mut store, seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let param = store.param(id);
        let shape = param.value.shape().to_vec();
        let fan_in = match (param.role, shape.len()) {
            (ParamRole::Weight, 4) => shape[1..].iter().product::<usize>(),
            (ParamRole::Weight, 2) => shape[0],
            _ => continue,
        };
        let scaled = param.value.map(|v| v * (3.0 / fan_in as f64).sqrt());
        store.set(id, scaled)?;
    }
    Ok((store, p))
}

/// Result of one whole-network check.
#[derive(Clone, Debug)]
pub struct NetworkCheck {
    pub outcome: CheckOutcome,
    /// Parameter holding the worst mismatch.
    pub worst_param: Option<String>,
    /// Largest analytic gradient magnitude on the biases excluded by
    /// [`is_normalized_away`]; should be zero up to rounding.
    pub inert_grad: f64,
}

/// Checks the gradient of a projection of the predicted alpha with respect
/// to every network parameter, on one synthetic sample, probing
/// `per_tensor` coordinates per parameter tensor.
pub fn network_check(cfg: &NetConfig, seed: u64, per_tensor: usize) -> Result<NetworkCheck> {
    cfg.validate()?;
    let (store, p) = conditioned_network(cfg, derive_seed(seed, 0))?;
    let pair = make_dataset(1, derive_seed(seed, 1), cfg.height, cfg.width)?.remove(0);
    let loss_seed = derive_seed(seed, 2);
    let alpha = |g: &mut Graph, bound: &Bound| -> Result<Var> {
        let i = g.constant(pair.image.clone());
        let t = g.constant(pair.trimap.clone());
        Ok(forward(g, bound, &p, cfg, i, t)?.alpha)
    };
    let base = {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let a = alpha(&mut g, &bound)?;
        g.value(a).clone()
    };
    let loss = |g: &mut Graph, bound: &Bound| -> Result<Var> {
        let a = alpha(g, bound)?;
        centered_projection_loss(g, a, &base, loss_seed)
    };
    let coords = Coords::Sample { per_tensor, seed: derive_seed(seed, 3) };
    let outcome = check_params_where(&store, &[], coords, DEFAULT_STEP, |q| !is_normalized_away(q), |g, bound, _| loss(g, bound))?;
    let probed: Vec<&Param> = store.iter().filter(|q| !is_normalized_away(q)).collect();
    let worst_param = outcome.worst.map(|(k, _)| probed[k].name.clone());

    let mut g = Graph::new();
    let bound = store.bind(&mut g);
    let l = loss(&mut g, &bound)?;
    let grads = g.backward(l)?;
    let inert_grad = store
        .iter()
        .zip(bound.grads(&g, &grads))
        .filter(|(q, _)| is_normalized_away(q))
        .flat_map(|(_, t)| t.data().to_vec())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(NetworkCheck { outcome, worst_param, inert_grad })
}

/// Checks one encoder block, with the morphology path when `morpho` is set,
/// on a `grid x grid` token map with every parameter and input coordinate
/// probed.
pub fn block_check(cfg: &MagaConfig, grid: usize, seed: u64, morpho: bool) -> Result<CheckOutcome> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let p = MagaBlockParams::register(&mut store, "blk", cfg, morpho, &mut SplitMix64::new(seed));
    randomize_params(&mut store, seed ^ 0x5EED);
    let x = random_tensor(&mut SplitMix64::new(seed + 1000), &[grid * grid, cfg.embed_dim]);
    let base = {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let xv = g.leaf(x.clone());
        let out = maga_block(&mut g, &bound, &p, cfg, xv, grid, grid)?.tokens;
        g.value(out).clone()
    };
    check_params(&store, &[x], Coords::All, DEFAULT_STEP, |g, bound, extra| {
        let out = maga_block(g, bound, &p, cfg, extra[0], grid, grid)?;
        centered_projection_loss(g, out.tokens, &base, seed)
    })
}
