//! Named parameter storage and the AdamW optimizer.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

/// What a parameter is for; recorded in checkpoint manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    NormScale,
    NormShift,
    Kernel,
    Embedding,
}

impl ParamRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::NormScale => "norm_scale",
            ParamRole::NormShift => "norm_shift",
            ParamRole::Kernel => "kernel",
            ParamRole::Embedding => "embedding",
        }
    }
}

impl fmt::Display for ParamRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "weight" => ParamRole::Weight,
            "bias" => ParamRole::Bias,
            "norm_scale" => ParamRole::NormScale,
            "norm_shift" => ParamRole::NormShift,
            "kernel" => ParamRole::Kernel,
            "embedding" => ParamRole::Embedding,
            other => return Err(Error::input(format!("unknown parameter role {other:?}"))),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub role: ParamRole,
    pub value: Tensor,
}

/// Ordered collection of trainable tensors addressed by [`ParamId`] or name.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, role: ParamRole, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        self.by_name.insert(name.clone(), self.params.len());
        self.params.push(Param { name, role, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Replaces a value, keeping the shape fixed.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter {} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records every parameter as a trainable leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        Bound { vars: self.params.iter().map(|p| graph.leaf(p.value.clone())).collect() }
    }
}

/// Parameters of a [`ParamStore`] as they appear in one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps leaves already recorded in a graph, one per parameter in store
    /// order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients for every parameter, in store order.
    pub fn grads(&self, graph: &Graph, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|v| grads.get(graph, *v)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.1 }
    }
}

/// Adam with decoupled weight decay:
///
/// ```text
/// p <- p * (1 - lr * wd)
/// m <- b1 m + (1 - b1) g,    v <- b2 v + (1 - b2) g^2
/// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = |p: &Param| vec![0.0; p.value.numel()];
        Self {
            config,
            step: 0,
            first: store.iter().map(zeros).collect(),
            second: store.iter().map(zeros).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr` (the configured rate,
    /// possibly scheduled by the caller).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} parameters, store has {}, got {} gradients",
                self.first.len(),
                store.len(),
                grads.len()
            )));
        }
        for (p, g) in store.params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "gradient for {} has shape {:?}, expected {:?}",
                    p.name,
                    g.shape(),
                    p.value.shape()
                )));
            }
        }
        let c = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - lr * c.weight_decay;
        for ((p, g), (m, v)) in store
            .params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let data = p.value.data_mut();
            for i in 0..data.len() {
                let gi = g.data()[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
                data[i] = data[i] * decay - lr * update;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", ParamRole::Weight, Tensor::new(&[values.len()], values.to_vec()).unwrap());
        (s, id)
    }

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let (mut s, id) = store_with(&[0.5, -1.25, 3.0]);
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut opt = AdamW::new(cfg, &s);
        for _ in 0..3 {
            opt.step(&mut s, &[Tensor::zeros(&[3])], cfg.lr).unwrap();
        }
        assert_eq!(s.get(id).data(), &[0.5, -1.25, 3.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let (mut s, id) = store_with(&[1.0, -2.0, 0.5]);
        let cfg = AdamConfig { lr: 0.01, weight_decay: 0.1, ..AdamConfig::default() };
        let mut opt = AdamW::new(cfg, &s);
        let g = [0.3, -4.0, 1e-9];
        opt.step(&mut s, &[Tensor::new(&[3], g.to_vec()).unwrap()], cfg.lr).unwrap();
        // bias correction makes m_hat = g and v_hat = g^2 on the first step
        for (i, (&p0, &gi)) in [1.0, -2.0, 0.5].iter().zip(&g).enumerate() {
            let expected = p0 * (1.0 - 0.01 * 0.1) - 0.01 * gi / (gi.abs() + 1e-8);
            assert!((s.get(id).data()[i] - expected).abs() < 1e-15, "coordinate {i}");
        }
    }

    #[test]
    fn deterministic_replay() {
        let run = || {
            let (mut s, id) = store_with(&[0.1, 0.2]);
            let mut opt = AdamW::new(AdamConfig::default(), &s);
            for k in 0..5 {
                let g = Tensor::new(&[2], vec![k as f64 - 2.0, 0.7]).unwrap();
                opt.step(&mut s, &[g], 1e-3).unwrap();
            }
            s.get(id).clone()
        };
        assert_eq!(run().to_magt_bytes(), run().to_magt_bytes());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (mut s, _) = store_with(&[0.1, 0.2]);
        let mut opt = AdamW::new(AdamConfig::default(), &s);
        assert!(opt.step(&mut s, &[Tensor::zeros(&[3])], 1e-3).is_err());
        assert!(opt.step(&mut s, &[], 1e-3).is_err());
    }

    #[test]
    fn set_checks_shape() {
        let (mut s, id) = store_with(&[0.1, 0.2]);
        assert!(s.set(id, Tensor::zeros(&[3])).is_err());
        s.set(id, Tensor::ones(&[2])).unwrap();
        assert_eq!(s.get(id).data(), &[1.0, 1.0]);
    }
}
