use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::kv::{self, KeyValue};
use crate::optim::{AdamConfig, AdamW};
use crate::tensor::Tensor;

use super::model::{forward, MattingNet};

/// One training example. Foreground and background are only needed for the
/// composition term.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Tensor,
    pub trimap: Tensor,
    pub alpha: Tensor,
    pub fg: Option<Tensor>,
    pub bg: Option<Tensor>,
}

/// 1 where the trimap is 0.5, else 0.
pub fn unknown_mask(trimap: &Tensor) -> Tensor {
    trimap.map(|v| if v == 0.5 { 1.0 } else { 0.0 })
}

fn masked_mean_abs(g: &mut Graph, diff: Var, mask: &Tensor) -> Result<Var> {
    let a = g.abs(diff);
    let count = mask.data().iter().filter(|&&m| m != 0.0).count();
    if count == 0 {
        return Ok(g.mean(a));
    }
    let m = g.constant(mask.clone());
    let masked = g.mul(a, m)?;
    let total = g.sum(masked);
    Ok(g.scale(total, 1.0 / count as f64))
}

/// Mean absolute alpha error over the pixels where `mask` is non-zero, or
/// over the whole image when the mask is empty.
pub fn loss_alpha(g: &mut Graph, pred: Var, gt: Var, mask: &Tensor) -> Result<Var> {
    if g.shape(pred) != g.shape(gt) || g.shape(pred) != mask.shape() {
        return Err(Error::shape(format!(
            "loss operands differ: {:?}, {:?}, mask {:?}",
            g.shape(pred),
            g.shape(gt),
            mask.shape()
        )));
    }
    let d = g.sub(pred, gt)?;
    masked_mean_abs(g, d, mask)
}

/// Mean absolute difference between the image re-rendered from the
/// predicted alpha, `B + alpha (F - B)`, and the observed image, over the
/// masked pixels of all three channels.
pub fn composition_loss(g: &mut Graph, alpha: Var, fg: &Tensor, bg: &Tensor, image: &Tensor, mask: &Tensor) -> Result<Var> {
    let a3 = g.concat(&[alpha, alpha, alpha], 0)?;
    let spread: Vec<f64> = fg.data().iter().zip(bg.data()).map(|(f, b)| f - b).collect();
    let spread = g.constant(Tensor::new(fg.shape(), spread)?);
    let offset: Vec<f64> = bg.data().iter().zip(image.data()).map(|(b, i)| b - i).collect();
    let offset = g.constant(Tensor::new(fg.shape(), offset)?);
    let scaled = g.mul(a3, spread)?;
    let diff = g.add(scaled, offset)?;
    let mask3 = Tensor::new(fg.shape(), mask.data().repeat(3))?;
    masked_mean_abs(g, diff, &mask3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Full rate for the first half of the run, then 1/10, then 1/100 for
    /// the last quarter.
    Step,
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "step" => Ok(Self::Step),
            _ => Err(Error::config(format!("unknown lr schedule {s:?}, expected constant or step"))),
        }
    }
}

impl std::fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Constant => "constant",
            Self::Step => "step",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    /// Weight of the composition term; 0 disables it.
    pub composition_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 200, batch: 4, adam: AdamConfig::default(), schedule: LrSchedule::Step, composition_weight: 0.0 }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        let base = self.adam.lr;
        match self.schedule {
            LrSchedule::Constant => base,
            LrSchedule::Step => {
                if 2 * step < self.steps {
                    base
                } else if 4 * step < 3 * self.steps {
                    base * 0.1
                } else {
                    base * 0.01
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch must be positive"));
        }
        if !(self.adam.lr >= 0.0) || !(self.composition_weight >= 0.0) || !(self.adam.weight_decay >= 0.0) {
            return Err(Error::config("lr, weight_decay and composition_weight must be non-negative"));
        }
        Ok(())
    }
}

impl KeyValue for TrainConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "steps" => self.steps = kv::parse(key, value)?,
            "batch" => self.batch = kv::parse(key, value)?,
            "lr" => self.adam.lr = kv::parse(key, value)?,
            "weight_decay" => self.adam.weight_decay = kv::parse(key, value)?,
            "beta1" => self.adam.beta1 = kv::parse(key, value)?,
            "beta2" => self.adam.beta2 = kv::parse(key, value)?,
            "adam_eps" => self.adam.eps = kv::parse(key, value)?,
            "lr_schedule" => self.schedule = value.trim().parse()?,
            "composition_weight" => self.composition_weight = kv::parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("steps", self.steps.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("weight_decay", self.adam.weight_decay.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("adam_eps", self.adam.eps.to_string()),
            ("lr_schedule", self.schedule.to_string()),
            ("composition_weight", self.composition_weight.to_string()),
        ]
    }
}

/// Deterministic AdamW training loop over an in-memory sample list.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub net: MattingNet,
    pub config: TrainConfig,
    opt: AdamW,
    step: usize,
}

impl Trainer {
    pub fn new(net: MattingNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let opt = AdamW::new(config.adam, &net.store);
        Ok(Self { net, config, opt, step: 0 })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Batch loss at the current parameters, recorded on `g`. Returns the
    /// loss node and the bound parameters.
    fn batch_loss(&self, g: &mut Graph, batch: &[&Sample]) -> Result<(Var, crate::optim::Bound)> {
        let bound = self.net.store.bind(g);
        let mut total = None;
        for s in batch {
            let image = g.constant(s.image.clone());
            let trimap = g.constant(s.trimap.clone());
            let gt = g.constant(s.alpha.clone());
            let t = forward(g, &bound, &self.net.params, &self.net.config, image, trimap)?;
            let mask = unknown_mask(&s.trimap);
            let mut l = loss_alpha(g, t.alpha, gt, &mask)?;
            if self.config.composition_weight > 0.0 {
                let (fg, bg) = s
                    .fg
                    .as_ref()
                    .zip(s.bg.as_ref())
                    .ok_or_else(|| Error::config("composition loss needs foreground and background layers"))?;
                let c = composition_loss(g, t.alpha, fg, bg, &s.image, &mask)?;
                let c = g.scale(c, self.config.composition_weight);
                l = g.add(l, c)?;
            }
            total = Some(match total {
                None => l,
                Some(acc) => g.add(acc, l)?,
            });
        }
        let total = total.ok_or_else(|| Error::input("empty batch"))?;
        Ok((g.scale(total, 1.0 / batch.len() as f64), bound))
    }

    /// Forward, loss, backward and one optimizer update. Returns the batch
    /// loss before the update.
    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<f64> {
        let mut g = Graph::new();
        let (loss, bound) = self.batch_loss(&mut g, batch)?;
        let grads = g.backward(loss)?;
        let grads = bound.grads(&g, &grads);
        let lr = self.config.lr_at(self.step);
        self.opt.step(&mut self.net.store, &grads, lr)?;
        self.step += 1;
        Ok(g.value(loss).data()[0])
    }

    /// Runs the configured number of steps; batch `t` holds samples
    /// `(t * batch + j) mod n`. `on_step` sees every `(step, loss)`.
    pub fn run(&mut self, samples: &[Sample], mut on_step: impl FnMut(usize, f64)) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::input("no training samples"));
        }
        let n = samples.len();
        let mut losses = Vec::with_capacity(self.config.steps);
        for _ in 0..self.config.steps {
            let t = self.step;
            let batch: Vec<&Sample> = (0..self.config.batch).map(|j| &samples[(t * self.config.batch + j) % n]).collect();
            let loss = self.train_step(&batch)?;
            on_step(t, loss);
            losses.push(loss);
        }
        Ok(losses)
    }

    /// Mean unknown-region L1 over `samples` at the current parameters.
    pub fn mean_loss(&self, samples: &[Sample]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let mut g = Graph::new();
            let (loss, _) = self.batch_loss(&mut g, &[s])?;
            total += g.value(loss).data()[0];
        }
        Ok(total / samples.len().max(1) as f64)
    }

    pub fn into_net(self) -> MattingNet {
        self.net
    }
}
