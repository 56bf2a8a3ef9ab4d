//! Resolved run configuration: built-in defaults, then the config file,
//! then `--set` overrides, then `--seed`.
//!
//! Keys are flat and prefixed by section (`net.depth`, `train.lr`, ...).
//! The snapshot written next to every run lists every key, so feeding it
//! back through `--config` reproduces the run.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use maga_core::kv::{self, KeyValue};
use maga_core::net::{NetConfig, TrainConfig};
use maga_core::Result;

use crate::error::CliError;

/// Where training and evaluation data come from.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    /// Manifest of `image alpha trimap` lines; empty means synthesize.
    pub manifest: String,
    /// Number of synthesized training pairs.
    pub n: usize,
    /// Number of held-out synthesized pairs used by `ablate`.
    pub eval_n: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { manifest: String::new(), n: 16, eval_n: 4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    /// Random cases per differentiable op.
    pub op_seeds: usize,
    /// Random parameter draws for the whole-network check.
    pub network_draws: usize,
    /// Probed coordinates per parameter tensor in the whole-network check.
    pub per_tensor: usize,
    /// Op whose analytic gradient is deliberately perturbed, or `none`.
    pub corrupt: String,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { op_seeds: 20, network_draws: 5, per_tensor: 3, corrupt: "none".into() }
    }
}

/// What `eval` scores against the ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionSource {
    /// Network prediction from the checkpoint.
    Net,
    /// The ground-truth alpha itself.
    GroundTruth,
    /// The trimap read as alpha (unknown band = 0.5).
    Trimap,
}

impl FromStr for PredictionSource {
    type Err = maga_core::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net" => Ok(Self::Net),
            "ground_truth" => Ok(Self::GroundTruth),
            "trimap" => Ok(Self::Trimap),
            _ => Err(maga_core::Error::Config(format!("unknown eval.source {s:?}, expected net, ground_truth or trimap"))),
        }
    }
}

impl Display for PredictionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Net => "net",
            Self::GroundTruth => "ground_truth",
            Self::Trimap => "trimap",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub checkpoint: String,
    pub source: PredictionSource,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { checkpoint: String::new(), source: PredictionSource::Net }
    }
}

/// Structural knob swept by `ablate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    KernelSize,
    BranchSet,
    NMagaBlocks,
}

impl FromStr for AblationAxis {
    type Err = maga_core::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel_size" => Ok(Self::KernelSize),
            "branch_set" => Ok(Self::BranchSet),
            "n_maga_blocks" => Ok(Self::NMagaBlocks),
            _ => Err(maga_core::Error::Config(format!(
                "unknown ablate.axis {s:?}, expected kernel_size, branch_set or n_maga_blocks"
            ))),
        }
    }
}

impl Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::KernelSize => "kernel_size",
            Self::BranchSet => "branch_set",
            Self::NMagaBlocks => "n_maga_blocks",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblateConfig {
    pub axis: AblationAxis,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { axis: AblationAxis::KernelSize }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferConfig {
    pub checkpoint: String,
    pub image: String,
    pub trimap: String,
    /// Optional ground-truth alpha; when set, metrics are reported.
    pub alpha: String,
}

/// Every setting of one run except the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub net: NetConfig,
    pub train: TrainConfig,
    /// Single-sample overfitting preset.
    pub overfit: bool,
    pub data: DataConfig,
    pub gradcheck: GradcheckConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
    pub infer: InferConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            net: NetConfig::default(),
            train: TrainConfig::default(),
            overfit: false,
            data: DataConfig::default(),
            gradcheck: GradcheckConfig::default(),
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
            infer: InferConfig::default(),
        }
    }
}

/// Settings applied before anything else when `train.overfit = true`.
const OVERFIT_PRESET: [(&str, &str); 6] = [
    ("data.n", "1"),
    ("train.batch", "1"),
    ("train.steps", "500"),
    ("train.lr", "0.003"),
    ("train.lr_schedule", "constant"),
    ("train.weight_decay", "0"),
];

impl RunConfig {
    /// Resolves the layered configuration. `file` is the config text,
    /// `overrides` the `--set` pairs in order.
    pub fn resolve(file: &str, overrides: &[String], seed: Option<u64>) -> std::result::Result<Self, CliError> {
        let mut pairs: Vec<(String, String, String)> = kv::parse_lines(file)?
            .into_iter()
            .map(|(line, k, v)| (format!("config line {line}"), k, v))
            .collect();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            pairs.push((format!("--set {o}"), k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = RunConfig::default();
        let overfit = pairs.iter().rev().find(|(_, k, _)| k == "train.overfit").map(|(_, _, v)| v.as_str());
        if overfit.map(|v| kv::parse::<bool>("train.overfit", v)).transpose()? == Some(true) {
            for (k, v) in OVERFIT_PRESET {
                cfg.set(k, v)?;
            }
        }
        for (origin, k, v) in &pairs {
            if !cfg.set(k, v)? {
                return Err(CliError::Usage(format!("{origin}: unknown key {k:?}")));
            }
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.net.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> std::result::Result<Self, CliError> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| CliError::Io(p.to_path_buf(), e))?,
            None => String::new(),
        };
        Self::resolve(&text, overrides, seed)
    }

    fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Applies one prefixed key; `Ok(false)` if no section knows it.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let Some((section, name)) = key.split_once('.') else {
            return Ok(match key {
                "seed" => {
                    self.seed = kv::parse(key, value)?;
                    true
                }
                _ => false,
            });
        };
        let v = value.trim();
        match (section, name) {
            // initialization follows the top-level seed
            ("net", "seed") => Ok(false),
            ("net", _) => self.net.set(name, v),
            ("train", "overfit") => {
                self.overfit = kv::parse(key, v)?;
                Ok(true)
            }
            ("train", _) => self.train.set(name, v),
            ("data", "manifest") => set_string(&mut self.data.manifest, v),
            ("data", "n") => set_parsed(&mut self.data.n, key, v),
            ("data", "eval_n") => set_parsed(&mut self.data.eval_n, key, v),
            ("gradcheck", "op_seeds") => set_parsed(&mut self.gradcheck.op_seeds, key, v),
            ("gradcheck", "network_draws") => set_parsed(&mut self.gradcheck.network_draws, key, v),
            ("gradcheck", "per_tensor") => set_parsed(&mut self.gradcheck.per_tensor, key, v),
            ("gradcheck", "corrupt") => set_string(&mut self.gradcheck.corrupt, v),
            ("eval", "checkpoint") => set_string(&mut self.eval.checkpoint, v),
            ("eval", "source") => set_value(&mut self.eval.source, v),
            ("ablate", "axis") => set_value(&mut self.ablate.axis, v),
            ("infer", "checkpoint") => set_string(&mut self.infer.checkpoint, v),
            ("infer", "image") => set_string(&mut self.infer.image, v),
            ("infer", "trimap") => set_string(&mut self.infer.trimap, v),
            ("infer", "alpha") => set_string(&mut self.infer.alpha, v),
            _ => Ok(false),
        }
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![("seed".to_string(), self.seed.to_string())];
        let prefixed = |p: &str, e: Vec<(&'static str, String)>| -> Vec<(String, String)> {
            e.into_iter().filter(|(k, _)| !(p == "net" && *k == "seed")).map(|(k, v)| (format!("{p}.{k}"), v)).collect()
        };
        out.extend(prefixed("net", self.net.entries()));
        out.extend(prefixed("train", self.train.entries()));
        let rest: [(&str, String); 15] = [
            ("train.overfit", self.overfit.to_string()),
            ("data.manifest", self.data.manifest.clone()),
            ("data.n", self.data.n.to_string()),
            ("data.eval_n", self.data.eval_n.to_string()),
            ("gradcheck.op_seeds", self.gradcheck.op_seeds.to_string()),
            ("gradcheck.network_draws", self.gradcheck.network_draws.to_string()),
            ("gradcheck.per_tensor", self.gradcheck.per_tensor.to_string()),
            ("gradcheck.corrupt", self.gradcheck.corrupt.clone()),
            ("eval.checkpoint", self.eval.checkpoint.clone()),
            ("eval.source", self.eval.source.to_string()),
            ("ablate.axis", self.ablate.axis.to_string()),
            ("infer.checkpoint", self.infer.checkpoint.clone()),
            ("infer.image", self.infer.image.clone()),
            ("infer.trimap", self.infer.trimap.clone()),
            ("infer.alpha", self.infer.alpha.clone()),
        ];
        out.extend(rest.into_iter().map(|(k, v)| (k.to_string(), v)));
        out
    }

    /// Snapshot text that resolves back to this configuration.
    pub fn snapshot(&self, command: &str) -> String {
        let mut s = format!("# resolved configuration of `maga {command}`\n");
        for (k, v) in self.entries() {
            s += &format!("{k} = {v}\n");
        }
        s
    }

    pub fn write_snapshot(&self, command: &str, out: &Path) -> std::result::Result<PathBuf, CliError> {
        let path = out.join("config.txt");
        fs::write(&path, self.snapshot(command)).map_err(|e| CliError::Io(path.clone(), e))?;
        Ok(path)
    }
}

fn set_string(field: &mut String, v: &str) -> Result<bool> {
    *field = v.to_string();
    Ok(true)
}

fn set_parsed<T: FromStr>(field: &mut T, key: &str, v: &str) -> Result<bool>
where
    T::Err: Display,
{
    *field = kv::parse(key, v)?;
    Ok(true)
}

fn set_value<T: FromStr<Err = maga_core::Error>>(field: &mut T, v: &str) -> Result<bool> {
    *field = v.parse()?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use maga_core::net::LrSchedule;

    #[test]
    fn snapshot_resolves_to_the_same_config() {
        let cfg = RunConfig::resolve(
            "net.depth = 3\nnet.n_maga_blocks = 1 # tail\n",
            &["train.lr=0.01".into(), "data.manifest = a b/m.txt".into()],
            Some(9),
        )
        .unwrap();
        assert_eq!((cfg.net.depth, cfg.train.adam.lr, cfg.seed, cfg.net.seed), (3, 0.01, 9, 9));
        assert_eq!(cfg.data.manifest, "a b/m.txt");
        let back = RunConfig::resolve(&cfg.snapshot("train"), &[], None).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::resolve("net.nope = 1\n", &[], None).is_err());
        assert!(RunConfig::resolve("", &["depth=2".into()], None).is_err());
        assert!(RunConfig::resolve("", &["net.seed=2".into()], None).is_err());
        assert!(RunConfig::resolve("", &["net.patch=5".into()], None).is_err());
        assert!(RunConfig::resolve("", &["ablate.axis=depth".into()], None).is_err());
        assert!(RunConfig::resolve("", &["noequals".into()], None).is_err());
    }

    #[test]
    fn overfit_preset_sits_under_explicit_settings() {
        let cfg = RunConfig::resolve("train.steps = 7\n", &["train.overfit=true".into()], None).unwrap();
        assert_eq!((cfg.data.n, cfg.train.batch, cfg.train.steps, cfg.train.adam.lr), (1, 1, 7, 0.003));
        assert_eq!(cfg.train.schedule, LrSchedule::Constant);
        let back = RunConfig::resolve(&cfg.snapshot("train"), &[], None).unwrap();
        assert_eq!(back, cfg);
    }
}
