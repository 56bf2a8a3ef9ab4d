//! Checkpoint directories: one `.magt` tensor dump per parameter, a
//! `manifest.txt` with `name shape role` lines and the network
//! configuration as `config.txt`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, KeyValue};
use crate::optim::ParamRole;
use crate::tensor::Tensor;

use super::config::NetConfig;
use super::model::MattingNet;

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn save_checkpoint(net: &MattingNet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for p in net.store.iter() {
        p.value.save(&dir.join(format!("{}.magt", p.name)))?;
        manifest += &format!("{} {} {}\n", p.name, shape_str(p.value.shape()), p.role.as_str());
    }
    let write = |file: &str, text: &str| {
        let path = dir.join(file);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write("manifest.txt", &manifest)?;
    write("config.txt", &kv::render(&net.config.entries()))
}

fn read_manifest(path: &Path) -> Result<Vec<CheckpointEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::format(path, format!("bad manifest line {line:?}"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let shape = parts[1].split('x').map(|d| d.parse::<usize>().map_err(|_| bad())).collect::<Result<_>>()?;
            let role = parts[2].parse().map_err(|_| bad())?;
            Ok(CheckpointEntry { name: parts[0].to_string(), shape, role })
        })
        .collect()
}

/// Loads a checkpoint. When `expected` is given, the stored configuration
/// must agree with it; in any case every stored tensor must match the
/// parameter layout implied by the configuration.
pub fn load_checkpoint(dir: &Path, expected: Option<&NetConfig>) -> Result<MattingNet> {
    let cfg_path = dir.join("config.txt");
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let mut cfg = NetConfig::default();
    kv::apply_all(&mut cfg, &text).map_err(|e| Error::format(&cfg_path, e.to_string()))?;
    if let Some(exp) = expected {
        let (have, want) = (cfg.entries(), exp.entries());
        for ((k, a), (_, b)) in have.iter().zip(&want) {
            if a != b && *k != "seed" {
                return Err(Error::shape(format!("checkpoint has {k} = {a}, configuration has {b}")));
            }
        }
    }
    let mut net = MattingNet::new(cfg)?;
    let entries = read_manifest(&dir.join("manifest.txt"))?;
    if entries.len() != net.store.len() {
        return Err(Error::shape(format!(
            "checkpoint lists {} tensors, configuration needs {}",
            entries.len(),
            net.store.len()
        )));
    }
    for e in entries {
        let id = net
            .store
            .id(&e.name)
            .ok_or_else(|| Error::shape(format!("checkpoint tensor {} is not a parameter of this network", e.name)))?;
        let t = Tensor::load(&dir.join(format!("{}.magt", e.name)))?;
        if t.shape() != e.shape.as_slice() {
            return Err(Error::shape(format!("{} has shape {:?}, manifest says {:?}", e.name, t.shape(), e.shape)));
        }
        net.store.set(id, t)?;
    }
    Ok(net)
}
