use crate::error::{Error, Result};
use crate::kv::{self, KeyValue};
use crate::maga::{BranchSet, MagaConfig};

/// Architecture of the matting network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    pub height: usize,
    pub width: usize,
    /// Patch size `s`; tokens live on an `H/s x W/s` grid.
    pub patch: usize,
    pub embed_dim: usize,
    pub depth: usize,
    /// How many encoder blocks use the morphology-aware query path. They are
    /// the last `n_maga_blocks` of the encoder; the rest use plain attention.
    pub n_maga_blocks: usize,
    pub heads: usize,
    pub kernel_size: usize,
    pub branches: BranchSet,
    pub reweight_kernel: usize,
    pub mlp_ratio: usize,
    /// Detail-branch widths at `H/2`, `H/4`, `H/8`.
    pub c2: usize,
    pub c4: usize,
    pub c8: usize,
    pub decoder_width: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            patch: 4,
            embed_dim: 32,
            depth: 2,
            n_maga_blocks: 2,
            heads: 1,
            kernel_size: 3,
            branches: BranchSet::all(),
            reweight_kernel: 3,
            mlp_ratio: 4,
            c2: 16,
            c4: 32,
            c8: 64,
            decoder_width: 32,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub const PATCH_SIZES: [usize; 3] = [4, 8, 16];

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    pub fn maga(&self) -> MagaConfig {
        MagaConfig {
            embed_dim: self.embed_dim,
            heads: self.heads,
            kernel_size: self.kernel_size,
            branches: self.branches,
            reweight_kernel: self.reweight_kernel,
            mlp_ratio: self.mlp_ratio,
            ..MagaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !Self::PATCH_SIZES.contains(&self.patch) {
            return Err(Error::config(format!("patch size must be 4, 8 or 16, got {}", self.patch)));
        }
        for (name, extent) in [("height", self.height), ("width", self.width)] {
            if extent % self.patch != 0 || extent % 8 != 0 {
                return Err(Error::config(format!(
                    "{name} {extent} must be divisible by the patch size {} and by 8",
                    self.patch
                )));
            }
            if extent < 4 * self.patch {
                return Err(Error::config(format!("{name} {extent} must be at least 4 x patch size")));
            }
        }
        if self.depth == 0 {
            return Err(Error::config("encoder depth must be positive"));
        }
        if self.n_maga_blocks > self.depth {
            return Err(Error::config(format!(
                "n_maga_blocks ({}) exceeds depth ({})",
                self.n_maga_blocks, self.depth
            )));
        }
        if [self.c2, self.c4, self.c8, self.decoder_width].contains(&0) {
            return Err(Error::config("channel widths must be positive"));
        }
        self.maga().validate()
    }

    /// True if encoder block `i` is a MAGA block.
    pub fn is_maga_block(&self, i: usize) -> bool {
        i >= self.depth - self.n_maga_blocks
    }
}

impl KeyValue for NetConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "height" => self.height = kv::parse(key, value)?,
            "width" => self.width = kv::parse(key, value)?,
            "patch" => self.patch = kv::parse(key, value)?,
            "embed_dim" => self.embed_dim = kv::parse(key, value)?,
            "depth" => self.depth = kv::parse(key, value)?,
            "n_maga_blocks" => self.n_maga_blocks = kv::parse(key, value)?,
            "heads" => self.heads = kv::parse(key, value)?,
            "kernel_size" => self.kernel_size = kv::parse(key, value)?,
            "branches" => self.branches = value.parse()?,
            "reweight_kernel" => self.reweight_kernel = kv::parse(key, value)?,
            "mlp_ratio" => self.mlp_ratio = kv::parse(key, value)?,
            "c2" => self.c2 = kv::parse(key, value)?,
            "c4" => self.c4 = kv::parse(key, value)?,
            "c8" => self.c8 = kv::parse(key, value)?,
            "decoder_width" => self.decoder_width = kv::parse(key, value)?,
            "seed" => self.seed = kv::parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("patch", self.patch.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("depth", self.depth.to_string()),
            ("n_maga_blocks", self.n_maga_blocks.to_string()),
            ("heads", self.heads.to_string()),
            ("kernel_size", self.kernel_size.to_string()),
            ("branches", self.branches.to_string()),
            ("reweight_kernel", self.reweight_kernel.to_string()),
            ("mlp_ratio", self.mlp_ratio.to_string()),
            ("c2", self.c2.to_string()),
            ("c4", self.c4.to_string()),
            ("c8", self.c8.to_string()),
            ("decoder_width", self.decoder_width.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        NetConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_geometry() {
        let ok = NetConfig::default();
        assert!(NetConfig { patch: 5, ..ok }.validate().is_err());
        assert!(NetConfig { height: 12, ..ok }.validate().is_err());
        assert!(NetConfig { height: 8, width: 8, ..ok }.validate().is_err());
        assert!(NetConfig { n_maga_blocks: 3, ..ok }.validate().is_err());
        assert!(NetConfig { kernel_size: 4, ..ok }.validate().is_err());
        assert!(NetConfig { height: 64, width: 64, patch: 16, ..ok }.validate().is_ok());
    }

    #[test]
    fn key_value_round_trip() {
        let cfg = NetConfig { kernel_size: 7, branches: "h+v".parse().unwrap(), seed: 9, ..NetConfig::default() };
        let text = kv::render(&cfg.entries());
        let mut back = NetConfig::default();
        kv::apply_all(&mut back, &text).unwrap();
        assert_eq!(back, cfg);
        assert!(!back.set("nope", "1").unwrap());
        assert!(back.set("depth", "two").is_err());
    }

    #[test]
    fn maga_blocks_sit_at_the_end() {
        let cfg = NetConfig { depth: 3, n_maga_blocks: 1, ..NetConfig::default() };
        assert_eq!((0..3).map(|i| cfg.is_maga_block(i)).collect::<Vec<_>>(), vec![false, false, true]);
    }
}
