use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One directional branch. Kernels are `1 x k` (horizontal) and `k x 1`
/// (vertical); the composite branches apply one after the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    /// `1 x k`.
    Horizontal,
    /// `k x 1`, then `1 x k`.
    VerticalThenHorizontal,
    /// `k x 1`.
    Vertical,
    /// `1 x k`, then `k x 1`.
    HorizontalThenVertical,
}

impl Branch {
    /// Canonical stacking order. Branch position matters for tie-breaking in
    /// the max and for the channel-descriptor sequence.
    pub const ALL: [Branch; 4] = [
        Branch::Horizontal,
        Branch::VerticalThenHorizontal,
        Branch::Vertical,
        Branch::HorizontalThenVertical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Horizontal => "h",
            Branch::VerticalThenHorizontal => "vh",
            Branch::Vertical => "v",
            Branch::HorizontalThenVertical => "hv",
        }
    }

    fn bit(self) -> u8 {
        1 << Branch::ALL.iter().position(|b| *b == self).unwrap()
    }

    /// Kernel orientations in application order: `true` = horizontal `1 x k`.
    pub fn stages(self) -> &'static [bool] {
        match self {
            Branch::Horizontal => &[true],
            Branch::Vertical => &[false],
            Branch::VerticalThenHorizontal => &[false, true],
            Branch::HorizontalThenVertical => &[true, false],
        }
    }
}

/// Non-empty subset of [`Branch::ALL`].
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BranchSet(u8);

impl BranchSet {
    pub fn all() -> Self {
        BranchSet(0b1111)
    }

    pub fn new(branches: &[Branch]) -> Result<Self> {
        let bits = branches.iter().fold(0u8, |acc, b| acc | b.bit());
        if bits == 0 {
            return Err(Error::config("branch set must contain at least one branch"));
        }
        Ok(BranchSet(bits))
    }

    pub fn contains(self, b: Branch) -> bool {
        self.0 & b.bit() != 0
    }

    /// Members in canonical order.
    pub fn branches(self) -> Vec<Branch> {
        Branch::ALL.into_iter().filter(|b| self.contains(*b)).collect()
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// The five branch configurations of the branch ablation, in table order:
    /// `{h, v}`, `{vh, hv}`, `{v, vh, hv}`, `{h, v, vh}`, all four.
    pub fn ablation_rows() -> [BranchSet; 5] {
        use Branch::*;
        [
            BranchSet::new(&[Horizontal, Vertical]).unwrap(),
            BranchSet::new(&[VerticalThenHorizontal, HorizontalThenVertical]).unwrap(),
            BranchSet::new(&[Vertical, VerticalThenHorizontal, HorizontalThenVertical]).unwrap(),
            BranchSet::new(&[Horizontal, Vertical, VerticalThenHorizontal]).unwrap(),
            BranchSet::all(),
        ]
    }
}

impl fmt::Display for BranchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.branches().iter().map(|b| b.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl fmt::Debug for BranchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BranchSet({self})")
    }
}

impl FromStr for BranchSet {
    type Err = Error;

    /// Parses `h+v+vh+hv` (any order, `+` or `,` separated) or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(BranchSet::all());
        }
        let mut branches = Vec::new();
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            let b = Branch::ALL
                .into_iter()
                .find(|b| b.name() == part)
                .ok_or_else(|| Error::config(format!("unknown branch {part:?}, expected h, v, vh or hv")))?;
            branches.push(b);
        }
        BranchSet::new(&branches)
    }
}

/// Hyperparameters of one MAGA block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagaConfig {
    pub embed_dim: usize,
    pub heads: usize,
    /// Length of the directional kernels.
    pub kernel_size: usize,
    pub branches: BranchSet,
    /// Length of the 1-D kernel over the channel-descriptor sequence.
    pub reweight_kernel: usize,
    pub mlp_ratio: usize,
    pub norm_eps: f64,
    pub layer_norm_eps: f64,
}

impl Default for MagaConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            heads: 1,
            kernel_size: 3,
            branches: BranchSet::all(),
            reweight_kernel: 3,
            mlp_ratio: 4,
            norm_eps: 1e-5,
            layer_norm_eps: 1e-6,
        }
    }
}

impl MagaConfig {
    pub const KERNEL_SIZES: [usize; 3] = [3, 5, 7];

    pub fn validate(&self) -> Result<()> {
        if !Self::KERNEL_SIZES.contains(&self.kernel_size) {
            return Err(Error::config(format!("kernel_size must be 3, 5 or 7, got {}", self.kernel_size)));
        }
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "heads ({}) must divide embed_dim ({})",
                self.heads, self.embed_dim
            )));
        }
        if self.reweight_kernel % 2 == 0 {
            return Err(Error::config(format!("reweight kernel must be odd, got {}", self.reweight_kernel)));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::config("mlp_ratio must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let s: BranchSet = "hv, h".parse().unwrap();
        assert_eq!(s.branches(), vec![Branch::Horizontal, Branch::HorizontalThenVertical]);
        assert_eq!(s.to_string(), "h+hv");
        assert_eq!("all".parse::<BranchSet>().unwrap(), BranchSet::all());
        assert!("".parse::<BranchSet>().is_err());
        assert!("h+diag".parse::<BranchSet>().is_err());
    }

    #[test]
    fn ablation_rows_are_distinct() {
        let rows = BranchSet::ablation_rows();
        let lens: Vec<_> = rows.iter().map(|r| r.len()).collect();
        assert_eq!(lens, vec![2, 2, 3, 3, 4]);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(rows[i], rows[j]);
            }
        }
    }

    #[test]
    fn validation() {
        let ok = MagaConfig::default();
        ok.validate().unwrap();
        assert!(MagaConfig { kernel_size: 4, ..ok }.validate().is_err());
        assert!(MagaConfig { kernel_size: 9, ..ok }.validate().is_err());
        assert!(MagaConfig { heads: 3, ..ok }.validate().is_err());
        assert!(MagaConfig { reweight_kernel: 2, ..ok }.validate().is_err());
    }
}
