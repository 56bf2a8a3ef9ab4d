//! Compositing, trimap generation, a procedural fine-structure dataset and
//! netpbm image I/O.

mod hairline;
mod netpbm;
mod trimap;

pub use hairline::{gen_background, gen_hairline_foreground, quantize_alpha, HairlineParams};
pub use netpbm::{
    read_manifest, read_pgm, read_ppm, read_trimap, write_dataset, write_pgm, write_ppm, write_trimap, ManifestEntry,
};
pub use trimap::{dilate, erode, trimap_from_alpha, TrimapParams};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::Tensor;

/// `I = alpha F + (1 - alpha) B` per pixel and channel. `fg` and `bg` are
/// `[C, H, W]`, `alpha` is `[1, H, W]` or `[H, W]` with values in `[0, 1]`.
pub fn composite(fg: &Tensor, bg: &Tensor, alpha: &Tensor) -> Result<Tensor> {
    let s = fg.shape();
    if s.len() != 3 || bg.shape() != s {
        return Err(Error::shape(format!("foreground {s:?} and background {:?} must match as [C, H, W]", bg.shape())));
    }
    let plane = s[1] * s[2];
    if alpha.numel() != plane || alpha.shape().iter().rev().take(2).product::<usize>() != plane {
        return Err(Error::shape(format!("alpha {:?} does not cover a {}x{} image", alpha.shape(), s[1], s[2])));
    }
    if let Some(v) = alpha.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::input(format!("alpha value {v} outside [0, 1]")));
    }
    let a = alpha.data();
    let out = fg
        .data()
        .iter()
        .zip(bg.data())
        .enumerate()
        .map(|(i, (f, b))| {
            let al = a[i % plane];
            al * f + (1.0 - al) * b
        })
        .collect();
    Tensor::new(s, out)
}

/// Co-registered foreground, background, alpha, composite and trimap.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub fg: Tensor,
    pub bg: Tensor,
    pub alpha: Tensor,
    pub image: Tensor,
    pub trimap: Tensor,
}

impl ImagePair {
    /// Builds the composite and trimap from the layers.
    pub fn from_layers(fg: Tensor, bg: Tensor, alpha: Tensor, trimap: &TrimapParams) -> Result<Self> {
        let image = composite(&fg, &bg, &alpha)?;
        let trimap = trimap_from_alpha(&alpha, trimap)?;
        Ok(Self { fg, bg, alpha, image, trimap })
    }

    /// Largest deviation of the stored composite from the compositing
    /// equation.
    pub fn composite_error(&self) -> f64 {
        match composite(&self.fg, &self.bg, &self.alpha) {
            Ok(c) => c.max_abs_diff(&self.image),
            Err(_) => f64::INFINITY,
        }
    }

    /// Fraction of pixels in the trimap's unknown band.
    pub fn unknown_fraction(&self) -> f64 {
        let t = self.trimap.data();
        t.iter().filter(|&&v| v == 0.5).count() as f64 / t.len() as f64
    }
}

/// Procedural dataset: hairline foregrounds over gradient/noise
/// backgrounds. Pair `i` depends only on `(seed, i)`.
pub fn make_dataset(n: usize, seed: u64, height: usize, width: usize) -> Result<Vec<ImagePair>> {
    make_dataset_with(n, seed, height, width, &HairlineParams::default(), &TrimapParams::default())
}

pub fn make_dataset_with(
    n: usize,
    seed: u64,
    height: usize,
    width: usize,
    hair: &HairlineParams,
    tri: &TrimapParams,
) -> Result<Vec<ImagePair>> {
    if n == 0 {
        return Err(Error::config("dataset size must be at least 1"));
    }
    (0..n as u64)
        .map(|i| {
            let s = derive_seed(seed, i);
            let mut rng = SplitMix64::new(s);
            let strands = rng.range(hair.min_strands, hair.max_strands + 1);
            let (fg, alpha) = gen_hairline_foreground(rng.next_u64(), height, width, strands, hair)?;
            let bg = gen_background(rng.next_u64(), height, width);
            ImagePair::from_layers(fg, bg, alpha, tri)
        })
        .collect()
}
