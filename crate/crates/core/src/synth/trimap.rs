use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Trimap thresholds and structuring-element radii.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrimapParams {
    pub r_dilate: usize,
    pub r_erode: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for TrimapParams {
    fn default() -> Self {
        Self { r_dilate: 3, r_erode: 3, lo: 0.01, hi: 0.99 }
    }
}

/// Binary erosion with a `(2r+1)^2` square. Positions outside the image do
/// not count against a pixel.
pub fn erode(mask: &[bool], h: usize, w: usize, r: usize) -> Vec<bool> {
    morph(mask, h, w, r, true)
}

/// Binary dilation with a `(2r+1)^2` square.
pub fn dilate(mask: &[bool], h: usize, w: usize, r: usize) -> Vec<bool> {
    morph(mask, h, w, r, false)
}

fn morph(mask: &[bool], h: usize, w: usize, r: usize, all: bool) -> Vec<bool> {
    // separable: rows then columns
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; h * w];
        for i in 0..h {
            for j in 0..w {
                let (lo, hi, len) = if horizontal { (j, j, w) } else { (i, i, h) };
                let from = lo.saturating_sub(r);
                let to = (hi + r).min(len - 1);
                let at = |t: usize| if horizontal { src[i * w + t] } else { src[t * w + j] };
                out[i * w + j] = if all { (from..=to).all(at) } else { (from..=to).any(at) };
            }
        }
        out
    };
    pass(&pass(mask, true), false)
}

/// Three-level trimap from an alpha matte: 1 on the eroded `alpha >= hi`
/// core, 0 on the eroded `alpha <= lo` core, 0.5 elsewhere and on a
/// dilated band around every partially transparent pixel.
pub fn trimap_from_alpha(alpha: &Tensor, p: &TrimapParams) -> Result<Tensor> {
    let s = alpha.shape();
    if s.len() < 2 {
        return Err(Error::shape(format!("alpha must be [.., H, W], got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if alpha.numel() != h * w {
        return Err(Error::shape(format!("alpha must hold a single plane, got {s:?}")));
    }
    let a = alpha.data();
    if let Some(v) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::input(format!("alpha value {v} outside [0, 1]")));
    }
    let fg = erode(&a.iter().map(|&v| v >= p.hi).collect::<Vec<_>>(), h, w, p.r_erode);
    let bg = erode(&a.iter().map(|&v| v <= p.lo).collect::<Vec<_>>(), h, w, p.r_erode);
    let band = dilate(&a.iter().map(|&v| v > p.lo && v < p.hi).collect::<Vec<_>>(), h, w, p.r_dilate);
    let t = (0..h * w)
        .map(|i| {
            if band[i] {
                0.5
            } else if fg[i] {
                1.0
            } else if bg[i] {
                0.0
            } else {
                0.5
            }
        })
        .collect();
    Tensor::new(s, t)
}
