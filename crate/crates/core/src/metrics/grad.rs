use crate::error::Result;
use crate::tensor::Tensor;

use super::{prepare, warn_if_empty, Metric};

/// Standard deviation of the Gaussian-derivative filters.
pub const GRAD_SIGMA: f64 = 1.4;

/// Index into `0..n` after symmetric reflection about the borders
/// (`... c b a | a b c ... x y z | z y x ...`). Works for offsets larger
/// than the image.
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Smoothing and derivative taps on `-r..=r`, `r = ceil(3 sigma)`, each
/// scaled to unit L2 norm. The 2-D x-derivative filter is
/// `smooth(dy) * deriv(dx)`, which then also has unit norm.
pub fn gaussian_derivative_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (3.0 * sigma).ceil() as isize;
    let gauss = |t: f64| (-t * t / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let smooth: Vec<f64> = (-r..=r).map(|t| gauss(t as f64)).collect();
    let deriv: Vec<f64> = (-r..=r).map(|t| -(t as f64) / (sigma * sigma) * gauss(t as f64)).collect();
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    (unit(smooth), unit(deriv))
}

/// Correlates each row (`along_x`) or column with `taps`, reflecting at the
/// borders.
fn filter_1d(img: &[f64], h: usize, w: usize, taps: &[f64], along_x: bool) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (k, tap) in taps.iter().enumerate() {
                let off = k as isize - r;
                let (y, x) = if along_x {
                    (i, reflect_index(j as isize + off, w))
                } else {
                    (reflect_index(i as isize + off, h), j)
                };
                acc += tap * img[y * w + x];
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Per-pixel `sqrt(gx^2 + gy^2)` of an `h x w` plane.
pub fn gradient_magnitude(img: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let (smooth, deriv) = gaussian_derivative_kernels(sigma);
    let gx = filter_1d(&filter_1d(img, h, w, &deriv, true), h, w, &smooth, false);
    let gy = filter_1d(&filter_1d(img, h, w, &smooth, true), h, w, &deriv, false);
    gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).collect()
}

/// Squared difference of gradient magnitudes summed over the mask, divided
/// by 1000.
pub fn grad_metric(pred: &Tensor, gt: &Tensor, mask: &Tensor, sigma: f64) -> Result<f64> {
    let m = prepare(pred, gt, mask)?;
    warn_if_empty(&m, "grad");
    let gp = gradient_magnitude(pred.data(), m.h, m.w, sigma);
    let gg = gradient_magnitude(gt.data(), m.h, m.w, sigma);
    let raw: f64 = gp
        .iter()
        .zip(&gg)
        .zip(&m.mask)
        .filter(|(_, on)| **on)
        .map(|((a, b), _)| (a - b) * (a - b))
        .sum();
    Ok(Metric::Grad.to_reported(raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection() {
        let idx: Vec<usize> = (-4..8).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(idx, vec![2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0, 1]);
        assert!((-20..20).all(|i| reflect_index(i, 1) == 0));
    }

    #[test]
    fn kernels_have_radius_five_and_unit_norm() {
        let (s, d) = gaussian_derivative_kernels(GRAD_SIGMA);
        assert_eq!((s.len(), d.len()), (11, 11));
        for v in [&s, &d] {
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-14);
        }
        assert_eq!(d[5], 0.0);
        for k in 0..5 {
            assert_eq!(s[k], s[10 - k]);
            assert_eq!(d[k], -d[10 - k]);
        }
    }

    #[test]
    fn constant_planes_have_no_gradient() {
        let a = Tensor::full(&[6, 7], 0.2);
        let b = Tensor::full(&[6, 7], 0.9);
        let g = gradient_magnitude(a.data(), 6, 7, GRAD_SIGMA);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        assert!(grad_metric(&a, &b, &Tensor::ones(&[6, 7]), GRAD_SIGMA).unwrap() < 1e-28);
    }
}
