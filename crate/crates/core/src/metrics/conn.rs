use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{prepare, warn_if_empty, Metric};

/// Threshold spacing.
pub const CONN_STEP: f64 = 0.1;
/// Distances below this do not count as disconnected.
pub const CONN_DEAD_ZONE: f64 = 0.15;

/// Union-find root with path halving.
fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// The largest 4-connected component of `on` (`h x w`, row-major). Among
/// equally large components the one whose first pixel comes earliest in
/// raster order wins. All-false when nothing is on.
pub fn largest_component(on: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut parent: Vec<usize> = (0..h * w).collect();
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            if !on[k] {
                continue;
            }
            for n in [(j > 0).then(|| k - 1), (i > 0).then(|| k - w)].into_iter().flatten() {
                if on[n] {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, n));
                    if a != b {
                        // keep the smaller index as root so roots are first pixels
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        parent[hi] = lo;
                    }
                }
            }
        }
    }
    let mut size = vec![0usize; h * w];
    for k in 0..h * w {
        if on[k] {
            let r = find(&mut parent, k);
            size[r] += 1;
        }
    }
    // roots are component minima, so a strict comparison in index order
    // keeps the earliest of equal sizes
    let mut best: Option<usize> = None;
    for k in 0..h * w {
        if size[k] > 0 && best.map_or(true, |b| size[k] > size[b]) {
            best = Some(k);
        }
    }
    match best {
        None => vec![false; h * w],
        Some(b) => (0..h * w).map(|k| on[k] && find(&mut parent, k) == b).collect(),
    }
}

/// Per-pixel level `l`: thresholds are `k / K` for `k = 1..K-1` with
/// `K = 1 / step`. At each threshold the source region is the largest
/// 4-connected component of the pixels at or above it in both mattes; `l` is
/// the threshold just below the first one at which the pixel drops out of
/// the source region, or 1 if it never does.
pub fn connectivity_levels(pred: &[f64], gt: &[f64], h: usize, w: usize, step: f64) -> Result<Vec<f64>> {
    let levels = (1.0 / step).round();
    if !(levels >= 1.0) || (levels * step - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("threshold step {step} does not divide 1")));
    }
    let levels = levels as usize;
    let mut l: Vec<Option<f64>> = vec![None; h * w];
    for k in 1..levels {
        let theta = k as f64 / levels as f64;
        let on: Vec<bool> = pred.iter().zip(gt).map(|(p, g)| *p >= theta && *g >= theta).collect();
        let omega = largest_component(&on, h, w);
        let below = (k - 1) as f64 / levels as f64;
        for (li, inside) in l.iter_mut().zip(&omega) {
            if li.is_none() && !inside {
                *li = Some(below);
            }
        }
    }
    Ok(l.into_iter().map(|v| v.unwrap_or(1.0)).collect())
}

fn phi(alpha: f64, level: f64) -> f64 {
    let d = alpha - level;
    if d >= CONN_DEAD_ZONE {
        1.0 - d
    } else {
        1.0
    }
}

/// Connectivity error: `sum |phi(pred) - phi(gt)|` over the mask, divided by
/// 1000, with `phi = 1 - d [d >= 0.15]` and `d = alpha - l`.
pub fn conn_metric(pred: &Tensor, gt: &Tensor, mask: &Tensor, step: f64) -> Result<f64> {
    let m = prepare(pred, gt, mask)?;
    warn_if_empty(&m, "conn");
    let l = connectivity_levels(pred.data(), gt.data(), m.h, m.w, step)?;
    let raw: f64 = (0..m.h * m.w)
        .filter(|&i| m.mask[i])
        .map(|i| (phi(pred.data()[i], l[i]) - phi(gt.data()[i], l[i])).abs())
        .sum();
    Ok(Metric::Conn.to_reported(raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_component_ties_go_to_the_earliest() {
        #[rustfmt::skip]
        let on = [
            true, false, true,
            false, false, true,
            true, true, false,
        ];
        let c = largest_component(&on, 3, 3);
        assert_eq!(c, vec![false, false, true, false, false, true, false, false, false]);
        assert_eq!(largest_component(&[false; 4], 2, 2), vec![false; 4]);
    }

    #[test]
    fn component_merges_through_late_links() {
        // a U shape whose arms only meet on the bottom row
        #[rustfmt::skip]
        let on = [
            true, false, true,
            true, false, true,
            true, true, true,
        ];
        assert_eq!(largest_component(&on, 3, 3), on.to_vec());
    }

    #[test]
    fn step_must_divide_one() {
        assert!(connectivity_levels(&[0.0], &[0.0], 1, 1, 0.3).is_err());
        assert!(connectivity_levels(&[0.0], &[0.0], 1, 1, 0.25).is_ok());
    }

    #[test]
    fn empty_foreground_levels_are_zero() {
        let l = connectivity_levels(&[0.0; 4], &[0.0; 4], 2, 2, CONN_STEP).unwrap();
        assert_eq!(l, vec![0.0; 4]);
    }
}
