//! Independent reference implementations used by the integration tests.
//! Everything here is written with plain loops over `f64` slices and never
//! calls into the tensor kernel.

#![allow(dead_code)]

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dense cross-correlation, zero padded so the output keeps `h x w`.
/// `x` is `[c, h, w]`, `k` is `[c_out, c / groups, kh, kw]`.
pub fn dense_conv_same(x: &[f64], c: usize, h: usize, w: usize, k: &[f64], c_out: usize, kh: usize, kw: usize, groups: usize) -> Vec<f64> {
    let cin_g = c / groups;
    let cout_g = c_out / groups;
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        let grp = o / cout_g;
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for ci in 0..cin_g {
                    let cx = grp * cin_g + ci;
                    for a in 0..kh {
                        for b in 0..kw {
                            let y = i as isize + a as isize - (kh / 2) as isize;
                            let z = j as isize + b as isize - (kw / 2) as isize;
                            if y < 0 || z < 0 || y >= h as isize || z >= w as isize {
                                continue;
                            }
                            acc += k[((o * cin_g + ci) * kh + a) * kw + b] * x[(cx * h + y as usize) * w + z as usize];
                        }
                    }
                }
                out[(o * h + i) * w + j] = acc;
            }
        }
    }
    out
}

/// One-channel `1 x k` (horizontal) or `k x 1` pass over an `h x w` plane.
pub fn line_conv(plane: &[f64], h: usize, w: usize, kern: &[f64], horizontal: bool) -> Vec<f64> {
    let r = (kern.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let mut acc = 0.0;
            for (t, kv) in kern.iter().enumerate() {
                let off = t as isize - r;
                let (y, z) = if horizontal { (i, j + off) } else { (i + off, j) };
                if y >= 0 && z >= 0 && y < h as isize && z < w as isize {
                    acc += kv * plane[(y * w as isize + z) as usize];
                }
            }
            out[(i * w as isize + j) as usize] = acc;
        }
    }
    out
}

/// Mean and `sqrt(max(var, eps))` of a plane, biased variance.
pub fn plane_stats(p: &[f64], eps: f64) -> (f64, f64) {
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let var = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.max(eps).sqrt())
}

/// A directional branch as its kernel passes: `(taps, horizontal)`.
pub type BranchPasses = Vec<(Vec<f64>, bool)>;

/// Single-channel morphology path written out step by step: run each
/// branch, standardize it, mix the branch standard deviations with a
/// zero-padded 1-D kernel, squash with a sigmoid, scale, take the max.
pub fn scalar_morpho(q: &[f64], h: usize, w: usize, branches: &[BranchPasses], reweight: &[f64], eps: f64) -> Vec<f64> {
    let mut normalized = Vec::new();
    let mut stds = Vec::new();
    for passes in branches {
        let mut cur = q.to_vec();
        for (taps, horizontal) in passes {
            cur = line_conv(&cur, h, w, taps, *horizontal);
        }
        let (mean, std) = plane_stats(&cur, eps);
        normalized.push(cur.iter().map(|v| (v - mean) / std).collect::<Vec<f64>>());
        stds.push(std);
    }
    let r = (reweight.len() / 2) as isize;
    let weights: Vec<f64> = (0..stds.len() as isize)
        .map(|i| {
            let mut acc = 0.0;
            for (t, kv) in reweight.iter().enumerate() {
                let j = i + t as isize - r;
                if j >= 0 && (j as usize) < stds.len() {
                    acc += kv * stds[j as usize];
                }
            }
            sigmoid(acc)
        })
        .collect();
    (0..h * w)
        .map(|p| {
            let mut best = f64::NEG_INFINITY;
            for b in 0..branches.len() {
                let v = weights[b] * normalized[b][p];
                if v > best {
                    best = v;
                }
            }
            best
        })
        .collect()
}

/// Single-head attention with explicit loops: `softmax(q k^T / sqrt(d)) v`.
pub fn attention(q: &[f64], k: &[f64], v: &[f64], n: usize, d: usize) -> Vec<f64> {
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| (0..d).map(|c| q[i * d + c] * k[j * d + c]).sum::<f64>() * scale)
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for j in 0..n {
            for c in 0..d {
                out[i * d + c] += e[j] / z * v[j * d + c];
            }
        }
    }
    out
}

/// Mirror-pads an `h x w` plane by `r` on every side: the edge pixel is
/// repeated, then the walk continues back inward.
fn mirror_pad(img: &[f64], h: usize, w: usize, r: usize) -> (Vec<f64>, usize, usize) {
    let (ch, cw) = (h + 2 * r, w + 2 * r);
    let mut cur = vec![0.0; ch * cw];
    let pad = r as isize;
    for i in 0..ch {
        for j in 0..cw {
            let mirror = |p: isize, n: isize| -> usize {
                let mut p = p;
                loop {
                    if p < 0 {
                        p = -p - 1;
                    } else if p >= n {
                        p = 2 * n - p - 1;
                    } else {
                        return p as usize;
                    }
                }
            };
            let y = mirror(i as isize - pad, h as isize);
            let x = mirror(j as isize - pad, w as isize);
            cur[i * cw + j] = img[y * w + x];
        }
    }
    (cur, ch, cw)
}

/// Gradient magnitude by direct 2-D correlation with the full
/// Gaussian-derivative filters, each normalized to unit L2 norm.
pub fn dense_gradient_magnitude(img: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as usize;
    let n = 2 * r + 1;
    let mut fx = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let y = a as f64 - r as f64;
            let x = b as f64 - r as f64;
            let g = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
            fx[a * n + b] = -x * g;
        }
    }
    let norm = fx.iter().map(|v| v * v).sum::<f64>().sqrt();
    fx.iter_mut().for_each(|v| *v /= norm);
    let (pad, _, pw) = mirror_pad(img, h, w, r);
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let (mut gx, mut gy) = (0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let v = pad[(i + a) * pw + j + b];
                    gx += fx[a * n + b] * v;
                    // the y filter is the transpose of the x filter
                    gy += fx[b * n + a] * v;
                }
            }
            out[i * w + j] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Largest 4-connected region by breadth-first flood fill; scanning seeds in
/// raster order and replacing only on a strictly larger size.
pub fn flood_fill_largest(on: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut label = vec![usize::MAX; h * w];
    let mut best: (usize, Option<usize>) = (0, None);
    let mut next = 0;
    for seed in 0..h * w {
        if !on[seed] || label[seed] != usize::MAX {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([seed]);
        label[seed] = next;
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (i, j) = (p / w, p % w);
            let mut nb = Vec::new();
            if i > 0 {
                nb.push(p - w);
            }
            if i + 1 < h {
                nb.push(p + w);
            }
            if j > 0 {
                nb.push(p - 1);
            }
            if j + 1 < w {
                nb.push(p + 1);
            }
            for q in nb {
                if on[q] && label[q] == usize::MAX {
                    label[q] = next;
                    queue.push_back(q);
                }
            }
        }
        if size > best.0 {
            best = (size, Some(next));
        }
        next += 1;
    }
    label.iter().map(|l| Some(*l) == best.1).collect()
}

/// Connectivity error (raw, unscaled) over `mask` with thresholds
/// `k / levels`. A pixel's level is the highest threshold up to which it
/// stayed inside the source region at every threshold.
pub fn conn_raw(pred: &[f64], gt: &[f64], mask: &[bool], h: usize, w: usize, levels: usize) -> f64 {
    let members: Vec<Vec<bool>> = (1..levels)
        .map(|k| {
            let t = k as f64 / levels as f64;
            let on: Vec<bool> = (0..h * w).map(|i| pred[i] >= t && gt[i] >= t).collect();
            flood_fill_largest(&on, h, w)
        })
        .collect();
    let mut total = 0.0;
    for i in 0..h * w {
        if !mask[i] {
            continue;
        }
        let kept = members.iter().take_while(|m| m[i]).count();
        let level = if kept == levels - 1 { 1.0 } else { kept as f64 / levels as f64 };
        let phi = |a: f64| {
            let d = a - level;
            if d >= 0.15 {
                1.0 - d
            } else {
                1.0
            }
        };
        total += (phi(pred[i]) - phi(gt[i])).abs();
    }
    total
}
