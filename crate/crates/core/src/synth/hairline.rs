use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Shape parameters of the procedural foregrounds, as fractions of the
/// image width where relevant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HairlineParams {
    pub min_strands: usize,
    pub max_strands: usize,
    /// Body semi-axes are drawn from this range.
    pub body_radius: (f64, f64),
    pub strand_length: (f64, f64),
    /// Strand width in pixels.
    pub strand_width: (f64, f64),
}

impl Default for HairlineParams {
    fn default() -> Self {
        Self {
            min_strands: 1,
            max_strands: 2,
            body_radius: (0.22, 0.28),
            strand_length: (0.15, 0.25),
            strand_width: (1.0, 2.0),
        }
    }
}

/// Snaps alpha to multiples of 1/255 so mattes survive 8-bit storage
/// unchanged. Values within 2/255 of 0 or 1 snap to the end point, which
/// keeps the cores of the matte exactly opaque or transparent.
pub fn quantize_alpha(a: f64) -> f64 {
    let k = (a.clamp(0.0, 1.0) * 255.0).round();
    if k >= 253.0 {
        1.0
    } else if k <= 2.0 {
        0.0
    } else {
        k / 255.0
    }
}

fn quantize_color(c: f64) -> f64 {
    (c.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Random unit vector, by rejection sampling in the unit disc.
fn unit(rng: &mut SplitMix64) -> (f64, f64) {
    loop {
        let (x, y) = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        let r2 = x * x + y * y;
        if r2 > 1e-4 && r2 <= 1.0 {
            let r = r2.sqrt();
            return (x / r, y / r);
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Foreground colors `[3, H, W]` and alpha `[1, H, W]`: an anti-aliased
/// elliptical body with `n_strands` quadratic-curve strands growing out of
/// it. Only integer arithmetic, `+ - * /` and `sqrt` are used, so output is
/// identical on every IEEE-754 platform.
pub fn gen_hairline_foreground(seed: u64, height: usize, width: usize, n_strands: usize, p: &HairlineParams) -> Result<(Tensor, Tensor)> {
    if n_strands == 0 {
        return Err(Error::config("at least one strand is required"));
    }
    if height < 4 || width < 4 {
        return Err(Error::config(format!("image {height}x{width} is too small")));
    }
    let mut rng = SplitMix64::new(seed);
    let (hf, wf) = (height as f64, width as f64);
    let scale = hf.min(wf);
    let cx = wf / 2.0 + rng.uniform(-0.1, 0.1) * wf;
    let cy = hf / 2.0 + rng.uniform(-0.1, 0.1) * hf;
    let rx = rng.uniform(p.body_radius.0, p.body_radius.1) * scale;
    let ry = rng.uniform(p.body_radius.0, p.body_radius.1) * scale;
    let body_color = [rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)];
    let strand_color = [rng.uniform(0.5, 1.0), rng.uniform(0.4, 0.9), rng.uniform(0.1, 0.6)];

    // body coverage from 4x4 supersampling
    let mut body = vec![0.0; height * width];
    for i in 0..height {
        for j in 0..width {
            let mut hits = 0;
            for si in 0..4 {
                for sj in 0..4 {
                    let y = i as f64 + (si as f64 + 0.5) / 4.0;
                    let x = j as f64 + (sj as f64 + 0.5) / 4.0;
                    let (u, v) = ((x - cx) / rx, (y - cy) / ry);
                    if u * u + v * v <= 1.0 {
                        hits += 1;
                    }
                }
            }
            body[i * width + j] = hits as f64 / 16.0;
        }
    }

    const SEGMENTS: usize = 24;
    let mut strands = vec![0.0f64; height * width];
    for _ in 0..n_strands {
        let (ux, uy) = unit(&mut rng);
        let root = (cx + 0.9 * ux * rx, cy + 0.9 * uy * ry);
        let (jx, jy) = unit(&mut rng);
        let (dx, dy) = {
            let (x, y) = (ux + 0.4 * jx, uy + 0.4 * jy);
            let n = (x * x + y * y).sqrt().max(1e-9);
            (x / n, y / n)
        };
        let len = rng.uniform(p.strand_length.0, p.strand_length.1) * scale;
        let bend = rng.uniform(-0.35, 0.35) * len;
        let tip = (root.0 + dx * len, root.1 + dy * len);
        let ctrl = (root.0 + dx * len / 2.0 - dy * bend, root.1 + dy * len / 2.0 + dx * bend);
        let half_width = rng.uniform(p.strand_width.0, p.strand_width.1) / 2.0;
        let pts: Vec<(f64, f64)> = (0..=SEGMENTS)
            .map(|s| {
                let t = s as f64 / SEGMENTS as f64;
                let (a, b, c) = ((1.0 - t) * (1.0 - t), 2.0 * (1.0 - t) * t, t * t);
                (a * root.0 + b * ctrl.0 + c * tip.0, a * root.1 + b * ctrl.1 + c * tip.1)
            })
            .collect();
        for i in 0..height {
            for j in 0..width {
                let q = (j as f64 + 0.5, i as f64 + 0.5);
                let d = pts.windows(2).map(|w| segment_distance(q, w[0], w[1])).fold(f64::INFINITY, f64::min);
                let cov = (half_width + 0.5 - d).clamp(0.0, 1.0);
                let k = i * width + j;
                strands[k] = strands[k].max(cov);
            }
        }
    }

    let alpha: Vec<f64> = body.iter().zip(&strands).map(|(b, s)| quantize_alpha(b.max(*s))).collect();
    let mut fg = vec![0.0; 3 * height * width];
    for c in 0..3 {
        for k in 0..height * width {
            let s = if strands[k] > body[k] { strands[k] } else { 0.0 };
            fg[c * height * width + k] = quantize_color(body_color[c] * (1.0 - s) + strand_color[c] * s);
        }
    }
    Ok((Tensor::new(&[3, height, width], fg)?, Tensor::new(&[1, height, width], alpha)?))
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Background `[3, H, W]`: a linear color gradient plus bilinearly
/// smoothed value noise on an 8-pixel lattice.
pub fn gen_background(seed: u64, height: usize, width: usize) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let c0 = [rng.next_f64(), rng.next_f64(), rng.next_f64()];
    let c1 = [rng.next_f64(), rng.next_f64(), rng.next_f64()];
    let (gx, gy) = unit(&mut rng);
    let cell = 8usize;
    let (lh, lw) = (height / cell + 2, width / cell + 2);
    let lattice: Vec<f64> = (0..3 * lh * lw).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let amp = 0.15;
    let diag = ((height * height + width * width) as f64).sqrt();
    let mut out = vec![0.0; 3 * height * width];
    for i in 0..height {
        for j in 0..width {
            let t = (((j as f64 - width as f64 / 2.0) * gx + (i as f64 - height as f64 / 2.0) * gy) / diag + 0.5).clamp(0.0, 1.0);
            let (fy, fx) = (i as f64 / cell as f64, j as f64 / cell as f64);
            let (iy, ix) = (fy as usize, fx as usize);
            let (ty, tx) = (smoothstep(fy - iy as f64), smoothstep(fx - ix as f64));
            for c in 0..3 {
                let l = |y: usize, x: usize| lattice[(c * lh + y) * lw + x];
                let top = l(iy, ix) * (1.0 - tx) + l(iy, ix + 1) * tx;
                let bot = l(iy + 1, ix) * (1.0 - tx) + l(iy + 1, ix + 1) * tx;
                let noise = top * (1.0 - ty) + bot * ty;
                let v = c0[c] * (1.0 - t) + c1[c] * t + amp * noise;
                out[(c * height + i) * width + j] = quantize_color(v);
            }
        }
    }
    Tensor::from_parts(vec![3, height, width], out)
}
