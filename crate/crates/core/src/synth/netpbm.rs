//! Binary netpbm I/O (P6 color, P5 gray, maxval 255) and dataset manifests.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ImagePair;

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_pnm(path: &Path, magic: &str, t: &Tensor, channels: usize) -> Result<()> {
    let s = t.shape();
    if s.len() != 3 || s[0] != channels {
        return Err(Error::shape(format!("{magic} image needs [{channels}, H, W], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut bytes = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let d = t.data();
    for k in 0..h * w {
        for c in 0..channels {
            bytes.push(to_byte(d[c * h * w + k]));
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_pnm(path: &Path, magic: &str, channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != magic {
        return Err(bad(&format!("expected {magic}, found {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad header field {s:?}")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(bad(&format!("only maxval 255 is supported, found {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(bad("empty image"));
    }
    pos += 1; // single whitespace byte after maxval
    let need = w * h * channels;
    if bytes.len() < pos + need {
        return Err(bad(&format!("expected {need} bytes of pixel data, found {}", bytes.len().saturating_sub(pos))));
    }
    Ok((h, w, bytes[pos..pos + need].to_vec()))
}

/// Writes `[3, H, W]` values in `[0, 1]` as P6.
pub fn write_ppm(path: &Path, t: &Tensor) -> Result<()> {
    write_pnm(path, "P6", t, 3)
}

/// Writes `[1, H, W]` values in `[0, 1]` as P5.
pub fn write_pgm(path: &Path, t: &Tensor) -> Result<()> {
    write_pnm(path, "P5", t, 1)
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let (h, w, px) = read_pnm(path, "P6", 3)?;
    let mut data = vec![0.0; 3 * h * w];
    for (k, rgb) in px.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + k] = rgb[c] as f64 / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data)
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let (h, w, px) = read_pnm(path, "P5", 1)?;
    Tensor::new(&[1, h, w], px.iter().map(|&b| b as f64 / 255.0).collect())
}

/// Writes a trimap as P5 with levels 0, 128, 255.
pub fn write_trimap(path: &Path, t: &Tensor) -> Result<()> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 1 {
        return Err(Error::shape(format!("trimap needs [1, H, W], got {s:?}")));
    }
    let mut bytes = format!("P5\n{} {}\n255\n", s[2], s[1]).into_bytes();
    for &v in t.data() {
        bytes.push(match v {
            v if v == 0.0 => 0,
            v if v == 0.5 => 128,
            v if v == 1.0 => 255,
            v => return Err(Error::input(format!("trimap value {v} is not 0, 0.5 or 1"))),
        });
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a P5 trimap; any byte other than 0, 128 or 255 is an input error.
pub fn read_trimap(path: &Path) -> Result<Tensor> {
    let (h, w, px) = read_pnm(path, "P5", 1)?;
    let data = px
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(0.0),
            128 => Ok(0.5),
            255 => Ok(1.0),
            _ => Err(Error::input(format!(
                "{}: trimap byte {b} at pixel {i} is not 0, 128 or 255",
                path.display()
            ))),
        })
        .collect::<Result<Vec<f64>>>()?;
    Tensor::new(&[1, h, w], data)
}

/// Paths of one dataset item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub alpha: PathBuf,
    pub trimap: PathBuf,
}

/// Writes `NNNN_image.ppm`, `NNNN_alpha.pgm` and `NNNN_trimap.pgm` per pair
/// plus `manifest.txt` listing the three file names per line. Returns the
/// manifest path.
pub fn write_dataset(dir: &Path, pairs: &[ImagePair]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (i, p) in pairs.iter().enumerate() {
        let names = [format!("{i:04}_image.ppm"), format!("{i:04}_alpha.pgm"), format!("{i:04}_trimap.pgm")];
        write_ppm(&dir.join(&names[0]), &p.image)?;
        write_pgm(&dir.join(&names[1]), &p.alpha)?;
        write_trimap(&dir.join(&names[2]), &p.trimap)?;
        manifest += &format!("{} {} {}\n", names[0], names[1], names[2]);
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a manifest; relative paths are resolved against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::format(path, format!("line {}: expected three paths", n + 1)));
            }
            let p = |s: &str| base.join(s);
            Ok(ManifestEntry { image: p(parts[0]), alpha: p(parts[1]), trimap: p(parts[2]) })
        })
        .collect()
}
