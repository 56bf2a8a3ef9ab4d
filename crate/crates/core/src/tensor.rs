//! Dense row-major f64 tensors and the MAGT binary dump format.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Owned n-dimensional array. Values are always finite.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel = checked_numel(shape)?;
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite value {} at flat index {i}", data[i])));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Builds a tensor from values produced by internal kernels, which keep
    /// finiteness whenever their inputs are finite.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(value.is_finite());
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(&[1], value)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(&mut f).collect();
        assert!(data.iter().all(|v| v.is_finite()), "from_fn produced a non-finite value");
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(&self.shape, |i| f(self.data[i]))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn set_flat(&mut self, index: usize, value: f64) {
        assert!(value.is_finite());
        self.data[index] = value;
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Writes the MAGT dump: `b"MAGT"`, u32 version, u32 rank, u64 extents,
    /// then the f64 payload. All integers and floats little-endian.
    pub fn write_magt<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGT_MAGIC)?;
        w.write_all(&MAGT_VERSION.to_le_bytes())?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &e in &self.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_magt_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_magt(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_magt_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_magt_bytes(&bytes).map_err(|msg| Error::format(path, msg))
    }

    pub fn from_magt_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| "truncated header".to_string())?;
        if &magic != MAGT_MAGIC {
            return Err(format!("bad magic {magic:?}"));
        }
        let version = read_u32(&mut r)?;
        if version != MAGT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let e = read_u64(&mut r)?;
            shape.push(usize::try_from(e).map_err(|_| format!("extent {e} too large"))?);
        }
        let numel = checked_numel(&shape).map_err(|e| e.to_string())?;
        if r.len() != numel * 8 {
            return Err(format!("payload holds {} bytes, shape {shape:?} needs {}", r.len(), numel * 8));
        }
        let data = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(&shape, data).map_err(|e| e.to_string())
    }
}

const MAGT_MAGIC: &[u8; 4] = b"MAGT";
const MAGT_VERSION: u32 = 1;

fn read_u32(r: &mut &[u8]) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| "truncated header".to_string())?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> std::result::Result<u64, String> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| "truncated header".to_string())?;
    Ok(u64::from_le_bytes(b))
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("rank-0 tensors are not supported, use shape [1]"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("zero extent in shape {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::shape(format!("shape {shape:?} overflows")))
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} [", self.shape)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(Tensor::new(&[2], vec![1.0, f64::NAN]), Err(Error::Input(_))));
        assert!(matches!(Tensor::new(&[1], vec![f64::INFINITY]), Err(Error::Input(_))));
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(Tensor::new(&[2, 3], vec![0.0; 5]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new(&[0], vec![]), Err(Error::Shape(_))));
    }

    #[test]
    fn magt_header_layout() {
        let t = Tensor::new(&[2, 1], vec![1.0, -2.5]).unwrap();
        let b = t.to_magt_bytes();
        assert_eq!(&b[..4], b"MAGT");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[20..28].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(b[28..36].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(b[36..44].try_into().unwrap()), -2.5);
        assert_eq!(b.len(), 44);
    }

    #[test]
    fn magt_rejects_truncation_and_bad_magic() {
        let b = Tensor::ones(&[3]).to_magt_bytes();
        assert!(Tensor::from_magt_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Tensor::from_magt_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn magt_roundtrip(shape in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let n = shape.iter().product();
            let t = Tensor::new(&shape, (0..n).map(|_| rng.normal(0.0, 10.0)).collect()).unwrap();
            let back = Tensor::from_magt_bytes(&t.to_magt_bytes()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
