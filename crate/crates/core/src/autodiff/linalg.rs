use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

impl Graph {
    /// `[m, n] x [n, p] -> [m, p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul: cannot multiply {sa:?} by {sb:?}")));
        }
        let (m, n, p) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.data(a), self.data(b), m, n, p);
        let v = Tensor::from_parts(vec![m, p], out);
        Ok(self.push(Op::Matmul(a, b), v))
    }

    /// Swaps the two axes of a matrix.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::shape(format!("transpose needs a matrix, got {s:?}")));
        }
        let (m, n) = (s[0], s[1]);
        let v = Tensor::from_parts(vec![n, m], transpose_raw(self.data(a), m, n));
        Ok(self.push(Op::Transpose(a), v))
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            let brow = &b[k * p..(k + 1) * p];
            for j in 0..p {
                row[j] += aik * brow[j];
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

pub(super) fn matmul_backward(acc: &mut Accumulator<'_>, a: Var, b: Var, dy: &[f64]) {
    let graph = acc.graph();
    let (sa, sb) = (graph.shape(a), graph.shape(b));
    let (m, n, p) = (sa[0], sa[1], sb[1]);
    let (av, bv) = (graph.data(a), graph.data(b));
    // dA = dY B^T, dB = A^T dY
    acc.add_with(a, |g| {
        let bt = transpose_raw(bv, n, p);
        let da = matmul_raw(dy, &bt, m, p, n);
        g.iter_mut().zip(da).for_each(|(g, d)| *g += d);
    });
    acc.add_with(b, |g| {
        let at = transpose_raw(av, m, n);
        let db = matmul_raw(&at, dy, n, m, p);
        g.iter_mut().zip(db).for_each(|(g, d)| *g += d);
    });
}

pub(super) fn transpose_backward(acc: &mut Accumulator<'_>, a: Var, dy: &[f64]) {
    let s = acc.graph().shape(a);
    let (m, n) = (s[0], s[1]);
    let back = transpose_raw(dy, n, m);
    acc.add(a, &back);
}
