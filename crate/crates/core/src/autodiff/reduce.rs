use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

impl Graph {
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let m = d.iter().sum::<f64>() / d.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(m))
    }

    /// Row-wise softmax of a matrix, stabilized by subtracting each row's max.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::shape(format!("softmax_rows needs a matrix, got {s:?}")));
        }
        let n = s[1];
        let mut out = self.data(a).to_vec();
        for row in out.chunks_exact_mut(n) {
            softmax_in_place(row);
        }
        let v = Tensor::from_parts(s.to_vec(), out);
        Ok(self.push(Op::SoftmaxRows(a), v))
    }

    /// Maximum along `axis`, which is removed from the shape (a rank-1 input
    /// reduces to shape `[1]`). Returns the values and, for every output
    /// element, the index along `axis` that won. Ties go to the lowest index.
    pub fn max_over_axis(&mut self, x: Var, axis: usize) -> Result<(Var, Vec<usize>)> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::shape(format!("max_over_axis: axis {axis} out of range for {s:?}")));
        }
        let outer: usize = s[..axis].iter().product();
        let extent = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let src = self.data(x);
        let mut values = Vec::with_capacity(outer * inner);
        let mut winners = Vec::with_capacity(outer * inner);
        let mut flat = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * extent * inner + i;
                let mut best = 0;
                for k in 1..extent {
                    if src[base + k * inner] > src[base + best * inner] {
                        best = k;
                    }
                }
                values.push(src[base + best * inner]);
                winners.push(best);
                flat.push(base + best * inner);
            }
        }
        let mut out_shape: Vec<usize> = s[..axis].iter().chain(&s[axis + 1..]).copied().collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let v = Tensor::from_parts(out_shape, values);
        Ok((self.push(Op::MaxOverAxis { x, argmax: flat }, v), winners))
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub(super) fn softmax_rows_backward(acc: &mut Accumulator<'_>, a: Var, y: &[f64], dy: &[f64]) {
    let n = acc.graph().shape(a)[1];
    acc.add_with(a, |g| {
        for ((grow, yrow), drow) in g.chunks_exact_mut(n).zip(y.chunks_exact(n)).zip(dy.chunks_exact(n)) {
            let dot: f64 = yrow.iter().zip(drow).map(|(y, d)| y * d).sum();
            for j in 0..n {
                grow[j] += yrow[j] * (drow[j] - dot);
            }
        }
    });
}
