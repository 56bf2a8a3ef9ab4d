use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(outer, axis extent, inner)` view of a shape around `axis`.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(Op::Reshape(a), v))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape(format!("concat: {s:?} incompatible with {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = split_at_axis(&base, axis);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis] * inner;
                data.extend_from_slice(&self.data(*v)[o * len..(o + 1) * len]);
            }
        }
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.push(Op::Concat { inputs: inputs.to_vec(), axis }, value))
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::shape(format!("narrow({axis}, {start}, {len}) out of range for {s:?}")));
        }
        let (outer, extent, inner) = split_at_axis(&s, axis);
        let src = self.data(x);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = s;
        out_shape[axis] = len;
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.push(Op::Narrow { x, axis, start }, value))
    }
}

pub(super) fn concat_backward(acc: &mut Accumulator<'_>, inputs: &[Var], axis: usize, dy: &[f64]) {
    let graph = acc.graph();
    let (outer, _, inner) = split_at_axis(graph.shape(inputs[0]), axis);
    let total: usize = inputs.iter().map(|v| graph.shape(*v)[axis]).sum();
    let mut offset = 0;
    for v in inputs {
        let len = graph.shape(*v)[axis] * inner;
        acc.add_with(*v, |g| {
            for o in 0..outer {
                let src = o * total * inner + offset;
                g[o * len..(o + 1) * len]
                    .iter_mut()
                    .zip(&dy[src..src + len])
                    .for_each(|(g, d)| *g += d);
            }
        });
        offset += len;
    }
}

pub(super) fn narrow_backward(
    acc: &mut Accumulator<'_>,
    x: Var,
    axis: usize,
    start: usize,
    out_shape: &[usize],
    dy: &[f64],
) {
    let (outer, extent, inner) = split_at_axis(acc.graph().shape(x), axis);
    let len = out_shape[axis];
    acc.add_with(x, |g| {
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            g[base..base + len * inner]
                .iter_mut()
                .zip(&dy[o * len * inner..(o + 1) * len * inner])
                .for_each(|(g, d)| *g += d);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_narrow_recovers_parts() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_fn(&[2, 2, 3], |i| i as f64));
        let b = g.leaf(Tensor::from_fn(&[2, 1, 3], |i| 100.0 + i as f64));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 3, 3]);
        let a2 = g.narrow(c, 1, 0, 2).unwrap();
        let b2 = g.narrow(c, 1, 2, 1).unwrap();
        assert_eq!(g.value(a2), g.value(a));
        assert_eq!(g.value(b2), g.value(b));
    }

    #[test]
    fn concat_rejects_mismatch() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::ones(&[2, 2]));
        let b = g.leaf(Tensor::ones(&[3, 3]));
        assert!(g.concat(&[a, b], 0).is_err());
        assert!(g.concat(&[], 0).is_err());
    }

    #[test]
    fn narrow_bounds_checked() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::ones(&[4, 2]));
        assert!(g.narrow(a, 0, 3, 2).is_err());
        assert!(g.narrow(a, 2, 0, 1).is_err());
    }

    #[test]
    fn reshape_checks_numel() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::ones(&[4, 2]));
        assert!(g.reshape(a, &[3, 3]).is_err());
        let r = g.reshape(a, &[2, 2, 2]).unwrap();
        assert_eq!(g.shape(r), &[2, 2, 2]);
    }
}
