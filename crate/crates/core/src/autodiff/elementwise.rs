use super::{Accumulator, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

impl Graph {
    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{op}: operands {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_parts(self.shape(a).to_vec(), data)
    }

    fn map_unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape(a).to_vec(), self.data(a).iter().map(|x| f(*x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        assert!(c.is_finite());
        let v = self.map_unary(a, |x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    /// `x[c, ...] + b[c]` for `x` of shape `[C, ...]`.
    pub fn add_channel(&mut self, x: Var, b: Var) -> Result<Var> {
        let inner = self.channel_inner("add_channel", x, b)?;
        let bv = self.data(b);
        let data = self.data(x).iter().enumerate().map(|(i, v)| v + bv[i / inner]).collect();
        let v = Tensor::from_parts(self.shape(x).to_vec(), data);
        Ok(self.push(Op::AddChannel(x, b), v))
    }

    /// `x[c, ...] * s[c]` for `x` of shape `[C, ...]`.
    pub fn mul_channel(&mut self, x: Var, s: Var) -> Result<Var> {
        let inner = self.channel_inner("mul_channel", x, s)?;
        let sv = self.data(s);
        let data = self.data(x).iter().enumerate().map(|(i, v)| v * sv[i / inner]).collect();
        let v = Tensor::from_parts(self.shape(x).to_vec(), data);
        Ok(self.push(Op::MulChannel(x, s), v))
    }

    /// `x[..., j] + b[j]`, broadcasting over all leading axes.
    pub fn add_last(&mut self, x: Var, b: Var) -> Result<Var> {
        let n = self.last_extent("add_last", x, b)?;
        let bv = self.data(b);
        let data = self.data(x).iter().enumerate().map(|(i, v)| v + bv[i % n]).collect();
        let v = Tensor::from_parts(self.shape(x).to_vec(), data);
        Ok(self.push(Op::AddLast(x, b), v))
    }

    /// `x[..., j] * s[j]`, broadcasting over all leading axes.
    pub fn mul_last(&mut self, x: Var, s: Var) -> Result<Var> {
        let n = self.last_extent("mul_last", x, s)?;
        let sv = self.data(s);
        let data = self.data(x).iter().enumerate().map(|(i, v)| v * sv[i % n]).collect();
        let v = Tensor::from_parts(self.shape(x).to_vec(), data);
        Ok(self.push(Op::MulLast(x, s), v))
    }

    fn channel_inner(&self, op: &str, x: Var, c: Var) -> Result<usize> {
        let xs = self.shape(x);
        let cs = self.shape(c);
        if cs.len() != 1 || xs[0] != cs[0] {
            return Err(Error::shape(format!("{op}: per-channel operand {cs:?} does not match {xs:?}")));
        }
        Ok(xs[1..].iter().product())
    }

    fn last_extent(&self, op: &str, x: Var, c: Var) -> Result<usize> {
        let xs = self.shape(x);
        let cs = self.shape(c);
        if cs.len() != 1 || xs[xs.len() - 1] != cs[0] {
            return Err(Error::shape(format!("{op}: trailing operand {cs:?} does not match {xs:?}")));
        }
        Ok(cs[0])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, f64::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, |x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, gelu);
        self.push(Op::Gelu(a), v)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub(super) fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub(super) fn add_channel_backward(acc: &mut Accumulator<'_>, x: Var, b: Var, dy: &[f64]) {
    acc.add(x, dy);
    let c = acc.graph().shape(b)[0];
    let inner = dy.len() / c;
    acc.add_with(b, |g| {
        for (ch, gb) in g.iter_mut().enumerate() {
            *gb += dy[ch * inner..(ch + 1) * inner].iter().sum::<f64>();
        }
    });
}

pub(super) fn mul_channel_backward(acc: &mut Accumulator<'_>, x: Var, s: Var, dy: &[f64]) {
    let graph = acc.graph();
    let (xv, sv) = (graph.data(x), graph.data(s));
    let inner = dy.len() / sv.len();
    acc.add_with(x, |g| {
        for (i, gx) in g.iter_mut().enumerate() {
            *gx += dy[i] * sv[i / inner];
        }
    });
    acc.add_with(s, |g| {
        for (ch, gs) in g.iter_mut().enumerate() {
            let r = ch * inner..(ch + 1) * inner;
            *gs += dy[r.clone()].iter().zip(&xv[r]).map(|(d, x)| d * x).sum::<f64>();
        }
    });
}

pub(super) fn add_last_backward(acc: &mut Accumulator<'_>, x: Var, b: Var, dy: &[f64]) {
    acc.add(x, dy);
    let n = acc.graph().shape(b)[0];
    acc.add_with(b, |g| {
        for row in dy.chunks_exact(n) {
            g.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
    });
}

pub(super) fn mul_last_backward(acc: &mut Accumulator<'_>, x: Var, s: Var, dy: &[f64]) {
    let graph = acc.graph();
    let (xv, sv) = (graph.data(x), graph.data(s));
    let n = sv.len();
    acc.add_with(x, |g| {
        for (i, gx) in g.iter_mut().enumerate() {
            *gx += dy[i] * sv[i % n];
        }
    });
    acc.add_with(s, |g| {
        for (row, xrow) in dy.chunks_exact(n).zip(xv.chunks_exact(n)) {
            for j in 0..n {
                g[j] += row[j] * xrow[j];
            }
        }
    });
}
