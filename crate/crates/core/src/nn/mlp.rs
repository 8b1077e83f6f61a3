use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply<T: Real>(self, z: &mut Array2<T>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|x| if x > T::zero() { x } else { T::zero() }),
            Activation::Tanh => z.mapv_inplace(|x| x.tanh()),
        }
    }

    /// Multiplies `grad` by the activation derivative, written in terms of
    /// the activation output `y`.
    fn backprop<T: Real>(self, y: &Array2<T>, grad: &mut Array2<T>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(grad).and(y).for_each(|g, &y| {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }),
            Activation::Tanh => Zip::from(grad)
                .and(y)
                .for_each(|g, &y| *g *= T::one() - y * y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// Shape `(inputs, outputs)`.
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub act: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Layer activations from a forward pass: `values[0]` is the input and
/// `values[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub values: Vec<Array2<T>>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.values.last().expect("trace has an input")
    }
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub dw: Vec<Array2<T>>,
    pub db: Vec<Array1<T>>,
}

impl<T: Real> Grads<T> {
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.dw.len());
        for (w, b) in self.dw.iter().zip(&self.db) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            *a += b;
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += b;
        }
    }
}

impl<T: Real> Mlp<T> {
    /// `dims` lists the input width, each hidden width and the output width.
    /// Hidden layers use `hidden`, the last layer `output`. Weights are
    /// uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new<R: Rng>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    T::c(rng.random_range(-limit..limit))
                });
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                    act: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| Dense {
                w: Array2::zeros((dims[i], dims[i + 1])),
                b: Array1::zeros(dims[i + 1]),
                act: if i + 1 == n { output } else { hidden },
            })
            .collect();
        Self { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.b.len()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.b.len()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} inputs", self.input_dim()),
                found: format!("{} inputs", x.ncols()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut layers = self.layers.iter();
        let first = layers.next().expect("non-empty network");
        let mut h = x.dot(&first.w) + &first.b;
        first.act.apply(&mut h);
        for layer in layers {
            h = h.dot(&layer.w) + &layer.b;
            layer.act.apply(&mut h);
        }
        h
    }

    pub fn forward_trace(&self, x: ArrayView2<T>) -> Trace<T> {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_owned());
        for layer in &self.layers {
            let mut h = values.last().unwrap().dot(&layer.w) + &layer.b;
            layer.act.apply(&mut h);
            values.push(h);
        }
        Trace { values }
    }

    /// Backpropagates `grad_out` (gradient of the loss with respect to the
    /// network output). Returns parameter gradients and, when asked, the
    /// gradient with respect to the input.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        grad_out: Array2<T>,
        want_input_grad: bool,
    ) -> (Grads<T>, Option<Array2<T>>) {
        let n = self.layers.len();
        let mut dw = Vec::with_capacity(n);
        let mut db = Vec::with_capacity(n);
        let mut delta = grad_out;
        let mut input_grad = None;
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            layer.act.backprop(&trace.values[i + 1], &mut delta);
            let x = &trace.values[i];
            let g = x.t().dot(&delta);
            dw.push(if g.is_standard_layout() {
                g
            } else {
                g.as_standard_layout().into_owned()
            });
            db.push(delta.sum_axis(Axis(0)));
            if i > 0 || want_input_grad {
                let next = delta.dot(&layer.w.t());
                if i == 0 {
                    input_grad = Some(next);
                    break;
                }
                delta = next;
            }
        }
        dw.reverse();
        db.reverse();
        (Grads { dw, db }, input_grad)
    }

    /// Gradient with respect to the input only.
    pub fn input_grad(&self, trace: &Trace<T>, grad_out: Array2<T>) -> Array2<T> {
        let mut delta = grad_out;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            layer.act.backprop(&trace.values[i + 1], &mut delta);
            delta = delta.dot(&layer.w.t());
        }
        delta
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.w.as_slice().expect("standard layout"));
            out.push(layer.b.as_slice().expect("standard layout"));
        }
        out
    }

    /// `self <- (1 - tau) * self + tau * source`.
    pub fn soft_update(&mut self, source: &Mlp<T>, tau: T) {
        let keep = T::one() - tau;
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut dst.w)
                .and(&src.w)
                .for_each(|d, &s| *d = keep * *d + tau * s);
            Zip::from(&mut dst.b)
                .and(&src.b)
                .for_each(|d, &s| *d = keep * *d + tau * s);
        }
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: l.w.mapv(|x| U::c(x.f64())),
                    b: l.b.mapv(|x| U::c(x.f64())),
                    act: l.act,
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use ndarray::array;

    fn loss(net: &Mlp<f64>, x: &Array2<f64>) -> f64 {
        // Weighted sum so every output contributes a distinct gradient.
        let y = net.forward(x.view());
        y.indexed_iter()
            .map(|((r, c), v)| v * (1.0 + r as f64 + 0.5 * c as f64))
            .sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream_rng(3, Stream::NetInit, 0);
        for act in [Activation::Relu, Activation::Tanh] {
            let mut net: Mlp<f64> = Mlp::new(&[3, 6, 5, 2], act, Activation::Tanh, &mut rng);
            let x = array![[0.3, -0.2, 0.9], [-1.1, 0.4, 0.05]];
            let trace = net.forward_trace(x.view());
            let grad_out = Array2::from_shape_fn((2, 2), |(r, c)| {
                1.0 + r as f64 + 0.5 * c as f64
            });
            let (grads, input_grad) = net.backward(&trace, grad_out.clone(), true);
            let analytic = grads.flatten();
            let eps = 1e-6;
            let mut k = 0;
            for t in 0..net.layers.len() * 2 {
                let len = net.tensors()[t].len();
                for i in 0..len {
                    let orig = net.tensors()[t][i];
                    net.tensors_mut()[t][i] = orig + eps;
                    let up = loss(&net, &x);
                    net.tensors_mut()[t][i] = orig - eps;
                    let down = loss(&net, &x);
                    net.tensors_mut()[t][i] = orig;
                    let fd = (up - down) / (2.0 * eps);
                    let a = analytic[k];
                    assert!(
                        (a - fd).abs() <= 1e-6 * (1.0 + a.abs().max(fd.abs())),
                        "{act:?} tensor {t} index {i}: {a} vs {fd}"
                    );
                    k += 1;
                }
            }
            let input_grad = input_grad.unwrap();
            assert_eq!(input_grad, net.input_grad(&trace, grad_out));
            for c in 0..3 {
                let mut up = x.clone();
                up[[0, c]] += eps;
                let mut down = x.clone();
                down[[0, c]] -= eps;
                let fd = (loss(&net, &up) - loss(&net, &down)) / (2.0 * eps);
                assert!((input_grad[[0, c]] - fd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn soft_update_extremes() {
        let mut rng = stream_rng(1, Stream::NetInit, 0);
        let a: Mlp<f64> = Mlp::new(&[2, 4, 1], Activation::Relu, Activation::Identity, &mut rng);
        let b: Mlp<f64> = Mlp::new(&[2, 4, 1], Activation::Relu, Activation::Identity, &mut rng);
        let mut c = a.clone();
        c.soft_update(&b, 0.0);
        assert_eq!(c, a);
        c.soft_update(&b, 1.0);
        assert_eq!(c, b);
    }

    #[test]
    fn dims_and_shape_check() {
        let net: Mlp<f32> = Mlp::zeros(&[17, 8, 4], Activation::Relu, Activation::Identity);
        assert_eq!(net.dims(), vec![17, 8, 4]);
        assert_eq!(net.param_count(), 17 * 8 + 8 + 8 * 4 + 4);
        let x = Array2::<f32>::zeros((1, 12));
        assert!(matches!(net.check_input(&x.view()), Err(Error::ShapeMismatch { .. })));
    }
}
