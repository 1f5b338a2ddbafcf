//! Small fully connected networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (`out × in`, column-major) followed by the bias. Hidden layers use
//! `tanh`; the last layer is linear.

use nalgebra::DMatrixView;
use rand::Rng;

use crate::point::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
}

/// Activations of every layer for one batch; column `i` is sample `i`.
#[derive(Clone, Debug)]
pub struct Forward {
    pub acts: Vec<Matrix>,
}

impl Forward {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("input layer is always present")
    }
}

/// `tanh` through a single `exp`; within an ulp of `f64::tanh` and about
/// twice as fast, which matters for full-batch passes.
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        Self { sizes }
    }

    /// 16 → 64 → 64 → 1.
    pub fn generator() -> Self {
        Self::new(vec![16, 64, 64, 1])
    }

    /// 1 → 64 → 64 → 1, producing a logit.
    pub fn discriminator() -> Self {
        Self::new(vec![1, 64, 64, 1])
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// `(weight offset, bias offset, in, out)` per layer.
    fn layout(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let entry = (off, off + out * inp, inp, out);
                off += out * inp + out;
                entry
            })
            .collect()
    }

    /// Glorot-uniform weights `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(&self, rng: &mut impl Rng) -> Vector {
        let mut params = Vector::zeros(self.num_params());
        for (w_off, b_off, inp, out) in self.layout() {
            let limit = (6.0 / (inp + out) as f64).sqrt();
            for x in params.rows_mut(w_off, b_off - w_off).iter_mut() {
                *x = rng.gen_range(-limit..limit);
            }
        }
        params
    }

    pub fn forward(&self, params: &Vector, x: &Matrix) -> Forward {
        assert_eq!(params.len(), self.num_params(), "parameter vector length");
        assert_eq!(x.nrows(), self.input_dim(), "input rows");
        let layout = self.layout();
        let last = layout.len() - 1;
        let mut acts = Vec::with_capacity(layout.len() + 1);
        acts.push(x.clone());
        for (l, &(w_off, b_off, inp, out)) in layout.iter().enumerate() {
            let w = DMatrixView::from_slice(&params.as_slice()[w_off..b_off], out, inp);
            let b = params.rows(b_off, out);
            let mut z = w * &acts[l];
            for mut col in z.column_iter_mut() {
                col += &b;
            }
            if l < last {
                z.apply(|v| *v = tanh(*v));
            }
            acts.push(z);
        }
        Forward { acts }
    }

    /// Backpropagate `d_out` (gradient of a scalar with respect to the
    /// outputs). Returns the parameter gradient (when `want_params`) and
    /// the input gradient (when `want_input`).
    pub fn backward(
        &self,
        params: &Vector,
        fwd: &Forward,
        d_out: &Matrix,
        want_params: bool,
        want_input: bool,
    ) -> (Option<Vector>, Option<Matrix>) {
        let layout = self.layout();
        let mut grad = want_params.then(|| Vector::zeros(self.num_params()));
        let mut delta = d_out.clone();
        for l in (0..layout.len()).rev() {
            let (w_off, b_off, inp, out) = layout[l];
            if let Some(g) = grad.as_mut() {
                let dw = &delta * fwd.acts[l].transpose();
                g.rows_mut(w_off, out * inp).copy_from_slice(dw.as_slice());
                g.rows_mut(b_off, out).copy_from(&delta.column_sum());
            }
            if l == 0 && !want_input {
                break;
            }
            let w = DMatrixView::from_slice(&params.as_slice()[w_off..b_off], out, inp);
            let mut back = w.transpose() * &delta;
            if l > 0 {
                // acts[l] is tanh output of the previous layer.
                back.zip_apply(&fwd.acts[l], |d, a| *d *= 1.0 - a * a);
            }
            delta = back;
        }
        let d_input = want_input.then_some(delta);
        (grad, d_input)
    }
}
