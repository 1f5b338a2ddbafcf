#![allow(dead_code)]

use dualgap::rng::{stream, StreamRng};
use dualgap::{JointPoint, Vector};
use rand::Rng;

pub fn rng(label: &str) -> StreamRng {
    stream(20_241_015, label)
}

pub fn uniform_point(rng: &mut StreamRng, dim_u: usize, dim_v: usize, lo: f64, hi: f64) -> JointPoint {
    let u: Vec<f64> = (0..dim_u).map(|_| rng.gen_range(lo..hi)).collect();
    let v: Vec<f64> = (0..dim_v).map(|_| rng.gen_range(lo..hi)).collect();
    JointPoint::from_slices(&u, &v)
}

/// Central-difference gradient of `f` at `x` with per-coordinate step
/// `h * max(1, |x_i|)`.
pub fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |i, _| {
        let step = h * x[i].abs().max(1.0);
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += step;
        minus[i] -= step;
        (f(&plus) - f(&minus)) / (plus[i] - minus[i])
    })
}

/// Normwise relative error with an absolute floor.
pub fn rel_err(got: &Vector, want: &Vector, floor: f64) -> f64 {
    (got - want).norm() / want.norm().max(floor)
}
