//! The GAN game: dataset statistics, backprop against finite differences,
//! and the finite-difference Hessian-vector product against an exact
//! second-order oracle.

mod common;

use common::rng;
use dualgap::mlp::Mlp;
use dualgap::mog::{fd_hvp, mode_coverage, sample_dataset, MogGanGame, DATASET_SIZE, MODE_CENTERS};
use dualgap::{Game, JointPoint, Matrix, Vector};
use rand::Rng;

#[test]
fn dataset_has_three_balanced_tight_modes() {
    let data = sample_dataset(3, DATASET_SIZE);
    assert_eq!(data.len(), 5000);
    let n = data.len() as f64;
    let (p, expected) = (1.0 / 3.0, n / 3.0);
    let sigma = (n * p * (1.0 - p)).sqrt();
    let mut outliers = 0;
    let mut counts = [0usize; 3];
    for &x in &data {
        match MODE_CENTERS.iter().position(|c| (x - c).abs() <= 0.5) {
            Some(i) => counts[i] += 1,
            None => outliers += 1,
        }
    }
    assert!(outliers <= 1, "{outliers} samples far from every mode");
    for c in counts {
        assert!((c as f64 - expected).abs() <= 3.0 * sigma, "mode count {c}");
    }
    let mean = data.iter().sum::<f64>() / n;
    assert!(mean.abs() <= 0.2, "mean {mean}");
}

#[test]
fn coverage_of_reference_distributions() {
    let data = sample_dataset(11, DATASET_SIZE);
    for f in mode_coverage(&data, &MODE_CENTERS, 0.5).unwrap() {
        assert!((f - 1.0 / 3.0).abs() <= 0.03, "{f}");
    }
    let mut r = rng("coverage/uniform");
    let uniform: Vec<f64> = (0..60_000).map(|_| r.gen_range(-6.0..6.0)).collect();
    for f in mode_coverage(&uniform, &MODE_CENTERS, 0.5).unwrap() {
        assert!((f - 1.0 / 12.0).abs() <= 0.005, "{f}");
    }
    assert!(mode_coverage(&[], &MODE_CENTERS, 0.5).is_err());
}

fn check_backprop(game: &MogGanGame, p: &JointPoint, label: &str) {
    let (_, gu, gv) = game.value_and_grads(p).unwrap();
    let grad = JointPoint::new(gu, gv).flatten();
    let x = p.flatten();
    let mut r = rng(label);
    for _ in 0..20 {
        let i = r.gen_range(0..x.len());
        let h = 1e-5 * x[i].abs().max(1.0);
        let at = |d: f64| {
            let mut y = x.clone();
            y[i] += d;
            let q = JointPoint::from_flat(&y, p.dim_u());
            game.value(&q.u, &q.v)
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let err = (grad[i] - fd).abs() / fd.abs().max(grad[i].abs()).max(1e-4);
        assert!(err <= 1e-4, "{label}: coordinate {i}: backprop {} vs fd {fd}", grad[i]);
    }
}

#[test]
fn backprop_matches_fd_at_init_and_after_training() {
    let game = MogGanGame::new(1);
    let init = game.init_params(1);
    check_backprop(&game, &init, "backprop/init");

    // A checkpoint away from initialization: a few large simultaneous steps.
    let mut p = init;
    for _ in 0..5 {
        let (_, gu, gv) = game.value_and_grads(&p).unwrap();
        p = JointPoint::new(&p.u - gu * 0.5, &p.v + gv * 0.5);
    }
    check_backprop(&game, &p, "backprop/trained");
}

#[test]
fn full_batch_gradients_are_bit_identical() {
    let game = MogGanGame::with_size(4, 500);
    let p = game.init_params(4);
    assert_eq!(game.value_and_grads(&p).unwrap(), game.value_and_grads(&p).unwrap());
}

/// Value, two directional first derivatives and the mixed second
/// derivative, carried together through the computation.
#[derive(Clone, Copy, Debug)]
struct HyperDual {
    f: f64,
    a: f64,
    b: f64,
    ab: f64,
}

impl HyperDual {
    fn constant(f: f64) -> Self {
        Self { f, a: 0.0, b: 0.0, ab: 0.0 }
    }

    fn add(self, o: Self) -> Self {
        Self { f: self.f + o.f, a: self.a + o.a, b: self.b + o.b, ab: self.ab + o.ab }
    }

    fn mul(self, o: Self) -> Self {
        Self {
            f: self.f * o.f,
            a: self.a * o.f + self.f * o.a,
            b: self.b * o.f + self.f * o.b,
            ab: self.ab * o.f + self.a * o.b + self.b * o.a + self.f * o.ab,
        }
    }

    fn scale(self, s: f64) -> Self {
        Self { f: self.f * s, a: self.a * s, b: self.b * s, ab: self.ab * s }
    }

    /// Apply a scalar function given its first two derivatives at `f`.
    fn chain(self, g: f64, g1: f64, g2: f64) -> Self {
        Self { f: g, a: g1 * self.a, b: g1 * self.b, ab: g1 * self.ab + g2 * self.a * self.b }
    }

    /// `ln σ(x)`: first derivative `1 − σ`, second `−σ(1 − σ)`.
    fn log_sigmoid(self) -> Self {
        let s = 1.0 / (1.0 + (-self.f).exp());
        self.chain(s.ln(), 1.0 - s, -s * (1.0 - s))
    }

    /// `ln(1 − σ(x))`: first derivative `−σ`, second `−σ(1 − σ)`.
    fn log_one_minus_sigmoid(self) -> Self {
        let s = 1.0 / (1.0 + (-self.f).exp());
        self.chain((1.0 - s).ln(), -s, -s * (1.0 - s))
    }
}

/// The one-layer micro GAN: `G(z) = w z + b`, `D(x) = σ(a x + c)`, params
/// ordered `(w, b, a, c)` like the flat layout of two `[1, 1]` networks.
fn micro_value(params: [HyperDual; 4], data: &[f64], noise: &[f64]) -> HyperDual {
    let [w, b, a, c] = params;
    let mut real = HyperDual::constant(0.0);
    for &x in data {
        real = real.add(a.scale(x).add(c).log_sigmoid());
    }
    let mut fake = HyperDual::constant(0.0);
    for &z in noise {
        let g = w.scale(z).add(b);
        fake = fake.add(a.mul(g).add(c).log_one_minus_sigmoid());
    }
    real.scale(1.0 / data.len() as f64).add(fake.scale(1.0 / noise.len() as f64))
}

/// Exact `H·d` column by column: seed direction `a` with `d` and
/// direction `b` with each unit vector.
fn exact_hvp(x: &[f64; 4], d: &[f64; 4], data: &[f64], noise: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (j, o) in out.iter_mut().enumerate() {
        let params = std::array::from_fn(|i| HyperDual { f: x[i], a: d[i], b: f64::from(u8::from(i == j)), ab: 0.0 });
        *o = micro_value(params, data, noise).ab;
    }
    out
}

#[test]
fn fd_hvp_matches_exact_second_derivatives_on_micro_net() {
    let data = sample_dataset(5, 200);
    let mut r = rng("micro/noise");
    let noise: Vec<f64> = (0..200).map(|_| r.gen_range(-2.0..2.0)).collect();
    let game = MogGanGame::from_parts(Mlp::new(vec![1, 1]), Mlp::new(vec![1, 1]), &data, Matrix::from_row_slice(1, 200, &noise))
        .unwrap();
    assert_eq!((game.dim_u(), game.dim_v()), (2, 2));
    for _ in 0..10 {
        let x: [f64; 4] = std::array::from_fn(|_| r.gen_range(-0.8..0.8));
        let d: [f64; 4] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
        let p = JointPoint::from_slices(&x[..2], &x[2..]);
        let approx = fd_hvp(&game, &p, &Vector::from_row_slice(&d));
        let exact = Vector::from_row_slice(&exact_hvp(&x, &d, &data, &noise));
        let err = (&approx - &exact).norm() / exact.norm().max(1e-8);
        assert!(err <= 1e-6, "fd {approx} vs exact {exact}");
        // The value itself must agree with the independent forward pass.
        let v = micro_value(x.map(HyperDual::constant), &data, &noise).f;
        assert!((game.value(&p.u, &p.v) - v).abs() <= 1e-12);
    }
}
