//! Stochastic realizable problems and the AdaGrad rate experiment.
//!
//! A realizable problem is a finite family of convex quadratics
//! `Q_z(x) = ½(x − x*)ᵀ A_z (x − x*)` that all share the minimizer `x*`.
//! Each step samples one member uniformly and uses its gradient; the error
//! of an average iterate is measured on the exact family mean.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dg::{adagrad_step_flat, AdaGradState};
use crate::error::{Error, Result};
use crate::point::{BoxDomain, Matrix, Vector};
use crate::rng::{indexed_stream, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct RealizableProblem {
    pub x_star: Vector,
    /// The PSD matrices `A_z`.
    pub family: Vec<Matrix>,
    /// Family mean of `A_z`.
    pub mean: Matrix,
    pub bounds: BoxDomain,
    /// `max_z λ_max(A_z)`.
    pub smoothness: f64,
    /// Diameter of `bounds`.
    pub diameter: f64,
}

fn lambda_max(a: &Matrix) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.max()
}

impl RealizableProblem {
    pub fn new(x_star: Vector, family: Vec<Matrix>, bounds: BoxDomain) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = x_star.len();
        if bounds.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: bounds.dim() });
        }
        if !bounds.contains(&x_star) {
            return Err(Error::Construction("x* lies outside the feasible box".into()));
        }
        let mut mean = Matrix::zeros(n, n);
        for a in &family {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
            }
            mean += a;
        }
        mean /= family.len() as f64;
        let smoothness = family.iter().map(lambda_max).fold(0.0, f64::max);
        if !(smoothness > 0.0 && smoothness.is_finite()) {
            return Err(Error::Construction(format!("smoothness constant {smoothness} is not positive")));
        }
        let diameter = bounds.diameter();
        Ok(Self { x_star, family, mean, bounds, smoothness, diameter })
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn value(&self, x: &Vector, z: usize) -> f64 {
        let d = x - &self.x_star;
        0.5 * d.dot(&(&self.family[z] * &d))
    }

    pub fn grad(&self, x: &Vector, z: usize) -> Vector {
        &self.family[z] * (x - &self.x_star)
    }

    /// Exact family mean of `Q_z(x)`; zero at `x*`.
    pub fn expected_value(&self, x: &Vector) -> f64 {
        let d = x - &self.x_star;
        0.5 * d.dot(&(&self.mean * &d))
    }
}

/// `A_z = B_zᵀB_z` with `B_z` an `n × n` Gaussian matrix scaled by `1/√n`,
/// `x*` uniform in `[−½, ½]ⁿ`, feasible box `[−1, 1]ⁿ`.
pub fn make_realizable_quadratic(n: usize, family_size: usize, seed: u64) -> Result<RealizableProblem> {
    if n == 0 || family_size == 0 {
        return Err(Error::InvalidParameter("need n >= 1 and family_size >= 1".into()));
    }
    let mut rng = stream(seed, "realizable/matrices");
    let scale = 1.0 / (n as f64).sqrt();
    let family = (0..family_size)
        .map(|_| {
            let b = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
            b.transpose() * b
        })
        .collect();
    let mut rng = stream(seed, "realizable/optimum");
    let x_star = Vector::from_fn(n, |_, _| rng.gen_range(-0.5..=0.5));
    RealizableProblem::new(x_star, family, BoxDomain::cube(-1.0, 1.0, n)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    /// Scalar AdaGrad `η_t = D / sqrt(Σ‖g‖²)`.
    #[serde(rename = "adagrad")]
    AdaGrad,
    /// Projected SGD with `η_t = D / √t`.
    Sgd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateResult {
    pub method: RateMethod,
    pub ts: Vec<usize>,
    /// Mean over repeats of `E_z Q_z(x̄_T)` at each logged `T`.
    pub error_mean: Vec<f64>,
    pub error_std: Vec<f64>,
    /// Per-repeat error at the largest `T`.
    pub final_errors: Vec<f64>,
    pub smoothness: f64,
    pub diameter: f64,
    /// Least-squares slope of `ln error` against `ln T`; absent when some
    /// error is zero.
    pub slope: Option<f64>,
    /// `error_mean ≤ 2 · 4LD²/T` at every logged `T`.
    pub passes_bound: bool,
    /// Step sizes never increased within any repeat.
    pub eta_monotone: bool,
    /// Every iterate of every repeat stayed in the box.
    pub stayed_in_box: bool,
}

/// JSON side file of a rate run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub method: RateMethod,
    pub slope: Option<f64>,
    #[serde(rename = "L")]
    pub smoothness: f64,
    #[serde(rename = "D")]
    pub diameter: f64,
    pub passes_bound: bool,
}

impl RateResult {
    pub fn bound(&self, t: usize) -> f64 {
        4.0 * self.smoothness * self.diameter * self.diameter / t as f64
    }

    /// CSV with header `T,error_mean,error_std,bound_4LD2_over_T`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,error_mean,error_std,bound_4LD2_over_T\n");
        for (i, &t) in self.ts.iter().enumerate() {
            out.push_str(&format!("{t},{},{},{}\n", self.error_mean[i], self.error_std[i], self.bound(t)));
        }
        out
    }

    pub fn summary(&self) -> RateSummary {
        RateSummary {
            method: self.method,
            slope: self.slope,
            smoothness: self.smoothness,
            diameter: self.diameter,
            passes_bound: self.passes_bound,
        }
    }

    pub fn median_final_error(&self) -> f64 {
        let mut e = self.final_errors.clone();
        e.sort_by(f64::total_cmp);
        let n = e.len();
        if n % 2 == 1 {
            e[n / 2]
        } else {
            0.5 * (e[n / 2 - 1] + e[n / 2])
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

struct RepeatLog {
    errors: Vec<f64>,
    eta_monotone: bool,
    in_box: bool,
}

fn run_repeat(
    problem: &RealizableProblem,
    method: RateMethod,
    ts: &[usize],
    init: &Vector,
    mut rng: impl Rng,
) -> RepeatLog {
    let horizon = *ts.last().expect("non-empty T list");
    let mut x = init.clone();
    let mut sum = Vector::zeros(problem.dim());
    let mut state = AdaGradState {
        sum_sq: 0.0,
        diameter: problem.diameter,
        bounds: problem.bounds.clone(),
        last_eta: None,
    };
    let mut last_eta = f64::INFINITY;
    let mut eta_monotone = true;
    let mut in_box = problem.bounds.contains(&x);
    let mut errors = Vec::with_capacity(ts.len());
    let mut next_log = 0;
    for t in 1..=horizon {
        // Offsets from x* keep the error exactly zero when x stays at x*.
        sum += &x - &problem.x_star;
        if t == ts[next_log] {
            let d = &sum / t as f64;
            errors.push(0.5 * d.dot(&(&problem.mean * &d)));
            next_log += 1;
        }
        let z = rng.gen_range(0..problem.family.len());
        let g = problem.grad(&x, z);
        match method {
            RateMethod::AdaGrad => {
                x = adagrad_step_flat(&mut state, &x, &g);
                if let Some(eta) = state.last_eta {
                    eta_monotone &= eta <= last_eta;
                    last_eta = eta;
                }
            }
            RateMethod::Sgd => {
                let eta = problem.diameter / (t as f64).sqrt();
                x -= g * eta;
                problem.bounds.project(&mut x);
            }
        }
        in_box &= problem.bounds.contains(&x);
    }
    RepeatLog { errors, eta_monotone, in_box }
}

fn run_rate(
    problem: &RealizableProblem,
    method: RateMethod,
    ts: &[usize],
    seed: u64,
    repeats: usize,
    init: Option<&Vector>,
) -> Result<RateResult> {
    if ts.is_empty() || ts[0] == 0 || ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("T list must be positive and strictly increasing".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be >= 1".into()));
    }
    // Start at the upper corner of the box unless told otherwise.
    let corner = Vector::from_column_slice(&problem.bounds.upper);
    let init = init.unwrap_or(&corner);
    let label = match method {
        RateMethod::AdaGrad => "rate/adagrad",
        RateMethod::Sgd => "rate/sgd",
    };
    let logs: Vec<RepeatLog> = (0..repeats)
        .into_par_iter()
        .map(|r| run_repeat(problem, method, ts, init, indexed_stream(seed, label, r as u64)))
        .collect();
    let k = repeats as f64;
    let error_mean: Vec<f64> =
        (0..ts.len()).map(|i| logs.iter().map(|l| l.errors[i]).sum::<f64>() / k).collect();
    let error_std: Vec<f64> = (0..ts.len())
        .map(|i| {
            let m = error_mean[i];
            (logs.iter().map(|l| (l.errors[i] - m).powi(2)).sum::<f64>() / k).sqrt()
        })
        .collect();
    let xs: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
    let mut result = RateResult {
        method,
        ts: ts.to_vec(),
        slope: loglog_slope(&xs, &error_mean),
        final_errors: logs.iter().map(|l| *l.errors.last().expect("logged")).collect(),
        error_mean,
        error_std,
        smoothness: problem.smoothness,
        diameter: problem.diameter,
        passes_bound: false,
        eta_monotone: logs.iter().all(|l| l.eta_monotone),
        stayed_in_box: logs.iter().all(|l| l.in_box),
    };
    result.passes_bound = ts.iter().zip(&result.error_mean).all(|(&t, &e)| e <= 2.0 * result.bound(t));
    Ok(result)
}

/// Scalar AdaGrad on single-sample gradients; error of the average iterate
/// at each `T` in `ts`, averaged over `repeats` independent streams.
pub fn run_adagrad_rate(
    problem: &RealizableProblem,
    ts: &[usize],
    seed: u64,
    repeats: usize,
    init: Option<&Vector>,
) -> Result<RateResult> {
    run_rate(problem, RateMethod::AdaGrad, ts, seed, repeats, init)
}

/// Projected SGD with `η_t = D/√t` under the same protocol.
pub fn run_sgd_baseline(
    problem: &RealizableProblem,
    ts: &[usize],
    seed: u64,
    repeats: usize,
    init: Option<&Vector>,
) -> Result<RateResult> {
    run_rate(problem, RateMethod::Sgd, ts, seed, repeats, init)
}

/// Logarithmically spaced horizons `10^(2 + i/2)` up to `max_t`.
pub fn default_horizons(max_t: usize) -> Vec<usize> {
    (0..)
        .map(|i| 10f64.powf(2.0 + 0.5 * i as f64).round() as usize)
        .take_while(|&t| t <= max_t)
        .collect()
}

/// `M(u, v) = a/2·u² − b/2·v² + c·u·v + d·u + e·v` with `a, b > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadGame {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl QuadGame {
    /// The game with curvature `(a, b, c)` and equilibrium `(p, q)`.
    pub fn centered(a: f64, b: f64, c: f64, p: f64, q: f64) -> Self {
        // Expanding a/2(u−p)² − b/2(v−q)² + c(u−p)(v−q) and dropping the
        // constant term.
        Self { a, b, c, d: -a * p - c * q, e: b * q - c * p }
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        0.5 * self.a * u * u - 0.5 * self.b * v * v + self.c * u * v + self.d * u + self.e * v
    }

    /// Exact duality gap on `[lo, hi]²`. The inner problems are 1-D and
    /// strictly concave/convex, so the clamped stationary point is optimal.
    pub fn box_dg(&self, u: f64, v: f64, lo: f64, hi: f64) -> f64 {
        let v_best = ((self.c * u + self.e) / self.b).clamp(lo, hi);
        let u_best = (-(self.c * v + self.d) / self.a).clamp(lo, hi);
        self.value(u, v_best) - self.value(u_best, v)
    }

    pub fn mean(family: &[QuadGame]) -> QuadGame {
        let n = family.len() as f64;
        let sum = |f: fn(&QuadGame) -> f64| family.iter().map(f).sum::<f64>() / n;
        QuadGame { a: sum(|g| g.a), b: sum(|g| g.b), c: sum(|g| g.c), d: sum(|g| g.d), e: sum(|g| g.e) }
    }
}

/// Family on `[−1, 1]²` whose members all have box gap at most `epsilon`
/// at the origin. Equilibria are random directions scaled by bisection.
pub fn make_perturbed_family(epsilon: f64, family_size: usize, seed: u64) -> Result<Vec<QuadGame>> {
    if !(epsilon >= 0.0) || family_size == 0 {
        return Err(Error::InvalidParameter("need epsilon >= 0 and family_size >= 1".into()));
    }
    let mut rng = stream(seed, "approx-realizability/family");
    let shapes: Vec<(f64, f64, f64, f64, f64)> = (0..family_size)
        .map(|_| {
            (
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let build = |s: f64| -> Vec<QuadGame> {
        shapes.iter().map(|&(a, b, c, p, q)| QuadGame::centered(a, b, c, s * p, s * q)).collect()
    };
    let worst = |fam: &[QuadGame]| fam.iter().map(|g| g.box_dg(0.0, 0.0, -1.0, 1.0)).fold(0.0, f64::max);
    if epsilon == 0.0 {
        return Ok(build(0.0));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    if worst(&build(hi)) <= epsilon {
        return Ok(build(hi));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if worst(&build(mid)) <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(build(lo))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizabilityReport {
    pub epsilon: f64,
    pub resolution: usize,
    /// Largest per-member gap at the shared point.
    pub shared_point_gap: f64,
    /// Grid minimizer of the expected per-member gap.
    pub minimizer: (f64, f64),
    pub expected_gap_at_minimizer: f64,
    /// Gap of the averaged game at the minimizer.
    pub full_gap_at_minimizer: f64,
    /// Allowance for the grid spacing.
    pub slack: f64,
    pub passes: bool,
    /// Averaged-game gap never exceeds the expected per-member gap.
    pub jensen_holds: bool,
}

/// Grid check that minimizing the expected per-member gap yields an
/// `epsilon`-approximate equilibrium of the averaged game on `[−1, 1]²`.
pub fn check_approx_realizability(
    family: &[QuadGame],
    shared: (f64, f64),
    epsilon: f64,
    resolution: usize,
) -> Result<RealizabilityReport> {
    if family.is_empty() {
        return Err(Error::EmptySamples);
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("resolution must be >= 2, got {resolution}")));
    }
    if family.iter().any(|g| !(g.a > 0.0 && g.b > 0.0)) {
        return Err(Error::Construction("family members must be strictly convex-concave".into()));
    }
    let (lo, hi) = (-1.0, 1.0);
    let shared_point_gap = family.iter().map(|g| g.box_dg(shared.0, shared.1, lo, hi)).fold(0.0, f64::max);
    if shared_point_gap > epsilon + 1e-12 {
        return Err(Error::Construction(format!(
            "shared point has per-member gap {shared_point_gap:e} > epsilon {epsilon:e}"
        )));
    }
    let full = QuadGame::mean(family);
    let nodes: Vec<f64> = (0..resolution)
        .map(|i| if i + 1 == resolution { hi } else { lo + (hi - lo) * i as f64 / (resolution - 1) as f64 })
        .collect();
    let n = family.len() as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut jensen_holds = true;
    for &v in &nodes {
        for &u in &nodes {
            let expected = family.iter().map(|g| g.box_dg(u, v, lo, hi)).sum::<f64>() / n;
            jensen_holds &= full.box_dg(u, v, lo, hi) <= expected + 1e-12;
            if expected < best.0 {
                best = (expected, u, v);
            }
        }
    }
    let (expected_gap_at_minimizer, mu, mv) = best;
    let full_gap_at_minimizer = full.box_dg(mu, mv, lo, hi);
    // A gradient bound of the averaged gap on the box times half a grid
    // diagonal; it covers a shared point that is not a grid node.
    let lip = full.a.abs() + full.b.abs() + 2.0 * full.c.abs() + full.d.abs() + full.e.abs();
    let spacing = (hi - lo) / (resolution - 1) as f64;
    let slack = lip * spacing * std::f64::consts::SQRT_2 / 2.0;
    Ok(RealizabilityReport {
        epsilon,
        resolution,
        shared_point_gap,
        minimizer: (mu, mv),
        expected_gap_at_minimizer,
        full_gap_at_minimizer,
        slack,
        passes: full_gap_at_minimizer <= epsilon + slack,
        jensen_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realizable_at_optimum() {
        let p = make_realizable_quadratic(5, 4, 1).unwrap();
        for z in 0..4 {
            assert_eq!(p.value(&p.x_star, z), 0.0);
            assert!(p.grad(&p.x_star, z).iter().all(|&g| g == 0.0));
        }
        assert!((p.diameter - 2.0 * 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn start_at_optimum_gives_zero_error() {
        let p = make_realizable_quadratic(3, 5, 2).unwrap();
        let ts = [10, 100];
        for r in [
            run_adagrad_rate(&p, &ts, 0, 3, Some(&p.x_star)).unwrap(),
            run_sgd_baseline(&p, &ts, 0, 3, Some(&p.x_star)).unwrap(),
        ] {
            assert!(r.error_mean.iter().all(|&e| e == 0.0));
            assert_eq!(r.slope, None);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 10.0, 100.0];
        let ys = [1.0, 0.1, 0.01];
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn horizons() {
        assert_eq!(default_horizons(100_000), vec![100, 316, 1000, 3162, 10000, 31623, 100000]);
    }

    #[test]
    fn centered_game_has_equilibrium_at_center() {
        let g = QuadGame::centered(1.5, 0.7, -1.2, 0.3, -0.4);
        assert!(g.box_dg(0.3, -0.4, -1.0, 1.0).abs() < 1e-14);
        assert!(g.box_dg(0.0, 0.0, -1.0, 1.0) > 0.0);
    }

    #[test]
    fn violated_assumption_is_an_error() {
        let fam = vec![QuadGame::centered(1.0, 1.0, 0.0, 0.5, 0.5)];
        assert!(matches!(check_approx_realizability(&fam, (0.0, 0.0), 0.01, 11), Err(Error::Construction(_))));
    }
}
