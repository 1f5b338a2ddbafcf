//! Local stability of update maps, gap landscapes and critical points.

use std::fmt;

use nalgebra::{Complex, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dg::{dg_estimate, DgConfig, OuterStep};
use crate::error::{Error, Result};
use crate::games::{second_order, Game};
use crate::optimizers::{Algorithm, OptimizerConfig, Stepper};
use crate::point::{BoxDomain, JointPoint, Matrix, Vector};

/// Spectral radius band treated as exactly one.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Eigenvalues of a square matrix. 1×1 and 2×2 use closed forms; larger
/// matrices go through a real Schur decomposition.
pub fn eigenvalues(m: &Matrix) -> Vec<Complex<f64>> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    match m.nrows() {
        0 => Vec::new(),
        1 => vec![Complex::new(m[(0, 0)], 0.0)],
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let mid = 0.5 * (a + d);
            let half = 0.5 * (a - d);
            let disc = half * half + b * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                vec![Complex::new(mid + s, 0.0), Complex::new(mid - s, 0.0)]
            } else {
                let s = (-disc).sqrt();
                vec![Complex::new(mid, s), Complex::new(mid, -s)]
            }
        }
        _ => m.clone().complex_eigenvalues().iter().copied().collect(),
    }
}

pub fn spectral_radius(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
}

impl Stability {
    pub fn from_radius(rho: f64) -> Self {
        if rho < 1.0 - MARGINAL_TOL {
            Stability::Stable
        } else if rho > 1.0 + MARGINAL_TOL {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Marginal => "marginal",
            Stability::Unstable => "unstable",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

/// Linearization of an update map around one of its fixed points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub fixed_point: Vec<f64>,
    /// Row-major Jacobian of the update map.
    pub jacobian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<Eigenvalue>,
    pub spectral_radius: f64,
    pub classification: Stability,
}

impl StabilityReport {
    pub fn from_jacobian(fixed_point: &Vector, jac: &Matrix) -> Self {
        let eigs = eigenvalues(jac);
        let rho = spectral_radius(&eigs);
        Self {
            fixed_point: fixed_point.iter().copied().collect(),
            jacobian: jac.row_iter().map(|r| r.iter().copied().collect()).collect(),
            eigenvalues: eigs.iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect(),
            spectral_radius: rho,
            classification: Stability::from_radius(rho),
        }
    }

    pub fn jacobian_matrix(&self) -> Matrix {
        let n = self.jacobian.len();
        Matrix::from_fn(n, n, |i, j| self.jacobian[i][j])
    }
}

/// Jacobian of `map` at `x` by central differences with absolute step `h`.
pub fn fd_jacobian<F>(map: &F, x: &Vector, h: f64) -> Result<Matrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let n = x.len();
    let mut jac = Matrix::zeros(n, n);
    for j in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        let col = (map(&plus)? - map(&minus)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Linearize `map` at `fixed_point`.
///
/// Fails with [`Error::NotFixedPoint`] if `‖map(x) − x‖ > fixed_tol`.
pub fn linearize<F>(map: F, fixed_point: &Vector, h: f64, fixed_tol: f64) -> Result<StabilityReport>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let residual = (map(fixed_point)? - fixed_point).norm();
    if !(residual <= fixed_tol) {
        return Err(Error::NotFixedPoint { point: fixed_point.iter().copied().collect(), residual });
    }
    let jac = fd_jacobian(&map, fixed_point, h)?;
    Ok(StabilityReport::from_jacobian(fixed_point, &jac))
}

/// The update map of a stateless algorithm as a function on stacked
/// vectors. OGDA is handled by [`algorithm_stability`] on the doubled
/// state; AdaGrad outer steps are not time-invariant and are rejected.
pub fn step_map<'a, G: Game + ?Sized>(
    game: &'a G,
    config: &OptimizerConfig,
    dim_u: usize,
) -> Result<impl Fn(&Vector) -> Result<Vector> + 'a> {
    if config.algorithm == Algorithm::Ogda {
        return Err(Error::InvalidParameter("OGDA carries state; linearize it on the doubled state".into()));
    }
    if config.algorithm == Algorithm::Dg && matches!(config.resolved_dg().outer, OuterStep::AdaGrad { .. }) {
        return Err(Error::InvalidParameter("AdaGrad step sizes change over time; no fixed update map".into()));
    }
    let config = config.clone();
    Ok(move |x: &Vector| {
        let p = JointPoint::from_flat(x, dim_u);
        let mut stepper = Stepper::new(config.clone(), x.len())?;
        Ok(stepper.step(game, &p)?.flatten())
    })
}

/// Central-difference step used for update-map Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Stability of `config` at the fixed point `p` of its update map.
pub fn algorithm_stability<G: Game + ?Sized>(
    game: &G,
    config: &OptimizerConfig,
    p: &JointPoint,
) -> Result<StabilityReport> {
    let dim_u = p.dim_u();
    let fixed_tol = 1e-8 * p.norm().max(1.0);
    if config.algorithm == Algorithm::Ogda {
        // z = (p_t, p_{t−1}) ↦ (p_t − 2ηg(p_t) + ηg(p_{t−1}), p_t).
        let n = p.dim();
        let eta = config.eta;
        let signed = move |x: &Vector| -> Result<Vector> {
            let q = JointPoint::from_flat(x, dim_u);
            let (gu, gv) = game.grads(&q.u, &q.v);
            Ok(JointPoint::new(gu, -gv).flatten())
        };
        let map = |z: &Vector| -> Result<Vector> {
            let cur = z.rows(0, n).into_owned();
            let prev = z.rows(n, n).into_owned();
            let next = &cur - signed(&cur)? * (2.0 * eta) + signed(&prev)? * eta;
            let mut out = Vector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&next);
            out.rows_mut(n, n).copy_from(&cur);
            Ok(out)
        };
        let flat = p.flatten();
        let mut z = Vector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&flat);
        z.rows_mut(n, n).copy_from(&flat);
        return linearize(map, &z, JACOBIAN_STEP, fixed_tol);
    }
    let map = step_map(game, config, dim_u)?;
    linearize(map, &p.flatten(), JACOBIAN_STEP, fixed_tol)
}

/// Closed-form update matrix of one unrolled gap step (`k = 1`,
/// `γ = η`) on `f1(x, y) = −3x² − y² + 4xy`.
pub fn dg_update_matrix_f1(eta: f64) -> Matrix {
    let off = 64.0 * eta * eta * (2.0 * eta + 1.0);
    Matrix::from_row_slice(
        2,
        2,
        &[1.0 - 8.0 * eta * eta * (23.0 * eta + 13.0), off, off, 1.0 - 8.0 * eta * eta * (11.0 * eta + 5.0)],
    )
}

/// Closed-form update matrix of one unrolled gap step (`k = 1`,
/// `γ = η`) on `f2(x, y) = 3x² + y² + 4xy`.
pub fn dg_update_matrix_f2(eta: f64) -> Matrix {
    let off = 64.0 * eta * eta * (2.0 * eta - 1.0);
    Matrix::from_row_slice(
        2,
        2,
        &[1.0 + 8.0 * eta * eta * (23.0 * eta - 13.0), off, off, 1.0 + 8.0 * eta * eta * (11.0 * eta - 5.0)],
    )
}

/// Update matrix of envelope gap descent on `c·x·y` with `k` inner steps.
pub fn dg_envelope_bilinear_matrix(c: f64, k: usize, eta: f64, gamma: f64) -> Matrix {
    let diag = 1.0 - eta * gamma * k as f64 * c * c;
    Matrix::from_row_slice(2, 2, &[diag, -eta * c, eta * c, diag])
}

/// Largest entrywise difference between a closed-form update matrix and
/// the finite-difference Jacobian of the implemented gap step at the origin.
pub fn verify_update_matrix<G: Game + ?Sized>(game: &G, closed_form: &Matrix, eta: f64) -> Result<f64> {
    let cfg = OptimizerConfig::dg(eta, DgConfig::new(1, eta, crate::dg::GradMode::Unrolled));
    let report = algorithm_stability(game, &cfg, &JointPoint::zeros(1, 1))?;
    Ok((report.jacobian_matrix() - closed_form).abs().max())
}

/// What a landscape grid holds at each node.
#[derive(Clone, Debug, PartialEq)]
pub enum Measure {
    MinimaxValue,
    /// Gap with the inner max/min taken over the same grid.
    DgExact,
    DgApprox(DgConfig),
}

impl Measure {
    pub fn label(&self) -> String {
        match self {
            Measure::MinimaxValue => "minimax_value".into(),
            Measure::DgExact => "dg_exact".into(),
            Measure::DgApprox(cfg) => format!("dg_approx({cfg})"),
        }
    }
}

/// Values of a measure on a square grid over a 2-D box.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub resolution: usize,
    pub measure: String,
    /// `values[j][i]` is the measure at `(u_i, v_j)`.
    pub values: Vec<Vec<f64>>,
}

/// JSON side file of a landscape CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeMeta {
    #[serde(rename = "box")]
    pub bounds: [[f64; 2]; 2],
    pub resolution: usize,
    pub measure: String,
}

fn node(lo: f64, hi: f64, res: usize, i: usize) -> f64 {
    if i + 1 == res {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (res - 1) as f64
    }
}

impl LandscapeGrid {
    pub fn u_at(&self, i: usize) -> f64 {
        node(self.lower[0], self.upper[0], self.resolution, i)
    }

    pub fn v_at(&self, j: usize) -> f64 {
        node(self.lower[1], self.upper[1], self.resolution, j)
    }

    /// `(u, v, value)` of the smallest finite node value.
    pub fn argmin(&self) -> Option<(f64, f64, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (j, row) in self.values.iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                if x.is_finite() && best.is_none_or(|b| x < b.2) {
                    best = Some((i, j, x));
                }
            }
        }
        best.map(|(i, j, x)| (self.u_at(i), self.v_at(j), x))
    }

    /// CSV with header `u,v,value`, one row per node, `v` outermost.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,v,value\n");
        for (j, row) in self.values.iter().enumerate() {
            for (i, x) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", self.u_at(i), self.v_at(j), x));
            }
        }
        out
    }

    pub fn meta(&self) -> LandscapeMeta {
        LandscapeMeta {
            bounds: [[self.lower[0], self.upper[0]], [self.lower[1], self.upper[1]]],
            resolution: self.resolution,
            measure: self.measure.clone(),
        }
    }
}

/// Evaluate `measure` on a `resolution × resolution` grid over `bounds`.
///
/// Only 1-D/1-D games have a 2-D landscape. Rows are computed in parallel;
/// the result does not depend on the thread count.
pub fn landscape<G: Game + ?Sized>(
    game: &G,
    bounds: &BoxDomain,
    resolution: usize,
    measure: &Measure,
) -> Result<LandscapeGrid> {
    if game.dim_u() != 1 || game.dim_v() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: game.dim_u().max(game.dim_v()) });
    }
    if bounds.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: bounds.dim() });
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("resolution must be >= 2, got {resolution}")));
    }
    let lower = [bounds.lower[0], bounds.lower[1]];
    let upper = [bounds.upper[0], bounds.upper[1]];
    let us: Vec<f64> = (0..resolution).map(|i| node(lower[0], upper[0], resolution, i)).collect();
    let vs: Vec<f64> = (0..resolution).map(|j| node(lower[1], upper[1], resolution, j)).collect();
    let m = |u: f64, v: f64| game.value(&Vector::from_element(1, u), &Vector::from_element(1, v));

    let values: Vec<Vec<f64>> = match measure {
        Measure::MinimaxValue => vs.par_iter().map(|&v| us.iter().map(|&u| m(u, v)).collect()).collect(),
        Measure::DgExact => {
            let table: Vec<Vec<f64>> =
                vs.par_iter().map(|&v| us.iter().map(|&u| m(u, v)).collect()).collect();
            // Best response of the max player to each u_i, and of the min
            // player to each v_j, over the grid.
            let col_max: Vec<f64> = (0..resolution)
                .map(|i| table.iter().map(|row| row[i]).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let row_min: Vec<f64> =
                table.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).collect();
            row_min.iter().map(|&lo| col_max.iter().map(|&hi| hi - lo).collect()).collect()
        }
        Measure::DgApprox(cfg) => {
            cfg.gamma()?;
            vs.par_iter()
                .map(|&v| {
                    us.iter()
                        .map(|&u| {
                            dg_estimate(game, &JointPoint::scalar(u, v), cfg).map(|e| e.value).unwrap_or(f64::NAN)
                        })
                        .collect()
                })
                .collect()
        }
    };
    Ok(LandscapeGrid { lower, upper, resolution, measure: measure.label(), values })
}

/// Exact gap of `c·x·y` on `[−a, a]²`: `|c|·a·(|u| + |v|)`.
pub fn bilinear_box_dg(c: f64, a: f64, u: f64, v: f64) -> f64 {
    c.abs() * a * (u.abs() + v.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Min,
    Max,
    Saddle,
    Degenerate,
}

impl CriticalKind {
    /// Label from the eigenvalues of a symmetric Hessian.
    pub fn from_eigenvalues(eigs: &[f64], tol: f64) -> Self {
        let pos = eigs.iter().filter(|&&e| e > tol).count();
        let neg = eigs.iter().filter(|&&e| e < -tol).count();
        if pos == eigs.len() {
            CriticalKind::Min
        } else if neg == eigs.len() {
            CriticalKind::Max
        } else if pos > 0 && neg > 0 {
            CriticalKind::Saddle
        } else {
            CriticalKind::Degenerate
        }
    }
}

impl fmt::Display for CriticalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriticalKind::Min => "min",
            CriticalKind::Max => "max",
            CriticalKind::Saddle => "saddle",
            CriticalKind::Degenerate => "degenerate",
        })
    }
}

/// A critical point seen from the game and from the approximate gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub point: Vec<f64>,
    /// Eigenvalues of `H_uu`; all positive for a local minimum in `u`.
    pub uu_eigenvalues: Vec<f64>,
    /// Eigenvalues of `H_vv`; all negative for a local maximum in `v`.
    pub vv_eigenvalues: Vec<f64>,
    /// Local Nash equilibrium of the game.
    pub local_nash: bool,
    pub dg_hessian: Vec<Vec<f64>>,
    pub dg_eigenvalues: Vec<f64>,
    /// Type of the point as a critical point of the approximate gap.
    pub dg_kind: CriticalKind,
}

fn sym_eigs(m: &Matrix) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Hessian of the approximate gap by central differences of its gradient.
pub fn dg_hessian<G: Game + ?Sized>(game: &G, p: &JointPoint, cfg: &DgConfig, h: f64) -> Result<Matrix> {
    let dim_u = p.dim_u();
    let grad = |x: &Vector| -> Result<Vector> { Ok(dg_estimate(game, &JointPoint::from_flat(x, dim_u), cfg)?.grad()) };
    let jac = fd_jacobian(&grad, &p.flatten(), h)?;
    Ok((&jac + jac.transpose()) * 0.5)
}

/// Classify `p` as a critical point of the game and of the approximate gap.
///
/// `p` must be critical for the game or for the gap (gradient norm below
/// `crit_tol`), otherwise [`Error::NotCritical`] is returned.
pub fn classify_critical_point<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    cfg: &DgConfig,
    crit_tol: f64,
) -> Result<CriticalPointReport> {
    let (gu, gv) = game.grads(&p.u, &p.v);
    let game_norm = (gu.norm_squared() + gv.norm_squared()).sqrt();
    let dg_norm = dg_estimate(game, p, cfg)?.grad().norm();
    let grad_norm = game_norm.min(dg_norm);
    if !(grad_norm <= crit_tol) {
        return Err(Error::NotCritical { point: p.to_vec(), grad_norm });
    }
    let blocks = second_order(game, p);
    let uu_eigenvalues = sym_eigs(&blocks.uu);
    let vv_eigenvalues = sym_eigs(&blocks.vv);
    let local_nash = uu_eigenvalues.iter().all(|&e| e > 0.0) && vv_eigenvalues.iter().all(|&e| e < 0.0);
    let hess = dg_hessian(game, p, cfg, 1e-5)?;
    let dg_eigenvalues = sym_eigs(&hess);
    let scale = dg_eigenvalues.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let dg_kind = CriticalKind::from_eigenvalues(&dg_eigenvalues, 1e-7 * scale);
    Ok(CriticalPointReport {
        point: p.to_vec(),
        uu_eigenvalues,
        vv_eigenvalues,
        local_nash,
        dg_hessian: hess.row_iter().map(|r| r.iter().copied().collect()).collect(),
        dg_eigenvalues,
        dg_kind,
    })
}
