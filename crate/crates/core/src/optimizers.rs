//! Baseline update rules and the trajectory runner.
//!
//! Every step function maps a strategy pair to the next one. The min player
//! owns `u`, the max player owns `v`. The "signed" gradient
//! `g = (∇_u M, −∇_v M)` is the vector field both players descend.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dg::{dg_descent_step, dg_metric, widen_box, AdaGradState, DgConfig, OuterStep};
use crate::error::{Error, Result};
use crate::games::{second_order, Game, HessianBlocks};
use crate::point::{JointPoint, Vector};

/// Raw gradients `(∇_u M, ∇_v M)` at one point.
pub type Grads = (Vector, Vector);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gda,
    Ogda,
    Eg,
    Sga,
    Co,
    Unrolled,
    Fr,
    Dg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Gda,
        Algorithm::Ogda,
        Algorithm::Eg,
        Algorithm::Sga,
        Algorithm::Co,
        Algorithm::Unrolled,
        Algorithm::Fr,
        Algorithm::Dg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gda => "gda",
            Algorithm::Ogda => "ogda",
            Algorithm::Eg => "eg",
            Algorithm::Sga => "sga",
            Algorithm::Co => "co",
            Algorithm::Unrolled => "unrolled",
            Algorithm::Fr => "fr",
            Algorithm::Dg => "dg",
        }
    }

    /// Whether the update needs second-order information of the game.
    pub fn needs_second_order(self) -> bool {
        matches!(self, Algorithm::Sga | Algorithm::Co | Algorithm::Unrolled | Algorithm::Fr)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

/// Hyper-parameters of one update rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Outer step size (the `x`-player step for FR).
    pub eta: f64,
    /// Max-player step for FR; defaults to `eta`.
    pub eta_y: Option<f64>,
    pub sga_lambda: f64,
    pub co_gamma: f64,
    /// Inner steps of the unrolled follower.
    pub unroll_k: usize,
    /// Inner step of the unrolled follower; defaults to `eta`.
    pub unroll_gamma: Option<f64>,
    /// Settings for [`Algorithm::Dg`]; defaults apply when unset.
    pub dg: Option<DgConfig>,
    /// Allow finite-difference second-order blocks for games without a
    /// closed form.
    pub fd_fallback: bool,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, eta: f64) -> Self {
        Self {
            algorithm,
            eta,
            eta_y: None,
            sga_lambda: 1.0,
            co_gamma: 0.1,
            unroll_k: 10,
            unroll_gamma: None,
            dg: None,
            fd_fallback: true,
        }
    }

    pub fn dg(eta: f64, dg: DgConfig) -> Self {
        Self { dg: Some(dg), ..Self::new(Algorithm::Dg, eta) }
    }

    /// Parses an algorithm token with optional parameters, e.g. `gda`,
    /// `sga:lambda=0.5`, `co:gamma=0.1`, `unrolled:k=10`, `fr:eta_y=0.02`
    /// or `dg:k=10,gamma=0.05,mode=envelope,outer=const`.
    pub fn parse(token: &str, eta: f64) -> Result<Self> {
        let (name, params) = match token.split_once(':') {
            Some((n, p)) => (n.trim(), p),
            None => (token.trim(), ""),
        };
        let algorithm: Algorithm = name.parse()?;
        let mut cfg = Self::new(algorithm, eta);
        if algorithm == Algorithm::Dg {
            cfg.dg = Some(token.trim().parse()?);
            return cfg.validated();
        }
        for kv in params.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{kv}`")))?;
            let num = || -> Result<f64> {
                v.parse().map_err(|_| Error::InvalidParameter(format!("`{v}` is not a number")))
            };
            match (algorithm, k) {
                (Algorithm::Sga, "lambda") => cfg.sga_lambda = num()?,
                (Algorithm::Co, "gamma") => cfg.co_gamma = num()?,
                (Algorithm::Unrolled, "k") => {
                    cfg.unroll_k = v
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("k must be an integer, got `{v}`")))?
                }
                (Algorithm::Unrolled, "gamma") => cfg.unroll_gamma = Some(num()?),
                (Algorithm::Fr, "eta_y") => cfg.eta_y = Some(num()?),
                (_, "fd") => cfg.fd_fallback = num()? != 0.0,
                _ => {
                    return Err(Error::InvalidParameter(format!("unknown parameter `{k}` for {algorithm}")))
                }
            }
        }
        cfg.validated()
    }

    fn validated(self) -> Result<Self> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be > 0, got {x}")))
            }
        };
        positive("eta", self.eta)?;
        if let Some(e) = self.eta_y {
            positive("eta_y", e)?;
        }
        if let Some(g) = self.unroll_gamma {
            positive("unrolled gamma", g)?;
        }
        Ok(self)
    }

    /// DG settings with the inner step resolved against `eta`.
    pub fn resolved_dg(&self) -> DgConfig {
        self.dg.clone().unwrap_or_default().with_default_gamma(self.eta)
    }
}

fn blocks<G: Game + ?Sized>(game: &G, p: &JointPoint, fd_fallback: bool) -> Result<HessianBlocks> {
    match game.hessian_blocks(&p.u, &p.v) {
        Some(h) => Ok(h),
        None if fd_fallback => Ok(second_order(game, p)),
        None => Err(Error::InvalidParameter(format!(
            "game {} has no closed-form second-order blocks and finite differences are disabled",
            game.name()
        ))),
    }
}

fn check(what: &str, p: &JointPoint, grads: &Grads) -> Result<()> {
    if grads.0.iter().chain(grads.1.iter()).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.to_string(), point: p.to_vec() })
    }
}

/// Simultaneous gradient descent-ascent.
pub fn gda_step<G: Game + ?Sized>(game: &G, p: &JointPoint, eta: f64) -> Result<JointPoint> {
    let g = game.grads(&p.u, &p.v);
    check("gradient", p, &g)?;
    Ok(JointPoint::new(&p.u - g.0 * eta, &p.v + g.1 * eta))
}

/// Optimistic GDA. Returns the next point and the gradients at `p`, which
/// are the `prev` argument of the following step. Without `prev` the step is
/// plain GDA.
pub fn ogda_step<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    prev: Option<&Grads>,
    eta: f64,
) -> Result<(JointPoint, Grads)> {
    let g = game.grads(&p.u, &p.v);
    check("gradient", p, &g)?;
    let next = match prev {
        None => JointPoint::new(&p.u - &g.0 * eta, &p.v + &g.1 * eta),
        Some((pu, pv)) => JointPoint::new(
            &p.u - &g.0 * (2.0 * eta) + pu * eta,
            &p.v + &g.1 * (2.0 * eta) - pv * eta,
        ),
    };
    Ok((next, g))
}

/// Extragradient: a GDA half step, then the update from `p` using the
/// gradients at the midpoint. The midpoint is not projected.
pub fn eg_step<G: Game + ?Sized>(game: &G, p: &JointPoint, eta: f64) -> Result<JointPoint> {
    let mid = gda_step(game, p, eta)?;
    let g = game.grads(&mid.u, &mid.v);
    check("extrapolated gradient", &mid, &g)?;
    Ok(JointPoint::new(&p.u - g.0 * eta, &p.v + g.1 * eta))
}

/// Symplectic gradient adjustment:
/// `p' = p − η (g_u − λ H_uv g_v, λ H_vu g_u + g_v)` with `g = (∇_u M, −∇_v M)`.
pub fn sga_step<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    eta: f64,
    lambda: f64,
    fd_fallback: bool,
) -> Result<JointPoint> {
    let (gu, gv_raw) = game.grads(&p.u, &p.v);
    check("gradient", p, &(gu.clone(), gv_raw.clone()))?;
    let gv = -gv_raw;
    let h = blocks(game, p, fd_fallback)?;
    let adj_u = &gu - (&h.uv * &gv) * lambda;
    let adj_v = (&h.vu * &gu) * lambda + &gv;
    Ok(JointPoint::new(&p.u - adj_u * eta, &p.v - adj_v * eta))
}

/// `Jᵀg` for the signed field `g = (∇_u M, −∇_v M)`; this is the gradient
/// of `½‖g‖²`.
pub fn consensus_direction<G: Game + ?Sized>(game: &G, p: &JointPoint, fd_fallback: bool) -> Result<Vector> {
    let (gu, gv_raw) = game.grads(&p.u, &p.v);
    check("gradient", p, &(gu.clone(), gv_raw.clone()))?;
    let gv = -gv_raw;
    let h = blocks(game, p, fd_fallback)?;
    let du = &h.uu * &gu - &h.uv * &gv;
    let dv = &h.vu * &gu - &h.vv * &gv;
    Ok(JointPoint::new(du, dv).flatten())
}

/// Consensus optimization: the GDA step minus `γη Jᵀg`.
pub fn co_step<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    eta: f64,
    gamma: f64,
    fd_fallback: bool,
) -> Result<JointPoint> {
    let base = gda_step(game, p, eta)?;
    let pen = consensus_direction(game, p, fd_fallback)?;
    let next = base.flatten() - pen * (gamma * eta);
    Ok(JointPoint::from_flat(&next, p.dim_u()))
}

/// Total derivative `d/du M(u, y_k(u))` where `y_k` is `k` ascent steps of
/// size `gamma` on `M(u, ·)` from `v`.
pub fn unrolled_leader_grad<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    k: usize,
    gamma: f64,
    fd_fallback: bool,
) -> Result<Vector> {
    let mut y = p.v.clone();
    let mut dy = crate::point::Matrix::zeros(p.dim_v(), p.dim_u());
    for step in 1..=k {
        let at = JointPoint::new(p.u.clone(), y.clone());
        let h = blocks(game, &at, fd_fallback)?;
        let gv = game.grad_v(&p.u, &y);
        dy = &dy + (&h.vu + &h.vv * &dy) * gamma;
        y += gv * gamma;
        if !y.iter().all(|x| x.is_finite()) {
            let point = p.u.iter().chain(y.iter()).copied().collect();
            return Err(Error::NonFiniteInner { step, point });
        }
    }
    let (gu, gv) = game.grads(&p.u, &y);
    Ok(gu + dy.transpose() * gv)
}

/// Unrolled leader/follower: the min player descends the total derivative
/// through `k` follower steps, the follower takes one plain ascent step.
pub fn unrolled_step<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    eta: f64,
    k: usize,
    gamma: f64,
    fd_fallback: bool,
) -> Result<JointPoint> {
    let lead = unrolled_leader_grad(game, p, k, gamma, fd_fallback)?;
    let gv = game.grad_v(&p.u, &p.v);
    check("gradient", p, &(lead.clone(), gv.clone()))?;
    Ok(JointPoint::new(&p.u - lead * eta, &p.v + gv * eta))
}

/// Follow-the-ridge:
/// `u' = u − η_x ∇_u M`, `v' = v + η_y ∇_v M + η_x H_vv⁻¹ H_vu ∇_u M`.
pub fn fr_step<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    eta_x: f64,
    eta_y: f64,
    fd_fallback: bool,
) -> Result<JointPoint> {
    let (gu, gv) = game.grads(&p.u, &p.v);
    check("gradient", p, &(gu.clone(), gv.clone()))?;
    let h = blocks(game, p, fd_fallback)?;
    let rhs = &h.vu * &gu;
    let correction = h
        .vv
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|c| c.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::SingularHessian { point: p.to_vec() })?;
    Ok(JointPoint::new(&p.u - &gu * eta_x, &p.v + gv * eta_y + correction * eta_x))
}

/// Applies one algorithm repeatedly, carrying whatever state it needs.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub config: OptimizerConfig,
    prev_grads: Option<Grads>,
    adagrad: Option<AdaGradState>,
    dg: Option<DgConfig>,
}

impl Stepper {
    pub fn new(config: OptimizerConfig, dim: usize) -> Result<Self> {
        let (dg, adagrad) = if config.algorithm == Algorithm::Dg {
            let dg = config.resolved_dg();
            let adagrad = match &dg.outer {
                OuterStep::ConstantEta => None,
                OuterStep::AdaGrad { diameter, bounds } => {
                    Some(AdaGradState::new(*diameter, widen_box(bounds, dim))?)
                }
            };
            (Some(dg), adagrad)
        } else {
            (None, None)
        };
        let config = config.validated()?;
        Ok(Self { config, prev_grads: None, adagrad, dg })
    }

    pub fn step<G: Game + ?Sized>(&mut self, game: &G, p: &JointPoint) -> Result<JointPoint> {
        let c = &self.config;
        let eta = c.eta;
        match c.algorithm {
            Algorithm::Gda => gda_step(game, p, eta),
            Algorithm::Ogda => {
                let (next, g) = ogda_step(game, p, self.prev_grads.as_ref(), eta)?;
                self.prev_grads = Some(g);
                Ok(next)
            }
            Algorithm::Eg => eg_step(game, p, eta),
            Algorithm::Sga => sga_step(game, p, eta, c.sga_lambda, c.fd_fallback),
            Algorithm::Co => co_step(game, p, eta, c.co_gamma, c.fd_fallback),
            Algorithm::Unrolled => {
                unrolled_step(game, p, eta, c.unroll_k, c.unroll_gamma.unwrap_or(eta), c.fd_fallback)
            }
            Algorithm::Fr => fr_step(game, p, eta, c.eta_y.unwrap_or(eta), c.fd_fallback),
            Algorithm::Dg => {
                let dg = self.dg.as_ref().expect("dg config resolved in Stepper::new");
                dg_descent_step(game, p, dg, eta, self.adagrad.as_mut())
            }
        }
    }

    /// Effective outer step of the most recent AdaGrad update.
    pub fn adagrad_eta(&self) -> Option<f64> {
        self.adagrad.as_ref().and_then(|s| s.last_eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Converged,
    Diverged,
    NonConvergent,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Converged => "converged",
            Classification::Diverged => "diverged",
            Classification::NonConvergent => "non_convergent",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub t: usize,
    pub point: JointPoint,
    pub value: f64,
    pub grad_u_norm: f64,
    pub grad_v_norm: f64,
    pub dg: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    /// Distance below which the final iterate counts as at a target.
    pub tol: f64,
    /// Norm beyond which the run is declared divergent and stopped.
    pub diverge_norm: f64,
    /// Equilibria the run is expected to approach.
    pub targets: Vec<JointPoint>,
    /// Log the approximate gap with `(k, gamma)` at every iterate.
    pub log_dg: Option<(usize, f64)>,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { tol: 1e-3, diverge_norm: 1e3, targets: Vec::new(), log_dg: None }
    }
}

impl TrajectoryOptions {
    pub fn with_targets(targets: Vec<JointPoint>) -> Self {
        Self { targets, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub game: String,
    pub config: OptimizerConfig,
    pub records: Vec<Record>,
    pub classification: Classification,
    /// First step from which every iterate stays within `tol` of the target.
    pub converged_at: Option<usize>,
    /// Distance from the final iterate to the nearest target.
    pub final_distance: Option<f64>,
}

impl Trajectory {
    pub fn final_point(&self) -> &JointPoint {
        &self.records.last().expect("trajectory holds the initial point").point
    }

    /// CSV with header `t,u...,v...,value,grad_u_norm,grad_v_norm,dg`.
    pub fn to_csv(&self) -> String {
        let first = &self.records[0].point;
        let mut header = vec!["t".to_string()];
        let name = |prefix: &str, n: usize| -> Vec<String> {
            if n == 1 {
                vec![prefix.to_string()]
            } else {
                (0..n).map(|i| format!("{prefix}{i}")).collect()
            }
        };
        header.extend(name("u", first.dim_u()));
        header.extend(name("v", first.dim_v()));
        header.extend(["value", "grad_u_norm", "grad_v_norm", "dg"].map(String::from));
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            row.extend(r.point.to_vec().iter().map(f64::to_string));
            row.push(r.value.to_string());
            row.push(r.grad_u_norm.to_string());
            row.push(r.grad_v_norm.to_string());
            row.push(r.dg.map(|d| d.to_string()).unwrap_or_default());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            algorithm: self.config.algorithm.to_string(),
            game: self.game.clone(),
            eta: self.config.eta,
            steps: self.records.len() - 1,
            classification: self.classification,
            final_point: self.final_point().to_vec(),
            final_distance: self.final_distance,
        }
    }
}

/// JSON side file of a trajectory run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub algorithm: String,
    pub game: String,
    pub eta: f64,
    pub steps: usize,
    pub classification: Classification,
    pub final_point: Vec<f64>,
    pub final_distance: Option<f64>,
}

/// A failed run: the step error plus everything recorded before it.
#[derive(Clone, Debug)]
pub struct TrajectoryError {
    pub error: Error,
    pub partial: Trajectory,
}

impl fmt::Display for TrajectoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} steps", self.error, self.partial.records.len() - 1)
    }
}

impl std::error::Error for TrajectoryError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn record<G: Game + ?Sized>(game: &G, t: usize, p: &JointPoint, log_dg: Option<(usize, f64)>) -> Record {
    let (gu, gv) = game.grads(&p.u, &p.v);
    // The logged gap is diagnostic only; a blow-up in its inner loop shows
    // up as NaN rather than aborting the run.
    let dg = log_dg.map(|(k, gamma)| dg_metric(game, p, k, gamma).unwrap_or(f64::NAN));
    Record { t, point: p.clone(), value: game.value(&p.u, &p.v), grad_u_norm: gu.norm(), grad_v_norm: gv.norm(), dg }
}

fn classify(records: &[Record], opts: &TrajectoryOptions) -> (Classification, Option<usize>, Option<f64>) {
    let last = &records.last().expect("non-empty").point;
    let nearest = opts
        .targets
        .iter()
        .map(|t| (t, last.distance(t)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let final_distance = nearest.map(|(_, d)| d);
    if !last.is_finite() || last.norm() > opts.diverge_norm {
        return (Classification::Diverged, None, final_distance);
    }
    match nearest {
        Some((target, d)) if d < opts.tol => {
            let mut first = records.len() - 1;
            while first > 0 && records[first - 1].point.distance(target) < opts.tol {
                first -= 1;
            }
            (Classification::Converged, Some(first), final_distance)
        }
        _ => (Classification::NonConvergent, None, final_distance),
    }
}

/// Run `steps` updates from `init`, recording every iterate.
///
/// The run stops early, and is classified as diverged, once the iterate
/// norm exceeds `opts.diverge_norm` or becomes non-finite. A step error
/// aborts the run; the error carries the partial trajectory.
pub fn run_trajectory<G: Game + ?Sized>(
    game: &G,
    config: &OptimizerConfig,
    init: &JointPoint,
    steps: usize,
    opts: &TrajectoryOptions,
) -> Result<Trajectory, TrajectoryError> {
    let mut records = vec![record(game, 0, init, opts.log_dg)];
    let finish = |records: Vec<Record>| {
        let (classification, converged_at, final_distance) = classify(&records, opts);
        Trajectory {
            game: game.name(),
            config: config.clone(),
            records,
            classification,
            converged_at,
            final_distance,
        }
    };
    let mut stepper = match Stepper::new(config.clone(), init.dim()) {
        Ok(s) => s,
        Err(error) => return Err(TrajectoryError { error, partial: finish(records) }),
    };
    let mut p = init.clone();
    for t in 1..=steps {
        match stepper.step(game, &p) {
            Ok(next) => p = next,
            Err(error) => return Err(TrajectoryError { error, partial: finish(records) }),
        }
        let escaped = !p.is_finite() || p.norm() > opts.diverge_norm;
        records.push(record(game, t, &p, opts.log_dg));
        if escaped {
            break;
        }
    }
    Ok(finish(records))
}
