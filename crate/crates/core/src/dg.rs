//! Approximate duality gap and its minimization.
//!
//! The duality gap of a strategy pair is
//!
//! ```text
//! DG(u, v) = max_v' M(u, v') − min_u' M(u', v)
//! ```
//!
//! and is zero exactly at a pure equilibrium. The inner max and min are
//! replaced by `k` warm-started gradient steps of size `gamma`: the min
//! player's response starts at `u` and descends `M(·, v)`, the max player's
//! response starts at `v` and ascends `M(u, ·)`. Both players then *descend*
//! the resulting scalar, so the game becomes a plain minimization problem.
//!
//! Two gradients of the approximate gap are available:
//!
//! * [`GradMode::Envelope`] treats the responses as constants,
//!   `∇_u DG = ∇_u M(u, v_w)` and `∇_v DG = −∇_v M(u_w, v)`.
//! * [`GradMode::Unrolled`] differentiates through the `k` inner steps by
//!   forward accumulation of the response Jacobians, using the game's
//!   second-order blocks along the inner path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{second_order, Game, HessianBlocks};
use crate::point::{BoxDomain, JointPoint, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    Envelope,
    Unrolled,
}

/// How the outer (descent) step is sized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterStep {
    /// Fixed step `η`.
    ConstantEta,
    /// Scalar AdaGrad `η_t = D / sqrt(Σ‖g_τ‖²)` followed by projection onto
    /// `bounds`.
    AdaGrad { diameter: f64, bounds: BoxDomain },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgConfig {
    /// Number of inner steps per response.
    pub k: usize,
    /// Inner step size; `None` means "same as the outer step".
    pub gamma: Option<f64>,
    pub mode: GradMode,
    pub outer: OuterStep,
    /// Optional box the inner iterates are clamped to.
    pub clamp: Option<BoxDomain>,
}

impl Default for DgConfig {
    fn default() -> Self {
        Self { k: 10, gamma: None, mode: GradMode::Envelope, outer: OuterStep::ConstantEta, clamp: None }
    }
}

impl DgConfig {
    pub fn new(k: usize, gamma: f64, mode: GradMode) -> Self {
        Self { k, gamma: Some(gamma), mode, ..Self::default() }
    }

    /// Fill in the inner step from the outer rate when it was left unset.
    pub fn with_default_gamma(&self, eta: f64) -> Self {
        Self { gamma: Some(self.gamma.unwrap_or(eta)), ..self.clone() }
    }

    pub fn gamma(&self) -> Result<f64> {
        let g = self
            .gamma
            .ok_or_else(|| Error::InvalidParameter("inner step size gamma is unset".into()))?;
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {g}")));
        }
        Ok(g)
    }
}

impl FromStr for DgConfig {
    type Err = Error;

    /// Parses `dg:k=10,gamma=0.05,mode=envelope,outer=const`. The `dg:`
    /// prefix is optional. AdaGrad needs `outer=adagrad,diam=D,box=lo:hi`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim();
        let body = if body == "dg" { "" } else { body.strip_prefix("dg:").unwrap_or(body) };
        let mut cfg = DgConfig::default();
        let mut outer = "const".to_string();
        let mut diam = None;
        let mut bounds = None;
        let mut clamp = None;
        for kv in body.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{kv}`")))?;
            let num = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::InvalidParameter(format!("`{v}` is not a number")))
            };
            match k {
                "k" => {
                    cfg.k = v.parse().map_err(|_| Error::InvalidParameter(format!("k must be an integer, got `{v}`")))?
                }
                "gamma" => cfg.gamma = Some(num(v)?),
                "mode" => {
                    cfg.mode = match v {
                        "envelope" => GradMode::Envelope,
                        "unrolled" => GradMode::Unrolled,
                        _ => return Err(Error::InvalidParameter(format!("unknown gradient mode `{v}`"))),
                    }
                }
                "outer" => outer = v.to_string(),
                "diam" => diam = Some(num(v)?),
                "box" => bounds = Some(parse_interval(v)?),
                "clamp" => clamp = Some(parse_interval(v)?),
                _ => return Err(Error::InvalidParameter(format!("unknown dg parameter `{k}`"))),
            }
        }
        cfg.outer = match outer.as_str() {
            "const" => OuterStep::ConstantEta,
            "adagrad" => {
                let (lo, hi) = bounds.ok_or_else(|| Error::InvalidParameter("outer=adagrad needs box=lo:hi".into()))?;
                // The box is applied to every coordinate; its dimension is
                // fixed when the state is created for a concrete game.
                let bounds = BoxDomain::cube(lo, hi, 1)?;
                let diameter = match diam {
                    Some(d) => d,
                    None => hi - lo,
                };
                OuterStep::AdaGrad { diameter, bounds }
            }
            _ => return Err(Error::InvalidParameter(format!("unknown outer step `{outer}`"))),
        };
        if let Some((lo, hi)) = clamp {
            cfg.clamp = Some(BoxDomain::cube(lo, hi, 1)?);
        }
        if let Some(g) = cfg.gamma {
            if !(g > 0.0) {
                return Err(Error::InvalidParameter(format!("gamma must be > 0, got {g}")));
            }
        }
        Ok(cfg)
    }
}

fn parse_interval(v: &str) -> Result<(f64, f64)> {
    let (lo, hi) = v
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameter(format!("expected lo:hi, got `{v}`")))?;
    let lo: f64 = lo.parse().map_err(|_| Error::InvalidParameter(format!("bad bound `{lo}`")))?;
    let hi: f64 = hi.parse().map_err(|_| Error::InvalidParameter(format!("bad bound `{hi}`")))?;
    Ok((lo, hi))
}

impl fmt::Display for DgConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dg:k={}", self.k)?;
        if let Some(g) = self.gamma {
            write!(f, ",gamma={g}")?;
        }
        let mode = match self.mode {
            GradMode::Envelope => "envelope",
            GradMode::Unrolled => "unrolled",
        };
        write!(f, ",mode={mode}")?;
        match &self.outer {
            OuterStep::ConstantEta => write!(f, ",outer=const")?,
            OuterStep::AdaGrad { diameter, bounds } => {
                write!(f, ",outer=adagrad,diam={diameter},box={}:{}", bounds.lower[0], bounds.upper[0])?
            }
        }
        if let Some(c) = &self.clamp {
            write!(f, ",clamp={}:{}", c.lower[0], c.upper[0])?;
        }
        Ok(())
    }
}

/// Expand a 1-axis template box (as produced by the parser) to `dim` axes.
pub(crate) fn widen_box(b: &BoxDomain, dim: usize) -> BoxDomain {
    if b.dim() == dim {
        b.clone()
    } else {
        BoxDomain { lower: vec![b.lower[0]; dim], upper: vec![b.upper[0]; dim] }
    }
}

/// Approximate duality gap at a point, with the responses and the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct DgEstimate {
    pub value: f64,
    pub u_worst: Vector,
    pub v_worst: Vector,
    pub grad_u: Vector,
    pub grad_v: Vector,
}

impl DgEstimate {
    pub fn grad(&self) -> Vector {
        JointPoint::new(self.grad_u.clone(), self.grad_v.clone()).flatten()
    }
}

fn finite(x: &Vector) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// `k` descent steps on `M(·, v)` from `u` and `k` ascent steps on `M(u, ·)`
/// from `v`, each using the gradient at the previous inner iterate.
pub fn worst_case_responses<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    k: usize,
    gamma: f64,
) -> Result<(Vector, Vector)> {
    responses(game, p, k, gamma, None)
}

fn responses<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    k: usize,
    gamma: f64,
    clamp: Option<&BoxDomain>,
) -> Result<(Vector, Vector)> {
    let clamp = clamp.map(|b| widen_box(b, p.dim()));
    let mut uw = p.u.clone();
    let mut vw = p.v.clone();
    for step in 1..=k {
        uw -= game.grad_u(&uw, &p.v) * gamma;
        vw += game.grad_v(&p.u, &vw) * gamma;
        if let Some(b) = &clamp {
            b.project_u(&mut uw);
            b.project_v(&mut vw, p.dim_u());
        }
        if !finite(&uw) || !finite(&vw) {
            let point = uw.iter().chain(vw.iter()).copied().collect();
            return Err(Error::NonFiniteInner { step, point });
        }
    }
    Ok((uw, vw))
}

/// The approximate gap `M(u, v_w) − M(u_w, v)` and its gradient.
pub fn dg_estimate<G: Game + ?Sized>(game: &G, p: &JointPoint, cfg: &DgConfig) -> Result<DgEstimate> {
    let gamma = cfg.gamma()?;
    match cfg.mode {
        GradMode::Envelope => {
            let (u_worst, v_worst) = responses(game, p, cfg.k, gamma, cfg.clamp.as_ref())?;
            let value = game.value(&p.u, &v_worst) - game.value(&u_worst, &p.v);
            let grad_u = game.grad_u(&p.u, &v_worst);
            let grad_v = -game.grad_v(&u_worst, &p.v);
            Ok(DgEstimate { value, u_worst, v_worst, grad_u, grad_v })
        }
        GradMode::Unrolled => unrolled(game, p, cfg.k, gamma, cfg.clamp.as_ref()),
    }
}

/// Zero the rows of a response Jacobian whose coordinate sits on a clamp
/// bound after projection.
fn freeze_clamped_rows(x: &Vector, lower: &[f64], upper: &[f64], jacobians: &mut [&mut Matrix]) {
    for (i, xi) in x.iter().enumerate() {
        if *xi <= lower[i] || *xi >= upper[i] {
            for jac in jacobians.iter_mut() {
                jac.row_mut(i).fill(0.0);
            }
        }
    }
}

fn unrolled<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    k: usize,
    gamma: f64,
    clamp: Option<&BoxDomain>,
) -> Result<DgEstimate> {
    let (nu, nv) = (p.dim_u(), p.dim_v());
    let clamp = clamp.map(|b| widen_box(b, nu + nv));

    // Min player's response a_i and its Jacobians with respect to (u, v).
    let mut a = p.u.clone();
    let mut a_u = Matrix::identity(nu, nu);
    let mut a_v = Matrix::zeros(nu, nv);
    // Max player's response b_i and its Jacobians.
    let mut b = p.v.clone();
    let mut b_u = Matrix::zeros(nv, nu);
    let mut b_v = Matrix::identity(nv, nv);

    for step in 1..=k {
        let ha: HessianBlocks = second_order(game, &JointPoint::new(a.clone(), p.v.clone()));
        let hb: HessianBlocks = second_order(game, &JointPoint::new(p.u.clone(), b.clone()));
        let ga = game.grad_u(&a, &p.v);
        let gb = game.grad_v(&p.u, &b);

        // a_i = a_{i-1} − γ ∇_u M(a_{i-1}, v)
        let next_a_u = &a_u - (&ha.uu * &a_u) * gamma;
        let next_a_v = &a_v - (&ha.uu * &a_v + &ha.uv) * gamma;
        // b_i = b_{i-1} + γ ∇_v M(u, b_{i-1})
        let next_b_u = &b_u + (&hb.vu + &hb.vv * &b_u) * gamma;
        let next_b_v = &b_v + (&hb.vv * &b_v) * gamma;
        a -= ga * gamma;
        b += gb * gamma;
        a_u = next_a_u;
        a_v = next_a_v;
        b_u = next_b_u;
        b_v = next_b_v;

        if let Some(bx) = &clamp {
            bx.project_u(&mut a);
            bx.project_v(&mut b, nu);
            freeze_clamped_rows(&a, &bx.lower[..nu], &bx.upper[..nu], &mut [&mut a_u, &mut a_v]);
            freeze_clamped_rows(&b, &bx.lower[nu..], &bx.upper[nu..], &mut [&mut b_u, &mut b_v]);
        }
        if !finite(&a) || !finite(&b) {
            let point = a.iter().chain(b.iter()).copied().collect();
            return Err(Error::NonFiniteInner { step, point });
        }
    }

    let value = game.value(&p.u, &b) - game.value(&a, &p.v);
    // d/du M(u, b(u,v)) and d/dv M(u, b(u,v)).
    let gu_at_b = game.grad_u(&p.u, &b);
    let gv_at_b = game.grad_v(&p.u, &b);
    // d/du M(a(u,v), v) and d/dv M(a(u,v), v).
    let gu_at_a = game.grad_u(&a, &p.v);
    let gv_at_a = game.grad_v(&a, &p.v);

    let grad_u = gu_at_b + b_u.transpose() * &gv_at_b - a_u.transpose() * &gu_at_a;
    let grad_v = b_v.transpose() * &gv_at_b - (a_v.transpose() * &gu_at_a + gv_at_a);
    Ok(DgEstimate { value, u_worst: a, v_worst: b, grad_u, grad_v })
}

/// The approximate gap only, as logged while training.
pub fn dg_metric<G: Game + ?Sized>(game: &G, p: &JointPoint, k: usize, gamma: f64) -> Result<f64> {
    let (uw, vw) = worst_case_responses(game, p, k, gamma)?;
    Ok(game.value(&p.u, &vw) - game.value(&uw, &p.v))
}

/// Running state of the scalar AdaGrad step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaGradState {
    /// `Σ‖g_τ‖²` over the steps taken so far.
    pub sum_sq: f64,
    pub diameter: f64,
    pub bounds: BoxDomain,
    /// Effective step of the most recent update.
    pub last_eta: Option<f64>,
}

impl AdaGradState {
    pub fn new(diameter: f64, bounds: BoxDomain) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidParameter(format!("AdaGrad diameter must be > 0, got {diameter}")));
        }
        Ok(Self { sum_sq: 0.0, diameter, bounds, last_eta: None })
    }

    /// Current effective step `D / sqrt(S)`, if any gradient has been seen.
    pub fn eta(&self) -> Option<f64> {
        (self.sum_sq > 0.0).then(|| self.diameter / self.sum_sq.sqrt())
    }
}

/// One projected AdaGrad step on the stacked vector `x`.
///
/// An all-zero gradient before any non-zero one leaves `x` and the state
/// untouched (the step size is undefined).
pub fn adagrad_step_flat(state: &mut AdaGradState, x: &Vector, g: &Vector) -> Vector {
    let sq = g.norm_squared();
    if state.sum_sq + sq == 0.0 {
        return x.clone();
    }
    state.sum_sq += sq;
    let eta = state.diameter / state.sum_sq.sqrt();
    state.last_eta = Some(eta);
    let mut next = x - g * eta;
    let bounds = widen_box(&state.bounds, x.len());
    bounds.project(&mut next);
    next
}

/// [`adagrad_step_flat`] on a strategy pair with the joint gradient `g`.
pub fn adagrad_step(state: &mut AdaGradState, p: &JointPoint, g: &Vector) -> JointPoint {
    JointPoint::from_flat(&adagrad_step_flat(state, &p.flatten(), g), p.dim_u())
}

/// One descent step of both players on the approximate gap.
///
/// `adagrad` must be provided when `cfg.outer` is AdaGrad; `eta` is used for
/// the constant outer step.
pub fn dg_descent_step<G: Game + ?Sized>(
    game: &G,
    p: &JointPoint,
    cfg: &DgConfig,
    eta: f64,
    adagrad: Option<&mut AdaGradState>,
) -> Result<JointPoint> {
    let est = dg_estimate(game, p, cfg)?;
    if !finite(&est.grad_u) || !finite(&est.grad_v) {
        return Err(Error::NonFinite { what: "duality-gap gradient".into(), point: p.to_vec() });
    }
    match (&cfg.outer, adagrad) {
        (OuterStep::ConstantEta, _) => {
            Ok(JointPoint::new(&p.u - &est.grad_u * eta, &p.v - &est.grad_v * eta))
        }
        (OuterStep::AdaGrad { .. }, Some(state)) => Ok(adagrad_step(state, p, &est.grad())),
        (OuterStep::AdaGrad { .. }, None) => {
            Err(Error::InvalidParameter("AdaGrad outer step needs an AdaGradState".into()))
        }
    }
}
