//! Game oracles and the catalog of analytic two-player games.
//!
//! A [`Game`] exposes the objective `M(u, v)`, its first-order gradients and,
//! when a closed form exists, the four second-order blocks. The min player
//! controls `u`, the max player controls `v`.
//!
//! Block conventions: `uv[i][j] = ∂²M/∂u_i∂v_j` (shape `dim_u × dim_v`) and
//! `vu = uvᵀ`, so `vu` is the Jacobian of `∇_v M` with respect to `u`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::point::{BoxDomain, JointPoint, Matrix, Vector};

/// The four second-order blocks of `M` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianBlocks {
    pub uu: Matrix,
    pub uv: Matrix,
    pub vu: Matrix,
    pub vv: Matrix,
}

impl HessianBlocks {
    /// Blocks of a 1-D/1-D game.
    pub fn scalar(uu: f64, uv: f64, vv: f64) -> Self {
        Self {
            uu: Matrix::from_element(1, 1, uu),
            uv: Matrix::from_element(1, 1, uv),
            vu: Matrix::from_element(1, 1, uv),
            vv: Matrix::from_element(1, 1, vv),
        }
    }

    /// Full symmetric Hessian of `M` over the stacked coordinates `(u, v)`.
    pub fn full(&self) -> Matrix {
        let (nu, nv) = (self.uu.nrows(), self.vv.nrows());
        let mut h = Matrix::zeros(nu + nv, nu + nv);
        h.view_mut((0, 0), (nu, nu)).copy_from(&self.uu);
        h.view_mut((0, nu), (nu, nv)).copy_from(&self.uv);
        h.view_mut((nu, 0), (nv, nu)).copy_from(&self.vu);
        h.view_mut((nu, nu), (nv, nv)).copy_from(&self.vv);
        h
    }
}

/// A two-player zero-sum differentiable game.
///
/// Implementations are immutable after construction and must be pure:
/// evaluating twice at the same input returns bit-identical results.
pub trait Game: Send + Sync {
    fn name(&self) -> String;
    fn dim_u(&self) -> usize;
    fn dim_v(&self) -> usize;
    fn value(&self, u: &Vector, v: &Vector) -> f64;
    fn grad_u(&self, u: &Vector, v: &Vector) -> Vector;
    fn grad_v(&self, u: &Vector, v: &Vector) -> Vector;

    /// Both gradients; games with a shared forward pass override this.
    fn grads(&self, u: &Vector, v: &Vector) -> (Vector, Vector) {
        (self.grad_u(u, v), self.grad_v(u, v))
    }

    /// Closed-form second-order blocks, if the game has them.
    fn hessian_blocks(&self, _u: &Vector, _v: &Vector) -> Option<HessianBlocks> {
        None
    }

    fn domain(&self) -> Option<&BoxDomain> {
        None
    }
}

impl<G: Game + ?Sized> Game for Box<G> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn dim_u(&self) -> usize {
        (**self).dim_u()
    }
    fn dim_v(&self) -> usize {
        (**self).dim_v()
    }
    fn value(&self, u: &Vector, v: &Vector) -> f64 {
        (**self).value(u, v)
    }
    fn grad_u(&self, u: &Vector, v: &Vector) -> Vector {
        (**self).grad_u(u, v)
    }
    fn grad_v(&self, u: &Vector, v: &Vector) -> Vector {
        (**self).grad_v(u, v)
    }
    fn grads(&self, u: &Vector, v: &Vector) -> (Vector, Vector) {
        (**self).grads(u, v)
    }
    fn hessian_blocks(&self, u: &Vector, v: &Vector) -> Option<HessianBlocks> {
        (**self).hessian_blocks(u, v)
    }
    fn domain(&self) -> Option<&BoxDomain> {
        (**self).domain()
    }
}

/// Default finite-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// Second-order blocks by central differences of the analytic gradients.
///
/// `h` is the relative step; each coordinate is perturbed by
/// `h * max(1, |x|)`. `uu` and `vv` are symmetrized, and `uv`/`vu` are
/// averaged so that `vu = uvᵀ` holds exactly.
pub fn second_order_fd<G: Game + ?Sized>(game: &G, p: &JointPoint, h: f64) -> HessianBlocks {
    let (nu, nv) = (p.dim_u(), p.dim_v());
    let mut uu = Matrix::zeros(nu, nu);
    let mut vu = Matrix::zeros(nv, nu);
    for j in 0..nu {
        let step = h * p.u[j].abs().max(1.0);
        let mut plus = p.u.clone();
        let mut minus = p.u.clone();
        plus[j] += step;
        minus[j] -= step;
        let (gu_p, gv_p) = game.grads(&plus, &p.v);
        let (gu_m, gv_m) = game.grads(&minus, &p.v);
        let width = plus[j] - minus[j];
        uu.set_column(j, &((gu_p - gu_m) / width));
        vu.set_column(j, &((gv_p - gv_m) / width));
    }
    let mut vv = Matrix::zeros(nv, nv);
    let mut uv = Matrix::zeros(nu, nv);
    for j in 0..nv {
        let step = h * p.v[j].abs().max(1.0);
        let mut plus = p.v.clone();
        let mut minus = p.v.clone();
        plus[j] += step;
        minus[j] -= step;
        let (gu_p, gv_p) = game.grads(&p.u, &plus);
        let (gu_m, gv_m) = game.grads(&p.u, &minus);
        let width = plus[j] - minus[j];
        uv.set_column(j, &((gu_p - gu_m) / width));
        vv.set_column(j, &((gv_p - gv_m) / width));
    }
    let uu = (&uu + uu.transpose()) * 0.5;
    let vv = (&vv + vv.transpose()) * 0.5;
    let uv = (&uv + vu.transpose()) * 0.5;
    let vu = uv.transpose();
    HessianBlocks { uu, uv, vu, vv }
}

/// Closed-form blocks when available, otherwise [`second_order_fd`] with the
/// default step.
pub fn second_order<G: Game + ?Sized>(game: &G, p: &JointPoint) -> HessianBlocks {
    game.hessian_blocks(&p.u, &p.v).unwrap_or_else(|| second_order_fd(game, p, 1e-5))
}

fn x_of(u: &Vector) -> f64 {
    u[0]
}

fn scalar(x: f64) -> Vector {
    Vector::from_element(1, x)
}

/// `M(x, y) = c·x·y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bilinear {
    c: f64,
}

impl Bilinear {
    pub fn new(c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("bilinear game needs finite c != 0, got {c}")));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

pub fn make_bilinear(c: f64) -> Result<Bilinear> {
    Bilinear::new(c)
}

impl Game for Bilinear {
    fn name(&self) -> String {
        format!("bilinear:c={}", self.c)
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn dim_v(&self) -> usize {
        1
    }
    fn value(&self, u: &Vector, v: &Vector) -> f64 {
        self.c * u[0] * v[0]
    }
    fn grad_u(&self, _u: &Vector, v: &Vector) -> Vector {
        scalar(self.c * v[0])
    }
    fn grad_v(&self, u: &Vector, _v: &Vector) -> Vector {
        scalar(self.c * u[0])
    }
    fn hessian_blocks(&self, _u: &Vector, _v: &Vector) -> Option<HessianBlocks> {
        Some(HessianBlocks::scalar(0.0, self.c, 0.0))
    }
}

/// `M(x, y) = a·x² + b·y² + c·x·y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    name: &'static str,
    xx: f64,
    yy: f64,
    xy: f64,
}

impl Quadratic {
    pub fn new(name: &'static str, xx: f64, yy: f64, xy: f64) -> Self {
        Self { name, xx, yy, xy }
    }
}

/// `f1(x, y) = −3x² − y² + 4xy`; the origin is a local minimax.
pub fn make_quadratic_f1() -> Quadratic {
    Quadratic::new("f1", -3.0, -1.0, 4.0)
}

/// `f2(x, y) = 3x² + y² + 4xy`; the origin is a stationary point that is
/// not a local minimax.
pub fn make_quadratic_f2() -> Quadratic {
    Quadratic::new("f2", 3.0, 1.0, 4.0)
}

impl Game for Quadratic {
    fn name(&self) -> String {
        self.name.to_string()
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn dim_v(&self) -> usize {
        1
    }
    fn value(&self, u: &Vector, v: &Vector) -> f64 {
        let (x, y) = (x_of(u), x_of(v));
        self.xx * x * x + self.yy * y * y + self.xy * x * y
    }
    fn grad_u(&self, u: &Vector, v: &Vector) -> Vector {
        scalar(2.0 * self.xx * u[0] + self.xy * v[0])
    }
    fn grad_v(&self, u: &Vector, v: &Vector) -> Vector {
        scalar(2.0 * self.yy * v[0] + self.xy * u[0])
    }
    fn hessian_blocks(&self, _u: &Vector, _v: &Vector) -> Option<HessianBlocks> {
        Some(HessianBlocks::scalar(2.0 * self.xx, self.xy, 2.0 * self.yy))
    }
}

/// `f3(x, y) = (4x² − (y − 3x + 0.05x³)² − 0.1y⁴)·exp(−0.01(x² + y²))`.
///
/// Second-order blocks come from [`second_order_fd`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolyF3;

pub fn make_poly_f3() -> PolyF3 {
    PolyF3
}

impl PolyF3 {
    fn parts(x: f64, y: f64) -> (f64, f64, f64) {
        let w = y - 3.0 * x + 0.05 * x * x * x;
        let poly = 4.0 * x * x - w * w - 0.1 * y.powi(4);
        let damp = (-0.01 * (x * x + y * y)).exp();
        (w, poly, damp)
    }
}

impl Game for PolyF3 {
    fn name(&self) -> String {
        "f3".into()
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn dim_v(&self) -> usize {
        1
    }
    fn value(&self, u: &Vector, v: &Vector) -> f64 {
        let (_, poly, damp) = Self::parts(u[0], v[0]);
        poly * damp
    }
    fn grad_u(&self, u: &Vector, v: &Vector) -> Vector {
        let (x, _) = (u[0], v[0]);
        let (w, poly, damp) = Self::parts(x, v[0]);
        let dpoly = 8.0 * x - 2.0 * w * (-3.0 + 0.15 * x * x);
        scalar((dpoly - 0.02 * x * poly) * damp)
    }
    fn grad_v(&self, u: &Vector, v: &Vector) -> Vector {
        let y = v[0];
        let (w, poly, damp) = Self::parts(u[0], y);
        let dpoly = -2.0 * w - 0.4 * y * y * y;
        scalar((dpoly - 0.02 * y * poly) * damp)
    }
}

/// `M(x, y) = x² − y² + xy + 10·sin(5x) + 12·sin(3y)` on `[−10, 10]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Motivation {
    domain: BoxDomain,
}

pub fn make_motivation() -> Motivation {
    Motivation { domain: BoxDomain::cube(-10.0, 10.0, 2).expect("static bounds") }
}

impl Game for Motivation {
    fn name(&self) -> String {
        "motivation".into()
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn dim_v(&self) -> usize {
        1
    }
    fn value(&self, u: &Vector, v: &Vector) -> f64 {
        let (x, y) = (u[0], v[0]);
        x * x - y * y + x * y + 10.0 * (5.0 * x).sin() + 12.0 * (3.0 * y).sin()
    }
    fn grad_u(&self, u: &Vector, v: &Vector) -> Vector {
        scalar(2.0 * u[0] + v[0] + 50.0 * (5.0 * u[0]).cos())
    }
    fn grad_v(&self, u: &Vector, v: &Vector) -> Vector {
        scalar(-2.0 * v[0] + u[0] + 36.0 * (3.0 * v[0]).cos())
    }
    fn hessian_blocks(&self, u: &Vector, v: &Vector) -> Option<HessianBlocks> {
        Some(HessianBlocks::scalar(
            2.0 - 250.0 * (5.0 * u[0]).sin(),
            1.0,
            -2.0 - 108.0 * (3.0 * v[0]).sin(),
        ))
    }
    fn domain(&self) -> Option<&BoxDomain> {
        Some(&self.domain)
    }
}

/// Piecewise potential of the nonconvex-nonconcave game.
pub fn ncnc_potential(x: f64) -> f64 {
    if x < -FRAC_PI_2 {
        -3.0 * (x + FRAC_PI_2)
    } else if x <= FRAC_PI_2 {
        -3.0 * x.cos()
    } else {
        -x.cos() + 2.0 * x - std::f64::consts::PI
    }
}

/// Derivative of [`ncnc_potential`]; continuous at both breakpoints.
pub fn ncnc_potential_grad(x: f64) -> f64 {
    if x < -FRAC_PI_2 {
        -3.0
    } else if x <= FRAC_PI_2 {
        3.0 * x.sin()
    } else {
        x.sin() + 2.0
    }
}

fn ncnc_potential_curvature(x: f64) -> f64 {
    if x < -FRAC_PI_2 {
        0.0
    } else if x <= FRAC_PI_2 {
        3.0 * x.cos()
    } else {
        x.cos()
    }
}

/// Nonconvex-nonconcave game `F(x) + cxy − F(x)`.
///
/// As written the potential cancels and the game is `cxy`. With `separable`
/// set, `F(x)` is kept as a separable term of the min player:
/// `M = F(x) + cxy`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ncnc {
    c: f64,
    separable: bool,
}

pub fn make_ncnc(c: f64) -> Result<Ncnc> {
    Ncnc::new(c, false)
}

impl Ncnc {
    pub fn new(c: f64, separable: bool) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!("ncnc game needs finite c, got {c}")));
        }
        Ok(Self { c, separable })
    }

    pub fn separable(&self) -> bool {
        self.separable
    }
}

impl Game for Ncnc {
    fn name(&self) -> String {
        if self.separable {
            format!("ncnc:c={},sep=1", self.c)
        } else {
            format!("ncnc:c={}", self.c)
        }
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn dim_v(&self) -> usize {
        1
    }
    fn value(&self, u: &Vector, v: &Vector) -> f64 {
        let x = u[0];
        let f = if self.separable { ncnc_potential(x) } else { 0.0 };
        f + self.c * x * v[0]
    }
    fn grad_u(&self, u: &Vector, v: &Vector) -> Vector {
        let df = if self.separable { ncnc_potential_grad(u[0]) } else { 0.0 };
        scalar(df + self.c * v[0])
    }
    fn grad_v(&self, u: &Vector, _v: &Vector) -> Vector {
        scalar(self.c * u[0])
    }
    fn hessian_blocks(&self, u: &Vector, _v: &Vector) -> Option<HessianBlocks> {
        let d2f = if self.separable { ncnc_potential_curvature(u[0]) } else { 0.0 };
        Some(HessianBlocks::scalar(d2f, self.c, 0.0))
    }
}

/// A catalog game named as `name[:key=value,...]`, e.g. `bilinear:c=3`.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

pub const CATALOG: &[&str] = &["bilinear", "f1", "f2", "f3", "motivation", "ncnc"];

impl GameSpec {
    fn param(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.params.get(key) {
            Some(v) => Ok(*v),
            None => default.ok_or_else(|| {
                Error::InvalidParameter(format!("game `{}` requires parameter `{key}`", self.name))
            }),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidParameter(format!("game `{}` has no parameter `{k}`", self.name))),
            None => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Game>> {
        Ok(match self.name.as_str() {
            "bilinear" => {
                self.check_keys(&["c"])?;
                Box::new(Bilinear::new(self.param("c", Some(3.0))?)?)
            }
            "f1" => {
                self.check_keys(&[])?;
                Box::new(make_quadratic_f1())
            }
            "f2" => {
                self.check_keys(&[])?;
                Box::new(make_quadratic_f2())
            }
            "f3" => {
                self.check_keys(&[])?;
                Box::new(make_poly_f3())
            }
            "motivation" => {
                self.check_keys(&[])?;
                Box::new(make_motivation())
            }
            "ncnc" => {
                self.check_keys(&["c", "sep"])?;
                let sep = self.param("sep", Some(0.0))? != 0.0;
                Box::new(Ncnc::new(self.param("c", Some(3.0))?, sep)?)
            }
            other => return Err(Error::UnknownGame(other.to_string())),
        })
    }
}

impl FromStr for GameSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (s, None),
        };
        if !CATALOG.contains(&name) {
            return Err(Error::UnknownGame(name.to_string()));
        }
        let mut params = BTreeMap::new();
        if let Some(rest) = rest {
            for kv in rest.split(',').filter(|kv| !kv.trim().is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{kv}`")))?;
                let value: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("`{v}` is not a number")))?;
                params.insert(k.trim().to_string(), value);
            }
        }
        Ok(Self { name: name.to_string(), params })
    }
}

impl fmt::Display for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            f.write_str(if i == 0 { ":" } else { "," })?;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Parse and build a catalog game in one go.
pub fn parse_game(spec: &str) -> Result<Box<dyn Game>> {
    spec.parse::<GameSpec>()?.build()
}
