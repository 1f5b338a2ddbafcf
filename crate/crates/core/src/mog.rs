//! A saturating-loss GAN on a 1-D mixture of three Gaussians.
//!
//! The generator maps 16-D standard normal noise to a scalar; the
//! discriminator maps a scalar to a logit. The game value is
//!
//! ```text
//! M(u, v) = mean_i [ log D_v(x_i) + log(1 − D_v(G_u(z_i))) ]
//! ```
//!
//! over a fixed batch of real samples `x_i` and noise draws `z_i`, so
//! training is full-batch and deterministic.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dg::{dg_estimate, dg_metric, DgConfig, GradMode};
use crate::error::{Error, Result};
use crate::games::Game;
use crate::mlp::Mlp;
use crate::point::{JointPoint, Matrix, Vector};
use crate::rng::stream;

pub const MODE_CENTERS: [f64; 3] = [-4.0, 0.0, 4.0];
pub const MODE_STD: f64 = 0.1;
/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;
pub const DATASET_SIZE: usize = 5000;
pub const NOISE_DIM: usize = 16;

/// `n` draws from the equal-weight mixture of `N(c, 0.1²)` over the mode
/// centers.
pub fn sample_dataset(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, "mog/data");
    (0..n)
        .map(|_| {
            let c = MODE_CENTERS[rng.gen_range(0..MODE_CENTERS.len())];
            c + MODE_STD * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Fraction of `samples` within `±window` of each center.
pub fn mode_coverage(samples: &[f64], centers: &[f64], window: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(window > 0.0) {
        return Err(Error::InvalidParameter(format!("window must be > 0, got {window}")));
    }
    let n = samples.len() as f64;
    Ok(centers
        .iter()
        .map(|c| samples.iter().filter(|&&x| (x - c).abs() <= window).count() as f64 / n)
        .collect())
}

/// Counts of `samples` in `bins` equal bins over `[lo, hi]`; values outside
/// are dropped.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        if x >= lo && x <= hi {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
    }
    counts
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(log D, d log D / d logit)` for a real sample, with clamping.
fn real_term(s: f64) -> (f64, f64) {
    let p = sigmoid(s);
    if p < PROB_CLAMP {
        (PROB_CLAMP.ln(), 0.0)
    } else if p > 1.0 - PROB_CLAMP {
        ((1.0 - PROB_CLAMP).ln(), 0.0)
    } else {
        (-softplus(-s), 1.0 - p)
    }
}

/// `(log(1 − D), d log(1 − D) / d logit)` for a generated sample.
fn fake_term(s: f64) -> (f64, f64) {
    let p = sigmoid(s);
    if p < PROB_CLAMP {
        ((1.0 - PROB_CLAMP).ln(), 0.0)
    } else if p > 1.0 - PROB_CLAMP {
        (PROB_CLAMP.ln(), 0.0)
    } else {
        (-softplus(s), -p)
    }
}

/// The GAN game over flat generator (`u`) and discriminator (`v`)
/// parameters.
#[derive(Clone, Debug)]
pub struct MogGanGame {
    pub generator: Mlp,
    pub discriminator: Mlp,
    /// Real samples as a `1 × N` row.
    data: Matrix,
    /// Noise batch, one column per sample.
    noise: Matrix,
}

/// Value and whichever gradients were asked for.
#[derive(Clone, Debug)]
pub struct GanEval {
    pub value: Option<f64>,
    pub grad_u: Option<Vector>,
    pub grad_v: Option<Vector>,
}

impl MogGanGame {
    /// Standard architecture with the seeded dataset and noise batch.
    pub fn new(seed: u64) -> Self {
        Self::with_size(seed, DATASET_SIZE)
    }

    /// Standard architecture with `n` real samples and `n` noise draws.
    pub fn with_size(seed: u64, n: usize) -> Self {
        let data = sample_dataset(seed, n);
        let mut rng = stream(seed, "mog/noise");
        let noise = Matrix::from_fn(NOISE_DIM, n, |_, _| rng.sample(StandardNormal));
        Self::from_parts(Mlp::generator(), Mlp::discriminator(), &data, noise)
            .expect("standard architecture is consistent")
    }

    pub fn from_parts(generator: Mlp, discriminator: Mlp, data: &[f64], noise: Matrix) -> Result<Self> {
        if data.is_empty() || noise.ncols() == 0 {
            return Err(Error::EmptySamples);
        }
        if noise.nrows() != generator.input_dim() {
            return Err(Error::DimensionMismatch { expected: generator.input_dim(), got: noise.nrows() });
        }
        let g_out = *generator.sizes.last().expect("sizes");
        if g_out != 1 || discriminator.input_dim() != 1 || *discriminator.sizes.last().expect("sizes") != 1 {
            return Err(Error::Construction("generator and discriminator must be scalar-valued on scalars".into()));
        }
        Ok(Self { generator, discriminator, data: Matrix::from_row_slice(1, data.len(), data), noise })
    }

    pub fn data(&self) -> &[f64] {
        self.data.as_slice()
    }

    /// Seeded initial parameters for both networks.
    pub fn init_params(&self, seed: u64) -> JointPoint {
        let u = self.generator.init(&mut stream(seed, "mog/init/generator"));
        let v = self.discriminator.init(&mut stream(seed, "mog/init/discriminator"));
        JointPoint::new(u, v)
    }

    /// Generator outputs for a noise batch.
    pub fn generate(&self, u: &Vector, noise: &Matrix) -> Vec<f64> {
        self.generator.forward(u, noise).output().as_slice().to_vec()
    }

    /// Discriminator probabilities for scalar inputs.
    pub fn discriminate(&self, v: &Vector, xs: &[f64]) -> Vec<f64> {
        let x = Matrix::from_row_slice(1, xs.len(), xs);
        self.discriminator.forward(v, &x).output().iter().map(|&s| sigmoid(s)).collect()
    }

    /// Value and the requested gradients. The real-data pass is skipped
    /// when only `grad_u` is wanted; `value` is then `None`.
    pub fn evaluate(&self, u: &Vector, v: &Vector, want_u: bool, want_v: bool) -> GanEval {
        let g_fwd = self.generator.forward(u, &self.noise);
        let fake = g_fwd.output().clone();
        let d_fake = self.discriminator.forward(v, &fake);
        let nf = fake.ncols() as f64;
        let mut fake_value = 0.0;
        let mut ds_fake = Matrix::zeros(1, fake.ncols());
        for (i, &s) in d_fake.output().iter().enumerate() {
            let (val, d) = fake_term(s);
            fake_value += val / nf;
            ds_fake[i] = d / nf;
        }

        let mut value = None;
        let mut grad_v = None;
        if want_v || !want_u {
            let d_real = self.discriminator.forward(v, &self.data);
            let nr = self.data.ncols() as f64;
            let mut real_value = 0.0;
            let mut ds_real = Matrix::zeros(1, self.data.ncols());
            for (i, &s) in d_real.output().iter().enumerate() {
                let (val, d) = real_term(s);
                real_value += val / nr;
                ds_real[i] = d / nr;
            }
            value = Some(real_value + fake_value);
            if want_v {
                let (gr, _) = self.discriminator.backward(v, &d_real, &ds_real, true, false);
                let (gf, _) = self.discriminator.backward(v, &d_fake, &ds_fake, true, false);
                grad_v = Some(gr.expect("requested") + gf.expect("requested"));
            }
        }
        let grad_u = want_u.then(|| {
            let (_, dx) = self.discriminator.backward(v, &d_fake, &ds_fake, false, true);
            let (gu, _) = self.generator.backward(u, &g_fwd, &dx.expect("requested"), true, false);
            gu.expect("requested")
        });
        GanEval { value, grad_u, grad_v }
    }

    /// Value and both gradients; fails on a non-finite loss.
    pub fn value_and_grads(&self, p: &JointPoint) -> Result<(f64, Vector, Vector)> {
        let e = self.evaluate(&p.u, &p.v, true, true);
        let value = e.value.expect("computed with grad_v");
        if !value.is_finite() {
            return Err(Error::NonFinite { what: "GAN loss".into(), point: Vec::new() });
        }
        Ok((value, e.grad_u.expect("requested"), e.grad_v.expect("requested")))
    }
}

impl Game for MogGanGame {
    fn name(&self) -> String {
        "mog_gan".into()
    }
    fn dim_u(&self) -> usize {
        self.generator.num_params()
    }
    fn dim_v(&self) -> usize {
        self.discriminator.num_params()
    }
    fn value(&self, u: &Vector, v: &Vector) -> f64 {
        self.evaluate(u, v, false, false).value.expect("computed without gradients")
    }
    fn grad_u(&self, u: &Vector, v: &Vector) -> Vector {
        self.evaluate(u, v, true, false).grad_u.expect("requested")
    }
    fn grad_v(&self, u: &Vector, v: &Vector) -> Vector {
        self.evaluate(u, v, false, true).grad_v.expect("requested")
    }
    fn grads(&self, u: &Vector, v: &Vector) -> (Vector, Vector) {
        let e = self.evaluate(u, v, true, true);
        (e.grad_u.expect("requested"), e.grad_v.expect("requested"))
    }
}

/// `H·d` with `H` the full second-derivative matrix of `M`, by a central
/// difference of the stacked gradient along `d` with step `1e-4 / ‖d‖`.
pub fn fd_hvp<G: Game + ?Sized>(game: &G, p: &JointPoint, d: &Vector) -> Vector {
    let norm = d.norm();
    if norm == 0.0 {
        return Vector::zeros(d.len());
    }
    let eps = 1e-4 / norm;
    let x = p.flatten();
    let at = |x: Vector| {
        let q = JointPoint::from_flat(&x, p.dim_u());
        let (gu, gv) = game.grads(&q.u, &q.v);
        JointPoint::new(gu, gv).flatten()
    };
    (at(&x + d * eps) - at(&x - d * eps)) / (2.0 * eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MogAlgorithm {
    Gda,
    Eg,
    Co,
    Dg,
}

impl FromStr for MogAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gda" => Ok(MogAlgorithm::Gda),
            "eg" => Ok(MogAlgorithm::Eg),
            "co" => Ok(MogAlgorithm::Co),
            "dg" => Ok(MogAlgorithm::Dg),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

impl fmt::Display for MogAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MogAlgorithm::Gda => "gda",
            MogAlgorithm::Eg => "eg",
            MogAlgorithm::Co => "co",
            MogAlgorithm::Dg => "dg",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MogConfig {
    pub algorithm: MogAlgorithm,
    pub seed: u64,
    pub iterations: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub co_gamma: f64,
    pub dg_k: usize,
    pub log_interval: usize,
    /// Size of the fixed noise set used for logged samples.
    pub eval_size: usize,
}

impl MogConfig {
    pub fn new(algorithm: MogAlgorithm, seed: u64) -> Self {
        Self {
            algorithm,
            seed,
            iterations: 20_000,
            lr_g: 2e-4,
            lr_d: 2e-4,
            co_gamma: 0.1,
            dg_k: 10,
            log_interval: 100,
            eval_size: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MogLogRow {
    pub iter: usize,
    pub value: f64,
    pub grad_u_norm: f64,
    pub grad_v_norm: f64,
    pub dg_metric: f64,
    pub mode_frac: [f64; 3],
    pub disc_real_median: f64,
    pub disc_fake_median: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MogStatus {
    Completed,
    Diverged,
}

#[derive(Clone, Debug)]
pub struct MogRun {
    pub config: MogConfig,
    pub log: Vec<MogLogRow>,
    pub status: MogStatus,
    pub final_point: JointPoint,
    /// Generator outputs on the evaluation noise at the end of training.
    pub samples: Vec<f64>,
}

pub const HIST_BINS: usize = 121;
pub const HIST_RANGE: (f64, f64) = (-6.0, 6.0);

impl MogRun {
    pub fn coverage(&self) -> [f64; 3] {
        self.log.last().map(|r| r.mode_frac).unwrap_or([0.0; 3])
    }

    pub fn histogram(&self) -> Vec<usize> {
        histogram(&self.samples, HIST_RANGE.0, HIST_RANGE.1, HIST_BINS)
    }

    /// CSV with header `iter,value,grad_u_norm,...,disc_fake_median`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from(
            "iter,value,grad_u_norm,grad_v_norm,dg_metric,mode_frac_m4,mode_frac_0,mode_frac_4,disc_real_median,disc_fake_median\n",
        );
        for r in &self.log {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.iter,
                r.value,
                r.grad_u_norm,
                r.grad_v_norm,
                r.dg_metric,
                r.mode_frac[0],
                r.mode_frac[1],
                r.mode_frac[2],
                r.disc_real_median,
                r.disc_fake_median
            ));
        }
        out
    }

    /// CSV with header `bin_center,count`.
    pub fn histogram_csv(&self) -> String {
        let width = (HIST_RANGE.1 - HIST_RANGE.0) / HIST_BINS as f64;
        let mut out = String::from("bin_center,count\n");
        for (i, c) in self.histogram().iter().enumerate() {
            out.push_str(&format!("{},{c}\n", HIST_RANGE.0 + (i as f64 + 0.5) * width));
        }
        out
    }

    /// CSV with header `sample`.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("sample\n");
        for s in &self.samples {
            out.push_str(&format!("{s}\n"));
        }
        out
    }
}

/// Noise set used for logged samples, independent of the training batch.
pub fn eval_noise(seed: u64, n: usize, dim: usize) -> Matrix {
    let mut rng = stream(seed, "mog/eval-noise");
    Matrix::from_fn(dim, n, |_, _| rng.sample(StandardNormal))
}

fn log_row(game: &MogGanGame, p: &JointPoint, iter: usize, cfg: &MogConfig, eval: &Matrix) -> (MogLogRow, Vec<f64>) {
    let e = game.evaluate(&p.u, &p.v, true, true);
    let samples = game.generate(&p.u, eval);
    let frac = mode_coverage(&samples, &MODE_CENTERS, 0.5).expect("non-empty eval set");
    let dg = dg_metric(game, p, cfg.dg_k, cfg.lr_g).unwrap_or(f64::NAN);
    let row = MogLogRow {
        iter,
        value: e.value.expect("computed with grad_v"),
        grad_u_norm: e.grad_u.expect("requested").norm(),
        grad_v_norm: e.grad_v.expect("requested").norm(),
        dg_metric: dg,
        mode_frac: [frac[0], frac[1], frac[2]],
        disc_real_median: median(&game.discriminate(&p.v, game.data())),
        disc_fake_median: median(&game.discriminate(&p.v, &samples)),
    };
    (row, samples)
}

/// One training update of `algorithm` from `p`.
pub fn mog_step(game: &MogGanGame, p: &JointPoint, cfg: &MogConfig) -> Result<JointPoint> {
    let (lr_g, lr_d) = (cfg.lr_g, cfg.lr_d);
    let next = match cfg.algorithm {
        MogAlgorithm::Gda => {
            let (_, gu, gv) = game.value_and_grads(p)?;
            JointPoint::new(&p.u - gu * lr_g, &p.v + gv * lr_d)
        }
        MogAlgorithm::Eg => {
            let (_, gu, gv) = game.value_and_grads(p)?;
            let mid = JointPoint::new(&p.u - gu * lr_g, &p.v + gv * lr_d);
            let (_, gu, gv) = game.value_and_grads(&mid)?;
            JointPoint::new(&p.u - gu * lr_g, &p.v + gv * lr_d)
        }
        MogAlgorithm::Co => {
            let (_, gu, gv) = game.value_and_grads(p)?;
            let raw = JointPoint::new(gu.clone(), gv.clone()).flatten();
            let pen = JointPoint::from_flat(&fd_hvp(game, p, &raw), p.dim_u());
            JointPoint::new(
                &p.u - (gu + pen.u * cfg.co_gamma) * lr_g,
                &p.v + (gv - pen.v * cfg.co_gamma) * lr_d,
            )
        }
        MogAlgorithm::Dg => {
            let est = dg_estimate(game, p, &DgConfig::new(cfg.dg_k, lr_g, GradMode::Envelope))?;
            JointPoint::new(&p.u - est.grad_u * lr_g, &p.v - est.grad_v * lr_d)
        }
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite { what: "parameters".into(), point: Vec::new() })
    }
}

/// Train from `init` on `game`, logging every `cfg.log_interval` steps and
/// at the end. A non-finite loss or parameter stops the run with status
/// [`MogStatus::Diverged`].
pub fn train_mog_on(game: &MogGanGame, init: JointPoint, cfg: &MogConfig) -> Result<MogRun> {
    if !(cfg.lr_g > 0.0 && cfg.lr_d > 0.0) || cfg.log_interval == 0 || cfg.eval_size == 0 {
        return Err(Error::InvalidParameter("learning rates, log interval and eval size must be positive".into()));
    }
    let eval = eval_noise(cfg.seed, cfg.eval_size, game.generator.input_dim());
    let mut p = init;
    let (row, mut samples) = log_row(game, &p, 0, cfg, &eval);
    let mut log = vec![row];
    let mut status = MogStatus::Completed;
    for iter in 1..=cfg.iterations {
        match mog_step(game, &p, cfg) {
            Ok(next) => p = next,
            Err(_) => {
                status = MogStatus::Diverged;
                break;
            }
        }
        if iter % cfg.log_interval == 0 || iter == cfg.iterations {
            let (row, s) = log_row(game, &p, iter, cfg, &eval);
            samples = s;
            if !row.value.is_finite() {
                status = MogStatus::Diverged;
                log.push(row);
                break;
            }
            log.push(row);
        }
    }
    Ok(MogRun { config: cfg.clone(), log, status, final_point: p, samples })
}

/// Train the standard experiment: 5000 real samples, seeded init.
pub fn train_mog(cfg: &MogConfig) -> Result<MogRun> {
    let game = MogGanGame::new(cfg.seed);
    let init = game.init_params(cfg.seed);
    train_mog_on(&game, init, cfg)
}
