use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use dualgap::dg::{DgConfig, GradMode};
use dualgap::dynamics::{algorithm_stability, landscape, LandscapeGrid, Measure};
use dualgap::mog::{train_mog, MogAlgorithm, MogConfig, MogStatus};
use dualgap::optimizers::{Algorithm, OptimizerConfig, TrajectoryOptions};
use dualgap::plot::{heatmap, line_chart, Axes, LineSeries};
use dualgap::stochastic::{default_horizons, make_realizable_quadratic, run_adagrad_rate, run_sgd_baseline};
use dualgap::{parse_game, run_trajectory, BoxDomain, Error, Game, JointPoint};
use serde_json::json;

use crate::args::{AlgArgs, GlobalArgs, LandscapeArgs, MeasureArg, ModeArg, MogArgs, PlotArgs, RateArgs, StabilityArgs, TrajArgs};
use crate::config::parse_list;
use crate::CliError;

/// Files a command wrote, in write order.
pub type Written = Vec<PathBuf>;

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Errors from parsing user-supplied specs are usage errors.
fn spec_error(e: Error) -> CliError {
    match e {
        Error::UnknownGame(_) | Error::UnknownAlgorithm(_) | Error::InvalidParameter(_) => usage(e),
        other => CliError::Runtime(other.into()),
    }
}

struct Sink {
    prefix: PathBuf,
    written: Written,
}

impl Sink {
    fn new(global: &GlobalArgs, default: &str) -> Result<Self, CliError> {
        let prefix = global.out.clone().unwrap_or_else(|| PathBuf::from("out").join(default));
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .map_err(CliError::Runtime)?;
        }
        Ok(Self { prefix, written: Vec::new() })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        let mut s = self.prefix.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    }

    fn write(&mut self, suffix: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(suffix);
        fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::Runtime)?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, suffix: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
        text.push('\n');
        self.write(suffix, &text)
    }
}

fn point_arg(s: &str, game: &dyn Game, what: &str) -> Result<JointPoint, CliError> {
    let xs = parse_list(s).map_err(|e| CliError::Usage(format!("--{what}: {e}")))?;
    let dim_u = game.dim_u();
    if xs.len() != dim_u + game.dim_v() {
        return Err(CliError::Usage(format!(
            "--{what} needs {} values for game {}, got {}",
            dim_u + game.dim_v(),
            game.name(),
            xs.len()
        )));
    }
    Ok(JointPoint::from_slices(&xs[..dim_u], &xs[dim_u..]))
}

/// Build the optimizer config from `--alg` plus the convenience flags.
pub fn optimizer_config(a: &AlgArgs) -> Result<OptimizerConfig, CliError> {
    let mut cfg = OptimizerConfig::parse(&a.alg, a.eta).map_err(spec_error)?;
    match cfg.algorithm {
        Algorithm::Dg => {
            let mut dg = cfg.dg.clone().unwrap_or_default();
            if let Some(k) = a.k {
                dg.k = k;
            }
            if let Some(g) = a.gamma {
                dg.gamma = Some(g);
            }
            if let Some(m) = a.mode {
                dg.mode = match m {
                    ModeArg::Envelope => GradMode::Envelope,
                    ModeArg::Unrolled => GradMode::Unrolled,
                };
            }
            cfg.dg = Some(dg);
        }
        Algorithm::Unrolled => {
            if let Some(k) = a.k {
                cfg.unroll_k = k;
            }
            if a.gamma.is_some() {
                cfg.unroll_gamma = a.gamma;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn game_arg(spec: &str) -> Result<Box<dyn Game>, CliError> {
    parse_game(spec).map_err(spec_error)
}

pub fn traj(global: &GlobalArgs, a: &TrajArgs) -> Result<Written, CliError> {
    let game = game_arg(&a.alg.game)?;
    let cfg = optimizer_config(&a.alg)?;
    let init = point_arg(&a.init, game.as_ref(), "init")?;
    let target = match &a.target {
        Some(t) => point_arg(t, game.as_ref(), "target")?,
        None => JointPoint::zeros(game.dim_u(), game.dim_v()),
    };
    let opts = TrajectoryOptions {
        tol: a.tol,
        targets: vec![target],
        log_dg: a.log_dg.map(|k| (k, cfg.resolved_dg().gamma.unwrap_or(cfg.eta))),
        ..TrajectoryOptions::default()
    };
    let mut sink = Sink::new(global, "traj")?;
    let (tr, failure) = match run_trajectory(game.as_ref(), &cfg, &init, a.steps, &opts) {
        Ok(tr) => (tr, None),
        Err(e) => (e.partial, Some(e.error)),
    };
    sink.write(".csv", &tr.to_csv())?;
    let mut summary = serde_json::to_value(tr.summary()).map_err(|e| CliError::Runtime(e.into()))?;
    summary["config"] = serde_json::to_value(&cfg).map_err(|e| CliError::Runtime(e.into()))?;
    summary["seed"] = json!(global.seed);
    if let Some(err) = &failure {
        summary["error"] = json!(err.to_string());
    }
    sink.json(".json", &summary)?;
    if !global.no_plot {
        let path: Vec<(f64, f64)> = tr.records.iter().map(|r| (r.point.u[0], r.point.v[0])).collect();
        let svg = if game.dim_u() == 1 && game.dim_v() == 1 {
            let extent = path
                .iter()
                .filter(|(u, v)| u.is_finite() && v.is_finite())
                .fold(1.0f64, |m, (u, v)| m.max(u.abs()).max(v.abs()))
                .min(10.0)
                * 1.1;
            let b = BoxDomain::cube(-extent, extent, 2).map_err(|e| CliError::Runtime(e.into()))?;
            let grid = landscape(game.as_ref(), &b, 81, &Measure::MinimaxValue).map_err(|e| CliError::Runtime(e.into()))?;
            heatmap(&grid, &format!("{} on {}", cfg.algorithm, game.name()), Some(&path))
        } else {
            let ts: Vec<f64> = tr.records.iter().map(|r| r.t as f64).collect();
            let dist: Vec<f64> = tr.records.iter().map(|r| r.point.distance(&opts.targets[0])).collect();
            line_chart(
                &format!("{} on {}", cfg.algorithm, game.name()),
                "step",
                "distance to target",
                &[LineSeries::new(cfg.algorithm.to_string(), ts, dist)],
                Axes { log_x: false, log_y: true },
            )
        };
        sink.write(".svg", &svg)?;
    }
    match failure {
        Some(err) => Err(CliError::Runtime(anyhow!(err).context("trajectory aborted"))),
        None => Ok(sink.written),
    }
}

pub fn stability(global: &GlobalArgs, a: &StabilityArgs) -> Result<Written, CliError> {
    let game = game_arg(&a.alg.game)?;
    let cfg = optimizer_config(&a.alg)?;
    let point = point_arg(&a.point, game.as_ref(), "point")?;
    let report = algorithm_stability(game.as_ref(), &cfg, &point).map_err(|e| CliError::Runtime(e.into()))?;
    let mut sink = Sink::new(global, "stability")?;
    let mut value = serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.into()))?;
    value["game"] = json!(game.name());
    value["algorithm"] = json!(a.alg.alg);
    value["eta"] = json!(a.alg.eta);
    sink.json(".json", &value)?;
    Ok(sink.written)
}

fn parse_box(s: &str) -> Result<BoxDomain, CliError> {
    let xs = parse_list(s).map_err(|e| CliError::Usage(format!("--box: {e}")))?;
    let b = match xs.as_slice() {
        [lo, hi] => BoxDomain::cube(*lo, *hi, 2),
        [ulo, uhi, vlo, vhi] => BoxDomain::new(vec![*ulo, *vlo], vec![*uhi, *vhi]),
        _ => return Err(CliError::Usage("--box takes lo,hi or ulo,uhi,vlo,vhi".into())),
    };
    b.map_err(|e| CliError::Usage(format!("--box: {e}")))
}

fn landscape_svg(grid: &LandscapeGrid, title: &str) -> String {
    heatmap(grid, title, None)
}

pub fn landscape_cmd(global: &GlobalArgs, a: &LandscapeArgs) -> Result<Written, CliError> {
    let game = game_arg(&a.game)?;
    let bounds = parse_box(&a.bounds)?;
    let measure = match a.measure {
        MeasureArg::MinimaxValue => Measure::MinimaxValue,
        MeasureArg::DgExact => Measure::DgExact,
        MeasureArg::DgApprox => {
            let mode = match a.mode {
                ModeArg::Envelope => GradMode::Envelope,
                ModeArg::Unrolled => GradMode::Unrolled,
            };
            Measure::DgApprox(DgConfig::new(a.k, a.gamma, mode))
        }
    };
    let grid = landscape(game.as_ref(), &bounds, a.res, &measure).map_err(|e| match e {
        Error::DimensionMismatch { .. } | Error::InvalidParameter(_) => usage(e),
        other => CliError::Runtime(other.into()),
    })?;
    let mut sink = Sink::new(global, "landscape")?;
    sink.write(".csv", &grid.to_csv())?;
    let mut meta = serde_json::to_value(grid.meta()).map_err(|e| CliError::Runtime(e.into()))?;
    meta["game"] = json!(game.name());
    if let Some((u, v, x)) = grid.argmin() {
        meta["argmin"] = json!({ "u": u, "v": v, "value": x });
    }
    sink.json(".json", &meta)?;
    if !global.no_plot {
        sink.write(".svg", &landscape_svg(&grid, &format!("{} of {}", grid.measure, game.name())))?;
    }
    Ok(sink.written)
}

pub fn rate(global: &GlobalArgs, a: &RateArgs) -> Result<Written, CliError> {
    let problem = make_realizable_quadratic(a.dim, a.family, global.seed).map_err(spec_error)?;
    let ts = default_horizons(a.t_max);
    if ts.is_empty() {
        return Err(CliError::Usage("--Tmax must be at least 100".into()));
    }
    let ada = run_adagrad_rate(&problem, &ts, global.seed, a.repeats, None).map_err(spec_error)?;
    let sgd = run_sgd_baseline(&problem, &ts, global.seed, a.repeats, None).map_err(spec_error)?;
    let mut sink = Sink::new(global, "rate")?;
    sink.write(".csv", &ada.to_csv())?;
    sink.write(".sgd.csv", &sgd.to_csv())?;
    let mut summary = serde_json::to_value(ada.summary()).map_err(|e| CliError::Runtime(e.into()))?;
    summary["sgd"] = serde_json::to_value(sgd.summary()).map_err(|e| CliError::Runtime(e.into()))?;
    summary["adagrad_median_final_error"] = json!(ada.median_final_error());
    summary["sgd_median_final_error"] = json!(sgd.median_final_error());
    summary["seed"] = json!(global.seed);
    sink.json(".json", &summary)?;
    if !global.no_plot {
        let xs: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
        let bound: Vec<f64> = ts.iter().map(|&t| ada.bound(t)).collect();
        let svg = line_chart(
            "average-iterate error",
            "T",
            "error",
            &[
                LineSeries::new("AdaGrad", xs.clone(), ada.error_mean.clone()),
                LineSeries::new("SGD D/sqrt(t)", xs.clone(), sgd.error_mean.clone()),
                LineSeries::new("4LD^2/T", xs, bound),
            ],
            Axes { log_x: true, log_y: true },
        );
        sink.write(".svg", &svg)?;
    }
    Ok(sink.written)
}

pub fn mog(global: &GlobalArgs, a: &MogArgs) -> Result<Written, CliError> {
    let algorithm: MogAlgorithm = a.alg.parse().map_err(spec_error)?;
    let cfg = MogConfig {
        iterations: a.iterations,
        lr_g: a.lr_g,
        lr_d: a.lr_d,
        co_gamma: a.co_gamma,
        dg_k: a.k,
        log_interval: a.log_interval,
        ..MogConfig::new(algorithm, global.seed)
    };
    let run = train_mog(&cfg).map_err(spec_error)?;
    let mut sink = Sink::new(global, "mog")?;
    sink.write(".log.csv", &run.log_csv())?;
    sink.write(".samples.csv", &run.samples_csv())?;
    sink.write(".hist.csv", &run.histogram_csv())?;
    let last = run.log.last().expect("initial row is always logged");
    let summary = json!({
        "algorithm": algorithm.to_string(),
        "seed": global.seed,
        "iterations": last.iter,
        "status": match run.status { MogStatus::Completed => "completed", MogStatus::Diverged => "diverged" },
        "mode_frac": last.mode_frac,
        "dg_metric_initial": run.log[0].dg_metric,
        "dg_metric_final": last.dg_metric,
        "disc_real_median": last.disc_real_median,
        "disc_fake_median": last.disc_fake_median,
    });
    sink.json(".json", &summary)?;
    if !global.no_plot {
        sink.write(".svg", &mog_svg(&run.log_csv())?)?;
    }
    Ok(sink.written)
}

fn mog_svg(log_csv: &str) -> Result<String, CliError> {
    let table = read_table(log_csv.as_bytes())?;
    let x = table.column("iter")?;
    let series = ["dg_metric", "mode_frac_m4", "mode_frac_0", "mode_frac_4"]
        .iter()
        .map(|name| Ok(LineSeries::new(*name, x.clone(), table.column(name)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(line_chart("GAN training", "iteration", "value", &series, Axes::default()))
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let i = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("CSV has no column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn read_table(reader: impl std::io::Read) -> Result<Table, CliError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers: Vec<String> =
        rdr.headers().map_err(|e| CliError::Runtime(e.into()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Runtime(e.into()))?;
        rows.push(rec.iter().map(|x| x.parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok(Table { headers, rows })
}

fn svg_path_for(input: &Path, global: &GlobalArgs) -> PathBuf {
    match &global.out {
        Some(p) => {
            let mut s = p.clone().into_os_string();
            s.push(".svg");
            PathBuf::from(s)
        }
        None => input.with_extension("svg"),
    }
}

pub fn plot(global: &GlobalArgs, a: &PlotArgs) -> Result<Written, CliError> {
    let file = fs::File::open(&a.input)
        .with_context(|| format!("opening {}", a.input.display()))
        .map_err(CliError::Runtime)?;
    let table = read_table(file)?;
    let has = |cols: &[&str]| cols.iter().all(|c| table.headers.iter().any(|h| h == c));
    let title = a.input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let svg = if has(&["u", "v", "value"]) && table.headers.len() == 3 {
        let u = table.column("u")?;
        let v = table.column("v")?;
        let val = table.column("value")?;
        let res = (val.len() as f64).sqrt().round() as usize;
        if res < 2 || res * res != val.len() {
            bail_usage("landscape CSV is not a square grid")?;
        }
        let grid = LandscapeGrid {
            lower: [u[0], v[0]],
            upper: [u[res - 1], v[val.len() - 1]],
            resolution: res,
            measure: title.clone(),
            values: val.chunks(res).map(<[f64]>::to_vec).collect(),
        };
        heatmap(&grid, &title, None)
    } else if has(&["T", "error_mean", "bound_4LD2_over_T"]) {
        let t = table.column("T")?;
        line_chart(
            &title,
            "T",
            "error",
            &[
                LineSeries::new("error_mean", t.clone(), table.column("error_mean")?),
                LineSeries::new("4LD^2/T", t, table.column("bound_4LD2_over_T")?),
            ],
            Axes { log_x: true, log_y: true },
        )
    } else if has(&["iter", "dg_metric"]) {
        let csv_text = fs::read_to_string(&a.input).map_err(|e| CliError::Runtime(e.into()))?;
        mog_svg(&csv_text)?
    } else if has(&["t", "value", "grad_u_norm", "grad_v_norm"]) {
        let t = table.column("t")?;
        let gn: Vec<f64> = table
            .column("grad_u_norm")?
            .iter()
            .zip(table.column("grad_v_norm")?)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect();
        line_chart(&title, "step", "gradient norm", &[LineSeries::new("|grad|", t, gn)], Axes { log_x: false, log_y: true })
    } else {
        return Err(CliError::Usage(format!("unrecognized CSV layout in {}", a.input.display())));
    };
    let path = svg_path_for(&a.input, global);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.into()))?;
    }
    fs::write(&path, svg).map_err(|e| CliError::Runtime(e.into()))?;
    Ok(vec![path])
}

fn bail_usage(msg: &str) -> Result<(), CliError> {
    Err(CliError::Usage(msg.to_string()))
}
