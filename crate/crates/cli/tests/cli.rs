//! End-to-end runs of the `dualgap` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualgap_cli::config::RunConfig;
use proptest::prelude::*;
use serde_json::Value;

fn dualgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualgap")).args(args).output().expect("binary runs")
}

fn out_prefix(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn assert_svg(path: impl AsRef<Path>) {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

fn assert_keys(v: &Value, keys: &[&str]) {
    for k in keys {
        assert!(v.get(k).is_some(), "missing key `{k}` in {v}");
    }
}

fn path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}

#[test]
fn usage_errors_exit_with_two() {
    let missing = dualgap(&["traj", "--alg", "gda"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--game"));

    let game = dualgap(&["traj", "--game", "tetris", "--alg", "gda", "--no-plot"]);
    assert_eq!(game.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&game.stderr).contains("tetris"));

    let alg = dualgap(&["stability", "--game", "f1", "--alg", "adam"]);
    assert_eq!(alg.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&alg.stderr).contains("adam"));

    let param = dualgap(&["traj", "--game", "bilinear:c=0", "--alg", "gda"]);
    assert_eq!(param.status.code(), Some(2));

    assert_eq!(dualgap(&["fly"]).status.code(), Some(2));
}

#[test]
fn downstream_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_prefix(dir.path(), "s");
    // (1, 1) is not a fixed point of GDA on f1.
    let r = dualgap(&["stability", "--game", "f1", "--alg", "gda", "--point", "1,1", "--out", &out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("fixed point"));
}

#[test]
fn traj_classifies_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let dg = out_prefix(dir.path(), "dg");
    let r = dualgap(&[
        "traj", "--game", "f1", "--alg", "dg", "--eta", "0.05", "--k", "10", "--init", "0.5,0.5", "--steps", "2000",
        "--seed", "1", "--out", &dg,
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary = json(path(&dg, ".json"));
    assert_keys(&summary, &["algorithm", "game", "eta", "steps", "classification", "final_point", "final_distance"]);
    assert_eq!(summary["classification"], "converged");
    assert_eq!(header(path(&dg, ".csv")), "t,u,v,value,grad_u_norm,grad_v_norm,dg");
    assert_svg(path(&dg, ".svg"));

    let gda = out_prefix(dir.path(), "gda");
    let r = dualgap(&["traj", "--game", "f1", "--alg", "gda", "--steps", "2000", "--seed", "1", "--out", &gda]);
    assert!(r.status.success());
    assert_eq!(json(path(&gda, ".json"))["classification"], "diverged");
}

#[test]
fn stability_reports_bilinear_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_prefix(dir.path(), "s");
    let r = dualgap(&["stability", "--game", "bilinear:c=3", "--alg", "gda", "--eta", "0.1", "--point", "0,0", "--out", &out]);
    assert!(r.status.success());
    let report = json(path(&out, ".json"));
    assert_keys(&report, &["fixed_point", "jacobian", "eigenvalues", "spectral_radius", "classification"]);
    let mut ims: Vec<f64> = report["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            assert!((e["re"].as_f64().unwrap() - 1.0).abs() < 1e-6);
            e["im"].as_f64().unwrap()
        })
        .collect();
    ims.sort_by(f64::total_cmp);
    assert!((ims[0] + 0.3).abs() < 1e-6 && (ims[1] - 0.3).abs() < 1e-6);
}

#[test]
fn landscape_marks_the_center() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_prefix(dir.path(), "l");
    let r = dualgap(&["landscape", "--game", "bilinear:c=3", "--box=-1,1", "--res", "101", "--measure", "dg_exact", "--out", &out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let meta = json(path(&out, ".json"));
    assert_keys(&meta, &["box", "resolution", "measure"]);
    assert_eq!(meta["argmin"]["u"], 0.0);
    assert_eq!(meta["argmin"]["v"], 0.0);
    assert_eq!(header(path(&out, ".csv")), "u,v,value");
    assert_svg(path(&out, ".svg"));
    let svg = fs::read_to_string(path(&out, ".svg")).unwrap();
    assert!(svg.contains("#2166ac") && svg.contains("#b2182b"));
    assert!(svg.contains("argmin"));
}

#[test]
fn rate_writes_summary_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_prefix(dir.path(), "r");
    let r = dualgap(&["rate", "--dim", "4", "--family", "5", "--Tmax", "1000", "--repeats", "3", "--seed", "7", "--out", &out]);
    assert!(r.status.success());
    let summary = json(path(&out, ".json"));
    assert_keys(&summary, &["slope", "L", "D", "passes_bound"]);
    assert_keys(&summary["sgd"], &["slope", "L", "D", "passes_bound"]);
    assert_eq!(header(path(&out, ".csv")), "T,error_mean,error_std,bound_4LD2_over_T");
    assert_eq!(header(path(&out, ".sgd.csv")), "T,error_mean,error_std,bound_4LD2_over_T");
    assert_svg(path(&out, ".svg"));
}

#[test]
fn mog_short_run_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_prefix(dir.path(), "m");
    let r = dualgap(&["mog", "--alg", "gda", "--iterations", "2", "--log-interval", "1", "--k", "1", "--seed", "2", "--out", &out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        header(path(&out, ".log.csv")),
        "iter,value,grad_u_norm,grad_v_norm,dg_metric,mode_frac_m4,mode_frac_0,mode_frac_4,disc_real_median,disc_fake_median"
    );
    assert_eq!(header(path(&out, ".hist.csv")), "bin_center,count");
    assert!(!header(path(&out, ".samples.csv")).is_empty());
    assert_eq!(fs::read_to_string(path(&out, ".log.csv")).unwrap().lines().count(), 4);
    assert_keys(&json(path(&out, ".json")), &["algorithm", "status", "mode_frac"]);
    assert_svg(path(&out, ".svg"));
}

#[test]
fn plot_rerenders_every_csv_kind() {
    let dir = tempfile::tempdir().unwrap();
    let t = out_prefix(dir.path(), "t");
    let l = out_prefix(dir.path(), "l");
    let r = out_prefix(dir.path(), "r");
    assert!(dualgap(&["traj", "--game", "f2", "--alg", "eg", "--steps", "50", "--no-plot", "--out", &t]).status.success());
    assert!(dualgap(&["landscape", "--game", "f3", "--res", "11", "--measure", "minimax-value", "--no-plot", "--out", &l]).status.success());
    assert!(dualgap(&["rate", "--dim", "2", "--family", "2", "--Tmax", "316", "--repeats", "1", "--no-plot", "--out", &r]).status.success());
    for prefix in [&t, &l, &r] {
        assert!(!path(prefix, ".svg").exists(), "--no-plot wrote an SVG");
        let rendered = out_prefix(dir.path(), "plotted");
        let input = format!("{prefix}.csv");
        let res = dualgap(&["plot", "--input", &input, "--out", &rendered]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        assert_svg(path(&rendered, ".svg"));
    }
    let bogus = dir.path().join("bogus.csv");
    fs::write(&bogus, "a,b\n1,2\n").unwrap();
    assert_eq!(dualgap(&["plot", "--input", bogus.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = out_prefix(dir.path(), "c");
    fs::write(&cfg, format!("command=traj\ngame=f2\nalg=gda\nsteps=40\nplot=false\nout={out}\n")).unwrap();
    let r = dualgap(&["--config", cfg.to_str().unwrap(), "--steps", "25"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary = json(path(&out, ".json"));
    assert_eq!(summary["game"], "f2");
    assert_eq!(summary["steps"], 25);
    assert!(!path(&out, ".svg").exists());

    fs::write(&cfg, "steps=ten\n").unwrap();
    assert_eq!(dualgap(&["traj", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let runs: Vec<Vec<(String, Vec<u8>)>> = ["1", "4"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let l = out_prefix(dir.path(), "l");
            let r = out_prefix(dir.path(), "r");
            let base = ["--threads", threads, "--seed", "5"];
            let land = [&base[..], &["landscape", "--game", "motivation", "--box=-2,2", "--res", "41", "--out", &l]].concat();
            let rate = [&base[..], &["rate", "--dim", "3", "--family", "4", "--Tmax", "1000", "--repeats", "4", "--out", &r]].concat();
            assert!(dualgap(&land).status.success());
            assert!(dualgap(&rate).status.success());
            outputs(dir.path())
        })
        .collect();
    assert_eq!(runs[0].len(), runs[1].len());
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        assert_eq!(a.0, b.0);
        assert!(a.1 == b.1, "{} differs across thread counts", a.0);
    }
}

fn config_strategy() -> impl Strategy<Value = RunConfig> {
    let word = "[a-z][a-z0-9_:.=,-]{0,12}";
    (
        prop::option::of(prop::sample::select(vec!["traj", "stability", "landscape", "rate", "mog", "plot"])),
        prop::option::of(word),
        prop::option::of(word),
        prop::option::of(prop::collection::vec(-1e6..1e6f64, 1..5)),
        prop::option::of(0usize..100_000),
        prop::option::of(any::<u64>()),
        prop::option::of("[a-z/]{1,10}"),
        prop::option::of(any::<bool>()),
        prop::collection::btree_map("x[a-z_]{0,6}", "[a-z0-9.,-]{0,8}", 0..4),
    )
        .prop_map(|(sub, game, alg, init, steps, seed, out, plot, extra)| RunConfig {
            subcommand: sub.map(String::from),
            game,
            alg,
            init,
            steps,
            seed,
            out,
            plot,
            extra,
        })
}

proptest! {
    #[test]
    fn run_config_round_trips(cfg in config_strategy()) {
        let text = cfg.to_string();
        prop_assert_eq!(text.parse::<RunConfig>().unwrap(), cfg);
    }
}
