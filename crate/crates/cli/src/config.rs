//! Flat `key=value` run configuration.
//!
//! A config file holds one `key=value` per line (blank lines and `#`
//! comments are ignored). Keys are flag names without the leading dashes;
//! `command` names the subcommand. The file is spliced into the argument
//! list ahead of the command-line flags, so flags given explicitly win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::str::FromStr;

use crate::args::SUBCOMMANDS;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub subcommand: Option<String>,
    pub game: Option<String>,
    pub alg: Option<String>,
    pub init: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub plot: Option<bool>,
    /// Any other flag, by name.
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
        .collect()
}

fn join_list(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (n, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim().to_string());
            let bad = |what: &str| ConfigError(format!("line {}: bad {what} `{value}`", n + 1));
            match key {
                "command" => {
                    if !SUBCOMMANDS.contains(&value.as_str()) {
                        return Err(bad("command"));
                    }
                    cfg.subcommand = Some(value)
                }
                "game" => cfg.game = Some(value),
                "alg" => cfg.alg = Some(value),
                "init" => cfg.init = Some(parse_list(&value).map_err(|_| bad("init"))?),
                "steps" => cfg.steps = Some(value.parse().map_err(|_| bad("steps"))?),
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "out" => cfg.out = Some(value),
                "plot" => cfg.plot = Some(value.parse().map_err(|_| bad("plot"))?),
                "" => return Err(ConfigError(format!("line {}: empty key", n + 1))),
                _ => {
                    cfg.extra.insert(key.to_string(), value);
                }
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(c) = &self.subcommand {
            writeln!(f, "command={c}")?;
        }
        if let Some(g) = &self.game {
            writeln!(f, "game={g}")?;
        }
        if let Some(a) = &self.alg {
            writeln!(f, "alg={a}")?;
        }
        if let Some(i) = &self.init {
            writeln!(f, "init={}", join_list(i))?;
        }
        if let Some(s) = self.steps {
            writeln!(f, "steps={s}")?;
        }
        if let Some(s) = self.seed {
            writeln!(f, "seed={s}")?;
        }
        if let Some(o) = &self.out {
            writeln!(f, "out={o}")?;
        }
        if let Some(p) = self.plot {
            writeln!(f, "plot={p}")?;
        }
        for (k, v) in &self.extra {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl RunConfig {
    /// Flags equivalent to this config, excluding the subcommand.
    pub fn to_args(&self) -> Vec<String> {
        let mut args = Vec::new();
        let mut push = |k: &str, v: String| {
            args.push(format!("--{k}={v}"));
        };
        if let Some(g) = &self.game {
            push("game", g.clone());
        }
        if let Some(a) = &self.alg {
            push("alg", a.clone());
        }
        if let Some(i) = &self.init {
            push("init", join_list(i));
        }
        if let Some(s) = self.steps {
            push("steps", s.to_string());
        }
        if let Some(s) = self.seed {
            push("seed", s.to_string());
        }
        if let Some(o) = &self.out {
            push("out", o.clone());
        }
        for (k, v) in &self.extra {
            push(k, v.clone());
        }
        if self.plot == Some(false) {
            args.push("--no-plot".into());
        }
        args
    }
}

/// Insert the config's flags right after the subcommand token of `argv`
/// (or add the config's subcommand when none is given), so that later,
/// explicit flags override them.
pub fn splice_config(argv: &[OsString], cfg: &RunConfig) -> Vec<OsString> {
    let file_args: Vec<OsString> = cfg.to_args().into_iter().map(OsString::from).collect();
    let pos = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
        .map(|(i, _)| i);
    let mut out = Vec::with_capacity(argv.len() + file_args.len() + 1);
    match pos {
        Some(i) => {
            // Global flags are accepted after the subcommand, so every
            // explicit token can follow the file's flags.
            out.push(argv[0].clone());
            out.push(argv[i].clone());
            out.extend(file_args);
            out.extend_from_slice(&argv[1..i]);
            out.extend_from_slice(&argv[i + 1..]);
        }
        None => {
            out.push(argv.first().cloned().unwrap_or_else(|| "dualgap".into()));
            if let Some(c) = &cfg.subcommand {
                out.push(c.into());
            }
            out.extend(file_args);
            out.extend_from_slice(argv.get(1..).unwrap_or(&[]));
        }
    }
    out
}
