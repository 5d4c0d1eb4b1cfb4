//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! data.n = 128
//! inn.beta = auto        # mean absolute error of the base network
//! inn.mask = last:3
//! eval.lambda_grid = 2, 4, 10
//! ```
//!
//! Unknown keys are rejected. A repeated key keeps its last value and
//! produces a warning.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::deconv::NoiseMode;
use crate::error::{Error, Result};
use crate::interval::LayerMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// Full-size reproduction: n = 512, m = 2000, 100 epochs per stage.
    Paper,
    /// Laptop/CI size: n = 128, m = 500, 30 epochs per stage.
    Desk,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::config("scale", format!("expected paper|desk, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub gamma: f64,
    pub jumps: (usize, usize),
    pub values: (f64, f64),
    pub noise: NoiseMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub kernel: usize,
    /// Output channels of each conv layer; the last must be 1.
    pub channels: Vec<usize>,
    /// `(conv layer index, p)`: dropout after that layer's ReLU.
    pub dropout: Vec<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beta {
    /// Mean absolute validation error of the base network.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta: Beta,
    pub batch: usize,
    pub mask: LayerMask,
    pub max_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbOutSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub lambda_grid: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub noise_grid: Vec<f64>,
    pub markov_slack: f64,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub base: BaseConfig,
    pub inn: InnConfig,
    pub mcdrop_samples: usize,
    pub probout: ProbOutSection,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Paper => Self::paper(),
            Scale::Desk => Self::desk(),
        }
    }

    /// Full-size settings for the 1D deconvolution study.
    pub fn paper() -> Self {
        Self {
            data: DataConfig {
                n: 512,
                m: 2000,
                sigma: 0.0,
                gamma: 8.0,
                jumps: (2, 10),
                values: (0.0, 1.0),
                noise: NoiseMode::InputsAndTargets,
            },
            base: BaseConfig {
                epochs: 100,
                lr: 1e-3,
                batch: 256,
                kernel: 5,
                channels: vec![16, 32, 48, 64, 96, 128, 256, 64, 16, 1],
                dropout: vec![(3, 0.2), (6, 0.5), (7, 0.5)],
            },
            inn: InnConfig {
                epochs: 100,
                lr: 1e-5,
                beta: Beta::Fixed(2e-3),
                batch: 256,
                mask: LayerMask::All,
                max_width: 1e3,
            },
            mcdrop_samples: 64,
            probout: ProbOutSection {
                epochs: 100,
                lr: 1e-4,
                batch: 256,
            },
            eval: EvalConfig::default(),
            seed: 0,
        }
    }

    /// Reduced size that trains in minutes on one core.
    pub fn desk() -> Self {
        let mut c = Self::paper();
        c.data.n = 128;
        c.data.m = 500;
        c.base.epochs = 30;
        c.base.batch = 16;
        c.base.channels = vec![8, 16, 16, 24, 24, 32, 32, 16, 8, 1];
        c.inn.epochs = 30;
        c.inn.lr = 1e-3;
        c.inn.batch = 16;
        c.inn.mask = LayerMask::Last(3);
        c.mcdrop_samples = 16;
        c.probout.epochs = 30;
        c.probout.batch = 16;
        c
    }

    /// Canonical text form: every key once, fixed order. Parsing it yields
    /// the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of [`RunConfig::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        vec![
            ("data.n", self.data.n.to_string()),
            ("data.m", self.data.m.to_string()),
            ("data.sigma", fmt_f64(self.data.sigma)),
            ("data.gamma", fmt_f64(self.data.gamma)),
            ("data.jumps", format!("{},{}", self.data.jumps.0, self.data.jumps.1)),
            (
                "data.values",
                format!("{},{}", fmt_f64(self.data.values.0), fmt_f64(self.data.values.1)),
            ),
            (
                "data.noise",
                match self.data.noise {
                    NoiseMode::Inputs => "inputs",
                    NoiseMode::InputsAndTargets => "both",
                }
                .to_string(),
            ),
            ("base.epochs", self.base.epochs.to_string()),
            ("base.lr", fmt_f64(self.base.lr)),
            ("base.batch", self.base.batch.to_string()),
            ("base.kernel", self.base.kernel.to_string()),
            (
                "base.arch",
                self.base
                    .channels
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "base.dropout",
                self.base
                    .dropout
                    .iter()
                    .map(|(i, p)| format!("{i}:{}", fmt_f64(*p)))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("inn.epochs", self.inn.epochs.to_string()),
            ("inn.lr", fmt_f64(self.inn.lr)),
            (
                "inn.beta",
                match self.inn.beta {
                    Beta::Auto => "auto".to_string(),
                    Beta::Fixed(b) => fmt_f64(b),
                },
            ),
            ("inn.batch", self.inn.batch.to_string()),
            (
                "inn.mask",
                match &self.inn.mask {
                    LayerMask::All => "all".to_string(),
                    LayerMask::Last(k) => format!("last:{k}"),
                    LayerMask::Explicit(v) => v
                        .iter()
                        .map(|&b| if b { "1" } else { "0" })
                        .collect::<Vec<_>>()
                        .join(","),
                },
            ),
            ("inn.max_width", fmt_f64(self.inn.max_width)),
            ("mcdrop.T", self.mcdrop_samples.to_string()),
            ("probout.epochs", self.probout.epochs.to_string()),
            ("probout.lr", fmt_f64(self.probout.lr)),
            ("probout.batch", self.probout.batch.to_string()),
            ("eval.lambda_grid", list(&self.eval.lambda_grid)),
            ("eval.thresholds", list(&self.eval.thresholds)),
            ("eval.noise_grid", list(&self.eval.noise_grid)),
            ("eval.markov_slack", fmt_f64(self.eval.markov_slack)),
            (
                "eval.alpha",
                self.eval.alpha.map_or_else(|| "none".to_string(), fmt_f64),
            ),
            ("seed", self.seed.to_string()),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "data.n" => self.data.n = parse_num(key, v)?,
            "data.m" => self.data.m = parse_num(key, v)?,
            "data.sigma" => self.data.sigma = parse_num(key, v)?,
            "data.gamma" => self.data.gamma = parse_num(key, v)?,
            "data.jumps" => self.data.jumps = parse_pair(key, v)?,
            "data.values" => self.data.values = parse_pair(key, v)?,
            "data.noise" => {
                self.data.noise = match v {
                    "inputs" => NoiseMode::Inputs,
                    "both" => NoiseMode::InputsAndTargets,
                    _ => return Err(Error::config(key, format!("expected inputs|both, got `{v}`"))),
                }
            }
            "base.epochs" => self.base.epochs = parse_num(key, v)?,
            "base.lr" => self.base.lr = parse_num(key, v)?,
            "base.batch" => self.base.batch = parse_num(key, v)?,
            "base.kernel" => self.base.kernel = parse_num(key, v)?,
            "base.arch" => self.base.channels = parse_list(key, v)?,
            "base.dropout" => {
                self.base.dropout = if v.is_empty() || v == "none" {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|item| {
                            let (i, p) = item.trim().split_once(':').ok_or_else(|| {
                                Error::config(key, format!("expected layer:p, got `{item}`"))
                            })?;
                            Ok((parse_num(key, i)?, parse_num(key, p)?))
                        })
                        .collect::<Result<_>>()?
                }
            }
            "inn.epochs" => self.inn.epochs = parse_num(key, v)?,
            "inn.lr" => self.inn.lr = parse_num(key, v)?,
            "inn.beta" => {
                self.inn.beta = if v == "auto" {
                    Beta::Auto
                } else {
                    Beta::Fixed(parse_num(key, v)?)
                }
            }
            "inn.batch" => self.inn.batch = parse_num(key, v)?,
            "inn.mask" => {
                self.inn.mask = if v == "all" {
                    LayerMask::All
                } else if let Some(k) = v.strip_prefix("last:") {
                    LayerMask::Last(parse_num(key, k)?)
                } else {
                    let flags: Vec<u8> = parse_list(key, v)?;
                    if flags.iter().any(|&f| f > 1) {
                        return Err(Error::config(key, "mask flags must be 0 or 1"));
                    }
                    LayerMask::Explicit(flags.into_iter().map(|f| f == 1).collect())
                }
            }
            "inn.max_width" => self.inn.max_width = parse_num(key, v)?,
            "mcdrop.T" => self.mcdrop_samples = parse_num(key, v)?,
            "probout.epochs" => self.probout.epochs = parse_num(key, v)?,
            "probout.lr" => self.probout.lr = parse_num(key, v)?,
            "probout.batch" => self.probout.batch = parse_num(key, v)?,
            "eval.lambda_grid" => self.eval.lambda_grid = parse_list(key, v)?,
            "eval.thresholds" => self.eval.thresholds = parse_list(key, v)?,
            "eval.noise_grid" => self.eval.noise_grid = parse_list(key, v)?,
            "eval.markov_slack" => self.eval.markov_slack = parse_num(key, v)?,
            "eval.alpha" => {
                self.eval.alpha = if v == "none" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "seed" => self.seed = parse_num(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Range checks across all fields.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        check(d.n >= 2, "data.n", "must be at least 2")?;
        check(d.m >= 10, "data.m", "must be at least 10 so every split is non-empty")?;
        check(d.sigma >= 0.0 && d.sigma.is_finite(), "data.sigma", "must be >= 0")?;
        check(d.gamma >= 0.0 && d.gamma.is_finite(), "data.gamma", "must be >= 0")?;
        check(
            1 <= d.jumps.0 && d.jumps.0 <= d.jumps.1 && d.jumps.1 < d.n,
            "data.jumps",
            "need 1 <= min <= max < n",
        )?;
        check(d.values.0 <= d.values.1, "data.values", "need lo <= hi")?;

        let b = &self.base;
        check(b.batch >= 1, "base.batch", "must be positive")?;
        check(b.lr > 0.0 && b.lr.is_finite(), "base.lr", "must be > 0")?;
        check(b.kernel % 2 == 1, "base.kernel", "must be odd")?;
        check(
            !b.channels.is_empty() && b.channels.iter().all(|&c| c > 0),
            "base.arch",
            "needs at least one positive channel count",
        )?;
        check(b.channels.last() == Some(&1), "base.arch", "final layer must have 1 channel")?;
        for &(i, p) in &b.dropout {
            check(
                i + 1 < b.channels.len(),
                "base.dropout",
                "dropout must follow a hidden conv layer",
            )?;
            check((0.0..1.0).contains(&p), "base.dropout", "p must be in [0, 1)")?;
        }

        let i = &self.inn;
        check(i.lr > 0.0 && i.lr.is_finite(), "inn.lr", "must be > 0")?;
        check(i.batch >= 1, "inn.batch", "must be positive")?;
        if let Beta::Fixed(beta) = i.beta {
            check(beta > 0.0 && beta.is_finite(), "inn.beta", "must be > 0")?;
        }
        check(i.max_width > 0.0, "inn.max_width", "must be > 0")?;
        if let LayerMask::Explicit(v) = &i.mask {
            check(v.len() == b.channels.len(), "inn.mask", "need one flag per conv layer")?;
        }

        check(self.mcdrop_samples >= 2, "mcdrop.T", "must be at least 2")?;
        let p = &self.probout;
        check(p.lr > 0.0 && p.lr.is_finite(), "probout.lr", "must be > 0")?;
        check(p.batch >= 1, "probout.batch", "must be positive")?;

        let e = &self.eval;
        check(
            !e.lambda_grid.is_empty() && e.lambda_grid.iter().all(|&l| l > 0.0),
            "eval.lambda_grid",
            "values must be > 0",
        )?;
        check(
            !e.thresholds.is_empty() && e.thresholds.iter().all(|&t| t >= 0.0),
            "eval.thresholds",
            "values must be >= 0",
        )?;
        check(
            !e.noise_grid.is_empty() && e.noise_grid.iter().all(|&s| s >= 0.0),
            "eval.noise_grid",
            "values must be >= 0",
        )?;
        check(e.markov_slack >= 0.0, "eval.markov_slack", "must be >= 0")?;
        if let Some(a) = e.alpha {
            check(a > 0.0 && a <= 1.0, "eval.alpha", "must be in (0, 1]")?;
        }
        Ok(())
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lambda_grid: vec![2.0, 4.0, 10.0],
            thresholds: vec![1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0],
            noise_grid: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05],
            markov_slack: 0.05,
            alpha: Some(0.5),
        }
    }
}

fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("malformed value `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn parse_pair<T: FromStr + Copy>(key: &str, v: &str) -> Result<(T, T)> {
    match parse_list::<T>(key, v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::config(key, format!("expected two values, got `{v}`"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// Parses `text` over the full-size defaults.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    parse_config_over(text, RunConfig::paper())
}

/// Parses `text` as overrides of `defaults`, then validates the result.
pub fn parse_config_over(text: &str, defaults: RunConfig) -> Result<ParsedConfig> {
    let mut config = defaults;
    let mut seen = HashSet::new();
    let mut warnings = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            let msg = format!("line {}: duplicate key `{key}`, last value wins", lineno + 1);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(ParsedConfig { config, warnings })
}
