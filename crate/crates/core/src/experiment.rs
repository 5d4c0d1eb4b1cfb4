//! The 1D deconvolution study: data, training of every model, evaluation,
//! and the tables and plots written by the CLI.

use crate::baselines::{mcdrop_predict, train_probout, McDropConfig, ProbOutConfig, ProbOutNetwork};
use crate::config::{Beta, RunConfig};
use crate::data::Samples;
use crate::deconv::{generate, DeconvDataset, OperatorSpec, SignalSpec, Split};
use crate::error::{Error, Result};
use crate::interval::{beta_from_mae, train_inn, InnStep, InnTrainConfig, IntervalNetwork};
use crate::io::{Cell, LinePlot, Series, Table};
use crate::linear::affine_evaluations;
use crate::metrics::{
    coverage, direction_sweep, markov_bound_check, mean_std_skipping, pwcc_per_sample,
    DirectionPoint, MarkovRow,
};
use crate::nn::{LayerSpec, Network};
use crate::rng::{permutation, stream_rng, subseed};
use crate::tensor::{mse, Tensor};
use crate::train::{train_mse, LossHistory, TrainConfig};

const INIT_TAG: u64 = 0xBA5E;
const INN_TAG: u64 = 0x177;
const PROBOUT_TAG: u64 = 0x9B0;
const MCDROP_TAG: u64 = 0x3CD;
const SHUFFLE_TAG: u64 = 0x5AF;

/// Conv stack over a length-`n` single-channel signal: conv, ReLU and
/// optional dropout per hidden layer, a plain conv at the end.
pub fn deconv_layers(cfg: &RunConfig) -> Vec<LayerSpec> {
    let b = &cfg.base;
    let n = cfg.data.n;
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for (i, &out_ch) in b.channels.iter().enumerate() {
        layers.push(LayerSpec::Conv1d {
            in_channels: in_ch,
            out_channels: out_ch,
            kernel: b.kernel,
            len: n,
        });
        if i + 1 < b.channels.len() {
            layers.push(LayerSpec::Relu);
            if let Some(&(_, p)) = b.dropout.iter().find(|d| d.0 == i) {
                layers.push(LayerSpec::Dropout { p });
            }
        }
        in_ch = out_ch;
    }
    layers
}

/// Dataset for `cfg` with the noise level replaced by `sigma`.
pub fn dataset_with_sigma(cfg: &RunConfig, sigma: f64) -> Result<DeconvDataset> {
    let d = &cfg.data;
    generate(
        &OperatorSpec { n: d.n, gamma: d.gamma },
        &SignalSpec { n: d.n, jumps: d.jumps, values: d.values },
        d.m,
        sigma,
        d.noise,
        cfg.seed,
    )
}

pub fn dataset(cfg: &RunConfig) -> Result<DeconvDataset> {
    dataset_with_sigma(cfg, cfg.data.sigma)
}

pub fn init_base(cfg: &RunConfig, seed: u64) -> Result<Network> {
    Network::init(
        cfg.data.n,
        deconv_layers(cfg),
        &mut stream_rng(subseed(seed, INIT_TAG), 0),
    )
}

pub fn train_base(cfg: &RunConfig, ds: &DeconvDataset, seed: u64) -> Result<(Network, LossHistory)> {
    let mut net = init_base(cfg, seed)?;
    let tc = TrainConfig {
        epochs: cfg.base.epochs,
        lr: cfg.base.lr,
        batch: cfg.base.batch,
        seed,
    };
    let history = train_mse(&mut net, &ds.split(Split::Train)?, &tc)?;
    Ok((net, history))
}

/// Fixed β, or the base network's mean absolute error on the validation
/// split.
pub fn resolve_beta(cfg: &RunConfig, base: &Network, ds: &DeconvDataset) -> Result<f64> {
    match cfg.inn.beta {
        Beta::Fixed(b) => Ok(b),
        Beta::Auto => {
            let b = beta_from_mae(base, &ds.split(Split::Val)?)?;
            if b > 0.0 {
                Ok(b)
            } else {
                Err(Error::InvalidArgument(
                    "automatic beta is zero: the base network fits the validation split exactly"
                        .into(),
                ))
            }
        }
    }
}

pub fn inn_train_config(cfg: &RunConfig, beta: f64, seed: u64) -> InnTrainConfig {
    InnTrainConfig {
        epochs: cfg.inn.epochs,
        lr: cfg.inn.lr,
        beta,
        batch: cfg.inn.batch,
        mask: cfg.inn.mask.clone(),
        seed: subseed(seed, INN_TAG),
        max_mean_width: cfg.inn.max_width,
    }
}

pub fn probout_train_config(cfg: &RunConfig, seed: u64) -> ProbOutConfig {
    ProbOutConfig {
        epochs: cfg.probout.epochs,
        lr: cfg.probout.lr,
        batch: cfg.probout.batch,
        seed: subseed(seed, PROBOUT_TAG),
    }
}

pub fn mcdrop_config(cfg: &RunConfig, seed: u64) -> McDropConfig {
    McDropConfig {
        samples: cfg.mcdrop_samples,
        seed: subseed(seed, MCDROP_TAG),
    }
}

/// Everything trained for one seed.
#[derive(Clone, Debug)]
pub struct Models {
    pub seed: u64,
    pub base: Network,
    pub base_history: LossHistory,
    pub beta: f64,
    pub inn: IntervalNetwork,
    pub probout: ProbOutNetwork,
}

pub type InnObserver<'a> = &'a mut dyn FnMut(&InnStep, &IntervalNetwork) -> Result<()>;

/// Base network, then intervals and ProbOut head on top of it.
pub fn train_models(
    cfg: &RunConfig,
    ds: &DeconvDataset,
    seed: u64,
    observer: Option<InnObserver>,
) -> Result<Models> {
    let (base, base_history) = train_base(cfg, ds, seed)?;
    log::info!(
        "seed {seed}: base trained, final loss {:.3e}",
        base_history.last().copied().unwrap_or(f64::NAN)
    );
    let beta = resolve_beta(cfg, &base, ds)?;
    let train = ds.split(Split::Train)?;
    let inn = train_inn(&base, &train, &inn_train_config(cfg, beta, seed), observer)?;
    log::info!("seed {seed}: intervals trained with beta {beta:.3e}");
    let (probout, _) = train_probout(&base, &train, &probout_train_config(cfg, seed))?;
    Ok(Models {
        seed,
        base,
        base_history,
        beta,
        inn,
        probout,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Inn,
    McDrop,
    ProbOut,
    /// INN widths permuted within each sample.
    Shuffled,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Inn => "inn",
            Method::McDrop => "mcdrop",
            Method::ProbOut => "probout",
            Method::Shuffled => "shuffled",
        }
    }
}

/// Point prediction plus an uncertainty interval and score for each
/// component of a set of samples.
#[derive(Clone, Debug)]
pub struct MethodOutput {
    pub pred: Tensor,
    pub lower: Tensor,
    pub upper: Tensor,
    pub uncertainty: Tensor,
    /// Forward passes per query, measured by counting affine evaluations.
    pub passes: f64,
}

fn measured<T>(net: &Network, rows: usize, f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let before = affine_evaluations();
    let out = f()?;
    let evals = affine_evaluations() - before;
    Ok((out, evals as f64 / (rows * net.num_param_layers()) as f64))
}

pub fn inn_output(inn: &IntervalNetwork, x: &Tensor) -> Result<MethodOutput> {
    let pred = inn.base().forward(x)?;
    let (bx, passes) = measured(inn.base(), x.rows(), || inn.forward(x))?;
    let uncertainty = bx.width();
    Ok(MethodOutput {
        pred,
        lower: bx.lower,
        upper: bx.upper,
        uncertainty,
        passes,
    })
}

fn gaussian_output(mean: Tensor, std: Tensor, passes: f64) -> Result<MethodOutput> {
    Ok(MethodOutput {
        lower: mean.zip_map(&std, |m, s| m - s)?,
        upper: mean.zip_map(&std, |m, s| m + s)?,
        pred: mean,
        uncertainty: std,
        passes,
    })
}

pub fn mcdrop_output(base: &Network, x: &Tensor, cfg: &McDropConfig) -> Result<MethodOutput> {
    let (g, passes) = measured(base, x.rows(), || mcdrop_predict(base, x, cfg))?;
    gaussian_output(g.mean, g.std, passes)
}

pub fn probout_output(po: &ProbOutNetwork, x: &Tensor) -> Result<MethodOutput> {
    let (g, passes) = measured(po.network(), x.rows(), || po.predict_gaussian(x))?;
    gaussian_output(g.mean, g.std, passes)
}

/// INN output with each sample's widths randomly permuted across
/// components.
pub fn shuffled_output(inn: &MethodOutput, seed: u64) -> MethodOutput {
    let mut out = inn.clone();
    let s = subseed(seed, SHUFFLE_TAG);
    for r in 0..out.uncertainty.rows() {
        let src = inn.uncertainty.row(r);
        let perm = permutation(&mut stream_rng(s, r as u64), src.len());
        let dst = out.uncertainty.row_mut(r);
        for (d, &p) in dst.iter_mut().zip(&perm) {
            *d = src[p];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub test_mse: f64,
    pub pwcc: Vec<Option<f64>>,
    pub pwcc_mean: f64,
    pub pwcc_std: f64,
    pub pwcc_skipped: usize,
    /// Fraction of targets inside `[lower, upper]`; for the Gaussian
    /// baselines the interval is mean ± one standard deviation.
    pub coverage: f64,
    pub mean_uncertainty: f64,
    pub passes: f64,
}

fn method_report(method: Method, out: &MethodOutput, y: &Tensor) -> Result<MethodReport> {
    let pwcc = pwcc_per_sample(&out.pred, y, &out.uncertainty)?;
    let (pwcc_mean, pwcc_std, pwcc_skipped) = mean_std_skipping(&pwcc);
    Ok(MethodReport {
        method,
        test_mse: mse(&out.pred, y)?,
        pwcc_mean,
        pwcc_std,
        pwcc_skipped,
        pwcc,
        coverage: coverage(&out.lower, &out.upper, y, 0.0, 0.0)?,
        mean_uncertainty: out.uncertainty.mean(),
        passes: out.passes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub seed: u64,
    pub beta: f64,
    pub methods: Vec<MethodReport>,
    pub direction: Vec<DirectionPoint>,
    /// Enlarged-interval coverage on the training split (asserted).
    pub markov_train: Vec<MarkovRow>,
    /// The same on the test split (reported only).
    pub markov_test: Vec<MarkovRow>,
}

impl EvalReport {
    pub fn method(&self, m: Method) -> &MethodReport {
        self.methods.iter().find(|r| r.method == m).expect("every method is evaluated")
    }
}

/// Scores every method on the test split, plus the direction sweep and the
/// Markov checks for the intervals.
pub fn evaluate(cfg: &RunConfig, ds: &DeconvDataset, models: &Models) -> Result<EvalReport> {
    let test = ds.split(Split::Test)?;
    let train = ds.split(Split::Train)?;
    let y = &test.targets;
    let inn = inn_output(&models.inn, &test.inputs)?;
    let mc = mcdrop_output(&models.base, &test.inputs, &mcdrop_config(cfg, models.seed))?;
    let po = probout_output(&models.probout, &test.inputs)?;
    let sh = shuffled_output(&inn, models.seed);
    let methods = vec![
        method_report(Method::Inn, &inn, y)?,
        method_report(Method::McDrop, &mc, y)?,
        method_report(Method::ProbOut, &po, y)?,
        method_report(Method::Shuffled, &sh, y)?,
    ];
    let direction = direction_sweep(&inn.pred, &inn.lower, &inn.upper, y, &cfg.eval.thresholds)?;
    let e = &cfg.eval;
    let markov = |s: &Samples| -> Result<Vec<MarkovRow>> {
        let b = models.inn.forward(&s.inputs)?;
        markov_bound_check(
            &b.lower,
            &b.upper,
            &s.targets,
            &e.lambda_grid,
            models.beta,
            e.markov_slack,
            e.alpha,
        )
    };
    Ok(EvalReport {
        seed: models.seed,
        beta: models.beta,
        methods,
        direction,
        markov_train: markov(&train)?,
        markov_test: markov(&test)?,
    })
}

/// Training seeds of a multi-run study: `cfg.seed, cfg.seed + 1, ...`.
pub fn run_seeds(cfg: &RunConfig, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| cfg.seed.wrapping_add(i)).collect()
}

/// Trains and evaluates one model set per seed on the same dataset.
pub fn run_study(cfg: &RunConfig, ds: &DeconvDataset, seeds: &[u64]) -> Result<Vec<(Models, EvalReport)>> {
    seeds
        .iter()
        .map(|&s| {
            let models = train_models(cfg, ds, s, None)?;
            let report = evaluate(cfg, ds, &models)?;
            Ok((models, report))
        })
        .collect()
}

/// Mean and standard deviation of one method's per-sample PWCC pooled over
/// runs, with the pooled skip count.
pub fn pooled_pwcc(reports: &[EvalReport], m: Method) -> (f64, f64, usize) {
    let all: Vec<Option<f64>> = reports
        .iter()
        .flat_map(|r| r.method(m).pwcc.iter().copied())
        .collect();
    mean_std_skipping(&all)
}

/// Returns an error when PWCC is undefined on every test sample of every
/// run for every method.
pub fn ensure_metrics_defined(reports: &[EvalReport]) -> Result<()> {
    let any = reports
        .iter()
        .flat_map(|r| &r.methods)
        .any(|m| m.pwcc.iter().any(Option::is_some));
    if any {
        Ok(())
    } else {
        Err(Error::UndefinedMetric(
            "PWCC is undefined on all test samples".into(),
        ))
    }
}

const METHODS: [Method; 4] = [Method::Inn, Method::McDrop, Method::ProbOut, Method::Shuffled];

/// `report.csv`: one row per (seed, method), then pooled rows with seed
/// `all`.
pub fn report_table(reports: &[EvalReport]) -> Table {
    let mut t = Table::new(&[
        "seed",
        "method",
        "beta",
        "test_mse",
        "pwcc_mean",
        "pwcc_std",
        "pwcc_skipped",
        "coverage",
        "mean_uncertainty",
        "passes_per_query",
    ]);
    for r in reports {
        for m in &r.methods {
            t.push(vec![
                Cell::Int(r.seed),
                m.method.name().into(),
                r.beta.into(),
                m.test_mse.into(),
                m.pwcc_mean.into(),
                m.pwcc_std.into(),
                m.pwcc_skipped.into(),
                m.coverage.into(),
                m.mean_uncertainty.into(),
                m.passes.into(),
            ]);
        }
    }
    let mean = |f: &dyn Fn(&EvalReport) -> f64| {
        reports.iter().map(f).sum::<f64>() / reports.len() as f64
    };
    if !reports.is_empty() {
        for m in METHODS {
            let (pm, ps, skipped) = pooled_pwcc(reports, m);
            t.push(vec![
                "all".into(),
                m.name().into(),
                mean(&|r| r.beta).into(),
                mean(&|r| r.method(m).test_mse).into(),
                pm.into(),
                ps.into(),
                skipped.into(),
                mean(&|r| r.method(m).coverage).into(),
                mean(&|r| r.method(m).mean_uncertainty).into(),
                mean(&|r| r.method(m).passes).into(),
            ]);
        }
    }
    t
}

/// `direction.csv`: the INN direction sweep of every run.
pub fn direction_table(reports: &[EvalReport]) -> Table {
    let mut t = Table::new(&["seed", "threshold", "accuracy", "proportion"]);
    for r in reports {
        for p in &r.direction {
            t.push(vec![
                Cell::Int(r.seed),
                p.threshold.into(),
                p.accuracy.into(),
                p.proportion.into(),
            ]);
        }
    }
    t
}

/// `markov.csv`: enlarged-interval coverage per split and λ.
pub fn markov_table(reports: &[EvalReport]) -> Table {
    let mut t = Table::new(&[
        "seed",
        "split",
        "lambda",
        "bound",
        "coverage",
        "margin",
        "pass",
        "alpha_fraction",
        "alpha_bound",
    ]);
    for r in reports {
        for (split, rows) in [("train", &r.markov_train), ("test", &r.markov_test)] {
            for m in rows.iter() {
                t.push(vec![
                    Cell::Int(r.seed),
                    split.into(),
                    m.lambda.into(),
                    m.bound.into(),
                    m.coverage.into(),
                    m.margin.into(),
                    m.pass.into(),
                    m.per_sample.map(|p| p.0).into(),
                    m.per_sample.map(|p| p.1).into(),
                ]);
            }
        }
    }
    t
}

/// Mean uncertainty magnitude on the test split after retraining at one
/// noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRow {
    pub sigma: f64,
    pub beta: f64,
    pub inn_width: f64,
    pub mcdrop_std: Option<f64>,
    pub probout_std: Option<f64>,
}

/// Regenerates the data at every `σ` of the noise grid (noise on inputs and
/// targets as configured) and retrains the base network and the
/// uncertainty models. Baselines are skipped unless `baselines` is set.
pub fn noise_response(cfg: &RunConfig, baselines: bool) -> Result<Vec<NoiseRow>> {
    cfg.eval
        .noise_grid
        .iter()
        .map(|&sigma| {
            let ds = dataset_with_sigma(cfg, sigma)?;
            let (base, _) = train_base(cfg, &ds, cfg.seed)?;
            let beta = resolve_beta(cfg, &base, &ds)?;
            let train = ds.split(Split::Train)?;
            let test = ds.split(Split::Test)?;
            let inn = train_inn(&base, &train, &inn_train_config(cfg, beta, cfg.seed), None)?;
            let inn_width = inn.uncertainty(&test.inputs)?.mean();
            let (mcdrop_std, probout_std) = if baselines {
                let mc = mcdrop_predict(&base, &test.inputs, &mcdrop_config(cfg, cfg.seed))?;
                let (po, _) = train_probout(&base, &train, &probout_train_config(cfg, cfg.seed))?;
                (
                    Some(mc.std.mean()),
                    Some(po.predict_gaussian(&test.inputs)?.std.mean()),
                )
            } else {
                (None, None)
            };
            log::info!("noise sigma {sigma}: mean interval width {inn_width:.4e}");
            Ok(NoiseRow {
                sigma,
                beta,
                inn_width,
                mcdrop_std,
                probout_std,
            })
        })
        .collect()
}

/// `noise.csv`
pub fn noise_table(rows: &[NoiseRow]) -> Table {
    let mut t = Table::new(&["sigma", "beta", "inn_width", "mcdrop_std", "probout_std"]);
    for r in rows {
        t.push(vec![
            r.sigma.into(),
            r.beta.into(),
            r.inn_width.into(),
            r.mcdrop_std.into(),
            r.probout_std.into(),
        ]);
    }
    t
}

pub fn noise_plot(rows: &[NoiseRow]) -> LinePlot {
    let mut series = vec![Series {
        name: "INN width".into(),
        color: "#1f77b4".into(),
        points: rows.iter().map(|r| (r.sigma, r.inn_width)).collect(),
    }];
    for (name, color, f) in [
        ("MCDrop std", "#ff7f0e", (|r: &NoiseRow| r.mcdrop_std) as fn(&NoiseRow) -> Option<f64>),
        ("ProbOut std", "#2ca02c", |r: &NoiseRow| r.probout_std),
    ] {
        let points: Vec<(f64, f64)> = rows.iter().filter_map(|r| f(r).map(|v| (r.sigma, v))).collect();
        if !points.is_empty() {
            series.push(Series { name: name.into(), color: color.into(), points });
        }
    }
    LinePlot {
        title: "Noise behavior".into(),
        x_label: "noise standard deviation".into(),
        y_label: "mean uncertainty".into(),
        series,
    }
}

pub fn direction_plot(report: &EvalReport) -> LinePlot {
    let acc = report
        .direction
        .iter()
        .filter_map(|p| p.accuracy.map(|a| (p.threshold, a)))
        .collect();
    let prop = report.direction.iter().map(|p| (p.threshold, p.proportion)).collect();
    LinePlot {
        title: "Directional information".into(),
        x_label: "half-width ratio threshold".into(),
        y_label: "fraction".into(),
        series: vec![
            Series { name: "accuracy".into(), color: "#1f77b4".into(), points: acc },
            Series { name: "proportion".into(), color: "#7f7f7f".into(), points: prop },
        ],
    }
}

/// Target, prediction and interval bounds of test sample `k`.
pub fn sample_plot(inn: &IntervalNetwork, ds: &DeconvDataset, k: usize) -> Result<LinePlot> {
    let test = ds.split(Split::Test)?;
    if k >= test.len() {
        return Err(Error::InvalidArgument(format!(
            "test sample {k} out of range ({} samples)",
            test.len()
        )));
    }
    let one = test.slice(k, k + 1);
    let out = inn_output(inn, &one.inputs)?;
    let line = |v: &[f64]| v.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
    Ok(LinePlot {
        title: format!("Test sample {k}"),
        x_label: "position".into(),
        y_label: "value".into(),
        series: vec![
            Series { name: "target".into(), color: "#000000".into(), points: line(one.targets.row(0)) },
            Series { name: "prediction".into(), color: "#d62728".into(), points: line(out.pred.row(0)) },
            Series { name: "lower".into(), color: "#1f77b4".into(), points: line(out.lower.row(0)) },
            Series { name: "upper".into(), color: "#17becf".into(), points: line(out.upper.row(0)) },
        ],
    })
}
