use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use inn_core::baselines::train_probout;
use inn_core::config::{parse_config_over, RunConfig};
use inn_core::deconv::{DeconvDataset, Split};
use inn_core::experiment::{
    dataset, direction_plot, direction_table, ensure_metrics_defined, evaluate, inn_train_config,
    markov_table, noise_plot, noise_response, noise_table, probout_train_config, report_table,
    resolve_beta, run_seeds, sample_plot, train_base, train_models, EvalReport, Method, Models,
};
use inn_core::interval::train_inn;
use inn_core::io::{
    emit_csv, emit_svg_lineplot, load_checkpoint, load_dataset, save_checkpoint, save_dataset,
    Checkpoint, LinePlot, Model, Table, TrainingMeta,
};
use inn_core::metrics::direction_sweep;
use inn_core::{Error, Result};

use crate::{Command, GlobalArgs};

struct Run<'a> {
    args: &'a GlobalArgs,
    cfg: RunConfig,
    started: Instant,
    outputs: Vec<String>,
    passes: Option<[f64; 3]>,
}

fn load_config(args: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::for_scale(args.scale.into());
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let parsed = parse_config_over(&text, cfg)?;
        for w in &parsed.warnings {
            log::warn!("{}: {w}", path.display());
        }
        cfg = parsed.config;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(args: &GlobalArgs, command: &Command) -> Result<()> {
    let cfg = load_config(args)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let mut run = Run {
        args,
        cfg,
        started: Instant::now(),
        outputs: Vec::new(),
        passes: None,
    };
    let name = match command {
        Command::GenData => {
            let ds = dataset(&run.cfg)?;
            save_dataset(&run.path("data.innd"), &ds)?;
            "gen-data"
        }
        Command::TrainBase => {
            let ds = run.dataset()?;
            let (net, _) = train_base(&run.cfg, &ds, run.cfg.seed)?;
            let meta = run.meta(run.cfg.base.epochs, run.cfg.base.lr, 0.0);
            run.save("base.ckpt", Model::Base(net), meta)?;
            "train-base"
        }
        Command::TrainInn { checkpoint } => {
            let ds = run.dataset()?;
            let base = match load_checkpoint(checkpoint)?.model {
                Model::Base(n) => n,
                _ => return Err(wrong_kind(checkpoint, "base")),
            };
            let beta = resolve_beta(&run.cfg, &base, &ds)?;
            let icfg = inn_train_config(&run.cfg, beta, run.cfg.seed);
            let inn = train_inn(&base, &ds.split(Split::Train)?, &icfg, None)?;
            let meta = run.meta(run.cfg.inn.epochs, run.cfg.inn.lr, beta);
            run.save("inn.ckpt", Model::Interval(inn), meta)?;
            "train-inn"
        }
        Command::TrainProbout { checkpoint } => {
            let ds = run.dataset()?;
            let base = match load_checkpoint(checkpoint)?.model {
                Model::Base(n) => n,
                _ => return Err(wrong_kind(checkpoint, "base")),
            };
            let pcfg = probout_train_config(&run.cfg, run.cfg.seed);
            let (po, _) = train_probout(&base, &ds.split(Split::Train)?, &pcfg)?;
            let meta = run.meta(run.cfg.probout.epochs, run.cfg.probout.lr, 0.0);
            run.save("probout.ckpt", Model::ProbOut(po), meta)?;
            "train-probout"
        }
        Command::Eval { checkpoints, plots } => {
            let ds = run.dataset()?;
            let inn_ckpt = load_checkpoint(&checkpoints[0])?;
            let Model::Interval(inn) = inn_ckpt.model else {
                return Err(wrong_kind(&checkpoints[0], "interval"));
            };
            let Model::ProbOut(probout) = load_checkpoint(&checkpoints[1])?.model else {
                return Err(wrong_kind(&checkpoints[1], "ProbOut"));
            };
            let models = Models {
                seed: inn_ckpt.meta.seed,
                base: inn.base().clone(),
                base_history: Vec::new(),
                beta: inn_ckpt.meta.beta,
                inn,
                probout,
            };
            let report = evaluate(&run.cfg, &ds, &models)?;
            run.reports(&ds, &[(models, report)], *plots)?;
            "eval"
        }
        Command::NoiseSweep { baselines } => {
            run.noise(*baselines)?;
            "noise-sweep"
        }
        Command::DirectionSweep { checkpoint } => {
            let ds = run.dataset()?;
            let ckpt = load_checkpoint(checkpoint)?;
            let Model::Interval(inn) = ckpt.model else {
                return Err(wrong_kind(checkpoint, "interval"));
            };
            let test = ds.split(Split::Test)?;
            let pred = inn.base().forward(&test.inputs)?;
            let b = inn.forward(&test.inputs)?;
            let direction =
                direction_sweep(&pred, &b.lower, &b.upper, &test.targets, &run.cfg.eval.thresholds)?;
            let report = EvalReport {
                seed: ckpt.meta.seed,
                beta: ckpt.meta.beta,
                methods: Vec::new(),
                direction,
                markov_train: Vec::new(),
                markov_test: Vec::new(),
            };
            run.csv("direction.csv", &direction_table(std::slice::from_ref(&report)))?;
            run.svg("direction.svg", &direction_plot(&report))?;
            "direction-sweep"
        }
        Command::Repro1dDeconv {
            runs,
            skip_noise,
            plots,
        } => {
            if *runs == 0 {
                return Err(Error::InvalidArgument("--runs must be at least 1".into()));
            }
            let ds = run.dataset()?;
            if run.args.data.is_none() {
                save_dataset(&run.path("data.innd"), &ds)?;
            }
            let mut results = Vec::new();
            for seed in run_seeds(&run.cfg, *runs) {
                let models = train_models(&run.cfg, &ds, seed, None)?;
                let c = &run.cfg;
                let tag = format!("seed{seed}");
                let base_meta = TrainingMeta { seed, epochs: c.base.epochs as u64, lr: c.base.lr, beta: 0.0 };
                let inn_meta = TrainingMeta { seed, epochs: c.inn.epochs as u64, lr: c.inn.lr, beta: models.beta };
                let po_meta = TrainingMeta { seed, epochs: c.probout.epochs as u64, lr: c.probout.lr, beta: 0.0 };
                run.save(&format!("base_{tag}.ckpt"), Model::Base(models.base.clone()), base_meta)?;
                run.save(&format!("inn_{tag}.ckpt"), Model::Interval(models.inn.clone()), inn_meta)?;
                run.save(&format!("probout_{tag}.ckpt"), Model::ProbOut(models.probout.clone()), po_meta)?;
                let report = evaluate(&run.cfg, &ds, &models)?;
                results.push((models, report));
            }
            run.reports(&ds, &results, *plots)?;
            if !skip_noise {
                run.noise(true)?;
            }
            "repro-1ddeconv"
        }
    };
    run.manifest(name)
}

fn wrong_kind(path: &Path, expected: &str) -> Error {
    Error::InvalidArgument(format!("{} is not a {expected} checkpoint", path.display()))
}

impl Run<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.args.out_dir.join(name)
    }

    fn meta(&self, epochs: usize, lr: f64, beta: f64) -> TrainingMeta {
        TrainingMeta {
            seed: self.cfg.seed,
            epochs: epochs as u64,
            lr,
            beta,
        }
    }

    fn save(&mut self, name: &str, model: Model, meta: TrainingMeta) -> Result<()> {
        let path = self.path(name);
        save_checkpoint(&path, &Checkpoint { model, meta })
    }

    fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = self.path(name);
        emit_csv(table, &path)
    }

    fn svg(&mut self, name: &str, plot: &LinePlot) -> Result<()> {
        let path = self.path(name);
        emit_svg_lineplot(plot, &path)
    }

    fn dataset(&self) -> Result<DeconvDataset> {
        let Some(path) = &self.args.data else {
            return dataset(&self.cfg);
        };
        let ds = load_dataset(path)?;
        if ds.n() != self.cfg.data.n {
            return Err(Error::Config {
                key: "data.n".into(),
                message: format!(
                    "{} holds signals of length {}, the config expects {}",
                    path.display(),
                    ds.n(),
                    self.cfg.data.n
                ),
            });
        }
        Ok(ds)
    }

    fn reports(&mut self, ds: &DeconvDataset, results: &[(Models, EvalReport)], plots: usize) -> Result<()> {
        let reports: Vec<EvalReport> = results.iter().map(|r| r.1.clone()).collect();
        self.csv("report.csv", &report_table(&reports))?;
        self.csv("direction.csv", &direction_table(&reports))?;
        self.csv("markov.csv", &markov_table(&reports))?;
        let (models, first) = &results[0];
        self.svg("direction.svg", &direction_plot(first))?;
        let test_len = ds.splits.test.len();
        for k in 0..plots.min(test_len) {
            self.svg(&format!("sample_{k}.svg"), &sample_plot(&models.inn, ds, k)?)?;
        }
        self.passes = Some([Method::Inn, Method::McDrop, Method::ProbOut].map(|m| first.method(m).passes));
        ensure_metrics_defined(&reports)
    }

    fn noise(&mut self, baselines: bool) -> Result<()> {
        let rows = noise_response(&self.cfg, baselines)?;
        self.csv("noise.csv", &noise_table(&rows))?;
        self.svg("noise.svg", &noise_plot(&rows))
    }

    fn manifest(&mut self, command: &str) -> Result<()> {
        let mut lines = vec![
            format!("command = {command}"),
            format!("config_hash = {}", self.cfg.hash()),
            format!("seed = {}", self.cfg.seed),
            format!("scale = {:?}", self.args.scale).to_lowercase(),
            format!("wall_time_s = {:.3}", self.started.elapsed().as_secs_f64()),
        ];
        if let Some([inn, mc, po]) = self.passes {
            lines.push(format!("passes_per_query.inn = {inn}"));
            lines.push(format!("passes_per_query.mcdrop = {mc}"));
            lines.push(format!("passes_per_query.probout = {po}"));
        }
        lines.push(format!("outputs = {}", self.outputs.join(",")));
        let path = self.args.out_dir.join("manifest.txt");
        fs::write(&path, lines.join("\n") + "\n").map_err(|e| io_err(&path, e))
    }
}
