//! Browser demo for `inn-core`.
//!
//! Three operations are exported to JavaScript, each returning JSON:
//! [`degrade`] blurs a random step signal, [`propagate`] pushes a 1D input
//! grid through a small interval network, and [`Session`] trains a small
//! deconvolution network once and then fits interval bounds for any β.

use inn_core::config::{Beta, RunConfig};
use inn_core::deconv::{self, OperatorSpec, SignalSpec, Split};
use inn_core::experiment;
use inn_core::interval::{train_inn, InnStep, IntervalNetwork, IntervalParam, LayerMask};
use inn_core::metrics;
use inn_core::nn::{LayerSpec, Network};
use inn_core::rng::{standard_normal, stream_rng};
use inn_core::{Error, Result, Tensor};
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize, Debug)]
pub struct Degraded {
    pub truth: Vec<f64>,
    pub blurred: Vec<f64>,
    pub measured: Vec<f64>,
    pub naive: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub condition: f64,
}

pub fn degrade_signal(n: usize, gamma: f64, sigma: f64, seed: u64) -> Result<Degraded> {
    let op = OperatorSpec { n, gamma };
    let a = deconv::build_operator(&op)?;
    let sig = SignalSpec { n, jumps: (2, (n / 4).max(2)), values: (0.0, 1.0) };
    sig.validate()?;
    let mut rng = stream_rng(seed, 0);
    let truth = deconv::sample_signal(&sig, &mut rng);
    let blurred = deconv::matvec(&a, &truth);
    let measured: Vec<f64> = blurred.iter().map(|v| v + sigma * standard_normal(&mut rng)).collect();
    let naive = deconv::matvec(&deconv::naive_inverse(&op)?, &measured);
    Ok(Degraded {
        truth,
        blurred,
        measured,
        naive,
        spectrum: op.spectrum(),
        condition: op.condition_number(),
    })
}

#[derive(Serialize, Debug)]
pub struct Propagation {
    pub x: Vec<f64>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Outputs of networks with weights drawn uniformly inside the box.
    pub draws: Vec<Vec<f64>>,
    pub escaped: usize,
}

const GRID: usize = 121;

fn toy_network(seed: u64) -> Result<Network> {
    let dense = |i, o| LayerSpec::Dense { inputs: i, outputs: o };
    Network::init(
        1,
        vec![dense(1, 12), LayerSpec::Relu, dense(12, 12), LayerSpec::Relu, dense(12, 1)],
        &mut stream_rng(seed, 1),
    )
}

/// Widens every parameter of the toy network by a relative `spread`.
fn widened(net: &Network, spread: f64) -> Result<IntervalNetwork> {
    let bounds = net
        .params()
        .iter()
        .map(|p| {
            let mut lower = p.clone();
            let mut upper = p.clone();
            for (l, u) in lower.slices_mut().into_iter().zip(upper.slices_mut()) {
                for (a, b) in l.iter_mut().zip(u.iter_mut()) {
                    let r = spread * a.abs().max(0.05);
                    *a -= r;
                    *b += r;
                }
            }
            IntervalParam { lower, upper }
        })
        .collect();
    IntervalNetwork::from_parts(net.clone(), bounds, vec![true; net.num_param_layers()])
}

pub fn propagate_grid(spread: f64, draws: usize, seed: u64) -> Result<Propagation> {
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread {spread} must be >= 0")));
    }
    let net = toy_network(seed)?;
    let inn = widened(&net, spread)?;
    let x: Vec<f64> = (0..GRID).map(|i| -3.0 + 6.0 * i as f64 / (GRID - 1) as f64).collect();
    let xt = Tensor::new(vec![GRID, 1], x.clone())?;
    let point = net.forward(&xt)?.into_data();
    let out = inn.forward(&xt)?;
    let (lower, upper) = (out.lower.into_data(), out.upper.into_data());
    let mut rng = stream_rng(seed, 2);
    let mut samples = Vec::with_capacity(draws);
    let mut escaped = 0;
    for _ in 0..draws {
        let mut drawn = net.clone();
        for (p, b) in drawn.params_mut().iter_mut().zip(inn.bounds()) {
            let [lw, lb, uw, ub] = b.slices();
            for (dst, (l, u)) in p.slices_mut().into_iter().zip([(lw, uw), (lb, ub)]) {
                for (v, (a, c)) in dst.iter_mut().zip(l.iter().zip(u)) {
                    *v = a + rng.random::<f64>() * (c - a);
                }
            }
        }
        let y = drawn.forward(&xt)?.into_data();
        escaped += y
            .iter()
            .zip(lower.iter().zip(&upper))
            .filter(|(v, (l, u))| **v < **l - 1e-9 || **v > **u + 1e-9)
            .count();
        samples.push(y);
    }
    Ok(Propagation { x, point, lower, upper, draws: samples, escaped })
}

/// Small deconvolution problem sized to train in a browser tab.
pub fn demo_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::desk();
    c.data.n = 32;
    c.data.m = 200;
    c.data.jumps = (2, 6);
    c.data.gamma = 6.0;
    c.base.channels = vec![8, 8, 8, 1];
    c.base.dropout = vec![];
    c.base.epochs = 25;
    c.inn.epochs = 15;
    c.inn.mask = LayerMask::Last(2);
    c.seed = seed;
    c
}

#[derive(Serialize, Debug)]
pub struct Fit {
    pub beta: f64,
    pub test_mse: f64,
    pub coverage: f64,
    pub mean_width: f64,
    /// Pearson correlation of width and absolute error over all test
    /// components.
    pub correlation: Option<f64>,
    pub losses: Vec<f64>,
}

#[derive(Serialize, Debug)]
pub struct SampleView {
    pub truth: Vec<f64>,
    pub measured: Vec<f64>,
    pub pred: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub struct Trained {
    cfg: RunConfig,
    base: Network,
    test: inn_core::data::Samples,
    train: inn_core::data::Samples,
    mae_beta: f64,
    inn: Option<IntervalNetwork>,
}

impl Trained {
    pub fn new(seed: u64) -> Result<Self> {
        let cfg = demo_config(seed);
        let ds = experiment::dataset(&cfg)?;
        let (base, _) = experiment::train_base(&cfg, &ds, seed)?;
        let mae_beta = {
            let mut c = cfg.clone();
            c.inn.beta = Beta::Auto;
            experiment::resolve_beta(&c, &base, &ds)?
        };
        Ok(Self {
            test: ds.split(Split::Test)?,
            train: ds.split(Split::Train)?,
            cfg,
            base,
            mae_beta,
            inn: None,
        })
    }

    pub fn mae_beta(&self) -> f64 {
        self.mae_beta
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }

    pub fn fit(&mut self, beta: f64) -> Result<Fit> {
        let tc = experiment::inn_train_config(&self.cfg, beta, self.cfg.seed);
        let mut losses = Vec::new();
        let mut record = |s: &InnStep, _: &IntervalNetwork| {
            losses.push(s.loss);
            Ok(())
        };
        let inn = train_inn(&self.base, &self.train, &tc, Some(&mut record))?;
        let out = inn.forward(&self.test.inputs)?;
        let pred = self.base.forward(&self.test.inputs)?;
        let width = out.width();
        let err: Vec<f64> = pred
            .data()
            .iter()
            .zip(self.test.targets.data())
            .map(|(p, t)| (p - t).abs())
            .collect();
        let fit = Fit {
            beta,
            test_mse: inn_core::tensor::mse(&pred, &self.test.targets)?,
            coverage: metrics::coverage(&out.lower, &out.upper, &self.test.targets, 0.0, beta)?,
            mean_width: width.mean(),
            correlation: metrics::pearson(width.data(), &err),
            losses,
        };
        self.inn = Some(inn);
        Ok(fit)
    }

    pub fn sample(&self, k: usize) -> Result<SampleView> {
        if k >= self.test.len() {
            return Err(Error::InvalidArgument(format!(
                "sample {k} out of range 0..{}",
                self.test.len()
            )));
        }
        let x = self.test.inputs.select_rows(&[k]);
        let pred = self.base.forward(&x)?.into_data();
        let (lower, upper) = match &self.inn {
            Some(inn) => {
                let out = inn.forward(&x)?;
                (out.lower.into_data(), out.upper.into_data())
            }
            None => (pred.clone(), pred.clone()),
        };
        Ok(SampleView {
            truth: self.test.targets.row(k).to_vec(),
            measured: x.into_data(),
            pred,
            lower,
            upper,
        })
    }
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    let v = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn degrade(n: usize, gamma: f64, sigma: f64, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(degrade_signal(n, gamma, sigma, seed as u64))
}

#[wasm_bindgen]
pub fn propagate(spread: f64, draws: usize, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(propagate_grid(spread, draws, seed as u64))
}

#[wasm_bindgen]
pub struct Session(Trained);

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> std::result::Result<Session, JsValue> {
        Trained::new(seed as u64)
            .map(Session)
            .map_err(|e| JsValue::from_str(&e.to_string()))
    }

    #[wasm_bindgen(js_name = maeBeta)]
    pub fn mae_beta(&self) -> f64 {
        self.0.mae_beta()
    }

    #[wasm_bindgen(js_name = testLen)]
    pub fn test_len(&self) -> usize {
        self.0.test_len()
    }

    pub fn fit(&mut self, beta: f64) -> std::result::Result<String, JsValue> {
        to_js(self.0.fit(beta))
    }

    pub fn sample(&self, k: usize) -> std::result::Result<String, JsValue> {
        to_js(self.0.sample(k))
    }
}
