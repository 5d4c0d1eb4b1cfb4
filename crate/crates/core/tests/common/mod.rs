//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use inn_core::baselines::{mcdrop_predict, train_probout, McDropConfig, ProbOutConfig};
use inn_core::data::Samples;
use inn_core::interval::{interval_backward, interval_loss, IntervalNetwork, IntervalParam};
use inn_core::nn::{LayerParams, LayerSpec, Network};
use inn_core::rng::{standard_normal, stream_rng, SeededRng};
use inn_core::train::{train_mse, TrainConfig};
use inn_core::Tensor;
use rand::Rng;

pub fn dense(inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::Dense { inputs, outputs }
}

/// Dense ReLU network through `widths` (input first, output last).
pub fn dense_net(widths: &[usize], rng: &mut SeededRng) -> Network {
    let mut layers = Vec::new();
    for (i, w) in widths.windows(2).enumerate() {
        if i > 0 {
            layers.push(LayerSpec::Relu);
        }
        layers.push(dense(w[0], w[1]));
    }
    Network::init(widths[0], layers, rng).unwrap()
}

/// Random widths for a network with `depth` affine layers, each at most
/// `max_width`.
pub fn random_widths(rng: &mut SeededRng, depth: usize, max_width: usize) -> Vec<usize> {
    (0..=depth).map(|_| rng.random_range(1..=max_width)).collect()
}

/// Intervals `[p - a, p + b]` with `a, b ~ U(0, spread)` on every
/// parameter.
pub fn widen(net: &Network, spread: f64, rng: &mut SeededRng) -> IntervalNetwork {
    let bounds = net
        .params()
        .iter()
        .map(|p| {
            let mut lower = p.clone();
            let mut upper = p.clone();
            for s in lower.slices_mut() {
                for v in s.iter_mut() {
                    *v -= rng.random::<f64>() * spread;
                }
            }
            for s in upper.slices_mut() {
                for v in s.iter_mut() {
                    *v += rng.random::<f64>() * spread;
                }
            }
            IntervalParam { lower, upper }
        })
        .collect();
    IntervalNetwork::from_parts(net.clone(), bounds, vec![true; net.num_param_layers()]).unwrap()
}

pub fn normal_tensor(shape: &[usize], scale: f64, rng: &mut SeededRng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = scale * standard_normal(rng);
    }
    t
}

/// A parameter set drawn inside the boxes: each entry is the lower bound,
/// the upper bound, or uniform in between, with equal odds.
pub fn draw_inside(inn: &IntervalNetwork, rng: &mut SeededRng) -> Network {
    let params: Vec<LayerParams> = inn
        .bounds()
        .iter()
        .map(|b| {
            let mut p = b.lower.clone();
            let [lw, lb, uw, ub] = b.slices();
            let [pw, pb] = p.slices_mut();
            for (dst, (lo, hi)) in pw.iter_mut().chain(pb.iter_mut()).zip(
                lw.iter().chain(lb).zip(uw.iter().chain(ub)),
            ) {
                *dst = match rng.random_range(0..3) {
                    0 => *lo,
                    1 => *hi,
                    _ => lo + rng.random::<f64>() * (hi - lo),
                };
            }
            p
        })
        .collect();
    let base = inn.base();
    Network::new(base.input_dim(), base.layers().to_vec(), params).unwrap()
}

/// Largest amount by which any realized output leaves the propagated box
/// over `draws` parameter draws.
pub fn max_box_violation(inn: &IntervalNetwork, x: &Tensor, draws: usize, rng: &mut SeededRng) -> f64 {
    let bx = inn.forward(x).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..draws {
        let y = draw_inside(inn, rng).forward(x).unwrap();
        for ((v, l), u) in y.data().iter().zip(bx.lower.data()).zip(bx.upper.data()) {
            worst = worst.max(l - v).max(v - u);
        }
    }
    worst
}

/// Largest deviation between the propagated bounds of a single dense layer
/// with nonnegative input and the min/max over all `2^(weights + biases)`
/// corner parameter choices. The layer must have at most 12 parameters.
pub fn corner_gap(inn: &IntervalNetwork, x: &[f64]) -> f64 {
    assert!(x.iter().all(|&v| v >= 0.0));
    let b = &inn.bounds()[0];
    let [lw, lb, uw, ub] = b.slices();
    let (nw, nb) = (lw.len(), lb.len());
    let n = nw + nb;
    assert!(n <= 12, "{n} parameters is too many to enumerate");
    let outs = lb.len();
    let ins = x.len();
    let mut lo = vec![f64::INFINITY; outs];
    let mut hi = vec![f64::NEG_INFINITY; outs];
    for mask in 0u32..(1 << n) {
        let pick = |i: usize, l: &[f64], u: &[f64], off: usize| {
            if mask >> (off + i) & 1 == 1 {
                u[i]
            } else {
                l[i]
            }
        };
        for o in 0..outs {
            let mut y = pick(o, lb, ub, nw);
            for i in 0..ins {
                y += pick(o * ins + i, lw, uw, 0) * x[i];
            }
            lo[o] = lo[o].min(y);
            hi[o] = hi[o].max(y);
        }
    }
    let bx = inn.forward(&Tensor::from_rows(&[x]).unwrap()).unwrap();
    let mut gap: f64 = 0.0;
    for o in 0..outs {
        gap = gap
            .max((bx.lower.data()[o] - lo[o]).abs())
            .max((bx.upper.data()[o] - hi[o]).abs());
    }
    gap
}

/// Relative error used by the finite-difference checks; gradients smaller
/// than `floor` are compared absolutely against `floor`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Interval network with the layers up to and including affine layer `l`.
fn prefix(inn: &IntervalNetwork, l: usize) -> IntervalNetwork {
    let base = inn.base();
    let slots = base.slot(l).unwrap() + 1;
    let net = Network::new(
        base.input_dim(),
        base.layers()[..=l].to_vec(),
        base.params()[..slots].to_vec(),
    )
    .unwrap();
    IntervalNetwork::from_parts(
        net,
        inn.bounds()[..slots].to_vec(),
        inn.trainable()[..slots].to_vec(),
    )
    .unwrap()
}

/// Distance from the nearest kink of the interval loss: pre-activation
/// bounds at zero, hidden-layer weight bounds at zero (sign switch of the
/// propagation rule), and output bounds at the target.
pub fn kink_margin(inn: &IntervalNetwork, x: &Tensor, y: &Tensor) -> f64 {
    let base = inn.base();
    let mut margin = f64::INFINITY;
    let affine: Vec<usize> = (0..base.layers().len())
        .filter(|&l| base.layers()[l].is_parameterized())
        .collect();
    for &l in &affine[..affine.len() - 1] {
        let b = prefix(inn, l).forward(x).unwrap();
        for v in b.lower.data().iter().chain(b.upper.data()) {
            margin = margin.min(v.abs());
        }
    }
    for b in &inn.bounds()[1..] {
        for v in b.lower.weight.data().iter().chain(b.upper.weight.data()) {
            margin = margin.min(v.abs());
        }
    }
    let out = inn.forward(x).unwrap();
    for ((l, u), t) in out.lower.data().iter().zip(out.upper.data()).zip(y.data()) {
        margin = margin.min((t - u).abs()).min((t - l).abs());
    }
    margin
}

fn with_bound(inn: &IntervalNetwork, slot: usize, which: usize, j: usize, delta: f64) -> IntervalNetwork {
    let mut bounds = inn.bounds().to_vec();
    let b = &mut bounds[slot];
    let target = match which {
        0 => &mut b.lower.weight.data_mut()[j],
        1 => &mut b.lower.bias.data_mut()[j],
        2 => &mut b.upper.weight.data_mut()[j],
        _ => &mut b.upper.bias.data_mut()[j],
    };
    *target += delta;
    IntervalNetwork::from_parts(inn.base().clone(), bounds, inn.trainable().to_vec()).unwrap()
}

/// Worst relative error between the analytic interval-loss gradient and
/// central differences with step `h`, over every bound entry.
pub fn inn_gradient_error(inn: &IntervalNetwork, x: &Tensor, y: &Tensor, beta: f64, h: f64) -> f64 {
    let (out, cache) = inn.forward_cached(x).unwrap();
    let (_, grads) = interval_backward(inn, &out, &cache, y, beta).unwrap();
    let loss = |n: &IntervalNetwork| interval_loss(&n.forward(x).unwrap(), y, beta).unwrap();
    let mut worst: f64 = 0.0;
    for (slot, g) in grads.params.iter().enumerate() {
        for (which, gs) in g.slices().iter().enumerate() {
            for (j, &a) in gs.iter().enumerate() {
                let num = (loss(&with_bound(inn, slot, which, j, h))
                    - loss(&with_bound(inn, slot, which, j, -h)))
                    / (2.0 * h);
                worst = worst.max(rel_err(a, num, 1e-4));
            }
        }
    }
    worst
}

/// Random dense interval configuration at least `margin` away from every
/// kink, with parameter gaps wider than `margin`. Retries until one is
/// found.
pub fn kink_free_config(
    rng: &mut SeededRng,
    margin: f64,
) -> (IntervalNetwork, Tensor, Tensor) {
    loop {
        let depth = rng.random_range(1..=3);
        let widths = random_widths(rng, depth, 5);
        let net = dense_net(&widths, rng);
        let spread = 0.05 + 0.2 * rng.random::<f64>();
        let inn = widen(&net, spread, rng);
        let gaps_ok = inn.bounds().iter().zip(net.params()).all(|(b, p)| {
            let [lw, lb, uw, ub] = b.slices();
            let [pw, pb] = p.slices();
            pw.iter().chain(pb).zip(lw.iter().chain(lb)).all(|(p, l)| p - l > margin)
                && pw.iter().chain(pb).zip(uw.iter().chain(ub)).all(|(p, u)| u - p > margin)
        });
        if !gaps_ok {
            continue;
        }
        let batch = rng.random_range(1..=4);
        let x = normal_tensor(&[batch, widths[0]], 1.0, rng);
        // targets spread around the box so both hinge branches occur
        let out = inn.forward(&x).unwrap();
        let mut y = Tensor::zeros(out.lower.shape());
        for ((t, l), u) in y.data_mut().iter_mut().zip(out.lower.data()).zip(out.upper.data()) {
            let mid = 0.5 * (l + u);
            *t = mid + (u - l + 0.2) * (rng.random::<f64>() * 2.0 - 1.0);
        }
        if kink_margin(&inn, &x, &y) > margin {
            return (inn, x, y);
        }
    }
}

/// Exact mean and standard deviation of the network output over every
/// dropout mask of its single dropout layer, weighted by mask probability.
pub fn dropout_enumeration(net: &Network, x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let layers = net.layers();
    let d = layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Dropout { .. }))
        .expect("one dropout layer");
    let LayerSpec::Dropout { p } = layers[d] else { unreachable!() };
    let units = net.dim_at(d);
    assert!(units <= 8);
    let before = net.forward_range(x, 0..d).unwrap();
    let after_start = d + 1;
    let rest = |h: &Tensor| net.forward_range(h, after_start..layers.len()).unwrap();
    let outs = net.output_dim() * x.rows();
    let mut m1 = vec![0.0; outs];
    let mut m2 = vec![0.0; outs];
    for mask in 0u32..(1 << units) {
        let kept = mask.count_ones() as i32;
        let prob = (1.0 - p).powi(kept) * p.powi(units as i32 - kept);
        let mut h = before.clone();
        for r in 0..h.rows() {
            for (u, v) in h.row_mut(r).iter_mut().enumerate() {
                *v = if mask >> u & 1 == 1 { *v / (1.0 - p) } else { 0.0 };
            }
        }
        let y = rest(&h);
        for (k, v) in y.data().iter().enumerate() {
            m1[k] += prob * v;
            m2[k] += prob * v * v;
        }
    }
    let std = m1.iter().zip(&m2).map(|(a, b)| (b - a * a).max(0.0).sqrt()).collect();
    (m1, std)
}

/// Worst relative deviation of MC-dropout moments from exact enumeration.
pub fn mcdrop_vs_enumeration(samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, 0);
    let net = Network::init(
        3,
        vec![
            dense(3, 8),
            LayerSpec::Relu,
            LayerSpec::Dropout { p: 0.3 },
            dense(8, 2),
        ],
        &mut rng,
    )
    .unwrap();
    let x = Tensor::from_rows(&[[0.5, 1.0, -0.3], [1.2, -0.7, 0.9]]).unwrap();
    let (mean, std) = dropout_enumeration(&net, &x);
    let mc = mcdrop_predict(&net, &x, &McDropConfig { samples, seed }).unwrap();
    let rel = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max)
    };
    (rel(mc.mean.data(), &mean), rel(mc.std.data(), &std))
}

/// Trains a ProbOut head on `y = sin(2 x1) + x2 / 2 + N(0, sigma^2)` and
/// returns the mean predicted standard deviation on fresh inputs.
pub fn probout_homoscedastic(sigma: f64, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 1);
    let sample = |rng: &mut SeededRng, m: usize, noisy: bool| {
        let x = normal_tensor(&[m, 2], 1.0, rng);
        let mut y = Tensor::zeros(&[m, 1]);
        for r in 0..m {
            let (a, b) = (x.row(r)[0], x.row(r)[1]);
            let noise = if noisy { sigma * standard_normal(rng) } else { 0.0 };
            y.row_mut(r)[0] = (2.0 * a).sin() + 0.5 * b + noise;
        }
        Samples::new(x, y).unwrap()
    };
    let train = sample(&mut rng, 2000, true);
    let mut net = dense_net(&[2, 32, 32, 1], &mut rng);
    let tc = TrainConfig { epochs: 60, lr: 3e-3, batch: 32, seed };
    train_mse(&mut net, &train, &tc).unwrap();
    let pc = ProbOutConfig { epochs: 30, lr: 1e-3, batch: 32, seed };
    let (po, _) = train_probout(&net, &train, &pc).unwrap();
    let test = sample(&mut rng, 500, false);
    po.predict_gaussian(&test.inputs).unwrap().std.mean()
}
