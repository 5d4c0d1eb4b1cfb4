//! Interval neural networks.
//!
//! An [`IntervalNetwork`] wraps a frozen point [`Network`] and gives every
//! weight and bias a `[lower, upper]` interval that always contains the
//! point value. A point input is pushed through the network with interval
//! arithmetic, producing an output box that contains the point prediction;
//! the box width serves as the uncertainty score.
//!
//! Two propagation rules are used. The network input is a point vector of
//! arbitrary sign, so the first affine layer splits the input into its
//! positive and negative parts. Every later affine layer sees a nonnegative
//! box (ReLU output), so only the weight signs need to be split. A box input
//! with negative entries is rejected: the general signed-box product is not
//! needed on ReLU networks.

use crate::adam::{AdamConfig, AdamState};
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::linear::{self, Bounds, BoundsMut};
use crate::nn::{LayerParams, LayerSpec, Network};
use crate::rng::{permutation, stream_rng, subseed};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalParam {
    pub lower: LayerParams,
    pub upper: LayerParams,
}

impl IntervalParam {
    fn point(p: &LayerParams) -> Self {
        Self {
            lower: p.clone(),
            upper: p.clone(),
        }
    }

    fn zeros_like(p: &LayerParams) -> Self {
        let z = LayerParams {
            weight: Tensor::zeros(p.weight.shape()),
            bias: Tensor::zeros(p.bias.shape()),
        };
        Self {
            lower: z.clone(),
            upper: z,
        }
    }

    /// `[lower.weight, lower.bias, upper.weight, upper.bias]`
    pub fn slices(&self) -> [&[f64]; 4] {
        let [lw, lb] = self.lower.slices();
        let [uw, ub] = self.upper.slices();
        [lw, lb, uw, ub]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        let [lw, lb] = self.lower.slices_mut();
        let [uw, ub] = self.upper.slices_mut();
        [lw, lb, uw, ub]
    }
}

/// A batch of boxes, `lower <= upper` componentwise.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalActivation {
    pub lower: Tensor,
    pub upper: Tensor,
}

impl IntervalActivation {
    pub fn point(x: &Tensor) -> Self {
        Self {
            lower: x.clone(),
            upper: x.clone(),
        }
    }

    pub fn width(&self) -> Tensor {
        self.upper
            .sub(&self.lower)
            .expect("interval bounds share a shape")
    }

    fn zeros(shape: &[usize]) -> Self {
        Self {
            lower: Tensor::zeros(shape),
            upper: Tensor::zeros(shape),
        }
    }
}

/// Which affine layers have trainable intervals; the others stay point
/// intervals at the underlying parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerMask {
    All,
    /// The last `k` affine layers.
    Last(usize),
    /// One flag per affine layer.
    Explicit(Vec<bool>),
}

impl LayerMask {
    pub fn resolve(&self, param_layers: usize) -> Result<Vec<bool>> {
        match self {
            LayerMask::All => Ok(vec![true; param_layers]),
            LayerMask::Last(k) => Ok((0..param_layers)
                .map(|i| i + k >= param_layers)
                .collect()),
            LayerMask::Explicit(v) if v.len() == param_layers => Ok(v.clone()),
            LayerMask::Explicit(v) => Err(Error::shape("layer mask", param_layers, v.len())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalNetwork {
    base: Network,
    bounds: Vec<IntervalParam>,
    trainable: Vec<bool>,
}

#[derive(Clone, Debug)]
enum LayerInput {
    Point(Tensor),
    Box(IntervalActivation),
}

/// Trace of an interval forward pass starting at layer `start`.
#[derive(Clone, Debug)]
pub struct IntervalCache {
    start: usize,
    batch: usize,
    dims: Vec<usize>,
    inputs: Vec<LayerInput>,
}

/// Gradients for every affine layer; slots outside the propagated range
/// are zero.
#[derive(Clone, Debug)]
pub struct IntervalGrads {
    pub params: Vec<IntervalParam>,
}

impl IntervalNetwork {
    /// Point intervals at the underlying parameters.
    pub fn from_base(base: Network, mask: &LayerMask) -> Result<Self> {
        let trainable = mask.resolve(base.num_param_layers())?;
        let bounds = base.params().iter().map(IntervalParam::point).collect();
        Ok(Self {
            base,
            bounds,
            trainable,
        })
    }

    /// Assembles a network from stored bounds, validating shapes, the
    /// containment invariant, and that masked-off layers are point intervals.
    pub fn from_parts(
        base: Network,
        bounds: Vec<IntervalParam>,
        trainable: Vec<bool>,
    ) -> Result<Self> {
        if bounds.len() != base.num_param_layers() || trainable.len() != bounds.len() {
            return Err(Error::shape(
                "interval bounds",
                base.num_param_layers(),
                (bounds.len(), trainable.len()),
            ));
        }
        for (b, p) in bounds.iter().zip(base.params()) {
            for side in [&b.lower, &b.upper] {
                if side.weight.shape() != p.weight.shape() || side.bias.shape() != p.bias.shape() {
                    return Err(Error::shape(
                        "interval bounds",
                        p.weight.shape(),
                        side.weight.shape(),
                    ));
                }
            }
        }
        let inn = Self {
            base,
            bounds,
            trainable,
        };
        inn.check_containment()?;
        for (slot, b) in inn.bounds.iter().enumerate() {
            if !inn.trainable[slot] && (b.lower != b.upper) {
                return Err(Error::Containment(format!(
                    "frozen layer slot {slot} has non-point intervals"
                )));
            }
        }
        Ok(inn)
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn bounds(&self) -> &[IntervalParam] {
        &self.bounds
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    /// Layer index of the first affine layer with trainable intervals.
    pub fn first_trainable_layer(&self) -> Option<usize> {
        self.trainable
            .iter()
            .position(|&t| t)
            .map(|slot| self.base.layer_of_slot(slot))
    }

    /// Snap every bound back onto the point parameter if it crossed it:
    /// `upper <- max(upper, point)`, `lower <- min(lower, point)`.
    pub fn project_containment(&mut self) {
        for (b, p) in self.bounds.iter_mut().zip(self.base.params()) {
            for (lo, pt) in b.lower.slices_mut().into_iter().zip(p.slices()) {
                for (l, &v) in lo.iter_mut().zip(pt) {
                    *l = l.min(v);
                }
            }
            for (up, pt) in b.upper.slices_mut().into_iter().zip(p.slices()) {
                for (u, &v) in up.iter_mut().zip(pt) {
                    *u = u.max(v);
                }
            }
        }
    }

    /// `lower <= point <= upper` on every entry, exactly.
    pub fn check_containment(&self) -> Result<()> {
        for (slot, (b, p)) in self.bounds.iter().zip(self.base.params()).enumerate() {
            let [lw, lb, uw, ub] = b.slices();
            let [pw, pb] = p.slices();
            for (lo, up, pt) in [(lw, uw, pw), (lb, ub, pb)] {
                for i in 0..pt.len() {
                    if !(lo[i] <= pt[i] && pt[i] <= up[i]) {
                        return Err(Error::Containment(format!(
                            "slot {slot} entry {i}: [{}, {}] does not contain {}",
                            lo[i], up[i], pt[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean parameter interval width over trainable layers.
    pub fn mean_param_width(&self) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for (b, _) in self.bounds.iter().zip(&self.trainable).filter(|(_, t)| **t) {
            let [lw, lb, uw, ub] = b.slices();
            for (lo, up) in [(lw, uw), (lb, ub)] {
                sum += up.iter().zip(lo).map(|(u, l)| u - l).sum::<f64>();
                count += lo.len();
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Output box for a batch of point inputs.
    pub fn forward(&self, x: &Tensor) -> Result<IntervalActivation> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(IntervalActivation, IntervalCache)> {
        self.forward_from(0, x)
    }

    /// Interval propagation of the point activation `x` entering layer
    /// `start`. Layers before the first trainable one hold point intervals,
    /// so their output equals the underlying network's and can be computed
    /// once with [`Network::forward_range`].
    pub fn forward_from(
        &self,
        start: usize,
        x: &Tensor,
    ) -> Result<(IntervalActivation, IntervalCache)> {
        let layers = self.base.layers();
        if start >= layers.len() {
            return Err(Error::InvalidArgument(format!(
                "start layer {start} out of range"
            )));
        }
        if x.shape().len() != 2 || x.row_len() != self.base.dim_at(start) {
            return Err(Error::shape(
                "interval input",
                format!("[batch, {}]", self.base.dim_at(start)),
                x.shape(),
            ));
        }
        let batch = x.rows();
        let mut inputs = Vec::with_capacity(layers.len() - start);
        let mut cur = LayerInput::Point(x.clone());
        for l in start..layers.len() {
            let next = match &layers[l] {
                LayerSpec::Relu => {
                    let bx = into_box(&cur);
                    IntervalActivation {
                        lower: bx.lower.map(|v| v.max(0.0)),
                        upper: bx.upper.map(|v| v.max(0.0)),
                    }
                }
                LayerSpec::Dropout { .. } => into_box(&cur),
                spec => {
                    let g = spec.geometry().unwrap();
                    let b = &self.bounds[self.base.slot(l).unwrap()];
                    let w = Bounds {
                        lower: b.lower.weight.data(),
                        upper: b.upper.weight.data(),
                    };
                    let bias = Bounds {
                        lower: b.lower.bias.data(),
                        upper: b.upper.bias.data(),
                    };
                    let mut out = IntervalActivation::zeros(&[batch, g.out_dim()]);
                    match &cur {
                        LayerInput::Point(xp) => {
                            for s in 0..batch {
                                linear::forward_interval_point(
                                    &g,
                                    w,
                                    bias,
                                    xp.row(s),
                                    BoundsMut {
                                        lower: out.lower.row_mut(s),
                                        upper: out.upper.row_mut(s),
                                    },
                                );
                            }
                        }
                        LayerInput::Box(xb) => {
                            if xb.lower.data().iter().any(|&v| v < 0.0) {
                                return Err(Error::Containment(format!(
                                    "layer {l} received a box with negative entries; \
                                     interval propagation requires a ReLU before every \
                                     affine layer except the first"
                                )));
                            }
                            for s in 0..batch {
                                linear::forward_interval_nonneg(
                                    &g,
                                    w,
                                    bias,
                                    Bounds {
                                        lower: xb.lower.row(s),
                                        upper: xb.upper.row(s),
                                    },
                                    BoundsMut {
                                        lower: out.lower.row_mut(s),
                                        upper: out.upper.row_mut(s),
                                    },
                                );
                            }
                        }
                    }
                    out
                }
            };
            inputs.push(std::mem::replace(&mut cur, LayerInput::Box(next)));
        }
        let out = match cur {
            LayerInput::Box(b) => b,
            LayerInput::Point(_) => unreachable!("every layer yields a box"),
        };
        out.lower.ensure_finite("interval forward")?;
        out.upper.ensure_finite("interval forward")?;
        if let Some(i) = out
            .lower
            .data()
            .iter()
            .zip(out.upper.data())
            .position(|(l, u)| l > u)
        {
            return Err(Error::Containment(format!(
                "output component {i} has lower bound above upper bound"
            )));
        }
        let cache = IntervalCache {
            start,
            batch,
            dims: (0..=layers.len()).map(|l| self.base.dim_at(l)).collect(),
            inputs,
        };
        Ok((out, cache))
    }

    /// Backpropagates `grad` (derivatives w.r.t. the output lower/upper
    /// bounds) to the interval parameters.
    pub fn backward(&self, cache: &IntervalCache, grad: &IntervalActivation) -> Result<IntervalGrads> {
        let layers = self.base.layers();
        let dims: Vec<usize> = (0..=layers.len()).map(|l| self.base.dim_at(l)).collect();
        if cache.dims != dims || cache.inputs.len() != layers.len() - cache.start {
            return Err(Error::StaleCache("interval cache built for another network"));
        }
        let out_shape = [cache.batch, self.base.output_dim()];
        if grad.lower.shape() != out_shape || grad.upper.shape() != out_shape {
            return Err(Error::shape("interval grad", out_shape, grad.lower.shape()));
        }
        let mut grads: Vec<IntervalParam> =
            self.base.params().iter().map(IntervalParam::zeros_like).collect();
        let mut g = grad.clone();
        for l in (cache.start..layers.len()).rev() {
            let input = &cache.inputs[l - cache.start];
            g = match &layers[l] {
                LayerSpec::Relu => {
                    let bx = match input {
                        LayerInput::Box(b) => b.clone(),
                        LayerInput::Point(p) => IntervalActivation::point(p),
                    };
                    IntervalActivation {
                        lower: bx.lower.zip_map(&g.lower, relu_grad)?,
                        upper: bx.upper.zip_map(&g.upper, relu_grad)?,
                    }
                }
                LayerSpec::Dropout { .. } => g,
                spec => {
                    let geom = spec.geometry().unwrap();
                    let slot = self.base.slot(l).unwrap();
                    let b = &self.bounds[slot];
                    let [glw, glb, guw, gub] = grads[slot].slices_mut();
                    match input {
                        LayerInput::Point(xp) => {
                            for s in 0..cache.batch {
                                linear::backward_interval_point(
                                    &geom,
                                    xp.row(s),
                                    Bounds {
                                        lower: g.lower.row(s),
                                        upper: g.upper.row(s),
                                    },
                                    BoundsMut {
                                        lower: &mut *glw,
                                        upper: &mut *guw,
                                    },
                                    BoundsMut {
                                        lower: &mut *glb,
                                        upper: &mut *gub,
                                    },
                                );
                            }
                            // nothing upstream of a point input needs a gradient
                            break;
                        }
                        LayerInput::Box(xb) => {
                            let need_input = l > cache.start;
                            let mut gx = IntervalActivation::zeros(&[cache.batch, geom.in_dim()]);
                            for s in 0..cache.batch {
                                let (gxl, gxu) = (gx.lower.row_mut(s), gx.upper.row_mut(s));
                                linear::backward_interval_nonneg(
                                    &geom,
                                    Bounds {
                                        lower: b.lower.weight.data(),
                                        upper: b.upper.weight.data(),
                                    },
                                    Bounds {
                                        lower: xb.lower.row(s),
                                        upper: xb.upper.row(s),
                                    },
                                    Bounds {
                                        lower: g.lower.row(s),
                                        upper: g.upper.row(s),
                                    },
                                    BoundsMut {
                                        lower: &mut *glw,
                                        upper: &mut *guw,
                                    },
                                    BoundsMut {
                                        lower: &mut *glb,
                                        upper: &mut *gub,
                                    },
                                    need_input.then_some(BoundsMut {
                                        lower: gxl,
                                        upper: gxu,
                                    }),
                                );
                            }
                            gx
                        }
                    }
                }
            };
        }
        Ok(IntervalGrads { params: grads })
    }

    /// Output interval width, the per-component uncertainty score.
    pub fn uncertainty(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.width())
    }
}

fn into_box(x: &LayerInput) -> IntervalActivation {
    match x {
        LayerInput::Point(p) => IntervalActivation::point(p),
        LayerInput::Box(b) => b.clone(),
    }
}

fn relu_grad(x: f64, g: f64) -> f64 {
    if x > 0.0 {
        g
    } else {
        0.0
    }
}

/// `mean_batch sum_c [ max(y - upper, 0)^2 + max(lower - y, 0)^2 + beta (upper - lower) ]`
pub fn interval_loss(out: &IntervalActivation, y: &Tensor, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tightness beta must be positive, got {beta}"
        )));
    }
    Ok(interval_loss_grad(out, y, beta)?.0)
}

/// Loss value and its derivatives w.r.t. the output bounds. Accepts
/// `beta = 0` for the pure coverage term.
pub fn interval_loss_grad(
    out: &IntervalActivation,
    y: &Tensor,
    beta: f64,
) -> Result<(f64, IntervalActivation)> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tightness beta must be nonnegative, got {beta}"
        )));
    }
    out.lower.expect_same_shape(y, "interval loss")?;
    out.upper.expect_same_shape(y, "interval loss")?;
    let batch = y.rows() as f64;
    let mut grad = IntervalActivation::zeros(y.shape());
    let mut loss = 0.0;
    let it = out
        .lower
        .data()
        .iter()
        .zip(out.upper.data())
        .zip(y.data())
        .zip(grad.lower.data_mut().iter_mut().zip(grad.upper.data_mut()));
    for (((&lo, &up), &t), (gl, gu)) in it {
        let above = (t - up).max(0.0);
        let below = (lo - t).max(0.0);
        loss += above * above + below * below + beta * (up - lo);
        *gu = (-2.0 * above + beta) / batch;
        *gl = (2.0 * below - beta) / batch;
    }
    Ok((loss / batch, grad))
}

/// Loss and parameter gradients for the pass recorded in `cache`.
pub fn interval_backward(
    inn: &IntervalNetwork,
    out: &IntervalActivation,
    cache: &IntervalCache,
    y: &Tensor,
    beta: f64,
) -> Result<(f64, IntervalGrads)> {
    let (loss, g) = interval_loss_grad(out, y, beta)?;
    Ok((loss, inn.backward(cache, &g)?))
}

/// Tightness heuristic: the underlying network's mean absolute error.
pub fn beta_from_mae(base: &Network, data: &Samples) -> Result<f64> {
    let pred = base.forward(&data.inputs)?;
    let mae = pred
        .data()
        .iter()
        .zip(data.targets.data())
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mae)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta: f64,
    pub batch: usize,
    pub mask: LayerMask,
    pub seed: u64,
    /// Abort when the mean output width of a batch exceeds this.
    pub max_mean_width: f64,
}

impl Default for InnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-5,
            beta: 2e-3,
            batch: 256,
            mask: LayerMask::All,
            seed: 0,
            max_mean_width: 1e3,
        }
    }
}

/// Progress report handed to the training observer after every step.
#[derive(Clone, Copy, Debug)]
pub struct InnStep {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub mean_width: f64,
}

const SHUFFLE_TAG: u64 = 0x1AA;

/// Trains interval bounds around the frozen `base` on `data`.
///
/// Starts from point intervals, minimizes [`interval_loss`] with Adam on the
/// masked layers, and projects back onto the containment constraint after
/// every step. `observer` sees the network after each projected step; an
/// error from it aborts training.
pub fn train_inn(
    base: &Network,
    data: &Samples,
    cfg: &InnTrainConfig,
    mut observer: Option<&mut dyn FnMut(&InnStep, &IntervalNetwork) -> Result<()>>,
) -> Result<IntervalNetwork> {
    if !(cfg.beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tightness beta must be positive, got {}",
            cfg.beta
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut inn = IntervalNetwork::from_base(base.clone(), &cfg.mask)?;
    let Some(start) = inn.first_trainable_layer() else {
        return Ok(inn);
    };
    if cfg.epochs == 0 {
        return Ok(inn);
    }
    let prefix = base.forward_range(&data.inputs, 0..start)?;
    let slots: Vec<usize> = (0..inn.bounds.len()).filter(|&s| inn.trainable[s]).collect();
    let sizes: Vec<usize> = slots
        .iter()
        .flat_map(|&s| inn.bounds[s].slices().map(<[f64]>::len))
        .collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &sizes)?;

    let m = data.len();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = permutation(
            &mut stream_rng(subseed(cfg.seed, SHUFFLE_TAG), epoch as u64),
            m,
        );
        for chunk in order.chunks(cfg.batch) {
            let xb = prefix.select_rows(chunk);
            let yb = data.targets.select_rows(chunk);
            let (out, cache) = inn.forward_from(start, &xb)?;
            let (loss, grads) = interval_backward(&inn, &out, &cache, &yb, cfg.beta)?;
            let mean_width = out.width().mean();
            if !loss.is_finite() || !(mean_width <= cfg.max_mean_width) {
                return Err(Error::Divergence(format!(
                    "epoch {epoch} step {step}: mean output width {mean_width:.3e} exceeds \
                     {:.1e} (loss {loss:.3e}); lower the learning rate or restrict interval \
                     training to the last layers",
                    cfg.max_mean_width
                )));
            }
            {
                let grad_slices: Vec<&[f64]> =
                    slots.iter().flat_map(|&s| grads.params[s].slices()).collect();
                let mut params: Vec<&mut [f64]> = Vec::with_capacity(sizes.len());
                for (s, b) in inn.bounds.iter_mut().enumerate() {
                    if inn.trainable[s] {
                        params.extend(b.slices_mut());
                    }
                }
                adam.step(&mut params, &grad_slices)?;
            }
            inn.project_containment();
            if let Some(obs) = observer.as_deref_mut() {
                obs(
                    &InnStep {
                        epoch,
                        step,
                        loss,
                        mean_width,
                    },
                    &inn,
                )?;
            }
            step += 1;
        }
        log::debug!("inn epoch {epoch}: {} steps", step);
    }
    Ok(inn)
}
