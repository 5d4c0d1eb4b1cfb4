//! Point-valued feed-forward networks: layer specs, forward/backward passes.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linear::{self, Geometry};
use crate::rng::{standard_normal, SeededRng};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Stride 1, zero "same" padding, odd kernel.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        len: usize,
    },
    Relu,
    /// Inverted dropout: survivors are scaled by `1 / (1 - p)` in training.
    Dropout {
        p: f64,
    },
}

impl LayerSpec {
    /// Affine geometry, `None` for parameter-free layers.
    pub fn geometry(&self) -> Option<Geometry> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some(Geometry {
                in_ch: inputs,
                out_ch: outputs,
                kernel: 1,
                len: 1,
            }),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                len,
            } => Some(Geometry {
                in_ch: in_channels,
                out_ch: out_channels,
                kernel,
                len,
            }),
            LayerSpec::Relu | LayerSpec::Dropout { .. } => None,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        self.geometry().is_some()
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => Err(Error::InvalidArgument(
                format!("dropout probability {p} outside [0, 1)"),
            )),
            LayerSpec::Conv1d { kernel, .. } if kernel % 2 == 0 => Err(Error::InvalidArgument(
                format!("conv1d kernel {kernel} must be odd for same padding"),
            )),
            _ => match self.geometry() {
                Some(g) if g.in_ch == 0 || g.out_ch == 0 || g.len == 0 || g.kernel == 0 => Err(
                    Error::InvalidArgument(format!("degenerate layer {self:?}")),
                ),
                _ => Ok(()),
            },
        }
    }

    /// Output feature count for a given input feature count.
    fn output_dim(&self, input: usize) -> Result<usize> {
        match self.geometry() {
            Some(g) if g.in_dim() != input => Err(Error::shape("layer input", g.in_dim(), input)),
            Some(g) => Ok(g.out_dim()),
            None => Ok(input),
        }
    }
}

/// Weights `[out_ch, in_ch, kernel]` (dense: `[out, in, 1]`) and bias `[out_ch]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn zeros(g: &Geometry) -> Self {
        Self {
            weight: Tensor::zeros(&[g.out_ch, g.in_ch, g.kernel]),
            bias: Tensor::zeros(&[g.out_ch]),
        }
    }

    pub fn slices(&self) -> [&[f64]; 2] {
        [self.weight.data(), self.bias.data()]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.data_mut(), self.bias.data_mut()]
    }

    fn matches(&self, g: &Geometry) -> bool {
        self.weight.shape() == [g.out_ch, g.in_ch, g.kernel] && self.bias.shape() == [g.out_ch]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    /// Parameter slot of each layer.
    slots: Vec<Option<usize>>,
    /// `dims[l]` is the input width of layer `l`; the last entry is the output width.
    dims: Vec<usize>,
}

/// Activations recorded by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    dims: Vec<usize>,
    batch: usize,
    /// Input of every layer.
    inputs: Vec<Tensor>,
    /// Per-element dropout multipliers (0 or `1/(1-p)`), per dropout layer.
    masks: Vec<Option<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: Vec<LayerParams>,
    pub input: Tensor,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.params.iter().flat_map(|p| p.slices()).collect()
    }
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>, params: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        let mut dims = vec![input_dim];
        let mut slots = Vec::with_capacity(layers.len());
        let mut next = 0;
        for layer in &layers {
            layer.validate()?;
            let d = layer.output_dim(*dims.last().unwrap())?;
            dims.push(d);
            match layer.geometry() {
                Some(g) => {
                    let p = params
                        .get(next)
                        .ok_or_else(|| Error::shape("network params", next + 1, params.len()))?;
                    if !p.matches(&g) {
                        return Err(Error::shape(
                            "layer params",
                            [g.out_ch, g.in_ch, g.kernel],
                            p.weight.shape(),
                        ));
                    }
                    slots.push(Some(next));
                    next += 1;
                }
                None => slots.push(None),
            }
        }
        if next != params.len() {
            return Err(Error::shape("network params", next, params.len()));
        }
        if !layers.last().unwrap().is_parameterized() {
            return Err(Error::InvalidArgument(
                "final layer must be dense or conv1d".into(),
            ));
        }
        Ok(Self {
            input_dim,
            layers,
            params,
            slots,
            dims,
        })
    }

    /// He-normal weights, zero biases.
    pub fn init(input_dim: usize, layers: Vec<LayerSpec>, rng: &mut SeededRng) -> Result<Self> {
        let params = layers
            .iter()
            .filter_map(LayerSpec::geometry)
            .map(|g| {
                let mut p = LayerParams::zeros(&g);
                let std = (2.0 / (g.in_ch * g.kernel) as f64).sqrt();
                for w in p.weight.data_mut() {
                    *w = std * standard_normal(rng);
                }
                p
            })
            .collect();
        Self::new(input_dim, layers, params)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    /// Parameter slot of layer `l`.
    pub fn slot(&self, l: usize) -> Option<usize> {
        self.slots[l]
    }

    /// Input width of layer `l` (`l == layers().len()` gives the output width).
    pub fn dim_at(&self, l: usize) -> usize {
        self.dims[l]
    }

    /// Layer index of parameter slot `slot`.
    pub fn layer_of_slot(&self, slot: usize) -> usize {
        self.slots
            .iter()
            .position(|s| *s == Some(slot))
            .expect("slot out of range")
    }

    pub fn num_param_layers(&self) -> usize {
        self.params.len()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Dropout { .. }))
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    /// Flat parameter views in slot order, weight before bias.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.params.iter_mut().flat_map(|p| p.slices_mut()).collect()
    }

    fn check_input(&self, x: &Tensor, l: usize) -> Result<()> {
        if x.shape().len() != 2 || x.row_len() != self.dims[l] {
            return Err(Error::shape(
                "network input",
                format!("[batch, {}]", self.dims[l]),
                x.shape(),
            ));
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout is the identity).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_range(x, 0..self.layers.len())
    }

    /// Inference-mode evaluation of layers `range` only.
    pub fn forward_range(&self, x: &Tensor, range: Range<usize>) -> Result<Tensor> {
        self.check_input(x, range.start)?;
        let mut cur = x.clone();
        for l in range {
            cur = self.apply(l, &cur, None)?.0;
        }
        cur.ensure_finite("forward")?;
        Ok(cur)
    }

    /// Forward pass that records what [`Network::backward`] needs. Passing a
    /// generator switches dropout to training mode.
    pub fn forward_cached(
        &self,
        x: &Tensor,
        mut dropout_rng: Option<&mut SeededRng>,
    ) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x, 0)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in 0..self.layers.len() {
            let (next, mask) = self.apply(l, &cur, dropout_rng.as_deref_mut())?;
            inputs.push(cur);
            masks.push(mask);
            cur = next;
        }
        cur.ensure_finite("forward")?;
        let cache = ForwardCache {
            dims: self.dims.clone(),
            batch: x.rows(),
            inputs,
            masks,
        };
        Ok((cur, cache))
    }

    fn apply(
        &self,
        l: usize,
        x: &Tensor,
        rng: Option<&mut SeededRng>,
    ) -> Result<(Tensor, Option<Vec<f64>>)> {
        let batch = x.rows();
        match &self.layers[l] {
            LayerSpec::Relu => Ok((x.map(|v| if v > 0.0 { v } else { 0.0 }), None)),
            LayerSpec::Dropout { p } => match rng {
                Some(rng) => {
                    let keep = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                        .collect();
                    let mut y = x.clone();
                    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Ok((y, Some(mask)))
                }
                None => Ok((x.clone(), None)),
            },
            spec => {
                let g = spec.geometry().unwrap();
                let p = &self.params[self.slots[l].unwrap()];
                let mut y = Tensor::zeros(&[batch, g.out_dim()]);
                for b in 0..batch {
                    linear::forward(&g, p.weight.data(), p.bias.data(), x.row(b), y.row_mut(b));
                }
                Ok((y, None))
            }
        }
    }

    /// Gradients of a scalar loss given `grad_out = dL/dy` for the pass that
    /// produced `cache`. The ReLU subgradient at 0 is 0.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
        if cache.dims != self.dims || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache("forward cache built for another architecture"));
        }
        if grad_out.shape() != [cache.batch, self.output_dim()] {
            return Err(Error::shape(
                "backward grad_out",
                [cache.batch, self.output_dim()],
                grad_out.shape(),
            ));
        }
        let mut grads: Vec<LayerParams> = self
            .layers
            .iter()
            .filter_map(LayerSpec::geometry)
            .map(|g| LayerParams::zeros(&g))
            .collect();
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let x = &cache.inputs[l];
            g = match &self.layers[l] {
                LayerSpec::Relu => x.zip_map(&g, |xv, gv| if xv > 0.0 { gv } else { 0.0 })?,
                LayerSpec::Dropout { .. } => match &cache.masks[l] {
                    Some(mask) => {
                        let mut out = g;
                        for (v, m) in out.data_mut().iter_mut().zip(mask) {
                            *v *= m;
                        }
                        out
                    }
                    None => g,
                },
                spec => {
                    let geom = spec.geometry().unwrap();
                    let slot = self.slots[l].unwrap();
                    let p = &self.params[slot];
                    let gp = &mut grads[slot];
                    let mut gx = Tensor::zeros(&[cache.batch, geom.in_dim()]);
                    let (gw, gb) = {
                        let [w, b] = gp.slices_mut();
                        (w, b)
                    };
                    for b in 0..cache.batch {
                        linear::backward(
                            &geom,
                            p.weight.data(),
                            x.row(b),
                            g.row(b),
                            gw,
                            gb,
                            Some(gx.row_mut(b)),
                        );
                    }
                    gx
                }
            };
        }
        Ok(Gradients {
            params: grads,
            input: g,
        })
    }
}
