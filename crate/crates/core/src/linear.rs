//! Per-sample kernels for the two affine layer kinds.
//!
//! A dense layer is a 1D convolution with kernel size 1 over a length-1
//! signal, so one geometry covers both. Weights are `[out_ch, in_ch, kernel]`,
//! activations channel-major `[ch, len]`, stride 1, zero "same" padding.
//!
//! All variants accumulate each output as `bias + sum_i sum_k term(i, k)` in
//! the same order. With point intervals the interval kernels therefore
//! reproduce the point kernel bit for bit.

use std::cell::Cell;

thread_local! {
    static EVALUATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of single-sample affine evaluations run on this thread so far.
/// An interval kernel counts two: one per output bound.
pub fn affine_evaluations() -> u64 {
    EVALUATIONS.with(Cell::get)
}

fn count(n: u64) {
    EVALUATIONS.with(|c| c.set(c.get() + n));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub len: usize,
}

/// Lower/upper slice pair.
#[derive(Clone, Copy)]
pub struct Bounds<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

pub struct BoundsMut<'a> {
    pub lower: &'a mut [f64],
    pub upper: &'a mut [f64],
}

impl Geometry {
    pub fn in_dim(&self) -> usize {
        self.in_ch * self.len
    }

    pub fn out_dim(&self) -> usize {
        self.out_ch * self.len
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel
    }

    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    /// Output positions `t` for which `t + shift` is a valid input index.
    #[inline]
    fn span(&self, k: usize) -> (isize, usize, usize) {
        let shift = k as isize - self.pad();
        let len = self.len as isize;
        let t0 = (-shift).max(0);
        let t1 = (len - shift).min(len);
        if t1 <= t0 {
            (shift, 0, 0)
        } else {
            (shift, t0 as usize, t1 as usize)
        }
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, k: usize) -> usize {
        (o * self.in_ch + i) * self.kernel + k
    }
}

#[inline]
fn shifted(x: &[f64], shift: isize, t0: usize, t1: usize) -> &[f64] {
    let a = (t0 as isize + shift) as usize;
    &x[a..a + (t1 - t0)]
}

#[inline]
fn shifted_mut(x: &mut [f64], shift: isize, t0: usize, t1: usize) -> &mut [f64] {
    let a = (t0 as isize + shift) as usize;
    &mut x[a..a + (t1 - t0)]
}

/// Dot product with four independent partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn forward(g: &Geometry, w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    count(1);
    let n = g.len;
    for o in 0..g.out_ch {
        let yo = &mut y[o * n..(o + 1) * n];
        yo.fill(b[o]);
        for i in 0..g.in_ch {
            let xi = &x[i * n..(i + 1) * n];
            for k in 0..g.kernel {
                let wv = w[g.widx(o, i, k)];
                let (s, t0, t1) = g.span(k);
                for (yv, xv) in yo[t0..t1].iter_mut().zip(shifted(xi, s, t0, t1)) {
                    *yv += wv * xv;
                }
            }
        }
    }
}

/// Accumulates parameter gradients into `gw`/`gb` and, when requested, the
/// input gradient into `gx`.
pub fn backward(
    g: &Geometry,
    w: &[f64],
    x: &[f64],
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut gx: Option<&mut [f64]>,
) {
    let n = g.len;
    for o in 0..g.out_ch {
        let go = &gy[o * n..(o + 1) * n];
        gb[o] += go.iter().sum::<f64>();
        for i in 0..g.in_ch {
            let xi = &x[i * n..(i + 1) * n];
            for k in 0..g.kernel {
                let wi = g.widx(o, i, k);
                let (s, t0, t1) = g.span(k);
                let gsl = &go[t0..t1];
                gw[wi] += dot(gsl, shifted(xi, s, t0, t1));
                if let Some(gx) = gx.as_deref_mut() {
                    let wv = w[wi];
                    let gxi = &mut gx[i * n..(i + 1) * n];
                    for (d, gv) in shifted_mut(gxi, s, t0, t1).iter_mut().zip(gsl) {
                        *d += wv * gv;
                    }
                }
            }
        }
    }
}

/// Interval propagation for a nonnegative input box `[xl, xu]`:
/// the upper bound pairs `max(W_up, 0)` with `xu` and `min(W_up, 0)` with
/// `xl`; the lower bound mirrors this with `W_low`.
pub fn forward_interval_nonneg(
    g: &Geometry,
    w: Bounds,
    b: Bounds,
    x: Bounds,
    y: BoundsMut,
) {
    count(2);
    let n = g.len;
    for o in 0..g.out_ch {
        let yu = &mut y.upper[o * n..(o + 1) * n];
        let yl = &mut y.lower[o * n..(o + 1) * n];
        yu.fill(b.upper[o]);
        yl.fill(b.lower[o]);
        for i in 0..g.in_ch {
            let xl = &x.lower[i * n..(i + 1) * n];
            let xu = &x.upper[i * n..(i + 1) * n];
            for k in 0..g.kernel {
                let wi = g.widx(o, i, k);
                let (s, t0, t1) = g.span(k);
                let wu = w.upper[wi];
                let src = if wu >= 0.0 { xu } else { xl };
                for (yv, xv) in yu[t0..t1].iter_mut().zip(shifted(src, s, t0, t1)) {
                    *yv += wu * xv;
                }
                let wl = w.lower[wi];
                let src = if wl >= 0.0 { xl } else { xu };
                for (yv, xv) in yl[t0..t1].iter_mut().zip(shifted(src, s, t0, t1)) {
                    *yv += wl * xv;
                }
            }
        }
    }
}

/// Backward pass of [`forward_interval_nonneg`]. A weight equal to zero
/// takes the `max(., 0)` branch.
#[allow(clippy::too_many_arguments)]
pub fn backward_interval_nonneg(
    g: &Geometry,
    w: Bounds,
    x: Bounds,
    gy: Bounds,
    gw: BoundsMut,
    gb: BoundsMut,
    gx: Option<BoundsMut>,
) {
    let n = g.len;
    let mut gx = gx;
    for o in 0..g.out_ch {
        let gu = &gy.upper[o * n..(o + 1) * n];
        let gl = &gy.lower[o * n..(o + 1) * n];
        gb.upper[o] += gu.iter().sum::<f64>();
        gb.lower[o] += gl.iter().sum::<f64>();
        for i in 0..g.in_ch {
            let xl = &x.lower[i * n..(i + 1) * n];
            let xu = &x.upper[i * n..(i + 1) * n];
            for k in 0..g.kernel {
                let wi = g.widx(o, i, k);
                let (s, t0, t1) = g.span(k);
                let gus = &gu[t0..t1];
                let gls = &gl[t0..t1];
                let wu = w.upper[wi];
                let wl = w.lower[wi];
                let (su, upper_reads_upper) = if wu >= 0.0 { (xu, true) } else { (xl, false) };
                let (sl, lower_reads_lower) = if wl >= 0.0 { (xl, true) } else { (xu, false) };
                gw.upper[wi] += gus
                    .iter()
                    .zip(shifted(su, s, t0, t1))
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                gw.lower[wi] += gls
                    .iter()
                    .zip(shifted(sl, s, t0, t1))
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                if let Some(gx) = gx.as_mut() {
                    {
                        let dst = if upper_reads_upper {
                            &mut gx.upper[i * n..(i + 1) * n]
                        } else {
                            &mut gx.lower[i * n..(i + 1) * n]
                        };
                        for (d, gv) in shifted_mut(dst, s, t0, t1).iter_mut().zip(gus) {
                            *d += wu * gv;
                        }
                    }
                    let dst = if lower_reads_lower {
                        &mut gx.lower[i * n..(i + 1) * n]
                    } else {
                        &mut gx.upper[i * n..(i + 1) * n]
                    };
                    for (d, gv) in shifted_mut(dst, s, t0, t1).iter_mut().zip(gls) {
                        *d += wl * gv;
                    }
                }
            }
        }
    }
}

/// Interval propagation for a point input of arbitrary sign:
/// `upper = W_up max(x, 0) + W_low min(x, 0) + b_up`,
/// `lower = W_low max(x, 0) + W_up min(x, 0) + b_low`.
pub fn forward_interval_point(g: &Geometry, w: Bounds, b: Bounds, x: &[f64], y: BoundsMut) {
    count(2);
    let n = g.len;
    let pos: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let neg: Vec<f64> = x.iter().map(|&v| v.min(0.0)).collect();
    for o in 0..g.out_ch {
        let yu = &mut y.upper[o * n..(o + 1) * n];
        let yl = &mut y.lower[o * n..(o + 1) * n];
        yu.fill(b.upper[o]);
        yl.fill(b.lower[o]);
        for i in 0..g.in_ch {
            let pi = &pos[i * n..(i + 1) * n];
            let ni = &neg[i * n..(i + 1) * n];
            for k in 0..g.kernel {
                let wi = g.widx(o, i, k);
                let (s, t0, t1) = g.span(k);
                let (wu, wl) = (w.upper[wi], w.lower[wi]);
                let ps = shifted(pi, s, t0, t1);
                let ns = shifted(ni, s, t0, t1);
                for ((yv, p), m) in yu[t0..t1].iter_mut().zip(ps).zip(ns) {
                    *yv += wu * p + wl * m;
                }
                for ((yv, p), m) in yl[t0..t1].iter_mut().zip(ps).zip(ns) {
                    *yv += wl * p + wu * m;
                }
            }
        }
    }
}

/// Parameter gradients of [`forward_interval_point`]. The input is a point
/// value and receives no gradient.
pub fn backward_interval_point(g: &Geometry, x: &[f64], gy: Bounds, gw: BoundsMut, gb: BoundsMut) {
    let n = g.len;
    let pos: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let neg: Vec<f64> = x.iter().map(|&v| v.min(0.0)).collect();
    for o in 0..g.out_ch {
        let gu = &gy.upper[o * n..(o + 1) * n];
        let gl = &gy.lower[o * n..(o + 1) * n];
        gb.upper[o] += gu.iter().sum::<f64>();
        gb.lower[o] += gl.iter().sum::<f64>();
        for i in 0..g.in_ch {
            let pi = &pos[i * n..(i + 1) * n];
            let ni = &neg[i * n..(i + 1) * n];
            for k in 0..g.kernel {
                let wi = g.widx(o, i, k);
                let (s, t0, t1) = g.span(k);
                let ps = shifted(pi, s, t0, t1);
                let ns = shifted(ni, s, t0, t1);
                let (gus, gls) = (&gu[t0..t1], &gl[t0..t1]);
                let mut du = 0.0;
                let mut dl = 0.0;
                for t in 0..gus.len() {
                    du += gus[t] * ps[t] + gls[t] * ns[t];
                    dl += gls[t] * ps[t] + gus[t] * ns[t];
                }
                gw.upper[wi] += du;
                gw.lower[wi] += dl;
            }
        }
    }
}
