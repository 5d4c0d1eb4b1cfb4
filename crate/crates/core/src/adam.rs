//! Adam with bias correction over a list of flat parameter buffers.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// Fresh moments shaped like `sizes` (one entry per parameter buffer).
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self> {
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and nonnegative",
                config.lr
            )));
        }
        Ok(Self {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adam buffers", self.m.len(), params.len()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape("adam buffer", m.len(), (p.len(), g.len())));
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k];
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for j in 0..p.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                let delta = c.lr * mhat / (vhat.sqrt() + c.eps);
                // a signed-zero step would flip -0.0 to +0.0
                if delta != 0.0 {
                    p[j] -= delta;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar Adam written out longhand.
    fn scalar_reference(theta0: f64, grads: &[f64], c: AdamConfig) -> Vec<f64> {
        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        let mut out = Vec::new();
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let mh = m / (1.0 - c.beta1.powi(t));
            let vh = v / (1.0 - c.beta2.powi(t));
            theta -= c.lr * mh / (vh.sqrt() + c.eps);
            out.push(theta);
        }
        out
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let mut st = AdamState::new(AdamConfig::with_lr(0.1), &[1]).unwrap();
        let mut theta = [0.0];
        st.step(&mut [&mut theta[..]], &[&[1.0]]).unwrap();
        // m_hat = v_hat = 1  =>  step = 0.1 / (1 + 1e-8)
        assert!((theta[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-14);
        assert!((theta[0] + 0.099999999).abs() < 1e-12);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(AdamConfig::default(), &[3]).unwrap();
        let mut p = [1.0, -2.0, 3.5];
        st.step(&mut [&mut p[..]], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.5]);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let c = AdamConfig::with_lr(0.05);
        let mut st = AdamState::new(c, &[1]).unwrap();
        let mut p = [0.3];
        let mut got = Vec::new();
        for _ in 0..2 {
            st.step(&mut [&mut p[..]], &[&[0.7]]).unwrap();
            got.push(p[0]);
        }
        assert_eq!(got, scalar_reference(0.3, &[0.7, 0.7], c));
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let mut st = AdamState::new(AdamConfig::with_lr(0.0), &[4]).unwrap();
        let orig = [1.0e-300, -0.0, 7.25, -3.0];
        let mut p = orig;
        for _ in 0..5 {
            st.step(&mut [&mut p[..]], &[&[1.0, -2.0, 0.5, 1e10]]).unwrap();
        }
        for (a, b) in p.iter().zip(&orig) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_misaligned_buffers() {
        let mut st = AdamState::new(AdamConfig::default(), &[2]).unwrap();
        let mut p = [0.0; 3];
        assert!(st.step(&mut [&mut p[..]], &[&[0.0; 3]]).is_err());
        assert!(AdamState::new(AdamConfig::with_lr(-1.0), &[1]).is_err());
    }
}
