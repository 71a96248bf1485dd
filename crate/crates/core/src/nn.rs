//! A minimal trainable-layer kernel: dense layers, sigmoid/tanh, Huber and
//! negative-log-likelihood losses, plain SGD, and a central finite-difference
//! gradient checker. Every head in the crate is hand-composed from these.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clamp applied before logs; Noisy-Or products can saturate.
pub const NLL_EPS: f64 = 1e-7;

/// Dense layer with row-major `out×in` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Symmetric uniform init, weights in [-a, a] with a = sqrt(6/(in+out)),
    /// zero bias.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.gen_range(-a..a)).collect();
        LinearLayer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = self.bias.clone();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            y[o] += acc;
        }
        y
    }

    /// Accumulates parameter gradients for upstream `dy` at input `x` and
    /// returns the input gradient.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut LayerGrad) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(dy.len(), self.out_dim);
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let g = dy[o];
            grad.db[o] += g;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.dw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += row[i] * g;
            }
        }
        dx
    }

    pub fn check_compatible(&self, other: &LinearLayer) -> Result<()> {
        if self.in_dim != other.in_dim || self.out_dim != other.out_dim {
            return Err(Error::shape(
                format!("{}x{}", self.out_dim, self.in_dim),
                format!("{}x{}", other.out_dim, other.in_dim),
            ));
        }
        Ok(())
    }
}

/// Gradient buffer matching one [`LinearLayer`].
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &LinearLayer) -> Self {
        LayerGrad {
            dw: vec![0.0; layer.weights.len()],
            db: vec![0.0; layer.bias.len()],
        }
    }
}

pub fn tanh_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Backward through tanh given its *output* y.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(v, g)| g * (1.0 - v * v)).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn sigmoid_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| sigmoid(*v)).collect()
}

/// Backward through sigmoid given its *output* y.
pub fn sigmoid_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(v, g)| g * v * (1.0 - v)).collect()
}

/// Huber loss and its derivative: quadratic inside |δ|<1, linear outside,
/// derivative clamped to [-1, 1]. C¹ at the knee.
pub fn huber(delta: f64) -> (f64, f64) {
    if delta.abs() < 1.0 {
        (0.5 * delta * delta, delta)
    } else {
        (delta.abs() - 0.5, delta.signum())
    }
}

/// Binary negative log likelihood and its derivative w.r.t. p. The
/// probability is clamped to [ε, 1-ε] first; in the clamped region the loss
/// is constant in p, so the reported derivative is 0 there.
pub fn nll(y: f64, p: f64) -> (f64, f64) {
    debug_assert!(y == 0.0 || y == 1.0);
    let pc = p.clamp(NLL_EPS, 1.0 - NLL_EPS);
    let loss = -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln();
    let d = if p < NLL_EPS || p > 1.0 - NLL_EPS {
        0.0
    } else {
        -y / pc + (1.0 - y) / (1.0 - pc)
    };
    (loss, d)
}

/// Named collection of layers plus metadata; the on-disk model format.
/// JSON with explicit layer names, shapes, row-major weight arrays, and the
/// init seed. Save → load → save is byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBundle {
    pub version: u32,
    pub variant: String,
    pub seed: u64,
    #[serde(default)]
    pub dims: BTreeMap<String, u64>,
    pub layers: BTreeMap<String, LinearLayer>,
}

impl ParamBundle {
    pub fn new(variant: impl Into<String>, seed: u64) -> Self {
        ParamBundle {
            version: 1,
            variant: variant.into(),
            seed,
            dims: BTreeMap::new(),
            layers: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, layer: LinearLayer) {
        self.layers.insert(name.into(), layer);
    }

    pub fn layer(&self, name: &str) -> Result<&LinearLayer> {
        self.layers
            .get(name)
            .ok_or_else(|| Error::Config(format!("model has no layer named {:?}", name)))
    }

    pub fn layer_mut(&mut self, name: &str) -> Result<&mut LinearLayer> {
        self.layers
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("model has no layer named {:?}", name)))
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .values()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Gradients for a [`ParamBundle`], keyed by layer name.
#[derive(Debug, Clone)]
pub struct GradBundle {
    pub layers: BTreeMap<String, LayerGrad>,
}

impl GradBundle {
    pub fn zeros_like(params: &ParamBundle) -> Self {
        GradBundle {
            layers: params
                .layers
                .iter()
                .map(|(n, l)| (n.clone(), LayerGrad::zeros_like(l)))
                .collect(),
        }
    }

    pub fn layer_mut(&mut self, name: &str) -> &mut LayerGrad {
        self.layers
            .get_mut(name)
            .unwrap_or_else(|| panic!("gradient bundle has no layer {:?}", name))
    }

    pub fn scale(&mut self, f: f64) {
        for g in self.layers.values_mut() {
            for v in &mut g.dw {
                *v *= f;
            }
            for v in &mut g.db {
                *v *= f;
            }
        }
    }
}

/// θ ← θ − lr·g for every layer named in `grads`. Layers of `params` without
/// a gradient entry are left untouched (frozen).
pub fn sgd_step(params: &mut ParamBundle, grads: &GradBundle, lr: f64) -> Result<()> {
    for (name, g) in &grads.layers {
        let layer = params.layer_mut(name)?;
        if g.dw.len() != layer.weights.len() || g.db.len() != layer.bias.len() {
            return Err(Error::shape(
                format!("{}+{} params in {}", layer.weights.len(), layer.bias.len(), name),
                format!("{}+{} grads", g.dw.len(), g.db.len()),
            ));
        }
        for (w, d) in layer.weights.iter_mut().zip(&g.dw) {
            *w -= lr * d;
        }
        for (b, d) in layer.bias.iter_mut().zip(&g.db) {
            *b -= lr * d;
        }
    }
    Ok(())
}

/// Central finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Compares an analytic gradient against central finite differences of the
/// loss, returning the max relative error over every parameter. 0.0 for a
/// parameterless model (vacuous pass).
pub fn grad_check<F>(mut loss: F, params: &ParamBundle, analytic: &GradBundle, step: f64) -> f64
where
    F: FnMut(&ParamBundle) -> f64,
{
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    let names: Vec<String> = params.layers.keys().cloned().collect();
    for name in &names {
        let n_w = params.layers[name].weights.len();
        let n_b = params.layers[name].bias.len();
        for idx in 0..n_w + n_b {
            let read = |p: &ParamBundle| {
                let l = &p.layers[name];
                if idx < n_w {
                    l.weights[idx]
                } else {
                    l.bias[idx - n_w]
                }
            };
            let write = |p: &mut ParamBundle, v: f64| {
                let l = p.layers.get_mut(name).unwrap();
                if idx < n_w {
                    l.weights[idx] = v;
                } else {
                    l.bias[idx - n_w] = v;
                }
            };
            let orig = read(params);
            write(&mut probe, orig + step);
            let up = loss(&probe);
            write(&mut probe, orig - step);
            let down = loss(&probe);
            write(&mut probe, orig);
            let numeric = (up - down) / (2.0 * step);
            let a = analytic
                .layers
                .get(name)
                .map(|g| if idx < n_w { g.dw[idx] } else { g.db[idx - n_w] })
                .unwrap_or(0.0);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
