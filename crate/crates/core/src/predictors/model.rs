use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    /// Repeats the last observed seasonal block.
    Naive,
    Linear,
    Mlp,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::Config(format!("unknown predictor '{other}'"))),
        }
    }
}

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ShapeEntry {
    fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Single-channel forecaster with a flat weight vector.
///
/// Layouts (row-major, `out x in`): linear `[w: H x L, b: H]`;
/// mlp `[w1: hidden x L, b1: hidden, w2: H x hidden, b2: H]`; naive has no
/// weights and uses `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PredictorParams<T> {
    pub kind: PredictorKind,
    pub input_len: usize,
    pub output_len: usize,
    pub hidden: usize,
    pub period: usize,
    pub weights: Vec<T>,
    pub manifest: Vec<ShapeEntry>,
}

/// Forward intermediates for back-propagation.
#[derive(Debug, Clone)]
pub struct PredictorCache<T> {
    input: Vec<T>,
    pre_relu: Vec<T>,
}

impl<T: Scalar> PredictorParams<T> {
    fn manifest_for(kind: PredictorKind, input_len: usize, output_len: usize, hidden: usize) -> Vec<ShapeEntry> {
        match kind {
            PredictorKind::Naive => Vec::new(),
            PredictorKind::Linear => vec![
                ShapeEntry::new("linear.w", &[output_len, input_len]),
                ShapeEntry::new("linear.b", &[output_len]),
            ],
            PredictorKind::Mlp => vec![
                ShapeEntry::new("mlp.w1", &[hidden, input_len]),
                ShapeEntry::new("mlp.b1", &[hidden]),
                ShapeEntry::new("mlp.w2", &[output_len, hidden]),
                ShapeEntry::new("mlp.b2", &[output_len]),
            ],
        }
    }

    /// Seeded uniform initialization scaled by fan-in; biases start at zero.
    pub fn init(
        kind: PredictorKind,
        input_len: usize,
        output_len: usize,
        hidden: usize,
        period: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_len == 0 || output_len == 0 {
            return Err(Error::arg("predictor lengths must be positive"));
        }
        if kind == PredictorKind::Naive && (period == 0 || period > input_len) {
            return Err(Error::arg(format!(
                "naive predictor period {period} must lie in [1, {input_len}]"
            )));
        }
        if kind == PredictorKind::Mlp && hidden == 0 {
            return Err(Error::arg("mlp hidden width must be positive"));
        }
        let manifest = Self::manifest_for(kind, input_len, output_len, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        for entry in &manifest {
            if entry.shape.len() == 2 {
                let a = 1.0 / (entry.shape[1] as f64).sqrt();
                weights.extend((0..entry.len()).map(|_| T::lit(rng.random_range(-a..a))));
            } else {
                weights.extend(std::iter::repeat_n(T::zero(), entry.len()));
            }
        }
        Ok(Self {
            kind,
            input_len,
            output_len,
            hidden,
            period,
            weights,
            manifest,
        })
    }

    /// Checks the weight vector against the manifest.
    pub fn validate(&self) -> Result<()> {
        let expected = Self::manifest_for(self.kind, self.input_len, self.output_len, self.hidden);
        if expected != self.manifest {
            return Err(Error::Data("predictor manifest does not match its kind and sizes".into()));
        }
        let count: usize = self.manifest.iter().map(ShapeEntry::len).sum();
        if count != self.weights.len() {
            return Err(Error::Data(format!(
                "predictor has {} weights, manifest declares {count}",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("predictor has non-finite weights".into()));
        }
        Ok(())
    }

    fn entry_range(&self, index: usize) -> Range<usize> {
        let start: usize = self.manifest[..index].iter().map(ShapeEntry::len).sum();
        start..start + self.manifest[index].len()
    }

    /// Clipping groups: one per layer (weights and bias together).
    pub fn groups(&self) -> Vec<(&'static str, Range<usize>)> {
        match self.kind {
            PredictorKind::Naive => Vec::new(),
            PredictorKind::Linear => vec![("predictor.linear", 0..self.weights.len())],
            PredictorKind::Mlp => {
                let split = self.entry_range(2).start;
                vec![
                    ("predictor.layer1", 0..split),
                    ("predictor.layer2", split..self.weights.len()),
                ]
            }
        }
    }

    pub fn predict(&self, y: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(y)?.0)
    }

    pub fn forward(&self, y: &[T]) -> Result<(Vec<T>, PredictorCache<T>)> {
        if y.len() != self.input_len {
            return Err(Error::arg(format!(
                "predictor expects {} inputs, got {}",
                self.input_len,
                y.len()
            )));
        }
        let (out, pre_relu) = match self.kind {
            PredictorKind::Naive => {
                let start = self.input_len - self.period;
                let out = (0..self.output_len).map(|h| y[start + h % self.period]).collect();
                (out, Vec::new())
            }
            PredictorKind::Linear => {
                let (w, b) = self.weights.split_at(self.output_len * self.input_len);
                (affine(w, b, y), Vec::new())
            }
            PredictorKind::Mlp => {
                let (w1, rest) = self.weights.split_at(self.hidden * self.input_len);
                let (b1, rest) = rest.split_at(self.hidden);
                let (w2, b2) = rest.split_at(self.output_len * self.hidden);
                let pre = affine(w1, b1, y);
                let act: Vec<T> = pre.iter().map(|v| v.max(T::zero())).collect();
                (affine(w2, b2, &act), pre)
            }
        };
        Ok((
            out,
            PredictorCache {
                input: y.to_vec(),
                pre_relu,
            },
        ))
    }

    /// Returns `(weight gradient, input gradient)` for an output gradient.
    pub fn backward(&self, cache: &PredictorCache<T>, g_out: &[T]) -> (Vec<T>, Vec<T>) {
        let mut g_w = vec![T::zero(); self.weights.len()];
        let g_in = match self.kind {
            PredictorKind::Naive => {
                let mut g = vec![T::zero(); self.input_len];
                let start = self.input_len - self.period;
                for (h, &v) in g_out.iter().enumerate() {
                    g[start + h % self.period] += v;
                }
                g
            }
            PredictorKind::Linear => {
                let n_w = self.output_len * self.input_len;
                let (gw, gb) = g_w.split_at_mut(n_w);
                affine_backward(&self.weights[..n_w], &cache.input, g_out, gw, gb)
            }
            PredictorKind::Mlp => {
                let n1 = self.hidden * self.input_len;
                let n2 = self.output_len * self.hidden;
                let w1 = &self.weights[..n1];
                let w2 = &self.weights[n1 + self.hidden..n1 + self.hidden + n2];
                let act: Vec<T> = cache.pre_relu.iter().map(|v| v.max(T::zero())).collect();
                let (g1, g2) = g_w.split_at_mut(n1 + self.hidden);
                let (gw2, gb2) = g2.split_at_mut(n2);
                let g_act = affine_backward(w2, &act, g_out, gw2, gb2);
                let g_pre: Vec<T> = g_act
                    .iter()
                    .zip(&cache.pre_relu)
                    .map(|(&g, &p)| if p > T::zero() { g } else { T::zero() })
                    .collect();
                let (gw1, gb1) = g1.split_at_mut(n1);
                affine_backward(w1, &cache.input, &g_pre, gw1, gb1)
            }
        };
        (g_w, g_in)
    }
}

fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| bias + crate::scalar::dot(&w[o * n..(o + 1) * n], x))
        .collect()
}

fn affine_backward<T: Scalar>(w: &[T], x: &[T], g_out: &[T], g_w: &mut [T], g_b: &mut [T]) -> Vec<T> {
    let n = x.len();
    let mut g_x = vec![T::zero(); n];
    for (o, &g) in g_out.iter().enumerate() {
        g_b[o] += g;
        let row = &w[o * n..(o + 1) * n];
        let g_row = &mut g_w[o * n..(o + 1) * n];
        for i in 0..n {
            g_row[i] += g * x[i];
            g_x[i] += row[i] * g;
        }
    }
    g_x
}
