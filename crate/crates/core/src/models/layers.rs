//! Building blocks shared by the transformer models.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{ModelError, ParamStore};
use crate::math;
use crate::numerics::{Graph, Tensor, Var, XorShift64};

/// Forward-pass context: the graph being recorded, the parameter values and
/// the dropout source (present only while training).
pub(crate) struct Fwd<'a> {
    pub g: &'a mut Graph,
    store: &'a ParamStore,
    dropout: f64,
    rng: Option<&'a mut XorShift64>,
}

impl<'a> Fwd<'a> {
    pub fn new(
        g: &'a mut Graph,
        store: &'a ParamStore,
        dropout: f64,
        rng: Option<&'a mut XorShift64>,
    ) -> Self {
        Self {
            g,
            store,
            dropout,
            rng,
        }
    }

    pub fn p(&mut self, index: usize) -> Var {
        self.g.param(index, self.store.get(index))
    }

    /// Inverted dropout; identity outside training or when the rate is 0.
    pub fn dropout(&mut self, x: Var) -> Result<Var, ModelError> {
        let p = self.dropout;
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let shape = self.g.shape(x).to_vec();
        let keep = 1.0 / (1.0 - p);
        let n = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
            .collect();
        let m = self.g.leaf(Tensor::new(shape, mask)?);
        Ok(self.g.mul(x, m)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Linear {
    w: usize,
    b: Option<usize>,
}

impl Linear {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut XorShift64,
        name: &str,
        din: usize,
        dout: usize,
        bias: bool,
    ) -> Self {
        let w = store.xavier(format!("{name}.weight"), din, dout, rng);
        let b = bias.then(|| store.constant(format!("{name}.bias"), dout, 0.0));
        Self { w, b }
    }

    pub fn apply(&self, f: &mut Fwd<'_>, x: Var) -> Result<Var, ModelError> {
        let w = f.p(self.w);
        let y = f.g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = f.p(b);
                Ok(f.g.add(y, b)?)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerNorm {
    gamma: usize,
    beta: usize,
}

impl LayerNorm {
    pub fn init(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.constant(format!("{name}.gamma"), width, 1.0),
            beta: store.constant(format!("{name}.beta"), width, 0.0),
        }
    }

    pub fn apply(&self, f: &mut Fwd<'_>, x: Var) -> Result<Var, ModelError> {
        let (gamma, beta) = (f.p(self.gamma), f.p(self.beta));
        Ok(f.g.layer_norm(x, gamma, beta)?)
    }

    /// Layer norm followed by removal of the time mean, so the normalised
    /// seasonal part stays centred.
    pub fn apply_seasonal(&self, f: &mut Fwd<'_>, x: Var) -> Result<Var, ModelError> {
        let normed = self.apply(f, x)?;
        let t = f.g.shape(normed)[0];
        let avg = f.g.leaf(Tensor::full(vec![t, t], 1.0 / t as f64));
        let mean = f.g.matmul(avg, normed)?;
        Ok(f.g.sub(normed, mean)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut XorShift64,
        name: &str,
        d: usize,
        d_ff: usize,
    ) -> Self {
        Self {
            up: Linear::init(store, rng, &format!("{name}.up"), d, d_ff, true),
            down: Linear::init(store, rng, &format!("{name}.down"), d_ff, d, true),
        }
    }

    pub fn apply(&self, f: &mut Fwd<'_>, x: Var) -> Result<Var, ModelError> {
        let h = self.up.apply(f, x)?;
        let h = f.g.gelu(h)?;
        let h = f.dropout(h)?;
        self.down.apply(f, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mixer {
    AutoCorrelation,
    DotProduct { causal: bool },
}

/// Multi-head attention with either mixing rule.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    mixer: Mixer,
    factor: f64,
}

impl Attention {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        store: &mut ParamStore,
        rng: &mut XorShift64,
        name: &str,
        d: usize,
        heads: usize,
        mixer: Mixer,
        factor: f64,
    ) -> Self {
        Self {
            q: Linear::init(store, rng, &format!("{name}.query"), d, d, true),
            k: Linear::init(store, rng, &format!("{name}.key"), d, d, true),
            v: Linear::init(store, rng, &format!("{name}.value"), d, d, true),
            o: Linear::init(store, rng, &format!("{name}.out"), d, d, true),
            heads,
            mixer,
            factor,
        }
    }

    pub fn apply(&self, f: &mut Fwd<'_>, query: Var, source: Var) -> Result<Var, ModelError> {
        let q = self.q.apply(f, query)?;
        let mut k = self.k.apply(f, source)?;
        let mut v = self.v.apply(f, source)?;
        let (tq, d) = (f.g.shape(q)[0], f.g.shape(q)[1]);
        let tk = f.g.shape(k)[0];
        if self.mixer == Mixer::AutoCorrelation && tk != tq {
            // delays are defined on a common length: pad with zeros or truncate
            if tk < tq {
                let zeros = f.g.leaf(Tensor::zeros(vec![tq - tk, d]));
                k = f.g.concat(&[k, zeros], 0)?;
                v = f.g.concat(&[v, zeros], 0)?;
            } else {
                k = f.g.slice(k, 0, 0, tq)?;
                v = f.g.slice(v, 0, 0, tq)?;
            }
        }
        let dh = d / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = f.g.slice(q, 1, h * dh, (h + 1) * dh)?;
            let kh = f.g.slice(k, 1, h * dh, (h + 1) * dh)?;
            let vh = f.g.slice(v, 1, h * dh, (h + 1) * dh)?;
            let out = match self.mixer {
                Mixer::AutoCorrelation => f.g.autocorr_attention(qh, kh, vh, self.factor)?,
                Mixer::DotProduct { causal } => {
                    let kt = f.g.transpose(kh)?;
                    let scores = f.g.matmul(qh, kt)?;
                    let mut scores = f.g.scale(scores, 1.0 / math::sqrt(dh as f64))?;
                    if causal {
                        let tk = f.g.shape(kh)[0];
                        let mask = causal_mask(tq, tk);
                        let m = f.g.leaf(mask);
                        scores = f.g.add(scores, m)?;
                    }
                    let weights = f.g.softmax(scores, 1)?;
                    let weights = f.dropout(weights)?;
                    f.g.matmul(weights, vh)?
                }
            };
            outs.push(out);
        }
        let merged = if outs.len() == 1 {
            outs[0]
        } else {
            f.g.concat(&outs, 1)?
        };
        self.o.apply(f, merged)
    }
}

/// Large negative bias above the diagonal; position `i` sees keys `≤ i`.
fn causal_mask(tq: usize, tk: usize) -> Tensor {
    let mut data = vec![0.0; tq * tk];
    for i in 0..tq {
        for j in i + 1..tk {
            data[i * tk + j] = -1e9;
        }
    }
    Tensor::new(vec![tq, tk], data).expect("shape")
}

/// Sinusoidal positional encoding of shape `(len × d)`.
pub(crate) fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d {
            let pair = (i / 2 * 2) as f64;
            let angle = t as f64 * math::exp(-math::ln(10_000.0) * pair / d as f64);
            data[t * d + i] = if i % 2 == 0 {
                math::sin(angle)
            } else {
                math::cos(angle)
            };
        }
    }
    Tensor::new(vec![len, d], data).expect("shape")
}

/// Value projection plus positional encoding.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Embedding {
    proj: Linear,
}

impl Embedding {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut XorShift64,
        name: &str,
        channels: usize,
        d: usize,
    ) -> Self {
        Self {
            proj: Linear::init(store, rng, name, channels, d, true),
        }
    }

    pub fn apply(&self, f: &mut Fwd<'_>, x: Var) -> Result<Var, ModelError> {
        let h = self.proj.apply(f, x)?;
        let shape = f.g.shape(h).to_vec();
        let pe = f.g.leaf(positional_encoding(shape[0], shape[1]));
        let h = f.g.add(h, pe)?;
        f.dropout(h)
    }
}

/// In-graph series decomposition: `(seasonal, trend)`.
pub(crate) fn decompose(f: &mut Fwd<'_>, x: Var, kernel: usize) -> Result<(Var, Var), ModelError> {
    let trend = f.g.moving_average(x, kernel)?;
    let seasonal = f.g.sub(x, trend)?;
    Ok((seasonal, trend))
}
