//! Chronological splitting, windowing, training with Adam and early
//! stopping, and evaluation metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::models::{Model, ModelError};
use crate::numerics::{Graph, Tensor, XorShift64};
use crate::preprocess::{ScalerParams, SeriesFrame};
use crate::{math, Instant};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("split fractions {0:?} must be positive and sum to 1")]
    Fractions([f64; 3]),
    #[error("{rows} rows is too few; at least {min} are needed")]
    TooFewRows { rows: usize, min: usize },
    #[error("no windows to {0}")]
    NoWindows(&'static str),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("test window at {test} does not follow the last training instant {train}")]
    Leakage { train: Instant, test: Instant },
    #[error("frame has {found} columns, model expects {expected}")]
    Columns { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<crate::numerics::NumericsError> for TrainError {
    fn from(e: crate::numerics::NumericsError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Contiguous chronological split fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| x.is_nan() || *x <= 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TrainError::Fractions(f));
        }
        Ok(())
    }

    /// Row ranges; validation and test get `floor(rows · fraction)`, training
    /// takes the remainder.
    pub fn ranges(&self, rows: usize) -> Result<[Range<usize>; 3], TrainError> {
        self.validate()?;
        let part = |f: f64| math::floor(rows as f64 * f + 1e-9) as usize;
        let (val, test) = (part(self.val), part(self.test));
        let train = rows - val - test;
        Ok([0..train, train..train + val, train + val..rows])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: SeriesFrame,
    pub val: SeriesFrame,
    pub test: SeriesFrame,
    pub ranges: [Range<usize>; 3],
}

/// Splits `frame` chronologically; needs at least `L + H + 3` rows.
pub fn split(
    frame: &SeriesFrame,
    spec: &SplitSpec,
    input_len: usize,
    horizon: usize,
) -> Result<Splits, TrainError> {
    let min = input_len + horizon + 3;
    if frame.rows() < min {
        return Err(TrainError::TooFewRows {
            rows: frame.rows(),
            min,
        });
    }
    let ranges = spec.ranges(frame.rows())?;
    let part = |r: &Range<usize>| frame.slice_rows(r.clone()).expect("range within frame");
    Ok(Splits {
        train: part(&ranges[0]),
        val: part(&ranges[1]),
        test: part(&ranges[2]),
        ranges,
    })
}

/// One supervised example: `target` starts the step after `context` ends.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub context: Tensor,
    pub target: Tensor,
    pub context_times: Vec<Instant>,
    pub target_times: Vec<Instant>,
}

/// Number of windows [`make_windows`] yields.
pub fn window_count(rows: usize, input_len: usize, horizon: usize, stride: usize) -> usize {
    if stride == 0 || rows < input_len + horizon {
        return 0;
    }
    (rows - input_len - horizon) / stride + 1
}

/// Sliding windows within one frame; windows never cross its ends.
pub fn make_windows(
    frame: &SeriesFrame,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Vec<WindowSample> {
    let cols = frame.cols();
    let n = window_count(frame.rows(), input_len, horizon, stride);
    let block = |start: usize, len: usize| {
        Tensor::new(
            vec![len, cols],
            frame.values[start * cols..(start + len) * cols].to_vec(),
        )
        .expect("window shape")
    };
    (0..n)
        .map(|i| {
            let s = i * stride;
            let t = s + input_len;
            WindowSample {
                context: block(s, input_len),
                target: block(t, horizon),
                context_times: frame.timestamps[s..t].to_vec(),
                target_times: frame.timestamps[t..t + horizon].to_vec(),
            }
        })
        .collect()
}

/// Fails unless every test-window instant follows every training instant.
pub fn check_no_leakage(train: &SeriesFrame, test: &[WindowSample]) -> Result<(), TrainError> {
    let Some(&last) = train.timestamps.last() else {
        return Ok(());
    };
    for w in test {
        for &t in w.context_times.iter().chain(&w.target_times) {
            if t <= last {
                return Err(TrainError::Leakage {
                    train: last,
                    test: t,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            patience: 10,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(Self::BETA2, f64::from(self.step));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (math::sqrt(vhat) + Self::EPS);
        }
    }
}

/// Mean per-window MSE of `model` over `windows`, in scaled units.
pub fn mean_loss(model: &Model, windows: &[WindowSample]) -> Result<f64, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::NoWindows("score"));
    }
    let mut total = 0.0;
    for w in windows {
        let p = model.predict(&w.context)?;
        total += mse(p.data(), w.target.data());
    }
    Ok(total / windows.len() as f64)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Fits `model` with Adam on shuffled mini-batches, stopping once the
/// validation loss has not improved for `patience` epochs. With no
/// validation windows the training loss drives early stopping.
pub fn train(
    model: &Model,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    if !model.has_parameters() || opts.epochs == 0 {
        return Ok(TrainOutcome {
            model: model.clone(),
            history: Vec::new(),
            best_epoch: None,
        });
    }
    if train_windows.is_empty() {
        return Err(TrainError::NoWindows("train on"));
    }
    if val_windows.is_empty() {
        log::warn!("no validation windows; early stopping uses the training loss");
    }
    let mut rng = XorShift64::new(opts.seed);
    let mut current = model.clone();
    let mut flat = current.params().flatten();
    let mut adam = Adam::new(flat.len(), opts.learning_rate);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let batch = opts.batch_size.max(1);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 0..opts.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let mut g = Graph::new();
            let mut losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let w = &train_windows[i];
                let out = current.forward(&mut g, &w.context, Some(&mut rng))?;
                let t = g.leaf(w.target.clone());
                losses.push(g.mse_loss(out, t)?);
            }
            let mut sum = losses[0];
            for &l in &losses[1..] {
                sum = g.add(sum, l)?;
            }
            let loss = g.scale(sum, 1.0 / chunk.len() as f64)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::Diverged { epoch, batch: b });
            }
            g.backward(loss)?;
            let grads: Vec<f64> = (0..current.params().len())
                .flat_map(|i| g.param_grad(i).expect("bound parameter").into_data())
                .collect();
            adam.update(&mut flat, &grads);
            current = current
                .clone()
                .with_params(current.params().unflatten(&flat)?)?;
            epoch_loss += value * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train_windows.len() as f64;
        let val_loss = if val_windows.is_empty() {
            train_loss
        } else {
            mean_loss(&current, val_windows)?
        };
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                batch: usize::MAX,
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = best.as_ref().map_or(true, |(v, _, _)| val_loss < *v);
        if improved {
            best = Some((val_loss, epoch, current.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= opts.patience {
            break;
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: Some(best_epoch),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model: String,
    pub windows: usize,
    pub mse: f64,
    pub mae: f64,
    pub mse_original: f64,
    pub mae_original: f64,
    /// Mean over (window, series) of predicted max / actual max, original units.
    pub peak_ratio: f64,
}

/// One window's forecast in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowForecast {
    pub target_times: Vec<Instant>,
    /// `(horizon × series)`, row-major.
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

fn invert_rows(data: &[f64], cols: usize, scaler: &ScalerParams) -> Vec<f64> {
    data.iter()
        .enumerate()
        .map(|(i, &v)| scaler.invert_value(i % cols, v))
        .collect()
}

fn check_scaler(model: &Model, scaler: &ScalerParams) -> Result<usize, TrainError> {
    let cols = model.config().channels;
    if scaler.mean.len() != cols {
        return Err(TrainError::Columns {
            expected: cols,
            found: scaler.mean.len(),
        });
    }
    Ok(cols)
}

/// Forecasts for every window, inverted to original units.
pub fn forecast_windows(
    model: &Model,
    windows: &[WindowSample],
    scaler: &ScalerParams,
) -> Result<Vec<WindowForecast>, TrainError> {
    let cols = check_scaler(model, scaler)?;
    windows
        .iter()
        .map(|w| {
            let p = model.predict(&w.context)?;
            Ok(WindowForecast {
                target_times: w.target_times.clone(),
                actual: invert_rows(w.target.data(), cols, scaler),
                predicted: invert_rows(p.data(), cols, scaler),
            })
        })
        .collect()
}

/// Error metrics in scaled and original units plus the peak ratio.
pub fn evaluate(
    model: &Model,
    windows: &[WindowSample],
    scaler: &ScalerParams,
) -> Result<Metrics, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::NoWindows("evaluate"));
    }
    let cols = check_scaler(model, scaler)?;
    let (mut se, mut ae, mut se_o, mut ae_o, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    let mut ratios = Vec::new();
    for w in windows {
        let scaled = model.predict(&w.context)?;
        for (p, t) in scaled.data().iter().zip(w.target.data()) {
            se += (p - t) * (p - t);
            ae += (p - t).abs();
        }
        let predicted = invert_rows(scaled.data(), cols, scaler);
        let actual = invert_rows(w.target.data(), cols, scaler);
        for (p, t) in predicted.iter().zip(&actual) {
            se_o += (p - t) * (p - t);
            ae_o += (p - t).abs();
        }
        n += actual.len();
        for c in 0..cols {
            let col_max = |v: &[f64]| {
                v.iter()
                    .skip(c)
                    .step_by(cols)
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let peak = col_max(&actual);
            if peak > 0.0 {
                ratios.push(col_max(&predicted) / peak);
            }
        }
    }
    let nf = n as f64;
    let peak_ratio = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(Metrics {
        model: String::from(model.kind().tag()),
        windows: windows.len(),
        mse: se / nf,
        mae: ae / nf,
        mse_original: se_o / nf,
        mae_original: ae_o / nf,
        peak_ratio,
    })
}

/// FNV-1a over the bit patterns of every parameter.
pub fn parameter_fingerprint(model: &Model) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in model.params().flatten() {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests;
