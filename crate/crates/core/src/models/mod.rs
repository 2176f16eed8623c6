//! Forecasting models: a decomposition/auto-correlation encoder-decoder, a
//! point-wise attention transformer baseline and persistence.
//!
//! Every model maps a scaled context of shape `(input_len × channels)` to a
//! forecast of shape `(horizon × channels)`; channels are forecast jointly.

mod autoformer;
mod layers;
mod params;
mod pointwise;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numerics::{
    moving_average_rows, top_k_for, Graph, NumericsError, Tensor, Var, XorShift64,
};
use crate::Instant;

pub use params::{ParamEntry, ParamStore};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("context shape {found:?} does not match expected {expected:?}")]
    Shape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("parameter mismatch: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Autoformer,
    Pointwise,
    Persistence,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Autoformer => "autoformer",
            ModelKind::Pointwise => "pointwise",
            ModelKind::Persistence => "persistence",
        }
    }

    pub fn parse(tag: &str) -> Option<Self> {
        [Self::Autoformer, Self::Pointwise, Self::Persistence]
            .into_iter()
            .find(|k| k.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_len: usize,
    pub label_len: usize,
    pub horizon: usize,
    /// Number of jointly forecast series.
    pub channels: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub moving_avg_kernel: usize,
    pub autocorr_factor: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::preset(96, 1)
    }
}

impl ModelConfig {
    /// Default configuration for a 36- or 96-step horizon (any horizon is
    /// accepted; the context stays at 96 steps).
    pub fn preset(horizon: usize, channels: usize) -> Self {
        Self {
            input_len: 96,
            label_len: 48,
            horizon,
            channels,
            d_model: 32,
            n_heads: 2,
            d_ff: 64,
            encoder_layers: 2,
            decoder_layers: 1,
            moving_avg_kernel: 25,
            autocorr_factor: 1.0,
            dropout: 0.0,
            seed: 2024,
        }
    }

    pub fn decoder_len(&self) -> usize {
        self.label_len + self.horizon
    }

    pub fn top_k(&self) -> usize {
        top_k_for(self.input_len, self.autocorr_factor)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.input_len < 4 {
            return fail(format!("input_len {} is below 4", self.input_len));
        }
        if self.label_len > self.input_len {
            return fail(format!(
                "label_len {} exceeds input_len {}",
                self.label_len, self.input_len
            ));
        }
        if self.horizon == 0 || self.channels == 0 {
            return fail("horizon and channels must be positive".into());
        }
        if self.decoder_len() < 4 {
            return fail(format!(
                "label_len + horizon = {} is below 4",
                self.decoder_len()
            ));
        }
        if self.moving_avg_kernel < 3 || self.moving_avg_kernel % 2 == 0 {
            return fail(format!(
                "moving_avg_kernel must be odd and >= 3, got {}",
                self.moving_avg_kernel
            ));
        }
        if self.autocorr_factor.is_nan() || self.autocorr_factor <= 0.0 {
            return fail(format!(
                "autocorr_factor must be positive, got {}",
                self.autocorr_factor
            ));
        }
        if crate::math::floor(self.autocorr_factor * crate::math::ln(self.input_len as f64)) < 1.0 {
            return fail(format!(
                "autocorr_factor {} selects no delays at input_len {}",
                self.autocorr_factor, self.input_len
            ));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 {
            return fail("d_ff must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Per-slice forecast in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub slice: String,
    pub issued_at: Instant,
    pub horizon: usize,
    pub predicted: Vec<f64>,
    pub model: String,
}

/// Splits `(time × width)` into seasonal and trend parts. The trend is a
/// centred moving average with edge replication; seasonal is `x − trend`.
pub fn series_decompose(x: &Tensor, kernel: usize) -> Result<(Tensor, Tensor), ModelError> {
    if kernel < 3 || kernel % 2 == 0 {
        return Err(ModelError::Config(format!(
            "moving_avg_kernel must be odd and >= 3, got {kernel}"
        )));
    }
    if x.rank() != 2 {
        return Err(ModelError::Shape {
            expected: alloc::vec![x.numel(), 1],
            found: x.shape().to_vec(),
        });
    }
    let trend = moving_average_rows(x, kernel)?;
    let seasonal = Tensor::new(
        x.shape().to_vec(),
        x.data()
            .iter()
            .zip(trend.data())
            .map(|(a, b)| a - b)
            .collect(),
    )?;
    Ok((seasonal, trend))
}

/// Repeats the last context row `horizon` times.
pub fn persistence_forecast(context: &Tensor, horizon: usize) -> Tensor {
    let cols = context.cols();
    let last = &context.data()[(context.rows() - 1) * cols..];
    let data = last.iter().copied().cycle().take(horizon * cols).collect();
    Tensor::new(alloc::vec![horizon, cols], data).expect("shape")
}

#[derive(Debug, Clone, PartialEq)]
enum Net {
    Autoformer(autoformer::Net),
    Pointwise(pointwise::Net),
    Persistence,
}

/// A forecaster with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    config: ModelConfig,
    params: ParamStore,
    net: Net,
}

impl Model {
    /// Builds a model with parameters drawn from `config.seed`.
    pub fn new(kind: ModelKind, config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = XorShift64::new(config.seed);
        let mut params = ParamStore::default();
        let net = match kind {
            ModelKind::Autoformer => {
                Net::Autoformer(autoformer::init(&config, &mut params, &mut rng))
            }
            ModelKind::Pointwise => Net::Pointwise(pointwise::init(&config, &mut params, &mut rng)),
            ModelKind::Persistence => Net::Persistence,
        };
        Ok(Self {
            kind,
            config,
            params,
            net,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces parameters after checking names and shapes.
    pub fn with_params(mut self, params: ParamStore) -> Result<Self, ModelError> {
        self.params.check_compatible(&params)?;
        self.params = params;
        Ok(self)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn has_parameters(&self) -> bool {
        !self.params.is_empty()
    }

    fn check_context(&self, context: &Tensor) -> Result<(), ModelError> {
        let expected = alloc::vec![self.config.input_len, self.config.channels];
        if context.shape() != expected.as_slice() {
            return Err(ModelError::Shape {
                expected,
                found: context.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Records the forward pass on `g` and returns the `(horizon × channels)`
    /// output. Passing `rng` enables dropout (training mode).
    pub fn forward(
        &self,
        g: &mut Graph,
        context: &Tensor,
        rng: Option<&mut XorShift64>,
    ) -> Result<Var, ModelError> {
        self.check_context(context)?;
        let mut f = layers::Fwd::new(g, &self.params, self.config.dropout, rng);
        match &self.net {
            Net::Autoformer(net) => autoformer::forward(&self.config, net, &mut f, context),
            Net::Pointwise(net) => pointwise::forward(&self.config, net, &mut f, context),
            Net::Persistence => Ok(f.g.leaf(persistence_forecast(context, self.config.horizon))),
        }
    }

    /// Inference-mode forecast.
    pub fn predict(&self, context: &Tensor) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, context, None)?;
        Ok(g.value(out).clone())
    }
}
