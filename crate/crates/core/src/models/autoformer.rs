//! Decomposition encoder-decoder with auto-correlation attention.
//!
//! Encoder layer: `x += AC(x)`, keep the seasonal part, `x += FF(x)`, keep
//! the seasonal part. Decoder layer does the same with an extra
//! cross-attention step and returns the sum of the three removed trends,
//! projected to the output channels, which the decoder accumulates onto the
//! trend initialisation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{decompose, Attention, Embedding, FeedForward, Fwd, LayerNorm, Linear, Mixer};
use super::{series_decompose, ModelConfig, ModelError, ParamStore};
use crate::numerics::{Tensor, Var, XorShift64};

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    attn: Attention,
    ff: FeedForward,
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderLayer {
    self_attn: Attention,
    cross_attn: Attention,
    ff: FeedForward,
    trend_proj: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Net {
    enc_embed: Embedding,
    dec_embed: Embedding,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    proj: Linear,
}

pub(crate) fn init(c: &ModelConfig, store: &mut ParamStore, rng: &mut XorShift64) -> Net {
    let d = c.d_model;
    let ac = |store: &mut ParamStore, rng: &mut XorShift64, name: &str| {
        Attention::init(
            store,
            rng,
            name,
            d,
            c.n_heads,
            Mixer::AutoCorrelation,
            c.autocorr_factor,
        )
    };
    let enc_embed = Embedding::init(store, rng, "enc_embed", c.channels, d);
    let dec_embed = Embedding::init(store, rng, "dec_embed", c.channels, d);
    let encoder = (0..c.encoder_layers)
        .map(|i| EncoderLayer {
            attn: ac(store, rng, &format!("encoder.{i}.attn")),
            ff: FeedForward::init(store, rng, &format!("encoder.{i}.ff"), d, c.d_ff),
        })
        .collect();
    let enc_norm = LayerNorm::init(store, "enc_norm", d);
    let decoder = (0..c.decoder_layers)
        .map(|i| DecoderLayer {
            self_attn: ac(store, rng, &format!("decoder.{i}.self_attn")),
            cross_attn: ac(store, rng, &format!("decoder.{i}.cross_attn")),
            ff: FeedForward::init(store, rng, &format!("decoder.{i}.ff"), d, c.d_ff),
            trend_proj: Linear::init(
                store,
                rng,
                &format!("decoder.{i}.trend_proj"),
                d,
                c.channels,
                false,
            ),
        })
        .collect();
    let dec_norm = LayerNorm::init(store, "dec_norm", d);
    let proj = Linear::init(store, rng, "proj", d, c.channels, true);
    Net {
        enc_embed,
        dec_embed,
        encoder,
        enc_norm,
        decoder,
        dec_norm,
        proj,
    }
}

/// Decoder inputs built from the context: the last `label_len` seasonal rows
/// followed by zeros, and the last `label_len` trend rows followed by the
/// context mean.
pub(crate) fn decoder_init(
    c: &ModelConfig,
    context: &Tensor,
) -> Result<(Tensor, Tensor), ModelError> {
    let (seasonal, trend) = series_decompose(context, c.moving_avg_kernel)?;
    let (l, s) = (c.input_len, c.channels);
    let start = l - c.label_len;
    let mut seas = seasonal.data()[start * s..].to_vec();
    seas.resize(c.decoder_len() * s, 0.0);
    let mut tr = trend.data()[start * s..].to_vec();
    let mean: Vec<f64> = (0..s)
        .map(|ch| (0..l).map(|t| context.at(t, ch)).sum::<f64>() / l as f64)
        .collect();
    for _ in 0..c.horizon {
        tr.extend_from_slice(&mean);
    }
    Ok((
        Tensor::new(vec![c.decoder_len(), s], seas)?,
        Tensor::new(vec![c.decoder_len(), s], tr)?,
    ))
}

pub(crate) fn forward(
    c: &ModelConfig,
    net: &Net,
    f: &mut Fwd<'_>,
    context: &Tensor,
) -> Result<Var, ModelError> {
    let k = c.moving_avg_kernel;
    let (seasonal_init, trend_init) = decoder_init(c, context)?;

    let x = f.g.leaf(context.clone());
    let mut enc = net.enc_embed.apply(f, x)?;
    for layer in &net.encoder {
        let a = layer.attn.apply(f, enc, enc)?;
        let a = f.dropout(a)?;
        let h = f.g.add(enc, a)?;
        let (h, _) = decompose(f, h, k)?;
        let y = layer.ff.apply(f, h)?;
        let y = f.dropout(y)?;
        let h2 = f.g.add(h, y)?;
        enc = decompose(f, h2, k)?.0;
    }
    let enc = net.enc_norm.apply_seasonal(f, enc)?;

    let s0 = f.g.leaf(seasonal_init);
    let mut dec = net.dec_embed.apply(f, s0)?;
    let mut trend = f.g.leaf(trend_init);
    for layer in &net.decoder {
        let a = layer.self_attn.apply(f, dec, dec)?;
        let a = f.dropout(a)?;
        let h = f.g.add(dec, a)?;
        let (h, t1) = decompose(f, h, k)?;
        let a = layer.cross_attn.apply(f, h, enc)?;
        let a = f.dropout(a)?;
        let h = f.g.add(h, a)?;
        let (h, t2) = decompose(f, h, k)?;
        let y = layer.ff.apply(f, h)?;
        let y = f.dropout(y)?;
        let h = f.g.add(h, y)?;
        let (h, t3) = decompose(f, h, k)?;
        dec = h;
        let t = f.g.add(t1, t2)?;
        let t = f.g.add(t, t3)?;
        let t = layer.trend_proj.apply(f, t)?;
        trend = f.g.add(trend, t)?;
    }
    let dec = net.dec_norm.apply_seasonal(f, dec)?;
    let seasonal = net.proj.apply(f, dec)?;
    let out = f.g.add(trend, seasonal)?;
    Ok(f.g.slice(out, 0, c.label_len, c.decoder_len())?)
}
