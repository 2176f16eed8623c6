//! Canonical transformer encoder-decoder with scaled dot-product attention
//! and post-layer-norm residual blocks. The decoder sees the last
//! `label_len` context rows followed by zeros, under a causal mask.

use alloc::format;
use alloc::vec::Vec;

use super::layers::{Attention, Embedding, FeedForward, Fwd, LayerNorm, Linear, Mixer};
use super::{ModelConfig, ModelError, ParamStore};
use crate::numerics::{Tensor, Var, XorShift64};

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    attn: Attention,
    norm1: LayerNorm,
    ff: FeedForward,
    norm2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderLayer {
    self_attn: Attention,
    norm1: LayerNorm,
    cross_attn: Attention,
    norm2: LayerNorm,
    ff: FeedForward,
    norm3: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Net {
    enc_embed: Embedding,
    dec_embed: Embedding,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    proj: Linear,
}

pub(crate) fn init(c: &ModelConfig, store: &mut ParamStore, rng: &mut XorShift64) -> Net {
    let d = c.d_model;
    let attn = |store: &mut ParamStore, rng: &mut XorShift64, name: &str, causal: bool| {
        Attention::init(
            store,
            rng,
            name,
            d,
            c.n_heads,
            Mixer::DotProduct { causal },
            0.0,
        )
    };
    let enc_embed = Embedding::init(store, rng, "enc_embed", c.channels, d);
    let dec_embed = Embedding::init(store, rng, "dec_embed", c.channels, d);
    let encoder = (0..c.encoder_layers)
        .map(|i| EncoderLayer {
            attn: attn(store, rng, &format!("encoder.{i}.attn"), false),
            norm1: LayerNorm::init(store, &format!("encoder.{i}.norm1"), d),
            ff: FeedForward::init(store, rng, &format!("encoder.{i}.ff"), d, c.d_ff),
            norm2: LayerNorm::init(store, &format!("encoder.{i}.norm2"), d),
        })
        .collect();
    let enc_norm = LayerNorm::init(store, "enc_norm", d);
    let decoder = (0..c.decoder_layers)
        .map(|i| DecoderLayer {
            self_attn: attn(store, rng, &format!("decoder.{i}.self_attn"), true),
            norm1: LayerNorm::init(store, &format!("decoder.{i}.norm1"), d),
            cross_attn: attn(store, rng, &format!("decoder.{i}.cross_attn"), false),
            norm2: LayerNorm::init(store, &format!("decoder.{i}.norm2"), d),
            ff: FeedForward::init(store, rng, &format!("decoder.{i}.ff"), d, c.d_ff),
            norm3: LayerNorm::init(store, &format!("decoder.{i}.norm3"), d),
        })
        .collect();
    let proj = Linear::init(store, rng, "proj", d, c.channels, true);
    Net {
        enc_embed,
        dec_embed,
        encoder,
        enc_norm,
        decoder,
        proj,
    }
}

pub(crate) fn forward(
    c: &ModelConfig,
    net: &Net,
    f: &mut Fwd<'_>,
    context: &Tensor,
) -> Result<Var, ModelError> {
    let s = c.channels;
    let x = f.g.leaf(context.clone());
    let mut enc = net.enc_embed.apply(f, x)?;
    for layer in &net.encoder {
        let a = layer.attn.apply(f, enc, enc)?;
        let a = f.dropout(a)?;
        let h = f.g.add(enc, a)?;
        let h = layer.norm1.apply(f, h)?;
        let y = layer.ff.apply(f, h)?;
        let y = f.dropout(y)?;
        let h2 = f.g.add(h, y)?;
        enc = layer.norm2.apply(f, h2)?;
    }
    let enc = net.enc_norm.apply(f, enc)?;

    let start = c.input_len - c.label_len;
    let mut dec_in = context.data()[start * s..].to_vec();
    dec_in.resize(c.decoder_len() * s, 0.0);
    let dec_in =
        f.g.leaf(Tensor::new(alloc::vec![c.decoder_len(), s], dec_in)?);
    let mut dec = net.dec_embed.apply(f, dec_in)?;
    for layer in &net.decoder {
        let a = layer.self_attn.apply(f, dec, dec)?;
        let a = f.dropout(a)?;
        let h = f.g.add(dec, a)?;
        let h = layer.norm1.apply(f, h)?;
        let a = layer.cross_attn.apply(f, h, enc)?;
        let a = f.dropout(a)?;
        let h2 = f.g.add(h, a)?;
        let h2 = layer.norm2.apply(f, h2)?;
        let y = layer.ff.apply(f, h2)?;
        let y = f.dropout(y)?;
        let h3 = f.g.add(h2, y)?;
        dec = layer.norm3.apply(f, h3)?;
    }
    let out = net.proj.apply(f, dec)?;
    Ok(f.g.slice(out, 0, c.label_len, c.decoder_len())?)
}
