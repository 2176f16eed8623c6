//! Forward kernels for the two attention families.
//!
//! `autocorr_attention` scores whole time delays by the cross-correlation of
//! queries and keys (O(L log L) per channel); `dot_product_attention` is the
//! point-wise softmax(QKᵀ/√d)V form, evaluated row by row in O(L²) time and
//! O(L) extra memory.

use alloc::vec;
use alloc::vec::Vec;

use super::{Complex, NumericsError, RealFft, Tensor};
use crate::math;

/// Number of delays kept by auto-correlation attention: `floor(c · ln L)`,
/// clamped to `[1, L]`.
pub fn top_k_for(len: usize, factor: f64) -> usize {
    let k = math::floor(factor * math::ln(len as f64));
    (k.max(1.0) as usize).min(len)
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(NumericsError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Channel-averaged delay scores
/// `R[τ] = 1/(L·d) Σ_c Σ_t q[(t+τ) mod L, c] · k[t, c]`.
pub fn autocorr_scores(q: &Tensor, k: &Tensor) -> Result<Vec<f64>, NumericsError> {
    check_same("autocorr_scores", q, k)?;
    let (len, width) = (q.rows(), q.cols());
    let plan = RealFft::new(len)?;
    let mut spectrum = vec![Complex::new(0.0, 0.0); plan.bins()];
    let mut qc = vec![0.0; len];
    let mut kc = vec![0.0; len];
    for c in 0..width {
        for t in 0..len {
            qc[t] = q.at(t, c);
            kc[t] = k.at(t, c);
        }
        let fq = plan.forward(&qc)?;
        let fk = plan.forward(&kc)?;
        for (s, (a, b)) in spectrum.iter_mut().zip(fq.iter().zip(&fk)) {
            *s += a * b.conj();
        }
    }
    let scale = 1.0 / (len * width) as f64;
    Ok(plan
        .inverse(&spectrum)?
        .into_iter()
        .map(|v| v * scale)
        .collect())
}

/// Indices of the `top_k` largest scores, largest first; ties go to the
/// shorter delay.
pub fn select_delays(scores: &[f64], top_k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(top_k.min(scores.len()));
    idx
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = math::exp(*x - max);
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// Time-delay aggregation `out[t] = Σ_i w_i · v[(t + τ_i) mod L]`.
pub(crate) fn delay_aggregate(v: &Tensor, delays: &[usize], weights: &[f64]) -> Tensor {
    let (len, width) = (v.rows(), v.cols());
    let src = v.data();
    let mut out = vec![0.0; len * width];
    for (&tau, &w) in delays.iter().zip(weights) {
        for t in 0..len {
            let from = ((t + tau) % len) * width;
            let row = &mut out[t * width..(t + 1) * width];
            for (o, s) in row.iter_mut().zip(&src[from..from + width]) {
                *o += w * s;
            }
        }
    }
    Tensor::new(vec![len, width], out).expect("shape preserved")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoCorrOutput {
    pub output: Tensor,
    pub delays: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Auto-correlation attention for one head.
///
/// `q`, `k`, `v` are `(L × d)`; the `floor(c·ln L)` best-scoring delays are
/// softmax-weighted and the values rolled by each delay are summed.
pub fn autocorr_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    factor: f64,
) -> Result<AutoCorrOutput, NumericsError> {
    check_same("autocorr_attention", q, k)?;
    check_same("autocorr_attention", q, v)?;
    if q.rows() < 4 {
        return Err(NumericsError::TooShort {
            op: "autocorr_attention",
            len: q.rows(),
            min: 4,
        });
    }
    let scores = autocorr_scores(q, k)?;
    let delays = select_delays(&scores, top_k_for(q.rows(), factor));
    let mut weights: Vec<f64> = delays.iter().map(|&d| scores[d]).collect();
    softmax_in_place(&mut weights);
    let output = delay_aggregate(v, &delays, &weights);
    Ok(AutoCorrOutput {
        output,
        delays,
        weights,
    })
}

/// Scaled dot-product attention `softmax(QKᵀ/√d) V`, optionally causal.
/// `q` is `(Lq × d)`, `k` and `v` are `(Lk × d)` / `(Lk × dv)`.
pub fn dot_product_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    causal: bool,
) -> Result<Tensor, NumericsError> {
    if q.rank() != 2
        || k.rank() != 2
        || v.rank() != 2
        || q.cols() != k.cols()
        || k.rows() != v.rows()
    {
        return Err(NumericsError::ShapeMismatch {
            op: "dot_product_attention",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    let (lq, d, lk, dv) = (q.rows(), q.cols(), k.rows(), v.cols());
    let scale = 1.0 / math::sqrt(d as f64);
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![0.0; lq * dv];
    let mut row = vec![0.0; lk];
    for i in 0..lq {
        let limit = if causal { (i + 1).min(lk) } else { lk };
        let qi = &qd[i * d..(i + 1) * d];
        for (j, slot) in row[..limit].iter_mut().enumerate() {
            let kj = &kd[j * d..(j + 1) * d];
            *slot = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        softmax_in_place(&mut row[..limit]);
        let oi = &mut out[i * dv..(i + 1) * dv];
        for (j, &p) in row[..limit].iter().enumerate() {
            for (o, x) in oi.iter_mut().zip(&vd[j * dv..(j + 1) * dv]) {
                *o += p * x;
            }
        }
    }
    Tensor::new(vec![lq, dv], out)
}
