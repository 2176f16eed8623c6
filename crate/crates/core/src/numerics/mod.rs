//! Dense tensors, FFT, reverse-mode differentiation and attention kernels.
//!
//! All arithmetic is 64-bit. Tensors are row-major; most model code works on
//! 2-D `(time × channels)` tensors.

mod attention;
mod error;
mod fft;
mod graph;
mod rng;
mod tensor;

pub use attention::{
    autocorr_attention, autocorr_scores, dot_product_attention, select_delays, top_k_for,
    AutoCorrOutput,
};
pub use error::NumericsError;
pub use fft::{autocorrelation, cross_correlation, fft_in_place, irfft, rfft, Complex, RealFft};
pub(crate) use graph::moving_average_rows;
pub use graph::{Graph, Var};
pub use rng::XorShift64;
pub use tensor::{Shape, Tensor};
