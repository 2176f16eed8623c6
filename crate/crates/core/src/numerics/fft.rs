//! Complex FFT (iterative radix-2, Bluestein for other lengths) and the
//! real-input transforms built on it.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::NumericsError;
use crate::math;

pub type Complex = num_complex::Complex64;

fn unit(angle: f64) -> Complex {
    Complex::new(math::cos(angle), math::sin(angle))
}

/// Radix-2 plan: bit-reversal table and forward twiddles `e^{-2πik/n}`.
#[derive(Debug, Clone)]
struct Pow2Plan {
    n: usize,
    rev: Vec<usize>,
    twiddles: Vec<Complex>,
}

impl Pow2Plan {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| unit(-2.0 * PI * k as f64 / n as f64))
            .collect();
        Self { n, rev, twiddles }
    }

    /// Unnormalised transform; `inverse` uses conjugate twiddles.
    fn run(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }
}

/// In-place unnormalised complex FFT for power-of-two lengths.
pub fn fft_in_place(buf: &mut [Complex], inverse: bool) -> Result<(), NumericsError> {
    if !buf.len().is_power_of_two() {
        return Err(NumericsError::Invalid {
            op: "fft",
            msg: alloc::format!("length {} is not a power of two", buf.len()),
        });
    }
    Pow2Plan::new(buf.len()).run(buf, inverse);
    Ok(())
}

#[derive(Debug, Clone)]
enum Strategy {
    Pow2(Pow2Plan),
    /// Chirp-z: length-`len` DFT as a circular convolution of size `plan.n`.
    Bluestein {
        plan: Pow2Plan,
        chirp: Vec<Complex>,
        kernel: Vec<Complex>,
    },
}

/// Reusable real FFT of a fixed length `L >= 2`.
///
/// Power-of-two lengths use radix-2 directly. Any other length is computed
/// exactly at `L` through Bluestein's algorithm, so circular quantities such
/// as autocorrelation keep their length-`L` definition.
#[derive(Debug, Clone)]
pub struct RealFft {
    len: usize,
    strategy: Strategy,
}

impl RealFft {
    pub fn new(len: usize) -> Result<Self, NumericsError> {
        if len < 2 {
            return Err(NumericsError::TooShort {
                op: "rfft",
                len,
                min: 2,
            });
        }
        let strategy = if len.is_power_of_two() {
            Strategy::Pow2(Pow2Plan::new(len))
        } else {
            let m = (2 * len - 1).next_power_of_two();
            let plan = Pow2Plan::new(m);
            // angle index n² mod 2L keeps the argument small and exact
            let two_len = 2 * len as u128;
            let chirp: Vec<Complex> = (0..len)
                .map(|n| {
                    let idx = ((n as u128 * n as u128) % two_len) as f64;
                    unit(-PI * idx / len as f64)
                })
                .collect();
            let mut kernel = vec![Complex::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for n in 1..len {
                kernel[n] = chirp[n].conj();
                kernel[m - n] = chirp[n].conj();
            }
            plan.run(&mut kernel, false);
            Strategy::Bluestein {
                plan,
                chirp,
                kernel,
            }
        };
        Ok(Self { len, strategy })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> usize {
        self.len / 2 + 1
    }

    /// Full-length unnormalised complex DFT.
    fn dft(&self, buf: &mut [Complex], inverse: bool) {
        match &self.strategy {
            Strategy::Pow2(plan) => plan.run(buf, inverse),
            Strategy::Bluestein {
                plan,
                chirp,
                kernel,
            } => {
                // inverse DFT = conj(DFT(conj(x)))
                if inverse {
                    buf.iter_mut().for_each(|c| *c = c.conj());
                }
                let m = plan.n;
                let mut a = vec![Complex::new(0.0, 0.0); m];
                for (slot, (x, c)) in a.iter_mut().zip(buf.iter().zip(chirp)) {
                    *slot = x * c;
                }
                plan.run(&mut a, false);
                for (x, k) in a.iter_mut().zip(kernel) {
                    *x *= k;
                }
                plan.run(&mut a, true);
                let scale = 1.0 / m as f64;
                for (k, out) in buf.iter_mut().enumerate() {
                    *out = a[k] * chirp[k] * scale;
                }
                if inverse {
                    buf.iter_mut().for_each(|c| *c = c.conj());
                }
            }
        }
    }

    /// `L/2 + 1` non-negative frequency bins of a real sequence.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Complex>, NumericsError> {
        if x.len() != self.len {
            return Err(NumericsError::ShapeMismatch {
                op: "rfft",
                lhs: vec![self.len],
                rhs: vec![x.len()],
            });
        }
        let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.dft(&mut buf, false);
        buf.truncate(self.bins());
        Ok(buf)
    }

    /// Real sequence from its half spectrum, normalised so that
    /// `inverse(forward(x)) == x`.
    pub fn inverse(&self, bins: &[Complex]) -> Result<Vec<f64>, NumericsError> {
        if bins.len() != self.bins() {
            return Err(NumericsError::ShapeMismatch {
                op: "irfft",
                lhs: vec![self.bins()],
                rhs: vec![bins.len()],
            });
        }
        let n = self.len;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        buf[..bins.len()].copy_from_slice(bins);
        for k in bins.len()..n {
            buf[k] = bins[n - k].conj();
        }
        self.dft(&mut buf, true);
        let scale = 1.0 / n as f64;
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }

    /// `R[τ] = (1/L) Σ_t a[(t+τ) mod L] · b[t]` via the cross spectrum.
    pub fn cross_correlation(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let fa = self.forward(a)?;
        let fb = self.forward(b)?;
        let spectrum: Vec<Complex> = fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect();
        let scale = 1.0 / self.len as f64;
        Ok(self
            .inverse(&spectrum)?
            .into_iter()
            .map(|v| v * scale)
            .collect())
    }
}

pub fn rfft(x: &[f64]) -> Result<Vec<Complex>, NumericsError> {
    RealFft::new(x.len())?.forward(x)
}

pub fn irfft(bins: &[Complex], len: usize) -> Result<Vec<f64>, NumericsError> {
    RealFft::new(len)?.inverse(bins)
}

/// Circular autocorrelation `R[τ] = (1/L) Σ_t x[t]·x[(t+τ) mod L]`,
/// computed from the power spectrum.
pub fn autocorrelation(x: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let plan = RealFft::new(x.len())?;
    let spectrum: Vec<Complex> = plan
        .forward(x)?
        .into_iter()
        .map(|c| Complex::new(c.norm_sqr(), 0.0))
        .collect();
    let scale = 1.0 / x.len() as f64;
    Ok(plan
        .inverse(&spectrum)?
        .into_iter()
        .map(|v| v * scale)
        .collect())
}

/// Circular cross-correlation `R[τ] = (1/L) Σ_t a[(t+τ) mod L] · b[t]`.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "cross_correlation",
            lhs: vec![a.len()],
            rhs: vec![b.len()],
        });
    }
    RealFft::new(a.len())?.cross_correlation(a, b)
}
