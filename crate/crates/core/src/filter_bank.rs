//! Filter-coefficient parametrisation of an orthonormal wavelet.
//!
//! The low-pass taps `a` are the only free parameters. The high-pass taps are
//! derived on demand by index reflection with alternating sign,
//! `b[k] = (-1)^k a[N - 1 - k]`, and never stored.

use std::f64::consts::SQRT_2;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Low-pass filter taps of an orthonormal wavelet candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    a: Vec<f64>,
}

impl FilterBank {
    /// Wraps `a`, rejecting odd, empty or non-finite coefficient vectors.
    pub fn new(a: Vec<f64>) -> Result<Self> {
        validate_len(a.len())?;
        if let Some(i) = a.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFilter(format!(
                "coefficient {i} is not finite ({})",
                a[i]
            )));
        }
        Ok(Self { a })
    }

    pub fn haar() -> Self {
        Self {
            a: vec![SQRT_2 / 2.0; 2],
        }
    }

    /// Four-tap Daubechies filter, `(1 ± √3, 3 ± √3) / (4√2)`.
    pub fn daubechies4() -> Self {
        let s3 = 3f64.sqrt();
        let norm = 4.0 * SQRT_2;
        Self {
            a: vec![
                (1.0 + s3) / norm,
                (3.0 + s3) / norm,
                (3.0 - s3) / norm,
                (1.0 - s3) / norm,
            ],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.a
    }

    /// Number of taps, `N_filt`.
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn highpass(&self) -> Vec<f64> {
        reflect_alternate(&self.a)
    }

    /// `L_m`, the `2^m x 2^(m+1)` low-pass operator.
    pub fn lowpass_matrix(&self, m: u32) -> Array2<f64> {
        strided_matrix(&self.a, m)
    }

    /// `H_m`, laid out like [`Self::lowpass_matrix`] with the high-pass taps.
    pub fn highpass_matrix(&self, m: u32) -> Array2<f64> {
        strided_matrix(&self.highpass(), m)
    }

    pub fn conditions(&self) -> ConditionReport {
        check_conditions(self)
    }
}

fn validate_len(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidFilter(format!(
            "need at least 2 coefficients, got {n}"
        )));
    }
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidFilter(format!(
            "filter length must be even, got {n}"
        )));
    }
    Ok(())
}

fn reflect_alternate(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|k| {
            let v = a[n - 1 - k];
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// High-pass taps for an arbitrary even-length low-pass vector.
pub fn derive_highpass(a: &[f64]) -> Result<Vec<f64>> {
    validate_len(a.len())?;
    Ok(reflect_alternate(a))
}

/// Row `r` holds `taps` reversed, starting at column `2r` with `taps[0]`
/// rightmost, wrapping modulo `2^(m+1)`. Taps that wrap onto the same column
/// add up.
pub(crate) fn strided_matrix(taps: &[f64], m: u32) -> Array2<f64> {
    let rows = 1usize << m;
    let cols = rows << 1;
    let n = taps.len();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for j in 0..n {
            out[[r, (2 * r + j) % cols]] += taps[n - 1 - j];
        }
    }
    out
}

/// `Σ_k x_k y_{k+2m}` over the overlap of the two (unwrapped) tap vectors.
/// `m` may be negative.
pub(crate) fn even_lag_correlation(x: &[f64], y: &[f64], m: isize) -> f64 {
    let n = x.len() as isize;
    let lag = 2 * m;
    let lo = 0.max(-lag);
    let hi = n.min(n - lag);
    (lo..hi)
        .map(|k| x[k as usize] * y[(k + lag) as usize])
        .sum()
}

/// Squared residuals of the five orthonormal-wavelet conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// Dilation equation, `(Σa - √2)²`.
    pub r1: f64,
    /// Scaling-function orthonormality, summed over shifts `0..N/2`.
    pub r2: f64,
    /// Wavelet orthonormality, summed over shifts `0..N/2`.
    pub r3: f64,
    /// Zero wavelet area, `(Σb)²`.
    pub r4: f64,
    /// Cross-orthogonality. Zero by construction of `b`.
    pub r5: f64,
    pub total: f64,
}

impl ConditionReport {
    pub fn residuals(&self) -> [f64; 5] {
        [self.r1, self.r2, self.r3, self.r4, self.r5]
    }
}

pub fn check_conditions(fb: &FilterBank) -> ConditionReport {
    let a = fb.coeffs();
    let b = fb.highpass();
    let half = (a.len() / 2) as isize;

    let r1 = (a.iter().sum::<f64>() - SQRT_2).powi(2);
    let shift_residual = |x: &[f64]| -> f64 {
        (0..half)
            .map(|m| {
                let delta = if m == 0 { 1.0 } else { 0.0 };
                (even_lag_correlation(x, x, m) - delta).powi(2)
            })
            .sum()
    };
    let r2 = shift_residual(a);
    let r3 = shift_residual(&b);
    let r4 = b.iter().sum::<f64>().powi(2);
    let r5 = 0.0;

    ConditionReport {
        r1,
        r2,
        r3,
        r4,
        r5,
        total: r1 + r2 + r3 + r4 + r5,
    }
}

/// Directly evaluated cross-orthogonality residual `Σ_m (Σ_k a_k b_{k+2m})²`
/// over every shift with nonempty overlap.
pub fn cross_orthogonality_residual(fb: &FilterBank) -> f64 {
    let a = fb.coeffs();
    let b = fb.highpass();
    let half = (a.len() / 2) as isize;
    (-(half - 1)..half)
        .map(|m| even_lag_correlation(a, &b, m).powi(2))
        .sum()
}
