//! Periodic discrete wavelet transform driven by a [`FilterBank`].
//!
//! 1D coefficient layout: index 0 is the global average `c_0`, index 1 the
//! scale-0 detail, and indices `2^m .. 2^(m+1)` the scale-`m` details. The 2D
//! transform is the full 1D transform of every row followed by the full 1D
//! transform of every column.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::filter_bank::FilterBank;

/// A radix-2 1D vector or square radix-2 2D matrix of samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    OneD(Array1<f64>),
    TwoD(Array2<f64>),
}

impl Signal {
    pub fn one_d(data: Vec<f64>) -> Result<Self> {
        check_len(data.len())?;
        Ok(Signal::OneD(Array1::from(data)))
    }

    pub fn two_d(data: Array2<f64>) -> Result<Self> {
        check_square(&data)?;
        Ok(Signal::TwoD(data))
    }

    /// Dimensions, `[n]` or `[n, n]`.
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Signal::OneD(v) => vec![v.len()],
            Signal::TwoD(m) => vec![m.nrows(), m.ncols()],
        }
    }

    /// Side length `2^M`.
    pub fn side(&self) -> usize {
        match self {
            Signal::OneD(v) => v.len(),
            Signal::TwoD(m) => m.nrows(),
        }
    }

    /// Scale exponent `M`.
    pub fn scale(&self) -> u32 {
        self.side().trailing_zeros()
    }

    pub fn len(&self) -> usize {
        match self {
            Signal::OneD(v) => v.len(),
            Signal::TwoD(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flat view of the samples.
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            Signal::OneD(v) => v.to_vec(),
            Signal::TwoD(m) => m.iter().copied().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Signal::OneD(v) => check_len(v.len()),
            Signal::TwoD(m) => check_square(m),
        }
    }
}

/// Transform output. Same shape and element count as the source signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients(pub Signal);

impl WaveletCoefficients {
    pub fn signal(&self) -> &Signal {
        &self.0
    }

    pub fn into_signal(self) -> Signal {
        self.0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.to_flat()
    }
}

pub(crate) fn check_len(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Shape(format!(
            "length {n} is not a power of two >= 2"
        )));
    }
    Ok(())
}

pub(crate) fn check_square(m: &Array2<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "2D signal must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_len(m.nrows())
}

/// One analysis level: `low = L_m x`, `high = H_m x` with `x` of length
/// `2^(m+1)`, computed as a strided periodic correlation.
/// Column indices `2r, 2r+1, ..` of the `n` taps in row `r`, wrapped modulo `len`.
pub(crate) fn tap_window(r: usize, n: usize, len: usize) -> impl Iterator<Item = usize> {
    let mut k = (2 * r) % len;
    (0..n).map(move |_| {
        let i = k;
        k += 1;
        if k == len {
            k = 0;
        }
        i
    })
}

pub(crate) fn analysis_step(a: &[f64], b: &[f64], x: &[f64], low: &mut [f64], high: &mut [f64]) {
    let n = a.len();
    let len = x.len();
    for r in 0..len / 2 {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (j, col) in tap_window(r, n, len).enumerate() {
            let v = x[col];
            lo += a[n - 1 - j] * v;
            hi += b[n - 1 - j] * v;
        }
        low[r] = lo;
        high[r] = hi;
    }
}

/// Adjoint of [`analysis_step`]: `out = L_mᵀ low + H_mᵀ high`.
pub(crate) fn synthesis_step(a: &[f64], b: &[f64], low: &[f64], high: &[f64], out: &mut [f64]) {
    let n = a.len();
    let len = out.len();
    out.fill(0.0);
    for r in 0..len / 2 {
        for (j, col) in tap_window(r, n, len).enumerate() {
            out[col] += a[n - 1 - j] * low[r] + b[n - 1 - j] * high[r];
        }
    }
}

/// Full forward transform of `x` in place. `scratch` holds at least `x.len()`.
pub(crate) fn forward_in_place(x: &mut [f64], a: &[f64], b: &[f64], scratch: &mut [f64]) {
    let mut len = x.len();
    while len > 1 {
        let half = len / 2;
        let (low, high) = scratch[..len].split_at_mut(half);
        analysis_step(a, b, &x[..len], low, high);
        x[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
}

/// Full inverse transform of `c` in place. `scratch` holds at least `c.len()`.
pub(crate) fn inverse_in_place(c: &mut [f64], a: &[f64], b: &[f64], scratch: &mut [f64]) {
    let mut len = 2;
    while len <= c.len() {
        let (low, high) = c[..len].split_at(len / 2);
        synthesis_step(a, b, low, high, &mut scratch[..len]);
        c[..len].copy_from_slice(&scratch[..len]);
        len *= 2;
    }
}

/// Transposes a row-major `n x n` buffer.
pub(crate) fn transpose(buf: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Applies `step` to every row, then to every column, of a row-major square
/// buffer.
fn separable(buf: &mut [f64], n: usize, mut step: impl FnMut(&mut [f64], &mut [f64])) {
    let mut scratch = vec![0.0; n];
    for _ in 0..2 {
        for row in buf.chunks_exact_mut(n) {
            step(row, &mut scratch);
        }
        transpose(buf, n);
    }
}

pub fn forward_1d(f: &[f64], fb: &FilterBank) -> Result<Vec<f64>> {
    check_len(f.len())?;
    let mut c = f.to_vec();
    forward_in_place(&mut c, fb.coeffs(), &fb.highpass(), &mut vec![0.0; f.len()]);
    Ok(c)
}

pub fn inverse_1d(c: &[f64], fb: &FilterBank) -> Result<Vec<f64>> {
    check_len(c.len())?;
    let mut f = c.to_vec();
    inverse_in_place(&mut f, fb.coeffs(), &fb.highpass(), &mut vec![0.0; c.len()]);
    Ok(f)
}

/// Row pass then column pass of the full 1D transform.
pub fn forward_2d(f: &Array2<f64>, fb: &FilterBank) -> Result<Array2<f64>> {
    check_square(f)?;
    let n = f.nrows();
    let (a, b) = (fb.coeffs(), fb.highpass());
    let mut buf: Vec<f64> = f.iter().copied().collect();
    separable(&mut buf, n, |row, s| forward_in_place(row, a, &b, s));
    Ok(Array2::from_shape_vec((n, n), buf).expect("square buffer"))
}

/// Column inversion then row inversion.
pub fn inverse_2d(c: &Array2<f64>, fb: &FilterBank) -> Result<Array2<f64>> {
    check_square(c)?;
    let n = c.nrows();
    let (a, b) = (fb.coeffs(), fb.highpass());
    // work on the transpose so the column pass runs first
    let mut buf: Vec<f64> = c.t().iter().copied().collect();
    separable(&mut buf, n, |row, s| inverse_in_place(row, a, &b, s));
    transpose(&mut buf, n);
    Ok(Array2::from_shape_vec((n, n), buf).expect("square buffer"))
}

pub fn forward(f: &Signal, fb: &FilterBank) -> Result<WaveletCoefficients> {
    let out = match f {
        Signal::OneD(v) => Signal::OneD(Array1::from(forward_1d(&v.to_vec(), fb)?)),
        Signal::TwoD(m) => Signal::TwoD(forward_2d(m, fb)?),
    };
    Ok(WaveletCoefficients(out))
}

pub fn inverse(c: &WaveletCoefficients, fb: &FilterBank) -> Result<Signal> {
    Ok(match &c.0 {
        Signal::OneD(v) => Signal::OneD(Array1::from(inverse_1d(&v.to_vec(), fb)?)),
        Signal::TwoD(m) => Signal::TwoD(inverse_2d(m, fb)?),
    })
}

/// Position-space basis function of coefficient `index` at scale `m`
/// (signal length `2^m`).
pub fn basis_function_1d(index: usize, m: u32, fb: &FilterBank) -> Result<Vec<f64>> {
    let len = 1usize << m;
    if index >= len {
        return Err(Error::IndexOutOfRange { index, len });
    }
    let mut c = vec![0.0; len];
    c[index] = 1.0;
    inverse_1d(&c, fb)
}

/// 2D basis function of coefficient `(row, col)` on a `2^m x 2^m` grid.
pub fn basis_function_2d(index: (usize, usize), m: u32, fb: &FilterBank) -> Result<Array2<f64>> {
    let len = 1usize << m;
    for i in [index.0, index.1] {
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
    }
    let mut c = Array2::zeros((len, len));
    c[[index.0, index.1]] = 1.0;
    inverse_2d(&c, fb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn max_diff(x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn haar_forward_example() {
        let c = forward_1d(&[1.0, 2.0, 3.0, 4.0], &FilterBank::haar()).unwrap();
        assert!(max_diff(&c, &[5.0, 2.0, H, H]) < 1e-14);
        let energy: f64 = c.iter().map(|v| v * v).sum();
        assert!((energy - 30.0).abs() < 1e-12);
    }

    #[test]
    fn haar_inverse_example() {
        let f = inverse_1d(&[5.0, 2.0, H, H], &FilterBank::haar()).unwrap();
        assert!(max_diff(&f, &[1.0, 2.0, 3.0, 4.0]) < 1e-14);
    }

    #[test]
    fn constant_signal_has_no_detail() {
        let k = 1.7;
        for m in 1..7u32 {
            let c = forward_1d(&vec![k; 1 << m], &FilterBank::haar()).unwrap();
            assert!((c[0] - k * 2f64.powf(m as f64 / 2.0)).abs() < 1e-12);
            assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn unit_average_is_flat() {
        let mut c = vec![0.0; 8];
        c[0] = 1.0;
        let f = inverse_1d(&c, &FilterBank::haar()).unwrap();
        let level = 2f64.powf(-1.5);
        assert!(f.iter().all(|v| (v - level).abs() < 1e-15));

        assert!(inverse_1d(&[0.0; 16], &FilterBank::daubechies4())
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn daubechies_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fb = FilterBank::daubechies4();
        let f: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = inverse_1d(&forward_1d(&f, &fb).unwrap(), &fb).unwrap();
        assert!(max_diff(&f, &back) < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let fb = FilterBank::haar();
        assert!(matches!(
            forward_1d(&[1.0, 2.0, 3.0], &fb),
            Err(Error::Shape(_))
        ));
        assert!(matches!(forward_1d(&[1.0], &fb), Err(Error::Shape(_))));
        assert!(matches!(inverse_1d(&[1.0; 6], &fb), Err(Error::Shape(_))));
        assert!(forward_2d(&Array2::zeros((4, 8)), &fb).is_err());
        assert!(forward_2d(&Array2::zeros((3, 3)), &fb).is_err());
        assert!(inverse_2d(&Array2::zeros((2, 4)), &fb).is_err());
    }

    #[test]
    fn ones_2x2() {
        let c = forward_2d(&Array2::ones((2, 2)), &FilterBank::haar()).unwrap();
        assert!((c[[0, 0]] - 2.0).abs() < 1e-15);
        assert!(c[[0, 1]].abs() < 1e-15 && c[[1, 0]].abs() < 1e-15 && c[[1, 1]].abs() < 1e-15);
    }

    #[test]
    fn round_trip_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((64, 64), |_| rng.random_range(-1.0..1.0));
        for fb in [FilterBank::haar(), FilterBank::daubechies4()] {
            let c = forward_2d(&x, &fb).unwrap();
            let back = inverse_2d(&c, &fb).unwrap();
            let err = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-10);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            assert!((ex - ec).abs() < 1e-9 * ex);
        }
    }

    #[test]
    fn explicit_matrices_agree_with_strided_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fb = FilterBank::new((0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        for m in 0..5u32 {
            let x: Vec<f64> = (0..(2usize << m))
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let half = 1usize << m;
            let (mut lo, mut hi) = (vec![0.0; half], vec![0.0; half]);
            analysis_step(fb.coeffs(), &fb.highpass(), &x, &mut lo, &mut hi);
            let xv = Array1::from(x.clone());
            let lo_m = fb.lowpass_matrix(m).dot(&xv);
            let hi_m = fb.highpass_matrix(m).dot(&xv);
            assert!(max_diff(&lo, lo_m.as_slice().unwrap()) < 1e-14);
            assert!(max_diff(&hi, hi_m.as_slice().unwrap()) < 1e-14);
        }
    }

    #[test]
    fn basis_examples() {
        let fb = FilterBank::haar();
        let f = basis_function_1d(0, 3, &fb).unwrap();
        assert!(f.iter().all(|v| (v - 2f64.powf(-1.5)).abs() < 1e-15));

        let f = basis_function_1d(1, 1, &fb).unwrap();
        assert!(max_diff(&f, &[-H, H]) < 1e-15);

        assert!(matches!(
            basis_function_1d(8, 3, &fb),
            Err(Error::IndexOutOfRange { index: 8, len: 8 })
        ));
        assert!(basis_function_2d((0, 4), 2, &fb).is_err());
    }

    #[test]
    fn basis_is_orthonormal() {
        for fb in [FilterBank::haar(), FilterBank::daubechies4()] {
            let m = 4;
            let basis: Vec<Vec<f64>> = (0..16)
                .map(|i| basis_function_1d(i, m, &fb).unwrap())
                .collect();
            for (i, u) in basis.iter().enumerate() {
                for (j, v) in basis.iter().enumerate() {
                    let dot: f64 = u.iter().zip(v).map(|(p, q)| p * q).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-9);
                }
            }
        }
    }

    fn valid_filter() -> impl Strategy<Value = FilterBank> {
        prop_oneof![Just(FilterBank::haar()), Just(FilterBank::daubechies4())]
    }

    proptest! {
        #[test]
        fn perfect_reconstruction_1d(
            fb in valid_filter(),
            m in 1u32..=6,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = (0..(1usize << m)).map(|_| rng.random_range(-10.0..10.0)).collect();
            let c = forward_1d(&f, &fb).unwrap();
            prop_assert!(max_diff(&inverse_1d(&c, &fb).unwrap(), &f) < 1e-9);
            let ef: f64 = f.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            prop_assert!((ef - ec).abs() < 1e-9 * ef);
        }

        #[test]
        fn perfect_reconstruction_2d(
            fb in valid_filter(),
            m in 1u32..=6,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1usize << m;
            let x = Array2::from_shape_fn((n, n), |_| rng.random_range(-10.0..10.0));
            let c = forward_2d(&x, &fb).unwrap();
            let back = inverse_2d(&c, &fb).unwrap();
            prop_assert!((&back - &x).iter().all(|v| v.abs() < 1e-9));
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            prop_assert!((ex - ec).abs() < 1e-9 * ex);
        }

        #[test]
        fn linear(
            a in proptest::collection::vec(-1.0f64..1.0, 4),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let fb = FilterBank::new(a).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| alpha * x + beta * y).collect();
            let lhs = forward_1d(&mix, &fb).unwrap();
            let cf = forward_1d(&f, &fb).unwrap();
            let cg = forward_1d(&g, &fb).unwrap();
            let rhs: Vec<f64> = cf.iter().zip(&cg).map(|(x, y)| alpha * x + beta * y).collect();
            let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(max_diff(&lhs, &rhs) < 1e-12 * scale);
        }
    }
}
