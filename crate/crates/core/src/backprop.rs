//! Back-propagation through the dyadic transform onto the tied filter taps.
//!
//! Every `L_m` and `H_m` layer is built from the same `N_filt` low-pass taps,
//! so the gradient on each structured-matrix entry is summed back onto the
//! tap that produced it. High-pass entries carry the sign of the reflection
//! `b[k] = (-1)^k a[N - 1 - k]`.

use ndarray::Array2;

use crate::dwt::{check_len, check_square, synthesis_step, tap_window, transpose, Signal};
use crate::error::{Error, Result};
use crate::filter_bank::{strided_matrix, FilterBank};

/// Levels with input length up to this use explicit `L_m`/`H_m` matrices;
/// longer ones use strided loops.
const EXPLICIT_MAX_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Route {
    Mixed,
    #[cfg_attr(not(test), allow(dead_code))]
    StridedOnly,
}

/// Low-pass activations recorded during a forward pass, `f_M` first and the
/// single-element `f_0` last.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub levels: Vec<Vec<f64>>,
}

impl LayerTrace {
    pub fn input(&self) -> &[f64] {
        &self.levels[0]
    }

    /// Activation at scale `m` (length `2^m`).
    pub fn at_scale(&self, m: u32) -> &[f64] {
        let top = self.levels.len() - 1;
        &self.levels[top - m as usize]
    }
}

struct Taps<'a> {
    a: &'a [f64],
    b: Vec<f64>,
    /// Row-major `(L_m, H_m)` for every level handled by the explicit route.
    mats: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'a> Taps<'a> {
    fn new(fb: &'a FilterBank) -> Self {
        let a = fb.coeffs();
        let b = fb.highpass();
        let top = (EXPLICIT_MAX_LEN / 2).trailing_zeros();
        let dense = |t: &[f64], m| strided_matrix(t, m).into_iter().collect();
        let mats = (0..=top).map(|m| (dense(a, m), dense(&b, m))).collect();
        Taps { a, b, mats }
    }

    fn n(&self) -> usize {
        self.a.len()
    }

    fn explicit(&self, route: Route, len: usize) -> Option<(&[f64], &[f64])> {
        if route == Route::Mixed && len <= EXPLICIT_MAX_LEN {
            let (l, h) = &self.mats[(len / 2).trailing_zeros() as usize];
            Some((l, h))
        } else {
            None
        }
    }

    fn analyse(&self, route: Route, x: &[f64], low: &mut [f64], high: &mut [f64]) {
        let len = x.len();
        match self.explicit(route, len) {
            Some((l, h)) => {
                for r in 0..len / 2 {
                    let row = r * len..(r + 1) * len;
                    low[r] = dot(&l[row.clone()], x);
                    high[r] = dot(&h[row], x);
                }
            }
            None => crate::dwt::analysis_step(self.a, &self.b, x, low, high),
        }
    }

    /// Accumulates tap gradients for one level and writes the gradient on
    /// that level's input into `d_x`.
    #[allow(clippy::too_many_arguments)]
    fn backward_level(
        &self,
        route: Route,
        x: &[f64],
        d_low: &[f64],
        d_high: &[f64],
        grad_a: &mut [f64],
        grad_b: &mut [f64],
        d_x: &mut [f64],
    ) {
        let n = self.n();
        let len = x.len();
        // every matrix entry holding tap k gets gradient (upstream × input)
        for r in 0..len / 2 {
            for (j, col) in tap_window(r, n, len).enumerate() {
                grad_a[n - 1 - j] += d_low[r] * x[col];
                grad_b[n - 1 - j] += d_high[r] * x[col];
            }
        }
        match self.explicit(route, len) {
            Some((l, h)) => {
                d_x.fill(0.0);
                for r in 0..len / 2 {
                    let row = r * len..(r + 1) * len;
                    for ((d, lv), hv) in d_x.iter_mut().zip(&l[row.clone()]).zip(&h[row]) {
                        *d += lv * d_low[r] + hv * d_high[r];
                    }
                }
            }
            None => synthesis_step(self.a, &self.b, d_low, d_high, d_x),
        }
    }

    /// Folds high-pass tap gradients onto the low-pass taps they mirror.
    fn fold(&self, mut grad_a: Vec<f64>, grad_b: &[f64]) -> Vec<f64> {
        let n = self.n();
        for (k, g) in grad_b.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            grad_a[n - 1 - k] += sign * g;
        }
        grad_a
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

/// Offset of the length-`len` level inside a flat trace of a length-`top`
/// signal. Levels are stored `f_M, f_(M-1), .., f_0`.
fn level_offset(top: usize, len: usize) -> usize {
    2 * top - 2 * len
}

/// Forward transform of `f` into `c`, recording every low-pass level in the
/// flat buffer `trace` (length `2 * f.len() - 1`).
fn forward_flat(taps: &Taps, route: Route, f: &[f64], trace: &mut [f64], c: &mut [f64]) {
    let top = f.len();
    trace[..top].copy_from_slice(f);
    let mut len = top;
    while len > 1 {
        let half = len / 2;
        let (done, rest) = trace.split_at_mut(level_offset(top, half));
        let x = &done[level_offset(top, len)..];
        taps.analyse(route, x, &mut rest[..half], &mut c[half..len]);
        len = half;
    }
    c[0] = trace[2 * top - 2];
}

#[allow(clippy::too_many_arguments)]
/// Back-propagates `dj_dc` through a recorded forward pass. Accumulates into
/// `grad_a`/`grad_b` and leaves the input gradient in `d_x`.
fn backward_flat(
    taps: &Taps,
    route: Route,
    trace: &[f64],
    dj_dc: &[f64],
    grad_a: &mut [f64],
    grad_b: &mut [f64],
    d_x: &mut [f64],
    scratch: &mut [f64],
) {
    let top = dj_dc.len();
    scratch[0] = dj_dc[0];
    let mut half = 1;
    while half < top {
        let len = 2 * half;
        let x = &trace[level_offset(top, len)..level_offset(top, len) + len];
        taps.backward_level(
            route,
            x,
            &scratch[..half],
            &dj_dc[half..len],
            grad_a,
            grad_b,
            &mut d_x[..len],
        );
        scratch[..len].copy_from_slice(&d_x[..len]);
        half = len;
    }
}

fn forward_traced_route(f: &[f64], taps: &Taps, route: Route) -> (Vec<f64>, LayerTrace) {
    let mut c = vec![0.0; f.len()];
    let mut trace = vec![0.0; 2 * f.len() - 1];
    forward_flat(taps, route, f, &mut trace, &mut c);
    let mut levels = Vec::new();
    let mut len = f.len();
    loop {
        let off = level_offset(f.len(), len);
        levels.push(trace[off..off + len].to_vec());
        if len == 1 {
            break;
        }
        len /= 2;
    }
    (c, LayerTrace { levels })
}

/// Forward 1D transform that also records every low-pass activation.
pub fn forward_traced(f: &[f64], fb: &FilterBank) -> Result<(Vec<f64>, LayerTrace)> {
    check_len(f.len())?;
    Ok(forward_traced_route(f, &Taps::new(fb), Route::Mixed))
}

fn check_grad_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!(
            "upstream gradient has {got} entries, signal has {expected}"
        )));
    }
    Ok(())
}

pub(crate) fn filter_gradient_1d_route(
    f: &[f64],
    fb: &FilterBank,
    dj_dc: &[f64],
    route: Route,
) -> Result<Vec<f64>> {
    check_len(f.len())?;
    check_grad_len(f.len(), dj_dc.len())?;
    let taps = Taps::new(fb);
    let len = f.len();
    let mut trace = vec![0.0; 2 * len - 1];
    let mut c = vec![0.0; len];
    forward_flat(&taps, route, f, &mut trace, &mut c);
    let mut grad_a = vec![0.0; taps.n()];
    let mut grad_b = vec![0.0; taps.n()];
    let (mut d_x, mut scratch) = (vec![0.0; len], vec![0.0; len]);
    backward_flat(
        &taps,
        route,
        &trace,
        dj_dc,
        &mut grad_a,
        &mut grad_b,
        &mut d_x,
        &mut scratch,
    );
    Ok(taps.fold(grad_a, &grad_b))
}

/// Gradient on the `N_filt` taps given `dJ/dc` for the 1D transform of `f`.
pub fn filter_gradient_1d(f: &[f64], fb: &FilterBank, dj_dc: &[f64]) -> Result<Vec<f64>> {
    filter_gradient_1d_route(f, fb, dj_dc, Route::Mixed)
}

pub(crate) fn filter_gradient_2d_route(
    f: &Array2<f64>,
    fb: &FilterBank,
    dj_dc: &Array2<f64>,
    route: Route,
) -> Result<Vec<f64>> {
    check_square(f)?;
    if f.dim() != dj_dc.dim() {
        return Err(Error::Shape(format!(
            "upstream gradient is {:?}, signal is {:?}",
            dj_dc.dim(),
            f.dim()
        )));
    }
    let taps = Taps::new(fb);
    let n = f.nrows();
    let tl = 2 * n - 1;
    let mut grad_a = vec![0.0; taps.n()];
    let mut grad_b = vec![0.0; taps.n()];
    let (mut d_x, mut scratch) = (vec![0.0; n], vec![0.0; n]);

    // row pass, keeping each row's trace for the final backward sweep
    let input: Vec<f64> = f.iter().copied().collect();
    let mut row_traces = vec![0.0; n * tl];
    let mut rows = vec![0.0; n * n];
    for ((x, tr), c) in input
        .chunks_exact(n)
        .zip(row_traces.chunks_exact_mut(tl))
        .zip(rows.chunks_exact_mut(n))
    {
        forward_flat(&taps, route, x, tr, c);
    }

    // column pass on the transposed row output; d_rows is built transposed too
    transpose(&mut rows, n);
    let up: Vec<f64> = dj_dc.t().iter().copied().collect();
    let mut d_rows = vec![0.0; n * n];
    let mut trace = vec![0.0; tl];
    let mut c = vec![0.0; n];
    for ((col, g), d) in rows
        .chunks_exact(n)
        .zip(up.chunks_exact(n))
        .zip(d_rows.chunks_exact_mut(n))
    {
        forward_flat(&taps, route, col, &mut trace, &mut c);
        backward_flat(
            &taps,
            route,
            &trace,
            g,
            &mut grad_a,
            &mut grad_b,
            d,
            &mut scratch,
        );
    }

    transpose(&mut d_rows, n);
    for (tr, g) in row_traces.chunks_exact(tl).zip(d_rows.chunks_exact(n)) {
        backward_flat(
            &taps,
            route,
            tr,
            g,
            &mut grad_a,
            &mut grad_b,
            &mut d_x,
            &mut scratch,
        );
    }
    Ok(taps.fold(grad_a, &grad_b))
}

/// Gradient on the taps for the row-then-column 2D transform.
pub fn filter_gradient_2d(
    f: &Array2<f64>,
    fb: &FilterBank,
    dj_dc: &Array2<f64>,
) -> Result<Vec<f64>> {
    filter_gradient_2d_route(f, fb, dj_dc, Route::Mixed)
}

/// Dispatches on the signal's dimensionality. For 2D signals `dj_dc` is
/// row-major.
pub fn filter_gradient(f: &Signal, fb: &FilterBank, dj_dc: &[f64]) -> Result<Vec<f64>> {
    match f {
        Signal::OneD(v) => filter_gradient_1d(&v.to_vec(), fb, dj_dc),
        Signal::TwoD(m) => {
            check_grad_len(m.len(), dj_dc.len())?;
            let up = Array2::from_shape_vec(m.dim(), dj_dc.to_vec())
                .map_err(|e| Error::Shape(e.to_string()))?;
            filter_gradient_2d(m, fb, &up)
        }
    }
}
