//! Sparsity and regularisation objectives with their gradients.

use std::f64::consts::SQRT_2;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filter_bank::{even_lag_correlation, FilterBank};

/// Per-condition on/off switches for the regularisation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionMask(pub [bool; 5]);

impl Default for ConditionMask {
    fn default() -> Self {
        ConditionMask([true; 5])
    }
}

impl ConditionMask {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn enabled(&self, k: usize) -> bool {
        self.0[k]
    }
}

impl FromStr for ConditionMask {
    type Err = Error;

    /// Five `0`/`1` characters, condition 1 first.
    fn from_str(s: &str) -> Result<Self> {
        let bits: Vec<char> = s.trim().chars().collect();
        if bits.len() != 5 || bits.iter().any(|c| *c != '0' && *c != '1') {
            return Err(Error::InvalidConfig(format!(
                "condition toggles must be five 0/1 characters, got `{s}`"
            )));
        }
        let mut mask = [false; 5];
        for (m, c) in mask.iter_mut().zip(&bits) {
            *m = *c == '1';
        }
        Ok(ConditionMask(mask))
    }
}

/// Objective value split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub sparsity: f64,
    /// Regularisation terms for conditions 1..=5 (zero when masked out).
    pub reg: [f64; 5],
    pub lambda: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(sparsity: f64, reg: [f64; 5], lambda: f64) -> Self {
        let total = sparsity + lambda * reg.iter().sum::<f64>();
        Self {
            sparsity,
            reg,
            lambda,
            total,
        }
    }

    pub fn reg_sum(&self) -> f64 {
        self.reg.iter().sum()
    }
}

/// Indices of `c` ordered by ascending magnitude; ties keep input order.
fn magnitude_order(c: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&i, &j| c[i].abs().total_cmp(&c[j].abs()));
    idx
}

/// Numerator and denominator of the Gini ratio over sorted magnitudes,
/// using 1-based ranks.
fn gini_parts(c: &[f64], order: &[usize]) -> Result<(f64, f64)> {
    let n = c.len() as f64;
    let mut num = 0.0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let mag = c[i].abs();
        num += (2.0 * (rank + 1) as f64 - n - 1.0) * mag;
        sum += mag;
    }
    if sum.is_nan() || sum <= 0.0 {
        return Err(Error::UndefinedSparsity);
    }
    Ok((num, n * sum))
}

/// Gini coefficient of the coefficient magnitudes, in `[0, 1 - 1/N]`.
pub fn gini(c: &[f64]) -> Result<f64> {
    let order = magnitude_order(c);
    let (f, g) = gini_parts(c, &order)?;
    Ok(f / g)
}

/// `1 - gini(c)`. Lower is sparser.
pub fn sparsity_cost(c: &[f64]) -> Result<f64> {
    Ok(1.0 - gini(c)?)
}

/// Gradient of [`sparsity_cost`] with respect to the signed coefficients.
/// Entries for zero coefficients are exactly zero.
pub fn sparsity_gradient(c: &[f64]) -> Result<Vec<f64>> {
    let order = magnitude_order(c);
    let (f, g) = gini_parts(c, &order)?;
    let n = c.len() as f64;
    let g2 = g * g;
    let mut grad = vec![0.0; c.len()];
    for (rank, &i) in order.iter().enumerate() {
        if c[i] == 0.0 {
            continue;
        }
        let df = 2.0 * (rank + 1) as f64 - n - 1.0;
        let d_gini = (df * g - f * n) / g2;
        grad[i] = -d_gini * c[i].signum();
    }
    Ok(grad)
}

/// `Σ_k a_k a_{k+2m} - δ_{m0}` for `m` in `0..N/2`.
fn shift_residuals(x: &[f64]) -> Vec<f64> {
    (0..(x.len() / 2) as isize)
        .map(|m| even_lag_correlation(x, x, m) - if m == 0 { 1.0 } else { 0.0 })
        .collect()
}

/// The five quadratic regularisation terms.
pub fn reg_cost(fb: &FilterBank) -> [f64; 5] {
    fb.conditions().residuals()
}

pub fn reg_cost_masked(fb: &FilterBank, mask: ConditionMask) -> [f64; 5] {
    let mut r = reg_cost(fb);
    for (k, v) in r.iter_mut().enumerate() {
        if !mask.enabled(k) {
            *v = 0.0;
        }
    }
    r
}

/// Gradient of the summed regularisation terms with respect to `a`.
pub fn reg_gradient(fb: &FilterBank) -> Vec<f64> {
    reg_gradient_masked(fb, ConditionMask::all())
}

pub fn reg_gradient_masked(fb: &FilterBank, mask: ConditionMask) -> Vec<f64> {
    let a = fb.coeffs();
    let b = fb.highpass();
    let n = a.len();
    let mut grad = vec![0.0; n];

    // a_{i+2m} + a_{i-2m}, zero outside the filter support
    let pair = |i: usize, m: usize| -> f64 {
        let up = a.get(i + 2 * m).copied().unwrap_or(0.0);
        let down = if i >= 2 * m { a[i - 2 * m] } else { 0.0 };
        up + down
    };

    if mask.enabled(0) {
        let d1 = 2.0 * (a.iter().sum::<f64>() - SQRT_2);
        grad.iter_mut().for_each(|g| *g += d1);
    }
    for (k, taps) in [(1, a), (2, &b[..])] {
        if !mask.enabled(k) {
            continue;
        }
        let res = shift_residuals(taps);
        for (i, g) in grad.iter_mut().enumerate() {
            *g += res
                .iter()
                .enumerate()
                .map(|(m, r)| 2.0 * r * pair(i, m))
                .sum::<f64>();
        }
    }
    if mask.enabled(3) {
        let sum_b: f64 = b.iter().sum();
        for (i, g) in grad.iter_mut().enumerate() {
            let sign = if (n - i - 1).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            *g += 2.0 * sum_b * sign;
        }
    }
    // condition 5 holds identically, so its gradient is zero
    grad
}

/// Combined objective `S(c) + λ Σ R_k(a)`.
pub fn total_cost(c: &[f64], fb: &FilterBank, lambda: f64) -> Result<CostBreakdown> {
    total_cost_masked(c, fb, lambda, ConditionMask::all())
}

pub fn total_cost_masked(
    c: &[f64],
    fb: &FilterBank,
    lambda: f64,
    mask: ConditionMask,
) -> Result<CostBreakdown> {
    Ok(CostBreakdown::new(
        sparsity_cost(c)?,
        reg_cost_masked(fb, mask),
        lambda,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut p = x.to_vec();
        (0..x.len())
            .map(|i| {
                p[i] = x[i] + h;
                let up = f(&p);
                p[i] = x[i] - h;
                let down = f(&p);
                p[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(x: &[f64], y: &[f64]) -> f64 {
        let diff: f64 = x
            .iter()
            .zip(y)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        diff / norm.max(1e-300)
    }

    #[test]
    fn mask_parsing() {
        assert_eq!(
            "11111".parse::<ConditionMask>().unwrap(),
            ConditionMask::all()
        );
        let m: ConditionMask = "01100".parse().unwrap();
        assert_eq!(m.0, [false, true, true, false, false]);
        for bad in ["1111", "111111", "11a11", ""] {
            assert!(bad.parse::<ConditionMask>().is_err());
        }
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(gini(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 0.75);
        assert_eq!(sparsity_cost(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 0.25);
        assert_eq!(sparsity_cost(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(gini(&[0.0, 0.0]), Err(Error::UndefinedSparsity)));
        assert!(matches!(
            sparsity_gradient(&[0.0; 4]),
            Err(Error::UndefinedSparsity)
        ));
    }

    #[test]
    fn sparsity_gradient_examples() {
        let g = sparsity_gradient(&[3.0, 1.0]).unwrap();
        assert!((g[0] + 1.0 / 16.0).abs() < 1e-15);
        assert!((g[1] - 3.0 / 16.0).abs() < 1e-15);
        let fd = central_diff(|c| sparsity_cost(c).unwrap(), &[3.0, 1.0], 1e-6);
        assert!(rel_err(&g, &fd) < 1e-8);

        let g = sparsity_gradient(&[0.0, 5.0]).unwrap();
        assert_eq!(g[0], 0.0);

        let g = sparsity_gradient(&[-3.0, 1.0]).unwrap();
        assert!((g[0] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn sparsity_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let c: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = sparsity_gradient(&c).unwrap();
            let fd = central_diff(|c| sparsity_cost(c).unwrap(), &c, 1e-6);
            assert!(rel_err(&g, &fd) < 1e-5);
        }
    }

    #[test]
    fn zero_rule_never_raises_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut c: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            for v in c.iter_mut().take(8) {
                *v = 0.0;
            }
            let g = sparsity_gradient(&c).unwrap();
            let step = 1e-7;
            let moved: Vec<f64> = c.iter().zip(&g).map(|(v, d)| v - step * d).collect();
            assert!(sparsity_cost(&moved).unwrap() <= sparsity_cost(&c).unwrap() + 1e-15);
        }
    }

    #[test]
    fn reg_examples() {
        assert!(reg_cost(&FilterBank::haar()).iter().all(|v| *v < 1e-30));
        assert!(reg_gradient(&FilterBank::haar())
            .iter()
            .all(|v| v.abs() < 1e-14));

        let r = reg_cost(&FilterBank::new(vec![1.0, 0.0]).unwrap());
        assert!((r[0] - (SQRT_2 - 1.0).powi(2)).abs() < 1e-15);
        assert_eq!(&r[1..], &[0.0, 0.0, 1.0, 0.0]);

        let r = reg_cost(&FilterBank::new(vec![0.0, 0.0]).unwrap());
        assert!((r[0] - 2.0).abs() < 1e-15);
        assert_eq!(&r[1..], &[1.0, 1.0, 0.0, 0.0]);

        let d4 = FilterBank::daubechies4();
        assert!(reg_cost(&d4).iter().sum::<f64>() < 1e-12);
    }

    #[test]
    fn d1_contribution() {
        let fb = FilterBank::new(vec![1.0, 0.0]).unwrap();
        let g = reg_gradient_masked(&fb, ConditionMask([true, false, false, false, false]));
        let want = 2.0 * (1.0 - SQRT_2);
        assert!((g[0] - want).abs() < 1e-15 && (g[1] - want).abs() < 1e-15);
    }

    #[test]
    fn reg_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in [2, 4, 8, 16] {
            for _ in 0..10 {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = reg_gradient(&FilterBank::new(a.clone()).unwrap());
                let fd = central_diff(
                    |x| reg_cost(&FilterBank::new(x.to_vec()).unwrap()).iter().sum(),
                    &a,
                    1e-6,
                );
                assert!(rel_err(&g, &fd) < 1e-5, "n = {n}");
            }
        }
    }

    #[test]
    fn masked_gradient_matches_masked_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mask = ConditionMask([false, true, true, false, true]);
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = reg_gradient_masked(&FilterBank::new(a.clone()).unwrap(), mask);
        let fd = central_diff(
            |x| {
                reg_cost_masked(&FilterBank::new(x.to_vec()).unwrap(), mask)
                    .iter()
                    .sum()
            },
            &a,
            1e-6,
        );
        assert!(rel_err(&g, &fd) < 1e-5);
    }

    #[test]
    fn total_cost_examples() {
        let spike = [0.0, 0.0, 0.0, 1.0];
        let t = total_cost(&spike, &FilterBank::haar(), 37.0).unwrap();
        assert!((t.total - 0.25).abs() < 1e-14);

        let t = total_cost(&spike, &FilterBank::new(vec![1.0, 0.0]).unwrap(), 0.0).unwrap();
        assert_eq!(t.total, t.sparsity);

        let t = total_cost(&spike, &FilterBank::new(vec![1.0, 0.0]).unwrap(), 100.0).unwrap();
        let reg = (SQRT_2 - 1.0).powi(2) + 1.0;
        assert!((t.total - (0.25 + 100.0 * reg)).abs() < 1e-12);
        assert!((t.reg_sum() - 1.171_572_875_253_81).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn gini_invariances(
            c in proptest::collection::vec(-10.0f64..10.0, 1..64),
            alpha in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
            seed in any::<u64>(),
        ) {
            prop_assume!(c.iter().any(|v| *v != 0.0));
            let g = gini(&c).unwrap();
            let n = c.len() as f64;
            prop_assert!(g >= -1e-12 && g <= 1.0 - 1.0 / n + 1e-12);

            let scaled: Vec<f64> = c.iter().map(|v| alpha * v).collect();
            prop_assert!((gini(&scaled).unwrap() - g).abs() < 1e-12);

            let mut shuffled = c.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            prop_assert!((gini(&shuffled).unwrap() - g).abs() < 1e-12);
        }
    }
}
