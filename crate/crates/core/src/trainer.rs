//! Gradient-descent training of filter taps over a signal ensemble.
//!
//! Each step draws a batch, back-propagates the mean sparsity gradient onto
//! the taps, adds the annealed regularisation gradient and applies a
//! momentum update. The regularisation weight ramps linearly from zero to
//! `lambda_final` over `anneal_steps`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::backprop::filter_gradient;
use crate::dataio::{write_text, Dataset};
use crate::dwt::{forward, Signal};
use crate::error::{Error, Result};
use crate::filter_bank::FilterBank;
use crate::objective::{
    reg_cost_masked, reg_gradient_masked, sparsity_cost, sparsity_gradient, ConditionMask,
    CostBreakdown,
};

/// Consecutive sub-tolerance steps required to declare convergence.
const CONVERGENCE_STREAK: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_filt: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lambda_final: f64,
    pub anneal_steps: usize,
    /// Examples per step. Values at or above the dataset size give full-batch
    /// gradient descent.
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub convergence_tol: f64,
    pub conditions: ConditionMask,
    /// Starting taps. Drawn on the unit hypersphere from `seed` when `None`.
    pub init: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_filt: 2,
            learning_rate: 1e-3,
            momentum: 0.9,
            lambda_final: 100.0,
            anneal_steps: 500,
            batch_size: 64,
            max_steps: 5000,
            seed: 0,
            convergence_tol: 1e-8,
            conditions: ConditionMask::all(),
            init: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_filt < 2 || !self.n_filt.is_multiple_of(2) {
            return bad(format!("n_filt must be even and >= 2, got {}", self.n_filt));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.lambda_final >= 0.0 && self.lambda_final.is_finite()) {
            return bad(format!(
                "lambda must be nonnegative, got {}",
                self.lambda_final
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return bad(format!(
                "convergence tolerance must be positive, got {}",
                self.convergence_tol
            ));
        }
        if let Some(init) = &self.init {
            if init.len() != self.n_filt {
                return bad(format!(
                    "initial filter has {} taps, n_filt is {}",
                    init.len(),
                    self.n_filt
                ));
            }
        }
        Ok(())
    }

    /// Regularisation weight in effect at `step`.
    pub fn lambda_at(&self, step: usize) -> f64 {
        if self.anneal_steps == 0 {
            self.lambda_final
        } else {
            self.lambda_final * (step as f64 / self.anneal_steps as f64).min(1.0)
        }
    }

    fn annealed(&self, step: usize) -> bool {
        step >= self.anneal_steps || self.lambda_final == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxSteps,
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Batch-mean cost at the pre-update taps, weighted by the annealed λ.
    pub cost: CostBreakdown,
    /// The same cost weighted by `lambda_final`; used to pick the best iterate.
    pub objective: f64,
    pub a: Vec<f64>,
    /// Max-norm of the applied gradient.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
    pub steps: usize,
    pub termination: Termination,
    /// Index into `records` of the returned iterate, if any step ran.
    pub best_step: Option<usize>,
}

impl TrainHistory {
    /// Running minimum of [`StepRecord::objective`].
    pub fn running_best(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.objective);
                Some(*best)
            })
            .collect()
    }

    pub fn best(&self) -> Option<&StepRecord> {
        self.best_step.map(|i| &self.records[i])
    }
}

/// Isotropic draw on the unit sphere in `n_filt` dimensions.
pub fn init_hypersphere(n_filt: usize, seed: u64) -> Result<FilterBank> {
    if n_filt < 2 || !n_filt.is_multiple_of(2) {
        return Err(Error::InvalidFilter(format!(
            "filter length must be even and >= 2, got {n_filt}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a: Vec<f64> = (0..n_filt).map(|_| rng.sample(StandardNormal)).collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return FilterBank::new(a.into_iter().map(|v| v / norm).collect());
        }
    }
}

/// Sparsity cost of one signal and its gradient on the taps.
pub fn example_gradient(signal: &Signal, fb: &FilterBank) -> Result<(f64, Vec<f64>)> {
    let c = forward(signal, fb)?.to_flat();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            step: 0,
            reason: "wavelet coefficients are not finite".into(),
        });
    }
    let cost = sparsity_cost(&c)?;
    let grad = filter_gradient(signal, fb, &sparsity_gradient(&c)?)?;
    Ok((cost, grad))
}

/// Mean sparsity cost and gradient over `indices`, reduced in index order.
fn batch_gradient(data: &[Signal], indices: &[usize], fb: &FilterBank) -> Result<(f64, Vec<f64>)> {
    let parts = indices
        .par_iter()
        .map(|&i| example_gradient(&data[i], fb))
        .collect::<Result<Vec<_>>>()?;
    let mut cost = 0.0;
    let mut grad = vec![0.0; fb.len()];
    for (c, g) in &parts {
        cost += c;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let n = indices.len() as f64;
    grad.iter_mut().for_each(|v| *v /= n);
    Ok((cost / n, grad))
}

fn check_dataset(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Deterministic batch schedule: one seeded permutation, walked cyclically.
struct Batches {
    order: Vec<usize>,
    size: usize,
    pos: usize,
}

impl Batches {
    fn new(len: usize, size: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        if size < len {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            order.shuffle(&mut rng);
        }
        Batches {
            order,
            size: size.min(len),
            pos: 0,
        }
    }

    fn next(&mut self) -> Vec<usize> {
        let len = self.order.len();
        let out = (0..self.size)
            .map(|k| self.order[(self.pos + k) % len])
            .collect();
        self.pos = (self.pos + self.size) % len;
        out
    }
}

/// Trains taps on `data`. Returns the iterate with the lowest
/// `lambda_final`-weighted cost seen, along with the full history.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(FilterBank, TrainHistory)> {
    config.validate()?;
    check_dataset(data)?;
    let init = match &config.init {
        Some(a) => FilterBank::new(a.clone())?,
        None => init_hypersphere(config.n_filt, config.seed)?,
    };

    let signals = data.signals();
    let mut batches = Batches::new(signals.len(), config.batch_size, config.seed);
    let mut a = init.coeffs().to_vec();
    let mut velocity = vec![0.0; a.len()];
    let mut records: Vec<StepRecord> = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut streak = 0;
    let mut termination = Termination::MaxSteps;

    for step in 0..config.max_steps {
        let fb = FilterBank::new(a.clone()).map_err(|_| Error::NumericalFailure {
            step,
            reason: "filter taps are no longer finite".into(),
        })?;
        let lambda = config.lambda_at(step);
        let batch = batches.next();
        let (sparsity, mut grad) = batch_gradient(signals, &batch, &fb).map_err(|e| match e {
            Error::NumericalFailure { reason, .. } => Error::NumericalFailure { step, reason },
            other => other,
        })?;
        let reg = reg_cost_masked(&fb, config.conditions);
        let reg_grad = reg_gradient_masked(&fb, config.conditions);
        for (g, r) in grad.iter_mut().zip(&reg_grad) {
            *g += lambda * r;
        }
        let cost = CostBreakdown::new(sparsity, reg, lambda);
        let objective = sparsity + config.lambda_final * cost.reg_sum();
        let grad_norm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !grad_norm.is_finite() || !objective.is_finite() {
            return Err(Error::NumericalFailure {
                step,
                reason: "non-finite gradient or cost".into(),
            });
        }

        records.push(StepRecord {
            step,
            cost,
            objective,
            a: a.clone(),
            grad_norm,
        });
        if best.is_none_or(|(b, _)| objective < b) {
            best = Some((objective, records.len() - 1));
        }

        if config.annealed(step) && grad_norm < config.convergence_tol {
            streak += 1;
            if streak >= CONVERGENCE_STREAK {
                termination = Termination::Converged;
                break;
            }
        } else {
            streak = 0;
        }

        for ((v, x), g) in velocity.iter_mut().zip(a.iter_mut()).zip(&grad) {
            *v = config.momentum * *v - config.learning_rate * g;
            *x += *v;
        }
    }

    let best_step = best.map(|(_, i)| i);
    let result = match best_step {
        Some(i) => FilterBank::new(records[i].a.clone())?,
        None => init,
    };
    let steps = records.len();
    Ok((
        result,
        TrainHistory {
            records,
            steps,
            termination,
            best_step,
        },
    ))
}

/// History as CSV: `step,sparsity,r1..r5,lambda,total,a_0..a_{N-1}`.
pub fn format_history_csv(history: &TrainHistory, n_filt: usize) -> String {
    let mut out = String::from("step,sparsity,r1,r2,r3,r4,r5,lambda,total");
    for i in 0..n_filt {
        let _ = write!(out, ",a_{i}");
    }
    out.push('\n');
    for r in &history.records {
        let c = &r.cost;
        let _ = write!(out, "{},{:?}", r.step, c.sparsity);
        for v in c.reg {
            let _ = write!(out, ",{v:?}");
        }
        let _ = write!(out, ",{:?},{:?}", c.lambda, c.total);
        for v in &r.a {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_history_csv(
    history: &TrainHistory,
    n_filt: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_text(path.as_ref(), &format_history_csv(history, n_filt))
}

/// Evenly spaced grid `min..=max` with `steps` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {steps}"
            )));
        }
        if !min.is_finite() || !max.is_finite() || max <= min {
            return Err(Error::InvalidGrid(format!("empty range {min}..{max}")));
        }
        Ok(Self { min, max, steps })
    }

    pub fn axis(&self) -> Vec<f64> {
        let span = self.max - self.min;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| self.min + span * k as f64 / last)
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.steps - 1) as f64
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `MIN:MAX:STEPS`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidGrid(format!("expected MIN:MAX:STEPS, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let min = parts[0].trim().parse().map_err(|_| bad())?;
        let max = parts[1].trim().parse().map_err(|_| bad())?;
        let steps = parts[2].trim().parse().map_err(|_| bad())?;
        GridSpec::new(min, max, steps)
    }
}

/// Average total cost over an `(a_0, a_1)` grid. `values[[i, j]]` is the cost
/// at `a = (axis[i], axis[j])`; cells where sparsity is undefined hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub axis: Vec<f64>,
    pub values: Array2<f64>,
}

impl CostMap {
    /// `(i, j, value)` of the smallest finite entry.
    pub fn argmin(&self) -> Option<(usize, usize, f64)> {
        self.values
            .indexed_iter()
            .filter(|(_, v)| v.is_finite())
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|((i, j), v)| (i, j, *v))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("a0\\a1");
        for v in &self.axis {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
        for (x, row) in self.axis.iter().zip(self.values.rows()) {
            let _ = write!(out, "{x:?}");
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }
}

fn mean_sparsity(signals: &[Signal], fb: &FilterBank) -> Result<f64> {
    let mut total = 0.0;
    for s in signals {
        total += sparsity_cost(&forward(s, fb)?.to_flat())?;
    }
    Ok(total / signals.len() as f64)
}

/// Dataset-mean cost of `fb` with the regulariser weighted by `lambda`.
pub fn evaluate(
    data: &Dataset,
    fb: &FilterBank,
    lambda: f64,
    conditions: ConditionMask,
) -> Result<CostBreakdown> {
    check_dataset(data)?;
    let sparsity = mean_sparsity(data.signals(), fb)?;
    Ok(CostBreakdown::new(
        sparsity,
        reg_cost_masked(fb, conditions),
        lambda,
    ))
}

/// Dataset-average total cost for two-tap filters over `grid`.
pub fn cost_map(data: &Dataset, grid: &GridSpec, lambda: f64) -> Result<CostMap> {
    check_dataset(data)?;
    let grid = GridSpec::new(grid.min, grid.max, grid.steps)?;
    let axis = grid.axis();
    let n = axis.len();
    let signals = data.signals();
    let rows = axis
        .par_iter()
        .map(|&a0| {
            axis.iter()
                .map(|&a1| {
                    let fb = FilterBank::new(vec![a0, a1])?;
                    let reg: f64 = reg_cost_masked(&fb, ConditionMask::all()).iter().sum();
                    match mean_sparsity(signals, &fb) {
                        Ok(s) => Ok(s + lambda * reg),
                        Err(Error::UndefinedSparsity) => Ok(f64::NAN),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let values = Array2::from_shape_vec((n, n), rows.concat()).expect("grid is square");
    Ok(CostMap { axis, values })
}
