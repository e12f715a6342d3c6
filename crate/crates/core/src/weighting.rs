//! Weighted batches and the IS-type estimators built from them.
//!
//! A [`WeightedBatch`] is one correction term: latent draws with real
//! weights attached to a parameter value. Weights are stored relative to a
//! shared `log_scale`, so a batch whose true weights are `exp(log_scale) * w`
//! never has to materialise overflowing magnitudes.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mcmc::JumpRecord;
use crate::numeric::ExactSum;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBatch<X> {
    theta: Vec<f64>,
    weights: Vec<f64>,
    draws: Vec<X>,
    log_scale: f64,
}

impl<X> WeightedBatch<X> {
    pub fn new(theta: Vec<f64>, weights: Vec<f64>, draws: Vec<X>) -> Result<Self> {
        Self::with_log_scale(theta, weights, draws, 0.0)
    }

    /// Weights are `exp(log_scale) * weights[i]`. A `log_scale` of `-inf`
    /// marks a batch whose weights are all zero.
    pub fn with_log_scale(
        theta: Vec<f64>,
        weights: Vec<f64>,
        draws: Vec<X>,
        log_scale: f64,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != draws.len() {
            return Err(Error::EmptyBatch);
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("batch weight"));
        }
        if log_scale.is_nan() || log_scale == f64::INFINITY {
            return Err(Error::NonFinite("batch log-scale"));
        }
        let mut batch = Self { theta, weights, draws, log_scale };
        if log_scale == f64::NEG_INFINITY || batch.weights.iter().all(|w| *w == 0.0) {
            batch.log_scale = f64::NEG_INFINITY;
            batch.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(batch)
    }

    /// Builds a non-negative batch from log-weights (`-inf` allowed).
    pub fn from_log_weights(theta: Vec<f64>, log_weights: &[f64], draws: Vec<X>) -> Result<Self> {
        if log_weights.iter().any(|lw| lw.is_nan() || *lw == f64::INFINITY) {
            return Err(Error::NonFinite("log-weight"));
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            let weights = alloc::vec![0.0; log_weights.len()];
            return Self::with_log_scale(theta, weights, draws, f64::NEG_INFINITY);
        }
        let weights = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        Self::with_log_scale(theta, weights, draws, max)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Weights relative to [`Self::log_scale`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn draws(&self) -> &[X] {
        &self.draws
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.log_scale == f64::NEG_INFINITY
    }

    /// Sum of the weights relative to the log-scale.
    pub fn scaled_total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `ln Σ W^(i)` for a non-negative batch (`-inf` for a zero batch).
    pub fn log_total(&self) -> f64 {
        self.log_scale + self.scaled_total().ln()
    }

    /// Multiplies every weight by `exp(log_factor)`.
    pub fn scaled(mut self, log_factor: f64) -> Self {
        if !self.is_zero() {
            self.log_scale += log_factor;
        }
        self
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Self {
        self.theta = theta;
        self
    }

    pub fn map_draws<Y>(self, f: impl FnMut(X) -> Y) -> WeightedBatch<Y> {
        WeightedBatch {
            theta: self.theta,
            weights: self.weights,
            draws: self.draws.into_iter().map(f).collect(),
            log_scale: self.log_scale,
        }
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>, Vec<X>, f64) {
        (self.theta, self.weights, self.draws, self.log_scale)
    }

    /// `ξ(f) = Σ_i W^(i) f(θ, X^(i))` relative to the log-scale. Zero weights
    /// are skipped so `f` is never evaluated at draws that carry no mass.
    pub fn xi<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64], &X) -> f64,
    {
        self.weights
            .iter()
            .zip(&self.draws)
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, x)| w * f(&self.theta, x))
            .sum()
    }

    /// Per-function ξ values for use with [`EstimatorAccumulator`].
    pub fn summarize(&self, holding_time: u64, fs: &[&dyn Fn(&[f64], &X) -> f64]) -> BatchSummary {
        BatchSummary {
            log_scale: self.log_scale,
            holding_time,
            xi_one: self.scaled_total(),
            xi_f: fs.iter().map(|f| self.xi(f)).collect(),
        }
    }
}

/// ξ values of one batch, stripped of the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub log_scale: f64,
    pub holding_time: u64,
    pub xi_one: f64,
    pub xi_f: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    pub v_n: f64,
    pub n_times_v_n: f64,
    pub ess_like: f64,
}

/// Ratio estimators for several functions at once.
///
/// Numerators and the denominator are summed exactly (order independent)
/// after shifting every batch by the largest log-scale seen, so the result
/// does not depend on how batches were grouped or ordered.
#[derive(Debug, Clone, Default)]
pub struct EstimatorAccumulator {
    n_functions: usize,
    summaries: Vec<BatchSummary>,
}

impl EstimatorAccumulator {
    pub fn new(n_functions: usize) -> Self {
        Self { n_functions, summaries: Vec::new() }
    }

    pub fn count(&self) -> usize {
        self.summaries.len()
    }

    pub fn push(&mut self, summary: BatchSummary) -> Result<()> {
        if summary.holding_time < 1 {
            return Err(Error::InvalidHoldingTime);
        }
        if summary.xi_f.len() != self.n_functions {
            return Err(Error::InvalidArgument("summary has the wrong number of functions"));
        }
        if summary.xi_f.iter().any(|v| !v.is_finite()) || !summary.xi_one.is_finite() {
            return Err(Error::NonFinite("xi"));
        }
        self.summaries.push(summary);
        Ok(())
    }

    fn shift(&self) -> f64 {
        self.summaries
            .iter()
            .map(|s| s.log_scale)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn factor(log_scale: f64, shift: f64) -> f64 {
        if log_scale == f64::NEG_INFINITY {
            0.0
        } else {
            (log_scale - shift).exp()
        }
    }

    /// `Σ N_k ξ_k(1)` relative to the returned shift.
    pub fn denominator(&self) -> (f64, f64) {
        let shift = self.shift();
        if shift == f64::NEG_INFINITY {
            return (0.0, shift);
        }
        let mut den = ExactSum::new();
        for s in &self.summaries {
            den.add_product(s.holding_time as f64, Self::factor(s.log_scale, shift) * s.xi_one);
        }
        (den.value(), shift)
    }

    pub fn estimates(&self) -> Result<Vec<f64>> {
        let (den, shift) = self.denominator();
        if den == 0.0 {
            return Err(Error::ZeroNormaliser);
        }
        let mut out = Vec::with_capacity(self.n_functions);
        for j in 0..self.n_functions {
            let mut num = ExactSum::new();
            for s in &self.summaries {
                num.add_product(s.holding_time as f64, Self::factor(s.log_scale, shift) * s.xi_f[j]);
            }
            let e = num.value() / den;
            if !e.is_finite() {
                return Err(Error::NonFinite("estimate"));
            }
            out.push(e);
        }
        Ok(out)
    }

    /// `v_n` for each function given the estimates `e`. Holding times enter
    /// as `N_k ξ_k`, so expanded and jump-chain inputs differ only through
    /// how the terms are grouped.
    pub fn reports(&self, e: &[f64]) -> Result<Vec<VarianceReport>> {
        let (den, shift) = self.denominator();
        if den == 0.0 {
            return Err(Error::ZeroNormaliser);
        }
        let n = self.summaries.len() as f64;
        let mut sq_one = 0.0;
        for s in &self.summaries {
            let t = s.holding_time as f64 * Self::factor(s.log_scale, shift) * s.xi_one;
            sq_one += t * t;
        }
        let ess_like = den * den / sq_one;
        let mut out = Vec::with_capacity(e.len());
        for (j, e_j) in e.iter().enumerate() {
            let mut acc = 0.0;
            for s in &self.summaries {
                let c = s.holding_time as f64 * Self::factor(s.log_scale, shift);
                let d = c * (s.xi_f[j] - s.xi_one * e_j);
                acc += d * d;
            }
            let v_n = acc / (den * den);
            out.push(VarianceReport { v_n, n_times_v_n: n * v_n, ess_like });
        }
        Ok(out)
    }
}

fn accumulate<'a, X: 'a, F>(
    items: impl IntoIterator<Item = (u64, &'a WeightedBatch<X>)>,
    f: &F,
) -> Result<EstimatorAccumulator>
where
    F: Fn(&[f64], &X) -> f64,
{
    let mut acc = EstimatorAccumulator::new(1);
    let mut any = false;
    for (n, batch) in items {
        any = true;
        acc.push(batch.summarize(n, &[f]))?;
    }
    if !any {
        return Err(Error::InvalidArgument("no batches"));
    }
    Ok(acc)
}

/// `E_n(f) = Σ_k ξ_k(f) / Σ_j ξ_j(1)`.
pub fn estimate<X, F>(batches: &[WeightedBatch<X>], f: F) -> Result<f64>
where
    F: Fn(&[f64], &X) -> f64,
{
    Ok(accumulate(batches.iter().map(|b| (1, b)), &f)?.estimates()?[0])
}

/// `E_n(f) = Σ_k N_k ξ_k(f) / Σ_j N_j ξ_j(1)`.
///
/// Bit-for-bit equal to [`estimate`] applied to the expanded sequence in
/// which record `k` is repeated `N_k` times.
pub fn estimate_jump<X, F>(records: &[(JumpRecord, WeightedBatch<X>)], f: F) -> Result<f64>
where
    F: Fn(&[f64], &X) -> f64,
{
    Ok(accumulate(records.iter().map(|(r, b)| (r.holding_time, b)), &f)?.estimates()?[0])
}

/// `v_n = Σ_k (ξ_k(f) − ξ_k(1) e_n)² / (Σ_j ξ_j(1))²`.
pub fn variance_estimate<X, F>(batches: &[WeightedBatch<X>], f: F, e_n: f64) -> Result<VarianceReport>
where
    F: Fn(&[f64], &X) -> f64,
{
    Ok(accumulate(batches.iter().map(|b| (1, b)), &f)?.reports(&[e_n])?[0])
}

/// Jump-chain analogue of [`variance_estimate`] with terms `N_k ξ_k`.
pub fn variance_estimate_jump<X, F>(
    records: &[(JumpRecord, WeightedBatch<X>)],
    f: F,
    e_n: f64,
) -> Result<VarianceReport>
where
    F: Fn(&[f64], &X) -> f64,
{
    Ok(accumulate(records.iter().map(|(r, b)| (r.holding_time, b)), &f)?.reports(&[e_n])?[0])
}

/// Index `I` with `P(I = i) = W^(i) / Σ W`; `0` when all weights vanish.
pub fn subsample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::NegativeWeight);
    }
    Ok(select_index(weights, rng.random::<f64>()))
}

// Inverse-CDF selection for a uniform `u` in [0, 1).
fn select_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return 0;
    }
    let target = u * total;
    let mut cum = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        cum += w;
        last = i;
        if target < cum {
            return i;
        }
    }
    last
}

/// Reduces a non-negative batch to one draw carrying the total weight.
pub fn subsample<X: Clone, R: Rng + ?Sized>(batch: &WeightedBatch<X>, rng: &mut R) -> Result<WeightedBatch<X>> {
    let i = subsample_index(&batch.weights, rng)?;
    WeightedBatch::with_log_scale(
        batch.theta.clone(),
        alloc::vec![batch.scaled_total()],
        alloc::vec![batch.draws[i].clone()],
        batch.log_scale,
    )
}

/// Concatenates batches at a common θ with weights scaled by `betas`.
pub fn convex_combine<X: Clone>(batches: &[WeightedBatch<X>], betas: &[f64]) -> Result<WeightedBatch<X>> {
    if batches.is_empty() || batches.len() != betas.len() {
        return Err(Error::BadSimplex);
    }
    if betas.iter().any(|b| !(*b >= 0.0)) || (betas.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::BadSimplex);
    }
    let theta = &batches[0].theta;
    if batches.iter().any(|b| &b.theta != theta) {
        return Err(Error::ThetaMismatch);
    }
    let shift = batches.iter().map(|b| b.log_scale).fold(f64::NEG_INFINITY, f64::max);
    let mut weights = Vec::new();
    let mut draws = Vec::new();
    for (b, beta) in batches.iter().zip(betas) {
        let factor = if b.is_zero() { 0.0 } else { beta * (b.log_scale - shift).exp() };
        weights.extend(b.weights.iter().map(|w| w * factor));
        draws.extend(b.draws.iter().cloned());
    }
    WeightedBatch::with_log_scale(theta.clone(), weights, draws, if shift.is_finite() { shift } else { 0.0 })
}
