//! Particle filter over Feynman–Kac models and the smoothing constructions
//! that turn its output into properly weighted trajectories.
//!
//! Time is zero-based: `t = 0` is the initial step.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::weighting::WeightedBatch;

/// Proposal kernels `M_t` and potentials `G_t` of a particle filter.
///
/// The product `Π_t M_t G_t` must equal the joint density `p(z_{1:T}, y_{1:T})`.
pub trait FeynmanKac {
    type State: Clone;

    fn horizon(&self) -> usize;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// Draws `Z_t` given `Z_{t-1} = prev`, for `t ≥ 1`.
    fn sample_transition<R: Rng + ?Sized>(&self, t: usize, prev: &Self::State, rng: &mut R) -> Self::State;

    /// `log G_t(z_{t-1}, z_t)`; `prev` is `None` at `t = 0`.
    fn log_potential(&self, t: usize, prev: Option<&Self::State>, cur: &Self::State) -> f64;

    /// `log C_t(z_{t-1}, z_t) = log M_t(z_t | z_{t-1}) + log G_t(z_{t-1}, z_t)`
    /// for `t ≥ 1`, when the model can evaluate it.
    fn log_markov_kernel(&self, _t: usize, _prev: &Self::State, _cur: &Self::State) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampler {
    Multinomial,
    Stratified,
    #[default]
    Systematic,
}

impl Resampler {
    pub fn resample<R: Rng + ?Sized>(self, weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
        self.resample_n(weights, weights.len(), rng)
    }

    pub fn resample_n<R: Rng + ?Sized>(self, weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
        check_probability_vector(weights)?;
        let u: Vec<f64> = match self {
            Resampler::Multinomial => ordered_uniforms(n, rng),
            Resampler::Stratified => (0..n).map(|i| (i as f64 + rng.random::<f64>()) / n as f64).collect(),
            Resampler::Systematic => {
                let u0: f64 = rng.random();
                (0..n).map(|i| (i as f64 + u0) / n as f64).collect()
            }
        };
        Ok(inverse_cdf(weights, &u))
    }
}

pub fn resample_multinomial<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    Resampler::Multinomial.resample(weights, rng)
}

pub fn resample_stratified<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    Resampler::Stratified.resample(weights, rng)
}

pub fn resample_systematic<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    Resampler::Systematic.resample(weights, rng)
}

fn check_probability_vector(w: &[f64]) -> Result<()> {
    if w.is_empty() || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::BadWeights);
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-8 {
        return Err(Error::BadWeights);
    }
    Ok(())
}

// Sorted i.i.d. uniforms from normalised exponential spacings.
fn ordered_uniforms<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            acc += e;
            acc
        })
        .collect();
    let e: f64 = Exp1.sample(rng);
    let total = acc + e;
    out.iter_mut().for_each(|v| *v /= total);
    out
}

// `u` must be sorted ascending in [0, 1).
fn inverse_cdf(weights: &[f64], u: &[f64]) -> Vec<usize> {
    let last_positive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let mut out = Vec::with_capacity(u.len());
    let mut j = 0;
    let mut cum = weights[0];
    for &ui in u {
        while ui >= cum && j < last_positive {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// Normalises log-weights; returns `(ω̄, log Σ ω)` or `None` when every
/// weight is zero.
pub fn normalise_log_weights(log_w: &[f64]) -> Option<(Vec<f64>, f64)> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Some((w, max + s.ln()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud<S> {
    pub m: usize,
    /// `states[t][i] = Z_t^(i)`.
    pub states: Vec<Vec<S>>,
    /// Unnormalised log-weights `log ω_t^(i)`.
    pub log_weights: Vec<Vec<f64>>,
    /// Normalised weights `ω̄_t^(i)` (empty at a collapsed step).
    pub weights: Vec<Vec<f64>>,
    /// `ancestors[t][i] = A_{t-1}^(i)`, the index at `t - 1` that particle
    /// `i` at `t` descends from. `ancestors[0]` is empty.
    pub ancestors: Vec<Vec<usize>>,
    /// `log ω_t^*`.
    pub log_stage_sums: Vec<f64>,
    /// `log U = Σ_t log(ω_t^* / m)`; `-inf` when collapsed.
    pub log_likelihood: f64,
    pub collapsed: bool,
}

impl<S: Clone> ParticleCloud<S> {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// Recomputes `log U` from the stage sums.
    pub fn recompute_log_likelihood(&self) -> f64 {
        if self.collapsed {
            return f64::NEG_INFINITY;
        }
        let lm = (self.m as f64).ln();
        self.log_stage_sums.iter().map(|s| s - lm).sum()
    }

    /// Genealogical path `Z̄_{0:T-1}` ending at particle `i` of the last step.
    pub fn trajectory(&self, i: usize) -> Vec<S> {
        let t_len = self.states.len();
        let mut path = Vec::with_capacity(t_len);
        let mut idx = i;
        for t in (0..t_len).rev() {
            path.push(self.states[t][idx].clone());
            if t > 0 {
                idx = self.ancestors[t][idx];
            }
        }
        path.reverse();
        path
    }
}

/// Runs the particle filter: initialise, then resample, propagate and
/// weight at every step. Stops early with `collapsed = true` if all
/// potentials at a step are zero.
pub fn run_filter<M, R>(model: &M, m: usize, resampler: Resampler, rng: &mut R) -> Result<ParticleCloud<M::State>>
where
    M: FeynmanKac,
    R: Rng + ?Sized,
{
    if m == 0 {
        return Err(Error::InvalidArgument("particle count must be positive"));
    }
    let horizon = model.horizon();
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive"));
    }
    let mut cloud = ParticleCloud {
        m,
        states: Vec::with_capacity(horizon),
        log_weights: Vec::with_capacity(horizon),
        weights: Vec::with_capacity(horizon),
        ancestors: Vec::with_capacity(horizon),
        log_stage_sums: Vec::with_capacity(horizon),
        log_likelihood: 0.0,
        collapsed: false,
    };
    let lm = (m as f64).ln();
    for t in 0..horizon {
        let (states, ancestors, log_w) = if t == 0 {
            let states: Vec<M::State> = (0..m).map(|_| model.sample_initial(rng)).collect();
            let log_w = states.iter().map(|z| model.log_potential(0, None, z)).collect::<Vec<_>>();
            (states, Vec::new(), log_w)
        } else {
            let anc = resampler.resample(&cloud.weights[t - 1], rng)?;
            let prev = &cloud.states[t - 1];
            let states: Vec<M::State> = anc.iter().map(|a| model.sample_transition(t, &prev[*a], rng)).collect();
            let log_w = anc
                .iter()
                .zip(&states)
                .map(|(a, z)| model.log_potential(t, Some(&prev[*a]), z))
                .collect::<Vec<_>>();
            (states, anc, log_w)
        };
        if log_w.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::PotentialNaN(t));
        }
        cloud.states.push(states);
        cloud.ancestors.push(ancestors);
        match normalise_log_weights(&log_w) {
            Some((w, log_sum)) => {
                cloud.weights.push(w);
                cloud.log_stage_sums.push(log_sum);
                cloud.log_likelihood += log_sum - lm;
                cloud.log_weights.push(log_w);
            }
            None => {
                cloud.weights.push(Vec::new());
                cloud.log_stage_sums.push(f64::NEG_INFINITY);
                cloud.log_weights.push(log_w);
                cloud.log_likelihood = f64::NEG_INFINITY;
                cloud.collapsed = true;
                return Ok(cloud);
            }
        }
    }
    Ok(cloud)
}

/// Full traced trajectories with weights `U ω̄_T^(i)`; all-zero weights for
/// a collapsed cloud.
pub fn filter_smoother_batch<S: Clone>(cloud: &ParticleCloud<S>, theta: Vec<f64>) -> Result<WeightedBatch<Vec<S>>> {
    let draws: Vec<Vec<S>> = (0..cloud.m).map(|i| cloud.trajectory(i)).collect();
    if cloud.collapsed {
        return WeightedBatch::with_log_scale(theta, alloc::vec![0.0; cloud.m], draws, f64::NEG_INFINITY);
    }
    let last = cloud.weights.last().expect("non-empty cloud").clone();
    WeightedBatch::with_log_scale(theta, last, draws, cloud.log_likelihood)
}

/// One filter-smoother trajectory sub-sampled by `ω̄_T`, carrying weight `U`.
pub fn filter_smoother_subsample<S: Clone, R: Rng + ?Sized>(
    cloud: &ParticleCloud<S>,
    theta: Vec<f64>,
    rng: &mut R,
) -> Result<WeightedBatch<Vec<S>>> {
    if cloud.collapsed {
        return WeightedBatch::with_log_scale(theta, alloc::vec![0.0], alloc::vec![cloud.trajectory(0)], f64::NEG_INFINITY);
    }
    let last = cloud.weights.last().expect("non-empty cloud");
    let i = crate::weighting::subsample_index(last, rng)?;
    WeightedBatch::with_log_scale(theta, alloc::vec![1.0], alloc::vec![cloud.trajectory(i)], cloud.log_likelihood)
}

fn log_backward_weights<M: FeynmanKac>(
    model: &M,
    cloud: &ParticleCloud<M::State>,
    t: usize,
    next: &M::State,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    for (i, z) in cloud.states[t - 1].iter().enumerate() {
        let w = cloud.weights[t - 1][i];
        if w == 0.0 {
            out.push(f64::NEG_INFINITY);
            continue;
        }
        let c = model.log_markov_kernel(t, z, next).ok_or(Error::MissingMarkovPotential)?;
        if c.is_nan() {
            return Err(Error::PotentialNaN(t));
        }
        out.push(w.ln() + c);
    }
    Ok(())
}

/// Backward-sampled trajectories, each with weight `U / n`.
pub fn backward_sample<M, R>(
    model: &M,
    cloud: &ParticleCloud<M::State>,
    n: usize,
    theta: Vec<f64>,
    rng: &mut R,
) -> Result<WeightedBatch<Vec<M::State>>>
where
    M: FeynmanKac,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory"));
    }
    let t_len = cloud.horizon();
    if cloud.collapsed {
        let draws = (0..n).map(|_| cloud.trajectory(0)).collect();
        return WeightedBatch::with_log_scale(theta, alloc::vec![0.0; n], draws, f64::NEG_INFINITY);
    }
    if t_len > 1 && model.log_markov_kernel(1, &cloud.states[0][0], &cloud.states[1][0]).is_none() {
        return Err(Error::MissingMarkovPotential);
    }
    let mut draws = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(cloud.m);
    for _ in 0..n {
        let mut idx = crate::weighting::subsample_index(&cloud.weights[t_len - 1], rng)?;
        let mut path = Vec::with_capacity(t_len);
        path.push(cloud.states[t_len - 1][idx].clone());
        for t in (1..t_len).rev() {
            log_backward_weights(model, cloud, t, &cloud.states[t][idx], &mut buf)?;
            let (b, _) = normalise_log_weights(&buf).ok_or(Error::ZeroNormaliser)?;
            idx = crate::weighting::subsample_index(&b, rng)?;
            path.push(cloud.states[t - 1][idx].clone());
        }
        path.reverse();
        draws.push(path);
    }
    let ln_n = (n as f64).ln();
    WeightedBatch::with_log_scale(theta, alloc::vec![1.0; n], draws, cloud.log_likelihood - ln_n)
}

/// Forward–backward smoothing weights of a particle cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    pub m: usize,
    pub log_likelihood: f64,
    /// `ω̂_t^(i)`; each row sums to one.
    pub smoothing: Vec<Vec<f64>>,
    /// `backward[t][k * m + i] = b_{t-1}(i | k)` for `t ≥ 1`; `backward[0]` is empty.
    pub backward: Vec<Vec<f64>>,
}

impl ForwardBackward {
    pub fn new<M: FeynmanKac>(model: &M, cloud: &ParticleCloud<M::State>) -> Result<Self> {
        if cloud.collapsed {
            return Err(Error::ZeroNormaliser);
        }
        let m = cloud.m;
        let t_len = cloud.horizon();
        let mut backward = alloc::vec![Vec::new(); t_len];
        let mut buf = Vec::with_capacity(m);
        for t in 1..t_len {
            let mut b = Vec::with_capacity(m * m);
            for k in 0..m {
                log_backward_weights(model, cloud, t, &cloud.states[t][k], &mut buf)?;
                let (row, _) = normalise_log_weights(&buf).ok_or(Error::ZeroNormaliser)?;
                b.extend(row);
            }
            backward[t] = b;
        }
        let mut smoothing = alloc::vec![Vec::new(); t_len];
        smoothing[t_len - 1] = cloud.weights[t_len - 1].clone();
        for t in (0..t_len - 1).rev() {
            let mut w = alloc::vec![0.0; m];
            let next = &smoothing[t + 1];
            let b = &backward[t + 1];
            for k in 0..m {
                if next[k] == 0.0 {
                    continue;
                }
                for i in 0..m {
                    w[i] += next[k] * b[k * m + i];
                }
            }
            smoothing[t] = w;
        }
        Ok(Self { m, log_likelihood: cloud.log_likelihood, smoothing, backward })
    }

    /// `b_{t-1}(i | k)`.
    pub fn backward_prob(&self, t: usize, i: usize, k: usize) -> f64 {
        self.backward[t][k * self.m + i]
    }

    /// Marginal draws `Z_t^(i)` with weights `U ω̂_t^(i)`.
    pub fn marginal_batch<S: Clone>(&self, cloud: &ParticleCloud<S>, t: usize, theta: Vec<f64>) -> Result<WeightedBatch<S>> {
        WeightedBatch::with_log_scale(theta, self.smoothing[t].clone(), cloud.states[t].clone(), self.log_likelihood)
    }

    /// Pairs `(Z_{t-1}^(i), Z_t^(j))` with weights `U b_{t-1}(i|j) ω̂_t^(j)`, `t ≥ 1`.
    pub fn pair_batch<S: Clone>(&self, cloud: &ParticleCloud<S>, t: usize, theta: Vec<f64>) -> Result<WeightedBatch<(S, S)>> {
        if t == 0 || t >= cloud.horizon() {
            return Err(Error::InvalidArgument("pair weights need 1 <= t < T"));
        }
        let m = self.m;
        let mut weights = Vec::with_capacity(m * m);
        let mut draws = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                weights.push(self.backward_prob(t, i, j) * self.smoothing[t][j]);
                draws.push((cloud.states[t - 1][i].clone(), cloud.states[t][j].clone()));
            }
        }
        WeightedBatch::with_log_scale(theta, weights, draws, self.log_likelihood)
    }
}

pub fn fb_marginal_weights<M: FeynmanKac>(model: &M, cloud: &ParticleCloud<M::State>) -> Result<ForwardBackward> {
    ForwardBackward::new(model, cloud)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingInterval {
    pub estimate: f64,
    pub v_n: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Fixed-θ smoothing: `n_repeats` independent filters, the ratio estimator
/// of `h` over their filter-smoother outputs, and `estimate ± β sqrt(v_n)`.
pub fn smooth_with_ci<M, H, R>(
    model: &M,
    m: usize,
    n_repeats: usize,
    resampler: Resampler,
    h: H,
    beta: f64,
    rng: &mut R,
) -> Result<SmoothingInterval>
where
    M: FeynmanKac,
    H: Fn(&[M::State]) -> f64,
    R: Rng + ?Sized,
{
    if n_repeats < 2 {
        return Err(Error::NotEnoughRepeats);
    }
    let mut batches = Vec::with_capacity(n_repeats);
    for _ in 0..n_repeats {
        let cloud = run_filter(model, m, resampler, rng)?;
        batches.push(filter_smoother_batch(&cloud, Vec::new())?);
    }
    let f = |_: &[f64], x: &Vec<M::State>| h(x);
    let e = crate::weighting::estimate(&batches, f)?;
    let r = crate::weighting::variance_estimate(&batches, f, e)?;
    let half = beta * r.v_n.sqrt();
    Ok(SmoothingInterval { estimate: e, v_n: r.v_n, lower: e - half, upper: e + half })
}
