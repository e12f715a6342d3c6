//! Phase 1 samplers and jump-chain bookkeeping.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numeric::log_add_exp;
use crate::weighting::WeightedBatch;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    /// `log pr(θ) + log L_a(θ)`, or `log pr(θ) + log U` for pseudo-marginal chains.
    pub log_post_approx: f64,
    /// `log U` of the retained likelihood estimate (pseudo-marginal chains only).
    pub log_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub theta: Vec<f64>,
    pub holding_time: u64,
    pub log_u: Option<f64>,
    pub log_post_approx: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposed {
    pub theta: Vec<f64>,
    /// `log q(θ', θ) − log q(θ, θ')`.
    pub log_q_ratio: f64,
    pub innovation: Vec<f64>,
}

pub trait Proposal {
    fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Proposed;

    fn adapt(&mut self, _proposed: &Proposed, _alpha: f64) -> Result<()> {
        Ok(())
    }

    fn freeze(&mut self) {}
}

/// Gaussian random-walk proposal `θ' = θ + S z` whose shape `S` follows the
/// robust adaptive Metropolis rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RamAdapter {
    chol: DMatrix<f64>,
    pub target_rate: f64,
    pub step_exponent: f64,
    iteration: u64,
    frozen: bool,
}

impl RamAdapter {
    pub fn new(dim: usize) -> Self {
        Self::with_chol(DMatrix::identity(dim, dim) * 0.1)
    }

    pub fn with_chol(chol: DMatrix<f64>) -> Self {
        Self { chol, target_rate: 0.234, step_exponent: 2.0 / 3.0, iteration: 0, frozen: false }
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// `η_n = min(1, d n^{-γ})` for the next update.
    pub fn next_step_size(&self) -> f64 {
        let n = (self.iteration + 1) as f64;
        (self.dim() as f64 * n.powf(-self.step_exponent)).min(1.0)
    }

    /// One adaptation step: `S' S'ᵀ = S (I + η (α − α*) z zᵀ / |z|²) Sᵀ`.
    pub fn ram_update(&mut self, z: &[f64], alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidAcceptance(alpha));
        }
        let eta = self.next_step_size();
        self.iteration += 1;
        self.update_with_step(z, alpha, eta)
    }

    pub fn update_with_step(&mut self, z: &[f64], alpha: f64, eta: f64) -> Result<()> {
        let norm2: f64 = z.iter().map(|v| v * v).sum();
        if norm2 == 0.0 || !norm2.is_finite() {
            return Err(Error::DegenerateInnovation);
        }
        let c = eta * (alpha - self.target_rate);
        if c == 0.0 {
            return Ok(());
        }
        let d = self.dim();
        let u = nalgebra::DVector::from_iterator(d, z.iter().map(|v| v / norm2.sqrt()));
        let mut x = &self.chol * u;
        let saved = self.chol.clone();
        x *= c.abs().sqrt();
        if !chol_rank_one(&mut self.chol, x.as_mut_slice(), c.signum()) {
            // refactorise the explicit product when the sweep loses definiteness
            let su = &saved * nalgebra::DVector::from_iterator(d, z.iter().map(|v| v / norm2.sqrt()));
            let m = &saved * saved.transpose() + (&su * su.transpose()) * c;
            match m.cholesky() {
                Some(ch) => self.chol = ch.l(),
                None => {
                    self.chol = saved;
                    return Err(Error::NonFinite("proposal shape"));
                }
            }
        }
        Ok(())
    }
}

// In-place update of a lower-triangular L so that L Lᵀ gains `sign x xᵀ`.
fn chol_rank_one(l: &mut DMatrix<f64>, x: &mut [f64], sign: f64) -> bool {
    let n = l.nrows();
    for k in 0..n {
        let lkk = l[(k, k)];
        let r2 = lkk * lkk + sign * x[k] * x[k];
        if !(r2 > 0.0) || !r2.is_finite() {
            return false;
        }
        let r = r2.sqrt();
        let c = r / lkk;
        let s = x[k] / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            l[(i, k)] = (l[(i, k)] + sign * s * x[i]) / c;
            x[i] = c * x[i] - s * l[(i, k)];
        }
    }
    (0..n).all(|k| l[(k, k)] > 0.0 && l[(k, k)].is_finite())
}

impl Proposal for RamAdapter {
    fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Proposed {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut next = theta.to_vec();
        for i in 0..d {
            for j in 0..=i {
                next[i] += self.chol[(i, j)] * z[j];
            }
        }
        Proposed { theta: next, log_q_ratio: 0.0, innovation: z }
    }

    fn adapt(&mut self, proposed: &Proposed, alpha: f64) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        self.ram_update(&proposed.innovation, alpha)
    }

    fn freeze(&mut self) {
        self.frozen = true;
    }
}

/// Symmetric proposal on a finite set of scalar values: picks one of the
/// values other than the current one uniformly at random.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteUniform {
    pub values: Vec<f64>,
}

impl Proposal for DiscreteUniform {
    fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Proposed {
        let k = self.values.len();
        let cur = self.values.iter().position(|v| *v == theta[0]).unwrap_or(0);
        let mut j = rng.random_range(0..k - 1);
        if j >= cur {
            j += 1;
        }
        Proposed { theta: alloc::vec![self.values[j]], log_q_ratio: 0.0, innovation: alloc::vec![1.0] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: ChainState,
    pub accepted: bool,
    pub alpha: f64,
    pub proposal: Proposed,
}

fn mh_alpha(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Metropolis–Hastings step on a deterministic log-target. Proposals where
/// the target is `-inf` are rejected without consuming a uniform.
pub fn rwm_step<P, F, R>(state: &ChainState, log_target: F, proposal: &P, rng: &mut R) -> Step
where
    P: Proposal,
    F: FnOnce(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let prop = proposal.propose(&state.theta, rng);
    let lt = log_target(&prop.theta);
    if lt == f64::NEG_INFINITY || lt.is_nan() {
        return Step { state: state.clone(), accepted: false, alpha: 0.0, proposal: prop };
    }
    let alpha = mh_alpha(lt - state.log_post_approx + prop.log_q_ratio);
    let u: f64 = rng.random();
    if u < alpha {
        let state = ChainState { theta: prop.theta.clone(), log_post_approx: lt, log_u: None };
        Step { state, accepted: true, alpha, proposal: prop }
    } else {
        Step { state: state.clone(), accepted: false, alpha, proposal: prop }
    }
}

/// Pseudo-marginal MH step. `log_lik_estimate` returns `log U`; with
/// `inflation = ε > 0` the chain uses `U + ε`, otherwise `U = 0` is an error.
pub fn pm_step<P, LP, LE, R>(
    state: &ChainState,
    proposal: &P,
    log_prior: LP,
    log_lik_estimate: LE,
    inflation: f64,
    rng: &mut R,
) -> Result<Step>
where
    P: Proposal,
    LP: FnOnce(&[f64]) -> f64,
    LE: FnOnce(&[f64], &mut R) -> Result<f64>,
    R: Rng + ?Sized,
{
    let current_u = state.log_u.ok_or(Error::NonPositiveEstimate)?;
    if !current_u.is_finite() {
        return Err(Error::NonPositiveEstimate);
    }
    let prop = proposal.propose(&state.theta, rng);
    let lp = log_prior(&prop.theta);
    if lp == f64::NEG_INFINITY || lp.is_nan() {
        return Ok(Step { state: state.clone(), accepted: false, alpha: 0.0, proposal: prop });
    }
    let log_u = inflate(log_lik_estimate(&prop.theta, rng)?, inflation)?;
    let lt = lp + log_u;
    let alpha = mh_alpha(lt - state.log_post_approx + prop.log_q_ratio);
    let u: f64 = rng.random();
    if u < alpha {
        let state = ChainState { theta: prop.theta.clone(), log_post_approx: lt, log_u: Some(log_u) };
        Ok(Step { state, accepted: true, alpha, proposal: prop })
    } else {
        Ok(Step { state: state.clone(), accepted: false, alpha, proposal: prop })
    }
}

/// `log(U + ε)`; errors when the result is not a finite log of a positive value.
pub fn inflate(log_u: f64, inflation: f64) -> Result<f64> {
    if log_u.is_nan() || log_u == f64::INFINITY {
        return Err(Error::NonFinite("likelihood estimate"));
    }
    let v = if inflation > 0.0 { log_add_exp(log_u, inflation.ln()) } else { log_u };
    if v == f64::NEG_INFINITY {
        return Err(Error::NonPositiveEstimate);
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaState<X> {
    pub chain: ChainState,
    pub batch: WeightedBatch<X>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaStep<X> {
    pub state: DaState<X>,
    pub accepted_stage1: bool,
    pub accepted_stage2: bool,
    /// Stage-1 acceptance probability, used for adaptation.
    pub alpha: f64,
    pub proposal: Proposed,
}

/// Delayed-acceptance step.
///
/// `first_stage` returns `(log π_a, log U)` at the proposal (`log U` only
/// for pseudo-marginal first stages). `weighter` produces the non-negative
/// correction batch `W` for an accepted first-stage state; it is not called
/// when stage 1 rejects.
pub fn da_step<X, P, S1, W, R>(
    state: &DaState<X>,
    proposal: &P,
    first_stage: S1,
    weighter: W,
    rng: &mut R,
) -> Result<DaStep<X>>
where
    X: Clone,
    P: Proposal,
    S1: FnOnce(&[f64], &mut R) -> Result<(f64, Option<f64>)>,
    W: FnOnce(&ChainState, &mut R) -> Result<WeightedBatch<X>>,
    R: Rng + ?Sized,
{
    if state.batch.weights().iter().any(|w| *w < 0.0) {
        return Err(Error::NegativeWeight);
    }
    let prop = proposal.propose(&state.chain.theta, rng);
    let reject = |alpha, prop| DaStep {
        state: state.clone(),
        accepted_stage1: false,
        accepted_stage2: false,
        alpha,
        proposal: prop,
    };
    let (lt, log_u) = first_stage(&prop.theta, rng)?;
    if lt == f64::NEG_INFINITY || lt.is_nan() {
        return Ok(reject(0.0, prop));
    }
    let alpha = mh_alpha(lt - state.chain.log_post_approx + prop.log_q_ratio);
    let u: f64 = rng.random();
    if u >= alpha {
        return Ok(reject(alpha, prop));
    }
    let chain = ChainState { theta: prop.theta.clone(), log_post_approx: lt, log_u };
    let batch = weighter(&chain, rng)?;
    if batch.weights().iter().any(|w| *w < 0.0) {
        return Err(Error::NegativeWeight);
    }
    let log_ratio = batch.log_total() - state.batch.log_total();
    let alpha2 = if state.batch.is_zero() {
        if batch.is_zero() { 0.0 } else { 1.0 }
    } else if batch.is_zero() {
        0.0
    } else {
        mh_alpha(log_ratio)
    };
    let u2: f64 = rng.random();
    if u2 < alpha2 {
        Ok(DaStep {
            state: DaState { chain, batch },
            accepted_stage1: true,
            accepted_stage2: true,
            alpha,
            proposal: prop,
        })
    } else {
        Ok(DaStep {
            state: state.clone(),
            accepted_stage1: true,
            accepted_stage2: false,
            alpha,
            proposal: prop,
        })
    }
}

/// Run-length encoding of a chain trajectory.
pub fn extract_jump_chain(thetas: &[Vec<f64>]) -> Vec<JumpRecord> {
    let mut out: Vec<JumpRecord> = Vec::new();
    for theta in thetas {
        match out.last_mut() {
            Some(last) if &last.theta == theta => last.holding_time += 1,
            _ => {
                let index = out.len();
                out.push(JumpRecord {
                    theta: theta.clone(),
                    holding_time: 1,
                    log_u: None,
                    log_post_approx: 0.0,
                    index,
                })
            }
        }
    }
    out
}

/// Builds jump records from chain steps using the acceptance flags, so that
/// an accepted move to an identical value still starts a new record.
#[derive(Debug, Clone, Default)]
pub struct JumpChainBuilder {
    records: Vec<JumpRecord>,
}

impl JumpChainBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: &ChainState, accepted: bool) {
        match self.records.last_mut() {
            Some(last) if !accepted => last.holding_time += 1,
            _ => {
                let index = self.records.len();
                self.records.push(JumpRecord {
                    theta: state.theta.clone(),
                    holding_time: 1,
                    log_u: state.log_u,
                    log_post_approx: state.log_post_approx,
                    index,
                });
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn finish(self) -> Vec<JumpRecord> {
        self.records
    }
}

pub fn expand_jump_chain(records: &[JumpRecord]) -> Vec<Vec<f64>> {
    records
        .iter()
        .flat_map(|r| core::iter::repeat(r.theta.clone()).take(r.holding_time as usize))
        .collect()
}

/// Keeps every `j`-th record; the holding times of the dropped records are
/// added to the preceding kept one, so `Σ N_k` is unchanged.
pub fn thin_jump_chain(records: &[JumpRecord], j: usize) -> Result<Vec<JumpRecord>> {
    if j == 0 {
        return Err(Error::InvalidArgument("thinning factor must be at least one"));
    }
    let mut out: Vec<JumpRecord> = Vec::with_capacity(records.len() / j + 1);
    for (k, r) in records.iter().enumerate() {
        if k % j == 0 {
            let mut kept = r.clone();
            kept.index = out.len();
            out.push(kept);
        } else if let Some(last) = out.last_mut() {
            last.holding_time += r.holding_time;
        }
    }
    Ok(out)
}
