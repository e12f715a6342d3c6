//! The five algorithm variants, parallel correction, pilot tuning and
//! replication.

use std::time::Instant;

use ismc_core::mcmc::{
    da_step, pm_step, rwm_step, thin_jump_chain, ChainState, DaState, JumpChainBuilder, JumpRecord, Proposal,
};
use ismc_core::rng::{derive_seed, stream, tag, StreamRng};
use ismc_core::weighting::{convex_combine, BatchSummary, EstimatorAccumulator};
use ismc_core::WeightedBatch;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, RunConfig};
use crate::experiment::Experiment;
use crate::error::{PipelineError, Result};

/// Number of batches for the batch-means standard errors.
pub const N_BATCH_MEANS: usize = 25;

/// Largest particle count tried by [`pilot_tune_m`].
pub const PILOT_CAP: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: String,
    pub algorithm: String,
    pub scheme: String,
    pub seed: u64,
    pub m: usize,
    pub functionals: Vec<String>,
    pub estimates: Vec<f64>,
    pub v_n: Vec<f64>,
    pub n_v_n: Vec<f64>,
    /// Batch-means standard errors over the post-burn-in iterations.
    pub se_batch: Vec<f64>,
    /// Post-burn-in acceptance rate (stage 1 for DA).
    pub acceptance_rate: f64,
    /// DA only: fraction of stage-1 acceptances that passed stage 2.
    pub stage2_acceptance_rate: Option<f64>,
    pub jump_chain_len: usize,
    pub corrected_records: usize,
    pub phase1_s: f64,
    pub phase2_s: f64,
    pub overhead_s: f64,
    pub total_s: f64,
}

impl RunResult {
    /// `sqrt(v_n)` per functional.
    pub fn se(&self) -> Vec<f64> {
        self.v_n.iter().map(|v| v.sqrt()).collect()
    }

    /// The larger of `sqrt(v_n)` and the batch-means standard error.
    pub fn se_conservative(&self) -> Vec<f64> {
        self.v_n.iter().zip(&self.se_batch).map(|(v, b)| v.sqrt().max(*b)).collect()
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.functionals.iter().position(|f| f == name).map(|i| self.estimates[i])
    }

    /// The result with wall-clock timings zeroed, serialised. Equal
    /// fingerprints mean bit-identical estimates.
    pub fn fingerprint(&self) -> String {
        let mut r = self.clone();
        r.phase1_s = 0.0;
        r.phase2_s = 0.0;
        r.overhead_s = 0.0;
        r.total_s = 0.0;
        serde_json::to_string(&r).expect("serialisable")
    }
}

struct Phase1 {
    records: Vec<JumpRecord>,
    /// Latent features of each record (exact chains only).
    features: Vec<Vec<f64>>,
    accepted: usize,
    stage2_accepted: usize,
    post_iters: usize,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::config(format!("cannot start thread pool: {e}")))
}

/// Applies `weigh` to every record in parallel. Record `k` draws from the
/// stream `(seed, CORRECTION, k)`, so the output does not depend on
/// `threads`.
pub fn correct_parallel<T, F>(records: &[JumpRecord], threads: usize, seed: u64, weigh: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&JumpRecord, &mut StreamRng) -> Result<T> + Sync,
{
    if records.is_empty() {
        return Err(PipelineError::config("no jump records to correct"));
    }
    thread_pool(threads)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                let mut rng = stream(seed, tag::CORRECTION, r.index as u64);
                weigh(r, &mut rng)
            })
            .collect()
    })
}

fn stage1_target(exp: &dyn Experiment, theta: &[f64], rng: &mut StreamRng) -> Result<(f64, Option<f64>)> {
    let lp = exp.log_prior(theta);
    if lp == f64::NEG_INFINITY {
        return Ok((lp, None));
    }
    let ll = exp.approx_log_lik(theta, rng)?;
    Ok((lp + ll, exp.approx_is_pseudo_marginal().then_some(ll)))
}

/// Markov chain targeting the approximate posterior.
fn approx_chain(cfg: &RunConfig, exp: &dyn Experiment, theta0: Vec<f64>, n_iters: usize, n_burn: usize) -> Result<Phase1> {
    let mut rng = stream(cfg.seed, tag::PHASE1, 0);
    let mut proposal = exp.proposal();
    let pm = exp.approx_is_pseudo_marginal();
    let (lt0, lu0) = stage1_target(exp, &theta0, &mut rng)?;
    if !lt0.is_finite() {
        return Err(PipelineError::config("approximate posterior vanishes at the initial value"));
    }
    let mut state = ChainState { theta: theta0, log_post_approx: lt0, log_u: lu0 };
    let mut builder = JumpChainBuilder::new();
    let mut accepted = 0;
    // deterministic approximations ignore their stream
    let scratch = stream(0, 0, 0);
    for i in 0..n_iters {
        if i == n_burn {
            proposal.freeze();
        }
        let step = if pm {
            pm_step(&state, &proposal, |t| exp.log_prior(t), |t, r| ll_core(exp.approx_log_lik(t, r)), cfg.inflation, &mut rng)?
        } else {
            let mut err = None;
            let step = rwm_step(
                &state,
                |t| match stage1_target(exp, t, &mut scratch.clone()) {
                    Ok((lt, _)) => lt,
                    Err(e) => {
                        err = Some(e);
                        f64::NEG_INFINITY
                    }
                },
                &proposal,
                &mut rng,
            );
            if let Some(e) = err {
                return Err(e);
            }
            step
        };
        if i < n_burn {
            proposal.adapt(&step.proposal, step.alpha)?;
        }
        state = step.state;
        if i >= n_burn {
            accepted += step.accepted as usize;
            builder.push(&state, step.accepted || i == n_burn);
        }
    }
    Ok(Phase1 { records: builder.finish(), features: Vec::new(), accepted, stage2_accepted: 0, post_iters: n_iters - n_burn })
}

/// Converts pipeline errors inside core closures; the core step functions
/// only carry core errors.
fn ll_core(r: Result<f64>) -> ismc_core::Result<f64> {
    r.map_err(|e| match e {
        PipelineError::Numeric(e) => e,
        _ => ismc_core::Error::InvalidModel("likelihood evaluation failed"),
    })
}

fn batch_core<X>(r: Result<WeightedBatch<X>>) -> ismc_core::Result<WeightedBatch<X>> {
    r.map_err(|e| match e {
        PipelineError::Numeric(e) => e,
        _ => ismc_core::Error::InvalidModel("latent sampling failed"),
    })
}

/// Pseudo-marginal chain on the exact posterior with `m`-sample estimates.
fn pm_chain(cfg: &RunConfig, exp: &dyn Experiment, theta0: Vec<f64>) -> Result<Phase1> {
    let mut rng = stream(cfg.seed, tag::PHASE1, 0);
    let mut proposal = exp.proposal();
    let n_burn = cfg.n_burnin();
    let b0 = exp.exact_sample(&theta0, cfg.m, &mut rng)?;
    let lu0 = ismc_core::mcmc::inflate(b0.log_total(), cfg.inflation)?;
    let mut feat = b0.draws()[0].clone();
    let mut state = ChainState { log_post_approx: exp.log_prior(&theta0) + lu0, theta: theta0, log_u: Some(lu0) };
    let mut builder = JumpChainBuilder::new();
    let mut features = Vec::new();
    let mut accepted = 0;
    for i in 0..cfg.n_iters {
        if i == n_burn {
            proposal.freeze();
        }
        let mut proposed = None;
        let step = pm_step(
            &state,
            &proposal,
            |t| exp.log_prior(t),
            |t, r| {
                let b = batch_core(exp.exact_sample(t, cfg.m, r))?;
                let lu = b.log_total();
                proposed = Some(b.draws()[0].clone());
                Ok(lu)
            },
            cfg.inflation,
            &mut rng,
        )?;
        if i < n_burn {
            proposal.adapt(&step.proposal, step.alpha)?;
        }
        if step.accepted {
            feat = proposed.expect("accepted proposals were evaluated");
        }
        state = step.state;
        if i >= n_burn {
            accepted += step.accepted as usize;
            let before = builder.len();
            builder.push(&state, step.accepted || i == n_burn);
            if builder.len() > before {
                features.push(feat.clone());
            }
        }
    }
    Ok(Phase1 { records: builder.finish(), features, accepted, stage2_accepted: 0, post_iters: cfg.n_iters - n_burn })
}

/// `log` of the approximate likelihood stored in a chain state.
fn approx_log_lik_of(exp: &dyn Experiment, state_theta: &[f64], log_post_approx: f64, log_u: Option<f64>) -> f64 {
    log_u.unwrap_or_else(|| log_post_approx - exp.log_prior(state_theta))
}

/// Delayed acceptance: the approximate posterior screens proposals, the
/// correction batch decides.
fn da_chain(cfg: &RunConfig, exp: &dyn Experiment, theta0: Vec<f64>) -> Result<Phase1> {
    let mut rng = stream(cfg.seed, tag::PHASE1, 0);
    let mut proposal = exp.proposal();
    let n_burn = cfg.n_burnin();
    let weigh = |chain: &ChainState, r: &mut StreamRng| -> ismc_core::Result<WeightedBatch<Vec<f64>>> {
        let b = batch_core(exp.exact_sample(&chain.theta, cfg.m, r))?;
        Ok(b.scaled(-approx_log_lik_of(exp, &chain.theta, chain.log_post_approx, chain.log_u)))
    };
    let (lt0, lu0) = stage1_target(exp, &theta0, &mut rng)?;
    if !lt0.is_finite() {
        return Err(PipelineError::config("approximate posterior vanishes at the initial value"));
    }
    let chain = ChainState { theta: theta0, log_post_approx: lt0, log_u: lu0 };
    let batch = weigh(&chain, &mut rng)?;
    let mut state = DaState { chain, batch };
    let mut builder = JumpChainBuilder::new();
    let mut features = Vec::new();
    let (mut acc1, mut acc2) = (0, 0);
    for i in 0..cfg.n_iters {
        if i == n_burn {
            proposal.freeze();
        }
        let step = da_step(
            &state,
            &proposal,
            |t, r| {
                let lp = exp.log_prior(t);
                if lp == f64::NEG_INFINITY {
                    return Ok((lp, None));
                }
                let ll = ll_core(exp.approx_log_lik(t, r))?;
                Ok((lp + ll, exp.approx_is_pseudo_marginal().then_some(ll)))
            },
            weigh,
            &mut rng,
        )?;
        if i < n_burn {
            proposal.adapt(&step.proposal, step.alpha)?;
        }
        state = step.state;
        if i >= n_burn {
            acc1 += step.accepted_stage1 as usize;
            acc2 += step.accepted_stage2 as usize;
            let before = builder.len();
            builder.push(&state.chain, step.accepted_stage2 || i == n_burn);
            if builder.len() > before {
                features.push(state.batch.draws()[0].clone());
            }
        }
    }
    Ok(Phase1 { records: builder.finish(), features, accepted: acc1, stage2_accepted: acc2, post_iters: cfg.n_iters - n_burn })
}

/// Correction batch of one record: `m` (IS2) or `m N_k` (IS1) samples, with
/// weights divided by the approximate likelihood.
fn correction_batch(
    cfg: &RunConfig,
    exp: &dyn Experiment,
    rec: &JumpRecord,
    rng: &mut StreamRng,
) -> Result<WeightedBatch<Vec<f64>>> {
    let n_k = rec.holding_time as usize;
    let batch = match cfg.algorithm {
        Algorithm::Is1 if cfg.is1_average && n_k > 1 => {
            let parts = (0..n_k).map(|_| exp.exact_sample(&rec.theta, cfg.m, rng)).collect::<Result<Vec<_>>>()?;
            convex_combine(&parts, &vec![1.0 / n_k as f64; n_k])?
        }
        Algorithm::Is1 => exp.exact_sample(&rec.theta, cfg.m * n_k, rng)?,
        _ => exp.exact_sample(&rec.theta, cfg.m, rng)?,
    };
    Ok(batch.scaled(-approx_log_lik_of(exp, &rec.theta, rec.log_post_approx, rec.log_u)))
}

fn functionals(dim: usize, n: usize) -> Vec<Box<dyn Fn(&[f64], &Vec<f64>) -> f64 + Sync>> {
    (0..n)
        .map(|j| -> Box<dyn Fn(&[f64], &Vec<f64>) -> f64 + Sync> {
            if j < dim {
                Box::new(move |t: &[f64], _: &Vec<f64>| t[j])
            } else {
                Box::new(move |_: &[f64], x: &Vec<f64>| x[j - dim])
            }
        })
        .collect()
}

/// Ratio estimates of contiguous blocks of roughly equal iteration counts;
/// returns their standard error.
fn batch_means_se(summaries: &[BatchSummary], n_f: usize) -> Vec<f64> {
    let total: u64 = summaries.iter().map(|s| s.holding_time).sum();
    let mut groups: Vec<EstimatorAccumulator> = (0..N_BATCH_MEANS).map(|_| EstimatorAccumulator::new(n_f)).collect();
    let mut cum = 0u64;
    for s in summaries {
        let g = ((cum as u128 * N_BATCH_MEANS as u128) / total.max(1) as u128) as usize;
        cum += s.holding_time;
        let _ = groups[g.min(N_BATCH_MEANS - 1)].push(s.clone());
    }
    let means: Vec<Vec<f64>> = groups.iter().filter(|g| g.count() > 0).filter_map(|g| g.estimates().ok()).collect();
    let b = means.len();
    if b < 2 {
        return vec![f64::NAN; n_f];
    }
    (0..n_f)
        .map(|j| {
            let mu = means.iter().map(|m| m[j]).sum::<f64>() / b as f64;
            let var = means.iter().map(|m| (m[j] - mu).powi(2)).sum::<f64>() / (b - 1) as f64;
            (var / b as f64).sqrt()
        })
        .collect()
}

/// Runs one configuration end to end.
pub fn run(cfg: &RunConfig, exp: &dyn Experiment) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let theta0 = crate::experiment::initial_theta(cfg, exp)?;
    let n_f = exp.functional_names().len();
    let fs = functionals(exp.dim(), n_f);
    let fs_ref = fs_ref_sync(&fs);

    let t1 = Instant::now();
    let phase1 = match cfg.algorithm {
        Algorithm::Pm => pm_chain(cfg, exp, theta0)?,
        Algorithm::Da => da_chain(cfg, exp, theta0)?,
        _ => approx_chain(cfg, exp, theta0, cfg.n_iters, cfg.n_burnin())?,
    };
    let phase1_s = t1.elapsed().as_secs_f64();
    let jump_chain_len = phase1.records.len();

    let t2 = Instant::now();
    let summaries: Vec<BatchSummary> = match cfg.algorithm {
        Algorithm::Pm | Algorithm::Da => phase1
            .records
            .iter()
            .zip(&phase1.features)
            .map(|(r, x)| {
                let b = WeightedBatch::new(r.theta.clone(), vec![1.0], vec![x.clone()])?;
                Ok(b.summarize(r.holding_time, &fs_ref))
            })
            .collect::<Result<_>>()?,
        _ => correct_records(cfg, exp, &thin_jump_chain(&phase1.records, cfg.thin)?)?,
    };
    let phase2_s = t2.elapsed().as_secs_f64();

    let corrected_records = summaries.len();
    let mut acc = EstimatorAccumulator::new(n_f);
    for s in &summaries {
        acc.push(s.clone())?;
    }
    let estimates = acc.estimates()?;
    let reports = acc.reports(&estimates)?;
    let se_batch = batch_means_se(&summaries, n_f);
    let total_s = start.elapsed().as_secs_f64();
    Ok(RunResult {
        model: cfg.model.as_str().into(),
        algorithm: cfg.algorithm.as_str().into(),
        scheme: cfg.scheme.as_str().into(),
        seed: cfg.seed,
        m: cfg.m,
        functionals: exp.functional_names(),
        estimates,
        v_n: reports.iter().map(|r| r.v_n).collect(),
        n_v_n: reports.iter().map(|r| r.n_times_v_n).collect(),
        se_batch,
        acceptance_rate: phase1.accepted as f64 / phase1.post_iters as f64,
        stage2_acceptance_rate: (cfg.algorithm == Algorithm::Da)
            .then(|| phase1.stage2_accepted as f64 / phase1.accepted.max(1) as f64),
        jump_chain_len,
        corrected_records,
        phase1_s,
        phase2_s,
        overhead_s: (total_s - phase1_s - phase2_s).max(0.0),
        total_s,
    })
}

/// Phase 2 of AI, IS1 and IS2 on given records: one summary per record.
/// For AI the "batch" is a single unit-weight approximate draw.
pub fn correct_records(cfg: &RunConfig, exp: &dyn Experiment, records: &[JumpRecord]) -> Result<Vec<BatchSummary>> {
    let fs = functionals(exp.dim(), exp.functional_names().len());
    correct_parallel(records, cfg.threads, cfg.seed, |r, rng| {
        let b = match cfg.algorithm {
            Algorithm::Ai => WeightedBatch::new(r.theta.clone(), vec![1.0], vec![exp.approx_draw(&r.theta, rng)?])?,
            Algorithm::Is1 | Algorithm::Is2 => correction_batch(cfg, exp, r, rng)?,
            other => return Err(PipelineError::config(format!("{} has no correction phase", other.as_str()))),
        };
        Ok(b.summarize(r.holding_time, &fs_ref_sync(&fs)))
    })
}

/// Post-burn-in jump chain of the approximate posterior.
pub fn approximate_jump_chain(cfg: &RunConfig, exp: &dyn Experiment) -> Result<Vec<JumpRecord>> {
    let theta0 = crate::experiment::initial_theta(cfg, exp)?;
    Ok(approx_chain(cfg, exp, theta0, cfg.n_iters, cfg.n_burnin())?.records)
}

fn fs_ref_sync(fs: &[Box<dyn Fn(&[f64], &Vec<f64>) -> f64 + Sync>]) -> Vec<&dyn Fn(&[f64], &Vec<f64>) -> f64> {
    fs.iter().map(|f| f.as_ref() as _).collect()
}

/// Posterior mean of `θ` under a short approximate run, used as the pilot
/// anchor.
pub fn anchor_estimate(cfg: &RunConfig, exp: &dyn Experiment) -> Result<Vec<f64>> {
    let theta0 = crate::experiment::initial_theta(cfg, exp)?;
    let n = cfg.pilot_iters.max(2);
    let phase1 = approx_chain(cfg, exp, theta0, n, n / 2)?;
    let total: u64 = phase1.records.iter().map(|r| r.holding_time).sum();
    let mut mean = vec![0.0; exp.dim()];
    for r in &phase1.records {
        for (m, t) in mean.iter_mut().zip(&r.theta) {
            *m += r.holding_time as f64 * t;
        }
    }
    Ok(mean.into_iter().map(|m| m / total as f64).collect())
}

/// Sample standard deviation of `log U` over `reps` independent `m`-sample
/// estimates at `theta`; infinite if any estimate is zero.
pub fn measure_delta(exp: &dyn Experiment, theta: &[f64], m: usize, reps: usize, seed: u64, threads: usize) -> Result<f64> {
    let logs = log_u_draws(exp, theta, m, reps, seed, threads, |exp, t, m, rng| {
        Ok(exp.exact_sample(t, m, rng)?.log_total())
    })?;
    Ok(sample_sd(&logs))
}

/// As [`measure_delta`] for the approximate (coarse) estimator of a
/// pseudo-marginal approximation.
pub fn measure_approx_delta(exp: &dyn Experiment, theta: &[f64], reps: usize, seed: u64, threads: usize) -> Result<f64> {
    let logs = log_u_draws(exp, theta, 0, reps, seed, threads, |exp, t, _, rng| exp.approx_log_lik(t, rng))?;
    Ok(sample_sd(&logs))
}

type LogUFn = fn(&dyn Experiment, &[f64], usize, &mut StreamRng) -> Result<f64>;

fn log_u_draws(
    exp: &dyn Experiment,
    theta: &[f64],
    m: usize,
    reps: usize,
    seed: u64,
    threads: usize,
    f: LogUFn,
) -> Result<Vec<f64>> {
    if reps < 2 {
        return Err(PipelineError::config("at least two pilot repetitions are needed"));
    }
    let base = derive_seed(seed, tag::PILOT, m as u64);
    thread_pool(threads)?.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(base, tag::PILOT, r as u64);
                match f(exp, theta, m, &mut rng) {
                    Err(PipelineError::Numeric(ismc_core::Error::NonPositiveDensity)) => Ok(f64::NEG_INFINITY),
                    other => other,
                }
            })
            .collect()
    })
}

fn sample_sd(x: &[f64]) -> f64 {
    if x.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotOutcome {
    pub m: usize,
    pub anchor: Vec<f64>,
    /// `(m, δ)` for every rung tried.
    pub trace: Vec<(usize, f64)>,
}

/// Smallest `m` in the ladder 1, 2, 4, ... whose `δ` at `anchor` is at most
/// `target_delta`.
pub fn pilot_tune_m(cfg: &RunConfig, exp: &dyn Experiment, target_delta: f64, anchor: &[f64]) -> Result<PilotOutcome> {
    if !(target_delta > 0.0) {
        return Err(PipelineError::config("target delta must be positive"));
    }
    let mut trace = Vec::new();
    let mut any_finite = false;
    let mut m = 1;
    while m <= PILOT_CAP {
        let d = measure_delta(exp, anchor, m, cfg.pilot_reps, cfg.seed, cfg.threads)?;
        trace.push((m, d));
        any_finite |= d.is_finite();
        if d <= target_delta {
            return Ok(PilotOutcome { m, anchor: anchor.to_vec(), trace });
        }
        m *= 2;
    }
    if any_finite {
        Err(PipelineError::PilotCap(PILOT_CAP))
    } else {
        Err(PipelineError::CollapseAtAnchor)
    }
}

/// `n_reps` runs with seeds split from the master seed.
pub fn replicate(cfg: &RunConfig, exp: &dyn Experiment, n_reps: usize) -> Result<Vec<RunResult>> {
    if n_reps < 2 {
        return Err(PipelineError::config("replicate needs at least two repetitions"));
    }
    (0..n_reps)
        .map(|r| {
            let c = RunConfig { seed: derive_seed(cfg.seed, tag::REPLICATE, r as u64), ..cfg.clone() };
            run(&c, exp)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub label: String,
    /// Whether the set targets the exact posterior; only exact sets enter
    /// the pooled ground truth.
    pub exact: bool,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IreRow {
    pub label: String,
    pub functional: String,
    pub mse: f64,
    pub mean_time: f64,
    pub ire: f64,
    pub rescaled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IreTable {
    pub truth: Vec<f64>,
    pub rows: Vec<IreRow>,
}

impl IreTable {
    /// `IRE = MSE × mean total time` per set and functional. The truth
    /// defaults to the pooled mean of all runs of exact sets.
    pub fn build(sets: &[RunSet], truth: Option<&[f64]>) -> Result<Self> {
        let first = sets
            .iter()
            .flat_map(|s| &s.runs)
            .next()
            .ok_or_else(|| PipelineError::config("no runs to tabulate"))?;
        let names = first.functionals.clone();
        if sets.iter().flat_map(|s| &s.runs).any(|r| r.functionals != names) {
            return Err(PipelineError::config("run sets estimate different functionals"));
        }
        let truth = match truth {
            Some(t) if t.len() == names.len() => t.to_vec(),
            Some(_) => return Err(PipelineError::config("ground truth has the wrong length")),
            None => {
                let exact: Vec<&RunResult> = sets.iter().filter(|s| s.exact).flat_map(|s| &s.runs).collect();
                if exact.is_empty() {
                    return Err(PipelineError::config("no exact runs for the pooled ground truth"));
                }
                (0..names.len()).map(|j| exact.iter().map(|r| r.estimates[j]).sum::<f64>() / exact.len() as f64).collect()
            }
        };
        let mut rows = Vec::new();
        for s in sets {
            let n = s.runs.len() as f64;
            if n == 0.0 {
                continue;
            }
            let mean_time = s.runs.iter().map(|r| r.total_s).sum::<f64>() / n;
            for (j, name) in names.iter().enumerate() {
                let mse = s.runs.iter().map(|r| (r.estimates[j] - truth[j]).powi(2)).sum::<f64>() / n;
                rows.push(IreRow {
                    label: s.label.clone(),
                    functional: name.clone(),
                    mse,
                    mean_time,
                    ire: mse * mean_time,
                    rescaled: None,
                });
            }
        }
        Ok(Self { truth, rows })
    }

    pub fn ire(&self, label: &str, functional: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label && r.functional == functional).map(|r| r.ire)
    }

    /// Divides every IRE by the baseline set's IRE of the same functional.
    pub fn rescale(&mut self, baseline: &str) -> Result<()> {
        let base: Vec<(String, f64)> =
            self.rows.iter().filter(|r| r.label == baseline).map(|r| (r.functional.clone(), r.ire)).collect();
        if base.is_empty() {
            return Err(PipelineError::config(format!("unknown baseline '{baseline}'")));
        }
        for row in &mut self.rows {
            let b = base.iter().find(|(f, _)| *f == row.functional).map(|(_, v)| *v);
            row.rescaled = b.map(|b| if row.label == baseline { 1.0 } else { row.ire / b });
        }
        Ok(())
    }
}
