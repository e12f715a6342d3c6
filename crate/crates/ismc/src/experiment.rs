//! Model and weighting-scheme combinations behind one object-safe
//! interface. Latent draws are reduced to a few scalar features (for example
//! the first and last latent values) as soon as they are produced.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use ismc_core::diffusion::{coarse_likelihood_estimator, DiffusionSsm};
use ismc_core::lgssm::{
    bootstrap_model, laplace_fit, laplace_fit_global, psi_apf_model, spdk_batch, LaplaceFit, LaplaceOptions,
    LinearGaussianDynamics, Vector,
};
use ismc_core::mcmc::{DiscreteUniform, Proposal, Proposed, RamAdapter};
use ismc_core::models::{
    DiscreteToy, GbmModel, LatentGaussianModel, LocalLevelModel, PoissonTrendModel, PriorComponent, PriorSpec,
    SvModel,
};
use ismc_core::rng::StreamRng;
use ismc_core::smc::{filter_smoother_subsample, run_filter, Resampler};
use ismc_core::weighting::subsample;
use ismc_core::WeightedBatch;
use rand::Rng;

use crate::config::{ApproxMode, InitSpec, ModelId, RunConfig, Scheme};
use crate::error::{PipelineError, Result};

/// Either proposal kind used by the pipeline.
#[derive(Debug, Clone)]
pub enum AnyProposal {
    Ram(RamAdapter),
    Discrete(DiscreteUniform),
}

impl Proposal for AnyProposal {
    fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Proposed {
        match self {
            Self::Ram(p) => p.propose(theta, rng),
            Self::Discrete(p) => p.propose(theta, rng),
        }
    }

    fn adapt(&mut self, proposed: &Proposed, alpha: f64) -> ismc_core::Result<()> {
        match self {
            Self::Ram(p) => p.adapt(proposed, alpha),
            Self::Discrete(p) => p.adapt(proposed, alpha),
        }
    }

    fn freeze(&mut self) {
        match self {
            Self::Ram(p) => p.freeze(),
            Self::Discrete(p) => p.freeze(),
        }
    }
}

pub trait Experiment: Sync {
    fn dim(&self) -> usize;

    /// Parameter names followed by latent feature names.
    fn functional_names(&self) -> Vec<String>;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn prior_mean(&self) -> Vec<f64>;

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64>;

    fn proposal(&self) -> AnyProposal {
        AnyProposal::Ram(RamAdapter::new(self.dim()))
    }

    /// Whether the approximate likelihood is itself a random estimate, in
    /// which case the approximate chain is pseudo-marginal.
    fn approx_is_pseudo_marginal(&self) -> bool {
        false
    }

    /// `log L_a(θ)`, or a coarse `log U` for pseudo-marginal approximations.
    /// `-inf` where the approximation is undefined.
    fn approx_log_lik(&self, theta: &[f64], rng: &mut StreamRng) -> Result<f64>;

    /// One latent feature vector drawn from the approximate smoothing law.
    fn approx_draw(&self, theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>>;

    /// One sub-sampled latent feature vector carrying weight `U`, an
    /// unbiased estimate of `L(θ)`, from `m` particles or samples.
    fn exact_sample(&self, theta: &[f64], m: usize, rng: &mut StreamRng) -> Result<WeightedBatch<Vec<f64>>>;
}

pub type Features<const D: usize> = fn(&[f64], &[Vector<D>]) -> Vec<f64>;

/// Linear-Gaussian latent model with Laplace-based approximation.
pub struct LaplaceExperiment<const D: usize, M> {
    pub model: M,
    pub y: Vec<f64>,
    pub scheme: Scheme,
    pub anchor: Option<LaplaceFit<D>>,
    pub anchor_theta: Option<Vec<f64>>,
    features: Features<D>,
    names: Vec<String>,
}

impl<const D: usize, M: LatentGaussianModel<D> + Sync> LaplaceExperiment<D, M>
where
    M::Family: Sync,
{
    pub fn new(model: M, y: Vec<f64>, scheme: Scheme, names: Vec<String>, features: Features<D>) -> Self {
        Self { model, y, scheme, anchor: None, anchor_theta: None, features, names }
    }

    fn parts(&self, theta: &[f64]) -> ismc_core::Result<(LinearGaussianDynamics<D>, M::Family)> {
        Ok((self.model.dynamics(theta, self.y.len())?, self.model.family(theta, &self.y)?))
    }

    fn fit(&self, dyn_: &LinearGaussianDynamics<D>, fam: &M::Family) -> ismc_core::Result<LaplaceFit<D>> {
        match &self.anchor {
            Some(a) => laplace_fit_global(dyn_, fam, a),
            None => laplace_fit(dyn_, fam, None, LaplaceOptions::default()),
        }
    }

    /// Switches to the global approximation, anchored at the maximiser of
    /// `log pr(θ) + log L_a(θ)` found by Nelder–Mead from `start`.
    pub fn with_global_anchor(mut self, start: &[f64]) -> Result<Self> {
        // the local approximation is deterministic; the stream is unused
        let rng = ismc_core::rng::stream(0, 0, 0);
        let objective = |t: &[f64]| {
            let lp = self.log_prior(t);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            lp + self.approx_log_lik(t, &mut rng.clone()).unwrap_or(f64::NEG_INFINITY)
        };
        let best = maximise(&objective, start)?;
        let (dyn_, fam) = self.parts(&best)?;
        let fit = laplace_fit(&dyn_, &fam, None, LaplaceOptions::default())?;
        self.anchor = Some(fit);
        self.anchor_theta = Some(best);
        Ok(self)
    }
}

struct NegObjective<'a>(&'a dyn Fn(&[f64]) -> f64);

impl CostFunction for NegObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let v = -(self.0)(p);
        Ok(if v.is_finite() { v } else { 1e300 })
    }
}

/// Derivative-free maximisation by Nelder–Mead.
pub fn maximise(objective: &dyn Fn(&[f64]) -> f64, start: &[f64]) -> Result<Vec<f64>> {
    if !objective(start).is_finite() {
        return Err(PipelineError::config("optimiser start has zero approximate posterior"));
    }
    let mut simplex = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut p = start.to_vec();
        p[i] += if p[i] != 0.0 { 0.1 * p[i].abs() } else { 0.05 };
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-10)
        .map_err(|e| PipelineError::config(e.to_string()))?;
    let res = Executor::new(NegObjective(objective), solver)
        .configure(|s| s.max_iters(5000))
        .run()
        .map_err(|e| PipelineError::config(format!("optimiser failed: {e}")))?;
    res.state()
        .get_best_param()
        .cloned()
        .ok_or_else(|| PipelineError::config("optimiser returned no point"))
}

impl<const D: usize, M: LatentGaussianModel<D> + Sync> Experiment for LaplaceExperiment<D, M>
where
    M::Family: Sync,
{
    fn dim(&self) -> usize {
        self.model.prior().dim()
    }

    fn functional_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.model.prior().log_density(theta)
    }

    fn prior_mean(&self) -> Vec<f64> {
        self.model.prior().mean()
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.model.prior().sample(rng)
    }

    fn approx_log_lik(&self, theta: &[f64], _rng: &mut StreamRng) -> Result<f64> {
        if self.log_prior(theta) == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let Ok((dyn_, fam)) = self.parts(theta) else { return Ok(f64::NEG_INFINITY) };
        // a failed fit (non-concave pseudo-data, singular innovation) leaves
        // the approximate target undefined there; the chain rejects it
        Ok(self.fit(&dyn_, &fam).map(|f| f.log_la).unwrap_or(f64::NEG_INFINITY))
    }

    fn approx_draw(&self, theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let (dyn_, fam) = self.parts(theta)?;
        let law = self.fit(&dyn_, &fam)?.chain_law();
        let dev = law.deviation(rng);
        let path: Vec<Vector<D>> = law.means.iter().zip(&dev).map(|(m, d)| m + d).collect();
        Ok((self.features)(theta, &path))
    }

    fn exact_sample(&self, theta: &[f64], m: usize, rng: &mut StreamRng) -> Result<WeightedBatch<Vec<f64>>> {
        let (dyn_, fam) = self.parts(theta)?;
        let batch = match self.scheme {
            Scheme::Spdk => {
                let fit = self.fit(&dyn_, &fam)?;
                let b = spdk_batch(&fit, &dyn_, &fam, m, theta.to_vec(), rng)?;
                subsample(&b, rng)?
            }
            Scheme::PsiApf => {
                let fit = self.fit(&dyn_, &fam)?;
                let model = psi_apf_model(&fit, &dyn_, &fam);
                let cloud = run_filter(&model, m, Resampler::default(), rng)?;
                filter_smoother_subsample(&cloud, theta.to_vec(), rng)?
            }
            Scheme::Bsf => {
                let model = bootstrap_model(&dyn_, &fam);
                let cloud = run_filter(&model, m, Resampler::default(), rng)?;
                filter_smoother_subsample(&cloud, theta.to_vec(), rng)?
            }
            other => return Err(PipelineError::config(format!("scheme {} needs a different model", other.as_str()))),
        };
        Ok(batch.map_draws(|p| (self.features)(theta, &p)))
    }
}

/// Geometric Brownian motion: pseudo-marginal coarse chain, fine-level
/// bootstrap correction.
pub struct GbmExperiment {
    pub model: GbmModel,
    pub y: Vec<f64>,
    pub level_coarse: u32,
    pub level_fine: u32,
    pub m_coarse: usize,
}

impl GbmExperiment {
    fn features(path: &[f64]) -> Vec<f64> {
        vec![path[0], path[path.len() - 1]]
    }

    fn filter_sample(&self, theta: &[f64], level: u32, m: usize, rng: &mut StreamRng) -> Result<WeightedBatch<Vec<f64>>> {
        let sde = self.model.sde(theta)?;
        let fam = self.model.family(theta, &self.y)?;
        let ssm = DiffusionSsm::new(&sde, &fam, self.model.z0, level, f64::ln);
        let cloud = run_filter(&ssm, m, Resampler::default(), rng)?;
        if cloud.collapsed {
            return Err(ismc_core::Error::NonPositiveDensity.into());
        }
        Ok(filter_smoother_subsample(&cloud, theta.to_vec(), rng)?.map_draws(|p| Self::features(&p)))
    }
}

impl Experiment for GbmExperiment {
    fn dim(&self) -> usize {
        3
    }

    fn functional_names(&self) -> Vec<String> {
        ["nu", "sigma_z", "sigma_y", "z_1", "z_T"].map(String::from).to_vec()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.model.prior.log_density(theta)
    }

    fn prior_mean(&self) -> Vec<f64> {
        GbmModel::PRIOR_MEAN.to_vec()
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.model.prior.sample(rng)
    }

    fn approx_is_pseudo_marginal(&self) -> bool {
        true
    }

    fn approx_log_lik(&self, theta: &[f64], rng: &mut StreamRng) -> Result<f64> {
        if self.log_prior(theta) == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let sde = self.model.sde(theta)?;
        let fam = self.model.family(theta, &self.y)?;
        let ssm = DiffusionSsm::new(&sde, &fam, self.model.z0, self.level_coarse, f64::ln);
        Ok(coarse_likelihood_estimator(&ssm, self.m_coarse, rng)?)
    }

    fn approx_draw(&self, theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let b = self.filter_sample(theta, self.level_coarse, self.m_coarse, rng)?;
        Ok(b.draws()[0].clone())
    }

    fn exact_sample(&self, theta: &[f64], m: usize, rng: &mut StreamRng) -> Result<WeightedBatch<Vec<f64>>> {
        self.filter_sample(theta, self.level_fine, m, rng)
    }
}

/// The enumerable three-state toy.
pub struct ToyExperiment {
    pub toy: DiscreteToy,
}

impl ToyExperiment {
    fn index(&self, theta: &[f64]) -> Result<usize> {
        theta
            .first()
            .and_then(|t| self.toy.index_of(*t))
            .ok_or_else(|| PipelineError::config("parameter outside the toy's value set"))
    }
}

impl Experiment for ToyExperiment {
    fn dim(&self) -> usize {
        1
    }

    fn functional_names(&self) -> Vec<String> {
        vec!["theta".into(), "x".into()]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        match theta.first().and_then(|t| self.toy.index_of(*t)) {
            Some(k) => self.toy.prior[k].ln(),
            None => f64::NEG_INFINITY,
        }
    }

    fn prior_mean(&self) -> Vec<f64> {
        // the mean is not a support point in general; start at the mode
        let k = (0..self.toy.values.len())
            .max_by(|a, b| self.toy.prior[*a].total_cmp(&self.toy.prior[*b]))
            .unwrap_or(0);
        vec![self.toy.values[k]]
    }

    fn prior_sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut c = 0.0;
        for (k, p) in self.toy.prior.iter().enumerate() {
            c += p;
            if u < c {
                return vec![self.toy.values[k]];
            }
        }
        vec![*self.toy.values.last().expect("non-empty toy")]
    }

    fn proposal(&self) -> AnyProposal {
        AnyProposal::Discrete(DiscreteUniform { values: self.toy.values.clone() })
    }

    fn approx_log_lik(&self, theta: &[f64], _rng: &mut StreamRng) -> Result<f64> {
        Ok(match theta.first().and_then(|t| self.toy.index_of(*t)) {
            Some(k) => self.toy.approx_likelihood[k].ln(),
            None => f64::NEG_INFINITY,
        })
    }

    /// The approximate latent law is uniform, which is deliberately wrong.
    fn approx_draw(&self, _theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![rng.random_range(0..2) as f64])
    }

    fn exact_sample(&self, theta: &[f64], m: usize, rng: &mut StreamRng) -> Result<WeightedBatch<Vec<f64>>> {
        let k = self.index(theta)?;
        let (w, xs) = self.toy.weighted_draws(k, m, rng);
        let b = WeightedBatch::new(theta.to_vec(), w, xs)?;
        Ok(subsample(&b, rng)?.map_draws(|x| vec![x as f64]))
    }
}

fn first_last<const D: usize>(path: &[Vector<D>], shift: f64) -> Vec<f64> {
    vec![path[0][0] + shift, path[path.len() - 1][0] + shift]
}

/// Resolves the initial parameter of a run.
pub fn initial_theta(cfg: &RunConfig, exp: &dyn Experiment) -> Result<Vec<f64>> {
    let theta = match &cfg.init {
        InitSpec::Values(v) => v.clone(),
        InitSpec::Named(n) if n == "prior-sample" => {
            exp.prior_sample(&mut ismc_core::rng::stream(cfg.seed, ismc_core::rng::tag::INIT, 0))
        }
        InitSpec::Named(_) => exp.prior_mean(),
    };
    if theta.len() != exp.dim() {
        return Err(PipelineError::config(format!("init has {} values, model needs {}", theta.len(), exp.dim())));
    }
    if exp.log_prior(&theta) == f64::NEG_INFINITY {
        return Err(PipelineError::config("init lies outside the prior support"));
    }
    Ok(theta)
}

/// Builds the experiment named by `cfg` on observations `y`.
pub fn build_experiment(cfg: &RunConfig, y: Vec<f64>) -> Result<Box<dyn Experiment>> {
    cfg.validate()?;
    let names = |theta: &[&str], latent: &[&str]| theta.iter().chain(latent).map(|s| s.to_string()).collect::<Vec<_>>();
    let global = cfg.approx == ApproxMode::Global;
    macro_rules! laplace {
        ($d:literal, $model:expr, $names:expr, $features:expr) => {{
            let exp = LaplaceExperiment::<$d, _>::new($model, y, cfg.scheme, $names, $features);
            if global {
                let start = initial_theta(cfg, &exp)?;
                Box::new(exp.with_global_anchor(&start)?) as Box<dyn Experiment>
            } else {
                Box::new(exp) as Box<dyn Experiment>
            }
        }};
    }
    Ok(match cfg.model {
        ModelId::PoissonTrend => {
            let cutoff = match cfg.prior_cutoff {
                Some(c) => c,
                None => ismc_core::models::poisson_prior_cutoff(&y)?,
            };
            laplace!(2, PoissonTrendModel::new(cutoff), names(&["sigma_eta", "sigma_xi"], &["u_1", "u_T"]), |_, p| {
                first_last(p, 0.0)
            })
        }
        ModelId::Sv => laplace!(1, SvModel::default(), names(&["nu", "phi", "sigma_eta"], &["z_1", "z_T"]), |t, p| {
            first_last(p, t[0])
        }),
        ModelId::PoissonLocalLevel => {
            laplace!(1, LocalLevelModel::poisson(local_level_prior()), names(&["sigma"], &["z_1", "z_T"]), |_, p| {
                first_last(p, 0.0)
            })
        }
        ModelId::GaussianLocalLevel => laplace!(
            1,
            LocalLevelModel::gaussian(local_level_prior(), cfg.obs_var),
            names(&["sigma"], &["z_1", "z_T"]),
            |_, p| first_last(p, 0.0)
        ),
        ModelId::Gbm => Box::new(GbmExperiment {
            model: GbmModel::default(),
            y,
            level_coarse: cfg.level_coarse,
            level_fine: cfg.level_fine,
            m_coarse: cfg.m_coarse.unwrap_or(cfg.m),
        }),
        ModelId::DiscreteToy => Box::new(ToyExperiment { toy: DiscreteToy::default() }),
    })
}

fn local_level_prior() -> PriorSpec {
    PriorSpec::new(vec![PriorComponent::Uniform { lower: 0.0, upper: 2.0 }])
}
