//! Experiment models, their priors and observation families, plus small
//! models with exactly computable likelihoods for testing.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::lgssm::{LinearGaussianDynamics, Matrix, ObservationFamily, Vector, GaussianFamily};
use crate::numeric::{normal_log_pdf, std_normal_cdf, LN_2PI};
use crate::smc::FeynmanKac;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorComponent {
    /// Closed interval `[lower, upper]`.
    Uniform { lower: f64, upper: f64 },
    HalfGaussian { sd: f64 },
    Gaussian { mean: f64, sd: f64 },
    /// `N(mean, sd²)` restricted to `(lower, ∞)`.
    TruncatedGaussian { mean: f64, sd: f64, lower: f64 },
}

impl PriorComponent {
    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Uniform { lower, upper } => {
                if x < lower || x > upper {
                    f64::NEG_INFINITY
                } else {
                    -(upper - lower).ln()
                }
            }
            Self::HalfGaussian { sd } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    core::f64::consts::LN_2 + normal_log_pdf(x, 0.0, sd * sd)
                }
            }
            Self::Gaussian { mean, sd } => normal_log_pdf(x, mean, sd * sd),
            Self::TruncatedGaussian { mean, sd, lower } => {
                if x <= lower {
                    f64::NEG_INFINITY
                } else {
                    normal_log_pdf(x, mean, sd * sd) - std_normal_cdf((mean - lower) / sd).ln()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Self::HalfGaussian { sd } => sd * rng.sample::<f64, _>(StandardNormal).abs(),
            Self::Gaussian { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            Self::TruncatedGaussian { mean, sd, lower } => loop {
                // acceptance rate is Φ((mean − lower)/sd); fine for the
                // mild truncations used here
                let x = mean + sd * rng.sample::<f64, _>(StandardNormal);
                if x > lower {
                    break x;
                }
            },
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => 0.5 * (lower + upper),
            Self::HalfGaussian { sd } => sd * (2.0 / core::f64::consts::PI).sqrt(),
            Self::Gaussian { mean, .. } => mean,
            Self::TruncatedGaussian { mean, sd, lower } => {
                let a = (lower - mean) / sd;
                let phi = (-0.5 * (LN_2PI + a * a)).exp();
                mean + sd * phi / std_normal_cdf(-a)
            }
        }
    }
}

/// Independent priors, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub components: Vec<PriorComponent>,
}

impl PriorSpec {
    pub fn new(components: Vec<PriorComponent>) -> Self {
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.components.len() {
            return f64::NEG_INFINITY;
        }
        let mut s = 0.0;
        for (c, x) in self.components.iter().zip(theta) {
            s += c.log_density(*x);
            if s == f64::NEG_INFINITY {
                break;
            }
        }
        s
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.components.iter().map(PriorComponent::mean).collect()
    }
}

/// A model whose latent state follows linear-Gaussian dynamics and whose
/// observations depend on a scalar signal.
pub trait LatentGaussianModel<const D: usize> {
    type Family: ObservationFamily;

    fn prior(&self) -> &PriorSpec;

    fn dynamics(&self, theta: &[f64], horizon: usize) -> Result<LinearGaussianDynamics<D>>;

    fn family(&self, theta: &[f64], y: &[f64]) -> Result<Self::Family>;

    /// Draws a latent path and observations from the model.
    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], horizon: usize, rng: &mut R) -> Result<(Vec<Vector<D>>, Vec<f64>)>;
}

fn simulate_path<const D: usize, R: Rng + ?Sized>(
    dyn_: &LinearGaussianDynamics<D>,
    start: Option<Vector<D>>,
    rng: &mut R,
) -> Vec<Vector<D>> {
    let p1 = crate::lgssm::PsdFactor::new(&dyn_.initial_cov);
    let q = crate::lgssm::PsdFactor::new(&dyn_.state_noise);
    let mut eps = || Vector::<D>::from_fn(|_, _| rng.sample(StandardNormal));
    let mut z = start.unwrap_or_else(|| dyn_.initial_mean + p1.sqrt * eps());
    let mut path = Vec::with_capacity(dyn_.horizon);
    for t in 0..dyn_.horizon {
        if t > 0 {
            z = dyn_.transition * z + q.sqrt * eps();
        }
        path.push(z);
    }
    path
}

/// `y_t ~ Poisson(e^s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonFamily {
    pub y: Vec<f64>,
    log_factorial: Vec<f64>,
}

impl PoissonFamily {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.iter().any(|v| !(*v >= 0.0) || v.fract() != 0.0) {
            return Err(Error::InvalidArgument("Poisson observations must be non-negative integers"));
        }
        let log_factorial = y.iter().map(|v| libm::lgamma(v + 1.0)).collect();
        Ok(Self { y, log_factorial })
    }
}

impl ObservationFamily for PoissonFamily {
    fn len(&self) -> usize {
        self.y.len()
    }
    fn log_density(&self, t: usize, s: f64) -> f64 {
        self.y[t] * s - s.exp() - self.log_factorial[t]
    }
    fn d1(&self, t: usize, s: f64) -> f64 {
        self.y[t] - s.exp()
    }
    fn d2(&self, _t: usize, s: f64) -> f64 {
        -s.exp()
    }
    fn initial_pseudo(&self, t: usize) -> (f64, f64) {
        let y = self.y[t] + 0.1;
        (y.ln(), 1.0 / y)
    }
}

/// `y_t ~ N(0, e^s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvFamily {
    pub y: Vec<f64>,
}

impl SvFamily {
    /// Zero returns make the family degenerate along the signal.
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some(t) = y.iter().position(|v| *v == 0.0) {
            return Err(Error::NonConcave(t));
        }
        Ok(Self { y })
    }
}

impl ObservationFamily for SvFamily {
    fn len(&self) -> usize {
        self.y.len()
    }
    fn log_density(&self, t: usize, s: f64) -> f64 {
        normal_log_pdf(self.y[t], 0.0, s.exp())
    }
    fn d1(&self, t: usize, s: f64) -> f64 {
        -0.5 + 0.5 * self.y[t] * self.y[t] * (-s).exp()
    }
    fn d2(&self, t: usize, s: f64) -> f64 {
        -0.5 * self.y[t] * self.y[t] * (-s).exp()
    }
    fn initial_pseudo(&self, t: usize) -> (f64, f64) {
        // log χ²₁ has mean −1.2704 and variance π²/2
        ((self.y[t] * self.y[t]).ln() + 1.2704, core::f64::consts::PI * core::f64::consts::PI / 2.0)
    }
}

/// Local linear trend with Poisson counts; `θ = (σ_η, σ_ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonTrendModel {
    pub prior: PriorSpec,
    /// Forces `Z_1` in `simulate`.
    pub fixed_start: Option<[f64; 2]>,
}

impl PoissonTrendModel {
    /// `U(0, 2s)` priors on both standard deviations.
    pub fn new(cutoff: f64) -> Self {
        let c = PriorComponent::Uniform { lower: 0.0, upper: 2.0 * cutoff };
        Self { prior: PriorSpec::new(vec![c, c]), fixed_start: None }
    }
}

/// Sample standard deviation of `log y` with zeros replaced by 0.1.
pub fn poisson_prior_cutoff(y: &[f64]) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::InvalidArgument("need at least two observations"));
    }
    let logs: Vec<f64> = y.iter().map(|v| if *v == 0.0 { 0.1f64.ln() } else { v.ln() }).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    Ok((logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0)).sqrt())
}

impl LatentGaussianModel<2> for PoissonTrendModel {
    type Family = PoissonFamily;

    fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    fn dynamics(&self, theta: &[f64], horizon: usize) -> Result<LinearGaussianDynamics<2>> {
        if theta.len() != 2 {
            return Err(Error::ThetaMismatch);
        }
        Ok(LinearGaussianDynamics {
            transition: Matrix::<2>::new(1.0, 1.0, 0.0, 1.0),
            state_noise: Matrix::<2>::new(theta[0] * theta[0], 0.0, 0.0, theta[1] * theta[1]),
            initial_mean: Vector::<2>::zeros(),
            initial_cov: Matrix::<2>::identity() * 0.1,
            observation: Vector::<2>::new(1.0, 0.0),
            obs_offset: 0.0,
            horizon,
        })
    }

    fn family(&self, _theta: &[f64], y: &[f64]) -> Result<PoissonFamily> {
        PoissonFamily::new(y.to_vec())
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], horizon: usize, rng: &mut R) -> Result<(Vec<Vector<2>>, Vec<f64>)> {
        let dyn_ = self.dynamics(theta, horizon)?;
        let path = simulate_path(&dyn_, self.fixed_start.map(Vector::<2>::from), rng);
        let y = path.iter().map(|z| poisson_draw(z[0].exp(), rng)).collect::<Result<_>>()?;
        Ok((path, y))
    }
}

fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    if rate == 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(rate).map_err(|_| Error::NonFinite("Poisson rate"))?;
    Ok(d.sample(rng))
}

/// Stochastic volatility; `θ = (ν, φ, σ_η)`. The latent state is stored
/// centred, `x_t = z_t − ν`, with `ν` entering through the signal offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SvModel {
    pub prior: PriorSpec,
}

impl Default for SvModel {
    fn default() -> Self {
        Self {
            prior: PriorSpec::new(vec![
                PriorComponent::Gaussian { mean: 0.0, sd: 5.0 },
                PriorComponent::Uniform { lower: -0.9999, upper: 0.9999 },
                PriorComponent::HalfGaussian { sd: 5.0 },
            ]),
        }
    }
}

impl LatentGaussianModel<1> for SvModel {
    type Family = SvFamily;

    fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    fn dynamics(&self, theta: &[f64], horizon: usize) -> Result<LinearGaussianDynamics<1>> {
        if theta.len() != 3 {
            return Err(Error::ThetaMismatch);
        }
        let (nu, phi, sigma) = (theta[0], theta[1], theta[2]);
        if !(phi.abs() < 1.0) {
            return Err(Error::InvalidModel("SV requires |φ| < 1"));
        }
        let s2 = sigma * sigma;
        Ok(LinearGaussianDynamics {
            transition: Matrix::<1>::from_element(phi),
            state_noise: Matrix::<1>::from_element(s2),
            initial_mean: Vector::<1>::zeros(),
            initial_cov: Matrix::<1>::from_element(s2 / (1.0 - phi * phi)),
            observation: Vector::<1>::from_element(1.0),
            obs_offset: nu,
            horizon,
        })
    }

    fn family(&self, _theta: &[f64], y: &[f64]) -> Result<SvFamily> {
        SvFamily::new(y.to_vec())
    }

    /// The returned path is the uncentred log-variance `z_t`.
    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], horizon: usize, rng: &mut R) -> Result<(Vec<Vector<1>>, Vec<f64>)> {
        let dyn_ = self.dynamics(theta, horizon)?;
        let path: Vec<Vector<1>> =
            simulate_path(&dyn_, None, rng).into_iter().map(|x| x.add_scalar(theta[0])).collect();
        let y = path.iter().map(|z| (0.5 * z[0]).exp() * rng.sample::<f64, _>(StandardNormal)).collect();
        Ok((path, y))
    }
}

/// Geometric Brownian motion observed with noise on the log scale;
/// `θ = (ν, σ_z, σ_y)` and `Z̃_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    pub prior: PriorSpec,
    pub z0: f64,
}

impl Default for GbmModel {
    fn default() -> Self {
        Self {
            prior: PriorSpec::new(vec![
                PriorComponent::HalfGaussian { sd: 0.1 },
                PriorComponent::HalfGaussian { sd: 0.5 },
                PriorComponent::TruncatedGaussian { mean: 1.5, sd: 0.5, lower: 0.5 },
            ]),
            z0: 1.0,
        }
    }
}

impl GbmModel {
    /// Rounded prior mean used to initialise chains.
    pub const PRIOR_MEAN: [f64; 3] = [0.08, 0.4, 1.5];

    pub fn sde(&self, theta: &[f64]) -> Result<crate::diffusion::Gbm> {
        if theta.len() != 3 {
            return Err(Error::ThetaMismatch);
        }
        Ok(crate::diffusion::Gbm { nu: theta[0], sigma: theta[1] })
    }

    /// `y_k ~ N(log z_k, σ_y²)`, as a family over the signal `log z`.
    pub fn family(&self, theta: &[f64], y: &[f64]) -> Result<GaussianFamily> {
        if theta.len() != 3 {
            return Err(Error::ThetaMismatch);
        }
        if !(theta[2] > 0.0) {
            return Err(Error::NonPositiveDensity);
        }
        Ok(GaussianFamily { y: y.to_vec(), variance: theta[2] * theta[2] })
    }

    /// Exact simulation at unit spacing through the lognormal transition.
    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], horizon: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.sde(theta)?;
        let mut log_z = self.z0.ln();
        let mut path = Vec::with_capacity(horizon);
        let mut y = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            log_z += g.nu - 0.5 * g.sigma * g.sigma + g.sigma * rng.sample::<f64, _>(StandardNormal);
            path.push(log_z.exp());
            y.push(log_z + theta[2] * rng.sample::<f64, _>(StandardNormal));
        }
        Ok((path, y))
    }
}

/// Random-walk level `z_{t+1} = z_t + σ η_t`, `z_1 ~ N(0, 1)`, with
/// `θ = (σ,)`, and either Poisson or Gaussian observations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLevelModel {
    pub prior: PriorSpec,
    /// Observation noise variance for the Gaussian variant.
    pub obs_var: Option<f64>,
}

impl LocalLevelModel {
    pub fn poisson(prior: PriorSpec) -> Self {
        Self { prior, obs_var: None }
    }

    pub fn gaussian(prior: PriorSpec, obs_var: f64) -> Self {
        Self { prior, obs_var: Some(obs_var) }
    }
}

/// Observation family of a [`LocalLevelModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum LocalLevelFamily {
    Poisson(PoissonFamily),
    Gaussian(GaussianFamily),
}

impl ObservationFamily for LocalLevelFamily {
    fn len(&self) -> usize {
        match self {
            Self::Poisson(f) => f.len(),
            Self::Gaussian(f) => f.len(),
        }
    }
    fn log_density(&self, t: usize, s: f64) -> f64 {
        match self {
            Self::Poisson(f) => f.log_density(t, s),
            Self::Gaussian(f) => f.log_density(t, s),
        }
    }
    fn d1(&self, t: usize, s: f64) -> f64 {
        match self {
            Self::Poisson(f) => f.d1(t, s),
            Self::Gaussian(f) => f.d1(t, s),
        }
    }
    fn d2(&self, t: usize, s: f64) -> f64 {
        match self {
            Self::Poisson(f) => f.d2(t, s),
            Self::Gaussian(f) => f.d2(t, s),
        }
    }
    fn initial_pseudo(&self, t: usize) -> (f64, f64) {
        match self {
            Self::Poisson(f) => f.initial_pseudo(t),
            Self::Gaussian(f) => f.initial_pseudo(t),
        }
    }
}

impl LatentGaussianModel<1> for LocalLevelModel {
    type Family = LocalLevelFamily;

    fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    fn dynamics(&self, theta: &[f64], horizon: usize) -> Result<LinearGaussianDynamics<1>> {
        if theta.len() != 1 {
            return Err(Error::ThetaMismatch);
        }
        Ok(LinearGaussianDynamics {
            transition: Matrix::<1>::identity(),
            state_noise: Matrix::<1>::from_element(theta[0] * theta[0]),
            initial_mean: Vector::<1>::zeros(),
            initial_cov: Matrix::<1>::identity(),
            observation: Vector::<1>::from_element(1.0),
            obs_offset: 0.0,
            horizon,
        })
    }

    fn family(&self, _theta: &[f64], y: &[f64]) -> Result<LocalLevelFamily> {
        Ok(match self.obs_var {
            Some(v) => LocalLevelFamily::Gaussian(GaussianFamily { y: y.to_vec(), variance: v }),
            None => LocalLevelFamily::Poisson(PoissonFamily::new(y.to_vec())?),
        })
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], horizon: usize, rng: &mut R) -> Result<(Vec<Vector<1>>, Vec<f64>)> {
        let dyn_ = self.dynamics(theta, horizon)?;
        let path = simulate_path(&dyn_, None, rng);
        let y = match self.obs_var {
            Some(v) => path.iter().map(|z| z[0] + v.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect(),
            None => path.iter().map(|z| poisson_draw(z[0].exp(), rng)).collect::<Result<_>>()?,
        };
        Ok((path, y))
    }
}

/// Exact log-likelihood of a one-dimensional linear-Gaussian state model
/// with an arbitrary observation family, by sequential quadrature on a
/// uniform grid over `[lo, hi]`.
pub fn quadrature_log_likelihood<O: ObservationFamily>(
    dyn_: &LinearGaussianDynamics<1>,
    obs: &O,
    lo: f64,
    hi: f64,
    n_grid: usize,
) -> f64 {
    let h = (hi - lo) / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|i| lo + i as f64 * h).collect();
    let a = dyn_.transition[(0, 0)];
    let q = dyn_.state_noise[(0, 0)];
    let mut dens: Vec<f64> = grid
        .iter()
        .map(|z| normal_log_pdf(*z, dyn_.initial_mean[0], dyn_.initial_cov[(0, 0)]).exp())
        .collect();
    let mut ll = 0.0;
    for t in 0..obs.len() {
        for (d, z) in dens.iter_mut().zip(&grid) {
            *d *= obs.log_density(t, dyn_.signal(&Vector::<1>::from_element(*z))).exp();
        }
        let mass = trapezoid(&dens, h);
        ll += mass.ln();
        for d in dens.iter_mut() {
            *d /= mass;
        }
        if t + 1 < obs.len() {
            let next: Vec<f64> = grid
                .iter()
                .map(|z| {
                    let vals: Vec<f64> =
                        grid.iter().zip(&dens).map(|(x, d)| d * normal_log_pdf(*z, a * x, q).exp()).collect();
                    trapezoid(&vals, h)
                })
                .collect();
            dens = next;
        }
    }
    ll
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

/// Finite-state hidden Markov model with categorical emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    pub initial: Vec<f64>,
    /// `transition[i][j] = P(z_{t+1} = j | z_t = i)`.
    pub transition: Vec<Vec<f64>>,
    /// `emission[i][y] = P(y_t = y | z_t = i)`.
    pub emission: Vec<Vec<f64>>,
    pub observations: Vec<usize>,
}

impl DiscreteHmm {
    pub fn two_state_example() -> Self {
        Self {
            initial: vec![0.6, 0.4],
            transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            emission: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            observations: vec![0, 1, 1, 0, 1],
        }
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    fn forward(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let k = self.n_states();
        let mut alphas = Vec::with_capacity(self.observations.len());
        let mut scales = Vec::with_capacity(self.observations.len());
        let mut alpha: Vec<f64> = (0..k).map(|i| self.initial[i] * self.emission[i][self.observations[0]]).collect();
        for t in 0..self.observations.len() {
            if t > 0 {
                let y = self.observations[t];
                alpha = (0..k)
                    .map(|j| (0..k).map(|i| alpha[i] * self.transition[i][j]).sum::<f64>() * self.emission[j][y])
                    .collect();
            }
            let c: f64 = alpha.iter().sum();
            alpha.iter_mut().for_each(|a| *a /= c);
            scales.push(c);
            alphas.push(alpha.clone());
        }
        (alphas, scales)
    }

    /// Exact log-likelihood by the forward algorithm.
    pub fn log_likelihood(&self) -> f64 {
        self.forward().1.iter().map(|c| c.ln()).sum()
    }

    /// Exact smoothing marginals `P(z_t = i | y)`.
    pub fn smoothing_marginals(&self) -> Vec<Vec<f64>> {
        let (alphas, _) = self.forward();
        let k = self.n_states();
        let n = alphas.len();
        let mut out = vec![vec![0.0; k]; n];
        let mut beta = vec![1.0; k];
        for t in (0..n).rev() {
            if t + 1 < n {
                let y = self.observations[t + 1];
                beta = (0..k)
                    .map(|i| (0..k).map(|j| self.transition[i][j] * self.emission[j][y] * beta[j]).sum())
                    .collect();
                let s: f64 = beta.iter().sum();
                beta.iter_mut().for_each(|b| *b /= s);
            }
            let mut p: Vec<f64> = (0..k).map(|i| alphas[t][i] * beta[i]).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            out[t] = p;
        }
        out
    }

    /// `E[h(z_{1:T}) | y]` by enumerating every path.
    pub fn enumerate_posterior_mean(&self, h: impl Fn(&[usize]) -> f64) -> f64 {
        let k = self.n_states();
        let n = self.observations.len();
        let mut path = vec![0usize; n];
        let (mut num, mut den) = (0.0, 0.0);
        loop {
            let mut p = self.initial[path[0]] * self.emission[path[0]][self.observations[0]];
            for t in 1..n {
                p *= self.transition[path[t - 1]][path[t]] * self.emission[path[t]][self.observations[t]];
            }
            num += p * h(&path);
            den += p;
            let mut i = 0;
            loop {
                if i == n {
                    return num / den;
                }
                path[i] += 1;
                if path[i] < k {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
        }
    }

    fn draw<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut c = 0.0;
        for (i, w) in p.iter().enumerate() {
            c += w;
            if u < c {
                return i;
            }
        }
        p.len() - 1
    }
}

impl FeynmanKac for DiscreteHmm {
    type State = usize;

    fn horizon(&self) -> usize {
        self.observations.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        Self::draw(&self.initial, rng)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, prev: &usize, rng: &mut R) -> usize {
        Self::draw(&self.transition[*prev], rng)
    }

    fn log_potential(&self, t: usize, _prev: Option<&usize>, cur: &usize) -> f64 {
        self.emission[*cur][self.observations[t]].ln()
    }

    fn log_markov_kernel(&self, t: usize, prev: &usize, cur: &usize) -> Option<f64> {
        Some(self.transition[*prev][*cur].ln() + self.log_potential(t, Some(prev), cur))
    }
}

/// Three-valued parameter with a binary latent variable, small enough that
/// every posterior quantity can be enumerated. The approximate likelihood
/// is deliberately different from the exact one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteToy {
    pub values: Vec<f64>,
    pub prior: Vec<f64>,
    /// `joint[θ][x] = p(x, y | θ)`.
    pub joint: Vec<[f64; 2]>,
    pub approx_likelihood: Vec<f64>,
}

impl Default for DiscreteToy {
    fn default() -> Self {
        Self {
            values: vec![0.0, 1.0, 2.0],
            prior: vec![0.3, 0.4, 0.3],
            joint: vec![[0.10, 0.30], [0.25, 0.15], [0.05, 0.45]],
            approx_likelihood: vec![0.5, 0.3, 0.3],
        }
    }
}

impl DiscreteToy {
    pub fn index_of(&self, theta: f64) -> Option<usize> {
        self.values.iter().position(|v| *v == theta)
    }

    pub fn likelihood(&self, k: usize) -> f64 {
        self.joint[k][0] + self.joint[k][1]
    }

    /// Exact posterior of the parameter index.
    pub fn posterior(&self) -> Vec<f64> {
        let p: Vec<f64> = (0..self.values.len()).map(|k| self.prior[k] * self.likelihood(k)).collect();
        let s: f64 = p.iter().sum();
        p.into_iter().map(|x| x / s).collect()
    }

    /// Approximate posterior `π_a`.
    pub fn approx_posterior(&self) -> Vec<f64> {
        let p: Vec<f64> = (0..self.values.len()).map(|k| self.prior[k] * self.approx_likelihood[k]).collect();
        let s: f64 = p.iter().sum();
        p.into_iter().map(|x| x / s).collect()
    }

    /// Exact posterior mean of `f(θ, x)`.
    pub fn posterior_mean(&self, f: impl Fn(f64, usize) -> f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..self.values.len() {
            for x in 0..2 {
                let p = self.prior[k] * self.joint[k][x];
                num += p * f(self.values[k], x);
                den += p;
            }
        }
        num / den
    }

    /// `m` uniform draws of the latent variable with weights
    /// `p(x, y | θ) / (m · ½)`, so that the weights sum to an unbiased
    /// estimate of `L(θ)`.
    pub fn weighted_draws<R: Rng + ?Sized>(&self, k: usize, m: usize, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
        let xs: Vec<usize> = (0..m).map(|_| rng.random_range(0..2)).collect();
        let w = xs.iter().map(|x| 2.0 * self.joint[k][*x] / m as f64).collect();
        (w, xs)
    }
}
