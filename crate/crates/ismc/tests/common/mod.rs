#![allow(dead_code)]

use ismc::config::{Algorithm, InitSpec, ModelId, RunConfig, Scheme};
use ismc_core::models::{GbmModel, LatentGaussianModel, LocalLevelModel, PoissonTrendModel, PriorComponent, PriorSpec, SvModel};
use ismc_core::rng::{stream, tag};

pub const DATA_SEED: u64 = 1;

/// Local linear trend counts with `θ = (0.1, 0.01)`, `Z_1 = (0, 0)`, `T = 100`.
pub fn poisson_data() -> Vec<f64> {
    let mut m = PoissonTrendModel::new(1.6);
    m.fixed_start = Some([0.0, 0.0]);
    m.simulate(&[0.1, 0.01], 100, &mut stream(DATA_SEED, tag::DATA, 0)).unwrap().1
}

/// GBM observations with `ν = 0.05`, `σ_z = 0.3`, `σ_y = 1`, `T = 50`.
pub fn gbm_data() -> Vec<f64> {
    GbmModel::default().simulate(&[0.05, 0.3, 1.0], 50, &mut stream(DATA_SEED, tag::DATA, 0)).unwrap().1
}

pub fn sv_data(horizon: usize) -> Vec<f64> {
    SvModel::default().simulate(&[-0.5, 0.95, 0.2], horizon, &mut stream(DATA_SEED, tag::DATA, 1)).unwrap().1
}

pub fn gaussian_local_level_data(horizon: usize, obs_var: f64) -> Vec<f64> {
    let prior = PriorSpec::new(vec![PriorComponent::Uniform { lower: 0.0, upper: 2.0 }]);
    LocalLevelModel::gaussian(prior, obs_var).simulate(&[0.3], horizon, &mut stream(DATA_SEED, tag::DATA, 2)).unwrap().1
}

pub fn config(model: ModelId, algorithm: Algorithm, scheme: Scheme, m: usize, n_iters: usize) -> RunConfig {
    RunConfig { model, algorithm, scheme, m, n_iters, burnin: 0.5, seed: 7, init: InitSpec::default(), ..RunConfig::default() }
}

pub fn poisson_config(algorithm: Algorithm, scheme: Scheme, m: usize, n_iters: usize) -> RunConfig {
    RunConfig { prior_cutoff: Some(1.6), ..config(ModelId::PoissonTrend, algorithm, scheme, m, n_iters) }
}

pub fn toy_config(algorithm: Algorithm, m: usize, n_iters: usize) -> RunConfig {
    config(ModelId::DiscreteToy, algorithm, Scheme::Enumerated, m, n_iters)
}

/// `|a − b| ≤ k · sqrt(s_a² + s_b²)`.
pub fn agree(a: f64, sa: f64, b: f64, sb: f64, k: f64) -> bool {
    (a - b).abs() <= k * (sa * sa + sb * sb).sqrt()
}
