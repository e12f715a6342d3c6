//! Discretely observed scalar diffusions simulated with the Milstein scheme
//! on uniform meshes of `2^L` steps per observation interval.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lgssm::ObservationFamily;
use crate::smc::{filter_smoother_batch, run_filter, FeynmanKac, Resampler};
use crate::weighting::WeightedBatch;

/// `dZ = m(Z) dt + σ(Z) dB`.
pub trait SdeSpec {
    fn drift(&self, z: f64) -> f64;
    fn diffusion(&self, z: f64) -> f64;
    /// `∂σ/∂z`, needed by the Milstein correction.
    fn diffusion_dz(&self, z: f64) -> f64;
    /// Whether the state is kept positive by reflection.
    fn positive(&self) -> bool {
        true
    }

    /// One Milstein step of size `h` with Brownian increment `db`, reflected
    /// to `|z|` for positive specs.
    #[inline]
    fn milstein_step(&self, z: f64, h: f64, db: f64) -> f64 {
        let s = self.diffusion(z);
        let next = z + self.drift(z) * h + s * db + 0.5 * s * self.diffusion_dz(z) * (db * db - h);
        if self.positive() {
            next.abs()
        } else {
            next
        }
    }
}

/// Geometric Brownian motion `dZ = ν Z dt + σ Z dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gbm {
    pub nu: f64,
    pub sigma: f64,
}

impl SdeSpec for Gbm {
    #[inline]
    fn drift(&self, z: f64) -> f64 {
        self.nu * z
    }
    #[inline]
    fn diffusion(&self, z: f64) -> f64 {
        self.sigma * z
    }
    #[inline]
    fn diffusion_dz(&self, _z: f64) -> f64 {
        self.sigma
    }

    // Same scheme with z factored out, which keeps the per-step dependency
    // on z down to one multiplication.
    #[inline]
    fn milstein_step(&self, z: f64, h: f64, db: f64) -> f64 {
        let f = 1.0 + self.nu * h + self.sigma * db + 0.5 * self.sigma * self.sigma * (db * db - h);
        (z * f).abs()
    }
}

#[inline]
pub fn milstein_step<S: SdeSpec + ?Sized>(spec: &S, z: f64, h: f64, db: f64) -> f64 {
    spec.milstein_step(z, h, db)
}

/// Milstein path over `interval` with `2^level` steps whose Brownian
/// increments come from `increments`.
pub fn milstein_transition_with<S: SdeSpec + ?Sized>(
    spec: &S,
    z0: f64,
    interval: f64,
    level: u32,
    mut increments: impl FnMut() -> f64,
) -> Result<f64> {
    let n = 1u64 << level;
    let h = interval / n as f64;
    let mut z = z0;
    for _ in 0..n {
        z = milstein_step(spec, z, h, increments());
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("diffusion state"));
    }
    Ok(z)
}

pub fn milstein_transition<S: SdeSpec + ?Sized, R: Rng + ?Sized>(
    spec: &S,
    z0: f64,
    interval: f64,
    level: u32,
    rng: &mut R,
) -> Result<f64> {
    let sd = (interval / (1u64 << level) as f64).sqrt();
    milstein_transition_with(spec, z0, interval, level, || sd * rng.sample::<f64, _>(StandardNormal))
}

/// State space model with Milstein transitions between unit-spaced
/// observation times and observations that depend on `signal(z)`.
pub struct DiffusionSsm<'a, S, O> {
    pub spec: &'a S,
    pub obs: &'a O,
    pub z0: f64,
    pub interval: f64,
    pub level: u32,
    pub signal: fn(f64) -> f64,
}

impl<'a, S, O> DiffusionSsm<'a, S, O> {
    pub fn new(spec: &'a S, obs: &'a O, z0: f64, level: u32, signal: fn(f64) -> f64) -> Self {
        Self { spec, obs, z0, interval: 1.0, level, signal }
    }

    fn step<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> f64
    where
        S: SdeSpec,
    {
        // a non-finite state gets zero potential and so drops out at the
        // next resampling
        milstein_transition(self.spec, z, self.interval, self.level, rng).unwrap_or(f64::NAN)
    }
}

impl<'a, S: SdeSpec, O: ObservationFamily> FeynmanKac for DiffusionSsm<'a, S, O> {
    type State = f64;

    fn horizon(&self) -> usize {
        self.obs.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.step(self.z0, rng)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, prev: &f64, rng: &mut R) -> f64 {
        self.step(*prev, rng)
    }

    fn log_potential(&self, t: usize, _prev: Option<&f64>, cur: &f64) -> f64 {
        if !cur.is_finite() {
            return f64::NEG_INFINITY;
        }
        let lg = self.obs.log_density(t, (self.signal)(*cur));
        if lg.is_nan() {
            f64::NEG_INFINITY
        } else {
            lg
        }
    }
}

/// `log U` from a bootstrap filter at the model's level. A collapsed filter
/// means the observation density vanished somewhere, which is reported as a
/// configuration error.
pub fn coarse_likelihood_estimator<S: SdeSpec, O: ObservationFamily, R: Rng + ?Sized>(
    model: &DiffusionSsm<'_, S, O>,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    let cloud = run_filter(model, m, Resampler::default(), rng)?;
    if cloud.collapsed || !cloud.log_likelihood.is_finite() {
        return Err(Error::NonPositiveDensity);
    }
    Ok(cloud.log_likelihood)
}

/// Filter-smoother batch of numerators `V^(i)` from a bootstrap filter at
/// the model's (fine) level.
pub fn fine_correction_batch<S: SdeSpec, O: ObservationFamily, R: Rng + ?Sized>(
    model: &DiffusionSsm<'_, S, O>,
    m: usize,
    theta: Vec<f64>,
    rng: &mut R,
) -> Result<WeightedBatch<Vec<f64>>> {
    let cloud = run_filter(model, m, Resampler::default(), rng)?;
    if cloud.collapsed {
        return Err(Error::NonPositiveDensity);
    }
    filter_smoother_batch(&cloud, theta)
}
