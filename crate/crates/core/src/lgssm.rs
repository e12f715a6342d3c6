//! Linear-Gaussian latent dynamics with scalar-signal observations:
//! Kalman filtering and smoothing, the iterated Laplace approximation, and
//! the importance-sampling and particle-filter proposals built on it.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numeric::{jacobi_eigen, normal_log_pdf, LN_2PI};
use crate::smc::FeynmanKac;
use crate::weighting::WeightedBatch;

pub type Vector<const D: usize> = SVector<f64, D>;
pub type Matrix<const D: usize> = SMatrix<f64, D, D>;

/// `Z_1 ~ N(a_1, P_1)`, `Z_{t+1} = T Z_t + noise` with noise covariance
/// `Q = R Q Rᵀ`, and scalar signal `s_t = Hᵀ Z_t + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianDynamics<const D: usize> {
    pub transition: Matrix<D>,
    pub state_noise: Matrix<D>,
    pub initial_mean: Vector<D>,
    pub initial_cov: Matrix<D>,
    pub observation: Vector<D>,
    pub obs_offset: f64,
    pub horizon: usize,
}

impl<const D: usize> LinearGaussianDynamics<D> {
    pub fn signal(&self, z: &Vector<D>) -> f64 {
        self.observation.dot(z) + self.obs_offset
    }

    pub fn validate(&self) -> Result<()> {
        for m in [&self.state_noise, &self.initial_cov] {
            if (m - m.transpose()).abs().max() > 1e-10 * (1.0 + m.abs().max()) {
                return Err(Error::InvalidModel("covariance is not symmetric"));
            }
            let f = PsdFactor::new(m);
            if f.min_eigenvalue < -1e-10 * (1.0 + m.abs().max()) {
                return Err(Error::InvalidModel("covariance is not positive semidefinite"));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidModel("horizon must be positive"));
        }
        Ok(())
    }
}

/// Symmetric square root, pseudo-inverse and pseudo-log-determinant of a
/// positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor<const D: usize> {
    pub sqrt: Matrix<D>,
    pub pinv: Matrix<D>,
    pub log_det: f64,
    pub rank: usize,
    pub min_eigenvalue: f64,
}

impl<const D: usize> PsdFactor<D> {
    pub fn new(m: &Matrix<D>) -> Self {
        let sym = (m + m.transpose()) * 0.5;
        let (vals, vecs) = jacobi_eigen(sym.as_slice(), D);
        let v = Matrix::<D>::from_fn(|r, c| vecs[r * D + c]);
        let max = vals.iter().copied().fold(0.0, f64::max);
        let cut = 1e-12 * max;
        let mut sqrt = Matrix::<D>::zeros();
        let mut pinv = Matrix::<D>::zeros();
        let mut log_det = 0.0;
        let mut rank = 0;
        for k in 0..D {
            let col = v.column(k);
            let outer = col * col.transpose();
            if vals[k] > cut && vals[k] > 0.0 {
                sqrt += outer * vals[k].sqrt();
                pinv += outer / vals[k];
                log_det += vals[k].ln();
                rank += 1;
            }
        }
        let min_eigenvalue = vals.iter().copied().fold(f64::INFINITY, f64::min);
        Self { sqrt, pinv, log_det, rank, min_eigenvalue }
    }

    /// Log-density of `N(mean, Σ)` at `x`, restricted to the support of a
    /// singular `Σ`.
    pub fn log_density(&self, x: &Vector<D>, mean: &Vector<D>) -> f64 {
        let d = x - mean;
        -0.5 * (self.rank as f64 * LN_2PI + self.log_det + d.dot(&(self.pinv * d)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanFilterOutput<const D: usize> {
    pub pred_means: Vec<Vector<D>>,
    pub pred_covs: Vec<Matrix<D>>,
    pub innovations: Vec<f64>,
    pub innovation_vars: Vec<f64>,
    /// `L_t = T − K_t Hᵀ`.
    pub l_mats: Vec<Matrix<D>>,
    pub log_likelihood: f64,
}

impl<const D: usize> KalmanFilterOutput<D> {
    pub fn filtered_mean(&self, dyn_: &LinearGaussianDynamics<D>, t: usize) -> Vector<D> {
        let ph = self.pred_covs[t] * dyn_.observation;
        self.pred_means[t] + ph * (self.innovations[t] / self.innovation_vars[t])
    }

    pub fn filtered_cov(&self, dyn_: &LinearGaussianDynamics<D>, t: usize) -> Matrix<D> {
        let ph = self.pred_covs[t] * dyn_.observation;
        self.pred_covs[t] - ph * ph.transpose() / self.innovation_vars[t]
    }
}

/// Kalman filter for `y_t = Hᵀ z_t + d + e_t`, `e_t ~ N(0, r_t)`.
pub fn kalman_filter<const D: usize>(
    dyn_: &LinearGaussianDynamics<D>,
    y: &[f64],
    r: &[f64],
) -> Result<KalmanFilterOutput<D>> {
    let n = y.len();
    if r.len() != n {
        return Err(Error::InvalidArgument("observation and variance lengths differ"));
    }
    let h = dyn_.observation;
    let tr = dyn_.transition;
    let mut out = KalmanFilterOutput {
        pred_means: Vec::with_capacity(n),
        pred_covs: Vec::with_capacity(n),
        innovations: Vec::with_capacity(n),
        innovation_vars: Vec::with_capacity(n),
        l_mats: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };
    let mut a = dyn_.initial_mean;
    let mut p = dyn_.initial_cov;
    for t in 0..n {
        let v = y[t] - h.dot(&a) - dyn_.obs_offset;
        let ph = p * h;
        let f = h.dot(&ph) + r[t];
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::SingularInnovation(t));
        }
        let k = tr * ph / f;
        let l = tr - k * h.transpose();
        out.log_likelihood += -0.5 * (LN_2PI + f.ln() + v * v / f);
        out.pred_means.push(a);
        out.pred_covs.push(p);
        out.innovations.push(v);
        out.innovation_vars.push(f);
        out.l_mats.push(l);
        a = tr * a + k * v;
        let next = tr * p * l.transpose() + dyn_.state_noise;
        p = (next + next.transpose()) * 0.5;
    }
    Ok(out)
}

pub fn kalman_loglik<const D: usize>(dyn_: &LinearGaussianDynamics<D>, y: &[f64], r: &[f64]) -> Result<f64> {
    Ok(kalman_filter(dyn_, y, r)?.log_likelihood)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanSmootherOutput<const D: usize> {
    pub means: Vec<Vector<D>>,
    pub covs: Vec<Matrix<D>>,
    /// `cross_covs[t] = Cov(z_t, z_{t+1} | y)` for `t < T − 1`.
    pub cross_covs: Vec<Matrix<D>>,
    pub filtered_covs: Vec<Matrix<D>>,
    pub log_likelihood: f64,
}

/// Fixed-interval smoother in the backward `r_t`, `N_t` form, which needs
/// no matrix inversion.
pub fn kalman_smoother<const D: usize>(
    dyn_: &LinearGaussianDynamics<D>,
    y: &[f64],
    r: &[f64],
) -> Result<KalmanSmootherOutput<D>> {
    let kf = kalman_filter(dyn_, y, r)?;
    let n = y.len();
    let h = dyn_.observation;
    let mut means = alloc::vec![Vector::<D>::zeros(); n];
    let mut covs = alloc::vec![Matrix::<D>::zeros(); n];
    let mut n_store = alloc::vec![Matrix::<D>::zeros(); n];
    let mut rv = Vector::<D>::zeros();
    let mut nm = Matrix::<D>::zeros();
    for t in (0..n).rev() {
        let f = kf.innovation_vars[t];
        let l = kf.l_mats[t];
        rv = h * (kf.innovations[t] / f) + l.transpose() * rv;
        let next = h * h.transpose() / f + l.transpose() * nm * l;
        nm = (next + next.transpose()) * 0.5;
        let p = kf.pred_covs[t];
        means[t] = kf.pred_means[t] + p * rv;
        let v = p - p * nm * p;
        covs[t] = (v + v.transpose()) * 0.5;
        n_store[t] = nm;
    }
    let mut cross_covs = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n.saturating_sub(1) {
        let c = kf.pred_covs[t] * kf.l_mats[t].transpose() * (Matrix::<D>::identity() - n_store[t + 1] * kf.pred_covs[t + 1]);
        cross_covs.push(c);
    }
    let filtered_covs = (0..n).map(|t| kf.filtered_cov(dyn_, t)).collect();
    Ok(KalmanSmootherOutput { means, covs, cross_covs, filtered_covs, log_likelihood: kf.log_likelihood })
}

/// Observation density `g_t(y_t | s)` along a scalar signal, with `y`
/// bound into the family.
pub trait ObservationFamily {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn log_density(&self, t: usize, s: f64) -> f64;

    /// `∂/∂s log g_t(y_t | s)`.
    fn d1(&self, t: usize, s: f64) -> f64;

    /// `∂²/∂s² log g_t(y_t | s)`.
    fn d2(&self, t: usize, s: f64) -> f64;

    /// Gaussianised data `(ỹ_t, R_t)` used to find a starting mode.
    fn initial_pseudo(&self, t: usize) -> (f64, f64);
}

/// `y_t ~ N(s, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFamily {
    pub y: Vec<f64>,
    pub variance: f64,
}

impl ObservationFamily for GaussianFamily {
    fn len(&self) -> usize {
        self.y.len()
    }
    fn log_density(&self, t: usize, s: f64) -> f64 {
        normal_log_pdf(self.y[t], s, self.variance)
    }
    fn d1(&self, t: usize, s: f64) -> f64 {
        (self.y[t] - s) / self.variance
    }
    fn d2(&self, _t: usize, _s: f64) -> f64 {
        -1.0 / self.variance
    }
    fn initial_pseudo(&self, t: usize) -> (f64, f64) {
        (self.y[t], self.variance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceFit<const D: usize> {
    pub pseudo_obs: Vec<f64>,
    pub pseudo_var: Vec<f64>,
    pub mode: Vec<Vector<D>>,
    pub log_ltilde_a: f64,
    pub log_la: f64,
    pub iterations: usize,
    pub converged: bool,
    pub smoother: KalmanSmootherOutput<D>,
}

impl<const D: usize> LaplaceFit<D> {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence(self.iterations))
        }
    }

    /// `log g̃_t(ỹ_t | s) = log N(ỹ_t; s, R_t)`.
    pub fn log_gtilde(&self, t: usize, s: f64) -> f64 {
        normal_log_pdf(self.pseudo_obs[t], s, self.pseudo_var[t])
    }

    /// Forward conditionals of the Gaussian smoothing law `p_a(z | ỹ)`.
    pub fn chain_law(&self) -> GaussianChainLaw<D> {
        GaussianChainLaw::new(&self.smoother)
    }
}

fn pseudo_data<const D: usize, O: ObservationFamily>(
    dyn_: &LinearGaussianDynamics<D>,
    obs: &O,
    path: &[Vector<D>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut yt = Vec::with_capacity(path.len());
    let mut rt = Vec::with_capacity(path.len());
    for (t, z) in path.iter().enumerate() {
        let s = dyn_.signal(z);
        let d2 = obs.d2(t, s);
        if !(d2 < 0.0) || !d2.is_finite() {
            return Err(Error::NonConcave(t));
        }
        let r = -1.0 / d2;
        yt.push(s + r * obs.d1(t, s));
        rt.push(r);
    }
    Ok((yt, rt))
}

fn assemble<const D: usize, O: ObservationFamily>(
    dyn_: &LinearGaussianDynamics<D>,
    obs: &O,
    pseudo_obs: Vec<f64>,
    pseudo_var: Vec<f64>,
    smoother: KalmanSmootherOutput<D>,
    iterations: usize,
    converged: bool,
) -> Result<LaplaceFit<D>> {
    let mode = smoother.means.clone();
    let mut correction = 0.0;
    for (t, z) in mode.iter().enumerate() {
        let s = dyn_.signal(z);
        correction += obs.log_density(t, s) - normal_log_pdf(pseudo_obs[t], s, pseudo_var[t]);
    }
    let log_ltilde_a = smoother.log_likelihood;
    let log_la = log_ltilde_a + correction;
    if !log_la.is_finite() {
        return Err(Error::NonFinite("approximate log-likelihood"));
    }
    Ok(LaplaceFit { pseudo_obs, pseudo_var, mode, log_ltilde_a, log_la, iterations, converged, smoother })
}

/// Iterated Laplace approximation: Gaussian pseudo-data from the current
/// mode, then Kalman smoothing for the next mode, until the mode moves by
/// less than `tol`. A fit that hits `max_iter` is returned with
/// `converged = false`.
pub fn laplace_fit<const D: usize, O: ObservationFamily>(
    dyn_: &LinearGaussianDynamics<D>,
    obs: &O,
    init: Option<&[Vector<D>]>,
    opts: LaplaceOptions,
) -> Result<LaplaceFit<D>> {
    let n = obs.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no observations"));
    }
    let mut path: Vec<Vector<D>> = match init {
        Some(p) if p.len() == n => p.to_vec(),
        Some(_) => return Err(Error::InvalidArgument("initial mode has the wrong length")),
        None => {
            let (y0, r0): (Vec<f64>, Vec<f64>) = (0..n).map(|t| obs.initial_pseudo(t)).unzip();
            kalman_smoother(dyn_, &y0, &r0)?.means
        }
    };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let (yt, rt) = pseudo_data(dyn_, obs, &path)?;
        let sm = kalman_smoother(dyn_, &yt, &rt)?;
        iterations += 1;
        let delta = path
            .iter()
            .zip(&sm.means)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max);
        if !delta.is_finite() {
            return Err(Error::NonFinite("Laplace mode"));
        }
        path = sm.means;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let (yt, rt) = pseudo_data(dyn_, obs, &path)?;
    let sm = kalman_smoother(dyn_, &yt, &rt)?;
    assemble(dyn_, obs, yt, rt, sm, iterations, converged)
}

/// Approximation at `dyn_` that reuses the pseudo-data of an anchor fit.
pub fn laplace_fit_global<const D: usize, O: ObservationFamily>(
    dyn_: &LinearGaussianDynamics<D>,
    obs: &O,
    anchor: &LaplaceFit<D>,
) -> Result<LaplaceFit<D>> {
    let sm = kalman_smoother(dyn_, &anchor.pseudo_obs, &anchor.pseudo_var)?;
    assemble(dyn_, obs, anchor.pseudo_obs.clone(), anchor.pseudo_var.clone(), sm, 0, true)
}

/// Markov representation of a Gaussian smoothing distribution:
/// `z_t | z_{t-1} ~ N(m_t + G_t (z_{t-1} − m_{t-1}), Σ_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChainLaw<const D: usize> {
    pub means: Vec<Vector<D>>,
    pub gains: Vec<Matrix<D>>,
    pub factors: Vec<PsdFactor<D>>,
}

impl<const D: usize> GaussianChainLaw<D> {
    pub fn new(sm: &KalmanSmootherOutput<D>) -> Self {
        let n = sm.means.len();
        let mut gains = Vec::with_capacity(n);
        let mut factors = Vec::with_capacity(n);
        gains.push(Matrix::<D>::zeros());
        factors.push(PsdFactor::new(&sm.covs[0]));
        for t in 1..n {
            let c = sm.cross_covs[t - 1];
            let prev = PsdFactor::new(&sm.covs[t - 1]);
            let g = c.transpose() * prev.pinv;
            let cond = sm.covs[t] - g * c;
            gains.push(g);
            factors.push(PsdFactor::new(&((cond + cond.transpose()) * 0.5)));
        }
        Self { means: sm.means.clone(), gains, factors }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn conditional_mean(&self, t: usize, prev: Option<&Vector<D>>) -> Vector<D> {
        match prev {
            Some(p) if t > 0 => self.means[t] + self.gains[t] * (p - self.means[t - 1]),
            _ => self.means[t],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: usize, prev: Option<&Vector<D>>, rng: &mut R) -> Vector<D> {
        let eps = Vector::<D>::from_fn(|_, _| rng.sample(StandardNormal));
        self.conditional_mean(t, prev) + self.factors[t].sqrt * eps
    }

    pub fn log_density(&self, t: usize, prev: Option<&Vector<D>>, z: &Vector<D>) -> f64 {
        self.factors[t].log_density(z, &self.conditional_mean(t, prev))
    }

    /// Zero-mean deviation path driven by standard normal innovations.
    pub fn deviation<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vector<D>> {
        let mut out: Vec<Vector<D>> = Vec::with_capacity(self.len());
        for t in 0..self.len() {
            let eps = Vector::<D>::from_fn(|_, _| rng.sample(StandardNormal));
            let mut d = self.factors[t].sqrt * eps;
            if t > 0 {
                d += self.gains[t] * out[t - 1];
            }
            out.push(d);
        }
        out
    }
}

/// Exact draws from the Gaussian smoothing law of `(y, r)`. With
/// `antithetic`, draws come in pairs `mean ± deviation`.
pub fn simulation_smoother<const D: usize, R: Rng + ?Sized>(
    dyn_: &LinearGaussianDynamics<D>,
    y: &[f64],
    r: &[f64],
    n_draws: usize,
    antithetic: bool,
    rng: &mut R,
) -> Result<Vec<Vec<Vector<D>>>> {
    let law = GaussianChainLaw::new(&kalman_smoother(dyn_, y, r)?);
    Ok(draw_paths(&law, n_draws, antithetic, rng))
}

fn draw_paths<const D: usize, R: Rng + ?Sized>(
    law: &GaussianChainLaw<D>,
    n_draws: usize,
    antithetic: bool,
    rng: &mut R,
) -> Vec<Vec<Vector<D>>> {
    let mut out = Vec::with_capacity(n_draws);
    while out.len() < n_draws {
        let dev = law.deviation(rng);
        out.push(law.means.iter().zip(&dev).map(|(m, d)| m + d).collect());
        if antithetic && out.len() < n_draws {
            out.push(law.means.iter().zip(&dev).map(|(m, d)| m - d).collect());
        }
    }
    out
}

/// Importance sampling from the approximate smoothing law with antithetic
/// pairs: `log V_i = log L̃_a + Σ_t [log g_t − log g̃_t] − log m`.
pub fn spdk_batch<const D: usize, O: ObservationFamily, R: Rng + ?Sized>(
    fit: &LaplaceFit<D>,
    dyn_: &LinearGaussianDynamics<D>,
    obs: &O,
    m: usize,
    theta: Vec<f64>,
    rng: &mut R,
) -> Result<WeightedBatch<Vec<Vector<D>>>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one draw"));
    }
    let law = fit.chain_law();
    let draws = draw_paths(&law, m, true, rng);
    let ln_m = (m as f64).ln();
    let log_w: Vec<f64> = draws
        .iter()
        .map(|path| {
            let mut lw = fit.log_ltilde_a - ln_m;
            for (t, z) in path.iter().enumerate() {
                let s = dyn_.signal(z);
                lw += obs.log_density(t, s) - fit.log_gtilde(t, s);
            }
            lw
        })
        .collect();
    WeightedBatch::from_log_weights(theta, &log_w, draws)
}

/// Particle filter twisted by the Laplace approximation: proposals are the
/// conditionals of `p_a(z | ỹ)`, potentials `g_t / g̃_t`, and `L̃_a` is
/// folded into the first potential so that `E[U] = L(θ)`.
#[derive(Debug, Clone)]
pub struct PsiApf<'a, const D: usize, O> {
    pub dynamics: &'a LinearGaussianDynamics<D>,
    pub obs: &'a O,
    pub fit: &'a LaplaceFit<D>,
    pub law: GaussianChainLaw<D>,
}

pub fn psi_apf_model<'a, const D: usize, O: ObservationFamily>(
    fit: &'a LaplaceFit<D>,
    dynamics: &'a LinearGaussianDynamics<D>,
    obs: &'a O,
) -> PsiApf<'a, D, O> {
    PsiApf { dynamics, obs, fit, law: fit.chain_law() }
}

impl<'a, const D: usize, O: ObservationFamily> FeynmanKac for PsiApf<'a, D, O> {
    type State = Vector<D>;

    fn horizon(&self) -> usize {
        self.obs.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector<D> {
        self.law.sample(0, None, rng)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, t: usize, prev: &Vector<D>, rng: &mut R) -> Vector<D> {
        self.law.sample(t, Some(prev), rng)
    }

    fn log_potential(&self, t: usize, _prev: Option<&Vector<D>>, cur: &Vector<D>) -> f64 {
        let s = self.dynamics.signal(cur);
        let g = self.obs.log_density(t, s) - self.fit.log_gtilde(t, s);
        if t == 0 {
            g + self.fit.log_ltilde_a
        } else {
            g
        }
    }

    fn log_markov_kernel(&self, t: usize, prev: &Vector<D>, cur: &Vector<D>) -> Option<f64> {
        Some(self.law.log_density(t, Some(prev), cur) + self.log_potential(t, Some(prev), cur))
    }
}

/// Bootstrap filter: latent transitions as proposals, observation
/// densities as potentials.
#[derive(Debug, Clone)]
pub struct Bootstrap<'a, const D: usize, O> {
    pub dynamics: &'a LinearGaussianDynamics<D>,
    pub obs: &'a O,
    initial: PsdFactor<D>,
    noise: PsdFactor<D>,
}

pub fn bootstrap_model<'a, const D: usize, O: ObservationFamily>(
    dynamics: &'a LinearGaussianDynamics<D>,
    obs: &'a O,
) -> Bootstrap<'a, D, O> {
    Bootstrap {
        dynamics,
        obs,
        initial: PsdFactor::new(&dynamics.initial_cov),
        noise: PsdFactor::new(&dynamics.state_noise),
    }
}

impl<'a, const D: usize, O: ObservationFamily> FeynmanKac for Bootstrap<'a, D, O> {
    type State = Vector<D>;

    fn horizon(&self) -> usize {
        self.obs.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector<D> {
        let eps = Vector::<D>::from_fn(|_, _| rng.sample(StandardNormal));
        self.dynamics.initial_mean + self.initial.sqrt * eps
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, prev: &Vector<D>, rng: &mut R) -> Vector<D> {
        let eps = Vector::<D>::from_fn(|_, _| rng.sample(StandardNormal));
        self.dynamics.transition * prev + self.noise.sqrt * eps
    }

    fn log_potential(&self, t: usize, _prev: Option<&Vector<D>>, cur: &Vector<D>) -> f64 {
        self.obs.log_density(t, self.dynamics.signal(cur))
    }

    fn log_markov_kernel(&self, t: usize, prev: &Vector<D>, cur: &Vector<D>) -> Option<f64> {
        let mean = self.dynamics.transition * prev;
        Some(self.noise.log_density(cur, &mean) + self.log_potential(t, Some(prev), cur))
    }
}
