//! Run configuration, read from flat TOML files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    PoissonTrend,
    Sv,
    Gbm,
    PoissonLocalLevel,
    GaussianLocalLevel,
    DiscreteToy,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PoissonTrend => "poisson-trend",
            Self::Sv => "sv",
            Self::Gbm => "gbm",
            Self::PoissonLocalLevel => "poisson-local-level",
            Self::GaussianLocalLevel => "gaussian-local-level",
            Self::DiscreteToy => "discrete-toy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    /// Approximate chain only, no correction.
    Ai,
    /// Pseudo-marginal chain on the exact target.
    Pm,
    /// Delayed acceptance.
    Da,
    /// Jump-chain correction with `m N_k` particles per record.
    Is1,
    /// Jump-chain correction with `m` particles per record.
    Is2,
}

impl Algorithm {
    pub fn is_exact(self) -> bool {
        !matches!(self, Self::Ai)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ai => "AI",
            Self::Pm => "PM",
            Self::Da => "DA",
            Self::Is1 => "IS1",
            Self::Is2 => "IS2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    Spdk,
    Bsf,
    PsiApf,
    DiffusionBsf,
    /// Uniform draws of the latent variable of the discrete toy.
    Enumerated,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Spdk => "SPDK",
            Self::Bsf => "BSF",
            Self::PsiApf => "PSI_APF",
            Self::DiffusionBsf => "DIFFUSION_BSF",
            Self::Enumerated => "ENUMERATED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxMode {
    #[default]
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    /// `"prior-mean"` or `"prior-sample"`.
    Named(String),
    Values(Vec<f64>),
}

impl Default for InitSpec {
    fn default() -> Self {
        Self::Named("prior-mean".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelId,
    pub algorithm: Algorithm,
    pub scheme: Scheme,
    pub approx: ApproxMode,
    /// Particles (or importance samples) per correction.
    pub m: usize,
    /// Particles of the coarse pseudo-marginal chain for diffusions;
    /// defaults to `m`.
    pub m_coarse: Option<usize>,
    pub n_iters: usize,
    /// Fraction of `n_iters` discarded as burn-in.
    pub burnin: f64,
    pub thin: usize,
    pub seed: u64,
    pub threads: usize,
    /// `ε` added to likelihood estimates of pseudo-marginal chains.
    pub inflation: f64,
    pub init: InitSpec,
    /// Observation file, one value per line.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Upper end `2s` of the Poisson prior is `2 * prior_cutoff`; computed
    /// from the data when absent.
    pub prior_cutoff: Option<f64>,
    /// Observation variance of the Gaussian local-level model.
    pub obs_var: f64,
    pub level_coarse: u32,
    pub level_fine: u32,
    /// IS1 with `N_k` independent `m`-particle filters averaged instead of
    /// one filter of `m N_k` particles.
    pub is1_average: bool,
    pub pilot_reps: usize,
    /// Iterations of the approximate run that locates the pilot anchor.
    pub pilot_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelId::PoissonTrend,
            algorithm: Algorithm::Is2,
            scheme: Scheme::Spdk,
            approx: ApproxMode::Local,
            m: 10,
            m_coarse: None,
            n_iters: 20_000,
            burnin: 0.5,
            thin: 1,
            seed: 1,
            threads: 1,
            inflation: 0.0,
            init: InitSpec::default(),
            data: None,
            out: None,
            prior_cutoff: None,
            obs_var: 1.0,
            level_coarse: 4,
            level_fine: 16,
            is1_average: false,
            pilot_reps: 100,
            pilot_iters: 2000,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| PipelineError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // data paths are relative to the config file
        if let (Some(d), Some(dir)) = (&cfg.data, path.parent()) {
            if d.is_relative() {
                cfg.data = Some(dir.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn n_burnin(&self) -> usize {
        (self.burnin * self.n_iters as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(PipelineError::config("m must be at least 1"));
        }
        if self.m_coarse == Some(0) {
            return Err(PipelineError::config("m_coarse must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.burnin) {
            return Err(PipelineError::config("burnin must lie in [0, 1)"));
        }
        if self.thin < 1 {
            return Err(PipelineError::config("thin must be at least 1"));
        }
        if self.threads < 1 {
            return Err(PipelineError::config("threads must be at least 1"));
        }
        if self.n_iters <= self.n_burnin() {
            return Err(PipelineError::config("no iterations left after burn-in"));
        }
        if !(self.inflation >= 0.0) {
            return Err(PipelineError::config("inflation must be non-negative"));
        }
        if let InitSpec::Named(n) = &self.init {
            if n != "prior-mean" && n != "prior-sample" {
                return Err(PipelineError::config(format!("unknown init '{n}'")));
            }
        }
        let compatible = match self.model {
            ModelId::Gbm => self.scheme == Scheme::DiffusionBsf,
            ModelId::DiscreteToy => self.scheme == Scheme::Enumerated,
            _ => matches!(self.scheme, Scheme::Spdk | Scheme::Bsf | Scheme::PsiApf),
        };
        if !compatible {
            return Err(PipelineError::config(format!(
                "scheme {} cannot be used with model {}",
                self.scheme.as_str(),
                self.model.as_str()
            )));
        }
        if self.model == ModelId::Gbm && self.level_coarse > self.level_fine {
            return Err(PipelineError::config("level_coarse must not exceed level_fine"));
        }
        if self.model == ModelId::GaussianLocalLevel && !(self.obs_var > 0.0) {
            return Err(PipelineError::config("obs_var must be positive"));
        }
        Ok(())
    }
}
