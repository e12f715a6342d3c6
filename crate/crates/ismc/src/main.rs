use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ismc::config::{Algorithm, ModelId, RunConfig};
use ismc::data::{read_observations, write_series};
use ismc::error::{PipelineError, Result};
use ismc::pipeline::{anchor_estimate, pilot_tune_m, replicate, IreTable, RunSet};
use ismc::{build_experiment, output};
use ismc_core::models::{GbmModel, LatentGaussianModel, LocalLevelModel, PoissonTrendModel, PriorSpec, SvModel};
use ismc_core::rng::{stream, tag};

#[derive(Parser)]
#[command(name = "ismc", version, about = "Approximate MCMC with importance-sampling correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its estimates.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find the particle count whose log-likelihood s.d. is below `delta`.
    PilotTune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Anchor parameter; estimated by a short approximate run if absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        anchor: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Independent replications and the IRE table.
    Replicate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        threads: Option<usize>,
        /// Ground truth file, one value per functional; defaults to the
        /// pooled mean of the replications.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate observations and latent states from a model.
    Simulate {
        #[arg(long)]
        model: ModelArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Observation variance of the Gaussian local-level model.
        #[arg(long, default_value_t = 1.0)]
        obs_var: f64,
        /// Fixed initial state of the Poisson trend model.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    PoissonTrend,
    Sv,
    Gbm,
    PoissonLocalLevel,
    GaussianLocalLevel,
}

fn load(config: &Path) -> Result<(RunConfig, Vec<f64>)> {
    let cfg = RunConfig::load(config)?;
    let y = match (&cfg.data, cfg.model) {
        (Some(p), _) => read_observations(p)?,
        (None, ModelId::DiscreteToy) => Vec::new(),
        (None, _) => return Err(PipelineError::config("the model needs a data file")),
    };
    Ok((cfg, y))
}

fn out_dir(cli: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    cli.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, seed, threads, out } => {
            let (mut cfg, y) = load(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.threads = threads.unwrap_or(cfg.threads);
            let exp = build_experiment(&cfg, y)?;
            let r = ismc::run(&cfg, exp.as_ref())?;
            let dir = out_dir(out, &cfg);
            output::write_run(&dir, &cfg, &r)?;
            for (f, (e, s)) in r.functionals.iter().zip(r.estimates.iter().zip(r.se_conservative())) {
                println!("{f}\t{e:.6}\t(se {s:.2e})");
            }
            println!(
                "acceptance {:.3}, jump chain {}, phase1 {:.2}s, phase2 {:.2}s",
                r.acceptance_rate, r.jump_chain_len, r.phase1_s, r.phase2_s
            );
        }
        Command::PilotTune { config, delta, anchor, out } => {
            let (cfg, y) = load(&config)?;
            let exp = build_experiment(&cfg, y)?;
            let anchor = match anchor {
                Some(a) => a,
                None => anchor_estimate(&cfg, exp.as_ref())?,
            };
            let p = pilot_tune_m(&cfg, exp.as_ref(), delta, &anchor)?;
            for (m, d) in &p.trace {
                println!("m={m}\tdelta={d:.4}");
            }
            println!("m = {}", p.m);
            output::write_pilot(&out_dir(out, &cfg), &cfg, &p)?;
        }
        Command::Replicate { config, reps, threads, truth, out } => {
            let (mut cfg, y) = load(&config)?;
            cfg.threads = threads.unwrap_or(cfg.threads);
            let exp = build_experiment(&cfg, y)?;
            let runs = replicate(&cfg, exp.as_ref(), reps)?;
            let truth = truth.map(|p| read_observations(&p)).transpose()?;
            let label = format!("{}-{}", cfg.algorithm.as_str(), cfg.scheme.as_str());
            let sets = [RunSet { label, exact: cfg.algorithm != Algorithm::Ai, runs }];
            let table = IreTable::build(&sets, truth.as_deref().or(Some(&pooled(&sets[0].runs))))?;
            for row in &table.rows {
                println!("{}\t{}\tmse {:.3e}\ttime {:.3}s\tIRE {:.3e}", row.label, row.functional, row.mse, row.mean_time, row.ire);
            }
            output::write_replicate_set(&out_dir(out, &cfg), &cfg, &sets[0].runs, &table)?;
        }
        Command::Simulate { model, theta, horizon, out, seed, obs_var, start } => {
            let mut rng = stream(seed, tag::DATA, 0);
            let (y, latent, names) = simulate(model, &theta, horizon, obs_var, start.as_deref(), &mut rng)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_series(std::fs::File::create(&out)?, &y, &latent, &names)?;
        }
    }
    Ok(())
}

/// Mean over the replications, used as the truth for a single set of
/// possibly biased runs.
fn pooled(runs: &[ismc::RunResult]) -> Vec<f64> {
    let n = runs.len() as f64;
    (0..runs[0].estimates.len()).map(|j| runs.iter().map(|r| r.estimates[j]).sum::<f64>() / n).collect()
}

type Simulated = (Vec<f64>, Vec<Vec<f64>>, Vec<String>);

fn simulate(
    model: ModelArg,
    theta: &[f64],
    horizon: usize,
    obs_var: f64,
    start: Option<&[f64]>,
    rng: &mut ismc_core::rng::StreamRng,
) -> Result<Simulated> {
    fn lg<const D: usize, M: LatentGaussianModel<D>>(
        m: &M,
        theta: &[f64],
        horizon: usize,
        rng: &mut ismc_core::rng::StreamRng,
    ) -> Result<Simulated> {
        if theta.len() != m.prior().dim() {
            return Err(PipelineError::config(format!("theta needs {} values", m.prior().dim())));
        }
        let (path, y) = m.simulate(theta, horizon, rng)?;
        let latent = path.iter().map(|z| z.iter().copied().collect()).collect();
        Ok((y, latent, (1..=D).map(|i| format!("z{i}")).collect()))
    }
    match model {
        ModelArg::PoissonTrend => {
            let mut m = PoissonTrendModel::new(f64::INFINITY);
            m.fixed_start = match start {
                Some([u, v]) => Some([*u, *v]),
                Some(_) => return Err(PipelineError::config("start needs 2 values")),
                None => None,
            };
            lg(&m, theta, horizon, rng)
        }
        ModelArg::Sv => lg(&SvModel::default(), theta, horizon, rng),
        ModelArg::PoissonLocalLevel => lg(&LocalLevelModel::poisson(one_dim()), theta, horizon, rng),
        ModelArg::GaussianLocalLevel => lg(&LocalLevelModel::gaussian(one_dim(), obs_var), theta, horizon, rng),
        ModelArg::Gbm => {
            if theta.len() != 3 {
                return Err(PipelineError::config("theta needs 3 values"));
            }
            let (z, y) = GbmModel::default().simulate(theta, horizon, rng)?;
            Ok((y, z.into_iter().map(|v| vec![v]).collect(), vec!["z".into()]))
        }
    }
}

fn one_dim() -> PriorSpec {
    PriorSpec::new(vec![ismc_core::models::PriorComponent::Uniform { lower: 0.0, upper: f64::INFINITY }])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
