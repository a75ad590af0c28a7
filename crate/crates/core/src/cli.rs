//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bernstein::{certificate_for_prior, gamma_remark3prime, GammaCertificate};
use crate::bounds::{
    combine_certificates, corollary1_threshold, markov_uniform_threshold, remark3pp_threshold, theorem1_threshold,
    theorem2_constants,
};
use crate::error::{Error, Result};
use crate::posterior::{bracket, lemma2_lower_bound, mixture_bracket, posterior_mean, Counts};
use crate::priors::{Prior, PriorConfig, DEFAULT_GRID_RESOLUTION};
use crate::quadrature::QuadratureSpec;
use crate::simulate::{self, spec_hash, ExperimentSpec, OutputFormat, RunOptions, RunTag};

#[derive(Debug, Parser)]
#[command(name = "rarebayes", version, about = "Posterior means, bracketing constants and thresholds for rare multinomial events")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration (prior/bounds/posterior config or experiment spec).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for experiments; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output file; stdout when absent. A manifest is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Run experiments whose theorem preconditions fail, tagged exploratory.
    #[arg(long, global = true)]
    pub exploratory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Bracketing constant for a prior.
    Gamma,
    /// Sample-size thresholds and proof constants.
    Bounds,
    /// Posterior mean and bracket for given counts.
    Posterior,
    /// Run an experiment spec.
    Experiment,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gamma => "gamma",
            Command::Bounds => "bounds",
            Command::Posterior => "posterior",
            Command::Experiment => "experiment",
        }
    }
}

fn default_grid_resolution() -> usize {
    DEFAULT_GRID_RESOLUTION
}
fn default_cert_eps() -> f64 {
    0.05
}
fn default_posterior_eps() -> f64 {
    0.2
}

/// Analytic constants for the closed-form `γ` (two outcomes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Remark3PrimeInput {
    pub max_abs_phi_prime: f64,
    pub min_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    pub prior: PriorConfig,
    pub epsilon: f64,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remark3prime: Option<Remark3PrimeInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundsConfig {
    /// Exactly one of `prior`, `gamma` (certified at `ε/5`) or
    /// `markov_uniform`.
    Theorem1 {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<PriorConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default)]
        markov_uniform: bool,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
    },
    Theorem2 {
        c: f64,
        delta: f64,
        eta: f64,
        epsilon: f64,
        pi: PriorConfig,
        rho: PriorConfig,
        #[serde(default = "default_cert_eps")]
        certificate_epsilon: f64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
    },
    Corollary1 {
        mu_b: f64,
        c: f64,
        delta: f64,
        epsilon: f64,
        pi: PriorConfig,
        rho: PriorConfig,
        #[serde(default = "default_cert_eps")]
        certificate_epsilon: f64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorConfig {
    pub prior: PriorConfig,
    pub counts: Vec<u64>,
    #[serde(default)]
    pub k: usize,
    /// Bracket parameter for priors without a closed-form bracket.
    #[serde(default = "default_posterior_eps")]
    pub epsilon: f64,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: usize,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

/// Provenance of one invocation, written next to the output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: PathBuf,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub spec_hash: String,
    pub format: OutputFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub exploratory: bool,
    pub runtime_ms: u64,
}

/// Process exit status for an error: 3 for a violated theorem precondition,
/// 1 for a numerical failure, 2 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Precondition(_) => 3,
        Error::Quadrature { .. } => 1,
        _ => 2,
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

pub fn cmd_gamma(cfg: &GammaConfig, base: &Path) -> Result<GammaCertificate> {
    let prior = cfg.prior.build(base)?;
    match &cfg.remark3prime {
        Some(r) => match &prior {
            Prior::ConditionP(p) => gamma_remark3prime(p, cfg.epsilon, r.max_abs_phi_prime, r.min_phi),
            _ => Err(Error::Config("remark3prime needs a Condition P prior with an explicit tilde-pi".into())),
        },
        None => certificate_for_prior(&prior, cfg.epsilon, cfg.grid_resolution),
    }
}

fn joint_certificate(pi: &PriorConfig, rho: &PriorConfig, eps: f64, res: usize, base: &Path) -> Result<GammaCertificate> {
    let a = certificate_for_prior(&pi.build(base)?, eps, res)?;
    let b = certificate_for_prior(&rho.build(base)?, eps, res)?;
    Ok(combine_certificates(&a, &b))
}

pub fn cmd_bounds(cfg: &BoundsConfig, base: &Path) -> Result<Value> {
    match cfg {
        BoundsConfig::Theorem1 { epsilon, prior, gamma, markov_uniform, grid_resolution } => {
            match (prior, gamma, markov_uniform) {
                (Some(prior), None, false) => {
                    let cert = certificate_for_prior(&prior.build(base)?, epsilon / 5.0, *grid_resolution)?;
                    let mut out = serde_json::to_value(theorem1_threshold(*epsilon, &cert)?)?;
                    out["certificate"] = serde_json::to_value(&cert)?;
                    Ok(out)
                }
                (None, Some(g), false) => Ok(serde_json::to_value(remark3pp_threshold(*epsilon, *g)?)?),
                (None, None, true) => Ok(serde_json::to_value(markov_uniform_threshold(*epsilon)?)?),
                _ => Err(Error::Config("theorem1 needs exactly one of prior, gamma, markov_uniform".into())),
            }
        }
        BoundsConfig::Theorem2 { c, delta, eta, epsilon, pi, rho, certificate_epsilon, grid_resolution } => {
            let cert = joint_certificate(pi, rho, *certificate_epsilon, *grid_resolution, base)?;
            Ok(serde_json::to_value(theorem2_constants(*c, *delta, *eta, *epsilon, &cert)?)?)
        }
        BoundsConfig::Corollary1 { mu_b, c, delta, epsilon, pi, rho, certificate_epsilon, grid_resolution } => {
            let cert = joint_certificate(pi, rho, *certificate_epsilon, *grid_resolution, base)?;
            Ok(serde_json::to_value(corollary1_threshold(*mu_b, *c, *delta, *epsilon, &cert)?)?)
        }
    }
}

pub fn cmd_posterior(cfg: &PosteriorConfig, base: &Path) -> Result<Value> {
    let prior = cfg.prior.build(base)?;
    let counts = Counts::new(cfg.counts.clone())?;
    let mean = posterior_mean(&prior, &counts, cfg.k, &cfg.quadrature)?;
    let mut out = serde_json::to_value(&mean)?;
    match &prior {
        Prior::Mixture(m) => {
            let (a, big_a) = m.effective_box();
            let (lower, upper) = mixture_bracket(a, big_a, &counts, cfg.k)?;
            out["bracket"] = json!({ "kind": "mixture_box", "lower": lower, "upper": upper, "a": a, "A": big_a });
        }
        Prior::BoundaryFailure(_) => {
            out["bracket"] = Value::Null;
            out["lemma2_lower_bound"] = json!(lemma2_lower_bound(counts.n()));
        }
        Prior::ConditionP(_) => match certificate_for_prior(&prior, cfg.epsilon, cfg.grid_resolution) {
            Ok(cert) => {
                let b = bracket(&cert, &counts, cfg.k)?;
                let mut v = serde_json::to_value(b)?;
                v["kind"] = json!("gamma");
                out["bracket"] = v;
            }
            Err(e @ (Error::CoefficientBudget { .. } | Error::TooRough { .. })) => {
                out["bracket"] = Value::Null;
                out["bracket_note"] = json!(e.to_string());
            }
            Err(e) => return Err(e),
        },
    }
    Ok(out)
}

fn open_output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Runs one invocation and returns the manifest describing it.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    let started = Instant::now();
    let config = cli.config.clone().ok_or_else(|| Error::Config("--config is required".into()))?;
    let base = base_dir(&config);
    let (hash, records): (String, Vec<Value>) = match cli.command {
        Command::Gamma => {
            let cfg: GammaConfig = read_config(&config)?;
            (spec_hash(&cfg)?, vec![serde_json::to_value(cmd_gamma(&cfg, &base)?)?])
        }
        Command::Bounds => {
            let cfg: BoundsConfig = read_config(&config)?;
            (spec_hash(&cfg)?, vec![cmd_bounds(&cfg, &base)?])
        }
        Command::Posterior => {
            let cfg: PosteriorConfig = read_config(&config)?;
            (spec_hash(&cfg)?, vec![cmd_posterior(&cfg, &base)?])
        }
        Command::Experiment => {
            let spec = ExperimentSpec::from_path(&config)?;
            let opts = RunOptions { seed: cli.seed, jobs: cli.jobs, exploratory: cli.exploratory, base_dir: base };
            let records = simulate::run(&spec, &opts)?;
            for r in &records {
                if let simulate::Record::Result(res) = r {
                    if res.tag == RunTag::TheoremCheck && !res.pass {
                        eprintln!("warning: check failed at {}", res.point);
                    }
                }
            }
            let values = records.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?;
            (spec_hash(&spec)?, values)
        }
    };
    let mut w = open_output(cli.out.as_deref())?;
    simulate::write_records(&mut w, &records, cli.format)?;
    w.flush()?;
    let manifest = RunManifest {
        subcommand: cli.command.name().into(),
        config_path: config,
        seed: cli.seed,
        output_path: cli.out.clone(),
        spec_hash: hash,
        format: cli.format,
        jobs: cli.jobs,
        exploratory: cli.exploratory,
        runtime_ms: started.elapsed().as_millis() as u64,
    };
    if let Some(out) = &cli.out {
        let mut f = BufWriter::new(File::create(manifest_path(out))?);
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        f.flush()?;
    }
    Ok(manifest)
}
