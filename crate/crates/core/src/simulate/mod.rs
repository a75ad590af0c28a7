//! Seeded Monte Carlo and exact-enumeration harness.
//!
//! Experiments are declared as JSON documents ([`ExperimentSpec`]) and
//! produce a list of [`Record`]s. Each replication draws from its own
//! counter-based stream, so results do not depend on the worker count.

pub mod exact;
pub mod experiments;
pub mod rng;
pub mod wilson;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use experiments::{
    example1_witness, example2_witness, example3_demo, example4_demo, sample_counts, verify_corollary1,
    verify_corollary2, verify_theorem1, verify_theorem2, ChoiceSchedule, Example1Witness, Example2Witness,
    ExperimentResult, MeanEvaluator, RunTag, ScanRun, ScanSummary, Theorem1Run, TwoDiceRun,
};

use crate::bernstein::{certificate_for_prior, GammaCertificate};
use crate::bounds::{
    combine_certificates, corollary1_threshold, markov_uniform_threshold, theorem1_threshold, theorem2_constants,
};
use crate::error::{Error, Result};
use crate::priors::{PriorConfig, SimplexPoint, DEFAULT_GRID_RESOLUTION};
use crate::quadrature::QuadratureSpec;
use crate::special::ceil_snap;

pub const DEFAULT_REPLICATIONS: u64 = 10_000;
const DEFAULT_CERTIFICATE_EPSILON: f64 = 0.05;
const DEFAULT_N_MAX: u64 = 100_000;

fn default_reps() -> u64 {
    DEFAULT_REPLICATIONS
}
fn default_cert_eps() -> f64 {
    DEFAULT_CERTIFICATE_EPSILON
}
fn default_grid_resolution() -> usize {
    DEFAULT_GRID_RESOLUTION
}
fn default_schedule() -> ChoiceSchedule {
    ChoiceSchedule::Alternating
}
fn default_exp_boundary() -> PriorConfig {
    PriorConfig::ExpBoundary
}
fn default_zeta2() -> f64 {
    2.0
}
fn default_zeta_half() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_search_cap() -> u64 {
    10_000_000
}
fn default_half_epsilon() -> f64 {
    0.5
}
fn default_example4_n() -> Vec<u64> {
    vec![1_000, 10_000, 100_000]
}

/// Where the single-die threshold comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdSpec {
    /// `⌈8ε⁻³ + 3γε⁻¹⌉` with the certificate requested at `ε/5`.
    Remark3pp,
    /// `⌈2ε⁻³⌉`, uniform prior on two outcomes only.
    MarkovUniform,
    Fixed {
        #[serde(rename = "N")]
        n: u64,
    },
}

/// One grid point: the full probability vector plus either `n` or a target
/// for `n p_k` (absolute, or as a multiple of the threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np_multiple: Option<f64>,
}

/// A declarative experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Theorem1 {
        prior: PriorConfig,
        epsilon: f64,
        #[serde(default)]
        k: usize,
        threshold: ThresholdSpec,
        grid: Vec<GridPoint>,
        #[serde(default = "default_reps")]
        replications: u64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
    Theorem2 {
        pi: PriorConfig,
        rho: PriorConfig,
        p: Vec<f64>,
        q: Vec<f64>,
        #[serde(default)]
        kbar: usize,
        c: f64,
        delta: f64,
        eta: f64,
        epsilon: f64,
        /// Smallest admissible `n` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
        #[serde(default = "default_schedule")]
        schedule: ChoiceSchedule,
        #[serde(default = "default_cert_eps")]
        certificate_epsilon: f64,
        #[serde(default = "default_reps")]
        replications: u64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
    Corollary1 {
        pi: PriorConfig,
        rho: PriorConfig,
        p: Vec<f64>,
        q: Vec<f64>,
        #[serde(default)]
        kbar: usize,
        c: f64,
        delta: f64,
        epsilon: f64,
        mu_b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
        #[serde(default = "default_cert_eps")]
        certificate_epsilon: f64,
        #[serde(default = "default_reps")]
        replications: u64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
    Corollary2 {
        pi: PriorConfig,
        rho: PriorConfig,
        p: Vec<f64>,
        q: Vec<f64>,
        #[serde(default)]
        kbar: usize,
        epsilon: f64,
        mu_b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
        #[serde(default = "default_cert_eps")]
        certificate_epsilon: f64,
        #[serde(default = "default_reps")]
        replications: u64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
    Example1 {
        #[serde(rename = "N")]
        big_n: f64,
        delta: f64,
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
    Example2 {
        prior: PriorConfig,
        #[serde(rename = "N")]
        big_n: f64,
        /// `ζ(n) = n^zeta_power`.
        #[serde(default = "default_zeta2")]
        zeta_power: f64,
        #[serde(default = "default_half_epsilon")]
        certificate_epsilon: f64,
        #[serde(default = "default_search_cap")]
        search_cap: u64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
    },
    Example3 {
        pi: PriorConfig,
        #[serde(default = "default_exp_boundary")]
        rho: PriorConfig,
        c: f64,
        mu_b: f64,
        #[serde(rename = "N")]
        big_n: f64,
        /// Doubling scan from the smallest admissible `n` up to `n_max` when
        /// absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_values: Option<Vec<u64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<u64>,
        #[serde(default = "default_true")]
        stop_at_crossing: bool,
        #[serde(default = "default_reps")]
        replications: u64,
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
    Example4 {
        pi: PriorConfig,
        rho: PriorConfig,
        c: f64,
        mu_b: f64,
        #[serde(rename = "N")]
        big_n: f64,
        /// `ζ(t) = t^zeta_power`.
        #[serde(default = "default_zeta_half")]
        zeta_power: f64,
        #[serde(default = "default_example4_n")]
        n_values: Vec<u64>,
        #[serde(default = "default_cert_eps")]
        certificate_epsilon: f64,
        #[serde(default = "default_reps")]
        replications: u64,
        #[serde(default = "default_grid_resolution")]
        grid_resolution: usize,
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
}

impl ExperimentSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::Theorem1 { .. } => "theorem1",
            ExperimentSpec::Theorem2 { .. } => "theorem2",
            ExperimentSpec::Corollary1 { .. } => "corollary1",
            ExperimentSpec::Corollary2 { .. } => "corollary2",
            ExperimentSpec::Example1 { .. } => "example1",
            ExperimentSpec::Example2 { .. } => "example2",
            ExperimentSpec::Example3 { .. } => "example3",
            ExperimentSpec::Example4 { .. } => "example4",
        }
    }
}

/// Git-style content hash: SHA-256 of `"blob <len>\0"` followed by the
/// canonical JSON (sorted keys, defaults filled in) of `value`.
pub fn spec_hash<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", canonical.len()).as_bytes());
    hasher.update(canonical.as_bytes());
    Ok(hex::encode(hasher.finalize()))
}

/// One output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Result(ExperimentResult),
    Example1(Example1WitnessRecord),
    Example2(Example2WitnessRecord),
    Summary(ScanSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1WitnessRecord {
    #[serde(flatten)]
    pub witness: Example1Witness,
    pub seed: u64,
    pub spec_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2WitnessRecord {
    #[serde(flatten)]
    pub witness: Example2Witness,
    pub seed: u64,
    pub spec_hash: String,
}

impl Record {
    /// Whether the record reports a check that failed.
    pub fn passed(&self) -> bool {
        match self {
            Record::Result(r) => r.pass,
            Record::Example1(w) => w.witness.certificate_holds && w.witness.quadrature_confirms,
            Record::Example2(w) => w.witness.certificate_holds,
            Record::Summary(_) => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    pub exploratory: bool,
    /// Directory against which relative grid-file paths resolve.
    pub base_dir: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: 1, jobs: None, exploratory: false, base_dir: PathBuf::from(".") }
    }
}

/// Runs an experiment on a dedicated thread pool.
pub fn run(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<Record>> {
    let hash = spec_hash(spec)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = opts.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut records = pool.install(|| dispatch(spec, opts))?;
    for record in &mut records {
        match record {
            Record::Result(r) => r.spec_hash = hash.clone(),
            Record::Example1(w) => w.spec_hash = hash.clone(),
            Record::Example2(w) => w.spec_hash = hash.clone(),
            Record::Summary(s) => s.spec_hash = hash.clone(),
        }
    }
    Ok(records)
}

fn point(p: &[f64]) -> Result<SimplexPoint> {
    SimplexPoint::new(p.to_vec())
}

fn joint_certificate(
    pi: &crate::priors::Prior,
    rho: &crate::priors::Prior,
    epsilon: f64,
    grid_resolution: usize,
) -> Result<GammaCertificate> {
    let a = certificate_for_prior(pi, epsilon, grid_resolution)?;
    let b = certificate_for_prior(rho, epsilon, grid_resolution)?;
    Ok(combine_certificates(&a, &b))
}

fn with_extra(mut r: ExperimentResult, extra: Value) -> Record {
    r.extra = extra;
    Record::Result(r)
}

fn dispatch(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<Record>> {
    let base = opts.base_dir.as_path();
    let seed = opts.seed;
    match spec {
        ExperimentSpec::Theorem1 { prior, epsilon, k, threshold, grid, replications, grid_resolution, quadrature } => {
            let prior = prior.build(base)?;
            let (big_n, info) = match threshold {
                ThresholdSpec::Fixed { n } => (*n, json!({ "N": n, "method": "fixed" })),
                ThresholdSpec::MarkovUniform => {
                    if prior.dirichlet_alpha() != Some(&[1.0, 1.0][..]) {
                        return Err(Error::Config("markov_uniform threshold needs the uniform prior on K = 2".into()));
                    }
                    let t = markov_uniform_threshold(*epsilon)?;
                    (t.n, serde_json::to_value(&t)?)
                }
                ThresholdSpec::Remark3pp => {
                    let cert = certificate_for_prior(&prior, epsilon / 5.0, *grid_resolution)?;
                    let t = theorem1_threshold(*epsilon, &cert)?;
                    (t.n, json!({ "threshold": t, "certificate": cert }))
                }
            };
            let mut points = Vec::with_capacity(grid.len());
            for g in grid {
                let p = point(&g.p)?;
                let pk = p.get(*k);
                let target = match (g.n, g.np, g.np_multiple) {
                    (Some(n), None, None) => {
                        points.push((n, p));
                        continue;
                    }
                    (None, Some(np), None) => np,
                    (None, None, Some(m)) => m * big_n as f64,
                    _ => return Err(Error::Config("grid point needs exactly one of n, np, np_multiple".into())),
                };
                if !(pk > 0.0) {
                    return Err(Error::Config("np target needs p_k > 0".into()));
                }
                points.push((ceil_snap(target / pk) as u64, p));
            }
            let run = Theorem1Run {
                prior: &prior,
                k: *k,
                epsilon: *epsilon,
                threshold: big_n,
                points,
                replications: *replications,
                seed,
                exploratory: opts.exploratory,
                quadrature: *quadrature,
            };
            Ok(verify_theorem1(&run)?.into_iter().map(|r| with_extra(r, info.clone())).collect())
        }
        ExperimentSpec::Theorem2 {
            pi,
            rho,
            p,
            q,
            kbar,
            c,
            delta,
            eta,
            epsilon,
            n,
            schedule,
            certificate_epsilon,
            replications,
            grid_resolution,
            quadrature,
        } => {
            let (pi, rho) = (pi.build(base)?, rho.build(base)?);
            let cert = joint_certificate(&pi, &rho, *certificate_epsilon, *grid_resolution)?;
            let constants = theorem2_constants(*c, *delta, *eta, *epsilon, &cert)?;
            let p = point(p)?;
            let q = point(q)?;
            let n = match n {
                Some(n) => *n,
                None => smallest_schedule_n(schedule, p.get(*kbar), constants.n, *eta)?,
            };
            let run = TwoDiceRun {
                pi: &pi,
                rho: &rho,
                p,
                q,
                kbar: *kbar,
                n,
                replications: *replications,
                seed,
                exploratory: opts.exploratory,
                quadrature: *quadrature,
            };
            let r = verify_theorem2(&run, schedule, *c, *delta, *eta, *epsilon, constants.n)?;
            Ok(vec![with_extra(r, json!({ "constants": constants, "certificate": cert }))])
        }
        ExperimentSpec::Corollary1 {
            pi,
            rho,
            p,
            q,
            kbar,
            c,
            delta,
            epsilon,
            mu_b,
            n,
            certificate_epsilon,
            replications,
            grid_resolution,
            quadrature,
        } => {
            let (pi, rho) = (pi.build(base)?, rho.build(base)?);
            let cert = joint_certificate(&pi, &rho, *certificate_epsilon, *grid_resolution)?;
            let threshold = corollary1_threshold(*mu_b, *c, *delta, *epsilon, &cert)?;
            let p = point(p)?;
            let q = point(q)?;
            let n = n.unwrap_or_else(|| ceil_snap(threshold.n as f64 / p.get(*kbar)) as u64);
            let run = TwoDiceRun {
                pi: &pi,
                rho: &rho,
                p,
                q,
                kbar: *kbar,
                n,
                replications: *replications,
                seed,
                exploratory: opts.exploratory,
                quadrature: *quadrature,
            };
            let r = verify_corollary1(&run, *mu_b, *c, *delta, *epsilon, threshold.n)?;
            Ok(vec![with_extra(r, json!({ "threshold": threshold, "certificate": cert }))])
        }
        ExperimentSpec::Corollary2 {
            pi,
            rho,
            p,
            q,
            kbar,
            epsilon,
            mu_b,
            n,
            certificate_epsilon,
            replications,
            grid_resolution,
            quadrature,
        } => {
            let (pi, rho) = (pi.build(base)?, rho.build(base)?);
            let cert = joint_certificate(&pi, &rho, *certificate_epsilon, *grid_resolution)?;
            let threshold = corollary1_threshold(*mu_b, 1.0, *epsilon, *epsilon, &cert)?;
            let p = point(p)?;
            let q = point(q)?;
            let n = n.unwrap_or_else(|| ceil_snap(threshold.n as f64 / p.get(*kbar)) as u64);
            let run = TwoDiceRun {
                pi: &pi,
                rho: &rho,
                p,
                q,
                kbar: *kbar,
                n,
                replications: *replications,
                seed,
                exploratory: opts.exploratory,
                quadrature: *quadrature,
            };
            let r = verify_corollary2(&run, *mu_b, *epsilon, threshold.n)?;
            let mut extra = r.extra.clone();
            extra["threshold"] = serde_json::to_value(&threshold)?;
            Ok(vec![with_extra(r, extra)])
        }
        ExperimentSpec::Example1 { big_n, delta, quadrature } => {
            let witness = example1_witness(*big_n, *delta, quadrature)?;
            Ok(vec![Record::Example1(Example1WitnessRecord { witness, seed, spec_hash: String::new() })])
        }
        ExperimentSpec::Example2 { prior, big_n, zeta_power, certificate_epsilon, search_cap, grid_resolution } => {
            let prior = prior.build(base)?;
            let cert = certificate_for_prior(&prior, *certificate_epsilon, *grid_resolution)?;
            let power = *zeta_power;
            let witness = example2_witness(&cert, &|n| (n as f64).powf(power), *big_n, *search_cap)?;
            Ok(vec![Record::Example2(Example2WitnessRecord { witness, seed, spec_hash: String::new() })])
        }
        ExperimentSpec::Example3 {
            pi,
            rho,
            c,
            mu_b,
            big_n,
            n_values,
            n_max,
            stop_at_crossing,
            replications,
            quadrature,
        } => {
            let (pi, rho) = (pi.build(base)?, rho.build(base)?);
            let n_values = match n_values {
                Some(v) => v.clone(),
                None => doubling_scan((big_n * c.recip().max(1.0)).ceil() as u64, n_max.unwrap_or(DEFAULT_N_MAX)),
            };
            let mut scan = ScanRun {
                pi: &pi,
                rho: &rho,
                c: *c,
                mu_b: *mu_b,
                n_values: Vec::new(),
                replications: *replications,
                seed,
                quadrature: *quadrature,
            };
            let mut results = Vec::new();
            let mut summary = None;
            if *stop_at_crossing {
                // One point at a time so the scan ends at the crossing. The
                // index keeps each point on its own stream family.
                for (idx, &n) in n_values.iter().enumerate() {
                    scan.n_values = vec![n];
                    let (mut rs, s) = experiments::example3_demo_from(&scan, *big_n, idx as u64)?;
                    results.append(&mut rs);
                    if s.crossing_n.is_some() {
                        summary = Some(s);
                        break;
                    }
                    summary = Some(s);
                }
            } else {
                scan.n_values = n_values;
                let (rs, s) = example3_demo(&scan, *big_n)?;
                results = rs;
                summary = Some(s);
            }
            let mut out: Vec<Record> = results.into_iter().map(Record::Result).collect();
            out.extend(summary.map(Record::Summary));
            Ok(out)
        }
        ExperimentSpec::Example4 {
            pi,
            rho,
            c,
            mu_b,
            big_n,
            zeta_power,
            n_values,
            certificate_epsilon,
            replications,
            grid_resolution,
            quadrature,
        } => {
            let (pi, rho) = (pi.build(base)?, rho.build(base)?);
            let cert = joint_certificate(&pi, &rho, *certificate_epsilon, *grid_resolution)?;
            let scan = ScanRun {
                pi: &pi,
                rho: &rho,
                c: *c,
                mu_b: *mu_b,
                n_values: n_values.clone(),
                replications: *replications,
                seed,
                quadrature: *quadrature,
            };
            let power = *zeta_power;
            let (results, summary) = example4_demo(&scan, cert.gamma, &|t| t.powf(power), *big_n)?;
            let mut out: Vec<Record> = results
                .into_iter()
                .map(|mut r| {
                    r.extra["gamma"] = json!(cert.gamma);
                    Record::Result(r)
                })
                .collect();
            out.push(Record::Summary(summary));
            Ok(out)
        }
    }
}

fn doubling_scan(start: u64, n_max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = start.max(1);
    while n <= n_max {
        out.push(n);
        n *= 2;
    }
    out
}

/// Least `n` with `b_n p >= N` and `b_n <= (1-η) n` under a deterministic
/// schedule.
pub fn smallest_schedule_n(schedule: &ChoiceSchedule, p: f64, big_n: u64, eta: f64) -> Result<u64> {
    if !(p > 0.0) {
        return Err(Error::Config("p_kbar must be positive".into()));
    }
    let start = ceil_snap(big_n as f64 / p) as u64;
    let limit = match schedule {
        ChoiceSchedule::Explicit(s) => s.len() as u64,
        _ => start.saturating_mul(4).saturating_add(16),
    };
    for n in start.max(1)..=limit {
        let b = schedule.blue_count(n)?;
        if b as f64 * p >= big_n as f64 && b as f64 <= (1.0 - eta) * n as f64 {
            return Ok(n);
        }
    }
    Err(Error::SearchCap(format!("no n <= {limit} satisfies the schedule conditions")))
}

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// JSON-lines, one record per line.
pub fn write_json_lines<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Flat CSV: one column per top-level key (union over records, sorted);
/// nested values are written as JSON text.
pub fn write_csv<W: Write, T: Serialize>(w: W, records: &[T]) -> Result<()> {
    let rows: Vec<serde_json::Map<String, Value>> = records
        .iter()
        .map(|r| match serde_json::to_value(r)? {
            Value::Object(m) => Ok(m),
            other => {
                let mut m = serde_json::Map::new();
                m.insert("value".into(), other);
                Ok(m)
            }
        })
        .collect::<Result<_>>()?;
    let mut columns: Vec<String> = rows.iter().flat_map(|m| m.keys().cloned()).collect();
    columns.sort();
    columns.dedup();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&columns)?;
    for row in &rows {
        out.write_record(columns.iter().map(|c| match row.get(c) {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
        }))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records<W: Write, T: Serialize>(w: W, records: &[T], format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Json => write_json_lines(w, records),
        OutputFormat::Csv => write_csv(w, records),
    }
}
