//! Command-line front end.
//!
//! Flags override values from `--config`; every artifact is written under
//! `--out` and depends only on the resolved configuration.

use crate::analysis::{
    delta_norm_tail, l2_increment_series, limit_location_test, martingale_residual, min_f_decay,
    polarization_fraction, EnvelopeParams,
};
use crate::codec::{decode_time, readiness_decode_time, sc_decode, CodeConfig, TaskMatrix, WorkerReturn};
use crate::dist::json::DistributionDoc;
use crate::dist::{Cdf, Distribution, GridDistribution};
use crate::error::Error;
use crate::freezing::{default_lambda, failure_bound, laplace_freeze, quantile_freeze, FreezeRule, FrozenSet};
use crate::io::{csv_f64, csv_row, to_json};
use crate::polarization::joint::{JointGrid, DEFAULT_JOINT_POINTS};
use crate::polarization::{path_evolve, polarize, BitPath, EvolutionConfig, DEFAULT_DEGREE_CAP};
use crate::simulator::{run_comparison, trial_rng};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self { code: EXIT_INTERNAL, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Self { code: EXIT_IO, message: e.to_string() },
            _ => Self::validation(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "polarmix", version, about = "Polar-coded straggler mitigation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Build a frozen set and its union-bound table.
    Construct,
    /// Write the CDFs and densities of the polarized family.
    Evolve,
    /// Monte Carlo comparison of coding schemes.
    Simulate,
    /// Encode, compute, decode and verify random matrix tasks.
    Codec,
    /// Convergence diagnostics.
    Analyze,
    /// Evolve the (min, max) joint density along a path.
    Joint,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Construct => "construct",
            Command::Evolve => "evolve",
            Command::Simulate => "simulate",
            Command::Codec => "codec",
            Command::Analyze => "analyze",
            Command::Joint => "joint",
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// uniform:a,b | exp:mean | delta:c | file:path.json | samples:path.csv
    #[arg(long, global = true)]
    pub dist: Option<String>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// N = 2^n; must agree with --n when both are given.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    #[arg(long, global = true, value_parser = parse_rule)]
    pub rule: Option<FreezeRule>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Comma-separated list.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub deadline: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "grid-points", global = true)]
    pub grid_points: Option<usize>,
    #[arg(long = "degree-cap", global = true)]
    pub degree_cap: Option<usize>,
    /// Random paths for the analysis estimators.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Evaluation points per member for `evolve`.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long = "joint-points", global = true)]
    pub joint_points: Option<usize>,
    /// Bit path such as 1011 (1 = max).
    #[arg(long, global = true)]
    pub path: Option<String>,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

fn parse_rule(s: &str) -> std::result::Result<FreezeRule, String> {
    match s {
        "quantile" => Ok(FreezeRule::Quantile),
        "laplace" => Ok(FreezeRule::Laplace),
        _ => Err(format!("rule must be quantile or laplace, got {s:?}")),
    }
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<FreezeRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadline: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dist: String,
    pub n: usize,
    pub rate: f64,
    pub rule: FreezeRule,
    pub lambda: Option<f64>,
    pub epsilon: f64,
    pub deadline: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub grid_points: usize,
    pub degree_cap: usize,
    pub paths: usize,
    pub samples: usize,
    pub joint_points: usize,
    pub path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dist: "uniform:0,1".into(),
            n: 4,
            rate: 0.5,
            rule: FreezeRule::Quantile,
            lambda: None,
            epsilon: 0.5,
            deadline: Vec::new(),
            trials: 1000,
            seed: 0,
            out: PathBuf::from("out"),
            grid_points: crate::dist::DEFAULT_GRID_POINTS,
            degree_cap: DEFAULT_DEGREE_CAP,
            paths: 1000,
            samples: 101,
            joint_points: DEFAULT_JOINT_POINTS,
            path: None,
        }
    }
}

impl RunConfig {
    pub fn workers(&self) -> usize {
        1 << self.n
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig { degree_cap: self.degree_cap, grid_points: self.grid_points }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |key: &str, why: String| Err(CliError::validation(format!("invalid `{key}`: {why}")));
        if self.n > crate::polarization::MAX_DEPTH {
            return bad("n", format!("depth must be at most {}", crate::polarization::MAX_DEPTH));
        }
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return bad("rate", format!("must lie in (0, 1), got {}", self.rate));
        }
        if (self.rate * self.workers() as f64 + 1e-9).floor() < 1.0 {
            return bad("rate", format!("leaves no data block at N = {}", self.workers()));
        }
        if self.rule == FreezeRule::Manual {
            return bad("rule", "must be quantile or laplace".into());
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return bad("lambda", format!("must be positive, got {l}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon", format!("must be positive, got {}", self.epsilon));
        }
        if self.deadline.iter().any(|d| !d.is_finite()) {
            return bad("deadline", "must be finite".into());
        }
        if self.trials == 0 {
            return bad("trials", "need at least one trial".into());
        }
        if self.grid_points < 2 {
            return bad("grid-points", "need at least 2".into());
        }
        if self.degree_cap < 2 {
            return bad("degree-cap", "need at least 2".into());
        }
        if self.paths == 0 {
            return bad("paths", "need at least one path".into());
        }
        if self.samples < 2 {
            return bad("samples", "need at least 2".into());
        }
        if self.joint_points < 2 {
            return bad("joint-points", "need at least 2".into());
        }
        if let Some(p) = &self.path {
            BitPath::parse(p).map_err(|e| CliError::validation(format!("invalid `path`: {e}")))?;
        }
        parse_dist_spec(&self.dist)?;
        Ok(())
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Merge `--config` (if any) under the command-line flags.
pub fn parse_config(flags: &Flags) -> CliResult<RunConfig> {
    let file = match &flags.config {
        Some(p) => serde_json::from_str::<ConfigFile>(&read_text(p)?)
            .map_err(|e| CliError::validation(format!("config {}: {e}", p.display())))?,
        None => ConfigFile::default(),
    };
    let d = RunConfig::default();
    let n_flag = flags.n.or(file.n);
    let workers = flags.workers.or(file.workers);
    let n = match (n_flag, workers) {
        (n, Some(w)) => {
            if w == 0 || !w.is_power_of_two() {
                return Err(CliError::validation(format!("invalid `workers`: {w} is not a power of two")));
            }
            let from_w = w.trailing_zeros() as usize;
            if n.is_some_and(|n| n != from_w) {
                return Err(CliError::validation(format!("invalid `workers`: {w} disagrees with n")));
            }
            from_w
        }
        (Some(n), None) => n,
        (None, None) => d.n,
    };
    let cfg = RunConfig {
        dist: flags.dist.clone().or(file.dist).unwrap_or(d.dist),
        n,
        rate: flags.rate.or(file.rate).unwrap_or(d.rate),
        rule: flags.rule.or(file.rule).unwrap_or(d.rule),
        lambda: flags.lambda.or(file.lambda),
        epsilon: flags.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
        deadline: flags.deadline.clone().or(file.deadline).unwrap_or(d.deadline),
        trials: flags.trials.or(file.trials).unwrap_or(d.trials),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        out: flags.out.clone().or(file.out).unwrap_or(d.out),
        grid_points: flags.grid_points.or(file.grid_points).unwrap_or(d.grid_points),
        degree_cap: flags.degree_cap.or(file.degree_cap).unwrap_or(d.degree_cap),
        paths: flags.paths.or(file.paths).unwrap_or(d.paths),
        samples: flags.samples.or(file.samples).unwrap_or(d.samples),
        joint_points: flags.joint_points.or(file.joint_points).unwrap_or(d.joint_points),
        path: flags.path.clone().or(file.path),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_numbers(s: &str, expected: usize, spec: &str) -> CliResult<Vec<f64>> {
    let xs = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::validation(format!("invalid `dist` {spec:?}: {e}")))?;
    if xs.len() != expected {
        return Err(CliError::validation(format!("invalid `dist` {spec:?}: expected {expected} numbers")));
    }
    Ok(xs)
}

/// Numbers from a samples file: comma- or newline-separated, an optional
/// non-numeric header line is skipped.
pub fn parse_samples(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for field in line.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match field.parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) if i == 0 => break,
                Err(e) => return Err(CliError::validation(format!("samples line {}: {field:?}: {e}", i + 1))),
            }
        }
    }
    Ok(out)
}

/// Parse the distribution mini-language.
pub fn parse_dist_spec(spec: &str) -> CliResult<Distribution> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| CliError::validation(format!("invalid `dist` {spec:?}: expected kind:args")))?;
    let d = match kind {
        "uniform" => {
            let v = parse_numbers(arg, 2, spec)?;
            Distribution::uniform(v[0], v[1])?
        }
        "exp" => Distribution::exponential(parse_numbers(arg, 1, spec)?[0])?,
        "delta" => Distribution::delta(parse_numbers(arg, 1, spec)?[0])?,
        "file" => {
            let doc = DistributionDoc::parse(&read_text(Path::new(arg))?)?;
            doc.to_runtime()?.into()
        }
        "samples" => Distribution::from_samples(&parse_samples(&read_text(Path::new(arg))?)?)?,
        _ => return Err(CliError::validation(format!("invalid `dist` {spec:?}: unknown kind {kind:?}"))),
    };
    Ok(d)
}

fn write(out: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let p = out.join(name);
    std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
    Ok(p)
}

fn build_frozen(base: &Distribution, cfg: &RunConfig) -> CliResult<FrozenSet> {
    Ok(match cfg.rule {
        FreezeRule::Laplace => {
            let lambda = match cfg.lambda {
                Some(l) => l,
                None => default_lambda(cfg.n, cfg.rate, cfg.epsilon)?,
            };
            laplace_freeze(base, cfg.n, cfg.rate, lambda, &cfg.evolution())?
        }
        _ => quantile_freeze(base, cfg.n, cfg.rate)?,
    })
}

fn sweep_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if hi > lo {
        GridDistribution::abscissae(lo, hi, count)
    } else {
        vec![lo; 1]
    }
}

fn construct(cfg: &RunConfig, base: &Distribution) -> CliResult<Vec<PathBuf>> {
    let frozen = build_frozen(base, cfg)?;
    let (a, b) = base.support();
    let deadlines = if cfg.deadline.is_empty() {
        let t0 = base.quantile(cfg.rate)?;
        sweep_points(t0, b.max(a), 20)
    } else {
        cfg.deadline.clone()
    };
    let mut csv = csv_row(&["deadline", "failure_bound"]);
    for t in deadlines {
        csv.push_str(&csv_row(&[csv_f64(t), csv_f64(failure_bound(base, &frozen, t))]));
    }
    Ok(vec![write(&cfg.out, "frozenset.json", &frozen.to_json())?, write(&cfg.out, "bounds.csv", &csv)?])
}

fn density_or_nan(d: &Distribution, t: f64) -> f64 {
    d.eval_pdf(t).unwrap_or(f64::NAN)
}

fn evolve(cfg: &RunConfig, base: &Distribution) -> CliResult<Vec<PathBuf>> {
    let ecfg = cfg.evolution();
    let (a, b) = base.support();
    let ts = sweep_points(a, b, cfg.samples);
    let members: Vec<(String, Distribution)> = match &cfg.path {
        Some(p) => {
            let path = BitPath::parse(p)?;
            vec![(path.to_string(), path_evolve(base, &path, &ecfg))]
        }
        None => polarize(base, cfg.n, &ecfg)?
            .into_members()
            .into_iter()
            .enumerate()
            .map(|(i, m)| (BitPath::from_index(i, cfg.n).expect("index below 2^n").to_string(), m))
            .collect(),
    };
    let mut header = vec!["t".to_string()];
    for (name, _) in &members {
        let name = if name.is_empty() { "root" } else { name };
        header.push(format!("cdf_{name}"));
        header.push(format!("pdf_{name}"));
    }
    let mut csv = csv_row(&header);
    let cdfs: Vec<Vec<f64>> = members.iter().map(|(_, m)| m.cdf_many(&ts)).collect();
    for (k, &t) in ts.iter().enumerate() {
        let mut row = vec![csv_f64(t)];
        for ((_, m), c) in members.iter().zip(&cdfs) {
            row.push(csv_f64(c[k]));
            row.push(csv_f64(density_or_nan(m, t)));
        }
        csv.push_str(&csv_row(&row));
    }
    let mut out = vec![write(&cfg.out, "family.csv", &csv)?];
    if members.iter().all(|(_, m)| m.is_exact()) {
        #[derive(Serialize)]
        struct Member<'a> {
            path: &'a str,
            distribution: DistributionDoc,
        }
        let docs: Vec<Member<'_>> = members
            .iter()
            .map(|(p, m)| Member { path: p, distribution: DistributionDoc::from_distribution(m) })
            .collect();
        out.push(write(&cfg.out, "family.json", &to_json(&docs))?);
    }
    Ok(out)
}

fn simulate(cfg: &RunConfig, base: &Distribution) -> CliResult<Vec<PathBuf>> {
    let frozen = build_frozen(base, cfg)?;
    let report = run_comparison(base, &cfg.dist, &frozen, cfg.trials, cfg.seed, cfg.deadline.first().copied())?;
    Ok(vec![
        write(&cfg.out, "comparison.csv", &report.to_csv())?,
        write(&cfg.out, "summary.json", &report.summary_json())?,
    ])
}

#[derive(Serialize)]
struct CodecReport {
    workers: usize,
    k: usize,
    trials: usize,
    seed: u64,
    max_rel_err: f64,
    straggler_max_rel_err: f64,
    timing_mismatches: usize,
    passed: bool,
}

pub const CODEC_TOLERANCE: f64 = 1e-9;

fn codec(cfg: &RunConfig, base: &Distribution) -> CliResult<Vec<PathBuf>> {
    let frozen = build_frozen(base, cfg)?;
    let code = CodeConfig::new(frozen.clone());
    let trials = cfg.trials.min(100);
    let (mut worst, mut worst_straggler, mut mismatches) = (0.0f64, 0.0f64, 0usize);
    for trial in 0..trials as u64 {
        let mut rng = trial_rng(cfg.seed, trial);
        let data: Vec<TaskMatrix> = (0..code.k()).map(|_| TaskMatrix::random(4, 3, &mut rng)).collect();
        let b = TaskMatrix::random(3, 2, &mut rng);
        let coded = code.encode_data(&data)?;
        let times: Vec<f64> = (0..code.workers()).map(|_| base.sample(&mut rng)).collect();
        let results: Vec<TaskMatrix> = coded.iter().map(|x| x.matmul(&b)).collect::<crate::Result<_>>()?;
        let expected: Vec<TaskMatrix> = data.iter().map(|x| x.matmul(&b)).collect::<crate::Result<_>>()?;
        let returns: Vec<WorkerReturn> =
            results.iter().enumerate().map(|(i, r)| WorkerReturn::arrived(i, r.clone(), times[i])).collect();
        let decoded = sc_decode(&returns, &code).map_err(|e| CliError::internal(format!("decode failed: {e}")))?;
        for (got, want) in decoded.data().into_iter().zip(&expected) {
            worst = worst.max(got.relative_error(want)?);
        }
        let td = decode_time(&times, &frozen)?;
        if td != decoded.decode_time || td != readiness_decode_time(&times, &frozen)? {
            mismatches += 1;
        }
        // Only the results in by the decode time.
        let late: Vec<WorkerReturn> = results
            .iter()
            .enumerate()
            .map(|(i, r)| if times[i] <= td { WorkerReturn::arrived(i, r.clone(), times[i]) } else { WorkerReturn::missing(i) })
            .collect();
        let partial = sc_decode(&late, &code)
            .map_err(|e| CliError::internal(format!("decode at the decode time failed: {e}")))?;
        for (got, want) in partial.data().into_iter().zip(&expected) {
            worst_straggler = worst_straggler.max(got.relative_error(want)?);
        }
    }
    let passed = worst < CODEC_TOLERANCE && worst_straggler < CODEC_TOLERANCE && mismatches == 0;
    let report = CodecReport {
        workers: code.workers(),
        k: code.k(),
        trials,
        seed: cfg.seed,
        max_rel_err: worst,
        straggler_max_rel_err: worst_straggler,
        timing_mismatches: mismatches,
        passed,
    };
    let p = write(&cfg.out, "codec_report.json", &to_json(&report))?;
    if !passed {
        return Err(CliError::internal(format!(
            "codec roundtrip failed: max rel err {worst:e}, with stragglers {worst_straggler:e}, {mismatches} timing mismatches"
        )));
    }
    println!("roundtrip max rel err < 1e-9 ({worst:e})");
    Ok(vec![p])
}

fn analyze(cfg: &RunConfig, base: &Distribution) -> CliResult<Vec<PathBuf>> {
    let ecfg = cfg.evolution();
    let t_star = base.quantile(cfg.rate)?;
    let median = base.quantile(0.5)?;
    let residual = martingale_residual(base, cfg.n, &ecfg)?;
    let fraction = polarization_fraction(base, cfg.n, t_star)?;
    let location = limit_location_test(base, cfg.n, cfg.paths, cfg.seed)?;
    let depths: Vec<usize> = (0..=cfg.n).collect();
    let l2 = l2_increment_series(base, &depths, cfg.paths, cfg.seed)?;
    let tail_depths: Vec<usize> = (1..=cfg.n).filter(|d| d % 2 == 0).collect();
    let tail = delta_norm_tail(base, &tail_depths, 0.5, 0.375, cfg.paths, cfg.seed)?;
    let minf = min_f_decay(base, cfg.n, median, cfg.paths, cfg.seed, EnvelopeParams::default())?;

    #[derive(Serialize)]
    struct Location {
        n: usize,
        paths: usize,
        ks: f64,
        critical: f64,
    }
    #[derive(Serialize)]
    struct MinF {
        n: usize,
        t: f64,
        p10: f64,
        p50: f64,
        p90: f64,
        log2_envelope: f64,
        stated_probability: f64,
        within_envelope: f64,
    }
    #[derive(Serialize)]
    struct Report<'a> {
        config: &'a RunConfig,
        martingale: crate::analysis::MartingaleReport,
        t_star: f64,
        fraction_high: f64,
        fraction_low: f64,
        limit_location: Location,
        l2_increments: &'a [crate::analysis::IncrementRow],
        delta_tail: &'a crate::analysis::TailReport,
        min_f: MinF,
    }
    let report = Report {
        config: cfg,
        martingale: residual,
        t_star,
        fraction_high: fraction.0,
        fraction_low: fraction.1,
        limit_location: Location { n: location.n, paths: location.paths, ks: location.ks, critical: location.critical },
        l2_increments: &l2,
        delta_tail: &tail,
        min_f: MinF {
            n: minf.n,
            t: minf.t,
            p10: minf.p10,
            p50: minf.p50,
            p90: minf.p90,
            log2_envelope: minf.log2_envelope,
            stated_probability: minf.stated_probability,
            within_envelope: minf.within_envelope,
        },
    };
    let mut l2_csv = csv_row(&["n", "mean", "se"]);
    for r in &l2 {
        l2_csv.push_str(&csv_row(&[r.n.to_string(), csv_f64(r.mean), csv_f64(r.se)]));
    }
    let mut tail_csv =
        csv_row(&["n", "threshold", "exceedance", "se", "mean_norm", "stated_bound", "markov_bound", "uniform_instance"]);
    for r in &tail.rows {
        tail_csv.push_str(&csv_row(&[
            r.n.to_string(),
            csv_f64(r.threshold),
            csv_f64(r.exceedance.value),
            csv_f64(r.exceedance.se),
            csv_f64(r.mean_norm),
            csv_f64(r.stated_bound),
            csv_f64(r.markov_bound),
            csv_f64(r.uniform_instance),
        ]));
    }
    let mut loc_csv = csv_row(&["path", "location"]);
    for (i, x) in location.locations.iter().enumerate() {
        loc_csv.push_str(&csv_row(&[i.to_string(), csv_f64(*x)]));
    }
    Ok(vec![
        write(&cfg.out, "analysis.json", &to_json(&report))?,
        write(&cfg.out, "l2_increments.csv", &l2_csv)?,
        write(&cfg.out, "delta_tail.csv", &tail_csv)?,
        write(&cfg.out, "locations.csv", &loc_csv)?,
    ])
}

fn joint(cfg: &RunConfig, base: &Distribution) -> CliResult<Vec<PathBuf>> {
    let path = match &cfg.path {
        Some(p) => BitPath::parse(p)?,
        None => BitPath::new(vec![1; cfg.n])?,
    };
    let mut grid = JointGrid::from_product(base, cfg.joint_points)?;
    let mut out = vec![write(&cfg.out, "joint_00.csv", &grid.to_csv())?];
    for (k, &bit) in path.bits().iter().enumerate() {
        grid = grid.step_with(bit)?;
        out.push(write(&cfg.out, &format!("joint_{:02}.csv", k + 1), &grid.to_csv())?);
    }
    Ok(out)
}

/// Run one subcommand with a resolved configuration.
pub fn dispatch(command: Command, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let base = parse_dist_spec(&cfg.dist)?;
    let mut written = match command {
        Command::Construct => construct(cfg, &base)?,
        Command::Evolve => evolve(cfg, &base)?,
        Command::Simulate => simulate(cfg, &base)?,
        Command::Codec => codec(cfg, &base)?,
        Command::Analyze => analyze(cfg, &base)?,
        Command::Joint => joint(cfg, &base)?,
    };
    written.push(write(&cfg.out, "config.json", &cfg.to_json())?);
    Ok(written)
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("POLARMIX_THREADS") {
        let k: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| CliError::validation(format!("invalid `POLARMIX_THREADS`: {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    Ok(())
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads()
        .and_then(|_| parse_config(&cli.flags))
        .and_then(|cfg| dispatch(cli.command, &cfg));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("polarmix {}: {e}", cli.command.as_str());
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(args: &[&str]) -> Flags {
        let mut v = vec!["polarmix", "construct"];
        v.extend_from_slice(args);
        Cli::try_parse_from(v).unwrap().flags
    }

    #[test]
    fn basic_config() {
        let c = parse_config(&flags(&["--dist", "uniform:0,1", "--n", "5", "--rate", "0.5"])).unwrap();
        assert_eq!(c.workers(), 32);
        let e = parse_config(&flags(&["--rate", "1.5"])).unwrap_err();
        assert_eq!(e.code, EXIT_VALIDATION);
        assert!(e.message.contains("rate"));
        let e = parse_config(&flags(&["--workers", "12"])).unwrap_err();
        assert!(e.message.contains("power of two"));
        let e = parse_config(&flags(&["--trials", "0"])).unwrap_err();
        assert!(e.message.contains("trials"));
    }

    #[test]
    fn config_echo_roundtrips() {
        let c = parse_config(&flags(&["--deadline", "0.6,0.7", "--rule", "laplace", "--lambda", "3"])).unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(RunConfig::from_json(&c.to_json().replace("\"seed\"", "\"sed\"")).is_err());
    }

    #[test]
    fn file_values_yield_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 4, "n": 3, "trials": 50}"#).unwrap();
        let c = parse_config(&flags(&["--config", p.to_str().unwrap(), "--seed", "9"])).unwrap();
        assert_eq!((c.seed, c.n, c.trials), (9, 3, 50));
        std::fs::write(&p, r#"{"seed": 4, "bogus": 1}"#).unwrap();
        let e = parse_config(&flags(&["--config", p.to_str().unwrap()])).unwrap_err();
        assert!(e.message.contains("bogus"));
    }

    #[test]
    fn dist_specs() {
        assert!(parse_dist_spec("uniform:0,1").is_ok());
        assert!(parse_dist_spec("exp:2").is_ok());
        assert!(parse_dist_spec("uniform:1").is_err());
        assert!(parse_dist_spec("gamma:1").is_err());
        assert_eq!(parse_dist_spec("file:/nonexistent/x.json").unwrap_err().code, EXIT_IO);
        assert_eq!(parse_samples("x\n1,2\n3\n").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_samples("1\nx\n").is_err());
    }
}
