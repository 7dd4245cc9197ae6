//! Scheme runtimes in closed form and by seeded Monte Carlo.
//!
//! Every trial draws one vector of `N` physical runtimes from its own
//! ChaCha stream `(seed, trial)` and feeds it to all schemes, so results do
//! not depend on thread count or scheduling.

use crate::codec::{decode_time, log2_exact};
use crate::dist::special::logsumexp;
use crate::dist::{Cdf, Distribution};
use crate::error::{Error, Result};
use crate::freezing::FrozenSet;
use crate::io::{csv_f64, csv_row, to_json};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_binomial;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Uncoded,
    Repetition,
    Mds,
    Polar,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Uncoded, Scheme::Repetition, Scheme::Mds, Scheme::Polar];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Uncoded => "uncoded",
            Scheme::Repetition => "repetition",
            Scheme::Mds => "mds",
            Scheme::Polar => "polar",
        }
    }
}

/// A Monte Carlo estimate with its normal-approximation standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn proportion(hits: usize, trials: usize) -> Self {
        let p = hits as f64 / trials as f64;
        Self { value: p, se: (p * (1.0 - p) / trials as f64).sqrt() }
    }
}

fn check_k(workers: usize, k: usize) -> Result<()> {
    if k == 0 || k > workers {
        return Err(Error::arg("k", format!("need 1 ≤ K ≤ N = {workers}, got {k}")));
    }
    Ok(())
}

/// `P[T_scheme ≤ t]` given `z = F(t)`.
pub fn scheme_cdf_at(scheme: Scheme, z: f64, workers: usize, k: usize) -> Result<f64> {
    check_k(workers, k)?;
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("CDF value {z} outside [0, 1]")));
    }
    let s = 1.0 - z;
    Ok(match scheme {
        Scheme::Uncoded => z.powi(workers as i32),
        Scheme::Repetition => {
            if !workers.is_multiple_of(k) {
                return Err(Error::arg("k", format!("repetition needs K | N, got K = {k}, N = {workers}")));
            }
            (1.0 - s.powi((workers / k) as i32)).powi(k as i32)
        }
        Scheme::Mds => {
            if z == 0.0 {
                return Ok(0.0);
            }
            if s == 0.0 {
                return Ok(1.0);
            }
            let (lz, ls) = (z.ln(), s.ln());
            let n = workers as u64;
            let terms: Vec<f64> = (k as u64..=n)
                .map(|j| ln_binomial(n, j) + j as f64 * lz + (n - j) as f64 * ls)
                .collect();
            logsumexp(&terms).exp().min(1.0)
        }
        Scheme::Polar => {
            return Err(Error::arg("scheme", "polar has no closed form; simulate it"));
        }
    })
}

pub fn scheme_cdf(scheme: Scheme, base: &Distribution, workers: usize, k: usize, t: f64) -> Result<f64> {
    scheme_cdf_at(scheme, base.cdf(t), workers, k)
}

/// Normal approximation `(F⁻¹(R), R(1 − R) / (N p(F⁻¹(R))²))` of the MDS
/// runtime.
pub fn mds_normal_approx(base: &Distribution, workers: usize, rate: f64) -> Result<(f64, f64)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::arg("rate", format!("rate must lie in (0, 1), got {rate}")));
    }
    let q = base.quantile(rate)?;
    let p = base.eval_pdf(q)?;
    if !(p > 0.0) {
        return Err(Error::Domain(format!("density vanishes at the quantile {q}")));
    }
    Ok((q, rate * (1.0 - rate) / (workers as f64 * p * p)))
}

/// `max(0, β − 1/(N R))`.
pub fn info_lower_bound(workers: usize, rate: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::arg("beta", format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(rate > 0.0 && rate <= 1.0) || workers == 0 {
        return Err(Error::arg("rate", format!("rate must lie in (0, 1], got {rate}")));
    }
    Ok((beta - 1.0 / (workers as f64 * rate)).max(0.0))
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn sample_runtimes(base: &Distribution, workers: usize, seed: u64, trial: u64) -> Vec<f64> {
    let mut rng = trial_rng(seed, trial);
    (0..workers).map(|_| base.sample(&mut rng)).collect()
}

fn sorted(t: &[f64]) -> Vec<f64> {
    let mut v = t.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn uncoded_time(t: &[f64]) -> f64 {
    t.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// `K`-th smallest runtime.
pub fn mds_time(t: &[f64], k: usize) -> f64 {
    sorted(t)[k - 1]
}

/// Each of `K` tasks replicated on `N / K` contiguous workers: the slowest
/// block's fastest copy.
pub fn repetition_time(t: &[f64], k: usize) -> Option<f64> {
    if k == 0 || !t.len().is_multiple_of(k) {
        return None;
    }
    let r = t.len() / k;
    Some(
        t.chunks(r)
            .map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub runtimes: Vec<f64>,
    pub uncoded: f64,
    pub repetition: Option<f64>,
    pub mds: f64,
    pub polar: f64,
}

impl TrialRecord {
    pub fn time(&self, scheme: Scheme) -> Option<f64> {
        match scheme {
            Scheme::Uncoded => Some(self.uncoded),
            Scheme::Repetition => self.repetition,
            Scheme::Mds => Some(self.mds),
            Scheme::Polar => Some(self.polar),
        }
    }
}

pub fn run_trial(base: &Distribution, frozen: &FrozenSet, seed: u64, trial: u64) -> TrialRecord {
    let k = frozen.k();
    let runtimes = sample_runtimes(base, frozen.workers(), seed, trial);
    TrialRecord {
        trial,
        uncoded: uncoded_time(&runtimes),
        repetition: repetition_time(&runtimes, k),
        mds: mds_time(&runtimes, k),
        polar: decode_time(&runtimes, frozen).expect("runtime vector matches the frozen set"),
        runtimes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    #[serde(rename = "fail@deadline")]
    pub fail_at_deadline: Option<f64>,
    pub fail_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonConfig {
    pub dist: String,
    pub n: usize,
    pub workers: usize,
    pub k: usize,
    pub rate: f64,
    pub rule: String,
    pub trials: usize,
    pub seed: u64,
    pub deadline: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub config: ComparisonConfig,
    pub records: Vec<TrialRecord>,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    config: &'a ComparisonConfig,
    seed: u64,
    summary: BTreeMap<&'static str, SchemeSummary>,
}

/// Smallest sample `x` with at least `⌈u n⌉` samples `≤ x`.
fn order_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let i = ((u * n as f64).ceil() as usize).clamp(1, n);
    sorted[i - 1]
}

impl ComparisonReport {
    pub fn times(&self, scheme: Scheme) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.time(scheme)).collect()
    }

    pub fn summary(&self) -> BTreeMap<&'static str, SchemeSummary> {
        let mut out = BTreeMap::new();
        for scheme in Scheme::ALL {
            let Some(times) = self.times(scheme) else { continue };
            let s = sorted(&times);
            let n = s.len();
            let fail = self.config.deadline.map(|d| Estimate::proportion(times.iter().filter(|&&t| t > d).count(), n));
            out.insert(
                scheme.as_str(),
                SchemeSummary {
                    mean: times.iter().sum::<f64>() / n as f64,
                    p50: order_quantile(&s, 0.5),
                    p95: order_quantile(&s, 0.95),
                    fail_at_deadline: fail.map(|e| e.value),
                    fail_se: fail.map(|e| e.se),
                },
            );
        }
        out
    }

    /// Long format: `trial,scheme,decode_time`.
    pub fn to_csv(&self) -> String {
        let mut out = csv_row(&["trial", "scheme", "decode_time"]);
        for r in &self.records {
            for scheme in Scheme::ALL {
                if let Some(t) = r.time(scheme) {
                    out.push_str(&csv_row(&[r.trial.to_string(), scheme.as_str().to_string(), csv_f64(t)]));
                }
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        to_json(&SummaryDoc { config: &self.config, seed: self.config.seed, summary: self.summary() })
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::arg("trials", "need at least one trial"));
    }
    Ok(())
}

pub fn run_comparison(
    base: &Distribution,
    dist_label: &str,
    frozen: &FrozenSet,
    trials: usize,
    seed: u64,
    deadline: Option<f64>,
) -> Result<ComparisonReport> {
    check_trials(trials)?;
    let records: Vec<TrialRecord> = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(base, frozen, seed, i))
        .collect();
    Ok(ComparisonReport {
        config: ComparisonConfig {
            dist: dist_label.to_string(),
            n: frozen.depth(),
            workers: frozen.workers(),
            k: frozen.k(),
            rate: frozen.rate(),
            rule: frozen.rule().as_str().to_string(),
            trials,
            seed,
            deadline,
        },
        records,
    })
}

/// Polar decode times only, one per trial.
pub fn polar_times(base: &Distribution, frozen: &FrozenSet, trials: usize, seed: u64) -> Result<Vec<f64>> {
    check_trials(trials)?;
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let t = sample_runtimes(base, frozen.workers(), seed, i);
            decode_time(&t, frozen).expect("runtime vector matches the frozen set")
        })
        .collect())
}

/// `K`-th order statistics of `N` runtimes, one per trial.
pub fn mds_times(base: &Distribution, workers: usize, k: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    check_trials(trials)?;
    check_k(workers, k)?;
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|i| mds_time(&sample_runtimes(base, workers, seed, i), k))
        .collect())
}

/// Fraction of trials whose polar decode time exceeds `deadline`, using the
/// quantile-rule frozen set.
pub fn empirical_failure_prob(
    base: &Distribution,
    n: usize,
    rate: f64,
    deadline: f64,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    let frozen = crate::freezing::quantile_freeze(base, n, rate)?;
    failure_estimate(base, &frozen, deadline, trials, seed)
}

pub fn failure_estimate(
    base: &Distribution,
    frozen: &FrozenSet,
    deadline: f64,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    let times = polar_times(base, frozen, trials, seed)?;
    Ok(Estimate::proportion(times.iter().filter(|&&t| t > deadline).count(), trials))
}

/// Runtime of one uniformly chosen virtual worker per trial.
pub fn random_virtual_runtimes(base: &Distribution, n: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    use rand::Rng;
    check_trials(trials)?;
    let workers = 1usize << n;
    log2_exact(workers)?;
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let t: Vec<f64> = (0..workers).map(|_| base.sample(&mut rng)).collect();
            let v = crate::codec::virtual_runtimes(&t).expect("power of two");
            v[rng.gen_range(0..workers)]
        })
        .collect())
}

/// Sup distance between an empirical sample and a CDF given by `cdf`.
pub fn sup_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let mut j = i;
        while j < s.len() && s[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    d
}

/// One-sided Kolmogorov critical value at level `alpha` for `n` samples.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Sup distance between a scheme's closed form and its simulated times.
pub fn closed_form_gap(base: &Distribution, scheme: Scheme, workers: usize, k: usize, times: &[f64]) -> Result<f64> {
    scheme_cdf_at(scheme, 0.5, workers, k)?;
    Ok(sup_distance(times, |t| scheme_cdf_at(scheme, base.cdf(t), workers, k).expect("validated above")))
}
