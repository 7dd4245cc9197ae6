//! Numerical checks of the convergence theory: martingale conservation,
//! tail bounds for the increments, limiting point-mass locations and the
//! decay of `min(F_n, 1 − F_n)`.
//!
//! Random paths draw their bits from the ChaCha stream `(seed, path)`, so
//! every estimator is reproducible and independent of thread count.

use crate::dist::{integrate_power, Cdf, Distribution, EmpiricalDistribution, GridDistribution};
use crate::error::{Error, Result};
use crate::freezing::leaf_states;
use crate::polarization::{check_depth, split_cdf, EvolutionConfig, PathCdf, RepresentationMode, ScalarState};
use crate::simulator::{ks_critical, trial_rng, Estimate};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const SWEEP_POINTS: usize = 10_000;

fn check_paths(paths: usize) -> Result<()> {
    if paths == 0 {
        return Err(Error::arg("paths", "need at least one path"));
    }
    Ok(())
}

/// `depth` uniformly random bits from stream `(seed, path)`.
pub fn random_bits(depth: usize, seed: u64, path: u64) -> Vec<u8> {
    let mut rng = trial_rng(seed, path);
    (0..depth).map(|_| rng.gen_range(0..2u8)).collect()
}

fn sweep(lo: f64, hi: f64) -> Vec<f64> {
    GridDistribution::abscissae(lo, hi, SWEEP_POINTS)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub depth: usize,
    pub mode: &'static str,
    /// Largest residual over all internal nodes.
    pub sup_residual: f64,
    /// Bernstein-coefficient bound over exactly represented nodes.
    pub exact_bound: f64,
    /// Sweep and grid-node residual over nodes split on a grid, measured
    /// against the grid the split used.
    pub grid_sweep: f64,
    /// Sweep distance between the stored leaves and the exact path CDFs.
    pub projection_drift: f64,
}

fn exact_residual(parent: &crate::dist::RuntimeDistribution, mx: &Distribution, mn: &Distribution) -> f64 {
    let (Some(a), Some(b)) = (mx.as_exact(), mn.as_exact()) else {
        unreachable!("exact parent below the cap has exact children")
    };
    if parent.segments().is_empty() {
        return 0.0;
    }
    parent
        .segments()
        .iter()
        .zip(a.segments().iter().zip(b.segments()))
        .map(|(p, (x, y))| {
            let (lo, hi) = x.add(y).scale(0.5).sub(p).coeff_range();
            lo.abs().max(hi.abs())
        })
        .fold(0.0, f64::max)
}

fn grid_residual(parent: &GridDistribution, mx: &Distribution, mn: &Distribution) -> f64 {
    let (lo, hi) = parent.support();
    parent
        .grid()
        .into_iter()
        .chain(sweep(lo, hi))
        .map(|t| ((mx.cdf(t) + mn.cdf(t)) / 2.0 - parent.cdf(t)).abs())
        .fold(0.0, f64::max)
}

/// `sup |(F_max + F_min)/2 − F|` over every internal node of the depth-`n`
/// tree.
pub fn martingale_residual(base: &Distribution, n: usize, cfg: &EvolutionConfig) -> Result<MartingaleReport> {
    check_depth(n, cfg)?;
    let mut level = vec![base.clone()];
    let (mut exact_bound, mut grid_sweep) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let results: Vec<(Distribution, Distribution, f64, bool)> = level
            .par_iter()
            .map(|f| {
                let (mx, mn) = split_cdf(f, cfg);
                let exact_children = mx.is_exact();
                let r = match (f, exact_children) {
                    (Distribution::Exact(p), true) => exact_residual(p, &mx, &mn),
                    (Distribution::Grid(g), _) => grid_residual(g, &mx, &mn),
                    (_, false) => grid_residual(&f.to_runtime().to_grid(cfg.grid_points), &mx, &mn),
                    (Distribution::Empirical(e), true) => exact_residual(&e.to_runtime(), &mx, &mn),
                };
                (mx, mn, r, exact_children)
            })
            .collect();
        let mut next = Vec::with_capacity(2 * level.len());
        for (mx, mn, r, exact) in results {
            if exact {
                exact_bound = exact_bound.max(r);
            } else {
                grid_sweep = grid_sweep.max(r);
            }
            next.push(mn);
            next.push(mx);
        }
        level = next;
    }
    let (lo, hi) = base.support();
    let ts = sweep(lo, hi);
    let projection_drift = level
        .par_iter()
        .enumerate()
        .map(|(i, leaf)| {
            let bits = crate::polarization::BitPath::from_index(i, n).expect("index below 2^n");
            let exact = PathCdf::new(base, &bits);
            let vals = leaf.cdf_many(&ts);
            ts.iter().zip(vals).map(|(&t, v)| (v - exact.cdf(t)).abs()).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let mode = if level.iter().all(Distribution::is_exact) {
        RepresentationMode::Exact
    } else {
        RepresentationMode::Grid
    };
    Ok(MartingaleReport {
        depth: n,
        mode: mode.as_str(),
        sup_residual: exact_bound.max(grid_sweep),
        exact_bound,
        grid_sweep,
        projection_drift,
    })
}

/// `∫ (F_n(1 − F_n))^β dt` along `bits`, which is `‖F_{n+1} − F_n‖_{L_β}^β`
/// for either next bit.
pub fn delta_norm(base: &Distribution, bits: &[u8], beta: f64) -> f64 {
    let path = PathCdf::from_bits(base, bits);
    let knots = crate::dist::merged_knots(&[base as &dyn Cdf]);
    if knots.len() < 2 {
        return 0.0;
    }
    integrate_power(
        |t| {
            let st = path.state(t);
            st.z * st.s
        },
        &knots,
        beta,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub n: usize,
    pub threshold: f64,
    pub exceedance: Estimate,
    pub mean_norm: f64,
    /// `(3/(4ρ))^{βn} I₀`, the nominal bound.
    pub stated_bound: f64,
    /// `(3/4)^{βn} I₀ / ρⁿ`, Markov's inequality applied directly.
    pub markov_bound: f64,
    /// `(1/√2)ⁿ π/8`, the uniform-base instance at `(β, ρ) = (1/2, 3/8)`.
    pub uniform_instance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub beta: f64,
    pub rho: f64,
    pub paths: usize,
    pub seed: u64,
    /// `‖Δ₀‖_{L_β}^β = ∫ (F(1 − F))^β`.
    pub initial_norm: f64,
    pub rows: Vec<TailRow>,
}

/// Exceedance of `‖Δ_n‖_{L_β}^β > ρⁿ` over random paths, at each depth.
pub fn delta_norm_tail(
    base: &Distribution,
    depths: &[usize],
    beta: f64,
    rho: f64,
    paths: usize,
    seed: u64,
) -> Result<TailReport> {
    check_paths(paths)?;
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::arg("beta", format!("beta must lie in (0, 1/2], got {beta}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::arg("rho", format!("rho must lie in (0, 1), got {rho}")));
    }
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let initial_norm = delta_norm(base, &[], beta);
    let norms: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let bits = random_bits(max_depth, seed, p);
            depths.iter().map(|&n| delta_norm(base, &bits[..n], beta)).collect()
        })
        .collect();
    let rows = depths
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let threshold = rho.powi(n as i32);
            let hits = norms.iter().filter(|v| v[j] > threshold).count();
            let nf = n as f64;
            TailRow {
                n,
                threshold,
                exceedance: Estimate::proportion(hits, paths),
                mean_norm: norms.iter().map(|v| v[j]).sum::<f64>() / paths as f64,
                stated_bound: (3.0 / (4.0 * rho)).powf(beta * nf) * initial_norm,
                markov_bound: 0.75f64.powf(beta * nf) * initial_norm / threshold,
                uniform_instance: std::f64::consts::FRAC_1_SQRT_2.powi(n as i32) * std::f64::consts::PI / 8.0,
            }
        })
        .collect();
    Ok(TailReport { beta, rho, paths, seed, initial_norm, rows })
}

/// Fractions of leaves with `F_{n,i}(t*) > 1/2` and `≤ 1/2`.
pub fn polarization_fraction(base: &Distribution, n: usize, t_star: f64) -> Result<(f64, f64)> {
    if n > crate::polarization::MAX_DEPTH + 4 {
        return Err(Error::arg("n", format!("depth {n} too large")));
    }
    let states = leaf_states(ScalarState::new(base.cdf(t_star)), n);
    let high = states.iter().filter(|s| s.z > 0.5).count() as f64 / states.len() as f64;
    Ok((high, 1.0 - high))
}

// Level u* in [0, 1] where the path map crosses 1/2.
fn half_crossing_level(bits: &[u8]) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let st = ScalarState::from_pair(mid, 1.0 - mid).evolve(bits);
        if st.z >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocationReport {
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    pub ks: f64,
    /// Asymptotic Kolmogorov critical value at the 1% level.
    pub critical: f64,
    pub locations: Vec<f64>,
}

/// Where each random path's leaf CDF crosses 1/2, compared with the base
/// law by the Kolmogorov–Smirnov distance.
pub fn limit_location_test(base: &Distribution, n: usize, paths: usize, seed: u64) -> Result<LocationReport> {
    check_paths(paths)?;
    let locations: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let u = half_crossing_level(&random_bits(n, seed, p));
            base.quantile(u.clamp(0.0, 1.0)).expect("level in [0, 1]")
        })
        .collect();
    let emp = EmpiricalDistribution::from_samples(&locations)?;
    let ks = emp.ks_statistic(|t| base.cdf(t), |t| base.cdf_left(t));
    Ok(LocationReport { n, paths, seed, ks, critical: ks_critical(paths, 0.01), locations })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementRow {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

/// Mean of `‖F_{n+1} − F_n‖²_{L₂} = ∫ (F_n(1 − F_n))²` over random paths.
pub fn l2_increment_series(base: &Distribution, depths: &[usize], paths: usize, seed: u64) -> Result<Vec<IncrementRow>> {
    check_paths(paths)?;
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let norms: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let bits = random_bits(max_depth, seed, p);
            depths.iter().map(|&n| delta_norm(base, &bits[..n], 2.0)).collect()
        })
        .collect();
    Ok(depths
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let xs: Vec<f64> = norms.iter().map(|v| v[j]).collect();
            let mean = xs.iter().sum::<f64>() / paths as f64;
            let var = if paths > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (paths - 1) as f64
            } else {
                0.0
            };
            IncrementRow { n, mean, se: (var / paths as f64).sqrt() }
        })
        .collect())
}

/// Parameters of the non-asymptotic envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub beta: f64,
    pub eta: f64,
    pub rho: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self { beta: 1.0, eta: 0.1, rho: 0.8 }
    }
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinFReport {
    pub n: usize,
    pub t: f64,
    pub paths: usize,
    pub seed: u64,
    pub params: EnvelopeParams,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    /// `log₂` of the envelope `2^{−2^{(n − β log₂ n)(1/2 − η)}}`.
    pub log2_envelope: f64,
    /// Guaranteed probability that the envelope holds; vacuous (≤ 0) at
    /// small `n`.
    pub stated_probability: f64,
    /// Fraction of paths with `min(F_n, 1 − F_n)` below the envelope.
    pub within_envelope: f64,
    pub values: Vec<f64>,
}

/// `min(F_n(t), 1 − F_n(t))` over random paths at a fixed `t`.
pub fn min_f_decay(
    base: &Distribution,
    n: usize,
    t: f64,
    paths: usize,
    seed: u64,
    params: EnvelopeParams,
) -> Result<MinFReport> {
    check_paths(paths)?;
    if n > crate::polarization::MAX_DEPTH {
        return Err(Error::arg("n", format!("depth {n} exceeds {}", crate::polarization::MAX_DEPTH)));
    }
    let root = ScalarState::new(base.cdf(t));
    let values: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|p| root.evolve(&random_bits(n, seed, p)).gap())
        .collect();
    let mut s = values.clone();
    s.sort_by(f64::total_cmp);
    let q = |u: f64| s[((u * paths as f64).ceil() as usize).clamp(1, paths) - 1];
    let nf = n as f64;
    let log_n = if n > 0 { nf.log2() } else { 0.0 };
    let EnvelopeParams { beta, eta, rho } = params;
    let log2_envelope = -(2f64.powf((nf - beta * log_n) * (0.5 - eta)));
    let stated_probability = 1.0
        - (if n > 0 { nf.powf(-beta / 2.0 * (1.0 / rho).log2()) } else { 1.0 }) / (rho.sqrt() * (1.0 - rho.sqrt()))
        - 2f64.powf(-(nf - beta * log_n) * (1.0 - binary_entropy(0.5 - eta)));
    let within = values.iter().filter(|&&v| v == 0.0 || v.log2() <= log2_envelope).count() as f64 / paths as f64;
    Ok(MinFReport {
        n,
        t,
        paths,
        seed,
        params,
        p10: q(0.1),
        p50: q(0.5),
        p90: q(0.9),
        log2_envelope,
        stated_probability,
        within_envelope: within,
        values,
    })
}

/// One random path with leaf CDF snapshots on an evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub bits: Vec<u8>,
    pub ts: Vec<f64>,
    /// `(depth, F_depth(ts))`.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    /// `‖Δ_n‖_{L_{1/2}}^{1/2}` for `n = 0..=depth`.
    pub delta_half: Vec<f64>,
    /// `‖Δ_n‖²_{L₂}` for `n = 0..=depth`.
    pub delta_l2: Vec<f64>,
}

pub fn sample_path(
    base: &Distribution,
    depth: usize,
    snapshot_depths: &[usize],
    points: usize,
    seed: u64,
    path: u64,
) -> Result<PathSample> {
    if snapshot_depths.iter().any(|&d| d > depth) {
        return Err(Error::arg("depths", "snapshot depth beyond the path length"));
    }
    let bits = random_bits(depth, seed, path);
    let (lo, hi) = base.support();
    let ts = GridDistribution::abscissae(lo, if hi > lo { hi } else { lo + 1.0 }, points.max(2));
    let snapshots = snapshot_depths
        .iter()
        .map(|&d| {
            let p = PathCdf::from_bits(base, &bits[..d]);
            (d, ts.iter().map(|&t| p.cdf(t)).collect())
        })
        .collect();
    let delta_half = (0..=depth).map(|n| delta_norm(base, &bits[..n], 0.5)).collect();
    let delta_l2 = (0..=depth).map(|n| delta_norm(base, &bits[..n], 2.0)).collect();
    Ok(PathSample { bits, ts, snapshots, delta_half, delta_l2 })
}
