//! Monte Carlo properties checked against independent closed forms.

use polarmix::analysis::{delta_norm_tail, l2_increment_series, limit_location_test, min_f_decay, EnvelopeParams};
use polarmix::dist::{Cdf, Distribution};
use polarmix::freezing::quantile_freeze;
use polarmix::polarization::joint::JointGrid;
use polarmix::polarization::{polarize, EvolutionConfig};
use polarmix::simulator::{random_virtual_runtimes, run_comparison, sample_runtimes, trial_rng, Scheme};
use rand::Rng;

fn unif() -> Distribution {
    Distribution::uniform(0.0, 1.0).unwrap()
}

fn binom(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Largest gap between an empirical CDF and `cdf`, both one-sided limits.
fn sup_gap(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j < s.len() && s[j] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        worst = worst.max((j as f64 / n - f).abs()).max((i as f64 / n - f).abs());
        i = j;
    }
    worst
}

#[test]
fn product_of_pair_is_conserved() {
    let base = Distribution::exponential(2.0).unwrap();
    let trials = 100_000u64;
    let prods: Vec<f64> = (0..trials)
        .map(|k| {
            let mut rng = trial_rng(31, k);
            let (a, b) = (base.sample(&mut rng), base.sample(&mut rng));
            a.max(b) * a.min(b)
        })
        .collect();
    let mean = prods.iter().sum::<f64>() / trials as f64;
    let var = prods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    let m = base.mean().unwrap();
    assert!((mean - m * m).abs() < 3.0 * se, "{mean} vs {}", m * m);
}

#[test]
fn closed_forms_match_simulation() {
    let base = unif();
    let frozen = quantile_freeze(&base, 4, 0.5).unwrap();
    let report = run_comparison(&base, "uniform:0,1", &frozen, 100_000, 17, None).unwrap();
    // i.i.d. uniform order statistics: P[U_(K) <= t] = sum_{j >= K} C(N, j) t^j (1 - t)^{N - j}.
    let mds = |t: f64| (8..=16u64).map(|j| binom(16, j) * t.powi(j as i32) * (1.0 - t).powi(16 - j as i32)).sum();
    let uncoded = |t: f64| t.powi(16);
    let repetition = |t: f64| (1.0 - (1.0 - t).powi(2)).powi(8);
    let oracles: [(Scheme, &dyn Fn(f64) -> f64); 3] =
        [(Scheme::Mds, &mds), (Scheme::Uncoded, &uncoded), (Scheme::Repetition, &repetition)];
    for (scheme, f) in oracles {
        let gap = sup_gap(&report.times(scheme).unwrap(), f);
        assert!(gap < 0.01, "{}: sup gap {gap}", scheme.as_str());
    }
}

#[test]
fn random_virtual_worker_has_base_law() {
    for base in [unif(), Distribution::exponential(1.5).unwrap()] {
        let v = random_virtual_runtimes(&base, 6, 100_000, 3).unwrap();
        let gap = sup_gap(&v, |t| base.cdf(t));
        assert!(gap < 0.02, "KS {gap}");
    }
}

#[test]
fn comparison_is_independent_of_thread_count() {
    let base = Distribution::exponential(1.0).unwrap();
    let frozen = quantile_freeze(&base, 5, 0.5).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_comparison(&base, "exp:1", &frozen, 2000, 8, Some(2.0)).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.to_csv(), four.to_csv());
    assert_eq!(one.summary_json(), four.summary_json());
    assert_eq!(one.records.first().unwrap().runtimes, sample_runtimes(&base, 32, 8, 0));
}

#[test]
fn analysis_estimators_reproduce() {
    let base = unif();
    let a = limit_location_test(&base, 8, 300, 5).unwrap();
    let b = limit_location_test(&base, 8, 300, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        l2_increment_series(&base, &[0, 2, 4], 200, 5).unwrap(),
        l2_increment_series(&base, &[0, 2, 4], 200, 5).unwrap()
    );
    assert_eq!(
        delta_norm_tail(&base, &[1, 3], 0.5, 0.375, 200, 5).unwrap(),
        delta_norm_tail(&base, &[1, 3], 0.5, 0.375, 200, 5).unwrap()
    );
    let p = EnvelopeParams::default();
    assert_eq!(min_f_decay(&base, 10, 0.4, 200, 5, p).unwrap(), min_f_decay(&base, 10, 0.4, 200, 5, p).unwrap());
    assert_ne!(a.locations, limit_location_test(&base, 8, 300, 6).unwrap().locations);
}

#[test]
fn high_fraction_tends_to_rate() {
    let base = unif();
    for n in 4..=9 {
        let (high, _) = polarmix::analysis::polarization_fraction(&base, n, 0.3).unwrap();
        let tol = 2f64.powf(-(n as f64) / 2.0) + 0.05;
        assert!((high - 0.3).abs() <= tol, "n = {n}: {high}");
    }
}

#[test]
fn freezing_scores_polarize() {
    let base = unif();
    let mut prev = (0.0, 1.0);
    for n in 2..=9 {
        let f = quantile_freeze(&base, n, 0.5).unwrap();
        let s = f.scores();
        let mean = |idx: &[usize]| idx.iter().map(|&i| s[i]).sum::<f64>() / idx.len() as f64;
        let (data, frozen) = (mean(f.data()), mean(f.frozen()));
        let min_data = f.data().iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
        let max_frozen = f.frozen().iter().map(|&i| s[i]).fold(f64::NEG_INFINITY, f64::max);
        assert!(min_data >= max_frozen);
        assert!(data > prev.0 && frozen < prev.1, "n = {n}: {data}, {frozen}");
        prev = (data, frozen);
        // Leaf scores average to F(t*) = R.
        assert!(((data + frozen) / 2.0 - 0.5).abs() < 1e-12);
    }
    assert!(prev.0 > 0.9 && prev.1 < 0.1);
}

#[test]
fn joint_density_stays_ordered_with_unit_mass() {
    let base = unif();
    let mut g = JointGrid::from_product(&base, 64).unwrap();
    let mut rng = trial_rng(2, 0);
    for _ in 0..4 {
        g = g.step_with(rng.gen_range(0..=1)).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-3);
        for i in 0..g.points() {
            for j in 0..i {
                assert_eq!(g.at(i, j), 0.0, "({i}, {j})");
            }
        }
    }
}

#[test]
fn family_members_average_to_base() {
    let base = Distribution::exponential(1.0).unwrap();
    let fam = polarize(&base, 5, &EvolutionConfig::default()).unwrap();
    assert_eq!(fam.mode().as_str(), "exact");
    let (a, b) = base.support();
    for k in 0..=200 {
        let t = a + (b - a) * k as f64 / 200.0;
        let avg = fam.members().iter().map(|m| m.cdf(t)).sum::<f64>() / fam.len() as f64;
        assert!((avg - base.cdf(t)).abs() < 1e-10);
    }
}
