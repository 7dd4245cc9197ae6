//! Fixed points and two-cycles of the split map on two-atom laws.
//!
//! For a law with mass `c` at `t0` and `1 − c` at `t1`, the CDF takes the
//! single interior value `c`, and the path `[1, 0]` maps it to
//! `2c² − c⁴`. Two-step fixed points solve `z⁴ − 2z² + z = 0`, which
//! factors as `z (z − 1)(z² + z − 1)`.

use super::scalar_map;
use crate::dist::RuntimeDistribution;
use crate::error::{Error, Result};

pub fn golden_conjugate() -> f64 {
    (5.0f64.sqrt() - 1.0) / 2.0
}

/// Real roots of `z⁴ − 2z² + z`, ascending.
pub fn cycle_quartic_roots() -> [f64; 4] {
    let r5 = 5.0f64.sqrt();
    [-(1.0 + r5) / 2.0, 0.0, (r5 - 1.0) / 2.0, 1.0]
}

/// The roots lying in `[0, 1]`, which are valid CDF values.
pub fn cycle_cdf_values() -> [f64; 3] {
    let r = cycle_quartic_roots();
    [r[1], r[2], r[3]]
}

pub fn quartic(z: f64) -> f64 {
    z.powi(4) - 2.0 * z * z + z
}

/// The two-atom law on `{t0, t1}` that returns to itself after a max split
/// followed by a min split, but not after a single split.
pub fn find_two_cycle(t0: f64, t1: f64) -> Result<RuntimeDistribution> {
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(Error::arg("t0", format!("need finite t0 < t1, got {t0}, {t1}")));
    }
    let c = golden_conjugate();
    // Either root assignment could be meant; keep the one that verifies.
    let candidate = [c, 1.0 - c]
        .into_iter()
        .find(|&v| (scalar_map(v, &[1, 0]) - v).abs() < 1e-12)
        .expect("golden root is a two-cycle");
    RuntimeDistribution::from_atoms(&[(t0, candidate), (t1, 1.0 - candidate)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;
    use crate::polarization::{path_evolve, split_cdf, BitPath, EvolutionConfig};

    #[test]
    fn roots_solve_the_quartic() {
        for r in cycle_quartic_roots() {
            assert!(quartic(r).abs() < 1e-15);
        }
        assert_eq!(cycle_cdf_values()[1], golden_conjugate());
    }

    #[test]
    fn cycle_returns_after_two_steps_only() {
        let d = find_two_cycle(1.0, 2.0).unwrap();
        assert!((d.cdf(1.0) - golden_conjugate()).abs() < 1e-15);
        let dist: Distribution = d.clone().into();
        let cfg = EvolutionConfig::default();
        let back = path_evolve(&dist, &BitPath::parse("10").unwrap(), &cfg);
        for t in [0.5, 1.0, 1.5, 2.0, 2.5] {
            assert!((back.eval_cdf(t).unwrap() - d.cdf(t)).abs() < 1e-12);
        }
        let (mx, _) = split_cdf(&dist, &cfg);
        assert!((mx.eval_cdf(1.0).unwrap() - d.cdf(1.0)).abs() > 0.1);
        assert!(find_two_cycle(2.0, 1.0).is_err());
    }
}
