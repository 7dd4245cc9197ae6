//! Splits of finitely supported laws and of their (min, max) joint masses.

use crate::dist::{Cdf, RuntimeDistribution};
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePmf {
    locations: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(locations: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if locations.is_empty() || locations.len() != masses.len() {
            return Err(Error::arg("pmf", "need equally many locations and masses, at least one"));
        }
        if locations.iter().any(|x| !x.is_finite()) || locations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("pmf", "locations must be finite and strictly increasing"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::arg("pmf", "masses must be finite and non-negative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::arg("pmf", format!("masses sum to {total}, not 1")));
        }
        Ok(Self { locations, masses })
    }

    /// Atoms at the right ends of `k` equal cells of the support carrying
    /// the CDF increments, so the pmf CDF equals `F` at every location.
    pub fn discretize(f: &dyn Cdf, k: usize) -> Result<Self> {
        let (a, b) = f.support();
        if k == 0 || !(b > a) {
            return Err(Error::arg("pmf", "need k ≥ 1 and a non-degenerate support"));
        }
        let h = (b - a) / k as f64;
        let locations: Vec<f64> = (1..=k).map(|j| if j == k { b } else { a + j as f64 * h }).collect();
        let mut prev = 0.0;
        let masses = locations
            .iter()
            .map(|&x| {
                let v = f.cdf(x);
                let m = (v - prev).max(0.0);
                prev = v;
                m
            })
            .collect();
        Self::new(locations, masses)
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn cdf_values(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect()
    }

    fn survival_values(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .masses
            .iter()
            .rev()
            .map(|m| {
                let s = acc;
                acc += m;
                s
            })
            .collect();
        out.reverse();
        out
    }

    /// `(max, min)` children with CDF values `F_i²` and `2F_i − F_i²`.
    pub fn split(&self) -> (DiscretePmf, DiscretePmf) {
        let f = self.cdf_values();
        let s = self.survival_values();
        let mut mx = Vec::with_capacity(self.masses.len());
        let mut mn = Vec::with_capacity(self.masses.len());
        for (i, &m) in self.masses.iter().enumerate() {
            let f_prev = if i == 0 { 0.0 } else { f[i - 1] };
            let s_prev = if i == 0 { 1.0 } else { s[i - 1] };
            // F_i² − F_{i−1}² and (1 − F_{i−1})² − (1 − F_i)²
            mx.push(m * (m + 2.0 * f_prev));
            mn.push(m * (s_prev + s[i]));
        }
        (
            Self { locations: self.locations.clone(), masses: mx },
            Self { locations: self.locations.clone(), masses: mn },
        )
    }

    pub fn to_distribution(&self) -> Result<RuntimeDistribution> {
        let atoms: Vec<(f64, f64)> = self
            .locations
            .iter()
            .zip(&self.masses)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&x, &m)| (x, m))
            .collect();
        RuntimeDistribution::from_atoms(&atoms)
    }
}

/// Lower-triangular joint mass of `(max, min)` for an i.i.d. pair with
/// marginal `m`: `P[i][j] = 2 m_i m_j` for `i > j`, `m_i²` on the diagonal.
/// Row `i` indexes the max, column `j` the min.
pub fn pair_joint(m: &[f64]) -> Vec<Vec<f64>> {
    let k = m.len();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| match i.cmp(&j) {
                    std::cmp::Ordering::Greater => 2.0 * m[i] * m[j],
                    std::cmp::Ordering::Equal => m[i] * m[i],
                    std::cmp::Ordering::Less => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Distribution of the max: row sums.
pub fn max_marginal(p: &[Vec<f64>]) -> Vec<f64> {
    p.iter().map(|row| row.iter().sum()).collect()
}

/// Distribution of the min: column sums.
pub fn min_marginal(p: &[Vec<f64>]) -> Vec<f64> {
    let k = p.len();
    (0..k).map(|j| p.iter().map(|row| row[j]).sum()).collect()
}

/// One joint step: take the bit-selected marginal of `P` (rows for bit 1,
/// the max; columns for bit 0, the min) and pair two independent copies.
pub fn discrete_joint_step(p: &[Vec<f64>], bit: u8) -> Result<Vec<Vec<f64>>> {
    let k = p.len();
    if k == 0 || p.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("joint mass matrix must be square and non-empty".into()));
    }
    let mut total = 0.0;
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::arg("joint", "entries must be finite and non-negative"));
            }
            if j > i && v != 0.0 {
                return Err(Error::arg("joint", "matrix must be lower triangular"));
            }
            total += v;
        }
    }
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::arg("joint", format!("entries sum to {total}, not 1")));
    }
    let m = if bit == 1 { max_marginal(p) } else { min_marginal(p) };
    Ok(pair_joint(&m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_split() {
        let p = DiscretePmf::new(vec![1.0, 2.0], vec![0.3, 0.7]).unwrap();
        let (mx, mn) = p.split();
        assert!((mx.masses()[0] - 0.09).abs() < 1e-15);
        assert!((mx.masses()[1] - 0.91).abs() < 1e-15);
        assert!((mn.masses()[0] - 0.51).abs() < 1e-15);
        assert!((mn.masses()[1] - 0.49).abs() < 1e-15);
    }

    #[test]
    fn three_point_max_cdf() {
        let t = 1.0 / 3.0;
        let p = DiscretePmf::new(vec![1.0, 2.0, 3.0], vec![t, t, t]).unwrap();
        let c = p.split().0.cdf_values();
        for (x, y) in c.iter().zip([1.0 / 9.0, 4.0 / 9.0, 1.0]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn single_atom_is_fixed() {
        let p = DiscretePmf::new(vec![5.0], vec![1.0]).unwrap();
        let (a, b) = p.split();
        assert_eq!(a, p);
        assert_eq!(b, p);
        let j = discrete_joint_step(&[vec![1.0]], 1).unwrap();
        assert_eq!(j, vec![vec![1.0]]);
    }

    #[test]
    fn joint_step_marginals() {
        let m = [0.3, 0.7];
        let p = pair_joint(&m);
        let rows = max_marginal(&p);
        assert!((rows[0] - 0.09).abs() < 1e-15 && (rows[1] - 0.91).abs() < 1e-15);
        let cols = min_marginal(&p);
        assert!((cols[0] - 0.51).abs() < 1e-15 && (cols[1] - 0.49).abs() < 1e-15);
        let next = discrete_joint_step(&p, 1).unwrap();
        assert_eq!(next, pair_joint(&rows));
        let total: f64 = next.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(discrete_joint_step(&[vec![0.5, 0.5], vec![0.0, 0.0]], 1).is_err());
    }

    #[test]
    fn rejects_bad_pmfs() {
        assert!(DiscretePmf::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscretePmf::new(vec![1.0], vec![0.5]).is_err());
        assert!(DiscretePmf::new(vec![1.0, 2.0], vec![-0.5, 1.5]).is_err());
    }
}
