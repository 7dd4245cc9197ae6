use crate::dist::{Cdf, Distribution};
use crate::error::{Error, Result};
use crate::io::{csv_f64, csv_row};

pub const DEFAULT_JOINT_POINTS: usize = 256;

/// Joint density `f(u, v)` of the (min, max) pair on a square grid over
/// `[lo, hi]²`. Entry `(i, j)` sits at `u = x_i`, `v = x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGrid {
    lo: f64,
    hi: f64,
    points: usize,
    density: Vec<f64>,
}

impl JointGrid {
    pub fn from_fn(lo: f64, hi: f64, points: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 2 {
            return Err(Error::arg("joint", "need a finite range and at least 2 points"));
        }
        let xs = Self::axis_of(lo, hi, points);
        let mut density = Vec::with_capacity(points * points);
        for &u in &xs {
            for &v in &xs {
                density.push(f(u, v).max(0.0));
            }
        }
        let mut g = Self { lo, hi, points, density };
        g.normalize()?;
        Ok(g)
    }

    /// Product density `p(u) p(v)` of two independent copies of `base`.
    pub fn from_product(base: &Distribution, points: usize) -> Result<Self> {
        let (lo, hi) = base.support();
        let xs = Self::axis_of(lo, hi, points);
        let p: Vec<f64> = xs.iter().map(|&x| base.eval_pdf(x)).collect::<Result<_>>()?;
        let idx = |x: f64| {
            let h = (hi - lo) / (points - 1) as f64;
            (((x - lo) / h).round() as usize).min(points - 1)
        };
        Self::from_fn(lo, hi, points, |u, v| p[idx(u)] * p[idx(v)])
    }

    fn axis_of(lo: f64, hi: f64, points: usize) -> Vec<f64> {
        let h = (hi - lo) / (points - 1) as f64;
        (0..points)
            .map(|i| if i + 1 == points { hi } else { lo + i as f64 * h })
            .collect()
    }

    pub fn axis(&self) -> Vec<f64> {
        Self::axis_of(self.lo, self.hi, self.points)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.points + j]
    }

    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoid-rule total mass.
    pub fn mass(&self) -> f64 {
        let h = self.step();
        let mut total = 0.0;
        for i in 0..self.points {
            let wi = self.weight(i);
            for j in 0..self.points {
                total += wi * self.weight(j) * self.at(i, j);
            }
        }
        total * h * h
    }

    fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::ZeroMass);
        }
        for d in self.density.iter_mut() {
            *d /= m;
        }
        Ok(())
    }

    /// Density of the larger coordinate: `∫ f(u, v) du` as a function of `v`.
    pub fn marginal_max(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points)
            .map(|j| (0..self.points).map(|i| self.weight(i) * self.at(i, j)).sum::<f64>() * h)
            .collect()
    }

    /// Density of the smaller coordinate: `∫ f(u, v) dv` as a function of `u`.
    pub fn marginal_min(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points)
            .map(|i| (0..self.points).map(|j| self.weight(j) * self.at(i, j)).sum::<f64>() * h)
            .collect()
    }

    /// `f'(u, v) = 2 g(u) g(v) 1[u ≤ v]` with `g` the bit-selected marginal,
    /// renormalized. The diagonal carries half weight so that the trapezoid
    /// mass of the new density equals the squared mass of `g`.
    pub fn step_with(&self, bit: u8) -> Result<JointGrid> {
        let g = if bit == 1 { self.marginal_max() } else { self.marginal_min() };
        let n = self.points;
        let mut density = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let w = if i == j { 1.0 } else { 2.0 };
                density[i * n + j] = w * g[i] * g[j];
            }
        }
        let mut next = Self { lo: self.lo, hi: self.hi, points: n, density };
        next.normalize()?;
        Ok(next)
    }

    /// CSV matrix: header `u\v,<v values>`, then one row per `u`.
    pub fn to_csv(&self) -> String {
        let xs = self.axis();
        let mut header = vec!["u\\v".to_string()];
        header.extend(xs.iter().map(|&x| csv_f64(x)));
        let mut out = csv_row(&header);
        for (i, &u) in xs.iter().enumerate() {
            let mut row = vec![csv_f64(u)];
            row.extend((0..self.points).map(|j| csv_f64(self.at(i, j))));
            out.push_str(&csv_row(&row));
        }
        out
    }
}

pub fn joint_density_step(j: &JointGrid, bit: u8) -> Result<JointGrid> {
    j.step_with(bit)
}
