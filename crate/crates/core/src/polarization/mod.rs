//! The min/max split and its recursion.
//!
//! A pair of i.i.d. runtimes `(T, T')` yields a slow virtual worker
//! `max(T, T')` with CDF `F²` and a fast one `min(T, T')` with CDF
//! `1 - (1 - F)²`. Bit 1 selects the max child and bit 0 the min child;
//! family members are indexed by their bit path read as a binary number
//! with the first bit most significant.

pub mod cycle;
pub mod discrete;
pub mod joint;

use crate::dist::{
    Bernstein, Cdf, Distribution, GridDistribution, PiecewisePolynomial, RuntimeDistribution,
    DEFAULT_GRID_POINTS,
};
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::fmt;

pub const DEFAULT_DEGREE_CAP: usize = 512;
pub const MAX_DEPTH: usize = 20;
// Upper bound on stored CDF samples for a whole family (about 2 GiB).
const MAX_FAMILY_VALUES: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvolutionConfig {
    /// Highest polynomial degree kept exactly; larger results switch to grids.
    pub degree_cap: usize,
    pub grid_points: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { degree_cap: DEFAULT_DEGREE_CAP, grid_points: DEFAULT_GRID_POINTS }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitPath {
    bits: Vec<u8>,
}

impl BitPath {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::arg("path", "bits must be 0 or 1"));
        }
        Ok(Self { bits })
    }

    pub fn empty() -> Self {
        Self { bits: Vec::new() }
    }

    /// The path whose family index is `index` at the given depth.
    pub fn from_index(index: usize, depth: usize) -> Result<Self> {
        if depth >= usize::BITS as usize || index >> depth != 0 {
            return Err(Error::arg("path", format!("index {index} out of range at depth {depth}")));
        }
        let bits = (0..depth).map(|j| ((index >> (depth - 1 - j)) & 1) as u8).collect();
        Ok(Self { bits })
    }

    /// Parse a string of `0`/`1` characters, first bit first.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::arg("path", format!("unexpected character {c:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    /// `Σ b_j 2^(n-j)`, zero-based.
    pub fn index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn child(&self, bit: u8) -> BitPath {
        let mut bits = self.bits.clone();
        bits.push(bit & 1);
        Self { bits }
    }
}

impl fmt::Display for BitPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Complementary pair `(z, s) = (F, 1 - F)` evolved without cancellation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarState {
    pub z: f64,
    pub s: f64,
}

impl ScalarState {
    pub fn new(z: f64) -> Self {
        Self { z, s: 1.0 - z }
    }

    pub fn from_pair(z: f64, s: f64) -> Self {
        Self { z, s }
    }

    #[inline]
    pub fn step(self, bit: u8) -> Self {
        let Self { z, s } = self;
        if bit == 1 {
            Self { z: z * z, s: s * (1.0 + z) }
        } else {
            Self { z: z * (1.0 + s), s: s * s }
        }
    }

    pub fn evolve(self, bits: &[u8]) -> Self {
        bits.iter().fold(self, |st, &b| st.step(b))
    }

    /// `min(z, s)`, the distance to the nearer absorbing point.
    pub fn gap(self) -> f64 {
        self.z.min(self.s)
    }
}

/// `z → z²` or `z → 2z − z²` applied along `bits`.
pub fn scalar_map(z: f64, bits: &[u8]) -> f64 {
    ScalarState::new(z).evolve(bits).z
}

/// The leaf CDF `t ↦ g(F(t))` of a path, evaluated pointwise through the
/// scalar recursion. Exact at any depth and cheap to evaluate.
#[derive(Clone, Debug)]
pub struct PathCdf<'a> {
    base: &'a Distribution,
    bits: Vec<u8>,
}

impl<'a> PathCdf<'a> {
    pub fn new(base: &'a Distribution, path: &BitPath) -> Self {
        Self { base, bits: path.bits().to_vec() }
    }

    pub fn from_bits(base: &'a Distribution, bits: &[u8]) -> Self {
        Self { base, bits: bits.to_vec() }
    }

    pub fn state(&self, t: f64) -> ScalarState {
        ScalarState::new(self.base.cdf(t)).evolve(&self.bits)
    }
}

impl Cdf for PathCdf<'_> {
    fn cdf(&self, t: f64) -> f64 {
        self.state(t).z
    }
    fn cdf_left(&self, t: f64) -> f64 {
        scalar_map(self.base.cdf_left(t), &self.bits)
    }
    fn support(&self) -> (f64, f64) {
        self.base.support()
    }
    fn knots(&self) -> Vec<f64> {
        self.base.knots()
    }
}

fn square_seg(s: &Bernstein) -> Bernstein {
    s.square()
}

fn min_seg(s: &Bernstein) -> Bernstein {
    s.one_minus().square().one_minus()
}

enum Operand<'a> {
    Exact(std::borrow::Cow<'a, RuntimeDistribution>),
    Grid(std::borrow::Cow<'a, GridDistribution>),
}

// Squaring doubles the degree; beyond the cap the operand becomes a grid.
fn operand<'a>(d: &'a Distribution, cfg: &EvolutionConfig) -> Operand<'a> {
    use std::borrow::Cow;
    let from_runtime = |r: Cow<'a, RuntimeDistribution>| {
        if 2 * r.max_degree() <= cfg.degree_cap {
            Operand::Exact(r)
        } else {
            Operand::Grid(Cow::Owned(r.to_grid(cfg.grid_points)))
        }
    };
    match d {
        Distribution::Exact(r) => from_runtime(Cow::Borrowed(r)),
        Distribution::Grid(g) => Operand::Grid(Cow::Borrowed(g)),
        Distribution::Empirical(e) => from_runtime(Cow::Owned(e.to_runtime())),
    }
}

/// `F_max = F²`.
pub fn split_max(f: &Distribution, cfg: &EvolutionConfig) -> Distribution {
    match operand(f, cfg) {
        Operand::Exact(r) => r.map_trusted(square_seg).into(),
        Operand::Grid(g) => g.split().0.into(),
    }
}

/// `F_min = 1 - (1 - F)²`.
pub fn split_min(f: &Distribution, cfg: &EvolutionConfig) -> Distribution {
    match operand(f, cfg) {
        Operand::Exact(r) => r.map_trusted(min_seg).into(),
        Operand::Grid(g) => g.split().1.into(),
    }
}

/// One split step: `(F_max, F_min)`. When the squared degree would exceed
/// the cap both children are returned as grids.
pub fn split_cdf(f: &Distribution, cfg: &EvolutionConfig) -> (Distribution, Distribution) {
    match operand(f, cfg) {
        Operand::Exact(r) => (r.map_trusted(square_seg).into(), r.map_trusted(min_seg).into()),
        Operand::Grid(g) => {
            let (a, b) = g.split();
            (a.into(), b.into())
        }
    }
}

/// `F_max = F1 F2`, `F_min = F1 + F2 - F1 F2` for independent workers with
/// different laws.
pub fn split_cdf_nonidentical(
    f1: &Distribution,
    f2: &Distribution,
    cfg: &EvolutionConfig,
) -> Result<(Distribution, Distribution)> {
    let exact = |d: &Distribution| match d {
        Distribution::Exact(r) => Some(r.clone()),
        Distribution::Empirical(e) => Some(e.to_runtime()),
        Distribution::Grid(_) => None,
    };
    let (a1, b1) = f1.support();
    let (a2, b2) = f2.support();
    if let (Some(r1), Some(r2)) = (exact(f1), exact(f2)) {
        if r1.max_degree() + r2.max_degree() <= cfg.degree_cap {
            let mut breaks: Vec<f64> = r1.breakpoints().iter().chain(r2.breakpoints()).copied().collect();
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            if breaks.len() == 1 {
                // Both are the same point mass.
                let d: Distribution = RuntimeDistribution::delta(breaks[0])?.into();
                return Ok((d.clone(), d));
            }
            let s1 = r1.on_partition(&breaks);
            let s2 = r2.on_partition(&breaks);
            let max: Vec<Bernstein> = s1.iter().zip(&s2).map(|(x, y)| x.mul(y).cleanup()).collect();
            let min: Vec<Bernstein> = s1
                .iter()
                .zip(&s2)
                .map(|(x, y)| x.one_minus().mul(&y.one_minus()).one_minus().cleanup())
                .collect();
            let mk = |segs: Vec<Bernstein>| -> Distribution {
                RuntimeDistribution::from_piecewise_trusted(PiecewisePolynomial::new_unchecked(
                    breaks.clone(),
                    segs,
                ))
                .into()
            };
            return Ok((mk(max), mk(min)));
        }
    }
    let lo = a1.min(a2);
    let hi = b1.max(b2);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let g1 = GridDistribution::from_fn(lo, hi, cfg.grid_points, |t| f1.cdf(t));
    let g2 = GridDistribution::from_fn(lo, hi, cfg.grid_points, |t| f2.cdf(t));
    let (mx, mn) = GridDistribution::split_pair(&g1, &g2)?;
    Ok((mx.into(), mn.into()))
}

/// Densities of the two children, `2 p F` and `2 p (1 - F)`.
pub fn split_pdf(f: &RuntimeDistribution) -> Result<(PiecewisePolynomial, PiecewisePolynomial)> {
    let p = f.density()?;
    let bps = p.breakpoints().to_vec();
    let (mut mx, mut mn) = (Vec::new(), Vec::new());
    for (dp, cdf) in p.segments().iter().zip(f.segments()) {
        mx.push(dp.mul(cdf).scale(2.0).cleanup());
        mn.push(dp.mul(&cdf.one_minus()).scale(2.0).cleanup());
    }
    Ok((
        PiecewisePolynomial::new_unchecked(bps.clone(), mx),
        PiecewisePolynomial::new_unchecked(bps, mn),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepresentationMode {
    Exact,
    Grid,
}

impl RepresentationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RepresentationMode::Exact => "exact",
            RepresentationMode::Grid => "grid",
        }
    }
}

/// All `2^n` leaves of the split tree, stored by family index.
#[derive(Clone, Debug)]
pub struct PolarFamily {
    base: Distribution,
    depth: usize,
    members: Vec<Distribution>,
}

impl PolarFamily {
    pub fn base(&self) -> &Distribution {
        &self.base
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Distribution] {
        &self.members
    }

    pub fn member(&self, path: &BitPath) -> Option<&Distribution> {
        (path.depth() == self.depth).then(|| &self.members[path.index()])
    }

    pub fn mode(&self) -> RepresentationMode {
        if self.members.iter().all(Distribution::is_exact) {
            RepresentationMode::Exact
        } else {
            RepresentationMode::Grid
        }
    }

    pub fn into_members(self) -> Vec<Distribution> {
        self.members
    }
}

pub(crate) fn check_depth(n: usize, cfg: &EvolutionConfig) -> Result<()> {
    if n > MAX_DEPTH {
        return Err(Error::arg("n", format!("depth {n} exceeds {MAX_DEPTH}")));
    }
    if cfg.grid_points < 2 {
        return Err(Error::arg("grid-points", "need at least 2 grid points"));
    }
    if (1usize << n).saturating_mul(cfg.grid_points) > MAX_FAMILY_VALUES {
        return Err(Error::TooLarge(format!(
            "2^{n} members × {} grid points does not fit in memory",
            cfg.grid_points
        )));
    }
    Ok(())
}

/// Split one level of the tree: node `i` yields children `2i` (min) and
/// `2i + 1` (max).
pub fn split_level(level: &[Distribution], cfg: &EvolutionConfig) -> Vec<Distribution> {
    let pairs: Vec<(Distribution, Distribution)> =
        level.par_iter().map(|f| split_cdf(f, cfg)).collect();
    let mut next = Vec::with_capacity(2 * level.len());
    for (mx, mn) in pairs {
        next.push(mn);
        next.push(mx);
    }
    next
}

pub fn polarize(base: &Distribution, n: usize, cfg: &EvolutionConfig) -> Result<PolarFamily> {
    check_depth(n, cfg)?;
    let mut level = vec![base.clone()];
    for _ in 0..n {
        level = split_level(&level, cfg);
    }
    Ok(PolarFamily { base: base.clone(), depth: n, members: level })
}

/// The single leaf at `path`, without building its siblings.
pub fn path_evolve(base: &Distribution, path: &BitPath, cfg: &EvolutionConfig) -> Distribution {
    let mut cur = base.clone();
    for &b in path.bits() {
        cur = if b == 1 { split_max(&cur, cfg) } else { split_min(&cur, cfg) };
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn bitpath_index_roundtrip() {
        for depth in 0..6 {
            for i in 0..(1 << depth) {
                let p = BitPath::from_index(i, depth).unwrap();
                assert_eq!(p.index(), i);
                assert_eq!(BitPath::parse(&p.to_string()).unwrap(), p);
            }
        }
        assert_eq!(BitPath::parse("10").unwrap().index(), 2);
        assert!(BitPath::from_index(4, 2).is_err());
        assert!(BitPath::new(vec![2]).is_err());
    }

    #[test]
    fn one_split_of_uniform() {
        let (mx, mn) = split_cdf(&unif(), &EvolutionConfig::default());
        assert!((mx.cdf(0.5) - 0.25).abs() < 1e-15);
        assert!((mn.cdf(0.5) - 0.75).abs() < 1e-15);
        assert!((mx.quantile(0.25).unwrap() - 0.5).abs() < 1e-12);
        assert!((mx.eval_pdf(0.25).unwrap() - 0.5).abs() < 1e-14);
        assert!((mn.eval_pdf(0.25).unwrap() - 1.5).abs() < 1e-14);
        assert!((mx.mean().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((mn.mean().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((mx.laplace_transform(1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((mn.laplace_transform(1.0).unwrap() - 2.0 * (e - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn delta_is_fixed() {
        let d = Distribution::delta(1.5).unwrap();
        let (mx, mn) = split_cdf(&d, &EvolutionConfig::default());
        assert_eq!(mx, d);
        assert_eq!(mn, d);
    }

    #[test]
    fn depth_two_family() {
        let fam = polarize(&unif(), 2, &EvolutionConfig::default()).unwrap();
        assert_eq!(fam.len(), 4);
        let t: f64 = 0.37;
        let f1 = 2.0 * t - t * t;
        let expect = [
            2.0 * f1 - f1 * f1,
            f1 * f1,
            2.0 * t * t - t.powi(4),
            t.powi(4),
        ];
        for (m, e) in fam.members().iter().zip(expect) {
            assert!((m.cdf(t) - e).abs() < 1e-15);
        }
        assert_eq!(fam.mode(), RepresentationMode::Exact);
    }

    #[test]
    fn path_evolve_matches_closed_forms() {
        let cfg = EvolutionConfig::default();
        let p = path_evolve(&unif(), &BitPath::parse("1111").unwrap(), &cfg);
        assert!((p.cdf(0.9) - 0.9f64.powi(16)).abs() < 1e-14);
        let p = path_evolve(&unif(), &BitPath::parse("000").unwrap(), &cfg);
        assert!((p.cdf(0.2) - (1.0 - 0.8f64.powi(8))).abs() < 1e-14);
        assert_eq!(path_evolve(&unif(), &BitPath::empty(), &cfg), unif());
    }

    #[test]
    fn grid_fallback_beyond_cap() {
        let cfg = EvolutionConfig { degree_cap: 8, grid_points: 513 };
        let fam = polarize(&unif(), 5, &cfg).unwrap();
        assert_eq!(fam.mode(), RepresentationMode::Grid);
        let path = BitPath::parse("10110").unwrap();
        let via_scalar = PathCdf::new(&unif(), &path).cdf(0.4);
        assert!((fam.member(&path).unwrap().cdf(0.4) - via_scalar).abs() < 1e-3);
    }

    #[test]
    fn nonidentical_cases() {
        let cfg = EvolutionConfig::default();
        let u = unif();
        let (mx, mn) = split_cdf_nonidentical(&u, &u, &cfg).unwrap();
        let (sx, sn) = split_cdf(&u, &cfg);
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert!((mx.cdf(t) - sx.cdf(t)).abs() < 1e-15);
            assert!((mn.cdf(t) - sn.cdf(t)).abs() < 1e-15);
        }
        let d0 = Distribution::delta(0.0).unwrap();
        let (mx, mn) = split_cdf_nonidentical(&u, &d0, &cfg).unwrap();
        assert!((mx.cdf(0.3) - 0.3).abs() < 1e-15);
        assert_eq!(mn.cdf(0.0), 1.0);
        let sq = split_max(&u, &cfg);
        let (mx, mn) = split_cdf_nonidentical(&u, &sq, &cfg).unwrap();
        assert!((mx.cdf(0.5) - 0.125).abs() < 1e-15);
        assert!((mn.cdf(0.5) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn pdf_split_of_uniform() {
        let u = RuntimeDistribution::uniform(0.0, 1.0).unwrap();
        let (px, pn) = split_pdf(&u).unwrap();
        assert!((px.eval(0.3) - 0.6).abs() < 1e-15);
        assert!((pn.eval(0.3) - 1.4).abs() < 1e-15);
        assert!((px.integral() - 1.0).abs() < 1e-15);
        assert!((pn.integral() - 1.0).abs() < 1e-15);
        let d = RuntimeDistribution::delta(0.0).unwrap();
        assert!(matches!(split_pdf(&d), Err(Error::HasAtoms)));
    }

    #[test]
    fn depth_limit() {
        assert!(polarize(&unif(), 21, &EvolutionConfig::default()).is_err());
    }
}
