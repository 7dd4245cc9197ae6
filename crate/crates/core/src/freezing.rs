//! Choosing which virtual workers carry data.
//!
//! Scores and indices refer to family indices (bit paths read with the
//! first bit most significant, bit 1 = max). Data goes to the `K` fastest
//! virtual workers; the rest are frozen to known inputs.

use crate::dist::{Cdf, Distribution};
use crate::error::{Error, Result};
use crate::polarization::{polarize, EvolutionConfig, ScalarState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreezeRule {
    Quantile,
    Laplace,
    Manual,
}

impl FreezeRule {
    pub fn as_str(self) -> &'static str {
        match self {
            FreezeRule::Quantile => "quantile",
            FreezeRule::Laplace => "laplace",
            FreezeRule::Manual => "manual",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenSet {
    n: usize,
    rule: FreezeRule,
    param: f64,
    frozen: Vec<usize>,
    data: Vec<usize>,
    scores: Vec<f64>,
}

/// On-disk form: `{"n", "rule", "param", "frozen", "data", "scores"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenSetDoc {
    pub n: usize,
    pub rule: FreezeRule,
    pub param: f64,
    pub frozen: Vec<usize>,
    pub data: Vec<usize>,
    pub scores: Vec<f64>,
}

impl FrozenSet {
    fn build(n: usize, rule: FreezeRule, param: f64, mut frozen: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        if n >= usize::BITS as usize - 1 {
            return Err(Error::arg("n", format!("depth {n} too large")));
        }
        let workers = 1usize << n;
        frozen.sort_unstable();
        frozen.dedup();
        if frozen.iter().any(|&i| i >= workers) {
            return Err(Error::arg("frozen", format!("indices must be below {workers}")));
        }
        if frozen.len() == workers {
            return Err(Error::arg("frozen", "at least one index must carry data"));
        }
        if !scores.is_empty() && scores.len() != workers {
            return Err(Error::arg("scores", format!("need {workers} scores, got {}", scores.len())));
        }
        let data = (0..workers).filter(|i| frozen.binary_search(i).is_err()).collect();
        Ok(Self { n, rule, param, frozen, data, scores })
    }

    /// A hand-picked frozen set with no scores.
    pub fn manual(n: usize, frozen: Vec<usize>) -> Result<Self> {
        Self::build(n, FreezeRule::Manual, 0.0, frozen, Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn workers(&self) -> usize {
        1 << self.n
    }

    pub fn k(&self) -> usize {
        self.data.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.workers() as f64
    }

    pub fn rule(&self) -> FreezeRule {
        self.rule
    }

    /// `t*` for the quantile rule, `λ` for the Laplace rule.
    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    /// `F_{n,i}(t*)` for the quantile rule, `ln M_{n,i}(λ)` for the Laplace
    /// rule; empty for manual sets.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen.binary_search(&index).is_ok()
    }

    pub fn to_doc(&self) -> FrozenSetDoc {
        FrozenSetDoc {
            n: self.n,
            rule: self.rule,
            param: self.param,
            frozen: self.frozen.clone(),
            data: self.data.clone(),
            scores: self.scores.clone(),
        }
    }

    pub fn from_doc(doc: &FrozenSetDoc) -> Result<Self> {
        let set = Self::build(doc.n, doc.rule, doc.param, doc.frozen.clone(), doc.scores.clone())?;
        let mut data = doc.data.clone();
        data.sort_unstable();
        if data != set.data {
            return Err(Error::arg("data", "data indices must be the complement of the frozen indices"));
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json(&self.to_doc())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FrozenSetDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_doc(&doc)
    }
}

/// `K = ⌊R N⌋`, which must be at least one.
pub fn data_count(n: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::arg("rate", format!("rate must lie in (0, 1], got {rate}")));
    }
    let workers = 1usize << n;
    let k = (rate * workers as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return Err(Error::arg("rate", format!("rate {rate} leaves no data block at N = {workers}")));
    }
    Ok(k.min(workers))
}

/// Leaf states `(F_{n,i}(t), 1 − F_{n,i}(t))` for all `2^n` indices.
pub fn leaf_states(root: ScalarState, n: usize) -> Vec<ScalarState> {
    let mut level = vec![root];
    for _ in 0..n {
        let mut next = Vec::with_capacity(2 * level.len());
        for st in &level {
            next.push(st.step(0));
            next.push(st.step(1));
        }
        level = next;
    }
    level
}

fn root_state(base: &Distribution, t: f64) -> ScalarState {
    let z = base.cdf(t);
    ScalarState::new(z)
}

// Larger P[T ≤ t] first; among near-certain workers compare survivals,
// which keep full relative precision.
fn faster(a: &ScalarState, b: &ScalarState) -> Ordering {
    if a.z >= 0.5 && b.z >= 0.5 {
        a.s.total_cmp(&b.s)
    } else {
        b.z.total_cmp(&a.z)
    }
}

fn freeze_complement(workers: usize, data: &[usize]) -> Vec<usize> {
    let mut is_data = vec![false; workers];
    for &i in data {
        is_data[i] = true;
    }
    (0..workers).filter(|&i| !is_data[i]).collect()
}

/// Keep the `K` indices with the largest `F_{n,i}(t*)`, `t* = F⁻¹(R)`.
pub fn quantile_freeze(base: &Distribution, n: usize, rate: f64) -> Result<FrozenSet> {
    let k = data_count(n, rate)?;
    let t_star = base.quantile(rate)?;
    let states = leaf_states(root_state(base, t_star), n);
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.sort_by(|&i, &j| faster(&states[i], &states[j]).then(i.cmp(&j)));
    let frozen = freeze_complement(states.len(), &order[..k]);
    let scores = states.iter().map(|s| s.z).collect();
    FrozenSet::build(n, FreezeRule::Quantile, t_star, frozen, scores)
}

/// `λ = ln(N R) / ε`.
pub fn default_lambda(n: usize, rate: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::arg("epsilon", format!("epsilon must be positive, got {epsilon}")));
    }
    let lambda = ((1usize << n) as f64 * rate).ln() / epsilon;
    if !(lambda > 0.0) {
        return Err(Error::arg("lambda", format!("ln(N R)/ε = {lambda} is not positive; pass --lambda")));
    }
    Ok(lambda)
}

/// Keep the `K` indices with the smallest `M_{n,i}(λ) = E[e^{λ T_{n,i}}]`.
/// Scores are stored as `ln M`, which orders identically and cannot
/// overflow.
pub fn laplace_freeze(
    base: &Distribution,
    n: usize,
    rate: f64,
    lambda: f64,
    cfg: &EvolutionConfig,
) -> Result<FrozenSet> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::arg("lambda", format!("lambda must be positive and finite, got {lambda}")));
    }
    let k = data_count(n, rate)?;
    let family = polarize(base, n, cfg)?;
    let scores: Vec<f64> = family
        .members()
        .par_iter()
        .map(|m| m.log_laplace_transform(lambda))
        .collect::<Result<_>>()?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Divergent("Laplace transform of a leaf is not finite".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    let frozen = freeze_complement(scores.len(), &order[..k]);
    FrozenSet::build(n, FreezeRule::Laplace, lambda, frozen, scores)
}

/// Union bound `min(1, Σ_{i ∈ data} P[T_{n,i} > t])`.
pub fn failure_bound(base: &Distribution, frozen: &FrozenSet, t: f64) -> f64 {
    let states = leaf_states(root_state(base, t), frozen.depth());
    let total: f64 = frozen.data().iter().map(|&i| states[i].s).sum();
    total.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn depth_one_quantile_rule() {
        let f = quantile_freeze(&unif(), 1, 0.5).unwrap();
        assert_eq!(f.param(), 0.5);
        assert_eq!(f.scores(), &[0.75, 0.25]);
        assert_eq!(f.data(), &[0]);
        assert_eq!(f.frozen(), &[1]);
        assert!((failure_bound(&unif(), &f, 0.75) - 0.0625).abs() < 1e-15);
        assert_eq!(failure_bound(&unif(), &f, 1.0), 0.0);
    }

    #[test]
    fn full_rate_freezes_nothing() {
        let f = quantile_freeze(&unif(), 3, 1.0).unwrap();
        assert!(f.frozen().is_empty());
        assert_eq!(f.k(), 8);
    }

    #[test]
    fn depth_six_scores_separate() {
        let f = quantile_freeze(&unif(), 6, 0.5).unwrap();
        assert_eq!(f.k(), 32);
        assert!(f.data().iter().all(|&i| f.scores()[i] > 0.5));
    }

    #[test]
    fn depth_one_laplace_rule() {
        let f = laplace_freeze(&unif(), 1, 0.5, 1.0, &EvolutionConfig::default()).unwrap();
        let e = std::f64::consts::E;
        assert!((f.scores()[0] - (2.0 * (e - 2.0)).ln()).abs() < 1e-14);
        assert!((f.scores()[1] - 2.0f64.ln()).abs() < 1e-14);
        assert_eq!(f.data(), &[0]);
    }

    #[test]
    fn json_roundtrip() {
        let f = quantile_freeze(&unif(), 3, 0.5).unwrap();
        let back = FrozenSet::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert!(FrozenSet::from_json(r#"{"n":1,"rule":"manual","param":0,"frozen":[],"scores":[],"x":0}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(data_count(3, 0.0).is_err());
        assert!(data_count(3, 1.5).is_err());
        assert_eq!(data_count(3, 0.625).unwrap(), 5);
        assert!(FrozenSet::manual(1, vec![0, 1]).is_err());
        assert!(FrozenSet::manual(1, vec![2]).is_err());
        assert!(default_lambda(1, 0.5, 0.1).is_err());
    }
}
