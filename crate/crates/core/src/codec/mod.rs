//! Real-valued polar encoding and successive-cancellation decoding.
//!
//! Blocks are laid out in transform order: block position `p` holds the
//! virtual worker with family index `N − 1 − p`, so position 0 is the
//! all-max path and the first half of the positions is the max side of the
//! first split.

pub mod decode;
pub mod matrix;

pub use decode::{
    decode_time, readiness_decode_time, sc_decodable, sc_decode, sc_decode_with_frozen,
    sc_ready_times, virtual_runtimes, Decoded, WorkerReturn,
};
pub use matrix::TaskMatrix;

use crate::error::{Error, Result};
use crate::freezing::FrozenSet;

/// `log2 N`, or an error when `N` is not a power of two.
pub fn log2_exact(n: usize) -> Result<usize> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::arg("n", format!("{n} is not a power of two")));
    }
    Ok(n.trailing_zeros() as usize)
}

/// `perm[i]` = `i` with its `log2 N` bits reversed.
pub fn bit_reversal_perm(n: usize) -> Result<Vec<usize>> {
    let bits = log2_exact(n)?;
    Ok((0..n)
        .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS as usize - bits) })
        .collect())
}

/// Family index of the virtual worker at block position `p`, and back.
pub fn position_to_index(p: usize, workers: usize) -> usize {
    workers - 1 - p
}

pub fn index_to_position(i: usize, workers: usize) -> usize {
    workers - 1 - i
}

fn check_blocks(blocks: &[TaskMatrix]) -> Result<()> {
    log2_exact(blocks.len())?;
    let shape = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != shape) {
        return Err(Error::Shape("all blocks must share one shape".into()));
    }
    Ok(())
}

/// Bit-reversal followed by the unnormalized butterfly network,
/// `(a, b) → (a + b, a − b)` at strides 1, 2, 4, ….
pub fn polar_transform(blocks: &[TaskMatrix]) -> Result<Vec<TaskMatrix>> {
    check_blocks(blocks)?;
    let n = blocks.len();
    let perm = bit_reversal_perm(n)?;
    let mut x: Vec<TaskMatrix> = perm.iter().map(|&p| blocks[p].clone()).collect();
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            let (lo, hi) = x[start..start + 2 * h].split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                TaskMatrix::butterfly(a, b);
            }
        }
        h *= 2;
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodeConfig {
    frozen: FrozenSet,
    frozen_positions: Vec<bool>,
}

impl CodeConfig {
    pub fn new(frozen: FrozenSet) -> Self {
        let workers = frozen.workers();
        let mut frozen_positions = vec![false; workers];
        for &i in frozen.frozen() {
            frozen_positions[index_to_position(i, workers)] = true;
        }
        Self { frozen, frozen_positions }
    }

    pub fn frozen_set(&self) -> &FrozenSet {
        &self.frozen
    }

    pub fn workers(&self) -> usize {
        self.frozen_positions.len()
    }

    pub fn k(&self) -> usize {
        self.frozen.k()
    }

    pub fn rate(&self) -> f64 {
        self.frozen.rate()
    }

    pub fn frozen_positions(&self) -> &[bool] {
        &self.frozen_positions
    }

    /// Non-frozen positions, ascending: the order data blocks are placed in.
    pub fn data_positions(&self) -> Vec<usize> {
        (0..self.workers()).filter(|&p| !self.frozen_positions[p]).collect()
    }

    /// Place `K` data blocks at the non-frozen positions, zeros elsewhere.
    pub fn layout(&self, data: &[TaskMatrix]) -> Result<Vec<TaskMatrix>> {
        if data.len() != self.k() {
            return Err(Error::Shape(format!("expected {} data blocks, got {}", self.k(), data.len())));
        }
        let (r, c) = data[0].shape();
        let mut blocks = vec![TaskMatrix::zeros(r, c); self.workers()];
        for (p, d) in self.data_positions().into_iter().zip(data) {
            blocks[p] = d.clone();
        }
        Ok(blocks)
    }

    pub fn encode_data(&self, data: &[TaskMatrix]) -> Result<Vec<TaskMatrix>> {
        encode(&self.layout(data)?, self)
    }
}

/// Encode `N` blocks whose frozen positions already hold the agreed values.
pub fn encode(blocks: &[TaskMatrix], config: &CodeConfig) -> Result<Vec<TaskMatrix>> {
    if blocks.len() != config.workers() {
        return Err(Error::Shape(format!("expected {} blocks, got {}", config.workers(), blocks.len())));
    }
    polar_transform(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(xs: &[f64]) -> Vec<TaskMatrix> {
        xs.iter().map(|&x| TaskMatrix::scalar(x)).collect()
    }

    fn values(xs: &[TaskMatrix]) -> Vec<f64> {
        xs.iter().map(|m| m.get(0, 0)).collect()
    }

    #[test]
    fn bit_reversal() {
        assert_eq!(bit_reversal_perm(1).unwrap(), vec![0]);
        assert_eq!(bit_reversal_perm(2).unwrap(), vec![0, 1]);
        assert_eq!(bit_reversal_perm(4).unwrap(), vec![0, 2, 1, 3]);
        assert_eq!(bit_reversal_perm(8).unwrap(), vec![0, 4, 2, 6, 1, 5, 3, 7]);
        assert!(bit_reversal_perm(6).is_err());
    }

    #[test]
    fn small_transforms() {
        assert_eq!(values(&polar_transform(&scalars(&[3.0, 5.0])).unwrap()), vec![8.0, -2.0]);
        assert_eq!(
            values(&polar_transform(&scalars(&[1.0, 0.0, 0.0, 0.0])).unwrap()),
            vec![1.0, 1.0, 1.0, 1.0]
        );
        // Freezing the min side turns N = 2 into repetition.
        let cfg = CodeConfig::new(FrozenSet::manual(1, vec![0]).unwrap());
        assert_eq!(cfg.data_positions(), vec![0]);
        let x = cfg.encode_data(&scalars(&[7.0])).unwrap();
        assert_eq!(values(&x), vec![7.0, 7.0]);
    }

    #[test]
    fn shape_mismatch() {
        let blocks = vec![TaskMatrix::zeros(1, 2), TaskMatrix::zeros(2, 1)];
        assert!(polar_transform(&blocks).is_err());
    }
}
