use super::matrix::TaskMatrix;
use super::{log2_exact, polar_transform, position_to_index, CodeConfig};
use crate::error::{Error, Result};
use crate::freezing::FrozenSet;
use std::collections::BTreeMap;

/// What physical worker `index` sent back, and when.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerReturn {
    pub index: usize,
    pub result: Option<TaskMatrix>,
    pub finish_time: f64,
}

impl WorkerReturn {
    pub fn arrived(index: usize, result: TaskMatrix, finish_time: f64) -> Self {
        Self { index, result: Some(result), finish_time }
    }

    pub fn missing(index: usize) -> Self {
        Self { index, result: None, finish_time: f64::INFINITY }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    /// `f(A_p)` for every block position, frozen ones included.
    pub blocks: Vec<TaskMatrix>,
    /// When each position became known; `-inf` for frozen positions.
    pub availability: Vec<f64>,
    pub decode_time: f64,
    data_positions: Vec<usize>,
}

impl Decoded {
    /// Recovered data blocks in the order they were laid out.
    pub fn data(&self) -> Vec<&TaskMatrix> {
        self.data_positions.iter().map(|&p| &self.blocks[p]).collect()
    }
}

#[derive(Clone)]
struct Signal {
    value: Option<TaskMatrix>,
    time: f64,
}

struct Ctx<'a> {
    frozen: &'a [bool],
    frozen_values: &'a BTreeMap<usize, TaskMatrix>,
    zero: TaskMatrix,
    blocks: Vec<Option<TaskMatrix>>,
    times: Vec<f64>,
    blocking: Vec<usize>,
}

impl Ctx<'_> {
    // Decode the positions `offset..offset + y.len()` from their signals.
    // Returns the sub-block results and the time the last non-frozen one
    // became known, or `None` if something is missing.
    fn run(&mut self, y: Vec<Signal>, offset: usize) -> Option<(Vec<TaskMatrix>, f64)> {
        let n = y.len();
        if n == 1 {
            if self.frozen[offset] {
                let v = self.frozen_values.get(&offset).cloned().unwrap_or_else(|| self.zero.clone());
                self.blocks[offset] = Some(v.clone());
                self.times[offset] = f64::NEG_INFINITY;
                return Some((vec![v], f64::NEG_INFINITY));
            }
            let Signal { value, time } = y.into_iter().next().unwrap();
            return match value {
                Some(v) => {
                    self.blocks[offset] = Some(v.clone());
                    self.times[offset] = time;
                    Some((vec![v], time))
                }
                None => {
                    self.blocking.push(offset);
                    None
                }
            };
        }
        let half = n / 2;
        // Max side: both members of a pair are needed, (y₀ + y₁) / 2.
        let max_side: Vec<Signal> = (0..half)
            .map(|j| match (&y[2 * j].value, &y[2 * j + 1].value) {
                (Some(a), Some(b)) => Signal {
                    value: Some(a.add(b).expect("shapes checked").scale(0.5)),
                    time: y[2 * j].time.max(y[2 * j + 1].time),
                },
                _ => Signal { value: None, time: f64::INFINITY },
            })
            .collect();
        let a = self.run(max_side, offset);
        // Min side: once the max side is known, either member suffices,
        // y₀ − c or c − y₁ with c the re-encoded max side.
        let min_side: Vec<Signal> = match &a {
            Some((ua, ta)) => {
                let c = polar_transform(ua).expect("power of two");
                (0..half)
                    .map(|j| {
                        let (s0, s1) = (&y[2 * j], &y[2 * j + 1]);
                        let pick0 = s0.value.is_some() && (s1.value.is_none() || s0.time <= s1.time);
                        if pick0 {
                            Signal {
                                value: Some(s0.value.as_ref().unwrap().sub(&c[j]).expect("shapes checked")),
                                time: ta.max(s0.time),
                            }
                        } else if let Some(v1) = &s1.value {
                            Signal { value: Some(c[j].sub(v1).expect("shapes checked")), time: ta.max(s1.time) }
                        } else {
                            Signal { value: None, time: f64::INFINITY }
                        }
                    })
                    .collect()
            }
            // Keep going only to report every blocking index.
            None => (0..half)
                .map(|j| match (&y[2 * j].value, &y[2 * j + 1].value) {
                    (Some(p), Some(q)) => Signal {
                        value: Some(p.sub(q).expect("shapes checked").scale(0.5)),
                        time: f64::INFINITY,
                    },
                    _ => Signal { value: None, time: f64::INFINITY },
                })
                .collect(),
        };
        let b = self.run(min_side, offset + half);
        match (a, b) {
            (Some((mut ua, ta)), Some((ub, tb))) => {
                ua.extend(ub);
                Some((ua, ta.max(tb)))
            }
            _ => None,
        }
    }
}

fn physical_signals(returns: &[WorkerReturn], workers: usize) -> Result<Vec<Signal>> {
    if returns.len() != workers {
        return Err(Error::Shape(format!("expected {workers} worker returns, got {}", returns.len())));
    }
    let mut slots: Vec<Option<Signal>> = vec![None; workers];
    let mut shape = None;
    for r in returns {
        if r.index >= workers || slots[r.index].is_some() {
            return Err(Error::arg("returns", format!("worker index {} missing, repeated or out of range", r.index)));
        }
        if r.result.is_some() != r.finish_time.is_finite() {
            return Err(Error::arg("returns", format!("worker {}: result must be present iff finish time is finite", r.index)));
        }
        if let Some(m) = &r.result {
            match shape {
                None => shape = Some(m.shape()),
                Some(s) if s != m.shape() => return Err(Error::Shape("worker results differ in shape".into())),
                _ => {}
            }
        }
        slots[r.index] = Some(Signal { value: r.result.clone(), time: r.finish_time });
    }
    Ok(slots.into_iter().map(|s| s.expect("every index seen")).collect())
}

/// Decode with frozen positions holding zero matrices.
pub fn sc_decode(returns: &[WorkerReturn], config: &CodeConfig) -> Result<Decoded> {
    sc_decode_with_frozen(returns, config, &BTreeMap::new())
}

/// Decode with known results for frozen positions (missing ones are zero).
pub fn sc_decode_with_frozen(
    returns: &[WorkerReturn],
    config: &CodeConfig,
    frozen_values: &BTreeMap<usize, TaskMatrix>,
) -> Result<Decoded> {
    let workers = config.workers();
    let signals = physical_signals(returns, workers)?;
    let (r, c) = signals
        .iter()
        .find_map(|s| s.value.as_ref().map(TaskMatrix::shape))
        .ok_or_else(|| Error::Undecodable {
            blocking: config.frozen_set().data().to_vec(),
        })?;
    let mut ctx = Ctx {
        frozen: config.frozen_positions(),
        frozen_values,
        zero: TaskMatrix::zeros(r, c),
        blocks: vec![None; workers],
        times: vec![f64::INFINITY; workers],
        blocking: Vec::new(),
    };
    match ctx.run(signals, 0) {
        Some((blocks, t)) => Ok(Decoded {
            blocks,
            availability: ctx.times,
            decode_time: t,
            data_positions: config.data_positions(),
        }),
        None => {
            let mut blocking: Vec<usize> =
                ctx.blocking.iter().map(|&p| position_to_index(p, workers)).collect();
            blocking.sort_unstable();
            Err(Error::Undecodable { blocking })
        }
    }
}

/// Virtual runtimes by family index: maxes of pairs feed the max side,
/// mins the min side, recursively.
pub fn virtual_runtimes(physical: &[f64]) -> Result<Vec<f64>> {
    let n = physical.len();
    log2_exact(n)?;
    let mut by_position = vec![0.0; n];
    fn rec(t: &[f64], out: &mut [f64]) {
        if t.len() == 1 {
            out[0] = t[0];
            return;
        }
        let half = t.len() / 2;
        let maxes: Vec<f64> = (0..half).map(|j| t[2 * j].max(t[2 * j + 1])).collect();
        let mins: Vec<f64> = (0..half).map(|j| t[2 * j].min(t[2 * j + 1])).collect();
        let (a, b) = out.split_at_mut(half);
        rec(&maxes, a);
        rec(&mins, b);
    }
    rec(physical, &mut by_position);
    Ok((0..n).map(|i| by_position[n - 1 - i]).collect())
}

/// `max_{i ∉ frozen} T_{n,i}`.
pub fn decode_time(physical: &[f64], frozen: &FrozenSet) -> Result<f64> {
    if physical.len() != frozen.workers() {
        return Err(Error::Shape(format!("expected {} runtimes, got {}", frozen.workers(), physical.len())));
    }
    let v = virtual_runtimes(physical)?;
    Ok(frozen.data().iter().map(|&i| v[i]).fold(f64::NEG_INFINITY, f64::max))
}

/// Time each block position becomes known under successive cancellation:
/// the timing skeleton of [`sc_decode`].
pub fn sc_ready_times(physical: &[f64], frozen_positions: &[bool]) -> Result<Vec<f64>> {
    let n = physical.len();
    log2_exact(n)?;
    if frozen_positions.len() != n {
        return Err(Error::Shape("frozen mask length differs from worker count".into()));
    }
    fn rec(t: &[f64], frozen: &[bool], out: &mut [f64]) -> f64 {
        if t.len() == 1 {
            out[0] = if frozen[0] { f64::NEG_INFINITY } else { t[0] };
            return out[0];
        }
        let half = t.len() / 2;
        let maxes: Vec<f64> = (0..half).map(|j| t[2 * j].max(t[2 * j + 1])).collect();
        let (oa, ob) = out.split_at_mut(half);
        let ta = rec(&maxes, &frozen[..half], oa);
        let mins: Vec<f64> = (0..half).map(|j| ta.max(t[2 * j].min(t[2 * j + 1]))).collect();
        let tb = rec(&mins, &frozen[half..], ob);
        ta.max(tb)
    }
    let mut out = vec![0.0; n];
    rec(physical, frozen_positions, &mut out);
    Ok(out)
}

/// Whether every non-frozen position can be decoded from the workers
/// marked available.
pub fn sc_decodable(available: &[bool], frozen_positions: &[bool]) -> bool {
    let n = available.len();
    if n == 1 {
        return frozen_positions[0] || available[0];
    }
    let half = n / 2;
    let a: Vec<bool> = (0..half).map(|j| available[2 * j] && available[2 * j + 1]).collect();
    if !sc_decodable(&a, &frozen_positions[..half]) {
        return false;
    }
    let b: Vec<bool> = (0..half).map(|j| available[2 * j] || available[2 * j + 1]).collect();
    sc_decodable(&b, &frozen_positions[half..])
}

/// Reveal worker results in time order and report the first instant the
/// decoder succeeds; `+inf` if it never does.
pub fn readiness_decode_time(physical: &[f64], frozen: &FrozenSet) -> Result<f64> {
    let n = physical.len();
    if n != frozen.workers() {
        return Err(Error::Shape(format!("expected {} runtimes, got {}", frozen.workers(), n)));
    }
    let mask = CodeConfig::new(frozen.clone()).frozen_positions().to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| physical[i].total_cmp(&physical[j]));
    let mut available = vec![false; n];
    if sc_decodable(&available, &mask) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut k = 0;
    while k < n {
        let t = physical[order[k]];
        if !t.is_finite() {
            break;
        }
        // Reveal every worker finishing at this instant together.
        while k < n && physical[order[k]] == t {
            available[order[k]] = true;
            k += 1;
        }
        if sc_decodable(&available, &mask) {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::index_to_position;

    fn config(n: usize, frozen: Vec<usize>) -> CodeConfig {
        CodeConfig::new(FrozenSet::manual(n, frozen).unwrap())
    }

    #[test]
    fn two_worker_decode() {
        let cfg = config(1, vec![]);
        let returns = vec![
            WorkerReturn::arrived(0, TaskMatrix::scalar(8.0), 1.0),
            WorkerReturn::arrived(1, TaskMatrix::scalar(-2.0), 2.0),
        ];
        let d = sc_decode(&returns, &cfg).unwrap();
        assert_eq!(d.blocks[0].get(0, 0), 3.0);
        assert_eq!(d.blocks[1].get(0, 0), 5.0);
        assert_eq!(d.decode_time, 2.0);
    }

    #[test]
    fn single_input_min_side() {
        // Max path (family index 1, position 0) frozen.
        let cfg = config(1, vec![1]);
        let returns = vec![WorkerReturn::arrived(0, TaskMatrix::scalar(5.0), 0.4), WorkerReturn::missing(1)];
        let d = sc_decode(&returns, &cfg).unwrap();
        assert_eq!(d.data()[0].get(0, 0), 5.0);
        assert_eq!(d.availability[0], f64::NEG_INFINITY);
        assert_eq!(d.decode_time, 0.4);
    }

    #[test]
    fn undecodable_lists_blockers() {
        let cfg = config(1, vec![]);
        let returns = vec![WorkerReturn::arrived(0, TaskMatrix::scalar(5.0), 0.4), WorkerReturn::missing(1)];
        match sc_decode(&returns, &cfg) {
            Err(Error::Undecodable { blocking }) => assert_eq!(blocking, vec![0, 1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn four_point_runtimes() {
        let v = virtual_runtimes(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        // indices 0..3 are paths 00, 01, 10, 11
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);
        let f = FrozenSet::manual(2, vec![3]).unwrap();
        assert_eq!(decode_time(&[1.0, 2.0, 3.0, 4.0], &f).unwrap(), 3.0);
        assert_eq!(virtual_runtimes(&[0.3, 0.8]).unwrap(), vec![0.3, 0.8]);
        let f = FrozenSet::manual(1, vec![1]).unwrap();
        assert_eq!(decode_time(&[0.3, 0.8], &f).unwrap(), 0.3);
        let none = FrozenSet::manual(2, vec![]).unwrap();
        assert_eq!(decode_time(&[1.0, 4.0, 3.0, 2.0], &none).unwrap(), 4.0);
    }

    #[test]
    fn timing_skeleton_matches() {
        let f = FrozenSet::manual(2, vec![3]).unwrap();
        let cfg = CodeConfig::new(f.clone());
        let t = [1.0, 2.0, 3.0, 4.0];
        let ready = sc_ready_times(&t, cfg.frozen_positions()).unwrap();
        let top = ready.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(top, 3.0);
        assert_eq!(ready[index_to_position(3, 4)], f64::NEG_INFINITY);
        assert_eq!(readiness_decode_time(&t, &f).unwrap(), 3.0);
    }
}
