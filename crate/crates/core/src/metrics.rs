//! Q-error for cardinality estimates and Q-cost for index configurations.

use crate::synthdb::IndexConfig;
use crate::workload::Query;
use crate::{Error, Result};

/// `max(e, a) / min(e, a)` with both sides clamped to at least 1.
pub fn q_error(estimate: f64, actual: f64) -> f64 {
    let clamp = |v: f64| if v.is_nan() { 1.0 } else { v.max(1.0) };
    let (e, a) = (clamp(estimate), clamp(actual));
    e.max(a) / e.min(a)
}

/// Per-query weights, normalized to sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadWeights(Vec<f64>);

impl WorkloadWeights {
    pub fn uniform(n: usize) -> Self {
        WorkloadWeights(vec![1.0 / n as f64; n])
    }

    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "weights must be finite and nonnegative"));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("weights", "weights sum to zero"));
        }
        Ok(WorkloadWeights(raw.into_iter().map(|w| w / sum).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Weighted mean of per-query cost ratios `cost(q, idx) / cost(q, none)`.
/// Lower is better; 1.0 means no improvement.
pub fn q_cost<F>(workload: &[Query], weights: &WorkloadWeights, idx: &IndexConfig, mut cost_fn: F) -> Result<f64>
where
    F: FnMut(&Query, &IndexConfig) -> f64,
{
    if workload.len() != weights.len() {
        return Err(Error::Dimension {
            expected: workload.len(),
            got: weights.len(),
        });
    }
    let none = IndexConfig::empty(idx.len());
    let mut total = 0.0;
    for (q, w) in workload.iter().zip(weights.as_slice()) {
        let base = cost_fn(q, &none);
        if base <= 0.0 {
            return Err(Error::invalid("cost_fn", format!("non-positive base cost for `{q}`")));
        }
        total += w * cost_fn(q, idx) / base;
    }
    Ok(total)
}

/// Agent reward for a Q-cost value; higher is better.
pub fn rl_reward(q_cost_value: f64) -> f64 {
    1.0 - q_cost_value
}

/// Median, mean and 99th percentile (nearest rank) of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub p99: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary {
            median: f64::NAN,
            mean: f64::NAN,
            p99: f64::NAN,
        };
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
    Summary {
        median,
        mean: v.iter().sum::<f64>() / n as f64,
        p99: v[rank - 1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn q_error_examples() {
        assert_eq!(q_error(10.0, 10.0), 1.0);
        assert_eq!(q_error(5.0, 20.0), 4.0);
        assert_eq!(q_error(20.0, 5.0), 4.0);
        assert_eq!(q_error(0.0, 8.0), 8.0);
        assert_eq!(q_error(-3.0, 0.0), 1.0);
    }

    fn queries(n: usize) -> Vec<Query> {
        (0..n)
            .map(|i| Query::parse("t", &format!("x = {i}")).unwrap())
            .collect()
    }

    #[test]
    fn q_cost_examples() {
        let w = queries(4);
        let weights = WorkloadWeights::uniform(4);
        let cost = |_: &Query, idx: &IndexConfig| if idx.is_built(0) { 50.0 } else { 100.0 };
        assert_eq!(q_cost(&w, &weights, &IndexConfig::empty(2), cost).unwrap(), 1.0);
        assert_eq!(q_cost(&w, &weights, &IndexConfig::with(2, &[0]), cost).unwrap(), 0.5);
        assert!(q_cost(&w, &WorkloadWeights::uniform(3), &IndexConfig::empty(2), cost).is_err());
    }

    #[test]
    fn weights_normalize() {
        let w = WorkloadWeights::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        assert!(WorkloadWeights::new(vec![0.0, 0.0]).is_err());
        assert!(WorkloadWeights::new(vec![-1.0, 2.0]).is_err());
    }

    #[test]
    fn reward_examples() {
        assert_eq!(rl_reward(1.0), 0.0);
        assert_eq!(rl_reward(0.5), 0.5);
        assert_eq!(rl_reward(0.0), 1.0);
    }

    #[test]
    fn summary_of_small_sample() {
        let s = summarize(&[1.0, 3.0, 2.0, 10.0]);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.p99, 10.0);
    }

    proptest! {
        #[test]
        fn q_error_symmetric_and_at_least_one(e in 0.0f64..1e9, a in 0.0f64..1e9) {
            let q = q_error(e, a);
            prop_assert_eq!(q, q_error(a, e));
            prop_assert!(q >= 1.0);
            if e >= 1.0 && a >= 1.0 {
                prop_assert_eq!(q == 1.0, e == a);
            }
        }
    }
}
