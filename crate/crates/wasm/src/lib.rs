//! Three interactive operations for the static demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested natively.

use eelearn::eerl::{attenuate, Direction, ExplorationSchedule};
use eelearn::metrics::{q_error, summarize};
use eelearn::sea::{choose, theorem_bound, Chosen};
use eelearn::synthdb::{generate_table, CardinalityEstimator, ColumnSpec, Distribution, TableSpec, TableStats};
use eelearn::workload::{generate_queries, random_templates};
use wasm_bindgen::prelude::*;

#[allow(clippy::too_many_arguments)]
/// α at `points` evenly spaced iterations in `[0, iters]`.
pub fn attenuation_points(
    alpha0: f64,
    beta: f64,
    w: f64,
    c1: u32,
    c2: u32,
    decrease: bool,
    iters: u32,
    points: u32,
) -> Result<Vec<f64>, String> {
    let direction = if decrease {
        Direction::Decrease
    } else {
        Direction::Increase
    };
    let s = ExplorationSchedule::new(alpha0, beta, w, c1.into(), c2.into(), direction).map_err(|e| e.to_string())?;
    let n = points.max(2) as u64;
    Ok((0..n).map(|i| attenuate(&s, i * u64::from(iters) / (n - 1))).collect())
}

/// `[credibility, learned chosen (1/0), solution, error of solution,
/// bound]` where errors are relative to `c_star` and the bound is taken with
/// the rule's own error.
pub fn gate_values(c_learned: f64, c_rule: f64, c_star: f64, d: f64) -> Result<Vec<f64>, String> {
    if c_star.is_nan() || c_star <= 0.0 {
        return Err(format!("true cost must be > 0, got {c_star}"));
    }
    let dec = choose(c_learned, c_rule, d).map_err(|e| e.to_string())?;
    let eps = (c_rule - c_star).abs() / c_star;
    let sol = dec.solution();
    Ok(vec![
        dec.credibility,
        f64::from(u8::from(dec.chosen == Chosen::Learned)),
        sol,
        (sol - c_star).abs() / c_star,
        theorem_bound(d, eps),
    ])
}

/// Median, mean and p99 q-error of the histogram rule with `buckets`
/// buckets over `queries` random range queries on a skewed table.
pub fn histogram_summary(buckets: u32, rows: u32, queries: u32, seed: u64) -> Result<Vec<f64>, String> {
    let spec = TableSpec::new(
        "demo",
        vec![
            ColumnSpec::new("a", Distribution::Zipf { s: 1.1 }, 1, 200),
            ColumnSpec::new(
                "b",
                Distribution::Gaussian {
                    mean: 50.0,
                    stddev: 15.0,
                },
                1,
                100,
            ),
            ColumnSpec::new("c", Distribution::Uniform, 1, 500),
        ],
        rows as usize,
    );
    let err = |e: eelearn::Error| e.to_string();
    let table = generate_table(&spec, seed).map_err(err)?;
    let stats = TableStats::analyze(&table, buckets as usize).map_err(err)?;
    let templates = random_templates(&spec, 10, seed);
    let batch = generate_queries(&templates, &table, queries as usize, seed).map_err(err)?;
    let mut errs = Vec::with_capacity(batch.len());
    for q in &batch {
        let est = stats.estimate(q).map_err(err)?;
        let actual = table.exact_cardinality(q).map_err(err)?;
        errs.push(q_error(est, actual as f64));
    }
    let s = summarize(&errs);
    Ok(vec![s.median, s.mean, s.p99])
}

#[wasm_bindgen(js_name = attenuationCurve)]
#[allow(clippy::too_many_arguments)]
pub fn attenuation_curve(
    alpha0: f64,
    beta: f64,
    w: f64,
    c1: u32,
    c2: u32,
    decrease: bool,
    iters: u32,
    points: u32,
) -> Result<Vec<f64>, JsError> {
    attenuation_points(alpha0, beta, w, c1, c2, decrease, iters, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gate)]
pub fn gate(c_learned: f64, c_rule: f64, c_star: f64, d: f64) -> Result<Vec<f64>, JsError> {
    gate_values(c_learned, c_rule, c_star, d).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = histogramQError)]
pub fn histogram_q_error(buckets: u32, rows: u32, queries: u32, seed: u64) -> Result<Vec<f64>, JsError> {
    histogram_summary(buckets, rows, queries, seed).map_err(|e| JsError::new(&e))
}
