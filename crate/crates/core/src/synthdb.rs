//! Synthetic single-table relational engine.
//!
//! Integer columns only. Provides seeded table generation, the exact
//! cardinality oracle, equi-width histograms, the two rule-based cardinality
//! estimators, the query log, and an analytic what-if index cost model.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::workload::{Op, Query};
use crate::{Error, Result};

/// Default histogram resolution.
pub const DEFAULT_BUCKETS: usize = 64;
/// Cold-start selectivity of an equality predicate.
pub const COLD_EQ_SELECTIVITY: f64 = 1.0 / 10.0;
/// Cold-start selectivity of a range predicate.
pub const COLD_RANGE_SELECTIVITY: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Zipf { s: f64 },
    Gaussian { mean: f64, stddev: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub distribution: Distribution,
    pub lo: i64,
    pub hi: i64,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, distribution: Distribution, lo: i64, hi: i64) -> Self {
        ColumnSpec {
            name: name.into(),
            distribution,
            lo,
            hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    pub row_count: usize,
}

impl TableSpec {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnSpec>, row_count: usize) -> Self {
        TableSpec {
            name: name.into(),
            columns,
            row_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("name", "table name is empty"));
        }
        if self.row_count < 1 {
            return Err(Error::invalid("row_count", "must be at least 1"));
        }
        if self.columns.is_empty() {
            return Err(Error::invalid("columns", "table has no columns"));
        }
        let mut names = HashSet::new();
        for c in &self.columns {
            let field = |f: &str| format!("columns.{}.{}", c.name, f);
            if !names.insert(c.name.as_str()) {
                return Err(Error::invalid(field("name"), "duplicate column name"));
            }
            if c.lo > c.hi {
                return Err(Error::invalid(field("lo"), format!("lo {} > hi {}", c.lo, c.hi)));
            }
            match c.distribution {
                Distribution::Zipf { s } if !(s > 0.0 && s.is_finite()) => {
                    return Err(Error::invalid(field("distribution.s"), "zipf exponent must be > 0"));
                }
                Distribution::Gaussian { mean, stddev }
                    if !(mean.is_finite() && stddev.is_finite() && stddev >= 0.0) =>
                {
                    return Err(Error::invalid(field("distribution.stddev"), "must be finite and >= 0"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Columnar integer table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub spec: TableSpec,
    pub columns: Vec<Vec<i64>>,
}

pub fn generate_table(spec: &TableSpec, seed: u64) -> Result<Table> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.row_count;
    let columns = spec
        .columns
        .iter()
        .map(|c| -> Result<Vec<i64>> {
            let values = match c.distribution {
                Distribution::Uniform => (0..n).map(|_| rng.random_range(c.lo..=c.hi)).collect(),
                Distribution::Zipf { s } => {
                    let domain = (c.hi - c.lo) as f64 + 1.0;
                    let zipf = Zipf::new(domain, s)
                        .map_err(|e| Error::invalid(format!("columns.{}.distribution", c.name), e.to_string()))?;
                    (0..n)
                        .map(|_| {
                            let rank = zipf.sample(&mut rng) as i64;
                            (c.lo + rank - 1).clamp(c.lo, c.hi)
                        })
                        .collect()
                }
                Distribution::Gaussian { mean, stddev } => {
                    let normal = Normal::new(mean, stddev)
                        .map_err(|e| Error::invalid(format!("columns.{}.distribution", c.name), e.to_string()))?;
                    (0..n)
                        .map(|_| {
                            let v = normal.sample(&mut rng).round();
                            (v.clamp(c.lo as f64, c.hi as f64)) as i64
                        })
                        .collect()
                }
            };
            Ok(values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        spec: spec.clone(),
        columns,
    })
}

impl Table {
    pub fn row_count(&self) -> usize {
        self.spec.row_count
    }

    pub fn column(&self, name: &str) -> Result<&[i64]> {
        self.spec
            .column_index(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Ground truth: rows satisfying every predicate of `query`.
    pub fn exact_cardinality(&self, query: &Query) -> Result<u64> {
        let preds = query
            .predicates
            .iter()
            .map(|p| Ok((self.column(&p.column)?, p.op)))
            .collect::<Result<Vec<(&[i64], Op)>>>()?;
        let mut count = 0u64;
        'rows: for r in 0..self.row_count() {
            for (col, op) in &preds {
                if !op.matches(col[r]) {
                    continue 'rows;
                }
            }
            count += 1;
        }
        Ok(count)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.spec.columns.iter().map(|c| c.name.as_str()))?;
        let mut row = Vec::with_capacity(self.columns.len());
        for r in 0..self.row_count() {
            row.clear();
            row.extend(self.columns.iter().map(|c| c[r].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a table written by [`Table::write_csv`]; header and domains are
    /// checked against `spec`, and `row_count` is taken from the data.
    pub fn read_csv<R: Read>(spec: &TableSpec, r: R) -> Result<Table> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let expected: Vec<&str> = spec.columns.iter().map(|c| c.name.as_str()).collect();
        if header != expected {
            return Err(Error::invalid(
                "header",
                format!("expected {expected:?}, found {header:?}"),
            ));
        }
        let mut columns = vec![Vec::new(); spec.columns.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (ci, cell) in rec.iter().enumerate() {
                let v: i64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    msg: format!("bad integer `{cell}`"),
                })?;
                let c = &spec.columns[ci];
                if v < c.lo || v > c.hi {
                    return Err(Error::Parse {
                        line: i + 2,
                        msg: format!("{v} outside domain of `{}`", c.name),
                    });
                }
                columns[ci].push(v);
            }
        }
        let mut spec = spec.clone();
        spec.row_count = columns[0].len();
        spec.validate()?;
        Ok(Table { spec, columns })
    }
}

/// Equi-width histogram over the observed `[min, max]` of a column. Each
/// integer `v` occupies the unit interval `[v, v + 1)`, so bucket `i` covers
/// `[bounds[i], bounds[i + 1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub column: String,
    pub bucket_count: usize,
    pub bounds: Vec<f64>,
    pub counts: Vec<u64>,
    pub distinct_estimate: u64,
    min: i64,
    max: i64,
}

pub fn build_histogram(table: &Table, column: &str, bucket_count: usize) -> Result<Histogram> {
    if bucket_count < 1 {
        return Err(Error::invalid("bucket_count", "must be at least 1"));
    }
    let values = table.column(column)?;
    let min = *values.iter().min().expect("row_count >= 1");
    let max = *values.iter().max().expect("row_count >= 1");
    let span = (max - min) as i128 + 1;
    let k = bucket_count as i128;
    let mut counts = vec![0u64; bucket_count];
    for &v in values {
        let b = ((v - min) as i128 * k / span) as usize;
        counts[b] += 1;
    }
    let bounds = (0..=bucket_count)
        .map(|i| min as f64 + i as f64 * span as f64 / bucket_count as f64)
        .collect();
    let distinct_estimate = values.iter().collect::<HashSet<_>>().len() as u64;
    Ok(Histogram {
        column: column.to_string(),
        bucket_count,
        bounds,
        counts,
        distinct_estimate,
        min,
        max,
    })
}

impl Histogram {
    pub fn row_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn span(&self) -> f64 {
        (self.max - self.min) as f64 + 1.0
    }

    /// Estimated fraction of rows satisfying `op`.
    pub fn selectivity(&self, op: &Op) -> f64 {
        (self.matching_rows(op) / self.row_count() as f64).clamp(0.0, 1.0)
    }

    /// Estimated number of analyzed rows satisfying `op`.
    pub fn matching_rows(&self, op: &Op) -> f64 {
        let total = self.row_count() as f64;
        match *op {
            Op::Eq(v) => {
                if v < self.min || v > self.max {
                    return 0.0;
                }
                let span = self.span() as i128;
                let b = ((v - self.min) as i128 * self.bucket_count as i128 / span) as usize;
                let width = self.bounds[b + 1] - self.bounds[b];
                // Distinct values expected in this bucket, assuming distinct
                // values spread evenly over the span. Reduces to
                // 1 / distinct_estimate when buckets are equally full.
                let values_here = (self.distinct_estimate as f64 * width / self.span()).max(1.0);
                (self.counts[b] as f64 / values_here).clamp(0.0, total)
            }
            _ => {
                let (lo, hi) = op.bounds();
                let lo = lo.map_or(f64::NEG_INFINITY, |v| v as f64);
                let hi = hi.map_or(f64::INFINITY, |v| v as f64 + 1.0);
                let mut rows = 0.0;
                for b in 0..self.bucket_count {
                    let (bl, bh) = (self.bounds[b], self.bounds[b + 1]);
                    let overlap = hi.min(bh) - lo.max(bl);
                    if overlap > 0.0 {
                        rows += self.counts[b] as f64 * (overlap / (bh - bl)).min(1.0);
                    }
                }
                rows.clamp(0.0, total)
            }
        }
    }
}

/// Histogram estimate under attribute independence, clamped to
/// `[0, row_count]`.
pub fn estimate_cardinality_rule(stats: &[Histogram], row_count: u64, query: &Query) -> Result<f64> {
    let mut est = row_count as f64;
    for (i, p) in query.predicates.iter().enumerate() {
        let h = stats
            .iter()
            .find(|h| h.column == p.column)
            .ok_or_else(|| Error::MissingHistogram(p.column.clone()))?;
        // Scaling the first column's row count, rather than multiplying a
        // selectivity back up, keeps single-predicate estimates exact.
        est = if i == 0 {
            h.matching_rows(&p.op) * (row_count as f64 / h.row_count() as f64)
        } else {
            est * h.selectivity(&p.op)
        };
    }
    Ok(est.clamp(0.0, row_count as f64))
}

/// Fixed default selectivities, no statistics required.
pub fn estimate_cardinality_coldstart(query: &Query, row_count: u64) -> f64 {
    let sel: f64 = query
        .predicates
        .iter()
        .map(|p| {
            if p.op.is_equality() {
                COLD_EQ_SELECTIVITY
            } else {
                COLD_RANGE_SELECTIVITY
            }
        })
        .product();
    row_count as f64 * sel
}

/// Anything that can produce a cardinality estimate for a query.
pub trait CardinalityEstimator {
    fn estimate(&self, query: &Query) -> Result<f64>;
}

/// Per-table statistics: row count plus one histogram per column, in column
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct TableStats {
    pub table: String,
    pub row_count: u64,
    pub histograms: Vec<Histogram>,
}

impl TableStats {
    pub fn analyze(table: &Table, bucket_count: usize) -> Result<TableStats> {
        let histograms = table
            .spec
            .columns
            .iter()
            .map(|c| build_histogram(table, &c.name, bucket_count))
            .collect::<Result<_>>()?;
        Ok(TableStats {
            table: table.spec.name.clone(),
            row_count: table.row_count() as u64,
            histograms,
        })
    }

    pub fn histogram(&self, column: &str) -> Option<&Histogram> {
        self.histograms.iter().find(|h| h.column == column)
    }
}

impl CardinalityEstimator for TableStats {
    fn estimate(&self, query: &Query) -> Result<f64> {
        estimate_cardinality_rule(&self.histograms, self.row_count, query)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColdStart {
    pub row_count: u64,
}

impl CardinalityEstimator for ColdStart {
    fn estimate(&self, query: &Query) -> Result<f64> {
        Ok(estimate_cardinality_coldstart(query, self.row_count))
    }
}

/// Bitmap of built single-column indexes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexConfig {
    pub built: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexAction {
    Build(usize),
    Drop(usize),
    NoOp,
}

impl fmt::Display for IndexAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexAction::Build(c) => write!(f, "build:{c}"),
            IndexAction::Drop(c) => write!(f, "drop:{c}"),
            IndexAction::NoOp => f.write_str("noop"),
        }
    }
}

impl IndexConfig {
    pub fn empty(columns: usize) -> Self {
        IndexConfig {
            built: vec![false; columns],
        }
    }

    pub fn with(columns: usize, built: &[usize]) -> Self {
        let mut cfg = Self::empty(columns);
        for &c in built {
            cfg.built[c] = true;
        }
        cfg
    }

    pub fn len(&self) -> usize {
        self.built.len()
    }

    pub fn is_empty(&self) -> bool {
        self.built.is_empty()
    }

    pub fn is_built(&self, column: usize) -> bool {
        self.built.get(column).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.built.iter().filter(|b| **b).count()
    }

    /// Applies a revision; building a built index or dropping an absent one
    /// leaves the config unchanged.
    pub fn apply(&self, action: IndexAction) -> IndexConfig {
        let mut next = self.clone();
        match action {
            IndexAction::Build(c) => next.built[c] = true,
            IndexAction::Drop(c) => next.built[c] = false,
            IndexAction::NoOp => {}
        }
        next
    }

    /// Whether `other` has every index of `self`.
    pub fn is_subset_of(&self, other: &IndexConfig) -> bool {
        self.built.iter().zip(&other.built).all(|(a, b)| !a || *b)
    }
}

impl fmt::Display for IndexConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.built {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Analytic what-if cost of `query` under `idx`, whose bits align with
/// `stats` (one histogram per column). A full scan costs `row_count`; an
/// index probe on the most selective indexed predicate column costs
/// `max(1, s * row_count) + ceil(log2(row_count))`. The cheaper plan wins.
pub fn whatif_cost(row_count: u64, query: &Query, idx: &IndexConfig, stats: &[Histogram]) -> f64 {
    whatif_cost_bits(row_count, query, &idx.built, stats)
}

pub(crate) fn whatif_cost_bits(row_count: u64, query: &Query, built: &[bool], stats: &[Histogram]) -> f64 {
    let scan = row_count as f64;
    let best = query
        .predicates
        .iter()
        .filter_map(|p| {
            let i = stats.iter().position(|h| h.column == p.column)?;
            built
                .get(i)
                .copied()
                .unwrap_or(false)
                .then(|| stats[i].selectivity(&p.op))
        })
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))));
    match best {
        None => scan,
        Some(s) => {
            let probe = (s * scan).max(1.0) + probe_depth(row_count);
            probe.min(scan)
        }
    }
}

pub fn probe_depth(row_count: u64) -> f64 {
    if row_count <= 1 {
        0.0
    } else {
        (64 - (row_count - 1).leading_zeros()) as f64
    }
}

/// Append-only log of executed queries with their true cardinalities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryLog {
    entries: Vec<(Query, u64)>,
}

impl QueryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, query: Query, true_cardinality: u64) {
        self.entries.push((query, true_cardinality));
    }

    /// Most recent cardinality logged for an identical predicate set.
    pub fn search(&self, query: &Query) -> Option<u64> {
        self.entries
            .iter()
            .rev()
            .find(|(q, _)| q.same_as(query))
            .map(|(_, c)| *c)
    }

    pub fn entries(&self) -> &[(Query, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Database {
    pub tables: Vec<Table>,
}

impl Database {
    pub fn single(table: Table) -> Self {
        Database { tables: vec![table] }
    }

    pub fn generate(specs: &[TableSpec], seed: u64) -> Result<Database> {
        let tables = specs
            .iter()
            .enumerate()
            .map(|(i, s)| generate_table(s, seed.wrapping_add(i as u64)))
            .collect::<Result<_>>()?;
        Ok(Database { tables })
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.spec.name == name)
    }

    /// Every column of every table, in table then column order; this is the
    /// bit layout of a database-wide [`IndexConfig`].
    pub fn columns(&self) -> Vec<ColumnRef> {
        self.tables
            .iter()
            .flat_map(|t| t.spec.columns.iter().map(|c| ColumnRef::new(&t.spec.name, &c.name)))
            .collect()
    }
}

/// Statistics for a whole [`Database`], with database-wide index bits.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    pub tables: Vec<TableStats>,
    offsets: Vec<usize>,
    columns: Vec<ColumnRef>,
}

impl Catalog {
    pub fn analyze(db: &Database, bucket_count: usize) -> Result<Catalog> {
        let tables: Vec<TableStats> = db
            .tables
            .iter()
            .map(|t| TableStats::analyze(t, bucket_count))
            .collect::<Result<_>>()?;
        let mut offsets = Vec::with_capacity(tables.len());
        let mut acc = 0;
        for t in &tables {
            offsets.push(acc);
            acc += t.histograms.len();
        }
        Ok(Catalog {
            tables,
            offsets,
            columns: db.columns(),
        })
    }

    pub fn columns(&self) -> &[ColumnRef] {
        &self.columns
    }

    fn locate(&self, table: &str) -> Option<(usize, &TableStats)> {
        self.tables
            .iter()
            .position(|t| t.table == table)
            .map(|i| (self.offsets[i], &self.tables[i]))
    }

    pub fn whatif_cost(&self, query: &Query, idx: &IndexConfig) -> Result<f64> {
        let (off, stats) = self
            .locate(&query.table)
            .ok_or_else(|| Error::invalid("query.table", format!("unknown table `{}`", query.table)))?;
        let bits = &idx.built[off..off + stats.histograms.len()];
        Ok(whatif_cost_bits(stats.row_count, query, bits, &stats.histograms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Predicate;

    fn one_col(dist: Distribution, lo: i64, hi: i64, rows: usize) -> TableSpec {
        TableSpec::new("t", vec![ColumnSpec::new("x", dist, lo, hi)], rows)
    }

    fn table_of(values: Vec<i64>) -> Table {
        let lo = *values.iter().min().unwrap();
        let hi = *values.iter().max().unwrap();
        Table {
            spec: one_col(Distribution::Uniform, lo, hi, values.len()),
            columns: vec![values],
        }
    }

    fn q(text: &str) -> Query {
        Query::parse("t", text).unwrap()
    }

    #[test]
    fn degenerate_domain() {
        let t = generate_table(&one_col(Distribution::Uniform, 0, 0, 5), 7).unwrap();
        assert_eq!(t.columns[0], vec![0; 5]);
    }

    #[test]
    fn generation_is_byte_identical() {
        let spec = TableSpec::new(
            "t",
            vec![
                ColumnSpec::new("a", Distribution::Zipf { s: 1.2 }, 1, 500),
                ColumnSpec::new(
                    "b",
                    Distribution::Gaussian {
                        mean: 50.0,
                        stddev: 10.0,
                    },
                    0,
                    100,
                ),
            ],
            2000,
        );
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_table(&spec, 3).unwrap().write_csv(&mut a).unwrap();
        generate_table(&spec, 3).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let t = generate_table(&spec, 3).unwrap();
        assert!(t.columns[0].iter().all(|v| (1..=500).contains(v)));
        assert!(t.columns[1].iter().all(|v| (0..=100).contains(v)));
    }

    #[test]
    fn uniform_frequencies_within_five_sigma() {
        // Each value count ~ Binomial(10000, 1/100): mean 100, sigma ~ 9.95.
        let t = generate_table(&one_col(Distribution::Uniform, 1, 100, 10_000), 1).unwrap();
        let mut freq = [0i64; 101];
        for &v in &t.columns[0] {
            freq[v as usize] += 1;
        }
        let sigma = (10_000.0f64 * 0.01 * 0.99).sqrt();
        for (v, &f) in freq.iter().enumerate().skip(1) {
            assert!(((f - 100) as f64).abs() <= 5.0 * sigma, "value {v}: {f}");
        }
        // Pearson chi-square with 99 dof should sit well below 99 + 5*sqrt(198).
        let chi2: f64 = freq[1..].iter().map(|&f| ((f - 100) as f64).powi(2) / 100.0).sum();
        assert!(chi2 < 99.0 + 5.0 * 198f64.sqrt(), "chi2 {chi2}");
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let bad = one_col(Distribution::Uniform, 5, 1, 10);
        let msg = generate_table(&bad, 0).unwrap_err().to_string();
        assert!(msg.contains("columns.x.lo"), "{msg}");
        let msg = one_col(Distribution::Zipf { s: 0.0 }, 1, 9, 10)
            .validate()
            .unwrap_err()
            .to_string();
        assert!(msg.contains("distribution.s"), "{msg}");
        let msg = one_col(Distribution::Uniform, 1, 9, 0)
            .validate()
            .unwrap_err()
            .to_string();
        assert!(msg.contains("row_count"), "{msg}");
        let mut dup = one_col(Distribution::Uniform, 1, 9, 3);
        dup.columns.push(dup.columns[0].clone());
        assert!(dup.validate().unwrap_err().to_string().contains("columns.x.name"));
    }

    #[test]
    fn exact_cardinality_examples() {
        let t = table_of(vec![1, 2, 3]);
        assert_eq!(t.exact_cardinality(&q("*")).unwrap(), 3);
        assert_eq!(t.exact_cardinality(&q("x <= 2")).unwrap(), 2);
        assert!(matches!(t.exact_cardinality(&q("y = 1")), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn exact_cardinality_matches_second_scan() {
        let t = generate_table(&one_col(Distribution::Uniform, 1, 100, 10_000), 1).unwrap();
        let naive = t.columns[0].iter().filter(|&&v| v <= 50).count() as u64;
        assert_eq!(t.exact_cardinality(&q("x <= 50")).unwrap(), naive);
    }

    #[test]
    fn csv_round_trip_and_checks() {
        let t = generate_table(&one_col(Distribution::Uniform, -5, 5, 50), 2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x\n"));
        assert_eq!(Table::read_csv(&t.spec, buf.as_slice()).unwrap(), t);
        let narrow = one_col(Distribution::Uniform, 0, 5, 50);
        assert!(Table::read_csv(&narrow, buf.as_slice()).is_err());
    }

    #[test]
    fn histogram_constant_column() {
        let t = table_of(vec![7; 20]);
        for k in [1, 4, 64] {
            let h = build_histogram(&t, "x", k).unwrap();
            assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
            assert_eq!(h.row_count(), 20);
            assert!(h.bounds.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn histogram_per_value_buckets_equal_group_by() {
        let t = generate_table(&one_col(Distribution::Zipf { s: 1.1 }, 1, 20, 5000), 3).unwrap();
        let vals = &t.columns[0];
        let (min, max) = (*vals.iter().min().unwrap(), *vals.iter().max().unwrap());
        let k = (max - min + 1) as usize;
        let h = build_histogram(&t, "x", k).unwrap();
        for (i, &c) in h.counts.iter().enumerate() {
            let v = min + i as i64;
            assert_eq!(c, vals.iter().filter(|&&x| x == v).count() as u64);
        }
        assert!(build_histogram(&t, "x", 0).is_err());
        assert!(build_histogram(&t, "nope", 4).is_err());
    }

    #[test]
    fn rule_estimate_uniform_range() {
        let t = generate_table(&one_col(Distribution::Uniform, 1, 100, 10_000), 1).unwrap();
        let stats = TableStats::analyze(&t, DEFAULT_BUCKETS).unwrap();
        let est = stats.estimate(&q("x <= 50")).unwrap();
        assert!((est - 5000.0).abs() <= 100.0, "estimate {est}");
        assert_eq!(stats.estimate(&q("*")).unwrap(), 10_000.0);
        assert!(matches!(
            estimate_cardinality_rule(&stats.histograms, 10_000, &q("y = 1")),
            Err(Error::MissingHistogram(_))
        ));
    }

    #[test]
    fn equality_reduces_to_inverse_distinct_when_flat() {
        // Four equally full buckets of five values each.
        let values: Vec<i64> = (0..20).flat_map(|v| std::iter::repeat_n(v, 3)).collect();
        let t = table_of(values);
        let h = build_histogram(&t, "x", 4).unwrap();
        assert!((h.selectivity(&Op::Eq(7)) - 1.0 / 20.0).abs() < 1e-12);
        assert_eq!(h.selectivity(&Op::Eq(99)), 0.0);
    }

    #[test]
    fn coldstart_examples() {
        assert_eq!(estimate_cardinality_coldstart(&q("*"), 1000), 1000.0);
        assert!((estimate_cardinality_coldstart(&q("x <= 3"), 900) - 300.0).abs() < 1e-9);
        let two = Query::new(
            "t",
            vec![Predicate::new("x", Op::Le(3)), Predicate::new("y", Op::Ge(1))],
        )
        .unwrap();
        assert!((estimate_cardinality_coldstart(&two, 900) - 100.0).abs() < 1e-9);
        assert!((estimate_cardinality_coldstart(&q("x = 3"), 900) - 90.0).abs() < 1e-9);
    }

    #[test]
    fn whatif_examples() {
        // No index: full scan.
        let t = generate_table(&one_col(Distribution::Uniform, 1, 100, 1024), 5).unwrap();
        let stats = TableStats::analyze(&t, DEFAULT_BUCKETS).unwrap();
        let none = IndexConfig::empty(1);
        assert_eq!(whatif_cost(1024, &q("x <= 50"), &none, &stats.histograms), 1024.0);

        // Unique column, equality probe: 1 + ceil(log2 n).
        let uniq = table_of((0..1000).collect());
        let us = TableStats::analyze(&uniq, 1000).unwrap();
        let on = IndexConfig::with(1, &[0]);
        let c = whatif_cost(1000, &q("x = 17"), &on, &us.histograms);
        assert_eq!(c, 1.0 + 10.0);

        // Range probe: s * n + ceil(log2 1024) with s from the histogram.
        let s = stats.histograms[0].selectivity(&Op::Le(50));
        let c = whatif_cost(1024, &q("x <= 50"), &on, &stats.histograms);
        assert!((c - (s * 1024.0 + 10.0)).abs() < 1e-9);
        assert!((c - 522.0).abs() < 25.0, "cost {c}");
    }

    #[test]
    fn probe_depth_is_ceil_log2() {
        assert_eq!(probe_depth(1), 0.0);
        assert_eq!(probe_depth(2), 1.0);
        assert_eq!(probe_depth(1024), 10.0);
        assert_eq!(probe_depth(1025), 11.0);
        assert_eq!(probe_depth(100_000), 17.0);
    }

    #[test]
    fn log_search_semantics() {
        let mut log = QueryLog::new();
        assert_eq!(log.search(&q("x = 1")), None);
        log.append(q("x = 1"), 42);
        assert_eq!(log.search(&q("x = 1")), Some(42));
        let a = Query::parse("t", "x = 1 AND y <= 4").unwrap();
        let b = Query::parse("t", "y <= 4 AND x = 1").unwrap();
        log.append(a, 1);
        log.append(b.clone(), 2);
        assert_eq!(log.search(&b), Some(2));
        assert_eq!(log.search(&q("x = 2")), None);
    }

    #[test]
    fn catalog_offsets_align_with_columns() {
        let a = TableSpec::new("a", vec![ColumnSpec::new("p", Distribution::Uniform, 0, 9)], 100);
        let b = TableSpec::new(
            "b",
            vec![
                ColumnSpec::new("q", Distribution::Uniform, 0, 99),
                ColumnSpec::new("r", Distribution::Uniform, 0, 99),
            ],
            100,
        );
        let db = Database::generate(&[a, b], 1).unwrap();
        let cat = Catalog::analyze(&db, 16).unwrap();
        assert_eq!(cat.columns()[2], ColumnRef::new("b", "r"));
        let qr = Query::parse("b", "r = 5").unwrap();
        let none = IndexConfig::empty(3);
        assert_eq!(cat.whatif_cost(&qr, &none).unwrap(), 100.0);
        assert!(cat.whatif_cost(&qr, &IndexConfig::with(3, &[2])).unwrap() < 100.0);
        assert_eq!(cat.whatif_cost(&qr, &IndexConfig::with(3, &[0, 1])).unwrap(), 100.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_table() -> impl Strategy<Value = Table> {
            (1usize..200, any::<u64>()).prop_map(|(n, seed)| {
                let spec = TableSpec::new(
                    "t",
                    vec![
                        ColumnSpec::new("x", Distribution::Uniform, 0, 50),
                        ColumnSpec::new("y", Distribution::Zipf { s: 1.3 }, 1, 40),
                    ],
                    n,
                );
                generate_table(&spec, seed).unwrap()
            })
        }

        fn op() -> impl Strategy<Value = Op> {
            prop_oneof![
                (-5i64..60).prop_map(Op::Eq),
                (-5i64..60).prop_map(Op::Le),
                (-5i64..60).prop_map(Op::Ge),
                (-5i64..60, 0i64..30).prop_map(|(a, w)| Op::Between(a, a + w)),
            ]
        }

        proptest! {
            #[test]
            fn histogram_partitions_rows(t in small_table(), k in 1usize..80) {
                let h = build_histogram(&t, "y", k).unwrap();
                prop_assert_eq!(h.row_count(), t.row_count() as u64);
                prop_assert_eq!(h.counts.len(), h.bucket_count);
                prop_assert!(h.bounds.windows(2).all(|w| w[0] < w[1]));
            }

            #[test]
            fn adding_a_predicate_never_increases_count(t in small_table(), a in op(), b in op()) {
                let one = Query::new("t", vec![Predicate::new("x", a)]).unwrap();
                let two = Query::new("t", vec![Predicate::new("x", a), Predicate::new("y", b)]).unwrap();
                prop_assert!(t.exact_cardinality(&two).unwrap() <= t.exact_cardinality(&one).unwrap());
            }

            #[test]
            fn rule_estimate_in_range(t in small_table(), a in op(), b in op(), k in 1usize..70) {
                let stats = TableStats::analyze(&t, k).unwrap();
                let q = Query::new("t", vec![Predicate::new("x", a), Predicate::new("y", b)]).unwrap();
                let e = stats.estimate(&q).unwrap();
                prop_assert!(e >= 0.0 && e <= t.row_count() as f64);
            }

            #[test]
            fn more_indexes_never_cost_more(t in small_table(), a in op(), b in op(), sub in 0u8..4, extra in 0u8..4) {
                let stats = TableStats::analyze(&t, 16).unwrap();
                let q = Query::new("t", vec![Predicate::new("x", a), Predicate::new("y", b)]).unwrap();
                let small = IndexConfig { built: vec![sub & 1 != 0, sub & 2 != 0] };
                let big = IndexConfig { built: vec![small.built[0] || extra & 1 != 0, small.built[1] || extra & 2 != 0] };
                let n = t.row_count() as u64;
                prop_assert!(whatif_cost(n, &q, &big, &stats.histograms) <= whatif_cost(n, &q, &small, &stats.histograms));
            }
        }
    }
}
