//! Queries, query templates, featurization and workload profiling.
//!
//! Text grammar (one query or template per line):
//!
//! ```text
//! query    := '*' | pred ( ' AND ' pred )*
//! pred     := column ' ' op ' ' value [ ' ' value ]
//! op       := '=' | '<=' | '>=' | 'between'
//! ```
//!
//! Templates use the same grammar with sampling rules in value position:
//! an integer literal is fixed, `?` draws uniformly over the column domain,
//! and `$`, `$+k`, `$-k` take the value of a randomly drawn anchor row
//! (shared by all slots of one query) shifted by `k`. A template line may be
//! prefixed with `table:` to target a specific table.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::synthdb::{ColumnRef, Database, Table, TableSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Eq(i64),
    Le(i64),
    Ge(i64),
    /// Inclusive on both ends.
    Between(i64, i64),
}

impl Op {
    pub fn matches(&self, v: i64) -> bool {
        match *self {
            Op::Eq(x) => v == x,
            Op::Le(x) => v <= x,
            Op::Ge(x) => v >= x,
            Op::Between(lo, hi) => lo <= v && v <= hi,
        }
    }

    /// Inclusive `(lower, upper)` bounds; `None` means unbounded.
    pub fn bounds(&self) -> (Option<i64>, Option<i64>) {
        match *self {
            Op::Eq(x) => (Some(x), Some(x)),
            Op::Le(x) => (None, Some(x)),
            Op::Ge(x) => (Some(x), None),
            Op::Between(lo, hi) => (Some(lo), Some(hi)),
        }
    }

    pub fn is_equality(&self) -> bool {
        matches!(self, Op::Eq(_))
    }

    fn symbol(&self) -> &'static str {
        match self {
            Op::Eq(_) => "=",
            Op::Le(_) => "<=",
            Op::Ge(_) => ">=",
            Op::Between(..) => "between",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub column: String,
    pub op: Op,
}

impl Predicate {
    pub fn new(column: impl Into<String>, op: Op) -> Self {
        Predicate {
            column: column.into(),
            op,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            Op::Eq(v) | Op::Le(v) | Op::Ge(v) => write!(f, "{} {} {}", self.column, self.op.symbol(), v),
            Op::Between(lo, hi) => write!(f, "{} between {} {}", self.column, lo, hi),
        }
    }
}

/// A single-table conjunction of predicates, at most one per column.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub table: String,
    pub predicates: Vec<Predicate>,
}

impl Query {
    pub fn new(table: impl Into<String>, predicates: Vec<Predicate>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &predicates {
            if !seen.insert(p.column.as_str()) {
                return Err(Error::invalid(
                    "predicates",
                    format!("column `{}` predicated twice", p.column),
                ));
            }
            if let Op::Between(lo, hi) = p.op {
                if lo > hi {
                    return Err(Error::invalid(
                        "predicates",
                        format!("between bounds out of order on `{}`", p.column),
                    ));
                }
            }
        }
        Ok(Query {
            table: table.into(),
            predicates,
        })
    }

    pub fn unconstrained(table: impl Into<String>) -> Self {
        Query {
            table: table.into(),
            predicates: Vec::new(),
        }
    }

    /// Same query with predicates ordered by column name.
    pub fn canonical(&self) -> Query {
        let mut predicates = self.predicates.clone();
        predicates.sort_by(|a, b| a.column.cmp(&b.column));
        Query {
            table: self.table.clone(),
            predicates,
        }
    }

    /// Order-insensitive equality of the predicate sets (and table).
    pub fn same_as(&self, other: &Query) -> bool {
        self.table == other.table
            && self.predicates.len() == other.predicates.len()
            && self.canonical().predicates == other.canonical().predicates
    }

    pub fn predicate_on(&self, column: &str) -> Option<&Op> {
        self.predicates.iter().find(|p| p.column == column).map(|p| &p.op)
    }

    pub fn parse(table: &str, line: &str) -> Result<Query> {
        Self::parse_at(table, line, 1)
    }

    fn parse_at(table: &str, line: &str, lineno: usize) -> Result<Query> {
        let line = line.trim();
        if line == "*" {
            return Ok(Query::unconstrained(table));
        }
        let mut predicates = Vec::new();
        for part in line.split(" AND ") {
            let toks: Vec<&str> = part.split_whitespace().collect();
            let err = |msg: &str| Error::Parse {
                line: lineno,
                msg: format!("{msg} in `{part}`"),
            };
            let int = |s: &str| s.parse::<i64>().map_err(|_| err("bad integer"));
            let op = match toks.as_slice() {
                [_, "=", v] => Op::Eq(int(v)?),
                [_, "<=", v] => Op::Le(int(v)?),
                [_, ">=", v] => Op::Ge(int(v)?),
                [_, "between", a, b] => Op::Between(int(a)?, int(b)?),
                _ => return Err(err("malformed predicate")),
            };
            predicates.push(Predicate::new(toks[0], op));
        }
        Query::new(table, predicates).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicates.is_empty() {
            return f.write_str("*");
        }
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

pub fn parse_queries(table: &str, text: &str) -> Result<Vec<Query>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Query::parse_at(table, l, i + 1))
        .collect()
}

pub fn format_queries(queries: &[Query]) -> String {
    let mut out = String::new();
    for q in queries {
        out.push_str(&q.to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Eq,
    Le,
    Ge,
    Between,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueRule {
    Fixed(i64),
    /// Uniform over the column's declared domain.
    Uniform,
    /// The anchor row's value plus an offset.
    Anchor(i64),
}

impl fmt::Display for ValueRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ValueRule::Fixed(v) => write!(f, "{v}"),
            ValueRule::Uniform => f.write_str("?"),
            ValueRule::Anchor(0) => f.write_str("$"),
            ValueRule::Anchor(k) if k > 0 => write!(f, "$+{k}"),
            ValueRule::Anchor(k) => write!(f, "${k}"),
        }
    }
}

impl ValueRule {
    fn parse(s: &str) -> Option<ValueRule> {
        if s == "?" {
            return Some(ValueRule::Uniform);
        }
        if let Some(rest) = s.strip_prefix('$') {
            if rest.is_empty() {
                return Some(ValueRule::Anchor(0));
            }
            let rest = rest.strip_prefix('+').unwrap_or(rest);
            return rest.parse().ok().map(ValueRule::Anchor);
        }
        s.parse().ok().map(ValueRule::Fixed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub column: String,
    pub kind: OpKind,
    pub first: ValueRule,
    /// Upper bound rule, present only for `between`.
    pub second: Option<ValueRule>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryTemplate {
    pub table: String,
    pub slots: Vec<Slot>,
}

impl QueryTemplate {
    pub fn parse(default_table: &str, line: &str) -> Result<QueryTemplate> {
        Self::parse_at(default_table, line, 1)
    }

    fn parse_at(default_table: &str, line: &str, lineno: usize) -> Result<QueryTemplate> {
        let line = line.trim();
        let (table, body) = match line.split_once(':') {
            Some((t, rest)) if !t.contains(' ') => (t.trim(), rest.trim()),
            _ => (default_table, line),
        };
        let mut slots = Vec::new();
        if body != "*" {
            for part in body.split(" AND ") {
                let toks: Vec<&str> = part.split_whitespace().collect();
                let err = |msg: &str| Error::Parse {
                    line: lineno,
                    msg: format!("{msg} in `{part}`"),
                };
                let rule = |s: &str| ValueRule::parse(s).ok_or_else(|| err("bad value rule"));
                let slot = match toks.as_slice() {
                    [c, op @ ("=" | "<=" | ">="), v] => Slot {
                        column: c.to_string(),
                        kind: match *op {
                            "=" => OpKind::Eq,
                            "<=" => OpKind::Le,
                            _ => OpKind::Ge,
                        },
                        first: rule(v)?,
                        second: None,
                    },
                    [c, "between", a, b] => Slot {
                        column: c.to_string(),
                        kind: OpKind::Between,
                        first: rule(a)?,
                        second: Some(rule(b)?),
                    },
                    _ => return Err(err("malformed slot")),
                };
                if slots.iter().any(|s: &Slot| s.column == slot.column) {
                    return Err(err("column used twice"));
                }
                slots.push(slot);
            }
        }
        Ok(QueryTemplate {
            table: table.to_string(),
            slots,
        })
    }

    /// Checks that every slot names a column of `spec`.
    pub fn validate(&self, spec: &TableSpec) -> Result<()> {
        for s in &self.slots {
            if spec.column_index(&s.column).is_none() {
                return Err(Error::UnknownColumn(s.column.clone()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for QueryTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.table)?;
        if self.slots.is_empty() {
            return f.write_str("*");
        }
        for (i, s) in self.slots.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            let op = match s.kind {
                OpKind::Eq => "=",
                OpKind::Le => "<=",
                OpKind::Ge => ">=",
                OpKind::Between => "between",
            };
            write!(f, "{} {} {}", s.column, op, s.first)?;
            if let Some(second) = s.second {
                write!(f, " {second}")?;
            }
        }
        Ok(())
    }
}

pub fn parse_templates(default_table: &str, text: &str) -> Result<Vec<QueryTemplate>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| QueryTemplate::parse_at(default_table, l, i + 1))
        .collect()
}

/// Random data-centered templates over `spec`: predicate arity uniform in
/// 1..=3 (capped by the column count), operators uniform, bounds anchored on
/// a sampled row so every instantiated query matches at least that row.
pub fn random_templates(spec: &TableSpec, count: usize, seed: u64) -> Vec<QueryTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ncols = spec.columns.len();
    (0..count)
        .map(|_| {
            let arity = rng.random_range(1..=ncols.min(3));
            let mut cols: Vec<usize> = (0..ncols).collect();
            for i in 0..arity {
                let j = rng.random_range(i..ncols);
                cols.swap(i, j);
            }
            let mut chosen = cols[..arity].to_vec();
            chosen.sort_unstable();
            let slots = chosen
                .into_iter()
                .map(|ci| {
                    let col = &spec.columns[ci];
                    let span = (col.hi - col.lo).max(1);
                    let pick = rng.random_range(0..4);
                    let mut width = || rng.random_range(0..=(span / 8).max(1));
                    let (kind, first, second) = match pick {
                        0 => (OpKind::Eq, ValueRule::Anchor(0), None),
                        1 => (OpKind::Le, ValueRule::Anchor(width()), None),
                        2 => (OpKind::Ge, ValueRule::Anchor(-width()), None),
                        _ => (
                            OpKind::Between,
                            ValueRule::Anchor(-width()),
                            Some(ValueRule::Anchor(width())),
                        ),
                    };
                    Slot {
                        column: col.name.clone(),
                        kind,
                        first,
                        second,
                    }
                })
                .collect();
            QueryTemplate {
                table: spec.name.clone(),
                slots,
            }
        })
        .collect()
}

fn instantiate(template: &QueryTemplate, table: &Table, rng: &mut ChaCha8Rng) -> Result<Query> {
    let anchor = rng.random_range(0..table.row_count());
    let mut predicates = Vec::with_capacity(template.slots.len());
    for slot in &template.slots {
        let ci = table
            .spec
            .column_index(&slot.column)
            .ok_or_else(|| Error::UnknownColumn(slot.column.clone()))?;
        let col = &table.spec.columns[ci];
        let anchor_value = table.columns[ci][anchor];
        let mut draw = |rule: ValueRule| match rule {
            ValueRule::Fixed(v) => v,
            ValueRule::Uniform => rng.random_range(col.lo..=col.hi),
            ValueRule::Anchor(k) => anchor_value.saturating_add(k).clamp(col.lo, col.hi),
        };
        let op = match slot.kind {
            OpKind::Eq => Op::Eq(draw(slot.first)),
            OpKind::Le => Op::Le(draw(slot.first)),
            OpKind::Ge => Op::Ge(draw(slot.first)),
            OpKind::Between => {
                let a = draw(slot.first);
                let b = draw(slot.second.unwrap_or(slot.first));
                Op::Between(a.min(b), a.max(b))
            }
        };
        predicates.push(Predicate::new(slot.column.clone(), op));
    }
    Query::new(table.spec.name.clone(), predicates)
}

/// Draws `n` queries, choosing a template uniformly for each one.
pub fn generate_queries(templates: &[QueryTemplate], table: &Table, n: usize, seed: u64) -> Result<Vec<Query>> {
    if let Some(t) = templates.iter().find(|t| t.table != table.spec.name) {
        return Err(Error::invalid(
            "templates",
            format!("template targets `{}`, not `{}`", t.table, table.spec.name),
        ));
    }
    generate_workload(templates, &Database::single(table.clone()), n, seed)
}

/// Like [`generate_queries`] but templates may target any table of `db`.
pub fn generate_workload(templates: &[QueryTemplate], db: &Database, n: usize, seed: u64) -> Result<Vec<Query>> {
    if templates.is_empty() {
        return Err(Error::invalid("templates", "template list is empty"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let t = &templates[rng.random_range(0..templates.len())];
        let table = db
            .table(&t.table)
            .ok_or_else(|| Error::invalid("templates", format!("unknown table `{}`", t.table)))?;
        out.push(instantiate(t, table, &mut rng)?);
    }
    Ok(out)
}

/// Per-column `(active, lower, upper)` triples, bounds min-max normalized to
/// the column domain.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
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

pub fn featurize(query: &Query, spec: &TableSpec) -> Result<FeatureVector> {
    let mut values: Vec<f64> = spec.columns.iter().flat_map(|_| [0.0, 0.0, 1.0]).collect();
    for p in &query.predicates {
        let ci = spec
            .column_index(&p.column)
            .ok_or_else(|| Error::UnknownColumn(p.column.clone()))?;
        let col = &spec.columns[ci];
        let norm = |v: i64| {
            if col.hi == col.lo {
                0.0
            } else {
                ((v - col.lo) as f64 / (col.hi - col.lo) as f64).clamp(0.0, 1.0)
            }
        };
        let (lo, hi) = p.op.bounds();
        values[3 * ci] = 1.0;
        values[3 * ci + 1] = lo.map_or(0.0, norm);
        values[3 * ci + 2] = hi.map_or(1.0, norm);
    }
    Ok(FeatureVector(values))
}

/// Fraction of `queries` predicating on each of `columns`.
pub fn workload_frequency(queries: &[Query], columns: &[ColumnRef]) -> Vec<f64> {
    let mut counts = vec![0usize; columns.len()];
    for q in queries {
        for (i, c) in columns.iter().enumerate() {
            if q.table == c.table && q.predicate_on(&c.column).is_some() {
                counts[i] += 1;
            }
        }
    }
    if queries.is_empty() {
        return vec![0.0; columns.len()];
    }
    counts.into_iter().map(|c| c as f64 / queries.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdb::{generate_table, ColumnSpec, Distribution};

    fn spec() -> TableSpec {
        TableSpec::new(
            "t",
            vec![
                ColumnSpec::new("x", Distribution::Uniform, 0, 100),
                ColumnSpec::new("y", Distribution::Uniform, 0, 10),
            ],
            1000,
        )
    }

    #[test]
    fn query_text_round_trip() {
        let q = Query::parse("t", "x <= 50 AND y between 2 7").unwrap();
        assert_eq!(q.to_string(), "x <= 50 AND y between 2 7");
        assert_eq!(Query::parse("t", "*").unwrap(), Query::unconstrained("t"));
        assert!(Query::parse("t", "x between 7 2").is_err());
        assert!(Query::parse("t", "x < 3").is_err());
        assert!(Query::parse("t", "x = 1 AND x = 2").is_err());
    }

    #[test]
    fn same_as_ignores_order() {
        let a = Query::parse("t", "x = 1 AND y >= 2").unwrap();
        let b = Query::parse("t", "y >= 2 AND x = 1").unwrap();
        let c = Query::parse("t", "y >= 3 AND x = 1").unwrap();
        assert!(a.same_as(&b));
        assert!(!a.same_as(&c));
    }

    #[test]
    fn template_parse_and_display() {
        let t = QueryTemplate::parse("t", "x between $-5 $+5 AND y = ?").unwrap();
        assert_eq!(t.to_string(), "t: x between $-5 $+5 AND y = ?");
        assert_eq!(QueryTemplate::parse("t", &t.to_string()).unwrap(), t);
        let other = QueryTemplate::parse("t", "orders: o_date >= 3").unwrap();
        assert_eq!(other.table, "orders");
        assert!(QueryTemplate::parse("t", "x = ?? ").is_err());
    }

    #[test]
    fn single_fixed_template_yields_that_query() {
        let table = generate_table(&spec(), 1).unwrap();
        let t = QueryTemplate::parse("t", "x <= 40 AND y = 3").unwrap();
        let qs = generate_queries(&[t], &table, 1, 9).unwrap();
        assert_eq!(qs, vec![Query::parse("t", "x <= 40 AND y = 3").unwrap()]);
    }

    #[test]
    fn generation_is_deterministic() {
        let table = generate_table(&spec(), 1).unwrap();
        let ts = random_templates(&table.spec, 5, 3);
        let a = generate_queries(&ts, &table, 50, 11).unwrap();
        let b = generate_queries(&ts, &table, 50, 11).unwrap();
        assert_eq!(a, b);
        assert!(generate_queries(&[], &table, 5, 1).is_err());
        assert!(generate_queries(&ts, &table, 0, 1).is_err());
    }

    #[test]
    fn template_choice_is_uniform() {
        // 10K draws over two templates: each count ~ Binomial(10000, 0.5),
        // sigma = 50, so +-5 sigma = +-250.
        let table = generate_table(&spec(), 1).unwrap();
        let ts = vec![
            QueryTemplate::parse("t", "x = ?").unwrap(),
            QueryTemplate::parse("t", "y = ?").unwrap(),
        ];
        let qs = generate_queries(&ts, &table, 10_000, 5).unwrap();
        let on_x = qs.iter().filter(|q| q.predicate_on("x").is_some()).count();
        assert!((on_x as i64 - 5000).abs() <= 250, "x count {on_x}");
    }

    #[test]
    fn anchored_queries_match_at_least_one_row() {
        let table = generate_table(&spec(), 4).unwrap();
        let ts = random_templates(&table.spec, 20, 8);
        for q in generate_queries(&ts, &table, 200, 2).unwrap() {
            assert!(table.exact_cardinality(&q).unwrap() >= 1, "{q}");
        }
    }

    #[test]
    fn featurize_examples() {
        let s = spec();
        let empty = featurize(&Query::unconstrained("t"), &s).unwrap();
        assert_eq!(empty.0, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let q = Query::parse("t", "x = 0").unwrap();
        assert_eq!(&featurize(&q, &s).unwrap().0[..3], &[1.0, 0.0, 0.0]);
        let q = Query::parse("t", "x between 25 75").unwrap();
        assert_eq!(&featurize(&q, &s).unwrap().0[..3], &[1.0, 0.25, 0.75]);
        let q = Query::parse("t", "y <= 5 AND x >= 10").unwrap();
        assert_eq!(featurize(&q, &s).unwrap().0, vec![1.0, 0.1, 1.0, 1.0, 0.0, 0.5]);
        assert!(featurize(&Query::parse("t", "z = 1").unwrap(), &s).is_err());
    }

    #[test]
    fn frequency_examples() {
        let cols = vec![ColumnRef::new("t", "x"), ColumnRef::new("t", "y")];
        assert_eq!(workload_frequency(&[], &cols), vec![0.0, 0.0]);
        let only_x = vec![Query::parse("t", "x = 1").unwrap(); 4];
        assert_eq!(workload_frequency(&only_x, &cols), vec![1.0, 0.0]);
        let mixed = vec![Query::parse("t", "x = 1").unwrap(), Query::parse("t", "y = 1").unwrap()];
        assert_eq!(workload_frequency(&mixed, &cols), vec![0.5, 0.5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn features_in_unit_interval(x in -10i64..120, lo in 0i64..10, w in 0i64..10) {
                let q = Query::new("t", vec![
                    Predicate::new("x", Op::Le(x)),
                    Predicate::new("y", Op::Between(lo, lo + w)),
                ]).unwrap();
                let f = featurize(&q, &spec()).unwrap();
                prop_assert_eq!(f.len(), 6);
                prop_assert!(f.0.iter().all(|v| (0.0..=1.0).contains(v)));
            }

            #[test]
            fn featurize_injective_on_distinct_bounds(a in 0i64..=100, b in 0i64..=100) {
                prop_assume!(a != b);
                let qa = Query::new("t", vec![Predicate::new("x", Op::Ge(a))]).unwrap();
                let qb = Query::new("t", vec![Predicate::new("x", Op::Ge(b))]).unwrap();
                prop_assert_ne!(featurize(&qa, &spec()).unwrap(), featurize(&qb, &spec()).unwrap());
            }

            #[test]
            fn frequency_bounds(picks in proptest::collection::vec(0usize..4, 0..40)) {
                let cols = vec![ColumnRef::new("t", "x"), ColumnRef::new("t", "y")];
                let qs: Vec<Query> = picks.iter().map(|p| match p {
                    0 => Query::unconstrained("t"),
                    1 => Query::parse("t", "x = 1").unwrap(),
                    2 => Query::parse("t", "y = 1").unwrap(),
                    _ => Query::parse("t", "x = 1 AND y = 2").unwrap(),
                }).collect();
                let f = workload_frequency(&qs, &cols);
                prop_assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(f.iter().sum::<f64>() <= cols.len() as f64);
            }
        }
    }
}
