//! Label collection: log search first, then rule labels for generated
//! queries, then a waiting state in which the caller falls back to the rule
//! method until real labels accumulate.

use std::fmt;
use std::io::Write;

use crate::metrics::{q_cost, rl_reward, WorkloadWeights};
use crate::synthdb::{CardinalityEstimator, IndexAction, IndexConfig, QueryLog, Table};
use crate::workload::{featurize, generate_queries, FeatureVector, Query, QueryTemplate};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Log,
    Rule,
    Execution,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Log => "log",
            Provenance::Rule => "rule",
            Provenance::Execution => "execution",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    /// Cardinality.
    pub label: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub examples: Vec<LabeledExample>,
    pub target_size: usize,
    /// Set when every source was exhausted short of `target_size`; callers
    /// should serve tasks with the rule method meanwhile.
    pub waiting: bool,
}

impl TrainingSet {
    pub fn lack(&self) -> bool {
        self.examples.len() < self.target_size
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.examples.iter().filter(|e| e.provenance == provenance).count()
    }

    /// `feature_0,...,feature_k,label,provenance`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let width = self.examples.first().map_or(0, |e| e.features.len());
        let mut header: Vec<String> = (0..width).map(|i| format!("feature_{i}")).collect();
        header.push("label".into());
        header.push("provenance".into());
        out.write_record(&header)?;
        for e in &self.examples {
            let mut row: Vec<String> = e.features.as_slice().iter().map(f64::to_string).collect();
            row.push(e.label.to_string());
            row.push(e.provenance.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A cardinality-estimation task over one table.
#[derive(Clone, Copy, Debug)]
pub struct CardinalityTask<'a> {
    pub table: &'a Table,
}

fn example(task: &CardinalityTask<'_>, q: &Query, label: f64, provenance: Provenance) -> Result<LabeledExample> {
    Ok(LabeledExample {
        features: featurize(q, &task.table.spec)?,
        label,
        provenance,
    })
}

/// Collects up to `target_size` labels for `task`, in priority order: every
/// matching log entry, then rule labels on template-generated queries.
pub fn collect_labels(
    task: &CardinalityTask<'_>,
    log: Option<&QueryLog>,
    rule: Option<&dyn CardinalityEstimator>,
    templates: Option<&[QueryTemplate]>,
    target_size: usize,
    seed: u64,
) -> Result<TrainingSet> {
    if target_size < 1 {
        return Err(Error::invalid("target_size", "must be at least 1"));
    }
    if log.is_none() && rule.is_none() && templates.is_none() {
        return Err(Error::NoLabelSource);
    }
    let mut ts = TrainingSet {
        examples: Vec::new(),
        target_size,
        waiting: false,
    };
    if let Some(log) = log {
        for (q, card) in log.entries() {
            if q.table == task.table.spec.name {
                ts.examples.push(example(task, q, *card as f64, Provenance::Log)?);
            }
        }
    }
    if ts.lack() {
        if let (Some(rule), Some(templates)) = (rule, templates.filter(|t| !t.is_empty())) {
            let missing = target_size - ts.len();
            for q in generate_queries(templates, task.table, missing, seed)? {
                let label = rule.estimate(&q)?;
                ts.examples.push(example(task, &q, label, Provenance::Rule)?);
            }
        }
    }
    ts.waiting = ts.lack();
    Ok(ts)
}

/// Labels `queries` with a rule estimator.
pub fn label_by_rule(queries: &[Query], table: &Table, rule: &dyn CardinalityEstimator) -> Result<TrainingSet> {
    let task = CardinalityTask { table };
    let examples = queries
        .iter()
        .map(|q| example(&task, q, rule.estimate(q)?, Provenance::Rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet {
        target_size: examples.len().max(1),
        waiting: false,
        examples,
    })
}

/// Labels `queries` by running them against `table`.
pub fn label_by_execution(queries: &[Query], table: &Table) -> Result<TrainingSet> {
    let task = CardinalityTask { table };
    let examples = queries
        .iter()
        .map(|q| example(&task, q, table.exact_cardinality(q)? as f64, Provenance::Execution))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet {
        target_size: examples.len().max(1),
        waiting: false,
        examples,
    })
}

/// Reward of applying `action` to `config`, from the what-if cost model over
/// `eval` with uniform weights: `1 - Q-cost`.
pub fn label_single<F>(config: &IndexConfig, action: IndexAction, eval: &[Query], cost_fn: F) -> Result<f64>
where
    F: FnMut(&Query, &IndexConfig) -> f64,
{
    let next = config.apply(action);
    let cost = q_cost(eval, &WorkloadWeights::uniform(eval.len()), &next, cost_fn)?;
    Ok(rl_reward(cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::q_error;
    use crate::synthdb::{generate_table, whatif_cost, ColumnSpec, Distribution, TableSpec, TableStats};
    use crate::workload::random_templates;

    fn table() -> Table {
        let spec = TableSpec::new(
            "t",
            vec![
                ColumnSpec::new("x", Distribution::Uniform, 1, 100),
                ColumnSpec::new("y", Distribution::Zipf { s: 1.2 }, 1, 50),
            ],
            2000,
        );
        generate_table(&spec, 3).unwrap()
    }

    fn log_of(table: &Table, n: usize) -> QueryLog {
        let mut log = QueryLog::new();
        for i in 0..n {
            let q = Query::parse("t", &format!("x <= {}", i % 100 + 1)).unwrap();
            log.append(q.clone(), table.exact_cardinality(&q).unwrap());
        }
        log
    }

    #[test]
    fn log_alone_suffices() {
        let t = table();
        let stats = TableStats::analyze(&t, 64).unwrap();
        let templates = random_templates(&t.spec, 4, 1);
        let log = log_of(&t, 30);
        let ts = collect_labels(
            &CardinalityTask { table: &t },
            Some(&log),
            Some(&stats),
            Some(&templates),
            20,
            0,
        )
        .unwrap();
        assert_eq!(ts.len(), 30);
        assert_eq!(ts.count(Provenance::Log), 30);
        assert!(!ts.waiting);
    }

    #[test]
    fn rule_fills_empty_log() {
        let t = table();
        let stats = TableStats::analyze(&t, 64).unwrap();
        let templates = random_templates(&t.spec, 4, 1);
        let ts = collect_labels(
            &CardinalityTask { table: &t },
            Some(&QueryLog::new()),
            Some(&stats),
            Some(&templates),
            50,
            0,
        )
        .unwrap();
        assert_eq!(ts.len(), 50);
        assert_eq!(ts.count(Provenance::Rule), 50);
        assert!(!ts.waiting);
    }

    #[test]
    fn no_rule_means_waiting() {
        let t = table();
        let ts = collect_labels(
            &CardinalityTask { table: &t },
            Some(&QueryLog::new()),
            None,
            None,
            10,
            0,
        )
        .unwrap();
        assert!(ts.waiting);
        assert!(ts.is_empty());
        assert!(matches!(
            collect_labels(&CardinalityTask { table: &t }, None, None, None, 10, 0),
            Err(Error::NoLabelSource)
        ));
        assert!(collect_labels(&CardinalityTask { table: &t }, Some(&QueryLog::new()), None, None, 0, 0).is_err());
    }

    #[test]
    fn branch_priority_over_all_source_combinations() {
        let t = table();
        let stats = TableStats::analyze(&t, 64).unwrap();
        let templates = random_templates(&t.spec, 4, 1);
        let target = 40;
        let partial_log = log_of(&t, 15);
        for mask in 0..8u8 {
            let (has_log, has_rule, has_tpl) = (mask & 1 != 0, mask & 2 != 0, mask & 4 != 0);
            let res = collect_labels(
                &CardinalityTask { table: &t },
                has_log.then_some(&partial_log),
                has_rule.then_some(&stats as &dyn CardinalityEstimator),
                has_tpl.then_some(templates.as_slice()),
                target,
                7,
            );
            if mask == 0 {
                assert!(matches!(res, Err(Error::NoLabelSource)));
                continue;
            }
            let ts = res.unwrap();
            let logged = if has_log { 15 } else { 0 };
            assert_eq!(ts.count(Provenance::Log), logged, "mask {mask}");
            // Log entries always come first.
            assert!(ts.examples[..logged].iter().all(|e| e.provenance == Provenance::Log));
            let generated = if has_rule && has_tpl { target - logged } else { 0 };
            assert_eq!(ts.count(Provenance::Rule), generated, "mask {mask}");
            assert_eq!(ts.waiting, !(has_rule && has_tpl), "mask {mask}");
        }
    }

    #[test]
    fn execution_labels_are_exact_and_deterministic() {
        let tiny = Table {
            spec: TableSpec::new("t", vec![ColumnSpec::new("x", Distribution::Uniform, 1, 3)], 3),
            columns: vec![vec![1, 2, 3]],
        };
        let q = vec![Query::parse("t", "x >= 2").unwrap()];
        let ts = label_by_execution(&q, &tiny).unwrap();
        assert_eq!(ts.examples[0].label, 2.0);
        assert_eq!(ts.examples[0].provenance, Provenance::Execution);
        assert_eq!(ts, label_by_execution(&q, &tiny).unwrap());
    }

    #[test]
    fn rule_vs_execution_weak_label_quality() {
        let t = table();
        let stats = TableStats::analyze(&t, 64).unwrap();
        let qs = generate_queries(&random_templates(&t.spec, 8, 2), &t, 200, 4).unwrap();
        let weak = label_by_rule(&qs, &t, &stats).unwrap();
        let strong = label_by_execution(&qs, &t).unwrap();
        let errs: Vec<f64> = weak
            .examples
            .iter()
            .zip(&strong.examples)
            .map(|(w, s)| q_error(w.label, s.label))
            .collect();
        assert!(errs.iter().all(|e| *e >= 1.0));
        assert!(weak
            .examples
            .iter()
            .zip(&strong.examples)
            .all(|(w, s)| w.features == s.features));
    }

    #[test]
    fn csv_layout() {
        let tiny = Table {
            spec: TableSpec::new("t", vec![ColumnSpec::new("x", Distribution::Uniform, 0, 4)], 2),
            columns: vec![vec![1, 4]],
        };
        let ts = label_by_execution(&[Query::parse("t", "x <= 2").unwrap()], &tiny).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "feature_0,feature_1,feature_2,label,provenance\n1,0,0.5,1,execution\n"
        );
    }

    #[test]
    fn single_label_rewards() {
        let t = table();
        let stats = TableStats::analyze(&t, 64).unwrap();
        let eval: Vec<Query> = (1..=10)
            .map(|v| Query::parse("t", &format!("x = {v}")).unwrap())
            .collect();
        let cost = |q: &Query, idx: &IndexConfig| whatif_cost(2000, q, idx, &stats.histograms);
        let empty = IndexConfig::empty(2);

        assert!(label_single(&empty, IndexAction::NoOp, &eval, cost).unwrap().abs() < 1e-12);

        // Term-by-term recomputation of the weighted ratio.
        let built = empty.apply(IndexAction::Build(0));
        let expected: f64 = eval
            .iter()
            .map(|q| 0.1 * whatif_cost(2000, q, &built, &stats.histograms) / 2000.0)
            .sum();
        let r = label_single(&empty, IndexAction::Build(0), &eval, cost).unwrap();
        assert!((r - (1.0 - expected)).abs() < 1e-12);
        assert!(r > 0.0);

        // Dropping an index nobody uses changes nothing.
        let with_y = IndexConfig::with(2, &[0, 1]);
        let noop = label_single(&with_y, IndexAction::NoOp, &eval, cost).unwrap();
        let dropped = label_single(&with_y, IndexAction::Drop(1), &eval, cost).unwrap();
        assert_eq!(noop, dropped);
    }
}
