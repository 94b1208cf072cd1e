//! Learned cardinality estimation bootstrapped from rule labels: pretrain on
//! weak labels, serve through the credibility gate, pool the true
//! cardinalities observed after execution and retrain every `interval`
//! tasks.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ekb::{needs_update, FeatureTagVector, KnowledgeBase, RuleMethod, DEFAULT_UPDATE_THRESHOLD};
use crate::elc::{collect_labels, CardinalityTask, LabeledExample, Provenance, TrainingSet};
use crate::learner::{init_model, train_batch, ExperiencePool, Model, Sample};
use crate::metrics::{q_error, summarize, Summary};
use crate::sea::{choose, Chosen, CredibilityDecision};
use crate::synthdb::{CardinalityEstimator, ColdStart, QueryLog, Table, TableStats, DEFAULT_BUCKETS};
use crate::workload::{featurize, generate_queries, Query, QueryTemplate};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EedlConfig {
    /// Credibility bound; `inf` disables the gate.
    pub d: f64,
    /// Retrain interval in processed tasks.
    pub interval: usize,
    pub pretrain_size: usize,
    pub pretrain_epochs: usize,
    pub stream_len: usize,
    pub heldout: usize,
    pub pool_capacity: usize,
    pub minibatch: usize,
    /// Minibatch steps per processed task; a retrain runs
    /// `round(interval * retrain_steps_per_task)` steps (at least one), so
    /// total retraining compute does not depend on the interval.
    pub retrain_steps_per_task: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Similarity below which the rule method is re-matched.
    pub update_threshold: f64,
}

impl Default for EedlConfig {
    fn default() -> Self {
        EedlConfig {
            d: 0.5,
            interval: 500,
            pretrain_size: 5000,
            pretrain_epochs: 60,
            stream_len: 2000,
            heldout: 1000,
            pool_capacity: 10_000,
            minibatch: 64,
            retrain_steps_per_task: 0.4,
            learning_rate: 0.005,
            hidden: vec![64],
            update_threshold: DEFAULT_UPDATE_THRESHOLD,
        }
    }
}

impl EedlConfig {
    pub fn retrain_steps(&self) -> usize {
        ((self.interval as f64 * self.retrain_steps_per_task).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.retrain_steps_per_task.is_finite() && self.retrain_steps_per_task > 0.0) {
            return Err(Error::invalid("retrain_steps_per_task", "must be > 0"));
        }
        if !(self.d >= 0.0) {
            return Err(Error::invalid("d", "must be >= 0"));
        }
        if self.interval < 1 {
            return Err(Error::invalid("interval", "must be >= 1"));
        }
        if self.pretrain_size < 1 {
            return Err(Error::invalid("pretrain_size", "must be >= 1"));
        }
        if self.minibatch < 1 {
            return Err(Error::invalid("minibatch", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// A network over query features that regresses log-cardinality.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedEstimator {
    pub model: Model,
    pub table: String,
    pub spec: crate::synthdb::TableSpec,
}

fn log_label(card: f64) -> f64 {
    card.max(1.0).ln()
}

impl LearnedEstimator {
    pub fn new(spec: &crate::synthdb::TableSpec, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut dims = vec![3 * spec.columns.len()];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Ok(LearnedEstimator {
            model: init_model(&dims, seed)?,
            table: spec.name.clone(),
            spec: spec.clone(),
        })
    }

    pub fn sample(example: &LabeledExample) -> Sample {
        Sample::regression(example.features.0.clone(), log_label(example.label))
    }

    fn fit(&mut self, samples: &[&Sample], lr: f64) -> Result<f64> {
        let batch: Vec<Sample> = samples.iter().map(|s| (*s).clone()).collect();
        train_batch(&mut self.model, &batch, lr)
    }
}

impl CardinalityEstimator for LearnedEstimator {
    /// `exp` of the regressed log-cardinality, clamped to `[1, rows]`.
    fn estimate(&self, query: &Query) -> Result<f64> {
        let x = featurize(query, &self.spec)?;
        let y = self.model.predict(x.as_slice())?[0];
        Ok(y.exp().clamp(1.0, (self.spec.row_count as f64).max(1.0)))
    }
}

/// Fits `ts` for a fixed number of epochs, starting from the mean target.
pub fn pretrain(
    estimator: &mut LearnedEstimator,
    ts: &TrainingSet,
    config: &EedlConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if ts.is_empty() {
        return Err(Error::invalid("training set", "empty; no labels to pretrain on"));
    }
    let samples: Vec<Sample> = ts.examples.iter().map(LearnedEstimator::sample).collect();
    let mean = samples.iter().map(|s| s.target).sum::<f64>() / samples.len() as f64;
    if let Some(out) = estimator.model.layers.last_mut() {
        out.bias[0] = mean;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(config.pretrain_epochs);
    for _ in 0..config.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.minibatch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            total += estimator.fit(&batch, config.learning_rate)? * chunk.len() as f64;
        }
        losses.push(total / samples.len() as f64);
    }
    Ok(losses)
}

/// [`EedlConfig::retrain_steps`] minibatch steps on pooled true labels. An empty pool
/// skips retraining and returns `None`.
pub fn retrain(
    estimator: &mut LearnedEstimator,
    pool: &ExperiencePool<Sample>,
    config: &EedlConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    if pool.is_empty() {
        return Ok(None);
    }
    let mut last = 0.0;
    for _ in 0..config.retrain_steps() {
        let batch = pool.sample(config.minibatch, rng)?;
        last = estimator.fit(&batch, config.learning_rate)?;
    }
    Ok(Some(last))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inference {
    pub estimate: f64,
    pub decision: CredibilityDecision,
    /// The selected rule failed and the cold-start estimate stood in.
    pub fallback: bool,
}

/// Gated estimate for one query. Both estimates are floored at one row, the
/// same floor the q-error uses.
pub fn infer(
    query: &Query,
    learned: &dyn CardinalityEstimator,
    rule: &dyn CardinalityEstimator,
    row_count: u64,
    d: f64,
) -> Result<Inference> {
    let (c_rule, fallback) = match rule.estimate(query) {
        Ok(v) => (v, false),
        Err(_) => (ColdStart { row_count }.estimate(query)?, true),
    };
    let c_learned = learned.estimate(query)?.max(1.0);
    let decision = choose(c_learned, c_rule.max(1.0), d)?;
    Ok(Inference {
        estimate: decision.solution(),
        decision,
        fallback,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineRecord {
    pub task: usize,
    pub query: Query,
    pub c_rule: f64,
    pub c_learned: f64,
    pub credibility: f64,
    pub chosen: Chosen,
    pub fallback: bool,
    pub actual: f64,
    pub q_error: f64,
}

/// Held-out accuracy after pretraining (window 0) and after each retrain.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrainRecord {
    pub window: usize,
    pub tasks: usize,
    pub pool_size: usize,
    pub method: String,
    /// Gated estimates.
    pub gated: Summary,
    /// Network alone.
    pub learned: Summary,
    pub learned_share: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineRun {
    pub records: Vec<OnlineRecord>,
    pub history: Vec<RetrainRecord>,
    pub provenance: Vec<(Provenance, usize)>,
}

impl OnlineRun {
    pub fn retrains(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn write_records<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "task",
            "query",
            "c_rule",
            "c_learned",
            "credibility",
            "chosen",
            "fallback",
            "actual",
            "q_error",
        ])?;
        for r in &self.records {
            out.write_record([
                r.task.to_string(),
                r.query.to_string(),
                r.c_rule.to_string(),
                r.c_learned.to_string(),
                r.credibility.to_string(),
                r.chosen.to_string(),
                r.fallback.to_string(),
                r.actual.to_string(),
                r.q_error.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_history<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "window",
            "tasks",
            "pool_size",
            "method",
            "median",
            "mean",
            "p99",
            "learned_median",
            "learned_mean",
            "learned_p99",
            "learned_share",
        ])?;
        for h in &self.history {
            out.write_record([
                h.window.to_string(),
                h.tasks.to_string(),
                h.pool_size.to_string(),
                h.method.clone(),
                h.gated.median.to_string(),
                h.gated.mean.to_string(),
                h.gated.p99.to_string(),
                h.learned.median.to_string(),
                h.learned.mean.to_string(),
                h.learned.p99.to_string(),
                h.learned_share.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Workload and demand switch at a given task.
#[derive(Clone, Debug, PartialEq)]
pub struct Drift {
    pub at: usize,
    pub templates: Vec<QueryTemplate>,
    pub demand: FeatureTagVector,
}

/// Everything one online run needs besides the config.
#[derive(Clone, Debug)]
pub struct Scenario<'a> {
    pub table: &'a Table,
    pub templates: &'a [QueryTemplate],
    pub kb: &'a KnowledgeBase,
    pub demand: FeatureTagVector,
    pub log: Option<&'a QueryLog>,
    pub drift: Option<Drift>,
}

impl<'a> Scenario<'a> {
    pub fn new(table: &'a Table, templates: &'a [QueryTemplate], kb: &'a KnowledgeBase) -> Self {
        Scenario {
            table,
            templates,
            kb,
            demand: "cardinality accuracy relational online multi"
                .parse()
                .expect("valid tags"),
            log: None,
            drift: None,
        }
    }
}

struct Selected {
    index: usize,
    stats: TableStats,
}

impl Selected {
    fn pick(kb: &KnowledgeBase, demand: &FeatureTagVector, table: &Table) -> Result<Selected> {
        let m = kb.match_method(demand)?;
        let method = &kb.entries()[m.index];
        let buckets = method.parameter("bucket_count").map_or(DEFAULT_BUCKETS, |b| b as usize);
        let stats = TableStats::analyze(table, buckets)?;
        if method.cardinality_estimator(&stats).is_none() {
            return Err(Error::invalid(
                "demand",
                format!("matched `{}`, which is not a cardinality estimator", method.name),
            ));
        }
        Ok(Selected { index: m.index, stats })
    }

    fn method<'k>(&self, kb: &'k KnowledgeBase) -> &'k RuleMethod {
        &kb.entries()[self.index]
    }
}

fn evaluate(
    heldout: &[(Query, f64)],
    learned: &LearnedEstimator,
    rule: &dyn CardinalityEstimator,
    row_count: u64,
    d: f64,
) -> Result<(Summary, Summary, f64)> {
    let mut gated = Vec::with_capacity(heldout.len());
    let mut alone = Vec::with_capacity(heldout.len());
    let mut learned_count = 0usize;
    for (q, actual) in heldout {
        let inf = infer(q, learned, rule, row_count, d)?;
        gated.push(q_error(inf.estimate, *actual));
        alone.push(q_error(inf.decision.c_learned, *actual));
        learned_count += usize::from(inf.decision.chosen == Chosen::Learned);
    }
    let share = learned_count as f64 / heldout.len().max(1) as f64;
    Ok((summarize(&gated), summarize(&alone), share))
}

/// Pretrains from collected labels, then serves `stream_len` tasks: gate,
/// execute, pool the true label, and every `interval` tasks retrain and
/// re-check the rule selection.
pub fn run_online(scenario: &Scenario<'_>, config: &EedlConfig, seed: u64) -> Result<OnlineRun> {
    config.validate()?;
    let table = scenario.table;
    let row_count = table.spec.row_count as u64;
    let kb = scenario.kb;
    let mut demand = scenario.demand;
    let mut selected = Selected::pick(kb, &demand, table)?;

    let ts = {
        let rule = selected
            .method(kb)
            .cardinality_estimator(&selected.stats)
            .expect("checked on selection");
        collect_labels(
            &CardinalityTask { table },
            scenario.log,
            Some(rule.as_ref()),
            Some(scenario.templates),
            config.pretrain_size,
            seed,
        )?
    };
    let provenance = [Provenance::Log, Provenance::Rule, Provenance::Execution]
        .into_iter()
        .map(|p| (p, ts.count(p)))
        .collect();

    let mut learned = LearnedEstimator::new(&table.spec, &config.hidden, seed)?;
    pretrain(&mut learned, &ts, config, seed.wrapping_add(1))?;

    let heldout_of = |templates: &[QueryTemplate], s: u64| -> Result<Vec<(Query, f64)>> {
        generate_queries(templates, table, config.heldout.max(1), s)?
            .into_iter()
            .map(|q| {
                let c = table.exact_cardinality(&q)? as f64;
                Ok((q, c))
            })
            .collect()
    };
    let mut heldout = heldout_of(scenario.templates, seed.wrapping_add(2))?;

    let mut stream = generate_queries(
        scenario.templates,
        table,
        config.stream_len.max(1),
        seed.wrapping_add(3),
    )?;
    stream.truncate(config.stream_len);
    if let Some(d) = &scenario.drift {
        if d.at < stream.len() {
            let tail = generate_queries(&d.templates, table, stream.len() - d.at, seed.wrapping_add(4))?;
            stream.truncate(d.at);
            stream.extend(tail);
        }
    }

    let mut history = Vec::new();
    let mut push_history = |window: usize,
                            tasks: usize,
                            pool: usize,
                            sel: &Selected,
                            l: &LearnedEstimator,
                            h: &[(Query, f64)]|
     -> Result<()> {
        let rule = sel
            .method(kb)
            .cardinality_estimator(&sel.stats)
            .expect("checked on selection");
        let (gated, alone, share) = evaluate(h, l, rule.as_ref(), row_count, config.d)?;
        history.push(RetrainRecord {
            window,
            tasks,
            pool_size: pool,
            method: sel.method(kb).name.clone(),
            gated,
            learned: alone,
            learned_share: share,
        });
        Ok(())
    };
    push_history(0, 0, 0, &selected, &learned, &heldout)?;

    let mut pool: ExperiencePool<Sample> = ExperiencePool::new(config.pool_capacity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
    let mut records = Vec::with_capacity(stream.len());
    for (task, q) in stream.iter().enumerate() {
        let inf = {
            let rule = selected
                .method(kb)
                .cardinality_estimator(&selected.stats)
                .expect("checked on selection");
            infer(q, &learned, rule.as_ref(), row_count, config.d)?
        };
        let actual = table.exact_cardinality(q)? as f64;
        records.push(OnlineRecord {
            task,
            query: q.clone(),
            c_rule: inf.decision.c_rule,
            c_learned: inf.decision.c_learned,
            credibility: inf.decision.credibility,
            chosen: inf.decision.chosen,
            fallback: inf.fallback,
            actual,
            q_error: q_error(inf.estimate, actual),
        });
        pool.push(Sample::regression(featurize(q, &table.spec)?.0, log_label(actual)));

        let done = task + 1;
        if let Some(d) = scenario.drift.as_ref().filter(|d| done == d.at) {
            demand = d.demand;
            heldout = heldout_of(&d.templates, seed.wrapping_add(6))?;
        }
        if done % config.interval == 0 {
            retrain(&mut learned, &pool, config, &mut rng)?;
            if needs_update(selected.method(kb), &demand, config.update_threshold) {
                selected = Selected::pick(kb, &demand, table)?;
            }
            push_history(done / config.interval, done, pool.len(), &selected, &learned, &heldout)?;
        }
    }

    Ok(OnlineRun {
        records,
        history,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdb::{generate_table, ColumnSpec, Distribution, TableSpec};
    use crate::workload::random_templates;

    fn table() -> Table {
        let spec = TableSpec::new(
            "t",
            vec![
                ColumnSpec::new("a", Distribution::Zipf { s: 1.3 }, 1, 200),
                ColumnSpec::new(
                    "b",
                    Distribution::Gaussian {
                        mean: 500.0,
                        stddev: 120.0,
                    },
                    1,
                    1000,
                ),
                ColumnSpec::new("c", Distribution::Uniform, 1, 100),
            ],
            5000,
        );
        generate_table(&spec, 11).unwrap()
    }

    #[test]
    fn retrain_compute_scales_with_interval() {
        let at = |interval| {
            EedlConfig {
                interval,
                ..EedlConfig::default()
            }
            .retrain_steps()
        };
        assert_eq!(at(500), 200);
        assert_eq!(at(125), 50);
        assert_eq!(4 * at(125), at(500));
        assert_eq!(at(1), 1);
        let bad = EedlConfig {
            retrain_steps_per_task: 0.0,
            ..EedlConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn small() -> EedlConfig {
        EedlConfig {
            pretrain_size: 600,
            pretrain_epochs: 20,
            stream_len: 300,
            interval: 100,
            heldout: 100,
            retrain_steps_per_task: 0.4,
            ..EedlConfig::default()
        }
    }

    struct Fixed(f64);
    impl CardinalityEstimator for Fixed {
        fn estimate(&self, _: &Query) -> Result<f64> {
            Ok(self.0)
        }
    }
    struct Broken;
    impl CardinalityEstimator for Broken {
        fn estimate(&self, _: &Query) -> Result<f64> {
            Err(Error::MissingHistogram("a".into()))
        }
    }

    #[test]
    fn infer_examples() {
        let q = Query::parse("t", "a = 1").unwrap();
        let same = infer(&q, &Fixed(100.0), &Fixed(100.0), 5000, 0.5).unwrap();
        assert_eq!(same.decision.chosen, Chosen::Learned);
        assert_eq!(same.estimate, 100.0);
        let wild = infer(&q, &Fixed(4000.0), &Fixed(100.0), 5000, 0.5).unwrap();
        assert_eq!(wild.decision.chosen, Chosen::Rule);
        assert_eq!(wild.estimate, 100.0);
        let open = infer(&q, &Fixed(4000.0), &Fixed(100.0), 5000, f64::INFINITY).unwrap();
        assert_eq!(open.estimate, 4000.0);
        let fb = infer(&q, &Fixed(500.0), &Broken, 5000, 0.5).unwrap();
        assert!(fb.fallback);
        assert_eq!(fb.decision.c_rule, 500.0);
        assert_eq!(fb.decision.chosen, Chosen::Learned);
    }

    #[test]
    fn pretrain_fits_its_teacher() {
        let t = table();
        let stats = TableStats::analyze(&t, 64).unwrap();
        let templates = random_templates(&t.spec, 12, 5);
        let cfg = EedlConfig {
            pretrain_size: 2000,
            ..EedlConfig::default()
        };
        let ts = collect_labels(
            &CardinalityTask { table: &t },
            None,
            Some(&stats),
            Some(&templates),
            2000,
            1,
        )
        .unwrap();
        let mut est = LearnedEstimator::new(&t.spec, &cfg.hidden, 3).unwrap();
        let losses = pretrain(&mut est, &ts, &cfg, 4).unwrap();
        assert!(losses.last().unwrap() < &losses[0]);
        let probe = generate_queries(&templates, &t, 300, 99).unwrap();
        let errs: Vec<f64> = probe
            .iter()
            .map(|q| q_error(est.estimate(q).unwrap(), stats.estimate(q).unwrap()))
            .collect();
        let m = summarize(&errs).median;
        assert!(m <= 1.5, "median {m}");

        let mut again = LearnedEstimator::new(&t.spec, &cfg.hidden, 3).unwrap();
        pretrain(&mut again, &ts, &cfg, 4).unwrap();
        assert_eq!(again, est);

        let empty = TrainingSet {
            examples: vec![],
            target_size: 1,
            waiting: true,
        };
        assert!(pretrain(&mut again, &empty, &cfg, 4).is_err());
    }

    #[test]
    fn retrain_examples() {
        let t = table();
        let cfg = small();
        let mut est = LearnedEstimator::new(&t.spec, &cfg.hidden, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty: ExperiencePool<Sample> = ExperiencePool::new(4).unwrap();
        assert_eq!(retrain(&mut est, &empty, &cfg, &mut rng).unwrap(), None);

        // One example the model already predicts exactly.
        let x = featurize(&Query::parse("t", "a = 3").unwrap(), &t.spec).unwrap().0;
        let y = est.model.predict(&x).unwrap()[0];
        let mut pool = ExperiencePool::new(4).unwrap();
        pool.push(Sample::regression(x, y));
        let before = est.clone();
        assert_eq!(retrain(&mut est, &pool, &cfg, &mut rng).unwrap(), Some(0.0));
        assert_eq!(est, before);

        // Fit on the pool's own examples improves.
        let qs = generate_queries(&random_templates(&t.spec, 8, 1), &t, 200, 2).unwrap();
        let mut pool = ExperiencePool::new(1000).unwrap();
        let truth: Vec<f64> = qs.iter().map(|q| t.exact_cardinality(q).unwrap() as f64).collect();
        for (q, c) in qs.iter().zip(&truth) {
            pool.push(Sample::regression(featurize(q, &t.spec).unwrap().0, log_label(*c)));
        }
        let median = |e: &LearnedEstimator| {
            let v: Vec<f64> = qs
                .iter()
                .zip(&truth)
                .map(|(q, c)| q_error(e.estimate(q).unwrap(), *c))
                .collect();
            summarize(&v).median
        };
        let m0 = median(&est);
        let mut a = est.clone();
        let mut b = est.clone();
        retrain(&mut a, &pool, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        retrain(&mut b, &pool, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(median(&a) < m0);
    }

    #[test]
    fn interval_semantics() {
        let t = table();
        let templates = random_templates(&t.spec, 8, 2);
        let kb = KnowledgeBase::with_defaults();
        let sc = Scenario::new(&t, &templates, &kb);
        let cfg = EedlConfig {
            stream_len: 99,
            ..small()
        };
        let run = run_online(&sc, &cfg, 0).unwrap();
        assert_eq!(run.retrains(), 0);
        assert_eq!(run.records.len(), 99);

        let run = run_online(&sc, &small(), 0).unwrap();
        assert_eq!(run.retrains(), 3);
        assert_eq!(run.records.len(), 300);
        let learned = run.records.iter().filter(|r| r.chosen == Chosen::Learned).count();
        let rule = run.records.iter().filter(|r| r.chosen == Chosen::Rule).count();
        assert_eq!(learned + rule, 300);
        assert!(run.records.iter().all(|r| r.q_error >= 1.0));
        assert_eq!(run.provenance[1], (Provenance::Rule, 600));
    }

    #[test]
    fn gate_extremes() {
        let t = table();
        let templates = random_templates(&t.spec, 8, 2);
        let kb = KnowledgeBase::with_defaults();
        let sc = Scenario::new(&t, &templates, &kb);
        let closed = run_online(&sc, &EedlConfig { d: 0.0, ..small() }, 1).unwrap();
        assert!(closed.records.iter().all(|r| r.chosen == Chosen::Rule));
        let open = run_online(
            &sc,
            &EedlConfig {
                d: f64::INFINITY,
                ..small()
            },
            1,
        )
        .unwrap();
        assert!(open.records.iter().all(|r| r.chosen == Chosen::Learned));
    }

    #[test]
    fn drift_reselects_rule() {
        let t = table();
        let templates = random_templates(&t.spec, 8, 2);
        let after = random_templates(&t.spec, 8, 77);
        let kb = KnowledgeBase::with_defaults();
        let mut sc = Scenario::new(&t, &templates, &kb);
        sc.drift = Some(Drift {
            at: 150,
            templates: after,
            demand: "cardinality time relational online multi".parse().unwrap(),
        });
        let cfg = EedlConfig {
            update_threshold: 0.9,
            ..small()
        };
        let run = run_online(&sc, &cfg, 2).unwrap();
        let methods: Vec<&str> = run.history.iter().map(|h| h.method.as_str()).collect();
        assert_eq!(methods, ["histogram", "histogram", "cold-start", "cold-start"]);
    }

    #[test]
    fn outputs_are_deterministic() {
        let t = table();
        let templates = random_templates(&t.spec, 8, 2);
        let kb = KnowledgeBase::with_defaults();
        let sc = Scenario::new(&t, &templates, &kb);
        let render = || {
            let run = run_online(&sc, &small(), 4).unwrap();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            run.write_records(&mut a).unwrap();
            run.write_history(&mut b).unwrap();
            (a, b)
        };
        assert_eq!(render(), render());
    }
}
