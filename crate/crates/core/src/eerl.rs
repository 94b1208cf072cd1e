//! Online index tuning with a Q-learning agent whose exploration is split
//! three ways: rule actions from the knowledge base, uniform random actions,
//! and the agent's own greedy action.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ekb::{needs_update, Behavior, FeatureTagVector, KnowledgeBase, DEFAULT_UPDATE_THRESHOLD};
use crate::learner::{argmax, init_model, td_samples, train_batch, Experience, ExperiencePool, Model};
use crate::metrics::{q_cost, rl_reward, WorkloadWeights};
use crate::synthdb::{Catalog, ColumnRef, ColumnSpec, Database, Distribution, IndexAction, IndexConfig, TableSpec};
use crate::workload::{generate_workload, parse_templates, Query, QueryTemplate};
use crate::{Error, Result};

pub const DEFAULT_BUDGET: usize = 3;
pub const OVER_BUDGET_PENALTY: f64 = 0.01;
pub const DEFAULT_F_LOW: f64 = 0.05;
pub const DEFAULT_F_HIGH: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Decrease,
    Increase,
}

/// Rule-exploration rate `alpha0` held until `c1`, moved linearly by `w`
/// until `c2`, then held. `beta` is the random-exploration rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub alpha0: f64,
    pub beta: f64,
    pub w: f64,
    pub c1: u64,
    pub c2: u64,
    pub direction: Direction,
}

impl ExplorationSchedule {
    pub fn new(alpha0: f64, beta: f64, w: f64, c1: u64, c2: u64, direction: Direction) -> Result<Self> {
        let s = ExplorationSchedule {
            alpha0,
            beta,
            w,
            c1,
            c2,
            direction,
        };
        s.validate()?;
        Ok(s)
    }

    /// Constant rates.
    pub fn fixed(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 0.0, 0, 1, Direction::Decrease)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha/beta", "must be >= 0"));
        }
        if self.alpha0 + self.beta > 1.0 + 1e-12 {
            return Err(Error::invalid("alpha/beta", "alpha + beta must be <= 1"));
        }
        if !(self.w >= 0.0) {
            return Err(Error::invalid("w", "must be >= 0"));
        }
        if self.c1 >= self.c2 {
            return Err(Error::invalid("c1", "must be < c2"));
        }
        Ok(())
    }
}

/// Current rule-exploration rate, clamped to `[0, 1 - beta]` and snapped to
/// 1e-12 so that decimal endpoints such as `0.3 - 0.2` come out as written.
pub fn attenuate(sched: &ExplorationSchedule, iter: u64) -> f64 {
    let progress = if iter < sched.c1 {
        0.0
    } else if iter <= sched.c2 {
        (iter - sched.c1) as f64 / (sched.c2 - sched.c1) as f64
    } else {
        1.0
    };
    let delta = sched.w * progress;
    let alpha = match sched.direction {
        Direction::Decrease => sched.alpha0 - delta,
        Direction::Increase => sched.alpha0 + delta,
    };
    let alpha = (alpha * 1e12).round() / 1e12;
    alpha.clamp(0.0, (1.0 - sched.beta).max(0.0))
}

/// Build on each column, drop on each column, no-op; in that order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActionSpace {
    pub columns: usize,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        2 * self.columns + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn decode(&self, i: usize) -> IndexAction {
        if i < self.columns {
            IndexAction::Build(i)
        } else if i < 2 * self.columns {
            IndexAction::Drop(i - self.columns)
        } else {
            IndexAction::NoOp
        }
    }

    pub fn encode(&self, a: IndexAction) -> usize {
        match a {
            IndexAction::Build(c) => c,
            IndexAction::Drop(c) => self.columns + c,
            IndexAction::NoOp => 2 * self.columns,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    /// Share of the recent window predicating on each column.
    pub frequencies: Vec<f64>,
    pub config: IndexConfig,
    pub step: u64,
}

impl EnvState {
    /// Network input: frequencies then index bits.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.frequencies.clone();
        v.extend(self.config.built.iter().map(|&b| f64::from(u8::from(b))));
        v
    }
}

/// Frequency rules: drop an index whose column fell below `f_low`, else
/// build the most frequent unindexed column if it reaches `f_high` and the
/// budget allows, else do nothing.
pub fn rule_action(state: &EnvState, f_low: f64, f_high: f64, budget: usize) -> IndexAction {
    let freq = &state.frequencies;
    let mut drop: Option<usize> = None;
    for (c, &b) in state.config.built.iter().enumerate() {
        if b && freq[c] < f_low && drop.is_none_or(|d| freq[c] < freq[d]) {
            drop = Some(c);
        }
    }
    if let Some(c) = drop {
        return IndexAction::Drop(c);
    }
    if state.config.count() < budget {
        let mut best: Option<usize> = None;
        for (c, &b) in state.config.built.iter().enumerate() {
            if !b && best.is_none_or(|d| freq[c] > freq[d]) {
                best = Some(c);
            }
        }
        if let Some(c) = best.filter(|&c| freq[c] >= f_high) {
            return IndexAction::Build(c);
        }
    }
    IndexAction::NoOp
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Rule,
    Random,
    Agent,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Rule => "rule",
            Source::Random => "random",
            Source::Agent => "agent",
        })
    }
}

/// Picks the rule action with probability `alpha`, the random one with
/// probability `beta`, the agent's otherwise. One uniform draw per call.
pub fn schedule_action<T, R: Rng>(
    a_agent: T,
    a_rule: T,
    a_random: T,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<(T, Source)> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::invalid("alpha/beta", "must be >= 0"));
    }
    if alpha + beta > 1.0 + 1e-12 {
        return Err(Error::invalid("alpha/beta", "alpha + beta must be <= 1"));
    }
    let u: f64 = rng.random();
    Ok(if u < alpha {
        (a_rule, Source::Rule)
    } else if u < alpha + beta {
        (a_random, Source::Random)
    } else {
        (a_agent, Source::Agent)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub budget: usize,
    /// Recent queries the frequency state is computed over.
    pub window: usize,
    /// Queries the window advances per step.
    pub batch: usize,
    pub stream_len: usize,
    pub eval_size: usize,
    pub bucket_count: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            budget: DEFAULT_BUDGET,
            window: 200,
            batch: 10,
            stream_len: 4000,
            eval_size: 100,
            bucket_count: crate::synthdb::DEFAULT_BUCKETS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub q_cost: f64,
    pub over_budget: bool,
}

/// Simulated tuning environment: a cyclic query stream, a fixed evaluation
/// set and what-if costs from catalog statistics.
#[derive(Clone, Debug)]
pub struct IndexEnv {
    catalog: Catalog,
    eval: Vec<Query>,
    stream: Vec<Vec<usize>>,
    window: VecDeque<usize>,
    counts: Vec<usize>,
    cursor: usize,
    batch: usize,
    budget: usize,
    state: EnvState,
    cache: HashMap<Vec<bool>, f64>,
}

impl IndexEnv {
    pub fn new(db: &Database, templates: &[QueryTemplate], cfg: &EnvConfig, seed: u64) -> Result<IndexEnv> {
        if cfg.window == 0 || cfg.batch == 0 || cfg.eval_size == 0 {
            return Err(Error::invalid("env", "window, batch and eval_size must be >= 1"));
        }
        if cfg.stream_len < cfg.window {
            return Err(Error::invalid("env.stream_len", "must be >= window"));
        }
        let catalog = Catalog::analyze(db, cfg.bucket_count)?;
        let columns = catalog.columns().to_vec();
        let stream = generate_workload(templates, db, cfg.stream_len, seed)?
            .iter()
            .map(|q| column_ids(q, &columns))
            .collect::<Vec<_>>();
        let eval = generate_workload(templates, db, cfg.eval_size, seed ^ 0x5eed_e7a1)?;
        let mut env = IndexEnv {
            catalog,
            eval,
            stream,
            window: VecDeque::with_capacity(cfg.window),
            counts: vec![0; columns.len()],
            cursor: 0,
            batch: cfg.batch,
            budget: cfg.budget,
            state: EnvState {
                frequencies: vec![0.0; columns.len()],
                config: IndexConfig::empty(columns.len()),
                step: 0,
            },
            cache: HashMap::new(),
        };
        for _ in 0..cfg.window {
            env.push_query();
        }
        env.refresh_frequencies();
        Ok(env)
    }

    fn push_query(&mut self) {
        let i = self.cursor;
        self.cursor = (self.cursor + 1) % self.stream.len();
        for &c in &self.stream[i] {
            self.counts[c] += 1;
        }
        self.window.push_back(i);
    }

    fn advance(&mut self) {
        for _ in 0..self.batch {
            if let Some(old) = self.window.pop_front() {
                for &c in &self.stream[old] {
                    self.counts[c] -= 1;
                }
            }
            self.push_query();
        }
        self.refresh_frequencies();
    }

    fn refresh_frequencies(&mut self) {
        let n = self.window.len().max(1) as f64;
        for (f, &c) in self.state.frequencies.iter_mut().zip(&self.counts) {
            *f = c as f64 / n;
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn columns(&self) -> &[ColumnRef] {
        self.catalog.columns()
    }

    pub fn actions(&self) -> ActionSpace {
        ActionSpace {
            columns: self.columns().len(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn eval_queries(&self) -> &[Query] {
        &self.eval
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Weighted cost ratio of the evaluation set under `config`, memoized.
    pub fn q_cost(&mut self, config: &IndexConfig) -> Result<f64> {
        if let Some(v) = self.cache.get(&config.built) {
            return Ok(*v);
        }
        let catalog = &self.catalog;
        let mut failure = None;
        let v = q_cost(
            &self.eval,
            &WorkloadWeights::uniform(self.eval.len()),
            config,
            |q, idx| {
                catalog.whatif_cost(q, idx).unwrap_or_else(|e| {
                    failure = Some(e);
                    f64::NAN
                })
            },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        self.cache.insert(config.built.clone(), v);
        Ok(v)
    }

    /// Applies `action`, advances the workload window and scores the new
    /// configuration. Builds past the budget leave the configuration as is
    /// and cost a small penalty.
    pub fn step(&mut self, action: IndexAction) -> Result<StepOutcome> {
        let cols = self.columns().len();
        match action {
            IndexAction::Build(c) | IndexAction::Drop(c) if c >= cols => {
                return Err(Error::invalid("action", format!("column {c} out of range")));
            }
            _ => {}
        }
        let over_budget = matches!(action, IndexAction::Build(c)
            if !self.state.config.is_built(c) && self.state.config.count() >= self.budget);
        if !over_budget {
            self.state.config = self.state.config.apply(action);
        }
        self.advance();
        self.state.step += 1;
        let qc = self.q_cost(&self.state.config.clone())?;
        let penalty = if over_budget { OVER_BUDGET_PENALTY } else { 0.0 };
        Ok(StepOutcome {
            reward: rl_reward(qc) - penalty,
            q_cost: qc,
            over_budget,
        })
    }
}

fn column_ids(q: &Query, columns: &[ColumnRef]) -> Vec<usize> {
    columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.table == q.table && q.predicate_on(&c.column).is_some())
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub minibatch: usize,
    pub pool_capacity: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: 64,
            learning_rate: 1e-3,
            gamma: 0.9,
            minibatch: 32,
            pool_capacity: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub model: Model,
    pub pool: ExperiencePool<Experience>,
    pub config: AgentConfig,
}

impl Agent {
    pub fn new(state_dim: usize, actions: usize, config: AgentConfig, seed: u64) -> Result<Agent> {
        Ok(Agent {
            model: init_model(&[state_dim, config.hidden, actions], seed)?,
            pool: ExperiencePool::new(config.pool_capacity)?,
            config,
        })
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.model.predict(state)?))
    }

    /// One TD step on a replay minibatch; no-op until the pool holds a full
    /// minibatch.
    pub fn learn<R: Rng>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.pool.len() < self.config.minibatch {
            return Ok(None);
        }
        let batch = self.pool.sample(self.config.minibatch, rng)?;
        let samples = td_samples(&self.model, &batch, self.config.gamma)?;
        train_batch(&mut self.model, &samples, self.config.learning_rate).map(Some)
    }
}

/// Demand switch at a given iteration, for re-selection experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandDrift {
    pub at: u64,
    pub demand: FeatureTagVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub schedule: ExplorationSchedule,
    /// Knowledge-base re-check interval.
    pub w_kb: u64,
    pub demand: FeatureTagVector,
    pub drift: Option<DemandDrift>,
    pub update_threshold: f64,
}

impl TrainConfig {
    pub fn new(iterations: u64, schedule: ExplorationSchedule) -> Self {
        TrainConfig {
            iterations,
            schedule,
            w_kb: 1000,
            demand: "index cost relational online multi".parse().expect("valid tags"),
            drift: None,
            update_threshold: DEFAULT_UPDATE_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRecord {
    pub iter: u64,
    pub source: Source,
    pub action: IndexAction,
    pub reward: f64,
    pub q_cost: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    pub records: Vec<HistoryRecord>,
    /// `(iteration, method name)` for the initial selection and each change.
    pub selections: Vec<(u64, String)>,
}

impl RunHistory {
    /// Mean Q-cost over the last `n` iterations.
    pub fn final_mean(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().map(|r| r.q_cost).sum::<f64>() / tail.len() as f64
    }

    /// `iter,source,action,reward,q_cost`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "source", "action", "reward", "q_cost"])?;
        for r in &self.records {
            out.write_record([
                r.iter.to_string(),
                r.source.to_string(),
                r.action.to_string(),
                r.reward.to_string(),
                r.q_cost.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn history_file_name(alpha: f64, beta: f64, seed: u64) -> String {
    format!("rl_history_{alpha}_{beta}_{seed}.csv")
}

struct RuleParams {
    index: usize,
    f_low: f64,
    f_high: f64,
}

fn select_rules(kb: &KnowledgeBase, demand: &FeatureTagVector) -> Result<RuleParams> {
    let m = kb.match_method(demand)?;
    let method = &kb.entries()[m.index];
    if method.behavior != Behavior::FrequencyIndexRules {
        return Err(Error::invalid(
            "demand",
            format!("matched `{}`, which is not an index rule method", method.name),
        ));
    }
    Ok(RuleParams {
        index: m.index,
        f_low: method.parameter("f_low").unwrap_or(DEFAULT_F_LOW),
        f_high: method.parameter("f_high").unwrap_or(DEFAULT_F_HIGH),
    })
}

/// The training loop. Each iteration computes the agent, rule and random
/// actions, picks one by the scheduled rates, steps the environment, stores
/// the transition and takes one replay step. Every `w_kb` iterations the
/// rule method is re-matched if the demand drifted away from it.
pub fn train(
    env: &mut IndexEnv,
    agent: &mut Agent,
    kb: &KnowledgeBase,
    config: &TrainConfig,
    seed: u64,
) -> Result<RunHistory> {
    config.schedule.validate()?;
    if config.w_kb == 0 {
        return Err(Error::invalid("w_kb", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = env.actions();
    let mut history = RunHistory::default();
    let mut demand = config.demand;
    let mut rules = select_rules(kb, &demand)?;
    history.selections.push((0, kb.entries()[rules.index].name.clone()));

    for iter in 0..config.iterations {
        let s = env.state().to_vector();
        let a_agent = agent.greedy(&s)?;
        let a_rule = space.encode(rule_action(env.state(), rules.f_low, rules.f_high, env.budget()));
        let a_random = rng.random_range(0..space.len());
        let alpha = attenuate(&config.schedule, iter);
        let (a, source) = schedule_action(a_agent, a_rule, a_random, alpha, config.schedule.beta, &mut rng)?;
        let action = space.decode(a);
        let outcome = env.step(action)?;
        agent.pool.push(Experience {
            state: s,
            action: a,
            reward: outcome.reward,
            next_state: env.state().to_vector(),
        });
        agent.learn(&mut rng)?;
        history.records.push(HistoryRecord {
            iter,
            source,
            action,
            reward: outcome.reward,
            q_cost: outcome.q_cost,
        });

        if let Some(d) = config.drift.as_ref().filter(|d| iter + 1 >= d.at) {
            demand = d.demand;
        }
        if (iter + 1) % config.w_kb == 0 && needs_update(&kb.entries()[rules.index], &demand, config.update_threshold) {
            let next = select_rules(kb, &demand)?;
            if next.index != rules.index {
                history
                    .selections
                    .push((iter + 1, kb.entries()[next.index].name.clone()));
            }
            rules = next;
        }
    }
    Ok(history)
}

/// Eight tables shaped like the TPC-H schema, three indexable columns each.
pub fn tpch_like_schema() -> Vec<TableSpec> {
    use Distribution::*;
    let col = |n: &str, d: Distribution, lo, hi| ColumnSpec::new(n, d, lo, hi);
    vec![
        TableSpec::new(
            "lineitem",
            vec![
                col("l_shipdate", Uniform, 1, 2500),
                col("l_quantity", Uniform, 1, 50),
                col("l_discount", Uniform, 0, 10),
            ],
            30_000,
        ),
        TableSpec::new(
            "orders",
            vec![
                col("o_orderdate", Uniform, 1, 2500),
                col(
                    "o_totalprice",
                    Gaussian {
                        mean: 50_000.0,
                        stddev: 15_000.0,
                    },
                    1,
                    100_000,
                ),
                col("o_orderpriority", Uniform, 1, 5),
            ],
            8_000,
        ),
        TableSpec::new(
            "customer",
            vec![
                col("c_acctbal", Uniform, 0, 10_000),
                col("c_mktsegment", Uniform, 1, 5),
                col("c_nationkey", Uniform, 0, 24),
            ],
            1_500,
        ),
        TableSpec::new(
            "part",
            vec![
                col("p_size", Uniform, 1, 50),
                col("p_brand", Zipf { s: 1.1 }, 1, 25),
                col("p_type", Uniform, 1, 150),
            ],
            2_000,
        ),
        TableSpec::new(
            "partsupp",
            vec![
                col("ps_partkey", Uniform, 1, 2_000),
                col("ps_availqty", Uniform, 1, 10_000),
                col("ps_supplycost", Uniform, 1, 1_000),
            ],
            8_000,
        ),
        TableSpec::new(
            "supplier",
            vec![
                col("s_suppkey", Uniform, 1, 100),
                col("s_nationkey", Uniform, 0, 24),
                col("s_acctbal", Uniform, 0, 10_000),
            ],
            100,
        ),
        TableSpec::new(
            "nation",
            vec![
                col("n_nationkey", Uniform, 0, 24),
                col("n_regionkey", Uniform, 0, 4),
                col("n_name", Uniform, 0, 24),
            ],
            25,
        ),
        TableSpec::new(
            "region",
            vec![
                col("r_regionkey", Uniform, 0, 4),
                col("r_name", Uniform, 0, 4),
                col("r_comment", Uniform, 0, 100),
            ],
            5,
        ),
    ]
}

const TPCH_TEMPLATES: &str = "\
lineitem: l_shipdate between $-5 $+5
lineitem: l_shipdate between $-10 $+10 AND l_quantity <= $
lineitem: l_shipdate between $-3 $+3 AND l_discount between $-1 $+1
lineitem: l_shipdate between $-8 $+8 AND l_quantity >= $
lineitem: l_quantity = $ AND l_discount = $
lineitem: l_quantity between $-1 $+1
orders: o_orderdate between $-5 $+5
orders: o_orderdate between $-5 $+5 AND o_orderpriority = $
orders: o_orderdate between $-10 $+10 AND o_totalprice >= $
orders: o_orderdate = $
part: p_size = $ AND p_brand = $
part: p_type = $
customer: c_mktsegment = $ AND c_acctbal >= $
partsupp: ps_partkey = $
partsupp: ps_availqty <= $+100
supplier: s_nationkey = $
nation: n_regionkey = $
region: r_name = $
";

/// Eighteen templates. `l_shipdate`, `o_orderdate` and `l_quantity` carry
/// most of the workload.
pub fn tpch_like_templates() -> Vec<QueryTemplate> {
    parse_templates("lineitem", TPCH_TEMPLATES).expect("built-in templates parse")
}
