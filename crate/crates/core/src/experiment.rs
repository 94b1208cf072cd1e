//! Configured, seeded experiment runs and the files they leave behind.
//!
//! A run reads a TOML [`ExperimentConfig`], writes its CSVs into one output
//! directory, and finishes with a `manifest.txt` recording the config hash,
//! seeds, version and a digest of every file written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eedl::{run_online, EedlConfig, Scenario};
use crate::eerl::{
    history_file_name, tpch_like_schema, tpch_like_templates, train, Agent, AgentConfig, Direction, EnvConfig,
    ExplorationSchedule, IndexEnv, RunHistory, TrainConfig,
};
use crate::ekb::KnowledgeBase;
use crate::elc::{collect_labels, label_by_execution, label_by_rule, CardinalityTask};
use crate::sea::{verify_theorem, write_theorem_report};
use crate::synthdb::{generate_table, ColumnSpec, Database, Distribution, Table, TableSpec, TableStats};
use crate::workload::{generate_queries, parse_templates, random_templates, QueryTemplate};
use crate::{Error, Result};

/// Histogram resolution of the rule estimator in the cardinality scenario.
pub const CARDINALITY_RULE_BUCKETS: usize = 8;

pub const VERSION: &str = concat!("eelearn-v", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    EedlCardinality,
    EerlIndex,
    TheoremVerify,
    ElcBench,
}

impl ScenarioKind {
    pub fn id(self) -> &'static str {
        match self {
            ScenarioKind::EedlCardinality => "eedl-cardinality",
            ScenarioKind::EerlIndex => "eerl-index",
            ScenarioKind::TheoremVerify => "theorem-verify",
            ScenarioKind::ElcBench => "elc-bench",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterOverride {
    pub method: String,
    pub parameter: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbSection {
    /// Knowledge base TOML; the in-box entries when absent.
    pub file: Option<PathBuf>,
    pub set: Vec<ParameterOverride>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EerlSection {
    pub iterations: u64,
    pub alpha: f64,
    pub beta: f64,
    pub w: f64,
    pub c1: u64,
    pub c2: u64,
    pub direction: Direction,
    /// Fixed `[alpha, beta]` pairs; when non-empty, replaces the single
    /// schedule above.
    pub grid: Vec<[f64; 2]>,
    pub w_kb: u64,
    /// Iterations averaged for the summary Q-cost.
    pub tail: usize,
    pub env: EnvConfig,
    pub agent: AgentConfig,
}

impl Default for EerlSection {
    fn default() -> Self {
        EerlSection {
            iterations: 8000,
            alpha: 0.1,
            beta: 0.1,
            w: 0.0,
            c1: 3000,
            c2: 5000,
            direction: Direction::Decrease,
            grid: Vec::new(),
            w_kb: 1000,
            tail: 500,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl EerlSection {
    pub fn schedules(&self) -> Result<Vec<ExplorationSchedule>> {
        if self.grid.is_empty() {
            return Ok(vec![ExplorationSchedule::new(
                self.alpha,
                self.beta,
                self.w,
                self.c1,
                self.c2,
                self.direction,
            )?]);
        }
        self.grid
            .iter()
            .map(|[a, b]| ExplorationSchedule::fixed(*a, *b))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremSection {
    pub instances: usize,
}

impl Default for TheoremSection {
    fn default() -> Self {
        TheoremSection { instances: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub queries: usize,
    pub rows: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            queries: 10_000,
            rows: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub target_size: usize,
}

impl Default for LabelSection {
    fn default() -> Self {
        LabelSection { target_size: 5000 }
    }
}

fn default_template_count() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioKind>,
    pub seeds: Vec<u64>,
    /// Table specs; each scenario has a built-in default when empty.
    #[serde(default)]
    pub tables: Vec<TableSpec>,
    /// Template file, relative to the config file. Random data-anchored
    /// templates are drawn when absent.
    #[serde(default)]
    pub template_file: Option<PathBuf>,
    #[serde(default = "default_template_count")]
    pub template_count: usize,
    #[serde(default)]
    pub kb: KbSection,
    #[serde(default)]
    pub eedl: EedlConfig,
    #[serde(default)]
    pub eerl: EerlSection,
    #[serde(default)]
    pub theorem: TheoremSection,
    #[serde(default)]
    pub elc_bench: BenchSection,
    #[serde(default)]
    pub label: LabelSection,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for `scenario` with the given seeds.
    pub fn for_scenario(scenario: ScenarioKind, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            scenario: Some(scenario),
            seeds,
            tables: Vec::new(),
            template_file: None,
            template_count: default_template_count(),
            kb: KbSection::default(),
            eedl: EedlConfig::default(),
            eerl: EerlSection::default(),
            theorem: TheoremSection::default(),
            elc_bench: BenchSection::default(),
            label: LabelSection::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(f) = &cfg.template_file {
            let p = cfg.resolve(f);
            if !p.is_file() {
                return Err(Error::invalid(
                    "template_file",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        if let Some(f) = &cfg.kb.file {
            let p = cfg.resolve(f);
            if !p.is_file() {
                return Err(Error::invalid("kb.file", format!("{} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "at least one seed is required"));
        }
        for (i, t) in self.tables.iter().enumerate() {
            t.validate().map_err(|e| match e {
                Error::Invalid { field, reason } => Error::invalid(format!("tables[{i}].{field}"), reason),
                other => other,
            })?;
        }
        if self.template_count == 0 {
            return Err(Error::invalid("template_count", "must be >= 1"));
        }
        self.eedl.validate().map_err(|e| prefix("eedl", e))?;
        self.eerl.schedules().map_err(|e| prefix("eerl", e))?;
        if self.eerl.w_kb == 0 {
            return Err(Error::invalid("eerl.w_kb", "must be >= 1"));
        }
        if self.elc_bench.queries == 0 || self.elc_bench.rows == 0 {
            return Err(Error::invalid("elc_bench", "queries and rows must be >= 1"));
        }
        if self.label.target_size == 0 {
            return Err(Error::invalid("label.target_size", "must be >= 1"));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Canonical serialization; the manifest hashes this.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn knowledge_base(&self) -> Result<KnowledgeBase> {
        let mut kb = match &self.kb.file {
            Some(f) => KnowledgeBase::from_toml(&fs::read_to_string(self.resolve(f))?)?,
            None => KnowledgeBase::with_defaults(),
        };
        for o in &self.kb.set {
            kb.set_parameter(&o.method, &o.parameter, o.value)?;
        }
        Ok(kb)
    }

    /// As [`Self::knowledge_base`], but the histogram rule defaults to
    /// [`CARDINALITY_RULE_BUCKETS`] unless the config says otherwise.
    pub fn cardinality_knowledge_base(&self) -> Result<KnowledgeBase> {
        let mut kb = self.knowledge_base()?;
        let overridden = self.kb.file.is_some()
            || self
                .kb
                .set
                .iter()
                .any(|o| o.method == "histogram" && o.parameter == "bucket_count");
        if !overridden {
            kb.set_parameter("histogram", "bucket_count", CARDINALITY_RULE_BUCKETS as f64)?;
        }
        Ok(kb)
    }

    fn templates_for(&self, default_table: &str) -> Result<Option<Vec<QueryTemplate>>> {
        match &self.template_file {
            Some(f) => Ok(Some(parse_templates(
                default_table,
                &fs::read_to_string(self.resolve(f))?,
            )?)),
            None => Ok(None),
        }
    }

    fn cardinality_table(&self) -> TableSpec {
        self.tables.first().cloned().unwrap_or_else(census_like)
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Invalid { field, reason } => Error::invalid(format!("{section}.{field}"), reason),
        other => other,
    }
}

/// Default single table for the cardinality scenario: skewed and
/// bell-shaped columns alongside a uniform one.
pub fn census_like() -> TableSpec {
    TableSpec::new(
        "census",
        vec![
            ColumnSpec::new(
                "age",
                Distribution::Gaussian {
                    mean: 40.0,
                    stddev: 12.0,
                },
                17,
                90,
            ),
            ColumnSpec::new(
                "hours",
                Distribution::Gaussian {
                    mean: 40.0,
                    stddev: 8.0,
                },
                1,
                99,
            ),
            ColumnSpec::new("education", Distribution::Zipf { s: 1.2 }, 1, 16),
            ColumnSpec::new("income", Distribution::Zipf { s: 0.9 }, 1, 5000),
            ColumnSpec::new("zip", Distribution::Uniform, 1, 1000),
            ColumnSpec::new("occupation", Distribution::Zipf { s: 1.5 }, 1, 40),
        ],
        20_000,
    )
}

pub fn bench_table(rows: usize) -> TableSpec {
    TableSpec::new(
        "bench",
        vec![
            ColumnSpec::new("a", Distribution::Uniform, 1, 1000),
            ColumnSpec::new("b", Distribution::Zipf { s: 1.1 }, 1, 500),
            ColumnSpec::new(
                "c",
                Distribution::Gaussian {
                    mean: 5000.0,
                    stddev: 1500.0,
                },
                1,
                10_000,
            ),
            ColumnSpec::new("d", Distribution::Uniform, 1, 50),
        ],
        rows,
    )
}

/// Output directory plus the list of files written into it.
pub struct Output {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Output> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Creates `rel` under the output directory and hands a buffered writer
    /// to `f`.
    pub fn write<F>(&mut self, rel: impl AsRef<Path>, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let rel = rel.as_ref();
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    /// `manifest.txt`: key = value lines, then one `file = <sha256>  <path>`
    /// line per output in write order.
    pub fn finish(mut self, scenario: &str, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        let mut text = String::new();
        text.push_str(&format!("version = {VERSION}\n"));
        text.push_str(&format!("scenario = {scenario}\n"));
        text.push_str(&format!("config_sha256 = {}\n", cfg.hash()));
        let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
        text.push_str(&format!("seeds = {}\n", seeds.join(",")));
        for f in &self.files {
            let digest = hex::encode(Sha256::digest(fs::read(self.dir.join(f))?));
            text.push_str(&format!("file = {digest}  {}\n", f.display()));
        }
        fs::write(self.dir.join("manifest.txt"), text)?;
        self.files.push(PathBuf::from("manifest.txt"));
        Ok(self.files)
    }
}

/// Writes every configured table as CSV.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut o = Output::create(out)?;
    let specs = if cfg.tables.is_empty() {
        vec![census_like()]
    } else {
        cfg.tables.clone()
    };
    for &seed in &cfg.seeds {
        for spec in &specs {
            let t = generate_table(spec, seed)?;
            o.write(format!("seed_{seed}/{}.csv", spec.name), |w| t.write_csv(w))?;
        }
    }
    o.finish("gen-data", cfg)
}

/// Collects a training set for the cardinality table through the label
/// collector and writes it as CSV.
pub fn label(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut o = Output::create(out)?;
    let spec = cfg.cardinality_table();
    let kb = cfg.cardinality_knowledge_base()?;
    for &seed in &cfg.seeds {
        let table = generate_table(&spec, seed)?;
        let templates = match cfg.templates_for(&spec.name)? {
            Some(t) => t,
            None => random_templates(&spec, cfg.template_count, seed),
        };
        let buckets = kb
            .entries()
            .iter()
            .find(|e| e.name == "histogram")
            .and_then(|e| e.parameter("bucket_count"))
            .map_or(crate::synthdb::DEFAULT_BUCKETS, |b| b as usize);
        let stats = TableStats::analyze(&table, buckets)?;
        let ts = collect_labels(
            &CardinalityTask { table: &table },
            None,
            Some(&stats),
            Some(&templates),
            cfg.label.target_size,
            seed,
        )?;
        o.write(format!("seed_{seed}/training_set.csv"), |w| ts.write_csv(w))?;
    }
    o.finish("label", cfg)
}

/// Per-seed online runs with `online_records.csv` and `retrain_history.csv`.
pub fn run_eedl(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut o = Output::create(out)?;
    let spec = cfg.cardinality_table();
    let kb = cfg.cardinality_knowledge_base()?;
    let file_templates = cfg.templates_for(&spec.name)?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let table = generate_table(&spec, seed)?;
            let templates = match &file_templates {
                Some(t) => t.clone(),
                None => random_templates(&spec, cfg.template_count, seed),
            };
            let sc = Scenario::new(&table, &templates, &kb);
            run_online(&sc, &cfg.eedl, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    for (seed, run) in cfg.seeds.iter().zip(&runs) {
        o.write(format!("seed_{seed}/online_records.csv"), |w| run.write_records(w))?;
        o.write(format!("seed_{seed}/retrain_history.csv"), |w| run.write_history(w))?;
    }
    o.finish(ScenarioKind::EedlCardinality.id(), cfg)
}

/// One index-tuning run on the TPC-H-shaped database (or the configured
/// tables and templates).
pub fn eerl_run(cfg: &ExperimentConfig, schedule: ExplorationSchedule, seed: u64) -> Result<RunHistory> {
    let (specs, templates) = if cfg.tables.is_empty() {
        (tpch_like_schema(), tpch_like_templates())
    } else {
        let t = cfg
            .templates_for(&cfg.tables[0].name)?
            .ok_or_else(|| Error::invalid("template_file", "required when tables are configured"))?;
        (cfg.tables.clone(), t)
    };
    let db = Database::generate(&specs, seed)?;
    let mut env = IndexEnv::new(&db, &templates, &cfg.eerl.env, seed)?;
    let state_dim = env.state().to_vector().len();
    let mut agent = Agent::new(state_dim, env.actions().len(), cfg.eerl.agent.clone(), seed)?;
    let kb = cfg.knowledge_base()?;
    let mut tc = TrainConfig::new(cfg.eerl.iterations, schedule);
    tc.w_kb = cfg.eerl.w_kb;
    train(&mut env, &mut agent, &kb, &tc, seed)
}

/// Every schedule times every seed; one history CSV per run and a summary of
/// the final-window Q-cost.
pub fn run_eerl(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut o = Output::create(out)?;
    let jobs: Vec<(ExplorationSchedule, u64)> = cfg
        .eerl
        .schedules()?
        .into_iter()
        .flat_map(|s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, seed)| eerl_run(cfg, s, seed))
        .collect::<Result<Vec<_>>>()?;
    for ((s, seed), h) in jobs.iter().zip(&runs) {
        o.write(history_file_name(s.alpha0, s.beta, *seed), |w| h.write_csv(w))?;
    }
    o.write("eerl_summary.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["alpha", "beta", "w", "seed", "final_q_cost"])?;
        for ((s, seed), h) in jobs.iter().zip(&runs) {
            csv.write_record([
                s.alpha0.to_string(),
                s.beta.to_string(),
                s.w.to_string(),
                seed.to_string(),
                h.final_mean(cfg.eerl.tail).to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    o.finish(ScenarioKind::EerlIndex.id(), cfg)
}

/// Randomized bound check; fails the run if any instance violates it.
pub fn run_theorem(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut o = Output::create(out)?;
    let mut violations = 0;
    for &seed in &cfg.seeds {
        let cases = verify_theorem(cfg.theorem.instances, seed)?;
        violations += cases.iter().filter(|c| !c.holds).count();
        let name = if cfg.seeds.len() == 1 {
            "theorem_report.csv".to_string()
        } else {
            format!("theorem_report_{seed}.csv")
        };
        o.write(name, |w| write_theorem_report(&cases, w))?;
    }
    let files = o.finish(ScenarioKind::TheoremVerify.id(), cfg)?;
    if violations > 0 {
        return Err(Error::invalid("theorem", format!("{violations} violations")));
    }
    Ok(files)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub queries: usize,
    pub rows: usize,
    pub rule_seconds: f64,
    pub execution_seconds: f64,
}

impl BenchResult {
    pub fn ratio(&self) -> f64 {
        self.execution_seconds / self.rule_seconds.max(1e-9)
    }
}

/// Times rule labeling (statistics build included) against execution
/// labeling of the same batch. Returns both label sets too.
pub fn elc_bench(
    table: &Table,
    templates: &[QueryTemplate],
    queries: usize,
    seed: u64,
) -> Result<(BenchResult, crate::elc::TrainingSet, crate::elc::TrainingSet)> {
    let batch = generate_queries(templates, table, queries, seed)?;
    let t = Instant::now();
    let stats = TableStats::analyze(table, crate::synthdb::DEFAULT_BUCKETS)?;
    let weak = label_by_rule(&batch, table, &stats)?;
    let rule_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let strong = label_by_execution(&batch, table)?;
    let execution_seconds = t.elapsed().as_secs_f64();
    Ok((
        BenchResult {
            queries,
            rows: table.row_count(),
            rule_seconds,
            execution_seconds,
        },
        weak,
        strong,
    ))
}

/// Labels are deterministic; the timing file is not.
pub fn run_elc_bench(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut o = Output::create(out)?;
    let spec = match cfg.tables.first() {
        Some(t) => t.clone(),
        None => bench_table(cfg.elc_bench.rows),
    };
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let table = generate_table(&spec, seed)?;
        let templates = match cfg.templates_for(&spec.name)? {
            Some(t) => t,
            None => random_templates(&spec, cfg.template_count, seed),
        };
        let (r, weak, strong) = elc_bench(&table, &templates, cfg.elc_bench.queries, seed)?;
        o.write(format!("seed_{seed}/rule_labels.csv"), |w| weak.write_csv(w))?;
        o.write(format!("seed_{seed}/execution_labels.csv"), |w| strong.write_csv(w))?;
        results.push((seed, r));
    }
    o.write("elc_bench.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["seed", "queries", "rows", "rule_seconds", "execution_seconds", "ratio"])?;
        for (seed, r) in &results {
            csv.write_record([
                seed.to_string(),
                r.queries.to_string(),
                r.rows.to_string(),
                format!("{:.6}", r.rule_seconds),
                format!("{:.6}", r.execution_seconds),
                format!("{:.2}", r.ratio()),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    o.finish(ScenarioKind::ElcBench.id(), cfg)
}

pub fn run_scenario(kind: ScenarioKind, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    match kind {
        ScenarioKind::EedlCardinality => run_eedl(cfg, out),
        ScenarioKind::EerlIndex => run_eerl(cfg, out),
        ScenarioKind::TheoremVerify => run_theorem(cfg, out),
        ScenarioKind::ElcBench => run_elc_bench(cfg, out),
    }
}

const PLOT_STUB: &str = r#"# Plots the CSVs summarized in report.csv. Needs pandas and matplotlib.
import glob, os, sys
import pandas as pd
import matplotlib.pyplot as plt

root = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))

for path in sorted(glob.glob(os.path.join(root, "**", "retrain_history.csv"), recursive=True)):
    h = pd.read_csv(path)
    plt.plot(h["tasks"], h["learned_median"], marker="o", label=os.path.relpath(path, root))
if plt.gca().lines:
    plt.xlabel("tasks"); plt.ylabel("median q-error"); plt.legend(); plt.savefig(os.path.join(root, "eedl.png")); plt.clf()

for path in sorted(glob.glob(os.path.join(root, "rl_history_*.csv"))):
    h = pd.read_csv(path)
    plt.plot(h["iter"], h["q_cost"].rolling(100, min_periods=1).mean(), label=os.path.basename(path))
if plt.gca().lines:
    plt.xlabel("iteration"); plt.ylabel("Q-cost"); plt.legend(fontsize=6); plt.savefig(os.path.join(root, "eerl.png"))
"#;

fn column_mean(path: &Path, column: &str, tail: Option<usize>) -> Result<Option<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let Some(idx) = r.headers()?.iter().position(|h| h == column) else {
        return Ok(None);
    };
    let mut values = Vec::new();
    for rec in r.records() {
        if let Some(v) = rec?.get(idx).and_then(|s| s.parse::<f64>().ok()) {
            values.push(v);
        }
    }
    let slice = match tail {
        Some(n) => &values[values.len().saturating_sub(n)..],
        None => &values[..],
    };
    if slice.is_empty() {
        return Ok(None);
    }
    Ok(Some(slice.iter().sum::<f64>() / slice.len() as f64))
}

fn last_value(path: &Path, column: &str) -> Result<Option<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let Some(idx) = r.headers()?.iter().position(|h| h == column) else {
        return Ok(None);
    };
    let mut last = None;
    for rec in r.records() {
        last = rec?.get(idx).and_then(|s| s.parse::<f64>().ok()).or(last);
    }
    Ok(last)
}

fn csv_files(dir: &Path, acc: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            csv_files(&p, acc)?;
        } else if p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n != "report.csv") {
            acc.push(p);
        }
    }
    Ok(())
}

/// Summarizes the CSVs under `dir` into `report.csv` and drops a plotting
/// script next to it.
pub fn report(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::invalid("out", format!("{} is not a directory", dir.display())));
    }
    let mut files = Vec::new();
    csv_files(dir, &mut files)?;
    let mut rows: Vec<(String, &str, f64)> = Vec::new();
    for f in &files {
        let rel = f.strip_prefix(dir).unwrap_or(f).display().to_string();
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let metrics: Vec<(&str, Option<f64>)> = if name == "retrain_history.csv" {
            vec![
                ("final_learned_median", last_value(f, "learned_median")?),
                ("final_median", last_value(f, "median")?),
                ("final_mean", last_value(f, "mean")?),
            ]
        } else if name == "online_records.csv" {
            vec![("mean_q_error", column_mean(f, "q_error", None)?)]
        } else if name.starts_with("rl_history_") {
            vec![
                ("final500_q_cost", column_mean(f, "q_cost", Some(500))?),
                ("mean_reward", column_mean(f, "reward", None)?),
            ]
        } else if name.starts_with("theorem_report") {
            let mut r = csv::Reader::from_path(f)?;
            let mut bad = 0.0;
            for rec in r.records() {
                if rec?.get(10) == Some("false") {
                    bad += 1.0;
                }
            }
            vec![("violations", Some(bad))]
        } else if name == "elc_bench.csv" {
            vec![("mean_ratio", column_mean(f, "ratio", None)?)]
        } else {
            vec![]
        };
        for (m, v) in metrics {
            if let Some(v) = v {
                rows.push((rel.clone(), m, v));
            }
        }
    }
    let mut o = Output::create(dir)?;
    o.write("report.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["file", "metric", "value"])?;
        for (file, m, v) in &rows {
            csv.write_record([file.as_str(), m, &v.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    o.write("plot.py", |w| Ok(w.write_all(PLOT_STUB.as_bytes())?))?;
    Ok(o.files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seeds_names_the_field() {
        let err = ExperimentConfig::from_toml("scenario = \"theorem-verify\"\n").unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
        let err = ExperimentConfig::from_toml("seeds = []\n").unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
    }

    #[test]
    fn field_level_validation() {
        let err = ExperimentConfig::from_toml("seeds = [1]\n[eerl]\nalpha = 0.8\nbeta = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("eerl.alpha/beta"), "{err}");
        let err = ExperimentConfig::from_toml("seeds = [1]\n[eedl]\ninterval = 0\n").unwrap_err();
        assert!(err.to_string().contains("eedl.interval"), "{err}");
        let text = "seeds = [1]\n[[tables]]\nname = \"t\"\nrow_count = 0\n\
                    [[tables.columns]]\nname = \"x\"\ndistribution = \"uniform\"\nlo = 1\nhi = 2\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("tables[0].row_count"), "{err}");
        assert!(ExperimentConfig::from_toml("seeds = [1]\nbogus = 3\n").is_err());
    }

    #[test]
    fn config_round_trips_and_hash_is_stable() {
        let text = "scenario = \"eerl-index\"\nseeds = [0, 1]\n[eerl]\ngrid = [[0.2, 0.0], [0.0, 0.2]]\n\
                    [[kb.set]]\nmethod = \"histogram\"\nparameter = \"bucket_count\"\nvalue = 8\n\
                    [[tables]]\nname = \"t\"\nrow_count = 10\n\
                    [[tables.columns]]\nname = \"x\"\ndistribution = { zipf = { s = 1.5 } }\nlo = 1\nhi = 9\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.eerl.schedules().unwrap().len(), 2);
        assert_eq!(cfg.tables[0].columns[0].distribution, Distribution::Zipf { s: 1.5 });
        assert_eq!(
            cfg.knowledge_base().unwrap().get(0).unwrap().parameter("bucket_count"),
            Some(8.0)
        );
        let back = ExperimentConfig::from_toml(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn theorem_run_writes_report_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::for_scenario(ScenarioKind::TheoremVerify, vec![3]);
        cfg.theorem.instances = 500;
        let files = run_theorem(&cfg, dir.path()).unwrap();
        assert_eq!(
            files,
            [PathBuf::from("theorem_report.csv"), PathBuf::from("manifest.txt")]
        );
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.starts_with(&format!("version = {VERSION}\nscenario = theorem-verify\n")));
        assert!(manifest.contains("seeds = 3\n"));
        let first = fs::read(dir.path().join("theorem_report.csv")).unwrap();
        run_theorem(&cfg, dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("theorem_report.csv")).unwrap());
        assert_eq!(manifest, fs::read_to_string(dir.path().join("manifest.txt")).unwrap());
    }

    #[test]
    fn small_eedl_run_has_one_history_row_per_window() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::for_scenario(ScenarioKind::EedlCardinality, vec![0]);
        cfg.tables = vec![TableSpec::new(
            "t",
            vec![
                ColumnSpec::new("a", Distribution::Uniform, 1, 50),
                ColumnSpec::new("b", Distribution::Zipf { s: 1.2 }, 1, 30),
            ],
            2000,
        )];
        cfg.eedl = EedlConfig {
            pretrain_size: 300,
            pretrain_epochs: 5,
            stream_len: 200,
            interval: 50,
            heldout: 50,
            retrain_steps_per_task: 0.2,
            ..EedlConfig::default()
        };
        run_eedl(&cfg, dir.path()).unwrap();
        let hist = fs::read_to_string(dir.path().join("seed_0/retrain_history.csv")).unwrap();
        assert_eq!(hist.lines().count(), 1 + 1 + 4);
        let recs = fs::read_to_string(dir.path().join("seed_0/online_records.csv")).unwrap();
        assert_eq!(recs.lines().count(), 201);

        let files = report(dir.path()).unwrap();
        assert!(files.contains(&PathBuf::from("plot.py")));
        let rep = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(rep.contains("seed_0/retrain_history.csv,final_learned_median,"));
    }

    #[test]
    fn bench_single_query() {
        let spec = bench_table(1000);
        let table = generate_table(&spec, 0).unwrap();
        let templates = random_templates(&spec, 3, 0);
        let (r, weak, strong) = elc_bench(&table, &templates, 1, 0).unwrap();
        assert_eq!(r.queries, 1);
        assert!(r.ratio().is_finite());
        assert_eq!(weak.examples[0].features, strong.examples[0].features);
        let (_, weak2, strong2) = elc_bench(&table, &templates, 1, 0).unwrap();
        assert_eq!((weak, strong), (weak2, strong2));
    }
}
