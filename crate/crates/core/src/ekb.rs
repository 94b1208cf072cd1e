//! Experience knowledge base: standardized rule-based methods, each tagged
//! with a feature vector describing where it applies, matched against a
//! demand vector by cosine similarity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::synthdb::{CardinalityEstimator, ColdStart, TableStats};
use crate::{Error, Result};

/// Default similarity below which the selected method is re-chosen.
pub const DEFAULT_UPDATE_THRESHOLD: f64 = 0.75;

macro_rules! tag_enum {
    ($name:ident { $($variant:ident => $tag:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn tag(self) -> &'static str {
                match self { $($name::$variant => $tag),+ }
            }

            fn from_tag(s: &str) -> Option<Self> {
                match s { $($tag => Some($name::$variant),)+ _ => None }
            }
        }
    };
}

tag_enum!(TaskKind { Cardinality => "cardinality", Index => "index" });
tag_enum!(Goal { Accuracy => "accuracy", Cost => "cost", Time => "time" });
tag_enum!(DataModel { Relational => "relational", Graph => "graph", KeyValue => "kv" });
tag_enum!(Mode { Online => "online", Offline => "offline" });

/// Applicability profile of a method, or the demand of a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FeatureTagVector {
    pub task: TaskKind,
    pub goal: Goal,
    pub data_model: DataModel,
    pub mode: Mode,
    pub multi_column: bool,
}

impl FeatureTagVector {
    pub const WIDTH: usize = 12;

    pub fn new(task: TaskKind, goal: Goal, data_model: DataModel, mode: Mode, multi_column: bool) -> Self {
        FeatureTagVector {
            task,
            goal,
            data_model,
            mode,
            multi_column,
        }
    }

    /// One-hot per slot; the multi-column flag is a two-way slot too.
    pub fn encode(&self) -> [f64; Self::WIDTH] {
        let mut v = [0.0; Self::WIDTH];
        let mut off = 0;
        let mut hot = |idx: usize, len: usize| {
            v[off + idx] = 1.0;
            off += len;
        };
        hot(self.task as usize, TaskKind::ALL.len());
        hot(self.goal as usize, Goal::ALL.len());
        hot(self.data_model as usize, DataModel::ALL.len());
        hot(self.mode as usize, Mode::ALL.len());
        hot(usize::from(self.multi_column), 2);
        v
    }

    pub fn similarity(&self, other: &FeatureTagVector) -> f64 {
        let (a, b) = (self.encode(), other.encode());
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        dot / (na * nb).sqrt()
    }

    pub fn tags(&self) -> Vec<String> {
        vec![
            self.task.tag().into(),
            self.goal.tag().into(),
            self.data_model.tag().into(),
            self.mode.tag().into(),
            if self.multi_column { "multi" } else { "single" }.into(),
        ]
    }

    /// Parses one tag per slot, in any order. Missing or doubled slots are
    /// errors.
    pub fn from_tags<S: AsRef<str>>(tags: &[S]) -> Result<Self> {
        let mut task = None;
        let mut goal = None;
        let mut data = None;
        let mut mode = None;
        let mut multi = None;
        fn set<T>(slot: &mut Option<T>, v: T, name: &str) -> Result<()> {
            if slot.replace(v).is_some() {
                return Err(Error::invalid("feature", format!("more than one {name} tag")));
            }
            Ok(())
        }
        for t in tags {
            let t = t.as_ref().trim();
            if let Some(v) = TaskKind::from_tag(t) {
                set(&mut task, v, "task")?;
            } else if let Some(v) = Goal::from_tag(t) {
                set(&mut goal, v, "goal")?;
            } else if let Some(v) = DataModel::from_tag(t) {
                set(&mut data, v, "data-model")?;
            } else if let Some(v) = Mode::from_tag(t) {
                set(&mut mode, v, "mode")?;
            } else if t == "multi" || t == "single" {
                set(&mut multi, t == "multi", "multi-column")?;
            } else {
                return Err(Error::invalid("feature", format!("unknown tag `{t}`")));
            }
        }
        let missing = |n: &str| Error::invalid("feature", format!("missing {n} tag"));
        Ok(FeatureTagVector {
            task: task.ok_or_else(|| missing("task"))?,
            goal: goal.ok_or_else(|| missing("goal"))?,
            data_model: data.ok_or_else(|| missing("data-model"))?,
            mode: mode.ok_or_else(|| missing("mode"))?,
            multi_column: multi.ok_or_else(|| missing("multi-column"))?,
        })
    }
}

impl fmt::Display for FeatureTagVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.tags().join(", "))
    }
}

impl FromStr for FeatureTagVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let tags: Vec<&str> = inner
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        Self::from_tags(&tags)
    }
}

/// Executable rule behaviors shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Behavior {
    /// Histogram selectivities under attribute independence.
    HistogramEstimator,
    /// Fixed default selectivities, no statistics.
    ColdStartEstimator,
    /// Build frequent candidates, drop infrequent ones.
    FrequencyIndexRules,
}

impl Behavior {
    pub const ALL: &'static [Behavior] = &[
        Behavior::HistogramEstimator,
        Behavior::ColdStartEstimator,
        Behavior::FrequencyIndexRules,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Behavior::HistogramEstimator => "histogram-estimator",
            Behavior::ColdStartEstimator => "cold-start-estimator",
            Behavior::FrequencyIndexRules => "frequency-index-rules",
        }
    }

    pub fn resolve(id: &str) -> Result<Behavior> {
        Behavior::ALL
            .iter()
            .copied()
            .find(|b| b.id() == id)
            .ok_or_else(|| Error::UnknownBehavior(id.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
}

/// Unstandardized method description, also the persisted record format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    pub name: String,
    pub behavior: String,
    pub input: Vec<String>,
    pub output: String,
    #[serde(default)]
    pub parameters: Vec<Parameter>,
    pub feature: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleMethod {
    pub name: String,
    pub input: Vec<String>,
    pub output: String,
    pub parameters: Vec<Parameter>,
    pub feature: FeatureTagVector,
    pub behavior: Behavior,
}

pub fn standardize(raw: &MethodDescriptor) -> Result<RuleMethod> {
    let behavior = Behavior::resolve(&raw.behavior)?;
    let feature = FeatureTagVector::from_tags(&raw.feature)?;
    Ok(RuleMethod {
        name: raw.name.clone(),
        input: raw.input.clone(),
        output: raw.output.clone(),
        parameters: raw.parameters.clone(),
        feature,
        behavior,
    })
}

impl RuleMethod {
    pub fn descriptor(&self) -> MethodDescriptor {
        MethodDescriptor {
            name: self.name.clone(),
            behavior: self.behavior.id().to_string(),
            input: self.input.clone(),
            output: self.output.clone(),
            parameters: self.parameters.clone(),
            feature: self.feature.tags(),
        }
    }

    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    /// The estimator this method runs, if it is a cardinality method.
    pub fn cardinality_estimator<'a>(&self, stats: &'a TableStats) -> Option<Box<dyn CardinalityEstimator + 'a>> {
        match self.behavior {
            Behavior::HistogramEstimator => Some(Box::new(stats)),
            Behavior::ColdStartEstimator => Some(Box::new(ColdStart {
                row_count: stats.row_count,
            })),
            Behavior::FrequencyIndexRules => None,
        }
    }
}

impl<T: CardinalityEstimator + ?Sized> CardinalityEstimator for &T {
    fn estimate(&self, query: &crate::workload::Query) -> Result<f64> {
        (**self).estimate(query)
    }
}

fn param(name: &str, value: f64) -> Parameter {
    Parameter {
        name: name.into(),
        value,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    entries: Vec<RuleMethod>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub index: usize,
    pub similarity: f64,
}

#[derive(Serialize, Deserialize)]
struct KbFile {
    entry: Vec<MethodDescriptor>,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<RuleMethod>) -> Result<Self> {
        let mut kb = KnowledgeBase { entries: Vec::new() };
        for e in entries {
            kb.insert(e)?;
        }
        Ok(kb)
    }

    /// The in-box methods: two cardinality estimators and two index rule
    /// sets (online frequency rules and a conservative offline drop-style
    /// variant).
    pub fn with_defaults() -> Self {
        let raw = [
            MethodDescriptor {
                name: "histogram".into(),
                behavior: Behavior::HistogramEstimator.id().into(),
                input: vec!["table".into(), "query".into()],
                output: "cardinality".into(),
                parameters: vec![param("bucket_count", crate::synthdb::DEFAULT_BUCKETS as f64)],
                feature: tags("cardinality accuracy relational online multi"),
            },
            MethodDescriptor {
                name: "cold-start".into(),
                behavior: Behavior::ColdStartEstimator.id().into(),
                input: vec!["query".into()],
                output: "cardinality".into(),
                parameters: vec![
                    param("eq_selectivity", crate::synthdb::COLD_EQ_SELECTIVITY),
                    param("range_selectivity", crate::synthdb::COLD_RANGE_SELECTIVITY),
                ],
                feature: tags("cardinality time relational online multi"),
            },
            MethodDescriptor {
                name: "frequency-rules".into(),
                behavior: Behavior::FrequencyIndexRules.id().into(),
                input: vec!["table".into(), "workload".into()],
                output: "indexes".into(),
                parameters: vec![param("f_low", 0.05), param("f_high", 0.2)],
                feature: tags("index cost relational online multi"),
            },
            MethodDescriptor {
                name: "drop".into(),
                behavior: Behavior::FrequencyIndexRules.id().into(),
                input: vec!["table".into(), "workload".into()],
                output: "indexes".into(),
                parameters: vec![param("f_low", 0.1), param("f_high", 0.3)],
                feature: tags("index cost relational offline multi"),
            },
        ];
        let entries = raw
            .iter()
            .map(|d| standardize(d).expect("in-box descriptors are valid"))
            .collect();
        KnowledgeBase::new(entries).expect("in-box features are distinct")
    }

    pub fn insert(&mut self, method: RuleMethod) -> Result<()> {
        if self.entries.iter().any(|e| e.feature == method.feature) {
            return Err(Error::invalid(
                "feature",
                format!("an entry with feature {} already exists", method.feature),
            ));
        }
        self.entries.push(method);
        Ok(())
    }

    pub fn entries(&self) -> &[RuleMethod] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> Option<&RuleMethod> {
        self.entries.get(index)
    }

    /// Sets (or adds) a parameter on the entry named `method`.
    pub fn set_parameter(&mut self, method: &str, name: &str, value: f64) -> Result<()> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.name == method)
            .ok_or_else(|| Error::invalid("method", format!("no entry named `{method}`")))?;
        match entry.parameters.iter_mut().find(|p| p.name == name) {
            Some(p) => p.value = value,
            None => entry.parameters.push(param(name, value)),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry most similar to `demand`; ties go to the lowest index.
    pub fn match_method(&self, demand: &FeatureTagVector) -> Result<Match> {
        let mut best: Option<Match> = None;
        for (index, e) in self.entries.iter().enumerate() {
            let similarity = e.feature.similarity(demand);
            if best.is_none_or(|b| similarity > b.similarity) {
                best = Some(Match { index, similarity });
            }
        }
        best.ok_or(Error::EmptyKnowledgeBase)
    }

    pub fn to_toml(&self) -> String {
        let file = KbFile {
            entry: self.entries.iter().map(RuleMethod::descriptor).collect(),
        };
        toml::to_string(&file).expect("descriptors serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: KbFile = toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        let entries = file.entry.iter().map(standardize).collect::<Result<_>>()?;
        KnowledgeBase::new(entries)
    }
}

/// Whether the current method has drifted too far from the environment.
pub fn needs_update(current: &RuleMethod, env_demand: &FeatureTagVector, threshold: f64) -> bool {
    current.feature.similarity(env_demand) < threshold
}

fn tags(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}
