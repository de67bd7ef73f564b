//! Preference rules: a deterministic transform catalog plus the model-backed
//! protocol that proposes a new annotation rule and relabels a sample.

use std::collections::BTreeSet;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    validate_sample, ArgValue, Entity, GoldLabel, Origin, Relation, SpoTriple, TaskKind,
    UnifiedSample,
};
use crate::llm::{LlmClient, LlmError};
use crate::rng::SeededRng;

pub const CATALOG: &str = include_str!("../data/rules.json");
pub const ORDERS: &str = include_str!("../data/orders.json");
pub const STRATEGY_TEXTS: &str = include_str!("../data/strategies.json");
pub const EXEMPLARS: &str = include_str!("../data/rule_exemplars.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleStrategy {
    EntityBoundaries,
    Numerical,
    Granularity,
    Punctuation,
    Nesting,
    Reverse,
}

impl RuleStrategy {
    pub const ALL: [RuleStrategy; 6] = [
        RuleStrategy::EntityBoundaries,
        RuleStrategy::Numerical,
        RuleStrategy::Granularity,
        RuleStrategy::Punctuation,
        RuleStrategy::Nesting,
        RuleStrategy::Reverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleStrategy::EntityBoundaries => "ENTITY_BOUNDARIES",
            RuleStrategy::Numerical => "NUMERICAL",
            RuleStrategy::Granularity => "GRANULARITY",
            RuleStrategy::Punctuation => "PUNCTUATION",
            RuleStrategy::Nesting => "NESTING",
            RuleStrategy::Reverse => "REVERSE",
        }
    }
}

impl std::fmt::Display for RuleStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RuleStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleStrategy::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown rule strategy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keep {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    BoundaryTrim { prefixes: Vec<String> },
    BoundaryExtend { prefixes: Vec<String> },
    KeepFirstK { k: usize },
    KeepByOrder { order: String, keep: Keep },
    UnitInclude { units: Vec<String> },
    UnitStrip { units: Vec<String> },
    QuoteInclude { pairs: Vec<(String, String)> },
    QuoteStrip { pairs: Vec<(String, String)> },
    NestedDropInner,
    NestedKeepInner,
    ReverseWithInverse { inverse: String },
}

impl Transform {
    pub fn supports(&self, task: TaskKind) -> bool {
        use TaskKind::*;
        match self {
            Transform::BoundaryTrim { .. } | Transform::BoundaryExtend { .. } => task == Ner,
            Transform::UnitInclude { .. } | Transform::UnitStrip { .. } => {
                matches!(task, Ner | Ee | Eea)
            }
            Transform::QuoteInclude { .. } | Transform::QuoteStrip { .. } => {
                matches!(task, Ner | Ee | Eea)
            }
            Transform::KeepFirstK { .. } => matches!(task, Ner | Re),
            Transform::KeepByOrder { .. }
            | Transform::NestedDropInner
            | Transform::NestedKeepInner => task == Ner,
            Transform::ReverseWithInverse { .. } => matches!(task, Re | Spo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRule {
    pub id: String,
    pub strategy: RuleStrategy,
    pub rule_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    pub applicable_tasks: BTreeSet<TaskKind>,
    /// Schema labels the rule targets; empty means every label.
    #[serde(default)]
    pub labels: Vec<String>,
}

impl PreferenceRule {
    pub fn is_deterministic(&self) -> bool {
        self.transform.is_some()
    }

    /// Labels of `sample`'s schema this rule acts on.
    pub fn targets(&self, sample: &UnifiedSample) -> Vec<String> {
        sample
            .schema
            .names()
            .filter(|n| self.labels.is_empty() || self.labels.iter().any(|l| l == n))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("rule `{0}` has no deterministic transform")]
    NotDeterministic(String),
    #[error("rule `{rule}` does not apply to {task}")]
    TaskNotApplicable { rule: String, task: TaskKind },
    #[error("rule `{0}` matches no label of the sample")]
    NoMatchingLabel(String),
    #[error("ordering `{0}` is not defined")]
    UnknownOrder(String),
    #[error("expected 2 exemplars, got {0}")]
    WrongExemplarCount(usize),
    #[error("response has no `{0}` field")]
    MissingField(String),
    #[error("cannot read the new label: {0}")]
    UnparsableLabel(String),
    #[error("new label does not fit the schema: {0}")]
    InvalidNewGold(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid rule catalog: {0}")]
    InvalidCatalog(String),
}

/// Ordering ladders: each level is a list of aliases, lowest level first.
pub type Orders = IndexMap<String, Vec<Vec<String>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RuleCatalog {
    pub rules: Vec<PreferenceRule>,
    pub orders: Orders,
}

impl RuleCatalog {
    pub fn builtin() -> Self {
        Self::from_json(CATALOG, ORDERS).expect("builtin rule catalog is valid")
    }

    pub fn from_json(rules: &str, orders: &str) -> Result<Self, RuleError> {
        let rules: Vec<PreferenceRule> =
            serde_json::from_str(rules).map_err(|e| RuleError::InvalidCatalog(e.to_string()))?;
        let orders: Orders =
            serde_json::from_str(orders).map_err(|e| RuleError::InvalidCatalog(e.to_string()))?;
        let c = Self { rules, orders };
        c.validate()?;
        Ok(c)
    }

    /// Reads a catalog file; orders come from `orders` or the builtin ladders.
    pub fn load(rules: impl AsRef<Path>, orders: Option<&Path>) -> Result<Self, RuleError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| RuleError::InvalidCatalog(format!("{}: {e}", p.display())))
        };
        let r = read(rules.as_ref())?;
        let o = match orders {
            Some(p) => read(p)?,
            None => ORDERS.to_string(),
        };
        Self::from_json(&r, &o)
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        let mut ids = BTreeSet::new();
        for r in &self.rules {
            if !ids.insert(&r.id) {
                return Err(RuleError::InvalidCatalog(format!(
                    "duplicate rule id `{}`",
                    r.id
                )));
            }
            if let Some(t) = &r.transform {
                if let Some(bad) = r.applicable_tasks.iter().find(|task| !t.supports(**task)) {
                    return Err(RuleError::InvalidCatalog(format!(
                        "rule `{}` cannot act on {bad}",
                        r.id
                    )));
                }
                if let Transform::KeepByOrder { order, .. } = t {
                    if !self.orders.contains_key(order) {
                        return Err(RuleError::UnknownOrder(order.clone()));
                    }
                }
                if matches!(t, Transform::ReverseWithInverse { .. }) && r.labels.len() != 1 {
                    return Err(RuleError::InvalidCatalog(format!(
                        "reverse rule `{}` needs exactly one label",
                        r.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PreferenceRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Deterministic rules that can act on `sample`, in catalog order.
    pub fn applicable<'a>(&'a self, sample: &UnifiedSample) -> Vec<&'a PreferenceRule> {
        self.rules
            .iter()
            .filter(|r| {
                r.is_deterministic()
                    && r.applicable_tasks.contains(&sample.task)
                    && !r.targets(sample).is_empty()
            })
            .collect()
    }
}

fn fixpoint(mut s: String, step: impl Fn(&str) -> Option<String>) -> String {
    while let Some(next) = step(&s) {
        if next == s {
            break;
        }
        s = next;
    }
    s
}

fn trim_prefix(span: &str, prefixes: &[String]) -> String {
    fixpoint(span.to_string(), |s| {
        prefixes.iter().find_map(|p| {
            let rest = s.strip_prefix(p.as_str())?;
            let rest = rest.strip_prefix(' ')?.trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
    })
}

fn extend_prefix(span: &str, text: &str, prefixes: &[String]) -> String {
    fixpoint(span.to_string(), |s| {
        prefixes.iter().find_map(|p| {
            let longer = format!("{p} {s}");
            text.contains(&longer).then_some(longer)
        })
    })
}

fn include_units(span: &str, text: &str, units: &[String]) -> String {
    fixpoint(span.to_string(), |s| {
        for u in units {
            if s.starts_with(u.as_str()) || s.ends_with(u.as_str()) {
                continue;
            }
            for cand in [
                format!("{u} {s}"),
                format!("{u}{s}"),
                format!("{s} {u}"),
                format!("{s}{u}"),
            ] {
                if text.contains(&cand) {
                    return Some(cand);
                }
            }
        }
        None
    })
}

fn strip_units(span: &str, units: &[String]) -> String {
    fixpoint(span.to_string(), |s| {
        units.iter().find_map(|u| {
            let rest = s
                .strip_prefix(u.as_str())
                .or_else(|| s.strip_suffix(u.as_str()))?
                .trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
    })
}

fn include_quotes(span: &str, text: &str, pairs: &[(String, String)]) -> String {
    if pairs.iter().any(|(o, c)| {
        span.starts_with(o.as_str()) && span.ends_with(c.as_str()) && span.len() > o.len() + c.len()
    }) {
        return span.to_string();
    }
    pairs
        .iter()
        .map(|(o, c)| format!("{o}{span}{c}"))
        .find(|cand| text.contains(cand))
        .unwrap_or_else(|| span.to_string())
}

fn strip_quotes(span: &str, pairs: &[(String, String)]) -> String {
    fixpoint(span.to_string(), |s| {
        pairs.iter().find_map(|(o, c)| {
            let inner = s.strip_prefix(o.as_str())?.strip_suffix(c.as_str())?.trim();
            (!inner.is_empty()).then(|| inner.to_string())
        })
    })
}

fn rank(span: &str, ladder: &[Vec<String>]) -> Option<usize> {
    let lower = span.to_lowercase();
    ladder
        .iter()
        .enumerate()
        .rev()
        .find(|(_, aliases)| aliases.iter().any(|a| lower.contains(&a.to_lowercase())))
        .map(|(i, _)| i)
}

fn dedup_entities(v: Vec<Entity>) -> Vec<Entity> {
    let mut out: Vec<Entity> = Vec::with_capacity(v.len());
    for e in v {
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

fn map_spans(gold: &GoldLabel, targets: &[String], f: &dyn Fn(&str) -> String) -> GoldLabel {
    let hit = |l: &str| targets.iter().any(|t| t == l);
    match gold {
        GoldLabel::EntitySet(v) => GoldLabel::EntitySet(dedup_entities(
            v.iter()
                .map(|e| {
                    if hit(&e.label) {
                        Entity::new(&e.label, f(&e.span))
                    } else {
                        e.clone()
                    }
                })
                .collect(),
        )),
        GoldLabel::EventSet(v) => GoldLabel::EventSet(
            v.iter()
                .map(|ev| {
                    if !hit(&ev.event_type) {
                        return ev.clone();
                    }
                    let mut ev = ev.clone();
                    for val in ev.arguments.values_mut() {
                        *val = match val {
                            ArgValue::Nan => ArgValue::Nan,
                            ArgValue::Text(s) => ArgValue::Text(f(s)),
                            ArgValue::List(items) => {
                                ArgValue::List(items.iter().map(|s| f(s)).collect())
                            }
                        };
                    }
                    ev
                })
                .collect(),
        ),
        other => other.clone(),
    }
}

fn apply_transform(
    t: &Transform,
    sample: &UnifiedSample,
    targets: &[String],
    orders: &Orders,
) -> Result<(GoldLabel, IndexMap<String, String>), RuleError> {
    let text = sample.text.as_str();
    let hit = |l: &str| targets.iter().any(|x| x == l);
    let no_rename = IndexMap::new();
    let gold = match t {
        Transform::BoundaryTrim { prefixes } => {
            map_spans(&sample.gold, targets, &|s| trim_prefix(s, prefixes))
        }
        Transform::BoundaryExtend { prefixes } => {
            map_spans(&sample.gold, targets, &|s| extend_prefix(s, text, prefixes))
        }
        Transform::UnitInclude { units } => {
            map_spans(&sample.gold, targets, &|s| include_units(s, text, units))
        }
        Transform::UnitStrip { units } => {
            map_spans(&sample.gold, targets, &|s| strip_units(s, units))
        }
        Transform::QuoteInclude { pairs } => {
            map_spans(&sample.gold, targets, &|s| include_quotes(s, text, pairs))
        }
        Transform::QuoteStrip { pairs } => {
            map_spans(&sample.gold, targets, &|s| strip_quotes(s, pairs))
        }
        Transform::KeepFirstK { k } => match &sample.gold {
            GoldLabel::EntitySet(v) => {
                let mut seen: IndexMap<&str, usize> = IndexMap::new();
                GoldLabel::EntitySet(
                    v.iter()
                        .filter(|e| {
                            if !hit(&e.label) {
                                return true;
                            }
                            let c = seen.entry(e.label.as_str()).or_default();
                            *c += 1;
                            *c <= *k
                        })
                        .cloned()
                        .collect(),
                )
            }
            GoldLabel::RelationSet(v) => {
                let mut seen: IndexMap<&str, usize> = IndexMap::new();
                GoldLabel::RelationSet(
                    v.iter()
                        .filter(|r| {
                            if !hit(&r.predicate) {
                                return true;
                            }
                            let c = seen.entry(r.predicate.as_str()).or_default();
                            *c += 1;
                            *c <= *k
                        })
                        .cloned()
                        .collect(),
                )
            }
            other => other.clone(),
        },
        Transform::KeepByOrder { order, keep } => {
            let ladder = orders
                .get(order)
                .ok_or_else(|| RuleError::UnknownOrder(order.clone()))?;
            let GoldLabel::EntitySet(v) = &sample.gold else {
                return Ok((sample.gold.clone(), no_rename));
            };
            let mut out = Vec::new();
            for label in targets {
                let group: Vec<&Entity> = v.iter().filter(|e| &e.label == label).collect();
                let ranks: Vec<Option<usize>> =
                    group.iter().map(|e| rank(&e.span, ladder)).collect();
                let best = match keep {
                    Keep::Max => ranks.iter().flatten().max(),
                    Keep::Min => ranks.iter().flatten().min(),
                };
                for (e, r) in group.iter().zip(&ranks) {
                    if best.is_none() || r.as_ref() == best {
                        out.push((*e).clone());
                    }
                }
            }
            let kept: Vec<Entity> = v
                .iter()
                .filter(|e| !hit(&e.label) || out.contains(e))
                .cloned()
                .collect();
            GoldLabel::EntitySet(kept)
        }
        Transform::NestedDropInner | Transform::NestedKeepInner => {
            let GoldLabel::EntitySet(v) = &sample.gold else {
                return Ok((sample.gold.clone(), no_rename));
            };
            let scoped: Vec<&Entity> = v.iter().filter(|e| hit(&e.label)).collect();
            let strictly_inside = |a: &str, b: &str| a.len() < b.len() && b.contains(a);
            let drop_inner = matches!(t, Transform::NestedDropInner);
            GoldLabel::EntitySet(
                v.iter()
                    .filter(|e| {
                        if !hit(&e.label) {
                            return true;
                        }
                        let nested = if drop_inner {
                            scoped.iter().any(|o| strictly_inside(&e.span, &o.span))
                        } else {
                            scoped.iter().any(|o| strictly_inside(&o.span, &e.span))
                        };
                        !nested
                    })
                    .cloned()
                    .collect(),
            )
        }
        Transform::ReverseWithInverse { inverse } => {
            let label = &targets[0];
            let rename = IndexMap::from([(label.clone(), inverse.clone())]);
            let gold = match &sample.gold {
                GoldLabel::RelationSet(v) => GoldLabel::RelationSet(
                    v.iter()
                        .map(|r| {
                            if &r.predicate == label {
                                Relation::new(inverse, &r.object, &r.subject)
                            } else {
                                r.clone()
                            }
                        })
                        .collect(),
                ),
                GoldLabel::SpoSet(v) => GoldLabel::SpoSet(
                    v.iter()
                        .map(|t| {
                            if &t.predicate == label {
                                SpoTriple {
                                    predicate: inverse.clone(),
                                    subject: t.object.clone(),
                                    subject_type: t.object_type.clone(),
                                    object: t.subject.clone(),
                                    object_type: t.subject_type.clone(),
                                }
                            } else {
                                t.clone()
                            }
                        })
                        .collect(),
                ),
                other => other.clone(),
            };
            return Ok((gold, rename));
        }
    };
    Ok((gold, no_rename))
}

/// Applies a deterministic rule. The result carries the rule text on every
/// targeted schema entry and remembers the original gold.
pub fn apply_rule(
    rule: &PreferenceRule,
    sample: &UnifiedSample,
    orders: &Orders,
) -> Result<UnifiedSample, RuleError> {
    let t = rule
        .transform
        .as_ref()
        .ok_or_else(|| RuleError::NotDeterministic(rule.id.clone()))?;
    if !rule.applicable_tasks.contains(&sample.task) || !t.supports(sample.task) {
        return Err(RuleError::TaskNotApplicable {
            rule: rule.id.clone(),
            task: sample.task,
        });
    }
    let targets = rule.targets(sample);
    if targets.is_empty() {
        return Err(RuleError::NoMatchingLabel(rule.id.clone()));
    }
    let (gold, rename) = apply_transform(t, sample, &targets, orders)?;
    let mut schema = sample.schema.clone();
    if let Transform::ReverseWithInverse { inverse } = t {
        if schema.contains(inverse) {
            return Err(RuleError::InvalidNewGold(format!(
                "schema already has `{inverse}`"
            )));
        }
        if let Some(e) = schema.get_mut(&targets[0]) {
            e.name = inverse.clone();
            let c = &mut e.constraints;
            std::mem::swap(&mut c.subject_type, &mut c.object_type);
        }
    }
    for label in &targets {
        let name = rename.get(label).unwrap_or(label);
        if let Some(e) = schema.get_mut(name) {
            e.constraints.rule = Some(rule.rule_text.clone());
        }
    }
    Ok(derived(sample, &rule.id, schema, gold))
}

fn derived(
    sample: &UnifiedSample,
    rule_id: &str,
    schema: crate::corpus::TaskSchema,
    gold: GoldLabel,
) -> UnifiedSample {
    let original = sample
        .origin
        .as_ref()
        .map(|o| o.original_gold.clone())
        .unwrap_or_else(|| sample.gold.clone());
    UnifiedSample {
        id: format!("{}@{rule_id}", sample.id),
        schema,
        gold,
        origin: Some(Origin {
            rule_id: rule_id.to_string(),
            original_gold: original,
        }),
        ..sample.clone()
    }
}

/// One worked example shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleExemplar {
    pub strategy: RuleStrategy,
    pub text: String,
    pub schema: String,
    pub label: String,
    pub schema_description: String,
    pub original_rule: String,
    pub new_rule: String,
    pub new_label: String,
}

pub fn builtin_exemplars() -> Vec<RuleExemplar> {
    serde_json::from_str(EXEMPLARS).expect("builtin exemplars are valid")
}

pub fn builtin_strategy_texts() -> IndexMap<RuleStrategy, String> {
    serde_json::from_str(STRATEGY_TEXTS).expect("builtin strategy texts are valid")
}

/// Exemplars of one strategy, in file order.
pub fn exemplars_for(all: &[RuleExemplar], strategy: RuleStrategy) -> Vec<RuleExemplar> {
    all.iter()
        .filter(|e| e.strategy == strategy)
        .cloned()
        .collect()
}

fn rule_instruction(task: TaskKind) -> String {
    format!(
        "You are an expert of {}. In order to improve the model's compliance with instructions, please give the description of the given schema, and generate the annotation rule, follow by which the original output meets. Then read the modification strategy and 2 example given as follows, determine whether it is possible to make slight adjustments to the origin rule to generate a new rule, and return annotated result that complies with the new rule.",
        task.as_str()
    )
}

/// The gold as shown after `Label:`. A single-label entity set is a plain
/// list of mentions; everything else is compact JSON.
pub fn label_payload(sample: &UnifiedSample) -> String {
    match (&sample.gold, sample.schema.len()) {
        (GoldLabel::EntitySet(v), 1) => {
            let items: Vec<String> = v
                .iter()
                .map(|e| serde_json::to_string(&e.span).expect("string serializes"))
                .collect();
            format!("[{}]", items.join(", "))
        }
        (g, _) => serde_json::to_string(&crate::formats::to_json_value(
            g,
            sample.task,
            &sample.schema,
        ))
        .expect("json serializes"),
    }
}

fn render_exemplar(i: usize, e: &RuleExemplar) -> String {
    format!(
        "Example {i}:\nText: {}\nSchema: {}\nLabel: {}\nSchema Description: {}\nOriginal Rule: {}\nNew Rule: {}\nNew Label: {}",
        e.text, e.schema, e.label, e.schema_description, e.original_rule, e.new_rule, e.new_label
    )
}

/// Builds the relabeling prompt: instruction, strategy, examples, text,
/// schema and current label, in that order.
pub fn build_rule_prompt(
    sample: &UnifiedSample,
    strategy_text: &str,
    exemplars: &[RuleExemplar],
) -> Result<String, RuleError> {
    if exemplars.len() != 2 {
        return Err(RuleError::WrongExemplarCount(exemplars.len()));
    }
    let schema: Vec<&str> = sample.schema.names().collect();
    let examples: Vec<String> = exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| render_exemplar(i + 1, e))
        .collect();
    Ok(format!(
        "Instruction: {}\nModification Strategy: {}\nExamples:\n{}\nText: {}\nSchema: {}\nLabel: {}",
        rule_instruction(sample.task),
        strategy_text,
        examples.join("\n"),
        sample.text,
        schema.join(", "),
        label_payload(sample)
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleProposal {
    pub schema_description: String,
    pub original_rule: String,
    pub new_rule: String,
    pub new_gold: GoldLabel,
}

const FIELDS: [&str; 4] = [
    "schema description",
    "original rule",
    "new rule",
    "new label",
];

fn header_of(line: &str) -> Option<(usize, &str)> {
    let stripped =
        line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '-' | '>'));
    let colon = stripped.find(':')?;
    let head: String = stripped[..colon]
        .trim_end_matches(['*', ' '])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    let idx = FIELDS.iter().position(|f| *f == head)?;
    let rest = stripped[colon + 1..].trim_start_matches(['*']).trim();
    Some((idx, rest))
}

fn normalize_quotes(s: &str) -> String {
    s.replace("``", "\"")
        .replace("''", "\"")
        .replace(['“', '”', '„'], "\"")
}

fn parse_label(payload: &str, sample: &UnifiedSample) -> Result<GoldLabel, RuleError> {
    let text = normalize_quotes(payload.trim());
    if sample.task == TaskKind::Ner && sample.schema.len() == 1 {
        if let Ok(items) = serde_json::from_str::<Vec<String>>(&text) {
            let label = &sample.schema.entries[0].name;
            return Ok(GoldLabel::EntitySet(
                items.into_iter().map(|s| Entity::new(label, s)).collect(),
            ));
        }
    }
    crate::formats::parse(
        &text,
        sample.task,
        crate::formats::OutputFormat::Json,
        &sample.schema,
    )
    .map_err(|e| RuleError::UnparsableLabel(e.to_string()))
}

/// Reads the four answer fields in any order, tolerating case, spacing and
/// markdown emphasis around the headers.
pub fn parse_rule_response(text: &str, sample: &UnifiedSample) -> Result<RuleProposal, RuleError> {
    let mut values: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some((idx, rest)) = header_of(line) {
            if values[idx].is_none() {
                values[idx] = Some(rest.to_string());
                current = Some(idx);
                continue;
            }
        }
        if let Some(i) = current {
            let v = values[i].as_mut().expect("current field is set");
            if !line.trim().is_empty() {
                if !v.is_empty() {
                    v.push('\n');
                }
                v.push_str(line.trim());
            }
        }
    }
    let take = |i: usize| -> Result<String, RuleError> {
        values[i]
            .clone()
            .map(|v| v.trim().to_string())
            .ok_or_else(|| RuleError::MissingField(titlecase(FIELDS[i])))
    };
    let schema_description = take(0)?;
    let original_rule = take(1)?;
    let new_rule = take(2)?;
    let payload = take(3)?;
    let new_gold = parse_label(&payload, sample)?;
    let mut probe = sample.clone();
    probe.gold = new_gold.clone();
    let violations = validate_sample(&probe);
    if let Some(v) = violations.first() {
        return Err(RuleError::InvalidNewGold(v.detail.clone()));
    }
    Ok(RuleProposal {
        schema_description,
        original_rule,
        new_rule,
        new_gold: new_gold.normalized(sample.task, &sample.schema),
    })
}

fn titlecase(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleOutcome {
    Sample(Box<UnifiedSample>),
    Skip { sample_id: String, reason: String },
}

/// Everything the model-backed synthesis needs besides the sample.
pub struct RuleKit<'a> {
    pub catalog: &'a RuleCatalog,
    pub exemplars: &'a [RuleExemplar],
    pub strategy_texts: &'a IndexMap<RuleStrategy, String>,
}

pub const CORRECTION_NOTE: &str = "Note: the previous answer could not be used. Give all four fields, and make the New Label a valid annotation for the schema.";

/// Asks the model for a new rule and label. One retry with a correction note,
/// then a deterministic rule of the same strategy, then a skip.
pub fn synthesize_rule_sample(
    sample: &UnifiedSample,
    strategy: RuleStrategy,
    llm: &LlmClient,
    kit: &RuleKit<'_>,
    seed: u64,
) -> Result<RuleOutcome, RuleError> {
    let text = kit
        .strategy_texts
        .get(&strategy)
        .cloned()
        .unwrap_or_else(|| format!("#{strategy}"));
    let exemplars = exemplars_for(kit.exemplars, strategy);
    let prompt = build_rule_prompt(sample, &text, &exemplars)?;
    let mut last_err = String::new();
    for attempt in 0..2 {
        let p = if attempt == 0 {
            prompt.clone()
        } else {
            format!("{prompt}\n{CORRECTION_NOTE}")
        };
        let response = llm.complete(&p)?;
        match parse_rule_response(&response, sample) {
            Ok(prop) => {
                let mut schema = sample.schema.clone();
                for e in schema.entries.iter_mut() {
                    e.constraints.rule = Some(prop.new_rule.clone());
                    if e.description.is_none() && schema_len_one(&sample.schema) {
                        e.description = Some(prop.schema_description.clone());
                    }
                }
                let rule_id = format!("llm-{}", strategy.as_str().to_lowercase());
                return Ok(RuleOutcome::Sample(Box::new(derived(
                    sample,
                    &rule_id,
                    schema,
                    prop.new_gold,
                ))));
            }
            Err(e) => {
                log::debug!("rule response for {} rejected: {e}", sample.id);
                last_err = e.to_string();
            }
        }
    }
    let fallback: Vec<&PreferenceRule> = kit
        .catalog
        .applicable(sample)
        .into_iter()
        .filter(|r| r.strategy == strategy)
        .collect();
    let mut rng = SeededRng::derive(seed, &sample.id, "rule");
    if let Some(rule) = fallback.choose(&mut rng) {
        return Ok(RuleOutcome::Sample(Box::new(apply_rule(
            rule,
            sample,
            &kit.catalog.orders,
        )?)));
    }
    Ok(RuleOutcome::Skip {
        sample_id: sample.id.clone(),
        reason: last_err,
    })
}

fn schema_len_one(s: &crate::corpus::TaskSchema) -> bool {
    s.len() == 1
}
