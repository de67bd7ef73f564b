//! Unified sample representation and the line-delimited corpus format.
//!
//! Every labeled example, whatever its task, is held as a [`UnifiedSample`]:
//! the source passage, the slice of the label schema that applies to it, and
//! a [`GoldLabel`] whose variant is fixed by the [`TaskKind`]. Corpora are
//! stored one JSON object per line with the keys `id`, `task`, `text`,
//! `schema`, `gold`, `source` and `language` (plus `origin` for samples
//! derived by a preference rule).

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::provenance::Provenance;

/// The literal used for a non-existent event argument.
pub const NAN: &str = "NAN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "SPO")]
    Spo,
    #[serde(rename = "EE")]
    Ee,
    #[serde(rename = "EET")]
    Eet,
    #[serde(rename = "EEA")]
    Eea,
    #[serde(rename = "OPENIE")]
    OpenIe,
    #[serde(rename = "KGE")]
    Kge,
    #[serde(rename = "MRC")]
    Mrc,
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "IG")]
    Ig,
}

impl TaskKind {
    /// All task kinds in enumeration order. Apportionment ties break by this order.
    pub const ALL: [TaskKind; 11] = [
        TaskKind::Ner,
        TaskKind::Re,
        TaskKind::Spo,
        TaskKind::Ee,
        TaskKind::Eet,
        TaskKind::Eea,
        TaskKind::OpenIe,
        TaskKind::Kge,
        TaskKind::Mrc,
        TaskKind::Tc,
        TaskKind::Ig,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Ner => "NER",
            TaskKind::Re => "RE",
            TaskKind::Spo => "SPO",
            TaskKind::Ee => "EE",
            TaskKind::Eet => "EET",
            TaskKind::Eea => "EEA",
            TaskKind::OpenIe => "OPENIE",
            TaskKind::Kge => "KGE",
            TaskKind::Mrc => "MRC",
            TaskKind::Tc => "TC",
            TaskKind::Ig => "IG",
        }
    }

    /// Whether the task's gold is a (possibly empty) collection keyed by schema labels.
    pub fn is_set_valued(self) -> bool {
        !matches!(self, TaskKind::Mrc | TaskKind::Tc | TaskKind::Ig)
    }

    /// Whether samples of this task carry renameable schema labels.
    pub fn has_labels(self) -> bool {
        !matches!(self, TaskKind::Mrc | TaskKind::OpenIe | TaskKind::Ig)
    }

    pub fn is_event(self) -> bool {
        matches!(self, TaskKind::Ee | TaskKind::Eet | TaskKind::Eea)
    }

    /// The schema entry kind every entry of this task must have.
    pub fn entry_kind(self) -> Option<EntryKind> {
        Some(match self {
            TaskKind::Ner => EntryKind::EntityType,
            TaskKind::Re => EntryKind::Relation,
            TaskKind::Spo => EntryKind::SpoPattern,
            TaskKind::Ee | TaskKind::Eet | TaskKind::Eea => EntryKind::EventType,
            TaskKind::Kge => EntryKind::AttributeSet,
            TaskKind::Mrc => EntryKind::MrcQuestion,
            TaskKind::Tc => EntryKind::ClassLabel,
            TaskKind::OpenIe | TaskKind::Ig => return None,
        })
    }

    /// Human-readable task name used inside generated prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            TaskKind::Ner => "named entity recognition",
            TaskKind::Re => "relation extraction",
            TaskKind::Spo => "SPO triplet extraction",
            TaskKind::Ee => "event extraction",
            TaskKind::Eet => "event trigger extraction",
            TaskKind::Eea => "event argument extraction",
            TaskKind::OpenIe => "open information extraction",
            TaskKind::Kge => "knowledge graph extraction",
            TaskKind::Mrc => "machine reading comprehension",
            TaskKind::Tc => "text classification",
            TaskKind::Ig => "instruction following",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    EntityType,
    Relation,
    SpoPattern,
    EventType,
    ClassLabel,
    MrcQuestion,
    AttributeSet,
}

/// Per-entry structural constraints. Which fields are meaningful depends on
/// the entry kind: SPO patterns carry the subject/object types, event types
/// their argument roles (and, for argument-only extraction, the given
/// trigger), attribute sets their attributes, questions their choices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_type: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arguments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
    /// Natural-language annotation rule attached by preference-rule synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        *self == Constraints::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Constraints::is_empty")]
    pub constraints: Constraints,
}

impl SchemaEntry {
    pub fn new(name: impl Into<String>, kind: EntryKind) -> Self {
        Self {
            name: name.into(),
            kind,
            description: None,
            constraints: Constraints::default(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn with_constraints(mut self, constraints: Constraints) -> Self {
        self.constraints = constraints;
        self
    }
}

/// Ordered label inventory for one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskSchema {
    pub entries: Vec<SchemaEntry>,
}

impl TaskSchema {
    pub fn new(entries: Vec<SchemaEntry>) -> Self {
        Self { entries }
    }

    /// Convenience constructor for flat label lists.
    pub fn labels(kind: EntryKind, names: &[&str]) -> Self {
        Self::new(names.iter().map(|n| SchemaEntry::new(*n, kind)).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&SchemaEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut SchemaEntry> {
        self.entries.iter_mut().find(|e| e.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Schema restricted to a single entry.
    pub fn slice(&self, name: &str) -> Option<TaskSchema> {
        self.get(name).map(|e| TaskSchema::new(vec![e.clone()]))
    }

    /// Renames entries according to `map` (old name -> new name).
    pub fn renamed(&self, map: &IndexMap<String, String>) -> TaskSchema {
        let mut out = self.clone();
        for e in &mut out.entries {
            if let Some(new) = map.get(&e.name) {
                e.name = new.clone();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub label: String,
    pub span: String,
}

impl Entity {
    pub fn new(label: impl Into<String>, span: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            span: span.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub predicate: String,
    pub subject: String,
    pub object: String,
}

impl Relation {
    pub fn new(
        predicate: impl Into<String>,
        subject: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            predicate: predicate.into(),
            subject: subject.into(),
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpoTriple {
    pub predicate: String,
    pub subject: String,
    pub subject_type: String,
    pub object: String,
    pub object_type: String,
}

/// Value of one event argument role.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArgValue {
    /// The role does not occur in the text (`"NAN"` on the wire).
    Nan,
    Text(String),
    List(Vec<String>),
}

impl ArgValue {
    pub fn text(s: impl Into<String>) -> Self {
        ArgValue::Text(s.into())
    }

    /// Concrete values, with NAN contributing none.
    pub fn values(&self) -> Vec<&str> {
        match self {
            ArgValue::Nan => Vec::new(),
            ArgValue::Text(s) => vec![s.as_str()],
            ArgValue::List(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawValue {
    Text(String),
    List(Vec<String>),
}

impl Serialize for ArgValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ArgValue::Nan => s.serialize_str(NAN),
            ArgValue::Text(t) => s.serialize_str(t),
            ArgValue::List(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ArgValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match RawValue::deserialize(d)? {
            RawValue::Text(t) if t == NAN => ArgValue::Nan,
            RawValue::Text(t) => ArgValue::Text(t),
            RawValue::List(v) => ArgValue::List(v),
        })
    }
}

/// Attribute value in knowledge-graph extraction output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Text(String),
    List(Vec<String>),
}

impl AttrValue {
    pub fn values(&self) -> Vec<&str> {
        match self {
            AttrValue::Text(s) => vec![s.as_str()],
            AttrValue::List(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub arguments: IndexMap<String, ArgValue>,
}

impl Event {
    pub fn new(event_type: impl Into<String>) -> Self {
        Self {
            event_type: event_type.into(),
            trigger: None,
            arguments: IndexMap::new(),
        }
    }

    pub fn with_trigger(mut self, trigger: impl Into<String>) -> Self {
        self.trigger = Some(trigger.into());
        self
    }

    pub fn with_arg(mut self, role: impl Into<String>, value: ArgValue) -> Self {
        self.arguments.insert(role.into(), value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpenRole {
    Subject,
    Predicate,
    Object,
    Time,
    Location,
}

impl OpenRole {
    pub const ALL: [OpenRole; 5] = [
        OpenRole::Subject,
        OpenRole::Predicate,
        OpenRole::Object,
        OpenRole::Time,
        OpenRole::Location,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpenRole::Subject => "subject",
            OpenRole::Predicate => "predicate",
            OpenRole::Object => "object",
            OpenRole::Time => "time",
            OpenRole::Location => "location",
        }
    }

    pub fn parse(s: &str) -> Option<OpenRole> {
        OpenRole::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpenElement {
    pub role: OpenRole,
    pub text: String,
}

/// One open-IE proposition: role-tagged elements in order of appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpenTuple {
    pub elements: Vec<OpenElement>,
}

impl OpenTuple {
    pub fn new(elements: &[(OpenRole, &str)]) -> Self {
        Self {
            elements: elements
                .iter()
                .map(|(role, text)| OpenElement {
                    role: *role,
                    text: text.to_string(),
                })
                .collect(),
        }
    }
}

/// entity type -> entity name -> attribute -> value
pub type KgEntities = IndexMap<String, IndexMap<String, IndexMap<String, AttrValue>>>;

/// Gold annotation; the variant is determined by the sample's task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldLabel {
    EntitySet(Vec<Entity>),
    RelationSet(Vec<Relation>),
    SpoSet(Vec<SpoTriple>),
    EventSet(Vec<Event>),
    OpenTuples(Vec<OpenTuple>),
    KgEntities(KgEntities),
    Answer(String),
    ClassLabel(String),
    FreeResponse(String),
}

impl GoldLabel {
    pub fn variant_name(&self) -> &'static str {
        match self {
            GoldLabel::EntitySet(_) => "entity_set",
            GoldLabel::RelationSet(_) => "relation_set",
            GoldLabel::SpoSet(_) => "spo_set",
            GoldLabel::EventSet(_) => "event_set",
            GoldLabel::OpenTuples(_) => "open_tuples",
            GoldLabel::KgEntities(_) => "kg_entities",
            GoldLabel::Answer(_) => "answer",
            GoldLabel::ClassLabel(_) => "class_label",
            GoldLabel::FreeResponse(_) => "free_response",
        }
    }

    pub fn fits_task(&self, task: TaskKind) -> bool {
        matches!(
            (self, task),
            (GoldLabel::EntitySet(_), TaskKind::Ner)
                | (GoldLabel::RelationSet(_), TaskKind::Re)
                | (GoldLabel::SpoSet(_), TaskKind::Spo)
                | (
                    GoldLabel::EventSet(_),
                    TaskKind::Ee | TaskKind::Eet | TaskKind::Eea
                )
                | (GoldLabel::OpenTuples(_), TaskKind::OpenIe)
                | (GoldLabel::KgEntities(_), TaskKind::Kge)
                | (GoldLabel::Answer(_), TaskKind::Mrc)
                | (GoldLabel::ClassLabel(_), TaskKind::Tc)
                | (GoldLabel::FreeResponse(_), TaskKind::Ig)
        )
    }

    /// The empty annotation of a set-valued task.
    pub fn empty_for(task: TaskKind) -> Option<GoldLabel> {
        Some(match task {
            TaskKind::Ner => GoldLabel::EntitySet(Vec::new()),
            TaskKind::Re => GoldLabel::RelationSet(Vec::new()),
            TaskKind::Spo => GoldLabel::SpoSet(Vec::new()),
            TaskKind::Ee | TaskKind::Eet | TaskKind::Eea => GoldLabel::EventSet(Vec::new()),
            TaskKind::OpenIe => GoldLabel::OpenTuples(Vec::new()),
            TaskKind::Kge => GoldLabel::KgEntities(IndexMap::new()),
            TaskKind::Mrc | TaskKind::Tc | TaskKind::Ig => return None,
        })
    }

    pub fn is_empty(&self) -> bool {
        match self {
            GoldLabel::EntitySet(v) => v.is_empty(),
            GoldLabel::RelationSet(v) => v.is_empty(),
            GoldLabel::SpoSet(v) => v.is_empty(),
            GoldLabel::EventSet(v) => v.is_empty(),
            GoldLabel::OpenTuples(v) => v.is_empty(),
            GoldLabel::KgEntities(m) => m.values().all(|names| names.is_empty()),
            GoldLabel::Answer(s) | GoldLabel::ClassLabel(s) | GoldLabel::FreeResponse(s) => {
                s.is_empty()
            }
        }
    }

    /// Schema labels referenced by this annotation, in order of first use.
    pub fn labels(&self) -> Vec<&str> {
        let names: Vec<&str> = match self {
            GoldLabel::EntitySet(v) => v.iter().map(|e| e.label.as_str()).collect(),
            GoldLabel::RelationSet(v) => v.iter().map(|r| r.predicate.as_str()).collect(),
            GoldLabel::SpoSet(v) => v.iter().map(|t| t.predicate.as_str()).collect(),
            GoldLabel::EventSet(v) => v.iter().map(|e| e.event_type.as_str()).collect(),
            GoldLabel::KgEntities(m) => m.keys().map(String::as_str).collect(),
            GoldLabel::ClassLabel(c) => vec![c.as_str()],
            GoldLabel::OpenTuples(_) | GoldLabel::Answer(_) | GoldLabel::FreeResponse(_) => vec![],
        };
        let mut out: Vec<&str> = Vec::new();
        for n in names {
            if !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }

    /// Whether any annotation is attached to `label`.
    pub fn mentions_label(&self, label: &str) -> bool {
        match self {
            GoldLabel::KgEntities(m) => m.get(label).is_some_and(|names| !names.is_empty()),
            _ => self.labels().contains(&label),
        }
    }

    /// The part of the annotation attached to `label`. Class labels and
    /// non-labelled tasks are returned unchanged.
    pub fn restricted_to(&self, label: &str) -> GoldLabel {
        match self {
            GoldLabel::EntitySet(v) => {
                GoldLabel::EntitySet(v.iter().filter(|e| e.label == label).cloned().collect())
            }
            GoldLabel::RelationSet(v) => {
                GoldLabel::RelationSet(v.iter().filter(|r| r.predicate == label).cloned().collect())
            }
            GoldLabel::SpoSet(v) => {
                GoldLabel::SpoSet(v.iter().filter(|t| t.predicate == label).cloned().collect())
            }
            GoldLabel::EventSet(v) => GoldLabel::EventSet(
                v.iter()
                    .filter(|e| e.event_type == label)
                    .cloned()
                    .collect(),
            ),
            GoldLabel::KgEntities(m) => GoldLabel::KgEntities(
                m.iter()
                    .filter(|(k, names)| k.as_str() == label && !names.is_empty())
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            ),
            other => other.clone(),
        }
    }

    /// Renames label occurrences (old -> new); unmapped labels are kept.
    pub fn relabel(&self, map: &IndexMap<String, String>) -> GoldLabel {
        let r = |s: &String| map.get(s).cloned().unwrap_or_else(|| s.clone());
        match self {
            GoldLabel::EntitySet(v) => GoldLabel::EntitySet(
                v.iter()
                    .map(|e| Entity {
                        label: r(&e.label),
                        span: e.span.clone(),
                    })
                    .collect(),
            ),
            GoldLabel::RelationSet(v) => GoldLabel::RelationSet(
                v.iter()
                    .map(|x| Relation {
                        predicate: r(&x.predicate),
                        ..x.clone()
                    })
                    .collect(),
            ),
            GoldLabel::SpoSet(v) => GoldLabel::SpoSet(
                v.iter()
                    .map(|x| SpoTriple {
                        predicate: r(&x.predicate),
                        ..x.clone()
                    })
                    .collect(),
            ),
            GoldLabel::EventSet(v) => GoldLabel::EventSet(
                v.iter()
                    .map(|x| Event {
                        event_type: r(&x.event_type),
                        ..x.clone()
                    })
                    .collect(),
            ),
            GoldLabel::KgEntities(m) => {
                GoldLabel::KgEntities(m.iter().map(|(k, v)| (r(k), v.clone())).collect())
            }
            GoldLabel::ClassLabel(c) => GoldLabel::ClassLabel(r(c)),
            other => other.clone(),
        }
    }

    /// Groups the annotation by schema order (stable within a label); labels
    /// unknown to the schema keep their relative order after the known ones.
    /// Knowledge-graph entity types without entities are dropped.
    pub fn canonical(&self, schema: &TaskSchema) -> GoldLabel {
        let key = |label: &str| schema.position(label).unwrap_or(usize::MAX);
        fn sorted<T: Clone>(v: &[T], key: impl Fn(&T) -> usize) -> Vec<T> {
            let mut out = v.to_vec();
            out.sort_by_key(|x| key(x));
            out
        }
        match self {
            GoldLabel::EntitySet(v) => GoldLabel::EntitySet(sorted(v, |e| key(&e.label))),
            GoldLabel::RelationSet(v) => GoldLabel::RelationSet(sorted(v, |x| key(&x.predicate))),
            GoldLabel::SpoSet(v) => GoldLabel::SpoSet(sorted(v, |x| key(&x.predicate))),
            GoldLabel::EventSet(v) => GoldLabel::EventSet(sorted(v, |x| key(&x.event_type))),
            GoldLabel::KgEntities(m) => {
                let mut items: Vec<_> = m.iter().filter(|(_, names)| !names.is_empty()).collect();
                items.sort_by_key(|(k, _)| key(k));
                GoldLabel::KgEntities(
                    items
                        .into_iter()
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                )
            }
            other => other.clone(),
        }
    }

    /// Canonical form with every schema argument role present on each event
    /// (absent roles become NAN), in schema role order. Only applies to the
    /// event and argument extraction tasks.
    pub fn normalized(&self, task: TaskKind, schema: &TaskSchema) -> GoldLabel {
        let canon = self.canonical(schema);
        match (&canon, task) {
            (GoldLabel::EventSet(events), TaskKind::Ee | TaskKind::Eea) => GoldLabel::EventSet(
                events
                    .iter()
                    .map(|ev| {
                        let Some(entry) = schema.get(&ev.event_type) else {
                            return ev.clone();
                        };
                        let mut args = IndexMap::new();
                        for role in &entry.constraints.arguments {
                            let v = ev.arguments.get(role).cloned().unwrap_or(ArgValue::Nan);
                            args.insert(role.clone(), v);
                        }
                        for (role, v) in &ev.arguments {
                            if !args.contains_key(role) {
                                args.insert(role.clone(), v.clone());
                            }
                        }
                        Event {
                            arguments: args,
                            ..ev.clone()
                        }
                    })
                    .collect(),
            ),
            _ => canon,
        }
    }
}

/// Marks a sample derived from another by a preference rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub rule_id: String,
    pub original_gold: GoldLabel,
}

/// One labeled example, before rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedSample {
    pub id: String,
    pub task: TaskKind,
    pub text: String,
    pub schema: TaskSchema,
    pub gold: GoldLabel,
    pub source: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl UnifiedSample {
    pub fn new(
        id: impl Into<String>,
        task: TaskKind,
        text: impl Into<String>,
        schema: TaskSchema,
        gold: GoldLabel,
    ) -> Self {
        Self {
            id: id.into(),
            task,
            text: text.into(),
            schema,
            gold,
            source: String::new(),
            language: "en".to_string(),
            origin: None,
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = language.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyId,
    GoldTaskMismatch,
    SchemaMismatch,
    DuplicateSchemaName,
    EntryKindMismatch,
    MissingSpoTypes,
    SpoTypeMismatch,
    TriggerPlacement,
    MissingTrigger,
    UnknownRole,
    ReservedNanText,
    EmptyValue,
    EmptyAnswer,
}

/// A broken invariant: which one, and where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub field: String,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, field: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            kind,
            field: field.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.field, self.detail)
    }
}

/// Checks every sample invariant; an empty list means the sample is valid.
pub fn validate_sample(sample: &UnifiedSample) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();
    if sample.id.is_empty() {
        out.push(Violation::new(EmptyId, "id", "sample id is empty"));
    }
    if !sample.gold.fits_task(sample.task) {
        out.push(Violation::new(
            GoldTaskMismatch,
            "gold",
            format!(
                "{} gold on a {} sample",
                sample.gold.variant_name(),
                sample.task
            ),
        ));
        return out;
    }

    let mut seen = HashSet::new();
    for (i, entry) in sample.schema.entries.iter().enumerate() {
        if !seen.insert(entry.name.as_str()) {
            out.push(Violation::new(
                DuplicateSchemaName,
                format!("schema[{i}].name"),
                entry.name.clone(),
            ));
        }
        if let Some(kind) = sample.task.entry_kind() {
            if entry.kind != kind {
                out.push(Violation::new(
                    EntryKindMismatch,
                    format!("schema[{i}].kind"),
                    format!("{:?} entry in a {} schema", entry.kind, sample.task),
                ));
            }
        }
        if entry.kind == EntryKind::SpoPattern
            && (entry.constraints.subject_type.is_none() || entry.constraints.object_type.is_none())
        {
            out.push(Violation::new(
                MissingSpoTypes,
                format!("schema[{i}].constraints"),
                entry.name.clone(),
            ));
        }
    }

    for label in sample.gold.labels() {
        if !sample.schema.contains(label) {
            out.push(Violation::new(
                SchemaMismatch,
                "gold",
                format!("label `{label}` is not in the schema"),
            ));
        }
    }

    match &sample.gold {
        GoldLabel::EntitySet(v) => {
            for (i, e) in v.iter().enumerate() {
                if e.span.is_empty() {
                    out.push(Violation::new(
                        EmptyValue,
                        format!("gold[{i}].span"),
                        "empty span",
                    ));
                }
            }
        }
        GoldLabel::RelationSet(v) => {
            for (i, r) in v.iter().enumerate() {
                if r.subject.is_empty() || r.object.is_empty() {
                    out.push(Violation::new(
                        EmptyValue,
                        format!("gold[{i}]"),
                        "empty subject or object",
                    ));
                }
            }
        }
        GoldLabel::SpoSet(v) => {
            for (i, t) in v.iter().enumerate() {
                if let Some(entry) = sample.schema.get(&t.predicate) {
                    if entry.constraints.subject_type.as_deref() != Some(t.subject_type.as_str())
                        || entry.constraints.object_type.as_deref() != Some(t.object_type.as_str())
                    {
                        out.push(Violation::new(
                            SpoTypeMismatch,
                            format!("gold[{i}]"),
                            format!(
                                "types ({}, {}) disagree with the schema",
                                t.subject_type, t.object_type
                            ),
                        ));
                    }
                }
                if t.subject.is_empty() || t.object.is_empty() {
                    out.push(Violation::new(
                        EmptyValue,
                        format!("gold[{i}]"),
                        "empty subject or object",
                    ));
                }
            }
        }
        GoldLabel::EventSet(v) => {
            for (i, ev) in v.iter().enumerate() {
                match sample.task {
                    TaskKind::Eet => {
                        if !ev.arguments.is_empty() {
                            out.push(Violation::new(
                                TriggerPlacement,
                                format!("gold[{i}].arguments"),
                                "trigger extraction carries no arguments",
                            ));
                        }
                        if ev.trigger.as_deref().is_none_or(str::is_empty) {
                            out.push(Violation::new(
                                MissingTrigger,
                                format!("gold[{i}].trigger"),
                                "missing trigger",
                            ));
                        }
                    }
                    TaskKind::Eea if ev.trigger.is_some() => {
                        out.push(Violation::new(
                            TriggerPlacement,
                            format!("gold[{i}].trigger"),
                            "argument extraction takes its trigger from the schema",
                        ));
                    }
                    _ => {}
                }
                if ev.trigger.as_deref() == Some("") {
                    out.push(Violation::new(
                        EmptyValue,
                        format!("gold[{i}].trigger"),
                        "empty trigger",
                    ));
                }
                let roles = sample
                    .schema
                    .get(&ev.event_type)
                    .map(|e| &e.constraints.arguments);
                for (role, value) in &ev.arguments {
                    if let Some(roles) = roles {
                        if !roles.contains(role) {
                            out.push(Violation::new(
                                UnknownRole,
                                format!("gold[{i}].arguments.{role}"),
                                format!("role not declared for `{}`", ev.event_type),
                            ));
                        }
                    }
                    if matches!(value, ArgValue::Text(t) if t == NAN) {
                        out.push(Violation::new(
                            ReservedNanText,
                            format!("gold[{i}].arguments.{role}"),
                            "NAN is reserved for missing arguments",
                        ));
                    }
                }
            }
        }
        GoldLabel::KgEntities(m) => {
            for (etype, names) in m {
                let attrs = sample.schema.get(etype).map(|e| &e.constraints.attributes);
                for (name, attributes) in names {
                    for attr in attributes.keys() {
                        if attrs.is_some_and(|a| !a.is_empty() && !a.contains(attr)) {
                            out.push(Violation::new(
                                UnknownRole,
                                format!("gold.{etype}.{name}.{attr}"),
                                "attribute not declared in schema",
                            ));
                        }
                    }
                }
            }
        }
        GoldLabel::Answer(a) => {
            if a.is_empty() {
                out.push(Violation::new(EmptyAnswer, "gold", "empty answer"));
            }
        }
        GoldLabel::ClassLabel(c) => {
            if c.is_empty() {
                out.push(Violation::new(EmptyAnswer, "gold", "empty class label"));
            }
        }
        GoldLabel::FreeResponse(_) | GoldLabel::OpenTuples(_) => {}
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {cause}")]
    MalformedRecord { line: usize, cause: String },
    #[error("sample `{id}`: gold references a label that is not in its schema")]
    SchemaMismatch { id: String },
    #[error("line {line}: duplicate sample id `{id}`")]
    DuplicateId { line: usize, id: String },
}

#[derive(Deserialize)]
struct RawSample {
    #[serde(default)]
    id: Option<String>,
    task: TaskKind,
    text: String,
    schema: TaskSchema,
    gold: GoldLabel,
    source: String,
    language: String,
    #[serde(default)]
    origin: Option<Origin>,
}

/// Streaming reader over a corpus file. Each line yields either a sample or
/// a per-line error; a bad line never stops the stream.
pub struct CorpusReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
        }
    }

    fn decode(&mut self, line: &str) -> Result<UnifiedSample, CorpusError> {
        let raw: RawSample =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                line: self.line_no,
                cause: e.to_string(),
            })?;
        let id = match raw.id {
            Some(id) => id,
            None => format!("{}:{:08}", raw.source, self.line_no),
        };
        if !raw.gold.fits_task(raw.task) {
            return Err(CorpusError::MalformedRecord {
                line: self.line_no,
                cause: format!("{} gold on a {} sample", raw.gold.variant_name(), raw.task),
            });
        }
        if raw.gold.labels().iter().any(|l| !raw.schema.contains(l)) {
            return Err(CorpusError::SchemaMismatch { id });
        }
        if !self.seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: self.line_no,
                id,
            });
        }
        Ok(UnifiedSample {
            id,
            task: raw.task,
            text: raw.text,
            schema: raw.schema,
            gold: raw.gold,
            source: raw.source,
            language: raw.language,
            origin: raw.origin,
        })
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<UnifiedSample, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() || Provenance::is_header_line(&line) {
                continue;
            }
            return Some(self.decode(&line));
        }
    }
}

/// Opens a corpus file for streaming.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<CorpusReader<BufReader<File>>, CorpusError> {
    Ok(CorpusReader::new(BufReader::new(File::open(path)?)))
}

/// Reads a whole corpus, failing on the first bad line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<UnifiedSample>, CorpusError> {
    read_corpus(path)?.collect()
}

/// Writes samples one per line; returns the number written.
pub fn write_corpus<'a>(
    samples: impl IntoIterator<Item = &'a UnifiedSample>,
    path: impl AsRef<Path>,
) -> Result<usize, CorpusError> {
    write_corpus_with(samples, path, None)
}

pub fn write_corpus_with<'a>(
    samples: impl IntoIterator<Item = &'a UnifiedSample>,
    path: impl AsRef<Path>,
    provenance: Option<&Provenance>,
) -> Result<usize, CorpusError> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(p) = provenance {
        writeln!(out, "{}", p.header_line())?;
    }
    let mut n = 0;
    for s in samples {
        serde_json::to_writer(&mut out, s).map_err(io::Error::other)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}
