//! Output serializations of gold annotations and their parsers.
//!
//! Four formats are supported, not all for every task:
//!
//! | task | formats |
//! |---|---|
//! | NER, RE, SPO | JSON, PLAIN_TEXT, MARKDOWN_TABLE |
//! | EE, EET, EEA, KGE, MRC, TC | JSON, PLAIN_TEXT |
//! | OPENIE | TUPLE_TEXT, JSON, PLAIN_TEXT |
//! | IG | PLAIN_TEXT |
//!
//! The first listed format is the task's default. Grammars for each pair
//! are documented in the guide; every serialization parses back to the
//! normalized gold (see [`GoldLabel::normalized`]).

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::corpus::{
    ArgValue, AttrValue, Entity, Event, GoldLabel, OpenElement, OpenRole, OpenTuple, Relation,
    SpoTriple, TaskKind, TaskSchema, NAN,
};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputFormat {
    #[serde(rename = "JSON")]
    Json,
    #[serde(rename = "PLAIN_TEXT")]
    PlainText,
    #[serde(rename = "MARKDOWN_TABLE")]
    MarkdownTable,
    #[serde(rename = "TUPLE_TEXT")]
    TupleText,
}

impl OutputFormat {
    pub const ALL: [OutputFormat; 4] = [
        OutputFormat::Json,
        OutputFormat::PlainText,
        OutputFormat::MarkdownTable,
        OutputFormat::TupleText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Json => "JSON",
            OutputFormat::PlainText => "PLAIN_TEXT",
            OutputFormat::MarkdownTable => "MARKDOWN_TABLE",
            OutputFormat::TupleText => "TUPLE_TEXT",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OutputFormat::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown output format `{s}`"))
    }
}

/// Formats valid for a task; the first one is the default.
pub fn supported_formats(task: TaskKind) -> &'static [OutputFormat] {
    use OutputFormat::*;
    match task {
        TaskKind::Ner | TaskKind::Re | TaskKind::Spo => &[Json, PlainText, MarkdownTable],
        TaskKind::Ee
        | TaskKind::Eet
        | TaskKind::Eea
        | TaskKind::Kge
        | TaskKind::Mrc
        | TaskKind::Tc => &[Json, PlainText],
        TaskKind::OpenIe => &[TupleText, Json, PlainText],
        TaskKind::Ig => &[PlainText],
    }
}

pub fn default_format(task: TaskKind) -> OutputFormat {
    supported_formats(task)[0]
}

pub fn is_supported(task: TaskKind, fmt: OutputFormat) -> bool {
    supported_formats(task).contains(&fmt)
}

/// One of the interchangeable spellings of an empty answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmptyCandidate {
    #[serde(rename = "")]
    EmptyString,
    #[serde(rename = "NAN")]
    Nan,
    /// The format's own empty rendering: label-keyed empty lists for JSON,
    /// `[]` for plain text and tuples, a header-only table for markdown.
    #[serde(rename = "[]")]
    EmptyList,
}

impl EmptyCandidate {
    pub const ALL: [EmptyCandidate; 3] = [
        EmptyCandidate::EmptyList,
        EmptyCandidate::Nan,
        EmptyCandidate::EmptyString,
    ];
}

/// Relative draw weights of the empty candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmptyWeights {
    pub empty_list: f64,
    pub nan: f64,
    pub empty_string: f64,
}

impl Default for EmptyWeights {
    fn default() -> Self {
        Self {
            empty_list: 1.0,
            nan: 1.0,
            empty_string: 1.0,
        }
    }
}

impl EmptyWeights {
    /// Always the format's own empty rendering.
    pub const LIST_ONLY: EmptyWeights = EmptyWeights {
        empty_list: 1.0,
        nan: 0.0,
        empty_string: 0.0,
    };

    pub fn weight(&self, c: EmptyCandidate) -> f64 {
        match c {
            EmptyCandidate::EmptyList => self.empty_list,
            EmptyCandidate::Nan => self.nan,
            EmptyCandidate::EmptyString => self.empty_string,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("{fmt} is not supported for {task}")]
    UnsupportedFormat { task: TaskKind, fmt: OutputFormat },
    #[error("no legal empty candidate for {task} in {fmt}")]
    NoLegalCandidate { task: TaskKind, fmt: OutputFormat },
    #[error("empty-candidate weights must be finite, non-negative and not all zero")]
    InvalidWeights,
    #[error("parse failure at byte {position}: {cause}")]
    ParseFailure { position: usize, cause: String },
    #[error("labels outside the schema: {labels:?}")]
    SchemaViolation {
        labels: Vec<String>,
        gold: Box<GoldLabel>,
    },
}

fn failure(position: usize, cause: impl Into<String>) -> FormatError {
    FormatError::ParseFailure {
        position,
        cause: cause.into(),
    }
}

fn check(task: TaskKind, fmt: OutputFormat) -> Result<(), FormatError> {
    if is_supported(task, fmt) {
        Ok(())
    } else {
        Err(FormatError::UnsupportedFormat { task, fmt })
    }
}

/// Empty candidates a parser accepts for `(task, fmt)`.
pub fn legal_empty_candidates(task: TaskKind, fmt: OutputFormat) -> Vec<EmptyCandidate> {
    if task.is_set_valued() && is_supported(task, fmt) {
        EmptyCandidate::ALL.to_vec()
    } else {
        Vec::new()
    }
}

/// Weighted draw of an empty candidate.
pub fn choose_empty(
    task: TaskKind,
    fmt: OutputFormat,
    weights: &EmptyWeights,
    rng: &mut SeededRng,
) -> Result<EmptyCandidate, FormatError> {
    let legal = legal_empty_candidates(task, fmt);
    if legal.is_empty() {
        return Err(FormatError::NoLegalCandidate { task, fmt });
    }
    let ws: Vec<f64> = legal.iter().map(|c| weights.weight(*c)).collect();
    if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(FormatError::InvalidWeights);
    }
    let total: f64 = ws.iter().sum();
    if total <= 0.0 {
        return Err(FormatError::InvalidWeights);
    }
    let mut x = rng.random::<f64>() * total;
    for (c, w) in legal.iter().zip(&ws) {
        if x < *w {
            return Ok(*c);
        }
        x -= w;
    }
    Ok(*legal
        .iter()
        .zip(&ws)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .unwrap()
        .0)
}

/// The literal text of an empty candidate.
pub fn empty_text(
    task: TaskKind,
    fmt: OutputFormat,
    cand: EmptyCandidate,
    schema: &TaskSchema,
) -> Result<String, FormatError> {
    check(task, fmt)?;
    if !task.is_set_valued() {
        return Err(FormatError::NoLegalCandidate { task, fmt });
    }
    Ok(match cand {
        EmptyCandidate::EmptyString => String::new(),
        EmptyCandidate::Nan => NAN.to_string(),
        EmptyCandidate::EmptyList => match fmt {
            OutputFormat::Json => {
                let empty = GoldLabel::empty_for(task).expect("set-valued task");
                compact(&to_json_value(&empty, task, schema))
            }
            OutputFormat::MarkdownTable => markdown_header(task).join("\n"),
            OutputFormat::PlainText | OutputFormat::TupleText => "[]".to_string(),
        },
    })
}

fn compact(v: &Value) -> String {
    serde_json::to_string(v).expect("json value serializes")
}

/// Serializes with a fixed empty candidate (used only when the gold is empty).
pub fn serialize_with(
    gold: &GoldLabel,
    task: TaskKind,
    fmt: OutputFormat,
    schema: &TaskSchema,
    empty: EmptyCandidate,
) -> Result<String, FormatError> {
    check(task, fmt)?;
    if task.is_set_valued() && gold.is_empty() {
        return empty_text(task, fmt, empty, schema);
    }
    let gold = gold.normalized(task, schema);
    Ok(match fmt {
        OutputFormat::Json => compact(&to_json_value(&gold, task, schema)),
        OutputFormat::PlainText => plain::write(&gold, task, schema),
        OutputFormat::MarkdownTable => markdown::write(&gold, task),
        OutputFormat::TupleText => tuple::write(&gold),
    })
}

/// Serializes a gold annotation; an empty set-valued gold is written as a
/// weighted draw over the empty candidates.
pub fn serialize(
    gold: &GoldLabel,
    task: TaskKind,
    fmt: OutputFormat,
    schema: &TaskSchema,
    weights: &EmptyWeights,
    rng: &mut SeededRng,
) -> Result<String, FormatError> {
    check(task, fmt)?;
    let cand = if task.is_set_valued() && gold.is_empty() {
        choose_empty(task, fmt, weights, rng)?
    } else {
        EmptyCandidate::EmptyList
    };
    serialize_with(gold, task, fmt, schema, cand)
}

/// Labels of `gold` missing from `schema`.
pub fn unknown_labels(gold: &GoldLabel, schema: &TaskSchema) -> Vec<String> {
    gold.labels()
        .into_iter()
        .filter(|l| !schema.contains(l))
        .map(str::to_string)
        .collect()
}

/// Parses text in `fmt` back into a gold annotation. Labels outside the
/// schema are kept.
pub fn parse(
    text: &str,
    task: TaskKind,
    fmt: OutputFormat,
    schema: &TaskSchema,
) -> Result<GoldLabel, FormatError> {
    check(task, fmt)?;
    let body = strip_fences(text);
    if task.is_set_valued() && is_empty_literal(body) {
        return Ok(GoldLabel::empty_for(task).expect("set-valued task"));
    }
    let gold = match fmt {
        OutputFormat::Json => {
            let v: Value = serde_json::from_str(body)
                .map_err(|e| failure(json_offset(body, &e), e.to_string()))?;
            from_json_value(&v, task, schema)?
        }
        OutputFormat::PlainText => plain::read(body, task, schema)?,
        OutputFormat::MarkdownTable => markdown::read(body, task, schema)?,
        OutputFormat::TupleText => tuple::read(body)?,
    };
    Ok(gold.normalized(task, schema))
}

/// Like [`parse`], but labels outside the schema are an error.
pub fn parse_checked(
    text: &str,
    task: TaskKind,
    fmt: OutputFormat,
    schema: &TaskSchema,
) -> Result<GoldLabel, FormatError> {
    let gold = parse(text, task, fmt, schema)?;
    let labels = unknown_labels(&gold, schema);
    if labels.is_empty() {
        Ok(gold)
    } else {
        Err(FormatError::SchemaViolation {
            labels,
            gold: Box::new(gold),
        })
    }
}

fn is_empty_literal(s: &str) -> bool {
    matches!(s, "" | "NAN" | "[]" | "\"\"" | "\"NAN\"")
}

/// Removes surrounding whitespace and one enclosing code fence.
pub fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = match rest.find('\n') {
            Some(i) => &rest[i + 1..],
            None => rest,
        };
        let rest = rest.trim_end();
        let rest = rest.strip_suffix("```").unwrap_or(rest);
        return rest.trim();
    }
    t
}

fn json_offset(text: &str, e: &serde_json::Error) -> usize {
    let line = e.line().max(1);
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + e.column().saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

/// Groups items by label: schema labels first (present even when empty),
/// then unknown labels in order of first appearance.
fn group<'a, T>(
    items: &'a [T],
    label: impl Fn(&T) -> &str,
    schema: &TaskSchema,
) -> IndexMap<String, Vec<&'a T>> {
    let mut out: IndexMap<String, Vec<&T>> = schema
        .names()
        .map(|n| (n.to_string(), Vec::new()))
        .collect();
    for it in items {
        out.entry(label(it).to_string()).or_default().push(it);
    }
    out
}

fn arg_json(v: &ArgValue) -> Value {
    match v {
        ArgValue::Nan => Value::String(NAN.into()),
        ArgValue::Text(t) => Value::String(t.clone()),
        ArgValue::List(l) => json!(l),
    }
}

/// The JSON shape of a gold annotation, keys in schema order.
pub fn to_json_value(gold: &GoldLabel, task: TaskKind, schema: &TaskSchema) -> Value {
    match gold {
        GoldLabel::EntitySet(v) => {
            let g = group(v, |e| &e.label, schema);
            Value::Object(
                g.into_iter()
                    .map(|(k, es)| (k, json!(es.iter().map(|e| &e.span).collect::<Vec<_>>())))
                    .collect(),
            )
        }
        GoldLabel::RelationSet(v) => {
            let g = group(v, |r| &r.predicate, schema);
            Value::Object(
                g.into_iter()
                    .map(|(k, rs)| {
                        let arr: Vec<Value> = rs
                            .iter()
                            .map(|r| json!({"subject": r.subject, "object": r.object}))
                            .collect();
                        (k, Value::Array(arr))
                    })
                    .collect(),
            )
        }
        GoldLabel::SpoSet(v) => {
            let g = group(v, |t| &t.predicate, schema);
            Value::Object(
                g.into_iter()
                    .map(|(k, ts)| {
                        let arr: Vec<Value> = ts
                            .iter()
                            .map(|t| json!({"subject": t.subject, "object": t.object}))
                            .collect();
                        (k, Value::Array(arr))
                    })
                    .collect(),
            )
        }
        GoldLabel::EventSet(v) => {
            let g = group(v, |e| &e.event_type, schema);
            Value::Object(
                g.into_iter()
                    .map(|(k, evs)| {
                        let arr: Vec<Value> = evs
                            .iter()
                            .filter_map(|ev| match task {
                                TaskKind::Eet => {
                                    ev.trigger.as_ref().map(|t| Value::String(t.clone()))
                                }
                                TaskKind::Eea => Some(Value::Object(
                                    ev.arguments
                                        .iter()
                                        .map(|(r, a)| (r.clone(), arg_json(a)))
                                        .collect(),
                                )),
                                _ => {
                                    let mut m = Map::new();
                                    if let Some(t) = &ev.trigger {
                                        m.insert("trigger".into(), Value::String(t.clone()));
                                    }
                                    m.insert(
                                        "arguments".into(),
                                        Value::Object(
                                            ev.arguments
                                                .iter()
                                                .map(|(r, a)| (r.clone(), arg_json(a)))
                                                .collect(),
                                        ),
                                    );
                                    Some(Value::Object(m))
                                }
                            })
                            .collect();
                        (k, Value::Array(arr))
                    })
                    .collect(),
            )
        }
        GoldLabel::OpenTuples(v) => Value::Array(
            v.iter()
                .map(|t| {
                    Value::Array(
                        t.elements
                            .iter()
                            .map(|e| {
                                let mut m = Map::new();
                                m.insert(
                                    e.role.as_str().to_string(),
                                    Value::String(e.text.clone()),
                                );
                                Value::Object(m)
                            })
                            .collect(),
                    )
                })
                .collect(),
        ),
        GoldLabel::KgEntities(m) => serde_json::to_value(m).expect("kg entities serialize"),
        GoldLabel::Answer(a) => json!({ "answer": a }),
        GoldLabel::ClassLabel(c) => json!({ "type": c }),
        GoldLabel::FreeResponse(r) => json!({ "response": r }),
    }
}

fn as_text(v: &Value, at: &str) -> Result<String, FormatError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(failure(0, format!("expected a string at {at}"))),
    }
}

fn as_list<'a>(v: &'a Value, at: &str) -> Result<Vec<&'a Value>, FormatError> {
    match v {
        Value::Array(a) => Ok(a.iter().collect()),
        Value::Null => Ok(Vec::new()),
        Value::String(s) if is_empty_literal(s) => Ok(Vec::new()),
        Value::Object(_) | Value::String(_) => Ok(vec![v]),
        _ => Err(failure(0, format!("expected a list at {at}"))),
    }
}

fn as_object<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>, FormatError> {
    v.as_object()
        .ok_or_else(|| failure(0, format!("expected an object at {at}")))
}

fn arg_from_json(v: &Value, at: &str) -> Result<ArgValue, FormatError> {
    Ok(match v {
        Value::String(s) if s == NAN => ArgValue::Nan,
        Value::Null => ArgValue::Nan,
        Value::Array(a) => {
            ArgValue::List(a.iter().map(|x| as_text(x, at)).collect::<Result<_, _>>()?)
        }
        other => ArgValue::Text(as_text(other, at)?),
    })
}

fn attr_from_json(v: &Value, at: &str) -> Result<AttrValue, FormatError> {
    Ok(match v {
        Value::Array(a) => {
            AttrValue::List(a.iter().map(|x| as_text(x, at)).collect::<Result<_, _>>()?)
        }
        other => AttrValue::Text(as_text(other, at)?),
    })
}

/// Reads the JSON shape produced by [`to_json_value`] (plus a few tolerated
/// alternatives) back into a gold annotation.
pub fn from_json_value(
    v: &Value,
    task: TaskKind,
    schema: &TaskSchema,
) -> Result<GoldLabel, FormatError> {
    match task {
        TaskKind::Ner => {
            let mut out = Vec::new();
            if let Value::Array(items) = v {
                for it in items {
                    let o = as_object(it, "entity")?;
                    let label = o
                        .get("entity_type")
                        .or_else(|| o.get("type"))
                        .or_else(|| o.get("label"));
                    let span = o
                        .get("entity")
                        .or_else(|| o.get("span"))
                        .or_else(|| o.get("text"));
                    match (label, span) {
                        (Some(l), Some(s)) => out.push(Entity::new(
                            as_text(l, "entity_type")?,
                            as_text(s, "entity")?,
                        )),
                        _ => return Err(failure(0, "entity object needs entity_type and entity")),
                    }
                }
            } else {
                for (label, spans) in as_object(v, "root")? {
                    for s in as_list(spans, label)? {
                        out.push(Entity::new(label.clone(), as_text(s, label)?));
                    }
                }
            }
            Ok(GoldLabel::EntitySet(out))
        }
        TaskKind::Re | TaskKind::Spo => {
            let mut pairs = Vec::new();
            for (pred, items) in as_object(v, "root")? {
                for it in as_list(items, pred)? {
                    let o = as_object(it, pred)?;
                    let s = o
                        .get("subject")
                        .ok_or_else(|| failure(0, format!("missing subject under {pred}")))?;
                    let ob = o
                        .get("object")
                        .ok_or_else(|| failure(0, format!("missing object under {pred}")))?;
                    pairs.push((pred.clone(), as_text(s, "subject")?, as_text(ob, "object")?));
                }
            }
            Ok(if task == TaskKind::Re {
                GoldLabel::RelationSet(
                    pairs
                        .into_iter()
                        .map(|(p, s, o)| Relation::new(p, s, o))
                        .collect(),
                )
            } else {
                GoldLabel::SpoSet(
                    pairs
                        .into_iter()
                        .map(|(p, s, o)| spo_triple(p, s, o, schema))
                        .collect(),
                )
            })
        }
        TaskKind::Ee | TaskKind::Eet | TaskKind::Eea => {
            let mut out = Vec::new();
            for (etype, items) in as_object(v, "root")? {
                for it in as_list(items, etype)? {
                    let mut ev = Event::new(etype.clone());
                    match task {
                        TaskKind::Eet => ev.trigger = Some(as_text(it, etype)?),
                        TaskKind::Eea => {
                            for (role, val) in as_object(it, etype)? {
                                ev.arguments.insert(role.clone(), arg_from_json(val, role)?);
                            }
                        }
                        _ => {
                            let o = as_object(it, etype)?;
                            if let Some(t) = o.get("trigger") {
                                ev.trigger = Some(as_text(t, "trigger")?);
                            }
                            if let Some(args) = o.get("arguments") {
                                for (role, val) in as_object(args, "arguments")? {
                                    ev.arguments.insert(role.clone(), arg_from_json(val, role)?);
                                }
                            }
                        }
                    }
                    out.push(ev);
                }
            }
            Ok(GoldLabel::EventSet(out))
        }
        TaskKind::OpenIe => {
            let mut out = Vec::new();
            for t in as_list(v, "root")? {
                let mut tuple = OpenTuple::default();
                let elems: Vec<&Value> = match t {
                    Value::Array(a) => a.iter().collect(),
                    other => vec![other],
                };
                for e in elems {
                    for (role, text) in as_object(e, "tuple element")? {
                        let role = OpenRole::parse(role)
                            .ok_or_else(|| failure(0, format!("unknown role `{role}`")))?;
                        for x in as_list(text, "element")? {
                            tuple.elements.push(OpenElement {
                                role,
                                text: as_text(x, "element")?,
                            });
                        }
                    }
                }
                out.push(tuple);
            }
            Ok(GoldLabel::OpenTuples(out))
        }
        TaskKind::Kge => {
            let mut out = IndexMap::new();
            for (etype, names) in as_object(v, "root")? {
                let mut per = IndexMap::new();
                for (name, attrs) in as_object(names, etype)? {
                    let mut a = IndexMap::new();
                    for (attr, val) in as_object(attrs, name)? {
                        a.insert(attr.clone(), attr_from_json(val, attr)?);
                    }
                    per.insert(name.clone(), a);
                }
                out.insert(etype.clone(), per);
            }
            Ok(GoldLabel::KgEntities(out))
        }
        TaskKind::Mrc => Ok(GoldLabel::Answer(single_field(v, &["answer"])?)),
        TaskKind::Tc => Ok(GoldLabel::ClassLabel(single_field(
            v,
            &["type", "label", "class"],
        )?)),
        TaskKind::Ig => Ok(GoldLabel::FreeResponse(single_field(v, &["response"])?)),
    }
}

fn single_field(v: &Value, keys: &[&str]) -> Result<String, FormatError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Object(o) => keys
            .iter()
            .find_map(|k| o.get(*k))
            .map(|x| as_text(x, keys[0]))
            .unwrap_or_else(|| Err(failure(0, format!("missing key `{}`", keys[0])))),
        _ => Err(failure(
            0,
            format!("expected an object with key `{}`", keys[0]),
        )),
    }
}

fn spo_triple(
    predicate: String,
    subject: String,
    object: String,
    schema: &TaskSchema,
) -> SpoTriple {
    let c = schema
        .get(&predicate)
        .map(|e| e.constraints.clone())
        .unwrap_or_default();
    SpoTriple {
        predicate,
        subject,
        subject_type: c.subject_type.unwrap_or_default(),
        object,
        object_type: c.object_type.unwrap_or_default(),
    }
}

/// Header and separator rows of the markdown table for a task.
fn markdown_header(task: TaskKind) -> [&'static str; 2] {
    match task {
        TaskKind::Ner => ["| entity_type | entity |", "| --- | --- |"],
        _ => ["| subject |predicate | object |", "| --- | --- |--- |"],
    }
}

/// Backslash escaping helpers shared by the text grammars.
mod escape {
    /// Escapes `specials` and line breaks with a backslash.
    pub fn escape(s: &str, specials: &[char]) -> String {
        let mut out = String::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if c == '\\' || specials.contains(&c) => {
                    out.push('\\');
                    out.push(c);
                }
                c => out.push(c),
            }
        }
        out
    }

    pub fn unescape(s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        let mut it = s.chars();
        while let Some(ch) = it.next() {
            if ch == '\\' {
                match it.next() {
                    Some('n') => out.push('\n'),
                    Some('r') => out.push('\r'),
                    Some('t') => out.push('\t'),
                    Some(c) => out.push(c),
                    None => out.push('\\'),
                }
            } else {
                out.push(ch);
            }
        }
        out
    }

    /// Byte offset of the first unescaped `delim`.
    pub fn find(s: &str, delim: char) -> Option<usize> {
        let mut escaped = false;
        for (i, ch) in s.char_indices() {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == delim {
                return Some(i);
            }
        }
        None
    }

    /// Splits on unescaped `delim`, leaving escapes in place.
    pub fn split(s: &str, delim: char) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = s;
        while let Some(i) = find(rest, delim) {
            out.push(&rest[..i]);
            rest = &rest[i + delim.len_utf8()..];
        }
        out.push(rest);
        out
    }

    /// Trims whitespace that is not part of an escape sequence.
    pub fn trim(s: &str) -> &str {
        let s = s.trim_start();
        let mut end = s.len();
        while end > 0 {
            let prev = s[..end].chars().next_back().unwrap();
            if !prev.is_whitespace() {
                break;
            }
            let before = &s[..end - prev.len_utf8()];
            let slashes = before.chars().rev().take_while(|c| *c == '\\').count();
            if slashes % 2 == 1 {
                break;
            }
            end -= prev.len_utf8();
        }
        &s[..end]
    }
}

mod plain {
    use super::escape::{self, find, split, unescape};
    use super::*;

    const SPECIALS: &[char] = &[';', ':', '=', ',', '[', ']', '|'];

    fn esc(s: &str) -> String {
        escape::escape(s, SPECIALS)
    }

    fn value(v: &ArgValue) -> String {
        match v {
            ArgValue::Nan => NAN.to_string(),
            ArgValue::Text(t) => esc(t),
            ArgValue::List(l) => format!(
                "[{}]",
                l.iter().map(|x| esc(x)).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    fn attr(v: &AttrValue) -> String {
        match v {
            AttrValue::Text(t) => esc(t),
            AttrValue::List(l) => format!(
                "[{}]",
                l.iter().map(|x| esc(x)).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    fn line(head: &str, parts: &[String]) -> String {
        if parts.is_empty() {
            format!("{}:", esc(head))
        } else {
            format!("{}: {}", esc(head), parts.join("; "))
        }
    }

    pub fn write(gold: &GoldLabel, task: TaskKind, schema: &TaskSchema) -> String {
        let mut lines: Vec<String> = Vec::new();
        match gold {
            GoldLabel::EntitySet(v) => {
                for (label, es) in group(v, |e| &e.label, schema) {
                    if !es.is_empty() {
                        lines.push(line(
                            &label,
                            &es.iter().map(|e| esc(&e.span)).collect::<Vec<_>>(),
                        ));
                    }
                }
            }
            GoldLabel::RelationSet(v) => {
                for r in v {
                    lines.push(line(&r.predicate, &[esc(&r.subject), esc(&r.object)]));
                }
            }
            GoldLabel::SpoSet(v) => {
                for t in v {
                    lines.push(line(&t.predicate, &[esc(&t.subject), esc(&t.object)]));
                }
            }
            GoldLabel::EventSet(v) if task == TaskKind::Eet => {
                for (etype, evs) in group(v, |e| &e.event_type, schema) {
                    let triggers: Vec<String> = evs
                        .iter()
                        .filter_map(|e| e.trigger.as_deref().map(esc))
                        .collect();
                    if !triggers.is_empty() {
                        lines.push(line(&etype, &triggers));
                    }
                }
            }
            GoldLabel::EventSet(v) => {
                for ev in v {
                    let mut parts = Vec::new();
                    if task == TaskKind::Ee {
                        parts.push(ev.trigger.as_deref().map(esc).unwrap_or_default());
                    }
                    parts.extend(
                        ev.arguments
                            .iter()
                            .map(|(r, a)| format!("{}={}", esc(r), value(a))),
                    );
                    lines.push(line(&ev.event_type, &parts));
                }
            }
            GoldLabel::KgEntities(m) => {
                for (etype, names) in m {
                    for (name, attrs) in names {
                        let mut parts = vec![esc(name)];
                        parts.extend(attrs.iter().map(|(k, v)| format!("{}={}", esc(k), attr(v))));
                        lines.push(line(etype, &parts));
                    }
                }
            }
            GoldLabel::OpenTuples(v) => {
                for t in v {
                    lines.push(
                        t.elements
                            .iter()
                            .map(|e| format!("{}={}", e.role.as_str(), esc(&e.text)))
                            .collect::<Vec<_>>()
                            .join("; "),
                    );
                }
            }
            GoldLabel::Answer(s) | GoldLabel::ClassLabel(s) | GoldLabel::FreeResponse(s) => {
                return s.clone()
            }
        }
        lines.join("\n")
    }

    fn field(s: &str) -> String {
        unescape(escape::trim(s))
    }

    fn head(line: &str, at: usize) -> Result<(String, &str), FormatError> {
        let i = find(line, ':').ok_or_else(|| failure(at, "expected `label:` at line start"))?;
        Ok((field(&line[..i]), &line[i + 1..]))
    }

    fn parts(rest: &str) -> Vec<&str> {
        if escape::trim(rest).is_empty() {
            Vec::new()
        } else {
            split(rest, ';')
        }
    }

    fn keyed(part: &str, at: usize) -> Result<(String, &str), FormatError> {
        let i = find(part, '=').ok_or_else(|| failure(at, "expected `key=value`"))?;
        Ok((field(&part[..i]), escape::trim(&part[i + 1..])))
    }

    fn list(raw: &str) -> Option<Vec<String>> {
        let inner = raw.strip_prefix('[')?.strip_suffix(']')?;
        if inner.chars().rev().take_while(|c| *c == '\\').count() % 2 == 1 {
            return None;
        }
        if escape::trim(inner).is_empty() {
            return Some(Vec::new());
        }
        Some(split(inner, ',').into_iter().map(field).collect())
    }

    fn arg(raw: &str) -> ArgValue {
        if raw == NAN {
            ArgValue::Nan
        } else if let Some(l) = list(raw) {
            ArgValue::List(l)
        } else {
            ArgValue::Text(unescape(raw))
        }
    }

    fn attr_value(raw: &str) -> AttrValue {
        match list(raw) {
            Some(l) => AttrValue::List(l),
            None => AttrValue::Text(unescape(raw)),
        }
    }

    pub fn read(text: &str, task: TaskKind, schema: &TaskSchema) -> Result<GoldLabel, FormatError> {
        if matches!(task, TaskKind::Mrc | TaskKind::Tc | TaskKind::Ig) {
            let t = text.trim().to_string();
            return Ok(match task {
                TaskKind::Mrc => GoldLabel::Answer(t),
                TaskKind::Tc => GoldLabel::ClassLabel(t),
                _ => GoldLabel::FreeResponse(text.to_string()),
            });
        }
        let mut ents = Vec::new();
        let mut rels = Vec::new();
        let mut events = Vec::new();
        let mut tuples = Vec::new();
        let mut kg: crate::corpus::KgEntities = IndexMap::new();
        let mut offset = 0;
        for raw_line in text.split('\n') {
            let at = offset;
            offset += raw_line.len() + 1;
            let line = raw_line.trim();
            if line.is_empty() {
                continue;
            }
            match task {
                TaskKind::Ner => {
                    let (label, rest) = head(line, at)?;
                    for p in parts(rest) {
                        ents.push(Entity::new(label.clone(), field(p)));
                    }
                }
                TaskKind::Re | TaskKind::Spo => {
                    let (pred, rest) = head(line, at)?;
                    let ps = parts(rest);
                    if ps.len() != 2 {
                        return Err(failure(at, "expected `relation: subject; object`"));
                    }
                    rels.push((pred, field(ps[0]), field(ps[1])));
                }
                TaskKind::Eet => {
                    let (etype, rest) = head(line, at)?;
                    for p in parts(rest) {
                        events.push(Event::new(etype.clone()).with_trigger(field(p)));
                    }
                }
                TaskKind::Ee | TaskKind::Eea => {
                    let (etype, rest) = head(line, at)?;
                    let mut ev = Event::new(etype);
                    let mut ps = parts(rest).into_iter();
                    if task == TaskKind::Ee {
                        if let Some(first) = ps.next() {
                            if find(first, '=').is_some() {
                                let (role, raw) = keyed(first, at)?;
                                ev.arguments.insert(role, arg(raw));
                            } else {
                                let t = field(first);
                                ev.trigger = (!t.is_empty()).then_some(t);
                            }
                        }
                    }
                    for p in ps {
                        let (role, raw) = keyed(p, at)?;
                        ev.arguments.insert(role, arg(raw));
                    }
                    events.push(ev);
                }
                TaskKind::Kge => {
                    let (etype, rest) = head(line, at)?;
                    let mut ps = parts(rest).into_iter();
                    let name = field(
                        ps.next()
                            .ok_or_else(|| failure(at, "expected an entity name"))?,
                    );
                    let mut attrs = IndexMap::new();
                    for p in ps {
                        let (k, raw) = keyed(p, at)?;
                        attrs.insert(k, attr_value(raw));
                    }
                    kg.entry(etype).or_default().insert(name, attrs);
                }
                TaskKind::OpenIe => {
                    let mut t = OpenTuple::default();
                    for p in split(line, ';') {
                        if escape::trim(p).is_empty() {
                            continue;
                        }
                        let (role, raw) = keyed(p, at)?;
                        let role = OpenRole::parse(&role)
                            .ok_or_else(|| failure(at, format!("unknown role `{role}`")))?;
                        t.elements.push(OpenElement {
                            role,
                            text: unescape(raw),
                        });
                    }
                    tuples.push(t);
                }
                TaskKind::Mrc | TaskKind::Tc | TaskKind::Ig => unreachable!(),
            }
        }
        Ok(match task {
            TaskKind::Ner => GoldLabel::EntitySet(ents),
            TaskKind::Re => GoldLabel::RelationSet(
                rels.into_iter()
                    .map(|(p, s, o)| Relation::new(p, s, o))
                    .collect(),
            ),
            TaskKind::Spo => GoldLabel::SpoSet(
                rels.into_iter()
                    .map(|(p, s, o)| spo_triple(p, s, o, schema))
                    .collect(),
            ),
            TaskKind::Kge => GoldLabel::KgEntities(kg),
            TaskKind::OpenIe => GoldLabel::OpenTuples(tuples),
            _ => GoldLabel::EventSet(events),
        })
    }
}

mod markdown {
    use super::escape::{self, split, unescape};
    use super::*;

    fn esc(s: &str) -> String {
        escape::escape(s, &['|'])
    }

    pub fn write(gold: &GoldLabel, task: TaskKind) -> String {
        let mut lines: Vec<String> = markdown_header(task)
            .iter()
            .map(|s| s.to_string())
            .collect();
        match gold {
            GoldLabel::EntitySet(v) => {
                for e in v {
                    lines.push(format!("| {} | {} |", esc(&e.label), esc(&e.span)));
                }
            }
            GoldLabel::RelationSet(v) => {
                for r in v {
                    lines.push(format!(
                        "| {}| {} | {} |",
                        esc(&r.subject),
                        esc(&r.predicate),
                        esc(&r.object)
                    ));
                }
            }
            GoldLabel::SpoSet(v) => {
                for t in v {
                    lines.push(format!(
                        "| {}| {} | {} |",
                        esc(&t.subject),
                        esc(&t.predicate),
                        esc(&t.object)
                    ));
                }
            }
            _ => unreachable!("markdown is only supported for NER, RE and SPO"),
        }
        lines.join("\n")
    }

    fn cells(line: &str) -> Vec<String> {
        let line = line.trim();
        let line = line.strip_prefix('|').unwrap_or(line);
        let line = if line.ends_with('|') && !line.ends_with("\\|") {
            &line[..line.len() - 1]
        } else {
            line
        };
        split(line, '|')
            .into_iter()
            .map(|c| unescape(escape::trim(c)))
            .collect()
    }

    fn is_separator(cells: &[String]) -> bool {
        !cells.is_empty()
            && cells.iter().all(|c| {
                let c = c.trim_matches(':');
                c.len() >= 3 && c.chars().all(|ch| ch == '-')
            })
    }

    fn column(header: &[String], names: &[&str], at: usize) -> Result<usize, FormatError> {
        header
            .iter()
            .position(|h| names.contains(&h.to_lowercase().as_str()))
            .ok_or_else(|| failure(at, format!("table header lacks a `{}` column", names[0])))
    }

    pub fn read(text: &str, task: TaskKind, schema: &TaskSchema) -> Result<GoldLabel, FormatError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header_line = lines.next().ok_or_else(|| failure(0, "empty table"))?;
        if !header_line.starts_with('|') {
            return Err(failure(0, "markdown table must start with `|`"));
        }
        let header = cells(header_line);
        let mut rows: Vec<Vec<String>> = Vec::new();
        for (i, l) in lines.enumerate() {
            if !l.starts_with('|') {
                return Err(failure(
                    text.find(l).unwrap_or(0),
                    "table row must start with `|`",
                ));
            }
            let c = cells(l);
            if i == 0 && is_separator(&c) {
                continue;
            }
            if c.len() != header.len() {
                return Err(failure(
                    text.find(l).unwrap_or(0),
                    "row width differs from header",
                ));
            }
            rows.push(c);
        }
        Ok(match task {
            TaskKind::Ner => {
                let lc = column(&header, &["entity_type", "type", "label"], 0)?;
                let sc = column(&header, &["entity", "span", "mention"], 0)?;
                GoldLabel::EntitySet(
                    rows.iter()
                        .map(|r| Entity::new(r[lc].clone(), r[sc].clone()))
                        .collect(),
                )
            }
            _ => {
                let s = column(&header, &["subject"], 0)?;
                let p = column(&header, &["predicate", "relation"], 0)?;
                let o = column(&header, &["object"], 0)?;
                let triples = rows
                    .iter()
                    .map(|r| (r[p].clone(), r[s].clone(), r[o].clone()));
                if task == TaskKind::Re {
                    GoldLabel::RelationSet(
                        triples.map(|(p, s, o)| Relation::new(p, s, o)).collect(),
                    )
                } else {
                    GoldLabel::SpoSet(
                        triples
                            .map(|(p, s, o)| spo_triple(p, s, o, schema))
                            .collect(),
                    )
                }
            }
        })
    }
}

mod tuple {
    use super::escape;
    use super::*;

    pub fn write(gold: &GoldLabel) -> String {
        let GoldLabel::OpenTuples(v) = gold else {
            unreachable!("tuple text is only supported for OPENIE")
        };
        v.iter()
            .map(|t| {
                let elems: Vec<String> = t
                    .elements
                    .iter()
                    .map(|e| {
                        format!(
                            "\"{}\":[{}]",
                            escape::escape(&e.text, &['"']),
                            e.role.as_str()
                        )
                    })
                    .collect();
                format!("({})", elems.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn read(text: &str) -> Result<GoldLabel, FormatError> {
        let mut out = Vec::new();
        let mut offset = 0;
        for raw in text.split('\n') {
            let at = offset;
            offset += raw.len() + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let inner = line
                .strip_prefix('(')
                .and_then(|l| l.strip_suffix(')'))
                .ok_or_else(|| failure(at, "tuple must be enclosed in parentheses"))?;
            out.push(elements(inner, at)?);
        }
        Ok(GoldLabel::OpenTuples(out))
    }

    fn elements(s: &str, at: usize) -> Result<OpenTuple, FormatError> {
        let mut t = OpenTuple::default();
        let mut rest = s.trim_start();
        while !rest.is_empty() {
            let body = rest
                .strip_prefix('"')
                .ok_or_else(|| failure(at, "expected `\"` opening an element"))?;
            let end =
                escape::find(body, '"').ok_or_else(|| failure(at, "unterminated element text"))?;
            let text = escape::unescape(&body[..end]);
            let after = body[end + 1..].trim_start();
            let after = after
                .strip_prefix(':')
                .map(str::trim_start)
                .and_then(|a| a.strip_prefix('['))
                .ok_or_else(|| failure(at, "expected `:[role]` after element text"))?;
            let close = after
                .find(']')
                .ok_or_else(|| failure(at, "unterminated role"))?;
            let role = OpenRole::parse(&after[..close])
                .ok_or_else(|| failure(at, format!("unknown role `{}`", &after[..close])))?;
            t.elements.push(OpenElement { role, text });
            rest = after[close + 1..].trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
            } else if !rest.is_empty() {
                return Err(failure(at, "expected `,` between elements"));
            }
        }
        Ok(t)
    }
}

const OPENIE_TUPLE_DIRECTIVE: &str = "Return them in the format: {\"subject\":[subject], \"predicate\":[predicate], \"object\":[object], \"time\":[time], \"location\":[location]}, arranged in the order they appear in the text. Do not output elements that do not exist.";

/// The sentence spliced into a prompt to request `fmt`. Unsupported
/// languages fall back to English.
pub fn format_directive(
    task: TaskKind,
    fmt: OutputFormat,
    language: &str,
) -> Result<String, FormatError> {
    check(task, fmt)?;
    if language == "zh" {
        if let Some(d) = directive_zh(task, fmt) {
            return Ok(d.to_string());
        }
    }
    Ok(directive_en(task, fmt).to_string())
}

fn directive_en(task: TaskKind, fmt: OutputFormat) -> &'static str {
    use OutputFormat::*;
    use TaskKind::*;
    match (task, fmt) {
        (Kge, Json) => "The results should be output in a parsable JSON format.",
        (Mrc, Json) => "Please respond in the format of a JSON string with the key \"answer\".",
        (Tc, Json) => "Please respond in the format of a JSON string with the key \"type\".",
        (OpenIe, Json) => "Please respond with a JSON list of tuples, each a list of {\"role\": \"text\"} objects in the order they appear in the text.",
        (_, Json) => "Please respond in the format of a JSON string.",
        (Ner, MarkdownTable) => "Please return the results in the format of markdown Table. The header is | entity_type | entity |",
        (_, MarkdownTable) => "Please return the results in the format of markdown Table. The header is | subject | predicate | object |",
        (OpenIe, TupleText) => OPENIE_TUPLE_DIRECTIVE,
        (Ner, PlainText) => "Please respond in plain text, one line per entity type written as type: mention1; mention2.",
        (Re | Spo, PlainText) => "Please respond in plain text, one line per triple written as relation: subject; object.",
        (Ee, PlainText) => "Please respond in plain text, one line per event written as event type: trigger; role=argument, using NAN for arguments that do not exist and [a, b] for multiple values.",
        (Eet, PlainText) => "Please respond in plain text, one line per event type written as event type: trigger1; trigger2.",
        (Eea, PlainText) => "Please respond in plain text, one line per event written as event type: role=argument; role=argument, using NAN for arguments that do not exist.",
        (Kge, PlainText) => "Please respond in plain text, one line per entity written as entity type: entity name; attribute=value.",
        (OpenIe, PlainText) => "Please respond in plain text, one line per tuple written as role=text; role=text.",
        (Mrc, PlainText) => "Please output the answer directly without any extra content.",
        (Tc, PlainText) => "Please output the type directly without any extra content.",
        (Ig, PlainText) => "",
        _ => "",
    }
}

fn directive_zh(task: TaskKind, fmt: OutputFormat) -> Option<&'static str> {
    use OutputFormat::*;
    Some(match (task, fmt) {
        (TaskKind::Ner, MarkdownTable) => {
            "请以markdown表格的格式返回结果，表头为 | entity_type | entity |"
        }
        (_, MarkdownTable) => {
            "请以markdown表格的格式返回结果，表头为 | subject | predicate | object |"
        }
        (TaskKind::Mrc | TaskKind::Tc | TaskKind::OpenIe, Json) => return None,
        (_, Json) => "请以JSON字符串的格式回答。",
        _ => return None,
    })
}
