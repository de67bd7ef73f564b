//! Instruction template pack and prompt assembly.
//!
//! A template supplies the task instruction sentence and a layout. The
//! `json_object` layout renders the prompt as a compact JSON object with the
//! keys `instruction`, `schema`, `output_format`, `example`, `input`,
//! `question` and `choice` (absent bindings are omitted). The `text` layout
//! fills a body string with a small placeholder syntax:
//!
//! * `{name}` inserts a binding, `{name|json}` inserts it as a JSON string;
//! * `{?name}...{/name}` keeps the enclosed text only when `name` is bound
//!   and non-empty;
//! * any other `{` is literal.
//!
//! ```
//! use indexmap::IndexMap;
//! use nluforge::templates::fill;
//!
//! let mut b = IndexMap::new();
//! b.insert("instruction", "Extract.".to_string());
//! b.insert("input", "text".to_string());
//! assert_eq!(fill("{instruction}\nInput:{input}{?examples} ({examples}){/examples}", &b).unwrap(), "Extract.\nInput:text");
//! ```

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::corpus::{SchemaEntry, TaskKind, TaskSchema};
use crate::formats::{format_directive, FormatError, OutputFormat};

pub const DEFAULT_EXAMPLES_HINT: &str = "You can refer to the example for extraction.";

const BUILTIN: &str = include_str!("../data/templates.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    JsonObject,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub task: TaskKind,
    pub index: usize,
    #[serde(default = "en")]
    pub language: String,
    pub layout: Layout,
    /// Task instruction sentence, without the format directive.
    pub instruction: String,
    /// Body for the `text` layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    /// Per-format directive overrides; formats not listed use the default directive.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub directives: IndexMap<OutputFormat, String>,
    /// Appended (without a separating space) when examples are shown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples_hint: Option<String>,
    /// Value of the `output_format` key, shown for JSON output only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_format: Option<Value>,
}

fn en() -> String {
    "en".to_string()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("no template {index} for {task}")]
    UnknownTemplate { task: TaskKind, index: usize },
    #[error("template is for {template} but the sample is {sample}")]
    TemplateTaskMismatch {
        template: TaskKind,
        sample: TaskKind,
    },
    #[error("template references unbound placeholder `{0}`")]
    MissingBinding(String),
    #[error("unclosed section `{0}`")]
    UnclosedSection(String),
    #[error("text layout template has no body")]
    MissingBody,
    #[error("schema has no entries")]
    EmptySchema,
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid template pack: {0}")]
    InvalidPack(String),
}

/// Stable identifier of a template within a pack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateId {
    pub task: TaskKind,
    pub index: usize,
}

impl TemplateId {
    pub fn new(task: TaskKind, index: usize) -> Self {
        Self { task, index }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePack {
    pub templates: Vec<Template>,
}

impl TemplatePack {
    /// The pack shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin template pack is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let pack: TemplatePack =
            serde_json::from_str(text).map_err(|e| TemplateError::InvalidPack(e.to_string()))?;
        pack.validate()?;
        Ok(pack)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, TemplateError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TemplateError::InvalidPack(e.to_string()))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), TemplateError> {
        for t in &self.templates {
            if t.layout == Layout::Text && t.body.is_none() {
                return Err(TemplateError::InvalidPack(format!(
                    "{} template {} has no body",
                    t.task, t.index
                )));
            }
            let dup = self
                .templates
                .iter()
                .filter(|o| o.task == t.task && o.index == t.index && o.language == t.language)
                .count();
            if dup > 1 {
                return Err(TemplateError::InvalidPack(format!(
                    "duplicate template {} {} {}",
                    t.task, t.index, t.language
                )));
            }
        }
        for task in TaskKind::ALL {
            if task == TaskKind::Ig {
                continue;
            }
            let n = self.count(task);
            if (0..n).any(|i| self.find(task, i, "en").is_none()) {
                return Err(TemplateError::InvalidPack(format!(
                    "{task} template indices are not contiguous"
                )));
            }
        }
        Ok(())
    }

    /// Number of English templates for a task; valid indices are `0..count`.
    pub fn count(&self, task: TaskKind) -> usize {
        self.templates
            .iter()
            .filter(|t| t.task == task && t.language == "en")
            .count()
    }

    fn find(&self, task: TaskKind, index: usize, language: &str) -> Option<&Template> {
        self.templates
            .iter()
            .find(|t| t.task == task && t.index == index && t.language == language)
    }

    /// Looks up a template in the requested language, falling back to
    /// English with a warning.
    pub fn get(&self, id: TemplateId, language: &str) -> Result<&Template, TemplateError> {
        if let Some(t) = self.find(id.task, id.index, language) {
            return Ok(t);
        }
        let t = self
            .find(id.task, id.index, "en")
            .ok_or(TemplateError::UnknownTemplate {
                task: id.task,
                index: id.index,
            })?;
        if language != "en" {
            log::warn!(
                "no {language} template {} for {}; using en",
                id.index,
                id.task
            );
        }
        Ok(t)
    }
}

/// Guideline material beyond what the schema entry itself carries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryExtras {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typical: Option<String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub roles: IndexMap<String, RoleExtras>,
}

impl EntryExtras {
    pub fn is_empty(&self) -> bool {
        self.typical.is_none() && self.roles.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleExtras {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typical: Option<String>,
}

/// One in-context example, output already serialized in the target format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleBlock {
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
    pub output: String,
}

/// Everything a prompt is assembled from.
#[derive(Debug, Clone, Copy)]
pub struct PromptParts<'a> {
    pub task: TaskKind,
    pub format: OutputFormat,
    pub language: &'a str,
    pub schema: &'a TaskSchema,
    pub extras: &'a IndexMap<String, EntryExtras>,
    pub input: &'a str,
    pub examples: &'a [ExampleBlock],
}

/// Instruction sentence with the format directive and, when examples are
/// shown, the examples hint.
pub fn compose_instruction(
    template: &Template,
    fmt: OutputFormat,
    language: &str,
    has_examples: bool,
) -> Result<String, TemplateError> {
    let directive = match template.directives.get(&fmt) {
        Some(d) => {
            format_directive(template.task, fmt, language)?;
            d.clone()
        }
        None => format_directive(template.task, fmt, language)?,
    };
    let mut s = template.instruction.clone();
    if !directive.is_empty() {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(&directive);
    }
    if has_examples {
        s.push_str(
            template
                .examples_hint
                .as_deref()
                .unwrap_or(DEFAULT_EXAMPLES_HINT),
        );
    }
    Ok(s)
}

fn describe(entry: &SchemaEntry, extras: Option<&EntryExtras>) -> Option<String> {
    let typical = extras.and_then(|x| x.typical.as_deref());
    match (&entry.description, typical) {
        (Some(d), Some(t)) => Some(format!("{d}\ntypical examples: {t}")),
        (Some(d), None) => Some(d.clone()),
        (None, Some(t)) => Some(format!("typical examples: {t}")),
        (None, None) => None,
    }
}

fn rich_entry(key: &str, entry: &SchemaEntry, extras: Option<&EntryExtras>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert(key.into(), Value::String(entry.name.clone()));
    if let Some(d) = describe(entry, extras) {
        m.insert("description".into(), Value::String(d));
    }
    if let Some(r) = &entry.constraints.rule {
        m.insert("rule".into(), Value::String(r.clone()));
    }
    m
}

fn role_list(entry: &SchemaEntry, extras: Option<&EntryExtras>) -> Value {
    let roles = &entry.constraints.arguments;
    match extras.filter(|x| !x.roles.is_empty()) {
        None => json!(roles),
        Some(x) => Value::Array(
            roles
                .iter()
                .map(|r| {
                    let mut m = Map::new();
                    m.insert("argument".into(), Value::String(r.clone()));
                    if let Some(g) = x.roles.get(r) {
                        if let Some(d) = &g.description {
                            m.insert("description".into(), Value::String(d.clone()));
                        }
                        if let Some(t) = &g.typical {
                            m.insert("typical examples".into(), Value::String(t.clone()));
                        }
                    }
                    Value::Object(m)
                })
                .collect(),
        ),
    }
}

/// The `schema` value shown in a prompt. `None` for tasks without a schema block.
pub fn schema_block(
    task: TaskKind,
    schema: &TaskSchema,
    extras: &IndexMap<String, EntryExtras>,
) -> Option<Value> {
    let ex = |e: &SchemaEntry| extras.get(&e.name);
    let described = schema
        .entries
        .iter()
        .any(|e| e.description.is_some() || ex(e).is_some_and(|x| x.typical.is_some()));
    let ruled = schema.entries.iter().any(|e| e.constraints.rule.is_some());
    let names = || json!(schema.names().collect::<Vec<_>>());
    let list = |f: &dyn Fn(&SchemaEntry) -> Map<String, Value>| {
        Value::Array(schema.entries.iter().map(|e| Value::Object(f(e))).collect())
    };
    Some(match task {
        TaskKind::Ner if described || ruled => list(&|e| rich_entry("entity_type", e, ex(e))),
        TaskKind::Re if described || ruled => list(&|e| rich_entry("relation", e, ex(e))),
        TaskKind::Ner | TaskKind::Re => names(),
        TaskKind::Spo => list(&|e| {
            let mut m = Map::new();
            m.insert(
                "subject_type".into(),
                json!(e.constraints.subject_type.clone().unwrap_or_default()),
            );
            m.insert("predicate".into(), json!(e.name));
            m.insert(
                "object_type".into(),
                json!(e.constraints.object_type.clone().unwrap_or_default()),
            );
            if let Some(d) = describe(e, ex(e)) {
                m.insert("description".into(), json!(d));
            }
            if let Some(r) = &e.constraints.rule {
                m.insert("rule".into(), json!(r));
            }
            m
        }),
        TaskKind::Ee | TaskKind::Eea => list(&|e| {
            let mut m = Map::new();
            m.insert("event_type".into(), json!(e.name));
            if task == TaskKind::Ee {
                m.insert("trigger".into(), Value::Bool(true));
            } else if let Some(t) = &e.constraints.trigger {
                m.insert("trigger".into(), json!(t));
            }
            if let Some(d) = describe(e, ex(e)) {
                m.insert("description".into(), json!(d));
            }
            if let Some(r) = &e.constraints.rule {
                m.insert("rule".into(), json!(r));
            }
            m.insert("arguments".into(), role_list(e, ex(e)));
            m
        }),
        TaskKind::Eet if ruled => list(&|e| rich_entry("event_type", e, ex(e))),
        TaskKind::Eet if described => Value::Object(
            schema
                .entries
                .iter()
                .map(|e| {
                    (
                        e.name.clone(),
                        Value::String(describe(e, ex(e)).unwrap_or_default()),
                    )
                })
                .collect(),
        ),
        TaskKind::Eet => names(),
        TaskKind::Kge => list(&|e| {
            let mut m = rich_entry("entity_type", e, ex(e));
            m.insert("attributes".into(), json!(e.constraints.attributes));
            m
        }),
        TaskKind::Tc if described || ruled => list(&|e| rich_entry("label", e, ex(e))),
        TaskKind::Tc => json!([schema.names().collect::<Vec<_>>().join(", ")]),
        TaskKind::Mrc | TaskKind::OpenIe | TaskKind::Ig => return None,
    })
}

fn example_output(text: &str, fmt: OutputFormat) -> Value {
    if fmt == OutputFormat::Json {
        if let Ok(v) = serde_json::from_str::<Value>(text) {
            if v.is_object() || v.is_array() {
                return v;
            }
        }
    }
    Value::String(text.to_string())
}

fn examples_text(examples: &[ExampleBlock]) -> String {
    examples
        .iter()
        .map(|e| {
            let mut s = format!("input: {}", e.input);
            if let Some(q) = &e.question {
                s.push_str(&format!("\nquestion: {q}"));
            }
            if !e.choices.is_empty() {
                s.push_str(&format!(
                    "\nchoice: {}",
                    serde_json::to_string(&e.choices).unwrap()
                ));
            }
            s.push_str(&format!("\nanswer: {}", e.output));
            s
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Assembles the full model input for one instruction.
pub fn render_prompt(
    template: &Template,
    parts: &PromptParts<'_>,
) -> Result<String, TemplateError> {
    if template.task != parts.task {
        return Err(TemplateError::TemplateTaskMismatch {
            template: template.task,
            sample: parts.task,
        });
    }
    let needs_schema = !matches!(parts.task, TaskKind::OpenIe | TaskKind::Ig);
    if needs_schema && parts.schema.is_empty() {
        return Err(TemplateError::EmptySchema);
    }
    let instruction = compose_instruction(
        template,
        parts.format,
        parts.language,
        !parts.examples.is_empty(),
    )?;
    let schema = schema_block(parts.task, parts.schema, parts.extras);
    let (question, choices) = if parts.task == TaskKind::Mrc {
        let e = &parts.schema.entries[0];
        (Some(e.name.clone()), e.constraints.choices.clone())
    } else {
        (None, Vec::new())
    };

    match template.layout {
        Layout::JsonObject => {
            let mut m = Map::new();
            m.insert("instruction".into(), Value::String(instruction));
            if let Some(s) = schema {
                m.insert("schema".into(), s);
            }
            if let (Some(of), OutputFormat::Json) = (&template.output_format, parts.format) {
                m.insert("output_format".into(), of.clone());
            }
            if !parts.examples.is_empty() {
                let ex: Vec<Value> = parts
                    .examples
                    .iter()
                    .map(|e| {
                        let mut o = Map::new();
                        o.insert("input".into(), json!(e.input));
                        if let Some(q) = &e.question {
                            o.insert("question".into(), json!(q));
                        }
                        if !e.choices.is_empty() {
                            o.insert("choice".into(), json!(e.choices));
                        }
                        o.insert("output".into(), example_output(&e.output, parts.format));
                        Value::Object(o)
                    })
                    .collect();
                m.insert("example".into(), Value::Array(ex));
            }
            m.insert("input".into(), json!(parts.input));
            if let Some(q) = question {
                m.insert("question".into(), json!(q));
            }
            if !choices.is_empty() {
                m.insert("choice".into(), json!(choices));
            }
            Ok(serde_json::to_string(&Value::Object(m)).expect("prompt serializes"))
        }
        Layout::Text => {
            let body = template.body.as_deref().ok_or(TemplateError::MissingBody)?;
            let mut b: IndexMap<&str, String> = IndexMap::new();
            b.insert("instruction", instruction);
            b.insert("input", parts.input.to_string());
            if let Some(s) = schema {
                b.insert("schema", serde_json::to_string(&s).unwrap());
            }
            b.insert("examples", examples_text(parts.examples));
            if let Some(q) = question {
                b.insert("question", q);
            }
            b.insert(
                "choices",
                if choices.is_empty() {
                    String::new()
                } else {
                    serde_json::to_string(&choices).unwrap()
                },
            );
            fill(body, &b)
        }
    }
}

fn ident_at(s: &str) -> Option<(&str, usize)> {
    let end = s.find(|c: char| !(c.is_ascii_lowercase() || c == '_'))?;
    (end > 0).then(|| (&s[..end], end))
}

/// Fills a text-layout body. See the module docs for the syntax.
pub fn fill(body: &str, bindings: &IndexMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        if let Some(sec) = after.strip_prefix('?') {
            if let Some((name, n)) = ident_at(sec) {
                if sec[n..].starts_with('}') {
                    let inner_start = &sec[n + 1..];
                    let close = format!("{{/{name}}}");
                    let end = inner_start
                        .find(&close)
                        .ok_or_else(|| TemplateError::UnclosedSection(name.to_string()))?;
                    if bindings.get(name).is_some_and(|v| !v.is_empty()) {
                        out.push_str(&fill(&inner_start[..end], bindings)?);
                    }
                    rest = &inner_start[end + close.len()..];
                    continue;
                }
            }
        } else if let Some((name, n)) = ident_at(after) {
            let tail = &after[n..];
            let (json, skip) = if tail.starts_with('}') {
                (false, 1)
            } else if tail.starts_with("|json}") {
                (true, 6)
            } else {
                out.push('{');
                rest = after;
                continue;
            };
            let v = bindings
                .get(name)
                .ok_or_else(|| TemplateError::MissingBinding(name.to_string()))?;
            if json {
                out.push_str(&serde_json::to_string(v).unwrap());
            } else {
                out.push_str(v);
            }
            rest = &tail[skip..];
            continue;
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    Ok(out)
}
