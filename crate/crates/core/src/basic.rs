//! Basic (style B) instructions: one template, the sample's own schema, and
//! the task's default output format.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{GoldLabel, TaskKind, TaskSchema, UnifiedSample};
use crate::formats::{default_format, serialize_with, EmptyCandidate, FormatError, OutputFormat};
pub use crate::templates::TemplateId;
use crate::templates::{render_prompt, PromptParts, TemplateError, TemplatePack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Style {
    B,
    C,
}

impl std::str::FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B" | "b" => Ok(Style::B),
            "C" | "c" => Ok(Style::C),
            other => Err(format!("unknown style `{other}`, expected B or C")),
        }
    }
}

/// Diversification strategies of compound instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Guidelines,
    Rules,
    Format,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Guidelines, Strategy::Rules, Strategy::Format];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Guidelines => "GUIDELINES",
            Strategy::Rules => "RULES",
            Strategy::Format => "FORMAT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordProvenance {
    pub source_id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    /// placeholder -> label it replaced
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_map: Option<IndexMap<String, String>>,
    /// variant -> original label
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_map: Option<IndexMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty_candidate: Option<EmptyCandidate>,
}

impl RecordProvenance {
    pub fn new(source_id: impl Into<String>, seed: u64) -> Self {
        Self {
            source_id: source_id.into(),
            seed,
            template: None,
            rule_id: None,
            mask_map: None,
            variant_map: None,
            empty_candidate: None,
        }
    }
}

/// A finished training record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedInstruction {
    pub id: String,
    pub task: TaskKind,
    pub style: Style,
    pub strategies: BTreeSet<Strategy>,
    pub prompt: String,
    pub target: String,
    pub format: OutputFormat,
    /// The schema as shown in the prompt, after any label rewriting.
    pub schema: TaskSchema,
    pub provenance: RecordProvenance,
}

impl RenderedInstruction {
    /// Parses the target back into a gold annotation over the shown schema.
    pub fn parse_target(&self) -> Result<GoldLabel, FormatError> {
        crate::formats::parse(&self.target, self.task, self.format, &self.schema)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("expected a {expected} sample, got {got}")]
    TaskMismatch { expected: TaskKind, got: TaskKind },
    #[error("sample `{0}` has an empty target")]
    EmptyTarget(String),
    #[error("label `{label}` of {task} is not in the dictionary")]
    UnknownLabel { task: TaskKind, label: String },
    #[error("dictionary: {0}")]
    Dictionary(String),
}

/// Renders a style-B instruction.
pub fn render_basic(
    sample: &UnifiedSample,
    template: TemplateId,
    pack: &TemplatePack,
    seed: u64,
) -> Result<RenderedInstruction, SynthError> {
    if sample.task == TaskKind::Ig {
        return render_ig(sample);
    }
    if template.task != sample.task {
        return Err(TemplateError::TemplateTaskMismatch {
            template: template.task,
            sample: sample.task,
        }
        .into());
    }
    let tpl = pack.get(template, &sample.language)?;
    let format = default_format(sample.task);
    let extras = IndexMap::new();
    let prompt = render_prompt(
        tpl,
        &PromptParts {
            task: sample.task,
            format,
            language: &sample.language,
            schema: &sample.schema,
            extras: &extras,
            input: &sample.text,
            examples: &[],
        },
    )?;
    let target = serialize_with(
        &sample.gold,
        sample.task,
        format,
        &sample.schema,
        EmptyCandidate::EmptyList,
    )?;
    let mut provenance = RecordProvenance::new(&sample.id, seed);
    provenance.template = Some(template);
    Ok(RenderedInstruction {
        id: format!("{}#B", sample.id),
        task: sample.task,
        style: Style::B,
        strategies: BTreeSet::new(),
        prompt,
        target,
        format,
        schema: sample.schema.clone(),
        provenance,
    })
}

/// Passes an instruction-following sample through unchanged.
pub fn render_ig(sample: &UnifiedSample) -> Result<RenderedInstruction, SynthError> {
    let GoldLabel::FreeResponse(response) = &sample.gold else {
        return Err(SynthError::TaskMismatch {
            expected: TaskKind::Ig,
            got: sample.task,
        });
    };
    if sample.task != TaskKind::Ig {
        return Err(SynthError::TaskMismatch {
            expected: TaskKind::Ig,
            got: sample.task,
        });
    }
    if response.is_empty() {
        return Err(SynthError::EmptyTarget(sample.id.clone()));
    }
    Ok(RenderedInstruction {
        id: format!("{}#B", sample.id),
        task: TaskKind::Ig,
        style: Style::B,
        strategies: BTreeSet::new(),
        prompt: sample.text.clone(),
        target: response.clone(),
        format: OutputFormat::PlainText,
        schema: sample.schema.clone(),
        provenance: RecordProvenance::new(&sample.id, 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, EntryKind};

    fn ner(gold: Vec<Entity>, labels: &[&str]) -> UnifiedSample {
        UnifiedSample::new(
            "n1",
            TaskKind::Ner,
            "some text",
            TaskSchema::labels(EntryKind::EntityType, labels),
            GoldLabel::EntitySet(gold),
        )
    }

    #[test]
    fn empty_ner_gold_is_keyed_empty_list() {
        let pack = TemplatePack::builtin();
        let r = render_basic(
            &ner(vec![], &["label"]),
            TemplateId::new(TaskKind::Ner, 0),
            &pack,
            1,
        )
        .unwrap();
        assert_eq!(r.target, r#"{"label":[]}"#);
        assert_eq!(r.style, Style::B);
        assert!(r.strategies.is_empty());
        assert!(!r.prompt.contains("\"example\""));
    }

    #[test]
    fn template_must_match_task() {
        let pack = TemplatePack::builtin();
        let err = render_basic(
            &ner(vec![], &["a"]),
            TemplateId::new(TaskKind::Re, 0),
            &pack,
            1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SynthError::Template(TemplateError::TemplateTaskMismatch { .. })
        ));
    }

    #[test]
    fn empty_schema_is_rejected() {
        let pack = TemplatePack::builtin();
        let err = render_basic(
            &ner(vec![], &[]),
            TemplateId::new(TaskKind::Ner, 0),
            &pack,
            1,
        )
        .unwrap_err();
        assert_eq!(err, SynthError::Template(TemplateError::EmptySchema));
    }

    #[test]
    fn ig_is_identity() {
        let s = UnifiedSample::new(
            "g",
            TaskKind::Ig,
            "q?",
            TaskSchema::default(),
            GoldLabel::FreeResponse("a.".into()),
        );
        let r = render_ig(&s).unwrap();
        assert_eq!((r.prompt.as_str(), r.target.as_str()), ("q?", "a."));
        let mut e = s.clone();
        e.gold = GoldLabel::FreeResponse(String::new());
        assert_eq!(render_ig(&e), Err(SynthError::EmptyTarget("g".into())));
        assert!(matches!(
            render_ig(&ner(vec![], &["a"])),
            Err(SynthError::TaskMismatch { .. })
        ));
    }

    #[test]
    fn rendering_is_deterministic() {
        let pack = TemplatePack::builtin();
        let s = ner(vec![Entity::new("a", "some")], &["a", "b"]);
        for i in 0..pack.count(TaskKind::Ner) {
            let a = render_basic(&s, TemplateId::new(TaskKind::Ner, i), &pack, 5).unwrap();
            let b = render_basic(&s, TemplateId::new(TaskKind::Ner, i), &pack, 5).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.parse_target().unwrap(), s.gold);
        }
    }
}
