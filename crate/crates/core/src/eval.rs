//! Zero-shot evaluation: tolerant extraction of model outputs and exact-match
//! scoring (micro-F1, event trigger/argument F1, choice and label accuracy).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::basic::{RenderedInstruction, Style};
use crate::corpus::{GoldLabel, TaskKind, TaskSchema, NAN};
use crate::formats::{self, OutputFormat};
use crate::llm::{LlmClient, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    MicroF1,
    TriggerArgF1,
    ChoiceAcc,
    LabelAcc,
}

impl Metric {
    pub fn for_task(task: TaskKind) -> Option<Metric> {
        use TaskKind::*;
        Some(match task {
            Ner | Re | Spo | OpenIe | Kge => Metric::MicroF1,
            Ee | Eet | Eea => Metric::TriggerArgF1,
            Mrc => Metric::ChoiceAcc,
            Tc => Metric::LabelAcc,
            Ig => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTask {
    pub name: String,
    pub task: TaskKind,
    pub style: Style,
    pub metric: Metric,
}

impl EvalTask {
    pub fn new(name: impl Into<String>, task: TaskKind, style: Style) -> Result<Self, EvalError> {
        let metric =
            Metric::for_task(task).ok_or(EvalError::IncompatibleMetric { task, metric: None })?;
        Ok(Self {
            name: name.into(),
            task,
            style,
            metric,
        })
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if Metric::for_task(self.task) != Some(self.metric) {
            return Err(EvalError::IncompatibleMetric {
                task: self.task,
                metric: Some(self.metric),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{gold} gold items but {pred} predictions")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("item {index}: gold `{gold}` is not among the choices")]
    GoldNotInChoices { index: usize, gold: String },
    #[error("metric {metric:?} cannot score {task}")]
    IncompatibleMetric {
        task: TaskKind,
        metric: Option<Metric>,
    },
    #[error("record `{id}` is style {got:?}, the evaluation expects {expected:?}")]
    StyleMismatch {
        id: String,
        expected: Style,
        got: Style,
    },
    #[error("record `{id}` is {got}, the evaluation expects {expected}")]
    TaskMismatch {
        id: String,
        expected: TaskKind,
        got: TaskKind,
    },
    #[error("record `{id}` has an unreadable target: {cause}")]
    BadGold { id: String, cause: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// A model output nothing could be read from. Scored as an empty prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub reason: String,
}

pub type Extracted = Result<GoldLabel, ParseFailure>;

/// The order formats are tried in.
pub const EXTRACT_ORDER: [OutputFormat; 4] = [
    OutputFormat::Json,
    OutputFormat::MarkdownTable,
    OutputFormat::TupleText,
    OutputFormat::PlainText,
];

fn json_span(text: &str) -> Option<&str> {
    let start = text.find(['{', '['])?;
    let close = if text[start..].starts_with('{') {
        '}'
    } else {
        ']'
    };
    let end = text.rfind(close)?;
    (end > start).then(|| &text[start..=end])
}

fn table_span(text: &str) -> Option<String> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .skip_while(|l| !l.starts_with('|'))
        .take_while(|l| l.starts_with('|'))
        .collect();
    (!lines.is_empty()).then(|| lines.join("\n"))
}

fn tuple_span(text: &str) -> Option<&str> {
    let start = text.find('(')?;
    let end = text.rfind(')')?;
    (end > start).then(|| &text[start..=end])
}

fn candidates(text: &str, fmt: OutputFormat) -> Vec<String> {
    let mut out = vec![text.to_string()];
    let inner = match fmt {
        OutputFormat::Json => json_span(text).map(str::to_string),
        OutputFormat::MarkdownTable => table_span(text),
        OutputFormat::TupleText => tuple_span(text).map(str::to_string),
        OutputFormat::PlainText => None,
    };
    if let Some(i) = inner {
        if i != text {
            out.push(i);
        }
    }
    out
}

/// Reads a model output as a gold annotation, trying JSON, markdown table,
/// tuple text and plain text in turn. Code fences and prose around the
/// structured part are ignored. Plain text is only accepted when every label
/// it names is in the schema.
pub fn tolerant_extract(output: &str, task: TaskKind, schema: &TaskSchema) -> Extracted {
    let body = formats::strip_fences(output);
    let mut last = String::from("no applicable format");
    for fmt in EXTRACT_ORDER {
        if !formats::is_supported(task, fmt) {
            continue;
        }
        for cand in candidates(body, fmt) {
            let cand = formats::strip_fences(&cand);
            let parsed = if fmt == OutputFormat::PlainText && task.is_set_valued() {
                formats::parse_checked(cand, task, fmt, schema)
            } else {
                formats::parse(cand, task, fmt, schema)
            };
            match parsed {
                Ok(g) => return Ok(g),
                Err(e) => last = format!("{fmt}: {e}"),
            }
        }
    }
    Err(ParseFailure { reason: last })
}

/// Precision, recall and F1 with the underlying counts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Prf {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

fn t(s: &str) -> String {
    s.trim().to_string()
}

/// The matchable units of a gold annotation, as a set.
pub fn tuples(gold: &GoldLabel) -> HashSet<Vec<String>> {
    let mut out = HashSet::new();
    match gold {
        GoldLabel::EntitySet(v) => out.extend(v.iter().map(|e| vec![t(&e.label), t(&e.span)])),
        GoldLabel::RelationSet(v) => out.extend(
            v.iter()
                .map(|r| vec![t(&r.predicate), t(&r.subject), t(&r.object)]),
        ),
        GoldLabel::SpoSet(v) => out.extend(v.iter().map(|s| {
            vec![
                t(&s.predicate),
                t(&s.subject),
                t(&s.subject_type),
                t(&s.object),
                t(&s.object_type),
            ]
        })),
        GoldLabel::OpenTuples(v) => out.extend(v.iter().map(|tu| {
            tu.elements
                .iter()
                .map(|e| format!("{}={}", e.role.as_str(), e.text.trim()))
                .collect()
        })),
        GoldLabel::KgEntities(m) => {
            for (ty, names) in m {
                for (name, attrs) in names {
                    out.insert(vec![t(ty), t(name)]);
                    for (k, v) in attrs {
                        for x in v.values() {
                            out.insert(vec![t(ty), t(name), t(k), t(x)]);
                        }
                    }
                }
            }
        }
        GoldLabel::EventSet(_) => {
            out.extend(trigger_units(gold));
            out.extend(argument_units(gold));
        }
        GoldLabel::Answer(s) | GoldLabel::ClassLabel(s) | GoldLabel::FreeResponse(s) => {
            out.insert(vec![t(s)]);
        }
    }
    out
}

fn trigger_units(gold: &GoldLabel) -> HashSet<Vec<String>> {
    let GoldLabel::EventSet(v) = gold else {
        return HashSet::new();
    };
    v.iter()
        .filter_map(|e| e.trigger.as_deref().map(|tr| vec![t(&e.event_type), t(tr)]))
        .collect()
}

/// (event type, role, value) triples; lists are flattened and NAN is dropped.
fn argument_units(gold: &GoldLabel) -> HashSet<Vec<String>> {
    let GoldLabel::EventSet(v) = gold else {
        return HashSet::new();
    };
    let mut out = HashSet::new();
    for e in v {
        for (role, val) in &e.arguments {
            for x in val.values() {
                if x.trim() != NAN && !x.trim().is_empty() {
                    out.insert(vec![t(&e.event_type), t(role), t(x)]);
                }
            }
        }
    }
    out
}

fn micro(
    gold: &[GoldLabel],
    pred: &[Extracted],
    units: impl Fn(&GoldLabel) -> HashSet<Vec<String>>,
) -> Result<Prf, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (g, p) in gold.iter().zip(pred) {
        let gs = units(g);
        let ps = match p {
            Ok(p) => units(p),
            Err(_) => HashSet::new(),
        };
        let hit = gs.intersection(&ps).count() as u64;
        tp += hit;
        fp += ps.len() as u64 - hit;
        fn_ += gs.len() as u64 - hit;
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Micro-averaged exact-match P/R/F1. A parse failure predicts nothing.
pub fn score_micro_f1(
    gold: &[GoldLabel],
    pred: &[Extracted],
    _task: TaskKind,
) -> Result<Prf, EvalError> {
    micro(gold, pred, tuples)
}

/// Trigger and argument micro-F1 for event tasks.
pub fn score_event(gold: &[GoldLabel], pred: &[Extracted]) -> Result<(Prf, Prf), EvalError> {
    Ok((
        micro(gold, pred, trigger_units)?,
        micro(gold, pred, argument_units)?,
    ))
}

/// Share of items whose trimmed prediction equals the gold choice.
pub fn score_choice(
    gold: &[String],
    pred: &[Result<String, ParseFailure>],
    choices: &[Vec<String>],
) -> Result<f64, EvalError> {
    if gold.len() != pred.len() || gold.len() != choices.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (i, (g, cs)) in gold.iter().zip(choices).enumerate() {
        if !cs.iter().any(|c| c.trim() == g.trim()) {
            return Err(EvalError::GoldNotInChoices {
                index: i,
                gold: g.clone(),
            });
        }
    }
    Ok(accuracy(gold, pred))
}

/// Share of exact (trimmed) label matches.
pub fn score_labels(
    gold: &[String],
    pred: &[Result<String, ParseFailure>],
) -> Result<f64, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    Ok(accuracy(gold, pred))
}

fn accuracy(gold: &[String], pred: &[Result<String, ParseFailure>]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hits = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| matches!(p, Ok(p) if p.trim() == g.trim()))
        .count();
    hits as f64 / gold.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scores {
    F1(Prf),
    Event { trigger: Prf, argument: Prf },
    Accuracy(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub task: TaskKind,
    pub style: Style,
    pub metric: Metric,
    pub n: usize,
    pub parse_failures: usize,
    pub scores: Scores,
    /// Set when there was nothing to score.
    pub undefined: bool,
}

impl EvalReport {
    /// The headline number: F1, argument F1 for events, or accuracy.
    pub fn headline(&self) -> f64 {
        match &self.scores {
            Scores::F1(p) => p.f1,
            Scores::Event { argument, .. } => argument.f1,
            Scores::Accuracy(a) => *a,
        }
    }
}

fn text_of(g: &GoldLabel) -> Option<String> {
    match g {
        GoldLabel::Answer(s) | GoldLabel::ClassLabel(s) => Some(s.clone()),
        _ => None,
    }
}

fn choices_of(record: &RenderedInstruction) -> Vec<String> {
    record
        .schema
        .entries
        .iter()
        .flat_map(|e| e.constraints.choices.iter().cloned())
        .collect()
}

/// Scores already-collected model outputs against a rendered corpus.
pub fn score_outputs(
    spec: &EvalTask,
    corpus: &[RenderedInstruction],
    outputs: &[String],
) -> Result<EvalReport, EvalError> {
    spec.validate()?;
    if corpus.len() != outputs.len() {
        return Err(EvalError::LengthMismatch {
            gold: corpus.len(),
            pred: outputs.len(),
        });
    }
    let mut gold = Vec::with_capacity(corpus.len());
    let mut pred = Vec::with_capacity(corpus.len());
    for (r, out) in corpus.iter().zip(outputs) {
        gold.push(r.parse_target().map_err(|e| EvalError::BadGold {
            id: r.id.clone(),
            cause: e.to_string(),
        })?);
        pred.push(tolerant_extract(out, r.task, &r.schema));
    }
    let parse_failures = pred.iter().filter(|p| p.is_err()).count();
    let texts = |v: &[Extracted]| -> Vec<Result<String, ParseFailure>> {
        v.iter()
            .map(|p| match p {
                Ok(g) => text_of(g).ok_or_else(|| ParseFailure {
                    reason: "not a text answer".into(),
                }),
                Err(e) => Err(e.clone()),
            })
            .collect()
    };
    let gold_texts: Vec<String> = gold
        .iter()
        .map(|g| text_of(g).unwrap_or_default())
        .collect();
    let scores = match spec.metric {
        Metric::MicroF1 => Scores::F1(score_micro_f1(&gold, &pred, spec.task)?),
        Metric::TriggerArgF1 => {
            let (trigger, argument) = score_event(&gold, &pred)?;
            Scores::Event { trigger, argument }
        }
        Metric::ChoiceAcc => {
            let choices: Vec<Vec<String>> = corpus.iter().map(choices_of).collect();
            Scores::Accuracy(score_choice(&gold_texts, &texts(&pred), &choices)?)
        }
        Metric::LabelAcc => Scores::Accuracy(score_labels(&gold_texts, &texts(&pred))?),
    };
    Ok(EvalReport {
        name: spec.name.clone(),
        task: spec.task,
        style: spec.style,
        metric: spec.metric,
        n: corpus.len(),
        parse_failures,
        scores,
        undefined: corpus.is_empty(),
    })
}

/// Queries the model for every record and scores the answers.
pub fn run_eval(
    spec: &EvalTask,
    corpus: &[RenderedInstruction],
    model: &LlmClient,
) -> Result<EvalReport, EvalError> {
    spec.validate()?;
    for r in corpus {
        if r.style != spec.style {
            return Err(EvalError::StyleMismatch {
                id: r.id.clone(),
                expected: spec.style,
                got: r.style,
            });
        }
        if r.task != spec.task {
            return Err(EvalError::TaskMismatch {
                id: r.id.clone(),
                expected: spec.task,
                got: r.task,
            });
        }
    }
    let prompts: Vec<String> = corpus.iter().map(|r| r.prompt.clone()).collect();
    let outputs = model
        .complete_all(&prompts)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    score_outputs(spec, corpus, &outputs)
}

/// One line per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut s = format!(
        "{:<20}{:<8}{:<6}{:>6}{:>8}{:>18}\n",
        "name", "task", "style", "n", "fail", "score"
    );
    for r in reports {
        let score = if r.undefined {
            "-".to_string()
        } else {
            match &r.scores {
                Scores::F1(p) => format!("{:.4}", p.f1),
                Scores::Event { trigger, argument } => {
                    format!("{:.4}/{:.4}", trigger.f1, argument.f1)
                }
                Scores::Accuracy(a) => format!("{a:.4}"),
            }
        };
        s.push_str(&format!(
            "{:<20}{:<8}{:<6}{:>6}{:>8}{:>18}\n",
            r.name,
            r.task.as_str(),
            format!("{:?}", r.style),
            r.n,
            r.parse_failures,
            score
        ));
    }
    s
}
