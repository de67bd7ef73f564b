//! The scheme dictionary: per-label descriptions, name variants, typical
//! values and mined positive/negative examples.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{GoldLabel, TaskKind, TaskSchema, UnifiedSample};
use crate::llm::{LlmClient, LlmError};
use crate::rng::SeededRng;

pub const EXAMPLE_CAP: usize = 5;
pub const SYNONYMS: &str = include_str!("../data/synonyms.json");

/// Pseudo-label for tasks without a label inventory.
pub fn pseudo_label(task: TaskKind) -> Option<&'static str> {
    match task {
        TaskKind::Mrc => Some("question"),
        TaskKind::OpenIe => Some("openie"),
        _ => None,
    }
}

/// Dictionary keys a sample contributes to.
pub fn sample_labels(sample: &UnifiedSample) -> Vec<String> {
    match sample.task {
        TaskKind::Ig => vec![],
        t => match pseudo_label(t) {
            Some(p) => vec![p.to_string()],
            None => sample.schema.names().map(str::to_string).collect(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineExample {
    pub sample_id: String,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
    /// Schema the output is read against.
    pub schema: TaskSchema,
    pub output: GoldLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleGuide {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub descriptions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub typical_values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineEntry {
    pub label: String,
    pub task: TaskKind,
    #[serde(default)]
    pub descriptions: Vec<String>,
    #[serde(default)]
    pub name_variants: Vec<String>,
    #[serde(default)]
    pub positive_examples: Vec<GuidelineExample>,
    #[serde(default)]
    pub negative_examples: Vec<GuidelineExample>,
    #[serde(default)]
    pub typical_values: Vec<String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub roles: IndexMap<String, RoleGuide>,
}

impl GuidelineEntry {
    pub fn new(task: TaskKind, label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            task,
            descriptions: vec![],
            name_variants: vec![],
            positive_examples: vec![],
            negative_examples: vec![],
            typical_values: vec![],
            roles: IndexMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryOrigin {
    Curated,
    LlmGenerated,
    Mined,
}

pub fn entry_key(task: TaskKind, label: &str) -> String {
    format!("{task}/{label}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DictionaryDoc {
    version: u64,
    entries: Vec<GuidelineEntry>,
    #[serde(default)]
    provenance: IndexMap<String, EntryOrigin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DictionaryDoc", into = "DictionaryDoc")]
pub struct SchemaDictionary {
    pub version: u64,
    entries: Vec<GuidelineEntry>,
    pub provenance: IndexMap<String, EntryOrigin>,
    index: HashMap<(TaskKind, String), usize>,
}

impl From<DictionaryDoc> for SchemaDictionary {
    fn from(d: DictionaryDoc) -> Self {
        let mut out = Self {
            version: d.version,
            entries: d.entries,
            provenance: d.provenance,
            index: HashMap::new(),
        };
        out.reindex();
        out
    }
}

impl From<SchemaDictionary> for DictionaryDoc {
    fn from(d: SchemaDictionary) -> Self {
        Self {
            version: d.version,
            entries: d.entries,
            provenance: d.provenance,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DictionaryError {
    #[error("cannot build a dictionary from an empty corpus")]
    EmptyCorpus,
    #[error("label `{label}` of {task} is not in the dictionary")]
    UnknownLabel { task: TaskKind, label: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("dictionary i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dictionary: {0}")]
    Malformed(#[from] serde_json::Error),
}

impl SchemaDictionary {
    pub fn new(entries: Vec<GuidelineEntry>) -> Self {
        DictionaryDoc {
            version: 1,
            entries,
            provenance: IndexMap::new(),
        }
        .into()
    }

    fn reindex(&mut self) {
        self.index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.task, e.label.clone()), i))
            .collect();
    }

    pub fn entries(&self) -> &[GuidelineEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, task: TaskKind, label: &str) -> Option<&GuidelineEntry> {
        self.index
            .get(&(task, label.to_string()))
            .map(|&i| &self.entries[i])
    }

    pub fn get_mut(&mut self, task: TaskKind, label: &str) -> Option<&mut GuidelineEntry> {
        self.index
            .get(&(task, label.to_string()))
            .map(|&i| &mut self.entries[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    /// Parses a dictionary document, skipping a leading provenance header line.
    pub fn from_json(text: &str) -> Result<Self, DictionaryError> {
        let body = match text.split_once('\n') {
            Some((first, rest)) if crate::provenance::Provenance::is_header_line(first) => rest,
            _ => text,
        };
        Ok(serde_json::from_str(body)?)
    }

    /// Takes descriptions, name variants, typical values and role guides
    /// from `base` for every entry both dictionaries share.
    pub fn overlay(&mut self, base: &SchemaDictionary) {
        for entry in self.entries.iter_mut() {
            let Some(b) = base.get(entry.task, &entry.label) else {
                continue;
            };
            for d in &b.descriptions {
                push_unique(&mut entry.descriptions, d);
            }
            for v in &b.name_variants {
                push_unique(&mut entry.name_variants, v);
            }
            for t in &b.typical_values {
                push_unique(&mut entry.typical_values, t);
            }
            for (role, guide) in &b.roles {
                entry
                    .roles
                    .entry(role.clone())
                    .or_insert_with(|| guide.clone());
            }
            let key = entry_key(entry.task, &entry.label);
            if let Some(origin) = base.provenance.get(&key) {
                self.provenance.insert(key, *origin);
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DictionaryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Writes the whole document at once via a temporary sibling file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DictionaryError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json() + "\n")?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub seed: u64,
    pub cap: usize,
    /// label -> name variants
    pub synonyms: IndexMap<String, Vec<String>>,
}

impl BuildConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            cap: EXAMPLE_CAP,
            synonyms: builtin_synonyms(),
        }
    }
}

pub fn builtin_synonyms() -> IndexMap<String, Vec<String>> {
    serde_json::from_str(SYNONYMS).expect("builtin synonyms are valid")
}

struct Reservoir {
    seen: usize,
    items: Vec<GuidelineExample>,
    rng: SeededRng,
}

impl Reservoir {
    fn new(rng: SeededRng) -> Self {
        Self {
            seen: 0,
            items: vec![],
            rng,
        }
    }

    fn offer(&mut self, cap: usize, make: impl FnOnce() -> GuidelineExample) {
        if self.items.len() < cap {
            self.items.push(make());
        } else if cap > 0 {
            let j = self.rng.random_range(0..=self.seen);
            if j < cap {
                self.items[j] = make();
            }
        }
        self.seen += 1;
    }
}

fn is_positive(sample: &UnifiedSample, label: &str) -> bool {
    match sample.task {
        TaskKind::Tc => matches!(&sample.gold, GoldLabel::ClassLabel(c) if c == label),
        TaskKind::Mrc | TaskKind::OpenIe => !sample.gold.is_empty(),
        _ => sample.gold.mentions_label(label),
    }
}

fn example_of(sample: &UnifiedSample, label: &str) -> GuidelineExample {
    let (schema, output) = match sample.task {
        TaskKind::Tc | TaskKind::Mrc | TaskKind::OpenIe => {
            (sample.schema.clone(), sample.gold.clone())
        }
        _ => (
            sample.schema.slice(label).unwrap_or_default(),
            sample.gold.restricted_to(label),
        ),
    };
    let (question, choices) = match (sample.task, sample.schema.entries.first()) {
        (TaskKind::Mrc, Some(e)) => (Some(e.name.clone()), e.constraints.choices.clone()),
        _ => (None, vec![]),
    };
    GuidelineExample {
        sample_id: sample.id.clone(),
        input: sample.text.clone(),
        question,
        choices,
        schema,
        output,
    }
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !s.is_empty() && !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

fn mine_typical(entry: &mut GuidelineEntry) {
    for ex in &entry.positive_examples {
        match &ex.output {
            GoldLabel::EntitySet(v) => v
                .iter()
                .for_each(|e| push_unique(&mut entry.typical_values, &e.span)),
            GoldLabel::EventSet(v) => {
                for ev in v {
                    if let Some(t) = &ev.trigger {
                        push_unique(&mut entry.typical_values, t);
                    }
                    for (role, val) in &ev.arguments {
                        let g = entry.roles.entry(role.clone()).or_default();
                        val.values()
                            .into_iter()
                            .for_each(|s| push_unique(&mut g.typical_values, s));
                    }
                }
            }
            GoldLabel::KgEntities(m) => {
                for names in m.values() {
                    names
                        .keys()
                        .for_each(|n| push_unique(&mut entry.typical_values, n));
                }
            }
            _ => {}
        }
    }
}

/// Builds one entry per (task, label) in the corpus, keeping at most
/// `cfg.cap` positive and negative examples each by seeded reservoir sampling.
pub fn build_dictionary<'a>(
    corpus: impl IntoIterator<Item = &'a UnifiedSample>,
    cfg: &BuildConfig,
) -> Result<SchemaDictionary, DictionaryError> {
    let mut entries: IndexMap<(TaskKind, String), (GuidelineEntry, Reservoir, Reservoir)> =
        IndexMap::new();
    let mut any = false;
    for sample in corpus {
        any = true;
        for label in sample_labels(sample) {
            let key = (sample.task, label.clone());
            let slot = entries.entry(key).or_insert_with(|| {
                let scope = entry_key(sample.task, &label);
                (
                    GuidelineEntry::new(sample.task, &label),
                    Reservoir::new(SeededRng::derive(cfg.seed, &scope, "positive")),
                    Reservoir::new(SeededRng::derive(cfg.seed, &scope, "negative")),
                )
            });
            if let Some(se) = sample.schema.get(&label) {
                if let Some(d) = &se.description {
                    push_unique(&mut slot.0.descriptions, d);
                }
                for role in &se.constraints.arguments {
                    slot.0.roles.entry(role.clone()).or_default();
                }
            }
            let reservoir = if is_positive(sample, &label) {
                &mut slot.1
            } else {
                &mut slot.2
            };
            reservoir.offer(cfg.cap, || example_of(sample, &label));
        }
    }
    if !any {
        return Err(DictionaryError::EmptyCorpus);
    }
    let mut provenance = IndexMap::new();
    let mut out = Vec::with_capacity(entries.len());
    for ((task, label), (mut entry, pos, neg)) in entries {
        entry.positive_examples = pos.items;
        entry.negative_examples = neg.items;
        mine_typical(&mut entry);
        if let Some(vs) = cfg.synonyms.get(&label) {
            for v in vs {
                if v != &label {
                    push_unique(&mut entry.name_variants, v);
                }
            }
        }
        let origin = if entry.descriptions.is_empty() {
            EntryOrigin::Mined
        } else {
            EntryOrigin::Curated
        };
        provenance.insert(entry_key(task, &label), origin);
        out.push(entry);
    }
    let mut dict = SchemaDictionary::new(out);
    dict.provenance = provenance;
    Ok(dict)
}

/// Prompt asking for `n` descriptions of one label.
pub fn description_prompt(entry: &GuidelineEntry, n: usize) -> String {
    let mut p = format!(
        "You are an expert in {}. Write {n} different one-sentence descriptions of the label \"{}\" as it is used for annotation. Put each description on its own line, without numbering.",
        entry.task.display_name(),
        entry.label
    );
    if let Some(d) = entry.descriptions.first() {
        p.push_str(&format!("\nExisting description: {d}"));
    }
    if let Some(ex) = entry.positive_examples.first() {
        p.push_str(&format!("\nExample text: {}", ex.input));
    }
    p
}

/// Splits a model response into description lines.
pub fn parse_descriptions(response: &str) -> Vec<String> {
    response
        .lines()
        .map(|l| {
            let l = l.trim();
            let l = l.trim_start_matches(['-', '*', '•']).trim_start();
            let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
            let rest = &l[digits..];
            let l = if digits > 0 && (rest.starts_with('.') || rest.starts_with(')')) {
                rest[1..].trim_start()
            } else {
                l
            };
            l.trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// Adds up to `n_variants` model-written descriptions to every labelled entry.
pub fn enrich_descriptions(
    dict: &SchemaDictionary,
    llm: &LlmClient,
    n_variants: usize,
) -> Result<SchemaDictionary, DictionaryError> {
    if n_variants == 0 {
        return Ok(dict.clone());
    }
    let targets: Vec<usize> = (0..dict.entries.len())
        .filter(|&i| dict.entries[i].task.has_labels())
        .collect();
    let prompts: Vec<String> = targets
        .iter()
        .map(|&i| description_prompt(&dict.entries[i], n_variants))
        .collect();
    let responses = llm.complete_all(&prompts);
    let mut out = dict.clone();
    for (&i, resp) in targets.iter().zip(responses) {
        let resp = resp?;
        let entry = &mut out.entries[i];
        let before = entry.descriptions.len();
        for d in parse_descriptions(&resp).into_iter().take(n_variants) {
            push_unique(&mut entry.descriptions, &d);
        }
        if entry.descriptions.len() > before {
            out.provenance.insert(
                entry_key(entry.task, &entry.label),
                EntryOrigin::LlmGenerated,
            );
        }
    }
    out.version += 1;
    Ok(out)
}

/// What to draw from an entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuidelineSelector {
    pub description: bool,
    pub typical: bool,
    pub positives: usize,
    pub negatives: usize,
    pub name_variant: bool,
    /// Id of the host sample; examples from it are never returned.
    pub exclude_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuidelineBundle {
    pub description: Option<String>,
    pub typical: Option<String>,
    pub examples: Vec<GuidelineExample>,
    pub name_variant: Option<String>,
    /// role -> (description, typical value)
    pub roles: IndexMap<String, (Option<String>, Option<String>)>,
}

/// The source sample an id derives from (`id@rule`, `id#C` suffixes dropped).
pub fn base_id(id: &str) -> &str {
    let cut = id.find(['@', '#']).unwrap_or(id.len());
    &id[..cut]
}

fn pick_examples(
    pool: &[GuidelineExample],
    k: usize,
    exclude: Option<&str>,
    rng: &mut SeededRng,
) -> Vec<GuidelineExample> {
    let eligible: Vec<&GuidelineExample> = pool
        .iter()
        .filter(|e| exclude.is_none_or(|x| base_id(&e.sample_id) != base_id(x)))
        .collect();
    let k = k.min(eligible.len());
    let mut idx = rand::seq::index::sample(rng, eligible.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| eligible[i].clone()).collect()
}

/// Draws guideline material for one label.
pub fn sample_guidelines(
    dict: &SchemaDictionary,
    task: TaskKind,
    label: &str,
    rng: &mut SeededRng,
    wants: &GuidelineSelector,
) -> Result<GuidelineBundle, DictionaryError> {
    let entry = dict
        .get(task, label)
        .ok_or_else(|| DictionaryError::UnknownLabel {
            task,
            label: label.to_string(),
        })?;
    let mut b = GuidelineBundle::default();
    if wants.description {
        b.description = entry.descriptions.choose(rng).cloned();
        for (role, g) in &entry.roles {
            let d = g.descriptions.choose(rng).cloned();
            b.roles.insert(role.clone(), (d, None));
        }
    }
    if wants.typical {
        b.typical = entry.typical_values.choose(rng).cloned();
        for (role, g) in &entry.roles {
            let t = g.typical_values.choose(rng).cloned();
            b.roles.entry(role.clone()).or_default().1 = t;
        }
    }
    b.roles.retain(|_, (d, t)| d.is_some() || t.is_some());
    let exclude = wants.exclude_id.as_deref();
    b.examples = pick_examples(&entry.positive_examples, wants.positives, exclude, rng);
    b.examples.extend(pick_examples(
        &entry.negative_examples,
        wants.negatives,
        exclude,
        rng,
    ));
    if wants.name_variant {
        b.name_variant = entry.name_variants.choose(rng).cloned();
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, EntryKind};
    use crate::llm::{
        ChatRequest, ChatResponse, FnTransport, LlmConfig, Mode, ResponseCache, TransportError,
    };
    use std::sync::Arc;

    fn ner(id: &str, text: &str, spans: &[&str]) -> UnifiedSample {
        UnifiedSample::new(
            id,
            TaskKind::Ner,
            text,
            TaskSchema::labels(EntryKind::EntityType, &["else"]),
            GoldLabel::EntitySet(spans.iter().map(|s| Entity::new("else", *s)).collect()),
        )
    }

    fn crossner() -> Vec<UnifiedSample> {
        vec![
            ner("c1", "films such as Ex Machina", &["Ex Machina"]),
            ner("c2", "Felix Gers introduced the forget gate", &[]),
            ner("c3", "Octave helps in solving problems", &[]),
            ner("c4", "winning the Best Paper award", &["Best Paper award"]),
        ]
    }

    #[test]
    fn crossner_block_splits_two_and_two() {
        let d = build_dictionary(&crossner(), &BuildConfig::new(1)).unwrap();
        let e = d.get(TaskKind::Ner, "else").unwrap();
        assert_eq!(
            (e.positive_examples.len(), e.negative_examples.len()),
            (2, 2)
        );
        assert_eq!(e.negative_examples[0].output, GoldLabel::EntitySet(vec![]));
        assert!(!e.name_variants.contains(&"else".to_string()));
        assert_eq!(e.typical_values, ["Ex Machina", "Best Paper award"]);
    }

    #[test]
    fn single_sample_gives_one_example() {
        let d = build_dictionary(&crossner()[..1], &BuildConfig::new(1)).unwrap();
        let e = d.get(TaskKind::Ner, "else").unwrap();
        assert_eq!(e.positive_examples.len() + e.negative_examples.len(), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            build_dictionary(&[], &BuildConfig::new(1)),
            Err(DictionaryError::EmptyCorpus)
        ));
    }

    #[test]
    fn reservoir_caps_match_brute_force_tally() {
        let labels = ["a", "b", "c", "d", "e", "f"];
        let mut rng = SeededRng::new(3);
        let corpus: Vec<UnifiedSample> = (0..1000)
            .map(|i| {
                let k = rng.random_range(1..=3);
                let schema: Vec<&str> = labels[..k + 3].to_vec();
                let gold: Vec<Entity> = schema
                    .iter()
                    .filter(|_| rng.random_bool(0.01))
                    .map(|l| Entity::new(*l, "x"))
                    .collect();
                UnifiedSample::new(
                    format!("s{i}"),
                    TaskKind::Ner,
                    "x",
                    TaskSchema::labels(EntryKind::EntityType, &schema),
                    GoldLabel::EntitySet(gold),
                )
            })
            .collect();
        let d = build_dictionary(&corpus, &BuildConfig::new(9)).unwrap();
        for l in labels {
            let (mut pos, mut neg) = (0, 0);
            for s in &corpus {
                if s.schema.contains(l) {
                    if s.gold.mentions_label(l) {
                        pos += 1
                    } else {
                        neg += 1
                    }
                }
            }
            let e = d.get(TaskKind::Ner, l).unwrap();
            assert_eq!(e.positive_examples.len(), pos.min(5), "{l}");
            assert_eq!(e.negative_examples.len(), neg.min(5), "{l}");
            assert!(e
                .positive_examples
                .iter()
                .all(|x| x.output.mentions_label(l)));
        }
    }

    #[test]
    fn dictionary_round_trips_through_json() {
        let d = build_dictionary(&crossner(), &BuildConfig::new(1)).unwrap();
        let back = SchemaDictionary::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        assert!(back.get(TaskKind::Ner, "else").is_some());
    }

    #[test]
    fn sampling_is_deterministic_and_excludes_host() {
        let d = build_dictionary(&crossner(), &BuildConfig::new(1)).unwrap();
        let wants = GuidelineSelector {
            positives: 2,
            negatives: 2,
            exclude_id: Some("c1#C".into()),
            ..Default::default()
        };
        let a =
            sample_guidelines(&d, TaskKind::Ner, "else", &mut SeededRng::new(4), &wants).unwrap();
        let b =
            sample_guidelines(&d, TaskKind::Ner, "else", &mut SeededRng::new(4), &wants).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.examples.len(), 3);
        assert!(a.examples.iter().all(|e| e.sample_id != "c1"));
        assert!(matches!(
            sample_guidelines(&d, TaskKind::Ner, "nope", &mut SeededRng::new(4), &wants),
            Err(DictionaryError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn single_description_is_returned() {
        let mut d = build_dictionary(&crossner(), &BuildConfig::new(1)).unwrap();
        d.get_mut(TaskKind::Ner, "else").unwrap().descriptions = vec!["misc".into()];
        let wants = GuidelineSelector {
            description: true,
            ..Default::default()
        };
        let b =
            sample_guidelines(&d, TaskKind::Ner, "else", &mut SeededRng::new(0), &wants).unwrap();
        assert_eq!(b.description.as_deref(), Some("misc"));
        assert!(b.examples.is_empty());
    }

    #[test]
    fn name_variants_are_uniform() {
        let mut e = GuidelineEntry::new(TaskKind::Ner, "Position");
        e.name_variants = vec!["Title".into(), "Job".into(), "Occupation".into()];
        let d = SchemaDictionary::new(vec![e]);
        let wants = GuidelineSelector {
            name_variant: true,
            ..Default::default()
        };
        let mut rng = SeededRng::new(11);
        let mut counts: HashMap<String, usize> = HashMap::new();
        for _ in 0..10_000 {
            let b = sample_guidelines(&d, TaskKind::Ner, "Position", &mut rng, &wants).unwrap();
            *counts.entry(b.name_variant.unwrap()).or_default() += 1;
        }
        for c in counts.values() {
            assert!(
                (*c as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.03,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn description_lines_are_cleaned() {
        assert_eq!(
            parse_descriptions("1. First one.\n\n- Second one.\n3) Third"),
            ["First one.", "Second one.", "Third"]
        );
    }

    #[test]
    fn enrichment_under_replay_is_byte_stable() {
        let degree = UnifiedSample::new(
            "d1",
            TaskKind::Ner,
            "Ph.D. from MIT",
            TaskSchema::labels(EntryKind::EntityType, &["degree"]),
            GoldLabel::EntitySet(vec![Entity::new("degree", "Ph.D.")]),
        );
        let dict = build_dictionary(&[degree], &BuildConfig::new(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cfg = |mode| LlmConfig {
            mode,
            backoff_ms: 0,
            ..LlmConfig::default()
        };
        let t = Arc::new(FnTransport::new(|_: &ChatRequest| {
            Ok::<_, TransportError>(ChatResponse::stop(
                "The name of educational qualifications and degrees.",
            ))
        }));
        let rec = LlmClient::new(
            cfg(Mode::Record),
            Some(t),
            ResponseCache::open(&path).unwrap(),
        );
        let recorded = enrich_descriptions(&dict, &rec, 1).unwrap();
        drop(rec);
        let e = recorded.get(TaskKind::Ner, "degree").unwrap();
        assert_eq!(
            e.descriptions,
            ["The name of educational qualifications and degrees."]
        );
        assert_eq!(recorded.provenance["NER/degree"], EntryOrigin::LlmGenerated);

        let replay = || {
            let c = LlmClient::new(cfg(Mode::Replay), None, ResponseCache::open(&path).unwrap());
            enrich_descriptions(&dict, &c, 1).unwrap().to_json()
        };
        assert_eq!(replay(), replay());
        assert_eq!(replay(), recorded.to_json());
        let same = enrich_descriptions(
            &dict,
            &LlmClient::new(cfg(Mode::Replay), None, ResponseCache::in_memory()),
            0,
        )
        .unwrap();
        assert_eq!(same, dict);
    }
}
