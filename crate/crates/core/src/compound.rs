//! Compound (style C) instructions: guideline injection, label-name variants
//! and masking, and rendering in any supported output format.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basic::{RecordProvenance, RenderedInstruction, Strategy, Style, SynthError};
use crate::corpus::{GoldLabel, TaskKind, TaskSchema, UnifiedSample};
use crate::dictionary::{
    sample_guidelines, DictionaryError, GuidelineExample, GuidelineSelector, SchemaDictionary,
};
use crate::formats::{
    choose_empty, default_format, is_supported, serialize_with, EmptyCandidate, EmptyWeights,
    FormatError, OutputFormat,
};
use crate::rng::SeededRng;
use crate::templates::{
    render_prompt, EntryExtras, ExampleBlock, PromptParts, RoleExtras, TemplateId, TemplatePack,
};

/// placeholder -> label it hides
pub type MaskMap = IndexMap<String, String>;
/// variant -> original label
pub type VariantMap = IndexMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidelineConfig {
    pub use_description: f64,
    pub typical_value_prob: f64,
    /// Inclusive range the example count is drawn from uniformly.
    pub n_examples: (usize, usize),
    pub mask_ratio: f64,
    pub variant_prob: f64,
    pub placeholder_pattern: String,
}

impl Default for GuidelineConfig {
    fn default() -> Self {
        Self {
            use_description: 0.5,
            typical_value_prob: 0.3,
            n_examples: (0, 4),
            mask_ratio: 0.15,
            variant_prob: 0.2,
            placeholder_pattern: "LABEL_{i}".into(),
        }
    }
}

impl GuidelineConfig {
    /// Everything off.
    pub fn off() -> Self {
        Self {
            use_description: 0.0,
            typical_value_prob: 0.0,
            n_examples: (0, 0),
            mask_ratio: 0.0,
            variant_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("use_description", self.use_description),
            ("typical_value_prob", self.typical_value_prob),
            ("mask_ratio", self.mask_ratio),
            ("variant_prob", self.variant_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.n_examples.0 > self.n_examples.1 {
            return Err("n_examples range is empty".into());
        }
        if !self.placeholder_pattern.contains("{i}") {
            return Err("placeholder_pattern needs an {i} slot".into());
        }
        Ok(())
    }
}

/// A sample together with the guideline material chosen for it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSample {
    pub sample: UnifiedSample,
    /// Schema as displayed: renamed entries, chosen descriptions.
    pub schema: TaskSchema,
    /// Keyed by displayed names.
    pub extras: IndexMap<String, EntryExtras>,
    pub examples: Vec<GuidelineExample>,
    pub mask_map: MaskMap,
    pub variant_map: VariantMap,
    pub seed: u64,
    /// Whether any description or typical value was drawn from the dictionary.
    pub described: bool,
}

impl AnnotatedSample {
    /// original label -> displayed name
    pub fn rename_map(&self) -> IndexMap<String, String> {
        let mut out = IndexMap::new();
        for entry in &self.sample.schema.entries {
            let mut name = entry.name.clone();
            if let Some((v, _)) = self.variant_map.iter().find(|(_, o)| **o == name) {
                name = v.clone();
            }
            if let Some((p, _)) = self.mask_map.iter().find(|(_, o)| **o == name) {
                name = p.clone();
            }
            if name != entry.name {
                out.insert(entry.name.clone(), name);
            }
        }
        out
    }
}

fn placeholder(pattern: &str, i: usize) -> String {
    pattern.replace("{i}", &i.to_string())
}

/// Replaces `floor(mask_ratio * n)` uniformly chosen entry names with
/// placeholders. Descriptions stay.
pub fn mask_labels(
    schema: &TaskSchema,
    mask_ratio: f64,
    pattern: &str,
    rng: &mut SeededRng,
) -> (TaskSchema, MaskMap) {
    let n = schema.len();
    let m = ((mask_ratio * n as f64) + 1e-9).floor() as usize;
    let m = m.min(n);
    let mut map = MaskMap::new();
    if m == 0 {
        return (schema.clone(), map);
    }
    let mut chosen = rand::seq::index::sample(rng, n, m).into_vec();
    chosen.sort_unstable();
    let mut out = schema.clone();
    let mut next = 1;
    for i in chosen {
        let mut p = placeholder(pattern, next);
        while out.contains(&p) || map.contains_key(&p) {
            next += 1;
            p = placeholder(pattern, next);
        }
        next += 1;
        let original = std::mem::replace(&mut out.entries[i].name, p.clone());
        map.insert(p, original);
    }
    (out, map)
}

/// Replaces each entry name, with probability `variant_prob`, by one of its
/// dictionary name variants that does not clash with another name.
pub fn apply_label_variants(
    schema: &TaskSchema,
    task: TaskKind,
    dict: &SchemaDictionary,
    variant_prob: f64,
    rng: &mut SeededRng,
) -> (TaskSchema, VariantMap) {
    let mut out = schema.clone();
    let mut map = VariantMap::new();
    if variant_prob <= 0.0 {
        return (out, map);
    }
    for i in 0..out.entries.len() {
        if !rng.random_bool(variant_prob.min(1.0)) {
            continue;
        }
        let name = out.entries[i].name.clone();
        let Some(entry) = dict.get(task, &name) else {
            continue;
        };
        let free: Vec<&String> = entry
            .name_variants
            .iter()
            .filter(|v| !out.contains(v) && !map.contains_key(*v))
            .collect();
        if let Some(v) = free.choose(rng) {
            out.entries[i].name = (*v).clone();
            map.insert((*v).clone(), name);
        }
    }
    (out, map)
}

fn dict_err(e: DictionaryError) -> SynthError {
    match e {
        DictionaryError::UnknownLabel { task, label } => SynthError::UnknownLabel { task, label },
        other => SynthError::Dictionary(other.to_string()),
    }
}

fn pool_labels(sample: &UnifiedSample) -> Vec<String> {
    crate::dictionary::sample_labels(sample)
}

/// Chooses descriptions, typical values, examples, variants and masks for one
/// sample. Each decision draws from its own stream.
pub fn inject_guidelines(
    sample: &UnifiedSample,
    dict: &SchemaDictionary,
    cfg: &GuidelineConfig,
    seed: u64,
) -> Result<AnnotatedSample, SynthError> {
    let scope = sample.id.as_str();
    let mut desc_rng = SeededRng::derive(seed, scope, "description");
    let mut typ_rng = SeededRng::derive(seed, scope, "typical");
    let mut ex_rng = SeededRng::derive(seed, scope, "examples");
    let mut var_rng = SeededRng::derive(seed, scope, "variants");
    let mut mask_rng = SeededRng::derive(seed, scope, "mask");

    let labels = pool_labels(sample);
    for l in &labels {
        if dict.get(sample.task, l).is_none() {
            return Err(SynthError::UnknownLabel {
                task: sample.task,
                label: l.clone(),
            });
        }
    }

    let mut schema = sample.schema.clone();
    let mut extras: IndexMap<String, EntryExtras> = IndexMap::new();
    let mut described = false;
    if sample.task.has_labels() {
        for entry in schema.entries.iter_mut() {
            let want_desc =
                cfg.use_description > 0.0 && desc_rng.random_bool(cfg.use_description.min(1.0));
            let want_typ = cfg.typical_value_prob > 0.0
                && typ_rng.random_bool(cfg.typical_value_prob.min(1.0));
            if !want_desc && !want_typ {
                continue;
            }
            let wants = GuidelineSelector {
                description: want_desc,
                typical: want_typ,
                ..Default::default()
            };
            let rng = if want_desc {
                &mut desc_rng
            } else {
                &mut typ_rng
            };
            let b =
                sample_guidelines(dict, sample.task, &entry.name, rng, &wants).map_err(dict_err)?;
            if let Some(d) = b.description {
                entry.description = Some(d);
                described = true;
            }
            let mut x = EntryExtras {
                typical: b.typical,
                roles: IndexMap::new(),
            };
            for (role, (d, t)) in b.roles {
                x.roles.insert(
                    role,
                    RoleExtras {
                        description: d,
                        typical: t,
                    },
                );
            }
            if !x.is_empty() {
                described = true;
                extras.insert(entry.name.clone(), x);
            }
        }
    }

    let (lo, hi) = cfg.n_examples;
    let k = if hi > 0 {
        ex_rng.random_range(lo..=hi)
    } else {
        0
    };
    let mut examples = Vec::new();
    if k > 0 {
        let mut pool: Vec<GuidelineExample> = Vec::new();
        for l in &labels {
            let wants = GuidelineSelector {
                positives: usize::MAX,
                negatives: usize::MAX,
                exclude_id: Some(sample.id.clone()),
                ..Default::default()
            };
            let b =
                sample_guidelines(dict, sample.task, l, &mut ex_rng, &wants).map_err(dict_err)?;
            pool.extend(b.examples);
        }
        let k = k.min(pool.len());
        let mut idx = rand::seq::index::sample(&mut ex_rng, pool.len(), k).into_vec();
        idx.sort_unstable();
        examples = idx.into_iter().map(|i| pool[i].clone()).collect();
    }

    let (mut variant_map, mut mask_map) = (VariantMap::new(), MaskMap::new());
    if sample.task.has_labels() {
        let (s, vm) =
            apply_label_variants(&schema, sample.task, dict, cfg.variant_prob, &mut var_rng);
        let (s, mm) = mask_labels(&s, cfg.mask_ratio, &cfg.placeholder_pattern, &mut mask_rng);
        schema = s;
        variant_map = vm;
        mask_map = mm;
    }
    let mut annotated = AnnotatedSample {
        sample: sample.clone(),
        schema,
        extras: IndexMap::new(),
        examples,
        mask_map,
        variant_map,
        seed,
        described,
    };
    let rename = annotated.rename_map();
    annotated.extras = extras
        .into_iter()
        .map(|(k, v)| (rename.get(&k).cloned().unwrap_or(k), v))
        .collect();
    Ok(annotated)
}

fn example_block(
    ex: &GuidelineExample,
    task: TaskKind,
    fmt: OutputFormat,
    rename: &IndexMap<String, String>,
    cand: EmptyCandidate,
) -> Result<ExampleBlock, FormatError> {
    let schema = ex.schema.renamed(rename);
    let gold = ex.output.relabel(rename);
    let cand = if gold.is_empty() {
        cand
    } else {
        EmptyCandidate::EmptyList
    };
    Ok(ExampleBlock {
        input: ex.input.clone(),
        question: ex.question.clone(),
        choices: ex.choices.clone(),
        output: serialize_with(&gold, task, fmt, &schema, cand)?,
    })
}

/// Renders a style-C instruction. The recorded strategies are the ones that
/// actually changed the record.
pub fn render_compound(
    annotated: &AnnotatedSample,
    template: TemplateId,
    pack: &TemplatePack,
    fmt: OutputFormat,
    weights: &EmptyWeights,
) -> Result<RenderedInstruction, SynthError> {
    let sample = &annotated.sample;
    if template.task != sample.task {
        return Err(crate::templates::TemplateError::TemplateTaskMismatch {
            template: template.task,
            sample: sample.task,
        }
        .into());
    }
    if !is_supported(sample.task, fmt) {
        return Err(FormatError::UnsupportedFormat {
            task: sample.task,
            fmt,
        }
        .into());
    }
    let tpl = pack.get(template, &sample.language)?;
    let rename = annotated.rename_map();
    let gold = sample.gold.relabel(&rename);
    let mut empty_rng = SeededRng::derive(annotated.seed, &sample.id, "empty");
    let cand = if sample.task.is_set_valued() {
        choose_empty(sample.task, fmt, weights, &mut empty_rng)?
    } else {
        EmptyCandidate::EmptyList
    };
    let examples = annotated
        .examples
        .iter()
        .map(|e| example_block(e, sample.task, fmt, &rename, cand))
        .collect::<Result<Vec<_>, _>>()?;
    let prompt = render_prompt(
        tpl,
        &PromptParts {
            task: sample.task,
            format: fmt,
            language: &sample.language,
            schema: &annotated.schema,
            extras: &annotated.extras,
            input: &sample.text,
            examples: &examples,
        },
    )?;
    let target_cand = if gold.is_empty() {
        cand
    } else {
        EmptyCandidate::EmptyList
    };
    let target = serialize_with(&gold, sample.task, fmt, &annotated.schema, target_cand)?;

    let mut strategies = BTreeSet::new();
    if annotated.described
        || !annotated.examples.is_empty()
        || !annotated.mask_map.is_empty()
        || !annotated.variant_map.is_empty()
    {
        strategies.insert(Strategy::Guidelines);
    }
    if fmt != default_format(sample.task) || target_cand != EmptyCandidate::EmptyList {
        strategies.insert(Strategy::Format);
    }
    if sample.origin.is_some() {
        strategies.insert(Strategy::Rules);
    }
    let mut provenance =
        RecordProvenance::new(crate::dictionary::base_id(&sample.id), annotated.seed);
    provenance.template = Some(template);
    provenance.rule_id = sample.origin.as_ref().map(|o| o.rule_id.clone());
    if !annotated.mask_map.is_empty() {
        provenance.mask_map = Some(annotated.mask_map.clone());
    }
    if !annotated.variant_map.is_empty() {
        provenance.variant_map = Some(annotated.variant_map.clone());
    }
    if gold.is_empty() {
        provenance.empty_candidate = Some(target_cand);
    }
    Ok(RenderedInstruction {
        id: format!("{}#C", sample.id),
        task: sample.task,
        style: Style::C,
        strategies,
        prompt,
        target,
        format: fmt,
        schema: annotated.schema.clone(),
        provenance,
    })
}

/// Parses a compound target and undoes masking and variants.
pub fn recover_gold(record: &RenderedInstruction) -> Result<GoldLabel, FormatError> {
    let parsed = record.parse_target()?;
    let mut g = parsed;
    let mut schema = record.schema.clone();
    if let Some(m) = &record.provenance.mask_map {
        g = g.relabel(m);
        schema = schema.renamed(m);
    }
    if let Some(v) = &record.provenance.variant_map {
        g = g.relabel(v);
        schema = schema.renamed(v);
    }
    Ok(g.normalized(record.task, &schema))
}
