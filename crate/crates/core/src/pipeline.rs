//! End-to-end synthesis: rule-derived samples, basic and compound rendering,
//! deduplication and mixing, deterministic for any worker count.

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basic::{render_basic, RenderedInstruction, SynthError};
use crate::compound::{inject_guidelines, render_compound, GuidelineConfig};
use crate::corpus::{TaskKind, UnifiedSample};
use crate::dictionary::{build_dictionary, BuildConfig, SchemaDictionary};
use crate::formats::{default_format, supported_formats, EmptyWeights};
use crate::llm::LlmClient;
use crate::mixer::{self, CorpusStats, MixConfig, MixError, MixPlan};
use crate::provenance::digest_json;
use crate::rng::SeededRng;
use crate::rules::{
    apply_rule, synthesize_rule_sample, RuleCatalog, RuleError, RuleKit, RuleOutcome, RuleStrategy,
};
use crate::templates::{TemplateId, TemplatePack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub guidelines: GuidelineConfig,
    pub empty_weights: EmptyWeights,
    /// Derive rule samples with the deterministic catalog.
    pub rules: bool,
    pub workers: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            guidelines: GuidelineConfig::default(),
            empty_weights: EmptyWeights::default(),
            rules: true,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthContext<'a> {
    pub pack: &'a TemplatePack,
    pub dict: &'a SchemaDictionary,
}

/// A sample that produced no records, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthOutput {
    pub records: Vec<RenderedInstruction>,
    pub errors: Vec<SampleError>,
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool builds")
}

fn template_for(sample: &UnifiedSample, pack: &TemplatePack, seed: u64) -> TemplateId {
    let n = pack.count(sample.task).max(1);
    let mut rng = SeededRng::derive(seed, crate::dictionary::base_id(&sample.id), "template");
    TemplateId::new(sample.task, rng.random_range(0..n))
}

/// One rule-derived sample per source sample, when some catalog rule applies
/// and changes the gold.
pub fn rule_sample(
    sample: &UnifiedSample,
    catalog: &RuleCatalog,
    seed: u64,
) -> Option<UnifiedSample> {
    let rules = catalog.applicable(sample);
    let mut rng = SeededRng::derive(seed, &sample.id, "rule");
    let rule = rules.choose(&mut rng)?;
    let derived = apply_rule(rule, sample, &catalog.orders).ok()?;
    let changed = derived.gold.normalized(derived.task, &derived.schema)
        != sample.gold.normalized(sample.task, &sample.schema)
        || derived.schema.names().ne(sample.schema.names());
    changed.then_some(derived)
}

/// Deterministic rule samples for a whole corpus, in input order.
pub fn rule_samples(
    samples: &[UnifiedSample],
    catalog: &RuleCatalog,
    seed: u64,
    workers: usize,
) -> Vec<UnifiedSample> {
    pool(workers).install(|| {
        samples
            .par_iter()
            .filter_map(|s| rule_sample(s, catalog, seed))
            .collect()
    })
}

/// Model-backed rule samples. Each rule-task sample gets one strategy drawn
/// uniformly; samples the model and the catalog both fail on are skipped.
pub fn llm_rule_samples(
    samples: &[UnifiedSample],
    llm: &LlmClient,
    kit: &RuleKit<'_>,
    seed: u64,
) -> Result<(Vec<UnifiedSample>, Vec<SampleError>), RuleError> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for s in samples
        .iter()
        .filter(|s| matches!(s.task, TaskKind::Ner | TaskKind::Re | TaskKind::Spo))
    {
        let mut rng = SeededRng::derive(seed, &s.id, "strategy");
        let strategy = *RuleStrategy::ALL.choose(&mut rng).expect("strategies");
        match synthesize_rule_sample(s, strategy, llm, kit, seed)? {
            RuleOutcome::Sample(d) => out.push(*d),
            RuleOutcome::Skip { sample_id, reason } => skipped.push(SampleError {
                sample_id,
                error: reason,
            }),
        }
    }
    Ok((out, skipped))
}

/// All records of one sample: basic; compound in the default format;
/// compound in another format. IG samples only get the basic record, and
/// rule-derived samples only their default-format compound record.
/// Compound records that carry no strategy are dropped.
pub fn synthesize_sample(
    sample: &UnifiedSample,
    ctx: SynthContext<'_>,
    cfg: &SynthConfig,
) -> Result<Vec<RenderedInstruction>, SynthError> {
    let tpl = template_for(sample, ctx.pack, cfg.seed);
    if sample.task == TaskKind::Ig {
        return Ok(vec![render_basic(sample, tpl, ctx.pack, cfg.seed)?]);
    }
    let mut out = Vec::new();
    let derived = sample.origin.is_some();
    if !derived {
        out.push(render_basic(sample, tpl, ctx.pack, cfg.seed)?);
    }
    let annotated = inject_guidelines(sample, ctx.dict, &cfg.guidelines, cfg.seed)?;
    let default = default_format(sample.task);
    let mut c = render_compound(&annotated, tpl, ctx.pack, default, &cfg.empty_weights)?;
    if !derived {
        c.id = format!("{}#C", sample.id);
    }
    out.push(c);
    let others: Vec<_> = supported_formats(sample.task)
        .iter()
        .copied()
        .filter(|f| *f != default)
        .collect();
    if !derived {
        let mut rng = SeededRng::derive(cfg.seed, &sample.id, "format");
        if let Some(fmt) = others.choose(&mut rng) {
            let mut r = render_compound(&annotated, tpl, ctx.pack, *fmt, &cfg.empty_weights)?;
            r.id = format!("{}#F", sample.id);
            out.push(r);
        }
    }
    out.retain(|r| r.style == crate::basic::Style::B || !r.strategies.is_empty());
    Ok(out)
}

/// Renders every sample in parallel; the result is in input order whatever
/// the worker count.
pub fn synthesize(
    samples: &[UnifiedSample],
    ctx: SynthContext<'_>,
    cfg: &SynthConfig,
) -> SynthOutput {
    let results: Vec<(String, Result<Vec<RenderedInstruction>, SynthError>)> = pool(cfg.workers)
        .install(|| {
            samples
                .par_iter()
                .map(|s| (s.id.clone(), synthesize_sample(s, ctx, cfg)))
                .collect()
        });
    let mut out = SynthOutput::default();
    for (id, r) in results {
        match r {
            Ok(mut rs) => out.records.append(&mut rs),
            Err(e) => out.errors.push(SampleError {
                sample_id: id,
                error: e.to_string(),
            }),
        }
    }
    out
}

/// Settings of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub mix: MixConfig,
    /// Mixed corpus size; `None` keeps every synthesized record.
    pub total: Option<u64>,
    pub example_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            mix: MixConfig::default(),
            total: None,
            example_cap: crate::dictionary::EXAMPLE_CAP,
        }
    }
}

impl RunConfig {
    /// Digest of the settings that shape the output. The worker count is left
    /// out since it does not change any byte.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.synth.workers = 0;
        digest_json(&serde_json::to_value(&c).expect("config serializes"))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dictionary: SchemaDictionary,
    pub records: Vec<RenderedInstruction>,
    pub plan: Option<MixPlan>,
    pub stats: CorpusStats,
    pub errors: Vec<SampleError>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Dictionary(#[from] crate::dictionary::DictionaryError),
}

/// Rules, dictionary, rendering, dedup and (optionally) mixing.
pub fn run(
    samples: &[UnifiedSample],
    cfg: &RunConfig,
    pack: &TemplatePack,
    catalog: &RuleCatalog,
) -> Result<RunOutput, RunError> {
    run_with(samples, cfg, pack, catalog, None)
}

/// [`run`] with guideline material from an existing dictionary laid over the
/// one built from the corpus.
pub fn run_with(
    samples: &[UnifiedSample],
    cfg: &RunConfig,
    pack: &TemplatePack,
    catalog: &RuleCatalog,
    base: Option<&SchemaDictionary>,
) -> Result<RunOutput, RunError> {
    let seed = cfg.synth.seed;
    let mut all: Vec<UnifiedSample> = samples.to_vec();
    if cfg.synth.rules {
        all.extend(rule_samples(samples, catalog, seed, cfg.synth.workers));
    }
    let mut bc = BuildConfig::new(seed);
    bc.cap = cfg.example_cap;
    let mut dictionary = build_dictionary(all.iter(), &bc)?;
    if let Some(b) = base {
        dictionary.overlay(b);
    }
    let ctx = SynthContext {
        pack,
        dict: &dictionary,
    };
    let synth = synthesize(&all, ctx, &cfg.synth);
    let (records, removed) = mixer::dedup(synth.records);
    let (records, plan) = match cfg.total {
        Some(total) => {
            let plan = mixer::plan(total, &cfg.mix, seed)?;
            let pools = mixer::into_pools(records);
            (mixer::execute(&plan, &pools, seed)?, Some(plan))
        }
        None => (records, None),
    };
    let stats = mixer::stats(&records, removed, seed);
    Ok(RunOutput {
        dictionary,
        records,
        plan,
        stats,
        errors: synth.errors,
    })
}

/// Records as JSON lines, ready to write after a provenance header.
pub fn to_jsonl(records: &[RenderedInstruction]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Per-task record counts of a corpus.
pub fn task_counts(records: &[RenderedInstruction]) -> IndexMap<TaskKind, u64> {
    let mut m: IndexMap<TaskKind, u64> = TaskKind::ALL.into_iter().map(|t| (t, 0)).collect();
    for r in records {
        m[&r.task] += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basic::{Strategy, Style};
    use crate::mixer::reference_shares;
    use crate::synthetic::synthetic_corpus;

    #[test]
    fn small_run_is_deterministic_across_workers() {
        let samples = synthetic_corpus(300, &reference_shares(), 5).unwrap();
        let pack = TemplatePack::builtin();
        let catalog = RuleCatalog::builtin();
        let mut cfg = RunConfig::default();
        cfg.synth.seed = 5;
        let a = run(&samples, &cfg, &pack, &catalog).unwrap();
        cfg.synth.workers = 4;
        let b = run(&samples, &cfg, &pack, &catalog).unwrap();
        assert!(
            a.errors.is_empty(),
            "{:?}",
            &a.errors[..a.errors.len().min(3)]
        );
        assert_eq!(to_jsonl(&a.records), to_jsonl(&b.records));
        assert!(a.stats.by_strategy[&Strategy::Rules] > 0);
        assert!(a
            .records
            .iter()
            .all(|r| r.style == Style::B || !r.strategies.is_empty()));
    }

    #[test]
    fn mixed_run_meets_plan() {
        let samples = synthetic_corpus(400, &reference_shares(), 2).unwrap();
        let mut cfg = RunConfig::default();
        cfg.synth.seed = 2;
        cfg.total = Some(300);
        let out = run(
            &samples,
            &cfg,
            &TemplatePack::builtin(),
            &RuleCatalog::builtin(),
        )
        .unwrap();
        assert_eq!(out.records.len(), 300);
        let plan = out.plan.unwrap();
        assert_eq!(task_counts(&out.records), plan.per_task_counts);
    }

    #[test]
    fn rule_samples_change_the_gold() {
        let samples = synthetic_corpus(200, &reference_shares(), 3).unwrap();
        let derived = rule_samples(&samples, &RuleCatalog::builtin(), 3, 2);
        assert!(!derived.is_empty());
        for d in &derived {
            let o = d.origin.as_ref().unwrap();
            assert!(d.id.contains('@'));
            assert!(
                o.original_gold != d.gold
                    || d.schema
                        .entries
                        .iter()
                        .any(|e| e.constraints.rule.is_some())
            );
        }
    }
}
