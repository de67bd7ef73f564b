//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.
//!
//! Regenerate the replay fixture with
//! `cargo test -p nluforge --test acceptance -- --ignored record_replay_fixture`.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nluforge::basic::render_ig;
use nluforge::compound::{inject_guidelines, recover_gold, render_compound, GuidelineConfig};
use nluforge::corpus::{
    ArgValue, Entity, EntryKind, Event, Relation, TaskKind, TaskSchema, UnifiedSample,
};
use nluforge::dictionary::{build_dictionary, enrich_descriptions, BuildConfig};
use nluforge::eval::{score_choice, score_event, score_micro_f1, Extracted};
use nluforge::formats::{supported_formats, EmptyWeights, OutputFormat};
use nluforge::llm::{
    ChatRequest, ChatResponse, FnTransport, LlmClient, LlmConfig, Mode, ResponseCache,
    TransportError,
};
use nluforge::mixer::{apportion, plan, reference_shares, MixConfig};
use nluforge::pipeline::{llm_rule_samples, run, to_jsonl, RunConfig};
use nluforge::rules::{
    apply_rule, builtin_exemplars, builtin_strategy_texts, RuleCatalog, RuleError, RuleKit,
    Transform,
};
use nluforge::synthetic::{synthetic_corpus, synthetic_sample};
use nluforge::templates::{TemplateId, TemplatePack};
use nluforge::{GoldLabel, SeededRng};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_goldens() -> Outcome {
    for (name, sample) in common::cases() {
        let g = common::golden(name);
        let r = common::basic(&sample);
        ensure(r.prompt == common::field(&g, "prompt"), || {
            format!("{name}: prompt differs")
        })?;
        ensure(r.target == common::field(&g, "target"), || {
            format!("{name}: target differs")
        })?;
    }
    let ig = synthetic_sample(TaskKind::Ig, 0, 0);
    let r = render_ig(&ig).map_err(|e| e.to_string())?;
    let GoldLabel::FreeResponse(resp) = &ig.gold else {
        unreachable!()
    };
    ensure(r.prompt == ig.text && &r.target == resp, || {
        "ig: not passed through".into()
    })?;

    let j = common::golden("format_json");
    let r = common::variant(OutputFormat::Json);
    ensure(r.target == common::field(&j, "target"), || {
        "json variant target differs".into()
    })?;
    let m = common::golden("format_markdown");
    let r = common::variant(OutputFormat::MarkdownTable);
    ensure(r.target == common::field(&m, "target"), || {
        "markdown variant target differs".into()
    })?;
    let p: serde_json::Value = serde_json::from_str(&r.prompt).map_err(|e| e.to_string())?;
    ensure(p["instruction"] == m["instruction"], || {
        "markdown variant instruction differs".into()
    })?;
    Ok("10 task tables + IG passthrough + 2 format variants".into())
}

fn c2_roundtrip() -> Outcome {
    let (checked, failures) = common::roundtrip_failures(10_000);
    ensure(failures.is_empty(), || {
        format!("{} failures, first: {}", failures.len(), failures[0])
    })?;
    Ok(format!("{checked} serializations, 0 failures"))
}

/// Exact largest remainder over integer weights.
fn oracle(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|w| *w as u128).sum();
    let t = total as u128;
    let mut seats: Vec<u64> = weights
        .iter()
        .map(|w| (t * *w as u128 / sum) as u64)
        .collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(t * weights[i] as u128 % sum), i));
    let left = total - seats.iter().sum::<u64>();
    for &i in order.iter().take(left as usize) {
        seats[i] += 1;
    }
    seats
}

fn c3_mixer() -> Outcome {
    let p = plan(100, &MixConfig::default(), 0).map_err(|e| e.to_string())?;
    let got: Vec<u64> = p.per_task_counts.values().copied().collect();
    ensure(got == [23, 29, 11, 5, 3, 2, 4, 12, 2, 1, 8], || {
        format!("plan(100) = {got:?}")
    })?;
    ensure(p.quotas.values().sum::<u64>() == 100, || {
        "plan(100) quotas do not sum to 100".into()
    })?;

    let mut rng = SeededRng::new(31);
    for case in 0..1000 {
        let k = rng.random_range(1..=12);
        let mut weights: Vec<u64> = (0..k).map(|_| rng.random_range(0..=1000)).collect();
        if weights.iter().all(|w| *w == 0) {
            weights[0] = 1;
        }
        let total = rng.random_range(0..=1_000_000u64);
        let fw: Vec<f64> = weights.iter().map(|w| *w as f64).collect();
        let seats = apportion(total, &fw).map_err(|e| e.to_string())?;
        ensure(seats.iter().sum::<u64>() == total, || {
            format!("case {case}: sum != {total}")
        })?;
        let want = oracle(total, &weights);
        ensure(seats == want, || {
            format!("case {case}: {weights:?} x {total}: {seats:?} vs oracle {want:?}")
        })?;
    }
    Ok("plan(100) exact; 1000 random apportionments match the oracle".into())
}

fn c4_determinism() -> Outcome {
    let samples = synthetic_corpus(10_000, &reference_shares(), 41).map_err(|e| e.to_string())?;
    let pack = TemplatePack::builtin();
    let catalog = RuleCatalog::builtin();
    let mut cfg = RunConfig::default();
    cfg.synth.seed = 41;
    cfg.total = Some(10_000);
    let mut digests = Vec::new();
    for workers in [1, 1, 4, 8] {
        cfg.synth.workers = workers;
        let out = run(&samples, &cfg, &pack, &catalog).map_err(|e| e.to_string())?;
        ensure(out.records.len() == 10_000, || {
            format!("{} records", out.records.len())
        })?;
        let bytes = to_jsonl(&out.records) + &out.dictionary.to_json();
        digests.push(nluforge::provenance::sha256_hex(bytes.as_bytes()));
    }
    ensure(digests.iter().all(|d| *d == digests[0]), || {
        format!("digests differ: {digests:?}")
    })?;
    Ok(format!(
        "10000 samples -> 10000 records, sha256 {} for workers 1,1,4,8",
        &digests[0][..16]
    ))
}

fn spans(s: &UnifiedSample) -> Vec<String> {
    match &s.gold {
        GoldLabel::EntitySet(v) => v.iter().map(|e| e.span.clone()).collect(),
        _ => Vec::new(),
    }
}

fn ner(text: &str, label: &str, gold: &[&str]) -> UnifiedSample {
    UnifiedSample::new(
        "x",
        TaskKind::Ner,
        text,
        TaskSchema::labels(EntryKind::EntityType, &[label]),
        GoldLabel::EntitySet(gold.iter().map(|s| Entity::new(label, *s)).collect()),
    )
}

fn c5_rules() -> Outcome {
    let c = RuleCatalog::builtin();
    let rule = |id: &str| c.get(id).ok_or_else(|| format!("missing rule {id}"));
    let apply = |id: &str, s: &UnifiedSample| {
        apply_rule(rule(id)?, s, &c.orders).map_err(|e| e.to_string())
    };

    let degree = ner(
        "Mr. John Smith, independent director, bachelor’s degree, bachelor from Harvard, Ph.D. from MIT, senior engineer with professorship.",
        "degree",
        &["bachelor’s degree", "bachelor", "Ph.D."],
    );
    let d = apply("numerical-highest-degree", &degree)?;
    ensure(spans(&d) == ["Ph.D."], || {
        format!("degree: {:?}", spans(&d))
    })?;

    let text = "Average household income for the sample was $ 194,000 , and average net assets were reported as $ 775,000 .";
    let bare = ner(text, "money", &["194,000", "775,000"]);
    let with = ner(text, "money", &["$ 194,000", "$ 775,000"]);
    let inc = apply("punctuation-unit-include", &bare)?;
    let strip = apply("punctuation-unit-strip", &with)?;
    ensure(spans(&inc) == ["$ 194,000", "$ 775,000"], || {
        format!("unit include: {:?}", spans(&inc))
    })?;
    ensure(spans(&strip) == ["194,000", "775,000"], || {
        format!("unit strip: {:?}", spans(&strip))
    })?;

    let avatar = UnifiedSample::new(
        "a",
        TaskKind::Re,
        "Avatar is a film directed by James Cameron.",
        TaskSchema::labels(EntryKind::Relation, &["direct"]),
        GoldLabel::RelationSet(vec![Relation::new("direct", "James Cameron", "Avatar")]),
    );
    let rev = apply("reverse-direct", &avatar)?;
    let want = GoldLabel::RelationSet(vec![Relation::new(
        "directed by",
        "Avatar",
        "James Cameron",
    )]);
    ensure(rev.gold == want, || format!("reverse: {:?}", rev.gold))?;

    let mut rng = SeededRng::new(55);
    let tasks = [TaskKind::Ner, TaskKind::Re, TaskKind::Spo];
    let mut checked = 0;
    for i in 0..1000 {
        let task = tasks[i % 3];
        let s = synthetic_sample(task, rng.random_range(0..1_000_000), 55);
        for r in c.applicable(&s) {
            let Ok(once) = apply_rule(r, &s, &c.orders) else {
                continue;
            };
            let twice = apply_rule(r, &once, &c.orders);
            let reverse = matches!(r.transform, Some(Transform::ReverseWithInverse { .. }));
            match twice {
                Ok(t) if !reverse => {
                    let a = once.gold.normalized(once.task, &once.schema);
                    let b = t.gold.normalized(t.task, &t.schema);
                    ensure(a == b, || format!("{} not idempotent on {}", r.id, s.id))?;
                }
                Err(RuleError::NoMatchingLabel(_)) if reverse => {}
                other => {
                    return Err(format!(
                        "{} on {}: unexpected second application {other:?}",
                        r.id, s.id
                    ))
                }
            }
            checked += 1;
        }
    }
    ensure(checked > 0, || "no rule applied to the fuzz corpus".into())?;
    Ok(format!(
        "degree, money, reverse oracles; {checked} idempotence checks over 1000 samples"
    ))
}

fn c6_masking() -> Outcome {
    let pack = TemplatePack::builtin();
    let cfg = GuidelineConfig {
        mask_ratio: 0.5,
        variant_prob: 0.5,
        ..GuidelineConfig::default()
    };
    let mut masked = 0;
    let mut round = 0u64;
    while masked < 5000 {
        let samples: Vec<UnifiedSample> = synthetic_corpus(4000, &reference_shares(), 600 + round)
            .map_err(|e| e.to_string())?
            .into_iter()
            .filter(|s| s.task.has_labels())
            .collect();
        let dict = build_dictionary(samples.iter(), &BuildConfig::new(round))
            .map_err(|e| e.to_string())?;
        for s in &samples {
            let a = inject_guidelines(s, &dict, &cfg, round).map_err(|e| e.to_string())?;
            if a.mask_map.is_empty() && a.variant_map.is_empty() {
                continue;
            }
            let fmts = supported_formats(s.task);
            let fmt = fmts[masked % fmts.len()];
            let r = render_compound(
                &a,
                TemplateId::new(s.task, 0),
                &pack,
                fmt,
                &EmptyWeights::default(),
            )
            .map_err(|e| e.to_string())?;
            let got = recover_gold(&r).map_err(|e| format!("{}: {e}", r.id))?;
            let want = s.gold.normalized(s.task, &s.schema);
            ensure(got == want, || {
                format!("{} ({fmt}): recovered {got:?}, want {want:?}", r.id)
            })?;
            masked += 1;
            if masked == 5000 {
                break;
            }
        }
        round += 1;
    }
    Ok(format!("{masked} masked/renamed records recovered exactly"))
}

fn c7_scorers() -> Outcome {
    let ents =
        |v: &[&str]| GoldLabel::EntitySet(v.iter().map(|s| Entity::new("person", *s)).collect());
    let prf = score_micro_f1(
        &[ents(&["A", "B"])],
        &[Ok(ents(&["A", "C"]))],
        TaskKind::Ner,
    )
    .map_err(|e| e.to_string())?;
    ensure((prf.f1 - 0.5).abs() < 1e-9, || {
        format!("micro-F1 {}", prf.f1)
    })?;

    let gold = GoldLabel::EventSet(vec![
        Event::new("theft")
            .with_trigger("stole")
            .with_arg("perpetrator", ArgValue::text("Zhang")),
        Event::new("sale")
            .with_trigger("sold")
            .with_arg("seller", ArgValue::text("Zhang")),
        Event::new("arrest")
            .with_trigger("detained")
            .with_arg("suspect", ArgValue::text("Zhang")),
    ]);
    // Triggers 2 of 3 found, no spurious: P 1, R 2/3, F1 0.8. Arguments likewise.
    let pred = GoldLabel::EventSet(vec![
        Event::new("theft")
            .with_trigger("stole")
            .with_arg("perpetrator", ArgValue::text("Zhang")),
        Event::new("sale")
            .with_trigger("sold")
            .with_arg("seller", ArgValue::text("Zhang")),
        Event::new("arrest").with_arg("suspect", ArgValue::Nan),
    ]);
    let preds: [Extracted; 1] = [Ok(pred)];
    let (tr, arg) = score_event(&[gold], &preds).map_err(|e| e.to_string())?;
    ensure((tr.f1 - 0.8).abs() < 1e-9, || {
        format!("trigger F1 {}", tr.f1)
    })?;
    ensure((arg.f1 - 0.8).abs() < 1e-9, || {
        format!("argument F1 {}", arg.f1)
    })?;

    let choices = vec![["diary", "semester plan", "letter", "receipt"]
        .map(String::from)
        .to_vec()];
    let gold = vec!["semester plan".to_string()];
    for c in &choices[0] {
        let acc = score_choice(&gold, &[Ok(c.clone())], &choices).map_err(|e| e.to_string())?;
        let want = if c == "semester plan" { 1.0 } else { 0.0 };
        ensure(acc == want, || format!("choice {c}: {acc}"))?;
    }
    Ok(format!(
        "micro-F1 {:.3}, trigger F1 {:.3}, argument F1 {:.3}, choice 1/0",
        prf.f1, tr.f1, arg.f1
    ))
}

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay_cache.jsonl")
}

fn replay_corpus() -> Vec<UnifiedSample> {
    synthetic_corpus(60, &reference_shares(), 8).expect("corpus")
}

fn llm_config(mode: Mode) -> LlmConfig {
    LlmConfig {
        mode,
        backoff_ms: 0,
        ..LlmConfig::default()
    }
}

/// Rule and enrichment output for the replay corpus, as bytes.
fn llm_stages(llm: &LlmClient) -> Result<String, String> {
    let samples = replay_corpus();
    let catalog = RuleCatalog::builtin();
    let exemplars = builtin_exemplars();
    let texts = builtin_strategy_texts();
    let kit = RuleKit {
        catalog: &catalog,
        exemplars: &exemplars,
        strategy_texts: &texts,
    };
    let (derived, skipped) = llm_rule_samples(&samples, llm, &kit, 8).map_err(|e| e.to_string())?;
    let dict = build_dictionary(samples.iter(), &BuildConfig::new(8)).map_err(|e| e.to_string())?;
    let enriched = enrich_descriptions(&dict, llm, 2).map_err(|e| e.to_string())?;
    let mut out = serde_json::to_string(&derived).map_err(|e| e.to_string())?;
    out.push('\n');
    out.push_str(&serde_json::to_string(&skipped).map_err(|e| e.to_string())?);
    out.push('\n');
    out.push_str(&enriched.to_json());
    Ok(out)
}

fn c8_replay() -> Outcome {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let transport = Arc::new(FnTransport::new(
            |_: &ChatRequest| -> Result<ChatResponse, TransportError> {
                Err(TransportError::Fatal("network disabled".into()))
            },
        ));
        let cache = ResponseCache::open(fixture_path()).map_err(|e| e.to_string())?;
        ensure(!cache.is_empty(), || "replay fixture is empty".into())?;
        let llm = LlmClient::new(llm_config(Mode::Replay), Some(transport.clone()), cache);
        outputs.push(llm_stages(&llm)?);
        ensure(transport.calls() == 0, || {
            format!("{} transport calls", transport.calls())
        })?;
    }
    ensure(outputs[0] == outputs[1], || {
        "replay output differs between runs".into()
    })?;
    Ok(format!(
        "0 transport calls, {} stable bytes",
        outputs[0].len()
    ))
}

fn c9_end_to_end() -> Outcome {
    let seed = 90;
    let mut samples =
        synthetic_corpus(70_000, &reference_shares(), seed).map_err(|e| e.to_string())?;
    let ig = samples.iter().filter(|s| s.task == TaskKind::Ig).count();
    samples.extend((ig..10_000).map(|i| synthetic_sample(TaskKind::Ig, i, seed)));
    let mut cfg = RunConfig::default();
    cfg.synth.seed = seed;
    cfg.synth.workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    cfg.total = Some(100_000);
    let out = run(
        &samples,
        &cfg,
        &TemplatePack::builtin(),
        &RuleCatalog::builtin(),
    )
    .map_err(|e| e.to_string())?;
    let s = &out.stats;
    ensure(s.total == 100_000, || format!("{} records", s.total))?;
    let mut worst: f64 = 0.0;
    for (task, share) in reference_shares() {
        let dev = (s.share(task) - share).abs() * 100.0;
        worst = worst.max(dev);
        ensure(dev <= 0.5, || {
            format!(
                "{task}: {:.3}% vs {:.1}%",
                s.share(task) * 100.0,
                share * 100.0
            )
        })?;
    }
    let b = s.basic_share_non_ig(s.by_task[&TaskKind::Ig]) * 100.0;
    ensure((b - 55.0).abs() <= 0.5, || {
        format!("basic share over non-IG {b:.3}%")
    })?;
    let present: BTreeSet<_> = out
        .records
        .iter()
        .flat_map(|r| r.strategies.iter().copied())
        .collect();
    ensure(present.len() == 3, || {
        format!("strategies present: {present:?}")
    })?;
    Ok(format!(
        "100000 records, max task deviation {worst:.3}pp, B/C over non-IG {b:.2}/{:.2}",
        100.0 - b
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        (
            "golden template fidelity",
            c1_goldens,
            Duration::from_secs(1),
        ),
        ("format round trip", c2_roundtrip, Duration::from_secs(30)),
        ("mixer exactness", c3_mixer, Duration::from_secs(5)),
        ("determinism", c4_determinism, Duration::from_secs(120)),
        ("rule-engine oracles", c5_rules, Duration::from_secs(10)),
        ("masking answerability", c6_masking, Duration::from_secs(30)),
        ("scorer fixtures", c7_scorers, Duration::from_secs(1)),
        ("replay purity", c8_replay, Duration::from_secs(30)),
        (
            "end-to-end desk run",
            c9_end_to_end,
            Duration::from_secs(300),
        ),
    ];
    let mut failed = Vec::new();
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let line = match &outcome {
            Ok(detail) => format!(
                "{detail}; {:.2}s (budget {}s)",
                took.as_secs_f64(),
                budget.as_secs()
            ),
            Err(e) => e.clone(),
        };
        let ok = outcome.is_ok();
        println!(
            "{} [{}] {name}: {line}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
        if took > *budget {
            println!("     [{}] over budget in this build profile", i + 1);
        }
        if !ok {
            failed.push(name.to_string());
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}

/// Deterministic stand-in model used to record the fixture: rule prompts get
/// the first label kept, description prompts two fixed sentences.
fn fake_model(req: &ChatRequest) -> Result<ChatResponse, TransportError> {
    let p = &req.prompt;
    if p.starts_with("Instruction:") {
        let label = p
            .rsplit("\nLabel: ")
            .next()
            .unwrap_or("[]")
            .lines()
            .next()
            .unwrap_or("[]");
        let kept = match serde_json::from_str::<Vec<String>>(label) {
            Ok(v) => serde_json::to_string(&v.into_iter().take(1).collect::<Vec<_>>()).unwrap(),
            Err(_) => label.to_string(),
        };
        let schema = p
            .rsplit("\nSchema: ")
            .next()
            .unwrap_or("")
            .lines()
            .next()
            .unwrap_or("");
        return Ok(ChatResponse::stop(format!(
            "Schema Description: Mentions of {schema}.\nOriginal Rule: Annotate every mention of {schema}.\nNew Rule: Annotate only the first mention of {schema}.\nNew Label: {kept}"
        )));
    }
    let label = p.split('"').nth(1).unwrap_or("label");
    Ok(ChatResponse::stop(format!(
        "1. Text spans annotated as {label}.\n2. A {label} mention, as written in the input."
    )))
}

#[test]
#[ignore]
fn record_replay_fixture() {
    let path = fixture_path();
    let _ = std::fs::remove_file(&path);
    let transport = Arc::new(FnTransport::new(fake_model));
    let cache = ResponseCache::open(&path).unwrap();
    let llm = LlmClient::new(llm_config(Mode::Record), Some(transport.clone()), cache);
    llm_stages(&llm).unwrap();
    let (kept, dropped) = nluforge::llm::compact_cache(&path).unwrap();
    println!(
        "recorded {} calls, {kept} entries ({dropped} duplicates)",
        transport.calls()
    );
}
