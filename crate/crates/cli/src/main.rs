//! `nluforge`: ingest, dictionary, synthesis, mixing, statistics, evaluation
//! and cache maintenance.
//!
//! Exit codes: 0 on success, 1 on data errors (a JSON report goes to
//! stderr), 2 on usage errors.

mod config;
mod conll;
mod io;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use nluforge::basic::Style;
use nluforge::dictionary::{build_dictionary, enrich_descriptions, BuildConfig, SchemaDictionary};
use nluforge::eval::{render_table, run_eval, score_outputs, EvalTask};
use nluforge::llm::{compact_cache, read_entries, LlmClient, LlmConfig, Mode};
use nluforge::mixer::{self, MixConfig};
use nluforge::pipeline::{llm_rule_samples, run_with};
use nluforge::provenance::{digest_json, Provenance};
use nluforge::rules::{builtin_exemplars, builtin_strategy_texts, RuleCatalog, RuleKit};
use nluforge::templates::TemplatePack;
use nluforge::{corpus, synthetic, TaskKind};
use serde_json::json;

/// Bad invocation or configuration; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "nluforge",
    version,
    about = "Build, mix and evaluate NLU instruction corpora"
)]
struct Cli {
    /// Log level for stderr: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a CoNLL-style column file into a NER corpus.
    Ingest {
        #[arg(long)]
        conll: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset name, used as the id prefix.
        #[arg(long)]
        source: String,
        #[arg(long, default_value = "en")]
        language: String,
    },
    /// Build a schema dictionary from a corpus.
    BuildDict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Positive and negative examples kept per label.
        #[arg(long, default_value_t = nluforge::dictionary::EXAMPLE_CAP)]
        cap: usize,
    },
    /// Add model-written descriptions to a dictionary.
    EnrichDict {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        variants: usize,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Summarize a dictionary, or print one entry.
    InspectDict {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, requires = "label")]
        task: Option<TaskKind>,
        #[arg(long, requires = "task")]
        label: Option<String>,
    },
    /// Run the whole pipeline from a config file.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        total: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a corpus of a given size and, given records, sample it.
    Mix {
        #[arg(long)]
        total: u64,
        #[arg(long)]
        seed: u64,
        /// Config file whose `mix` section is used; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, requires = "out")]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the plan; stdout when no records are given.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Corpus statistics of a record file.
    Stats {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a model on a rendered evaluation corpus.
    Evaluate {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value = "B")]
        style: Style,
        /// JSONL of `{"id", "output"}`; the model is queried when absent.
        #[arg(long)]
        outputs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Response cache maintenance.
    CacheAdmin {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Write a synthetic corpus with the reference task proportions.
    Generate {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// Drop duplicate keys, keeping the first response.
    Compact {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Count entries and duplicates.
    Stats {
        #[arg(long)]
        cache: PathBuf,
    },
}

#[derive(Args)]
struct LlmArgs {
    /// live, record or replay.
    #[arg(long, default_value = "replay")]
    mode: Mode,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value = "gpt-4")]
    model: String,
    /// Chat-completions URL; the API key comes from NLUFORGE_API_KEY.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

impl LlmArgs {
    fn config(&self) -> LlmConfig {
        LlmConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            mode: self.mode,
            cache_path: self.cache.clone(),
            max_in_flight: self.max_in_flight,
            ..LlmConfig::default()
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn provenance(seed: u64, settings: serde_json::Value) -> Provenance {
    Provenance::new(seed, digest_json(&settings))
}

fn stem_with(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    s.into()
}

fn ingest(conll_path: &Path, out: &Path, source: &str, language: &str) -> Result<()> {
    let text = std::fs::read_to_string(conll_path)
        .with_context(|| format!("reading {}", conll_path.display()))?;
    let sentences = conll::read_conll(&text).with_context(|| conll_path.display().to_string())?;
    let samples = conll::to_samples(&sentences, source, language);
    let prov = provenance(
        0,
        json!({"command": "ingest", "source": source, "language": language}),
    );
    corpus::write_corpus_with(&samples, out, Some(&prov))?;
    info!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn build_dict(corpus_path: &Path, out: &Path, seed: u64, cap: usize) -> Result<()> {
    let samples = corpus::load_corpus(corpus_path)?;
    let mut bc = BuildConfig::new(seed);
    bc.cap = cap;
    let dict = build_dictionary(samples.iter(), &bc)?;
    let prov = provenance(seed, json!({"command": "build-dict", "cap": cap}));
    io::write_document(out, &prov, &dict)?;
    info!("{} entries from {} samples", dict.len(), samples.len());
    Ok(())
}

fn enrich_dict(dict_path: &Path, out: &Path, variants: usize, llm: &LlmArgs) -> Result<()> {
    let dict = SchemaDictionary::load(dict_path)?;
    let cfg = llm.config();
    let client = LlmClient::from_config(cfg.clone())?;
    let enriched = enrich_descriptions(&dict, &client, variants)?;
    let seed = io::read_header(dict_path)?.map(|p| p.seed).unwrap_or(0);
    let prov = provenance(
        seed,
        json!({"command": "enrich-dict", "variants": variants, "model": cfg.model}),
    );
    io::write_document(out, &prov, &enriched)?;
    info!(
        "dictionary version {} -> {}",
        dict.version, enriched.version
    );
    Ok(())
}

fn inspect_dict(dict_path: &Path, task: Option<TaskKind>, label: Option<&str>) -> Result<()> {
    let dict = SchemaDictionary::load(dict_path)?;
    if let (Some(t), Some(l)) = (task, label) {
        let e = dict
            .get(t, l)
            .ok_or_else(|| anyhow::anyhow!("no entry for {t}/{l}"))?;
        println!("{}", serde_json::to_string_pretty(e)?);
        return Ok(());
    }
    println!("version {}, {} entries", dict.version, dict.len());
    println!(
        "{:<8}{:<32}{:>6}{:>6}{:>6}{:>8}",
        "task", "label", "desc", "pos", "neg", "typical"
    );
    for e in dict.entries() {
        println!(
            "{:<8}{:<32}{:>6}{:>6}{:>6}{:>8}",
            e.task.as_str(),
            e.label,
            e.descriptions.len(),
            e.positive_examples.len(),
            e.negative_examples.len(),
            e.typical_values.len()
        );
    }
    Ok(())
}

struct Overrides {
    seed: Option<u64>,
    workers: Option<usize>,
    total: Option<u64>,
    out: Option<PathBuf>,
}

fn synthesize(config_path: &Path, o: Overrides) -> Result<()> {
    let mut cfg = config::load_validated(config_path)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(w) = o.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        cfg.workers = w;
    }
    if o.total.is_some() {
        cfg.total = o.total;
    }
    if let Some(out) = o.out {
        cfg.output = out;
    }
    let mut samples = corpus::load_corpus(&cfg.corpus)?;
    let pack = match &cfg.templates {
        Some(p) => TemplatePack::load(p)?,
        None => TemplatePack::builtin(),
    };
    let catalog = match &cfg.rules {
        Some(p) => RuleCatalog::load(p, cfg.orders.as_deref())?,
        None => RuleCatalog::builtin(),
    };
    let base = cfg
        .dictionary
        .as_ref()
        .map(SchemaDictionary::load)
        .transpose()?;
    let mut skipped = Vec::new();
    if cfg.llm_rules {
        let client = LlmClient::from_config(cfg.llm.clone())?;
        let exemplars = builtin_exemplars();
        let texts = builtin_strategy_texts();
        let kit = RuleKit {
            catalog: &catalog,
            exemplars: &exemplars,
            strategy_texts: &texts,
        };
        let (derived, skips) = llm_rule_samples(&samples, &client, &kit, cfg.seed)?;
        info!(
            "{} model-derived rule samples, {} skipped",
            derived.len(),
            skips.len()
        );
        samples.extend(derived);
        skipped = skips;
    }
    let run = run_with(&samples, &cfg.run_config(), &pack, &catalog, base.as_ref())?;
    let prov = Provenance::new(cfg.seed, cfg.digest());
    io::write_jsonl(&cfg.output, &prov, &run.records)?;
    io::write_document(&cfg.stats_path(), &prov, &run.stats)?;
    if let Some(p) = &cfg.dictionary_out {
        io::write_document(p, &prov, &run.dictionary)?;
    }
    let mut errors = run.errors;
    errors.extend(skipped);
    let err_path = stem_with(&cfg.output, ".errors.jsonl");
    if errors.is_empty() {
        let _ = std::fs::remove_file(&err_path);
    } else {
        warn!(
            "{} samples produced no records; see {}",
            errors.len(),
            err_path.display()
        );
        io::write_jsonl(&err_path, &prov, &errors)?;
    }
    info!(
        "wrote {} records to {}\n{}",
        run.records.len(),
        cfg.output.display(),
        run.stats.to_table()
    );
    Ok(())
}

struct MixArgs {
    total: u64,
    seed: u64,
    config: Option<PathBuf>,
    records: Option<PathBuf>,
    out: Option<PathBuf>,
    plan: Option<PathBuf>,
}

fn mix(a: MixArgs) -> Result<()> {
    let mix_cfg = match &a.config {
        Some(p) => config::load_validated(p)?.mix,
        None => MixConfig::default(),
    };
    let plan = mixer::plan(a.total, &mix_cfg, a.seed).map_err(|e| usage(e.to_string()))?;
    let prov = provenance(
        a.seed,
        json!({"command": "mix", "total": a.total, "mix": mix_cfg}),
    );
    match &a.plan {
        Some(p) => io::write_document(p, &prov, &plan)?,
        None if a.records.is_none() => println!("{}", serde_json::to_string_pretty(&plan)?),
        None => {}
    }
    let (Some(records), Some(out)) = (&a.records, &a.out) else {
        return Ok(());
    };
    let pools = mixer::into_pools(io::read_records(records)?);
    let short = mixer::shortfalls(&plan, &pools);
    if !short.is_empty() {
        let detail: Vec<_> = short
            .iter()
            .map(|(k, need, have)| json!({"pool": k, "need": need, "have": have}))
            .collect();
        bail!(
            "pools too small for the plan: {}",
            serde_json::to_string(&detail)?
        );
    }
    let mixed = mixer::execute(&plan, &pools, a.seed)?;
    io::write_jsonl(out, &prov, &mixed)?;
    let stats = mixer::stats(&mixed, 0, a.seed);
    io::write_document(&stem_with(out, ".stats.json"), &prov, &stats)?;
    info!(
        "wrote {} records to {}\n{}",
        mixed.len(),
        out.display(),
        stats.to_table()
    );
    Ok(())
}

fn stats(records: &Path, out: Option<&Path>) -> Result<()> {
    let seed = io::read_header(records)?.map(|p| p.seed).unwrap_or(0);
    let recs = io::read_records(records)?;
    let s = mixer::stats(&recs, 0, seed);
    print!("{}", s.to_table());
    if let Some(o) = out {
        let prov = provenance(
            seed,
            json!({"command": "stats", "records": records.display().to_string()}),
        );
        io::write_document(o, &prov, &s)?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct ModelOutput {
    id: String,
    output: String,
}

struct EvalArgs {
    records: PathBuf,
    name: String,
    task: TaskKind,
    style: Style,
    outputs: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn evaluate(a: EvalArgs, llm: &LlmArgs) -> Result<()> {
    let spec = EvalTask::new(&a.name, a.task, a.style).map_err(|e| usage(e.to_string()))?;
    let corpus: Vec<_> = io::read_records(&a.records)?
        .into_iter()
        .filter(|r| r.task == a.task && r.style == a.style)
        .collect();
    let report = match &a.outputs {
        Some(p) => {
            let outs: std::collections::HashMap<String, String> = io::read_jsonl::<ModelOutput>(p)?
                .into_iter()
                .map(|o| (o.id, o.output))
                .collect();
            let aligned = corpus
                .iter()
                .map(|r| {
                    outs.get(&r.id)
                        .cloned()
                        .ok_or_else(|| anyhow::anyhow!("no model output for {}", r.id))
                })
                .collect::<Result<Vec<_>>>()?;
            score_outputs(&spec, &corpus, &aligned)?
        }
        None => run_eval(&spec, &corpus, &LlmClient::from_config(llm.config())?)?,
    };
    print!("{}", render_table(std::slice::from_ref(&report)));
    if let Some(o) = &a.out {
        let prov = provenance(
            0,
            json!({"command": "evaluate", "spec": spec, "model": llm.model}),
        );
        io::write_document(o, &prov, &report)?;
    }
    Ok(())
}

fn cache_admin(action: CacheAction) -> Result<()> {
    match action {
        CacheAction::Compact { cache } => {
            let (kept, dropped) = compact_cache(&cache)?;
            info!("kept {kept} entries, dropped {dropped} duplicates");
        }
        CacheAction::Stats { cache } => {
            let entries = read_entries(&cache)?;
            let keys: std::collections::HashSet<&str> =
                entries.iter().map(|e| e.key.as_str()).collect();
            println!("{} lines, {} distinct keys", entries.len(), keys.len());
        }
    }
    Ok(())
}

fn generate(n: u64, seed: u64, out: &Path) -> Result<()> {
    let samples = synthetic::synthetic_corpus(n, &mixer::reference_shares(), seed)?;
    let prov = provenance(seed, json!({"command": "generate", "n": n}));
    corpus::write_corpus_with(&samples, out, Some(&prov))?;
    info!(
        "wrote {} synthetic samples to {}",
        samples.len(),
        out.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            conll,
            out,
            source,
            language,
        } => ingest(&conll, &out, &source, &language),
        Command::BuildDict {
            corpus,
            out,
            seed,
            cap,
        } => build_dict(&corpus, &out, seed, cap),
        Command::EnrichDict {
            dict,
            out,
            variants,
            llm,
        } => enrich_dict(&dict, &out, variants, &llm),
        Command::InspectDict { dict, task, label } => inspect_dict(&dict, task, label.as_deref()),
        Command::Synthesize {
            config,
            seed,
            workers,
            total,
            out,
        } => synthesize(
            &config,
            Overrides {
                seed,
                workers,
                total,
                out,
            },
        ),
        Command::Mix {
            total,
            seed,
            config,
            records,
            out,
            plan,
        } => mix(MixArgs {
            total,
            seed,
            config,
            records,
            out,
            plan,
        }),
        Command::Stats { records, out } => stats(&records, out.as_deref()),
        Command::Evaluate {
            records,
            name,
            task,
            style,
            outputs,
            out,
            llm,
        } => evaluate(
            EvalArgs {
                records,
                name,
                task,
                style,
                outputs,
                out,
            },
            &llm,
        ),
        Command::CacheAdmin { action } => cache_admin(action),
        Command::Generate { n, seed, out } => generate(n, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.chain().any(|c| c.is::<UsageError>()) => {
            eprintln!("error: {e:#}");
            eprintln!("run `nluforge --help` for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            let report = json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}
