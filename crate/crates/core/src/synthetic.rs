//! Seeded generators: readable synthetic corpora for pipeline runs, and
//! adversarial gold annotations for serializer fuzzing.

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{
    ArgValue, AttrValue, Constraints, Entity, EntryKind, Event, GoldLabel, OpenRole, OpenTuple,
    Relation, SchemaEntry, SpoTriple, TaskKind, TaskSchema, UnifiedSample,
};
use crate::mixer::{apportion, MixError};
use crate::rng::SeededRng;

const PEOPLE: &[&str] = &[
    "James Cameron",
    "Ada Lovelace",
    "Marie Curie",
    "Zhang Wei",
    "Sirhan Sirhan",
    "Grace Hopper",
    "Alan Turing",
    "Jessica Lange",
    "Li Na",
    "Robert Kennedy",
    "Ola Nordmann",
    "Amal Clooney",
];
const PLACES: &[&str] = &[
    "Paris",
    "Beijing",
    "Raz de Sein",
    "Lake Geneva",
    "Boston",
    "Nairobi",
    "Lima",
    "Oslo",
    "Hangzhou",
    "Cairo",
];
const ORGS: &[&str] = &[
    "Harvard",
    "MIT",
    "Acme Corp",
    "Beijing Sport University",
    "Red Cross",
    "Zhejiang University",
    "Globex",
];
const WORKS: &[&str] = &[
    "Avatar",
    "Titanic",
    "War and Peace",
    "The Hobbit",
    "Red Sorghum",
    "Dune",
];
const DEGREES: &[&str] = &["bachelor", "master", "Ph.D.", "diploma"];
const MONEY: &[&str] = &["$ 194,000", "$ 775,000", "$ 12,500", "$ 3,000"];
const YEARS: &[&str] = &["1999", "2004", "2010", "2016", "2021"];

fn pick<'a>(rng: &mut SeededRng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty vocabulary")
}

fn entry(name: &str, kind: EntryKind) -> SchemaEntry {
    SchemaEntry::new(name, kind)
}

/// A readable, valid sample of `task`. The same `(task, index, seed)` always
/// gives the same sample.
pub fn synthetic_sample(task: TaskKind, index: usize, seed: u64) -> UnifiedSample {
    let id = format!("syn-{}-{index:06}", task.as_str().to_lowercase());
    let mut rng = SeededRng::derive(seed, &id, "synthetic");
    let (text, schema, gold) = match task {
        TaskKind::Ner => {
            let p = pick(&mut rng, PEOPLE);
            let l = pick(&mut rng, PLACES);
            let o = pick(&mut rng, ORGS);
            let m = pick(&mut rng, MONEY);
            let mut names = vec!["person", "location", "organization"];
            let mut gold = vec![
                Entity::new("person", p),
                Entity::new("location", l),
                Entity::new("organization", o),
            ];
            let mut text = format!("{p} moved from {l} to join {o}.");
            match rng.random_range(0..3) {
                0 => {
                    let d = pick(&mut rng, &DEGREES[..2]);
                    text.push_str(&format!(" {p} holds a {d} and a Ph.D."));
                    names.push("degree");
                    gold.push(Entity::new("degree", d));
                    gold.push(Entity::new("degree", "Ph.D."));
                }
                1 => {
                    text.push_str(&format!(" The salary was {m} ."));
                    names.push("money");
                    gold.push(Entity::new("money", m));
                }
                _ => {
                    if rng.random_bool(0.5) {
                        gold.retain(|e| e.label != "location");
                        text = format!("{p} joined {o}.");
                    }
                }
            }
            if rng.random_bool(0.3) {
                names.push("date");
            }
            (
                text,
                TaskSchema::labels(EntryKind::EntityType, &names),
                GoldLabel::EntitySet(gold),
            )
        }
        TaskKind::Re => {
            let p = pick(&mut rng, PEOPLE);
            let w = pick(&mut rng, WORKS);
            let o = pick(&mut rng, ORGS);
            let l = pick(&mut rng, PLACES);
            let (text, rels) = match rng.random_range(0..3) {
                0 => (
                    format!("{w} was made by {p}."),
                    vec![Relation::new("direct", p, w)],
                ),
                1 => (
                    format!("{p} works for {o} in {l}."),
                    vec![
                        Relation::new("employer", p, o),
                        Relation::new("located in", o, l),
                    ],
                ),
                _ => (format!("{p} visited {l} last spring."), vec![]),
            };
            let schema = TaskSchema::labels(
                EntryKind::Relation,
                &["direct", "employer", "located in", "kill"],
            );
            (text, schema, GoldLabel::RelationSet(rels))
        }
        TaskKind::Spo => {
            let p = pick(&mut rng, PEOPLE);
            let l = pick(&mut rng, PLACES);
            let w = pick(&mut rng, WORKS);
            let c = |s: &str, o: &str| Constraints {
                subject_type: Some(s.into()),
                object_type: Some(o.into()),
                ..Default::default()
            };
            let schema = TaskSchema::new(vec![
                entry("place of birth", EntryKind::SpoPattern)
                    .with_constraints(c("person", "location")),
                entry("direct", EntryKind::SpoPattern).with_constraints(c("person", "film")),
            ]);
            let mut triples = vec![SpoTriple {
                predicate: "place of birth".into(),
                subject: p.into(),
                subject_type: "person".into(),
                object: l.into(),
                object_type: "location".into(),
            }];
            let mut text = format!("{p} was born in {l}.");
            if rng.random_bool(0.5) {
                text.push_str(&format!(" Later {p} made {w}."));
                triples.push(SpoTriple {
                    predicate: "direct".into(),
                    subject: p.into(),
                    subject_type: "person".into(),
                    object: w.into(),
                    object_type: "film".into(),
                });
            }
            (text, schema, GoldLabel::SpoSet(triples))
        }
        TaskKind::Ee | TaskKind::Eet | TaskKind::Eea => {
            let p = pick(&mut rng, PEOPLE);
            let l = pick(&mut rng, PLACES);
            let y = pick(&mut rng, YEARS);
            let text = format!("In {y}, {p} was arrested in {l} after the theft.");
            let arrest = Constraints {
                arguments: vec![
                    "suspect".into(),
                    "place".into(),
                    "time".into(),
                    "agency".into(),
                ],
                trigger: (task == TaskKind::Eea).then(|| "arrested".to_string()),
                ..Default::default()
            };
            let theft = Constraints {
                arguments: vec!["perpetrator".into(), "item".into()],
                trigger: (task == TaskKind::Eea).then(|| "theft".to_string()),
                ..Default::default()
            };
            let schema = TaskSchema::new(vec![
                entry("arrest", EntryKind::EventType).with_constraints(arrest),
                entry("theft", EntryKind::EventType).with_constraints(theft),
            ]);
            let both = rng.random_bool(0.5);
            let mut events = Vec::new();
            let mut a = Event::new("arrest");
            let mut t = Event::new("theft");
            if task != TaskKind::Eea {
                a = a.with_trigger("arrested");
                t = t.with_trigger("theft");
            }
            if task != TaskKind::Eet {
                a = a
                    .with_arg("suspect", ArgValue::text(p))
                    .with_arg("place", ArgValue::text(l))
                    .with_arg("time", ArgValue::text(y));
                t = t.with_arg("perpetrator", ArgValue::text(p));
            }
            events.push(a);
            if both {
                events.push(t);
            }
            (text, schema, GoldLabel::EventSet(events))
        }
        TaskKind::OpenIe => {
            let p = pick(&mut rng, PEOPLE);
            let w = pick(&mut rng, WORKS);
            let y = pick(&mut rng, YEARS);
            let text = format!("{p} published {w} in {y}.");
            let t = OpenTuple::new(&[
                (OpenRole::Subject, p),
                (OpenRole::Predicate, "published"),
                (OpenRole::Object, w),
                (OpenRole::Time, y),
            ]);
            (text, TaskSchema::default(), GoldLabel::OpenTuples(vec![t]))
        }
        TaskKind::Kge => {
            let p = pick(&mut rng, PEOPLE);
            let l = pick(&mut rng, PLACES);
            let o = pick(&mut rng, ORGS);
            let text = format!("{p}, born in {l}, graduated from {o}.");
            let schema = TaskSchema::new(vec![entry("person", EntryKind::AttributeSet)
                .with_constraints(Constraints {
                    attributes: vec!["birthplace".into(), "alma mater".into()],
                    ..Default::default()
                })]);
            let mut kg = IndexMap::new();
            kg.insert(
                "person".to_string(),
                IndexMap::from([(
                    p.to_string(),
                    IndexMap::from([
                        ("birthplace".to_string(), AttrValue::Text(l.into())),
                        ("alma mater".to_string(), AttrValue::List(vec![o.into()])),
                    ]),
                )]),
            );
            (text, schema, GoldLabel::KgEntities(kg))
        }
        TaskKind::Mrc => {
            let p = pick(&mut rng, PEOPLE);
            let choices = ["diary", "semester plan", "letter", "receipt"];
            let answer = *choices.choose(&mut rng).expect("choices");
            let text = format!("{p} wrote a {answer} before the term began.");
            let schema = TaskSchema::new(vec![entry(
                &format!("What did {p} write?"),
                EntryKind::MrcQuestion,
            )
            .with_constraints(Constraints {
                choices: choices.iter().map(|c| c.to_string()).collect(),
                ..Default::default()
            })]);
            (text, schema, GoldLabel::Answer(answer.into()))
        }
        TaskKind::Tc => {
            let w = pick(&mut rng, WORKS);
            let good = rng.random_bool(0.5);
            let text = if good {
                format!("{w} is a wonderful film, I loved every minute.")
            } else {
                format!("{w} was dull and far too long.")
            };
            let label = if good { "positive" } else { "negative" };
            (
                text,
                TaskSchema::labels(EntryKind::ClassLabel, &["positive", "negative"]),
                GoldLabel::ClassLabel(label.into()),
            )
        }
        TaskKind::Ig => {
            let p = pick(&mut rng, PEOPLE);
            (
                format!("Write one sentence about {p}."),
                TaskSchema::default(),
                GoldLabel::FreeResponse(format!("{p} is widely remembered for their work.")),
            )
        }
    };
    let text = format!("[{index}] {text}");
    UnifiedSample::new(id, task, text, schema, gold).with_source("synthetic")
}

/// `n` samples spread over tasks by `shares` (largest remainder), ordered by
/// task, then index.
pub fn synthetic_corpus(
    n: u64,
    shares: &IndexMap<TaskKind, f64>,
    seed: u64,
) -> Result<Vec<UnifiedSample>, MixError> {
    let tasks: Vec<TaskKind> = TaskKind::ALL
        .into_iter()
        .filter(|t| shares.contains_key(t))
        .collect();
    let counts = apportion(n, &tasks.iter().map(|t| shares[t]).collect::<Vec<_>>())?;
    Ok(tasks
        .iter()
        .zip(counts)
        .flat_map(|(t, k)| (0..k as usize).map(move |i| synthetic_sample(*t, i, seed)))
        .collect())
}

const ALPHABET: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'A', 'Q', '0', '7', ' ', ' ', ';', ':', '=', '|', ',', '[', ']',
    '(', ')', '{', '}', '"', '\'', '\\', '-', '.', '/', '#', '*', 'é', '中', '文',
];

/// A trimmed, non-empty string that is not a reserved literal, drawn from an
/// alphabet heavy in delimiters.
pub fn fuzz_string(rng: &mut SeededRng) -> String {
    loop {
        let len = rng.random_range(1..10);
        let s: String = (0..len)
            .map(|_| *ALPHABET.choose(rng).expect("alphabet"))
            .collect();
        let s = s.trim().to_string();
        if !s.is_empty() && !matches!(s.as_str(), "NAN" | "[]" | "\"\"" | "\"NAN\"") {
            return s;
        }
    }
}

fn distinct(rng: &mut SeededRng, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    while out.len() < n {
        let s = fuzz_string(rng);
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// A random valid (schema, gold) pair for `task`. About one in ten golds of
/// set-valued tasks is empty.
pub fn fuzz_gold(task: TaskKind, rng: &mut SeededRng) -> (TaskSchema, GoldLabel) {
    let n_labels = rng.random_range(1..4);
    let labels = distinct(rng, n_labels);
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let empty = task.is_set_valued() && rng.random_bool(0.1);
    let n = if empty { 0 } else { rng.random_range(1..4) };
    match task {
        TaskKind::Ner => {
            let schema = TaskSchema::labels(EntryKind::EntityType, &refs);
            let v = (0..n)
                .map(|_| Entity::new(pick(rng, &refs), fuzz_string(rng)))
                .collect();
            (schema, GoldLabel::EntitySet(v))
        }
        TaskKind::Re => {
            let schema = TaskSchema::labels(EntryKind::Relation, &refs);
            let v = (0..n)
                .map(|_| Relation::new(pick(rng, &refs), fuzz_string(rng), fuzz_string(rng)))
                .collect();
            (schema, GoldLabel::RelationSet(v))
        }
        TaskKind::Spo => {
            let types: Vec<(String, String)> = labels
                .iter()
                .map(|_| (fuzz_string(rng), fuzz_string(rng)))
                .collect();
            let schema = TaskSchema::new(
                labels
                    .iter()
                    .zip(&types)
                    .map(|(l, (s, o))| {
                        entry(l, EntryKind::SpoPattern).with_constraints(Constraints {
                            subject_type: Some(s.clone()),
                            object_type: Some(o.clone()),
                            ..Default::default()
                        })
                    })
                    .collect(),
            );
            let v = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..labels.len());
                    SpoTriple {
                        predicate: labels[i].clone(),
                        subject: fuzz_string(rng),
                        subject_type: types[i].0.clone(),
                        object: fuzz_string(rng),
                        object_type: types[i].1.clone(),
                    }
                })
                .collect();
            (schema, GoldLabel::SpoSet(v))
        }
        TaskKind::Ee | TaskKind::Eet | TaskKind::Eea => {
            let roles: Vec<Vec<String>> = labels
                .iter()
                .map(|_| {
                    let k = rng.random_range(1..4);
                    distinct(rng, k)
                })
                .collect();
            let schema = TaskSchema::new(
                labels
                    .iter()
                    .zip(&roles)
                    .map(|(l, rs)| {
                        entry(l, EntryKind::EventType).with_constraints(Constraints {
                            arguments: rs.clone(),
                            trigger: (task == TaskKind::Eea).then(|| "t".to_string()),
                            ..Default::default()
                        })
                    })
                    .collect(),
            );
            let v = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..labels.len());
                    let mut ev = Event::new(&labels[i]);
                    if task != TaskKind::Eea {
                        ev = ev.with_trigger(fuzz_string(rng));
                    }
                    if task != TaskKind::Eet {
                        for r in &roles[i] {
                            let val = match rng.random_range(0..4) {
                                0 => ArgValue::Nan,
                                1 => ArgValue::List(
                                    (0..rng.random_range(1..3))
                                        .map(|_| fuzz_string(rng))
                                        .collect(),
                                ),
                                _ => ArgValue::text(fuzz_string(rng)),
                            };
                            ev = ev.with_arg(r, val);
                        }
                    }
                    ev
                })
                .collect();
            (schema, GoldLabel::EventSet(v))
        }
        TaskKind::Kge => {
            let attrs: Vec<Vec<String>> = labels
                .iter()
                .map(|_| {
                    let k = rng.random_range(1..3);
                    distinct(rng, k)
                })
                .collect();
            let schema = TaskSchema::new(
                labels
                    .iter()
                    .zip(&attrs)
                    .map(|(l, a)| {
                        entry(l, EntryKind::AttributeSet).with_constraints(Constraints {
                            attributes: a.clone(),
                            ..Default::default()
                        })
                    })
                    .collect(),
            );
            let mut kg: IndexMap<String, IndexMap<String, IndexMap<String, AttrValue>>> =
                IndexMap::new();
            for _ in 0..n {
                let i = rng.random_range(0..labels.len());
                let mut values = IndexMap::new();
                for a in &attrs[i] {
                    let v = if rng.random_bool(0.3) {
                        AttrValue::List(
                            (0..rng.random_range(1..3))
                                .map(|_| fuzz_string(rng))
                                .collect(),
                        )
                    } else {
                        AttrValue::Text(fuzz_string(rng))
                    };
                    values.insert(a.clone(), v);
                }
                kg.entry(labels[i].clone())
                    .or_default()
                    .insert(fuzz_string(rng), values);
            }
            (schema, GoldLabel::KgEntities(kg))
        }
        TaskKind::OpenIe => {
            let v = (0..n)
                .map(|_| {
                    let mut t = OpenTuple::default();
                    for role in [OpenRole::Subject, OpenRole::Predicate, OpenRole::Object] {
                        t.elements.push(crate::corpus::OpenElement {
                            role,
                            text: fuzz_string(rng),
                        });
                    }
                    for role in [OpenRole::Time, OpenRole::Location] {
                        if rng.random_bool(0.3) {
                            t.elements.push(crate::corpus::OpenElement {
                                role,
                                text: fuzz_string(rng),
                            });
                        }
                    }
                    t
                })
                .collect();
            (TaskSchema::default(), GoldLabel::OpenTuples(v))
        }
        TaskKind::Mrc => {
            let schema = TaskSchema::new(vec![entry(&labels[0], EntryKind::MrcQuestion)]);
            (schema, GoldLabel::Answer(fuzz_string(rng)))
        }
        TaskKind::Tc => {
            let schema = TaskSchema::labels(EntryKind::ClassLabel, &refs);
            let l = pick(rng, &refs).to_string();
            (schema, GoldLabel::ClassLabel(l))
        }
        TaskKind::Ig => (
            TaskSchema::default(),
            GoldLabel::FreeResponse(fuzz_string(rng)),
        ),
    }
}
