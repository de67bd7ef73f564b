#![allow(dead_code)]

//! Reference samples, their expected renderings, and the round-trip driver.

use indexmap::IndexMap;
use nluforge::basic::{render_basic, RenderedInstruction, TemplateId};
use nluforge::compound::{inject_guidelines, render_compound, GuidelineConfig};
use nluforge::corpus::{
    ArgValue, AttrValue, Constraints, Entity, EntryKind, Event, GoldLabel, OpenRole, OpenTuple,
    Relation, SchemaEntry, SpoTriple, TaskKind, TaskSchema, UnifiedSample,
};
use nluforge::dictionary::{build_dictionary, BuildConfig};
use nluforge::formats::{EmptyWeights, OutputFormat};
use nluforge::templates::TemplatePack;
use serde_json::Value;

pub fn golden(name: &str) -> Value {
    let path = format!("{}/tests/goldens/{name}.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn field(v: &Value, k: &str) -> String {
    v[k].as_str().unwrap().to_string()
}

pub fn basic(sample: &UnifiedSample) -> RenderedInstruction {
    render_basic(
        sample,
        TemplateId::new(sample.task, 0),
        &TemplatePack::builtin(),
        0,
    )
    .unwrap()
}

fn entries(kind: EntryKind, names: &[&str], c: impl Fn(&str) -> Constraints) -> TaskSchema {
    TaskSchema::new(
        names
            .iter()
            .map(|n| SchemaEntry::new(*n, kind).with_constraints(c(n)))
            .collect(),
    )
}

fn args(roles: &[&str]) -> Constraints {
    Constraints {
        arguments: roles.iter().map(|r| r.to_string()).collect(),
        ..Default::default()
    }
}

pub fn ner() -> UnifiedSample {
    UnifiedSample::new(
        "ner",
        TaskKind::Ner,
        "please show me a documentary featuring jessica lange from the 2010 s",
        TaskSchema::labels(
            EntryKind::EntityType,
            &[
                "average ratings",
                "year",
                "title",
                "actor",
                "character",
                "song",
            ],
        ),
        GoldLabel::EntitySet(vec![
            Entity::new("year", "2010 s"),
            Entity::new("actor", "jessica lange"),
        ]),
    )
}

pub fn re() -> UnifiedSample {
    UnifiedSample::new(
        "re",
        TaskKind::Re,
        "At a meeting in Montevideo , Uruguay , the four members of the trade bloc -- Brazil , Argentina , Paraguay and Uruguay -- are expected to formally begin negotiations to bring Venezuela into Mercosur , a group that seeks to standardize tariffs and trade practices throughout the region .",
        TaskSchema::labels(
            EntryKind::Relation,
            &["country of capital", "children", "country of administrative divisions", "ethnicity"],
        ),
        GoldLabel::RelationSet(vec![Relation::new("country of capital", "Uruguay", "Montevideo")]),
    )
}

pub fn spo() -> UnifiedSample {
    let t = |o: &str| SpoTriple {
        predicate: "related (caused by)".into(),
        subject: "schistosomiasis".into(),
        subject_type: "disease".into(),
        object: o.into(),
        object_type: "disease".into(),
    };
    UnifiedSample::new(
        "spo",
        TaskKind::Spo,
        "The characteristics of schistosomiasis include symptoms of the hepatobiliary system (such as abdominal pain, jaundice, right upper abdominal pain), pulmonary symptoms (such as chronic cough, chest pain, dyspnea and hemoptysis) or digestive symptoms (such as mucosal ulcers, malnutrition).",
        entries(EntryKind::SpoPattern, &["related (caused by)"], |_| Constraints {
            subject_type: Some("disease".into()),
            object_type: Some("disease".into()),
            ..Default::default()
        }),
        GoldLabel::SpoSet(vec![t("jaundice"), t("mucosal ulcers"), t("malnutrition")]),
    )
}

pub fn mrc() -> UnifiedSample {
    UnifiedSample::new(
        "mrc",
        TaskKind::Mrc,
        "2. Megatron: The cold leader of the Decepticons, the main antagonist in 'Transformers'.",
        TaskSchema::labels(
            EntryKind::MrcQuestion,
            &["What is the name of the antagonist in 'Transformers'?"],
        ),
        GoldLabel::Answer("Megatron".into()),
    )
}

pub fn ee() -> UnifiedSample {
    let breach = [
        "number of victim",
        "number of data",
        "purpose",
        "attacker",
        "compromised data",
        "victim",
        "place",
        "time",
        "attack pattern",
        "tool",
        "damage amount",
    ];
    let ransom = [
        "damage amount",
        "place",
        "victim",
        "payment method",
        "attack pattern",
        "attacker",
        "time",
    ];
    let schema = TaskSchema::new(vec![
        SchemaEntry::new("data breach", EntryKind::EventType).with_constraints(args(&breach)),
        SchemaEntry::new("ransom", EntryKind::EventType).with_constraints(args(&ransom)),
    ]);
    UnifiedSample::new(
        "ee",
        TaskKind::Ee,
        "Leading French presidential candidate Emmanuel Macron's campaign said on Friday it had been the target of a `` massive'' computer hack that dumped its campaign emails online 1-1/2 days before voters choose between the centrist and his far - right rival , Marine Le Pen .",
        schema,
        GoldLabel::EventSet(vec![Event::new("data breach")
            .with_trigger("hack")
            .with_arg("victim", ArgValue::text("computer"))
            .with_arg("time", ArgValue::text("Friday"))]),
    )
}

pub fn eet() -> UnifiedSample {
    let d = [
        ("nominate", "'Nominate' selects candidates for job or honor; trigger words include 'nominations', 'named', 'selecting', 'nomination'."),
        ("attack", "An 'attack' event is an attempt to harm indicated by trigger words in a text, even if not yet carried out."),
        ("phone write", "Event emphasizing communication through phone calls, emails, messages. Can be formal or informal. Trigger words: 'Call', 'email', 'message'."),
        ("transport", "Moving or transporting something or someone from one place to another. Includes relocating, deploying resources, and lifting off."),
        ("label81", "'Convict' means being declared guilty of a crime, leading to penalties. It can happen formally or informally. Trigger words include 'found', 'pled guilty', 'convicted'."),
    ];
    UnifiedSample::new(
        "eet",
        TaskKind::Eet,
        "a member of the international committee of red cross visited the local hospital there , and he says it ' s a horrible scene .",
        TaskSchema::new(d.iter().map(|(n, desc)| SchemaEntry::new(*n, EntryKind::EventType).with_description(*desc)).collect()),
        GoldLabel::EventSet(vec![Event::new("transport").with_trigger("visited")]),
    )
}

pub fn eea() -> UnifiedSample {
    let roles = [
        "Treatment.Dosage",
        "Subject.Age",
        "Treatment.Drug",
        "Treatment.Disorder",
        "Treatment.Route",
        "Treatment.Time_elapsed",
        "Subject.Gender",
        "Treatment.Freq",
        "Effect",
        "Treatment",
        "Subject.Race",
        "Combination.Drug",
        "Subject.Population",
        "Subject",
        "Subject.Disorder",
    ];
    UnifiedSample::new(
        "eea",
        TaskKind::Eea,
        "CONCLUSION: Fixed drug eruption is associated with many drugs but this is the first such report with omeprazole.",
        TaskSchema::new(vec![SchemaEntry::new("adverse event", EntryKind::EventType).with_constraints(args(&roles))]),
        GoldLabel::EventSet(vec![Event::new("adverse event")
            .with_arg("Treatment.Drug", ArgValue::text("omeprazole"))
            .with_arg("Effect", ArgValue::text("Fixed drug eruption"))
            .with_arg("Treatment", ArgValue::text("omeprazole"))]),
    )
}

pub fn openie() -> UnifiedSample {
    use OpenRole::*;
    UnifiedSample::new(
        "openie",
        TaskKind::OpenIe,
        "Defoe 's A Review , published on 3 December 1709 and demanding `` a Law in the present Parliament ... for the Encouragement of Learning , Arts , and Industry , by securing the Property of Books to the Authors or Editors of them '' , was followed by How 's Some Thoughts on the Present State of Printing and Bookselling , which hoped that Parliament `` might think fit to secure Property in Books by a Law '' .",
        TaskSchema::default(),
        GoldLabel::OpenTuples(vec![
            OpenTuple::new(&[
                (Subject, "Defoe"),
                (Predicate, "'s"),
                (Object, "A Review , published on 3 December 1709 and demanding `` a Law in the present Parliament ... for the Encouragement of Learning , Arts , and Industry"),
            ]),
            OpenTuple::new(&[(Subject, "A Review"), (Predicate, "published"), (Object, "on 3 December 1709")]),
            OpenTuple::new(&[
                (Subject, "Some Thoughts on the Present State of Printing and Bookselling"),
                (Predicate, "hoped"),
                (Object, "that Parliament `` might think fit to secure Property in Books by a Law"),
            ]),
            OpenTuple::new(&[
                (Subject, "Parliament"),
                (Predicate, "might think"),
                (Object, "fit to secure Property in Books by a Law"),
            ]),
        ]),
    )
}

pub fn tc() -> UnifiedSample {
    UnifiedSample::new(
        "tc",
        TaskKind::Tc,
        "Bright single: Member 48 yuan wins the first prize in the double color ball, the first cold is fully covered (picture)\n Beijing time, May 3, 2010, the 10044th issue of the double color ball lottery was announced. The lottery result was relatively positive. The first prize had 1033 winners, each winning 13278 yuan, the second prize had 329 yuan, and the first prize for selecting any nine games was 157 yuan. \n\n",
        TaskSchema::labels(
            EntryKind::ClassLabel,
            &[
                "Constellation", "entertainment", "technology", "society", "stocks", "real estate", "education", "lottery",
                "home decoration", "games", "current affairs", "fashion", "sports",
            ],
        ),
        GoldLabel::ClassLabel("lottery".into()),
    )
}

pub fn kge() -> UnifiedSample {
    let attrs = [
        "achievement",
        "director",
        "performer",
        "lyrics by",
        "composer",
        "platform",
        "screenwriter",
        "author",
        "developer",
        "based on",
        "country of origin",
        "tracklist",
        "publisher",
        "production company",
        "box office",
        "original broadcaster",
        "cast member",
    ];
    let mut kg = IndexMap::new();
    kg.insert(
        "Works".to_string(),
        IndexMap::from([(
            "The Lego Batman Movie".to_string(),
            IndexMap::from([(
                "composer".to_string(),
                AttrValue::Text("Lorne Balfe".into()),
            )]),
        )]),
    );
    UnifiedSample::new(
        "kge",
        TaskKind::Kge,
        "The Lego Batman Movie  is the soundtrack to the 2017 computer-animated film The Lego Batman Movie, which is the second instalment in The Lego Movie franchise. The film is based on the DC Comics superhero Batman, and other primary characters from the DC Universe and the Lego DC Super Heroes' Batman toy line. This is the first and only film in the franchise not to be scored by Mark Mothersbaugh, instead Lorne Balfe scored for the film.  The soundtrack to the film was released by WaterTower Music, through two-disc CD formats and for digital download, on February 3, 2017, a week prior to the film's release. A vinyl edition of the soundtrack was released on May 19, 2017.",
        entries(EntryKind::AttributeSet, &["Works"], |_| Constraints {
            attributes: attrs.iter().map(|a| a.to_string()).collect(),
            ..Default::default()
        }),
        GoldLabel::KgEntities(kg),
    )
}

pub fn kill() -> UnifiedSample {
    UnifiedSample::new(
        "kill",
        TaskKind::Re,
        "Robert F. Kennedy was shot by Sirhan Sirhan.",
        TaskSchema::labels(EntryKind::Relation, &["kill"]),
        GoldLabel::RelationSet(vec![Relation::new(
            "kill",
            "Sirhan Sirhan",
            "Robert F. Kennedy",
        )]),
    )
}

/// Every (name, sample) with a full prompt and target golden.
pub fn cases() -> Vec<(&'static str, UnifiedSample)> {
    vec![
        ("ner", ner()),
        ("re", re()),
        ("spo", spo()),
        ("ee", ee()),
        ("eet", eet()),
        ("eea", eea()),
        ("openie", openie()),
        ("kge", kge()),
        ("mrc", mrc()),
        ("tc", tc()),
    ]
}

pub fn variant(fmt: OutputFormat) -> RenderedInstruction {
    let s = kill();
    let dict = build_dictionary([&s], &BuildConfig::new(0)).unwrap();
    let a = inject_guidelines(&s, &dict, &GuidelineConfig::off(), 0).unwrap();
    render_compound(
        &a,
        TemplateId::new(TaskKind::Re, 0),
        &TemplatePack::builtin(),
        fmt,
        &EmptyWeights::LIST_ONLY,
    )
    .unwrap()
}

/// Serialize-then-parse failures over `cases` fuzzed golds per supported
/// (task, format) pair. Empty golds are tried with every empty candidate.
pub fn roundtrip_failures(cases: usize) -> (usize, Vec<String>) {
    use nluforge::formats::{parse, serialize_with, supported_formats, EmptyCandidate};
    use nluforge::synthetic::fuzz_gold;
    use nluforge::SeededRng;

    let mut checked = 0;
    let mut failures = Vec::new();
    for task in TaskKind::ALL {
        for &fmt in supported_formats(task) {
            let mut rng = SeededRng::derive(2024, task.as_str(), fmt.as_str());
            for i in 0..cases {
                let (schema, gold) = fuzz_gold(task, &mut rng);
                let cands: &[EmptyCandidate] = if gold.is_empty() && task.is_set_valued() {
                    &EmptyCandidate::ALL
                } else {
                    &[EmptyCandidate::EmptyList]
                };
                let want = gold.normalized(task, &schema);
                for &c in cands {
                    checked += 1;
                    let text = serialize_with(&gold, task, fmt, &schema, c).unwrap();
                    let back = parse(&text, task, fmt, &schema);
                    if back.as_ref() != Ok(&want) {
                        failures.push(format!(
                            "{task}/{fmt} #{i}: {text:?}\n  want {want:?}\n  got  {back:?}"
                        ));
                    }
                }
            }
        }
    }
    (checked, failures)
}
