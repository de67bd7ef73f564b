//! CoNLL-style column files: one token per line, the tag in the last column,
//! blank lines between sentences. BIO, IOB1 and BIOES tags are accepted.

use std::collections::BTreeSet;

use anyhow::{bail, Result};
use nluforge::corpus::{Entity, EntryKind, GoldLabel, TaskKind, TaskSchema, UnifiedSample};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

pub fn read_conll(text: &str) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut cur = Sentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("-DOCSTART-") {
            if !cur.tokens.is_empty() {
                out.push(std::mem::replace(
                    &mut cur,
                    Sentence {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 2 {
            bail!(
                "line {}: expected a token and a tag column, got `{line}`",
                i + 1
            );
        }
        cur.tokens.push(cols[0].to_string());
        cur.tags.push(cols[cols.len() - 1].to_string());
    }
    if !cur.tokens.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn split_tag(tag: &str) -> (&str, &str) {
    match tag.split_once('-') {
        Some((p, t)) if p.len() == 1 => (p, t),
        _ => (tag, ""),
    }
}

/// Typed token ranges `(label, start, end)`, end exclusive.
pub fn spans(tags: &[String]) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (prefix, label) = split_tag(tag);
        let continues =
            matches!(prefix, "I" | "E") && open.as_ref().is_some_and(|(l, _)| l == label);
        if !continues {
            if let Some((l, s)) = open.take() {
                out.push((l, s, i));
            }
            if matches!(prefix, "B" | "I" | "S" | "E") && !label.is_empty() {
                open = Some((label.to_string(), i));
            }
        }
        if matches!(prefix, "S" | "E") {
            if let Some((l, s)) = open.take() {
                out.push((l, s, i + 1));
            }
        }
    }
    if let Some((l, s)) = open {
        out.push((l, s, tags.len()));
    }
    out
}

/// NER samples over the file-wide label set, ids `{source}:{n:06}`.
pub fn to_samples(sentences: &[Sentence], source: &str, language: &str) -> Vec<UnifiedSample> {
    let all: Vec<Vec<(String, usize, usize)>> = sentences.iter().map(|s| spans(&s.tags)).collect();
    let labels: BTreeSet<&str> = all.iter().flatten().map(|(l, _, _)| l.as_str()).collect();
    let labels: Vec<&str> = labels.into_iter().collect();
    sentences
        .iter()
        .zip(&all)
        .enumerate()
        .map(|(n, (s, found))| {
            let gold = found
                .iter()
                .map(|(l, a, b)| Entity::new(l.as_str(), s.tokens[*a..*b].join(" ")))
                .collect();
            UnifiedSample::new(
                format!("{source}:{n:06}"),
                TaskKind::Ner,
                s.tokens.join(" "),
                TaskSchema::labels(EntryKind::EntityType, &labels),
                GoldLabel::EntitySet(gold),
            )
            .with_source(source)
            .with_language(language)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn bio_iob1_and_bioes() {
        assert_eq!(
            spans(&tags("B-PER I-PER O B-LOC")),
            [("PER".into(), 0, 2), ("LOC".into(), 3, 4)]
        );
        assert_eq!(
            spans(&tags("I-ORG I-ORG I-PER")),
            [("ORG".into(), 0, 2), ("PER".into(), 2, 3)]
        );
        assert_eq!(
            spans(&tags("S-LOC B-PER E-PER O")),
            [("LOC".into(), 0, 1), ("PER".into(), 1, 3)]
        );
        assert_eq!(
            spans(&tags("B-PER B-PER")),
            [("PER".into(), 0, 1), ("PER".into(), 1, 2)]
        );
    }

    #[test]
    fn sentences_and_samples() {
        let text = "-DOCSTART- -X- O\n\nEU NNP B-ORG\nrejects VBZ O\nGerman JJ B-MISC\n\nPeter NNP B-PER\nBlackburn NNP I-PER\n";
        let s = read_conll(text).unwrap();
        assert_eq!(s.len(), 2);
        let samples = to_samples(&s, "conll", "en");
        assert_eq!(samples[0].text, "EU rejects German");
        assert_eq!(
            samples[1].gold,
            GoldLabel::EntitySet(vec![Entity::new("PER", "Peter Blackburn")])
        );
        let names: Vec<&str> = samples[0].schema.names().collect();
        assert_eq!(names, ["MISC", "ORG", "PER"]);
        assert!(samples
            .iter()
            .all(|x| nluforge::corpus::validate_sample(x).is_empty()));
        assert!(read_conll("lonely\n").is_err());
    }
}
