//! Artifact files: a provenance header line, then JSON lines or one JSON
//! document.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use nluforge::basic::RenderedInstruction;
use nluforge::provenance::Provenance;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_jsonl<T: Serialize>(path: &Path, prov: &Provenance, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", prov.header_line())?;
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_document<T: Serialize>(path: &Path, prov: &Provenance, doc: &T) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", prov.header_line())?;
    serde_json::to_writer_pretty(&mut w, doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || Provenance::is_header_line(&line) {
            continue;
        }
        out.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<RenderedInstruction>> {
    read_jsonl(path)
}

/// The header of an artifact, if it has one.
pub fn read_header(path: &Path) -> Result<Option<Provenance>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    Ok(Provenance::parse_header(first.trim_end()))
}
