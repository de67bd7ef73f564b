//! Synthesis, mixing and evaluation of diversified natural-language
//! understanding instruction corpora.
//!
//! Labeled samples of eleven task kinds are held in one [`corpus::UnifiedSample`]
//! representation. From there the crate renders basic instructions
//! ([`basic`]), upgrades them into compound instructions with guidelines,
//! preference rules and output-format variants ([`compound`], [`rules`],
//! [`formats`]), mixes the result to a target distribution ([`mixer`]) and
//! scores model outputs ([`eval`]).
//!
//! ```
//! use nluforge::corpus::{Entity, EntryKind, GoldLabel, TaskKind, TaskSchema, UnifiedSample};
//! use nluforge::basic::{render_basic, TemplateId};
//! use nluforge::templates::TemplatePack;
//!
//! let sample = UnifiedSample::new(
//!     "s1",
//!     TaskKind::Ner,
//!     "jessica lange in the 2010 s",
//!     TaskSchema::labels(EntryKind::EntityType, &["year", "actor"]),
//!     GoldLabel::EntitySet(vec![Entity::new("actor", "jessica lange")]),
//! );
//! let pack = TemplatePack::builtin();
//! let rec = render_basic(&sample, TemplateId::new(TaskKind::Ner, 0), &pack, 7).unwrap();
//! assert_eq!(rec.target, r#"{"year":[],"actor":["jessica lange"]}"#);
//! ```

pub mod basic;
pub mod compound;
pub mod corpus;
pub mod dictionary;
pub mod eval;
pub mod formats;
pub mod llm;
pub mod mixer;
pub mod pipeline;
pub mod provenance;
pub mod rng;
pub mod rules;
pub mod synthetic;
pub mod templates;

pub use corpus::{GoldLabel, TaskKind, TaskSchema, UnifiedSample};
pub use formats::OutputFormat;
pub use rng::SeededRng;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/mixing.md")]
    mod mixing {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
