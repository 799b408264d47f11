//! Code-style prompts for schema-guided information extraction.
//!
//! The crate compiles annotation schemas (labels with guidelines, candidate
//! examples and typed fields) and documents into Python-like prompts, applies
//! seeded training regularizations, parses generated result blocks back into
//! typed annotations, and scores predictions.
//!
//! ```
//! use iecode::schema::{Annotation, Document, LabelDef, TaskKind, TaskSchema};
//! use iecode::codegen::{render_prompt, RenderOptions};
//! use iecode::regularize::RegularizationTrace;
//! use iecode::outparse::parse_result;
//!
//! let schema = TaskSchema {
//!     dataset_id: "demo".into(),
//!     kind: TaskKind::Ner,
//!     labels: vec![LabelDef::entity("Person", "Names of people.")],
//! };
//! let doc = Document {
//!     doc_id: "d0".into(),
//!     text: "Obama spoke.".into(),
//!     gold: vec![Annotation::new("Person").with("span", "Obama")],
//! };
//! let trace = RegularizationTrace::identity(&schema, 0);
//! let ex = render_prompt(&schema, &doc, &RenderOptions::default(), &trace).unwrap();
//! assert!(ex.prompt.ends_with("result = [\n    Person(span=\"Obama\"),\n]"));
//!
//! let parsed = parse_result(&ex.result, &schema);
//! assert_eq!(parsed.annotations, doc.gold);
//! ```

pub mod codegen;
pub mod ingest;
pub mod llmclient;
pub mod outparse;
pub mod pipeline;
pub mod regularize;
pub mod rng;
pub mod schema;
pub mod score;
