//! Feedback-guided post-editing of machine translation output.
//!
//! The crate is organised along the pipeline:
//!
//! * [`corpus`] parses and filters error-annotated translation corpora
//!   (WMT MQM TSV, DEMETR records, external annotator output).
//! * [`scoring`] turns error annotations into MQM penalties and 0-100 scores.
//! * [`feedback`] renders generic, score and fine-grained feedback into
//!   zero- and few-shot post-editing prompts.
//! * [`gateway`] drives an OpenAI-compatible endpoint and ships a mock
//!   server for offline runs.
//! * [`metrics`] implements BLEU, TER and paired bootstrap testing.
//! * [`analysis`] covers error-resolution, annotation agreement and the
//!   over-editing audit.
//! * [`datasetgen`] builds instruction-tuning data and training manifests.

pub mod analysis;
pub mod corpus;
pub mod datasetgen;
pub mod feedback;
pub mod gateway;
pub mod io;
pub mod metrics;
pub mod sampling;
pub mod scoring;

pub use corpus::{
    AnnotationSource, Corpus, ErrorAnnotation, ErrorCategory, LangPair, MajorCategory, Segment,
    Severity,
};
