//! Mining curation activity out of ticket work logs.
//!
//! The pipeline runs in this order:
//!
//! 1. [`corpus`]: ingest tickets (JSONL or CSV), replace curator names with
//!    pseudonyms, filter by creation date, and summarize.
//! 2. [`segmenter`]: split each work-log description into fragments and
//!    apportion the logged hours across them.
//! 3. [`features`]: tokenize, drop stopwords, build 1–2-grams, and weight a
//!    sparse document-term matrix by TF-IDF.
//! 4. [`annotation`]: the eight-class action schema, BRAT standoff import and
//!    export, and stratified train/test splits.
//! 5. [`models`]: stratified dummy, Complement Naive Bayes, and a one-vs-rest
//!    hinge-loss SGD classifier.
//! 6. [`evaluation`]: confusion matrices and accuracy/precision/recall/F1
//!    comparison tables.
//! 7. [`analytics`]: hours share and study frequency per action, and action
//!    proportions by curation level, archive, or year.

pub mod analytics;
pub mod annotation;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod features;
pub mod fingerprint;
pub mod hours;
pub mod models;
pub mod segmenter;
pub mod svg;
pub mod synth;

pub use annotation::{ActionClass, LabelSet, LabeledFragment};
pub use corpus::{Corpus, Ticket, WorkLogEntry};
pub use features::{DocTermMatrix, FeatureConfig, FeatureSpace, Vocabulary};
pub use hours::Hours;
pub use models::TrainedModel;
pub use segmenter::{Fragment, FragmentSet};
