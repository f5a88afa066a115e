//! Synthetic work logs and labels with known ground truth.
//!
//! Each action class owns a small vocabulary. A generated fragment draws each
//! token from its class vocabulary, or, with probability `noise`, from a pool
//! shared by all classes.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use crate::annotation::{ActionClass, LabelSet, LabelSource, LabeledFragment};
use crate::corpus::{Corpus, CurationLevel, Ticket, WorkLogEntry};
use crate::hours::Hours;
use crate::segmenter::fragment_id;

/// Class shares for generated labels: quality checks most common, metadata
/// least.
pub const CLASS_DISTRIBUTION: [(ActionClass, f64); 8] = [
    (ActionClass::InitialReviewAndPlanning, 0.13),
    (ActionClass::DataTransformation, 0.20),
    (ActionClass::Metadata, 0.05),
    (ActionClass::Documentation, 0.09),
    (ActionClass::QualityChecks, 0.26),
    (ActionClass::Communication, 0.11),
    (ActionClass::Other, 0.08),
    (ActionClass::NonCuration, 0.08),
];

pub const DEFAULT_NOISE: f64 = 0.3;

pub fn vocabulary(class: ActionClass) -> &'static [&'static str] {
    use ActionClass::*;
    match class {
        InitialReviewAndPlanning => &[
            "deposit", "initial", "assessment", "plan", "planning", "scoped", "triage", "intake", "estimate",
            "workplan", "assigned", "scope",
        ],
        DataTransformation => &[
            "recoded", "converted", "merged", "reshaped", "spss", "stata", "syntax", "transform", "recode",
            "format", "sas", "csv",
        ],
        Metadata => &[
            "ddi", "xml", "keywords", "abstract", "subject", "terms", "catalog", "citation", "funding",
            "geographic",
        ],
        Documentation => &[
            "codebook", "pdf", "questionnaire", "user", "guide", "appendix", "manual", "instrument", "readme",
            "methodology",
        ],
        QualityChecks => &[
            "checked", "frequencies", "wild", "codes", "missing", "disclosure", "risk", "verified", "qc",
            "inconsistencies", "outliers", "validation",
        ],
        Communication => &[
            "emailed", "meeting", "pi", "call", "replied", "depositor", "discussed", "message", "zoom",
            "followup",
        ],
        Other => &[
            "misc", "folder", "permissions", "ticket", "jira", "archived", "cleanup", "restored", "backup",
            "moved",
        ],
        NonCuration => &[
            "training", "webinar", "conference", "lunch", "vacation", "seminar", "onboarding", "timesheet",
            "hr", "workshop",
        ],
    }
}

pub const NOISE_WORDS: [&str; 16] = [
    "study", "files", "data", "dataset", "variables", "version", "team", "project", "worked", "continued",
    "finished", "started", "today", "review", "release", "waves",
];

fn draw_class(rng: &mut ChaCha8Rng, weights: &[(ActionClass, f64)]) -> ActionClass {
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(class, w) in weights {
        if u < w {
            return class;
        }
        u -= w;
    }
    weights[weights.len() - 1].0
}

/// A fragment of 4–7 tokens for `class`, without sentence delimiters.
pub fn fragment_text(rng: &mut ChaCha8Rng, class: ActionClass, noise: f64) -> String {
    let n = rng.random_range(4..=7);
    let words = vocabulary(class);
    let tokens: Vec<&str> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < noise {
                *NOISE_WORDS.choose(rng).unwrap()
            } else {
                *words.choose(rng).unwrap()
            }
        })
        .collect();
    let mut text = tokens.join(" ");
    if let Some(first) = text.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    text
}

/// Per-class counts for `n` items by largest remainder over
/// [`CLASS_DISTRIBUTION`].
pub fn class_counts(n: usize) -> [usize; 8] {
    let exact: Vec<f64> = CLASS_DISTRIBUTION.iter().map(|(_, p)| p * n as f64).collect();
    let mut counts = [0usize; 8];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// `n` labeled fragments with exact class shares, in random order. Every 40
/// consecutive items share a pseudo ticket id.
pub fn labeled_fragments(n: usize, noise: f64, seed: u64) -> LabelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = class_counts(n);
    let mut labels: Vec<ActionClass> = CLASS_DISTRIBUTION
        .iter()
        .zip(counts)
        .flat_map(|(&(class, _), k)| std::iter::repeat_n(class, k))
        .collect();
    labels.shuffle(&mut rng);
    LabelSet::from_items(labels.into_iter().enumerate().map(|(i, label)| LabeledFragment {
        fragment_id: format!("synth-{i:05}"),
        text: fragment_text(&mut rng, label, noise),
        label,
        annotator: "CURATOR-001".into(),
        source: LabelSource::Fixture,
        ticket_id: Some(format!("SYN-{:03}", i / 40)),
        timestamp: None,
    }))
}

#[derive(Clone, Debug)]
pub struct CorpusOptions {
    pub tickets: usize,
    pub noise: f64,
    /// Multiplier on the Communication share for L1, L2, L3 tickets.
    pub communication_boost: [f64; 3],
    pub authors: Vec<String>,
    pub seed: u64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            tickets: 60,
            noise: DEFAULT_NOISE,
            communication_boost: [1.0, 2.0, 3.0],
            authors: ["Avery Quinn", "Jordan Blake", "Riley Moss", "Casey Lin"]
                .map(String::from)
                .to_vec(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// Generating class for each fragment id the segmenter will produce.
    pub truth: BTreeMap<String, ActionClass>,
}

const ARCHIVES: [&str; 4] = ["ICPSR", "ICPSR", "BJS", "NACJD"];

/// Tickets with multi-fragment work logs. About one ticket in six reuses the
/// previous ticket's study.
pub fn corpus(options: &CorpusOptions) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let start = NaiveDate::from_ymd_opt(2017, 2, 1).unwrap();
    let mut tickets = Vec::with_capacity(options.tickets);
    let mut truth = BTreeMap::new();
    let mut study = 0;
    for t in 0..options.tickets {
        if t == 0 || !rng.random_bool(1.0 / 6.0) {
            study += 1;
        }
        let level = CurationLevel::ALL[rng.random_range(0..3)];
        let weights: Vec<(ActionClass, f64)> = CLASS_DISTRIBUTION
            .iter()
            .map(|&(c, p)| {
                let boost = if c == ActionClass::Communication {
                    options.communication_boost[level.number() as usize - 1]
                } else {
                    1.0
                };
                (c, p * boost)
            })
            .collect();
        let ticket_id = format!("CUR-{:04}", t + 1);
        let created = start + chrono::Days::new(rng.random_range(0..1050));
        let mut work_logs = Vec::new();
        for e in 0..rng.random_range(1..=5) {
            let pieces = rng.random_range(1..=4);
            let mut parts = Vec::with_capacity(pieces);
            for o in 0..pieces {
                let class = draw_class(&mut rng, &weights);
                truth.insert(fragment_id(&ticket_id, e, o), class);
                parts.push(fragment_text(&mut rng, class, options.noise));
            }
            let separator = if rng.random_bool(0.5) { ". " } else { "\n" };
            let quarters = rng.random_range(1..=24);
            work_logs.push(WorkLogEntry {
                author: options.authors.choose(&mut rng).cloned().unwrap_or_default(),
                logged_date: created + chrono::Days::new(e as u64 * 3),
                time_spent_hours: Hours::from_micros(quarters * 250_000),
                description: parts.join(separator) + ".",
                extra: Map::new(),
            });
        }
        tickets.push(Ticket {
            ticket_id,
            study_id: format!("S{study:04}"),
            curation_level: level,
            archive: ARCHIVES.choose(&mut rng).unwrap().to_string(),
            created_date: created,
            work_logs,
            extra: Map::new(),
        });
    }
    SynthCorpus {
        corpus: Corpus::new(tickets),
        truth,
    }
}
