//! The curation-action schema, human labels, BRAT standoff files and
//! stratified train/test splits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CurationLevel};

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("label set is empty")]
    EmptySet,
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("fragment {fragment_id} cannot be exported: text contains a line break")]
    UnexportableText { fragment_id: String },
    #[error("quota for {level} is {quota} but only {available} tickets are available")]
    QuotaTooLarge {
        level: CurationLevel,
        quota: usize,
        available: usize,
    },
    #[error("test fraction must be in [0, 1), got {0}")]
    BadFraction(f64),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The eight mutually exclusive curation actions, in schema order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionClass {
    InitialReviewAndPlanning,
    DataTransformation,
    Metadata,
    Documentation,
    QualityChecks,
    Communication,
    Other,
    NonCuration,
}

impl ActionClass {
    pub const ALL: [ActionClass; 8] = [
        ActionClass::InitialReviewAndPlanning,
        ActionClass::DataTransformation,
        ActionClass::Metadata,
        ActionClass::Documentation,
        ActionClass::QualityChecks,
        ActionClass::Communication,
        ActionClass::Other,
        ActionClass::NonCuration,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ActionClass> {
        ActionClass::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionClass::InitialReviewAndPlanning => "InitialReviewAndPlanning",
            ActionClass::DataTransformation => "DataTransformation",
            ActionClass::Metadata => "Metadata",
            ActionClass::Documentation => "Documentation",
            ActionClass::QualityChecks => "QualityChecks",
            ActionClass::Communication => "Communication",
            ActionClass::Other => "Other",
            ActionClass::NonCuration => "NonCuration",
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ActionClass::InitialReviewAndPlanning => "Initial review and planning",
            ActionClass::DataTransformation => "Data transformation",
            ActionClass::Metadata => "Metadata",
            ActionClass::Documentation => "Documentation",
            ActionClass::QualityChecks => "Quality checks",
            ActionClass::Communication => "Communication",
            ActionClass::Other => "Other",
            ActionClass::NonCuration => "Non-curation",
        }
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionClass {
    type Err = AnnotationError;

    /// Exact canonical names only; use [`LabelAliases`] for loose spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| AnnotationError::UnknownLabel(s.to_string()))
    }
}

fn alias_key(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maps label spellings found in annotation files onto the schema.
///
/// Keys are compared after lowercasing and dropping non-alphanumerics, so
/// "Quality_Checks", "quality checks" and "QualityChecks" are the same key.
#[derive(Clone, Debug)]
pub struct LabelAliases {
    map: HashMap<String, ActionClass>,
}

impl Default for LabelAliases {
    fn default() -> Self {
        let mut aliases = LabelAliases { map: HashMap::new() };
        for class in ActionClass::ALL {
            aliases.insert(class.as_str(), class);
            aliases.insert(class.display_name(), class);
        }
        aliases.insert("InitialReview", ActionClass::InitialReviewAndPlanning);
        aliases.insert("Planning", ActionClass::InitialReviewAndPlanning);
        aliases.insert("Transformation", ActionClass::DataTransformation);
        aliases.insert("QC", ActionClass::QualityChecks);
        aliases
    }
}

impl LabelAliases {
    pub fn insert(&mut self, spelling: &str, class: ActionClass) {
        self.map.insert(alias_key(spelling), class);
    }

    pub fn resolve(&self, spelling: &str) -> Option<ActionClass> {
        self.map.get(&alias_key(spelling)).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    BratImport,
    Ui,
    Fixture,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledFragment {
    pub fragment_id: String,
    pub text: String,
    pub label: ActionClass,
    pub annotator: String,
    pub source: LabelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticket_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl LabeledFragment {
    /// Ticket the fragment came from, falling back to the id prefix before
    /// the first ':'.
    pub fn ticket_key(&self) -> &str {
        match &self.ticket_id {
            Some(t) => t,
            None => self.fragment_id.split(':').next().unwrap_or(&self.fragment_id),
        }
    }
}

/// Labeled fragments with at most one current label per (fragment,
/// annotator) pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelSet {
    items: Vec<LabeledFragment>,
    counts: [usize; 8],
}

impl LabelSet {
    pub fn new() -> LabelSet {
        LabelSet::default()
    }

    pub fn from_items(items: impl IntoIterator<Item = LabeledFragment>) -> LabelSet {
        let mut set = LabelSet::new();
        for item in items {
            set.upsert(item);
        }
        set
    }

    /// Inserts or replaces the label for `(fragment_id, annotator)`, returning
    /// the replaced entry.
    pub fn upsert(&mut self, item: LabeledFragment) -> Option<LabeledFragment> {
        self.counts[item.label.index()] += 1;
        let existing = self
            .items
            .iter()
            .position(|x| x.fragment_id == item.fragment_id && x.annotator == item.annotator);
        match existing {
            Some(pos) => {
                let old = std::mem::replace(&mut self.items[pos], item);
                self.counts[old.label.index()] -= 1;
                Some(old)
            }
            None => {
                self.items.push(item);
                None
            }
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[LabeledFragment] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledFragment> {
        self.items.iter()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.items.iter().map(|x| x.text.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<ActionClass> {
        self.items.iter().map(|x| x.label).collect()
    }

    pub fn count(&self, class: ActionClass) -> usize {
        self.counts[class.index()]
    }

    pub fn distinct_classes(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for item in &self.items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<LabelSet, AnnotationError> {
        let mut set = LabelSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item = serde_json::from_str(&line).map_err(|source| AnnotationError::Json { line: i + 1, source })?;
            set.upsert(item);
        }
        Ok(set)
    }
}

impl<'a> IntoIterator for &'a LabelSet {
    type Item = &'a LabeledFragment;
    type IntoIter = std::slice::Iter<'a, LabeledFragment>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassShare {
    pub class: ActionClass,
    pub count: usize,
    pub proportion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelDistribution {
    pub total: usize,
    pub classes: Vec<ClassShare>,
}

/// Per-class counts and proportions, all eight classes included.
pub fn label_distribution(set: &LabelSet) -> LabelDistribution {
    let total = set.len();
    let classes = ActionClass::ALL
        .into_iter()
        .map(|class| {
            let count = set.count(class);
            ClassShare {
                class,
                count,
                proportion: if total == 0 { 0.0 } else { count as f64 / total as f64 },
            }
        })
        .collect();
    LabelDistribution { total, classes }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BratLineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for BratLineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug)]
pub struct BratOptions {
    /// Prefix for fragment ids when the file carries none: `<doc_id>#T1`.
    pub doc_id: String,
    pub annotator: String,
    pub aliases: LabelAliases,
}

impl Default for BratOptions {
    fn default() -> Self {
        BratOptions {
            doc_id: "doc".into(),
            annotator: "unknown".into(),
            aliases: LabelAliases::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BratImport {
    pub fragments: Vec<LabeledFragment>,
    pub errors: Vec<BratLineError>,
    /// Relation, event, attribute and other non text-bound lines.
    pub skipped: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FragmentNote {
    fragment_id: Option<String>,
    annotator: Option<String>,
    source: Option<LabelSource>,
    ticket_id: Option<String>,
    timestamp: Option<String>,
}

/// Imports text-bound (`T`) annotations from a BRAT `.ann` file, checking each
/// surface string against the character offsets in the `.txt` document.
///
/// An `AnnotatorNotes` line holding a JSON object restores the fragment id,
/// annotator, source, ticket id and timestamp written by [`export_brat`].
pub fn import_brat(ann: &str, txt: &str, options: &BratOptions) -> BratImport {
    let doc: Vec<char> = txt.chars().collect();
    let mut out = BratImport::default();
    let mut by_tid: HashMap<String, usize> = HashMap::new();
    let mut notes: Vec<(usize, String, String)> = Vec::new();

    for (i, line) in ann.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| BratLineError { line: line_no, message };
        if line.starts_with('T') {
            let mut parts = line.splitn(3, '\t');
            let (Some(tid), Some(body), Some(surface)) = (parts.next(), parts.next(), parts.next()) else {
                out.errors.push(err("text-bound line needs three tab-separated fields".into()));
                continue;
            };
            let Some((label, offsets)) = body.split_once(' ') else {
                out.errors.push(err(format!("missing offsets at {tid}")));
                continue;
            };
            if offsets.contains(';') {
                out.errors.push(err(format!("discontinuous span at {tid} is not supported")));
                continue;
            }
            let bounds: Vec<Option<usize>> = offsets.split(' ').map(|x| x.parse().ok()).collect();
            let (start, end) = match bounds.as_slice() {
                [Some(s), Some(e)] if s <= e => (*s, *e),
                _ => {
                    out.errors.push(err(format!("bad offsets {offsets:?} at {tid}")));
                    continue;
                }
            };
            if end > doc.len() {
                out.errors.push(err(format!("span {start}..{end} at {tid} exceeds document length {}", doc.len())));
                continue;
            }
            let actual: String = doc[start..end].iter().collect();
            if actual != surface {
                out.errors.push(err(format!("span text mismatch at {tid}")));
                continue;
            }
            let Some(class) = options.aliases.resolve(label) else {
                out.errors.push(err(format!("unknown label {label:?} at {tid}")));
                continue;
            };
            by_tid.insert(tid.to_string(), out.fragments.len());
            out.fragments.push(LabeledFragment {
                fragment_id: format!("{}#{tid}", options.doc_id),
                text: surface.to_string(),
                label: class,
                annotator: options.annotator.clone(),
                source: LabelSource::BratImport,
                ticket_id: None,
                timestamp: None,
            });
        } else if line.starts_with('#') {
            let mut parts = line.splitn(3, '\t');
            let (Some(_), Some(body), note) = (parts.next(), parts.next(), parts.next()) else {
                out.skipped += 1;
                continue;
            };
            match body.split_once(' ') {
                Some(("AnnotatorNotes", target)) => {
                    notes.push((line_no, target.to_string(), note.unwrap_or("").to_string()))
                }
                _ => out.skipped += 1,
            }
        } else {
            out.skipped += 1;
        }
    }

    for (line, target, note) in notes {
        let Some(&idx) = by_tid.get(&target) else {
            continue;
        };
        let Ok(parsed) = serde_json::from_str::<FragmentNote>(&note) else {
            // Free-text notes are not ours to interpret.
            continue;
        };
        let fragment = &mut out.fragments[idx];
        if let Some(id) = parsed.fragment_id {
            if id.is_empty() {
                out.errors.push(BratLineError {
                    line,
                    message: format!("empty fragment_id in note for {target}"),
                });
                continue;
            }
            fragment.fragment_id = id;
        }
        if let Some(annotator) = parsed.annotator {
            fragment.annotator = annotator;
        }
        if let Some(source) = parsed.source {
            fragment.source = source;
        }
        fragment.ticket_id = parsed.ticket_id;
        fragment.timestamp = parsed.timestamp;
    }
    out
}

/// Writes the set as a BRAT document: fragment texts one per line in the
/// `.txt`, one `T` line plus one `AnnotatorNotes` line per fragment in the
/// `.ann`. Returns `(ann, txt)`.
pub fn export_brat(set: &LabelSet) -> Result<(String, String), AnnotationError> {
    let mut ann = String::new();
    let mut txt = String::new();
    let mut offset = 0usize;
    for (i, item) in set.iter().enumerate() {
        if item.text.contains(['\n', '\r']) {
            return Err(AnnotationError::UnexportableText {
                fragment_id: item.fragment_id.clone(),
            });
        }
        let len = item.text.chars().count();
        let n = i + 1;
        ann.push_str(&format!(
            "T{n}\t{} {} {}\t{}\n",
            item.label.as_str(),
            offset,
            offset + len,
            item.text
        ));
        let note = FragmentNote {
            fragment_id: Some(item.fragment_id.clone()),
            annotator: Some(item.annotator.clone()),
            source: Some(item.source),
            ticket_id: item.ticket_id.clone(),
            timestamp: item.timestamp.clone(),
        };
        let note = serde_json::to_string(&note).expect("note serializes");
        ann.push_str(&format!("#{n}\tAnnotatorNotes T{n}\t{note}\n"));
        txt.push_str(&item.text);
        txt.push('\n');
        offset += len + 1;
    }
    Ok((ann, txt))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Stratify individual fragments by class.
    #[default]
    Fragment,
    /// Keep every ticket's fragments on one side of the split.
    Ticket,
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: LabelSet,
    pub test: LabelSet,
    pub warnings: Vec<String>,
}

/// Per-class random split. A class with `n` members sends
/// `round(test_fraction * n)` of them to test, at least one and at most
/// `n - 1` when `n >= 2`; a singleton class stays in train with a warning.
/// Both partitions keep input order.
pub fn stratified_split(
    set: &LabelSet,
    test_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<Split, AnnotationError> {
    if set.is_empty() {
        return Err(AnnotationError::EmptySet);
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(AnnotationError::BadFraction(test_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; set.len()];
    let mut warnings = Vec::new();
    match mode {
        SplitMode::Fragment => {
            for class in ActionClass::ALL {
                let mut members: Vec<usize> = set
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.label == class)
                    .map(|(i, _)| i)
                    .collect();
                let n = members.len();
                if n == 0 {
                    continue;
                }
                if n == 1 {
                    warnings.push(format!("class {class} has a single member; kept in train"));
                    continue;
                }
                let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
                members.shuffle(&mut rng);
                for &i in &members[..n_test] {
                    in_test[i] = true;
                }
            }
        }
        SplitMode::Ticket => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, item) in set.iter().enumerate() {
                groups.entry(item.ticket_key()).or_default().push(i);
            }
            let mut keys: Vec<&str> = groups.keys().copied().collect();
            keys.shuffle(&mut rng);
            let target = (test_fraction * set.len() as f64).round() as usize;
            let mut taken = 0;
            for key in keys.iter().take(keys.len().saturating_sub(1)) {
                if taken >= target {
                    break;
                }
                for &i in &groups[key] {
                    in_test[i] = true;
                }
                taken += groups[key].len();
            }
            if groups.len() < 2 {
                warnings.push("only one ticket; everything kept in train".into());
            }
        }
    }
    let (mut train, mut test) = (LabelSet::new(), LabelSet::new());
    for (item, test_side) in set.iter().zip(in_test) {
        if test_side {
            test.upsert(item.clone());
        } else {
            train.upsert(item.clone());
        }
    }
    Ok(Split { train, test, warnings })
}

/// Draws a random sample of ticket ids with an explicit quota per curation
/// level. Returned ids follow corpus order.
pub fn sample_tickets_by_level(
    corpus: &Corpus,
    quotas: &BTreeMap<CurationLevel, usize>,
    seed: u64,
) -> Result<Vec<String>, AnnotationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; corpus.len()];
    for (&level, &quota) in quotas {
        let mut pool: Vec<usize> = corpus
            .tickets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.curation_level == level)
            .map(|(i, _)| i)
            .collect();
        if quota > pool.len() {
            return Err(AnnotationError::QuotaTooLarge {
                level,
                quota,
                available: pool.len(),
            });
        }
        pool.shuffle(&mut rng);
        for &i in &pool[..quota] {
            chosen[i] = true;
        }
    }
    Ok(corpus
        .tickets
        .iter()
        .zip(chosen)
        .filter(|(_, c)| *c)
        .map(|(t, _)| t.ticket_id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(id: &str, text: &str, label: ActionClass) -> LabeledFragment {
        LabeledFragment {
            fragment_id: id.into(),
            text: text.into(),
            label,
            annotator: "CURATOR-001".into(),
            source: LabelSource::Fixture,
            ticket_id: None,
            timestamp: None,
        }
    }

    #[test]
    fn schema_order_and_names() {
        assert_eq!(ActionClass::ALL.len(), 8);
        assert_eq!(ActionClass::ALL[4], ActionClass::QualityChecks);
        for class in ActionClass::ALL {
            assert_eq!(class.as_str().parse::<ActionClass>().unwrap(), class);
        }
        assert!("Cleanup".parse::<ActionClass>().is_err());
    }

    #[test]
    fn aliases_are_loose_but_closed() {
        let aliases = LabelAliases::default();
        assert_eq!(aliases.resolve("Quality_Checks"), Some(ActionClass::QualityChecks));
        assert_eq!(aliases.resolve("quality checks"), Some(ActionClass::QualityChecks));
        assert_eq!(aliases.resolve("Non-curation"), Some(ActionClass::NonCuration));
        assert_eq!(aliases.resolve("Cleanup"), None);
    }

    #[test]
    fn imports_text_bound_annotation() {
        let imported = import_brat(
            "T1\tQualityChecks 0 15\tRan self-checks\n",
            "Ran self-checks. Then more.",
            &BratOptions::default(),
        );
        assert!(imported.errors.is_empty());
        assert_eq!(imported.fragments.len(), 1);
        let f = &imported.fragments[0];
        assert_eq!(f.text, "Ran self-checks");
        assert_eq!(f.label, ActionClass::QualityChecks);
        assert_eq!(f.source, LabelSource::BratImport);
        assert_eq!(f.fragment_id, "doc#T1");
    }

    #[test]
    fn empty_ann_file() {
        let imported = import_brat("", "anything", &BratOptions::default());
        assert!(imported.fragments.is_empty());
        assert!(imported.errors.is_empty());
    }

    #[test]
    fn per_line_errors() {
        let ann = "T1\tQualityChecks 0 14\tRan self-checks\n\
                   T2\tCleanup 0 3\tRan\n\
                   T3\tMetadata 0 3;4 8\tRan self\n\
                   T4\tMetadata 0 99\tRan\n\
                   R1\tRelates Arg1:T1 Arg2:T2\n\
                   T5\tQuality_Checks 4 15\tself-checks\n";
        let imported = import_brat(ann, "Ran self-checks", &BratOptions::default());
        let messages: Vec<String> = imported.errors.iter().map(|e| e.to_string()).collect();
        assert_eq!(messages[0], "line 1: span text mismatch at T1");
        assert!(messages[1].contains("unknown label \"Cleanup\""));
        assert!(messages[2].contains("discontinuous span at T3"));
        assert!(messages[3].contains("exceeds document length"));
        assert_eq!(imported.skipped, 1);
        assert_eq!(imported.fragments.len(), 1);
        assert_eq!(imported.fragments[0].label, ActionClass::QualityChecks);
    }

    #[test]
    fn export_import_round_trip() {
        let mut set = LabelSet::new();
        set.upsert(labeled("T-1:0:0", "Ran self-checks", ActionClass::QualityChecks));
        set.upsert(LabeledFragment {
            ticket_id: Some("T-9".into()),
            timestamp: Some("2019-01-01T00:00:00Z".into()),
            source: LabelSource::Ui,
            ..labeled("T-9:2:1", "Emailed PI about\tweights", ActionClass::Communication)
        });
        let (ann, txt) = export_brat(&set).unwrap();
        let back = import_brat(&ann, &txt, &BratOptions::default());
        assert!(back.errors.is_empty(), "{:?}", back.errors);
        assert_eq!(LabelSet::from_items(back.fragments), set);
    }

    #[test]
    fn upsert_keeps_one_label_per_annotator() {
        let mut set = LabelSet::new();
        set.upsert(labeled("f1", "x", ActionClass::DataTransformation));
        let old = set.upsert(labeled("f1", "x", ActionClass::QualityChecks));
        assert_eq!(old.unwrap().label, ActionClass::DataTransformation);
        assert_eq!(set.len(), 1);
        assert_eq!(set.count(ActionClass::QualityChecks), 1);
        assert_eq!(set.count(ActionClass::DataTransformation), 0);
        set.upsert(LabeledFragment {
            annotator: "CURATOR-002".into(),
            ..labeled("f1", "x", ActionClass::Metadata)
        });
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn distribution_counts() {
        let empty = label_distribution(&LabelSet::new());
        assert_eq!(empty.total, 0);
        assert!(empty.classes.iter().all(|c| c.count == 0 && c.proportion == 0.0));

        let set = LabelSet::from_items([
            labeled("a", "x", ActionClass::QualityChecks),
            labeled("b", "x", ActionClass::QualityChecks),
            labeled("c", "x", ActionClass::Metadata),
        ]);
        let d = label_distribution(&set);
        assert_eq!(d.classes.len(), 8);
        assert_eq!(d.classes[ActionClass::QualityChecks.index()].count, 2);
        assert!((d.classes.iter().map(|c| c.proportion).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn class_set(sizes: &[(ActionClass, usize)]) -> LabelSet {
        let mut items = Vec::new();
        for &(class, n) in sizes {
            for i in 0..n {
                items.push(labeled(&format!("{class}-{i}"), "x", class));
            }
        }
        LabelSet::from_items(items)
    }

    #[test]
    fn split_counts_per_class() {
        let set = class_set(&[(ActionClass::QualityChecks, 10), (ActionClass::Metadata, 1)]);
        let split = stratified_split(&set, 0.2, 7, SplitMode::Fragment).unwrap();
        assert_eq!(split.test.count(ActionClass::QualityChecks), 2);
        assert_eq!(split.train.count(ActionClass::QualityChecks), 8);
        assert_eq!(split.test.count(ActionClass::Metadata), 0);
        assert_eq!(split.train.count(ActionClass::Metadata), 1);
        assert_eq!(split.warnings.len(), 1);
    }

    #[test]
    fn split_is_seeded() {
        let set = class_set(&[(ActionClass::QualityChecks, 30), (ActionClass::Communication, 20)]);
        let a = stratified_split(&set, 0.2, 1, SplitMode::Fragment).unwrap();
        let b = stratified_split(&set, 0.2, 1, SplitMode::Fragment).unwrap();
        let c = stratified_split(&set, 0.2, 2, SplitMode::Fragment).unwrap();
        assert_eq!(a.test, b.test);
        assert_ne!(a.test, c.test);
        assert!(matches!(
            stratified_split(&LabelSet::new(), 0.2, 1, SplitMode::Fragment),
            Err(AnnotationError::EmptySet)
        ));
    }

    #[test]
    fn ticket_split_keeps_tickets_together() {
        let items = (0..40).map(|i| LabeledFragment {
            ticket_id: Some(format!("T{}", i % 8)),
            ..labeled(&format!("f{i}"), "x", ActionClass::ALL[i % 3])
        });
        let set = LabelSet::from_items(items);
        let split = stratified_split(&set, 0.2, 3, SplitMode::Ticket).unwrap();
        let test_tickets: std::collections::BTreeSet<_> = split.test.iter().map(|x| x.ticket_key()).collect();
        assert!(!test_tickets.is_empty());
        assert!(split.train.iter().all(|x| !test_tickets.contains(x.ticket_key())));
        assert_eq!(split.train.len() + split.test.len(), 40);
    }

    proptest! {
        #[test]
        fn split_partitions_and_stratifies(
            sizes in prop::collection::vec(0usize..40, 8),
            seed in any::<u64>(),
        ) {
            let spec: Vec<_> = ActionClass::ALL.into_iter().zip(sizes.iter().copied()).collect();
            let set = class_set(&spec);
            prop_assume!(!set.is_empty());
            let split = stratified_split(&set, 0.2, seed, SplitMode::Fragment).unwrap();
            prop_assert_eq!(split.train.len() + split.test.len(), set.len());
            for item in &set {
                let in_train = split.train.iter().any(|x| x == item);
                let in_test = split.test.iter().any(|x| x == item);
                prop_assert!(in_train ^ in_test);
            }
            for (class, n) in spec {
                if n >= 2 {
                    let share = split.test.count(class) as f64 / n as f64;
                    prop_assert!((share - 0.2).abs() <= 1.0 / n as f64);
                    prop_assert!(split.train.count(class) >= 1 && split.test.count(class) >= 1);
                }
            }
        }
    }
}
