//! Append-only label log.
//!
//! `events.jsonl` holds one event per accepted label or review and is the
//! source of truth; it is replayed on open and periodically rewritten to keep
//! only the live event per (fragment, annotator). `audit.jsonl` is never
//! rewritten.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use curation_core::annotation::{ActionClass, LabelSet, LabeledFragment};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Label,
    Confirm,
    Correct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub item: LabeledFragment,
    /// The model's label at review time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<ActionClass>,
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    #[serde(flatten)]
    event: &'a Event,
    replaced: Option<&'a LabeledFragment>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))
}

pub struct Store {
    events_path: PathBuf,
    audit_path: PathBuf,
    events: File,
    audit: File,
    next_seq: u64,
    compact_every: usize,
    since_compaction: usize,
    live: BTreeMap<(String, String), Event>,
    labels: LabelSet,
    /// Latest label for each fragment, whoever gave it.
    current: BTreeMap<String, (u64, LabeledFragment)>,
}

impl Store {
    /// Opens or creates the log under `dir`. A truncated final line (a write
    /// that never got acknowledged) is ignored.
    pub fn open(dir: &Path, compact_every: usize) -> Result<Store, StoreError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let events_path = dir.join("events.jsonl");
        let audit_path = dir.join("audit.jsonl");
        let mut store = Store {
            events: open_append(&events_path)?,
            audit: open_append(&audit_path)?,
            events_path,
            audit_path,
            next_seq: 1,
            compact_every: compact_every.max(1),
            since_compaction: 0,
            live: BTreeMap::new(),
            labels: LabelSet::new(),
            current: BTreeMap::new(),
        };
        let reader = BufReader::new(File::open(&store.events_path).map_err(io_err(&store.events_path))?);
        let lines: Vec<String> = reader
            .lines()
            .collect::<Result<_, _>>()
            .map_err(io_err(&store.events_path))?;
        let last = lines.len();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Event>(line) {
                Ok(event) => {
                    store.apply(event);
                }
                Err(_) if i + 1 == last => {
                    // Drop the torn bytes so later appends start on a clean line.
                    store.compact()?;
                    break;
                }
                Err(e) => {
                    return Err(StoreError::Corrupt {
                        path: store.events_path.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(store)
    }

    fn apply(&mut self, event: Event) -> Option<LabeledFragment> {
        self.next_seq = self.next_seq.max(event.seq + 1);
        let key = (event.item.fragment_id.clone(), event.item.annotator.clone());
        let newer = self
            .current
            .get(&event.item.fragment_id)
            .is_none_or(|(seq, _)| *seq < event.seq);
        if newer {
            self.current
                .insert(event.item.fragment_id.clone(), (event.seq, event.item.clone()));
        }
        let replaced = self.labels.upsert(event.item.clone());
        self.live.insert(key, event);
        replaced
    }

    /// Durably appends the event, then applies it. Returns the stored event
    /// and the label it replaced for the same annotator.
    pub fn record(
        &mut self,
        kind: EventKind,
        item: LabeledFragment,
        predicted: Option<ActionClass>,
    ) -> Result<(Event, Option<LabeledFragment>), StoreError> {
        let event = Event {
            seq: self.next_seq,
            kind,
            item,
            predicted,
        };
        let mut line = serde_json::to_string(&event).expect("event serializes");
        line.push('\n');
        self.events.write_all(line.as_bytes()).map_err(io_err(&self.events_path))?;
        self.events.sync_data().map_err(io_err(&self.events_path))?;
        let replaced = self.apply(event.clone());
        let mut audit = serde_json::to_string(&AuditRecord {
            event: &event,
            replaced: replaced.as_ref(),
        })
        .expect("audit serializes");
        audit.push('\n');
        self.audit.write_all(audit.as_bytes()).map_err(io_err(&self.audit_path))?;
        self.audit.sync_data().map_err(io_err(&self.audit_path))?;
        self.since_compaction += 1;
        if self.since_compaction >= self.compact_every {
            self.compact()?;
        }
        Ok((event, replaced))
    }

    /// Rewrites the event log with only live events, via a temporary file and
    /// rename.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let tmp = self.events_path.with_extension("jsonl.tmp");
        {
            let mut out = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut events: Vec<&Event> = self.live.values().collect();
            events.sort_by_key(|e| e.seq);
            for event in events {
                let mut line = serde_json::to_string(event).expect("event serializes");
                line.push('\n');
                out.write_all(line.as_bytes()).map_err(io_err(&tmp))?;
            }
            out.sync_all().map_err(io_err(&tmp))?;
        }
        std::fs::rename(&tmp, &self.events_path).map_err(io_err(&self.events_path))?;
        self.events = open_append(&self.events_path)?;
        self.since_compaction = 0;
        Ok(())
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn current(&self, fragment_id: &str) -> Option<&LabeledFragment> {
        self.current.get(fragment_id).map(|(_, item)| item)
    }

    pub fn is_labeled(&self, fragment_id: &str) -> bool {
        self.current.contains_key(fragment_id)
    }

    /// One label per fragment, the most recent one, in fragment-id order.
    pub fn training_set(&self) -> LabelSet {
        LabelSet::from_items(self.current.values().map(|(_, item)| item.clone()))
    }

    pub fn event_count(&self) -> usize {
        self.live.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use curation_core::annotation::LabelSource;

    fn item(id: &str, label: ActionClass, who: &str) -> LabeledFragment {
        LabeledFragment {
            fragment_id: id.into(),
            text: "t".into(),
            label,
            annotator: who.into(),
            source: LabelSource::Ui,
            ticket_id: None,
            timestamp: None,
        }
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path(), 100).unwrap();
            s.record(EventKind::Label, item("a", ActionClass::Metadata, "x"), None).unwrap();
            s.record(EventKind::Label, item("a", ActionClass::Other, "x"), None).unwrap();
            s.record(EventKind::Correct, item("b", ActionClass::QualityChecks, "y"), Some(ActionClass::Other))
                .unwrap();
        }
        let s = Store::open(dir.path(), 100).unwrap();
        assert_eq!(s.labels().len(), 2);
        assert_eq!(s.current("a").unwrap().label, ActionClass::Other);
        let audit = std::fs::read_to_string(dir.path().join("audit.jsonl")).unwrap();
        assert_eq!(audit.lines().count(), 3);
        assert!(audit.lines().nth(1).unwrap().contains("\"replaced\":{"));
    }

    #[test]
    fn compaction_keeps_live_events_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path(), 3).unwrap();
        for label in [ActionClass::Metadata, ActionClass::Other, ActionClass::Communication] {
            s.record(EventKind::Label, item("a", label, "x"), None).unwrap();
        }
        let events = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
        assert_eq!(events.lines().count(), 1);
        s.record(EventKind::Label, item("b", ActionClass::Other, "x"), None).unwrap();
        drop(s);
        let s = Store::open(dir.path(), 3).unwrap();
        assert_eq!(s.current("a").unwrap().label, ActionClass::Communication);
        assert_eq!(s.training_set().len(), 2);
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path(), 100).unwrap();
            s.record(EventKind::Label, item("a", ActionClass::Metadata, "x"), None).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join("events.jsonl")).unwrap();
        f.write_all(b"{\"seq\":2,\"kind\":\"la").unwrap();
        let mut s = Store::open(dir.path(), 100).unwrap();
        assert_eq!(s.labels().len(), 1);
        s.record(EventKind::Label, item("b", ActionClass::Other, "x"), None).unwrap();
        drop(s);
        assert_eq!(Store::open(dir.path(), 100).unwrap().labels().len(), 2);
    }

    #[test]
    fn latest_label_per_fragment_wins_across_annotators() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path(), 100).unwrap();
        s.record(EventKind::Label, item("a", ActionClass::DataTransformation, "x"), None).unwrap();
        s.record(EventKind::Correct, item("a", ActionClass::QualityChecks, "y"), None).unwrap();
        assert_eq!(s.labels().len(), 2);
        let train = s.training_set();
        assert_eq!(train.len(), 1);
        assert_eq!(train.items()[0].label, ActionClass::QualityChecks);
    }
}
