//! Work-log segmentation.
//!
//! Curators separate actions with line breaks and sentence periods, so a
//! description is cut at every `\n` or `\r` and at every `.` that is followed
//! by whitespace or the end of the text. A period inside a token ("1.5",
//! "e.g") does not split.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::hours::Hours;

/// Half-open character range `[start, end)` into a description. Offsets count
/// Unicode scalar values, not bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub span: Span,
    pub text: String,
}

fn is_delimiter(chars: &[char], i: usize) -> bool {
    match chars[i] {
        '\n' | '\r' => true,
        '.' => chars.get(i + 1).is_none_or(|c| c.is_whitespace()),
        _ => false,
    }
}

/// Splits a description into trimmed, non-empty segments in source order.
pub fn segment_entry(description: &str) -> Vec<Segment> {
    let chars: Vec<char> = description.chars().collect();
    let mut segments = Vec::new();
    let mut piece_start = 0;
    for i in 0..=chars.len() {
        if i < chars.len() && !is_delimiter(&chars, i) {
            continue;
        }
        let mut start = piece_start;
        let mut end = i;
        while start < end && chars[start].is_whitespace() {
            start += 1;
        }
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if start < end {
            segments.push(Segment {
                span: Span { start, end },
                text: chars[start..end].iter().collect(),
            });
        }
        piece_start = i + 1;
    }
    segments
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub fragment_id: String,
    pub ticket_id: String,
    pub study_id: String,
    pub entry_index: usize,
    pub span: Span,
    pub text: String,
    pub apportioned_hours: Hours,
}

/// Location of a work-log entry whose description produced no fragments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRef {
    pub ticket_id: String,
    pub entry_index: usize,
    pub hours: Hours,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FragmentSet {
    pub fragments: Vec<Fragment>,
    pub empty_entries: Vec<EntryRef>,
    pub unattributable_hours: Hours,
}

impl FragmentSet {
    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.fragments.iter().map(|f| f.text.as_str()).collect()
    }

    pub fn get(&self, fragment_id: &str) -> Option<&Fragment> {
        self.fragments.iter().find(|f| f.fragment_id == fragment_id)
    }

    pub fn total_hours(&self) -> Hours {
        self.fragments.iter().map(|f| f.apportioned_hours).sum()
    }

    /// One fragment per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for fragment in &self.fragments {
            serde_json::to_writer(&mut out, fragment)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads fragments written by [`FragmentSet::write_jsonl`]. Entry-level
    /// bookkeeping is not part of the file and comes back empty.
    pub fn read_jsonl<R: BufRead>(reader: R) -> std::io::Result<FragmentSet> {
        let mut fragments = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fragment: Fragment = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })?;
            fragments.push(fragment);
        }
        Ok(FragmentSet {
            fragments,
            ..FragmentSet::default()
        })
    }
}

pub fn fragment_id(ticket_id: &str, entry_index: usize, ordinal: usize) -> String {
    format!("{ticket_id}:{entry_index}:{ordinal}")
}

/// Segments every entry of every ticket, splitting each entry's hours evenly
/// across its fragments. Entries with no fragments are listed in
/// `empty_entries` and their hours go to `unattributable_hours`.
pub fn segment_corpus(corpus: &Corpus) -> FragmentSet {
    let mut set = FragmentSet::default();
    for ticket in &corpus.tickets {
        for (entry_index, entry) in ticket.work_logs.iter().enumerate() {
            let segments = segment_entry(&entry.description);
            if segments.is_empty() {
                set.empty_entries.push(EntryRef {
                    ticket_id: ticket.ticket_id.clone(),
                    entry_index,
                    hours: entry.time_spent_hours,
                });
                set.unattributable_hours += entry.time_spent_hours;
                continue;
            }
            let shares = entry.time_spent_hours.split_even(segments.len());
            for (ordinal, (segment, hours)) in segments.into_iter().zip(shares).enumerate() {
                set.fragments.push(Fragment {
                    fragment_id: fragment_id(&ticket.ticket_id, entry_index, ordinal),
                    ticket_id: ticket.ticket_id.clone(),
                    study_id: ticket.study_id.clone(),
                    entry_index,
                    span: segment.span,
                    text: segment.text,
                    apportioned_hours: hours,
                });
            }
        }
    }
    set
}
