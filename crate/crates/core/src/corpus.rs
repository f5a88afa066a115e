//! Ticket corpora: ingestion, deidentification, filtering and summaries.
//!
//! JSONL is the canonical interchange: one ticket object per line with its
//! work logs nested. CSV input carries one work-log entry per row and is
//! regrouped by `ticket_id`. Fields the schema does not name are carried
//! through in `extra` rather than dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};

use chrono::{Datelike, NaiveDate};
use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::hours::Hours;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unreadable stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate ticket_id {ticket_id:?} at line {first_line} and line {second_line}")]
    DuplicateTicket {
        ticket_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("inverted date range: {from} is after {to}")]
    InvertedDateRange { from: NaiveDate, to: NaiveDate },
    #[error("nothing to summarize")]
    Empty,
    #[error("name list is empty")]
    NoNames,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurationLevel {
    L1,
    L2,
    L3,
}

impl CurationLevel {
    pub const ALL: [CurationLevel; 3] = [CurationLevel::L1, CurationLevel::L2, CurationLevel::L3];

    pub fn number(self) -> u8 {
        match self {
            CurationLevel::L1 => 1,
            CurationLevel::L2 => 2,
            CurationLevel::L3 => 3,
        }
    }

    pub fn from_number(n: i64) -> Option<CurationLevel> {
        match n {
            1 => Some(CurationLevel::L1),
            2 => Some(CurationLevel::L2),
            3 => Some(CurationLevel::L3),
            _ => None,
        }
    }
}

impl fmt::Display for CurationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.number())
    }
}

impl Serialize for CurationLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for CurationLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = i64::deserialize(d)?;
        CurationLevel::from_number(n)
            .ok_or_else(|| serde::de::Error::custom(format!("level out of range: {n}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkLogEntry {
    pub author: String,
    pub logged_date: NaiveDate,
    pub time_spent_hours: Hours,
    pub description: String,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ticket {
    pub ticket_id: String,
    pub study_id: String,
    pub curation_level: CurationLevel,
    pub archive: String,
    pub created_date: NaiveDate,
    pub work_logs: Vec<WorkLogEntry>,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

impl Ticket {
    pub fn logged_hours(&self) -> Hours {
        self.work_logs.iter().map(|e| e.time_spent_hours).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingested_at: Option<String>,
    #[serde(default)]
    pub filters: Vec<FilterRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deidentified_names: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub tickets: Vec<Ticket>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn new(tickets: Vec<Ticket>) -> Corpus {
        Corpus {
            tickets,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.tickets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickets.is_empty()
    }

    pub fn study_ids(&self) -> BTreeSet<&str> {
        self.tickets.iter().map(|t| t.study_id.as_str()).collect()
    }

    pub fn ticket(&self, ticket_id: &str) -> Option<&Ticket> {
        self.tickets.iter().find(|t| t.ticket_id == ticket_id)
    }

    pub fn total_hours(&self) -> Hours {
        self.tickets.iter().map(Ticket::logged_hours).sum()
    }

    /// Writes one ticket per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        for ticket in &self.tickets {
            serde_json::to_writer(&mut out, ticket)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

/// A record that failed validation. `line` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordError {
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ticket_id: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.ticket_id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub errors: Vec<RecordError>,
}

pub fn ingest_tickets<R: Read>(source: R, format: InputFormat) -> Result<Ingested, CorpusError> {
    match format {
        InputFormat::Jsonl => ingest_jsonl(std::io::BufReader::new(source)),
        InputFormat::Csv => ingest_csv(source),
    }
}

fn ingest_jsonl<R: BufRead>(reader: R) -> Result<Ingested, CorpusError> {
    let mut tickets = Vec::new();
    let mut errors = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(RecordError {
                    line: line_no,
                    ticket_id: None,
                    message: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let ticket = match ticket_from_json(value) {
            Ok(t) => t,
            Err((ticket_id, message)) => {
                errors.push(RecordError {
                    line: line_no,
                    ticket_id,
                    message,
                });
                continue;
            }
        };
        if let Some(&first_line) = seen.get(&ticket.ticket_id) {
            return Err(CorpusError::DuplicateTicket {
                ticket_id: ticket.ticket_id,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(ticket.ticket_id.clone(), line_no);
        tickets.push(ticket);
    }
    Ok(Ingested {
        corpus: Corpus::new(tickets),
        errors,
    })
}

type FieldError = (Option<String>, String);

fn ticket_from_json(value: Value) -> Result<Ticket, FieldError> {
    let Value::Object(mut obj) = value else {
        return Err((None, "record is not a JSON object".into()));
    };
    let ticket_id = match obj.remove("ticket_id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s,
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err((None, "missing ticket_id".into())),
    };
    let tid = Some(ticket_id.clone());
    let curation_level = match obj.remove("curation_level") {
        None | Some(Value::Null) => return Err((tid, "missing curation_level".into())),
        Some(v) => parse_level(&v).map_err(|m| (tid.clone(), m))?,
    };
    let work_logs = match obj.remove("work_logs") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err((tid, "work_logs is not an array".into())),
        None => return Err((tid, "missing work_logs".into())),
    };
    let study_id = match obj.remove("study_id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s,
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err((tid, "missing study_id".into())),
    };
    let archive = match obj.remove("archive") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => normalize_archive_tag(&s),
        Some(other) => return Err((tid, format!("archive is not text: {other}"))),
    };
    let created_date = match obj.remove("created_date") {
        Some(Value::String(s)) => parse_date(&s).map_err(|m| (tid.clone(), m))?,
        _ => return Err((tid, "missing created_date".into())),
    };
    let mut entries = Vec::with_capacity(work_logs.len());
    for (i, item) in work_logs.into_iter().enumerate() {
        let entry = entry_from_json(item).map_err(|m| (tid.clone(), format!("work_logs[{i}]: {m}")))?;
        entries.push(entry);
    }
    Ok(Ticket {
        ticket_id,
        study_id,
        curation_level,
        archive,
        created_date,
        work_logs: entries,
        extra: obj,
    })
}

fn entry_from_json(value: Value) -> Result<WorkLogEntry, String> {
    let Value::Object(mut obj) = value else {
        return Err("entry is not a JSON object".into());
    };
    let author = match obj.remove("author") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s,
        Some(other) => return Err(format!("author is not text: {other}")),
    };
    let logged_date = match obj.remove("logged_date") {
        Some(Value::String(s)) => parse_date(&s)?,
        _ => return Err("missing logged_date".into()),
    };
    let time_spent_hours = match obj.remove("time_spent_hours") {
        Some(Value::Number(n)) => {
            let v = n.as_f64().ok_or("time_spent_hours is not a number")?;
            Hours::from_f64(v).map_err(|e| e.to_string())?
        }
        Some(Value::String(s)) => parse_hours(&s)?,
        _ => return Err("missing time_spent_hours".into()),
    };
    let description = match obj.remove("description") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s,
        Some(other) => return Err(format!("description is not text: {other}")),
    };
    Ok(WorkLogEntry {
        author,
        logged_date,
        time_spent_hours,
        description,
        extra: obj,
    })
}

fn parse_level(value: &Value) -> Result<CurationLevel, String> {
    let n = match value {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => {
            let s = s.trim();
            let s = s.strip_prefix(['L', 'l']).unwrap_or(s);
            s.parse::<i64>().ok()
        }
        _ => None,
    };
    match n {
        Some(n) => CurationLevel::from_number(n).ok_or_else(|| format!("level out of range: {n}")),
        None => Err(format!("curation_level is not an integer: {value}")),
    }
}

/// Parses an ISO-8601 calendar date, ignoring any time-of-day suffix.
pub fn parse_date(raw: &str) -> Result<NaiveDate, String> {
    let raw = raw.trim();
    let date_part = match raw.char_indices().nth(10) {
        Some((i, 'T' | ' ')) => &raw[..i],
        _ => raw,
    };
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d").map_err(|e| format!("invalid date {raw:?}: {e}"))
}

fn parse_hours(raw: &str) -> Result<Hours, String> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("time_spent_hours is not a number: {raw:?}"))?;
    Hours::from_f64(v).map_err(|e| e.to_string())
}

pub fn normalize_archive_tag(tag: &str) -> String {
    tag.trim().to_uppercase()
}

pub const CSV_HEADER: [&str; 9] = [
    "ticket_id",
    "study_id",
    "curation_level",
    "archive",
    "created_date",
    "author",
    "logged_date",
    "time_spent_hours",
    "description",
];

#[derive(Debug, Deserialize)]
struct CsvRow {
    ticket_id: String,
    study_id: String,
    curation_level: String,
    archive: String,
    created_date: String,
    author: String,
    logged_date: String,
    time_spent_hours: String,
    description: String,
}

fn ingest_csv<R: Read>(source: R) -> Result<Ingested, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let missing: Vec<&str> = CSV_HEADER
        .iter()
        .copied()
        .filter(|h| !headers.iter().any(|x| x == *h))
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::Csv(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("missing CSV columns: {}", missing.join(",")),
        ))));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Ticket> = HashMap::new();
    let mut errors = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: CsvRow = match record.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(e) => {
                errors.push(RecordError {
                    line,
                    ticket_id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match ticket_row_from_csv(&row) {
            Ok((ticket, entry)) => {
                let tid = ticket.ticket_id.clone();
                match by_id.get_mut(&tid) {
                    Some(existing) => {
                        if let Some(field) = conflicting_field(existing, &ticket) {
                            errors.push(RecordError {
                                line,
                                ticket_id: Some(tid),
                                message: format!("{field} disagrees with earlier rows for this ticket"),
                            });
                            continue;
                        }
                        existing.work_logs.extend(entry);
                    }
                    None => {
                        let mut ticket = ticket;
                        ticket.work_logs.extend(entry);
                        order.push(tid.clone());
                        by_id.insert(tid, ticket);
                    }
                }
            }
            Err((ticket_id, message)) => errors.push(RecordError {
                line,
                ticket_id,
                message,
            }),
        }
    }
    let tickets = order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("grouped ticket"))
        .collect();
    Ok(Ingested {
        corpus: Corpus::new(tickets),
        errors,
    })
}

fn ticket_row_from_csv(row: &CsvRow) -> Result<(Ticket, Option<WorkLogEntry>), FieldError> {
    if row.ticket_id.trim().is_empty() {
        return Err((None, "missing ticket_id".into()));
    }
    let tid = Some(row.ticket_id.clone());
    if row.curation_level.trim().is_empty() {
        return Err((tid, "missing curation_level".into()));
    }
    let curation_level =
        parse_level(&Value::String(row.curation_level.clone())).map_err(|m| (tid.clone(), m))?;
    if row.study_id.trim().is_empty() {
        return Err((tid, "missing study_id".into()));
    }
    let created_date = parse_date(&row.created_date).map_err(|m| (tid.clone(), m))?;
    // A row with no entry columns declares a ticket without work logs.
    let no_entry = row.author.is_empty()
        && row.logged_date.is_empty()
        && row.time_spent_hours.is_empty()
        && row.description.is_empty();
    let entry = if no_entry {
        None
    } else {
        Some(WorkLogEntry {
            author: row.author.clone(),
            logged_date: parse_date(&row.logged_date).map_err(|m| (tid.clone(), m))?,
            time_spent_hours: parse_hours(&row.time_spent_hours).map_err(|m| (tid.clone(), m))?,
            description: row.description.clone(),
            extra: Map::new(),
        })
    };
    Ok((
        Ticket {
            ticket_id: row.ticket_id.clone(),
            study_id: row.study_id.clone(),
            curation_level,
            archive: normalize_archive_tag(&row.archive),
            created_date,
            work_logs: Vec::new(),
            extra: Map::new(),
        },
        entry,
    ))
}

fn conflicting_field(a: &Ticket, b: &Ticket) -> Option<&'static str> {
    if a.study_id != b.study_id {
        Some("study_id")
    } else if a.curation_level != b.curation_level {
        Some("curation_level")
    } else if a.archive != b.archive {
        Some("archive")
    } else if a.created_date != b.created_date {
        Some("created_date")
    } else {
        None
    }
}

/// Ordered mapping from raw curator names to `CURATOR-NNN` pseudonyms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PseudonymMap {
    entries: Vec<(String, String)>,
}

impl PseudonymMap {
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pseudonym(&self, raw: &str) -> Option<&str> {
        let key = name_key(raw);
        self.entries
            .iter()
            .find(|(name, _)| name_key(name) == key)
            .map(|(_, p)| p.as_str())
    }

    pub fn raw_name(&self, pseudonym: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, p)| p == pseudonym)
            .map(|(n, _)| n.as_str())
    }

    /// Two-column CSV: `name,pseudonym`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CorpusError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["name", "pseudonym"])?;
        for (name, pseudonym) in &self.entries {
            writer.write_record([name, pseudonym])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<PseudonymMap, CorpusError> {
        let mut reader = csv::Reader::from_reader(source);
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            entries.push((record[0].to_string(), record[1].to_string()));
        }
        Ok(PseudonymMap { entries })
    }
}

#[derive(Debug)]
pub struct Deidentified {
    pub corpus: Corpus,
    pub map: PseudonymMap,
    /// Listed names that never occurred in the corpus.
    pub unused: Vec<String>,
}

fn name_key(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn name_pattern(names: &[String]) -> Regex {
    let mut sorted: Vec<&String> = names.iter().collect();
    // Longest first so "Jane Doe-Smith" wins over "Jane Doe".
    sorted.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
    let alternatives: Vec<String> = sorted
        .iter()
        .map(|name| {
            name.split_whitespace()
                .map(regex::escape)
                .collect::<Vec<_>>()
                .join(r"\s+")
        })
        .collect();
    Regex::new(&format!(r"(?i)\b(?:{})\b", alternatives.join("|"))).expect("escaped name pattern")
}

/// Replaces every whole-word, case-insensitive occurrence of each listed name
/// in entry authors and descriptions. Pseudonyms are numbered by first
/// appearance (tickets in order, author before description within an entry);
/// names never seen are numbered afterwards in list order.
pub fn deidentify(corpus: &Corpus, names: &[String]) -> Result<Deidentified, CorpusError> {
    let mut canonical: Vec<String> = Vec::new();
    let mut keys = BTreeSet::new();
    for name in names {
        let trimmed = name.split_whitespace().collect::<Vec<_>>().join(" ");
        if trimmed.is_empty() {
            continue;
        }
        if keys.insert(name_key(&trimmed)) {
            canonical.push(trimmed);
        }
    }
    if canonical.is_empty() {
        return Err(CorpusError::NoNames);
    }
    let by_key: HashMap<String, &String> = canonical.iter().map(|n| (name_key(n), n)).collect();
    let width = canonical.len().to_string().len().max(3);
    let pattern = name_pattern(&canonical);

    let mut assigned: HashMap<String, String> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let replace = |text: &str, assigned: &mut HashMap<String, String>, order: &mut Vec<String>| {
        pattern
            .replace_all(text, |caps: &Captures| {
                let key = name_key(&caps[0]);
                let next = assigned.len() + 1;
                assigned
                    .entry(key.clone())
                    .or_insert_with(|| {
                        order.push(key);
                        format!("CURATOR-{next:0width$}")
                    })
                    .clone()
            })
            .into_owned()
    };

    let mut out = corpus.clone();
    for ticket in &mut out.tickets {
        for entry in &mut ticket.work_logs {
            entry.author = replace(&entry.author, &mut assigned, &mut order);
            entry.description = replace(&entry.description, &mut assigned, &mut order);
        }
    }

    let mut entries: Vec<(String, String)> = order
        .iter()
        .map(|key| (by_key[key].clone(), assigned[key].clone()))
        .collect();
    let mut unused = Vec::new();
    for name in &canonical {
        let key = name_key(name);
        if !assigned.contains_key(&key) {
            let pseudonym = format!("CURATOR-{:0width$}", entries.len() + 1);
            entries.push((name.clone(), pseudonym));
            unused.push(name.clone());
        }
    }
    out.provenance.deidentified_names = Some(canonical.len());
    Ok(Deidentified {
        corpus: out,
        map: PseudonymMap { entries },
        unused,
    })
}

/// Inclusive creation-date window plus the work-log requirement.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCriteria {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_from: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_to: Option<NaiveDate>,
    #[serde(default)]
    pub require_worklog: bool,
}

impl FilterCriteria {
    /// Tickets created February 2017 through December 2019 with at least one
    /// work-log entry.
    pub fn study_window() -> FilterCriteria {
        FilterCriteria {
            created_from: NaiveDate::from_ymd_opt(2017, 2, 1),
            created_to: NaiveDate::from_ymd_opt(2019, 12, 31),
            require_worklog: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub criteria: FilterCriteria,
    pub input: usize,
    pub removed_out_of_range: usize,
    pub removed_without_worklog: usize,
    pub retained: usize,
}

pub fn filter_corpus(corpus: &Corpus, criteria: &FilterCriteria) -> Result<Corpus, CorpusError> {
    if let (Some(from), Some(to)) = (criteria.created_from, criteria.created_to) {
        if from > to {
            return Err(CorpusError::InvertedDateRange { from, to });
        }
    }
    let mut out_of_range = 0;
    let mut without_worklog = 0;
    let mut tickets = Vec::new();
    for ticket in &corpus.tickets {
        let date = ticket.created_date;
        if criteria.created_from.is_some_and(|from| date < from)
            || criteria.created_to.is_some_and(|to| date > to)
        {
            out_of_range += 1;
        } else if criteria.require_worklog && ticket.work_logs.is_empty() {
            without_worklog += 1;
        } else {
            tickets.push(ticket.clone());
        }
    }
    let mut provenance = corpus.provenance.clone();
    provenance.filters.push(FilterRecord {
        criteria: criteria.clone(),
        input: corpus.len(),
        removed_out_of_range: out_of_range,
        removed_without_worklog: without_worklog,
        retained: tickets.len(),
    });
    Ok(Corpus { tickets, provenance })
}

pub const DEFAULT_ARCHIVES: [&str; 2] = ["BJS", "ICPSR"];
pub const OTHER_ARCHIVE: &str = "Other";

/// Maps an archive tag to its report group: tags on the allow-list keep their
/// upper-cased name, everything else becomes "Other". An empty allow-list
/// keeps every tag.
pub fn archive_group(tag: &str, allow_list: &[String]) -> String {
    let tag = normalize_archive_tag(tag);
    if allow_list.is_empty() || allow_list.iter().any(|a| normalize_archive_tag(a) == tag) {
        if tag.is_empty() {
            OTHER_ARCHIVE.to_string()
        } else {
            tag
        }
    } else {
        OTHER_ARCHIVE.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Level,
    Archive,
    Year,
}

impl Dimension {
    pub fn group_of(self, ticket: &Ticket, allow_list: &[String]) -> String {
        match self {
            Dimension::Level => ticket.curation_level.to_string(),
            Dimension::Archive => archive_group(&ticket.archive, allow_list),
            Dimension::Year => ticket.created_date.year().to_string(),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Level => "level",
            Dimension::Archive => "archive",
            Dimension::Year => "year",
        })
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "level" => Ok(Dimension::Level),
            "archive" => Ok(Dimension::Archive),
            "year" => Ok(Dimension::Year),
            other => Err(format!("unknown grouping key {other:?} (expected level, archive or year)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dimension: Dimension,
    pub group: String,
    pub tickets: usize,
    pub studies: usize,
    pub total_hours: Hours,
    pub avg_hours_per_study: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub total_tickets: usize,
    pub total_studies: usize,
    /// Which hours were counted, e.g. "all_logged" or "curation_only".
    pub hours_basis: String,
    pub rows: Vec<SummaryRow>,
}

impl CorpusSummary {
    pub fn rows_for(&self, dimension: Dimension) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter(move |r| r.dimension == dimension)
    }

    pub fn write_csv<W: Write>(&self, out: W, decimals: usize) -> Result<(), CorpusError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record([
            "dimension",
            "group",
            "tickets",
            "studies",
            "avg_hours_per_study",
            "hours_basis",
        ])?;
        for row in &self.rows {
            writer.write_record([
                row.dimension.to_string(),
                row.group.clone(),
                row.tickets.to_string(),
                row.studies.to_string(),
                format!("{:.*}", decimals, row.avg_hours_per_study),
                self.hours_basis.clone(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Summary over all logged hours.
pub fn corpus_summary(corpus: &Corpus, archive_allow_list: &[String]) -> Result<CorpusSummary, CorpusError> {
    corpus_summary_with(corpus, archive_allow_list, "all_logged", Ticket::logged_hours)
}

/// Summary where `hours_of` decides which hours count for each ticket.
pub fn corpus_summary_with<F>(
    corpus: &Corpus,
    archive_allow_list: &[String],
    hours_basis: &str,
    hours_of: F,
) -> Result<CorpusSummary, CorpusError>
where
    F: Fn(&Ticket) -> Hours,
{
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut rows = Vec::new();
    for dimension in [Dimension::Level, Dimension::Archive, Dimension::Year] {
        let mut groups: BTreeMap<String, (usize, BTreeSet<&str>, Hours)> = BTreeMap::new();
        for ticket in &corpus.tickets {
            let slot = groups
                .entry(dimension.group_of(ticket, archive_allow_list))
                .or_insert_with(|| (0, BTreeSet::new(), Hours::ZERO));
            slot.0 += 1;
            slot.1.insert(&ticket.study_id);
            slot.2 += hours_of(ticket);
        }
        for (group, (tickets, studies, hours)) in groups {
            rows.push(SummaryRow {
                dimension,
                group,
                tickets,
                studies: studies.len(),
                total_hours: hours,
                avg_hours_per_study: hours.as_f64() / studies.len() as f64,
            });
        }
    }
    Ok(CorpusSummary {
        total_tickets: corpus.len(),
        total_studies: corpus.study_ids().len(),
        hours_basis: hours_basis.to_string(),
        rows,
    })
}
