//! Error reporting, input loading and atomic artifact writes.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use curation_core::annotation::{AnnotationError, LabelSet};
use curation_core::config::{Config, ConfigError};
use curation_core::corpus::{ingest_tickets, Corpus, CorpusError, InputFormat};
use curation_core::fingerprint::short_digest;
use curation_core::models::ModelError;
use curation_core::FragmentSet;
use serde_json::{json, Map, Value};

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub path: Option<PathBuf>,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Display) -> CliError {
        CliError {
            code,
            message: message.to_string(),
            path: None,
        }
    }

    pub fn at(code: &'static str, path: &Path, message: impl Display) -> CliError {
        CliError {
            code,
            message: message.to_string(),
            path: Some(path.to_path_buf()),
        }
    }

    pub fn to_line(&self) -> String {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some(p) = &self.path {
            body["path"] = json!(p.display().to_string());
        }
        body.to_string()
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::FeatureSpaceMismatch { .. } => "feature_space_mismatch",
            ModelError::VersionMismatch { .. } | ModelError::UnsupportedVariant(_) | ModelError::Corrupt(_) => {
                "model_format"
            }
            _ => "model",
        };
        CliError::new(code, e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new("config", e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::new("corpus", e)
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        CliError::new("labels", e)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::at("missing_input", path, format!("no such file: {}", path.display())),
        _ => CliError::at("io", path, e),
    })
}

pub fn read_text(path: &Path) -> CliResult<String> {
    String::from_utf8(read_input(path)?).map_err(|e| CliError::at("io", path, e))
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::at("io", path, e);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Settings shared by every command: the resolved config and where it came
/// from.
pub struct Context {
    pub config: Config,
    pub fingerprint: String,
}

impl Context {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> CliResult<Context> {
        let mut config = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(CliError::at("missing_input", p, format!("no such file: {}", p.display())));
                }
                Config::load(p)?
            }
            None => Config::default(),
        };
        if let Some(seed) = seed {
            config.seed = seed;
        }
        let fingerprint = config.fingerprint()?;
        Ok(Context { config, fingerprint })
    }

    /// Writes `<artifact>.meta.json` naming the command, config fingerprint,
    /// seed and input digests. Paths are reduced to file names so the sidecar
    /// does not depend on the working directory.
    pub fn write_meta(&self, artifact: &Path, command: &str, inputs: &[&Path], extra: Value) -> CliResult {
        let mut digests = Map::new();
        for input in inputs {
            digests.insert(file_name(input), json!(short_digest(&read_input(input)?)));
        }
        let mut meta = json!({
            "command": command,
            "config_fingerprint": self.fingerprint,
            "seed": self.config.seed,
            "inputs": digests,
            "artifact_digest": short_digest(&read_input(artifact)?),
        });
        if let Value::Object(fields) = extra {
            for (k, v) in fields {
                meta[k] = v;
            }
        }
        let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        text.push('\n');
        let mut name = artifact.as_os_str().to_owned();
        name.push(".meta.json");
        write_atomic(Path::new(&name), text.as_bytes())
    }
}

pub fn format_for(path: &Path, explicit: Option<InputFormat>) -> InputFormat {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
        _ => InputFormat::Jsonl,
    })
}

/// Loads a corpus; any invalid record is fatal here since the file should
/// come out of `ingest`.
pub fn load_corpus(path: &Path) -> CliResult<Corpus> {
    let bytes = read_input(path)?;
    let ingested = ingest_tickets(bytes.as_slice(), format_for(path, None)).map_err(|e| CliError::at("corpus", path, e))?;
    if let Some(first) = ingested.errors.first() {
        return Err(CliError::at("corpus", path, first));
    }
    Ok(ingested.corpus)
}

pub fn load_labels(path: &Path) -> CliResult<LabelSet> {
    let bytes = read_input(path)?;
    LabelSet::read_jsonl(bytes.as_slice()).map_err(|e| CliError::at("labels", path, e))
}

pub fn load_fragments(path: &Path) -> CliResult<FragmentSet> {
    let bytes = read_input(path)?;
    FragmentSet::read_jsonl(bytes.as_slice()).map_err(|e| CliError::at("fragments", path, e))
}

pub fn to_bytes<E: Display>(f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::new("io", e))?;
    Ok(buf)
}

/// `SOURCE_DATE_EPOCH` as an RFC 3339 timestamp, if set.
pub fn build_timestamp() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()?;
    chrono::DateTime::from_timestamp(secs, 0).map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}
