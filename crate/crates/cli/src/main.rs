//! `curation`: the work-log mining pipeline from the command line.

mod support;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use curation_core::analytics::{
    action_proportions_by, action_report, curation_hours_by_ticket, predict_corpus, read_predictions,
    write_plot_csv, write_predictions, Attribution, ProportionWeighting,
};
use curation_core::annotation::{
    export_brat, import_brat, label_distribution, stratified_split, ActionClass, BratOptions, LabelSet, SplitMode,
};
use curation_core::corpus::{
    corpus_summary, corpus_summary_with, deidentify, filter_corpus, ingest_tickets, parse_date, Dimension,
    FilterCriteria, InputFormat,
};
use curation_core::evaluation::{compare_models, confusion_matrix, metrics, Averaging, MetricsReport};
use curation_core::fingerprint::short_digest;
use curation_core::models::{train, ModelKind, ModelOptions, TrainedModel};
use curation_core::segmenter::segment_corpus;
use curation_core::synth::{self, CorpusOptions};
use curation_core::{svg, FeatureSpace, Hours};
use serde_json::json;

use support::*;

#[derive(Parser)]
#[command(name = "curation", version, about = "Mine curation actions from ticket work logs")]
struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Table3,
    Table4,
    Fig2,
    Fig4,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw tickets and write a normalized corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the input's extension.
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write rejected records as JSON lines.
        #[arg(long)]
        errors: Option<PathBuf>,
        /// Keep tickets created on or after this date (YYYY-MM-DD).
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        /// Drop tickets without work-log entries.
        #[arg(long)]
        require_worklog: bool,
    },
    /// Replace listed curator names with stable pseudonyms.
    Deidentify {
        #[arg(long)]
        corpus: PathBuf,
        /// One name per line.
        #[arg(long)]
        names: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Name-to-pseudonym CSV. Keep it private.
        #[arg(long)]
        map: PathBuf,
    },
    /// Split work-log descriptions into fragments with apportioned hours.
    Segment {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert BRAT standoff annotations into a label file.
    ImportLabels {
        /// Directory of `<name>.ann` / `<name>.txt` pairs.
        #[arg(long, conflicts_with_all = ["ann", "txt"])]
        brat_dir: Option<PathBuf>,
        #[arg(long, requires = "txt")]
        ann: Vec<PathBuf>,
        #[arg(long, requires = "ann")]
        txt: Vec<PathBuf>,
        #[arg(long, default_value = "CURATOR-001")]
        annotator: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Stratified train/test split of a label file.
    Split {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long, value_parser = parse_split_mode)]
        mode: Option<SplitMode>,
    },
    /// Fit features and a classifier on labeled fragments.
    Train {
        /// dummy (baseline), cnb or sgd; defaults to `model.kind`.
        #[arg(long, value_parser = parse_model_kind)]
        model: Option<ModelKind>,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the fitted feature space as text.
        #[arg(long)]
        features_out: Option<PathBuf>,
    },
    /// Score one or more models on a labeled test set.
    Evaluate {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        labels: PathBuf,
        /// Feature space to use instead of the one bundled with each model.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_parser = parse_averaging)]
        averaging: Option<Averaging>,
        /// Full reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comparison table as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Directory for `<model>.confusion.csv` files.
        #[arg(long)]
        confusion_dir: Option<PathBuf>,
    },
    /// Label every fragment with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fragments: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate tables and chart data.
    Report {
        #[arg(long, value_enum)]
        kind: ReportKind,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Grouping for fig4.
        #[arg(long, value_parser = parse_dimension, default_value = "level")]
        by: Dimension,
        #[arg(long, value_parser = parse_weighting)]
        weighting: Option<ProportionWeighting>,
        #[arg(long, value_parser = parse_attribution)]
        attribution: Option<Attribution>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run the labeling and review HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        fragments: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Built UI bundle to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        compact_every: usize,
    },
    /// Generate synthetic tickets and labels with known classes.
    Synth {
        #[arg(long)]
        labels_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = synth::DEFAULT_NOISE)]
        noise: f64,
        #[arg(long)]
        corpus_out: Option<PathBuf>,
        /// Ground-truth labels for `--corpus-out`, as CSV.
        #[arg(long, requires = "corpus_out")]
        truth_out: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        tickets: usize,
        /// Write the labels as a BRAT `.ann`/`.txt` pair with this stem.
        #[arg(long, requires = "labels_out")]
        brat_out: Option<PathBuf>,
    },
}

fn parse_model_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: curation_core::models::ModelError| e.to_string())
}

fn parse_split_mode(s: &str) -> Result<SplitMode, String> {
    match s {
        "fragment" => Ok(SplitMode::Fragment),
        "ticket" => Ok(SplitMode::Ticket),
        other => Err(format!("unknown split mode {other:?} (expected fragment or ticket)")),
    }
}

fn parse_averaging(s: &str) -> Result<Averaging, String> {
    s.parse()
}

fn parse_dimension(s: &str) -> Result<Dimension, String> {
    s.parse()
}

fn parse_weighting(s: &str) -> Result<ProportionWeighting, String> {
    s.parse()
}

fn parse_attribution(s: &str) -> Result<Attribution, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let ctx = Context::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Ingest {
            input,
            format,
            out,
            errors,
            from,
            to,
            require_worklog,
        } => ingest(&ctx, &input, format, &out, errors.as_deref(), from, to, require_worklog),
        Command::Deidentify { corpus, names, out, map } => deidentify_cmd(&ctx, &corpus, &names, &out, &map),
        Command::Segment { corpus, out } => segment(&ctx, &corpus, &out),
        Command::ImportLabels {
            brat_dir,
            ann,
            txt,
            annotator,
            out,
            errors,
        } => import_labels(&ctx, brat_dir.as_deref(), &ann, &txt, &annotator, &out, errors.as_deref()),
        Command::Split {
            labels,
            train,
            test,
            test_fraction,
            mode,
        } => split(&ctx, &labels, &train, &test, test_fraction, mode),
        Command::Train {
            model,
            labels,
            out,
            features_out,
        } => train_cmd(&ctx, model, &labels, &out, features_out.as_deref()),
        Command::Evaluate {
            models,
            labels,
            features,
            averaging,
            out,
            table,
            confusion_dir,
        } => evaluate(
            &ctx,
            &models,
            &labels,
            features.as_deref(),
            averaging,
            out.as_deref(),
            table.as_deref(),
            confusion_dir.as_deref(),
        ),
        Command::Predict {
            model,
            fragments,
            features,
            out,
        } => predict(&ctx, &model, &fragments, features.as_deref(), &out),
        Command::Report {
            kind,
            corpus,
            predictions,
            labels,
            by,
            weighting,
            attribution,
            out,
            json,
            svg,
        } => report(
            &ctx,
            ReportArgs {
                kind,
                corpus,
                predictions,
                labels,
                by,
                weighting,
                attribution,
                out,
                json,
                svg,
            },
        ),
        Command::Serve {
            addr,
            data_dir,
            fragments,
            corpus,
            static_dir,
            compact_every,
        } => serve(ctx, addr, data_dir, fragments, corpus, static_dir, compact_every),
        Command::Synth {
            labels_out,
            n,
            noise,
            corpus_out,
            truth_out,
            tickets,
            brat_out,
        } => synth_cmd(&ctx, labels_out.as_deref(), n, noise, corpus_out.as_deref(), truth_out.as_deref(), tickets, brat_out.as_deref()),
    }
}

fn parse_day(raw: &str) -> CliResult<chrono::NaiveDate> {
    parse_date(raw).map_err(|e| CliError::new("usage", e))
}

#[allow(clippy::too_many_arguments)]
fn ingest(
    ctx: &Context,
    input: &Path,
    format: Option<Format>,
    out: &Path,
    errors_out: Option<&Path>,
    from: Option<String>,
    to: Option<String>,
    require_worklog: bool,
) -> CliResult {
    let bytes = read_input(input)?;
    let format = format_for(
        input,
        format.map(|f| match f {
            Format::Jsonl => InputFormat::Jsonl,
            Format::Csv => InputFormat::Csv,
        }),
    );
    let ingested = ingest_tickets(bytes.as_slice(), format).map_err(|e| CliError::at("corpus", input, e))?;
    let mut corpus = ingested.corpus;
    corpus.provenance.source = file_name(input);
    corpus.provenance.source_digest = Some(short_digest(&bytes));
    corpus.provenance.ingested_at = build_timestamp();

    let section = &ctx.config.corpus;
    let criteria = FilterCriteria {
        created_from: from
            .or_else(|| section.created_from.clone())
            .map(|d| parse_day(&d))
            .transpose()?,
        created_to: to.or_else(|| section.created_to.clone()).map(|d| parse_day(&d)).transpose()?,
        require_worklog: require_worklog || section.require_worklog,
    };
    if criteria != FilterCriteria::default() {
        corpus = filter_corpus(&corpus, &criteria)?;
    }
    for e in &ingested.errors {
        eprintln!("{}", json!({"warning": "rejected_record", "line": e.line, "ticket_id": e.ticket_id, "message": e.message}));
    }
    if let Some(path) = errors_out {
        let mut text = String::new();
        for e in &ingested.errors {
            text.push_str(&serde_json::to_string(e).expect("record error serializes"));
            text.push('\n');
        }
        write_atomic(path, text.as_bytes())?;
    }
    write_atomic(out, &to_bytes(|b| corpus.write_jsonl(b))?)?;
    ctx.write_meta(
        out,
        "ingest",
        &[input],
        json!({"provenance": corpus.provenance, "tickets": corpus.len(), "rejected": ingested.errors.len()}),
    )
}

fn deidentify_cmd(ctx: &Context, corpus_path: &Path, names_path: &Path, out: &Path, map_path: &Path) -> CliResult {
    let corpus = load_corpus(corpus_path)?;
    let names: Vec<String> = read_text(names_path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    let result = deidentify(&corpus, &names)?;
    write_atomic(out, &to_bytes(|b| result.corpus.write_jsonl(b))?)?;
    write_atomic(map_path, &to_bytes(|b| result.map.write_csv(b))?)?;
    ctx.write_meta(
        out,
        "deidentify",
        &[corpus_path, names_path],
        json!({"names": result.map.len(), "unused_names": result.unused.len()}),
    )
}

fn segment(ctx: &Context, corpus_path: &Path, out: &Path) -> CliResult {
    let corpus = load_corpus(corpus_path)?;
    let set = segment_corpus(&corpus);
    write_atomic(out, &to_bytes(|b| set.write_jsonl(b))?)?;
    ctx.write_meta(
        out,
        "segment",
        &[corpus_path],
        json!({
            "fragments": set.len(),
            "fragment_hours": set.total_hours(),
            "unattributable_hours": set.unattributable_hours,
            "empty_entries": set.empty_entries,
        }),
    )
}

fn brat_pairs(dir: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::at("missing_input", dir, format!("no such directory: {}", dir.display())),
        _ => CliError::at("io", dir, e),
    })?;
    let mut anns: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ann"))
        .collect();
    anns.sort();
    Ok(anns
        .into_iter()
        .map(|ann| {
            let txt = ann.with_extension("txt");
            (ann, txt)
        })
        .collect())
}

fn import_labels(
    ctx: &Context,
    brat_dir: Option<&Path>,
    ann: &[PathBuf],
    txt: &[PathBuf],
    annotator: &str,
    out: &Path,
    errors_out: Option<&Path>,
) -> CliResult {
    let pairs = match brat_dir {
        Some(dir) => brat_pairs(dir)?,
        None => {
            if ann.len() != txt.len() {
                return Err(CliError::new("usage", "--ann and --txt must be given the same number of times"));
            }
            ann.iter().cloned().zip(txt.iter().cloned()).collect()
        }
    };
    if pairs.is_empty() {
        return Err(CliError::new("usage", "no BRAT documents given"));
    }
    let mut set = LabelSet::new();
    let mut error_lines = String::new();
    let mut inputs = Vec::new();
    for (ann_path, txt_path) in &pairs {
        let doc_id = ann_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "doc".into());
        let options = BratOptions {
            doc_id: doc_id.clone(),
            annotator: annotator.to_string(),
            ..BratOptions::default()
        };
        let imported = import_brat(&read_text(ann_path)?, &read_text(txt_path)?, &options);
        for e in &imported.errors {
            let line = json!({"warning": "brat_line", "file": file_name(ann_path), "line": e.line, "message": e.message});
            eprintln!("{line}");
            error_lines.push_str(&line.to_string());
            error_lines.push('\n');
        }
        for fragment in imported.fragments {
            set.upsert(fragment);
        }
        inputs.push(ann_path.clone());
        inputs.push(txt_path.clone());
    }
    if let Some(path) = errors_out {
        write_atomic(path, error_lines.as_bytes())?;
    }
    write_atomic(out, &to_bytes(|b| set.write_jsonl(b))?)?;
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.write_meta(
        out,
        "import-labels",
        &refs,
        json!({"labels": set.len(), "line_errors": error_lines.lines().count(), "distribution": label_distribution(&set)}),
    )
}

fn split(
    ctx: &Context,
    labels_path: &Path,
    train_out: &Path,
    test_out: &Path,
    test_fraction: Option<f64>,
    mode: Option<SplitMode>,
) -> CliResult {
    let labels = load_labels(labels_path)?;
    let fraction = test_fraction.unwrap_or(ctx.config.split.test_fraction);
    let mode = mode.unwrap_or(ctx.config.split.mode);
    let result = stratified_split(&labels, fraction, ctx.config.seed, mode)?;
    for w in &result.warnings {
        eprintln!("{}", json!({"warning": "split", "message": w}));
    }
    write_atomic(train_out, &to_bytes(|b| result.train.write_jsonl(b))?)?;
    write_atomic(test_out, &to_bytes(|b| result.test.write_jsonl(b))?)?;
    let extra = json!({"test_fraction": fraction, "mode": mode, "train": result.train.len(), "test": result.test.len(), "warnings": result.warnings});
    ctx.write_meta(train_out, "split", &[labels_path], extra.clone())?;
    ctx.write_meta(test_out, "split", &[labels_path], extra)
}

fn train_cmd(
    ctx: &Context,
    kind: Option<ModelKind>,
    labels_path: &Path,
    out: &Path,
    features_out: Option<&Path>,
) -> CliResult {
    let labels = load_labels(labels_path)?;
    let kind = kind.unwrap_or(ctx.config.model.kind);
    let space = FeatureSpace::fit(&labels.texts(), ctx.config.feature_config()?)
        .map_err(|e| CliError::at("features", labels_path, e))?;
    let x = space.transform(&labels.texts());
    let options = ModelOptions {
        cnb: ctx.config.model.cnb,
        sgd: ctx.config.model.sgd.clone(),
    };
    let mut model = train(kind, &x, &labels.labels(), &options, ctx.config.seed)?;
    model.metadata.config_fingerprint = Some(ctx.fingerprint.clone());
    model.metadata.trained_at = build_timestamp();
    if let Some(path) = features_out {
        write_atomic(path, space.to_text().as_bytes())?;
        ctx.write_meta(path, "train", &[labels_path], json!({"feature_fingerprint": space.fingerprint()}))?;
    }
    let model = model.with_features(space);
    write_atomic(out, &model.to_bytes())
}

fn load_model(path: &Path) -> CliResult<TrainedModel> {
    let bytes = read_input(path)?;
    TrainedModel::load(bytes.as_slice()).map_err(|e| {
        let mut err = CliError::from(e);
        err.path = Some(path.to_path_buf());
        err
    })
}

fn load_space(path: Option<&Path>) -> CliResult<Option<FeatureSpace>> {
    path.map(|p| FeatureSpace::from_text(&read_text(p)?).map_err(|e| CliError::at("features", p, e)))
        .transpose()
}

fn model_title(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Dummy => "Baseline",
        ModelKind::Cnb => "Complement NB",
        ModelKind::Sgd => "SGD Classifier",
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    ctx: &Context,
    model_paths: &[PathBuf],
    labels_path: &Path,
    features: Option<&Path>,
    averaging: Option<Averaging>,
    out: Option<&Path>,
    table_out: Option<&Path>,
    confusion_dir: Option<&Path>,
) -> CliResult {
    let test_bytes = read_input(labels_path)?;
    let test = load_labels(labels_path)?;
    let test_fingerprint = short_digest(&test_bytes);
    let override_space = load_space(features)?;
    let mut reports: Vec<MetricsReport> = Vec::new();
    let mut titles: BTreeMap<String, usize> = BTreeMap::new();
    for path in model_paths {
        let model = load_model(path)?;
        let space = override_space
            .as_ref()
            .or(model.features.as_ref())
            .ok_or_else(|| CliError::at("features", path, "model has no bundled feature space; pass --features"))?;
        let x = space.transform(&test.texts());
        let predicted = model.predict(&x)?;
        let cm = confusion_matrix(&test.labels(), &predicted, &ActionClass::ALL)
            .map_err(|e| CliError::new("evaluation", e))?;
        let mut title = model_title(model.kind()).to_string();
        let seen = titles.entry(title.clone()).or_insert(0);
        *seen += 1;
        if *seen > 1 {
            title = format!("{title} ({})", file_name(path));
        }
        if let Some(dir) = confusion_dir {
            std::fs::create_dir_all(dir).map_err(|e| CliError::at("io", dir, e))?;
            let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            let target = dir.join(format!("{stem}.confusion.csv"));
            write_atomic(&target, &to_bytes(|b| cm.write_csv(b))?)?;
        }
        reports.push(metrics(&cm, &title, &test_fingerprint).map_err(|e| CliError::new("evaluation", e))?);
    }
    let averaging = averaging.unwrap_or(ctx.config.report.averaging);
    let table = compare_models(&reports, averaging).map_err(|e| CliError::new("evaluation", e))?;
    print!("{}", table.to_text(2));
    let mut inputs: Vec<&Path> = model_paths.iter().map(PathBuf::as_path).collect();
    inputs.push(labels_path);
    if let Some(path) = table_out {
        write_atomic(path, &to_bytes(|b| table.write_csv(b, ctx.config.report.decimals.max(2)))?)?;
        ctx.write_meta(path, "evaluate", &inputs, json!({"averaging": averaging}))?;
    }
    if let Some(path) = out {
        let body = json!({"averaging": averaging, "comparison": table, "reports": reports});
        let mut text = serde_json::to_string_pretty(&body).expect("reports serialize");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        ctx.write_meta(path, "evaluate", &inputs, json!({}))?;
    }
    Ok(())
}

fn predict(ctx: &Context, model_path: &Path, fragments_path: &Path, features: Option<&Path>, out: &Path) -> CliResult {
    let model = load_model(model_path)?;
    let fragments = load_fragments(fragments_path)?;
    let space = load_space(features)?;
    let predicted = predict_corpus(&model, &fragments, space.as_ref()).map_err(|e| match e {
        curation_core::analytics::AnalyticsError::Model(m) => CliError::from(m),
        other => CliError::new("predict", other),
    })?;
    write_atomic(out, &to_bytes(|b| write_predictions(&predicted, b))?)?;
    let low = predicted.iter().filter(|p| p.low_confidence).count();
    let mut counts = BTreeMap::new();
    for p in &predicted {
        *counts.entry(p.label.as_str()).or_insert(0usize) += 1;
    }
    ctx.write_meta(
        out,
        "predict",
        &[model_path, fragments_path],
        json!({"fragments": predicted.len(), "low_confidence": low, "counts": counts, "model": model.kind()}),
    )
}

struct ReportArgs {
    kind: ReportKind,
    corpus: Option<PathBuf>,
    predictions: Option<PathBuf>,
    labels: Option<PathBuf>,
    by: Dimension,
    weighting: Option<ProportionWeighting>,
    attribution: Option<Attribution>,
    out: Option<PathBuf>,
    json: Option<PathBuf>,
    svg: Option<PathBuf>,
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, kind: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::new("usage", format!("report --kind {kind} needs --{flag}")))
}

fn emit_csv(ctx: &Context, csv: Vec<u8>, out: Option<&Path>, inputs: &[&Path], extra: serde_json::Value) -> CliResult {
    match out {
        Some(path) => {
            write_atomic(path, &csv)?;
            ctx.write_meta(path, "report", inputs, extra)
        }
        None => {
            print!("{}", String::from_utf8_lossy(&csv));
            Ok(())
        }
    }
}

fn emit_json(ctx: &Context, value: &serde_json::Value, path: Option<&Path>, inputs: &[&Path]) -> CliResult {
    if let Some(path) = path {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        ctx.write_meta(path, "report", inputs, json!({}))?;
    }
    Ok(())
}

fn report(ctx: &Context, args: ReportArgs) -> CliResult {
    let cfg = &ctx.config.report;
    let analytics_err = |e: curation_core::analytics::AnalyticsError| CliError::new("report", e);
    match args.kind {
        ReportKind::Table3 => {
            let corpus_path = required(&args.corpus, "corpus", "table3")?;
            let corpus = load_corpus(corpus_path)?;
            let mut inputs = vec![corpus_path];
            let summary = match &args.predictions {
                None => corpus_summary(&corpus, &cfg.archives)?,
                Some(p) => {
                    let predicted = read_predictions(read_input(p)?.as_slice()).map_err(analytics_err)?;
                    inputs.push(p);
                    let hours = curation_hours_by_ticket(&predicted, &cfg.exclude);
                    corpus_summary_with(&corpus, &cfg.archives, "curation_only", |t| {
                        hours.get(&t.ticket_id).copied().unwrap_or(Hours::ZERO)
                    })?
                }
            };
            let csv = to_bytes(|b| summary.write_csv(b, cfg.decimals))?;
            emit_json(ctx, &json!(summary), args.json.as_deref(), &inputs)?;
            emit_csv(ctx, csv, args.out.as_deref(), &inputs, json!({"kind": "table3", "hours_basis": summary.hours_basis}))
        }
        ReportKind::Table4 => {
            let corpus_path = required(&args.corpus, "corpus", "table4")?;
            let pred_path = required(&args.predictions, "predictions", "table4")?;
            let corpus = load_corpus(corpus_path)?;
            let predicted = read_predictions(read_input(pred_path)?.as_slice()).map_err(analytics_err)?;
            let attribution = args.attribution.unwrap_or(cfg.attribution);
            let report = action_report(&predicted, &corpus, &cfg.exclude, attribution).map_err(analytics_err)?;
            let inputs = [corpus_path, pred_path];
            emit_json(ctx, &json!(report), args.json.as_deref(), &inputs)?;
            if let Some(path) = &args.svg {
                let bars: Vec<(String, f64)> = report
                    .rows
                    .iter()
                    .map(|r| (r.action.display_name().to_string(), (r.percent_of_hours * 10.0).round() / 10.0))
                    .collect();
                write_atomic(path, svg::bar_chart("Percent of work-log hours by action", &bars).as_bytes())?;
            }
            let csv = to_bytes(|b| report.write_csv(b, cfg.decimals))?;
            emit_csv(
                ctx,
                csv,
                args.out.as_deref(),
                &inputs,
                json!({"kind": "table4", "exclusion_policy": report.exclusion_policy, "attribution": attribution}),
            )
        }
        ReportKind::Fig2 => {
            let labels_path = required(&args.labels, "labels", "fig2")?;
            let dist = label_distribution(&load_labels(labels_path)?);
            let mut writer = csv::Writer::from_writer(Vec::new());
            let mut rows = Vec::new();
            for share in &dist.classes {
                rows.push((share.class.display_name().to_string(), share.count as f64));
                writer
                    .write_record([share.class.as_str().to_string(), share.count.to_string(), format!("{:.4}", share.proportion)])
                    .map_err(|e| CliError::new("io", e))?;
            }
            let body = writer.into_inner().map_err(|e| CliError::new("io", e))?;
            let mut csv = b"action,count,proportion\n".to_vec();
            csv.extend(body);
            if let Some(path) = &args.svg {
                write_atomic(path, svg::bar_chart("Labeled fragments per action", &rows).as_bytes())?;
            }
            emit_json(ctx, &json!(dist), args.json.as_deref(), &[labels_path])?;
            emit_csv(ctx, csv, args.out.as_deref(), &[labels_path], json!({"kind": "fig2"}))
        }
        ReportKind::Fig4 => {
            let corpus_path = required(&args.corpus, "corpus", "fig4")?;
            let pred_path = required(&args.predictions, "predictions", "fig4")?;
            let corpus = load_corpus(corpus_path)?;
            let predicted = read_predictions(read_input(pred_path)?.as_slice()).map_err(analytics_err)?;
            let weighting = args.weighting.unwrap_or(cfg.proportions);
            let grouped = action_proportions_by(&predicted, &corpus, args.by, &cfg.exclude, weighting, &cfg.archives)
                .map_err(analytics_err)?;
            for w in &grouped.warnings {
                eprintln!("{}", json!({"warning": "fig4", "message": w}));
            }
            let inputs = [corpus_path, pred_path];
            if let Some(path) = &args.svg {
                let series: Vec<ActionClass> = ActionClass::ALL.into_iter().filter(|c| !cfg.exclude.contains(c)).collect();
                let names: Vec<String> = series.iter().map(|c| c.display_name().to_string()).collect();
                let groups: Vec<(String, Vec<f64>)> = grouped
                    .groups
                    .iter()
                    .map(|g| (g.group.clone(), series.iter().map(|c| g.proportions[c]).collect()))
                    .collect();
                let title = format!("Action proportions by {}", args.by);
                write_atomic(path, svg::stacked_bar_chart(&title, &names, &groups).as_bytes())?;
            }
            emit_json(ctx, &json!(grouped), args.json.as_deref(), &inputs)?;
            let csv = to_bytes(|b| write_plot_csv(&grouped.plot_rows(), b))?;
            emit_csv(
                ctx,
                csv,
                args.out.as_deref(),
                &inputs,
                json!({"kind": "fig4", "by": args.by, "weighting": weighting, "warnings": grouped.warnings}),
            )
        }
    }
}

fn serve(
    ctx: Context,
    addr: SocketAddr,
    data_dir: PathBuf,
    fragments: Option<PathBuf>,
    corpus: Option<PathBuf>,
    static_dir: Option<PathBuf>,
    compact_every: usize,
) -> CliResult {
    let corpus = corpus.as_deref().map(load_corpus).transpose()?;
    let fragments = match (&fragments, &corpus) {
        (Some(path), _) => load_fragments(path)?,
        (None, Some(c)) => segment_corpus(c),
        (None, None) => return Err(CliError::new("usage", "serve needs --fragments or --corpus")),
    };
    if let Some(dir) = &static_dir {
        if !dir.is_dir() {
            return Err(CliError::at("missing_input", dir, format!("no such directory: {}", dir.display())));
        }
    }
    let options = curation_service::ServiceOptions {
        data_dir,
        fragments,
        corpus,
        static_dir,
        config: ctx.config,
        compact_every,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io", e))?;
    eprintln!("{}", json!({"listening": addr.to_string()}));
    runtime
        .block_on(curation_service::serve(addr, options))
        .map_err(|e| CliError::new("serve", e))
}

#[allow(clippy::too_many_arguments)]
fn synth_cmd(
    ctx: &Context,
    labels_out: Option<&Path>,
    n: usize,
    noise: f64,
    corpus_out: Option<&Path>,
    truth_out: Option<&Path>,
    tickets: usize,
    brat_out: Option<&Path>,
) -> CliResult {
    if labels_out.is_none() && corpus_out.is_none() {
        return Err(CliError::new("usage", "synth needs --labels-out and/or --corpus-out"));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(CliError::new("usage", "--noise must be within [0, 1]"));
    }
    if let Some(path) = labels_out {
        let set = synth::labeled_fragments(n, noise, ctx.config.seed);
        write_atomic(path, &to_bytes(|b| set.write_jsonl(b))?)?;
        ctx.write_meta(path, "synth", &[], json!({"labels": n, "noise": noise}))?;
        if let Some(stem) = brat_out {
            let (ann, txt) = export_brat(&set)?;
            write_atomic(&stem.with_extension("ann"), ann.as_bytes())?;
            write_atomic(&stem.with_extension("txt"), txt.as_bytes())?;
        }
    }
    if let Some(path) = corpus_out {
        let generated = synth::corpus(&CorpusOptions {
            tickets,
            noise,
            seed: ctx.config.seed,
            ..CorpusOptions::default()
        });
        write_atomic(path, &to_bytes(|b| generated.corpus.write_jsonl(b))?)?;
        ctx.write_meta(path, "synth", &[], json!({"tickets": tickets, "noise": noise}))?;
        if let Some(truth_path) = truth_out {
            let mut text = String::from("fragment_id,label\n");
            for (id, class) in &generated.truth {
                text.push_str(&format!("{id},{}\n", class.as_str()));
            }
            write_atomic(truth_path, text.as_bytes())?;
        }
    }
    Ok(())
}
