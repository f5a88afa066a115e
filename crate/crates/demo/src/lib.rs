//! Browser demo: segmentation, a TF-IDF term explorer, and a classifier
//! trained on generated fragments. Each export returns a JSON string; the
//! plain `*_json` functions do the work and are tested natively.

use std::cell::OnceCell;

use curation_core::features::{apply_tfidf, fit_vocabulary, top_terms_by_tfidf, vectorize, TermAggregate, Weighting};
use curation_core::models::{train, ModelKind, ModelOptions, TrainedModel};
use curation_core::segmenter::segment_entry;
use curation_core::synth;
use curation_core::{FeatureConfig, FeatureSpace};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const DEMO_SEED: u64 = 42;
const DEMO_LABELS: usize = 800;

#[derive(Serialize)]
struct SegmentOut<'a> {
    text: &'a str,
    start: usize,
    end: usize,
    hours: f64,
}

/// Segments one work-log description and splits `hours` evenly across the
/// pieces.
pub fn segment_json(description: &str, hours: f64) -> String {
    let segments = segment_entry(description);
    let share = if segments.is_empty() { 0.0 } else { hours / segments.len() as f64 };
    let out: Vec<SegmentOut> = segments
        .iter()
        .map(|s| SegmentOut {
            text: &s.text,
            start: s.span.start,
            end: s.span.end,
            hours: share,
        })
        .collect();
    serde_json::to_string(&out).expect("segments serialize")
}

/// Treats each non-empty line as a document and ranks terms by their highest
/// TF-IDF weight.
pub fn top_terms_json(docs: &str, k: usize) -> String {
    let docs: Vec<&str> = docs.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let config = FeatureConfig::default();
    let ranked = fit_vocabulary(&docs, &config).and_then(|vocab| {
        let counts = vectorize(&docs, &vocab, &FeatureConfig { weighting: Weighting::Counts, ..config.clone() });
        let tfidf = apply_tfidf(&counts, &vocab)?;
        Ok(top_terms_by_tfidf(&tfidf, &vocab, k, TermAggregate::Max))
    });
    match ranked {
        Ok(terms) => {
            let rows: Vec<_> = terms.iter().map(|(t, w)| json!({"term": t, "weight": w})).collect();
            json!({"docs": docs.len(), "terms": rows}).to_string()
        }
        Err(e) => json!({"error": e.to_string()}).to_string(),
    }
}

fn demo_model() -> TrainedModel {
    let labels = synth::labeled_fragments(DEMO_LABELS, synth::DEFAULT_NOISE, DEMO_SEED);
    let space = FeatureSpace::fit(&labels.texts(), FeatureConfig::default()).expect("generated labels have terms");
    let x = space.transform(&labels.texts());
    train(ModelKind::Cnb, &x, &labels.labels(), &ModelOptions::default(), DEMO_SEED)
        .expect("generated labels cover every class")
        .with_features(space)
}

/// Classifies each segment of `description` with `model`.
pub fn classify_with(model: &TrainedModel, description: &str) -> String {
    let segments = segment_entry(description);
    let texts: Vec<&str> = segments.iter().map(|s| s.text.as_str()).collect();
    if texts.is_empty() {
        return "[]".into();
    }
    let space = model.features.as_ref().expect("demo model bundles its features");
    let predictions = match model.predict_detailed(&space.transform(&texts)) {
        Ok(p) => p,
        Err(e) => return json!({"error": e.to_string()}).to_string(),
    };
    let rows: Vec<_> = texts
        .iter()
        .zip(predictions)
        .map(|(text, p)| {
            json!({
                "text": text,
                "label": p.label.as_str(),
                "display": p.label.display_name(),
                "low_confidence": p.low_confidence,
            })
        })
        .collect();
    serde_json::Value::Array(rows).to_string()
}

thread_local! {
    static MODEL: OnceCell<TrainedModel> = const { OnceCell::new() };
}

#[wasm_bindgen]
pub fn segment(description: &str, hours: f64) -> String {
    segment_json(description, hours)
}

#[wasm_bindgen]
pub fn top_terms(docs: &str, k: usize) -> String {
    top_terms_json(docs, k)
}

/// The model is trained on first use and kept for the page's lifetime.
#[wasm_bindgen]
pub fn classify(description: &str) -> String {
    MODEL.with(|cell| classify_with(cell.get_or_init(demo_model), description))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn segments_and_shares_hours() {
        let v: Value = serde_json::from_str(&segment_json("Reviewed deposit. Drafted plan.", 1.0)).unwrap();
        assert_eq!(v[0]["text"], "Reviewed deposit");
        assert_eq!(v[1]["text"], "Drafted plan");
        assert_eq!(v[1]["hours"], 0.5);
        assert_eq!(segment_json("", 2.0), "[]");
    }

    #[test]
    fn rare_terms_rank_first() {
        let v: Value = serde_json::from_str(&top_terms_json("study self checks\nstudy labels\nstudy labels fixed", 3)).unwrap();
        let terms: Vec<&str> = v["terms"].as_array().unwrap().iter().map(|t| t["term"].as_str().unwrap()).collect();
        assert!(!terms.contains(&"study"));
        assert_eq!(v["docs"], 3);
        let empty: Value = serde_json::from_str(&top_terms_json("", 3)).unwrap();
        assert!(empty["error"].is_string());
    }

    #[test]
    fn classifies_generated_vocabulary() {
        let v: Value = serde_json::from_str(&classify("Emailed depositor about missing files")).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 1);
        assert!(v[0]["label"].is_string());
        assert_eq!(classify(""), "[]");
    }
}
