//! Confusion matrices, per-class metrics and model comparison tables.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::annotation::ActionClass;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no instances to evaluate")]
    Empty,
    #[error("label {0} is not in the class list")]
    UnknownLabel(ActionClass),
    #[error("reports were computed on different test sets: {0} vs {1}")]
    TestSetMismatch(String, String),
    #[error("no reports to compare")]
    NoReports,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ActionClass>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion_matrix(
    y_true: &[ActionClass],
    y_pred: &[ActionClass],
    classes: &[ActionClass],
) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let position = |label: ActionClass| {
        classes
            .iter()
            .position(|&c| c == label)
            .ok_or(EvalError::UnknownLabel(label))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[position(t)?][position(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Row sums: instances whose true label is each class.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn predicted_totals(&self) -> Vec<u64> {
        (0..self.classes.len())
            .map(|j| self.counts.iter().map(|row| row[j]).sum())
            .collect()
    }

    /// CSV with a `true\predicted` corner cell and class headers.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.classes.iter().map(|c| c.to_string()));
        writer.write_record(&header)?;
        for (class, row) in self.classes.iter().zip(&self.counts) {
            let mut record = vec![class.to_string()];
            record.extend(row.iter().map(u64::to_string));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ActionClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the metric was 0/0 and reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    /// Identifies the test set; comparisons require equal values.
    pub test_fingerprint: String,
    pub n: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted: Averages,
}

/// A metric kept as a ratio so support-weighted sums stay exact where the
/// algebra allows it.
#[derive(Clone, Copy)]
struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    fn value(self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }

    /// `support * num / den`; equals `num` exactly when `den == support`.
    fn weighted_by(self, support: u64) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            (support * self.num) as f64 / self.den as f64
        }
    }
}

/// Accuracy, per-class precision/recall/F1, and macro and support-weighted
/// averages. A 0/0 metric is reported as 0 and flagged.
pub fn metrics(cm: &ConfusionMatrix, model: &str, test_fingerprint: &str) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let support = cm.support();
    let predicted = cm.predicted_totals();
    let k = cm.classes.len();
    let mut per_class = Vec::with_capacity(k);
    let (mut w_precision, mut w_recall, mut w_f1) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = cm.counts[c][c];
        let precision = Ratio {
            num: tp,
            den: predicted[c],
        };
        let recall = Ratio { num: tp, den: support[c] };
        // F1 = 2TP / (2TP + FP + FN) = 2TP / (predicted + support).
        let f1 = Ratio {
            num: 2 * tp,
            den: predicted[c] + support[c],
        };
        w_precision += precision.weighted_by(support[c]);
        w_recall += recall.weighted_by(support[c]);
        w_f1 += f1.weighted_by(support[c]);
        per_class.push(ClassMetrics {
            class: cm.classes[c],
            precision: precision.value().unwrap_or(0.0),
            recall: recall.value().unwrap_or(0.0),
            f1: f1.value().unwrap_or(0.0),
            support: support[c],
            precision_undefined: precision.den == 0,
            recall_undefined: recall.den == 0,
            f1_undefined: f1.den == 0,
        });
    }
    let n = total as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    Ok(MetricsReport {
        model: model.to_string(),
        test_fingerprint: test_fingerprint.to_string(),
        n: total,
        accuracy: cm.trace() as f64 / n,
        macro_avg: Averages {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        weighted: Averages {
            precision: w_precision / n,
            recall: w_recall / n,
            f1: w_f1 / n,
        },
        per_class,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Weighted,
    Macro,
}

impl std::str::FromStr for Averaging {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted" => Ok(Averaging::Weighted),
            "macro" => Ok(Averaging::Macro),
            other => Err(format!("unknown averaging {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl ComparisonRow {
    fn column(&self, i: usize) -> f64 {
        match i {
            0 => self.accuracy,
            1 => self.f1,
            2 => self.precision,
            _ => self.recall,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub averaging: Averaging,
    pub rows: Vec<ComparisonRow>,
    /// For each column (accuracy, F1, precision, recall), the rows holding
    /// the best value; ties mark every tied row.
    pub best: [Vec<usize>; 4],
}

pub const COMPARISON_COLUMNS: [&str; 4] = ["Accuracy", "F1", "Precision", "Recall"];

pub fn compare_models(reports: &[MetricsReport], averaging: Averaging) -> Result<ComparisonTable, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    if let Some(other) = reports.iter().find(|r| r.test_fingerprint != first.test_fingerprint) {
        return Err(EvalError::TestSetMismatch(
            first.test_fingerprint.clone(),
            other.test_fingerprint.clone(),
        ));
    }
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| {
            let avg = match averaging {
                Averaging::Weighted => r.weighted,
                Averaging::Macro => r.macro_avg,
            };
            ComparisonRow {
                model: r.model.clone(),
                accuracy: r.accuracy,
                f1: avg.f1,
                precision: avg.precision,
                recall: avg.recall,
            }
        })
        .collect();
    let best = std::array::from_fn(|col| {
        let top = rows.iter().map(|r| r.column(col)).fold(f64::NEG_INFINITY, f64::max);
        (0..rows.len()).filter(|&i| rows[i].column(col) == top).collect()
    });
    Ok(ComparisonTable { averaging, rows, best })
}

impl ComparisonTable {
    fn is_best(&self, row: usize, col: usize) -> bool {
        self.best[col].contains(&row)
    }

    /// Aligned plain text; best values carry a trailing `*`.
    pub fn to_text(&self, decimals: usize) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .chain(["Classifier".len()])
            .max()
            .unwrap_or(10);
        let mut out = format!("{:<width$}", "Classifier");
        for name in COMPARISON_COLUMNS {
            let _ = write!(out, "  {name:>10}");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{:<width$}", row.model);
            for col in 0..4 {
                let mark = if self.is_best(i, col) { "*" } else { " " };
                let cell = format!("{:.*}{mark}", decimals, row.column(col));
                let _ = write!(out, "  {cell:>10}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W, decimals: usize) -> Result<(), EvalError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["Classifier", "Accuracy", "F1", "Precision", "Recall", "Best"])?;
        for (i, row) in self.rows.iter().enumerate() {
            let best: Vec<&str> = (0..4)
                .filter(|&c| self.is_best(i, c))
                .map(|c| COMPARISON_COLUMNS[c])
                .collect();
            let mut record = vec![row.model.clone()];
            record.extend((0..4).map(|c| format!("{:.*}", decimals, row.column(c))));
            record.push(best.join(";"));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ActionClass::*;

    const AB: [ActionClass; 2] = [DataTransformation, QualityChecks];

    #[test]
    fn counts_by_true_and_predicted() {
        let (a, b) = (AB[0], AB[1]);
        let cm = confusion_matrix(&[a, a, b], &[a, b, b], &AB).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let perfect = confusion_matrix(&[a, b, b], &[a, b, b], &AB).unwrap();
        assert_eq!(perfect.counts, vec![vec![1, 0], vec![0, 2]]);
        let single = confusion_matrix(&[b], &[a], &AB).unwrap();
        assert_eq!(single.total(), 1);
        assert_eq!(single.counts[1][0], 1);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion_matrix(&[Metadata], &[], &AB),
            Err(EvalError::LengthMismatch { .. })
        ));
        let err = confusion_matrix(&[Metadata], &[Metadata], &AB).unwrap_err();
        assert_eq!(err.to_string(), "label Metadata is not in the class list");
        assert!(matches!(confusion_matrix(&[], &[], &AB), Err(EvalError::Empty)));
    }

    #[test]
    fn hand_computed_metrics() {
        let cm = ConfusionMatrix {
            classes: AB.to_vec(),
            counts: vec![vec![1, 1], vec![0, 1]],
        };
        let r = metrics(&cm, "m", "t").unwrap();
        assert_eq!(r.accuracy, 2.0 / 3.0);
        assert_eq!(r.per_class[0].precision, 1.0);
        assert_eq!(r.per_class[1].precision, 0.5);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert_eq!(r.per_class[1].recall, 1.0);
        assert_eq!(r.per_class[0].f1, 2.0 / 3.0);
        assert_eq!(r.per_class[1].f1, 2.0 / 3.0);
        assert_eq!(r.macro_avg.f1, 2.0 / 3.0);
    }

    #[test]
    fn zero_over_zero_is_flagged() {
        let cm = ConfusionMatrix {
            classes: vec![Metadata, Other],
            counts: vec![vec![0, 2], vec![0, 3]],
        };
        let r = metrics(&cm, "m", "t").unwrap();
        assert_eq!(r.per_class[0].precision, 0.0);
        assert!(r.per_class[0].precision_undefined);
        assert!(!r.per_class[0].recall_undefined);
        assert!(!r.per_class[1].precision_undefined);
    }

    #[test]
    fn diagonal_and_off_diagonal_extremes() {
        let diag = ConfusionMatrix {
            classes: vec![Metadata, Other, Communication],
            counts: vec![vec![3, 0, 0], vec![0, 1, 0], vec![0, 0, 5]],
        };
        let r = metrics(&diag, "m", "t").unwrap();
        assert_eq!(r.macro_avg.f1, 1.0);
        assert_eq!((r.accuracy, r.weighted.precision, r.weighted.f1), (1.0, 1.0, 1.0));

        let off = ConfusionMatrix {
            classes: vec![Metadata, Other],
            counts: vec![vec![0, 3], vec![2, 0]],
        };
        assert_eq!(metrics(&off, "m", "t").unwrap().macro_avg.f1, 0.0);
    }

    #[test]
    fn comparison_marks_best_and_ties() {
        let report = |model: &str, acc: f64| MetricsReport {
            model: model.into(),
            test_fingerprint: "t".into(),
            n: 100,
            accuracy: acc,
            per_class: vec![],
            macro_avg: Averages {
                precision: acc,
                recall: acc,
                f1: acc,
            },
            weighted: Averages {
                precision: acc,
                recall: acc,
                f1: acc,
            },
        };
        let reports = [report("Baseline", 0.15), report("SGD Classifier", 0.73), report("Complement NB", 0.75)];
        let table = compare_models(&reports, Averaging::Weighted).unwrap();
        assert!(table.best.iter().all(|b| b == &vec![2]));
        let text = table.to_text(2);
        assert!(text.contains("Complement NB") && text.contains("0.75*"));

        let single = compare_models(&reports[..1], Averaging::Macro).unwrap();
        assert_eq!(single.rows.len(), 1);

        let tied = compare_models(&[report("a", 0.5), report("b", 0.5)], Averaging::Weighted).unwrap();
        assert!(tied.best.iter().all(|b| b == &vec![0, 1]));

        let mut foreign = report("x", 0.1);
        foreign.test_fingerprint = "other".into();
        assert!(matches!(
            compare_models(&[report("a", 0.5), foreign], Averaging::Weighted),
            Err(EvalError::TestSetMismatch(..))
        ));
        assert!(matches!(compare_models(&[], Averaging::Weighted), Err(EvalError::NoReports)));
    }

    #[test]
    fn confusion_csv_has_class_headers() {
        let cm = ConfusionMatrix {
            classes: AB.to_vec(),
            counts: vec![vec![1, 1], vec![0, 1]],
        };
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "true\\predicted,DataTransformation,QualityChecks\nDataTransformation,1,1\nQualityChecks,0,1\n"
        );
    }

    fn arb_matrix() -> impl Strategy<Value = ConfusionMatrix> {
        (2usize..=8).prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec(0u64..60, k), k).prop_filter_map("non-empty", move |counts| {
                let total: u64 = counts.iter().flatten().sum();
                (total > 0).then(|| ConfusionMatrix {
                    classes: ActionClass::ALL[..k].to_vec(),
                    counts,
                })
            })
        })
    }

    proptest! {
        #[test]
        fn weighted_recall_equals_accuracy(cm in arb_matrix()) {
            let r = metrics(&cm, "m", "t").unwrap();
            prop_assert_eq!(r.weighted.recall, r.accuracy);
        }

        #[test]
        fn metrics_stay_in_unit_interval(cm in arb_matrix()) {
            let r = metrics(&cm, "m", "t").unwrap();
            let values = r.per_class.iter().flat_map(|m| [m.precision, m.recall, m.f1])
                .chain([r.accuracy, r.macro_avg.f1, r.macro_avg.precision, r.macro_avg.recall,
                        r.weighted.f1, r.weighted.precision, r.weighted.recall]);
            for v in values {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }

        #[test]
        fn permuting_classes_preserves_scalars(cm in arb_matrix(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let k = cm.classes.len();
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = ConfusionMatrix {
                classes: perm.iter().map(|&i| cm.classes[i]).collect(),
                counts: perm.iter().map(|&i| perm.iter().map(|&j| cm.counts[i][j]).collect()).collect(),
            };
            let a = metrics(&cm, "m", "t").unwrap();
            let b = metrics(&permuted, "m", "t").unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert!((a.macro_avg.f1 - b.macro_avg.f1).abs() < 1e-12);
            prop_assert!((a.weighted.f1 - b.weighted.f1).abs() < 1e-12);
            prop_assert!((a.weighted.precision - b.weighted.precision).abs() < 1e-12);
            for (pos, &i) in perm.iter().enumerate() {
                prop_assert_eq!(&a.per_class[i], &b.per_class[pos]);
            }
        }
    }
}
