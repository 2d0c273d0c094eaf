//! Blind-test evaluation: confusion matrix, accuracy/precision/recall/F1,
//! per-sample predictions and rendered report files.

mod plot;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Label;
use crate::classifier::{predict_proba, ModelHandle};
use crate::data::LoadedSet;
use crate::trainer::EpochStats;

/// 2x2 outcome counts; the positive class is fake.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// fake predicted fake
    pub tp: u64,
    /// real predicted real
    pub tn: u64,
    /// real predicted fake
    pub fp: u64,
    /// fake predicted real
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Fake, Label::Fake) => self.tp += 1,
            (Label::Real, Label::Real) => self.tn += 1,
            (Label::Real, Label::Fake) => self.fp += 1,
            (Label::Fake, Label::Real) => self.fn_ += 1,
        }
    }
}

/// Metric bundle; a `None` value means the denominator was zero and the
/// metric is undefined (flagged, never reported as 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub undefined_flags: Vec<String>,
}

/// Accuracy, precision, recall and F1 from raw counts.
pub fn metrics_from_matrix(m: &ConfusionMatrix) -> Metrics {
    let mut flags = Vec::new();
    let ratio = |num: u64, den: u64, name: &str, flags: &mut Vec<String>| -> Option<f64> {
        if den == 0 {
            flags.push(name.to_string());
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let accuracy = ratio(m.tp + m.tn, m.total(), "accuracy", &mut flags);
    let precision = ratio(m.tp, m.tp + m.fp, "precision", &mut flags);
    let recall = ratio(m.tp, m.tp + m.fn_, "recall", &mut flags);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => {
            flags.push("f1".to_string());
            None
        }
    };
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
        undefined_flags: flags,
    }
}

/// Harmonic mean of precision and recall; the F1 definition used for the
/// published-value consistency check.
pub fn f1_from_precision_recall(precision: f64, recall: f64) -> f64 {
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub sample_path: String,
    pub p_fake: f64,
    pub predicted: Label,
    pub truth: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    pub threshold: f64,
    pub checkpoint_digest: String,
    pub per_sample: Vec<SamplePrediction>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leakage detected: test set shares video ids with training: {0:?}")]
    LeakageDetected(Vec<String>),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid decision threshold {0}; must be in (0,1)")]
    InvalidThreshold(f64),
    #[error("failed to write report file {0}: {1}")]
    WriteFailure(String, String),
}

/// Applies the decision rule to one probability (ties predict fake).
pub fn decide(p_fake: f64, threshold: f64) -> Label {
    if p_fake >= threshold {
        Label::Fake
    } else {
        Label::Real
    }
}

/// Brute-force recount from prediction rows; kept independent of
/// [`ConfusionMatrix::record`] bookkeeping so evaluate can self-check.
pub fn recount(per_sample: &[SamplePrediction]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for s in per_sample {
        match (s.truth, s.predicted) {
            (Label::Fake, Label::Fake) => m.tp += 1,
            (Label::Real, Label::Real) => m.tn += 1,
            (Label::Real, Label::Fake) => m.fp += 1,
            (Label::Fake, Label::Real) => m.fn_ += 1,
        }
    }
    m
}

/// Evaluates the model on the blind test partition.
///
/// Refuses any test set whose video ids intersect `trained_video_ids`
/// (train plus val of the producing run).
pub fn evaluate(
    model: &ModelHandle,
    test_set: &LoadedSet,
    decision_threshold: f64,
    trained_video_ids: &BTreeSet<String>,
    checkpoint_digest: &str,
) -> Result<EvalReport, EvalError> {
    if !(decision_threshold > 0.0 && decision_threshold < 1.0) {
        return Err(EvalError::InvalidThreshold(decision_threshold));
    }
    if test_set.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let leaked: Vec<String> = test_set
        .video_id_set()
        .intersection(trained_video_ids)
        .cloned()
        .collect();
    if !leaked.is_empty() {
        return Err(EvalError::LeakageDetected(leaked));
    }

    let mut matrix = ConfusionMatrix::default();
    let mut per_sample = Vec::with_capacity(test_set.len());
    let batch_size = 32;
    let mut i = 0;
    while i < test_set.len() {
        let end = (i + batch_size).min(test_set.len());
        let indices: Vec<usize> = (i..end).collect();
        let (x, labels) = test_set.batch(&indices);
        let probs = predict_proba(model, &x).expect("test batch shape");
        for (k, &idx) in indices.iter().enumerate() {
            let p_fake = probs[(k, 1)] as f64;
            let predicted = decide(p_fake, decision_threshold);
            matrix.record(labels[k], predicted);
            per_sample.push(SamplePrediction {
                sample_path: test_set.sample_paths[idx].clone(),
                p_fake,
                predicted,
                truth: labels[k],
            });
        }
        i = end;
    }

    // self-check: counting path must agree with a brute-force recount
    assert_eq!(matrix, recount(&per_sample), "matrix recount mismatch");
    assert_eq!(matrix.total() as usize, test_set.len());

    Ok(EvalReport {
        matrix,
        metrics: metrics_from_matrix(&matrix),
        threshold: decision_threshold,
        checkpoint_digest: checkpoint_digest.to_string(),
        per_sample,
    })
}

/// Key-sorted JSON metrics document; byte-identical for identical reports.
pub fn metrics_document(report: &EvalReport) -> String {
    fn num(v: Option<f64>) -> serde_json::Value {
        v.map(|x| serde_json::json!(x)).unwrap_or(serde_json::Value::Null)
    }
    let mut doc = std::collections::BTreeMap::new();
    doc.insert("accuracy", num(report.metrics.accuracy));
    doc.insert("checkpoint_digest", serde_json::json!(report.checkpoint_digest));
    doc.insert("f1", num(report.metrics.f1));
    doc.insert(
        "matrix",
        serde_json::json!({
            "fn": report.matrix.fn_,
            "fp": report.matrix.fp,
            "tn": report.matrix.tn,
            "tp": report.matrix.tp,
        }),
    );
    doc.insert("precision", num(report.metrics.precision));
    doc.insert("recall", num(report.metrics.recall));
    doc.insert("threshold", serde_json::json!(report.threshold));
    doc.insert(
        "undefined_flags",
        serde_json::json!(report.metrics.undefined_flags),
    );
    let mut s = serde_json::to_string_pretty(&doc).expect("metrics serialize");
    s.push('\n');
    s
}

/// Emits the report bundle into `out_dir`: the two training-curve plots
/// (skipped with a notice when the history is empty), the annotated
/// confusion-matrix figure, the metrics document and per-sample rows.
pub fn render_report(
    report: &EvalReport,
    history: &[EpochStats],
    out_dir: &Path,
) -> Result<Vec<String>, EvalError> {
    let wfail = |name: &str, e: String| EvalError::WriteFailure(name.to_string(), e);
    fs::create_dir_all(out_dir).map_err(|e| wfail("out_dir", e.to_string()))?;
    let mut written = Vec::new();

    fs::write(out_dir.join("metrics.json"), metrics_document(report))
        .map_err(|e| wfail("metrics.json", e.to_string()))?;
    written.push("metrics.json".to_string());

    let mut csv = String::from("sample_path,p_fake,predicted,truth\n");
    for s in &report.per_sample {
        csv.push_str(&format!(
            "{},{:.6},{},{}\n",
            s.sample_path,
            s.p_fake,
            s.predicted.as_str(),
            s.truth.as_str()
        ));
    }
    fs::write(out_dir.join("per_sample.csv"), csv)
        .map_err(|e| wfail("per_sample.csv", e.to_string()))?;
    written.push("per_sample.csv".to_string());

    plot::confusion_figure(&report.matrix, &out_dir.join("confusion_matrix.png"))
        .map_err(|e| wfail("confusion_matrix.png", e))?;
    written.push("confusion_matrix.png".to_string());

    if history.is_empty() {
        eprintln!("notice: empty history, skipping curve plots");
    } else {
        let epochs: Vec<f64> = history.iter().map(|s| s.epoch as f64).collect();
        let acc: Vec<f64> = history.iter().map(|s| s.val_accuracy).collect();
        plot::line_chart(
            "VALIDATION ACCURACY",
            &epochs,
            &[("VAL ACC", plot::BLUE, &acc)],
            &out_dir.join("accuracy_vs_epoch.png"),
        )
        .map_err(|e| wfail("accuracy_vs_epoch.png", e))?;
        written.push("accuracy_vs_epoch.png".to_string());

        let train_loss: Vec<f64> = history.iter().map(|s| s.train_loss).collect();
        let val_loss: Vec<f64> = history.iter().map(|s| s.val_loss).collect();
        plot::line_chart(
            "TRAIN AND VAL LOSS",
            &epochs,
            &[
                ("TRAIN LOSS", plot::BLUE, &train_loss),
                ("VAL LOSS", plot::ORANGE, &val_loss),
            ],
            &out_dir.join("losses_vs_epoch.png"),
        )
        .map_err(|e| wfail("losses_vs_epoch.png", e))?;
        written.push("losses_vs_epoch.png".to_string());
    }
    Ok(written)
}
