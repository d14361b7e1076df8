//! Classification metrics: confusion matrix, per-class and macro
//! precision / recall / F1, one-vs-rest ROC curves with AUC, and a
//! comparison table across models.

mod report;
mod svg;

use serde::{Deserialize, Serialize};

use crate::classifiers::TrainedModel;
use crate::error::{domain, Result};
use crate::matrix::FeatureMatrix;

pub use report::{read_report, roc_csv, write_report, write_roc_csv};
pub use svg::{metrics_svg, roc_svg};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], predicted: &[usize], class_count: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(domain!("{} labels but {} predictions", truth.len(), predicted.len()));
        }
        let mut counts = vec![vec![0; class_count]; class_count];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= class_count || p >= class_count {
                return Err(domain!("label outside 0..{class_count}"));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.class_count()).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn true_count(&self, k: usize) -> usize {
        self.counts[k].iter().sum()
    }

    pub fn predicted_count(&self, k: usize) -> usize {
        self.counts.iter().map(|row| row[k]).sum()
    }
}

/// Metrics of one class. A 0/0 ratio is stored as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl ClassMetrics {
    pub fn from_confusion(cm: &ConfusionMatrix, k: usize) -> Self {
        let tp = cm.counts[k][k];
        let (precision, precision_undefined) = ratio(tp, cm.predicted_count(k));
        let (recall, recall_undefined) = ratio(tp, cm.true_count(k));
        let (f1, f1_undefined) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.true_count(k),
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score at which this point is reached; `None` for the `(0, 0)` start.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    /// No positives or no negatives: the curve is the diagonal and AUC is
    /// reported as 0.
    pub undefined: bool,
}

/// ROC of `scores` against binary `positive` flags. Rows sharing a score
/// enter the curve together, so ties contribute a diagonal segment.
pub fn roc_curve(positive: &[bool], scores: &[f64]) -> Result<RocCurve> {
    if positive.len() != scores.len() || scores.is_empty() {
        return Err(domain!("ROC needs one score per label and at least one row"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(domain!("ROC scores must be finite"));
    }
    let p = positive.iter().filter(|&&b| b).count() as u64;
    let n = positive.len() as u64 - p;
    if p == 0 || n == 0 {
        let ends = [(0.0, None), (1.0, scores.iter().copied().reduce(f64::min))];
        return Ok(RocCurve {
            points: ends.iter().map(|&(v, t)| RocPoint { fpr: v, tpr: v, threshold: t }).collect(),
            auc: 0.0,
            undefined: true,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: None }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of (1/n) x (1/p), kept exact
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint { fpr: fp as f64 / n as f64, tpr: tp as f64 / p as f64, threshold: Some(s) });
    }
    Ok(RocCurve {
        points,
        auc: area2 as f64 / (2 * p as u128 * n as u128) as f64,
        undefined: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// Class names by label.
    pub labels: Vec<String>,
    pub test_rows: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// True when any class had an undefined precision.
    pub macro_precision_flagged: bool,
    pub confusion: ConfusionMatrix,
    /// One-vs-rest curve per class.
    pub roc: Vec<RocCurve>,
    /// Mean AUC over classes with a defined curve; the headline AUC.
    pub macro_auc: f64,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Build a report from true labels and per-class scores. Predictions are
/// the score argmax, lower index on ties.
pub fn evaluate_scores(model: &str, truth: &[usize], scores: &[Vec<f64>], class_count: usize) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(domain!("test set is empty"));
    }
    if scores.len() != truth.len() || scores.iter().any(|s| s.len() != class_count) {
        return Err(domain!("need {class_count} scores for each of {} rows", truth.len()));
    }
    let predicted: Vec<usize> = scores.iter().map(|s| crate::classifiers::argmax(s)).collect();
    let confusion = ConfusionMatrix::new(truth, &predicted, class_count)?;
    let per_class: Vec<ClassMetrics> = (0..class_count).map(|k| ClassMetrics::from_confusion(&confusion, k)).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / class_count as f64;
    let roc = (0..class_count)
        .map(|k| {
            let positive: Vec<bool> = truth.iter().map(|&t| t == k).collect();
            let column: Vec<f64> = scores.iter().map(|s| s[k]).collect();
            roc_curve(&positive, &column)
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = roc.iter().filter(|c| !c.undefined).map(|c| c.auc).collect();
    let macro_auc = if defined.is_empty() { 0.0 } else { defined.iter().sum::<f64>() / defined.len() as f64 };
    Ok(EvalReport {
        model: model.to_owned(),
        labels: (0..class_count).map(|k| k.to_string()).collect(),
        test_rows: truth.len(),
        accuracy: confusion.accuracy(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        macro_precision_flagged: per_class.iter().any(|m| m.precision_undefined),
        per_class,
        confusion,
        roc,
        macro_auc,
        config_hash: None,
    })
}

pub fn evaluate(model: &TrainedModel, test: &FeatureMatrix) -> Result<EvalReport> {
    if test.n_rows() == 0 {
        return Err(domain!("test set is empty"));
    }
    let scores = model.score(test)?;
    let mut report = evaluate_scores(model.kind().name(), test.labels(), &scores, model.class_count)?;
    if model.manifest.labels.len() == model.class_count {
        report.labels = model.manifest.labels.clone();
    }
    report.config_hash = model.manifest.config_hash.clone();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_auc: f64,
}

/// Models ordered by accuracy, best first; equal accuracies by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare<'a>(reports: impl IntoIterator<Item = (&'a str, &'a EvalReport)>) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = reports
        .into_iter()
        .map(|(name, r)| ComparisonRow {
            model: name.to_owned(),
            accuracy: r.accuracy,
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            macro_f1: r.macro_f1,
            macro_auc: r.macro_auc,
        })
        .collect();
    rows.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.model.cmp(&b.model)));
    ComparisonTable { rows }
}

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "model", "accuracy", "precision", "recall", "f1", "auc"
        );
        for r in &self.rows {
            out += &format!(
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
                r.model, r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1, r.macro_auc
            );
        }
        out
    }
}
