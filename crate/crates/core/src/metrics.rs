//! Confusion matrix, per-class precision/recall/F1, macro averages and
//! one-vs-rest macro AUC (Mann-Whitney with half credit for ties).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion(true_labels: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label pair ({t}, {p}) out of range for {num_classes} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when any of the three was a 0/0 and was set to 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_prf(cm: &ConfusionMatrix, class: usize) -> ClassScores {
    let tp = cm.counts[class][class];
    let predicted: u64 = cm.counts.iter().map(|row| row[class]).sum();
    let actual: u64 = cm.counts[class].iter().sum();
    let mut degenerate = false;
    let precision = ratio(tp, predicted, &mut degenerate);
    let recall = ratio(tp, actual, &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassScores {
        precision,
        recall,
        f1,
        degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

pub fn macro_scores(cm: &ConfusionMatrix) -> Result<MacroScores> {
    let total = cm.total();
    if total == 0 || cm.num_classes() == 0 {
        return Err(Error::InvalidInput("no evaluated samples".into()));
    }
    let per: Vec<ClassScores> = (0..cm.num_classes()).map(|c| class_prf(cm, c)).collect();
    let mean = |f: fn(&ClassScores) -> f64| per.iter().map(f).sum::<f64>() / per.len() as f64;
    Ok(MacroScores {
        accuracy: cm.trace() as f64 / total as f64,
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. `None` when either group is empty.
///
/// Computed from midranks in O(n log n).
pub fn auc_binary(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len(), "scores and labels differ in length");
    let n_pos = positives.iter().filter(|p| **p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| positives[k]).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrAuc {
    pub macro_auc: f64,
    /// `None` for classes with no positives or no negatives.
    pub per_class: Vec<Option<f64>>,
    pub undefined_classes: usize,
}

/// Macro average of one-vs-rest AUCs over the classes where it is defined.
pub fn macro_auc_ovr(probs: &[Vec<f64>], true_labels: &[usize], num_classes: usize) -> Result<OvrAuc> {
    if probs.len() != true_labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} probability rows but {} labels",
            probs.len(),
            true_labels.len()
        )));
    }
    if probs.iter().any(|p| p.len() != num_classes) {
        return Err(Error::InvalidInput(format!("probability rows must have {num_classes} entries")));
    }
    let mut present = vec![false; num_classes];
    for &t in true_labels {
        *present.get_mut(t).ok_or_else(|| Error::InvalidInput(format!("label {t} out of range")))? = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::InvalidInput("AUC needs at least two distinct classes".into()));
    }
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let pos: Vec<bool> = true_labels.iter().map(|t| *t == c).collect();
            auc_binary(&scores, &pos)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(OvrAuc {
        macro_auc: defined.iter().sum::<f64>() / defined.len() as f64,
        undefined_classes: num_classes - defined.len(),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub degenerate: bool,
}

pub const AUC_VARIANT: &str = "one-vs-rest macro (Mann-Whitney, ties = 0.5)";

/// Everything reported for one evaluated model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_auc: f64,
    pub auc_variant: String,
    pub auc_undefined_classes: usize,
    pub per_class: Vec<ClassReport>,
    pub confusion: ConfusionMatrix,
    pub gender_accuracy: Option<f64>,
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Builds a report from true labels, per-sample class probabilities and
    /// class names. Predictions are the argmax of each row (lowest index on ties).
    pub fn from_probabilities(true_labels: &[usize], probs: &[Vec<f64>], class_names: &[&str]) -> Result<Self> {
        let k = class_names.len();
        let predicted: Vec<usize> = probs.iter().map(|p| crate::nncore::argmax(p)).collect();
        let cm = confusion(true_labels, &predicted, k)?;
        let macros = macro_scores(&cm)?;
        let auc = macro_auc_ovr(probs, true_labels, k)?;
        let per_class = (0..k)
            .map(|c| {
                let s = class_prf(&cm, c);
                ClassReport {
                    class: class_names[c].to_string(),
                    support: cm.counts[c].iter().sum(),
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    auc: auc.per_class[c],
                    degenerate: s.degenerate,
                }
            })
            .collect();
        Ok(Self {
            n_samples: cm.total(),
            accuracy: macros.accuracy,
            macro_precision: macros.macro_precision,
            macro_recall: macros.macro_recall,
            macro_f1: macros.macro_f1,
            macro_auc: auc.macro_auc,
            auc_variant: AUC_VARIANT.to_string(),
            auc_undefined_classes: auc.undefined_classes,
            per_class,
            confusion: cm,
            gender_accuracy: None,
            notes: Vec::new(),
        })
    }

    pub fn class(&self, name: &str) -> Option<&ClassReport> {
        self.per_class.iter().find(|c| c.class == name)
    }
}

/// `Method | Accuracy | Macro-F1 | Macro-AUC`, accuracy as a percentage.
pub fn render_summary_table(rows: &[(&str, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} | Accuracy | Macro-F1 | Macro-AUC", "Method");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$} | {:>8.2} | {:>8.4} | {:>9.4}",
            name,
            100.0 * r.accuracy,
            r.macro_f1,
            r.macro_auc
        );
    }
    out
}

/// Per-class precision/recall/F1 for each method, one block per class.
pub fn render_per_class_table(rows: &[(&str, &MetricsReport)], highlight: Option<&str>) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let classes: Vec<&str> = rows
        .first()
        .map(|(_, r)| r.per_class.iter().map(|c| c.class.as_str()).collect())
        .unwrap_or_default();
    for class in classes {
        let mark = if Some(class) == highlight { "  <-- minority class" } else { "" };
        let _ = writeln!(out, "{class}{mark}");
        let _ = writeln!(out, "  {:<width$} | Precision | Recall |     F1 | Support", "Method");
        for (name, r) in rows {
            if let Some(c) = r.class(class) {
                let _ = writeln!(
                    out,
                    "  {:<width$} | {:>9.4} | {:>6.4} | {:>6.4} | {:>7}",
                    name, c.precision, c.recall, c.f1, c.support
                );
            }
        }
    }
    out
}
