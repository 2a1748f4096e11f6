use std::fmt::Write as _;

use serde::Serialize;

use super::model::{ModelParams, NUM_CLASSES};
use super::{NnError, Normalizer, Result};
use crate::sim::{FlowClass, Window};
use crate::Exec;

/// Index of the largest value; ties go to the lower index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ModelParams, normalizer: &Normalizer, window: &Window) -> Result<FlowClass> {
    let logits = model.logits(&normalizer.normalize(window))?;
    Ok(FlowClass::ALL[argmax(&logits)])
}

pub fn predict_all(
    model: &ModelParams,
    normalizer: &Normalizer,
    windows: &[Window],
    exec: Exec,
) -> Result<Vec<FlowClass>> {
    exec.map(windows, |w| predict(model, normalizer, w)).into_iter().collect()
}

/// Test-set metrics. Rows of `confusion` are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub total: usize,
    pub accuracy: f64,
    pub recall: [Option<f64>; NUM_CLASSES],
    pub precision: [Option<f64>; NUM_CLASSES],
    /// Errors between consecutive bleeding levels.
    pub adjacent_errors: usize,
    /// Errors between bleeding levels two or more steps apart.
    pub non_adjacent_errors: usize,
    /// Errors that cross the interference/bleeding boundary.
    pub interference_confusions: usize,
    /// `adjacent_errors / all errors`; `None` when there are no errors.
    pub adjacent_error_fraction: Option<f64>,
    pub interference_recall: Option<f64>,
    pub interference_precision: Option<f64>,
    /// Mean cross-entropy, when logits were available.
    pub mean_loss: f64,
}

impl EvalReport {
    pub fn from_predictions(truth: &[FlowClass], predicted: &[FlowClass]) -> Result<Self> {
        Self::build(truth, predicted, f64::NAN)
    }

    fn build(truth: &[FlowClass], predicted: &[FlowClass], mean_loss: f64) -> Result<Self> {
        if truth.is_empty() {
            return Err(NnError::Empty("test set"));
        }
        if truth.len() != predicted.len() {
            return Err(NnError::Shape("truth and prediction lengths differ".into()));
        }
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        let (mut adjacent, mut non_adjacent, mut cross) = (0, 0, 0);
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
            if t == p {
                continue;
            }
            if t.is_adjacent(p) {
                adjacent += 1;
            } else if t.is_bleeding() && p.is_bleeding() {
                non_adjacent += 1;
            } else {
                cross += 1;
            }
        }
        let total = truth.len();
        let correct: usize = (0..NUM_CLASSES).map(|k| confusion[k][k]).sum();
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let mut recall = [None; NUM_CLASSES];
        let mut precision = [None; NUM_CLASSES];
        for k in 0..NUM_CLASSES {
            recall[k] = ratio(confusion[k][k], confusion[k].iter().sum());
            precision[k] = ratio(confusion[k][k], (0..NUM_CLASSES).map(|r| confusion[r][k]).sum());
        }
        let errors = total - correct;
        Ok(Self {
            confusion,
            total,
            accuracy: correct as f64 / total as f64,
            recall,
            precision,
            adjacent_errors: adjacent,
            non_adjacent_errors: non_adjacent,
            interference_confusions: cross,
            adjacent_error_fraction: ratio(adjacent, errors),
            interference_recall: recall[0],
            interference_precision: precision[0],
            mean_loss,
        })
    }

    pub fn errors(&self) -> usize {
        self.total - (0..NUM_CLASSES).map(|k| self.confusion[k][k]).sum::<usize>()
    }

    /// Confusion matrix as CSV, labels in class order.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in FlowClass::ALL {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for c in FlowClass::ALL {
            let _ = write!(s, "{c}");
            for n in self.confusion[c.index()] {
                let _ = write!(s, ",{n}");
            }
            s.push('\n');
        }
        s
    }

    /// `accuracy=…, adjacent_err=…, interference_recall=…`
    pub fn summary_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        format!(
            "accuracy={:.4}, adjacent_err={}, interference_recall={}",
            self.accuracy,
            opt(self.adjacent_error_fraction),
            opt(self.interference_recall)
        )
    }
}

pub(crate) fn evaluate_normalized(
    model: &ModelParams,
    inputs: &[Vec<f64>],
    labels: &[usize],
    exec: Exec,
) -> Result<EvalReport> {
    if inputs.is_empty() {
        return Err(NnError::Empty("test set"));
    }
    let outs = exec.map(inputs, |x| model.logits(x)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut predicted = Vec::with_capacity(outs.len());
    for (logits, &y) in outs.iter().zip(labels) {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        loss += m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln() - logits[y];
        predicted.push(FlowClass::ALL[argmax(logits)]);
    }
    let truth: Vec<FlowClass> = labels.iter().map(|&y| FlowClass::ALL[y]).collect();
    EvalReport::build(&truth, &predicted, loss / inputs.len() as f64)
}

/// Classifies every window and tabulates the results.
pub fn evaluate(model: &ModelParams, normalizer: &Normalizer, windows: &[Window], exec: Exec) -> Result<EvalReport> {
    let inputs: Vec<Vec<f64>> = exec.map(windows, |w| normalizer.normalize(w));
    let labels: Vec<usize> = windows.iter().map(|w| w.label.index()).collect();
    evaluate_normalized(model, &inputs, &labels, exec)
}
