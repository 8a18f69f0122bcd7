use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::labeling::{Label, LabeledDataset};
use crate::stl::{robustness_signal, Formula};

/// Robustness statistics of one ground formula over a labeled dataset.
///
/// `gap` is the normalized robustness gap
/// `(mean_pos - mean_neg) / (std_pos + std_neg + eps)` with
/// `eps = 1e-6 * max|rho|`, so it is invariant to positive rescaling of the
/// robustness values. `fitness` adds the accuracy at the sign threshold to
/// half of `tanh(gap)`; any accuracy-1.0 formula with a positive gap therefore
/// outranks every formula below 0.5 accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub mean_pos: f64,
    pub std_pos: f64,
    pub mean_neg: f64,
    pub std_neg: f64,
    pub gap: f64,
    pub accuracy: f64,
    pub mcr: f64,
    pub fitness: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Non-negative robustness predicts `+1`.
pub fn predict(rho: f64) -> Label {
    Label::from_bool(rho >= 0.0)
}

/// Scores precomputed robustness values against their labels.
pub fn report_from_robustness(rho: &[f64], labels: &[Label]) -> Result<FitnessReport, LearnError> {
    assert_eq!(rho.len(), labels.len(), "one robustness value per label");
    if rho.iter().any(|r| !r.is_finite()) {
        return Err(LearnError::NonFinite);
    }
    let (pos, neg): (Vec<(f64, Label)>, Vec<(f64, Label)>) =
        rho.iter().copied().zip(labels.iter().copied()).partition(|(_, l)| *l == Label::Pos);
    if pos.is_empty() || neg.is_empty() {
        return Err(LearnError::SingleLabel);
    }
    let pos: Vec<f64> = pos.into_iter().map(|(r, _)| r).collect();
    let neg: Vec<f64> = neg.into_iter().map(|(r, _)| r).collect();
    let (mean_pos, std_pos) = mean_std(&pos);
    let (mean_neg, std_neg) = mean_std(&neg);
    let scale = rho.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let spread = std_pos + std_neg + 1e-6 * scale;
    let gap = if spread > 0.0 { (mean_pos - mean_neg) / spread } else { 0.0 };
    let correct = rho.iter().zip(labels).filter(|(r, l)| predict(**r) == **l).count();
    let accuracy = correct as f64 / rho.len() as f64;
    Ok(FitnessReport {
        mean_pos,
        std_pos,
        mean_neg,
        std_neg,
        gap,
        accuracy,
        mcr: 1.0 - accuracy,
        fitness: accuracy + 0.5 * gap.tanh(),
        n_pos: pos.len(),
        n_neg: neg.len(),
    })
}

/// Robustness of a ground formula at the start of every chunk.
pub fn chunk_robustness(formula: &Formula, ds: &LabeledDataset) -> Result<Vec<f64>, LearnError> {
    let normalized = formula.normalized();
    ds.examples
        .iter()
        .map(|e| {
            let signal = robustness_signal(&normalized, &e.chunk.trace)?;
            Ok(signal[0])
        })
        .collect()
}

pub fn objective(formula: &Formula, ds: &LabeledDataset) -> Result<FitnessReport, LearnError> {
    if !formula.is_ground() {
        return Err(LearnError::NotGround(formula.to_string()));
    }
    let labels: Vec<Label> = ds.examples.iter().map(|e| e.label).collect();
    report_from_robustness(&chunk_robustness(formula, ds)?, &labels)
}
