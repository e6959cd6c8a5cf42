use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{expect_rank, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskLossKind {
    /// One independent binary classifier per category, `log(1 + exp(-y·ŷ))`.
    LogisticBinary,
    /// Mean cross-entropy over a softmax of the category logits.
    SoftmaxMulticlass,
}

impl std::str::FromStr for TaskLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "logistic-binary" => Ok(Self::LogisticBinary),
            "softmax" | "softmax-multiclass" => Ok(Self::SoftmaxMulticlass),
            other => Err(Error::invalid(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Ground truth for one example: a category index, or a negative image that
/// belongs to no category (logistic kind only).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Category(usize),
    Negative,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Mean task loss over a `[N, K]` logit batch and its gradient.
///
/// The logistic kind sums the per-category binary losses of each example and
/// averages over examples.
pub fn task_loss(logits: &Tensor, labels: &[Label], kind: TaskLossKind) -> Result<(f64, Tensor)> {
    expect_rank("task_loss", logits, 2)?;
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::shape(
            "task_loss",
            format!("{n} logit rows but {} labels", labels.len()),
        ));
    }
    if n == 0 {
        return Err(Error::Empty("task_loss batch"));
    }
    for (i, l) in labels.iter().enumerate() {
        match (*l, kind) {
            (Label::Category(c), _) if c >= k => {
                return Err(Error::invalid(format!("label {c} of example {i} exceeds {k} categories")))
            }
            (Label::Negative, TaskLossKind::SoftmaxMulticlass) => {
                return Err(Error::invalid(format!(
                    "example {i} is a negative image; softmax loss needs a category"
                )))
            }
            _ => {}
        }
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; n * k];
    let mut total = 0.0;
    for (i, label) in labels.iter().enumerate() {
        let row = &logits.data()[i * k..(i + 1) * k];
        let grow = &mut grad[i * k..(i + 1) * k];
        match kind {
            TaskLossKind::LogisticBinary => {
                for (c, (&z, g)) in row.iter().zip(grow.iter_mut()).enumerate() {
                    let y = if *label == Label::Category(c) { 1.0 } else { -1.0 };
                    total += softplus(-y * z);
                    *g = -y * sigmoid(-y * z) * inv_n;
                }
            }
            TaskLossKind::SoftmaxMulticlass => {
                let Label::Category(target) = *label else { unreachable!() };
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[target];
                for (c, (&z, g)) in row.iter().zip(grow.iter_mut()).enumerate() {
                    let p = (z - lse).exp();
                    *g = (p - if c == target { 1.0 } else { 0.0 }) * inv_n;
                }
            }
        }
    }
    Ok((total * inv_n, Tensor::from_parts(vec![n, k], grad)))
}

/// Category scores for one logit vector: softmax probabilities, or
/// independent per-category sigmoid probabilities for the logistic kind.
pub fn predict_scores(logits: &[f64], kind: TaskLossKind) -> Vec<f64> {
    match kind {
        TaskLossKind::LogisticBinary => logits.iter().map(|&z| sigmoid(z)).collect(),
        TaskLossKind::SoftmaxMulticlass => softmax_row(logits),
    }
}
