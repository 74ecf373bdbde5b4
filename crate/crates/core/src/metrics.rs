//! Prediction, sparsity, selection and stability metrics.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TrueSupport};
use crate::error::{Error, Result};
use crate::network::Task;
use crate::training::{mean_loss, FittedModel};

/// Baseline and model losses below this are treated as zero.
pub const DEGENERATE_LOSS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Mode {
    /// One F1 over all (observation, feature) cells.
    #[default]
    Pooled,
    /// Mean of per-observation F1 scores.
    PerObservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub relative_loss: f64,
    pub avg_sparsity_count: f64,
    pub avg_sparsity_proportion: f64,
    pub f1: Option<f64>,
    pub hamming_instability: Option<f64>,
    #[serde(skip)]
    pub per_observation_support: Array2<bool>,
}

/// Linear predictor of the intercept-only model fitted on `train_y`.
pub fn intercept_only_predictor(task: Task, train_y: ArrayView1<'_, f64>) -> f64 {
    baseline_predictor(task, train_y.sum() / train_y.len() as f64)
}

/// Intercept-only linear predictor for a given training response mean.
pub fn baseline_predictor(task: Task, mean: f64) -> f64 {
    match task {
        Task::Regression => mean,
        Task::Classification => (mean / (1.0 - mean)).ln(),
    }
}

/// Mean test loss of a model relative to the intercept-only model fitted on
/// the training response.
pub fn relative_loss_from_predictor(
    task: Task,
    test_eta: ArrayView1<'_, f64>,
    test_y: ArrayView1<'_, f64>,
    train_y: ArrayView1<'_, f64>,
) -> Result<f64> {
    if train_y.is_empty() {
        return Err(Error::shape("relative loss needs a non-empty training response"));
    }
    let b = intercept_only_predictor(task, train_y);
    relative_loss_with_baseline(task, test_eta, test_y, b)
}

/// Relative loss against a constant baseline linear predictor `b`.
pub fn relative_loss_with_baseline(
    task: Task,
    test_eta: ArrayView1<'_, f64>,
    test_y: ArrayView1<'_, f64>,
    b: f64,
) -> Result<f64> {
    if test_eta.len() != test_y.len() || test_y.is_empty() {
        return Err(Error::shape(
            "relative loss needs non-empty, matching predictor and response",
        ));
    }
    let baseline = mean_loss(task, ndarray::Array1::from_elem(test_y.len(), b).view(), test_y);
    let model = mean_loss(task, test_eta, test_y);
    if !(baseline >= DEGENERATE_LOSS) {
        if model < DEGENERATE_LOSS {
            return Ok(0.0);
        }
        return Err(Error::DegenerateBaseline(format!(
            "intercept-only loss is {baseline:e} but model loss is {model:e}"
        )));
    }
    Ok(model / baseline)
}

/// Relative loss of `model` on raw `test` data, baseline from raw `train`.
pub fn relative_loss(model: &FittedModel, test: &Dataset, train: &Dataset) -> Result<f64> {
    let eta = model.linear_predictor_raw(test)?;
    relative_loss_from_predictor(test.task, eta.view(), test.y.view(), train.y.view())
}

fn counts(pred: ArrayView2<'_, bool>, truth: ArrayView2<'_, bool>) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    Zip::from(pred).and(truth).for_each(|&p, &t| match (p, t) {
        (true, true) => tp += 1,
        (true, false) => fp += 1,
        (false, true) => fn_ += 1,
        _ => {}
    });
    (tp, fp, fn_)
}

fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// `2TP / (2TP + FP + FN)` over the selected cells. An empty prediction of
/// an empty truth scores one.
pub fn selection_f1(predicted: ArrayView2<'_, bool>, truth: &TrueSupport, mode: F1Mode) -> Result<f64> {
    if predicted.dim() != truth.dim() {
        return Err(Error::shape(format!(
            "predicted support {:?} vs truth {:?}",
            predicted.dim(),
            truth.dim()
        )));
    }
    Ok(match mode {
        F1Mode::Pooled => {
            let (tp, fp, fn_) = counts(predicted, truth.0.view());
            f1_from(tp, fp, fn_)
        }
        F1Mode::PerObservation => {
            let n = predicted.nrows();
            if n == 0 {
                return Ok(1.0);
            }
            let total: f64 = predicted
                .outer_iter()
                .zip(truth.0.outer_iter())
                .map(|(p, t)| {
                    let (tp, fp, fn_) = counts(p.insert_axis(ndarray::Axis(0)), t.insert_axis(ndarray::Axis(0)));
                    f1_from(tp, fp, fn_)
                })
                .sum();
            total / n as f64
        }
    })
}

/// Mean number and proportion of nonzero coefficients per observation.
pub fn sparsity_of(support: ArrayView2<'_, bool>) -> (f64, f64) {
    let (n, p) = support.dim();
    if n == 0 || p == 0 {
        return (0.0, 0.0);
    }
    let count = support.iter().filter(|b| **b).count() as f64 / n as f64;
    (count, count / p as f64)
}

/// Support of a model's (relaxed) coefficients on raw data.
pub fn support(model: &FittedModel, data: &Dataset) -> Result<Array2<bool>> {
    let std = model.prepare(data)?;
    Ok(model.coefficients(std.z.view())?.beta.mapv(|v| v != 0.0))
}

pub fn sparsity(model: &FittedModel, data: &Dataset) -> Result<(f64, f64)> {
    Ok(sparsity_of(support(model, data)?.view()))
}

/// Mean fraction of disagreeing support cells per observation.
pub fn hamming_of(a: ArrayView2<'_, bool>, b: ArrayView2<'_, bool>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "supports {:?} and {:?} differ in shape",
            a.dim(),
            b.dim()
        )));
    }
    let (n, p) = a.dim();
    if n == 0 || p == 0 {
        return Ok(0.0);
    }
    let mut diff = 0usize;
    Zip::from(a).and(b).for_each(|x, y| diff += usize::from(x != y));
    Ok(diff as f64 / (n * p) as f64)
}

pub fn hamming_instability(a: &FittedModel, b: &FittedModel, data: &Dataset) -> Result<f64> {
    if a.p() != b.p() {
        return Err(Error::shape("models have different numbers of explanatory features"));
    }
    hamming_of(support(a, data)?.view(), support(b, data)?.view())
}

/// Full report for `model` on raw `test` data; `train_response_mean` sets
/// the intercept-only baseline.
pub fn evaluate(
    model: &FittedModel,
    test: &Dataset,
    train_response_mean: f64,
    truth: Option<&TrueSupport>,
    other: Option<&FittedModel>,
    f1_mode: F1Mode,
) -> Result<EvaluationReport> {
    let eta = model.linear_predictor_raw(test)?;
    let b = baseline_predictor(test.task, train_response_mean);
    let relative_loss = relative_loss_with_baseline(test.task, eta.view(), test.y.view(), b)?;
    let supp = support(model, test)?;
    let (count, prop) = sparsity_of(supp.view());
    let f1 = truth.map(|t| selection_f1(supp.view(), t, f1_mode)).transpose()?;
    let hamming = other.map(|o| hamming_instability(model, o, test)).transpose()?;
    Ok(EvaluationReport {
        relative_loss,
        avg_sparsity_count: count,
        avg_sparsity_proportion: prop,
        f1,
        hamming_instability: hamming,
        per_observation_support: supp,
    })
}
