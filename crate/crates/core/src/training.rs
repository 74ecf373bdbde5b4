//! Losses, Adam with validation early stopping, pathwise fitting over a
//! decreasing lambda grid, and the relaxed (polished) refit.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::network::{backward, forward, forward_tape, linear_predictor, Gradients, NetworkModel, Task};
use crate::projection::{
    clip_signs, clip_signs_backward, group_soft_threshold, mean_l1, project_group, project_group_backward, project_l1,
    project_l1_backward, soft_threshold, GroupStructure, SignConstraints,
};

/// Relaxation weights tried for every fitted lambda.
pub const GAMMA_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

// ---------------------------------------------------------------------------
// Losses

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Pointwise loss of linear predictor `eta` against response `y`: squared
/// error for regression, logistic loss in logit form for classification.
pub fn pointwise_loss(task: Task, eta: f64, y: f64) -> f64 {
    match task {
        Task::Regression => (y - eta) * (y - eta),
        Task::Classification => softplus(eta) - y * eta,
    }
}

/// Derivative of [`pointwise_loss`] with respect to `eta`.
pub fn pointwise_loss_grad(task: Task, eta: f64, y: f64) -> f64 {
    match task {
        Task::Regression => 2.0 * (eta - y),
        Task::Classification => crate::network::sigmoid(eta) - y,
    }
}

pub fn mean_loss(task: Task, eta: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    let n = y.len() as f64;
    eta.iter()
        .zip(y)
        .map(|(e, t)| pointwise_loss(task, *e, *t))
        .sum::<f64>()
        / n
}

// ---------------------------------------------------------------------------
// Configuration

/// Optional structure imposed on the coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub groups: Option<GroupStructure>,
    pub signs: Option<SignConstraints>,
}

impl Constraints {
    /// Zeroes entries that violate the sign constraints.
    pub fn clip(&self, h: Array2<f64>) -> Result<Array2<f64>> {
        match &self.signs {
            Some(sc) if !sc.is_empty() => clip_signs(h.view(), sc),
            _ => Ok(h),
        }
    }

    /// Value of the constraint functional: mean l1 norm, or mean sum of
    /// group norms, of the (sign-clipped) coefficients.
    pub fn penalty(&self, h: ArrayView2<'_, f64>) -> Result<f64> {
        let clipped = self.clip(h.to_owned())?;
        Ok(match &self.groups {
            Some(g) => mean_l1(g.norms(clipped.view()).view()),
            None => mean_l1(clipped.view()),
        })
    }

    /// Inference coefficients at a frozen threshold.
    fn threshold(&self, h: Array2<f64>, lambda: f64, theta_hat: f64) -> Result<Array2<f64>> {
        let h = self.clip(h)?;
        if lambda == 0.0 {
            return Ok(Array2::zeros(h.dim()));
        }
        match &self.groups {
            Some(g) => group_soft_threshold(h.view(), g, theta_hat),
            None => soft_threshold(h.view(), theta_hat),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// A validation loss must beat the best so far by more than this to
    /// count as an improvement.
    pub min_improvement: f64,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            patience: 30,
            max_epochs: 2000,
            batch_size: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            min_improvement: 0.0,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid(
                "Adam decay rates must lie in [0, 1) and epsilon must be positive",
            ));
        }
        if !(self.min_improvement >= 0.0) {
            return Err(Error::invalid("min_improvement must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Number of lambda values, including the unregularized start and zero.
    pub n_lambda: usize,
    /// Fit the polished network and tune gamma at every lambda.
    pub relax: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            relax: true,
        }
    }
}

// ---------------------------------------------------------------------------
// Training objective

/// How dense network outputs become coefficients during training.
#[derive(Debug, Clone, Copy)]
pub enum Head<'a> {
    /// Sign clipping and the (group) l1 projection at `lambda` over the batch;
    /// `f64::INFINITY` skips the projection.
    Projected { lambda: f64, constraints: &'a Constraints },
    /// Fixed support mask, no shrinkage (polished network).
    Masked {
        mask: ArrayView2<'a, bool>,
        signs: Option<&'a SignConstraints>,
    },
}

/// A batch of standardized observations.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub z: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    pub task: Task,
}

impl<'a> Batch<'a> {
    pub fn from_dataset(ds: &'a Dataset) -> Self {
        Self {
            x: ds.x.view(),
            z: ds.z.view(),
            y: ds.y.view(),
            task: ds.task,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Mean training loss over the batch and its gradient with respect to every
/// network parameter.
pub fn training_loss(model: &NetworkModel, batch: Batch<'_>, head: Head<'_>) -> Result<(f64, Gradients)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if batch.x.nrows() != n || batch.z.nrows() != n || batch.x.ncols() != model.p() || batch.z.ncols() != model.m() {
        return Err(Error::shape("batch does not match the network dimensions"));
    }
    let p = model.p();
    let tape = forward_tape(model, batch.z);
    let raw = &tape.output;
    let h = raw.slice(s![.., ..p]).to_owned();
    let signs = match head {
        Head::Projected { constraints, .. } => constraints.signs.as_ref(),
        Head::Masked { signs, .. } => signs,
    }
    .filter(|sc| !sc.is_empty());
    let hc = match signs {
        Some(sc) => clip_signs(h.view(), sc)?,
        None => h.clone(),
    };

    enum Back {
        Identity,
        L1(crate::projection::ProjectionState),
        Group(crate::projection::GroupProjectionState),
    }
    let (beta, back) = match head {
        Head::Projected { lambda, constraints } => {
            if lambda.is_infinite() {
                (hc.clone(), Back::Identity)
            } else {
                match &constraints.groups {
                    Some(g) => {
                        let (b, st) = project_group(hc.view(), g, lambda)?;
                        (b, Back::Group(st))
                    }
                    None => {
                        let (b, st) = project_l1(hc.view(), lambda)?;
                        (b, Back::L1(st))
                    }
                }
            }
        }
        Head::Masked { mask, .. } => {
            if mask.dim() != hc.dim() {
                return Err(Error::shape("support mask does not match the batch"));
            }
            let mut b = hc.clone();
            Zip::from(&mut b).and(mask).for_each(|v, &keep| {
                if !keep {
                    *v = 0.0;
                }
            });
            (b, Back::Identity)
        }
    };

    let intercept = model.config.include_intercept.then(|| raw.column(p));
    let eta = linear_predictor(batch.x, beta.view(), intercept);
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d_eta = Array1::zeros(n);
    for i in 0..n {
        loss += pointwise_loss(batch.task, eta[i], batch.y[i]);
        d_eta[i] = pointwise_loss_grad(batch.task, eta[i], batch.y[i]) * inv_n;
    }
    loss *= inv_n;

    let d_beta = &batch.x * &d_eta.view().insert_axis(Axis(1));
    let mut d_hc = match back {
        Back::Identity => d_beta,
        Back::L1(st) => project_l1_backward(d_beta.view(), hc.view(), &st)?,
        Back::Group(st) => {
            let g = match head {
                Head::Projected { constraints, .. } => constraints.groups.as_ref().unwrap(),
                Head::Masked { .. } => unreachable!(),
            };
            project_group_backward(d_beta.view(), hc.view(), g, &st)?
        }
    };
    if let Head::Masked { mask, .. } = head {
        Zip::from(&mut d_hc).and(mask).for_each(|v, &keep| {
            if !keep {
                *v = 0.0;
            }
        });
    }
    let d_h = match signs {
        Some(sc) => clip_signs_backward(d_hc.view(), h.view(), sc)?,
        None => d_hc,
    };

    let mut d_raw = Array2::zeros(raw.dim());
    d_raw.slice_mut(s![.., ..p]).assign(&d_h);
    if model.config.include_intercept {
        d_raw.column_mut(p).assign(&d_eta);
    }
    let grads = backward(model, &tape, d_raw.view())?;
    Ok((loss, grads))
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: OptimizerConfig,
    first: Gradients,
    second: Gradients,
    step: i32,
}

impl Adam {
    pub fn new(model: &NetworkModel, cfg: &OptimizerConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            step: 0,
        }
    }

    pub fn step(&mut self, model: &mut NetworkModel, grads: &Gradients) {
        self.step += 1;
        let (b1, b2, eps, lr) = (self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon, self.cfg.learning_rate);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (k, layer) in model.layers.iter_mut().enumerate() {
            let g = &grads.layers[k];
            let m = &mut self.first.layers[k];
            let v = &mut self.second.layers[k];
            Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|w, &g, m, v| update(w, g, m, v));
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|w, &g, m, v| update(w, g, m, v));
        }
    }
}

/// Result of an early-stopped optimization run.
#[derive(Debug, Clone)]
pub struct TrainingRun<T> {
    pub model: NetworkModel,
    /// Extra state captured alongside the best validation score.
    pub best_aux: T,
    pub best_validation: f64,
    /// Validation score before training (index 0) and after every epoch.
    pub history: Vec<f64>,
    pub epochs: usize,
}

/// Runs Adam over `train` until the validation score fails to improve for
/// `patience` epochs, returning the best-scoring parameters.
fn optimize<'h, T, F>(
    init: &NetworkModel,
    train: &Dataset,
    head_for: &dyn Fn(&[usize]) -> HeadOwned<'h>,
    opt: &OptimizerConfig,
    mut score: F,
) -> Result<TrainingRun<T>>
where
    F: FnMut(&NetworkModel) -> Result<(f64, T)>,
{
    opt.validate()?;
    let n = train.n();
    let mut model = init.clone();
    let mut adam = Adam::new(&model, opt);
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch_size = opt.batch_size.unwrap_or(n).min(n);

    let (initial, aux) = score(&model)?;
    if !initial.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut best = (model.clone(), aux, initial);
    let mut history = vec![initial];
    let mut wait = 0;
    let mut epochs = 0;

    let full: Vec<usize> = (0..n).collect();
    for epoch in 1..=opt.max_epochs {
        epochs = epoch;
        if batch_size < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch_size) {
            let (loss, grads) = if batch_size == n {
                let head = head_for(&full);
                training_loss(&model, Batch::from_dataset(train), head.borrow())?
            } else {
                let sub = train.select(chunk);
                let head = head_for(chunk);
                training_loss(&model, Batch::from_dataset(&sub), head.borrow())?
            };
            if !loss.is_finite() || grads.layers.iter().any(|l| !l.weight.iter().all(|v| v.is_finite())) {
                return Err(Error::Divergence { epoch });
            }
            adam.step(&mut model, &grads);
        }
        let (val, aux) = score(&model)?;
        if !val.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(val);
        if val < best.2 - opt.min_improvement {
            best = (model.clone(), aux, val);
            wait = 0;
        } else {
            wait += 1;
            if wait >= opt.patience {
                break;
            }
        }
    }
    Ok(TrainingRun {
        model: best.0,
        best_aux: best.1,
        best_validation: best.2,
        history,
        epochs,
    })
}

/// Owned counterpart of [`Head`] so mini-batches can carry a row-subset mask.
pub(crate) enum HeadOwned<'a> {
    Projected {
        lambda: f64,
        constraints: &'a Constraints,
    },
    Masked {
        mask: Array2<bool>,
        signs: Option<&'a SignConstraints>,
    },
}

impl HeadOwned<'_> {
    fn borrow(&self) -> Head<'_> {
        match self {
            HeadOwned::Projected { lambda, constraints } => Head::Projected {
                lambda: *lambda,
                constraints,
            },
            HeadOwned::Masked { mask, signs } => Head::Masked {
                mask: mask.view(),
                signs: *signs,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Fitted models

/// A trained model on the standardized scale, with everything needed for
/// inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub network: NetworkModel,
    pub polished_network: Option<NetworkModel>,
    /// Frozen inference threshold from the final full-batch training projection.
    pub theta_hat: f64,
    pub lambda: f64,
    /// Weight on the polished coefficients.
    pub gamma: f64,
    pub constraints: Constraints,
    pub standardizer: Option<Standardizer>,
    pub task: Task,
    /// Validation loss of the model as configured (at its `gamma`).
    pub validation_loss: f64,
}

/// Coefficients and intercepts for a batch of contextual rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub beta: Array2<f64>,
    pub intercept: Option<Array1<f64>>,
}

impl FittedModel {
    pub fn p(&self) -> usize {
        self.network.p()
    }

    pub fn m(&self) -> usize {
        self.network.m()
    }

    /// Thresholded coefficients of the original (unrelaxed) network.
    pub fn base_coefficients(&self, z: ArrayView2<'_, f64>) -> Result<Coefficients> {
        let (out, _) = forward(&self.network, z)?;
        let beta = self
            .constraints
            .threshold(out.coefficients, self.lambda, self.theta_hat)?;
        Ok(Coefficients {
            beta,
            intercept: out.intercept,
        })
    }

    /// Support indicator of the original network.
    pub fn support_mask(&self, z: ArrayView2<'_, f64>) -> Result<Array2<bool>> {
        Ok(self.base_coefficients(z)?.beta.mapv(|v| v != 0.0))
    }

    /// Polished network coefficients restricted to the original support.
    pub fn polished_coefficients(
        &self,
        z: ArrayView2<'_, f64>,
        mask: ArrayView2<'_, bool>,
    ) -> Result<Option<Coefficients>> {
        let Some(net) = &self.polished_network else {
            return Ok(None);
        };
        let (out, _) = forward(net, z)?;
        let mut beta = self.constraints.clip(out.coefficients)?;
        Zip::from(&mut beta).and(mask).for_each(|v, &keep| {
            if !keep {
                *v = 0.0;
            }
        });
        Ok(Some(Coefficients {
            beta,
            intercept: out.intercept,
        }))
    }

    /// Coefficients at an explicit relaxation weight.
    pub fn coefficients_at(&self, z: ArrayView2<'_, f64>, gamma: f64) -> Result<Coefficients> {
        let base = self.base_coefficients(z)?;
        if gamma == 0.0 {
            return Ok(base);
        }
        let mask = base.beta.mapv(|v| v != 0.0);
        match self.polished_coefficients(z, mask.view())? {
            Some(pol) => Ok(blend(&base, &pol, gamma)),
            None => Ok(base),
        }
    }

    /// Coefficients at the tuned relaxation weight, on the standardized scale.
    pub fn coefficients(&self, z: ArrayView2<'_, f64>) -> Result<Coefficients> {
        self.coefficients_at(z, self.gamma)
    }

    /// `x' beta(z) + b(z)` on standardized inputs.
    pub fn linear_predictor(&self, x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.p() || x.nrows() != z.nrows() {
            return Err(Error::shape(format!(
                "model has p = {}; got x of shape {:?} for {} contextual rows",
                self.p(),
                x.dim(),
                z.nrows()
            )));
        }
        let c = self.coefficients(z)?;
        Ok(linear_predictor(
            x,
            c.beta.view(),
            c.intercept.as_ref().map(|a| a.view()),
        ))
    }

    /// Applies the stored standardizer, if any, to raw data.
    pub fn prepare(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.p() != self.p() || ds.m() != self.m() {
            return Err(Error::shape(format!(
                "model expects p = {}, m = {}; data has p = {}, m = {}",
                self.p(),
                self.m(),
                ds.p(),
                ds.m()
            )));
        }
        match &self.standardizer {
            Some(s) => s.apply(ds),
            None => Ok(ds.clone()),
        }
    }

    /// Linear predictor on raw (unstandardized) data.
    pub fn linear_predictor_raw(&self, ds: &Dataset) -> Result<Array1<f64>> {
        let std = self.prepare(ds)?;
        self.linear_predictor(std.x.view(), std.z.view())
    }

    /// Predicted mean response on raw data.
    pub fn predict(&self, ds: &Dataset) -> Result<Array1<f64>> {
        Ok(self.linear_predictor_raw(ds)?.mapv(|v| self.task.mean(v)))
    }

    /// Coefficients on the original feature scale for raw data.
    pub fn coefficients_raw(&self, ds: &Dataset) -> Result<Coefficients> {
        let std = self.prepare(ds)?;
        let c = self.coefficients(std.z.view())?;
        match &self.standardizer {
            Some(s) => {
                let (beta, b0) = crate::data::destandardize_coefficients(c.beta.view(), c.intercept.as_ref(), s)?;
                Ok(Coefficients {
                    beta,
                    intercept: Some(b0),
                })
            }
            None => Ok(c),
        }
    }

    /// Mean loss on standardized data.
    pub fn loss_on(&self, ds: &Dataset) -> Result<f64> {
        let eta = self.linear_predictor(ds.x.view(), ds.z.view())?;
        Ok(mean_loss(ds.task, eta.view(), ds.y.view()))
    }
}

fn blend(base: &Coefficients, pol: &Coefficients, gamma: f64) -> Coefficients {
    let beta = &base.beta * (1.0 - gamma) + &pol.beta * gamma;
    let intercept = match (&base.intercept, &pol.intercept) {
        (Some(a), Some(b)) => Some(a * (1.0 - gamma) + b * gamma),
        (a, _) => a.clone(),
    };
    Coefficients { beta, intercept }
}

fn check_pair(train: &Dataset, val: &Dataset, init: &NetworkModel) -> Result<()> {
    if train.p() != val.p() || train.m() != val.m() || train.task != val.task {
        return Err(Error::shape("training and validation data disagree in shape or task"));
    }
    if train.p() != init.p() || train.m() != init.m() {
        return Err(Error::shape(format!(
            "network expects p = {}, m = {}; data has p = {}, m = {}",
            init.p(),
            init.m(),
            train.p(),
            train.m()
        )));
    }
    init.validate()
}

/// Threshold frozen from a full-batch training projection.
fn full_batch_theta(model: &NetworkModel, train: &Dataset, lambda: f64, constraints: &Constraints) -> Result<f64> {
    if lambda.is_infinite() || lambda == 0.0 {
        return Ok(0.0);
    }
    let (out, _) = forward(model, train.z.view())?;
    let h = constraints.clip(out.coefficients)?;
    Ok(match &constraints.groups {
        Some(g) => project_group(h.view(), g, lambda)?.1.inner.theta,
        None => project_l1(h.view(), lambda)?.1.theta,
    })
}

/// Diagnostics attached to a single fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: FittedModel,
    pub history: Vec<f64>,
    pub epochs: usize,
}

/// Trains at a fixed `lambda` from `init`, keeping the best-validation iterate.
/// Datasets are expected on the standardized scale.
pub fn fit_single(
    train: &Dataset,
    val: &Dataset,
    lambda: f64,
    init: &NetworkModel,
    constraints: &Constraints,
    opt: &OptimizerConfig,
) -> Result<FitReport> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    check_pair(train, val, init)?;
    let head = |_: &[usize]| HeadOwned::Projected { lambda, constraints };
    let run = optimize(init, train, &head, opt, |model| {
        let theta = full_batch_theta(model, train, lambda, constraints)?;
        let fm = FittedModel {
            network: model.clone(),
            polished_network: None,
            theta_hat: theta,
            lambda,
            gamma: 0.0,
            constraints: constraints.clone(),
            standardizer: None,
            task: train.task,
            validation_loss: f64::NAN,
        };
        Ok((fm.loss_on(val)?, theta))
    })?;
    Ok(FitReport {
        model: FittedModel {
            network: run.model,
            polished_network: None,
            theta_hat: run.best_aux,
            lambda,
            gamma: 0.0,
            constraints: constraints.clone(),
            standardizer: None,
            task: train.task,
            validation_loss: run.best_validation,
        },
        history: run.history,
        epochs: run.epochs,
    })
}

/// Trains the polished network on the fixed support of `fitted` and tunes the
/// relaxation weight over [`GAMMA_GRID`] on validation loss.
pub fn relax(fitted: &FittedModel, train: &Dataset, val: &Dataset, opt: &OptimizerConfig) -> Result<FittedModel> {
    check_pair(train, val, &fitted.network)?;
    let train_mask = fitted.support_mask(train.z.view())?;
    let mut out = fitted.clone();
    out.polished_network = None;
    out.gamma = 0.0;
    if !train_mask.iter().any(|b| *b) {
        out.validation_loss = fitted.loss_on(val)?;
        return Ok(out);
    }

    let val_base = fitted.base_coefficients(val.z.view())?;
    let val_mask = val_base.beta.mapv(|v| v != 0.0);
    let signs = fitted.constraints.signs.as_ref();
    let head = |rows: &[usize]| HeadOwned::Masked {
        mask: if rows.len() == train_mask.nrows() {
            train_mask.clone()
        } else {
            train_mask.select(Axis(0), rows)
        },
        signs,
    };
    let probe = FittedModel {
        polished_network: None,
        ..fitted.clone()
    };
    let run = optimize(&fitted.network, train, &head, opt, |model| {
        let mut fm = probe.clone();
        fm.polished_network = Some(model.clone());
        let pol = fm.polished_coefficients(val.z.view(), val_mask.view())?.unwrap();
        let eta = linear_predictor(val.x.view(), pol.beta.view(), pol.intercept.as_ref().map(|a| a.view()));
        Ok((mean_loss(val.task, eta.view(), val.y.view()), ()))
    })?;
    out.polished_network = Some(run.model);

    let pol = out.polished_coefficients(val.z.view(), val_mask.view())?.unwrap();
    let mut best = (0.0, f64::INFINITY);
    for &gamma in &GAMMA_GRID {
        let c = if gamma == 0.0 {
            val_base.clone()
        } else {
            blend(&val_base, &pol, gamma)
        };
        let eta = linear_predictor(val.x.view(), c.beta.view(), c.intercept.as_ref().map(|a| a.view()));
        let loss = mean_loss(val.task, eta.view(), val.y.view());
        if loss < best.1 {
            best = (gamma, loss);
        }
    }
    out.gamma = best.0;
    out.validation_loss = best.1;
    Ok(out)
}

/// One point on the regularization path.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub lambda: f64,
    /// Model at its tuned relaxation weight (or unrelaxed).
    pub model: FittedModel,
    /// Validation loss before relaxation.
    pub unrelaxed_validation_loss: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub lambdas: Vec<f64>,
    pub entries: Vec<PathEntry>,
}

/// Evenly spaced grid from `start` down to zero with `n` points.
pub fn lambda_grid(start: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|t| {
            if t == 0 {
                start
            } else {
                start * (last - t as f64) / last
            }
        })
        .collect()
}

/// Fits the full path: an unregularized fit sets the top of the grid, then
/// every smaller lambda is fitted warm-started from the previous weights.
pub fn fit_path(
    train: &Dataset,
    val: &Dataset,
    config: &PathConfig,
    init: &NetworkModel,
    constraints: &Constraints,
    opt: &OptimizerConfig,
) -> Result<PathResult> {
    fit_path_with(train, val, config, init, constraints, opt, |_, _| {})
}

/// [`fit_path`] with a callback after each lambda (index, entry).
pub fn fit_path_with(
    train: &Dataset,
    val: &Dataset,
    config: &PathConfig,
    init: &NetworkModel,
    constraints: &Constraints,
    opt: &OptimizerConfig,
    mut on_entry: impl FnMut(usize, &PathEntry),
) -> Result<PathResult> {
    if config.n_lambda < 2 {
        return Err(Error::invalid("the lambda path needs at least two values"));
    }
    let wrap = |index: usize| {
        move |e: Error| Error::Path {
            index,
            source: Box::new(e),
        }
    };
    let opt_at = |t: usize| OptimizerConfig {
        seed: opt.seed.wrapping_add(t as u64),
        ..opt.clone()
    };

    let first = fit_single(train, val, f64::INFINITY, init, constraints, &opt_at(0)).map_err(wrap(0))?;
    let (out, _) = forward(&first.model.network, train.z.view()).map_err(wrap(0))?;
    let lambda_max = constraints.penalty(out.coefficients.view()).map_err(wrap(0))?;
    let lambdas = lambda_grid(lambda_max, config.n_lambda);

    let mut entries = Vec::with_capacity(config.n_lambda);
    let mut current = first.model;
    current.lambda = lambdas[0];
    current.theta_hat = 0.0;
    let mut epochs = first.epochs;
    let mut warm = current.network.clone();
    for (t, &lambda) in lambdas.iter().enumerate() {
        if t > 0 {
            let rep = fit_single(train, val, lambda, &warm, constraints, &opt_at(t)).map_err(wrap(t))?;
            current = rep.model;
            epochs = rep.epochs;
        }
        warm = current.network.clone();
        let unrelaxed = current.validation_loss;
        let model = if config.relax {
            relax(&current, train, val, &opt_at(t)).map_err(wrap(t))?
        } else {
            current.clone()
        };
        let entry = PathEntry {
            lambda,
            model,
            unrelaxed_validation_loss: unrelaxed,
            epochs,
        };
        on_entry(t, &entry);
        entries.push(entry);
    }
    Ok(PathResult { lambdas, entries })
}

/// Picks the path entry with the smallest validation loss; ties go to the
/// larger lambda.
pub fn select_model(path: &PathResult) -> Result<&PathEntry> {
    let mut best: Option<&PathEntry> = None;
    for e in &path.entries {
        best = match best {
            None => Some(e),
            Some(b) => {
                let better = e.model.validation_loss < b.model.validation_loss
                    || (e.model.validation_loss == b.model.validation_loss && e.lambda > b.lambda);
                Some(if better { e } else { b })
            }
        };
    }
    best.ok_or_else(|| Error::invalid("cannot select from an empty path"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, NetworkConfig};
    use ndarray::array;

    fn tiny(n: usize, seed: u64) -> Dataset {
        let x = Array2::from_shape_fn((n, 3), |(i, j)| {
            (((i * 7 + j * 3 + seed as usize) % 11) as f64 - 5.0) / 3.0
        });
        let z = Array2::from_shape_fn((n, 2), |(i, j)| (((i * 5 + j + seed as usize) % 7) as f64 - 3.0) / 2.0);
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] * 1.5 - x[[i, 2]] + 0.1 * (i as f64).sin());
        Dataset::new(y, x, z, Task::Regression).unwrap()
    }

    #[test]
    fn logistic_loss_is_stable() {
        assert!(pointwise_loss(Task::Classification, 800.0, 1.0).abs() < 1e-12);
        assert!((pointwise_loss(Task::Classification, -800.0, 1.0) - 800.0).abs() < 1e-9);
        assert!((pointwise_loss(Task::Classification, 0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_rejected() {
        let model = init_network(NetworkConfig::new(3, 2)).unwrap();
        let x = Array2::<f64>::zeros((0, 3));
        let z = Array2::<f64>::zeros((0, 2));
        let y = Array1::<f64>::zeros(0);
        let c = Constraints::default();
        let batch = Batch {
            x: x.view(),
            z: z.view(),
            y: y.view(),
            task: Task::Regression,
        };
        assert!(training_loss(
            &model,
            batch,
            Head::Projected {
                lambda: 1.0,
                constraints: &c
            }
        )
        .is_err());
    }

    #[test]
    fn zero_lambda_is_intercept_only() {
        let ds = tiny(6, 0);
        let mut model = init_network(NetworkConfig::new(3, 2).with_seed(2)).unwrap();
        let last = model.layers.last_mut().unwrap();
        last.bias[3] = 0.7;
        last.weight.row_mut(3).fill(0.0);
        let c = Constraints::default();
        let (loss, grads) = training_loss(
            &model,
            Batch::from_dataset(&ds),
            Head::Projected {
                lambda: 0.0,
                constraints: &c,
            },
        )
        .unwrap();
        let expected = ds.y.iter().map(|y| (y - 0.7) * (y - 0.7)).sum::<f64>() / 6.0;
        assert!((loss - expected).abs() < 1e-12);
        // Only the intercept path carries gradient: the hidden layers see
        // nothing from the coefficient outputs and the intercept output row
        // of the last layer is the only nonzero row there.
        let last = grads.layers.last().unwrap();
        for j in 0..3 {
            assert!(last.weight.row(j).iter().all(|v| *v == 0.0));
            assert_eq!(last.bias[j], 0.0);
        }
    }

    #[test]
    fn infinite_lambda_constant_mode_is_least_squares() {
        let ds = tiny(5, 1);
        let mut model = init_network(NetworkConfig::constant(3, 2)).unwrap();
        model.layers[0].bias = array![0.2, -0.1, 0.4, 0.05];
        let c = Constraints::default();
        let (loss, _) = training_loss(
            &model,
            Batch::from_dataset(&ds),
            Head::Projected {
                lambda: f64::INFINITY,
                constraints: &c,
            },
        )
        .unwrap();
        let beta = array![0.2, -0.1, 0.4];
        let manual: f64 = (0..5)
            .map(|i| {
                let r = ds.y[i] - ds.x.row(i).dot(&beta) - 0.05;
                r * r
            })
            .sum::<f64>()
            / 5.0;
        assert!((loss - manual).abs() < 1e-12);
    }

    #[test]
    fn lambda_grid_spacing() {
        let g = lambda_grid(3.7, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 3.7);
        assert_eq!(g[49], 0.0);
        let step = g[0] - g[1];
        for w in g.windows(2) {
            assert!(w[0] > w[1]);
            assert!(((w[0] - w[1]) - step).abs() < 1e-12);
        }
    }

    #[test]
    fn patience_stops_when_validation_never_improves() {
        // Training pulls the intercept toward +1 while validation wants -1.
        let n = 4;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let z = Array2::zeros((n, 1));
        let train = Dataset::new(Array1::from_elem(n, 1.0), x.clone(), z.clone(), Task::Regression).unwrap();
        let val = Dataset::new(Array1::from_elem(n, -1.0), x, z, Task::Regression).unwrap();
        let init = init_network(NetworkConfig::constant(1, 1)).unwrap();
        let opt = OptimizerConfig {
            patience: 7,
            ..Default::default()
        };
        let rep = fit_single(&train, &val, 0.0, &init, &Constraints::default(), &opt).unwrap();
        assert_eq!(rep.epochs, 7);
        assert_eq!(rep.history.len(), 8);
        assert_eq!(rep.model.network, init);
    }

    #[test]
    fn returned_model_is_best_iterate() {
        let train = tiny(30, 2);
        let val = tiny(20, 5);
        let init = init_network(NetworkConfig::new(3, 2).with_seed(4)).unwrap();
        let opt = OptimizerConfig {
            learning_rate: 0.01,
            patience: 5,
            max_epochs: 200,
            ..Default::default()
        };
        let rep = fit_single(&train, &val, 1.0, &init, &Constraints::default(), &opt).unwrap();
        for h in &rep.history {
            assert!(rep.model.validation_loss <= *h);
        }
        let recomputed = rep.model.loss_on(&val).unwrap();
        assert!((recomputed - rep.model.validation_loss).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let train = tiny(10, 1);
        let val = tiny(10, 2);
        let init = init_network(NetworkConfig::new(3, 2)).unwrap();
        let opt = OptimizerConfig {
            learning_rate: 1e300,
            max_epochs: 50,
            ..Default::default()
        };
        match fit_single(&train, &val, f64::INFINITY, &init, &Constraints::default(), &opt) {
            Err(Error::Divergence { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.epochs)),
        }
    }

    #[test]
    fn select_model_rules() {
        let base = |lambda: f64, loss: f64| {
            let network = init_network(NetworkConfig::constant(1, 1)).unwrap();
            PathEntry {
                lambda,
                model: FittedModel {
                    network,
                    polished_network: None,
                    theta_hat: 0.0,
                    lambda,
                    gamma: 0.0,
                    constraints: Constraints::default(),
                    standardizer: None,
                    task: Task::Regression,
                    validation_loss: loss,
                },
                unrelaxed_validation_loss: loss,
                epochs: 0,
            }
        };
        let single = PathResult {
            lambdas: vec![1.0],
            entries: vec![base(1.0, 3.0)],
        };
        assert_eq!(select_model(&single).unwrap().lambda, 1.0);

        let curve = PathResult {
            lambdas: vec![3.0, 2.0, 1.0, 0.0],
            entries: vec![base(3.0, 2.0), base(2.0, 1.5), base(1.0, 1.0), base(0.0, 4.0)],
        };
        assert_eq!(select_model(&curve).unwrap().lambda, 1.0);

        let tie = PathResult {
            lambdas: vec![3.0, 2.0, 1.0],
            entries: vec![base(3.0, 2.0), base(2.0, 1.0), base(1.0, 1.0)],
        };
        assert_eq!(select_model(&tie).unwrap().lambda, 2.0);
        assert!(select_model(&PathResult {
            lambdas: vec![],
            entries: vec![]
        })
        .is_err());
    }
}
