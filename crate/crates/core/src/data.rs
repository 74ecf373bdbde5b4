//! Datasets, standardization, the synthetic generator, splitting and
//! delimited-text ingestion.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{sigmoid, Task};
use crate::projection::check_finite;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Array1<f64>,
    /// Explanatory features, `n x p`.
    pub x: Array2<f64>,
    /// Contextual features, `n x m`.
    pub z: Array2<f64>,
    pub task: Task,
    pub response_name: String,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated column names (`y`, `x1..`, `z1..`).
    pub fn new(y: Array1<f64>, x: Array2<f64>, z: Array2<f64>, task: Task) -> Result<Self> {
        let x_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let z_names = (1..=z.ncols()).map(|j| format!("z{j}")).collect();
        let ds = Self {
            y,
            x,
            z,
            task,
            response_name: "y".to_string(),
            x_names,
            z_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.z.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no observations"));
        }
        if self.x.nrows() != n || self.z.nrows() != n {
            return Err(Error::shape(format!(
                "response has {n} rows, explanatory {}, contextual {}",
                self.x.nrows(),
                self.z.nrows()
            )));
        }
        if self.x_names.len() != self.x.ncols() || self.z_names.len() != self.z.ncols() {
            return Err(Error::shape("column names do not match the feature matrices"));
        }
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "response",
                row: i,
                col: 0,
            });
        }
        check_finite(self.x.view(), "explanatory features")?;
        check_finite(self.z.view(), "contextual features")?;
        if self.task == Task::Classification {
            if let Some(i) = self.y.iter().position(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::invalid(format!(
                    "classification response must be 0 or 1, row {i} has {}",
                    self.y[i]
                )));
            }
        }
        Ok(())
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: self.y.select(Axis(0), idx),
            x: self.x.select(Axis(0), idx),
            z: self.z.select(Axis(0), idx),
            task: self.task,
            response_name: self.response_name.clone(),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
        }
    }

    fn slice_rows(&self, start: usize, end: usize) -> Dataset {
        let idx: Vec<usize> = (start..end).collect();
        self.select(&idx)
    }
}

/// Column means and sample standard deviations (denominator `n - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub z_means: Vec<f64>,
    pub z_sds: Vec<f64>,
}

fn column_moments(a: ArrayView2<'_, f64>, names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.nrows();
    let mut means = Vec::with_capacity(a.ncols());
    let mut sds = Vec::with_capacity(a.ncols());
    for (j, col) in a.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::ConstantColumn(names[j].clone()));
        }
        means.push(mean);
        sds.push(sd);
    }
    Ok((means, sds))
}

fn scale_columns(a: &mut Array2<f64>, means: &[f64], sds: &[f64]) {
    for (mut col, (m, s)) in a.axis_iter_mut(Axis(1)).zip(means.iter().zip(sds)) {
        col.mapv_inplace(|v| (v - m) / s);
    }
}

impl Standardizer {
    pub fn identity(p: usize, m: usize) -> Self {
        Self {
            x_means: vec![0.0; p],
            x_sds: vec![1.0; p],
            z_means: vec![0.0; m],
            z_sds: vec![1.0; m],
        }
    }

    /// Applies the stored transform to a dataset with the same columns.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.p() != self.x_means.len() || ds.m() != self.z_means.len() {
            return Err(Error::shape(format!(
                "standardizer expects p = {}, m = {}; dataset has p = {}, m = {}",
                self.x_means.len(),
                self.z_means.len(),
                ds.p(),
                ds.m()
            )));
        }
        let mut out = ds.clone();
        scale_columns(&mut out.x, &self.x_means, &self.x_sds);
        scale_columns(&mut out.z, &self.z_means, &self.z_sds);
        Ok(out)
    }
}

/// Centers and scales every explanatory and contextual column. The response
/// is left untouched.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    ds.validate()?;
    let (x_means, x_sds) = column_moments(ds.x.view(), &ds.x_names)?;
    let (z_means, z_sds) = column_moments(ds.z.view(), &ds.z_names)?;
    let s = Standardizer {
        x_means,
        x_sds,
        z_means,
        z_sds,
    };
    Ok((s.apply(ds)?, s))
}

/// Maps coefficients fitted on standardized explanatory features back to the
/// original scale. The zero pattern is preserved exactly.
pub fn destandardize_coefficients(
    beta: ArrayView2<'_, f64>,
    intercept: Option<&Array1<f64>>,
    s: &Standardizer,
) -> Result<(Array2<f64>, Array1<f64>)> {
    if beta.ncols() != s.x_sds.len() {
        return Err(Error::shape(format!(
            "coefficients have {} columns, standardizer covers {}",
            beta.ncols(),
            s.x_sds.len()
        )));
    }
    let mut out = beta.to_owned();
    for (mut col, sd) in out.axis_iter_mut(Axis(1)).zip(&s.x_sds) {
        col.mapv_inplace(|v| v / sd);
    }
    let mut b0 = match intercept {
        Some(b) => b.clone(),
        None => Array1::zeros(beta.nrows()),
    };
    for (b, row) in b0.iter_mut().zip(out.outer_iter()) {
        *b -= row.iter().zip(&s.x_means).map(|(c, m)| c * m).sum::<f64>();
    }
    Ok((out, b0))
}

// ---------------------------------------------------------------------------
// Synthetic data

/// How the true coefficient functions are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientDesign {
    /// Each feature is active inside a hypersphere in contextual space, with
    /// a coefficient decaying linearly from one at its center.
    Hypersphere,
    /// `active` features are relevant everywhere with constant coefficients.
    Fixed { active: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub task: Task,
    /// Target variance of the signal `kappa * x' beta(z)`.
    pub signal_variance: f64,
    /// Per-feature sparsity targets are drawn uniformly from this range.
    pub sparsity_range: (f64, f64),
    /// Base of the `rho^|i-j|` covariance of the explanatory features.
    pub correlation: f64,
    pub design: CoefficientDesign,
    /// Leading rows used to calibrate `kappa` (the training portion).
    pub kappa_rows: Option<usize>,
    /// Monte Carlo draws used to calibrate the hypersphere radii.
    pub calibration_samples: usize,
    pub seed: u64,
}

/// Allowed range for per-feature sparsity targets.
pub const SPARSITY_POLICY: (f64, f64) = (0.05, 0.15);

impl SimulationSpec {
    pub fn new(p: usize, m: usize, n: usize, seed: u64) -> Self {
        Self {
            p,
            m,
            n,
            task: Task::Regression,
            signal_variance: 5.0,
            sparsity_range: SPARSITY_POLICY,
            correlation: 0.5,
            design: CoefficientDesign::Hypersphere,
            kappa_rows: None,
            calibration_samples: 1_000_000,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Err(Error::invalid("simulation needs p >= 1 and n >= 1"));
        }
        if !(self.signal_variance > 0.0) {
            return Err(Error::invalid("signal variance must be positive"));
        }
        if !(self.correlation.abs() < 1.0) {
            return Err(Error::invalid("correlation base must lie in (-1, 1)"));
        }
        if let Some(k) = self.kappa_rows {
            if k < 2 || k > self.n {
                return Err(Error::invalid(format!("kappa_rows must be in 2..={}, got {k}", self.n)));
            }
        } else if self.n < 2 {
            return Err(Error::invalid("at least two rows are needed to calibrate kappa"));
        }
        match self.design {
            CoefficientDesign::Hypersphere => {
                if self.m == 0 {
                    return Err(Error::invalid("hypersphere design needs m >= 1"));
                }
                let (lo, hi) = self.sparsity_range;
                if !(lo <= hi) || lo < SPARSITY_POLICY.0 || hi > SPARSITY_POLICY.1 {
                    return Err(Error::invalid(format!(
                        "sparsity targets [{lo}, {hi}] fall outside the calibrated range [{}, {}]",
                        SPARSITY_POLICY.0, SPARSITY_POLICY.1
                    )));
                }
                if self.calibration_samples < 100 {
                    return Err(Error::invalid("radius calibration needs at least 100 samples"));
                }
            }
            CoefficientDesign::Fixed { active } => {
                if active == 0 || active > self.p {
                    return Err(Error::invalid(format!(
                        "fixed design needs 1..={} active features",
                        self.p
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Nonzero pattern of the generating coefficients, `n x p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrueSupport(pub Array2<bool>);

impl TrueSupport {
    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: TrueSupport,
    /// Generating coefficients `beta(z_i)`, before the `kappa` scaling.
    pub coefficients: Array2<f64>,
    pub kappa: f64,
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub sparsity_targets: Vec<f64>,
    /// Fixed design only: constant coefficient per feature.
    pub fixed_coefficients: Option<Vec<f64>>,
}

impl Simulation {
    /// Fraction of rows in which each feature is active.
    pub fn realized_sparsity(&self) -> Vec<f64> {
        let n = self.truth.0.nrows() as f64;
        self.truth
            .0
            .axis_iter(Axis(1))
            .map(|c| c.iter().filter(|b| **b).count() as f64 / n)
            .collect()
    }

    fn slice(&self, start: usize, end: usize) -> (Dataset, TrueSupport) {
        (
            self.dataset.slice_rows(start, end),
            TrueSupport(self.truth.0.slice(ndarray::s![start..end, ..]).to_owned()),
        )
    }
}

/// Lower Cholesky factor of `rho^|i-j|`.
fn ar_cholesky(p: usize, rho: f64) -> Array2<f64> {
    let sigma = Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()));
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = sigma[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..p {
            let mut v = sigma[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    l
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Coefficient of a hypersphere feature at distance `dist` from its center.
pub fn hypersphere_coefficient(dist: f64, radius: f64) -> f64 {
    if dist <= radius {
        1.0 - dist / (2.0 * radius)
    } else {
        0.0
    }
}

/// Radius whose ball around `center` captures a `target` fraction of the
/// uniform contextual distribution, taken as the empirical quantile of the
/// distances from `samples` Monte Carlo draws.
fn calibrate_radius(center: &[f64], target: f64, draws: &Array2<f64>) -> Result<f64> {
    let mut d: Vec<f64> = draws
        .outer_iter()
        .map(|z| distance(z.as_slice().unwrap(), center))
        .collect();
    let k = ((target * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
    let (_, r, _) = d.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    let r = *r;
    let diameter = 2.0 * (center.len() as f64).sqrt();
    if !(r > 0.0) || r > diameter {
        return Err(Error::invalid(format!(
            "sparsity target {target} needs radius {r}, outside (0, {diameter}]"
        )));
    }
    Ok(r)
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
}

/// Draws a synthetic dataset with contextually varying sparse coefficients.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulation> {
    spec.validate()?;
    let (p, m, n) = (spec.p, spec.m, spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut centers = Vec::new();
    let mut radii = Vec::new();
    let mut targets = Vec::new();
    let mut fixed = None;
    match spec.design {
        CoefficientDesign::Hypersphere => {
            centers = (0..p)
                .map(|_| (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>())
                .collect();
            let (lo, hi) = spec.sparsity_range;
            targets = (0..p)
                .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect();
            let mut cal_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
            let draws =
                Array2::from_shape_simple_fn((spec.calibration_samples, m), || cal_rng.random_range(-1.0..=1.0));
            for (c, &t) in centers.iter().zip(&targets) {
                radii.push(calibrate_radius(c, t, &draws)?);
            }
        }
        CoefficientDesign::Fixed { active } => {
            let mut idx: Vec<usize> = (0..p).collect();
            idx.shuffle(&mut rng);
            let mut values = vec![0.0; p];
            for &j in &idx[..active] {
                values[j] = rng.random_range(0.5..=1.0);
            }
            fixed = Some(values);
        }
    }

    let chol = ar_cholesky(p, spec.correlation);
    let mut x = Array2::<f64>::zeros((n, p));
    let mut z = Array2::<f64>::zeros((n, m));
    let mut coefficients = Array2::<f64>::zeros((n, p));
    let mut e = vec![0.0; p];
    for i in 0..n {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for r in 0..p {
            x[[i, r]] = (0..=r).map(|k| chol[[r, k]] * e[k]).sum();
        }
        for k in 0..m {
            z[[i, k]] = rng.random_range(-1.0..=1.0);
        }
        match &fixed {
            Some(values) => coefficients.row_mut(i).assign(&ndarray::ArrayView1::from(values)),
            None => {
                let zi = z.row(i).to_vec();
                for j in 0..p {
                    coefficients[[i, j]] = hypersphere_coefficient(distance(&zi, &centers[j]), radii[j]);
                }
            }
        }
    }

    let truth = match &fixed {
        Some(values) => Array2::from_shape_fn((n, p), |(_, j)| values[j] != 0.0),
        None => Array2::from_shape_fn((n, p), |(i, j)| {
            distance(z.row(i).as_slice().unwrap(), &centers[j]) <= radii[j]
        }),
    };

    let signal: Vec<f64> = (&x * &coefficients).sum_axis(Axis(1)).to_vec();
    let cal = spec.kappa_rows.unwrap_or(n);
    let var = sample_variance(&signal[..cal]);
    if !(var > 0.0) {
        return Err(Error::invalid(
            "generated signal has zero variance; cannot calibrate kappa",
        ));
    }
    let kappa = (spec.signal_variance / var).sqrt();

    let y: Array1<f64> = signal
        .iter()
        .map(|s| {
            let mu = kappa * s;
            match spec.task {
                Task::Regression => mu + rng.sample::<f64, _>(StandardNormal),
                Task::Classification => f64::from(u8::from(rng.random::<f64>() < sigmoid(mu))),
            }
        })
        .collect();

    let dataset = Dataset::new(y, x, z, spec.task)?;
    Ok(Simulation {
        dataset,
        truth: TrueSupport(truth),
        coefficients,
        kappa,
        centers,
        radii,
        sparsity_targets: targets,
        fixed_coefficients: fixed,
    })
}

/// Training, validation and testing data of `n` rows each, drawn from one
/// generator with `kappa` calibrated on the training rows.
#[derive(Debug, Clone)]
pub struct SimulatedSplits {
    pub train: (Dataset, TrueSupport),
    pub val: (Dataset, TrueSupport),
    pub test: (Dataset, TrueSupport),
    pub simulation: Simulation,
}

pub fn simulate_splits(spec: &SimulationSpec) -> Result<SimulatedSplits> {
    let n = spec.n;
    let full = SimulationSpec {
        n: 3 * n,
        kappa_rows: Some(n),
        ..spec.clone()
    };
    let sim = simulate(&full)?;
    Ok(SimulatedSplits {
        train: sim.slice(0, n),
        val: sim.slice(n, 2 * n),
        test: sim.slice(2 * n, 3 * n),
        simulation: sim,
    })
}

/// Uniform random partition into training, validation and testing rows.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must be positive and sum to one, got {fractions:?}"
        )));
    }
    let n = ds.n();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = (fractions[1] * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::invalid(format!(
            "{n} rows cannot be split into three non-empty parts with {fractions:?}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        ds.select(&idx[..n_train]),
        ds.select(&idx[n_train..n_train + n_val]),
        ds.select(&idx[n_train + n_val..]),
    ))
}

// ---------------------------------------------------------------------------
// Delimited text

/// Which columns of a table play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    /// Response column; may be absent when loading data for prediction.
    pub response: Option<String>,
    pub contextual: Vec<String>,
    /// Explanatory columns; `None` means every remaining column.
    pub explanatory: Option<Vec<String>>,
    pub task: Task,
    pub delimiter: u8,
}

impl TableSchema {
    pub fn new(response: &str, contextual: &[&str], task: Task) -> Self {
        Self {
            response: Some(response.to_string()),
            contextual: contextual.iter().map(|s| s.to_string()).collect(),
            explanatory: None,
            task,
            delimiter: b',',
        }
    }
}

fn table_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Table {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a delimited table with a header row into a dataset.
pub fn load_table(path: &Path, schema: &TableSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| table_err(path, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(table_err(path, 1, "file is empty or has no header row"));
    }
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: column `{name}` not found in header", path.display())))
    };

    let y_col = schema.response.as_deref().map(find).transpose()?;
    let z_cols = schema.contextual.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let x_cols = match &schema.explanatory {
        Some(names) => names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?,
        None => (0..header.len())
            .filter(|j| Some(*j) != y_col && !z_cols.contains(j))
            .collect(),
    };
    if x_cols.is_empty() {
        return Err(Error::Schema(format!("{}: no explanatory columns", path.display())));
    }

    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut z = Vec::new();
    let mut rows = 0usize;
    for (k, rec) in reader.records().enumerate() {
        let fallback_line = k + 2;
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
            table_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
        if rec.len() != header.len() {
            return Err(table_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let cell = |j: usize| -> Result<f64> {
            let raw = rec[j].trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| table_err(path, line, format!("column `{}`: `{raw}` is not a number", header[j])))?;
            if !v.is_finite() {
                return Err(table_err(path, line, format!("column `{}` is not finite", header[j])));
            }
            Ok(v)
        };
        if let Some(j) = y_col {
            let v = cell(j)?;
            if schema.task == Task::Classification && v != 0.0 && v != 1.0 {
                return Err(table_err(
                    path,
                    line,
                    format!("classification response must be 0 or 1, got {v}"),
                ));
            }
            y.push(v);
        }
        for &j in &x_cols {
            x.push(cell(j)?);
        }
        for &j in &z_cols {
            z.push(cell(j)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(table_err(path, 1, "file contains a header but no data rows"));
    }

    let y = if y_col.is_some() {
        Array1::from(y)
    } else {
        Array1::zeros(rows)
    };
    let ds = Dataset {
        y,
        x: Array2::from_shape_vec((rows, x_cols.len()), x).expect("row-major fill"),
        z: Array2::from_shape_vec((rows, z_cols.len()), z).expect("row-major fill"),
        task: schema.task,
        response_name: schema.response.clone().unwrap_or_else(|| "y".into()),
        x_names: x_cols.iter().map(|&j| header[j].clone()).collect(),
        z_names: z_cols.iter().map(|&j| header[j].clone()).collect(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `y, x..., z...` with a header row.
pub fn write_table(path: &Path, ds: &Dataset, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(csv_io)?;
    let mut header = vec![ds.response_name.clone()];
    header.extend(ds.x_names.iter().cloned());
    header.extend(ds.z_names.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..ds.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(ds.y[i].to_string());
        rec.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        rec.extend(ds.z.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a 0/1 support table with the given column names.
pub fn write_support(path: &Path, support: &Array2<bool>, names: &[String], delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(csv_io)?;
    w.write_record(names).map_err(csv_io)?;
    for row in support.outer_iter() {
        w.write_record(row.iter().map(|b| if *b { "1" } else { "0" }))
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a 0/1 support table written by [`write_support`].
pub fn load_support(path: &Path, delimiter: u8) -> Result<TrueSupport> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_reader(std::io::BufReader::new(file));
    let width = reader.headers().map_err(|e| table_err(path, 1, e.to_string()))?.len();
    let mut cells = Vec::new();
    let mut rows = 0;
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| table_err(path, line, e.to_string()))?;
        if rec.len() != width {
            return Err(table_err(
                path,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for v in rec.iter() {
            match v.trim() {
                "0" => cells.push(false),
                "1" => cells.push(true),
                other => return Err(table_err(path, line, format!("support cell `{other}` is not 0 or 1"))),
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(table_err(path, 1, "support table has no rows"));
    }
    Ok(TrueSupport(
        Array2::from_shape_vec((rows, width), cells).expect("row-major fill"),
    ))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
