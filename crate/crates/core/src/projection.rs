//! Batch projection kernels for the coefficient layer.
//!
//! The layer maps an `n x p` matrix of dense coefficients onto the set of
//! matrices whose *average* row l1 norm is at most `lambda`. The solution is a
//! soft-threshold at a single scalar `theta` shared by all rows, computed by a
//! sort-and-scan over the `n * p` magnitudes. Forward and backward kernels are
//! provided for the plain, grouped and sign-constrained variants, together
//! with the soft-threshold used at inference time once `theta` is frozen.
//!
//! Index sets (groups, sign constraints) are zero-based column indices.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Relative slack allowed on the l1 constraint after projection.
pub fn feasibility_tolerance(lambda: f64) -> f64 {
    1e-9 * lambda.max(1.0)
}

/// Mean l1 norm of the rows of `h`.
pub fn mean_l1(h: ArrayView2<'_, f64>) -> f64 {
    let n = h.nrows().max(1) as f64;
    h.iter().map(|v| v.abs()).sum::<f64>() / n
}

pub(crate) fn check_finite(h: ArrayView2<'_, f64>, what: &'static str) -> Result<()> {
    for ((row, col), v) in h.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what, row, col });
        }
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid(format!("radius must be nonnegative, got {lambda}")));
    }
    Ok(())
}

#[inline]
fn soft(x: f64, theta: f64) -> f64 {
    let m = x.abs() - theta;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Outcome of a projection pass, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    /// Soft-threshold level applied to every entry.
    pub theta: f64,
    /// Number of entries strictly above `theta`.
    pub k_max: usize,
    /// `|h_ij| > theta` for entries that survive the threshold.
    pub active: Array2<bool>,
    pub radius: f64,
    /// Input already satisfied the constraint; the projection was the identity.
    pub feasible: bool,
}

impl ProjectionState {
    pub fn shape(&self) -> (usize, usize) {
        self.active.dim()
    }
}

/// Projects the rows of `h` jointly onto `{B : (1/n) sum_i ||B_i||_1 <= lambda}`.
///
/// `lambda = f64::INFINITY` is accepted and yields the identity.
pub fn project_l1(h: ArrayView2<'_, f64>, lambda: f64) -> Result<(Array2<f64>, ProjectionState)> {
    check_lambda(lambda)?;
    check_finite(h, "dense coefficients")?;
    let (n, p) = h.dim();
    if n == 0 || p == 0 {
        return Err(Error::shape(format!("projection input must be non-empty, got {n}x{p}")));
    }

    if mean_l1(h) <= lambda {
        let state = ProjectionState {
            theta: 0.0,
            k_max: h.iter().filter(|v| **v != 0.0).count(),
            active: h.mapv(|v| v != 0.0),
            radius: lambda,
            feasible: true,
        };
        return Ok((h.to_owned(), state));
    }

    let theta_and_k = if lambda == 0.0 {
        let max = h.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        (max, 1)
    } else {
        threshold(h, lambda)
    };
    let (theta, k_max) = theta_and_k;

    let b = h.mapv(|v| soft(v, theta));
    let active = if lambda == 0.0 {
        Array2::from_elem((n, p), false)
    } else {
        h.mapv(|v| v.abs() > theta)
    };
    let state = ProjectionState {
        theta,
        k_max,
        active,
        radius: lambda,
        feasible: false,
    };
    Ok((b, state))
}

/// Sort-and-scan for the shared threshold. Ties in magnitude are ordered by
/// flat row-major index so the result is reproducible.
fn threshold(h: ArrayView2<'_, f64>, lambda: f64) -> (f64, usize) {
    let mut mags: Vec<f64> = h.iter().map(|v| v.abs()).collect();
    // Equal magnitudes are interchangeable in the scan, so the unstable sort
    // gives the same result as a stable (magnitude desc, index asc) order.
    mags.sort_unstable_by(|a, b| b.total_cmp(a));

    let budget = h.nrows() as f64 * lambda;
    let mut cumsum = 0.0;
    let mut k_max = 1;
    let mut sum_at_k_max = mags[0];
    for (k, &mu) in mags.iter().enumerate() {
        cumsum += mu;
        let k1 = (k + 1) as f64;
        if mu > (cumsum - budget) / k1 {
            k_max = k + 1;
            sum_at_k_max = cumsum;
        }
    }
    let theta = ((sum_at_k_max - budget) / k_max as f64).max(0.0);
    (theta, k_max)
}

/// Reverse-mode derivative of [`project_l1`].
///
/// For entries above the threshold the direct derivative is one; the
/// threshold itself depends on each active entry through
/// `d theta / d h_kl = sign(h_kl) / k_max`. Entries at or below the threshold
/// (and exact zeros) receive zero.
pub fn project_l1_backward(
    upstream: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    state: &ProjectionState,
) -> Result<Array2<f64>> {
    if upstream.dim() != h.dim() || state.shape() != h.dim() {
        return Err(Error::shape(format!(
            "backward inputs disagree: upstream {:?}, input {:?}, state {:?}",
            upstream.dim(),
            h.dim(),
            state.shape()
        )));
    }
    if state.feasible {
        return Ok(upstream.to_owned());
    }

    let mut coupling = 0.0;
    Zip::from(upstream).and(h).and(&state.active).for_each(|&g, &x, &a| {
        if a {
            coupling += g * sign(x);
        }
    });
    let shift = coupling / state.k_max as f64;

    let mut grad = Array2::zeros(h.dim());
    Zip::from(&mut grad)
        .and(upstream)
        .and(h)
        .and(&state.active)
        .for_each(|out, &g, &x, &a| {
            if a {
                *out = g - sign(x) * shift;
            }
        });
    Ok(grad)
}

/// Inference-time soft-threshold at a frozen level.
pub fn soft_threshold(h: ArrayView2<'_, f64>, theta_hat: f64) -> Result<Array2<f64>> {
    if theta_hat.is_nan() || theta_hat < 0.0 {
        return Err(Error::invalid(format!(
            "threshold must be nonnegative, got {theta_hat}"
        )));
    }
    Ok(h.mapv(|v| soft(v, theta_hat)))
}

/// A partition of the explanatory columns into non-overlapping groups.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
    p: usize,
}

impl GroupStructure {
    /// Every column in `0..p` must appear in exactly one group.
    pub fn new(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let mut seen = vec![false; p];
        for (k, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::Groups(format!("group {k} is empty")));
            }
            for &j in g {
                if j >= p {
                    return Err(Error::Groups(format!("group {k} references column {j} but p = {p}")));
                }
                if seen[j] {
                    return Err(Error::Groups(format!("column {j} appears in more than one group")));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Groups(format!(
                "column {j} is not assigned to a group; declare it as a singleton"
            )));
        }
        Ok(Self { groups, p })
    }

    pub fn singletons(p: usize) -> Self {
        Self {
            groups: (0..p).map(|j| vec![j]).collect(),
            p,
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `n x g` matrix of group Euclidean norms.
    pub fn norms(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((h.nrows(), self.groups.len()));
        for (mut row_out, row) in out.outer_iter_mut().zip(h.outer_iter()) {
            for (k, g) in self.groups.iter().enumerate() {
                row_out[k] = g.iter().map(|&j| row[j] * row[j]).sum::<f64>().sqrt();
            }
        }
        out
    }

    fn check_width(&self, h: ArrayView2<'_, f64>) -> Result<()> {
        if h.ncols() != self.p {
            return Err(Error::shape(format!(
                "group structure covers {} columns, input has {}",
                self.p,
                h.ncols()
            )));
        }
        Ok(())
    }
}

/// State of a grouped projection: the norm matrix and its l1 projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProjectionState {
    pub norms: Array2<f64>,
    pub projected_norms: Array2<f64>,
    pub inner: ProjectionState,
}

fn rescale_groups(
    h: ArrayView2<'_, f64>,
    groups: &GroupStructure,
    norms: &Array2<f64>,
    new_norms: &Array2<f64>,
) -> Array2<f64> {
    let mut b = Array2::zeros(h.dim());
    for (i, (mut row_out, row)) in b.outer_iter_mut().zip(h.outer_iter()).enumerate() {
        for (k, g) in groups.groups.iter().enumerate() {
            let xi = norms[[i, k]];
            if xi == 0.0 {
                continue;
            }
            let scale = new_norms[[i, k]] / xi;
            for &j in g {
                row_out[j] = row[j] * scale;
            }
        }
    }
    b
}

/// Projects onto the group l1 ball: group norms go through [`project_l1`] and
/// each group is rescaled by its projected norm. Zero-norm groups stay zero.
pub fn project_group(
    h: ArrayView2<'_, f64>,
    groups: &GroupStructure,
    lambda: f64,
) -> Result<(Array2<f64>, GroupProjectionState)> {
    check_lambda(lambda)?;
    check_finite(h, "dense coefficients")?;
    groups.check_width(h)?;
    let norms = groups.norms(h);
    let (projected_norms, inner) = project_l1(norms.view(), lambda)?;
    let b = rescale_groups(h, groups, &norms, &projected_norms);
    Ok((
        b,
        GroupProjectionState {
            norms,
            projected_norms,
            inner,
        },
    ))
}

/// Reverse-mode derivative of [`project_group`].
pub fn project_group_backward(
    upstream: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    groups: &GroupStructure,
    state: &GroupProjectionState,
) -> Result<Array2<f64>> {
    groups.check_width(h)?;
    if upstream.dim() != h.dim() || state.norms.nrows() != h.nrows() || state.norms.ncols() != groups.len() {
        return Err(Error::shape("group backward inputs disagree in shape"));
    }
    let (n, g) = state.norms.dim();

    // d loss / d projected_norm, and the part of d loss / d norm that comes
    // from the 1/norm rescale factor.
    let mut d_proj = Array2::zeros((n, g));
    let mut d_norm_direct = Array2::zeros((n, g));
    for i in 0..n {
        for (k, grp) in groups.groups.iter().enumerate() {
            let xi = state.norms[[i, k]];
            if xi == 0.0 {
                continue;
            }
            let inner: f64 = grp.iter().map(|&j| upstream[[i, j]] * h[[i, j]]).sum();
            d_proj[[i, k]] = inner / xi;
            d_norm_direct[[i, k]] = -state.projected_norms[[i, k]] * inner / (xi * xi);
        }
    }
    let d_norm = project_l1_backward(d_proj.view(), state.norms.view(), &state.inner)? + d_norm_direct;

    let mut grad = Array2::zeros(h.dim());
    for i in 0..n {
        for (k, grp) in groups.groups.iter().enumerate() {
            let xi = state.norms[[i, k]];
            if xi == 0.0 {
                continue;
            }
            let scale = state.projected_norms[[i, k]] / xi;
            let dn = d_norm[[i, k]] / xi;
            for &j in grp {
                grad[[i, j]] = upstream[[i, j]] * scale + dn * h[[i, j]];
            }
        }
    }
    Ok(grad)
}

/// Inference-time group soft-threshold at a frozen level.
pub fn group_soft_threshold(h: ArrayView2<'_, f64>, groups: &GroupStructure, theta_hat: f64) -> Result<Array2<f64>> {
    groups.check_width(h)?;
    let norms = groups.norms(h);
    let shrunk = soft_threshold(norms.view(), theta_hat)?;
    Ok(rescale_groups(h, groups, &norms, &shrunk))
}

/// Columns whose coefficients must be nonnegative or nonpositive.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct SignConstraints {
    nonneg: Vec<usize>,
    nonpos: Vec<usize>,
}

impl SignConstraints {
    pub fn new(mut nonneg: Vec<usize>, mut nonpos: Vec<usize>, p: usize) -> Result<Self> {
        nonneg.sort_unstable();
        nonneg.dedup();
        nonpos.sort_unstable();
        nonpos.dedup();
        if let Some(&j) = nonneg.iter().chain(&nonpos).find(|&&j| j >= p) {
            return Err(Error::Signs(format!("column {j} out of range for p = {p}")));
        }
        if let Some(j) = nonneg.iter().find(|j| nonpos.binary_search(j).is_ok()) {
            return Err(Error::Signs(format!(
                "column {j} is constrained both nonnegative and nonpositive"
            )));
        }
        Ok(Self { nonneg, nonpos })
    }

    pub fn nonneg(&self) -> &[usize] {
        &self.nonneg
    }

    pub fn nonpos(&self) -> &[usize] {
        &self.nonpos
    }

    pub fn is_empty(&self) -> bool {
        self.nonneg.is_empty() && self.nonpos.is_empty()
    }

    fn max_index(&self) -> Option<usize> {
        self.nonneg.iter().chain(&self.nonpos).copied().max()
    }

    /// `true` where the entry violates its column's sign constraint.
    pub fn violations(&self, h: ArrayView2<'_, f64>) -> Array2<bool> {
        let mut out = Array2::from_elem(h.dim(), false);
        for &j in &self.nonneg {
            Zip::from(out.column_mut(j))
                .and(h.column(j))
                .for_each(|o, &v| *o = v < 0.0);
        }
        for &j in &self.nonpos {
            Zip::from(out.column_mut(j))
                .and(h.column(j))
                .for_each(|o, &v| *o = v > 0.0);
        }
        out
    }
}

/// Zeroes entries whose sign contradicts the constraints. Projecting the
/// result onto the l1 ball solves the sign-constrained projection.
pub fn clip_signs(h: ArrayView2<'_, f64>, signs: &SignConstraints) -> Result<Array2<f64>> {
    if let Some(j) = signs.max_index() {
        if j >= h.ncols() {
            return Err(Error::shape(format!(
                "sign constraint on column {j} but input has {} columns",
                h.ncols()
            )));
        }
    }
    let mut out = h.to_owned();
    for &j in &signs.nonneg {
        out.column_mut(j).mapv_inplace(|v| if v < 0.0 { 0.0 } else { v });
    }
    for &j in &signs.nonpos {
        out.column_mut(j).mapv_inplace(|v| if v > 0.0 { 0.0 } else { v });
    }
    Ok(out)
}

/// Gradient of [`clip_signs`]: clipped entries pass nothing back.
pub fn clip_signs_backward(
    upstream: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    signs: &SignConstraints,
) -> Result<Array2<f64>> {
    if upstream.dim() != h.dim() {
        return Err(Error::shape("clip backward inputs disagree in shape"));
    }
    let mask = signs.violations(h);
    let mut grad = upstream.to_owned();
    Zip::from(&mut grad).and(&mask).for_each(|g, &m| {
        if m {
            *g = 0.0;
        }
    });
    Ok(grad)
}

/// Row sums of absolute values, used by feasibility checks.
pub fn row_l1(h: ArrayView2<'_, f64>) -> ndarray::Array1<f64> {
    h.map_axis(Axis(1), |r| r.iter().map(|v| v.abs()).sum())
}
