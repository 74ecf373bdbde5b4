//! Reference implementations used only by tests. None of them share code
//! with the library kernels: projections are solved by bisection on the
//! Lagrange multiplier of the KKT system, gradients by central differences.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random_range(-scale..scale))
}

fn bisect(mut f: impl FnMut(f64) -> f64, target: f64, mut hi: f64) -> f64 {
    // f is nonincreasing on [0, hi] with f(hi) <= target.
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Euclidean projection of the whole batch onto {B : sum |B| <= n lambda}.
/// Returns the projection and the multiplier.
pub fn l1_ball_oracle(h: ArrayView2<'_, f64>, lambda: f64) -> (Array2<f64>, f64) {
    let budget = h.nrows() as f64 * lambda;
    let total: f64 = h.iter().map(|v| v.abs()).sum();
    if total <= budget {
        return (h.to_owned(), 0.0);
    }
    let hmax = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mass = |t: f64| h.iter().map(|v| (v.abs() - t).max(0.0)).sum::<f64>();
    let theta = bisect(mass, budget, hmax);
    (h.mapv(|v| v.signum() * (v.abs() - theta).max(0.0)), theta)
}

/// Projection onto {B : sum_i sum_g ||B_ig||_2 <= n lambda}.
pub fn group_ball_oracle(h: ArrayView2<'_, f64>, groups: &[Vec<usize>], lambda: f64) -> Array2<f64> {
    let n = h.nrows();
    let budget = n as f64 * lambda;
    let mut norms = Vec::new();
    for i in 0..n {
        for g in groups {
            norms.push(g.iter().map(|&j| h[[i, j]] * h[[i, j]]).sum::<f64>().sqrt());
        }
    }
    let total: f64 = norms.iter().sum();
    if total <= budget {
        return h.to_owned();
    }
    let hmax = norms.iter().cloned().fold(0.0, f64::max);
    let theta = bisect(|t| norms.iter().map(|v| (v - t).max(0.0)).sum(), budget, hmax);
    let mut out = Array2::zeros(h.dim());
    let mut k = 0;
    for i in 0..n {
        for g in groups {
            let nm = norms[k];
            k += 1;
            if nm > theta {
                let scale = (nm - theta) / nm;
                for &j in g {
                    out[[i, j]] = h[[i, j]] * scale;
                }
            }
        }
    }
    out
}

/// Projection onto the l1 ball intersected with sign constraints
/// (`+1` nonnegative, `-1` nonpositive, `0` free per column). For a fixed
/// multiplier the problem separates per entry into a one-dimensional
/// constrained minimization, solved in closed form; the multiplier is found
/// by bisection on the budget.
pub fn sign_ball_oracle(h: ArrayView2<'_, f64>, sign: &[i8], lambda: f64) -> Array2<f64> {
    let entry = |j: usize, v: f64, t: f64| -> f64 {
        // argmin_b (b - v)^2 / 2 + t |b| over the allowed half-line.
        let free = v.signum() * (v.abs() - t).max(0.0);
        match sign[j] {
            1 => free.max(0.0),
            -1 => free.min(0.0),
            _ => free,
        }
    };
    let solve = |t: f64| Array2::from_shape_fn(h.dim(), |(i, j)| entry(j, h[[i, j]], t));
    let budget = h.nrows() as f64 * lambda;
    let at_zero = solve(0.0);
    if at_zero.iter().map(|v| v.abs()).sum::<f64>() <= budget {
        return at_zero;
    }
    let hmax = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let theta = bisect(|t| solve(t).iter().map(|v| v.abs()).sum(), budget, hmax);
    solve(theta)
}

pub fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = work[k];
            work[k] = orig + step;
            let up = f(&work);
            work[k] = orig - step;
            let down = f(&work);
            work[k] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Gradients smaller than this are compared in absolute terms: at step 1e-6
/// the round-off in a central difference is around 1e-10, so a relative
/// error against an exactly-zero gradient is meaningless.
pub const GRADIENT_FLOOR: f64 = 1e-3;

/// ||a - b|| / max(||a||, ||b||, GRADIENT_FLOOR).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(GRADIENT_FLOOR)
}

/// Dense ReLU network evaluated by explicit loops, for checking the
/// vectorized forward pass.
pub fn naive_forward(weights: &[(Vec<Vec<f64>>, Vec<f64>)], z: &[f64]) -> Vec<f64> {
    let mut a = z.to_vec();
    for (k, (w, b)) in weights.iter().enumerate() {
        let mut next = Vec::with_capacity(b.len());
        for (row, bias) in w.iter().zip(b) {
            let mut s = *bias;
            for (wij, aj) in row.iter().zip(&a) {
                s += wij * aj;
            }
            next.push(if k + 1 < weights.len() { s.max(0.0) } else { s });
        }
        a = next;
    }
    a
}

/// Print a single acceptance line and record the outcome.
pub fn report(results: &mut Vec<(String, bool)>, name: &str, pass: bool, detail: String) {
    println!("{} criterion {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    results.push((name.to_string(), pass));
}

// ---------------------------------------------------------------------------
// Gradient checks. Each returns the relative error between the analytic
// gradient and central differences at step `FD_STEP`, or `None` when the
// random instance lands too close to a kink to be a fair test.

pub const FD_STEP: f64 = 1e-6;
const KINK_MARGIN: f64 = 1e-3;

use ctxlasso::data::Dataset;
use ctxlasso::network::{forward, init_network, NetworkConfig, Task};
use ctxlasso::projection::{
    clip_signs, clip_signs_backward, project_group, project_group_backward, project_l1, project_l1_backward,
    GroupStructure, SignConstraints,
};
use ctxlasso::training::{training_loss, Batch, Constraints, Head};
use ndarray::Array1;

fn fd_of(h: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Vec<f64> {
    let dim = h.dim();
    finite_difference(h.as_slice().unwrap(), FD_STEP, |v| {
        f(&Array2::from_shape_vec(dim, v.to_vec()).unwrap())
    })
}

pub fn l1_backward_error(seed: u64) -> Option<f64> {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let p = r.random_range(1..=6);
    let h = random_matrix(&mut r, n, p, 3.0);
    let lambda = r.random_range(0.1..0.9) * h.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let g = random_matrix(&mut r, n, p, 1.0);
    let (_, st) = project_l1(h.view(), lambda).unwrap();
    if h.iter().any(|v| (v.abs() - st.theta).abs() < KINK_MARGIN) {
        return None;
    }
    let analytic = project_l1_backward(g.view(), h.view(), &st).unwrap();
    let fd = fd_of(&h, |hv| (project_l1(hv.view(), lambda).unwrap().0 * &g).sum());
    Some(relative_error(analytic.as_slice().unwrap(), &fd))
}

pub fn group_backward_error(seed: u64) -> Option<f64> {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let h = random_matrix(&mut r, n, 4, 3.0);
    let gs = GroupStructure::new(vec![vec![0, 1], vec![2], vec![3]], 4).unwrap();
    let norms = gs.norms(h.view());
    let lambda = r.random_range(0.1..0.9) * norms.sum() / n as f64;
    let g = random_matrix(&mut r, n, 4, 1.0);
    let (_, st) = project_group(h.view(), &gs, lambda).unwrap();
    if norms.iter().any(|v| (v - st.inner.theta).abs() < KINK_MARGIN) {
        return None;
    }
    let analytic = project_group_backward(g.view(), h.view(), &gs, &st).unwrap();
    let fd = fd_of(&h, |hv| (project_group(hv.view(), &gs, lambda).unwrap().0 * &g).sum());
    Some(relative_error(analytic.as_slice().unwrap(), &fd))
}

/// Sign clipping followed by the l1 projection.
pub fn signed_backward_error(seed: u64) -> Option<f64> {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let h = random_matrix(&mut r, n, 4, 3.0);
    let sc = SignConstraints::new(vec![0], vec![2], 4).unwrap();
    let clipped = clip_signs(h.view(), &sc).unwrap();
    let lambda = r.random_range(0.1..0.9) * clipped.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let g = random_matrix(&mut r, n, 4, 1.0);
    let (_, st) = project_l1(clipped.view(), lambda).unwrap();
    if h.iter().any(|v| v.abs() < KINK_MARGIN)
        || clipped
            .iter()
            .any(|v| *v != 0.0 && (v.abs() - st.theta).abs() < KINK_MARGIN)
    {
        return None;
    }
    let up = project_l1_backward(g.view(), clipped.view(), &st).unwrap();
    let analytic = clip_signs_backward(up.view(), h.view(), &sc).unwrap();
    let fd = fd_of(&h, |hv| {
        let c = clip_signs(hv.view(), &sc).unwrap();
        (project_l1(c.view(), lambda).unwrap().0 * &g).sum()
    });
    Some(relative_error(analytic.as_slice().unwrap(), &fd))
}

pub fn random_dataset(seed: u64, n: usize, p: usize, m: usize, task: Task) -> Dataset {
    let mut r = rng(seed);
    let x = random_matrix(&mut r, n, p, 1.5);
    let z = random_matrix(&mut r, n, m, 1.0);
    let y = match task {
        Task::Regression => Array1::from_shape_fn(n, |_| r.random_range(-2.0..2.0)),
        Task::Classification => Array1::from_shape_fn(n, |_| if r.random_bool(0.5) { 1.0 } else { 0.0 }),
    };
    Dataset::new(y, x, z, task).unwrap()
}

/// Gradient of the mean training loss with respect to every network
/// parameter, through the projection layer at half the unconstrained radius.
pub fn objective_gradient_error(seed: u64, task: Task, constraints: &Constraints) -> Option<f64> {
    let (n, p) = (12, 4);
    let ds = random_dataset(seed, n, p, 2, task);
    let mut model = init_network(NetworkConfig {
        width: Some(6),
        hidden_layers: 2,
        ..NetworkConfig::new(p, 2).with_seed(seed)
    })
    .unwrap();
    // Zero biases put rows with all-dead inputs exactly on a ReLU kink;
    // jitter every parameter to get a generic point.
    let mut r = rng(seed ^ 0x5eed);
    let jittered: Vec<f64> = model.flatten().iter().map(|w| w + r.random_range(-0.1..0.1)).collect();
    model.set_flat(&jittered).unwrap();
    let h = forward(&model, ds.z.view()).unwrap().0.coefficients;
    let h = constraints.clip(h).unwrap();
    let lambda = 0.5 * constraints.penalty(h.view()).unwrap();
    let theta = match &constraints.groups {
        Some(g) => project_group(h.view(), g, lambda).unwrap().1.inner.theta,
        None => project_l1(h.view(), lambda).unwrap().1.theta,
    };
    let mags = match &constraints.groups {
        Some(g) => g.norms(h.view()),
        None => h.mapv(f64::abs),
    };
    if mags.iter().any(|v| *v != 0.0 && (v - theta).abs() < KINK_MARGIN) {
        return None;
    }
    let head = Head::Projected { lambda, constraints };
    let (_, grads) = training_loss(&model, Batch::from_dataset(&ds), head).unwrap();
    let fd = finite_difference(&model.flatten(), FD_STEP, |v| {
        let mut m = model.clone();
        m.set_flat(v).unwrap();
        training_loss(&m, Batch::from_dataset(&ds), head).unwrap().0
    });
    Some(relative_error(&grads.flatten(), &fd))
}

pub fn constraint_variants() -> Vec<(&'static str, Constraints)> {
    vec![
        ("plain", Constraints::default()),
        (
            "grouped",
            Constraints {
                groups: Some(GroupStructure::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap()),
                signs: None,
            },
        ),
        (
            "signed",
            Constraints {
                groups: None,
                signs: Some(SignConstraints::new(vec![1], vec![3], 4).unwrap()),
            },
        ),
    ]
}
