//! EHZ capacity through Clarke's dual action principle.
//!
//! A loop `η` with `∫η = 0` is stored through its velocities `w_j` on `N`
//! uniform sub-intervals of `[0, 2π]`. The capacity is
//!
//! `min (π/2) Σ h(w_j)² Δt  /  𝓐(η)`  over loops with `𝓐(η) > 0`,
//!
//! where `𝓐(η) = ½ Σ ω(η̄_j, w_j) Δt` is the exact signed area of the
//! polygon (`η̄_j` the midpoint of the `j`-th edge). Both numerator and
//! denominator are 2-homogeneous, so the ratio is scale free.

use crate::bodies::{slice_ellipsoid, Body, BodyError, ConvexBody, Extent};
use crate::optim::{minimize, LbfgsOptions};
use crate::symcore::{apply_j, ellipsoid_capacity_from_form, matrix_al, omega_slices};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EhzError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("need at least one restart")]
    NoRestarts,
    #[error("velocity array length {len} is not a multiple of the dimension {dim}")]
    Shape { len: usize, dim: usize },
    #[error("support function is unbounded in direction {direction:?}")]
    Unbounded { direction: Vec<f64> },
    #[error("body is not centrally symmetric (|h(u) - h(-u)| = {defect:e})")]
    Asymmetric { defect: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Body(#[from] BodyError),
}

pub type Result<T> = std::result::Result<T, EhzError>;

pub const MIN_SAMPLES: usize = 16;

/// A discretized closed loop with mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLoop {
    dim: usize,
    n_samples: usize,
    velocities: Vec<f64>,
}

impl DualLoop {
    /// Builds a loop from free velocities (`N × 2n`, row-major); their mean
    /// is removed so the loop closes.
    pub fn from_velocities(dim: usize, mut velocities: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 || velocities.len() % dim != 0 {
            return Err(EhzError::Shape {
                len: velocities.len(),
                dim,
            });
        }
        let n_samples = velocities.len() / dim;
        if n_samples < 2 {
            return Err(EhzError::TooFewSamples {
                min: 2,
                got: n_samples,
            });
        }
        remove_mean(&mut velocities, dim);
        Ok(Self {
            dim,
            n_samples,
            velocities,
        })
    }

    /// `η(s) = ρ (cos s, sin s)` in the `z_{k+1}` plane, `orientation = ±1`.
    pub fn circle(n: usize, k: usize, rho: f64, orientation: f64, n_samples: usize) -> Result<Self> {
        let dim = 2 * n;
        let dt = 2.0 * PI / n_samples as f64;
        let mut v = vec![0.0; n_samples * dim];
        for j in 0..n_samples {
            // Exact chord of the inscribed polygon.
            let (s0, s1) = (j as f64 * dt * orientation, (j + 1) as f64 * dt * orientation);
            v[j * dim + 2 * k] = rho * (s1.cos() - s0.cos()) / dt;
            v[j * dim + 2 * k + 1] = rho * (s1.sin() - s0.sin()) / dt;
        }
        Self::from_velocities(dim, v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt(&self) -> f64 {
        2.0 * PI / self.n_samples as f64
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn velocity(&self, j: usize) -> &[f64] {
        &self.velocities[j * self.dim..(j + 1) * self.dim]
    }

    /// Vertex positions `η_j` at `s_j = jΔt`, shifted to mean zero.
    pub fn positions(&self) -> Vec<f64> {
        positions_of(&self.velocities, self.dim, self.dt())
    }

    /// `Σ_j w_j Δt`, zero up to rounding.
    pub fn closure_defect(&self) -> f64 {
        let dt = self.dt();
        (0..self.dim)
            .map(|c| {
                (0..self.n_samples)
                    .map(|j| self.velocities[j * self.dim + c] * dt)
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            n_samples: self.n_samples,
            velocities: self.velocities.iter().map(|v| v * s).collect(),
        }
    }

    /// The same loop traversed backwards.
    pub fn reversed(&self) -> Self {
        Self {
            dim: self.dim,
            n_samples: self.n_samples,
            velocities: reverse_time(&self.velocities, self.dim),
        }
    }

    /// CSV with header `t,x1,y1,...` holding vertex positions.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 1..=self.dim / 2 {
            let _ = write!(out, ",x{k},y{k}");
        }
        out.push('\n');
        let pos = self.positions();
        let dt = self.dt();
        for j in 0..self.n_samples {
            let _ = write!(out, "{:.12}", j as f64 * dt);
            for c in 0..self.dim {
                let _ = write!(out, ",{:.12}", pos[j * self.dim + c]);
            }
            out.push('\n');
        }
        out
    }
}

fn remove_mean(v: &mut [f64], dim: usize) {
    let n = v.len() / dim;
    for c in 0..dim {
        let mean = (0..n).map(|j| v[j * dim + c]).sum::<f64>() / n as f64;
        for j in 0..n {
            v[j * dim + c] -= mean;
        }
    }
}

fn reverse_time(v: &[f64], dim: usize) -> Vec<f64> {
    let n = v.len() / dim;
    let mut out = vec![0.0; v.len()];
    for j in 0..n {
        for c in 0..dim {
            out[j * dim + c] = -v[(n - 1 - j) * dim + c];
        }
    }
    out
}

fn positions_of(v: &[f64], dim: usize, dt: f64) -> Vec<f64> {
    let n = v.len() / dim;
    let mut pos = vec![0.0; v.len()];
    for j in 1..n {
        for c in 0..dim {
            pos[j * dim + c] = pos[(j - 1) * dim + c] + v[(j - 1) * dim + c] * dt;
        }
    }
    remove_mean(&mut pos, dim);
    pos
}

/// `𝓐(η) = ½ Σ ω(η̄_j, w_j) Δt`.
pub fn loop_action(l: &DualLoop) -> f64 {
    let dt = l.dt();
    let pos = l.positions();
    let dim = l.dim;
    let mut mid = vec![0.0; dim];
    let mut a = 0.0;
    for j in 0..l.n_samples {
        let w = l.velocity(j);
        for c in 0..dim {
            mid[c] = pos[j * dim + c] + 0.5 * w[c] * dt;
        }
        a += omega_slices(&mid, w);
    }
    0.5 * a * dt
}

/// `(π/2) Σ h(w_j)² Δt`.
pub fn clarke_functional(l: &DualLoop, body: &dyn ConvexBody) -> Result<f64> {
    if body.dim() != l.dim {
        return Err(EhzError::Body(BodyError::DimensionMismatch {
            expected: body.dim(),
            got: l.dim,
        }));
    }
    let mut scratch = vec![0.0; l.dim];
    let mut f = 0.0;
    for j in 0..l.n_samples {
        let w = l.velocity(j);
        match body.support_point(w, &mut scratch) {
            Extent::Finite(h) => f += h * h,
            Extent::Unbounded => {
                return Err(EhzError::Unbounded {
                    direction: w.to_vec(),
                })
            }
        }
    }
    Ok(0.5 * PI * f * l.dt())
}

/// Ratio objective and its gradient with respect to the free velocities.
struct Ratio<'a> {
    body: &'a dyn ConvexBody,
    dim: usize,
    n: usize,
    dt: f64,
    unbounded: Option<Vec<f64>>,
}

impl Ratio<'_> {
    fn eval(&mut self, free: &[f64], grad: &mut [f64]) -> f64 {
        let (dim, n, dt) = (self.dim, self.n, self.dt);
        let mut w = free.to_vec();
        remove_mean(&mut w, dim);
        let mut f = 0.0;
        let mut x = vec![0.0; dim];
        for j in 0..n {
            let wj = &w[j * dim..(j + 1) * dim];
            match self.body.support_point(wj, &mut x) {
                Extent::Finite(h) => {
                    f += h * h;
                    for c in 0..dim {
                        grad[j * dim + c] = PI * dt * h * x[c];
                    }
                }
                Extent::Unbounded => {
                    self.unbounded.get_or_insert_with(|| wj.to_vec());
                    grad.fill(0.0);
                    return f64::INFINITY;
                }
            }
        }
        f *= 0.5 * PI * dt;

        let mut pos = vec![0.0; dim];
        let mut mid = vec![0.0; dim];
        let mut jmid = vec![0.0; n * dim];
        let mut a = 0.0;
        for j in 0..n {
            let wj = &w[j * dim..(j + 1) * dim];
            for c in 0..dim {
                mid[c] = pos[c] + 0.5 * wj[c] * dt;
            }
            a += omega_slices(&mid, wj);
            apply_j(&mid, &mut jmid[j * dim..(j + 1) * dim]);
            for c in 0..dim {
                pos[c] += wj[c] * dt;
            }
        }
        a *= 0.5 * dt;
        if !(a > 0.0) {
            grad.fill(0.0);
            return f64::INFINITY;
        }
        let r = f / a;
        for k in 0..n * dim {
            grad[k] = (grad[k] - r * dt * jmid[k]) / a;
        }
        remove_mean(grad, dim);
        r
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EhzOptions {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for EhzOptions {
    fn default() -> Self {
        Self {
            n_samples: 256,
            restarts: 8,
            seed: 0,
            max_iter: 5000,
            grad_tol: 1e-8,
        }
    }
}

impl EhzOptions {
    pub fn new(n_samples: usize, restarts: usize, seed: u64) -> Self {
        Self {
            n_samples,
            restarts,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct EhzResult {
    pub capacity: f64,
    pub options: EhzOptions,
    pub converged: bool,
    pub grad_norm: f64,
    pub history: Vec<f64>,
    pub minimizer: DualLoop,
    pub restarts: Vec<RestartOutcome>,
}

#[derive(Serialize)]
struct EhzSummary<'a> {
    capacity: f64,
    #[serde(rename = "N")]
    n_samples: usize,
    restarts: usize,
    seed: u64,
    converged: bool,
    grad_norm: f64,
    restart_values: Vec<f64>,
    history: &'a [f64],
}

impl EhzResult {
    pub fn to_json(&self) -> String {
        let s = EhzSummary {
            capacity: self.capacity,
            n_samples: self.options.n_samples,
            restarts: self.options.restarts,
            seed: self.options.seed,
            converged: self.converged,
            grad_norm: self.grad_norm,
            restart_values: self.restarts.iter().map(|r| r.value).collect(),
            history: &self.history,
        };
        serde_json::to_string_pretty(&s).expect("plain data")
    }
}

fn fourier_start(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Vec<f64> {
    let dt = 2.0 * PI / n as f64;
    let mut v = vec![0.0; n * dim];
    for k in 1..=3 {
        let a: Vec<f64> = (0..dim)
            .map(|_| StandardNormal.sample(rng))
            .map(|x: f64| x / k as f64)
            .collect();
        let b: Vec<f64> = (0..dim)
            .map(|_| StandardNormal.sample(rng))
            .map(|x: f64| x / k as f64)
            .collect();
        for j in 0..n {
            let s = (j as f64 + 0.5) * dt * k as f64;
            let (c, sn) = (s.cos(), s.sin());
            for d in 0..dim {
                v[j * dim + d] += c * a[d] + sn * b[d];
            }
        }
    }
    remove_mean(&mut v, dim);
    v
}

/// Estimates `c_EHZ(body)` with the default iteration limits.
pub fn ehz_capacity(
    body: &dyn ConvexBody,
    n_samples: usize,
    restarts: usize,
    seed: u64,
) -> Result<EhzResult> {
    ehz_capacity_with(body, &EhzOptions::new(n_samples, restarts, seed))
}

pub fn ehz_capacity_with(body: &dyn ConvexBody, opts: &EhzOptions) -> Result<EhzResult> {
    if opts.n_samples < MIN_SAMPLES {
        return Err(EhzError::TooFewSamples {
            min: MIN_SAMPLES,
            got: opts.n_samples,
        });
    }
    if opts.restarts == 0 {
        return Err(EhzError::NoRestarts);
    }
    let dim = body.dim();
    for axis in 0..dim {
        for sign in [1.0, -1.0] {
            let mut u = vec![0.0; dim];
            u[axis] = sign;
            if body.support(&u).is_unbounded() {
                return Err(EhzError::Unbounded { direction: u });
            }
        }
    }
    let n = opts.n_samples;
    let dt = 2.0 * PI / n as f64;
    let lbfgs = LbfgsOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        ..LbfgsOptions::default()
    };

    let runs: Vec<_> = (0..opts.restarts)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(idx as u64);
            let mut ratio = Ratio {
                body,
                dim,
                n,
                dt,
                unbounded: None,
            };
            let mut grad = vec![0.0; n * dim];
            let mut start = fourier_start(&mut rng, dim, n);
            for _ in 0..16 {
                if ratio.eval(&start, &mut grad).is_finite() {
                    break;
                }
                let rev = reverse_time(&start, dim);
                if ratio.eval(&rev, &mut grad).is_finite() {
                    start = rev;
                    break;
                }
                start = fourier_start(&mut rng, dim, n);
                let _: f64 = rng.random();
            }
            let rep = minimize(|x, g| ratio.eval(x, g), &start, &lbfgs);
            (idx, rep, ratio.unbounded)
        })
        .collect();

    let mut outcomes = Vec::with_capacity(runs.len());
    let mut best: Option<usize> = None;
    for (k, (_, rep, unb)) in runs.iter().enumerate() {
        if let Some(d) = unb {
            return Err(EhzError::Unbounded { direction: d.clone() });
        }
        outcomes.push(RestartOutcome {
            value: rep.f,
            converged: rep.converged(),
            iterations: rep.iterations,
            grad_norm: rep.grad_norm,
        });
        if rep.f.is_finite() && best.is_none_or(|b| rep.f < runs[b].1.f) {
            best = Some(k);
        }
    }
    let b = best.ok_or_else(|| EhzError::Invalid("no restart produced a loop with positive action".into()))?;
    let rep = &runs[b].1;
    Ok(EhzResult {
        capacity: rep.f,
        options: opts.clone(),
        converged: rep.converged(),
        grad_norm: rep.grad_norm,
        history: rep.history.clone(),
        minimizer: DualLoop::from_velocities(dim, rep.x.clone())?,
        restarts: outcomes,
    })
}

/// `c_EHZ(E(r_1, ..., r_n)) = min r_k`.
pub fn ehz_ellipsoid_closed_form(radii: &[f64]) -> Result<f64> {
    if radii.is_empty() {
        return Err(EhzError::Invalid("empty radius list".into()));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(EhzError::Invalid(format!("radius {r} is not positive")));
    }
    Ok(radii.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Capacity of a symplectic 2-product: the smaller factor.
pub fn product2_capacity(c1: f64, c2: f64) -> Result<f64> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(EhzError::Invalid(format!("capacities must be positive, got {c1}, {c2}")));
    }
    Ok(c1.min(c2))
}

/// Residual of the best first-harmonic fit `a cos s + b sin s` to the loop
/// positions, relative to the mean radius. Small values mean the loop is a
/// uniformly traversed planar ellipse; `(|a|-|b|)` and `<a,b>` measure how
/// far that ellipse is from a circle.
pub fn circle_fit(l: &DualLoop) -> CircleFit {
    let dim = l.dim;
    let n = l.n_samples;
    let pos = l.positions();
    let dt = l.dt();
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    // Vertices sit at jΔt; use the trapezoid (exact for trigonometric data).
    for j in 0..n {
        let s = j as f64 * dt;
        for c in 0..dim {
            a[c] += 2.0 / n as f64 * pos[j * dim + c] * s.cos();
            b[c] += 2.0 / n as f64 * pos[j * dim + c] * s.sin();
        }
    }
    let mut resid: f64 = 0.0;
    let mut radius = 0.0;
    for j in 0..n {
        let s = j as f64 * dt;
        let mut e2 = 0.0;
        let mut r2 = 0.0;
        for c in 0..dim {
            let fit = a[c] * s.cos() + b[c] * s.sin();
            e2 += (pos[j * dim + c] - fit).powi(2);
            r2 += pos[j * dim + c].powi(2);
        }
        resid = resid.max(e2.sqrt());
        radius += r2.sqrt() / n as f64;
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    CircleFit {
        radius,
        residual: resid / radius.max(1e-300),
        axis_mismatch: (na - nb).abs() / radius.max(1e-300),
        skew: ab.abs() / (na * nb).max(1e-300),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CircleFit {
    pub radius: f64,
    pub residual: f64,
    pub axis_mismatch: f64,
    pub skew: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitRow {
    #[serde(rename = "L")]
    pub l: f64,
    pub capacity: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitTable {
    pub rows: Vec<LimitRow>,
    /// Closed-form capacity of the slice `K ∩ {z_n = 0}`.
    pub slice_capacity: f64,
    /// Dual-action estimate of the same slice.
    pub slice_estimate: f64,
    /// Whether the largest-`L` value is below `slice_capacity + tol`.
    pub below_slice: bool,
    pub tol: f64,
}

fn symmetry_defect(body: &dyn ConvexBody) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let dim = body.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m: Vec<f64> = u.iter().map(|x| -x).collect();
        if let (Some(a), Some(b)) = (body.support(&u).finite(), body.support(&m).finite()) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
        }
    }
    worst
}

/// `c_EHZ(A^L K)` for each `L`, compared against the capacity of the slice
/// `K ∩ {z_n = 0}`. `K` must be a centred ellipsoid given by its support
/// matrix (a ball, an ellipsoid, or a linear image of one).
pub fn scaled_limit_experiment(
    k: &Body,
    l_list: &[f64],
    opts: &EhzOptions,
    tol: f64,
) -> Result<LimitTable> {
    let defect = symmetry_defect(k);
    if defect > 1e-9 {
        return Err(EhzError::Asymmetric { defect });
    }
    if l_list.is_empty() || l_list.iter().any(|l| !(*l > 0.0)) {
        return Err(EhzError::Invalid("L values must be positive".into()));
    }
    if l_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EhzError::Invalid("L values must be increasing".into()));
    }
    let q = match k {
        Body::Ball(b) => b.to_ellipsoid().support_matrix().clone(),
        Body::Ellipsoid(e) => e.support_matrix().clone(),
        _ => {
            return Err(EhzError::Invalid(
                "the limit experiment needs an ellipsoid".into(),
            ))
        }
    };
    let dim = q.nrows();
    let n = dim / 2;
    // K = M·B(1) with M = (πQ)^{1/2}.
    let eig = nalgebra::SymmetricEigen::new(&q * PI);
    let m = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let slice = slice_ellipsoid(&m)?;
    let slice_capacity = ellipsoid_capacity_from_form(&slice.form()?)
        .map_err(|e| EhzError::Body(BodyError::Symplectic(e)))?;
    let slice_estimate = ehz_capacity_with(&slice, opts)?.capacity;

    let mut rows = Vec::with_capacity(l_list.len());
    for &l in l_list {
        let al = matrix_al(l, n).map_err(|e| EhzError::Body(BodyError::Symplectic(e)))?;
        let body = k.transformed(&al)?;
        let res = ehz_capacity_with(&body, opts)?;
        rows.push(LimitRow {
            l,
            capacity: res.capacity,
            converged: res.converged,
        });
    }
    let last = rows.last().map(|r| r.capacity).unwrap_or(f64::NAN);
    Ok(LimitTable {
        rows,
        slice_capacity,
        slice_estimate,
        below_slice: last <= slice_capacity + tol,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::{CapacityBall, EllipsoidBody};

    #[test]
    fn circle_action_and_orientation() {
        let rho = 0.7;
        let c = DualLoop::circle(2, 0, rho, 1.0, 512).unwrap();
        let exact_polygon = 0.5 * 512.0 * rho * rho * (2.0 * PI / 512.0).sin();
        assert!((loop_action(&c) - exact_polygon).abs() < 1e-12);
        assert!((loop_action(&c) - PI * rho * rho).abs() < 1e-4);
        let r = DualLoop::circle(2, 0, rho, -1.0, 512).unwrap();
        assert!((loop_action(&r) + loop_action(&c)).abs() < 1e-12);
        assert!((loop_action(&c.reversed()) + loop_action(&c)).abs() < 1e-12);
        assert!(c.closure_defect() < 1e-12);
    }

    #[test]
    fn figure_eight_has_no_action() {
        let n = 512;
        let dt = 2.0 * PI / n as f64;
        let mut v = Vec::new();
        for j in 0..n {
            let s = (j as f64 + 0.5) * dt;
            v.extend([s.cos(), 2.0 * (2.0 * s).cos(), 0.0, 0.0]);
        }
        let l = DualLoop::from_velocities(4, v).unwrap();
        assert!(loop_action(&l).abs() < 1e-10);
    }

    #[test]
    fn functional_homogeneity() {
        let ball = CapacityBall::new(1.0, 2).unwrap();
        let c = DualLoop::circle(2, 1, 1.0 / PI.sqrt(), 1.0, 256).unwrap();
        let f = clarke_functional(&c, &ball).unwrap();
        let a = loop_action(&c);
        // Chords of the inscribed polygon: F/A = 2 tan(dt/2)/dt exactly.
        let dt = 2.0 * PI / 256.0;
        assert!((f / a - 2.0 * (dt / 2.0).tan() / dt).abs() < 1e-12, "{}", f / a);
        let f2 = clarke_functional(&c.scaled(3.0), &ball).unwrap();
        assert!((f2 - 9.0 * f).abs() < 1e-12);
        let big = CapacityBall::new(4.0, 2).unwrap();
        assert!((clarke_functional(&c, &big).unwrap() - 4.0 * f).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let body = crate::bodies::IntersectionBody::ball_cap_orbit_cylinder(0.5).unwrap();
        let n = 24;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = fourier_start(&mut rng, 4, n);
        let mut ratio = Ratio {
            body: &body,
            dim: 4,
            n,
            dt: 2.0 * PI / n as f64,
            unbounded: None,
        };
        let mut g = vec![0.0; x.len()];
        let mut x = x;
        if !ratio.eval(&x, &mut g).is_finite() {
            x = reverse_time(&x, 4);
        }
        ratio.eval(&x, &mut g);
        let mut scratch = vec![0.0; x.len()];
        for k in [0, 5, 17, 40, 77] {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (ratio.eval(&xp, &mut scratch) - ratio.eval(&xm, &mut scratch)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn closed_forms() {
        assert_eq!(ehz_ellipsoid_closed_form(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(ehz_ellipsoid_closed_form(&[0.3, 0.7, 2.0]).unwrap(), 0.3);
        assert!(ehz_ellipsoid_closed_form(&[]).is_err());
        assert_eq!(product2_capacity(1.0, 0.4).unwrap(), 0.4);
        assert_eq!(product2_capacity(3.0, 1.0).unwrap(), 1.0);
        assert!(product2_capacity(0.0, 1.0).is_err());
    }

    #[test]
    fn small_ball_run() {
        let ball = CapacityBall::new(1.0, 2).unwrap();
        let res = ehz_capacity(&ball, 64, 2, 1).unwrap();
        assert!((res.capacity - 1.0).abs() < 0.01, "{}", res.capacity);
        assert!(ehz_capacity(&ball, 8, 2, 1).is_err());
        assert!(ehz_capacity(&ball, 64, 0, 1).is_err());
        let e = EllipsoidBody::normal_form(&[1.0, 0.5]).unwrap();
        let res = ehz_capacity(&e, 64, 2, 1).unwrap();
        assert!((res.capacity - 0.5).abs() < 0.01, "{}", res.capacity);
    }
}
