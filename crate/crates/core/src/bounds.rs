//! Lower bounds for the Gromov width of a ball cut by a cylinder, the
//! two-parameter embedding optimizer behind them, the area bookkeeping for
//! the planar squeezing step and the upper bound along the scaled family.

use crate::bodies::{
    largest_ball_in_cylinder, largest_ball_in_ellipsoid, BodyError, EllipsoidBody, QuadCylinder,
};
use crate::ehz::{ehz_capacity_with, EhzError, EhzOptions};
use crate::optim::nelder_mead;
use crate::quad::adaptive_simpson;
use crate::symcore::{
    cayley_symplectic, ellipsoid_capacity_from_form, matrix_a_gw, matrix_a_orbit, matrix_al,
    matrix_mt, matrix_s, omega_slices, random_symplectic, SymplecticError, SymplecticMatrix,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("{name} = {value} is outside {range}")]
    Parameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Symplectic(#[from] SymplecticError),
    #[error(transparent)]
    Ehz(#[from] EhzError),
}

pub type Result<T> = std::result::Result<T, BoundsError>;

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::Parameter {
            name: "t",
            value: t,
            range: "(0, 1)",
        })
    }
}

/// `f(t) = √(2(1/t² − 1)(√(1−t²) − 1) + 1)`.
pub fn bound_f(t: f64) -> Result<f64> {
    check_t(t)?;
    let s = (1.0 - t * t).sqrt();
    let radicand = 2.0 * (1.0 / (t * t) - 1.0) * (s - 1.0) + 1.0;
    if radicand <= 0.0 {
        return Err(BoundsError::Parameter {
            name: "radicand",
            value: radicand,
            range: "(0, inf)",
        });
    }
    Ok(radicand.sqrt())
}

/// `t²`: the ball `B(t²)` already sits in both constraints.
pub fn bound_simple(t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(t * t)
}

/// `t / (1 + √(1−t²))`: the largest ball inside `A·B(1)`.
pub fn bound_inradius(t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(t / (1.0 + (1.0 - t * t).sqrt()))
}

/// [`bound_simple`] recomputed as the largest ball in `A⁻¹W` with `S = I`,
/// capped by the unit ball.
pub fn bound_simple_geometric(t: f64) -> Result<f64> {
    let cyl = QuadCylinder::preimage_of_w(&matrix_a_gw(t, 2)?)?;
    let id = DMatrix::identity(4, 4);
    let rc = largest_ball_in_cylinder(&id, &cyl)?
        .finite()
        .unwrap_or(f64::INFINITY);
    Ok(rc.min(1.0))
}

/// [`bound_inradius`] recomputed as `σ_min(A)²`.
pub fn bound_inradius_geometric(t: f64) -> Result<f64> {
    Ok(largest_ball_in_ellipsoid(matrix_a_gw(t, 2)?.matrix())?)
}

/// Which normalizing map defines the cylinder in the embedding problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// The map that sends the two normals to a complex pair.
    #[default]
    GromovWidth,
    /// The map used for the orbit census.
    Orbit,
}

/// The cylinder `A⁻¹W⁴` together with a factor `G` (2×4) of its form.
#[derive(Debug, Clone)]
pub struct EmbeddingProblem {
    t: f64,
    cylinder: QuadCylinder,
    g: DMatrix<f64>,
}

/// Containment radii of `S·B(r)` against the ball and the cylinder.
#[derive(Debug, Clone, Copy)]
pub struct Containment {
    pub ball: f64,
    pub cylinder: f64,
}

impl Containment {
    pub fn value(&self) -> f64 {
        self.ball.min(self.cylinder)
    }
}

impl EmbeddingProblem {
    pub fn new(t: f64, normalization: Normalization) -> Result<Self> {
        check_t(t)?;
        let a = match normalization {
            Normalization::GromovWidth => matrix_a_gw(t, 2)?,
            Normalization::Orbit => matrix_a_orbit(t)?.a,
        };
        let cylinder = QuadCylinder::preimage_of_w(&a)?;
        let eig = SymmetricEigen::new(cylinder.form().clone());
        let mut idx: Vec<usize> = (0..4).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mut g = DMatrix::zeros(2, 4);
        for (row, &k) in idx.iter().take(2).enumerate() {
            let s = eig.eigenvalues[k].max(0.0).sqrt();
            for c in 0..4 {
                g[(row, c)] = s * eig.eigenvectors[(c, k)];
            }
        }
        Ok(Self { t, cylinder, g })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn cylinder(&self) -> &QuadCylinder {
        &self.cylinder
    }

    /// Both radii for an arbitrary linear map `S`.
    pub fn containment(&self, s: &DMatrix<f64>) -> Containment {
        let smax = s.singular_values().max();
        let cylinder = largest_ball_in_cylinder(s, &self.cylinder)
            .ok()
            .and_then(|e| e.finite())
            .unwrap_or(f64::INFINITY);
        Containment {
            ball: 1.0 / (smax * smax),
            cylinder,
        }
    }

    pub fn objective(&self, s: &DMatrix<f64>) -> f64 {
        self.containment(s).value()
    }

    /// Singular values of `G·S`, the map onto the base of the cylinder.
    pub fn projected_singular_values(&self, s: &DMatrix<f64>) -> [f64; 2] {
        let sv = (&self.g * s).singular_values();
        [sv.max(), sv.min()]
    }

    fn base_gram(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let gs = &self.g * s;
        &gs * gs.transpose()
    }
}

/// The `S(d1, d2)` objective; `d1 = d2 = 1` gives `t²`.
pub fn embedding_objective(t: f64, d1: f64, d2: f64) -> Result<f64> {
    let p = EmbeddingProblem::new(t, Normalization::GromovWidth)?;
    let s = matrix_s(d1, d2, 2)?;
    Ok(p.objective(s.matrix()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingSolution {
    pub t: f64,
    pub d1: f64,
    pub d2: f64,
    pub capacity: f64,
    pub ball_radius: f64,
    pub cylinder_radius: f64,
    pub singular_values: [f64; 2],
    pub converged: bool,
}

impl EmbeddingSolution {
    pub fn radius_gap(&self) -> f64 {
        (self.ball_radius - self.cylinder_radius).abs()
    }

    pub fn singular_gap(&self) -> f64 {
        (self.singular_values[0] - self.singular_values[1]).abs()
    }
}

// d1 = e^u, d2 = e^{-u}(1 + s²) keeps d1·d2 >= 1.
fn params(x: &[f64]) -> (f64, f64) {
    let d1 = x[0].exp();
    let d2 = (-x[0]).exp() * (1.0 + x[1] * x[1]);
    (d1, d2)
}

fn s_block(x: &[f64]) -> Option<DMatrix<f64>> {
    let (d1, d2) = params(x);
    let r = (d1 * d2 - 1.0).max(0.0).sqrt();
    if !(d1.is_finite() && d2.is_finite()) {
        return None;
    }
    Some(DMatrix::from_row_slice(
        4,
        4,
        &[
            d1, 0.0, r, 0.0, //
            0.0, d2, 0.0, -r, //
            r, 0.0, d2, 0.0, //
            0.0, -r, 0.0, d1,
        ],
    ))
}

fn equalization_residual(p: &EmbeddingProblem, x: &[f64]) -> Option<[f64; 2]> {
    let s = s_block(x)?;
    let c = p.containment(&s);
    let m = p.base_gram(&s);
    let scale = m[(0, 0)].abs().max(m[(1, 1)].abs()).max(1e-300);
    Some([c.ball - c.cylinder, (m[(0, 0)] - m[(1, 1)]) / scale])
}

// Newton on the two equalization conditions, finite-difference Jacobian.
fn polish(p: &EmbeddingProblem, x0: &[f64]) -> Vec<f64> {
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut x = x0.to_vec();
    let Some(mut r) = equalization_residual(p, &x) else {
        return x;
    };
    for _ in 0..30 {
        if norm(r) < 1e-15 {
            break;
        }
        let h = 1e-7;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let (Some(rp), Some(rm)) = (equalization_residual(p, &xp), equalization_residual(p, &xm))
            else {
                return x;
            };
            for i in 0..2 {
                jac[i][k] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dx = [
            (jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-6 {
            let trial = vec![x[0] - step * dx[0], x[1] - step * dx[1]];
            if let Some(rt) = equalization_residual(p, &trial) {
                if norm(rt) < norm(r) {
                    x = trial;
                    r = rt;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}

/// Maximizes `min(1/σ_max(S)², π/λ_max(SᵀCS))` over the `S(d1, d2)` family.
pub fn solve_embedding(t: f64) -> Result<EmbeddingSolution> {
    solve_embedding_with(t, Normalization::GromovWidth)
}

pub fn solve_embedding_with(t: f64, normalization: Normalization) -> Result<EmbeddingSolution> {
    let p = EmbeddingProblem::new(t, normalization)?;
    let neg = |x: &[f64]| match s_block(x) {
        Some(s) => {
            let v = -p.objective(&s);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    };
    let mut starts: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..=20 {
        for j in 0..=12 {
            let x = vec![-5.0 + 0.5 * i as f64, 0.25 * j as f64];
            let v = neg(&x);
            starts.push((x, v));
        }
    }
    starts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x0, _) in starts.iter().take(4) {
        let (x, v) = nelder_mead(neg, x0, 0.1, 4000, 1e-15);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
    }
    let (x_nm, v_nm) = best.ok_or_else(|| BoundsError::Optimizer("no starting point".into()))?;
    if !v_nm.is_finite() {
        return Err(BoundsError::Optimizer("objective is not finite".into()));
    }
    let x_pol = polish(&p, &x_nm);
    let x = if neg(&x_pol) <= v_nm + 1e-12 { x_pol } else { x_nm };
    let s = s_block(&x).ok_or_else(|| BoundsError::Optimizer("overflow".into()))?;
    let c = p.containment(&s);
    let sv = p.projected_singular_values(&s);
    let (d1, d2) = params(&x);
    let converged = (c.ball - c.cylinder).abs() <= 1e-8 && (sv[0] - sv[1]).abs() <= 1e-8;
    Ok(EmbeddingSolution {
        t,
        d1,
        d2,
        capacity: c.value(),
        ball_radius: c.ball,
        cylinder_radius: c.cylinder,
        singular_values: sv,
        converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearSearchReport {
    pub t: f64,
    pub budget: usize,
    pub seed: u64,
    /// Value of the `S(d1, d2)` optimum the search starts from.
    pub baseline: f64,
    pub best: f64,
    pub improvement: f64,
    /// Largest objective among the sampled maps (excluding the baseline).
    pub max_sampled: f64,
    /// Samples whose objective exceeded `t + 1e-9`.
    pub above_t: usize,
}

/// Random search over linear symplectic maps, seeded with the `S(d1, d2)`
/// optimum. A quarter of the budget goes to global random maps, the rest to
/// hill climbing by Cayley perturbations of the current best.
pub fn linear_search(t: f64, budget: usize, seed: u64) -> Result<LinearSearchReport> {
    let p = EmbeddingProblem::new(t, Normalization::GromovWidth)?;
    let sol = solve_embedding(t)?;
    let mut best_m = matrix_s(sol.d1, sol.d2, 2)?.into_matrix();
    let baseline = p.objective(&best_m);
    let mut best = baseline;
    let mut max_sampled = f64::NEG_INFINITY;
    let mut above_t = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global = budget / 4;
    let scales = [0.3, 0.1, 0.03, 0.01, 0.003];
    let mut record = |v: f64, max_sampled: &mut f64| {
        *max_sampled = max_sampled.max(v);
        if v > t + 1e-9 {
            above_t += 1;
        }
    };
    for k in 0..budget {
        let candidate = if k < global {
            let factors = rng.random_range(1..=6);
            let scale = rng.random_range(0.2..2.0);
            random_symplectic(2, factors, scale, &mut rng).into_matrix()
        } else {
            let eps = scales[k % scales.len()];
            let mut h = DMatrix::<f64>::zeros(4, 4);
            for i in 0..4 {
                for j in i..4 {
                    let g: f64 = rng.sample(StandardNormal);
                    h[(i, j)] = eps * g;
                    h[(j, i)] = eps * g;
                }
            }
            &best_m * cayley_symplectic(&h)?.matrix()
        };
        let v = p.objective(&candidate);
        record(v, &mut max_sampled);
        if v > best {
            best = v;
            best_m = candidate;
        }
    }
    Ok(LinearSearchReport {
        t,
        budget,
        seed,
        baseline,
        best,
        improvement: best - baseline,
        max_sampled,
        above_t,
    })
}

/// Spanning vectors of `E`, `E^ω` and `(E^ω)^⊥` in `C²`, with the checks that
/// tie them to the normals `(√(1−t²), 0, −t, 0)` and `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionSubspaces {
    pub t: f64,
    pub e: [[f64; 4]; 2],
    pub e_omega: [[f64; 4]; 2],
    pub e_omega_perp: [[f64; 4]; 2],
    pub normals: [[f64; 4]; 2],
    /// `max |<e, n>|` over the spanning vectors of `E` and both normals.
    pub normal_defect: f64,
    /// `max |ω(e, f)|` for `e ∈ E`, `f ∈ E^ω`.
    pub omega_defect: f64,
    /// `max |<f, g>|` for `f ∈ E^ω`, `g ∈ (E^ω)^⊥`.
    pub perp_defect: f64,
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn projection_subspaces(t: f64) -> Result<ProjectionSubspaces> {
    check_t(t)?;
    let s = (1.0 - t * t).sqrt();
    let e = [[t, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0]];
    let e_omega = [[0.0, -s, 0.0, t], [0.0, 0.0, 1.0, 0.0]];
    let e_omega_perp = [[1.0, 0.0, 0.0, 0.0], [0.0, t, 0.0, s]];
    let normals = [[s, 0.0, -t, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let mut normal_defect: f64 = 0.0;
    let mut omega_defect: f64 = 0.0;
    let mut perp_defect: f64 = 0.0;
    for a in &e {
        for n in &normals {
            normal_defect = normal_defect.max(dot4(a, n).abs());
        }
        for f in &e_omega {
            omega_defect = omega_defect.max(omega_slices(a, f).abs());
        }
    }
    for f in &e_omega {
        for g in &e_omega_perp {
            perp_defect = perp_defect.max(dot4(f, g).abs());
        }
    }
    Ok(ProjectionSubspaces {
        t,
        e,
        e_omega,
        e_omega_perp,
        normals,
        normal_defect,
        omega_defect,
        perp_defect,
    })
}

/// The orthogonal projection of `E ∩ B⁴(1)` onto `(E^ω)^⊥`.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectedSlice {
    pub t: f64,
    /// Euclidean radius of the projected disc, `t/√π`.
    pub radius: f64,
    /// Capacity of the round ball with that radius, `t²`.
    pub capacity: f64,
    pub samples: usize,
    /// Largest deviation of a projected sample from
    /// `(λ_a t, λ_b t², 0, λ_b t√(1−t²))`.
    pub parametrization_error: f64,
    /// Largest `π(λ_a² + λ_b²) − 1` over the samples, recovered from the image.
    pub pullback_excess: f64,
    /// Whether `B(t²)` fits in the projected set.
    pub contains_ball: bool,
}

pub fn projected_slice(t: f64, samples: usize, seed: u64) -> Result<ProjectedSlice> {
    let sub = projection_subspaces(t)?;
    let s = (1.0 - t * t).sqrt();
    let f = DMatrix::from_fn(4, 2, |i, j| sub.e_omega_perp[j][i]);
    let ftf = (f.transpose() * &f)
        .try_inverse()
        .ok_or(BoundsError::Optimizer("degenerate basis".into()))?;
    let proj = &f * &ftf * f.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 1.0 / PI.sqrt();
    let mut parametrization_error: f64 = 0.0;
    let mut pullback_excess = f64::NEG_INFINITY;
    let mut min_boundary_radius = f64::INFINITY;
    for k in 0..samples {
        // Every fourth sample sits on the boundary circle.
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let rad = if k % 4 == 0 {
            r
        } else {
            r * rng.random_range(0.0f64..1.0).sqrt()
        };
        let (la, lb) = (rad * phi.cos(), rad * phi.sin());
        let x = nalgebra::DVector::from_fn(4, |i, _| la * sub.e[0][i] + lb * sub.e[1][i]);
        let y = &proj * x;
        let expect = [la * t, lb * t * t, 0.0, lb * t * s];
        for i in 0..4 {
            parametrization_error = parametrization_error.max((y[i] - expect[i]).abs());
        }
        // Coordinates in the orthonormal basis of (E^ω)^⊥ are (λ_a t, λ_b t).
        let (ca, cb) = (y[0], (y[1] * t + y[3] * s));
        let (ra, rb) = (ca / t, cb / t);
        pullback_excess = pullback_excess.max(PI * (ra * ra + rb * rb) - 1.0);
        if k % 4 == 0 {
            min_boundary_radius = min_boundary_radius.min(ca.hypot(cb));
        }
    }
    let radius = t / PI.sqrt();
    Ok(ProjectedSlice {
        t,
        radius,
        capacity: PI * radius * radius,
        samples,
        parametrization_error,
        pullback_excess,
        contains_ball: samples == 0 || min_boundary_radius >= radius * (1.0 - 1e-12),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AreaRow {
    pub t: f64,
    pub h: f64,
    /// `(1+t)/2 − h`.
    pub disc: f64,
    /// `(1−h)/2 + (t/2)√(1−h)`.
    pub lower: f64,
    /// Area of `S_h` by quadrature.
    pub exact: f64,
    pub disc_le_lower: bool,
    pub lower_le_exact: bool,
}

impl AreaRow {
    pub fn holds(&self) -> bool {
        self.disc_le_lower && self.lower_le_exact
    }
}

/// Tolerance for the inequality flags of [`area_feasibility`].
pub const AREA_TOL: f64 = 1e-8;

/// Area of `R ∩ D(1−h)`, where `R` is the left half of the unit-area disc
/// joined with the right half of the ellipse with half-axes `t/√π`, `1/√π`.
pub fn area_s_h(t: f64, h: f64, tol: f64) -> f64 {
    let r2 = (1.0 - h) / PI;
    let r = r2.sqrt();
    let a = t / PI.sqrt();
    let half_disc = 0.5 * (1.0 - h);
    if r2 <= a * a {
        // D(1−h) lies inside the ellipse.
        return 1.0 - h;
    }
    let width = |y: f64| {
        let disc = (r2 - y * y).max(0.0).sqrt();
        let ell = a * (1.0 - PI * y * y).max(0.0).sqrt();
        disc.min(ell)
    };
    let kink = ((r2 - a * a) / (1.0 - t * t)).sqrt().min(r);
    let inner = adaptive_simpson(&width, 0.0, kink, 0.25 * tol);
    let outer = adaptive_simpson(&width, kink, r, 0.25 * tol);
    half_disc + 2.0 * (inner + outer)
}

pub fn area_feasibility(t: f64, h_grid: &[f64]) -> Result<Vec<AreaRow>> {
    check_t(t)?;
    let hmax = 0.5 * (1.0 + t);
    if let Some(&h) = h_grid.iter().find(|&&h| !(0.0..=hmax).contains(&h)) {
        return Err(BoundsError::Parameter {
            name: "h",
            value: h,
            range: "[0, (1+t)/2]",
        });
    }
    Ok(h_grid
        .par_iter()
        .map(|&h| {
            let disc = hmax - h;
            let lower = 0.5 * (1.0 - h) + 0.5 * t * (1.0 - h).sqrt();
            let exact = area_s_h(t, h, AREA_TOL);
            AreaRow {
                t,
                h,
                disc,
                lower,
                exact,
                disc_le_lower: disc <= lower + AREA_TOL,
                lower_le_exact: lower <= exact + AREA_TOL,
            }
        })
        .collect())
}

/// Upper bound along the family `A^L M_t B⁴(1)` at one `(ε, L)`.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyBound {
    pub t: f64,
    pub eps: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Smallest Euclidean semi-axis of `A^L M_t B⁴(1)`.
    pub lambda: f64,
    pub prefactor: f64,
    pub capacity_estimate: f64,
    pub capacity_closed_form: f64,
    pub converged: bool,
    pub value: f64,
}

fn family_body(t: f64, l: f64) -> Result<(EllipsoidBody, f64, f64)> {
    let m = matrix_al(l, 2)? * matrix_mt(t, 2)?.matrix();
    let lambda = m.singular_values().min() / PI.sqrt();
    let body = EllipsoidBody::linear_image(&m, 1.0)?;
    let closed = ellipsoid_capacity_from_form(&body.form()?)?;
    Ok((body, lambda, closed))
}

pub fn family_upper_bound(t: f64, eps: f64, l: f64, opts: &EhzOptions) -> Result<FamilyBound> {
    check_t(t)?;
    if !(eps > 0.0) {
        return Err(BoundsError::Parameter {
            name: "eps",
            value: eps,
            range: "(0, inf)",
        });
    }
    if !(l > 1.0) {
        return Err(BoundsError::Parameter {
            name: "L",
            value: l,
            range: "(1, inf)",
        });
    }
    let (body, lambda, closed) = family_body(t, l)?;
    let res = ehz_capacity_with(&body, opts)?;
    let prefactor = (1.0 + 2f64.sqrt() * eps * l / lambda).powi(2);
    Ok(FamilyBound {
        t,
        eps,
        l,
        lambda,
        prefactor,
        capacity_estimate: res.capacity,
        capacity_closed_form: closed,
        converged: res.converged,
        value: prefactor * res.capacity,
    })
}

/// Finds `(L, ε)` with bound `<= t + δ`: doubles `L` until the closed-form
/// capacity drops below `t + δ`, then spends half of the remaining slack on
/// the prefactor and confirms with the dual-action estimate.
pub fn schedule_family(t: f64, delta: f64, opts: &EhzOptions) -> Result<FamilyBound> {
    check_t(t)?;
    if !(delta > 0.0) {
        return Err(BoundsError::Parameter {
            name: "delta",
            value: delta,
            range: "(0, inf)",
        });
    }
    let target = t + delta;
    let mut l = 2.0;
    let mut last = None;
    for _ in 0..12 {
        let (_, lambda, closed) = family_body(t, l)?;
        if closed < target {
            let eps = 0.5 * ((target / closed).sqrt() - 1.0) * lambda / (2f64.sqrt() * l);
            let fb = family_upper_bound(t, eps, l, opts)?;
            if fb.value <= target {
                return Ok(fb);
            }
            last = Some(fb);
        }
        l *= 2.0;
    }
    Err(BoundsError::Optimizer(match last {
        Some(fb) => format!("best value {} exceeds {}", fb.value, target),
        None => "capacity did not drop below the target".into(),
    }))
}

/// `a:b:step`, inclusive of `b` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        let g = Self { start, end, step };
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(BoundsError::Grid("non-finite value".into()));
        }
        if !(step > 0.0) {
            return Err(BoundsError::Grid(format!("step must be positive, got {step}")));
        }
        if end < start {
            return Err(BoundsError::Grid(format!("end {end} is below start {start}")));
        }
        if g.len() > 1_000_000 {
            return Err(BoundsError::Grid("too many points".into()));
        }
        Ok(g)
    }

    /// The 99-point grid `0.01, 0.02, …, 0.99`.
    pub fn percent() -> Self {
        Self {
            start: 0.01,
            end: 0.99,
            step: 0.01,
        }
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                (v * 1e12).round() / 1e12
            })
            .collect()
    }

    /// Checks that every value lies in the open unit interval.
    pub fn within_unit(&self) -> Result<()> {
        if self.start <= 0.0 || self.values().last().is_some_and(|&v| v >= 1.0) {
            return Err(BoundsError::Grid(format!(
                "values must lie in (0, 1), got {}:{}:{}",
                self.start, self.end, self.step
            )));
        }
        Ok(())
    }
}

impl FromStr for GridSpec {
    type Err = BoundsError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(BoundsError::Grid(format!("expected a:b:step, got {s:?}")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| BoundsError::Grid(format!("not a number: {p:?}")))
        };
        Self::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub t: f64,
    pub bound_t2: f64,
    pub bound_inradius: f64,
    pub bound_f: f64,
    pub upper_t: f64,
}

impl BoundRow {
    pub fn new(t: f64) -> Result<Self> {
        Ok(Self {
            t,
            bound_t2: bound_simple(t)?,
            bound_inradius: bound_inradius(t)?,
            bound_f: bound_f(t)?,
            upper_t: t,
        })
    }

    /// All three lower bounds stay below `t`.
    pub fn below_upper(&self) -> bool {
        self.bound_t2 <= self.upper_t
            && self.bound_inradius <= self.upper_t
            && self.bound_f <= self.upper_t + 1e-12
    }

    /// `f(t) >= max(t², t/(1+√(1−t²)))`; an observed ordering, not a theorem.
    pub fn f_dominates(&self) -> bool {
        self.bound_f >= self.bound_t2.max(self.bound_inradius) - 1e-12
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundTable {
    pub grid: GridSpec,
    pub rows: Vec<BoundRow>,
}

pub const BOUND_CSV_HEADER: &str = "t,bound_t2,bound_inradius,bound_f,upper_t";

impl BoundTable {
    pub fn new(grid: GridSpec) -> Result<Self> {
        grid.within_unit()?;
        let rows = grid
            .values()
            .into_par_iter()
            .map(BoundRow::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(BOUND_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.12},{:.12},{:.12},{}",
                r.t, r.bound_t2, r.bound_inradius, r.bound_f, r.upper_t
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// A line chart of the three lower bounds and the upper bound `t`.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 480.0, 48.0);
        let x = |t: f64| pad + t * (w - 2.0 * pad);
        let y = |v: f64| h - pad - v * (h - 2.0 * pad);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<path d="M{:.1} {:.1} L{:.1} {:.1} L{:.1} {:.1}" fill="none" stroke="black"/>"#,
            x(0.0),
            y(1.0),
            x(0.0),
            y(0.0),
            x(1.0),
            y(0.0)
        );
        for k in 0..=4 {
            let v = k as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{v}</text>"#,
                x(v),
                y(0.0) + 16.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v}</text>"#,
                x(0.0) - 6.0,
                y(v) + 4.0
            );
        }
        let series: [(&str, &str, fn(&BoundRow) -> f64); 4] = [
            ("t^2", "#1f77b4", |r| r.bound_t2),
            ("t/(1+sqrt(1-t^2))", "#2ca02c", |r| r.bound_inradius),
            ("f(t)", "#d62728", |r| r.bound_f),
            ("t", "#7f7f7f", |r| r.upper_t),
        ];
        for (i, (label, color, get)) in series.iter().enumerate() {
            let pts: Vec<String> = self
                .rows
                .iter()
                .map(|r| format!("{:.2},{:.2}", x(r.t), y(get(r))))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = pad + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{label}</text>"#,
                pad + 12.0,
                ly + 4.0
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

pub fn bound_table(grid: GridSpec) -> Result<BoundTable> {
    BoundTable::new(grid)
}

/// Returns the embedding problem's matrix `S(d1, d2)` as a symplectic matrix.
pub fn embedding_map(sol: &EmbeddingSolution) -> Result<SymplecticMatrix> {
    Ok(matrix_s(sol.d1, sol.d2, 2)?)
}
