//! Convex bodies described by a support function and a membership test.
//!
//! Radii are capacity-normalized: `B^{2n}(r)` has Euclidean radius `√(r/π)`.

use crate::symcore::{
    matrix_a_orbit, matrix_al, matrix_mt, SymplecticError, SymplecticMatrix,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Default membership tolerance, relative to the constraint level.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BodyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must be symmetric positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("matrix must be positive definite")]
    Degenerate,
    #[error("cylinder form has full rank; the body is bounded")]
    FullRank,
    #[error("unbounded support in direction {direction:?}")]
    Unbounded { direction: Vec<f64> },
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("singular matrix")]
    Singular,
    #[error("malformed body spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Symplectic(#[from] SymplecticError),
}

pub type Result<T> = std::result::Result<T, BodyError>;

/// A support value or a ball-fitting radius that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extent {
    Finite(f64),
    Unbounded,
}

impl Extent {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extent::Finite(v) => Some(v),
            Extent::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Extent::Unbounded)
    }
}

/// Support function and membership. Implementations are immutable and
/// `Sync`, so one body can be shared by parallel optimizer restarts.
pub trait ConvexBody: Send + Sync {
    /// Real dimension `2n`.
    fn dim(&self) -> usize;

    /// `h(u)`; when finite, `point` receives a maximizer of `<x, u>`,
    /// which is also the gradient of `h` at `u`.
    fn support_point(&self, u: &[f64], point: &mut [f64]) -> Extent;

    fn contains(&self, p: &[f64], tol: f64) -> bool;

    fn support(&self, u: &[f64]) -> Extent {
        let mut scratch = vec![0.0; u.len()];
        self.support_point(u, &mut scratch)
    }

    /// Whether `K = -K`.
    fn is_centrally_symmetric(&self) -> bool {
        true
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(BodyError::DimensionMismatch { expected, got })
    }
}

fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let (r, c) = m.shape();
    if r != c || r == 0 {
        return Err(BodyError::DimensionMismatch {
            expected: r,
            got: c,
        });
    }
    let asym = (m - m.transpose()).amax();
    let scale = m.amax().max(1.0);
    if asym > 1e-9 * scale {
        return Err(BodyError::NotPsd { min_eig: f64::NAN });
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-10 * scale {
        return Err(BodyError::NotPsd { min_eig });
    }
    Ok(eig)
}

/// `B^{2n}(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityBall {
    r: f64,
    n: usize,
}

impl CapacityBall {
    pub fn new(r: f64, n: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(BodyError::Parameter { name: "r", value: r });
        }
        if n == 0 {
            return Err(BodyError::Parameter {
                name: "n",
                value: 0.0,
            });
        }
        Ok(Self { r, n })
    }

    pub fn capacity(&self) -> f64 {
        self.r
    }

    pub fn radius(&self) -> f64 {
        (self.r / PI).sqrt()
    }

    pub fn to_ellipsoid(&self) -> EllipsoidBody {
        EllipsoidBody::from_support_matrix(
            DMatrix::identity(2 * self.n, 2 * self.n) * (self.r / PI),
        )
        .expect("scaled identity is PSD")
    }
}

impl ConvexBody for CapacityBall {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn support_point(&self, u: &[f64], point: &mut [f64]) -> Extent {
        let rho = self.radius();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (p, x) in point.iter_mut().zip(u) {
                *p = rho * x / norm;
            }
        } else {
            point.fill(0.0);
        }
        Extent::Finite(rho * norm)
    }

    fn contains(&self, p: &[f64], tol: f64) -> bool {
        PI * p.iter().map(|x| x * x).sum::<f64>() <= self.r * (1.0 + tol)
    }
}

/// `{ x : <x, u> <= √(uᵀQu) for all u }`, i.e. `Q^{1/2}` applied to the unit ball.
#[derive(Debug, Clone)]
pub struct EllipsoidBody {
    q: DMatrix<f64>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl EllipsoidBody {
    pub fn from_support_matrix(q: DMatrix<f64>) -> Result<Self> {
        let eig = symmetric_eigen(&q)?;
        if q.nrows() % 2 != 0 {
            return Err(BodyError::DimensionMismatch {
                expected: q.nrows() + 1,
                got: q.nrows(),
            });
        }
        Ok(Self {
            q: (&q + q.transpose()) * 0.5,
            eigvals: eig.eigenvalues.map(|l| l.max(0.0)),
            eigvecs: eig.eigenvectors,
        })
    }

    /// `M·B^{2n}(r)`.
    pub fn linear_image(m: &DMatrix<f64>, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(BodyError::Parameter { name: "r", value: r });
        }
        Self::from_support_matrix(m * m.transpose() * (r / PI))
    }

    /// `{ x : xᵀPx <= 1 }` for positive definite `P`.
    pub fn from_form(p: &DMatrix<f64>) -> Result<Self> {
        let eig = symmetric_eigen(p)?;
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(BodyError::Degenerate);
        }
        let inv = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
            * eig.eigenvectors.transpose();
        Self::from_support_matrix(inv)
    }

    /// The ellipsoid `E(r_1, ..., r_n) = { Σ π|z_k|²/r_k <= 1 }`.
    pub fn normal_form(radii: &[f64]) -> Result<Self> {
        if radii.is_empty() {
            return Err(BodyError::Parameter {
                name: "radii",
                value: 0.0,
            });
        }
        let mut diag = Vec::with_capacity(2 * radii.len());
        for &r in radii {
            if !(r > 0.0 && r.is_finite()) {
                return Err(BodyError::Parameter {
                    name: "radius",
                    value: r,
                });
            }
            diag.extend([r / PI, r / PI]);
        }
        Self::from_support_matrix(DMatrix::from_diagonal(&DVector::from_vec(diag)))
    }

    pub fn support_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.eigvals.min() > 1e-14 * self.eigvals.max().max(1e-300)
    }

    /// `P = Q⁻¹`, the quadratic form with body `{xᵀPx <= 1}`.
    pub fn form(&self) -> Result<DMatrix<f64>> {
        if !self.is_nondegenerate() {
            return Err(BodyError::Degenerate);
        }
        Ok(&self.eigvecs
            * DMatrix::from_diagonal(&self.eigvals.map(|l| 1.0 / l))
            * self.eigvecs.transpose())
    }

    /// `Q^{1/2}`.
    pub fn sqrt_support(&self) -> DMatrix<f64> {
        &self.eigvecs
            * DMatrix::from_diagonal(&self.eigvals.map(f64::sqrt))
            * self.eigvecs.transpose()
    }

    /// Smallest Euclidean semi-axis, `min_{|u|=1} h(u)`.
    pub fn min_semi_axis(&self) -> f64 {
        self.eigvals.min().sqrt()
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.eigvals.max().sqrt()
    }

    /// Image under the linear map `m`.
    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<Self> {
        check_len(self.q.nrows(), m.ncols())?;
        Self::from_support_matrix(m * &self.q * m.transpose())
    }
}

impl ConvexBody for EllipsoidBody {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn support_point(&self, u: &[f64], point: &mut [f64]) -> Extent {
        let d = u.len();
        let mut h2 = 0.0;
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.q[(i, j)] * u[j];
            }
            point[i] = s;
            h2 += s * u[i];
        }
        let h = h2.max(0.0).sqrt();
        if h > 0.0 {
            point.iter_mut().for_each(|p| *p /= h);
        } else {
            point.fill(0.0);
        }
        Extent::Finite(h)
    }

    fn contains(&self, p: &[f64], tol: f64) -> bool {
        let p = DVector::from_column_slice(p);
        let c = self.eigvecs.transpose() * p;
        let lmax = self.eigvals.max().max(1e-300);
        let mut form = 0.0;
        for (ci, li) in c.iter().zip(self.eigvals.iter()) {
            if *li > 1e-12 * lmax {
                form += ci * ci / li;
            } else if ci.abs() > tol * lmax.sqrt() {
                return false;
            }
        }
        form <= 1.0 + tol
    }
}

/// `{ p : pᵀCp <= c }` for a PSD `C` without full rank.
#[derive(Debug, Clone)]
pub struct QuadCylinder {
    c: DMatrix<f64>,
    level: f64,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl QuadCylinder {
    pub fn new(c: DMatrix<f64>, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(BodyError::Parameter {
                name: "level",
                value: level,
            });
        }
        let eig = symmetric_eigen(&c)?;
        let lmax = eig.eigenvalues.max().max(0.0);
        let rank = eig
            .eigenvalues
            .iter()
            .filter(|&&l| l > 1e-10 * lmax.max(1e-300))
            .count();
        if rank == c.nrows() && lmax > 0.0 {
            return Err(BodyError::FullRank);
        }
        Ok(Self {
            c: (&c + c.transpose()) * 0.5,
            level,
            eigvals: eig.eigenvalues.map(|l| l.max(0.0)),
            eigvecs: eig.eigenvectors,
        })
    }

    /// `{ p : A p ∈ W }` where `W` is the set of points whose projection
    /// killing `z_n` lies in `A·B^{2n}(1)`; the form is `π (A⁻¹ΠA)ᵀ(A⁻¹ΠA)`.
    pub fn preimage_of_w(a: &SymplecticMatrix) -> Result<Self> {
        let dim = a.matrix().nrows();
        let mut pi_proj = DMatrix::<f64>::identity(dim, dim);
        pi_proj[(dim - 2, dim - 2)] = 0.0;
        pi_proj[(dim - 1, dim - 1)] = 0.0;
        let g = a.inverse().matrix() * pi_proj * a.matrix();
        Self::new(g.transpose() * g * PI, 1.0)
    }

    /// `A⁻¹W⁴` for the orbit normalization at Kähler angle `t`.
    pub fn orbit_cylinder(t: f64) -> Result<Self> {
        Self::preimage_of_w(&matrix_a_orbit(t)?.a)
    }

    /// The rank-two description `π(<p,Jv₁>² + <p,Jv₂>²) <= t²` for a pair
    /// `v₁, v₂`.
    pub fn from_frame(jv1: &[f64], jv2: &[f64], t: f64) -> Result<Self> {
        check_len(jv1.len(), jv2.len())?;
        let a = DVector::from_column_slice(jv1);
        let b = DVector::from_column_slice(jv2);
        Self::new((&a * a.transpose() + &b * b.transpose()) * PI, t * t)
    }

    pub fn form(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        let p = DVector::from_column_slice(p);
        (p.transpose() * &self.c * p)[(0, 0)]
    }

    /// Preimage-side transform: the image `M·{pᵀCp <= c}` is
    /// `{ qᵀ M⁻ᵀCM⁻¹ q <= c }`.
    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<Self> {
        check_len(self.c.nrows(), m.ncols())?;
        let inv = m.clone().try_inverse().ok_or(BodyError::Singular)?;
        Self::new(inv.transpose() * &self.c * inv, self.level)
    }

    fn rank_tol(&self) -> f64 {
        1e-10 * self.eigvals.max().max(1e-300)
    }
}

impl ConvexBody for QuadCylinder {
    fn dim(&self) -> usize {
        self.c.nrows()
    }

    fn support_point(&self, u: &[f64], point: &mut [f64]) -> Extent {
        let uv = DVector::from_column_slice(u);
        let coeffs = self.eigvecs.transpose() * &uv;
        let unorm = uv.norm();
        let tol = self.rank_tol();
        let mut y = DVector::zeros(u.len());
        let mut phi = 0.0;
        for (i, (ci, li)) in coeffs.iter().zip(self.eigvals.iter()).enumerate() {
            if *li > tol {
                y[i] = ci / li;
                phi += ci * ci / li;
            } else if ci.abs() > 1e-12 * unorm.max(1e-300) {
                return Extent::Unbounded;
            }
        }
        let h = (self.level * phi).sqrt();
        let x = &self.eigvecs * y;
        if h > 0.0 {
            for (p, xi) in point.iter_mut().zip(x.iter()) {
                *p = xi * self.level / h;
            }
        } else {
            point.fill(0.0);
        }
        Extent::Finite(h)
    }

    fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.value(p) <= self.level * (1.0 + tol)
    }
}

/// An ellipsoid intersected with a quadratic cylinder.
///
/// The support function solves the dual of `max <x,u>` subject to both
/// quadratic constraints. With `P = Q⁻¹` and `C' = C/c` diagonalized
/// simultaneously (`Q^{1/2} C' Q^{1/2} = V D Vᵀ`, `ũ = Vᵀ Q^{1/2} u`):
///
/// `h(u)² = min_{μ ∈ [0,1]} Σ ũᵢ² / (μ + (1-μ) dᵢ)`,
///
/// where `μ` and `1-μ` are the normalized multipliers of the two constraints.
#[derive(Debug, Clone)]
pub struct IntersectionBody {
    ellipsoid: EllipsoidBody,
    cylinder: QuadCylinder,
    to_tilde: DMatrix<f64>,
    from_tilde: DMatrix<f64>,
    d: Vec<f64>,
}

impl IntersectionBody {
    pub fn new(ellipsoid: EllipsoidBody, cylinder: QuadCylinder) -> Result<Self> {
        check_len(ellipsoid.dim(), cylinder.dim())?;
        if !ellipsoid.is_nondegenerate() {
            return Err(BodyError::Degenerate);
        }
        let root = ellipsoid.sqrt_support();
        let ct = &root * cylinder.form() * &root / cylinder.level();
        let eig = SymmetricEigen::new((&ct + ct.transpose()) * 0.5);
        let d = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
        let to_tilde = eig.eigenvectors.transpose() * &root;
        let from_tilde = &root * &eig.eigenvectors;
        Ok(Self {
            ellipsoid,
            cylinder,
            to_tilde,
            from_tilde,
            d,
        })
    }

    /// `B⁴(1) ∩ A⁻¹W⁴` for the orbit normalization.
    pub fn ball_cap_orbit_cylinder(t: f64) -> Result<Self> {
        Self::new(
            CapacityBall::new(1.0, 2)?.to_ellipsoid(),
            QuadCylinder::orbit_cylinder(t)?,
        )
    }

    pub fn ellipsoid(&self) -> &EllipsoidBody {
        &self.ellipsoid
    }

    pub fn cylinder(&self) -> &QuadCylinder {
        &self.cylinder
    }

    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<Self> {
        Self::new(self.ellipsoid.transformed(m)?, self.cylinder.transformed(m)?)
    }

    /// Multiplier `μ ∈ [0, 1]` on the ellipsoid constraint, and `h(u)`.
    fn solve_dual(&self, ut: &[f64]) -> (f64, f64) {
        let d = &self.d;
        let dphi = |mu: f64| -> (f64, f64) {
            let (mut g, mut hess) = (0.0, 0.0);
            for (u, di) in ut.iter().zip(d) {
                let den = mu + (1.0 - mu) * di;
                let a = u * u * (1.0 - di);
                g -= a / (den * den);
                hess += 2.0 * a * (1.0 - di) / (den * den * den);
            }
            (g, hess)
        };
        let phi = |mu: f64| -> f64 {
            ut.iter()
                .zip(d)
                .map(|(u, di)| u * u / (mu + (1.0 - mu) * di))
                .sum()
        };
        let (g1, _) = dphi(1.0);
        let mu = if g1 <= 0.0 {
            1.0
        } else {
            let lo_probe = dphi(0.0);
            if lo_probe.0.is_finite() && lo_probe.0 >= 0.0 {
                0.0
            } else {
                // φ is convex, so φ' is increasing: safeguarded Newton.
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                let mut mu = 0.5;
                for _ in 0..200 {
                    let (g, h) = dphi(mu);
                    if !g.is_finite() || g < 0.0 {
                        lo = mu;
                    } else {
                        hi = mu;
                    }
                    if g.is_finite() && g.abs() <= 1e-15 * (1.0 + phi(mu)) {
                        break;
                    }
                    let newton = if g.is_finite() && h > 0.0 {
                        mu - g / h
                    } else {
                        f64::NAN
                    };
                    mu = if newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                    if hi - lo < 1e-16 {
                        break;
                    }
                }
                mu
            }
        };
        (mu, phi(mu).max(0.0).sqrt())
    }
}

impl ConvexBody for IntersectionBody {
    fn dim(&self) -> usize {
        self.ellipsoid.dim()
    }

    fn support_point(&self, u: &[f64], point: &mut [f64]) -> Extent {
        let dim = u.len();
        let mut ut = vec![0.0; dim];
        for (i, v) in ut.iter_mut().enumerate() {
            *v = (0..dim).map(|j| self.to_tilde[(i, j)] * u[j]).sum();
        }
        let (mu, h) = self.solve_dual(&ut);
        if h <= 0.0 {
            point.fill(0.0);
            return Extent::Finite(0.0);
        }
        let y: Vec<f64> = ut
            .iter()
            .zip(&self.d)
            .map(|(u, di)| u / (mu + (1.0 - mu) * di) / h)
            .collect();
        for (i, p) in point.iter_mut().enumerate() {
            *p = (0..dim).map(|j| self.from_tilde[(i, j)] * y[j]).sum();
        }
        Extent::Finite(h)
    }

    fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.ellipsoid.contains(p, tol) && self.cylinder.contains(p, tol)
    }
}

/// `max <p, u>` over `ellipsoid ∩ cylinder`.
pub fn support_intersection(
    ellipsoid: &EllipsoidBody,
    cylinder: &QuadCylinder,
    u: &[f64],
) -> Result<f64> {
    check_len(ellipsoid.dim(), u.len())?;
    if !ellipsoid.is_nondegenerate() {
        if ellipsoid.support(u) == Extent::Finite(0.0) {
            return Ok(0.0);
        }
        return Err(BodyError::Unbounded {
            direction: u.to_vec(),
        });
    }
    let body = IntersectionBody::new(ellipsoid.clone(), cylinder.clone())?;
    body.support(u).finite().ok_or_else(|| BodyError::Unbounded {
        direction: u.to_vec(),
    })
}

/// Capacity of the largest round ball inside `M·B^{2n}(1)`: `σ_min(M)²`.
pub fn largest_ball_in_ellipsoid(m: &DMatrix<f64>) -> Result<f64> {
    let sv = m.singular_values();
    let smin = sv.min();
    if smin <= 1e-14 * sv.max() {
        return Err(BodyError::Singular);
    }
    Ok(smin * smin)
}

/// Largest `r` with `S·B^{2n}(r) ⊂ cylinder`: `π c / λ_max(SᵀCS)`.
pub fn largest_ball_in_cylinder(s: &DMatrix<f64>, cylinder: &QuadCylinder) -> Result<Extent> {
    check_len(cylinder.dim(), s.nrows())?;
    let m = s.transpose() * cylinder.form() * s;
    let lmax = SymmetricEigen::new((&m + m.transpose()) * 0.5)
        .eigenvalues
        .max();
    if lmax <= 1e-300 {
        return Ok(Extent::Unbounded);
    }
    Ok(Extent::Finite(PI * cylinder.level() / lmax))
}

/// `{ q ∈ R^{2n-2} : (q, 0, 0) ∈ M·B^{2n}(1) }`.
pub fn slice_ellipsoid(m: &DMatrix<f64>) -> Result<EllipsoidBody> {
    let dim = m.nrows();
    if dim < 4 || dim % 2 != 0 || m.ncols() != dim {
        return Err(BodyError::DimensionMismatch {
            expected: 4,
            got: dim,
        });
    }
    let inv = m.clone().try_inverse().ok_or(BodyError::Singular)?;
    let form = inv.transpose() * inv * PI;
    let sub = form.view((0, 0), (dim - 2, dim - 2)).into_owned();
    EllipsoidBody::from_form(&sub)
}

/// Serialized description of the bodies the command line understands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BodySpec {
    /// `B⁴(r)`.
    Ball4 {
        #[serde(default = "one")]
        r: f64,
    },
    /// `E(r_1, ..., r_n)`.
    Ellipsoid { radii: Vec<f64> },
    /// `B⁴(1) ∩ A⁻¹W⁴`.
    Intersection { t: f64 },
    /// `M_t B⁴(r)`.
    MtImage {
        t: f64,
        #[serde(default = "one")]
        r: f64,
    },
    /// `A^L M_t B⁴(1)`.
    AlScaled {
        t: f64,
        #[serde(rename = "L")]
        l: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Concrete body built from a [`BodySpec`].
#[derive(Debug, Clone)]
pub enum Body {
    Ball(CapacityBall),
    Ellipsoid(EllipsoidBody),
    Intersection(IntersectionBody),
    /// `inner + offset`.
    Translated { inner: Box<Body>, offset: Vec<f64> },
}

impl BodySpec {
    pub fn build(&self) -> Result<Body> {
        Ok(match self {
            BodySpec::Ball4 { r } => Body::Ball(CapacityBall::new(*r, 2)?),
            BodySpec::Ellipsoid { radii } => Body::Ellipsoid(EllipsoidBody::normal_form(radii)?),
            BodySpec::Intersection { t } => {
                Body::Intersection(IntersectionBody::ball_cap_orbit_cylinder(*t)?)
            }
            BodySpec::MtImage { t, r } => {
                Body::Ellipsoid(EllipsoidBody::linear_image(matrix_mt(*t, 2)?.matrix(), *r)?)
            }
            BodySpec::AlScaled { t, l } => {
                if *l < 1.0 {
                    return Err(BodyError::Parameter { name: "L", value: *l });
                }
                let m = matrix_al(*l, 2)? * matrix_mt(*t, 2)?.matrix();
                Body::Ellipsoid(EllipsoidBody::linear_image(&m, 1.0)?)
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BodyError::Spec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

impl Body {
    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<Body> {
        Ok(match self {
            Body::Ball(b) => Body::Ellipsoid(b.to_ellipsoid().transformed(m)?),
            Body::Ellipsoid(e) => Body::Ellipsoid(e.transformed(m)?),
            Body::Intersection(i) => Body::Intersection(i.transformed(m)?),
            Body::Translated { inner, offset } => {
                check_len(m.ncols(), offset.len())?;
                let moved = m * DVector::from_column_slice(offset);
                Body::Translated {
                    inner: Box::new(inner.transformed(m)?),
                    offset: moved.iter().copied().collect(),
                }
            }
        })
    }

    pub fn translated(self, offset: Vec<f64>) -> Result<Body> {
        check_len(self.dim(), offset.len())?;
        Ok(Body::Translated {
            inner: Box::new(self),
            offset,
        })
    }
}

impl ConvexBody for Body {
    fn dim(&self) -> usize {
        match self {
            Body::Ball(b) => b.dim(),
            Body::Ellipsoid(e) => e.dim(),
            Body::Intersection(i) => i.dim(),
            Body::Translated { inner, .. } => inner.dim(),
        }
    }

    fn support_point(&self, u: &[f64], point: &mut [f64]) -> Extent {
        match self {
            Body::Ball(b) => b.support_point(u, point),
            Body::Ellipsoid(e) => e.support_point(u, point),
            Body::Intersection(i) => i.support_point(u, point),
            Body::Translated { inner, offset } => match inner.support_point(u, point) {
                Extent::Finite(h) => {
                    point.iter_mut().zip(offset).for_each(|(p, o)| *p += o);
                    Extent::Finite(h + u.iter().zip(offset).map(|(a, b)| a * b).sum::<f64>())
                }
                Extent::Unbounded => Extent::Unbounded,
            },
        }
    }

    fn contains(&self, p: &[f64], tol: f64) -> bool {
        match self {
            Body::Ball(b) => b.contains(p, tol),
            Body::Ellipsoid(e) => e.contains(p, tol),
            Body::Intersection(i) => i.contains(p, tol),
            Body::Translated { inner, offset } => {
                let q: Vec<f64> = p.iter().zip(offset).map(|(a, b)| a - b).collect();
                inner.contains(&q, tol)
            }
        }
    }

    fn is_centrally_symmetric(&self) -> bool {
        match self {
            Body::Translated { offset, .. } => offset.iter().all(|o| *o == 0.0),
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::{matrix_a_gw, matrix_s};

    #[test]
    fn ball_support_and_membership() {
        let b = CapacityBall::new(2.0, 2).unwrap();
        let h = b.support(&[3.0, 4.0, 0.0, 0.0]).finite().unwrap();
        assert!((h - 5.0 * (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!(b.contains(&[(2.0 / PI).sqrt(), 0.0, 0.0, 0.0], 1e-9));
        assert!(!b.contains(&[0.9, 0.0, 0.0, 0.0], 1e-9));
        assert!(CapacityBall::new(0.0, 2).is_err());
    }

    #[test]
    fn ellipsoid_from_form_matches_normal_form() {
        let e = EllipsoidBody::normal_form(&[1.0, 0.5]).unwrap();
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![PI, PI, 2.0 * PI, 2.0 * PI]));
        let f = EllipsoidBody::from_form(&p).unwrap();
        assert!((e.support_matrix() - f.support_matrix()).amax() < 1e-14);
        assert!(e.contains(&[0.0, 0.0, (0.5 / PI).sqrt(), 0.0], 1e-9));
        assert!(!e.contains(&[0.0, 0.0, (0.6 / PI).sqrt(), 0.0], 1e-9));
    }

    #[test]
    fn intersection_single_constraint_cases() {
        let t = 0.5;
        let body = IntersectionBody::ball_cap_orbit_cylinder(t).unwrap();
        let ball = CapacityBall::new(1.0, 2).unwrap();
        // Directions orthogonal to the cylinder's base only see the ball.
        let cyl = body.cylinder();
        let eig = SymmetricEigen::new(cyl.form().clone());
        let k = eig.eigenvalues.imin();
        let u: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let hi = body.support(&u).finite().unwrap();
        assert!((hi - ball.support(&u).finite().unwrap()).abs() < 1e-12);
        // Directions in the base see the cylinder radius t/√π.
        let k = eig.eigenvalues.imax();
        let u: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let hi = body.support(&u).finite().unwrap();
        let hc = cyl.support(&u).finite().unwrap();
        assert!((hi - hc).abs() < 1e-12, "{hi} {hc}");
        assert!((hc - t / PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cylinder_unbounded_directions() {
        let cyl = QuadCylinder::orbit_cylinder(0.5).unwrap();
        let eig = SymmetricEigen::new(cyl.form().clone());
        let k = eig.eigenvalues.imin();
        let u: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        assert!(cyl.support(&u).is_unbounded());
        assert!(QuadCylinder::new(DMatrix::identity(4, 4), 1.0).is_err());
    }

    #[test]
    fn ball_fitting_radii() {
        assert!((largest_ball_in_ellipsoid(&DMatrix::identity(4, 4)).unwrap() - 1.0).abs() < 1e-14);
        let a = matrix_a_gw(0.8, 2).unwrap();
        assert!((largest_ball_in_ellipsoid(a.matrix()).unwrap() - 0.5).abs() < 1e-12);
        let a = matrix_a_gw(0.28, 2).unwrap();
        let expect = 0.28 / (1.0 + (1.0f64 - 0.0784).sqrt());
        assert!((largest_ball_in_ellipsoid(a.matrix()).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.142857).abs() < 1e-6);

        let t = 0.6;
        let cyl = QuadCylinder::preimage_of_w(&matrix_a_gw(t, 2).unwrap()).unwrap();
        let r = largest_ball_in_cylinder(&DMatrix::identity(4, 4), &cyl)
            .unwrap()
            .finite()
            .unwrap();
        assert!((r - 0.36).abs() < 1e-12);
        let zero = QuadCylinder::new(DMatrix::zeros(4, 4), 1.0).unwrap();
        assert!(largest_ball_in_cylinder(&DMatrix::identity(4, 4), &zero)
            .unwrap()
            .is_unbounded());
        let s = matrix_s(1.3, 1.1, 2).unwrap();
        assert!(largest_ball_in_cylinder(s.matrix(), &cyl).unwrap().finite().unwrap() > 0.0);
    }

    #[test]
    fn slices() {
        let s = slice_ellipsoid(&DMatrix::identity(4, 4)).unwrap();
        assert!((s.support_matrix() - DMatrix::<f64>::identity(2, 2) / PI).amax() < 1e-14);
        let t = 0.49;
        let s = slice_ellipsoid(matrix_a_gw(t, 2).unwrap().matrix()).unwrap();
        assert!((s.support_matrix() - DMatrix::<f64>::identity(2, 2) * (t / PI)).amax() < 1e-12);
    }

    #[test]
    fn spec_round_trip() {
        let spec = BodySpec::from_json(r#"{"kind":"al-scaled","t":0.5,"L":4}"#).unwrap();
        assert_eq!(spec, BodySpec::AlScaled { t: 0.5, l: 4.0 });
        assert_eq!(BodySpec::from_json(&spec.to_json()).unwrap(), spec);
        assert_eq!(
            BodySpec::from_json(r#"{"kind":"ball4"}"#).unwrap(),
            BodySpec::Ball4 { r: 1.0 }
        );
        assert!(BodySpec::from_json(r#"{"kind":"cube"}"#).is_err());
        assert!(BodySpec::Intersection { t: 1.5 }.build().is_err());
    }
}
