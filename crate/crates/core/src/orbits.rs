//! Closed characteristics on the boundary of `B⁴(1) ∩ A⁻¹W⁴`.
//!
//! The boundary has two smooth strata, `S1` (on the sphere, inside the
//! cylinder) and `S2` (on the cylinder, inside the ball), meeting along the
//! corner `S1 ∩ S2`. On each stratum the characteristic flow is a rotation:
//! the Hopf rotation `p ↦ cos τ p + sin τ Jp` on `S1`, and on `S2` a rotation
//! of the `(α₁, α₂)` coordinates with `(α₃, α₄)` fixed. Arcs are therefore
//! advanced in closed form and integration reduces to locating the corner
//! crossings.

use crate::optim::bisect;
use crate::quad::gauss_legendre;
use crate::symcore::{PhaseVector, SymplecticError};
use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use thiserror::Error;

type V4 = Vector4<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("t = {0} must lie in (0, 1)")]
    KahlerAngle(f64),
    #[error("the minus glide family exists only for t < 1/2 (t = {0})")]
    NoMinusBranch(f64),
    #[error("expected a point of R^4, got dimension {0}")]
    Dimension(usize),
    #[error("point is not on the boundary (ball residual {ball:e}, cylinder residual {cylinder:e})")]
    OffBoundary { ball: f64, cylinder: f64 },
    #[error("alpha3^2 + alpha4^2 = {value} exceeds the corner range {max}")]
    OutOfRange { value: f64, max: f64 },
    #[error("zero vector")]
    Zero,
    #[error("step must be positive and at most 0.1, got {0}")]
    Step(f64),
    #[error("integration stalled at a corner after {arcs} arcs")]
    Stalled { arcs: usize },
    #[error(transparent)]
    Symplectic(#[from] SymplecticError),
}

pub type Result<T> = std::result::Result<T, OrbitError>;

fn jv(v: &V4) -> V4 {
    V4::new(-v[1], v[0], -v[3], v[2])
}

fn omega(u: &V4, v: &V4) -> f64 {
    jv(u).dot(v)
}

fn to_v4(p: &PhaseVector) -> Result<V4> {
    if p.dim() != 4 {
        return Err(OrbitError::Dimension(p.dim()));
    }
    Ok(V4::from_column_slice(p.as_slice()))
}

fn to_pv(v: &V4) -> PhaseVector {
    PhaseVector::new(v.iter().copied().collect()).expect("length 4")
}

/// The orthonormal frame `v₁, v₂, n₁, n₂` adapted to the cylinder.
#[derive(Debug, Clone)]
pub struct OrbitFrame {
    pub t: f64,
    v1: V4,
    v2: V4,
    n1: V4,
    n2: V4,
    alpha_inv: Matrix4<f64>,
}

impl OrbitFrame {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(OrbitError::KahlerAngle(t));
        }
        let s = 1.0 / 2f64.sqrt();
        let (a, b) = ((1.0 + t).sqrt(), (1.0 - t).sqrt());
        let v1 = V4::new(a, 0.0, b, 0.0) * s;
        let v2 = V4::new(0.0, a, 0.0, -b) * s;
        let n1 = V4::new(0.0, b, 0.0, a) * s;
        let n2 = V4::new(-b, 0.0, a, 0.0) * s;
        let basis = Matrix4::from_columns(&[v1, v2, jv(&n1), jv(&n2)]);
        let alpha_inv = basis.try_inverse().ok_or(SymplecticError::Singular)?;
        Ok(Self {
            t,
            v1,
            v2,
            n1,
            n2,
            alpha_inv,
        })
    }

    pub fn v1(&self) -> PhaseVector {
        to_pv(&self.v1)
    }
    pub fn v2(&self) -> PhaseVector {
        to_pv(&self.v2)
    }
    pub fn n1(&self) -> PhaseVector {
        to_pv(&self.n1)
    }
    pub fn n2(&self) -> PhaseVector {
        to_pv(&self.n2)
    }

    /// `(x₁, …, x₄)` with `p = x₁Jn₁ + x₂Jn₂ + x₃Jv₁ + x₄Jv₂`.
    pub fn x_coords(&self, p: &PhaseVector) -> Result<[f64; 4]> {
        Ok(self.x4(&to_v4(p)?).into())
    }

    /// `(α₁, …, α₄)` with `p = α₁v₁ + α₂v₂ + α₃Jn₁ + α₄Jn₂`.
    pub fn alpha_coords(&self, p: &PhaseVector) -> Result<[f64; 4]> {
        Ok((self.alpha_inv * to_v4(p)?).into())
    }

    pub fn from_x(&self, x: [f64; 4]) -> PhaseVector {
        to_pv(&self.from_x4(&V4::from(x)))
    }

    pub fn from_alpha(&self, a: [f64; 4]) -> PhaseVector {
        to_pv(&self.from_alpha4(&V4::from(a)))
    }

    fn x4(&self, p: &V4) -> V4 {
        V4::new(
            p.dot(&jv(&self.n1)),
            p.dot(&jv(&self.n2)),
            p.dot(&jv(&self.v1)),
            p.dot(&jv(&self.v2)),
        )
    }

    fn from_x4(&self, x: &V4) -> V4 {
        jv(&self.n1) * x[0] + jv(&self.n2) * x[1] + jv(&self.v1) * x[2] + jv(&self.v2) * x[3]
    }

    fn from_alpha4(&self, a: &V4) -> V4 {
        self.v1 * a[0] + self.v2 * a[1] + jv(&self.n1) * a[2] + jv(&self.n2) * a[3]
    }

    /// `π|p|² - 1`.
    fn ball_residual(&self, p: &V4) -> f64 {
        PI * p.norm_squared() - 1.0
    }

    /// `π(x₃² + x₄²) - t²`.
    fn cyl_residual(&self, p: &V4) -> f64 {
        let x = self.x4(p);
        PI * (x[2] * x[2] + x[3] * x[3]) - self.t * self.t
    }

    /// Outer normal of the cylinder, `x₃Jv₁ + x₄Jv₂`.
    fn cyl_normal(&self, p: &V4) -> V4 {
        let x = self.x4(p);
        jv(&self.v1) * x[2] + jv(&self.v2) * x[3]
    }

    /// `<p, J n(p)>`; negative means the cylinder flow moves into the ball.
    fn sigma(&self, p: &V4) -> f64 {
        p.dot(&jv(&self.cyl_normal(p)))
    }

    /// Membership in `B⁴(1) ∩ A⁻¹W⁴` (frame description).
    pub fn contains(&self, p: &PhaseVector, tol: f64) -> Result<bool> {
        let p = to_v4(p)?;
        Ok(self.ball_residual(&p) <= tol && self.cyl_residual(&p) <= tol * self.t * self.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    S1,
    S2,
    Corner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArcKind {
    S1,
    S2,
    CornerGlide,
}

impl ArcKind {
    pub fn label(self) -> &'static str {
        match self {
            ArcKind::S1 => "S1",
            ArcKind::S2 => "S2",
            ArcKind::CornerGlide => "CORNER_GLIDE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GlideBranch {
    Plus,
    Minus,
}

/// Classifies a boundary point; the residuals are relative to each level.
pub fn classify_boundary_point(p: &PhaseVector, frame: &OrbitFrame, tol: f64) -> Result<Region> {
    let p = to_v4(p)?;
    classify4(&p, frame, tol)
}

fn classify4(p: &V4, frame: &OrbitFrame, tol: f64) -> Result<Region> {
    let ball = frame.ball_residual(p);
    let cylinder = frame.cyl_residual(p) / (frame.t * frame.t);
    let on_ball = ball.abs() <= tol;
    let on_cyl = cylinder.abs() <= tol;
    if ball > tol || cylinder > tol || (!on_ball && !on_cyl) {
        return Err(OrbitError::OffBoundary { ball, cylinder });
    }
    Ok(match (on_ball, on_cyl) {
        (true, true) => Region::Corner,
        (true, false) => Region::S1,
        _ => Region::S2,
    })
}

/// The characteristic line field: one direction on a smooth stratum, the two
/// generators `Jp` and `Jn(p)` of the cone at a corner.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    Single(PhaseVector),
    Cone { jp: PhaseVector, jn: PhaseVector },
}

pub fn characteristic_direction(p: &PhaseVector, frame: &OrbitFrame) -> Result<Direction> {
    let q = to_v4(p)?;
    Ok(match classify4(&q, frame, 1e-9)? {
        Region::S1 => Direction::Single(to_pv(&jv(&q))),
        Region::S2 => Direction::Single(to_pv(&jv(&frame.cyl_normal(&q)))),
        Region::Corner => Direction::Cone {
            jp: to_pv(&jv(&q)),
            jn: to_pv(&jv(&frame.cyl_normal(&q))),
        },
    })
}

/// `(|z₁|², |z₂|²)` at a corner with `α₃² + α₄² = ρ²`.
pub fn s2_transit_norms(alpha3: f64, alpha4: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0 && t < 1.0) {
        return Err(OrbitError::KahlerAngle(t));
    }
    let rho2 = alpha3 * alpha3 + alpha4 * alpha4;
    let max = corner_rho2_max(t);
    if rho2 > max * (1.0 + 1e-12) {
        return Err(OrbitError::OutOfRange { value: rho2, max });
    }
    Ok((
        (1.0 + t) / (2.0 * PI) - t * rho2 / 2.0,
        (1.0 - t) / (2.0 * PI) + t * rho2 / 2.0,
    ))
}

/// Largest `α₃² + α₄²` for which the `S2` circle reaches the sphere.
pub fn corner_rho2_max(t: f64) -> f64 {
    4.0 * (1.0 - t * t) / PI
}

/// Area of the projection of the Hopf circle through `p` to the
/// `(Jv₁, Jv₂)` plane: `|π|z₁|² - (1-t)π|p|²/2|`.
pub fn hopf_projection_area(p: &PhaseVector, frame: &OrbitFrame) -> Result<f64> {
    let q = to_v4(p)?;
    if q.norm() == 0.0 {
        return Err(OrbitError::Zero);
    }
    let z1 = q[0] * q[0] + q[1] * q[1];
    Ok((PI * z1 - 0.5 * (1.0 - frame.t) * PI * q.norm_squared()).abs())
}

/// The same area from `m` samples of the projected circle (shoelace).
pub fn hopf_projection_area_sampled(p: &PhaseVector, frame: &OrbitFrame, m: usize) -> Result<f64> {
    let q = to_v4(p)?;
    let pts: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let s = TAU * k as f64 / m as f64;
            let g = q * s.cos() + jv(&q) * s.sin();
            let x = frame.x4(&g);
            (x[2], x[3])
        })
        .collect();
    let mut a = 0.0;
    for k in 0..m {
        let (x0, y0) = pts[k];
        let (x1, y1) = pts[(k + 1) % m];
        a += x0 * y1 - x1 * y0;
    }
    // The polygon inscribed in an ellipse loses area like 1 - sin(2π/m)/(2π/m).
    let h = TAU / m as f64;
    Ok(0.5 * a.abs() * h / h.sin())
}

#[derive(Debug, Clone)]
enum ArcGeom {
    /// `γ(s) = cos s · p₀ + sin s · Jp₀`.
    Hopf { p0: V4 },
    /// `γ(s) = c + (cos(φ₀+s) v₁ + sin(φ₀+s) v₂)/√π`.
    Cylinder { c: V4, phi0: f64 },
    /// Corner curve `x = (λx₄, -λx₃, x₃, x₄)`, `x₃ + ix₄ = (t/√π) e^{i(ψ₀ + dir·s)}`.
    Glide {
        lambda: f64,
        psi0: f64,
        dir: f64,
        t: f64,
    },
}

impl ArcGeom {
    fn eval(&self, frame: &OrbitFrame, s: f64) -> (V4, V4) {
        match self {
            ArcGeom::Hopf { p0 } => {
                let (c, sn) = (s.cos(), s.sin());
                (p0 * c + jv(p0) * sn, -p0 * sn + jv(p0) * c)
            }
            ArcGeom::Cylinder { c, phi0 } => {
                let a = phi0 + s;
                let k = 1.0 / PI.sqrt();
                (
                    c + (frame.v1 * a.cos() + frame.v2 * a.sin()) * k,
                    (-frame.v1 * a.sin() + frame.v2 * a.cos()) * k,
                )
            }
            ArcGeom::Glide {
                lambda,
                psi0,
                dir,
                t,
            } => {
                let r = t / PI.sqrt();
                let psi = psi0 + dir * s;
                let (x3, x4) = (r * psi.cos(), r * psi.sin());
                let (dx3, dx4) = (-r * psi.sin() * dir, r * psi.cos() * dir);
                (
                    frame.from_x4(&V4::new(lambda * x4, -lambda * x3, x3, x4)),
                    frame.from_x4(&V4::new(lambda * dx4, -lambda * dx3, dx3, dx4)),
                )
            }
        }
    }

    /// `½ ∫ ω(γ, γ')` by composite Gauss–Legendre.
    fn line_action(&self, frame: &OrbitFrame, angle: f64) -> f64 {
        let (nodes, weights) = gauss_legendre(16);
        let pieces = ((angle.abs() / 0.25).ceil() as usize).max(1);
        let h = angle / pieces as f64;
        let mut total = 0.0;
        for k in 0..pieces {
            let a = k as f64 * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let s = a + 0.5 * h * (x + 1.0);
                let (g, dg) = self.eval(frame, s);
                total += 0.5 * h * w * 0.5 * omega(&g, &dg);
            }
        }
        total
    }
}

/// One smooth piece of a characteristic.
#[derive(Debug, Clone)]
pub struct Arc {
    pub kind: ArcKind,
    pub start: PhaseVector,
    pub end: PhaseVector,
    /// `τ` for `S1`, `θ` for `S2`, and the corner angle `ψ` for glides.
    pub angle: f64,
    /// Action from the angular budget.
    pub action: f64,
    /// Action from quadrature of `½∫ω(γ, γ')`.
    pub line_action: f64,
    geom: ArcGeom,
}

impl Arc {
    /// `m + 1` equally spaced points along the arc.
    pub fn sample(&self, frame: &OrbitFrame, m: usize) -> Vec<PhaseVector> {
        (0..=m)
            .map(|k| to_pv(&self.geom.eval(frame, self.angle * k as f64 / m as f64).0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, PartialOrd, Ord)]
pub enum OrbitKind {
    GlidePlus,
    GlideMinus,
    PureS1,
    PureS2,
    Mixed,
    Other,
}

#[derive(Debug, Clone)]
pub struct CharacteristicOrbit {
    pub t: f64,
    pub arcs: Vec<Arc>,
    pub action: f64,
    pub line_action: f64,
    pub closed: bool,
    /// Distance between the final endpoint and the starting point.
    pub closure_gap: f64,
    /// Arcs run before the first corner, excluded from the orbit proper.
    pub lead_in: Vec<Arc>,
    /// Dispatch events worth a second look (near-tangent corners and the like).
    pub notes: Vec<String>,
}

impl CharacteristicOrbit {
    fn from_arcs(t: f64, arcs: Vec<Arc>, closed: bool, closure_gap: f64) -> Self {
        let action = arcs.iter().map(|a| a.action).sum();
        let line_action = arcs.iter().map(|a| a.line_action).sum();
        Self {
            t,
            arcs,
            action,
            line_action,
            closed,
            closure_gap,
            lead_in: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn count(&self, kind: ArcKind) -> usize {
        self.arcs.iter().filter(|a| a.kind == kind).count()
    }

    pub fn is_mixed(&self) -> bool {
        self.count(ArcKind::S1) > 0 && self.count(ArcKind::S2) > 0
    }

    pub fn kind(&self) -> OrbitKind {
        let (s1, s2, g) = (
            self.count(ArcKind::S1),
            self.count(ArcKind::S2),
            self.count(ArcKind::CornerGlide),
        );
        match (s1, s2, g) {
            (0, 0, g) if g > 0 => {
                if (self.action - self.t).abs() < 1e-6 {
                    OrbitKind::GlidePlus
                } else {
                    OrbitKind::GlideMinus
                }
            }
            (s, 0, 0) if s > 0 => OrbitKind::PureS1,
            (0, s, 0) if s > 0 => OrbitKind::PureS2,
            (a, b, 0) if a > 0 && b > 0 => OrbitKind::Mixed,
            _ => OrbitKind::Other,
        }
    }

    pub fn start(&self) -> Option<&PhaseVector> {
        self.arcs.first().map(|a| &a.start)
    }

    /// Largest gap between consecutive arc endpoints.
    pub fn continuity_gap(&self) -> f64 {
        self.arcs
            .windows(2)
            .map(|w| (&w[0].end - &w[1].start).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with header `arc,region,angle,action,x1,y1,x2,y2` (arc endpoints).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arc,region,angle,action,x1,y1,x2,y2\n");
        for (k, a) in self.arcs.iter().enumerate() {
            let e = a.end.as_slice();
            let _ = writeln!(
                out,
                "{k},{},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12}",
                a.kind.label(),
                a.angle,
                a.action,
                e[0],
                e[1],
                e[2],
                e[3]
            );
        }
        out
    }
}

fn glide_lambda(t: f64, branch: GlideBranch) -> f64 {
    let l = (1.0 - t * t).sqrt() / t;
    match branch {
        GlideBranch::Plus => l,
        GlideBranch::Minus => -l,
    }
}

/// Action of each glide family in closed form.
pub fn glide_action(t: f64, branch: GlideBranch) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(OrbitError::KahlerAngle(t));
    }
    match branch {
        GlideBranch::Plus => Ok(t),
        GlideBranch::Minus if t < 0.5 => Ok(t * (3.0 - 4.0 * t * t)),
        GlideBranch::Minus => Err(OrbitError::NoMinusBranch(t)),
    }
}

/// Cone coefficients `(α, β)` with `dγ/dψ = αJp + βJn(p)` on a glide curve.
fn glide_cone(frame: &OrbitFrame, lambda: f64, psi: f64) -> (f64, f64, f64) {
    let geom = ArcGeom::Glide {
        lambda,
        psi0: psi,
        dir: 1.0,
        t: frame.t,
    };
    let (p, dp) = geom.eval(frame, 0.0);
    let a = jv(&p);
    let b = jv(&frame.cyl_normal(&p));
    // Least squares on the 2-column system.
    let (aa, ab, bb) = (a.dot(&a), a.dot(&b), b.dot(&b));
    let (ad, bd) = (a.dot(&dp), b.dot(&dp));
    let det = aa * bb - ab * ab;
    let alpha = (bb * ad - ab * bd) / det;
    let beta = (aa * bd - ab * ad) / det;
    let resid = (dp - a * alpha - b * beta).norm();
    (alpha, beta, resid)
}

fn glide_arc(frame: &OrbitFrame, branch: GlideBranch, psi0: f64) -> Result<Arc> {
    let t = frame.t;
    let action = glide_action(t, branch)?;
    let lambda = glide_lambda(t, branch);
    let (alpha, beta, _) = glide_cone(frame, lambda, psi0);
    let scale = alpha.abs().max(beta.abs());
    let dir = if alpha >= -1e-12 * scale && beta >= -1e-12 * scale {
        1.0
    } else {
        -1.0
    };
    let geom = ArcGeom::Glide {
        lambda,
        psi0,
        dir,
        t,
    };
    let start = to_pv(&geom.eval(frame, 0.0).0);
    let end = to_pv(&geom.eval(frame, TAU).0);
    Ok(Arc {
        kind: ArcKind::CornerGlide,
        start,
        end,
        angle: TAU,
        action,
        line_action: geom.line_action(frame, TAU),
        geom,
    })
}

/// The closed corner orbit of the requested family.
pub fn glide_orbit(t: f64, branch: GlideBranch) -> Result<CharacteristicOrbit> {
    let frame = OrbitFrame::new(t)?;
    let arc = glide_arc(&frame, branch, 0.0)?;
    Ok(CharacteristicOrbit::from_arcs(t, vec![arc], true, 0.0))
}

/// Diagnostics for a glide family: cone coefficients and the drift off the
/// corner under RK4 continuation of `γ' = αJγ + βJn(γ)`.
#[derive(Debug, Clone, Serialize)]
pub struct GlideCheck {
    pub alpha: f64,
    pub beta: f64,
    pub cone_residual: f64,
    pub max_corner_drift: f64,
    pub continuation_steps: usize,
}

pub fn glide_check(t: f64, branch: GlideBranch, step: f64) -> Result<GlideCheck> {
    let frame = OrbitFrame::new(t)?;
    let lambda = glide_lambda(t, branch);
    let (alpha, beta, cone_residual) = glide_cone(&frame, lambda, 0.0);
    // Traverse the curve in the direction that puts the velocity in the cone.
    let (alpha, beta) = if alpha.max(beta) <= 0.0 {
        (-alpha, -beta)
    } else {
        (alpha, beta)
    };
    let field = |g: &V4| jv(g) * alpha + jv(&frame.cyl_normal(g)) * beta;
    let (mut g, _) = ArcGeom::Glide {
        lambda,
        psi0: 0.0,
        dir: 1.0,
        t,
    }
    .eval(&frame, 0.0);
    let psi_of = |g: &V4| {
        let x = frame.x4(g);
        x[3].atan2(x[2])
    };
    let mut swept: f64 = 0.0;
    let mut last = psi_of(&g);
    let mut drift: f64 = 0.0;
    let mut steps = 0;
    while swept.abs() < TAU && steps < 10_000_000 {
        let k1 = field(&g);
        let k2 = field(&(g + k1 * (0.5 * step)));
        let k3 = field(&(g + k2 * (0.5 * step)));
        let k4 = field(&(g + k3 * step));
        g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
        steps += 1;
        let psi = psi_of(&g);
        let mut d = psi - last;
        if d > PI {
            d -= TAU;
        } else if d < -PI {
            d += TAU;
        }
        swept += d;
        last = psi;
        drift = drift
            .max(frame.ball_residual(&g).abs())
            .max((frame.cyl_residual(&g) / (t * t)).abs());
    }
    Ok(GlideCheck {
        alpha,
        beta,
        cone_residual,
        max_corner_drift: drift,
        continuation_steps: steps,
    })
}

/// Which stratum a corner start enters first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    S1,
    S2,
}

/// A corner point with `(α₃, α₄)` prescribed that flows into `entry`.
pub fn corner_start(frame: &OrbitFrame, alpha3: f64, alpha4: f64, entry: Entry) -> Option<PhaseVector> {
    let c = jv(&frame.n1) * alpha3 + jv(&frame.n2) * alpha4;
    let k = 2.0 / PI.sqrt();
    let (b, cc) = (k * frame.v1.dot(&c), k * frame.v2.dot(&c));
    let r = b.hypot(cc);
    if r == 0.0 {
        return None;
    }
    let ps = cc.atan2(b);
    let cosv = -c.norm_squared() / r;
    if cosv.abs() > 1.0 {
        return None;
    }
    let off = cosv.acos();
    for phi in [ps + off, ps - off] {
        let p = c + (frame.v1 * phi.cos() + frame.v2 * phi.sin()) / PI.sqrt();
        let s = frame.sigma(&p);
        let wanted = match entry {
            Entry::S2 => s < 0.0,
            Entry::S1 => s > 0.0,
        };
        if wanted {
            return Some(to_pv(&p));
        }
    }
    None
}

const EVENT_TOL: f64 = 1e-12;
const CLOSURE_TOL: f64 = 1e-6;
const GLIDE_TOL: f64 = 1e-8;

enum Step {
    Arc(Arc),
    /// The arc completed a full turn without meeting the other stratum.
    Full(Arc),
}

fn advance(frame: &OrbitFrame, geom: ArcGeom, kind: ArcKind, step: f64) -> Step {
    let event = |s: f64| {
        let g = geom.eval(frame, s).0;
        match kind {
            ArcKind::S1 => frame.cyl_residual(&g) / (frame.t * frame.t),
            _ => frame.ball_residual(&g),
        }
    };
    let n = (TAU / step).ceil() as usize;
    let mut hit = None;
    for k in 1..=n {
        let s = (k as f64 * step).min(TAU);
        if event(s) > 0.0 {
            let lo = (k - 1) as f64 * step;
            hit = bisect(&event, lo, s, EVENT_TOL);
            if hit.is_none() {
                hit = Some(s);
            }
            break;
        }
    }
    let full = hit.is_none();
    let angle = hit.unwrap_or(TAU);
    let action = match kind {
        ArcKind::S1 => angle / TAU,
        _ => angle * frame.t / TAU,
    };
    let arc = Arc {
        kind,
        start: to_pv(&geom.eval(frame, 0.0).0),
        end: to_pv(&geom.eval(frame, angle).0),
        angle,
        action,
        line_action: geom.line_action(frame, angle),
        geom,
    };
    if full {
        Step::Full(arc)
    } else {
        Step::Arc(arc)
    }
}

fn s1_geom(p: &V4) -> ArcGeom {
    ArcGeom::Hopf { p0: *p }
}

fn s2_geom(frame: &OrbitFrame, p: &V4) -> ArcGeom {
    let a = frame.alpha_inv * p;
    let c = jv(&frame.n1) * a[2] + jv(&frame.n2) * a[3];
    ArcGeom::Cylinder {
        c,
        phi0: a[1].atan2(a[0]),
    }
}

fn glide_branch_at(frame: &OrbitFrame, p: &V4) -> Option<GlideBranch> {
    let x = frame.x4(p);
    for branch in [GlideBranch::Plus, GlideBranch::Minus] {
        if branch == GlideBranch::Minus && frame.t >= 0.5 {
            continue;
        }
        let l = glide_lambda(frame.t, branch);
        if (x[0] - l * x[3]).abs() <= GLIDE_TOL && (x[1] + l * x[2]).abs() <= GLIDE_TOL {
            return Some(branch);
        }
    }
    None
}

/// Follows the characteristic from `start` for at most `max_arcs` arcs.
///
/// A start inside a smooth stratum is first flowed to the next corner; that
/// lead-in arc is kept separately and the orbit proper begins at the corner.
/// Orbits that close without touching a corner are single-stratum circles.
pub fn integrate_orbit(
    start: &PhaseVector,
    frame: &OrbitFrame,
    max_arcs: usize,
    step: f64,
) -> Result<CharacteristicOrbit> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(OrbitError::Step(step));
    }
    let p0 = to_v4(start)?;
    let region = classify4(&p0, frame, 1e-9)?;
    let mut notes = Vec::new();
    let mut lead_in = Vec::new();

    let mut p = p0;
    if region != Region::Corner {
        let (geom, kind) = match region {
            Region::S1 => (s1_geom(&p), ArcKind::S1),
            _ => (s2_geom(frame, &p), ArcKind::S2),
        };
        match advance(frame, geom, kind, step) {
            Step::Full(arc) => {
                let gap = (&arc.end - &arc.start).norm();
                return Ok(CharacteristicOrbit::from_arcs(frame.t, vec![arc], true, gap));
            }
            Step::Arc(arc) => {
                p = to_v4(&arc.end)?;
                lead_in.push(arc);
            }
        }
    }

    let origin = p;
    let mut arcs: Vec<Arc> = Vec::new();
    let mut closed = false;
    let mut gap = f64::NAN;
    while arcs.len() < max_arcs {
        if let Some(branch) = glide_branch_at(frame, &p) {
            let x = frame.x4(&p);
            let arc = glide_arc(frame, branch, x[3].atan2(x[2]))?;
            gap = (&arc.end - &to_pv(&origin)).norm();
            closed = arcs.is_empty();
            if !closed {
                notes.push("orbit entered a glide family after leaving the corner".into());
            }
            arcs.push(arc);
            break;
        }
        let sigma = frame.sigma(&p);
        if sigma.abs() < 1e-12 {
            notes.push(format!(
                "corner with sigma = {sigma:e} outside both glide families; dispatched by sign"
            ));
        }
        let (geom, kind) = if sigma < 0.0 {
            (s2_geom(frame, &p), ArcKind::S2)
        } else {
            (s1_geom(&p), ArcKind::S1)
        };
        let arc = match advance(frame, geom, kind, step) {
            Step::Full(arc) | Step::Arc(arc) => arc,
        };
        if arc.angle < 1e-9 {
            return Err(OrbitError::Stalled { arcs: arcs.len() });
        }
        p = to_v4(&arc.end)?;
        arcs.push(arc);
        gap = (p - origin).norm();
        if gap < CLOSURE_TOL {
            closed = true;
            break;
        }
    }
    let mut orbit = CharacteristicOrbit::from_arcs(frame.t, arcs, closed, gap);
    orbit.lead_in = lead_in;
    orbit.notes = notes;
    Ok(orbit)
}

/// Rotation `Δ ∈ (-2π, 0]` of `z₁` over one `S2`+`S1` cycle from the corner
/// with `α₃ = ρ, α₄ = 0`, together with the cycle's action.
pub fn cycle_rotation(frame: &OrbitFrame, rho: f64, step: f64) -> Option<(f64, f64)> {
    let p = corner_start(frame, rho, 0.0, Entry::S2)?;
    let orbit = integrate_orbit(&p, frame, 2, step).ok()?;
    if orbit.arcs.len() != 2 || orbit.arcs[0].kind != ArcKind::S2 || orbit.arcs[1].kind != ArcKind::S1 {
        return None;
    }
    let a = p.as_slice();
    let b = orbit.arcs[1].end.as_slice();
    let d = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
    let d = if d > 0.0 { d - TAU } else { d };
    Some((d, orbit.action))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Closed alternating orbits: corner starts whose cycle rotation is a
/// rational multiple `-2πk/q` of a full turn, with `q <= max_q`.
pub fn rational_mixed_orbits(
    frame: &OrbitFrame,
    max_q: u64,
    scan_points: usize,
    step: f64,
) -> Vec<CharacteristicOrbit> {
    let rho_max = corner_rho2_max(frame.t).sqrt();
    let grid: Vec<(f64, f64)> = (1..scan_points)
        .into_par_iter()
        .filter_map(|k| {
            let rho = rho_max * k as f64 / scan_points as f64;
            cycle_rotation(frame, rho, step).map(|(d, _)| (rho, d))
        })
        .collect();
    let mut targets = Vec::new();
    for q in 1..=max_q {
        for k in 1..q {
            if gcd(k, q) == 1 {
                targets.push((k, q, -TAU * k as f64 / q as f64));
            }
        }
    }
    let mut found: Vec<(u64, u64, f64)> = Vec::new();
    for &(k, q, target) in &targets {
        for w in grid.windows(2) {
            let ((r0, d0), (r1, d1)) = (w[0], w[1]);
            if (d0 - target) * (d1 - target) < 0.0 && (d0 - d1).abs() < 1.0 {
                let f = |rho: f64| cycle_rotation(frame, rho, step).map_or(f64::NAN, |(d, _)| d - target);
                if let Some(rho) = bisect(f, r0, r1, 1e-15) {
                    found.push((k, q, rho));
                }
            }
        }
    }
    found
        .into_par_iter()
        .filter_map(|(_, q, rho)| {
            let p = corner_start(frame, rho, 0.0, Entry::S2)?;
            let orbit = integrate_orbit(&p, frame, 2 * q as usize + 2, step).ok()?;
            orbit.closed.then_some(orbit)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub t: f64,
    pub min_action: f64,
    pub witness: CharacteristicOrbit,
    pub glide_plus: f64,
    pub glide_minus: Option<f64>,
    /// Every closed orbit found, glide orbits first.
    pub closed: Vec<CharacteristicOrbit>,
    pub unclosed: usize,
    pub samples: usize,
    pub seed: u64,
}

impl ScanResult {
    pub fn mixed(&self) -> impl Iterator<Item = &CharacteristicOrbit> {
        self.closed.iter().filter(|o| o.kind() == OrbitKind::Mixed)
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            kind: OrbitKind,
            action: f64,
            line_action: f64,
            arcs: usize,
        }
        #[derive(Serialize)]
        struct Summary {
            t: f64,
            min_action: f64,
            witness_kind: OrbitKind,
            glide_plus: f64,
            glide_minus: Option<f64>,
            samples: usize,
            seed: u64,
            unclosed: usize,
            closed: Vec<Row>,
        }
        let s = Summary {
            t: self.t,
            min_action: self.min_action,
            witness_kind: self.witness.kind(),
            glide_plus: self.glide_plus,
            glide_minus: self.glide_minus,
            samples: self.samples,
            seed: self.seed,
            unclosed: self.unclosed,
            closed: self
                .closed
                .iter()
                .map(|o| Row {
                    kind: o.kind(),
                    action: o.action,
                    line_action: o.line_action,
                    arcs: o.arcs.len(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&s).expect("plain data")
    }
}

fn random_boundary_start(frame: &OrbitFrame, rng: &mut ChaCha8Rng, kind: usize) -> Option<V4> {
    let t = frame.t;
    match kind {
        0 => {
            let rho = corner_rho2_max(t).sqrt() * rng.random::<f64>();
            let ang: f64 = rng.random_range(0.0..TAU);
            let entry = if rng.random::<bool>() { Entry::S1 } else { Entry::S2 };
            corner_start(frame, rho * ang.cos(), rho * ang.sin(), entry)
                .map(|p| V4::from_column_slice(p.as_slice()))
        }
        1 => {
            for _ in 0..200 {
                let g = V4::from_fn(|_, _| StandardNormal.sample(rng));
                let p = g / (g.norm() * PI.sqrt());
                if frame.cyl_residual(&p) < -1e-6 {
                    return Some(p);
                }
            }
            None
        }
        _ => {
            let phi: f64 = rng.random_range(0.0..TAU);
            let rho = corner_rho2_max(t).sqrt() * rng.random::<f64>();
            let ang: f64 = rng.random_range(0.0..TAU);
            let p = frame.from_alpha4(&V4::new(
                phi.cos() / PI.sqrt(),
                phi.sin() / PI.sqrt(),
                rho * ang.cos(),
                rho * ang.sin(),
            ));
            (frame.ball_residual(&p) < -1e-6).then_some(p)
        }
    }
}

/// Minimal action over the closed characteristics found from `samples`
/// random boundary starts, the two glide families and the rational
/// alternating orbits.
pub fn min_action_scan(t: f64, samples: usize, seed: u64) -> Result<ScanResult> {
    let frame = OrbitFrame::new(t)?;
    let step = 1e-3;
    let mut closed = vec![glide_orbit(t, GlideBranch::Plus)?];
    let glide_minus = if t < 0.5 {
        closed.push(glide_orbit(t, GlideBranch::Minus)?);
        Some(glide_action(t, GlideBranch::Minus)?)
    } else {
        None
    };

    let runs: Vec<Option<CharacteristicOrbit>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let p = random_boundary_start(&frame, &mut rng, k % 3)?;
            integrate_orbit(&to_pv(&p), &frame, 40, step).ok()
        })
        .collect();
    let mut unclosed = 0;
    for orbit in runs.into_iter().flatten() {
        if orbit.closed {
            closed.push(orbit);
        } else {
            unclosed += 1;
        }
    }
    closed.extend(rational_mixed_orbits(&frame, 12, 160, step));

    let key = |o: &CharacteristicOrbit| -> Vec<f64> {
        o.start().map(|p| p.as_slice().to_vec()).unwrap_or_default()
    };
    let mut best = 0;
    for (k, o) in closed.iter().enumerate() {
        let b = &closed[best];
        let better = o.action < b.action - 1e-12
            || ((o.action - b.action).abs() <= 1e-12
                && key(o).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Less));
        if better {
            best = k;
        }
    }
    Ok(ScanResult {
        t,
        min_action: closed[best].action,
        witness: closed[best].clone(),
        glide_plus: t,
        glide_minus,
        closed,
        unclosed,
        samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal_with_twist_t() {
        for t in [0.1, 0.5, 0.9] {
            let f = OrbitFrame::new(t).unwrap();
            let b = [f.v1, f.v2, f.n1, f.n2];
            for i in 0..4 {
                for j in 0..4 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((b[i].dot(&b[j]) - expect).abs() < 1e-12);
                }
            }
            assert!((f.v2.dot(&jv(&f.v1)) - t).abs() < 1e-12);
            assert!((f.v1.dot(&jv(&f.v2)) + t).abs() < 1e-12);
        }
        assert!(OrbitFrame::new(1.0).is_err());
    }

    #[test]
    fn coordinates_round_trip() {
        let f = OrbitFrame::new(0.35).unwrap();
        let p = PhaseVector::new(vec![0.1, -0.2, 0.3, 0.05]).unwrap();
        let x = f.x_coords(&p).unwrap();
        assert!((&f.from_x(x) - &p).norm() < 1e-14);
        let a = f.alpha_coords(&p).unwrap();
        assert!((&f.from_alpha(a) - &p).norm() < 1e-14);
        assert!((x[2] - 0.35 * a[1]).abs() < 1e-14);
        assert!((x[3] + 0.35 * a[0]).abs() < 1e-14);
    }

    #[test]
    fn classification() {
        let t = 0.9;
        let f = OrbitFrame::new(t).unwrap();
        // On the sphere but outside the cylinder.
        let p = PhaseVector::new(vec![1.0 / PI.sqrt(), 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            classify_boundary_point(&p, &f, 1e-9),
            Err(OrbitError::OffBoundary { .. })
        ));
        let p = f.from_x([0.0, 0.0, t / PI.sqrt(), 0.0]);
        assert_eq!(classify_boundary_point(&p, &f, 1e-9).unwrap(), Region::S2);
        let s = ((1.0 - t * t) / PI).sqrt();
        let p = f.from_x([s, 0.0, t / PI.sqrt(), 0.0]);
        assert_eq!(classify_boundary_point(&p, &f, 1e-9).unwrap(), Region::Corner);
        assert!(classify_boundary_point(&PhaseVector::zeros(2), &f, 1e-9).is_err());
    }

    #[test]
    fn glide_actions() {
        assert_eq!(glide_action(0.3, GlideBranch::Plus).unwrap(), 0.3);
        assert!((glide_action(0.3, GlideBranch::Minus).unwrap() - 0.792).abs() < 1e-15);
        assert!(glide_orbit(0.6, GlideBranch::Minus).is_err());
        for t in [0.2, 0.3, 0.45] {
            for b in [GlideBranch::Plus, GlideBranch::Minus] {
                let o = glide_orbit(t, b).unwrap();
                assert!((o.line_action - o.action).abs() < 1e-12, "{t} {b:?} {} {}", o.line_action, o.action);
            }
        }
        let o = glide_orbit(0.8, GlideBranch::Plus).unwrap();
        assert!((o.line_action - 0.8).abs() < 1e-12);
    }

    #[test]
    fn minus_cone_ratio() {
        let t = 0.3;
        let c = glide_check(t, GlideBranch::Minus, 1e-3).unwrap();
        assert!((c.beta / c.alpha - (1.0 / (2.0 * t * t) - 2.0)).abs() < 1e-9);
        assert!(c.alpha > 0.0 && c.beta > 0.0);
        assert!(c.max_corner_drift < 1e-9, "{}", c.max_corner_drift);
        let c = glide_check(t, GlideBranch::Plus, 1e-3).unwrap();
        assert!(c.alpha.abs() < 1e-12 && c.beta > 0.0);
    }

    #[test]
    fn transit_norms() {
        let (a, b) = s2_transit_norms(0.0, 0.0, 0.5).unwrap();
        assert!((a - 0.238_732_414_637_843).abs() < 1e-12);
        assert!((b - 0.079_577_471_545_947_67).abs() < 1e-12);
        assert!((a + b - 1.0 / PI).abs() < 1e-15);
        assert!(s2_transit_norms(2.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn hopf_area_closed_form_and_samples() {
        let f = OrbitFrame::new(0.3).unwrap();
        let o = glide_orbit(0.3, GlideBranch::Plus).unwrap();
        let p = &o.arcs[0].start;
        assert!((hopf_projection_area(p, &f).unwrap() - 0.3).abs() < 1e-12);
        let o = glide_orbit(0.3, GlideBranch::Minus).unwrap();
        let p = &o.arcs[0].start;
        assert!((hopf_projection_area(p, &f).unwrap() - 0.246).abs() < 1e-12);
        let q = PhaseVector::new(vec![0.2, -0.4, 0.1, 0.7]).unwrap();
        let a = hopf_projection_area(&q, &f).unwrap();
        let b = hopf_projection_area_sampled(&q, &f, 720).unwrap();
        assert!((a - b).abs() < 1e-10 * (1.0 + a), "{a} {b}");
    }

    #[test]
    fn pure_strata_orbits() {
        let t = 0.4;
        let f = OrbitFrame::new(t).unwrap();
        let o = glide_orbit(t, GlideBranch::Plus).unwrap();
        let orbit = integrate_orbit(&o.arcs[0].start, &f, 4, 1e-3).unwrap();
        assert!(orbit.closed);
        assert!((orbit.action - t).abs() < 1e-6);
        // Whole Hopf circles fit inside the cylinder only for t > 1/2.
        let f = OrbitFrame::new(0.8).unwrap();
        let mut found = false;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let g = V4::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let p = g / (g.norm() * PI.sqrt());
            let m = (0..64)
                .map(|k| {
                    let s = TAU * k as f64 / 64.0;
                    f.cyl_residual(&(p * s.cos() + jv(&p) * s.sin()))
                })
                .fold(f64::MIN, f64::max);
            if m < -0.02 {
                let orbit = integrate_orbit(&to_pv(&p), &f, 4, 1e-3).unwrap();
                assert!(orbit.closed && (orbit.action - 1.0).abs() < 1e-6);
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn alternating_cycle_is_a_rotation() {
        let t = 0.3;
        let f = OrbitFrame::new(t).unwrap();
        let rho = 0.3;
        let p = corner_start(&f, rho, 0.0, Entry::S2).unwrap();
        let o = integrate_orbit(&p, &f, 2, 1e-3).unwrap();
        assert_eq!(o.arcs[0].kind, ArcKind::S2);
        assert_eq!(o.arcs[1].kind, ArcKind::S1);
        let (d, _) = cycle_rotation(&f, rho, 1e-3).unwrap();
        let a = p.as_slice();
        let b = o.arcs[1].end.as_slice();
        let (c, s) = (d.cos(), d.sin());
        let rotated = [a[0] * c - a[1] * s, a[0] * s + a[1] * c, a[2] * c + a[3] * s, -a[2] * s + a[3] * c];
        for k in 0..4 {
            assert!((rotated[k] - b[k]).abs() < 1e-9);
        }
        assert!(o.continuity_gap() < 1e-8);
        assert!((o.action - o.line_action).abs() < 1e-8);
    }
}
