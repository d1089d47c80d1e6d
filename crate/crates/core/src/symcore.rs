//! Linear symplectic algebra on `R^{2n}` with interleaved coordinates
//! `(x_1, y_1, ..., x_n, y_n)` and the form `ω = Σ dx_i ∧ dy_i`.
//!
//! Every explicit matrix used by the experiments lives here. Printed 4×4
//! blocks act on the last complex coordinate pair `(x_{n-1}, y_{n-1}, x_n, y_n)`
//! and the identity acts on everything before.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Tolerance used when a constructor validates symplecticity.
pub const SYMPLECTIC_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymplecticError {
    #[error("complex dimension must be at least {min}, got {got}")]
    Dimension { min: usize, got: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected a square matrix of even size, got {rows}x{cols}")]
    NotEvenSquare { rows: usize, cols: usize },
    #[error("parameter {name} = {value} must lie in {range}")]
    Parameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("normals must be unit and orthogonal (|n1|={norm1}, |n2|={norm2}, <n1,n2>={dot})")]
    NotOrthonormal { norm1: f64, norm2: f64, dot: f64 },
    #[error("matrix is not symplectic: max |MᵀJM - J| = {defect:e}")]
    NotSymplectic { defect: f64 },
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

pub type Result<T> = std::result::Result<T, SymplecticError>;

fn check_open_unit(name: &'static str, t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(SymplecticError::Parameter {
            name,
            value: t,
            range: "(0, 1)",
        })
    }
}

fn check_complex_dim(n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(SymplecticError::Dimension { min, got: n })
    }
}

/// A point (or tangent vector) of `R^{2n}`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PhaseVector {
    coords: DVector<f64>,
}

impl PhaseVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(SymplecticError::NotEvenSquare {
                rows: coords.len(),
                cols: 1,
            });
        }
        Ok(Self {
            coords: DVector::from_vec(coords),
        })
    }

    pub fn from_dvector(coords: DVector<f64>) -> Result<Self> {
        Self::new(coords.data.into())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            coords: DVector::zeros(2 * n),
        }
    }

    /// Unit vector along `x_{k+1}` (zero-based pair index `k`).
    pub fn e_x(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.coords[2 * k] = 1.0;
        v
    }

    /// Unit vector along `y_{k+1}`.
    pub fn e_y(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.coords[2 * k + 1] = 1.0;
        v
    }

    /// Complex dimension `n`.
    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn dot(&self, other: &PhaseVector) -> f64 {
        self.coords.dot(&other.coords)
    }

    /// `|z_{k+1}|²`.
    pub fn z_norm_sq(&self, k: usize) -> f64 {
        self.coords[2 * k].powi(2) + self.coords[2 * k + 1].powi(2)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coords: &self.coords * s,
        }
    }

    /// `J v`.
    pub fn j(&self) -> Self {
        let mut out = self.coords.clone();
        apply_j(self.coords.as_slice(), out.as_mut_slice());
        Self { coords: out }
    }
}

impl TryFrom<Vec<f64>> for PhaseVector {
    type Error = SymplecticError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PhaseVector> for Vec<f64> {
    fn from(v: PhaseVector) -> Self {
        v.coords.data.into()
    }
}

impl fmt::Debug for PhaseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coords.iter()).finish()
    }
}

impl std::ops::Index<usize> for PhaseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

impl std::ops::Add for &PhaseVector {
    type Output = PhaseVector;
    fn add(self, rhs: &PhaseVector) -> PhaseVector {
        PhaseVector {
            coords: &self.coords + &rhs.coords,
        }
    }
}

impl std::ops::Sub for &PhaseVector {
    type Output = PhaseVector;
    fn sub(self, rhs: &PhaseVector) -> PhaseVector {
        PhaseVector {
            coords: &self.coords - &rhs.coords,
        }
    }
}

/// Writes `J u` into `out` without allocating. Both slices have length `2n`.
#[inline]
pub fn apply_j(u: &[f64], out: &mut [f64]) {
    for k in 0..u.len() / 2 {
        let (x, y) = (u[2 * k], u[2 * k + 1]);
        out[2 * k] = -y;
        out[2 * k + 1] = x;
    }
}

/// `ω(u, v) = <J u, v>` on raw slices.
#[inline]
pub fn omega_slices(u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..u.len() / 2 {
        s += u[2 * k] * v[2 * k + 1] - u[2 * k + 1] * v[2 * k];
    }
    s
}

/// The matrix of the standard complex structure: `e_x ↦ e_y`, `e_y ↦ -e_x`
/// on every coordinate pair.
pub fn standard_j(n: usize) -> Result<DMatrix<f64>> {
    check_complex_dim(n, 1)?;
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(2 * k + 1, 2 * k)] = 1.0;
        j[(2 * k, 2 * k + 1)] = -1.0;
    }
    Ok(j)
}

pub fn symplectic_form(u: &PhaseVector, v: &PhaseVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(SymplecticError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(omega_slices(u.as_slice(), v.as_slice()))
}

/// `max |MᵀJM - J|`.
pub fn symplectic_defect(m: &DMatrix<f64>) -> Result<f64> {
    let (rows, cols) = m.shape();
    if rows != cols || rows == 0 || rows % 2 != 0 {
        return Err(SymplecticError::NotEvenSquare { rows, cols });
    }
    let j = standard_j(rows / 2)?;
    Ok((m.transpose() * &j * m - j).amax())
}

pub fn is_symplectic(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(symplectic_defect(m)? <= tol)
}

/// `|ω(n1, n2)|` for a unit orthogonal pair of normals, clamped to `[0, 1]`.
pub fn kahler_angle(n1: &PhaseVector, n2: &PhaseVector) -> Result<f64> {
    let w = symplectic_form(n1, n2)?;
    let (norm1, norm2, dot) = (n1.norm(), n2.norm(), n1.dot(n2));
    if (norm1 - 1.0).abs() > 1e-8 || (norm2 - 1.0).abs() > 1e-8 || dot.abs() > 1e-8 {
        return Err(SymplecticError::NotOrthonormal { norm1, norm2, dot });
    }
    Ok(w.abs().clamp(0.0, 1.0))
}

/// Unit normals of a codimension-two subspace together with its Kähler angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahlerAngleDatum {
    pub n1: PhaseVector,
    pub n2: PhaseVector,
    pub t: f64,
}

impl KahlerAngleDatum {
    pub fn new(n1: PhaseVector, n2: PhaseVector) -> Result<Self> {
        let (norm1, norm2, dot) = (n1.norm(), n2.norm(), n1.dot(&n2));
        if (norm1 - 1.0).abs() > 1e-10 || (norm2 - 1.0).abs() > 1e-10 || dot.abs() > 1e-10 {
            return Err(SymplecticError::NotOrthonormal { norm1, norm2, dot });
        }
        let t = kahler_angle(&n1, &n2)?;
        Ok(Self { n1, n2, t })
    }
}

/// A `2n×2n` matrix known to preserve `ω`.
#[derive(Clone, PartialEq)]
pub struct SymplecticMatrix {
    m: DMatrix<f64>,
}

impl SymplecticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(m, SYMPLECTIC_TOL)
    }

    pub fn with_tolerance(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        let defect = symplectic_defect(&m)?;
        if defect > tol {
            return Err(SymplecticError::NotSymplectic { defect });
        }
        Ok(Self { m })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(2 * n, 2 * n),
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// `M⁻¹ = -J Mᵀ J`, exact for symplectic `M`.
    pub fn inverse(&self) -> Self {
        let j = standard_j(self.n()).expect("n >= 1");
        Self {
            m: -(&j * self.m.transpose() * &j),
        }
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> Self {
        Self {
            m: &self.m * &other.m,
        }
    }

    pub fn apply(&self, v: &PhaseVector) -> PhaseVector {
        PhaseVector {
            coords: &self.m * v.coords(),
        }
    }
}

impl fmt::Debug for SymplecticMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymplecticMatrix{}", self.m)
    }
}

/// Identity on the first `2n-4` coordinates, `block` on the last four.
fn embed_last_block(n: usize, block: [[f64; 4]; 4]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(2 * n, 2 * n);
    let o = 2 * n - 4;
    for (i, row) in block.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(o + i, o + j)] = *v;
        }
    }
    m
}

/// The shear-and-squeeze matrix that turns the complex family `z_n ∈ εZ²`
/// into planes of Kähler angle `t`.
pub fn matrix_mt(t: f64, n: usize) -> Result<SymplecticMatrix> {
    check_open_unit("t", t)?;
    check_complex_dim(n, 2)?;
    let s = (1.0 - t * t).sqrt();
    let a = t / s;
    let b = s / t;
    SymplecticMatrix::new(embed_last_block(
        n,
        [
            [a, 0.0, 0.0, -1.0],
            [0.0, b, 0.0, 0.0],
            [0.0, -1.0, a, 0.0],
            [0.0, 0.0, 0.0, b],
        ],
    ))
}

/// The normalizing map used for the closed-characteristic census, stored
/// together with its inverse (the inverse is the matrix with the closed-form
/// entries).
#[derive(Debug, Clone)]
pub struct OrbitNormalization {
    pub t: f64,
    pub a: SymplecticMatrix,
    pub a_inv: SymplecticMatrix,
}

pub fn matrix_a_orbit(t: f64) -> Result<OrbitNormalization> {
    check_open_unit("t", t)?;
    let p = (1.0 + t).sqrt() / t.sqrt() / 2f64.sqrt();
    let m = (1.0 - t).sqrt() / t.sqrt() / 2f64.sqrt();
    let a_inv = SymplecticMatrix::new(DMatrix::from_row_slice(
        4,
        4,
        &[
            p, 0.0, m, 0.0, //
            0.0, p, 0.0, -m, //
            m, 0.0, p, 0.0, //
            0.0, -m, 0.0, p,
        ],
    ))?;
    let a = a_inv.inverse();
    Ok(OrbitNormalization { t, a, a_inv })
}

/// Same as [`matrix_a_orbit`] padded by the identity on `C^{n-2}`.
pub fn matrix_a_orbit_2n(t: f64, n: usize) -> Result<OrbitNormalization> {
    check_complex_dim(n, 2)?;
    let small = matrix_a_orbit(t)?;
    let pad = |m: &SymplecticMatrix| {
        let b = m.matrix();
        let mut block = [[0.0; 4]; 4];
        for (i, row) in block.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = b[(i, j)];
            }
        }
        SymplecticMatrix::new(embed_last_block(n, block))
    };
    Ok(OrbitNormalization {
        t,
        a: pad(&small.a)?,
        a_inv: pad(&small.a_inv)?,
    })
}

/// The normalizing map used in the ball-packing argument: it sends the
/// normals `(√(1-t²), 0, -t, 0)` and `(0, 0, 0, 1)` to a complex pair.
pub fn matrix_a_gw(t: f64, n: usize) -> Result<SymplecticMatrix> {
    check_open_unit("t", t)?;
    check_complex_dim(n, 2)?;
    let r = t.sqrt();
    let q = ((1.0 - t * t) / t).sqrt();
    SymplecticMatrix::new(embed_last_block(
        n,
        [
            [1.0 / r, 0.0, 0.0, 0.0],
            [0.0, r, 0.0, q],
            [-q, 0.0, r, 0.0],
            [0.0, 0.0, 0.0, 1.0 / r],
        ],
    ))
}

/// Two-parameter family of symplectic stretches; the identity at `d1 = d2 = 1`.
pub fn matrix_s(d1: f64, d2: f64, n: usize) -> Result<SymplecticMatrix> {
    check_complex_dim(n, 2)?;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(SymplecticError::Parameter {
            name: "d1, d2",
            value: d1.min(d2),
            range: "(0, inf)",
        });
    }
    let prod = d1 * d2;
    if prod < 1.0 - 1e-12 {
        return Err(SymplecticError::Parameter {
            name: "d1*d2",
            value: prod,
            range: "[1, inf)",
        });
    }
    let r = (prod - 1.0).max(0.0).sqrt();
    SymplecticMatrix::new(embed_last_block(
        n,
        [
            [d1, 0.0, r, 0.0],
            [0.0, d2, 0.0, -r],
            [r, 0.0, d2, 0.0],
            [0.0, -r, 0.0, d1],
        ],
    ))
}

/// `z_n ↦ L z_n`. Not symplectic unless `L = 1`, so it is a plain matrix.
pub fn matrix_al(l: f64, n: usize) -> Result<DMatrix<f64>> {
    check_complex_dim(n, 1)?;
    if !(l > 0.0) {
        return Err(SymplecticError::Parameter {
            name: "L",
            value: l,
            range: "(0, inf)",
        });
    }
    let mut m = DMatrix::identity(2 * n, 2 * n);
    m[(2 * n - 2, 2 * n - 2)] = l;
    m[(2 * n - 1, 2 * n - 1)] = l;
    Ok(m)
}

/// Symplectic eigenvalues `d_1 <= ... <= d_n` of a positive definite `P`
/// (Williamson normal form `P = Sᵀ diag(d, d) S`).
///
/// Computed as the singular values of the antisymmetric `P^{1/2} J P^{1/2}`,
/// which come in equal pairs.
pub fn symplectic_spectrum(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (rows, cols) = p.shape();
    if rows != cols || rows == 0 || rows % 2 != 0 {
        return Err(SymplecticError::NotEvenSquare { rows, cols });
    }
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(SymplecticError::NotPositiveDefinite);
    }
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let j = standard_j(rows / 2)?;
    let k = &root * j * &root;
    let mut sv: Vec<f64> = k.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| a.total_cmp(b));
    Ok(sv.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect())
}

/// EHZ capacity of the ellipsoid `{x : xᵀ P x <= 1}`, which is `π / d_max`.
pub fn ellipsoid_capacity_from_form(p: &DMatrix<f64>) -> Result<f64> {
    let spec = symplectic_spectrum(p)?;
    Ok(PI / spec[spec.len() - 1])
}

/// A random matrix in `U(n) = O(2n) ∩ Sp(2n)`, built from phase rotations
/// of single coordinates and real Givens rotations between coordinate pairs.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SymplecticMatrix {
    let mut m = DMatrix::<f64>::identity(2 * n, 2 * n);
    for _ in 0..(3 * n) {
        for k in 0..n {
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let mut r = DMatrix::identity(2 * n, 2 * n);
            let (c, s) = (phi.cos(), phi.sin());
            r[(2 * k, 2 * k)] = c;
            r[(2 * k, 2 * k + 1)] = -s;
            r[(2 * k + 1, 2 * k)] = s;
            r[(2 * k + 1, 2 * k + 1)] = c;
            m = r * m;
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let (c, s) = (phi.cos(), phi.sin());
                let mut r = DMatrix::identity(2 * n, 2 * n);
                for off in 0..2 {
                    let (i, j) = (2 * a + off, 2 * b + off);
                    r[(i, i)] = c;
                    r[(i, j)] = -s;
                    r[(j, i)] = s;
                    r[(j, j)] = c;
                }
                m = r * m;
            }
        }
    }
    SymplecticMatrix { m }
}

/// Symplectic transvection `x ↦ x + c ω(v, x) v`.
pub fn transvection(v: &PhaseVector, c: f64) -> SymplecticMatrix {
    let jv = v.j();
    let m = DMatrix::identity(v.dim(), v.dim()) + v.coords() * jv.coords().transpose() * c;
    SymplecticMatrix { m }
}

/// Cayley transform `(I - X/2)⁻¹ (I + X/2)` of the Hamiltonian matrix
/// `X = J H` for symmetric `H`; always symplectic.
pub fn cayley_symplectic(h: &DMatrix<f64>) -> Result<SymplecticMatrix> {
    let dim = h.nrows();
    let j = standard_j(dim / 2)?;
    let x = j * (h + h.transpose()) * 0.5;
    let id = DMatrix::<f64>::identity(dim, dim);
    let lhs = &id - &x * 0.5;
    let inv = lhs.try_inverse().ok_or(SymplecticError::Singular)?;
    Ok(SymplecticMatrix {
        m: inv * (&id + &x * 0.5),
    })
}

/// A random symplectic matrix: a unitary sandwich around a product of
/// `factors` random transvections with coefficients of size `scale`.
pub fn random_symplectic<R: Rng + ?Sized>(
    n: usize,
    factors: usize,
    scale: f64,
    rng: &mut R,
) -> SymplecticMatrix {
    let mut m = random_unitary(n, rng);
    for _ in 0..factors {
        let v: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(rng)).collect();
        let v = PhaseVector::new(v).expect("even length");
        let v = v.scaled(1.0 / v.norm().max(1e-12));
        let g: f64 = StandardNormal.sample(rng);
        let c = scale * g;
        m = transvection(&v, c).compose(&m);
    }
    random_unitary(n, rng).compose(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn j_in_one_dimension() {
        let j = standard_j(1).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        assert!(standard_j(0).is_err());
    }

    #[test]
    fn j_squares_to_minus_identity() {
        let j = standard_j(2).unwrap();
        assert_eq!(&j * &j, -DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn form_pairs_matching_indices_only() {
        assert_eq!(
            symplectic_form(&PhaseVector::e_x(2, 0), &PhaseVector::e_y(2, 0)).unwrap(),
            1.0
        );
        assert_eq!(
            symplectic_form(&PhaseVector::e_x(2, 1), &PhaseVector::e_y(2, 0)).unwrap(),
            0.0
        );
        let u = PhaseVector::new(vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        assert_eq!(symplectic_form(&u, &u).unwrap(), 0.0);
        assert!(symplectic_form(&u, &PhaseVector::zeros(1)).is_err());
    }

    #[test]
    fn tilted_normals_have_angle_t() {
        let t: f64 = 0.6;
        let n1 = PhaseVector::new(vec![0.0, -(1.0 - t * t).sqrt(), t, 0.0]).unwrap();
        let n2 = PhaseVector::e_y(2, 1);
        assert!((symplectic_form(&n1, &n2).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn symplecticity_checks() {
        assert!(is_symplectic(&DMatrix::identity(4, 4), 1e-12).unwrap());
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 1.0, 1.0]));
        assert!(!is_symplectic(&d, 1e-9).unwrap());
        assert!(is_symplectic(&DMatrix::identity(3, 3), 1e-9).is_err());
        let a = matrix_a_orbit(0.5).unwrap();
        assert!(is_symplectic(a.a_inv.matrix(), 1e-9).unwrap());
    }

    #[test]
    fn kahler_angles() {
        let n = 3;
        assert_eq!(
            kahler_angle(&PhaseVector::e_x(n, 2), &PhaseVector::e_y(n, 2)).unwrap(),
            1.0
        );
        assert_eq!(
            kahler_angle(&PhaseVector::e_x(n, 1), &PhaseVector::e_x(n, 2)).unwrap(),
            0.0
        );
        let bad = PhaseVector::new(vec![2.0, 0.0]).unwrap();
        assert!(kahler_angle(&bad, &PhaseVector::e_y(1, 0)).is_err());
    }

    #[test]
    fn normals_of_the_tilted_plane() {
        // The plane spanned by (s, 0, t, 0) and (0, 0, 0, 1); its normals are
        // the kernel of the projector onto the span.
        let t: f64 = 0.8;
        let s = (1.0 - t * t).sqrt();
        let span = DMatrix::from_column_slice(4, 2, &[s, 0.0, t, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let eig = nalgebra::SymmetricEigen::new(&span * span.transpose());
        let mut null = Vec::new();
        for (k, ev) in eig.eigenvalues.iter().enumerate() {
            if ev.abs() < 1e-12 {
                null.push(PhaseVector::new(eig.eigenvectors.column(k).iter().copied().collect()).unwrap());
            }
        }
        assert_eq!(null.len(), 2);
        let angle = kahler_angle(&null[0], &null[1]).unwrap();
        assert!((angle - 0.8).abs() < 1e-12, "{angle}");
    }

    #[test]
    fn printed_matrix_entries() {
        let m = matrix_mt(0.5, 2).unwrap();
        assert!((m.matrix()[(0, 0)] - 0.577_350_269_189_625_8).abs() < 1e-15);
        assert!((m.matrix()[(1, 1)] - 1.732_050_807_568_877_2).abs() < 1e-15);
        assert!(matrix_mt(1.0, 2).is_err());
        assert!(matrix_mt(0.0, 2).is_err());
        assert!(is_symplectic(matrix_mt(0.3, 3).unwrap().matrix(), 1e-9).unwrap());

        let a = matrix_a_orbit(0.5).unwrap();
        assert!((a.a_inv.matrix()[(0, 0)] - 1.224_744_871_391_589).abs() < 1e-14);
        let prod = a.a.matrix() * a.a_inv.matrix();
        assert!((prod - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);

        assert!((matrix_a_gw(0.64, 2).unwrap().matrix()[(0, 0)] - 1.25).abs() < 1e-15);
        assert!(is_symplectic(matrix_a_gw(0.2, 2).unwrap().matrix(), 1e-9).unwrap());

        assert_eq!(
            matrix_s(1.0, 1.0, 2).unwrap().matrix(),
            &DMatrix::<f64>::identity(4, 4)
        );
        assert_eq!(matrix_s(2.0, 1.0, 2).unwrap().matrix()[(0, 2)], 1.0);
        assert!(matrix_s(0.5, 1.0, 2).is_err());
        assert!(is_symplectic(matrix_s(1.7, 0.9, 2).unwrap().matrix(), 1e-9).unwrap());

        assert_eq!(matrix_al(1.0, 2).unwrap(), DMatrix::<f64>::identity(4, 4));
        let al = matrix_al(3.0, 2).unwrap();
        assert_eq!(
            al,
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 3.0, 3.0]))
        );
        assert!(!is_symplectic(&matrix_al(2.0, 2).unwrap(), 1e-9).unwrap());
        assert!(matrix_al(0.0, 2).is_err());
    }

    #[test]
    fn gw_normals_and_their_image() {
        let t: f64 = 0.5;
        let n1 = PhaseVector::new(vec![(1.0 - t * t).sqrt(), 0.0, -t, 0.0]).unwrap();
        let n2 = PhaseVector::e_y(2, 1);
        assert!((kahler_angle(&n1, &n2).unwrap() - t).abs() < 1e-15);
        // Normals transform by A^{-T}; the images span a complex line.
        let a = matrix_a_gw(t, 2).unwrap();
        let inv_t = a.inverse().matrix().transpose();
        let m1 = PhaseVector::from_dvector(&inv_t * n1.coords()).unwrap();
        let m2 = PhaseVector::from_dvector(&inv_t * n2.coords()).unwrap();
        let (m1, m2) = (m1.scaled(1.0 / m1.norm()), m2.scaled(1.0 / m2.norm()));
        assert!((kahler_angle(&m1, &m2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn williamson_spectrum_of_normal_form() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0, 4.0])) * PI;
        let spec = symplectic_spectrum(&p).unwrap();
        assert!((spec[0] - PI).abs() < 1e-12 && (spec[1] - 4.0 * PI).abs() < 1e-12);
        assert!((ellipsoid_capacity_from_form(&p).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn random_generators_are_symplectic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..4 {
            let u = random_unitary(n, &mut rng);
            assert!(symplectic_defect(u.matrix()).unwrap() < 1e-12);
            let o = u.matrix().transpose() * u.matrix();
            assert!((o - DMatrix::<f64>::identity(2 * n, 2 * n)).amax() < 1e-12);
            let s = random_symplectic(n, 4, 0.5, &mut rng);
            assert!(symplectic_defect(s.matrix()).unwrap() < 1e-9);
            let inv = s.inverse();
            let id = s.matrix() * inv.matrix();
            assert!((id - DMatrix::<f64>::identity(2 * n, 2 * n)).amax() < 1e-9);
        }
    }
}
