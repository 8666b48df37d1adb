//! The stationary CCH and HCCH problems as autonomous first-order systems.
//!
//! Both equations are written for the scaled profile `c(x)` whose far-field
//! states are `±1`. A phase vector holds `c` and its derivatives,
//! `U = (c, c', c'', ...)`, so the first `dim - 1` components of the vector
//! field are plain shifts and only the last one carries the physics:
//!
//! ```text
//! CCH  (dim 3):  U3' = (3A U1^2 - 1) U2 + (delta sqrt(A) / 2) (U1^2 - 1)
//! HCCH (dim 5):  U5' = 6A U2^3 + 18A U1 U2 U3 + (3A U1^2 - 1) U4
//!                      + delta sqrt(A) (1 - U1^2) / 2
//! ```
//!
//! The characteristic polynomials at `U± = ±(1, 0, ..., 0)` are
//! `λ³ + (1 - 3A) λ ∓ δ√A` for CCH and `λ⁵ + (1 - 3A) λ³ ± δ√A` for HCCH
//! (upper sign at `U⁺`). The opposite orientation of the constant term is not
//! a typo: the sixth-order equation carries the driving term with the
//! opposite sign, and both polynomials are exactly the characteristic
//! polynomials of the Jacobians computed here.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Real parts with magnitude below this are treated as center directions.
pub const CENTER_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("profile supplies {got} derivative orders, {needed} required")]
    InsufficientDerivatives { needed: usize, got: usize },
    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),
    #[error("no unstable direction at U+ for these parameters")]
    NoUnstableDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cch,
    Hcch,
}

impl ModelKind {
    pub const fn dim(self) -> usize {
        match self {
            ModelKind::Cch => 3,
            ModelKind::Hcch => 5,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            ModelKind::Cch => "cch",
            ModelKind::Hcch => "hcch",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = SystemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cch" => Ok(ModelKind::Cch),
            "hcch" => Ok(ModelKind::Hcch),
            other => Err(SystemError::InvalidParams(format!("unknown model kind `{other}`"))),
        }
    }
}

/// `A` (far-field value squared) and the driving strength `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub delta: f64,
}

impl ModelParams {
    pub fn new(a: f64, delta: f64) -> Result<Self, SystemError> {
        let p = ModelParams { a, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(SystemError::InvalidParams(format!("A must be positive, got {}", self.a)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(SystemError::InvalidParams(format!(
                "delta must be non-negative, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// A point of the phase space; component `i` (0-based) is the `i`-th
/// derivative of the scaled profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector(pub Vec<f64>);

impl PhaseVector {
    pub fn zeros(dim: usize) -> Self {
        PhaseVector(vec![0.0; dim])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Deref for PhaseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for PhaseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for PhaseVector {
    fn from(v: Vec<f64>) -> Self {
        PhaseVector(v)
    }
}

/// A model kind bound to concrete parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub params: ModelParams,
    sqrt_a: f64,
}

impl Model {
    pub fn new(kind: ModelKind, params: ModelParams) -> Result<Self, SystemError> {
        params.validate()?;
        Ok(Self::new_unchecked(kind, params))
    }

    /// Skips validation; used in inner loops where `A` is a Newton unknown
    /// that may transiently leave the admissible range.
    pub fn new_unchecked(kind: ModelKind, params: ModelParams) -> Self {
        Model { kind, params, sqrt_a: params.a.abs().sqrt() }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn a(&self) -> f64 {
        self.params.a
    }

    pub fn delta(&self) -> f64 {
        self.params.delta
    }

    /// The last component of the vector field.
    #[inline]
    pub fn forcing(&self, u: &[f64]) -> f64 {
        let a = self.params.a;
        let drive = 0.5 * self.params.delta * self.sqrt_a;
        match self.kind {
            ModelKind::Cch => (3.0 * a * u[0] * u[0] - 1.0) * u[1] + drive * (u[0] * u[0] - 1.0),
            ModelKind::Hcch => {
                6.0 * a * u[1] * u[1] * u[1]
                    + 18.0 * a * u[0] * u[1] * u[2]
                    + (3.0 * a * u[0] * u[0] - 1.0) * u[3]
                    + drive * (1.0 - u[0] * u[0])
            }
        }
    }

    #[inline]
    pub fn rhs_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        out[..n - 1].copy_from_slice(&u[1..n]);
        out[n - 1] = self.forcing(u);
    }

    /// Gradient of the last component with respect to `U`.
    #[inline]
    pub fn forcing_gradient(&self, u: &[f64], grad: &mut [f64]) {
        let a = self.params.a;
        let ds = self.params.delta * self.sqrt_a;
        match self.kind {
            ModelKind::Cch => {
                grad[0] = 6.0 * a * u[0] * u[1] + ds * u[0];
                grad[1] = 3.0 * a * u[0] * u[0] - 1.0;
                grad[2] = 0.0;
            }
            ModelKind::Hcch => {
                grad[0] = 18.0 * a * u[1] * u[2] + 6.0 * a * u[0] * u[3] - ds * u[0];
                grad[1] = 18.0 * a * u[1] * u[1] + 18.0 * a * u[0] * u[2];
                grad[2] = 18.0 * a * u[0] * u[1];
                grad[3] = 3.0 * a * u[0] * u[0] - 1.0;
                grad[4] = 0.0;
            }
        }
    }

    /// Partial derivative of the last component with respect to `A`.
    pub fn forcing_d_a(&self, u: &[f64]) -> f64 {
        let d_drive = if self.sqrt_a > 0.0 { 0.25 * self.params.delta / self.sqrt_a } else { 0.0 };
        match self.kind {
            ModelKind::Cch => 3.0 * u[0] * u[0] * u[1] + d_drive * (u[0] * u[0] - 1.0),
            ModelKind::Hcch => {
                6.0 * u[1].powi(3) + 18.0 * u[0] * u[1] * u[2] + 3.0 * u[0] * u[0] * u[3]
                    + d_drive * (1.0 - u[0] * u[0])
            }
        }
    }

    pub fn rhs(&self, u: &[f64]) -> Result<PhaseVector, SystemError> {
        self.check_dim(u.len())?;
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(u, &mut out);
        Ok(PhaseVector(out))
    }

    pub fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        self.check_dim(u.len())?;
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            j[(i, i + 1)] = 1.0;
        }
        let mut grad = vec![0.0; n];
        self.forcing_gradient(u, &mut grad);
        for (c, g) in grad.into_iter().enumerate() {
            j[(n - 1, c)] = g;
        }
        Ok(j)
    }

    fn check_dim(&self, got: usize) -> Result<(), SystemError> {
        if got != self.dim() {
            return Err(SystemError::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }

    pub fn equilibrium(&self, sign: EquilibriumSign) -> PhaseVector {
        let mut p = PhaseVector::zeros(self.dim());
        p[0] = sign.value();
        p
    }

    /// Monic characteristic polynomial at `U±`, highest degree first.
    pub fn char_poly(&self, sign: EquilibriumSign) -> Vec<f64> {
        let a = self.params.a;
        let ds = self.params.delta * self.sqrt_a;
        let s = sign.value();
        match self.kind {
            ModelKind::Cch => vec![1.0, 0.0, 1.0 - 3.0 * a, -s * ds],
            ModelKind::Hcch => vec![1.0, 0.0, 1.0 - 3.0 * a, 0.0, 0.0, s * ds],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumSign {
    Plus,
    Minus,
}

impl EquilibriumSign {
    pub fn value(self) -> f64 {
        match self {
            EquilibriumSign::Plus => 1.0,
            EquilibriumSign::Minus => -1.0,
        }
    }
}

pub fn rhs(kind: ModelKind, params: ModelParams, u: &[f64]) -> Result<PhaseVector, SystemError> {
    Model::new(kind, params)?.rhs(u)
}

pub fn jacobian(kind: ModelKind, params: ModelParams, u: &[f64]) -> Result<DMatrix<f64>, SystemError> {
    Model::new(kind, params)?.jacobian(u)
}

/// The reversibility operator: component `j` (1-based) is multiplied by `(-1)^j`.
pub fn reverse(u: &[f64]) -> PhaseVector {
    PhaseVector(
        u.iter()
            .enumerate()
            .map(|(i, &v)| if i % 2 == 0 { -v } else { v })
            .collect(),
    )
}

/// Euclidean norm of the odd-indexed (1-based) components, i.e. the distance
/// to the symmetric section.
pub fn odd_norm(u: &[f64]) -> f64 {
    u.iter().step_by(2).map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Unstable,
    Stable,
    Center,
}

pub fn classify(lambda: Complex64) -> Stability {
    if lambda.re > CENTER_TOL {
        Stability::Unstable
    } else if lambda.re < -CENTER_TOL {
        Stability::Stable
    } else {
        Stability::Center
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumInfo {
    pub kind: ModelKind,
    pub params: ModelParams,
    pub sign: EquilibriumSign,
    pub point: PhaseVector,
    /// Monic, highest degree first.
    pub char_poly: Vec<f64>,
    /// Sorted by descending real part, then descending imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Unit right eigenvectors, first nonzero component positive-real.
    pub eigenvectors: Vec<Vec<Complex64>>,
    /// Unit eigenvectors of the transposed Jacobian for the same eigenvalues.
    pub adjoint_eigenvectors: Vec<Vec<Complex64>>,
    pub n_unstable: usize,
    pub n_stable: usize,
    pub n_center: usize,
    /// Largest distance between a polynomial root and the matching
    /// eigenvalue of the dense Jacobian.
    pub eig_crosscheck: f64,
    #[serde(skip)]
    pub jacobian: DMatrix<f64>,
}

impl EquilibriumInfo {
    /// Real orthonormal basis (as columns) of the invariant subspace of the
    /// selected eigenvalues. Complex pairs contribute their real and
    /// imaginary parts.
    pub fn subspace(&self, which: Stability, adjoint: bool) -> DMatrix<f64> {
        let vecs = if adjoint { &self.adjoint_eigenvectors } else { &self.eigenvectors };
        let n = self.point.len();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for (lam, v) in self.eigenvalues.iter().zip(vecs) {
            if classify(*lam) != which {
                continue;
            }
            if lam.im.abs() <= 1e-12 * (1.0 + lam.re.abs()) {
                cols.push(DVector::from_iterator(n, v.iter().map(|z| z.re)));
            } else if lam.im > 0.0 {
                cols.push(DVector::from_iterator(n, v.iter().map(|z| z.re)));
                cols.push(DVector::from_iterator(n, v.iter().map(|z| z.im)));
            }
        }
        orthonormalize(cols, n)
    }

    pub fn residual_of_eigenpair(&self, idx: usize) -> f64 {
        let jc = self.jacobian.map(|v| Complex64::new(v, 0.0));
        let v = DVector::from_vec(self.eigenvectors[idx].clone());
        let r = &jc * &v - v.map(|z| z * self.eigenvalues[idx]);
        r.norm() / v.norm()
    }
}

fn orthonormalize(cols: Vec<DVector<f64>>, n: usize) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols.len());
    for mut c in cols {
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&c);
                c.axpy(-proj, b, 1.0);
            }
        }
        let nrm = c.norm();
        if nrm > 1e-14 {
            basis.push(c / nrm);
        }
    }
    let mut m = DMatrix::zeros(n, basis.len());
    for (j, b) in basis.iter().enumerate() {
        m.set_column(j, b);
    }
    m
}

pub fn equilibrium_analysis(
    kind: ModelKind,
    params: ModelParams,
    sign: EquilibriumSign,
) -> Result<EquilibriumInfo, SystemError> {
    let model = Model::new(kind, params)?;
    let point = model.equilibrium(sign);
    let jac = model.jacobian(&point)?;
    let char_poly = model.char_poly(sign);

    let mut eigenvalues = crate::poly::roots(&char_poly);
    sort_eigenvalues(&mut eigenvalues);

    let dense: Vec<Complex64> = jac.clone().complex_eigenvalues().iter().copied().collect();
    if dense.len() != eigenvalues.len() || dense.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SystemError::Eigen("dense eigen-solver returned invalid spectrum".into()));
    }
    let eig_crosscheck = match_spectra(&eigenvalues, &dense);
    // Clusters of multiple roots are only resolved to ~eps^(1/m) by the dense
    // solver; anything worse than that points at a real inconsistency.
    if eig_crosscheck > 1e-4 {
        return Err(SystemError::Eigen(format!(
            "polynomial roots and Jacobian spectrum disagree by {eig_crosscheck:e}"
        )));
    }

    let eigenvectors = eigenvalues.iter().map(|&l| null_vector(&jac, l)).collect::<Result<Vec<_>, _>>()?;
    let jt = jac.transpose();
    let adjoint_eigenvectors =
        eigenvalues.iter().map(|&l| null_vector(&jt, l)).collect::<Result<Vec<_>, _>>()?;

    let mut n_unstable = 0;
    let mut n_stable = 0;
    let mut n_center = 0;
    for &l in &eigenvalues {
        match classify(l) {
            Stability::Unstable => n_unstable += 1,
            Stability::Stable => n_stable += 1,
            Stability::Center => n_center += 1,
        }
    }

    Ok(EquilibriumInfo {
        kind,
        params,
        sign,
        point,
        char_poly,
        eigenvalues,
        eigenvectors,
        adjoint_eigenvectors,
        n_unstable,
        n_stable,
        n_center,
        eig_crosscheck,
        jacobian: jac,
    })
}

fn sort_eigenvalues(v: &mut [Complex64]) {
    v.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

/// Greedy nearest matching; returns the largest matched distance.
fn match_spectra(reference: &[Complex64], other: &[Complex64]) -> f64 {
    let mut used = vec![false; other.len()];
    let mut worst: f64 = 0.0;
    for r in reference {
        let (idx, dist) = other
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, z)| (i, (z - r).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("spectra have equal length");
        used[idx] = true;
        worst = worst.max(dist);
    }
    worst
}

/// Unit vector spanning (numerically) the kernel of `m - lambda I`.
fn null_vector(m: &DMatrix<f64>, lambda: Complex64) -> Result<Vec<Complex64>, SystemError> {
    let n = m.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let base = Complex64::new(m[(i, j)], 0.0);
        if i == j {
            base - lambda
        } else {
            base
        }
    });
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| SystemError::Eigen("SVD did not return V".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| SystemError::Eigen("empty matrix".into()))?;
    let mut v: Vec<Complex64> = v_t.row(imin).iter().map(|z| z.conj()).collect();
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let lead = v
        .iter()
        .copied()
        .find(|z| z.norm() > 1e-10 * nrm)
        .ok_or_else(|| SystemError::Eigen("zero eigenvector".into()))?;
    let phase = lead.conj() / lead.norm();
    for z in v.iter_mut() {
        *z = *z * phase / nrm;
    }
    // The leading component is real by construction; drop rounding residue.
    if let Some(z) = v.iter_mut().find(|z| z.norm() > 1e-10) {
        z.im = 0.0;
    }
    Ok(v)
}

/// Samples of a scalar profile and its derivatives: `values[i][j]` is the
/// `j`-th derivative at `x[i]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DerivativeSamples {
    pub x: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Max-norm residual of the stationary equation with `delta` multiplying the
/// algebraic side, so `delta = 0` is admissible:
///
/// ```text
/// CCH:   (delta sqrt(A) / 2)(1 - c^2) + (c'' + c - A c^3)'
/// HCCH: -(delta sqrt(A) / 2)(1 - c^2) + (c'' + c - A c^3)'''
/// ```
pub fn profile_residual(
    kind: ModelKind,
    params: ModelParams,
    profile: &DerivativeSamples,
) -> Result<f64, SystemError> {
    params.validate()?;
    let needed = kind.dim() + 1;
    let a = params.a;
    let drive = 0.5 * params.delta * a.sqrt();
    let mut worst: f64 = 0.0;
    for row in &profile.values {
        if row.len() < needed {
            return Err(SystemError::InsufficientDerivatives { needed, got: row.len() });
        }
        let (c, c1, c2, c3) = (row[0], row[1], row[2], row[3]);
        let r = match kind {
            ModelKind::Cch => drive * (1.0 - c * c) + c3 + c1 - 3.0 * a * c * c * c1,
            ModelKind::Hcch => {
                let c5 = row[5];
                let cube3 = 6.0 * c1 * c1 * c1 + 18.0 * c * c1 * c2 + 3.0 * c * c * c3;
                -drive * (1.0 - c * c) + c5 + c3 - a * cube3
            }
        };
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::SQRT_2;

    fn p(a: f64, d: f64) -> ModelParams {
        ModelParams::new(a, d).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let f = rhs(ModelKind::Cch, p(1.0, 0.0), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.0, vec![0.0; 3]);
        let f = rhs(ModelKind::Hcch, p(1.0, 0.0), &[-1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.0, vec![0.0; 5]);
        let f = rhs(ModelKind::Cch, p(1.0, 0.05), &[0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(f[2], -0.025, epsilon = 1e-16);
        assert_eq!(&f[..2], &[0.0, 0.0]);
    }

    #[test]
    fn rhs_rejects_wrong_dimension() {
        let err = rhs(ModelKind::Hcch, p(1.0, 0.0), &[1.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err, SystemError::DimensionMismatch { expected: 5, got: 3 });
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 0.1).is_err());
        assert!(ModelParams::new(-1.0, 0.1).is_err());
        assert!(ModelParams::new(1.0, -0.1).is_err());
        assert!(ModelParams::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let j = jacobian(ModelKind::Cch, p(1.0, 0.0), &[1.0, 0.0, 0.0]).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 0., 2., 0.]);
        assert_eq!(j, expected);

        let j = jacobian(ModelKind::Hcch, p(1.0, 0.0), &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let want = match (r, c) {
                    (4, 3) => 2.0,
                    _ if c == r + 1 => 1.0,
                    _ => 0.0,
                };
                assert_eq!(j[(r, c)], want, "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn equilibria_are_exact_zeros() {
        for kind in [ModelKind::Cch, ModelKind::Hcch] {
            for &(a, d) in &[(0.3, 0.0), (0.9, 0.05), (1.7, 3.0)] {
                let m = Model::new(kind, p(a, d)).unwrap();
                for s in [EquilibriumSign::Plus, EquilibriumSign::Minus] {
                    let f = m.rhs(&m.equilibrium(s)).unwrap();
                    assert!(f.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn reverse_examples() {
        assert_eq!(reverse(&[1.0, 2.0, 3.0]).0, vec![-1.0, 2.0, -3.0]);
        assert_eq!(reverse(&[1.0, 2.0, 3.0, 4.0, 5.0]).0, vec![-1.0, 2.0, -3.0, 4.0, -5.0]);
    }

    #[test]
    fn eig_cch_ch_limit() {
        let info = equilibrium_analysis(ModelKind::Cch, p(1.0, 0.0), EquilibriumSign::Plus).unwrap();
        let ev = &info.eigenvalues;
        assert_abs_diff_eq!(ev[0].re, SQRT_2, epsilon = 1e-14);
        assert_eq!(ev[1], Complex64::new(0.0, 0.0));
        assert_abs_diff_eq!(ev[2].re, -SQRT_2, epsilon = 1e-14);
        assert_eq!((info.n_unstable, info.n_stable, info.n_center), (1, 1, 1));
        // Unstable eigenvector is (1, sqrt2, 2) normalised.
        let v = &info.eigenvectors[0];
        let nrm = (1.0f64 + 2.0 + 4.0).sqrt();
        for (z, want) in v.iter().zip([1.0, SQRT_2, 2.0]) {
            assert_abs_diff_eq!(z.re, want / nrm, epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eig_hcch_ch_limit() {
        let info = equilibrium_analysis(ModelKind::Hcch, p(1.0, 0.0), EquilibriumSign::Plus).unwrap();
        let ev = &info.eigenvalues;
        assert_abs_diff_eq!(ev[0].re, SQRT_2, epsilon = 1e-14);
        for z in &ev[1..4] {
            assert_eq!(*z, Complex64::new(0.0, 0.0));
        }
        assert_abs_diff_eq!(ev[4].re, -SQRT_2, epsilon = 1e-14);
        assert_eq!(info.n_center, 3);
    }

    #[test]
    fn eig_cch_counts_small_delta() {
        let info = equilibrium_analysis(ModelKind::Cch, p(0.9, 0.05), EquilibriumSign::Plus).unwrap();
        assert_eq!((info.n_unstable, info.n_stable), (1, 2));
        let info = equilibrium_analysis(ModelKind::Cch, p(0.9, 0.05), EquilibriumSign::Minus).unwrap();
        assert_eq!((info.n_unstable, info.n_stable), (2, 1));
    }

    #[test]
    fn eig_hcch_counts_small_delta() {
        for s in [EquilibriumSign::Plus, EquilibriumSign::Minus] {
            let info = equilibrium_analysis(ModelKind::Hcch, p(0.9, 0.01), s).unwrap();
            let (u, st) = (info.n_unstable, info.n_stable);
            match s {
                EquilibriumSign::Plus => assert_eq!((u, st), (2, 3)),
                EquilibriumSign::Minus => assert_eq!((u, st), (3, 2)),
            }
        }
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        for kind in [ModelKind::Cch, ModelKind::Hcch] {
            for &(a, d) in &[(0.9, 0.05), (0.5, 0.3), (0.99, 1e-4), (2.0, 1.0)] {
                for s in [EquilibriumSign::Plus, EquilibriumSign::Minus] {
                    let info = equilibrium_analysis(kind, p(a, d), s).unwrap();
                    assert!(info.eig_crosscheck < 1e-9, "{kind} {a} {d}: {}", info.eig_crosscheck);
                    for i in 0..kind.dim() {
                        assert!(info.residual_of_eigenpair(i) < 1e-9);
                        let poly = crate::poly::eval(&info.char_poly, info.eigenvalues[i]);
                        assert!(poly.norm() < 1e-10, "char poly residual {}", poly.norm());
                    }
                }
            }
        }
    }

    #[test]
    fn subspace_dimensions() {
        let info = equilibrium_analysis(ModelKind::Hcch, p(0.9, 0.01), EquilibriumSign::Plus).unwrap();
        let s = info.subspace(Stability::Stable, true);
        assert_eq!(s.ncols(), 3);
        let gram = s.transpose() * &s;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
        assert_eq!(info.subspace(Stability::Unstable, false).ncols(), 2);
    }

    fn kink_samples(n_deriv: usize) -> DerivativeSamples {
        // c(x) = -tanh(x / sqrt2), derivatives via t' = (1 - t^2) / sqrt2.
        let mut s = DerivativeSamples::default();
        for i in 0..=400 {
            let x = -20.0 + 0.1 * i as f64;
            let t = (x / SQRT_2).tanh();
            // Derivatives of tanh as polynomials in t.
            let mut poly = vec![0.0, 1.0];
            let mut vals = Vec::new();
            for _ in 0..=n_deriv {
                let v: f64 = poly.iter().enumerate().map(|(k, c)| c * t.powi(k as i32)).sum();
                vals.push(v);
                // d/dt of poly times (1 - t^2) / sqrt2
                let mut next = vec![0.0; poly.len() + 1];
                for (k, &c) in poly.iter().enumerate().skip(1) {
                    let dc = c * k as f64 / SQRT_2;
                    next[k - 1] += dc;
                    next[k + 1] -= dc;
                }
                poly = next;
            }
            s.x.push(x);
            s.values.push(vals.into_iter().map(|v| -v).collect());
        }
        s
    }

    #[test]
    fn exact_kink_residual() {
        let s = kink_samples(5);
        let r = profile_residual(ModelKind::Cch, p(1.0, 0.0), &s).unwrap();
        assert!(r < 1e-12, "{r}");
        let r = profile_residual(ModelKind::Hcch, p(1.0, 0.0), &s).unwrap();
        assert!(r < 1e-12, "{r}");
        // With driving, the algebraic side peaks at the kink centre: delta / 2.
        let r = profile_residual(ModelKind::Cch, p(1.0, 0.05), &s).unwrap();
        assert_abs_diff_eq!(r, 0.025, epsilon = 1e-12);
    }

    #[test]
    fn residual_needs_derivatives() {
        let s = kink_samples(3);
        assert!(matches!(
            profile_residual(ModelKind::Hcch, p(1.0, 0.0), &s),
            Err(SystemError::InsufficientDerivatives { needed: 6, .. })
        ));
    }
}
