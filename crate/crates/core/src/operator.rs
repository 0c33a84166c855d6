//! Finite-dimensional complex operators and the spectral toolkit built on them:
//! matrix functions on supports, tensor powers, partial traces, purifications,
//! trace distance and fidelity.
//!
//! Eigenvectors inside a degenerate eigenspace are not canonical. Everything
//! exported here is a function of spectral projectors only, so results do not
//! depend on the basis chosen by the eigensolver.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cplx, modulus, Complex, Real, Tolerances};

/// Default cap on the total dimension of any n-fold construction.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Square complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct ComplexOperator<T: Real> {
    m: DMatrix<Complex<T>>,
}

impl<T: Real> fmt::Debug for ComplexOperator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexOperator(dim={}) {}", self.dim(), self.m)
    }
}

impl<T: Real> ComplexOperator<T> {
    pub fn from_matrix(m: DMatrix<Complex<T>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("operator dimension must be >= 1".into()));
        }
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let z = m[(r, c)];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(ComplexOperator { m })
    }

    /// Wraps a matrix already known to be square and finite.
    pub(crate) fn from_matrix_unchecked(m: DMatrix<Complex<T>>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        ComplexOperator { m }
    }

    /// Builds an operator from real and imaginary parts in row-major order.
    pub fn from_parts(re: &[Vec<T>], im: &[Vec<T>]) -> Result<Self> {
        let dim = re.len();
        if im.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: im.len(),
            });
        }
        for (row_re, row_im) in re.iter().zip(im) {
            if row_re.len() != dim || row_im.len() != dim {
                return Err(Error::SizeMismatch {
                    what: "operator row length",
                    expected: dim,
                    actual: if row_re.len() != dim { row_re.len() } else { row_im.len() },
                });
            }
        }
        Self::from_matrix(DMatrix::from_fn(dim, dim, |r, c| Complex::new(re[r][c], im[r][c])))
    }

    pub fn identity(dim: usize) -> Self {
        ComplexOperator {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        ComplexOperator {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diag(values: &[T]) -> Self {
        let d = values.len();
        ComplexOperator {
            m: DMatrix::from_fn(d, d, |r, c| if r == c { cplx(values[r]) } else { Complex::new(T::zero(), T::zero()) }),
        }
    }

    /// Rank-one operator |ψ⟩⟨ψ|.
    pub fn outer(ket: &DVector<Complex<T>>) -> Self {
        ComplexOperator {
            m: ket * ket.adjoint(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.m[(r, c)]
    }

    pub fn adjoint(&self) -> Self {
        ComplexOperator { m: self.m.adjoint() }
    }

    pub fn trace(&self) -> Complex<T> {
        self.m.trace()
    }

    /// Real part of the trace.
    pub fn tr(&self) -> T {
        self.m.trace().re
    }

    pub fn scale(&self, s: T) -> Self {
        ComplexOperator {
            m: self.m.map(|z| z * s),
        }
    }

    pub fn scale_mut(&mut self, s: T) {
        self.m.apply(|z| *z *= s);
    }

    pub fn kron(&self, other: &Self) -> Self {
        ComplexOperator {
            m: self.m.kronecker(&other.m),
        }
    }

    /// `a · self · b`, the usual sandwich.
    pub fn sandwich(&self, left: &Self, right: &Self) -> Self {
        ComplexOperator {
            m: &left.m * &self.m * &right.m,
        }
    }

    /// `s · self · s` for a Hermitian `s`.
    pub fn conjugate_by(&self, s: &Self) -> Self {
        self.sandwich(s, s)
    }

    /// Largest absolute entry of `self − self†`.
    pub fn hermitian_deviation(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for r in 0..d {
            for c in r..d {
                let diff = self.m[(r, c)] - self.m[(c, r)].conj();
                let a = modulus(diff);
                if a > worst {
                    worst = a;
                }
            }
        }
        worst
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.m.iter().fold(T::zero(), |acc, z| {
            let a = modulus(*z);
            if a > acc {
                a
            } else {
                acc
            }
        })
    }

    /// `(self + self†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::of(0.5);
        ComplexOperator {
            m: (&self.m + self.m.adjoint()).map(|z| z * half),
        }
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermitian_deviation() <= tol * T::one().max(self.max_abs())
    }

    /// Eigenvalues of the Hermitian part, descending.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.hermitian_part().m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues().first().copied().unwrap_or_else(T::zero)
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().last().copied().unwrap_or_else(T::zero)
    }

    /// Spectral norm (largest singular value).
    pub fn op_norm(&self) -> T {
        if self.is_hermitian(T::of(1e-12)) {
            self.eigenvalues()
                .iter()
                .fold(T::zero(), |acc, v| acc.max(v.abs()))
        } else {
            self.m
                .singular_values()
                .iter()
                .fold(T::zero(), |acc, v| acc.max(*v))
        }
    }

    /// `⟨ψ| self |ψ⟩`.
    pub fn expectation(&self, ket: &DVector<Complex<T>>) -> Complex<T> {
        (ket.adjoint() * &self.m * ket)[(0, 0)]
    }

    /// `Tr(self · other)`, computed without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        let d = self.dim();
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..d {
            for k in 0..d {
                acc += self.m[(i, k)] * other.m[(k, i)];
            }
        }
        acc
    }
}

macro_rules! impl_binop {
    ($tr:ident, $f:ident, $op:tt) => {
        impl<'a, T: Real> $tr<&'a ComplexOperator<T>> for &'a ComplexOperator<T> {
            type Output = ComplexOperator<T>;
            fn $f(self, rhs: &'a ComplexOperator<T>) -> ComplexOperator<T> {
                ComplexOperator { m: &self.m $op &rhs.m }
            }
        }
        impl<T: Real> $tr for ComplexOperator<T> {
            type Output = ComplexOperator<T>;
            fn $f(self, rhs: ComplexOperator<T>) -> ComplexOperator<T> {
                ComplexOperator { m: self.m $op rhs.m }
            }
        }
    };
}

impl_binop!(Add, add, +);
impl_binop!(Sub, sub, -);
impl_binop!(Mul, mul, *);

impl<'a, T: Real> AddAssign<&'a ComplexOperator<T>> for ComplexOperator<T> {
    fn add_assign(&mut self, rhs: &'a ComplexOperator<T>) {
        self.m += &rhs.m;
    }
}

impl<T: Real> Neg for ComplexOperator<T> {
    type Output = ComplexOperator<T>;
    fn neg(self) -> Self {
        ComplexOperator { m: -self.m }
    }
}

// ---------------------------------------------------------------------------
// JSON form: {"dim": d, "re": [[...]], "im": [[...]]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl<T: Real> Serialize for ComplexOperator<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let json = OperatorJson {
            dim: d,
            re: (0..d).map(|r| (0..d).map(|c| self.m[(r, c)].re.to_f64_lossy()).collect()).collect(),
            im: (0..d).map(|r| (0..d).map(|c| self.m[(r, c)].im.to_f64_lossy()).collect()).collect(),
        };
        json.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for ComplexOperator<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = OperatorJson::deserialize(d)?;
        if json.re.len() != json.dim || json.im.len() != json.dim {
            return Err(D::Error::custom(format!(
                "operator declares dim {} but has {} real rows and {} imaginary rows",
                json.dim,
                json.re.len(),
                json.im.len()
            )));
        }
        let conv = |rows: Vec<Vec<f64>>| -> Vec<Vec<T>> {
            rows.into_iter().map(|row| row.into_iter().map(T::of).collect()).collect()
        };
        ComplexOperator::from_parts(&conv(json.re), &conv(json.im)).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Density operators and pure states
// ---------------------------------------------------------------------------

/// Unit-trace positive semidefinite operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DensityOperator<T: Real> {
    op: ComplexOperator<T>,
}

impl<T: Real> DensityOperator<T> {
    pub fn new(op: ComplexOperator<T>) -> Result<Self> {
        Self::with_tolerances(op, &T::default_tolerances())
    }

    pub fn with_tolerances(op: ComplexOperator<T>, tol: &Tolerances) -> Result<Self> {
        let scale = T::one().max(op.max_abs());
        let dev = op.hermitian_deviation();
        if dev > T::of(tol.herm) * scale {
            return Err(Error::NotHermitian {
                deviation: dev.to_f64_lossy(),
            });
        }
        let tr = op.trace();
        if (tr.re - T::one()).abs() > T::of(tol.trace) || tr.im.abs() > T::of(tol.trace) {
            return Err(Error::InvalidTrace {
                trace: tr.re.to_f64_lossy(),
            });
        }
        let op = op.hermitian_part();
        let min = op.min_eigenvalue();
        if min < -T::of(tol.psd) {
            return Err(Error::NotPsd {
                min_eigenvalue: min.to_f64_lossy(),
            });
        }
        Ok(DensityOperator { op })
    }

    /// Normalizes a PSD operator with positive trace.
    pub fn normalized(op: &ComplexOperator<T>) -> Result<Self> {
        let tr = op.tr();
        if !(tr > T::zero()) {
            return Err(Error::InvalidTrace {
                trace: tr.to_f64_lossy(),
            });
        }
        Self::new(op.scale(T::one() / tr))
    }

    pub(crate) fn from_op_unchecked(op: ComplexOperator<T>) -> Self {
        DensityOperator { op }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOperator {
            op: ComplexOperator::identity(dim).scale(T::one() / T::of(dim as f64)),
        }
    }

    pub fn from_pure(psi: &PureState<T>) -> Self {
        DensityOperator {
            op: ComplexOperator::outer(psi.amplitudes()),
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn op(&self) -> &ComplexOperator<T> {
        &self.op
    }

    pub fn into_op(self) -> ComplexOperator<T> {
        self.op
    }
}

impl<'de, T: Real> Deserialize<'de> for DensityOperator<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let op = ComplexOperator::deserialize(d)?;
        DensityOperator::new(op).map_err(D::Error::custom)
    }
}

/// Unit vector in C^dim.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState<T: Real> {
    amps: DVector<Complex<T>>,
}

impl<T: Real> PureState<T> {
    pub fn new(amps: DVector<Complex<T>>) -> Result<Self> {
        let norm = amps.norm();
        if (norm - T::one()).abs() > T::of(T::default_tolerances().trace) {
            return Err(Error::NotNormalized {
                norm: norm.to_f64_lossy(),
            });
        }
        Ok(PureState { amps })
    }

    /// Computational basis vector |index⟩.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = DVector::zeros(dim);
        amps[index] = cplx(T::one());
        PureState { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex<T>> {
        &self.amps
    }

    pub fn density(&self) -> DensityOperator<T> {
        DensityOperator::from_pure(self)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amps.dotc(&other.amps)
    }
}

// ---------------------------------------------------------------------------
// Spectral machinery
// ---------------------------------------------------------------------------

/// Eigen-decomposition `A = V diag(λ) V†` with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<T: Real> {
    pub eigenvalues: Vec<T>,
    /// Eigenvectors stored as columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<Complex<T>>,
}

impl<T: Real> SpectralDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, i: usize) -> DVector<Complex<T>> {
        self.eigenvectors.column(i).into_owned()
    }

    /// `V diag(f(λ)) V†`.
    pub fn apply(&self, f: impl Fn(T) -> T) -> ComplexOperator<T> {
        let d = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            for i in 0..d {
                scaled[(i, j)] *= w;
            }
        }
        ComplexOperator::from_matrix_unchecked(&scaled * self.eigenvectors.adjoint())
    }

    pub fn reconstruct(&self) -> ComplexOperator<T> {
        self.apply(|x| x)
    }

    /// Projector onto the span of eigenvectors whose eigenvalue satisfies `keep`.
    pub fn projector_where(&self, keep: impl Fn(T) -> bool) -> ComplexOperator<T> {
        self.apply(|x| if keep(x) { T::one() } else { T::zero() })
    }
}

/// Decomposes a Hermitian operator.
pub fn spectral_decompose<T: Real>(a: &ComplexOperator<T>) -> Result<SpectralDecomposition<T>> {
    let tol = T::of(T::default_tolerances().herm);
    let dev = a.hermitian_deviation();
    if dev > tol * T::one().max(a.max_abs()) {
        return Err(Error::NotHermitian {
            deviation: dev.to_f64_lossy(),
        });
    }
    Ok(decompose_hermitian_part(a))
}

/// Decomposes `(a + a†)/2` without checking how far `a` is from Hermitian.
pub(crate) fn decompose_hermitian_part<T: Real>(a: &ComplexOperator<T>) -> SpectralDecomposition<T> {
    let h = a.hermitian_part();
    let eig = SymmetricEigen::new(h.m);
    let d = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

fn psd_decomposition<T: Real>(a: &ComplexOperator<T>) -> Result<SpectralDecomposition<T>> {
    let tol = T::default_tolerances();
    let mut sd = decompose_hermitian_part(a);
    let scale = T::one().max(sd.eigenvalues.first().map(|v| v.abs()).unwrap_or_else(T::zero));
    let floor = -T::of(tol.psd) * scale;
    for v in sd.eigenvalues.iter_mut() {
        if *v < floor {
            return Err(Error::NotPsd {
                min_eigenvalue: v.to_f64_lossy(),
            });
        }
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    Ok(sd)
}

/// Principal square root of a PSD operator. Eigenvalues in `(−τ_psd, 0)` are clipped.
pub fn sqrt_psd<T: Real>(a: &ComplexOperator<T>) -> Result<ComplexOperator<T>> {
    Ok(psd_decomposition(a)?.apply(|x| x.sqrt()))
}

/// Projector onto eigenspaces with eigenvalue strictly above `cutoff`.
pub fn support_projector<T: Real>(a: &ComplexOperator<T>, cutoff: T) -> ComplexOperator<T> {
    decompose_hermitian_part(a).projector_where(|x| x > cutoff)
}

/// Moore–Penrose inverse of `√a`, restricted to eigenvalues above `cutoff`.
///
/// The result `B` satisfies `B a B = support_projector(a, cutoff)`.
pub fn pinv_sqrt_on_support<T: Real>(a: &ComplexOperator<T>, cutoff: T) -> ComplexOperator<T> {
    decompose_hermitian_part(a).apply(|x| if x > cutoff { T::one() / x.sqrt() } else { T::zero() })
}

/// Support cutoff relative to the largest eigenvalue.
pub fn relative_cutoff<T: Real>(a: &ComplexOperator<T>) -> T {
    T::of(T::default_tolerances().support) * a.max_eigenvalue().abs()
}

/// Which factor of a bipartite `R ⊗ C` space to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    Reference,
    System,
}

/// Partial trace of an arbitrary operator on `R ⊗ C` (basis index `r·dC + c`).
pub fn partial_trace_op<T: Real>(
    joint: &ComplexOperator<T>,
    dims: (usize, usize),
    keep: Keep,
) -> Result<ComplexOperator<T>> {
    let (dr, dc) = dims;
    if joint.dim() != dr * dc {
        return Err(Error::DimensionMismatch {
            expected: dr * dc,
            actual: joint.dim(),
        });
    }
    let m = joint.matrix();
    let out = match keep {
        Keep::Reference => DMatrix::from_fn(dr, dr, |r, s| {
            (0..dc).fold(cplx(T::zero()), |acc, c| acc + m[(r * dc + c, s * dc + c)])
        }),
        Keep::System => DMatrix::from_fn(dc, dc, |c, e| {
            (0..dr).fold(cplx(T::zero()), |acc, r| acc + m[(r * dc + c, r * dc + e)])
        }),
    };
    Ok(ComplexOperator::from_matrix_unchecked(out))
}

pub fn partial_trace<T: Real>(
    joint: &DensityOperator<T>,
    dims: (usize, usize),
    keep: Keep,
) -> Result<DensityOperator<T>> {
    let reduced = partial_trace_op(joint.op(), dims, keep)?;
    Ok(DensityOperator::from_op_unchecked(reduced.hermitian_part()))
}

/// `Σ_i √λ_i |i⟩_R |v_i⟩_C` built from the spectral decomposition of `rho`.
/// The reference has the same dimension as the system.
pub fn canonical_purification<T: Real>(rho: &DensityOperator<T>) -> PureState<T> {
    let sd = decompose_hermitian_part(rho.op());
    let d = sd.dim();
    let mut amps = DVector::zeros(d * d);
    for i in 0..d {
        let w = sd.eigenvalues[i].max(T::zero()).sqrt();
        for c in 0..d {
            amps[i * d + c] = sd.eigenvectors[(c, i)] * w;
        }
    }
    // Clipping can perturb the norm at round-off level.
    let norm = amps.norm();
    PureState { amps: amps.map(|z| z / norm) }
}

/// Trace norm `‖a‖₁`, the sum of singular values.
pub fn trace_norm<T: Real>(a: &ComplexOperator<T>) -> T {
    let scale = T::one().max(a.max_abs());
    if a.hermitian_deviation() <= T::of(1e-13) * scale {
        a.hermitian_part()
            .m
            .symmetric_eigenvalues()
            .iter()
            .fold(T::zero(), |acc, v| acc + v.abs())
    } else {
        a.m.singular_values().iter().fold(T::zero(), |acc, v| acc + *v)
    }
}

/// Unnormalized trace distance `‖a − b‖₁`.
pub fn trace_distance<T: Real>(a: &ComplexOperator<T>, b: &ComplexOperator<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(trace_norm(&(a - b)))
}

/// Fidelity `(Tr √(√a b √a))²`, clamped to `[0, 1]`.
pub fn fidelity<T: Real>(a: &DensityOperator<T>, b: &DensityOperator<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let sa = sqrt_psd(a.op())?;
    let inner = b.op().conjugate_by(&sa);
    let root_trace = inner
        .eigenvalues()
        .into_iter()
        .fold(T::zero(), |acc, v| acc + v.max(T::zero()).sqrt());
    let f = root_trace * root_trace;
    Ok(f.max(T::zero()).min(T::one()))
}

/// `‖φ_a − φ_b‖₁ = 2√(1 − |⟨φ_a|φ_b⟩|²)` for pure states.
pub fn pure_state_distance<T: Real>(a: &PureState<T>, b: &PureState<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let overlap = a.inner(b).norm_sqr();
    Ok(T::of(2.0) * (T::one() - overlap).max(T::zero()).sqrt())
}

/// n-fold Kronecker power, guarded by `cap` on the resulting dimension.
pub fn tensor_power<T: Real>(a: &ComplexOperator<T>, n: usize, cap: usize) -> Result<ComplexOperator<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("tensor power requires n >= 1".into()));
    }
    checked_pow(a.dim(), n, cap)?;
    let mut out = a.clone();
    for _ in 1..n {
        out = out.kron(a);
    }
    Ok(out)
}

/// Kronecker product of a list of operators.
pub fn kron_all<T: Real>(ops: &[&ComplexOperator<T>]) -> ComplexOperator<T> {
    let mut iter = ops.iter();
    let first = (*iter.next().expect("at least one factor")).clone();
    iter.fold(first, |acc, op| acc.kron(op))
}

/// `base^n`, failing with `SizeLimitExceeded` when it exceeds `cap`.
pub fn checked_pow(base: usize, n: usize, cap: usize) -> Result<usize> {
    let mut size: usize = 1;
    for _ in 0..n {
        size = size.saturating_mul(base);
        if size > cap {
            return Err(Error::SizeLimitExceeded { size, cap });
        }
    }
    Ok(size)
}
