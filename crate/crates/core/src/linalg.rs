//! Small dense complex linear algebra.
//!
//! Everything here works on square matrices of dimension 2, 4 or 16, which
//! covers single-qubit operators, two-qubit gates and single-qubit process
//! matrices. Matrices are stored row-major; all operations are pure.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default tolerance used when clamping small negative eigenvalues.
pub const EIG_TOL: f64 = 1e-10;

/// Singular values closer than this are treated as degenerate in [`svd2`].
pub const SVD_TIE_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Dense square complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = re(1.0);
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| re(x)).collect();
        Self::from_diag(&d)
    }

    /// Builds a matrix from rows. Panics if the rows do not form a square.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "matrix rows must form a square");
            data.extend_from_slice(r);
        }
        Self { dim, data }
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| re(x)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// Outer product |a><b|.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        assert_eq!(a.len(), b.len());
        let dim = a.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = a[i] * b[j].conj();
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[C64]) {
        for (i, &v) in col.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(re(s))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Kronecker product `self ⊗ other`; `self` indexes the most significant factor.
    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        let mut out = Self::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out[(i * m + k, j * m + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Frobenius norm of `self - self†`.
    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).frobenius_norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Frobenius norm of `self† self - I`.
    pub fn unitarity_defect(&self) -> f64 {
        (&(&self.adjoint() * self) - &Self::identity(self.dim)).frobenius_norm()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Absolute-tolerance comparison on the Frobenius norm of the difference.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim && (self - other).frobenius_norm() <= tol
    }

    /// `min_θ ‖self − e^{iθ} other‖_F`, with θ = arg Tr(other† self).
    pub fn phase_distance(&self, other: &Self) -> f64 {
        let overlap: C64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| b.conj() * a)
            .sum();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            re(1.0)
        };
        (self - &other.scale(phase)).frobenius_norm()
    }

    pub fn approx_eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim && self.phase_distance(other) <= tol
    }

    /// Hermitian part `(m + m†)/2`.
    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale_re(0.5)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in product");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self * &rhs
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sum");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self + &rhs
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in difference");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self - &rhs
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for row in self.data.chunks(self.dim) {
            write!(f, "  ")?;
            for x in row {
                write!(f, "{:>+.6}{:+.6}i  ", x.re, x.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// Matrices travel as row-major nested arrays of [re, im] pairs.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .data
            .chunks(self.dim)
            // adding zero turns -0.0 into 0.0
            .map(|r| r.iter().map(|x| [x.re + 0.0, x.im + 0.0]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("matrix must be a non-empty square"));
        }
        let data = rows
            .into_iter()
            .flatten()
            .map(|[a, b]| C64::new(a, b))
            .collect();
        Ok(ComplexMatrix { dim, data })
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the unitary whose columns are
/// the matching eigenvectors, so that `m = W Λ W†`.
pub fn herm_eig(m: &ComplexMatrix, tol: f64) -> Result<(Vec<f64>, ComplexMatrix)> {
    let deviation = m.hermiticity_defect();
    if deviation > tol {
        return Err(Error::NotHermitian { deviation });
    }
    let n = m.dim();
    let mut a = m.hermitian_part();
    let mut w = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();

    let mut prev_off = f64::INFINITY;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off == 0.0 || off <= f64::EPSILON * 1e-2 * scale || off >= prev_off {
            break;
        }
        prev_off = off;
        for p in 0..n {
            for q in (p + 1)..n {
                let b = a[(p, q)];
                let babs = b.norm();
                if babs <= f64::MIN_POSITIVE || babs <= 1e-300 * scale {
                    continue;
                }
                let phase = b / babs;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let zeta = (aqq - app) / (2.0 * babs);
                let t = if zeta.is_finite() {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                } else {
                    0.0
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]]
                let g_pp = re(cs);
                let g_pq = re(sn);
                let g_qp = -phase.conj() * sn;
                let g_qq = phase.conj() * cs;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * g_pp + aiq * g_qp;
                    a[(i, q)] = aip * g_pq + aiq * g_qq;
                    let wip = w[(i, p)];
                    let wiq = w[(i, q)];
                    w[(i, p)] = wip * g_pp + wiq * g_qp;
                    w[(i, q)] = wip * g_pq + wiq * g_qq;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = g_pp.conj() * apj + g_qp.conj() * aqj;
                    a[(q, j)] = g_pq.conj() * apj + g_qq.conj() * aqj;
                }
                a[(p, q)] = re(0.0);
                a[(q, p)] = re(0.0);
                a[(p, p)] = re(a[(p, p)].re);
                a[(q, q)] = re(a[(q, q)].re);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &w.column(src));
    }
    Ok((values, vectors))
}

/// Rebuilds `W diag(f(λ)) W†`.
pub fn spectral_map(values: &[f64], vectors: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let n = vectors.dim();
    let mut out = ComplexMatrix::zeros(n);
    for (k, &lam) in values.iter().enumerate() {
        let fl = f(lam);
        if fl == 0.0 {
            continue;
        }
        for i in 0..n {
            let wik = vectors[(i, k)] * fl;
            for j in 0..n {
                out[(i, j)] += wik * vectors[(j, k)].conj();
            }
        }
    }
    out
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-tol, 0)` are clamped to zero; anything more negative is
/// rejected with [`Error::NotPsd`].
pub fn psd_sqrt(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let (values, vectors) = herm_eig(m, tol.max(EIG_TOL))?;
    if let Some(&min) = values.first() {
        if min < -tol {
            return Err(Error::NotPsd { eigenvalue: min });
        }
    }
    Ok(spectral_map(&values, &vectors, |x| x.max(0.0).sqrt()))
}

/// Result of [`svd2`]: `m = u · diag(s) · vdag`.
#[derive(Debug, Clone)]
pub struct Svd2 {
    pub u: ComplexMatrix,
    pub s: [f64; 2],
    pub vdag: ComplexMatrix,
}

/// Given `B = U diag(s)` with (numerically) orthogonal columns, recovers the
/// unitary `U` and the non-negative scales `s`. Zero columns are completed to
/// an orthonormal basis.
pub fn unitary_from_scaled_columns(b: &ComplexMatrix) -> (ComplexMatrix, [f64; 2]) {
    assert_eq!(b.dim(), 2, "unitary_from_scaled_columns is 2x2 only");
    let cols = [b.column(0), b.column(1)];
    let norms = [norm(&cols[0]), norm(&cols[1])];
    let lead = if norms[0] >= norms[1] { 0 } else { 1 };
    let other = 1 - lead;
    if norms[lead] == 0.0 {
        return (ComplexMatrix::identity(2), [0.0, 0.0]);
    }
    let u_lead: Vec<C64> = cols[lead].iter().map(|x| x / norms[lead]).collect();
    // completion with unit determinant
    let mut u_other = if lead == 0 {
        vec![-u_lead[1].conj(), u_lead[0].conj()]
    } else {
        vec![u_lead[1].conj(), -u_lead[0].conj()]
    };
    let proj: C64 = u_other
        .iter()
        .zip(&cols[other])
        .map(|(u, x)| u.conj() * x)
        .sum();
    let s_other = proj.norm();
    if s_other > 0.0 {
        let ph = proj / s_other;
        for x in u_other.iter_mut() {
            *x *= ph;
        }
    }
    let mut u = ComplexMatrix::zeros(2);
    u.set_column(lead, &u_lead);
    u.set_column(other, &u_other);
    let mut s = [0.0; 2];
    s[lead] = norms[lead];
    s[other] = s_other;
    (u, s)
}

/// Singular value decomposition of a 2×2 matrix with `s[0] >= s[1] >= 0`.
///
/// When the two singular values agree within [`SVD_TIE_TOL`] the right
/// factor is taken to be the identity, so scalar multiples of unitaries
/// factor as `(m/s, (s, s), I)`.
pub fn svd2(m: &ComplexMatrix) -> Svd2 {
    assert_eq!(m.dim(), 2, "svd2 requires a 2x2 matrix");
    let gram = &m.adjoint() * m;
    let (values, vectors) = herm_eig(&gram, f64::INFINITY).expect("Gram matrix is Hermitian");
    let v = if values[1] - values[0] <= SVD_TIE_TOL * values[1].max(1.0) {
        ComplexMatrix::identity(2)
    } else {
        let mut v = ComplexMatrix::zeros(2);
        v.set_column(0, &vectors.column(1));
        v.set_column(1, &vectors.column(0));
        v
    };
    let (u, mut s) = unitary_from_scaled_columns(&(m * &v));
    if s[1] > s[0] {
        // only reachable inside the tie band
        s[1] = s[0];
    }
    Svd2 {
        u,
        s,
        vdag: v.adjoint(),
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Inverse of a 2×2 matrix through its SVD. Fails when the smallest singular
/// value is below `cutoff`, returning that value.
pub fn inverse2(m: &ComplexMatrix, cutoff: f64) -> std::result::Result<ComplexMatrix, f64> {
    let svd = svd2(m);
    if svd.s[1] < cutoff {
        return Err(svd.s[1]);
    }
    let sinv = ComplexMatrix::from_real_diag(&[1.0 / svd.s[0], 1.0 / svd.s[1]]);
    Ok(&(&svd.vdag.adjoint() * &sinv) * &svd.u.adjoint())
}

/// The single-qubit Pauli matrices (I, σx, σy, σz).
pub fn paulis() -> [ComplexMatrix; 4] {
    let o = re(0.0);
    let l = re(1.0);
    let i = c(0.0, 1.0);
    [
        ComplexMatrix::identity(2),
        ComplexMatrix::from_rows(&[vec![o, l], vec![l, o]]),
        ComplexMatrix::from_rows(&[vec![o, -i], vec![i, o]]),
        ComplexMatrix::from_rows(&[vec![l, o], vec![o, -l]]),
    ]
}

/// Tensor-product Pauli operator basis for `num_qubits` qubits.
///
/// Elements are ordered lexicographically with the first qubit most
/// significant, so for one qubit the order is (I, σx, σy, σz). They satisfy
/// `Tr(E_j† E_i) = dim · δ_ij`.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    num_qubits: usize,
    dim: usize,
    elements: Vec<ComplexMatrix>,
}

impl PauliBasis {
    pub fn new(num_qubits: usize) -> Self {
        let single = paulis();
        let mut elements = vec![ComplexMatrix::identity(1)];
        for _ in 0..num_qubits {
            elements = elements
                .iter()
                .flat_map(|e| single.iter().map(move |p| e.kron(p)))
                .collect();
        }
        Self {
            num_qubits,
            dim: 1 << num_qubits,
            elements,
        }
    }

    /// Basis for operators on a `dim`-dimensional space; `dim` must be a power of two.
    pub fn for_dim(dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two(),
                got: dim,
            });
        }
        Ok(Self::new(dim.trailing_zeros() as usize))
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &ComplexMatrix {
        &self.elements[i]
    }

    /// `Σ_i coeffs[i] E_i`.
    pub fn synthesize(&self, coeffs: &[C64]) -> ComplexMatrix {
        assert_eq!(coeffs.len(), self.elements.len());
        let mut out = ComplexMatrix::zeros(self.dim);
        for (a, e) in coeffs.iter().zip(&self.elements) {
            if *a != C64::new(0.0, 0.0) {
                out = &out + &e.scale(*a);
            }
        }
        out
    }
}

/// Expansion coefficients `α_i = Tr(E_i† m) / dim`, so that `m = Σ α_i E_i`.
pub fn pauli_expand(m: &ComplexMatrix, basis: &PauliBasis) -> Result<Vec<C64>> {
    if m.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: m.dim(),
        });
    }
    let d = basis.dim() as f64;
    Ok(basis
        .elements()
        .iter()
        .map(|e| {
            // Tr(E† m) = Σ_ij conj(E_ij) m_ij
            let t: C64 = e
                .as_slice()
                .iter()
                .zip(m.as_slice())
                .map(|(x, y)| x.conj() * y)
                .sum();
            t / d
        })
        .collect())
}
