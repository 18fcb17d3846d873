//! Small dense complex linear algebra for dimensions up to 4.
//!
//! Everything a protocol needs from a matrix library at desk scale: inner
//! products, rank with an explicit tolerance, orthonormal completion,
//! deterministic Haar-random unitaries, and the 2x2 determinant used by the
//! inapproximability certificate. Rank and completion run pivoted
//! Gram-Schmidt with a re-orthogonalization pass, which is plenty at these
//! sizes.

use crate::error::{Error, Result};

pub use num_complex::Complex64;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Default tolerance for accepting a matrix as unitary (max entry of |U†U - I|).
pub const TOL_UNITARY: f64 = 1e-10;
/// Default tolerance below which a deflated direction counts as dependent.
pub const TOL_RANK: f64 = 1e-9;

/// A complex column vector of dimension 1..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector {
    entries: Vec<Complex64>,
}

impl CVector {
    /// Builds a vector, rejecting empty input, dimensions above 4, and
    /// non-finite entries.
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() || entries.len() > 4 {
            return Err(Error::UnsupportedDim(entries.len()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("vector entry".into()));
        }
        Ok(Self { entries })
    }

    /// Convenience constructor from real entries.
    pub fn from_reals(entries: &[f64]) -> Result<Self> {
        Self::new(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            entries: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    /// The canonical basis vector |j> of the given dimension.
    pub fn basis(dim: usize, j: usize) -> Self {
        let mut v = Self::zero(dim);
        v.entries[j] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> Complex64 {
        self.entries[i]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            entries: self.entries.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Unit vector in the same direction, or `None` when the norm is at or
    /// below `tol`.
    pub fn normalized(&self, tol: f64) -> Option<Self> {
        let n = self.norm();
        if n <= tol {
            None
        } else {
            Some(self.scaled(Complex64::new(1.0 / n, 0.0)))
        }
    }
}

/// Inner product ⟨u|v⟩, conjugate-linear in the first argument.
pub fn inner(u: &CVector, v: &CVector) -> Result<Complex64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(u.entries
        .iter()
        .zip(&v.entries)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// 2x2 determinant of the matrix with columns `u`, `v`.
pub fn det2(u: &CVector, v: &CVector) -> Result<Complex64> {
    if u.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: u.dim(),
        });
    }
    if v.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: v.dim(),
        });
    }
    Ok(u.get(0) * v.get(1) - u.get(1) * v.get(0))
}

/// Subtracts from `v` its projection onto each vector of the orthonormal
/// set `basis`, twice. The second pass removes the first-order residue left
/// by cancellation in the first.
fn deflate(v: &CVector, basis: &[CVector]) -> CVector {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = inner(q, &r).expect("deflate: dims checked by caller");
            r = r.sub(&q.scaled(c));
        }
    }
    r
}

fn check_same_dim(vectors: &[CVector]) -> Result<usize> {
    let dim = vectors[0].dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    Ok(dim)
}

/// Rank of the span of `vectors` at tolerance `tol_rank`, together with an
/// orthonormal basis of that span.
///
/// Pivoted Gram-Schmidt: each round deflates every remaining vector against
/// the accepted basis and keeps the one with the largest residual, stopping
/// when no residual exceeds `tol_rank`. Empty input yields rank 0.
pub fn rank_span(vectors: &[CVector], tol_rank: f64) -> Result<(usize, Vec<CVector>)> {
    if vectors.is_empty() {
        return Ok((0, Vec::new()));
    }
    let dim = check_same_dim(vectors)?;
    let mut basis: Vec<CVector> = Vec::new();
    let mut remaining: Vec<CVector> = vectors.to_vec();
    while basis.len() < dim && !remaining.is_empty() {
        let mut best: Option<(usize, f64, CVector)> = None;
        for (i, v) in remaining.iter().enumerate() {
            let r = deflate(v, &basis);
            let n = r.norm();
            if best.as_ref().map_or(true, |(_, bn, _)| n > *bn) {
                best = Some((i, n, r));
            }
        }
        let (idx, n, r) = best.expect("nonempty remaining");
        if n <= tol_rank {
            break;
        }
        basis.push(r.scaled(Complex64::new(1.0 / n, 0.0)));
        remaining.remove(idx);
    }
    Ok((basis.len(), basis))
}

/// Orthonormal basis of the orthogonal complement of `span(vectors)` inside
/// dimension `dim`. Canonical basis vectors serve as completion candidates,
/// picked by largest residual norm.
pub fn orthogonal_complement(dim: usize, vectors: &[CVector], tol_rank: f64) -> Result<Vec<CVector>> {
    if !vectors.is_empty() && check_same_dim(vectors)? != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: vectors[0].dim(),
        });
    }
    let (rank, basis) = rank_span(vectors, tol_rank)?;
    Ok(complete_basis(dim, &basis, dim - rank))
}

/// Extends the orthonormal set `basis` with `count` more vectors obtained by
/// deflating canonical basis vectors, always taking the candidate with the
/// largest residual (ties resolved by lowest index).
fn complete_basis(dim: usize, basis: &[CVector], count: usize) -> Vec<CVector> {
    let mut all: Vec<CVector> = basis.to_vec();
    let mut added = Vec::new();
    for _ in 0..count {
        let mut best: Option<(f64, CVector)> = None;
        for j in 0..dim {
            let r = deflate(&CVector::basis(dim, j), &all);
            let n = r.norm();
            if best.as_ref().map_or(true, |(bn, _)| n > *bn) {
                best = Some((n, r));
            }
        }
        let (n, r) = best.expect("dim > 0");
        debug_assert!(n > 1e-6, "completion found no independent direction");
        let q = r.scaled(Complex64::new(1.0 / n, 0.0));
        all.push(q.clone());
        added.push(q);
    }
    added
}

/// A dense complex matrix of dimension 2..=4 that passed a unitarity check
/// on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    dim: usize,
    /// Row-major entries.
    entries: Vec<Complex64>,
}

impl UnitaryMatrix {
    /// Builds a matrix from row-major entries, verifying unitarity within
    /// [`TOL_UNITARY`].
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        Self::new_with_tolerance(dim, entries, TOL_UNITARY)
    }

    /// As [`UnitaryMatrix::new`] with an explicit tolerance on |U†U - I|.
    pub fn new_with_tolerance(dim: usize, entries: Vec<Complex64>, tol: f64) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(Error::UnsupportedDim(dim));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let m = Self { dim, entries };
        let residual = m.unitarity_residual();
        if residual > tol {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(m)
    }

    /// Builds the unitary whose columns are exactly the given orthonormal
    /// vectors.
    pub fn from_columns(cols: &[CVector]) -> Result<Self> {
        let dim = check_same_dim(cols)?;
        if cols.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cols.len(),
            });
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..dim {
                entries[i * dim + j] = c.get(i);
            }
        }
        let m = Self { dim, entries };
        let residual = m.unitarity_residual();
        if residual > TOL_UNITARY {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector {
            entries: (0..self.dim).map(|i| self.entry(i, j)).collect(),
        }
    }

    /// Matrix-vector product U|v⟩.
    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        let entries = (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.entry(i, j) * v.get(j))
                    .sum::<Complex64>()
            })
            .collect();
        Ok(CVector { entries })
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                entries[j * self.dim + i] = self.entry(i, j).conj();
            }
        }
        Self {
            dim: self.dim,
            entries,
        }
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                entries[i * self.dim + j] = (0..self.dim)
                    .map(|k| self.entry(i, k) * other.entry(k, j))
                    .sum();
            }
        }
        Ok(Self {
            dim: self.dim,
            entries,
        })
    }

    /// Max entry of |U†U - I|.
    pub fn unitarity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..self.dim {
                    s += self.entry(k, i).conj() * self.entry(k, j);
                }
                if i == j {
                    s -= Complex64::new(1.0, 0.0);
                }
                worst = worst.max(s.norm());
            }
        }
        worst
    }

    pub fn determinant(&self) -> Complex64 {
        match self.dim {
            2 => self.entry(0, 0) * self.entry(1, 1) - self.entry(0, 1) * self.entry(1, 0),
            3 => {
                self.entry(0, 0)
                    * (self.entry(1, 1) * self.entry(2, 2) - self.entry(1, 2) * self.entry(2, 1))
                    - self.entry(0, 1)
                        * (self.entry(1, 0) * self.entry(2, 2)
                            - self.entry(1, 2) * self.entry(2, 0))
                    + self.entry(0, 2)
                        * (self.entry(1, 0) * self.entry(2, 1)
                            - self.entry(1, 1) * self.entry(2, 0))
            }
            _ => {
                // Laplace expansion along the first row; dim is at most 4.
                let mut det = Complex64::new(0.0, 0.0);
                for j in 0..self.dim {
                    let minor = self.minor(0, j);
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    det += self.entry(0, j) * minor.determinant() * sign;
                }
                det
            }
        }
    }

    fn minor(&self, row: usize, col: usize) -> Self {
        let d = self.dim - 1;
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..self.dim {
            if i == row {
                continue;
            }
            for j in 0..self.dim {
                if j == col {
                    continue;
                }
                entries.push(self.entry(i, j));
            }
        }
        Self { dim: d, entries }
    }
}

/// Completes the given orthonormal columns to a full unitary. The inputs
/// become the leading columns exactly; the missing ones come from canonical
/// basis vectors deflated against everything chosen so far, pivoting on the
/// largest residual norm, so the completion is deterministic.
pub fn complete_to_unitary(partial_columns: &[CVector]) -> Result<UnitaryMatrix> {
    if partial_columns.is_empty() {
        return Err(Error::UnsupportedDim(0));
    }
    let dim = check_same_dim(partial_columns)?;
    let placed: Vec<(usize, CVector)> = partial_columns
        .iter()
        .cloned()
        .enumerate()
        .collect();
    complete_columns(dim, &placed)
}

/// As [`complete_to_unitary`], but the given columns may sit at arbitrary
/// positions; free positions are filled in ascending order.
pub(crate) fn complete_columns(dim: usize, placed: &[(usize, CVector)]) -> Result<UnitaryMatrix> {
    if placed.len() > dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: placed.len(),
        });
    }
    let mut residual: f64 = 0.0;
    for (pos, (j, c)) in placed.iter().enumerate() {
        if *j >= dim || c.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim().max(*j),
            });
        }
        residual = residual.max((c.norm() - 1.0).abs());
        for (j2, c2) in placed.iter().skip(pos + 1) {
            if j2 == j {
                return Err(Error::ShapeMismatch(format!(
                    "column index {j} given twice"
                )));
            }
            residual = residual.max(inner(c, c2)?.norm());
        }
    }
    if residual > TOL_UNITARY {
        return Err(Error::NotOrthonormal { residual });
    }
    let given: Vec<CVector> = placed.iter().map(|(_, c)| c.clone()).collect();
    let fill = complete_basis(dim, &given, dim - placed.len());
    let mut cols: Vec<Option<CVector>> = vec![None; dim];
    for (j, c) in placed {
        cols[*j] = Some(c.clone());
    }
    let mut fill_iter = fill.into_iter();
    for slot in cols.iter_mut() {
        if slot.is_none() {
            *slot = Some(fill_iter.next().expect("enough completion vectors"));
        }
    }
    let cols: Vec<CVector> = cols.into_iter().map(|c| c.expect("filled")).collect();
    UnitaryMatrix::from_columns(&cols)
}

/// Draws a Haar-distributed unitary of dimension 2 or 3, deterministic per
/// seed. Gram-Schmidt of a complex Gaussian matrix with positive-diagonal
/// normalization is the standard QR construction.
pub fn haar_random_unitary(dim: usize, seed: u64) -> Result<UnitaryMatrix> {
    if !(dim == 2 || dim == 3) {
        return Err(Error::UnsupportedDim(dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(haar_from_rng(dim, &mut rng))
}

/// Haar sample drawn from an existing RNG stream (used by the CLI to derive
/// whole protocols from one seed).
pub(crate) fn haar_from_rng<R: Rng>(dim: usize, rng: &mut R) -> UnitaryMatrix {
    loop {
        let cols: Vec<CVector> = (0..dim)
            .map(|_| {
                CVector::new(
                    (0..dim)
                        .map(|_| {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                        })
                        .collect(),
                )
                .expect("valid dim")
            })
            .collect();
        let mut q: Vec<CVector> = Vec::with_capacity(dim);
        let mut ok = true;
        for c in &cols {
            let r = deflate(c, &q);
            match r.normalized(1e-12) {
                Some(u) => q.push(u),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue; // measure-zero degeneracy; redraw
        }
        match UnitaryMatrix::from_columns(&q) {
            Ok(u) => return u,
            Err(_) => continue,
        }
    }
}
