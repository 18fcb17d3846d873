//! The polynomial-state data model.
//!
//! A state is a sparse map from exponent multi-indices to complex coefficient
//! vectors, `|γ(z)⟩ = Σ_k |γ_k⟩ z^k`. Normalization (`⟨γ(z)|γ(z)⟩ ≡ 1` on the
//! torus) is a checkable property, not an assumption: the autocorrelation
//! residual measures how far a coefficient family is from it.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{rank_span, CVector, Complex64, UnitaryMatrix};

/// Coefficient vectors with norm at or below this are dropped on
/// construction, so stored support is meaningful for degree detection.
pub const PRUNE_NORM: f64 = 1e-14;

/// Default tolerance for accepting a state as normalized.
pub const TOL_NORM: f64 = 1e-9;

/// Whether exponents may be negative (Laurent) or not (analytic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Analytic,
    Laurent,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Analytic => write!(f, "analytic"),
            Kind::Laurent => write!(f, "laurent"),
        }
    }
}

/// Exponent tuple of a monomial, one entry per variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<i64>);

impl MultiIndex {
    pub fn new(exponents: Vec<i64>) -> Self {
        Self(exponents)
    }

    /// Univariate index.
    pub fn uni(k: i64) -> Self {
        Self(vec![k])
    }

    /// Bivariate index (a-exponent, b-exponent).
    pub fn bi(k: i64, h: i64) -> Self {
        Self(vec![k, h])
    }

    pub fn exponents(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> i64 {
        self.0[j]
    }

    /// Sum of exponents.
    pub fn total(&self) -> i64 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|a| -a).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// A point on the torus T^m, stored as phases θ_j with z_j = exp(iθ_j).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    phases: Vec<f64>,
}

impl TorusPoint {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("torus phase".into()));
        }
        Ok(Self { phases })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn num_vars(&self) -> usize {
        self.phases.len()
    }

    /// Value of the monomial z^k at this point, exp(i k·θ).
    pub fn monomial(&self, index: &MultiIndex) -> Complex64 {
        let angle: f64 = self
            .phases
            .iter()
            .zip(index.exponents())
            .map(|(t, k)| t * *k as f64)
            .sum();
        Complex64::new(angle.cos(), angle.sin())
    }
}

/// A sparse vector-valued polynomial over one or two torus variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialState {
    num_vars: usize,
    dim: usize,
    kind: Kind,
    terms: BTreeMap<MultiIndex, CVector>,
}

impl PolynomialState {
    /// Builds a state from terms, summing duplicates, pruning coefficients of
    /// norm at most [`PRUNE_NORM`], and validating shape: 1 or 2 variables,
    /// coefficient dimension 2 or 3, and non-negative exponents for analytic
    /// states.
    pub fn new<I>(num_vars: usize, dim: usize, kind: Kind, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, CVector)>,
    {
        if !(num_vars == 1 || num_vars == 2) {
            return Err(Error::BadSupport(format!(
                "{num_vars} variables (expected 1 or 2)"
            )));
        }
        if !(dim == 2 || dim == 3) {
            return Err(Error::UnsupportedDim(dim));
        }
        let mut map: BTreeMap<MultiIndex, CVector> = BTreeMap::new();
        for (idx, coeff) in terms {
            if idx.len() != num_vars {
                return Err(Error::BadSupport(format!(
                    "exponent {idx} has {} entries, state has {num_vars} variables",
                    idx.len()
                )));
            }
            if coeff.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: coeff.dim(),
                });
            }
            if kind == Kind::Analytic && idx.exponents().iter().any(|&k| k < 0) {
                return Err(Error::BadSupport(format!(
                    "negative exponent {idx} in an analytic state"
                )));
            }
            map.entry(idx)
                .and_modify(|c| *c = c.add(&coeff))
                .or_insert(coeff);
        }
        map.retain(|_, c| c.norm() > PRUNE_NORM);
        Ok(Self {
            num_vars,
            dim,
            kind,
            terms: map,
        })
    }

    /// The constant state with a single coefficient at exponent zero.
    pub fn constant(num_vars: usize, kind: Kind, coeff: CVector) -> Result<Self> {
        let dim = coeff.dim();
        Self::new(
            num_vars,
            dim,
            kind,
            [(MultiIndex::new(vec![0; num_vars]), coeff)],
        )
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Stored terms in lexicographic exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &CVector)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, index: &MultiIndex) -> Option<&CVector> {
        self.terms.get(index)
    }

    /// Coefficient at `index`, or the zero vector when absent. Theorems
    /// quantify over full index ranges; sparse storage must not skip them.
    pub fn coeff_or_zero(&self, index: &MultiIndex) -> CVector {
        self.terms
            .get(index)
            .cloned()
            .unwrap_or_else(|| CVector::zero(self.dim))
    }

    /// Max total exponent over stored terms (0 for the empty state).
    pub fn total_degree(&self) -> i64 {
        self.terms.keys().map(|k| k.total()).max().unwrap_or(0)
    }

    /// Max |k| over stored terms of a univariate Laurent state.
    pub fn laurent_degree(&self) -> i64 {
        self.terms
            .keys()
            .map(|k| k.exponents().iter().map(|e| e.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Max exponent of variable `var` over stored terms.
    pub fn var_degree(&self, var: usize) -> i64 {
        self.terms.keys().map(|k| k.get(var)).max().unwrap_or(0)
    }

    /// Min exponent of variable `var` over stored terms.
    pub fn var_min(&self, var: usize) -> i64 {
        self.terms.keys().map(|k| k.get(var)).min().unwrap_or(0)
    }

    /// Pointwise value Σ_k |γ_k⟩ z^k at a torus point.
    pub fn evaluate_at(&self, point: &TorusPoint) -> Result<CVector> {
        if point.num_vars() != self.num_vars {
            return Err(Error::ShapeMismatch(format!(
                "point has {} phases, state has {} variables",
                point.num_vars(),
                self.num_vars
            )));
        }
        let mut acc = CVector::zero(self.dim);
        for (idx, coeff) in &self.terms {
            acc = acc.add(&coeff.scaled(point.monomial(idx)));
        }
        Ok(acc)
    }

    /// All lag sums C_j = Σ_k ⟨γ_k|γ_{k+j}⟩ of the coefficient family.
    pub fn autocorrelations(&self) -> BTreeMap<MultiIndex, Complex64> {
        let mut lags: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for (k1, v1) in &self.terms {
            for (k2, v2) in &self.terms {
                let j = k2.sub(k1);
                let ip = crate::linalg::inner(v1, v2).expect("uniform dims");
                *lags.entry(j).or_insert_with(|| Complex64::new(0.0, 0.0)) += ip;
            }
        }
        lags
    }

    /// How far the family is from satisfying ⟨γ(z)|γ(z)⟩ ≡ 1: the max of
    /// |C_0 - 1| and |C_j| over lags j ≠ 0.
    pub fn normalization_residual(&self) -> f64 {
        let zero = MultiIndex::new(vec![0; self.num_vars]);
        let lags = self.autocorrelations();
        let mut worst = match lags.get(&zero) {
            Some(c0) => (c0 - Complex64::new(1.0, 0.0)).norm(),
            None => 1.0,
        };
        for (j, c) in &lags {
            if *j != zero {
                worst = worst.max(c.norm());
            }
        }
        worst
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.normalization_residual() <= tol
    }

    /// Rank of the set of coefficient vectors.
    pub fn effective_dimension(&self, tol_rank: f64) -> usize {
        let vectors: Vec<CVector> = self.terms.values().cloned().collect();
        rank_span(&vectors, tol_rank).expect("uniform dims").0
    }

    /// Coefficient-wise Euclidean distance; by Parseval, the root mean square
    /// pointwise distance over the torus.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, true)?;
        let mut sum = 0.0;
        for (idx, coeff) in &self.terms {
            sum += coeff.sub(&other.coeff_or_zero(idx)).norm_sqr();
        }
        for (idx, coeff) in &other.terms {
            if !self.terms.contains_key(idx) {
                sum += coeff.norm_sqr();
            }
        }
        Ok(sum.sqrt())
    }

    /// Max pointwise distance over a uniform grid of `grid_size` phases per
    /// variable. A lower bound on the true sup over the torus.
    pub fn sup_distance_sampled(&self, other: &Self, grid_size: usize) -> Result<f64> {
        self.check_same_shape(other, false)?;
        if grid_size == 0 {
            return Err(Error::ShapeMismatch("grid_size must be at least 1".into()));
        }
        let step = std::f64::consts::TAU / grid_size as f64;
        let mut worst: f64 = 0.0;
        let mut grid = vec![0usize; self.num_vars];
        loop {
            let point = TorusPoint::new(grid.iter().map(|&t| t as f64 * step).collect())?;
            let d = self
                .evaluate_at(&point)?
                .sub(&other.evaluate_at(&point)?)
                .norm();
            worst = worst.max(d);
            // odometer increment over the grid
            let mut var = 0;
            loop {
                if var == self.num_vars {
                    return Ok(worst);
                }
                grid[var] += 1;
                if grid[var] < grid_size {
                    break;
                }
                grid[var] = 0;
                var += 1;
            }
        }
    }

    /// Translates every exponent by `offset`. The kind is recomputed: the
    /// result is analytic exactly when all resulting exponents are
    /// non-negative.
    pub fn shift_exponents(&self, offset: &MultiIndex) -> Result<Self> {
        if offset.len() != self.num_vars {
            return Err(Error::ShapeMismatch(format!(
                "offset has {} entries, state has {} variables",
                offset.len(),
                self.num_vars
            )));
        }
        let shifted: Vec<(MultiIndex, CVector)> = self
            .terms
            .iter()
            .map(|(idx, coeff)| (idx.add(offset), coeff.clone()))
            .collect();
        let kind = if shifted
            .iter()
            .all(|(idx, _)| idx.exponents().iter().all(|&k| k >= 0))
        {
            Kind::Analytic
        } else {
            Kind::Laurent
        };
        Self::new(self.num_vars, self.dim, kind, shifted)
    }

    /// Multiplies every coefficient by a scalar.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(idx, coeff)| (idx.clone(), coeff.scaled(factor)))
            .collect();
        Self {
            num_vars: self.num_vars,
            dim: self.dim,
            kind: self.kind,
            terms,
        }
    }

    /// Applies a fixed unitary to every coefficient vector.
    pub fn apply_unitary(&self, u: &UnitaryMatrix) -> Result<Self> {
        if u.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: u.dim(),
            });
        }
        let terms: Result<Vec<_>> = self
            .terms
            .iter()
            .map(|(idx, coeff)| Ok((idx.clone(), u.apply(coeff)?)))
            .collect();
        Self::new(self.num_vars, self.dim, self.kind, terms?)
    }

    /// Extends dimension-2 coefficients with a zero third component.
    pub fn embed_dim3(&self) -> Result<Self> {
        if self.dim != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: self.dim,
            });
        }
        let terms: Result<Vec<_>> = self
            .terms
            .iter()
            .map(|(idx, coeff)| {
                let mut entries = coeff.entries().to_vec();
                entries.push(Complex64::new(0.0, 0.0));
                Ok((idx.clone(), CVector::new(entries)?))
            })
            .collect();
        Self::new(self.num_vars, 3, self.kind, terms?)
    }

    fn check_same_shape(&self, other: &Self, include_kind: bool) -> Result<()> {
        if self.num_vars != other.num_vars
            || self.dim != other.dim
            || (include_kind && self.kind != other.kind)
        {
            return Err(Error::ShapeMismatch(format!(
                "({} vars, dim {}, {}) vs ({} vars, dim {}, {})",
                self.num_vars, self.dim, self.kind, other.num_vars, other.dim, other.kind
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_random_unitary;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn point_state() -> PolynomialState {
        PolynomialState::new(
            2,
            3,
            Kind::Analytic,
            [(
                MultiIndex::bi(0, 0),
                CVector::from_reals(&[1.0, 0.0, 0.0]).unwrap(),
            )],
        )
        .unwrap()
    }

    #[test]
    fn constant_state_evaluates_to_itself_anywhere() {
        let s = point_state();
        for phases in [[0.0, 0.0], [1.3, -2.2], [3.1, 0.4]] {
            let v = s.evaluate_at(&TorusPoint::new(phases.to_vec()).unwrap()).unwrap();
            assert!((v.get(0) - c(1.0, 0.0)).norm() < 1e-15);
            assert!(v.get(1).norm() < 1e-15 && v.get(2).norm() < 1e-15);
        }
    }

    #[test]
    fn evaluate_at_z_equal_one_sums_coefficients() {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let s = PolynomialState::new(
            2,
            2,
            Kind::Analytic,
            [
                (MultiIndex::bi(1, 1), CVector::from_reals(&[0.0, inv]).unwrap()),
                (MultiIndex::bi(0, 0), CVector::from_reals(&[inv, 0.0]).unwrap()),
            ],
        )
        .unwrap();
        let v = s.evaluate_at(&TorusPoint::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert!((v.get(0) - c(inv, 0.0)).norm() < 1e-15);
        assert!((v.get(1) - c(inv, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn point_state_residual_is_zero() {
        assert_eq!(point_state().normalization_residual(), 0.0);
    }

    #[test]
    fn scaling_by_two_gives_residual_three() {
        let s = PolynomialState::new(
            1,
            2,
            Kind::Analytic,
            [(MultiIndex::uni(0), CVector::from_reals(&[1.0, 0.0]).unwrap())],
        )
        .unwrap()
        .scaled(c(2.0, 0.0));
        assert!((s.normalization_residual() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn effective_dimension_examples() {
        assert_eq!(point_state().effective_dimension(1e-9), 1);

        let inv2 = std::f64::consts::FRAC_1_SQRT_2;
        let two_dim = PolynomialState::new(
            2,
            3,
            Kind::Analytic,
            [
                (MultiIndex::bi(0, 0), CVector::from_reals(&[inv2, 0.0, 0.0]).unwrap()),
                (MultiIndex::bi(1, 1), CVector::from_reals(&[0.0, inv2, 0.0]).unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(two_dim.effective_dimension(1e-9), 2);

        let inv3 = 1.0 / 3f64.sqrt();
        let three_dim = PolynomialState::new(
            2,
            3,
            Kind::Analytic,
            [
                (MultiIndex::bi(0, 0), CVector::from_reals(&[inv3, 0.0, 0.0]).unwrap()),
                (MultiIndex::bi(1, 0), CVector::from_reals(&[0.0, inv3, 0.0]).unwrap()),
                (MultiIndex::bi(0, 1), CVector::from_reals(&[0.0, 0.0, inv3]).unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(three_dim.effective_dimension(1e-9), 3);
    }

    #[test]
    fn l2_distance_of_identical_states_is_zero() {
        let s = point_state();
        assert_eq!(s.l2_distance(&s).unwrap(), 0.0);
    }

    #[test]
    fn l2_distance_single_coefficient_difference() {
        let s = point_state();
        let mut terms: Vec<(MultiIndex, CVector)> =
            s.terms().map(|(i, v)| (i.clone(), v.clone())).collect();
        terms.push((
            MultiIndex::bi(3, 1),
            CVector::from_reals(&[0.0, 1e-3, 0.0]).unwrap(),
        ));
        let t = PolynomialState::new(2, 3, Kind::Analytic, terms).unwrap();
        assert!((s.l2_distance(&t).unwrap() - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn l2_distance_matches_hand_sum() {
        let s = PolynomialState::new(
            1,
            2,
            Kind::Analytic,
            [
                (MultiIndex::uni(0), CVector::new(vec![c(0.1, 0.2), c(0.3, 0.0)]).unwrap()),
                (MultiIndex::uni(2), CVector::new(vec![c(0.0, 0.5), c(0.4, 0.1)]).unwrap()),
            ],
        )
        .unwrap();
        let t = PolynomialState::new(
            1,
            2,
            Kind::Analytic,
            [
                (MultiIndex::uni(0), CVector::new(vec![c(0.1, 0.1), c(0.3, 0.0)]).unwrap()),
                (MultiIndex::uni(1), CVector::new(vec![c(0.2, 0.0), c(0.0, 0.0)]).unwrap()),
            ],
        )
        .unwrap();
        // differences: (0): (0, 0.1i) -> 0.01 ; (1): 0.04 ; (2): 0.25 + 0.17
        let expected = (0.01f64 + 0.04 + 0.25 + 0.16 + 0.01).sqrt();
        assert!((s.l2_distance(&t).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn l2_distance_rejects_shape_mismatch() {
        let s = point_state();
        let t = PolynomialState::new(
            1,
            3,
            Kind::Analytic,
            [(MultiIndex::uni(0), CVector::from_reals(&[1.0, 0.0, 0.0]).unwrap())],
        )
        .unwrap();
        assert!(matches!(s.l2_distance(&t), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn sup_distance_identical_states() {
        let s = point_state();
        assert_eq!(s.sup_distance_sampled(&s, 8).unwrap(), 0.0);
    }

    #[test]
    fn sup_distance_single_term_difference_is_epsilon() {
        let s = point_state();
        let mut terms: Vec<(MultiIndex, CVector)> =
            s.terms().map(|(i, v)| (i.clone(), v.clone())).collect();
        terms.push((
            MultiIndex::bi(2, 0),
            CVector::from_reals(&[0.0, 0.0, 1e-4]).unwrap(),
        ));
        let t = PolynomialState::new(2, 3, Kind::Analytic, terms).unwrap();
        let d = s.sup_distance_sampled(&t, 5).unwrap();
        assert!((d - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let s = point_state();
        assert_eq!(s.shift_exponents(&MultiIndex::bi(0, 0)).unwrap(), s);
    }

    #[test]
    fn shift_analytic_into_laurent() {
        let s = PolynomialState::new(
            2,
            2,
            Kind::Analytic,
            [
                (MultiIndex::bi(2, 0), CVector::from_reals(&[1.0, 0.0]).unwrap()),
                (MultiIndex::bi(0, 2), CVector::from_reals(&[0.0, 1.0]).unwrap()),
            ],
        )
        .unwrap();
        let t = s.shift_exponents(&MultiIndex::bi(-1, -1)).unwrap();
        assert_eq!(t.kind(), Kind::Laurent);
        assert!(t.coefficient(&MultiIndex::bi(1, -1)).is_some());
        assert!(t.coefficient(&MultiIndex::bi(-1, 1)).is_some());
        let back = t.shift_exponents(&MultiIndex::bi(1, 1)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn shift_preserves_distance_and_residual() {
        let u = haar_random_unitary(2, 3).unwrap();
        let s = PolynomialState::new(
            1,
            2,
            Kind::Analytic,
            [
                (MultiIndex::uni(0), u.column(0)),
                (MultiIndex::uni(1), u.column(1)),
            ],
        )
        .unwrap();
        let shifted = s.shift_exponents(&MultiIndex::uni(-4)).unwrap();
        assert!((s.normalization_residual() - shifted.normalization_residual()).abs() < 1e-12);
    }

    #[test]
    fn analytic_state_rejects_negative_exponents() {
        let r = PolynomialState::new(
            1,
            2,
            Kind::Analytic,
            [(MultiIndex::uni(-1), CVector::from_reals(&[1.0, 0.0]).unwrap())],
        );
        assert!(matches!(r, Err(Error::BadSupport(_))));
    }

    #[test]
    fn tiny_coefficients_are_pruned() {
        let s = PolynomialState::new(
            1,
            2,
            Kind::Analytic,
            [
                (MultiIndex::uni(0), CVector::from_reals(&[1.0, 0.0]).unwrap()),
                (MultiIndex::uni(7), CVector::from_reals(&[1e-15, 0.0]).unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(s.num_terms(), 1);
        assert_eq!(s.total_degree(), 0);
    }

    #[test]
    fn effective_dimension_is_unitary_invariant() {
        for seed in 0..10u64 {
            let u = haar_random_unitary(3, seed).unwrap();
            let g = haar_random_unitary(3, seed + 100).unwrap();
            let s = PolynomialState::new(
                2,
                3,
                Kind::Analytic,
                [
                    (MultiIndex::bi(0, 0), u.column(0).scaled(c(0.6, 0.0))),
                    (MultiIndex::bi(1, 0), u.column(1).scaled(c(0.8, 0.0))),
                ],
            )
            .unwrap();
            let rotated = s.apply_unitary(&g).unwrap();
            assert_eq!(
                s.effective_dimension(1e-9),
                rotated.effective_dimension(1e-9)
            );
        }
    }
}
