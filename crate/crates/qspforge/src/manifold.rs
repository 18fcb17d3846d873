//! Projection of a coefficient family onto the normalization manifold
//! {C_0 = 1, C_j = 0 for j ≠ 0}, where C_j are the autocorrelation lag sums.
//!
//! Peeling a protocol off a state amplifies the state's deviation from exact
//! normalization by roughly the inverse endpoint norm per level, so a state
//! that is 1e-15 off can fail to reproduce to 1e-8 after twenty levels. A
//! Gauss-Newton step computed against double-double residuals moves the
//! input by about its own deviation while leaving a residual near 1e-25,
//! which the peeling then amplifies to nothing.

use std::collections::BTreeMap;

use crate::dd::{self, DdC};

pub(crate) trait LatticeIndex: Copy + Ord {
    fn offset(self, other: Self) -> Self;
    fn shift(self, by: Self) -> Self;
    fn neg(self) -> Self;
    fn zero() -> Self;
}

impl LatticeIndex for i64 {
    fn offset(self, other: Self) -> Self {
        self - other
    }
    fn shift(self, by: Self) -> Self {
        self + by
    }
    fn neg(self) -> Self {
        -self
    }
    fn zero() -> Self {
        0
    }
}

impl LatticeIndex for (i64, i64) {
    fn offset(self, other: Self) -> Self {
        (self.0 - other.0, self.1 - other.1)
    }
    fn shift(self, by: Self) -> Self {
        (self.0 + by.0, self.1 + by.1)
    }
    fn neg(self) -> Self {
        (-self.0, -self.1)
    }
    fn zero() -> Self {
        (0, 0)
    }
}

/// Gaussian elimination with partial pivoting; `a` is consumed.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// All autocorrelation sums of the lattice, by lag.
fn lag_sums<K: LatticeIndex, const D: usize>(
    lattice: &BTreeMap<K, [DdC; D]>,
) -> BTreeMap<K, DdC> {
    let mut lags: BTreeMap<K, DdC> = BTreeMap::new();
    for (&k1, v1) in lattice {
        for (&k2, v2) in lattice {
            let j = k2.offset(k1);
            let entry = lags.entry(j).or_insert(DdC::ZERO);
            *entry = entry.add(dd::inner(v1, v2));
        }
    }
    lags
}

/// Moves the lattice onto the normalization manifold by up to three
/// Gauss-Newton steps with least-norm corrections restricted to the stored
/// support. Best-effort: a rank-deficient system leaves the lattice at the
/// closest residual reached.
pub(crate) fn project<K: LatticeIndex, const D: usize>(lattice: &mut BTreeMap<K, [DdC; D]>) {
    for _ in 0..3 {
        let sites: Vec<K> = lattice.keys().copied().collect();
        if sites.is_empty() {
            return;
        }
        let lags = lag_sums(lattice);
        // canonical half of the lag set: C_{-j} = conj(C_j)
        let canonical: Vec<K> = lags
            .keys()
            .copied()
            .filter(|j| *j != K::zero() && *j > j.neg())
            .collect();

        let mut rows: Vec<f64> = Vec::with_capacity(2 * canonical.len() + 1);
        let c0 = lags.get(&K::zero()).copied().unwrap_or(DdC::ZERO);
        rows.push(c0.re.sub(crate::dd::Dd::ONE).value());
        for j in &canonical {
            let c = lags.get(j).copied().unwrap_or(DdC::ZERO);
            rows.push(c.re.value());
            rows.push(c.im.value());
        }
        let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if worst <= 1e-24 {
            return;
        }

        // f64 snapshot and Jacobian of the lag map
        let snapshot: BTreeMap<K, [num_complex::Complex64; D]> = lattice
            .iter()
            .map(|(&k, v)| {
                let mut out = [num_complex::Complex64::default(); D];
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x.value();
                }
                (k, out)
            })
            .collect();
        let coeff = |s: K, c: usize| -> num_complex::Complex64 {
            snapshot
                .get(&s)
                .map(|v| v[c])
                .unwrap_or_default()
        };
        let num_cols = sites.len() * D * 2;
        let num_rows = rows.len();
        let mut jac = vec![vec![0.0f64; num_cols]; num_rows];
        let i_unit = num_complex::Complex64::new(0.0, 1.0);
        let mut fill = |row_re: usize, row_im: Option<usize>, j: K, jac: &mut Vec<Vec<f64>>| {
            for (s_idx, &m) in sites.iter().enumerate() {
                for c in 0..D {
                    let fwd = coeff(m.shift(j), c);
                    let bwd = coeff(m.offset(j), c).conj();
                    let dx = fwd + bwd;
                    let dy = i_unit * (bwd - fwd);
                    let col = (s_idx * D + c) * 2;
                    jac[row_re][col] = dx.re;
                    jac[row_re][col + 1] = dy.re;
                    if let Some(row_im) = row_im {
                        jac[row_im][col] = dx.im;
                        jac[row_im][col + 1] = dy.im;
                    }
                }
            }
        };
        fill(0, None, K::zero(), &mut jac);
        for (idx, j) in canonical.iter().enumerate() {
            fill(1 + 2 * idx, Some(2 + 2 * idx), *j, &mut jac);
        }

        // least-norm correction: δ = Jᵀ (J Jᵀ + μ)⁻¹ (−r)
        let mut gram = vec![vec![0.0f64; num_rows]; num_rows];
        for i in 0..num_rows {
            for k in i..num_rows {
                let dot: f64 = jac[i].iter().zip(&jac[k]).map(|(a, b)| a * b).sum();
                gram[i][k] = dot;
                gram[k][i] = dot;
            }
        }
        let ridge = 1e-12 * (1.0 + (0..num_rows).map(|i| gram[i][i]).fold(0.0f64, f64::max));
        for (i, row) in gram.iter_mut().enumerate() {
            row[i] += ridge;
        }
        let rhs: Vec<f64> = rows.iter().map(|r| -r).collect();
        let Some(multipliers) = solve_dense(gram, rhs) else {
            return;
        };
        for (s_idx, &m) in sites.iter().enumerate() {
            for c in 0..D {
                let col = (s_idx * D + c) * 2;
                let mut dx = 0.0;
                let mut dy = 0.0;
                for (row, lam) in multipliers.iter().enumerate() {
                    dx += jac[row][col] * lam;
                    dy += jac[row][col + 1] * lam;
                }
                let v = lattice.get_mut(&m).expect("site exists");
                v[c] = v[c].add(DdC::from_f64(dx, dy));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::Dd;

    fn residual<K: LatticeIndex, const D: usize>(lat: &BTreeMap<K, [DdC; D]>) -> f64 {
        let lags = lag_sums(lat);
        let mut worst = 0.0f64;
        for (j, c) in lags {
            let dev = if j == K::zero() {
                c.re.sub(Dd::ONE).value().abs().max(c.im.value().abs())
            } else {
                c.norm_sqr().sqrt().value()
            };
            worst = worst.max(dev);
        }
        worst
    }

    /// A valid degree-1 family: orthogonal unit columns weighted (w, √(1-w²)).
    fn valid_family(seed: u64, top_site: i64, w: f64) -> BTreeMap<i64, [DdC; 2]> {
        use crate::linalg::haar_random_unitary;
        let u = haar_random_unitary(2, seed).unwrap();
        let a = u.column(0).scaled(num_complex::Complex64::new(w, 0.0));
        let b = u
            .column(1)
            .scaled(num_complex::Complex64::new((1.0 - w * w).sqrt(), 0.0));
        let mut lat = BTreeMap::new();
        lat.insert(0, [DdC::from_f64(a.get(0).re, a.get(0).im), DdC::from_f64(a.get(1).re, a.get(1).im)]);
        lat.insert(
            top_site,
            [DdC::from_f64(b.get(0).re, b.get(0).im), DdC::from_f64(b.get(1).re, b.get(1).im)],
        );
        lat
    }

    #[test]
    fn projects_a_perturbed_univariate_family() {
        let mut lat = valid_family(9, 1, 0.6);
        let v = lat.get_mut(&0).unwrap();
        v[0] = v[0].add(DdC::from_f64(1e-13, -0.4e-13));
        v[1] = v[1].add(DdC::from_f64(0.0, 0.7e-13));
        assert!(residual(&lat) > 1e-14);
        project(&mut lat);
        assert!(residual(&lat) < 1e-24, "residual {}", residual(&lat));
    }

    #[test]
    fn projection_is_a_small_move() {
        let mut lat = valid_family(21, 3, 0.8);
        let v = lat.get_mut(&3).unwrap();
        v[1] = v[1].add(DdC::from_f64(2e-12, 1e-12));
        let before: Vec<DdC> = lat.values().flatten().copied().collect();
        project(&mut lat);
        let after: Vec<DdC> = lat.values().flatten().copied().collect();
        let moved: f64 = before
            .iter()
            .zip(&after)
            .map(|(x, y)| x.sub(*y).norm_sqr().value())
            .sum::<f64>()
            .sqrt();
        assert!(moved < 1e-10, "moved {moved}");
        assert!(residual(&lat) < 1e-24);
    }
}
