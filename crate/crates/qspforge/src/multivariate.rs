//! Three-dimensional QSP, classical-choice protocols, and the bivariate
//! (im)plementability toolkit.
//!
//! The signal operator diag(1, a, b) propagates coefficients on a triangular
//! lattice: component 1 raises the a-exponent, component 2 the b-exponent.
//! The three triangle sides (a-axis, b-axis, diagonal) carry the orthogonality
//! structure that single-step extraction, full decomposition, the
//! unimplementability test, and the inapproximability quantity q(γ) all read
//! off the coefficient family.

use std::collections::BTreeMap;

use crate::dd::{self, Dd, DdC};
use crate::error::{Error, Result};
use crate::linalg::{
    complete_to_unitary, det2, inner, rank_span, CVector, Complex64, UnitaryMatrix, TOL_RANK,
};
use crate::report::{DiagnosticReport, Witness};
use crate::state::{Kind, MultiIndex, PolynomialState, TOL_NORM};
use crate::univariate::{Algebra, Basis, SignalConvention};

/// A three-dimensional protocol: n+1 processing operators in U(3) around n
/// calls to diag(1, a, b).
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol3D {
    pub ops: Vec<UnitaryMatrix>,
}

impl Protocol3D {
    pub fn new(ops: Vec<UnitaryMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::ShapeMismatch("protocol has no operators".into()));
        }
        if let Some(bad) = ops.iter().find(|u| u.dim() != 3) {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: bad.dim(),
            });
        }
        Ok(Self { ops })
    }

    pub fn signal_calls(&self) -> usize {
        self.ops.len() - 1
    }
}

/// Which variable a classical-choice step blends in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn var(self) -> usize {
        match self {
            Choice::A => 0,
            Choice::B => 1,
        }
    }
}

/// Per-step variable selection of a classical-choice protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceVector(Vec<Choice>);

impl ChoiceVector {
    pub fn new(choices: Vec<Choice>) -> Self {
        Self(choices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Choice> + '_ {
        self.0.iter().copied()
    }

    /// Multiplicity n_k of each variable in the choice vector.
    pub fn counts(&self) -> (usize, usize) {
        let a = self.0.iter().filter(|c| **c == Choice::A).count();
        (a, self.0.len() - a)
    }
}

/// A two-dimensional classical-choice protocol: n+1 processing operators in
/// U(2), one signal choice per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol2DChoice {
    pub ops: Vec<UnitaryMatrix>,
    pub choices: ChoiceVector,
    pub picture: Kind,
}

impl Protocol2DChoice {
    pub fn new(ops: Vec<UnitaryMatrix>, choices: ChoiceVector, picture: Kind) -> Result<Self> {
        if ops.len() != choices.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} ops for {} choices (need one more op than choices)",
                ops.len(),
                choices.len()
            )));
        }
        if let Some(bad) = ops.iter().find(|u| u.dim() != 2) {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: bad.dim(),
            });
        }
        Ok(Self {
            ops,
            choices,
            picture,
        })
    }

    pub fn signal_calls(&self) -> usize {
        self.choices.len()
    }
}

/// The permutation |0⟩⟨0| + |1⟩⟨2| + |2⟩⟨1| that swaps the roles of a and b.
pub fn permutation_swap_ab() -> UnitaryMatrix {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    UnitaryMatrix::new_with_tolerance(3, vec![o, z, z, z, z, o, z, o, z], 1e-12)
        .expect("permutation is unitary")
}

/// Embeds a 2x2 operator as the block matrix acting on span{|0⟩,|1⟩} and
/// fixing |2⟩.
pub fn block_embed(op: &UnitaryMatrix) -> Result<UnitaryMatrix> {
    if op.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: op.dim(),
        });
    }
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    UnitaryMatrix::new_with_tolerance(
        3,
        vec![
            op.entry(0, 0),
            op.entry(0, 1),
            z,
            op.entry(1, 0),
            op.entry(1, 1),
            z,
            z,
            z,
            o,
        ],
        1e-10,
    )
}

type Lattice3 = BTreeMap<(i64, i64), [Complex64; 3]>;

fn lattice_to_state(lattice: Lattice3) -> Result<PolynomialState> {
    PolynomialState::new(
        2,
        3,
        Kind::Analytic,
        lattice.into_iter().map(|((k, h), v)| {
            (
                MultiIndex::bi(k, h),
                CVector::new(v.to_vec()).expect("finite"),
            )
        }),
    )
}

/// Expands a three-dimensional protocol into its polynomial state.
pub fn evaluate_protocol_3d(p: &Protocol3D) -> Result<PolynomialState> {
    let mut lattice: Lattice3 = BTreeMap::new();
    let start = p.ops[0].apply(&CVector::basis(3, 0))?;
    lattice.insert((0, 0), [start.get(0), start.get(1), start.get(2)]);
    for op in &p.ops[1..] {
        // signal call: component 1 gains an a, component 2 gains a b
        let mut shifted: Lattice3 = BTreeMap::new();
        for (&(k, h), v) in &lattice {
            shifted.entry((k, h)).or_insert_with(Default::default)[0] += v[0];
            shifted.entry((k + 1, h)).or_insert_with(Default::default)[1] += v[1];
            shifted.entry((k, h + 1)).or_insert_with(Default::default)[2] += v[2];
        }
        for v in shifted.values_mut() {
            let applied = op.apply(&CVector::new(v.to_vec()).expect("finite"))?;
            *v = [applied.get(0), applied.get(1), applied.get(2)];
        }
        lattice = shifted;
    }
    lattice_to_state(lattice)
}

/// Expands a classical-choice protocol into its polynomial state.
pub fn evaluate_protocol_2d_choice(p: &Protocol2DChoice) -> Result<PolynomialState> {
    let mut lattice: BTreeMap<(i64, i64), [Complex64; 2]> = BTreeMap::new();
    let start = p.ops[0].apply(&CVector::basis(2, 0))?;
    lattice.insert((0, 0), [start.get(0), start.get(1)]);
    for (op, choice) in p.ops[1..].iter().zip(p.choices.iter()) {
        let step = |idx: (i64, i64), delta: i64| -> (i64, i64) {
            match choice {
                Choice::A => (idx.0 + delta, idx.1),
                Choice::B => (idx.0, idx.1 + delta),
            }
        };
        let mut shifted: BTreeMap<(i64, i64), [Complex64; 2]> = BTreeMap::new();
        for (&idx, v) in &lattice {
            let low = match p.picture {
                Kind::Analytic => idx,
                Kind::Laurent => step(idx, -1),
            };
            shifted.entry(low).or_insert_with(Default::default)[0] += v[0];
            shifted.entry(step(idx, 1)).or_insert_with(Default::default)[1] += v[1];
        }
        for v in shifted.values_mut() {
            let applied = op.apply(&CVector::new(v.to_vec()).expect("finite"))?;
            *v = [applied.get(0), applied.get(1)];
        }
        lattice = shifted;
    }
    PolynomialState::new(
        2,
        2,
        p.picture,
        lattice.into_iter().map(|((k, h), v)| {
            (
                MultiIndex::bi(k, h),
                CVector::new(v.to_vec()).expect("finite"),
            )
        }),
    )
}

/// Rewrites an analytic classical-choice protocol as a three-dimensional one
/// with block processing operators. Steps that blend b conjugate the signal
/// operator with the a↔b permutation; those permutations merge into the
/// neighboring processing operators. The embedded protocol evaluates to the
/// same state with identically zero third components.
pub fn embed_2d_in_3d(p: &Protocol2DChoice) -> Result<Protocol3D> {
    if p.picture != Kind::Analytic {
        return Err(Error::InvalidConvention(
            "only analytic choice protocols embed directly; shift a Laurent state first".into(),
        ));
    }
    let s = permutation_swap_ab();
    let n = p.choices.len();
    let t = |j: usize| -> UnitaryMatrix {
        // permutation applied around the j-th signal call (1-based)
        match p.choices.iter().nth(j - 1).expect("in range") {
            Choice::A => UnitaryMatrix::identity(3),
            Choice::B => s.clone(),
        }
    };
    let mut ops: Vec<UnitaryMatrix> = Vec::with_capacity(p.ops.len());
    for (j, op) in p.ops.iter().enumerate() {
        let block = block_embed(op)?;
        let merged = if n == 0 {
            block
        } else if j == 0 {
            t(1).matmul(&block)?
        } else if j == n {
            block.matmul(&t(n))?
        } else {
            t(j + 1).matmul(&block)?.matmul(&t(j))?
        };
        ops.push(merged);
    }
    Protocol3D::new(ops)
}

const TOL_STRUCTURE: f64 = 1e-9;

fn require_bivariate(state: &PolynomialState, dim: usize) -> Result<()> {
    if state.num_vars() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected a bivariate state, got {} variable(s)",
            state.num_vars()
        )));
    }
    if state.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: state.dim(),
        });
    }
    Ok(())
}

/// Checks the necessary conditions for a state to come out of a
/// classical-choice protocol with the given choices: per-variable degree
/// bounds, per-variable parity (Laurent picture), and the structural
/// condition of the restricted-algebra conventions.
pub fn check_necessary_mqsp(
    state: &PolynomialState,
    choices: &ChoiceVector,
    convention: &SignalConvention,
) -> Result<DiagnosticReport> {
    require_bivariate(state, 2)?;
    if convention.picture != state.kind() {
        return Err(Error::InvalidConvention(format!(
            "state is {}, convention expects {}",
            state.kind(),
            convention.picture
        )));
    }
    let mut report = DiagnosticReport::new("check-necessary-mqsp");
    let (n_a, n_b) = choices.counts();
    let bounds = [(0usize, n_a as i64, "a"), (1usize, n_b as i64, "b")];

    for (var, n_k, name) in bounds {
        let offender = state.terms().find(|(idx, _)| {
            let k = idx.get(var);
            match state.kind() {
                Kind::Analytic => k > n_k,
                Kind::Laurent => k.abs() > n_k,
            }
        });
        let id = format!("mqsp-i-degree-{name}");
        match offender {
            None => report.pass(id),
            Some((idx, _)) => report.fail(
                id,
                Witness::Exponent {
                    exp: idx.exponents().to_vec(),
                },
            ),
        }
    }

    if state.kind() == Kind::Laurent {
        for (var, n_k, name) in bounds {
            let offender = state
                .terms()
                .find(|(idx, _)| (idx.get(var) - n_k).rem_euclid(2) != 0);
            let id = format!("mqsp-ii-parity-{name}");
            match offender {
                None => report.pass(id),
                Some((idx, _)) => report.fail(
                    id,
                    Witness::Exponent {
                        exp: idx.exponents().to_vec(),
                    },
                ),
            }
        }
    }

    if convention.algebra != Algebra::FullSu2 {
        match convention.basis {
            Basis::Wz => {
                let offender = state.terms().find(|(_, coeff)| {
                    coeff.get(0).im.abs().max(coeff.get(1).re.abs()) > TOL_STRUCTURE
                });
                match offender {
                    None => report.pass("mqsp-iii-z-real-structure"),
                    Some((idx, _)) => report.fail(
                        "mqsp-iii-z-real-structure",
                        Witness::Exponent {
                            exp: idx.exponents().to_vec(),
                        },
                    ),
                }
            }
            Basis::Wx => {
                let reflect = |idx: &MultiIndex| -> MultiIndex {
                    match state.kind() {
                        Kind::Laurent => idx.neg(),
                        Kind::Analytic => MultiIndex::bi(
                            n_a as i64 - idx.get(0),
                            n_b as i64 - idx.get(1),
                        ),
                    }
                };
                let mut indices: std::collections::BTreeSet<MultiIndex> =
                    state.terms().map(|(idx, _)| idx.clone()).collect();
                indices.extend(state.terms().map(|(idx, _)| reflect(idx)));
                let mut failed = None;
                for idx in &indices {
                    let here = state.coeff_or_zero(idx);
                    let there = state.coeff_or_zero(&reflect(idx));
                    let dev = (here.get(0) - there.get(0))
                        .norm()
                        .max((here.get(1) + there.get(1)).norm());
                    if dev > TOL_STRUCTURE {
                        failed = Some(idx.clone());
                        break;
                    }
                }
                match failed {
                    None => report.pass("mqsp-iii-x-reciprocal-symmetry"),
                    Some(idx) => report.fail(
                        "mqsp-iii-x-reciprocal-symmetry",
                        Witness::ExponentPair {
                            first: idx.exponents().to_vec(),
                            second: reflect(&idx).exponents().to_vec(),
                        },
                    ),
                }
            }
        }
    }

    report.overall = Some(if report.all_passed() {
        "pass".into()
    } else {
        "fail".into()
    });
    Ok(report)
}

/// The three triangle sides of a degree-n analytic state: a-axis, b-axis,
/// diagonal. Missing entries are zero vectors, which never constrain a span.
fn triangle_sides(state: &PolynomialState, n: i64) -> [Vec<CVector>; 3] {
    let collect = |indices: Vec<MultiIndex>| -> Vec<CVector> {
        indices
            .into_iter()
            .filter_map(|idx| state.coefficient(&idx).cloned())
            .collect()
    };
    let a_axis = collect((0..=n).map(|k| MultiIndex::bi(k, 0)).collect());
    let b_axis = collect((0..=n).map(|k| MultiIndex::bi(0, k)).collect());
    let diagonal = collect((0..=n).map(|k| MultiIndex::bi(k, n - k)).collect());
    [a_axis, b_axis, diagonal]
}

struct SideSolveFailure {
    rank_a: usize,
    rank_b: usize,
    rank_d: usize,
    detail: String,
}

/// Finds an orthonormal basis ψ_0, ψ_1, ψ_2 with ψ_0 ⊥ diagonal span,
/// ψ_1 ⊥ b-axis span, ψ_2 ⊥ a-axis span, or explains why none exists.
///
/// Forced choices (one-dimensional residual complements) propagate first.
/// When all three complements stay two-dimensional — every span a single
/// line — picking an arbitrary vector can fail even though a basis exists,
/// so that case is solved exactly through the Bloch-sphere parametrization
/// of projectors in the plane.
fn solve_side_basis(
    sides: &[Vec<CVector>; 3],
    tol_rank: f64,
) -> std::result::Result<[CVector; 3], SideSolveFailure> {
    let span = |vs: &Vec<CVector>| rank_span(vs, tol_rank).expect("uniform dims");
    let (rank_a, basis_a) = span(&sides[0]);
    let (rank_b, basis_b) = span(&sides[1]);
    let (rank_d, basis_d) = span(&sides[2]);
    let fail = |detail: String| SideSolveFailure {
        rank_a,
        rank_b,
        rank_d,
        detail,
    };

    // slot order: ψ_0 (diagonal), ψ_1 (b-axis), ψ_2 (a-axis)
    let span_bases = [basis_d, basis_b, basis_a.clone()];
    let side_names = ["diagonal", "b-axis", "a-axis"];
    let complements: Vec<Vec<CVector>> = span_bases
        .iter()
        .map(|b| {
            crate::linalg::orthogonal_complement(3, b, tol_rank).expect("uniform dims")
        })
        .collect();
    if let Some(i) = complements.iter().position(|c| c.is_empty()) {
        return Err(fail(format!(
            "the {} span already covers the whole space",
            side_names[i]
        )));
    }

    let mut chosen: [Option<CVector>; 3] = [None, None, None];
    loop {
        // residual complements after deflating against everything chosen
        let picked: Vec<CVector> = chosen.iter().flatten().cloned().collect();
        if picked.len() == 3 {
            break;
        }
        let mut residuals: Vec<(usize, Vec<CVector>)> = Vec::new();
        for (i, comp) in complements.iter().enumerate() {
            if chosen[i].is_some() {
                continue;
            }
            let deflated: Vec<CVector> = comp
                .iter()
                .map(|v| {
                    let mut r = v.clone();
                    for q in &picked {
                        let c = inner(q, &r).expect("dim 3");
                        r = r.sub(&q.scaled(c));
                    }
                    r
                })
                .collect();
            let (_, basis) = rank_span(&deflated, tol_rank).expect("uniform dims");
            if basis.is_empty() {
                return Err(fail(format!(
                    "no direction orthogonal to the {} span remains",
                    side_names[i]
                )));
            }
            residuals.push((i, basis));
        }
        residuals.sort_by_key(|(i, basis)| (basis.len(), *i));

        let (slot, basis) = &residuals[0];
        if basis.len() == 1 || residuals.len() < 3 || residuals.iter().any(|(_, b)| b.len() != 2) {
            // forced choice, or a free choice that cannot lose
            chosen[*slot] = Some(basis[0].clone());
            continue;
        }

        // all three spans are single lines: solve the plane constraint exactly
        let b_hat = span_bases[1][0].clone();
        let a_hat = span_bases[2][0].clone();
        let plane = &complements[0];
        match bloch_plane_choice(plane, &b_hat, &a_hat) {
            Some(chi) => chosen[0] = Some(chi),
            None => {
                return Err(fail(
                    "no orthonormal basis satisfies all three side constraints".into(),
                ))
            }
        }
    }

    let result: Vec<CVector> = chosen.into_iter().map(|c| c.expect("chosen")).collect();
    // final audit: orthonormality and the side constraints themselves
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        worst = worst.max((result[i].norm() - 1.0).abs());
        for j in (i + 1)..3 {
            worst = worst.max(inner(&result[i], &result[j]).expect("dim 3").norm());
        }
        for s in &sides[[2, 1, 0][i]] {
            worst = worst.max(inner(&result[i], s).expect("dim 3").norm() / s.norm().max(1.0));
        }
    }
    if worst > 1e-7 {
        return Err(fail(format!(
            "candidate basis violates the side constraints by {worst:.3e}"
        )));
    }
    Ok([result[0].clone(), result[1].clone(), result[2].clone()])
}

/// Exact solver for the all-spans-rank-one case. In the plane orthogonal to
/// the diagonal line, the constraint ⟨â|χ⟩⟨χ|b̂⟩ = ⟨â|b̂⟩ is affine in the
/// Bloch vector of the projector |χ⟩⟨χ|; intersecting the resulting pair of
/// real planes with the unit sphere either produces χ = ψ_0 or proves that
/// no basis exists.
fn bloch_plane_choice(plane: &[CVector], b_hat: &CVector, a_hat: &CVector) -> Option<CVector> {
    let u = &plane[0];
    let v = &plane[1];
    let a_p = [
        inner(u, a_hat).expect("dim 3"),
        inner(v, a_hat).expect("dim 3"),
    ];
    let b_p = [
        inner(u, b_hat).expect("dim 3"),
        inner(v, b_hat).expect("dim 3"),
    ];
    let t = inner(a_hat, b_hat).expect("dim 3");
    let i = Complex64::new(0.0, 1.0);
    let ip_ab = a_p[0].conj() * b_p[0] + a_p[1].conj() * b_p[1];
    let m = [
        a_p[0].conj() * b_p[1] + a_p[1].conj() * b_p[0],
        i * (a_p[1].conj() * b_p[0] - a_p[0].conj() * b_p[1]),
        a_p[0].conj() * b_p[0] - a_p[1].conj() * b_p[1],
    ];
    let tau = t * 2.0 - ip_ab;
    let rows = [
        [m[0].re, m[1].re, m[2].re],
        [m[0].im, m[1].im, m[2].im],
    ];
    let rhs = [tau.re, tau.im];

    let dot = |x: &[f64; 3], y: &[f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let g11 = dot(&rows[0], &rows[0]);
    let g12 = dot(&rows[0], &rows[1]);
    let g22 = dot(&rows[1], &rows[1]);
    let det = g11 * g22 - g12 * g12;
    let scale = g11.max(g22).max(1e-300);

    // minimum-norm solution p of rows·n = rhs
    let mut p = [0.0f64; 3];
    if det > 1e-12 * scale * scale {
        let l1 = (rhs[0] * g22 - rhs[1] * g12) / det;
        let l2 = (rhs[1] * g11 - rhs[0] * g12) / det;
        for k in 0..3 {
            p[k] = l1 * rows[0][k] + l2 * rows[1][k];
        }
    } else if scale > 1e-24 {
        // effectively one independent equation
        let (row, c) = if g11 >= g22 {
            (rows[0], rhs[0])
        } else {
            (rows[1], rhs[1])
        };
        let nrm2 = dot(&row, &row);
        for k in 0..3 {
            p[k] = row[k] * c / nrm2;
        }
        // the discarded equation must be consistent
        let other = if g11 >= g22 { 1 } else { 0 };
        if (dot(&rows[other], &p) - rhs[other]).abs() > 1e-8 {
            return None;
        }
    } else {
        // both equations are trivial; solvable only with trivial data
        if rhs[0].abs().max(rhs[1].abs()) > 1e-10 {
            return None;
        }
    }

    let p_norm2 = dot(&p, &p);
    if p_norm2 > 1.0 + 1e-9 {
        return None;
    }

    // direction along the solution line, orthogonal to both equation rows
    let cross = [
        rows[0][1] * rows[1][2] - rows[0][2] * rows[1][1],
        rows[0][2] * rows[1][0] - rows[0][0] * rows[1][2],
        rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
    ];
    let cross_norm = dot(&cross, &cross).sqrt();
    let dir = if cross_norm > 1e-9 * scale.max(1.0) {
        [
            cross[0] / cross_norm,
            cross[1] / cross_norm,
            cross[2] / cross_norm,
        ]
    } else {
        // null space is at least two-dimensional; any direction orthogonal
        // to the dominant row works
        let row = if g11 >= g22 { rows[0] } else { rows[1] };
        let mut d = if row[0].abs() < 0.9 * dot(&row, &row).sqrt().max(1e-300) {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let r2 = dot(&row, &row);
        if r2 > 1e-24 {
            let c = dot(&d, &row) / r2;
            for k in 0..3 {
                d[k] -= c * row[k];
            }
        }
        let n = dot(&d, &d).sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    };

    let s = (1.0 - p_norm2).max(0.0).sqrt();
    let mut n_vec = [p[0] + s * dir[0], p[1] + s * dir[1], p[2] + s * dir[2]];
    let n_len = dot(&n_vec, &n_vec).sqrt();
    for k in 0..3 {
        n_vec[k] /= n_len;
    }

    // Bloch vector back to a plane state
    let theta = n_vec[2].clamp(-1.0, 1.0).acos();
    let phi = f64::atan2(n_vec[1], n_vec[0]);
    let x0 = Complex64::new((theta / 2.0).cos(), 0.0);
    let x1 = Complex64::new(phi.cos(), phi.sin()) * (theta / 2.0).sin();
    let chi = u.scaled(x0).add(&v.scaled(x1));

    // audit the original constraint
    let f = inner(a_hat, &chi).expect("dim 3") * inner(&chi, b_hat).expect("dim 3") - t;
    if f.norm() > 1e-7 {
        return None;
    }
    Some(chi)
}

const TOL_LEAK: f64 = 1e-9;

/// Applies the inverse signal operator diag(1, a, b)† to a state whose top
/// processing operator was already undone. Component 0 must vanish on the
/// degree-n diagonal and components 1, 2 on their opposite axes; that mass is
/// measured as leakage and must stay below `tol`.
fn unshift_3d(state: &PolynomialState, tol: f64) -> Result<PolynomialState> {
    let n = state.total_degree();
    let mut out: Lattice3 = BTreeMap::new();
    let mut leaked = 0.0f64;
    for (idx, v) in state.terms() {
        let (k, h) = (idx.get(0), idx.get(1));
        if k + h == n && n > 0 {
            leaked += v.get(0).norm_sqr();
        } else {
            out.entry((k, h)).or_insert_with(Default::default)[0] += v.get(0);
        }
        if k == 0 {
            leaked += v.get(1).norm_sqr();
        } else {
            out.entry((k - 1, h)).or_insert_with(Default::default)[1] += v.get(1);
        }
        if h == 0 {
            leaked += v.get(2).norm_sqr();
        } else {
            out.entry((k, h - 1)).or_insert_with(Default::default)[2] += v.get(2);
        }
    }
    let leaked = leaked.sqrt();
    if leaked > tol {
        return Err(Error::DegreeReduction { leaked });
    }
    lattice_to_state(out)
}

fn require_extractable_shape(state: &PolynomialState) -> Result<i64> {
    require_bivariate(state, 3)?;
    if state.kind() != Kind::Analytic {
        return Err(Error::BadSupport(
            "expected an analytic state (negative exponents never arise from this protocol)"
                .into(),
        ));
    }
    Ok(state.total_degree())
}

/// Extracts one protocol step: finds A such that applying A† and the inverse
/// signal operator lowers the degree by one, returning A and the lowered
/// state. The state must be normalized, analytic, and of degree at least 1.
pub fn extract_step_3d(state: &PolynomialState) -> Result<(UnitaryMatrix, PolynomialState)> {
    let n = require_extractable_shape(state)?;
    if n < 1 {
        return Err(Error::BadSupport(
            "degree must be at least 1 to extract a step".into(),
        ));
    }
    let residual = state.normalization_residual();
    if residual > TOL_NORM {
        return Err(Error::NotNormalized { residual });
    }
    let sides = triangle_sides(state, n);
    let [psi0, psi1, psi2] = solve_side_basis(&sides, TOL_RANK).map_err(|f| {
        Error::NotLowerable {
            rank_a: f.rank_a,
            rank_b: f.rank_b,
            rank_d: f.rank_d,
            detail: f.detail,
        }
    })?;
    let a = UnitaryMatrix::from_columns(&[psi0, psi1, psi2])?;
    let lowered = unshift_3d(&state.apply_unitary(&a.adjoint())?, TOL_LEAK)?;
    Ok((a, lowered))
}

/// Reports the single-step extractability conditions: one verdict per
/// triangle side (is there room orthogonal to its span?) plus one for the
/// existence of a joint orthonormal basis.
pub fn check_extractable(state: &PolynomialState) -> Result<DiagnosticReport> {
    let n = require_extractable_shape(state)?;
    let mut report = DiagnosticReport::new("check-extractable");
    if n < 1 {
        report.overall = Some("degree-zero".into());
        return Ok(report);
    }
    let sides = triangle_sides(state, n);
    let ranks: Vec<usize> = sides
        .iter()
        .map(|s| rank_span(s, TOL_RANK).expect("uniform dims").0)
        .collect();
    for (rank, id) in ranks
        .iter()
        .zip(["a-axis-complement", "b-axis-complement", "diagonal-complement"])
    {
        // rank < 3 means some direction survives orthogonal to the span
        if *rank < 3 {
            report.pass_with(id, Witness::Rank { rank: *rank });
        } else {
            report.fail(id, Witness::Rank { rank: *rank });
        }
    }
    match solve_side_basis(&sides, TOL_RANK) {
        Ok(_) => {
            report.pass("orthonormal-basis-exists");
            report.overall = Some("lowerable".into());
        }
        Err(f) => {
            report.fail(
                "orthonormal-basis-exists",
                Witness::Note { text: f.detail },
            );
            report.overall = Some("not-lowerable".into());
        }
    }
    Ok(report)
}

/// Endpoint norms below this count as zero for the decomposition
/// precondition.
pub const TOL_ENDPOINT: f64 = 1e-9;

/// Decomposes a normalized analytic state with non-vanishing endpoint
/// coefficients (of 1, a^n, b^n) into a three-dimensional protocol.
///
/// Normalization forces the three endpoints to be pairwise orthogonal, and
/// they pin the extraction basis directly: ψ_0 ∝ γ_{0,0}, ψ_1 ∝ γ_{n,0},
/// ψ_2 ∝ γ_{0,n}. The induction bottoms out at degree zero with a completion
/// of the remaining unit vector. A vanishing endpoint is reported as
/// [`Error::ZeroEndpoint`]; use [`extract_step_3d`] for best-effort lowering
/// in that case.
pub fn decompose_3d(state: &PolynomialState) -> Result<Protocol3D> {
    require_extractable_shape(state)?;
    let residual = state.normalization_residual();
    if residual > TOL_NORM {
        return Err(Error::NotNormalized { residual });
    }
    match decompose_on(dd_lattice_3d(state)) {
        // a failed degree reduction usually means the input's own
        // normalization deviation got amplified through the levels; project
        // it onto the manifold and try once more
        Err(Error::DegreeReduction { .. }) => {
            let mut lattice = dd_lattice_3d(state);
            crate::manifold::project(&mut lattice);
            decompose_on(lattice)
        }
        other => other,
    }
}

fn decompose_on(mut lattice: DdLattice3) -> Result<Protocol3D> {
    let mut ops_rev: Vec<UnitaryMatrix> = Vec::new();
    dd_prune_3d(&mut lattice);
    loop {
        if lattice.is_empty() {
            return Err(Error::NotNormalized { residual: 1.0 });
        }
        let n = dd_degree_3d(&lattice);
        if n == 0 {
            let v = lattice.get(&(0, 0)).copied().unwrap_or([DdC::ZERO; 3]);
            if dd::norm_sqr(&v).hi <= TOL_ENDPOINT * TOL_ENDPOINT {
                return Err(Error::ZeroEndpoint {
                    index: (0, 0),
                    norm: dd::norm_sqr(&v).sqrt().value(),
                });
            }
            let unit = dd::normalized(&v);
            ops_rev.push(complete_to_unitary(&[dd_round_vec3(&unit)])?);
            break;
        }
        let cols = dd_corner_columns(&lattice, n).or_else(|e| match e {
            // a corner many orders below its neighbors has a noisy
            // direction; the side-span solver reads the same basis off
            // better-conditioned data
            Error::NotOrthonormal { .. } => dd_side_columns(&lattice, n),
            other => Err(other),
        })?;
        dd_apply_adjoint_3d(&mut lattice, &cols);
        lattice = dd_unshift_3d(&lattice, n)?;
        dd_prune_3d(&mut lattice);
        ops_rev.push(UnitaryMatrix::from_columns(&[
            dd_round_vec3(&cols[0]),
            dd_round_vec3(&cols[1]),
            dd_round_vec3(&cols[2]),
        ])?);
    }
    ops_rev.reverse();
    Protocol3D::new(ops_rev)
}

/// Coefficient lattice of the decomposition recursion in double-double form;
/// like the univariate peeling, each level amplifies normalization error by
/// roughly the inverse corner norm, so per-step noise must stay far below it.
type DdLattice3 = BTreeMap<(i64, i64), [DdC; 3]>;

fn dd_lattice_3d(state: &PolynomialState) -> DdLattice3 {
    state
        .terms()
        .map(|(idx, v)| {
            (
                (idx.get(0), idx.get(1)),
                [
                    DdC::from_f64(v.get(0).re, v.get(0).im),
                    DdC::from_f64(v.get(1).re, v.get(1).im),
                    DdC::from_f64(v.get(2).re, v.get(2).im),
                ],
            )
        })
        .collect()
}

fn dd_prune_3d(lattice: &mut DdLattice3) {
    lattice.retain(|_, v| dd::norm_sqr(v).hi > 1e-50);
}

fn dd_degree_3d(lattice: &DdLattice3) -> i64 {
    lattice.keys().map(|&(k, h)| k + h).max().unwrap_or(0)
}

fn dd_round_vec3(v: &[DdC; 3]) -> CVector {
    CVector::new(vec![v[0].value(), v[1].value(), v[2].value()]).expect("finite")
}

fn dd_apply_adjoint_3d(lattice: &mut DdLattice3, cols: &[[DdC; 3]; 3]) {
    for v in lattice.values_mut() {
        *v = [
            dd::inner(&cols[0], v),
            dd::inner(&cols[1], v),
            dd::inner(&cols[2], v),
        ];
    }
}

/// Inverse signal call diag(1, a, b)†; mass landing outside the triangle of
/// a degree-(n-1) state is leakage.
fn dd_unshift_3d(lattice: &DdLattice3, n: i64) -> Result<DdLattice3> {
    let valid = |k: i64, h: i64| k >= 0 && h >= 0 && k + h < n;
    let mut out: DdLattice3 = DdLattice3::new();
    let mut leaked = Dd::ZERO;
    for (&(k, h), v) in lattice {
        let targets = [(k, h), (k - 1, h), (k, h - 1)];
        for (comp, &(tk, th)) in targets.iter().enumerate() {
            if valid(tk, th) {
                let slot = out.entry((tk, th)).or_insert([DdC::ZERO; 3]);
                slot[comp] = slot[comp].add(v[comp]);
            } else {
                leaked = leaked.add(v[comp].norm_sqr());
            }
        }
    }
    let leaked = leaked.sqrt().value();
    if leaked > TOL_LEAK {
        return Err(Error::DegreeReduction { leaked });
    }
    Ok(out)
}

/// The unit vector orthogonal to two orthonormal vectors: the conjugated
/// cross product.
fn dd_cross_conj(u: &[DdC; 3], v: &[DdC; 3]) -> [DdC; 3] {
    [
        u[1].mul(v[2]).sub(u[2].mul(v[1])).conj(),
        u[2].mul(v[0]).sub(u[0].mul(v[2])).conj(),
        u[0].mul(v[1]).sub(u[1].mul(v[0])).conj(),
    ]
}

/// Columns for one decomposition step, pinned to the three corner
/// coefficients: the two largest corners anchor their columns, the third
/// column is the direction they force, phase-aligned to the last corner.
fn dd_corner_columns(lattice: &DdLattice3, n: i64) -> Result<[[DdC; 3]; 3]> {
    let corner_indices = [(0i64, 0i64), (n, 0), (0, n)];
    let vectors: Vec<[DdC; 3]> = corner_indices
        .iter()
        .map(|idx| lattice.get(idx).copied().unwrap_or([DdC::ZERO; 3]))
        .collect();
    let norms: Vec<f64> = vectors.iter().map(|v| dd::norm_sqr(v).sqrt().value()).collect();
    for (idx, norm) in corner_indices.iter().zip(&norms) {
        if *norm <= TOL_ENDPOINT {
            return Err(Error::ZeroEndpoint {
                index: *idx,
                norm: *norm,
            });
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let first = dd::normalized(&vectors[order[0]]);
    let deflated = dd::deflate(&vectors[order[1]], &first);
    let deflated_norm = dd::norm_sqr(&deflated).sqrt().value();
    if deflated_norm < 0.5 * norms[order[1]] {
        return Err(Error::NotOrthonormal {
            residual: 1.0 - deflated_norm / norms[order[1]],
        });
    }
    let second = dd::normalized(&deflated);
    let third = dd::phase_align(
        &dd_cross_conj(&first, &second),
        dd::inner(&dd_cross_conj(&first, &second), &vectors[order[2]]),
    );
    let mut cols = [third, third, third];
    cols[order[0]] = first;
    cols[order[1]] = second;
    Ok(cols)
}

/// Columns for one decomposition step from the general side-span solver,
/// re-orthonormalized in double-double form.
fn dd_side_columns(lattice: &DdLattice3, n: i64) -> Result<[[DdC; 3]; 3]> {
    let snapshot = PolynomialState::new(
        2,
        3,
        Kind::Analytic,
        lattice
            .iter()
            .map(|(&(k, h), v)| (MultiIndex::bi(k, h), dd_round_vec3(v))),
    )?;
    let sides = triangle_sides(&snapshot, n);
    let [psi0, psi1, psi2] = solve_side_basis(&sides, TOL_RANK).map_err(|f| {
        Error::NotLowerable {
            rank_a: f.rank_a,
            rank_b: f.rank_b,
            rank_d: f.rank_d,
            detail: f.detail,
        }
    })?;
    let lift = |v: &CVector| -> [DdC; 3] {
        [
            DdC::from_f64(v.get(0).re, v.get(0).im),
            DdC::from_f64(v.get(1).re, v.get(1).im),
            DdC::from_f64(v.get(2).re, v.get(2).im),
        ]
    };
    let c0 = dd::normalized(&lift(&psi0));
    let c1 = dd::normalized(&dd::deflate(&lift(&psi1), &c0));
    let c2 = dd::phase_align(
        &dd_cross_conj(&c0, &c1),
        dd::inner(&dd_cross_conj(&c0, &c1), &lift(&psi2)),
    );
    Ok([c0, c1, c2])
}

/// Applies the span test: when both axis coefficient families span the full
/// two-dimensional space, no protocol produces the state. The test is
/// one-directional, so anything else is inconclusive.
pub fn check_unimplementable(state: &PolynomialState) -> Result<DiagnosticReport> {
    check_unimplementable_with(state, TOL_RANK)
}

/// As [`check_unimplementable`] with an explicit rank tolerance.
pub fn check_unimplementable_with(
    state: &PolynomialState,
    tol_rank: f64,
) -> Result<DiagnosticReport> {
    require_bivariate(state, 2)?;
    let n = state.total_degree();
    let collect = |axis: usize| -> Vec<CVector> {
        (0..=n)
            .filter_map(|k| {
                let idx = if axis == 0 {
                    MultiIndex::bi(k, 0)
                } else {
                    MultiIndex::bi(0, k)
                };
                state.coefficient(&idx).cloned()
            })
            .collect()
    };
    let (rank_a, _) = rank_span(&collect(0), tol_rank)?;
    let (rank_b, _) = rank_span(&collect(1), tol_rank)?;
    let mut report = DiagnosticReport::new("check-unimplementable");
    for (rank, id) in [(rank_a, "a-axis-span-full"), (rank_b, "b-axis-span-full")] {
        if rank == 2 {
            report.pass_with(id, Witness::Rank { rank });
        } else {
            report.fail(id, Witness::Rank { rank });
        }
    }
    report.overall = Some(if rank_a == 2 && rank_b == 2 {
        "not-implementable".into()
    } else {
        "inconclusive".into()
    });
    Ok(report)
}

/// The inapproximability quantity and its witnesses.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QGammaResult {
    /// min of the two axis maxima.
    pub q: f64,
    /// Max |det| over a-axis coefficient pairs, with its exponent pair.
    pub max_a: f64,
    pub argmax_a: (usize, usize),
    /// Max |det| over b-axis coefficient pairs, with its exponent pair.
    pub max_b: f64,
    pub argmax_b: (usize, usize),
    /// Whether the input already had unit coefficient mass.
    pub normalized_input: bool,
}

fn axis_sweep(state: &PolynomialState) -> Result<(f64, (usize, usize), f64, (usize, usize))> {
    let n = state.total_degree().max(0) as usize;
    let axis = |which: usize| -> Vec<CVector> {
        (0..=n as i64)
            .map(|k| {
                let idx = if which == 0 {
                    MultiIndex::bi(k, 0)
                } else {
                    MultiIndex::bi(0, k)
                };
                state.coeff_or_zero(&idx)
            })
            .collect()
    };
    let sweep = |vs: &[CVector]| -> Result<(f64, (usize, usize))> {
        let mut best = 0.0f64;
        let mut arg = (0usize, if n > 0 { 1 } else { 0 });
        for x in 0..vs.len() {
            for y in (x + 1)..vs.len() {
                let d = det2(&vs[x], &vs[y])?.norm();
                if d > best {
                    best = d;
                    arg = (x, y);
                }
            }
        }
        Ok((best, arg))
    };
    let (max_a, arg_a) = sweep(&axis(0))?;
    let (max_b, arg_b) = sweep(&axis(1))?;
    Ok((max_a, arg_a, max_b, arg_b))
}

/// q(γ) of the coefficients exactly as given, with no rescaling or
/// normalization check. This is the quantity the perturbation-stability
/// bound |q(γ) - q(γ')| < 4ε speaks about.
pub fn q_gamma_raw(state: &PolynomialState) -> Result<QGammaResult> {
    require_bivariate(state, 2)?;
    if state.kind() != Kind::Analytic {
        return Err(Error::BadSupport("q(γ) is defined for analytic states".into()));
    }
    let (max_a, argmax_a, max_b, argmax_b) = axis_sweep(state)?;
    Ok(QGammaResult {
        q: max_a.min(max_b),
        max_a,
        argmax_a,
        max_b,
        argmax_b,
        normalized_input: state.is_normalized(TOL_NORM),
    })
}

/// q(γ) after rescaling the coefficients to unit mass. The rescaled family
/// must actually be a polynomial state — every off-zero autocorrelation lag
/// must vanish — otherwise [`Error::NotAPolynomialState`] is returned.
pub fn q_gamma(state: &PolynomialState) -> Result<QGammaResult> {
    q_gamma_with(state, TOL_NORM)
}

/// As [`q_gamma`] with an explicit residual tolerance.
pub fn q_gamma_with(state: &PolynomialState, tol_norm: f64) -> Result<QGammaResult> {
    require_bivariate(state, 2)?;
    if state.kind() != Kind::Analytic {
        return Err(Error::BadSupport("q(γ) is defined for analytic states".into()));
    }
    let mass: f64 = state.terms().map(|(_, v)| v.norm_sqr()).sum();
    if mass <= 0.0 {
        return Err(Error::NotAPolynomialState { residual: 1.0 });
    }
    let scaled = state.scaled(Complex64::new(1.0 / mass.sqrt(), 0.0));
    let residual = scaled.normalization_residual();
    if residual > tol_norm {
        return Err(Error::NotAPolynomialState { residual });
    }
    let normalized_input = (mass - 1.0).abs() <= tol_norm;
    let (max_a, argmax_a, max_b, argmax_b) = axis_sweep(&scaled)?;
    Ok(QGammaResult {
        q: max_a.min(max_b),
        max_a,
        argmax_a,
        max_b,
        argmax_b,
        normalized_input,
    })
}

/// The certified inapproximability radius q(γ)/4 in sup norm over the torus.
pub fn inapprox_radius(state: &PolynomialState) -> Result<f64> {
    Ok(q_gamma(state)?.q / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_random_unitary;
    use crate::state::TorusPoint;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rational(num: i64, den: i64) -> f64 {
        num as f64 / den as f64
    }

    /// The explicit degree-2 bivariate pair (P, Q) used across the
    /// unimplementability tests, scaled to unit coefficient mass.
    pub(crate) fn counterexample_state() -> PolynomialState {
        let term = |k: i64, h: i64, p: (f64, f64), q: (f64, f64)| {
            (
                MultiIndex::bi(k, h),
                CVector::new(vec![c(p.0, p.1), c(q.0, q.1)]).unwrap(),
            )
        };
        let raw = PolynomialState::new(
            2,
            2,
            Kind::Analytic,
            [
                term(0, 0, (1.0, 0.0), (-1.0, 0.0)),
                term(2, 2, (1.0, 0.0), (1.0, 0.0)),
                term(
                    1,
                    0,
                    (rational(-122, 37), rational(-8, 37)),
                    (rational(122, 37), rational(66, 37)),
                ),
                term(
                    1,
                    2,
                    (rational(-122, 37), rational(-8, 37)),
                    (rational(-122, 37), rational(-66, 37)),
                ),
                term(
                    2,
                    0,
                    (rational(114, 37), rational(56, 37)),
                    (rational(-56, 37), rational(-114, 37)),
                ),
                term(
                    0,
                    2,
                    (rational(114, 37), rational(56, 37)),
                    (rational(56, 37), rational(114, 37)),
                ),
                term(
                    0,
                    1,
                    (rational(362, 111), rational(-248, 111)),
                    (rational(-362, 111), rational(418, 111)),
                ),
                term(
                    2,
                    1,
                    (rational(362, 111), rational(-248, 111)),
                    (rational(362, 111), rational(-418, 111)),
                ),
                term(
                    1,
                    1,
                    (rational(692, 111), rational(-719, 222)),
                    (0.0, 0.0),
                ),
            ],
        )
        .unwrap();
        let mass: f64 = raw.terms().map(|(_, v)| v.norm_sqr()).sum();
        raw.scaled(c(1.0 / mass.sqrt(), 0.0))
    }

    fn haar_protocol_3d(n: usize, seed: u64) -> Protocol3D {
        let ops = (0..=n as u64)
            .map(|k| haar_random_unitary(3, seed * 101 + k).unwrap())
            .collect();
        Protocol3D::new(ops).unwrap()
    }

    #[test]
    fn single_signal_call_on_identity_ops_keeps_ket_zero() {
        let p = Protocol3D::new(vec![UnitaryMatrix::identity(3), UnitaryMatrix::identity(3)])
            .unwrap();
        let s = evaluate_protocol_3d(&p).unwrap();
        assert_eq!(s.num_terms(), 1);
        assert_eq!(s.coeff_or_zero(&MultiIndex::bi(0, 0)), CVector::basis(3, 0));
    }

    #[test]
    fn uniform_superposition_splits_into_three_corners() {
        let inv3 = 1.0 / 3f64.sqrt();
        let a0 = complete_to_unitary(&[CVector::from_reals(&[inv3, inv3, inv3]).unwrap()])
            .unwrap();
        let p = Protocol3D::new(vec![a0, UnitaryMatrix::identity(3)]).unwrap();
        let s = evaluate_protocol_3d(&p).unwrap();
        let e = |k, h| s.coeff_or_zero(&MultiIndex::bi(k, h));
        assert!((e(0, 0).get(0) - c(inv3, 0.0)).norm() < 1e-15);
        assert!((e(1, 0).get(1) - c(inv3, 0.0)).norm() < 1e-15);
        assert!((e(0, 1).get(2) - c(inv3, 0.0)).norm() < 1e-15);
    }

    /// The worked three-step sequence: uniform split, swap-conjugated signal
    /// call, then a merge into (1, √2·ab, 0)/√3.
    pub(crate) fn worked_example_protocol() -> Protocol3D {
        let inv3 = 1.0 / 3f64.sqrt();
        let a0 = complete_to_unitary(&[CVector::from_reals(&[inv3, inv3, inv3]).unwrap()])
            .unwrap();
        let s = permutation_swap_ab();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a2 = UnitaryMatrix::new(
            3,
            vec![
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(h, 0.0),
                c(h, 0.0),
                c(0.0, 0.0),
                c(h, 0.0),
                c(-h, 0.0),
            ],
        )
        .unwrap();
        let a2s = a2.matmul(&s).unwrap();
        Protocol3D::new(vec![a0, s, a2s]).unwrap()
    }

    #[test]
    fn worked_example_reaches_sqrt2_ab_state() {
        let s = evaluate_protocol_3d(&worked_example_protocol()).unwrap();
        let inv3 = 1.0 / 3f64.sqrt();
        assert_eq!(s.num_terms(), 2);
        let g00 = s.coeff_or_zero(&MultiIndex::bi(0, 0));
        let g11 = s.coeff_or_zero(&MultiIndex::bi(1, 1));
        assert!((g00.get(0) - c(inv3, 0.0)).norm() < 1e-12);
        assert!((g11.get(1) - c(2f64.sqrt() * inv3, 0.0)).norm() < 1e-12);
        assert!(g11.get(2).norm() < 1e-12 && g00.get(1).norm() < 1e-12);
    }

    #[test]
    fn two_step_choice_reproduces_sqrt2_ab_state() {
        let inv3 = 1.0 / 3f64.sqrt();
        let a0 = complete_to_unitary(&[CVector::from_reals(&[inv3, (2f64 / 3.0).sqrt()]).unwrap()])
            .unwrap();
        let p = Protocol2DChoice::new(
            vec![a0, UnitaryMatrix::identity(2), UnitaryMatrix::identity(2)],
            ChoiceVector::new(vec![Choice::A, Choice::B]),
            Kind::Analytic,
        )
        .unwrap();
        let s = evaluate_protocol_2d_choice(&p).unwrap();
        assert_eq!(s.num_terms(), 2);
        assert!((s.coeff_or_zero(&MultiIndex::bi(0, 0)).get(0) - c(inv3, 0.0)).norm() < 1e-15);
        assert!(
            (s.coeff_or_zero(&MultiIndex::bi(1, 1)).get(1) - c((2f64 / 3.0).sqrt(), 0.0)).norm()
                < 1e-15
        );
    }

    pub(crate) fn one_ab_over_sqrt2_protocol() -> Protocol2DChoice {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a0 = complete_to_unitary(&[CVector::from_reals(&[h, h]).unwrap()]).unwrap();
        Protocol2DChoice::new(
            vec![a0, UnitaryMatrix::identity(2), UnitaryMatrix::identity(2)],
            ChoiceVector::new(vec![Choice::A, Choice::B]),
            Kind::Analytic,
        )
        .unwrap()
    }

    #[test]
    fn two_step_choice_builds_one_ab_over_sqrt2() {
        let s = evaluate_protocol_2d_choice(&one_ab_over_sqrt2_protocol()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.coeff_or_zero(&MultiIndex::bi(0, 0)).get(0) - c(h, 0.0)).norm() < 1e-15);
        assert!((s.coeff_or_zero(&MultiIndex::bi(1, 1)).get(1) - c(h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn identity_choice_protocol_keeps_ket_zero() {
        let p = Protocol2DChoice::new(
            vec![UnitaryMatrix::identity(2), UnitaryMatrix::identity(2)],
            ChoiceVector::new(vec![Choice::B]),
            Kind::Analytic,
        )
        .unwrap();
        let s = evaluate_protocol_2d_choice(&p).unwrap();
        assert_eq!(s.num_terms(), 1);
        assert_eq!(s.coeff_or_zero(&MultiIndex::bi(0, 0)), CVector::basis(2, 0));
    }

    #[test]
    fn embedding_agrees_with_direct_choice_evaluation() {
        for seed in 0..25u64 {
            let n = 1 + (seed % 5) as usize;
            let ops: Vec<UnitaryMatrix> = (0..=n as u64)
                .map(|k| haar_random_unitary(2, 7000 + seed * 23 + k).unwrap())
                .collect();
            let choices = ChoiceVector::new(
                (0..n)
                    .map(|j| if (seed >> j) & 1 == 0 { Choice::A } else { Choice::B })
                    .collect(),
            );
            let p = Protocol2DChoice::new(ops, choices, Kind::Analytic).unwrap();
            let direct = evaluate_protocol_2d_choice(&p).unwrap();
            let embedded = evaluate_protocol_3d(&embed_2d_in_3d(&p).unwrap()).unwrap();
            assert!(direct.embed_dim3().unwrap().l2_distance(&embedded).unwrap() < 1e-12);
            for (_, v) in embedded.terms() {
                assert!(v.get(2).norm() < 1e-12, "third component leaked");
            }
        }
    }

    #[test]
    fn embedding_the_one_ab_protocol() {
        let p3 = embed_2d_in_3d(&one_ab_over_sqrt2_protocol()).unwrap();
        let s = evaluate_protocol_3d(&p3).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.coeff_or_zero(&MultiIndex::bi(0, 0)).get(0) - c(h, 0.0)).norm() < 1e-14);
        assert!((s.coeff_or_zero(&MultiIndex::bi(1, 1)).get(1) - c(h, 0.0)).norm() < 1e-14);
        assert_eq!(s.effective_dimension(1e-9), 2);
    }

    #[test]
    fn embedding_identity_protocol_is_blockwise() {
        let p = Protocol2DChoice::new(
            vec![UnitaryMatrix::identity(2), UnitaryMatrix::identity(2)],
            ChoiceVector::new(vec![Choice::A]),
            Kind::Analytic,
        )
        .unwrap();
        let p3 = embed_2d_in_3d(&p).unwrap();
        let s = evaluate_protocol_3d(&p3).unwrap();
        assert_eq!(s.coeff_or_zero(&MultiIndex::bi(0, 0)), CVector::basis(3, 0));
    }

    #[test]
    fn embedding_rejects_laurent_protocols() {
        let p = Protocol2DChoice::new(
            vec![UnitaryMatrix::identity(2), UnitaryMatrix::identity(2)],
            ChoiceVector::new(vec![Choice::A]),
            Kind::Laurent,
        )
        .unwrap();
        assert!(matches!(
            embed_2d_in_3d(&p),
            Err(Error::InvalidConvention(_))
        ));
    }

    #[test]
    fn mqsp_degree_violation_with_witness() {
        let s = PolynomialState::new(
            2,
            2,
            Kind::Analytic,
            [
                (MultiIndex::bi(0, 0), CVector::from_reals(&[0.6, 0.0]).unwrap()),
                (MultiIndex::bi(2, 0), CVector::from_reals(&[0.0, 0.8]).unwrap()),
            ],
        )
        .unwrap();
        let report = check_necessary_mqsp(
            &s,
            &ChoiceVector::new(vec![Choice::A]),
            &SignalConvention::full(Kind::Analytic),
        )
        .unwrap();
        let v = report.verdict("mqsp-i-degree-a").unwrap();
        assert!(!v.passed);
        assert_eq!(
            v.witness,
            Some(Witness::Exponent { exp: vec![2, 0] })
        );
    }

    #[test]
    fn mqsp_passes_one_ab_state() {
        let s = evaluate_protocol_2d_choice(&one_ab_over_sqrt2_protocol()).unwrap();
        let report = check_necessary_mqsp(
            &s,
            &ChoiceVector::new(vec![Choice::A, Choice::B]),
            &SignalConvention::full(Kind::Analytic),
        )
        .unwrap();
        assert!(report.all_passed());
    }

    #[test]
    fn mqsp_conditions_are_sound_for_protocol_outputs() {
        for seed in 0..20u64 {
            let n = 1 + (seed % 6) as usize;
            let ops: Vec<UnitaryMatrix> = (0..=n as u64)
                .map(|k| haar_random_unitary(2, 9000 + seed * 29 + k).unwrap())
                .collect();
            let choices = ChoiceVector::new(
                (0..n)
                    .map(|j| if (seed >> j) & 1 == 0 { Choice::A } else { Choice::B })
                    .collect(),
            );
            for picture in [Kind::Analytic, Kind::Laurent] {
                let p = Protocol2DChoice::new(ops.clone(), choices.clone(), picture).unwrap();
                let s = evaluate_protocol_2d_choice(&p).unwrap();
                let report =
                    check_necessary_mqsp(&s, &choices, &SignalConvention::full(picture)).unwrap();
                assert!(
                    report.all_passed(),
                    "necessary conditions failed on a protocol output: {report:?}"
                );
            }
        }
    }

    #[test]
    fn extract_step_on_corner_basis_state() {
        let inv3 = 1.0 / 3f64.sqrt();
        let s = PolynomialState::new(
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
        let (a, lowered) = extract_step_3d(&s).unwrap();
        assert_eq!(a, UnitaryMatrix::identity(3));
        assert_eq!(lowered.num_terms(), 1);
        let rem = lowered.coeff_or_zero(&MultiIndex::bi(0, 0));
        for i in 0..3 {
            assert!((rem.get(i) - c(inv3, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn extract_step_rejects_the_counterexample() {
        let s = counterexample_state().embed_dim3().unwrap();
        match extract_step_3d(&s) {
            Err(Error::NotLowerable { rank_a, rank_b, .. }) => {
                assert_eq!(rank_a, 2);
                assert_eq!(rank_b, 2);
            }
            other => panic!("expected NotLowerable, got {other:?}"),
        }
    }

    #[test]
    fn check_extractable_reports_the_counterexample() {
        let s = counterexample_state().embed_dim3().unwrap();
        let report = check_extractable(&s).unwrap();
        assert_eq!(report.overall.as_deref(), Some("not-lowerable"));
    }

    #[test]
    fn extract_step_succeeds_down_to_constant_on_protocol_outputs() {
        for seed in 0..30u64 {
            let p = haar_protocol_3d(5, 40_000 + seed);
            let mut cur = evaluate_protocol_3d(&p).unwrap();
            let mut degree = cur.total_degree();
            assert_eq!(degree, 5);
            while degree > 0 {
                let (_, lowered) = extract_step_3d(&cur).expect("protocol outputs lower");
                assert!(lowered.total_degree() < degree);
                cur = lowered;
                degree = cur.total_degree();
            }
        }
    }

    #[test]
    fn extract_step_reassembles_the_input() {
        let p = haar_protocol_3d(4, 777);
        let s = evaluate_protocol_3d(&p).unwrap();
        let (a, lowered) = extract_step_3d(&s).unwrap();
        // rebuild: one signal call on the lowered state, then a
        let mut shifted: Lattice3 = BTreeMap::new();
        for (idx, v) in lowered.terms() {
            let (k, h) = (idx.get(0), idx.get(1));
            shifted.entry((k, h)).or_insert_with(Default::default)[0] += v.get(0);
            shifted.entry((k + 1, h)).or_insert_with(Default::default)[1] += v.get(1);
            shifted.entry((k, h + 1)).or_insert_with(Default::default)[2] += v.get(2);
        }
        let rebuilt = lattice_to_state(shifted)
            .unwrap()
            .apply_unitary(&a)
            .unwrap();
        assert!(rebuilt.l2_distance(&s).unwrap() <= 1e-10);
    }

    #[test]
    fn extract_step_solves_rank_one_sides_exactly() {
        // α e3·a + β e2·b + δ e1·ab : all three side spans are single lines
        // and a careless pick of ψ_0 dead-ends; the solver must not.
        let (alpha, beta, delta) = (0.6, 0.48, 0.64);
        let s = PolynomialState::new(
            2,
            3,
            Kind::Analytic,
            [
                (MultiIndex::bi(1, 0), CVector::from_reals(&[0.0, 0.0, alpha]).unwrap()),
                (MultiIndex::bi(0, 1), CVector::from_reals(&[0.0, beta, 0.0]).unwrap()),
                (MultiIndex::bi(1, 1), CVector::from_reals(&[delta, 0.0, 0.0]).unwrap()),
            ],
        )
        .unwrap();
        assert!(s.is_normalized(1e-12));
        let (_, lowered) = extract_step_3d(&s).expect("a lowering basis exists");
        assert_eq!(lowered.total_degree(), 1);
    }

    #[test]
    fn decompose_degree_zero_state() {
        let psi = haar_random_unitary(3, 6).unwrap().column(0);
        let s = PolynomialState::constant(2, Kind::Analytic, psi.clone()).unwrap();
        let p = decompose_3d(&s).unwrap();
        assert_eq!(p.ops.len(), 1);
        assert!(p.ops[0].column(0).sub(&psi).norm() < 1e-14);
    }

    #[test]
    fn decompose_round_trip_small_degrees() {
        for n in 1..=6usize {
            for seed in 0..5u64 {
                let p = haar_protocol_3d(n, 50_000 + seed * 11 + n as u64);
                let s = evaluate_protocol_3d(&p).unwrap();
                let q = decompose_3d(&s).expect("Haar endpoints are nonzero");
                let s2 = evaluate_protocol_3d(&q).unwrap();
                assert!(
                    s.l2_distance(&s2).unwrap() <= 1e-8,
                    "round trip failed at n={n}, seed={seed}"
                );
            }
        }
    }

    #[test]
    fn decompose_rejects_vanishing_endpoint() {
        let s = evaluate_protocol_2d_choice(&one_ab_over_sqrt2_protocol())
            .unwrap()
            .embed_dim3()
            .unwrap();
        match decompose_3d(&s) {
            Err(Error::ZeroEndpoint { index, .. }) => assert_eq!(index, (2, 0)),
            other => panic!("expected ZeroEndpoint, got {other:?}"),
        }
    }

    #[test]
    fn propagation_shape_before_final_operator() {
        for seed in 0..10u64 {
            let mut p = haar_protocol_3d(5, 60_000 + seed);
            // run with the final operator replaced by identity
            let last = p.ops.len() - 1;
            p.ops[last] = UnitaryMatrix::identity(3);
            let s = evaluate_protocol_3d(&p).unwrap();
            let n = s.total_degree();
            assert!(n <= 5);
            for (idx, v) in s.terms() {
                let (k, h) = (idx.get(0), idx.get(1));
                assert!(k >= 0 && h >= 0 && k + h <= n);
                if h == 0 {
                    assert!(v.get(2).norm() < 1e-12, "a-axis touched |2>");
                }
                if k == 0 {
                    assert!(v.get(1).norm() < 1e-12, "b-axis touched |1>");
                }
                if k + h == n {
                    assert!(v.get(0).norm() < 1e-12, "diagonal touched |0>");
                }
            }
        }
    }

    #[test]
    fn endpoint_orthogonality_on_protocol_outputs() {
        for seed in 0..10u64 {
            let p = haar_protocol_3d(6, 70_000 + seed);
            let s = evaluate_protocol_3d(&p).unwrap();
            let n = s.total_degree();
            let g00 = s.coeff_or_zero(&MultiIndex::bi(0, 0));
            let gn0 = s.coeff_or_zero(&MultiIndex::bi(n, 0));
            let g0n = s.coeff_or_zero(&MultiIndex::bi(0, n));
            for k in 0..=n {
                let ga = s.coeff_or_zero(&MultiIndex::bi(k, 0));
                let gb = s.coeff_or_zero(&MultiIndex::bi(0, k));
                let gd = s.coeff_or_zero(&MultiIndex::bi(k, n - k));
                assert!(inner(&g0n, &ga).unwrap().norm() <= 1e-9);
                assert!(inner(&gn0, &gb).unwrap().norm() <= 1e-9);
                assert!(inner(&g00, &gd).unwrap().norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn counterexample_is_not_implementable() {
        let report = check_unimplementable(&counterexample_state()).unwrap();
        assert_eq!(report.overall.as_deref(), Some("not-implementable"));
    }

    #[test]
    fn one_ab_state_is_inconclusive() {
        let s = evaluate_protocol_2d_choice(&one_ab_over_sqrt2_protocol()).unwrap();
        let report = check_unimplementable(&s).unwrap();
        assert_eq!(report.overall.as_deref(), Some("inconclusive"));
    }

    #[test]
    fn q_gamma_counterexample_golden_value() {
        let r = q_gamma(&counterexample_state()).unwrap();
        assert!((r.q - 144.0 / 10625.0).abs() < 1e-10, "q = {}", r.q);
        assert_eq!(r.argmax_a, (1, 2));
        assert!(r.normalized_input);
        // the two maxima recompute from the state
        assert!(r.max_a >= r.q && r.max_b >= r.q);
    }

    #[test]
    fn q_gamma_accepts_unnormalized_scaling() {
        let doubled = counterexample_state().scaled(c(2.0, 0.0));
        let r = q_gamma(&doubled).unwrap();
        assert!((r.q - 144.0 / 10625.0).abs() < 1e-10);
        assert!(!r.normalized_input);
    }

    #[test]
    fn q_gamma_zero_for_rank_one_axes() {
        let s = evaluate_protocol_2d_choice(&one_ab_over_sqrt2_protocol()).unwrap();
        let r = q_gamma(&s).unwrap();
        assert_eq!(r.q, 0.0);
    }

    #[test]
    fn q_gamma_rejects_non_polynomial_families() {
        let s = PolynomialState::new(
            2,
            2,
            Kind::Analytic,
            [
                (MultiIndex::bi(0, 0), CVector::from_reals(&[1.0, 0.0]).unwrap()),
                (MultiIndex::bi(1, 0), CVector::from_reals(&[1.0, 0.0]).unwrap()),
            ],
        )
        .unwrap();
        assert!(matches!(
            q_gamma(&s),
            Err(Error::NotAPolynomialState { .. })
        ));
    }

    #[test]
    fn inapprox_radius_of_counterexample() {
        let r = inapprox_radius(&counterexample_state()).unwrap();
        assert!((r - 36.0 / 10625.0).abs() < 1e-10);
    }

    #[test]
    fn inapprox_radius_zero_without_certificate() {
        let s = evaluate_protocol_2d_choice(&one_ab_over_sqrt2_protocol()).unwrap();
        assert_eq!(inapprox_radius(&s).unwrap(), 0.0);
    }

    #[test]
    fn corollary_and_q_agree_on_protocol_outputs() {
        for seed in 0..40u64 {
            let n = 1 + (seed % 5) as usize;
            let ops: Vec<UnitaryMatrix> = (0..=n as u64)
                .map(|k| haar_random_unitary(2, 80_000 + seed * 31 + k).unwrap())
                .collect();
            let choices = ChoiceVector::new(
                (0..n)
                    .map(|j| if (seed >> j) & 1 == 0 { Choice::A } else { Choice::B })
                    .collect(),
            );
            let p = Protocol2DChoice::new(ops, choices, Kind::Analytic).unwrap();
            let s = evaluate_protocol_2d_choice(&p).unwrap();
            let report = check_unimplementable(&s).unwrap();
            assert_eq!(report.overall.as_deref(), Some("inconclusive"));
            let q = q_gamma(&s).unwrap().q;
            assert!(q <= 10.0 * TOL_RANK, "implementable state with q = {q}");
        }
    }

    #[test]
    fn random_3d_outputs_evaluate_to_unit_vectors_on_the_torus() {
        let p = haar_protocol_3d(5, 123);
        let s = evaluate_protocol_3d(&p).unwrap();
        assert!(s.normalization_residual() <= 1e-10);
        for t in 0..16 {
            let point = TorusPoint::new(vec![
                0.17 + t as f64 * 0.39,
                1.03 + t as f64 * 0.71,
            ])
            .unwrap();
            assert!((s.evaluate_at(&point).unwrap().norm() - 1.0).abs() <= 1e-9);
        }
    }
}
