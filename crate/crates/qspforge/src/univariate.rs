//! Univariate quantum signal processing.
//!
//! Signal operators are diag(z⁻¹, z) in the Laurent picture and diag(1, z) in
//! the analytic picture; the W_x basis conjugates either by a Hadamard.
//! Evaluation expands a protocol into its polynomial state by propagating
//! coefficients on the exponent lattice; synthesis inverts that expansion one
//! processing operator at a time, peeling the top signal call off the state.

use crate::dd::{self, Dd, DdC};
use crate::error::{Error, Result};
use crate::linalg::{complete_to_unitary, CVector, Complex64, UnitaryMatrix, TOL_UNITARY};
use crate::report::{DiagnosticReport, Witness};
use crate::state::{Kind, MultiIndex, PolynomialState, TorusPoint, TOL_NORM};

/// Basis the signal operator is diagonal in: W_z directly, W_x after
/// Hadamard conjugation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Wz,
    Wx,
}

/// Which processing operators a protocol may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algebra {
    FullSu2,
    XRotations,
    ZRotations,
}

/// A cell of the univariate landscape: picture (Laurent/analytic), basis
/// (W_z/W_x) and processing algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalConvention {
    pub picture: Kind,
    pub basis: Basis,
    pub algebra: Algebra,
}

impl SignalConvention {
    pub fn new(picture: Kind, basis: Basis, algebra: Algebra) -> Self {
        Self {
            picture,
            basis,
            algebra,
        }
    }

    /// Full-algebra convention in the W_z basis.
    pub fn full(picture: Kind) -> Self {
        Self::new(picture, Basis::Wz, Algebra::FullSu2)
    }

    /// X rotations pair with the diagonal (W_z) signal operator, Z rotations
    /// with the Hadamard-conjugated (W_x) one. Returns an error for the two
    /// pairings that do not form a standard convention.
    pub fn check_coherent(&self) -> Result<()> {
        match (self.basis, self.algebra) {
            (Basis::Wz, Algebra::ZRotations) => Err(Error::InvalidConvention(
                "Z rotations commute with the diagonal signal operator; use the W_x basis".into(),
            )),
            (Basis::Wx, Algebra::XRotations) => Err(Error::InvalidConvention(
                "X rotations pair with the diagonal signal operator; use the W_z basis".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// exp(iφX) = [[cos φ, i sin φ], [i sin φ, cos φ]].
pub fn rotation_x(phi: f64) -> UnitaryMatrix {
    let (s, c) = phi.sin_cos();
    UnitaryMatrix::new_with_tolerance(
        2,
        vec![
            Complex64::new(c, 0.0),
            Complex64::new(0.0, s),
            Complex64::new(0.0, s),
            Complex64::new(c, 0.0),
        ],
        1e-12,
    )
    .expect("rotation is unitary")
}

/// exp(iφZ) = diag(e^{iφ}, e^{-iφ}).
pub fn rotation_z(phi: f64) -> UnitaryMatrix {
    let (s, c) = phi.sin_cos();
    UnitaryMatrix::new_with_tolerance(
        2,
        vec![
            Complex64::new(c, s),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(c, -s),
        ],
        1e-12,
    )
    .expect("rotation is unitary")
}

/// The single-qubit Hadamard gate.
pub fn hadamard() -> UnitaryMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    UnitaryMatrix::new_with_tolerance(
        2,
        vec![
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
        ],
        1e-12,
    )
    .expect("Hadamard is unitary")
}

/// A univariate protocol: n+1 processing operators around n signal calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol1D {
    pub convention: SignalConvention,
    pub ops: Vec<UnitaryMatrix>,
    /// Present when the ops are rotations generated from phase angles.
    pub phases: Option<Vec<f64>>,
}

impl Protocol1D {
    pub fn new(convention: SignalConvention, ops: Vec<UnitaryMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::ShapeMismatch("protocol has no operators".into()));
        }
        if let Some(bad) = ops.iter().find(|u| u.dim() != 2) {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: bad.dim(),
            });
        }
        Ok(Self {
            convention,
            ops,
            phases: None,
        })
    }

    /// Builds the rotation sequence for a phase vector. The convention must
    /// name a rotation algebra.
    pub fn from_phases(convention: SignalConvention, phases: Vec<f64>) -> Result<Self> {
        convention.check_coherent()?;
        let rot: fn(f64) -> UnitaryMatrix = match convention.algebra {
            Algebra::XRotations => rotation_x,
            Algebra::ZRotations => rotation_z,
            Algebra::FullSu2 => {
                return Err(Error::InvalidConvention(
                    "phase vectors require a rotation algebra".into(),
                ))
            }
        };
        if phases.is_empty() {
            return Err(Error::ShapeMismatch("empty phase vector".into()));
        }
        let ops = phases.iter().map(|&p| rot(p)).collect();
        Ok(Self {
            convention,
            ops,
            phases: Some(phases),
        })
    }

    pub fn signal_calls(&self) -> usize {
        self.ops.len() - 1
    }

    /// Checks that any recorded phases regenerate the stored ops.
    pub fn validate(&self) -> Result<()> {
        let Some(phases) = &self.phases else {
            return Ok(());
        };
        if phases.len() != self.ops.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} phases for {} ops",
                phases.len(),
                self.ops.len()
            )));
        }
        let rot: fn(f64) -> UnitaryMatrix = match self.convention.algebra {
            Algebra::XRotations => rotation_x,
            Algebra::ZRotations => rotation_z,
            Algebra::FullSu2 => {
                return Err(Error::InvalidConvention(
                    "phases recorded for a full-algebra protocol".into(),
                ))
            }
        };
        for (op, &phi) in self.ops.iter().zip(phases) {
            let expected = rot(phi);
            let dev = op
                .entries()
                .iter()
                .zip(expected.entries())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            if dev > TOL_UNITARY {
                return Err(Error::ShapeMismatch(format!(
                    "op deviates from its recorded rotation by {dev:.3e}"
                )));
            }
        }
        Ok(())
    }
}

/// Rewrites a W_x protocol as the W_z protocol with identical evaluation by
/// absorbing the Hadamards of every H·signal·H sandwich into the neighboring
/// processing operators (and vice versa; the map is an involution).
fn toggle_basis_ops(ops: &[UnitaryMatrix]) -> Vec<UnitaryMatrix> {
    let n = ops.len() - 1;
    if n == 0 {
        return ops.to_vec();
    }
    let h = hadamard();
    ops.iter()
        .enumerate()
        .map(|(k, op)| {
            if k == 0 {
                h.matmul(op).expect("dim 2")
            } else if k == n {
                op.matmul(&h).expect("dim 2")
            } else {
                h.matmul(op).expect("dim 2").matmul(&h).expect("dim 2")
            }
        })
        .collect()
}

/// Shifts a univariate coefficient map through one diagonal signal call.
fn shift_1d(
    terms: &std::collections::BTreeMap<i64, CVector>,
    picture: Kind,
) -> std::collections::BTreeMap<i64, CVector> {
    let mut out: std::collections::BTreeMap<i64, CVector> = std::collections::BTreeMap::new();
    let mut bump = |k: i64, comp: usize, z: Complex64| {
        let entry = out.entry(k).or_insert_with(|| CVector::zero(2));
        let mut entries = entry.entries().to_vec();
        entries[comp] += z;
        *entry = CVector::new(entries).expect("finite");
    };
    for (&k, v) in terms {
        match picture {
            Kind::Analytic => {
                bump(k, 0, v.get(0));
                bump(k + 1, 1, v.get(1));
            }
            Kind::Laurent => {
                bump(k - 1, 0, v.get(0));
                bump(k + 1, 1, v.get(1));
            }
        }
    }
    out
}

/// Expands a protocol into its polynomial state by lattice propagation.
pub fn evaluate_protocol_1d(p: &Protocol1D) -> Result<PolynomialState> {
    let ops = match p.convention.basis {
        Basis::Wz => p.ops.clone(),
        Basis::Wx => toggle_basis_ops(&p.ops),
    };
    let mut terms: std::collections::BTreeMap<i64, CVector> = std::collections::BTreeMap::new();
    terms.insert(0, ops[0].apply(&CVector::basis(2, 0))?);
    for op in &ops[1..] {
        terms = shift_1d(&terms, p.convention.picture);
        for v in terms.values_mut() {
            *v = op.apply(v)?;
        }
    }
    PolynomialState::new(
        1,
        2,
        p.convention.picture,
        terms.into_iter().map(|(k, v)| (MultiIndex::uni(k), v)),
    )
}

fn require_univariate_dim2(state: &PolynomialState) -> Result<()> {
    if state.num_vars() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected a univariate state, got {} variables",
            state.num_vars()
        )));
    }
    if state.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: state.dim(),
        });
    }
    Ok(())
}

/// Degree in the sense matching the picture: max exponent for analytic
/// states, max |exponent| for Laurent ones.
fn degree_1d(state: &PolynomialState) -> i64 {
    match state.kind() {
        Kind::Analytic => state.total_degree(),
        Kind::Laurent => state.laurent_degree(),
    }
}

/// Exponent parity split: how many stored indices are even resp. odd.
fn parity_split(state: &PolynomialState) -> (usize, usize) {
    let mut even = 0;
    let mut odd = 0;
    for (idx, _) in state.terms() {
        if idx.get(0).rem_euclid(2) == 0 {
            even += 1;
        } else {
            odd += 1;
        }
    }
    (even, odd)
}

fn has_definite_parity(state: &PolynomialState) -> bool {
    let (even, odd) = parity_split(state);
    even == 0 || odd == 0
}

const TOL_CLASSIFY: f64 = 1e-9;

fn check_parity(state: &PolynomialState, report: &mut DiagnosticReport, id: &str) -> bool {
    let n = degree_1d(state);
    let offender = state
        .terms()
        .find(|(idx, _)| (idx.get(0) - n).rem_euclid(2) != 0);
    match offender {
        None => {
            report.pass(id);
            true
        }
        Some((idx, _)) => {
            report.fail(
                id,
                Witness::Exponent {
                    exp: idx.exponents().to_vec(),
                },
            );
            false
        }
    }
}

fn check_real_structure(state: &PolynomialState, report: &mut DiagnosticReport, id: &str) -> bool {
    // W_z condition (i): P has real coefficients, Q imaginary ones.
    for (idx, coeff) in state.terms() {
        let dev = coeff.get(0).im.abs().max(coeff.get(1).re.abs());
        if dev > TOL_CLASSIFY {
            report.fail(
                id,
                Witness::Exponent {
                    exp: idx.exponents().to_vec(),
                },
            );
            return false;
        }
    }
    report.pass(id);
    true
}

fn check_reciprocal_symmetry(
    state: &PolynomialState,
    report: &mut DiagnosticReport,
    id: &str,
) -> bool {
    // W_x condition (i): P(z) = P(z^{-1}) in the Laurent picture, and its
    // degree-reflected analytic counterpart P(z) = z^n P(z^{-1}); Q picks up
    // a minus sign.
    let n = degree_1d(state);
    let reflect = |k: i64| match state.kind() {
        Kind::Laurent => -k,
        Kind::Analytic => n - k,
    };
    let mut indices: std::collections::BTreeSet<i64> =
        state.terms().map(|(idx, _)| idx.get(0)).collect();
    indices.extend(state.terms().map(|(idx, _)| reflect(idx.get(0))));
    for &k in &indices {
        let here = state.coeff_or_zero(&MultiIndex::uni(k));
        let there = state.coeff_or_zero(&MultiIndex::uni(reflect(k)));
        let dev = (here.get(0) - there.get(0))
            .norm()
            .max((here.get(1) + there.get(1)).norm());
        if dev > TOL_CLASSIFY {
            report.fail(
                id,
                Witness::ExponentPair {
                    first: vec![k],
                    second: vec![reflect(k)],
                },
            );
            return false;
        }
    }
    report.pass(id);
    true
}

/// Reports, for each convention row of the state's picture, whether the
/// state satisfies that row's conditions.
pub fn classify_state_1d(state: &PolynomialState) -> Result<DiagnosticReport> {
    require_univariate_dim2(state)?;
    let mut report = DiagnosticReport::new("classify-1d");
    let laurent = state.kind() == Kind::Laurent;

    let wz_real = check_real_structure(state, &mut report, "wz-real-structure");
    let wx_sym = check_reciprocal_symmetry(state, &mut report, "wx-reciprocal-symmetry");
    let parity_ok = if laurent {
        check_parity(state, &mut report, "parity")
    } else {
        true
    };

    let mut satisfied = Vec::new();
    if wz_real && parity_ok {
        satisfied.push("wz");
    }
    if wx_sym && parity_ok {
        satisfied.push("wx");
    }
    if parity_ok {
        satisfied.push("full");
    }
    report.overall = Some(if satisfied.is_empty() {
        "none".to_string()
    } else {
        format!("satisfies: {}", satisfied.join(", "))
    });
    Ok(report)
}

/// Endpoint exponents of the top signal call for the picture.
fn endpoint_indices(picture: Kind, n: i64) -> (i64, i64) {
    match picture {
        Kind::Analytic => (0, n),
        Kind::Laurent => (-n, n),
    }
}

/// Norm below which an endpoint no longer pins a column direction during
/// synthesis; the free column then comes from deterministic completion.
const TOL_SYNTH_ENDPOINT: f64 = 1e-12;

const TOL_LEAK: f64 = 1e-9;

/// Coefficient lattice of the synthesis recursion, carried in double-double
/// form: peeling amplifies normalization error by the inverse endpoint norm
/// per level, so the recursion must not inject noise of its own.
type DdLattice1 = std::collections::BTreeMap<i64, [DdC; 2]>;

fn dd_lattice_1d(state: &PolynomialState) -> DdLattice1 {
    state
        .terms()
        .map(|(idx, v)| {
            (
                idx.get(0),
                [
                    DdC::from_f64(v.get(0).re, v.get(0).im),
                    DdC::from_f64(v.get(1).re, v.get(1).im),
                ],
            )
        })
        .collect()
}

/// Drops entries whose mass fell to double-double roundoff.
fn dd_prune_1d(lattice: &mut DdLattice1) {
    lattice.retain(|_, v| dd::norm_sqr(v).hi > 1e-50);
}

fn dd_degree_1d(lattice: &DdLattice1, picture: Kind) -> i64 {
    lattice
        .keys()
        .map(|&k| match picture {
            Kind::Analytic => k,
            Kind::Laurent => k.abs(),
        })
        .max()
        .unwrap_or(0)
}

fn dd_round_vec(v: &[DdC; 2]) -> CVector {
    CVector::new(vec![v[0].value(), v[1].value()]).expect("finite")
}

/// Applies the adjoint of the operator with the given columns to every
/// lattice entry.
fn dd_apply_adjoint_1d(lattice: &mut DdLattice1, c0: &[DdC; 2], c1: &[DdC; 2]) {
    for v in lattice.values_mut() {
        *v = [dd::inner(c0, v), dd::inner(c1, v)];
    }
}

/// Inverse signal call; coefficient mass landing outside the support of a
/// degree-(n-1) state is leakage, so the degree strictly decreases.
fn dd_unshift_1d(lattice: &DdLattice1, picture: Kind, n: i64) -> Result<DdLattice1> {
    let valid = |t: i64| match picture {
        Kind::Analytic => (0..n).contains(&t),
        Kind::Laurent => t.abs() < n,
    };
    let mut out: DdLattice1 = DdLattice1::new();
    let mut leaked = Dd::ZERO;
    for (&k, v) in lattice {
        let targets: [i64; 2] = match picture {
            // w̃† keeps component 0 in place and lowers component 1
            Kind::Analytic => [k, k - 1],
            // ṽ† raises component 0 and lowers component 1
            Kind::Laurent => [k + 1, k - 1],
        };
        for (comp, target) in targets.iter().enumerate() {
            if valid(*target) {
                let slot = out.entry(*target).or_insert([DdC::ZERO; 2]);
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

/// The in-plane unit vector orthogonal to a unit vector (a, b): (-b̄, ā).
fn dd_perp(v: &[DdC; 2]) -> [DdC; 2] {
    [v[1].conj().scale(Dd::from_f64(-1.0)), v[0].conj()]
}

/// One general extraction step on the lattice: anchor a column on the larger
/// endpoint, force the other as its orthogonal complement phase-aligned to
/// the smaller endpoint, undo the operator and one signal call.
fn dd_extract_step(
    lattice: &mut DdLattice1,
    picture: Kind,
    n: i64,
) -> Result<UnitaryMatrix> {
    let (lo_idx, hi_idx) = endpoint_indices(picture, n);
    let low = lattice.get(&lo_idx).copied().unwrap_or([DdC::ZERO; 2]);
    let high = lattice.get(&hi_idx).copied().unwrap_or([DdC::ZERO; 2]);
    let anchor_on_high = dd::norm_sqr(&high).hi >= dd::norm_sqr(&low).hi;
    let (anchor_vec, other) = if anchor_on_high { (high, low) } else { (low, high) };
    if dd::norm_sqr(&anchor_vec).hi <= TOL_SYNTH_ENDPOINT * TOL_SYNTH_ENDPOINT {
        return Err(Error::ShapeMismatch(
            "both endpoint coefficients vanish".into(),
        ));
    }
    let anchor = dd::normalized(&anchor_vec);
    let free = dd::phase_align(&dd_perp(&anchor), dd::inner(&dd_perp(&anchor), &other));
    let (c0, c1) = if anchor_on_high {
        (free, anchor)
    } else {
        (anchor, free)
    };
    dd_apply_adjoint_1d(lattice, &c0, &c1);
    *lattice = dd_unshift_1d(lattice, picture, n)?;
    dd_prune_1d(lattice);
    UnitaryMatrix::from_columns(&[dd_round_vec(&c0), dd_round_vec(&c1)])
}

/// Runs a peeling routine; if it reports a failed degree reduction, projects
/// the input onto the normalization manifold and tries once more. The
/// projection moves the input by about its own normalization deviation and
/// removes the seed that peeling would otherwise amplify.
fn peel_with_projection<T>(
    state: &PolynomialState,
    peel: impl Fn(DdLattice1) -> Result<T>,
) -> Result<T> {
    match peel(dd_lattice_1d(state)) {
        Err(Error::DegreeReduction { .. }) => {
            let mut lattice = dd_lattice_1d(state);
            crate::manifold::project(&mut lattice);
            peel(lattice)
        }
        other => other,
    }
}

/// Peels a state down to operators with arbitrary SU(2) steps.
fn extract_general(state: &PolynomialState, picture: Kind) -> Result<Vec<UnitaryMatrix>> {
    peel_with_projection(state, |lattice| extract_general_on(lattice, picture))
}

fn extract_general_on(mut lattice: DdLattice1, picture: Kind) -> Result<Vec<UnitaryMatrix>> {
    let mut ops_rev: Vec<UnitaryMatrix> = Vec::new();
    dd_prune_1d(&mut lattice);
    loop {
        if lattice.is_empty() {
            return Err(Error::NotNormalized { residual: 1.0 });
        }
        let n = dd_degree_1d(&lattice, picture);
        if n == 0 {
            let v = lattice.get(&0).copied().unwrap_or([DdC::ZERO; 2]);
            if dd::norm_sqr(&v).hi <= TOL_SYNTH_ENDPOINT * TOL_SYNTH_ENDPOINT {
                return Err(Error::NotNormalized { residual: 1.0 });
            }
            let unit = dd::normalized(&v);
            ops_rev.push(complete_to_unitary(&[dd_round_vec(&unit)])?);
            break;
        }
        ops_rev.push(dd_extract_step(&mut lattice, picture, n)?);
    }
    ops_rev.reverse();
    Ok(ops_rev)
}

/// Folds an angle into (-pi/2, pi/2] by adding a multiple of pi.
fn fold_half_turn(phi: f64) -> f64 {
    let mut p = phi;
    while p <= -std::f64::consts::FRAC_PI_2 {
        p += std::f64::consts::PI;
    }
    while p > std::f64::consts::FRAC_PI_2 {
        p -= std::f64::consts::PI;
    }
    p
}

/// Applies an f64 operator's adjoint to the lattice, lifting its entries
/// exactly into double-double form.
fn dd_apply_adjoint_op(lattice: &mut DdLattice1, op: &UnitaryMatrix) {
    let lift = |col: usize| -> [DdC; 2] {
        [
            DdC::from_f64(op.entry(0, col).re, op.entry(0, col).im),
            DdC::from_f64(op.entry(1, col).re, op.entry(1, col).im),
        ]
    };
    let (c0, c1) = (lift(0), lift(1));
    dd_apply_adjoint_1d(lattice, &c0, &c1);
}

/// Peels a W_z-basis state into X-rotation phases. The top coefficient
/// (p_n, i q_n) fixes tan φ = -p_n/q_n; the angle is read off the endpoint
/// with the larger norm, whose direction carries less float noise.
fn extract_x_rotations(state: &PolynomialState, picture: Kind) -> Result<Vec<f64>> {
    peel_with_projection(state, |lattice| extract_x_rotations_on(lattice, picture))
}

fn extract_x_rotations_on(mut lattice: DdLattice1, picture: Kind) -> Result<Vec<f64>> {
    let mut phases_rev: Vec<f64> = Vec::new();
    dd_prune_1d(&mut lattice);
    loop {
        if lattice.is_empty() {
            return Err(Error::NotNormalized { residual: 1.0 });
        }
        let n = dd_degree_1d(&lattice, picture);
        if n == 0 {
            let v = lattice.get(&0).copied().unwrap_or([DdC::ZERO; 2]);
            phases_rev.push(f64::atan2(v[1].im.value(), v[0].re.value()));
            break;
        }
        let (lo_idx, hi_idx) = endpoint_indices(picture, n);
        let high = lattice.get(&hi_idx).copied().unwrap_or([DdC::ZERO; 2]);
        let low = lattice.get(&lo_idx).copied().unwrap_or([DdC::ZERO; 2]);
        let phi = if dd::norm_sqr(&high).hi >= dd::norm_sqr(&low).hi {
            fold_half_turn(f64::atan2(-high[0].re.value(), high[1].im.value()))
        } else {
            fold_half_turn(f64::atan2(low[1].im.value(), low[0].re.value()))
        };
        let op = rotation_x(phi);
        dd_apply_adjoint_op(&mut lattice, &op);
        lattice = dd_unshift_1d(&lattice, picture, n)?;
        dd_prune_1d(&mut lattice);
        phases_rev.push(phi);
    }
    phases_rev.reverse();
    Ok(phases_rev)
}

/// Hadamard conjugation of every lattice entry.
fn dd_hadamard(lattice: &mut DdLattice1) {
    let h = Dd::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    for v in lattice.values_mut() {
        let sum = v[0].add(v[1]).scale(h);
        let diff = v[0].sub(v[1]).scale(h);
        *v = [sum, diff];
    }
}

/// Peels a W_x-basis state into Z-rotation phases. Before the top operator
/// the high coefficient is proportional to |−⟩ and the low one to |+⟩, which
/// pins e^{-2iφ}.
fn extract_z_rotations(state: &PolynomialState, picture: Kind) -> Result<Vec<f64>> {
    peel_with_projection(state, |lattice| extract_z_rotations_on(lattice, picture))
}

fn extract_z_rotations_on(mut lattice: DdLattice1, picture: Kind) -> Result<Vec<f64>> {
    let mut phases_rev: Vec<f64> = Vec::new();
    dd_prune_1d(&mut lattice);
    loop {
        if lattice.is_empty() {
            return Err(Error::NotNormalized { residual: 1.0 });
        }
        let n = dd_degree_1d(&lattice, picture);
        if n == 0 {
            let v = lattice.get(&0).copied().unwrap_or([DdC::ZERO; 2]);
            if dd::norm_sqr(&[v[1]]).sqrt().value() > 1e-6 {
                return Err(Error::ConventionViolated {
                    convention: "wx-z-rotations".into(),
                    detail: format!(
                        "degree-0 remainder is not e^{{iφ}}|0⟩ (|1⟩ component {:.3e})",
                        dd::norm_sqr(&[v[1]]).sqrt().value()
                    ),
                });
            }
            phases_rev.push(v[0].value().arg());
            break;
        }
        let (lo_idx, hi_idx) = endpoint_indices(picture, n);
        let high = lattice.get(&hi_idx).copied().unwrap_or([DdC::ZERO; 2]);
        let low = lattice.get(&lo_idx).copied().unwrap_or([DdC::ZERO; 2]);
        let phi = if dd::norm_sqr(&high).hi >= dd::norm_sqr(&low).hi {
            ratio_half_phase(high[0].value(), -high[1].value())?
        } else {
            ratio_half_phase(low[0].value(), low[1].value())?
        };
        let op = rotation_z(phi);
        dd_apply_adjoint_op(&mut lattice, &op);
        // (H s̃ H)† = H s̃† H
        dd_hadamard(&mut lattice);
        lattice = dd_unshift_1d(&lattice, picture, n)?;
        dd_hadamard(&mut lattice);
        dd_prune_1d(&mut lattice);
        phases_rev.push(phi);
    }
    phases_rev.reverse();
    Ok(phases_rev)
}

/// Solves e^{-2iφ} = num/den for φ in (-π/2, π/2].
fn ratio_half_phase(den: Complex64, num: Complex64) -> Result<f64> {
    if den.norm() < 1e-12 * num.norm().max(1e-300) || num.norm() < 1e-12 * den.norm() {
        return Err(Error::ConventionViolated {
            convention: "wx".into(),
            detail: "endpoint coefficient is not balanced across both components".into(),
        });
    }
    Ok(fold_half_turn(-0.5 * (num / den).arg()))
}

/// Gate used by synthesis: the state must satisfy the requested convention.
fn check_convention_for_synthesis(
    state: &PolynomialState,
    convention: &SignalConvention,
) -> Result<()> {
    if state.kind() != convention.picture {
        return Err(Error::InvalidConvention(format!(
            "state is {}, convention expects {}",
            state.kind(),
            convention.picture
        )));
    }
    if convention.picture == Kind::Laurent && !has_definite_parity(state) {
        let (even, odd) = parity_split(state);
        return Err(Error::IndefiniteParity { even, odd });
    }
    let report = classify_state_1d(state)?;
    let violated = |id: &str| -> Result<()> {
        if report.passed(id) {
            Ok(())
        } else {
            Err(Error::ConventionViolated {
                convention: id.to_string(),
                detail: format!("{:?}", report.verdict(id).and_then(|v| v.witness.clone())),
            })
        }
    };
    match convention.algebra {
        Algebra::FullSu2 => Ok(()),
        Algebra::XRotations => violated("wz-real-structure"),
        Algebra::ZRotations => violated("wx-reciprocal-symmetry"),
    }
}

/// Synthesizes a protocol that evaluates back to `state`.
///
/// The state must be normalized, match the convention's conditions, and (in
/// the Laurent picture) have definite parity. Protocol equality is never
/// meaningful op-by-op — gauge freedom makes operator lists non-unique — so
/// callers compare protocols by re-evaluation.
pub fn synthesize_1d(state: &PolynomialState, convention: SignalConvention) -> Result<Protocol1D> {
    require_univariate_dim2(state)?;
    convention.check_coherent()?;
    let residual = state.normalization_residual();
    if residual > TOL_NORM {
        return Err(Error::NotNormalized { residual });
    }
    check_convention_for_synthesis(state, &convention)?;

    match (convention.basis, convention.algebra) {
        (Basis::Wz, Algebra::FullSu2) => {
            let ops = extract_general(state, convention.picture)?;
            Protocol1D::new(convention, ops)
        }
        (Basis::Wx, Algebra::FullSu2) => {
            // A W_x protocol evaluates to γ exactly when its Hadamard
            // conjugate (with the boundary Hadamard folded into the first
            // op) evaluates to H·γ in the W_z basis.
            let h = hadamard();
            let conjugated = state.apply_unitary(&h)?;
            let ops_wz = extract_general(&conjugated, convention.picture)?;
            let ops: Vec<UnitaryMatrix> = ops_wz
                .iter()
                .enumerate()
                .map(|(k, op)| {
                    if k == 0 {
                        h.matmul(op).expect("dim 2")
                    } else {
                        h.matmul(op).expect("dim 2").matmul(&h).expect("dim 2")
                    }
                })
                .collect();
            Protocol1D::new(convention, ops)
        }
        (Basis::Wz, Algebra::XRotations) => {
            let phases = extract_x_rotations(state, convention.picture)?;
            Protocol1D::from_phases(convention, phases)
        }
        (Basis::Wx, Algebra::ZRotations) => {
            let phases = extract_z_rotations(state, convention.picture)?;
            Protocol1D::from_phases(convention, phases)
        }
        _ => unreachable!("check_coherent rejected mismatched pairs"),
    }
}

/// Reindexes a definite-parity Laurent state of degree n to the analytic
/// state with the same coefficients: k ↦ (k+n)/2.
pub fn laurent_to_analytic_1d(state: &PolynomialState) -> Result<PolynomialState> {
    require_univariate_dim2(state)?;
    if state.kind() != Kind::Laurent {
        return Err(Error::ShapeMismatch("expected a Laurent state".into()));
    }
    if !has_definite_parity(state) {
        let (even, odd) = parity_split(state);
        return Err(Error::IndefiniteParity { even, odd });
    }
    let n = state.laurent_degree();
    let terms: Vec<(MultiIndex, CVector)> = state
        .terms()
        .map(|(idx, coeff)| (MultiIndex::uni((idx.get(0) + n) / 2), coeff.clone()))
        .collect();
    PolynomialState::new(1, 2, Kind::Analytic, terms)
}

/// Inverse of [`laurent_to_analytic_1d`]: k ↦ 2k - n for an analytic state
/// of degree n.
pub fn analytic_to_laurent_1d(state: &PolynomialState) -> Result<PolynomialState> {
    require_univariate_dim2(state)?;
    if state.kind() != Kind::Analytic {
        return Err(Error::ShapeMismatch("expected an analytic state".into()));
    }
    let n = state.total_degree();
    let terms: Vec<(MultiIndex, CVector)> = state
        .terms()
        .map(|(idx, coeff)| (MultiIndex::uni(2 * idx.get(0) - n), coeff.clone()))
        .collect();
    PolynomialState::new(1, 2, Kind::Laurent, terms)
}

/// Conjugates a protocol into the other signal basis without changing its
/// evaluation. Rotation structure is generally lost at the boundary, so the
/// result is tagged as a full-algebra protocol.
pub fn convert_convention_1d(p: &Protocol1D, target_basis: Basis) -> Result<Protocol1D> {
    if p.convention.basis == target_basis {
        return Ok(p.clone());
    }
    let ops = toggle_basis_ops(&p.ops);
    Protocol1D::new(
        SignalConvention::new(p.convention.picture, target_basis, Algebra::FullSu2),
        ops,
    )
}

/// Evaluates the state at `count` equally spaced torus points; used by tests
/// comparing protocols by evaluation.
pub fn sample_points(count: usize) -> Vec<TorusPoint> {
    (0..count)
        .map(|t| {
            TorusPoint::new(vec![std::f64::consts::TAU * t as f64 / count as f64])
                .expect("finite")
        })
        .collect()
}
