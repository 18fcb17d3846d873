//! JSON documents for states, protocols, and verification fixtures.
//!
//! Documents are versioned under `schema_version`. Complex numbers serialize
//! as `[re, im]` pairs; on input each part may also be an exact rational
//! string like `"-122/37"`, so bundled fixtures stay auditable against their
//! printed sources. Saving always emits plain doubles in shortest
//! round-trip form, which reparse bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error as QspError;
use crate::linalg::{CVector, Complex64, UnitaryMatrix, TOL_UNITARY};
use crate::multivariate::{Choice, ChoiceVector, Protocol2DChoice, Protocol3D};
use crate::state::{Kind, MultiIndex, PolynomialState};
use crate::univariate::{Algebra, Basis, Protocol1D, SignalConvention};

pub const SCHEMA_VERSION: &str = "1";

/// Schema and I/O failures. These map to CLI exit code 1, unlike domain
/// errors which exit with 2.
#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl DocumentError {
    fn schema(msg: impl Into<String>) -> Self {
        DocumentError::Schema(msg.into())
    }
}

pub type DocResult<T> = std::result::Result<T, DocumentError>;

/// One real part: a JSON number, or an exact rational / integer string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RealPart {
    Number(f64),
    Exact(String),
}

impl RealPart {
    fn value(&self) -> DocResult<f64> {
        match self {
            RealPart::Number(x) => Ok(*x),
            RealPart::Exact(s) => parse_rational(s),
        }
    }
}

fn parse_rational(s: &str) -> DocResult<f64> {
    let parse_int = |txt: &str| -> DocResult<f64> {
        txt.trim()
            .parse::<i64>()
            .map(|v| v as f64)
            .map_err(|_| DocumentError::schema(format!("cannot parse '{txt}' as an integer")))
    };
    match s.split_once('/') {
        None => parse_int(s),
        Some((num, den)) => {
            let d = parse_int(den)?;
            if d == 0.0 {
                return Err(DocumentError::schema(format!("zero denominator in '{s}'")));
            }
            Ok(parse_int(num)? / d)
        }
    }
}

fn complex_from_pair(pair: &[RealPart; 2]) -> DocResult<Complex64> {
    Ok(Complex64::new(pair[0].value()?, pair[1].value()?))
}

fn pair_from_complex(z: Complex64) -> [RealPart; 2] {
    [RealPart::Number(z.re), RealPart::Number(z.im)]
}

/// One stored monomial of a state document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermDocument {
    pub exp: Vec<i64>,
    pub coeff: Vec<[RealPart; 2]>,
}

/// Serialized form of a [`PolynomialState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDocument {
    pub schema_version: String,
    pub num_vars: usize,
    pub dim: usize,
    pub kind: Kind,
    pub terms: Vec<TermDocument>,
}

impl StateDocument {
    pub fn from_state(state: &PolynomialState) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            num_vars: state.num_vars(),
            dim: state.dim(),
            kind: state.kind(),
            terms: state
                .terms()
                .map(|(idx, coeff)| TermDocument {
                    exp: idx.exponents().to_vec(),
                    coeff: coeff
                        .entries()
                        .iter()
                        .map(|&z| pair_from_complex(z))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_state(&self) -> DocResult<PolynomialState> {
        check_version(&self.schema_version)?;
        let mut terms: Vec<(MultiIndex, CVector)> = Vec::with_capacity(self.terms.len());
        for (i, term) in self.terms.iter().enumerate() {
            if term.exp.len() != self.num_vars {
                return Err(DocumentError::schema(format!(
                    "term {i}: exp has {} entries, document declares {} variables",
                    term.exp.len(),
                    self.num_vars
                )));
            }
            if term.coeff.len() != self.dim {
                return Err(DocumentError::schema(format!(
                    "term {i}: coeff has {} entries, document declares dim {}",
                    term.coeff.len(),
                    self.dim
                )));
            }
            let entries: DocResult<Vec<Complex64>> =
                term.coeff.iter().map(complex_from_pair).collect();
            let coeff = CVector::new(entries?)
                .map_err(|e| DocumentError::schema(format!("term {i}: {e}")))?;
            terms.push((MultiIndex::new(term.exp.clone()), coeff));
        }
        PolynomialState::new(self.num_vars, self.dim, self.kind, terms)
            .map_err(|e| DocumentError::schema(e.to_string()))
    }
}

/// Protocol families a document can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    UnivariateLaurent,
    UnivariateAnalytic,
    MqspChoice,
    ThreeDim,
}

impl Family {
    pub fn op_dim(self) -> usize {
        match self {
            Family::ThreeDim => 3,
            _ => 2,
        }
    }
}

/// Serialized form of any protocol. Operators are row-major complex
/// matrices; unitarity is rechecked on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolDocument {
    pub schema_version: String,
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Basis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algebra: Option<Algebra>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picture: Option<Kind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    pub ops: Vec<Vec<[RealPart; 2]>>,
}

/// A protocol of any family, after validation.
#[derive(Debug, Clone)]
pub enum AnyProtocol {
    Univariate(Protocol1D),
    Choice(Protocol2DChoice),
    ThreeDim(Protocol3D),
}

impl ProtocolDocument {
    pub fn from_protocol(p: &AnyProtocol) -> Self {
        let ops_of = |ops: &[UnitaryMatrix]| -> Vec<Vec<[RealPart; 2]>> {
            ops.iter()
                .map(|u| u.entries().iter().map(|&z| pair_from_complex(z)).collect())
                .collect()
        };
        match p {
            AnyProtocol::Univariate(p) => Self {
                schema_version: SCHEMA_VERSION.to_string(),
                family: match p.convention.picture {
                    Kind::Laurent => Family::UnivariateLaurent,
                    Kind::Analytic => Family::UnivariateAnalytic,
                },
                basis: Some(p.convention.basis),
                algebra: Some(p.convention.algebra),
                picture: None,
                phases: p.phases.clone(),
                choices: None,
                ops: ops_of(&p.ops),
            },
            AnyProtocol::Choice(p) => Self {
                schema_version: SCHEMA_VERSION.to_string(),
                family: Family::MqspChoice,
                basis: None,
                algebra: None,
                picture: Some(p.picture),
                phases: None,
                choices: Some(p.choices.iter().collect()),
                ops: ops_of(&p.ops),
            },
            AnyProtocol::ThreeDim(p) => Self {
                schema_version: SCHEMA_VERSION.to_string(),
                family: Family::ThreeDim,
                basis: None,
                algebra: None,
                picture: None,
                phases: None,
                choices: None,
                ops: ops_of(&p.ops),
            },
        }
    }

    pub fn to_protocol(&self) -> DocResult<AnyProtocol> {
        self.to_protocol_with_tolerance(TOL_UNITARY)
    }

    pub fn to_protocol_with_tolerance(&self, tol_unitary: f64) -> DocResult<AnyProtocol> {
        check_version(&self.schema_version)?;
        let dim = self.family.op_dim();
        let mut ops: Vec<UnitaryMatrix> = Vec::with_capacity(self.ops.len());
        for (i, raw) in self.ops.iter().enumerate() {
            if raw.len() != dim * dim {
                return Err(DocumentError::schema(format!(
                    "op {i}: {} entries, expected {} for a {dim}x{dim} matrix",
                    raw.len(),
                    dim * dim
                )));
            }
            let entries: DocResult<Vec<Complex64>> = raw.iter().map(complex_from_pair).collect();
            let op = UnitaryMatrix::new_with_tolerance(dim, entries?, tol_unitary).map_err(
                |e| match e {
                    QspError::NotOrthonormal { residual } => DocumentError::schema(format!(
                        "op {i} is not unitary: max |U†U - I| entry is {residual:.6e}"
                    )),
                    other => DocumentError::schema(format!("op {i}: {other}")),
                },
            )?;
            ops.push(op);
        }
        let wrap = |e: QspError| DocumentError::schema(e.to_string());
        match self.family {
            Family::UnivariateLaurent | Family::UnivariateAnalytic => {
                let picture = if self.family == Family::UnivariateLaurent {
                    Kind::Laurent
                } else {
                    Kind::Analytic
                };
                let convention = SignalConvention::new(
                    picture,
                    self.basis.unwrap_or(Basis::Wz),
                    self.algebra.unwrap_or(Algebra::FullSu2),
                );
                let mut p = Protocol1D::new(convention, ops).map_err(wrap)?;
                p.phases = self.phases.clone();
                p.validate().map_err(wrap)?;
                Ok(AnyProtocol::Univariate(p))
            }
            Family::MqspChoice => {
                let choices = ChoiceVector::new(self.choices.clone().ok_or_else(|| {
                    DocumentError::schema("mqsp-choice protocol is missing its choices")
                })?);
                let picture = self.picture.unwrap_or(Kind::Analytic);
                let p = Protocol2DChoice::new(ops, choices, picture).map_err(wrap)?;
                Ok(AnyProtocol::Choice(p))
            }
            Family::ThreeDim => Ok(AnyProtocol::ThreeDim(
                Protocol3D::new(ops).map_err(wrap)?,
            )),
        }
    }
}

fn check_version(version: &str) -> DocResult<()> {
    if version != SCHEMA_VERSION {
        return Err(DocumentError::schema(format!(
            "unsupported schema_version '{version}' (this build reads '{SCHEMA_VERSION}')"
        )));
    }
    Ok(())
}

/// Either document type, discriminated by shape.
#[derive(Debug, Clone)]
pub enum AnyDocument {
    State(StateDocument),
    Protocol(ProtocolDocument),
}

pub fn parse_any(text: &str) -> DocResult<AnyDocument> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| DocumentError::schema("document is not a JSON object"))?;
    if obj.contains_key("terms") {
        Ok(AnyDocument::State(serde_json::from_value(value.clone())?))
    } else if obj.contains_key("ops") {
        Ok(AnyDocument::Protocol(serde_json::from_value(
            value.clone(),
        )?))
    } else {
        Err(DocumentError::schema(
            "document has neither 'terms' (state) nor 'ops' (protocol)",
        ))
    }
}

pub fn read_file(path: &Path) -> DocResult<String> {
    std::fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_state(path: &Path) -> DocResult<PolynomialState> {
    let doc: StateDocument = serde_json::from_str(&read_file(path)?)?;
    doc.to_state()
}

pub fn load_protocol(path: &Path, tol_unitary: f64) -> DocResult<AnyProtocol> {
    let doc: ProtocolDocument = serde_json::from_str(&read_file(path)?)?;
    doc.to_protocol_with_tolerance(tol_unitary)
}

/// Pretty JSON with a trailing newline; field order is fixed by the document
/// structs and term order by the state's sorted storage, so output is
/// deterministic.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable documents");
    s.push('\n');
    s
}

/// Wrapper for golden fixtures: the command to re-run, its input, and the
/// expected output document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyFixture {
    pub schema_version: String,
    /// One of "eval", "qgamma", "check".
    pub command: String,
    /// Input path, relative to the fixture file.
    pub input: String,
    pub expected: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_random_unitary;

    #[test]
    fn rational_strings_parse_exactly() {
        assert_eq!(parse_rational("-122/37").unwrap(), -122.0 / 37.0);
        assert_eq!(parse_rational("1").unwrap(), 1.0);
        assert_eq!(parse_rational(" 719/222 ").unwrap(), 719.0 / 222.0);
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
    }

    #[test]
    fn state_round_trips_bit_exactly() {
        let u = haar_random_unitary(3, 11).unwrap();
        let s = PolynomialState::new(
            2,
            3,
            Kind::Analytic,
            [
                (MultiIndex::bi(0, 0), u.column(0)),
                (MultiIndex::bi(2, 1), u.column(1)),
            ],
        )
        .unwrap();
        let text = to_json_string(&StateDocument::from_state(&s));
        let doc: StateDocument = serde_json::from_str(&text).unwrap();
        let back = doc.to_state().unwrap();
        assert_eq!(s, back);
        // saving the reparsed document reproduces the text byte for byte
        assert_eq!(text, to_json_string(&StateDocument::from_state(&back)));
    }

    #[test]
    fn protocol_round_trips_bit_exactly() {
        let ops: Vec<UnitaryMatrix> = (0..3).map(|k| haar_random_unitary(3, k).unwrap()).collect();
        let p = AnyProtocol::ThreeDim(Protocol3D::new(ops).unwrap());
        let text = to_json_string(&ProtocolDocument::from_protocol(&p));
        let doc: ProtocolDocument = serde_json::from_str(&text).unwrap();
        let AnyProtocol::ThreeDim(back) = doc.to_protocol().unwrap() else {
            panic!("family changed");
        };
        let AnyProtocol::ThreeDim(orig) = p else { unreachable!() };
        assert_eq!(orig, back);
    }

    #[test]
    fn malformed_exponent_length_names_the_term() {
        let text = r#"{
            "schema_version": "1", "num_vars": 2, "dim": 2, "kind": "analytic",
            "terms": [
                {"exp": [0, 0], "coeff": [[1, 0], [0, 0]]},
                {"exp": [1], "coeff": [[0, 0], [1, 0]]}
            ]
        }"#;
        let doc: StateDocument = serde_json::from_str(text).unwrap();
        let err = doc.to_state().unwrap_err();
        assert!(err.to_string().contains("term 1"), "got: {err}");
    }

    #[test]
    fn non_unitary_op_reports_residual() {
        let u = haar_random_unitary(2, 5).unwrap();
        let scaled: Vec<[RealPart; 2]> = u
            .entries()
            .iter()
            .map(|z| pair_from_complex(z * Complex64::new(1.01, 0.0)))
            .collect();
        let doc = ProtocolDocument {
            schema_version: SCHEMA_VERSION.into(),
            family: Family::UnivariateAnalytic,
            basis: None,
            algebra: None,
            picture: None,
            phases: None,
            choices: None,
            ops: vec![scaled],
        };
        let err = doc.to_protocol().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not unitary") && msg.contains("e-"), "got: {msg}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let text = r#"{"schema_version": "2", "num_vars": 1, "dim": 2, "kind": "analytic", "terms": []}"#;
        let doc: StateDocument = serde_json::from_str(text).unwrap();
        assert!(doc.to_state().is_err());
    }
}
