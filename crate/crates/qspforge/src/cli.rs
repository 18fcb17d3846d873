//! Command-line entry points: eval, synth, check, convert, qgamma, rand, and
//! golden-fixture verification.
//!
//! All commands print canonical JSON (sorted keys, shortest round-trip
//! doubles) on stdout. Exit codes: 0 on success, 2 on domain precondition
//! failures (with a machine-readable error object on stdout), 1 on I/O or
//! schema failures (error object on stderr).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::Error as QspError;
use crate::io::{
    load_protocol, load_state, parse_any, read_file, AnyDocument, AnyProtocol, Family,
    ProtocolDocument, StateDocument, VerifyFixture,
};
use crate::linalg::{haar_from_rng, TOL_RANK, TOL_UNITARY};
use crate::multivariate::{
    check_extractable, check_necessary_mqsp, check_unimplementable_with, decompose_3d,
    embed_2d_in_3d, evaluate_protocol_2d_choice, evaluate_protocol_3d, q_gamma_raw, q_gamma_with,
    Choice, ChoiceVector, Protocol2DChoice, Protocol3D, QGammaResult,
};
use crate::state::{Kind, PolynomialState, TOL_NORM};
use crate::univariate::{
    analytic_to_laurent_1d, classify_state_1d, convert_convention_1d, evaluate_protocol_1d,
    laurent_to_analytic_1d, synthesize_1d, Algebra, Basis, Protocol1D, SignalConvention,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tolerances used by the CLI; `QSPFORGE_TOL=<x>` overrides all three.
#[derive(Debug, Clone, Copy)]
struct Tolerances {
    unitary: f64,
    rank: f64,
    norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitary: TOL_UNITARY,
            rank: TOL_RANK,
            norm: TOL_NORM,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qspforge",
    version,
    about = "Evaluate, check, and synthesize quantum-signal-processing protocols"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a protocol document into its polynomial state
    Eval(EvalArgs),
    /// Synthesize a protocol that evaluates to a given polynomial state
    Synth(SynthArgs),
    /// Run the condition checkers appropriate for a state
    Check(CheckArgs),
    /// Convert states between pictures, protocols between bases, or embed a
    /// choice protocol into three dimensions
    Convert(ConvertArgs),
    /// Compute q(γ) and the inapproximability radius of a bivariate state
    Qgamma(QgammaArgs),
    /// Generate a seeded random protocol
    Rand(RandArgs),
    /// Re-derive fixtures and diff against their expected outputs
    Verify(VerifyArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Protocol document (JSON)
    input: PathBuf,
    /// Expected-output JSON to diff against
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// State document (JSON)
    input: PathBuf,
    /// Target family: univariate-laurent, univariate-analytic, or three-dim
    #[arg(long)]
    family: String,
    /// Signal basis for univariate synthesis: wz or wx
    #[arg(long, default_value = "wz")]
    basis: String,
    /// Processing algebra: full-su2, x-rotations, or z-rotations
    #[arg(long, default_value = "full-su2")]
    algebra: String,
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// State document (JSON)
    input: PathBuf,
    /// Comma-separated choice vector (e.g. a,b,a) to check the
    /// classical-choice necessary conditions
    #[arg(long)]
    choices: Option<String>,
    /// Signal basis the structural condition refers to: wz or wx
    #[arg(long, default_value = "wz")]
    basis: String,
    /// Processing algebra: full-su2 skips the structural condition
    #[arg(long, default_value = "full-su2")]
    algebra: String,
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// State or protocol document (JSON)
    input: PathBuf,
    /// Target: analytic | laurent (univariate states), wz | wx (univariate
    /// protocols), three-dim (choice protocols)
    #[arg(long)]
    to: String,
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct QgammaArgs {
    /// State document (JSON)
    input: PathBuf,
    /// Sweep the coefficients as given, without rescaling or the
    /// polynomial-state check
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct RandArgs {
    /// Family: univariate-laurent, univariate-analytic, mqsp-choice, three-dim
    #[arg(long)]
    family: String,
    /// Number of signal calls
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Fixture files (*.expected.json) or directories containing them
    paths: Vec<PathBuf>,
    /// Number of worker threads for batch verification
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

enum Failure {
    /// Domain precondition violations: exit 2.
    Domain(QspError),
    /// I/O, schema, or verification mismatches: exit 1.
    Io(String),
}

impl From<QspError> for Failure {
    fn from(e: QspError) -> Self {
        Failure::Domain(e)
    }
}

impl From<crate::io::DocumentError> for Failure {
    fn from(e: crate::io::DocumentError) -> Self {
        Failure::Io(e.to_string())
    }
}

type CmdResult = std::result::Result<Value, Failure>;

fn canonical(value: &impl serde::Serialize) -> Value {
    serde_json::to_value(value).expect("finite, serializable")
}

fn parse_family(s: &str) -> std::result::Result<Family, Failure> {
    match s {
        "univariate-laurent" => Ok(Family::UnivariateLaurent),
        "univariate-analytic" => Ok(Family::UnivariateAnalytic),
        "mqsp-choice" => Ok(Family::MqspChoice),
        "three-dim" => Ok(Family::ThreeDim),
        other => Err(Failure::Domain(QspError::InvalidConvention(format!(
            "unknown family '{other}'"
        )))),
    }
}

fn parse_basis(s: &str) -> std::result::Result<Basis, Failure> {
    match s {
        "wz" => Ok(Basis::Wz),
        "wx" => Ok(Basis::Wx),
        other => Err(Failure::Domain(QspError::InvalidConvention(format!(
            "unknown basis '{other}'"
        )))),
    }
}

fn parse_algebra(s: &str) -> std::result::Result<Algebra, Failure> {
    match s {
        "full-su2" => Ok(Algebra::FullSu2),
        "x-rotations" => Ok(Algebra::XRotations),
        "z-rotations" => Ok(Algebra::ZRotations),
        other => Err(Failure::Domain(QspError::InvalidConvention(format!(
            "unknown algebra '{other}'"
        )))),
    }
}

fn parse_choices(s: &str) -> std::result::Result<ChoiceVector, Failure> {
    let mut choices = Vec::new();
    for part in s.split(',') {
        match part.trim().to_ascii_lowercase().as_str() {
            "a" => choices.push(Choice::A),
            "b" => choices.push(Choice::B),
            other => {
                return Err(Failure::Domain(QspError::InvalidConvention(format!(
                    "choice '{other}' is neither 'a' nor 'b'"
                ))))
            }
        }
    }
    Ok(ChoiceVector::new(choices))
}

fn evaluate_any(protocol: &AnyProtocol) -> std::result::Result<PolynomialState, QspError> {
    match protocol {
        AnyProtocol::Univariate(p) => evaluate_protocol_1d(p),
        AnyProtocol::Choice(p) => evaluate_protocol_2d_choice(p),
        AnyProtocol::ThreeDim(p) => evaluate_protocol_3d(p),
    }
}

fn cmd_eval(input: &Path, tol: &Tolerances) -> CmdResult {
    let protocol = load_protocol(input, tol.unitary)?;
    let state = evaluate_any(&protocol)?;
    Ok(canonical(&StateDocument::from_state(&state)))
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let state = load_state(&args.input)?;
    match parse_family(&args.family)? {
        family @ (Family::UnivariateLaurent | Family::UnivariateAnalytic) => {
            let picture = if family == Family::UnivariateLaurent {
                Kind::Laurent
            } else {
                Kind::Analytic
            };
            let convention = SignalConvention::new(
                picture,
                parse_basis(&args.basis)?,
                parse_algebra(&args.algebra)?,
            );
            let p = synthesize_1d(&state, convention)?;
            Ok(canonical(&ProtocolDocument::from_protocol(
                &AnyProtocol::Univariate(p),
            )))
        }
        Family::ThreeDim => {
            let state3 = if state.dim() == 2 {
                state.embed_dim3()?
            } else {
                state
            };
            let p = decompose_3d(&state3)?;
            Ok(canonical(&ProtocolDocument::from_protocol(
                &AnyProtocol::ThreeDim(p),
            )))
        }
        Family::MqspChoice => Err(Failure::Domain(QspError::InvalidConvention(
            "no synthesis routine targets classical-choice protocols; use three-dim".into(),
        ))),
    }
}

fn cmd_check(args: &CheckArgs, tol: &Tolerances) -> CmdResult {
    let state = load_state(&args.input)?;
    let report = if let Some(choices) = &args.choices {
        let choices = parse_choices(choices)?;
        let convention = SignalConvention::new(
            state.kind(),
            parse_basis(&args.basis)?,
            parse_algebra(&args.algebra)?,
        );
        check_necessary_mqsp(&state, &choices, &convention)?
    } else if state.num_vars() == 1 {
        classify_state_1d(&state)?
    } else if state.dim() == 2 {
        check_unimplementable_with(&state, tol.rank)?
    } else {
        check_extractable(&state)?
    };
    Ok(canonical(&report))
}

fn cmd_convert(args: &ConvertArgs, tol: &Tolerances) -> CmdResult {
    let text = read_file(&args.input)?;
    let doc = parse_any(&text)?;
    match (doc, args.to.as_str()) {
        (AnyDocument::State(doc), "analytic") => {
            let state = doc.to_state()?;
            let converted = laurent_to_analytic_1d(&state)?;
            Ok(canonical(&StateDocument::from_state(&converted)))
        }
        (AnyDocument::State(doc), "laurent") => {
            let state = doc.to_state()?;
            let converted = analytic_to_laurent_1d(&state)?;
            Ok(canonical(&StateDocument::from_state(&converted)))
        }
        (AnyDocument::Protocol(doc), target @ ("wz" | "wx")) => {
            let protocol = doc.to_protocol_with_tolerance(tol.unitary)?;
            let AnyProtocol::Univariate(p) = protocol else {
                return Err(Failure::Domain(QspError::InvalidConvention(
                    "basis conversion applies to univariate protocols".into(),
                )));
            };
            let converted = convert_convention_1d(&p, parse_basis(target)?)?;
            Ok(canonical(&ProtocolDocument::from_protocol(
                &AnyProtocol::Univariate(converted),
            )))
        }
        (AnyDocument::Protocol(doc), "three-dim") => {
            let protocol = doc.to_protocol_with_tolerance(tol.unitary)?;
            let AnyProtocol::Choice(p) = protocol else {
                return Err(Failure::Domain(QspError::InvalidConvention(
                    "three-dim embedding applies to mqsp-choice protocols".into(),
                )));
            };
            let embedded = embed_2d_in_3d(&p)?;
            Ok(canonical(&ProtocolDocument::from_protocol(
                &AnyProtocol::ThreeDim(embedded),
            )))
        }
        (_, other) => Err(Failure::Domain(QspError::InvalidConvention(format!(
            "cannot convert this document to '{other}'"
        )))),
    }
}

fn qgamma_value(r: &QGammaResult) -> Value {
    json!({
        "q": r.q,
        "radius": r.q / 4.0,
        "max_a": r.max_a,
        "argmax_a": [r.argmax_a.0, r.argmax_a.1],
        "max_b": r.max_b,
        "argmax_b": [r.argmax_b.0, r.argmax_b.1],
        "normalized_input": r.normalized_input,
    })
}

fn cmd_qgamma(args: &QgammaArgs, tol: &Tolerances) -> CmdResult {
    let state = load_state(&args.input)?;
    let r = if args.raw {
        q_gamma_raw(&state)?
    } else {
        q_gamma_with(&state, tol.norm)?
    };
    Ok(qgamma_value(&r))
}

fn cmd_rand(args: &RandArgs) -> CmdResult {
    let family = parse_family(&args.family)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let dim = family.op_dim();
    let ops: Vec<_> = (0..=args.steps).map(|_| haar_from_rng(dim, &mut rng)).collect();
    let protocol = match family {
        Family::UnivariateLaurent => AnyProtocol::Univariate(Protocol1D::new(
            SignalConvention::full(Kind::Laurent),
            ops,
        )?),
        Family::UnivariateAnalytic => AnyProtocol::Univariate(Protocol1D::new(
            SignalConvention::full(Kind::Analytic),
            ops,
        )?),
        Family::MqspChoice => {
            use rand::Rng;
            let choices = ChoiceVector::new(
                (0..args.steps)
                    .map(|_| if rng.random_bool(0.5) { Choice::A } else { Choice::B })
                    .collect(),
            );
            AnyProtocol::Choice(Protocol2DChoice::new(ops, choices, Kind::Analytic)?)
        }
        Family::ThreeDim => AnyProtocol::ThreeDim(Protocol3D::new(ops)?),
    };
    Ok(canonical(&ProtocolDocument::from_protocol(&protocol)))
}

/// Approximate structural equality of JSON values; numbers compare within a
/// relative/absolute tolerance so regenerated doubles never flicker.
fn json_close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0),
            _ => x == y,
        },
        (Value::Array(xs), Value::Array(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| json_close(x, y, tol))
        }
        (Value::Object(xs), Value::Object(ys)) => {
            xs.len() == ys.len()
                && xs
                    .iter()
                    .all(|(k, x)| ys.get(k).map_or(false, |y| json_close(x, y, tol)))
        }
        _ => a == b,
    }
}

const VERIFY_TOL: f64 = 1e-12;

fn run_fixture(path: &Path, tol: &Tolerances) -> std::result::Result<(), String> {
    let text = read_file(path).map_err(|e| e.to_string())?;
    let fixture: VerifyFixture =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if fixture.schema_version != crate::io::SCHEMA_VERSION {
        return Err(format!(
            "{}: unsupported schema_version {}",
            path.display(),
            fixture.schema_version
        ));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let input = base.join(&fixture.input);
    let derived = match fixture.command.as_str() {
        "eval" => cmd_eval(&input, tol),
        "qgamma" => cmd_qgamma(
            &QgammaArgs {
                input: input.clone(),
                raw: false,
                verify: None,
            },
            tol,
        ),
        "check" => cmd_check(
            &CheckArgs {
                input: input.clone(),
                choices: None,
                basis: "wz".into(),
                algebra: "full-su2".into(),
                verify: None,
            },
            tol,
        ),
        other => return Err(format!("{}: unknown fixture command '{other}'", path.display())),
    };
    let derived = match derived {
        Ok(v) => v,
        Err(Failure::Domain(e)) => {
            return Err(format!("{}: derivation failed: {e}", path.display()))
        }
        Err(Failure::Io(e)) => return Err(format!("{}: {e}", path.display())),
    };
    if json_close(&derived, &fixture.expected, VERIFY_TOL) {
        Ok(())
    } else {
        Err(format!(
            "{}: derived output differs from expected",
            path.display()
        ))
    }
}

fn collect_fixture_paths(paths: &[PathBuf]) -> std::result::Result<Vec<PathBuf>, String> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| format!("{}: {e}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .map_or(false, |n| n.ends_with(".expected.json"))
                })
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err("no fixture files found".into());
    }
    Ok(out)
}

fn cmd_verify(args: &VerifyArgs, tol: &Tolerances) -> CmdResult {
    let files = collect_fixture_paths(&args.paths).map_err(Failure::Io)?;
    let jobs = args.jobs.max(1).min(files.len());
    let results: Vec<(PathBuf, std::result::Result<(), String>)> = if jobs <= 1 {
        files
            .iter()
            .map(|f| (f.clone(), run_fixture(f, tol)))
            .collect()
    } else {
        let slots: std::sync::Mutex<Vec<Option<(PathBuf, std::result::Result<(), String>)>>> =
            std::sync::Mutex::new((0..files.len()).map(|_| None).collect());
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= files.len() {
                        break;
                    }
                    let outcome = (files[i].clone(), run_fixture(&files[i], tol));
                    slots.lock().expect("no poisoned workers")[i] = Some(outcome);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    };
    let mut all_pass = true;
    let report: Vec<Value> = results
        .iter()
        .map(|(path, outcome)| {
            let pass = outcome.is_ok();
            all_pass &= pass;
            json!({
                "fixture": path.display().to_string(),
                "pass": pass,
                "detail": outcome.as_ref().err().cloned().unwrap_or_default(),
            })
        })
        .collect();
    let value = json!({"fixtures": report, "pass": all_pass});
    if all_pass {
        Ok(value)
    } else {
        Err(Failure::Io(crate::io::to_json_string(&value)))
    }
}

fn tolerances_from_env() -> std::result::Result<Tolerances, String> {
    let mut tol = Tolerances::default();
    if let Ok(text) = std::env::var("QSPFORGE_TOL") {
        let v: f64 = text
            .trim()
            .parse()
            .map_err(|_| format!("QSPFORGE_TOL: cannot parse '{text}' as a float"))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("QSPFORGE_TOL must be a positive float, got '{text}'"));
        }
        tol = Tolerances {
            unitary: v,
            rank: v,
            norm: v,
        };
    }
    Ok(tol)
}

/// Runs the CLI on explicit arguments, writing to the given streams.
/// Returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return 2;
        }
    };
    let tol = match tolerances_from_env() {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "{}", error_json("schema", &msg));
            return 1;
        }
    };
    let (result, verify_path): (CmdResult, Option<PathBuf>) = match &cli.cmd {
        Cmd::Eval(a) => (cmd_eval(&a.input, &tol), a.verify.clone()),
        Cmd::Synth(a) => (cmd_synth(a), a.verify.clone()),
        Cmd::Check(a) => (cmd_check(a, &tol), a.verify.clone()),
        Cmd::Convert(a) => (cmd_convert(a, &tol), a.verify.clone()),
        Cmd::Qgamma(a) => (cmd_qgamma(a, &tol), a.verify.clone()),
        Cmd::Rand(a) => (cmd_rand(a), a.verify.clone()),
        Cmd::Verify(a) => (cmd_verify(a, &tol), None),
    };
    match result {
        Ok(value) => {
            if let Some(expected_path) = verify_path {
                match read_file(&expected_path)
                    .map_err(|e| e.to_string())
                    .and_then(|t| serde_json::from_str::<Value>(&t).map_err(|e| e.to_string()))
                {
                    Ok(expected) if json_close(&value, &expected, VERIFY_TOL) => {}
                    Ok(_) => {
                        let _ = writeln!(
                            err,
                            "{}",
                            error_json("verify-mismatch", "output differs from expected file")
                        );
                        return 1;
                    }
                    Err(msg) => {
                        let _ = writeln!(err, "{}", error_json("io", &msg));
                        return 1;
                    }
                }
            }
            let _ = write!(out, "{}", crate::io::to_json_string(&value));
            0
        }
        Err(Failure::Domain(e)) => {
            let payload = json!({
                "error": {"kind": e.kind(), "message": e.to_string()}
            });
            let _ = write!(out, "{}", crate::io::to_json_string(&payload));
            2
        }
        Err(Failure::Io(msg)) => {
            let _ = writeln!(err, "{}", error_json("io", &msg));
            1
        }
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::to_string(&json!({"error": {"kind": kind, "message": message}}))
        .expect("serializable")
}
