//! Command-line front end.
//!
//! Every command writes one JSON document `{"schema": 1, "command": ..,
//! "verdict": .., ..}` to `--out` (or stdout) and maps its outcome onto the
//! exit status: 0 all verdicts pass, 1 a verdict failed or a hypothesis was
//! violated, 2 invalid input, 3 an iteration or truncation budget ran out.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::certificate::LiftingCertificate;
use crate::convexlift::{
    build_convex_lift, iterate_tower, lmi_feasibility, Variant, Verdict, DEFAULT_LMI_BUDGET, DEFAULT_LMI_TOL,
    DEFAULT_TOWER_TOL,
};
use crate::defect::{classify_with, default_tol, growth_constant, is_m_isometric, DEFAULT_N_MAX};
use crate::error::{IsolabError, Result};
use crate::numerics::random::{random_contraction, random_power_bounded};
use crate::numerics::{c64, CMatrix};
use crate::opcore::{block_from_mats, Mat, Operator};
use crate::serial::SCHEMA;
use crate::shiftlift::{build_bilateral_dilation, build_shift_lift, DEFAULT_DILATION_POWERS, DEFAULT_TRUNC};
use crate::vnfoguel::{
    ergodic_diagnostic, foguel_decoupled, foguel_hankel_lift, foguel_operator, foguel_power_check, lacunary_family,
    polybound_trend, split_upper_triangular, unitary_extension_dilation, vn_check, FoguelSpec, PolyCoeffs,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "isolab", version, about = "Certified m-isometric liftings and dilations")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write the per-step table of tower, foguel-power and ergodic runs here.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Seed for generated test operators.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Δ_m(T) on the exactness interior.
    Defect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        order: u32,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Expansive / contraction / convex / concave / power bounded.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
    },
    /// Lifting constructions: shift, convex, foguel.
    #[command(subcommand)]
    Lift(LiftCommand),
    /// Invertible dilation by a truncated bilateral shift, or a unitary one for contractions.
    Dilate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        m: u32,
        #[arg(long, default_value_t = 128)]
        trunc: usize,
        /// Weight exponent; m + 2 when omitted.
        #[arg(long)]
        exponent: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_DILATION_POWERS)]
        powers: usize,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        #[arg(long)]
        unitary: bool,
    },
    /// ‖p(T)‖ against ‖p(S_K)‖ over a truncation sweep.
    Vn {
        #[arg(long)]
        input: PathBuf,
        /// Real coefficients, constant term first.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        coeffs: Vec<f64>,
        #[arg(long)]
        k: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256])]
        sweep: Vec<usize>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Power bound of the truncated lacunary Foguel operator.
    FoguelPower {
        #[arg(long, default_value_t = 4)]
        n_param: u32,
        #[arg(long, default_value_t = 100)]
        trunc: usize,
        #[arg(long, default_value_t = 4)]
        k_max: u32,
        #[arg(long, default_value_t = 60)]
        n_max: usize,
        /// Also tabulate ‖p_n(F)‖ / sup|p_n| on the lacunary family.
        #[arg(long)]
        trend: bool,
    },
    /// Mean-ergodic diagnostics of T and [[T, I − T], [0, T]].
    Ergodic {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
    },
    /// Re-check certificates from their serialized content.
    Verify {
        #[arg(required = true)]
        certificates: Vec<PathBuf>,
    },
    /// Seeded random test operator.
    Generate {
        #[arg(long, value_enum)]
        kind: GenerateKind,
        #[arg(long)]
        dim: usize,
        /// Norm of a contraction, cond(D) of a power-bounded D·U·D⁻¹.
        #[arg(long)]
        param: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum LiftCommand {
    /// (m+2)-isometric weighted-shift lifting of a power-bounded operator.
    Shift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        m: u32,
        #[arg(long, default_value_t = DEFAULT_TRUNC)]
        trunc: usize,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
    },
    /// Tower T_{j+1} = (T_j)₁ of a convex operator, or an LMI lifting with --lmi.
    Convex {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_TOWER_TOL)]
        tol: f64,
        #[arg(long, value_enum)]
        lmi: Option<LmiVariant>,
        #[arg(long, default_value_t = DEFAULT_LMI_BUDGET)]
        budget: usize,
        #[arg(long, default_value_t = 64)]
        trunc: usize,
    },
    /// 3-isometric lifting of [[C0, C], [0, C1]] with C C1 = C0 C.
    Foguel {
        #[arg(long)]
        input: PathBuf,
        /// Dimension of C0 when the input is a plain matrix.
        #[arg(long)]
        split: Option<usize>,
        #[arg(long, default_value_t = 64)]
        trunc: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LmiVariant {
    A,
    B,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenerateKind {
    Contraction,
    PowerBounded,
}

/// A finished command: the JSON document, an optional CSV table and the exit status.
pub struct Outcome {
    pub exit: i32,
    pub report: Value,
    pub csv: Option<Vec<u8>>,
}

impl Outcome {
    fn new(command: &str, verdict: bool, body: Value) -> Outcome {
        let mut report = json!({ "schema": SCHEMA, "command": command, "verdict": verdict });
        if let (Value::Object(r), Value::Object(b)) = (&mut report, body) {
            r.extend(b);
        }
        Outcome {
            exit: if verdict { EXIT_PASS } else { EXIT_FAIL },
            report,
            csv: None,
        }
    }

    fn with_csv(mut self, csv: Vec<u8>) -> Outcome {
        self.csv = Some(csv);
        self
    }
}

pub fn exit_code(e: &IsolabError) -> i32 {
    use IsolabError::*;
    match e {
        BudgetExceeded { .. } | NoConvergence { .. } => EXIT_BUDGET,
        Dimension(_) | NonFinite | NotSquare { .. } | InvalidParameter(_) | Json(_) | Io(_) | Csv(_) => EXIT_INVALID,
        _ => EXIT_FAIL,
    }
}

fn error_kind(e: &IsolabError) -> &'static str {
    use IsolabError::*;
    match e {
        Dimension(_) => "dimension",
        NonFinite => "non_finite",
        NotSquare { .. } => "not_square",
        NotPsd { .. } => "not_psd",
        MuTooSmall { .. } => "mu_too_small",
        InvalidParameter(_) => "invalid_parameter",
        BudgetExceeded { .. } => "budget_exceeded",
        DivergingGrowth { .. } => "diverging_growth",
        EmbeddingMargin { .. } => "embedding_margin",
        NotConvex { .. } => "not_convex",
        NotContraction { .. } => "not_contraction",
        Intertwining { .. } => "intertwining",
        NotPowerBounded(_) => "not_power_bounded",
        NoConvergence { .. } => "no_convergence",
        Infeasible(_) => "infeasible",
        NonpositiveWeight { .. } => "nonpositive_weight",
        Json(_) => "json",
        Io(_) => "io",
        Csv(_) => "csv",
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Defect { .. } => "defect",
        Command::Classify { .. } => "classify",
        Command::Lift(LiftCommand::Shift { .. }) => "lift shift",
        Command::Lift(LiftCommand::Convex { .. }) => "lift convex",
        Command::Lift(LiftCommand::Foguel { .. }) => "lift foguel",
        Command::Dilate { .. } => "dilate",
        Command::Vn { .. } => "vn",
        Command::FoguelPower { .. } => "foguel-power",
        Command::Ergodic { .. } => "ergodic",
        Command::Verify { .. } => "verify",
        Command::Generate { .. } => "generate",
    }
}

fn read_operator(path: &Path) -> Result<Operator> {
    crate::serial::operator_from_str(&fs::read_to_string(path)?)
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

/// Thread cap from ISOLAB_THREADS, else the available parallelism.
pub fn thread_budget() -> Result<usize> {
    match std::env::var("ISOLAB_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(IsolabError::InvalidParameter(format!("ISOLAB_THREADS = {s:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs one command. Errors are folded into the outcome: hypothesis
/// violations still produce a JSON report, invalid input does not.
pub fn run(config: &RunConfig) -> Outcome {
    let name = command_name(&config.command);
    match dispatch(config) {
        Ok(o) => o,
        Err(e) => {
            let exit = exit_code(&e);
            let body = json!({ "error": { "kind": error_kind(&e), "message": e.to_string() } });
            let mut o = Outcome::new(name, false, body);
            o.exit = exit;
            o
        }
    }
}

fn dispatch(config: &RunConfig) -> Result<Outcome> {
    let name = command_name(&config.command);
    match &config.command {
        Command::Defect { input, order, tol } => {
            let t = read_operator(input)?;
            let tol = tol.unwrap_or_else(|| default_tol(&t));
            let r = is_m_isometric(&t, *order, tol)?;
            Ok(Outcome::new(name, r.verdict, json!({ "report": to_value(&r)? })))
        }
        Command::Classify { input, tol, n_max } => {
            let t = read_operator(input)?;
            let tol = tol.unwrap_or_else(|| default_tol(&t));
            let c = classify_with(&t, tol, *n_max)?;
            Ok(Outcome::new(name, true, json!({ "labels": c.labels(), "report": to_value(&c)? })))
        }
        Command::Lift(LiftCommand::Shift { input, m, trunc, n_max }) => {
            let t = read_operator(input)?;
            certificate_outcome(name, build_shift_lift(&t, *m, *trunc, *n_max)?)
        }
        Command::Lift(LiftCommand::Convex {
            input,
            steps,
            tol,
            lmi,
            budget,
            trunc,
        }) => {
            let t = read_operator(input)?;
            match lmi {
                None => {
                    let run = iterate_tower(&t, *steps, *tol)?;
                    let verdict = run.divergence.is_none() && run.converged_at.is_some();
                    let mut table = Vec::new();
                    run.write_csv(&mut table)?;
                    Ok(Outcome::new(name, verdict, json!({ "tower": to_value(&run)? })).with_csv(table))
                }
                Some(v) => {
                    let variant = match v {
                        LmiVariant::A => Variant::A,
                        LmiVariant::B => Variant::B,
                    };
                    let r = lmi_feasibility(&t, variant, *budget, DEFAULT_LMI_TOL)?;
                    if r.verdict != Verdict::Feasible {
                        return Ok(Outcome::new(name, false, json!({ "feasibility": to_value(&r)? })));
                    }
                    let cert = build_convex_lift(&t, &r, *trunc)?;
                    let verdict = cert.verdict();
                    Ok(Outcome::new(
                        name,
                        verdict,
                        json!({ "feasibility": to_value(&r)?, "certificate": to_value(&cert)? }),
                    ))
                }
            }
        }
        Command::Lift(LiftCommand::Foguel { input, split, trunc }) => {
            let mut t = read_operator(input)?;
            if let Some(d0) = split {
                t = as_two_blocks(&t, *d0)?;
            }
            let (c0, c, c1) = split_upper_triangular(&t)?;
            certificate_outcome(name, foguel_hankel_lift(&c0, &c, &c1, *trunc)?)
        }
        Command::Dilate {
            input,
            m,
            trunc,
            exponent,
            powers,
            n_max,
            unitary,
        } => {
            let t = read_operator(input)?;
            let cert = if *unitary {
                unitary_extension_dilation(&t, *trunc, *powers)?
            } else {
                build_bilateral_dilation(&t, *m, *trunc, *exponent, *n_max, *powers)?
            };
            certificate_outcome(name, cert)
        }
        Command::Vn {
            input,
            coeffs,
            k,
            sweep,
            tol,
        } => {
            let t = read_operator(input)?;
            let p = PolyCoeffs::real(coeffs)?;
            let r = vn_check(&p, &t, *k, sweep, *tol)?;
            Ok(Outcome::new(name, r.pass, json!({ "report": to_value(&r)? })))
        }
        Command::FoguelPower {
            n_param,
            trunc,
            k_max,
            n_max,
            trend,
        } => {
            let spec = FoguelSpec {
                n_param: *n_param,
                trunc: *trunc,
                k_max: *k_max,
            };
            let r = foguel_power_check(&spec, *n_max)?;
            let mut body = json!({ "report": to_value(&r)? });
            if *trend {
                let fam = lacunary_family(*k_max);
                body["trend"] = to_value(&polybound_trend(&foguel_operator(&spec)?, &fam)?)?;
                body["trend_decoupled"] = to_value(&polybound_trend(&foguel_decoupled(&spec)?, &fam)?)?;
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["n", "norm", "x_norm"])?;
            for (n, v) in r.norms.iter().enumerate() {
                let x = if n == 0 { String::new() } else { r.x_norms[n - 1].to_string() };
                w.write_record([n.to_string(), v.to_string(), x])?;
            }
            let table = w.into_inner().map_err(|e| IsolabError::Io(e.into_error()))?;
            Ok(Outcome::new(name, r.pass, body).with_csv(table))
        }
        Command::Ergodic { input, n_max } => {
            let t = read_operator(input)?;
            let r = ergodic_diagnostic(&t, *n_max)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["n", "tilde_over_n", "difference"])?;
            for n in 1..=*n_max {
                w.write_record([n.to_string(), r.tilde_over_n[n - 1].to_string(), r.differences[n - 1].to_string()])?;
            }
            let table = w.into_inner().map_err(|e| IsolabError::Io(e.into_error()))?;
            Ok(Outcome::new(name, r.differences_vanishing, json!({ "report": to_value(&r)? })).with_csv(table))
        }
        Command::Verify { certificates } => verify(name, certificates),
        Command::Generate { kind, dim, param } => {
            if *dim == 0 {
                return Err(IsolabError::InvalidParameter("dimension must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let a = match kind {
                GenerateKind::Contraction => random_contraction(&mut rng, *dim, *param),
                GenerateKind::PowerBounded => {
                    if !(*param >= 1.0) {
                        return Err(IsolabError::InvalidParameter("cond(D) must be at least 1".into()));
                    }
                    random_power_bounded(&mut rng, *dim, *param)
                }
            };
            let op = Operator::dense(a)?;
            let k = growth_constant(&op, 0, DEFAULT_N_MAX)?;
            Ok(Outcome::new(
                name,
                true,
                json!({ "seed": config.seed, "growth_k": k.k, "operator": to_value(&op)? }),
            ))
        }
    }
}

fn certificate_outcome(name: &str, cert: LiftingCertificate) -> Result<Outcome> {
    let verdict = cert.verdict();
    Ok(Outcome::new(name, verdict, json!({ "certificate": to_value(&cert)? })))
}

fn as_two_blocks(t: &Operator, d0: usize) -> Result<Operator> {
    let d = t.dim();
    if d0 == 0 || d0 >= d {
        return Err(IsolabError::InvalidParameter(format!("split {d0} outside 1..{d}")));
    }
    let a = t.to_dense();
    let blk = |r: usize, c: usize, h: usize, w: usize| -> CMatrix { a.view((r, c), (h, w)).into_owned() };
    let lower = blk(d0, 0, d - d0, d0);
    if lower.iter().any(|z| *z != c64(0.0, 0.0)) {
        return Err(IsolabError::InvalidParameter("lower-left block must be zero".into()));
    }
    block_from_mats(&[
        vec![Some(Mat::Dense(blk(0, 0, d0, d0))), Some(Mat::Dense(blk(0, d0, d0, d - d0)))],
        vec![None, Some(Mat::Dense(blk(d0, d0, d - d0, d - d0)))],
    ])
}

/// Reads a certificate from either a bare certificate document or a
/// command report carrying one under "certificate".
pub fn read_certificate(path: &Path) -> Result<LiftingCertificate> {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    if let Some(inner) = v.get_mut("certificate") {
        v = inner.take();
    }
    Ok(serde_json::from_value(v)?)
}

fn verify(name: &str, paths: &[PathBuf]) -> Result<Outcome> {
    let certs = paths.iter().map(|p| read_certificate(p)).collect::<Result<Vec<_>>>()?;
    let threads = thread_budget()?.min(certs.len()).max(1);
    let chunk = certs.len().div_ceil(threads);
    let results: Vec<Result<Value>> = std::thread::scope(|s| {
        let handles: Vec<_> = certs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|c| {
                            let r = c.revalidate()?;
                            Ok(json!({
                                "provenance": c.provenance,
                                "stored_verdict": c.verdict(),
                                "verdict": r.verdict && c.checks.iter().all(|k| k.pass),
                                "max_gap": r.max_gap,
                                "revalidation": to_value(&r)?,
                            }))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("verify worker panicked")).collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let verdict = results.iter().all(|r| r["verdict"] == Value::Bool(true));
    let files: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    Ok(Outcome::new(name, verdict, json!({ "files": files, "results": results })))
}

/// Runs a command and writes its artifacts; returns the exit status.
pub fn execute(config: &RunConfig) -> i32 {
    let outcome = run(config);
    if outcome.exit == EXIT_INVALID {
        eprintln!("isolab: {}", outcome.report["error"]["message"].as_str().unwrap_or("invalid input"));
        return EXIT_INVALID;
    }
    let text = match serde_json::to_string_pretty(&outcome.report) {
        Ok(t) => t + "\n",
        Err(e) => {
            eprintln!("isolab: {e}");
            return EXIT_INVALID;
        }
    };
    let written = match &config.out {
        Some(p) => fs::write(p, &text),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    let written = written.and_then(|_| match (&config.csv, &outcome.csv) {
        (Some(p), Some(table)) => fs::write(p, table),
        _ => Ok(()),
    });
    if let Err(e) = written {
        eprintln!("isolab: {e}");
        return EXIT_INVALID;
    }
    outcome.exit
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("isolab").chain(args.iter().copied())).unwrap()
    }

    fn temp_file(name: &str, body: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("isolab-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn defect_on_a_shift_passes() {
        let p = temp_file("shift.json", r#"{"kind":"unilateral_shift","weights":[1,1,1,1,1,1,1,1],"trunc":8,"multiplicity":1}"#);
        let o = run(&parse(&["defect", "--input", p.to_str().unwrap(), "--order", "3", "--tol", "1e-9"]));
        assert_eq!(o.exit, EXIT_PASS);
        assert_eq!(o.report["schema"], 1);
    }

    #[test]
    fn jordan_tower_diverges() {
        let p = temp_file("jordan.json", r#"{"kind":"dense","re":[[1,1],[0,1]]}"#);
        let o = run(&parse(&["lift", "convex", "--input", p.to_str().unwrap(), "--steps", "10"]));
        assert_eq!(o.exit, EXIT_FAIL);
        assert!(!o.report["tower"]["divergence"].is_null());
    }

    #[test]
    fn exit_codes_for_bad_input_and_budget() {
        let p = temp_file("ragged.json", r#"{"kind":"dense","re":[[1,2],[3]]}"#);
        assert_eq!(run(&parse(&["classify", "--input", p.to_str().unwrap()])).exit, EXIT_INVALID);
        let p = temp_file("half.json", r#"{"kind":"dense","re":[[0.5,0],[0,0.25]]}"#);
        let o = run(&parse(&["lift", "convex", "--input", p.to_str().unwrap(), "--steps", "20"]));
        assert_eq!(o.exit, EXIT_BUDGET);
    }

    #[test]
    fn generate_is_deterministic() {
        let args = ["generate", "--kind", "power-bounded", "--dim", "3", "--param", "2", "--seed", "9"];
        let a = serde_json::to_string(&run(&parse(&args)).report).unwrap();
        let b = serde_json::to_string(&run(&parse(&args)).report).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_requires_zero_corner() {
        let t = Operator::dense(crate::numerics::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        assert!(as_two_blocks(&t, 1).is_err());
        let t = Operator::dense(crate::numerics::from_real_rows(&[&[1.0, 2.0], &[0.0, 4.0]])).unwrap();
        assert!(matches!(as_two_blocks(&t, 1).unwrap().structure, crate::opcore::Structure::Block { .. }));
    }
}
