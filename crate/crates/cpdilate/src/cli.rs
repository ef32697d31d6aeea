//! Command-line front end.
//!
//! Every analysis command reads an instance file (JSON, version
//! `cpdilate/1`), runs one computation, and writes a certificate (JSON,
//! version `cpdilate-cert/1`) or a text report. Exit status is `0` when the
//! mathematical verdict succeeds, `1` when it fails (the certificate is
//! still written), and `2` on malformed input.

use crate::algebra::CStarAlgebra;
use crate::certificate::{
    verification_deviation, verify_certificate, CertificateFile, ShapeContext,
};
use crate::cpmatrix::{random_cp_pair, NPositiveMatrixMap};
use crate::error::{CpError, Result};
use crate::flag::FlagSpace;
use crate::instance::{canonical_json, float_value, parse_instance, InstanceFile};
use crate::ksgns::{build_dilation, equivalence_attempt, DilationData};
use crate::linalg::{CMatrix, Tolerances};
use crate::module::{HilbertModule, ModuleKind};
use crate::radon_nikodym::{
    commutant_basis, commutant_closure_residual, domination_check, domination_witness_element,
    order_iso_roundtrip, rn_derivative, t_determines_n_residual, DominationVerdict,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

pub const TOL_ENV_VAR: &str = "CPDILATE_TOL_RES";

#[derive(Parser)]
#[command(
    name = "cpdilate",
    about = "KSGNS dilations and Radon-Nikodym calculus for CP matrices of maps on Hilbert C*-modules",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct CommonOpts {
    /// Input file (defaults to stdin).
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// Output file (defaults to stdout).
    #[arg(long = "out", value_name = "FILE")]
    output: Option<PathBuf>,
    /// Seed for every randomized step; overrides the instance seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative rank cutoff.
    #[arg(long = "tol-rank", value_name = "X")]
    tol_rank: Option<f64>,
    /// Positive-semidefiniteness slack.
    #[arg(long = "tol-psd", value_name = "X")]
    tol_psd: Option<f64>,
    /// Residual acceptance threshold.
    #[arg(long = "tol-res", value_name = "X")]
    tol_res: Option<f64>,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SampleOpts {
    /// Number of randomized samples / trials.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random compatible instance and write it as an instance file.
    Gen {
        #[command(flatten)]
        common: CommonOpts,
        /// Algebra block dimensions, comma separated (e.g. "2" or "1,2").
        #[arg(long, default_value = "2")]
        algebra: String,
        /// Matrix size n of the CP matrix of maps.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Stinespring multiplicity of the generated witness.
        #[arg(long, default_value_t = 2)]
        mult: usize,
        /// Module kind: "self", "free:N", or "rect:d1,d2,...".
        #[arg(long, default_value = "self")]
        module: String,
        /// Flag dimensions of the source space H, comma separated.
        #[arg(long = "flag-h", default_value = "2")]
        flag_h: String,
        /// Flag dimensions of the target space K, comma separated.
        #[arg(long = "flag-k", default_value = "2")]
        flag_k: String,
    },
    /// Decide complete positivity of the scalar part via its Choi matrix.
    CheckCp {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build the minimal dilation of the primary pair.
    Dilate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Decide unitary equivalence of the dilations of the primary and
    /// secondary pairs.
    Equiv {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Decide whether the secondary pair is dominated by the primary pair.
    Dominate {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        samples: SampleOpts,
    },
    /// Compute an orthonormal basis of the dilation commutant.
    Commutant {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compute the Radon-Nikodym derivative of the secondary pair with
    /// respect to the primary pair.
    Rn {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        samples: SampleOpts,
    },
    /// Exercise the deform/derive roundtrip on random commutant elements.
    IsoRoundtrip {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        samples: SampleOpts,
    },
    /// Recompute a certificate's residuals from its embedded matrices.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn read_input(path: &Option<PathBuf>) -> Result<Vec<u8>> {
    match path {
        Some(p) => Ok(std::fs::read(p)?),
        None => {
            let mut buf = Vec::new();
            std::io::stdin().read_to_end(&mut buf)?;
            Ok(buf)
        }
    }
}

fn write_output(path: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            if !bytes.ends_with(b"\n") {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Resolve tolerances with precedence: defaults < instance file <
/// `CPDILATE_TOL_RES` environment variable < command-line flags.
fn resolve_tolerances(inst: Option<&InstanceFile>, common: &CommonOpts) -> Result<Tolerances<f64>> {
    let base = match inst {
        Some(i) => i.base_tolerances()?,
        None => Tolerances::default(),
    };
    let mut res = base.residual_tol;
    if let Ok(s) = std::env::var(TOL_ENV_VAR) {
        res = s.parse::<f64>().map_err(|_| CpError::InvalidTolerances {
            context: format!("{TOL_ENV_VAR} is not a number: {s:?}"),
        })?;
    }
    Tolerances::new(
        common.tol_rank.unwrap_or(base.rank_tol),
        common.tol_psd.unwrap_or(base.psd_tol),
        common.tol_res.unwrap_or(res),
    )
}

fn resolve_seed(inst: Option<&InstanceFile>, common: &CommonOpts) -> u64 {
    common
        .seed
        .or_else(|| inst.and_then(|i| i.seed))
        .unwrap_or(0)
}

fn parse_dims(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<usize>().map_err(|_| CpError::InvalidInput {
                context: format!("{what}: expected comma-separated integers, got {s:?}"),
            })
        })
        .collect()
}

/// Accepts "M2", "M1+M2", or plain comma-separated block dimensions.
fn parse_algebra_dims(s: &str) -> Result<Vec<usize>> {
    if s.contains('M') {
        s.split('+')
            .map(|p| {
                p.trim()
                    .strip_prefix('M')
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| CpError::InvalidInput {
                        context: format!("--algebra: expected e.g. M2 or M1+M2, got {s:?}"),
                    })
            })
            .collect()
    } else {
        parse_dims(s, "--algebra")
    }
}

fn parse_module_kind(s: &str) -> Result<ModuleKind> {
    if s == "self" {
        return Ok(ModuleKind::SelfModule);
    }
    if let Some(rank) = s.strip_prefix("free:") {
        return Ok(ModuleKind::Free(parse_dims(rank, "--module")?[0]));
    }
    if let Some(rows) = s.strip_prefix("rect:") {
        return Ok(ModuleKind::Rect(parse_dims(rows, "--module")?));
    }
    Err(CpError::InvalidInput {
        context: format!("--module: expected self, free:N or rect:d1,d2,..., got {s:?}"),
    })
}

fn emit(cert: &CertificateFile, common: &CommonOpts) -> Result<()> {
    match common.format {
        Format::Json => write_output(&common.output, &cert.to_canonical_bytes()),
        Format::Text => write_output(&common.output, cert.text_report().as_bytes()),
    }
}

struct Loaded {
    inst: InstanceFile,
    sha256: String,
    shape: ShapeContext,
    tol: Tolerances<f64>,
    seed: u64,
}

fn load(common: &CommonOpts) -> Result<Loaded> {
    let bytes = read_input(&common.input)?;
    let inst = parse_instance(&bytes)?;
    let tol = resolve_tolerances(Some(&inst), common)?;
    let seed = resolve_seed(Some(&inst), common);
    Ok(Loaded {
        sha256: inst.sha256(),
        shape: ShapeContext::from_instance(&inst),
        tol,
        seed,
        inst,
    })
}

fn new_cert(command: &str, loaded: &Loaded) -> CertificateFile {
    CertificateFile::new(command, loaded.sha256.clone(), &loaded.shape, &loaded.tol)
}

fn record_cp_report(cert: &mut CertificateFile, phi: &NPositiveMatrixMap<f64>, tol: &Tolerances<f64>) {
    let report = phi.cp_report(tol);
    cert.set_residual("hermiticity", report.hermiticity_residual);
    if let Some(min) = report.min_choi_eigenvalue {
        cert.set_residual("min_choi_eigenvalue", min);
    }
}

fn record_dilation(cert: &mut CertificateFile, dil: &DilationData<f64>, tol: &Tolerances<f64>) {
    cert.insert_stine("", &dil.stine);
    let (r1, r2) = dil.reconstruction_residual();
    cert.set_residual("res1", r1);
    cert.set_residual("res2", r2);
    cert.set_residual("gram_min_eigenvalue", dil.gram_min_eigenvalue);
    let rep = dil.stine.representation_report();
    cert.set_residual("pi_hom", rep.pi_hom);
    cert.set_residual("pi_star", rep.pi_star);
    cert.set_residual("pi_unital", rep.pi_unital);
    cert.set_residual("module_rep", rep.module_rep);
    cert.set_residual("module_action", rep.module_action);
    cert.set_residual("w_sum", rep.w_sum);
    cert.set_verdict(
        "minimal",
        if dil.stine.minimality_check(tol) {
            "MINIMAL"
        } else {
            "NOT_MINIMAL"
        },
    );
}

fn cmd_gen(
    common: &CommonOpts,
    algebra: &str,
    n: usize,
    mult: usize,
    module: &str,
    flag_h: &str,
    flag_k: &str,
) -> Result<i32> {
    let alg = CStarAlgebra::with_trivial_chain(parse_algebra_dims(algebra)?)?;
    let module = HilbertModule::new(Arc::clone(&alg), parse_module_kind(module)?)?;
    let space_h = FlagSpace::new(parse_dims(flag_h, "--flag-h")?)?;
    let space_k = FlagSpace::new(parse_dims(flag_k, "--flag-k")?)?;
    let seed = resolve_seed(None, common);
    let pair = random_cp_pair::<f64>(&alg, &module, &space_h, &space_k, n, mult, None, seed)?;
    let inst = InstanceFile::from_pair(&pair.big_phi, Some(seed));
    write_output(&common.output, &inst.to_canonical_bytes())?;
    Ok(0)
}

fn cmd_check_cp(common: &CommonOpts) -> Result<i32> {
    let loaded = load(common)?;
    let phi = loaded.inst.primary_phi()?;
    let mut cert = new_cert("check-cp", &loaded);
    cert.insert_phi_grid("phi", &phi);
    record_cp_report(&mut cert, &phi, &loaded.tol);
    let report = phi.cp_report(&loaded.tol);
    let verdict = match report.min_choi_eigenvalue {
        Some(min) if min >= -loaded.tol.psd_tol => "CP",
        Some(_) => "NOT_CP",
        None => "NON_HERMITIAN",
    };
    cert.set_verdict("cp", verdict);
    emit(&cert, common)?;
    Ok(if verdict == "CP" { 0 } else { 1 })
}

fn cmd_dilate(common: &CommonOpts) -> Result<i32> {
    let loaded = load(common)?;
    let pair = loaded.inst.primary_pair()?;
    let mut cert = new_cert("dilate", &loaded);
    cert.insert_pair_grids("phi", "Phi", &pair);
    record_cp_report(&mut cert, pair.scalar_part(), &loaded.tol);
    cert.set_residual("compatibility", pair.compatibility_residual());
    match build_dilation(pair.scalar_part(), &pair, &loaded.tol) {
        Ok(dil) => {
            record_dilation(&mut cert, &dil, &loaded.tol);
            cert.set_verdict("result", "OK");
            emit(&cert, common)?;
            Ok(0)
        }
        Err(e) if !e.is_input_error() => {
            cert.set_verdict("result", e.code());
            emit(&cert, common)?;
            Ok(1)
        }
        Err(e) => Err(e),
    }
}

fn cmd_equiv(common: &CommonOpts) -> Result<i32> {
    let loaded = load(common)?;
    let a_pair = loaded.inst.primary_pair()?;
    let b_pair = loaded.inst.secondary_pair()?;
    let a = build_dilation(a_pair.scalar_part(), &a_pair, &loaded.tol)?;
    let b = build_dilation(b_pair.scalar_part(), &b_pair, &loaded.tol)?;
    let witness = equivalence_attempt(&a.stine, &b.stine, &loaded.tol)?;
    let mut cert = new_cert("equiv", &loaded);
    cert.insert_stine("a_", &a.stine);
    cert.insert_stine("b_", &b.stine);
    cert.insert_op("U1", &witness.u1);
    cert.insert_op("U2", &witness.u2);
    let r = &witness.residuals;
    cert.set_residual("welldef_u1", r.welldef_u1);
    cert.set_residual("welldef_u2", r.welldef_u2);
    cert.set_residual("unitarity_u1", r.unitarity_u1);
    cert.set_residual("unitarity_u2", r.unitarity_u2);
    cert.set_residual("diagram_s", r.diagram_s);
    cert.set_residual("diagram_pi", r.diagram_pi);
    cert.set_residual("diagram_pi_mod", r.diagram_pi_mod);
    cert.set_residual("diagram_w", r.diagram_w);
    let equivalent = r.decision_max() <= loaded.tol.residual_tol;
    cert.set_verdict(
        "equivalence",
        if equivalent { "EQUIVALENT" } else { "NOT_EQUIVALENT" },
    );
    emit(&cert, common)?;
    Ok(if equivalent { 0 } else { 1 })
}

fn cmd_dominate(common: &CommonOpts, samples: usize) -> Result<i32> {
    let loaded = load(common)?;
    let sup = loaded.inst.primary_pair()?;
    let sub = loaded.inst.secondary_pair()?;
    let verdict = domination_check(&sub, &sup, samples, loaded.seed, &loaded.tol)?;
    let mut cert = new_cert("dominate", &loaded);
    cert.insert_pair_grids("sub_phi", "sub_Phi", &sub);
    cert.insert_pair_grids("sup_phi", "sup_Phi", &sup);
    cert.context
        .insert("seed".into(), Value::from(loaded.seed));
    cert.context
        .insert("samples".into(), Value::from(samples as u64));
    let diff = sup.scalar_part().sub_maps(sub.scalar_part())?;
    if let Some(min) = diff.cp_report(&loaded.tol).min_choi_eigenvalue {
        cert.set_residual("min_choi_difference", min);
    }
    if let DominationVerdict::Refuted {
        witness_min_eigenvalue,
        sample,
    } = &verdict
    {
        let x = domination_witness_element::<f64>(sub.module(), loaded.seed, *sample);
        let xv = x.vectorize();
        cert.insert_op("witness_x", &CMatrix::new(xv.len(), 1, xv));
        cert.context
            .insert("witness_sample".into(), Value::from(*sample as u64));
        cert.set_residual("witness_min_eigenvalue", *witness_min_eigenvalue);
    }
    cert.set_verdict("domination", verdict.label());
    emit(&cert, common)?;
    Ok(match verdict {
        DominationVerdict::Certified { .. } => 0,
        _ => 1,
    })
}

fn cmd_commutant(common: &CommonOpts) -> Result<i32> {
    let loaded = load(common)?;
    let pair = loaded.inst.primary_pair()?;
    let dil = build_dilation(pair.scalar_part(), &pair, &loaded.tol)?;
    let basis = commutant_basis(&dil.stine, &loaded.tol)?;
    let mut cert = new_cert("commutant", &loaded);
    cert.insert_stine("", &dil.stine);
    for (p, e) in basis.iter().enumerate() {
        cert.insert_op(&format!("T_{p}"), &e.t_op);
        cert.insert_op(&format!("N_{p}"), &e.n_op);
    }
    cert.context
        .insert("commutant_dimension".into(), Value::from(basis.len() as u64));
    cert.set_residual(
        "intertwining",
        basis.iter().map(|e| e.residual(&dil.stine)).fold(0.0, f64::max),
    );
    cert.set_residual("closure", commutant_closure_residual(&basis));
    cert.set_residual(
        "t_determines_n",
        t_determines_n_residual(&basis, &loaded.tol)?,
    );
    cert.set_verdict("result", "OK");
    emit(&cert, common)?;
    Ok(0)
}

fn cmd_rn(common: &CommonOpts, samples: usize) -> Result<i32> {
    let loaded = load(common)?;
    let sup = loaded.inst.primary_pair()?;
    let psi = loaded.inst.secondary_pair()?;
    let dil = build_dilation(sup.scalar_part(), &sup, &loaded.tol)?;
    let mut cert = new_cert("rn", &loaded);
    cert.insert_pair_grids("phi", "Phi", &sup);
    cert.insert_pair_grids("psi_phi", "psi_Phi", &psi);
    let diff = sup.scalar_part().sub_maps(psi.scalar_part())?;
    if let Some(min) = diff.cp_report(&loaded.tol).min_choi_eigenvalue {
        cert.set_residual("min_choi_difference", min);
    }
    match rn_derivative(&dil, &psi, samples, loaded.seed, &loaded.tol) {
        Ok(rn) => {
            cert.insert_stine("", &dil.stine);
            cert.insert_op("Delta1", &rn.delta.t_op);
            cert.insert_op("Delta2", &rn.delta.n_op);
            cert.set_residual("commutant_residual", rn.commutant_residual);
            cert.set_residual("spectrum_min", rn.spectrum_lo);
            cert.set_residual("spectrum_max", rn.spectrum_hi);
            cert.set_residual("roundtrip_residual", rn.roundtrip_residual);
            cert.set_verdict("result", "OK");
            emit(&cert, common)?;
            Ok(0)
        }
        Err(e) if !e.is_input_error() => {
            cert.set_verdict("result", e.code());
            if let CpError::NotDominated { verdict } = &e {
                cert.set_verdict("domination", verdict);
            }
            emit(&cert, common)?;
            Ok(1)
        }
        Err(e) => Err(e),
    }
}

fn cmd_iso_roundtrip(common: &CommonOpts, trials: usize) -> Result<i32> {
    let loaded = load(common)?;
    let pair = loaded.inst.primary_pair()?;
    let dil = build_dilation(pair.scalar_part(), &pair, &loaded.tol)?;
    let report = order_iso_roundtrip(&dil, trials, loaded.seed, &loaded.tol)?;
    let mut cert = new_cert("iso-roundtrip", &loaded);
    cert.insert_stine("", &dil.stine);
    for (t, trial) in report.trial_data.iter().enumerate() {
        cert.insert_op(&format!("T_{t}"), &trial.elem.t_op);
        cert.insert_op(&format!("N_{t}"), &trial.elem.n_op);
        cert.insert_op(&format!("Delta1_{t}"), &trial.delta.t_op);
        cert.insert_op(&format!("Delta2_{t}"), &trial.delta.n_op);
        cert.set_residual(&format!("t_dev_{t}"), trial.t_deviation);
        cert.set_residual(&format!("n_dev_{t}"), trial.n_deviation);
        cert.set_residual(&format!("roundtrip_{t}"), trial.roundtrip_residual);
        cert.set_verdict(&format!("monotone_{t}"), trial.monotone.label());
    }
    cert.context
        .insert("trials".into(), Value::from(report.trials as u64));
    cert.context
        .insert("seed".into(), Value::from(loaded.seed));
    let ok = report.monotone_refuted == 0
        && report.max_t_deviation <= loaded.tol.residual_tol
        && report.max_n_deviation <= loaded.tol.residual_tol
        && report.max_roundtrip_residual <= loaded.tol.residual_tol;
    cert.set_verdict("roundtrip", if ok { "OK" } else { "FAILED" });
    emit(&cert, common)?;
    Ok(if ok { 0 } else { 1 })
}

fn cmd_verify(common: &CommonOpts) -> Result<i32> {
    let bytes = read_input(&common.input)?;
    let cert = CertificateFile::parse(&bytes)?;
    let recomputed = verify_certificate(&cert)?;
    let deviation = verification_deviation(&cert, &recomputed);
    let ok = deviation <= 1e-12;
    match common.format {
        Format::Json => {
            let mut obj = serde_json::Map::new();
            obj.insert("command".into(), Value::String("verify".into()));
            obj.insert("verified_command".into(), Value::String(cert.command.clone()));
            obj.insert("max_deviation".into(), float_value(deviation));
            obj.insert(
                "recomputed".into(),
                Value::Object(
                    recomputed
                        .iter()
                        .map(|(k, &v)| (k.clone(), float_value(v)))
                        .collect(),
                ),
            );
            obj.insert(
                "verdict".into(),
                Value::String(if ok { "OK" } else { "MISMATCH" }.into()),
            );
            write_output(&common.output, canonical_json(&Value::Object(obj)).as_bytes())?;
        }
        Format::Text => {
            let mut out = String::new();
            out.push_str(&format!("verify {}: {}\n", cert.command, if ok { "OK" } else { "MISMATCH" }));
            out.push_str(&format!("max deviation: {deviation:.3e}\n"));
            for (k, v) in &recomputed {
                out.push_str(&format!("recomputed {k}: {v:.3e}\n"));
            }
            write_output(&common.output, out.as_bytes())?;
        }
    }
    Ok(if ok { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Gen {
            common,
            algebra,
            n,
            mult,
            module,
            flag_h,
            flag_k,
        } => cmd_gen(common, algebra, *n, *mult, module, flag_h, flag_k),
        Command::CheckCp { common } => cmd_check_cp(common),
        Command::Dilate { common } => cmd_dilate(common),
        Command::Equiv { common } => cmd_equiv(common),
        Command::Dominate { common, samples } => {
            cmd_dominate(common, samples.samples.unwrap_or(25))
        }
        Command::Commutant { common } => cmd_commutant(common),
        Command::Rn { common, samples } => cmd_rn(common, samples.samples.unwrap_or(25)),
        Command::IsoRoundtrip { common, samples } => {
            cmd_iso_roundtrip(common, samples.samples.unwrap_or(10))
        }
        Command::Verify { common } => cmd_verify(common),
    }
}

/// Run the parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}
