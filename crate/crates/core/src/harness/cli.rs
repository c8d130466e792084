//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical limit,
//! 3 infeasible when `--require` was given.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{matrix_to_csv, read_matrix, read_partition, read_symmetric, read_vector, PartitionFile};
use super::montecarlo::{montecarlo_coherence, ExperimentConfig, MonteCarloReport, DEFAULT_SDP_SUBSAMPLE};
use crate::conic::{Settings, Status};
use crate::decompose::{self, RANK_TOL};
use crate::ellipsoid::{fit_blocks_with, fit_with, region_r, region_rprime, FitStatus, PointSet};
use crate::elliptope::{
    all_balanced, balance_margin, coherence, is_p_balanced, p_coherence, realizability_certificate_with,
    Certificate, Method, Verdict,
};
use crate::numerics::{Partition, Subspace};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Environment variable overriding the solver tolerance.
pub const TOL_ENV: &str = "ELLIPTOPE_TOL";

#[derive(Debug, Parser)]
#[command(name = "mtfa", version, about = "Minimum trace factor analysis and elliptope face tools")]
pub struct Cli {
    /// Emit machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for every randomized path.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Exit with code 3 when the answer is infeasible or not realizable.
    #[arg(long, global = true)]
    pub require: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a covariance matrix into (block-)diagonal plus low-rank parts.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        partition: PartitionArg,
    },
    /// Decide whether span(basis) is a face of the (partitioned) elliptope.
    Realizable {
        /// n×r CSV whose columns span U.
        #[arg(long)]
        basis: PathBuf,
        #[command(flatten)]
        partition: PartitionArg,
    },
    /// Fit a centered ellipsoid through the columns of a k×n CSV.
    FitEllipsoid {
        #[arg(long, required_unless_present = "grid")]
        points: Option<PathBuf>,
        #[command(flatten)]
        partition: PartitionArg,
        /// Sweep (x, y) over a grid with base points e₁, e₂ (or the two
        /// columns of --points) and emit CSV.
        #[arg(long, num_args = 5, allow_negative_numbers = true,
              value_names = ["XMIN", "XMAX", "YMIN", "YMAX", "STEP"])]
        grid: Option<Vec<f64>>,
    },
    /// Coherence (and 𝒫-coherence) of span(basis).
    Coherence {
        #[arg(long)]
        basis: PathBuf,
        #[command(flatten)]
        partition: PartitionArg,
    },
    /// Balance of a vector, or of every vector in span(basis).
    Balance {
        #[arg(long, conflicts_with = "basis", required_unless_present = "basis")]
        vector: Option<PathBuf>,
        #[arg(long)]
        basis: Option<PathBuf>,
        #[command(flatten)]
        partition: PartitionArg,
        #[arg(long)]
        strict: bool,
    },
    /// Fraction of random subspaces with coherence below 1/2.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
pub struct PartitionArg {
    /// Partition JSON {"n": .., "blocks": [[..], ..]} with 1-based indices.
    #[arg(long)]
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long)]
    pub n: usize,
    /// Subspace dimension; defaults to ⌊(1/2 − ε) n⌋.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Re-check up to N trials with the SDP.
    #[arg(long, num_args = 0..=1, default_missing_value = "20")]
    pub verify_sdp: Option<usize>,
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub status: String,
    #[serde(rename = "trace_L")]
    pub trace_l: f64,
    #[serde(rename = "rank_L")]
    pub rank_l: usize,
    #[serde(rename = "D")]
    pub d: String,
    #[serde(rename = "L")]
    pub l: String,
    #[serde(rename = "Y")]
    pub y: String,
    pub complementarity_residual: f64,
    pub margin: f64,
    pub boundary: bool,
    pub certified: bool,
    pub partition: Option<PartitionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `correlation` (the matrix `Y`) or `failure` (the matrix `D`).
    pub kind: String,
    pub matrix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizableReport {
    pub verdict: String,
    pub method: String,
    pub margin: f64,
    pub coherence: f64,
    pub p_coherence: Option<f64>,
    pub certificate: Option<CertificateReport>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub status: String,
    pub margin: f64,
    #[serde(rename = "M")]
    pub m: Option<String>,
    pub d: Option<Vec<f64>>,
    #[serde(rename = "D")]
    pub ray: Option<String>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub n: usize,
    pub r: usize,
    pub coherence: f64,
    pub p_coherence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorBalanceReport {
    pub balanced: bool,
    pub strict: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBalanceReport {
    pub all_balanced: bool,
    pub uncertain: bool,
    /// 1-based index of the dominating coordinate.
    pub violation_index: Option<usize>,
    pub violation: Option<Vec<f64>>,
}

/// Tolerance override from [`TOL_ENV`], if set.
pub fn env_settings() -> Result<Option<Settings>> {
    match std::env::var(TOL_ENV) {
        Ok(v) => parse_tol(&v).map(Some),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::usage(format!("{TOL_ENV}: {e}"))),
    }
}

pub fn parse_tol(text: &str) -> Result<Settings> {
    let tol: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::usage(format!("{TOL_ENV}={text:?} is not a number")))?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::usage(format!("{TOL_ENV} must lie in (0, 1), got {tol}")));
    }
    Ok(Settings::with_tol(tol))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericalFailure { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load_partition(arg: &PartitionArg, n: usize) -> Result<Option<Partition>> {
    let Some(path) = &arg.partition else { return Ok(None) };
    let p = read_partition(path)?;
    if p.n() != n {
        return Err(Error::usage(format!("partition is for n = {}, input has n = {n}", p.n())));
    }
    Ok(Some(p))
}

fn load_subspace(path: &Path) -> Result<Subspace> {
    Subspace::from_basis(&read_matrix(path)?)
}

fn emit<T: Serialize>(out: &mut dyn Write, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn required(cli: &Cli, ok: bool) -> i32 {
    if cli.require && !ok {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let env = env_settings()?;
    let settings = env.clone().unwrap_or_default();
    match &cli.command {
        Command::Decompose { input, partition } => {
            let x = read_symmetric(input)?;
            let p = load_partition(partition, x.dim())?;
            let s = env.unwrap_or_else(decompose::default_settings);
            let res = match &p {
                Some(p) => decompose::bmtfa_with(&x, p, &s)?,
                None => decompose::mtfa_with(&x, &s)?,
            };
            let report = DecomposeReport {
                status: status_name(res.status).into(),
                trace_l: res.trace_l,
                rank_l: res.rank_l(RANK_TOL),
                d: matrix_to_csv(res.d.as_matrix()),
                l: matrix_to_csv(res.l.as_matrix()),
                y: matrix_to_csv(res.y.as_matrix()),
                complementarity_residual: res.complementarity_residual,
                margin: res.margin,
                boundary: res.boundary,
                certified: res.certified,
                partition: p.as_ref().map(PartitionFile::from),
            };
            if cli.json {
                emit(out, &report)?;
            } else {
                writeln!(out, "status: {}", report.status)?;
                writeln!(out, "trace_L: {:.9}", report.trace_l)?;
                writeln!(out, "rank_L: {}", report.rank_l)?;
                writeln!(out, "complementarity_residual: {:.3e}", report.complementarity_residual)?;
                writeln!(out, "D:\n{}L:\n{}", report.d, report.l)?;
            }
            Ok(if res.status == Status::Optimal { EXIT_OK } else { EXIT_NUMERICAL })
        }
        Command::Realizable { basis, partition } => {
            let u = load_subspace(basis)?;
            let p = load_partition(partition, u.ambient())?;
            let rep = realizability_certificate_with(&u, p.as_ref(), &settings)?;
            let certificate = rep.certificate.as_ref().map(|c| match c {
                Certificate::Correlation(c) => CertificateReport {
                    kind: "correlation".into(),
                    matrix: matrix_to_csv(c.y.as_matrix()),
                },
                Certificate::Failure(f) => CertificateReport {
                    kind: "failure".into(),
                    matrix: matrix_to_csv(f.d.as_matrix()),
                },
            });
            let report = RealizableReport {
                verdict: verdict_name(rep.verdict).into(),
                method: method_name(rep.method).into(),
                margin: rep.margin,
                coherence: coherence(&u),
                p_coherence: p.as_ref().map(|p| p_coherence(&u, p)).transpose()?,
                certificate,
                verified: rep.verify(&u, p.as_ref()),
            };
            if cli.json {
                emit(out, &report)?;
            } else {
                writeln!(out, "verdict: {}", report.verdict)?;
                writeln!(out, "method: {}", report.method)?;
                writeln!(out, "margin: {:.3e}", report.margin)?;
                if let Some(c) = &report.certificate {
                    writeln!(out, "certificate ({}):\n{}", c.kind, c.matrix)?;
                }
            }
            Ok(required(cli, rep.verdict == Verdict::Realizable))
        }
        Command::FitEllipsoid { points, partition, grid: Some(g) } => {
            if partition.partition.is_some() {
                return Err(Error::usage("--grid does not take a partition"));
            }
            let base = match points {
                Some(path) => read_matrix(path)?,
                None => DMatrix::identity(2, 2),
            };
            if base.shape() != (2, 2) {
                return Err(Error::usage("--grid needs exactly two base points in R²"));
            }
            write_grid(out, &base, g, &settings)?;
            Ok(EXIT_OK)
        }
        Command::FitEllipsoid { points, partition, grid: None } => {
            let path = points.as_ref().ok_or_else(|| Error::usage("--points is required"))?;
            let ps = PointSet::new(read_matrix(path)?)?;
            let p = load_partition(partition, ps.n())?;
            let res = match &p {
                Some(p) => fit_blocks_with(&ps, p, &settings)?,
                None => fit_with(&ps, &settings)?,
            };
            let part = p.clone().unwrap_or_else(|| Partition::singletons(ps.n()));
            let report = FitReport {
                status: fit_name(res.status).into(),
                margin: res.margin,
                m: res.m.as_ref().map(|m| matrix_to_csv(m.as_matrix())),
                d: res.d().map(|d| d.iter().copied().collect()),
                ray: res.ray.as_ref().filter(|_| p.is_some()).map(|d| matrix_to_csv(d.as_matrix())),
                verified: res.verify(&ps, &part),
            };
            if cli.json {
                emit(out, &report)?;
            } else {
                writeln!(out, "status: {}", report.status)?;
                writeln!(out, "margin: {:.3e}", report.margin)?;
                if let Some(m) = &report.m {
                    writeln!(out, "M:\n{m}")?;
                }
                if let Some(d) = &report.d {
                    let d: Vec<String> = d.iter().map(f64::to_string).collect();
                    writeln!(out, "d: {}", d.join(","))?;
                }
            }
            Ok(required(cli, res.status == FitStatus::Fitted))
        }
        Command::Coherence { basis, partition } => {
            let u = load_subspace(basis)?;
            let p = load_partition(partition, u.ambient())?;
            let report = CoherenceReport {
                n: u.ambient(),
                r: u.dim(),
                coherence: coherence(&u),
                p_coherence: p.as_ref().map(|p| p_coherence(&u, p)).transpose()?,
            };
            if cli.json {
                emit(out, &report)?;
            } else {
                writeln!(out, "{:.6}", report.coherence)?;
                if let Some(pc) = report.p_coherence {
                    writeln!(out, "p_coherence: {pc:.6}")?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Balance { vector: Some(path), partition, strict, .. } => {
            let v = read_vector(path)?;
            let p = load_partition(partition, v.len())?.unwrap_or_else(|| Partition::singletons(v.len()));
            let balanced = is_p_balanced(&v, &p, *strict)?;
            let norms = DVector::from_iterator(
                p.blocks().len(),
                p.blocks().iter().map(|b| b.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()),
            );
            let report = VectorBalanceReport { balanced, strict: *strict, margin: balance_margin(&norms) };
            if cli.json {
                emit(out, &report)?;
            } else {
                writeln!(out, "balanced: {}", report.balanced)?;
                writeln!(out, "margin: {:.6}", report.margin)?;
            }
            Ok(required(cli, balanced))
        }
        Command::Balance { basis, partition, .. } => {
            let path = basis.as_ref().ok_or_else(|| Error::usage("--vector or --basis is required"))?;
            if partition.partition.is_some() {
                return Err(Error::usage("subspace balance is only decided for the singleton partition"));
            }
            let u = load_subspace(path)?;
            let rep = all_balanced(&u)?;
            let report = SubspaceBalanceReport {
                all_balanced: rep.holds,
                uncertain: rep.uncertain,
                violation_index: rep.violation.as_ref().map(|(i, _)| i + 1),
                violation: rep.violation.as_ref().map(|(_, w)| w.iter().copied().collect()),
            };
            if cli.json {
                emit(out, &report)?;
            } else {
                writeln!(out, "all_balanced: {}", report.all_balanced)?;
                if let (Some(i), Some(w)) = (report.violation_index, &report.violation) {
                    let w: Vec<String> = w.iter().map(f64::to_string).collect();
                    writeln!(out, "violation at {i}: {}", w.join(","))?;
                }
            }
            Ok(if rep.uncertain && !rep.holds && rep.violation.is_none() {
                EXIT_NUMERICAL
            } else {
                required(cli, rep.holds)
            })
        }
        Command::Montecarlo(a) => {
            let base = ExperimentConfig::from_epsilon(a.n, a.epsilon, a.trials, cli.seed);
            let cfg = ExperimentConfig {
                r: a.r.unwrap_or(base.r),
                tolerance: env.map(|s| s.feas_tol),
                verify_sdp: a.verify_sdp.map_or(0, |k| if k == 0 { DEFAULT_SDP_SUBSAMPLE } else { k }),
                progress: a.progress,
                ..base
            };
            let report: MonteCarloReport = montecarlo_coherence(&cfg)?;
            if cli.json {
                emit(out, &report)?;
            } else {
                writeln!(out, "n = {}, r = {}, trials = {}", report.n, report.r, report.trials)?;
                writeln!(out, "observed fraction with mu < 1/2: {:.4}", report.observed_fraction)?;
                match report.analytic_lower_bound {
                    Some(b) => writeln!(out, "analytic lower bound: {b:.4}")?,
                    None => writeln!(out, "analytic lower bound: not valid at this n")?,
                }
                writeln!(
                    out,
                    "constants: c_bar = {:.4}, c_tilde = {:.6}",
                    report.constants.c_bar, report.constants.c_tilde
                )?;
                if report.sdp_checked > 0 {
                    writeln!(out, "sdp confirmed: {}/{}", report.sdp_realizable, report.sdp_checked)?;
                }
            }
            Ok(EXIT_OK)
        }
    }
}

/// Grid points `lo, lo + step, …` up to `hi` (inclusive within half a step).
pub fn grid_axis(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::usage("grid needs finite bounds with min ≤ max and a positive step"));
    }
    let count = ((hi - lo) / step + 0.5).floor() as usize;
    if count > 100_000 {
        return Err(Error::usage("grid is too fine"));
    }
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

fn write_grid(out: &mut dyn Write, base: &DMatrix<f64>, g: &[f64], settings: &Settings) -> Result<()> {
    let xs = grid_axis(g[0], g[1], g[4])?;
    let ys = grid_axis(g[2], g[3], g[4])?;
    let cells: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let rows = cells
        .par_iter()
        .map(|&(x, y)| {
            let v = base * DVector::from_row_slice(&[x, y]);
            let pts = PointSet::new(DMatrix::from_columns(&[
                base.column(0).into_owned(),
                base.column(1).into_owned(),
                v,
            ]))?;
            let fitted = match fit_with(&pts, settings)?.status {
                FitStatus::Fitted => "true",
                FitStatus::Infeasible => "false",
                FitStatus::BoundaryUncertain => "uncertain",
            };
            Ok(format!("{x},{y},{},{},{fitted}", region_r(&[x, y]), region_rprime(&[x, y])))
        })
        .collect::<Result<Vec<String>>>()?;
    writeln!(out, "x,y,in_R,in_Rprime,fitted")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::PrimalInfeasible => "primal-infeasible",
        Status::DualInfeasible => "dual-infeasible",
        Status::NumericalLimit => "numerical-limit",
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Realizable => "realizable",
        Verdict::NotRealizable => "not-realizable",
        Verdict::BoundaryUncertain => "boundary-uncertain",
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Constructive => "constructive",
        Method::Sdp => "sdp",
        Method::BalanceNecessity => "balance-necessity",
    }
}

fn fit_name(s: FitStatus) -> &'static str {
    match s {
        FitStatus::Fitted => "fitted",
        FitStatus::Infeasible => "infeasible",
        FitStatus::BoundaryUncertain => "boundary-uncertain",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_parsing() {
        assert_eq!(parse_tol("1e-6").unwrap().feas_tol, 1e-6);
        assert!(parse_tol("abc").is_err());
        assert!(parse_tol("0").is_err());
        assert!(parse_tol("2").is_err());
    }

    #[test]
    fn axis_covers_endpoints() {
        let a = grid_axis(-3.0, 3.0, 0.1).unwrap();
        assert_eq!(a.len(), 61);
        assert!((a[60] - 3.0).abs() < 1e-12);
        assert!(grid_axis(0.0, 1.0, 0.0).is_err());
        assert!(grid_axis(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["mtfa", "coherence", "--bogus"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["mtfa", "--help"], &mut o, &mut e), EXIT_OK);
    }
}
