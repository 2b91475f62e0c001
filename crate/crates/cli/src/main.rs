use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use hermitsep::extract::{relaxation, run_algorithm, AlgorithmOptions, Verdict, DEFAULT_RANK_TOL};
use hermitsep::hermitian::Shape;
use hermitsep::io::{read_tensor, verify_report, write_tensor, PsdReport, Report, TensorFile};
use hermitsep::psd::{psd_decompose, PsdOptions, RankSpec, Route, PSD_TOL};
use hermitsep::random::{random_hermitian, random_psd, random_separable};
use hermitsep::sdp::{export_sdpa, SolveOptions};
use hermitsep::Error;

const EXIT_OK: u8 = 0;
const EXIT_MISMATCH: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;
const EXIT_NOT_SEPARABLE: u8 = 10;
const EXIT_UNDECIDED: u8 = 20;

#[derive(Parser)]
#[command(name = "hermitsep", version, about = "Separability tests and psd decompositions of Hermitian tensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide separability with the moment hierarchy.
    Check {
        file: PathBuf,
        /// Largest relaxation order.
        #[arg(long, default_value_t = 3)]
        max_order: usize,
        #[arg(long, env = "HERMITSEP_SEED", default_value_t = 0)]
        seed: u64,
        /// Relative rank tolerance for flat truncation.
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        tol: f64,
        /// Iteration cap of the SDP solver per relaxation order.
        #[arg(long, default_value_t = SolveOptions::default().max_iter)]
        max_iter: usize,
        /// Write the report here.
        #[arg(long, value_name = "OUT")]
        json: Option<PathBuf>,
    },
    /// Psd decomposition through a CPD of a flattening.
    PsdDecompose {
        file: PathBuf,
        #[arg(long, conflicts_with = "rank_sweep", required_unless_present = "rank_sweep")]
        rank: Option<usize>,
        /// Try ranks 1..=MAX and keep the first that fits.
        #[arg(long, value_name = "MAX")]
        rank_sweep: Option<usize>,
        /// auto, T, cubic, T1 or T2.
        #[arg(long, default_value = "auto")]
        route: Route,
        #[arg(long, env = "HERMITSEP_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "OUT")]
        json: Option<PathBuf>,
    },
    /// Re-check a report against a tensor.
    Verify { tensor: PathBuf, report: PathBuf },
    /// Write the order-K relaxation in SDPA sparse format.
    ExportSdp {
        file: PathBuf,
        #[arg(short = 'k', long = "order")]
        k: usize,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, env = "HERMITSEP_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Generate a random tensor file.
    Random {
        /// Comma-separated local dimensions.
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        terms: usize,
        #[arg(long, value_enum, default_value_t = Kind::Separable)]
        kind: Kind,
        #[arg(long, env = "HERMITSEP_SEED", default_value_t = 0)]
        seed: u64,
        /// Defaults to standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Separable,
    Psd,
    EntangledCandidate,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn internal(e: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_INTERNAL, message: e.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_)
            | Error::Json(_)
            | Error::InvalidShape(_)
            | Error::DimensionMismatch(_)
            | Error::NotHermitian { .. }
            | Error::NonFinite => EXIT_USAGE,
            _ => EXIT_INTERNAL,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure { code: EXIT_USAGE, message: format!("{}: {e}", path.display()) })
}

fn load(path: &Path) -> Result<TensorFile, Failure> {
    read_tensor(&read_file(path)?).map_err(|e| {
        let f = Failure::from(e);
        Failure { message: format!("{}: {}", path.display(), f.message), ..f }
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn save_report(path: Option<&Path>, report: &Report) -> Result<(), Failure> {
    match path {
        Some(p) => write_file(p, &report.to_json()?),
        None => Ok(()),
    }
}

struct CheckArgs {
    max_order: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
}

fn check(file: &Path, args: CheckArgs, json: Option<&Path>) -> CmdResult {
    let h = load(file)?.tensor;
    let CheckArgs { max_order, seed, tol, max_iter } = args;
    let solver = SolveOptions { max_iter, ..Default::default() };
    let opts = AlgorithmOptions { max_order, seed, rank_tol: tol, solver, ..Default::default() };
    let start = Instant::now();
    let verdict = run_algorithm(&h, &opts)?;
    let mut report = Report::new("check", verdict.label(), seed, opts.accept_tol_for(&h));
    report.seconds = start.elapsed().as_secs_f64();
    let code = match &verdict {
        Verdict::Separable { decomposition, order, atoms, residual } => {
            println!("SEPARABLE at order {order}: {atoms} terms, residual {residual:.3e}");
            report.order = Some(*order);
            report.rank = Some(*atoms);
            report.residual = Some(*residual);
            report.set_decomposition(decomposition);
            EXIT_OK
        }
        Verdict::NotSeparable { certificate, order } => {
            println!("NOT_SEPARABLE: Farkas certificate at order {order}");
            report.order = Some(*order);
            report.set_farkas(certificate, opts.solver.eps_inf);
            EXIT_NOT_SEPARABLE
        }
        Verdict::Inconclusive { max_order, diagnostics, .. } => {
            println!("INCONCLUSIVE up to order {max_order}");
            for d in diagnostics {
                eprintln!("  {d}");
            }
            report.order = Some(*max_order);
            report.diagnostics = diagnostics.clone();
            EXIT_UNDECIDED
        }
    };
    save_report(json, &report)?;
    Ok(code)
}

fn psd(file: &Path, rank: RankSpec, route: Route, seed: u64, json: Option<&Path>) -> CmdResult {
    let h = load(file)?.tensor;
    let mut opts = PsdOptions::default();
    opts.cpd.seed = seed;
    let start = Instant::now();
    let outcome = psd_decompose(&h, rank, route, &opts);
    let residual_tol = 1e-6 * (1.0 + h.norm());
    let (label, code) = match &outcome {
        Ok(_) => ("CERTIFIED_PSD", EXIT_OK),
        Err(Error::PsdDecomposition { .. }) => ("NOT_CERTIFIED", EXIT_UNDECIDED),
        Err(_) => return Err(outcome.unwrap_err().into()),
    };
    let mut report = Report::new("psd-decompose", label, seed, residual_tol);
    report.seconds = start.elapsed().as_secs_f64();
    report.tolerances.psd = Some(PSD_TOL);
    match outcome {
        Ok(out) => {
            match out.psd_rank {
                Some(s) => println!("CERTIFIED_PSD via {}: {s} terms, psd rank {s} ({})", out.route, out.certificate.kind()),
                None => println!("CERTIFIED_PSD via {}: {} terms, psd rank at most {}", out.route, out.rank, out.rank),
            }
            report.rank = Some(out.rank);
            report.residual = Some(out.residual);
            report.set_psd_terms(&out.decomposition);
            report.psd = Some(PsdReport {
                route: out.route.to_string(),
                fit: Some(out.fit),
                certificate: Some(out.certificate),
                psd_rank: out.psd_rank,
                failed_stage: None,
            });
        }
        Err(Error::PsdDecomposition { stage, detail }) => {
            println!("NOT_CERTIFIED: {stage} stage failed");
            eprintln!("  {detail}");
            report.rank = match rank {
                RankSpec::Fixed(s) | RankSpec::Sweep(s) => Some(s),
            };
            report.diagnostics.push(detail);
            report.psd = Some(PsdReport {
                route: route.to_string(),
                fit: None,
                certificate: None,
                psd_rank: None,
                failed_stage: Some(stage.to_string()),
            });
        }
        Err(_) => unreachable!(),
    }
    save_report(json, &report)?;
    Ok(code)
}

fn verify(tensor: &Path, report: &Path) -> CmdResult {
    let h = load(tensor)?.tensor;
    let r = Report::from_json(&read_file(report)?)?;
    let v = verify_report(&h, &r)?;
    println!("{}: {}", if v.ok { "OK" } else { "MISMATCH" }, v.detail);
    Ok(if v.ok { EXIT_OK } else { EXIT_MISMATCH })
}

fn export_sdp(file: &Path, k: usize, output: &Path, seed: u64) -> CmdResult {
    let h = load(file)?.tensor;
    let m = h.shape().order();
    if k < m {
        return Err(Failure { code: EXIT_USAGE, message: format!("order {k} is below the tensor order {m}") });
    }
    let p = relaxation(&h, k, seed)?;
    write_file(output, &export_sdpa(&p))?;
    println!("wrote order-{k} relaxation: {} blocks, {} moments", p.blocks.len(), p.num_vars);
    Ok(EXIT_OK)
}

fn random(shape: Vec<usize>, terms: usize, kind: Kind, seed: u64, output: Option<&Path>) -> CmdResult {
    let shape = Shape::new(shape)?;
    let (tensor, name) = match kind {
        Kind::Separable => (random_separable(&shape, terms, seed)?.0, "separable"),
        Kind::Psd => (random_psd(&shape, terms, seed)?.0, "psd"),
        Kind::EntangledCandidate => (random_hermitian(&shape, seed)?, "entangled-candidate"),
    };
    let mut file = TensorFile::new(tensor);
    file.name = Some(match kind {
        Kind::EntangledCandidate => name.to_string(),
        _ => format!("{name}, {terms} terms"),
    });
    file.seed = Some(seed);
    file.provenance = Some("hermitsep random".into());
    let text = write_tensor(&file)?;
    match output {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Check { file, max_order, seed, tol, max_iter, json } => {
            check(&file, CheckArgs { max_order, seed, tol, max_iter }, json.as_deref())
        }
        Command::PsdDecompose { file, rank, rank_sweep, route, seed, json } => {
            let spec = match (rank, rank_sweep) {
                (Some(s), _) => RankSpec::Fixed(s),
                (None, Some(max)) => RankSpec::Sweep(max),
                (None, None) => unreachable!("clap requires one of --rank and --rank-sweep"),
            };
            psd(&file, spec, route, seed, json.as_deref())
        }
        Command::Verify { tensor, report } => verify(&tensor, &report),
        Command::ExportSdp { file, k, output, seed } => export_sdp(&file, k, &output, seed),
        Command::Random { shape, terms, kind, seed, output } => random(shape, terms, kind, seed, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("hermitsep: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
