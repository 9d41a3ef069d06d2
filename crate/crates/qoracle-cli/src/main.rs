//! `qoracle`: run the oracle experiments from the command line.
//!
//! Exit codes: 0 when every checked property holds, 1 on a violation or a
//! failed run, 2 on a usage or configuration error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use qoracle::harness::experiments::{
    self, AttackConfig, ClassicalSpongeConfig, CorrectnessConfig, DimensionCheck, FindConfig, O2hConfig,
    QuantumSpongeConfig, RunOptions,
};

#[derive(Parser)]
#[command(name = "qoracle", version, about = "Exact simulation of compressed quantum random oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full oracle against the decompressed compressed oracle, per case.
    VerifyCorrectness(Common),
    /// Exact Find probability of an adversary against a punctured oracle.
    FindProb(Common),
    /// Both one-way-to-hiding inequalities, plus immediate vs deferred
    /// puncturing.
    O2h(Common),
    /// Monte-Carlo estimates of the classical sponge games.
    SpongeClassical(Common),
    /// Exact quantum sponge games and their hop bounds.
    SpongeQuantum(Common),
    /// Evaluate every bound over a range of query counts.
    Bounds(BoundsArgs),
    /// First-query closed forms and the attack on the phase oracle without
    /// deletion.
    RegressCphoAttack(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; see docs/config.md.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Numerical tolerance; each command has its own default.
    #[arg(long)]
    tol: Option<f64>,
    /// Write results here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Query counts, `a..b` (inclusive) or a single value.
    #[arg(long = "q", value_parser = parse_range)]
    q: (usize, usize),
    /// Range size, a power of two.
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok((a, b))
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<qoracle::Error> for Failure {
    fn from(e: qoracle::Error) -> Self {
        match e {
            qoracle::Error::SizeGuard { .. }
            | qoracle::Error::InvalidParameter(_)
            | qoracle::Error::InvalidAdversary(_)
            | qoracle::Error::InvalidDistribution(_)
            | qoracle::Error::XorNeedsPowerOfTwo(_)
            | qoracle::Error::LayoutTooWide { .. } => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("property violated");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::VerifyCorrectness(a) => {
            let cfg: CorrectnessConfig = load_or_default(&a)?;
            announce(cfg.dimension()?);
            let rows = experiments::verify_correctness(&cfg, a.options())?;
            let ok = rows.iter().all(|r| r.pass);
            emit_rows(&a.out, a.format.unwrap_or(Format::Csv), &rows, ok)?;
            Ok(ok)
        }
        Command::FindProb(a) => {
            let cfg: FindConfig = load(&a)?;
            announce(cfg.dimension(a.seed)?);
            let rows = experiments::find_prob(&cfg, a.options())?;
            let ok = rows.iter().all(|r| r.holds);
            emit_rows(&a.out, a.format.unwrap_or(Format::Json), &rows, ok)?;
            Ok(ok)
        }
        Command::O2h(a) => {
            let cfg: O2hConfig = load(&a)?;
            announce(cfg.dimension(a.seed)?);
            let rows = experiments::o2h(&cfg, a.options())?;
            let ok = rows.iter().all(|r| r.holds);
            emit_rows(&a.out, a.format.unwrap_or(Format::Json), &rows, ok)?;
            Ok(ok)
        }
        Command::SpongeClassical(a) => {
            let cfg: ClassicalSpongeConfig = load(&a)?;
            announce(cfg.dimension()?);
            let report = experiments::sponge_classical(&cfg, a.options())?;
            let ok = report.holds();
            match a.format.unwrap_or(Format::Csv) {
                Format::Csv => write_out(&a.out, &csv_text(&report.games)?)?,
                Format::Json => write_out(&a.out, &json_text(&report)?)?,
            }
            Ok(ok)
        }
        Command::SpongeQuantum(a) => {
            let cfg: QuantumSpongeConfig = load(&a)?;
            announce(cfg.dimension(a.seed)?);
            let rows = experiments::sponge_quantum(&cfg, a.options())?;
            let ok = rows.iter().all(|r| r.holds);
            emit_rows(&a.out, a.format.unwrap_or(Format::Json), &rows, ok)?;
            Ok(ok)
        }
        Command::Bounds(b) => {
            // closed-form arithmetic only; no state is built
            announce(DimensionCheck { dim: 0, cap: None });
            let qs: Vec<usize> = (b.q.0..=b.q.1).collect();
            let rows = experiments::bounds_table(&qs, b.n)?;
            emit_rows(&b.out, b.format.unwrap_or(Format::Csv), &rows, true)?;
            Ok(true)
        }
        Command::RegressCphoAttack(a) => {
            let cfg: AttackConfig = load_or_default(&a)?;
            announce(cfg.dimension()?);
            let rec = experiments::regress_cpho_attack(&cfg, a.options())?;
            let ok = rec.holds;
            emit_rows(&a.out, a.format.unwrap_or(Format::Json), std::slice::from_ref(&rec), ok)?;
            Ok(ok)
        }
    }
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions { seed: self.seed, tol: self.tol }
    }
}

fn announce(d: DimensionCheck) {
    match d.cap {
        Some(cap) => eprintln!("state dimension: {} (dense guard {cap})", d.dim),
        None => eprintln!("state dimension: {} (sparse, 128-bit label guard)", d.dim),
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load<T: DeserializeOwned>(a: &Common) -> Result<T, Failure> {
    match &a.config {
        Some(p) => read_config(p),
        None => Err(Failure::Usage("this command needs --config".into())),
    }
}

fn load_or_default<T: DeserializeOwned + Default>(a: &Common) -> Result<T, Failure> {
    match &a.config {
        Some(p) => read_config(p),
        None => Ok(T::default()),
    }
}

#[derive(Serialize)]
struct JsonReport<'a, T> {
    holds: bool,
    rows: &'a [T],
}

fn emit_rows<T: Serialize>(out: &Option<PathBuf>, format: Format, rows: &[T], holds: bool) -> Result<(), Failure> {
    let text = match format {
        Format::Csv => csv_text(rows)?,
        Format::Json => json_text(&JsonReport { holds, rows })?,
    };
    write_out(out, &text)
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Run(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Run(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Run(e.to_string()))
}

fn json_text<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| Failure::Run(e.to_string()))
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Run(e.to_string())),
    }
}
