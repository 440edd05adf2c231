//! `pmedian`: solve p-median instances, export models, run benchmarks.
//!
//! Exit codes: 0 optimal, 2 feasible but not proven optimal, 3 infeasible,
//! 4 input error, 5 internal error. Set `PMEDIAN_LOG` (for example
//! `PMEDIAN_LOG=info`) to see the tab-separated progress log on stderr.

mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use pmedian::export::{export_lp, Formulation};
use pmedian::instance::{generate_rw, parse_dense, parse_orlib, parse_tsplib};
use pmedian::{solve, DriverError, InitialMode, Instance, Params, Preprocessed, SolveStatus};

use report::{write_csv, write_table, Record};

#[derive(Debug, Parser)]
#[command(name = "pmedian", version, about = "Exact p-median solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance to optimality.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Append the result record to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Print the full result as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write an LP-format model of the instance.
    Export {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum)]
        export: FormulationArg,
        /// Output file (standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve every run listed in a manifest and print a summary table.
    Bench {
        /// Manifest: one run per line, `path [format=F] [p=P] [name=NAME]`; `#` starts a comment.
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a random asymmetric instance in the dense matrix format.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Orlib,
    Tsplib,
    Rw,
    Native,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormulationArg {
    F1,
    F2,
    F3,
    F4,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::F1 => Formulation::F1,
            FormulationArg::F2 => Formulation::F2,
            FormulationArg::F3 => Formulation::F3,
            FormulationArg::F4 => Formulation::F4,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitialArg {
    Heuristic,
    Random,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Instance file.
    path: PathBuf,
    /// Input format; guessed from the extension when omitted (.tsp, .json, .rw, otherwise orlib).
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Number of medians. Required for tsplib and rw; overrides the value stored in orlib and native files.
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 36_000.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "heuristic")]
    initial: InitialArg,
    #[arg(long)]
    no_rounding: bool,
    #[arg(long)]
    no_reduction: bool,
    #[arg(long)]
    no_rcfix: bool,
    #[arg(long)]
    phase2_frac_sep: bool,
}

impl RunArgs {
    fn params(&self) -> anyhow::Result<Params> {
        if !(self.time_limit > 0.0) {
            bail!("--time-limit must be positive");
        }
        Ok(Params {
            time_limit: Some(self.time_limit),
            seed: self.seed,
            initial: match self.initial {
                InitialArg::Heuristic => InitialMode::Heuristic,
                InitialArg::Random => InitialMode::Random,
            },
            rounding: !self.no_rounding,
            reduction: !self.no_reduction,
            rc_fixing: !self.no_rcfix,
            phase2_frac_sep: self.phase2_frac_sep,
            ..Params::default()
        })
    }
}

/// Error classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 4,
            Failure::Internal(_) => 5,
        }
    }
}

fn guess_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("tsp") => Format::Tsplib,
        Some("json") => Format::Native,
        Some("rw") | Some("mat") => Format::Rw,
        _ => Format::Orlib,
    }
}

fn load_instance(path: &Path, format: Option<Format>, p: Option<usize>) -> anyhow::Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let format = format.unwrap_or_else(|| guess_format(path));
    let need_p = || p.ok_or_else(|| anyhow!("--p is required for this format"));
    let mut inst = match format {
        Format::Orlib => parse_orlib(&text)?,
        Format::Tsplib => parse_tsplib(&text, need_p()?)?,
        Format::Rw => parse_dense(&text, need_p()?)?,
        Format::Native => Instance::from_json(&text)?,
    };
    if let (Some(p), Format::Orlib | Format::Native) = (p, format) {
        if p != inst.p {
            inst = inst.with_p(p)?;
        }
    }
    if inst.name.is_empty() {
        inst.name = path
            .file_stem()
            .map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned());
    }
    inst.validate()?;
    Ok(inst)
}

fn exit_for(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Feasible => 2,
        SolveStatus::Infeasible => 3,
    }
}

fn append_csv(path: &Path, records: &[Record]) -> anyhow::Result<()> {
    let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    write_csv(file, records, fresh)?;
    Ok(())
}

fn cmd_solve(input: InputArgs, run: RunArgs, csv: Option<PathBuf>, json: bool) -> Result<u8, Failure> {
    let params = run.params().map_err(Failure::Input)?;
    let inst = load_instance(&input.path, input.format, input.p).map_err(Failure::Input)?;
    let result = match solve(&inst, &params) {
        Ok(r) => r,
        Err(DriverError::Instance(e)) => return Err(Failure::Input(e.into())),
        Err(e) => return Err(Failure::Internal(e.into())),
    };
    let code = exit_for(result.status);
    let stdout = io::stdout();
    if json {
        let mut out = stdout.lock();
        serde_json::to_writer_pretty(&mut out, &result).map_err(|e| Failure::Internal(e.into()))?;
        let _ = writeln!(out);
    }
    let rec = Record::from_result(result);
    if !json {
        write_table(stdout.lock(), std::slice::from_ref(&rec), false).map_err(|e| Failure::Internal(e.into()))?;
    }
    if let Some(path) = csv {
        append_csv(&path, std::slice::from_ref(&rec)).map_err(Failure::Internal)?;
    }
    Ok(code)
}

fn cmd_export(input: InputArgs, f: Formulation, out: Option<PathBuf>) -> Result<u8, Failure> {
    let inst = load_instance(&input.path, input.format, input.p).map_err(Failure::Input)?;
    let prep = Preprocessed::new(&inst);
    let text = export_lp(&inst, &prep, f).map_err(|e| Failure::Input(e.into()))?;
    match out {
        Some(path) => fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::Input)?,
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Internal(e.into()))?,
    }
    Ok(0)
}

struct BenchRun {
    path: PathBuf,
    format: Option<Format>,
    p: Option<usize>,
    name: Option<String>,
}

fn parse_manifest(path: &Path) -> anyhow::Result<Vec<BenchRun>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut runs = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let file = toks.next().expect("non-empty line");
        let mut run = BenchRun {
            path: base.join(file),
            format: None,
            p: None,
            name: None,
        };
        for tok in toks {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| anyhow!("manifest line {}: expected key=value, got `{tok}`", no + 1))?;
            match key {
                "format" => {
                    run.format = Some(
                        Format::from_str(value, true)
                            .map_err(|e| anyhow!("manifest line {}: {e}", no + 1))?,
                    )
                }
                "p" => run.p = Some(value.parse().with_context(|| format!("manifest line {}", no + 1))?),
                "name" => run.name = Some(value.to_string()),
                _ => bail!("manifest line {}: unknown key `{key}`", no + 1),
            }
        }
        runs.push(run);
    }
    Ok(runs)
}

fn cmd_bench(manifest: PathBuf, run: RunArgs, csv: Option<PathBuf>) -> Result<u8, Failure> {
    let params = run.params().map_err(Failure::Input)?;
    let runs = parse_manifest(&manifest).map_err(Failure::Input)?;
    let mut records = Vec::new();
    for r in runs {
        let label = r.name.clone().unwrap_or_else(|| {
            r.path
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
        });
        let rec = match load_instance(&r.path, r.format, r.p) {
            Err(e) => Record {
                name: label,
                n: 0,
                p: r.p.unwrap_or(0),
                outcome: Err(format!("{e:#}")),
            },
            Ok(mut inst) => {
                if let Some(n) = &r.name {
                    inst.name = n.clone();
                }
                match solve(&inst, &params) {
                    Ok(res) => Record::from_result(res),
                    Err(e) => {
                        warn!("{}: {e}", inst.name);
                        Record {
                            name: inst.name.clone(),
                            n: inst.n_clients,
                            p: inst.p,
                            outcome: Err(e.to_string()),
                        }
                    }
                }
            }
        };
        records.push(rec);
    }
    write_table(io::stdout().lock(), &records, true).map_err(|e| Failure::Internal(e.into()))?;
    println!();
    write_csv(io::stdout().lock(), &records, true).map_err(|e| Failure::Internal(e.into()))?;
    if let Some(path) = csv {
        append_csv(&path, &records).map_err(Failure::Internal)?;
    }
    Ok(0)
}

fn cmd_generate(n: usize, seed: u64, out: Option<PathBuf>) -> Result<u8, Failure> {
    let inst = generate_rw(n, 1, seed).map_err(|e| Failure::Input(e.into()))?;
    let text = inst.to_dense_text().map_err(|e| Failure::Internal(e.into()))?;
    match out {
        Some(path) => fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::Input)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PMEDIAN_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { input, run, csv, json } => cmd_solve(input, run, csv, json),
        Command::Export { input, export, out } => cmd_export(input, export.into(), out),
        Command::Bench { manifest, run, csv } => cmd_bench(manifest, run, csv),
        Command::Generate { n, seed, out } => cmd_generate(n, seed, out),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let code = f.code();
            let (Failure::Input(e) | Failure::Internal(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
