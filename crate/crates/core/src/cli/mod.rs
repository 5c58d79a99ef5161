//! Command-line front end.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 resource limit, 3 usage.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::field_space::{FieldVector, Subspace};
use crate::numeric::hexify;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_RESOURCE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "regulab", version, about = "Arithmetic regularity over F_p^n")]
pub struct Cli {
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a layered instance and write it to disk.
    Construct(ConstructArgs),
    /// Fourier spectrum of a stored function.
    Spectrum(SpectrumArgs),
    /// Coset-wise uniformity of a stored function.
    Regularity(RegularityArgs),
    /// Energy of a stored function relative to a subspace.
    Energy(EnergyArgs),
    /// Run one of the instance verifiers.
    Verify(VerifyArgs),
    /// Quadratic regularity partition of a stored function.
    Qarl(QarlArgs),
    /// Weight schedule and tower comparison.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Hlms,
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[arg(long)]
    pub p: u32,
    #[arg(long)]
    pub n: usize,
    /// Comma-separated weights; fractions such as `1/4` are accepted.
    #[arg(long, conflicts_with = "preset")]
    pub weights: Option<String>,
    #[arg(long, requires = "eps")]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "regulab-out")]
    pub out: PathBuf,
    #[arg(long, default_value = "instance")]
    pub stem: String,
}

/// A subspace given by a basis, coordinates, or a layer of an instance.
#[derive(Debug, Args)]
pub struct SubspaceArgs {
    /// Basis rows such as `1,0,2;0,1,1`.
    #[arg(long, conflicts_with_all = ["coordinates", "layer"])]
    pub basis: Option<String>,
    /// Coordinate subspace on the listed axes, such as `2,3`.
    #[arg(long, conflicts_with = "layer")]
    pub coordinates: Option<String>,
    /// `H_i` of the instance given by `--instance`.
    #[arg(long, requires = "instance")]
    pub layer: Option<usize>,
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Function file (`.fpfn`).
    #[arg(long)]
    pub f: PathBuf,
    #[arg(long, default_value = "regulab-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegularityArgs {
    #[arg(long)]
    pub f: PathBuf,
    #[command(flatten)]
    pub subspace: SubspaceArgs,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value = "regulab-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    pub f: PathBuf,
    #[command(flatten)]
    pub subspace: SubspaceArgs,
    #[arg(long, default_value = "regulab-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Prop24,
    Claim,
    EnergyMiddle,
    EnergyStart,
    SarlPair,
    Schedule,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub which: Check,
    /// Instance manifest; not needed for `schedule`.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Random subspaces for `energy-start`.
    #[arg(long, default_value_t = 1000)]
    pub random: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Index `j` of `W_1 = H_j` for `sarl-pair`.
    #[arg(long)]
    pub w1: Option<usize>,
    /// Index `k` of `W_2 = H_k` for `sarl-pair`.
    #[arg(long)]
    pub w2: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub p: Option<u32>,
    /// Constant `c` of `ε(d) = √δ/(c(d+1))`; defaults to `80p²`.
    #[arg(long)]
    pub eps_c: Option<u64>,
    #[arg(long, default_value = "regulab-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GrowthPreset {
    PaperMin,
}

#[derive(Debug, Args)]
pub struct QarlArgs {
    #[arg(long)]
    pub f: PathBuf,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "paper-min")]
    pub preset: GrowthPreset,
    #[arg(long)]
    pub omega_scale: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub rank_offset: Option<i64>,
    #[arg(long)]
    pub rank_scale: Option<u64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    /// Limit on the quadratic parts swept by the inverse oracle.
    #[arg(long)]
    pub max_quadratic_parts: Option<u128>,
    /// Also check regularity of the linear layer.
    #[arg(long)]
    pub check_linear_layer: bool,
    #[arg(long, default_value = "regulab-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub p: u32,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub eps_c: Option<u64>,
    #[arg(long, default_value = "regulab-out")]
    pub out: PathBuf,
}

/// Record of one invocation and the files it wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub parameters: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_clock_ms: u128,
}

/// Collects outputs of a command.
pub(crate) struct Session {
    pub budget: Budget,
    pub out: PathBuf,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub parameters: Value,
    pub seed: Option<u64>,
}

impl Session {
    fn new(budget: Budget, out: &Path) -> Self {
        Session {
            budget,
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            parameters: Value::Null,
            seed: None,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `value` as JSON with floats as hex strings.
    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        let text = serde_json::to_string_pretty(&hexify(serde_json::to_value(value)?))?;
        fs::write(&path, text + "\n")?;
        self.output(&path);
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        fs::write(&path, text)?;
        self.output(&path);
        Ok(path)
    }
}

pub(crate) fn parse_number(raw: &str) -> Result<f64> {
    let raw = raw.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse {raw:?} as a number"));
    match raw.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok(a / b)
        }
        None => raw.parse().map_err(|_| bad()),
    }
}

pub(crate) fn parse_list<T>(raw: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    raw.split(',').filter(|s| !s.trim().is_empty()).map(item).collect()
}

pub(crate) fn parse_subspace(p: u32, n: usize, args: &SubspaceArgs, budget: &Budget) -> Result<Subspace> {
    if let Some(raw) = &args.basis {
        let rows = raw
            .split(';')
            .filter(|r| !r.trim().is_empty())
            .map(|r| {
                let coords = parse_list(r, |c| {
                    c.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::InvalidParameter(format!("bad coordinate {c:?}")))
                })?;
                if coords.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "basis row {r:?} has {} entries, expected {n}",
                        coords.len()
                    )));
                }
                Ok(FieldVector::new(p, coords))
            })
            .collect::<Result<Vec<_>>>()?;
        return Subspace::rref(p, n, &rows);
    }
    if let Some(raw) = &args.coordinates {
        let axes = parse_list(raw, |c| {
            c.trim()
                .parse::<usize>()
                .ok()
                .filter(|&k| k < n)
                .ok_or_else(|| Error::InvalidParameter(format!("bad axis {c:?}")))
        })?;
        return Ok(Subspace::coordinate(p, n, axes));
    }
    if let (Some(i), Some(path)) = (args.layer, &args.instance) {
        let inst = crate::construction::Instance::load(path, budget)?;
        if inst.p != p || inst.n != n {
            return Err(Error::DimensionMismatch("instance and function differ in space".into()));
        }
        if i > inst.s() {
            return Err(Error::InvalidParameter(format!("layer {i} beyond s = {}", inst.s())));
        }
        return Ok(inst.h(i));
    }
    Err(Error::InvalidParameter(
        "give a subspace with --basis, --coordinates or --instance/--layer".into(),
    ))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BudgetExceeded { .. } => EXIT_RESOURCE,
        Error::Invariant(_)
        | Error::Hypothesis(_)
        | Error::NotRefinement(_)
        | Error::SamplingFailed { .. } => EXIT_FAIL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` and runs the command; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let text_args: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match pool.install(|| execute(&cli, &text_args)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli, args: &[String]) -> Result<i32> {
    let budget = Budget::from_env()?;
    let start = Instant::now();
    let (name, out) = match &cli.command {
        Command::Construct(a) => ("construct", &a.out),
        Command::Spectrum(a) => ("spectrum", &a.out),
        Command::Regularity(a) => ("regularity", &a.out),
        Command::Energy(a) => ("energy", &a.out),
        Command::Verify(a) => ("verify", &a.out),
        Command::Qarl(a) => ("qarl", &a.out),
        Command::Schedule(a) => ("schedule", &a.out),
    };
    let mut session = Session::new(budget, out);
    let code = match &cli.command {
        Command::Construct(a) => commands::construct(a, &mut session)?,
        Command::Spectrum(a) => commands::spectrum(a, &mut session)?,
        Command::Regularity(a) => commands::regularity(a, &mut session)?,
        Command::Energy(a) => commands::energy(a, &mut session)?,
        Command::Verify(a) => commands::verify(a, &mut session)?,
        Command::Qarl(a) => commands::qarl(a, &mut session)?,
        Command::Schedule(a) => commands::schedule(a, &mut session)?,
    };
    let manifest = RunManifest {
        command: name.into(),
        args: args.iter().skip(1).cloned().collect(),
        seed: session.seed,
        parameters: session.parameters.clone(),
        inputs: session.inputs.clone(),
        outputs: session.outputs.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_ms: start.elapsed().as_millis(),
    };
    session.write_json(&format!("{name}.manifest.json"), &manifest)?;
    Ok(code)
}

/// Entry point for the binary.
pub fn main() -> i32 {
    run_from(std::env::args_os())
}
