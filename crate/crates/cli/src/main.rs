//! `cellwave`: command-line front end for the cellwave-core numerics.
//!
//! Every subcommand reads GFN grids / JSON manifests, writes its outputs, and
//! prints a short summary. Exit status: 0 on success, 2 on invalid input,
//! 3 when an `--assert` verdict fails.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "cellwave", version, about = "Wavelet, trace and Hardy-inequality numerics on cubes")]
pub struct Cli {
    /// seed for every random draw (decimal or 0x-hex)
    #[arg(long, global = true, default_value = "0x5EED", value_parser = parse_seed)]
    pub seed: u64,
    /// cap on worker threads (also CELLWAVE_THREADS)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Whitney decomposition of a domain, with its geometry checks
    Whitney(WhitneyArgs),
    /// f or b sequence-space norm of a coefficient file
    Seqnorm(SeqnormArgs),
    /// Wavelet or local-means norm of a grid
    Norm(NormArgs),
    /// Analysis coefficients of a grid in a wavelet system
    Analyze(AnalyzeArgs),
    /// Grid synthesized from coefficients in a wavelet system
    Synthesize(SynthesizeArgs),
    /// Atom checks
    Atom {
        #[command(subcommand)]
        action: AtomAction,
    },
    /// Pointwise multiplier and diffeomorphism reports
    Op {
        #[command(subcommand)]
        action: OpAction,
    },
    /// Weighted Hardy functional over the f_J family
    Hardy(HardyArgs),
    /// Reinforce check of a grid at one face
    Reinforce(ReinforceArgs),
    /// Trace bundle of a grid on a face of the unit cube
    Trace(TraceArgs),
    /// Extension of a trace bundle
    Extend(ExtendArgs),
    /// Boundary/interior decomposition of a grid on the unit cube
    Decompose(DecomposeArgs),
    /// Canned end-to-end experiments
    Preset(PresetArgs),
}

#[derive(Args, Debug)]
pub struct WhitneyArgs {
    /// cube | plane:L | box
    #[arg(long, default_value = "cube")]
    pub domain: String,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long = "max-level")]
    pub max_level: u32,
    /// "lo,hi" for a cube or "lo1,..,lon,hi1,..,hin"
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// exit 3 unless every geometry check passes
    #[arg(long)]
    pub assert: bool,
}

#[derive(Args, Debug)]
pub struct SeqnormArgs {
    #[arg(long)]
    pub coeffs: PathBuf,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// f (Triebel–Lizorkin) or b (Besov)
    #[arg(long, default_value = "f")]
    pub kind: String,
}

#[derive(Args, Debug)]
pub struct NormArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// haar | db2 | db3 | db4 | auto | localmeans
    #[arg(long, default_value = "auto")]
    pub method: String,
    #[arg(long, allow_hyphen_values = true)]
    pub s: String,
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub jmax: Option<u32>,
    /// vanishing moments of the local-means kernel
    #[arg(long = "N", default_value_t = 2)]
    pub moments: u32,
    /// support dilation of the local-means kernel
    #[arg(long, default_value_t = 2.0)]
    pub e: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// system manifest written by an earlier `analyze --system-out`
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// wavelet order (0 = Haar)
    #[arg(long, default_value_t = 0)]
    pub u: u32,
    #[arg(long)]
    pub jmax: Option<u32>,
    /// build the domain system on the Whitney cubes of the unit cube
    #[arg(long)]
    pub domain: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "system-out")]
    pub system_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub coeffs: PathBuf,
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum AtomAction {
    /// Support, Hölder-size and moment checks of a sampled atom
    Check(AtomCheckArgs),
}

#[derive(Args, Debug)]
pub struct AtomCheckArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub nu: i32,
    /// cube index, comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub m: String,
    #[arg(long, allow_hyphen_values = true)]
    pub s: String,
    #[arg(long)]
    pub p: String,
    #[arg(long = "K")]
    pub k: f64,
    #[arg(long = "L")]
    pub l: f64,
    #[arg(long)]
    pub d: f64,
    #[arg(long = "C")]
    pub c: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub assert: bool,
}

#[derive(Subcommand, Debug)]
pub enum OpAction {
    /// ‖φf‖ / (‖φ | C^ρ‖ ‖f‖)
    Multiply(MultiplyArgs),
    /// ‖f∘φ‖ / ‖f‖ plus the diffeomorphism checks of φ
    Diffeo(DiffeoArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OpCommon {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub s: String,
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value = "auto")]
    pub method: String,
    #[arg(long)]
    pub jmax: Option<u32>,
    /// where to write the transformed grid
    #[arg(long = "grid-out")]
    pub grid_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MultiplyArgs {
    #[command(flatten)]
    pub common: OpCommon,
    #[arg(long)]
    pub phi: PathBuf,
}

#[derive(Args, Debug)]
pub struct DiffeoArgs {
    #[command(flatten)]
    pub common: OpCommon,
    /// component grids φ_1,..,φ_n (comma separated); identity if omitted
    #[arg(long)]
    pub map: Option<String>,
    /// wrap φ into the box (torus)
    #[arg(long)]
    pub periodic: bool,
}

#[derive(Args, Debug)]
pub struct HardyArgs {
    /// critical | subcritical | plain
    #[arg(long, default_value = "critical")]
    pub mode: String,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub l: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// defaults to (n−l)/p (critical) or (n−l)/(2p)
    #[arg(long)]
    pub s: Option<f64>,
    /// 1 | log | pow
    #[arg(long, default_value = "1")]
    pub kappa: String,
    /// range a..b of J values
    #[arg(long = "J", default_value = "3..8")]
    pub j: String,
    /// overlapping | disjoint
    #[arg(long, default_value = "overlapping")]
    pub variant: String,
    #[arg(long, default_value_t = cellwave_core::hardy::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// grows:X (last/first ratio ≥ X) or bounded:X (max/min ≤ X)
    #[arg(long)]
    pub assert: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReinforceArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// l,j: the j-th l-dimensional face of the unit cube
    #[arg(long)]
    pub face: String,
    #[arg(long)]
    pub r: u32,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = cellwave_core::hardy::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub assert: bool,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub face: String,
    #[arg(long)]
    pub r: u32,
    /// smoothness for the trace-window check (skipped when absent)
    #[arg(long)]
    pub s: Option<String>,
    #[arg(long, default_value = "2")]
    pub p: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtendArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub u: u32,
    /// target grid level (default: the bundle's level; required for corners)
    #[arg(long)]
    pub level: Option<i32>,
    /// cap on the perpendicular scale
    #[arg(long)]
    pub jcap: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub s: String,
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub u: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// exit 3 unless reconstruction and residual-trace tolerances hold
    #[arg(long)]
    pub assert: bool,
}

#[derive(Args, Debug)]
pub struct PresetArgs {
    /// w21-cube
    pub name: String,
    #[arg(long = "J", default_value_t = 9)]
    pub j: i32,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_seed(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| format!("bad seed '{t}': {e}"))
}

fn configure_threads(flag: Option<usize>) -> Result<(), String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CELLWAVE_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(v.trim().parse().map_err(|_| format!("bad CELLWAVE_THREADS '{v}'"))?),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err("thread count must be >= 1".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match commands::run(&cli) {
        Ok(commands::Verdict::Pass) => ExitCode::SUCCESS,
        Ok(commands::Verdict::Fail(why)) => {
            eprintln!("assertion failed: {why}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
