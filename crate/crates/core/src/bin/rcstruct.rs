use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcstruct::channel::PaModel;
use rcstruct::harness::{csv_line, csv_preamble, run_ber_sweep_with, AdaptMode, DetectorKind, SimConfig};
use rcstruct::ofdm::PilotDesign;
use rcstruct::Error;

#[derive(Parser)]
#[command(name = "rcstruct", version, about = "MIMO-OFDM BER sweeps with reservoir and structure-based detectors")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER sweep and write one CSV row per (Eb/N0, detector).
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated Eb/N0 points in dB, replacing the configured list.
    #[arg(long, allow_hyphen_values = true)]
    ebn0: Option<String>,
    /// Detector to run; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    detector: Vec<DetectorKind>,
    /// Adaptation mode: none, rank, link or both.
    #[arg(long)]
    adapt: Option<AdaptMode>,
    /// Enable the power amplifier at this input back-off (dB).
    #[arg(long, conflicts_with = "pa_off", allow_hyphen_values = true)]
    pa_ibo: Option<f64>,
    /// Disable the power amplifier.
    #[arg(long)]
    pa_off: bool,
    /// Pilot design: random or orthogonal.
    #[arg(long)]
    pilots: Option<PilotDesign>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Subframes per Eb/N0 point.
    #[arg(long)]
    subframes: Option<usize>,
    /// Write zero in the seconds column so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::InvalidConfig(format!("bad Eb/N0 value '{t}': {e}"))))
        .collect()
}

fn build_config(a: &SimulateArgs) -> Result<SimConfig, Error> {
    let mut cfg = SimConfig::load(&a.config)?;
    if let Some(s) = &a.ebn0 {
        cfg.ebn0_db = parse_list(s)?;
    }
    if !a.detector.is_empty() {
        cfg.detectors = a.detector.clone();
    }
    if let Some(m) = a.adapt {
        cfg.adaptation = m;
    }
    if let Some(ibo) = a.pa_ibo {
        cfg.pa = PaModel { enabled: true, ibo_db: Some(ibo), ..cfg.pa };
    }
    if a.pa_off {
        cfg.pa.enabled = false;
    }
    if let Some(p) = a.pilots {
        cfg.pilots = p;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.subframes {
        cfg.subframes_per_point = n;
    }
    if a.no_timing {
        cfg.timing = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(a: &SimulateArgs) -> Result<(), Error> {
    let cfg = build_config(a)?;
    let mut sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::InvalidConfig(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    sink.write_all(csv_preamble(&cfg).as_bytes())?;
    let result = run_ber_sweep_with(&cfg, |row| {
        sink.write_all(csv_line(row).as_bytes())?;
        sink.flush()?;
        Ok(())
    });
    sink.flush()?;
    result.map(|_| ())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let Command::Simulate(args) = cli.command;
    match simulate(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
