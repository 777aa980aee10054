use clap::{Parser, Subcommand};

use sqdit_cli::commands::{
    cmd_alpha_sweep, cmd_bitsweep, cmd_calibrate, cmd_compare, cmd_trsweep, AlphaSweepCmd,
    BitsweepCmd, CalibrateCmd, CompareCmd, TrsweepCmd,
};

/// Static post-training quantization harness for the toy spatial-temporal
/// diffusion transformer.
#[derive(Parser)]
#[command(name = "sqdit", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Calibrate a quantization scheme and write the parameter table.
    Calibrate(CalibrateCmd),
    /// Evaluate tables and baselines against the float reference.
    Compare(CompareCmd),
    /// Scheme x bit-width robustness matrix.
    Bitsweep(BitsweepCmd),
    /// Time-range granularity sweep with table-size accounting.
    Trsweep(TrsweepCmd),
    /// Grid-search the smoothing strength alpha over {0.1, ..., 1.0}.
    AlphaSweep(AlphaSweepCmd),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Calibrate(args) => cmd_calibrate(args),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::Bitsweep(args) => cmd_bitsweep(args),
        Cmd::Trsweep(args) => cmd_trsweep(args),
        Cmd::AlphaSweep(args) => cmd_alpha_sweep(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
