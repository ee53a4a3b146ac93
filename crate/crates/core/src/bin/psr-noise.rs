use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use psr_noise::cli_io::{self, ConstantsFile, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "psr-noise", version, about = "Quadrature noise of polarization self-rotation in cold 87Rb")]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep detuning and write noise_vs_detuning.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
        /// Override the number of slices.
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Noise against quadrature angle at one detuning.
    Quadsweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        detuning_mhz: f64,
        #[arg(long, default_value_t = 181)]
        points: usize,
        #[arg(long, env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Reduce measured homodyne traces against a shot-noise reference.
    Analyze {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        shot: PathBuf,
        #[arg(long, env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
    },
    /// Print the physical constants in use.
    Constants {
        /// A constants file or a sweep config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> psr_noise::Result<()> {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    match cli.command {
        Command::Simulate { config, out_dir, slices } => {
            let out = cli_io::resolve_out_dir(out_dir);
            let result = cli_io::cmd_simulate(&config, &out, slices)?;
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            println!("wrote {} rows to {}", result.rows.len(), result.table.display());
            if failed > 0 {
                eprintln!("{failed} points failed; see the error column");
            }
        }
        Command::Quadsweep { config, detuning_mhz, points, out_dir, slices } => {
            let out = cli_io::resolve_out_dir(out_dir);
            let table = cli_io::cmd_quadsweep(&config, detuning_mhz, points, &out, slices)?;
            println!("wrote {}", table.display());
        }
        Command::Analyze { traces, shot, out_dir } => {
            let out = cli_io::resolve_out_dir(out_dir);
            let (table, summary) = cli_io::cmd_analyze(&traces, &shot, &out)?;
            for s in &summary {
                match &s.result {
                    Err(e) => eprintln!("{}: {e}", s.file.display()),
                    Ok(e) if e.heisenberg_warning => {
                        eprintln!("warning: {}: extrema below the uncertainty bound", s.file.display())
                    }
                    Ok(_) => {}
                }
            }
            println!("wrote {} rows to {}", summary.len(), table.display());
        }
        Command::Constants { config } => {
            let constants = match config {
                None => ConstantsFile::default(),
                Some(path) => match cli_io::read_constants(&path) {
                    Ok(c) => c,
                    Err(_) => cli_io::read_config(&path)?.1,
                },
            };
            print!("{}", cli_io::constants_table(&constants)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
