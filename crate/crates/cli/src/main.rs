use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mr3d_core::config::ExperimentConfig;
use mr3d_core::experiment::{
    compare_flops, drop_for_seed, run_experiment_with_threads, score_tensor, square_sweep,
    summarize, threads_from_env, write_csv, write_flops_csv, ResultRow,
};
use mr3d_core::flops::cost;
use mr3d_core::reconstruct::Method;
use mr3d_core::tensor_io;

/// Exit status when `--strict` finds rows without a sum rate.
const EXIT_STRICT: u8 = 2;

#[derive(Parser)]
#[command(name = "mr3d", version, about = "Massive 3D-MIMO channel reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (key = value with [section] headers).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted and the config names none.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the seeded experiment and write result rows as CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// Number of drops, overriding the config.
        #[arg(long, value_name = "N")]
        seeds: Option<usize>,
        /// Exit with status 2 if any row carries a status instead of a rate.
        #[arg(long)]
        strict: bool,
        /// Print per-cell mean sum rates to stderr.
        #[arg(long)]
        summary: bool,
    },
    /// Cost every method over a square-array sweep and write CSV.
    Flops {
        #[command(flatten)]
        common: Common,
        /// Square sizes `N_A = N_E`, as `a..=b` or a comma list; defaults to
        /// the config geometry.
        #[arg(long, value_name = "RANGE")]
        sweep: Option<String>,
        /// Resource blocks per precoding unit in the cost model.
        #[arg(long, default_value_t = 1)]
        pu_rb: usize,
        /// Emit label=value breakdowns for the config geometry instead.
        #[arg(long)]
        text: bool,
    },
    /// Draw one drop and write it as a binary tensor file.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Drop index.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a tensor file and write result rows as CSV.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        tensor: PathBuf,
        /// Methods to evaluate, overriding the config.
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        #[arg(long)]
        strict: bool,
    },
    /// Print the default config with every key.
    Defaults,
}

fn load_config(path: Option<&Path>) -> mr3d_core::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_path(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn open_out(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_sweep(spec: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("invalid sweep `{spec}`; expected `a..=b`, `a..b` or `a,b,c`");
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let (b, inclusive) = match b.strip_prefix('=') {
            Some(b) => (b, true),
            None => (b, false),
        };
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        let sizes: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
        if sizes.is_empty() || a == 0 {
            return Err(bad());
        }
        Ok(sizes)
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<u64>().ok().filter(|&n| n > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(bad)
    }
}

fn finish_rows(rows: &[ResultRow], out: Option<&Path>, strict: bool) -> Result<ExitCode, String> {
    let w = open_out(out).map_err(|e| e.to_string())?;
    write_csv(rows, w).map_err(|e| e.to_string())?;
    let failed = rows.iter().filter(|r| r.sum_rate.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} rows carry a status instead of a sum rate", rows.len());
        if strict {
            return Ok(ExitCode::from(EXIT_STRICT));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let err = |e: mr3d_core::Error| e.to_string();
    match cli.command {
        Command::Run {
            common,
            seeds,
            strict,
            summary,
        } => {
            let mut cfg = load_config(common.config.as_deref()).map_err(err)?;
            if let Some(n) = seeds {
                cfg.n_seeds = n;
            }
            let rows = run_experiment_with_threads(&cfg, threads_from_env()).map_err(err)?;
            if summary {
                for ((m, n, g), c) in summarize(&rows) {
                    eprintln!("{m},{n},{g},{:.6},{}", c.mean, c.count);
                }
            }
            let out = common.out.or(cfg.output.clone());
            finish_rows(&rows, out.as_deref(), strict)
        }
        Command::Flops {
            common,
            sweep,
            pu_rb,
            text,
        } => {
            let cfg = load_config(common.config.as_deref()).map_err(err)?;
            let base = cfg.cost_config(pu_rb);
            let mut w = open_out(common.out.as_deref()).map_err(|e| e.to_string())?;
            if text {
                for m in &cfg.methods {
                    let c = cost(*m, &base).map_err(err)?;
                    writeln!(w, "{}", c.to_text()).map_err(|e| e.to_string())?;
                }
                w.flush().map_err(|e| e.to_string())?;
                return Ok(ExitCode::SUCCESS);
            }
            let configs = match sweep {
                Some(s) => square_sweep(parse_sweep(&s)?, &base),
                None => vec![base],
            };
            let rows = compare_flops(&configs, &cfg.methods).map_err(err)?;
            write_flops_csv(&rows, w).map_err(err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { common, seed } => {
            let cfg = load_config(common.config.as_deref()).map_err(err)?;
            let tensor = drop_for_seed(&cfg, seed).map_err(err)?;
            let w = open_out(common.out.as_deref()).map_err(|e| e.to_string())?;
            tensor_io::write_tensor(&tensor, w).map_err(err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            common,
            tensor,
            method,
            strict,
        } => {
            let mut cfg = load_config(common.config.as_deref()).map_err(err)?;
            if !method.is_empty() {
                cfg.methods = method;
            }
            let t = tensor_io::load(&tensor).map_err(err)?;
            let rows = score_tensor(&cfg, &t, t.meta.seed).map_err(err)?;
            finish_rows(&rows, common.out.as_deref(), strict)
        }
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().to_ini());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("mr3d: {msg}");
            ExitCode::FAILURE
        }
    }
}
