//! `mtrl`: run experiments, parameter sweeps and plots from the command line.
//!
//! Exit status: 0 on success, 1 for invalid input (bad flags, config or
//! CSV), 2 when a run fails or any trial aborts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtrl_core::harness::{
    default_out_dir, emit_plots, load_config, run_experiment, run_sweep, ExperimentConfig, ExperimentOutput, PlotMode,
    Preset, SweepSpec,
};
use mtrl_core::optimizer::Algorithm;
use mtrl_core::Error;

#[derive(Parser)]
#[command(
    name = "mtrl",
    version,
    about = "Decentralized multi-task representation learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm over the configured trials.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (default: `run.out` from the config, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the trial pool (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Repeat a run once per value of one config field.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Field to vary, e.g. `p`, `t_con`, `l_nodes`, `d`, `r`, `t_tasks`.
        /// Defaults to the preset's axis.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values. Defaults to the preset's values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Render a summary CSV as an SVG line chart.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        /// `vs_iter` or `vs_time`.
        #[arg(long, default_value = "vs_iter")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Source {
    /// TOML config file.
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Named preset (fig1a..fig1c, fig2a..fig2c); a config file may also
    /// name one with `preset = "..."`.
    #[arg(long)]
    preset: Option<String>,
    /// Use the published full-scale dimensions of the preset.
    #[arg(long)]
    paper_scale: bool,
}

/// Failure carrying the process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

/// Loading problems are always the caller's input, so they map to status 1.
fn load(source: &Source) -> Result<(ExperimentConfig, Option<Preset>), Failure> {
    let loaded_preset = source
        .preset
        .as_deref()
        .map(Preset::by_name)
        .transpose()
        .map_err(|e| invalid(e.to_string()))?;
    match &source.config {
        Some(path) => {
            let loaded =
                load_config(path, source.paper_scale).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            if loaded_preset.is_some() && loaded.preset.is_some() && loaded_preset != loaded.preset {
                return Err(invalid("--preset conflicts with the preset named in the config file"));
            }
            if let (Some(p), None) = (loaded_preset, loaded.preset) {
                return Err(invalid(format!(
                    "--preset {} with --config: put `preset = \"{}\"` in the file instead",
                    p.name, p.name
                )));
            }
            Ok((loaded.config, loaded.preset))
        }
        None => {
            let p = loaded_preset.expect("clap requires --config or --preset");
            Ok((p.config(source.paper_scale), Some(p)))
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(invalid("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure {
                    code: 2,
                    message: format!("thread pool: {e}"),
                })?;
            Ok(pool.install(f))
        }
    }
}

fn report(out: &ExperimentOutput, label: &str) -> usize {
    for &alg in &out.config.optimizer.algorithms {
        let finals: Vec<f64> = out.traces(alg).map(|t| t.final_sd_node1()).collect();
        let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
        println!(
            "{label}{:<18} final mean SD {mean:.3e} over {} trials",
            alg.name(),
            finals.len()
        );
    }
    let aborts = out.records.iter().filter(|r| r.abort.is_some()).count();
    if aborts > 0 {
        let first = out
            .records
            .iter()
            .find_map(|r| r.abort.as_ref().map(|a| (r.algorithm, r.trial, a)));
        if let Some((alg, trial, reason)) = first {
            eprintln!(
                "{label}{aborts} run(s) aborted; first: {} trial {trial}: {reason}",
                Algorithm::name(alg)
            );
        }
    }
    aborts
}

fn aborted(count: usize, dir: &Path) -> Result<(), Failure> {
    if count == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: 2,
            message: format!("{count} run(s) aborted, see {}", dir.join("aborts.csv").display()),
        })
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { source, out, threads } => {
            let (cfg, _) = load(&source)?;
            let dir = out.unwrap_or_else(|| default_out_dir(&cfg));
            let result = with_threads(threads, || run_experiment(&cfg, Some(&dir)))??;
            println!("wrote {}", dir.display());
            aborted(report(&result, ""), &dir)
        }
        Command::Sweep {
            source,
            axis,
            values,
            out,
            threads,
        } => {
            let (cfg, preset) = load(&source)?;
            let axis = axis
                .or_else(|| preset.map(|p| p.axis.to_string()))
                .ok_or_else(|| invalid("--axis is required without a preset"))?;
            let values = match (values, preset) {
                (Some(v), _) => v,
                (None, Some(p)) if p.axis == axis => p.values(source.paper_scale).to_vec(),
                _ => return Err(invalid("--values is required")),
            };
            let dir = out.unwrap_or_else(|| default_out_dir(&cfg));
            let spec = SweepSpec {
                base: cfg,
                axis: axis.clone(),
                values,
            };
            let results = with_threads(threads, || run_sweep(&spec, Some(&dir)))??;
            println!("wrote {}", dir.display());
            let mut aborts = 0;
            for (v, r) in &results {
                aborts += report(r, &format!("{axis}={v} "));
            }
            aborted(aborts, &dir)
        }
        Command::Plot { summary, mode, out } => {
            let mode: PlotMode = mode.parse()?;
            emit_plots(&summary, mode, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
