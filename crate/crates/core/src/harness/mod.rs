//! Experiment orchestration: seeded trials, algorithm runs, CSV output and
//! parameter sweeps.

pub mod config;
mod output;
pub mod plot;
pub mod presets;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{load_config, parse_config, ExperimentConfig, Hint, LoadedConfig};
pub use output::{summarize, SummaryRow, TRACE_COLUMNS};
pub use plot::{emit_plots, PlotMode};
pub use presets::{Preset, PRESETS};

use crate::error::{Error, Result};
use crate::metrics::RunTrace;
use crate::network::{erdos_renyi, metropolis_weights, AgreementWeights, Topology};
use crate::optimizer::{run, Algorithm, Problem};
use crate::rng::{mix, trial_seed};
use crate::spectral_init::{run_init, run_init_centralized, InitParams, InitResult};
use crate::synth::{generate_ground_truth, generate_tasks, split_samples, GroundTruth, TaskDataset};

/// Outcome of one (algorithm, trial) pair.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub algorithm: Algorithm,
    pub trial: usize,
    pub trace: Option<RunTrace>,
    /// Why the run stopped early or never started.
    pub abort: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    /// Ordered by algorithm (config order), then trial.
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn traces(&self, algorithm: Algorithm) -> impl Iterator<Item = &RunTrace> {
        self.records
            .iter()
            .filter(move |r| r.algorithm == algorithm)
            .filter_map(|r| r.trace.as_ref())
    }
}

/// Seeded problem instance of one trial.
pub struct TrialSetup {
    pub seed: u64,
    pub gt: GroundTruth,
    pub ds: TaskDataset,
    pub topo: Topology,
    pub weights: AgreementWeights,
}

const FIXED_GRAPH_TAG: u64 = 0x6669_7865_6467_7270;

pub fn setup_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialSetup> {
    let seed = trial_seed(cfg.run.master_seed, trial);
    let dims = &cfg.dims;
    let gt = generate_ground_truth(dims, cfg.spectrum()?, seed)?;
    let mut ds = generate_tasks(&gt, dims, seed)?;
    if cfg.optimizer.sample_split {
        ds = split_samples(&ds, cfg.optimizer.t_gd, seed)?;
    }
    let graph_seed = if cfg.graph.fixed_graph {
        mix(cfg.run.master_seed, FIXED_GRAPH_TAG)
    } else {
        seed
    };
    let topo = if dims.l_nodes == 1 {
        Topology::from_edges(1, &[])?
    } else {
        erdos_renyi(dims.l_nodes, cfg.graph.p, graph_seed, cfg.graph.max_retries)?
    };
    let weights = metropolis_weights(&topo)?;
    Ok(TrialSetup {
        seed,
        gt,
        ds,
        topo,
        weights,
    })
}

pub fn init_params(cfg: &ExperimentConfig, setup: &TrialSetup) -> Result<InitParams> {
    let pick = |h: Hint, truth: f64| match h {
        Hint::FromTruth => truth,
        Hint::Value(v) => v,
    };
    Ok(InitParams {
        t_pm: cfg.init.t_pm,
        t_con_init: cfg.init.t_con,
        kappa_hint: pick(cfg.kappa_hint()?, setup.gt.kappa),
        mu_hint: pick(cfg.mu_hint()?, setup.gt.mu),
        init_seed: setup.seed,
    })
}

fn zero_compute(trace: &mut RunTrace) {
    trace.init.compute_s = 0.0;
    trace.totals.compute_s = 0.0;
    for s in &mut trace.steps {
        s.compute_s = 0.0;
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Vec<TrialRecord> {
    let algorithms = &cfg.optimizer.algorithms;
    let fail_all = |msg: String| {
        algorithms
            .iter()
            .map(|&algorithm| TrialRecord {
                algorithm,
                trial,
                trace: None,
                abort: Some(msg.clone()),
            })
            .collect()
    };
    let setup = match setup_trial(cfg, trial) {
        Ok(s) => s,
        Err(e) => return fail_all(format!("setup: {e}")),
    };
    let params = match init_params(cfg, &setup) {
        Ok(p) => p,
        Err(e) => return fail_all(format!("setup: {e}")),
    };
    let mut dec_init: Option<Result<InitResult>> = None;
    let mut central_init: Option<Result<InitResult>> = None;

    let pb = Problem {
        ds: &setup.ds,
        topo: &setup.topo,
        weights: &setup.weights,
        gt: &setup.gt,
        dims: &cfg.dims,
        comm: &cfg.comm,
    };
    algorithms
        .iter()
        .map(|&algorithm| {
            let init = if algorithm.is_centralized() {
                central_init.get_or_insert_with(|| run_init_centralized(&setup.ds, &params, &cfg.dims))
            } else {
                dec_init.get_or_insert_with(|| run_init(&setup.ds, &setup.topo, &setup.weights, &params, &cfg.dims))
            };
            let outcome = match init {
                Ok(init) => cfg.optimizer_params(algorithm).and_then(|p| run(&pb, init, &p)),
                Err(e) => Err(Error::Format(format!("initialization: {e}"))),
            };
            match outcome {
                Ok(mut trace) => {
                    if !cfg.run.measure_compute {
                        zero_compute(&mut trace);
                    }
                    TrialRecord {
                        algorithm,
                        trial,
                        abort: trace.aborted.clone(),
                        trace: Some(trace),
                    }
                }
                Err(e) => TrialRecord {
                    algorithm,
                    trial,
                    trace: None,
                    abort: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Runs every configured algorithm on `trials` freshly seeded problems and,
/// when `out_dir` is given, writes `trials.csv`, `summary.csv`,
/// `aborts.csv` and the resolved `config.toml` there.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let per_trial: Vec<Vec<TrialRecord>> = (0..cfg.run.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect();

    let mut records = Vec::with_capacity(cfg.run.trials * cfg.optimizer.algorithms.len());
    for algorithm in &cfg.optimizer.algorithms {
        for trial_records in &per_trial {
            records.extend(trial_records.iter().filter(|r| r.algorithm == *algorithm).cloned());
        }
    }
    let summary = summarize(&records, &cfg.optimizer.algorithms);
    let out = ExperimentOutput {
        config: cfg.clone(),
        records,
        summary,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        output::write_traces(&dir.join("trials.csv"), &out.records)?;
        output::write_summary(&dir.join("summary.csv"), &out.summary)?;
        output::write_aborts(&dir.join("aborts.csv"), &out.records)?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub axis: String,
    pub values: Vec<f64>,
}

/// One experiment per axis value, written to `out_dir/<axis>=<value>/`,
/// plus `sweep_summary.csv` keyed by the axis value.
pub fn run_sweep(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<Vec<(f64, ExperimentOutput)>> {
    if spec.values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    let configs = spec
        .values
        .iter()
        .map(|&v| {
            let mut cfg = spec.base.clone();
            cfg.set_axis(&spec.axis, v)?;
            cfg.validate()?;
            Ok((v, cfg))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut results = Vec::with_capacity(configs.len());
    for (v, cfg) in configs {
        let sub = out_dir.map(|d| d.join(format!("{}={}", spec.axis, v)));
        let out = run_experiment(&cfg, sub.as_deref())?;
        results.push((v, out));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        output::write_sweep_summary(&dir.join("sweep_summary.csv"), &spec.axis, &results)?;
    }
    Ok(results)
}

pub fn default_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.run.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}
