//! Experiment configuration files.
//!
//! Configs are TOML. Every field is optional: missing fields fall back to the
//! desk defaults, or to a named preset when the file sets `preset = "..."`.
//! Unknown keys are rejected. A complete file looks like
//!
//! ```toml
//! preset = "fig1a"          # optional
//!
//! [dims]
//! d = 100
//! t_tasks = 200
//! r = 2
//! n = 30
//! l_nodes = 10
//!
//! [ground_truth]
//! mode = "gaussian"         # or "spectrum", with `kappa = 3.0`
//!
//! [graph]
//! p = 0.5
//! max_retries = 1000
//! fixed_graph = false       # one graph shared by all trials
//!
//! [init]
//! t_pm = 30
//! t_con = 10
//! kappa = "truth"           # or a number
//! mu = "truth"
//!
//! [optimizer]
//! algorithms = ["dif_altgdmin", "altgdmin_central", "dec_altgdmin", "dgd_variant"]
//! t_gd = 300
//! t_con = 10
//! eta = "auto"              # "theory" or a number
//! c_eta = 0.4
//! sample_split = false
//! dgd_include_self = false
//!
//! [comm]
//! latency = 0.02
//! bandwidth = 150e6
//! bytes_per_scalar = 8.0
//!
//! [run]
//! trials = 20
//! master_seed = 1
//! measure_compute = true
//! out = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::presets::Preset;
use crate::error::{Error, Result};
use crate::metrics::CommModel;
use crate::optimizer::{Algorithm, OptimizerParams, StepSize};
use crate::synth::{ProblemDims, SpectrumSpec};

/// A number or a keyword such as `"auto"` / `"truth"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOrWord {
    Number(f64),
    Word(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruthConfig {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        GroundTruthConfig {
            mode: "gaussian".into(),
            kappa: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub p: f64,
    pub max_retries: usize,
    pub fixed_graph: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            p: 0.5,
            max_retries: 1000,
            fixed_graph: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub t_pm: usize,
    pub t_con: usize,
    pub kappa: NumberOrWord,
    pub mu: NumberOrWord,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            t_pm: 30,
            t_con: 10,
            kappa: NumberOrWord::Word("truth".into()),
            mu: NumberOrWord::Word("truth".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub algorithms: Vec<Algorithm>,
    pub t_gd: usize,
    pub t_con: usize,
    pub eta: NumberOrWord,
    pub c_eta: f64,
    pub sample_split: bool,
    pub dgd_include_self: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithms: Algorithm::ALL.to_vec(),
            t_gd: 300,
            t_con: 10,
            eta: NumberOrWord::Word("auto".into()),
            c_eta: 0.4,
            sample_split: false,
            dgd_include_self: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub trials: usize,
    pub master_seed: u64,
    /// Record wall-clock compute time; off makes every CSV column
    /// reproducible bit for bit.
    pub measure_compute: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trials: 20,
            master_seed: 1,
            measure_compute: true,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dims: ProblemDims,
    pub ground_truth: GroundTruthConfig,
    pub graph: GraphConfig,
    pub init: InitConfig,
    pub optimizer: OptimizerConfig,
    pub comm: CommModel,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dims: ProblemDims {
                d: 100,
                t_tasks: 200,
                r: 2,
                n: 30,
                l_nodes: 10,
            },
            ground_truth: GroundTruthConfig::default(),
            graph: GraphConfig::default(),
            init: InitConfig::default(),
            optimizer: OptimizerConfig::default(),
            comm: CommModel::default(),
            run: RunConfig::default(),
        }
    }
}

/// How a truncation hint is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hint {
    FromTruth,
    Value(f64),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.spectrum()?;
        if !(self.graph.p > 0.0 && self.graph.p <= 1.0) {
            return Err(Error::config("graph.p", format!("{} not in (0, 1]", self.graph.p)));
        }
        if self.init.t_pm == 0 {
            return Err(Error::config("init.t_pm", "must be >= 1"));
        }
        if self.init.t_con == 0 {
            return Err(Error::config("init.t_con", "must be >= 1"));
        }
        self.kappa_hint()?;
        self.mu_hint()?;
        if self.optimizer.algorithms.is_empty() {
            return Err(Error::config(
                "optimizer.algorithms",
                "must list at least one algorithm",
            ));
        }
        for (i, a) in self.optimizer.algorithms.iter().enumerate() {
            if self.optimizer.algorithms[..i].contains(a) {
                return Err(Error::config("optimizer.algorithms", format!("`{a}` listed twice")));
            }
        }
        if self.optimizer.t_con == 0 {
            return Err(Error::config("optimizer.t_con", "must be >= 1"));
        }
        self.optimizer_params(Algorithm::DifAltgdmin)?
            .validate()
            .map_err(|e| prefix(e, "optimizer."))?;
        self.comm.validate()?;
        if self.run.trials == 0 {
            return Err(Error::config("run.trials", "must be >= 1"));
        }
        if self.optimizer.sample_split && self.dims.n < 2 * self.optimizer.t_gd + 2 {
            return Err(Error::InsufficientSamples {
                required: 2 * self.optimizer.t_gd + 2,
                available: self.dims.n,
            });
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Result<SpectrumSpec> {
        match self.ground_truth.mode.as_str() {
            "gaussian" => Ok(SpectrumSpec::Gaussian),
            "spectrum" => {
                let kappa = self
                    .ground_truth
                    .kappa
                    .ok_or_else(|| Error::config("ground_truth.kappa", "required in spectrum mode"))?;
                if !(kappa >= 1.0) {
                    return Err(Error::InvalidSpectrum(kappa));
                }
                Ok(SpectrumSpec::Spectrum { kappa })
            }
            other => Err(Error::config("ground_truth.mode", format!("unknown mode `{other}`"))),
        }
    }

    fn hint(value: &NumberOrWord, field: &str) -> Result<Hint> {
        match value {
            NumberOrWord::Word(w) if w == "truth" => Ok(Hint::FromTruth),
            NumberOrWord::Number(v) if *v >= 1.0 => Ok(Hint::Value(*v)),
            NumberOrWord::Number(v) => Err(Error::config(field, format!("{v} < 1"))),
            NumberOrWord::Word(w) => Err(Error::config(
                field,
                format!("expected \"truth\" or a number, got `{w}`"),
            )),
        }
    }

    pub fn kappa_hint(&self) -> Result<Hint> {
        Self::hint(&self.init.kappa, "init.kappa")
    }

    pub fn mu_hint(&self) -> Result<Hint> {
        Self::hint(&self.init.mu, "init.mu")
    }

    pub fn step_size(&self) -> Result<StepSize> {
        match &self.optimizer.eta {
            NumberOrWord::Word(w) if w == "auto" => Ok(StepSize::Auto),
            NumberOrWord::Word(w) if w == "theory" => Ok(StepSize::Theory),
            NumberOrWord::Number(v) if *v > 0.0 => Ok(StepSize::Fixed(*v)),
            other => Err(Error::config(
                "optimizer.eta",
                format!("expected \"auto\", \"theory\" or a positive number, got {other:?}"),
            )),
        }
    }

    pub fn optimizer_params(&self, algorithm: Algorithm) -> Result<OptimizerParams> {
        Ok(OptimizerParams {
            algorithm,
            t_gd: self.optimizer.t_gd,
            t_con_gd: self.optimizer.t_con,
            step_size: self.step_size()?,
            c_eta: self.optimizer.c_eta,
            sample_split: self.optimizer.sample_split,
            dgd_include_self: self.optimizer.dgd_include_self,
        })
    }

    /// Sets the field named by a sweep axis.
    pub fn set_axis(&mut self, axis: &str, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::config(axis, format!("{v} is not a nonnegative integer")))
            }
        };
        match axis {
            "d" => self.dims.d = count(value)?,
            "t_tasks" | "T" => self.dims.t_tasks = count(value)?,
            "r" => self.dims.r = count(value)?,
            "n" => self.dims.n = count(value)?,
            "l_nodes" | "L" => self.dims.l_nodes = count(value)?,
            "p" => self.graph.p = value,
            "t_con" => {
                self.init.t_con = count(value)?;
                self.optimizer.t_con = count(value)?;
            }
            "t_con_init" => self.init.t_con = count(value)?,
            "t_con_gd" => self.optimizer.t_con = count(value)?,
            "t_pm" => self.init.t_pm = count(value)?,
            "t_gd" => self.optimizer.t_gd = count(value)?,
            "c_eta" => self.optimizer.c_eta = value,
            "kappa" => self.ground_truth.kappa = Some(value),
            "trials" => self.run.trials = count(value)?,
            "master_seed" => self.run.master_seed = count(value)? as u64,
            other => return Err(Error::config("axis", format!("unknown sweep axis `{other}`"))),
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn prefix(e: Error, p: &str) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => Error::InvalidConfig {
            field: format!("{p}{field}"),
            reason,
        },
        other => other,
    }
}

/// A parsed config file together with the preset it extends, if any.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub preset: Option<Preset>,
}

/// Parses config text, layering it over a preset (when named) or the
/// defaults.
pub fn parse_config(text: &str, paper_scale: bool) -> Result<LoadedConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    let preset = match table.remove("preset") {
        None => None,
        Some(toml::Value::String(name)) => Some(Preset::by_name(&name)?),
        Some(other) => return Err(Error::config("preset", format!("expected a string, got {other}"))),
    };
    let base = match &preset {
        Some(p) => p.config(paper_scale),
        None => ExperimentConfig::default(),
    };
    let mut merged = toml::Table::try_from(&base).map_err(|e| Error::ConfigParse(e.to_string()))?;
    merge(&mut merged, table);
    let config: ExperimentConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    config.validate()?;
    Ok(LoadedConfig { config, preset })
}

pub fn load_config(path: &Path, paper_scale: bool) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, paper_scale)
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
