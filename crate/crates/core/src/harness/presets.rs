//! Named experiment presets mirroring the two published experiment families:
//! network parameters (`fig1*`) and problem dimensions (`fig2*`). Each has a
//! desk-scale base and the published full-scale base.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::synth::ProblemDims;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub axis: &'static str,
    pub desk_values: &'static [f64],
    pub paper_values: &'static [f64],
}

pub const PRESETS: [Preset; 6] = [
    Preset {
        name: "fig1a",
        axis: "t_con",
        desk_values: &[5.0, 20.0],
        paper_values: &[10.0, 20.0],
    },
    Preset {
        name: "fig1b",
        axis: "p",
        desk_values: &[0.1, 0.25],
        paper_values: &[0.05, 0.25],
    },
    Preset {
        name: "fig1c",
        axis: "l_nodes",
        desk_values: &[50.0, 100.0],
        paper_values: &[400.0, 800.0],
    },
    Preset {
        name: "fig2a",
        axis: "d",
        desk_values: &[100.0, 200.0],
        paper_values: &[400.0, 800.0],
    },
    Preset {
        name: "fig2b",
        axis: "r",
        desk_values: &[2.0, 4.0],
        paper_values: &[2.0, 4.0],
    },
    Preset {
        name: "fig2c",
        axis: "t_tasks",
        desk_values: &[100.0, 200.0],
        paper_values: &[400.0, 800.0],
    },
];

impl Preset {
    pub fn by_name(name: &str) -> Result<Preset> {
        PRESETS
            .iter()
            .copied()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))
    }

    pub fn values(&self, paper_scale: bool) -> &'static [f64] {
        if paper_scale {
            self.paper_values
        } else {
            self.desk_values
        }
    }

    /// Base configuration the sweep axis is applied to.
    pub fn config(&self, paper_scale: bool) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        let network_family = self.name.starts_with("fig1");
        let (dims, p, t_con, t_gd, trials) = match (network_family, paper_scale) {
            (true, false) => (dims(100, 200, 2, 30, 30), 0.2, 5, 200, 20),
            (true, true) => (dims(300, 800, 4, 50, 300), 0.03, 5, 200, 100),
            (false, false) => (dims(150, 150, 2, 30, 10), 0.5, 5, 200, 20),
            (false, true) => (dims(600, 600, 4, 50, 20), 0.25, 5, 400, 100),
        };
        cfg.dims = dims;
        cfg.graph.p = p;
        cfg.init.t_con = t_con;
        cfg.optimizer.t_con = t_con;
        cfg.optimizer.t_gd = t_gd;
        cfg.run.trials = trials;
        cfg
    }
}

fn dims(d: usize, t_tasks: usize, r: usize, n: usize, l_nodes: usize) -> ProblemDims {
    ProblemDims {
        d,
        t_tasks,
        r,
        n,
        l_nodes,
    }
}
