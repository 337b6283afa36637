//! Measurement: subspace and task errors, inter-node consistency, the
//! latency-bandwidth communication model and run traces.

use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;
use crate::optimizer::{Algorithm, NodeState};
use crate::synth::GroundTruth;

/// Per-round communication time `latency + bytes * d * r * fan_out / bandwidth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommModel {
    /// Seconds.
    pub latency: f64,
    /// Bits per second, as in the reference cost formula.
    pub bandwidth: f64,
    pub bytes_per_scalar: f64,
}

impl Default for CommModel {
    fn default() -> Self {
        CommModel {
            latency: 20e-3,
            bandwidth: 150e6,
            bytes_per_scalar: 8.0,
        }
    }
}

impl CommModel {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.latency >= 0.0) {
            return Err(crate::Error::config("comm.latency", "must be >= 0"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(crate::Error::config("comm.bandwidth", "must be > 0"));
        }
        if !(self.bytes_per_scalar > 0.0) {
            return Err(crate::Error::config("comm.bytes_per_scalar", "must be > 0"));
        }
        Ok(())
    }
}

/// One agreement round: every node exchanges a `d x r` matrix with each of
/// its neighbors, so the busiest node bounds the round time.
pub fn comm_time_decentralized(model: &CommModel, d: usize, r: usize, max_deg: usize) -> f64 {
    link_time(model, model.bytes_per_scalar * d as f64 * r as f64 * max_deg as f64)
}

// Summed over a common denominator so that the reference case
// (d=300, r=4, 10 neighbours) lands on 0.02064 exactly.
fn link_time(model: &CommModel, bytes: f64) -> f64 {
    (model.latency * model.bandwidth + bytes) / model.bandwidth
}

/// One gather-and-broadcast exchange through a server talking to all `L`
/// nodes.
pub fn comm_time_centralized(model: &CommModel, d: usize, r: usize, l_nodes: usize) -> f64 {
    link_time(model, model.bytes_per_scalar * d as f64 * r as f64 * l_nodes as f64)
}

/// `|u_g b_t - theta*_t| / |theta*_t|` for every task, indexed by task;
/// `0/0` counts as 0.
pub fn task_errors(states: &[NodeState], gt: &GroundTruth) -> Vec<f64> {
    let mut errs = vec![0.0; gt.theta_star.ncols()];
    for s in states {
        let theta_hat = s.u.matrix() * &s.b;
        for (k, &t) in s.tasks.iter().enumerate() {
            let truth = gt.theta_star.column(t);
            let diff = (theta_hat.column(k) - truth).norm();
            let scale = truth.norm();
            errs[t] = if scale == 0.0 {
                if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                diff / scale
            };
        }
    }
    errs
}

/// `(rho_hat, psi_hat)`: the largest pairwise Frobenius gap between node
/// bases, before and after projecting onto the orthogonal complement of
/// `U*`.
pub fn internode_gaps(states: &[NodeState], gt: &GroundTruth) -> (f64, f64) {
    let us: Vec<&Matrix> = states.iter().map(|s| s.u.matrix()).collect();
    internode_gaps_raw(&us, gt.u_star.matrix())
}

pub(crate) fn internode_gaps_raw(us: &[&Matrix], u_star: &Matrix) -> (f64, f64) {
    let projected: Vec<Matrix> = us.iter().map(|u| *u - u_star * u_star.tr_mul(u)).collect();
    let mut rho = 0.0f64;
    let mut psi = 0.0f64;
    for g in 0..us.len() {
        for h in g + 1..us.len() {
            rho = rho.max((us[g] - us[h]).norm());
            psi = psi.max((&projected[g] - &projected[h]).norm());
        }
    }
    (rho, psi)
}

/// Diagnostics recorded after one optimizer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub iter: usize,
    /// Subspace distance of each node's basis to `U*`.
    pub sd: Vec<f64>,
    pub rho_hat: f64,
    pub psi_hat: f64,
    pub max_task_err: f64,
    /// Communication rounds spent in this iteration.
    pub rounds: u64,
    pub messages: u64,
    pub comm_s: f64,
    /// Slowest node's local compute time in this iteration.
    pub compute_s: f64,
}

impl StepReport {
    pub fn sd_node1(&self) -> f64 {
        self.sd[0]
    }

    pub fn sd_max(&self) -> f64 {
        self.sd.iter().copied().fold(0.0, f64::max)
    }
}

/// Cost and quality of the initialization phase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InitReport {
    pub alpha_rounds: u64,
    pub agree_rounds: u64,
    pub broadcast_rounds: u64,
    pub messages: u64,
    pub comm_s: f64,
    pub compute_s: f64,
    pub sd: Vec<f64>,
    pub max_task_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Totals {
    pub alpha_rounds: u64,
    pub init_agree_rounds: u64,
    pub broadcast_rounds: u64,
    pub gd_rounds: u64,
    pub messages: u64,
    pub comm_s: f64,
    pub compute_s: f64,
}

impl Totals {
    pub fn rounds(&self) -> u64 {
        self.alpha_rounds + self.init_agree_rounds + self.broadcast_rounds + self.gd_rounds
    }
}

/// One CSV-ready line of a trace; `iter == 0` is the initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub sd_node1: f64,
    pub sd_max: f64,
    pub rho_hat: f64,
    pub psi_hat: f64,
    pub max_task_err: f64,
    pub comm_s_cum: f64,
    pub compute_s_cum: f64,
    pub rounds_cum: u64,
    pub comm_s_cum_gd: f64,
    pub compute_s_cum_gd: f64,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub init: InitReport,
    pub steps: Vec<StepReport>,
    pub totals: Totals,
    /// Node states after the last completed iteration, with `b` refit to
    /// the final bases.
    pub final_states: Vec<NodeState>,
    pub final_task_errors: Vec<f64>,
    /// Set when the run stopped early; the trace up to that point is kept.
    pub aborted: Option<String>,
}

impl RunTrace {
    pub fn final_sd_node1(&self) -> f64 {
        self.steps.last().map_or(self.init.sd[0], StepReport::sd_node1)
    }

    pub fn sd_node1_series(&self) -> Vec<f64> {
        std::iter::once(self.init.sd[0])
            .chain(self.steps.iter().map(StepReport::sd_node1))
            .collect()
    }

    /// `Theta_hat_g = U_g B_g` for node `g`.
    pub fn theta_hat(&self, g: usize) -> Matrix {
        let s = &self.final_states[g];
        s.u.matrix() * &s.b
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        let init_rounds = self.init.alpha_rounds + self.init.agree_rounds + self.init.broadcast_rounds;
        let mut rows = Vec::with_capacity(self.steps.len() + 1);
        let mut row = TraceRow {
            iter: 0,
            sd_node1: self.init.sd[0],
            sd_max: self.init.sd.iter().copied().fold(0.0, f64::max),
            rho_hat: 0.0,
            psi_hat: 0.0,
            max_task_err: self.init.max_task_err,
            comm_s_cum: self.init.comm_s,
            compute_s_cum: self.init.compute_s,
            rounds_cum: init_rounds,
            comm_s_cum_gd: 0.0,
            compute_s_cum_gd: 0.0,
        };
        rows.push(row);
        for s in &self.steps {
            row = TraceRow {
                iter: s.iter,
                sd_node1: s.sd_node1(),
                sd_max: s.sd_max(),
                rho_hat: s.rho_hat,
                psi_hat: s.psi_hat,
                max_task_err: s.max_task_err,
                comm_s_cum: row.comm_s_cum + s.comm_s,
                compute_s_cum: row.compute_s_cum + s.compute_s,
                rounds_cum: row.rounds_cum + s.rounds,
                comm_s_cum_gd: row.comm_s_cum_gd + s.comm_s,
                compute_s_cum_gd: row.compute_s_cum_gd + s.compute_s,
            };
            rows.push(row);
        }
        rows
    }
}
