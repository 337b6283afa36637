//! Alternating projected gradient descent and minimization over the
//! network (Dif-AltGDmin) and the three comparison baselines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    comm_time_centralized, comm_time_decentralized, internode_gaps_raw, task_errors, CommModel, InitReport, RunTrace,
    StepReport, Totals,
};
use crate::network::{agree, AgreementWeights, Topology, Traffic};
use crate::numerics::{least_squares, qr_positive, subspace_distance_raw, Matrix, OrthonormalBasis};
use crate::spectral_init::InitResult;
use crate::synth::{GroundTruth, ProblemDims, SplitLabel, TaskDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Agreement on the locally updated bases.
    DifAltgdmin,
    /// Server aggregates all gradients and broadcasts the new basis.
    AltgdminCentral,
    /// Agreement on the gradients only.
    DecAltgdmin,
    /// Neighbor average of bases minus the local gradient.
    DgdVariant,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::DifAltgdmin,
        Algorithm::AltgdminCentral,
        Algorithm::DecAltgdmin,
        Algorithm::DgdVariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DifAltgdmin => "dif_altgdmin",
            Algorithm::AltgdminCentral => "altgdmin_central",
            Algorithm::DecAltgdmin => "dec_altgdmin",
            Algorithm::DgdVariant => "dgd_variant",
        }
    }

    pub fn is_centralized(self) -> bool {
        self == Algorithm::AltgdminCentral
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algorithm", format!("unknown algorithm `{s}`")))
    }
}

/// Step-size policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `c_eta / (n * max diag R)` from node 1's last power-method R factor.
    Auto,
    /// `c_eta / (n * sigma*_max^2)` from the ground truth.
    Theory,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerParams {
    pub algorithm: Algorithm,
    pub t_gd: usize,
    pub t_con_gd: usize,
    pub step_size: StepSize,
    pub c_eta: f64,
    pub sample_split: bool,
    /// Let the DGD variant include the node's own basis in the neighbor
    /// average.
    pub dgd_include_self: bool,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            algorithm: Algorithm::DifAltgdmin,
            t_gd: 300,
            t_con_gd: 10,
            step_size: StepSize::Auto,
            c_eta: 0.4,
            sample_split: false,
            dgd_include_self: false,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_eta > 0.0 && self.c_eta < 0.5) {
            return Err(Error::config("c_eta", format!("{} not in (0, 0.5)", self.c_eta)));
        }
        if let StepSize::Fixed(eta) = self.step_size {
            if !(eta > 0.0) {
                return Err(Error::config("eta", format!("{eta} must be > 0")));
            }
        }
        if self.t_con_gd == 0 && !self.algorithm.is_centralized() {
            return Err(Error::config("t_con_gd", "must be >= 1"));
        }
        Ok(())
    }
}

/// One node's iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    /// Task indices `S_g`, matching the columns of `b`.
    pub tasks: Vec<usize>,
    pub u: OrthonormalBasis,
    /// `r x |S_g|`.
    pub b: Matrix,
    /// R factor of the last projection.
    pub r_factor: Matrix,
}

impl NodeState {
    pub fn new(tasks: Vec<usize>, u: OrthonormalBasis, b: Matrix) -> Self {
        let r = u.rank();
        NodeState {
            tasks,
            u,
            b,
            r_factor: Matrix::identity(r, r),
        }
    }
}

/// Everything a step needs besides the iterates.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub ds: &'a TaskDataset,
    pub topo: &'a Topology,
    pub weights: &'a AgreementWeights,
    pub gt: &'a GroundTruth,
    pub dims: &'a ProblemDims,
    pub comm: &'a CommModel,
}

/// `b_t = (X_t u)^+ y_t` for each task of the node.
pub fn min_step_b(ds: &TaskDataset, tasks: &[usize], u: &OrthonormalBasis, label: SplitLabel) -> Result<Matrix> {
    let mut b = Matrix::zeros(u.rank(), tasks.len());
    for (k, &t) in tasks.iter().enumerate() {
        let (x, y) = ds.sample(t, label);
        let design = x.as_ref() * u.matrix();
        let col = least_squares(&design, &y).map_err(|e| match e {
            Error::RankDeficient {
                sigma_min, sigma_max, ..
            } => Error::RankDeficient {
                sigma_min,
                sigma_max,
                context: format!("min step for task {t}"),
            },
            other => other,
        })?;
        b.set_column(k, &col);
    }
    Ok(b)
}

/// `sum_t X_t^T (X_t u b_t - y_t) b_t^T` over the node's tasks.
pub fn local_gradient(
    ds: &TaskDataset,
    tasks: &[usize],
    u: &OrthonormalBasis,
    b: &Matrix,
    label: SplitLabel,
) -> Matrix {
    let mut grad = Matrix::zeros(u.dim(), u.rank());
    for (k, &t) in tasks.iter().enumerate() {
        let (x, y) = ds.sample(t, label);
        let bt = b.column(k);
        let residual = x.as_ref() * (u.matrix() * bt) - y.as_ref();
        let back = x.tr_mul(&residual);
        grad.ger(1.0, &back, &bt, 1.0);
    }
    grad
}

/// `c_eta / (n * max diag R)`.
pub fn auto_step_size(init: &InitResult, n_effective: f64, c_eta: f64) -> Result<f64> {
    let top = init.r_final.diagonal().max();
    if !(top > 0.0) {
        return Err(Error::NonpositiveEstimate(top));
    }
    Ok(c_eta / (n_effective * top))
}

pub fn resolve_step_size(
    params: &OptimizerParams,
    init: &InitResult,
    ds: &TaskDataset,
    gt: &GroundTruth,
) -> Result<f64> {
    let n_eff = ds.samples_per_split();
    match params.step_size {
        StepSize::Auto => auto_step_size(init, n_eff, params.c_eta),
        StepSize::Theory => Ok(params.c_eta / (n_eff * gt.sigma_max * gt.sigma_max)),
        StepSize::Fixed(eta) => Ok(eta),
    }
}

fn labels(params: &OptimizerParams, tau: usize) -> (SplitLabel, SplitLabel) {
    (SplitLabel::Iteration(tau), SplitLabel::Iteration(tau + params.t_gd))
}

/// Per-node min step, task errors at the current bases and local
/// gradients. Returns gradients, the max task error and the slowest node's
/// compute time.
fn local_phase(
    states: &mut [NodeState],
    pb: &Problem<'_>,
    params: &OptimizerParams,
    tau: usize,
) -> Result<(Vec<Matrix>, f64, f64)> {
    let (min_label, grad_label) = labels(params, tau);
    let mut slowest = 0.0f64;
    let mut grads = Vec::with_capacity(states.len());
    for s in states.iter_mut() {
        let clock = Instant::now();
        s.b = min_step_b(pb.ds, &s.tasks, &s.u, min_label)?;
        let grad = local_gradient(pb.ds, &s.tasks, &s.u, &s.b, grad_label);
        slowest = slowest.max(clock.elapsed().as_secs_f64());
        grads.push(grad);
    }
    let max_err = task_errors(states, pb.gt).into_iter().fold(0.0, f64::max);
    Ok((grads, max_err, slowest))
}

/// QR-projects each node's matrix, returning the slowest node's time.
fn project_all(states: &mut [NodeState], mats: Vec<Matrix>) -> Result<f64> {
    let mut slowest = 0.0f64;
    for (s, m) in states.iter_mut().zip(mats) {
        let clock = Instant::now();
        let (q, r) = qr_positive(&m)?;
        slowest = slowest.max(clock.elapsed().as_secs_f64());
        s.u = q;
        s.r_factor = r;
    }
    Ok(slowest)
}

fn report(
    states: &[NodeState],
    pb: &Problem<'_>,
    tau: usize,
    max_task_err: f64,
    traffic: Traffic,
    comm_s: f64,
    compute_s: f64,
) -> Result<StepReport> {
    let u_star = pb.gt.u_star.matrix();
    let sd = states
        .iter()
        .map(|s| subspace_distance_raw(u_star, s.u.matrix()))
        .collect::<Result<Vec<_>>>()?;
    let us: Vec<&Matrix> = states.iter().map(|s| s.u.matrix()).collect();
    let (rho_hat, psi_hat) = internode_gaps_raw(&us, u_star);
    Ok(StepReport {
        iter: tau,
        sd,
        rho_hat,
        psi_hat,
        max_task_err,
        rounds: traffic.rounds,
        messages: traffic.messages,
        comm_s,
        compute_s,
    })
}

fn agreement_round_time(pb: &Problem<'_>) -> f64 {
    comm_time_decentralized(pb.comm, pb.dims.d, pb.dims.r, pb.topo.max_degree())
}

/// Local update `U_g - eta L grad_g` followed by agreement; returns the
/// post-agreement (pre-projection) matrices.
pub fn dif_diffuse(
    states: &[NodeState],
    grads: &[Matrix],
    weights: &AgreementWeights,
    eta: f64,
    rounds: usize,
) -> Result<(Vec<Matrix>, Traffic)> {
    let scale = eta * states.len() as f64;
    let local: Vec<Matrix> = states
        .iter()
        .zip(grads)
        .map(|(s, g)| s.u.matrix() - g * scale)
        .collect();
    agree(&local, weights, rounds)
}

pub fn dif_altgdmin_step(
    states: &mut [NodeState],
    pb: &Problem<'_>,
    params: &OptimizerParams,
    eta: f64,
    tau: usize,
) -> Result<StepReport> {
    let (grads, max_err, t_local) = local_phase(states, pb, params, tau)?;
    let (mixed, traffic) = dif_diffuse(states, &grads, pb.weights, eta, params.t_con_gd)?;
    let t_qr = project_all(states, mixed)?;
    let comm_s = params.t_con_gd as f64 * agreement_round_time(pb);
    report(states, pb, tau, max_err, traffic, comm_s, t_local + t_qr)
}

pub fn altgdmin_central_step(
    states: &mut [NodeState],
    pb: &Problem<'_>,
    params: &OptimizerParams,
    eta: f64,
    tau: usize,
) -> Result<StepReport> {
    let (grads, max_err, t_local) = local_phase(states, pb, params, tau)?;
    let clock = Instant::now();
    let mut total = Matrix::zeros(pb.dims.d, pb.dims.r);
    for g in &grads {
        total += g;
    }
    let (q, r) = qr_positive(&(states[0].u.matrix() - total * eta))?;
    let t_server = clock.elapsed().as_secs_f64();
    for s in states.iter_mut() {
        s.u = q.clone();
        s.r_factor = r.clone();
    }
    let l = states.len() as u64;
    let traffic = Traffic {
        rounds: 1,
        messages: 2 * l,
    };
    let comm_s = comm_time_centralized(pb.comm, pb.dims.d, pb.dims.r, pb.dims.l_nodes);
    report(states, pb, tau, max_err, traffic, comm_s, t_local + t_server)
}

pub fn dec_altgdmin_step(
    states: &mut [NodeState],
    pb: &Problem<'_>,
    params: &OptimizerParams,
    eta: f64,
    tau: usize,
) -> Result<StepReport> {
    let (grads, max_err, t_local) = local_phase(states, pb, params, tau)?;
    let (mixed, traffic) = agree(&grads, pb.weights, params.t_con_gd)?;
    let scale = eta * states.len() as f64;
    let updated: Vec<Matrix> = states
        .iter()
        .zip(&mixed)
        .map(|(s, g)| s.u.matrix() - g * scale)
        .collect();
    let t_qr = project_all(states, updated)?;
    let comm_s = params.t_con_gd as f64 * agreement_round_time(pb);
    report(states, pb, tau, max_err, traffic, comm_s, t_local + t_qr)
}

pub fn dgd_variant_step(
    states: &mut [NodeState],
    pb: &Problem<'_>,
    params: &OptimizerParams,
    eta: f64,
    tau: usize,
) -> Result<StepReport> {
    if let Some(g) = pb.topo.degrees.iter().position(|&d| d == 0) {
        return Err(Error::config("topology", format!("node {} has no neighbors", g + 1)));
    }
    let (grads, max_err, t_local) = local_phase(states, pb, params, tau)?;
    let mut slowest = 0.0f64;
    let updated: Vec<Matrix> = (0..states.len())
        .map(|g| {
            let clock = Instant::now();
            let mut avg = Matrix::zeros(pb.dims.d, pb.dims.r);
            let mut count = 0usize;
            if params.dgd_include_self {
                avg += states[g].u.matrix();
                count += 1;
            }
            for &j in &pb.topo.adjacency[g] {
                avg += states[j].u.matrix();
                count += 1;
            }
            let out = avg / count as f64 - &grads[g] * eta;
            slowest = slowest.max(clock.elapsed().as_secs_f64());
            out
        })
        .collect();
    let t_qr = project_all(states, updated)?;
    let traffic = Traffic {
        rounds: 1,
        messages: 2 * pb.topo.edges.len() as u64,
    };
    let comm_s = agreement_round_time(pb);
    report(states, pb, tau, max_err, traffic, comm_s, t_local + slowest + t_qr)
}

pub fn step(
    states: &mut [NodeState],
    pb: &Problem<'_>,
    params: &OptimizerParams,
    eta: f64,
    tau: usize,
) -> Result<StepReport> {
    match params.algorithm {
        Algorithm::DifAltgdmin => dif_altgdmin_step(states, pb, params, eta, tau),
        Algorithm::AltgdminCentral => altgdmin_central_step(states, pb, params, eta, tau),
        Algorithm::DecAltgdmin => dec_altgdmin_step(states, pb, params, eta, tau),
        Algorithm::DgdVariant => dgd_variant_step(states, pb, params, eta, tau),
    }
}

/// Initial node states from an initialization result (`b` is filled by the
/// first min step).
pub fn initial_states(init: &InitResult, ds: &TaskDataset) -> Vec<NodeState> {
    init.u0
        .iter()
        .zip(&ds.partition)
        .map(|(u, tasks)| NodeState::new(tasks.clone(), u.clone(), Matrix::zeros(u.rank(), tasks.len())))
        .collect()
}

fn init_report(
    init: &InitResult,
    states: &mut [NodeState],
    pb: &Problem<'_>,
    algorithm: Algorithm,
) -> Result<InitReport> {
    let (d, r) = (pb.dims.d, pb.dims.r);
    let comm_s = if algorithm.is_centralized() {
        let l = pb.dims.l_nodes;
        init.alpha_traffic.rounds as f64 * comm_time_centralized(pb.comm, 1, 1, l)
            + init.agree_traffic.rounds as f64 * comm_time_centralized(pb.comm, d, r, l)
    } else {
        let deg = pb.topo.max_degree();
        init.alpha_traffic.rounds as f64 * comm_time_decentralized(pb.comm, 1, 1, deg)
            + (init.agree_traffic.rounds + init.broadcast_traffic.rounds) as f64
                * comm_time_decentralized(pb.comm, d, r, deg)
    };
    let u_star = pb.gt.u_star.matrix();
    let sd = states
        .iter()
        .map(|s| subspace_distance_raw(u_star, s.u.matrix()))
        .collect::<Result<Vec<_>>>()?;
    for s in states.iter_mut() {
        s.b = min_step_b(pb.ds, &s.tasks, &s.u, SplitLabel::Iteration(1))?;
    }
    let max_task_err = task_errors(states, pb.gt).into_iter().fold(0.0, f64::max);
    Ok(InitReport {
        alpha_rounds: init.alpha_traffic.rounds,
        agree_rounds: init.agree_traffic.rounds,
        broadcast_rounds: init.broadcast_traffic.rounds,
        messages: init.alpha_traffic.messages + init.agree_traffic.messages + init.broadcast_traffic.messages,
        comm_s,
        compute_s: init.compute_s,
        sd,
        max_task_err,
    })
}

/// Runs `t_gd` iterations of the selected algorithm from `init`. A failed
/// iteration ends the run early; the returned trace records why.
pub fn run(pb: &Problem<'_>, init: &InitResult, params: &OptimizerParams) -> Result<RunTrace> {
    params.validate()?;
    if params.sample_split && pb.ds.splits.as_ref().map(|s| s.t_gd) != Some(params.t_gd) {
        return Err(Error::config(
            "sample_split",
            format!("dataset is not split for t_gd = {}", params.t_gd),
        ));
    }
    let eta = resolve_step_size(params, init, pb.ds, pb.gt)?;
    let mut states = initial_states(init, pb.ds);
    let init_rep = init_report(init, &mut states, pb, params.algorithm)?;

    let mut totals = Totals {
        alpha_rounds: init_rep.alpha_rounds,
        init_agree_rounds: init_rep.agree_rounds,
        broadcast_rounds: init_rep.broadcast_rounds,
        gd_rounds: 0,
        messages: init_rep.messages,
        comm_s: init_rep.comm_s,
        compute_s: init_rep.compute_s,
    };
    let mut steps = Vec::with_capacity(params.t_gd);
    let mut aborted = None;
    for tau in 1..=params.t_gd {
        match step(&mut states, pb, params, eta, tau) {
            Ok(rep) => {
                totals.gd_rounds += rep.rounds;
                totals.messages += rep.messages;
                totals.comm_s += rep.comm_s;
                totals.compute_s += rep.compute_s;
                steps.push(rep);
            }
            Err(e) => {
                aborted = Some(format!("iteration {tau}: {e}"));
                break;
            }
        }
    }

    let final_label = SplitLabel::Iteration(params.t_gd.max(1));
    let mut final_task_errors = Vec::new();
    if aborted.is_none() {
        let refit: Result<()> = states.iter_mut().try_for_each(|s| {
            s.b = min_step_b(pb.ds, &s.tasks, &s.u, final_label)?;
            Ok(())
        });
        match refit {
            Ok(()) => final_task_errors = task_errors(&states, pb.gt),
            Err(e) => aborted = Some(format!("final refit: {e}")),
        }
    }

    Ok(RunTrace {
        algorithm: params.algorithm,
        eta,
        init: init_rep,
        steps,
        totals,
        final_states: states,
        final_task_errors,
        aborted,
    })
}
