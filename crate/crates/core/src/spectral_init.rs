//! Decentralized truncated spectral initialization.
//!
//! Each node truncates large responses, forms its block of the initial
//! estimate `Theta_0`, and the network runs a power method on the global
//! Gram matrix `Theta_0 Theta_0^T`. Every power step agrees on the product,
//! orthonormalizes at node 1 and floods node 1's basis to all nodes, so all
//! nodes leave with bitwise identical bases.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::network::{agree, broadcast_from_node1, AgreementWeights, Topology, Traffic};
use crate::numerics::{qr_positive, Matrix, OrthonormalBasis, Vector};
use crate::rng::{gaussian_matrix, stream, Stream};
use crate::synth::{ProblemDims, SplitLabel, TaskDataset};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitParams {
    pub t_pm: usize,
    pub t_con_init: usize,
    pub kappa_hint: f64,
    pub mu_hint: f64,
    /// Pre-shared seed of the random starting basis.
    pub init_seed: u64,
}

impl InitParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_pm == 0 {
            return Err(Error::config("t_pm", "must be >= 1"));
        }
        if self.t_con_init == 0 {
            return Err(Error::config("t_con_init", "must be >= 1"));
        }
        if !(self.kappa_hint >= 1.0) {
            return Err(Error::config("kappa", format!("hint {} < 1", self.kappa_hint)));
        }
        if !(self.mu_hint >= 1.0) {
            return Err(Error::config("mu", format!("hint {} < 1", self.mu_hint)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct InitResult {
    pub u0: Vec<OrthonormalBasis>,
    /// Truncation threshold each node ended up with.
    pub alpha: Vec<f64>,
    /// R factor of node 1's last power iteration.
    pub r_final: Matrix,
    pub alpha_traffic: Traffic,
    pub agree_traffic: Traffic,
    pub broadcast_traffic: Traffic,
    /// Sum over phases of the slowest node's local compute time.
    pub compute_s: f64,
}

/// `9 kappa^2 mu^2 (L / (n T)) sum_{t in S_g} sum_i y_ti^2`, with `n` the
/// per-task sample count of the threshold subset.
pub fn local_threshold(ds: &TaskDataset, g: usize, dims: &ProblemDims, params: &InitParams) -> f64 {
    let energy: f64 = ds.partition[g]
        .iter()
        .map(|&t| {
            let (_, y) = ds.sample(t, SplitLabel::Threshold);
            y.norm_squared() / y.len() as f64
        })
        .sum();
    let k2m2 = params.kappa_hint.powi(2) * params.mu_hint.powi(2);
    9.0 * k2m2 * dims.l_nodes as f64 / dims.t_tasks as f64 * energy
}

/// Zeroes every entry with `y_i^2 > alpha`.
pub fn truncate_responses(y: &Vector, alpha: f64) -> Vector {
    y.map(|v| if v * v <= alpha { v } else { 0.0 })
}

/// Node `g`'s columns of `Theta_0`: `(1/n) X_t^T y_trunc,t` for `t in S_g`.
pub fn local_theta0(ds: &TaskDataset, g: usize, alpha: f64) -> Matrix {
    let tasks = &ds.partition[g];
    let mut theta = Matrix::zeros(ds.dim(), tasks.len());
    for (k, &t) in tasks.iter().enumerate() {
        let (x, y) = ds.sample(t, SplitLabel::Spectral);
        let y_trunc = truncate_responses(&y, alpha);
        let col = x.tr_mul(&y_trunc) / y.len() as f64;
        theta.set_column(k, &col);
    }
    theta
}

/// Shared random starting basis (identical at every node).
pub fn starting_basis(d: usize, r: usize, seed: u64) -> Result<OrthonormalBasis> {
    let mut rng = stream(seed, Stream::InitMatrix);
    Ok(qr_positive(&gaussian_matrix(&mut rng, d, r))?.0)
}

enum Aggregation<'a> {
    Network {
        topo: &'a Topology,
        weights: &'a AgreementWeights,
    },
    Exact,
}

pub fn run_init(
    ds: &TaskDataset,
    topo: &Topology,
    weights: &AgreementWeights,
    params: &InitParams,
    dims: &ProblemDims,
) -> Result<InitResult> {
    run(ds, Aggregation::Network { topo, weights }, params, dims)
}

/// Same procedure with exact, server-side summation in place of agreement
/// and broadcast; used by the centralized baseline.
pub fn run_init_centralized(ds: &TaskDataset, params: &InitParams, dims: &ProblemDims) -> Result<InitResult> {
    run(ds, Aggregation::Exact, params, dims)
}

fn run(ds: &TaskDataset, agg: Aggregation<'_>, params: &InitParams, dims: &ProblemDims) -> Result<InitResult> {
    params.validate()?;
    dims.validate()?;
    let l = dims.l_nodes;
    if ds.n_nodes() != l {
        return Err(Error::DimensionMismatch {
            expected: format!("{l} node partitions"),
            got: format!("{}", ds.n_nodes()),
        });
    }
    let mut compute_s = 0.0;
    let mut alpha_traffic = Traffic::default();
    let mut agree_traffic = Traffic::default();
    let mut broadcast_traffic = Traffic::default();

    let (alpha_in, secs) = timed_per_node(l, |g| local_threshold(ds, g, dims, params));
    compute_s += secs;
    let alpha: Vec<f64> = match &agg {
        Aggregation::Network { weights, .. } => {
            let scalars: Vec<Matrix> = alpha_in.iter().map(|&a| Matrix::from_element(1, 1, a)).collect();
            let (out, traffic) = agree(&scalars, weights, params.t_con_init)?;
            alpha_traffic += traffic;
            out.iter().map(|m| m[(0, 0)]).collect()
        }
        Aggregation::Exact => {
            let mean = alpha_in.iter().sum::<f64>() / l as f64;
            alpha_traffic.rounds += 1;
            vec![mean; l]
        }
    };

    let (thetas, secs) = timed_per_node(l, |g| local_theta0(ds, g, alpha[g]));
    compute_s += secs;

    let start = starting_basis(dims.d, dims.r, params.init_seed)?;
    let mut bases: Vec<Matrix> = vec![start.into_matrix(); l];
    let mut r_final = Matrix::zeros(dims.r, dims.r);

    for _ in 0..params.t_pm {
        // Scaled by L so that agreement (an average) estimates the sum over
        // nodes of Theta_g Theta_g^T U_g.
        let (local, secs) = timed_per_node(l, |g| {
            let theta = &thetas[g];
            (theta * theta.tr_mul(&bases[g])) * l as f64
        });
        compute_s += secs;
        let node1_input = match &agg {
            Aggregation::Network { weights, .. } => {
                let (mut out, traffic) = agree(&local, weights, params.t_con_init)?;
                agree_traffic += traffic;
                out.swap_remove(0)
            }
            Aggregation::Exact => {
                let mut sum = Matrix::zeros(dims.d, dims.r);
                for m in &local {
                    sum += m;
                }
                agree_traffic.rounds += 1;
                sum / l as f64
            }
        };
        let clock = Instant::now();
        let (q, r) = qr_positive(&node1_input)?;
        compute_s += clock.elapsed().as_secs_f64();
        r_final = r;
        let mut staged = vec![Matrix::zeros(dims.d, dims.r); l];
        staged[0] = q.into_matrix();
        bases = match &agg {
            Aggregation::Network { topo, .. } => {
                let (out, traffic) = broadcast_from_node1(&staged, topo);
                broadcast_traffic += traffic;
                out
            }
            Aggregation::Exact => vec![staged.swap_remove(0); l],
        };
    }

    Ok(InitResult {
        u0: bases
            .into_iter()
            .map(|m| OrthonormalBasis::try_new(m, 1e-10))
            .collect::<Result<_>>()?,
        alpha,
        r_final,
        alpha_traffic,
        agree_traffic,
        broadcast_traffic,
        compute_s,
    })
}

/// Evaluates `f` for every node, returning the results and the slowest
/// node's wall time.
pub(crate) fn timed_per_node<T>(l: usize, mut f: impl FnMut(usize) -> T) -> (Vec<T>, f64) {
    let mut slowest = 0.0f64;
    let out = (0..l)
        .map(|g| {
            let clock = Instant::now();
            let v = f(g);
            slowest = slowest.max(clock.elapsed().as_secs_f64());
            v
        })
        .collect();
    (out, slowest)
}
