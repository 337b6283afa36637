//! Simulated peer-to-peer substrate: random topologies, Metropolis weights,
//! the synchronous agreement protocol and flooding broadcast from node 1.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{symmetric_eigenvalues, Matrix};
use crate::rng::{stream, Stream};

/// Undirected, connected communication graph. Nodes are `0..l_nodes`; node
/// `0` plays the role of "node 1" in the protocol descriptions.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub l_nodes: usize,
    /// Each edge once, as `(g, j)` with `g < j`, in lexicographic order.
    pub edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists.
    pub adjacency: Vec<Vec<usize>>,
    pub degrees: Vec<usize>,
    /// BFS hop distance from node 0.
    pub depth: Vec<usize>,
    pub ecc_node1: usize,
    pub p: f64,
    /// Rejected samples before a connected graph was drawn.
    pub retries: usize,
}

impl Topology {
    pub fn from_edges(l_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if l_nodes == 0 {
            return Err(Error::config("l_nodes", "must be positive"));
        }
        let mut adjacency = vec![Vec::new(); l_nodes];
        for &(a, b) in edges {
            if a == b || a >= l_nodes || b >= l_nodes {
                return Err(Error::config("edges", format!("invalid edge ({a}, {b})")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let depth = bfs_depths(&adjacency).ok_or(Error::DisconnectedAfterRetries(0))?;
        Ok(Self::assemble(adjacency, depth, f64::NAN, 0))
    }

    fn assemble(adjacency: Vec<Vec<usize>>, depth: Vec<usize>, p: f64, retries: usize) -> Self {
        let edges = adjacency
            .iter()
            .enumerate()
            .flat_map(|(g, nb)| nb.iter().filter(move |&&j| j > g).map(move |&j| (g, j)))
            .collect();
        Topology {
            l_nodes: adjacency.len(),
            edges,
            degrees: adjacency.iter().map(Vec::len).collect(),
            ecc_node1: depth.iter().copied().max().unwrap_or(0),
            depth,
            adjacency,
            p,
            retries,
        }
    }

    pub fn complete(l_nodes: usize) -> Self {
        let edges: Vec<_> = (0..l_nodes)
            .flat_map(|g| (g + 1..l_nodes).map(move |j| (g, j)))
            .collect();
        let mut t = Self::from_edges(l_nodes, &edges).expect("complete graph is connected");
        t.p = 1.0;
        t
    }

    pub fn path(l_nodes: usize) -> Self {
        let edges: Vec<_> = (1..l_nodes).map(|g| (g - 1, g)).collect();
        Self::from_edges(l_nodes, &edges).expect("path is connected")
    }

    /// Star centered at node 0.
    pub fn star(l_nodes: usize) -> Self {
        let edges: Vec<_> = (1..l_nodes).map(|g| (0, g)).collect();
        Self::from_edges(l_nodes, &edges).expect("star is connected")
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    /// One `g j` pair per line, 1-indexed.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(g, j) in &self.edges {
            let _ = writeln!(out, "{} {}", g + 1, j + 1);
        }
        out
    }

    pub fn from_edge_list(l_nodes: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            match parsed.as_slice() {
                &[g, j] if g >= 1 && j >= 1 => edges.push((g - 1, j - 1)),
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: expected two 1-indexed nodes",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edges(l_nodes, &edges)
    }
}

fn bfs_depths(adjacency: &[Vec<usize>]) -> Option<Vec<usize>> {
    let mut depth = vec![usize::MAX; adjacency.len()];
    let mut queue = VecDeque::from([0usize]);
    depth[0] = 0;
    while let Some(g) = queue.pop_front() {
        for &j in &adjacency[g] {
            if depth[j] == usize::MAX {
                depth[j] = depth[g] + 1;
                queue.push_back(j);
            }
        }
    }
    depth.iter().all(|&d| d != usize::MAX).then_some(depth)
}

/// G(L, p) conditioned on connectivity by rejection sampling.
pub fn erdos_renyi(l_nodes: usize, p: f64, seed: u64, max_retries: usize) -> Result<Topology> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::config("p", format!("{p} not in (0, 1]")));
    }
    if l_nodes < 2 {
        return Err(Error::config("l_nodes", "random graphs need at least 2 nodes"));
    }
    let mut rng = stream(seed, Stream::Graph);
    for attempt in 0..=max_retries {
        let mut adjacency = vec![Vec::new(); l_nodes];
        for g in 0..l_nodes {
            for j in g + 1..l_nodes {
                if rng.random::<f64>() < p {
                    adjacency[g].push(j);
                    adjacency[j].push(g);
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        if let Some(depth) = bfs_depths(&adjacency) {
            return Ok(Topology::assemble(adjacency, depth, p, attempt));
        }
    }
    Err(Error::DisconnectedAfterRetries(max_retries))
}

/// Symmetric doubly stochastic mixing matrix and its connectivity.
#[derive(Clone, Debug, PartialEq)]
pub struct AgreementWeights {
    pub w: Matrix,
    /// `max(|lambda_2|, |lambda_L|)`.
    pub gamma: f64,
    /// Nonzero entries of each row (self included), ascending by column.
    rows: Vec<Vec<(usize, f64)>>,
    n_edges: usize,
}

impl AgreementWeights {
    /// Exact averaging `J / L` with no topology attached (message count 0).
    pub fn exact_average(l_nodes: usize) -> Self {
        let v = 1.0 / l_nodes as f64;
        AgreementWeights {
            w: Matrix::from_element(l_nodes, l_nodes, v),
            gamma: 0.0,
            rows: (0..l_nodes).map(|_| (0..l_nodes).map(|j| (j, v)).collect()).collect(),
            n_edges: 0,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.len()
    }
}

/// Metropolis-Hastings weights `W_gj = 1 / (1 + max(deg_g, deg_j))`.
pub fn metropolis_weights(topo: &Topology) -> Result<AgreementWeights> {
    let l = topo.l_nodes;
    let mut w = Matrix::zeros(l, l);
    for &(g, j) in &topo.edges {
        let v = 1.0 / (1 + topo.degrees[g].max(topo.degrees[j])) as f64;
        w[(g, j)] = v;
        w[(j, g)] = v;
    }
    for g in 0..l {
        let off: f64 = topo.adjacency[g].iter().map(|&j| w[(g, j)]).sum();
        w[(g, g)] = 1.0 - off;
    }
    let ev = symmetric_eigenvalues(&w)?;
    let gamma = if l < 2 { 0.0 } else { ev[1].abs().max(ev[l - 1].abs()) };
    let rows = (0..l)
        .map(|g| {
            let mut row: Vec<(usize, f64)> = topo.adjacency[g].iter().map(|&j| (j, w[(g, j)])).collect();
            row.push((g, w[(g, g)]));
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    Ok(AgreementWeights {
        w,
        gamma,
        rows,
        n_edges: topo.edges.len(),
    })
}

/// Communication consumed by a protocol invocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Traffic {
    pub rounds: u64,
    /// Point-to-point matrix messages.
    pub messages: u64,
}

impl std::ops::AddAssign for Traffic {
    fn add_assign(&mut self, rhs: Self) {
        self.rounds += rhs.rounds;
        self.messages += rhs.messages;
    }
}

fn check_same_shape(inputs: &[Matrix]) -> Result<()> {
    if let Some(first) = inputs.first() {
        if let Some(bad) = inputs.iter().find(|m| m.shape() != first.shape()) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", first.nrows(), first.ncols()),
                got: format!("{}x{}", bad.nrows(), bad.ncols()),
            });
        }
    }
    Ok(())
}

/// Runs `rounds` synchronous averaging rounds `Z <- W Z` over the node axis.
pub fn agree(inputs: &[Matrix], weights: &AgreementWeights, rounds: usize) -> Result<(Vec<Matrix>, Traffic)> {
    if inputs.len() != weights.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} node values", weights.n_nodes()),
            got: format!("{}", inputs.len()),
        });
    }
    check_same_shape(inputs)?;
    let mut current = inputs.to_vec();
    for _ in 0..rounds {
        current = weights
            .rows
            .iter()
            .map(|row| {
                let mut acc = Matrix::zeros(current[0].nrows(), current[0].ncols());
                for &(j, wgj) in row {
                    acc.zip_apply(&current[j], |a, b| *a += wgj * b);
                }
                acc
            })
            .collect();
    }
    let traffic = Traffic {
        rounds: rounds as u64,
        messages: 2 * weights.n_edges as u64 * rounds as u64,
    };
    Ok((current, traffic))
}

/// Floods node 0's matrix to every node in `ecc_node1` rounds.
pub fn broadcast_from_node1(inputs: &[Matrix], topo: &Topology) -> (Vec<Matrix>, Traffic) {
    let source = inputs[0].clone();
    let mut messages = 0u64;
    for level in 0..topo.ecc_node1 {
        messages += (0..topo.l_nodes)
            .filter(|&g| topo.depth[g] == level)
            .map(|g| topo.degrees[g] as u64)
            .sum::<u64>();
    }
    (
        vec![source; inputs.len()],
        Traffic {
            rounds: topo.ecc_node1 as u64,
            messages,
        },
    )
}

/// Node average of a set of equally shaped matrices.
pub fn node_mean(values: &[Matrix]) -> Matrix {
    let mut acc = Matrix::zeros(values[0].nrows(), values[0].ncols());
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

/// `|Z - 1 mean|_F` with the node values stacked.
pub fn deviation_from_mean(values: &[Matrix]) -> f64 {
    let mean = node_mean(values);
    values.iter().map(|v| (v - &mean).norm_squared()).sum::<f64>().sqrt()
}

/// Smallest round count satisfying the agreement accuracy bound
/// `T >= log(L / eps) / log(1 / gamma)`, and never less than one round.
pub fn rounds_for_accuracy(l_nodes: usize, gamma: f64, eps: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let t = ((l_nodes as f64 / eps).ln() / (1.0 / gamma).ln()).ceil();
    (t as usize).max(1)
}
