//! Planted problem generation: the shared low-rank ground truth, Gaussian
//! task data, the task-to-node partition and optional sample splits.

use std::borrow::Cow;
use std::io::{Read, Write};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{qr_positive, Matrix, OrthonormalBasis, Vector};
use crate::rng::{gaussian_matrix, stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDims {
    /// Feature dimension.
    pub d: usize,
    /// Number of tasks.
    pub t_tasks: usize,
    pub r: usize,
    /// Samples per task.
    pub n: usize,
    pub l_nodes: usize,
}

impl ProblemDims {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("t_tasks", self.t_tasks),
            ("r", self.r),
            ("n", self.n),
            ("l_nodes", self.l_nodes),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.r > self.d.min(self.t_tasks) {
            return Err(Error::config(
                "r",
                format!("rank {} exceeds min(d, T) = {}", self.r, self.d.min(self.t_tasks)),
            ));
        }
        if self.l_nodes > self.t_tasks {
            return Err(Error::config(
                "l_nodes",
                format!("{} nodes but only {} tasks", self.l_nodes, self.t_tasks),
            ));
        }
        Ok(())
    }
}

/// How the right factor `B*` is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SpectrumSpec {
    /// `B*` has i.i.d. standard Gaussian entries.
    #[default]
    Gaussian,
    /// `B* = diag(sigma) V^T` with singular values linearly spaced in `[1, kappa]`.
    Spectrum { kappa: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub u_star: OrthonormalBasis,
    /// `r x T`.
    pub b_star: Matrix,
    /// `d x T`, equal to `u_star * b_star`.
    pub theta_star: Matrix,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub kappa: f64,
    /// Incoherence: the smallest `mu >= 1` with
    /// `|b*_t|^2 <= mu^2 (r/T) sigma_max^2` for every task.
    pub mu: f64,
}

impl GroundTruth {
    pub fn theta(&self, t: usize) -> Vector {
        self.theta_star.column(t).into_owned()
    }
}

pub fn generate_ground_truth(dims: &ProblemDims, spectrum: SpectrumSpec, seed: u64) -> Result<GroundTruth> {
    dims.validate()?;
    let (d, t_tasks, r) = (dims.d, dims.t_tasks, dims.r);
    let mut rng = stream(seed, Stream::GroundTruth);
    let u_star = qr_positive(&gaussian_matrix(&mut rng, d, r))?.0;
    let b_star = match spectrum {
        SpectrumSpec::Gaussian => gaussian_matrix(&mut rng, r, t_tasks),
        SpectrumSpec::Spectrum { kappa } => {
            if !(kappa >= 1.0) {
                return Err(Error::InvalidSpectrum(kappa));
            }
            let sigmas: Vec<f64> = if r == 1 {
                vec![1.0]
            } else {
                (0..r)
                    .map(|i| kappa - (kappa - 1.0) * i as f64 / (r - 1) as f64)
                    .collect()
            };
            let v = qr_positive(&gaussian_matrix(&mut rng, t_tasks, r))?.0;
            Matrix::from_diagonal(&DVector::from_vec(sigmas)) * v.matrix().transpose()
        }
    };
    let theta_star = u_star.matrix() * &b_star;

    let sv = b_star.clone().singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    let max_col = b_star.column_iter().map(|c| c.norm_squared()).fold(0.0f64, f64::max);
    let tight = (max_col * t_tasks as f64 / (r as f64 * sigma_max * sigma_max)).sqrt();

    Ok(GroundTruth {
        u_star,
        b_star,
        theta_star,
        sigma_max,
        sigma_min,
        kappa: sigma_max / sigma_min,
        mu: tight.max(1.0),
    })
}

/// Which disjoint sample subset a computation reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitLabel {
    /// `00`: truncation threshold.
    Threshold,
    /// `0`: spectral initialization matrix.
    Spectral,
    /// `1..=2 T_GD`: iteration-specific subsets.
    Iteration(usize),
}

impl SplitLabel {
    fn index(self) -> usize {
        match self {
            SplitLabel::Threshold => 0,
            SplitLabel::Spectral => 1,
            SplitLabel::Iteration(k) => k + 1,
        }
    }
}

/// Per-task partition of the sample rows into `2 T_GD + 2` sets.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSplits {
    pub t_gd: usize,
    /// `sets[t][label]` holds row indices of task `t`.
    pub sets: Vec<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    /// `T` design matrices, each `n x d`.
    pub x: Vec<Matrix>,
    pub y: Vec<Vector>,
    /// Disjoint task index sets, one per node, covering `0..T`.
    pub partition: Vec<Vec<usize>>,
    pub splits: Option<SampleSplits>,
}

impl TaskDataset {
    pub fn n_tasks(&self) -> usize {
        self.x.len()
    }

    pub fn n_samples(&self) -> usize {
        self.x.first().map_or(0, |x| x.nrows())
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, |x| x.ncols())
    }

    pub fn n_nodes(&self) -> usize {
        self.partition.len()
    }

    /// Data of task `t` restricted to the subset `label`; the full data when
    /// splitting is off.
    pub fn sample(&self, t: usize, label: SplitLabel) -> (Cow<'_, Matrix>, Cow<'_, Vector>) {
        match &self.splits {
            None => (Cow::Borrowed(&self.x[t]), Cow::Borrowed(&self.y[t])),
            Some(s) => {
                let rows = &s.sets[t][label.index()];
                (
                    Cow::Owned(self.x[t].select_rows(rows)),
                    Cow::Owned(self.y[t].select_rows(rows)),
                )
            }
        }
    }

    /// Nominal per-subset sample count used in step-size and threshold
    /// formulas.
    pub fn samples_per_split(&self) -> f64 {
        match &self.splits {
            None => self.n_samples() as f64,
            Some(s) => self.n_samples() as f64 / (2 * s.t_gd + 2) as f64,
        }
    }

    /// Writes the dataset as a little-endian binary container:
    /// magic `MTRLDS01`, then `d, T, n, L` as u64, then per task `X` (row
    /// major) and `y` as f64, then per node the task count and task indices
    /// as u64.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.dim(), self.n_tasks(), self.n_samples(), self.n_nodes()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for (x, y) in self.x.iter().zip(&self.y) {
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    w.write_all(&x[(i, j)].to_le_bytes())?;
                }
            }
            for v in y.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for set in &self.partition {
            w.write_all(&(set.len() as u64).to_le_bytes())?;
            for &t in set {
                w.write_all(&(t as u64).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let next_u64 = |r: &mut R| -> Result<usize> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Format("count overflow".into()))
        };
        let d = next_u64(&mut r)?;
        let t_tasks = next_u64(&mut r)?;
        let n = next_u64(&mut r)?;
        let l = next_u64(&mut r)?;
        let next_f64 = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut x = Vec::with_capacity(t_tasks);
        let mut y = Vec::with_capacity(t_tasks);
        for _ in 0..t_tasks {
            let mut vals = Vec::with_capacity(n * d);
            for _ in 0..n * d {
                vals.push(next_f64(&mut r)?);
            }
            x.push(Matrix::from_row_slice(n, d, &vals));
            let mut yv = Vec::with_capacity(n);
            for _ in 0..n {
                yv.push(next_f64(&mut r)?);
            }
            y.push(Vector::from_vec(yv));
        }
        let mut partition = Vec::with_capacity(l);
        for _ in 0..l {
            let count = next_u64(&mut r)?;
            let mut set = Vec::with_capacity(count);
            for _ in 0..count {
                let t = next_u64(&mut r)?;
                if t >= t_tasks {
                    return Err(Error::Format(format!("task index {t} out of range")));
                }
                set.push(t);
            }
            partition.push(set);
        }
        Ok(TaskDataset {
            x,
            y,
            partition,
            splits: None,
        })
    }
}

const MAGIC: &[u8; 8] = b"MTRLDS01";

/// Contiguous blocks of tasks whose sizes differ by at most one.
pub fn balanced_partition(t_tasks: usize, l_nodes: usize) -> Vec<Vec<usize>> {
    let base = t_tasks / l_nodes;
    let extra = t_tasks % l_nodes;
    let mut start = 0;
    (0..l_nodes)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let set = (start..start + len).collect();
            start += len;
            set
        })
        .collect()
}

pub fn generate_tasks(gt: &GroundTruth, dims: &ProblemDims, seed: u64) -> Result<TaskDataset> {
    dims.validate()?;
    if gt.theta_star.shape() != (dims.d, dims.t_tasks) {
        return Err(Error::DimensionMismatch {
            expected: format!("theta* of shape {}x{}", dims.d, dims.t_tasks),
            got: format!("{}x{}", gt.theta_star.nrows(), gt.theta_star.ncols()),
        });
    }
    let mut rng = stream(seed, Stream::TaskData);
    let mut x = Vec::with_capacity(dims.t_tasks);
    let mut y = Vec::with_capacity(dims.t_tasks);
    for t in 0..dims.t_tasks {
        let xt = gaussian_matrix(&mut rng, dims.n, dims.d);
        y.push(&xt * gt.theta_star.column(t));
        x.push(xt);
    }
    Ok(TaskDataset {
        x,
        y,
        partition: balanced_partition(dims.t_tasks, dims.l_nodes),
        splits: None,
    })
}

/// Randomly partitions each task's rows into `2 t_gd + 2` near-equal sets.
pub fn split_samples(ds: &TaskDataset, t_gd: usize, seed: u64) -> Result<TaskDataset> {
    let n = ds.n_samples();
    let k = 2 * t_gd + 2;
    if n < k {
        return Err(Error::InsufficientSamples {
            required: k,
            available: n,
        });
    }
    let mut rng = stream(seed, Stream::Splits);
    let sets = (0..ds.n_tasks())
        .map(|_| {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            let base = n / k;
            let extra = n % k;
            let mut start = 0;
            (0..k)
                .map(|j| {
                    let len = base + usize::from(j < extra);
                    let mut set = rows[start..start + len].to_vec();
                    set.sort_unstable();
                    start += len;
                    set
                })
                .collect()
        })
        .collect();
    Ok(TaskDataset {
        splits: Some(SampleSplits { t_gd, sets }),
        ..ds.clone()
    })
}
