//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtrl_core::harness::{init_params, run_experiment, setup_trial, ExperimentConfig, ExperimentOutput};
use mtrl_core::metrics::{comm_time_decentralized, task_errors, CommModel};
use mtrl_core::network::{agree, erdos_renyi, metropolis_weights, node_mean, rounds_for_accuracy, Topology};
use mtrl_core::numerics::{qr_positive, OrthonormalBasis};
use mtrl_core::optimizer::{
    dif_altgdmin_step, dif_diffuse, initial_states, local_gradient, min_step_b, resolve_step_size, Algorithm,
    OptimizerParams, Problem,
};
use mtrl_core::rng::gaussian_matrix;
use mtrl_core::spectral_init::{run_init, InitParams};
use mtrl_core::synth::{generate_ground_truth, generate_tasks, ProblemDims, SpectrumSpec, SplitLabel};

type Matrix = DMatrix<f64>;

/// SD values below this are at the double-precision floor, where successive
/// iterates only differ by rounding noise.
const SD_FLOOR: f64 = 1e-13;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn desk_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dims: ProblemDims {
            d: 100,
            t_tasks: 200,
            r: 2,
            n: 30,
            l_nodes: 10,
        },
        ..ExperimentConfig::default()
    };
    cfg.graph.p = 0.5;
    cfg.init.t_pm = 30;
    cfg.init.t_con = 10;
    cfg.optimizer.t_con = 10;
    cfg.optimizer.t_gd = 300;
    cfg.run.trials = 20;
    cfg.run.measure_compute = false;
    cfg
}

fn mean_final_sd(out: &ExperimentOutput, alg: Algorithm) -> (f64, usize) {
    let finals: Vec<f64> = out.traces(alg).map(|t| t.final_sd_node1()).collect();
    let aborted = out
        .records
        .iter()
        .filter(|r| r.algorithm == alg && r.abort.is_some())
        .count();
    (finals.iter().sum::<f64>() / finals.len().max(1) as f64, aborted)
}

fn monotone_after(series: &[f64], start: usize) -> bool {
    series.windows(2).skip(start).all(|w| w[1] <= w[0] || w[1] <= SD_FLOOR)
}

fn criterion_1(out: &ExperimentOutput) -> Outcome {
    let (mean, aborted) = mean_final_sd(out, Algorithm::DifAltgdmin);
    let traces: Vec<_> = out.traces(Algorithm::DifAltgdmin).collect();
    let monotone = traces
        .iter()
        .filter(|t| monotone_after(&t.sd_node1_series(), 3))
        .count();
    let frac = monotone as f64 / traces.len().max(1) as f64;
    outcome(
        mean <= 1e-8 && frac >= 0.9 && aborted == 0,
        format!(
            "mean final SD {mean:.3e} (<= 1e-8), monotone after iter 3 in {monotone}/{} trials (>= 90%), {aborted} aborts",
            traces.len()
        ),
    )
}

fn criterion_2(out: &ExperimentOutput) -> Outcome {
    let (dif, a1) = mean_final_sd(out, Algorithm::DifAltgdmin);
    let (central, a2) = mean_final_sd(out, Algorithm::AltgdminCentral);
    outcome(
        dif <= 1e-8 && central <= 1e-8 && a1 + a2 == 0,
        format!("dif_altgdmin {dif:.3e}, altgdmin_central {central:.3e} (both <= 1e-8)"),
    )
}

fn criterion_3() -> Outcome {
    let mut cfg = desk_config();
    cfg.dims.l_nodes = 30;
    cfg.graph.p = 0.1;
    cfg.init.t_con = 5;
    cfg.optimizer.t_con = 5;
    cfg.optimizer.algorithms = vec![Algorithm::DifAltgdmin, Algorithm::DecAltgdmin, Algorithm::DgdVariant];
    let out = match run_experiment(&cfg, None) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("experiment failed: {e}")),
    };
    let (dif, _) = mean_final_sd(&out, Algorithm::DifAltgdmin);
    let (dec, _) = mean_final_sd(&out, Algorithm::DecAltgdmin);
    let (dgd, _) = mean_final_sd(&out, Algorithm::DgdVariant);
    let aborts = out.records.iter().filter(|r| r.abort.is_some()).count();
    outcome(
        dec >= 10.0 * dif && dgd >= 0.1,
        format!(
            "dif {dif:.3e}, dec {dec:.3e} (ratio {:.3e} >= 10), dgd {dgd:.3e} (>= 0.1), {aborts} aborts",
            dec / dif
        ),
    )
}

fn max_node_deviation(z: &[Matrix]) -> f64 {
    let mean = node_mean(z);
    z.iter().map(|v| (v - &mean).norm()).fold(0.0, f64::max)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 1e-3;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_final = 0.0f64;
    for k in 0..50 {
        let l = rng.random_range(5..=50);
        let p = rng.random_range(0.2..=1.0);
        let topo = match erdos_renyi(l, p, 1000 + k, 1000) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("graph {k}: {e}")),
        };
        let w = metropolis_weights(&topo).unwrap();
        let z0: Vec<Matrix> = (0..l).map(|_| gaussian_matrix(&mut rng, 6, 2)).collect();
        let t_con = rounds_for_accuracy(l, w.gamma, eps);
        let mut z = z0.clone();
        for _ in 0..t_con {
            let before = mtrl_core::network::deviation_from_mean(&z);
            z = agree(&z, &w, 1).unwrap().0;
            let after = mtrl_core::network::deviation_from_mean(&z);
            if before > 1e-300 {
                worst_excess = worst_excess.max(after / before - w.gamma);
            }
        }
        worst_final = worst_final.max(max_node_deviation(&z) / max_node_deviation(&z0));
    }
    outcome(
        worst_excess <= 1e-10 && worst_final <= eps,
        format!(
            "max (contraction - gamma) {worst_excess:.3e} (<= 1e-10), max deviation ratio {worst_final:.3e} (<= 1e-3)"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    for k in 0..20u64 {
        let dims = ProblemDims {
            d: rng.random_range(10..=40),
            t_tasks: rng.random_range(20..=60),
            r: rng.random_range(1..=3),
            n: rng.random_range(10..=25),
            l_nodes: rng.random_range(2..=12),
        };
        let gt = generate_ground_truth(&dims, SpectrumSpec::Gaussian, k).unwrap();
        let ds = generate_tasks(&gt, &dims, k).unwrap();
        let topo = erdos_renyi(dims.l_nodes, rng.random_range(0.3..=1.0), k, 1000).unwrap();
        let w = metropolis_weights(&topo).unwrap();
        let params = InitParams {
            t_pm: rng.random_range(1..=15),
            t_con_init: rng.random_range(1..=10),
            kappa_hint: gt.kappa,
            mu_hint: gt.mu,
            init_seed: k,
        };
        match run_init(&ds, &topo, &w, &params, &dims) {
            Ok(init) => {
                if init
                    .u0
                    .iter()
                    .any(|u| u.matrix().as_slice() != init.u0[0].matrix().as_slice())
                {
                    bad.push(k);
                }
            }
            Err(e) => return outcome(false, format!("config {k}: {e}")),
        }
    }
    outcome(
        bad.is_empty(),
        format!("{} of 20 configs with differing U0 {bad:?}", bad.len()),
    )
}

fn small_problem(
    seed: u64,
) -> (
    ProblemDims,
    mtrl_core::synth::TaskDataset,
    mtrl_core::synth::GroundTruth,
) {
    let dims = ProblemDims {
        d: 6,
        t_tasks: 3,
        r: 2,
        n: 8,
        l_nodes: 1,
    };
    let gt = generate_ground_truth(&dims, SpectrumSpec::Gaussian, seed).unwrap();
    let ds = generate_tasks(&gt, &dims, seed).unwrap();
    (dims, ds, gt)
}

/// `0.5 sum_t |y_t - X_t u b_t|^2` evaluated on an arbitrary (not
/// necessarily orthonormal) `u`.
fn loss(ds: &mtrl_core::synth::TaskDataset, u: &Matrix, b: &Matrix) -> f64 {
    (0..3)
        .map(|t| {
            let (x, y) = ds.sample(t, SplitLabel::Iteration(1));
            0.5 * (x.as_ref() * (u * b.column(t)) - y.as_ref()).norm_squared()
        })
        .sum()
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let (_, ds, _) = small_problem(100 + k);
        let mut rng = ChaCha8Rng::seed_from_u64(600 + k);
        let u = OrthonormalBasis::from_span(&gaussian_matrix(&mut rng, 6, 2)).unwrap();
        let b = gaussian_matrix(&mut rng, 2, 3);
        let grad = local_gradient(&ds, &[0, 1, 2], &u, &b, SplitLabel::Iteration(1));
        let h = 1e-6;
        let mut fd = Matrix::zeros(6, 2);
        for i in 0..6 {
            for j in 0..2 {
                let mut up = u.matrix().clone();
                let mut dn = u.matrix().clone();
                up[(i, j)] += h;
                dn[(i, j)] -= h;
                fd[(i, j)] = (loss(&ds, &up, &b) - loss(&ds, &dn, &b)) / (2.0 * h);
            }
        }
        worst = worst.max((&grad - &fd).norm() / grad.norm());
    }
    outcome(
        worst <= 1e-5,
        format!("max relative gradient error {worst:.3e} (<= 1e-5)"),
    )
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let (_, ds, _) = small_problem(200 + k);
        let mut rng = ChaCha8Rng::seed_from_u64(700 + k);
        let u = OrthonormalBasis::from_span(&gaussian_matrix(&mut rng, 6, 2)).unwrap();
        let b = min_step_b(&ds, &[0, 1, 2], &u, SplitLabel::Iteration(1)).unwrap();
        for t in 0..3 {
            let (x, y) = ds.sample(t, SplitLabel::Iteration(1));
            let pinv = (x.as_ref() * u.matrix()).pseudo_inverse(1e-14).unwrap();
            let reference = pinv * y.as_ref();
            worst = worst.max((b.column(t) - &reference).amax());
        }
    }
    outcome(worst <= 1e-10, format!("max |b - pinv(XU) y| {worst:.3e} (<= 1e-10)"))
}

fn criterion_8() -> Outcome {
    let t = comm_time_decentralized(&CommModel::default(), 300, 4, 10);
    let mut cfg = desk_config();
    cfg.dims = ProblemDims {
        d: 30,
        t_tasks: 60,
        r: 2,
        n: 20,
        l_nodes: 8,
    };
    cfg.init.t_pm = 7;
    cfg.init.t_con = 4;
    cfg.optimizer.t_con = 6;
    cfg.optimizer.t_gd = 25;
    cfg.run.trials = 5;
    cfg.optimizer.algorithms = vec![Algorithm::DifAltgdmin, Algorithm::DecAltgdmin];
    let out = match run_experiment(&cfg, None) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("experiment failed: {e}")),
    };
    let mut mismatches = 0;
    let mut checked = 0;
    for rec in &out.records {
        let Some(tr) = &rec.trace else {
            mismatches += 1;
            continue;
        };
        let expected = (cfg.init.t_con * cfg.init.t_pm + cfg.optimizer.t_con * cfg.optimizer.t_gd) as u64
            + tr.totals.alpha_rounds
            + tr.totals.broadcast_rounds;
        let last = tr.rows().last().unwrap().rounds_cum;
        checked += 1;
        if tr.totals.rounds() != expected
            || last != expected
            || tr.totals.init_agree_rounds != (cfg.init.t_con * cfg.init.t_pm) as u64
        {
            mismatches += 1;
        }
    }
    outcome(
        t == 0.02064 && mismatches == 0,
        format!(
            "comm time {t:?} (== 0.02064), round totals reconciled in {}/{checked} runs",
            checked - mismatches
        ),
    )
}

fn criterion_9(out: &ExperimentOutput) -> Outcome {
    let mut good = 0usize;
    let mut total = 0usize;
    for tr in out.traces(Algorithm::DifAltgdmin) {
        let sd = tr.final_sd_node1();
        for &e in &tr.final_task_errors {
            total += 1;
            if e <= 2.0 * sd {
                good += 1;
            }
        }
    }
    let frac = good as f64 / total.max(1) as f64;
    outcome(
        frac >= 0.95,
        format!(
            "{good}/{total} (trial, task) pairs with error <= 2 SD ({:.1}%, >= 95%)",
            100.0 * frac
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut cfg = desk_config();
    cfg.dims = ProblemDims {
        d: 20,
        t_tasks: 30,
        r: 2,
        n: 15,
        l_nodes: 5,
    };
    cfg.run.trials = 1;
    let setup = setup_trial(&cfg, 0).unwrap();
    let topo = Topology::complete(5);
    let weights = metropolis_weights(&topo).unwrap();
    let params = init_params(&cfg, &setup).unwrap();
    let init = run_init(&setup.ds, &topo, &weights, &params, &cfg.dims).unwrap();
    let opt = OptimizerParams {
        algorithm: Algorithm::DifAltgdmin,
        t_con_gd: 1,
        ..OptimizerParams::default()
    };
    let eta = resolve_step_size(&opt, &init, &setup.ds, &setup.gt).unwrap();
    let pb = Problem {
        ds: &setup.ds,
        topo: &topo,
        weights: &weights,
        gt: &setup.gt,
        dims: &cfg.dims,
        comm: &cfg.comm,
    };
    let mut states = initial_states(&init, &setup.ds);
    let (mut worst_mix, mut worst_proj) = (0.0f64, 0.0f64);
    for tau in 1..=5 {
        let l = states.len() as f64;
        let mut local = Vec::new();
        let mut grads = Vec::new();
        for s in &states {
            let b = min_step_b(&setup.ds, &s.tasks, &s.u, SplitLabel::Iteration(tau)).unwrap();
            let g = local_gradient(&setup.ds, &s.tasks, &s.u, &b, SplitLabel::Iteration(tau + opt.t_gd));
            local.push(s.u.matrix() - &g * (eta * l));
            grads.push(g);
        }
        let expected = node_mean(&local);
        let (mixed, _) = dif_diffuse(&states, &grads, &weights, eta, 1).unwrap();
        for m in &mixed {
            worst_mix = worst_mix.max((m - &expected).amax());
        }
        dif_altgdmin_step(&mut states, &pb, &opt, eta, tau).unwrap();
        let (q, _) = qr_positive(&expected).unwrap();
        for s in &states {
            worst_proj = worst_proj.max((s.u.matrix() - q.matrix()).amax());
        }
    }
    let errs = task_errors(&states, &setup.gt);
    outcome(
        worst_mix <= 1e-12 && worst_proj <= 1e-12,
        format!(
            "max deviation from exact average {worst_mix:.3e}, after projection {worst_proj:.3e} (<= 1e-12); max task err {:.2e}",
            errs.iter().copied().fold(0.0, f64::max)
        ),
    )
}

fn main() -> ExitCode {
    let clock = Instant::now();
    let desk = match run_experiment(
        &{
            let mut c = desk_config();
            c.optimizer.algorithms = vec![Algorithm::DifAltgdmin, Algorithm::AltgdminCentral];
            c
        },
        None,
    ) {
        Ok(o) => Some(o),
        Err(e) => {
            eprintln!("desk experiment failed: {e}");
            None
        }
    };
    let missing = || outcome(false, "desk experiment failed".into());
    let results: Vec<(usize, Outcome)> = vec![
        (1, desk.as_ref().map_or_else(missing, criterion_1)),
        (2, desk.as_ref().map_or_else(missing, criterion_2)),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, desk.as_ref().map_or_else(missing, criterion_9)),
        (10, criterion_10()),
    ];
    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        clock.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
