use std::fs;

use mtrl_core::harness::{run_experiment, run_sweep, setup_trial, ExperimentConfig, SweepSpec};
use mtrl_core::optimizer::Algorithm;
use mtrl_core::synth::ProblemDims;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dims: ProblemDims {
            d: 20,
            t_tasks: 30,
            r: 2,
            n: 15,
            l_nodes: 6,
        },
        ..ExperimentConfig::default()
    };
    cfg.graph.p = 0.5;
    cfg.init.t_pm = 8;
    cfg.init.t_con = 4;
    cfg.optimizer.t_gd = 15;
    cfg.optimizer.t_con = 4;
    cfg.run.trials = 4;
    cfg.run.measure_compute = false;
    cfg
}

fn read(dir: &std::path::Path, f: &str) -> String {
    fs::read_to_string(dir.join(f)).unwrap()
}

#[test]
fn zero_iterations_give_one_row_per_algorithm() {
    let mut cfg = small();
    cfg.run.trials = 1;
    cfg.optimizer.t_gd = 0;
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Some(dir.path())).unwrap();
    let trials = read(dir.path(), "trials.csv");
    let rows: Vec<&str> = trials.lines().skip(1).collect();
    assert_eq!(rows.len(), Algorithm::ALL.len());
    for (row, alg) in rows.iter().zip(Algorithm::ALL) {
        assert!(row.starts_with(&format!("{},0,0,", alg.name())), "{row}");
    }
}

#[test]
fn csv_bytes_are_reproducible_across_thread_counts() {
    let cfg = small();
    let run_with = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&cfg, Some(dir.path()))).unwrap();
        (read(dir.path(), "trials.csv"), read(dir.path(), "summary.csv"))
    };
    let a = run_with(1);
    let b = run_with(4);
    let c = run_with(4);
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn floats_use_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(), Some(dir.path())).unwrap();
    let trials = read(dir.path(), "trials.csv");
    let header: Vec<&str> = trials.lines().next().unwrap().split(',').collect();
    let sd_col = header.iter().position(|h| *h == "sd_node1").unwrap();
    for line in trials.lines().skip(1) {
        let field = line.split(',').nth(sd_col).unwrap();
        let mantissa = field.split('e').next().unwrap();
        assert_eq!(mantissa.replace(['.', '-'], "").len(), 17, "{field}");
    }
}

#[test]
fn summary_is_the_mean_of_trials() {
    let out = run_experiment(&small(), None).unwrap();
    for row in &out.summary {
        let vals: Vec<f64> = out
            .traces(row.algorithm)
            .filter_map(|t| t.rows().into_iter().find(|r| r.iter == row.iter))
            .map(|r| r.sd_node1)
            .collect();
        assert_eq!(vals.len(), row.n_trials);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let got = row.mean("sd_node1").unwrap();
        assert!(
            (got - mean).abs() <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE),
            "{got} vs {mean}"
        );
    }
}

#[test]
fn adding_an_algorithm_keeps_other_trajectories() {
    let mut one = small();
    one.optimizer.algorithms = vec![Algorithm::DecAltgdmin];
    let mut two = small();
    two.optimizer.algorithms = vec![Algorithm::DifAltgdmin, Algorithm::DecAltgdmin];
    let a = run_experiment(&one, None).unwrap();
    let b = run_experiment(&two, None).unwrap();
    let sa: Vec<Vec<f64>> = a.traces(Algorithm::DecAltgdmin).map(|t| t.sd_node1_series()).collect();
    let sb: Vec<Vec<f64>> = b.traces(Algorithm::DecAltgdmin).map(|t| t.sd_node1_series()).collect();
    assert_eq!(sa, sb);
}

#[test]
fn fixed_graph_is_shared_by_trials() {
    let mut cfg = small();
    cfg.graph.fixed_graph = true;
    let edges: Vec<_> = (0..3).map(|t| setup_trial(&cfg, t).unwrap().topo.edges).collect();
    assert!(edges.windows(2).all(|w| w[0] == w[1]));
    cfg.graph.fixed_graph = false;
    let edges: Vec<_> = (0..3).map(|t| setup_trial(&cfg, t).unwrap().topo.edges).collect();
    assert!(edges.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn single_value_sweep_adds_only_the_key() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Some(&dir.path().join("plain"))).unwrap();
    let spec = SweepSpec {
        base: cfg,
        axis: "p".into(),
        values: vec![0.5],
    };
    run_sweep(&spec, Some(&dir.path().join("sweep"))).unwrap();
    let plain = read(&dir.path().join("plain"), "summary.csv");
    let swept = read(&dir.path().join("sweep"), "sweep_summary.csv");
    let mut plain_lines = plain.lines();
    let mut swept_lines = swept.lines();
    assert_eq!(
        format!("axis,value,{}", plain_lines.next().unwrap()),
        swept_lines.next().unwrap()
    );
    for (p, s) in plain_lines.zip(swept_lines) {
        assert_eq!(format!("p,0.5,{p}"), s);
    }
    assert_eq!(plain, read(&dir.path().join("sweep").join("p=0.5"), "summary.csv"));
}

#[test]
fn sweep_merges_each_value() {
    let spec = SweepSpec {
        base: small(),
        axis: "r".into(),
        values: vec![2.0, 4.0],
    };
    let dir = tempfile::tempdir().unwrap();
    let results = run_sweep(&spec, Some(dir.path())).unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[1].1.config.dims.r, 4);
    let merged = read(dir.path(), "sweep_summary.csv");
    let rows_per_value = Algorithm::ALL.len() * 16;
    assert_eq!(merged.lines().count(), 1 + 2 * rows_per_value);
    assert!(merged
        .lines()
        .skip(1)
        .take(rows_per_value)
        .all(|l| l.starts_with("r,2,")));
    assert!(merged.lines().skip(1 + rows_per_value).all(|l| l.starts_with("r,4,")));

    let empty = SweepSpec {
        values: vec![],
        ..spec.clone()
    };
    assert!(run_sweep(&empty, None).unwrap_err().is_validation());
    let bad_axis = SweepSpec {
        axis: "colour".into(),
        ..spec
    };
    assert!(run_sweep(&bad_axis, None).unwrap_err().is_validation());
}

#[test]
fn round_and_time_columns_reconcile() {
    let out = run_experiment(&small(), None).unwrap();
    for rec in &out.records {
        let t = rec.trace.as_ref().unwrap();
        let rows = t.rows();
        let last = rows.last().unwrap();
        assert_eq!(last.rounds_cum, t.totals.rounds());
        assert!((last.comm_s_cum - t.totals.comm_s).abs() <= 1e-12 * t.totals.comm_s);
        assert!((last.comm_s_cum - last.comm_s_cum_gd - t.init.comm_s).abs() <= 1e-12 * t.totals.comm_s);
        assert!(rows.windows(2).all(|w| w[1].rounds_cum > w[0].rounds_cum));
    }
}

/// Scaled-down analogue of the network-parameter experiment: Dif-AltGDmin's
/// mean curve stays at or below Dec-AltGDmin's for both agreement budgets,
/// and the gap is largest with few rounds.
#[test]
fn fig1_ordering_at_desk_scale() {
    let mut cfg = ExperimentConfig {
        dims: ProblemDims {
            d: 100,
            t_tasks: 200,
            r: 2,
            n: 30,
            l_nodes: 30,
        },
        ..ExperimentConfig::default()
    };
    cfg.graph.p = 0.2;
    cfg.optimizer.t_gd = 200;
    cfg.run.trials = 8;
    cfg.run.measure_compute = false;
    cfg.optimizer.algorithms = vec![Algorithm::DifAltgdmin, Algorithm::DecAltgdmin];
    let spec = SweepSpec {
        base: cfg,
        axis: "t_con".into(),
        values: vec![5.0, 20.0],
    };
    let results = run_sweep(&spec, None).unwrap();
    let mut final_dec = Vec::new();
    for (t_con, out) in &results {
        let curve = |alg| -> Vec<f64> {
            out.summary
                .iter()
                .filter(|r| r.algorithm == alg)
                .map(|r| r.mean("sd_node1").unwrap())
                .collect()
        };
        let dif = curve(Algorithm::DifAltgdmin);
        let dec = curve(Algorithm::DecAltgdmin);
        let worse = dif.iter().zip(&dec).skip(1).filter(|(a, b)| a > b).count();
        assert!(
            worse <= dif.len() / 20,
            "t_con={t_con}: dif above dec at {worse} iterations"
        );
        assert!(
            dif.last() < dec.last(),
            "t_con={t_con}: {:?} vs {:?}",
            dif.last(),
            dec.last()
        );
        final_dec.push(*dec.last().unwrap());
    }
    assert!(final_dec[0] > final_dec[1], "{final_dec:?}");
}
