use discolab::optimizer::{
    al_loop, de_optimize, read_jsonl, sobol_init, write_jsonl, AcqKind, AlConfig, DeConfig, ExperimentRecord, GpModel,
    KernelParams, SearchSpace,
};

#[test]
fn sobol_points_fill_the_box_without_repeats() {
    let pts = sobol_init(64, &[-3.0, 0.0], &[3.0, 1.0], None).unwrap();
    assert_eq!(pts.len(), 64);
    for p in &pts {
        assert!((-3.0..=3.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
    }
    for i in 0..pts.len() {
        for j in 0..i {
            assert_ne!(pts[i], pts[j]);
        }
    }
    // Each half of each axis holds exactly half of a power-of-two prefix.
    assert_eq!(pts.iter().filter(|p| p[0] < 0.0).count(), 32);
    assert_eq!(pts.iter().filter(|p| p[1] < 0.5).count(), 32);
}

#[test]
fn batched_posterior_equals_pointwise() {
    let recs: Vec<ExperimentRecord> =
        (0..9).map(|i| ExperimentRecord { z: vec![i as f64 * 0.4 - 1.6], y: (i as f64 * 0.4).cos() }).collect();
    let gp = GpModel::fit(&recs, KernelParams::new(2.0, 0.7, 1e-4).unwrap(), 0.1).unwrap();
    let zs: Vec<Vec<f64>> = (0..25).map(|i| vec![-2.5 + 0.2 * i as f64]).collect();
    for (z, (m, s)) in zs.iter().zip(gp.posterior_many(&zs)) {
        let (m1, s1) = gp.posterior(z);
        assert!((m - m1).abs() < 1e-10 && (s - s1).abs() < 1e-8);
    }
    // Far from the data the posterior reverts to the prior.
    let (m, s) = gp.posterior(&[40.0]);
    assert!((m - 0.1).abs() < 1e-9 && (s - 2f64.sqrt()).abs() < 1e-9);
}

#[test]
fn al_finds_the_peak_of_a_smooth_function() {
    let cfg = AlConfig { n_init: 6, budget: 25, acquisition: AcqKind::Ei, seed: 3, ..Default::default() };
    let run = al_loop(&mut |z| -(z[0] - 1.2).powi(2) - (z[1] + 0.4).powi(2), &SearchSpace::cube(2, 3.0), &cfg).unwrap();
    let best = run.best.clone().unwrap();
    assert!(best.y > -1e-3, "{best:?}");
    assert_eq!(run.records.len(), 25);
    let bsf = run.best_so_far();
    assert!(bsf.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn de_converges_on_the_sphere() {
    let cfg = DeConfig { pop: 30, budget: 6000, seed: 4, ..Default::default() };
    let run = de_optimize(&mut |z| -z.iter().map(|v| v * v).sum::<f64>(), &[-5.0; 3], &[5.0; 3], &cfg).unwrap();
    assert!(run.best.y > -1e-6, "{}", run.best.y);
    assert_eq!(run.evaluations.len(), 6000);
    assert!(run.evals_to_reach(-1e-3).unwrap() < 6000);
}

#[test]
fn jsonl_log_round_trips() {
    let cfg = AlConfig { n_init: 3, budget: 6, acquisition: AcqKind::ucb(), seed: 1, ..Default::default() };
    let run = al_loop(&mut |z| z[0].sin(), &SearchSpace::cube(1, 2.0), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.jsonl");
    write_jsonl(&p, &run.records).unwrap();
    assert_eq!(read_jsonl(&p).unwrap(), run.records);
}
