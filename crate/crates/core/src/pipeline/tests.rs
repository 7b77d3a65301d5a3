use std::fs;
use std::path::Path;

use num_rational::Ratio;
use proptest::prelude::*;

use super::*;

fn surrogate_small(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::preset(Exemplar::Surrogate);
    cfg.out_dir = out.to_path_buf();
    cfg.seed = 7;
    cfg.al.n_init = 20;
    cfg.al.budget = 60;
    cfg.eql.epochs = 150;
    cfg.eql.restarts = 1;
    cfg
}

fn only_subdir(dir: &Path) -> std::path::PathBuf {
    let mut subs: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(subs.len(), 1, "{subs:?}");
    subs.pop().unwrap()
}

fn checksums(m: &RunManifest) -> Vec<(String, String)> {
    m.stages.iter().flat_map(|s| &s.artifacts).map(|a| (a.path.clone(), a.sha256.clone())).collect()
}

#[test]
fn gain_rows_from_stated_inputs() {
    let row = |v: [f64; 6]| GainInputs {
        n_human: v[0],
        n_auto: v[1],
        variety_human: v[2],
        variety_auto: v[3],
        value_human: v[4],
        value_auto: v[5],
    };
    let ising = gain_factor(&row([10.0, 10.0, 1.0, 1.0, 1.0, 100.0])).unwrap();
    assert!((ising.gain - 100.0).abs() < 1e-12);
    let projectile = gain_factor(&row([10.0, 500.0, 0.65, 36.0, 1.0, 0.88])).unwrap();
    assert!((projectile.gain - 0.97).abs() < 0.01, "{}", projectile.gain);
    let photonics = gain_factor(&row([1e6, 1000.0, 0.1, 100.0, 1.0, 2.0])).unwrap();
    assert!((photonics.gain / 2e6 - 1.0).abs() < 1e-12);
    assert_eq!(gain_factor(&row([1.0; 6])).unwrap().gain, 1.0);
    assert!(gain_factor(&row([1.0, 0.0, 1.0, 1.0, 1.0, 1.0])).is_err());
    assert!(gain_factor(&row([1.0, 1.0, -1.0, 1.0, 1.0, 1.0])).is_err());
    assert!(gain_factor(&row([1.0, 1.0, 1.0, 1.0, 1.0, f64::NAN])).is_err());
}

#[test]
fn gain_is_exact_over_rationals() {
    let r = |n: i64, d: i64| Ratio::new(n, d);
    let inputs = GainInputs {
        n_human: r(10, 1),
        n_auto: r(500, 1),
        variety_human: r(65, 100),
        variety_auto: r(36, 1),
        value_human: r(1, 1),
        value_auto: r(88, 100),
    };
    // 10 * 36 * 88 / (500 * 65) in lowest terms.
    let g = gain_factor(&inputs).unwrap().gain;
    assert_eq!(g, r(10 * 36 * 88, 500 * 65));
    assert_eq!(g, r(1584, 1625));
    let photonics = GainInputs {
        n_human: r(1_000_000, 1),
        n_auto: r(1000, 1),
        variety_human: r(1, 10),
        variety_auto: r(100, 1),
        value_human: r(1, 1),
        value_auto: r(2, 1),
    };
    assert_eq!(gain_factor(&photonics).unwrap().gain, r(2_000_000, 1));
}

#[test]
fn gain_csv_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gains.csv");
    fs::write(&p, "name,n_human,n_auto,variety_human,variety_auto,value_human,value_auto\nising,10,10,1,1,1,100\n").unwrap();
    let rows = read_gain_csv(&p).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].name, "ising");
    assert_eq!(gain_factor(&rows[0].inputs).unwrap().gain, 100.0);
    fs::write(&p, "name,a\nx,1\n").unwrap();
    assert!(read_gain_csv(&p).is_err());
    fs::write(&p, "name,n_human,n_auto,variety_human,variety_auto,value_human,value_auto\nx,1,1,1,1,1,abc\n").unwrap();
    assert!(read_gain_csv(&p).is_err());
}

#[test]
fn hull_area_examples() {
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.2, 0.9]];
    assert!((convex_hull_area(&square) - 1.0).abs() < 1e-12);
    assert!((convex_hull_area(&[[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]]) - 6.0).abs() < 1e-12);
    assert_eq!(convex_hull_area(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), 0.0);
    assert_eq!(convex_hull_area(&[[0.0, 0.0], [1.0, 1.0]]), 0.0);
    let box6 = [[-3.0, -3.0], [3.0, -3.0], [3.0, 3.0], [-3.0, 3.0]];
    assert!((convex_hull_area(&box6) - 36.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn hull_area_is_order_free_and_bounded(pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)) {
        let p: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let a = convex_hull_area(&p);
        let mut rev = p.clone();
        rev.reverse();
        prop_assert!((a - convex_hull_area(&rev)).abs() <= 1e-9 * a.max(1.0));
        let (x0, x1) = p.iter().fold((f64::MAX, f64::MIN), |b, q| (b.0.min(q[0]), b.1.max(q[0])));
        let (y0, y1) = p.iter().fold((f64::MAX, f64::MIN), |b, q| (b.0.min(q[1]), b.1.max(q[1])));
        prop_assert!(a >= 0.0 && a <= (x1 - x0) * (y1 - y0) + 1e-9);
        // Adding an interior point (the centroid) never changes the area.
        let c = [p.iter().map(|q| q[0]).sum::<f64>() / p.len() as f64, p.iter().map(|q| q[1]).sum::<f64>() / p.len() as f64];
        let mut more = p.clone();
        more.push(c);
        prop_assert!((convex_hull_area(&more) - a).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn gain_is_the_product_of_ratios(v in prop::array::uniform6(1e-3f64..1e3)) {
        let g = gain_factor(&GainInputs {
            n_human: v[0], n_auto: v[1], variety_human: v[2], variety_auto: v[3], value_human: v[4], value_auto: v[5],
        }).unwrap().gain;
        let want = (v[0] * v[3] * v[5]) / (v[1] * v[2] * v[4]);
        prop_assert!(g > 0.0 && (g / want - 1.0).abs() < 1e-12);
    }
}

#[test]
fn presets_are_valid_and_round_trip_through_toml() {
    for e in Exemplar::ALL {
        let cfg = PipelineConfig::preset(e);
        cfg.validate().unwrap();
        assert_eq!(cfg.stages, e.chain());
        let back = PipelineConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn toml_overlays_the_preset() {
    let cfg = PipelineConfig::from_toml_str(
        "exemplar = \"surrogate\"\nseed = 5\nout_dir = \"x\"\n[al]\nbudget = 300\nacquisition = \"ucb\"\n",
    )
    .unwrap();
    assert_eq!((cfg.seed, cfg.al.budget, cfg.al.n_init), (5, 300, 200));
    assert_eq!(cfg.al.acq_kind().unwrap(), crate::optimizer::AcqKind::Ucb { lambda: 0.5 });
    assert_eq!(cfg.stage_seed(Stage::Eql), 8);
}

#[test]
fn invalid_configs_map_to_exit_code_3() {
    let cases = [
        "seed = 1",
        "exemplar = \"galileo\"",
        "exemplar = \"ising\"\nstages = [\"eql\"]",
        "exemplar = \"projectile\"\nstages = [\"vae\", \"dae\"]",
        "exemplar = \"surrogate\"\nbogus = 1",
        "exemplar = \"surrogate\"\n[al]\nn_init = 500\nbudget = 100",
        "exemplar = \"surrogate\"\n[al]\nacquisition = \"pi\"",
        "exemplar = \"surrogate\"\n[eql]\ndict = \"sq,tanh\"",
        "exemplar = \"surrogate\"\n[gain]\nn_human = 0.0",
        "exemplar = \"projectile\"\n[dae]\nrealistic_fraction = 1.5",
        "exemplar = \"lotka_volterra\"\n[eql]\nsparsity = 1.0",
        "exemplar = [",
    ];
    for c in cases {
        let err = PipelineConfig::from_toml_str(c).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{c}: {err}");
        assert_eq!(exit_code(&err), 3);
    }
    let stage_err = Error::Stage { stage: "eql".into(), source: Box::new(Error::InvalidArgument("x".into())) };
    assert_eq!(exit_code(&stage_err), 2);
}

#[test]
fn gain_fields_required_unless_measured() {
    let mut cfg = PipelineConfig::preset(Exemplar::Surrogate);
    cfg.gain.variety_auto = None;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = PipelineConfig::preset(Exemplar::Projectile);
    cfg.gain.variety_human = None;
    cfg.validate().unwrap();
}

#[test]
fn ising_transform_matches_sinh_on_the_onsager_curve() {
    for beta in [0.45, 0.6, 0.9, 1.2] {
        let m = crate::exemplars::onsager_magnetization(beta);
        let y = ising_transform(m).unwrap();
        // (1 - M^8)^(-1/4) = sinh(2 beta) because M^8 = 1 - sinh(2 beta)^-4.
        assert!((y - (2.0 * beta).sinh()).abs() < 1e-9 * y, "beta {beta}");
    }
    assert!(ising_transform(1.0).is_none());
}

#[test]
fn run_is_reproducible_resumable_and_checksummed() {
    let tmp = tempfile::tempdir().unwrap();
    let a_dir = tmp.path().join("a");
    let mut cfg = surrogate_small(&a_dir);
    let full = run_pipeline(&cfg).unwrap();
    assert_eq!(full.stages.len(), 2);
    assert!(full.failure.is_none());

    // Manifest round trip.
    let loaded = RunManifest::load(&full.run_dir).unwrap();
    assert_eq!(loaded.config, full.config);
    assert_eq!(checksums(&loaded), checksums(&full));

    // A second run from the same seed is bit-identical.
    let b_dir = tmp.path().join("b");
    cfg.out_dir = b_dir.clone();
    cfg.stages = vec![Stage::Al];
    let partial = run_pipeline(&cfg).unwrap();
    assert_eq!(partial.stages.len(), 1);
    let al_before = fs::read(partial.run_dir.join(AL_FILE)).unwrap();

    // Resuming skips the finished AL stage and reproduces the full run.
    cfg.stages = vec![Stage::Al, Stage::Eql];
    let resumed = resume_pipeline(&partial.run_dir, &cfg).unwrap();
    assert_eq!(fs::read(resumed.run_dir.join(AL_FILE)).unwrap(), al_before);
    assert_eq!(resumed.stages[0], partial.stages[0]);
    assert_eq!(checksums(&resumed), checksums(&full));
    assert_eq!(
        fs::read_to_string(resumed.run_dir.join(EQUATION_FILE)).unwrap(),
        fs::read_to_string(full.run_dir.join(EQUATION_FILE)).unwrap()
    );

    // Resume rejects a different run configuration.
    let mut other = cfg.clone();
    other.seed += 1;
    assert!(matches!(resume_pipeline(&resumed.run_dir, &other), Err(Error::Config(_))));

    // Deleting a downstream artifact leaves upstream ones intact.
    fs::remove_file(resumed.run_dir.join(EQUATION_FILE)).unwrap();
    let al = resumed.artifact(AL_FILE).unwrap();
    assert_eq!(sha256_file(&resumed.run_dir.join(AL_FILE)).unwrap(), al.sha256);
    assert!(matches!(RunManifest::load(&resumed.run_dir), Err(Error::Checksum(_))));

    // Tampering is detected on load and on resume.
    let mut bytes = fs::read(full.run_dir.join(AL_FILE)).unwrap();
    bytes[10] ^= 1;
    fs::write(full.run_dir.join(AL_FILE), bytes).unwrap();
    assert!(matches!(RunManifest::load(&full.run_dir), Err(Error::Checksum(p)) if p == AL_FILE));
    assert!(matches!(resume_pipeline(&full.run_dir, &full.config), Err(Error::Checksum(_))));
}

#[test]
fn stage_failure_keeps_earlier_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = surrogate_small(tmp.path());
    // Too few AL records for the EQL baseline.
    cfg.al.n_init = 10;
    cfg.al.budget = 30;
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "eql"), "{err}");
    assert_eq!(exit_code(&err), 2);
    let dir = only_subdir(tmp.path());
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.failure.as_ref().unwrap().stage, Stage::Eql);
    assert_eq!(m.stages.len(), 1);
    m.verify(&dir).unwrap();
    assert_eq!(crate::optimizer::read_jsonl(&dir.join(AL_FILE)).unwrap().len(), 30);
}

#[test]
fn exports_follow_their_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::preset(Exemplar::Projectile);
    cfg.out_dir = tmp.path().to_path_buf();
    cfg.vae.epochs = 3;
    cfg.al.n_init = 10;
    cfg.al.budget = 60;
    cfg.dae.epochs = 3;
    cfg.dae.realistic_fraction = 1.0;
    cfg.eql.epochs = 100;
    cfg.eql.restarts = 1;
    let m = run_pipeline(&cfg).unwrap();
    let dir = &m.run_dir;
    let read = |k: PlotKind| -> Vec<Vec<String>> {
        let text = fs::read_to_string(dir.join(PLOTS_DIR).join(k.file_name())).unwrap();
        text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
    };
    let al = read(PlotKind::AlBestSoFar);
    assert_eq!(al[0], ["iter", "y", "best_so_far"]);
    assert_eq!(al.len() - 1, cfg.al.budget);
    let best: Vec<f64> = al[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] >= w[0]));

    let scatter = read(PlotKind::DaeScatter);
    assert_eq!(scatter[0], ["z_1", "z_2", "attr_u", "y"]);
    assert!(scatter.iter().all(|r| r.len() == cfg.dae.latent_dim + 1 + 1));
    assert_eq!(scatter.len() - 1, 60);

    let overlay = read(PlotKind::EqlOverlay);
    assert_eq!(overlay[0], ["z_1", "y", "eq", "abs_err"]);
    assert!(overlay[1..].iter().all(|r| r[3].parse::<f64>().unwrap().is_finite()));

    for k in PlotKind::ALL {
        assert!(k.available(&m));
    }
    fs::remove_file(dir.join(EQUATION_JSON_FILE)).unwrap();
    assert!(export_plot_data(dir, &m, PlotKind::EqlOverlay).is_err());
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(METRICS_FILE)).unwrap()).unwrap();
    assert!(metrics["c"].as_f64().unwrap().is_finite());
    let gain: GainReport = serde_json::from_str(&fs::read_to_string(dir.join(GAIN_FILE)).unwrap()).unwrap();
    assert_eq!((gain.n_auto, gain.variety_auto), (60.0, 36.0));
}

#[test]
fn sinh_term_reads_coefficients() {
    use crate::eql::{Atom, Func, SymbolicExpr, Term};
    let inner = vec![Term { coef: 1.96, factors: vec![(0, 1)] }, Term { coef: 0.01, factors: vec![] }];
    let e = SymbolicExpr {
        names: vec!["beta".into()],
        atoms: vec![Atom::Var(0), Atom::Func { func: Func::Sinh, inner }],
        terms: vec![
            Term { coef: 1.01, factors: vec![(1, 1)] },
            Term { coef: 0.1, factors: vec![(0, 1)] },
            Term { coef: -0.1, factors: vec![] },
        ],
    };
    assert_eq!(sinh_term(&e), Some((1.01, 1.96, 0.01)));
    assert_eq!(e.n_params(), 5);
}
