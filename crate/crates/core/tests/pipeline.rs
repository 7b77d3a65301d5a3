use std::fs;

use discolab::pipeline::{
    resume_pipeline, run_pipeline, Exemplar, PipelineConfig, RunManifest, Stage, EQUATION_FILE, METRICS_FILE,
};

#[test]
fn benchmark_run_is_persisted_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::preset(Exemplar::MagneticMoment);
    cfg.out_dir = tmp.path().to_path_buf();
    cfg.seed = 4;
    let m = run_pipeline(&cfg).unwrap();
    let dir = m.run_dir.clone();
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("magnetic_moment-"));
    assert_eq!(fs::read_to_string(dir.join(EQUATION_FILE)).unwrap().trim(), "mu = q*v*r");
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(METRICS_FILE)).unwrap()).unwrap();
    assert!(metrics["max_abs_err"].as_f64().unwrap() < 1e-6);

    let loaded = RunManifest::load(&dir).unwrap();
    assert_eq!(loaded.stages.len(), 1);
    assert_eq!(loaded.stages[0].stage, Stage::Eql);
    let before = fs::metadata(dir.join(EQUATION_FILE)).unwrap().modified().unwrap();
    let again = resume_pipeline(&dir, &cfg).unwrap();
    assert_eq!(again.stages, loaded.stages);
    assert_eq!(fs::metadata(dir.join(EQUATION_FILE)).unwrap().modified().unwrap(), before);
}

#[test]
fn config_file_overrides_only_what_it_names() {
    let text = "exemplar = \"surrogate\"\nseed = 9\n[al]\nbudget = 400\n";
    let cfg = PipelineConfig::from_toml_str(text).unwrap();
    let preset = PipelineConfig::preset(Exemplar::Surrogate);
    assert_eq!(cfg.al.budget, 400);
    assert_eq!(cfg.al.n_init, preset.al.n_init);
    assert_eq!(cfg.eql, preset.eql);
    assert_eq!(PipelineConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap(), cfg);
}
