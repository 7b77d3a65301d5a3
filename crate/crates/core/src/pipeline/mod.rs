//! End-to-end discovery runs: generate, select, distill and learn, with every
//! stage persisted to a per-run directory so runs can be resumed and audited.

mod config;
mod export;
mod gain;
mod manifest;
mod stages;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use config::{
    AlStageConfig, DaeStageConfig, EqlStageConfig, Exemplar, GainConfig, IsingStageConfig, PipelineConfig, Stage,
    VaeStageConfig,
};
pub use export::{export_plot_data, PlotKind, PLOTS_DIR};
pub use gain::{convex_hull_area, gain_factor, read_gain_csv, GainInputs, GainReport, GainRow};
pub use manifest::{sha256_file, Artifact, RunManifest, StageFailure, StageRecord, MANIFEST_FILE};
pub use stages::{
    benchmark_truth, ising_transform, sinh_term, IsingAlRow, AL_FILE, AL_REPORT_FILE, DAE_FILE, DAE_REPORT_FILE,
    DISTILLED_FILE, EQL_DATA_FILE, EQUATION_FILE, EQUATION_JSON_FILE, GAIN_FILE, ISING_AL_FILE, ISING_DATA_FILE,
    METRICS_FILE, VAE_FILE, VAE_REPORT_FILE,
};

use crate::error::{Error, Result};

/// Process exit status for a failed run: 3 for an invalid configuration,
/// 2 for anything that went wrong while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 3,
        _ => 2,
    }
}

/// Fresh directory `<out_dir>/<exemplar>-<unix seconds>-seed<seed>`, with a
/// numeric suffix if that name is taken.
fn create_run_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)?;
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = format!("{}-{ts}-seed{}", cfg.exemplar, cfg.seed);
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = cfg.out_dir.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Run every configured stage in a new run directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let dir = create_run_dir(config)?;
    log::info!("run directory {}", dir.display());
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    let mut manifest = RunManifest::new(config.clone());
    manifest.run_dir = dir;
    drive(manifest, config)
}

/// Continue the run in `dir`: completed stages are verified and skipped, the
/// rest of `config.stages` is executed. Only the stage list may differ from
/// the recorded configuration.
pub fn resume_pipeline(dir: &Path, config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let manifest = RunManifest::load(dir)?;
    if !manifest.config.same_run(config) {
        return Err(Error::Config("resume config differs from the recorded run beyond its stage list".into()));
    }
    drive(manifest, config)
}

fn drive(mut manifest: RunManifest, config: &PipelineConfig) -> Result<RunManifest> {
    let dir = manifest.run_dir.clone();
    manifest.config = config.clone();
    for &stage in &config.stages {
        if manifest.stage(stage).is_some() {
            log::info!("stage {stage}: already complete");
            continue;
        }
        log::info!("stage {stage}: running");
        let t0 = Instant::now();
        let outcome = stages::execute(stage, config, &dir).and_then(|paths| {
            paths
                .into_iter()
                .map(|path| Ok(Artifact { sha256: sha256_file(&dir.join(&path))?, path }))
                .collect::<Result<Vec<_>>>()
        });
        match outcome {
            Ok(artifacts) => {
                let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
                log::info!("stage {stage}: done in {:.1} s", wall_ms / 1e3);
                manifest.stages.push(StageRecord { stage, artifacts, wall_ms });
                manifest.failure = None;
                manifest.save(&dir)?;
            }
            Err(e) => {
                manifest.failure = Some(StageFailure { stage, error: e.to_string() });
                manifest.save(&dir)?;
                return Err(Error::Stage { stage: stage.name().into(), source: Box::new(e) });
            }
        }
    }
    for kind in PlotKind::ALL {
        if kind.available(&manifest) {
            export_plot_data(&dir, &manifest, kind)?;
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests;
