//! Plot-ready CSV exports of a finished run, written under `plots/`.
//!
//! - `al_best_so_far.csv`: `iter,y,best_so_far`, one row per evaluation
//!   (Ising runs prepend a `beta` column and restart `iter` per temperature).
//! - `dae_scatter.csv`: `z_1..z_d,attr_*,y`, one row per distilled experiment.
//! - `eql_overlay.csv`: the equation inputs, `y`, `eq` and `abs_err`.

use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use super::stages::{IsingAlRow, AL_FILE, DISTILLED_FILE, EQL_DATA_FILE, EQUATION_JSON_FILE, ISING_AL_FILE};
use crate::dae::{csv_err, DistilledDataset};
use crate::eql::{Dataset, LearnedEquation};
use crate::error::{Error, Result};
use crate::optimizer::{read_jsonl, AlRecord};

pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    AlBestSoFar,
    DaeScatter,
    EqlOverlay,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::AlBestSoFar, PlotKind::DaeScatter, PlotKind::EqlOverlay];

    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::AlBestSoFar => "al_best_so_far.csv",
            PlotKind::DaeScatter => "dae_scatter.csv",
            PlotKind::EqlOverlay => "eql_overlay.csv",
        }
    }

    /// Manifest artifact the export is computed from.
    fn sources(self) -> &'static [&'static str] {
        match self {
            PlotKind::AlBestSoFar => &[AL_FILE, ISING_AL_FILE],
            PlotKind::DaeScatter => &[DISTILLED_FILE],
            PlotKind::EqlOverlay => &[EQUATION_JSON_FILE],
        }
    }

    /// Whether the run recorded the artifact this export needs.
    pub fn available(self, manifest: &RunManifest) -> bool {
        self.sources().iter().any(|s| manifest.artifact(s).is_some())
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn best_rows(records: &[AlRecord], prefix: &[String], w: &mut csv::Writer<fs::File>) -> Result<()> {
    let mut best = f64::NEG_INFINITY;
    for r in records {
        if let Some(y) = r.y {
            best = best.max(y);
        }
        let mut row = prefix.to_vec();
        row.extend([r.iter.to_string(), r.y.map_or_else(|| "nan".into(), fmt), fmt(best)]);
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(())
}

/// Write one export for the run in `dir`; returns the file path.
pub fn export_plot_data(dir: &Path, manifest: &RunManifest, which: PlotKind) -> Result<PathBuf> {
    let source = which
        .sources()
        .iter()
        .find(|s| manifest.artifact(s).is_some() && dir.join(s).exists())
        .ok_or_else(|| Error::InvalidArgument(format!("missing artifact for {}", which.file_name())))?;
    let out_dir = dir.join(PLOTS_DIR);
    fs::create_dir_all(&out_dir)?;
    let out = out_dir.join(which.file_name());
    let mut w = writer(&out)?;
    match which {
        PlotKind::AlBestSoFar if *source == ISING_AL_FILE => {
            w.write_record(["beta", "iter", "y", "best_so_far"]).map_err(csv_err)?;
            for line in std::io::BufReader::new(fs::File::open(dir.join(source))?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: IsingAlRow = serde_json::from_str(&line)?;
                best_rows(&row.records, &[fmt(row.beta)], &mut w)?;
            }
        }
        PlotKind::AlBestSoFar => {
            w.write_record(["iter", "y", "best_so_far"]).map_err(csv_err)?;
            best_rows(&read_jsonl(&dir.join(source))?, &[], &mut w)?;
        }
        PlotKind::DaeScatter => {
            let d = DistilledDataset::read_csv(&dir.join(source))?;
            w.write_record(d.header()).map_err(csv_err)?;
            for r in &d.rows {
                let row: Vec<String> = r.z.iter().chain(&r.attrs).chain([&r.y]).map(|v| fmt(*v)).collect();
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        PlotKind::EqlOverlay => {
            let eq: LearnedEquation = serde_json::from_str(&fs::read_to_string(dir.join(source))?)?;
            let data_path = dir.join(EQL_DATA_FILE);
            if !data_path.exists() {
                return Err(Error::InvalidArgument(format!("missing artifact {EQL_DATA_FILE}")));
            }
            let data = Dataset::read_csv(&data_path, manifest.config.exemplar.target(), Some(&eq.expr.names))?;
            let mut header = data.names.clone();
            header.extend(["y".into(), "eq".into(), "abs_err".into()]);
            w.write_record(&header).map_err(csv_err)?;
            for (x, y) in data.x.iter().zip(&data.y) {
                let e = eq.expr.eval(x);
                let mut row: Vec<String> = x.iter().map(|v| fmt(*v)).collect();
                row.extend([fmt(*y), fmt(e), fmt((e - y).abs())]);
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(out)
}
