use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledRow {
    pub z: Vec<f64>,
    pub attrs: Vec<f64>,
    pub y: f64,
}

/// Latent coordinates, attribute values and objective per retained experiment.
/// CSV columns: `z_1..z_d, attr_<name>..., y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledDataset {
    pub latent_dim: usize,
    pub attr_names: Vec<String>,
    pub rows: Vec<DistilledRow>,
}

impl DistilledDataset {
    pub fn new(latent_dim: usize, attr_names: Vec<String>, rows: Vec<DistilledRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.z.len() != latent_dim || r.attrs.len() != attr_names.len() {
                return Err(Error::Shape(format!("row {i}: {} latents / {} attributes", r.z.len(), r.attrs.len())));
            }
        }
        Ok(Self { latent_dim, attr_names, rows })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.latent_dim).map(|i| format!("z_{i}")).collect();
        h.extend(self.attr_names.iter().map(|a| format!("attr_{a}")));
        h.push("y".into());
        h
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column by header name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .header()
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Unknown { kind: "column", name: name.into() })?;
        let (d, a) = (self.latent_dim, self.attr_names.len());
        Ok(self
            .rows
            .iter()
            .map(|r| if k < d { r.z[k] } else if k < d + a { r.attrs[k - d] } else { r.y })
            .collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.header()).map_err(csv_err)?;
        for r in &self.rows {
            let rec: Vec<String> =
                r.z.iter().chain(&r.attrs).chain(std::iter::once(&r.y)).map(|v| format!("{v:e}")).collect();
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let latent_dim = header.iter().take_while(|h| h.starts_with("z_")).count();
        let attr_names: Vec<String> =
            header[latent_dim..].iter().filter_map(|h| h.strip_prefix("attr_").map(str::to_string)).collect();
        if header.len() != latent_dim + attr_names.len() + 1 || header.last().map(String::as_str) != Some("y") {
            return Err(Error::Parse(format!("unexpected distilled header {header:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {i}: {e}"))))
                .collect::<Result<_>>()?;
            let a = attr_names.len();
            rows.push(DistilledRow {
                z: vals[..latent_dim].to_vec(),
                attrs: vals[latent_dim..latent_dim + a].to_vec(),
                y: vals[latent_dim + a],
            });
        }
        Self::new(latent_dim, attr_names, rows)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}
