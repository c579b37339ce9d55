//! Plain-text (TOML) manifest listing the cells of a dataset.
//!
//! ```toml
//! version = 1
//! soh_eol = 0.8
//!
//! [[cell]]
//! id = "NCA_CY45_01"
//! file = "cells/NCA_CY45_01.csv"
//! chemistry = "NCA"
//! condition = "CY45-0.5/1"
//! nominal_capacity_ah = 3.5
//! sampling_interval_s = 120.0
//! rest_duration_s = 1800.0
//! ```
//!
//! `cutoff_current_a` defaults to 0.05C of the nominal capacity. An optional
//! `[schema]` table renames columns for files not in canonical form.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DEFAULT_SOH_EOL;
use super::{
    ingest_cell, write_cell, CellHistory, CellMeta, Chemistry, ColumnSchema, DatasetError, Protocol,
};

pub const MANIFEST_VERSION: u32 = 1;

/// Fraction of nominal capacity (as a current in A per Ah) ending the CV phase.
pub const CUTOFF_C_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub id: String,
    pub file: PathBuf,
    pub chemistry: Chemistry,
    pub condition: String,
    pub nominal_capacity_ah: f64,
    pub sampling_interval_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rest_duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_current_a: Option<f64>,
}

impl ManifestCell {
    pub fn from_meta(meta: &CellMeta, file: PathBuf) -> Self {
        Self {
            id: meta.cell_id.clone(),
            file,
            chemistry: meta.chemistry,
            condition: meta.condition.clone(),
            nominal_capacity_ah: meta.nominal_capacity_ah,
            sampling_interval_s: meta.protocol.sampling_interval_s,
            rest_duration_s: meta.protocol.rest_duration_s,
            cutoff_current_a: Some(meta.protocol.cutoff_current_a),
        }
    }

    pub fn meta(&self) -> CellMeta {
        CellMeta {
            cell_id: self.id.clone(),
            chemistry: self.chemistry,
            condition: self.condition.clone(),
            nominal_capacity_ah: self.nominal_capacity_ah,
            protocol: Protocol {
                sampling_interval_s: self.sampling_interval_s,
                cutoff_current_a: self
                    .cutoff_current_a
                    .unwrap_or(CUTOFF_C_RATE * self.nominal_capacity_ah),
                rest_duration_s: self.rest_duration_s,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soh_eol: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default_schema")]
    pub schema: ColumnSchema,
    #[serde(rename = "cell", default)]
    pub cells: Vec<ManifestCell>,
}

fn is_default_schema(s: &ColumnSchema) -> bool {
    *s == ColumnSchema::default()
}

impl Manifest {
    pub fn new(cells: Vec<ManifestCell>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            soh_eol: None,
            schema: ColumnSchema::default(),
            cells,
        }
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let manifest: Manifest =
            toml::from_str(text).map_err(|e| DatasetError::Schema(format!("manifest: {e}")))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(DatasetError::Schema(format!(
                "manifest version {} not supported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn soh_eol(&self) -> f64 {
        self.soh_eol.unwrap_or(DEFAULT_SOH_EOL)
    }

    /// Ingests every listed cell, resolving relative file paths against
    /// `base_dir`. Cells are read in parallel; output keeps manifest order.
    pub fn ingest_all(&self, base_dir: &Path) -> Result<Vec<CellHistory>, DatasetError> {
        self.cells
            .par_iter()
            .map(|cell| {
                let path = if cell.file.is_absolute() {
                    cell.file.clone()
                } else {
                    base_dir.join(&cell.file)
                };
                ingest_cell(&path, &self.schema, cell.meta(), self.soh_eol())
            })
            .collect()
    }
}

/// Writes `manifest.toml` and one canonical CSV per cell under `dir/cells`.
/// Every file starts with the `header` comment lines.
pub fn write_dataset(
    dir: &Path,
    cells: &[CellHistory],
    header: &[String],
) -> Result<Manifest, DatasetError> {
    let io = |e: std::io::Error| DatasetError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir.join("cells")).map_err(io)?;
    let mut entries = Vec::with_capacity(cells.len());
    let soh_eol = cells.first().map_or(DEFAULT_SOH_EOL, CellHistory::soh_eol);
    for cell in cells {
        let rel = PathBuf::from("cells").join(format!("{}.csv", cell.cell_id()));
        let file = std::fs::File::create(dir.join(&rel)).map_err(io)?;
        write_cell(file, cell, header)?;
        entries.push(ManifestCell::from_meta(&cell.meta, rel));
    }
    let mut manifest = Manifest::new(entries);
    if soh_eol != DEFAULT_SOH_EOL {
        manifest.soh_eol = Some(soh_eol);
    }
    let mut text: String = header.iter().map(|h| format!("# {h}\n")).collect();
    text.push_str(&manifest.to_toml());
    std::fs::write(dir.join("manifest.toml"), text).map_err(io)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_manifest() {
        let m = Manifest::parse(
            r#"
version = 1
[[cell]]
id = "a"
file = "a.csv"
chemistry = "NCM+NCA"
condition = "CY25-0.5/2"
nominal_capacity_ah = 2.5
sampling_interval_s = 30.0
"#,
        )
        .unwrap();
        let meta = m.cells[0].meta();
        assert_eq!(meta.chemistry, Chemistry::NcmNca);
        assert!((meta.protocol.cutoff_current_a - 0.125).abs() < 1e-15);
        assert_eq!(m.soh_eol(), 0.8);
    }

    #[test]
    fn rejects_unknown_version() {
        assert!(Manifest::parse("version = 9\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let m = Manifest::new(vec![ManifestCell {
            id: "x".into(),
            file: "x.csv".into(),
            chemistry: Chemistry::Nca,
            condition: "CY45-0.5/1".into(),
            nominal_capacity_ah: 3.5,
            sampling_interval_s: 120.0,
            rest_duration_s: Some(1800.0),
            cutoff_current_a: None,
        }]);
        assert_eq!(Manifest::parse(&m.to_toml()).unwrap(), m);
    }
}
