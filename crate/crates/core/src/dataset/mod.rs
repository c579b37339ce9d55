//! Battery cycling data model, CSV ingestion and train/test splitting.

mod cell;
mod csvio;
mod curves;
mod manifest;
mod split;

pub use cell::{
    moving_median, CellHistory, CellMeta, Chemistry, CycleRecord, Phase, PhaseTrace, Protocol,
    DEFAULT_SOH_EOL, EOL_MEDIAN_WINDOW,
};
pub use csvio::{ingest_cell, read_phases, write_cell, ColumnSchema, CANONICAL_COLUMNS};
pub use curves::{DischargeCurve, RelaxationCurve, MAX_RELAX_VOLTAGE, MIN_RELAX_VOLTAGE};
pub use manifest::{write_dataset, Manifest, ManifestCell, CUTOFF_C_RATE, MANIFEST_VERSION};
pub use split::{split_dataset, DatasetSplit, GroupKey, SplitCounts, SplitSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("SchemaError: {0}")]
    Schema(String),
    #[error("ValidationError: {0}")]
    Validation(String),
    #[error("EmptyFile: {0}")]
    EmptyFile(String),
    #[error("NeverReached: cell {0} never crossed the end-of-life threshold")]
    NeverReached(String),
    #[error("InsufficientCells: group {group} has {available} cells, {requested} requested")]
    InsufficientCells {
        group: String,
        requested: usize,
        available: usize,
    },
    #[error("io: {0}")]
    Io(String),
}
