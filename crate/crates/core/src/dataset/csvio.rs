//! Canonical per-cell CSV format.
//!
//! ```text
//! cycle,phase,t_s,voltage_v,current_a,capacity_ah
//! 1,charge,0,3.61,1.75,0
//! 1,rest_post_charge,0,4.1412,0,0
//! ```
//!
//! `t_s` restarts at zero in every phase. Lines starting with `#` are
//! comments. Floats are written in shortest round-trip form, so writing and
//! re-reading a history reproduces it bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellHistory, CellMeta, DatasetError, Phase, PhaseTrace};

pub const CANONICAL_COLUMNS: [&str; 6] = [
    "cycle",
    "phase",
    "t_s",
    "voltage_v",
    "current_a",
    "capacity_ah",
];

/// Maps foreign column headers onto the canonical ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub cycle: String,
    pub phase: String,
    pub t_s: String,
    pub voltage_v: String,
    pub current_a: String,
    pub capacity_ah: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            cycle: "cycle".into(),
            phase: "phase".into(),
            t_s: "t_s".into(),
            voltage_v: "voltage_v".into(),
            current_a: "current_a".into(),
            capacity_ah: "capacity_ah".into(),
        }
    }
}

impl ColumnSchema {
    fn names(&self) -> [&str; 6] {
        [
            &self.cycle,
            &self.phase,
            &self.t_s,
            &self.voltage_v,
            &self.current_a,
            &self.capacity_ah,
        ]
    }

    fn locate(&self, headers: &csv::StringRecord) -> Result<[usize; 6], DatasetError> {
        let mut idx = [0usize; 6];
        for (slot, name) in idx.iter_mut().zip(self.names()) {
            let hits: Vec<usize> = headers
                .iter()
                .enumerate()
                .filter(|(_, h)| h.trim() == name)
                .map(|(i, _)| i)
                .collect();
            *slot = match hits.as_slice() {
                [one] => *one,
                [] => return Err(DatasetError::Schema(format!("missing column '{name}'"))),
                _ => return Err(DatasetError::Schema(format!("duplicated column '{name}'"))),
            };
        }
        Ok(idx)
    }
}

type RawCycles = Vec<(u32, BTreeMap<Phase, PhaseTrace>)>;

/// Parses the canonical (or schema-mapped) CSV into raw per-cycle traces.
pub fn read_phases(reader: impl Read, schema: &ColumnSchema) -> Result<RawCycles, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Schema(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(DatasetError::EmptyFile("no header row".into()));
    }
    let idx = schema.locate(&headers)?;
    let mut cycles: RawCycles = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Validation(e.to_string()))?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64, DatasetError> {
            field(k).parse::<f64>().map_err(|_| {
                DatasetError::Validation(format!(
                    "row {}: column '{}' is not a number: '{}'",
                    line + 1,
                    schema.names()[k],
                    field(k)
                ))
            })
        };
        let cycle: u32 = field(0).parse().map_err(|_| {
            DatasetError::Validation(format!("row {}: bad cycle index '{}'", line + 1, field(0)))
        })?;
        let phase: Phase = field(1).parse()?;
        if cycles.last().is_none_or(|(c, _)| *c != cycle) {
            cycles.push((cycle, BTreeMap::new()));
        }
        let phases = &mut cycles.last_mut().unwrap().1;
        phases
            .entry(phase)
            .or_default()
            .push(num(2)?, num(3)?, num(4)?, num(5)?);
    }
    if cycles.is_empty() {
        return Err(DatasetError::EmptyFile("no data rows".into()));
    }
    Ok(cycles)
}

/// Reads and validates one cell file.
pub fn ingest_cell(
    path: &Path,
    schema: &ColumnSchema,
    meta: CellMeta,
    soh_eol: f64,
) -> Result<CellHistory, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    let raw = read_phases(file, schema).map_err(|e| match e {
        DatasetError::EmptyFile(m) => DatasetError::EmptyFile(format!("{}: {m}", path.display())),
        other => other,
    })?;
    CellHistory::from_phases(meta, raw, soh_eol)
}

/// Writes a history in canonical form. `header_comment` lines are emitted
/// first, each prefixed with `# `.
pub fn write_cell(
    writer: impl Write,
    history: &CellHistory,
    header_comment: &[String],
) -> Result<(), DatasetError> {
    let mut out = std::io::BufWriter::new(writer);
    for line in header_comment {
        writeln!(out, "# {line}").map_err(io_err)?;
    }
    writeln!(out, "{}", CANONICAL_COLUMNS.join(",")).map_err(io_err)?;
    for cycle in &history.cycles {
        for (phase, trace) in &cycle.phases {
            for k in 0..trace.len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    cycle.cycle_index,
                    phase.as_str(),
                    trace.t_s[k],
                    trace.voltage_v[k],
                    trace.current_a[k],
                    trace.capacity_ah[k]
                )
                .map_err(io_err)?;
            }
        }
    }
    out.flush().map_err(io_err)
}

fn io_err(e: std::io::Error) -> DatasetError {
    DatasetError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_voltage_column_is_schema_error() {
        let data = "cycle,phase,t_s,current_a,capacity_ah\n1,charge,0,1,0\n";
        let err = read_phases(data.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(
            matches!(err, DatasetError::Schema(ref m) if m.contains("voltage_v")),
            "{err}"
        );
    }

    #[test]
    fn duplicated_column_is_schema_error() {
        let data = "cycle,phase,t_s,voltage_v,voltage_v,current_a,capacity_ah\n";
        let err = read_phases(data.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(matches!(err, DatasetError::Schema(_)));
    }

    #[test]
    fn header_only_is_empty() {
        let data = "# written by test\ncycle,phase,t_s,voltage_v,current_a,capacity_ah\n";
        let err = read_phases(data.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyFile(_)));
    }

    #[test]
    fn foreign_headers_map_through_schema() {
        let data =
            "Cyc,Step,Time,U,I,Q\n1,rest_post_charge,0,4.1,0,0\n1,rest_post_charge,120,4.12,0,0\n";
        let schema = ColumnSchema {
            cycle: "Cyc".into(),
            phase: "Step".into(),
            t_s: "Time".into(),
            voltage_v: "U".into(),
            current_a: "I".into(),
            capacity_ah: "Q".into(),
        };
        let raw = read_phases(data.as_bytes(), &schema).unwrap();
        assert_eq!(raw.len(), 1);
        assert_eq!(raw[0].1[&Phase::RestPostCharge].voltage_v, vec![4.1, 4.12]);
    }

    #[test]
    fn bad_phase_name() {
        let data = "cycle,phase,t_s,voltage_v,current_a,capacity_ah\n1,resting,0,4.1,0,0\n";
        assert!(read_phases(data.as_bytes(), &ColumnSchema::default()).is_err());
    }
}
