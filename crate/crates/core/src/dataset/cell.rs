use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DatasetError, DischargeCurve, RelaxationCurve};

/// Retirement state of health used when nothing else is configured.
pub const DEFAULT_SOH_EOL: f64 = 0.80;
/// Width of the centered moving-median window applied to capacity before
/// end-of-life detection.
pub const EOL_MEDIAN_WINDOW: usize = 5;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chemistry {
    #[serde(rename = "NCA")]
    Nca,
    #[serde(rename = "NCM")]
    Ncm,
    #[serde(rename = "NCM_NCA", alias = "NCM+NCA")]
    NcmNca,
}

impl Chemistry {
    pub const ALL: [Chemistry; 3] = [Chemistry::Nca, Chemistry::Ncm, Chemistry::NcmNca];
}

impl fmt::Display for Chemistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chemistry::Nca => "NCA",
            Chemistry::Ncm => "NCM",
            Chemistry::NcmNca => "NCM_NCA",
        })
    }
}

impl FromStr for Chemistry {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NCA" => Ok(Chemistry::Nca),
            "NCM" => Ok(Chemistry::Ncm),
            "NCM_NCA" | "NCM+NCA" | "NCM-NCA" => Ok(Chemistry::NcmNca),
            other => Err(DatasetError::Validation(format!(
                "unknown chemistry '{other}'"
            ))),
        }
    }
}

/// Step of a cycle, as written in the `phase` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Charge,
    RestPostCharge,
    Discharge,
    RestPostDischarge,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Charge,
        Phase::RestPostCharge,
        Phase::Discharge,
        Phase::RestPostDischarge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Charge => "charge",
            Phase::RestPostCharge => "rest_post_charge",
            Phase::Discharge => "discharge",
            Phase::RestPostDischarge => "rest_post_discharge",
        }
    }
}

impl FromStr for Phase {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| DatasetError::Validation(format!("unknown phase '{s}'")))
    }
}

/// Raw rows of one phase, `t_s` relative to the phase start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub t_s: Vec<f64>,
    pub voltage_v: Vec<f64>,
    pub current_a: Vec<f64>,
    pub capacity_ah: Vec<f64>,
}

impl PhaseTrace {
    pub fn push(&mut self, t: f64, v: f64, i: f64, q: f64) {
        self.t_s.push(t);
        self.voltage_v.push(v);
        self.current_a.push(i);
        self.capacity_ah.push(q);
    }

    pub fn len(&self) -> usize {
        self.t_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_s.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t_s.last().copied().unwrap_or(0.0)
    }

    pub fn final_capacity(&self) -> f64 {
        self.capacity_ah.iter().copied().fold(0.0, f64::max)
    }
}

/// Sampling and current settings that apply to every cycle of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub sampling_interval_s: f64,
    pub cutoff_current_a: f64,
    /// Declared post-charge rest length. When present, every cycle must
    /// carry the full rest.
    pub rest_duration_s: Option<f64>,
}

impl Protocol {
    /// Samples in a full rest, counting `t = 0`.
    pub fn full_rest_samples(&self) -> Option<usize> {
        self.rest_duration_s
            .map(|rest| (rest / self.sampling_interval_s + 1e-9).floor() as usize + 1)
    }
}

/// Identity and metadata of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub cell_id: String,
    pub chemistry: Chemistry,
    /// `CYX-Y/Z`: temperature, charge rate, discharge rate.
    pub condition: String,
    pub nominal_capacity_ah: f64,
    pub protocol: Protocol,
}

/// One cycle of one cell. Derived fields are computed from `phases`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_index: u32,
    pub relaxation: RelaxationCurve,
    pub discharge: Option<DischargeCurve>,
    /// Capacity of this cycle in Ah (discharge capacity when logged).
    pub capacity: f64,
    /// Charge plus discharge throughput up to and including this cycle.
    pub cumulative_ah: f64,
    /// Days from the start of the first cycle to the start of this one.
    pub calendar_time: f64,
    pub phases: BTreeMap<Phase, PhaseTrace>,
}

/// Full cycling history of one cell. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellHistory {
    pub meta: CellMeta,
    pub cycles: Vec<CycleRecord>,
    eol_cycle: Option<u32>,
    soh_eol: f64,
}

impl CellHistory {
    /// Builds a history from raw per-cycle phase traces.
    ///
    /// Relaxation curves are resampled onto the protocol's sampling grid and
    /// the end-of-life cycle is located at `soh_eol`.
    pub fn from_phases(
        meta: CellMeta,
        raw: Vec<(u32, BTreeMap<Phase, PhaseTrace>)>,
        soh_eol: f64,
    ) -> Result<Self, DatasetError> {
        if raw.is_empty() {
            return Err(DatasetError::EmptyFile(format!(
                "cell {} has no cycles",
                meta.cell_id
            )));
        }
        if !(meta.nominal_capacity_ah > 0.0) {
            return Err(DatasetError::Validation(format!(
                "cell {}: nominal capacity must be positive",
                meta.cell_id
            )));
        }
        let mut cycles = Vec::with_capacity(raw.len());
        let mut cumulative_ah = 0.0;
        let mut elapsed_s = 0.0;
        let mut previous: Option<u32> = None;
        for (cycle_index, phases) in raw {
            let ctx = |msg: String| {
                DatasetError::Validation(format!(
                    "cell {} cycle {cycle_index}: {msg}",
                    meta.cell_id
                ))
            };
            if cycle_index == 0 {
                return Err(ctx("cycle indices start at 1".into()));
            }
            if previous.is_some_and(|p| cycle_index <= p) {
                return Err(ctx("cycle indices must be strictly increasing".into()));
            }
            previous = Some(cycle_index);
            for (phase, trace) in &phases {
                if trace.t_s.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ctx(format!("non-monotone time in {}", phase.as_str())));
                }
                let all = [
                    &trace.t_s,
                    &trace.voltage_v,
                    &trace.current_a,
                    &trace.capacity_ah,
                ];
                if all.iter().any(|col| col.iter().any(|x| !x.is_finite())) {
                    return Err(ctx(format!("non-finite value in {}", phase.as_str())));
                }
            }
            let rest = phases
                .get(&Phase::RestPostCharge)
                .filter(|t| !t.is_empty())
                .ok_or_else(|| ctx("missing rest_post_charge phase".into()))?;
            let relaxation =
                resample_relaxation(rest, &meta.protocol).map_err(|e| ctx(e.to_string()))?;
            if let Some(full) = meta.protocol.full_rest_samples() {
                if relaxation.len() < full {
                    return Err(ctx(format!(
                        "relaxation has {} samples, protocol declares {full}",
                        relaxation.len()
                    )));
                }
            }
            let discharge = match phases.get(&Phase::Discharge).filter(|t| t.len() >= 2) {
                Some(trace) => Some(discharge_from_trace(trace).map_err(|e| ctx(e.to_string()))?),
                None => None,
            };
            let charge_ah = phases
                .get(&Phase::Charge)
                .map_or(0.0, PhaseTrace::final_capacity);
            let discharge_ah = phases
                .get(&Phase::Discharge)
                .map_or(0.0, PhaseTrace::final_capacity);
            let capacity = if discharge_ah > 0.0 {
                discharge_ah
            } else {
                charge_ah
            };
            if !(capacity > 0.0) {
                return Err(ctx("cycle capacity must be positive".into()));
            }
            cumulative_ah += charge_ah + discharge_ah;
            let calendar_time = elapsed_s / SECONDS_PER_DAY;
            elapsed_s += phases.values().map(PhaseTrace::duration).sum::<f64>();
            cycles.push(CycleRecord {
                cycle_index,
                relaxation,
                discharge,
                capacity,
                cumulative_ah,
                calendar_time,
                phases,
            });
        }
        let mut history = Self {
            meta,
            cycles,
            eol_cycle: None,
            soh_eol,
        };
        history.eol_cycle = history.compute_eol(soh_eol).ok();
        Ok(history)
    }

    pub fn cell_id(&self) -> &str {
        &self.meta.cell_id
    }

    pub fn condition(&self) -> &str {
        &self.meta.condition
    }

    pub fn chemistry(&self) -> Chemistry {
        self.meta.chemistry
    }

    pub fn nominal_capacity(&self) -> f64 {
        self.meta.nominal_capacity_ah
    }

    /// End-of-life cycle at the threshold the history was built with, or
    /// `None` when the cell never faded that far.
    pub fn eol_cycle(&self) -> Option<u32> {
        self.eol_cycle
    }

    pub fn soh_eol(&self) -> f64 {
        self.soh_eol
    }

    pub fn cycle(&self, index: u32) -> Option<&CycleRecord> {
        self.cycles
            .binary_search_by_key(&index, |c| c.cycle_index)
            .ok()
            .map(|i| &self.cycles[i])
    }

    /// Capacity over nominal capacity at `index`.
    pub fn soh(&self, index: u32) -> Option<f64> {
        self.cycle(index)
            .map(|c| c.capacity / self.meta.nominal_capacity_ah)
    }

    /// First cycle whose smoothed capacity fraction is at or below `soh_eol`.
    ///
    /// Capacity is smoothed by a centered 5-cycle moving median (shrinking
    /// symmetrically at the ends of the record) before the threshold test.
    /// Appending cycles cannot move the result once the record extends two
    /// cycles past it.
    pub fn compute_eol(&self, soh_eol: f64) -> Result<u32, DatasetError> {
        let caps: Vec<f64> = self.cycles.iter().map(|c| c.capacity).collect();
        let smoothed = moving_median(&caps, EOL_MEDIAN_WINDOW);
        smoothed
            .iter()
            .zip(&self.cycles)
            .find(|(q, _)| **q / self.meta.nominal_capacity_ah <= soh_eol)
            .map(|(_, c)| c.cycle_index)
            .ok_or_else(|| DatasetError::NeverReached(self.meta.cell_id.clone()))
    }
}

/// Centered moving median. Near the ends the window shrinks symmetrically,
/// so the first and last values are their own median.
pub fn moving_median(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let half = (window / 2).min(i).min(n - 1 - i);
            let (lo, hi) = (i - half, i + half + 1);
            let mut w = values[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            let n = w.len();
            if n % 2 == 1 {
                w[n / 2]
            } else {
                0.5 * (w[n / 2 - 1] + w[n / 2])
            }
        })
        .collect()
}

/// Linear resampling of a rest trace onto `k * sampling_interval`.
fn resample_relaxation(
    rest: &PhaseTrace,
    protocol: &Protocol,
) -> Result<RelaxationCurve, DatasetError> {
    let dt = protocol.sampling_interval_s;
    if rest.t_s[0] != 0.0 {
        return Err(DatasetError::Validation(format!(
            "rest must start at t = 0, got {}",
            rest.t_s[0]
        )));
    }
    let last = rest.duration();
    let n = (last / dt + 1e-9).floor() as usize + 1;
    let mut times = Vec::with_capacity(n);
    let mut volts = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = k as f64 * dt;
        while j + 1 < rest.len() && rest.t_s[j + 1] <= t {
            j += 1;
        }
        let v = if rest.t_s[j] == t || j + 1 == rest.len() {
            rest.voltage_v[j]
        } else {
            let (t0, t1) = (rest.t_s[j], rest.t_s[j + 1]);
            let w = (t - t0) / (t1 - t0);
            rest.voltage_v[j] + w * (rest.voltage_v[j + 1] - rest.voltage_v[j])
        };
        times.push(t);
        volts.push(v);
    }
    RelaxationCurve::new(times, volts, dt, protocol.cutoff_current_a)
}

/// Discharge curve from raw rows, made monotone by a running maximum on
/// capacity and a running minimum on voltage.
fn discharge_from_trace(trace: &PhaseTrace) -> Result<DischargeCurve, DatasetError> {
    let mut q_max = f64::NEG_INFINITY;
    let capacity: Vec<f64> = trace
        .capacity_ah
        .iter()
        .map(|&q| {
            q_max = q_max.max(q);
            q_max
        })
        .collect();
    let mut v_min = f64::INFINITY;
    let voltage: Vec<f64> = trace
        .voltage_v
        .iter()
        .map(|&v| {
            v_min = v_min.min(v);
            v_min
        })
        .collect();
    DischargeCurve::new(capacity, voltage, trace.duration())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CellMeta {
        CellMeta {
            cell_id: "c1".into(),
            chemistry: Chemistry::Nca,
            condition: "CY25-0.5/1".into(),
            nominal_capacity_ah: 1.0,
            protocol: Protocol {
                sampling_interval_s: 120.0,
                cutoff_current_a: 0.05,
                rest_duration_s: None,
            },
        }
    }

    fn cycle(capacity: f64, rest_times: &[f64]) -> BTreeMap<Phase, PhaseTrace> {
        let mut phases = BTreeMap::new();
        let mut rest = PhaseTrace::default();
        for &t in rest_times {
            rest.push(t, 4.15, 0.0, 0.0);
        }
        phases.insert(Phase::RestPostCharge, rest);
        let mut charge = PhaseTrace::default();
        charge.push(0.0, 3.0, 0.5, 0.0);
        charge.push(3600.0, 4.2, 0.05, capacity);
        phases.insert(Phase::Charge, charge);
        let mut dis = PhaseTrace::default();
        dis.push(0.0, 4.1, -1.0, 0.0);
        dis.push(3600.0, 2.7, -1.0, capacity);
        phases.insert(Phase::Discharge, dis);
        phases
    }

    fn history(caps: &[f64]) -> CellHistory {
        let raw = caps
            .iter()
            .enumerate()
            .map(|(i, &q)| (i as u32 + 1, cycle(q, &[0.0, 120.0, 240.0])))
            .collect();
        CellHistory::from_phases(meta(), raw, DEFAULT_SOH_EOL).unwrap()
    }

    #[test]
    fn eol_is_first_crossing() {
        let h = history(&[1.0, 0.9, 0.79]);
        assert_eq!(h.compute_eol(0.8).unwrap(), 3);
        assert_eq!(h.eol_cycle(), Some(3));
    }

    #[test]
    fn eol_never_reached() {
        let h = history(&[1.0, 0.95, 0.9, 0.85]);
        assert!(matches!(
            h.compute_eol(0.8),
            Err(DatasetError::NeverReached(_))
        ));
        assert_eq!(h.eol_cycle(), None);
    }

    #[test]
    fn median_ignores_single_spike() {
        let h = history(&[1.0, 0.95, 0.5, 0.93, 0.92, 0.91, 0.9]);
        assert!(h.compute_eol(0.8).is_err());
    }

    #[test]
    fn throughput_and_calendar() {
        let h = history(&[3.5; 10]);
        assert_eq!(h.cycles[9].cumulative_ah, 70.0);
        assert_eq!(h.cycles[0].calendar_time, 0.0);
        // charge 3600 s + rest 240 s + discharge 3600 s per cycle
        let per_cycle = 7440.0 / 86_400.0;
        assert!((h.cycles[1].calendar_time - per_cycle).abs() < 1e-12);
    }

    #[test]
    fn resamples_off_grid_rest() {
        let raw = vec![(1, cycle(1.0, &[0.0, 60.0, 180.0, 250.0]))];
        let mut m = meta();
        m.nominal_capacity_ah = 1.0;
        let h = CellHistory::from_phases(m, raw, 0.8).unwrap();
        assert_eq!(h.cycles[0].relaxation.times(), &[0.0, 120.0, 240.0]);
    }

    #[test]
    fn declared_rest_must_be_complete() {
        let mut m = meta();
        m.protocol.rest_duration_s = Some(1800.0);
        let raw = vec![(1, cycle(1.0, &[0.0, 120.0, 240.0]))];
        assert!(CellHistory::from_phases(m, raw, 0.8).is_err());
    }

    #[test]
    fn rejects_decreasing_cycle_index() {
        let raw = vec![
            (2, cycle(1.0, &[0.0, 120.0])),
            (1, cycle(1.0, &[0.0, 120.0])),
        ];
        assert!(CellHistory::from_phases(meta(), raw, 0.8).is_err());
    }

    #[test]
    fn chemistry_names() {
        assert_eq!("NCM+NCA".parse::<Chemistry>().unwrap(), Chemistry::NcmNca);
        assert_eq!(Chemistry::NcmNca.to_string(), "NCM_NCA");
    }
}
