//! Feature extraction: ECM state features, relaxed-voltage window features,
//! discharge-curve rate features and throughput benchmarks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CellHistory, DischargeCurve, RelaxationCurve};
use crate::ecm::{self, EcmError, EcmParams};

/// Voltage grid size for ΔQ(V).
pub const DQ_GRID_POINTS: usize = 1000;
/// Floor on the ΔQ(V) variance before the log, Ah².
pub const DQ_VARIANCE_FLOOR: f64 = 1e-12;
/// Floor on the discharge-time difference before the log, s.
pub const DT_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("TimeGridMismatch: relaxation curves are sampled on different time grids")]
    TimeGridMismatch,
    #[error("HorizonExceedsData: horizon {horizon} s beyond the last sample at {available} s")]
    HorizonExceedsData { horizon: f64, available: f64 },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("NoVoltageOverlap: discharge curves share no voltage range")]
    NoVoltageOverlap,
    #[error("UnknownCycle: cell {cell} has no cycle {cycle}")]
    UnknownCycle { cell: String, cycle: u32 },
    #[error("MissingDischargeData: cell {cell} cycle {cycle} has no discharge curve")]
    MissingDischargeData { cell: String, cycle: u32 },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("cell {cell} cycle {cycle}: {source}")]
    Ecm {
        cell: String,
        cycle: u32,
        #[source]
        source: EcmError,
    },
    #[error("relaxation truncation: {0}")]
    Truncation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Ecm,
    Stats,
    Benchmark,
    NovelPred,
    NovelClass,
    RateClass,
}

const ECM_NAMES: [&str; 6] = EcmParams::NAMES;
const STATS_NAMES: [&str; 8] = [
    "dv_var", "dv_skew", "dv_kurt", "dv_max", "dv_min", "dv_mean", "dv_sum", "dv_last",
];
const BENCHMARK_NAMES: [&str; 8] = ["ocv", "r_o", "r_e", "c_e", "r_c", "c_c", "sum_ah", "sum_t"];
const NOVEL_PRED_NAMES: [&str; 8] = [
    "ocv", "r_o", "r_e", "c_e", "r_c", "c_c", "dv_sum", "dv_last",
];
const NOVEL_CLASS_NAMES: [&str; 8] = [
    "ocv",
    "r_o",
    "r_e",
    "c_e",
    "r_c",
    "c_c",
    "log_var_dq",
    "log_dt",
];
const RATE_CLASS_NAMES: [&str; 2] = ["log_var_dq", "log_dt"];

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::Ecm,
        FeatureSet::Stats,
        FeatureSet::Benchmark,
        FeatureSet::NovelPred,
        FeatureSet::NovelClass,
        FeatureSet::RateClass,
    ];
    /// Sets compared in the RUL table.
    pub const PREDICTION: [FeatureSet; 4] = [
        FeatureSet::Ecm,
        FeatureSet::Stats,
        FeatureSet::Benchmark,
        FeatureSet::NovelPred,
    ];
    /// Sets compared in the classification table.
    pub const CLASSIFICATION: [FeatureSet; 4] = [
        FeatureSet::Ecm,
        FeatureSet::RateClass,
        FeatureSet::Benchmark,
        FeatureSet::NovelClass,
    ];

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            FeatureSet::Ecm => &ECM_NAMES,
            FeatureSet::Stats => &STATS_NAMES,
            FeatureSet::Benchmark => &BENCHMARK_NAMES,
            FeatureSet::NovelPred => &NOVEL_PRED_NAMES,
            FeatureSet::NovelClass => &NOVEL_CLASS_NAMES,
            FeatureSet::RateClass => &RATE_CLASS_NAMES,
        }
    }

    pub fn dim(&self) -> usize {
        self.names().len()
    }

    pub fn uses_ecm(&self) -> bool {
        !matches!(self, FeatureSet::Stats | FeatureSet::RateClass)
    }

    pub fn uses_relaxation_window(&self) -> bool {
        matches!(self, FeatureSet::Stats | FeatureSet::NovelPred)
    }

    pub fn uses_discharge(&self) -> bool {
        matches!(self, FeatureSet::NovelClass | FeatureSet::RateClass)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureSet::Ecm => "ecm",
            FeatureSet::Stats => "stats",
            FeatureSet::Benchmark => "benchmark",
            FeatureSet::NovelPred => "novel-pred",
            FeatureSet::NovelClass => "novel-class",
            FeatureSet::RateClass => "rate-class",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.as_str() == key)
            .ok_or_else(|| {
                format!("unknown feature set '{s}' (expected ecm, stats, benchmark, novel-pred, novel-class or rate-class)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    FixedReference,
    Adjacent,
}

/// Reference cycle `n` and current cycle `m` of a feature window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    reference: u32,
    current: u32,
    mode: WindowMode,
}

impl WindowSpec {
    pub fn new(reference: u32, current: u32, mode: WindowMode) -> Result<Self, FeatureError> {
        if current <= reference {
            return Err(FeatureError::InvalidWindow(format!(
                "current cycle {current} must follow reference cycle {reference}"
            )));
        }
        if mode == WindowMode::Adjacent && current - reference != 1 {
            return Err(FeatureError::InvalidWindow(format!(
                "adjacent window needs m - n = 1, got {current} - {reference}"
            )));
        }
        Ok(Self {
            reference,
            current,
            mode,
        })
    }

    pub fn fixed(reference: u32, current: u32) -> Result<Self, FeatureError> {
        Self::new(reference, current, WindowMode::FixedReference)
    }

    /// `(m - 1, m)`.
    pub fn adjacent(current: u32) -> Result<Self, FeatureError> {
        Self::new(current.saturating_sub(1), current, WindowMode::Adjacent)
    }

    pub fn reference(&self) -> u32 {
        self.reference
    }

    pub fn current(&self) -> u32 {
        self.current
    }

    pub fn mode(&self) -> WindowMode {
        self.mode
    }
}

/// Feature values in the fixed order of their set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub cell_id: String,
    pub cycle_index: u32,
    pub feature_set: FeatureSet,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn names(&self) -> &'static [&'static str] {
        self.feature_set.names()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        self.names()
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.iter().map(|(n, v)| (n.to_string(), v)).collect()
    }
}

/// `V_m(t) - V_n(t)` on the shared sampling grid.
pub fn delta_v(
    curve_m: &RelaxationCurve,
    curve_n: &RelaxationCurve,
) -> Result<Vec<f64>, FeatureError> {
    if curve_m.times() != curve_n.times() {
        return Err(FeatureError::TimeGridMismatch);
    }
    Ok(curve_m
        .voltages()
        .iter()
        .zip(curve_n.voltages())
        .map(|(a, b)| a - b)
        .collect())
}

/// Sum of `ΔV` over `t = ΔT..=T` (the `t = 0` sample is excluded) and `ΔV(T)`.
pub fn delta_v_features(
    dv: &[f64],
    sampling: f64,
    horizon: f64,
) -> Result<(f64, f64), FeatureError> {
    let k = (horizon / sampling).round() as usize;
    if k == 0 {
        return Err(FeatureError::TooFewPoints {
            needed: 2,
            got: dv.len(),
        });
    }
    if k >= dv.len() {
        return Err(FeatureError::HorizonExceedsData {
            horizon,
            available: (dv.len().saturating_sub(1)) as f64 * sampling,
        });
    }
    Ok((dv[1..=k].iter().sum(), dv[k]))
}

/// Eight summary statistics of a `ΔV` sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DvStats {
    /// variance (n - 1), skewness, kurtosis, max, min, mean, sum, last.
    pub values: [f64; 8],
    /// All points equal; skewness and kurtosis were set to 0.
    pub degenerate: bool,
}

/// Summary statistics in the order variance, skewness, kurtosis, max, min,
/// mean, sum, last.
///
/// Variance uses the `n - 1` denominator. Skewness and kurtosis are the
/// standardized third and fourth central moments (population form, kurtosis
/// not excess).
pub fn stats_features(dv: &[f64]) -> Result<DvStats, FeatureError> {
    let n = dv.len();
    if n < 2 {
        return Err(FeatureError::TooFewPoints { needed: 2, got: n });
    }
    let nf = n as f64;
    let sum: f64 = dv.iter().sum();
    let mean = sum / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in dv {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let variance = m2 / (nf - 1.0);
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let max = dv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = dv.iter().copied().fold(f64::INFINITY, f64::min);
    // spread below rounding noise of the mean counts as constant
    let degenerate = max - min <= 4.0 * f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE);
    let (skew, kurt) = if degenerate || m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };
    Ok(DvStats {
        values: [
            if degenerate { 0.0 } else { variance },
            skew,
            kurt,
            max,
            min,
            mean,
            sum,
            dv[n - 1],
        ],
        degenerate,
    })
}

/// `log10` of the sample variance of `Q_m(V) - Q_n(V)` on a uniform
/// `p`-point voltage grid over the overlap of both curves.
pub fn delta_q_variance(
    disc_m: &DischargeCurve,
    disc_n: &DischargeCurve,
    p: usize,
) -> Result<f64, FeatureError> {
    if p < 2 {
        return Err(FeatureError::TooFewPoints { needed: 2, got: p });
    }
    let (lo_m, hi_m) = disc_m.voltage_range();
    let (lo_n, hi_n) = disc_n.voltage_range();
    let (lo, hi) = (lo_m.max(lo_n), hi_m.min(hi_n));
    if !(hi > lo) {
        return Err(FeatureError::NoVoltageOverlap);
    }
    let step = (hi - lo) / (p - 1) as f64;
    let dq: Vec<f64> = (0..p)
        .map(|k| {
            let v = if k == p - 1 { hi } else { lo + k as f64 * step };
            disc_m.capacity_at(v) - disc_n.capacity_at(v)
        })
        .collect();
    let mean = dq.iter().sum::<f64>() / p as f64;
    let var = dq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (p - 1) as f64;
    Ok(var.max(DQ_VARIANCE_FLOOR).log10())
}

/// `log10` of the absolute difference in discharge duration, floored at 1 ms.
pub fn delta_t(disc_m: &DischargeCurve, disc_n: &DischargeCurve) -> f64 {
    (disc_m.duration() - disc_n.duration())
        .abs()
        .max(DT_FLOOR)
        .log10()
}

/// Cumulative throughput (Ah) and calendar time (days) at `cycle`.
pub fn benchmark_features(history: &CellHistory, cycle: u32) -> Result<(f64, f64), FeatureError> {
    let rec = history
        .cycle(cycle)
        .ok_or_else(|| FeatureError::UnknownCycle {
            cell: history.cell_id().to_string(),
            cycle,
        })?;
    Ok((rec.cumulative_ah, rec.calendar_time))
}

/// Feature source for one cell, optionally truncating every relaxation
/// curve to its first `truncation` samples. ECM fits are cached.
#[derive(Debug, Clone)]
pub struct CellFeatures<'a> {
    history: &'a CellHistory,
    truncation: Option<usize>,
    ecm: BTreeMap<u32, EcmParams>,
}

impl<'a> CellFeatures<'a> {
    pub fn new(history: &'a CellHistory, truncation: Option<usize>) -> Self {
        Self {
            history,
            truncation,
            ecm: BTreeMap::new(),
        }
    }

    pub fn history(&self) -> &'a CellHistory {
        self.history
    }

    fn record(&self, cycle: u32) -> Result<&'a crate::dataset::CycleRecord, FeatureError> {
        self.history
            .cycle(cycle)
            .ok_or_else(|| FeatureError::UnknownCycle {
                cell: self.history.cell_id().to_string(),
                cycle,
            })
    }

    /// Relaxation curve of `cycle` after truncation.
    pub fn relaxation(&self, cycle: u32) -> Result<RelaxationCurve, FeatureError> {
        let curve = &self.record(cycle)?.relaxation;
        match self.truncation {
            Some(k) => curve
                .truncated(k)
                .map_err(|e| FeatureError::Truncation(e.to_string())),
            None => Ok(curve.clone()),
        }
    }

    fn fit_cycle(&self, cycle: u32) -> Result<EcmParams, FeatureError> {
        let curve = self.relaxation(cycle)?;
        match ecm::fit(&curve) {
            Ok(r) => Ok(r.params),
            // best-effort parameters are still informative features
            Err(EcmError::NoConvergence { best }) => Ok(best.params),
            Err(source) => Err(FeatureError::Ecm {
                cell: self.history.cell_id().to_string(),
                cycle,
                source,
            }),
        }
    }

    /// Fits the listed cycles in parallel and caches the results.
    pub fn prefit(&mut self, cycles: &[u32]) -> Result<(), FeatureError> {
        let todo: Vec<u32> = cycles
            .iter()
            .copied()
            .filter(|c| !self.ecm.contains_key(c))
            .collect();
        let fitted: Vec<(u32, EcmParams)> = todo
            .par_iter()
            .map(|&c| self.fit_cycle(c).map(|p| (c, p)))
            .collect::<Result<_, _>>()?;
        self.ecm.extend(fitted);
        Ok(())
    }

    pub fn ecm(&self, cycle: u32) -> Result<EcmParams, FeatureError> {
        match self.ecm.get(&cycle) {
            Some(p) => Ok(*p),
            None => self.fit_cycle(cycle),
        }
    }

    /// `ΔV` between the window's cycles. Curves of unequal length are
    /// compared over their common prefix.
    pub fn window_delta_v(&self, window: &WindowSpec) -> Result<(Vec<f64>, f64), FeatureError> {
        let a = self.relaxation(window.current())?;
        let b = self.relaxation(window.reference())?;
        let k = a.len().min(b.len());
        let (a, b) = if a.len() == b.len() {
            (a, b)
        } else {
            let t = |c: &RelaxationCurve| {
                c.truncated(k)
                    .map_err(|e| FeatureError::Truncation(e.to_string()))
            };
            (t(&a)?, t(&b)?)
        };
        Ok((delta_v(&a, &b)?, a.sampling_interval()))
    }

    fn discharge(&self, cycle: u32) -> Result<&'a DischargeCurve, FeatureError> {
        self.record(cycle)?
            .discharge
            .as_ref()
            .ok_or_else(|| FeatureError::MissingDischargeData {
                cell: self.history.cell_id().to_string(),
                cycle,
            })
    }

    /// Feature vector of `set` at the window's current cycle.
    pub fn assemble(
        &self,
        window: &WindowSpec,
        set: FeatureSet,
    ) -> Result<FeatureVector, FeatureError> {
        let m = window.current();
        let mut values = Vec::with_capacity(set.dim());
        if set.uses_ecm() {
            values.extend(self.ecm(m)?.to_array());
        }
        match set {
            FeatureSet::Ecm => {}
            FeatureSet::Benchmark => {
                let (ah, days) = benchmark_features(self.history, m)?;
                values.extend([ah, days]);
            }
            FeatureSet::Stats | FeatureSet::NovelPred => {
                let (dv, dt) = self.window_delta_v(window)?;
                let horizon = (dv.len() - 1) as f64 * dt;
                if set == FeatureSet::Stats {
                    values.extend(stats_features(&dv[1..])?.values);
                } else {
                    let (s, l) = delta_v_features(&dv, dt, horizon)?;
                    values.extend([s, l]);
                }
            }
            FeatureSet::NovelClass | FeatureSet::RateClass => {
                let dm = self.discharge(m)?;
                let dn = self.discharge(window.reference())?;
                values.extend([delta_q_variance(dm, dn, DQ_GRID_POINTS)?, delta_t(dm, dn)]);
            }
        }
        debug_assert_eq!(values.len(), set.dim());
        Ok(FeatureVector {
            cell_id: self.history.cell_id().to_string(),
            cycle_index: m,
            feature_set: set,
            values,
        })
    }
}

/// One-off assembly without a fit cache.
pub fn assemble(
    history: &CellHistory,
    window: &WindowSpec,
    set: FeatureSet,
) -> Result<FeatureVector, FeatureError> {
    CellFeatures::new(history, None).assemble(window, set)
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Statistics of the rows of `x`. Constant columns get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = v.sqrt();
                if s > 1e-12 * m.abs().max(1e-300) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn transform_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(vs: &[f64]) -> RelaxationCurve {
        let ts = (0..vs.len()).map(|k| k as f64 * 120.0).collect();
        RelaxationCurve::new(ts, vs.to_vec(), 120.0, 0.175).unwrap()
    }

    #[test]
    fn delta_v_of_offset_curve() {
        let a = curve(&[4.1, 4.12, 4.13]);
        let b = curve(&[4.099, 4.119, 4.129]);
        let dv = delta_v(&b, &a).unwrap();
        assert!(dv.iter().all(|x| (x + 0.001).abs() < 1e-12));
        assert!(delta_v(&a, &a).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn grid_mismatch() {
        let a = curve(&[4.1, 4.12, 4.13]);
        let b =
            RelaxationCurve::new(vec![0.0, 60.0, 120.0], vec![4.1, 4.1, 4.1], 60.0, 0.175).unwrap();
        assert!(matches!(
            delta_v(&a, &b),
            Err(FeatureError::TimeGridMismatch)
        ));
    }

    #[test]
    fn window_sums_skip_t0() {
        let dv = vec![-0.001; 16];
        let (s, l) = delta_v_features(&dv, 120.0, 1800.0).unwrap();
        assert!((s + 0.015).abs() < 1e-15);
        assert_eq!(l, -0.001);
        assert_eq!(
            delta_v_features(&[0.0; 16], 120.0, 1800.0).unwrap(),
            (0.0, 0.0)
        );
        assert!(matches!(
            delta_v_features(&dv, 120.0, 2000.0),
            Err(FeatureError::HorizonExceedsData { .. })
        ));
    }

    #[test]
    fn stats_examples() {
        let s = stats_features(&[-0.001, -0.001, -0.001]).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.values[0], 0.0);
        assert_eq!((s.values[3], s.values[4]), (-0.001, -0.001));
        assert!((s.values[5] + 0.001).abs() < 1e-18);

        let s = stats_features(&[0.0, -0.002]).unwrap();
        assert!((s.values[5] + 0.001).abs() < 1e-18);
        assert!((s.values[0] - 2e-6).abs() < 1e-18);
        assert!(!s.degenerate);

        let s = stats_features(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(s.values[1].abs() < 1e-15);
        // population kurtosis of 1..5 is 1.7
        assert!((s.values[2] - 1.7).abs() < 1e-12);
    }

    #[test]
    fn delta_t_floor_and_log() {
        let d = |dur| DischargeCurve::new(vec![0.0, 1.0], vec![4.0, 3.0], dur).unwrap();
        assert_eq!(delta_t(&d(3600.0), &d(3600.0)), -3.0);
        assert!((delta_t(&d(3700.0), &d(3600.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_discharges_hit_floor() {
        let d = DischargeCurve::new(vec![0.0, 1.0, 2.0], vec![4.1, 3.6, 2.7], 7000.0).unwrap();
        assert_eq!(delta_q_variance(&d, &d, 1000).unwrap(), -12.0);
    }

    #[test]
    fn disjoint_voltage_ranges() {
        let a = DischargeCurve::new(vec![0.0, 1.0], vec![4.1, 3.8], 10.0).unwrap();
        let b = DischargeCurve::new(vec![0.0, 1.0], vec![3.5, 3.0], 10.0).unwrap();
        assert!(matches!(
            delta_q_variance(&a, &b, 100),
            Err(FeatureError::NoVoltageOverlap)
        ));
    }

    #[test]
    fn adjacent_window_rule() {
        assert!(WindowSpec::new(3, 5, WindowMode::Adjacent).is_err());
        assert!(WindowSpec::adjacent(5).is_ok());
        assert!(WindowSpec::fixed(5, 5).is_err());
    }

    #[test]
    fn feature_set_names_parse() {
        for f in FeatureSet::ALL {
            assert_eq!(f.as_str().parse::<FeatureSet>().unwrap(), f);
        }
        assert_eq!(
            "NOVEL_PRED".parse::<FeatureSet>().unwrap(),
            FeatureSet::NovelPred
        );
        assert_eq!(FeatureSet::NovelClass.dim(), 8);
        assert_eq!(FeatureSet::RateClass.dim(), 2);
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows);
        assert_eq!(s.transform(&[3.0, 5.0]), vec![1.0, 0.0]);
    }
}
