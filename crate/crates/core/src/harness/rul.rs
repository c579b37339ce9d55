use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fingerprint, metrics, HarnessError, ALL_CONDITIONS};
use crate::dataset::{CellHistory, Chemistry, DatasetSplit};
use crate::features::{CellFeatures, FeatureSet, FeatureVector, WindowSpec};
use crate::gpr::{GprConfig, GprModel};

/// SOH at or below which samples are excluded from training and evaluation.
pub const SOH_EOL: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulConfig {
    pub feature_set: FeatureSet,
    /// First cycle of the evaluation window; the reference cycle `n` is the
    /// first observed cycle at or after it.
    pub window_start: u32,
    /// Relaxation samples kept per curve; `None` keeps the full rest.
    pub truncation: Option<usize>,
    pub gpr: GprConfig,
    /// Use every `train_stride`-th cycle of training cells.
    pub train_stride: u32,
    /// Use every `eval_stride`-th cycle of test cells.
    pub eval_stride: u32,
}

impl Default for RulConfig {
    fn default() -> Self {
        Self {
            feature_set: FeatureSet::NovelPred,
            window_start: 1,
            truncation: None,
            gpr: GprConfig::default(),
            train_stride: 1,
            eval_stride: 1,
        }
    }
}

impl RulConfig {
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

/// One supervised sample: features at cycle `m` with its remaining life.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulSample {
    pub features: FeatureVector,
    pub chemistry: Chemistry,
    pub condition: String,
    pub soh: f64,
    pub eol: u32,
    pub rul: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub cell_id: String,
    pub chemistry: Chemistry,
    pub condition: String,
    pub cycle: u32,
    pub soh: f64,
    pub eol: u32,
    pub rul: f64,
    pub predicted: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub chemistry: Chemistry,
    /// Cycling condition, or `ALL` for the chemistry aggregate.
    pub condition: String,
    pub feature_set: FeatureSet,
    pub samples: usize,
    pub rmse: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub chemistry: Chemistry,
    pub feature: String,
    pub length_scale: f64,
    /// `l_m / Σ l`.
    pub weight: f64,
    /// `(1/l_m) / Σ (1/l)`.
    pub inverse_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulReport {
    pub fingerprint: String,
    pub config: RulConfig,
    pub predictions: Vec<PredictionRow>,
    pub metrics: Vec<MetricRow>,
    pub importance: Vec<ImportanceRow>,
}

impl RulReport {
    /// Metrics rebuilt from the stored predictions.
    pub fn recompute_metrics(&self) -> Result<Vec<MetricRow>, HarnessError> {
        metrics_from_predictions(&self.predictions, self.config.feature_set)
    }

    pub fn metric(&self, chemistry: Chemistry, condition: &str) -> Option<&MetricRow> {
        self.metrics
            .iter()
            .find(|m| m.chemistry == chemistry && m.condition == condition)
    }

    /// RMSE over every test sample of every chemistry.
    pub fn pooled_rmse(&self) -> Result<f64, HarnessError> {
        let y: Vec<f64> = self.predictions.iter().map(|p| p.rul).collect();
        let y_hat: Vec<f64> = self.predictions.iter().map(|p| p.predicted).collect();
        Ok(metrics::rmse(&y, &y_hat)?)
    }
}

/// Per-condition rows, then one `ALL` row per chemistry, in sorted order.
pub fn metrics_from_predictions(
    rows: &[PredictionRow],
    feature_set: FeatureSet,
) -> Result<Vec<MetricRow>, HarnessError> {
    let mut groups: BTreeMap<(Chemistry, String), Vec<&PredictionRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.chemistry, r.condition.clone()))
            .or_default()
            .push(r);
        groups
            .entry((r.chemistry, ALL_CONDITIONS.to_string()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((chemistry, condition), rs) in groups {
        let y: Vec<f64> = rs.iter().map(|r| r.rul).collect();
        let y_hat: Vec<f64> = rs.iter().map(|r| r.predicted).collect();
        let eol: Vec<f64> = rs.iter().map(|r| r.eol as f64).collect();
        out.push(MetricRow {
            chemistry,
            condition,
            feature_set,
            samples: rs.len(),
            rmse: metrics::rmse(&y, &y_hat)?,
            mape: metrics::mape(&y, &y_hat, &eol)?,
        });
    }
    // aggregate rows after the per-condition rows of each chemistry
    out.sort_by(|a, b| {
        (a.chemistry, a.condition == ALL_CONDITIONS, &a.condition).cmp(&(
            b.chemistry,
            b.condition == ALL_CONDITIONS,
            &b.condition,
        ))
    });
    Ok(out)
}

/// Feature sources for a set of cells at one truncation level. ECM fits are
/// cached, so several feature sets can share one extraction.
pub struct Extraction<'a> {
    truncation: Option<usize>,
    cells: Vec<CellFeatures<'a>>,
}

impl<'a> Extraction<'a> {
    pub fn new(cells: &'a [CellHistory], truncation: Option<usize>) -> Self {
        let mut sorted: Vec<&CellHistory> = cells.iter().collect();
        sorted.sort_by(|a, b| a.cell_id().cmp(b.cell_id()));
        Self {
            truncation,
            cells: sorted
                .into_iter()
                .map(|c| CellFeatures::new(c, truncation))
                .collect(),
        }
    }

    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    pub fn cells(&self) -> &[CellFeatures<'a>] {
        &self.cells
    }

    /// Fits ECM parameters for every listed `(cell index, cycles)` pair.
    fn prefit(&mut self, wanted: &BTreeMap<usize, Vec<u32>>) -> Result<(), HarnessError> {
        for (&i, cycles) in wanted {
            self.cells[i].prefit(cycles)?;
        }
        Ok(())
    }
}

/// Reference cycle and sample cycles of one cell for a window start.
fn sample_cycles(cell: &CellHistory, window_start: u32, stride: u32) -> Option<(u32, Vec<u32>)> {
    let eol = cell.eol_cycle()?;
    let n = cell
        .cycles
        .iter()
        .map(|c| c.cycle_index)
        .find(|&c| c >= window_start)?;
    let stride = stride.max(1);
    let cycles = cell
        .cycles
        .iter()
        .filter(|c| c.cycle_index > n && (c.cycle_index - n) % stride == 0)
        .filter(|c| c.capacity / cell.nominal_capacity() > SOH_EOL && c.cycle_index <= eol)
        .map(|c| c.cycle_index)
        .collect();
    Some((n, cycles))
}

fn build_samples(
    source: &CellFeatures<'_>,
    n: u32,
    cycles: &[u32],
    set: FeatureSet,
) -> Result<Vec<RulSample>, HarnessError> {
    let cell = source.history();
    let eol = cell.eol_cycle().expect("sampled cells have an end of life");
    cycles
        .iter()
        .map(|&m| {
            let window = WindowSpec::fixed(n, m)?;
            Ok(RulSample {
                features: source.assemble(&window, set)?,
                chemistry: cell.chemistry(),
                condition: cell.condition().to_string(),
                soh: cell.soh(m).expect("cycle exists"),
                eol,
                rul: (eol - m) as f64,
            })
        })
        .collect()
}

/// Samples of the cells for which `stride_of` returns a cycle stride, in
/// cell-id order. ECM fits are added to the extraction's cache.
pub fn rul_samples(
    ex: &mut Extraction<'_>,
    window_start: u32,
    set: FeatureSet,
    stride_of: impl Fn(&str) -> Option<u32>,
) -> Result<Vec<RulSample>, HarnessError> {
    let mut plan = Vec::new();
    for (i, src) in ex.cells().iter().enumerate() {
        let Some(stride) = stride_of(src.history().cell_id()) else {
            continue;
        };
        if let Some((n, cycles)) = sample_cycles(src.history(), window_start, stride) {
            if !cycles.is_empty() {
                plan.push((i, n, cycles));
            }
        }
    }
    if set.uses_ecm() {
        let wanted: BTreeMap<usize, Vec<u32>> =
            plan.iter().map(|(i, _, c)| (*i, c.clone())).collect();
        ex.prefit(&wanted)?;
    }
    let ex = &*ex;
    let built: Vec<Vec<RulSample>> = plan
        .par_iter()
        .map(|(i, n, cycles)| build_samples(&ex.cells()[*i], *n, cycles, set))
        .collect::<Result<_, HarnessError>>()?;
    Ok(built.into_iter().flatten().collect())
}

/// One GPR per chemistry present in `samples`.
pub fn train_rul_models(
    samples: &[RulSample],
    config: &GprConfig,
) -> Result<BTreeMap<Chemistry, GprModel>, HarnessError> {
    let mut by_chem: BTreeMap<Chemistry, Vec<&RulSample>> = BTreeMap::new();
    for s in samples {
        by_chem.entry(s.chemistry).or_default().push(s);
    }
    by_chem
        .into_iter()
        .map(|(chemistry, train)| {
            if train.len() < 2 {
                return Err(HarnessError::NoSamples(format!(
                    "{chemistry}: {} training samples",
                    train.len()
                )));
            }
            let x: Vec<Vec<f64>> = train.iter().map(|s| s.features.values.clone()).collect();
            let y: Vec<f64> = train.iter().map(|s| s.rul).collect();
            Ok((chemistry, GprModel::train(&x, &y, config)?))
        })
        .collect()
}

/// Predictions for every sample whose chemistry has a model.
pub fn predict_rul(
    models: &BTreeMap<Chemistry, GprModel>,
    samples: &[RulSample],
) -> Result<Vec<PredictionRow>, HarnessError> {
    let mut out = Vec::with_capacity(samples.len());
    for (chemistry, model) in models {
        let chosen: Vec<&RulSample> = samples
            .iter()
            .filter(|s| s.chemistry == *chemistry)
            .collect();
        if chosen.is_empty() {
            continue;
        }
        let xq: Vec<Vec<f64>> = chosen.iter().map(|s| s.features.values.clone()).collect();
        let pred = model.predict(&xq)?;
        for (s, (m, v)) in chosen.iter().zip(pred.mean.iter().zip(&pred.variance)) {
            out.push(PredictionRow {
                cell_id: s.features.cell_id.clone(),
                chemistry: *chemistry,
                condition: s.condition.clone(),
                cycle: s.features.cycle_index,
                soh: s.soh,
                eol: s.eol,
                rul: s.rul,
                predicted: *m,
                std: v.sqrt(),
            });
        }
    }
    Ok(out)
}

/// Length-scale importance of each model's features.
pub fn importance_rows(
    models: &BTreeMap<Chemistry, GprModel>,
    set: FeatureSet,
) -> Vec<ImportanceRow> {
    let mut out = Vec::new();
    for (chemistry, model) in models {
        let l = &model.kernel().length_scales;
        for (((name, l), w), iw) in set
            .names()
            .iter()
            .zip(l)
            .zip(model.relative_importance())
            .zip(model.inverse_importance())
        {
            out.push(ImportanceRow {
                chemistry: *chemistry,
                feature: name.to_string(),
                length_scale: *l,
                weight: w,
                inverse_weight: iw,
            });
        }
    }
    out
}

fn check_truncation(truncation: Option<usize>) -> Result<(), HarnessError> {
    match truncation {
        Some(k) if k < crate::ecm::MIN_FIT_SAMPLES => Err(HarnessError::InvalidConfig(format!(
            "truncation keeps {k} samples; at least {} are needed",
            crate::ecm::MIN_FIT_SAMPLES
        ))),
        _ => Ok(()),
    }
}

/// Trains one GPR per chemistry on the training cells and predicts every
/// eligible cycle of the test cells.
pub fn run_rul_experiment(
    cells: &[CellHistory],
    split: &DatasetSplit,
    config: &RulConfig,
) -> Result<RulReport, HarnessError> {
    check_truncation(config.truncation)?;
    let mut ex = Extraction::new(cells, config.truncation);
    run_rul_experiment_with(&mut ex, split, config)
}

/// As [`run_rul_experiment`] on a shared extraction, whose truncation
/// overrides the configured one.
pub fn run_rul_experiment_with(
    ex: &mut Extraction<'_>,
    split: &DatasetSplit,
    config: &RulConfig,
) -> Result<RulReport, HarnessError> {
    let mut config = config.clone();
    config.truncation = ex.truncation();
    check_truncation(config.truncation)?;
    let set = config.feature_set;
    let test = rul_samples(ex, config.window_start, set, |id| {
        split.is_test(id).then_some(config.eval_stride)
    })?;
    if test.is_empty() {
        return Err(HarnessError::NoSamples("no test samples".into()));
    }
    let train = rul_samples(ex, config.window_start, set, |id| {
        split.is_train(id).then_some(config.train_stride)
    })?;
    let mut models = train_rul_models(&train, &config.gpr)?;
    // chemistries without test cells need no model
    models.retain(|c, _| test.iter().any(|s| s.chemistry == *c));
    if let Some(s) = test.iter().find(|s| !models.contains_key(&s.chemistry)) {
        return Err(HarnessError::NoSamples(format!(
            "{}: no training samples",
            s.chemistry
        )));
    }
    let predictions = predict_rul(&models, &test)?;
    let metrics = metrics_from_predictions(&predictions, set)?;
    Ok(RulReport {
        fingerprint: config.fingerprint(),
        importance: importance_rows(&models, set),
        config,
        predictions,
        metrics,
    })
}

/// Runs each of `sets` on one shared extraction.
pub fn run_feature_sets(
    cells: &[CellHistory],
    split: &DatasetSplit,
    base: &RulConfig,
    sets: &[FeatureSet],
) -> Result<Vec<RulReport>, HarnessError> {
    let mut ex = Extraction::new(cells, base.truncation);
    sets.iter()
        .map(|&set| {
            let config = RulConfig {
                feature_set: set,
                ..base.clone()
            };
            run_rul_experiment_with(&mut ex, split, &config)
        })
        .collect()
}

/// The four prediction feature sets side by side.
pub fn run_prediction_table(
    cells: &[CellHistory],
    split: &DatasetSplit,
    base: &RulConfig,
) -> Result<Vec<RulReport>, HarnessError> {
    run_feature_sets(cells, split, base, &FeatureSet::PREDICTION)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Relaxation samples kept, or window start cycle, depending on the sweep.
    pub level: String,
    /// Relaxation time covered in minutes (truncation sweeps only).
    pub minutes: Option<f64>,
    pub chemistry: Chemistry,
    pub condition: String,
    pub rmse: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub fingerprint: String,
    pub rows: Vec<SweepRow>,
    pub reports: Vec<RulReport>,
}

/// One experiment per truncation level plus the full curve (last entry).
pub fn run_truncation_sweep(
    cells: &[CellHistory],
    split: &DatasetSplit,
    base: &RulConfig,
    sample_counts: &[usize],
) -> Result<SweepReport, HarnessError> {
    check_truncation(sample_counts.iter().min().copied())?;
    let interval = cells
        .first()
        .map(|c| c.meta.protocol.sampling_interval_s)
        .unwrap_or(0.0);
    let levels: Vec<Option<usize>> = sample_counts
        .iter()
        .map(|&k| Some(k))
        .chain([None])
        .collect();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for level in levels {
        let config = RulConfig {
            truncation: level,
            ..base.clone()
        };
        let report = run_rul_experiment(cells, split, &config)?;
        for m in &report.metrics {
            rows.push(SweepRow {
                level: level.map_or("full".into(), |k| k.to_string()),
                minutes: level.map(|k| relaxation_minutes(k, interval)),
                chemistry: m.chemistry,
                condition: m.condition.clone(),
                rmse: m.rmse,
                mape: m.mape,
            });
        }
        reports.push(report);
    }
    Ok(SweepReport {
        fingerprint: fingerprint(&(base, sample_counts)),
        rows,
        reports,
    })
}

/// Time spanned by `samples` relaxation samples at `interval` seconds,
/// counted as `samples · interval` as the sampling clock ticks.
pub fn relaxation_minutes(samples: usize, interval: f64) -> f64 {
    samples as f64 * interval / 60.0
}

/// One experiment per window start cycle.
pub fn run_start_cycle_sweep(
    cells: &[CellHistory],
    split: &DatasetSplit,
    base: &RulConfig,
    starts: &[u32],
) -> Result<SweepReport, HarnessError> {
    let mut ex = Extraction::new(cells, base.truncation);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &start in starts {
        let config = RulConfig {
            window_start: start,
            ..base.clone()
        };
        let report = run_rul_experiment_with(&mut ex, split, &config)?;
        for m in &report.metrics {
            rows.push(SweepRow {
                level: start.to_string(),
                minutes: None,
                chemistry: m.chemistry,
                condition: m.condition.clone(),
                rmse: m.rmse,
                mape: m.mape,
            });
        }
        reports.push(report);
    }
    Ok(SweepReport {
        fingerprint: fingerprint(&(base, starts)),
        rows,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_minutes() {
        let m: Vec<f64> = [6, 8, 12, 16]
            .iter()
            .map(|&k| relaxation_minutes(k, 120.0))
            .collect();
        assert_eq!(m, vec![12.0, 16.0, 24.0, 32.0]);
    }

    fn row(cond: &str, rul: f64, pred: f64) -> PredictionRow {
        PredictionRow {
            cell_id: "c".into(),
            chemistry: Chemistry::Nca,
            condition: cond.into(),
            cycle: 1,
            soh: 0.9,
            eol: 100,
            rul,
            predicted: pred,
            std: 0.0,
        }
    }

    #[test]
    fn aggregate_rows_follow_conditions() {
        let rows = vec![row("B", 0.0, 3.0), row("A", 0.0, 4.0)];
        let m = metrics_from_predictions(&rows, FeatureSet::Ecm).unwrap();
        let conds: Vec<&str> = m.iter().map(|r| r.condition.as_str()).collect();
        assert_eq!(conds, vec!["A", "B", ALL_CONDITIONS]);
        assert_eq!(m[2].rmse, 12.5f64.sqrt());
    }
}
