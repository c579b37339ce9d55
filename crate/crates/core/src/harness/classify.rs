use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fingerprint, HarnessError, ALL_CONDITIONS};
use crate::dataset::{CellHistory, Chemistry, DatasetSplit};
use crate::features::{CellFeatures, FeatureSet, FeatureVector, WindowSpec};
use crate::gpc::{label_sample, GpcConfig, LifeDag, LifetimeLabel, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationConfig {
    pub feature_set: FeatureSet,
    /// Centre of the evaluation window.
    pub test_cycle: u32,
    /// Width of the window in cycles; samples come from
    /// `[test_cycle - w/2, test_cycle + w/2]`.
    pub window_cycles: u32,
    /// Thresholds used for every chemistry instead of the built-in ones.
    pub policy: Option<ThresholdPolicy>,
    pub gpc: GpcConfig,
    /// Also classify chemistries without built-in thresholds (they need
    /// `policy`).
    pub include_unlabelled: bool,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            feature_set: FeatureSet::NovelClass,
            test_cycle: 60,
            window_cycles: 20,
            policy: None,
            gpc: GpcConfig::default(),
            include_unlabelled: false,
        }
    }
}

impl ClassificationConfig {
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    /// Inclusive cycle range of the window.
    pub fn window(&self) -> (u32, u32) {
        let half = self.window_cycles / 2;
        (
            self.test_cycle.saturating_sub(half).max(2),
            self.test_cycle + half,
        )
    }

    pub fn policy_for(&self, chemistry: Chemistry) -> Option<ThresholdPolicy> {
        match self.policy {
            Some(p) => Some(p),
            None if self.include_unlabelled || chemistry != Chemistry::NcmNca => {
                ThresholdPolicy::for_chemistry(chemistry)
            }
            None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSample {
    pub features: FeatureVector,
    pub chemistry: Chemistry,
    pub condition: String,
    pub soh: f64,
    pub rul: f64,
    pub label: LifetimeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPredictionRow {
    pub cell_id: String,
    pub chemistry: Chemistry,
    pub condition: String,
    pub cycle: u32,
    pub soh: f64,
    pub rul: f64,
    pub truth: LifetimeLabel,
    pub predicted: LifetimeLabel,
    /// Stage-2 membership probability of `predicted`.
    pub probability: f64,
    pub stage1_long: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub chemistry: Chemistry,
    /// Cycling condition, or `ALL` for the chemistry aggregate.
    pub condition: String,
    pub feature_set: FeatureSet,
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Counts of predicted labels for one true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub chemistry: Chemistry,
    pub truth: LifetimeLabel,
    pub short: usize,
    pub medium: usize,
    pub long: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub fingerprint: String,
    pub config: ClassificationConfig,
    pub predictions: Vec<ClassPredictionRow>,
    pub accuracy: Vec<AccuracyRow>,
    pub confusion: Vec<ConfusionRow>,
}

impl ClassificationReport {
    pub fn recompute_accuracy(&self) -> Vec<AccuracyRow> {
        accuracy_from_predictions(&self.predictions, self.config.feature_set)
    }

    pub fn accuracy_for(&self, chemistry: Chemistry, condition: &str) -> Option<&AccuracyRow> {
        self.accuracy
            .iter()
            .find(|a| a.chemistry == chemistry && a.condition == condition)
    }

    /// Fraction correct over every chemistry.
    pub fn overall_accuracy(&self) -> f64 {
        let correct = self
            .predictions
            .iter()
            .filter(|p| p.truth == p.predicted)
            .count();
        correct as f64 / self.predictions.len() as f64
    }
}

pub fn accuracy_from_predictions(
    rows: &[ClassPredictionRow],
    feature_set: FeatureSet,
) -> Vec<AccuracyRow> {
    let mut groups: BTreeMap<(Chemistry, bool, String), (usize, usize)> = BTreeMap::new();
    for r in rows {
        let hit = usize::from(r.truth == r.predicted);
        for key in [
            (r.chemistry, false, r.condition.clone()),
            (r.chemistry, true, ALL_CONDITIONS.to_string()),
        ] {
            let e = groups.entry(key).or_default();
            e.0 += 1;
            e.1 += hit;
        }
    }
    groups
        .into_iter()
        .map(
            |((chemistry, _, condition), (samples, correct))| AccuracyRow {
                chemistry,
                condition,
                feature_set,
                samples,
                correct,
                accuracy: correct as f64 / samples as f64,
            },
        )
        .collect()
}

pub fn confusion_from_predictions(rows: &[ClassPredictionRow]) -> Vec<ConfusionRow> {
    let mut counts: BTreeMap<(Chemistry, usize), [usize; 3]> = BTreeMap::new();
    for r in rows {
        counts.entry((r.chemistry, r.truth.index())).or_default()[r.predicted.index()] += 1;
    }
    counts
        .into_iter()
        .map(|((chemistry, t), [short, medium, long])| ConfusionRow {
            chemistry,
            truth: LifetimeLabel::ALL[t],
            short,
            medium,
            long,
        })
        .collect()
}

fn window_for(set: FeatureSet, m: u32, window_start: u32) -> Result<WindowSpec, HarnessError> {
    Ok(
        if set == FeatureSet::Stats || set == FeatureSet::NovelPred {
            WindowSpec::fixed(window_start, m)?
        } else {
            WindowSpec::adjacent(m)?
        },
    )
}

/// Labelled samples of one cell inside the window.
fn cell_samples(
    source: &CellFeatures<'_>,
    config: &ClassificationConfig,
    policy: ThresholdPolicy,
) -> Result<Vec<ClassSample>, HarnessError> {
    let cell = source.history();
    let Some(eol) = cell.eol_cycle() else {
        return Ok(Vec::new());
    };
    let (lo, hi) = config.window();
    let Some(reference) = cell
        .cycles
        .iter()
        .map(|c| c.cycle_index)
        .find(|&c| c + 1 >= lo)
    else {
        return Ok(Vec::new());
    };
    let fixed = matches!(
        config.feature_set,
        FeatureSet::Stats | FeatureSet::NovelPred
    );
    let mut out = Vec::new();
    for rec in &cell.cycles {
        let m = rec.cycle_index;
        if m < lo || m > hi || m > eol {
            continue;
        }
        if (fixed && m <= reference) || (!fixed && cell.cycle(m - 1).is_none()) {
            continue;
        }
        let soh = rec.capacity / cell.nominal_capacity();
        let Ok(thresholds) = policy.threshold(soh) else {
            continue;
        };
        let rul = (eol - m) as f64;
        let window = window_for(config.feature_set, m, reference)?;
        out.push(ClassSample {
            features: source.assemble(&window, config.feature_set)?,
            chemistry: cell.chemistry(),
            condition: cell.condition().to_string(),
            soh,
            rul,
            label: label_sample(rul, thresholds),
        });
    }
    Ok(out)
}

fn needed_cycles(cell: &CellHistory, config: &ClassificationConfig) -> Vec<u32> {
    let (lo, hi) = config.window();
    cell.cycles
        .iter()
        .map(|c| c.cycle_index)
        .filter(|&m| m + 1 >= lo && m <= hi)
        .collect()
}

/// Labelled window samples of the cells accepted by `include`, in cell-id
/// order. Chemistries without a threshold policy are skipped.
pub fn class_samples(
    cells: &[CellHistory],
    config: &ClassificationConfig,
    include: impl Fn(&str) -> bool + Sync,
) -> Result<Vec<ClassSample>, HarnessError> {
    if config.window_cycles == 0 {
        return Err(HarnessError::InvalidConfig(
            "window must span at least one cycle".into(),
        ));
    }
    let mut sorted: Vec<&CellHistory> = cells
        .iter()
        .filter(|c| include(c.cell_id()) && config.policy_for(c.chemistry()).is_some())
        .collect();
    sorted.sort_by(|a, b| a.cell_id().cmp(b.cell_id()));
    let built: Vec<Vec<ClassSample>> = sorted
        .par_iter()
        .map(|cell| {
            let mut source = CellFeatures::new(cell, None);
            if config.feature_set.uses_ecm() {
                source.prefit(&needed_cycles(cell, config))?;
            }
            let policy = config.policy_for(cell.chemistry()).expect("filtered above");
            cell_samples(&source, config, policy)
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(built.into_iter().flatten().collect())
}

/// One DAG per chemistry present in `samples`.
pub fn train_dags(
    samples: &[ClassSample],
    config: &GpcConfig,
) -> Result<BTreeMap<Chemistry, LifeDag>, HarnessError> {
    let mut by_chem: BTreeMap<Chemistry, Vec<&ClassSample>> = BTreeMap::new();
    for s in samples {
        by_chem.entry(s.chemistry).or_default().push(s);
    }
    by_chem
        .into_iter()
        .map(|(chemistry, train)| {
            let x: Vec<Vec<f64>> = train.iter().map(|s| s.features.values.clone()).collect();
            let labels: Vec<LifetimeLabel> = train.iter().map(|s| s.label).collect();
            Ok((chemistry, LifeDag::train(&x, &labels, config)?))
        })
        .collect()
}

/// Decisions for every sample whose chemistry has a DAG.
pub fn classify_samples(
    dags: &BTreeMap<Chemistry, LifeDag>,
    samples: &[ClassSample],
) -> Result<Vec<ClassPredictionRow>, HarnessError> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let Some(dag) = dags.get(&s.chemistry) else {
            continue;
        };
        let d = dag.classify(&s.features.values)?;
        out.push(ClassPredictionRow {
            cell_id: s.features.cell_id.clone(),
            chemistry: s.chemistry,
            condition: s.condition.clone(),
            cycle: s.features.cycle_index,
            soh: s.soh,
            rul: s.rul,
            truth: s.label,
            predicted: d.label,
            probability: d.probability,
            stage1_long: d.stage1_long,
        });
    }
    Ok(out)
}

/// Trains one DAG per chemistry on training-cell samples in the window and
/// classifies the test-cell samples of the same window.
pub fn run_classification_experiment(
    cells: &[CellHistory],
    split: &DatasetSplit,
    config: &ClassificationConfig,
) -> Result<ClassificationReport, HarnessError> {
    let test = class_samples(cells, config, |id| split.is_test(id))?;
    if test.is_empty() {
        return Err(HarnessError::EmptyWindow(format!(
            "no test samples in cycles {:?}",
            config.window()
        )));
    }
    let train = class_samples(cells, config, |id| split.is_train(id))?;
    for s in &test {
        if !train.iter().any(|t| t.chemistry == s.chemistry) {
            return Err(HarnessError::EmptyWindow(format!(
                "{}: no training samples in cycles {:?}",
                s.chemistry,
                config.window()
            )));
        }
    }
    let dags = train_dags(&train, &config.gpc)?;
    let predictions = classify_samples(&dags, &test)?;
    Ok(ClassificationReport {
        fingerprint: config.fingerprint(),
        accuracy: accuracy_from_predictions(&predictions, config.feature_set),
        confusion: confusion_from_predictions(&predictions),
        config: config.clone(),
        predictions,
    })
}

/// The four classification feature sets side by side.
pub fn run_classification_table(
    cells: &[CellHistory],
    split: &DatasetSplit,
    base: &ClassificationConfig,
) -> Result<Vec<ClassificationReport>, HarnessError> {
    FeatureSet::CLASSIFICATION
        .iter()
        .map(|&set| {
            let config = ClassificationConfig {
                feature_set: set,
                ..base.clone()
            };
            run_classification_experiment(cells, split, &config)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cond: &str, truth: LifetimeLabel, predicted: LifetimeLabel) -> ClassPredictionRow {
        ClassPredictionRow {
            cell_id: "c".into(),
            chemistry: Chemistry::Nca,
            condition: cond.into(),
            cycle: 60,
            soh: 0.95,
            rul: 100.0,
            truth,
            predicted,
            probability: 0.9,
            stage1_long: 0.9,
        }
    }

    #[test]
    fn window_bounds() {
        let c = ClassificationConfig::default();
        assert_eq!(c.window(), (50, 70));
        let c = ClassificationConfig { test_cycle: 3, ..c };
        assert_eq!(c.window(), (2, 13));
    }

    #[test]
    fn accuracy_and_confusion() {
        use LifetimeLabel::*;
        let rows = vec![
            row("A", Long, Long),
            row("A", Short, Medium),
            row("B", Short, Short),
        ];
        let acc = accuracy_from_predictions(&rows, FeatureSet::NovelClass);
        assert_eq!(acc.len(), 3);
        assert_eq!(acc[0].condition, "A");
        assert_eq!(acc[0].accuracy, 0.5);
        assert_eq!(acc[2].condition, ALL_CONDITIONS);
        assert_eq!(acc[2].correct, 2);
        let cm = confusion_from_predictions(&rows);
        let short = cm.iter().find(|r| r.truth == Short).unwrap();
        assert_eq!((short.short, short.medium, short.long), (1, 1, 0));
    }

    #[test]
    fn unlabelled_chemistry_needs_policy() {
        let c = ClassificationConfig::default();
        assert!(c.policy_for(Chemistry::NcmNca).is_none());
        assert!(c.policy_for(Chemistry::Nca).is_some());
        let c = ClassificationConfig {
            policy: Some(ThresholdPolicy::nca()),
            ..c
        };
        assert!(c.policy_for(Chemistry::NcmNca).is_some());
    }
}
