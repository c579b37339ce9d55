//! Three-way life classification from binary GP classifiers.
//!
//! Stage 1 separates short from long life. A sample judged long goes to the
//! long-vs-medium classifier, one judged short to the short-vs-medium
//! classifier, and that second decision is final.

mod binary;
mod quadrature;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binary::{laplace_lml, BinaryGpc, GpcConfig};
pub use quadrature::{expected_sigmoid, gauss_hermite, log_sigmoid, sigmoid, HERMITE_NODES};

use crate::dataset::Chemistry;
use crate::features::Standardizer;

pub const DAG_FORMAT: &str = "batlife-life-dag";
pub const DAG_VERSION: u32 = 1;

/// SOH at which the thresholds reach zero.
pub const THRESHOLD_SOH_FLOOR: f64 = 0.8;

#[derive(Debug, Error)]
pub enum GpcError {
    #[error("OneClassOnly: training labels contain a single class")]
    OneClassOnly,
    #[error("NoConvergence: Laplace mode not found (gradient norm {0:.3e})")]
    NoConvergence(f64),
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("SingularKernel: Laplace system could not be factorized")]
    SingularKernel,
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("binary labels must be -1 or +1")]
    BadLabel,
    #[error("OutOfDomain: thresholds need soh > {THRESHOLD_SOH_FLOOR}, got {0}")]
    OutOfDomain(f64),
    #[error("invalid threshold policy: {0}")]
    InvalidPolicy(String),
    #[error("no training samples")]
    EmptyTraining,
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LifetimeLabel {
    Short,
    Medium,
    Long,
}

impl LifetimeLabel {
    pub const ALL: [LifetimeLabel; 3] = [
        LifetimeLabel::Short,
        LifetimeLabel::Medium,
        LifetimeLabel::Long,
    ];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LifetimeLabel::Short => "short",
            LifetimeLabel::Medium => "medium",
            LifetimeLabel::Long => "long",
        }
    }
}

impl fmt::Display for LifetimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LifetimeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LifetimeLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown lifetime label '{s}'"))
    }
}

/// Upper and lower cycle thresholds at SOH = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub upper_at_soh1: f64,
    pub lower_at_soh1: f64,
}

impl ThresholdPolicy {
    pub fn new(upper_at_soh1: f64, lower_at_soh1: f64) -> Result<Self, GpcError> {
        if !(upper_at_soh1 > lower_at_soh1 && lower_at_soh1 > 0.0) {
            return Err(GpcError::InvalidPolicy(format!(
                "need upper > lower > 0, got {upper_at_soh1}/{lower_at_soh1}"
            )));
        }
        Ok(Self {
            upper_at_soh1,
            lower_at_soh1,
        })
    }

    pub fn nca() -> Self {
        Self {
            upper_at_soh1: 450.0,
            lower_at_soh1: 180.0,
        }
    }

    pub fn ncm() -> Self {
        Self {
            upper_at_soh1: 800.0,
            lower_at_soh1: 200.0,
        }
    }

    /// Published policies exist for NCA and NCM only.
    pub fn for_chemistry(chemistry: Chemistry) -> Option<Self> {
        match chemistry {
            Chemistry::Nca => Some(Self::nca()),
            Chemistry::Ncm => Some(Self::ncm()),
            Chemistry::NcmNca => None,
        }
    }

    /// `(upper, lower)` scaled by `(soh - 0.8) / 0.2`.
    pub fn threshold(&self, soh: f64) -> Result<(f64, f64), GpcError> {
        if !(soh > THRESHOLD_SOH_FLOOR) {
            return Err(GpcError::OutOfDomain(soh));
        }
        let s = (soh - THRESHOLD_SOH_FLOOR) / (1.0 - THRESHOLD_SOH_FLOOR);
        Ok((self.upper_at_soh1 * s, self.lower_at_soh1 * s))
    }
}

/// Long above `upper`, short below `lower`, medium on the closed interval.
pub fn label_sample(rul: f64, (upper, lower): (f64, f64)) -> LifetimeLabel {
    if rul > upper {
        LifetimeLabel::Long
    } else if rul < lower {
        LifetimeLabel::Short
    } else {
        LifetimeLabel::Medium
    }
}

/// Anything that yields the probability of its positive class at a
/// standardized input.
pub trait BinaryClassifier {
    fn probability(&self, x: &[f64]) -> Result<f64, GpcError>;
}

impl BinaryClassifier for BinaryGpc {
    fn probability(&self, x: &[f64]) -> Result<f64, GpcError> {
        self.predict(x)
    }
}

/// A DAG node: a trained classifier, or a constant when its training pair
/// had fewer than two classes.
#[derive(Debug, Clone)]
pub enum BinaryNode {
    Gpc(Box<BinaryGpc>),
    Constant(f64),
}

impl BinaryClassifier for BinaryNode {
    fn probability(&self, x: &[f64]) -> Result<f64, GpcError> {
        match self {
            BinaryNode::Gpc(m) => m.predict(x),
            BinaryNode::Constant(p) => Ok(*p),
        }
    }
}

impl BinaryNode {
    /// Trains on `(x, positive?)` pairs, falling back to a constant when
    /// one class is missing.
    pub fn train(x: &[Vec<f64>], positive: &[bool], config: &GpcConfig) -> Result<Self, GpcError> {
        let pos = positive.iter().filter(|p| **p).count();
        if pos == 0 || pos == positive.len() {
            return Ok(BinaryNode::Constant(match (pos, positive.len()) {
                (_, 0) => 0.5,
                (0, _) => 0.0,
                _ => 1.0,
            }));
        }
        let labels: Vec<i8> = positive.iter().map(|&p| if p { 1 } else { -1 }).collect();
        Ok(BinaryNode::Gpc(Box::new(BinaryGpc::train(
            x, &labels, config,
        )?)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagDecision {
    pub label: LifetimeLabel,
    /// Stage-2 membership probability of `label`.
    pub probability: f64,
    /// Stage-1 probability of the long side.
    pub stage1_long: f64,
}

/// Two-stage classifier over one feature set and one standardizer.
#[derive(Debug, Clone)]
pub struct LifeDag<C = BinaryNode> {
    pub standardizer: Standardizer,
    /// `P(long)` against short.
    pub stage1: C,
    /// `P(long)` against medium.
    pub stage2_long: C,
    /// `P(medium)` against short.
    pub stage2_short: C,
}

impl<C: BinaryClassifier> LifeDag<C> {
    pub fn new(standardizer: Standardizer, stage1: C, stage2_long: C, stage2_short: C) -> Self {
        Self {
            standardizer,
            stage1,
            stage2_long,
            stage2_short,
        }
    }

    /// Routes a raw feature row through the graph. Every node decides at
    /// 0.5; a stage-1 tie goes to the short side and a stage-2 tie to medium.
    pub fn classify(&self, x: &[f64]) -> Result<DagDecision, GpcError> {
        if x.len() != self.standardizer.dim() {
            return Err(GpcError::DimensionMismatch {
                expected: self.standardizer.dim(),
                got: x.len(),
            });
        }
        let xs = self.standardizer.transform(x);
        let p1 = self.stage1.probability(&xs)?;
        let (label, probability) = if p1 > 0.5 {
            let p = self.stage2_long.probability(&xs)?;
            if p > 0.5 {
                (LifetimeLabel::Long, p)
            } else {
                (LifetimeLabel::Medium, 1.0 - p)
            }
        } else {
            let p = self.stage2_short.probability(&xs)?;
            if p >= 0.5 {
                (LifetimeLabel::Medium, p)
            } else {
                (LifetimeLabel::Short, 1.0 - p)
            }
        };
        Ok(DagDecision {
            label,
            probability,
            stage1_long: p1,
        })
    }
}

#[derive(Serialize, Deserialize)]
enum NodeFile {
    Gpc(binary::BinaryGpcFile),
    Constant(f64),
}

#[derive(Serialize, Deserialize)]
struct DagFile {
    format: String,
    version: u32,
    standardizer: Standardizer,
    stage1: NodeFile,
    stage2_long: NodeFile,
    stage2_short: NodeFile,
}

impl LifeDag<BinaryNode> {
    /// Fits the shared standardizer, then the three binaries in parallel,
    /// each on the samples of its two classes.
    pub fn train(
        x: &[Vec<f64>],
        labels: &[LifetimeLabel],
        config: &GpcConfig,
    ) -> Result<Self, GpcError> {
        if x.is_empty() {
            return Err(GpcError::EmptyTraining);
        }
        if x.len() != labels.len() {
            return Err(GpcError::DimensionMismatch {
                expected: x.len(),
                got: labels.len(),
            });
        }
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.transform_rows(x);
        let pair = |neg: LifetimeLabel, pos: LifetimeLabel| {
            let (rows, flags): (Vec<Vec<f64>>, Vec<bool>) = xs
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == neg || **l == pos)
                .map(|(r, l)| (r.clone(), *l == pos))
                .unzip();
            BinaryNode::train(&rows, &flags, config)
        };
        use LifetimeLabel::*;
        let (s1, (s2l, s2s)) = rayon::join(
            || pair(Short, Long),
            || rayon::join(|| pair(Medium, Long), || pair(Short, Medium)),
        );
        Ok(Self::new(standardizer, s1?, s2l?, s2s?))
    }

    pub fn to_json(&self) -> String {
        let node = |n: &BinaryNode| match n {
            BinaryNode::Gpc(m) => NodeFile::Gpc(m.to_file()),
            BinaryNode::Constant(p) => NodeFile::Constant(*p),
        };
        let file = DagFile {
            format: DAG_FORMAT.into(),
            version: DAG_VERSION,
            standardizer: self.standardizer.clone(),
            stage1: node(&self.stage1),
            stage2_long: node(&self.stage2_long),
            stage2_short: node(&self.stage2_short),
        };
        serde_json::to_string_pretty(&file).expect("dag serializes")
    }

    /// Restores a DAG; Laplace modes are recomputed.
    pub fn from_json(text: &str) -> Result<Self, GpcError> {
        let file: DagFile =
            serde_json::from_str(text).map_err(|e| GpcError::Format(e.to_string()))?;
        if file.format != DAG_FORMAT || file.version != DAG_VERSION {
            return Err(GpcError::Format(format!(
                "expected {DAG_FORMAT} v{DAG_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let node = |n: NodeFile| -> Result<BinaryNode, GpcError> {
            Ok(match n {
                NodeFile::Gpc(f) => BinaryNode::Gpc(Box::new(BinaryGpc::from_file(f)?)),
                NodeFile::Constant(p) => BinaryNode::Constant(p),
            })
        };
        Ok(Self::new(
            file.standardizer,
            node(file.stage1)?,
            node(file.stage2_long)?,
            node(file.stage2_short)?,
        ))
    }
}
