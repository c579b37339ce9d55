//! Experiment drivers: RUL regression and lifetime classification on a
//! dataset split, plus metrics and report files.

mod classify;
mod metrics;
mod report;
mod rul;

use serde::Serialize;
use thiserror::Error;

pub use classify::*;
pub use metrics::*;
pub use report::*;
pub use rul::*;

use crate::dataset::DatasetError;
use crate::features::FeatureError;
use crate::gpc::GpcError;
use crate::gpr::GprError;

/// Condition name of per-chemistry aggregate rows.
pub const ALL_CONDITIONS: &str = "ALL";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gpr(#[from] GprError),
    #[error(transparent)]
    Gpc(#[from] GpcError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("EmptyWindow: {0}")]
    EmptyWindow(String),
    #[error("NoSamples: {0}")]
    NoSamples(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Format: {0}")]
    Format(String),
}

/// 64-bit FNV-1a of the value's JSON form, as 16 hex digits.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config serializes");
    format!("{:016x}", fnv1a(text.as_bytes()))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = RulConfig::default();
        let b = RulConfig {
            window_start: 50,
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), RulConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
