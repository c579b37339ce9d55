use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Lowest voltage accepted on a relaxation sample.
pub const MIN_RELAX_VOLTAGE: f64 = 2.0;
/// Highest voltage accepted on a relaxation sample.
pub const MAX_RELAX_VOLTAGE: f64 = 4.5;

/// Post-charge voltage relaxation sampled on a uniform grid starting at `t = 0`.
///
/// The first sample is the instant the CV phase ends, where the cutoff
/// current still flows through the ohmic resistance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationCurve {
    times: Vec<f64>,
    voltages: Vec<f64>,
    sampling_interval: f64,
    cutoff_current: f64,
}

impl RelaxationCurve {
    pub fn new(
        times: Vec<f64>,
        voltages: Vec<f64>,
        sampling_interval: f64,
        cutoff_current: f64,
    ) -> Result<Self, DatasetError> {
        if times.len() != voltages.len() {
            return Err(DatasetError::Validation(format!(
                "relaxation curve has {} times but {} voltages",
                times.len(),
                voltages.len()
            )));
        }
        if times.len() < 2 {
            return Err(DatasetError::Validation(
                "relaxation curve needs at least 2 samples".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(DatasetError::Validation(format!(
                "relaxation curve must start at t = 0, got {}",
                times[0]
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0] || !w[1].is_finite()) {
            return Err(DatasetError::Validation(
                "relaxation times must be strictly increasing".into(),
            ));
        }
        if let Some(v) = voltages
            .iter()
            .find(|v| !(MIN_RELAX_VOLTAGE..=MAX_RELAX_VOLTAGE).contains(*v))
        {
            return Err(DatasetError::Validation(format!(
                "relaxation voltage {v} V outside [{MIN_RELAX_VOLTAGE}, {MAX_RELAX_VOLTAGE}] V"
            )));
        }
        if !(sampling_interval > 0.0 && sampling_interval.is_finite()) {
            return Err(DatasetError::Validation(format!(
                "sampling interval must be positive, got {sampling_interval}"
            )));
        }
        if !(cutoff_current >= 0.0 && cutoff_current.is_finite()) {
            return Err(DatasetError::Validation(format!(
                "cutoff current must be non-negative, got {cutoff_current}"
            )));
        }
        Ok(Self {
            times,
            voltages,
            sampling_interval,
            cutoff_current,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn sampling_interval(&self) -> f64 {
        self.sampling_interval
    }

    pub fn cutoff_current(&self) -> f64 {
        self.cutoff_current
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time of the last sample, `T`.
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("curve is never empty")
    }

    /// Keeps the first `samples` points. Fails if fewer are available.
    pub fn truncated(&self, samples: usize) -> Result<Self, DatasetError> {
        if samples > self.len() {
            return Err(DatasetError::Validation(format!(
                "cannot truncate a {}-sample relaxation curve to {samples} samples",
                self.len()
            )));
        }
        Self::new(
            self.times[..samples].to_vec(),
            self.voltages[..samples].to_vec(),
            self.sampling_interval,
            self.cutoff_current,
        )
    }
}

/// Constant-current discharge trace as capacity-versus-voltage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DischargeCurve {
    capacity: Vec<f64>,
    voltage: Vec<f64>,
    duration: f64,
}

impl DischargeCurve {
    pub fn new(capacity: Vec<f64>, voltage: Vec<f64>, duration: f64) -> Result<Self, DatasetError> {
        if capacity.len() != voltage.len() || capacity.len() < 2 {
            return Err(DatasetError::Validation(
                "discharge curve needs at least 2 (capacity, voltage) pairs".into(),
            ));
        }
        if capacity.windows(2).any(|w| w[1] < w[0]) {
            return Err(DatasetError::Validation(
                "discharge capacity must be non-decreasing".into(),
            ));
        }
        if voltage.windows(2).any(|w| w[1] > w[0]) {
            return Err(DatasetError::Validation(
                "discharge voltage must be non-increasing".into(),
            ));
        }
        if capacity.iter().chain(&voltage).any(|x| !x.is_finite()) {
            return Err(DatasetError::Validation(
                "discharge curve has non-finite values".into(),
            ));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(DatasetError::Validation(format!(
                "discharge duration must be positive, got {duration}"
            )));
        }
        Ok(Self {
            capacity,
            voltage,
            duration,
        })
    }

    pub fn capacity(&self) -> &[f64] {
        &self.capacity
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    /// Total CC discharge time in seconds.
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn voltage_range(&self) -> (f64, f64) {
        (*self.voltage.last().unwrap(), self.voltage[0])
    }

    /// Capacity discharged when the terminal voltage first reaches `v`,
    /// linearly interpolated. `v` must lie within [`Self::voltage_range`].
    pub fn capacity_at(&self, v: f64) -> f64 {
        let n = self.voltage.len();
        if v >= self.voltage[0] {
            return self.capacity[0];
        }
        if v <= self.voltage[n - 1] {
            return self.capacity[n - 1];
        }
        // voltage is non-increasing: find the first index whose voltage is <= v
        let idx = self.voltage.partition_point(|&x| x > v);
        let (v_hi, v_lo) = (self.voltage[idx - 1], self.voltage[idx]);
        let (q_hi, q_lo) = (self.capacity[idx - 1], self.capacity[idx]);
        if v_lo == v {
            return q_lo;
        }
        let w = (v_hi - v) / (v_hi - v_lo);
        q_hi + w * (q_lo - q_hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_zero_start() {
        let err = RelaxationCurve::new(vec![1.0, 2.0], vec![4.1, 4.1], 1.0, 0.1).unwrap_err();
        assert!(matches!(err, DatasetError::Validation(_)));
    }

    #[test]
    fn rejects_out_of_range_voltage() {
        assert!(RelaxationCurve::new(vec![0.0, 1.0], vec![4.1, 4.6], 1.0, 0.1).is_err());
        assert!(RelaxationCurve::new(vec![0.0, 1.0], vec![1.9, 4.1], 1.0, 0.1).is_err());
    }

    #[test]
    fn rejects_non_monotone_time() {
        assert!(RelaxationCurve::new(vec![0.0, 2.0, 1.0], vec![4.1; 3], 1.0, 0.1).is_err());
    }

    #[test]
    fn capacity_interpolation_hits_knots() {
        let d = DischargeCurve::new(vec![0.0, 1.0, 2.0], vec![4.0, 3.5, 3.0], 100.0).unwrap();
        assert_eq!(d.capacity_at(3.5), 1.0);
        assert_eq!(d.capacity_at(3.75), 0.5);
        assert_eq!(d.capacity_at(4.1), 0.0);
        assert_eq!(d.capacity_at(2.9), 2.0);
    }

    #[test]
    fn plateau_returns_first_crossing() {
        let d =
            DischargeCurve::new(vec![0.0, 1.0, 2.0, 3.0], vec![4.0, 3.5, 3.5, 3.0], 1.0).unwrap();
        assert_eq!(d.capacity_at(3.5), 1.0);
    }
}
