//! Synthetic cell histories with programmed ECM drift and capacity fade.
//!
//! Every relaxation curve is an exact evaluation of the second-order ECM
//! with the drifted parameters plus i.i.d. Gaussian voltage noise. Discharge
//! curves come from a fixed pseudo-OCV template stretched to the current
//! capacity. The generated cells carry ground truth for every downstream
//! stage.
//!
//! Per-cell randomization draws, from the cell seed:
//! - a factor `1 + s·u` (`u ~ U[-1, 1]`) on each initial resistance and
//!   capacitance, and an OCV offset of `s·u·0.2 V`;
//! - one rate factor `ρ = 1 + s·u` that scales the fade amplitude and the
//!   OCV, `R_o` and `R_e` drift rates. The `R_c`, `C_e` and `C_c` drift rates
//!   are not scaled and advance with cycle count alone.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    CellHistory, CellMeta, Chemistry, DatasetError, Phase, PhaseTrace, Protocol, DEFAULT_SOH_EOL,
};
use crate::ecm::{predict_relaxation, EcmParams};

/// Knots of the pseudo-OCV discharge template.
pub const TEMPLATE_KNOTS: usize = 1000;
const OCV_SPREAD_V: f64 = 0.2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("DriftUnderflow: {0}")]
    DriftUnderflow(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Per-cycle drift of the six ECM parameters.
///
/// `ocv` is additive in volts per cycle; the others are fractional per cycle,
/// so `R_o(m) = R_o(0)·(1 + r_o·m)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EcmDrift {
    pub ocv: f64,
    pub r_o: f64,
    pub r_e: f64,
    pub c_e: f64,
    pub r_c: f64,
    pub c_c: f64,
}

/// Capacity fade `q(m) = q0·(1 - a·(m/m_ref)^b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadeLaw {
    pub a: f64,
    pub b: f64,
    pub m_ref: f64,
}

impl FadeLaw {
    pub fn fraction(&self, m: f64, rate: f64) -> f64 {
        1.0 - self.a * rate * (m / self.m_ref).powf(self.b)
    }

    /// Cycle (real-valued) at which the capacity fraction reaches `soh`.
    pub fn cycle_at(&self, soh: f64, rate: f64) -> f64 {
        self.m_ref * ((1.0 - soh) / (self.a * rate)).powf(1.0 / self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    pub initial: EcmParams,
    pub drift: EcmDrift,
    pub fade: FadeLaw,
    /// Standard deviation of the relaxation voltage noise, V.
    pub noise_sigma: f64,
    /// Fractional per-cell randomization of initial values and drift rates.
    pub cell_spread: f64,
    pub seed: u64,
}

/// Sampling and current settings of the simulated test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingProtocol {
    pub sampling_interval_s: f64,
    pub rest_duration_s: f64,
    pub nominal_capacity_ah: f64,
    pub cutoff_current_a: f64,
    pub charge_current_a: f64,
    pub discharge_current_a: f64,
    pub lower_cutoff_v: f64,
    pub upper_cutoff_v: f64,
    /// Rows emitted per discharge.
    pub discharge_points: usize,
}

impl SamplingProtocol {
    /// 2-min sampling over 30-min rests, 3.5 Ah, 2.65-4.2 V, 0.5C/1C.
    pub fn nca_like() -> Self {
        Self {
            sampling_interval_s: 120.0,
            rest_duration_s: 1800.0,
            nominal_capacity_ah: 3.5,
            cutoff_current_a: 0.175,
            charge_current_a: 1.75,
            discharge_current_a: 3.5,
            lower_cutoff_v: 2.65,
            upper_cutoff_v: 4.2,
            discharge_points: 200,
        }
    }

    /// As [`Self::nca_like`] with a 2.5 V lower cutoff.
    pub fn ncm_like() -> Self {
        Self {
            lower_cutoff_v: 2.5,
            ..Self::nca_like()
        }
    }

    /// 30-s sampling over 60-min rests, 2.5 Ah, 2.5-4.2 V.
    pub fn ncm_nca_like() -> Self {
        Self {
            sampling_interval_s: 30.0,
            rest_duration_s: 3600.0,
            nominal_capacity_ah: 2.5,
            cutoff_current_a: 0.125,
            charge_current_a: 1.25,
            discharge_current_a: 2.5,
            lower_cutoff_v: 2.5,
            upper_cutoff_v: 4.2,
            discharge_points: 200,
        }
    }

    pub fn for_chemistry(chemistry: Chemistry) -> Self {
        match chemistry {
            Chemistry::Nca => Self::nca_like(),
            Chemistry::Ncm => Self::ncm_like(),
            Chemistry::NcmNca => Self::ncm_nca_like(),
        }
    }

    fn relaxation_times(&self) -> Vec<f64> {
        let n = (self.rest_duration_s / self.sampling_interval_s + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| k as f64 * self.sampling_interval_s)
            .collect()
    }
}

/// Normalized pseudo-OCV shape `g(x)` on `x ∈ [0, 1]` (depth of discharge),
/// strictly decreasing from 0.92 to 0.
fn template_shape(x: f64) -> f64 {
    0.92 - 0.55 * x - 0.37 * x.powi(8)
}

/// Piecewise-linear discharge template over [`TEMPLATE_KNOTS`] knots.
#[derive(Debug, Clone)]
pub struct DischargeTemplate {
    knots: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl DischargeTemplate {
    pub fn new(lower_cutoff_v: f64, upper_cutoff_v: f64) -> Self {
        let knots = (0..TEMPLATE_KNOTS)
            .map(|k| template_shape(k as f64 / (TEMPLATE_KNOTS - 1) as f64))
            .collect();
        Self {
            knots,
            lower: lower_cutoff_v,
            upper: upper_cutoff_v,
        }
    }

    /// Terminal voltage at depth of discharge `x ∈ [0, 1]`.
    pub fn voltage(&self, x: f64) -> f64 {
        let pos = x.clamp(0.0, 1.0) * (TEMPLATE_KNOTS - 1) as f64;
        let k = (pos.floor() as usize).min(TEMPLATE_KNOTS - 2);
        let w = pos - k as f64;
        let g = self.knots[k] + w * (self.knots[k + 1] - self.knots[k]);
        self.lower + (self.upper - self.lower) * g
    }
}

/// Per-cell realization of a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDraw {
    pub initial: EcmParams,
    pub rate: f64,
}

impl DriftProfile {
    pub fn validate(&self, horizon: u32) -> Result<(), SimError> {
        let p = &self.initial;
        if [p.r_o, p.r_e, p.c_e, p.r_c, p.c_c]
            .iter()
            .any(|x| !(*x > 0.0))
        {
            return Err(SimError::InvalidProfile(
                "initial R and C must be positive".into(),
            ));
        }
        if !(self.fade.a > 0.0 && self.fade.b > 0.0 && self.fade.m_ref > 0.0) {
            return Err(SimError::InvalidProfile(
                "fade needs a, b, m_ref > 0".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) || !(0.0..1.0).contains(&self.cell_spread) {
            return Err(SimError::InvalidProfile(
                "noise_sigma must be >= 0 and cell_spread in [0, 1)".into(),
            ));
        }
        // worst case over the spread: rate factor at its extreme
        let worst = 1.0 + self.cell_spread;
        let d = &self.drift;
        for (name, rate, scaled) in [
            ("r_o", d.r_o, true),
            ("r_e", d.r_e, true),
            ("c_e", d.c_e, false),
            ("r_c", d.r_c, false),
            ("c_c", d.c_c, false),
        ] {
            let r = if scaled { rate * worst } else { rate };
            if 1.0 + r * horizon as f64 <= 0.0 {
                return Err(SimError::DriftUnderflow(format!(
                    "{name} drift {rate}/cycle turns non-positive before cycle {horizon}"
                )));
            }
        }
        if self.fade.fraction(horizon as f64, worst) <= 0.0 {
            return Err(SimError::DriftUnderflow(format!(
                "capacity fades to zero before cycle {horizon}"
            )));
        }
        Ok(())
    }

    /// Draws the per-cell initial parameters and rate factor from `seed`.
    pub fn draw(&self) -> CellDraw {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let s = self.cell_spread;
        let mut u = || rng.random_range(-1.0..=1.0);
        let p = self.initial;
        let initial = EcmParams {
            ocv: p.ocv + s * u() * OCV_SPREAD_V,
            r_o: p.r_o * (1.0 + s * u()),
            r_e: p.r_e * (1.0 + s * u()),
            c_e: p.c_e * (1.0 + s * u()),
            r_c: p.r_c * (1.0 + s * u()),
            c_c: p.c_c * (1.0 + s * u()),
        };
        CellDraw {
            initial,
            rate: 1.0 + s * u(),
        }
    }

    /// ECM parameters at cycle `m` for a drawn cell.
    pub fn params_at(&self, draw: &CellDraw, m: u32) -> EcmParams {
        let (p, d, rho, m) = (draw.initial, self.drift, draw.rate, m as f64);
        EcmParams {
            ocv: p.ocv + d.ocv * rho * m,
            r_o: p.r_o * (1.0 + d.r_o * rho * m),
            r_e: p.r_e * (1.0 + d.r_e * rho * m),
            c_e: p.c_e * (1.0 + d.c_e * m),
            r_c: p.r_c * (1.0 + d.r_c * m),
            c_c: p.c_c * (1.0 + d.c_c * m),
        }
    }
}

/// Identity of a simulated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLabel {
    pub cell_id: String,
    pub chemistry: Chemistry,
    pub condition: String,
}

/// Simulates `horizon` cycles of one cell.
pub fn simulate_cell(
    label: &CellLabel,
    profile: &DriftProfile,
    protocol: &SamplingProtocol,
    horizon: u32,
) -> Result<CellHistory, SimError> {
    if horizon == 0 {
        return Err(SimError::InvalidProfile(
            "horizon must be at least 1 cycle".into(),
        ));
    }
    profile.validate(horizon)?;
    let draw = profile.draw();
    // noise stream is separate from the draw stream so that the draw does not
    // depend on the noise level
    let mut noise_rng = ChaCha8Rng::seed_from_u64(profile.seed ^ 0x5eed_0f_a015e);
    let noise = Normal::new(0.0, profile.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| SimError::InvalidProfile(e.to_string()))?;
    let template = DischargeTemplate::new(protocol.lower_cutoff_v, protocol.upper_cutoff_v);
    let times = protocol.relaxation_times();

    let mut raw = Vec::with_capacity(horizon as usize);
    for m in 1..=horizon {
        let params = profile.params_at(&draw, m);
        let capacity = protocol.nominal_capacity_ah * profile.fade.fraction(m as f64, draw.rate);
        let mut phases = BTreeMap::new();

        let charge_s = capacity / protocol.charge_current_a * 3600.0;
        let mut charge = PhaseTrace::default();
        charge.push(0.0, template.voltage(1.0), protocol.charge_current_a, 0.0);
        charge.push(
            charge_s,
            protocol.upper_cutoff_v,
            protocol.cutoff_current_a,
            capacity,
        );
        phases.insert(Phase::Charge, charge);

        let clean = predict_relaxation(&params, protocol.cutoff_current_a, &times);
        let mut rest = PhaseTrace::default();
        for (&t, &v) in times.iter().zip(&clean) {
            let v = if profile.noise_sigma > 0.0 {
                v + noise.sample(&mut noise_rng)
            } else {
                v
            };
            rest.push(t, v, 0.0, 0.0);
        }
        phases.insert(Phase::RestPostCharge, rest);

        let discharge_s = capacity / protocol.discharge_current_a * 3600.0;
        let mut dis = PhaseTrace::default();
        let n = protocol.discharge_points.max(2);
        for k in 0..n {
            let x = k as f64 / (n - 1) as f64;
            dis.push(
                x * discharge_s,
                template.voltage(x),
                -protocol.discharge_current_a,
                x * capacity,
            );
        }
        phases.insert(Phase::Discharge, dis);

        let v_end = template.voltage(1.0);
        let mut rest2 = PhaseTrace::default();
        rest2.push(0.0, v_end, 0.0, 0.0);
        rest2.push(protocol.rest_duration_s, v_end + 0.35, 0.0, 0.0);
        phases.insert(Phase::RestPostDischarge, rest2);

        raw.push((m, phases));
    }
    let meta = CellMeta {
        cell_id: label.cell_id.clone(),
        chemistry: label.chemistry,
        condition: label.condition.clone(),
        nominal_capacity_ah: protocol.nominal_capacity_ah,
        protocol: Protocol {
            sampling_interval_s: protocol.sampling_interval_s,
            cutoff_current_a: protocol.cutoff_current_a,
            rest_duration_s: Some(protocol.rest_duration_s),
        },
    };
    Ok(CellHistory::from_phases(meta, raw, DEFAULT_SOH_EOL)?)
}

/// One cycling condition of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub condition: String,
    /// Template profile; its seed is replaced per cell.
    pub profile: DriftProfile,
}

/// A set of conditions, each simulated for `cells_per_condition` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub chemistry: Chemistry,
    pub protocol: SamplingProtocol,
    pub conditions: Vec<ConditionSpec>,
    pub cells_per_condition: usize,
    /// Upper bound on simulated cycles.
    pub horizon: u32,
    /// Cycles simulated past the expected end of life before stopping.
    pub cycles_after_eol: u32,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn cell_seed(&self, condition: usize, cell: usize) -> u64 {
        // splitmix-style mixing keeps neighbouring seeds unrelated
        let mut z = self.seed.wrapping_add(
            0x9E37_79B9_7F4A_7C15u64.wrapping_mul(1 + (condition as u64) * 1000 + cell as u64),
        );
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn cell_id(&self, condition: usize, cell: usize) -> String {
        let cond = self.conditions[condition]
            .condition
            .replace(['/', '.'], "_")
            .replace('-', "_");
        format!("{}_{}_{:02}", self.chemistry, cond, cell + 1)
    }

    /// Simulates every cell. Cells run in parallel; output order is
    /// condition-major, then cell index.
    pub fn simulate(&self) -> Result<Vec<CellHistory>, SimError> {
        let jobs: Vec<(usize, usize)> = (0..self.conditions.len())
            .flat_map(|c| (0..self.cells_per_condition).map(move |k| (c, k)))
            .collect();
        jobs.par_iter()
            .map(|&(c, k)| {
                let spec = &self.conditions[c];
                let profile = DriftProfile {
                    seed: self.cell_seed(c, k),
                    ..spec.profile.clone()
                };
                let rate = profile.draw().rate;
                let eol = profile.fade.cycle_at(DEFAULT_SOH_EOL, rate).ceil() as u32;
                let horizon = self.horizon.min(eol.saturating_add(self.cycles_after_eol));
                let label = CellLabel {
                    cell_id: self.cell_id(c, k),
                    chemistry: self.chemistry,
                    condition: spec.condition.clone(),
                };
                simulate_cell(&label, &profile, &self.protocol, horizon)
            })
            .collect()
    }
}

/// Base ECM parameters shared by the built-in synthetic conditions.
pub fn reference_initial() -> EcmParams {
    EcmParams {
        ocv: 4.17,
        r_o: 0.10,
        r_e: 0.05,
        c_e: 3000.0,
        r_c: 0.12,
        c_c: 8000.0,
    }
}

/// Built-in profile for a condition whose median cell reaches end of life
/// after `lifetime` cycles.
///
/// Fade is linear (`b = 1`) with 20 % loss at `lifetime`. Over that life the
/// OCV drops 40 mV, `R_o` grows 30 % and `R_e` 50 %, all scaled by the cell
/// rate factor. `R_c` grows 0.1 %/cycle and both capacitances shrink
/// 0.02 %/cycle for every cell.
pub fn lifetime_profile(lifetime: f64, noise_sigma: f64, cell_spread: f64) -> DriftProfile {
    DriftProfile {
        initial: reference_initial(),
        drift: EcmDrift {
            ocv: -0.04 / lifetime,
            r_o: 0.3 / lifetime,
            r_e: 0.5 / lifetime,
            c_e: -2e-4,
            r_c: 1e-3,
            c_c: -2e-4,
        },
        fade: FadeLaw {
            a: 0.2,
            b: 1.0,
            m_ref: lifetime,
        },
        noise_sigma,
        cell_spread,
        seed: 0,
    }
}

/// Built-in conditions: `n` temperatures starting at 25 °C in 10 °C steps,
/// with lifetimes cycling through 200, 500 and 350 cycles. Initial
/// resistances fall by 3 %/°C above 25 °C, so each condition has its own
/// relaxation signature.
pub fn default_conditions(n: usize, noise_sigma: f64, cell_spread: f64) -> Vec<ConditionSpec> {
    const LIFETIMES: [f64; 3] = [200.0, 500.0, 350.0];
    (0..n)
        .map(|k| {
            let temperature = 25 + 10 * k;
            let lifetime = LIFETIMES[k % 3] * (1.0 + 0.1 * (k / 3) as f64);
            let mut profile = lifetime_profile(lifetime, noise_sigma, cell_spread);
            let f = (-0.03 * (temperature as f64 - 25.0)).exp();
            profile.initial.r_o *= f;
            profile.initial.r_e *= f;
            profile.initial.r_c *= f;
            ConditionSpec {
                condition: format!("CY{temperature}-0.5/1"),
                profile,
            }
        })
        .collect()
}

/// Lifetimes of the classification benchmark, one per condition. At cycle
/// 60 they fall clearly short, medium and long under the NCA thresholds.
pub const CLASSIFICATION_LIFETIMES: [f64; 3] = [130.0, 300.0, 650.0];

impl SyntheticDataset {
    /// Mixed-condition RUL benchmark: three conditions of five NCA-like
    /// cells, 0.1 mV noise and 10 % cell-to-cell spread.
    pub fn rul_benchmark(seed: u64) -> Self {
        Self {
            chemistry: Chemistry::Nca,
            protocol: SamplingProtocol::nca_like(),
            conditions: default_conditions(3, 1e-4, 0.1),
            cells_per_condition: 5,
            horizon: 2000,
            cycles_after_eol: 5,
            seed,
        }
    }

    /// Lifetime classification benchmark: one condition per class of the
    /// NCA thresholds, simulated to end of life so labels are exact.
    pub fn classification_benchmark(cells_per_condition: usize, seed: u64) -> Self {
        let conditions = CLASSIFICATION_LIFETIMES
            .iter()
            .zip(default_conditions(3, 1e-4, 0.1))
            .map(|(&lifetime, spec)| {
                let initial = spec.profile.initial;
                let mut profile = lifetime_profile(lifetime, 1e-4, 0.1);
                profile.initial = initial;
                ConditionSpec {
                    condition: spec.condition,
                    profile,
                }
            })
            .collect();
        Self {
            chemistry: Chemistry::Nca,
            protocol: SamplingProtocol::nca_like(),
            conditions,
            cells_per_condition,
            horizon: 2000,
            cycles_after_eol: 5,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm;

    fn label() -> CellLabel {
        CellLabel {
            cell_id: "sim".into(),
            chemistry: Chemistry::Nca,
            condition: "CY25-0.5/1".into(),
        }
    }

    fn still_profile() -> DriftProfile {
        DriftProfile {
            initial: reference_initial(),
            drift: EcmDrift::default(),
            fade: FadeLaw {
                a: 0.2,
                b: 1.0,
                m_ref: 500.0,
            },
            noise_sigma: 0.0,
            cell_spread: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn zero_drift_gives_identical_relaxation() {
        let h = simulate_cell(
            &label(),
            &still_profile(),
            &SamplingProtocol::nca_like(),
            20,
        )
        .unwrap();
        let first = &h.cycles[0].relaxation;
        assert!(h.cycles.iter().all(|c| c.relaxation == *first));
        assert_eq!(first.len(), 16);
    }

    #[test]
    fn ocv_drift_is_exact() {
        let mut p = still_profile();
        p.drift.ocv = -2e-5;
        let draw = p.draw();
        let at500 = p.params_at(&draw, 500);
        assert!((at500.ocv - (p.initial.ocv - 0.01)).abs() < 1e-12);
    }

    #[test]
    fn programmed_fade_sets_eol() {
        let h = simulate_cell(
            &label(),
            &still_profile(),
            &SamplingProtocol::nca_like(),
            520,
        )
        .unwrap();
        let eol = h.eol_cycle().unwrap();
        assert!((499..=501).contains(&eol), "eol {eol}");
    }

    #[test]
    fn capacity_strictly_decreasing() {
        let h = simulate_cell(
            &label(),
            &still_profile(),
            &SamplingProtocol::nca_like(),
            50,
        )
        .unwrap();
        assert!(h.cycles.windows(2).all(|w| w[1].capacity < w[0].capacity));
    }

    #[test]
    fn same_seed_same_cell() {
        let mut p = lifetime_profile(300.0, 1e-3, 0.1);
        p.seed = 11;
        let a = simulate_cell(&label(), &p, &SamplingProtocol::nca_like(), 30).unwrap();
        let b = simulate_cell(&label(), &p, &SamplingProtocol::nca_like(), 30).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn underflowing_drift_is_rejected() {
        let mut p = still_profile();
        p.drift.r_e = -0.01;
        let err = simulate_cell(&label(), &p, &SamplingProtocol::nca_like(), 200).unwrap_err();
        assert!(matches!(err, SimError::DriftUnderflow(_)));
    }

    #[test]
    fn noiseless_refit_recovers_drifted_parameters() {
        let mut p = lifetime_profile(300.0, 0.0, 0.1);
        p.seed = 5;
        let h = simulate_cell(&label(), &p, &SamplingProtocol::nca_like(), 300).unwrap();
        let draw = p.draw();
        for m in [1, 150, 300] {
            let fit = ecm::fit(&h.cycle(m).unwrap().relaxation).unwrap();
            let err = fit.params.max_relative_error(&p.params_at(&draw, m));
            assert!(err < 0.01, "cycle {m}: {err}");
        }
    }

    #[test]
    fn template_is_monotone_and_spans_window() {
        let t = DischargeTemplate::new(2.65, 4.2);
        let vs: Vec<f64> = (0..=500).map(|k| t.voltage(k as f64 / 500.0)).collect();
        assert!(vs.windows(2).all(|w| w[1] < w[0]));
        assert!((vs[500] - 2.65).abs() < 1e-12);
    }
}
