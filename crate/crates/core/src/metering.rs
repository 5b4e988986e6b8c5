//! Deterministic compute-cost accounting.
//!
//! Matrix kernels report their multiply-add work into a per-thread tally
//! through [`tally`]. A [`CostMeter`] attributes tally deltas and wall-clock
//! time to run phases. Energy and emissions are derived from the FLOP total
//! with an explicit [`PowerModel`]:
//!
//! ```text
//! energy_kwh  = (flops / 1e9 * watts_per_gflops + baseline_watts * wall_seconds) / 3.6e6
//! emissions_g = energy_kwh * grid_intensity_g_per_kwh
//! ```
//!
//! Only matrix-product style kernels are metered (2·m·n·k per product).
//! Elementwise work (bias, activation, row norms) is not counted, so a dense
//! layer forward pass costs exactly `2 · batch · in · out`.

use std::cell::Cell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family a FLOP count came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Matmul,
    Covariance,
    Iterative,
}

/// Run phase a cost is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Eval,
    Probe,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Train, Phase::Eval, Phase::Probe];

    fn index(self) -> usize {
        match self {
            Phase::Train => 0,
            Phase::Eval => 1,
            Phase::Probe => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
            Phase::Probe => "probe",
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    flops: u64,
    saturated: bool,
}

thread_local! {
    static TALLY: Cell<Tally> = const { Cell::new(Tally { flops: 0, saturated: false }) };
}

/// Adds `count` FLOPs to the calling thread's tally. Saturates on overflow.
pub fn tally(_kind: OpKind, count: u64) {
    TALLY.with(|t| {
        let mut cur = t.get();
        match cur.flops.checked_add(count) {
            Some(v) => cur.flops = v,
            None => {
                cur.flops = u64::MAX;
                cur.saturated = true;
            }
        }
        t.set(cur);
    });
}

fn read_tally() -> Tally {
    TALLY.with(|t| t.get())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub flops: u64,
    pub wall_seconds: f64,
}

/// Accumulates FLOPs and wall time per phase. Single writer.
#[derive(Debug, Clone, Default)]
pub struct CostMeter {
    phases: [PhaseCost; 3],
    saturated: bool,
}

/// Immutable copy of a meter's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeterSnapshot {
    pub train: PhaseCost,
    pub eval: PhaseCost,
    pub probe: PhaseCost,
    pub saturated: bool,
}

impl MeterSnapshot {
    pub fn phase(&self, phase: Phase) -> PhaseCost {
        match phase {
            Phase::Train => self.train,
            Phase::Eval => self.eval,
            Phase::Probe => self.probe,
        }
    }

    pub fn total_flops(&self) -> u64 {
        Phase::ALL
            .iter()
            .fold(0u64, |acc, p| acc.saturating_add(self.phase(*p).flops))
    }

    pub fn total_wall_seconds(&self) -> f64 {
        Phase::ALL.iter().map(|p| self.phase(*p).wall_seconds).sum()
    }
}

impl CostMeter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an explicit FLOP count against `phase`.
    pub fn record_flops(&mut self, phase: Phase, _kind: OpKind, count: u64) {
        let slot = &mut self.phases[phase.index()];
        match slot.flops.checked_add(count) {
            Some(v) => slot.flops = v,
            None => {
                slot.flops = u64::MAX;
                self.saturated = true;
            }
        }
    }

    /// Runs `f`, attributing the FLOPs its kernels tally on this thread and
    /// its wall time to `phase`.
    pub fn measure<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        let before = read_tally();
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed().as_secs_f64();
        let after = read_tally();
        if after.saturated && !before.saturated {
            self.saturated = true;
        }
        self.record_flops(phase, OpKind::Matmul, after.flops.wrapping_sub(before.flops));
        self.phases[phase.index()].wall_seconds += elapsed;
        out
    }

    pub fn read(&self) -> MeterSnapshot {
        MeterSnapshot {
            train: self.phases[0],
            eval: self.phases[1],
            probe: self.phases[2],
            saturated: self.saturated,
        }
    }
}

/// Analytic power and carbon model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerModel {
    /// Joules spent per GFLOP of metered work.
    pub watts_per_gflops: f64,
    /// Constant draw over wall time. Non-zero values make energy depend on
    /// wall-clock time and therefore not reproducible across runs.
    pub baseline_watts: f64,
    pub grid_intensity_g_per_kwh: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            watts_per_gflops: 1.0,
            baseline_watts: 0.0,
            grid_intensity_g_per_kwh: 475.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("watts_per_gflops", self.watts_per_gflops),
            ("baseline_watts", self.baseline_watts),
            ("grid_intensity_g_per_kwh", self.grid_intensity_g_per_kwh),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(
                    "power_model",
                    format!("{name} must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub energy_kwh: f64,
    pub emissions_g: f64,
}

pub const FOOTPRINT_FORMULA: &str = "energy_kwh = (flops/1e9*watts_per_gflops + baseline_watts*wall_seconds)/3.6e6; emissions_g = energy_kwh*grid_intensity_g_per_kwh";

const JOULES_PER_KWH: f64 = 3.6e6;

pub fn estimate_footprint(snapshot: &MeterSnapshot, model: &PowerModel) -> Result<Footprint> {
    model.validate()?;
    let joules = snapshot.total_flops() as f64 / 1e9 * model.watts_per_gflops
        + model.baseline_watts * snapshot.total_wall_seconds();
    let energy_kwh = joules / JOULES_PER_KWH;
    Ok(Footprint {
        energy_kwh,
        emissions_g: energy_kwh * model.grid_intensity_g_per_kwh,
    })
}

/// Converts an energy figure directly into grams of CO2-equivalent.
pub fn emissions_for(energy_kwh: f64, model: &PowerModel) -> f64 {
    energy_kwh * model.grid_intensity_g_per_kwh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_is_zero() {
        let meter = CostMeter::new();
        let snap = meter.read();
        assert_eq!(snap.total_flops(), 0);
        let fp = estimate_footprint(&snap, &PowerModel::default()).unwrap();
        assert_eq!(fp.energy_kwh, 0.0);
        assert_eq!(fp.emissions_g, 0.0);
    }

    #[test]
    fn one_kwh_at_475() {
        let model = PowerModel {
            grid_intensity_g_per_kwh: 475.0,
            ..PowerModel::default()
        };
        assert_eq!(emissions_for(1.0, &model), 475.0);
        // 3.6e6 J == 1 kWh at 1 J/GFLOP
        let mut meter = CostMeter::new();
        meter.record_flops(Phase::Train, OpKind::Matmul, 3_600_000_000_000_000);
        let fp = estimate_footprint(&meter.read(), &model).unwrap();
        assert!((fp.energy_kwh - 1.0).abs() < 1e-12);
        assert!((fp.emissions_g - 475.0).abs() < 1e-9);
    }

    #[test]
    fn measure_attributes_thread_tally() {
        let mut meter = CostMeter::new();
        meter.measure(Phase::Eval, || tally(OpKind::Matmul, 123));
        meter.measure(Phase::Train, || tally(OpKind::Matmul, 7));
        let snap = meter.read();
        assert_eq!(snap.eval.flops, 123);
        assert_eq!(snap.train.flops, 7);
        assert_eq!(snap.total_flops(), 130);
    }

    #[test]
    fn overflow_saturates_and_flags() {
        let mut meter = CostMeter::new();
        meter.record_flops(Phase::Train, OpKind::Matmul, u64::MAX - 1);
        meter.record_flops(Phase::Train, OpKind::Matmul, 10);
        let snap = meter.read();
        assert_eq!(snap.train.flops, u64::MAX);
        assert!(snap.saturated);
    }

    #[test]
    fn negative_power_model_rejected() {
        let model = PowerModel {
            baseline_watts: -1.0,
            ..PowerModel::default()
        };
        assert!(estimate_footprint(&MeterSnapshot::default(), &model).is_err());
    }
}
