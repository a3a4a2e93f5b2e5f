//! Scenario file schema (TOML).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::clustering::{CentroidInit, ClusterConfig};
use crate::graph::GraphSpec;
use crate::storage::{BatteryParams, BatteryState};
use crate::threephase::{Phase, Phasor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub simulation: SimConfig,
    #[serde(default)]
    pub clustering: ClusterConfig,
    #[serde(default)]
    pub init: CentroidInit,
    #[serde(default)]
    pub graph: GraphSpec,
    /// Defaults applied to every household before its own overrides.
    #[serde(default)]
    pub battery: BatteryParams,
    pub households: Vec<HouseholdSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Control step, seconds.
    pub dt_outer_s: f64,
    pub horizon: usize,
    /// Nominal RMS phase voltage, V.
    pub vm: f64,
    /// Neutral grounding impedance `[re, im]`, ohms.
    pub z_n: [f64; 2],
    pub seed: u64,
    pub balancing: bool,
    /// Standard deviation of the angle measurement noise, degrees.
    pub angle_noise_deg: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_outer_s: 60.0,
            horizon: 1440,
            vm: 230.0,
            z_n: [0.05, 0.0],
            seed: 0,
            balancing: true,
            angle_noise_deg: 2.0,
        }
    }
}

impl SimConfig {
    pub fn z_n(&self) -> Phasor {
        Phasor::new(self.z_n[0], self.z_n[1])
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt_outer_s / 3600.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdSpec {
    pub id: u32,
    #[serde(default)]
    pub bus: u32,
    /// Ground truth; only validation metrics read it.
    pub phase: Phase,
    #[serde(default = "default_true")]
    pub willing: bool,
    #[serde(default = "default_soc")]
    pub soc0: f64,
    /// Measured voltage angle in degrees. Drawn from the nominal angle plus
    /// seeded noise when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "BatteryOverride::is_empty")]
    pub battery: BatteryOverride,
}

fn default_true() -> bool {
    true
}

fn default_soc() -> f64 {
    0.5
}

/// Per-household battery fields that replace the scenario defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_cap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max_charge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max_discharge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soc_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soc_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soc_low_part: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soc_high_part: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_d: Option<f64>,
}

impl BatteryOverride {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply(&self, base: &BatteryParams) -> BatteryParams {
        BatteryParams {
            e_cap: self.e_cap.unwrap_or(base.e_cap),
            v_min: self.v_min.unwrap_or(base.v_min),
            v_max: self.v_max.unwrap_or(base.v_max),
            p_max_charge: self.p_max_charge.unwrap_or(base.p_max_charge),
            p_max_discharge: self.p_max_discharge.unwrap_or(base.p_max_discharge),
            soc_min: self.soc_min.unwrap_or(base.soc_min),
            soc_max: self.soc_max.unwrap_or(base.soc_max),
            soc_low_part: self.soc_low_part.unwrap_or(base.soc_low_part),
            soc_high_part: self.soc_high_part.unwrap_or(base.soc_high_part),
            eta_c: self.eta_c.unwrap_or(base.eta_c),
            eta_d: self.eta_d.unwrap_or(base.eta_d),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::Config(msg));
        let sim = &self.simulation;
        if !(sim.dt_outer_s > 0.0 && sim.dt_outer_s.is_finite()) {
            return fail(format!("dt_outer_s must be positive, got {}", sim.dt_outer_s));
        }
        if sim.horizon == 0 {
            return fail("horizon must be at least one step".into());
        }
        if !(sim.vm > 0.0 && sim.vm.is_finite()) {
            return fail(format!("vm must be positive, got {}", sim.vm));
        }
        if !(sim.angle_noise_deg >= 0.0 && sim.angle_noise_deg.is_finite()) {
            return fail("angle_noise_deg must be non-negative".into());
        }
        self.clustering.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if self.graph.alpha() <= 0.0 {
            return fail("graph alpha must be positive".into());
        }
        if self.households.is_empty() {
            return fail("scenario has no households".into());
        }
        let mut ids = BTreeSet::new();
        for h in &self.households {
            if !ids.insert(h.id) {
                return fail(format!("duplicate household id {}", h.id));
            }
            let params = h.battery.apply(&self.battery);
            params
                .validate()
                .map_err(|e| SimError::Config(format!("household {}: {e}", h.id)))?;
            BatteryState::new(h.soc0, &params).map_err(|e| SimError::Config(format!("household {}: {e}", h.id)))?;
        }
        Ok(())
    }

    /// Household ids per bus, in file order.
    pub fn buses(&self) -> Vec<(u32, Vec<usize>)> {
        let mut buses: Vec<(u32, Vec<usize>)> = Vec::new();
        for (idx, h) in self.households.iter().enumerate() {
            match buses.iter_mut().find(|(b, _)| *b == h.bus) {
                Some((_, members)) => members.push(idx),
                None => buses.push((h.bus, vec![idx])),
            }
        }
        buses.sort_by_key(|(b, _)| *b);
        buses
    }
}
