//! Household battery: terminal voltage, current reference, SoC bookkeeping
//! under power and energy limits, and participation eligibility.
//!
//! Power is discharge-positive (kW); time steps are in hours.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatteryError {
    #[error("state of charge {0} outside [0, 1]")]
    SocOutOfRange(f64),
    #[error("terminal voltage {0} V is not positive")]
    NonPositiveVoltage(f64),
    #[error("invalid battery parameters: {0}")]
    InvalidParams(String),
    #[error("initial state of charge {soc} outside hard limits [{min}, {max}]")]
    InitialSoc { soc: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    /// kWh.
    pub e_cap: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// kW, magnitude.
    pub p_max_charge: f64,
    /// kW, magnitude.
    pub p_max_discharge: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_low_part: f64,
    pub soc_high_part: f64,
    pub eta_c: f64,
    pub eta_d: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            e_cap: 10.0,
            v_min: 44.0,
            v_max: 54.0,
            p_max_charge: 5.0,
            p_max_discharge: 5.0,
            soc_min: 0.1,
            soc_max: 0.95,
            soc_low_part: 0.25,
            soc_high_part: 0.85,
            eta_c: 0.95,
            eta_d: 0.95,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), BatteryError> {
        let fail = |msg: &str| Err(BatteryError::InvalidParams(msg.to_string()));
        let all = [
            self.e_cap,
            self.v_min,
            self.v_max,
            self.p_max_charge,
            self.p_max_discharge,
            self.soc_min,
            self.soc_max,
            self.soc_low_part,
            self.soc_high_part,
            self.eta_c,
            self.eta_d,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return fail("non-finite value");
        }
        if self.e_cap <= 0.0 {
            return fail("e_cap must be positive");
        }
        if self.v_min >= self.v_max || self.v_min <= 0.0 {
            return fail("need 0 < v_min < v_max");
        }
        if self.p_max_charge < 0.0 || self.p_max_discharge < 0.0 {
            return fail("power limits must be non-negative");
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return fail("need 0 <= soc_min < soc_max <= 1");
        }
        if !(self.soc_min <= self.soc_low_part
            && self.soc_low_part <= self.soc_high_part
            && self.soc_high_part <= self.soc_max)
        {
            return fail("participation band must sit inside the hard limits");
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0 && self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return fail("efficiencies must be in (0, 1]");
        }
        Ok(())
    }

    /// Largest discharge power the SoC floor allows over `dt` hours.
    fn soc_discharge_limit(&self, soc: f64, dt: f64) -> f64 {
        ((soc - self.soc_min) * self.e_cap * self.eta_d / dt).max(0.0)
    }

    /// Largest charge power (magnitude) the SoC ceiling allows over `dt` hours.
    fn soc_charge_limit(&self, soc: f64, dt: f64) -> f64 {
        ((self.soc_max - soc) * self.e_cap / (self.eta_c * dt)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
    /// Terminal voltage, V.
    pub v_b: f64,
}

impl BatteryState {
    pub fn new(soc: f64, params: &BatteryParams) -> Result<Self, BatteryError> {
        if !(params.soc_min..=params.soc_max).contains(&soc) {
            return Err(BatteryError::InitialSoc {
                soc,
                min: params.soc_min,
                max: params.soc_max,
            });
        }
        Ok(Self {
            soc,
            v_b: terminal_voltage(soc, params)?,
        })
    }
}

/// Linear open-circuit voltage between `v_min` (empty) and `v_max` (full).
pub fn terminal_voltage(soc: f64, params: &BatteryParams) -> Result<f64, BatteryError> {
    if !(0.0..=1.0).contains(&soc) {
        return Err(BatteryError::SocOutOfRange(soc));
    }
    Ok(params.v_min + (params.v_max - params.v_min) * soc)
}

/// DC current reference in amperes for a power set-point in kW.
pub fn current_reference(p_b: f64, state: &BatteryState) -> Result<f64, BatteryError> {
    if state.v_b <= 0.0 || !state.v_b.is_finite() {
        return Err(BatteryError::NonPositiveVoltage(state.v_b));
    }
    Ok(1000.0 * p_b / state.v_b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOutcome {
    pub state: BatteryState,
    /// Power actually delivered, kW, same sign as the command.
    pub p_actual: f64,
    /// Unserved magnitude, kW.
    pub deficit: f64,
}

/// Advances the battery by `dt` hours under command `p_cmd`.
///
/// The command is clamped to the power limits first and then to what keeps
/// the SoC inside `[soc_min, soc_max]`.
pub fn apply_power(state: &BatteryState, p_cmd: f64, dt: f64, params: &BatteryParams) -> PowerOutcome {
    debug_assert!(dt > 0.0);
    let mut p = p_cmd.clamp(-params.p_max_charge, params.p_max_discharge);
    let soc = if p > 0.0 {
        let limit = params.soc_discharge_limit(state.soc, dt);
        if p >= limit {
            p = limit;
            params.soc_min.min(state.soc)
        } else {
            state.soc - p * dt / (params.e_cap * params.eta_d)
        }
    } else if p < 0.0 {
        let limit = params.soc_charge_limit(state.soc, dt);
        if -p >= limit {
            p = -limit;
            params.soc_max.max(state.soc)
        } else {
            state.soc - p * dt * params.eta_c / params.e_cap
        }
    } else {
        state.soc
    };
    let soc = soc.clamp(params.soc_min, params.soc_max);
    PowerOutcome {
        state: BatteryState {
            soc,
            v_b: params.v_min + (params.v_max - params.v_min) * soc,
        },
        p_actual: p,
        deficit: p_cmd.abs() - p.abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eligibility {
    pub eligible: bool,
    /// kW magnitude available for charging this step.
    pub headroom_charge: f64,
    /// kW available for discharging this step.
    pub headroom_discharge: f64,
}

impl Eligibility {
    /// Headroom in the direction of a signed command.
    pub fn headroom_for(&self, p: f64) -> f64 {
        if p >= 0.0 {
            self.headroom_discharge
        } else {
            self.headroom_charge
        }
    }
}

/// A household takes part only if it opted in and its SoC sits inside the
/// participation band. Ineligible households report zero headroom.
pub fn eligibility(state: &BatteryState, willing: bool, dt: f64, params: &BatteryParams) -> Eligibility {
    let in_band = (params.soc_low_part..=params.soc_high_part).contains(&state.soc);
    if !(willing && in_band) {
        return Eligibility {
            eligible: false,
            headroom_charge: 0.0,
            headroom_discharge: 0.0,
        };
    }
    Eligibility {
        eligible: true,
        headroom_charge: params.p_max_charge.min(params.soc_charge_limit(state.soc, dt)),
        headroom_discharge: params.p_max_discharge.min(params.soc_discharge_limit(state.soc, dt)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lossless() -> BatteryParams {
        BatteryParams {
            eta_c: 1.0,
            eta_d: 1.0,
            soc_min: 0.2,
            ..BatteryParams::default()
        }
    }

    #[test]
    fn voltage_curve() {
        let p = BatteryParams::default();
        assert_eq!(terminal_voltage(1.0, &p), Ok(54.0));
        assert_eq!(terminal_voltage(0.5, &p), Ok(49.0));
        assert_eq!(terminal_voltage(0.0, &p), Ok(44.0));
        assert_eq!(terminal_voltage(1.5, &p), Err(BatteryError::SocOutOfRange(1.5)));
        assert!(terminal_voltage(-0.1, &p).is_err());
    }

    #[test]
    fn current_sign_follows_power() {
        let s = BatteryState { soc: 0.5, v_b: 49.0 };
        assert!((current_reference(4.9, &s).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(current_reference(0.0, &s), Ok(0.0));
        assert!((current_reference(-4.9, &s).unwrap() + 100.0).abs() < 1e-12);
        let dead = BatteryState { soc: 0.5, v_b: 0.0 };
        assert_eq!(current_reference(1.0, &dead), Err(BatteryError::NonPositiveVoltage(0.0)));
    }

    #[test]
    fn plain_discharge() {
        let p = lossless();
        let s = BatteryState::new(0.5, &p).unwrap();
        let out = apply_power(&s, 5.0, 0.1, &p);
        assert!((out.state.soc - 0.45).abs() < 1e-12);
        assert_eq!(out.p_actual, 5.0);
        assert_eq!(out.deficit, 0.0);
    }

    #[test]
    fn soc_floor_binds() {
        let p = lossless();
        let s = BatteryState::new(0.21, &p).unwrap();
        let out = apply_power(&s, 5.0, 1.0, &p);
        assert!((out.p_actual - 0.1).abs() < 1e-12);
        assert_eq!(out.state.soc, 0.2);
        assert!((out.deficit - 4.9).abs() < 1e-12);
    }

    #[test]
    fn power_limit_binds() {
        let p = BatteryParams::default();
        let s = BatteryState::new(0.5, &p).unwrap();
        let out = apply_power(&s, 100.0, 1.0 / 60.0, &p);
        assert!(out.p_actual <= 5.0);
        assert_eq!(out.deficit, 95.0);
        let out = apply_power(&s, -100.0, 1.0 / 60.0, &p);
        assert_eq!(out.p_actual, -5.0);
    }

    #[test]
    fn charging_uses_charge_efficiency() {
        let p = BatteryParams { eta_c: 0.9, ..BatteryParams::default() };
        let s = BatteryState::new(0.5, &p).unwrap();
        let out = apply_power(&s, -2.0, 1.0, &p);
        assert!((out.state.soc - (0.5 + 2.0 * 0.9 / 10.0)).abs() < 1e-12);
        let full = BatteryState::new(p.soc_max, &p).unwrap();
        let out = apply_power(&full, -2.0, 1.0, &p);
        assert_eq!((out.p_actual, out.state.soc), (0.0, p.soc_max));
    }

    #[test]
    fn eligibility_rules() {
        let p = BatteryParams {
            soc_low_part: 0.3,
            soc_high_part: 0.8,
            ..BatteryParams::default()
        };
        let mid = BatteryState::new(0.5, &p).unwrap();
        let e = eligibility(&mid, true, 1.0 / 60.0, &p);
        assert!(e.eligible);
        assert_eq!((e.headroom_charge, e.headroom_discharge), (5.0, 5.0));

        let e = eligibility(&mid, false, 1.0 / 60.0, &p);
        assert!(!e.eligible);
        assert_eq!((e.headroom_charge, e.headroom_discharge), (0.0, 0.0));

        let high = BatteryState::new(0.9, &p).unwrap();
        assert!(!eligibility(&high, true, 1.0 / 60.0, &p).eligible);

        // Over a full hour the SoC distance limits headroom below the rating.
        let e = eligibility(&mid, true, 1.0, &p);
        assert!((e.headroom_discharge - 0.4 * 10.0 * 0.95).abs() < 1e-12);
        assert!(e.headroom_discharge < 5.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(BatteryParams::default().validate().is_ok());
        let bad = BatteryParams { soc_low_part: 0.05, ..BatteryParams::default() };
        assert!(bad.validate().is_err());
        let bad = BatteryParams { v_min: 60.0, ..BatteryParams::default() };
        assert!(bad.validate().is_err());
        let bad = BatteryParams { e_cap: 0.0, ..BatteryParams::default() };
        assert!(bad.validate().is_err());
        assert!(BatteryState::new(0.05, &BatteryParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn soc_stays_inside_limits(
            soc0 in 0.1f64..0.95,
            cmds in proptest::collection::vec((-8.0f64..8.0, 0.001f64..2.0), 1..200),
        ) {
            let p = BatteryParams::default();
            let mut s = BatteryState::new(soc0, &p).unwrap();
            for (cmd, dt) in cmds {
                let out = apply_power(&s, cmd, dt, &p);
                prop_assert!(out.state.soc >= p.soc_min && out.state.soc <= p.soc_max);
                prop_assert!(out.p_actual == 0.0 || out.p_actual.signum() == cmd.signum());
                prop_assert!(out.p_actual.abs() <= cmd.abs());
                prop_assert!(out.deficit >= 0.0);
                s = out.state;
            }
        }

        #[test]
        fn lossless_energy_closes(soc0 in 0.2f64..0.95, cmd in -8.0f64..8.0, dt in 0.001f64..2.0) {
            let p = lossless();
            let s = BatteryState::new(soc0, &p).unwrap();
            let out = apply_power(&s, cmd, dt, &p);
            prop_assert!((p.e_cap * (s.soc - out.state.soc) - out.p_actual * dt).abs() < 1e-9);
        }

        #[test]
        fn voltage_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = BatteryParams::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(terminal_voltage(lo, &p).unwrap() <= terminal_voltage(hi, &p).unwrap());
        }
    }
}
