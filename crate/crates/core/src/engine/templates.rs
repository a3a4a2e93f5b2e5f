//! Synthetic scenarios with matching profiles.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{HouseholdSpec, Profiles, ScenarioConfig, Series, SimConfig, SimError};
use crate::clustering::{CentroidInit, ClusterConfig};
use crate::graph::GraphSpec;
use crate::storage::BatteryParams;
use crate::threephase::Phase;

pub const TEMPLATES: [&str; 3] = ["nine-house", "balanced", "single-phase-load"];

/// Builds a one-bus scenario and its profiles.
///
/// * `nine-house`: rooftop PV on phase `a` only, household loads with
///   morning and evening peaks and seeded noise. The last household opts out.
/// * `balanced`: identical loads on every phase, no PV.
/// * `single-phase-load`: 3 kW spread over the phase `a` households, nothing
///   on `b` or `c`.
///
/// Households fill the phases in contiguous blocks, so `n_households` must
/// be a positive multiple of three.
pub fn generate(template: &str, n_households: usize, seed: u64) -> Result<(ScenarioConfig, Profiles), SimError> {
    if n_households == 0 || !n_households.is_multiple_of(3) {
        return Err(SimError::Config(format!(
            "household count must be a positive multiple of 3, got {n_households}"
        )));
    }
    let simulation = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let steps = simulation.horizon;
    let hours_per_step = simulation.dt_hours();
    let per_phase = n_households / 3;
    let phase_of = |i: usize| Phase::ALL[i / per_phase];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_fee1);

    let mut households = Vec::with_capacity(n_households);
    let mut profiles = Profiles::default();
    for i in 0..n_households {
        let phase = phase_of(i);
        let (series, willing, soc0) = match template {
            "nine-house" => {
                let soc0 = 0.5 + rng.random_range(-0.1..0.1);
                let series = daily_household(&mut rng, steps, hours_per_step, phase == Phase::A);
                (series, i + 1 != n_households, soc0)
            }
            "balanced" => (
                Series {
                    load_kw: (0..steps).map(|t| smooth_load(t as f64 * hours_per_step)).collect(),
                    pv_kw: vec![0.0; steps],
                },
                true,
                0.5,
            ),
            "single-phase-load" => {
                let p = if phase == Phase::A { 3.0 / per_phase as f64 } else { 0.0 };
                (
                    Series {
                        load_kw: vec![p; steps],
                        pv_kw: vec![0.0; steps],
                    },
                    true,
                    0.5,
                )
            }
            other => {
                return Err(SimError::Config(format!(
                    "unknown template {other:?}, expected one of {}",
                    TEMPLATES.join(", ")
                )))
            }
        };
        let id = i as u32;
        profiles.insert(id, series);
        households.push(HouseholdSpec {
            id,
            bus: 0,
            phase,
            willing,
            soc0,
            angle_deg: None,
            battery: Default::default(),
        });
    }

    let config = ScenarioConfig {
        simulation,
        clustering: ClusterConfig::default(),
        init: CentroidInit::default(),
        graph: GraphSpec::default(),
        battery: BatteryParams::default(),
        households,
    };
    config.validate()?;
    Ok((config, profiles))
}

fn smooth_load(hour: f64) -> f64 {
    0.4 + 0.6 * bump(hour, 7.5, 1.0) + 1.2 * bump(hour, 19.0, 1.5)
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((hour - centre) / width).powi(2)).exp()
}

fn daily_household(rng: &mut ChaCha8Rng, steps: usize, hours_per_step: f64, has_pv: bool) -> Series {
    let base = rng.random_range(0.3..0.7);
    let morning = rng.random_range(0.5..1.5);
    let evening = rng.random_range(1.0..2.5);
    let pv_peak = if has_pv { rng.random_range(3.0..5.0) } else { 0.0 };
    let noise = Normal::new(0.0, 0.05).expect("valid noise");
    let mut load_kw = Vec::with_capacity(steps);
    let mut pv_kw = Vec::with_capacity(steps);
    for t in 0..steps {
        let h = (t as f64 * hours_per_step) % 24.0;
        let l = base + morning * bump(h, 7.5, 1.0) + evening * bump(h, 19.0, 1.5) + noise.sample(rng);
        load_kw.push(l.max(0.05));
        let sun = if (6.0..18.0).contains(&h) { (PI * (h - 6.0) / 12.0).sin() } else { 0.0 };
        pv_kw.push(pv_peak * sun.max(0.0));
    }
    Series { load_kw, pv_kw }
}
