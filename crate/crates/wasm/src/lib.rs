//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page needs no exception handling.

use phasebal::balancing::{decide, GridExchange};
use phasebal::engine::templates::generate;
use phasebal::engine::Simulation;
use phasebal::graph::GraphSpec;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

#[derive(Serialize)]
struct Failure<'a> {
    error: &'a str,
}

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    let json = match &result {
        Ok(v) => serde_json::to_string(v),
        Err(e) => serde_json::to_string(&Failure { error: e }),
    };
    json.unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

#[derive(Debug, Serialize)]
pub struct BalanceView {
    pub scenario: String,
    pub p_ref: f64,
    pub p_b: [f64; 3],
    pub p_g_post: [f64; 3],
    pub objective: f64,
}

/// Battery set-points for one bus given its per-phase grid exchange in kW
/// (positive = injecting into the grid).
pub fn balance_view(pa: f64, pb: f64, pc: f64) -> Result<BalanceView, String> {
    if ![pa, pb, pc].iter().all(|p| p.is_finite()) {
        return Err("grid exchange must be finite".into());
    }
    let gx = GridExchange::new([pa, pb, pc]);
    let d = decide(&gx);
    Ok(BalanceView {
        scenario: d.scenario.to_string(),
        p_ref: d.p_ref,
        p_b: d.p_b,
        p_g_post: std::array::from_fn(|k| gx.p_g[k] + d.p_b[k]),
        objective: d.objective,
    })
}

#[derive(Debug, Serialize)]
pub struct AgentView {
    pub angle_deg: f64,
    pub true_phase: String,
    pub inferred_phase: String,
}

#[derive(Debug, Serialize)]
pub struct ClusterView {
    pub agents: Vec<AgentView>,
    pub iterations: usize,
    pub converged: bool,
    pub misassigned: usize,
}

/// Clusters `n` agents on a ring by their noisy voltage angles.
pub fn cluster_view(n: usize, sigma_deg: f64, seed: u64, alpha: f64) -> Result<ClusterView, String> {
    let (mut cfg, profiles) = generate("balanced", n, seed).map_err(|e| e.to_string())?;
    cfg.simulation.horizon = 1;
    cfg.simulation.angle_noise_deg = sigma_deg;
    cfg.graph = GraphSpec::Ring { alpha };
    cfg.validate().map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(cfg.clone(), profiles).map_err(|e| e.to_string())?;
    let angles = sim.angles();
    let rec = sim.step().map_err(|e| e.to_string())?;
    let bus = &rec.buses[0];
    Ok(ClusterView {
        agents: cfg
            .households
            .iter()
            .zip(&angles)
            .zip(&rec.households)
            .map(|((h, &angle_deg), r)| AgentView {
                angle_deg,
                true_phase: h.phase.to_string(),
                inferred_phase: r.phase_est.to_string(),
            })
            .collect(),
        iterations: bus.iterations,
        converged: bus.converged,
        misassigned: bus.misassigned,
    })
}

#[derive(Debug, Serialize)]
pub struct DayView {
    pub hours: Vec<f64>,
    pub in_pre: Vec<f64>,
    pub in_post: Vec<f64>,
    pub shortfall_kw: Vec<f64>,
    pub summary: phasebal::engine::RunSummary,
}

/// A 24 h run of a nine-household template.
pub fn day_view(template: &str, seed: u64, balancing: bool) -> Result<DayView, String> {
    let (mut cfg, profiles) = generate(template, 9, seed).map_err(|e| e.to_string())?;
    cfg.simulation.balancing = balancing;
    let out = Simulation::new(cfg, profiles)
        .and_then(Simulation::run)
        .map_err(|e| e.to_string())?;
    Ok(DayView {
        hours: out.buses.iter().map(|r| r.step as f64 * r.dt_h).collect(),
        in_pre: out.buses.iter().map(|r| r.in_pre).collect(),
        in_post: out.buses.iter().map(|r| r.in_post).collect(),
        shortfall_kw: out.buses.iter().map(|r| r.total_shortfall()).collect(),
        summary: out.summary,
    })
}

#[wasm_bindgen]
pub fn balance(pa: f64, pb: f64, pc: f64) -> String {
    respond(balance_view(pa, pb, pc))
}

#[wasm_bindgen]
pub fn cluster_ring(n: usize, sigma_deg: f64, seed: u64, alpha: f64) -> String {
    respond(cluster_view(n, sigma_deg, seed, alpha))
}

#[wasm_bindgen]
pub fn simulate_day(template: &str, seed: u64, balancing: bool) -> String {
    respond(day_view(template, seed, balancing))
}
