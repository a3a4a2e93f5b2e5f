//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use phasebal::balancing::{
    classify_scenario, decide, equality_residual, p_ref_same_sign, sign_violation, solve_mixed_sign, GridExchange, Scenario,
};
use phasebal::clustering::{run_until_converged, ClusterConfig, EstimatorState};
use phasebal::engine::templates::generate;
use phasebal::engine::{
    write_bus_records, write_household_records, HouseholdSpec, ProfileRow, Profiles, ScenarioConfig, SimConfig,
    Simulation,
};
use phasebal::storage::{apply_power, BatteryParams, BatteryState};
use phasebal::threephase::{cuf, phase_from_sequences, symmetrical_components, Phase, Phasor};
use phasebal::verify::brute_force_min_battery_power;
use phasebal::CommGraph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn clustering_correctness() -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut wrong = Vec::new();
    for seed in 0..50 {
        let (cfg, profiles) = generate("nine-house", 9, seed).map_err(|e| e.to_string())?;
        let mut sim = Simulation::new(cfg, profiles).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let rec = sim.step().map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        let bus = &rec.buses[0];
        if bus.misassigned > 0 || !bus.converged {
            wrong.push(seed);
        }
    }
    check(
        wrong.is_empty() && slowest < Duration::from_secs(1),
        format!("50/50 seeds fully correct, slowest step {:.1} ms", slowest.as_secs_f64() * 1e3),
        format!("misassigned seeds {wrong:?}, slowest step {slowest:?}"),
    )
}

fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (order[rng.random_range(0..k)], order[k])).collect();
    let extra_p = rng.random_range(0.0..0.3);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(extra_p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn consensus_accuracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let mut worst = 0.0_f64;
    for g_idx in 0..50 {
        let n = rng.random_range(3..=20);
        let edges = random_connected_graph(&mut rng, n);
        let probe = CommGraph::new(n, &edges, 1.0).map_err(|e| e.to_string())?;
        let cfg = ClusterConfig::default();
        let alpha = (0.5 / (cfg.dt_inner * probe.max_degree() as f64)).min(10.0);
        let g = CommGraph::new(n, &edges, alpha).map_err(|e| e.to_string())?;

        let mut phases: Vec<Phase> = (0..n).map(|i| Phase::ALL[i % 3]).collect();
        phases.shuffle(&mut rng);
        let x: Vec<f64> = phases.iter().map(|p| p.nominal_angle_deg() + noise.sample(&mut rng)).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();

        let state = EstimatorState::new(&x, &z, &cfg, &Default::default()).map_err(|e| e.to_string())?;
        let conv = run_until_converged(state, &g, &cfg, &x, &z).map_err(|e| e.to_string())?;
        if !conv.converged {
            return Err(format!("graph {g_idx} (n={n}) did not converge"));
        }
        let true_mean = |vals: &[f64], ph: Phase| {
            let members: Vec<f64> = (0..n).filter(|&k| phases[k] == ph).map(|k| vals[k]).collect();
            members.iter().sum::<f64>() / members.len() as f64
        };
        for i in 0..n {
            let c = conv.state.assignment()[i];
            for (est, truth) in [
                (conv.state.xbar(i)[c], true_mean(&x, phases[i])),
                (conv.state.zbar(i)[c], true_mean(&z, phases[i])),
            ] {
                worst = worst.max((est - truth).abs() / truth.abs().max(1.0));
            }
        }
    }
    check(
        worst < 1e-4,
        format!("50 graphs (n <= 20), worst relative error {worst:.2e}"),
        format!("worst relative error {worst:.2e} >= 1e-4"),
    )
}

fn optimizer_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut triples = Vec::with_capacity(1000);
    while triples.len() < 1000 {
        let gx = GridExchange::new([(); 3].map(|_| rng.random_range(-10.0..10.0)));
        if classify_scenario(&gx) == Scenario::Mixed {
            triples.push(gx);
        }
    }
    let start = Instant::now();
    let (mut gap, mut residual, mut sign) = (0.0_f64, 0.0_f64, 0.0_f64);
    for gx in &triples {
        let d = solve_mixed_sign(gx).map_err(|e| e.to_string())?;
        let oracle = brute_force_min_battery_power(gx);
        gap = gap.max((oracle.objective - d.objective).abs());
        residual = residual.max(equality_residual(gx, &d.p_b));
        sign = sign.max(sign_violation(&d.p_b));
    }
    let took = start.elapsed();
    check(
        gap < 1e-6 && residual < 1e-9 && sign == 0.0 && took < Duration::from_secs(5),
        format!("1000 mixed triples, max objective gap {gap:.1e}, residual {residual:.1e}, {:.2} s", took.as_secs_f64()),
        format!("gap {gap:.1e}, residual {residual:.1e}, sign violation {sign:.1e}, {took:?}"),
    )
}

fn unconstrained() -> BatteryParams {
    BatteryParams {
        e_cap: 1e6,
        p_max_charge: 1e4,
        p_max_discharge: 1e4,
        soc_min: 0.0,
        soc_max: 1.0,
        soc_low_part: 0.0,
        soc_high_part: 1.0,
        eta_c: 1.0,
        eta_d: 1.0,
        ..BatteryParams::default()
    }
}

fn balancing_efficacy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_in, mut worst_cuf) = (0.0_f64, 0.0_f64);
    for case in 0..200 {
        let per_phase = rng.random_range(1..=4);
        let n = 3 * per_phase;
        let mut rows = Vec::with_capacity(n);
        let mut households = Vec::with_capacity(n);
        for i in 0..n {
            households.push(HouseholdSpec {
                id: i as u32,
                bus: 0,
                phase: Phase::ALL[i / per_phase],
                willing: true,
                soc0: 0.5,
                angle_deg: None,
                battery: Default::default(),
            });
            let pv = if rng.random_bool(0.5) { rng.random_range(0.0..6.0) } else { 0.0 };
            rows.push(ProfileRow {
                step: 0,
                household_id: i as u32,
                p_load_kw: rng.random_range(0.0..4.0),
                p_pv_kw: pv,
            });
        }
        let cfg = ScenarioConfig {
            simulation: SimConfig {
                horizon: 1,
                seed: case,
                ..SimConfig::default()
            },
            clustering: Default::default(),
            init: Default::default(),
            graph: Default::default(),
            battery: unconstrained(),
            households,
        };
        let profiles = Profiles::from_rows(rows).map_err(|e| e.to_string())?;
        let out = Simulation::new(cfg, profiles)
            .and_then(Simulation::run)
            .map_err(|e| format!("case {case}: {e}"))?;
        let r = &out.buses[0];
        worst_in = worst_in.max(r.in_post);
        worst_cuf = worst_cuf.max(r.cuf_post);
    }
    check(
        worst_in < 1e-6 && worst_cuf < 1e-6,
        format!("200 configurations, max |I_N| post {worst_in:.1e} A, max CUF post {worst_cuf:.1e} %"),
        format!("max |I_N| post {worst_in:.1e} A, max CUF post {worst_cuf:.1e} %"),
    )
}

fn same_sign_rule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..500 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let gx = GridExchange::new([(); 3].map(|_| sign * rng.random_range(0.01..10.0)));
        let expected: Scenario = if sign > 0.0 { "all-inject" } else { "all-consume" }.parse()?;
        if classify_scenario(&gx) != expected {
            return Err(format!("triple {:?} classified as {}", gx.p_g, classify_scenario(&gx)));
        }
        let smallest = gx.p_g.iter().copied().fold(f64::INFINITY, |m, p| m.min(p.abs()));
        let p_ref = p_ref_same_sign(&gx).map_err(|e| e.to_string())?;
        if p_ref != sign * smallest {
            return Err(format!("triple {:?}: p_ref {p_ref}, expected {}", gx.p_g, sign * smallest));
        }
        let d = decide(&gx);
        let k_min = (0..3).find(|&k| gx.p_g[k].abs() == smallest).unwrap();
        if d.p_b[k_min] != 0.0 {
            return Err(format!("triple {:?}: minimizing phase p_b = {}", gx.p_g, d.p_b[k_min]));
        }
    }
    Ok("500 same-sign triples, exact min-magnitude reference and zero p_b on that phase".into())
}

fn battery_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut excursion, mut bookkeeping) = (0.0_f64, 0.0_f64);
    for seq in 0..5 {
        let params = BatteryParams {
            e_cap: rng.random_range(1.0..20.0),
            eta_c: 1.0,
            eta_d: 1.0,
            ..BatteryParams::default()
        };
        let mut state = BatteryState::new(0.5, &params).map_err(|e| e.to_string())?;
        for _ in 0..10_000 {
            let p = rng.random_range(-8.0..8.0);
            let dt = rng.random_range(0.001..0.5);
            let out = apply_power(&state, p, dt, &params);
            bookkeeping = bookkeeping.max((params.e_cap * (state.soc - out.state.soc) - out.p_actual * dt).abs());
            excursion = excursion
                .max(params.soc_min - out.state.soc)
                .max(out.state.soc - params.soc_max);
            state = out.state;
        }
        if excursion > 1e-12 || bookkeeping > 1e-9 {
            return Err(format!("sequence {seq}: SoC excursion {excursion:.1e}, bookkeeping error {bookkeeping:.1e} kWh"));
        }
    }
    Ok(format!(
        "5 x 10,000 steps, SoC excursion {:.1e}, bookkeeping error {bookkeeping:.1e} kWh",
        excursion.max(0.0)
    ))
}

fn symmetrical_components_check() -> Outcome {
    let single = cuf(&[Phasor::new(1.0, 0.0), Phasor::ZERO, Phasor::ZERO]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut round_trip = 0.0_f64;
    for _ in 0..1000 {
        let i = [(); 3].map(|_| Phasor::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)));
        let back = phase_from_sequences(&symmetrical_components(&i));
        for k in 0..3 {
            round_trip = round_trip.max((back[k] - i[k]).magnitude());
        }
    }
    let balanced = [0.0, -120.0, 120.0].map(|a| Phasor::from_polar_deg(10.0, a));
    let balanced_cuf = cuf(&balanced).map_err(|e| e.to_string())?;
    check(
        (single - 141.42).abs() <= 0.01 && round_trip < 1e-9 && balanced_cuf < 1e-9,
        format!("CUF(1,0,0) = {single:.4} %, round trip {round_trip:.1e}, balanced CUF {balanced_cuf:.1e} %"),
        format!("CUF(1,0,0) = {single} %, round trip {round_trip:.1e}, balanced CUF {balanced_cuf:.1e} %"),
    )
}

fn determinism_and_scale() -> Outcome {
    let mut outputs = Vec::new();
    let mut slowest = Duration::ZERO;
    for _ in 0..2 {
        let (cfg, profiles) = generate("nine-house", 9, 7).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let out = Simulation::new(cfg, profiles)
            .and_then(Simulation::run)
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        let mut bytes = Vec::new();
        write_bus_records(&out.buses, &mut bytes).map_err(|e| e.to_string())?;
        write_household_records(&out.households, &mut bytes).map_err(|e| e.to_string())?;
        outputs.push(bytes);
    }
    check(
        outputs[0] == outputs[1] && slowest < Duration::from_secs(10),
        format!("1440 steps in {:.2} s, {} record bytes identical across runs", slowest.as_secs_f64(), outputs[0].len()),
        format!("identical: {}, slowest run {slowest:?}", outputs[0] == outputs[1]),
    )
}

fn ngv_motivation() -> Outcome {
    let (cfg, profiles) = generate("single-phase-load", 9, 0).map_err(|e| e.to_string())?;
    let out = Simulation::new(cfg, profiles)
        .and_then(Simulation::run)
        .map_err(|e| e.to_string())?;
    let served: Vec<_> = out.buses.iter().filter(|r| r.total_shortfall() == 0.0).collect();
    let pre = out.buses.iter().map(|r| r.ngv_pre).fold(f64::INFINITY, f64::min);
    let post = served.iter().map(|r| r.ngv_post).fold(0.0, f64::max);
    check(
        !served.is_empty() && pre > 0.5 && post < 0.01,
        format!("NGV pre >= {pre:.4} V, post <= {post:.1e} V over {} steps with battery headroom", served.len()),
        format!("NGV pre {pre:.4} V, post {post:.1e} V, {} served steps", served.len()),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("clustering correctness", clustering_correctness),
        ("consensus accuracy", consensus_accuracy),
        ("optimizer equivalence", optimizer_equivalence),
        ("balancing efficacy", balancing_efficacy),
        ("same-sign rule", same_sign_rule),
        ("battery safety", battery_safety),
        ("symmetrical components", symmetrical_components_check),
        ("determinism and scale", determinism_and_scale),
        ("NGV motivation", ngv_motivation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("acceptance {}: {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {}: {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
