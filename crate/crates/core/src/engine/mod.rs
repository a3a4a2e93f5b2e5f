//! Quasi-static time-series simulation over one or more buses.
//!
//! Each control step the households on a bus re-run clustering (warm-started
//! from the previous step), derive per-phase grid exchange estimates, pick
//! battery set-points and advance their batteries. Unbalance metrics are
//! evaluated on the true phase connections before and after dispatch.

mod config;
mod profiles;
mod records;
pub mod templates;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use config::{BatteryOverride, HouseholdSpec, ScenarioConfig, SimConfig};
pub use profiles::{
    load_profiles, parse_profiles, write_profiles, ProfileError, ProfileRow, Profiles, Series, PROFILE_SCHEMA,
};
pub use records::{
    read_bus_records, summarize, write_bus_records, write_household_records, BusRecord, HouseholdRecord,
    RunSummary, BUS_SCHEMA, HOUSEHOLD_SCHEMA,
};

use crate::balancing::{allocate_cluster_power, classify_scenario, decide, BalancingDecision, GridExchange, Participant, Scenario};
use crate::clustering::{
    cluster_results, run_until_converged, wrap_degrees, AgentClusterRecord, ClusterError, EstimatorState,
};
use crate::graph::{CommGraph, GraphError};
use crate::storage::{apply_power, current_reference, eligibility, BatteryError, BatteryParams, BatteryState};
use crate::threephase::{unbalance_metrics, Phase, PhasePowers, PhasorError};
use crate::verify::{brute_force_min_battery_power, cluster_means, cluster_sums};

/// Agreement required between `--verify` oracles and the engine.
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Phasor(#[from] PhasorError),
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error("horizon of {0} steps already simulated")]
    HorizonReached(usize),
    #[error("verification failed: {0}")]
    VerifyMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl SimError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SimError::Config(_) | SimError::Graph(_) => ErrorKind::Config,
            SimError::Data(_) | SimError::Profile(_) => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone)]
struct Household {
    id: u32,
    phase: Phase,
    angle_deg: f64,
    willing: bool,
    params: BatteryParams,
    battery: BatteryState,
}

#[derive(Debug, Clone)]
struct Bus {
    id: u32,
    members: Vec<usize>,
    graph: CommGraph,
    estimator: Option<EstimatorState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub buses: Vec<BusRecord>,
    pub households: Vec<HouseholdRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub buses: Vec<BusRecord>,
    pub households: Vec<HouseholdRecord>,
    pub summary: RunSummary,
}

pub struct Simulation {
    config: ScenarioConfig,
    profiles: Profiles,
    households: Vec<Household>,
    buses: Vec<Bus>,
    step: usize,
    verify: bool,
}

impl Simulation {
    pub fn new(config: ScenarioConfig, profiles: Profiles) -> Result<Self, SimError> {
        config.validate()?;
        profiles.check_coverage(config.households.iter().map(|h| h.id), config.simulation.horizon)?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.simulation.seed);
        let noise = Normal::new(0.0, config.simulation.angle_noise_deg)
            .map_err(|e| SimError::Config(format!("angle noise: {e}")))?;
        let mut households = Vec::with_capacity(config.households.len());
        for spec in &config.households {
            // Always draw so explicit angles do not shift later households.
            let drawn = wrap_degrees(spec.phase.nominal_angle_deg() + noise.sample(&mut rng));
            let params = spec.battery.apply(&config.battery);
            households.push(Household {
                id: spec.id,
                phase: spec.phase,
                angle_deg: spec.angle_deg.unwrap_or(drawn),
                willing: spec.willing,
                params,
                battery: BatteryState::new(spec.soc0, &params)?,
            });
        }

        let mut buses = Vec::new();
        for (id, members) in config.buses() {
            let graph = config
                .graph
                .build(members.len())
                .map_err(|e| SimError::Config(format!("bus {id}: {e}")))?;
            graph
                .require_connected()
                .map_err(|e| SimError::Config(format!("bus {id}: {e}")))?;
            config
                .clustering
                .check_stability(&graph)
                .map_err(|e| SimError::Config(format!("bus {id}: {e}")))?;
            buses.push(Bus {
                id,
                members,
                graph,
                estimator: None,
            });
        }

        Ok(Self {
            config,
            profiles,
            households,
            buses,
            step: 0,
            verify: false,
        })
    }

    /// Cross-checks every step against the centralized oracles and fails on
    /// a gap above [`VERIFY_TOL`].
    pub fn with_verify(mut self, on: bool) -> Self {
        self.verify = on;
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// The configuration with every drawn angle written out, so a rerun from
    /// it reproduces this simulation regardless of the seed.
    pub fn resolved_config(&self) -> ScenarioConfig {
        let mut cfg = self.config.clone();
        for (spec, h) in cfg.households.iter_mut().zip(&self.households) {
            spec.angle_deg = Some(h.angle_deg);
        }
        cfg
    }

    pub fn angles(&self) -> Vec<f64> {
        self.households.iter().map(|h| h.angle_deg).collect()
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.simulation.horizon
    }

    pub fn step(&mut self) -> Result<StepRecord, SimError> {
        if self.is_finished() {
            return Err(SimError::HorizonReached(self.config.simulation.horizon));
        }
        let mut out = StepRecord {
            buses: Vec::with_capacity(self.buses.len()),
            households: Vec::with_capacity(self.households.len()),
        };
        for b in 0..self.buses.len() {
            self.step_bus(b, &mut out)?;
        }
        self.step += 1;
        Ok(out)
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let mut buses = Vec::new();
        let mut households = Vec::new();
        while !self.is_finished() {
            let rec = self.step()?;
            buses.extend(rec.buses);
            households.extend(rec.households);
        }
        let summary = summarize(&buses)?;
        Ok(RunOutput {
            buses,
            households,
            summary,
        })
    }

    fn step_bus(&mut self, b: usize, out: &mut StepRecord) -> Result<(), SimError> {
        let t = self.step;
        let sim = &self.config.simulation;
        let dt_h = sim.dt_hours();
        let bus = &mut self.buses[b];
        let members = bus.members.clone();
        let n = members.len();

        let mut load = Vec::with_capacity(n);
        let mut pv = Vec::with_capacity(n);
        for &k in &members {
            let s = self
                .profiles
                .get(self.households[k].id)
                .ok_or(ProfileError::MissingHousehold(self.households[k].id))?;
            load.push(s.load_kw[t]);
            pv.push(s.pv_kw[t]);
        }
        let features: Vec<f64> = members.iter().map(|&k| self.households[k].angle_deg).collect();
        let aux: Vec<f64> = pv.iter().zip(&load).map(|(p, l)| p - l).collect();

        let state = match bus.estimator.take() {
            Some(s) => s,
            None => EstimatorState::new(&features, &aux, &self.config.clustering, &self.config.init)?,
        };
        let conv = run_until_converged(state, &bus.graph, &self.config.clustering, &features, &aux)?;
        let results = cluster_results(&conv.state, n)?;
        let maps: Vec<Vec<Phase>> = results.iter().map(|r| phase_map(&r.xbar)).collect();
        let inferred: Vec<Phase> = results.iter().zip(&maps).map(|(r, map)| map[r.cluster]).collect();

        let mut pg_est = [0.0; 3];
        for (j, total) in results[0].cluster_totals.iter().enumerate() {
            pg_est[maps[0][j].index()] += total;
        }
        let disagreement = results
            .iter()
            .flat_map(|r| r.cluster_totals.iter().zip(&results[0].cluster_totals).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);

        let gx = GridExchange::new(pg_est);
        let decision = if sim.balancing {
            decide(&gx)
        } else {
            BalancingDecision {
                p_ref: 0.0,
                p_b: [0.0; 3],
                scenario: classify_scenario(&gx),
                objective: 0.0,
            }
        };

        if self.verify {
            verify_step(&conv.state, &results[0], &gx, &decision, &features, &aux, t, bus.id)?;
        }

        // Dispatch within each inferred phase.
        let mut p_cmd = vec![0.0; n];
        let mut shortfall = [0.0; 3];
        let mut elig = Vec::with_capacity(n);
        for &k in &members {
            let h = &self.households[k];
            elig.push(eligibility(&h.battery, h.willing, dt_h, &h.params));
        }
        for phase in Phase::ALL {
            let p = decision.p_b[phase.index()];
            let idx: Vec<usize> = (0..n).filter(|&i| inferred[i] == phase).collect();
            let participants: Vec<Participant> = idx
                .iter()
                .map(|&i| Participant {
                    id: i,
                    eligible: elig[i].eligible,
                    headroom: elig[i].headroom_for(p),
                })
                .collect();
            let alloc = allocate_cluster_power(p, &participants);
            for (&i, &power) in idx.iter().zip(&alloc.powers) {
                p_cmd[i] = power;
            }
            shortfall[phase.index()] = alloc.shortfall;
        }

        let mut load_true = [0.0; 3];
        let mut pv_true = [0.0; 3];
        let mut load_post = [0.0; 3];
        let mut pv_post = [0.0; 3];
        let mut pb_actual = [0.0; 3];
        let mut misassigned = 0;
        for (i, &k) in members.iter().enumerate() {
            let h = &mut self.households[k];
            let before = h.battery;
            let outcome = apply_power(&before, p_cmd[i], dt_h, &h.params);
            h.battery = outcome.state;
            shortfall[inferred[i].index()] += outcome.deficit;

            let ph = h.phase.index();
            load_true[ph] += load[i];
            pv_true[ph] += pv[i];
            load_post[ph] += load[i] + (-outcome.p_actual).max(0.0);
            pv_post[ph] += pv[i] + outcome.p_actual.max(0.0);
            pb_actual[ph] += outcome.p_actual;
            if inferred[i] != h.phase {
                misassigned += 1;
            }

            out.households.push(HouseholdRecord {
                step: t,
                household: h.id,
                bus: bus.id,
                cluster: results[i].cluster,
                phase_est: inferred[i],
                eligible: elig[i].eligible,
                p_cmd: p_cmd[i],
                p_actual: outcome.p_actual,
                deficit: outcome.deficit,
                soc: h.battery.soc,
                v_b: h.battery.v_b,
                i_ref: current_reference(p_cmd[i], &before)?,
            });
        }

        let pre = unbalance_metrics(&PhasePowers::active(load_true, pv_true), sim.vm, sim.z_n())?;
        let post = unbalance_metrics(&PhasePowers::active(load_post, pv_post), sim.vm, sim.z_n())?;
        let pg_pre: [f64; 3] = std::array::from_fn(|k| pv_true[k] - load_true[k]);
        let pg_post: [f64; 3] = std::array::from_fn(|k| pv_post[k] - load_post[k]);

        out.buses.push(BusRecord {
            step: t,
            bus: bus.id,
            dt_h,
            members: n,
            pg_pre_a: pg_pre[0],
            pg_pre_b: pg_pre[1],
            pg_pre_c: pg_pre[2],
            pg_est_a: pg_est[0],
            pg_est_b: pg_est[1],
            pg_est_c: pg_est[2],
            scenario: decision.scenario,
            p_ref: decision.p_ref,
            pb_a: decision.p_b[0],
            pb_b: decision.p_b[1],
            pb_c: decision.p_b[2],
            objective: decision.objective,
            pb_actual_a: pb_actual[0],
            pb_actual_b: pb_actual[1],
            pb_actual_c: pb_actual[2],
            shortfall_a: shortfall[0],
            shortfall_b: shortfall[1],
            shortfall_c: shortfall[2],
            pg_post_a: pg_post[0],
            pg_post_b: pg_post[1],
            pg_post_c: pg_post[2],
            in_pre: pre.i_neutral.magnitude(),
            in_post: post.i_neutral.magnitude(),
            cuf_pre: pre.cuf_percent,
            cuf_post: post.cuf_percent,
            ngv_pre: pre.ngv_proxy.magnitude(),
            ngv_post: post.ngv_proxy.magnitude(),
            iterations: conv.iterations,
            converged: conv.converged,
            residual: conv.residual,
            misassigned,
            disagreement,
        });
        bus.estimator = Some(conv.state);
        Ok(())
    }
}

/// Labels each cluster with a phase from its centroid angle. With three
/// clusters the labelling is the permutation closest to the nominal angles;
/// otherwise each cluster takes its nearest phase.
pub fn phase_map(xbar: &[f64]) -> Vec<Phase> {
    let dist = |x: f64, p: Phase| wrap_degrees(x - p.nominal_angle_deg()).abs();
    if xbar.len() == 3 {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let cost = |perm: &[usize; 3]| -> f64 {
            (0..3).map(|j| dist(xbar[j], Phase::ALL[perm[j]])).sum()
        };
        let mut best = PERMS[0];
        let mut best_cost = cost(&best);
        for perm in &PERMS[1..] {
            let c = cost(perm);
            if c < best_cost {
                best = *perm;
                best_cost = c;
            }
        }
        return best.iter().map(|&k| Phase::ALL[k]).collect();
    }
    xbar.iter()
        .map(|&x| {
            Phase::ALL
                .into_iter()
                .min_by(|&p, &q| dist(x, p).total_cmp(&dist(x, q)))
                .expect("three phases")
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn verify_step(
    state: &EstimatorState,
    first: &AgentClusterRecord,
    gx: &GridExchange,
    decision: &BalancingDecision,
    features: &[f64],
    aux: &[f64],
    step: usize,
    bus: u32,
) -> Result<(), SimError> {
    let fail = |what: String| Err(SimError::VerifyMismatch(format!("step {step}, bus {bus}: {what}")));
    let m = state.clusters();
    let means = cluster_means(features, state.assignment(), m);
    let sums = cluster_sums(aux, state.assignment(), m);
    for j in 0..m {
        if let Some(mean) = means[j] {
            let gap = (mean - first.xbar[j]).abs();
            if gap > VERIFY_TOL {
                return fail(format!("cluster {j} centroid off by {gap:e}"));
            }
        }
        let gap = (sums[j] - first.cluster_totals[j]).abs();
        if gap > VERIFY_TOL {
            return fail(format!("cluster {j} total off by {gap:e}"));
        }
    }
    if decision.scenario == Scenario::Mixed && decision.objective > 0.0 {
        let oracle = brute_force_min_battery_power(gx);
        let gap = (oracle.objective - decision.objective).abs();
        if gap > VERIFY_TOL {
            return fail(format!("battery objective off by {gap:e}"));
        }
    }
    Ok(())
}
