//! Per-bus balancing decisions.
//!
//! Grid exchange is injection-positive: `p_g = P_pv - P_load` per phase.
//! Battery power is discharge-positive, so `p_g + p_b` is what the phase
//! exchanges with the grid after balancing. Every decision drives all three
//! phases to a common exchange `p_ref`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("same-sign reference requested for a {0} exchange")]
    NotSameSign(Scenario),
    #[error("mixed-sign solver requested for a {0} exchange")]
    NotMixed(Scenario),
}

/// Net active power each phase exchanges with the grid, in kW.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridExchange {
    pub p_g: [f64; 3],
}

impl GridExchange {
    pub fn new(p_g: [f64; 3]) -> Self {
        Self { p_g }
    }

    fn max(&self) -> f64 {
        self.p_g.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn min(&self) -> f64 {
        self.p_g.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn sum(&self) -> f64 {
        self.p_g.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    AllInject,
    AllConsume,
    Mixed,
    Idle,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::AllInject => "all-inject",
            Scenario::AllConsume => "all-consume",
            Scenario::Mixed => "mixed",
            Scenario::Idle => "idle",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all-inject" => Ok(Scenario::AllInject),
            "all-consume" => Ok(Scenario::AllConsume),
            "mixed" => Ok(Scenario::Mixed),
            "idle" => Ok(Scenario::Idle),
            other => Err(format!("unknown scenario tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancingDecision {
    pub p_ref: f64,
    pub p_b: [f64; 3],
    pub scenario: Scenario,
    /// `sum |p_b|`, kW.
    pub objective: f64,
}

impl BalancingDecision {
    fn from_reference(gx: &GridExchange, p_ref: f64, scenario: Scenario) -> Self {
        let p_b = battery_powers(gx, p_ref);
        Self {
            p_ref,
            p_b,
            scenario,
            objective: p_b.iter().map(|p| p.abs()).sum(),
        }
    }
}

/// Zeros are compatible with either sign; only a strictly positive entry next
/// to a strictly negative one makes the exchange mixed.
pub fn classify_scenario(gx: &GridExchange) -> Scenario {
    let any_pos = gx.p_g.iter().any(|&p| p > 0.0);
    let any_neg = gx.p_g.iter().any(|&p| p < 0.0);
    match (any_pos, any_neg) {
        (true, true) => Scenario::Mixed,
        (true, false) => Scenario::AllInject,
        (false, true) => Scenario::AllConsume,
        (false, false) => Scenario::Idle,
    }
}

/// Smallest exchange magnitude, carrying the common sign. The phase that
/// attains it needs no battery power.
pub fn p_ref_same_sign(gx: &GridExchange) -> Result<f64, BalanceError> {
    match classify_scenario(gx) {
        Scenario::AllInject => Ok(gx.min()),
        Scenario::AllConsume => Ok(gx.max()),
        other => Err(BalanceError::NotSameSign(other)),
    }
}

/// `p_b = p_ref - p_g` per phase.
pub fn battery_powers(gx: &GridExchange, p_ref: f64) -> [f64; 3] {
    gx.p_g.map(|p| p_ref - p)
}

/// Which ray of the sign-constrained feasible set a decision lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Every battery charges or idles: `p_ref <= min(p_g)`.
    ChargeOnly,
    /// Every battery discharges or idles: `p_ref >= max(p_g)`.
    DischargeOnly,
}

/// Optimum of `sum |p_ref - p_g|` on one ray. The objective is linear along
/// each ray and grows away from the finite endpoint, so the endpoint wins.
pub fn solve_branch(gx: &GridExchange, branch: Branch) -> BalancingDecision {
    let r = match branch {
        Branch::ChargeOnly => gx.min(),
        Branch::DischargeOnly => gx.max(),
    };
    BalancingDecision::from_reference(gx, r, classify_scenario(gx))
}

/// Minimum `sum |p_b|` subject to equal final exchange and no phase charging
/// while another discharges.
///
/// Writing `p_b = r - p_g`, the sign constraint leaves two rays: `r >= max(p_g)`
/// (discharge only) and `r <= min(p_g)` (charge only). Their endpoint costs are
/// `3 max - sum` and `sum - 3 min`. Equal costs resolve to charge-only.
pub fn solve_mixed_sign(gx: &GridExchange) -> Result<BalancingDecision, BalanceError> {
    let scenario = classify_scenario(gx);
    if scenario != Scenario::Mixed {
        return Err(BalanceError::NotMixed(scenario));
    }
    let sum = gx.sum();
    let discharge_cost = 3.0 * gx.max() - sum;
    let charge_cost = sum - 3.0 * gx.min();
    let branch = if charge_cost <= discharge_cost {
        Branch::ChargeOnly
    } else {
        Branch::DischargeOnly
    };
    Ok(solve_branch(gx, branch))
}

/// Full decision for one bus, dispatching on the exchange pattern.
pub fn decide(gx: &GridExchange) -> BalancingDecision {
    let scenario = classify_scenario(gx);
    match scenario {
        Scenario::Mixed => solve_mixed_sign(gx).expect("classified as mixed"),
        Scenario::AllInject | Scenario::AllConsume => {
            let p_ref = p_ref_same_sign(gx).expect("classified as same-sign");
            BalancingDecision::from_reference(gx, p_ref, scenario)
        }
        Scenario::Idle => BalancingDecision {
            p_ref: 0.0,
            p_b: [0.0; 3],
            scenario,
            objective: 0.0,
        },
    }
}

/// Largest absolute residual of the pairwise equal-exchange constraints
/// `(p_b^a - p_b^b) + (p_g^a - p_g^b) = 0` and its two rotations.
pub fn equality_residual(gx: &GridExchange, p_b: &[f64; 3]) -> f64 {
    let post: Vec<f64> = (0..3).map(|k| p_b[k] + gx.p_g[k]).collect();
    [(0, 1), (1, 2), (0, 2)]
        .iter()
        .map(|&(i, j)| (post[i] - post[j]).abs())
        .fold(0.0, f64::max)
}

/// Most negative pairwise product of battery powers (zero when the sign
/// constraint holds).
pub fn sign_violation(p_b: &[f64; 3]) -> f64 {
    [(0, 1), (1, 2), (0, 2)]
        .iter()
        .map(|&(i, j)| (-(p_b[i] * p_b[j])).max(0.0))
        .fold(0.0, f64::max)
}

/// One household taking part in a phase's allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Participant {
    pub id: usize,
    pub eligible: bool,
    /// Available power in the commanded direction, kW, non-negative.
    pub headroom: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Signed per-household set-points, in participant order.
    pub powers: Vec<f64>,
    /// Unserved magnitude, kW.
    pub shortfall: f64,
}

/// Splits a phase's battery power over eligible households in proportion to
/// their headroom. When headroom is short every eligible household runs at
/// its limit and the remainder is reported.
pub fn allocate_cluster_power(p_b_phase: f64, members: &[Participant]) -> Allocation {
    let demand = p_b_phase.abs();
    let sign = p_b_phase.signum();
    let usable = |m: &Participant| if m.eligible { m.headroom.max(0.0) } else { 0.0 };
    let total: f64 = members.iter().map(usable).sum();

    if demand == 0.0 || total == 0.0 {
        return Allocation {
            powers: vec![0.0; members.len()],
            shortfall: demand,
        };
    }
    if total <= demand {
        return Allocation {
            powers: members.iter().map(|m| sign * usable(m)).collect(),
            shortfall: demand - total,
        };
    }
    let powers: Vec<f64> = members
        .iter()
        .map(|m| sign * demand * usable(m) / total)
        .collect();
    Allocation {
        powers,
        shortfall: 0.0,
    }
}
