//! Online distributed clustering with in-cluster averaging of an auxiliary
//! signal.
//!
//! Every agent keeps, for each of the `M` clusters, running estimates of the
//! cluster's mean feature and mean auxiliary value. An agent joins the cluster
//! whose feature estimate is nearest to its own feature. Estimates evolve by
//! forward-Euler integration of Laplacian consensus over the whole
//! communication graph:
//!
//! * members feed their own value into their cluster's channels (the drift
//!   term), and withdraw it when they leave;
//! * every agent, member or not, couples its estimates to its neighbours',
//!   so non-members relay cluster information across the graph.
//!
//! Each cluster carries three summed channels: feature, auxiliary and a 0/1
//! membership indicator. Their network-wide sums equal the members' totals at
//! every step, so at consensus each agent holds `sum/N` per channel. The
//! indicator therefore converges to `|cluster|/N` and the reported means are
//! channel ratios, which equal the exact member means on any connected graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CommGraph, GraphError};

/// Indicator mass below which a cluster's ratio estimate is not refreshed.
const WEIGHT_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("empty centroid estimate vector")]
    NoClusters,
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid clustering configuration: {0}")]
    InvalidConfig(String),
    #[error("inner step {dt} is unstable for gain {alpha} and max degree {degree}; need dt * alpha * degree < 1")]
    Unstable { dt: f64, alpha: f64, degree: usize },
    #[error("agent count must be positive")]
    NoAgents,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Angles in degrees; distance is the wrapped difference.
    CircularAngle,
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: f64, b: f64) -> f64 {
        match self {
            Metric::CircularAngle => wrap_degrees(a - b).abs(),
            Metric::Euclidean => (a - b).abs(),
        }
    }
}

/// Wraps an angle into `(-180, 180]`.
pub fn wrap_degrees(x: f64) -> f64 {
    let r = x.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub m: usize,
    pub dt_inner: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub metric: Metric,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            m: 3,
            dt_inner: 0.01,
            tol: 1e-12,
            max_iter: 20_000,
            metric: Metric::CircularAngle,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let fail = |msg: &str| Err(ClusterError::InvalidConfig(msg.to_string()));
        if self.m == 0 {
            return fail("m must be at least 1");
        }
        if !(self.dt_inner > 0.0 && self.dt_inner.is_finite()) {
            return fail("dt_inner must be positive");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return fail("tol must be positive");
        }
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1");
        }
        Ok(())
    }

    /// Forward Euler on `-L` is stable when `dt * lambda_max(L) < 2`; with
    /// `lambda_max <= 2 * alpha * d_max` this is guaranteed by
    /// `dt * alpha * d_max < 1`.
    pub fn check_stability(&self, g: &CommGraph) -> Result<(), ClusterError> {
        let degree = g.max_degree();
        if self.dt_inner * g.alpha() * degree as f64 >= 1.0 {
            return Err(ClusterError::Unstable {
                dt: self.dt_inner,
                alpha: g.alpha(),
                degree,
            });
        }
        Ok(())
    }
}

/// Initial centroid estimates shared by every agent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CentroidInit {
    /// `0, -360/M, -720/M, ...` degrees; for three clusters the nominal
    /// phase angles of `a`, `b`, `c`.
    #[default]
    NominalPhases,
    /// Uniform over `(-180, 180]` for angles, or over the feature range.
    Random { seed: u64 },
    Explicit { centroids: Vec<f64> },
}

impl CentroidInit {
    pub fn centroids(&self, m: usize, metric: Metric, features: &[f64]) -> Result<Vec<f64>, ClusterError> {
        match self {
            CentroidInit::NominalPhases => Ok((0..m)
                .map(|j| wrap_degrees(-360.0 * j as f64 / m as f64))
                .collect()),
            CentroidInit::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let (lo, hi) = match metric {
                    Metric::CircularAngle => (-180.0, 180.0),
                    Metric::Euclidean => features.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                        (lo.min(x), hi.max(x))
                    }),
                };
                Ok((0..m)
                    .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
                    .collect())
            }
            CentroidInit::Explicit { centroids } => {
                if centroids.len() != m {
                    return Err(ClusterError::LengthMismatch {
                        what: "explicit centroids",
                        got: centroids.len(),
                        expected: m,
                    });
                }
                Ok(centroids.clone())
            }
        }
    }
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn assign_cluster(x: f64, xbar: &[f64], metric: Metric) -> Result<usize, ClusterError> {
    if xbar.is_empty() {
        return Err(ClusterError::NoClusters);
    }
    let mut best = 0;
    let mut best_d = metric.distance(x, xbar[0]);
    for (j, &c) in xbar.iter().enumerate().skip(1) {
        let d = metric.distance(x, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    Ok(best)
}

/// Per-agent consensus state. Matrices are `N x M`, row-major by agent.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    n: usize,
    m: usize,
    metric: Metric,
    x_feat: Vec<f64>,
    z_feat: Vec<f64>,
    assignment: Vec<usize>,
    // What each agent currently has fed into the channels.
    fed_cluster_x: Vec<usize>,
    fed_x: Vec<f64>,
    fed_cluster_z: Vec<usize>,
    fed_z: Vec<f64>,
    // Summed channels.
    x_sum: Vec<f64>,
    z_sum: Vec<f64>,
    ind: Vec<f64>,
    // Ratio estimates, held at their last value while the indicator is ~0.
    xbar: Vec<f64>,
    zbar: Vec<f64>,
    prev_delta_x: Vec<f64>,
    prev_delta_z: Vec<f64>,
    prev_delta_ind: Vec<f64>,
}

impl EstimatorState {
    /// Assigns every agent against the initial centroids and feeds its
    /// feature and auxiliary values into the chosen cluster.
    pub fn new(
        features: &[f64],
        aux: &[f64],
        cfg: &ClusterConfig,
        init: &CentroidInit,
    ) -> Result<Self, ClusterError> {
        cfg.validate()?;
        let n = features.len();
        if n == 0 {
            return Err(ClusterError::NoAgents);
        }
        check_len("aux", aux.len(), n)?;
        let m = cfg.m;
        let priors = init.centroids(m, cfg.metric, features)?;
        let mut xbar = Vec::with_capacity(n * m);
        for _ in 0..n {
            xbar.extend_from_slice(&priors);
        }
        let assignment = features
            .iter()
            .map(|&x| assign_cluster(x, &priors, cfg.metric))
            .collect::<Result<Vec<_>, _>>()?;

        let mut x_sum = vec![0.0; n * m];
        let mut z_sum = vec![0.0; n * m];
        let mut ind = vec![0.0; n * m];
        for i in 0..n {
            let k = assignment[i];
            x_sum[i * m + k] = features[i];
            z_sum[i * m + k] = aux[i];
            ind[i * m + k] = 1.0;
        }
        let mut state = Self {
            n,
            m,
            metric: cfg.metric,
            x_feat: features.to_vec(),
            z_feat: aux.to_vec(),
            fed_cluster_x: assignment.clone(),
            fed_x: features.to_vec(),
            fed_cluster_z: assignment.clone(),
            fed_z: aux.to_vec(),
            assignment,
            x_sum,
            z_sum,
            ind,
            xbar,
            zbar: vec![0.0; n * m],
            prev_delta_x: vec![0.0; n * m],
            prev_delta_z: vec![0.0; n * m],
            prev_delta_ind: vec![0.0; n * m],
        };
        state.refresh_ratios(true, true);
        Ok(state)
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn clusters(&self) -> usize {
        self.m
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn features(&self) -> &[f64] {
        &self.x_feat
    }

    pub fn aux_values(&self) -> &[f64] {
        &self.z_feat
    }

    /// Agent `i`'s feature-mean estimates for all clusters.
    pub fn xbar(&self, i: usize) -> &[f64] {
        &self.xbar[i * self.m..(i + 1) * self.m]
    }

    /// Agent `i`'s auxiliary-mean estimates for all clusters.
    pub fn zbar(&self, i: usize) -> &[f64] {
        &self.zbar[i * self.m..(i + 1) * self.m]
    }

    /// Agent `i`'s estimates of each cluster's share of the agents.
    pub fn zbar_ind(&self, i: usize) -> &[f64] {
        &self.ind[i * self.m..(i + 1) * self.m]
    }

    pub fn prev_delta_x(&self, i: usize) -> &[f64] {
        &self.prev_delta_x[i * self.m..(i + 1) * self.m]
    }

    pub fn prev_delta_z(&self, i: usize) -> &[f64] {
        &self.prev_delta_z[i * self.m..(i + 1) * self.m]
    }

    /// Network-wide sum of the feature channel for cluster `j`.
    pub fn feature_mass(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.x_sum[i * self.m + j]).sum()
    }

    pub fn aux_mass(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.z_sum[i * self.m + j]).sum()
    }

    pub fn indicator_mass(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.ind[i * self.m + j]).sum()
    }

    /// Largest absolute change of any channel entry in the last step.
    pub fn last_change(&self) -> f64 {
        self.prev_delta_x
            .iter()
            .chain(&self.prev_delta_z)
            .chain(&self.prev_delta_ind)
            .fold(0.0, |acc, d| acc.max(d.abs()))
    }

    fn refresh_ratios(&mut self, features: bool, aux: bool) {
        for (idx, &w) in self.ind.iter().enumerate() {
            if w > WEIGHT_FLOOR {
                if features {
                    self.xbar[idx] = self.x_sum[idx] / w;
                }
                if aux {
                    self.zbar[idx] = self.z_sum[idx] / w;
                }
            }
        }
    }

    fn reassign(&mut self) {
        for i in 0..self.n {
            let row = &self.xbar[i * self.m..(i + 1) * self.m];
            self.assignment[i] = assign_cluster(self.x_feat[i], row, self.metric).expect("m >= 1");
        }
    }

    fn check_shape(&self, g: &CommGraph, values: &[f64], what: &'static str) -> Result<(), ClusterError> {
        check_len("graph", g.len(), self.n)?;
        check_len(what, values.len(), self.n)
    }

    /// One synchronous feature step: feed current features per the current
    /// assignment, diffuse feature and indicator channels, refresh the
    /// feature means and reassign.
    fn advance_features(&mut self, g: &CommGraph, cfg: &ClusterConfig, features: &[f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        let before_x = self.x_sum.clone();
        let before_ind = self.ind.clone();
        for i in 0..self.n {
            let k = self.assignment[i];
            let x = features[i];
            let (old_k, old_x) = (self.fed_cluster_x[i], self.fed_x[i]);
            if old_k != k {
                self.x_sum[i * m + old_k] -= old_x;
                self.ind[i * m + old_k] -= 1.0;
                self.x_sum[i * m + k] += x;
                self.ind[i * m + k] += 1.0;
            } else if old_x != x {
                self.x_sum[i * m + k] += x - old_x;
            }
            self.fed_cluster_x[i] = k;
            self.fed_x[i] = x;
        }
        self.x_feat.copy_from_slice(features);
        let gain = cfg.dt_inner * g.alpha();
        diffuse(&mut self.x_sum, scratch, g, m, gain);
        diffuse(&mut self.ind, scratch, g, m, gain);
        delta_into(&mut self.prev_delta_x, &self.x_sum, &before_x);
        delta_into(&mut self.prev_delta_ind, &self.ind, &before_ind);
        self.refresh_ratios(true, false);
        self.reassign();
    }

    /// One synchronous auxiliary step using the current assignment.
    fn advance_aux(&mut self, g: &CommGraph, cfg: &ClusterConfig, aux: &[f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        let before = self.z_sum.clone();
        for i in 0..self.n {
            let k = self.assignment[i];
            let z = aux[i];
            let (old_k, old_z) = (self.fed_cluster_z[i], self.fed_z[i]);
            if old_k != k {
                self.z_sum[i * m + old_k] -= old_z;
                self.z_sum[i * m + k] += z;
            } else if old_z != z {
                self.z_sum[i * m + k] += z - old_z;
            }
            self.fed_cluster_z[i] = k;
            self.fed_z[i] = z;
        }
        self.z_feat.copy_from_slice(aux);
        diffuse(&mut self.z_sum, scratch, g, m, cfg.dt_inner * g.alpha());
        delta_into(&mut self.prev_delta_z, &self.z_sum, &before);
        self.refresh_ratios(false, true);
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), ClusterError> {
    if got == expected {
        Ok(())
    } else {
        Err(ClusterError::LengthMismatch { what, got, expected })
    }
}

/// `v <- v - gain * L v` column-wise, from a snapshot of `v`.
fn diffuse(values: &mut [f64], scratch: &mut Vec<f64>, g: &CommGraph, m: usize, gain: f64) {
    scratch.clear();
    scratch.extend_from_slice(values);
    for i in 0..g.len() {
        for j in 0..m {
            let own = scratch[i * m + j];
            let coupling: f64 = g.neighbors(i).iter().map(|&l| scratch[l * m + j] - own).sum();
            values[i * m + j] = own + gain * coupling;
        }
    }
}

fn delta_into(out: &mut [f64], after: &[f64], before: &[f64]) {
    for ((d, a), b) in out.iter_mut().zip(after).zip(before) {
        *d = a - b;
    }
}

fn admit(state: &EstimatorState, g: &CommGraph, cfg: &ClusterConfig) -> Result<(), ClusterError> {
    cfg.validate()?;
    check_len("cluster count", cfg.m, state.m)?;
    g.require_connected()?;
    cfg.check_stability(g)
}

/// Feature consensus step from a snapshot; returns the next state.
pub fn step_feature_consensus(
    state: &EstimatorState,
    g: &CommGraph,
    cfg: &ClusterConfig,
    features: &[f64],
) -> Result<EstimatorState, ClusterError> {
    state.check_shape(g, features, "features")?;
    admit(state, g, cfg)?;
    let mut next = state.clone();
    next.advance_features(g, cfg, features, &mut Vec::new());
    Ok(next)
}

/// Auxiliary consensus step from a snapshot; uses the assignment already
/// computed by the feature step.
pub fn step_aux_consensus(
    state: &EstimatorState,
    g: &CommGraph,
    cfg: &ClusterConfig,
    aux: &[f64],
) -> Result<EstimatorState, ClusterError> {
    state.check_shape(g, aux, "aux")?;
    admit(state, g, cfg)?;
    let mut next = state.clone();
    next.advance_aux(g, cfg, aux, &mut Vec::new());
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub state: EstimatorState,
    pub iterations: usize,
    pub converged: bool,
    /// Largest channel change in the final iteration.
    pub residual: f64,
}

/// Alternates feature and auxiliary steps until no channel entry moves by
/// `tol` or more in one iteration, or `max_iter` is reached.
pub fn run_until_converged(
    state: EstimatorState,
    g: &CommGraph,
    cfg: &ClusterConfig,
    features: &[f64],
    aux: &[f64],
) -> Result<Convergence, ClusterError> {
    state.check_shape(g, features, "features")?;
    state.check_shape(g, aux, "aux")?;
    admit(&state, g, cfg)?;
    let mut state = state;
    let mut scratch = Vec::with_capacity(state.n * state.m);
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        state.advance_features(g, cfg, features, &mut scratch);
        state.advance_aux(g, cfg, aux, &mut scratch);
        residual = state.last_change();
        if residual < cfg.tol {
            return Ok(Convergence {
                state,
                iterations: it,
                converged: true,
                residual,
            });
        }
    }
    Ok(Convergence {
        state,
        iterations: cfg.max_iter,
        converged: false,
        residual,
    })
}

/// What agent `i` knows after clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentClusterRecord {
    pub cluster: usize,
    pub xbar: Vec<f64>,
    pub zbar: Vec<f64>,
    /// Estimated per-cluster totals of the auxiliary signal: mean times the
    /// estimated cardinality.
    pub cluster_totals: Vec<f64>,
}

pub fn cluster_results(state: &EstimatorState, n_total: usize) -> Result<Vec<AgentClusterRecord>, ClusterError> {
    if n_total == 0 {
        return Err(ClusterError::NoAgents);
    }
    Ok((0..state.n)
        .map(|i| {
            let zbar = state.zbar(i).to_vec();
            let cluster_totals = zbar
                .iter()
                .zip(state.zbar_ind(i))
                .map(|(z, w)| z * w * n_total as f64)
                .collect();
            AgentClusterRecord {
                cluster: state.assignment[i],
                xbar: state.xbar(i).to_vec(),
                zbar,
                cluster_totals,
            }
        })
        .collect())
}
