//! Quasi-static simulation of single-phase battery storage balancing the
//! three phases of a low-voltage feeder bus.
//!
//! Households find their phase through distributed consensus clustering on
//! measured voltage angles, share per-phase grid exchange estimates within and
//! across clusters, and dispatch batteries so every phase exchanges the same
//! power with the grid.

pub mod balancing;
pub mod clustering;
pub mod engine;
pub mod graph;
pub mod storage;
pub mod threephase;
pub mod verify;

pub use balancing::{BalancingDecision, GridExchange, Scenario};
pub use clustering::{ClusterConfig, EstimatorState};
pub use engine::{ScenarioConfig, Simulation};
pub use graph::CommGraph;
pub use storage::{BatteryParams, BatteryState};
pub use threephase::{Phase, Phasor};
