//! Per-step output rows, run summary and their file formats.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::balancing::Scenario;
use crate::threephase::Phase;

pub const BUS_SCHEMA: &str = "# phasebal bus-records v1";
pub const HOUSEHOLD_SCHEMA: &str = "# phasebal household-records v1";

/// One row per step per bus.
///
/// `pg_*` and `pb_actual_*` are indexed by the true phase; `pg_est_*`,
/// `pb_*` and `shortfall_*` by the phase the controller inferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub step: usize,
    pub bus: u32,
    pub dt_h: f64,
    pub members: usize,
    pub pg_pre_a: f64,
    pub pg_pre_b: f64,
    pub pg_pre_c: f64,
    pub pg_est_a: f64,
    pub pg_est_b: f64,
    pub pg_est_c: f64,
    pub scenario: Scenario,
    pub p_ref: f64,
    pub pb_a: f64,
    pub pb_b: f64,
    pub pb_c: f64,
    pub objective: f64,
    pub pb_actual_a: f64,
    pub pb_actual_b: f64,
    pub pb_actual_c: f64,
    pub shortfall_a: f64,
    pub shortfall_b: f64,
    pub shortfall_c: f64,
    pub pg_post_a: f64,
    pub pg_post_b: f64,
    pub pg_post_c: f64,
    pub in_pre: f64,
    pub in_post: f64,
    pub cuf_pre: f64,
    pub cuf_post: f64,
    pub ngv_pre: f64,
    pub ngv_post: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub misassigned: usize,
    pub disagreement: f64,
}

impl BusRecord {
    pub fn pg_pre(&self) -> [f64; 3] {
        [self.pg_pre_a, self.pg_pre_b, self.pg_pre_c]
    }

    pub fn pg_est(&self) -> [f64; 3] {
        [self.pg_est_a, self.pg_est_b, self.pg_est_c]
    }

    pub fn pg_post(&self) -> [f64; 3] {
        [self.pg_post_a, self.pg_post_b, self.pg_post_c]
    }

    pub fn pb(&self) -> [f64; 3] {
        [self.pb_a, self.pb_b, self.pb_c]
    }

    pub fn pb_actual(&self) -> [f64; 3] {
        [self.pb_actual_a, self.pb_actual_b, self.pb_actual_c]
    }

    pub fn shortfall(&self) -> [f64; 3] {
        [self.shortfall_a, self.shortfall_b, self.shortfall_c]
    }

    pub fn total_shortfall(&self) -> f64 {
        self.shortfall().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub step: usize,
    pub household: u32,
    pub bus: u32,
    pub cluster: usize,
    pub phase_est: Phase,
    pub eligible: bool,
    pub p_cmd: f64,
    pub p_actual: f64,
    pub deficit: f64,
    pub soc: f64,
    pub v_b: f64,
    pub i_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub buses: usize,
    pub max_in_pre: f64,
    pub mean_in_pre: f64,
    pub max_in_post: f64,
    pub mean_in_post: f64,
    pub max_cuf_pre: f64,
    pub max_cuf_post: f64,
    pub max_ngv_pre: f64,
    pub max_ngv_post: f64,
    /// Energy moved through batteries, kWh.
    pub battery_throughput_kwh: f64,
    /// Battery energy requested but not delivered, kWh.
    pub total_deficit_kwh: f64,
    /// Fraction of households on their true phase, averaged over steps.
    pub clustering_accuracy_mean: f64,
    pub clustering_accuracy_min: f64,
    pub clustering_accuracy_first: f64,
    pub all_converged: bool,
    pub max_iterations: usize,
    pub max_disagreement: f64,
}

pub fn summarize(records: &[BusRecord]) -> Result<RunSummary, SimError> {
    if records.is_empty() {
        return Err(SimError::Data("no records to summarize".into()));
    }
    let count = records.len() as f64;
    let max = |f: fn(&BusRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    let mean = |f: fn(&BusRecord) -> f64| records.iter().map(f).sum::<f64>() / count;

    let mut steps: Vec<usize> = records.iter().map(|r| r.step).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut buses: Vec<u32> = records.iter().map(|r| r.bus).collect();
    buses.sort_unstable();
    buses.dedup();

    let accuracy_at = |step: usize| {
        let (wrong, total) = records
            .iter()
            .filter(|r| r.step == step)
            .fold((0usize, 0usize), |(w, t), r| (w + r.misassigned, t + r.members));
        1.0 - wrong as f64 / total.max(1) as f64
    };
    let per_step: Vec<f64> = steps.iter().map(|&s| accuracy_at(s)).collect();

    Ok(RunSummary {
        steps: steps.len(),
        buses: buses.len(),
        max_in_pre: max(|r| r.in_pre),
        mean_in_pre: mean(|r| r.in_pre),
        max_in_post: max(|r| r.in_post),
        mean_in_post: mean(|r| r.in_post),
        max_cuf_pre: max(|r| r.cuf_pre),
        max_cuf_post: max(|r| r.cuf_post),
        max_ngv_pre: max(|r| r.ngv_pre),
        max_ngv_post: max(|r| r.ngv_post),
        battery_throughput_kwh: records
            .iter()
            .map(|r| r.pb_actual().iter().map(|p| p.abs()).sum::<f64>() * r.dt_h)
            .sum(),
        total_deficit_kwh: records.iter().map(|r| r.total_shortfall() * r.dt_h).sum(),
        clustering_accuracy_mean: per_step.iter().sum::<f64>() / per_step.len() as f64,
        clustering_accuracy_min: per_step.iter().copied().fold(1.0, f64::min),
        clustering_accuracy_first: per_step[0],
        all_converged: records.iter().all(|r| r.converged),
        max_iterations: records.iter().map(|r| r.iterations).max().unwrap_or(0),
        max_disagreement: max(|r| r.disagreement),
    })
}

fn write_rows<W: Write, T: Serialize>(schema: &str, rows: &[T], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{schema}")?;
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()
}

pub fn write_bus_records<W: Write>(rows: &[BusRecord], out: W) -> std::io::Result<()> {
    write_rows(BUS_SCHEMA, rows, out)
}

pub fn write_household_records<W: Write>(rows: &[HouseholdRecord], out: W) -> std::io::Result<()> {
    write_rows(HOUSEHOLD_SCHEMA, rows, out)
}

/// Reads a bus records file written by [`write_bus_records`].
pub fn read_bus_records<R: Read>(reader: R) -> Result<Vec<BusRecord>, SimError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let rows = rdr
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| SimError::Data(format!("records row {}: {e}", i + 1))))
        .collect::<Result<Vec<BusRecord>, _>>()?;
    if rows.is_empty() {
        return Err(SimError::Data("records file has no rows".into()));
    }
    Ok(rows)
}
