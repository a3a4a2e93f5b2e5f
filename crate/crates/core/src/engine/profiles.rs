//! Household load and PV time series.
//!
//! CSV columns: `step, household_id, p_load_kw, p_pv_kw`. Lines starting with
//! `#` are comments. Every household must cover steps `0..T` exactly once.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROFILE_SCHEMA: &str = "# phasebal profiles v1";

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row {row}: {msg}")]
    Malformed { row: usize, msg: String },
    #[error("negative PV power {value} kW for household {household} at step {step}")]
    NegativePv { household: u32, step: usize, value: f64 },
    #[error("non-finite power for household {household} at step {step}")]
    NonFinite { household: u32, step: usize },
    #[error("duplicate row for household {household} at step {step}")]
    Duplicate { household: u32, step: usize },
    #[error("household {household} is missing step {step}")]
    Gap { household: u32, step: usize },
    #[error("profiles cover {have} steps, horizon needs {need}")]
    TooShort { have: usize, need: usize },
    #[error("no profile for household {0}")]
    MissingHousehold(u32),
    #[error("profile file has no rows")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub step: usize,
    pub household_id: u32,
    pub p_load_kw: f64,
    pub p_pv_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub load_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
}

/// Per-household series, all of the same length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profiles {
    series: BTreeMap<u32, Series>,
    steps: usize,
}

impl Profiles {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn households(&self) -> impl Iterator<Item = u32> + '_ {
        self.series.keys().copied()
    }

    pub fn get(&self, household: u32) -> Option<&Series> {
        self.series.get(&household)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn from_rows(rows: impl IntoIterator<Item = ProfileRow>) -> Result<Self, ProfileError> {
        let mut raw: BTreeMap<u32, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
        for r in rows {
            if !(r.p_load_kw.is_finite() && r.p_pv_kw.is_finite()) {
                return Err(ProfileError::NonFinite {
                    household: r.household_id,
                    step: r.step,
                });
            }
            if r.p_pv_kw < 0.0 {
                return Err(ProfileError::NegativePv {
                    household: r.household_id,
                    step: r.step,
                    value: r.p_pv_kw,
                });
            }
            let prev = raw
                .entry(r.household_id)
                .or_default()
                .insert(r.step, (r.p_load_kw, r.p_pv_kw));
            if prev.is_some() {
                return Err(ProfileError::Duplicate {
                    household: r.household_id,
                    step: r.step,
                });
            }
        }
        let steps = raw
            .values()
            .filter_map(|m| m.keys().next_back().map(|s| s + 1))
            .max()
            .ok_or(ProfileError::Empty)?;
        let mut series = BTreeMap::new();
        for (id, by_step) in raw {
            let mut s = Series {
                load_kw: Vec::with_capacity(steps),
                pv_kw: Vec::with_capacity(steps),
            };
            for step in 0..steps {
                let &(load, pv) = by_step.get(&step).ok_or(ProfileError::Gap { household: id, step })?;
                s.load_kw.push(load);
                s.pv_kw.push(pv);
            }
            series.insert(id, s);
        }
        Ok(Self { series, steps })
    }

    /// Checks that every listed household is present and the series reach
    /// the horizon.
    pub fn check_coverage(&self, households: impl IntoIterator<Item = u32>, horizon: usize) -> Result<(), ProfileError> {
        for id in households {
            if !self.series.contains_key(&id) {
                return Err(ProfileError::MissingHousehold(id));
            }
        }
        if self.steps < horizon {
            return Err(ProfileError::TooShort {
                have: self.steps,
                need: horizon,
            });
        }
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = ProfileRow> + '_ {
        (0..self.steps).flat_map(move |step| {
            self.series.iter().map(move |(&id, s)| ProfileRow {
                step,
                household_id: id,
                p_load_kw: s.load_kw[step],
                p_pv_kw: s.pv_kw[step],
            })
        })
    }

    pub fn insert(&mut self, household: u32, series: Series) {
        self.steps = series.load_kw.len();
        self.series.insert(household, series);
    }
}

pub fn parse_profiles<R: Read>(reader: R) -> Result<Profiles, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (idx, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
        let row = rec.map_err(|e| ProfileError::Malformed {
            row: idx + 1,
            msg: e.to_string(),
        })?;
        rows.push(row);
    }
    Profiles::from_rows(rows)
}

pub fn load_profiles(path: &Path) -> Result<Profiles, ProfileError> {
    let file = std::fs::File::open(path).map_err(|source| ProfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_profiles(std::io::BufReader::new(file))
}

pub fn write_profiles<W: Write>(profiles: &Profiles, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PROFILE_SCHEMA}")?;
    let mut wtr = csv::Writer::from_writer(out);
    for row in profiles.rows() {
        wtr.serialize(row)?;
    }
    wtr.flush()
}
