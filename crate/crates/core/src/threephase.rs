//! Three-phase phasor arithmetic: nominal bus voltages, net phase currents,
//! neutral current, symmetrical components and the current unbalance factor.
//!
//! Phasors are RMS. Phase `a` is the 0° reference, `b` lags by 120° and `c`
//! leads by 120°.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this magnitude the positive sequence is treated as absent.
pub const MIN_POSITIVE_SEQUENCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhasorError {
    #[error("voltage magnitude must be positive, got {0}")]
    NonPositiveVoltage(f64),
    #[error("zero voltage across phase {0} (voltage collapse)")]
    VoltageCollapse(Phase),
    #[error("positive-sequence current is zero; unbalance factor undefined")]
    NoPositiveSequence,
    #[error("negative PV power on phase {0}")]
    NegativePv(Phase),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    /// Nominal angle of the phase voltage in degrees.
    pub fn nominal_angle_deg(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        })
    }
}

/// A complex RMS quantity (volts, amperes or ohms depending on context).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Phasor {
    pub re: f64,
    pub im: f64,
}

impl Phasor {
    pub const ZERO: Phasor = Phasor { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar_deg(magnitude: f64, angle_deg: f64) -> Self {
        Complex64::from_polar(magnitude, angle_deg.to_radians()).into()
    }

    pub fn magnitude(self) -> f64 {
        self.complex().norm()
    }

    pub fn angle_deg(self) -> f64 {
        self.complex().arg().to_degrees()
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl From<Complex64> for Phasor {
    fn from(c: Complex64) -> Self {
        Self::new(c.re, c.im)
    }
}

impl Add for Phasor {
    type Output = Phasor;
    fn add(self, rhs: Phasor) -> Phasor {
        Phasor::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for Phasor {
    type Output = Phasor;
    fn sub(self, rhs: Phasor) -> Phasor {
        Phasor::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for Phasor {
    type Output = Phasor;
    fn mul(self, rhs: Phasor) -> Phasor {
        (self.complex() * rhs.complex()).into()
    }
}

impl Mul<f64> for Phasor {
    type Output = Phasor;
    fn mul(self, rhs: f64) -> Phasor {
        Phasor::new(self.re * rhs, self.im * rhs)
    }
}

impl Neg for Phasor {
    type Output = Phasor;
    fn neg(self) -> Phasor {
        Phasor::new(-self.re, -self.im)
    }
}

/// Per-phase active and reactive powers at a bus, in kW / kVAr.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePowers {
    pub p_load: [f64; 3],
    pub q_load: [f64; 3],
    pub p_pv: [f64; 3],
    pub q_pv: [f64; 3],
}

impl PhasePowers {
    /// Unity power factor loads and PV.
    pub fn active(p_load: [f64; 3], p_pv: [f64; 3]) -> Self {
        Self {
            p_load,
            p_pv,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PhasorError> {
        for phase in Phase::ALL {
            if self.p_pv[phase.index()] < 0.0 {
                return Err(PhasorError::NegativePv(phase));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceComponents {
    pub positive: Phasor,
    pub negative: Phasor,
    pub zero: Phasor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnbalanceMetrics {
    pub i_neutral: Phasor,
    pub i_phase: [Phasor; 3],
    pub cuf_percent: f64,
    pub ngv_proxy: Phasor,
}

/// Balanced positive-sequence set `vm∠0°, vm∠-120°, vm∠+120°`.
pub fn phase_voltages(vm: f64) -> Result<[Phasor; 3], PhasorError> {
    if !(vm > 0.0 && vm.is_finite()) {
        return Err(PhasorError::NonPositiveVoltage(vm));
    }
    Ok(Phase::ALL.map(|p| Phasor::from_polar_deg(vm, p.nominal_angle_deg())))
}

/// Net current drawn by each phase:
/// `I = [(P_l + jQ_l)* - (P_pv + jQ_pv)*] / [(V)* - (V_n)*]`, powers in watts.
pub fn net_phase_currents(
    pp: &PhasePowers,
    v: &[Phasor; 3],
    vn: Phasor,
) -> Result<[Phasor; 3], PhasorError> {
    let mut out = [Phasor::ZERO; 3];
    for phase in Phase::ALL {
        let i = phase.index();
        let denom = v[i].conj() - vn.conj();
        if denom.magnitude() == 0.0 {
            return Err(PhasorError::VoltageCollapse(phase));
        }
        let s_load = Complex64::new(pp.p_load[i], pp.q_load[i]) * 1000.0;
        let s_pv = Complex64::new(pp.p_pv[i], pp.q_pv[i]) * 1000.0;
        out[i] = ((s_load.conj() - s_pv.conj()) / denom.complex()).into();
    }
    Ok(out)
}

/// `I_N = -(I_a + I_b + I_c)`.
pub fn neutral_current(i_net: &[Phasor; 3]) -> Phasor {
    -(i_net[0] + i_net[1] + i_net[2])
}

/// Fortescue transform with `a = e^{j2π/3}`.
pub fn symmetrical_components(i_abc: &[Phasor; 3]) -> SequenceComponents {
    let a = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let a2 = a * a;
    let [ia, ib, ic] = i_abc.map(Phasor::complex);
    SequenceComponents {
        positive: ((ia + a * ib + a2 * ic) / 3.0).into(),
        negative: ((ia + a2 * ib + a * ic) / 3.0).into(),
        zero: ((ia + ib + ic) / 3.0).into(),
    }
}

/// Inverse Fortescue transform.
pub fn phase_from_sequences(seq: &SequenceComponents) -> [Phasor; 3] {
    let a = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let a2 = a * a;
    let (p, n, z) = (seq.positive.complex(), seq.negative.complex(), seq.zero.complex());
    [(z + p + n).into(), (z + a2 * p + a * n).into(), (z + a * p + a2 * n).into()]
}

/// Current unbalance factor in percent.
pub fn cuf(i_abc: &[Phasor; 3]) -> Result<f64, PhasorError> {
    let seq = symmetrical_components(i_abc);
    let ps = seq.positive.magnitude();
    if ps < MIN_POSITIVE_SEQUENCE {
        return Err(PhasorError::NoPositiveSequence);
    }
    Ok(seq.negative.magnitude().hypot(seq.zero.magnitude()) / ps * 100.0)
}

/// Neutral-to-ground voltage through a lumped grounding impedance.
pub fn ngv_proxy(i_n: Phasor, z_n: Phasor) -> Phasor {
    z_n * i_n
}

/// Full metric set for one bus at nominal voltage with a solidly referenced
/// neutral (`V_n = 0`).
///
/// With no current flowing at all the unbalance factor is reported as zero.
pub fn unbalance_metrics(pp: &PhasePowers, vm: f64, z_n: Phasor) -> Result<UnbalanceMetrics, PhasorError> {
    pp.validate()?;
    let v = phase_voltages(vm)?;
    let i_phase = net_phase_currents(pp, &v, Phasor::ZERO)?;
    let i_neutral = neutral_current(&i_phase);
    let cuf_percent = match cuf(&i_phase) {
        Ok(c) => c,
        Err(_) if i_phase.iter().all(|i| i.magnitude() < 1e-9) => 0.0,
        Err(_) => f64::INFINITY,
    };
    Ok(UnbalanceMetrics {
        i_neutral,
        i_phase,
        cuf_percent,
        ngv_proxy: ngv_proxy(i_neutral, z_n),
    })
}
