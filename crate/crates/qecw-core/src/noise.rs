//! Circuit-level noise models and noiseless-circuit annotation.
//!
//! Three parameter constructions share one annotation pass:
//!
//! * `make_scl` — a single rate for every operation, depolarizing idles;
//! * `make_vcl` — idle-during-CNOT rate `p` with dimensionless α-weights
//!   scaling the CNOT, measurement/reset and idle-during-measurement rates;
//! * `make_pbcl` — rates derived from device calibration (T1/T2 relaxation
//!   Pauli-twirled into a biased X/Y/Z channel, durations setting idle
//!   rates), globally scaled by a quality factor χ.
//!
//! Annotation rules:
//! 1. single-qubit gates carry no error (they are absorbed elsewhere);
//! 2. each measurement is preceded by a basis-complementary flip `p_m`;
//! 3. each reset is followed by a basis-complementary flip `p_r`;
//! 4. each CNOT is followed by `DEPOLARIZE2(p_2q)`;
//! 5. every qubit untouched during a tick idles: a biased
//!    `PAULI_CHANNEL_1` at `p_id_2q` (two-qubit-gate ticks) or `p_id_m`
//!    (measurement ticks); qubits running a CNOT inside a measurement tick
//!    additionally idle for the duration difference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, DurationClass, Instruction, MeasureBasis, Qubit};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("probability {value} out of range for {what}")]
    BadProbability { what: &'static str, value: f64 },
    #[error("negative weight {value} for {what}")]
    BadWeight { what: &'static str, value: f64 },
    #[error("unphysical calibration: {0}")]
    Unphysical(String),
    #[error("circuit already carries noise channels")]
    AlreadyAnnotated,
    #[error("calibration json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Parameters of a circuit-level noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Flip probability before each measurement.
    pub p_m: f64,
    /// Flip probability after each reset.
    pub p_r: f64,
    /// Two-qubit depolarizing probability after each CNOT.
    pub p_2q: f64,
    /// Idle error probability during a two-qubit-gate tick.
    pub p_id_2q: f64,
    /// Idle error probability during a measurement tick.
    pub p_id_m: f64,
    /// Idle bias: fraction of idle errors that dephase. 1/2 = depolarizing.
    pub eta_id: f64,
    /// Descriptive weights relative to the idle-during-CNOT rate.
    pub alpha_2q: f64,
    pub alpha_m: f64,
    pub alpha_id_m: f64,
}

fn check_prob(what: &'static str, p: f64) -> Result<f64, NoiseError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(NoiseError::BadProbability { what, value: p });
    }
    Ok(p)
}

fn check_weight(what: &'static str, w: f64) -> Result<f64, NoiseError> {
    if w < 0.0 || w.is_nan() {
        return Err(NoiseError::BadWeight { what, value: w });
    }
    Ok(w)
}

/// Uniform noise: one rate for everything, depolarizing idles.
pub fn make_scl(p: f64) -> Result<NoiseParams, NoiseError> {
    check_prob("p", p)?;
    Ok(NoiseParams {
        p_m: p,
        p_r: p,
        p_2q: p,
        p_id_2q: p,
        p_id_m: p,
        eta_id: 0.5,
        alpha_2q: 1.0,
        alpha_m: 1.0,
        alpha_id_m: 1.0,
    })
}

/// Weighted noise: `p` is the idle-during-CNOT rate; α-weights scale the
/// CNOT, measurement/reset and idle-during-measurement rates.
pub fn make_vcl(
    p: f64,
    alpha_2q: f64,
    alpha_m: f64,
    alpha_id_m: f64,
) -> Result<NoiseParams, NoiseError> {
    check_prob("p", p)?;
    check_weight("alpha_2q", alpha_2q)?;
    check_weight("alpha_m", alpha_m)?;
    check_weight("alpha_id_m", alpha_id_m)?;
    Ok(NoiseParams {
        p_m: check_prob("alpha_m * p", alpha_m * p)?,
        p_r: alpha_m * p,
        p_2q: check_prob("alpha_2q * p", alpha_2q * p)?,
        p_id_2q: p,
        p_id_m: check_prob("alpha_id_m * p", alpha_id_m * p)?,
        eta_id: 0.5,
        alpha_2q,
        alpha_m,
        alpha_id_m,
    })
}

/// Device calibration snapshot. Times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub name: String,
    pub date: String,
    pub p2q_bar: f64,
    pub pm_bar: f64,
    pub pr_bar: f64,
    pub t1: f64,
    pub t2: f64,
    pub tau_2q: f64,
    pub tau_m: f64,
    /// Global error-rate scale in (0, 1]; 1 = device as calibrated.
    pub chi: f64,
}

/// On-disk schema; durations in the units device tables quote.
#[derive(Debug, Serialize, Deserialize)]
struct CalibrationJson {
    name: String,
    date: String,
    p2q: f64,
    pm: f64,
    pr: f64,
    t1_us: f64,
    t2_us: f64,
    tau2q_ns: f64,
    taum_ns: f64,
}

impl Calibration {
    pub fn from_json_str(s: &str) -> Result<Self, NoiseError> {
        let j: CalibrationJson = serde_json::from_str(s)?;
        let cal = Calibration {
            name: j.name,
            date: j.date,
            p2q_bar: j.p2q,
            pm_bar: j.pm,
            pr_bar: j.pr,
            t1: j.t1_us * 1e-6,
            t2: j.t2_us * 1e-6,
            tau_2q: j.tau2q_ns * 1e-9,
            tau_m: j.taum_ns * 1e-9,
            chi: 1.0,
        };
        cal.check()?;
        Ok(cal)
    }

    pub fn to_json_string(&self) -> Result<String, NoiseError> {
        let j = CalibrationJson {
            name: self.name.clone(),
            date: self.date.clone(),
            p2q: self.p2q_bar,
            pm: self.pm_bar,
            pr: self.pr_bar,
            t1_us: self.t1 * 1e6,
            t2_us: self.t2 * 1e6,
            tau2q_ns: self.tau_2q * 1e9,
            taum_ns: self.tau_m * 1e9,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn with_chi(mut self, chi: f64) -> Result<Self, NoiseError> {
        if !(chi > 0.0 && chi <= 1.0) {
            return Err(NoiseError::Unphysical(format!(
                "chi must be in (0, 1], got {chi}"
            )));
        }
        self.chi = chi;
        Ok(self)
    }

    pub fn check(&self) -> Result<(), NoiseError> {
        check_prob("p2q", self.p2q_bar)?;
        check_prob("pm", self.pm_bar)?;
        check_prob("pr", self.pr_bar)?;
        for (what, t) in [
            ("T1", self.t1),
            ("T2", self.t2),
            ("tau_2q", self.tau_2q),
            ("tau_m", self.tau_m),
        ] {
            if !(t > 0.0) {
                return Err(NoiseError::Unphysical(format!("{what} must be > 0, got {t}")));
            }
        }
        if self.t2 > 2.0 * self.t1 {
            return Err(NoiseError::Unphysical(format!(
                "T2 = {} exceeds 2*T1 = {}",
                self.t2,
                2.0 * self.t1
            )));
        }
        if !(self.chi > 0.0 && self.chi <= 1.0) {
            return Err(NoiseError::Unphysical(format!("chi = {}", self.chi)));
        }
        Ok(())
    }

    /// Twirled idle error probability accumulated over duration `tau`.
    pub fn p_idle(&self, tau: f64) -> f64 {
        (tau / 2.0) * (1.0 / (2.0 * self.t1) + 1.0 / self.t2)
    }
}

/// Calibration-derived noise: idle rates from T1/T2 over gate durations,
/// everything scaled by χ.
pub fn make_pbcl(cal: &Calibration) -> Result<NoiseParams, NoiseError> {
    cal.check()?;
    let p_id_2q_bar = cal.p_idle(cal.tau_2q);
    let p_id_m_bar = cal.p_idle(cal.tau_m);
    let eta_id = cal.t1 / cal.t2 - 0.5;
    let chi = cal.chi;
    Ok(NoiseParams {
        p_m: check_prob("chi * pm", chi * cal.pm_bar)?,
        p_r: check_prob("chi * pr", chi * cal.pr_bar)?,
        p_2q: check_prob("chi * p2q", chi * cal.p2q_bar)?,
        p_id_2q: check_prob("chi * p_id_2q", chi * p_id_2q_bar)?,
        p_id_m: check_prob("chi * p_id_m", chi * p_id_m_bar)?,
        eta_id,
        alpha_2q: cal.p2q_bar / p_id_2q_bar,
        alpha_m: cal.pm_bar / p_id_2q_bar,
        alpha_id_m: p_id_m_bar / p_id_2q_bar,
    })
}

/// Splits total probability `p` into (px, py, pz) with bias `eta`:
/// pz/(px+py) = eta, px = py, and (px + py) + pz = p exactly.
///
/// Exactness comes from computing the smaller share first and taking the
/// larger one as a remainder, which Sterbenz's lemma keeps rounding-free.
pub fn biased_channel(p: f64, eta: f64) -> (f64, f64, f64) {
    if p <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if eta >= 1.0 {
        let pz = p * (eta / (1.0 + eta));
        let rem = p - pz; // exact: p/2 <= pz <= p
        let px = rem / 2.0; // exact binary halving
        (px, px, pz)
    } else {
        let px = p / (2.0 * (1.0 + eta));
        let pz = p - 2.0 * px; // exact: p/2 <= 2*px <= p
        (px, px, pz)
    }
}

impl NoiseParams {
    /// Extra idle rate for CNOT qubits inside a measurement tick.
    ///
    /// With explicit durations this is the twirled idle error over
    /// `tau_m - tau_2q`; in rate terms it is `p_id_m - p_id_2q`, never
    /// negative (equal rates mean no surcharge).
    pub fn idle_surcharge(&self) -> f64 {
        (self.p_id_m - self.p_id_2q).max(0.0)
    }
}

/// Basis-complementary flip: the Pauli that fully anticommutes with the
/// basis operator. For the Y basis both X and Z flip; X is used.
fn complementary_flip(basis: MeasureBasis, p: f64, targets: Vec<Qubit>) -> Instruction {
    match basis {
        MeasureBasis::Z | MeasureBasis::Y => Instruction::XError { p, targets },
        MeasureBasis::X => Instruction::ZError { p, targets },
    }
}

/// Annotates a noiseless circuit with the channels of `np`.
///
/// The tick structure is preserved (duration classes derive from contents,
/// which annotation never changes). Zero-probability channels are omitted,
/// so all-zero parameters return a semantically identical circuit.
pub fn annotate(circuit: &Circuit, np: &NoiseParams) -> Result<Circuit, NoiseError> {
    if circuit.has_noise() {
        return Err(NoiseError::AlreadyAnnotated);
    }
    for (what, p) in [
        ("p_m", np.p_m),
        ("p_r", np.p_r),
        ("p_2q", np.p_2q),
        ("p_id_2q", np.p_id_2q),
        ("p_id_m", np.p_id_m),
    ] {
        check_prob(what, p)?;
    }
    check_weight("eta_id", np.eta_id)?;

    let universe: Vec<Qubit> = {
        let mut qs: Vec<Qubit> = circuit
            .instructions
            .iter()
            .flat_map(|i| i.targets().iter().copied())
            .collect();
        qs.sort_unstable();
        qs.dedup();
        qs
    };

    let mut out = Circuit {
        instructions: Vec::with_capacity(circuit.instructions.len() * 2),
        qubit_coords: circuit.qubit_coords.clone(),
    };

    let segments = circuit.segments();
    for (si, seg) in segments.iter().enumerate() {
        let mut touched: Vec<Qubit> = Vec::new();
        for inst in &circuit.instructions[seg.range.clone()] {
            touched.extend_from_slice(inst.targets());
        }
        touched.sort_unstable();
        touched.dedup();

        for inst in &circuit.instructions[seg.range.clone()] {
            match inst {
                Instruction::Cnot(ts) => {
                    out.instructions.push(inst.clone());
                    if np.p_2q > 0.0 {
                        out.instructions.push(Instruction::Depolarize2 {
                            p: np.p_2q,
                            targets: ts.clone(),
                        });
                    }
                    if seg.class == DurationClass::Measurement {
                        let (px, py, pz) = biased_channel(np.idle_surcharge(), np.eta_id);
                        if px + py + pz > 0.0 {
                            out.instructions.push(Instruction::PauliChannel1 {
                                px,
                                py,
                                pz,
                                targets: ts.clone(),
                            });
                        }
                    }
                }
                Instruction::Measure(b, ts) => {
                    if np.p_m > 0.0 {
                        out.instructions
                            .push(complementary_flip(*b, np.p_m, ts.clone()));
                    }
                    out.instructions.push(inst.clone());
                }
                Instruction::Reset(b, ts) => {
                    out.instructions.push(inst.clone());
                    if np.p_r > 0.0 {
                        out.instructions
                            .push(complementary_flip(*b, np.p_r, ts.clone()));
                    }
                }
                Instruction::Tick => unreachable!("segments exclude ticks"),
                _ => out.instructions.push(inst.clone()),
            }
        }

        let idle_rate = match seg.class {
            DurationClass::TwoQubit => np.p_id_2q,
            DurationClass::Measurement => np.p_id_m,
        };
        if idle_rate > 0.0 {
            let idle: Vec<Qubit> = universe
                .iter()
                .copied()
                .filter(|q| touched.binary_search(q).is_err())
                .collect();
            if !idle.is_empty() {
                let (px, py, pz) = biased_channel(idle_rate, np.eta_id);
                out.instructions.push(Instruction::PauliChannel1 {
                    px,
                    py,
                    pz,
                    targets: idle,
                });
            }
        }

        if si + 1 < segments.len() {
            out.instructions.push(Instruction::Tick);
        }
    }
    Ok(out)
}
