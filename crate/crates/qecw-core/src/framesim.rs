//! Batched Monte Carlo sampling of noisy stabilizer circuits.
//!
//! Noise is propagated as Pauli frames (see [`crate::pauli`]): every shot
//! tracks only the XOR difference to the noiseless reference execution, so a
//! whole circuit costs O(gates) bit operations per shot and 64 shots share
//! each machine word. Detection events and observable flips are parities of
//! measurement-record flips, which makes the reference record itself
//! unnecessary during sampling — only [`reference_sample`] computes it.
//!
//! # Shot blocks and randomness
//!
//! Shots are processed in blocks of 64. Block `b` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with stream `b`, so the bits produced
//! for a given `(circuit, shots, seed)` are identical no matter how many
//! worker threads participate or how blocks are scheduled. Blocks are
//! distributed over the rayon pool and written into disjoint row ranges.
//!
//! Per noise channel, the 64 lanes of a block are visited with geometric
//! gap sampling: the next erroring lane is `lane + 1 + ⌊ln U / ln(1-p)⌋`,
//! so a channel costs O(1 + 64 p) draws instead of 64. Multi-outcome
//! channels draw one extra variate per erroring lane to pick the Pauli
//! component.
//!
//! # Dump formats
//!
//! [`SampleBatch::write_binary`] emits a 64-byte header (magic `QECWDET1`,
//! version, shot/detector/observable counts, seed) followed by shot-major
//! bit-packed rows: `ceil(detectors/64)` little-endian 64-bit words, then
//! `ceil(observables/64)` words, per shot. [`SampleBatch::write_csv`] is a
//! readable alternative for small runs with one row per shot and one column
//! per detector (`D0`, `D1`, ...) and observable (`L0`, ...).

use std::io::{self, Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Instruction, Violation};
use crate::pauli::{FrameBlock, MeasureAxis};

/// Errors from sampling and from reading/writing dumps.
#[derive(Debug, Error)]
pub enum FramesimError {
    /// The noiseless execution is not deterministic (a builder bug).
    #[error("reference record is not deterministic: {0:?}")]
    Nondeterministic(Violation),
    /// Record references could not be resolved.
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// A binary dump whose header does not parse.
    #[error("bad detection-event dump: {0}")]
    BadDump(String),
}

/// Detection events and observable flips for a batch of shots.
///
/// Rows are shot-major and bit-packed: shot `s` occupies words
/// `[s*W, (s+1)*W)` of `detection_events` where `W = detectors.div_ceil(64)`,
/// and detector `k` is bit `k % 64` of word `k / 64` within the row
/// (observables likewise). A set detector bit means the detector parity
/// differs from the noiseless reference; a set observable bit means the
/// logical readout is flipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    pub shots: u64,
    pub seed: u64,
    /// Number of detectors per shot.
    pub detectors: usize,
    /// Number of observables per shot.
    pub observables: usize,
    /// Shot-major bit-packed detector flips, `shots * detectors.div_ceil(64)` words.
    pub detection_events: Vec<u64>,
    /// Shot-major bit-packed observable flips, `shots * observables.div_ceil(64)` words.
    pub observable_flips: Vec<u64>,
}

const DUMP_MAGIC: [u8; 8] = *b"QECWDET1";
const DUMP_VERSION: u32 = 1;

impl SampleBatch {
    /// Words per shot-row of `detection_events`.
    pub fn det_words_per_shot(&self) -> usize {
        self.detectors.div_ceil(64)
    }

    /// Words per shot-row of `observable_flips`.
    pub fn obs_words_per_shot(&self) -> usize {
        self.observables.div_ceil(64)
    }

    /// The packed detector row of one shot.
    pub fn detector_row(&self, shot: u64) -> &[u64] {
        let w = self.det_words_per_shot();
        let s = shot as usize;
        &self.detection_events[s * w..(s + 1) * w]
    }

    /// The packed observable row of one shot.
    pub fn observable_row(&self, shot: u64) -> &[u64] {
        let w = self.obs_words_per_shot();
        let s = shot as usize;
        &self.observable_flips[s * w..(s + 1) * w]
    }

    /// Whether detector `k` fired in `shot`.
    pub fn detector(&self, shot: u64, k: usize) -> bool {
        self.detector_row(shot)[k / 64] >> (k % 64) & 1 != 0
    }

    /// Whether observable `k` flipped in `shot`.
    pub fn observable(&self, shot: u64, k: usize) -> bool {
        self.observable_row(shot)[k / 64] >> (k % 64) & 1 != 0
    }

    /// Total fires per detector across all shots.
    pub fn detector_counts(&self) -> Vec<u64> {
        column_counts(&self.detection_events, self.detectors)
    }

    /// Total flips per observable across all shots.
    pub fn observable_counts(&self) -> Vec<u64> {
        column_counts(&self.observable_flips, self.observables)
    }

    /// Writes the binary dump: 64-byte header, then bit-packed shot rows.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = [0u8; 64];
        header[0..8].copy_from_slice(&DUMP_MAGIC);
        header[8..12].copy_from_slice(&DUMP_VERSION.to_le_bytes());
        header[16..24].copy_from_slice(&self.shots.to_le_bytes());
        header[24..28].copy_from_slice(&(self.detectors as u32).to_le_bytes());
        header[28..32].copy_from_slice(&(self.observables as u32).to_le_bytes());
        header[32..40].copy_from_slice(&self.seed.to_le_bytes());
        w.write_all(&header)?;
        let dw = self.det_words_per_shot();
        let ow = self.obs_words_per_shot();
        for s in 0..self.shots as usize {
            for word in &self.detection_events[s * dw..(s + 1) * dw] {
                w.write_all(&word.to_le_bytes())?;
            }
            for word in &self.observable_flips[s * ow..(s + 1) * ow] {
                w.write_all(&word.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump written by [`SampleBatch::write_binary`].
    pub fn read_binary<R: Read>(mut r: R) -> Result<SampleBatch, FramesimError> {
        let mut header = [0u8; 64];
        r.read_exact(&mut header)?;
        if header[0..8] != DUMP_MAGIC {
            return Err(FramesimError::BadDump("magic mismatch".into()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != DUMP_VERSION {
            return Err(FramesimError::BadDump(format!(
                "unsupported version {version}"
            )));
        }
        let shots = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let detectors = u32::from_le_bytes(header[24..28].try_into().unwrap()) as usize;
        let observables = u32::from_le_bytes(header[28..32].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(header[32..40].try_into().unwrap());
        let dw = detectors.div_ceil(64);
        let ow = observables.div_ceil(64);
        let rows = shots as usize;
        let mut detection_events = Vec::with_capacity(rows * dw);
        let mut observable_flips = Vec::with_capacity(rows * ow);
        let mut buf = vec![0u8; (dw + ow) * 8];
        for _ in 0..rows {
            r.read_exact(&mut buf)?;
            for chunk in buf[..dw * 8].chunks_exact(8) {
                detection_events.push(u64::from_le_bytes(chunk.try_into().unwrap()));
            }
            for chunk in buf[dw * 8..].chunks_exact(8) {
                observable_flips.push(u64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        Ok(SampleBatch {
            shots,
            seed,
            detectors,
            observables,
            detection_events,
            observable_flips,
        })
    }

    /// Writes one CSV row per shot with `D{k}` and `L{k}` 0/1 columns.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FramesimError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["shot".to_string()];
        header.extend((0..self.detectors).map(|k| format!("D{k}")));
        header.extend((0..self.observables).map(|k| format!("L{k}")));
        wtr.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for s in 0..self.shots {
            row.clear();
            row.push(s.to_string());
            for k in 0..self.detectors {
                row.push(if self.detector(s, k) { "1" } else { "0" }.to_string());
            }
            for k in 0..self.observables {
                row.push(if self.observable(s, k) { "1" } else { "0" }.to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn column_counts(rows: &[u64], columns: usize) -> Vec<u64> {
    let wps = columns.div_ceil(64);
    let mut counts = vec![0u64; columns];
    if wps == 0 {
        return counts;
    }
    for row in rows.chunks_exact(wps) {
        for (j, &word) in row.iter().enumerate() {
            let mut w = word;
            while w != 0 {
                let k = w.trailing_zeros() as usize;
                counts[j * 64 + k] += 1;
                w &= w - 1;
            }
        }
    }
    counts
}

/// The noiseless measurement record of a circuit.
///
/// Runs an exact stabilizer analysis first and fails if any detector or
/// observable parity depends on a random measurement outcome or if a
/// detector parity is deterministically one — both signal builder bugs.
/// Noise instructions are ignored.
pub fn reference_sample(circuit: &Circuit) -> Result<Vec<bool>, FramesimError> {
    let violations = crate::tableau::determinism_violations(circuit);
    if let Some(v) = violations.first() {
        return Err(FramesimError::Nondeterministic(v.clone()));
    }
    Ok(crate::tableau::run_reference(circuit))
}

/// Samples `shots` noisy executions of an annotated circuit.
///
/// Detection events are parities of measurement-record flips relative to the
/// noiseless reference, so the circuit should pass [`crate::circuit::validate`]
/// for them to equal actual detector values. The result is bit-identical for
/// fixed `(circuit, shots, seed)` regardless of rayon worker count.
pub fn sample(circuit: &Circuit, shots: u64, seed: u64) -> Result<SampleBatch, FramesimError> {
    let compiled = Compiled::build(circuit)?;
    let det_wps = compiled.detectors.len().div_ceil(64);
    let obs_wps = compiled.observables.len().div_ceil(64);
    let rows = shots as usize;
    let mut detection_events = vec![0u64; rows * det_wps];
    let mut observable_flips = vec![0u64; rows * obs_wps];

    match (det_wps > 0, obs_wps > 0) {
        (true, true) => {
            detection_events
                .par_chunks_mut(64 * det_wps)
                .zip(observable_flips.par_chunks_mut(64 * obs_wps))
                .enumerate()
                .for_each(|(b, (det, obs))| {
                    compiled.run_block(seed, b as u64, Some(det), Some(obs))
                });
        }
        (true, false) => {
            detection_events
                .par_chunks_mut(64 * det_wps)
                .enumerate()
                .for_each(|(b, det)| compiled.run_block(seed, b as u64, Some(det), None));
        }
        (false, true) => {
            observable_flips
                .par_chunks_mut(64 * obs_wps)
                .enumerate()
                .for_each(|(b, obs)| compiled.run_block(seed, b as u64, None, Some(obs)));
        }
        (false, false) => {}
    }

    Ok(SampleBatch {
        shots,
        seed,
        detectors: compiled.detectors.len(),
        observables: compiled.observables.len(),
        detection_events,
        observable_flips,
    })
}

/// `1 / ln(1-p)`; negative, and `-0.0` at `p = 1` (making every gap 0).
fn gap_factor(p: f64) -> f64 {
    1.0 / (-p).ln_1p()
}

/// Flat execution plan: gate stream with channel probabilities precomputed.
struct Compiled {
    num_qubits: usize,
    num_records: usize,
    ops: Vec<BlockOp>,
    /// Absolute record indices per detector.
    detectors: Vec<Vec<u32>>,
    /// Absolute record indices per observable.
    observables: Vec<Vec<u32>>,
}

enum BlockOp {
    Cnot { control: usize, target: usize },
    Measure { q: usize, basis: MeasureAxis, rec: u32 },
    Reset { q: usize },
    FlipX { q: usize, gap: f64 },
    FlipZ { q: usize, gap: f64 },
    Dep1 { q: usize, gap: f64 },
    Dep2 { a: usize, b: usize, gap: f64 },
    /// `tx`/`txy` are the X and X+Y component shares of the total rate.
    Chan1 { q: usize, gap: f64, tx: f64, txy: f64 },
}

impl Compiled {
    fn build(circuit: &Circuit) -> Result<Compiled, FramesimError> {
        let mut ops = Vec::new();
        let mut rec = 0u32;
        for inst in &circuit.instructions {
            match inst {
                Instruction::Reset(_, targets) => {
                    ops.extend(targets.iter().map(|&q| BlockOp::Reset { q: q as usize }));
                }
                Instruction::Measure(basis, targets) => {
                    for &q in targets {
                        ops.push(BlockOp::Measure {
                            q: q as usize,
                            basis: *basis,
                            rec,
                        });
                        rec += 1;
                    }
                }
                Instruction::Cnot(targets) => {
                    ops.extend(targets.chunks_exact(2).map(|pair| BlockOp::Cnot {
                        control: pair[0] as usize,
                        target: pair[1] as usize,
                    }));
                }
                Instruction::XError { p, targets } if *p > 0.0 => {
                    let gap = gap_factor(*p);
                    ops.extend(targets.iter().map(|&q| BlockOp::FlipX {
                        q: q as usize,
                        gap,
                    }));
                }
                Instruction::ZError { p, targets } if *p > 0.0 => {
                    let gap = gap_factor(*p);
                    ops.extend(targets.iter().map(|&q| BlockOp::FlipZ {
                        q: q as usize,
                        gap,
                    }));
                }
                Instruction::Depolarize1 { p, targets } if *p > 0.0 => {
                    let gap = gap_factor(*p);
                    ops.extend(targets.iter().map(|&q| BlockOp::Dep1 {
                        q: q as usize,
                        gap,
                    }));
                }
                Instruction::Depolarize2 { p, targets } if *p > 0.0 => {
                    let gap = gap_factor(*p);
                    ops.extend(targets.chunks_exact(2).map(|pair| BlockOp::Dep2 {
                        a: pair[0] as usize,
                        b: pair[1] as usize,
                        gap,
                    }));
                }
                Instruction::PauliChannel1 { px, py, pz, targets } => {
                    let total = px + py + pz;
                    if total > 0.0 {
                        let gap = gap_factor(total);
                        let tx = px / total;
                        let txy = (px + py) / total;
                        ops.extend(targets.iter().map(|&q| BlockOp::Chan1 {
                            q: q as usize,
                            gap,
                            tx,
                            txy,
                        }));
                    }
                }
                _ => {}
            }
        }
        Ok(Compiled {
            num_qubits: circuit.num_qubits(),
            num_records: circuit.num_measurements(),
            ops,
            detectors: circuit
                .resolved_detectors()?
                .into_iter()
                .map(|d| d.records.into_iter().map(|r| r as u32).collect())
                .collect(),
            observables: circuit
                .resolved_observables()?
                .into_iter()
                .map(|o| o.records.into_iter().map(|r| r as u32).collect())
                .collect(),
        })
    }

    /// Simulates the 64 shots of one block and scatters packed rows.
    ///
    /// Output slices hold `rows * words_per_shot` words where `rows` may be
    /// under 64 for the final partial block; all 64 lanes are simulated
    /// regardless so the RNG stream never depends on the batch size.
    fn run_block(
        &self,
        seed: u64,
        block: u64,
        det_out: Option<&mut [u64]>,
        obs_out: Option<&mut [u64]>,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        let mut frames = FrameBlock::new(self.num_qubits);
        let mut rec = vec![0u64; self.num_records];

        for op in &self.ops {
            match *op {
                BlockOp::Cnot { control, target } => frames.apply_cnot(control, target),
                BlockOp::Measure { q, basis, rec: r } => {
                    rec[r as usize] = frames.measurement_flips(q, basis);
                }
                BlockOp::Reset { q } => frames.reset(q),
                BlockOp::FlipX { q, gap } => {
                    let w = bernoulli_word(&mut rng, gap);
                    frames.xor_x(q, w);
                }
                BlockOp::FlipZ { q, gap } => {
                    let w = bernoulli_word(&mut rng, gap);
                    frames.xor_z(q, w);
                }
                BlockOp::Dep1 { q, gap } => {
                    let mut w = bernoulli_word(&mut rng, gap);
                    let (mut mx, mut mz) = (0u64, 0u64);
                    while w != 0 {
                        let bit = w & w.wrapping_neg();
                        w ^= bit;
                        // 0 → X, 1 → Y, 2 → Z, each 1/3.
                        let c = pick(&mut rng, 3);
                        if c != 2 {
                            mx |= bit;
                        }
                        if c != 0 {
                            mz |= bit;
                        }
                    }
                    frames.xor_x(q, mx);
                    frames.xor_z(q, mz);
                }
                BlockOp::Dep2 { a, b, gap } => {
                    let mut w = bernoulli_word(&mut rng, gap);
                    let (mut ax, mut az, mut bx, mut bz) = (0u64, 0u64, 0u64, 0u64);
                    while w != 0 {
                        let bit = w & w.wrapping_neg();
                        w ^= bit;
                        // 1..=15 encodes (P_a, P_b) ≠ (I, I): two bits per
                        // qubit with bit0 = X part, bit1 = Z part.
                        let c = pick(&mut rng, 15) + 1;
                        if c & 0b0100 != 0 {
                            ax |= bit;
                        }
                        if c & 0b1000 != 0 {
                            az |= bit;
                        }
                        if c & 0b0001 != 0 {
                            bx |= bit;
                        }
                        if c & 0b0010 != 0 {
                            bz |= bit;
                        }
                    }
                    frames.xor_x(a, ax);
                    frames.xor_z(a, az);
                    frames.xor_x(b, bx);
                    frames.xor_z(b, bz);
                }
                BlockOp::Chan1 { q, gap, tx, txy } => {
                    let mut w = bernoulli_word(&mut rng, gap);
                    let (mut mx, mut mz) = (0u64, 0u64);
                    while w != 0 {
                        let bit = w & w.wrapping_neg();
                        w ^= bit;
                        let u: f64 = rng.random();
                        if u < tx {
                            mx |= bit;
                        } else if u < txy {
                            mx |= bit;
                            mz |= bit;
                        } else {
                            mz |= bit;
                        }
                    }
                    frames.xor_x(q, mx);
                    frames.xor_z(q, mz);
                }
            }
        }

        if let Some(out) = det_out {
            scatter_rows(&self.detectors, &rec, out);
        }
        if let Some(out) = obs_out {
            scatter_rows(&self.observables, &rec, out);
        }
    }
}

/// Draws a 64-lane Bernoulli word with success probability `p`, where
/// `gap = 1/ln(1-p)`; bit `s` is lane (shot) `s` of the block.
#[inline]
fn bernoulli_word(rng: &mut ChaCha8Rng, gap: f64) -> u64 {
    let mut word = 0u64;
    let mut lane: i64 = -1;
    loop {
        let u: f64 = rng.random();
        // `as` saturates: a huge or infinite gap simply ends the walk.
        let skip = (u.ln() * gap) as i64;
        lane = lane.saturating_add(1).saturating_add(skip);
        if lane >= 64 {
            return word;
        }
        word |= 1u64 << lane;
    }
}

/// Uniform draw from `0..n` (component choice; bias is O(n / 2^64)).
#[inline]
fn pick(rng: &mut ChaCha8Rng, n: u32) -> u32 {
    ((rng.next_u64() as u128 * n as u128) >> 64) as u32
}

/// Folds record-flip words into per-group parities and transposes the
/// group-major 64-shot words into shot-major packed rows.
fn scatter_rows(groups: &[Vec<u32>], rec: &[u64], out: &mut [u64]) {
    let wps = groups.len().div_ceil(64);
    let rows = out.len() / wps;
    for (j, chunk) in groups.chunks(64).enumerate() {
        let mut t = [0u64; 64];
        for (k, group) in chunk.iter().enumerate() {
            let mut w = 0u64;
            for &r in group {
                w ^= rec[r as usize];
            }
            t[k] = w;
        }
        transpose64(&mut t);
        for (s, row) in out.chunks_exact_mut(wps).enumerate().take(rows) {
            row[j] = t[s];
        }
    }
}

/// In-place 64×64 bit-matrix transpose: afterwards bit `j` of `a[i]` is the
/// old bit `i` of `a[j]`.
fn transpose64(a: &mut [u64; 64]) {
    let mut j = 32;
    let mut m: u64 = 0x0000_0000_FFFF_FFFF;
    while j != 0 {
        let mut k = 0;
        while k < 64 {
            let t = ((a[k] >> j) ^ a[k + j]) & m;
            a[k] ^= t << j;
            a[k + j] ^= t;
            k = (k + j + 1) & !j;
        }
        j >>= 1;
        m ^= m << j;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;

    /// One stabilizer round of the 3-qubit repetition code with a data-flip
    /// channel of probability `p` before the syndrome extraction.
    fn one_round_repetition(p: f64) -> Circuit {
        let text = format!(
            "RESET_Z 0 1 2 3 4\n\
             TICK\n\
             X_ERROR({p}) 0 1 2\n\
             TICK\n\
             CNOT 0 3 1 4\n\
             TICK\n\
             CNOT 1 3 2 4\n\
             TICK\n\
             MEASURE_Z 3 4\n\
             DETECTOR(0.5, 0, 0) rec[-2]\n\
             DETECTOR(1.5, 0, 0) rec[-1]\n\
             TICK\n\
             MEASURE_Z 0 1 2\n\
             OBSERVABLE(Z_L) rec[-3]\n"
        );
        parse_circuit(&text).unwrap()
    }

    /// Two repetition rounds plus data readout, with one forced X between
    /// the rounds on the middle data qubit.
    fn two_rounds_with_forced_flip() -> Circuit {
        let text = "RESET_Z 0 1 2 3 4\n\
                    TICK\n\
                    CNOT 0 3 1 4\n\
                    TICK\n\
                    CNOT 1 3 2 4\n\
                    TICK\n\
                    MEASURE_Z 3 4\n\
                    DETECTOR(0.5, 0, 0) rec[-2]\n\
                    DETECTOR(1.5, 0, 0) rec[-1]\n\
                    TICK\n\
                    RESET_Z 3 4\n\
                    TICK\n\
                    X_ERROR(1) 1\n\
                    TICK\n\
                    CNOT 0 3 1 4\n\
                    TICK\n\
                    CNOT 1 3 2 4\n\
                    TICK\n\
                    MEASURE_Z 3 4\n\
                    DETECTOR(0.5, 0, 1) rec[-2] rec[-4]\n\
                    DETECTOR(1.5, 0, 1) rec[-1] rec[-3]\n\
                    TICK\n\
                    MEASURE_Z 0 1 2\n\
                    DETECTOR(0.5, 0, 2) rec[-3] rec[-2] rec[-5]\n\
                    DETECTOR(1.5, 0, 2) rec[-2] rec[-1] rec[-4]\n\
                    OBSERVABLE(Z_L) rec[-3]\n";
        parse_circuit(text).unwrap()
    }

    #[test]
    fn zero_noise_gives_all_zero_events() {
        let c = one_round_repetition(0.0);
        let batch = sample(&c, 1000, 7).unwrap();
        assert_eq!(batch.shots, 1000);
        assert_eq!(batch.detectors, 2);
        assert_eq!(batch.observables, 1);
        assert!(batch.detection_events.iter().all(|&w| w == 0));
        assert!(batch.observable_flips.iter().all(|&w| w == 0));
    }

    #[test]
    fn reference_record_is_deterministic_and_zero() {
        let c = two_rounds_with_forced_flip();
        let record = reference_sample(&c).unwrap();
        assert_eq!(record.len(), c.num_measurements());
        assert!(record.iter().all(|&b| !b));
    }

    #[test]
    fn reference_rejects_random_measurements() {
        let c = parse_circuit("RESET_Z 0\nMEASURE_X 0\nDETECTOR(0, 0, 0) rec[-1]\n").unwrap();
        let err = reference_sample(&c).unwrap_err();
        assert!(matches!(err, FramesimError::Nondeterministic(_)));
    }

    #[test]
    fn forced_flip_fires_exactly_its_detecting_region() {
        // X on the middle data qubit between rounds flips both round-2
        // syndrome comparisons; the final-readout detectors cancel because
        // the flipped data measurement pairs with the flipped syndrome.
        let c = two_rounds_with_forced_flip();
        let batch = sample(&c, 130, 3).unwrap();
        for s in 0..batch.shots {
            for k in 0..6 {
                assert_eq!(batch.detector(s, k), k == 2 || k == 3, "shot {s} D{k}");
            }
            assert!(!batch.observable(s, 0), "shot {s}");
        }
        assert_eq!(batch.detector_counts(), vec![0, 0, 130, 130, 0, 0]);
    }

    #[test]
    fn sampled_rates_match_exhaustive_enumeration() {
        // Exact rates by summing over the 2^3 data-flip patterns.
        let p = 0.1;
        let shots = 1_000_000u64;
        let mut exact = [0.0f64; 3];
        for pat in 0..8u32 {
            let f = [pat & 1 != 0, pat & 2 != 0, pat & 4 != 0];
            let prob: f64 = f
                .iter()
                .map(|&hit| if hit { p } else { 1.0 - p })
                .product();
            if f[0] ^ f[1] {
                exact[0] += prob;
            }
            if f[1] ^ f[2] {
                exact[1] += prob;
            }
            if f[0] {
                exact[2] += prob;
            }
        }

        let batch = sample(&one_round_repetition(p), shots, 11).unwrap();
        let det = batch.detector_counts();
        let obs = batch.observable_counts();
        let observed = [det[0], det[1], obs[0]];
        for (i, (&count, &q)) in observed.iter().zip(exact.iter()).enumerate() {
            let rate = count as f64 / shots as f64;
            let sigma = (q * (1.0 - q) / shots as f64).sqrt();
            assert!(
                (rate - q).abs() <= 3.0 * sigma,
                "rate {i}: observed {rate}, exact {q}, sigma {sigma}"
            );
        }
    }

    #[test]
    fn pauli_channel_components_flip_the_right_bases() {
        // (channel args, measure basis, expect flip)
        let cases = [
            ("1,0,0", "Z", true),
            ("1,0,0", "X", false),
            ("0,1,0", "Z", true),
            ("0,1,0", "X", true),
            ("0,0,1", "Z", false),
            ("0,0,1", "X", true),
        ];
        for (args, basis, expect) in cases {
            let text = format!(
                "RESET_{basis} 0\n\
                 TICK\n\
                 PAULI_CHANNEL_1({args}) 0\n\
                 TICK\n\
                 MEASURE_{basis} 0\n\
                 DETECTOR(0, 0, 0) rec[-1]\n"
            );
            let c = parse_circuit(&text).unwrap();
            let batch = sample(&c, 64, 1).unwrap();
            assert_eq!(
                batch.detector_counts()[0],
                if expect { 64 } else { 0 },
                "PAULI_CHANNEL_1({args}) vs MEASURE_{basis}"
            );
        }
    }

    #[test]
    fn depolarize2_component_frequencies() {
        // At p = 1 the 15 non-identity Pauli pairs are uniform, so each
        // qubit sees an X-component (X or Y) with probability 8/15 and both
        // qubits jointly with 4/15.
        let text = "RESET_Z 0 1\n\
                    TICK\n\
                    DEPOLARIZE2(1) 0 1\n\
                    TICK\n\
                    MEASURE_Z 0 1\n\
                    DETECTOR(0, 0, 0) rec[-2]\n\
                    DETECTOR(1, 0, 0) rec[-1]\n";
        let c = parse_circuit(text).unwrap();
        let shots = 100_000u64;
        let batch = sample(&c, shots, 5).unwrap();
        let det = batch.detector_counts();
        let mut joint = 0u64;
        for row in batch.detection_events.chunks_exact(1) {
            if row[0] & 0b11 == 0b11 {
                joint += 1;
            }
        }
        for (observed, expected) in [
            (det[0], 8.0 / 15.0),
            (det[1], 8.0 / 15.0),
            (joint, 4.0 / 15.0),
        ] {
            let rate = observed as f64 / shots as f64;
            let sigma = (expected * (1.0 - expected) / shots as f64).sqrt();
            assert!(
                (rate - expected).abs() <= 3.0 * sigma,
                "observed {rate}, expected {expected}"
            );
        }
    }

    #[test]
    fn identical_bits_for_any_worker_count() {
        let c = one_round_repetition(0.02);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample(&c, 10_000, 99).unwrap())
        };
        let one = run(1);
        let two = run(2);
        let eight = run(8);
        assert_eq!(one, two);
        assert_eq!(one, eight);
    }

    #[test]
    fn binary_dump_round_trips() {
        let c = one_round_repetition(0.3);
        let batch = sample(&c, 70, 1234).unwrap();
        let mut bytes = Vec::new();
        batch.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 64 + 70 * 2 * 8);
        assert_eq!(&bytes[0..8], b"QECWDET1");
        let back = SampleBatch::read_binary(bytes.as_slice()).unwrap();
        assert_eq!(back, batch);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = vec![0u8; 64];
        bytes[0..8].copy_from_slice(b"NOTADUMP");
        assert!(matches!(
            SampleBatch::read_binary(bytes.as_slice()),
            Err(FramesimError::BadDump(_))
        ));
    }

    #[test]
    fn csv_export_lists_events() {
        let c = two_rounds_with_forced_flip();
        let batch = sample(&c, 2, 8).unwrap();
        let mut out = Vec::new();
        batch.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("shot,D0,D1,D2,D3,D4,D5,L0"));
        assert_eq!(lines.next(), Some("0,0,0,1,1,0,0,0"));
        assert_eq!(lines.next(), Some("1,0,0,1,1,0,0,0"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn full_rate_channel_hits_every_lane() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(bernoulli_word(&mut rng, gap_factor(1.0)), u64::MAX);
    }

    #[test]
    fn bernoulli_word_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for p in [0.01, 0.3, 0.5, 0.9] {
            let gap = gap_factor(p);
            let reps = 20_000u64;
            let mut ones = 0u64;
            for _ in 0..reps {
                ones += bernoulli_word(&mut rng, gap).count_ones() as u64;
            }
            let n = (reps * 64) as f64;
            let rate = ones as f64 / n;
            let sigma = (p * (1.0 - p) / n).sqrt();
            assert!(
                (rate - p).abs() <= 4.0 * sigma,
                "p {p}: rate {rate}, sigma {sigma}"
            );
        }
    }

    #[test]
    fn transpose64_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let mut a = [0u64; 64];
            for w in a.iter_mut() {
                *w = rng.next_u64();
            }
            let orig = a;
            transpose64(&mut a);
            for i in 0..64 {
                for j in 0..64 {
                    assert_eq!(a[i] >> j & 1, orig[j] >> i & 1);
                }
            }
        }
    }
}
