//! Stabilizer tableau simulation of noiseless circuits.
//!
//! The tableau tracks n destabilizer rows, n stabilizer rows and a scratch
//! row, each a signed Pauli in x/z bit-plane form. Gates conjugate rows;
//! measurements follow the usual random/deterministic split, with the
//! deterministic branch resolved by summing destabilizer-selected rows into
//! the scratch row.
//!
//! Beyond plain simulation this module answers, exactly, the question
//! "which record parities are deterministic?": every random measurement's
//! two branches differ by a Pauli operator (the replaced stabilizer row), so
//! toggling that random choice flips later outcomes exactly like an inserted
//! error frame. [`CircuitAnalysis`] propagates one frame per random event and
//! exposes the resulting record-flip masks. A parity is deterministic iff it
//! overlaps every mask evenly; its value is then the pinned-choice reference
//! parity.

use crate::circuit::{Circuit, Instruction, MeasureBasis, Violation};
use crate::pauli::{PauliKind, PauliString};

/// Signed stabilizer tableau over `n` qubits.
pub struct Tableau {
    n: usize,
    words: usize,
    /// Row-major x bit planes for 2n+1 rows (destabilizers, stabilizers, scratch).
    x: Vec<u64>,
    z: Vec<u64>,
    r: Vec<bool>,
}

/// Outcome of one basis measurement.
pub struct MeasureOutcome {
    pub outcome: bool,
    pub random: bool,
    /// For random outcomes: a Pauli relating the two branches (in original
    /// circuit coordinates, sign-free). Absent for deterministic outcomes.
    pub branch_frame: Option<PauliString>,
}

impl Tableau {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        let rows = 2 * n + 1;
        let mut t = Tableau {
            n,
            words,
            x: vec![0; rows * words],
            z: vec![0; rows * words],
            r: vec![false; rows],
        };
        for i in 0..n {
            t.set_x_bit(i, i, true); // destabilizer i = X_i
            t.set_z_bit(n + i, i, true); // stabilizer i = Z_i
        }
        t
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    #[inline]
    fn x_bit(&self, row: usize, q: usize) -> bool {
        (self.x[row * self.words + q / 64] >> (q % 64)) & 1 == 1
    }

    #[inline]
    fn z_bit(&self, row: usize, q: usize) -> bool {
        (self.z[row * self.words + q / 64] >> (q % 64)) & 1 == 1
    }

    #[inline]
    fn set_x_bit(&mut self, row: usize, q: usize, v: bool) {
        let idx = row * self.words + q / 64;
        let m = 1u64 << (q % 64);
        self.x[idx] = (self.x[idx] & !m) | (u64::from(v) << (q % 64));
    }

    #[inline]
    fn set_z_bit(&mut self, row: usize, q: usize, v: bool) {
        let idx = row * self.words + q / 64;
        let m = 1u64 << (q % 64);
        self.z[idx] = (self.z[idx] & !m) | (u64::from(v) << (q % 64));
    }

    pub fn cnot(&mut self, c: usize, t: usize) {
        assert_ne!(c, t);
        for row in 0..2 * self.n {
            let xc = self.x_bit(row, c);
            let zt = self.z_bit(row, t);
            let xt = self.x_bit(row, t);
            let zc = self.z_bit(row, c);
            self.r[row] ^= xc && zt && (xt == zc);
            self.set_x_bit(row, t, xt ^ xc);
            self.set_z_bit(row, c, zc ^ zt);
        }
    }

    pub fn h(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let xb = self.x_bit(row, q);
            let zb = self.z_bit(row, q);
            self.r[row] ^= xb && zb;
            self.set_x_bit(row, q, zb);
            self.set_z_bit(row, q, xb);
        }
    }

    pub fn s(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let xb = self.x_bit(row, q);
            let zb = self.z_bit(row, q);
            self.r[row] ^= xb && zb;
            self.set_z_bit(row, q, zb ^ xb);
        }
    }

    /// Pauli X on `q` (outcome bookkeeping only: flips rows containing Z_q).
    pub fn xgate(&mut self, q: usize) {
        for row in 0..2 * self.n {
            self.r[row] ^= self.z_bit(row, q);
        }
    }

    /// Pauli Z on `q`.
    pub fn zgate(&mut self, q: usize) {
        for row in 0..2 * self.n {
            self.r[row] ^= self.x_bit(row, q);
        }
    }

    fn row_pauli(&self, row: usize) -> PauliString {
        let mut p = PauliString::identity(self.n);
        for q in 0..self.n {
            p.set(q, PauliKind::from_bits(self.x_bit(row, q), self.z_bit(row, q)))
                .unwrap();
        }
        p
    }

    fn copy_row(&mut self, dst: usize, src: usize) {
        for w in 0..self.words {
            self.x[dst * self.words + w] = self.x[src * self.words + w];
            self.z[dst * self.words + w] = self.z[src * self.words + w];
        }
        self.r[dst] = self.r[src];
    }

    fn zero_row(&mut self, row: usize) {
        for w in 0..self.words {
            self.x[row * self.words + w] = 0;
            self.z[row * self.words + w] = 0;
        }
        self.r[row] = false;
    }

    /// row_h := row_i · row_h, with exact phase bookkeeping (word-parallel).
    fn rowsum(&mut self, h: usize, i: usize) {
        let (hb, ib) = (h * self.words, i * self.words);
        let mut plus: i64 = 0;
        let mut minus: i64 = 0;
        for w in 0..self.words {
            let xi = self.x[ib + w];
            let zi = self.z[ib + w];
            let xh = self.x[hb + w];
            let zh = self.z[hb + w];
            // Phase exponent contributions of multiplying P_i into P_h,
            // split by the source factor.
            let src_y = xi & zi;
            plus += (src_y & zh & !xh).count_ones() as i64;
            minus += (src_y & xh & !zh).count_ones() as i64;
            let src_x = xi & !zi;
            plus += (src_x & xh & zh).count_ones() as i64;
            minus += (src_x & zh & !xh).count_ones() as i64;
            let src_z = !xi & zi;
            plus += (src_z & xh & !zh).count_ones() as i64;
            minus += (src_z & xh & zh).count_ones() as i64;
        }
        let total = (2 * i64::from(self.r[h]) + 2 * i64::from(self.r[i]) + plus - minus)
            .rem_euclid(4);
        // Destabilizer rows (h < n) need no phase: their products can pick up
        // factors of i and the sign bit is never read.
        debug_assert!(
            h < self.n || total == 0 || total == 2,
            "stabilizer rowsum phase must be real"
        );
        self.r[h] = total == 2;
        for w in 0..self.words {
            self.x[hb + w] ^= self.x[ib + w];
            self.z[hb + w] ^= self.z[ib + w];
        }
    }

    fn measure_z_raw(&mut self, q: usize, choice: bool) -> MeasureOutcome {
        let n = self.n;
        if let Some(p) = (n..2 * n).find(|&row| self.x_bit(row, q)) {
            let branch = self.row_pauli(p);
            for row in 0..2 * n {
                if row != p && self.x_bit(row, q) {
                    self.rowsum(row, p);
                }
            }
            self.copy_row(p - n, p);
            self.zero_row(p);
            self.set_z_bit(p, q, true);
            self.r[p] = choice;
            MeasureOutcome {
                outcome: choice,
                random: true,
                branch_frame: Some(branch),
            }
        } else {
            let scratch = 2 * n;
            self.zero_row(scratch);
            for i in 0..n {
                if self.x_bit(i, q) {
                    self.rowsum(scratch, i + n);
                }
            }
            MeasureOutcome {
                outcome: self.r[scratch],
                random: false,
                branch_frame: None,
            }
        }
    }

    /// Measures `q` in the given basis. Random outcomes take `choice`.
    pub fn measure(&mut self, q: usize, basis: MeasureBasis, choice: bool) -> MeasureOutcome {
        match basis {
            MeasureBasis::Z => self.measure_z_raw(q, choice),
            MeasureBasis::X => {
                self.h(q);
                let mut out = self.measure_z_raw(q, choice);
                self.h(q);
                if let Some(f) = out.branch_frame.as_mut() {
                    f.conjugate_by_h(q).unwrap();
                }
                out
            }
            MeasureBasis::Y => {
                // Rotate Y to Z with U = H·S†, measure, rotate back.
                self.s(q);
                self.zgate(q); // S† = Z·S
                self.h(q);
                let mut out = self.measure_z_raw(q, choice);
                self.h(q);
                self.s(q);
                if let Some(f) = out.branch_frame.as_mut() {
                    // Back to original coordinates: conjugate by U† = S·H.
                    f.conjugate_by_h(q).unwrap();
                    f.conjugate_by_s(q).unwrap();
                }
                out
            }
        }
    }

    /// Resets `q` to the +1 eigenstate of the basis operator.
    ///
    /// Returns the branch frame if the implicit measurement was random; the
    /// frame's `q` component is zeroed since the reset output is branch
    /// independent on `q`.
    pub fn reset(&mut self, q: usize, basis: MeasureBasis, choice: bool) -> Option<PauliString> {
        let out = self.measure(q, basis, choice);
        if out.outcome {
            match basis {
                MeasureBasis::Z => self.xgate(q),
                MeasureBasis::X | MeasureBasis::Y => self.zgate(q),
            }
        }
        out.branch_frame.map(|mut f| {
            f.set(q, PauliKind::I).unwrap();
            f
        })
    }
}

/// Runs a circuit noiselessly with every random outcome pinned to 0 and
/// returns the measurement record.
pub fn run_reference(circuit: &Circuit) -> Vec<bool> {
    let mut tab = Tableau::new(circuit.num_qubits());
    let mut record = Vec::with_capacity(circuit.num_measurements());
    for inst in &circuit.instructions {
        match inst {
            Instruction::Cnot(ts) => {
                for pair in ts.chunks(2) {
                    tab.cnot(pair[0] as usize, pair[1] as usize);
                }
            }
            Instruction::Measure(b, ts) => {
                for &q in ts {
                    record.push(tab.measure(q as usize, *b, false).outcome);
                }
            }
            Instruction::Reset(b, ts) => {
                for &q in ts {
                    tab.reset(q as usize, *b, false);
                }
            }
            _ => {}
        }
    }
    record
}

fn anticommutes_at(frame: &PauliString, q: usize, basis: MeasureBasis) -> bool {
    let p = frame.get(q).unwrap();
    match basis {
        MeasureBasis::Z => p.x_bit(),
        MeasureBasis::X => p.z_bit(),
        MeasureBasis::Y => p.x_bit() ^ p.z_bit(),
    }
}

/// Exact determinism analysis of a noiseless circuit.
pub struct CircuitAnalysis {
    /// Record with all random choices pinned to 0.
    pub reference: Vec<bool>,
    /// Per random event: bitmask over records flipped by toggling it.
    masks: Vec<Vec<u64>>,
    record_words: usize,
}

impl CircuitAnalysis {
    pub fn analyze(circuit: &Circuit) -> Self {
        let n = circuit.num_qubits();
        let record_words = circuit.num_measurements().div_ceil(64).max(1);
        let mut tab = Tableau::new(n);
        let mut reference = Vec::with_capacity(circuit.num_measurements());
        let mut frames: Vec<PauliString> = Vec::new();
        let mut masks: Vec<Vec<u64>> = Vec::new();

        for inst in &circuit.instructions {
            match inst {
                Instruction::Cnot(ts) => {
                    for pair in ts.chunks(2) {
                        tab.cnot(pair[0] as usize, pair[1] as usize);
                        for f in &mut frames {
                            f.conjugate_by_cnot(pair[0] as usize, pair[1] as usize)
                                .unwrap();
                        }
                    }
                }
                Instruction::Measure(b, ts) => {
                    for &q in ts {
                        let q = q as usize;
                        let rec = reference.len();
                        let flips: Vec<bool> =
                            frames.iter().map(|f| anticommutes_at(f, q, *b)).collect();
                        let out = tab.measure(q, *b, false);
                        if let Some(frame) = out.branch_frame {
                            // Random outcome: the record is a free choice, so
                            // toggling an earlier event never flips it. It
                            // re-labels this event's choice instead, which is
                            // the same as composing this event's branch frame
                            // into the anticommuting earlier frames.
                            for (f, flip) in frames.iter_mut().zip(&flips) {
                                if *flip {
                                    f.mul_assign(&frame).unwrap();
                                }
                            }
                            let mut mask = vec![0u64; record_words];
                            // Toggling the choice flips this record itself.
                            mask[rec / 64] ^= 1 << (rec % 64);
                            frames.push(frame);
                            masks.push(mask);
                        } else {
                            for (fi, flip) in flips.iter().enumerate() {
                                if *flip {
                                    masks[fi][rec / 64] ^= 1 << (rec % 64);
                                }
                            }
                        }
                        reference.push(out.outcome);
                    }
                }
                Instruction::Reset(b, ts) => {
                    for &q in ts {
                        let q = q as usize;
                        let flips: Vec<bool> =
                            frames.iter().map(|f| anticommutes_at(f, q, *b)).collect();
                        if let Some(frame) = tab.reset(q, *b, false) {
                            // Same choice re-labeling as for random measures;
                            // there is no record to flip.
                            for (f, flip) in frames.iter_mut().zip(&flips) {
                                if *flip {
                                    f.mul_assign(&frame).unwrap();
                                }
                            }
                            frames.push(frame);
                            masks.push(vec![0u64; record_words]);
                        }
                        // Reset output is branch independent on q.
                        for f in &mut frames {
                            f.set(q, PauliKind::I).unwrap();
                        }
                    }
                }
                _ => {}
            }
        }
        CircuitAnalysis {
            reference,
            masks,
            record_words,
        }
    }

    /// `Some(parity)` if the XOR of the given records is outcome independent,
    /// `None` if it depends on a random choice.
    pub fn deterministic_parity(&self, records: &[usize]) -> Option<bool> {
        let mut sel = vec![0u64; self.record_words];
        let mut parity = false;
        for &r in records {
            sel[r / 64] ^= 1 << (r % 64);
            parity ^= self.reference[r];
        }
        for mask in &self.masks {
            let overlap: u64 = mask.iter().zip(&sel).map(|(a, b)| a & b).fold(0, |acc, w| acc ^ w);
            if overlap.count_ones() % 2 == 1 {
                return None;
            }
        }
        Some(parity)
    }
}

/// Semantic validation: every detector parity must be deterministically zero,
/// every observable parity deterministic.
pub fn determinism_violations(circuit: &Circuit) -> Vec<Violation> {
    let analysis = CircuitAnalysis::analyze(circuit);
    let mut v = Vec::new();
    if let Ok(dets) = circuit.resolved_detectors() {
        for (i, det) in dets.iter().enumerate() {
            match analysis.deterministic_parity(&det.records) {
                None => v.push(Violation::NondeterministicDetector { detector: i }),
                Some(true) => v.push(Violation::DetectorParityNonzero { detector: i }),
                Some(false) => {}
            }
        }
    }
    if let Ok(obs) = circuit.resolved_observables() {
        for (i, ob) in obs.iter().enumerate() {
            if analysis.deterministic_parity(&ob.records).is_none() {
                v.push(Violation::NondeterministicObservable { observable: i });
            }
        }
    }
    v
}
