//! Stabilizer-circuit IR and its line-based text format.
//!
//! The instruction set is deliberately closed: CNOT is the only unitary,
//! measurements and resets exist in all three Pauli bases, and noise enters
//! only through explicit probabilistic Pauli channels. Single-qubit unitaries
//! never appear; generators absorb them into measurement/reset bases.
//!
//! Text format, one instruction per line:
//!
//! ```text
//! # comment
//! QUBIT_COORDS(1, 2) 4
//! RESET_Z 0 1
//! TICK
//! CNOT 0 1 2 3
//! X_ERROR(1.0000000000000000e-3) 0
//! PAULI_CHANNEL_1(1e-4,1e-4,3e-4) 2
//! MEASURE_Z 1 3
//! DETECTOR(0, 0, 0) rec[-2] rec[-1]
//! OBSERVABLE(Z_L) rec[-1]
//! ```
//!
//! `rec[-k]` counts backwards from the measurement record at the point the
//! detector/observable instruction appears; internally indices are resolved
//! to absolute record positions. Probabilities round-trip bit-exactly (17
//! significant digits). [`emit_circuit`] is canonical: parsing its output and
//! re-emitting reproduces the bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use crate::pauli::MeasureAxis as MeasureBasis;

pub type Qubit = u32;

/// Logical observable tag carried by `OBSERVABLE(...)` instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObservableLabel {
    XL,
    ZL,
}

impl fmt::Display for ObservableLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableLabel::XL => write!(f, "X_L"),
            ObservableLabel::ZL => write!(f, "Z_L"),
        }
    }
}

impl FromStr for ObservableLabel {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "X_L" => Ok(ObservableLabel::XL),
            "Z_L" => Ok(ObservableLabel::ZL),
            _ => Err(()),
        }
    }
}

/// One instruction of the IR.
#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    /// Reset targets to the +1 eigenstate of the basis operator.
    Reset(MeasureBasis, Vec<Qubit>),
    /// Measure targets in the given basis, appending one record bit each.
    Measure(MeasureBasis, Vec<Qubit>),
    /// CNOTs acting on consecutive (control, target) pairs.
    Cnot(Vec<Qubit>),
    /// Time-step separator.
    Tick,
    XError {
        p: f64,
        targets: Vec<Qubit>,
    },
    ZError {
        p: f64,
        targets: Vec<Qubit>,
    },
    Depolarize1 {
        p: f64,
        targets: Vec<Qubit>,
    },
    /// Two-qubit depolarizing noise on consecutive pairs.
    Depolarize2 {
        p: f64,
        targets: Vec<Qubit>,
    },
    PauliChannel1 {
        px: f64,
        py: f64,
        pz: f64,
        targets: Vec<Qubit>,
    },
    /// Parity of the referenced records; deterministically 0 without noise.
    Detector {
        coord: (f64, f64, f64),
        /// Backwards offsets `k` for `rec[-k]`, each >= 1.
        rel_records: Vec<usize>,
    },
    /// Logical readout: parity of the referenced records.
    Observable {
        label: ObservableLabel,
        rel_records: Vec<usize>,
    },
}

impl Instruction {
    pub fn is_noise(&self) -> bool {
        matches!(
            self,
            Instruction::XError { .. }
                | Instruction::ZError { .. }
                | Instruction::Depolarize1 { .. }
                | Instruction::Depolarize2 { .. }
                | Instruction::PauliChannel1 { .. }
        )
    }

    /// Targets of gate-like instructions (empty for TICK/annotations).
    pub fn targets(&self) -> &[Qubit] {
        match self {
            Instruction::Reset(_, t)
            | Instruction::Measure(_, t)
            | Instruction::Cnot(t)
            | Instruction::XError { targets: t, .. }
            | Instruction::ZError { targets: t, .. }
            | Instruction::Depolarize1 { targets: t, .. }
            | Instruction::Depolarize2 { targets: t, .. }
            | Instruction::PauliChannel1 { targets: t, .. } => t,
            _ => &[],
        }
    }

    fn num_measurements(&self) -> usize {
        match self {
            Instruction::Measure(_, t) => t.len(),
            _ => 0,
        }
    }
}

/// Errors from parsing or resolving circuits.
#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("instruction {instruction}: rec[-{k}] reaches before the record start ({available} records available)")]
    RecordOutOfRange {
        instruction: usize,
        k: usize,
        available: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A parsed circuit: a flat instruction stream plus qubit coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    pub instructions: Vec<Instruction>,
    /// Planar layout coordinates, for DEM detector coordinates and plots.
    pub qubit_coords: BTreeMap<Qubit, (f64, f64)>,
}

/// Wall-clock class of a tick segment, derived from its contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DurationClass {
    /// Segment contains only CNOTs (and noise): two-qubit-gate duration.
    TwoQubit,
    /// Segment contains a measurement or reset: readout duration.
    Measurement,
}

/// A maximal run of instructions between TICKs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Indices into `instructions`; TICKs excluded.
    pub range: std::ops::Range<usize>,
    pub class: DurationClass,
}

/// A detector with absolute record indices resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDetector {
    pub coord: (f64, f64, f64),
    pub records: Vec<usize>,
}

/// An observable with absolute record indices resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedObservable {
    pub label: ObservableLabel,
    pub records: Vec<usize>,
}

impl Circuit {
    pub fn new() -> Self {
        Circuit::default()
    }

    /// One past the largest qubit index used anywhere.
    pub fn num_qubits(&self) -> usize {
        let from_targets = self
            .instructions
            .iter()
            .flat_map(|i| i.targets())
            .map(|&q| q as usize + 1)
            .max()
            .unwrap_or(0);
        let from_coords = self
            .qubit_coords
            .keys()
            .map(|&q| q as usize + 1)
            .max()
            .unwrap_or(0);
        from_targets.max(from_coords)
    }

    pub fn num_measurements(&self) -> usize {
        self.instructions.iter().map(|i| i.num_measurements()).sum()
    }

    pub fn num_detectors(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Detector { .. }))
            .count()
    }

    pub fn num_observables(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Observable { .. }))
            .count()
    }

    pub fn has_noise(&self) -> bool {
        self.instructions.iter().any(|i| i.is_noise())
    }

    /// Splits the stream into tick segments with derived duration classes.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut start = 0usize;
        let flush = |start: usize, end: usize, out: &mut Vec<Segment>| {
            if start == end {
                return;
            }
            let class = if self.instructions[start..end].iter().any(|i| {
                matches!(i, Instruction::Measure(..) | Instruction::Reset(..))
            }) {
                DurationClass::Measurement
            } else {
                DurationClass::TwoQubit
            };
            out.push(Segment {
                range: start..end,
                class,
            });
        };
        for (i, inst) in self.instructions.iter().enumerate() {
            if matches!(inst, Instruction::Tick) {
                flush(start, i, &mut out);
                start = i + 1;
            }
        }
        flush(start, self.instructions.len(), &mut out);
        out
    }

    /// Resolves every detector's `rec[-k]` offsets to absolute record indices.
    pub fn resolved_detectors(&self) -> Result<Vec<ResolvedDetector>, CircuitError> {
        let mut out = Vec::new();
        let mut seen = 0usize;
        for (idx, inst) in self.instructions.iter().enumerate() {
            match inst {
                Instruction::Detector { coord, rel_records } => {
                    out.push(ResolvedDetector {
                        coord: *coord,
                        records: resolve_records(idx, rel_records, seen)?,
                    });
                }
                _ => seen += inst.num_measurements(),
            }
        }
        Ok(out)
    }

    /// Resolves every observable's offsets to absolute record indices.
    pub fn resolved_observables(&self) -> Result<Vec<ResolvedObservable>, CircuitError> {
        let mut out = Vec::new();
        let mut seen = 0usize;
        for (idx, inst) in self.instructions.iter().enumerate() {
            match inst {
                Instruction::Observable { label, rel_records } => {
                    out.push(ResolvedObservable {
                        label: *label,
                        records: resolve_records(idx, rel_records, seen)?,
                    });
                }
                _ => seen += inst.num_measurements(),
            }
        }
        Ok(out)
    }
}

fn resolve_records(
    instruction: usize,
    rel: &[usize],
    available: usize,
) -> Result<Vec<usize>, CircuitError> {
    let mut records = Vec::with_capacity(rel.len());
    for &k in rel {
        if k == 0 || k > available {
            return Err(CircuitError::RecordOutOfRange {
                instruction,
                k,
                available,
            });
        }
        records.push(available - k);
    }
    records.sort_unstable();
    records.dedup();
    Ok(records)
}

// ============================ Text format =============================

fn fmt_prob(p: f64) -> String {
    // 17 significant digits: enough for bit-exact f64 round-trips.
    format!("{:.16e}", p)
}

fn fmt_coord(c: f64) -> String {
    // Shortest representation that round-trips.
    format!("{}", c)
}

/// Serialises a circuit to canonical text.
pub fn emit_circuit(circuit: &Circuit) -> String {
    let mut out = String::new();
    for (&q, &(x, y)) in &circuit.qubit_coords {
        out.push_str(&format!(
            "QUBIT_COORDS({}, {}) {}\n",
            fmt_coord(x),
            fmt_coord(y),
            q
        ));
    }
    for inst in &circuit.instructions {
        emit_instruction(inst, &mut out);
    }
    out
}

fn emit_targets(targets: &[Qubit], out: &mut String) {
    for t in targets {
        out.push(' ');
        out.push_str(&t.to_string());
    }
    out.push('\n');
}

fn emit_records(rel: &[usize], out: &mut String) {
    // Canonical order: oldest first (largest k first).
    let mut ks: Vec<usize> = rel.to_vec();
    ks.sort_unstable_by(|a, b| b.cmp(a));
    ks.dedup();
    for k in ks {
        out.push_str(&format!(" rec[-{}]", k));
    }
    out.push('\n');
}

fn emit_instruction(inst: &Instruction, out: &mut String) {
    match inst {
        Instruction::Reset(b, t) => {
            out.push_str(match b {
                MeasureBasis::X => "RESET_X",
                MeasureBasis::Y => "RESET_Y",
                MeasureBasis::Z => "RESET_Z",
            });
            emit_targets(t, out);
        }
        Instruction::Measure(b, t) => {
            out.push_str(match b {
                MeasureBasis::X => "MEASURE_X",
                MeasureBasis::Y => "MEASURE_Y",
                MeasureBasis::Z => "MEASURE_Z",
            });
            emit_targets(t, out);
        }
        Instruction::Cnot(t) => {
            out.push_str("CNOT");
            emit_targets(t, out);
        }
        Instruction::Tick => out.push_str("TICK\n"),
        Instruction::XError { p, targets } => {
            out.push_str(&format!("X_ERROR({})", fmt_prob(*p)));
            emit_targets(targets, out);
        }
        Instruction::ZError { p, targets } => {
            out.push_str(&format!("Z_ERROR({})", fmt_prob(*p)));
            emit_targets(targets, out);
        }
        Instruction::Depolarize1 { p, targets } => {
            out.push_str(&format!("DEPOLARIZE1({})", fmt_prob(*p)));
            emit_targets(targets, out);
        }
        Instruction::Depolarize2 { p, targets } => {
            out.push_str(&format!("DEPOLARIZE2({})", fmt_prob(*p)));
            emit_targets(targets, out);
        }
        Instruction::PauliChannel1 {
            px,
            py,
            pz,
            targets,
        } => {
            out.push_str(&format!(
                "PAULI_CHANNEL_1({},{},{})",
                fmt_prob(*px),
                fmt_prob(*py),
                fmt_prob(*pz)
            ));
            emit_targets(targets, out);
        }
        Instruction::Detector { coord, rel_records } => {
            out.push_str(&format!(
                "DETECTOR({}, {}, {})",
                fmt_coord(coord.0),
                fmt_coord(coord.1),
                fmt_coord(coord.2)
            ));
            emit_records(rel_records, out);
        }
        Instruction::Observable { label, rel_records } => {
            out.push_str(&format!("OBSERVABLE({})", label));
            emit_records(rel_records, out);
        }
    }
}

/// Parses circuit text. Accepts `#` whole-line comments and blank lines.
pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitError> {
    let mut circuit = Circuit::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        parse_line(line, lineno, &mut circuit)?;
    }
    Ok(circuit)
}

fn perr(line: usize, msg: impl Into<String>) -> CircuitError {
    CircuitError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Splits "NAME(args) rest" into (NAME, Some(args), rest) / (NAME, None, rest).
fn split_head(line: &str, lineno: usize) -> Result<(&str, Option<&str>, &str), CircuitError> {
    let head_end = line
        .find(|c: char| c.is_whitespace() || c == '(')
        .unwrap_or(line.len());
    let name = &line[..head_end];
    let rest = &line[head_end..];
    if let Some(stripped) = rest.strip_prefix('(') {
        let close = stripped
            .find(')')
            .ok_or_else(|| perr(lineno, "missing ')'"))?;
        Ok((name, Some(&stripped[..close]), stripped[close + 1..].trim()))
    } else {
        Ok((name, None, rest.trim()))
    }
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64, CircuitError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| perr(lineno, format!("bad number '{}'", s.trim())))
}

fn parse_qubits(s: &str, lineno: usize) -> Result<Vec<Qubit>, CircuitError> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<Qubit>()
                .map_err(|_| perr(lineno, format!("bad qubit '{}'", t)))
        })
        .collect()
}

fn parse_args(args: Option<&str>, n: usize, lineno: usize) -> Result<Vec<f64>, CircuitError> {
    let args = args.ok_or_else(|| perr(lineno, "missing (...) arguments"))?;
    let vals: Result<Vec<f64>, _> = args.split(',').map(|a| parse_f64(a, lineno)).collect();
    let vals = vals?;
    if vals.len() != n {
        return Err(perr(
            lineno,
            format!("expected {} arguments, got {}", n, vals.len()),
        ));
    }
    Ok(vals)
}

fn parse_records(s: &str, lineno: usize) -> Result<Vec<usize>, CircuitError> {
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        let inner = tok
            .strip_prefix("rec[-")
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| perr(lineno, format!("bad record reference '{}'", tok)))?;
        let k: usize = inner
            .parse()
            .map_err(|_| perr(lineno, format!("bad record offset '{}'", tok)))?;
        if k == 0 {
            return Err(perr(lineno, "rec[-0] is not a valid reference"));
        }
        out.push(k);
    }
    if out.is_empty() {
        return Err(perr(lineno, "expected at least one rec[-k]"));
    }
    Ok(out)
}

fn parse_line(line: &str, lineno: usize, circuit: &mut Circuit) -> Result<(), CircuitError> {
    let (name, args, rest) = split_head(line, lineno)?;
    let inst = match name {
        "QUBIT_COORDS" => {
            let xy = parse_args(args, 2, lineno)?;
            let qs = parse_qubits(rest, lineno)?;
            if qs.len() != 1 {
                return Err(perr(lineno, "QUBIT_COORDS takes exactly one qubit"));
            }
            circuit.qubit_coords.insert(qs[0], (xy[0], xy[1]));
            return Ok(());
        }
        "TICK" => {
            if !rest.is_empty() || args.is_some() {
                return Err(perr(lineno, "TICK takes no targets"));
            }
            Instruction::Tick
        }
        "RESET_X" => Instruction::Reset(MeasureBasis::X, parse_qubits(rest, lineno)?),
        "RESET_Y" => Instruction::Reset(MeasureBasis::Y, parse_qubits(rest, lineno)?),
        "RESET_Z" => Instruction::Reset(MeasureBasis::Z, parse_qubits(rest, lineno)?),
        "MEASURE_X" => Instruction::Measure(MeasureBasis::X, parse_qubits(rest, lineno)?),
        "MEASURE_Y" => Instruction::Measure(MeasureBasis::Y, parse_qubits(rest, lineno)?),
        "MEASURE_Z" => Instruction::Measure(MeasureBasis::Z, parse_qubits(rest, lineno)?),
        "CNOT" => Instruction::Cnot(parse_qubits(rest, lineno)?),
        "X_ERROR" => Instruction::XError {
            p: parse_args(args, 1, lineno)?[0],
            targets: parse_qubits(rest, lineno)?,
        },
        "Z_ERROR" => Instruction::ZError {
            p: parse_args(args, 1, lineno)?[0],
            targets: parse_qubits(rest, lineno)?,
        },
        "DEPOLARIZE1" => Instruction::Depolarize1 {
            p: parse_args(args, 1, lineno)?[0],
            targets: parse_qubits(rest, lineno)?,
        },
        "DEPOLARIZE2" => Instruction::Depolarize2 {
            p: parse_args(args, 1, lineno)?[0],
            targets: parse_qubits(rest, lineno)?,
        },
        "PAULI_CHANNEL_1" => {
            let ps = parse_args(args, 3, lineno)?;
            Instruction::PauliChannel1 {
                px: ps[0],
                py: ps[1],
                pz: ps[2],
                targets: parse_qubits(rest, lineno)?,
            }
        }
        "DETECTOR" => {
            let c = parse_args(args, 3, lineno)?;
            Instruction::Detector {
                coord: (c[0], c[1], c[2]),
                rel_records: parse_records(rest, lineno)?,
            }
        }
        "OBSERVABLE" => {
            let label: ObservableLabel = args
                .ok_or_else(|| perr(lineno, "missing (label)"))?
                .trim()
                .parse()
                .map_err(|_| perr(lineno, "observable label must be X_L or Z_L"))?;
            Instruction::Observable {
                label,
                rel_records: parse_records(rest, lineno)?,
            }
        }
        other => return Err(perr(lineno, format!("unknown instruction '{}'", other))),
    };
    circuit.instructions.push(inst);
    Ok(())
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_circuit(self))
    }
}

impl FromStr for Circuit {
    type Err = CircuitError;
    fn from_str(s: &str) -> Result<Self, CircuitError> {
        parse_circuit(s)
    }
}

// ============================ Validation ==============================

/// A structural or semantic defect found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Probability argument outside [0, 1], or channel components summing > 1.
    BadProbability { instruction: usize },
    /// CNOT instruction with an odd number of targets.
    OddCnotTargets { instruction: usize },
    /// A CNOT pair with control == target.
    DegeneratePair { instruction: usize, qubit: Qubit },
    /// Gate/measure/reset instruction with an empty target list.
    EmptyTargets { instruction: usize },
    /// A qubit acted on by two gates inside one tick segment.
    QubitTouchedTwice { segment: usize, qubit: Qubit },
    /// rec[-k] reaching before the start of the record.
    RecordOutOfRange { instruction: usize, k: usize },
    /// Detector parity depends on random measurement outcomes.
    NondeterministicDetector { detector: usize },
    /// Detector parity is deterministic but 1 in the noiseless circuit.
    DetectorParityNonzero { detector: usize },
    /// Observable parity depends on random measurement outcomes.
    NondeterministicObservable { observable: usize },
}

/// Checks a circuit; an empty result means valid.
///
/// Structural checks (probabilities, pair shapes, one-touch-per-tick, record
/// ranges) run first; if they pass, an exact noiseless tableau analysis over
/// all random-measurement branches verifies that every detector parity is
/// deterministically zero and every observable deterministic.
pub fn validate(circuit: &Circuit) -> Vec<Violation> {
    let mut v = Vec::new();

    for (idx, inst) in circuit.instructions.iter().enumerate() {
        match inst {
            Instruction::XError { p, targets }
            | Instruction::ZError { p, targets }
            | Instruction::Depolarize1 { p, targets }
            | Instruction::Depolarize2 { p, targets } => {
                if !(0.0..=1.0).contains(p) {
                    v.push(Violation::BadProbability { instruction: idx });
                }
                if targets.is_empty() {
                    v.push(Violation::EmptyTargets { instruction: idx });
                }
                if matches!(inst, Instruction::Depolarize2 { .. }) {
                    check_pairs(idx, targets, &mut v);
                }
            }
            Instruction::PauliChannel1 {
                px,
                py,
                pz,
                targets,
            } => {
                let each_ok = [px, py, pz].iter().all(|p| (0.0..=1.0).contains(*p));
                if !each_ok || px + py + pz > 1.0 + 1e-12 {
                    v.push(Violation::BadProbability { instruction: idx });
                }
                if targets.is_empty() {
                    v.push(Violation::EmptyTargets { instruction: idx });
                }
            }
            Instruction::Cnot(targets) => {
                if targets.is_empty() {
                    v.push(Violation::EmptyTargets { instruction: idx });
                }
                check_pairs(idx, targets, &mut v);
            }
            Instruction::Reset(_, targets) | Instruction::Measure(_, targets) => {
                if targets.is_empty() {
                    v.push(Violation::EmptyTargets { instruction: idx });
                }
            }
            _ => {}
        }
    }

    // One touch per qubit per tick, over gates/measures/resets only.
    for (seg_idx, seg) in circuit.segments().iter().enumerate() {
        let mut touched = std::collections::HashSet::new();
        for inst in &circuit.instructions[seg.range.clone()] {
            if inst.is_noise() {
                continue;
            }
            for &q in inst.targets() {
                if !touched.insert(q) {
                    v.push(Violation::QubitTouchedTwice {
                        segment: seg_idx,
                        qubit: q,
                    });
                }
            }
        }
    }

    // Record ranges.
    let mut seen = 0usize;
    for (idx, inst) in circuit.instructions.iter().enumerate() {
        match inst {
            Instruction::Detector { rel_records, .. }
            | Instruction::Observable { rel_records, .. } => {
                for &k in rel_records {
                    if k == 0 || k > seen {
                        v.push(Violation::RecordOutOfRange { instruction: idx, k });
                    }
                }
            }
            _ => seen += inst.num_measurements(),
        }
    }

    if !v.is_empty() {
        return v;
    }

    // Semantic determinism checks against the stabilizer tableau.
    v.extend(crate::tableau::determinism_violations(circuit));
    v
}

fn check_pairs(idx: usize, targets: &[Qubit], v: &mut Vec<Violation>) {
    if targets.len() % 2 != 0 {
        v.push(Violation::OddCnotTargets { instruction: idx });
        return;
    }
    for pair in targets.chunks(2) {
        if pair[0] == pair[1] {
            v.push(Violation::DegeneratePair {
                instruction: idx,
                qubit: pair[0],
            });
        }
    }
}
