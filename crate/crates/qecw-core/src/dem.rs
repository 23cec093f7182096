//! Detector error model extraction and the weighted matching graph.
//!
//! [`extract_dem`] enumerates every elementary fault of an annotated
//! circuit — each Pauli component of each noise channel — and computes its
//! signature: the set of detectors and observables whose parity the fault
//! flips. Faults with identical signatures merge into one
//! [`ErrorMechanism`] with the XOR-convolved probability
//! `p1(1-p2) + p2(1-p1)`.
//!
//! Extraction runs a single backward sweep over the instruction stream,
//! maintaining per qubit the signature of an X and of a Z inserted at the
//! current cut (the frame-propagation rules of [`crate::pauli`] run in
//! reverse). A fault's signature is then the XOR of the rows its Pauli mask
//! touches, so the whole extraction costs O(circuit) row operations plus
//! O(signature) per fault, independent of the number of faults downstream.
//!
//! [`MatchingGraph::from_dem`] turns mechanisms into decoder edges:
//! 1-detector mechanisms become boundary edges, 2-detector mechanisms
//! internal edges, and wider mechanisms are decomposed into previously seen
//! 1-/2-detector signatures, each component edge absorbing the mechanism's
//! probability independently. Edge weights are `ln((1-p)/p)`.
//!
//! # Text format
//!
//! One line per detector coordinate, then one line per mechanism:
//!
//! ```text
//! detector(0, 0.5, 1) D0
//! error(1.0000000000000000e-3) D0 D3 L0
//! ```
//!
//! Probabilities are printed with 17 significant digits and coordinates with
//! the shortest round-tripping representation, so `emit_dem` output parses
//! back bit-exactly. Fault sources are diagnostics and are not serialized.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Instruction, Qubit};
use crate::pauli::MeasureAxis;

/// Errors from extraction, graph construction, and the text format.
#[derive(Debug, Error)]
pub enum DemError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("{0} observables cannot be bit-packed into one word (max 64)")]
    TooManyObservables(usize),
    #[error("unknown detector id {id} (circuit has {have})")]
    UnknownDetector { id: usize, have: usize },
    #[error("dem parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("hyper-mechanism {detectors:?} (p={probability}) from {origin} does not decompose into known 1-/2-detector signatures")]
    Undecomposable {
        detectors: Vec<u32>,
        probability: f64,
        origin: String,
    },
    #[error("merged probability {probability} of edge ({u}, {v}) is >= 1/2; weights would not be positive")]
    DegenerateEdge { u: u32, v: u32, probability: f64 },
    #[error("detector D{0} cannot reach the boundary through the matching graph")]
    Disconnected(u32),
    #[error("no fault component {component} at instruction {instruction}")]
    BadSource {
        instruction: usize,
        component: usize,
    },
}

/// Where an elementary fault lives: a noise instruction plus a component id.
///
/// Component ids are stable per instruction kind: `X_ERROR`/`Z_ERROR` use the
/// target index; `DEPOLARIZE1`/`PAULI_CHANNEL_1` use `3*target + c` with
/// `c ∈ {0: X, 1: Y, 2: Z}`; `DEPOLARIZE2` uses `15*pair + (c-1)` where
/// `c ∈ 1..=15` encodes the non-identity Pauli pair with bit 0 = X on the
/// second qubit, bit 1 = Z on the second, bit 2 = X on the first, bit 3 = Z
/// on the first (matching the sampler's component convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FaultSource {
    pub instruction: usize,
    pub component: usize,
}

/// The Pauli content of one elementary fault: per-qubit (X-part, Z-part).
#[derive(Debug, Clone, PartialEq)]
pub struct FaultComponent {
    pub probability: f64,
    /// `(qubit, has X part, has Z part)`; Y is both.
    pub pauli: Vec<(Qubit, bool, bool)>,
}

/// One independent error mechanism: a signature and its merged probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMechanism {
    pub probability: f64,
    /// Sorted detector ids flipped by the fault.
    pub detectors: Vec<u32>,
    /// Bit `k` set means observable `k` flips.
    pub observables: u64,
    /// Every elementary fault merged into this mechanism (diagnostics).
    pub sources: Vec<FaultSource>,
}

/// Mechanisms plus detector coordinates; serializable as text.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorErrorModel {
    pub num_detectors: usize,
    /// On parse this is inferred as one past the largest referenced id.
    pub num_observables: usize,
    pub detector_coords: Vec<(f64, f64, f64)>,
    /// Sorted by (detectors, observables); probabilities > 0.
    pub mechanisms: Vec<ErrorMechanism>,
    /// Faults flipping nothing at all (dropped; diagnostic count).
    pub undetectable: usize,
    /// Faults flipping an observable but no detector (dropped; a code with
    /// any of these has distance zero for that observable).
    pub undetectable_logical: usize,
}

/// One matching-graph edge. `v == boundary` marks a boundary edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub probability: f64,
    /// `ln((1-p)/p)`.
    pub weight: f64,
    pub observables: u64,
}

/// Record of one decomposed hyper-mechanism (diagnostics).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Index into the source model's `mechanisms`.
    pub mechanism: usize,
    /// Indices into `MatchingGraph::edges` that absorbed its probability.
    pub edges: Vec<usize>,
}

/// Weighted matching graph over detectors plus one boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingGraph {
    pub num_detectors: usize,
    pub num_observables: usize,
    /// Sorted by (u, v, observables); u < v; v may be the boundary node.
    pub edges: Vec<Edge>,
    /// Edge indices incident to each node; row `num_detectors` is the
    /// boundary node.
    pub adjacency: Vec<Vec<u32>>,
    /// Hyper-mechanisms that were decomposed (diagnostics).
    pub decompositions: Vec<Decomposition>,
}

impl MatchingGraph {
    /// The node id representing the boundary.
    pub fn boundary(&self) -> u32 {
        self.num_detectors as u32
    }

    /// The endpoint of `edge` that is not `node`.
    pub fn other_end(&self, edge: u32, node: u32) -> u32 {
        let e = &self.edges[edge as usize];
        if e.u == node {
            e.v
        } else {
            e.u
        }
    }
}

// ============================ Extraction =============================

/// Enumerates the elementary fault components of one instruction as
/// `(component id, component)`, skipping zero-probability components.
pub fn enumerate_components(inst: &Instruction) -> Vec<(usize, FaultComponent)> {
    let mut out = Vec::new();
    match inst {
        Instruction::XError { p, targets } if *p > 0.0 => {
            for (i, &q) in targets.iter().enumerate() {
                out.push((
                    i,
                    FaultComponent {
                        probability: *p,
                        pauli: vec![(q, true, false)],
                    },
                ));
            }
        }
        Instruction::ZError { p, targets } if *p > 0.0 => {
            for (i, &q) in targets.iter().enumerate() {
                out.push((
                    i,
                    FaultComponent {
                        probability: *p,
                        pauli: vec![(q, false, true)],
                    },
                ));
            }
        }
        Instruction::Depolarize1 { p, targets } if *p > 0.0 => {
            for (i, &q) in targets.iter().enumerate() {
                for c in 0..3usize {
                    out.push((
                        3 * i + c,
                        FaultComponent {
                            probability: p / 3.0,
                            pauli: vec![(q, c != 2, c != 0)],
                        },
                    ));
                }
            }
        }
        Instruction::PauliChannel1 { px, py, pz, targets } => {
            for (i, &q) in targets.iter().enumerate() {
                for (c, &pc) in [px, py, pz].iter().enumerate() {
                    if *pc > 0.0 {
                        out.push((
                            3 * i + c,
                            FaultComponent {
                                probability: *pc,
                                pauli: vec![(q, c != 2, c != 0)],
                            },
                        ));
                    }
                }
            }
        }
        Instruction::Depolarize2 { p, targets } if *p > 0.0 => {
            for (i, pair) in targets.chunks_exact(2).enumerate() {
                for c in 1..16usize {
                    out.push((
                        15 * i + (c - 1),
                        FaultComponent {
                            probability: p / 15.0,
                            pauli: vec![
                                (pair[0], c & 0b0100 != 0, c & 0b1000 != 0),
                                (pair[1], c & 0b0001 != 0, c & 0b0010 != 0),
                            ],
                        },
                    ));
                }
            }
        }
        _ => {}
    }
    out
}

/// Human-readable location of a fault, for error messages.
pub fn describe_source(circuit: &Circuit, source: &FaultSource) -> String {
    let name = match circuit.instructions.get(source.instruction) {
        Some(Instruction::XError { .. }) => "X_ERROR",
        Some(Instruction::ZError { .. }) => "Z_ERROR",
        Some(Instruction::Depolarize1 { .. }) => "DEPOLARIZE1",
        Some(Instruction::Depolarize2 { .. }) => "DEPOLARIZE2",
        Some(Instruction::PauliChannel1 { .. }) => "PAULI_CHANNEL_1",
        _ => "instruction",
    };
    format!(
        "{name} component {} at instruction {}",
        source.component, source.instruction
    )
}

/// Bit-row workspace: per qubit, the signature of an X and of a Z inserted
/// at the current cut, as bitmasks over detectors then observables.
struct Sensitivity {
    words: usize,
    x: Vec<u64>,
    z: Vec<u64>,
}

impl Sensitivity {
    fn new(num_qubits: usize, bits: usize) -> Sensitivity {
        let words = bits.div_ceil(64).max(1);
        Sensitivity {
            words,
            x: vec![0; num_qubits * words],
            z: vec![0; num_qubits * words],
        }
    }

    /// `row[dst] ^= row[src]` within one matrix (rows must differ).
    fn xor_row(m: &mut [u64], dst: usize, src: usize, w: usize) {
        debug_assert_ne!(dst, src);
        for k in 0..w {
            m[dst * w + k] ^= m[src * w + k];
        }
    }

    fn xor_mask(row: &mut [u64], q: usize, mask: &[u64], w: usize) {
        for k in 0..w {
            row[q * w + k] ^= mask[k];
        }
    }

    fn clear(row: &mut [u64], q: usize, w: usize) {
        row[q * w..(q + 1) * w].fill(0);
    }
}

/// Extracts the detector error model of an annotated circuit.
///
/// Every Pauli component of every noise channel is propagated to its
/// detector/observable signature; identical signatures merge via
/// `p <- p1(1-p2) + p2(1-p1)` (in reverse instruction order, which is
/// deterministic). Mechanisms are returned sorted by signature. Faults that
/// flip nothing are counted in `undetectable`; faults that flip only
/// observables are counted in `undetectable_logical`.
pub fn extract_dem(circuit: &Circuit) -> Result<DetectorErrorModel, DemError> {
    let detectors = circuit.resolved_detectors()?;
    let observables = circuit.resolved_observables()?;
    let nd = detectors.len();
    let no = observables.len();
    if no > 64 {
        return Err(DemError::TooManyObservables(no));
    }
    let bits = nd + no;
    let num_qubits = circuit.num_qubits();
    let num_records = circuit.num_measurements();
    let words = bits.div_ceil(64).max(1);

    // rec_mask[r]: which detectors/observables reference record r.
    let mut rec_mask = vec![0u64; num_records * words];
    for (j, d) in detectors.iter().enumerate() {
        for &r in &d.records {
            rec_mask[r * words + j / 64] ^= 1 << (j % 64);
        }
    }
    for (j, o) in observables.iter().enumerate() {
        let bit = nd + j;
        for &r in &o.records {
            rec_mask[r * words + bit / 64] ^= 1 << (bit % 64);
        }
    }

    let mut sens = Sensitivity::new(num_qubits, bits);
    let w = sens.words;
    debug_assert_eq!(w, words);

    // Backward sweep. Before processing instruction i the workspace holds
    // the signatures for a fault inserted between i and i+1 — exactly where
    // the components of a noise instruction at i act. Faults merge into
    // mechanisms as they are found (reverse instruction order), which keeps
    // memory at O(mechanisms) and the float merges deterministic.
    let mut index: HashMap<(Vec<u32>, u64), usize> = HashMap::new();
    let mut mechanisms: Vec<ErrorMechanism> = Vec::new();
    let mut undetectable = 0usize;
    let mut undetectable_logical = 0usize;
    let mut scratch = vec![0u64; w];
    let mut next_record = num_records;
    for (i, inst) in circuit.instructions.iter().enumerate().rev() {
        if inst.is_noise() {
            for (component, fc) in enumerate_components(inst) {
                scratch.fill(0);
                for &(q, has_x, has_z) in &fc.pauli {
                    let q = q as usize;
                    if has_x {
                        for k in 0..w {
                            scratch[k] ^= sens.x[q * w + k];
                        }
                    }
                    if has_z {
                        for k in 0..w {
                            scratch[k] ^= sens.z[q * w + k];
                        }
                    }
                }
                let source = FaultSource {
                    instruction: i,
                    component,
                };
                let p = fc.probability;
                let mut dets = Vec::new();
                for (word_idx, &word) in scratch.iter().enumerate() {
                    let mut word = word;
                    while word != 0 {
                        let bit = word_idx * 64 + word.trailing_zeros() as usize;
                        word &= word - 1;
                        if bit < nd {
                            dets.push(bit as u32);
                        }
                    }
                }
                let mut obs = 0u64;
                for j in 0..no {
                    let bit = nd + j;
                    if scratch[bit / 64] >> (bit % 64) & 1 != 0 {
                        obs |= 1 << j;
                    }
                }
                if dets.is_empty() {
                    if obs == 0 {
                        undetectable += 1;
                    } else {
                        undetectable_logical += 1;
                    }
                    continue;
                }
                match index.entry((dets, obs)) {
                    std::collections::hash_map::Entry::Occupied(e) => {
                        let m = &mut mechanisms[*e.get()];
                        m.probability = m.probability * (1.0 - p) + p * (1.0 - m.probability);
                        m.sources.push(source);
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        let (dets, obs) = e.key().clone();
                        e.insert(mechanisms.len());
                        mechanisms.push(ErrorMechanism {
                            probability: p,
                            detectors: dets,
                            observables: obs,
                            sources: vec![source],
                        });
                    }
                }
            }
            continue;
        }
        match inst {
            Instruction::Cnot(targets) => {
                // Inverse of X_c -> X_c X_t and Z_t -> Z_c Z_t. Pairs within
                // one instruction act on disjoint qubits, so order within
                // the chunk loop does not matter.
                for pair in targets.chunks_exact(2).rev() {
                    let (c, t) = (pair[0] as usize, pair[1] as usize);
                    Sensitivity::xor_row(&mut sens.x, c, t, w);
                    Sensitivity::xor_row(&mut sens.z, t, c, w);
                }
            }
            Instruction::Measure(basis, targets) => {
                for &q in targets.iter().rev() {
                    next_record -= 1;
                    let mask = &rec_mask[next_record * w..(next_record + 1) * w];
                    let (on_x, on_z) = match basis {
                        MeasureAxis::Z => (true, false),
                        MeasureAxis::X => (false, true),
                        MeasureAxis::Y => (true, true),
                    };
                    if on_x {
                        Sensitivity::xor_mask(&mut sens.x, q as usize, mask, w);
                    }
                    if on_z {
                        Sensitivity::xor_mask(&mut sens.z, q as usize, mask, w);
                    }
                }
            }
            Instruction::Reset(_, targets) => {
                // A fault before a reset is discarded with the state.
                for &q in targets {
                    Sensitivity::clear(&mut sens.x, q as usize, w);
                    Sensitivity::clear(&mut sens.z, q as usize, w);
                }
            }
            _ => {}
        }
    }
    debug_assert_eq!(next_record, 0);
    mechanisms.sort_by(|a, b| {
        a.detectors
            .cmp(&b.detectors)
            .then(a.observables.cmp(&b.observables))
    });
    for m in &mut mechanisms {
        m.sources.sort_unstable();
    }

    Ok(DetectorErrorModel {
        num_detectors: nd,
        num_observables: no,
        detector_coords: detectors.into_iter().map(|d| d.coord).collect(),
        mechanisms,
        undetectable,
        undetectable_logical,
    })
}

/// All elementary faults whose signature includes `detector`.
pub fn detecting_region(
    circuit: &Circuit,
    detector: usize,
) -> Result<Vec<FaultSource>, DemError> {
    let dem = extract_dem(circuit)?;
    if detector >= dem.num_detectors {
        return Err(DemError::UnknownDetector {
            id: detector,
            have: dem.num_detectors,
        });
    }
    let mut out: Vec<FaultSource> = dem
        .mechanisms
        .iter()
        .filter(|m| m.detectors.binary_search(&(detector as u32)).is_ok())
        .flat_map(|m| m.sources.iter().copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Rebuilds `circuit` with all noise removed except one deterministic fault:
/// the given component fires with probability 1. Record indices are
/// unchanged, so detectors and observables refer to the same measurements.
pub fn inject_fault(circuit: &Circuit, source: &FaultSource) -> Result<Circuit, DemError> {
    let inst = circuit
        .instructions
        .get(source.instruction)
        .filter(|i| i.is_noise())
        .ok_or(DemError::BadSource {
            instruction: source.instruction,
            component: source.component,
        })?;
    let fc = enumerate_components(inst)
        .into_iter()
        .find(|(c, _)| *c == source.component)
        .map(|(_, fc)| fc)
        .ok_or(DemError::BadSource {
            instruction: source.instruction,
            component: source.component,
        })?;

    let mut out = Circuit {
        instructions: Vec::with_capacity(circuit.instructions.len() + 2),
        qubit_coords: circuit.qubit_coords.clone(),
    };
    for (i, inst) in circuit.instructions.iter().enumerate() {
        if i == source.instruction {
            let xs: Vec<Qubit> = fc
                .pauli
                .iter()
                .filter(|&&(_, x, _)| x)
                .map(|&(q, _, _)| q)
                .collect();
            let zs: Vec<Qubit> = fc
                .pauli
                .iter()
                .filter(|&&(_, _, z)| z)
                .map(|&(q, _, _)| q)
                .collect();
            if !xs.is_empty() {
                out.instructions.push(Instruction::XError { p: 1.0, targets: xs });
            }
            if !zs.is_empty() {
                out.instructions.push(Instruction::ZError { p: 1.0, targets: zs });
            }
        }
        if !inst.is_noise() {
            out.instructions.push(inst.clone());
        }
    }
    Ok(out)
}

// ========================== Matching graph ===========================

impl MatchingGraph {
    /// Builds the decoder graph from a detector error model.
    ///
    /// Mechanisms with one detector attach to the boundary node; mechanisms
    /// with two become internal edges; wider ones are decomposed into
    /// previously seen 1-/2-detector signatures whose observable masks XOR
    /// to the mechanism's mask, each component edge absorbing the
    /// mechanism's probability independently. Parallel edges with different
    /// observable masks are kept distinct. Fails if a hyper-mechanism does
    /// not decompose, if a merged probability reaches 1/2, or if a detector
    /// carrying edges cannot reach the boundary.
    pub fn from_dem(dem: &DetectorErrorModel) -> Result<MatchingGraph, DemError> {
        let boundary = dem.num_detectors as u32;
        // Known part signatures: detector set -> sorted observable masks.
        let mut parts: HashMap<&[u32], Vec<u64>> = HashMap::new();
        for m in &dem.mechanisms {
            if m.detectors.len() <= 2 {
                let masks = parts.entry(m.detectors.as_slice()).or_default();
                if let Err(pos) = masks.binary_search(&m.observables) {
                    masks.insert(pos, m.observables);
                }
            }
        }

        // Accumulate edge probabilities keyed by (u, v, observables).
        let mut acc: HashMap<(u32, u32, u64), f64> = HashMap::new();
        let merge = |u: u32, v: u32, obs: u64, p: f64, acc: &mut HashMap<(u32, u32, u64), f64>| {
            let key = if u <= v { (u, v, obs) } else { (v, u, obs) };
            let q = acc.entry(key).or_insert(0.0);
            *q = *q * (1.0 - p) + p * (1.0 - *q);
        };
        let mut decompositions_raw: Vec<(usize, Vec<(Vec<u32>, u64)>)> = Vec::new();
        for (mi, m) in dem.mechanisms.iter().enumerate() {
            match m.detectors.len() {
                1 => merge(m.detectors[0], boundary, m.observables, m.probability, &mut acc),
                2 => merge(m.detectors[0], m.detectors[1], m.observables, m.probability, &mut acc),
                _ => {
                    let combo = decompose(&m.detectors, m.observables, &parts).ok_or_else(|| {
                        DemError::Undecomposable {
                            detectors: m.detectors.clone(),
                            probability: m.probability,
                            origin: m
                                .sources
                                .first()
                                .map(|s| format!("instruction {} component {}", s.instruction, s.component))
                                .unwrap_or_else(|| "unknown source".into()),
                        }
                    })?;
                    for (dets, obs) in &combo {
                        match dets.len() {
                            1 => merge(dets[0], boundary, *obs, m.probability, &mut acc),
                            _ => merge(dets[0], dets[1], *obs, m.probability, &mut acc),
                        }
                    }
                    decompositions_raw.push((mi, combo));
                }
            }
        }

        let mut keys: Vec<(u32, u32, u64)> = acc.keys().copied().collect();
        keys.sort_unstable();
        let mut edges = Vec::with_capacity(keys.len());
        let mut edge_index: HashMap<(u32, u32, u64), usize> = HashMap::new();
        for key in keys {
            let p = acc[&key];
            if p >= 0.5 {
                return Err(DemError::DegenerateEdge {
                    u: key.0,
                    v: key.1,
                    probability: p,
                });
            }
            edge_index.insert(key, edges.len());
            edges.push(Edge {
                u: key.0,
                v: key.1,
                probability: p,
                weight: ((1.0 - p) / p).ln(),
                observables: key.2,
            });
        }

        let decompositions = decompositions_raw
            .into_iter()
            .map(|(mechanism, combo)| Decomposition {
                mechanism,
                edges: combo
                    .into_iter()
                    .map(|(dets, obs)| {
                        let key = match dets.len() {
                            1 => (dets[0], boundary, obs),
                            _ => (dets[0], dets[1], obs),
                        };
                        edge_index[&key]
                    })
                    .collect(),
            })
            .collect();

        let mut adjacency = vec![Vec::new(); dem.num_detectors + 1];
        for (ei, e) in edges.iter().enumerate() {
            adjacency[e.u as usize].push(ei as u32);
            if e.v != e.u {
                adjacency[e.v as usize].push(ei as u32);
            }
        }

        let graph = MatchingGraph {
            num_detectors: dem.num_detectors,
            num_observables: dem.num_observables,
            edges,
            adjacency,
            decompositions,
        };

        // Every detector that can fire must reach the boundary.
        let mut seen = vec![false; dem.num_detectors + 1];
        let mut stack = vec![boundary];
        seen[boundary as usize] = true;
        while let Some(n) = stack.pop() {
            for &ei in &graph.adjacency[n as usize] {
                let o = graph.other_end(ei, n);
                if !seen[o as usize] {
                    seen[o as usize] = true;
                    stack.push(o);
                }
            }
        }
        for d in 0..dem.num_detectors {
            if !graph.adjacency[d].is_empty() && !seen[d] {
                return Err(DemError::Disconnected(d as u32));
            }
        }

        Ok(graph)
    }
}

/// Extracts the model and builds the matching graph in one step.
pub fn matching_graph(circuit: &Circuit) -> Result<MatchingGraph, DemError> {
    MatchingGraph::from_dem(&extract_dem(circuit)?)
}

/// Splits `dets` into known 1-/2-detector parts whose masks XOR to `mask`.
///
/// Exhaustive backtracking over pairings; detector sets this wide come from
/// single two-qubit channel components, so they stay tiny (≤ 6 in practice).
/// Deterministic: partners and masks are tried in ascending order and the
/// first full solution wins.
fn decompose(
    dets: &[u32],
    mask: u64,
    parts: &HashMap<&[u32], Vec<u64>>,
) -> Option<Vec<(Vec<u32>, u64)>> {
    if dets.is_empty() {
        return if mask == 0 { Some(Vec::new()) } else { None };
    }
    let a = dets[0];
    // Pair `a` with a later detector.
    for (j, &b) in dets.iter().enumerate().skip(1) {
        let pair = [a, b];
        if let Some(masks) = parts.get(pair.as_slice()) {
            let mut rest: Vec<u32> = Vec::with_capacity(dets.len() - 2);
            rest.extend(dets.iter().enumerate().filter(|&(k, _)| k != 0 && k != j).map(|(_, &d)| d));
            for &m in masks {
                if let Some(mut combo) = decompose(&rest, mask ^ m, parts) {
                    combo.insert(0, (pair.to_vec(), m));
                    return Some(combo);
                }
            }
        }
    }
    // Or send `a` to the boundary alone.
    let single = [a];
    if let Some(masks) = parts.get(single.as_slice()) {
        for &m in masks {
            if let Some(mut combo) = decompose(&dets[1..], mask ^ m, parts) {
                combo.insert(0, (single.to_vec(), m));
                return Some(combo);
            }
        }
    }
    None
}

// ============================ Text format =============================

fn fmt_prob(p: f64) -> String {
    format!("{:.16e}", p)
}

impl fmt::Display for DetectorErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.detector_coords.iter().enumerate() {
            writeln!(f, "detector({}, {}, {}) D{k}", c.0, c.1, c.2)?;
        }
        for m in &self.mechanisms {
            write!(f, "error({})", fmt_prob(m.probability))?;
            for d in &m.detectors {
                write!(f, " D{d}")?;
            }
            for j in 0..64 {
                if m.observables >> j & 1 != 0 {
                    write!(f, " L{j}")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Serialises the model in the line-based text format.
pub fn emit_dem(dem: &DetectorErrorModel) -> String {
    dem.to_string()
}

/// Parses the text format back into a model.
///
/// `num_observables` is inferred as one past the largest referenced
/// observable id; fault sources and the undetectable counts are not part of
/// the format and come back empty.
pub fn parse_dem(text: &str) -> Result<DetectorErrorModel, DemError> {
    let mut coords = Vec::new();
    let mut mechanisms = Vec::new();
    let mut max_obs: Option<u32> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: String| DemError::Parse {
            line: lineno + 1,
            msg,
        };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("detector(") {
            let (args, tail) = rest
                .split_once(')')
                .ok_or_else(|| err("missing ')'".into()))?;
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(err(format!("expected 3 coordinates, got {}", parts.len())));
            }
            let mut c = [0.0f64; 3];
            for (slot, s) in c.iter_mut().zip(&parts) {
                *slot = s
                    .parse()
                    .map_err(|_| err(format!("bad coordinate '{s}'")))?;
            }
            let tail = tail.trim();
            let expect = format!("D{}", coords.len());
            if tail != expect {
                return Err(err(format!("expected '{expect}', got '{tail}'")));
            }
            coords.push((c[0], c[1], c[2]));
        } else if let Some(rest) = line.strip_prefix("error(") {
            let (arg, tail) = rest
                .split_once(')')
                .ok_or_else(|| err("missing ')'".into()))?;
            let probability: f64 = arg
                .trim()
                .parse()
                .map_err(|_| err(format!("bad probability '{arg}'")))?;
            if !(probability > 0.0 && probability <= 1.0) {
                return Err(err(format!("probability {probability} out of (0, 1]")));
            }
            let mut detectors = Vec::new();
            let mut observables = 0u64;
            for tok in tail.split_whitespace() {
                if let Some(d) = tok.strip_prefix('D') {
                    detectors.push(
                        d.parse::<u32>()
                            .map_err(|_| err(format!("bad detector '{tok}'")))?,
                    );
                } else if let Some(l) = tok.strip_prefix('L') {
                    let j: u32 = l.parse().map_err(|_| err(format!("bad observable '{tok}'")))?;
                    if j >= 64 {
                        return Err(err(format!("observable id {j} out of range")));
                    }
                    observables |= 1 << j;
                    max_obs = Some(max_obs.map_or(j, |m| m.max(j)));
                } else {
                    return Err(err(format!("unknown token '{tok}'")));
                }
            }
            if detectors.is_empty() {
                return Err(err("error line flips no detector".into()));
            }
            if detectors.windows(2).any(|w| w[0] >= w[1]) {
                return Err(err("detector ids must be strictly increasing".into()));
            }
            mechanisms.push(ErrorMechanism {
                probability,
                detectors,
                observables,
                sources: Vec::new(),
            });
        } else {
            return Err(err(format!(
                "unknown line '{}'",
                &line[..line.len().min(30)]
            )));
        }
    }
    let num_detectors = coords.len();
    for m in &mechanisms {
        if let Some(&d) = m.detectors.last() {
            if d as usize >= num_detectors {
                return Err(DemError::UnknownDetector {
                    id: d as usize,
                    have: num_detectors,
                });
            }
        }
    }
    Ok(DetectorErrorModel {
        num_detectors,
        num_observables: max_obs.map_or(0, |m| m as usize + 1),
        detector_coords: coords,
        mechanisms,
        undetectable: 0,
        undetectable_logical: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use crate::framesim::sample;

    /// Repetition-code memory: 3 data qubits, `rounds` syndrome rounds with
    /// an X channel of probability `p` on the data before each round and a
    /// flip of probability `q` before each ancilla measurement, then a
    /// final data readout. The observable is the first data qubit.
    fn repetition(rounds: usize, p: f64, q: f64) -> Circuit {
        let mut text = String::from("RESET_Z 0 1 2 3 4\nTICK\n");
        for r in 0..rounds {
            if r > 0 {
                text += "RESET_Z 3 4\nTICK\n";
            }
            text += &format!("X_ERROR({p}) 0 1 2\nTICK\n");
            text += "CNOT 0 3 1 4\nTICK\nCNOT 1 3 2 4\nTICK\n";
            text += &format!("X_ERROR({q}) 3 4\n");
            text += "MEASURE_Z 3 4\n";
            if r == 0 {
                text += "DETECTOR(0.5, 0, 0) rec[-2]\nDETECTOR(1.5, 0, 0) rec[-1]\n";
            } else {
                text += &format!(
                    "DETECTOR(0.5, 0, {r}) rec[-2] rec[-4]\nDETECTOR(1.5, 0, {r}) rec[-1] rec[-3]\n"
                );
            }
            text += "TICK\n";
        }
        text += "MEASURE_Z 0 1 2\n";
        let r = rounds;
        text += &format!("DETECTOR(0.5, 0, {r}) rec[-3] rec[-2] rec[-5]\n");
        text += &format!("DETECTOR(1.5, 0, {r}) rec[-2] rec[-1] rec[-4]\n");
        text += "OBSERVABLE(Z_L) rec[-3]\n";
        parse_circuit(&text).unwrap()
    }

    #[test]
    fn noiseless_circuit_yields_no_mechanisms() {
        let dem = extract_dem(&repetition(2, 0.0, 0.0)).unwrap();
        assert!(dem.mechanisms.is_empty());
        assert_eq!(dem.num_detectors, 6);
        assert_eq!(dem.num_observables, 1);
        assert_eq!(dem.undetectable, 0);
    }

    #[test]
    fn repetition_grid_has_space_and_time_edges_only() {
        // 3 rounds: mechanisms are either data flips (probability p, one or
        // two detectors in the same time layer, boundary columns carrying
        // the observable) or measurement flips (probability q, two
        // detectors in consecutive layers).
        let (p, q) = (1e-3, 2e-3);
        let dem = extract_dem(&repetition(3, p, q)).unwrap();
        // Layers: detectors 2r and 2r+1 live at layer r (0..=3).
        let layer = |d: u32| d / 2;
        let mut space = 0;
        let mut time = 0;
        for m in &dem.mechanisms {
            match m.detectors.len() {
                1 => {
                    assert!((m.probability - p).abs() < 1e-15);
                    // Boundary data qubits; only qubit 0 carries Z_L.
                    space += 1;
                }
                2 => {
                    let (a, b) = (m.detectors[0], m.detectors[1]);
                    if layer(a) == layer(b) {
                        assert!((m.probability - p).abs() < 1e-15, "space edge {:?}", m);
                        assert_eq!(m.observables, 0);
                        space += 1;
                    } else {
                        assert_eq!(layer(a) + 1, layer(b), "time edge {:?}", m);
                        assert!((m.probability - q).abs() < 1e-15, "time edge {:?}", m);
                        assert_eq!(m.observables, 0);
                        time += 1;
                    }
                }
                n => panic!("unexpected {n}-detector mechanism {:?}", m),
            }
        }
        // Data flips: 3 qubits x 3 layers; middle qubit gives layer-internal
        // pairs, the two boundary qubits give single-detector mechanisms.
        assert_eq!(space, 9);
        // Measurement flips: 2 ancillas x 3 rounds (the last round merges
        // with the final-readout comparison, still two detectors).
        assert_eq!(time, 6);
        // Exactly the boundary-column data flips on qubit 0 carry Z_L.
        let logical: Vec<_> = dem.mechanisms.iter().filter(|m| m.observables == 1).collect();
        assert_eq!(logical.len(), 3);
        assert!(logical.iter().all(|m| m.detectors.len() == 1));
    }

    #[test]
    fn identical_signatures_merge_with_xor_convolution() {
        let text = "RESET_Z 0\nTICK\nX_ERROR(0.25) 0\nX_ERROR(0.125) 0\nTICK\nMEASURE_Z 0\nDETECTOR(0, 0, 0) rec[-1]\n";
        let dem = extract_dem(&parse_circuit(text).unwrap()).unwrap();
        assert_eq!(dem.mechanisms.len(), 1);
        let m = &dem.mechanisms[0];
        assert_eq!(m.probability, 0.25 * 0.875 + 0.125 * 0.75);
        assert_eq!(m.sources.len(), 2);
    }

    #[test]
    fn every_mechanism_signature_survives_fault_injection() {
        // The extraction's backward pass against the forward sampler.
        let c = repetition(3, 1e-3, 2e-3);
        let dem = extract_dem(&c).unwrap();
        assert!(!dem.mechanisms.is_empty());
        for m in &dem.mechanisms {
            for s in &m.sources {
                let injected = inject_fault(&c, s).unwrap();
                let batch = sample(&injected, 1, 0).unwrap();
                let fired: Vec<u32> = (0..dem.num_detectors)
                    .filter(|&k| batch.detector(0, k))
                    .map(|k| k as u32)
                    .collect();
                assert_eq!(fired, m.detectors, "source {:?}", s);
                let mut obs = 0u64;
                for j in 0..dem.num_observables {
                    if batch.observable(0, j) {
                        obs |= 1 << j;
                    }
                }
                assert_eq!(obs, m.observables, "source {:?}", s);
            }
        }
    }

    #[test]
    fn depolarizing_components_inject_correctly() {
        // Y on the data qubit between X-basis resets and measurement: the
        // X part is invisible, the Z part flips the record.
        let text = "RESET_X 0\nTICK\nDEPOLARIZE1(0.3) 0\nTICK\nMEASURE_X 0\nDETECTOR(0, 0, 0) rec[-1]\n";
        let c = parse_circuit(text).unwrap();
        let dem = extract_dem(&c).unwrap();
        // X component is undetectable; Y and Z merge (same signature).
        assert_eq!(dem.undetectable, 1);
        assert_eq!(dem.mechanisms.len(), 1);
        let p = 0.1;
        assert!((dem.mechanisms[0].probability - (p * (1.0 - p) + p * (1.0 - p))).abs() < 1e-15);
        assert_eq!(dem.mechanisms[0].sources.len(), 2);
    }

    #[test]
    fn detecting_region_matches_membership() {
        let c = repetition(2, 1e-3, 2e-3);
        let dem = extract_dem(&c).unwrap();
        for d in 0..dem.num_detectors {
            let region = detecting_region(&c, d).unwrap();
            let expect: std::collections::BTreeSet<FaultSource> = dem
                .mechanisms
                .iter()
                .filter(|m| m.detectors.contains(&(d as u32)))
                .flat_map(|m| m.sources.iter().copied())
                .collect();
            assert_eq!(region, expect.into_iter().collect::<Vec<_>>());
            assert!(!region.is_empty(), "detector {d} has an empty region");
        }
        assert!(matches!(
            detecting_region(&c, 99),
            Err(DemError::UnknownDetector { id: 99, .. })
        ));
    }

    #[test]
    fn dem_text_round_trips() {
        let dem = extract_dem(&repetition(2, 1e-3, 2e-3)).unwrap();
        let text = emit_dem(&dem);
        let back = parse_dem(&text).unwrap();
        assert_eq!(back.num_detectors, dem.num_detectors);
        assert_eq!(back.num_observables, dem.num_observables);
        assert_eq!(back.detector_coords, dem.detector_coords);
        assert_eq!(back.mechanisms.len(), dem.mechanisms.len());
        for (a, b) in back.mechanisms.iter().zip(&dem.mechanisms) {
            assert_eq!(a.probability.to_bits(), b.probability.to_bits());
            assert_eq!(a.detectors, b.detectors);
            assert_eq!(a.observables, b.observables);
        }
        assert_eq!(emit_dem(&back), text);
    }

    #[test]
    fn dem_parse_rejects_malformed_lines() {
        for (text, needle) in [
            ("error(0.1) D0 D1\n", "unknown detector"),
            ("frobnicate\n", "unknown line"),
            ("detector(1, 2) D0\n", "expected 3 coordinates"),
            ("detector(0, 0, 0) D5\n", "expected 'D0'"),
            ("detector(0, 0, 0) D0\nerror(2.0) D0\n", "out of (0, 1]"),
            ("detector(0, 0, 0) D0\nerror(0.1) D0 D0\n", "strictly increasing"),
            ("detector(0, 0, 0) D0\nerror(0.1)\n", "flips no detector"),
            ("detector(0, 0, 0) D0\nerror(0.1) D0 Q3\n", "unknown token"),
        ] {
            let e = parse_dem(text).unwrap_err().to_string();
            assert!(e.contains(needle), "{text:?} -> {e}");
        }
    }

    #[test]
    fn graph_separates_boundary_and_internal_edges() {
        let (p, q) = (1e-3, 2e-3);
        let dem = extract_dem(&repetition(3, p, q)).unwrap();
        let g = MatchingGraph::from_dem(&dem).unwrap();
        let boundary = g.boundary();
        let b_edges: Vec<_> = g.edges.iter().filter(|e| e.v == boundary).collect();
        let i_edges: Vec<_> = g.edges.iter().filter(|e| e.v != boundary).collect();
        assert_eq!(b_edges.len() + i_edges.len(), dem.mechanisms.len());
        assert_eq!(b_edges.len(), 6);
        for e in &g.edges {
            assert!(e.weight.is_finite() && e.weight > 0.0);
            let expected = ((1.0 - e.probability) / e.probability).ln();
            assert_eq!(e.weight, expected);
        }
        // Deterministic ordering.
        let mut keys: Vec<_> = g.edges.iter().map(|e| (e.u, e.v, e.observables)).collect();
        let sorted = {
            let mut k = keys.clone();
            k.sort_unstable();
            k
        };
        assert_eq!(keys, sorted);
        keys.dedup();
        assert_eq!(keys.len(), g.edges.len());
    }

    #[test]
    fn hyper_mechanisms_decompose_into_known_parts() {
        let dem = DetectorErrorModel {
            num_detectors: 4,
            num_observables: 1,
            detector_coords: vec![(0.0, 0.0, 0.0); 4],
            mechanisms: vec![
                ErrorMechanism {
                    probability: 0.01,
                    detectors: vec![0, 1],
                    observables: 0,
                    sources: vec![],
                },
                ErrorMechanism {
                    probability: 0.02,
                    detectors: vec![2],
                    observables: 1,
                    sources: vec![],
                },
                ErrorMechanism {
                    probability: 0.03,
                    detectors: vec![0, 1, 2],
                    observables: 1,
                    sources: vec![],
                },
                ErrorMechanism {
                    probability: 0.05,
                    detectors: vec![3],
                    observables: 0,
                    sources: vec![],
                },
            ],
            undetectable: 0,
            undetectable_logical: 0,
        };
        let g = MatchingGraph::from_dem(&dem).unwrap();
        assert_eq!(g.decompositions.len(), 1);
        assert_eq!(g.decompositions[0].mechanism, 2);
        assert_eq!(g.decompositions[0].edges.len(), 2);
        // The hyper-mechanism's probability merged into both components.
        let e01 = g.edges.iter().find(|e| (e.u, e.v) == (0, 1)).unwrap();
        assert!((e01.probability - (0.01 * 0.97 + 0.03 * 0.99)).abs() < 1e-15);
        let e2b = g
            .edges
            .iter()
            .find(|e| (e.u, e.v) == (2, g.boundary()))
            .unwrap();
        assert!((e2b.probability - (0.02 * 0.97 + 0.03 * 0.98)).abs() < 1e-15);
    }

    #[test]
    fn undecomposable_hyper_mechanism_is_an_error() {
        let dem = DetectorErrorModel {
            num_detectors: 3,
            num_observables: 0,
            detector_coords: vec![(0.0, 0.0, 0.0); 3],
            mechanisms: vec![ErrorMechanism {
                probability: 0.01,
                detectors: vec![0, 1, 2],
                observables: 0,
                sources: vec![FaultSource {
                    instruction: 7,
                    component: 3,
                }],
            }],
            undetectable: 0,
            undetectable_logical: 0,
        };
        let e = MatchingGraph::from_dem(&dem).unwrap_err();
        assert!(matches!(e, DemError::Undecomposable { .. }), "{e}");
        assert!(e.to_string().contains("instruction 7"));
    }

    #[test]
    fn detector_cut_off_from_boundary_is_an_error() {
        let dem = DetectorErrorModel {
            num_detectors: 3,
            num_observables: 0,
            detector_coords: vec![(0.0, 0.0, 0.0); 3],
            mechanisms: vec![
                ErrorMechanism {
                    probability: 0.01,
                    detectors: vec![0],
                    observables: 0,
                    sources: vec![],
                },
                ErrorMechanism {
                    probability: 0.01,
                    detectors: vec![1, 2],
                    observables: 0,
                    sources: vec![],
                },
            ],
            undetectable: 0,
            undetectable_logical: 0,
        };
        assert!(matches!(
            MatchingGraph::from_dem(&dem),
            Err(DemError::Disconnected(1))
        ));
    }

    #[test]
    fn builder_circuits_extract_connected_graphs() {
        use crate::codes::{CodeFamily, CodeSpec, MemoryBasis};
        use crate::noise::{annotate, make_scl};
        for family in [CodeFamily::SurfaceSquare, CodeFamily::HoneycombHex] {
            let spec = CodeSpec::new(family, 3, 2, MemoryBasis::Z).unwrap();
            let c = crate::codes::build(&spec).unwrap();
            let noisy = annotate(&c, &make_scl(1e-3).unwrap()).unwrap();
            let dem = extract_dem(&noisy).unwrap();
            assert_eq!(dem.undetectable_logical, 0, "{family}");
            let g = MatchingGraph::from_dem(&dem).unwrap();
            assert!(!g.edges.is_empty(), "{family}");
            // Spot-check a handful of signatures against the sampler.
            for m in dem.mechanisms.iter().step_by(dem.mechanisms.len() / 7 + 1) {
                let injected = inject_fault(&noisy, &m.sources[0]).unwrap();
                let batch = sample(&injected, 1, 0).unwrap();
                let fired: Vec<u32> = (0..dem.num_detectors)
                    .filter(|&k| batch.detector(0, k))
                    .map(|k| k as u32)
                    .collect();
                assert_eq!(fired, m.detectors, "{family} source {:?}", m.sources[0]);
            }
        }
    }

    #[test]
    fn bad_injection_sources_are_rejected(){
        let c = repetition(1, 1e-3, 0.0);
        let noise_at = c
            .instructions
            .iter()
            .position(|i| i.is_noise())
            .unwrap();
        assert!(inject_fault(&c, &FaultSource { instruction: 999, component: 0 }).is_err());
        assert!(inject_fault(&c, &FaultSource { instruction: 0, component: 0 }).is_err());
        assert!(inject_fault(&c, &FaultSource { instruction: noise_at, component: 99 }).is_err());
    }
}
