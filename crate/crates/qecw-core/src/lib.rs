//! Stabilizer-circuit workbench for comparing quantum-error-correction
//! strategies on hardware-friendly qubit layouts.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`circuit`] — a small stabilizer-circuit IR (CNOT + Pauli-basis
//!    measurement/reset + probabilistic Pauli channels) with a line-based
//!    text format, detectors and logical observables.
//! 2. [`codes`] — memory-experiment builders for repetition, surface and
//!    honeycomb codes on square, hexagonal and heavy-hexagonal connectivity.
//! 3. [`noise`] — circuit-level noise models (uniform, scaled-uniform and
//!    calibration-derived) that annotate a clean circuit with channels.
//! 4. [`framesim`] — a bit-packed Pauli-frame Monte-Carlo sampler producing
//!    detection-event batches, plus a reference tableau simulation.
//! 5. [`dem`] — detector-error-model extraction: every noise mechanism is
//!    mapped to the set of detectors/observables it flips, and the result is
//!    flattened into a matching graph.
//! 6. [`decode`] — exact minimum-weight perfect-matching decoding on the
//!    derived complete graph, with an exhaustive oracle for cross-checks.
//! 7. [`analysis`] — threshold crossings, log-log scaling fits, lambda
//!    factors and qubit-footprint projections.

pub mod circuit;
pub mod codes;
pub mod dem;
pub mod framesim;
pub mod noise;
pub mod pauli;
pub mod tableau;

pub use circuit::{Circuit, CircuitError, Instruction, MeasureBasis, ObservableLabel};
pub use codes::{CodeFamily, CodeSpec, CodesError, Layout, MemoryBasis, QubitRole};
pub use dem::{
    emit_dem, extract_dem, matching_graph, parse_dem, DemError, DetectorErrorModel,
    ErrorMechanism, MatchingGraph,
};
pub use framesim::{reference_sample, sample, FramesimError, SampleBatch};
pub use noise::{annotate, make_pbcl, make_scl, make_vcl, Calibration, NoiseParams};
pub use pauli::{commutes, frame_apply_gate, pauli_mul, FrameGate, PauliKind, PauliString};
