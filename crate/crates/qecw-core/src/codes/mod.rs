//! Memory-experiment circuit generators for the code families under study.
//!
//! Every builder produces a noiseless syndrome-extraction circuit in the
//! shared IR: qubit coordinates, state preparation in the memory basis,
//! `rounds` rounds of check measurements with `DETECTOR` annotations, a
//! transversal data readout with closure detectors, and one `OBSERVABLE`
//! line giving the logical readout. Noise is attached afterwards by
//! [`crate::noise::annotate`].
//!
//! Families:
//!
//! * `repetition` — the distance-d bit/phase-flip code, mainly a test
//!   vehicle for the rest of the pipeline;
//! * `surface-square` — surface code on square-lattice connectivity
//!   (d² data qubits, d²−1 ancillas, weight-2 boundary checks, six time
//!   steps per round);
//! * `surface-hex` — ancilla-free surface code on degree-3 hexagonal
//!   connectivity: stabilizers are folded onto a data qubit by CNOT
//!   chains, measured projectively, and unfolded (five steps per
//!   sub-round, two sub-rounds per round);
//! * `surface-heavyhex-swap` / `surface-heavyhex-flag` — the hex folding
//!   circuit re-targeted at heavy-hex connectivity, where every coupling
//!   runs through a bridge qubit on the edge; the two variants differ in
//!   how the bridge returns to |0⟩ (three-CNOT relay vs a measured
//!   two-CNOT flag), giving seven and six steady-state steps per
//!   sub-round respectively;
//! * `heavy-hexagon` — the hybrid Bacon–Shor/surface subsystem code native
//!   to heavy-hex devices: horizontal ZZ gauge checks plus flag-protected
//!   weight-4 X gauge checks, eleven steps per round;
//! * `honeycomb-hex` / `honeycomb-heavyhex` — Floquet code on a torus with
//!   two-qubit checks measured in a three-colour cycle, realised either
//!   ancilla-free on the hexagonal lattice or with ancilla gadgets on
//!   heavy-hex.
//!
//! The per-family modules share [`Assembler`], which tracks absolute
//! measurement-record indices per qubit so detectors can be phrased as
//! "this ancilla's last two outcomes" instead of fragile manual counting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Instruction, MeasureBasis, ObservableLabel, Qubit};
use crate::pauli::{commutes, PauliString};

mod heavy_hexagon;
mod honeycomb;
mod repetition;
mod surface_heavyhex;
mod surface_hex;
mod surface_square;

/// Errors from code-spec validation.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodesError {
    #[error("unknown code family '{0}'")]
    UnknownFamily(String),
    #[error("distance must be odd, got {0}")]
    EvenDistance(usize),
    #[error("distance must be at least 3, got {0}")]
    DistanceTooSmall(usize),
    #[error("rounds must be at least 1")]
    ZeroRounds,
    #[error("no torus layout for distance {0}; supported distances are 3, 5, 7, 9, 11, 13")]
    UnsupportedDistance(usize),
}

/// The code families the workbench can generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeFamily {
    Repetition,
    SurfaceSquare,
    SurfaceHex,
    SurfaceHeavyhexSwap,
    SurfaceHeavyhexFlag,
    HeavyHexagon,
    HoneycombHex,
    HoneycombHeavyhex,
}

impl CodeFamily {
    pub const ALL: [CodeFamily; 8] = [
        CodeFamily::Repetition,
        CodeFamily::SurfaceSquare,
        CodeFamily::SurfaceHex,
        CodeFamily::SurfaceHeavyhexSwap,
        CodeFamily::SurfaceHeavyhexFlag,
        CodeFamily::HeavyHexagon,
        CodeFamily::HoneycombHex,
        CodeFamily::HoneycombHeavyhex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CodeFamily::Repetition => "repetition",
            CodeFamily::SurfaceSquare => "surface-square",
            CodeFamily::SurfaceHex => "surface-hex",
            CodeFamily::SurfaceHeavyhexSwap => "surface-heavyhex-swap",
            CodeFamily::SurfaceHeavyhexFlag => "surface-heavyhex-flag",
            CodeFamily::HeavyHexagon => "heavy-hexagon",
            CodeFamily::HoneycombHex => "honeycomb-hex",
            CodeFamily::HoneycombHeavyhex => "honeycomb-heavyhex",
        }
    }
}

impl fmt::Display for CodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodeFamily {
    type Err = CodesError;
    fn from_str(s: &str) -> Result<Self, CodesError> {
        CodeFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| CodesError::UnknownFamily(s.to_string()))
    }
}

/// Which logical eigenbasis the memory experiment prepares and reads out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryBasis {
    X,
    Z,
}

impl MemoryBasis {
    /// The physical measurement/reset basis for transversal prep/readout.
    pub fn axis(self) -> MeasureBasis {
        match self {
            MemoryBasis::X => MeasureBasis::X,
            MemoryBasis::Z => MeasureBasis::Z,
        }
    }

    pub fn observable_label(self) -> ObservableLabel {
        match self {
            MemoryBasis::X => ObservableLabel::XL,
            MemoryBasis::Z => ObservableLabel::ZL,
        }
    }
}

impl fmt::Display for MemoryBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemoryBasis::X => "X",
            MemoryBasis::Z => "Z",
        })
    }
}

impl FromStr for MemoryBasis {
    type Err = CodesError;
    fn from_str(s: &str) -> Result<Self, CodesError> {
        match s {
            "X" | "x" => Ok(MemoryBasis::X),
            "Z" | "z" => Ok(MemoryBasis::Z),
            other => Err(CodesError::UnknownFamily(format!("memory basis {other}"))),
        }
    }
}

/// A complete description of one memory experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeSpec {
    pub family: CodeFamily,
    /// Code distance; odd and at least 3.
    pub distance: usize,
    /// Number of syndrome-measurement rounds before data readout.
    pub rounds: usize,
    pub memory_basis: MemoryBasis,
}

impl CodeSpec {
    pub fn new(
        family: CodeFamily,
        distance: usize,
        rounds: usize,
        memory_basis: MemoryBasis,
    ) -> Result<Self, CodesError> {
        let spec = CodeSpec {
            family,
            distance,
            rounds,
            memory_basis,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), CodesError> {
        if self.distance < 3 {
            return Err(CodesError::DistanceTooSmall(self.distance));
        }
        if self.distance % 2 == 0 {
            return Err(CodesError::EvenDistance(self.distance));
        }
        if self.rounds == 0 {
            return Err(CodesError::ZeroRounds);
        }
        Ok(())
    }
}

/// What a physical qubit does in a generated circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitRole {
    /// Carries the encoded state.
    Data,
    /// Measured every round to extract a check outcome.
    Syndrome,
    /// Bridge/flag qubit mediating couplings on heavy-hex edges.
    Flag,
    /// Present on the device layout but idle in this circuit.
    Unused,
}

impl fmt::Display for QubitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QubitRole::Data => "data",
            QubitRole::Syndrome => "syndrome",
            QubitRole::Flag => "flag",
            QubitRole::Unused => "unused",
        })
    }
}

/// Planar layout summary of a generated circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Role of each qubit, indexed by qubit id.
    pub roles: Vec<QubitRole>,
    /// Planar coordinates, indexed by qubit id.
    pub coords: Vec<(f64, f64)>,
    /// Number of distinct CNOT partners each qubit has anywhere in the
    /// circuit — the connectivity degree the architecture must supply.
    pub degree: Vec<usize>,
}

impl Layout {
    pub fn num_qubits(&self) -> usize {
        self.roles.len()
    }

    pub fn count_role(&self, role: QubitRole) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }
}

/// Everything a family builder produces.
pub(crate) struct Built {
    pub circuit: Circuit,
    pub roles: Vec<QubitRole>,
    pub x_logical: PauliString,
    pub z_logical: PauliString,
    /// Stabilizer generators per phase of the measurement schedule; static
    /// codes have one phase, the three-colour Floquet codes have three.
    /// Strings have circuit width with support on data qubits.
    pub stabilizer_period: Vec<Vec<PauliString>>,
}

fn built(spec: &CodeSpec) -> Result<Built, CodesError> {
    spec.check()?;
    let b = match spec.family {
        CodeFamily::Repetition => repetition::build(spec),
        CodeFamily::SurfaceSquare => surface_square::build(spec),
        CodeFamily::SurfaceHex => surface_hex::build(spec),
        CodeFamily::SurfaceHeavyhexSwap | CodeFamily::SurfaceHeavyhexFlag => {
            surface_heavyhex::build(spec)
        }
        CodeFamily::HeavyHexagon => heavy_hexagon::build(spec),
        CodeFamily::HoneycombHex | CodeFamily::HoneycombHeavyhex => honeycomb::build(spec)?,
    };
    debug_assert_built(&b);
    Ok(b)
}

/// Internal consistency of a builder's output: logicals anticommute with
/// each other, stabilizers of one phase commute pairwise, and both logicals
/// commute with the round-0 phase (the first listed). For static codes
/// every phase is the same set; for the three-colour Floquet codes the
/// advertised pair is the representative valid while colour-0 checks are in
/// force (representatives of later phases differ by recorded check
/// products, which the builders absorb into the observable).
fn debug_assert_built(b: &Built) {
    if cfg!(debug_assertions) {
        assert!(!commutes(&b.x_logical, &b.z_logical).unwrap());
        for phase in &b.stabilizer_period {
            for (i, s) in phase.iter().enumerate() {
                for (j, t) in phase[..i].iter().enumerate() {
                    assert!(commutes(s, t).unwrap(), "stabilizers {j} vs {i}");
                }
            }
        }
        let first = b.stabilizer_period.first().expect("at least one phase");
        for (i, s) in first.iter().enumerate() {
            assert!(
                commutes(s, &b.x_logical).unwrap(),
                "stabilizer {i} vs X logical"
            );
            assert!(
                commutes(s, &b.z_logical).unwrap(),
                "stabilizer {i} vs Z logical"
            );
        }
    }
}

/// Generates the noiseless memory circuit for `spec`.
pub fn build(spec: &CodeSpec) -> Result<Circuit, CodesError> {
    Ok(built(spec)?.circuit)
}

/// The logical operator pair `(X_L, Z_L)` as Pauli strings over the
/// circuit's qubits (support on data qubits only).
pub fn logical_supports(spec: &CodeSpec) -> Result<(PauliString, PauliString), CodesError> {
    let b = built(spec)?;
    Ok((b.x_logical, b.z_logical))
}

/// Stabilizer generators in force during measurement round `round`.
///
/// Static codes return the same set for every round; the Floquet families
/// cycle through three phases (the plaquette stabilizers plus the
/// just-measured check colour). The pair from [`logical_supports`] is
/// guaranteed to commute with the round-0 generators; during later phases
/// the live representatives differ by check products whose records the
/// builders fold into the observable.
pub fn stabilizer_group_generators(
    spec: &CodeSpec,
    round: usize,
) -> Result<Vec<PauliString>, CodesError> {
    let b = built(spec)?;
    let k = round % b.stabilizer_period.len();
    Ok(b.stabilizer_period[k].clone())
}

/// Role/coordinate/degree summary of the generated circuit.
pub fn layout(spec: &CodeSpec) -> Result<Layout, CodesError> {
    let b = built(spec)?;
    let n = b.circuit.num_qubits();
    let mut coords = vec![(0.0, 0.0); n];
    for (&q, &(x, y)) in &b.circuit.qubit_coords {
        coords[q as usize] = (x, y);
    }
    let mut partners: Vec<std::collections::BTreeSet<Qubit>> = vec![Default::default(); n];
    for inst in &b.circuit.instructions {
        if let Instruction::Cnot(targets) = inst {
            for pair in targets.chunks(2) {
                partners[pair[0] as usize].insert(pair[1]);
                partners[pair[1] as usize].insert(pair[0]);
            }
        }
    }
    Ok(Layout {
        roles: b.roles,
        coords,
        degree: partners.into_iter().map(|s| s.len()).collect(),
    })
}

// ========================= Shared assembly kit =========================

/// Incremental circuit writer that tracks measurement-record history.
///
/// Builders place gates and then phrase detectors in terms of absolute
/// record indices obtained from [`Assembler::last`]; the assembler converts
/// them to the IR's backwards `rec[-k]` form at insertion time and cancels
/// duplicated references (record parities are XORs, so a record listed
/// twice must drop out).
pub(crate) struct Assembler {
    instructions: Vec<Instruction>,
    coords: BTreeMap<Qubit, (f64, f64)>,
    records: usize,
    history: BTreeMap<Qubit, Vec<usize>>,
}

impl Assembler {
    pub fn new() -> Self {
        Assembler {
            instructions: Vec::new(),
            coords: BTreeMap::new(),
            records: 0,
            history: BTreeMap::new(),
        }
    }

    pub fn coord(&mut self, q: Qubit, x: f64, y: f64) {
        self.coords.insert(q, (x, y));
    }

    pub fn tick(&mut self) {
        self.instructions.push(Instruction::Tick);
    }

    pub fn reset(&mut self, basis: MeasureBasis, qs: &[Qubit]) {
        if !qs.is_empty() {
            self.instructions.push(Instruction::Reset(basis, qs.to_vec()));
        }
    }

    pub fn measure(&mut self, basis: MeasureBasis, qs: &[Qubit]) {
        if qs.is_empty() {
            return;
        }
        for &q in qs {
            self.history.entry(q).or_default().push(self.records);
            self.records += 1;
        }
        self.instructions.push(Instruction::Measure(basis, qs.to_vec()));
    }

    pub fn cnot_pairs(&mut self, pairs: &[(Qubit, Qubit)]) {
        if pairs.is_empty() {
            return;
        }
        let flat: Vec<Qubit> = pairs.iter().flat_map(|&(c, t)| [c, t]).collect();
        self.instructions.push(Instruction::Cnot(flat));
    }

    /// Absolute index of `q`'s most recent measurement record.
    pub fn last(&self, q: Qubit) -> usize {
        *self.history[&q].last().expect("qubit has no record")
    }

    /// Absolute index of `q`'s n-th most recent record (`n = 0` is the last).
    pub fn nth_last(&self, q: Qubit, n: usize) -> usize {
        let h = &self.history[&q];
        h[h.len() - 1 - n]
    }

    /// Emits a detector over the given absolute record indices.
    pub fn detector(&mut self, coord: (f64, f64, f64), abs: &[usize]) {
        let rel = self.rel_records(abs);
        assert!(!rel.is_empty(), "detector with empty record parity");
        self.instructions.push(Instruction::Detector {
            coord,
            rel_records: rel,
        });
    }

    /// Emits the logical-readout observable.
    pub fn observable(&mut self, label: ObservableLabel, abs: &[usize]) {
        let rel = self.rel_records(abs);
        assert!(!rel.is_empty(), "observable with empty record parity");
        self.instructions
            .push(Instruction::Observable { label, rel_records: rel });
    }

    /// Converts absolute indices to backwards offsets, cancelling pairs.
    fn rel_records(&self, abs: &[usize]) -> Vec<usize> {
        let mut parity: BTreeMap<usize, bool> = BTreeMap::new();
        for &a in abs {
            assert!(a < self.records, "record {a} not yet measured");
            *parity.entry(a).or_insert(false) ^= true;
        }
        parity
            .into_iter()
            .filter_map(|(a, odd)| odd.then_some(self.records - a))
            .collect()
    }

    pub fn finish(self) -> Circuit {
        Circuit {
            instructions: self.instructions,
            qubit_coords: self.coords,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::validate;
    use crate::framesim::sample;

    #[test]
    fn family_names_round_trip() {
        for fam in CodeFamily::ALL {
            assert_eq!(fam.name().parse::<CodeFamily>().unwrap(), fam);
            // serde uses the same kebab-case names as Display/FromStr.
            let json = serde_json::to_string(&fam).unwrap();
            assert_eq!(json, format!("\"{}\"", fam.name()));
            assert_eq!(serde_json::from_str::<CodeFamily>(&json).unwrap(), fam);
        }
        assert!("surface".parse::<CodeFamily>().is_err());
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        let f = CodeFamily::Repetition;
        assert_eq!(
            CodeSpec::new(f, 4, 1, MemoryBasis::Z).unwrap_err(),
            CodesError::EvenDistance(4)
        );
        assert_eq!(
            CodeSpec::new(f, 1, 1, MemoryBasis::Z).unwrap_err(),
            CodesError::DistanceTooSmall(1)
        );
        assert_eq!(
            CodeSpec::new(f, 3, 0, MemoryBasis::Z).unwrap_err(),
            CodesError::ZeroRounds
        );
        assert!(CodeSpec::new(f, 3, 1, MemoryBasis::Z).is_ok());
    }

    #[test]
    fn assembler_cancels_duplicate_record_references() {
        let mut a = Assembler::new();
        a.reset(MeasureBasis::Z, &[0, 1]);
        a.measure(MeasureBasis::Z, &[0, 1]);
        let r0 = a.last(0);
        let r1 = a.last(1);
        // r0 appears twice and must cancel out of the parity.
        a.detector((0.0, 0.0, 0.0), &[r0, r1, r0]);
        let c = a.finish();
        match &c.instructions[2] {
            Instruction::Detector { rel_records, .. } => assert_eq!(rel_records, &vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Every family at its smallest size: structurally valid, deterministic
    /// detectors/observables, noiseless sampling produces no events, layout
    /// roles/coords/degree consistent with the circuit, and the advertised
    /// stabilizers/logicals satisfy the group algebra.
    #[test]
    fn all_families_build_valid_small_instances() {
        for fam in CodeFamily::ALL {
            for basis in [MemoryBasis::Z, MemoryBasis::X] {
                let spec = CodeSpec::new(fam, 3, 2, basis).unwrap();
                let circuit = build(&spec).unwrap();
                assert_eq!(validate(&circuit), vec![], "{fam} {basis}");
                assert_eq!(circuit.num_observables(), 1, "{fam} {basis}");
                assert!(circuit.num_detectors() > 0, "{fam} {basis}");

                // Noiseless shots: every detector and the observable silent.
                let batch = sample(&circuit, 64, 7).unwrap();
                assert!(
                    batch.detector_counts().iter().all(|&c| c == 0),
                    "{fam} {basis}"
                );
                assert!(
                    batch.observable_counts().iter().all(|&c| c == 0),
                    "{fam} {basis}"
                );

                let lay = layout(&spec).unwrap();
                assert_eq!(lay.num_qubits(), circuit.num_qubits(), "{fam} {basis}");
                assert!(lay.count_role(QubitRole::Data) > 0, "{fam} {basis}");

                // Logical algebra against the advertised stabilizers, with
                // support restricted to data qubits. The advertised logical
                // pair is guaranteed valid against the round-0 phase of the
                // measurement cycle; the Floquet codes' representatives for
                // later phases differ by absorbed check records.
                let (xl, zl) = logical_supports(&spec).unwrap();
                assert!(!commutes(&xl, &zl).unwrap(), "{fam} {basis}");
                for s in stabilizer_group_generators(&spec, 0).unwrap() {
                    assert!(commutes(&s, &xl).unwrap(), "{fam} {basis}");
                    assert!(commutes(&s, &zl).unwrap(), "{fam} {basis}");
                }
                for round in 0..3 {
                    for s in stabilizer_group_generators(&spec, round).unwrap() {
                        for q in s.support() {
                            assert_eq!(
                                lay.roles[q],
                                QubitRole::Data,
                                "{fam} {basis}: stabilizer support off data"
                            );
                        }
                    }
                }
                for q in xl.support().into_iter().chain(zl.support()) {
                    assert_eq!(lay.roles[q], QubitRole::Data, "{fam} {basis}");
                }
            }
        }
    }
}
