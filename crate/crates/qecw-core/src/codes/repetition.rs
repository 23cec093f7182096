//! Distance-d repetition code memory on a line.
//!
//! Data qubits sit at even x, one parity ancilla between each neighbouring
//! pair. A Z-basis memory measures ZZ checks (ancilla as CNOT target), an
//! X-basis memory measures XX checks (ancilla as CNOT control from |+>).
//! Each round is four steps: ancilla reset, two CNOT layers, ancilla
//! readout; the experiment ends with a transversal data readout, closure
//! detectors, and the single-site logical readout.

use crate::circuit::Qubit;
use crate::pauli::{PauliKind, PauliString};

use super::{Assembler, Built, CodeSpec, MemoryBasis, QubitRole};

pub(super) fn build(spec: &CodeSpec) -> Built {
    let d = spec.distance;
    let n = 2 * d - 1;
    let data = |i: usize| i as Qubit;
    let anc = |i: usize| (d + i) as Qubit;
    let datas: Vec<Qubit> = (0..d).map(data).collect();
    let ancs: Vec<Qubit> = (0..d - 1).map(anc).collect();
    let axis = spec.memory_basis.axis();

    let mut a = Assembler::new();
    for i in 0..d {
        a.coord(data(i), (2 * i) as f64, 0.0);
    }
    for i in 0..d - 1 {
        a.coord(anc(i), (2 * i + 1) as f64, 0.0);
    }

    // Prep everything in the memory basis; checks start out deterministic.
    let all: Vec<Qubit> = (0..n as Qubit).collect();
    a.reset(axis, &all);

    for r in 0..spec.rounds {
        if r > 0 {
            a.tick();
            a.reset(axis, &ancs);
        }
        // ZZ parity flows data -> ancilla; XX parity flows |+> ancilla -> data.
        let pair = |i: usize, j: usize| match spec.memory_basis {
            MemoryBasis::Z => (data(j), anc(i)),
            MemoryBasis::X => (anc(i), data(j)),
        };
        a.tick();
        a.cnot_pairs(&(0..d - 1).map(|i| pair(i, i)).collect::<Vec<_>>());
        a.tick();
        a.cnot_pairs(&(0..d - 1).map(|i| pair(i, i + 1)).collect::<Vec<_>>());
        a.tick();
        a.measure(axis, &ancs);
        for i in 0..d - 1 {
            let here = a.last(anc(i));
            let refs = if r == 0 {
                vec![here]
            } else {
                vec![a.nth_last(anc(i), 1), here]
            };
            a.detector(((2 * i + 1) as f64, 0.0, r as f64), &refs);
        }
    }

    a.tick();
    a.measure(axis, &datas);
    for i in 0..d - 1 {
        a.detector(
            ((2 * i + 1) as f64, 0.0, spec.rounds as f64),
            &[a.last(data(i)), a.last(data(i + 1)), a.last(anc(i))],
        );
    }
    a.observable(spec.memory_basis.observable_label(), &[a.last(data(0))]);

    let mut roles = vec![QubitRole::Data; d];
    roles.extend(std::iter::repeat_n(QubitRole::Syndrome, d - 1));

    let (check, single, full) = match spec.memory_basis {
        MemoryBasis::Z => (PauliKind::Z, PauliKind::Z, PauliKind::X),
        MemoryBasis::X => (PauliKind::X, PauliKind::X, PauliKind::Z),
    };
    let stabilizers: Vec<PauliString> = (0..d - 1)
        .map(|i| PauliString::from_sparse(n, &[(i, check), (i + 1, check)]).unwrap())
        .collect();
    // The memory-basis logical is any single site; the conjugate logical is
    // the full opposite-basis string.
    let single_logical = PauliString::from_sparse(n, &[(0, single)]).unwrap();
    let full_logical =
        PauliString::from_sparse(n, &(0..d).map(|i| (i, full)).collect::<Vec<_>>()).unwrap();
    let (x_logical, z_logical) = match spec.memory_basis {
        MemoryBasis::Z => (full_logical, single_logical),
        MemoryBasis::X => (single_logical, full_logical),
    };

    Built {
        circuit: a.finish(),
        roles,
        x_logical,
        z_logical,
        stabilizer_period: vec![stabilizers],
    }
}
