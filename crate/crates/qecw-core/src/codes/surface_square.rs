//! Rotated surface code on square-lattice connectivity.
//!
//! Data qubits sit on the odd-odd grid `(2c+1, 2r+1)`, check ancillas on
//! the even-even grid. The interior alternates X and Z plaquettes in a
//! checkerboard; the boundary keeps every second weight-2 half-check, X
//! halves on the left/right edges and Z halves on the top/bottom. Logical
//! Z runs down the leftmost data column, logical X across the bottom data
//! row (y = 1); the harmful error chains are therefore horizontal X chains
//! and vertical Z chains.
//!
//! A round is six steps: ancilla reset, four CNOT layers, ancilla readout.
//! The CNOT order makes ancilla "hook" faults benign: an X ancilla touches
//! NE, SE, NW, SW (the trailing pair shares a column, so a mid-schedule
//! ancilla fault spreads a *vertical* X pair, which never advances a
//! horizontal X chain), and Z ancillas touch NE, NW, SE, SW (horizontal Z
//! hooks, harmless to vertical Z chains). The interleaved schedule is
//! conflict-free: two ancillas reaching for the same data qubit in one
//! layer would need opposite plaquette parities, which the offset tables
//! make impossible.

use crate::circuit::{MeasureBasis, Qubit};
use crate::pauli::{PauliKind, PauliString};

use super::{Assembler, Built, CodeSpec, MemoryBasis, QubitRole};

/// Diagonal data offsets per CNOT layer, chosen for benign hooks.
const X_OFFSETS: [(i64, i64); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
const Z_OFFSETS: [(i64, i64); 4] = [(1, 1), (-1, 1), (1, -1), (-1, -1)];

/// Whether ancilla grid site `(a, b)` hosts a check, and of which type.
fn site_kind(a: usize, b: usize, d: usize) -> Option<bool /* is X */> {
    let edge_x = a == 0 || a == d;
    let edge_y = b == 0 || b == d;
    if edge_x && edge_y {
        return None;
    }
    let is_x = (a + b) % 2 == 0;
    if edge_x {
        return is_x.then_some(true);
    }
    if edge_y {
        return (!is_x).then_some(false);
    }
    Some(is_x)
}

struct Check {
    qubit: Qubit,
    site: (usize, usize),
    is_x: bool,
    /// Data qubit touched in each CNOT layer, if any.
    layer_data: [Option<Qubit>; 4],
}

pub(super) fn build(spec: &CodeSpec) -> Built {
    let d = spec.distance;
    let data_id = |c: usize, r: usize| (r * d + c) as Qubit;
    let data_at = |x: i64, y: i64| -> Option<Qubit> {
        if x < 1 || y < 1 || x % 2 == 0 || y % 2 == 0 {
            return None;
        }
        let (c, r) = ((x as usize - 1) / 2, (y as usize - 1) / 2);
        (c < d && r < d).then(|| data_id(c, r))
    };

    let mut a = Assembler::new();
    for r in 0..d {
        for c in 0..d {
            a.coord(data_id(c, r), (2 * c + 1) as f64, (2 * r + 1) as f64);
        }
    }

    let mut checks = Vec::new();
    for b in 0..=d {
        for aa in 0..=d {
            let Some(is_x) = site_kind(aa, b, d) else {
                continue;
            };
            let qubit = (d * d + checks.len()) as Qubit;
            a.coord(qubit, (2 * aa) as f64, (2 * b) as f64);
            let offsets = if is_x { X_OFFSETS } else { Z_OFFSETS };
            let layer_data = offsets
                .map(|(dx, dy)| data_at(2 * aa as i64 + dx, 2 * b as i64 + dy));
            checks.push(Check {
                qubit,
                site: (aa, b),
                is_x,
                layer_data,
            });
        }
    }

    let datas: Vec<Qubit> = (0..(d * d) as Qubit).collect();
    let xancs: Vec<Qubit> = checks.iter().filter(|c| c.is_x).map(|c| c.qubit).collect();
    let zancs: Vec<Qubit> = checks.iter().filter(|c| !c.is_x).map(|c| c.qubit).collect();
    let memory_is_x = spec.memory_basis == MemoryBasis::X;

    for round in 0..spec.rounds {
        if round == 0 {
            a.reset(spec.memory_basis.axis(), &datas);
        } else {
            a.tick();
        }
        a.reset(MeasureBasis::X, &xancs);
        a.reset(MeasureBasis::Z, &zancs);
        for layer in 0..4 {
            a.tick();
            let pairs: Vec<(Qubit, Qubit)> = checks
                .iter()
                .filter_map(|ch| {
                    let data = ch.layer_data[layer]?;
                    // X checks fan out of a |+> ancilla, Z checks collect
                    // into a |0> ancilla.
                    Some(if ch.is_x {
                        (ch.qubit, data)
                    } else {
                        (data, ch.qubit)
                    })
                })
                .collect();
            a.cnot_pairs(&pairs);
        }
        a.tick();
        a.measure(MeasureBasis::X, &xancs);
        a.measure(MeasureBasis::Z, &zancs);
        for ch in &checks {
            // Memory-basis checks are deterministic from the first round;
            // the opposite type starts out random and is compared pairwise.
            let refs = if round == 0 && ch.is_x == memory_is_x {
                vec![a.last(ch.qubit)]
            } else if round > 0 {
                vec![a.nth_last(ch.qubit, 1), a.last(ch.qubit)]
            } else {
                continue;
            };
            a.detector(
                ((2 * ch.site.0) as f64, (2 * ch.site.1) as f64, round as f64),
                &refs,
            );
        }
    }

    a.tick();
    a.measure(spec.memory_basis.axis(), &datas);
    for ch in &checks {
        if ch.is_x != memory_is_x {
            continue;
        }
        let mut refs: Vec<usize> = ch
            .layer_data
            .iter()
            .flatten()
            .map(|&q| a.last(q))
            .collect();
        refs.push(a.last(ch.qubit));
        a.detector(
            (
                (2 * ch.site.0) as f64,
                (2 * ch.site.1) as f64,
                spec.rounds as f64,
            ),
            &refs,
        );
    }
    let logical_datas: Vec<Qubit> = if memory_is_x {
        (0..d).map(|c| data_id(c, 0)).collect()
    } else {
        (0..d).map(|r| data_id(0, r)).collect()
    };
    a.observable(
        spec.memory_basis.observable_label(),
        &logical_datas.iter().map(|&q| a.last(q)).collect::<Vec<_>>(),
    );

    let n = d * d + checks.len();
    let mut roles = vec![QubitRole::Data; d * d];
    roles.extend(std::iter::repeat_n(QubitRole::Syndrome, checks.len()));

    let stabilizers: Vec<PauliString> = checks
        .iter()
        .map(|ch| {
            let kind = if ch.is_x { PauliKind::X } else { PauliKind::Z };
            let factors: Vec<(usize, PauliKind)> = ch
                .layer_data
                .iter()
                .flatten()
                .map(|&q| (q as usize, kind))
                .collect();
            PauliString::from_sparse(n, &factors).unwrap()
        })
        .collect();
    let z_logical = PauliString::from_sparse(
        n,
        &(0..d)
            .map(|r| (data_id(0, r) as usize, PauliKind::Z))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let x_logical = PauliString::from_sparse(
        n,
        &(0..d)
            .map(|c| (data_id(c, 0) as usize, PauliKind::X))
            .collect::<Vec<_>>(),
    )
    .unwrap();

    Built {
        circuit: a.finish(),
        roles,
        x_logical,
        z_logical,
        stabilizer_period: vec![stabilizers],
    }
}
