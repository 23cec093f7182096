//! Ancilla-free surface code on degree-3 hexagonal connectivity.
//!
//! There are no syndrome ancillas: a stabilizer is folded onto one of its
//! own data qubits by a CNOT chain, that qubit is measured projectively,
//! and the chain is undone. Data qubits occupy the even-parity sites of a
//! (2d-1)x(2d-1) diagonal grid plus one extra column (right) and row (top)
//! of odd sites that receive the folds, 2d^2-1 qubits total. Check sites
//! are the odd-parity grid sites: Z checks at (even, odd), X checks at
//! (odd, even), plus a fringe of weight-3 (and two weight-2) checks along
//! the extra column/row, 2d^2-2 generators in all.
//!
//! A Z check at (i,j) reads Z·Z·Z·Z on its west/south/east/north
//! neighbours (A/B/C/D) by folding into the east qubit C; the X check at
//! (i+1,j+1) shares C and D and folds into its north qubit E. The shared
//! five-step schedule per check pair is
//!
//! ```text
//! t1: A->B   D->C   E->F
//! t2: B->C   E->D
//! t3: measure C (Z basis), E (X basis)
//! t4 = t2,  t5 = t1      (unfold)
//! ```
//!
//! with gates on absent qubits skipped. Checks are grouped by their
//! diagonal c = x - y: pairs with c = 1 (mod 4) run in one five-step
//! sub-round, c = 3 (mod 4) in a second; consecutive pairs on one diagonal
//! share their boundary gate (E->F of one is A->B of the next), and the
//! two sub-rounds cannot overlap because every data qubit serves both of
//! its adjacent diagonals.
//!
//! Logical Z is the top data row (y = 2d-2), logical X the right data
//! column (x = 2d-2).

use std::collections::{BTreeMap, BTreeSet};

use crate::circuit::{MeasureBasis, Qubit};
use crate::pauli::{PauliKind, PauliString};

use super::{Assembler, Built, CodeSpec, MemoryBasis, QubitRole};

pub(super) struct Check {
    pub(super) site: (i64, i64),
    pub(super) is_x: bool,
    /// Which of the two five-step sub-rounds this check runs in.
    pub(super) sub: usize,
    /// Fold target, measured in the check basis at t3.
    pub(super) measured: Qubit,
    pub(super) support: Vec<Qubit>,
    pub(super) t1: Vec<(Qubit, Qubit)>,
    pub(super) t2: Vec<(Qubit, Qubit)>,
}

/// The hexagonal-connectivity patch geometry: data sites, checks with their
/// fold gates, and the two logical representatives. The heavy-hex variants
/// reuse it, replacing each gate by an edge-qubit gadget.
pub(super) struct Patch {
    pub(super) data_ids: BTreeMap<(i64, i64), Qubit>,
    pub(super) checks: Vec<Check>,
    /// Top data row (logical Z) and right data column (logical X).
    pub(super) z_row: Vec<Qubit>,
    pub(super) x_col: Vec<Qubit>,
}

pub(super) fn patch(distance: usize) -> Patch {
    let d = distance as i64;
    let m = 2 * d - 2;
    let is_data = |x: i64, y: i64| -> bool {
        if !(0..=m + 1).contains(&x) || !(0..=m + 1).contains(&y) {
            false
        } else if x <= m && y <= m {
            (x + y) % 2 == 0
        } else if x == m + 1 && y <= m {
            y % 2 == 1
        } else if y == m + 1 && x <= m {
            x % 2 == 1
        } else {
            false
        }
    };

    let mut data_ids: BTreeMap<(i64, i64), Qubit> = BTreeMap::new();
    for y in 0..=m + 1 {
        for x in 0..=m + 1 {
            if is_data(x, y) {
                data_ids.insert((x, y), data_ids.len() as Qubit);
            }
        }
    }
    let at = |x: i64, y: i64| -> Option<Qubit> { data_ids.get(&(x, y)).copied() };

    // Z check sites: (even, odd) in the grid plus the top fringe; X sites
    // mirrored along the diagonal.
    let mut z_sites: Vec<(i64, i64)> = Vec::new();
    let mut x_sites: Vec<(i64, i64)> = Vec::new();
    for j in (1..=m - 1).step_by(2) {
        for i in (0..=m).step_by(2) {
            z_sites.push((i, j));
        }
    }
    for p in (0..=m - 2).step_by(2) {
        z_sites.push((p, m + 1));
    }
    for q in (0..=m).step_by(2) {
        for p in (1..=m - 1).step_by(2) {
            x_sites.push((p, q));
        }
    }
    for q in (0..=m - 2).step_by(2) {
        x_sites.push((m + 1, q));
    }

    let mut checks: Vec<Check> = Vec::new();
    for &(i, j) in &z_sites {
        let (qa, qb, qc, qd) = (at(i - 1, j), at(i, j - 1), at(i + 1, j), at(i, j + 1));
        let (qb, qc) = (qb.unwrap(), qc.unwrap());
        let mut t1 = Vec::new();
        if let Some(qa) = qa {
            t1.push((qa, qb));
        }
        if let Some(qd) = qd {
            t1.push((qd, qc));
        }
        checks.push(Check {
            site: (i, j),
            is_x: false,
            sub: usize::from((i - j).rem_euclid(4) == 3),
            measured: qc,
            support: [qa, Some(qb), Some(qc), qd].into_iter().flatten().collect(),
            t1,
            t2: vec![(qb, qc)],
        });
    }
    for &(p, q) in &x_sites {
        let (qc, qd, qe, qf) = (at(p, q - 1), at(p - 1, q), at(p, q + 1), at(p + 1, q));
        let (qd, qe) = (qd.unwrap(), qe.unwrap());
        let t1 = qf.map(|qf| (qe, qf)).into_iter().collect();
        checks.push(Check {
            site: (p, q),
            is_x: true,
            sub: usize::from((p - q).rem_euclid(4) == 3),
            measured: qe,
            // The shared D->C gate of the paired Z check pulls C into this
            // check's support whenever C exists.
            support: [qc, Some(qd), Some(qe), qf].into_iter().flatten().collect(),
            t1,
            t2: vec![(qe, qd)],
        });
    }

    let z_row: Vec<Qubit> = (0..=m).step_by(2).map(|x| at(x, m).unwrap()).collect();
    let x_col: Vec<Qubit> = (0..=m).step_by(2).map(|y| at(m, y).unwrap()).collect();
    Patch {
        data_ids,
        checks,
        z_row,
        x_col,
    }
}

pub(super) fn build(spec: &CodeSpec) -> Built {
    let Patch {
        data_ids,
        checks,
        z_row,
        x_col,
    } = patch(spec.distance);

    let mut a = Assembler::new();
    for (&(x, y), &q) in &data_ids {
        a.coord(q, x as f64, y as f64);
    }

    let datas: Vec<Qubit> = (0..data_ids.len() as Qubit).collect();
    let memory_is_x = spec.memory_basis == MemoryBasis::X;
    let mut records: Vec<Vec<usize>> = vec![Vec::new(); checks.len()];

    a.reset(spec.memory_basis.axis(), &datas);
    for round in 0..spec.rounds {
        for sub in 0..2 {
            let active: Vec<usize> = (0..checks.len())
                .filter(|&k| checks[k].sub == sub)
                .collect();
            // Consecutive pairs on one diagonal share a t1 gate; the set
            // collapses the duplicates.
            let t1: BTreeSet<(Qubit, Qubit)> =
                active.iter().flat_map(|&k| checks[k].t1.clone()).collect();
            let t2: BTreeSet<(Qubit, Qubit)> =
                active.iter().flat_map(|&k| checks[k].t2.clone()).collect();
            let t1: Vec<(Qubit, Qubit)> = t1.into_iter().collect();
            let t2: Vec<(Qubit, Qubit)> = t2.into_iter().collect();

            a.tick();
            a.cnot_pairs(&t1);
            a.tick();
            a.cnot_pairs(&t2);
            a.tick();
            let zq: Vec<Qubit> = active
                .iter()
                .filter(|&&k| !checks[k].is_x)
                .map(|&k| checks[k].measured)
                .collect();
            let xq: Vec<Qubit> = active
                .iter()
                .filter(|&&k| checks[k].is_x)
                .map(|&k| checks[k].measured)
                .collect();
            a.measure(MeasureBasis::Z, &zq);
            a.measure(MeasureBasis::X, &xq);
            for &k in &active {
                let rec = a.last(checks[k].measured);
                records[k].push(rec);
                let refs = if round == 0 && checks[k].is_x == memory_is_x {
                    vec![rec]
                } else if round > 0 {
                    vec![records[k][round - 1], rec]
                } else {
                    continue;
                };
                a.detector(
                    (
                        checks[k].site.0 as f64,
                        checks[k].site.1 as f64,
                        round as f64,
                    ),
                    &refs,
                );
            }
            a.tick();
            a.cnot_pairs(&t2);
            a.tick();
            a.cnot_pairs(&t1);
        }
    }

    a.tick();
    a.measure(spec.memory_basis.axis(), &datas);
    for (k, ch) in checks.iter().enumerate() {
        if ch.is_x != memory_is_x {
            continue;
        }
        let mut refs: Vec<usize> = ch.support.iter().map(|&q| a.last(q)).collect();
        refs.push(*records[k].last().unwrap());
        a.detector(
            (ch.site.0 as f64, ch.site.1 as f64, spec.rounds as f64),
            &refs,
        );
    }
    let logical = if memory_is_x { &x_col } else { &z_row };
    a.observable(
        spec.memory_basis.observable_label(),
        &logical.iter().map(|&q| a.last(q)).collect::<Vec<_>>(),
    );

    let n = data_ids.len();
    let stabilizers: Vec<PauliString> = checks
        .iter()
        .map(|ch| {
            let kind = if ch.is_x { PauliKind::X } else { PauliKind::Z };
            let factors: Vec<(usize, PauliKind)> =
                ch.support.iter().map(|&q| (q as usize, kind)).collect();
            PauliString::from_sparse(n, &factors).unwrap()
        })
        .collect();
    let z_logical = PauliString::from_sparse(
        n,
        &z_row.iter().map(|&q| (q as usize, PauliKind::Z)).collect::<Vec<_>>(),
    )
    .unwrap();
    let x_logical = PauliString::from_sparse(
        n,
        &x_col.iter().map(|&q| (q as usize, PauliKind::X)).collect::<Vec<_>>(),
    )
    .unwrap();

    Built {
        circuit: a.finish(),
        roles: vec![QubitRole::Data; n],
        x_logical,
        z_logical,
        stabilizer_period: vec![stabilizers],
    }
}
