//! Heavy-hex realizations of the hexagonal-connectivity surface code.
//!
//! Data qubits sit on the hexagonal patch's sites and every lattice edge in
//! use carries one extra bridge qubit, so two data qubits never interact
//! directly: connectivity is data (degree <= 3) to bridge (degree 2). Each
//! fold gate of the direct hexagonal schedule becomes a gadget on the edge's
//! bridge:
//!
//! * transport edges (the fold legs A->B, D->C, E->F) use the three-CNOT
//!   sandwich CX(u->m); CX(m->v); CX(u->m), which equals CX(u->v) when m
//!   starts in |0> and returns m to |0>; the mirrored sandwich undoes it;
//! * the fold-and-measure step is replaced by a parity bridge on the central
//!   edge: the bridge between B and C is reset to |0>, collects CX(B->m),
//!   CX(C->m) and is read out in Z. The same physical bridge serves the
//!   diagonally adjacent X check in the other sub-round, reset to |+> with
//!   CX(m->D), CX(m->E) and an X-basis readout.
//!
//! A sub-round spans ten ticks: transport-bridge resets (T1), fold sandwich
//! (T2-T4, with the parity-bridge resets sharing T4), parity collection
//! (T5-T6), unfold sandwich (T7-T9) and readout (T10). Every op in a
//! sub-round's last three ticks acts on qubits disjoint from every op in the
//! next sub-round's first three, so consecutive sub-rounds start seven ticks
//! apart with T8-T10 running alongside the next T1-T3; a deeper overlap
//! would touch one qubit twice in a tick. Steady state is therefore seven
//! ticks per sub-round.
//!
//! The two families differ only at T10: the swap variant leaves the
//! transport bridges in |0> silently, while the flag variant measures every
//! one of them in Z alongside the parity bridges. Fault-free those records
//! are deterministic, and each becomes a single-record detector that
//! catches hook faults on the bridge.

use std::collections::{BTreeMap, BTreeSet};

use crate::circuit::{MeasureBasis, Qubit};
use crate::pauli::{PauliKind, PauliString};

use super::surface_hex::{patch, Patch};
use super::{Assembler, Built, CodeFamily, CodeSpec, MemoryBasis, QubitRole};

const SUB_TICKS: usize = 10;
/// Tick stride between consecutive sub-round starts (SUB_TICKS - overlap).
const STRIDE: usize = 7;

#[derive(Default)]
struct Tick {
    reset_z: BTreeSet<Qubit>,
    reset_x: BTreeSet<Qubit>,
    cnots: BTreeSet<(Qubit, Qubit)>,
    meas_z: BTreeSet<Qubit>,
    meas_x: BTreeSet<Qubit>,
    /// Checks whose parity record completes at this tick.
    done: Vec<usize>,
    /// Transport bridges flagged at this tick (flag family only).
    flags: Vec<Qubit>,
}

pub(super) fn build(spec: &CodeSpec) -> Built {
    let flagged = spec.family == CodeFamily::SurfaceHeavyhexFlag;
    let Patch {
        data_ids,
        checks,
        z_row,
        x_col,
    } = patch(spec.distance);
    let n_data = data_ids.len();

    // The parity edge of check k, in collection order. The Z check reads
    // (B, C); the X check sharing the same physical edge reads (D, E) with
    // D = B and E = C, so the key coincides and they get one bridge.
    let parity_pair = |k: usize| -> (Qubit, Qubit) {
        let (a, b) = checks[k].t2[0];
        if checks[k].is_x {
            (b, a)
        } else {
            (a, b)
        }
    };

    // One bridge qubit per lattice edge in use, ids after the data block.
    let transport_edges: BTreeSet<(Qubit, Qubit)> = checks
        .iter()
        .flat_map(|ch| ch.t1.iter().copied())
        .collect();
    let mut edges = transport_edges.clone();
    for k in 0..checks.len() {
        edges.insert(parity_pair(k));
    }
    let bridge: BTreeMap<(Qubit, Qubit), Qubit> = edges
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, (n_data + i) as Qubit))
        .collect();
    let n = n_data + bridge.len();
    debug_assert_eq!(n, 5 * spec.distance * spec.distance - 2 * spec.distance - 2);

    let mut xy = vec![(0.0f64, 0.0f64); n];
    for (&(x, y), &q) in &data_ids {
        xy[q as usize] = (x as f64, y as f64);
    }
    for (&(u, v), &m) in &bridge {
        xy[m as usize] = (
            (xy[u as usize].0 + xy[v as usize].0) / 2.0,
            (xy[u as usize].1 + xy[v as usize].1) / 2.0,
        );
    }
    let mut a = Assembler::new();
    for (q, &(x, y)) in xy.iter().enumerate() {
        a.coord(q as Qubit, x, y);
    }

    // Bucket every op of every sub-round onto the global tick grid.
    let total = STRIDE * 2 * spec.rounds + (SUB_TICKS - STRIDE);
    let mut grid: Vec<Tick> = std::iter::repeat_with(Tick::default).take(total).collect();
    let datas: Vec<Qubit> = (0..n_data as Qubit).collect();
    match spec.memory_basis.axis() {
        MeasureBasis::Z => grid[0].reset_z.extend(datas.iter().copied()),
        _ => grid[0].reset_x.extend(datas.iter().copied()),
    }
    for s in 0..2 * spec.rounds {
        let base = STRIDE * s;
        let active: Vec<usize> = (0..checks.len())
            .filter(|&k| checks[k].sub == s % 2)
            .collect();
        let transports: BTreeSet<(Qubit, Qubit)> = active
            .iter()
            .flat_map(|&k| checks[k].t1.iter().copied())
            .collect();
        for &(u, v) in &transports {
            let m = bridge[&(u, v)];
            grid[base].reset_z.insert(m);
            for off in [1, 3, 6, 8] {
                grid[base + off].cnots.insert((u, m));
            }
            for off in [2, 7] {
                grid[base + off].cnots.insert((m, v));
            }
            if flagged {
                grid[base + 9].meas_z.insert(m);
                grid[base + 9].flags.push(m);
            }
        }
        for &k in &active {
            let (first, second) = parity_pair(k);
            let m = bridge[&(first, second)];
            if checks[k].is_x {
                grid[base + 3].reset_x.insert(m);
                grid[base + 4].cnots.insert((m, first));
                grid[base + 5].cnots.insert((m, second));
                grid[base + 9].meas_x.insert(m);
            } else {
                grid[base + 3].reset_z.insert(m);
                grid[base + 4].cnots.insert((first, m));
                grid[base + 5].cnots.insert((second, m));
                grid[base + 9].meas_z.insert(m);
            }
            grid[base + 9].done.push(k);
        }
    }

    let memory_is_x = spec.memory_basis == MemoryBasis::X;
    let mut records: Vec<Vec<usize>> = vec![Vec::new(); checks.len()];
    for (g, tk) in grid.iter().enumerate() {
        if g > 0 {
            a.tick();
        }
        if !tk.reset_z.is_empty() {
            a.reset(MeasureBasis::Z, &tk.reset_z.iter().copied().collect::<Vec<_>>());
        }
        if !tk.reset_x.is_empty() {
            a.reset(MeasureBasis::X, &tk.reset_x.iter().copied().collect::<Vec<_>>());
        }
        if !tk.cnots.is_empty() {
            a.cnot_pairs(&tk.cnots.iter().copied().collect::<Vec<_>>());
        }
        if !tk.meas_z.is_empty() {
            a.measure(MeasureBasis::Z, &tk.meas_z.iter().copied().collect::<Vec<_>>());
        }
        if !tk.meas_x.is_empty() {
            a.measure(MeasureBasis::X, &tk.meas_x.iter().copied().collect::<Vec<_>>());
        }
        for &k in &tk.done {
            let (first, second) = parity_pair(k);
            let rec = a.last(bridge[&(first, second)]);
            let round = records[k].len();
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
        for &m in &tk.flags {
            let sub_round = (g + 1 - SUB_TICKS) / STRIDE;
            a.detector(
                (xy[m as usize].0, xy[m as usize].1, sub_round as f64 / 2.0),
                &[a.last(m)],
            );
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

    let mut roles = vec![QubitRole::Data; n];
    for (e, &m) in &bridge {
        roles[m as usize] = if transport_edges.contains(e) {
            QubitRole::Flag
        } else {
            QubitRole::Syndrome
        };
    }
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
        &z_row
            .iter()
            .map(|&q| (q as usize, PauliKind::Z))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let x_logical = PauliString::from_sparse(
        n,
        &x_col
            .iter()
            .map(|&q| (q as usize, PauliKind::X))
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

#[cfg(test)]
mod tests {
    use super::super::{
        build, layout, logical_supports, stabilizer_group_generators, CodeFamily, CodeSpec,
        MemoryBasis, QubitRole,
    };
    use crate::circuit::{validate, Instruction};
    use crate::framesim::sample;
    use crate::pauli::commutes;

    const FAMILIES: [CodeFamily; 2] = [
        CodeFamily::SurfaceHeavyhexSwap,
        CodeFamily::SurfaceHeavyhexFlag,
    ];

    fn spec(family: CodeFamily, d: usize, rounds: usize, basis: MemoryBasis) -> CodeSpec {
        CodeSpec::new(family, d, rounds, basis).unwrap()
    }

    #[test]
    fn validates_and_counts_match() {
        for family in FAMILIES {
            for d in [3, 5] {
                for basis in [MemoryBasis::Z, MemoryBasis::X] {
                    let rounds = 2;
                    let s = spec(family, d, rounds, basis);
                    let c = build(&s).unwrap();
                    assert_eq!(validate(&c), vec![], "{family:?} d={d} {basis}");
                    assert_eq!(c.num_qubits(), 5 * d * d - 2 * d - 2);
                    assert_eq!(
                        stabilizer_group_generators(&s, 0).unwrap().len(),
                        2 * d * d - 2
                    );
                    let mut expect = 2 * (d * d - 1) * rounds;
                    if family == CodeFamily::SurfaceHeavyhexFlag {
                        expect += 2 * d * (d - 1) * rounds;
                    }
                    assert_eq!(c.num_detectors(), expect, "{family:?} d={d} {basis}");
                }
            }
        }
    }

    #[test]
    fn seven_steady_state_ticks_per_sub_round() {
        for family in FAMILIES {
            let rounds = 3;
            let c = build(&spec(family, 3, rounds, MemoryBasis::Z)).unwrap();
            // 2 sub-rounds of 10 ticks per round, consecutive ones
            // overlapping by 3, plus the final readout segment.
            assert_eq!(c.segments().len(), 14 * rounds + 4, "{family:?}");
        }
    }

    #[test]
    fn bridge_degrees_and_roles() {
        for family in FAMILIES {
            for d in [3, 5] {
                let lay = layout(&spec(family, d, 1, MemoryBasis::Z)).unwrap();
                assert_eq!(lay.count_role(QubitRole::Data), 2 * d * d - 1);
                assert_eq!(lay.count_role(QubitRole::Syndrome), d * d - 1);
                assert_eq!(lay.count_role(QubitRole::Flag), 2 * d * (d - 1));
                for q in 0..lay.num_qubits() {
                    let cap = match lay.roles[q] {
                        QubitRole::Data => 3,
                        _ => 2,
                    };
                    assert!(
                        lay.degree[q] <= cap,
                        "{family:?} d={d} qubit {q} degree {}",
                        lay.degree[q]
                    );
                }
            }
        }
    }

    /// A flip on a data qubit just before the transversal readout fires the
    /// closure of every containing memory-type check exactly once and flips
    /// the logical iff it hits its support.
    #[test]
    fn final_flip_fires_containing_closures() {
        for family in FAMILIES {
            for basis in [MemoryBasis::Z, MemoryBasis::X] {
                let s = spec(family, 3, 1, basis);
                let gens = stabilizer_group_generators(&s, 0).unwrap();
                let (xl, zl) = logical_supports(&s).unwrap();
                let (logical, flip_kind) = match basis {
                    MemoryBasis::Z => (&zl, crate::pauli::PauliKind::X),
                    MemoryBasis::X => (&xl, crate::pauli::PauliKind::Z),
                };
                let template = build(&s).unwrap();
                let last_tick = template
                    .instructions
                    .iter()
                    .rposition(|i| matches!(i, Instruction::Tick))
                    .unwrap();
                for target in 0..(2 * 3 * 3 - 1) as u32 {
                    let mut c = template.clone();
                    let flip = match basis {
                        MemoryBasis::Z => Instruction::XError {
                            p: 1.0,
                            targets: vec![target],
                        },
                        MemoryBasis::X => Instruction::ZError {
                            p: 1.0,
                            targets: vec![target],
                        },
                    };
                    c.instructions.insert(last_tick + 1, flip);
                    let batch = sample(&c, 64, 7).unwrap();
                    let fired: u64 = batch.detector_counts().iter().sum();
                    let containing = gens
                        .iter()
                        .filter(|g| {
                            let f = crate::pauli::PauliString::from_sparse(
                                g.width(),
                                &[(target as usize, flip_kind)],
                            )
                            .unwrap();
                            !commutes(g, &f).unwrap()
                        })
                        .count() as u64;
                    assert_eq!(fired, 64 * containing, "{family:?} {basis} target {target}");
                    let on_logical = logical.support().contains(&(target as usize));
                    assert_eq!(
                        batch.observable_counts(),
                        vec![if on_logical { 64 } else { 0 }],
                        "{family:?} {basis} target {target}"
                    );
                }
            }
        }
    }

    /// Hook faults on a transport bridge: an X between the first two fold
    /// legs rides into the neighbouring data qubit, trips the owning check
    /// this round and cancels before readout; an X after the second leg
    /// only surfaces at readout. The flag family additionally flags the
    /// bridge itself in both cases.
    #[test]
    fn transport_bridge_hook_faults() {
        for family in FAMILIES {
            let s = spec(family, 3, 1, MemoryBasis::Z);
            let template = build(&s).unwrap();
            // The bridge on the edge between data (1,1) and (2,0): the
            // A->B transport of the Z check at (2,1), first sub-round.
            let bridge = template
                .qubit_coords
                .iter()
                .find(|(_, &(x, y))| x == 1.5 && y == 0.5)
                .map(|(&q, _)| q)
                .unwrap();
            let ticks: Vec<usize> = template
                .instructions
                .iter()
                .enumerate()
                .filter(|(_, i)| matches!(i, Instruction::Tick))
                .map(|(idx, _)| idx)
                .collect();
            let flagged = family == CodeFamily::SurfaceHeavyhexFlag;
            // (insert at start of segment, expected fired checks)
            let cases = [(2, 2u64), (3, 1u64)];
            for (seg, check_fires) in cases {
                let mut c = template.clone();
                c.instructions.insert(
                    ticks[seg - 1] + 1,
                    Instruction::XError {
                        p: 1.0,
                        targets: vec![bridge],
                    },
                );
                let batch = sample(&c, 64, 11).unwrap();
                let fired: u64 = batch.detector_counts().iter().sum();
                let expect = check_fires + u64::from(flagged);
                assert_eq!(fired, 64 * expect, "{family:?} seg {seg}");
                assert_eq!(batch.observable_counts(), vec![0], "{family:?} seg {seg}");
            }
        }
    }
}
