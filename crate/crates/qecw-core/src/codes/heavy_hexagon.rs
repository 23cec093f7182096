//! Subsystem-code memory native to the heavy-hexagonal connectivity graph.
//!
//! Data qubits form a `d x d` grid. The gauge group splits into:
//!
//! * weight-two Z parity checks ("dominoes") joining horizontally adjacent
//!   data qubits through the degree-two edge ancilla between them, and
//! * X gauge operators living in the gaps between data rows: weight-four
//!   units on alternating column pairs plus one weight-two vertical pair at
//!   the single column the units miss, so the product of all X gauges in a
//!   gap covers two complete rows.
//!
//! Stabilizers are the gauge products that commute with everything: full-gap
//! X "strips", vertical stacks of two dominoes in the bulk, and single
//! dominoes on the top/bottom boundary rows. Each weight-four unit reads its
//! X gauge through a mid-gap syndrome ancilla and the two adjacent edge
//! ancillas acting as flags; the flags are then reused to read the unit's
//! upper and lower Z dominoes, so flag and gauge information share one
//! record stream and a full round fits in eleven steps. Leftover boundary
//! dominoes are read standalone on their edge ancilla in the spare steps.
//!
//! Individual gauge records are random; only the strip/stack products are
//! compared across rounds. Both logical operators are bare: Z_L is the
//! leftmost data column and X_L the top data row, each commuting with every
//! gauge generator.

use crate::circuit::{MeasureBasis, Qubit};
use crate::pauli::{PauliKind, PauliString};

use super::{Assembler, Built, CodeSpec, MemoryBasis, QubitRole};

/// How a Z domino's record is produced.
#[derive(Clone, Copy, PartialEq, Eq)]
enum DominoKind {
    /// Flag of the weight-four unit above this edge; collected in steps 7-8,
    /// read in step 9.
    UpperFlag,
    /// Flag of the weight-four unit below this edge; collected in steps
    /// 9-10, read in step 11.
    LowerFlag,
    /// Uncovered top-boundary domino; standalone readout on the lower-flag
    /// step grid.
    TopStandalone,
    /// Uncovered bottom-boundary domino; standalone readout on the
    /// upper-flag step grid.
    BottomStandalone,
}

impl DominoKind {
    /// Collected in steps 7-8 and measured in step 9 (as opposed to 9-11).
    fn early(self) -> bool {
        matches!(self, DominoKind::UpperFlag | DominoKind::BottomStandalone)
    }
}

struct Domino {
    anc: Qubit,
    left: Qubit,
    right: Qubit,
    kind: DominoKind,
}

/// Weight-four X gauge unit spanning rows `gap-1` and `gap` on one column
/// pair, plus its syndrome ancilla and the two edge ancillas it borrows as
/// flags.
struct Unit {
    s: Qubit,
    upper_flag: Qubit,
    lower_flag: Qubit,
    /// Row `gap-1` pair then row `gap` pair, left to right.
    data: [Qubit; 4],
    gap: usize,
}

/// Weight-two vertical X gauge completing a gap's strip at the column the
/// units miss.
struct VerticalGauge {
    s: Qubit,
    upper: Qubit,
    lower: Qubit,
    gap: usize,
}

/// A Z stabilizer: one boundary domino or a vertical stack of two.
struct ZStabilizer {
    dominoes: Vec<usize>,
    support: Vec<Qubit>,
    coord: (f64, f64),
}

pub(super) fn build(spec: &CodeSpec) -> Built {
    let d = spec.distance;
    let data = |r: usize, c: usize| (r * d + c) as Qubit;

    // --- Static structure -------------------------------------------------
    let mut dominoes = Vec::new();
    let mut domino_at = vec![vec![usize::MAX; d - 1]; d];
    let domino_base = d * d;
    for row in 0..d {
        for c in 0..d - 1 {
            let kind = if c % 2 == (row + 1) % 2 {
                if row + 1 <= d - 1 {
                    DominoKind::UpperFlag
                } else {
                    DominoKind::BottomStandalone
                }
            } else if row >= 1 {
                DominoKind::LowerFlag
            } else {
                DominoKind::TopStandalone
            };
            domino_at[row][c] = dominoes.len();
            dominoes.push(Domino {
                anc: (domino_base + row * (d - 1) + c) as Qubit,
                left: data(row, c),
                right: data(row, c + 1),
                kind,
            });
        }
    }

    let unit_base = domino_base + d * (d - 1);
    let mut units = Vec::new();
    for gap in 1..d {
        for c0 in (gap % 2..d - 1).step_by(2) {
            units.push(Unit {
                s: (unit_base + units.len()) as Qubit,
                upper_flag: dominoes[domino_at[gap - 1][c0]].anc,
                lower_flag: dominoes[domino_at[gap][c0]].anc,
                data: [
                    data(gap - 1, c0),
                    data(gap - 1, c0 + 1),
                    data(gap, c0),
                    data(gap, c0 + 1),
                ],
                gap,
            });
        }
    }

    let vertical_base = unit_base + units.len();
    let mut verticals = Vec::new();
    for gap in 1..d {
        // Units at even gaps start at column 0 and miss the right edge.
        let missed = if gap % 2 == 0 { d - 1 } else { 0 };
        verticals.push(VerticalGauge {
            s: (vertical_base + verticals.len()) as Qubit,
            upper: data(gap - 1, missed),
            lower: data(gap, missed),
            gap,
        });
    }

    let n = vertical_base + verticals.len();
    debug_assert_eq!(n, (5 * d * d - 2 * d - 1) / 2);

    let mut zstabs = Vec::new();
    for row in 0..d - 1 {
        for c in (row % 2..d - 1).step_by(2) {
            zstabs.push(ZStabilizer {
                dominoes: vec![domino_at[row][c], domino_at[row + 1][c]],
                support: vec![
                    data(row, c),
                    data(row, c + 1),
                    data(row + 1, c),
                    data(row + 1, c + 1),
                ],
                coord: ((2 * c + 1) as f64, (2 * row + 1) as f64),
            });
        }
    }
    for (row, parity) in [(0, 1), (d - 1, 0)] {
        for c in (parity..d - 1).step_by(2) {
            zstabs.push(ZStabilizer {
                dominoes: vec![domino_at[row][c]],
                support: vec![data(row, c), data(row, c + 1)],
                coord: ((2 * c + 1) as f64, (2 * row) as f64),
            });
        }
    }

    let strip_members = |gap: usize| -> (Vec<&Unit>, &VerticalGauge) {
        (
            units.iter().filter(|u| u.gap == gap).collect(),
            &verticals[gap - 1],
        )
    };

    // --- Circuit ----------------------------------------------------------
    let mut a = Assembler::new();
    for r in 0..d {
        for c in 0..d {
            a.coord(data(r, c), (2 * c) as f64, (2 * r) as f64);
        }
    }
    for row in 0..d {
        for c in 0..d - 1 {
            a.coord(
                dominoes[domino_at[row][c]].anc,
                (2 * c + 1) as f64,
                (2 * row) as f64,
            );
        }
    }
    for u in &units {
        let c0 = (u.data[0] as usize) % d;
        a.coord(u.s, (2 * c0 + 1) as f64, (2 * u.gap - 1) as f64);
    }
    for v in &verticals {
        let col = (v.upper as usize) % d;
        let x = if col == 0 { -1.0 } else { (2 * d - 1) as f64 };
        a.coord(v.s, x, (2 * v.gap - 1) as f64);
    }

    let axis = spec.memory_basis.axis();
    let datas: Vec<Qubit> = (0..(d * d) as Qubit).collect();
    let x_ancillas: Vec<Qubit> = units
        .iter()
        .map(|u| u.s)
        .chain(verticals.iter().map(|v| v.s))
        .collect();
    let domino_ancillas: Vec<Qubit> = dominoes.iter().map(|dm| dm.anc).collect();
    let early: Vec<&Domino> = dominoes.iter().filter(|dm| dm.kind.early()).collect();
    let late: Vec<&Domino> = dominoes.iter().filter(|dm| !dm.kind.early()).collect();

    for r in 0..spec.rounds {
        // Step 1: ancilla (and, first round, data) preparation.
        if r > 0 {
            a.tick();
        } else {
            a.reset(axis, &datas);
        }
        a.reset(MeasureBasis::X, &x_ancillas);
        a.reset(MeasureBasis::Z, &domino_ancillas);

        // Steps 2-6: fan the X gauges out through the flags.
        a.tick();
        a.cnot_pairs(
            &units
                .iter()
                .map(|u| (u.s, u.upper_flag))
                .chain(verticals.iter().map(|v| (v.s, v.upper)))
                .collect::<Vec<_>>(),
        );
        a.tick();
        a.cnot_pairs(
            &units
                .iter()
                .flat_map(|u| [(u.upper_flag, u.data[0]), (u.s, u.lower_flag)])
                .collect::<Vec<_>>(),
        );
        a.tick();
        a.cnot_pairs(&units.iter().map(|u| (u.upper_flag, u.data[1])).collect::<Vec<_>>());
        a.tick();
        a.cnot_pairs(
            &units
                .iter()
                .flat_map(|u| [(u.lower_flag, u.data[2]), (u.s, u.upper_flag)])
                .collect::<Vec<_>>(),
        );
        a.tick();
        a.cnot_pairs(
            &units
                .iter()
                .map(|u| (u.lower_flag, u.data[3]))
                .chain(verticals.iter().map(|v| (v.s, v.lower)))
                .collect::<Vec<_>>(),
        );

        // Step 7: refold the lower flag; start collecting the early dominoes.
        a.tick();
        a.cnot_pairs(
            &units
                .iter()
                .map(|u| (u.s, u.lower_flag))
                .chain(early.iter().map(|dm| (dm.left, dm.anc)))
                .collect::<Vec<_>>(),
        );

        // Step 8: finish early-domino collection; read the X gauges.
        a.tick();
        a.cnot_pairs(&early.iter().map(|dm| (dm.right, dm.anc)).collect::<Vec<_>>());
        a.measure(MeasureBasis::X, &x_ancillas);

        // Step 9: read early dominoes; start collecting the late ones.
        a.tick();
        a.cnot_pairs(&late.iter().map(|dm| (dm.left, dm.anc)).collect::<Vec<_>>());
        a.measure(
            MeasureBasis::Z,
            &early.iter().map(|dm| dm.anc).collect::<Vec<_>>(),
        );

        // Step 10: finish late-domino collection.
        a.tick();
        a.cnot_pairs(&late.iter().map(|dm| (dm.right, dm.anc)).collect::<Vec<_>>());

        // Step 11: read the late dominoes.
        a.tick();
        a.measure(
            MeasureBasis::Z,
            &late.iter().map(|dm| dm.anc).collect::<Vec<_>>(),
        );

        // Detectors: stabilizer products of this round's gauge records,
        // anchored on preparation where deterministic, otherwise compared
        // with the previous round.
        for st in &zstabs {
            let curr: Vec<usize> = st.dominoes.iter().map(|&i| a.last(dominoes[i].anc)).collect();
            let mut refs = curr;
            match spec.memory_basis {
                MemoryBasis::Z if r == 0 => {}
                _ if r == 0 => continue,
                _ => refs.extend(st.dominoes.iter().map(|&i| a.nth_last(dominoes[i].anc, 1))),
            }
            a.detector((st.coord.0, st.coord.1, r as f64), &refs);
        }
        for gap in 1..d {
            let (us, v) = strip_members(gap);
            let curr: Vec<usize> = us
                .iter()
                .map(|u| a.last(u.s))
                .chain([a.last(v.s)])
                .collect();
            let mut refs = curr;
            match spec.memory_basis {
                MemoryBasis::X if r == 0 => {}
                _ if r == 0 => continue,
                _ => refs.extend(
                    us.iter()
                        .map(|u| a.nth_last(u.s, 1))
                        .chain([a.nth_last(v.s, 1)]),
                ),
            }
            a.detector(((d - 1) as f64, (2 * gap - 1) as f64, r as f64), &refs);
        }
    }

    // Transversal data readout, closure detectors, logical readout.
    a.tick();
    a.measure(axis, &datas);
    let t = spec.rounds as f64;
    match spec.memory_basis {
        MemoryBasis::Z => {
            for st in &zstabs {
                let refs: Vec<usize> = st
                    .dominoes
                    .iter()
                    .map(|&i| a.last(dominoes[i].anc))
                    .chain(st.support.iter().map(|&q| a.last(q)))
                    .collect();
                a.detector((st.coord.0, st.coord.1, t), &refs);
            }
            let col: Vec<usize> = (0..d).map(|r| a.last(data(r, 0))).collect();
            a.observable(spec.memory_basis.observable_label(), &col);
        }
        MemoryBasis::X => {
            for gap in 1..d {
                let (us, v) = strip_members(gap);
                let refs: Vec<usize> = us
                    .iter()
                    .map(|u| a.last(u.s))
                    .chain([a.last(v.s)])
                    .chain((0..d).flat_map(|c| {
                        [a.last(data(gap - 1, c)), a.last(data(gap, c))]
                    }))
                    .collect();
                a.detector(((d - 1) as f64, (2 * gap - 1) as f64, t), &refs);
            }
            let row: Vec<usize> = (0..d).map(|c| a.last(data(0, c))).collect();
            a.observable(spec.memory_basis.observable_label(), &row);
        }
    }

    // --- Metadata ---------------------------------------------------------
    let mut roles = vec![QubitRole::Data; n];
    for dm in &dominoes {
        roles[dm.anc as usize] = match dm.kind {
            DominoKind::UpperFlag | DominoKind::LowerFlag => QubitRole::Flag,
            _ => QubitRole::Syndrome,
        };
    }
    for u in &units {
        roles[u.s as usize] = QubitRole::Syndrome;
    }
    for v in &verticals {
        roles[v.s as usize] = QubitRole::Syndrome;
    }

    let mut stabilizers = Vec::new();
    for st in &zstabs {
        let sites: Vec<(usize, PauliKind)> = st
            .support
            .iter()
            .map(|&q| (q as usize, PauliKind::Z))
            .collect();
        stabilizers.push(PauliString::from_sparse(n, &sites).unwrap());
    }
    for gap in 1..d {
        let sites: Vec<(usize, PauliKind)> = (0..d)
            .flat_map(|c| {
                [
                    (data(gap - 1, c) as usize, PauliKind::X),
                    (data(gap, c) as usize, PauliKind::X),
                ]
            })
            .collect();
        stabilizers.push(PauliString::from_sparse(n, &sites).unwrap());
    }

    let x_logical = PauliString::from_sparse(
        n,
        &(0..d)
            .map(|c| (data(0, c) as usize, PauliKind::X))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let z_logical = PauliString::from_sparse(
        n,
        &(0..d)
            .map(|r| (data(r, 0) as usize, PauliKind::Z))
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
    use super::*;
    use crate::circuit::{validate, Instruction};
    use crate::codes::{build, layout, logical_supports, stabilizer_group_generators, CodeFamily};
    use crate::framesim::sample;
    use crate::pauli::commutes;

    fn spec(d: usize, rounds: usize, basis: MemoryBasis) -> CodeSpec {
        CodeSpec::new(CodeFamily::HeavyHexagon, d, rounds, basis).unwrap()
    }

    #[test]
    fn validates_and_counts_match() {
        for d in [3, 5] {
            for basis in [MemoryBasis::Z, MemoryBasis::X] {
                let rounds = 2;
                let c = build(&spec(d, rounds, basis)).unwrap();
                assert_eq!(validate(&c), vec![], "d={d} {basis}");
                assert_eq!(c.num_qubits(), (5 * d * d - 2 * d - 1) / 2);

                let zstabs = (d * d - 1) / 2;
                let strips = d - 1;
                let per_round = (d - 1) * (d - 1) / 2 + (d - 1) + d * (d - 1);
                assert_eq!(c.num_measurements(), rounds * per_round + d * d);
                let expected = match basis {
                    MemoryBasis::Z => zstabs * (rounds + 1) + strips * (rounds - 1),
                    MemoryBasis::X => zstabs * (rounds - 1) + strips * (rounds + 1),
                };
                assert_eq!(c.num_detectors(), expected, "d={d} {basis}");
            }
        }
    }

    #[test]
    fn eleven_steps_per_round() {
        let c = build(&spec(5, 3, MemoryBasis::Z)).unwrap();
        assert_eq!(c.segments().len(), 11 * 3 + 1);
    }

    #[test]
    fn distance_3_stabilizer_weights() {
        let gens = stabilizer_group_generators(&spec(3, 1, MemoryBasis::Z), 0).unwrap();
        let mut weights: Vec<usize> = gens.iter().map(PauliString::weight).collect();
        weights.sort_unstable();
        assert_eq!(weights, vec![2, 2, 4, 4, 6, 6]);
    }

    #[test]
    fn logicals_are_bare_row_and_column() {
        for d in [3, 5, 7] {
            let s = spec(d, 1, MemoryBasis::Z);
            let (xl, zl) = logical_supports(&s).unwrap();
            assert_eq!(xl.weight(), d);
            assert_eq!(zl.weight(), d);
            assert!(!commutes(&xl, &zl).unwrap());
            for g in stabilizer_group_generators(&s, 0).unwrap() {
                assert!(commutes(&xl, &g).unwrap());
                assert!(commutes(&zl, &g).unwrap());
            }
        }
    }

    #[test]
    fn heavy_hex_degrees() {
        let l = layout(&spec(5, 2, MemoryBasis::Z)).unwrap();
        for (q, (&deg, &role)) in l.degree.iter().zip(l.roles.iter()).enumerate() {
            let cap = match role {
                QubitRole::Data => 2,
                QubitRole::Flag => 3,
                QubitRole::Syndrome => 2,
                QubitRole::Unused => 0,
            };
            assert!(deg <= cap, "qubit {q} role {role:?} degree {deg}");
        }
        assert_eq!(l.roles.iter().filter(|r| **r == QubitRole::Data).count(), 25);
        assert_eq!(l.roles.iter().filter(|r| **r == QubitRole::Flag).count(), 16);
        assert_eq!(
            l.roles.iter().filter(|r| **r == QubitRole::Syndrome).count(),
            16
        );
    }

    #[test]
    fn forced_flip_fires_containing_stabilizers() {
        let d = 3;
        for basis in [MemoryBasis::Z, MemoryBasis::X] {
            let s = spec(d, 2, basis);
            let base = build(&s).unwrap();
            let gens = stabilizer_group_generators(&s, 0).unwrap();
            let n = base.num_qubits();

            // Insertion point: right after round 0 (the 11th step boundary).
            let insert_at = base
                .instructions
                .iter()
                .enumerate()
                .filter(|(_, inst)| matches!(inst, Instruction::Tick))
                .map(|(i, _)| i)
                .nth(10)
                .unwrap()
                + 1;

            for q in 0..(d * d) as u32 {
                let flip_kind = match basis {
                    MemoryBasis::Z => PauliKind::X,
                    MemoryBasis::X => PauliKind::Z,
                };
                let flip = PauliString::from_sparse(n, &[(q as usize, flip_kind)]).unwrap();
                let mut c = base.clone();
                let inst = match basis {
                    MemoryBasis::Z => Instruction::XError { p: 1.0, targets: vec![q] },
                    MemoryBasis::X => Instruction::ZError { p: 1.0, targets: vec![q] },
                };
                c.instructions.insert(insert_at, inst);

                let batch = sample(&c, 64, 7).unwrap();
                let fired: u64 = batch.detector_counts().iter().sum();
                let touching = gens
                    .iter()
                    .filter(|g| !commutes(g, &flip).unwrap())
                    .count() as u64;
                assert_eq!(fired, 64 * touching, "{basis} flip on {q}");

                let (xl, zl) = logical_supports(&s).unwrap();
                let logical = match basis {
                    MemoryBasis::Z => &zl,
                    MemoryBasis::X => &xl,
                };
                let expect_obs = if !commutes(logical, &flip).unwrap() { 64 } else { 0 };
                assert_eq!(batch.observable_counts(), vec![expect_obs], "{basis} obs {q}");
            }
        }
    }
}
