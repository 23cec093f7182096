//! Floquet honeycomb memories on a brick-wall torus.
//!
//! Geometry: vertices sit on a 2W×H grid with periodic boundaries;
//! horizontal bonds connect every `(x, y)–(x+1, y)` pair and vertical bonds
//! exist where `x + y` is even, which tiles the torus with W·H hexagonal
//! "bricks" `B(x₀, y)` (six vertices spanning three columns and two rows).
//! Every edge carries a two-qubit check, coloured by column — horizontal
//! `(x, x+1)` gets colour `(x+1) mod 3`, the vertical at column `x` gets
//! `(x+2) mod 3` — so the three edges at any vertex carry all three colours
//! and each colour class is a perfect matching. A brick of colour `c`
//! (its `x₀ mod 3`) is bounded by three edges of each of the other two
//! colours, and the product of those six checks is its plaquette
//! stabilizer.
//!
//! The schedule measures the colour-0, 1, 2 checks cyclically, one colour
//! per sub-round and three sub-rounds per round. The nominal check kinds
//! are X⊗X, Y⊗Y, Z⊗Z; both realizations work in a fixed single-qubit frame
//! that swaps X↔Y on the odd sublattice (`x + y` odd), turning the checks
//! into X⊗Y, Y⊗X and Z⊗Z. In that frame every check and every plaquette is
//! measured with a positive sign by CNOT-only gadgets, which is what lets
//! first-reconstruction detectors and readout closures be deterministic:
//!
//! * `honeycomb-hex` — ancilla-free on degree-3 hexagonal connectivity.
//!   Each framed check folds onto one of its own endpoints with a single
//!   CNOT: fold, measure that qubit in its own basis, unfold — three steps
//!   per sub-round, nine per round, 2·W·H qubits.
//! * `honeycomb-heavyhex` — one ancilla per lattice edge on heavy-hex
//!   connectivity. The mixed-kind colours need the full fold–measure–unfold
//!   through the ancilla (prepare |+⟩, three CNOTs, measure Y, undo the
//!   three CNOTs — eight steps) so that the data is projected by exactly
//!   the check and nothing else; Z⊗Z uses the standard two-CNOT parity
//!   gather into a |0⟩ ancilla (four steps). Twenty steps per round,
//!   5·W·H qubits.
//!
//! Detectors compare consecutive reconstructions of each plaquette (twelve
//! records), plus first-occurrence anchors where exact stabilizer analysis
//! proves the first reconstruction deterministic, plus final closures
//! against the transversal data readout. The readout frame alternates with
//! the round parity (the tracked logical representative returns to its
//! preparation kind only after an even number of colour periods), so the
//! closures are per-check and plaquette comparisons in the all-Z frame
//! after even Z-memory / odd X-memory runs, and colour-0 plaquette
//! comparisons in the framed-X readout otherwise.
//!
//! Logical readout: the torus's winding logical representatives change
//! under the measurement schedule. The builder tracks one representative
//! explicitly: before each sub-round a GF(2) solve over {previous
//! sub-round's checks} ∪ {reconstructed plaquettes} — exactly the
//! instantaneous stabilizer generators — rewrites it to commute with the
//! incoming colour, and the records of the absorbed operators are XOR-ed
//! into the observable. After the last sub-round the same pool aligns the
//! representative with the transversal readout frame site by site.

use std::collections::{BTreeMap, BTreeSet};

use crate::circuit::{Circuit, MeasureBasis, Qubit};
use crate::pauli::{commutes, pauli_mul, PauliKind, PauliString};
use crate::tableau::CircuitAnalysis;

use super::{Assembler, Built, CodeFamily, CodeSpec, CodesError, MemoryBasis, QubitRole};

/// Nominal (unframed) Pauli kind measured by each check colour.
const COLOUR_KIND: [PauliKind; 3] = [PauliKind::X, PauliKind::Y, PauliKind::Z];

/// Column where the vertical winding logical is anchored.
const LOGICAL_COLUMN: usize = 2;

/// Torus size (bricks per row W, rows H) for each supported distance. W is
/// a multiple of 3 so the edge colouring closes around the torus, H is even
/// so the brick parity does; the sizes keep the brick grid square-ish while
/// growing both winding-operator weights with the distance.
fn torus_dims(distance: usize) -> Result<(usize, usize), CodesError> {
    Ok(match distance {
        3 => (3, 2),
        5 => (6, 4),
        7 => (6, 6),
        9 => (9, 8),
        11 => (9, 10),
        13 => (12, 12),
        other => return Err(CodesError::UnsupportedDistance(other)),
    })
}

/// One lattice bond and the check that lives on it.
struct Edge {
    /// Endpoint on the even sublattice (`x + y` even).
    u: Qubit,
    /// Endpoint on the odd sublattice.
    v: Qubit,
    colour: usize,
    mid: (f64, f64),
}

/// One hexagonal face (brick) and its boundary.
struct Face {
    colour: usize,
    verts: [Qubit; 6],
    /// Indices into the edge list of the six boundary checks.
    border: [usize; 6],
    at: (f64, f64),
}

struct Torus {
    w2: usize,
    h: usize,
    n_data: usize,
    edges: Vec<Edge>,
    by_colour: [Vec<usize>; 3],
    faces: Vec<Face>,
}

impl Torus {
    fn site(&self, x: usize, y: usize) -> Qubit {
        (y * self.w2 + x) as Qubit
    }

    fn is_odd(&self, q: Qubit) -> bool {
        let q = q as usize;
        (q % self.w2 + q / self.w2) % 2 == 1
    }
}

fn torus(w: usize, h: usize) -> Torus {
    let w2 = 2 * w;
    let site = |x: usize, y: usize| (y * w2 + x) as Qubit;
    let mut edges = Vec::new();
    let mut key: BTreeMap<(Qubit, Qubit), usize> = BTreeMap::new();
    let mut by_colour: [Vec<usize>; 3] = Default::default();
    let mut push = |edges: &mut Vec<Edge>, key: &mut BTreeMap<_, _>, e: Edge| {
        key.insert((e.u.min(e.v), e.u.max(e.v)), edges.len());
        by_colour[e.colour].push(edges.len());
        edges.push(e);
    };
    for y in 0..h {
        for x in 0..w2 {
            let a = site(x, y);
            let b = site((x + 1) % w2, y);
            let (u, v) = if (x + y) % 2 == 0 { (a, b) } else { (b, a) };
            push(
                &mut edges,
                &mut key,
                Edge {
                    u,
                    v,
                    colour: (x + 1) % 3,
                    mid: (x as f64 + 0.5, y as f64),
                },
            );
            if (x + y) % 2 == 0 {
                push(
                    &mut edges,
                    &mut key,
                    Edge {
                        u: a,
                        v: site(x, (y + 1) % h),
                        colour: (x + 2) % 3,
                        mid: (x as f64, y as f64 + 0.5),
                    },
                );
            }
        }
    }
    let mut faces = Vec::new();
    for y in 0..h {
        for x0 in 0..w2 {
            if (x0 + y) % 2 != 0 {
                continue;
            }
            let (x1, x2, yt) = ((x0 + 1) % w2, (x0 + 2) % w2, (y + 1) % h);
            let verts = [
                site(x0, y),
                site(x1, y),
                site(x2, y),
                site(x0, yt),
                site(x1, yt),
                site(x2, yt),
            ];
            let e = |a: Qubit, b: Qubit| key[&(a.min(b), a.max(b))];
            let border = [
                e(verts[0], verts[1]),
                e(verts[1], verts[2]),
                e(verts[3], verts[4]),
                e(verts[4], verts[5]),
                e(verts[0], verts[3]),
                e(verts[2], verts[5]),
            ];
            faces.push(Face {
                colour: x0 % 3,
                verts,
                border,
                at: (x0 as f64 + 1.0, y as f64 + 0.5),
            });
        }
    }
    Torus {
        w2,
        h,
        n_data: w2 * h,
        edges,
        by_colour,
        faces,
    }
}

/// The fixed odd-sublattice frame change both realizations work in:
/// X↔Y on the odd sublattice, Z everywhere fixed.
fn framed(k: PauliKind, odd: bool) -> PauliKind {
    match k {
        PauliKind::X if odd => PauliKind::Y,
        PauliKind::Y if odd => PauliKind::X,
        other => other,
    }
}

fn basis_of(k: PauliKind) -> MeasureBasis {
    match k {
        PauliKind::X => MeasureBasis::X,
        PauliKind::Y => MeasureBasis::Y,
        PauliKind::Z => MeasureBasis::Z,
        PauliKind::I => unreachable!("no identity basis"),
    }
}

/// The framed check operator of an edge: `framed(kind)` on each endpoint
/// (the even endpoint keeps the nominal kind, the odd endpoint swaps X↔Y).
fn check_string(n: usize, e: &Edge) -> PauliString {
    let k = COLOUR_KIND[e.colour];
    PauliString::from_sparse(
        n,
        &[(e.u as usize, framed(k, false)), (e.v as usize, framed(k, true))],
    )
    .unwrap()
}

/// The plaquette operator of a face: the product of its six border checks,
/// which works out to `framed(face kind)` on each of its six vertices with
/// an overall positive sign.
fn face_string(n: usize, t: &Torus, f: &Face) -> PauliString {
    let k = COLOUR_KIND[f.colour];
    let factors: Vec<(usize, PauliKind)> = f
        .verts
        .iter()
        .map(|&q| (q as usize, framed(k, t.is_odd(q))))
        .collect();
    PauliString::from_sparse(n, &factors).unwrap()
}

/// Seed of the vertical winding representative: a Z column (weight H).
/// Its value is fixed by all-Z preparation; the first retarget widens it to
/// the two-column form that commutes with the colour-0 checks.
fn column_logical(n: usize, t: &Torus) -> PauliString {
    let factors: Vec<(usize, PauliKind)> = (0..t.h)
        .map(|y| (t.site(LOGICAL_COLUMN, y) as usize, PauliKind::Z))
        .collect();
    PauliString::from_sparse(n, &factors).unwrap()
}

/// The advertised vertical logical: Z on two adjacent columns (weight 2H).
/// This is the representative in force while colour-0 checks are fresh — it
/// meets every check and plaquette evenly or with matching kind.
fn double_column_logical(n: usize, t: &Torus) -> PauliString {
    let factors: Vec<(usize, PauliKind)> = (0..t.h)
        .flat_map(|y| {
            [
                (t.site(LOGICAL_COLUMN, y) as usize, PauliKind::Z),
                (t.site(LOGICAL_COLUMN + 1, y) as usize, PauliKind::Z),
            ]
        })
        .collect();
    PauliString::from_sparse(n, &factors).unwrap()
}

/// Horizontal winding logical: framed X on row 0 at every column with
/// x ∉ 0 (mod 3) (weight 4W/3), which meets every brick evenly, matches the
/// colour-0 checks in kind, and meets the vertical logical exactly once.
fn row_logical(n: usize, t: &Torus) -> PauliString {
    let factors: Vec<(usize, PauliKind)> = (0..t.w2)
        .filter(|x| x % 3 != 0)
        .map(|x| {
            let q = t.site(x, 0);
            (q as usize, framed(PauliKind::X, t.is_odd(q)))
        })
        .collect();
    PauliString::from_sparse(n, &factors).unwrap()
}

/// Transversal preparation/readout frames that occur in the schedule.
#[derive(Clone, Copy, PartialEq, Eq)]
enum DataFrame {
    /// Z on every data qubit.
    AllZ,
    /// Framed X: X on the even sublattice, Y on the odd sublattice.
    FramedX,
}

/// Per-site Pauli kind of a transversal frame.
fn site_kinds(t: &Torus, frame: DataFrame) -> Vec<PauliKind> {
    (0..t.n_data)
        .map(|q| match frame {
            DataFrame::AllZ => PauliKind::Z,
            DataFrame::FramedX => framed(PauliKind::X, t.is_odd(q as Qubit)),
        })
        .collect()
}

/// Frame whose single-site stabilizers fix the memory observable at
/// preparation time.
fn prep_frame(basis: MemoryBasis) -> DataFrame {
    match basis {
        MemoryBasis::Z => DataFrame::AllZ,
        MemoryBasis::X => DataFrame::FramedX,
    }
}

/// Frame the tracked representative is readable in after `rounds` full
/// colour periods: it returns to its preparation kind only after an even
/// number of periods and sits in the conjugate frame after an odd number.
fn readout_frame(basis: MemoryBasis, rounds: usize) -> DataFrame {
    let even = rounds % 2 == 0;
    match (basis, even) {
        (MemoryBasis::Z, true) | (MemoryBasis::X, false) => DataFrame::AllZ,
        (MemoryBasis::Z, false) | (MemoryBasis::X, true) => DataFrame::FramedX,
    }
}

/// Colour of the first sub-round: the one whose checks the preparation
/// frame fixes, so the opening sub-round has per-check detectors. The cycle
/// then proceeds in colour order 0, 1, 2.
fn schedule_phase(basis: MemoryBasis) -> usize {
    match basis {
        MemoryBasis::Z => 2,
        MemoryBasis::X => 0,
    }
}

/// Sub-round colour sequence: three colour sub-rounds per round, cyclic in
/// colour order, starting from the preparation-compatible colour.
fn schedule(spec: &CodeSpec) -> Vec<usize> {
    let phase = schedule_phase(spec.memory_basis);
    (0..3 * spec.rounds).map(|k| (k + phase) % 3).collect()
}

// ------------------------- representative tracking -------------------------

/// An instantaneous stabilizer with the measurement records that determine
/// its value (empty for preparation stabilizers, whose value is fixed).
struct PoolItem {
    op: PauliString,
    records: Vec<usize>,
}

fn toggle(frame: &mut BTreeSet<usize>, record: usize) {
    if !frame.remove(&record) {
        frame.insert(record);
    }
}

/// Multiplies `op` into `rep`, ignoring phase (records carry the value).
fn apply(rep: &mut PauliString, op: &PauliString) {
    for q in op.support() {
        let product = pauli_mul(rep.get(q).unwrap(), op.get(q).unwrap());
        rep.set(q, product).unwrap();
    }
}

/// Solves A·x = b over GF(2). `rows` holds one (bits-over-variables, rhs)
/// pair per equation; returns the support of one solution, or None if the
/// system is inconsistent.
fn gf2_solve(mut rows: Vec<(Vec<u64>, bool)>, nvars: usize) -> Option<Vec<usize>> {
    let bit = |r: &[u64], v: usize| r[v / 64] >> (v % 64) & 1 == 1;
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut used = 0usize;
    for var in 0..nvars {
        let Some(pick) = (used..rows.len()).find(|&i| bit(&rows[i].0, var)) else {
            continue;
        };
        rows.swap(used, pick);
        let (pbits, prhs) = rows[used].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != used && bit(&row.0, var) {
                for (w, pw) in row.0.iter_mut().zip(&pbits) {
                    *w ^= pw;
                }
                row.1 ^= prhs;
            }
        }
        pivots.push((var, used));
        used += 1;
    }
    if rows[used..].iter().any(|&(_, rhs)| rhs) {
        return None;
    }
    Some(
        pivots
            .into_iter()
            .filter(|&(_, row)| rows[row].1)
            .map(|(var, _)| var)
            .collect(),
    )
}

/// Rewrites `rep` by a product of pool operators so it commutes with every
/// incoming check, folding the used records into the observable frame.
fn retarget(
    rep: &mut PauliString,
    frame: &mut BTreeSet<usize>,
    pool: &[PoolItem],
    incoming: &[&PauliString],
    context: &str,
) {
    let rhs: Vec<bool> = incoming
        .iter()
        .map(|c| !commutes(rep, c).unwrap())
        .collect();
    if rhs.iter().all(|&r| !r) {
        return;
    }
    let words = pool.len().div_ceil(64).max(1);
    let rows: Vec<(Vec<u64>, bool)> = incoming
        .iter()
        .zip(rhs)
        .map(|(check, need)| {
            let mut bits = vec![0u64; words];
            for (j, item) in pool.iter().enumerate() {
                if !commutes(&item.op, check).unwrap() {
                    bits[j / 64] |= 1 << (j % 64);
                }
            }
            (bits, need)
        })
        .collect();
    let solution = gf2_solve(rows, pool.len())
        .unwrap_or_else(|| panic!("no representative transition at {context}"));
    for j in solution {
        apply(rep, &pool[j].op);
        for &r in &pool[j].records {
            toggle(frame, r);
        }
    }
}

/// Rewrites `rep` so every site carries either identity or its readout
/// kind. Per site this is the quotient by {I, kind}, a GF(2) functional.
fn align_for_readout(
    rep: &mut PauliString,
    frame: &mut BTreeSet<usize>,
    pool: &[PoolItem],
    kinds: &[PauliKind],
    context: &str,
) {
    let off_axis = |p: &PauliString, q: usize| {
        let k = p.get(q).unwrap();
        k != PauliKind::I && k != kinds[q]
    };
    let mut sites: BTreeSet<usize> = rep.support().into_iter().collect();
    for item in pool {
        sites.extend(item.op.support());
    }
    let words = pool.len().div_ceil(64).max(1);
    let rows: Vec<(Vec<u64>, bool)> = sites
        .iter()
        .map(|&q| {
            let mut bits = vec![0u64; words];
            for (j, item) in pool.iter().enumerate() {
                if off_axis(&item.op, q) {
                    bits[j / 64] |= 1 << (j % 64);
                }
            }
            (bits, off_axis(rep, q))
        })
        .collect();
    let solution = gf2_solve(rows, pool.len())
        .unwrap_or_else(|| panic!("no readable representative at {context}"));
    for j in solution {
        apply(rep, &pool[j].op);
        for &r in &pool[j].records {
            toggle(frame, r);
        }
    }
}

/// The instantaneous stabilizer pool after a sub-round of `prev_colour`:
/// that colour's checks (one record each) plus every plaquette with a
/// complete reconstruction (six records each).
fn measurement_pool(
    t: &Torus,
    checks: &[PauliString],
    face_ops: &[PauliString],
    prev_colour: usize,
    latest: &[Option<usize>],
    recon: &[Option<Vec<usize>>],
) -> Vec<PoolItem> {
    let mut pool: Vec<PoolItem> = t.by_colour[prev_colour]
        .iter()
        .map(|&ei| PoolItem {
            op: checks[ei].clone(),
            records: vec![latest[ei].expect("colour was just measured")],
        })
        .collect();
    for (fi, r) in recon.iter().enumerate() {
        if let Some(refs) = r {
            pool.push(PoolItem {
                op: face_ops[fi].clone(),
                records: refs.clone(),
            });
        }
    }
    pool
}

// ------------------------------ emission ------------------------------

/// Emits one sub-round of check measurements.
///
/// Hexagonal realization: fold the framed check onto one endpoint with one
/// CNOT, measure that endpoint in its own basis, unfold — the measured
/// operator is exactly the framed check with a positive sign (colour 0
/// folds onto the odd endpoint, colour 1 onto the even one, colour 2 reads
/// Z⊗Z off the odd endpoint).
///
/// Ancilla realization: the mixed-kind colours entangle the pair with the
/// ancilla (|+⟩, CNOTs ancilla→u, ancilla→v, v→ancilla), measure the
/// ancilla in Y — the measured operator is +X_anc·(framed check), so the
/// record carries the check value — and then undo the three CNOTs, which
/// restores every other instantaneous stabilizer and returns the ancilla to
/// |+⟩. Colour 1 mirrors the roles of u and v. Colour 2 gathers both Z's
/// into a |0⟩ ancilla with two CNOTs and measures it.
fn emit_sub_round(a: &mut Assembler, t: &Torus, colour: usize, heavy: bool) {
    let picked: Vec<&Edge> = t.by_colour[colour].iter().map(|&ei| &t.edges[ei]).collect();
    if heavy {
        let ancs: Vec<Qubit> = t.by_colour[colour]
            .iter()
            .map(|&ei| (t.n_data + ei) as Qubit)
            .collect();
        let to_u: Vec<(Qubit, Qubit)> =
            picked.iter().zip(&ancs).map(|(e, &m)| (m, e.u)).collect();
        let to_v: Vec<(Qubit, Qubit)> =
            picked.iter().zip(&ancs).map(|(e, &m)| (m, e.v)).collect();
        let from_u: Vec<(Qubit, Qubit)> =
            picked.iter().zip(&ancs).map(|(e, &m)| (e.u, m)).collect();
        let from_v: Vec<(Qubit, Qubit)> =
            picked.iter().zip(&ancs).map(|(e, &m)| (e.v, m)).collect();
        match colour {
            2 => {
                a.tick();
                a.reset(MeasureBasis::Z, &ancs);
                a.tick();
                a.cnot_pairs(&from_u);
                a.tick();
                a.cnot_pairs(&from_v);
                a.tick();
                a.measure(MeasureBasis::Z, &ancs);
            }
            c => {
                // Fold order for colour 0; colour 1 swaps u and v.
                let (first, second, back) = if c == 0 {
                    (&to_u, &to_v, &from_v)
                } else {
                    (&to_v, &to_u, &from_u)
                };
                a.tick();
                a.reset(MeasureBasis::X, &ancs);
                a.tick();
                a.cnot_pairs(first);
                a.tick();
                a.cnot_pairs(second);
                a.tick();
                a.cnot_pairs(back);
                a.tick();
                a.measure(MeasureBasis::Y, &ancs);
                a.tick();
                a.cnot_pairs(back);
                a.tick();
                a.cnot_pairs(second);
                a.tick();
                a.cnot_pairs(first);
            }
        }
    } else {
        let (folds, targets): (Vec<(Qubit, Qubit)>, Vec<Qubit>) = picked
            .iter()
            .map(|e| match colour {
                0 => ((e.v, e.u), e.v),
                1 => ((e.u, e.v), e.u),
                _ => ((e.u, e.v), e.v),
            })
            .unzip();
        let basis = if colour == 2 {
            MeasureBasis::Z
        } else {
            MeasureBasis::Y
        };
        a.tick();
        a.cnot_pairs(&folds);
        a.tick();
        a.measure(basis, &targets);
        a.tick();
        a.cnot_pairs(&folds);
    }
}

/// The qubit whose measurement record carries a check's outcome.
fn outcome_qubit(t: &Torus, ei: usize, colour: usize, heavy: bool) -> Qubit {
    if heavy {
        (t.n_data + ei) as Qubit
    } else {
        match colour {
            0 => t.edges[ei].v,
            1 => t.edges[ei].u,
            _ => t.edges[ei].v,
        }
    }
}

/// Emits one Reset or Measure layer per distinct basis in `kinds`.
fn emit_by_basis(a: &mut Assembler, kinds: &[PauliKind], reset: bool) {
    for kind in [PauliKind::X, PauliKind::Y, PauliKind::Z] {
        let qs: Vec<Qubit> = kinds
            .iter()
            .enumerate()
            .filter(|&(_, &k)| k == kind)
            .map(|(q, _)| q as Qubit)
            .collect();
        if qs.is_empty() {
            continue;
        }
        if reset {
            a.reset(basis_of(kind), &qs);
        } else {
            a.measure(basis_of(kind), &qs);
        }
    }
}

/// XOR-combines record reference lists: a record appearing an even number of
/// times cancels out of the comparison.
fn xor_refs(lists: &[&[usize]]) -> Vec<usize> {
    let mut acc: BTreeSet<usize> = BTreeSet::new();
    for list in lists {
        for &r in *list {
            if !acc.remove(&r) {
                acc.insert(r);
            }
        }
    }
    acc.into_iter().collect()
}

/// Builds the circuit; `keep == None` is the probe pass that only collects
/// boundary-detector candidates (per-check preparation anchors, first face
/// reconstructions, and readout closures), `Some(set)` emits the listed ones
/// as detectors. Both passes place measurements identically, so record
/// indices agree. Interior comparisons (consecutive reconstructions of the
/// same face) are always emitted; boundary candidates are kept only when the
/// exact stabilizer probe proves them deterministic, which is what makes the
/// schedule phase and readout-closure choices self-checking.
fn assemble(
    spec: &CodeSpec,
    t: &Torus,
    n: usize,
    heavy: bool,
    keep: Option<&BTreeSet<usize>>,
) -> (Circuit, Vec<Vec<usize>>) {
    let checks: Vec<PauliString> = t.edges.iter().map(|e| check_string(n, e)).collect();
    let face_ops: Vec<PauliString> = t
        .faces
        .iter()
        .map(|f| face_string(n, t, f))
        .collect();
    let prep_kinds = site_kinds(t, prep_frame(spec.memory_basis));
    let readout_kinds = site_kinds(t, readout_frame(spec.memory_basis, spec.rounds));

    let mut a = Assembler::new();
    for q in 0..t.n_data {
        a.coord(q as Qubit, (q % t.w2) as f64, (q / t.w2) as f64);
    }
    if heavy {
        for (ei, e) in t.edges.iter().enumerate() {
            a.coord((t.n_data + ei) as Qubit, e.mid.0, e.mid.1);
        }
    }

    emit_by_basis(&mut a, &prep_kinds, true);

    let mut rep = match spec.memory_basis {
        MemoryBasis::Z => column_logical(n, t),
        MemoryBasis::X => row_logical(n, t),
    };
    let mut frame: BTreeSet<usize> = BTreeSet::new();
    let mut latest: Vec<Option<usize>> = vec![None; t.edges.len()];
    let mut recon: Vec<Option<Vec<usize>>> = vec![None; t.faces.len()];
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut candidate =
        |a: &mut Assembler, candidates: &mut Vec<Vec<usize>>, coord: (f64, f64, f64), refs: Vec<usize>| {
            let idx = candidates.len();
            if keep.is_some_and(|kept| kept.contains(&idx)) {
                a.detector(coord, &refs);
            }
            candidates.push(refs);
        };

    let colours = schedule(spec);
    for (s, &c) in colours.iter().enumerate() {
        let pool = if s == 0 {
            // Preparation stabilizers, excluding the representative's own
            // sites: the prep state is a product state, so the seed
            // representative is itself a product of prep stabilizers and an
            // unrestricted solve could trivialize it. Later pools generate
            // the instantaneous stabilizer group, which contains no logical.
            let support: BTreeSet<usize> = rep.support().into_iter().collect();
            (0..t.n_data)
                .filter(|q| !support.contains(q))
                .map(|q| PoolItem {
                    op: PauliString::from_sparse(n, &[(q, prep_kinds[q])]).unwrap(),
                    records: Vec::new(),
                })
                .collect()
        } else {
            measurement_pool(t, &checks, &face_ops, colours[s - 1], &latest, &recon)
        };
        let incoming: Vec<&PauliString> =
            t.by_colour[c].iter().map(|&ei| &checks[ei]).collect();
        retarget(
            &mut rep,
            &mut frame,
            &pool,
            &incoming,
            &format!("sub-round {s}"),
        );

        emit_sub_round(&mut a, t, c, heavy);
        for &ei in &t.by_colour[c] {
            latest[ei] = Some(a.last(outcome_qubit(t, ei, c, heavy)));
        }

        if s == 0 {
            // The opening sub-round measures the checks the preparation
            // frame fixes (that is what the schedule phase arranges), so each
            // individual outcome is a detector comparing against preparation.
            for &ei in &t.by_colour[c] {
                let e = &t.edges[ei];
                candidate(
                    &mut a,
                    &mut candidates,
                    (e.mid.0, e.mid.1, 0.0),
                    vec![latest[ei].unwrap()],
                );
            }
        }

        // Faces of colour c+1 are bounded by colours c and c+2, measured in
        // this and the previous sub-round: a fresh reconstruction.
        for (fi, f) in t.faces.iter().enumerate() {
            if f.colour != (c + 1) % 3 || f.border.iter().any(|&ei| latest[ei].is_none()) {
                continue;
            }
            let refs: Vec<usize> = f.border.iter().map(|&ei| latest[ei].unwrap()).collect();
            let coord = (f.at.0, f.at.1, s as f64);
            match &recon[fi] {
                Some(prev) => {
                    let both: Vec<usize> = prev.iter().chain(&refs).copied().collect();
                    a.detector(coord, &both);
                }
                None => candidate(&mut a, &mut candidates, coord, refs.clone()),
            }
            recon[fi] = Some(refs);
        }
    }

    let last_colour = *colours.last().expect("at least one sub-round");
    let pool = measurement_pool(t, &checks, &face_ops, last_colour, &latest, &recon);
    align_for_readout(&mut rep, &mut frame, &pool, &readout_kinds, "final readout");

    a.tick();
    emit_by_basis(&mut a, &readout_kinds, false);
    let end = colours.len() as f64;

    // The readout frame matches the check kind of one colour (AllZ reads the
    // ZZ checks of colour 2, FramedX the framed-XX checks of colour 0), so
    // the transversal readout acts as one more check sub-round of that
    // colour: it re-measures each of its checks as a product of two readout
    // records, reads that colour's face fluxes directly as products of six,
    // and completes the next colour's faces the way an interior sub-round
    // would. Every closure is a gated candidate: whichever comparisons the
    // intervening sub-rounds left undisturbed survive the probe.
    let c_r = match readout_frame(spec.memory_basis, spec.rounds) {
        DataFrame::AllZ => 2,
        DataFrame::FramedX => 0,
    };
    for &ei in &t.by_colour[c_r] {
        let e = &t.edges[ei];
        let refs = vec![latest[ei].unwrap(), a.last(e.u), a.last(e.v)];
        candidate(&mut a, &mut candidates, (e.mid.0, e.mid.1, end), refs);
    }
    for (fi, f) in t.faces.iter().enumerate() {
        let readout: Vec<usize> = f.verts.iter().map(|&q| a.last(q)).collect();
        let fresh = if f.colour == c_r {
            Some(readout)
        } else if f.colour == (c_r + 1) % 3 {
            let stale_colour = (c_r + 2) % 3;
            let mut refs = readout;
            let mut complete = true;
            for &ei in &f.border {
                if t.edges[ei].colour != stale_colour {
                    continue;
                }
                match latest[ei] {
                    Some(r) => refs.push(r),
                    None => complete = false,
                }
            }
            complete.then_some(refs)
        } else {
            None
        };
        let Some(fresh) = fresh else { continue };
        let prev: &[usize] = recon[fi].as_deref().unwrap_or(&[]);
        let refs = xor_refs(&[prev, &fresh]);
        if !refs.is_empty() {
            candidate(&mut a, &mut candidates, (f.at.0, f.at.1, end), refs);
        }
    }

    let mut obs: Vec<usize> = frame.iter().copied().collect();
    for q in rep.support() {
        debug_assert_eq!(rep.get(q).unwrap(), readout_kinds[q], "representative readable");
        obs.push(a.last(q as Qubit));
    }
    a.observable(spec.memory_basis.observable_label(), &obs);

    (a.finish(), candidates)
}

pub(super) fn build(spec: &CodeSpec) -> Result<Built, CodesError> {
    let (w, h) = torus_dims(spec.distance)?;
    let t = torus(w, h);
    let heavy = spec.family == CodeFamily::HoneycombHeavyhex;
    let n = t.n_data + if heavy { t.edges.len() } else { 0 };

    // Probe pass: gather first-reconstruction candidates, keep only those
    // the exact stabilizer simulation proves deterministically zero, then
    // rebuild with the surviving anchors in place.
    let (probe, candidates) = assemble(spec, &t, n, heavy, None);
    let analysis = CircuitAnalysis::analyze(&probe);
    let kept: BTreeSet<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, refs)| analysis.deterministic_parity(refs) == Some(false))
        .map(|(i, _)| i)
        .collect();
    let (circuit, _) = assemble(spec, &t, n, heavy, Some(&kept));

    let mut roles = vec![QubitRole::Data; t.n_data];
    roles.resize(n, QubitRole::Syndrome);

    let checks: Vec<PauliString> = t.edges.iter().map(|e| check_string(n, e)).collect();
    let face_ops: Vec<PauliString> = t
        .faces
        .iter()
        .map(|f| face_string(n, &t, f))
        .collect();
    let stabilizer_period = (0..3)
        .map(|c| {
            face_ops
                .iter()
                .cloned()
                .chain(t.by_colour[c].iter().map(|&ei| checks[ei].clone()))
                .collect()
        })
        .collect();

    Ok(Built {
        circuit,
        roles,
        x_logical: row_logical(n, &t),
        z_logical: double_column_logical(n, &t),
        stabilizer_period,
    })
}
