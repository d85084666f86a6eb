//! Exact graded linear algebra over F2[U].
//!
//! A [`FreeComplex`] is a finitely generated free graded chain complex over
//! F2[U], where U has degree -2 and the differential drops grading by one.
//! Homogeneity forces every matrix entry to be a single monomial `U^k`, so
//! sparse matrices store just the power. [`homology`] decomposes the homology
//! into one `F2[U]`-tower per free summand plus a multiset of finite
//! `F2[U]/U^l` towers, by a column reduction: columns are reduced against each
//! other until every nonzero column has a distinct pivot row, pivots chosen
//! with minimal U-power (ties by generator-list order).

use crate::f2::{AffineSystem, BitRow};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

pub type Grading = i32;

/// A homogeneous element of a free F2[U]-module: generator index -> U-power.
/// All terms of a homogeneous vector share the same total grading.
pub type FVec = BTreeMap<usize, u32>;

/// XOR a term into a homogeneous vector. Two occurrences of the same
/// generator must carry the same power; they cancel.
pub fn fvec_add_term(v: &mut FVec, gen: usize, pow: u32) {
    match v.entry(gen) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(pow);
        }
        std::collections::btree_map::Entry::Occupied(e) => {
            debug_assert_eq!(*e.get(), pow, "inhomogeneous vector");
            e.remove();
        }
    }
}

pub fn fvec_add(a: &mut FVec, b: &FVec) {
    for (&g, &p) in b {
        fvec_add_term(a, g, p);
    }
}

/// Multiply by U^k.
pub fn fvec_shift(v: &FVec, k: u32) -> FVec {
    v.iter().map(|(&g, &p)| (g, p + k)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generator {
    pub id: String,
    pub grading: Grading,
}

/// Sparse grading-homogeneous matrix: `(target, source) -> U-power`.
pub type MonomialMatrix = BTreeMap<(usize, usize), u32>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeComplex {
    gens: Vec<Generator>,
    /// differential entries keyed by (target generator, source generator)
    diff: MonomialMatrix,
}

/// A structural defect found by validation.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("duplicate generator id `{0}`")]
    DuplicateId(String),
    #[error("entry references generator index {0} out of range")]
    BadIndex(usize),
    #[error("entry U^{pow} from `{src}` to `{tgt}` breaks homogeneity: need grading({tgt}) = grading({src}) - 1 + 2*{pow}")]
    Inhomogeneous { src: String, tgt: String, pow: u32 },
    #[error("d∘d ≠ 0: composite has a term from `{src}` to `{tgt}`")]
    SquareNonzero { src: String, tgt: String },
    #[error("map entry U^{pow} from `{src}` to `{tgt}` breaks homogeneity for degree {degree}")]
    MapInhomogeneous {
        src: String,
        tgt: String,
        pow: u32,
        degree: i32,
    },
    #[error("map endpoints do not match the given complexes")]
    EndpointMismatch,
}

impl FreeComplex {
    /// Build and validate a complex. `diff` is keyed by (target, source).
    pub fn new(gens: Vec<Generator>, diff: MonomialMatrix) -> Result<Self, Violation> {
        let c = FreeComplex { gens, diff };
        c.validate()?;
        Ok(c)
    }

    /// Build without validation; used internally by constructions whose
    /// output is validated by their own tests.
    pub(crate) fn new_unchecked(gens: Vec<Generator>, diff: MonomialMatrix) -> Self {
        FreeComplex { gens, diff }
    }

    pub fn gens(&self) -> &[Generator] {
        &self.gens
    }

    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn grading(&self, i: usize) -> Grading {
        self.gens[i].grading
    }

    pub fn diff_entries(&self) -> &MonomialMatrix {
        &self.diff
    }

    pub fn gen_index(&self, id: &str) -> Option<usize> {
        self.gens.iter().position(|g| g.id == id)
    }

    /// The differential of one generator, as a homogeneous vector.
    pub fn diff_of(&self, src: usize) -> FVec {
        let mut v = FVec::new();
        for (&(t, s), &p) in &self.diff {
            if s == src {
                fvec_add_term(&mut v, t, p);
            }
        }
        v
    }

    /// Apply the differential to a homogeneous vector.
    pub fn apply_diff(&self, v: &FVec) -> FVec {
        let mut out = FVec::new();
        for (&g, &p) in v {
            for (t, q) in self.diff_of(g) {
                fvec_add_term(&mut out, t, q + p);
            }
        }
        out
    }

    /// Check both complex invariants: homogeneity of every entry, and d∘d = 0.
    pub fn validate(&self) -> Result<(), Violation> {
        let mut seen = HashMap::new();
        for g in &self.gens {
            if seen.insert(g.id.clone(), ()).is_some() {
                return Err(Violation::DuplicateId(g.id.clone()));
            }
        }
        for (&(t, s), &p) in &self.diff {
            if t >= self.gens.len() {
                return Err(Violation::BadIndex(t));
            }
            if s >= self.gens.len() {
                return Err(Violation::BadIndex(s));
            }
            if self.grading(t) != self.grading(s) - 1 + 2 * p as Grading {
                return Err(Violation::Inhomogeneous {
                    src: self.gens[s].id.clone(),
                    tgt: self.gens[t].id.clone(),
                    pow: p,
                });
            }
        }
        // d∘d = 0 over F2[U]: compose entrywise.
        let mut square: BTreeMap<(usize, usize, u32), bool> = BTreeMap::new();
        for (&(t, s), &p) in &self.diff {
            for (&(t2, s2), &p2) in &self.diff {
                if s2 == t {
                    let e = square.entry((t2, s, p + p2)).or_insert(false);
                    *e = !*e;
                }
            }
        }
        for ((t, s, _), odd) in square {
            if odd {
                return Err(Violation::SquareNonzero {
                    src: self.gens[s].id.clone(),
                    tgt: self.gens[t].id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn min_grading(&self) -> Option<Grading> {
        self.gens.iter().map(|g| g.grading).min()
    }

    pub fn max_grading(&self) -> Option<Grading> {
        self.gens.iter().map(|g| g.grading).max()
    }

    /// F2-basis slots of the grading-`d` piece: (generator, U-power) pairs.
    pub fn slots_at(&self, d: Grading) -> Vec<(usize, u32)> {
        let mut out = Vec::new();
        for (i, g) in self.gens.iter().enumerate() {
            let diff = g.grading - d;
            if diff >= 0 && diff % 2 == 0 {
                out.push((i, (diff / 2) as u32));
            }
        }
        out
    }
}

/// Grading-homogeneous U-equivariant map between free complexes, of a fixed
/// degree. Entries are keyed by (target generator, source generator).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GradedMap {
    pub degree: i32,
    pub entries: MonomialMatrix,
}

impl GradedMap {
    pub fn zero(degree: i32) -> Self {
        GradedMap {
            degree,
            entries: MonomialMatrix::new(),
        }
    }

    pub fn identity(c: &FreeComplex) -> Self {
        GradedMap {
            degree: 0,
            entries: (0..c.n_gens()).map(|i| ((i, i), 0)).collect(),
        }
    }

    pub fn from_entries(degree: i32, entries: impl IntoIterator<Item = (usize, usize, u32)>) -> Self {
        GradedMap {
            degree,
            entries: entries.into_iter().map(|(t, s, p)| ((t, s), p)).collect(),
        }
    }

    /// Entries as (target, source, power) triples.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.entries.iter().map(|(&(t, s), &p)| (t, s, p))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn apply(&self, v: &FVec) -> FVec {
        let mut out = FVec::new();
        for (&g, &p) in v {
            for (&(t, s), &q) in &self.entries {
                if s == g {
                    fvec_add_term(&mut out, t, p + q);
                }
            }
        }
        out
    }

    pub fn apply_gen(&self, src: usize) -> FVec {
        let mut out = FVec::new();
        for (&(t, s), &q) in &self.entries {
            if s == src {
                fvec_add_term(&mut out, t, q);
            }
        }
        out
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &GradedMap) -> GradedMap {
        let mut acc: BTreeMap<(usize, usize, u32), bool> = BTreeMap::new();
        for (&(t1, s1), &p1) in &other.entries {
            for (&(t2, s2), &p2) in &self.entries {
                if s2 == t1 {
                    let e = acc.entry((t2, s1, p1 + p2)).or_insert(false);
                    *e = !*e;
                }
            }
        }
        let mut entries = MonomialMatrix::new();
        for ((t, s, p), odd) in acc {
            if odd {
                let prev = entries.insert((t, s), p);
                debug_assert!(prev.is_none(), "inhomogeneous composite");
            }
        }
        GradedMap {
            degree: self.degree + other.degree,
            entries,
        }
    }

    pub fn add(&self, other: &GradedMap) -> GradedMap {
        debug_assert_eq!(self.degree, other.degree);
        let mut entries = self.entries.clone();
        for (&k, &p) in &other.entries {
            match entries.entry(k) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(p);
                }
                std::collections::btree_map::Entry::Occupied(e) => {
                    debug_assert_eq!(*e.get(), p);
                    e.remove();
                }
            }
        }
        GradedMap {
            degree: self.degree,
            entries,
        }
    }

    /// Homogeneity check relative to a source and target complex.
    pub fn check_homogeneous(
        &self,
        src: &FreeComplex,
        tgt: &FreeComplex,
    ) -> Result<(), Violation> {
        for (&(t, s), &p) in &self.entries {
            if s >= src.n_gens() || t >= tgt.n_gens() {
                return Err(Violation::EndpointMismatch);
            }
            if tgt.grading(t) != src.grading(s) + self.degree + 2 * p as Grading {
                return Err(Violation::MapInhomogeneous {
                    src: src.gens()[s].id.clone(),
                    tgt: tgt.gens()[t].id.clone(),
                    pow: p,
                    degree: self.degree,
                });
            }
        }
        Ok(())
    }
}

/// `d_tgt ∘ f = f ∘ d_src` as an identity of monomial matrices.
pub fn is_chain_map(f: &GradedMap, src: &FreeComplex, tgt: &FreeComplex) -> bool {
    let df = GradedMap {
        degree: -1,
        entries: tgt.diff_entries().clone(),
    }
    .compose(f);
    let fd = f.compose(&GradedMap {
        degree: -1,
        entries: src.diff_entries().clone(),
    });
    df.entries == fd.entries
}

/// One infinite tower plus a multiset of finite torsion towers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomologyDecomposition {
    /// Top grading of the infinite tower; `None` when the localized homology
    /// vanishes. Complexes with more than one tower are reported through
    /// [`HomologyBasis::towers`].
    pub tower_top: Option<Grading>,
    /// (top grading, length), sorted by (grading desc, length desc).
    pub torsion: Vec<(Grading, u32)>,
}

impl HomologyDecomposition {
    pub fn torsion_lengths(&self) -> Vec<u32> {
        let mut l: Vec<u32> = self.torsion.iter().map(|&(_, l)| l).collect();
        l.sort_unstable();
        l
    }
}

impl fmt::Display for HomologyDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tower_top {
            Some(t) => write!(f, "F[U]({t})")?,
            None => write!(f, "0")?,
        }
        for &(d, l) in &self.torsion {
            write!(f, " + F[U]/U^{l}({d})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TowerClass {
    pub grading: Grading,
    pub rep: FVec,
}

#[derive(Clone, Debug)]
pub struct TorsionClass {
    pub grading: Grading,
    pub length: u32,
    pub rep: FVec,
}

/// Homology decomposition together with representative cycles, supporting
/// expression of arbitrary cycles in the canonical class basis.
#[derive(Clone, Debug)]
pub struct HomologyBasis {
    pub towers: Vec<TowerClass>,
    pub torsion: Vec<TorsionClass>,
}

impl HomologyBasis {
    pub fn decomposition(&self) -> HomologyDecomposition {
        let mut torsion: Vec<(Grading, u32)> =
            self.torsion.iter().map(|t| (t.grading, t.length)).collect();
        torsion.sort_by(|a, b| b.cmp(a));
        let tower_top = match self.towers.len() {
            0 => None,
            _ => Some(self.towers.iter().map(|t| t.grading).max().unwrap()),
        };
        HomologyDecomposition { tower_top, torsion }
    }

    pub fn n_classes(&self) -> usize {
        self.towers.len() + self.torsion.len()
    }

    /// Grading of basis class `i` (towers first, then torsion).
    pub fn class_grading(&self, i: usize) -> Grading {
        if i < self.towers.len() {
            self.towers[i].grading
        } else {
            self.torsion[i - self.towers.len()].grading
        }
    }

    pub fn class_rep(&self, i: usize) -> &FVec {
        if i < self.towers.len() {
            &self.towers[i].rep
        } else {
            &self.torsion[i - self.towers.len()].rep
        }
    }

    /// Whether `U^delta * class_i` is nonzero.
    pub fn class_alive(&self, i: usize, delta: u32) -> bool {
        if i < self.towers.len() {
            true
        } else {
            delta < self.torsion[i - self.towers.len()].length
        }
    }
}

fn pivot_of(col: &FVec, pos: &[usize]) -> Option<(usize, u32)> {
    col.iter()
        .map(|(&g, &p)| (g, p))
        .min_by_key(|&(g, p)| (p, pos[g]))
}

/// Column reduction of a monomial matrix over F2[U]: columns are modified by
/// adding `U^δ`-multiples of other columns (δ >= 0 by the pivot rule) until
/// every nonzero column has a distinct pivot row. Pivots take the entry of
/// minimal U-power, ties broken by `pos` (grading order, then generator-list
/// order). Returns `pivot row -> (column, power)`. When `extra` columns are
/// supplied they are combined under the same operations (used to carry the
/// source combination `V` with `R = dV`).
fn column_reduce(
    cols: &mut [FVec],
    mut extra: Option<&mut Vec<FVec>>,
    pos: &[usize],
) -> HashMap<usize, (usize, u32)> {
    let mut owner: HashMap<usize, (usize, u32)> = HashMap::new();
    let mut queue: VecDeque<usize> = (0..cols.len()).collect();
    while let Some(g) = queue.pop_front() {
        loop {
            let Some((row, k)) = pivot_of(&cols[g], pos) else {
                break;
            };
            match owner.get(&row).copied() {
                None => {
                    owner.insert(row, (g, k));
                    break;
                }
                Some((g2, k2)) => {
                    if k >= k2 {
                        let shift = k - k2;
                        let add = fvec_shift(&cols[g2], shift);
                        let mut cg = cols[g].clone();
                        fvec_add(&mut cg, &add);
                        cols[g] = cg;
                        if let Some(vs) = extra.as_deref_mut() {
                            let addv = fvec_shift(&vs[g2], shift);
                            let mut vg = vs[g].clone();
                            fvec_add(&mut vg, &addv);
                            vs[g] = vg;
                        }
                    } else {
                        owner.insert(row, (g, k));
                        queue.push_back(g2);
                        break;
                    }
                }
            }
        }
    }
    owner
}

/// Express a homogeneous vector `z` of grading `d` in an F2[U]-spanning set
/// (each spanning vector homogeneous of its own grading): coefficients are
/// monomials with the power implied by gradings. `None` if infeasible.
fn express_in_span(
    span: &[(FVec, Grading)],
    z: &FVec,
    d: Grading,
    slot_of: impl Fn(usize, u32) -> Option<usize>,
    n_slots: usize,
) -> Option<BitRow> {
    let mut alive: Vec<(usize, FVec)> = Vec::new();
    for (i, (v, gv)) in span.iter().enumerate() {
        let diff = gv - d;
        if diff >= 0 && diff % 2 == 0 {
            alive.push((i, fvec_shift(v, (diff / 2) as u32)));
        }
    }
    let mut eqs: Vec<BitRow> = (0..n_slots).map(|_| BitRow::zeros(alive.len())).collect();
    let mut rhs = vec![false; n_slots];
    for (ci, (_, v)) in alive.iter().enumerate() {
        for (&g, &p) in v {
            eqs[slot_of(g, p).expect("span term off-grading")].flip(ci);
        }
    }
    for (&g, &p) in z {
        rhs[slot_of(g, p)?] ^= true;
    }
    let mut sys = AffineSystem::new(alive.len());
    for (row, r) in eqs.into_iter().zip(rhs) {
        sys.add_constraint(row, r);
    }
    let sol = sys.particular_solution()?;
    let mut out = BitRow::zeros(span.len());
    for (ci, (i, _)) in alive.iter().enumerate() {
        if sol.get(ci) {
            out.set(*i, sol.get(ci));
        }
    }
    Some(out)
}

/// Homology with representative cycles in the canonical decomposition basis.
///
/// Two phases: first the boundary columns are reduced, giving a free basis of
/// the cycle module (the `V`-columns of the zero reduced columns) and a set
/// of relation columns. The relations are then rewritten in the cycle basis
/// and that presentation matrix is reduced again; a pivot `U^k` in row `i`
/// contributes a torsion tower of length `k` topped at the row grading, and
/// unpivoted cycle-basis rows contribute infinite towers.
pub fn homology_basis(c: &FreeComplex) -> HomologyBasis {
    let n = c.n_gens();
    let mut pos: Vec<usize> = vec![0; n];
    {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (-(c.grading(i) as i64), i));
        for (r, &g) in order.iter().enumerate() {
            pos[g] = r;
        }
    }
    let mut cols: Vec<FVec> = (0..n).map(|g| c.diff_of(g)).collect();
    let mut vcols: Vec<FVec> = (0..n)
        .map(|g| {
            let mut v = FVec::new();
            v.insert(g, 0);
            v
        })
        .collect();
    column_reduce(&mut cols, Some(&mut vcols), &pos);

    // Kernel basis: V-columns of zero reduced columns. Relations: the
    // remaining reduced columns.
    let mut kernel: Vec<(FVec, Grading)> = Vec::new();
    let mut relations: Vec<(FVec, Grading)> = Vec::new();
    for g in 0..n {
        if cols[g].is_empty() {
            kernel.push((vcols[g].clone(), c.grading(g)));
        } else {
            relations.push((cols[g].clone(), c.grading(g) - 1));
        }
    }

    // Rewrite each relation in kernel coordinates, one slot space per
    // grading.
    let mut rel_in_kernel: Vec<FVec> = Vec::new();
    for (r, d) in &relations {
        let slots = c.slots_at(*d);
        let slot_index: HashMap<(usize, u32), usize> =
            slots.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let coeffs = express_in_span(
            &kernel,
            r,
            *d,
            |g, p| slot_index.get(&(g, p)).copied(),
            slots.len(),
        )
        .expect("relation columns are cycles");
        let mut v = FVec::new();
        for i in coeffs.iter_set() {
            v.insert(i, ((kernel[i].1 - d) / 2) as u32);
        }
        rel_in_kernel.push(v);
    }

    // Reduce the presentation matrix; rows are kernel basis indices.
    let kpos: Vec<usize> = {
        let mut order: Vec<usize> = (0..kernel.len()).collect();
        order.sort_by_key(|&i| (-(kernel[i].1 as i64), i));
        let mut p = vec![0; kernel.len()];
        for (r, &i) in order.iter().enumerate() {
            p[i] = r;
        }
        p
    };
    let owner = column_reduce(&mut rel_in_kernel, None, &kpos);

    let mut towers = Vec::new();
    let mut torsion = Vec::new();
    let mut pivoted = vec![false; kernel.len()];
    for (&row, &(col, k)) in &owner {
        pivoted[row] = true;
        if k == 0 {
            // the class dies immediately; no torsion tower
            continue;
        }
        // rep = U^{-k} * (relation column in kernel coordinates), pushed back
        // down to chain level
        let mut rep = FVec::new();
        for (&ki, &p) in &rel_in_kernel[col] {
            let shifted = fvec_shift(&kernel[ki].0, p - k);
            fvec_add(&mut rep, &shifted);
        }
        torsion.push(TorsionClass {
            grading: kernel[row].1,
            length: k,
            rep,
        });
    }
    for (i, (v, d)) in kernel.iter().enumerate() {
        if !pivoted[i] {
            towers.push(TowerClass {
                grading: *d,
                rep: v.clone(),
            });
        }
    }
    towers.sort_by_key(|t| -(t.grading as i64));
    torsion.sort_by_key(|t| (-(t.grading as i64), std::cmp::Reverse(t.length)));
    HomologyBasis { towers, torsion }
}

/// The unique decomposition of `H_*(c)` as a graded F2[U]-module.
pub fn homology(c: &FreeComplex) -> HomologyDecomposition {
    homology_basis(c).decomposition()
}

/// Coefficients of a homology class in a [`HomologyBasis`]: one bit per basis
/// class, the U-shift being implied by the grading.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassExpr {
    pub grading: Grading,
    pub coeffs: Vec<bool>,
}

impl ClassExpr {
    pub fn zero(grading: Grading, basis: &HomologyBasis) -> Self {
        ClassExpr {
            grading,
            coeffs: vec![false; basis.n_classes()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| !c)
    }

    /// Tower coefficients only.
    pub fn tower_part(&self, basis: &HomologyBasis) -> Vec<bool> {
        self.coeffs[..basis.towers.len()].to_vec()
    }
}

/// Express the class of a cycle `z` (homogeneous of grading `d`) in the
/// canonical basis: `z = Σ c_i U^{δ_i} rep_i + d(w)`. Returns `None` if `z`
/// is not a cycle or the system is infeasible (which indicates a bug).
pub fn express_class(
    c: &FreeComplex,
    basis: &HomologyBasis,
    z: &FVec,
    d: Grading,
) -> Option<ClassExpr> {
    if !c.apply_diff(z).is_empty() {
        return None;
    }
    let slots = c.slots_at(d);
    let slot_index: HashMap<(usize, u32), usize> =
        slots.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let wslots = c.slots_at(d + 1);

    // Unknowns: one per alive basis class, then one per w-slot.
    let mut class_cols: Vec<(usize, FVec)> = Vec::new(); // (class idx, shifted rep)
    for i in 0..basis.n_classes() {
        let top = basis.class_grading(i);
        let diff = top - d;
        if diff < 0 || diff % 2 != 0 {
            continue;
        }
        let delta = (diff / 2) as u32;
        if !basis.class_alive(i, delta) {
            continue;
        }
        class_cols.push((i, fvec_shift(basis.class_rep(i), delta)));
    }
    let ncols = class_cols.len() + wslots.len();
    let mut eqs: HashMap<usize, BitRow> = HashMap::new(); // slot -> row
    let mut rhs: HashMap<usize, bool> = HashMap::new();
    let mut touch = |slot: usize, col: usize, eqs: &mut HashMap<usize, BitRow>| {
        eqs.entry(slot)
            .or_insert_with(|| BitRow::zeros(ncols))
            .flip(col);
    };
    for (ci, (_, rep)) in class_cols.iter().enumerate() {
        for (&g, &p) in rep {
            let slot = *slot_index.get(&(g, p)).expect("rep term off-grading");
            touch(slot, ci, &mut eqs);
        }
    }
    for (wi, &(wg, wp)) in wslots.iter().enumerate() {
        for (t, q) in c.diff_of(wg) {
            let slot = *slot_index.get(&(t, q + wp)).expect("diff off-grading");
            touch(slot, class_cols.len() + wi, &mut eqs);
        }
    }
    for (&g, &p) in z {
        let slot = *slot_index.get(&(g, p))?;
        *rhs.entry(slot).or_insert(false) ^= true;
    }
    let mut sys = AffineSystem::new(ncols);
    for slot in 0..slots.len() {
        let row = eqs.remove(&slot).unwrap_or_else(|| BitRow::zeros(ncols));
        let r = rhs.get(&slot).copied().unwrap_or(false);
        sys.add_constraint(row, r);
    }
    let sol = sys.particular_solution()?;
    let mut coeffs = vec![false; basis.n_classes()];
    for (ci, (class, _)) in class_cols.iter().enumerate() {
        if sol.get(ci) {
            coeffs[*class] = true;
        }
    }
    Some(ClassExpr {
        grading: d,
        coeffs,
    })
}

/// Errors for operations on maps between complexes.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MapError {
    #[error("map is not a chain map")]
    NotChainMap,
    #[error("map is not grading-homogeneous: {0}")]
    NotHomogeneous(Violation),
    #[error("localized degree needs degree-0 maps, got degree {0}")]
    WrongDegree(i32),
    #[error("source has no infinite tower")]
    SourceNoTower,
    #[error("target has no infinite tower")]
    TargetNoTower,
    #[error("tower gradings differ: source {0}, target {1}")]
    TowerGradingMismatch(Grading, Grading),
}

/// The scalar by which a degree-0 chain map acts on the localized homology,
/// for complexes with a single tower in the same top grading.
pub fn localized_degree(
    f: &GradedMap,
    src: &FreeComplex,
    tgt: &FreeComplex,
) -> Result<bool, MapError> {
    f.check_homogeneous(src, tgt)
        .map_err(MapError::NotHomogeneous)?;
    if f.degree != 0 {
        return Err(MapError::WrongDegree(f.degree));
    }
    if !is_chain_map(f, src, tgt) {
        return Err(MapError::NotChainMap);
    }
    let hb_src = homology_basis(src);
    let hb_tgt = homology_basis(tgt);
    let ts = hb_src.towers.first().ok_or(MapError::SourceNoTower)?;
    let tt = hb_tgt.towers.first().ok_or(MapError::TargetNoTower)?;
    if ts.grading != tt.grading {
        return Err(MapError::TowerGradingMismatch(ts.grading, tt.grading));
    }
    let image = f.apply(&ts.rep);
    let expr = express_class(tgt, &hb_tgt, &image, ts.grading).expect("image of cycle is a cycle");
    Ok(expr.coeffs[..hb_tgt.towers.len()].iter().any(|&b| b))
}

/// Matrix of the induced map on homology, one [`ClassExpr`] per source basis
/// class (towers first, then torsion).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InducedMap {
    pub degree: i32,
    pub cols: Vec<ClassExpr>,
}

pub fn induced_homology_map(
    f: &GradedMap,
    src: &FreeComplex,
    tgt: &FreeComplex,
) -> Result<InducedMap, MapError> {
    f.check_homogeneous(src, tgt)
        .map_err(MapError::NotHomogeneous)?;
    if !is_chain_map(f, src, tgt) {
        return Err(MapError::NotChainMap);
    }
    let hb_src = homology_basis(src);
    let hb_tgt = homology_basis(tgt);
    let mut cols = Vec::new();
    for i in 0..hb_src.n_classes() {
        let d = hb_src.class_grading(i) + f.degree;
        let image = f.apply(hb_src.class_rep(i));
        let expr = express_class(tgt, &hb_tgt, &image, d).expect("image of cycle is a cycle");
        cols.push(expr);
    }
    Ok(InducedMap {
        degree: f.degree,
        cols,
    })
}

/// Compose induced maps `g_* ∘ f_*` in the basis of `mid`/`tgt`, dropping
/// terms that die of torsion. Used by tests for the functoriality property.
pub fn compose_induced(
    g: &InducedMap,
    f: &InducedMap,
    mid_basis: &HomologyBasis,
    tgt_basis: &HomologyBasis,
) -> InducedMap {
    let mut cols = Vec::new();
    for fc in &f.cols {
        let d = fc.grading + g.degree;
        let mut coeffs = vec![false; tgt_basis.n_classes()];
        for (i, &ci) in fc.coeffs.iter().enumerate() {
            if !ci {
                continue;
            }
            // f sent the source class to U^δ * (mid class i); apply g's column
            // for class i, then shift by δ and prune dead torsion.
            let delta = ((mid_basis.class_grading(i) - fc.grading) / 2) as u32;
            let gc = &g.cols[i];
            for (j, &cj) in gc.coeffs.iter().enumerate() {
                if !cj {
                    continue;
                }
                let total = ((tgt_basis.class_grading(j) - d) / 2) as u32;
                debug_assert_eq!(
                    tgt_basis.class_grading(j) - gc.grading,
                    (total - delta) as i32 * 2
                );
                if tgt_basis.class_alive(j, total) {
                    coeffs[j] ^= true;
                }
            }
        }
        cols.push(ClassExpr { grading: d, coeffs });
    }
    InducedMap {
        degree: g.degree + f.degree,
        cols,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn complex(gens: &[(&str, Grading)], diff: &[(&str, &str, u32)]) -> FreeComplex {
        let gens: Vec<Generator> = gens
            .iter()
            .map(|&(id, gr)| Generator {
                id: id.to_string(),
                grading: gr,
            })
            .collect();
        let find = |id: &str| gens.iter().position(|g| g.id == id).unwrap();
        let diff = diff
            .iter()
            .map(|&(src, tgt, p)| ((find(tgt), find(src)), p))
            .collect();
        FreeComplex::new(gens, diff).unwrap()
    }

    fn x_complex(i: u32) -> FreeComplex {
        complex(
            &[("v", 0), ("iv", 0), ("a", -(2 * i as Grading) + 1)],
            &[("a", "v", i), ("a", "iv", i)],
        )
    }

    #[test]
    fn validate_examples() {
        // X_1 is valid.
        x_complex(1).validate().unwrap();
        // A single closed generator is valid.
        complex(&[("x", 0)], &[]).validate().unwrap();
        // d(b) = a with both in grading 0 breaks homogeneity.
        let gens = vec![
            Generator {
                id: "a".into(),
                grading: 0,
            },
            Generator {
                id: "b".into(),
                grading: 0,
            },
        ];
        let mut diff = MonomialMatrix::new();
        diff.insert((0, 1), 0);
        let err = FreeComplex::new(gens, diff).unwrap_err();
        assert!(matches!(err, Violation::Inhomogeneous { .. }));
    }

    #[test]
    fn homology_of_x_family() {
        for i in 1..=4u32 {
            let h = homology(&x_complex(i));
            assert_eq!(h.tower_top, Some(0));
            assert_eq!(h.torsion, vec![(0, i)]);
        }
    }

    #[test]
    fn homology_small_cases() {
        let h = homology(&complex(&[("x", 0)], &[]));
        assert_eq!(h.tower_top, Some(0));
        assert!(h.torsion.is_empty());

        // Acyclic two-step complex.
        let h = homology(&complex(&[("a", 0), ("b", 1)], &[("b", "a", 0)]));
        assert_eq!(h.tower_top, None);
        assert!(h.torsion.is_empty());

        // Zero complex.
        let h = homology(&FreeComplex::new(vec![], MonomialMatrix::new()).unwrap());
        assert_eq!(h.tower_top, None);
        assert!(h.torsion.is_empty());
    }

    #[test]
    fn homology_mixed_powers_picks_min_pivot() {
        // d(b) = U^2 a + U c with gradings a: 0, c: -2, b: -3.
        let c = complex(&[("a", 0), ("c", -2), ("b", -3)], &[("b", "a", 2), ("b", "c", 1)]);
        let h = homology(&c);
        assert_eq!(h.tower_top, Some(0));
        assert_eq!(h.torsion, vec![(-2, 1)]);
    }

    #[test]
    fn chain_map_examples() {
        let x1 = x_complex(1);
        let triv = complex(&[("x", 0)], &[]);
        assert!(is_chain_map(&GradedMap::identity(&x1), &x1, &x1));
        // v, iv -> x, a -> 0.
        let f = GradedMap::from_entries(0, [(0, 0, 0), (0, 1, 0)]);
        assert!(is_chain_map(&f, &x1, &triv));
        // x -> v is a chain map (v is closed).
        let g = GradedMap::from_entries(0, [(0, 0, 0)]);
        assert!(is_chain_map(&g, &triv, &x1));
        // v -> a is not even homogeneous.
        let bad = GradedMap::from_entries(0, [(2, 0, 0)]);
        assert!(bad.check_homogeneous(&x1, &x1).is_err());
    }

    #[test]
    fn localized_degree_examples() {
        let x1 = x_complex(1);
        let triv = complex(&[("x", 0)], &[]);
        let f = GradedMap::from_entries(0, [(0, 0, 0), (0, 1, 0)]);
        assert_eq!(localized_degree(&f, &x1, &triv), Ok(true));
        // x -> v + iv is U-torsion in homology.
        let g = GradedMap::from_entries(0, [(0, 0, 0), (1, 0, 0)]);
        assert_eq!(localized_degree(&g, &triv, &x1), Ok(false));
        // zero map on the trivial complex
        assert_eq!(localized_degree(&GradedMap::zero(0), &triv, &triv), Ok(false));
    }

    #[test]
    fn induced_map_examples() {
        let x1 = x_complex(1);
        // iota on X_1: swap v, iv; fix a.
        let iota = GradedMap::from_entries(0, [(1, 0, 0), (0, 1, 0), (2, 2, 0)]);
        let hb = homology_basis(&x1);
        assert_eq!(hb.towers.len(), 1);
        assert_eq!(hb.torsion.len(), 1);
        let ind = induced_homology_map(&iota, &x1, &x1).unwrap();
        // In basis (tower [v], torsion [v + iv]): iota_*[v] = [v] + [v+iv],
        // iota_* fixes the torsion class.
        assert_eq!(ind.cols[0].coeffs, vec![true, true]);
        assert_eq!(ind.cols[1].coeffs, vec![false, true]);

        let id = GradedMap::identity(&x1);
        let ind_id = induced_homology_map(&id, &x1, &x1).unwrap();
        assert_eq!(ind_id.cols[0].coeffs, vec![true, false]);
        assert_eq!(ind_id.cols[1].coeffs, vec![false, true]);

        // f: X_1 -> trivial sends [v] to [x] and kills the torsion class.
        let triv = complex(&[("x", 0)], &[]);
        let f = GradedMap::from_entries(0, [(0, 0, 0), (0, 1, 0)]);
        let ind_f = induced_homology_map(&f, &x1, &triv).unwrap();
        assert_eq!(ind_f.cols[0].coeffs, vec![true]);
        assert_eq!(ind_f.cols[1].coeffs, vec![false]);
    }

    #[test]
    fn functoriality_of_induced_maps() {
        let x1 = x_complex(1);
        let triv = complex(&[("x", 0)], &[]);
        let iota = GradedMap::from_entries(0, [(1, 0, 0), (0, 1, 0), (2, 2, 0)]);
        let f = GradedMap::from_entries(0, [(0, 0, 0), (0, 1, 0)]);
        let hb_x = homology_basis(&x1);
        let hb_t = homology_basis(&triv);
        let fi = f.compose(&iota);
        let lhs = induced_homology_map(&fi, &x1, &triv).unwrap();
        let rhs = compose_induced(
            &induced_homology_map(&f, &x1, &triv).unwrap(),
            &induced_homology_map(&iota, &x1, &x1).unwrap(),
            &hb_x,
            &hb_t,
        );
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn localized_degree_additive() {
        let x1 = x_complex(1);
        let triv = complex(&[("x", 0)], &[]);
        let f = GradedMap::from_entries(0, [(0, 0, 0), (0, 1, 0)]);
        for g in [GradedMap::zero(0), f.clone()] {
            let sum = f.add(&g);
            let df = localized_degree(&f, &x1, &triv).unwrap();
            let dg = localized_degree(&g, &x1, &triv).unwrap();
            let ds = localized_degree(&sum, &x1, &triv).unwrap();
            assert_eq!(ds, df ^ dg);
        }
    }

    /// Truncated brute-force homology: F2 row reduction per grading on the
    /// complex cut off at U^N, returning per-grading dimensions and the ranks
    /// of U^k acting on homology. Independent of the reduction in
    /// [`homology_basis`]; used as an oracle.
    mod brute {
        use super::super::*;
        use crate::f2::Subspace;

        fn slot_basis(c: &FreeComplex, d: Grading, n_trunc: u32) -> Vec<(usize, u32)> {
            c.slots_at(d)
                .into_iter()
                .filter(|&(_, k)| k <= n_trunc)
                .collect()
        }

        fn to_bits(v: &FVec, slots: &[(usize, u32)]) -> Option<crate::f2::BitRow> {
            let mut row = crate::f2::BitRow::zeros(slots.len());
            for (&g, &p) in v {
                let i = slots.iter().position(|&s| s == (g, p))?;
                row.flip(i);
            }
            Some(row)
        }

        fn cycle_space(c: &FreeComplex, d: Grading, n: u32) -> Vec<FVec> {
            let slots = slot_basis(c, d, n);
            let tgt = slot_basis(c, d - 1, n);
            let mut sys = crate::f2::AffineSystem::new(slots.len());
            // rows indexed by target slots
            let mut rows: Vec<crate::f2::BitRow> =
                (0..tgt.len()).map(|_| crate::f2::BitRow::zeros(slots.len())).collect();
            for (si, &(g, p)) in slots.iter().enumerate() {
                for (t, q) in c.diff_of(g) {
                    if let Some(ti) = tgt.iter().position(|&s| s == (t, q + p)) {
                        rows[ti].flip(si);
                    }
                    // terms truncated away are genuinely dropped: the
                    // truncation is a quotient complex
                }
            }
            for r in rows {
                sys.add_constraint(r, false);
            }
            sys.nullspace_basis()
                .into_iter()
                .map(|b| {
                    let mut v = FVec::new();
                    for i in b.iter_set() {
                        let (g, p) = slots[i];
                        fvec_add_term(&mut v, g, p);
                    }
                    v
                })
                .collect()
        }

        fn boundary_space(c: &FreeComplex, d: Grading, n: u32) -> Vec<FVec> {
            let src = slot_basis(c, d + 1, n);
            let mut out = Vec::new();
            for &(g, p) in &src {
                let mut v = FVec::new();
                for (t, q) in c.diff_of(g) {
                    if q + p <= n {
                        fvec_add_term(&mut v, t, q + p);
                    }
                }
                if !v.is_empty() {
                    out.push(v);
                }
            }
            out
        }

        /// dim H_d and rank(U^k : H_d -> H_{d-2k}) from truncated row
        /// reduction.
        pub fn dims_and_ranks(
            c: &FreeComplex,
            d: Grading,
            kmax: u32,
            n: u32,
        ) -> (usize, Vec<usize>) {
            let slots = slot_basis(c, d, n);
            let z = cycle_space(c, d, n);
            let b = boundary_space(c, d, n);
            let mut bsp = Subspace::new(slots.len());
            for v in &b {
                bsp.insert(to_bits(v, &slots).unwrap());
            }
            let bdim = bsp.dim();
            let mut zsp = bsp.clone();
            for v in &z {
                zsp.insert(to_bits(v, &slots).unwrap());
            }
            let hdim = zsp.dim() - bdim;
            let mut ranks = Vec::new();
            for k in 1..=kmax {
                let d2 = d - 2 * k as Grading;
                let slots2 = slot_basis(c, d2, n);
                let mut low = Subspace::new(slots2.len());
                for v in boundary_space(c, d2, n) {
                    low.insert(to_bits(&v, &slots2).unwrap());
                }
                let b2 = low.dim();
                for v in &z {
                    let shifted = fvec_shift(v, k);
                    if shifted.values().all(|&p| p <= n) {
                        low.insert(to_bits(&shifted, &slots2).unwrap());
                    } else {
                        // truncation artifact; keep N large relative to the
                        // grading window so this does not fire
                        panic!("truncation too shallow");
                    }
                }
                ranks.push(low.dim() - b2);
            }
            (hdim, ranks)
        }
    }

    fn basis_dims_and_ranks(hb: &HomologyBasis, d: Grading, kmax: u32) -> (usize, Vec<usize>) {
        let alive = |dd: Grading, k: u32| -> usize {
            let mut n = 0;
            for t in &hb.towers {
                if dd <= t.grading && (t.grading - dd) % 2 == 0 {
                    n += 1;
                }
            }
            for t in &hb.torsion {
                let diff = t.grading - dd;
                if diff >= 0 && diff % 2 == 0 && (diff / 2) + (k as Grading) < t.length as Grading {
                    n += 1;
                }
            }
            n
        };
        (alive(d, 0), (1..=kmax).map(|k| alive(d, k)).collect())
    }

    fn random_valid_complex(
        rng: &mut impl rand::Rng,
    ) -> (FreeComplex, Vec<Grading>, Vec<(Grading, u32)>) {
        // Direct sum of known atoms, then random homogeneous basis changes.
        let n_atoms = rng.gen_range(1..=4);
        let mut gens: Vec<Generator> = Vec::new();
        let mut diff = MonomialMatrix::new();
        let mut tops: Vec<Grading> = Vec::new();
        let mut torsion: Vec<(Grading, u32)> = Vec::new();
        for a in 0..n_atoms {
            let d = rng.gen_range(-5..=5);
            if rng.gen_bool(0.4) || a == 0 {
                tops.push(d);
                gens.push(Generator {
                    id: format!("f{a}"),
                    grading: d,
                });
            } else {
                let l = rng.gen_range(1..=3u32);
                let x = gens.len();
                gens.push(Generator {
                    id: format!("t{a}"),
                    grading: d,
                });
                gens.push(Generator {
                    id: format!("k{a}"),
                    grading: d - 2 * l as Grading + 1,
                });
                diff.insert((x, x + 1), l);
                torsion.push((d, l));
            }
        }
        let n = gens.len();
        // random elementary conjugations: row i += U^δ row j, col j += U^δ col i
        for _ in 0..20 {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let gap = gens[i].grading - gens[j].grading;
            if gap < 0 || gap % 2 != 0 {
                continue;
            }
            let delta = (gap / 2) as u32;
            let mut updates: Vec<(usize, usize, u32)> = Vec::new();
            for (&(t, s), &p) in &diff {
                if t == j {
                    updates.push((i, s, p + delta));
                }
                if s == i {
                    updates.push((t, j, p + delta));
                }
            }
            for (t, s, p) in updates {
                match diff.entry((t, s)) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(p);
                    }
                    std::collections::btree_map::Entry::Occupied(e) => {
                        debug_assert_eq!(*e.get(), p);
                        e.remove();
                    }
                }
            }
        }
        let c = FreeComplex::new(gens, diff).expect("conjugation preserves validity");
        tops.sort_unstable();
        torsion.sort_by(|a, b| b.cmp(a));
        (c, tops, torsion)
    }

    #[test]
    fn homology_matches_known_atoms_and_brute_force() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x1D4);
        for _ in 0..60 {
            let (c, exp_tops, exp_torsion) = random_valid_complex(&mut rng);
            let hb = homology_basis(&c);
            let mut got_tops: Vec<Grading> = hb.towers.iter().map(|t| t.grading).collect();
            got_tops.sort_unstable();
            assert_eq!(got_tops, exp_tops, "tower mismatch");
            assert_eq!(hb.decomposition().torsion, exp_torsion, "torsion mismatch");
            // brute-force oracle over the grading window
            let lo = c.min_grading().unwrap_or(0) - 4;
            let hi = c.max_grading().unwrap_or(0);
            for d in lo..=hi {
                let (bd, br) = brute::dims_and_ranks(&c, d, 4, 24);
                let (ed, er) = basis_dims_and_ranks(&hb, d, 4);
                assert_eq!(bd, ed, "dim mismatch at grading {d}");
                assert_eq!(br, er, "U-rank mismatch at grading {d}");
            }
        }
    }

    #[test]
    fn express_class_roundtrip() {
        let c = x_complex(2);
        let hb = homology_basis(&c);
        for i in 0..hb.n_classes() {
            let expr = express_class(&c, &hb, hb.class_rep(i), hb.class_grading(i)).unwrap();
            let mut expected = vec![false; hb.n_classes()];
            expected[i] = true;
            assert_eq!(expr.coeffs, expected);
        }
    }
}
