//! Involutive complexes and the group operations: validation of the
//! homotopy-involution axioms, tensor product, dual, grading shift, the
//! standard three-generator family, and graded roots with their standard
//! complex models.

use crate::coeff::{
    fvec_add_term, homology_basis, is_chain_map, FreeComplex, FVec, Generator, GradedMap, Grading,
    MonomialMatrix, Violation,
};
use crate::f2::AffineSystem;
use std::collections::BTreeMap;

/// A free complex with a certified homotopy involution, plus optional named
/// extra involutions (e.g. "tau", "sigma") that homotopy-commute with it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IotaComplex {
    pub complex: FreeComplex,
    pub iota: GradedMap,
    pub extras: BTreeMap<String, GradedMap>,
}

/// Homotopies certifying the involution axioms.
#[derive(Clone, Debug)]
pub struct IotaCertificates {
    /// H with iota^2 + id = dH + Hd
    pub iota_square: GradedMap,
    /// per extra label: (J^2 homotopy, J-iota commutation homotopy)
    pub extras: BTreeMap<String, (GradedMap, GradedMap)>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum IotaViolation {
    #[error("underlying complex invalid: {0}")]
    Complex(Violation),
    #[error("{label} is not grading-homogeneous of degree 0")]
    NotDegreeZero { label: String },
    #[error("{label} is not a chain map")]
    NotChainMap { label: String },
    #[error("{label}^2 is not chain homotopic to the identity")]
    NotHomotopyInvolution { label: String },
    #[error("{label} does not homotopy-commute with iota")]
    DoesNotCommute { label: String },
    #[error("localized homology is not a single tower (found {0} towers)")]
    WrongTowerCount(usize),
    #[error("unknown involution label `{0}`")]
    UnknownLabel(String),
    #[error("grading shift must be even, got {0}")]
    OddShift(i32),
    #[error("family index must be >= 1, got {0}")]
    BadFamilyIndex(i64),
}

/// Solve `dP + Pd = rhs` for a degree-(rhs.degree + 1) map `P`, where `rhs`
/// is a chain map of even degree from `src` to `tgt`. Returns the homotopy
/// witness when the affine system is feasible.
pub fn solve_homotopy(
    rhs: &GradedMap,
    src: &FreeComplex,
    tgt: &FreeComplex,
) -> Option<GradedMap> {
    let pdeg = rhs.degree + 1;
    // Unknown slots of P: pairs with the right grading gap.
    let mut slots: Vec<(usize, usize, u32)> = Vec::new();
    let mut slot_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for s in 0..src.n_gens() {
        for t in 0..tgt.n_gens() {
            let gap = tgt.grading(t) - src.grading(s) - pdeg;
            if gap >= 0 && gap % 2 == 0 {
                slot_index.insert((t, s), slots.len());
                slots.push((t, s, (gap / 2) as u32));
            }
        }
    }
    // Equations: entries of dP + Pd, one per (target, source) pair with the
    // degree of rhs.
    let mut eq_rows: BTreeMap<(usize, usize), crate::f2::BitRow> = BTreeMap::new();
    let mut touch = |t: usize, s: usize, slot: usize, eq_rows: &mut BTreeMap<(usize, usize), crate::f2::BitRow>| {
        eq_rows
            .entry((t, s))
            .or_insert_with(|| crate::f2::BitRow::zeros(slots.len()))
            .flip(slot);
    };
    for (idx, &(t, s, _)) in slots.iter().enumerate() {
        // d ∘ P: entry (t2, s) for every d-entry t2 <- t
        for (&(t2, tt), _) in tgt.diff_entries() {
            if tt == t {
                touch(t2, s, idx, &mut eq_rows);
            }
        }
        // P ∘ d: entry (t, s2) for every d-entry s <- s2
        for (&(ss, s2), _) in src.diff_entries() {
            if ss == s {
                touch(t, s2, idx, &mut eq_rows);
            }
        }
    }
    let mut sys = AffineSystem::new(slots.len());
    let mut keys: Vec<(usize, usize)> = eq_rows.keys().copied().collect();
    for (&(t, s), _) in &rhs.entries {
        if !eq_rows.contains_key(&(t, s)) {
            keys.push((t, s));
        }
    }
    keys.sort_unstable();
    keys.dedup();
    for key in keys {
        let row = eq_rows
            .remove(&key)
            .unwrap_or_else(|| crate::f2::BitRow::zeros(slots.len()));
        let rhs_bit = rhs.entries.contains_key(&key);
        sys.add_constraint(row, rhs_bit);
    }
    let sol = sys.particular_solution()?;
    let mut entries = MonomialMatrix::new();
    for (idx, &(t, s, p)) in slots.iter().enumerate() {
        if sol.get(idx) {
            entries.insert((t, s), p);
        }
    }
    Some(GradedMap {
        degree: pdeg,
        entries,
    })
}

/// `f ∘ g_src ≃ g_tgt ∘ f`: find the homotopy witnessing equivariance of a
/// fixed chain map with respect to fixed involutions on each side.
pub fn equivariance_homotopy(
    f: &GradedMap,
    src: &FreeComplex,
    tgt: &FreeComplex,
    inv_src: &GradedMap,
    inv_tgt: &GradedMap,
) -> Option<GradedMap> {
    let rhs = f.compose(inv_src).add(&inv_tgt.compose(f));
    solve_homotopy(&rhs, src, tgt)
}

impl IotaComplex {
    pub fn new(complex: FreeComplex, iota: GradedMap) -> Self {
        IotaComplex {
            complex,
            iota,
            extras: BTreeMap::new(),
        }
    }

    pub fn with_extra(mut self, label: &str, map: GradedMap) -> Self {
        self.extras.insert(label.to_string(), map);
        self
    }

    /// Resolve an involution label; "iota" names the primary involution.
    pub fn involution(&self, label: &str) -> Result<&GradedMap, IotaViolation> {
        if label == "iota" {
            Ok(&self.iota)
        } else {
            self.extras
                .get(label)
                .ok_or_else(|| IotaViolation::UnknownLabel(label.to_string()))
        }
    }

    pub fn labels(&self) -> Vec<String> {
        let mut l = vec!["iota".to_string()];
        l.extend(self.extras.keys().cloned());
        l
    }

    /// A view of this complex with the named involution promoted to the
    /// primary slot (and no extras). Comparisons between different labels go
    /// through this.
    pub fn with_label_as_iota(&self, label: &str) -> Result<IotaComplex, IotaViolation> {
        Ok(IotaComplex::new(
            self.complex.clone(),
            self.involution(label)?.clone(),
        ))
    }

    /// Check every involutive axiom and return the homotopy certificates.
    pub fn validate(&self) -> Result<IotaCertificates, IotaViolation> {
        self.complex.validate().map_err(IotaViolation::Complex)?;
        let hb = homology_basis(&self.complex);
        if hb.towers.len() != 1 {
            return Err(IotaViolation::WrongTowerCount(hb.towers.len()));
        }
        let check_involution = |m: &GradedMap, label: &str| -> Result<GradedMap, IotaViolation> {
            if m.degree != 0 || m.check_homogeneous(&self.complex, &self.complex).is_err() {
                return Err(IotaViolation::NotDegreeZero {
                    label: label.to_string(),
                });
            }
            if !is_chain_map(m, &self.complex, &self.complex) {
                return Err(IotaViolation::NotChainMap {
                    label: label.to_string(),
                });
            }
            let rhs = m.compose(m).add(&GradedMap::identity(&self.complex));
            solve_homotopy(&rhs, &self.complex, &self.complex).ok_or_else(|| {
                IotaViolation::NotHomotopyInvolution {
                    label: label.to_string(),
                }
            })
        };
        let iota_square = check_involution(&self.iota, "iota")?;
        let mut extras = BTreeMap::new();
        for (label, m) in &self.extras {
            let sq = check_involution(m, label)?;
            let comm_rhs = m.compose(&self.iota).add(&self.iota.compose(m));
            let comm = solve_homotopy(&comm_rhs, &self.complex, &self.complex).ok_or_else(|| {
                IotaViolation::DoesNotCommute {
                    label: label.clone(),
                }
            })?;
            extras.insert(label.clone(), (sq, comm));
        }
        Ok(IotaCertificates { iota_square, extras })
    }
}

/// The trivial complex: one generator in grading zero, zero differential,
/// identity involution.
pub fn make_trivial() -> IotaComplex {
    let c = FreeComplex::new_unchecked(
        vec![Generator {
            id: "x".into(),
            grading: 0,
        }],
        MonomialMatrix::new(),
    );
    let iota = GradedMap::identity(&c);
    IotaComplex::new(c, iota)
}

/// The three-generator family: generators v, iv in grading 0 and a in
/// grading -2i+1 with d(a) = U^i (v + iv); the involution swaps v and iv and
/// fixes a.
pub fn make_x(i: u32) -> Result<IotaComplex, IotaViolation> {
    if i == 0 {
        return Err(IotaViolation::BadFamilyIndex(0));
    }
    let gens = vec![
        Generator {
            id: "v".into(),
            grading: 0,
        },
        Generator {
            id: "iv".into(),
            grading: 0,
        },
        Generator {
            id: "a".into(),
            grading: -2 * i as Grading + 1,
        },
    ];
    let mut diff = MonomialMatrix::new();
    diff.insert((0, 2), i);
    diff.insert((1, 2), i);
    let c = FreeComplex::new(gens, diff).map_err(IotaViolation::Complex)?;
    let iota = GradedMap::from_entries(0, [(1, 0, 0), (0, 1, 0), (2, 2, 0)]);
    Ok(IotaComplex::new(c, iota))
}

fn tensor_complex(a: &FreeComplex, b: &FreeComplex) -> FreeComplex {
    let na = a.n_gens();
    let nb = b.n_gens();
    let mut gens = Vec::with_capacity(na * nb);
    for i in 0..na {
        for j in 0..nb {
            gens.push(Generator {
                id: format!("{}⊗{}", a.gens()[i].id, b.gens()[j].id),
                grading: a.grading(i) + b.grading(j),
            });
        }
    }
    let idx = |i: usize, j: usize| i * nb + j;
    let mut diff = MonomialMatrix::new();
    // d(x ⊗ y) = dx ⊗ y + x ⊗ dy; no signs over F2.
    for (&(t, s), &p) in a.diff_entries() {
        for j in 0..nb {
            diff.insert((idx(t, j), idx(s, j)), p);
        }
    }
    for (&(t, s), &p) in b.diff_entries() {
        for i in 0..na {
            diff.insert((idx(i, t), idx(i, s)), p);
        }
    }
    FreeComplex::new_unchecked(gens, diff)
}

fn tensor_map(f: &GradedMap, g: &GradedMap, nb_src: usize, nb_tgt: usize) -> GradedMap {
    let mut entries = MonomialMatrix::new();
    for (&(ta, sa), &pa) in &f.entries {
        for (&(tb, sb), &pb) in &g.entries {
            entries.insert((ta * nb_tgt + tb, sa * nb_src + sb), pa + pb);
        }
    }
    GradedMap {
        degree: f.degree + g.degree,
        entries,
    }
}

/// Tensor product over F2[U]; involutions tensor factor-wise, and extra
/// labels survive only when present in both factors.
pub fn tensor(a: &IotaComplex, b: &IotaComplex) -> IotaComplex {
    let complex = tensor_complex(&a.complex, &b.complex);
    let nb = b.complex.n_gens();
    let iota = tensor_map(&a.iota, &b.iota, nb, nb);
    let mut extras = BTreeMap::new();
    for (label, ma) in &a.extras {
        if let Some(mb) = b.extras.get(label) {
            extras.insert(label.clone(), tensor_map(ma, mb, nb, nb));
        }
    }
    IotaComplex {
        complex,
        iota,
        extras,
    }
}

fn dual_complex(c: &FreeComplex) -> FreeComplex {
    let gens = c
        .gens()
        .iter()
        .map(|g| Generator {
            id: format!("{}*", g.id),
            grading: -g.grading,
        })
        .collect();
    let diff = c
        .diff_entries()
        .iter()
        .map(|(&(t, s), &p)| ((s, t), p))
        .collect();
    FreeComplex::new_unchecked(gens, diff)
}

fn transpose_map(f: &GradedMap) -> GradedMap {
    GradedMap {
        degree: f.degree,
        entries: f.entries.iter().map(|(&(t, s), &p)| ((s, t), p)).collect(),
    }
}

/// Dual complex: gradings negated, differential and involutions transposed.
pub fn dual(a: &IotaComplex) -> IotaComplex {
    IotaComplex {
        complex: dual_complex(&a.complex),
        iota: transpose_map(&a.iota),
        extras: a
            .extras
            .iter()
            .map(|(l, m)| (l.clone(), transpose_map(m)))
            .collect(),
    }
}

/// Dual of a bare complex.
pub fn dual_free(c: &FreeComplex) -> FreeComplex {
    dual_complex(c)
}

/// Raise all gradings by an even integer.
pub fn shift(a: &IotaComplex, n: i32) -> Result<IotaComplex, IotaViolation> {
    if n % 2 != 0 {
        return Err(IotaViolation::OddShift(n));
    }
    let gens = a
        .complex
        .gens()
        .iter()
        .map(|g| Generator {
            id: g.id.clone(),
            grading: g.grading + n,
        })
        .collect();
    let complex = FreeComplex::new_unchecked(gens, a.complex.diff_entries().clone());
    Ok(IotaComplex {
        complex,
        iota: a.iota.clone(),
        extras: a.extras.clone(),
    })
}

/// Direct sum (disjoint union of generators).
pub fn direct_sum(a: &IotaComplex, b: &IotaComplex) -> IotaComplex {
    let na = a.complex.n_gens();
    let mut gens = a.complex.gens().to_vec();
    gens.extend(b.complex.gens().iter().map(|g| Generator {
        id: format!("{}'", g.id),
        grading: g.grading,
    }));
    let mut diff = a.complex.diff_entries().clone();
    for (&(t, s), &p) in b.complex.diff_entries() {
        diff.insert((t + na, s + na), p);
    }
    let mut iota = a.iota.entries.clone();
    for (&(t, s), &p) in &b.iota.entries {
        iota.insert((t + na, s + na), p);
    }
    IotaComplex {
        complex: FreeComplex::new_unchecked(gens, diff),
        iota: GradedMap {
            degree: 0,
            entries: iota,
        },
        extras: BTreeMap::new(),
    }
}

/// Compare two complexes up to the index bijection `perm` (generator `i` of
/// `a` corresponds to generator `perm[i]` of `b`), ignoring generator names.
pub fn isomorphic_by(a: &IotaComplex, b: &IotaComplex, perm: &[usize]) -> bool {
    let ca = &a.complex;
    let cb = &b.complex;
    if ca.n_gens() != cb.n_gens() || perm.len() != ca.n_gens() {
        return false;
    }
    for i in 0..ca.n_gens() {
        if ca.grading(i) != cb.grading(perm[i]) {
            return false;
        }
    }
    let remap = |m: &MonomialMatrix| -> MonomialMatrix {
        m.iter()
            .map(|(&(t, s), &p)| ((perm[t], perm[s]), p))
            .collect()
    };
    remap(ca.diff_entries()) == *cb.diff_entries() && remap(&a.iota.entries) == b.iota.entries
}

// ---------------------------------------------------------------------------
// Graded roots
// ---------------------------------------------------------------------------

/// A tree with one marked stem vertex (below which an infinite downward path
/// is implied), encoding a graded F2[U]-module, together with a grading- and
/// adjacency-preserving involution of the vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedRoot {
    /// vertex gradings; vertex 0 is the stem marker
    pub gradings: Vec<Grading>,
    /// parent of each vertex (one U-step down); None exactly for the stem
    pub parent: Vec<Option<usize>>,
    /// involution as a vertex permutation
    pub involution: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RootError {
    #[error("vertex {0} has a parent with the wrong grading gap")]
    BadParentGap(usize),
    #[error("root must have exactly one stem (parentless vertex)")]
    StemCount,
    #[error("parent links contain a cycle")]
    Cyclic,
    #[error("involution is not a grading/adjacency-preserving involution")]
    BadInvolution,
}

impl GradedRoot {
    pub fn n_vertices(&self) -> usize {
        self.gradings.len()
    }

    pub fn validate(&self) -> Result<(), RootError> {
        let n = self.n_vertices();
        let stems = self.parent.iter().filter(|p| p.is_none()).count();
        if stems != 1 {
            return Err(RootError::StemCount);
        }
        for v in 0..n {
            if let Some(p) = self.parent[v] {
                if self.gradings[p] != self.gradings[v] - 2 {
                    return Err(RootError::BadParentGap(v));
                }
            }
        }
        // acyclicity: walk to the stem from every vertex
        for v in 0..n {
            let mut cur = v;
            let mut steps = 0;
            while let Some(p) = self.parent[cur] {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(RootError::Cyclic);
                }
            }
        }
        if self.involution.len() != n {
            return Err(RootError::BadInvolution);
        }
        for v in 0..n {
            let iv = self.involution[v];
            if iv >= n
                || self.involution[iv] != v
                || self.gradings[iv] != self.gradings[v]
                || self.parent[v].map(|p| self.involution[p]) != self.parent[iv]
            {
                return Err(RootError::BadInvolution);
            }
        }
        Ok(())
    }

    fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.n_vertices()];
        for v in 0..self.n_vertices() {
            if let Some(p) = self.parent[v] {
                ch[p].push(v);
            }
        }
        ch
    }

    /// Leaves in a canonical order laid out around the involution: for every
    /// involution-fixed vertex, paired child subtrees flank the fixed ones,
    /// the right copy listed as the reversed involution-image of the left.
    /// With this order the involution carries consecutive leaf pairs to
    /// consecutive leaf pairs, which is what the standard complex model
    /// needs.
    fn leaves_in_order(&self) -> Vec<usize> {
        let ch = self.children();
        let stem = self.parent.iter().position(|p| p.is_none()).unwrap();
        let mut out = Vec::new();
        self.layout_symmetric(stem, &ch, &mut out);
        out
    }

    fn plain_leaves(&self, v: usize, ch: &[Vec<usize>], out: &mut Vec<usize>) {
        if ch[v].is_empty() {
            out.push(v);
        } else {
            for &c in &ch[v] {
                self.plain_leaves(c, ch, out);
            }
        }
    }

    fn layout_symmetric(&self, v: usize, ch: &[Vec<usize>], out: &mut Vec<usize>) {
        debug_assert_eq!(self.involution[v], v);
        if ch[v].is_empty() {
            out.push(v);
            return;
        }
        let mut center: Vec<usize> = Vec::new();
        let mut left: Vec<usize> = Vec::new();
        let mut right_blocks: Vec<Vec<usize>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for &c in &ch[v] {
            if seen.contains(&c) {
                continue;
            }
            let ic = self.involution[c];
            if ic == c {
                let mut sub = Vec::new();
                self.layout_symmetric(c, ch, &mut sub);
                center.extend(sub);
            } else {
                seen.insert(ic);
                let mut sub = Vec::new();
                self.plain_leaves(c, ch, &mut sub);
                let mirrored: Vec<usize> =
                    sub.iter().rev().map(|&l| self.involution[l]).collect();
                left.extend(sub);
                right_blocks.push(mirrored);
            }
        }
        out.extend(left);
        out.extend(center);
        for block in right_blocks.into_iter().rev() {
            out.extend(block);
        }
    }

    /// Grading of the meet (deepest common ancestor) of two vertices.
    fn meet_grading(&self, a: usize, b: usize) -> Grading {
        let mut anc = std::collections::HashSet::new();
        let mut cur = Some(a);
        while let Some(v) = cur {
            anc.insert(v);
            cur = self.parent[v];
        }
        let mut cur = b;
        loop {
            if anc.contains(&cur) {
                return self.gradings[cur];
            }
            cur = self.parent[cur].expect("vertices share the stem");
        }
    }
}

/// Build the standard complex model of a graded root: one generator per leaf
/// in canonical order, one relative-degree-(+1) generator per consecutive
/// pair, with differentials given by U-powers down to the meet. The root
/// involution must map consecutive pairs to consecutive pairs (order-reversal
/// and order-preservation both qualify), which holds for every symmetric
/// layout produced by [`symmetric_root`].
pub fn from_graded_root(root: &GradedRoot) -> Result<IotaComplex, RootError> {
    root.validate()?;
    let leaves = root.leaves_in_order();
    let k = leaves.len();
    let mut gens: Vec<Generator> = leaves
        .iter()
        .enumerate()
        .map(|(n, &v)| Generator {
            id: format!("v{}", n + 1),
            grading: root.gradings[v],
        })
        .collect();
    let mut diff = MonomialMatrix::new();
    let mut merges = Vec::new();
    for n in 0..k.saturating_sub(1) {
        let m = root.meet_grading(leaves[n], leaves[n + 1]);
        gens.push(Generator {
            id: format!("a{}", n + 1),
            grading: m + 1,
        });
        merges.push(m);
        let gi = k + n;
        let pl = ((root.gradings[leaves[n]] - m) / 2) as u32;
        let pr = ((root.gradings[leaves[n + 1]] - m) / 2) as u32;
        diff.insert((n, gi), pl);
        diff.insert((n + 1, gi), pr);
    }
    let complex = FreeComplex::new(gens, diff).map_err(|_| RootError::BadParentGap(0))?;
    // Involution: permute leaf generators by the root involution; merge
    // generator n pairs with the merge of the image pair.
    let leaf_pos: BTreeMap<usize, usize> = leaves.iter().enumerate().map(|(n, &v)| (v, n)).collect();
    let mut entries = MonomialMatrix::new();
    for n in 0..k {
        let img = leaf_pos[&root.involution[leaves[n]]];
        entries.insert((img, n), 0);
    }
    for n in 0..k.saturating_sub(1) {
        let a = leaf_pos[&root.involution[leaves[n]]];
        let b = leaf_pos[&root.involution[leaves[n + 1]]];
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi != lo + 1 || merges[lo] != merges[n] {
            return Err(RootError::BadInvolution);
        }
        entries.insert((k + lo, k + n), 0);
    }
    Ok(IotaComplex::new(
        complex,
        GradedMap { degree: 0, entries },
    ))
}

/// Build a reflection-symmetric graded root realizing a homology
/// decomposition whose classes all live in a single mod-2 grading: paired
/// torsion towers become mirrored legs off the stem, an odd tower at the top
/// grading becomes a two-branch fork of the stem, and any other odd tower
/// becomes a single central leg fixed by the reflection. The involution is
/// the reflection.
pub fn symmetric_root(h: &crate::coeff::HomologyDecomposition) -> Result<GradedRoot, String> {
    let top = h.tower_top.ok_or("no infinite tower")?;
    for &(d, l) in &h.torsion {
        if (d - top) % 2 != 0 {
            return Err(format!(
                "torsion top {d} and tower top {top} differ in mod-2 grading"
            ));
        }
        let _ = l;
    }
    // Count multiplicities.
    let mut mult: BTreeMap<(Grading, u32), usize> = BTreeMap::new();
    for &(d, l) in &h.torsion {
        *mult.entry((d, l)).or_insert(0) += 1;
    }
    let mut fork: Option<(Grading, u32)> = None;
    let mut singles: Vec<(Grading, u32)> = Vec::new();
    let mut pairs: Vec<(Grading, u32)> = Vec::new();
    // Choose the longest odd-multiplicity tower topped at the tower top as
    // the fork of the stem.
    let mut odd: Vec<(Grading, u32)> = mult
        .iter()
        .filter(|&(_, &m)| m % 2 == 1)
        .map(|(&k, _)| k)
        .collect();
    odd.sort_by_key(|&(d, l)| (std::cmp::Reverse(d), std::cmp::Reverse(l)));
    for &(d, l) in &odd {
        if fork.is_none() && d == top {
            fork = Some((d, l));
        } else {
            singles.push((d, l));
        }
    }
    for (&(d, l), &m) in &mult {
        let used_odd = mult[&(d, l)] % 2;
        let npairs = (m - used_odd) / 2;
        for _ in 0..npairs {
            pairs.push((d, l));
        }
    }
    pairs.sort_by_key(|&(d, l)| (std::cmp::Reverse(d), std::cmp::Reverse(l)));

    // Stem must reach down to every attachment point.
    let mut stem_bottom = top;
    if let Some((d, l)) = fork {
        stem_bottom = stem_bottom.min(d - 2 * l as Grading);
    }
    for &(d, l) in pairs.iter().chain(singles.iter()) {
        stem_bottom = stem_bottom.min(d - 2 * l as Grading);
    }

    let mut gradings = Vec::new();
    let mut parent = Vec::new();
    let mut pairing: Vec<usize> = Vec::new(); // involution under construction

    // Stem path from stem_bottom up to either the fork point or the top.
    let stem_top = match fork {
        Some((d, l)) => (d - 2 * l as Grading).min(top),
        None => top,
    };
    let mut stem_at: BTreeMap<Grading, usize> = BTreeMap::new();
    let mut prev: Option<usize> = None;
    let mut g = stem_bottom;
    while g <= stem_top {
        let v = gradings.len();
        gradings.push(g);
        parent.push(prev);
        pairing.push(v); // stem fixed by reflection
        stem_at.insert(g, v);
        prev = Some(v);
        g += 2;
    }
    let fork_base = *stem_at.get(&stem_top).expect("stem nonempty");

    // Helper: grow a path of vertices from `from_grading+2` up to `to`,
    // hanging off `base`; returns the vertices added (bottom to top).
    let grow = |gradings: &mut Vec<Grading>,
                parent: &mut Vec<Option<usize>>,
                pairing: &mut Vec<usize>,
                base: usize,
                from_grading: Grading,
                to: Grading|
     -> Vec<usize> {
        let mut added = Vec::new();
        let mut prev = base;
        let mut g = from_grading + 2;
        while g <= to {
            let v = gradings.len();
            gradings.push(g);
            parent.push(Some(prev));
            pairing.push(v);
            added.push(v);
            prev = v;
            g += 2;
        }
        added
    };

    // Fork: two branches from the fork base up to the top grading.
    let mut branch_vertices: Option<(Vec<usize>, Vec<usize>)> = None;
    if let Some((d, _)) = fork {
        let left = grow(&mut gradings, &mut parent, &mut pairing, fork_base, stem_top, d);
        let right = grow(&mut gradings, &mut parent, &mut pairing, fork_base, stem_top, d);
        for (&a, &b) in left.iter().zip(right.iter()) {
            pairing[a] = b;
            pairing[b] = a;
        }
        branch_vertices = Some((left, right));
    } else if stem_top < top {
        // No fork but the tower continues above attachment points.
        grow(&mut gradings, &mut parent, &mut pairing, fork_base, stem_top, top);
    }

    // Where legs attach: on the stem below the fork, or symmetrically on the
    // two branches above it.
    let attach_pair = |gradings: &mut Vec<Grading>,
                       parent: &mut Vec<Option<usize>>,
                       pairing: &mut Vec<usize>,
                       stem_at: &BTreeMap<Grading, usize>,
                       branches: &Option<(Vec<usize>, Vec<usize>)>,
                       join: Grading,
                       leaf: Grading|
     -> Result<(), String> {
        let (base_l, base_r) = if join <= stem_top {
            let b = *stem_at
                .get(&join)
                .ok_or_else(|| format!("no stem vertex at grading {join}"))?;
            (b, b)
        } else {
            let (l, r) = branches
                .as_ref()
                .ok_or_else(|| format!("attachment at {join} above the stem"))?;
            let i = ((join - stem_top) / 2 - 1) as usize;
            (
                *l.get(i).ok_or("attachment above fork top")?,
                *r.get(i).ok_or("attachment above fork top")?,
            )
        };
        let lv = grow(gradings, parent, pairing, base_l, join, leaf);
        let rv = grow(gradings, parent, pairing, base_r, join, leaf);
        for (&a, &b) in lv.iter().zip(rv.iter()) {
            pairing[a] = b;
            pairing[b] = a;
        }
        Ok(())
    };

    for &(d, l) in &pairs {
        attach_pair(
            &mut gradings,
            &mut parent,
            &mut pairing,
            &stem_at,
            &branch_vertices,
            d - 2 * l as Grading,
            d,
        )?;
    }
    for &(d, l) in &singles {
        let join = d - 2 * l as Grading;
        if join > stem_top {
            return Err(format!(
                "central leg would attach above the fork (join {join})"
            ));
        }
        let base = *stem_at
            .get(&join)
            .ok_or_else(|| format!("no stem vertex at grading {join}"))?;
        grow(&mut gradings, &mut parent, &mut pairing, base, join, d);
    }

    let root = GradedRoot {
        gradings,
        parent,
        involution: pairing,
    };
    root.validate().map_err(|e| e.to_string())?;
    Ok(root)
}
