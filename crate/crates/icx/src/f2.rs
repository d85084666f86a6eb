//! Dense linear algebra over the two-element field.
//!
//! Rows are bit-packed into `u64` words. [`AffineSystem`] maintains a system
//! of affine equations `A x = b` in reduced row echelon form, supports
//! incremental constraint insertion, and reports infeasibility together with
//! the combination of input rows that reduced to `0 = 1`.

/// A bit vector of fixed length.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BitRow {
    words: Vec<u64>,
    len: usize,
}

impl BitRow {
    pub fn zeros(len: usize) -> Self {
        BitRow {
            words: vec![0u64; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn xor_assign(&mut self, other: &BitRow) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a ^= *b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Index of the first set bit, if any.
    pub fn first_set(&self) -> Option<usize> {
        for (wi, w) in self.words.iter().enumerate() {
            if *w != 0 {
                let i = wi * 64 + w.trailing_zeros() as usize;
                return (i < self.len).then_some(i);
            }
        }
        None
    }

    /// First set bit that is also set in `mask`.
    pub fn first_set_masked(&self, mask: &BitRow) -> Option<usize> {
        debug_assert_eq!(self.len, mask.len);
        for (wi, (a, b)) in self.words.iter().zip(mask.words.iter()).enumerate() {
            let w = a & b;
            if w != 0 {
                let i = wi * 64 + w.trailing_zeros() as usize;
                return (i < self.len).then_some(i);
            }
        }
        None
    }

    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Outcome of adding one constraint to an [`AffineSystem`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AddOutcome {
    /// The constraint was already implied by the system.
    Redundant,
    /// The constraint added a new pivot.
    NewPivot(usize),
    /// The constraint contradicts the system.
    Contradiction,
}

/// An affine system over F2 kept in reduced row echelon form.
#[derive(Clone, Debug)]
pub struct AffineSystem {
    ncols: usize,
    rows: Vec<BitRow>,
    rhs: Vec<bool>,
    /// pivot column of each stored row
    pivots: Vec<usize>,
    /// column -> index of the row owning it as a pivot
    pivot_row: Vec<Option<usize>>,
    /// mask of all pivot columns
    pivot_mask: BitRow,
    /// When tracking, each stored row also carries the combination of
    /// original constraint indices it came from.
    combos: Option<Vec<Vec<usize>>>,
    n_added: usize,
    contradiction: Option<Vec<usize>>,
}

impl AffineSystem {
    pub fn new(ncols: usize) -> Self {
        AffineSystem {
            ncols,
            rows: Vec::new(),
            rhs: Vec::new(),
            pivots: Vec::new(),
            pivot_row: vec![None; ncols],
            pivot_mask: BitRow::zeros(ncols),
            combos: None,
            n_added: 0,
            contradiction: None,
        }
    }

    /// Enable provenance tracking: infeasibility certificates will name the
    /// input constraints whose sum is `0 = 1`. Must be called before any row
    /// is added.
    pub fn with_tracking(mut self) -> Self {
        assert!(self.rows.is_empty());
        self.combos = Some(Vec::new());
        self
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn n_constraints_added(&self) -> usize {
        self.n_added
    }

    pub fn is_contradictory(&self) -> bool {
        self.contradiction.is_some()
    }

    /// Indices of the input constraints that sum to `0 = 1`, when tracking
    /// was enabled and a contradiction was found.
    pub fn contradiction_witness(&self) -> Option<&[usize]> {
        self.contradiction.as_deref()
    }

    /// Add the constraint `row . x = rhs`.
    pub fn add_constraint(&mut self, mut row: BitRow, mut rhs: bool) -> AddOutcome {
        assert_eq!(row.len(), self.ncols);
        let my_index = self.n_added;
        self.n_added += 1;
        let mut combo: Vec<usize> = if self.combos.is_some() {
            vec![my_index]
        } else {
            Vec::new()
        };
        // Eliminate against existing pivots. Stored rows are fully reduced
        // (zero at every other pivot column), so each step strictly shrinks
        // the set of pivot columns present in `row`.
        while let Some(col) = row.first_set_masked(&self.pivot_mask) {
            let owner = self.pivot_row[col].expect("masked bit is a pivot");
            row.xor_assign(&self.rows[owner]);
            rhs ^= self.rhs[owner];
            if let Some(cs) = &self.combos {
                xor_combo(&mut combo, &cs[owner]);
            }
        }
        match row.first_set() {
            None => {
                if rhs {
                    if self.contradiction.is_none() {
                        self.contradiction = Some(combo);
                    }
                    AddOutcome::Contradiction
                } else {
                    AddOutcome::Redundant
                }
            }
            Some(lead) => {
                // Back-substitute into earlier rows so the form stays reduced.
                for i in 0..self.rows.len() {
                    if self.rows[i].get(lead) {
                        let (r, c) = (row.clone(), combo.clone());
                        self.rows[i].xor_assign(&r);
                        self.rhs[i] ^= rhs;
                        if let Some(cs) = &mut self.combos {
                            xor_combo(&mut cs[i], &c);
                        }
                    }
                }
                self.pivot_row[lead] = Some(self.rows.len());
                self.pivot_mask.set(lead, true);
                self.pivots.push(lead);
                self.rows.push(row);
                self.rhs.push(rhs);
                if let Some(cs) = &mut self.combos {
                    cs.push(combo);
                }
                AddOutcome::NewPivot(lead)
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// A particular solution (free variables set to zero), or `None` when the
    /// system is contradictory.
    pub fn particular_solution(&self) -> Option<BitRow> {
        if self.contradiction.is_some() {
            return None;
        }
        let mut x = BitRow::zeros(self.ncols);
        for (i, &p) in self.pivots.iter().enumerate() {
            if self.rhs[i] {
                x.set(p, true);
            }
        }
        Some(x)
    }

    /// Basis of the solution space of the homogeneous system `A x = 0`.
    pub fn nullspace_basis(&self) -> Vec<BitRow> {
        let mut basis = Vec::new();
        for col in 0..self.ncols {
            if self.pivot_row[col].is_some() {
                continue;
            }
            let mut v = BitRow::zeros(self.ncols);
            v.set(col, true);
            for (i, &p) in self.pivots.iter().enumerate() {
                if self.rows[i].get(col) {
                    v.set(p, true);
                }
            }
            basis.push(v);
        }
        basis
    }
}

fn xor_combo(a: &mut Vec<usize>, b: &[usize]) {
    // Symmetric difference of sorted index lists.
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    *a = out;
}

/// Row echelon basis for a plain subspace of F2^n (no right-hand sides).
#[derive(Clone, Debug)]
pub struct Subspace {
    ncols: usize,
    rows: Vec<BitRow>,
    pivot_row: Vec<Option<usize>>,
}

impl Subspace {
    pub fn new(ncols: usize) -> Self {
        Subspace {
            ncols,
            rows: Vec::new(),
            pivot_row: vec![None; ncols],
        }
    }

    /// Insert a vector; returns true when it enlarged the subspace.
    pub fn insert(&mut self, mut v: BitRow) -> bool {
        assert_eq!(v.len(), self.ncols);
        loop {
            let Some(lead) = v.first_set() else {
                return false;
            };
            match self.pivot_row[lead] {
                Some(owner) => v.xor_assign(&self.rows[owner].clone()),
                None => {
                    self.pivot_row[lead] = Some(self.rows.len());
                    self.rows.push(v);
                    return true;
                }
            }
        }
    }

    pub fn contains(&self, v: &BitRow) -> bool {
        let mut v = v.clone();
        loop {
            let Some(lead) = v.first_set() else {
                return true;
            };
            match self.pivot_row[lead] {
                Some(owner) => v.xor_assign(&self.rows[owner]),
                None => return false,
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn basis(&self) -> &[BitRow] {
        &self.rows
    }

    /// True when `self` is contained in `other`.
    pub fn subset_of(&self, other: &Subspace) -> bool {
        self.rows.iter().all(|r| other.contains(r))
    }
}
