//! Linear algebra over F_p^n: vectors, subspaces in reduced row-echelon
//! form, annihilators, complements and cosets.
//!
//! Points of F_p^n are addressed by the little-endian base-p index
//! `Σ coords[k]·p^k`; every table in the crate uses this layout.

use rand::Rng;

use crate::budget::{checked_pow, Budget};
use crate::error::{Error, Result};

/// Largest modulus accepted; keeps products of residues inside `u64`.
pub const MAX_MODULUS: u32 = 1 << 16;

pub fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub fn check_prime(p: u32) -> Result<()> {
    if p > MAX_MODULUS || !is_prime(p) {
        Err(Error::NotPrime(p))
    } else {
        Ok(())
    }
}

/// Multiplicative inverse of a nonzero residue.
pub fn inv_mod(a: u32, p: u32) -> u32 {
    debug_assert!(a % p != 0);
    pow_mod(a, p - 2, p)
}

pub fn pow_mod(a: u32, mut e: u32, p: u32) -> u32 {
    let m = p as u64;
    let mut base = a as u64 % m;
    let mut acc = 1 % m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    acc as u32
}

#[inline]
pub fn add_mod(a: u32, b: u32, p: u32) -> u32 {
    ((a as u64 + b as u64) % p as u64) as u32
}

#[inline]
pub fn mul_mod(a: u32, b: u32, p: u32) -> u32 {
    (a as u64 * b as u64 % p as u64) as u32
}

#[inline]
pub fn neg_mod(a: u32, p: u32) -> u32 {
    if a == 0 {
        0
    } else {
        p - a
    }
}

/// Number of points `p^n` as a `usize`, guarded by the budget.
pub fn point_count(p: u32, n: usize, budget: &Budget) -> Result<usize> {
    let count = checked_pow(p, n);
    budget.check_points("points of F_p^n", count)?;
    usize::try_from(count).map_err(|_| Error::BudgetExceeded {
        what: "points of F_p^n",
        required: count,
        limit: usize::MAX as u128,
    })
}

/// An element of F_p^n.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldVector {
    p: u32,
    coords: Vec<u32>,
}

impl FieldVector {
    /// Builds a vector, reducing every coordinate mod `p`.
    pub fn new(p: u32, coords: impl IntoIterator<Item = u32>) -> Self {
        FieldVector {
            p,
            coords: coords.into_iter().map(|c| c % p).collect(),
        }
    }

    /// Builds a vector from signed coordinates.
    pub fn from_signed(p: u32, coords: &[i64]) -> Self {
        FieldVector {
            p,
            coords: coords
                .iter()
                .map(|&c| c.rem_euclid(p as i64) as u32)
                .collect(),
        }
    }

    pub fn zero(p: u32, n: usize) -> Self {
        FieldVector {
            p,
            coords: vec![0; n],
        }
    }

    /// Standard basis vector with a one in coordinate `k` (0-based).
    pub fn unit(p: u32, n: usize, k: usize) -> Self {
        let mut v = FieldVector::zero(p, n);
        v.coords[k] = 1;
        v
    }

    /// Decodes a little-endian base-p point index.
    pub fn from_index(p: u32, n: usize, mut index: usize) -> Self {
        let mut coords = Vec::with_capacity(n);
        for _ in 0..n {
            coords.push((index % p as usize) as u32);
            index /= p as usize;
        }
        FieldVector { p, coords }
    }

    pub fn random<R: Rng + ?Sized>(p: u32, n: usize, rng: &mut R) -> Self {
        FieldVector {
            p,
            coords: (0..n).map(|_| rng.random_range(0..p)).collect(),
        }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn get(&self, k: usize) -> u32 {
        self.coords[k]
    }

    pub fn set(&mut self, k: usize, value: u32) {
        self.coords[k] = value % self.p;
    }

    /// Little-endian base-p index of the vector.
    pub fn index(&self) -> usize {
        self.coords
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * self.p as usize + c as usize)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    pub fn add(&self, other: &FieldVector) -> FieldVector {
        self.axpy(1, other)
    }

    pub fn sub(&self, other: &FieldVector) -> FieldVector {
        self.axpy(self.p - 1, other)
    }

    pub fn scale(&self, a: u32) -> FieldVector {
        let p = self.p;
        FieldVector {
            p,
            coords: self.coords.iter().map(|&c| mul_mod(c, a, p)).collect(),
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: u32, other: &FieldVector) -> FieldVector {
        let mut out = self.clone();
        out.add_scaled(a, other);
        out
    }

    pub fn add_scaled(&mut self, a: u32, other: &FieldVector) {
        let p = self.p;
        let a = a % p;
        if a == 0 {
            return;
        }
        for (x, &y) in self.coords.iter_mut().zip(&other.coords) {
            *x = add_mod(*x, mul_mod(a, y, p), p);
        }
    }

    /// The bilinear form `selfᵀ other` mod p.
    pub fn dot(&self, other: &FieldVector) -> u32 {
        dot_mod(&self.coords, &other.coords, self.p)
    }

    fn check_shape(&self, p: u32, n: usize) -> Result<()> {
        if self.p != p || self.coords.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "vector over F_{}^{} where F_{p}^{n} was expected",
                self.p,
                self.coords.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn dot_mod(a: &[u32], b: &[u32], p: u32) -> u32 {
    let m = p as u64;
    let mut acc = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        acc = (acc + x as u64 * y as u64) % m;
    }
    acc as u32
}

/// A subspace of F_p^n held as a basis in reduced row-echelon form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subspace {
    p: u32,
    n: usize,
    basis: Vec<FieldVector>,
    pivots: Vec<usize>,
}

impl Subspace {
    /// Row-reduces `vectors` and returns their span.
    pub fn rref(p: u32, n: usize, vectors: &[FieldVector]) -> Result<Subspace> {
        check_prime(p)?;
        for v in vectors {
            v.check_shape(p, n)?;
        }
        let mut rows: Vec<FieldVector> = vectors.to_vec();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            let Some(found) = (rank..rows.len()).find(|&r| rows[r].coords[col] != 0) else {
                continue;
            };
            rows.swap(rank, found);
            let inv = inv_mod(rows[rank].coords[col], p);
            rows[rank] = rows[rank].scale(inv);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row.coords[col] != 0 {
                    let factor = neg_mod(row.coords[col], p);
                    row.add_scaled(factor, &pivot_row);
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == rows.len() {
                break;
            }
        }
        rows.truncate(rank);
        Ok(Subspace {
            p,
            n,
            basis: rows,
            pivots,
        })
    }

    pub fn zero(p: u32, n: usize) -> Subspace {
        Subspace {
            p,
            n,
            basis: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn full(p: u32, n: usize) -> Subspace {
        Subspace::coordinate(p, n, 0..n)
    }

    /// The span of the standard basis vectors with 0-based indices in `coords`.
    pub fn coordinate(p: u32, n: usize, coords: impl IntoIterator<Item = usize>) -> Subspace {
        let mut pivots: Vec<usize> = coords.into_iter().collect();
        pivots.sort_unstable();
        pivots.dedup();
        Subspace {
            p,
            n,
            basis: pivots.iter().map(|&k| FieldVector::unit(p, n, k)).collect(),
            pivots,
        }
    }

    /// A uniformly random subspace of the given dimension.
    pub fn random<R: Rng + ?Sized>(p: u32, n: usize, dim: usize, rng: &mut R) -> Result<Subspace> {
        if dim > n {
            return Err(Error::InvalidParameter(format!(
                "dimension {dim} exceeds ambient dimension {n}"
            )));
        }
        let mut vectors = Vec::with_capacity(dim);
        let mut span = Subspace::zero(p, n);
        while span.dim() < dim {
            let v = FieldVector::random(p, n, rng);
            if !span.contains_vector(&v) {
                vectors.push(v);
                span = Subspace::rref(p, n, &vectors)?;
            }
        }
        Ok(span)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn codim(&self) -> usize {
        self.n - self.basis.len()
    }

    pub fn basis(&self) -> &[FieldVector] {
        &self.basis
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Columns that carry no pivot, in increasing order.
    pub fn free_columns(&self) -> Vec<usize> {
        let mut is_pivot = vec![false; self.n];
        for &c in &self.pivots {
            is_pivot[c] = true;
        }
        (0..self.n).filter(|&c| !is_pivot[c]).collect()
    }

    /// Number of points, `p^dim`.
    pub fn size(&self) -> u128 {
        checked_pow(self.p, self.dim())
    }

    /// Number of cosets, `p^codim`.
    pub fn index(&self) -> u128 {
        checked_pow(self.p, self.codim())
    }

    /// The annihilator `{y : yᵀx = 0 for all x in self}`.
    pub fn annihilator(&self) -> Subspace {
        let p = self.p;
        let free = self.free_columns();
        let mut vectors = Vec::with_capacity(free.len());
        for &f in &free {
            let mut y = FieldVector::zero(p, self.n);
            y.coords[f] = 1;
            for (row, &pivot) in self.basis.iter().zip(&self.pivots) {
                y.coords[pivot] = neg_mod(row.coords[f], p);
            }
            vectors.push(y);
        }
        Subspace::rref(p, self.n, &vectors).expect("annihilator basis has matching shape")
    }

    /// The coordinate subspace on the non-pivot columns.
    pub fn complement(&self) -> Subspace {
        Subspace::coordinate(self.p, self.n, self.free_columns())
    }

    fn check_same_ambient(&self, other: &Subspace) -> Result<()> {
        if self.p != other.p || self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "subspaces of F_{}^{} and F_{}^{}",
                self.p, self.n, other.p, other.n
            )));
        }
        Ok(())
    }

    /// Reduces `v` against the basis; the result vanishes on pivot columns.
    pub fn reduce(&self, v: &FieldVector) -> FieldVector {
        let mut out = v.clone();
        for (row, &pivot) in self.basis.iter().zip(&self.pivots) {
            let c = out.coords[pivot];
            if c != 0 {
                out.add_scaled(neg_mod(c, self.p), row);
            }
        }
        out
    }

    pub fn contains_vector(&self, v: &FieldVector) -> bool {
        v.p == self.p && v.dim() == self.n && self.reduce(v).is_zero()
    }

    /// Whether `other ≤ self`.
    pub fn contains(&self, other: &Subspace) -> Result<bool> {
        self.check_same_ambient(other)?;
        Ok(other.basis.iter().all(|b| self.contains_vector(b)))
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_same_ambient(other)?;
        let mut vectors = self.basis.clone();
        vectors.extend(other.basis.iter().cloned());
        Subspace::rref(self.p, self.n, &vectors)
    }

    /// `self ∩ other`, computed as the annihilator of the sum of annihilators.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.check_same_ambient(other)?;
        Ok(self.annihilator().sum(&other.annihilator())?.annihilator())
    }

    /// `self ∩ ⟨xi⟩^⊥`.
    pub fn intersect_hyperplane(&self, xi: &FieldVector) -> Result<Subspace> {
        xi.check_shape(self.p, self.n)?;
        let hyperplane = Subspace::rref(self.p, self.n, std::slice::from_ref(xi))?.annihilator();
        self.intersect(&hyperplane)
    }

    pub fn coset(&self, c: &FieldVector) -> Result<Coset> {
        c.check_shape(self.p, self.n)?;
        Ok(Coset {
            rep: self.reduce(c),
            subspace: self.clone(),
        })
    }

    /// All cosets, ordered lexicographically by canonical representative.
    pub fn cosets(&self, budget: &Budget) -> Result<Vec<Coset>> {
        budget.check_points("cosets", self.index())?;
        let free = self.free_columns();
        let count = self.index() as usize;
        let mut cosets: Vec<Coset> = (0..count)
            .map(|label| Coset {
                rep: self.rep_of_label(&free, label),
                subspace: self.clone(),
            })
            .collect();
        cosets.sort_by(|a, b| a.rep.coords.cmp(&b.rep.coords));
        Ok(cosets)
    }

    fn rep_of_label(&self, free: &[usize], mut label: usize) -> FieldVector {
        let mut rep = FieldVector::zero(self.p, self.n);
        for &f in free {
            rep.coords[f] = (label % self.p as usize) as u32;
            label /= self.p as usize;
        }
        rep
    }

    /// Point indices of `c + self`, enumerated by coefficient odometer.
    pub fn coset_point_indices(&self, c: &FieldVector, budget: &Budget) -> Result<Vec<usize>> {
        c.check_shape(self.p, self.n)?;
        budget.check_points("coset points", self.size())?;
        let p = self.p;
        let size = self.size() as usize;
        let mut out = Vec::with_capacity(size);
        let mut x = c.clone();
        let mut digits = vec![0u32; self.dim()];
        for _ in 0..size {
            out.push(x.index());
            for (j, digit) in digits.iter_mut().enumerate() {
                x.add_scaled(1, &self.basis[j]);
                *digit += 1;
                if *digit < p {
                    break;
                }
                *digit = 0;
            }
        }
        Ok(out)
    }

    /// The elements of the subspace.
    pub fn elements(&self, budget: &Budget) -> Result<Vec<FieldVector>> {
        let zero = FieldVector::zero(self.p, self.n);
        Ok(self
            .coset_point_indices(&zero, budget)?
            .into_iter()
            .map(|i| FieldVector::from_index(self.p, self.n, i))
            .collect())
    }

    /// Labels every point of F_p^n by the coset of `self` containing it.
    pub fn labeling(&self, budget: &Budget) -> Result<CosetLabeling> {
        CosetLabeling::new(self, budget)
    }

    /// Every subspace of F_p^n, by enumerating all RREF matrices.
    pub fn enumerate_all(p: u32, n: usize, budget: &Budget) -> Result<Vec<Subspace>> {
        check_prime(p)?;
        let mut out = Vec::new();
        for dim in 0..=n {
            for pivots in combinations(n, dim) {
                let mut slots = Vec::new();
                for (r, &pc) in pivots.iter().enumerate() {
                    for col in pc + 1..n {
                        if !pivots.contains(&col) {
                            slots.push((r, col));
                        }
                    }
                }
                let count = checked_pow(p, slots.len());
                budget.check_points("subspace enumeration", count + out.len() as u128)?;
                for code in 0..count as usize {
                    let mut basis: Vec<FieldVector> = pivots
                        .iter()
                        .map(|&pc| FieldVector::unit(p, n, pc))
                        .collect();
                    let mut rest = code;
                    for &(r, col) in &slots {
                        basis[r].coords[col] = (rest % p as usize) as u32;
                        rest /= p as usize;
                    }
                    out.push(Subspace {
                        p,
                        n,
                        basis,
                        pivots: pivots.clone(),
                    });
                }
            }
        }
        Ok(out)
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// A coset `rep + subspace` with the canonical representative, the unique
/// one vanishing on the subspace's pivot columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coset {
    subspace: Subspace,
    rep: FieldVector,
}

impl Coset {
    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn rep(&self) -> &FieldVector {
        &self.rep
    }

    pub fn contains(&self, x: &FieldVector) -> bool {
        self.subspace.contains_vector(&x.sub(&self.rep))
    }

    pub fn point_indices(&self, budget: &Budget) -> Result<Vec<usize>> {
        self.subspace.coset_point_indices(&self.rep, budget)
    }
}

/// Coset label of every point of F_p^n for a fixed subspace.
///
/// The label of `x` encodes, base p over the free columns in increasing
/// order, the canonical representative of `x + H`; labels run over
/// `0..p^codim`.
#[derive(Debug, Clone)]
pub struct CosetLabeling {
    p: u32,
    n: usize,
    free: Vec<usize>,
    labels: Vec<u32>,
}

impl CosetLabeling {
    pub fn new(h: &Subspace, budget: &Budget) -> Result<Self> {
        let p = h.p;
        let n = h.n;
        let total = point_count(p, n, budget)?;
        let free = h.free_columns();
        let codim = free.len();
        // Label contribution of each standard basis vector.
        let columns: Vec<Vec<u32>> = (0..n)
            .map(|k| {
                let r = h.reduce(&FieldVector::unit(p, n, k));
                free.iter().map(|&f| r.coords[f]).collect()
            })
            .collect();
        let mut labels = vec![0u32; total];
        if p == 2 {
            let packed: Vec<u32> = columns
                .iter()
                .map(|col| col.iter().enumerate().fold(0, |acc, (j, &b)| acc | (b << j)))
                .collect();
            for x in 1..total {
                labels[x] = labels[x & (x - 1)] ^ packed[x.trailing_zeros() as usize];
            }
        } else {
            let mut block = 1usize;
            let mut digits = vec![0u32; codim];
            for col in &columns {
                for a in 1..p {
                    let shift: Vec<u32> = col.iter().map(|&c| mul_mod(c, a, p)).collect();
                    for j in 0..block {
                        let mut label = labels[j];
                        for d in digits.iter_mut() {
                            *d = label % p;
                            label /= p;
                        }
                        let mut packed = 0u32;
                        for t in (0..codim).rev() {
                            packed = packed * p + add_mod(digits[t], shift[t], p);
                        }
                        labels[a as usize * block + j] = packed;
                    }
                }
                block *= p as usize;
            }
        }
        Ok(CosetLabeling {
            p,
            n,
            free,
            labels,
        })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    pub fn num_cosets(&self) -> usize {
        (self.p as usize).pow(self.free.len() as u32)
    }

    /// Canonical representative of the coset with the given label.
    pub fn rep(&self, mut label: usize) -> FieldVector {
        let mut rep = FieldVector::zero(self.p, self.n);
        for &f in &self.free {
            rep.coords[f] = (label % self.p as usize) as u32;
            label /= self.p as usize;
        }
        rep
    }

    /// Point indices grouped by label.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.num_cosets()];
        for (x, &l) in self.labels.iter().enumerate() {
            cells[l as usize].push(x);
        }
        cells
    }
}
