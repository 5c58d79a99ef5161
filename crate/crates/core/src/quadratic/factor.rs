//! Quadratic factors: atoms, layers, rank and equidistribution.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize, Serializer};

use crate::budget::{checked_pow, Budget};
use crate::energy::PartitionView;
use crate::error::{Error, Result};
use crate::field_space::{point_count, FieldVector, Subspace};
use crate::fourier::spectrum_of;

use super::poly::{check_odd_prime, PolyRecord, QuadPoly};

/// Rank of a factor; an empty quadratic layer has infinite rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FactorRank {
    Finite(usize),
    Infinite,
}

impl FactorRank {
    pub fn at_least(&self, r: u64) -> bool {
        match self {
            FactorRank::Infinite => true,
            FactorRank::Finite(k) => *k as u64 >= r,
        }
    }

    pub fn finite(&self) -> Option<usize> {
        match self {
            FactorRank::Finite(k) => Some(*k),
            FactorRank::Infinite => None,
        }
    }
}

impl fmt::Display for FactorRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorRank::Finite(k) => write!(f, "{k}"),
            FactorRank::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for FactorRank {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FactorRank::Finite(k) => s.serialize_u64(*k as u64),
            FactorRank::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub rank: FactorRank,
    /// Coefficients attaining the minimum, normalized with leading entry 1.
    pub witness: Option<Vec<u32>>,
}

/// A level set of the defining polynomials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    /// One value per polynomial, linear layer first.
    pub label: Vec<u32>,
    pub points: Vec<usize>,
}

impl Atom {
    pub fn size(&self) -> usize {
        self.points.len()
    }
}

/// Polynomials of degree one and two defining a partition of F_p^n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticFactor {
    p: u32,
    n: usize,
    linear: Vec<QuadPoly>,
    quadratic: Vec<QuadPoly>,
}

impl QuadraticFactor {
    pub fn trivial(p: u32, n: usize) -> Result<Self> {
        check_odd_prime(p)?;
        Ok(QuadraticFactor {
            p,
            n,
            linear: Vec::new(),
            quadratic: Vec::new(),
        })
    }

    pub fn new(p: u32, n: usize, linear: Vec<QuadPoly>, quadratic: Vec<QuadPoly>) -> Result<Self> {
        let mut factor = QuadraticFactor::trivial(p, n)?;
        for (poly, degree) in linear.iter().map(|q| (q, 1)).chain(quadratic.iter().map(|q| (q, 2))) {
            if poly.degree() != degree {
                return Err(Error::InvalidParameter(format!(
                    "polynomial of degree {} in the degree-{degree} list",
                    poly.degree()
                )));
            }
        }
        for poly in linear.into_iter().chain(quadratic) {
            factor.push(poly)?;
        }
        Ok(factor)
    }

    /// Adds a polynomial to the layer matching its degree. Constants define
    /// no partition and are dropped; returns whether `poly` was kept.
    pub fn push(&mut self, poly: QuadPoly) -> Result<bool> {
        if poly.p() != self.p || poly.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "polynomial over F_{}^{} added to a factor over F_{}^{}",
                poly.p(),
                poly.n(),
                self.p,
                self.n
            )));
        }
        match poly.degree() {
            0 => return Ok(false),
            1 => self.linear.push(poly),
            _ => self.quadratic.push(poly),
        }
        Ok(true)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn linear_polys(&self) -> &[QuadPoly] {
        &self.linear
    }

    pub fn quad_polys(&self) -> &[QuadPoly] {
        &self.quadratic
    }

    pub fn complexity(&self) -> usize {
        self.linear.len() + self.quadratic.len()
    }

    pub fn polys(&self) -> impl Iterator<Item = &QuadPoly> {
        self.linear.iter().chain(&self.quadratic)
    }

    /// The factor defined by the linear layer alone.
    pub fn linear_layer(&self) -> QuadraticFactor {
        QuadraticFactor {
            p: self.p,
            n: self.n,
            linear: self.linear.clone(),
            quadratic: Vec::new(),
        }
    }

    /// `H` such that the linear layer partitions F_p^n into cosets of `H`.
    pub fn linear_layer_subspace(&self) -> Subspace {
        let rows: Vec<FieldVector> = self.linear.iter().map(|l| l.linear_coeffs()).collect();
        Subspace::rref(self.p, self.n, &rows)
            .expect("coefficients share the space")
            .annihilator()
    }

    /// The label of every point, in index order.
    pub fn labels(&self, budget: &Budget) -> Result<Vec<Vec<u32>>> {
        let size = point_count(self.p, self.n, budget)?;
        let tables: Vec<Vec<u32>> = self
            .polys()
            .map(|q| q.table(budget))
            .collect::<Result<_>>()?;
        Ok((0..size)
            .map(|x| tables.iter().map(|t| t[x]).collect())
            .collect())
    }

    /// Nonempty atoms in lexicographic label order.
    pub fn atoms(&self, budget: &Budget) -> Result<Vec<Atom>> {
        let mut cells: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
        for (x, label) in self.labels(budget)?.into_iter().enumerate() {
            cells.entry(label).or_default().push(x);
        }
        Ok(cells
            .into_iter()
            .map(|(label, points)| Atom { label, points })
            .collect())
    }

    pub fn partition(&self, budget: &Budget) -> Result<PartitionView> {
        let cells: Vec<Vec<usize>> = self.atoms(budget)?.into_iter().map(|a| a.points).collect();
        PartitionView::from_cells(self.p, self.n, &cells, budget)
    }

    /// Whether every atom of `self` lies inside one atom of `coarse`.
    pub fn refines(&self, coarse: &QuadraticFactor, budget: &Budget) -> Result<bool> {
        Ok(self.partition(budget)?.refines(&coarse.partition(budget)?))
    }

    /// Minimum matrix rank over nonzero combinations of the quadratic layer,
    /// by exhaustive scan of projective classes.
    pub fn rank(&self, budget: &Budget) -> Result<RankReport> {
        let q = self.quadratic.len();
        if q == 0 {
            return Ok(RankReport {
                rank: FactorRank::Infinite,
                witness: None,
            });
        }
        let p = self.p;
        let total = checked_pow(p, q);
        budget.check_rank_classes("projective classes", (total - 1) / (p as u128 - 1))?;
        let zero = QuadPoly::zero(p, self.n)?;
        let mut best: Option<(usize, Vec<u32>)> = None;
        for idx in 1..total as usize {
            let lambda = FieldVector::from_index(p, q, idx);
            let lead = lambda.coords().iter().find(|&&v| v != 0).copied();
            if lead != Some(1) {
                continue;
            }
            let combo = self
                .quadratic
                .iter()
                .zip(lambda.coords())
                .fold(zero.clone(), |acc, (poly, &l)| acc.axpy(l, poly));
            let r = combo.rank();
            if best.as_ref().is_none_or(|(b, _)| r < *b) {
                best = Some((r, lambda.coords().to_vec()));
            }
        }
        let (r, witness) = best.expect("at least one projective class");
        Ok(RankReport {
            rank: FactorRank::Finite(r),
            witness: Some(witness),
        })
    }

    pub fn record(&self) -> FactorRecord {
        FactorRecord {
            format: FACTOR_FORMAT.into(),
            p: self.p,
            n: self.n,
            linear: self
                .linear
                .iter()
                .map(|l| LinearRecord {
                    coeffs: l.linear_coeffs().coords().to_vec(),
                    c: l.constant(),
                })
                .collect(),
            quadratic: self.quadratic.iter().map(|q| q.record()).collect(),
        }
    }

    pub fn from_record(r: &FactorRecord) -> Result<Self> {
        if r.format != FACTOR_FORMAT {
            return Err(Error::Format(format!("unknown factor format {:?}", r.format)));
        }
        let linear = r
            .linear
            .iter()
            .map(|l| QuadPoly::new(r.p, r.n, vec![0; r.n * r.n], l.coeffs.clone(), l.c))
            .collect::<Result<_>>()?;
        let quadratic = r
            .quadratic
            .iter()
            .map(|q| QuadPoly::from_record(r.p, r.n, q))
            .collect::<Result<_>>()?;
        QuadraticFactor::new(r.p, r.n, linear, quadratic)
    }
}

pub const FACTOR_FORMAT: &str = "regulab-factor/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearRecord {
    pub coeffs: Vec<u32>,
    pub c: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorRecord {
    pub format: String,
    pub p: u32,
    pub n: usize,
    pub linear: Vec<LinearRecord>,
    pub quadratic: Vec<PolyRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AtomEquidistribution {
    pub label: Vec<u32>,
    pub size: usize,
    pub ratio: f64,
    /// `max_{r≠0} |E_{x∈B} e_p(rᵀx)|`.
    pub max_phase: f64,
}

/// Atom sizes and linear-phase averages against the high-rank bounds.
#[derive(Debug, Clone, Serialize)]
pub struct EquidistributionReport {
    pub rank: FactorRank,
    pub complexity: usize,
    /// `p^{−r/2}`, absent for infinite rank.
    pub phase_bound: Option<f64>,
    pub max_phase: f64,
    pub phase_ok: Option<bool>,
    /// `[p^{−D}/2, 3p^{−D}/2]`, present when `r ≥ 2(D+1)`.
    pub size_bracket: Option<(f64, f64)>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub size_ok: Option<bool>,
    pub atoms: Vec<AtomEquidistribution>,
}

impl EquidistributionReport {
    /// Both applicable bounds hold.
    pub fn pass(&self) -> bool {
        self.phase_ok.unwrap_or(true) && self.size_ok.unwrap_or(true)
    }
}

pub fn check_equidistribution(b: &QuadraticFactor, budget: &Budget) -> Result<EquidistributionReport> {
    let (p, n) = (b.p(), b.n());
    let size = point_count(p, n, budget)?;
    let rank = b.rank(budget)?.rank;
    let d = b.complexity();
    let atoms = b.atoms(budget)?;
    let phase_bound = rank.finite().map(|r| (p as f64).powf(-(r as f64) / 2.0));
    let bracket_applies = rank.at_least(2 * (d as u64 + 1));
    let pd = checked_pow(p, d);
    let mut size_ok = true;
    let mut rows = Vec::with_capacity(atoms.len());
    for atom in &atoms {
        let mut indicator = vec![Complex64::new(0.0, 0.0); size];
        for &x in &atom.points {
            indicator[x] = Complex64::new(1.0, 0.0);
        }
        let spectrum = spectrum_of(p, n, &indicator);
        let scale = size as f64 / atom.size() as f64;
        let max_phase = spectrum.values[1..]
            .iter()
            .map(|z| z.norm() * scale)
            .fold(0.0, f64::max);
        let twice = 2 * atom.size() as u128 * pd;
        if twice < size as u128 || twice > 3 * size as u128 {
            size_ok = false;
        }
        rows.push(AtomEquidistribution {
            label: atom.label.clone(),
            size: atom.size(),
            ratio: atom.size() as f64 / size as f64,
            max_phase,
        });
    }
    let max_phase = rows.iter().map(|a| a.max_phase).fold(0.0, f64::max);
    let ratios = rows.iter().map(|a| a.ratio);
    let min_ratio = ratios.clone().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.fold(0.0, f64::max);
    let pdf = (p as f64).powi(-(d as i32));
    Ok(EquidistributionReport {
        rank,
        complexity: d,
        phase_bound,
        max_phase,
        phase_ok: phase_bound.map(|bound| max_phase <= bound + 1e-9),
        size_bracket: bracket_applies.then_some((pdf / 2.0, 1.5 * pdf)),
        min_ratio,
        max_ratio,
        size_ok: bracket_applies.then_some(size_ok),
        atoms: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_form(p: u32, n: usize, rng: &mut impl Rng) -> QuadPoly {
        let upper: Vec<u32> = (0..n * (n + 1) / 2).map(|_| rng.random_range(0..p)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..p)).collect();
        QuadPoly::from_upper(p, n, &upper, b, rng.random_range(0..p)).unwrap()
    }

    fn random_full_rank(p: u32, n: usize, rng: &mut impl Rng) -> QuadPoly {
        loop {
            let q = random_form(p, n, rng);
            if q.rank() == n {
                return q;
            }
        }
    }

    fn antidiagonal() -> QuadPoly {
        QuadPoly::new(3, 2, vec![0, 2, 2, 0], vec![0, 0], 0).unwrap()
    }

    #[test]
    fn trivial_factor_is_one_atom() {
        let b = QuadraticFactor::trivial(3, 3).unwrap();
        let atoms = b.atoms(&Budget::default()).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].size(), 27);
        assert_eq!(b.rank(&Budget::default()).unwrap().rank, FactorRank::Infinite);
    }

    #[test]
    fn independent_linear_polys_give_equal_cosets() {
        let p = 3;
        let l1 = QuadPoly::linear(&FieldVector::new(p, [1, 0, 2, 0]), 1).unwrap();
        let l2 = QuadPoly::linear(&FieldVector::new(p, [0, 1, 1, 1]), 0).unwrap();
        let b = QuadraticFactor::new(p, 4, vec![l1, l2], vec![]).unwrap();
        let atoms = b.atoms(&Budget::default()).unwrap();
        assert_eq!(atoms.len(), 9);
        assert!(atoms.iter().all(|a| a.size() == 9));
        assert_eq!(b.linear_layer_subspace().dim(), 2);
    }

    #[test]
    fn atoms_match_point_classification() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let budget = Budget::default();
        for _ in 0..5 {
            let q = random_form(3, 4, &mut rng);
            if q.degree() < 2 {
                continue;
            }
            let b = QuadraticFactor::new(3, 4, vec![], vec![q.clone()]).unwrap();
            let mut counts = [0usize; 3];
            for x in 0..81 {
                counts[q.eval(&FieldVector::from_index(3, 4, x)) as usize] += 1;
            }
            let atoms = b.atoms(&budget).unwrap();
            let nonempty: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
            assert_eq!(atoms.iter().map(|a| a.size()).collect::<Vec<_>>(), nonempty);
            for a in &atoms {
                for &x in &a.points {
                    assert_eq!(q.eval(&FieldVector::from_index(3, 4, x)), a.label[0]);
                }
            }
        }
    }

    #[test]
    fn antidiagonal_has_rank_two() {
        let b = QuadraticFactor::new(3, 2, vec![], vec![antidiagonal()]).unwrap();
        let r = b.rank(&Budget::default()).unwrap();
        assert_eq!(r.rank, FactorRank::Finite(2));
        assert_eq!(r.witness, Some(vec![1]));
    }

    #[test]
    fn cancelling_pair_has_rank_zero() {
        let q1 = antidiagonal();
        let q2 = q1.scale(2);
        let b = QuadraticFactor::new(3, 2, vec![], vec![q1, q2]).unwrap();
        let r = b.rank(&Budget::default()).unwrap();
        assert_eq!(r.rank, FactorRank::Finite(0));
        assert_eq!(r.witness, Some(vec![1, 1]));
    }

    #[test]
    fn rank_matches_brute_force_over_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let q1 = random_full_rank(3, 4, &mut rng);
            let q2 = random_full_rank(3, 4, &mut rng);
            let b = QuadraticFactor::new(3, 4, vec![], vec![q1.clone(), q2.clone()]).unwrap();
            let classes = [(1, 0), (0, 1), (1, 1), (1, 2)];
            let brute = classes
                .iter()
                .map(|&(a, c)| q1.scale(a).axpy(c, &q2).rank())
                .min()
                .unwrap();
            assert_eq!(b.rank(&Budget::default()).unwrap().rank, FactorRank::Finite(brute));
        }
    }

    #[test]
    fn linear_factor_skips_phase_bound() {
        let l = QuadPoly::linear(&FieldVector::new(3, [1, 1, 0]), 0).unwrap();
        let b = QuadraticFactor::new(3, 3, vec![l], vec![]).unwrap();
        let report = check_equidistribution(&b, &Budget::default()).unwrap();
        assert!(report.phase_ok.is_none());
        assert!((report.max_phase - 1.0).abs() < 1e-9);
        assert_eq!(report.size_ok, Some(true));
    }

    #[test]
    fn full_rank_quadric_atom_sizes_in_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let q = random_full_rank(3, 4, &mut rng);
            let b = QuadraticFactor::new(3, 4, vec![], vec![q]).unwrap();
            let report = check_equidistribution(&b, &Budget::default()).unwrap();
            assert_eq!(report.size_ok, Some(true));
            assert!(report.min_ratio >= 1.0 / 6.0 && report.max_ratio <= 0.5);
        }
    }

    #[test]
    fn record_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = QuadPoly::linear(&FieldVector::new(3, [0, 1, 2]), 2).unwrap();
        let q = random_full_rank(3, 3, &mut rng);
        let b = QuadraticFactor::new(3, 3, vec![l], vec![q]).unwrap();
        let json = serde_json::to_string(&b.record()).unwrap();
        let back: FactorRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(QuadraticFactor::from_record(&back).unwrap(), b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn atoms_partition_space(seed in any::<u64>(), nl in 0usize..3, nq in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b = QuadraticFactor::trivial(3, 3).unwrap();
            for _ in 0..nl {
                b.push(QuadPoly::linear(&FieldVector::random(3, 3, &mut rng), rng.random_range(0..3)).unwrap()).unwrap();
            }
            for _ in 0..nq {
                b.push(random_form(3, 3, &mut rng)).unwrap();
            }
            let atoms = b.atoms(&Budget::default()).unwrap();
            prop_assert_eq!(atoms.iter().map(|a| a.size()).sum::<usize>(), 27);
            let labels: std::collections::BTreeSet<_> = atoms.iter().map(|a| a.label.clone()).collect();
            prop_assert_eq!(labels.len(), atoms.len());
            prop_assert!(atoms.iter().all(|a| a.size() > 0));
        }

        #[test]
        fn rank_invariant_under_relabeling(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q1 = random_form(3, 3, &mut rng);
            let q2 = random_form(3, 3, &mut rng);
            prop_assume!(q1.degree() == 2 && q2.degree() == 2 && q1.add(&q2).degree() == 2);
            let budget = Budget::default();
            let a = QuadraticFactor::new(3, 3, vec![], vec![q1.clone(), q2.clone()]).unwrap();
            let b = QuadraticFactor::new(3, 3, vec![], vec![q1.clone(), q1.add(&q2)]).unwrap();
            prop_assert_eq!(a.rank(&budget).unwrap().rank, b.rank(&budget).unwrap().rank);
        }
    }
}
