//! Polynomials of degree at most two over F_p^n, p odd.

use serde::{Deserialize, Serialize};

use crate::budget::{checked_pow, Budget};
use crate::error::{Error, Result};
use crate::field_space::{add_mod, check_prime, mul_mod, FieldVector, Subspace};

pub(crate) fn check_odd_prime(p: u32) -> Result<()> {
    check_prime(p)?;
    if p == 2 {
        return Err(Error::EvenCharacteristic(p));
    }
    Ok(())
}

/// `P(x) = xᵀMx + bᵀx + c` with `M` symmetric.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuadPoly {
    p: u32,
    n: usize,
    /// Row-major `n × n`.
    m: Vec<u32>,
    b: Vec<u32>,
    c: u32,
}

impl QuadPoly {
    pub fn new(p: u32, n: usize, m: Vec<u32>, b: Vec<u32>, c: u32) -> Result<Self> {
        check_odd_prime(p)?;
        if m.len() != n * n || b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "polynomial data of sizes {} and {} for n = {n}",
                m.len(),
                b.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if m[i * n + j] != m[j * n + i] {
                    return Err(Error::InvalidParameter("matrix is not symmetric".into()));
                }
            }
        }
        let m = m.into_iter().map(|v| v % p).collect();
        let b = b.into_iter().map(|v| v % p).collect();
        Ok(QuadPoly { p, n, m, b, c: c % p })
    }

    pub fn zero(p: u32, n: usize) -> Result<Self> {
        QuadPoly::new(p, n, vec![0; n * n], vec![0; n], 0)
    }

    /// The linear polynomial `bᵀx + c`.
    pub fn linear(b: &FieldVector, c: u32) -> Result<Self> {
        let n = b.dim();
        QuadPoly::new(b.p(), n, vec![0; n * n], b.coords().to_vec(), c)
    }

    /// Builds from the upper triangle of `M` in row-major order (`i ≤ j`).
    pub fn from_upper(p: u32, n: usize, upper: &[u32], b: Vec<u32>, c: u32) -> Result<Self> {
        if upper.len() != n * (n + 1) / 2 {
            return Err(Error::DimensionMismatch(format!(
                "{} upper-triangle entries for n = {n}",
                upper.len()
            )));
        }
        let mut m = vec![0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[i * n + j] = upper[k] % p;
                m[j * n + i] = upper[k] % p;
                k += 1;
            }
        }
        QuadPoly::new(p, n, m, b, c)
    }

    /// The pure quadratic form whose upper triangle has base-p digits `index`.
    pub fn quadratic_part(p: u32, n: usize, mut index: u64) -> Result<Self> {
        let upper: Vec<u32> = (0..n * (n + 1) / 2)
            .map(|_| {
                let d = (index % p as u64) as u32;
                index /= p as u64;
                d
            })
            .collect();
        QuadPoly::from_upper(p, n, &upper, vec![0; n], 0)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[u32] {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> u32 {
        self.m[i * self.n + j]
    }

    pub fn linear_coeffs(&self) -> FieldVector {
        FieldVector::new(self.p, self.b.iter().copied())
    }

    pub fn constant(&self) -> u32 {
        self.c
    }

    pub fn upper(&self) -> Vec<u32> {
        let n = self.n;
        (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).map(|(i, j)| self.m[i * n + j]).collect()
    }

    pub fn degree(&self) -> usize {
        if self.m.iter().any(|&v| v != 0) {
            2
        } else if self.b.iter().any(|&v| v != 0) {
            1
        } else {
            0
        }
    }

    pub fn eval(&self, x: &FieldVector) -> u32 {
        let (p, n) = (self.p as u64, self.n);
        let xs = x.coords();
        let mut acc = self.c as u64;
        for i in 0..n {
            if xs[i] == 0 {
                continue;
            }
            let mut row = self.b[i] as u64;
            for j in 0..n {
                row += self.m[i * n + j] as u64 * xs[j] as u64 % p;
            }
            acc += xs[i] as u64 * (row % p);
        }
        (acc % p) as u32
    }

    /// Values at every point of F_p^n in index order.
    pub fn table(&self, budget: &Budget) -> Result<Vec<u32>> {
        budget.check_points("points of F_p^n", checked_pow(self.p, self.n))?;
        let size = (self.p as usize).pow(self.n as u32);
        Ok((0..size)
            .map(|x| self.eval(&FieldVector::from_index(self.p, self.n, x)))
            .collect())
    }

    pub fn add(&self, other: &QuadPoly) -> QuadPoly {
        self.axpy(1, other)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: u32, other: &QuadPoly) -> QuadPoly {
        let p = self.p;
        let comb = |x: &[u32], y: &[u32]| -> Vec<u32> {
            x.iter().zip(y).map(|(&u, &v)| add_mod(u, mul_mod(a, v, p), p)).collect()
        };
        QuadPoly {
            p,
            n: self.n,
            m: comb(&self.m, &other.m),
            b: comb(&self.b, &other.b),
            c: add_mod(self.c, mul_mod(a, other.c, p), p),
        }
    }

    pub fn scale(&self, a: u32) -> QuadPoly {
        QuadPoly::zero(self.p, self.n).expect("valid shape").axpy(a, self)
    }

    /// The linear remainder `P(x) − xᵀMx`.
    pub fn linear_part(&self) -> QuadPoly {
        QuadPoly {
            p: self.p,
            n: self.n,
            m: vec![0; self.n * self.n],
            b: self.b.clone(),
            c: self.c,
        }
    }

    /// Rows of `M` as vectors.
    pub fn matrix_rows(&self) -> Vec<FieldVector> {
        (0..self.n)
            .map(|i| FieldVector::new(self.p, self.m[i * self.n..(i + 1) * self.n].iter().copied()))
            .collect()
    }

    /// Column space of `M`, which equals its row space.
    pub fn column_space(&self) -> Subspace {
        Subspace::rref(self.p, self.n, &self.matrix_rows()).expect("rows share the space")
    }

    /// Rank of `M`.
    pub fn rank(&self) -> usize {
        self.column_space().dim()
    }
}

/// Serialized form: upper triangle of `M`, `b`, `c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyRecord {
    pub upper: Vec<u32>,
    pub b: Vec<u32>,
    pub c: u32,
}

impl QuadPoly {
    pub fn record(&self) -> PolyRecord {
        PolyRecord {
            upper: self.upper(),
            b: self.b.clone(),
            c: self.c,
        }
    }

    pub fn from_record(p: u32, n: usize, r: &PolyRecord) -> Result<Self> {
        QuadPoly::from_upper(p, n, &r.upper, r.b.clone(), r.c)
    }
}

/// Tables of the monomials `x_i x_j` (doubled when `i < j`) so that a form
/// with upper triangle `u` has values `Σ_k u_k·T_k(x)`.
pub(crate) fn monomial_tables(p: u32, n: usize, budget: &Budget) -> Result<Vec<Vec<u32>>> {
    budget.check_points("points of F_p^n", checked_pow(p, n))?;
    let size = (p as usize).pow(n as u32);
    let points: Vec<FieldVector> = (0..size).map(|x| FieldVector::from_index(p, n, x)).collect();
    let mut tables = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let factor = if i == j { 1 } else { 2 };
            tables.push(
                points
                    .iter()
                    .map(|x| mul_mod(factor, mul_mod(x.get(i), x.get(j), p), p))
                    .collect(),
            );
        }
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_poly(p: u32, n: usize, rng: &mut impl Rng) -> QuadPoly {
        let upper: Vec<u32> = (0..n * (n + 1) / 2).map(|_| rng.random_range(0..p)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..p)).collect();
        QuadPoly::from_upper(p, n, &upper, b, rng.random_range(0..p)).unwrap()
    }

    #[test]
    fn product_of_coordinates_over_f3() {
        let q = QuadPoly::new(3, 2, vec![0, 2, 2, 0], vec![0, 0], 0).unwrap();
        assert_eq!(q.eval(&FieldVector::new(3, [1, 1])), 1);
        for x in 0..9 {
            let v = FieldVector::from_index(3, 2, x);
            assert_eq!(q.eval(&v), v.get(0) * v.get(1) % 3);
        }
        assert_eq!(q.rank(), 2);
        assert_eq!(q.degree(), 2);
    }

    #[test]
    fn zero_polynomial() {
        let z = QuadPoly::zero(5, 3).unwrap();
        assert_eq!(z.degree(), 0);
        assert!(z.table(&Budget::default()).unwrap().iter().all(|&v| v == 0));
    }

    #[test]
    fn rejects_even_characteristic_and_asymmetry() {
        assert!(matches!(QuadPoly::zero(2, 2), Err(Error::EvenCharacteristic(2))));
        assert!(QuadPoly::new(3, 2, vec![0, 1, 0, 0], vec![0, 0], 0).is_err());
    }

    #[test]
    fn monomial_tables_reproduce_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tables = monomial_tables(3, 3, &Budget::default()).unwrap();
        for idx in [0u64, 1, 100, 728] {
            let q = QuadPoly::quadratic_part(3, 3, idx).unwrap();
            let upper = q.upper();
            for x in 0..27 {
                let v: u32 = upper.iter().zip(&tables).map(|(&u, t)| u * t[x]).sum::<u32>() % 3;
                assert_eq!(v, q.eval(&FieldVector::from_index(3, 3, x)));
            }
        }
        let _ = random_poly(3, 3, &mut rng);
    }

    proptest! {
        #[test]
        fn eval_matches_monomial_expansion(seed in any::<u64>(), pi in 0usize..3, n in 1usize..5) {
            let p = [3u32, 5, 7][pi];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_poly(p, n, &mut rng);
            let x = FieldVector::random(p, n, &mut rng);
            let mut total: u64 = q.constant() as u64;
            for i in 0..n {
                total += q.linear_coeffs().get(i) as u64 * x.get(i) as u64;
                for j in 0..n {
                    total += q.entry(i, j) as u64 * x.get(i) as u64 * x.get(j) as u64;
                }
            }
            prop_assert_eq!(q.eval(&x) as u64, total % p as u64);
        }

        #[test]
        fn record_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_poly(3, 4, &mut rng);
            prop_assert_eq!(QuadPoly::from_record(3, 4, &q.record()).unwrap(), q);
        }
    }
}
