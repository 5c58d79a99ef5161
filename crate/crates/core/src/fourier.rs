//! Character sums, Fourier transforms over F_p^n and over cosets,
//! uniformity and regularity checks, and the Gowers U² and U³ norms.
//!
//! Transforms use the normalization `f̂(r) = E_x f(x) e_p(rᵀx)`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::budget::{checked_pow, Budget};
use crate::error::{Error, Result};
use crate::field_space::{check_prime, point_count, Coset, FieldVector, Subspace};
use crate::numeric::{pairwise_sum, pairwise_sum_complex, CMP_SLACK};

const MAGIC: &[u8; 4] = b"FPFN";

/// `e_p(t) = exp(2πi t/p)`.
pub fn char(p: u32, t: u32) -> Complex64 {
    let angle = 2.0 * PI * (t % p) as f64 / p as f64;
    Complex64::new(angle.cos(), angle.sin())
}

/// The table `e_p(0), …, e_p(p−1)`.
pub fn roots_of_unity(p: u32) -> Vec<Complex64> {
    (0..p).map(|t| char(p, t)).collect()
}

/// A real-valued table over F_p^n.
pub trait PointFunction {
    fn p(&self) -> u32;
    fn n(&self) -> usize;
    fn values(&self) -> &[f64];

    fn value_at(&self, x: &FieldVector) -> f64 {
        self.values()[x.index()]
    }

    fn mean(&self) -> f64 {
        pairwise_sum(self.values()) / self.values().len() as f64
    }

    fn l2_norm(&self) -> f64 {
        let squares: Vec<f64> = self.values().iter().map(|v| v * v).collect();
        (pairwise_sum(&squares) / squares.len() as f64).sqrt()
    }
}

/// A function `F_p^n → [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFunction {
    p: u32,
    n: usize,
    values: Vec<f64>,
}

/// A function `F_p^n → [−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedFunction {
    p: u32,
    n: usize,
    values: Vec<f64>,
}

fn check_table(p: u32, n: usize, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    check_prime(p)?;
    let expected = checked_pow(p, n);
    if values.len() as u128 != expected {
        return Err(Error::DimensionMismatch(format!(
            "table has {} entries, F_{p}^{n} has {expected} points",
            values.len()
        )));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(lo..=hi).contains(*v))
    {
        return Err(Error::InvalidParameter(format!(
            "value {v} at index {i} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl DensityFunction {
    pub fn new(p: u32, n: usize, values: Vec<f64>) -> Result<Self> {
        check_table(p, n, &values, 0.0, 1.0)?;
        Ok(DensityFunction { p, n, values })
    }

    pub fn constant(p: u32, n: usize, value: f64, budget: &Budget) -> Result<Self> {
        let size = point_count(p, n, budget)?;
        DensityFunction::new(p, n, vec![value; size])
    }

    pub fn from_fn(
        p: u32,
        n: usize,
        budget: &Budget,
        f: impl Fn(&FieldVector) -> f64,
    ) -> Result<Self> {
        let size = point_count(p, n, budget)?;
        let values = (0..size)
            .map(|i| f(&FieldVector::from_index(p, n, i)))
            .collect();
        DensityFunction::new(p, n, values)
    }

    /// Independent uniform values in `[0, 1)`.
    pub fn random<R: Rng + ?Sized>(p: u32, n: usize, rng: &mut R, budget: &Budget) -> Result<Self> {
        let size = point_count(p, n, budget)?;
        let values = (0..size).map(|_| rng.random::<f64>()).collect();
        DensityFunction::new(p, n, values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn to_balanced(&self) -> BalancedFunction {
        BalancedFunction {
            p: self.p,
            n: self.n,
            values: self.values.clone(),
        }
    }

    /// `self − mean(self)`.
    pub fn centered(&self) -> BalancedFunction {
        let mean = self.mean();
        BalancedFunction {
            p: self.p,
            n: self.n,
            values: self.values.iter().map(|v| v - mean).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.p.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], budget: &Budget) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing FPFN header".into()));
        }
        let p = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        check_prime(p)?;
        let size = point_count(p, n, budget)?;
        let body = &bytes[12..];
        if body.len() != 8 * size {
            return Err(Error::Format(format!(
                "expected {} bytes of values, found {}",
                8 * size,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DensityFunction::new(p, n, values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, budget: &Budget) -> Result<Self> {
        DensityFunction::from_bytes(&fs::read(path)?, budget)
    }
}

impl BalancedFunction {
    pub fn new(p: u32, n: usize, values: Vec<f64>) -> Result<Self> {
        check_table(p, n, &values, -1.0, 1.0)?;
        Ok(BalancedFunction { p, n, values })
    }

    /// Pointwise `a − b`.
    pub fn difference(a: &impl PointFunction, b: &impl PointFunction) -> Result<Self> {
        if a.p() != b.p() || a.n() != b.n() {
            return Err(Error::DimensionMismatch(
                "functions on different spaces".into(),
            ));
        }
        let values = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x - y)
            .collect();
        BalancedFunction::new(a.p(), a.n(), values)
    }

    pub fn zero(p: u32, n: usize, budget: &Budget) -> Result<Self> {
        let size = point_count(p, n, budget)?;
        BalancedFunction::new(p, n, vec![0.0; size])
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

macro_rules! impl_point_function {
    ($t:ty) => {
        impl PointFunction for $t {
            fn p(&self) -> u32 {
                self.p
            }
            fn n(&self) -> usize {
                self.n
            }
            fn values(&self) -> &[f64] {
                &self.values
            }
        }
    };
}

impl_point_function!(DensityFunction);
impl_point_function!(BalancedFunction);

/// Fourier coefficients of a function on F_p^n, indexed by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub p: u32,
    pub n: usize,
    pub values: Vec<Complex64>,
}

impl Spectrum {
    pub fn at(&self, r: &FieldVector) -> Complex64 {
        self.values[r.index()]
    }

    /// `Σ_r |f̂(r)|²`.
    pub fn energy(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        pairwise_sum(&sq)
    }

    /// `(Σ_r |f̂(r)|⁴)^{1/4}`.
    pub fn l4_norm(&self) -> f64 {
        let q: Vec<f64> = self.values.iter().map(|z| z.norm_sqr().powi(2)).collect();
        pairwise_sum(&q).powf(0.25)
    }

    /// Index and modulus of the largest coefficient, ties to the smaller index.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, z) in self.values.iter().enumerate() {
            let m = z.norm();
            if m > best.1 {
                best = (i, m);
            }
        }
        best
    }
}

/// In-place unnormalized transform `a(r) ← Σ_x a(x) e_p(rᵀx)` over a
/// little-endian table of `p^n` entries.
pub fn transform_in_place(p: u32, n: usize, data: &mut [Complex64]) {
    let pu = p as usize;
    debug_assert_eq!(data.len(), pu.pow(n as u32));
    if p == 2 {
        let mut stride = 1;
        for _ in 0..n {
            for block in data.chunks_exact_mut(2 * stride) {
                let (lo, hi) = block.split_at_mut(stride);
                for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = x + y;
                    *b = x - y;
                }
            }
            stride *= 2;
        }
        return;
    }
    let roots = roots_of_unity(p);
    let mut line = vec![Complex64::new(0.0, 0.0); pu];
    let mut stride = 1;
    for _ in 0..n {
        let span = stride * pu;
        for base in (0..data.len()).step_by(span) {
            for offset in 0..stride {
                let start = base + offset;
                for (x, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + x * stride];
                }
                for r in 0..pu {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (x, &v) in line.iter().enumerate() {
                        acc += v * roots[(r * x) % pu];
                    }
                    data[start + r * stride] = acc;
                }
            }
        }
        stride = span;
    }
}

/// Normalized spectrum of a complex table.
pub fn spectrum_of(p: u32, n: usize, values: &[Complex64]) -> Spectrum {
    let mut data = values.to_vec();
    transform_in_place(p, n, &mut data);
    let scale = 1.0 / data.len() as f64;
    for z in &mut data {
        *z *= scale;
    }
    Spectrum { p, n, values: data }
}

/// `f̂(r)` for every frequency `r`, by the tensor decomposition into
/// p-point transforms.
pub fn full_spectrum(f: &impl PointFunction, budget: &Budget) -> Result<Spectrum> {
    budget.check_points("spectrum", checked_pow(f.p(), f.n()))?;
    let data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(spectrum_of(f.p(), f.n(), &data))
}

/// `E_{x∈H+c} F(x) e_p(rᵀx)`, with `F = f − E_{H+c} f` when `balanced`.
pub fn coset_fourier(
    f: &impl PointFunction,
    h: &Subspace,
    c: &FieldVector,
    r: &FieldVector,
    balanced: bool,
    budget: &Budget,
) -> Result<Complex64> {
    check_function_space(f, h)?;
    let points = h.coset_point_indices(c, budget)?;
    let p = f.p();
    let values: Vec<f64> = points.iter().map(|&x| f.values()[x]).collect();
    let mean = if balanced {
        pairwise_sum(&values) / values.len() as f64
    } else {
        0.0
    };
    let terms: Vec<Complex64> = points
        .iter()
        .zip(&values)
        .map(|(&x, &v)| {
            let xv = FieldVector::from_index(p, f.n(), x);
            (v - mean) * char(p, r.dot(&xv))
        })
        .collect();
    Ok(pairwise_sum_complex(&terms) / terms.len() as f64)
}

fn check_function_space(f: &impl PointFunction, h: &Subspace) -> Result<()> {
    if f.p() != h.p() || f.n() != h.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "function on F_{}^{} with subspace of F_{}^{}",
            f.p(),
            f.n(),
            h.p(),
            h.ambient_dim()
        )));
    }
    Ok(())
}

/// Largest balanced Fourier coefficient of `f` on the coset `H + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosetBias {
    pub coset: Coset,
    /// A frequency attaining the maximum, supported on the pivot columns of H.
    pub frequency: FieldVector,
    pub value: f64,
    /// The signed coefficient at `frequency`.
    pub coefficient: Complex64,
}

/// Balanced spectrum of `f` pulled back to the coefficient space of `H`:
/// entry `s` is `F̂|_{H+c}(r)` for any `r` with `rᵀb_i = s_i`.
pub fn coset_spectrum(
    f: &impl PointFunction,
    h: &Subspace,
    c: &FieldVector,
    budget: &Budget,
) -> Result<Spectrum> {
    check_function_space(f, h)?;
    let points = h.coset_point_indices(c, budget)?;
    let values: Vec<f64> = points.iter().map(|&x| f.values()[x]).collect();
    let mean = pairwise_sum(&values) / values.len() as f64;
    let data: Vec<Complex64> = values
        .iter()
        .map(|&v| Complex64::new(v - mean, 0.0))
        .collect();
    Ok(spectrum_of(f.p(), h.dim(), &data))
}

/// Frequency in F_p^n whose pairings with the basis of `h` are `s`.
pub fn lift_frequency(h: &Subspace, s_index: usize) -> FieldVector {
    let p = h.p();
    let s = FieldVector::from_index(p, h.dim(), s_index);
    let mut r = FieldVector::zero(p, h.ambient_dim());
    for (i, &pivot) in h.pivots().iter().enumerate() {
        r.set(pivot, s.get(i));
    }
    r
}

/// `max_r |F̂|_{H+c}(r)|`, scanning one frequency per class modulo `H^⊥`.
pub fn max_bias_on_coset(
    f: &impl PointFunction,
    h: &Subspace,
    c: &FieldVector,
    budget: &Budget,
) -> Result<CosetBias> {
    let spectrum = coset_spectrum(f, h, c, budget)?;
    let (s, value) = spectrum.argmax();
    Ok(CosetBias {
        coset: h.coset(c)?,
        frequency: lift_frequency(h, s),
        value,
        coefficient: spectrum.values[s],
    })
}

/// Cosets of H on which f fails to be ε-uniform.
#[derive(Debug, Clone)]
pub struct UniformityReport {
    pub epsilon: f64,
    pub num_cosets: usize,
    pub bad_cosets: Vec<CosetBias>,
    pub bad_fraction: f64,
    /// Largest bias over all cosets.
    pub max_bias: f64,
}

impl UniformityReport {
    /// Whether the coset partition is ε-regular.
    pub fn is_regular(&self) -> bool {
        self.bad_fraction <= self.epsilon + CMP_SLACK
    }
}

/// Whether a bias is within `eps`, allowing [`CMP_SLACK`] of rounding.
pub fn is_uniform(bias: f64, eps: f64) -> bool {
    bias <= eps + CMP_SLACK
}

/// Per-coset maximal biases of `f` over every coset of `h`, in coset order.
pub fn coset_biases(
    f: &impl PointFunction,
    h: &Subspace,
    budget: &Budget,
) -> Result<Vec<CosetBias>> {
    check_function_space(f, h)?;
    budget.check_points("points of F_p^n", checked_pow(f.p(), f.n()))?;
    let cosets = h.cosets(budget)?;
    let values = f.values();
    let (p, n) = (f.p(), f.n());
    cosets
        .into_par_iter()
        .map(|coset| {
            let view = TableView { p, n, values };
            max_bias_on_coset(&view, h, coset.rep(), budget)
        })
        .collect()
}

struct TableView<'a> {
    p: u32,
    n: usize,
    values: &'a [f64],
}

impl PointFunction for TableView<'_> {
    fn p(&self) -> u32 {
        self.p
    }
    fn n(&self) -> usize {
        self.n
    }
    fn values(&self) -> &[f64] {
        self.values
    }
}

/// Lists every coset of `h` on which `f` is not `eps`-uniform.
pub fn regularity_check(
    f: &impl PointFunction,
    h: &Subspace,
    eps: f64,
    budget: &Budget,
) -> Result<UniformityReport> {
    let biases = coset_biases(f, h, budget)?;
    let num_cosets = biases.len();
    let max_bias = biases.iter().map(|b| b.value).fold(0.0, f64::max);
    let bad_cosets: Vec<CosetBias> = biases
        .into_iter()
        .filter(|b| !is_uniform(b.value, eps))
        .collect();
    Ok(UniformityReport {
        epsilon: eps,
        num_cosets,
        bad_fraction: bad_cosets.len() as f64 / num_cosets as f64,
        bad_cosets,
        max_bias,
    })
}

/// `‖f‖_{U²} = ‖f̂‖₄`.
pub fn u2_norm(f: &impl PointFunction, budget: &Budget) -> Result<f64> {
    Ok(full_spectrum(f, budget)?.l4_norm())
}

/// Index of `x + h` for little-endian base-p indices.
pub fn add_indices(p: u32, n: usize, mut x: usize, mut h: usize) -> usize {
    if p == 2 {
        return x ^ h;
    }
    let pu = p as usize;
    let mut out = 0;
    let mut place = 1;
    for _ in 0..n {
        out += ((x % pu + h % pu) % pu) * place;
        x /= pu;
        h /= pu;
        place *= pu;
    }
    out
}

/// Table of `x + h` for all `x`.
pub fn translation_table(p: u32, n: usize, h: usize) -> Vec<usize> {
    let size = (p as usize).pow(n as u32);
    (0..size).map(|x| add_indices(p, n, x, h)).collect()
}

/// `‖f‖_{U³}`, the eighth root of the average of `f` over
/// three-dimensional parallelepipeds.
///
/// Computed as `E_h ‖Δ_h f‖_{U²}⁴` with `Δ_h f(x) = f(x+h)·f(x)`, which
/// costs `p^{2n}` work instead of the `p^{4n}` direct average.
pub fn u3_norm(f: &impl PointFunction, budget: &Budget) -> Result<f64> {
    let (p, n) = (f.p(), f.n());
    let size = point_count(p, n, budget)?;
    budget.check_pair_work("U3 pair sweep", checked_pow(p, 2 * n))?;
    let values = f.values();
    let per_shift: Vec<f64> = (0..size)
        .into_par_iter()
        .map(|h| {
            let data: Vec<Complex64> = (0..size)
                .map(|x| Complex64::new(values[add_indices(p, n, x, h)] * values[x], 0.0))
                .collect();
            let spec = spectrum_of(p, n, &data);
            let q: Vec<f64> = spec.values.iter().map(|z| z.norm_sqr().powi(2)).collect();
            pairwise_sum(&q)
        })
        .collect();
    let eighth = pairwise_sum(&per_shift) / size as f64;
    Ok(eighth.max(0.0).powf(0.125))
}
