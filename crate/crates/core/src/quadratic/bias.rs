//! Correlation with quadratic phases: quadratic bias on atoms, the global
//! u³ bias and its comparison with the U³ norm.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::budget::{checked_pow, Budget};
use crate::error::{Error, Result};
use crate::field_space::{point_count, FieldVector};
use crate::fourier::{roots_of_unity, spectrum_of, u3_norm, PointFunction};
use crate::numeric::pairwise_sum_complex;

use super::factor::Atom;
use super::poly::{check_odd_prime, monomial_tables, PolyRecord, QuadPoly};

/// A maximizer of `|E_x g(x) e_p(P(x))|` over polynomials of degree ≤ 2.
#[derive(Debug, Clone)]
pub struct Correlation {
    pub poly: QuadPoly,
    pub value: f64,
    /// Base-p digits of the upper triangle of the quadratic part.
    pub quad_index: u64,
    pub frequency: usize,
}

fn better(a: (f64, u64, usize), b: (f64, u64, usize)) -> (f64, u64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

/// Exhaustive over quadratic parts, spectral over linear parts. Ties go to
/// the smallest quadratic part, then the smallest frequency.
pub fn max_correlation(p: u32, n: usize, g: &[f64], budget: &Budget) -> Result<Correlation> {
    check_odd_prime(p)?;
    let size = point_count(p, n, budget)?;
    if g.len() != size {
        return Err(Error::DimensionMismatch(format!(
            "table of {} entries over {size} points",
            g.len()
        )));
    }
    let parts = checked_pow(p, n * (n + 1) / 2);
    budget.check_quadratic_parts("quadratic parts", parts)?;
    let tables = monomial_tables(p, n, budget)?;
    let roots = roots_of_unity(p);
    let pu = p as usize;
    let best = (0..parts as u64)
        .into_par_iter()
        .map_init(
            || (vec![0usize; size], vec![Complex64::new(0.0, 0.0); size]),
            |(phase, h), idx| {
                phase.iter_mut().for_each(|v| *v = 0);
                let mut rest = idx;
                for t in &tables {
                    let digit = (rest % p as u64) as usize;
                    rest /= p as u64;
                    if digit != 0 {
                        for (v, &m) in phase.iter_mut().zip(t) {
                            *v += digit * m as usize;
                        }
                    }
                }
                for ((slot, &v), &ph) in h.iter_mut().zip(g).zip(phase.iter()) {
                    *slot = roots[ph % pu] * v;
                }
                let (r, value) = spectrum_of(p, n, h).argmax();
                (value, idx, r)
            },
        )
        .reduce(|| (f64::NEG_INFINITY, u64::MAX, usize::MAX), better);
    let (value, quad_index, frequency) = best;
    let quad = QuadPoly::quadratic_part(p, n, quad_index)?;
    let lin = QuadPoly::linear(&FieldVector::from_index(p, n, frequency), 0)?;
    Ok(Correlation {
        poly: quad.add(&lin),
        value,
        quad_index,
        frequency,
    })
}

/// `E_{x∈S} g(x) e_p(P(x))` over the listed points.
pub fn phase_average(g: &impl PointFunction, points: &[usize], poly: &QuadPoly) -> Complex64 {
    let (p, n) = (g.p(), g.n());
    let roots = roots_of_unity(p);
    let terms: Vec<Complex64> = points
        .iter()
        .map(|&x| roots[poly.eval(&FieldVector::from_index(p, n, x)) as usize] * g.values()[x])
        .collect();
    pairwise_sum_complex(&terms) / points.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub size: usize,
    /// Density of `f` on the atom.
    pub alpha: f64,
    /// `‖f − α‖_{u³(B)}`.
    pub bias: f64,
    pub poly: PolyRecord,
}

/// Quadratic bias of `f` on an atom.
pub fn quadratic_bias(f: &impl PointFunction, atom: &Atom, budget: &Budget) -> Result<BiasReport> {
    let (p, n) = (f.p(), f.n());
    let size = point_count(p, n, budget)?;
    if atom.points.is_empty() {
        return Err(Error::InvalidParameter("empty atom".into()));
    }
    let values = f.values();
    let alpha = atom.points.iter().map(|&x| values[x]).sum::<f64>() / atom.size() as f64;
    let mut g = vec![0.0; size];
    for &x in &atom.points {
        g[x] = values[x] - alpha;
    }
    let best = max_correlation(p, n, &g, budget)?;
    Ok(BiasReport {
        size: atom.size(),
        alpha,
        bias: best.value * size as f64 / atom.size() as f64,
        poly: best.poly.record(),
    })
}

/// `sup_P |E_x f(x) e_p(P(x))|` against `‖f‖_{U³}` on the whole space.
#[derive(Debug, Clone, Serialize)]
pub struct DualNormReport {
    pub u3_bias: f64,
    pub u3_norm: f64,
    pub pass: bool,
}

pub fn dual_norm_check(f: &impl PointFunction, budget: &Budget) -> Result<DualNormReport> {
    let u3_bias = max_correlation(f.p(), f.n(), f.values(), budget)?.value;
    let norm = u3_norm(f, budget)?;
    Ok(DualNormReport {
        u3_bias,
        u3_norm: norm,
        pass: u3_bias <= norm + 1e-9,
    })
}

/// `|E_{x∈B} F(x) e_p(P(x))|` against `‖F‖_{U³}·p^n/|B|`.
#[derive(Debug, Clone, Serialize)]
pub struct AtomClaimReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub fn atom_claim_check(
    f: &impl PointFunction,
    atom: &Atom,
    poly: &QuadPoly,
    budget: &Budget,
) -> Result<AtomClaimReport> {
    let size = point_count(f.p(), f.n(), budget)?;
    let lhs = phase_average(f, &atom.points, poly).norm();
    let rhs = u3_norm(f, budget)? * size as f64 / atom.size() as f64;
    Ok(AtomClaimReport {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-9,
    })
}
