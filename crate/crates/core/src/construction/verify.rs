//! Large-bias checks on built instances.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::instance::Instance;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::field_space::{FieldVector, Subspace};
use crate::fourier::{char, coset_biases, coset_fourier, PointFunction};
use crate::numeric::{pairwise_sum_complex, CMP_SLACK};

/// The layer `i` with `W ≤ H_{i−1}` and `W ≰ H_i`, or `None` when `W ≤ H_s`.
pub fn locate_layer(inst: &Instance, w: &Subspace) -> Result<Option<usize>> {
    for i in 1..=inst.s() {
        if !inst.h(i).contains(w)? {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Outcome of the large-bias check for one subspace.
#[derive(Debug, Clone, Serialize)]
pub struct LargeBiasReport {
    /// Located layer; `None` means `W ≤ H_s` (fully regular depth).
    pub layer: Option<usize>,
    pub codim: usize,
    pub weight: f64,
    /// `w_i/2p`, the bias level.
    pub bias_level: f64,
    /// `w_i/8p`, the required fraction.
    pub target: f64,
    pub num_cosets: usize,
    /// Fraction of cosets whose largest balanced coefficient is at least `w_i/2p`.
    pub bias_fraction: f64,
    /// Fraction of cosets `W + c` with `Re f̂|_{W+c}(ξ_{u_c}) ≥ w_i/2p`, where
    /// `u_c` is the `U_{i−1}` part of `c`.
    pub xi_fraction: f64,
    /// Fraction of cosets that are not `w_i/8p`-uniform.
    pub bad_fraction: f64,
    pub max_bias: f64,
    /// Largest balanced coefficient of each coset, in coset order.
    #[serde(skip)]
    pub coset_biases: Vec<f64>,
    pub pass: bool,
}

impl LargeBiasReport {
    pub fn is_fully_regular_depth(&self) -> bool {
        self.layer.is_none()
    }
}

/// Checks that `P(W)` carries bias at least `w_i/2p` on a `w_i/8p`-fraction of
/// its cosets, for the layer `i` located from `W`.
pub fn verify_large_bias(inst: &Instance, w: &Subspace, budget: &Budget) -> Result<LargeBiasReport> {
    if w.p() != inst.p || w.ambient_dim() != inst.n {
        return Err(Error::DimensionMismatch("subspace outside the instance space".into()));
    }
    let layer = locate_layer(inst, w)?;
    let biases = coset_biases(&inst.f, w, budget)?;
    let values: Vec<f64> = biases.iter().map(|b| b.value).collect();
    let num_cosets = values.len();
    let max_bias = values.iter().copied().fold(0.0, f64::max);
    let Some(i) = layer else {
        return Ok(LargeBiasReport {
            layer,
            codim: w.codim(),
            weight: 0.0,
            bias_level: 0.0,
            target: 0.0,
            num_cosets,
            bias_fraction: 0.0,
            xi_fraction: 0.0,
            bad_fraction: 0.0,
            max_bias,
            coset_biases: values,
            pass: true,
        });
    };
    let p = inst.p as f64;
    let weight = inst.weights[i - 1];
    let bias_level = weight / (2.0 * p);
    let target = weight / (8.0 * p);
    let fraction = |count: usize| count as f64 / num_cosets as f64;
    let biased = values.iter().filter(|&&v| v >= bias_level - CMP_SLACK).count();
    let bad = values.iter().filter(|&&v| v > target + CMP_SLACK).count();
    let xi_hits = biases
        .par_iter()
        .map(|b| {
            let c = b.coset.rep();
            let u = inst.u_index_of(i, c.index());
            let coefficient = coset_fourier(&inst.f, w, c, &inst.xi(i, u), false, budget)?;
            Ok(coefficient.re >= bias_level - CMP_SLACK)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&hit| hit)
        .count();
    let bias_fraction = fraction(biased);
    let xi_fraction = fraction(xi_hits);
    let pass = bias_fraction >= target - CMP_SLACK && xi_fraction >= target - CMP_SLACK;
    Ok(LargeBiasReport {
        layer,
        codim: w.codim(),
        weight,
        bias_level,
        target,
        num_cosets,
        bias_fraction,
        xi_fraction,
        bad_fraction: fraction(bad),
        max_bias,
        coset_biases: values,
        pass,
    })
}

/// `E_{h∈H_{i−1}} f̂_{u,h}(ξ_u)` for any `W ≤ H_{i−1}`, evaluated as
/// `E_{x∈H_{i−1}} f(x+u) e_p((x+u)ᵀξ_u)`.
pub fn claim_mean(inst: &Instance, i: usize, u_index: usize) -> Result<Complex64> {
    check_claim_args(inst, i, u_index)?;
    let p = inst.p;
    let stride = (p as usize).pow(inst.big_d(i - 1) as u32);
    let xi = inst.xi(i, u_index);
    let values = inst.f.values();
    let terms: Vec<Complex64> = (0..values.len() / stride)
        .map(|k| {
            let x = u_index + k * stride;
            let xv = FieldVector::from_index(p, inst.n, x);
            values[x] * char(p, xi.dot(&xv))
        })
        .collect();
    Ok(pairwise_sum_complex(&terms) / terms.len() as f64)
}

/// The same mean computed through the cosets `W + u + h` of a given
/// `W ≤ H_{i−1}`, one term per coset of `W` inside `H_{i−1} + u`.
pub fn claim_mean_through(
    inst: &Instance,
    i: usize,
    u_index: usize,
    w: &Subspace,
    budget: &Budget,
) -> Result<Complex64> {
    check_claim_args(inst, i, u_index)?;
    let h_prev = inst.h(i - 1);
    if !h_prev.contains(w)? {
        return Err(Error::Hypothesis(format!("W is not contained in H_{}", i - 1)));
    }
    let u = inst.u_vector(u_index);
    let xi = inst.xi(i, u_index);
    let terms = w
        .cosets(budget)?
        .into_par_iter()
        .filter(|coset| h_prev.contains_vector(&coset.rep().sub(&u)))
        .map(|coset| coset_fourier(&inst.f, w, coset.rep(), &xi, false, budget))
        .collect::<Result<Vec<Complex64>>>()?;
    Ok(pairwise_sum_complex(&terms) / terms.len() as f64)
}

fn check_claim_args(inst: &Instance, i: usize, u_index: usize) -> Result<()> {
    if i == 0 || i > inst.s() {
        return Err(Error::InvalidParameter(format!("layer {i} outside 1..={}", inst.s())));
    }
    let count = inst.tuples[i - 1].len();
    if u_index >= count {
        return Err(Error::InvalidParameter(format!(
            "label {u_index} outside U_{} of size {count}",
            i - 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimCheck {
    pub layer: usize,
    pub u: usize,
    pub re: f64,
    pub im: f64,
    pub expected: f64,
    pub pass: bool,
}

/// Compares the claim mean with `w_i/p` at tolerance 1e-9.
pub fn claim_mean_check(inst: &Instance, i: usize, u_index: usize) -> Result<ClaimCheck> {
    let value = claim_mean(inst, i, u_index)?;
    let expected = inst.weights[i - 1] / inst.p as f64;
    Ok(ClaimCheck {
        layer: i,
        u: u_index,
        re: value.re,
        im: value.im,
        expected,
        pass: (value - expected).norm() <= 1e-9,
    })
}

/// The subspaces `H_j` and `H_j ∩ ⟨ξ⟩^⊥` for every `ξ` in every tuple,
/// without repeats.
pub fn adversarial_family(inst: &Instance) -> Result<Vec<Subspace>> {
    let mut seen = BTreeSet::new();
    let mut family = Vec::new();
    let mut xis: BTreeSet<FieldVector> = BTreeSet::new();
    for (i, tuple) in inst.tuples.iter().enumerate() {
        for u in 0..tuple.len() {
            xis.insert(inst.xi(i + 1, u));
        }
    }
    for j in 0..=inst.s() {
        let h = inst.h(j);
        let mut push = |w: Subspace| {
            if seen.insert((w.pivots().to_vec(), w.basis().to_vec())) {
                family.push(w);
            }
        };
        for xi in &xis {
            push(h.intersect_hyperplane(xi)?);
        }
        push(h);
    }
    Ok(family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::char as e_p;

    fn inst() -> Instance {
        Instance::build(2, 6, &[0.25; 3], 7, &Budget::default()).unwrap()
    }

    fn naive_coset_coefficient(inst: &Instance, w: &Subspace, c: &FieldVector, r: &FieldVector) -> Complex64 {
        let points: Vec<usize> = (0..inst.f.values().len())
            .filter(|&x| w.contains_vector(&FieldVector::from_index(inst.p, inst.n, x).sub(c)))
            .collect();
        let total: Complex64 = points
            .iter()
            .map(|&x| inst.f.values()[x] * e_p(inst.p, r.dot(&FieldVector::from_index(inst.p, inst.n, x))))
            .sum();
        total / points.len() as f64
    }

    #[test]
    fn claim_mean_matches_weight_over_p() {
        let inst = inst();
        for i in 1..=3 {
            for u in 0..inst.tuples[i - 1].len() {
                let check = claim_mean_check(&inst, i, u).unwrap();
                assert!(check.pass, "{check:?}");
            }
        }
        assert!((claim_mean(&inst, 3, 5).unwrap().re - 0.125).abs() < 1e-12);
    }

    #[test]
    fn claim_mean_by_enumerating_translates() {
        // Direct average over every h ∈ H_{i−1} of the coefficient on W + u + h.
        let inst = inst();
        let b = Budget::default();
        for i in 1..=3 {
            let h_prev = inst.h(i - 1);
            let hs = h_prev.elements(&b).unwrap();
            let mut ws = vec![h_prev.clone()];
            for u in 0..inst.tuples[i - 1].len() {
                ws.push(h_prev.intersect_hyperplane(&inst.xi(i, u)).unwrap());
            }
            for u in 0..inst.tuples[i - 1].len() {
                let uv = inst.u_vector(u);
                let xi = inst.xi(i, u);
                let expected = claim_mean(&inst, i, u).unwrap();
                for w in &ws {
                    let sum: Complex64 = hs
                        .iter()
                        .map(|h| naive_coset_coefficient(&inst, w, &uv.add(h), &xi))
                        .sum();
                    let mean = sum / hs.len() as f64;
                    assert!((mean - expected).norm() < 1e-12);
                    let through = claim_mean_through(&inst, i, u, w, &b).unwrap();
                    assert!((through - expected).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn large_bias_on_h2() {
        let inst = inst();
        let report = verify_large_bias(&inst, &inst.h(2), &Budget::default()).unwrap();
        assert_eq!(report.layer, Some(3));
        assert!(report.bias_fraction >= 1.0 / 64.0);
        assert!(report.pass);
        let top = verify_large_bias(&inst, &inst.h(3), &Budget::default()).unwrap();
        assert!(top.is_fully_regular_depth());
    }

    #[test]
    fn per_coset_biases_match_naive_scan() {
        let inst = inst();
        let b = Budget::default();
        let w = inst.h(2).intersect_hyperplane(&inst.xi(3, 0)).unwrap();
        let report = verify_large_bias(&inst, &w, &b).unwrap();
        for (k, coset) in w.cosets(&b).unwrap().iter().enumerate() {
            let c = coset.rep();
            let mut best: f64 = 0.0;
            for r in 0..64 {
                let rv = FieldVector::from_index(2, 6, r);
                if w.annihilator().contains_vector(&rv) {
                    continue;
                }
                best = best.max(naive_coset_coefficient(&inst, &w, c, &rv).norm());
            }
            // Balanced and plain coefficients agree off W^⊥.
            assert!((report.coset_biases[k] - best).abs() < 1e-9);
        }
    }

    #[test]
    fn adversarial_family_passes() {
        let b = Budget::default();
        for (p, n, w, seed) in [(2, 6, vec![0.25; 3], 7), (3, 7, vec![1.0 / 9.0; 4], 3)] {
            let inst = Instance::build(p, n, &w, seed, &b).unwrap();
            let family = adversarial_family(&inst).unwrap();
            assert!(family.len() > inst.s());
            for w in &family {
                let report = verify_large_bias(&inst, w, &b).unwrap();
                assert!(report.pass, "{report:?}");
                if report.layer.is_some() {
                    assert!(report.bad_fraction > report.target);
                }
            }
        }
    }

    #[test]
    fn layer_location() {
        let inst = inst();
        assert_eq!(locate_layer(&inst, &Subspace::full(2, 6)).unwrap(), Some(1));
        assert_eq!(locate_layer(&inst, &inst.h(1)).unwrap(), Some(2));
        assert_eq!(locate_layer(&inst, &Subspace::zero(2, 6)).unwrap(), None);
    }
}
