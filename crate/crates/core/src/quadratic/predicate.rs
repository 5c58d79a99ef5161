//! The quadratic-regularity-partition predicate and the checks built on it.

use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::energy::conditional_values;
use crate::error::{Error, Result};
use crate::fourier::{regularity_check, u3_norm, PointFunction};
use crate::numeric::CMP_SLACK;

use super::bias::quadratic_bias;
use super::factor::{FactorRank, QuadraticFactor};
use super::Table;

/// `δ` with the growth functions `ω` and `R`.
///
/// `ω(d) = omega_scale·δ^{−2/3}·p^d` and
/// `R(d) = rank_scale·max(2(d+1+rank_offset), 2(d+1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityParams {
    pub p: u32,
    pub delta: f64,
    pub omega_scale: f64,
    pub rank_offset: i64,
    pub rank_scale: u64,
}

impl RegularityParams {
    /// The smallest choices meeting the stated hypotheses:
    /// `ω(d) = δ^{−2/3}p^d`, `R(d) = 2(d+1+⌈log_p δ^{1/3}⌉)` clamped at `2(d+1)`.
    pub fn paper_min(p: u32, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} outside (0, 1]")));
        }
        let offset = (delta.cbrt().ln() / (p as f64).ln()).ceil() as i64;
        Ok(RegularityParams {
            p,
            delta,
            omega_scale: 1.0,
            rank_offset: offset,
            rank_scale: 1,
        })
    }

    pub fn omega(&self, d: usize) -> f64 {
        self.omega_scale * self.delta.powf(-2.0 / 3.0) * (self.p as f64).powi(d as i32)
    }

    /// `1/ω(d)`.
    pub fn eta(&self, d: usize) -> f64 {
        1.0 / self.omega(d)
    }

    pub fn rank(&self, d: usize) -> u64 {
        let d = d as i64;
        let r = (2 * (d + 1 + self.rank_offset)).max(2 * (d + 1));
        r as u64 * self.rank_scale
    }

    /// Violations of `ω(d) ≥ δ^{−2/3}p^d` and `R(d) ≥ 2(d+1)`.
    pub fn atom_hypotheses(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.omega_scale < 1.0 {
            out.push(format!("omega scale {} below 1", self.omega_scale));
        }
        if self.rank_scale < 1 {
            out.push("rank scale 0 gives R(d) < 2(d+1)".into());
        }
        out
    }

    /// The atom hypotheses plus `R(D) ≥ 2(D+1+log_p δ^{1/3})`.
    pub fn linear_layer_hypotheses(&self, d: usize) -> Vec<String> {
        let mut out = self.atom_hypotheses();
        let need = 2.0 * (d as f64 + 1.0 + self.delta.cbrt().ln() / (self.p as f64).ln());
        if (self.rank(d) as f64) < need {
            out.push(format!("R({d}) = {} below {need}", self.rank(d)));
        }
        out
    }
}

/// The three defining conditions with their margins.
#[derive(Debug, Clone, Serialize)]
pub struct QrpReport {
    pub complexity: usize,
    pub l2_err: f64,
    /// `δ − ‖f_err‖₂`.
    pub l2_margin: f64,
    pub u3_residual: f64,
    pub eta: f64,
    /// `1/ω(D) − ‖f − E(f|B) − f_err‖_{U³}`.
    pub u3_margin: f64,
    pub rank: FactorRank,
    pub required_rank: u64,
    pub l2_ok: bool,
    pub u3_ok: bool,
    pub rank_ok: bool,
    pub pass: bool,
}

/// `f − E(f|B) − f_err` as a table.
pub fn residual(
    f: &impl PointFunction,
    b: &QuadraticFactor,
    f_err: &impl PointFunction,
    budget: &Budget,
) -> Result<Table> {
    if f_err.p() != f.p() || f_err.n() != f.n() || b.p() != f.p() || b.n() != f.n() {
        return Err(Error::DimensionMismatch("function, factor and error differ in space".into()));
    }
    let cond = conditional_values(f, &b.partition(budget)?)?;
    let values = f
        .values()
        .iter()
        .zip(&cond)
        .zip(f_err.values())
        .map(|((v, c), e)| v - c - e)
        .collect();
    Ok(Table::new(f.p(), f.n(), values))
}

pub fn qrp_predicate(
    f: &impl PointFunction,
    b: &QuadraticFactor,
    f_err: &impl PointFunction,
    params: &RegularityParams,
    budget: &Budget,
) -> Result<QrpReport> {
    let d = b.complexity();
    let l2_err = f_err.l2_norm();
    let u3_residual = u3_norm(&residual(f, b, f_err, budget)?, budget)?;
    let eta = params.eta(d);
    let rank = b.rank(budget)?.rank;
    let required_rank = params.rank(d);
    let l2_ok = l2_err < params.delta;
    let u3_ok = u3_residual < eta;
    let rank_ok = rank.at_least(required_rank);
    Ok(QrpReport {
        complexity: d,
        l2_err,
        l2_margin: params.delta - l2_err,
        u3_residual,
        eta,
        u3_margin: eta - u3_residual,
        rank,
        required_rank,
        l2_ok,
        u3_ok,
        rank_ok,
        pass: l2_ok && u3_ok && rank_ok,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AtomBias {
    pub label: Vec<u32>,
    pub size: usize,
    pub bias: f64,
    /// `(E_{x∈B} f_err(x)²)^{1/2}`.
    pub err_l2: f64,
    /// `err_l2 + η·p^n/|B|`.
    pub bound: f64,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnbiasedAtomsReport {
    pub violations: Vec<String>,
    pub level: f64,
    pub allowed_fraction: f64,
    pub num_atoms: usize,
    pub failing: usize,
    pub failing_fraction: f64,
    pub u3_residual: f64,
    pub bounds_ok: bool,
    pub atoms: Vec<AtomBias>,
    pub pass: bool,
}

/// Counts atoms with quadratic bias above `3δ^{2/3}` and checks the per-atom
/// bound `bias ≤ δ' + η·p^n/|B|`.
pub fn unbiased_atoms_check(
    f: &impl PointFunction,
    b: &QuadraticFactor,
    f_err: &impl PointFunction,
    params: &RegularityParams,
    budget: &Budget,
) -> Result<UnbiasedAtomsReport> {
    let qrp = qrp_predicate(f, b, f_err, params, budget)?;
    let mut violations = params.atom_hypotheses();
    if !qrp.pass {
        violations.push("factor is not a quadratic regularity partition".into());
    }
    let total = f.values().len() as f64;
    let level = 3.0 * params.delta.powf(2.0 / 3.0);
    let allowed_fraction = 2.0 * params.delta.powf(2.0 / 3.0);
    let eta = qrp.u3_residual;
    let mut atoms = Vec::new();
    for atom in b.atoms(budget)? {
        let bias = quadratic_bias(f, &atom, budget)?.bias;
        let err_sq: f64 = atom.points.iter().map(|&x| f_err.values()[x].powi(2)).sum();
        let err_l2 = (err_sq / atom.size() as f64).sqrt();
        let bound = err_l2 + eta * total / atom.size() as f64;
        atoms.push(AtomBias {
            label: atom.label,
            size: atom.points.len(),
            bias,
            err_l2,
            bound,
            bound_ok: bias <= bound + 1e-9,
        });
    }
    let failing = atoms.iter().filter(|a| a.bias > level + CMP_SLACK).count();
    let failing_fraction = failing as f64 / atoms.len() as f64;
    let bounds_ok = atoms.iter().all(|a| a.bound_ok);
    Ok(UnbiasedAtomsReport {
        pass: violations.is_empty() && bounds_ok && failing_fraction <= allowed_fraction + CMP_SLACK,
        violations,
        level,
        allowed_fraction,
        num_atoms: atoms.len(),
        failing,
        failing_fraction,
        u3_residual: eta,
        bounds_ok,
        atoms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearLayerReport {
    pub violations: Vec<String>,
    pub threshold: f64,
    /// `p^{−R(D)/2}`, which the argument needs below `δ^{1/3}`.
    pub phase_term: f64,
    pub phase_term_ok: bool,
    pub codim: usize,
    pub num_cosets: usize,
    pub bad_fraction: f64,
    pub max_bias: f64,
    pub pass: bool,
}

/// Regularity of the linear layer's coset partition at `7δ^{1/3}`.
pub fn linear_layer_regularity(
    f: &impl PointFunction,
    b: &QuadraticFactor,
    params: &RegularityParams,
    budget: &Budget,
) -> Result<LinearLayerReport> {
    let d = b.complexity();
    let violations = params.linear_layer_hypotheses(d);
    let threshold = 7.0 * params.delta.cbrt();
    let h = b.linear_layer_subspace();
    let report = regularity_check(f, &h, threshold, budget)?;
    let phase_term = (params.p as f64).powf(-(params.rank(d) as f64) / 2.0);
    Ok(LinearLayerReport {
        threshold,
        phase_term,
        phase_term_ok: phase_term <= params.delta.cbrt(),
        codim: h.codim(),
        num_cosets: report.num_cosets,
        bad_fraction: report.bad_fraction,
        max_bias: report.max_bias,
        pass: report.is_regular(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::conditional_expectation;
    use crate::field_space::FieldVector;
    use crate::fourier::{BalancedFunction, DensityFunction};
    use crate::quadratic::poly::QuadPoly;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn budget() -> Budget {
        Budget::default()
    }

    fn sample_factor() -> QuadraticFactor {
        let l = QuadPoly::linear(&FieldVector::new(3, [1, 0, 1]), 0).unwrap();
        let q = QuadPoly::from_upper(3, 3, &[1, 0, 0, 1, 0, 1], vec![0, 0, 0], 0).unwrap();
        QuadraticFactor::new(3, 3, vec![l], vec![q]).unwrap()
    }

    #[test]
    fn paper_min_preset() {
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        assert_eq!(params.rank_offset, 0);
        assert_eq!(params.rank(0), 2);
        assert_eq!(params.rank(3), 8);
        assert!((params.omega(2) - 0.3f64.powf(-2.0 / 3.0) * 9.0).abs() < 1e-12);
        assert!(params.atom_hypotheses().is_empty());
        assert!(params.linear_layer_hypotheses(4).is_empty());
    }

    #[test]
    fn measurable_function_passes_for_any_omega() {
        let b = sample_factor();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = DensityFunction::random(3, 3, &mut rng, &budget()).unwrap();
        let g = conditional_expectation(&f, &b.partition(&budget()).unwrap()).unwrap();
        let zero = BalancedFunction::zero(3, 3, &budget()).unwrap();
        let mut params = RegularityParams::paper_min(3, 0.3).unwrap();
        params.omega_scale = 1e6;
        params.rank_offset = -10;
        let report = qrp_predicate(&g, &b, &zero, &params, &budget()).unwrap();
        assert!(report.u3_residual < 1e-6);
        assert!(report.u3_ok && report.l2_ok);
    }

    #[test]
    fn trivial_factor_passes_iff_error_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = DensityFunction::random(3, 2, &mut rng, &budget()).unwrap();
        let b = QuadraticFactor::trivial(3, 2).unwrap();
        let f_err = f.centered();
        for delta in [0.05, 0.9] {
            let params = RegularityParams::paper_min(3, delta).unwrap();
            let report = qrp_predicate(&f, &b, &f_err, &params, &budget()).unwrap();
            assert!(report.u3_residual < 1e-12);
            assert_eq!(report.pass, f_err.l2_norm() < delta);
        }
    }

    #[test]
    fn measurable_function_has_unbiased_atoms() {
        let b = sample_factor();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DensityFunction::random(3, 3, &mut rng, &budget()).unwrap();
        let g = conditional_expectation(&f, &b.partition(&budget()).unwrap()).unwrap();
        let zero = BalancedFunction::zero(3, 3, &budget()).unwrap();
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        let report = unbiased_atoms_check(&g, &b, &zero, &params, &budget()).unwrap();
        assert_eq!(report.failing, 0);
        assert!(report.bounds_ok);
        assert!(report.atoms.iter().all(|a| a.bias < 1e-9));
    }

    #[test]
    fn linear_layer_of_coset_constant_function() {
        let l = QuadPoly::linear(&FieldVector::new(3, [1, 2, 0]), 0).unwrap();
        let b = QuadraticFactor::new(3, 3, vec![l.clone()], vec![]).unwrap();
        let f = DensityFunction::from_fn(3, 3, &budget(), |x| l.eval(x) as f64 / 2.0).unwrap();
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        let report = linear_layer_regularity(&f, &b, &params, &budget()).unwrap();
        assert_eq!(report.bad_fraction, 0.0);
        assert_eq!(report.num_cosets, 3);
        assert!(report.pass);
    }

    #[test]
    fn empty_linear_layer_is_global_uniformity() {
        let b = QuadraticFactor::new(
            3,
            2,
            vec![],
            vec![QuadPoly::from_upper(3, 2, &[1, 0, 1], vec![0, 0], 0).unwrap()],
        )
        .unwrap();
        let f = DensityFunction::from_fn(3, 2, &budget(), |x| x.get(0) as f64 / 2.0).unwrap();
        let params = RegularityParams::paper_min(3, 1e-6).unwrap();
        let report = linear_layer_regularity(&f, &b, &params, &budget()).unwrap();
        assert_eq!(report.num_cosets, 1);
        assert!(!report.pass, "{report:?}");
    }
}
