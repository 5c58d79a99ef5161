//! Polynomials of degree at most two over F_p^n (p odd), quadratic factors
//! and the quadratic regularity checks.

mod bias;
mod factor;
mod poly;
mod predicate;

pub use bias::{
    atom_claim_check, dual_norm_check, max_correlation, phase_average, quadratic_bias,
    AtomClaimReport, BiasReport, Correlation, DualNormReport,
};
pub use factor::{
    check_equidistribution, Atom, AtomEquidistribution, EquidistributionReport, FactorRank,
    FactorRecord, LinearRecord, QuadraticFactor, RankReport, FACTOR_FORMAT,
};
pub use poly::{PolyRecord, QuadPoly};
pub use predicate::{
    linear_layer_regularity, qrp_predicate, residual, unbiased_atoms_check, AtomBias,
    LinearLayerReport, QrpReport, RegularityParams, UnbiasedAtomsReport,
};

use crate::fourier::PointFunction;

/// An unbounded real table over F_p^n.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    p: u32,
    n: usize,
    values: Vec<f64>,
}

impl Table {
    pub fn new(p: u32, n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), (p as usize).pow(n as u32));
        Table { p, n, values }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl PointFunction for Table {
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
