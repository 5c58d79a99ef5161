//! Dimension schedules, weight schedules and the symbolic tower bookkeeping
//! behind the strong-regularity lower bound.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use super::tower::{TowerInt, TowerRange, Verdict};
use crate::error::{Error, Result};
use crate::field_space::check_prime;

/// Largest exponent `D_j − 3` evaluated exactly; beyond it the schedule is
/// only available as a symbolic bound.
pub const MAX_EXACT_EXPONENT: u64 = 1 << 22;

/// The codimensions `d_i` of `H_i` in `H_{i−1}` and their partial sums `D_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionSchedule {
    p: u32,
    d: Vec<BigUint>,
    partial: Vec<BigUint>,
    custom: bool,
}

impl DimensionSchedule {
    /// `d_1 = 1`, `d_2 = 2`, `d_{j+1} = p^{D_j − 3}`.
    pub fn new(p: u32, s: usize) -> Result<Self> {
        check_prime(p)?;
        let mut d = Vec::with_capacity(s);
        let mut partial: Vec<BigUint> = Vec::with_capacity(s);
        for j in 1..=s {
            let dj = match j {
                1 => BigUint::one(),
                2 => BigUint::from(2u8),
                _ => {
                    let prev = &partial[j - 2];
                    let exponent = (prev - 3u8).to_u64().filter(|e| *e <= MAX_EXACT_EXPONENT);
                    let Some(exponent) = exponent else {
                        return Err(Error::BudgetExceeded {
                            what: "exact dimension schedule exponent",
                            required: prev.to_u128().unwrap_or(u128::MAX),
                            limit: MAX_EXACT_EXPONENT as u128,
                        });
                    };
                    BigUint::from(p).pow(exponent as u32)
                }
            };
            let total = partial.last().cloned().unwrap_or_default() + &dj;
            d.push(dj);
            partial.push(total);
        }
        Ok(DimensionSchedule {
            p,
            d,
            partial,
            custom: false,
        })
    }

    /// A schedule with arbitrary layer codimensions.
    pub fn from_dims(p: u32, dims: &[usize]) -> Result<Self> {
        check_prime(p)?;
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(
                "layer codimensions must be positive".into(),
            ));
        }
        let d: Vec<BigUint> = dims.iter().map(|&x| BigUint::from(x)).collect();
        let mut partial = Vec::with_capacity(d.len());
        let mut acc = BigUint::default();
        for x in &d {
            acc += x;
            partial.push(acc.clone());
        }
        Ok(DimensionSchedule {
            p,
            d,
            partial,
            custom: true,
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn s(&self) -> usize {
        self.d.len()
    }

    pub fn is_custom(&self) -> bool {
        self.custom
    }

    /// `d_i` for `1 ≤ i ≤ s`.
    pub fn d(&self, i: usize) -> &BigUint {
        &self.d[i - 1]
    }

    /// `D_i` for `0 ≤ i ≤ s`.
    pub fn big_d(&self, i: usize) -> BigUint {
        if i == 0 {
            BigUint::default()
        } else {
            self.partial[i - 1].clone()
        }
    }

    pub fn d_usize(&self, i: usize) -> Option<usize> {
        self.d(i).to_usize()
    }

    pub fn big_d_usize(&self, i: usize) -> Option<usize> {
        self.big_d(i).to_usize()
    }

    pub fn d_values(&self) -> &[BigUint] {
        &self.d
    }

    pub fn big_d_values(&self) -> &[BigUint] {
        &self.partial
    }
}

/// `D_k` of the standard schedule: exact while computable, otherwise the
/// lower bound `D_k ≥ twr(k − 3) + 3`, valid for every `k ≥ 4`.
pub fn dimension_at(p: u32, k: &TowerInt) -> TowerRange {
    let Some(k) = k.exact() else {
        return TowerRange::at_least(k.twr_offset(-3));
    };
    let mut partial = BigUint::default();
    for j in 1..=k {
        let dj = match j {
            1 => BigUint::one(),
            2 => BigUint::from(2u8),
            _ => {
                let exponent = (&partial - 3u8).to_u64().filter(|e| *e <= MAX_EXACT_EXPONENT);
                match exponent {
                    Some(e) => BigUint::from(p).pow(e as u32),
                    None => return TowerRange::at_least(TowerInt::Exact(k).twr_offset(-3)),
                }
            }
        };
        partial += dj;
    }
    TowerRange::from_biguint(&partial)
}

/// Equal weights `8pε`, repeated `⌊ε^{-1}/8p⌋` times.
pub fn hlms_weights(p: u32, eps: f64) -> Result<Vec<f64>> {
    check_prime(p)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    let s = ((1.0 / eps) / (8.0 * p as f64)).floor();
    if s < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} leaves no layers at p = {p}"
        )));
    }
    Ok(vec![8.0 * p as f64 * eps; s as usize])
}

/// Uniformity requirement `ε(d) = √δ / (c·(d + 1))`.
///
/// With `c ≥ 80p²` this is non-increasing with `ε(0) ≤ √δ/80p²`, and the
/// layer counts `⌊√δ/(8p·ε(d))⌋ = ⌊c(d+1)/8p⌋` are exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpsSchedule {
    pub c: u64,
}

impl EpsSchedule {
    /// The smallest admissible constant, `c = 80p²`.
    pub fn minimal(p: u32) -> Self {
        EpsSchedule {
            c: 80 * (p as u64) * (p as u64),
        }
    }

    pub fn eps(&self, delta: f64, d: f64) -> f64 {
        delta.sqrt() / (self.c as f64 * (d + 1.0))
    }

    /// `⌊√δ/(8p·ε(d))⌋` over a range of `d`.
    pub fn layer_count(&self, p: u32, d: &TowerRange) -> TowerRange {
        d.scaled_floor(self.c, self.c, 8 * p as u64)
    }
}

fn check_sarl_parameters(p: u32, delta: f64, eps: &EpsSchedule) -> Result<()> {
    check_prime(p)?;
    if !(delta > 0.0 && delta <= 1.0 / (20.0 * p as f64)) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} must lie in (0, 1/{}]",
            20 * p
        )));
    }
    let min = EpsSchedule::minimal(p).c;
    if eps.c < min {
        return Err(Error::InvalidParameter(format!(
            "eps constant {} is below 80p^2 = {min}",
            eps.c
        )));
    }
    Ok(())
}

/// `⌊√(δ^{-1})/10p⌋`.
pub fn level_count(p: u32, delta: f64) -> u64 {
    ((1.0 / delta).sqrt() / (10.0 * p as f64)).floor() as u64
}

/// One level `i` of the strong-regularity weight schedule.
#[derive(Debug, Clone, Serialize)]
pub struct SarlLevel {
    pub i: u64,
    /// Argument `d` with `ε_i = ε(d)`.
    #[serde(serialize_with = "ser_range")]
    pub eps_arg: TowerRange,
    /// `ε_i` as a float, when its argument is exact.
    pub eps: Option<f64>,
    #[serde(serialize_with = "ser_range")]
    pub h: TowerRange,
    /// `φ(i, h_i − 9p)`.
    #[serde(serialize_with = "ser_range")]
    pub boundary: TowerRange,
    /// `D_{φ(i, h_i − 9p)}`.
    #[serde(serialize_with = "ser_range")]
    pub boundary_dim: TowerRange,
    /// `8pε_i`, the weight of layers `j < h_i − 9p`.
    pub small_weight: Option<f64>,
    /// `max(8pε_i, √δ)`, the weight of the last `9p + 1` layers.
    pub large_weight: f64,
    /// Exact weight total of the level when `h_i` is exact.
    pub weight_sum: Option<f64>,
    /// Upper bound `√δ + (9p+1)·max(8pε_i, √δ)` used otherwise.
    pub weight_bound: f64,
}

fn ser_range<S: serde::Serializer>(r: &TowerRange, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct SarlSchedule {
    pub p: u32,
    pub delta: f64,
    pub eps: EpsSchedule,
    pub t: u64,
    pub levels: Vec<SarlLevel>,
    /// Upper bound on `Σ_{i,j} w_{i,j}`.
    pub total_weight_bound: f64,
    pub issues: Vec<String>,
    pub valid: bool,
}

impl SarlSchedule {
    /// `φ(i, j) = Σ_{k<i} h_k + j`.
    pub fn phi(&self, i: u64, j: u64) -> TowerRange {
        let mut acc = TowerRange::exact(TowerInt::Exact(j));
        for level in self.levels.iter().take(i as usize - 1) {
            acc = acc.add(&level.h);
        }
        acc
    }
}

/// Evaluates the level counts `h_i`, uniformity parameters `ε_i` and
/// weights of the strong-regularity schedule symbolically.
pub fn sarl_schedule(p: u32, delta: f64, eps: EpsSchedule) -> Result<SarlSchedule> {
    check_sarl_parameters(p, delta, &eps)?;
    let t = level_count(p, delta);
    let sqrt_delta = delta.sqrt();
    let tail = 9 * p as u64;
    let mut levels = Vec::new();
    let mut issues = Vec::new();
    let mut eps_arg = TowerRange::exact(TowerInt::Exact(0));
    let mut prefix = TowerRange::exact(TowerInt::Exact(0));
    for i in 1..=t {
        let h = eps.layer_count(p, &eps_arg);
        if h.lo < TowerInt::Exact(10 * p as u64) {
            issues.push(format!("h_{i} = {h} is below 10p"));
        }
        let boundary = prefix.add(&h.sub_small(tail));
        let boundary_dim = match boundary.exact_value() {
            Some(k) => dimension_at(p, k),
            None => dimension_at(p, &boundary.lo),
        };
        let eps_value = eps_arg
            .exact_value()
            .and_then(TowerInt::exact)
            .map(|d| eps.eps(delta, d as f64));
        let small_weight = eps_value.map(|e| 8.0 * p as f64 * e);
        let large_weight = small_weight.map_or(sqrt_delta, |w| w.max(sqrt_delta));
        let weight_sum = match (h.exact_value().and_then(TowerInt::exact), small_weight) {
            (Some(hv), Some(w)) => {
                let small = hv.saturating_sub(tail + 1) as f64 * w;
                Some(small + (tail + 1) as f64 * large_weight)
            }
            _ => None,
        };
        let weight_bound = sqrt_delta + (tail + 1) as f64 * large_weight;
        levels.push(SarlLevel {
            i,
            eps_arg: eps_arg.clone(),
            eps: eps_value,
            h: h.clone(),
            boundary,
            boundary_dim: boundary_dim.clone(),
            small_weight,
            large_weight,
            weight_sum,
            weight_bound,
        });
        prefix = prefix.add(&h);
        eps_arg = boundary_dim;
    }
    if t == 0 {
        issues.push("degenerate schedule: t = 0 levels".into());
    }
    let total_weight_bound: f64 = levels
        .iter()
        .map(|l| l.weight_sum.unwrap_or(l.weight_bound))
        .sum();
    if total_weight_bound > 1.0 {
        issues.push(format!("weights may sum to {total_weight_bound} > 1"));
    }
    Ok(SarlSchedule {
        p,
        delta,
        eps,
        t,
        levels,
        total_weight_bound,
        valid: issues.is_empty(),
        issues,
    })
}

/// One step `F(i+1) ≥ wwz(i+2)` of the induction.
#[derive(Debug, Clone, Serialize)]
pub struct InductionStep {
    pub index: u64,
    pub value: String,
    pub wwz: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerReport {
    pub p: u32,
    pub delta: f64,
    pub t: u64,
    /// `F(0), …, F(t−1)`, as ranges.
    pub values: Vec<String>,
    /// `F(1) ≥ twr(10p)`.
    pub first_step: Verdict,
    /// `twr(10p) ≥ wwz(2)`.
    pub base_case: Verdict,
    pub steps: Vec<InductionStep>,
    /// `F(t−1) > wwz(t)`.
    pub verdict: Verdict,
}

/// Iterates `F(0) = 0`, `F(i+1) = twr(⌊√δ/8pε(F(i))⌋)` symbolically and
/// compares each value with the wowzer function.
pub fn tower_lower_bound(p: u32, delta: f64, eps: EpsSchedule) -> Result<TowerReport> {
    check_sarl_parameters(p, delta, &eps)?;
    let t = level_count(p, delta);
    if t < 2 {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} gives t = {t}; the comparison needs t ≥ 2"
        )));
    }
    let mut values = vec![TowerRange::exact(TowerInt::Exact(0))];
    for _ in 1..t {
        let arg = eps.layer_count(p, values.last().unwrap());
        values.push(arg.twr());
    }
    let twr10p = TowerRange::exact(TowerInt::twr_of(10 * p as u64));
    let first_step = values[1].at_least_as(&twr10p);
    let base_case = twr10p.at_least_as(&TowerRange::exact(TowerInt::wwz(2)));
    let steps: Vec<InductionStep> = (1..t)
        .map(|i| {
            let w = TowerRange::exact(TowerInt::wwz(i + 1));
            InductionStep {
                index: i,
                value: values[i as usize].to_string(),
                wwz: w.to_string(),
                verdict: values[i as usize].at_least_as(&w),
            }
        })
        .collect();
    let verdict = values[(t - 1) as usize].greater_than(&TowerRange::exact(TowerInt::wwz(t)));
    Ok(TowerReport {
        p,
        delta,
        t,
        values: values.iter().map(|v| v.to_string()).collect(),
        first_step,
        base_case,
        steps,
        verdict,
    })
}
