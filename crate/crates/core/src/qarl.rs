//! Quadratic arithmetic regularity by energy increment, with an exhaustive
//! inverse oracle for the U³ norm and rank refinement of quadratic factors.

use num_bigint::BigUint;
use serde::{Serialize, Serializer};

use crate::budget::Budget;
use crate::energy::{conditional_values, energy};
use crate::error::{Error, Result};
use crate::fourier::{u3_norm, BalancedFunction, DensityFunction, PointFunction};
use crate::quadratic::{
    max_correlation, qrp_predicate, Correlation, FactorRank, PolyRecord, QrpReport, QuadPoly,
    QuadraticFactor, RegularityParams, Table,
};

/// The best quadratic-phase correlation of `g`, if it reaches `theta`.
pub fn inverse_oracle(g: &impl PointFunction, theta: f64, budget: &Budget) -> Result<Option<Correlation>> {
    let best = max_correlation(g.p(), g.n(), g.values(), budget)?;
    Ok((best.value > 0.0 && best.value >= theta).then_some(best))
}

fn factor_energy(f: &impl PointFunction, b: &QuadraticFactor, budget: &Budget) -> Result<f64> {
    Ok(energy(f, &b.partition(budget)?)?.energy)
}

/// `f − E(f|B)`.
pub fn balanced_residual(f: &impl PointFunction, b: &QuadraticFactor, budget: &Budget) -> Result<Table> {
    let cond = conditional_values(f, &b.partition(budget)?)?;
    let values = f.values().iter().zip(&cond).map(|(v, c)| v - c).collect();
    Ok(Table::new(f.p(), f.n(), values))
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    /// `‖f − E(f|B)‖_{U³} < η`.
    Done { u3_residual: f64 },
    Refined {
        factor: QuadraticFactor,
        poly: QuadPoly,
        correlation: f64,
        u3_residual: f64,
        energy_before: f64,
        energy_after: f64,
    },
}

/// Adds the best-correlating polynomial to `b` unless the residual is
/// already `η`-small in U³.
pub fn energy_increment_step(
    f: &impl PointFunction,
    b: &QuadraticFactor,
    eta: f64,
    budget: &Budget,
) -> Result<StepOutcome> {
    let g = balanced_residual(f, b, budget)?;
    let u3_residual = u3_norm(&g, budget)?;
    if u3_residual < eta {
        return Ok(StepOutcome::Done { u3_residual });
    }
    let best = inverse_oracle(&g, 0.0, budget)?.ok_or_else(|| {
        Error::Invariant(format!(
            "no correlating polynomial although the residual has U3 norm {u3_residual}"
        ))
    })?;
    let mut factor = b.clone();
    factor.push(best.poly.clone())?;
    let energy_before = factor_energy(f, b, budget)?;
    let energy_after = factor_energy(f, &factor, budget)?;
    if energy_after < energy_before + best.value.powi(2) - 1e-9 {
        return Err(Error::Invariant(format!(
            "energy gain {} below squared correlation {}",
            energy_after - energy_before,
            best.value.powi(2)
        )));
    }
    Ok(StepOutcome::Refined {
        factor,
        poly: best.poly,
        correlation: best.value,
        u3_residual,
        energy_before,
        energy_after,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineStep {
    pub complexity_before: usize,
    pub complexity_after: usize,
    pub rank_before: FactorRank,
    pub required_rank: u64,
    pub witness: Vec<u32>,
    /// Index of the replaced quadratic polynomial.
    pub replaced: usize,
    /// Rank of the combined matrix, the number of new linear forms.
    pub image_dim: usize,
    /// `D' ≤ D + R(D)`.
    pub growth_ok: bool,
}

fn biguint_str<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineOutcome {
    #[serde(skip)]
    pub factor: QuadraticFactor,
    pub initial_complexity: usize,
    pub final_complexity: usize,
    pub final_rank: FactorRank,
    pub steps: Vec<RefineStep>,
    #[serde(serialize_with = "biguint_str")]
    pub bound: BigUint,
    pub within_bound: bool,
}

/// `x ↦ D·R(x)` iterated `D − 1` times from `D`.
pub fn phi_r_bound(d: usize, rank: impl Fn(&BigUint) -> BigUint) -> BigUint {
    let big_d = BigUint::from(d);
    let mut x = big_d.clone();
    for _ in 1..d.max(1) {
        x = &big_d * rank(&x);
    }
    x
}

/// `R` from `params` on big integers.
pub fn rank_fn_big(params: &RegularityParams) -> impl Fn(&BigUint) -> BigUint + '_ {
    move |x: &BigUint| {
        let base = x + 1u32;
        let r = if params.rank_offset > 0 {
            base + params.rank_offset as u64
        } else {
            base
        };
        r * 2u32 * params.rank_scale
    }
}

/// Replaces low-rank quadratic polynomials by linear ones until the factor
/// has rank at least `R(D)`; the result refines `b`.
pub fn rank_refine(
    b: &QuadraticFactor,
    params: &RegularityParams,
    budget: &Budget,
) -> Result<RefineOutcome> {
    let p = b.p();
    let mut current = b.clone();
    let mut steps = Vec::new();
    loop {
        let d = current.complexity();
        let report = current.rank(budget)?;
        let required = params.rank(d);
        if report.rank.at_least(required) {
            break;
        }
        let witness = report.witness.expect("finite rank has a witness");
        let quads = current.quad_polys();
        let replaced = witness.iter().position(|&l| l != 0).expect("nonzero witness");
        let lead_inv = crate::field_space::inv_mod(witness[replaced], p);
        let zero = QuadPoly::zero(p, b.n())?;
        let combo = quads
            .iter()
            .zip(&witness)
            .fold(zero, |acc, (q, &l)| acc.axpy(l, q));
        let image = combo.column_space();
        let remainder = quads
            .iter()
            .zip(&witness)
            .fold(QuadPoly::zero(p, b.n())?, |acc, (q, &l)| acc.axpy(l, &q.linear_part()))
            .scale(lead_inv);
        let mut linear: Vec<QuadPoly> = current.linear_polys().to_vec();
        for v in image.basis() {
            linear.push(QuadPoly::linear(v, 0)?);
        }
        if remainder.degree() == 1 {
            linear.push(remainder);
        }
        let mut quadratic = quads.to_vec();
        quadratic.remove(replaced);
        let next = QuadraticFactor::new(p, b.n(), linear, quadratic)?;
        if !next.refines(&current, budget)? {
            return Err(Error::Invariant("rank refinement lost the partition".into()));
        }
        steps.push(RefineStep {
            complexity_before: d,
            complexity_after: next.complexity(),
            rank_before: report.rank,
            required_rank: required,
            witness,
            replaced,
            image_dim: image.dim(),
            growth_ok: next.complexity() as u64 <= d as u64 + required,
        });
        current = next;
    }
    let initial_complexity = b.complexity();
    let bound = phi_r_bound(initial_complexity, rank_fn_big(params));
    let final_complexity = current.complexity();
    Ok(RefineOutcome {
        final_rank: current.rank(budget)?.rank,
        within_bound: BigUint::from(final_complexity) <= bound,
        factor: current,
        initial_complexity,
        final_complexity,
        steps,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    InverseStep,
    RankRefine,
    OuterRestart,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub kind: StepKind,
    #[serde(rename = "D")]
    pub d: usize,
    pub rank: FactorRank,
    pub energy: f64,
    pub u3_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poly: Option<PolyRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct QarlConfig {
    pub params: RegularityParams,
    pub max_outer: usize,
    pub max_inner: usize,
    pub budget: Budget,
}

impl QarlConfig {
    /// `⌈δ^{−2}⌉` outer steps.
    pub fn new(params: RegularityParams, budget: Budget) -> Self {
        QarlConfig {
            max_outer: (params.delta.powi(-2) - 1e-9).ceil() as usize,
            max_inner: 10_000,
            params,
            budget,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterStep {
    pub energy_before: f64,
    pub energy_after: f64,
    pub l2_err: f64,
    pub gain_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QarlOutcome {
    #[serde(skip)]
    pub factor: QuadraticFactor,
    #[serde(skip)]
    pub f_err: BalancedFunction,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
    pub success: bool,
    pub failure: Option<String>,
    /// The run stopped on a resource limit.
    pub exhausted: bool,
    pub outer_steps: usize,
    pub outer: Vec<OuterStep>,
    pub refinements: Vec<RefineOutcome>,
    pub qrp: Option<QrpReport>,
}

impl QarlOutcome {
    /// Energies never decrease along the trace.
    pub fn energies_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1].energy >= w[0].energy - 1e-12)
    }

    pub fn trace_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for record in &self.trace {
            out.push_str(&serde_json::to_string(&crate::numeric::hexify(serde_json::to_value(record)?))?);
            out.push('\n');
        }
        Ok(out)
    }
}

struct Run<'a> {
    f: &'a DensityFunction,
    config: &'a QarlConfig,
    trace: Vec<TraceRecord>,
}

impl Run<'_> {
    fn record(
        &mut self,
        kind: StepKind,
        b: &QuadraticFactor,
        u3_residual: Option<f64>,
        poly: Option<&QuadPoly>,
        correlation: Option<f64>,
    ) -> Result<()> {
        let budget = &self.config.budget;
        self.trace.push(TraceRecord {
            step: self.trace.len(),
            kind,
            d: b.complexity(),
            rank: b.rank(budget)?.rank,
            energy: factor_energy(self.f, b, budget)?,
            u3_residual,
            poly: poly.map(|q| q.record()),
            correlation,
        });
        Ok(())
    }
}

/// Runs the energy-increment algorithm to a quadratic regularity partition.
pub fn run_qarl(f: &DensityFunction, config: &QarlConfig) -> Result<QarlOutcome> {
    let (p, n) = (f.p(), f.n());
    let budget = &config.budget;
    let params = &config.params;
    let mut run = Run {
        f,
        config,
        trace: Vec::new(),
    };
    let mut b = QuadraticFactor::trivial(p, n)?;
    let mut outer = Vec::new();
    let mut refinements = Vec::new();
    run.record(StepKind::OuterRestart, &b, None, None, None)?;
    let fail = |run: Run, b: QuadraticFactor, outer, refinements, msg: String| -> Result<QarlOutcome> {
        Ok(QarlOutcome {
            factor: b,
            f_err: BalancedFunction::zero(p, n, budget)?,
            trace: run.trace,
            success: false,
            failure: Some(msg),
            exhausted: true,
            outer_steps: 0,
            outer,
            refinements,
            qrp: None,
        })
    };
    loop {
        let eta = params.eta(b.complexity());
        let mut inner = b.clone();
        let mut inner_steps = 0;
        loop {
            let step = match energy_increment_step(f, &inner, eta, budget) {
                Err(Error::BudgetExceeded { what, required, limit }) => {
                    let msg = format!("budget exceeded: {what} needs {required}, limit {limit}");
                    return fail(run, inner, outer, refinements, msg);
                }
                other => other?,
            };
            match step {
                StepOutcome::Done { .. } => break,
                StepOutcome::Refined {
                    factor,
                    poly,
                    correlation,
                    u3_residual,
                    ..
                } => {
                    inner_steps += 1;
                    if inner_steps > config.max_inner {
                        let msg = format!("inner loop exceeded {} steps", config.max_inner);
                        return fail(run, factor, outer, refinements, msg);
                    }
                    run.record(StepKind::InverseStep, &factor, Some(u3_residual), Some(&poly), Some(correlation))?;
                    inner = factor;
                }
            }
        }
        let coarse = conditional_values(f, &b.partition(budget)?)?;
        let fine = conditional_values(f, &inner.partition(budget)?)?;
        let f_err = BalancedFunction::new(p, n, fine.iter().zip(&coarse).map(|(a, c)| a - c).collect())?;
        let l2_err = f_err.l2_norm();
        if l2_err < params.delta {
            let qrp = qrp_predicate(f, &b, &f_err, params, budget)?;
            let outer_steps = outer.len();
            return Ok(QarlOutcome {
                success: qrp.pass && outer_steps <= config.max_outer,
                failure: (!qrp.pass).then(|| "independent re-check failed".to_string()),
                exhausted: false,
                factor: b,
                f_err,
                trace: run.trace,
                outer_steps,
                outer,
                refinements,
                qrp: Some(qrp),
            });
        }
        if outer.len() >= config.max_outer {
            let msg = format!("outer loop exceeded {} steps", config.max_outer);
            return fail(run, b, outer, refinements, msg);
        }
        let energy_before = factor_energy(f, &b, budget)?;
        let refined = rank_refine(&inner, params, budget)?;
        run.record(StepKind::RankRefine, &refined.factor, None, None, None)?;
        b = refined.factor.clone();
        refinements.push(refined);
        let energy_after = factor_energy(f, &b, budget)?;
        outer.push(OuterStep {
            energy_before,
            energy_after,
            l2_err,
            gain_ok: energy_after >= energy_before + params.delta.powi(2) - 1e-9,
        });
        run.record(StepKind::OuterRestart, &b, None, None, None)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_space::FieldVector;
    use crate::quadratic::{qrp_predicate, FactorRank};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn budget() -> Budget {
        Budget::default()
    }

    fn form3() -> QuadPoly {
        QuadPoly::from_upper(3, 3, &[1, 0, 0, 1, 0, 2], vec![0, 0, 0], 0).unwrap()
    }

    fn naive_best(g: &[f64], p: u32, n: usize) -> f64 {
        let roots = crate::fourier::roots_of_unity(p);
        let mut best: f64 = 0.0;
        for idx in 0..(p as u64).pow((n * (n + 1) / 2) as u32) {
            let q = QuadPoly::quadratic_part(p, n, idx).unwrap();
            for r in 0..g.len() {
                let poly = q.add(&QuadPoly::linear(&FieldVector::from_index(p, n, r), 0).unwrap());
                let mut acc = num_complex::Complex64::new(0.0, 0.0);
                for (x, &v) in g.iter().enumerate() {
                    acc += roots[poly.eval(&FieldVector::from_index(p, n, x)) as usize] * v;
                }
                best = best.max(acc.norm() / g.len() as f64);
            }
        }
        best
    }

    #[test]
    fn oracle_on_zero_returns_none() {
        let g = Table::new(3, 2, vec![0.0; 9]);
        assert!(inverse_oracle(&g, 1e-6, &budget()).unwrap().is_none());
    }

    #[test]
    fn oracle_is_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let g = Table::new(3, 2, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect());
            let best = inverse_oracle(&g, 0.0, &budget()).unwrap().unwrap();
            assert!((best.value - naive_best(g.values(), 3, 2)).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_finds_quadric_class() {
        let q = form3();
        let g = Table::new(
            3,
            3,
            (0..27)
                .map(|x| if q.eval(&FieldVector::from_index(3, 3, x)) == 0 { 2.0 / 3.0 } else { -1.0 / 3.0 })
                .collect(),
        );
        let best = inverse_oracle(&g, 0.0, &budget()).unwrap().unwrap();
        assert!(best.value >= 1.0 / 3.0 - 1e-9);
        let part = QuadPoly::from_upper(3, 3, &best.poly.upper(), vec![0; 3], 0).unwrap();
        assert!(part == q || part == q.scale(2), "{part:?}");
    }

    #[test]
    fn measurable_function_is_done() {
        let q = form3();
        let b = QuadraticFactor::new(3, 3, vec![], vec![q.clone()]).unwrap();
        let f = DensityFunction::from_fn(3, 3, &budget(), |x| q.eval(x) as f64 / 2.0).unwrap();
        assert!(matches!(
            energy_increment_step(&f, &b, 1e-6, &budget()).unwrap(),
            StepOutcome::Done { .. }
        ));
    }

    #[test]
    fn quadric_indicator_takes_one_step() {
        let q = form3();
        let f = DensityFunction::from_fn(3, 3, &budget(), |x| if q.eval(x) == 0 { 1.0 } else { 0.0 }).unwrap();
        let b = QuadraticFactor::trivial(3, 3).unwrap();
        let StepOutcome::Refined { factor, energy_before, energy_after, .. } =
            energy_increment_step(&f, &b, 1e-3, &budget()).unwrap()
        else {
            panic!("expected a refinement");
        };
        assert!(energy_after > energy_before);
        assert!(matches!(
            energy_increment_step(&f, &factor, 1e-3, &budget()).unwrap(),
            StepOutcome::Done { .. }
        ));
    }

    #[test]
    fn high_rank_factor_unchanged() {
        let q = QuadPoly::from_upper(3, 4, &[1, 0, 0, 0, 1, 0, 0, 1, 0, 2], vec![0; 4], 0).unwrap();
        let b = QuadraticFactor::new(3, 4, vec![], vec![q]).unwrap();
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        let out = rank_refine(&b, &params, &budget()).unwrap();
        assert!(out.steps.is_empty());
        assert_eq!(out.factor, b);
    }

    #[test]
    fn proportional_pair_collapses() {
        let q1 = QuadPoly::from_upper(3, 3, &[1, 0, 0, 1, 0, 2], vec![1, 2, 0], 1).unwrap();
        let q2 = q1.scale(2);
        let b = QuadraticFactor::new(3, 3, vec![], vec![q1, q2]).unwrap();
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        let out = rank_refine(&b, &params, &budget()).unwrap();
        assert_eq!(out.steps[0].witness, vec![1, 1]);
        assert_eq!(out.steps[0].image_dim, 0);
        assert!(out.factor.refines(&b, &budget()).unwrap());
        assert!(out.steps.iter().all(|s| s.growth_ok));
        assert!(out.final_rank.at_least(params.rank(out.final_complexity)));
    }

    #[test]
    fn random_refinements_refine_and_reach_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        for _ in 0..10 {
            let mut b = QuadraticFactor::trivial(3, 3).unwrap();
            for _ in 0..rng.random_range(1..4) {
                let upper: Vec<u32> = (0..6).map(|_| rng.random_range(0..3)).collect();
                let lin: Vec<u32> = (0..3).map(|_| rng.random_range(0..3)).collect();
                b.push(QuadPoly::from_upper(3, 3, &upper, lin, 0).unwrap()).unwrap();
            }
            let out = rank_refine(&b, &params, &budget()).unwrap();
            assert!(out.factor.refines(&b, &budget()).unwrap());
            assert!(out.final_rank.at_least(params.rank(out.final_complexity)));
            assert!(out.steps.iter().all(|s| s.growth_ok));
        }
    }

    #[test]
    fn phi_bound_examples() {
        assert_eq!(phi_r_bound(1, |x| x * 2u32), BigUint::from(1u32));
        assert_eq!(phi_r_bound(2, |x| x * 2u32), BigUint::from(8u32));
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        assert_eq!(phi_r_bound(2, rank_fn_big(&params)), BigUint::from(12u32));
    }

    #[test]
    fn constant_function_needs_no_steps() {
        let f = DensityFunction::constant(3, 3, 0.25, &budget()).unwrap();
        let config = QarlConfig::new(RegularityParams::paper_min(3, 0.3).unwrap(), budget());
        let out = run_qarl(&f, &config).unwrap();
        assert!(out.success);
        assert_eq!(out.factor.complexity(), 0);
        assert_eq!(out.outer_steps, 0);
        assert!(out.f_err.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_run_satisfies_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = DensityFunction::random(3, 3, &mut rng, &budget()).unwrap();
        let params = RegularityParams::paper_min(3, 0.3).unwrap();
        let config = QarlConfig::new(params, budget());
        let out = run_qarl(&f, &config).unwrap();
        assert!(out.success, "{:?}", out.failure);
        assert!(out.outer_steps <= 12);
        assert!(out.energies_monotone());
        assert!(out.outer.iter().all(|s| s.gain_ok));
        let check = qrp_predicate(&f, &out.factor, &out.f_err, &params, &budget()).unwrap();
        assert!(check.pass);
        assert!(out.factor.rank(&budget()).unwrap().rank >= FactorRank::Finite(0));
        assert!(out.trace_jsonl().unwrap().lines().count() == out.trace.len());
    }
}
