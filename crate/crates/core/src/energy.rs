//! Energy of partitions and the energy-gap checks on layered instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::budget::{checked_pow, Budget};
use crate::construction::Instance;
use crate::error::{Error, Result};
use crate::field_space::Subspace;
use crate::fourier::{regularity_check, DensityFunction, PointFunction};
use crate::numeric::{pairwise_mean_by, pairwise_sum, EQ_TOL};

/// A partition of F_p^n given by a cell label per point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionView {
    p: u32,
    n: usize,
    labels: Vec<u32>,
    num_cells: usize,
}

impl PartitionView {
    /// The coset partition `P(H)`.
    pub fn cosets(h: &Subspace, budget: &Budget) -> Result<Self> {
        let labeling = h.labeling(budget)?;
        Ok(PartitionView {
            p: h.p(),
            n: h.ambient_dim(),
            num_cells: labeling.num_cosets(),
            labels: labeling.labels().to_vec(),
        })
    }

    /// A partition from explicit cells, which must be disjoint, nonempty and
    /// cover the space.
    pub fn from_cells(p: u32, n: usize, cells: &[Vec<usize>], budget: &Budget) -> Result<Self> {
        budget.check_points("points of F_p^n", checked_pow(p, n))?;
        let size = (p as usize).pow(n as u32);
        let mut labels = vec![u32::MAX; size];
        for (k, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::InvalidParameter(format!("cell {k} is empty")));
            }
            for &x in cell {
                let slot = labels
                    .get_mut(x)
                    .ok_or_else(|| Error::InvalidParameter(format!("point {x} outside F_{p}^{n}")))?;
                if *slot != u32::MAX {
                    return Err(Error::InvalidParameter(format!("point {x} lies in two cells")));
                }
                *slot = k as u32;
            }
        }
        if let Some(x) = labels.iter().position(|&l| l == u32::MAX) {
            return Err(Error::InvalidParameter(format!("point {x} is in no cell")));
        }
        Ok(PartitionView {
            p,
            n,
            labels,
            num_cells: cells.len(),
        })
    }

    /// A partition from a label per point; labels are renumbered densely.
    pub fn from_labels(p: u32, n: usize, raw: &[u64]) -> Result<Self> {
        if raw.len() as u128 != checked_pow(p, n) {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for F_{p}^{n}",
                raw.len()
            )));
        }
        let mut dense = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = dense.len() as u32;
                *dense.entry(*l).or_insert(next)
            })
            .collect();
        Ok(PartitionView {
            p,
            n,
            labels,
            num_cells: dense.len(),
        })
    }

    pub fn singletons(p: u32, n: usize, budget: &Budget) -> Result<Self> {
        PartitionView::cosets(&Subspace::zero(p, n), budget)
    }

    pub fn trivial(p: u32, n: usize, budget: &Budget) -> Result<Self> {
        PartitionView::cosets(&Subspace::full(p, n), budget)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn label(&self, x: usize) -> usize {
        self.labels[x] as usize
    }

    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.num_cells];
        for (x, &l) in self.labels.iter().enumerate() {
            cells[l as usize].push(x);
        }
        cells
    }

    /// Whether every cell of `self` lies inside one cell of `coarse`.
    pub fn refines(&self, coarse: &PartitionView) -> bool {
        if self.labels.len() != coarse.labels.len() {
            return false;
        }
        let mut parent = vec![u32::MAX; self.num_cells];
        self.labels.iter().zip(&coarse.labels).all(|(&fine, &c)| {
            let slot = &mut parent[fine as usize];
            if *slot == u32::MAX {
                *slot = c;
            }
            *slot == c
        })
    }

    fn check_function(&self, f: &impl PointFunction) -> Result<()> {
        if f.p() != self.p || f.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "function on F_{}^{} with a partition of F_{}^{}",
                f.p(),
                f.n(),
                self.p,
                self.n
            )));
        }
        Ok(())
    }
}

/// Mean of `f` on each cell, in cell order.
pub fn cell_means(f: &impl PointFunction, partition: &PartitionView) -> Result<Vec<f64>> {
    partition.check_function(f)?;
    let values = f.values();
    Ok(partition
        .cells()
        .iter()
        .map(|cell| {
            let vals: Vec<f64> = cell.iter().map(|&x| values[x]).collect();
            pairwise_sum(&vals) / vals.len() as f64
        })
        .collect())
}

/// The table of `E(f|P)(x)`.
pub fn conditional_values(f: &impl PointFunction, partition: &PartitionView) -> Result<Vec<f64>> {
    let means = cell_means(f, partition)?;
    Ok(partition.labels.iter().map(|&l| means[l as usize]).collect())
}

/// `E(f|P)` as a density function.
pub fn conditional_expectation(f: &DensityFunction, partition: &PartitionView) -> Result<DensityFunction> {
    DensityFunction::new(f.p(), f.n(), conditional_values(f, partition)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub num_cells: usize,
    pub cell_densities: Vec<f64>,
}

/// `E(P) = E_x E(f|P)(x)²`.
pub fn energy(f: &impl PointFunction, partition: &PartitionView) -> Result<EnergyReport> {
    let densities = cell_means(f, partition)?;
    let labels = &partition.labels;
    let energy = pairwise_mean_by(labels.len(), |x| densities[labels[x] as usize].powi(2));
    Ok(EnergyReport {
        energy,
        num_cells: densities.len(),
        cell_densities: densities,
    })
}

/// `E(P(H))`.
pub fn subspace_energy(f: &impl PointFunction, h: &Subspace, budget: &Budget) -> Result<f64> {
    Ok(energy(f, &PartitionView::cosets(h, budget)?)?.energy)
}

/// The three energy properties for `Q` refining `P`.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyPropertyReport {
    pub energy_coarse: f64,
    pub energy_fine: f64,
    pub gap: f64,
    /// `‖E(f|Q) − E(f|P)‖²`.
    pub l2_difference: f64,
    pub bounded: bool,
    pub monotone: bool,
    pub pythagoras: bool,
    pub pass: bool,
}

pub fn energy_property_suite(
    f: &impl PointFunction,
    coarse: &PartitionView,
    fine: &PartitionView,
) -> Result<EnergyPropertyReport> {
    if !fine.refines(coarse) {
        return Err(Error::NotRefinement("Q does not refine P".into()));
    }
    let ep = energy(f, coarse)?.energy;
    let eq = energy(f, fine)?.energy;
    let cp = conditional_values(f, coarse)?;
    let cq = conditional_values(f, fine)?;
    let l2 = pairwise_mean_by(cp.len(), |x| (cq[x] - cp[x]).powi(2));
    let gap = eq - ep;
    let bounded = (-EQ_TOL..=1.0 + EQ_TOL).contains(&ep) && (-EQ_TOL..=1.0 + EQ_TOL).contains(&eq);
    let monotone = gap >= -EQ_TOL;
    let pythagoras = (gap - l2).abs() <= EQ_TOL;
    Ok(EnergyPropertyReport {
        energy_coarse: ep,
        energy_fine: eq,
        gap,
        l2_difference: l2,
        bounded,
        monotone,
        pythagoras,
        pass: bounded && monotone && pythagoras,
    })
}

/// `α_{H_k+x}(j) = w_j·|A_j ∩ (H_k+x)|/|H_k|` for `j = 1..=s`.
pub fn alpha_decomposition(inst: &Instance, k: usize, x: usize) -> Result<Vec<f64>> {
    if k > inst.s() {
        return Err(Error::InvalidParameter(format!(
            "H_{k} is not in the chain H_0..H_{}",
            inst.s()
        )));
    }
    let modulus = (inst.p as usize).pow(inst.big_d(k) as u32);
    let prefix = x % modulus;
    Ok(inst
        .layers
        .iter()
        .zip(&inst.weights)
        .map(|(layer, &w)| {
            if layer.prefix <= inst.big_d(k) {
                let member = layer.members[prefix % layer.members.len()];
                if member {
                    w
                } else {
                    0.0
                }
            } else {
                let total = layer.members.len() / modulus;
                let inside = (0..total)
                    .filter(|&t| layer.members[prefix + t * modulus])
                    .count();
                w * inside as f64 / total as f64
            }
        })
        .collect())
}

/// Energy gap between consecutive layers of the chain.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyGapReport {
    pub layer: usize,
    pub energy_prev: f64,
    pub energy: f64,
    pub gap: f64,
    /// `w_i²/p²`.
    pub bound: f64,
    pub slack: f64,
    /// `E_x (α_{H_i+x} − α_{H_{i−1}+x})²`.
    pub density_gap: f64,
    pub pass: bool,
}

/// Checks `E(H_i) − E(H_{i−1}) ≥ w_i²/p²`.
pub fn verify_energy_middle(inst: &Instance, i: usize, budget: &Budget) -> Result<EnergyGapReport> {
    if i == 0 || i > inst.s() {
        return Err(Error::InvalidParameter(format!("layer {i} outside 1..={}", inst.s())));
    }
    let coarse = PartitionView::cosets(&inst.h(i - 1), budget)?;
    let fine = PartitionView::cosets(&inst.h(i), budget)?;
    let suite = energy_property_suite(&inst.f, &coarse, &fine)?;
    let p = inst.p as f64;
    let bound = inst.weights[i - 1].powi(2) / (p * p);
    let gap = suite.gap;
    Ok(EnergyGapReport {
        layer: i,
        energy_prev: suite.energy_coarse,
        energy: suite.energy_fine,
        gap,
        bound,
        slack: gap - bound,
        density_gap: suite.l2_difference,
        pass: gap >= bound - EQ_TOL,
    })
}

/// Energy gap across a stretch of the chain next to the sum of the
/// per-layer bounds `w_j²/p²`.
#[derive(Debug, Clone, Serialize)]
pub struct ChainGapReport {
    pub from: usize,
    pub to: usize,
    pub gap: f64,
    pub bound_sum: f64,
}

pub fn chain_gap(inst: &Instance, from: usize, to: usize, budget: &Budget) -> Result<ChainGapReport> {
    if from > to || to > inst.s() {
        return Err(Error::InvalidParameter(format!("bad chain stretch {from}..{to}")));
    }
    let lo = subspace_energy(&inst.f, &inst.h(from), budget)?;
    let hi = subspace_energy(&inst.f, &inst.h(to), budget)?;
    let p = inst.p as f64;
    Ok(ChainGapReport {
        from,
        to,
        gap: hi - lo,
        bound_sum: inst.weights[from..to].iter().map(|w| w * w / (p * p)).sum(),
    })
}

/// A subspace whose energy breaks the bound.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyWitness {
    pub source: String,
    pub codim: usize,
    pub basis: Vec<Vec<u32>>,
    pub energy: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyStartReport {
    pub layer: usize,
    pub energy_h: f64,
    /// `8w_i²`.
    pub bound: f64,
    pub adversarial: usize,
    pub random: usize,
    /// Largest `E(W) − E(H_i)` seen.
    pub max_excess: f64,
    pub witnesses: Vec<EnergyWitness>,
    pub pass: bool,
}

/// Candidate subspaces for the energy-start check: the chain subspaces cut by
/// growing sets of tuple hyperplanes, up to codimension `D_i`.
pub fn energy_start_family(inst: &Instance, i: usize) -> Result<Vec<Subspace>> {
    let max_codim = inst.big_d(i);
    let mut family: Vec<Subspace> = Vec::new();
    let push = |w: Subspace, family: &mut Vec<Subspace>| {
        if w.codim() <= max_codim && !family.contains(&w) {
            family.push(w);
        }
    };
    for j in 0..=inst.s() {
        let h = inst.h(j);
        if h.codim() > max_codim {
            break;
        }
        push(h.clone(), &mut family);
        for l in 1..=inst.s() {
            let mut w = h.clone();
            for u in 0..inst.tuples[l - 1].len() {
                let xi = inst.xi(l, u);
                push(h.intersect_hyperplane(&xi)?, &mut family);
                let next = w.intersect_hyperplane(&xi)?;
                if next.codim() > max_codim {
                    break;
                }
                w = next;
                push(w.clone(), &mut family);
            }
        }
    }
    Ok(family)
}

/// Checks `E(W) < E(H_i) + 8w_i²` over the adversarial family and `random`
/// seeded subspaces of codimension at most `D_i`.
pub fn verify_energy_start(
    inst: &Instance,
    i: usize,
    random: usize,
    seed: u64,
    budget: &Budget,
) -> Result<EnergyStartReport> {
    if i == 0 || i >= inst.s() {
        return Err(Error::Hypothesis(format!("layer {i} outside 1..{}", inst.s())));
    }
    let w_i = inst.weights[i - 1];
    if let Some(j) = (i + 1..=inst.s()).find(|&j| inst.weights[j - 1] > w_i) {
        return Err(Error::Hypothesis(format!("w_{j} exceeds w_{i}")));
    }
    let energy_h = subspace_energy(&inst.f, &inst.h(i), budget)?;
    let bound = 8.0 * w_i * w_i;
    let family = energy_start_family(inst, i)?;
    let adversarial = family.len();
    let max_codim = inst.big_d(i);
    let mut candidates: Vec<(String, Subspace)> = family
        .into_iter()
        .enumerate()
        .map(|(k, w)| (format!("adversarial {k}"), w))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random {
        let codim = rng.random_range(0..=max_codim);
        let w = Subspace::random(inst.p, inst.n, inst.n - codim, &mut rng)?;
        candidates.push((format!("random {k}"), w));
    }
    let energies = candidates
        .par_iter()
        .map(|(_, w)| subspace_energy(&inst.f, w, budget))
        .collect::<Result<Vec<f64>>>()?;
    let mut max_excess = f64::NEG_INFINITY;
    let mut witnesses = Vec::new();
    for ((source, w), e) in candidates.iter().zip(&energies) {
        let excess = e - energy_h;
        max_excess = max_excess.max(excess);
        if excess >= bound {
            witnesses.push(EnergyWitness {
                source: source.clone(),
                codim: w.codim(),
                basis: w.basis().iter().map(|b| b.coords().to_vec()).collect(),
                energy: *e,
                excess,
            });
        }
    }
    Ok(EnergyStartReport {
        layer: i,
        energy_h,
        bound,
        adversarial,
        random,
        max_excess,
        pass: witnesses.is_empty(),
        witnesses,
    })
}

/// The two conditions of the strong regularity pair `W_2 ≤ W_1`.
#[derive(Debug, Clone, Serialize)]
pub struct SarlPairReport {
    pub codim_w1: usize,
    pub codim_w2: usize,
    /// `ε(codim W_1)`.
    pub epsilon: f64,
    pub bad_fraction: f64,
    /// Representatives of the cosets of `W_2` that are not ε-uniform.
    pub bad_cosets: Vec<Vec<u32>>,
    pub regular: bool,
    pub energy_gap: f64,
    pub delta: f64,
    pub energy_ok: bool,
    pub pass: bool,
}

pub fn sarl_pair_check(
    f: &impl PointFunction,
    w1: &Subspace,
    w2: &Subspace,
    delta: f64,
    eps: impl Fn(usize) -> f64,
    budget: &Budget,
) -> Result<SarlPairReport> {
    if !w1.contains(w2)? {
        return Err(Error::NotRefinement("W_2 is not contained in W_1".into()));
    }
    let epsilon = eps(w1.codim());
    let report = regularity_check(f, w2, epsilon, budget)?;
    let energy_gap = subspace_energy(f, w2, budget)? - subspace_energy(f, w1, budget)?;
    let regular = report.is_regular();
    let energy_ok = energy_gap <= delta + EQ_TOL;
    Ok(SarlPairReport {
        codim_w1: w1.codim(),
        codim_w2: w2.codim(),
        epsilon,
        bad_fraction: report.bad_fraction,
        bad_cosets: report
            .bad_cosets
            .iter()
            .map(|b| b.coset.rep().coords().to_vec())
            .collect(),
        regular,
        energy_gap,
        delta,
        energy_ok,
        pass: regular && energy_ok,
    })
}
