//! Spanning tuples, layer sets and the layered density function.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schedule::DimensionSchedule;
use crate::budget::{checked_pow, Budget};
use crate::error::{Error, Result};
use crate::field_space::{point_count, FieldVector, Subspace};
use crate::fourier::{DensityFunction, PointFunction};
use crate::numeric::{hex_f64, parse_hex_f64};

/// Resampling attempts allowed before a spanning tuple is reported as
/// unattainable.
pub const MAX_SPANNING_ATTEMPTS: usize = 50;

/// Largest hyperplane count of a tuple of vectors in F_p^dim, with
/// multiplicity, over all `(p^dim − 1)/(p − 1)` hyperplanes.
pub fn hyperplane_max_count(p: u32, dim: usize, vectors: &[FieldVector], budget: &Budget) -> Result<usize> {
    budget.check_points("hyperplanes of V", checked_pow(p, dim))?;
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for v in vectors {
        if v.p() != p || v.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "tuple vector outside F_{p}^{dim}"
            )));
        }
        *hist.entry(v.index()).or_default() += 1;
    }
    let distinct: Vec<(FieldVector, usize)> = hist
        .into_iter()
        .map(|(i, c)| (FieldVector::from_index(p, dim, i), c))
        .collect();
    let size = (p as usize).pow(dim as u32);
    let mut best = 0;
    for a in 1..size {
        let normal = FieldVector::from_index(p, dim, a);
        // One normal per projective class: leading nonzero entry equal to 1.
        if normal.coords().iter().find(|&&c| c != 0) != Some(&1) {
            continue;
        }
        let count: usize = distinct
            .iter()
            .filter(|(v, _)| normal.dot(v) == 0)
            .map(|(_, c)| c)
            .sum();
        best = best.max(count);
    }
    Ok(best)
}

/// Whether every hyperplane of F_p^dim holds fewer than ¾ of the tuple,
/// which is equivalent to every ¾-subtuple spanning F_p^dim.
pub fn verify_spanning(p: u32, dim: usize, vectors: &[FieldVector], budget: &Budget) -> Result<bool> {
    if vectors.iter().any(FieldVector::is_zero) {
        return Ok(false);
    }
    let max = hyperplane_max_count(p, dim, vectors, budget)?;
    Ok(4 * max < 3 * vectors.len())
}

/// Draws `count` uniform nonzero vectors of F_p^dim, resampling until the
/// tuple passes [`verify_spanning`]; returns the tuple and the attempts used.
pub fn sample_spanning_vectors(
    p: u32,
    dim: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
    budget: &Budget,
) -> Result<(Vec<FieldVector>, usize)> {
    for attempt in 1..=MAX_SPANNING_ATTEMPTS {
        let vectors: Vec<FieldVector> = (0..count)
            .map(|_| loop {
                let v = FieldVector::random(p, dim, rng);
                if !v.is_zero() {
                    break v;
                }
            })
            .collect();
        if verify_spanning(p, dim, &vectors, budget)? {
            return Ok((vectors, attempt));
        }
    }
    Err(Error::SamplingFailed {
        attempts: MAX_SPANNING_ATTEMPTS,
        reason: format!("no {count}-tuple of F_{p}^{dim} passed the hyperplane test"),
    })
}

/// The tuple `X_i = (ξ_u : u ∈ U_{i−1})` of nonzero vectors of
/// `V_i = ⟨e_{D_{i−1}+1}, …, e_{D_i}⟩`.
///
/// Vectors are stored in the local coordinates of `V_i`; entry `k` belongs to
/// the label `u` whose first `D_{i−1}` coordinates have index `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTuple {
    pub p: u32,
    pub layer: usize,
    /// `D_{i−1}`: coordinates of V start here (0-based).
    pub offset: usize,
    /// `d_i = dim V`.
    pub dim: usize,
    pub vectors: Vec<FieldVector>,
    /// Sampling attempts used (1 for the fixed tuples of layers 1 and 2).
    pub attempts: usize,
}

impl SpanningTuple {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `ξ_u` embedded in F_p^n.
    pub fn ambient(&self, u_index: usize, n: usize) -> FieldVector {
        let local = &self.vectors[u_index];
        let mut v = FieldVector::zero(self.p, n);
        for (k, &c) in local.coords().iter().enumerate() {
            v.set(self.offset + k, c);
        }
        v
    }

    pub fn verify(&self, budget: &Budget) -> Result<bool> {
        verify_spanning(self.p, self.dim, &self.vectors, budget)
    }
}

fn layer_rng(seed: u64, layer: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(layer as u64);
    rng
}

fn dims_of(schedule: &DimensionSchedule, i: usize) -> Result<(usize, usize)> {
    let offset = schedule.big_d_usize(i - 1);
    let dim = schedule.d_usize(i);
    match (offset, dim) {
        (Some(o), Some(d)) => Ok((o, d)),
        _ => Err(Error::BudgetExceeded {
            what: "layer dimensions",
            required: u128::MAX,
            limit: usize::MAX as u128,
        }),
    }
}

/// Samples `X_i` for the given schedule: `(e_1)` for `i = 1`,
/// `(e_2 + m·e_3)_m` for `i = 2`, and otherwise `p^{D_{i−1}}` random
/// vectors of `V_i` passing the hyperplane test. Custom schedules sample
/// every layer.
pub fn sample_spanning_tuple(
    schedule: &DimensionSchedule,
    i: usize,
    seed: u64,
    budget: &Budget,
) -> Result<SpanningTuple> {
    if i == 0 || i > schedule.s() {
        return Err(Error::InvalidParameter(format!(
            "layer {i} outside 1..={}",
            schedule.s()
        )));
    }
    let p = schedule.p();
    let (offset, dim) = dims_of(schedule, i)?;
    let count = checked_pow(p, offset);
    budget.check_points("spanning tuple", count)?;
    let count = count as usize;
    let fixed = !schedule.is_custom() && i <= 2;
    let (vectors, attempts) = if fixed && i == 1 {
        (vec![FieldVector::unit(p, 1, 0)], 1)
    } else if fixed {
        let vectors = (0..p).map(|m| FieldVector::new(p, [1, m])).collect();
        (vectors, 1)
    } else {
        let mut rng = layer_rng(seed, i);
        sample_spanning_vectors(p, dim, count, &mut rng, budget)?
    };
    Ok(SpanningTuple {
        p,
        layer: i,
        offset,
        dim,
        vectors,
        attempts,
    })
}

/// Layer `A_i`, stored by the labels of its `H_i`-cosets.
///
/// The label of a point is the index of its first `D_i` coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub index: usize,
    /// `D_i`.
    pub prefix: usize,
    pub members: Vec<bool>,
}

impl Layer {
    pub fn labels(&self) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(l, _)| l)
            .collect()
    }

    pub fn contains_point(&self, x: usize) -> bool {
        self.members[x % self.members.len()]
    }
}

/// A realized layered construction `f = Σ w_i·1_{A_i}` over F_p^n.
#[derive(Debug, Clone)]
pub struct Instance {
    pub p: u32,
    pub n: usize,
    pub seed: u64,
    pub schedule: DimensionSchedule,
    pub weights: Vec<f64>,
    pub tuples: Vec<SpanningTuple>,
    pub layers: Vec<Layer>,
    pub f: DensityFunction,
}

fn build_layer(p: u32, tuple: &SpanningTuple) -> Layer {
    let inner = (p as usize).pow(tuple.offset as u32);
    let local = (p as usize).pow(tuple.dim as u32);
    let mut members = vec![false; inner * local];
    for (label, slot) in members.iter_mut().enumerate() {
        let u = label % inner;
        let v = FieldVector::from_index(p, tuple.dim, label / inner);
        *slot = tuple.vectors[u].dot(&v) == 0;
    }
    Layer {
        index: tuple.layer,
        prefix: tuple.offset + tuple.dim,
        members,
    }
}

fn build_density(p: u32, n: usize, weights: &[f64], layers: &[Layer], budget: &Budget) -> Result<DensityFunction> {
    let size = point_count(p, n, budget)?;
    let values = (0..size)
        .map(|x| {
            weights
                .iter()
                .zip(layers)
                .filter(|(_, layer)| layer.contains_point(x))
                .map(|(w, _)| w)
                .sum()
        })
        .collect();
    DensityFunction::new(p, n, values)
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::InvalidParameter(format!("weight {w} outside [0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if total > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "weights sum to {total} > 1"
        )));
    }
    Ok(())
}

impl Instance {
    /// Builds the standard construction with `s = weights.len()` layers.
    pub fn build(p: u32, n: usize, weights: &[f64], seed: u64, budget: &Budget) -> Result<Self> {
        let schedule = DimensionSchedule::new(p, weights.len())?;
        Instance::build_with_schedule(schedule, n, weights, seed, budget)
    }

    pub fn build_with_schedule(
        schedule: DimensionSchedule,
        n: usize,
        weights: &[f64],
        seed: u64,
        budget: &Budget,
    ) -> Result<Self> {
        let p = schedule.p();
        let s = schedule.s();
        if weights.len() != s {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {s} layers",
                weights.len()
            )));
        }
        check_weights(weights)?;
        let top = schedule.big_d_usize(s).filter(|&d| d <= n);
        if top.is_none() {
            return Err(Error::InvalidParameter(format!(
                "n = {n} is below D_s = {}",
                schedule.big_d(s)
            )));
        }
        point_count(p, n, budget)?;
        let tuples = (1..=s)
            .map(|i| sample_spanning_tuple(&schedule, i, seed, budget))
            .collect::<Result<Vec<_>>>()?;
        let layers: Vec<Layer> = tuples.iter().map(|t| build_layer(p, t)).collect();
        let f = build_density(p, n, weights, &layers, budget)?;
        let inst = Instance {
            p,
            n,
            seed,
            schedule,
            weights: weights.to_vec(),
            tuples,
            layers,
            f,
        };
        inst.audit_layers()?;
        Ok(inst)
    }

    pub fn s(&self) -> usize {
        self.weights.len()
    }

    /// `D_i` for `0 ≤ i ≤ s`.
    pub fn big_d(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.layers[i - 1].prefix
        }
    }

    /// `H_i = {0}^{D_i} × F_p^{n−D_i}`.
    pub fn h(&self, i: usize) -> Subspace {
        Subspace::coordinate(self.p, self.n, self.big_d(i)..self.n)
    }

    /// `U_i = F_p^{D_i} × {0}^{n−D_i}`.
    pub fn u(&self, i: usize) -> Subspace {
        Subspace::coordinate(self.p, self.n, 0..self.big_d(i))
    }

    /// `ξ^{(i)}_u` in F_p^n for the label `u` of `U_{i−1}`.
    pub fn xi(&self, i: usize, u_index: usize) -> FieldVector {
        self.tuples[i - 1].ambient(u_index, self.n)
    }

    /// Index in `U_{i−1}` of the `H_{i−1}`-coset containing point `x`.
    pub fn u_index_of(&self, i: usize, x: usize) -> usize {
        x % (self.p as usize).pow(self.big_d(i - 1) as u32)
    }

    /// `u` as a vector of `U_{i−1}` ⊂ F_p^n.
    pub fn u_vector(&self, u_index: usize) -> FieldVector {
        FieldVector::from_index(self.p, self.n, u_index)
    }

    pub fn in_layer(&self, i: usize, x: usize) -> bool {
        self.layers[i - 1].contains_point(x)
    }

    /// Density `1/p` of every layer inside every `H_{i−1}`-coset, measured
    /// in `H_i`-cosets.
    pub fn audit_layers(&self) -> Result<()> {
        let p = self.p as usize;
        for layer in &self.layers {
            let inner = p.pow(self.big_d(layer.index - 1) as u32);
            let local = layer.members.len() / inner;
            let mut counts = vec![0usize; inner];
            for (label, &m) in layer.members.iter().enumerate() {
                if m {
                    counts[label % inner] += 1;
                }
            }
            if let Some(u) = counts.iter().position(|&c| c * p != local) {
                return Err(Error::Invariant(format!(
                    "layer {} meets coset {u} of H_{} in {} of {local} H_{}-cosets",
                    layer.index,
                    layer.index - 1,
                    counts[u],
                    layer.index
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the manifest and density bytes.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.manifest("").to_json().as_bytes());
        hasher.update(self.f.to_bytes());
        hex_digest(&hasher.finalize())
    }

    fn manifest(&self, density: &str) -> Manifest {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            p: self.p,
            n: self.n,
            s: self.s(),
            seed: self.seed,
            custom_dims: self
                .schedule
                .is_custom()
                .then(|| (1..=self.s()).map(|i| self.schedule.d_usize(i).unwrap()).collect()),
            big_d: (1..=self.s()).map(|i| self.big_d(i)).collect(),
            weights: self.weights.iter().map(|&w| hex_f64(w)).collect(),
            tuples: self
                .tuples
                .iter()
                .map(|t| (0..t.len()).map(|u| t.ambient(u, self.n).coords().to_vec()).collect())
                .collect(),
            layers: self.layers.iter().map(Layer::labels).collect(),
            density: density.into(),
        }
    }

    /// Writes `<stem>.json` and `<stem>.fpfn` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let density_name = format!("{stem}.fpfn");
        let manifest_path = dir.join(format!("{stem}.json"));
        let density_path = dir.join(&density_name);
        fs::write(&manifest_path, self.manifest(&density_name).to_json())?;
        self.f.write(&density_path)?;
        Ok((manifest_path, density_path))
    }

    /// Loads an instance and fails unless the stored tuples, layers and
    /// density agree bit-for-bit with their re-derivation.
    pub fn load(manifest: impl AsRef<Path>, budget: &Budget) -> Result<Self> {
        let (inst, report) = Instance::load_unverified(manifest, budget)?;
        if let Some(first) = report.mismatches.first() {
            return Err(Error::Invariant(format!(
                "stored instance disagrees with its re-derivation: {first}"
            )));
        }
        Ok(inst)
    }

    /// Loads the stored data as-is and reports where it disagrees with the
    /// re-derivation from seed, schedule and weights.
    pub fn load_unverified(
        manifest: impl AsRef<Path>,
        budget: &Budget,
    ) -> Result<(Self, ConsistencyReport)> {
        let manifest_path = manifest.as_ref();
        let m: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!("unknown manifest format {:?}", m.format)));
        }
        let density_path = manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&m.density);
        let f = DensityFunction::read(&density_path, budget)?;
        if f.p() != m.p || f.n() != m.n {
            return Err(Error::Format("density file shape differs from manifest".into()));
        }
        let weights = m
            .weights
            .iter()
            .map(|w| parse_hex_f64(w))
            .collect::<Result<Vec<f64>>>()?;
        if weights.len() != m.s || m.tuples.len() != m.s || m.layers.len() != m.s {
            return Err(Error::Format("layer counts disagree within the manifest".into()));
        }
        let schedule = match &m.custom_dims {
            Some(dims) => DimensionSchedule::from_dims(m.p, dims)?,
            None => DimensionSchedule::new(m.p, m.s)?,
        };
        let mut tuples = Vec::with_capacity(m.s);
        let mut layers = Vec::with_capacity(m.s);
        for i in 1..=m.s {
            let (offset, dim) = dims_of(&schedule, i)?;
            let vectors = m.tuples[i - 1]
                .iter()
                .map(|coords| {
                    if coords.len() != m.n {
                        return Err(Error::Format(format!("tuple {i} vector has wrong length")));
                    }
                    Ok(FieldVector::new(m.p, coords[offset..offset + dim].iter().copied()))
                })
                .collect::<Result<Vec<_>>>()?;
            tuples.push(SpanningTuple {
                p: m.p,
                layer: i,
                offset,
                dim,
                vectors,
                attempts: 0,
            });
            let size = (m.p as usize).pow((offset + dim) as u32);
            let mut members = vec![false; size];
            for &l in &m.layers[i - 1] {
                *members
                    .get_mut(l)
                    .ok_or_else(|| Error::Format(format!("layer {i} label {l} out of range")))? = true;
            }
            layers.push(Layer {
                index: i,
                prefix: offset + dim,
                members,
            });
        }
        let inst = Instance {
            p: m.p,
            n: m.n,
            seed: m.seed,
            schedule,
            weights,
            tuples,
            layers,
            f,
        };
        let report = inst.consistency(&m, budget)?;
        Ok((inst, report))
    }

    fn consistency(&self, m: &Manifest, budget: &Budget) -> Result<ConsistencyReport> {
        let mut mismatches = Vec::new();
        if let Err(e) = check_weights(&self.weights) {
            mismatches.push(e.to_string());
        }
        if m.big_d != (1..=self.s()).map(|i| self.big_d(i)).collect::<Vec<_>>() {
            mismatches.push("stored dimension schedule differs from the recurrence".into());
        }
        for i in 1..=self.s() {
            let fresh = sample_spanning_tuple(&self.schedule, i, self.seed, budget)?;
            if fresh.vectors != self.tuples[i - 1].vectors {
                mismatches.push(format!("tuple {i} differs from the seeded sample"));
            }
            if build_layer(self.p, &self.tuples[i - 1]) != self.layers[i - 1] {
                mismatches.push(format!("layer {i} differs from its tuple"));
            }
        }
        let rebuilt = build_density(self.p, self.n, &self.weights, &self.layers, budget);
        match rebuilt {
            Ok(g) => {
                if let Some(x) = (0..g.values().len())
                    .find(|&x| g.values()[x].to_bits() != self.f.values()[x].to_bits())
                {
                    mismatches.push(format!(
                        "density differs at point {x}: stored {}, derived {}",
                        self.f.values()[x],
                        g.values()[x]
                    ));
                }
            }
            Err(e) => mismatches.push(format!("density cannot be re-derived: {e}")),
        }
        Ok(ConsistencyReport { mismatches })
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Disagreements between stored and re-derived instance data.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConsistencyReport {
    pub mismatches: Vec<String>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

const MANIFEST_FORMAT: &str = "regulab-instance/1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    p: u32,
    n: usize,
    s: usize,
    seed: u64,
    custom_dims: Option<Vec<usize>>,
    #[serde(rename = "D")]
    big_d: Vec<usize>,
    weights: Vec<String>,
    tuples: Vec<Vec<Vec<u32>>>,
    layers: Vec<Vec<usize>>,
    density: String,
}

impl Manifest {
    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
