//! Known densities with exact factorization, marginals and samplers.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::{Partition, PartitionFamily};

/// Smallest accepted acceptance rate for rejection sampling.
pub const MIN_SAMPLER_EFFICIENCY: f64 = 0.01;

/// Perturbation profile `g(t) = (1 − 4t²)³(1 − 36t²)` on `[−1/2, 1/2]`.
///
/// `∫g = 0`, `g(0) = 1 = ‖g‖_∞`, and `g` vanishes with two derivatives at `±1/2`.
pub fn bump_profile(t: f64) -> f64 {
    if t.abs() >= 0.5 {
        return 0.0;
    }
    let u = 1.0 - 4.0 * t * t;
    u * u * u * (1.0 - 36.0 * t * t)
}

fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// One bump `A ∏_l g((x_l − c_l)/δ_l)` of a [`Factor::BumpedGaussian`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
}

/// A density on the coordinates of one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Factor {
    /// `N(mean, sigma²)` on one coordinate.
    Gaussian { mean: f64, sigma: f64 },
    /// `K((x − center)/scale)/scale` with `K(t) = 1.5(1 − 4t²)` on `[−1/2, 1/2]`.
    KernelBump { center: f64, scale: f64 },
    /// Bivariate normal with correlation `rho`.
    CorrelatedGaussian { mean: [f64; 2], sigma: [f64; 2], rho: f64 },
    /// Axis-aligned Gaussian `f₀` plus disjoint zero-mass bumps of height `amplitude`
    /// and per-axis width `scales`.
    BumpedGaussian { mean: Vec<f64>, sigma: Vec<f64>, amplitude: f64, scales: Vec<f64>, bumps: Vec<Bump> },
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::Gaussian { .. } | Factor::KernelBump { .. } => 1,
            Factor::CorrelatedGaussian { .. } => 2,
            Factor::BumpedGaussian { mean, .. } => mean.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            Factor::Gaussian { sigma, .. } if !(*sigma > 0.0) => bad(format!("sigma {sigma} must be positive")),
            Factor::KernelBump { scale, .. } if !(*scale > 0.0) => bad(format!("scale {scale} must be positive")),
            Factor::CorrelatedGaussian { sigma, rho, .. } => {
                if !(sigma[0] > 0.0 && sigma[1] > 0.0) || !(rho.abs() < 1.0) {
                    bad(format!("need positive sigmas and |rho| < 1, got {sigma:?}, {rho}"))
                } else {
                    Ok(())
                }
            }
            Factor::BumpedGaussian { mean, sigma, amplitude, scales, bumps } => {
                let k = mean.len();
                if k == 0 || sigma.len() != k || scales.len() != k || bumps.iter().any(|b| b.center.len() != k) {
                    return bad("bumped Gaussian: inconsistent dimensions".into());
                }
                if sigma.iter().chain(scales).any(|v| !(*v > 0.0)) || !(*amplitude >= 0.0) {
                    return bad("bumped Gaussian: sigmas and scales must be positive".into());
                }
                for (a, b) in bumps.iter().enumerate() {
                    for c in &bumps[a + 1..] {
                        let overlap = (0..k).all(|l| (b.center[l] - c.center[l]).abs() < scales[l]);
                        if overlap {
                            return bad("bumped Gaussian: bump supports overlap".into());
                        }
                    }
                }
                if *amplitude > self.envelope_floor() {
                    return bad(format!(
                        "bumped Gaussian: amplitude {amplitude} exceeds the base density on a bump support"
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Smallest base density over the bump supports (`∞` without bumps).
    fn envelope_floor(&self) -> f64 {
        match self {
            Factor::BumpedGaussian { mean, sigma, scales, bumps, .. } => bumps
                .iter()
                .map(|b| {
                    (0..mean.len())
                        .map(|l| {
                            let far = (b.center[l] - mean[l]).abs() + scales[l] / 2.0;
                            normal_pdf(far, 0.0, sigma[l])
                        })
                        .product::<f64>()
                })
                .fold(f64::INFINITY, f64::min),
            _ => f64::INFINITY,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Factor::Gaussian { mean, sigma } => normal_pdf(x[0], *mean, *sigma),
            Factor::KernelBump { center, scale } => {
                let t = (x[0] - center) / scale;
                if t.abs() <= 0.5 {
                    1.5 * (1.0 - 4.0 * t * t) / scale
                } else {
                    0.0
                }
            }
            Factor::CorrelatedGaussian { mean, sigma, rho } => {
                let z0 = (x[0] - mean[0]) / sigma[0];
                let z1 = (x[1] - mean[1]) / sigma[1];
                let det = 1.0 - rho * rho;
                let q = (z0 * z0 - 2.0 * rho * z0 * z1 + z1 * z1) / det;
                (-0.5 * q).exp() / (2.0 * PI * sigma[0] * sigma[1] * det.sqrt())
            }
            Factor::BumpedGaussian { mean, sigma, amplitude, scales, bumps } => {
                let base: f64 = (0..mean.len()).map(|l| normal_pdf(x[l], mean[l], sigma[l])).product();
                let pert: f64 = bumps
                    .iter()
                    .map(|b| (0..mean.len()).map(|l| bump_profile((x[l] - b.center[l]) / scales[l])).product::<f64>())
                    .sum();
                base + amplitude * pert
            }
        }
    }

    /// Marginal density over the local coordinates `local` (sorted, nonempty).
    pub fn eval_marginal(&self, local: &[usize], x: &[f64]) -> f64 {
        if local.len() == self.dim() {
            return self.eval(x);
        }
        match self {
            Factor::CorrelatedGaussian { mean, sigma, .. } => normal_pdf(x[0], mean[local[0]], sigma[local[0]]),
            // Integrating any coordinate out of a bump gives ∫g = 0.
            Factor::BumpedGaussian { mean, sigma, .. } => {
                local.iter().zip(x).map(|(&l, &v)| normal_pdf(v, mean[l], sigma[l])).product()
            }
            _ => unreachable!("one-dimensional factors have no proper marginals"),
        }
    }

    /// Box outside of which the factor's mass is negligible (Gaussian: 8σ).
    pub fn support_box(&self) -> Vec<(f64, f64)> {
        match self {
            Factor::Gaussian { mean, sigma } => vec![(mean - 8.0 * sigma, mean + 8.0 * sigma)],
            Factor::KernelBump { center, scale } => vec![(center - scale / 2.0, center + scale / 2.0)],
            Factor::CorrelatedGaussian { mean, sigma, .. } => {
                (0..2).map(|l| (mean[l] - 8.0 * sigma[l], mean[l] + 8.0 * sigma[l])).collect()
            }
            Factor::BumpedGaussian { mean, sigma, .. } => {
                mean.iter().zip(sigma).map(|(m, s)| (m - 8.0 * s, m + 8.0 * s)).collect()
            }
        }
    }

    /// Acceptance rate of the rejection sampler (1 for exact samplers).
    pub fn sampler_efficiency(&self) -> f64 {
        match self {
            Factor::BumpedGaussian { amplitude, bumps, .. } if !bumps.is_empty() && *amplitude > 0.0 => {
                1.0 / (1.0 + amplitude / self.envelope_floor())
            }
            _ => 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Factor::Gaussian { mean, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                out[0] = mean + sigma * z;
            }
            Factor::KernelBump { center, scale } => {
                // Rejection against the uniform on the support; K ≤ 1.5.
                loop {
                    let t: f64 = rng.gen::<f64>() - 0.5;
                    if rng.gen::<f64>() <= 1.0 - 4.0 * t * t {
                        out[0] = center + scale * t;
                        break;
                    }
                }
            }
            Factor::CorrelatedGaussian { mean, sigma, rho } => {
                let z0: f64 = StandardNormal.sample(rng);
                let z1: f64 = StandardNormal.sample(rng);
                out[0] = mean[0] + sigma[0] * z0;
                out[1] = mean[1] + sigma[1] * (rho * z0 + (1.0 - rho * rho).sqrt() * z1);
            }
            Factor::BumpedGaussian { mean, sigma, .. } => {
                let bound = 1.0 / self.sampler_efficiency();
                loop {
                    for l in 0..mean.len() {
                        let z: f64 = StandardNormal.sample(rng);
                        out[l] = mean[l] + sigma[l] * z;
                    }
                    let base: f64 = (0..mean.len()).map(|l| normal_pdf(out[l], mean[l], sigma[l])).product();
                    if rng.gen::<f64>() * bound * base <= self.eval(out) {
                        break;
                    }
                }
            }
        }
    }
}

/// Product of factors over disjoint coordinate blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDensity {
    pub name: String,
    pub dim: usize,
    /// `(block, factor)` with 0-based coordinates; the blocks partition `0..dim`.
    pub factors: Vec<(Vec<usize>, Factor)>,
}

impl SyntheticDensity {
    pub fn new(name: impl Into<String>, dim: usize, factors: Vec<(Vec<usize>, Factor)>) -> Result<Self> {
        let blocks: Vec<Vec<usize>> = factors.iter().map(|(b, _)| b.clone()).collect();
        Partition::new(dim, blocks)?;
        for (b, f) in &factors {
            if b.len() != f.dim() {
                return Err(Error::InvalidArgument(format!(
                    "factor of dimension {} assigned to block of size {}",
                    f.dim(),
                    b.len()
                )));
            }
            f.validate()?;
            let eff = f.sampler_efficiency();
            if eff < MIN_SAMPLER_EFFICIENCY {
                return Err(Error::SamplerEfficiency { efficiency: eff });
            }
        }
        Ok(Self { name: name.into(), dim, factors })
    }

    /// Independent `N(0, σ_j²)` coordinates.
    pub fn product_gaussian(sigma: &[f64]) -> Result<Self> {
        let factors =
            sigma.iter().enumerate().map(|(j, &s)| (vec![j], Factor::Gaussian { mean: 0.0, sigma: s })).collect();
        Self::new("product-gaussian", sigma.len(), factors)
    }

    /// Single bivariate block with correlation `rho`.
    pub fn correlated_gaussian(sigma: [f64; 2], rho: f64) -> Result<Self> {
        Self::new(
            "correlated-gaussian",
            2,
            vec![(vec![0, 1], Factor::CorrelatedGaussian { mean: [0.0, 0.0], sigma, rho })],
        )
    }

    /// Axis-aligned Gaussian on `dim` coordinates with `count` bumps per axis of
    /// width `scale`, placed on the lattice `j·scale` around the mean.
    pub fn gaussian_with_bumps(sigma: f64, dim: usize, amplitude: f64, scale: f64, count: usize) -> Result<Self> {
        let offsets: Vec<f64> = (0..count).map(|j| (j as f64 - (count as f64 - 1.0) / 2.0) * scale).collect();
        let mut centers: Vec<Vec<f64>> = vec![vec![]];
        for _ in 0..dim {
            centers = centers
                .into_iter()
                .flat_map(|c| {
                    offsets.iter().map(move |&o| {
                        let mut c = c.clone();
                        c.push(o);
                        c
                    })
                })
                .collect();
        }
        let factor = Factor::BumpedGaussian {
            mean: vec![0.0; dim],
            sigma: vec![sigma; dim],
            amplitude,
            scales: vec![scale; dim],
            bumps: centers.into_iter().map(|center| Bump { center }).collect(),
        };
        Self::new("gaussian-with-bumps", dim, vec![((0..dim).collect(), factor)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Finest partition the density factorizes over.
    pub fn true_partition(&self) -> Partition {
        Partition::new(self.dim, self.factors.iter().map(|(b, _)| b.clone()).collect())
            .expect("validated at construction")
    }

    /// Members of `family` the density factorizes over: coarsenings of the true partition.
    pub fn factorizing(&self, family: &PartitionFamily) -> Vec<Partition> {
        let truth = self.true_partition();
        family.members().iter().filter(|p| crate::partitions::refines(&truth, p).unwrap_or(false)).cloned().collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::new();
        self.factors
            .iter()
            .map(|(b, f)| {
                buf.clear();
                buf.extend(b.iter().map(|&j| x[j]));
                f.eval(&buf)
            })
            .product()
    }

    /// `f_I(x_I)` with `x_I` listed in the order of `block` (sorted).
    pub fn eval_marginal(&self, block: &[usize], x: &[f64]) -> f64 {
        let mut value = 1.0;
        let mut local = Vec::new();
        let mut coords = Vec::new();
        for (b, f) in &self.factors {
            local.clear();
            coords.clear();
            for (pos, j) in b.iter().enumerate() {
                if let Some(k) = block.iter().position(|i| i == j) {
                    local.push(pos);
                    coords.push(x[k]);
                }
            }
            if !local.is_empty() {
                value *= f.eval_marginal(&local, &coords);
            }
        }
        value
    }

    /// Per-coordinate box holding all but a negligible part of the mass.
    pub fn support_box(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); self.dim];
        for (b, f) in &self.factors {
            for (j, r) in b.iter().zip(f.support_box()) {
                out[*j] = r;
            }
        }
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut [f64]) {
        let mut buf = Vec::new();
        for (b, f) in &self.factors {
            buf.clear();
            buf.resize(b.len(), 0.0);
            f.sample(rng, &mut buf);
            for (j, v) in b.iter().zip(&buf) {
                row[*j] = *v;
            }
        }
    }

    /// `n` draws, row-major.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<crate::data::Dataset> {
        let mut values = vec![0.0; n * self.dim];
        for row in values.chunks_exact_mut(self.dim) {
            self.sample_into(rng, row);
        }
        crate::data::Dataset::from_row_major(n, self.dim, values)
    }
}
