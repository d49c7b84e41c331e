//! Quantities that need the true density: bias, oracle risk, smoothness index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::BandwidthVector;
use crate::kernels::Kernel;
use crate::partitions::{diamond, Partition};
use crate::quadrature::{adaptive, adaptive_2d};
use crate::selection::CandidateSet;

use super::synthetic::SyntheticDensity;

/// Absolute tolerance of the inner bias integrals.
pub const BIAS_TOLERANCE: f64 = 1e-7;

/// Anisotropic smoothness `(β, p, L)` paired with a structure `P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessSpec {
    pub beta: Vec<f64>,
    /// `None` stands for `p_j = ∞`.
    pub p: Vec<Option<f64>>,
    pub l_const: Vec<f64>,
    pub partition: Partition,
}

impl SmoothnessSpec {
    /// Same `β_j` on every axis, `p = ∞`, unit `L`.
    pub fn isotropic(beta: f64, partition: Partition) -> Self {
        let d = partition.dim();
        Self { beta: vec![beta; d], p: vec![None; d], l_const: vec![1.0; d], partition }
    }
}

/// `γ_I(β, p) = (1 − Σ_{j∈I} 1/(β_j p_j)) / Σ_{j∈I} 1/β_j`.
pub fn block_smoothness(spec: &SmoothnessSpec, block: &[usize]) -> f64 {
    let inv_beta: f64 = block.iter().map(|&j| 1.0 / spec.beta[j]).sum();
    let inv_beta_p: f64 = block.iter().map(|&j| spec.p[j].map_or(0.0, |p| 1.0 / (spec.beta[j] * p))).sum();
    (1.0 - inv_beta_p) / inv_beta
}

/// `Υ(β, p, P) = min_{I∈P} γ_I(β, p)`.
pub fn upsilon(spec: &SmoothnessSpec) -> Result<f64> {
    if spec.beta.len() != spec.partition.dim() || spec.p.len() != spec.partition.dim() {
        return Err(Error::DimensionMismatch { left: spec.beta.len(), right: spec.partition.dim() });
    }
    if spec.beta.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidArgument("smoothness indices must be positive".into()));
    }
    Ok(spec.partition.blocks().iter().map(|b| block_smoothness(spec, b)).fold(f64::INFINITY, f64::min))
}

/// Exponent `Υ/(2Υ + 1)` of the rate `(ln n / n)^{Υ/(2Υ+1)}`.
pub fn rate_exponent(upsilon: f64) -> f64 {
    upsilon / (2.0 * upsilon + 1.0)
}

/// Nodes spanning the density's support box on the axes of `block`.
pub fn bias_nodes(f: &SyntheticDensity, block: &[usize], per_axis: usize) -> Vec<Vec<f64>> {
    let bx = f.support_box();
    block
        .iter()
        .map(|&j| {
            let (lo, hi) = bx[j];
            (0..per_axis).map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1).max(1) as f64).collect()
        })
        .collect()
}

/// `(K_{h_I} ∗ f_I)(x) − f_I(x)` at one point, by adaptive Gauss–Legendre.
pub fn smoothing_error(f: &SyntheticDensity, kernel: &Kernel, block: &[usize], h: &[f64], x: &[f64]) -> Result<f64> {
    let fx = f.eval_marginal(block, x);
    let smoothed = match block.len() {
        1 => adaptive(-0.5, 0.5, BIAS_TOLERANCE, |v| kernel.eval(v) * f.eval_marginal(block, &[x[0] + h[0] * v]))?,
        2 => adaptive_2d((-0.5, 0.5), (-0.5, 0.5), BIAS_TOLERANCE, |u, v| {
            kernel.eval(u) * kernel.eval(v) * f.eval_marginal(block, &[x[0] + h[0] * u, x[1] + h[1] * v])
        })?,
        k => {
            return Err(Error::InvalidArgument(format!("bias quadrature supports blocks of size ≤ 2, got {k}")));
        }
    };
    Ok(smoothed - fx)
}

/// `b_{h_I} = sup_x |∫ K_{h_I}(t − x)[f_I(t) − f_I(x)] dt|`, with the sup over a
/// tensor grid of `per_axis` nodes per coordinate.
pub fn true_bias(f: &SyntheticDensity, kernel: &Kernel, block: &[usize], h: &[f64], per_axis: usize) -> Result<f64> {
    let axes = bias_nodes(f, block, per_axis);
    let mut best = 0.0f64;
    let mut idx = vec![0usize; block.len()];
    let mut x = vec![0.0; block.len()];
    'outer: loop {
        for (k, &i) in idx.iter().enumerate() {
            x[k] = axes[k][i];
        }
        best = best.max(smoothing_error(f, kernel, block, h, &x)?.abs());
        let mut t = block.len();
        loop {
            if t == 0 {
                break 'outer;
            }
            t -= 1;
            idx[t] += 1;
            if idx[t] < per_axis {
                break;
            }
            idx[t] = 0;
        }
    }
    Ok(best)
}

/// One row of the oracle table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub h: BandwidthVector,
    pub partition: Partition,
    pub big_b: f64,
    pub stochastic: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRisk {
    pub value: f64,
    pub h: BandwidthVector,
    pub partition: Partition,
    pub table: Vec<OracleEntry>,
}

/// `𝔯_n(f) = min_{h, P ∈ 𝔓(f)} B(h, P) + √(ln n / (n V(h, P)))` over the candidate set,
/// with `B(h, P) = max_{P′} max_{I ∈ P⋄P′} b_{h_I}`.
pub fn oracle_risk(
    f: &SyntheticDensity,
    kernel: &Kernel,
    cands: &CandidateSet,
    n: usize,
    per_axis: usize,
) -> Result<OracleRisk> {
    let admissible = f.factorizing(&cands.partitions);
    let nf = n as f64;
    let mut cache: HashMap<(Vec<usize>, Vec<u64>), f64> = HashMap::new();
    let mut table = Vec::new();
    for h in &cands.bandwidths {
        for p in &admissible {
            let mut big_b = 0.0f64;
            for other in cands.partitions.members() {
                for block in diamond(p, other)?.blocks() {
                    let hb = h.restrict(block);
                    let key = (block.clone(), hb.iter().map(|v| v.to_bits()).collect());
                    let b = match cache.get(&key) {
                        Some(&b) => b,
                        None => {
                            let b = true_bias(f, kernel, block, &hb, per_axis)?;
                            cache.insert(key, b);
                            b
                        }
                    };
                    big_b = big_b.max(b);
                }
            }
            let stochastic = (nf.ln() / (nf * h.partition_volume(p))).sqrt();
            table.push(OracleEntry {
                h: h.clone(),
                partition: p.clone(),
                big_b,
                stochastic,
                value: big_b + stochastic,
            });
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::InvalidArgument("no factorizing partition in the family".into()))?;
    Ok(OracleRisk { value: best.value, h: best.h.clone(), partition: best.partition.clone(), table: table.clone() })
}
