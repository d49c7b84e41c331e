//! Monte Carlo risk, rate fitting and structure recovery.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantsContext;
use crate::error::{Error, Result};
use crate::estimators::{sup_norm_error, BandwidthVector};
use crate::kernels::{ConvolutionCache, Kernel, DEFAULT_PROFILE_NODES};
use crate::par;
use crate::partitions::{Partition, PartitionFamily};
use crate::selection::{select, SelectionOptions};

use super::oracle::{rate_exponent, upsilon, SmoothnessSpec};
use super::synthetic::SyntheticDensity;

/// Smallest replicate count accepted by [`mc_risk`].
pub const MIN_REPLICATES: usize = 8;

/// Everything a replicate needs besides the sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kernel: Kernel,
    pub constants: ConstantsContext,
    pub family: PartitionFamily,
    pub options: SelectionOptions,
    pub profile_nodes: usize,
}

impl PipelineConfig {
    /// Calibrated pipeline with the given multiplier and `a*` floor.
    pub fn calibrated(kernel: Kernel, family: PartitionFamily, kappa: f64, a_star_floor: f64) -> Self {
        let constants = ConstantsContext::calibrated(family.dim(), &kernel, kappa, a_star_floor);
        Self { kernel, constants, family, options: SelectionOptions::default(), profile_nodes: DEFAULT_PROFILE_NODES }
    }

    pub fn with_options(mut self, options: SelectionOptions) -> Self {
        self.options = options;
        self
    }

    pub fn convolution_cache(&self) -> ConvolutionCache {
        ConvolutionCache::new(Arc::new(self.kernel.clone()), self.profile_nodes)
    }
}

/// Replicate generator: stream `replicate` of the ChaCha8 generator seeded by `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub h_hat: BandwidthVector,
    pub p_hat: Partition,
    pub criterion: f64,
    pub lambda: f64,
    pub f_bar_n: f64,
    /// `max_node |f̂_{ĥ,P̂} − f|`.
    pub error: f64,
    /// Smallest grid error over all candidates.
    pub best_error: f64,
    pub best_h: BandwidthVector,
    pub best_partition: Partition,
    pub ratio: f64,
}

/// One replicate: sample, select, score the selection and every candidate.
pub fn run_replicate(
    f: &SyntheticDensity,
    config: &PipelineConfig,
    conv: &ConvolutionCache,
    n: usize,
    seed: u64,
    replicate: usize,
) -> Result<ReplicateRecord> {
    let mut rng = replicate_rng(seed, replicate as u64);
    let data = f.sample(&mut rng, n)?;
    let sel = select(&data, conv, &config.constants, &config.family, &config.options)?;
    let r = &sel.result;
    let truth = |x: &[f64]| f.eval(x);
    let pairs = sel.candidates.pairs();
    let errors = par::try_map_range(pairs.len(), |i| {
        let est = sel.fitter.plain(&pairs[i].0, &pairs[i].1)?;
        Ok::<_, Error>(sup_norm_error(&est, truth))
    })?;
    let chosen = pairs
        .iter()
        .position(|(h, p)| *h == r.h_hat && *p == r.p_hat)
        .expect("selection comes from the candidate set");
    let (best, &best_error) =
        errors.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("candidate set is nonempty");
    Ok(ReplicateRecord {
        replicate,
        h_hat: r.h_hat.clone(),
        p_hat: r.p_hat.clone(),
        criterion: r.criterion,
        lambda: r.lambda,
        f_bar_n: r.f_bar_n,
        error: errors[chosen],
        best_error,
        best_h: pairs[best].0.clone(),
        best_partition: pairs[best].1.clone(),
        ratio: errors[chosen] / best_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub density: String,
    pub n: usize,
    pub reps: usize,
    pub q: f64,
    pub seed: u64,
    /// `(mean error^q)^{1/q}`.
    pub risk: f64,
    /// Delta-method standard error of `risk`.
    pub stderr: f64,
    pub median_ratio: f64,
    pub records: Vec<ReplicateRecord>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// `(mean e^q)^{1/q}` and its delta-method standard error.
pub fn risk_from_errors(errors: &[f64], q: f64) -> (f64, f64) {
    let m = errors.len() as f64;
    let powers: Vec<f64> = errors.iter().map(|e| e.powf(q)).collect();
    let mean = powers.iter().sum::<f64>() / m;
    let var = if errors.len() > 1 {
        powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let se_mean = (var / m).sqrt();
    let risk = mean.powf(1.0 / q);
    let stderr = if mean > 0.0 { risk / (q * mean) * se_mean } else { 0.0 };
    (risk, stderr)
}

/// Monte Carlo sup-norm risk of the selected estimator, replicates in parallel.
pub fn mc_risk_with(
    f: &SyntheticDensity,
    config: &PipelineConfig,
    conv: &ConvolutionCache,
    n: usize,
    reps: usize,
    q: f64,
    seed: u64,
) -> Result<RiskReport> {
    if reps < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_REPLICATES} replicates, got {reps}")));
    }
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("risk exponent q = {q} must be ≥ 1")));
    }
    if f.dim() != config.family.dim() {
        return Err(Error::DimensionMismatch { left: f.dim(), right: config.family.dim() });
    }
    let records = par::try_map_range(reps, |r| run_replicate(f, config, conv, n, seed, r))?;
    let errors: Vec<f64> = records.iter().map(|r| r.error).collect();
    let (risk, stderr) = risk_from_errors(&errors, q);
    let mut ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    Ok(RiskReport {
        density: f.name.clone(),
        n,
        reps,
        q,
        seed,
        risk,
        stderr,
        median_ratio: median(&mut ratios),
        records,
    })
}

pub fn mc_risk(
    f: &SyntheticDensity,
    config: &PipelineConfig,
    n: usize,
    reps: usize,
    q: f64,
    seed: u64,
) -> Result<RiskReport> {
    mc_risk_with(f, config, &config.convolution_cache(), n, reps, q, seed)
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("least squares needs two or more paired points".into()));
    }
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("least squares needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    Ok(LineFit { slope, intercept, residuals })
}

/// Fit of `ln risk` on `ln(n / ln n)`.
pub fn fit_rate(ns: &[usize], risks: &[f64]) -> Result<LineFit> {
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64 / (n as f64).ln()).ln()).collect();
    let y: Vec<f64> = risks.iter().map(|r| r.ln()).collect();
    ols(&x, &y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub density: String,
    pub upsilon: f64,
    pub theoretical_slope: f64,
    pub fit: LineFit,
    pub points: Vec<RiskReport>,
}

/// Risks over `n_list` and the fitted log-log slope.
///
/// Every sample size draws from the same replicate streams.
pub fn rate_experiment(
    f: &SyntheticDensity,
    spec: &SmoothnessSpec,
    config: &PipelineConfig,
    n_list: &[usize],
    reps: usize,
    q: f64,
    seed: u64,
) -> Result<RateReport> {
    let ups = upsilon(spec)?;
    if !(ups > 0.0) {
        return Err(Error::InvalidArgument(format!("effective smoothness {ups} must be positive")));
    }
    let (lo, hi) = (n_list.iter().min().copied().unwrap_or(0), n_list.iter().max().copied().unwrap_or(0));
    if n_list.len() < 4 || hi < 10 * lo {
        return Err(Error::InvalidArgument("sample sizes must span a decade with at least four points".into()));
    }
    let conv = config.convolution_cache();
    let points =
        n_list.iter().map(|&n| mc_risk_with(f, config, &conv, n, reps, q, seed)).collect::<Result<Vec<_>>>()?;
    let risks: Vec<f64> = points.iter().map(|p| p.risk).collect();
    let fit = fit_rate(n_list, &risks)?;
    Ok(RateReport { density: f.name.clone(), upsilon: ups, theoretical_slope: -rate_exponent(ups), fit, points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub density: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub true_partition: Partition,
    /// Selected partition (display form) → count.
    pub frequencies: BTreeMap<String, usize>,
    pub records: Vec<ReplicateRecord>,
}

/// Empirical distribution of `P̂` over replicates.
pub fn structure_recovery(
    f: &SyntheticDensity,
    config: &PipelineConfig,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<StructureReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let conv = config.convolution_cache();
    let records = par::try_map_range(reps, |r| run_replicate(f, config, &conv, n, seed, r))?;
    let mut frequencies = BTreeMap::new();
    for r in &records {
        *frequencies.entry(r.p_hat.to_string()).or_insert(0) += 1;
    }
    Ok(StructureReport {
        density: f.name.clone(),
        n,
        reps,
        seed,
        true_partition: f.true_partition(),
        frequencies,
        records,
    })
}
