//! Joint selection of the bandwidth vector and the independence structure.
//!
//! For every candidate `(h, P)` the statistic
//!
//! ```text
//! Δ̂(h, P) = max_{(η, P′)} [ ‖f̂_{(h,P),(η,P′)} − f̂_{η,P′}‖_∞ − λ·Â(η, P′) ]_+
//! ```
//!
//! compares the candidate, smoothed by every other candidate, against that
//! other candidate. The selected pair minimises `Δ̂ + λ·Â`.
//!
//! The pairwise estimator is symmetric in its two arguments, so each unordered
//! pair of candidates is fitted once and yields both directed comparisons.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{self, ConstantsContext, Mode, Threshold};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{a_hat, sup_norm_diff, BandwidthVector, FittedEstimator, Fitter};
use crate::grid::EvaluationGrid;
use crate::kernels::ConvolutionCache;
use crate::par;
use crate::partitions::{Partition, PartitionFamily};

/// Upper limit on the dyadic level when none is configured.
pub const MAX_DYADIC_LEVEL: u32 = 30;

/// Finite candidate grid `H_n × 𝔓̄`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub n: usize,
    pub a_star: f64,
    pub max_level: u32,
    pub bandwidths: Vec<BandwidthVector>,
    pub partitions: PartitionFamily,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.bandwidths.len() * self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidths.is_empty() || self.partitions.is_empty()
    }

    /// All `(h, P)`, bandwidth-major.
    pub fn pairs(&self) -> Vec<(BandwidthVector, Partition)> {
        self.bandwidths
            .iter()
            .flat_map(|h| self.partitions.members().iter().map(move |p| (h.clone(), p.clone())))
            .collect()
    }

    /// Largest single bandwidth over the grid.
    pub fn max_bandwidth(&self) -> f64 {
        self.bandwidths.iter().map(BandwidthVector::max).fold(0.0, f64::max)
    }

    /// Smallest single bandwidth over the grid.
    pub fn min_bandwidth(&self) -> f64 {
        self.bandwidths.iter().map(BandwidthVector::min).fold(f64::INFINITY, f64::min)
    }
}

/// `true` iff `n V_h ≥ ln(n) / a*`.
pub fn admissible(n: usize, a_star: f64, h: &BandwidthVector) -> bool {
    let nf = n as f64;
    nf * h.volume() >= nf.ln() / a_star
}

/// Dyadic bandwidths `h_j = 2^{-k_j}`, `k_j ≤ max_level`, filtered by the `H_n` rule.
///
/// Without `max_level` the level cap is the largest `k` for which `2^{-k}` is
/// admissible on a single axis.
pub fn build_candidates(
    n: usize,
    d: usize,
    a_star: f64,
    family: &PartitionFamily,
    max_level: Option<u32>,
) -> Result<CandidateSet> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need n ≥ 3 observations, got {n}")));
    }
    if family.dim() != d {
        return Err(Error::DimensionMismatch { left: d, right: family.dim() });
    }
    if !(a_star > 0.0) {
        return Err(Error::InvalidArgument(format!("a* = {a_star} must be positive")));
    }
    let max_level = max_level.unwrap_or_else(|| {
        let nf = n as f64;
        let bound = (nf * a_star / nf.ln()).log2().floor();
        if bound.is_finite() && bound >= 0.0 {
            (bound as u32).min(MAX_DYADIC_LEVEL)
        } else {
            0
        }
    });
    let mut bandwidths = Vec::new();
    let mut levels = vec![0u32; d];
    loop {
        let h = BandwidthVector::dyadic(&levels);
        if admissible(n, a_star, &h) {
            bandwidths.push(h);
        }
        let mut j = d;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            levels[j] += 1;
            if levels[j] <= max_level {
                break;
            }
            levels[j] = 0;
        }
        if levels.iter().all(|&k| k == 0) {
            break;
        }
    }
    if bandwidths.is_empty() {
        return Err(Error::EmptyCandidates { a_star });
    }
    Ok(CandidateSet { n, a_star, max_level, bandwidths, partitions: family.clone() })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    /// Cap on the dyadic level per axis.
    pub max_level: Option<u32>,
    /// Grid spacing; defaults to a quarter of the smallest candidate bandwidth.
    pub grid_resolution: Option<f64>,
    /// Compare each candidate against at most this many others (a deterministic
    /// stride through the list). Departs from the full supremum; off by default.
    pub budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionEntry {
    pub h: BandwidthVector,
    pub partition: Partition,
    pub delta_hat: f64,
    pub a_hat: f64,
    /// `λ·Â(h, P)`.
    pub penalty: f64,
    pub criterion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub resolution: f64,
    pub inflation: f64,
    pub nodes_per_axis: Vec<usize>,
    pub origin: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub h_hat: BandwidthVector,
    pub p_hat: Partition,
    pub criterion: f64,
    pub mode: Mode,
    pub lambda: f64,
    pub a_star: f64,
    pub big_lambda: Option<f64>,
    pub f_n: f64,
    pub f_bar_n: f64,
    pub n: usize,
    pub d: usize,
    pub grid: GridInfo,
    pub budget: Option<usize>,
    pub table: Vec<CriterionEntry>,
}

impl SelectionResult {
    pub fn min_criterion(&self) -> f64 {
        self.table.iter().map(|e| e.criterion).fold(f64::INFINITY, f64::min)
    }
}

/// Grid used by [`select`]: data hull inflated by the largest bandwidth, which
/// covers every convolution kernel `K_h ∗ K_η` of the candidate set.
pub fn selection_grid(data: &Dataset, cands: &CandidateSet, resolution: Option<f64>) -> Result<EvaluationGrid> {
    let inflation = cands.max_bandwidth();
    let res = resolution.unwrap_or(cands.min_bandwidth() / 4.0);
    if !(res > 0.0) {
        return Err(Error::InvalidArgument(format!("grid resolution {res} must be positive")));
    }
    EvaluationGrid::covering(data, inflation, res)
}

/// Ordering used for the argmin: criterion, then larger `V(h,P)`, then fewer
/// blocks, then lexicographic `h`, then position in the family.
fn tie_break(a: (&CriterionEntry, usize), b: (&CriterionEntry, usize)) -> Ordering {
    let (ea, ia) = a;
    let (eb, ib) = b;
    ea.criterion
        .total_cmp(&eb.criterion)
        .then_with(|| eb.h.partition_volume(&eb.partition).total_cmp(&ea.h.partition_volume(&ea.partition)))
        .then_with(|| ea.partition.num_blocks().cmp(&eb.partition.num_blocks()))
        .then_with(|| ea.h.as_slice().partial_cmp(eb.h.as_slice()).unwrap_or(Ordering::Equal))
        .then_with(|| ia.cmp(&ib))
}

/// Index of the winning entry under the documented tie-break.
pub fn argmin(table: &[CriterionEntry]) -> Option<usize> {
    (0..table.len()).min_by(|&a, &b| tie_break((&table[a], a), (&table[b], b)))
}

/// Indices of the `η`-candidates each candidate is compared against.
fn comparison_set(len: usize, budget: Option<usize>) -> Vec<bool> {
    match budget {
        Some(b) if b > 0 && b < len => {
            let stride = len.div_ceil(b);
            (0..len).map(|j| j % stride == 0).collect()
        }
        _ => vec![true; len],
    }
}

/// `Δ̂` for every candidate given the plain estimators and the penalties.
pub fn delta_hats(
    fitter: &Fitter<'_>,
    cands: &[(BandwidthVector, Partition)],
    plain: &[FittedEstimator],
    penalties: &[f64],
    budget: Option<usize>,
) -> Result<Vec<f64>> {
    let m = cands.len();
    let compare = comparison_set(m, budget);
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).filter(|&(i, j)| compare[i] || compare[j]).collect();
    // (i, j) → (‖E − f̂_j‖, ‖E − f̂_i‖) with E the symmetric pair estimator.
    let sups = par::try_map_range(pairs.len(), |k| {
        let (i, j) = pairs[k];
        let (hi, pi) = &cands[i];
        let (hj, pj) = &cands[j];
        let e = fitter.pair(hi, pi, hj, pj)?;
        let to_j = sup_norm_diff(&e, &plain[j])?;
        let to_i = if i == j { to_j } else { sup_norm_diff(&e, &plain[i])? };
        Ok::<_, Error>((to_j, to_i))
    })?;
    let mut delta = vec![0.0f64; m];
    for (&(i, j), &(to_j, to_i)) in pairs.iter().zip(&sups) {
        if compare[j] {
            delta[i] = delta[i].max(to_j - penalties[j]);
        }
        if compare[i] {
            delta[j] = delta[j].max(to_i - penalties[i]);
        }
    }
    Ok(delta)
}

/// Outcome of [`select`] together with the fitted state, for callers that need
/// further estimators on the same grid.
pub struct Selection<'a> {
    pub result: SelectionResult,
    pub candidates: CandidateSet,
    pub fitter: Fitter<'a>,
    pub threshold: Threshold,
}

/// Runs the full selection procedure.
pub fn select<'a>(
    data: &'a Dataset,
    conv: &'a ConvolutionCache,
    ctx: &ConstantsContext,
    family: &PartitionFamily,
    options: &SelectionOptions,
) -> Result<Selection<'a>> {
    ctx.validate()?;
    if data.d() != ctx.d {
        return Err(Error::DimensionMismatch { left: data.d(), right: ctx.d });
    }
    let n = data.n();
    let a_star = constants::a_star(ctx)?;
    let cands = build_candidates(n, data.d(), a_star, family, options.max_level)?;
    let grid = Arc::new(selection_grid(data, &cands, options.grid_resolution)?);
    let fitter = Fitter::new(data, Arc::clone(&grid), conv)?;

    let f_n = fitter.f_n(&cands.bandwidths)?;
    let f_bar_n = 1f64.max(2.0 * f_n);
    let threshold = constants::lambda_and_threshold(ctx, f_bar_n)?;
    let lambda = threshold.lambda;

    let list = cands.pairs();
    let a_hats: Vec<f64> = list.iter().map(|(h, p)| a_hat(f_bar_n, h, p, n)).collect();
    let penalties: Vec<f64> = a_hats.iter().map(|a| lambda * a).collect();
    let plain = par::try_map_range(list.len(), |i| fitter.plain(&list[i].0, &list[i].1))?;
    let delta = delta_hats(&fitter, &list, &plain, &penalties, options.budget)?;

    let table: Vec<CriterionEntry> = list
        .iter()
        .enumerate()
        .map(|(i, (h, p))| CriterionEntry {
            h: h.clone(),
            partition: p.clone(),
            delta_hat: delta[i],
            a_hat: a_hats[i],
            penalty: penalties[i],
            criterion: delta[i] + penalties[i],
        })
        .collect();
    let best = argmin(&table).expect("candidate set is nonempty");
    let result = SelectionResult {
        h_hat: table[best].h.clone(),
        p_hat: table[best].partition.clone(),
        criterion: table[best].criterion,
        mode: threshold.mode,
        lambda,
        a_star: threshold.a_star,
        big_lambda: threshold.big_lambda,
        f_n,
        f_bar_n,
        n,
        d: data.d(),
        grid: GridInfo {
            resolution: grid.axis(0).step,
            inflation: cands.max_bandwidth(),
            nodes_per_axis: grid.axes().iter().map(|a| a.len).collect(),
            origin: grid.axes().iter().map(|a| a.origin).collect(),
        },
        budget: options.budget,
        table,
    };
    Ok(Selection { result, candidates: cands, fitter, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::enumerate_all;

    #[test]
    fn candidates_toy() {
        let fam = enumerate_all(1).unwrap();
        let c = build_candidates(20, 1, 1.0, &fam, None).unwrap();
        let hs: Vec<f64> = c.bandwidths.iter().map(|h| h.as_slice()[0]).collect();
        assert_eq!(hs, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn candidates_brute_force_2d() {
        let fam = enumerate_all(2).unwrap();
        for n in [10usize, 50, 200, 1000, 5000] {
            let c = build_candidates(n, 2, 1.0, &fam, Some(8)).unwrap();
            let mut want = 0;
            for k1 in 0..=8 {
                for k2 in 0..=8 {
                    let v = 0.5f64.powi(k1 + k2);
                    if n as f64 * v >= (n as f64).ln() {
                        want += 1;
                    }
                }
            }
            assert_eq!(c.bandwidths.len(), want, "n={n}");
            assert_eq!(c.len(), 2 * want);
        }
    }

    #[test]
    fn candidates_shrink_with_a_star() {
        let fam = enumerate_all(2).unwrap();
        let mut prev = usize::MAX;
        for a in [4.0, 2.0, 1.0, 0.5, 0.25] {
            let c = build_candidates(500, 2, a, &fam, Some(10)).unwrap();
            assert!(c.bandwidths.len() <= prev);
            prev = c.bandwidths.len();
        }
    }

    #[test]
    fn empty_candidates_error() {
        let fam = enumerate_all(1).unwrap();
        let err = build_candidates(100, 1, 1e-6, &fam, None).unwrap_err();
        assert!(matches!(err, Error::EmptyCandidates { .. }));
        assert!(err.to_string().contains("calibrated"));
        assert!(build_candidates(2, 1, 1.0, &fam, None).is_err());
    }

    #[test]
    fn tie_break_prefers_larger_volume() {
        let e = |h: Vec<f64>, p: Partition, c: f64| CriterionEntry {
            h: BandwidthVector::new(h).unwrap(),
            partition: p,
            delta_hat: 0.0,
            a_hat: 0.0,
            penalty: c,
            criterion: c,
        };
        let t = vec![
            e(vec![0.25, 0.5], Partition::trivial(2), 1.0),
            e(vec![0.5, 0.5], Partition::trivial(2), 1.0),
            e(vec![0.5, 0.5], Partition::singletons(2), 1.0),
            e(vec![1.0, 1.0], Partition::trivial(2), 2.0),
        ];
        // V(h, singletons) = 0.5 beats V = 0.25 for the trivial partition.
        assert_eq!(argmin(&t), Some(2));
        let t2 = vec![t[0].clone(), t[1].clone()];
        assert_eq!(argmin(&t2), Some(1));
    }

    #[test]
    fn budget_stride() {
        assert_eq!(comparison_set(5, None), vec![true; 5]);
        assert_eq!(comparison_set(6, Some(3)), vec![true, false, true, false, true, false]);
    }
}
