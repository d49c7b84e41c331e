//! Kernel estimators tabulated on an [`EvaluationGrid`].
//!
//! Every estimator in the family is a product of block tables: `f̂_{h,P}` has
//! one table per block `I ∈ P` holding `f̃_{h_I}` on the block's sub-grid, and
//! the pairwise estimator `f̂_{(h,P),(η,P′)}` has one table per block of `P ⋄ P′`
//! built with the convolution kernel `∏_j K_{h_j} ∗ K_{η_j}`. Products are
//! evaluated lazily, node by node, when taking sup-norms.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grid::EvaluationGrid;
use crate::kernels::{ConvolutionCache, ConvolutionProfile, Kernel};
use crate::partitions::{diamond, Partition};

/// Largest block table that will be allocated.
pub const MAX_TABLE_NODES: usize = 50_000_000;

/// Bandwidths `h ∈ (0, 1]^d`.
#[derive(Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandwidthVector(Vec<f64>);

impl BandwidthVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidBandwidth("empty bandwidth vector".into()));
        }
        if let Some(bad) = h.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::InvalidBandwidth(format!("bandwidth {bad} outside (0, 1]")));
        }
        Ok(Self(h))
    }

    /// Dyadic vector `h_j = 2^{-levels[j]}`.
    pub fn dyadic(levels: &[u32]) -> Self {
        Self(levels.iter().map(|&k| 0.5f64.powi(k as i32)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn restrict(&self, block: &[usize]) -> Vec<f64> {
        block.iter().map(|&j| self.0[j]).collect()
    }

    /// `V_{h_I} = ∏_{j∈I} h_j`.
    pub fn block_volume(&self, block: &[usize]) -> f64 {
        block.iter().map(|&j| self.0[j]).product()
    }

    /// `V_h`.
    pub fn volume(&self) -> f64 {
        self.0.iter().product()
    }

    /// `V(h, P) = min_{I∈P} V_{h_I}`.
    pub fn partition_volume(&self, p: &Partition) -> f64 {
        p.blocks().iter().map(|b| self.block_volume(b)).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<f64>> for BandwidthVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BandwidthVector> for Vec<f64> {
    fn from(h: BandwidthVector) -> Self {
        h.0
    }
}

impl std::fmt::Debug for BandwidthVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// `Â_n(h, P) = √(f̄_n ln n / (n V(h, P)))`.
pub fn a_hat(f_bar_n: f64, h: &BandwidthVector, p: &Partition, n: usize) -> f64 {
    let nf = n as f64;
    (f_bar_n * nf.ln() / (nf * h.partition_volume(p))).sqrt()
}

/// Estimator values on the sub-grid of one block, row-major in block order.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTable {
    block: Vec<usize>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl BlockTable {
    pub fn block(&self) -> &[usize] {
        &self.block
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a block multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        let mut off = 0;
        for (k, len) in index.iter().zip(&self.shape) {
            off = off * len + k;
        }
        self.values[off]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Riemann sum over the block sub-grid, with Neumaier compensation.
    pub fn riemann_mass(&self, grid: &EvaluationGrid) -> f64 {
        let cell: f64 = self.block.iter().map(|&j| grid.axis(j).step).product();
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in &self.values {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        (sum + comp) * cell
    }
}

/// A univariate factor of a product kernel.
trait AxisFactor: Sync {
    fn radius(&self) -> f64;
    fn eval(&self, u: f64) -> f64;
}

struct ScaledKernel<'a> {
    kernel: &'a Kernel,
    h: f64,
    absolute: bool,
}

impl AxisFactor for ScaledKernel<'_> {
    fn radius(&self) -> f64 {
        0.5 * self.h
    }

    #[inline]
    fn eval(&self, u: f64) -> f64 {
        let v = self.kernel.eval_scaled(u, self.h);
        if self.absolute {
            v.abs()
        } else {
            v
        }
    }
}

impl AxisFactor for ConvolutionProfile {
    fn radius(&self) -> f64 {
        self.half_support()
    }

    #[inline]
    fn eval(&self, u: f64) -> f64 {
        ConvolutionProfile::eval(self, u)
    }
}

/// `n^{-1} Σ_i ∏_j factor_j(X_{ij} − x_j)` at every node of the block sub-grid.
///
/// Each sample only visits the nodes inside its kernel window. Per node the
/// contributions are added in sample order, so the result equals the naive
/// double loop bit for bit.
fn accumulate(
    data: &Dataset,
    block: &[usize],
    grid: &EvaluationGrid,
    factors: &[&dyn AxisFactor],
) -> Result<BlockTable> {
    let shape = grid.block_shape(block);
    let total: usize = shape.iter().product();
    if total > MAX_TABLE_NODES {
        return Err(Error::TableTooLarge { nodes: total, limit: MAX_TABLE_NODES });
    }
    let radius: Vec<f64> = factors.iter().map(|f| f.radius()).collect();
    grid.check_covers(data, block, &radius)?;
    let m = block.len();
    let mut strides = vec![1usize; m];
    for t in (0..m.saturating_sub(1)).rev() {
        strides[t] = strides[t + 1] * shape[t + 1];
    }
    let mut sums = vec![0.0f64; total];
    let mut windows = vec![(0usize, 0usize); m];
    let mut vals: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut idx = vec![0usize; m];
    let mut prefix = vec![1.0f64; m + 1];
    'samples: for i in 0..data.n() {
        for t in 0..m {
            let ax = grid.axis(block[t]);
            let x = data.get(i, block[t]);
            let (lo, hi) = ax.window(x, radius[t]);
            if lo >= hi {
                continue 'samples;
            }
            windows[t] = (lo, hi);
            vals[t].clear();
            vals[t].extend((lo..hi).map(|k| factors[t].eval(x - ax.node(k))));
        }
        // Odometer over the window box minus its last axis; prefix[t+1] = prefix[t] · vals[t][idx[t]].
        // The last axis is contiguous and handled as a slice.
        let last = m - 1;
        for t in 0..last {
            idx[t] = 0;
            prefix[t + 1] = prefix[t] * vals[t][0];
        }
        loop {
            let mut off = windows[last].0;
            for t in 0..last {
                off += (windows[t].0 + idx[t]) * strides[t];
            }
            let p = prefix[last];
            let row = &mut sums[off..off + vals[last].len()];
            for (acc, v) in row.iter_mut().zip(&vals[last]) {
                *acc += p * v;
            }
            let mut t = last;
            loop {
                if t == 0 {
                    continue 'samples;
                }
                t -= 1;
                idx[t] += 1;
                if idx[t] < vals[t].len() {
                    break;
                }
                idx[t] = 0;
            }
            for s in t..last {
                prefix[s + 1] = prefix[s] * vals[s][idx[s]];
            }
        }
    }
    let nf = data.n() as f64;
    for v in &mut sums {
        *v /= nf;
    }
    Ok(BlockTable { block: block.to_vec(), shape, values: sums })
}

/// `f̃_{h_I}` on the sub-grid of `block`. With `absolute`, averages `|K_{h_I}|` instead.
pub fn fit_marginal_with(
    data: &Dataset,
    kernel: &Kernel,
    block: &[usize],
    h_block: &[f64],
    grid: &EvaluationGrid,
    absolute: bool,
) -> Result<BlockTable> {
    if block.is_empty() || block.len() != h_block.len() {
        return Err(Error::InvalidArgument("block and bandwidths must be nonempty and aligned".into()));
    }
    if let Some(bad) = h_block.iter().find(|&&h| !(h > 0.0 && h <= 1.0)) {
        return Err(Error::InvalidBandwidth(format!("bandwidth {bad} outside (0, 1]")));
    }
    let factors: Vec<ScaledKernel> =
        h_block.iter().map(|&h| ScaledKernel { kernel, h, absolute }).collect();
    let dyn_factors: Vec<&dyn AxisFactor> = factors.iter().map(|f| f as &dyn AxisFactor).collect();
    accumulate(data, block, grid, &dyn_factors)
}

/// `f̃_{h_I}(x_I) = n^{-1} Σ_i K_{h_I}(X_{I,i} − x_I)` on the block sub-grid.
pub fn fit_marginal(
    data: &Dataset,
    kernel: &Kernel,
    block: &[usize],
    h_block: &[f64],
    grid: &EvaluationGrid,
) -> Result<BlockTable> {
    fit_marginal_with(data, kernel, block, h_block, grid, false)
}

/// `f̃_{h_I, η_I}`: the block estimator with kernel `∏_{j∈I} K_{h_j} ∗ K_{η_j}`.
pub fn fit_convolved_block(
    data: &Dataset,
    conv: &ConvolutionCache,
    block: &[usize],
    h_block: &[f64],
    eta_block: &[f64],
    grid: &EvaluationGrid,
) -> Result<BlockTable> {
    let profiles = h_block
        .iter()
        .zip(eta_block)
        .map(|(&h, &e)| conv.get(h, e))
        .collect::<Result<Vec<_>>>()?;
    let dyn_factors: Vec<&dyn AxisFactor> = profiles.iter().map(|p| p.as_ref() as &dyn AxisFactor).collect();
    accumulate(data, block, grid, &dyn_factors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Plain { h: BandwidthVector, partition: Partition, kernel: String },
    Pair { h: BandwidthVector, partition: Partition, eta: BandwidthVector, other: Partition, kernel: String },
    Dense,
}

/// Product of block tables over a shared grid.
#[derive(Clone, Debug)]
pub struct FittedEstimator {
    grid: Arc<EvaluationGrid>,
    tables: Vec<Arc<BlockTable>>,
    provenance: Provenance,
}

impl FittedEstimator {
    pub fn new(grid: Arc<EvaluationGrid>, tables: Vec<Arc<BlockTable>>, provenance: Provenance) -> Result<Self> {
        let mut seen = vec![false; grid.dim()];
        for t in &tables {
            if t.shape != grid.block_shape(&t.block) {
                return Err(Error::GridMismatch);
            }
            for &j in &t.block {
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::InvalidArgument(format!("axis {} covered twice", j + 1)));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("block tables do not cover every axis".into()));
        }
        Ok(Self { grid, tables, provenance })
    }

    /// A single full-dimensional table holding `values` in row-major node order.
    pub fn from_dense(grid: Arc<EvaluationGrid>, values: Vec<f64>) -> Result<Self> {
        let block: Vec<usize> = (0..grid.dim()).collect();
        let shape = grid.block_shape(&block);
        if values.len() != grid.total_nodes() {
            return Err(Error::GridMismatch);
        }
        let table = Arc::new(BlockTable { block, shape, values });
        Self::new(grid, vec![table], Provenance::Dense)
    }

    pub fn grid(&self) -> &Arc<EvaluationGrid> {
        &self.grid
    }

    pub fn tables(&self) -> &[Arc<BlockTable>] {
        &self.tables
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Value at a full multi-index: the product of the block values, in table order.
    pub fn value_at(&self, index: &[usize]) -> f64 {
        let mut v = 1.0;
        let mut sub = Vec::with_capacity(index.len());
        for t in &self.tables {
            sub.clear();
            sub.extend(t.block.iter().map(|&j| index[j]));
            v *= t.get(&sub);
        }
        v
    }

    /// Upper bound on `sup |f̂|` from the block maxima.
    pub fn sup_abs_bound(&self) -> f64 {
        self.tables.iter().map(|t| t.sup_abs()).product()
    }

    /// Full tensor in row-major node order.
    pub fn materialize(&self) -> Result<Vec<f64>> {
        let total = self.grid.total_nodes();
        if total > MAX_TABLE_NODES {
            return Err(Error::TableTooLarge { nodes: total, limit: MAX_TABLE_NODES });
        }
        let mut out = Vec::with_capacity(total);
        NodeWalker::new(&self.grid, &[&self.tables]).for_each_row(|_, rows| out.extend_from_slice(&rows[0]));
        Ok(out)
    }

    /// Calls `f(node coordinates, value)` for every grid node, in row-major order.
    pub fn for_each_node(&self, mut f: impl FnMut(&[f64], f64)) {
        let d = self.grid.dim();
        let mut x = vec![0.0; d];
        let last = self.grid.axis(d - 1);
        NodeWalker::new(&self.grid, &[&self.tables]).for_each_row(|outer, rows| {
            for (j, &k) in outer.iter().enumerate() {
                x[j] = self.grid.axis(j).node(k);
            }
            for (k, &v) in rows[0].iter().enumerate() {
                x[d - 1] = last.node(k);
                f(&x, v);
            }
        });
    }
}

/// Row-major walk over the grid that evaluates several table products one
/// last-axis row at a time.
struct NodeWalker<'a> {
    lens: Vec<usize>,
    /// Per estimator, per table: (values, stride per global axis).
    layout: Vec<Vec<(&'a [f64], Vec<usize>)>>,
}

impl<'a> NodeWalker<'a> {
    fn new(grid: &EvaluationGrid, estimators: &[&'a [Arc<BlockTable>]]) -> Self {
        let d = grid.dim();
        let layout = estimators
            .iter()
            .map(|tables| {
                tables
                    .iter()
                    .map(|t| {
                        let mut strides = vec![0usize; d];
                        let mut s = 1;
                        for (pos, &j) in t.block.iter().enumerate().rev() {
                            strides[j] = s;
                            s *= t.shape[pos];
                        }
                        (t.values.as_slice(), strides)
                    })
                    .collect()
            })
            .collect();
        Self { lens: grid.axes().iter().map(|a| a.len).collect(), layout }
    }

    /// Calls `f(outer index, rows)` where `rows[e][k]` is estimator `e` at the node
    /// with leading indices `outer` and last index `k`. Each value is the product
    /// `1 · t₀ · t₁ · …` of its tables in order.
    fn for_each_row(&self, mut f: impl FnMut(&[usize], &[Vec<f64>])) {
        let d = self.lens.len();
        let inner = self.lens[d - 1];
        let outer: usize = self.lens[..d - 1].iter().product();
        let mut idx = vec![0usize; d - 1];
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; inner]; self.layout.len()];
        for _ in 0..outer {
            for (row, tables) in rows.iter_mut().zip(&self.layout) {
                row.fill(1.0);
                for (vals, strides) in tables {
                    let base: usize = idx.iter().zip(strides).map(|(k, s)| k * s).sum();
                    match strides[d - 1] {
                        0 => {
                            let c = vals[base];
                            row.iter_mut().for_each(|v| *v *= c);
                        }
                        1 => row.iter_mut().zip(&vals[base..base + inner]).for_each(|(v, t)| *v *= t),
                        st => row.iter_mut().enumerate().for_each(|(k, v)| *v *= vals[base + k * st]),
                    }
                }
            }
            f(&idx, &rows);
            for j in (0..d - 1).rev() {
                idx[j] += 1;
                if idx[j] < self.lens[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
}

/// `max_node |a − b|` over the shared grid, without materializing either tensor.
pub fn sup_norm_diff(a: &FittedEstimator, b: &FittedEstimator) -> Result<f64> {
    if !Arc::ptr_eq(&a.grid, &b.grid) && a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let mut best = 0.0f64;
    NodeWalker::new(&a.grid, &[&a.tables, &b.tables]).for_each_row(|_, rows| {
        best = rows[0].iter().zip(&rows[1]).fold(best, |m, (x, y)| m.max((x - y).abs()));
    });
    Ok(best)
}

/// `max_node |f̂(x) − f(x)|` against a function of the node coordinates.
pub fn sup_norm_error(a: &FittedEstimator, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut best = 0.0f64;
    a.for_each_node(|x, v| best = best.max((v - f(x)).abs()));
    best
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct TableKey {
    block: Vec<usize>,
    h: Vec<u64>,
    eta: Option<Vec<u64>>,
    absolute: bool,
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Data, grid and kernel shared by every estimator of one selection run, with
/// a read-mostly cache of block tables.
pub struct Fitter<'a> {
    data: &'a Dataset,
    grid: Arc<EvaluationGrid>,
    conv: &'a ConvolutionCache,
    cache: RwLock<HashMap<TableKey, Arc<BlockTable>>>,
}

impl<'a> Fitter<'a> {
    pub fn new(data: &'a Dataset, grid: Arc<EvaluationGrid>, conv: &'a ConvolutionCache) -> Result<Self> {
        if data.d() != grid.dim() {
            return Err(Error::DimensionMismatch { left: data.d(), right: grid.dim() });
        }
        Ok(Self { data, grid, conv, cache: RwLock::new(HashMap::new()) })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn grid(&self) -> &Arc<EvaluationGrid> {
        &self.grid
    }

    pub fn kernel(&self) -> &Kernel {
        self.conv.kernel()
    }

    fn cached(&self, key: TableKey, build: impl FnOnce() -> Result<BlockTable>) -> Result<Arc<BlockTable>> {
        if let Some(t) = self.cache.read().get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(build()?);
        Ok(Arc::clone(self.cache.write().entry(key).or_insert(table)))
    }

    /// Cached `f̃_{h_I}` (or its `|K|` counterpart).
    pub fn marginal(&self, block: &[usize], h_block: &[f64], absolute: bool) -> Result<Arc<BlockTable>> {
        // |K| = K for nonnegative kernels, so both share one table.
        let absolute = absolute && !self.kernel().is_nonnegative();
        let key = TableKey { block: block.to_vec(), h: bits(h_block), eta: None, absolute };
        self.cached(key, || fit_marginal_with(self.data, self.kernel(), block, h_block, &self.grid, absolute))
    }

    /// Convolution-kernel block table. One-dimensional blocks are cached under the
    /// unordered pair `{h_j, η_j}`; larger blocks are rebuilt on demand.
    pub fn convolved(&self, block: &[usize], h_block: &[f64], eta_block: &[f64]) -> Result<Arc<BlockTable>> {
        let build = || fit_convolved_block(self.data, self.conv, block, h_block, eta_block, &self.grid);
        if block.len() == 1 {
            let (a, b) = if h_block[0] <= eta_block[0] {
                (h_block[0], eta_block[0])
            } else {
                (eta_block[0], h_block[0])
            };
            let key = TableKey { block: block.to_vec(), h: vec![a.to_bits()], eta: Some(vec![b.to_bits()]), absolute: false };
            self.cached(key, build)
        } else {
            Ok(Arc::new(build()?))
        }
    }

    /// `f̂_{h,P} = ∏_{I∈P} f̃_{h_I}`.
    pub fn plain(&self, h: &BandwidthVector, p: &Partition) -> Result<FittedEstimator> {
        let tables = p
            .blocks()
            .iter()
            .map(|b| self.marginal(b, &h.restrict(b), false))
            .collect::<Result<Vec<_>>>()?;
        FittedEstimator::new(
            Arc::clone(&self.grid),
            tables,
            Provenance::Plain { h: h.clone(), partition: p.clone(), kernel: self.kernel().id() },
        )
    }

    /// `f̂_{(h,P),(η,P′)} = ∏_{I°∈P⋄P′} f̃_{h_{I°}, η_{I°}}`.
    pub fn pair(
        &self,
        h: &BandwidthVector,
        p: &Partition,
        eta: &BandwidthVector,
        q: &Partition,
    ) -> Result<FittedEstimator> {
        let meet = diamond(p, q)?;
        let tables = meet
            .blocks()
            .iter()
            .map(|b| self.convolved(b, &h.restrict(b), &eta.restrict(b)))
            .collect::<Result<Vec<_>>>()?;
        FittedEstimator::new(
            Arc::clone(&self.grid),
            tables,
            Provenance::Pair {
                h: h.clone(),
                partition: p.clone(),
                eta: eta.clone(),
                other: q.clone(),
                kernel: self.kernel().id(),
            },
        )
    }

    /// `f_n`: the largest `|K|`-average over bandwidths, nonempty blocks and nodes.
    pub fn f_n(&self, bandwidths: &[BandwidthVector]) -> Result<f64> {
        let d = self.grid.dim();
        let subsets: Vec<Vec<usize>> =
            (1u32..(1 << d)).map(|mask| (0..d).filter(|j| mask & (1 << j) != 0).collect()).collect();
        let mut best = 0.0f64;
        for h in bandwidths {
            for block in &subsets {
                best = best.max(self.marginal(block, &h.restrict(block), true)?.sup_abs());
            }
        }
        Ok(best)
    }
}

/// `(f_n, f̄_n = max(1, 2 f_n))` over a bandwidth list.
pub fn empirical_f_n(
    data: &Dataset,
    bandwidths: &[BandwidthVector],
    grid: Arc<EvaluationGrid>,
    conv: &ConvolutionCache,
) -> Result<(f64, f64)> {
    if bandwidths.is_empty() {
        return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
    }
    let f = Fitter::new(data, grid, conv)?.f_n(bandwidths)?;
    Ok((f, 1f64.max(2.0 * f)))
}

/// One-shot `f̂_{(h,P),(η,P′)}` without a shared cache.
pub fn fit_pair(
    data: &Dataset,
    hp: (&BandwidthVector, &Partition),
    eta_q: (&BandwidthVector, &Partition),
    grid: Arc<EvaluationGrid>,
    conv: &ConvolutionCache,
) -> Result<FittedEstimator> {
    Fitter::new(data, grid, conv)?.pair(hp.0, hp.1, eta_q.0, eta_q.1)
}

/// One-shot `f̂_{h,P}` without a shared cache.
pub fn fit_plain(
    data: &Dataset,
    h: &BandwidthVector,
    p: &Partition,
    grid: Arc<EvaluationGrid>,
    conv: &ConvolutionCache,
) -> Result<FittedEstimator> {
    Fitter::new(data, grid, conv)?.plain(h, p)
}
