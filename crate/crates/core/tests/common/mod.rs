//! Brute-force reference computations shared by the integration targets.
//!
//! Every function here walks nodes in row-major order and samples in data
//! order, multiplying factors left to right starting from `1.0`.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supkde::data::Dataset;
use supkde::grid::{Axis, EvaluationGrid};
use supkde::kernels::{ConvolutionCache, Kernel};
use supkde::partitions::Partition;

/// Uniform points in `[lo, hi]^d`.
pub fn uniform_data(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..n * d).map(|_| rng.gen_range(lo..hi)).collect();
    Dataset::from_row_major(n, d, values).unwrap()
}

pub fn square_grid(d: usize, lo: f64, step: f64, len: usize) -> EvaluationGrid {
    EvaluationGrid::new(vec![Axis::new(lo, step, len).unwrap(); d]).unwrap()
}

fn node_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        out.push(idx.clone());
        for t in (0..shape.len()).rev() {
            idx[t] += 1;
            if idx[t] < shape[t] {
                break;
            }
            idx[t] = 0;
        }
    }
    out
}

/// `n^{-1} Σ_i ∏_t factor(t, X_{i,block[t]} − x_t)` on the block sub-grid, row-major.
pub fn brute_block(
    data: &Dataset,
    block: &[usize],
    grid: &EvaluationGrid,
    factor: impl Fn(usize, f64) -> f64,
) -> Vec<f64> {
    let shape: Vec<usize> = block.iter().map(|&j| grid.axis(j).len).collect();
    node_indices(&shape)
        .into_iter()
        .map(|idx| {
            let mut sum = 0.0;
            for i in 0..data.n() {
                let mut prod = 1.0;
                for (t, &j) in block.iter().enumerate() {
                    prod *= factor(t, data.get(i, j) - grid.axis(j).node(idx[t]));
                }
                sum += prod;
            }
            sum / data.n() as f64
        })
        .collect()
}

pub fn brute_marginal(data: &Dataset, kernel: &Kernel, block: &[usize], h: &[f64], grid: &EvaluationGrid) -> Vec<f64> {
    brute_block(data, block, grid, |t, u| kernel.eval_scaled(u, h[t]))
}

pub fn brute_convolved(
    data: &Dataset,
    conv: &ConvolutionCache,
    block: &[usize],
    h: &[f64],
    eta: &[f64],
    grid: &EvaluationGrid,
) -> Vec<f64> {
    let profiles: Vec<_> = h.iter().zip(eta).map(|(&a, &b)| conv.get(a, b).unwrap()).collect();
    brute_block(data, block, grid, |t, u| profiles[t].eval(u))
}

/// Full tensor of `∏_b table_b`, given per-block tables in the order of `blocks`.
pub fn brute_product(grid: &EvaluationGrid, blocks: &[Vec<usize>], tables: &[Vec<f64>]) -> Vec<f64> {
    let shape: Vec<usize> = grid.axes().iter().map(|a| a.len).collect();
    node_indices(&shape)
        .into_iter()
        .map(|idx| {
            let mut v = 1.0;
            for (block, table) in blocks.iter().zip(tables) {
                let mut off = 0;
                for &j in block {
                    off = off * grid.axis(j).len + idx[j];
                }
                v *= table[off];
            }
            v
        })
        .collect()
}

pub fn brute_plain(data: &Dataset, kernel: &Kernel, h: &[f64], p: &Partition, grid: &EvaluationGrid) -> Vec<f64> {
    let tables: Vec<Vec<f64>> = p
        .blocks()
        .iter()
        .map(|b| {
            let hb: Vec<f64> = b.iter().map(|&j| h[j]).collect();
            brute_marginal(data, kernel, b, &hb, grid)
        })
        .collect();
    brute_product(grid, p.blocks(), &tables)
}

/// Meet computed from the definition: `j ~ k` iff they share a block in both.
pub fn brute_meet(p: &Partition, q: &Partition) -> Partition {
    let (lp, lq) = (p.labels(), q.labels());
    let d = p.dim();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for j in 0..d {
        match blocks.iter_mut().find(|b| lp[b[0]] == lp[j] && lq[b[0]] == lq[j]) {
            Some(b) => b.push(j),
            None => blocks.push(vec![j]),
        }
    }
    Partition::new(d, blocks).unwrap()
}

pub fn brute_pair(
    data: &Dataset,
    conv: &ConvolutionCache,
    hp: (&[f64], &Partition),
    eq: (&[f64], &Partition),
    grid: &EvaluationGrid,
) -> Vec<f64> {
    let meet = brute_meet(hp.1, eq.1);
    let tables: Vec<Vec<f64>> = meet
        .blocks()
        .iter()
        .map(|b| {
            let hb: Vec<f64> = b.iter().map(|&j| hp.0[j]).collect();
            let eb: Vec<f64> = b.iter().map(|&j| eq.0[j]).collect();
            brute_convolved(data, conv, b, &hb, &eb, grid)
        })
        .collect();
    brute_product(grid, meet.blocks(), &tables)
}

pub fn brute_sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `∫ K_h(u − z) K_η(u) du` by the midpoint rule with `cells` cells over `[−η/2, η/2]`.
pub fn riemann_convolution(kernel: &Kernel, h: f64, eta: f64, z: f64, cells: usize) -> f64 {
    let step = eta / cells as f64;
    (0..cells)
        .map(|c| {
            let u = -0.5 * eta + (c as f64 + 0.5) * step;
            kernel.eval_scaled(u - z, h) * kernel.eval_scaled(u, eta)
        })
        .sum::<f64>()
        * step
}

/// Composite Simpson rule with `panels` (even) panels.
pub fn simpson(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let panels = panels + panels % 2;
    let step = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + step * k as f64);
    }
    sum * step / 3.0
}
