//! Tensor grid standing in for `ℝ^d` when taking suprema.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Uniform nodes `origin + k·step`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub origin: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(origin: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || len < 2 || !origin.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "axis needs a positive step and at least two nodes (step {step}, len {len})"
            )));
        }
        Ok(Self { origin, step, len })
    }

    /// Smallest axis with spacing `step` whose nodes span `[lo, hi]`.
    pub fn spanning(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let len = ((hi - lo) / step).ceil() as usize + 1;
        Self::new(lo, step, len.max(2))
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        self.origin + self.step * k as f64
    }

    pub fn last(&self) -> f64 {
        self.node(self.len - 1)
    }

    /// Index range of nodes within `radius` of `x`, widened by one node on each side
    /// so rounding never drops a node inside the support.
    #[inline]
    pub fn window(&self, x: f64, radius: f64) -> (usize, usize) {
        let lo = ((x - radius - self.origin) / self.step).floor() - 1.0;
        let hi = ((x + radius - self.origin) / self.step).ceil() + 1.0;
        let lo = lo.max(0.0) as usize;
        let hi = (hi.max(-1.0) + 1.0).min(self.len as f64) as usize;
        (lo.min(self.len), hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    axes: Vec<Axis>,
}

impl EvaluationGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        Ok(Self { axes })
    }

    /// Box = data hull inflated by `inflation` per side, spacing `resolution` on every axis.
    pub fn covering(data: &Dataset, inflation: f64, resolution: f64) -> Result<Self> {
        let axes = (0..data.d())
            .map(|j| {
                let (lo, hi) = data.range(j);
                Axis::spanning(lo - inflation, hi + inflation, resolution)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, j: usize) -> &Axis {
        &self.axes[j]
    }

    pub fn total_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    /// Node counts of the sub-grid over `block`.
    pub fn block_shape(&self, block: &[usize]) -> Vec<usize> {
        block.iter().map(|&j| self.axes[j].len).collect()
    }

    /// Errors unless every sample of every axis in `block` sits at least `radius[j]`
    /// inside the box, so the kernel mass around it lands on the grid.
    pub fn check_covers(&self, data: &Dataset, block: &[usize], radius: &[f64]) -> Result<()> {
        for (&j, &r) in block.iter().zip(radius) {
            let (lo, hi) = data.range(j);
            let ax = &self.axes[j];
            if ax.origin > lo - r || ax.last() < hi + r {
                return Err(Error::GridCoverage { axis: j + 1 });
            }
        }
        Ok(())
    }

    /// The same grid shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let axes =
            self.axes.iter().zip(shift).map(|(a, s)| Axis { origin: a.origin + s, ..*a }).collect();
        Self { axes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spanning_covers_interval() {
        let a = Axis::spanning(-1.0, 1.0, 0.3).unwrap();
        assert_eq!(a.origin, -1.0);
        assert!(a.last() >= 1.0);
        assert!(a.node(a.len - 2) < 1.0);
    }

    #[test]
    fn window_contains_support() {
        let a = Axis::new(0.0, 0.1, 101).unwrap();
        let (lo, hi) = a.window(5.0, 0.25);
        for k in 0..a.len {
            if (a.node(k) - 5.0).abs() <= 0.25 {
                assert!(k >= lo && k < hi);
            }
        }
        assert_eq!(a.window(100.0, 0.5), (101, 101));
        assert_eq!(a.window(-100.0, 0.5).1, 0);
    }

    #[test]
    fn coverage_check() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let g = EvaluationGrid::covering(&ds, 0.5, 0.1).unwrap();
        assert!(g.check_covers(&ds, &[0], &[0.5]).is_ok());
        assert!(g.check_covers(&ds, &[0], &[0.6]).is_err());
    }
}
