//! Gauss–Legendre rules and a composite adaptive integrator.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, w * half))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 32-point rule; exact for polynomials up to degree 63.
pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

/// Shared 16-point rule used by the composite integrators.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Composite 16-point Gauss–Legendre over `panels` equal panels of `[a, b]`.
pub fn composite(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = gl16();
    let width = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + width * p as f64;
        acc += rule.integrate(lo, lo + width, &mut f);
    }
    acc
}

/// Composite rule with panel doubling until two successive estimates agree to `tol`.
pub fn adaptive(a: f64, b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    let mut panels = 1;
    let mut prev = composite(a, b, panels, &mut f);
    let mut diff = f64::INFINITY;
    for _ in 0..12 {
        panels *= 2;
        let next = composite(a, b, panels, &mut f);
        diff = (next - prev).abs();
        if diff <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature { target: tol, achieved: diff })
}

/// Composite tensor rule on a rectangle with panel doubling per axis.
pub fn adaptive_2d(
    x: (f64, f64),
    y: (f64, f64),
    tol: f64,
    mut f: impl FnMut(f64, f64) -> f64,
) -> Result<f64> {
    let eval = |panels: usize, f: &mut dyn FnMut(f64, f64) -> f64| {
        let rule = gl16();
        let wx = (x.1 - x.0) / panels as f64;
        let wy = (y.1 - y.0) / panels as f64;
        let mut acc = 0.0;
        for px in 0..panels {
            let xlo = x.0 + wx * px as f64;
            for (xi, wi) in rule.mapped(xlo, xlo + wx) {
                let mut inner = 0.0;
                for py in 0..panels {
                    let ylo = y.0 + wy * py as f64;
                    for (yj, wj) in rule.mapped(ylo, ylo + wy) {
                        inner += wj * f(xi, yj);
                    }
                }
                acc += wi * inner;
            }
        }
        acc
    };
    let mut panels = 1;
    let mut prev = eval(panels, &mut f);
    let mut diff = f64::INFINITY;
    for _ in 0..6 {
        panels *= 2;
        let next = eval(panels, &mut f);
        diff = (next - prev).abs();
        if diff <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature { target: tol, achieved: diff })
}
