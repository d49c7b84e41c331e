//! Univariate kernels supported on `[-1/2, 1/2]`, product kernels and
//! convolution profiles `K_h ∗ K_η`.
//!
//! The constructed family is `K(t) = Σ_k c_k t^{2k}` on `|t| ≤ 1/2`, zero
//! outside, with `K(±1/2) = 0`. Vanishing at the support edge makes `K`
//! Lipschitz on all of ℝ; the coefficients are fixed by `∫K = 1` and
//! `∫ t^m K = 0` for the even `m` in `2..=𝔟` (odd moments vanish by symmetry).

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gl32;

/// Largest supported vanishing-moment order.
pub const MAX_MOMENT_ORDER: u32 = 12;

/// Probe grid size for the Lipschitz constant and the sup-norm.
pub const PROBE_POINTS: usize = 10_000;

/// Default node count of a convolution profile.
pub const DEFAULT_PROFILE_NODES: usize = 8193;

/// Minimum node count of a convolution profile.
pub const MIN_PROFILE_NODES: usize = 65;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelShape {
    /// `Σ c_k t^{2k}` on `|t| ≤ 1/2`; `coefficients[k]` multiplies `t^{2k}`.
    EvenPolynomial { coefficients: Vec<f64> },
    /// Indicator of `[-1/2, 1/2]`. Not Lipschitz; kept for assumption checks.
    Box,
}

/// A univariate kernel with its measured constants. Serializes as [`KernelFile`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelFile", into = "KernelFile")]
pub struct Kernel {
    shape: KernelShape,
    moment_order: u32,
    lipschitz: f64,
    sup_norm: f64,
    l1_norm: f64,
}

/// On-disk kernel description: shape plus the declared moment order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub moment_order: u32,
    #[serde(flatten)]
    pub shape: KernelShape,
}

impl Kernel {
    /// Wraps a shape and measures `L`, `k_∞` and `k_1`.
    pub fn from_shape(shape: KernelShape, moment_order: u32) -> Result<Self> {
        if moment_order == 0 {
            return Err(Error::InvalidKernel("moment order must be at least 1".into()));
        }
        if let KernelShape::EvenPolynomial { coefficients } = &shape {
            if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidKernel("coefficients must be finite and nonempty".into()));
            }
        }
        let mut k = Self { shape, moment_order, lipschitz: 0.0, sup_norm: 0.0, l1_norm: 0.0 };
        k.lipschitz = probe_lipschitz(&k, PROBE_POINTS);
        k.sup_norm = probe_sup(&k);
        k.l1_norm = l1_norm(&k);
        Ok(k)
    }

    /// The quadratic kernel `1.5(1 − 4t²)` (moment order 1).
    pub fn epanechnikov() -> Self {
        build_polynomial_kernel(1).expect("moment order 1 is always solvable")
    }

    pub fn box_kernel() -> Self {
        Self::from_shape(KernelShape::Box, 1).expect("box kernel is valid")
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if !(-0.5..=0.5).contains(&t) {
            return 0.0;
        }
        match &self.shape {
            KernelShape::EvenPolynomial { coefficients } => {
                let t2 = t * t;
                coefficients.iter().rev().fold(0.0, |acc, c| acc * t2 + c)
            }
            KernelShape::Box => 1.0,
        }
    }

    /// `K_h(t) = K(t/h)/h`.
    #[inline]
    pub fn eval_scaled(&self, t: f64, h: f64) -> f64 {
        self.eval(t / h) / h
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn moment_order(&self) -> u32 {
        self.moment_order
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    /// True when `K ≥ 0` everywhere, so `|K_h|` averages equal the estimator itself.
    pub fn is_nonnegative(&self) -> bool {
        (self.l1_norm - 1.0).abs() < 1e-12
    }

    /// Short identifier used in provenance records.
    pub fn id(&self) -> String {
        match &self.shape {
            KernelShape::EvenPolynomial { .. } => format!("even-poly-b{}", self.moment_order),
            KernelShape::Box => "box".to_string(),
        }
    }

    pub fn to_file(&self) -> KernelFile {
        KernelFile { moment_order: self.moment_order, shape: self.shape.clone() }
    }

    pub fn from_file(file: KernelFile) -> Result<Self> {
        Self::from_shape(file.shape, file.moment_order)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    /// Integrates `g(t)·K(t)` over the support, exactly for polynomial `g` of modest degree.
    pub fn integrate_against(&self, g: impl Fn(f64) -> f64) -> f64 {
        gl32().integrate(-0.5, 0.5, |t| g(t) * self.eval(t))
    }
}

impl TryFrom<KernelFile> for Kernel {
    type Error = Error;

    fn try_from(file: KernelFile) -> Result<Self> {
        Self::from_file(file)
    }
}

impl From<Kernel> for KernelFile {
    fn from(k: Kernel) -> Self {
        k.to_file()
    }
}

/// Solves the moment system for the even polynomial kernel of order `moment_order`.
pub fn build_polynomial_kernel(moment_order: u32) -> Result<Kernel> {
    if !(1..=MAX_MOMENT_ORDER).contains(&moment_order) {
        return Err(Error::InvalidKernel(format!(
            "moment order {moment_order} outside 1..={MAX_MOMENT_ORDER}"
        )));
    }
    let even_moments = (moment_order / 2) as usize;
    let m = even_moments + 1;
    // Unknowns a_k multiply (2t)^{2k}; rows: K(1/2) = 0, ∫K = 1, ∫t^{2j}K = 0 (scaled by 4^j).
    let size = m + 1;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    for k in 0..size {
        a[(0, k)] = 1.0;
        a[(1, k)] = 1.0 / (2 * k + 1) as f64;
        for j in 1..=even_moments {
            a[(1 + j, k)] = 1.0 / (2 * j + 2 * k + 1) as f64;
        }
    }
    b[1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidKernel(format!("singular moment system for order {moment_order}")))?;
    let coefficients = sol.iter().enumerate().map(|(k, ak)| ak * 4f64.powi(k as i32)).collect();
    Kernel::from_shape(KernelShape::EvenPolynomial { coefficients }, moment_order)
}

fn probe_sup(k: &Kernel) -> f64 {
    let n = PROBE_POINTS + 1;
    (0..n)
        .map(|i| k.eval(-0.5 + i as f64 / (n - 1) as f64).abs())
        .fold(0.0, f64::max)
}

/// Largest secant slope on a uniform probe grid over `[-1, 1]`.
fn probe_lipschitz(k: &Kernel, points: usize) -> f64 {
    let step = 2.0 / (points - 1) as f64;
    let mut prev = k.eval(-1.0);
    let mut best = 0.0f64;
    for i in 1..points {
        let cur = k.eval(-1.0 + step * i as f64);
        best = best.max((cur - prev).abs() / step);
        prev = cur;
    }
    best
}

/// Sign-change points of `K` on `(0, 1/2)`, located by probing then bisection.
fn sign_changes(k: &Kernel) -> Vec<f64> {
    let n = 2000;
    let mut roots = Vec::new();
    let mut lo = 0.0;
    let mut flo = k.eval(0.0);
    for i in 1..n {
        let hi = 0.5 * i as f64 / n as f64;
        let fhi = k.eval(hi);
        if flo * fhi < 0.0 {
            let (mut a, mut b, fa) = (lo, hi, flo);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if k.eval(mid) * fa > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        lo = hi;
        flo = fhi;
    }
    roots
}

fn l1_norm(k: &Kernel) -> f64 {
    let mut cuts = vec![0.0];
    cuts.extend(sign_changes(k));
    cuts.push(0.5);
    let rule = gl32();
    2.0 * cuts.windows(2).map(|w| rule.integrate(w[0], w[1], |t| k.eval(t).abs())).sum::<f64>()
}

/// Outcome of [`check_assumptions`]; each flag is accompanied by the measured value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelReport {
    pub kernel: String,
    pub integral: f64,
    pub integral_ok: bool,
    pub support_ok: bool,
    pub symmetric: bool,
    pub lipschitz_probe: f64,
    pub lipschitz_probe_fine: f64,
    pub lipschitz_finite: bool,
    pub k1: f64,
    pub k_inf: f64,
    pub moment_order: u32,
    /// `∫ t^m K` for `m = 1..=𝔟`.
    pub moments: Vec<f64>,
    pub moments_ok: bool,
    pub all_ok: bool,
}

pub fn check_assumptions(k: &Kernel) -> KernelReport {
    let integral = k.integrate_against(|_| 1.0);
    let integral_ok = (integral - 1.0).abs() <= 1e-10;
    let probe = PROBE_POINTS;
    let mut support_ok = true;
    let mut symmetric = true;
    for i in 0..=probe {
        let t = i as f64 / probe as f64;
        if t > 0.5 && k.eval(t) != 0.0 {
            support_ok = false;
        }
        if (k.eval(t) - k.eval(-t)).abs() > 1e-14 {
            symmetric = false;
        }
    }
    // A Lipschitz function's secant maximum converges under refinement; a jump doubles it.
    let lip = probe_lipschitz(k, probe);
    let lip_fine = probe_lipschitz(k, 2 * probe + 1);
    let lipschitz_finite = lip_fine <= 1.5 * lip.max(f64::MIN_POSITIVE);
    let moments: Vec<f64> =
        (1..=k.moment_order).map(|m| k.integrate_against(|t| t.powi(m as i32))).collect();
    let moments_ok = moments.iter().skip(1).all(|v| v.abs() <= 1e-8) && moments[0].abs() <= 1e-12;
    let all_ok = integral_ok && support_ok && symmetric && lipschitz_finite && moments_ok;
    KernelReport {
        kernel: k.id(),
        integral,
        integral_ok,
        support_ok,
        symmetric,
        lipschitz_probe: lip,
        lipschitz_probe_fine: lip_fine,
        lipschitz_finite,
        k1: k.l1_norm(),
        k_inf: k.sup_norm(),
        moment_order: k.moment_order,
        moments,
        moments_ok,
        all_ok,
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidBandwidth(format!("bandwidth {h} outside (0, 1]")));
    }
    Ok(())
}

/// `K_{h_I}(u) = V_{h_I}^{-1} ∏_j K(u_j / h_j)`.
pub fn eval_product_kernel(k: &Kernel, h: &[f64], u: &[f64]) -> Result<f64> {
    if h.len() != u.len() {
        return Err(Error::DimensionMismatch { left: h.len(), right: u.len() });
    }
    for &hj in h {
        check_bandwidth(hj)?;
    }
    let mut prod = 1.0;
    let mut vol = 1.0;
    for (&hj, &uj) in h.iter().zip(u) {
        prod *= k.eval(uj / hj);
        vol *= hj;
    }
    Ok(prod / vol)
}

/// `[K_h ∗ K_η](z) = ∫ K_h(u − z) K_η(u) du`, by Gauss–Legendre on the support overlap.
pub fn convolve_exact(k: &Kernel, h: f64, eta: f64, z: f64) -> f64 {
    let lo = (z - 0.5 * h).max(-0.5 * eta);
    let hi = (z + 0.5 * h).min(0.5 * eta);
    if hi <= lo {
        return 0.0;
    }
    gl32().integrate(lo, hi, |u| k.eval_scaled(u - z, h) * k.eval_scaled(u, eta))
}

/// Tabulated `K_h ∗ K_η` on a uniform grid over its support, interpolated by cubic convolution.
#[derive(Clone, Debug)]
pub struct ConvolutionProfile {
    h: f64,
    eta: f64,
    half_support: f64,
    step: f64,
    values: Vec<f64>,
}

impl ConvolutionProfile {
    /// Cubic-convolution (Catmull–Rom) interpolation. The profile and its first two
    /// derivatives vanish at the support edges, so nodes past either end count as zero.
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        let pos = (z + self.half_support) / self.step;
        let last = self.values.len() - 1;
        if !(pos > 0.0) || pos >= last as f64 {
            return 0.0;
        }
        let i = pos as usize;
        let t = pos - i as f64;
        let at = |k: usize| self.values[k];
        let p0 = if i == 0 { 0.0 } else { at(i - 1) };
        let p1 = at(i);
        let p2 = at(i + 1);
        let p3 = if i + 2 > last { 0.0 } else { at(i + 2) };
        p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)))
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `(h + η)/2`; the profile vanishes beyond it.
    pub fn half_support(&self) -> f64 {
        self.half_support
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Argument of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        -self.half_support + self.step * i as f64
    }

    /// Mass of the interpolant: the node sum times the spacing, as the end nodes are zero.
    pub fn table_mass(&self) -> f64 {
        let inner: f64 = self.values.iter().sum::<f64>()
            - 0.5 * (self.values[0] + self.values[self.values.len() - 1]);
        inner * self.step
    }
}

/// Mass of the exact convolution, integrated piecewise between its breakpoints.
pub fn convolution_mass(k: &Kernel, h: f64, eta: f64) -> f64 {
    let s = 0.5 * (h + eta);
    let c = 0.5 * (h - eta).abs();
    let rule = gl32();
    let mut breaks = vec![-s, -c, c, s];
    breaks.dedup();
    breaks
        .windows(2)
        .map(|w| {
            // Inner breakpoint at 0 covers kernels whose polynomial pieces meet there.
            let mid = 0.5 * (w[0] + w[1]);
            rule.integrate(w[0], mid, |z| convolve_exact(k, h, eta, z))
                + rule.integrate(mid, w[1], |z| convolve_exact(k, h, eta, z))
        })
        .sum()
}

pub fn build_convolution_table(k: &Kernel, h: f64, eta: f64, nodes: usize) -> Result<ConvolutionProfile> {
    check_bandwidth(h)?;
    check_bandwidth(eta)?;
    if nodes < MIN_PROFILE_NODES {
        return Err(Error::InvalidArgument(format!(
            "convolution profile needs at least {MIN_PROFILE_NODES} nodes, got {nodes}"
        )));
    }
    let half_support = 0.5 * (h + eta);
    let step = 2.0 * half_support / (nodes - 1) as f64;
    let mut values: Vec<f64> =
        (0..nodes).map(|i| convolve_exact(k, h, eta, -half_support + step * i as f64)).collect();
    values[0] = 0.0;
    values[nodes - 1] = 0.0;
    Ok(ConvolutionProfile { h, eta, half_support, step, values })
}

/// Read-mostly cache of convolution profiles keyed by the unordered pair `{h, η}`.
///
/// The key is canonicalized so `(h, η)` and `(η, h)` share one table, which
/// makes pairwise estimators exactly symmetric in their two arguments.
#[derive(Debug)]
pub struct ConvolutionCache {
    kernel: Arc<Kernel>,
    nodes: usize,
    map: RwLock<HashMap<(u64, u64), Arc<ConvolutionProfile>>>,
}

impl ConvolutionCache {
    pub fn new(kernel: Arc<Kernel>, nodes: usize) -> Self {
        Self { kernel, nodes, map: RwLock::new(HashMap::new()) }
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn get(&self, h: f64, eta: f64) -> Result<Arc<ConvolutionProfile>> {
        let (a, b) = if h <= eta { (h, eta) } else { (eta, h) };
        let key = (a.to_bits(), b.to_bits());
        if let Some(p) = self.map.read().get(&key) {
            return Ok(Arc::clone(p));
        }
        let built = Arc::new(build_convolution_table(&self.kernel, a, b, self.nodes)?);
        // Duplicate builds are value-identical; keep whichever landed first.
        Ok(Arc::clone(self.map.write().entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.read().is_empty()
    }
}
