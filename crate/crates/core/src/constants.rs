//! Explicit constants of the selection rule.
//!
//! `γ_p(s, a)` controls the penalty through `Λ = sup γ_{2q}(|I|, k_∞)` and the
//! bandwidth floor `a* = [2Λ]^{-2}`. These values are enormous (τ_p carries a
//! `234 s δ*^{-2}` term, about `8.6e9·s`), so experiments normally run in
//! [`Mode::Calibrated`], where `λ` is a user multiplier `κ`.

use std::collections::HashMap;
use std::f64::consts::{E, LN_2, PI};
use std::sync::OnceLock;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-grid size for the suprema in `C_s`.
pub const SUP_GRID_POINTS: usize = 10_000;

/// Initial upper cutoff of the `δ` search; doubled while the maximum sits on it.
pub const SUP_INITIAL_CUTOFF: f64 = 10.0;

const SUP_MAX_DOUBLINGS: usize = 3;

/// Base of the logarithm in the `|log a|` term of `τ_p`.
pub const TAU_LOG_BASE: &str = "natural";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `λ` and `a*` exactly as the formulas give them.
    Theoretical,
    /// `λ = κ` and `a*` set to a configured floor.
    Calibrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsContext {
    /// Risk exponent `q ≥ 1`.
    pub q: f64,
    pub d: usize,
    pub k_inf: f64,
    pub k_lip: f64,
    pub mode: Mode,
    /// Penalty multiplier in calibrated mode.
    pub kappa: f64,
    /// Replacement for `a*` in calibrated mode.
    pub a_star_floor: f64,
}

impl ConstantsContext {
    pub fn calibrated(d: usize, kernel: &crate::kernels::Kernel, kappa: f64, a_star_floor: f64) -> Self {
        Self {
            q: 1.0,
            d,
            k_inf: kernel.sup_norm(),
            k_lip: kernel.lipschitz(),
            mode: Mode::Calibrated,
            kappa,
            a_star_floor,
        }
    }

    pub fn theoretical(d: usize, q: f64, kernel: &crate::kernels::Kernel) -> Self {
        Self {
            q,
            d,
            k_inf: kernel.sup_norm(),
            k_lip: kernel.lipschitz(),
            mode: Mode::Theoretical,
            kappa: 1.0,
            a_star_floor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 1.0) {
            return Err(Error::InvalidArgument(format!("risk exponent q = {} must be ≥ 1", self.q)));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if self.mode == Mode::Calibrated && !(self.kappa > 0.0 && self.a_star_floor > 0.0) {
            return Err(Error::InvalidArgument("calibrated mode needs κ > 0 and a* floor > 0".into()));
        }
        Ok(())
    }
}

fn delta_equation(delta: f64) -> f64 {
    let l = delta.ln();
    8.0 * PI * PI * delta * (1.0 + l * l) - 1.0
}

/// Root of `8π²δ(1 + ln²δ) = 1`. The left side has derivative `8π²(1 + ln δ)² ≥ 0`,
/// so the root is unique and bisection on `[1e-8, 1e-2]` finds it.
pub fn delta_star() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        let (mut lo, mut hi) = (1e-8, 1e-2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if delta_equation(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if delta_equation(lo).abs() <= delta_equation(hi).abs() {
            lo
        } else {
            hi
        }
    })
}

/// `φ(δ) = (6/π²)(1 + ln²δ)^{-1}`.
pub fn phi(delta: f64) -> f64 {
    let l = delta.ln();
    (6.0 / (PI * PI)) / (1.0 + l * l)
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn c1_term(s: usize, delta: f64) -> f64 {
    let r = delta * delta / phi(delta).powi(2);
    let s1 = (s + 1) as f64;
    delta.powi(-2) * (pos(1.0 + (9216.0 * s1 * r).ln()) + 1.5 * pos((4608.0 * s1 * r).log2()))
}

fn c2_term(s: usize, delta: f64) -> f64 {
    let r = delta / phi(delta);
    let s1 = (s + 1) as f64;
    delta.powi(-1) * (pos(1.0 + (9216.0 * s1 * r).ln()) + 1.5 * pos((4608.0 * s1 * r).log2()))
}

/// The two suprema of `C_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BigC {
    pub c1: f64,
    pub c2: f64,
    pub total: f64,
    pub cutoff: f64,
    pub points: usize,
}

/// Supremum over `δ ∈ (δ*, cutoff]` on a log grid; `None` when the maximum sits on the cutoff.
fn grid_sup(term: impl Fn(f64) -> f64, points: usize, cutoff: f64) -> Option<f64> {
    let lo = delta_star().ln();
    let hi = cutoff.ln();
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for i in 0..points {
        let delta = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
        let v = term(delta);
        if v > best {
            best = v;
            arg = i;
        }
    }
    (arg + 1 < points).then_some(best)
}

/// `C_s = C_s^(1) + C_s^(2)` with an explicit grid size.
pub fn big_c_with(s: usize, points: usize) -> Result<BigC> {
    if !(1..=12).contains(&s) {
        return Err(Error::InvalidArgument(format!("block size s = {s} outside 1..=12")));
    }
    let mut cutoff = SUP_INITIAL_CUTOFF;
    for _ in 0..=SUP_MAX_DOUBLINGS {
        let c1 = grid_sup(|d| c1_term(s, d), points, cutoff);
        let c2 = grid_sup(|d| c2_term(s, d), points, cutoff);
        if let (Some(c1), Some(c2)) = (c1, c2) {
            let (c1, c2) = (s as f64 * c1, s as f64 * c2);
            return Ok(BigC { c1, c2, total: c1 + c2, cutoff, points });
        }
        cutoff *= 2.0;
    }
    Err(Error::NonConvergence(format!(
        "C_{s}: grid maximum still at the cutoff {cutoff} after {SUP_MAX_DOUBLINGS} doublings"
    )))
}

/// `C_s`, memoised per `s`.
pub fn big_c(s: usize) -> Result<f64> {
    static MEMO: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = memo.lock().get(&s) {
        return Ok(*v);
    }
    let v = big_c_with(s, SUP_GRID_POINTS)?.total;
    memo.lock().insert(s, v);
    Ok(v)
}

/// `τ_p(s, a)`.
pub fn tau_p(p: f64, s: usize, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("a = {a} must be positive")));
    }
    let sf = s as f64;
    let ds2 = delta_star().powi(-2);
    Ok(sf * (234.0 * sf * ds2 + 6.5 * p + 5.5) * LN_2
        + sf * (2.0 * p + 3.0)
        + (108.0 * sf * ds2 * a.ln().abs() + 36.0 * big_c(s)? + 1.0) / 3f64.ln())
}

/// `γ_p(s, a)` for a kernel with Lipschitz constant `lip`.
pub fn gamma_p(p: f64, s: usize, a: f64, lip: f64) -> Result<f64> {
    let tau = tau_p(p, s, a)?;
    let sf = s as f64;
    let bracket = a + 1.5 * lip * a.powi(s as i32 - 1);
    Ok(4.0 * E * (2.0 * sf * tau * bracket).sqrt() + (16.0 * E / 3.0) * (sf * bracket).max(8.0 * a) * tau)
}

/// `π(s, a)`, used only to document the theoretical tail constants.
pub fn pi_const(s: usize, a: f64, lip: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("a = {a} must be positive")));
    }
    let sf = s as f64;
    let bracket = 1.0 + 1.5 * lip * a.powi(s as i32 - 2);
    Ok(a.sqrt().max(a) * (2.0 * E * sf * bracket).sqrt().max((2.0 * E / 3.0) * (sf * bracket).max(8.0)))
}

/// `Λ = max_{s ≤ d} γ_{2q}(s, k_∞)`; errors if `γ` is not increasing in `s`.
pub fn big_lambda(ctx: &ConstantsContext) -> Result<f64> {
    let mut prev = f64::NEG_INFINITY;
    for s in 1..=ctx.d {
        let g = gamma_p(2.0 * ctx.q, s, ctx.k_inf, ctx.k_lip)?;
        if g <= prev {
            return Err(Error::InvalidArgument(format!(
                "γ_2q(s, k_∞) is not increasing in s at s = {s}; Λ = γ_2q(d, k_∞) does not apply"
            )));
        }
        prev = g;
    }
    Ok(prev)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub mode: Mode,
    pub lambda: f64,
    pub a_star: f64,
    /// `Λ`; absent in calibrated mode.
    pub big_lambda: Option<f64>,
    pub f_bar_n: f64,
}

/// `λ = Λ d f̄_n^{⌊d²/4⌋+1}` and `a* = [2Λ]^{-2}`, or their calibrated replacements.
pub fn lambda_and_threshold(ctx: &ConstantsContext, f_bar_n: f64) -> Result<Threshold> {
    ctx.validate()?;
    if !(f_bar_n >= 1.0) {
        return Err(Error::InvalidArgument(format!("f̄_n = {f_bar_n} must be ≥ 1")));
    }
    match ctx.mode {
        Mode::Theoretical => {
            let big = big_lambda(ctx)?;
            let exponent = lambda_exponent(ctx.d);
            Ok(Threshold {
                mode: Mode::Theoretical,
                lambda: big * ctx.d as f64 * f_bar_n.powi(exponent),
                a_star: (2.0 * big).powi(-2),
                big_lambda: Some(big),
                f_bar_n,
            })
        }
        Mode::Calibrated => Ok(Threshold {
            mode: Mode::Calibrated,
            lambda: ctx.kappa,
            a_star: ctx.a_star_floor,
            big_lambda: None,
            f_bar_n,
        }),
    }
}

/// `a*` alone; it does not depend on the data.
pub fn a_star(ctx: &ConstantsContext) -> Result<f64> {
    ctx.validate()?;
    match ctx.mode {
        Mode::Theoretical => Ok((2.0 * big_lambda(ctx)?).powi(-2)),
        Mode::Calibrated => Ok(ctx.a_star_floor),
    }
}

/// `⌊d²/4⌋ + 1`.
pub fn lambda_exponent(d: usize) -> i32 {
    (d * d / 4 + 1) as i32
}

/// Everything the `constants` report prints.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantsReport {
    pub q: f64,
    pub s: usize,
    pub kernel_sup_norm: f64,
    pub kernel_lipschitz: f64,
    pub delta_star: f64,
    #[serde(rename = "C_s")]
    pub c_s: f64,
    #[serde(rename = "C_s_1")]
    pub c_s_1: f64,
    #[serde(rename = "C_s_2")]
    pub c_s_2: f64,
    pub tau: f64,
    pub gamma: f64,
    pub pi: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub a_star: f64,
    pub log_base: &'static str,
    pub mode: Mode,
}

/// Report for block size `s`; `Λ` and `a*` are taken over block sizes `1..=s`.
pub fn report(q: f64, s: usize, k_inf: f64, k_lip: f64) -> Result<ConstantsReport> {
    let c = big_c_with(s, SUP_GRID_POINTS)?;
    let p = 2.0 * q;
    let ctx = ConstantsContext {
        q,
        d: s,
        k_inf,
        k_lip,
        mode: Mode::Theoretical,
        kappa: 1.0,
        a_star_floor: 1.0,
    };
    let big = big_lambda(&ctx)?;
    Ok(ConstantsReport {
        q,
        s,
        kernel_sup_norm: k_inf,
        kernel_lipschitz: k_lip,
        delta_star: delta_star(),
        c_s: c.total,
        c_s_1: c.c1,
        c_s_2: c.c2,
        tau: tau_p(p, s, k_inf)?,
        gamma: gamma_p(p, s, k_inf, k_lip)?,
        pi: pi_const(s, k_inf, k_lip)?,
        big_lambda: big,
        a_star: (2.0 * big).powi(-2),
        log_base: TAU_LOG_BASE,
        mode: Mode::Theoretical,
    })
}
