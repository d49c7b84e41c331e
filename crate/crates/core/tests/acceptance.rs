//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `SUPKDE_BLESS=1` to rewrite the golden files under `tests/golden`, and
//! `SUPKDE_ACCEPTANCE_ONLY=1,2,5` to run a subset while iterating.

mod common;

use std::f64::consts::{E, PI};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use supkde::constants::{big_c, big_c_with, delta_star, gamma_p, pi_const, tau_p};
use supkde::estimators::{sup_norm_diff, BandwidthVector, Fitter};
use supkde::harness::mc::{mc_risk, rate_experiment, PipelineConfig, RateReport, RiskReport};
use supkde::harness::{SmoothnessSpec, SyntheticDensity};
use supkde::kernels::{build_polynomial_kernel, check_assumptions, ConvolutionCache, Kernel, DEFAULT_PROFILE_NODES};
use supkde::partitions::{bell_number, diamond, enumerate_all, refines, Partition, PartitionFamily};
use supkde::quadrature::gl32;
use supkde::selection::SelectionOptions;

const SEED: u64 = 20261019;
const RATE_SIZES: [usize; 5] = [250, 500, 1000, 2000, 4000];
/// Penalty multiplier for the two-dimensional fixtures.
const KAPPA_2D: f64 = 0.5;
/// Penalty multiplier for the one-dimensional rate fixture.
const KAPPA_RATE: f64 = 0.7;
const STRUCTURE_REPS: usize = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn within(limit_secs: u64, elapsed: Duration) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut counts = Vec::new();
    for d in 1..=4 {
        let fam = enumerate_all(d).unwrap();
        counts.push(fam.len());
        ok &= fam.len() as u64 == bell_number(d) && fam.len() == [1, 2, 5, 15][d - 1];
        let all = fam.members();
        for p in all {
            ok &= diamond(p, p).unwrap() == *p;
            for q in all {
                let pq = diamond(p, q).unwrap();
                ok &= pq == diamond(q, p).unwrap();
                ok &= pq == brute_meet(p, q);
                ok &= refines(&pq, p).unwrap() && refines(&pq, q).unwrap();
                for r in all {
                    ok &= diamond(&pq, r).unwrap() == diamond(p, &diamond(q, r).unwrap()).unwrap();
                    // Greatest lower bound: every common refinement refines the meet.
                    if refines(r, p).unwrap() && refines(r, q).unwrap() {
                        ok &= refines(r, &pq).unwrap();
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    Outcome::new(ok && within(1, t), format!("counts {counts:?}, {t:.2?}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut worst_riemann = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut worst_moment = 0.0f64;
    for order in [1u32, 3, 5] {
        let k = build_polynomial_kernel(order).unwrap();
        let integral = simpson(-0.5, 0.5, 20_000, |t| k.eval(t));
        ok &= (integral - 1.0).abs() <= 1e-10;
        for i in 0..=20_000 {
            let t = i as f64 / 20_000.0;
            ok &= k.eval(t) == k.eval(-t);
            if t > 0.5 {
                ok &= k.eval(t) == 0.0 && k.eval(t + 0.5) == 0.0;
            }
        }
        let secant = |points: usize| {
            let step = 1.0 / points as f64;
            (0..points).map(|i| (k.eval(-0.5 + (i + 1) as f64 * step) - k.eval(-0.5 + i as f64 * step)).abs() / step).fold(0.0, f64::max)
        };
        let (coarse, fine) = (secant(10_000), secant(40_000));
        ok &= fine.is_finite() && fine <= 1.01 * coarse && check_assumptions(&k).all_ok;
        for m in 2..=order {
            let moment = simpson(-0.5, 0.5, 20_000, |t| t.powi(m as i32) * k.eval(t));
            worst_moment = worst_moment.max(moment.abs());
        }
        let conv = ConvolutionCache::new(Arc::new(k.clone()), DEFAULT_PROFILE_NODES);
        for (h, eta) in [(1.0, 1.0), (1.0, 0.25), (0.5, 0.5), (0.25, 0.125), (0.125, 0.125)] {
            let prof = conv.get(h, eta).unwrap();
            worst_mass = worst_mass.max((prof.table_mass() - 1.0).abs());
            let s = prof.half_support();
            for i in 0..=24 {
                let z = -s + 2.0 * s * (i as f64 + 0.31) / 25.0;
                worst_riemann = worst_riemann.max((prof.eval(z) - riemann_convolution(&k, h, eta, z, 400_000)).abs());
            }
        }
    }
    ok &= worst_moment <= 1e-8 && worst_mass <= 1e-8 && worst_riemann <= 1e-6;
    let t = start.elapsed();
    Outcome::new(
        ok && within(10, t),
        format!("max |moment| {worst_moment:.1e}, max mass error {worst_mass:.1e}, max Riemann gap {worst_riemann:.1e}, {t:.2?}"),
    )
}

/// Second transcription of the constant formulas, written term by term.
fn tau_second(p: f64, s: usize, a: f64) -> f64 {
    let s = s as f64;
    let inv_d2 = 1.0 / (delta_star() * delta_star());
    let first = s * (234.0 * s * inv_d2 + 6.5 * p + 5.5) * 2f64.ln();
    let second = s * (2.0 * p + 3.0);
    let third = (108.0 * s * inv_d2 * a.ln().abs() + 36.0 * big_c(s as usize).unwrap() + 1.0) / 3f64.ln();
    first + second + third
}

fn gamma_second(p: f64, s: usize, a: f64, lip: f64) -> f64 {
    let tau = tau_second(p, s, a);
    let sf = s as f64;
    let inner = a + (3.0 * lip / 2.0) * a.powf(sf - 1.0);
    let left = 4.0 * E * (2.0 * sf * tau * inner).sqrt();
    let right = (16.0 * E / 3.0) * f64::max(sf * inner, 8.0 * a) * tau;
    left + right
}

fn pi_second(s: usize, a: f64, lip: f64) -> f64 {
    let sf = s as f64;
    let inner = 1.0 + (3.0 * lip / 2.0) * a.powf(sf - 2.0);
    let lead = if a >= 1.0 { a } else { a.sqrt() };
    let left = (2.0 * E * sf * inner).sqrt();
    let right = (2.0 * E / 3.0) * f64::max(sf * inner, 8.0);
    lead * f64::max(left, right)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let d = delta_star();
    let residual = (8.0 * PI * PI * d * (1.0 + d.ln().powi(2)) - 1.0).abs();
    let mut stability = 0.0f64;
    for s in 1..=4 {
        let a = big_c_with(s, 10_000).unwrap().total;
        let b = big_c_with(s, 20_000).unwrap().total;
        stability = stability.max(rel(a, b));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let lip = Kernel::epanechnikov().lipschitz();
    for _ in 0..12 {
        let p = rng.gen_range(2.0..8.0);
        let s = rng.gen_range(1..=6usize);
        let a = rng.gen_range(0.1..10.0);
        worst = worst.max(rel(tau_p(p, s, a).unwrap(), tau_second(p, s, a)));
        worst = worst.max(rel(gamma_p(p, s, a, lip).unwrap(), gamma_second(p, s, a, lip)));
        worst = worst.max(rel(pi_const(s, a, lip).unwrap(), pi_second(s, a, lip)));
    }
    let t = start.elapsed();
    Outcome::new(
        residual <= 1e-12 && stability <= 1e-3 && worst <= 1e-12 && within(30, t),
        format!("δ* = {d:.10e} residual {residual:.1e}, C_s grid-doubling change {stability:.1e}, transcription gap {worst:.1e}, {t:.2?}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut checks = 0;
    for (n, d, seed) in [(1usize, 1usize, 1u64), (37, 1, 2), (100, 1, 3), (5, 2, 4), (64, 2, 5), (100, 2, 6)] {
        for order in [1u32, 3] {
            let kernel = build_polynomial_kernel(order).unwrap();
            let conv = ConvolutionCache::new(Arc::new(kernel.clone()), DEFAULT_PROFILE_NODES);
            let data = uniform_data(n, d, 0.35, 0.65, seed);
            let grid = Arc::new(square_grid(d, -0.2, 0.05, 29));
            let fitter = Fitter::new(&data, Arc::clone(&grid), &conv).unwrap();
            let parts = if d == 1 { vec![Partition::trivial(1)] } else { vec![Partition::trivial(2), Partition::singletons(2)] };
            let bands: Vec<Vec<f64>> = if d == 1 {
                vec![vec![0.5], vec![0.25], vec![0.125]]
            } else {
                vec![vec![0.5, 0.25], vec![0.25, 0.125], vec![0.125, 0.5]]
            };
            for h in &bands {
                let hv = BandwidthVector::new(h.clone()).unwrap();
                for p in &parts {
                    let plain = fitter.plain(&hv, p).unwrap();
                    let plain_ref = brute_plain(&data, &kernel, h, p, &grid);
                    ok &= plain.materialize().unwrap() == plain_ref;
                    for eta in &bands {
                        let ev = BandwidthVector::new(eta.clone()).unwrap();
                        for q in &parts {
                            let pair = fitter.pair(&hv, p, &ev, q).unwrap();
                            let pair_ref = brute_pair(&data, &conv, (h, p), (eta, q), &grid);
                            ok &= pair.materialize().unwrap() == pair_ref;
                            ok &= sup_norm_diff(&pair, &plain).unwrap() == brute_sup(&pair_ref, &plain_ref);
                            checks += 1;
                        }
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    Outcome::new(ok && within(60, t), format!("{checks} pair/plain/sup comparisons bit-identical, {t:.2?}"))
}

/// `∫ K_h(v − u) K_η(v) dv`, exact for polynomial kernels.
fn convolution_at(k: &Kernel, h: f64, eta: f64, u: f64) -> f64 {
    let lo = (u - 0.5 * h).max(-0.5 * eta);
    let hi = (u + 0.5 * h).min(0.5 * eta);
    if hi <= lo {
        return 0.0;
    }
    gl32().integrate(lo, hi, |v| k.eval_scaled(v - u, h) * k.eval_scaled(v, eta))
}

/// Gauss–Legendre nodes and weights over `[−r, r]`, split at every breakpoint.
fn panel_rule(breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            out.extend(gl32().mapped(w[0], w[1]));
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let f = SyntheticDensity::correlated_gaussian([0.3, 0.3], 0.5).unwrap();
    let k = Kernel::epanechnikov();
    let k1 = k.l1_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let coarse: Vec<f64> = (0..25).map(|i| -0.9 + 1.8 * i as f64 / 24.0).collect();
    let fine: Vec<f64> = (0..61).map(|i| -0.9 + 1.8 * i as f64 / 60.0).collect();
    let mut worst_margin = f64::INFINITY;
    let mut ok = true;
    for _ in 0..20 {
        let h = [rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5)];
        let eta = [rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5)];
        // Per-axis rules for K_h, K_η and K_h ∗ K_η.
        let kernel_rule = |w: f64| -> Vec<(f64, f64)> {
            panel_rule(&[-0.5 * w, 0.0, 0.5 * w]).into_iter().map(|(u, wt)| (u, wt * k.eval_scaled(u, w))).collect()
        };
        let conv_rule = |a: f64, b: f64| -> Vec<(f64, f64)> {
            let (s, c) = (0.5 * (a + b), 0.5 * (a - b).abs());
            panel_rule(&[-s, -c, 0.0, c, s]).into_iter().map(|(u, wt)| (u, wt * convolution_at(&k, a, b, u))).collect()
        };
        let rh = [kernel_rule(h[0]), kernel_rule(h[1])];
        let re = [kernel_rule(eta[0]), kernel_rule(eta[1])];
        let rc = [conv_rule(h[0], eta[0]), conv_rule(h[1], eta[1])];
        let smooth = |rule: &[Vec<(f64, f64)>; 2], x: [f64; 2]| -> f64 {
            let mut sum = 0.0;
            for &(u, wu) in &rule[0] {
                for &(v, wv) in &rule[1] {
                    sum += wu * wv * f.eval(&[x[0] + u, x[1] + v]);
                }
            }
            sum
        };
        let mut b_h = 0.0f64;
        for &x in &fine {
            for &y in &fine {
                b_h = b_h.max((smooth(&rh, [x, y]) - f.eval(&[x, y])).abs());
            }
        }
        let mut lhs = 0.0f64;
        for &x in &coarse {
            for &y in &coarse {
                lhs = lhs.max((smooth(&rc, [x, y]) - smooth(&re, [x, y])).abs());
            }
        }
        let bound = k1 * k1 * b_h + 1e-5;
        ok &= lhs <= bound;
        worst_margin = worst_margin.min(bound - lhs);
    }
    let t = start.elapsed();
    Outcome::new(ok && within(120, t), format!("smallest slack {worst_margin:.3e}, {t:.2?}"))
}

fn two_d_options() -> SelectionOptions {
    SelectionOptions { max_level: Some(4), ..Default::default() }
}

/// Outputs of the Monte Carlo criteria, compared across thread counts.
#[derive(Serialize, PartialEq)]
struct Campaign {
    oracle_ratio: RiskReport,
    rate: RateReport,
    structure_all: RiskReport,
    structure_full: RiskReport,
}

fn campaign() -> Campaign {
    let gauss2 = SyntheticDensity::product_gaussian(&[0.2, 0.2]).unwrap();
    let all = PipelineConfig::calibrated(Kernel::epanechnikov(), enumerate_all(2).unwrap(), KAPPA_2D, 1.0)
        .with_options(two_d_options());
    let oracle_ratio = mc_risk(&gauss2, &all, 1000, 32, 1.0, SEED).unwrap();

    let gauss1 = SyntheticDensity::product_gaussian(&[0.2]).unwrap();
    let one = PipelineConfig::calibrated(Kernel::epanechnikov(), enumerate_all(1).unwrap(), KAPPA_RATE, 1.0);
    let spec = SmoothnessSpec::isotropic(2.0, Partition::trivial(1));
    let rate = rate_experiment(&gauss1, &spec, &one, &RATE_SIZES, 32, 1.0, SEED).unwrap();

    let full_family = PartitionFamily::from_members(2, vec![]).unwrap();
    let full = PipelineConfig::calibrated(Kernel::epanechnikov(), full_family, KAPPA_2D, 1.0)
        .with_options(two_d_options());
    let structure_all = mc_risk(&gauss2, &all, 2000, STRUCTURE_REPS, 1.0, SEED).unwrap();
    let structure_full = mc_risk(&gauss2, &full, 2000, STRUCTURE_REPS, 1.0, SEED).unwrap();
    Campaign { oracle_ratio, rate, structure_all, structure_full }
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(job)
}

#[derive(Serialize, Deserialize)]
struct Golden {
    criterion: u32,
    seed: u64,
    /// Name → (value, standard error or tolerance).
    values: Vec<(String, f64, f64)>,
}

fn golden_path(criterion: u32) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("criterion_{criterion}.json"))
}

/// Writes the golden file when blessing, otherwise checks each value against it.
fn golden(criterion: u32, values: Vec<(String, f64, f64)>) -> (bool, String) {
    let path = golden_path(criterion);
    if std::env::var("SUPKDE_BLESS").is_ok_and(|v| v == "1") {
        let g = Golden { criterion, seed: SEED, values };
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&g).unwrap() + "\n").unwrap();
        return (true, "golden written".into());
    }
    let Ok(text) = std::fs::read_to_string(&path) else {
        return (false, format!("missing golden file {}", path.display()));
    };
    let g: Golden = serde_json::from_str(&text).unwrap();
    for (name, value, _) in &values {
        match g.values.iter().find(|(n, _, _)| n == name) {
            Some((_, want, tol)) if (value - want).abs() <= 3.0 * tol => {}
            Some((_, want, tol)) => return (false, format!("{name} = {value} vs golden {want} ± 3×{tol}")),
            None => return (false, format!("{name} absent from golden file")),
        }
    }
    (true, "golden match".into())
}

fn criterion_6(c: &Campaign, t: Duration) -> Outcome {
    let r = &c.oracle_ratio;
    let ratios: Vec<f64> = r.records.iter().map(|x| x.ratio).collect();
    let spread = (ratios.iter().map(|v| (v - r.median_ratio).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    let (gold, note) = golden(6, vec![
        ("median_ratio".into(), r.median_ratio, spread / (ratios.len() as f64).sqrt()),
        ("risk".into(), r.risk, r.stderr),
    ]);
    Outcome::new(
        r.median_ratio <= 3.0 && gold,
        format!("median oracle ratio {:.3} (limit 3.0), risk {:.4} ± {:.4}, {note}, {t:.0?}", r.median_ratio, r.risk, r.stderr),
    )
}

fn criterion_7(c: &Campaign, t: Duration) -> Outcome {
    let r = &c.rate;
    let gap = (r.fit.slope - r.theoretical_slope).abs();
    let mut values = vec![("slope".to_string(), r.fit.slope, 0.05), ("theoretical_slope".to_string(), r.theoretical_slope, 0.0)];
    values.extend(r.points.iter().map(|p| (format!("risk_n{}", p.n), p.risk, p.stderr)));
    let (gold, note) = golden(7, values);
    // Risk should fall by a factor of four in n, up to Monte Carlo noise.
    let mut decreasing = true;
    for (a, b) in r.points.iter().zip(r.points.iter().skip(2)) {
        decreasing &= b.risk < a.risk + 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    }
    let risks: Vec<String> = r.points.iter().map(|p| format!("{:.4}", p.risk)).collect();
    Outcome::new(
        gap <= 0.15 && gold && decreasing,
        format!(
            "slope {:.3} vs {:.3} (|gap| {gap:.3} ≤ 0.15), risks {risks:?}, {note}, {t:.0?}",
            r.fit.slope, r.theoretical_slope
        ),
    )
}

fn criterion_8(c: &Campaign, t: Duration) -> Outcome {
    let (a, f) = (&c.structure_all, &c.structure_full);
    let pooled = (a.stderr.powi(2) + f.stderr.powi(2)).sqrt();
    let diff = f.risk - a.risk;
    let (gold, note) = golden(8, vec![("risk_all".into(), a.risk, a.stderr), ("risk_full".into(), f.risk, f.stderr)]);
    Outcome::new(
        diff > 2.0 * pooled && gold,
        format!(
            "all partitions {:.4} ± {:.4}, single block {:.4} ± {:.4}, difference {:.2} pooled stderr (need > 2), {note}, {t:.0?}",
            a.risk, a.stderr, f.risk, f.stderr, diff / pooled
        ),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("SUPKDE_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |c: u32| only.as_ref().is_none_or(|o| o.contains(&c));
    let mut failures = 0;
    let mut report = |c: u32, o: Outcome| {
        println!("criterion {c}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    let quick: [(u32, fn() -> Outcome); 5] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5)];
    for (c, run) in quick {
        if wanted(c) {
            report(c, run());
        }
    }
    if [6, 7, 8, 9].into_iter().any(wanted) {
        let start = Instant::now();
        let base = in_pool(1, campaign);
        let t = start.elapsed();
        report(6, criterion_6(&base, t));
        report(7, criterion_7(&base, t));
        report(8, criterion_8(&base, t));
        if wanted(9) {
            let bytes = |c: &Campaign| serde_json::to_vec(c).unwrap();
            let reference = bytes(&base);
            let mut same = Vec::new();
            for threads in [2usize, 8] {
                same.push((threads, bytes(&in_pool(threads, campaign)) == reference));
            }
            report(
                9,
                Outcome::new(
                    same.iter().all(|(_, s)| *s),
                    format!("outputs of criteria 6-8 identical to the 1-thread run: {same:?}"),
                ),
            );
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
