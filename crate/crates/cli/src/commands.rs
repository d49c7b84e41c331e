use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use supkde::constants::{self, ConstantsContext, TAU_LOG_BASE};
use supkde::data::Dataset;
use supkde::estimators::{BandwidthVector, Fitter, MAX_TABLE_NODES};
use supkde::grid::EvaluationGrid;
use supkde::harness::mc::{mc_risk, rate_experiment, structure_recovery, PipelineConfig};
use supkde::harness::{SmoothnessSpec, SyntheticDensity};
use supkde::kernels::{self, ConvolutionCache, Kernel, KernelFile};
use supkde::partitions::{enumerate_all, restricted_family, Partition, PartitionFamily};
use supkde::selection::{select, SelectionOptions, SelectionResult};
use supkde::{Error, Result};

use crate::args::*;
use crate::output::{csv_document, Envelope, Staged};

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("not a number: {v:?}"))))
        .collect()
}

pub fn resolve_kernel(spec: &str) -> Result<Kernel> {
    match spec {
        "default" => Ok(Kernel::epanechnikov()),
        "box" => Ok(Kernel::box_kernel()),
        _ => {
            if let Some(order) = spec.strip_prefix("poly:") {
                let order = order.parse::<u32>().map_err(|_| bad(format!("bad moment order in {spec:?}")))?;
                kernels::build_polynomial_kernel(order)
            } else {
                Kernel::from_json(&std::fs::read_to_string(spec)?)
            }
        }
    }
}

pub fn resolve_family(spec: &str, dim: usize) -> Result<PartitionFamily> {
    match spec {
        "auto" => PartitionFamily::default_for(dim),
        "all" => enumerate_all(dim),
        "full" => PartitionFamily::from_members(dim, vec![]),
        _ => {
            if let Some(cap) = spec.strip_prefix("capped:") {
                let cap = cap.parse::<usize>().map_err(|_| bad(format!("bad block cap in {spec:?}")))?;
                restricted_family(dim, cap, &[])
            } else {
                let members: Vec<Partition> = serde_json::from_str(&std::fs::read_to_string(spec)?)?;
                PartitionFamily::from_members(dim, members)
            }
        }
    }
}

pub fn resolve_density(spec: &str) -> Result<SyntheticDensity> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "gaussian" => SyntheticDensity::product_gaussian(&parse_list(rest)?),
        "correlated" => match parse_list(rest)?.as_slice() {
            [s1, s2, rho] => SyntheticDensity::correlated_gaussian([*s1, *s2], *rho),
            _ => Err(bad("correlated density needs σ₁,σ₂,ρ")),
        },
        "bumps" => match parse_list(rest)?.as_slice() {
            &[sigma, dim, amplitude, scale, count] => {
                SyntheticDensity::gaussian_with_bumps(sigma, dim as usize, amplitude, scale, count as usize)
            }
            _ => Err(bad("bump density needs σ,dim,amplitude,scale,count")),
        },
        _ => {
            let f: SyntheticDensity = serde_json::from_str(&std::fs::read_to_string(spec)?)?;
            SyntheticDensity::new(f.name, f.dim, f.factors)
        }
    }
}

fn parse_partition(text: &str) -> Result<Partition> {
    Ok(serde_json::from_str(text)?)
}

fn context(p: &PenaltyArgs, dim: usize, kernel: &Kernel) -> Result<ConstantsContext> {
    let ctx = match p.mode {
        ModeArg::Theoretical => {
            if p.kappa.is_some() {
                return Err(bad("--kappa applies to calibrated mode only"));
            }
            ConstantsContext::theoretical(dim, p.q, kernel)
        }
        ModeArg::Calibrated => {
            let mut c = ConstantsContext::calibrated(dim, kernel, p.kappa.unwrap_or(0.5), p.a_star_floor);
            c.q = p.q;
            c
        }
    };
    ctx.validate()?;
    Ok(ctx)
}

fn options(s: &SelectionArgs) -> SelectionOptions {
    SelectionOptions { max_level: s.max_level, grid_resolution: s.grid_res, budget: s.budget }
}

fn pipeline(
    dim: usize,
    kernel: &KernelArgs,
    penalty: &PenaltyArgs,
    sel: &SelectionArgs,
) -> Result<PipelineConfig> {
    let kernel = resolve_kernel(&kernel.kernel)?;
    let constants = context(penalty, dim, &kernel)?;
    if sel.profile_nodes < kernels::MIN_PROFILE_NODES {
        return Err(bad(format!("profile nodes must be at least {}", kernels::MIN_PROFILE_NODES)));
    }
    Ok(PipelineConfig {
        family: resolve_family(&sel.family, dim)?,
        kernel,
        constants,
        options: options(sel),
        profile_nodes: sel.profile_nodes,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    kernel: KernelFile,
    tau_log_base: &'static str,
    family: &'a [Partition],
    selection: &'a SelectionResult,
}

pub fn run_select(cli: &Cli, a: &SelectArgs, staged: &mut Staged) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let cfg = pipeline(data.d(), &a.kernel, &a.penalty, &a.selection)?;
    let conv = cfg.convolution_cache();
    let sel = select(&data, &conv, &cfg.constants, &cfg.family, &cfg.options)?;
    let out = SelectOutput {
        kernel: cfg.kernel.to_file(),
        tau_log_base: TAU_LOG_BASE,
        family: cfg.family.members(),
        selection: &sel.result,
    };
    staged.primary(a.output.out.as_deref(), Envelope::new(cli, &out).to_bytes()?);
    if let Some(path) = &a.output.csv {
        let rows: Vec<Vec<String>> = sel
            .result
            .table
            .iter()
            .map(|e| {
                vec![
                    join(e.h.as_slice()),
                    e.partition.to_string(),
                    e.delta_hat.to_string(),
                    e.a_hat.to_string(),
                    e.penalty.to_string(),
                    e.criterion.to_string(),
                ]
            })
            .collect();
        staged.file(path, csv_document(cli, &["h", "partition", "delta_hat", "a_hat", "penalty", "criterion"], &rows)?);
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    kernel: KernelFile,
    h: BandwidthVector,
    partition: Partition,
    grid_resolution: f64,
    nodes_per_axis: Vec<usize>,
    origin: Vec<f64>,
    sup: f64,
    /// Riemann mass of each block table.
    block_mass: Vec<f64>,
}

fn selection_from_file(path: &Path) -> Result<(BandwidthVector, Partition, f64)> {
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let sel = doc
        .pointer("/result/selection")
        .ok_or_else(|| bad(format!("{} is not a select output", path.display())))?;
    let h: BandwidthVector = serde_json::from_value(sel["h_hat"].clone())?;
    let p: Partition = serde_json::from_value(sel["p_hat"].clone())?;
    let res = sel["grid"]["resolution"].as_f64().ok_or_else(|| bad("selection output lacks a grid resolution"))?;
    Ok((h, p, res))
}

pub fn run_fit(cli: &Cli, a: &FitArgs, staged: &mut Staged) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let kernel = resolve_kernel(&a.kernel.kernel)?;
    let (h, p, default_res) = match &a.selection {
        Some(path) => selection_from_file(path)?,
        None => {
            let h = BandwidthVector::new(a.h.clone().ok_or_else(|| bad("give --h or --selection"))?)?;
            let p = match &a.partition {
                Some(text) => parse_partition(text)?,
                None => Partition::trivial(data.d()),
            };
            let res = h.min() / 4.0;
            (h, p, res)
        }
    };
    if h.dim() != data.d() || p.dim() != data.d() {
        return Err(Error::DimensionMismatch { left: data.d(), right: h.dim().max(p.dim()) });
    }
    let res = a.grid_res.unwrap_or(default_res);
    let grid = Arc::new(EvaluationGrid::covering(&data, h.max(), res)?);
    if grid.total_nodes() > MAX_TABLE_NODES {
        return Err(Error::TableTooLarge { nodes: grid.total_nodes(), limit: MAX_TABLE_NODES });
    }
    let conv = ConvolutionCache::new(Arc::new(kernel.clone()), kernels::MIN_PROFILE_NODES);
    let fitter = Fitter::new(&data, Arc::clone(&grid), &conv)?;
    let est = fitter.plain(&h, &p)?;
    let mut sup = 0.0f64;
    let mut rows = Vec::new();
    let want_csv = a.output.csv.is_some();
    est.for_each_node(|x, v| {
        sup = sup.max(v.abs());
        if want_csv {
            let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
            row.push(v.to_string());
            rows.push(row);
        }
    });
    let out = FitOutput {
        kernel: kernel.to_file(),
        block_mass: est.tables().iter().map(|t| t.riemann_mass(&grid)).collect(),
        h,
        partition: p,
        grid_resolution: res,
        nodes_per_axis: grid.axes().iter().map(|ax| ax.len).collect(),
        origin: grid.axes().iter().map(|ax| ax.origin).collect(),
        sup,
    };
    staged.primary(a.output.out.as_deref(), Envelope::new(cli, &out).to_bytes()?);
    if let Some(path) = &a.output.csv {
        let names: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).chain(["value".to_string()]).collect();
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        staged.file(path, csv_document(cli, &header, &rows)?);
    }
    Ok(())
}

pub fn run_constants(cli: &Cli, a: &ConstantsArgs, staged: &mut Staged) -> Result<()> {
    let kernel = resolve_kernel(&a.kernel.kernel)?;
    if !(1..=12).contains(&a.s) {
        return Err(bad(format!("block size {} outside 1..=12", a.s)));
    }
    if a.q.is_nan() || a.q < 1.0 {
        return Err(bad(format!("q = {} must be ≥ 1", a.q)));
    }
    let report = constants::report(a.q, a.s, kernel.sup_norm(), kernel.lipschitz())?;
    staged.primary(a.out.as_deref(), Envelope::new(cli, &report).to_bytes()?);
    Ok(())
}

#[derive(Serialize)]
struct KernelCheckOutput {
    kernel: KernelFile,
    report: kernels::KernelReport,
}

pub fn run_kernel_check(cli: &Cli, a: &KernelCheckArgs, staged: &mut Staged) -> Result<()> {
    let kernel = resolve_kernel(&a.kernel.kernel)?;
    let out = KernelCheckOutput { kernel: kernel.to_file(), report: kernels::check_assumptions(&kernel) };
    staged.primary(a.out.as_deref(), Envelope::new(cli, &out).to_bytes()?);
    if let Some(path) = &a.export {
        let mut text = kernel.to_json()?.into_bytes();
        text.push(b'\n');
        staged.file(path, text);
    }
    Ok(())
}

fn replicate_rows(records: &[supkde::harness::ReplicateRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.replicate.to_string(),
                join(r.h_hat.as_slice()),
                r.p_hat.to_string(),
                r.error.to_string(),
                r.best_error.to_string(),
                r.ratio.to_string(),
                r.criterion.to_string(),
            ]
        })
        .collect()
}

const REPLICATE_HEADER: [&str; 7] = ["replicate", "h_hat", "p_hat", "error", "best_error", "ratio", "criterion"];

pub fn run_simulate(cli: &Cli, a: &SimulateArgs, staged: &mut Staged) -> Result<()> {
    let f = resolve_density(&a.sim.density)?;
    let cfg = pipeline(f.dim(), &a.kernel, &a.penalty, &a.selection)?;
    let report = mc_risk(&f, &cfg, a.n, a.sim.reps, a.penalty.q, a.sim.seed)?;
    staged.primary(a.output.out.as_deref(), Envelope::new(cli, &report).to_bytes()?);
    if let Some(path) = &a.output.csv {
        staged.file(path, csv_document(cli, &REPLICATE_HEADER, &replicate_rows(&report.records))?);
    }
    Ok(())
}

fn broadcast<T: Clone>(v: &[T], d: usize, what: &str) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); d]),
        k if k == d => Ok(v.to_vec()),
        k => Err(bad(format!("{what}: expected 1 or {d} values, got {k}"))),
    }
}

pub fn run_rates(cli: &Cli, a: &RatesArgs, staged: &mut Staged) -> Result<()> {
    let f = resolve_density(&a.sim.density)?;
    let d = f.dim();
    let cfg = pipeline(d, &a.kernel, &a.penalty, &a.selection)?;
    let p = broadcast(&a.p, d, "--p")?
        .iter()
        .map(|s| match s.trim() {
            "inf" | "∞" => Ok(None),
            v => v.parse::<f64>().map(Some).map_err(|_| bad(format!("bad --p value {v:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let partition = match &a.structure {
        Some(text) => parse_partition(text)?,
        None => f.true_partition(),
    };
    let spec = SmoothnessSpec { beta: broadcast(&a.beta, d, "--beta")?, p, l_const: vec![1.0; d], partition };
    let report = rate_experiment(&f, &spec, &cfg, &a.n_list, a.sim.reps, a.penalty.q, a.sim.seed)?;
    staged.primary(a.output.out.as_deref(), Envelope::new(cli, &report).to_bytes()?);
    if let Some(path) = &a.output.csv {
        let rows: Vec<Vec<String>> = report
            .points
            .iter()
            .map(|pt| {
                let x = (pt.n as f64 / (pt.n as f64).ln()).ln();
                vec![
                    pt.n.to_string(),
                    pt.risk.to_string(),
                    pt.stderr.to_string(),
                    pt.median_ratio.to_string(),
                    x.to_string(),
                    pt.risk.ln().to_string(),
                ]
            })
            .collect();
        staged.file(
            path,
            csv_document(cli, &["n", "risk", "stderr", "median_ratio", "log_n_over_log_n", "log_risk"], &rows)?,
        );
    }
    Ok(())
}

pub fn run_structure(cli: &Cli, a: &StructureArgs, staged: &mut Staged) -> Result<()> {
    let f = resolve_density(&a.sim.density)?;
    let cfg = pipeline(f.dim(), &a.kernel, &a.penalty, &a.selection)?;
    let report = structure_recovery(&f, &cfg, a.n, a.sim.reps, a.sim.seed)?;
    staged.primary(a.output.out.as_deref(), Envelope::new(cli, &report).to_bytes()?);
    if let Some(path) = &a.output.csv {
        staged.file(path, csv_document(cli, &REPLICATE_HEADER, &replicate_rows(&report.records))?);
    }
    Ok(())
}

/// Reads the configuration recorded in an earlier output; output paths come from the rerun flags.
pub fn rerun_config(a: &RerunArgs) -> Result<Cli> {
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a.from)?)?;
    let config = doc.get("config").ok_or_else(|| bad(format!("{} has no recorded config", a.from.display())))?;
    let mut cli: Cli = serde_json::from_value(config.clone())?;
    match &mut cli.command {
        Command::Select(c) => c.output = OutputArgs { out: a.out.clone(), csv: a.csv.clone() },
        Command::Fit(c) => c.output = OutputArgs { out: a.out.clone(), csv: a.csv.clone() },
        Command::Simulate(c) => c.output = OutputArgs { out: a.out.clone(), csv: a.csv.clone() },
        Command::Rates(c) => c.output = OutputArgs { out: a.out.clone(), csv: a.csv.clone() },
        Command::Structure(c) => c.output = OutputArgs { out: a.out.clone(), csv: a.csv.clone() },
        Command::Constants(c) => c.out = a.out.clone(),
        Command::KernelCheck(c) => c.out = a.out.clone(),
        Command::Rerun(_) => return Err(bad("recorded config is itself a rerun")),
    }
    Ok(cli)
}
