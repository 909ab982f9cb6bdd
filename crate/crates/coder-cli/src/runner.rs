//! Command implementations: problem assembly, solver dispatch, trace and
//! sidecar emission.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use coder::block::BlockPartition;
use coder::data::{self, Dataset, NormalizationScheme};
use coder::lipschitz::{classical_m, coder_l, coder_l_finite_sum, DEFAULT_SPECTRAL_TOL};
use coder::oracle::{Loss, SmoothOracle};
use coder::reference::{compute_reference, CertificateKind};
use coder::regularizer::{BlockPenalty, SeparableRegularizer};
use coder::solver::{
    rcdm_block_constants, run_acoder, run_ada_acoder, run_ada_vr_acoder, run_proxgrad, run_rcdm,
    run_vr_acoder_with, RunControl, RunResult, SolverError, TraceRecord,
};
use coder::CompositeProblem;

use crate::config::{LMode, ResolvedConfig, SyntheticSpec};
use crate::CommonDataArgs;
use crate::RegArgs;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Solver(String),
    ReferenceBudget(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Solver(m) => write!(f, "solver: {m}"),
            CliError::ReferenceBudget(m) => write!(f, "reference: {m}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Solver(_) => 4,
            CliError::ReferenceBudget(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Solver(e.to_string())
    }
}

/// Reference file schema shared by `reference` and `run --reference`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReferenceFile {
    pub objective: f64,
    pub certificate: Option<f64>,
    pub kind: String,
    pub converged: bool,
    pub x: Vec<f64>,
}

fn load_dataset(
    path: Option<&str>,
    synthetic: Option<&SyntheticSpec>,
    d_hint: Option<usize>,
    loss: Loss,
    normalize: NormalizationScheme,
) -> Result<(Arc<Dataset>, serde_json::Value), CliError> {
    let ds = match (path, synthetic) {
        (Some(p), None) => data::read_libsvm_path(p, d_hint)
            .map_err(|e| CliError::Data(format!("{p}: {e}")))?,
        (None, Some(spec)) => match spec.kind.as_str() {
            "classification" => coder::synth::gaussian_classification(spec.n, spec.d, spec.seed),
            "sparse" => coder::synth::sparse_classification(spec.n, spec.d, spec.density, spec.seed),
            "regression" => coder::synth::gaussian_regression(spec.n, spec.d, spec.seed),
            other => return Err(CliError::Config(format!("unknown synthetic kind `{other}`"))),
        },
        _ => return Err(CliError::Config("exactly one data source required".into())),
    };
    let ds = if loss == Loss::Logistic && !ds.labels_are_signs() {
        data::map_labels(ds).map_err(|e| CliError::Data(e.to_string()))?
    } else {
        ds
    };
    let label_mapping = ds
        .label_mapping
        .map(|m| json!({"negative": m.negative, "positive": m.positive}));
    let ds = data::normalize_features(ds, normalize);
    let meta = json!({
        "n": ds.n_samples(),
        "d": ds.dim(),
        "nnz": ds.matrix.nnz(),
        "label_mapping": label_mapping,
    });
    Ok((Arc::new(ds), meta))
}

fn build_problem(
    ds: &Arc<Dataset>,
    loss: Loss,
    block_size: usize,
    reg_kind: &str,
    lambda1: f64,
    lambda2: f64,
) -> Result<CompositeProblem, CliError> {
    let partition = BlockPartition::uniform(ds.dim(), block_size.min(ds.dim()))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let oracle = SmoothOracle::new(Arc::clone(ds), loss, partition.clone())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let penalty = match reg_kind {
        "zero" => BlockPenalty::Zero,
        "l1" => BlockPenalty::L1(lambda1),
        "ridge" => BlockPenalty::Ridge(lambda2),
        "elastic-net" => BlockPenalty::ElasticNet { l1: lambda1, l2: lambda2 },
        other => return Err(CliError::Config(format!("unknown regularizer `{other}`"))),
    };
    let reg = SeparableRegularizer::uniform(partition, penalty)
        .map_err(|e| CliError::Config(e.to_string()))?;
    CompositeProblem::new(oracle, reg).map_err(|e| CliError::Config(e.to_string()))
}

fn parse_loss(s: &str) -> Result<Loss, CliError> {
    Loss::parse(s).ok_or_else(|| CliError::Config(format!("unknown loss `{s}`")))
}

fn parse_scheme(s: &str) -> Result<NormalizationScheme, CliError> {
    NormalizationScheme::parse(s)
        .ok_or_else(|| CliError::Config(format!("unknown normalization `{s}`")))
}

/// Writes a file atomically (temp file in the same directory, then rename).
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("iter,grad_units,wall_clock_s,objective,gap\n");
    for r in trace {
        let gap = r.gap.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iter, r.grad_units, r.wall_clock_s, r.objective, gap
        );
    }
    out
}

struct SolverRun {
    result: RunResult,
    l_used: f64,
    units: f64,
}

fn dispatch(
    cfg: &ResolvedConfig,
    ds: &Arc<Dataset>,
    loss: Loss,
    l_value: f64,
    reference_objective: Option<f64>,
) -> Result<SolverRun, CliError> {
    let mut problem = build_problem(ds, loss, cfg.block_size, &cfg.reg, cfg.lambda1, cfg.lambda2)?;
    let mut control = RunControl::default();
    control.reference_objective = reference_objective;
    control.unit_budget = cfg.budget_units;
    control.wall_clock_cap = cfg.wall_cap_s.map(std::time::Duration::from_secs_f64);
    let n = problem.oracle.n_samples();
    let k_inner = cfg.k_inner.unwrap_or_else(|| ((n as f64 / 10.0).round() as usize).max(1));
    let result = match cfg.solver.as_str() {
        "acoder" => run_acoder(&mut problem, l_value, cfg.budget_iters, control)?,
        "ada-acoder" => run_ada_acoder(&mut problem, l_value, cfg.budget_iters, control)?,
        "vr-acoder" => run_vr_acoder_with(
            &mut problem,
            l_value,
            k_inner,
            cfg.budget_iters,
            cfg.seed,
            cfg.epoch1_literal_z,
            control,
        )?,
        "ada-vr-acoder" => run_ada_vr_acoder(
            &mut problem,
            l_value,
            k_inner,
            cfg.budget_iters,
            cfg.seed,
            control,
        )?,
        "proxgrad" => run_proxgrad(&mut problem, l_value, cfg.budget_iters, control)?,
        "rcdm" => {
            let consts = rcdm_block_constants(&problem, DEFAULT_SPECTRAL_TOL);
            run_rcdm(&mut problem, &consts, cfg.budget_iters, cfg.seed, control)?
        }
        other => return Err(CliError::Config(format!("unknown solver id `{other}`"))),
    };
    let units = problem.oracle.cost_units();
    Ok(SolverRun { result, l_used: l_value, units })
}

/// Auto constant appropriate for each solver family.
fn auto_constant(cfg: &ResolvedConfig, ds: &Arc<Dataset>, loss: Loss) -> Result<f64, CliError> {
    let problem = build_problem(ds, loss, cfg.block_size, &cfg.reg, cfg.lambda1, cfg.lambda2)?;
    let est = match cfg.solver.as_str() {
        "proxgrad" | "rcdm" => classical_m(&problem.oracle, DEFAULT_SPECTRAL_TOL),
        "vr-acoder" | "ada-vr-acoder" => coder_l_finite_sum(&problem.oracle, DEFAULT_SPECTRAL_TOL),
        _ => coder_l(&problem.oracle, DEFAULT_SPECTRAL_TOL),
    };
    Ok(est.safe())
}

fn worker_threads() -> usize {
    std::env::var("CODER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(1)
}

pub fn cmd_run(cfg: ResolvedConfig) -> Result<(), CliError> {
    let loss = parse_loss(&cfg.loss)?;
    let scheme = parse_scheme(&cfg.normalize)?;
    let (ds, data_meta) =
        load_dataset(cfg.data.as_deref(), cfg.synthetic.as_ref(), cfg.d_hint, loss, scheme)?;
    let reference_objective = match &cfg.reference {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
            let file: ReferenceFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
            Some(file.objective)
        }
        None => None,
    };

    let sidecar_path = Path::new(&cfg.out).with_extension("json");
    match cfg.l.clone() {
        LMode::Fixed(v) => {
            let run = dispatch(&cfg, &ds, loss, v, reference_objective)?;
            let csv_path = Path::new(&cfg.out).with_extension("csv");
            write_atomic(&csv_path, &trace_to_csv(&run.result.trace))?;
            let sidecar = sidecar_json(&cfg, &data_meta, &[&run], None, &[csv_path.clone()], None);
            write_atomic(&sidecar_path, &serde_json::to_string_pretty(&sidecar).unwrap())?;
            Ok(())
        }
        LMode::Auto => {
            let l = auto_constant(&cfg, &ds, loss)?;
            let run = dispatch(&cfg, &ds, loss, l, reference_objective)?;
            let csv_path = Path::new(&cfg.out).with_extension("csv");
            write_atomic(&csv_path, &trace_to_csv(&run.result.trace))?;
            let sidecar =
                sidecar_json(&cfg, &data_meta, &[&run], None, &[csv_path.clone()], Some(l));
            write_atomic(&sidecar_path, &serde_json::to_string_pretty(&sidecar).unwrap())?;
            Ok(())
        }
        LMode::Sweep { lo, hi } => {
            let l_auto = auto_constant(&cfg, &ds, loss)?;
            let exponents: Vec<i32> = (lo..=hi).collect();
            let runs: Vec<Result<SolverRun, CliError>> = {
                let threads = worker_threads().min(exponents.len().max(1));
                let next = AtomicUsize::new(0);
                let mut collected: Vec<(usize, Result<SolverRun, CliError>)> =
                    std::thread::scope(|scope| {
                        let handles: Vec<_> = (0..threads)
                            .map(|_| {
                                scope.spawn(|| {
                                    let mut local = Vec::new();
                                    loop {
                                        let idx = next.fetch_add(1, Ordering::Relaxed);
                                        if idx >= exponents.len() {
                                            break local;
                                        }
                                        let l = l_auto * 2.0f64.powi(exponents[idx]);
                                        let out = dispatch(&cfg, &ds, loss, l, reference_objective);
                                        local.push((idx, out));
                                    }
                                })
                            })
                            .collect();
                        handles
                            .into_iter()
                            .flat_map(|h| h.join().expect("sweep worker panicked"))
                            .collect()
                    });
                collected.sort_by_key(|(idx, _)| *idx);
                collected.into_iter().map(|(_, out)| out).collect()
            };
            let mut kept: Vec<SolverRun> = Vec::new();
            let mut csv_paths = Vec::new();
            for (exp, run) in exponents.iter().zip(runs) {
                let run = run?;
                let suffix = if *exp >= 0 {
                    format!("sweep_p{exp}")
                } else {
                    format!("sweep_m{}", -exp)
                };
                let csv_path = Path::new(&format!("{}-{suffix}", cfg.out)).with_extension("csv");
                write_atomic(&csv_path, &trace_to_csv(&run.result.trace))?;
                csv_paths.push(csv_path);
                kept.push(run);
            }
            let best = kept
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let ga = final_gap_or_objective(&a.result);
                    let gb = final_gap_or_objective(&b.result);
                    ga.partial_cmp(&gb).unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|(i, _)| i);
            let refs: Vec<&SolverRun> = kept.iter().collect();
            let sidecar = sidecar_json(&cfg, &data_meta, &refs, best, &csv_paths, Some(l_auto));
            write_atomic(&sidecar_path, &serde_json::to_string_pretty(&sidecar).unwrap())?;
            Ok(())
        }
    }
}

fn final_gap_or_objective(result: &RunResult) -> f64 {
    result
        .trace
        .last()
        .map(|r| r.gap.unwrap_or(r.objective))
        .unwrap_or(f64::INFINITY)
}

fn sidecar_json(
    cfg: &ResolvedConfig,
    data_meta: &serde_json::Value,
    runs: &[&SolverRun],
    best: Option<usize>,
    csv_paths: &[std::path::PathBuf],
    estimated_constant: Option<f64>,
) -> serde_json::Value {
    let runs_json: Vec<serde_json::Value> = runs
        .iter()
        .zip(csv_paths)
        .map(|(run, path)| {
            let sched = &run.result.schedule;
            json!({
                "csv": path.to_string_lossy(),
                "l": run.l_used,
                "iterations": run.result.iterations,
                "converged": run.result.converged,
                "grad_units": run.units,
                "final_objective": run.result.trace.last().map(|r| r.objective),
                "final_gap": run.result.trace.last().and_then(|r| r.gap),
                "schedule": {
                    "count": sched.len(),
                    "first_a": sched.first().map(|p| p.a),
                    "final_a": sched.last().map(|p| p.a),
                    "final_big_a": sched.last().map(|p| p.big_a),
                    "accepted_l_max": sched.iter().map(|p| p.l).fold(f64::NEG_INFINITY, f64::max),
                },
            })
        })
        .collect();
    json!({
        "config": cfg,
        "data": data_meta,
        "estimated_constant": estimated_constant,
        "runs": runs_json,
        "best_run": best,
    })
}

pub fn cmd_reference(
    data_args: CommonDataArgs,
    reg_args: RegArgs,
    tol: f64,
    budget_units: f64,
    out: String,
) -> Result<(), CliError> {
    let loss = parse_loss(data_args.loss.as_deref().unwrap_or("logistic"))?;
    let scheme = parse_scheme(data_args.normalize.as_deref().unwrap_or("col-max-abs"))?;
    let (ds, _) = load_dataset(data_args.data.as_deref(), None, data_args.d_hint, loss, scheme)?;
    let reg_kind = reg_args.reg.as_deref().unwrap_or("zero");
    let mut problem = build_problem(
        &ds,
        loss,
        1,
        reg_kind,
        reg_args.lambda1.unwrap_or(0.0),
        reg_args.lambda2.unwrap_or(0.0),
    )?;
    let solution = compute_reference(&mut problem, tol, budget_units)?;
    let file = ReferenceFile {
        objective: solution.objective,
        certificate: solution.certificate,
        kind: match solution.kind {
            CertificateKind::StrongConvexity => "strong-convexity".into(),
            CertificateKind::FixedPoint => "fixed-point".into(),
        },
        converged: solution.converged,
        x: solution.x.clone(),
    };
    write_atomic(
        Path::new(&out),
        &serde_json::to_string_pretty(&file).unwrap(),
    )?;
    if !solution.converged {
        return Err(CliError::ReferenceBudget(format!(
            "budget exhausted before tolerance {tol} (best stored in {out}; certificate {:?})",
            solution.certificate
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_lipschitz(
    data_args: CommonDataArgs,
    block_size: Option<usize>,
    sweep_n: Option<String>,
    sweep_d: Option<String>,
    n: Option<usize>,
    d: Option<usize>,
    seed: u64,
    out: String,
) -> Result<(), CliError> {
    let loss = parse_loss(data_args.loss.as_deref().unwrap_or("logistic"))?;
    let scheme = parse_scheme(data_args.normalize.as_deref().unwrap_or("col-max-abs"))?;
    let block_size = block_size.unwrap_or(1);

    let report_for = |ds: &Arc<Dataset>| -> Result<serde_json::Value, CliError> {
        let partition = BlockPartition::uniform(ds.dim(), block_size.min(ds.dim()))
            .map_err(|e| CliError::Config(e.to_string()))?;
        let oracle = SmoothOracle::new(Arc::clone(ds), loss, partition.clone())
            .map_err(|e| CliError::Data(e.to_string()))?;
        let m_est = classical_m(&oracle, DEFAULT_SPECTRAL_TOL);
        let l_est = coder_l(&oracle, DEFAULT_SPECTRAL_TOL);
        let m_blocks = partition.num_blocks();
        let worst_case = 2.0 * (m_blocks as f64).sqrt() * m_est.value;
        Ok(json!({
            "n": ds.n_samples(),
            "d": ds.dim(),
            "m": m_blocks,
            "M": m_est.value,
            "L": l_est.value,
            "ratio_to_worst_case": if worst_case > 0.0 { l_est.value / worst_case } else { 0.0 },
            "normalization": scheme.name(),
            "spectral_converged": m_est.converged && l_est.converged,
        }))
    };

    let parse_sizes = |spec: &str| -> Result<Vec<usize>, CliError> {
        spec.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("bad size `{t}`")))
            })
            .collect()
    };

    match (&data_args.data, &sweep_n, &sweep_d) {
        (Some(path), None, None) => {
            let (ds, _) = load_dataset(Some(path), None, data_args.d_hint, loss, scheme)?;
            let report = report_for(&ds)?;
            println!("{report:#}");
            write_atomic(Path::new(&out), &serde_json::to_string_pretty(&report).unwrap())?;
            Ok(())
        }
        (None, sweep_n, sweep_d) => {
            // synthetic single instance or sweep; emits plot-ready CSV
            let mut rows = Vec::new();
            let instances: Vec<(usize, usize)> = match (sweep_n, sweep_d) {
                (Some(spec), None) => {
                    let d = d.ok_or(CliError::Config("--d required for an n-sweep".into()))?;
                    parse_sizes(spec)?.into_iter().map(|n| (n, d)).collect()
                }
                (None, Some(spec)) => {
                    let n = n.ok_or(CliError::Config("--n required for a d-sweep".into()))?;
                    parse_sizes(spec)?.into_iter().map(|d| (n, d)).collect()
                }
                (None, None) => {
                    let n = n.ok_or(CliError::Config("--n and --d required".into()))?;
                    let d = d.ok_or(CliError::Config("--n and --d required".into()))?;
                    vec![(n, d)]
                }
                _ => return Err(CliError::Config("sweep-n and sweep-d are exclusive".into())),
            };
            for (ni, di) in instances {
                let ds = Arc::new(data::normalize_features(
                    coder::synth::gaussian_classification(ni, di, seed),
                    scheme,
                ));
                let report = report_for(&ds)?;
                println!("{report:#}");
                rows.push(report);
            }
            let mut csv = String::from("n,d,m,M,L,ratio_to_worst_case,normalization\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    r["n"], r["d"], r["m"], r["M"], r["L"], r["ratio_to_worst_case"],
                    r["normalization"].as_str().unwrap_or(""),
                );
            }
            write_atomic(Path::new(&out), &csv)?;
            Ok(())
        }
        _ => Err(CliError::Config(
            "pass either --data or a synthetic spec (--n/--d, optionally sweeps)".into(),
        )),
    }
}
