//! The four commands. Each writes its artifacts under the configured output
//! directory; every artifact carries the resolved config and the version.

use std::fs;
use std::io::Write;
use std::path::Path;

use isleforge::cumulant::{cumulant_residual, empirical_cumulant, solve_cumulant_fossil, solve_cumulant_regrow, CumulantEstimate};
use isleforge::empirical::{fmt_float, replicate_rng, run_summaries, simulate_forest, with_pool, ForestConfig, ReplicateSummary};
use isleforge::isles::Model;
use isleforge::limits::{
    sample_pc, EtaFossilSampler, EtaRegrowSampler, LimitParams, PcConditional, PcMethod, PcPool, PcSample,
};
use isleforge::TestFunction;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::acceptance::{self, Fault};
use crate::config::{ConfigError, PcMethodName, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Replicate indices at and above this offset feed the (P, C) pool, so pool
/// draws never share a stream with η draws.
const POOL_STREAM: u64 = 1 << 62;

/// Integrals above this are treated as saturated by the cumulant estimators:
/// `e^{-50}` is far below their resolution.
const SATURATION: f64 = 50.0;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("budget exhausted: {0}")]
    Budget(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Io(_) => 1,
            CommandError::Budget(_) => 3,
        }
    }
}

/// What a command produced, for the exit code.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub warnings: Vec<String>,
    pub budget_exhausted: bool,
    pub acceptance_failed: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.acceptance_failed {
            2
        } else if self.budget_exhausted {
            3
        } else {
            0
        }
    }
}

fn header_lines(cfg: &RunConfig) -> String {
    format!(
        "# isleforge {VERSION}\n# config: {}\n",
        serde_json::to_string(cfg).expect("config serializes")
    )
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)
}

fn forest_config(cfg: &RunConfig, n: u64) -> ForestConfig {
    let mut fc = ForestConfig::new(n, cfg.c, cfg.model, cfg.offspring_law());
    fc.roots = cfg.roots;
    fc.step_cap = cfg.step_cap;
    fc.test_functions = cfg.test_functions().expect("validated");
    fc
}

fn estimate_json(e: &CumulantEstimate) -> Value {
    json!({"value": e.value, "stderr": e.stderr, "n_samples": e.n_samples})
}

/// Cumulant estimates of `κ_N` from replicate integrals; a replicate of `k`
/// roots estimates `(k/N) κ_N`.
fn forest_cumulants(sums: &[ReplicateSummary], fns: usize, n: u64, roots: u64) -> Vec<Option<CumulantEstimate>> {
    let ok: Vec<&ReplicateSummary> = sums.iter().filter(|s| !s.overflow).collect();
    let scale = n as f64 / roots as f64;
    (0..fns)
        .map(|i| {
            let v: Vec<f64> = ok.iter().map(|s| s.integrals[i]).collect();
            empirical_cumulant(&v, None).ok().map(|e| CumulantEstimate {
                value: e.value * scale,
                stderr: e.stderr * scale,
                n_samples: e.n_samples,
            })
        })
        .collect()
}

/// Replicate CSV and summary JSON of `simulate`, as bytes.
pub fn simulate_artifacts(cfg: &RunConfig) -> (Vec<u8>, Value, Outcome) {
    let mut csv = header_lines(cfg);
    csv.push_str("replicate,N,r,model,fn_id,integral,islands,fertile,overflow,steps\n");
    let mut results = Vec::new();
    let mut outcome = Outcome::default();
    let fns = cfg.test_functions.len();
    for n in cfg.n.values() {
        let fc = forest_config(cfg, n);
        let sums = run_summaries(&fc, cfg.master_seed, cfg.replicates, cfg.workers());
        for s in &sums {
            for (fn_id, v) in s.integrals.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    s.replicate_index,
                    s.n,
                    s.r,
                    s.model,
                    fn_id,
                    fmt_float(*v),
                    s.islands,
                    s.fertile,
                    s.overflow,
                    s.steps
                ));
            }
        }
        let overflowed = sums.iter().filter(|s| s.overflow).count();
        if overflowed > 0 {
            outcome.budget_exhausted = true;
            outcome.warnings.push(format!(
                "N={n}: {overflowed} of {} replicates exceeded the step cap {}; their rows are partial and excluded from the estimates",
                cfg.replicates, cfg.step_cap
            ));
        }
        let kappa: Vec<Value> = forest_cumulants(&sums, fns, n, fc.roots())
            .iter()
            .enumerate()
            .map(|(i, e)| json!({"fn_id": i, "kappa_n": e.as_ref().map(estimate_json)}))
            .collect();
        results.push(json!({
            "n": n,
            "r": fc.r(),
            "roots": fc.roots(),
            "replicates": cfg.replicates,
            "overflowed": overflowed,
            "islands_mean": sums.iter().map(|s| s.islands as f64).sum::<f64>() / sums.len() as f64,
            "kappa": kappa,
        }));
    }
    let summary = json!({
        "version": VERSION,
        "command": "simulate",
        "config": cfg,
        "results": results,
        "warnings": outcome.warnings,
    });
    (csv.into_bytes(), summary, outcome)
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let (csv, summary, outcome) = simulate_artifacts(cfg);
    write_file(&cfg.out_dir, "simulate.csv", &csv)?;
    write_file(&cfg.out_dir, "simulate.json", pretty(&summary).as_bytes())?;
    if let Some(i) = cfg.dump_atoms {
        let n = cfg.n.values()[0];
        let mut fc = forest_config(cfg, n);
        fc.keep_atoms = true;
        let out = simulate_forest(&fc, cfg.master_seed, i);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(header_lines(cfg).as_bytes());
        out.measure.expect("atoms kept").write_csv(&mut bytes)?;
        write_file(&cfg.out_dir, "atoms.csv", &bytes)?;
    }
    Ok(outcome)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

pub fn limit_params(cfg: &RunConfig) -> LimitParams<f64> {
    LimitParams::new(cfg.c, cfg.offspring_law().sigma2())
}

fn pc_method(cfg: &RunConfig) -> PcMethod {
    match cfg.limit.pc_method {
        PcMethodName::Series => PcMethod::Series,
        PcMethodName::WalkApprox => PcMethod::WalkApprox {
            n_ref: cfg.limit.n_ref,
            law: cfg.offspring_law(),
        },
        PcMethodName::Excursion => PcMethod::Excursion { dt: cfg.limit.dt },
    }
}

/// `size` draws of (P, C), on streams disjoint from the η streams.
pub fn generate_pc_pool(cfg: &RunConfig, size: u64) -> Result<Vec<PcSample>, CommandError> {
    let params = limit_params(cfg);
    let method = pc_method(cfg);
    let draws: Vec<Result<PcSample, _>> = with_pool(cfg.workers(), || {
        (0..size)
            .into_par_iter()
            .map(|k| {
                let mut rng = replicate_rng(cfg.master_seed, POOL_STREAM + k);
                sample_pc(&params, &method, &mut rng)
            })
            .collect()
    });
    draws
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| CommandError::Budget(e.to_string()))
}

fn read_pc_pool(path: &Path) -> Result<Vec<PcSample>, CommandError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, why: &str| {
        CommandError::Config(ConfigError::Invalid {
            field: "cumulant.pc_pool_path".into(),
            message: format!("{}:{line}: {why}", path.display()),
        })
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('p') {
            continue;
        }
        let mut it = line.split(',');
        let p: f64 = it.next().and_then(|x| x.trim().parse().ok()).ok_or_else(|| bad(i + 1, "expected p,c"))?;
        let c: f64 = it.next().and_then(|x| x.trim().parse().ok()).ok_or_else(|| bad(i + 1, "expected p,c"))?;
        if !(p >= 0.0 && c >= 0.0) {
            return Err(bad(i + 1, "p and c must be nonnegative"));
        }
        out.push(PcSample { p, c });
    }
    if out.is_empty() {
        return Err(bad(0, "no (p, c) rows"));
    }
    Ok(out)
}

fn conditional(cfg: &RunConfig) -> Result<(PcConditional, Value), CommandError> {
    match cfg.limit.pc_method {
        PcMethodName::Series => Ok((PcConditional::Series, json!({"source": "series"}))),
        _ => {
            let pool = generate_pc_pool(cfg, cfg.limit.pc_pool)?;
            Ok((
                PcConditional::Pool(PcPool::new(&pool, cfg.c)),
                json!({"source": cfg.limit.pc_method, "size": pool.len(), "n_ref": cfg.limit.n_ref}),
            ))
        }
    }
}

struct LimitRow {
    replicate: u64,
    integrals: Option<Vec<f64>>,
    atoms: usize,
}

/// Limit-sample CSV and summary, as bytes.
pub fn limit_sample_artifacts(cfg: &RunConfig) -> Result<(Vec<u8>, Value, Outcome), CommandError> {
    let params = limit_params(cfg);
    let fns = cfg.test_functions()?;
    let (cond, pool_note) = match cfg.model {
        Model::Fossil => (PcConditional::Series, Value::Null),
        Model::Regrow => conditional(cfg)?,
    };
    let fossil = EtaFossilSampler::new(params, cfg.support_min);
    let regrow = EtaRegrowSampler::new(params, cfg.support_min, cond);
    let rows: Vec<LimitRow> = with_pool(cfg.workers(), || {
        (0..cfg.limit.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(cfg.master_seed, i);
                let eta = match cfg.model {
                    Model::Fossil => fossil.sample(&mut rng),
                    Model::Regrow => regrow.sample(&mut rng),
                };
                match eta {
                    Ok(m) => LimitRow {
                        replicate: i,
                        integrals: Some(fns.iter().map(|f| m.integrate(f)).collect()),
                        atoms: m.len(),
                    },
                    Err(_) => LimitRow {
                        replicate: i,
                        integrals: None,
                        atoms: 0,
                    },
                }
            })
            .collect()
    });
    let mut csv = header_lines(cfg);
    csv.push_str("source,replicate,N,r,model,fn_id,integral,islands,fertile,overflow,steps\n");
    for row in &rows {
        for fn_id in 0..fns.len() {
            let integral = row.integrals.as_ref().map_or(String::new(), |v| fmt_float(v[fn_id]));
            csv.push_str(&format!(
                "limit,{},,,{},{},{},{},,{},0\n",
                row.replicate,
                cfg.model,
                fn_id,
                integral,
                row.atoms,
                row.integrals.is_none()
            ));
        }
    }
    let mut outcome = Outcome::default();
    let overflowed = rows.iter().filter(|r| r.integrals.is_none()).count();
    if overflowed > 0 {
        outcome.budget_exhausted = true;
        outcome.warnings.push(format!(
            "{overflowed} of {} fertility trees exceeded {} nodes; their rows have no integral",
            rows.len(),
            isleforge::limits::FERTILITY_TREE_BUDGET
        ));
    }
    let kappa: Vec<Value> = (0..fns.len())
        .map(|i| {
            let v: Vec<f64> = rows.iter().filter_map(|r| r.integrals.as_ref().map(|x| x[i])).collect();
            json!({"fn_id": i, "kappa": empirical_cumulant(&v, None).ok().as_ref().map(estimate_json)})
        })
        .collect();
    let summary = json!({
        "version": VERSION,
        "command": "limit-sample",
        "config": cfg,
        "params": {"c": params.c, "sigma2": params.sigma2, "lambda": params.lambda(), "lambda2": params.lambda2()},
        "pc_pool": pool_note,
        "kappa": kappa,
        "warnings": outcome.warnings,
    });
    Ok((csv.into_bytes(), summary, outcome))
}

pub fn limit_sample(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let (csv, summary, outcome) = limit_sample_artifacts(cfg)?;
    write_file(&cfg.out_dir, "limit_sample.csv", &csv)?;
    write_file(&cfg.out_dir, "limit_sample.json", pretty(&summary).as_bytes())?;
    if let Some(i) = cfg.limit.dump_atoms {
        let params = limit_params(cfg);
        let mut rng = replicate_rng(cfg.master_seed, i);
        let eta = match cfg.model {
            Model::Fossil => EtaFossilSampler::new(params, cfg.support_min).sample(&mut rng),
            Model::Regrow => EtaRegrowSampler::new(params, cfg.support_min, conditional(cfg)?.0).sample(&mut rng),
        };
        let eta = eta.map_err(|e| CommandError::Budget(e.to_string()))?;
        let mut bytes = header_lines(cfg).into_bytes();
        eta.write_csv(&mut bytes)?;
        write_file(&cfg.out_dir, "limit_atoms.csv", &bytes)?;
    }
    Ok(outcome)
}

/// Solver, empirical and η estimates of the cumulant for each test function.
pub fn cumulant_report(cfg: &RunConfig) -> Result<(Value, Outcome), CommandError> {
    let params = limit_params(cfg);
    let fns: Vec<TestFunction> = cfg.test_functions()?;
    let tol = cfg.cumulant.tol;
    let mut outcome = Outcome::default();

    let (pool, pool_note): (Vec<(f64, f64)>, Value) = match cfg.model {
        Model::Fossil => (Vec::new(), Value::Null),
        Model::Regrow => {
            let (samples, note) = match &cfg.cumulant.pc_pool_path {
                Some(p) => {
                    let s = read_pc_pool(p)?;
                    let note = json!({"source": "file", "path": p, "size": s.len()});
                    (s, note)
                }
                None => {
                    let s = generate_pc_pool(cfg, cfg.limit.pc_pool)?;
                    let note = json!({
                        "source": "generated",
                        "method": cfg.limit.pc_method,
                        "size": s.len(),
                        "n_ref": cfg.limit.n_ref,
                    });
                    (s, note)
                }
            };
            (samples.iter().map(|s| (s.p, s.c)).collect(), note)
        }
    };

    // empirical side: single-root replicates at the first N
    let n = cfg.n.values()[0];
    let mut fc = forest_config(cfg, n);
    fc.roots = Some(1);
    fc.stop_above = Some(SATURATION);
    let sums = run_summaries(&fc, cfg.master_seed, cfg.replicates, cfg.workers());
    let overflowed = sums.iter().filter(|s| s.overflow).count();
    if overflowed > 0 {
        outcome.budget_exhausted = true;
        outcome.warnings.push(format!("{overflowed} replicates exceeded the step cap and were excluded"));
    }
    let empirical = forest_cumulants(&sums, fns.len(), n, 1);

    // η side: the series conditional unless the pool came from a file or a
    // non-series method
    let cond = if cfg.model == Model::Regrow
        && (cfg.cumulant.pc_pool_path.is_some() || cfg.limit.pc_method != PcMethodName::Series)
    {
        let samples: Vec<PcSample> = pool.iter().map(|&(p, c)| PcSample { p, c }).collect();
        PcConditional::Pool(PcPool::new(&samples, cfg.c))
    } else {
        PcConditional::Series
    };
    let fossil = EtaFossilSampler::new(params, cfg.support_min);
    let regrow = EtaRegrowSampler::new(params, cfg.support_min, cond);
    let eta_rows: Vec<Option<Vec<f64>>> = with_pool(cfg.workers(), || {
        (0..cfg.limit.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(cfg.master_seed, i);
                match cfg.model {
                    Model::Fossil => fossil.integrals(&fns, SATURATION, &mut rng).ok(),
                    Model::Regrow => regrow.integrals(&fns, SATURATION, &mut rng).ok(),
                }
            })
            .collect()
    });
    let eta_failed = eta_rows.iter().filter(|r| r.is_none()).count();
    if eta_failed > 0 {
        outcome.warnings.push(format!(
            "{eta_failed} fertility trees exceeded the node budget before saturating and were excluded"
        ));
    }

    let mut entries = Vec::new();
    for (i, f) in fns.iter().enumerate() {
        let solved = match cfg.model {
            Model::Fossil => solve_cumulant_fossil(f, &params, tol),
            Model::Regrow => solve_cumulant_regrow(f, &params, tol, &pool),
        };
        let (kappa_solver, residual) = match solved {
            Ok(k) => {
                let pool_ref = (cfg.model == Model::Regrow).then_some(&pool[..]);
                (Some(k), Some(cumulant_residual(k, f, &params, cfg.model, pool_ref)))
            }
            Err(e) => {
                outcome.warnings.push(format!("fn {i}: solver failed: {e}"));
                (None, None)
            }
        };
        let eta: Vec<f64> = eta_rows.iter().filter_map(|r| r.as_ref().map(|v| v[i])).collect();
        entries.push(json!({
            "fn": {"id": i, "a": f.a, "a1": f.a1, "b1": f.b1, "b": f.b, "h": f.h},
            "model": cfg.model,
            "params": {"c": params.c, "sigma2": params.sigma2, "n": n},
            "kappa_solver": kappa_solver,
            "kappa_empirical": empirical[i].as_ref().map(estimate_json),
            "kappa_eta": empirical_cumulant(&eta, None).ok().as_ref().map(estimate_json),
            "residual": residual,
        }));
    }
    let report = json!({
        "version": VERSION,
        "command": "cumulant",
        "config": cfg,
        "pc_pool": pool_note,
        "results": entries,
        "warnings": outcome.warnings,
    });
    Ok((report, outcome))
}

pub fn cumulant(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let (report, outcome) = cumulant_report(cfg)?;
    write_file(&cfg.out_dir, "cumulant.json", pretty(&report).as_bytes())?;
    Ok(outcome)
}

/// Runs the named acceptance criteria, printing one line per criterion, and
/// writes `verify.json`.
pub fn verify(cfg: &RunConfig, ids: &[&str], quick: bool, fault: Option<Fault>) -> Result<Outcome, CommandError> {
    let ctx = acceptance::Context {
        seed: cfg.master_seed,
        workers: cfg.workers(),
        fault,
    };
    let mut stdout = std::io::stdout();
    let results = acceptance::run(&ctx, ids, |r| {
        let _ = writeln!(stdout, "{}", r.line());
    });
    let report = json!({
        "version": VERSION,
        "command": "verify",
        "config": cfg,
        "quick": quick,
        "fault": fault,
        "criteria": results,
    });
    write_file(&cfg.out_dir, "verify.json", pretty(&report).as_bytes())?;
    Ok(Outcome {
        acceptance_failed: results.iter().any(|r| !r.pass),
        ..Default::default()
    })
}
