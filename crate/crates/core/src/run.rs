//! Command orchestration: load a case, solve, and write result files.
//!
//! Every JSON output carries a [`Provenance`] block. CSV outputs are
//! numeric only; their provenance is in `meta.json` next to them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    indices, sweep, verify_against, AnalysisError, Diagnostics, EconomicIndices, Instance,
    SweepKind, SweepTable, TheoremReport,
};
use crate::case::{CaseError, CaseFile};
use crate::fixtures;
use crate::p2p::{net_trade, Contract, P2pError};
use crate::program::Symbol;
use crate::scenario::{ScenarioError, ScenarioSet};
use crate::solve::{DispatchResult, SolveStatus, SurplusBreakdown};

/// Prefix selecting a bundled case instead of a file.
pub const BUNDLED_PREFIX: &str = "bundled:";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    P2p(#[from] P2pError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("unknown bundled case {0:?} (two-bus, feeder95)")]
    UnknownBundled(String),
    #[error("invalid ratio range {0:?}: {1}")]
    Ratios(String, String),
}

/// How a command ended, apart from hard errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// The instance is infeasible or the solver failed.
    Infeasible,
    /// The invariance check failed.
    Violated,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Infeasible | Outcome::Violated => 1,
        }
    }
}

/// A loaded case and the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedCase {
    pub case: CaseFile<f64>,
    pub base_dir: PathBuf,
    pub label: String,
}

/// Loads `bundled:two-bus`, `bundled:feeder95` or a case file, then
/// validates it.
pub fn load_case(arg: &str) -> Result<LoadedCase, RunError> {
    let (case, base_dir) = match arg.strip_prefix(BUNDLED_PREFIX) {
        Some("two-bus") => (fixtures::two_bus(), PathBuf::from(".")),
        Some("feeder95") => (fixtures::feeder95(), PathBuf::from(".")),
        Some(other) => return Err(RunError::UnknownBundled(other.into())),
        None => {
            let path = Path::new(arg);
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (CaseFile::load(path)?, dir)
        }
    };
    case.check()?;
    Ok(LoadedCase {
        case,
        base_dir,
        label: arg.to_string(),
    })
}

/// Parses `a:b:step` into the inclusive grid `a, a+step, …, b`.
pub fn parse_ratios(spec: &str) -> Result<Vec<f64>, RunError> {
    let bad = |m: &str| RunError::Ratios(spec.into(), m.into());
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| bad(&e.to_string())))
        .collect::<Result<_, _>>()?;
    let [a, b, step] = parts[..] else {
        return Err(bad("expected a:b:step"));
    };
    if !(a.is_finite() && b.is_finite() && step.is_finite()) || a < 0.0 || b < a || step <= 0.0 {
        return Err(bad("need 0 <= a <= b and step > 0"));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| ((a + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub case: String,
    pub case_name: String,
    pub fixture_hash: String,
    pub seed: Option<u64>,
    pub n_s: usize,
    pub scenario_algorithm: String,
    pub tolerance: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub version: &'static str,
}

impl Provenance {
    pub fn new(lc: &LoadedCase, sc: &ScenarioSet<f64>) -> Self {
        let o = &lc.case.options;
        Provenance {
            case: lc.label.clone(),
            case_name: lc.case.name.clone(),
            fixture_hash: lc.case.fixture_hash(),
            seed: sc.seed,
            n_s: sc.n_s,
            scenario_algorithm: sc.algorithm.clone(),
            tolerance: o.tolerance,
            feas_tol: o.solve.feas_tol,
            opt_tol: o.solve.opt_tol,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| RunError::Io {
            path: path.to_owned(),
            source,
        })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), RunError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| RunError::Json {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_owned(),
        source: e.into(),
    }
}

/// `t,E,R,price_E,price_R` plus `s,i,t,<prosumer symbols>` and
/// `s,b,t,<branch symbols>,v_down` tables.
pub fn write_dispatch_csvs(
    dir: &Path,
    r: &DispatchResult<f64>,
    lc: &LoadedCase,
) -> Result<(), RunError> {
    let d = r.dims;
    let prices = &lc.case.prices;

    let path = dir.join("market.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let e = csv_err(&path);
    w.write_record(["t", "E", "R", "price_E", "price_R"]).map_err(&e)?;
    for t in 0..d.horizon {
        w.write_record([
            t.to_string(),
            r.energy[t].to_string(),
            r.reserve[t].to_string(),
            prices.energy[t].to_string(),
            prices.reserve[t].to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("prosumers.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let e = csv_err(&path);
    let mut header = vec!["s", "i", "t"];
    header.extend(Symbol::PROSUMER.iter().map(|s| s.name()));
    w.write_record(&header).map_err(&e)?;
    for s in 0..d.n_s {
        for i in 0..d.n_p {
            for t in 0..d.horizon {
                let mut row = vec![s.to_string(), i.to_string(), t.to_string()];
                row.extend(Symbol::PROSUMER.iter().map(|&y| r.value(y, s, i, t).to_string()));
                w.write_record(&row).map_err(&e)?;
            }
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("buses.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let e = csv_err(&path);
    let mut header = vec!["s", "bus", "t"];
    header.extend(Symbol::BUS.iter().map(|s| s.name()));
    w.write_record(&header).map_err(&e)?;
    for s in 0..d.n_s {
        for j in 0..d.n_bus {
            for t in 0..d.horizon {
                let mut row = vec![s.to_string(), j.to_string(), t.to_string()];
                row.extend(Symbol::BUS.iter().map(|&y| r.value(y, s, j, t).to_string()));
                w.write_record(&row).map_err(&e)?;
            }
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("branches.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let e = csv_err(&path);
    let mut header = vec!["s", "branch", "t"];
    header.extend(Symbol::BRANCH.iter().map(|s| s.name()));
    w.write_record(&header).map_err(&e)?;
    for s in 0..d.n_s {
        for b in 0..d.n_branch {
            for t in 0..d.horizon {
                let mut row = vec![s.to_string(), b.to_string(), t.to_string()];
                row.extend(Symbol::BRANCH.iter().map(|&y| r.value(y, s, b, t).to_string()));
                w.write_record(&row).map_err(&e)?;
            }
        }
    }
    w.flush().map_err(io_err(&path))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub meta: Provenance,
    pub status: SolveStatus,
    pub backend_status: String,
    pub iterations: u32,
    pub objective: Option<SurplusBreakdown<f64>>,
}

#[derive(Clone, Debug, Serialize)]
struct DiagnosticsFile<'a> {
    meta: &'a Provenance,
    max_violation: f64,
    /// `"relaxation-inexact"` when a gap exceeds its threshold.
    flag: Option<&'static str>,
    #[serde(flatten)]
    diagnostics: &'a Diagnostics,
}

#[derive(Clone, Debug, Serialize)]
struct IndicesFile<'a> {
    meta: &'a Provenance,
    contracts: usize,
    #[serde(flatten)]
    indices: EconomicIndices<f64>,
}

fn scenarios_of(lc: &LoadedCase) -> Result<ScenarioSet<f64>, RunError> {
    Ok(lc.case.scenarios(&lc.base_dir)?)
}

/// Solves the case with its own contract book and writes
/// `run.json`, `scenarios.csv`, `trades.csv` and, when optimal, the
/// dispatch tables, `indices.json` and `diagnostics.json`.
pub fn run(lc: &LoadedCase, out: &Path) -> Result<(RunSummary, Outcome), RunError> {
    ensure_dir(out)?;
    let sc = scenarios_of(lc)?;
    let meta = Provenance::new(lc, &sc);
    let path = out.join("scenarios.csv");
    sc.write_csv(create(&path)?)?;

    let inst = Instance::from_case(&lc.case, &sc);
    let plan = net_trade(&lc.case.contracts, inst.n_p(), inst.horizon())?;
    let path = out.join("trades.csv");
    plan.write_csv(create(&path)?)?;

    let solved = inst.solve(&plan)?;
    let rep = &solved.report;
    log::info!(
        "{}: {:?} ({}) after {} iterations in {:.2} s",
        lc.label,
        rep.status,
        rep.backend_status,
        rep.iterations,
        rep.runtime_s
    );
    let summary = RunSummary {
        meta: meta.clone(),
        status: rep.status,
        backend_status: rep.backend_status.clone(),
        iterations: rep.iterations,
        objective: solved.result.as_ref().map(|r| r.objective),
    };
    write_json(&out.join("run.json"), &summary)?;
    let Some(result) = solved.result.as_ref() else {
        return Ok((summary, Outcome::Infeasible));
    };
    write_dispatch_csvs(out, result, lc)?;
    write_json(&out.join("meta.json"), &meta)?;

    let diag = solved.diagnostics().expect("optimal solve has a dispatch");
    if !diag.relaxation_exact {
        log::warn!(
            "relaxation inexact: SOC gap {:e} pu, storage overlap {:e} MW²",
            diag.relaxation_gap.value,
            diag.complementarity.value
        );
    }
    write_json(
        &out.join("diagnostics.json"),
        &DiagnosticsFile {
            meta: &meta,
            max_violation: rep.max_violation,
            flag: (!diag.relaxation_exact).then_some("relaxation-inexact"),
            diagnostics: &diag,
        },
    )?;

    let ix = if plan.is_zero() {
        indices(result, &plan, inst.prosumers, result)
    } else {
        let base = inst.solve(&inst.zero_plan())?;
        let r0 = base
            .result
            .as_ref()
            .ok_or(AnalysisError::BaseNotOptimal(base.report.status))?;
        indices(result, &plan, inst.prosumers, r0)
    };
    write_json(
        &out.join("indices.json"),
        &IndicesFile {
            meta: &meta,
            contracts: lc.case.contracts.len(),
            indices: ix,
        },
    )?;
    Ok((summary, Outcome::Ok))
}

#[derive(Clone, Debug, Serialize)]
struct SweepLog<'a> {
    meta: &'a Provenance,
    #[serde(flatten)]
    table: &'a SweepTable,
}

/// Ratio sweep over the case's designated pair. Writes `sweep.csv`,
/// `sweep_hourly.csv` and the per-point log `sweep.json`.
pub fn sweep_cmd(
    lc: &LoadedCase,
    kind: SweepKind,
    ratios: &[f64],
    out: &Path,
) -> Result<(SweepTable, Outcome), RunError> {
    ensure_dir(out)?;
    let spec = lc.case.sweep.as_ref().ok_or(AnalysisError::NoSweepSpec)?;
    let sc = scenarios_of(lc)?;
    let meta = Provenance::new(lc, &sc);
    let inst = Instance::from_case(&lc.case, &sc);
    let table = match sweep(&inst, spec, kind, ratios) {
        Err(AnalysisError::BaseNotOptimal(status)) => {
            log::error!("no-trade instance ended {status:?}");
            return Err(AnalysisError::BaseNotOptimal(status).into());
        }
        r => r?,
    };
    for p in &table.points {
        match (&p.error, p.indices) {
            (Some(e), _) => log::warn!("ratio {}: {e}", p.ratio),
            (None, Some(ix)) => log::info!("ratio {}: surplus {}", p.ratio, ix.total_surplus),
            _ => {}
        }
    }
    table.write_summary_csv(create(&out.join("sweep.csv"))?)?;
    table.write_hourly_csv(create(&out.join("sweep_hourly.csv"))?)?;
    write_json(&out.join("sweep.json"), &SweepLog { meta: &meta, table: &table })?;
    write_json(&out.join("meta.json"), &meta)?;
    Ok((table, Outcome::Ok))
}

#[derive(Clone, Debug, Serialize)]
struct TheoremFile<'a> {
    meta: &'a Provenance,
    contracts: usize,
    #[serde(flatten)]
    report: &'a TheoremReport,
}

/// Reads a JSON array of contracts.
pub fn load_contracts(path: &Path) -> Result<Vec<Contract>, RunError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| RunError::Json {
        path: path.to_owned(),
        message: format!("/{}: {}", e.path().to_string().replace('.', "/"), e.inner()),
    })
}

/// Checks the invariance of the dispatch under `contracts` and writes
/// `theorem.json`.
pub fn verify_cmd(
    lc: &LoadedCase,
    contracts: &[Contract],
    out: &Path,
) -> Result<(TheoremReport, Outcome), RunError> {
    ensure_dir(out)?;
    let sc = scenarios_of(lc)?;
    let meta = Provenance::new(lc, &sc);
    let inst = Instance::from_case(&lc.case, &sc);
    let plan = net_trade(contracts, inst.n_p(), inst.horizon())?;
    let base = inst.solve(&inst.zero_plan())?;
    let report = verify_against(&inst, &base, &plan, lc.case.options.tolerance)?;
    write_json(
        &out.join("theorem.json"),
        &TheoremFile {
            meta: &meta,
            contracts: contracts.len(),
            report: &report,
        },
    )?;
    let outcome = if report.holds() {
        Outcome::Ok
    } else {
        Outcome::Violated
    };
    Ok((report, outcome))
}

/// Draws `n` scenarios with `seed` and writes them to `file`, with the
/// provenance in `<file>.meta.json`.
pub fn gen_scenarios(
    lc: &LoadedCase,
    n: usize,
    seed: u64,
    file: &Path,
) -> Result<ScenarioSet<f64>, RunError> {
    let forecast = lc.case.forecast.as_ref().ok_or_else(|| {
        CaseError::Invalid(vec![crate::case::Issue {
            pointer: "/forecast".into(),
            message: "missing".into(),
        }])
    })?;
    let sc = lc.case.generate_scenarios(forecast, n, seed)?;
    if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    sc.write_csv(create(file)?)?;
    let mut meta_path = file.as_os_str().to_owned();
    meta_path.push(".meta.json");
    write_json(Path::new(&meta_path), &Provenance::new(lc, &sc))?;
    Ok(sc)
}
