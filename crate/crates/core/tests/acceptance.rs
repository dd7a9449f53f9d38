//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs sequentially so the timings are meaningful.

use std::process::ExitCode;
use std::time::Instant;

use dso_core::analysis::{sweep, verify_against, Instance, SweepKind, Solved};
use dso_core::case::CaseFile;
use dso_core::der::ProsumerParams;
use dso_core::fixtures;
use dso_core::grid::{Bus, Network};
use dso_core::p2p::{net_trade, random_book, BookKind, Kw};
use dso_core::program::Prices;
use dso_core::scenario::{Forecast, ScenarioSet};
use dso_core::solve::{KktAudit, SolveOptions};

const STATIONARITY_TOL: f64 = 1e-6;
const SLACKNESS_TOL: f64 = 1e-7;
const GAP_TOL: f64 = 5e-4;
const STORAGE_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// KKT audits of every optimal solve made during the run.
#[derive(Default)]
struct Audits(Vec<(String, KktAudit)>);

impl Audits {
    fn push(&mut self, label: impl Into<String>, a: Option<KktAudit>) {
        if let Some(a) = a {
            self.0.push((label.into(), a));
        }
    }

    fn solved<T: dso_core::Scalar>(&mut self, label: impl Into<String>, s: &Solved<T>) {
        if s.is_optimal() {
            self.push(label, dso_core::solve::kkt_audit(&s.assembled.program, &s.report));
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

struct TwoBus {
    case: CaseFile<f64>,
    scenarios: ScenarioSet<f64>,
}

impl TwoBus {
    fn new() -> Self {
        let case = fixtures::two_bus();
        let scenarios = case.scenarios(std::path::Path::new(".")).expect("fixture scenarios");
        TwoBus { case, scenarios }
    }

    fn inst(&self) -> Instance<'_, f64> {
        Instance::from_case(&self.case, &self.scenarios)
    }
}

fn criterion_1(tb: &TwoBus, base: &Solved<f64>, audits: &mut Audits) -> Outcome {
    let inst = tb.inst();
    let start = Instant::now();
    let (mut worst_obj, mut worst_e) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for seed in 0..20 {
        let book = random_book(BookKind::Power, inst.n_p(), inst.horizon(), 3, Kw(1000), seed);
        let plan = net_trade(&book, inst.n_p(), inst.horizon()).expect("power book nets");
        let rep = match verify_against(&inst, base, &plan, 1e-5) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("book {seed}: {e}"));
                continue;
            }
        };
        audits.push(format!("power book {seed}"), rep.kkt);
        let d_obj = rel(rep.p2p_objective, rep.base_objective);
        worst_obj = worst_obj.max(d_obj);
        worst_e = worst_e.max(rep.e_invariance_residual);
        if !(d_obj <= 1e-5 && rep.e_invariance_residual <= 1e-5 && rep.holds()) {
            failures.push(format!("book {seed}: {:?}", rep.verdict));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs <= 120.0;
    outcome(
        pass,
        format!(
            "20 power books: max surplus change {worst_obj:.1e} rel, max |ΔE| {worst_e:.1e} MW, {secs:.1} s{}",
            fail_suffix(&failures)
        ),
    )
}

fn criterion_2(tb: &TwoBus, base: &Solved<f64>, audits: &mut Audits) -> Outcome {
    let inst = tb.inst();
    let (mut worst_shift, mut worst_obj, mut worst_viol) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for seed in 0..20 {
        let book = random_book(BookKind::Energy, inst.n_p(), inst.horizon(), 3, Kw(1000), 100 + seed);
        let plan = net_trade(&book, inst.n_p(), inst.horizon()).expect("energy book nets");
        let rep = match verify_against(&inst, base, &plan, 1e-5) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("book {seed}: {e}"));
                continue;
            }
        };
        audits.push(format!("energy book {seed}"), rep.kkt);
        let d_obj = rel(rep.constructed_objective, rep.p2p_objective);
        worst_shift = worst_shift.max(rep.e_shift_residual);
        worst_obj = worst_obj.max(d_obj);
        worst_viol = worst_viol.max(rep.constructed_violation);
        if !(rep.e_shift_residual <= 1e-5 && rep.constructed_feasible && d_obj <= 1e-5) {
            failures.push(format!("book {seed}: {:?}", rep.verdict));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "20 energy books: max E-shift residual {worst_shift:.1e} MW, constructed point violation {worst_viol:.1e}, objective gap {worst_obj:.1e} rel{}",
            fail_suffix(&failures)
        ),
    )
}

fn gap_check(name: &str, s: &Solved<f64>) -> (bool, String) {
    match s.diagnostics() {
        None => (false, format!("{name} not optimal ({:?})", s.report.status)),
        Some(d) => (
            d.relaxation_gap.value <= GAP_TOL && d.complementarity.value <= STORAGE_TOL,
            format!(
                "{name}: SOC gap {:.1e} pu, Pc·Pdis {:.1e}",
                d.relaxation_gap.value, d.complementarity.value
            ),
        ),
    }
}

fn criterion_3(base: &Solved<f64>, feeder: Option<&Solved<f64>>) -> Outcome {
    let (a, da) = gap_check("2-bus", base);
    let (b, db) = match feeder {
        Some(f) => gap_check("95-bus", f),
        None => (false, "95-bus: no solve".into()),
    };
    outcome(a && b, format!("{da}; {db}"))
}

/// One-prosumer, single-bus instance for the grid-search oracle.
struct Mini {
    p: ProsumerParams<f64>,
    pv: Vec<f64>,
    load: Vec<f64>,
    price_e: Vec<f64>,
    price_r: Vec<f64>,
    e_max: f64,
}

#[derive(Clone, Copy)]
enum Var {
    Thermal(usize),
    Reserve(usize),
    /// Signed storage flow: positive charges, negative discharges.
    Storage(usize),
    Curtail(usize),
}

impl Mini {
    fn horizon(&self) -> usize {
        self.load.len()
    }

    /// Surplus from the model definition, `None` when infeasible.
    fn surplus(&self, pg: &[f64], pr: &[f64], x: &[f64], pd: &[f64]) -> Option<f64> {
        let p = &self.p;
        let eps = 1e-9;
        let mut total = 0.0;
        let mut q = p.q_start();
        for t in 0..self.horizon() {
            if pg[t] < p.pg_min - eps || pg[t] > p.pg_max + eps {
                return None;
            }
            if pr[t] < -eps || pr[t] > (10.0 * p.msr).min(p.pg_max - pg[t]) + eps {
                return None;
            }
            let (pg_prev, pr_prev) = if t == 0 { (p.pg_start(), 0.0) } else { (pg[t - 1], pr[t - 1]) };
            if pg[t] - pg_prev + pr[t] > p.ru + eps || pg_prev - pg[t] + pr_prev > p.rd + eps {
                return None;
            }
            if pd[t] < -eps || pd[t] > p.pd_flex_max[t] + eps {
                return None;
            }
            let (c, dis) = (x[t].max(0.0), (-x[t]).max(0.0));
            if c > p.ps_max + eps || dis > p.ps_max + eps {
                return None;
            }
            q += c - dis;
            if q < p.q_min - eps || q > p.q_cap + eps {
                return None;
            }
            let e = pg[t] + self.pv[t] + p.eta * dis - c / p.eta - self.load[t] + pd[t];
            let r = pr[t];
            if e.abs() > self.e_max + eps || (e + r).abs() > self.e_max + eps {
                return None;
            }
            let served = self.load[t] - pd[t];
            let utility = -p.alpha_u * served * served + p.beta_u * served;
            let gen_cost = p.alpha_g * pg[t] * pg[t] + p.beta_g * pg[t];
            let fixed = if p.q_cap > 0.0 { p.beta_s } else { 0.0 };
            let storage_cost = p.alpha_s * (dis - c).abs() + fixed;
            total += self.price_e[t] * e + self.price_r[t] * r + utility - gen_cost - storage_cost;
        }
        Some(total)
    }

    /// Exhaustive search over `vars` on a 0.01 MW grid; others stay 0.
    fn brute_force(&self, vars: &[GridVar]) -> f64 {
        let h = self.horizon();
        let steps: Vec<usize> = vars.iter().map(|&(_, lo, hi)| ((hi - lo) / 0.01).round() as usize).collect();
        let mut idx = vec![0usize; vars.len()];
        let mut best = f64::NEG_INFINITY;
        let (mut pg, mut pr, mut x, mut pd) = (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        'outer: loop {
            for (k, &(v, lo, _)) in vars.iter().enumerate() {
                let val = lo + idx[k] as f64 * 0.01;
                match v {
                    Var::Thermal(t) => pg[t] = val,
                    Var::Reserve(t) => pr[t] = val,
                    Var::Storage(t) => x[t] = val,
                    Var::Curtail(t) => pd[t] = val,
                }
            }
            if let Some(s) = self.surplus(&pg, &pr, &x, &pd) {
                best = best.max(s);
            }
            for k in 0..vars.len() {
                if idx[k] < steps[k] {
                    idx[k] += 1;
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        best
    }

    fn solve(&self) -> Solved<f64> {
        let net = Network {
            buses: vec![Bus {
                id: 0,
                vmin: 0.95,
                vmax: 1.05,
                is_substation: true,
                prosumer: Some(0),
                reactive_pf: 1.0,
            }],
            branches: vec![],
            e_ex_max: self.e_max,
            v_base: 11.0,
            s_base: 10.0,
            v_ref: 1.0,
        };
        let forecast = Forecast {
            pv: vec![self.pv.clone()],
            load: vec![self.load.clone()],
        };
        let sc = ScenarioSet::deterministic(&forecast).expect("forecast");
        let prices = Prices {
            energy: self.price_e.clone(),
            reserve: self.price_r.clone(),
        };
        let prosumers = [self.p.clone()];
        let inst = Instance {
            net: &net,
            prosumers: &prosumers,
            scenarios: &sc,
            prices: &prices,
            options: SolveOptions {
                opt_tol: 1e-9,
                ..SolveOptions::default()
            },
        };
        inst.solve(&inst.zero_plan()).expect("mini instance assembles")
    }
}

/// Searched variable with its bounds.
type GridVar = (Var, f64, f64);

fn mini_instances() -> Vec<(&'static str, Mini, Vec<GridVar>)> {
    // thermal, reserve and curtailment against a binding exchange limit
    let mut a = ProsumerParams::empty(0, 1);
    a.pg_max = 2.0;
    a.msr = 0.05;
    a.ru = 2.0;
    a.rd = 2.0;
    a.pg_init = Some(1.0);
    a.alpha_g = 2.0;
    a.beta_g = 20.0;
    a.pd_flex_max = vec![1.2];
    a.alpha_u = 20.0;
    a.beta_u = 80.0;
    let inst_a = Mini {
        p: a,
        pv: vec![0.5],
        load: vec![1.5],
        price_e: vec![60.0],
        price_r: vec![5.0],
        e_max: 1.2,
    };
    let vars_a = vec![
        (Var::Thermal(0), 0.0, 2.0),
        (Var::Reserve(0), 0.0, 0.5),
        (Var::Curtail(0), 0.0, 1.2),
    ];

    // two periods coupled by ramping with reserve
    let mut b = ProsumerParams::empty(0, 2);
    b.pg_min = 0.2;
    b.pg_max = 1.5;
    b.msr = 0.02;
    b.ru = 0.3;
    b.rd = 0.2;
    b.pg_init = Some(1.0);
    b.alpha_g = 1.0;
    b.beta_g = 30.0;
    b.beta_u = 100.0;
    let inst_b = Mini {
        p: b,
        pv: vec![0.0, 0.0],
        load: vec![0.8, 1.0],
        price_e: vec![40.0, 90.0],
        price_r: vec![20.0, 20.0],
        e_max: 5.0,
    };
    let vars_b = vec![
        (Var::Thermal(0), 0.2, 1.5),
        (Var::Thermal(1), 0.2, 1.5),
        (Var::Reserve(0), 0.0, 0.2),
        (Var::Reserve(1), 0.0, 0.2),
    ];

    // storage arbitrage with lossy conversion and curtailment
    let mut c = ProsumerParams::empty(0, 2);
    c.ps_max = 0.3;
    c.q_cap = 0.5;
    c.eta = 0.9;
    c.alpha_s = 2.0;
    c.beta_s = 0.1;
    c.pd_flex_max = vec![0.2, 0.2];
    c.alpha_u = 5.0;
    c.beta_u = 70.0;
    let inst_c = Mini {
        p: c,
        pv: vec![1.0, 0.0],
        load: vec![0.5, 0.6],
        price_e: vec![30.0, 80.0],
        price_r: vec![0.0, 0.0],
        e_max: 5.0,
    };
    let vars_c = vec![
        (Var::Storage(0), -0.3, 0.3),
        (Var::Storage(1), -0.3, 0.3),
        (Var::Curtail(0), 0.0, 0.2),
        (Var::Curtail(1), 0.0, 0.2),
    ];
    vec![
        ("T=1 thermal/reserve/curtail", inst_a, vars_a),
        ("T=2 ramping", inst_b, vars_b),
        ("T=2 storage", inst_c, vars_c),
    ]
}

fn criterion_4(audits: &mut Audits) -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, mini, vars) in mini_instances() {
        let solved = mini.solve();
        audits.solved(name, &solved);
        let oracle = mini.brute_force(&vars);
        match &solved.result {
            Some(r) => {
                let diff = (r.objective.total - oracle).abs();
                pass &= diff <= 1e-3;
                parts.push(format!("{name}: |Δ| {diff:.1e}"));
            }
            None => {
                pass = false;
                parts.push(format!("{name}: {:?}", solved.report.status));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs <= 30.0, format!("{}, {secs:.1} s", parts.join("; ")))
}

fn criterion_5(tb: &TwoBus, audits: &mut Audits) -> Outcome {
    let inst = tb.inst();
    let spec = tb.case.sweep.as_ref().expect("fixture has a sweep pair");
    let ratios: Vec<f64> = (0..=5).map(|k| k as f64 * 0.2).collect();
    let run = |kind| sweep(&inst, spec, kind, &ratios);
    let common_ratios: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
    let (power, energy, common) = match (
        run(SweepKind::Power),
        run(SweepKind::Energy),
        sweep(&inst, spec, SweepKind::CommonPart, &common_ratios),
    ) {
        (Ok(p), Ok(e), Ok(c)) => (p, e, c),
        _ => return outcome(false, "a sweep failed to solve its baseline".into()),
    };
    for t in [&power, &energy, &common] {
        for p in &t.points {
            audits.push(format!("{} sweep {}", t.kind.name(), p.ratio), p.kkt);
        }
    }
    let mut problems = Vec::new();
    let all = |v: Vec<Option<f64>>, name: &str, problems: &mut Vec<String>| -> Vec<f64> {
        if v.iter().any(Option::is_none) {
            problems.push(format!("{name} sweep has unsolved points"));
        }
        v.into_iter().flatten().collect()
    };

    let ps = all(power.surpluses(), "power", &mut problems);
    let spread = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ps.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread_rel = spread / ps[0].abs();
    if spread_rel > 1e-5 {
        problems.push(format!("power surplus spread {spread_rel:.1e}"));
    }

    let es = all(energy.surpluses(), "energy", &mut problems);
    if !es.windows(2).all(|w| w[1] < w[0]) {
        problems.push("energy surplus not strictly decreasing".into());
    }

    let reachable: Vec<(f64, f64)> = common
        .points
        .iter()
        .filter_map(|p| p.indices.map(|ix| (p.ratio, ix.total_surplus)))
        .collect();
    let tol = 1e-5 * ps[0].abs();
    if !reachable.windows(2).all(|w| w[1].1 >= w[0].1 - tol) {
        problems.push("common-part surplus decreases".into());
    }
    match reachable.last() {
        Some(&(r, s)) if (r - 1.0).abs() < 1e-12 => {
            if rel(s, ps[0]) > 1e-5 {
                problems.push(format!("common-part ratio 1 surplus {s} vs power {}", ps[0]));
            }
        }
        _ => problems.push("common-part ratio 1 missing".into()),
    }

    for (name, table) in [("power", &power), ("energy", &energy)] {
        let inc = all(table.improvements(), name, &mut problems);
        if inc.first().is_none_or(|v| v.abs() > 1e-6 * ps[0].abs()) {
            problems.push(format!("{name} improvement at ratio 0 is {:?}", inc.first()));
        }
        if !inc.windows(2).all(|w| w[1] > w[0]) {
            problems.push(format!("{name} improvement not increasing"));
        }
    }
    let es_last = es.last().copied().unwrap_or(f64::NAN);
    outcome(
        problems.is_empty(),
        format!(
            "power spread {spread_rel:.1e} rel; energy {:.2} → {es_last:.2}; common-part {} of {} ratios reachable, {:.2} → {:.2}{}",
            es.first().copied().unwrap_or(f64::NAN),
            reachable.len(),
            common_ratios.len(),
            reachable.first().map_or(f64::NAN, |p| p.1),
            reachable.last().map_or(f64::NAN, |p| p.1),
            fail_suffix(&problems)
        ),
    )
}

fn criterion_6(audits: &Audits) -> Outcome {
    let worst = |f: fn(&KktAudit) -> f64| {
        audits
            .0
            .iter()
            .map(|(l, a)| (f(a), l.as_str()))
            .fold((0.0, ""), |m, x| if x.0 > m.0 { x } else { m })
    };
    let (stat, stat_at) = worst(|a| a.stationarity);
    let (slack, slack_at) = worst(|a| a.complementary_slackness);
    outcome(
        !audits.0.is_empty() && stat <= STATIONARITY_TOL && slack <= SLACKNESS_TOL,
        format!(
            "{} solves audited: max stationarity {stat:.1e} ({stat_at}), max complementary slackness {slack:.1e} ({slack_at})",
            audits.0.len()
        ),
    )
}

fn criterion_7(tb: &TwoBus, base: &Solved<f64>) -> Outcome {
    let forecast = tb.case.forecast.as_ref().expect("fixture forecast");
    let write = || {
        let sc = tb
            .case
            .generate_scenarios(forecast, tb.case.options.n_s, tb.case.options.seed)
            .expect("scenarios");
        let mut buf = Vec::new();
        sc.write_csv(&mut buf).expect("csv");
        buf
    };
    let same_file = write() == write();
    let again = tb.inst().solve(&tb.inst().zero_plan()).expect("solve");
    let d = (again.report.surplus() - base.report.surplus()).abs();
    outcome(
        same_file && d <= 1e-9,
        format!("scenario files identical: {same_file}; objective difference {d:.1e}"),
    )
}

fn criterion_8(feeder: &Result<(Solved<f64>, f64), String>, c3: &Outcome, c6: &Outcome) -> Outcome {
    match feeder {
        Err(e) => outcome(false, e.clone()),
        Ok((s, secs)) => {
            let ok = s.is_optimal() && *secs <= 600.0;
            let d = s.diagnostics();
            outcome(
                ok && c3.pass && c6.pass,
                format!(
                    "95-bus n_s=10 T=24: {:?} in {secs:.1} s, {} variables; SOC gap {:.1e}; criteria 3 and 6 {}",
                    s.report.status,
                    s.assembled.program.n_vars(),
                    d.map_or(f64::NAN, |d| d.relaxation_gap.value),
                    if c3.pass && c6.pass { "hold" } else { "fail" }
                ),
            )
        }
    }
}

fn fail_suffix(problems: &[String]) -> String {
    if problems.is_empty() {
        String::new()
    } else {
        format!(" [{}]", problems.join("; "))
    }
}

fn solve_feeder95(audits: &mut Audits) -> Result<(Solved<f64>, f64), String> {
    let case = fixtures::feeder95();
    let start = Instant::now();
    let sc = case.scenarios(std::path::Path::new(".")).map_err(|e| e.to_string())?;
    let inst = Instance::from_case(&case, &sc);
    let solved = inst.solve(&inst.zero_plan()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    audits.solved("95-bus", &solved);
    Ok((solved, secs))
}

fn main() -> ExitCode {
    let mut audits = Audits::default();
    let tb = TwoBus::new();
    let base = tb.inst().solve(&tb.inst().zero_plan()).expect("2-bus assembles");
    audits.solved("2-bus base", &base);

    let c1 = criterion_1(&tb, &base, &mut audits);
    let c2 = criterion_2(&tb, &base, &mut audits);
    let c4 = criterion_4(&mut audits);
    let c5 = criterion_5(&tb, &mut audits);
    let c7 = criterion_7(&tb, &base);
    let feeder = solve_feeder95(&mut audits);
    let c3 = criterion_3(&base, feeder.as_ref().ok().map(|f| &f.0));
    let c6 = criterion_6(&audits);
    let c8 = criterion_8(&feeder, &c3, &c6);

    let names = [
        "invariance under power contracts",
        "energy contracts shift E by the imbalance",
        "relaxation exactness",
        "oracle equivalence",
        "sweep trends",
        "KKT audit",
        "determinism",
        "95-bus scale check",
    ];
    let all = [c1, c2, c3, c4, c5, c6, c7, c8];
    for (k, (name, o)) in names.iter().zip(&all).enumerate() {
        println!(
            "{} criterion {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    if all.iter().all(|o| o.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
