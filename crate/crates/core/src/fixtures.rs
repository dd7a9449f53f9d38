//! Bundled cases.
//!
//! `two_bus` carries the DER parameters of the two-prosumer study with
//! synthetic 24-hour price, PV and load series of the usual shape (evening
//! price peak, midday PV). `feeder95` is a synthetic 95-bus radial feeder
//! with 18 prosumers; its impedances are invented, its DER ranges, exchange
//! limit and curtailment windows follow the larger study.

use crate::case::{CaseFile, CaseOptions, SweepSpec};
use crate::der::ProsumerParams;
use crate::grid::{Branch, Bus, Network};
use crate::program::Prices;
use crate::scenario::Forecast;
use crate::solve::SolveOptions;

pub const HORIZON: usize = 24;

/// Energy price ($/MWh), synthetic.
const ENERGY_PRICE: [f64; HORIZON] = [
    60.0, 58.0, 57.0, 57.0, 58.0, 62.0, 66.0, 70.0, 72.0, 74.0, 75.0, 76.0, 76.0, 75.0, 74.0,
    73.0, 76.0, 80.0, 85.0, 86.0, 84.0, 78.0, 70.0, 64.0,
];

/// Upward reserve price ($/MW), synthetic, an order of magnitude below energy.
const RESERVE_PRICE: [f64; HORIZON] = [
    0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.7, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.9, 1.0,
    1.2, 1.2, 1.1, 0.9, 0.7, 0.6,
];

/// Solver settings of the bundled cases: the duality-gap tolerance is
/// tightened so per-row complementary slackness lands well below 1e-7.
fn solve_options() -> SolveOptions {
    SolveOptions {
        opt_tol: 1e-9,
        ..SolveOptions::default()
    }
}

/// Daily load shape in [0, 1], evening peak.
const LOAD_SHAPE: [f64; HORIZON] = [
    0.30, 0.25, 0.20, 0.20, 0.25, 0.35, 0.50, 0.60, 0.55, 0.50, 0.45, 0.45, 0.45, 0.45, 0.50,
    0.55, 0.65, 0.80, 0.95, 1.00, 0.90, 0.75, 0.55, 0.40,
];

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Bell-shaped PV output between 06:00 and 18:00 peaking at 12:00.
fn pv_shape(peak: f64) -> Vec<f64> {
    (0..HORIZON)
        .map(|t| {
            if (6..=18).contains(&t) {
                round3(peak * (std::f64::consts::PI * (t as f64 - 5.0) / 14.0).sin())
            } else {
                0.0
            }
        })
        .collect()
}

fn load(base: f64, swing: f64) -> Vec<f64> {
    LOAD_SHAPE.iter().map(|s| round3(base + swing * s)).collect()
}

fn bus(id: usize, prosumer: Option<usize>) -> Bus<f64> {
    Bus {
        id,
        vmin: 0.95,
        vmax: 1.05,
        is_substation: id == 0,
        prosumer,
        reactive_pf: 0.95,
    }
}

pub fn two_bus() -> CaseFile<f64> {
    let network = Network {
        buses: vec![bus(0, Some(0)), bus(1, Some(1))],
        branches: vec![Branch {
            from: 0,
            to: 1,
            r: 0.02,
            x: 0.04,
            gs: 0.0,
            bs: 0.0,
            smax: 10.0,
            gamma: 1.0,
        }],
        e_ex_max: 10.0,
        v_base: 11.0,
        s_base: 10.0,
        v_ref: 1.0,
    };

    let mut p1 = ProsumerParams::empty(0, HORIZON);
    p1.pg_min = 0.25;
    p1.pg_max = 5.0;
    p1.msr = 0.05;
    p1.ru = 1.5;
    p1.rd = 1.5;
    p1.ps_max = 0.25;
    p1.eta = 0.8;
    p1.q_cap = 1.25;
    p1.alpha_g = 10.0;
    p1.beta_g = 20.0;
    p1.pg_init = Some(2.0);
    p1.alpha_s = 2.0;
    p1.beta_s = 0.1;
    p1.alpha_u = 2.0;
    p1.beta_u = 120.0;

    let mut p2 = ProsumerParams::empty(1, HORIZON);
    p2.pd_flex_max = vec![0.25; HORIZON];
    p2.ps_max = 0.25;
    p2.eta = 0.9;
    p2.q_cap = 1.25;
    p2.alpha_s = 2.0;
    p2.beta_s = 0.1;
    p2.alpha_u = 2.0;
    p2.beta_u = 120.0;

    let pv = pv_shape(2.0);
    let load0 = load(1.0, 0.8);
    let load1 = load(2.0, 1.2);

    // seller delivers over the evening price peak, buyer receives a flat profile
    let mut energy_shape = vec![0.0; HORIZON];
    for v in &mut energy_shape[17..21] {
        *v = 6.0;
    }

    CaseFile {
        name: "two-bus".into(),
        description: "Two prosumers at the ends of one branch; price, PV and load series are \
                      synthetic stand-ins."
            .into(),
        horizon: HORIZON,
        network,
        prosumers: vec![p1, p2],
        prices: Prices {
            energy: ENERGY_PRICE.to_vec(),
            reserve: RESERVE_PRICE.to_vec(),
        },
        forecast: Some(Forecast {
            pv: vec![pv.clone(), vec![0.0; HORIZON]],
            load: vec![load0, load1.clone()],
        }),
        sigma_pv: 0.8,
        sigma_d: 0.3,
        scenario_file: None,
        contracts: Vec::new(),
        sweep: Some(SweepSpec {
            buyer: 1,
            seller: 0,
            energy_shape,
            seller_profile: pv,
            buyer_profile: load1,
        }),
        options: CaseOptions {
            n_s: 10,
            seed: 19,
            reduce_from: None,
            solve: solve_options(),
            tolerance: 1e-5,
        },
    }
}

/// Nodes hosting prosumers, in prosumer order.
pub const FEEDER95_PROSUMER_NODES: [usize; 18] =
    [7, 9, 12, 16, 20, 26, 28, 31, 35, 44, 52, 61, 68, 72, 77, 83, 84, 90];
const FEEDER95_PV_NODES: [usize; 7] = [7, 9, 16, 26, 31, 77, 84];
const FEEDER95_LARGE_DG: [usize; 3] = [28, 61, 83];
/// First bus of each of the four feeders leaving the substation.
const FEEDER_HEADS: [usize; 4] = [1, 25, 49, 73];

/// Upstream bus of `j` in the synthetic tree: four feeders of chained
/// sections, every sixth bus starting a short lateral off the trunk.
fn feeder95_parent(j: usize) -> usize {
    if FEEDER_HEADS.contains(&j) {
        return 0;
    }
    let head = *FEEDER_HEADS.iter().filter(|&&h| h <= j).max().unwrap();
    if (j - head) % 6 == 5 {
        j - 3
    } else {
        j - 1
    }
}

pub fn feeder95() -> CaseFile<f64> {
    let n_bus = 95;
    let prosumer_at = |j: usize| FEEDER95_PROSUMER_NODES.iter().position(|&n| n == j);
    let buses = (0..n_bus)
        .map(|j| Bus {
            vmin: 0.94,
            vmax: 1.06,
            ..bus(j, prosumer_at(j))
        })
        .collect();
    let branches = (1..n_bus)
        .map(|j| {
            let head = FEEDER_HEADS.contains(&j);
            Branch {
                from: feeder95_parent(j),
                to: j,
                r: if head { 0.002 } else { 0.004 },
                x: if head { 0.003 } else { 0.004 },
                gs: 0.0,
                bs: 0.0,
                smax: if head { 20.0 } else { 12.0 },
                gamma: 1.0,
            }
        })
        .collect();
    let network = Network {
        buses,
        branches,
        e_ex_max: 55.0,
        v_base: 11.0,
        s_base: 10.0,
        v_ref: 1.0,
    };

    let n_p = FEEDER95_PROSUMER_NODES.len();
    let mut prosumers = Vec::with_capacity(n_p);
    let mut pv = Vec::with_capacity(n_p);
    let mut loads = Vec::with_capacity(n_p);
    let shape_mean = LOAD_SHAPE.iter().sum::<f64>() / HORIZON as f64;
    for (i, &node) in FEEDER95_PROSUMER_NODES.iter().enumerate() {
        let k = i as f64 / (n_p - 1) as f64;
        let mut p = ProsumerParams::empty(i, HORIZON);
        let large = FEEDER95_LARGE_DG.contains(&node);
        p.pg_min = if large { 0.3 } else { 0.15 };
        p.pg_max = if large { 5.0 } else { 4.5 };
        p.msr = 0.05;
        p.ru = 2.5;
        p.rd = 2.5;
        p.pg_init = Some(2.0);
        p.alpha_g = round3(8.0 + 4.0 * k);
        p.beta_g = round3(18.0 + 6.0 * ((i * 7) % n_p) as f64 / n_p as f64);
        p.ps_max = 0.25;
        p.eta = 0.9;
        p.q_cap = 1.25;
        p.alpha_s = 2.0;
        p.beta_s = 0.1;
        p.alpha_u = 2.0;
        p.beta_u = 120.0;
        p.pd_flex_max = (0..HORIZON)
            .map(|t| if (10..=12).contains(&t) || (14..=18).contains(&t) { 0.45 } else { 0.0 })
            .collect();
        prosumers.push(p);

        // daily average demand spread over 0.5 to 2 MW
        let avg = 0.5 + 1.5 * ((i * 5) % n_p) as f64 / (n_p - 1) as f64;
        loads.push(LOAD_SHAPE.iter().map(|s| round3(avg * (0.5 + 0.5 * s / shape_mean))).collect());
        pv.push(if FEEDER95_PV_NODES.contains(&node) {
            pv_shape(1.0 + 0.5 * (i % 5) as f64)
        } else {
            vec![0.0; HORIZON]
        });
    }

    CaseFile {
        name: "feeder95".into(),
        description: "Synthetic 95-bus radial 11 kV feeder with 18 prosumers; impedances, \
                      price, PV and load series are synthetic stand-ins."
            .into(),
        horizon: HORIZON,
        network,
        prosumers,
        prices: Prices {
            energy: ENERGY_PRICE.to_vec(),
            reserve: RESERVE_PRICE.to_vec(),
        },
        forecast: Some(Forecast { pv, load: loads }),
        sigma_pv: 0.8,
        sigma_d: 0.3,
        scenario_file: None,
        contracts: Vec::new(),
        sweep: None,
        options: CaseOptions {
            n_s: 10,
            seed: 19,
            reduce_from: None,
            solve: solve_options(),
            tolerance: 1e-5,
        },
    }
}
