//! Ratio sweeps over one buyer-seller pair.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::{indices, AnalysisError, EconomicIndices, Instance};
use crate::case::SweepSpec;
use crate::p2p::{common_part_sweep, net_trade, ratio_sweep, round_to_windows, Contract, Kw};
use crate::program::Symbol;
use crate::solve::{kkt_audit, KktAudit, SolveStatus};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Flat power contract scaled by the trading ratio.
    Power,
    /// Seller delivers on the case's energy shape, buyer receives it flat.
    Energy,
    /// Energy contracts whose common part with the seller profile grows.
    CommonPart,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Power => "power",
            SweepKind::Energy => "energy",
            SweepKind::CommonPart => "common-part",
        }
    }
}

impl FromStr for SweepKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "power" => Ok(SweepKind::Power),
            "energy" => Ok(SweepKind::Energy),
            "common-part" => Ok(SweepKind::CommonPart),
            _ => Err(format!("unknown sweep kind {s:?} (power, energy, common-part)")),
        }
    }
}

/// Contract of each sweep point, or why the ratio cannot be built.
pub fn sweep_contracts<T: Scalar>(
    inst: &Instance<'_, T>,
    spec: &SweepSpec,
    kind: SweepKind,
    ratios: &[f64],
) -> Result<Vec<Result<Contract, String>>, AnalysisError> {
    let h = inst.horizon();
    let buyer_min = inst.scenarios.min_load(spec.buyer).as_f64();
    let flex = inst.prosumers[spec.buyer]
        .pd_flex_max
        .iter()
        .map(|v| v.as_f64())
        .fold(0.0, f64::max);
    let ok = |v: Vec<Contract>| v.into_iter().map(Ok).collect();
    match kind {
        SweepKind::Power => {
            let q = vec![Kw(1000); h];
            let base = Contract {
                id: 0,
                buyer: spec.buyer,
                seller: spec.seller,
                q_buy: q.clone(),
                q_sell: q,
                windows: Vec::new(),
            };
            Ok(ok(ratio_sweep(&base, buyer_min, flex, ratios)?))
        }
        SweepKind::Energy => {
            let sell: Vec<Kw> = spec.energy_shape.iter().map(|&v| Kw::round_mw(v)).collect();
            let total: Kw = sell.iter().copied().sum();
            let flat = vec![total.mw() / h as f64; h];
            let base = Contract {
                id: 0,
                buyer: spec.buyer,
                seller: spec.seller,
                q_buy: round_to_windows(&flat, &[(0..h).collect()], &[total]),
                q_sell: sell,
                windows: Vec::new(),
            };
            Ok(ok(ratio_sweep(&base, buyer_min, flex, ratios)?))
        }
        SweepKind::CommonPart => Ok(ratios
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                common_part_sweep(spec.buyer, spec.seller, &spec.seller_profile, &spec.buyer_profile, &[r])
                    .map(|mut v| {
                        let mut c = v.remove(0);
                        c.id = k;
                        c
                    })
                    .map_err(|e| e.to_string())
            })
            .collect()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub status: Option<SolveStatus>,
    /// Why the point produced no dispatch.
    pub error: Option<String>,
    pub indices: Option<EconomicIndices<f64>>,
    pub kkt: Option<KktAudit>,
    /// `Σ_i P^B_{i,t}` (MW).
    pub imbalance: Vec<f64>,
    pub energy: Vec<f64>,
    pub reserve: Vec<f64>,
    /// Expected `P^E` per prosumer and period (MW).
    pub market_output: Vec<Vec<f64>>,
}

impl SweepPoint {
    fn failed(ratio: f64, status: Option<SolveStatus>, error: String) -> Self {
        SweepPoint {
            ratio,
            status,
            error: Some(error),
            indices: None,
            kkt: None,
            imbalance: Vec::new(),
            energy: Vec::new(),
            reserve: Vec::new(),
            market_output: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub baseline_surplus: f64,
    pub points: Vec<SweepPoint>,
}

/// Solves the no-trade baseline and one instance per ratio. Failed points
/// are recorded; only a failed baseline aborts.
pub fn sweep<T: Scalar>(
    inst: &Instance<'_, T>,
    spec: &SweepSpec,
    kind: SweepKind,
    ratios: &[f64],
) -> Result<SweepTable, AnalysisError> {
    let base = inst.solve(&inst.zero_plan())?;
    let r0 = base
        .result
        .as_ref()
        .ok_or(AnalysisError::BaseNotOptimal(base.report.status))?;
    let contracts = sweep_contracts(inst, spec, kind, ratios)?;
    let (n_p, h) = (inst.n_p(), inst.horizon());
    let points = ratios
        .par_iter()
        .zip(contracts)
        .map(|(&ratio, contract)| {
            let contract = match contract {
                Ok(c) => c,
                Err(e) => return SweepPoint::failed(ratio, None, e),
            };
            let plan = match net_trade(std::slice::from_ref(&contract), n_p, h) {
                Ok(p) => p,
                Err(e) => return SweepPoint::failed(ratio, None, e.to_string()),
            };
            let solved = match inst.solve(&plan) {
                Ok(s) => s,
                Err(e) => return SweepPoint::failed(ratio, None, e.to_string()),
            };
            let status = solved.report.status;
            let kkt = kkt_audit(&solved.assembled.program, &solved.report);
            let Some(r) = solved.result else {
                return SweepPoint::failed(ratio, Some(status), format!("solver ended {status:?}"));
            };
            let ix = indices(&r, &plan, inst.prosumers, r0);
            let omega = &inst.scenarios.omega;
            let market_output = (0..n_p)
                .map(|i| {
                    (0..h)
                        .map(|t| {
                            (0..r.dims.n_s)
                                .map(|s| (omega[s] * r.value(Symbol::MarketOutput, s, i, t)).as_f64())
                                .sum()
                        })
                        .collect()
                })
                .collect();
            SweepPoint {
                ratio,
                status: Some(status),
                error: None,
                indices: Some(EconomicIndices {
                    total_surplus: ix.total_surplus.as_f64(),
                    net_surplus_p2p: ix.net_surplus_p2p.as_f64(),
                    incremental_improvement: ix.incremental_improvement.as_f64(),
                }),
                kkt,
                imbalance: (0..h).map(|t| plan.imbalance_mw::<f64>(t)).collect(),
                energy: r.energy.iter().map(|v| v.as_f64()).collect(),
                reserve: r.reserve.iter().map(|v| v.as_f64()).collect(),
                market_output,
            }
        })
        .collect();
    Ok(SweepTable {
        kind,
        baseline_surplus: base.report.surplus().as_f64(),
        points,
    })
}

impl SweepTable {
    pub fn surpluses(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.indices.map(|ix| ix.total_surplus))
            .collect()
    }

    pub fn improvements(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.indices.map(|ix| ix.incremental_improvement))
            .collect()
    }

    /// One row per ratio: indices and total absolute imbalance. Points
    /// without a dispatch have `optimal = 0` and NaN indices.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "ratio",
            "optimal",
            "total_surplus",
            "net_surplus_p2p",
            "incremental_improvement",
            "imbalance_abs",
        ])?;
        for p in &self.points {
            let ix = p.indices.unwrap_or(EconomicIndices {
                total_surplus: f64::NAN,
                net_surplus_p2p: f64::NAN,
                incremental_improvement: f64::NAN,
            });
            let pim: f64 = p.imbalance.iter().map(|v| v.abs()).sum();
            out.write_record([
                p.ratio.to_string(),
                u8::from(p.indices.is_some()).to_string(),
                ix.total_surplus.to_string(),
                ix.net_surplus_p2p.to_string(),
                ix.incremental_improvement.to_string(),
                pim.to_string(),
            ])?;
        }
        out.flush().map_err(|e| AnalysisError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Hourly curves per ratio: offered energy and reserve, imbalance and
    /// expected market output of each prosumer.
    pub fn write_hourly_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        let n_p = self
            .points
            .iter()
            .map(|p| p.market_output.len())
            .max()
            .unwrap_or(0);
        let mut header = vec!["ratio".to_string(), "t".into(), "E".into(), "R".into(), "imbalance".into()];
        header.extend((0..n_p).map(|i| format!("PE_{i}")));
        out.write_record(&header)?;
        for p in self.points.iter().filter(|p| p.indices.is_some()) {
            for t in 0..p.energy.len() {
                let mut row = vec![
                    p.ratio.to_string(),
                    t.to_string(),
                    p.energy[t].to_string(),
                    p.reserve[t].to_string(),
                    p.imbalance[t].to_string(),
                ];
                row.extend(p.market_output.iter().map(|pe| pe[t].to_string()));
                out.write_record(&row)?;
            }
        }
        out.flush().map_err(|e| AnalysisError::Csv(e.to_string()))?;
        Ok(())
    }
}
