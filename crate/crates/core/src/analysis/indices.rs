use serde::{Deserialize, Serialize};

use crate::der::ProsumerParams;
use crate::p2p::NetTradePlan;
use crate::solve::DispatchResult;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconomicIndices<T> {
    pub total_surplus: T,
    pub net_surplus_p2p: T,
    pub incremental_improvement: T,
}

/// Utility buyers draw from the quantities they receive over peer
/// contracts, with their own consumption-utility coefficients.
pub fn p2p_utility<T: Scalar>(plan: &NetTradePlan, prosumers: &[ProsumerParams<T>]) -> T {
    let mut u = T::zero();
    for p in prosumers {
        for t in 0..plan.horizon {
            let pb: T = plan.pb_mw(p.i, t);
            if pb < T::zero() {
                u += p.utility(-pb, T::zero());
            }
        }
    }
    u
}

/// Market revenue plus the buyers' trade utility, less expected
/// generation and degradation cost.
pub fn net_surplus_p2p<T: Scalar>(
    result: &DispatchResult<T>,
    plan: &NetTradePlan,
    prosumers: &[ProsumerParams<T>],
) -> T {
    let b = &result.objective;
    b.energy_revenue + b.reserve_revenue + p2p_utility(plan, prosumers) - b.cost
}

/// Indices of a dispatch under `plan`, measured against the no-trade
/// dispatch `baseline`.
pub fn indices<T: Scalar>(
    result: &DispatchResult<T>,
    plan: &NetTradePlan,
    prosumers: &[ProsumerParams<T>],
    baseline: &DispatchResult<T>,
) -> EconomicIndices<T> {
    let zero = NetTradePlan::zero(plan.n_p, plan.horizon);
    let net = net_surplus_p2p(result, plan, prosumers);
    EconomicIndices {
        total_surplus: result.objective.total,
        net_surplus_p2p: net,
        incremental_improvement: net - net_surplus_p2p(baseline, &zero, prosumers),
    }
}
