//! Bilateral P2P contracts, their classification, the net trade per
//! prosumer and the contract families used by the sweep experiments.
//!
//! Quantities are held as whole kilowatts so window balances are exact.
//! JSON and CSV carry MW.

use std::fmt;
use std::io::Write;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Scalar;

/// Power in whole kilowatts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Kw(pub i64);

impl Kw {
    pub const ZERO: Kw = Kw(0);

    /// Exact conversion; fails when `mw` is not a whole number of kW.
    pub fn from_mw(mw: f64) -> Result<Kw, P2pError> {
        let kw = mw * 1000.0;
        let r = kw.round();
        if !mw.is_finite() || (kw - r).abs() > 1e-6 * r.abs().max(1.0) {
            return Err(P2pError::OffGrid(mw));
        }
        Ok(Kw(r as i64))
    }

    /// Nearest kW.
    pub fn round_mw(mw: f64) -> Kw {
        Kw((mw * 1000.0).round() as i64)
    }

    pub fn mw(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn mw_as<T: Scalar>(self) -> T {
        T::of(self.0 as f64) / T::of(1000.0)
    }

    pub fn abs(self) -> Kw {
        Kw(self.0.abs())
    }
}

impl fmt::Display for Kw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} MW", self.mw())
    }
}

impl Add for Kw {
    type Output = Kw;
    fn add(self, o: Kw) -> Kw {
        Kw(self.0 + o.0)
    }
}

impl Sub for Kw {
    type Output = Kw;
    fn sub(self, o: Kw) -> Kw {
        Kw(self.0 - o.0)
    }
}

impl Neg for Kw {
    type Output = Kw;
    fn neg(self) -> Kw {
        Kw(-self.0)
    }
}

impl AddAssign for Kw {
    fn add_assign(&mut self, o: Kw) {
        self.0 += o.0;
    }
}

impl SubAssign for Kw {
    fn sub_assign(&mut self, o: Kw) {
        self.0 -= o.0;
    }
}

impl Sum for Kw {
    fn sum<I: Iterator<Item = Kw>>(iter: I) -> Kw {
        iter.fold(Kw::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Kw> for Kw {
    fn sum<I: Iterator<Item = &'a Kw>>(iter: I) -> Kw {
        iter.copied().sum()
    }
}

impl Serialize for Kw {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.mw())
    }
}

impl<'de> Deserialize<'de> for Kw {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Kw, D::Error> {
        let mw = f64::deserialize(d)?;
        Kw::from_mw(mw).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum P2pError {
    #[error("{0} MW is not a whole number of kW")]
    OffGrid(f64),
    #[error("contract {id}: {reason}")]
    InvalidContract { id: usize, reason: String },
    #[error("contract {id} references prosumer {prosumer} but only {n_p} exist")]
    UnknownProsumer { id: usize, prosumer: usize, n_p: usize },
    #[error("contract {id} has {got} periods, horizon is {horizon}")]
    HorizonMismatch { id: usize, got: usize, horizon: usize },
    #[error("ratio denominator must be positive, got {0} MW")]
    NonPositiveDenominator(f64),
    #[error("base contract carries no buyer quantity")]
    EmptyBase,
    #[error("common-part ratio {ratio} is below the {min} reachable with these profiles")]
    Unreachable { ratio: f64, min: f64 },
    #[error("profiles must be non-negative, of equal length and carry energy")]
    BadProfiles,
    #[error("csv: {0}")]
    Csv(String),
}

/// `{B_j, S_j, Q_Bj, Q_Sj, T_j}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub id: usize,
    pub buyer: usize,
    pub seller: usize,
    pub q_buy: Vec<Kw>,
    pub q_sell: Vec<Kw>,
    /// Balancing windows partitioning the horizon; empty means one window
    /// over the whole horizon.
    #[serde(default)]
    pub windows: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    /// Quantities match in every period.
    Power,
    /// Quantities match over every window but not in every period.
    Energy,
    /// First window whose totals differ.
    Invalid { window: usize, buy: Kw, sell: Kw },
    /// Structural problem (lengths, negative quantities, windows).
    Malformed(String),
}

impl Contract {
    pub fn horizon(&self) -> usize {
        self.q_sell.len()
    }

    /// Explicit windows, or the whole horizon.
    pub fn balancing_windows(&self) -> Vec<Vec<usize>> {
        if self.windows.is_empty() {
            vec![(0..self.horizon()).collect()]
        } else {
            self.windows.clone()
        }
    }

    fn structural_problem(&self) -> Option<String> {
        if self.buyer == self.seller {
            return Some("buyer and seller coincide".into());
        }
        if self.q_buy.len() != self.q_sell.len() {
            return Some("q_buy and q_sell lengths differ".into());
        }
        if self.q_buy.iter().chain(&self.q_sell).any(|q| q.0 < 0) {
            return Some("negative quantity".into());
        }
        let mut covered = vec![0u32; self.horizon()];
        for w in self.balancing_windows() {
            for t in w {
                match covered.get_mut(t) {
                    Some(c) => *c += 1,
                    None => return Some(format!("window period {t} beyond the horizon")),
                }
            }
        }
        if covered.iter().any(|&c| c != 1) {
            return Some("windows do not partition the horizon".into());
        }
        None
    }

    /// Per-period common part `min(q_sell, q_buy)`.
    pub fn overlap(&self) -> Vec<Kw> {
        self.q_sell
            .iter()
            .zip(&self.q_buy)
            .map(|(&s, &b)| s.min(b))
            .collect()
    }

    /// Common part relative to the larger of the two totals.
    pub fn common_part_ratio(&self) -> f64 {
        let denom = self
            .q_sell
            .iter()
            .sum::<Kw>()
            .max(self.q_buy.iter().sum::<Kw>());
        if denom.0 == 0 {
            return 0.0;
        }
        self.overlap().iter().sum::<Kw>().0 as f64 / denom.0 as f64
    }
}

pub fn classify(c: &Contract) -> Classification {
    if let Some(msg) = c.structural_problem() {
        return Classification::Malformed(msg);
    }
    for (k, w) in c.balancing_windows().iter().enumerate() {
        let buy: Kw = w.iter().map(|&t| c.q_buy[t]).sum();
        let sell: Kw = w.iter().map(|&t| c.q_sell[t]).sum();
        if buy != sell {
            return Classification::Invalid {
                window: k,
                buy,
                sell,
            };
        }
    }
    if c.q_buy == c.q_sell {
        Classification::Power
    } else {
        Classification::Energy
    }
}

/// Net P2P position per prosumer and period, seller-positive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetTradePlan {
    pub n_p: usize,
    pub horizon: usize,
    /// `pb[i][t]`
    pub pb: Vec<Vec<Kw>>,
    /// `Σ_i pb[i][t]`
    pub imbalance: Vec<Kw>,
}

impl NetTradePlan {
    pub fn zero(n_p: usize, horizon: usize) -> Self {
        NetTradePlan {
            n_p,
            horizon,
            pb: vec![vec![Kw::ZERO; horizon]; n_p],
            imbalance: vec![Kw::ZERO; horizon],
        }
    }

    pub fn pb_mw<T: Scalar>(&self, i: usize, t: usize) -> T {
        self.pb[i][t].mw_as()
    }

    pub fn imbalance_mw<T: Scalar>(&self, t: usize) -> T {
        self.imbalance[t].mw_as()
    }

    pub fn is_zero(&self) -> bool {
        self.pb.iter().flatten().all(|q| q.0 == 0)
    }

    pub fn is_balanced(&self) -> bool {
        self.imbalance.iter().all(|q| q.0 == 0)
    }

    /// Element-wise sum of two plans over the same dimensions.
    pub fn combine(&self, other: &NetTradePlan) -> NetTradePlan {
        assert_eq!((self.n_p, self.horizon), (other.n_p, other.horizon));
        let mut out = self.clone();
        for i in 0..self.n_p {
            for t in 0..self.horizon {
                out.pb[i][t] += other.pb[i][t];
            }
        }
        for t in 0..self.horizon {
            out.imbalance[t] += other.imbalance[t];
        }
        out
    }

    /// CSV with header `i,t,pb` (MW).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), P2pError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| P2pError::Csv(e.to_string());
        out.write_record(["i", "t", "pb"]).map_err(err)?;
        for i in 0..self.n_p {
            for t in 0..self.horizon {
                out.write_record(&[i.to_string(), t.to_string(), self.pb[i][t].mw().to_string()])
                    .map_err(err)?;
            }
        }
        out.flush().map_err(|e| P2pError::Csv(e.to_string()))
    }
}

/// Net trade of a contract book; rejects the first contract that is not a
/// power or energy contract.
pub fn net_trade(book: &[Contract], n_p: usize, horizon: usize) -> Result<NetTradePlan, P2pError> {
    let mut plan = NetTradePlan::zero(n_p, horizon);
    for c in book {
        match classify(c) {
            Classification::Power | Classification::Energy => {}
            Classification::Invalid { window, buy, sell } => {
                return Err(P2pError::InvalidContract {
                    id: c.id,
                    reason: format!("window {window} buys {buy} but sells {sell}"),
                })
            }
            Classification::Malformed(reason) => {
                return Err(P2pError::InvalidContract { id: c.id, reason })
            }
        }
        if c.horizon() != horizon {
            return Err(P2pError::HorizonMismatch {
                id: c.id,
                got: c.horizon(),
                horizon,
            });
        }
        for p in [c.buyer, c.seller] {
            if p >= n_p {
                return Err(P2pError::UnknownProsumer {
                    id: c.id,
                    prosumer: p,
                    n_p,
                });
            }
        }
        for t in 0..horizon {
            plan.pb[c.seller][t] += c.q_sell[t];
            plan.pb[c.buyer][t] -= c.q_buy[t];
            plan.imbalance[t] += c.q_sell[t] - c.q_buy[t];
        }
    }
    Ok(plan)
}

/// Rounds `values` to kW, then moves each window's rounding residual onto
/// the window's largest `target` entry so the window total equals `total`.
pub(crate) fn round_to_windows(values: &[f64], windows: &[Vec<usize>], totals: &[Kw]) -> Vec<Kw> {
    let mut out: Vec<Kw> = values.iter().map(|&v| Kw::round_mw(v.max(0.0))).collect();
    for (w, &total) in windows.iter().zip(totals) {
        let have: Kw = w.iter().map(|&t| out[t]).sum();
        let diff = total - have;
        if diff.0 != 0 {
            let &t = w.iter().max_by_key(|&&t| (out[t], std::cmp::Reverse(t))).expect("window");
            out[t] += diff;
        }
    }
    out
}

/// The P2P trading ratio `max_t q_buy,t / (buyer_load_min − flex_cap)`.
pub fn trading_ratio(c: &Contract, buyer_load_min: f64, flex_cap: f64) -> f64 {
    let peak = c.q_buy.iter().copied().max().unwrap_or(Kw::ZERO);
    peak.mw() / (buyer_load_min - flex_cap)
}

/// Scales `base` so that its peak buyer quantity equals
/// `ratio · (buyer_load_min − flex_cap)` for every ratio.
///
/// A power base yields power contracts. For an energy base the seller side
/// is re-balanced per window after rounding.
pub fn ratio_sweep(
    base: &Contract,
    buyer_load_min: f64,
    flex_cap: f64,
    ratios: &[f64],
) -> Result<Vec<Contract>, P2pError> {
    let denom = buyer_load_min - flex_cap;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(P2pError::NonPositiveDenominator(denom));
    }
    match classify(base) {
        Classification::Power | Classification::Energy => {}
        _ => {
            return Err(P2pError::InvalidContract {
                id: base.id,
                reason: "base contract is not balanced".into(),
            })
        }
    }
    let peak = base.q_buy.iter().copied().max().unwrap_or(Kw::ZERO);
    if peak.0 <= 0 {
        return Err(P2pError::EmptyBase);
    }
    let power = base.q_buy == base.q_sell;
    let windows = base.balancing_windows();
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(k, &ratio)| {
            let scale = ratio * denom / peak.mw();
            let q_buy: Vec<Kw> = base
                .q_buy
                .iter()
                .map(|q| Kw::round_mw(q.mw() * scale))
                .collect();
            let q_sell = if power {
                q_buy.clone()
            } else {
                let totals: Vec<Kw> = windows.iter().map(|w| w.iter().map(|&t| q_buy[t]).sum()).collect();
                let raw: Vec<f64> = base.q_sell.iter().map(|q| q.mw() * scale).collect();
                round_to_windows(&raw, &windows, &totals)
            };
            Contract {
                id: base.id + k,
                buyer: base.buyer,
                seller: base.seller,
                q_buy,
                q_sell,
                windows: base.windows.clone(),
            }
        })
        .collect())
}

/// Energy contracts with a prescribed common-part ratio.
///
/// Both profiles are scaled to the smaller of their totals `W`. The seller
/// delivers the scaled seller profile `s`; the buyer receives
/// `(1 − λ)·b + λ·s`, whose overlap with `s` grows linearly in `λ` from the
/// profiles' natural overlap to `W`. Each ratio fixes `λ`; ratio 1 yields
/// a power contract.
pub fn common_part_sweep(
    buyer: usize,
    seller: usize,
    seller_profile: &[f64],
    buyer_profile: &[f64],
    ratios: &[f64],
) -> Result<Vec<Contract>, P2pError> {
    let n = seller_profile.len();
    let bad = |v: &[f64]| v.iter().any(|&x| !x.is_finite() || x < 0.0);
    if n == 0 || buyer_profile.len() != n || bad(seller_profile) || bad(buyer_profile) {
        return Err(P2pError::BadProfiles);
    }
    let (ts, tb): (f64, f64) = (seller_profile.iter().sum(), buyer_profile.iter().sum());
    if ts <= 0.0 || tb <= 0.0 {
        return Err(P2pError::BadProfiles);
    }
    let w_total = Kw::round_mw(ts.min(tb));
    let s: Vec<f64> = seller_profile.iter().map(|x| x * w_total.mw() / ts).collect();
    let b: Vec<f64> = buyer_profile.iter().map(|x| x * w_total.mw() / tb).collect();
    let q_sell = round_to_windows(&s, &[(0..n).collect()], &[w_total]);
    let s: Vec<f64> = q_sell.iter().map(|q| q.mw()).collect();

    let base: f64 = s.iter().zip(&b).map(|(x, y)| x.min(*y)).sum();
    let slope: f64 = s.iter().zip(&b).map(|(x, y)| (x - y).max(0.0)).sum();
    let min_ratio = base / w_total.mw();
    ratios
        .iter()
        .enumerate()
        .map(|(k, &ratio)| {
            if ratio < min_ratio - 1e-9 || ratio > 1.0 + 1e-12 {
                return Err(P2pError::Unreachable {
                    ratio,
                    min: min_ratio,
                });
            }
            let lambda = if slope > 0.0 {
                ((ratio * w_total.mw() - base) / slope).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let q_buy = if lambda >= 1.0 {
                q_sell.clone()
            } else {
                let raw: Vec<f64> = s
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (1.0 - lambda) * y + lambda * x)
                    .collect();
                round_to_windows(&raw, &[(0..n).collect()], &[w_total])
            };
            Ok(Contract {
                id: k,
                buyer,
                seller,
                q_buy,
                q_sell: q_sell.clone(),
                windows: Vec::new(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BookKind {
    Power,
    Energy,
}

/// Random book of `n_contracts` between distinct prosumers with per-period
/// quantities up to `max_q`. Energy contracts keep the seller profile and
/// redistribute the same total over the buyer's periods.
pub fn random_book(
    kind: BookKind,
    n_p: usize,
    horizon: usize,
    n_contracts: usize,
    max_q: Kw,
    seed: u64,
) -> Vec<Contract> {
    assert!(n_p >= 2, "a contract needs two prosumers");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n_contracts)
        .map(|id| {
            let seller = rng.gen_range(0..n_p);
            let mut buyer = rng.gen_range(0..n_p - 1);
            if buyer >= seller {
                buyer += 1;
            }
            let q_sell: Vec<Kw> = (0..horizon).map(|_| Kw(rng.gen_range(0..=max_q.0))).collect();
            let q_buy = match kind {
                BookKind::Power => q_sell.clone(),
                BookKind::Energy => {
                    let total: Kw = q_sell.iter().sum();
                    let weights: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let wsum: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
                    let raw: Vec<f64> = weights.iter().map(|w| w / wsum * total.mw()).collect();
                    round_to_windows(&raw, &[(0..horizon).collect()], &[total])
                }
            };
            Contract {
                id,
                buyer,
                seller,
                q_buy,
                q_sell,
                windows: Vec::new(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(v: &[f64]) -> Vec<Kw> {
        v.iter().map(|&x| Kw::from_mw(x).unwrap()).collect()
    }

    fn contract(buyer: usize, seller: usize, q_buy: &[f64], q_sell: &[f64]) -> Contract {
        Contract {
            id: 7,
            buyer,
            seller,
            q_buy: kw(q_buy),
            q_sell: kw(q_sell),
            windows: Vec::new(),
        }
    }

    /// Seller output over hours 8–19, buyer demand all day, 20 MWh each.
    fn daily_profiles() -> (Vec<f64>, Vec<f64>) {
        let mut seller = vec![0.0; 24];
        let shape = [0.5, 1.0, 1.5, 2.0, 2.5, 2.5, 2.5, 2.5, 2.0, 1.5, 1.0, 0.5];
        seller[8..20].copy_from_slice(&shape);
        let mut buyer = vec![0.8; 24];
        for b in &mut buyer[17..21] {
            *b = 1.0;
        }
        (seller, buyer)
    }

    #[test]
    fn kw_grid_is_exact() {
        assert_eq!(Kw::from_mw(1.234).unwrap(), Kw(1234));
        assert!(Kw::from_mw(0.0005).is_err());
        assert_eq!(Kw::round_mw(0.0006), Kw(1));
        let back: Kw = serde_json::from_str("0.25").unwrap();
        assert_eq!(back, Kw(250));
        assert_eq!(serde_json::to_string(&Kw(250)).unwrap(), "0.25");
    }

    #[test]
    fn daily_energy_contract_from_the_profile_figure() {
        let (seller, buyer) = daily_profiles();
        assert_eq!(seller.iter().sum::<f64>(), 20.0);
        assert!((buyer.iter().sum::<f64>() - 20.0).abs() < 1e-12);
        let c = contract(1, 0, &buyer, &seller);
        assert_eq!(classify(&c), Classification::Energy);
    }

    #[test]
    fn classification_cases() {
        let c = contract(1, 0, &[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(classify(&c), Classification::Power);
        let c = contract(1, 0, &[1.0, 2.0], &[2.0, 2.0]);
        assert_eq!(
            classify(&c),
            Classification::Invalid {
                window: 0,
                buy: Kw(3000),
                sell: Kw(4000)
            }
        );
        let mut c = contract(1, 0, &[1.0, 2.0], &[2.0, 1.0]);
        assert_eq!(classify(&c), Classification::Energy);
        c.windows = vec![vec![0], vec![1]];
        assert!(matches!(classify(&c), Classification::Invalid { window: 0, .. }));
        c.windows = vec![vec![0]];
        assert!(matches!(classify(&c), Classification::Malformed(_)));
        let c = contract(1, 1, &[1.0], &[1.0]);
        assert!(matches!(classify(&c), Classification::Malformed(_)));
    }

    #[test]
    fn net_trade_examples() {
        let empty = net_trade(&[], 3, 2).unwrap();
        assert!(empty.is_zero() && empty.is_balanced());

        let c = contract(1, 0, &[1.0, 3.0], &[2.0, 2.0]);
        let plan = net_trade(&[c], 2, 2).unwrap();
        assert_eq!(plan.pb[0], kw(&[2.0, 2.0]));
        assert_eq!(plan.pb[1], kw(&[-1.0, -3.0]));
        assert_eq!(plan.imbalance, kw(&[1.0, -1.0]));
    }

    #[test]
    fn net_trade_rejects_invalid_contracts_by_id() {
        let c = contract(1, 0, &[1.0, 2.0], &[2.0, 2.0]);
        let err = net_trade(&[c], 2, 2).unwrap_err();
        assert!(matches!(err, P2pError::InvalidContract { id: 7, .. }));
        let c = contract(5, 0, &[1.0], &[1.0]);
        assert!(matches!(
            net_trade(&[c], 2, 1),
            Err(P2pError::UnknownProsumer { prosumer: 5, .. })
        ));
    }

    #[test]
    fn power_books_are_balanced() {
        let book = random_book(BookKind::Power, 4, 24, 6, Kw(500), 3);
        assert!(book.iter().all(|c| classify(c) == Classification::Power));
        assert!(net_trade(&book, 4, 24).unwrap().is_balanced());
    }

    #[test]
    fn energy_books_balance_per_window_only() {
        let book = random_book(BookKind::Energy, 2, 24, 5, Kw(500), 4);
        for c in &book {
            assert_eq!(classify(c), Classification::Energy);
        }
        let plan = net_trade(&book, 2, 24).unwrap();
        assert!(!plan.is_balanced());
        assert_eq!(plan.imbalance.iter().sum::<Kw>(), Kw::ZERO);
    }

    #[test]
    fn ratio_sweep_round_trips_the_ratio() {
        let base = contract(1, 0, &[1.0; 24], &[1.0; 24]);
        let ratios = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.4];
        let sweep = ratio_sweep(&base, 2.35, 0.25, &ratios).unwrap();
        assert!(sweep[0].q_buy.iter().all(|q| q.0 == 0));
        for (c, &r) in sweep.iter().zip(&ratios) {
            assert_eq!(classify(c), Classification::Power);
            assert!((trading_ratio(c, 2.35, 0.25) - r).abs() <= 0.0005 / 2.1);
        }
        // ratio 1: the buyer's smallest net demand is met exactly
        assert_eq!(sweep[5].q_buy[0], Kw(2100));
        assert!(ratio_sweep(&base, 0.25, 0.25, &ratios).is_err());
    }

    #[test]
    fn ratio_sweep_keeps_energy_contracts_balanced() {
        let (seller, buyer) = daily_profiles();
        let base = contract(1, 0, &buyer, &seller);
        let sweep = ratio_sweep(&base, 2.0, 0.25, &[0.2, 0.5, 0.9]).unwrap();
        for c in &sweep {
            assert_eq!(classify(c), Classification::Energy);
        }
    }

    #[test]
    fn common_part_examples() {
        let (seller, buyer) = daily_profiles();
        // overlap support of the natural profiles is the seller's day
        let c = contract(1, 0, &buyer, &seller);
        let support: Vec<usize> = c
            .overlap()
            .iter()
            .enumerate()
            .filter(|(_, q)| q.0 > 0)
            .map(|(t, _)| t)
            .collect();
        assert_eq!(support, (8..=19).collect::<Vec<_>>());

        let min = c.common_part_ratio();
        let sweep = common_part_sweep(1, 0, &seller, &buyer, &[min, 0.7, 0.85, 1.0]).unwrap();
        for (c, r) in sweep.iter().zip([min, 0.7, 0.85, 1.0]) {
            assert!((c.common_part_ratio() - r).abs() < 1e-3, "{r}");
        }
        assert_eq!(classify(&sweep[3]), Classification::Power);
        assert_eq!(classify(&sweep[1]), Classification::Energy);
        assert!(matches!(
            common_part_sweep(1, 0, &seller, &buyer, &[0.1]),
            Err(P2pError::Unreachable { .. })
        ));
    }

    #[test]
    fn identical_and_disjoint_profiles() {
        let p = [1.0, 2.0, 0.5];
        let c = common_part_sweep(1, 0, &p, &p, &[1.0]).unwrap();
        assert_eq!(classify(&c[0]), Classification::Power);
        assert_eq!(c[0].common_part_ratio(), 1.0);

        let day = [0.0, 2.0, 2.0, 0.0];
        let night = [2.0, 0.0, 0.0, 2.0];
        let c = common_part_sweep(1, 0, &day, &night, &[0.0]).unwrap();
        assert_eq!(c[0].common_part_ratio(), 0.0);
        assert_eq!(classify(&c[0]), Classification::Energy);
    }

    #[test]
    fn plan_csv_has_header() {
        let c = contract(1, 0, &[1.0], &[1.0]);
        let plan = net_trade(&[c], 2, 1).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,t,pb\n0,0,1\n1,0,-1\n");
    }

    #[test]
    fn contract_json_round_trip() {
        let json = r#"{"id":3,"buyer":1,"seller":0,"q_buy":[1.5,0.5],"q_sell":[1.0,1.0],"windows":[[0,1]]}"#;
        let c: Contract = serde_json::from_str(json).unwrap();
        assert_eq!(c.q_buy, vec![Kw(1500), Kw(500)]);
        assert_eq!(classify(&c), Classification::Energy);
        let back: Contract = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let off = r#"{"id":3,"buyer":1,"seller":0,"q_buy":[1.0005],"q_sell":[1.0005]}"#;
        assert!(serde_json::from_str::<Contract>(off).is_err());
    }
}
