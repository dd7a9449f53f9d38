//! Monte-Carlo scenarios for PV output and load.
//!
//! Each scenario draws from its own ChaCha20 stream (`seed`, stream `s`),
//! so generation parallelizes without changing a single bit of the result.
//! Deviations are independent normals per (scenario, prosumer, period);
//! negative draws are clamped to zero and counted.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::Scalar;

pub const ALGORITHM: &str = "chacha20-stream-per-scenario/ziggurat-normal";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario count must be at least 1")]
    NoScenarios,
    #[error("standard deviations must be non-negative")]
    NegativeSigma,
    #[error("forecast rows have inconsistent lengths")]
    Ragged,
    #[error("cannot keep {k} of {n} scenarios")]
    ReduceOutOfRange { k: usize, n: usize },
    #[error("scenario weights must be positive and sum to 1 (sum {0})")]
    BadWeights(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {msg}")]
    CsvShape { row: usize, msg: String },
}

/// Predicted PV output and load per prosumer and period (MW).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forecast<T> {
    pub pv: Vec<Vec<T>>,
    pub load: Vec<Vec<T>>,
}

impl<T: Scalar> Forecast<T> {
    pub fn n_p(&self) -> usize {
        self.load.len()
    }

    pub fn horizon(&self) -> usize {
        self.load.first().map_or(0, Vec::len)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let h = self.horizon();
        if self.pv.len() != self.load.len()
            || self.pv.iter().chain(&self.load).any(|r| r.len() != h)
        {
            return Err(ScenarioError::Ragged);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet<T> {
    pub n_s: usize,
    pub n_p: usize,
    pub horizon: usize,
    pub omega: Vec<T>,
    /// `[s][i][t]`, flattened.
    pub pv: Vec<T>,
    /// `[s][i][t]`, flattened.
    pub load: Vec<T>,
    pub seed: Option<u64>,
    pub algorithm: String,
    /// Number of negative draws clamped to zero.
    pub clamped: usize,
}

impl<T: Scalar> ScenarioSet<T> {
    fn idx(&self, s: usize, i: usize, t: usize) -> usize {
        (s * self.n_p + i) * self.horizon + t
    }

    pub fn pv(&self, s: usize, i: usize, t: usize) -> T {
        self.pv[self.idx(s, i, t)]
    }

    pub fn load(&self, s: usize, i: usize, t: usize) -> T {
        self.load[self.idx(s, i, t)]
    }

    /// Single scenario equal to the forecast.
    pub fn deterministic(forecast: &Forecast<T>) -> Result<Self, ScenarioError> {
        generate(forecast, T::zero(), T::zero(), 1, 0)
    }

    /// Smallest load of prosumer `i` over all scenarios and periods.
    pub fn min_load(&self, i: usize) -> T {
        let mut m = T::infinity();
        for s in 0..self.n_s {
            for t in 0..self.horizon {
                m = m.min(self.load(s, i, t));
            }
        }
        m
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        let sum: T = self.omega.iter().copied().sum();
        if self.omega.len() != self.n_s
            || self.omega.iter().any(|&w| w <= T::zero())
            || (sum - T::one()).abs() > T::of(1e-12).max(T::epsilon() * T::of(16.0))
        {
            return Err(ScenarioError::BadWeights(sum.as_f64()));
        }
        let n = self.n_s * self.n_p * self.horizon;
        if self.pv.len() != n || self.load.len() != n {
            return Err(ScenarioError::Ragged);
        }
        Ok(())
    }

    /// CSV with header `s,i,t,pv,load`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ScenarioError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["s", "i", "t", "pv", "load"])?;
        for s in 0..self.n_s {
            for i in 0..self.n_p {
                for t in 0..self.horizon {
                    out.write_record(&[
                        s.to_string(),
                        i.to_string(),
                        t.to_string(),
                        format!("{:e}", self.pv(s, i, t)),
                        format!("{:e}", self.load(s, i, t)),
                    ])?;
                }
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a `s,i,t,pv,load` table; scenarios get equal weight.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, ScenarioError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<(usize, usize, usize, f64, f64)> = Vec::new();
        for (k, rec) in rdr.deserialize().enumerate() {
            let row: (usize, usize, usize, f64, f64) = rec?;
            if row.3 < 0.0 || row.4 < 0.0 {
                return Err(ScenarioError::CsvShape {
                    row: k + 1,
                    msg: "negative pv or load".into(),
                });
            }
            rows.push(row);
        }
        let n_s = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n_p = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let horizon = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        if n_s == 0 {
            return Err(ScenarioError::NoScenarios);
        }
        let n = n_s * n_p * horizon;
        if rows.len() != n {
            return Err(ScenarioError::CsvShape {
                row: rows.len(),
                msg: format!("expected {n} rows for a dense {n_s}x{n_p}x{horizon} table"),
            });
        }
        let mut set = ScenarioSet {
            n_s,
            n_p,
            horizon,
            omega: vec![T::one() / T::of(n_s as f64); n_s],
            pv: vec![T::nan(); n],
            load: vec![T::nan(); n],
            seed: None,
            algorithm: "csv".into(),
            clamped: 0,
        };
        for (k, (s, i, t, pv, load)) in rows.into_iter().enumerate() {
            let at = set.idx(s, i, t);
            if !set.pv[at].is_nan() {
                return Err(ScenarioError::CsvShape {
                    row: k + 1,
                    msg: format!("duplicate entry ({s},{i},{t})"),
                });
            }
            set.pv[at] = T::of(pv);
            set.load[at] = T::of(load);
        }
        Ok(set)
    }
}

/// Independent normal draws around the forecast, clamped at zero.
///
/// PV deviations apply only where the PV forecast is positive, so prosumers
/// without PV (and night hours) stay at exactly zero.
pub fn generate<T: Scalar>(
    forecast: &Forecast<T>,
    sigma_pv: T,
    sigma_d: T,
    n_s: usize,
    seed: u64,
) -> Result<ScenarioSet<T>, ScenarioError> {
    if n_s == 0 {
        return Err(ScenarioError::NoScenarios);
    }
    if sigma_pv < T::zero() || sigma_d < T::zero() {
        return Err(ScenarioError::NegativeSigma);
    }
    forecast.check()?;
    let (n_p, horizon) = (forecast.n_p(), forecast.horizon());

    let per_scenario: Vec<(Vec<T>, Vec<T>, usize)> = (0..n_s)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut pv = Vec::with_capacity(n_p * horizon);
            let mut load = Vec::with_capacity(n_p * horizon);
            let mut clamped = 0;
            for i in 0..n_p {
                for t in 0..horizon {
                    let z_pv: f64 = StandardNormal.sample(&mut rng);
                    let z_d: f64 = StandardNormal.sample(&mut rng);
                    let mean_pv = forecast.pv[i][t];
                    let v = if mean_pv > T::zero() {
                        mean_pv + sigma_pv * T::of(z_pv)
                    } else {
                        T::zero()
                    };
                    if v < T::zero() {
                        clamped += 1;
                    }
                    pv.push(v.max(T::zero()));
                    let d = forecast.load[i][t] + sigma_d * T::of(z_d);
                    if d < T::zero() {
                        clamped += 1;
                    }
                    load.push(d.max(T::zero()));
                }
            }
            (pv, load, clamped)
        })
        .collect();

    let mut set = ScenarioSet {
        n_s,
        n_p,
        horizon,
        omega: vec![T::one() / T::of(n_s as f64); n_s],
        pv: Vec::with_capacity(n_s * n_p * horizon),
        load: Vec::with_capacity(n_s * n_p * horizon),
        seed: Some(seed),
        algorithm: ALGORITHM.to_string(),
        clamped: 0,
    };
    for (pv, load, clamped) in per_scenario {
        set.pv.extend(pv);
        set.load.extend(load);
        set.clamped += clamped;
    }
    Ok(set)
}

/// Keeps `k` scenarios: sort by total net demand, cut into `k` equal
/// strata, keep each stratum's median member with the stratum's weight.
/// Kept scenarios retain their original relative order.
pub fn reduce<T: Scalar>(set: &ScenarioSet<T>, k: usize) -> Result<ScenarioSet<T>, ScenarioError> {
    let n = set.n_s;
    if k == 0 || k > n {
        return Err(ScenarioError::ReduceOutOfRange { k, n });
    }
    let net = |s: usize| -> T {
        let mut acc = T::zero();
        for i in 0..set.n_p {
            for t in 0..set.horizon {
                acc = acc + set.load(s, i, t) - set.pv(s, i, t);
            }
        }
        acc
    };
    let keys: Vec<T> = (0..n).map(net).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap().then(a.cmp(&b)));

    let mut picked: Vec<(usize, T)> = (0..k)
        .map(|j| {
            let lo = j * n / k;
            let hi = (j + 1) * n / k;
            let members = &order[lo..hi];
            let weight = members.iter().map(|&s| set.omega[s]).sum::<T>();
            (members[(members.len() - 1) / 2], weight)
        })
        .collect();
    picked.sort_by_key(|&(s, _)| s);

    let total: T = picked.iter().map(|&(_, w)| w).sum();
    let block = set.n_p * set.horizon;
    let mut out = ScenarioSet {
        n_s: k,
        n_p: set.n_p,
        horizon: set.horizon,
        omega: picked.iter().map(|&(_, w)| w / total).collect(),
        pv: Vec::with_capacity(k * block),
        load: Vec::with_capacity(k * block),
        seed: set.seed,
        algorithm: set.algorithm.clone(),
        clamped: set.clamped,
    };
    for &(s, _) in &picked {
        out.pv.extend_from_slice(&set.pv[s * block..(s + 1) * block]);
        out.load.extend_from_slice(&set.load[s * block..(s + 1) * block]);
    }
    Ok(out)
}

/// Reads a `i,t,pv_mean,load_mean` table.
pub fn read_forecast_csv<R: Read, T: Scalar>(r: R) -> Result<Forecast<T>, ScenarioError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    let n_p = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let horizon = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != n_p * horizon {
        return Err(ScenarioError::CsvShape {
            row: rows.len(),
            msg: "forecast table is not dense".into(),
        });
    }
    let mut f = Forecast {
        pv: vec![vec![T::zero(); horizon]; n_p],
        load: vec![vec![T::zero(); horizon]; n_p],
    };
    for (i, t, pv, load) in rows {
        f.pv[i][t] = T::of(pv);
        f.load[i][t] = T::of(load);
    }
    Ok(f)
}

pub fn write_forecast_csv<W: Write, T: Scalar>(f: &Forecast<T>, w: W) -> Result<(), ScenarioError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "t", "pv_mean", "load_mean"])?;
    for i in 0..f.n_p() {
        for t in 0..f.horizon() {
            out.write_record(&[
                i.to_string(),
                t.to_string(),
                format!("{:e}", f.pv[i][t]),
                format!("{:e}", f.load[i][t]),
            ])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(pv: f64, load: f64, n_p: usize, h: usize) -> Forecast<f64> {
        Forecast {
            pv: vec![vec![pv; h]; n_p],
            load: vec![vec![load; h]; n_p],
        }
    }

    #[test]
    fn zero_variance_reproduces_forecast() {
        let f = Forecast {
            pv: vec![vec![0.0, 1.5, 2.0]],
            load: vec![vec![1.0, 1.2, 0.9]],
        };
        let set = generate(&f, 0.0, 0.0, 4, 7).unwrap();
        for s in 0..4 {
            for t in 0..3 {
                assert_eq!(set.pv(s, 0, t), f.pv[0][t]);
                assert_eq!(set.load(s, 0, t), f.load[0][t]);
            }
        }
        assert_eq!(set.clamped, 0);
        set.check().unwrap();
    }

    #[test]
    fn sample_mean_converges() {
        // 3σ/√n = 0.024 < 0.03
        let set = generate(&flat(5.0, 5.0, 1, 1), 0.8, 0.8, 10_000, 11).unwrap();
        let mean_pv: f64 = set.pv.iter().sum::<f64>() / 10_000.0;
        let mean_load: f64 = set.load.iter().sum::<f64>() / 10_000.0;
        assert!((mean_pv - 5.0).abs() < 0.03, "{mean_pv}");
        assert!((mean_load - 5.0).abs() < 0.03, "{mean_load}");
    }

    #[test]
    fn draws_are_clamped_and_counted() {
        let set = generate(&flat(0.1, 0.1, 2, 24), 0.8, 0.8, 50, 3).unwrap();
        assert!(set.pv.iter().chain(&set.load).all(|&v| v >= 0.0));
        assert!(set.clamped > 0);
    }

    #[test]
    fn prosumers_without_pv_stay_at_zero() {
        let f = Forecast {
            pv: vec![vec![0.0; 5], vec![1.0; 5]],
            load: vec![vec![1.0; 5], vec![1.0; 5]],
        };
        let set = generate(&f, 0.8, 0.3, 20, 5).unwrap();
        for s in 0..20 {
            for t in 0..5 {
                assert_eq!(set.pv(s, 0, t), 0.0);
            }
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let f = flat(2.0, 1.0, 3, 24);
        let a = generate(&f, 0.8, 0.3, 30, 42).unwrap();
        let b = generate(&f, 0.8, 0.3, 30, 42).unwrap();
        assert_eq!(a, b);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.pv), bits(&b.pv));
        let c = generate(&f, 0.8, 0.3, 30, 43).unwrap();
        assert_ne!(a.pv, c.pv);
    }

    #[test]
    fn scenario_streams_do_not_depend_on_count() {
        let f = flat(2.0, 1.0, 2, 4);
        let small = generate(&f, 0.8, 0.3, 3, 9).unwrap();
        let big = generate(&f, 0.8, 0.3, 8, 9).unwrap();
        assert_eq!(small.pv[..], big.pv[..small.pv.len()]);
    }

    #[test]
    fn reduce_identity_and_degenerate_cases() {
        let set = generate(&flat(2.0, 1.0, 2, 6), 0.8, 0.3, 12, 1).unwrap();
        let same = reduce(&set, 12).unwrap();
        assert_eq!(same.pv, set.pv);
        assert_eq!(same.load, set.load);
        assert_eq!(same.omega, set.omega);

        let one = reduce(&set, 1).unwrap();
        assert_eq!(one.n_s, 1);
        assert_eq!(one.omega, vec![1.0]);

        assert!(matches!(
            reduce(&set, 0),
            Err(ScenarioError::ReduceOutOfRange { k: 0, n: 12 })
        ));
        assert!(reduce(&set, 13).is_err());
    }

    #[test]
    fn reduced_weights_sum_to_one() {
        let set = generate(&flat(2.0, 1.0, 2, 24), 0.8, 0.3, 1000, 2).unwrap();
        let r = reduce(&set, 10).unwrap();
        let sum: f64 = r.omega.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        r.check().unwrap();
    }

    #[test]
    fn csv_round_trip() {
        let set = generate(&flat(2.0, 1.0, 2, 3), 0.8, 0.3, 4, 8).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = ScenarioSet::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(back.pv, set.pv);
        assert_eq!(back.load, set.load);
        assert_eq!(back.omega, set.omega);
        assert!(String::from_utf8(buf).unwrap().starts_with("s,i,t,pv,load\n"));
    }

    #[test]
    fn forecast_csv_round_trip() {
        let f = Forecast {
            pv: vec![vec![0.0, 1.25], vec![0.5, 0.0]],
            load: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        let mut buf = Vec::new();
        write_forecast_csv(&f, &mut buf).unwrap();
        let back: Forecast<f64> = read_forecast_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
    }
}
