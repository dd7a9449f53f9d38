//! Case files: everything needed to assemble and solve one instance.
//!
//! Schema and consistency errors are reported with JSON-pointer paths.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::der::ProsumerParams;
use crate::grid::{validate_network, Network};
use crate::p2p::{classify, Classification, Contract};
use crate::program::Prices;
use crate::scenario::{self, Forecast, ScenarioSet};
use crate::solve::SolveOptions;
use crate::Scalar;

fn default_n_s() -> usize {
    10
}

fn default_tolerance() -> f64 {
    1e-5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseOptions {
    #[serde(default = "default_n_s")]
    pub n_s: usize,
    #[serde(default)]
    pub seed: u64,
    /// Draw this many scenarios and reduce them to `n_s`.
    #[serde(default)]
    pub reduce_from: Option<usize>,
    #[serde(default)]
    pub solve: SolveOptions,
    /// Relative tolerance of invariance and equality checks.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for CaseOptions {
    fn default() -> Self {
        CaseOptions {
            n_s: default_n_s(),
            seed: 0,
            reduce_from: None,
            solve: SolveOptions::default(),
            tolerance: default_tolerance(),
        }
    }
}

/// Contract families the sweep command derives from a case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub buyer: usize,
    pub seller: usize,
    /// Seller delivery shape of the energy-contract base (MW); the buyer
    /// side receives the same energy as a flat profile.
    pub energy_shape: Vec<f64>,
    /// Seller output profile of the common-part sweep (MW).
    pub seller_profile: Vec<f64>,
    /// Buyer demand profile of the common-part sweep (MW).
    pub buyer_profile: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct CaseFile<T> {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub horizon: usize,
    pub network: Network<T>,
    pub prosumers: Vec<ProsumerParams<T>>,
    pub prices: Prices<T>,
    #[serde(default)]
    pub forecast: Option<Forecast<T>>,
    #[serde(default)]
    pub sigma_pv: T,
    #[serde(default)]
    pub sigma_d: T,
    /// Scenario table (`s,i,t,pv,load`), relative to the case file.
    #[serde(default)]
    pub scenario_file: Option<String>,
    #[serde(default)]
    pub contracts: Vec<Contract>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub options: CaseOptions,
}

/// One consistency problem at a JSON-pointer location.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid case:\n  {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Issue>),
    #[error("scenarios: {0}")]
    Scenario(#[from] scenario::ScenarioError),
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl CaseFile<f64> {
    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| CaseError::Schema {
            pointer: pointer_of(e.path()),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CaseError> {
        let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }
}

impl<T: Scalar + Serialize> CaseFile<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case data serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fixture_hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("case data serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl<T: Scalar> CaseFile<T> {
    /// Every cross-reference and length problem, with locations.
    pub fn validate(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut issue = |pointer: String, message: String| out.push(Issue { pointer, message });
        let h = self.horizon;
        let n_p = self.prosumers.len();
        if h == 0 {
            issue("/horizon".into(), "must be at least 1".into());
        }
        for v in validate_network(&self.network).violations {
            issue("/network".into(), v.to_string());
        }
        for (k, bus) in self.network.buses.iter().enumerate() {
            if let Some(i) = bus.prosumer {
                if i >= n_p {
                    issue(
                        format!("/network/buses/{k}/prosumer"),
                        format!("prosumer {i} does not exist"),
                    );
                }
            }
        }
        for (k, p) in self.prosumers.iter().enumerate() {
            if p.i != k {
                issue(format!("/prosumers/{k}/i"), format!("expected {k}"));
            }
            if self.network.bus_of(k).is_none() {
                issue(format!("/prosumers/{k}"), "not placed on any bus".into());
            }
            if p.pd_flex_max.len() != h {
                issue(
                    format!("/prosumers/{k}/pd_flex_max"),
                    format!("has {} entries, horizon is {h}", p.pd_flex_max.len()),
                );
            }
            for msg in p.validate(h) {
                if !msg.contains("pd_flex_max length") {
                    issue(format!("/prosumers/{k}"), msg);
                }
            }
        }
        for (name, v) in [("energy", &self.prices.energy), ("reserve", &self.prices.reserve)] {
            if v.len() != h {
                issue(
                    format!("/prices/{name}"),
                    format!("has {} entries, horizon is {h}", v.len()),
                );
            }
        }
        match (&self.forecast, &self.scenario_file) {
            (None, None) => issue("/forecast".into(), "need a forecast or a scenario_file".into()),
            (Some(_), Some(_)) => issue(
                "/scenario_file".into(),
                "give either a forecast or a scenario_file, not both".into(),
            ),
            (Some(f), None) => {
                for (name, rows) in [("pv", &f.pv), ("load", &f.load)] {
                    if rows.len() != n_p {
                        issue(
                            format!("/forecast/{name}"),
                            format!("has {} rows, case has {n_p} prosumers", rows.len()),
                        );
                    }
                    for (i, r) in rows.iter().enumerate() {
                        if r.len() != h {
                            issue(
                                format!("/forecast/{name}/{i}"),
                                format!("has {} entries, horizon is {h}", r.len()),
                            );
                        }
                        if r.iter().any(|&x| x < T::zero()) {
                            issue(format!("/forecast/{name}/{i}"), "negative value".into());
                        }
                    }
                }
            }
            (None, Some(_)) => {}
        }
        if self.sigma_pv < T::zero() {
            issue("/sigma_pv".into(), "must be >= 0".into());
        }
        if self.sigma_d < T::zero() {
            issue("/sigma_d".into(), "must be >= 0".into());
        }
        if self.options.n_s == 0 {
            issue("/options/n_s".into(), "must be at least 1".into());
        }
        if let Some(from) = self.options.reduce_from {
            if from < self.options.n_s {
                issue(
                    "/options/reduce_from".into(),
                    "must be at least n_s".into(),
                );
            }
        }
        for (k, c) in self.contracts.iter().enumerate() {
            let at = format!("/contracts/{k}");
            match classify(c) {
                Classification::Power | Classification::Energy => {}
                Classification::Invalid { window, buy, sell } => issue(
                    at.clone(),
                    format!("window {window} buys {buy} but sells {sell}"),
                ),
                Classification::Malformed(m) => issue(at.clone(), m),
            }
            if c.horizon() != h {
                issue(at.clone(), format!("has {} periods, horizon is {h}", c.horizon()));
            }
            if c.buyer >= n_p || c.seller >= n_p {
                issue(at, "references a prosumer that does not exist".into());
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.buyer >= n_p || sw.seller >= n_p || sw.buyer == sw.seller {
                issue("/sweep".into(), "buyer and seller must be distinct prosumers".into());
            }
            for (name, v) in [
                ("energy_shape", &sw.energy_shape),
                ("seller_profile", &sw.seller_profile),
                ("buyer_profile", &sw.buyer_profile),
            ] {
                if v.len() != h {
                    issue(
                        format!("/sweep/{name}"),
                        format!("has {} entries, horizon is {h}", v.len()),
                    );
                }
            }
        }
        out
    }

    pub fn check(&self) -> Result<(), CaseError> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CaseError::Invalid(issues))
        }
    }

    /// Scenario set of the case: the referenced table, or draws around the
    /// forecast (optionally reduced).
    pub fn scenarios(&self, base_dir: &Path) -> Result<ScenarioSet<T>, CaseError> {
        if let Some(file) = &self.scenario_file {
            let path = base_dir.join(file);
            let f = std::fs::File::open(&path).map_err(|source| CaseError::Io { path, source })?;
            return Ok(ScenarioSet::read_csv(f)?);
        }
        let forecast = self.forecast.as_ref().ok_or_else(|| {
            CaseError::Invalid(vec![Issue {
                pointer: "/forecast".into(),
                message: "missing".into(),
            }])
        })?;
        self.generate_scenarios(forecast, self.options.n_s, self.options.seed)
    }

    /// Draws `n_s` scenarios (after reduction when configured).
    pub fn generate_scenarios(
        &self,
        forecast: &Forecast<T>,
        n_s: usize,
        seed: u64,
    ) -> Result<ScenarioSet<T>, CaseError> {
        let draws = self.options.reduce_from.unwrap_or(n_s).max(n_s);
        let set = scenario::generate(forecast, self.sigma_pv, self.sigma_d, draws, seed)?;
        Ok(if draws > n_s {
            scenario::reduce(&set, n_s)?
        } else {
            set
        })
    }
}
