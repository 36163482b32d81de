//! Analyzer thresholds and scan-wide settings.
//!
//! Every threshold that drives a signal lives here so that a scan can be
//! reproduced from its summary's config echo alone.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::reach::DepKind;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid percent {0:?}: expected a decimal in (0, 100]")]
    InvalidPercent(String),
    #[error("inactivity window must be positive")]
    NonPositiveWindow,
    #[error("dependency kinds must not be empty")]
    NoDepKinds,
    #[error("unknown dependency kind {0:?}")]
    UnknownDepKind(String),
    #[error("popular sample size must be at least 1")]
    ZeroPopularN,
}

/// A decimal percentage kept as an exact fraction so cutoffs never suffer
/// floating point drift (`0.1` of 10,000 is exactly 10).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Percent {
    numer: u64,
    denom: u64,
}

impl Percent {
    pub fn new(numer: u64, denom: u64) -> Result<Self, ConfigError> {
        let p = Percent { numer, denom };
        if denom == 0 || numer == 0 || numer > denom.saturating_mul(100) {
            return Err(ConfigError::InvalidPercent(format!("{numer}/{denom}")));
        }
        Ok(p)
    }

    pub fn whole(pct: u64) -> Result<Self, ConfigError> {
        Self::new(pct, 1)
    }

    /// Number of items in the top slice of `n`: `ceil(n * pct / 100)`.
    pub fn cutoff(&self, n: usize) -> usize {
        let num = n as u128 * self.numer as u128;
        let den = 100u128 * self.denom as u128;
        num.div_ceil(den) as usize
    }

    pub fn as_f64(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

impl FromStr for Percent {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::InvalidPercent(s.to_string());
        let t = s.trim().trim_end_matches('%');
        let (int, frac) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 12 {
            return Err(bad());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let int_v: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let numer = int_v
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        Percent::new(numer, denom).map_err(|_| bad())
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.numer / self.denom;
        let rem = self.numer % self.denom;
        if rem == 0 {
            return write!(f, "{int}");
        }
        match decimal_places(self.denom) {
            Some(width) => {
                let frac = format!("{rem:0width$}");
                write!(f, "{int}.{}", frac.trim_end_matches('0'))
            }
            None => write!(f, "{}/{}", self.numer, self.denom),
        }
    }
}

fn decimal_places(mut denom: u64) -> Option<usize> {
    let mut places = 0;
    while denom > 1 {
        if denom % 10 != 0 {
            return None;
        }
        denom /= 10;
        places += 1;
    }
    Some(places)
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let text = match Raw::deserialize(d)? {
            // shortest round-trip formatting recovers the decimal the user wrote
            Raw::Num(v) => format!("{v}"),
            Raw::Str(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

pub const DEFAULT_SUSPICIOUS_TOKENS: &[&str] = &[
    "curl",
    "wget",
    "nc",
    "dig",
    "/etc/shadow",
    "/etc/passwd",
    ".ssh",
    "chmod +x",
    "rm -rf",
    "bash -i",
    "/dev/tcp",
];

pub const DEFAULT_LICENSE_DENYLIST: &[&str] = &["UNLICENSED", "NONE", "XYZ", "PERSONAL USE", "N/A"];

pub const DAYS_PER_YEAR: i64 = 365;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    /// Inactivity window in whole years of 365 days.
    pub inactivity_years: u32,
    /// Defaults to the newest `last_modified` in the corpus when absent.
    pub reference_time: Option<DateTime<Utc>>,
    pub top_percent: Percent,
    pub install_key_pattern: String,
    pub suspicious_tokens: Vec<String>,
    pub license_denylist: Vec<String>,
    /// Emit nothing from W4/W5/W6 when every ranked score is identical.
    pub suppress_degenerate_rankings: bool,
    /// Drop a maintainer's own packages from their reach.
    pub exclude_self_dependents: bool,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            inactivity_years: 2,
            reference_time: None,
            top_percent: Percent::whole(1).expect("valid"),
            install_key_pattern: "install".to_string(),
            suspicious_tokens: DEFAULT_SUSPICIOUS_TOKENS.iter().map(|s| s.to_string()).collect(),
            license_denylist: DEFAULT_LICENSE_DENYLIST.iter().map(|s| s.to_string()).collect(),
            suppress_degenerate_rankings: false,
            exclude_self_dependents: false,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.inactivity_years == 0 {
            return Err(ConfigError::NonPositiveWindow);
        }
        // Percent is validated on construction
        Ok(())
    }

    pub fn inactivity_window(&self) -> Duration {
        Duration::days(self.inactivity_years as i64 * DAYS_PER_YEAR)
    }
}

/// Full scan configuration: analyzer thresholds plus pipeline knobs.
///
/// The JSON form flattens the analyzer fields at the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    #[serde(flatten)]
    pub analyzer: AnalyzerConfig,
    pub dep_kinds: Vec<DepKind>,
    pub popular_n: usize,
    /// Rank W4/W5/W6 inside the popular sample instead of registry-wide.
    pub sample_relative: bool,
    pub unsafe_full_output: bool,
    pub providers: ProviderConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            analyzer: AnalyzerConfig::default(),
            dep_kinds: vec![DepKind::Runtime],
            popular_n: 10_000,
            sample_relative: false,
            unsafe_full_output: false,
            providers: ProviderConfig::default(),
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.analyzer.validate()?;
        if self.dep_kinds.is_empty() {
            return Err(ConfigError::NoDepKinds);
        }
        if self.popular_n == 0 {
            return Err(ConfigError::ZeroPopularN);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub downloads_endpoint: String,
    /// Period segment of the downloads endpoint.
    pub downloads_period: String,
    /// Requests per second across all workers.
    pub rate_limit: f64,
    pub max_in_flight: usize,
    pub retries: u32,
    pub timeout_secs: u64,
    pub user_agent: String,
    /// `ip:port` of the resolver for live domain checks; system config when absent.
    pub dns_server: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            downloads_endpoint: "https://api.npmjs.org".to_string(),
            downloads_period: "last-year".to_string(),
            rate_limit: 10.0,
            max_in_flight: 4,
            retries: 2,
            timeout_secs: 10,
            user_agent: concat!("weaklink/", env!("CARGO_PKG_VERSION")).to_string(),
            dns_server: None,
        }
    }
}
