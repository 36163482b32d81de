//! Domain availability and download count providers, each with a fixture
//! replay mode and a live mode.

mod dns;
mod http;
mod ratelimit;

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dns::LiveDomains;
pub use http::LiveDownloads;
pub use ratelimit::RateLimiter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Live,
    Fixture,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Live => "live",
            Source::Fixture => "fixture",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainState {
    Available,
    Registered,
    Unknown,
}

impl DomainState {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "available" => Some(DomainState::Available),
            "registered" => Some(DomainState::Registered),
            "unknown" => Some(DomainState::Unknown),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainStatus {
    pub domain: String,
    pub status: DomainState,
    pub checked_at: DateTime<Utc>,
    pub source: Source,
    /// How the status was decided, e.g. `fixture` or `dns-ns-mx`.
    pub method: String,
    /// Set when a lookup failed; the status is then always `Unknown`.
    pub error: Option<String>,
}

impl DomainStatus {
    fn unknown(domain: &str, source: Source, method: &str, error: Option<String>) -> Self {
        DomainStatus {
            domain: domain.to_string(),
            status: DomainState::Unknown,
            checked_at: Utc::now(),
            source,
            method: method.to_string(),
            error,
        }
    }
}

pub trait DomainStatusProvider: Send + Sync {
    fn check_domain(&self, domain: &str) -> DomainStatus;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadWindow {
    /// Period segment understood by the downloads API, e.g. `last-year`.
    pub period: String,
}

impl Default for DownloadWindow {
    fn default() -> Self {
        DownloadWindow { period: "last-year".to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadStats {
    pub package: String,
    pub window: DownloadWindow,
    pub count: u64,
    pub source: Source,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("no data for {0}")]
    NotFound(String),
    #[error("HTTP status {0}")]
    Http(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<ProviderError> },
}

impl ProviderError {
    /// Missing data is an answer; everything else means the provider failed.
    pub fn is_degradation(&self) -> bool {
        !matches!(self, ProviderError::NotFound(_))
    }
}

pub trait DownloadProvider: Send + Sync {
    fn fetch_downloads(&self, package: &str, window: &DownloadWindow) -> Result<DownloadStats, ProviderError>;
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, FixtureError> {
    let file = fs::File::open(path).map_err(|source| FixtureError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FixtureError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| FixtureError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
pub struct DomainFixtureLine {
    pub domain: String,
    pub status: String,
}

#[derive(Serialize, Deserialize)]
pub struct DownloadFixtureLine {
    pub package: String,
    pub downloads: u64,
}

/// Exact-match replay of `{"domain","status"}` lines. Misses are `Unknown`.
#[derive(Clone, Debug, Default)]
pub struct FixtureDomains {
    map: HashMap<String, DomainState>,
    loaded_at: DateTime<Utc>,
}

impl FixtureDomains {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, DomainState)>,
        S: Into<String>,
    {
        let map = entries.into_iter().map(|(d, s)| (d.into().to_ascii_lowercase(), s)).collect();
        FixtureDomains { map, loaded_at: Utc::now() }
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let lines: Vec<DomainFixtureLine> = read_jsonl(path)?;
        let mut entries = Vec::with_capacity(lines.len());
        for (i, l) in lines.into_iter().enumerate() {
            let state = DomainState::parse(&l.status).ok_or_else(|| FixtureError::Line {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("unknown status {:?}", l.status),
            })?;
            entries.push((l.domain, state));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl DomainStatusProvider for FixtureDomains {
    fn check_domain(&self, domain: &str) -> DomainStatus {
        let key = domain.trim().to_ascii_lowercase();
        DomainStatus {
            status: self.map.get(&key).copied().unwrap_or(DomainState::Unknown),
            domain: key,
            checked_at: self.loaded_at,
            source: Source::Fixture,
            method: "fixture".to_string(),
            error: None,
        }
    }
}

/// Replay of `{"package","downloads"}` lines. Misses are `NotFound`.
#[derive(Clone, Debug, Default)]
pub struct FixtureDownloads {
    map: HashMap<String, u64>,
}

impl FixtureDownloads {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        FixtureDownloads { map: entries.into_iter().map(|(p, c)| (p.into(), c)).collect() }
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let lines: Vec<DownloadFixtureLine> = read_jsonl(path)?;
        Ok(Self::from_entries(lines.into_iter().map(|l| (l.package, l.downloads))))
    }
}

impl DownloadProvider for FixtureDownloads {
    fn fetch_downloads(&self, package: &str, window: &DownloadWindow) -> Result<DownloadStats, ProviderError> {
        match self.map.get(package) {
            Some(&count) => Ok(DownloadStats {
                package: package.to_string(),
                window: window.clone(),
                count,
                source: Source::Fixture,
            }),
            None => Err(ProviderError::NotFound(package.to_string())),
        }
    }
}

/// Answers `Unknown` for every domain; used when no domain source is configured.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoDomains;

impl DomainStatusProvider for NoDomains {
    fn check_domain(&self, domain: &str) -> DomainStatus {
        DomainStatus::unknown(domain, Source::Fixture, "none", None)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoDownloads;

impl DownloadProvider for NoDownloads {
    fn fetch_downloads(&self, package: &str, _: &DownloadWindow) -> Result<DownloadStats, ProviderError> {
        Err(ProviderError::NotFound(package.to_string()))
    }
}

/// Per-run memo in front of a domain provider. Concurrent callers asking
/// for the same domain share one upstream query.
pub struct CachedDomains<P> {
    inner: P,
    cache: Mutex<HashMap<String, Arc<OnceLock<DomainStatus>>>>,
    queries: AtomicU64,
}

impl<P: DomainStatusProvider> CachedDomains<P> {
    pub fn new(inner: P) -> Self {
        CachedDomains { inner, cache: Mutex::new(HashMap::new()), queries: AtomicU64::new(0) }
    }

    /// Upstream queries issued so far.
    pub fn upstream_queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

impl<P: DomainStatusProvider> DomainStatusProvider for CachedDomains<P> {
    fn check_domain(&self, domain: &str) -> DomainStatus {
        let key = domain.trim().to_ascii_lowercase();
        let cell = {
            let mut cache = self.cache.lock().expect("domain cache poisoned");
            cache.entry(key.clone()).or_default().clone()
        };
        cell.get_or_init(|| {
            self.queries.fetch_add(1, Ordering::Relaxed);
            self.inner.check_domain(&key)
        })
        .clone()
    }
}

impl<T: DomainStatusProvider + ?Sized> DomainStatusProvider for Box<T> {
    fn check_domain(&self, domain: &str) -> DomainStatus {
        (**self).check_domain(domain)
    }
}

impl<T: DownloadProvider + ?Sized> DownloadProvider for Box<T> {
    fn fetch_downloads(&self, package: &str, window: &DownloadWindow) -> Result<DownloadStats, ProviderError> {
        (**self).fetch_downloads(package, window)
    }
}
