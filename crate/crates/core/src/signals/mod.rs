//! The six weak-link signals and the findings they emit.

mod analyzers;
mod script;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analyzers::*;
pub use script::{classify_script, contains_token, find_tokens, ScriptCategory, ScriptPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Signal {
    W1,
    W2,
    #[serde(rename = "W3_deprecated")]
    W3Deprecated,
    #[serde(rename = "W3_inactive_maintainer")]
    W3InactiveMaintainer,
    #[serde(rename = "W3_inactive_pkg")]
    W3InactivePkg,
    W4,
    W5,
    W6,
}

impl Signal {
    pub const ALL: [Signal; 8] = [
        Signal::W1,
        Signal::W2,
        Signal::W3Deprecated,
        Signal::W3InactiveMaintainer,
        Signal::W3InactivePkg,
        Signal::W4,
        Signal::W5,
        Signal::W6,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Signal::W1 => "W1",
            Signal::W2 => "W2",
            Signal::W3Deprecated => "W3_deprecated",
            Signal::W3InactiveMaintainer => "W3_inactive_maintainer",
            Signal::W3InactivePkg => "W3_inactive_pkg",
            Signal::W4 => "W4",
            Signal::W5 => "W5",
            Signal::W6 => "W6",
        }
    }

    /// Allowed evidence keys for a finding of this signal and subject kind.
    pub fn evidence_schema(&self, kind: SubjectKind) -> Option<&'static [&'static str]> {
        use SubjectKind::*;
        Some(match (self, kind) {
            (Signal::W1, Package) => &["domain", "maintainer_key", "method", "source"],
            (Signal::W2, Package) => &["has_suspicious_tokens", "script_key"],
            (Signal::W3InactivePkg, Package) => &["inactive_days", "last_modified"],
            (Signal::W3InactiveMaintainer, Package) => &["latest_maintainer_activity", "maintainers"],
            (Signal::W3Deprecated, Package) => &["deprecation", "last_modified"],
            (Signal::W4, Package) => &["maintainer_count", "registry_avg"],
            (Signal::W5, Package) => &["contributors", "maintainers", "ratio"],
            (Signal::W6, Maintainer) => &["dependency_using_share", "inactive_owned_share", "owned_count", "reach"],
            (Signal::W6, Package) => &["maintainer_key", "reach"],
            _ => return None,
        })
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Signal {
    type Err = FindingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Signal::ALL.iter().copied().find(|sig| sig.as_str() == s).ok_or_else(|| FindingError::UnknownSignal(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectKind {
    Maintainer,
    Package,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FindingError {
    #[error("signal {signal} has no {kind:?} findings")]
    WrongSubject { signal: Signal, kind: SubjectKind },
    #[error("evidence key {key:?} is not in the {signal} schema")]
    UnknownEvidenceKey { signal: Signal, key: String },
    #[error("unknown signal {0:?}")]
    UnknownSignal(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct WeakLinkFinding {
    pub signal: Signal,
    pub subject_id: String,
    pub subject_kind: SubjectKind,
    pub evidence: BTreeMap<String, String>,
    pub observed_at: DateTime<Utc>,
}

#[derive(Deserialize)]
struct RawFinding {
    signal: Signal,
    subject_id: String,
    subject_kind: SubjectKind,
    evidence: BTreeMap<String, String>,
    observed_at: DateTime<Utc>,
}

impl<'de> Deserialize<'de> for WeakLinkFinding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawFinding::deserialize(d)?;
        WeakLinkFinding::new(raw.signal, raw.subject_kind, raw.subject_id, raw.evidence, raw.observed_at)
            .map_err(serde::de::Error::custom)
    }
}

impl WeakLinkFinding {
    /// Validates evidence keys against the signal's schema.
    pub fn new(
        signal: Signal,
        subject_kind: SubjectKind,
        subject_id: impl Into<String>,
        evidence: BTreeMap<String, String>,
        observed_at: DateTime<Utc>,
    ) -> Result<Self, FindingError> {
        let schema = signal
            .evidence_schema(subject_kind)
            .ok_or(FindingError::WrongSubject { signal, kind: subject_kind })?;
        if let Some(key) = evidence.keys().find(|k| !schema.contains(&k.as_str())) {
            return Err(FindingError::UnknownEvidenceKey { signal, key: key.clone() });
        }
        Ok(WeakLinkFinding { signal, subject_id: subject_id.into(), subject_kind, evidence, observed_at })
    }

    pub(crate) fn build(
        signal: Signal,
        subject_kind: SubjectKind,
        subject_id: &str,
        evidence: &[(&str, String)],
        observed_at: DateTime<Utc>,
    ) -> Self {
        let ev = evidence.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        Self::new(signal, subject_kind, subject_id, ev, observed_at).expect("analyzer evidence matches its schema")
    }
}

/// Schemas of every (signal, subject kind) pair, for report headers.
pub fn evidence_schemas() -> BTreeMap<String, Vec<&'static str>> {
    let mut out = BTreeMap::new();
    for sig in Signal::ALL {
        for kind in [SubjectKind::Package, SubjectKind::Maintainer] {
            if let Some(schema) = sig.evidence_schema(kind) {
                let key = match kind {
                    SubjectKind::Package => sig.as_str().to_string(),
                    SubjectKind::Maintainer => format!("{}:maintainer", sig.as_str()),
                };
                out.insert(key, schema.to_vec());
            }
        }
    }
    out
}

pub(crate) fn fmt_share(num: usize, den: usize) -> String {
    if den == 0 {
        return "0.0000".to_string();
    }
    format!("{:.4}", num as f64 / den as f64)
}
