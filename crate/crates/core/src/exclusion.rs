//! Noise removal: packages nobody depends on that are security placeholders,
//! deprecated, or carry neither a repository nor a valid license.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{Corpus, Deprecation, PackageRecord};
use crate::reach::DependentsIndex;

pub const SECURITY_HOLDING_PHRASE: &str = "security holding package";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExclusionReason {
    SecurityHolding,
    DeprecatedUnused,
    NoRepoNoLicense,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 3] =
        [ExclusionReason::SecurityHolding, ExclusionReason::DeprecatedUnused, ExclusionReason::NoRepoNoLicense];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExclusionReason::SecurityHolding => "SecurityHolding",
            ExclusionReason::DeprecatedUnused => "DeprecatedUnused",
            ExclusionReason::NoRepoNoLicense => "NoRepoNoLicense",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionVerdict {
    pub package_id: String,
    pub excluded: bool,
    pub reasons: BTreeSet<ExclusionReason>,
    pub had_dependents: bool,
}

pub fn is_security_holding(rec: &PackageRecord) -> bool {
    let phrase = rec
        .description
        .as_deref()
        .map(|d| d.to_lowercase().contains(SECURITY_HOLDING_PHRASE))
        .unwrap_or(false);
    phrase || rec.placeholder_dist_tags
}

/// `true` for `deprecated: true` or a non-blank message. An empty message
/// is how the registry un-deprecates, so it does not count.
pub fn is_deprecated_latest(rec: &PackageRecord) -> bool {
    match &rec.deprecated {
        Some(Deprecation::Flag(b)) => *b,
        Some(Deprecation::Message(m)) => !m.trim().is_empty(),
        None => false,
    }
}

pub fn license_is_invalid(license: Option<&str>, denylist: &[String]) -> bool {
    match license.map(str::trim) {
        None | Some("") => true,
        Some(l) => denylist.iter().any(|d| d.trim().eq_ignore_ascii_case(l)),
    }
}

pub fn lacks_repo_and_license(rec: &PackageRecord, denylist: &[String]) -> bool {
    !rec.repository_present && license_is_invalid(rec.license_value.as_deref(), denylist)
}

pub fn reasons_for(rec: &PackageRecord, denylist: &[String]) -> BTreeSet<ExclusionReason> {
    let mut reasons = BTreeSet::new();
    if is_security_holding(rec) {
        reasons.insert(ExclusionReason::SecurityHolding);
    }
    if is_deprecated_latest(rec) {
        reasons.insert(ExclusionReason::DeprecatedUnused);
    }
    if lacks_repo_and_license(rec, denylist) {
        reasons.insert(ExclusionReason::NoRepoNoLicense);
    }
    reasons
}

/// Splits the corpus into retained records and a verdict for every package.
///
/// `deps` must cover the full, unfiltered corpus. Verdicts come back sorted
/// by package id.
pub fn apply_exclusions(corpus: &Corpus, deps: &DependentsIndex, denylist: &[String]) -> (Corpus, Vec<ExclusionVerdict>) {
    let mut verdicts: Vec<ExclusionVerdict> = corpus
        .records()
        .par_iter()
        .map(|rec| {
            let reasons = reasons_for(rec, denylist);
            let had_dependents = deps.dependent_count(&rec.name) > 0;
            ExclusionVerdict {
                package_id: rec.package_id.clone(),
                excluded: !had_dependents && !reasons.is_empty(),
                reasons,
                had_dependents,
            }
        })
        .collect();
    let excluded: std::collections::HashSet<&str> =
        verdicts.iter().filter(|v| v.excluded).map(|v| v.package_id.as_str()).collect();
    let filtered = corpus.retain_by(|r| !excluded.contains(r.package_id.as_str()));
    verdicts.sort_by(|a, b| a.package_id.cmp(&b.package_id));
    (filtered, verdicts)
}
