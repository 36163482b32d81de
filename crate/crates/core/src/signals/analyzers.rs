use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use super::{fmt_share, find_tokens, Signal, SubjectKind, WeakLinkFinding};
use crate::config::AnalyzerConfig;
use crate::exclusion::is_deprecated_latest;
use crate::ingest::{Corpus, Deprecation, PackageRecord};
use crate::providers::{DomainState, DomainStatus, DomainStatusProvider};
use crate::reach::{reach_of, top_k, DependentsIndex, MaintainerIndex};

pub(crate) fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// `cfg.reference_time`, else the newest `last_modified` in the corpus.
pub fn reference_time(corpus: &Corpus, cfg: &AnalyzerConfig) -> DateTime<Utc> {
    cfg.reference_time
        .or_else(|| corpus.iter().map(|r| r.last_modified).max())
        .unwrap_or_else(|| Utc.timestamp_opt(0, 0).single().expect("epoch"))
}

/// Strictly older than the window.
pub fn is_inactive(last: DateTime<Utc>, reference: DateTime<Utc>, window: Duration) -> bool {
    reference - last > window
}

fn sorted(mut findings: Vec<WeakLinkFinding>) -> Vec<WeakLinkFinding> {
    findings.sort();
    findings
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DomainRow {
    pub domain: String,
    pub maintainers: usize,
    pub status: DomainState,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct W1Report {
    #[serde(skip)]
    pub findings: Vec<WeakLinkFinding>,
    pub maintainers_with_domain: usize,
    pub distinct_domains: usize,
    /// distinct domains / maintainers that have one
    pub unique_domain_share: String,
    pub by_status: BTreeMap<DomainState, usize>,
    /// Domains whose lookup failed and were downgraded to `Unknown`.
    pub lookup_errors: usize,
    pub available_domains: Vec<String>,
    /// Domains ordered by maintainer count descending, then name.
    pub histogram: Vec<DomainRow>,
}

pub fn analyze_w1(
    corpus: &Corpus,
    mindex: &MaintainerIndex,
    domains: &dyn DomainStatusProvider,
    cfg: &AnalyzerConfig,
) -> W1Report {
    let observed = reference_time(corpus, cfg);
    let mut by_domain: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (key, entry) in mindex.iter() {
        if let Some(d) = entry.email_domain.as_deref() {
            by_domain.entry(d).or_default().push(key.as_str());
        }
    }
    let names: Vec<&str> = by_domain.keys().copied().collect();
    let statuses: Vec<DomainStatus> = names.par_iter().map(|d| domains.check_domain(d)).collect();

    let mut report = W1Report {
        maintainers_with_domain: by_domain.values().map(Vec::len).sum(),
        distinct_domains: names.len(),
        ..Default::default()
    };
    report.unique_domain_share = fmt_share(report.distinct_domains, report.maintainers_with_domain);
    let mut findings = Vec::new();
    for (name, st) in names.iter().zip(&statuses) {
        // a failed lookup is never treated as available
        let status = if st.error.is_some() { DomainState::Unknown } else { st.status };
        if st.error.is_some() {
            report.lookup_errors += 1;
        }
        *report.by_status.entry(status).or_default() += 1;
        report.histogram.push(DomainRow { domain: name.to_string(), maintainers: by_domain[name].len(), status });
        if status != DomainState::Available {
            continue;
        }
        report.available_domains.push(name.to_string());
        for key in &by_domain[name] {
            let entry = mindex.get(key).expect("indexed maintainer");
            for pkg in &entry.owned_packages {
                findings.push(WeakLinkFinding::build(
                    Signal::W1,
                    SubjectKind::Package,
                    pkg,
                    &[
                        ("domain", name.to_string()),
                        ("maintainer_key", key.to_string()),
                        ("source", st.source.as_str().to_string()),
                        ("method", st.method.clone()),
                    ],
                    observed,
                ));
            }
        }
    }
    report.histogram.sort_by(|a, b| b.maintainers.cmp(&a.maintainers).then_with(|| a.domain.cmp(&b.domain)));
    report.findings = sorted(findings);
    report
}

/// Script entries whose key contains the install pattern, case-insensitively.
pub fn install_scripts<'a>(rec: &'a PackageRecord, cfg: &AnalyzerConfig) -> Vec<(&'a str, &'a str)> {
    let pat = cfg.install_key_pattern.to_lowercase();
    rec.scripts
        .iter()
        .filter(|(k, _)| k.to_lowercase().contains(&pat))
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect()
}

/// Suspicious tokens present in the package's install-script bodies.
pub fn suspicious_install_tokens<'a>(rec: &PackageRecord, cfg: &'a AnalyzerConfig) -> Vec<&'a str> {
    let mut hits: Vec<&str> = Vec::new();
    for (_, body) in install_scripts(rec, cfg) {
        for t in find_tokens(body, &cfg.suspicious_tokens) {
            if !hits.contains(&t) {
                hits.push(t);
            }
        }
    }
    hits
}

pub fn analyze_w2(corpus: &Corpus, cfg: &AnalyzerConfig) -> Vec<WeakLinkFinding> {
    let observed = reference_time(corpus, cfg);
    let findings = corpus
        .records()
        .par_iter()
        .filter_map(|rec| {
            let keys = install_scripts(rec, cfg);
            if keys.is_empty() {
                return None;
            }
            let key_list: Vec<&str> = keys.iter().map(|(k, _)| *k).collect();
            let suspicious = !suspicious_install_tokens(rec, cfg).is_empty();
            Some(WeakLinkFinding::build(
                Signal::W2,
                SubjectKind::Package,
                &rec.name,
                &[("script_key", key_list.join(",")), ("has_suspicious_tokens", suspicious.to_string())],
                observed,
            ))
        })
        .collect();
    sorted(findings)
}

fn deprecation_text(rec: &PackageRecord) -> String {
    match &rec.deprecated {
        Some(Deprecation::Message(m)) => m.clone(),
        Some(Deprecation::Flag(b)) => b.to_string(),
        None => String::new(),
    }
}

pub fn analyze_w3(corpus: &Corpus, mindex: &MaintainerIndex, cfg: &AnalyzerConfig) -> Vec<WeakLinkFinding> {
    let reference = reference_time(corpus, cfg);
    let window = cfg.inactivity_window();
    let findings = corpus
        .records()
        .par_iter()
        .flat_map_iter(|rec| {
            let mut out = Vec::new();
            if !is_inactive(rec.last_modified, reference, window) {
                return out;
            }
            out.push(WeakLinkFinding::build(
                Signal::W3InactivePkg,
                SubjectKind::Package,
                &rec.name,
                &[
                    ("last_modified", ts(rec.last_modified)),
                    ("inactive_days", (reference - rec.last_modified).num_days().to_string()),
                ],
                reference,
            ));
            let activity: Vec<DateTime<Utc>> = rec
                .maintainers
                .iter()
                .filter_map(|m| mindex.get(&m.identity_key).map(|e| e.last_activity))
                .collect();
            if !activity.is_empty() && activity.iter().all(|t| is_inactive(*t, reference, window)) {
                let keys: BTreeSet<&str> = rec.maintainers.iter().map(|m| m.identity_key.as_str()).collect();
                out.push(WeakLinkFinding::build(
                    Signal::W3InactiveMaintainer,
                    SubjectKind::Package,
                    &rec.name,
                    &[
                        ("maintainers", keys.into_iter().collect::<Vec<_>>().join(",")),
                        ("latest_maintainer_activity", ts(*activity.iter().max().expect("non-empty"))),
                    ],
                    reference,
                ));
            }
            if is_deprecated_latest(rec) {
                out.push(WeakLinkFinding::build(
                    Signal::W3Deprecated,
                    SubjectKind::Package,
                    &rec.name,
                    &[("deprecation", deprecation_text(rec)), ("last_modified", ts(rec.last_modified))],
                    reference,
                ));
            }
            out
        })
        .collect();
    sorted(findings)
}

fn degenerate<V: PartialEq>(scores: &[(String, V)]) -> bool {
    scores.windows(2).all(|w| w[0].1 == w[1].1)
}

/// Mean maintainers per package over the corpus.
pub fn mean_maintainers(corpus: &Corpus) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    corpus.iter().map(|r| r.maintainers.len()).sum::<usize>() as f64 / corpus.len() as f64
}

pub fn analyze_w4(corpus: &Corpus, cfg: &AnalyzerConfig) -> Vec<WeakLinkFinding> {
    if corpus.is_empty() {
        return Vec::new();
    }
    let observed = reference_time(corpus, cfg);
    let avg = format!("{:.4}", mean_maintainers(corpus));
    let scores: Vec<(String, usize)> = corpus.iter().map(|r| (r.name.clone(), r.maintainers.len())).collect();
    if cfg.suppress_degenerate_rankings && degenerate(&scores) {
        return Vec::new();
    }
    let k = cfg.top_percent.cutoff(scores.len());
    let findings = top_k(scores, k)
        .into_iter()
        .map(|(name, count)| {
            WeakLinkFinding::build(
                Signal::W4,
                SubjectKind::Package,
                &name,
                &[("maintainer_count", count.to_string()), ("registry_avg", avg.clone())],
                observed,
            )
        })
        .collect();
    sorted(findings)
}

pub fn analyze_w5(corpus: &Corpus, cfg: &AnalyzerConfig) -> Vec<WeakLinkFinding> {
    let observed = reference_time(corpus, cfg);
    // lower maintainer/contributor ratio ranks first
    let scores: Vec<(String, Reverse<Ratio<u64>>)> = corpus
        .iter()
        .filter(|r| !r.contributors.is_empty())
        .map(|r| (r.name.clone(), Reverse(Ratio::new(r.maintainers.len() as u64, r.contributors.len() as u64))))
        .collect();
    if scores.is_empty() || (cfg.suppress_degenerate_rankings && degenerate(&scores)) {
        return Vec::new();
    }
    let k = cfg.top_percent.cutoff(scores.len());
    let findings = top_k(scores, k)
        .into_iter()
        .map(|(name, _)| {
            let rec = corpus.get(&name).expect("ranked from corpus");
            let (m, c) = (rec.maintainers.len(), rec.contributors.len());
            WeakLinkFinding::build(
                Signal::W5,
                SubjectKind::Package,
                &name,
                &[("maintainers", m.to_string()), ("contributors", c.to_string()), ("ratio", fmt_share(m, c))],
                observed,
            )
        })
        .collect();
    sorted(findings)
}

/// W6 over every indexed maintainer.
pub fn analyze_w6(
    corpus: &Corpus,
    mindex: &MaintainerIndex,
    dindex: &DependentsIndex,
    cfg: &AnalyzerConfig,
) -> Vec<WeakLinkFinding> {
    analyze_w6_scoped(corpus, mindex, dindex, cfg, None)
}

/// W6 ranked among maintainers owning at least one package of `scope`.
pub fn analyze_w6_scoped(
    corpus: &Corpus,
    mindex: &MaintainerIndex,
    dindex: &DependentsIndex,
    cfg: &AnalyzerConfig,
    scope: Option<&BTreeSet<String>>,
) -> Vec<WeakLinkFinding> {
    let reference = reference_time(corpus, cfg);
    let window = cfg.inactivity_window();
    let entries: Vec<(&String, &crate::reach::MaintainerEntry)> = mindex
        .iter()
        .filter(|(_, e)| scope.map_or(true, |s| e.owned_packages.iter().any(|p| s.contains(p))))
        .collect();
    if entries.is_empty() {
        return Vec::new();
    }
    let scores: Vec<(String, usize)> = entries
        .par_iter()
        .map(|(k, e)| ((*k).clone(), reach_of(e, dindex, cfg.exclude_self_dependents)))
        .collect();
    if cfg.suppress_degenerate_rankings && degenerate(&scores) {
        return Vec::new();
    }
    let all_zero = scores.iter().all(|s| s.1 == 0);
    let k = cfg.top_percent.cutoff(scores.len());
    let mut findings = Vec::new();
    for (key, reach) in top_k(scores, k) {
        if reach == 0 && !all_zero {
            continue;
        }
        let entry = mindex.get(&key).expect("ranked from index");
        let owned = entry.owned_packages.len();
        let records: Vec<&PackageRecord> = entry.owned_packages.iter().filter_map(|p| corpus.get(p)).collect();
        let inactive = records.iter().filter(|r| is_inactive(r.last_modified, reference, window)).count();
        let using = records.iter().filter(|r| !r.dependencies.is_empty()).count();
        findings.push(WeakLinkFinding::build(
            Signal::W6,
            SubjectKind::Maintainer,
            &key,
            &[
                ("owned_count", owned.to_string()),
                ("reach", reach.to_string()),
                ("inactive_owned_share", fmt_share(inactive, owned)),
                ("dependency_using_share", fmt_share(using, owned)),
            ],
            reference,
        ));
        for p in &entry.owned_packages {
            findings.push(WeakLinkFinding::build(
                Signal::W6,
                SubjectKind::Package,
                p,
                &[("maintainer_key", key.clone()), ("reach", reach.to_string())],
                reference,
            ));
        }
    }
    sorted(findings)
}
