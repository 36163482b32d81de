//! End-to-end scan: exclusions, indexes, analyzers, popular sample,
//! combinations and pipelines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use thiserror::Error;

use crate::combination::{
    all_combinations, attack_candidates, keyword_hunt, popular_sample, signal_sets, AttackCandidates, Combination,
    KeywordHit, PopularSample,
};
use crate::config::{ConfigError, ScanConfig};
use crate::exclusion::{apply_exclusions, ExclusionVerdict};
use crate::ingest::{load_corpus, Corpus, IngestError, IngestStats, SnapshotLayout};
use crate::providers::{DomainStatusProvider, DownloadProvider, DownloadWindow};
use crate::reach::{build_dependents_index, build_maintainer_index, package_reach, DependentsIndex, MaintainerIndex};
use crate::signals::{
    analyze_w1, analyze_w2, analyze_w3, analyze_w4, analyze_w5, analyze_w6, analyze_w6_scoped, mean_maintainers,
    reference_time, Signal, W1Report, WeakLinkFinding,
};

pub const SCOPE_REGISTRY: &str = "registry";
pub const SCOPE_POPULAR: &str = "popular";

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Clone, Debug, Default)]
pub struct ScopeResult {
    pub combinations: Vec<Combination>,
    pub candidates: AttackCandidates,
}

pub struct ScanResult {
    /// The configuration as run, with the reference time filled in.
    pub config: ScanConfig,
    pub reference_time: DateTime<Utc>,
    pub raw_count: usize,
    pub ingest: IngestStats,
    pub input_digest: String,
    pub verdicts: Vec<ExclusionVerdict>,
    pub corpus: Corpus,
    pub dependents: DependentsIndex,
    pub maintainers: MaintainerIndex,
    pub mean_maintainers: f64,
    /// Known download counts; packages without data are absent.
    pub downloads: HashMap<String, u64>,
    pub download_warnings: u64,
    pub w1: W1Report,
    /// Every finding in canonical order.
    pub findings: Vec<WeakLinkFinding>,
    pub popular: PopularSample,
    pub scopes: BTreeMap<String, ScopeResult>,
    pub keyword_hunt: Vec<KeywordHit>,
}

impl ScanResult {
    /// A provider failed somewhere; results are complete but partly unknown.
    pub fn degraded(&self) -> bool {
        self.w1.lookup_errors > 0 || self.download_warnings > 0
    }

    pub fn count(&self, signal: Signal) -> usize {
        self.findings
            .iter()
            .filter(|f| f.signal == signal && f.subject_kind == crate::signals::SubjectKind::Package)
            .count()
    }
}

pub fn scan_path(
    path: &Path,
    layout: Option<SnapshotLayout>,
    cfg: &ScanConfig,
    domains: &dyn DomainStatusProvider,
    downloads: &dyn DownloadProvider,
) -> Result<ScanResult, ScanError> {
    cfg.validate()?;
    let corpus = load_corpus(path, layout)?;
    run_scan(corpus, cfg, domains, downloads)
}

pub fn run_scan(
    raw: Corpus,
    cfg: &ScanConfig,
    domains: &dyn DomainStatusProvider,
    downloads: &dyn DownloadProvider,
) -> Result<ScanResult, ScanError> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    // pinned from the raw corpus so exclusions cannot move it
    let reference = reference_time(&raw, &cfg.analyzer);
    cfg.analyzer.reference_time = Some(reference);
    let a = &cfg.analyzer;

    let full_index = build_dependents_index(&raw, &cfg.dep_kinds);
    let (corpus, verdicts) = apply_exclusions(&raw, &full_index, &a.license_denylist);
    drop(full_index);
    let (dependents, maintainers) =
        rayon::join(|| build_dependents_index(&corpus, &cfg.dep_kinds), || build_maintainer_index(&corpus));
    tracing::info!(raw = raw.len(), filtered = corpus.len(), "exclusions applied");

    let warnings = AtomicU64::new(0);
    let window = DownloadWindow { period: cfg.providers.downloads_period.clone() };
    let known: HashMap<String, u64> = corpus
        .records()
        .par_iter()
        .filter_map(|r| {
            package_reach(&r.name, &dependents, downloads, &window, &warnings)
                .downloads_12mo
                .map(|d| (r.name.clone(), d))
        })
        .collect();
    let download_warnings = warnings.load(Ordering::Relaxed);
    let popular = popular_sample(&corpus, &dependents, &known, cfg.popular_n);

    let ((w1, (w2, w3)), ((w4, w5), w6)) = rayon::join(
        || {
            rayon::join(
                || analyze_w1(&corpus, &maintainers, domains, a),
                || rayon::join(|| analyze_w2(&corpus, a), || analyze_w3(&corpus, &maintainers, a)),
            )
        },
        || {
            if cfg.sample_relative {
                let sample = corpus.retain_by(|r| popular.members.contains(&r.name));
                rayon::join(
                    || rayon::join(|| analyze_w4(&sample, a), || analyze_w5(&sample, a)),
                    || analyze_w6_scoped(&corpus, &maintainers, &dependents, a, Some(&popular.members)),
                )
            } else {
                rayon::join(
                    || rayon::join(|| analyze_w4(&corpus, a), || analyze_w5(&corpus, a)),
                    || analyze_w6(&corpus, &maintainers, &dependents, a),
                )
            }
        },
    );
    let mut findings: Vec<WeakLinkFinding> = Vec::new();
    findings.extend(w1.findings.iter().cloned());
    for part in [w2, w3, w4, w5, w6] {
        findings.extend(part);
    }
    findings.sort();

    let sets = signal_sets(&findings);
    let mut scopes = BTreeMap::new();
    for (name, scope) in [(SCOPE_REGISTRY, None), (SCOPE_POPULAR, Some(&popular.members))] {
        let scope: Option<&BTreeSet<String>> = scope;
        scopes.insert(
            name.to_string(),
            ScopeResult {
                combinations: all_combinations(&sets, scope),
                candidates: attack_candidates(&corpus, &maintainers, &dependents, &findings, &known, scope, a),
            },
        );
    }
    let mut hunt = keyword_hunt(&corpus, a);
    hunt.sort_by(|x, y| x.package.cmp(&y.package));

    Ok(ScanResult {
        reference_time: reference,
        raw_count: raw.len(),
        ingest: raw.stats.clone(),
        input_digest: raw.input_digest.clone(),
        verdicts,
        mean_maintainers: mean_maintainers(&corpus),
        corpus,
        dependents,
        maintainers,
        downloads: known,
        download_warnings,
        w1,
        findings,
        popular,
        scopes,
        keyword_hunt: hunt,
        config: cfg,
    })
}
