//! Canonical on-disk reports and the findings diff.
//!
//! Every file is sorted, ends with a newline and carries no wall-clock
//! value, so two scans of the same inputs are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::combination::KeywordHit;
use crate::config::ScanConfig;
use crate::exclusion::ExclusionVerdict;
use crate::scan::ScanResult;
use crate::providers::DomainState;
use crate::signals::{evidence_schemas, Signal, SubjectKind, WeakLinkFinding};

pub const SUMMARY_SCHEMA: &str = "weaklink.summary.v1";
pub const FINDINGS_SCHEMA: &str = "weaklink.findings.v1";
pub const COMBINATIONS_SCHEMA: &str = "weaklink.combinations.v1";
pub const DIFF_SCHEMA: &str = "weaklink.diff.v1";
pub const MEMBERS_SAMPLE: usize = 100;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SUMMARY_FILE: &str = "summary.json";
pub const FINDINGS_FILE: &str = "findings.jsonl";
pub const COMBINATIONS_FILE: &str = "combinations.json";
pub const MEMBERS_FILE: &str = "combinations.members.jsonl";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("findings schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// `count / population`, both integers kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub count: usize,
    pub population: usize,
    pub rate: f64,
}

impl Rate {
    pub fn new(count: usize, population: usize) -> Self {
        let rate = if population == 0 { 0.0 } else { count as f64 / population as f64 };
        Rate { count, population, rate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSizes {
    pub documents: u64,
    pub raw: usize,
    pub skipped: u64,
    pub skipped_by_error: BTreeMap<String, u64>,
    pub excluded: usize,
    pub excluded_by_reason: BTreeMap<String, usize>,
    /// Packages meeting a reason but kept because something depends on them.
    pub retained_with_reason: usize,
    pub filtered: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalCounts {
    pub packages: Rate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maintainers: Option<Rate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub maintainers_with_domain: usize,
    pub distinct_domains: usize,
    pub unique_domain_share: String,
    pub by_status: BTreeMap<DomainState, usize>,
    pub lookup_errors: usize,
    pub available_domains: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryStats {
    pub maintainers: usize,
    pub inactive_maintainers: Rate,
    pub mean_maintainers_per_package: f64,
    pub contributor_listing: Rate,
    pub dependency_edges: usize,
    pub packages_with_dependents: usize,
    pub downloads_known: Rate,
    pub download_warnings: u64,
    pub domains: DomainStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularStats {
    pub n: usize,
    pub by_dependents: usize,
    pub by_downloads: usize,
    pub members: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineCounts {
    pub hijackable_packages: usize,
    pub takeover_maintainers: usize,
    pub takeover_packages: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Digests {
    pub input: String,
    pub findings: String,
    pub combinations: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub schema: String,
    pub tool_version: String,
    pub reference_time: String,
    pub degraded: bool,
    pub corpus: CorpusSizes,
    pub signals: BTreeMap<String, SignalCounts>,
    pub registry: RegistryStats,
    pub popular: PopularStats,
    /// scope → combination id → count
    pub combinations: BTreeMap<String, BTreeMap<String, usize>>,
    pub pipelines: BTreeMap<String, PipelineCounts>,
    pub keyword_hunt: BTreeMap<String, usize>,
    pub config: ScanConfig,
    pub digests: Digests,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn line<T: Serialize>(out: &mut Vec<u8>, v: &T) {
    serde_json::to_writer(&mut *out, v).expect("report rows serialize");
    out.push(b'\n');
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report serializes");
    out.push(b'\n');
    out
}

pub fn findings_header(scan: &ScanResult) -> Value {
    json!({
        "schema": FINDINGS_SCHEMA,
        "tool_version": TOOL_VERSION,
        "reference_time": crate::signals::ts(scan.reference_time),
        "evidence_schemas": evidence_schemas(),
    })
}

pub fn render_findings(scan: &ScanResult) -> Vec<u8> {
    let mut out = Vec::new();
    line(&mut out, &findings_header(scan));
    for f in &scan.findings {
        line(&mut out, f);
    }
    out
}

pub fn render_combinations(scan: &ScanResult) -> Vec<u8> {
    let mut combos = Vec::new();
    let mut pipelines = BTreeMap::new();
    for (scope, res) in &scan.scopes {
        for c in &res.combinations {
            combos.push(json!({
                "scope": scope,
                "id": c.id,
                "count": c.count,
                "members_sample": c.members.iter().take(MEMBERS_SAMPLE).collect::<Vec<_>>(),
            }));
        }
        let hijack: BTreeSet<&str> = res.candidates.hijackable_packages();
        let takeover_m: BTreeSet<&str> = res.candidates.takeover_maintainers();
        let takeover_p: BTreeSet<&str> = res.candidates.takeover.iter().map(|r| r.package.as_str()).collect();
        pipelines.insert(
            scope.clone(),
            json!({
                "hijackable": {
                    "count": hijack.len(),
                    "packages_sample": hijack.iter().take(MEMBERS_SAMPLE).collect::<Vec<_>>(),
                },
                "takeover": {
                    "maintainers": takeover_m.len(),
                    "packages": takeover_p.len(),
                    "packages_sample": takeover_p.iter().take(MEMBERS_SAMPLE).collect::<Vec<_>>(),
                },
            }),
        );
    }
    pretty(&json!({
        "schema": COMBINATIONS_SCHEMA,
        "popular": {
            "n": scan.config.popular_n,
            "by_dependents": scan.popular.source_counts.by_dependents,
            "by_downloads": scan.popular.source_counts.by_downloads,
            "members": scan.popular.source_counts.union,
        },
        "combinations": combos,
        "pipelines": pipelines,
    }))
}

fn render_members(scan: &ScanResult) -> Vec<u8> {
    let mut out = Vec::new();
    for (scope, res) in &scan.scopes {
        for c in &res.combinations {
            line(&mut out, &json!({"scope": scope, "id": c.id, "count": c.count, "members": c.members}));
        }
    }
    out
}

pub fn summarize(scan: &ScanResult, findings_digest: String, combinations_digest: String) -> ScanSummary {
    let f = scan.corpus.len();
    let m = scan.maintainers.len();
    let mut excluded_by_reason: BTreeMap<String, usize> = BTreeMap::new();
    let mut excluded = 0;
    let mut retained = 0;
    for v in &scan.verdicts {
        if v.excluded {
            excluded += 1;
            for r in &v.reasons {
                *excluded_by_reason.entry(r.as_str().to_string()).or_default() += 1;
            }
        } else if !v.reasons.is_empty() {
            retained += 1;
        }
    }

    let mut per: BTreeMap<(Signal, SubjectKind), BTreeSet<&str>> = BTreeMap::new();
    for x in &scan.findings {
        per.entry((x.signal, x.subject_kind)).or_default().insert(x.subject_id.as_str());
    }
    let size = |s: Signal, k: SubjectKind| per.get(&(s, k)).map_or(0, BTreeSet::len);
    let signals = Signal::ALL
        .iter()
        .map(|&s| {
            let maintainers = (s == Signal::W6).then(|| Rate::new(size(s, SubjectKind::Maintainer), m));
            (s.as_str().to_string(), SignalCounts { packages: Rate::new(size(s, SubjectKind::Package), f), maintainers })
        })
        .collect();

    let reference = scan.reference_time;
    let window = scan.config.analyzer.inactivity_window();
    let inactive_m = scan
        .maintainers
        .iter()
        .filter(|(_, e)| crate::signals::is_inactive(e.last_activity, reference, window))
        .count();
    let w1 = &scan.w1;
    let registry = RegistryStats {
        maintainers: m,
        inactive_maintainers: Rate::new(inactive_m, m),
        mean_maintainers_per_package: (scan.mean_maintainers * 10_000.0).round() / 10_000.0,
        contributor_listing: Rate::new(scan.corpus.iter().filter(|r| !r.contributors.is_empty()).count(), f),
        dependency_edges: scan.dependents.edge_count(),
        packages_with_dependents: scan.corpus.iter().filter(|r| scan.dependents.dependent_count(&r.name) > 0).count(),
        downloads_known: Rate::new(scan.downloads.len(), f),
        download_warnings: scan.download_warnings,
        domains: DomainStats {
            maintainers_with_domain: w1.maintainers_with_domain,
            distinct_domains: w1.distinct_domains,
            unique_domain_share: w1.unique_domain_share.clone(),
            by_status: w1.by_status.clone(),
            lookup_errors: w1.lookup_errors,
            available_domains: w1.available_domains.len(),
        },
    };

    let mut combinations = BTreeMap::new();
    let mut pipelines = BTreeMap::new();
    for (scope, res) in &scan.scopes {
        combinations.insert(scope.clone(), res.combinations.iter().map(|c| (c.id.clone(), c.count)).collect());
        pipelines.insert(
            scope.clone(),
            PipelineCounts {
                hijackable_packages: res.candidates.hijackable_packages().len(),
                takeover_maintainers: res.candidates.takeover_maintainers().len(),
                takeover_packages: res.candidates.takeover.iter().map(|r| &r.package).collect::<BTreeSet<_>>().len(),
            },
        );
    }
    let mut keyword_hunt: BTreeMap<String, usize> = BTreeMap::new();
    keyword_hunt.insert("hits".to_string(), scan.keyword_hunt.len());
    for h in &scan.keyword_hunt {
        *keyword_hunt.entry(h.pattern.category.as_str().to_string()).or_default() += 1;
    }

    ScanSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        reference_time: crate::signals::ts(reference),
        degraded: scan.degraded(),
        corpus: CorpusSizes {
            documents: scan.ingest.total,
            raw: scan.raw_count,
            skipped: scan.ingest.skipped,
            skipped_by_error: scan.ingest.by_error.clone(),
            excluded,
            excluded_by_reason,
            retained_with_reason: retained,
            filtered: f,
        },
        signals,
        registry,
        popular: PopularStats {
            n: scan.config.popular_n,
            by_dependents: scan.popular.source_counts.by_dependents,
            by_downloads: scan.popular.source_counts.by_downloads,
            members: scan.popular.source_counts.union,
        },
        combinations,
        pipelines,
        keyword_hunt,
        config: scan.config.clone(),
        digests: Digests { input: scan.input_digest.clone(), findings: findings_digest, combinations: combinations_digest },
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), ReportError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| ReportError::Write { path, source })
}

/// Writes every report file into `dir` and returns the summary.
pub fn write_reports(scan: &ScanResult, dir: &Path) -> Result<ScanSummary, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Write { path: dir.to_path_buf(), source })?;
    let findings = render_findings(scan);
    let combinations = render_combinations(scan);
    let summary = summarize(scan, sha256_hex(&findings), sha256_hex(&combinations));
    write_file(dir, FINDINGS_FILE, &findings)?;
    write_file(dir, COMBINATIONS_FILE, &combinations)?;
    write_file(dir, MEMBERS_FILE, &render_members(scan))?;
    write_file(dir, SUMMARY_FILE, &pretty(&summary))?;

    let mut ex = Vec::new();
    for v in scan.verdicts.iter().filter(|v| !v.reasons.is_empty()) {
        line(&mut ex, v);
    }
    write_file(dir, "exclusions.jsonl", &ex)?;

    let mut deps = Vec::new();
    scan.dependents.write_jsonl(&mut deps).expect("in-memory write");
    write_file(dir, "dependents.jsonl", &deps)?;
    write_file(dir, "domains.json", &pretty(&scan.w1))?;

    let mut hunt = Vec::new();
    for h in &scan.keyword_hunt {
        line(&mut hunt, h);
    }
    write_file(dir, "keyword_hunt.jsonl", &hunt)?;

    let candidates = dir.join("attack_candidates.jsonl");
    if scan.config.unsafe_full_output {
        let mut out = Vec::new();
        for (scope, res) in &scan.scopes {
            for r in &res.candidates.hijackable {
                line(&mut out, &json!({"scope": scope, "pipeline": "hijack", "row": r}));
            }
            for r in &res.candidates.takeover {
                line(&mut out, &json!({"scope": scope, "pipeline": "takeover", "row": r}));
            }
        }
        write_file(dir, "attack_candidates.jsonl", &out)?;
    } else if candidates.exists() {
        // a stale full listing must not survive a redacted run
        fs::remove_file(&candidates).map_err(|source| ReportError::Write { path: candidates.clone(), source })?;
    }
    Ok(summary)
}

/// Findings identity for diffing: everything except the observation time.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FindingKey {
    pub signal: Signal,
    pub subject_kind: SubjectKind,
    pub subject_id: String,
    pub evidence: BTreeMap<String, String>,
}

impl From<&WeakLinkFinding> for FindingKey {
    fn from(f: &WeakLinkFinding) -> Self {
        FindingKey {
            signal: f.signal,
            subject_kind: f.subject_kind,
            subject_id: f.subject_id.clone(),
            evidence: f.evidence.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingsDiff {
    pub added: Vec<FindingKey>,
    pub removed: Vec<FindingKey>,
}

impl FindingsDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    pub fn render(&self) -> Vec<u8> {
        let mut counts: BTreeMap<String, BTreeMap<&str, usize>> = BTreeMap::new();
        for (side, rows) in [("added", &self.added), ("removed", &self.removed)] {
            for k in rows {
                *counts.entry(k.signal.as_str().to_string()).or_default().entry(side).or_default() += 1;
            }
        }
        pretty(&json!({"schema": DIFF_SCHEMA, "counts": counts, "added": self.added, "removed": self.removed}))
    }
}

pub struct FindingsFile {
    pub header: Value,
    pub findings: Vec<WeakLinkFinding>,
}

pub fn read_findings(path: &Path) -> Result<FindingsFile, ReportError> {
    let read_err = |source| ReportError::Read { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(read_err)?;
    let mut header = None;
    let mut findings = Vec::new();
    for (i, l) in io::BufReader::new(file).lines().enumerate() {
        let l = l.map_err(read_err)?;
        if l.trim().is_empty() {
            continue;
        }
        let parse = |message: String| ReportError::Parse { path: path.to_path_buf(), line: i + 1, message };
        if header.is_none() {
            let v: Value = serde_json::from_str(&l).map_err(|e| parse(e.to_string()))?;
            if v.get("schema").and_then(Value::as_str) != Some(FINDINGS_SCHEMA) {
                return Err(ReportError::SchemaMismatch(format!(
                    "{} does not start with a {FINDINGS_SCHEMA} header",
                    path.display()
                )));
            }
            header = Some(v);
            continue;
        }
        findings.push(serde_json::from_str(&l).map_err(|e| parse(e.to_string()))?);
    }
    let header =
        header.ok_or_else(|| ReportError::SchemaMismatch(format!("{} is empty", path.display())))?;
    Ok(FindingsFile { header, findings })
}

/// Findings present in `after` but not `before`, and the reverse. Both files
/// must share the findings schema and the evidence schemas.
pub fn diff_findings(before: &Path, after: &Path) -> Result<FindingsDiff, ReportError> {
    let a = read_findings(before)?;
    let b = read_findings(after)?;
    if a.header.get("evidence_schemas") != b.header.get("evidence_schemas") {
        return Err(ReportError::SchemaMismatch("evidence schemas differ".to_string()));
    }
    let ka: BTreeSet<FindingKey> = a.findings.iter().map(FindingKey::from).collect();
    let kb: BTreeSet<FindingKey> = b.findings.iter().map(FindingKey::from).collect();
    Ok(FindingsDiff {
        added: kb.difference(&ka).cloned().collect(),
        removed: ka.difference(&kb).cloned().collect(),
    })
}

/// Writes `bytes` to `path`, or stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), ReportError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|source| ReportError::Write { path: p.to_path_buf(), source }),
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|source| ReportError::Write { path: PathBuf::from("<stdout>"), source })
        }
    }
}

/// The comparable content of a report directory.
#[derive(Clone, Debug, Default)]
pub struct ReportSet {
    pub findings: Vec<WeakLinkFinding>,
    pub exclusions: Vec<ExclusionVerdict>,
    /// (scope, combination id) → members
    pub members: BTreeMap<(String, String), BTreeSet<String>>,
    pub keyword_hunt: Vec<KeywordHit>,
    pub summary: Option<ScanSummary>,
    /// scope → hijackable packages, takeover maintainers
    pub candidates: Option<BTreeMap<String, (BTreeSet<String>, BTreeSet<String>)>>,
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Read { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ReportError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct MemberLine {
    scope: String,
    id: String,
    members: BTreeSet<String>,
}

#[derive(Deserialize)]
struct CandidateLine {
    scope: String,
    pipeline: String,
    row: Value,
}

impl ReportSet {
    pub fn from_scan(scan: &ScanResult) -> Self {
        let members = scan
            .scopes
            .iter()
            .flat_map(|(s, r)| r.combinations.iter().map(move |c| ((s.clone(), c.id.clone()), c.members.clone())))
            .collect();
        let candidates = scan
            .scopes
            .iter()
            .map(|(s, r)| {
                let h = r.candidates.hijackable_packages().into_iter().map(str::to_string).collect();
                let t = r.candidates.takeover_maintainers().into_iter().map(str::to_string).collect();
                (s.clone(), (h, t))
            })
            .collect();
        ReportSet {
            findings: scan.findings.clone(),
            exclusions: scan.verdicts.iter().filter(|v| !v.reasons.is_empty()).cloned().collect(),
            members,
            keyword_hunt: scan.keyword_hunt.clone(),
            summary: Some(summarize(scan, String::new(), String::new())),
            candidates: Some(candidates),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let findings = read_findings(&dir.join(FINDINGS_FILE))?.findings;
        let exclusions = read_lines(&dir.join("exclusions.jsonl"))?;
        let members = read_lines::<MemberLine>(&dir.join(MEMBERS_FILE))?
            .into_iter()
            .map(|m| ((m.scope, m.id), m.members))
            .collect();
        let keyword_hunt = read_lines(&dir.join("keyword_hunt.jsonl"))?;
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|source| ReportError::Read { path: path.clone(), source })?;
        let summary: ScanSummary = serde_json::from_str(&text)
            .map_err(|e| ReportError::Parse { path: path.clone(), line: e.line(), message: e.to_string() })?;
        let cpath = dir.join("attack_candidates.jsonl");
        let candidates = if cpath.exists() {
            let mut out: BTreeMap<String, (BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
            for c in read_lines::<CandidateLine>(&cpath)? {
                let e = out.entry(c.scope).or_default();
                let field = |k: &str| c.row.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
                if c.pipeline == "hijack" {
                    e.0.insert(field("package"));
                } else {
                    e.1.insert(field("maintainer_key"));
                }
            }
            Some(out)
        } else {
            None
        };
        Ok(ReportSet { findings, exclusions, members, keyword_hunt, summary: Some(summary), candidates })
    }

    /// Package subjects of `signal`.
    pub fn packages(&self, signal: Signal) -> BTreeSet<String> {
        self.findings
            .iter()
            .filter(|f| f.signal == signal && f.subject_kind == SubjectKind::Package)
            .map(|f| f.subject_id.clone())
            .collect()
    }

    pub fn maintainers(&self, signal: Signal) -> BTreeSet<String> {
        self.findings
            .iter()
            .filter(|f| f.signal == signal && f.subject_kind == SubjectKind::Maintainer)
            .map(|f| f.subject_id.clone())
            .collect()
    }
}
