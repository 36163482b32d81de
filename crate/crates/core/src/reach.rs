//! Reverse indexes and the two popularity metrics: package reach (direct
//! dependents plus downloads) and maintainer reach (unique dependents of
//! everything a maintainer owns).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Percent};
use crate::ingest::{Corpus, PackageRecord};
use crate::providers::{DownloadProvider, DownloadWindow};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReachError {
    #[error("unknown maintainer {0:?}")]
    UnknownMaintainer(String),
    #[error("cannot rank an empty subject list")]
    EmptyInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepKind {
    Runtime,
    Dev,
    Peer,
    Optional,
}

impl FromStr for DepKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "runtime" | "dependencies" | "prod" => Ok(DepKind::Runtime),
            "dev" | "devdependencies" => Ok(DepKind::Dev),
            "peer" | "peerdependencies" => Ok(DepKind::Peer),
            "optional" | "optionaldependencies" => Ok(DepKind::Optional),
            other => Err(ConfigError::UnknownDepKind(other.to_string())),
        }
    }
}

impl DepKind {
    pub fn deps_of<'a>(&self, rec: &'a PackageRecord) -> &'a BTreeMap<String, String> {
        match self {
            DepKind::Runtime => &rec.dependencies,
            DepKind::Dev => &rec.dev_dependencies,
            DepKind::Peer => &rec.peer_dependencies,
            DepKind::Optional => &rec.optional_dependencies,
        }
    }
}

/// Direct dependents per package name. Names outside the corpus may appear
/// as keys; every dependent is a corpus package.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependentsIndex {
    map: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct IndexLine {
    name: String,
    dependents: Vec<String>,
}

impl DependentsIndex {
    pub fn dependents(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.map.get(name)
    }

    pub fn dependent_count(&self, name: &str) -> usize {
        self.map.get(name).map_or(0, BTreeSet::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.map.values().map(BTreeSet::len).sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (name, deps) in &self.map {
            let line = IndexLine { name: name.clone(), dependents: deps.iter().cloned().collect() };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Self> {
        let mut map = BTreeMap::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: IndexLine =
                serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let set: BTreeSet<String> = parsed.dependents.into_iter().filter(|d| *d != parsed.name).collect();
            map.insert(parsed.name, set);
        }
        Ok(DependentsIndex { map })
    }
}

pub fn build_dependents_index(corpus: &Corpus, dep_kinds: &[DepKind]) -> DependentsIndex {
    let edges: Vec<(&str, &str)> = corpus
        .records()
        .par_iter()
        .flat_map_iter(|rec| {
            let mut targets: BTreeSet<&str> = BTreeSet::new();
            for kind in dep_kinds {
                targets.extend(kind.deps_of(rec).keys().map(String::as_str));
            }
            targets.remove(rec.name.as_str());
            targets.into_iter().map(move |t| (t, rec.name.as_str()))
        })
        .collect();
    let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (target, dependent) in edges {
        map.entry(target.to_string()).or_default().insert(dependent.to_string());
    }
    DependentsIndex { map }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaintainerEntry {
    pub owned_packages: BTreeSet<String>,
    pub last_activity: DateTime<Utc>,
    pub email_domain: Option<String>,
}

/// Owned packages and last activity per maintainer identity key.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaintainerIndex {
    map: BTreeMap<String, MaintainerEntry>,
}

impl MaintainerIndex {
    pub fn get(&self, key: &str) -> Option<&MaintainerEntry> {
        self.map.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &MaintainerEntry)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn build_maintainer_index(corpus: &Corpus) -> MaintainerIndex {
    let mut map: BTreeMap<String, MaintainerEntry> = BTreeMap::new();
    for rec in corpus.iter() {
        for m in &rec.maintainers {
            let entry = map.entry(m.identity_key.clone()).or_insert_with(|| MaintainerEntry {
                owned_packages: BTreeSet::new(),
                last_activity: rec.last_modified,
                email_domain: m.email_domain.clone(),
            });
            entry.owned_packages.insert(rec.name.clone());
            entry.last_activity = entry.last_activity.max(rec.last_modified);
        }
    }
    MaintainerIndex { map }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReachMetrics {
    pub subject: String,
    pub direct_dependents: u64,
    /// `None` when the provider had no data; unknown is not zero.
    pub downloads_12mo: Option<u64>,
    pub maintainer_reach: Option<u64>,
}

/// Dependents are exact; a provider failure only makes downloads unknown.
/// `warnings` counts provider failures other than "not found".
pub fn package_reach(
    name: &str,
    index: &DependentsIndex,
    downloads: &dyn DownloadProvider,
    window: &DownloadWindow,
    warnings: &std::sync::atomic::AtomicU64,
) -> ReachMetrics {
    let downloads_12mo = match downloads.fetch_downloads(name, window) {
        Ok(stats) => Some(stats.count),
        Err(e) => {
            if e.is_degradation() {
                warnings.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            }
            None
        }
    };
    ReachMetrics {
        subject: name.to_string(),
        direct_dependents: index.dependent_count(name) as u64,
        downloads_12mo,
        maintainer_reach: None,
    }
}

/// Size of the union of dependents over the maintainer's packages. With
/// `exclude_self`, the maintainer's own packages are dropped from that union.
pub fn maintainer_reach(
    key: &str,
    mindex: &MaintainerIndex,
    dindex: &DependentsIndex,
    exclude_self: bool,
) -> Result<usize, ReachError> {
    let entry = mindex.get(key).ok_or_else(|| ReachError::UnknownMaintainer(key.to_string()))?;
    Ok(reach_of(entry, dindex, exclude_self))
}

pub(crate) fn reach_of(entry: &MaintainerEntry, dindex: &DependentsIndex, exclude_self: bool) -> usize {
    let mut union: BTreeSet<&str> = BTreeSet::new();
    for p in &entry.owned_packages {
        if let Some(deps) = dindex.dependents(p) {
            union.extend(deps.iter().map(String::as_str));
        }
    }
    if exclude_self {
        union.retain(|d| !entry.owned_packages.contains(*d));
    }
    union.len()
}

/// Closed cutoff on a descending ranking: everything tied with the `k`-th
/// score is kept. Ties are ordered by subject ascending.
pub fn top_k<S: Ord + Clone, V: Ord + Copy>(mut subjects: Vec<(S, V)>, k: usize) -> Vec<(S, V)> {
    if subjects.is_empty() || k == 0 {
        return Vec::new();
    }
    subjects.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let k = k.min(subjects.len());
    let threshold = subjects[k - 1].1;
    let end = subjects.partition_point(|s| s.1 >= threshold);
    subjects.truncate(end);
    subjects
}

pub fn top_percent<S: Ord + Clone, V: Ord + Copy>(
    subjects: Vec<(S, V)>,
    percent: Percent,
) -> Result<Vec<(S, V)>, ReachError> {
    if subjects.is_empty() {
        return Err(ReachError::EmptyInput);
    }
    let k = percent.cutoff(subjects.len());
    Ok(top_k(subjects, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{record, with_maintainers};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn corpus(records: Vec<PackageRecord>) -> Corpus {
        Corpus::from_records(records, Default::default(), String::new())
    }

    #[test]
    fn single_edge_and_self_edge() {
        let mut a = record("A");
        a.dependencies.insert("B".into(), "^1".into());
        a.dependencies.insert("A".into(), "^1".into());
        let c = corpus(vec![a, record("B")]);
        let idx = build_dependents_index(&c, &[DepKind::Runtime]);
        assert_eq!(idx.dependents("B").unwrap(), &BTreeSet::from(["A".to_string()]));
        assert!(idx.dependents("A").is_none());
        assert_eq!(idx.edge_count(), 1);
    }

    #[test]
    fn unknown_dependees_are_indexed() {
        let mut a = record("A");
        a.dependencies.insert("outside".into(), "*".into());
        a.dev_dependencies.insert("B".into(), "*".into());
        let c = corpus(vec![a, record("B")]);
        let idx = build_dependents_index(&c, &[DepKind::Runtime]);
        assert_eq!(idx.dependent_count("outside"), 1);
        assert_eq!(idx.dependent_count("B"), 0);
        let both = build_dependents_index(&c, &[DepKind::Runtime, DepKind::Dev]);
        assert_eq!(both.dependent_count("B"), 1);
    }

    fn random_corpus(seed: u64, n: usize) -> Corpus {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let pool: Vec<String> = (0..n / 3 + 1).map(|i| format!("m{i}@x{}.io", i % 7)).collect();
        let records = names
            .iter()
            .map(|name| {
                let mut r = record(name);
                for _ in 0..rng.gen_range(0..5) {
                    let t = &names[rng.gen_range(0..n)];
                    r.dependencies.insert(t.clone(), "*".into());
                }
                let take = rng.gen_range(1..4);
                let owners: Vec<&str> = pool.choose_multiple(&mut rng, take).map(String::as_str).collect();
                with_maintainers(r, &owners)
            })
            .collect();
        corpus(records)
    }

    /// Quadratic scan over every (dependee, record) pair.
    fn brute_dependents(c: &Corpus, name: &str) -> BTreeSet<String> {
        c.iter()
            .filter(|r| r.name != name && r.dependencies.contains_key(name))
            .map(|r| r.name.clone())
            .collect()
    }

    #[test]
    fn index_matches_brute_force() {
        let c = random_corpus(11, 500);
        let idx = build_dependents_index(&c, &[DepKind::Runtime]);
        for r in c.iter() {
            let expected = brute_dependents(&c, &r.name);
            let got = idx.dependents(&r.name).cloned().unwrap_or_default();
            assert_eq!(got, expected, "{}", r.name);
        }
        let raw_edges: usize = c.iter().map(|r| r.dependencies.keys().filter(|k| **k != r.name).count()).sum();
        assert_eq!(idx.edge_count(), raw_edges);
    }

    #[test]
    fn maintainer_reach_examples() {
        let mut b = with_maintainers(record("B"), &["m@x.io"]);
        b.dependencies.clear();
        let mut a = record("A");
        a.dependencies.insert("B".into(), "*".into());
        let mut c = record("C");
        c.dependencies.insert("B".into(), "*".into());
        let cp = corpus(vec![a, b, c]);
        let d = build_dependents_index(&cp, &[DepKind::Runtime]);
        let m = build_maintainer_index(&cp);
        assert_eq!(maintainer_reach("m@x.io", &m, &d, false), Ok(2));
        assert_eq!(
            maintainer_reach("nobody", &m, &d, false),
            Err(ReachError::UnknownMaintainer("nobody".into()))
        );

        let bb = with_maintainers(record("B"), &["m@x.io"]);
        let dd = with_maintainers(record("D"), &["m@x.io"]);
        let mut a = record("A");
        a.dependencies.insert("B".into(), "*".into());
        a.dependencies.insert("D".into(), "*".into());
        let cp = corpus(vec![a, bb, dd]);
        let d = build_dependents_index(&cp, &[DepKind::Runtime]);
        let m = build_maintainer_index(&cp);
        assert_eq!(maintainer_reach("m@x.io", &m, &d, false), Ok(1));
    }

    #[test]
    fn self_dependents_can_be_excluded() {
        let b = with_maintainers(record("B"), &["m@x.io"]);
        let mut own = with_maintainers(record("Own"), &["m@x.io"]);
        own.dependencies.insert("B".into(), "*".into());
        let mut other = record("Other");
        other.dependencies.insert("B".into(), "*".into());
        let cp = corpus(vec![b, own, other]);
        let d = build_dependents_index(&cp, &[DepKind::Runtime]);
        let m = build_maintainer_index(&cp);
        assert_eq!(maintainer_reach("m@x.io", &m, &d, false), Ok(2));
        assert_eq!(maintainer_reach("m@x.io", &m, &d, true), Ok(1));
    }

    #[test]
    fn maintainer_reach_matches_union_oracle_and_bounds() {
        let c = random_corpus(5, 500);
        let d = build_dependents_index(&c, &[DepKind::Runtime]);
        let m = build_maintainer_index(&c);
        for (key, entry) in m.iter() {
            let mut union = BTreeSet::new();
            let mut sum = 0;
            let mut max = 0;
            for p in &entry.owned_packages {
                let deps = brute_dependents(&c, p);
                sum += deps.len();
                max = max.max(deps.len());
                union.extend(deps);
            }
            let got = maintainer_reach(key, &m, &d, false).unwrap();
            assert_eq!(got, union.len());
            assert!(got <= sum && got >= max);
            assert!(got <= c.len());
        }
        // coverage of every maintained package
        let covered: BTreeSet<&String> = m.iter().flat_map(|(_, e)| e.owned_packages.iter()).collect();
        for r in c.iter().filter(|r| !r.maintainers.is_empty()) {
            assert!(covered.contains(&r.name));
        }
    }

    #[test]
    fn index_jsonl_round_trip() {
        let c = random_corpus(3, 60);
        let idx = build_dependents_index(&c, &[DepKind::Runtime]);
        let mut buf = Vec::new();
        idx.write_jsonl(&mut buf).unwrap();
        let back = DependentsIndex::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, idx);
    }

    fn pct(s: &str) -> Percent {
        s.parse().unwrap()
    }

    #[test]
    fn top_percent_distinct_scores() {
        let subjects: Vec<(String, u64)> = (0..100).map(|i| (format!("s{i:03}"), i)).collect();
        let top = top_percent(subjects, pct("1")).unwrap();
        assert_eq!(top, vec![("s099".to_string(), 99)]);
    }

    #[test]
    fn top_percent_includes_ties() {
        let mut subjects: Vec<(String, u64)> = (0..97).map(|i| (format!("s{i:03}"), 1)).collect();
        subjects.extend(["x", "y", "z"].iter().map(|s| (s.to_string(), 5)));
        let top = top_percent(subjects, pct("1")).unwrap();
        let names: Vec<&str> = top.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(names, ["x", "y", "z"]);
    }

    #[test]
    fn top_percent_empty_input() {
        assert_eq!(top_percent(Vec::<(String, u64)>::new(), pct("1")), Err(ReachError::EmptyInput));
    }

    /// Independent oracle: count how many subjects beat each score.
    fn oracle_top(subjects: &[(String, u64)], k: usize) -> BTreeSet<String> {
        let mut scores: Vec<u64> = subjects.iter().map(|s| s.1).collect();
        scores.sort_unstable_by(|a, b| b.cmp(a));
        let threshold = scores[k.min(scores.len()) - 1];
        subjects.iter().filter(|s| s.1 >= threshold).map(|s| s.0.clone()).collect()
    }

    #[test]
    fn top_percent_at_registry_scale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14_941);
        let n = 14_941;
        let subjects: Vec<(String, u64)> = (0..n).map(|i| (format!("pkg{i}"), rng.gen_range(0..1_000_000))).collect();
        let got: BTreeSet<String> = top_percent(subjects.clone(), pct("1")).unwrap().into_iter().map(|s| s.0).collect();
        assert_eq!(got, oracle_top(&subjects, pct("1").cutoff(n)));
        assert!(got.len() >= 150);
    }

    proptest! {
        #[test]
        fn top_percent_permutation_invariant(scores in proptest::collection::vec(0u64..6, 1..80), seed in any::<u64>()) {
            let subjects: Vec<(String, u64)> = scores.iter().enumerate().map(|(i, s)| (format!("s{i}"), *s)).collect();
            let mut shuffled = subjects.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = top_percent(subjects.clone(), pct("10")).unwrap();
            let b = top_percent(shuffled, pct("10")).unwrap();
            prop_assert_eq!(&a, &b);
            let oracle = oracle_top(&subjects, pct("10").cutoff(subjects.len()));
            prop_assert_eq!(a.into_iter().map(|s| s.0).collect::<BTreeSet<_>>(), oracle);
        }
    }
}
