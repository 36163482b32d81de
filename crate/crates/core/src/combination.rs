//! Popular-package sampling, keyword hunting in install scripts, signal
//! intersections and the two attack-candidate pipelines.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalyzerConfig;
use crate::ingest::Corpus;
use crate::reach::{top_k, DependentsIndex, MaintainerIndex};
use crate::signals::{
    classify_script, install_scripts, is_inactive, reference_time, suspicious_install_tokens, ScriptPattern, Signal,
    SubjectKind, WeakLinkFinding,
};

/// Package-level signal labels used in combinations.
pub const COMBINABLE: [&str; 6] = ["W1", "W2", "W3", "W4", "W5", "W6"];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub by_dependents: usize,
    pub by_downloads: usize,
    pub union: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularSample {
    pub members: BTreeSet<String>,
    pub source_counts: SourceCounts,
}

/// Top-`n` by direct dependents united with top-`n` by downloads, ties at
/// the cutoff included. Packages with unknown downloads only compete on
/// dependents.
pub fn popular_sample(corpus: &Corpus, dindex: &DependentsIndex, downloads: &HashMap<String, u64>, n: usize) -> PopularSample {
    let by_deps: Vec<(String, usize)> = corpus.iter().map(|r| (r.name.clone(), dindex.dependent_count(&r.name))).collect();
    let by_dl: Vec<(String, u64)> =
        corpus.iter().filter_map(|r| downloads.get(&r.name).map(|d| (r.name.clone(), *d))).collect();
    let top_deps: BTreeSet<String> = top_k(by_deps, n).into_iter().map(|s| s.0).collect();
    let top_dl: BTreeSet<String> = top_k(by_dl, n).into_iter().map(|s| s.0).collect();
    let source_counts = SourceCounts { by_dependents: top_deps.len(), by_downloads: top_dl.len(), union: 0 };
    let members: BTreeSet<String> = top_deps.union(&top_dl).cloned().collect();
    PopularSample { source_counts: SourceCounts { union: members.len(), ..source_counts }, members }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSet {
    pub signal: String,
    pub members: BTreeSet<String>,
}

/// Package-level member sets per combinable label. W3 is the inactive
/// package set (it contains both other W3 sub-signals); W6 is every package
/// owned by a flagged maintainer.
pub fn signal_sets(findings: &[WeakLinkFinding]) -> BTreeMap<String, BTreeSet<String>> {
    let mut sets: BTreeMap<String, BTreeSet<String>> = COMBINABLE.iter().map(|l| (l.to_string(), BTreeSet::new())).collect();
    for f in findings.iter().filter(|f| f.subject_kind == SubjectKind::Package) {
        let label = match f.signal {
            Signal::W1 => "W1",
            Signal::W2 => "W2",
            Signal::W3InactivePkg => "W3",
            Signal::W3InactiveMaintainer | Signal::W3Deprecated => continue,
            Signal::W4 => "W4",
            Signal::W5 => "W5",
            Signal::W6 => "W6",
        };
        sets.get_mut(label).expect("known label").insert(f.subject_id.clone());
    }
    sets
}

pub fn combination_id(labels: &[&str]) -> String {
    let mut l: Vec<&str> = labels.to_vec();
    l.sort_unstable();
    l.dedup();
    l.join("+")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combination {
    pub id: String,
    pub count: usize,
    pub members: BTreeSet<String>,
}

/// Intersection of all sets, restricted to `scope` first when given.
pub fn intersect(signals: &[SignalSet], scope: Option<&BTreeSet<String>>) -> Combination {
    let labels: Vec<&str> = signals.iter().map(|s| s.signal.as_str()).collect();
    let mut iter = signals.iter();
    let mut acc: BTreeSet<String> = match (iter.next(), scope) {
        (None, _) => BTreeSet::new(),
        (Some(first), Some(s)) => first.members.intersection(s).cloned().collect(),
        (Some(first), None) => first.members.clone(),
    };
    for s in iter {
        acc.retain(|m| s.members.contains(m));
    }
    Combination { id: combination_id(&labels), count: acc.len(), members: acc }
}

/// Every pair and triple of the combinable labels.
pub fn all_combinations(sets: &BTreeMap<String, BTreeSet<String>>, scope: Option<&BTreeSet<String>>) -> Vec<Combination> {
    let labels: Vec<&String> = sets.keys().collect();
    let mut groups: Vec<Vec<&String>> = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            groups.push(vec![labels[i], labels[j]]);
            for k in j + 1..labels.len() {
                groups.push(vec![labels[i], labels[j], labels[k]]);
            }
        }
    }
    let mut out: Vec<Combination> = groups
        .par_iter()
        .map(|g| {
            let sets: Vec<SignalSet> =
                g.iter().map(|l| SignalSet { signal: l.to_string(), members: sets[*l].clone() }).collect();
            intersect(&sets, scope)
        })
        .collect();
    out.sort_by(|a, b| a.id.len().cmp(&b.id.len()).then_with(|| a.id.cmp(&b.id)));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordHit {
    pub package: String,
    pub script_keys: Vec<String>,
    pub tokens: Vec<String>,
    pub pattern: ScriptPattern,
}

/// Install-script packages whose install bodies carry a suspicious token.
pub fn keyword_hunt(corpus: &Corpus, cfg: &AnalyzerConfig) -> Vec<KeywordHit> {
    corpus
        .records()
        .par_iter()
        .filter_map(|rec| {
            let scripts = install_scripts(rec, cfg);
            if scripts.is_empty() {
                return None;
            }
            let tokens = suspicious_install_tokens(rec, cfg);
            if tokens.is_empty() {
                return None;
            }
            let joined: Vec<&str> = scripts.iter().map(|(_, b)| *b).collect();
            Some(KeywordHit {
                package: rec.name.clone(),
                script_keys: scripts.iter().map(|(k, _)| k.to_string()).collect(),
                tokens: tokens.into_iter().map(str::to_string).collect(),
                pattern: classify_script(&joined.join("\n")),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HijackRow {
    pub package: String,
    pub maintainer_email: String,
    pub domain: String,
    pub dependents: usize,
    pub downloads: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TakeoverRow {
    pub maintainer_key: String,
    pub package: String,
    pub dependents: usize,
    pub downloads: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackCandidates {
    /// Inactive packages owned through an available maintainer domain.
    pub hijackable: Vec<HijackRow>,
    /// Packages of overloaded maintainers that are themselves inactive.
    pub takeover: Vec<TakeoverRow>,
}

impl AttackCandidates {
    pub fn hijackable_packages(&self) -> BTreeSet<&str> {
        self.hijackable.iter().map(|r| r.package.as_str()).collect()
    }

    pub fn takeover_maintainers(&self) -> BTreeSet<&str> {
        self.takeover.iter().map(|r| r.maintainer_key.as_str()).collect()
    }
}

pub fn attack_candidates(
    corpus: &Corpus,
    mindex: &MaintainerIndex,
    dindex: &DependentsIndex,
    findings: &[WeakLinkFinding],
    downloads: &HashMap<String, u64>,
    scope: Option<&BTreeSet<String>>,
    cfg: &AnalyzerConfig,
) -> AttackCandidates {
    let in_scope = |p: &str| scope.map_or(true, |s| s.contains(p));
    let inactive: BTreeSet<&str> = findings
        .iter()
        .filter(|f| f.signal == Signal::W3InactivePkg)
        .map(|f| f.subject_id.as_str())
        .collect();
    let mut out = AttackCandidates::default();
    for f in findings.iter().filter(|f| f.signal == Signal::W1) {
        let pkg = f.subject_id.as_str();
        if !inactive.contains(pkg) || !in_scope(pkg) {
            continue;
        }
        let key = &f.evidence["maintainer_key"];
        let email = corpus
            .get(pkg)
            .and_then(|r| r.maintainers.iter().find(|m| &m.identity_key == key))
            .and_then(|m| m.email.clone())
            .unwrap_or_else(|| key.clone());
        out.hijackable.push(HijackRow {
            package: pkg.to_string(),
            maintainer_email: email,
            domain: f.evidence["domain"].clone(),
            dependents: dindex.dependent_count(pkg),
            downloads: downloads.get(pkg).copied(),
        });
    }
    let reference = reference_time(corpus, cfg);
    let window = cfg.inactivity_window();
    for f in findings.iter().filter(|f| f.signal == Signal::W6 && f.subject_kind == SubjectKind::Maintainer) {
        let Some(entry) = mindex.get(&f.subject_id) else { continue };
        if !is_inactive(entry.last_activity, reference, window) {
            continue;
        }
        for p in entry.owned_packages.iter().filter(|p| in_scope(p)) {
            out.takeover.push(TakeoverRow {
                maintainer_key: f.subject_id.clone(),
                package: p.clone(),
                dependents: dindex.dependent_count(p),
                downloads: downloads.get(p).copied(),
            });
        }
    }
    out.hijackable.sort();
    out.takeover.sort();
    out
}
