use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::GenerationPlan;
use crate::exclusion::ExclusionReason;
use crate::ingest::SnapshotLayout;
use crate::report::ReportSet;
use crate::signals::{ScriptCategory, Signal};

pub const MANIFEST_SCHEMA: &str = "weaklink.manifest.v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub raw: usize,
    pub excluded: usize,
    pub filtered: usize,
    pub maintainers: usize,
    pub inactive_maintainers: usize,
    pub maintainer_slots: usize,
    pub contributor_packages: usize,
    pub install_script_packages: usize,
    pub inactive_packages: usize,
}

/// A realized share next to the value the plan asked for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedRate {
    pub target: f64,
    pub count: usize,
    pub population: usize,
}

impl PlannedRate {
    pub fn realized(&self) -> f64 {
        if self.population == 0 {
            0.0
        } else {
            self.count as f64 / self.population as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestExclusions {
    /// package id → reasons, for every excluded package
    pub excluded: BTreeMap<String, BTreeSet<ExclusionReason>>,
    /// Packages that meet a reason but are kept because something depends on them.
    pub retained_with_reason: BTreeMap<String, BTreeSet<ExclusionReason>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestPopular {
    pub n: usize,
    pub by_dependents: BTreeSet<String>,
    pub by_downloads: BTreeSet<String>,
    pub members: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestPipeline {
    /// Inactive packages reachable through an available maintainer domain.
    pub hijackable: BTreeSet<String>,
    pub takeover_maintainers: BTreeSet<String>,
    pub takeover_packages: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct W1Entry {
    pub package: String,
    pub maintainer_key: String,
    pub domain: String,
}

/// W1 change between the primary domain fixture and the flipped one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestDiff {
    pub added: BTreeSet<W1Entry>,
    pub removed: BTreeSet<W1Entry>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub snapshot: String,
    pub layout: Option<SnapshotLayout>,
    pub domains_fixture: String,
    pub domains_after_fixture: String,
    pub downloads_fixture: String,
}

/// Ground truth for a generated corpus under the plan's thresholds and
/// otherwise default scan settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema: String,
    pub plan: GenerationPlan,
    pub reference_time: DateTime<Utc>,
    pub counts: ManifestCounts,
    pub rates: BTreeMap<String, PlannedRate>,
    pub mean_maintainers: PlannedRate,
    pub exclusions: ManifestExclusions,
    /// Package subjects per signal name (`W3_*` sub-signals included).
    pub signals: BTreeMap<String, BTreeSet<String>>,
    pub w1: BTreeSet<W1Entry>,
    pub w6_maintainers: BTreeSet<String>,
    pub popular: ManifestPopular,
    /// scope ("registry" or "popular") → combination id → count
    pub intersections: BTreeMap<String, BTreeMap<String, usize>>,
    pub pipelines: BTreeMap<String, ManifestPipeline>,
    /// Packages whose install scripts carry a suspicious token, with the
    /// category their bodies were drawn from.
    pub keyword_hunt: BTreeMap<String, ScriptCategory>,
    pub available_domains: BTreeSet<String>,
    pub downloads_entries: usize,
    pub diff: ManifestDiff,
    pub files: ManifestFiles,
}

fn check<T: Ord + std::fmt::Debug>(out: &mut Vec<String>, what: &str, expected: &BTreeSet<T>, actual: &BTreeSet<T>) {
    if expected == actual {
        return;
    }
    let missing: Vec<&T> = expected.difference(actual).take(5).collect();
    let extra: Vec<&T> = actual.difference(expected).take(5).collect();
    out.push(format!(
        "{what}: expected {} got {} (missing {missing:?}, unexpected {extra:?})",
        expected.len(),
        actual.len()
    ));
}

impl CorpusManifest {
    /// Every disagreement between the planted truth and a scan's reports.
    pub fn compare(&self, r: &ReportSet) -> Vec<String> {
        let mut out = Vec::new();
        let excluded: BTreeMap<String, BTreeSet<ExclusionReason>> =
            r.exclusions.iter().filter(|v| v.excluded).map(|v| (v.package_id.clone(), v.reasons.clone())).collect();
        let retained: BTreeMap<String, BTreeSet<ExclusionReason>> =
            r.exclusions.iter().filter(|v| !v.excluded).map(|v| (v.package_id.clone(), v.reasons.clone())).collect();
        let pairs = |m: &BTreeMap<String, BTreeSet<ExclusionReason>>| -> BTreeSet<(String, Vec<ExclusionReason>)> {
            m.iter().map(|(k, v)| (k.clone(), v.iter().copied().collect())).collect()
        };
        check(&mut out, "excluded", &pairs(&self.exclusions.excluded), &pairs(&excluded));
        check(&mut out, "retained_with_reason", &pairs(&self.exclusions.retained_with_reason), &pairs(&retained));

        for sig in Signal::ALL {
            let empty = BTreeSet::new();
            let expected = self.signals.get(sig.as_str()).unwrap_or(&empty);
            check(&mut out, sig.as_str(), expected, &r.packages(sig));
        }
        let w1: BTreeSet<W1Entry> = r
            .findings
            .iter()
            .filter(|f| f.signal == Signal::W1)
            .map(|f| W1Entry {
                package: f.subject_id.clone(),
                maintainer_key: f.evidence.get("maintainer_key").cloned().unwrap_or_default(),
                domain: f.evidence.get("domain").cloned().unwrap_or_default(),
            })
            .collect();
        check(&mut out, "W1 entries", &self.w1, &w1);
        check(&mut out, "W6 maintainers", &self.w6_maintainers, &r.maintainers(Signal::W6));

        for (scope, ids) in &self.intersections {
            for (id, &count) in ids {
                match r.members.get(&(scope.clone(), id.clone())) {
                    Some(m) if m.len() == count => {}
                    Some(m) => out.push(format!("{scope} {id}: expected {count} got {}", m.len())),
                    None => out.push(format!("{scope} {id}: missing from report")),
                }
            }
        }
        let hunt: BTreeMap<String, ScriptCategory> =
            r.keyword_hunt.iter().map(|h| (h.package.clone(), h.pattern.category)).collect();
        if hunt != self.keyword_hunt {
            let wrong: Vec<_> = hunt.iter().filter(|(k, v)| self.keyword_hunt.get(*k) != Some(v)).take(5).collect();
            out.push(format!("keyword hunt: expected {} got {} (differing {wrong:?})", self.keyword_hunt.len(), hunt.len()));
        }
        if let Some(c) = &r.candidates {
            for (scope, p) in &self.pipelines {
                let empty = (BTreeSet::new(), BTreeSet::new());
                let (h, t) = c.get(scope).unwrap_or(&empty);
                check(&mut out, &format!("{scope} hijackable"), &p.hijackable, h);
                check(&mut out, &format!("{scope} takeover maintainers"), &p.takeover_maintainers, t);
            }
        }
        if let Some(s) = &r.summary {
            let sizes = [
                ("raw", self.counts.raw, s.corpus.raw),
                ("excluded", self.counts.excluded, s.corpus.excluded),
                ("filtered", self.counts.filtered, s.corpus.filtered),
                ("maintainers", self.counts.maintainers, s.registry.maintainers),
                ("popular members", self.popular.members.len(), s.popular.members),
                ("popular by dependents", self.popular.by_dependents.len(), s.popular.by_dependents),
                ("popular by downloads", self.popular.by_downloads.len(), s.popular.by_downloads),
            ];
            for (what, want, got) in sizes {
                if want != got {
                    out.push(format!("{what}: expected {want} got {got}"));
                }
            }
            for (scope, p) in &self.pipelines {
                if let Some(pc) = s.pipelines.get(scope) {
                    if pc.hijackable_packages != p.hijackable.len()
                        || pc.takeover_maintainers != p.takeover_maintainers.len()
                        || pc.takeover_packages != p.takeover_packages.len()
                    {
                        out.push(format!("{scope} pipeline counts differ"));
                    }
                }
            }
        }
        out
    }
}
