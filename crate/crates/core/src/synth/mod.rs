//! Deterministic generator of registry snapshots with planted weak links.
//!
//! Planted signals are realized through metadata only (timestamps, emails,
//! script bodies, dependency edges). The [`CorpusManifest`] is derived from
//! the generated model with brute-force predicates, so it states exactly
//! what a correct scan with the plan's thresholds must report.

mod manifest;
mod templates;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use manifest::*;
pub use templates::PLANTED_CATEGORIES;
use templates::*;

use crate::combination::{combination_id, COMBINABLE};
use crate::config::{Percent, DAYS_PER_YEAR};
use crate::exclusion::ExclusionReason;
use crate::ingest::SnapshotLayout;
use crate::providers::{DomainFixtureLine, DownloadFixtureLine};
use crate::signals::{ScriptCategory, Signal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanRates {
    pub security_holding: f64,
    pub deprecated_unused: f64,
    pub no_repo_no_license: f64,
    /// Excluded packages that are deprecated and also lack repo and license.
    pub multi_reason: f64,
    /// Retained packages per exclusion reason that still have dependents.
    pub decoys: f64,
    pub install_script: f64,
    /// Share of install-script packages whose bodies carry a suspicious token.
    pub keyword_scripts: f64,
    pub inactive: f64,
    /// Packages whose maintainers are all inactive; a subset of `inactive`.
    pub inactive_maintainer: f64,
    pub deprecated_inactive: f64,
    pub contributor_listing: f64,
    pub expired_domain_maintainers: f64,
    /// W4 outliers among filtered packages; the top-percent cutoff when absent.
    pub maintainer_outliers: Option<f64>,
    /// Overloaded maintainers; the top-percent cutoff when absent.
    pub overloaded_maintainers: Option<f64>,
    /// Non-popular packages given one or two dependents.
    pub dependent_share: f64,
    /// Share of the popular-by-downloads list also popular by dependents.
    pub popular_overlap: f64,
    pub unknown_downloads: f64,
    /// Chance that a maintainer slot opens a new account instead of reusing one.
    pub new_maintainer: f64,
}

impl Default for PlanRates {
    fn default() -> Self {
        PlanRates {
            security_holding: 0.0051,
            deprecated_unused: 0.0233,
            no_repo_no_license: 0.0551,
            multi_reason: 0.0005,
            decoys: 0.001,
            install_script: 0.022,
            keyword_scripts: 0.10,
            inactive: 0.587,
            inactive_maintainer: 0.33,
            deprecated_inactive: 0.0037,
            contributor_listing: 0.026,
            expired_domain_maintainers: 0.0059,
            maintainer_outliers: None,
            overloaded_maintainers: None,
            dependent_share: 0.4,
            popular_overlap: 0.5108,
            unknown_downloads: 0.01,
            new_maintainer: 0.19,
        }
    }
}

impl PlanRates {
    /// Every rate zero: no exclusions, no planted signals, a flat ranking.
    pub fn zero() -> Self {
        PlanRates {
            security_holding: 0.0,
            deprecated_unused: 0.0,
            no_repo_no_license: 0.0,
            multi_reason: 0.0,
            decoys: 0.0,
            install_script: 0.0,
            keyword_scripts: 0.0,
            inactive: 0.0,
            inactive_maintainer: 0.0,
            deprecated_inactive: 0.0,
            contributor_listing: 0.0,
            expired_domain_maintainers: 0.0,
            maintainer_outliers: Some(0.0),
            overloaded_maintainers: Some(0.0),
            dependent_share: 0.0,
            popular_overlap: 0.0,
            unknown_downloads: 0.0,
            new_maintainer: 0.19,
        }
    }

    fn named(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("security_holding", self.security_holding),
            ("deprecated_unused", self.deprecated_unused),
            ("no_repo_no_license", self.no_repo_no_license),
            ("multi_reason", self.multi_reason),
            ("decoys", self.decoys),
            ("install_script", self.install_script),
            ("keyword_scripts", self.keyword_scripts),
            ("inactive", self.inactive),
            ("inactive_maintainer", self.inactive_maintainer),
            ("deprecated_inactive", self.deprecated_inactive),
            ("contributor_listing", self.contributor_listing),
            ("expired_domain_maintainers", self.expired_domain_maintainers),
            ("dependent_share", self.dependent_share),
            ("popular_overlap", self.popular_overlap),
            ("unknown_downloads", self.unknown_downloads),
            ("new_maintainer", self.new_maintainer),
        ];
        if let Some(x) = self.maintainer_outliers {
            v.push(("maintainer_outliers", x));
        }
        if let Some(x) = self.overloaded_maintainers {
            v.push(("overloaded_maintainers", x));
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationPlan {
    pub seed: u64,
    pub package_count: usize,
    pub reference_time: DateTime<Utc>,
    pub inactivity_years: u32,
    pub top_percent: Percent,
    /// Popular sample size; scaled from 10,000 of 1,494,105 when absent.
    pub popular_n: Option<usize>,
    pub mean_maintainers: f64,
    pub rates: PlanRates,
}

impl Default for GenerationPlan {
    fn default() -> Self {
        GenerationPlan {
            seed: 0,
            package_count: 10_000,
            reference_time: Utc.with_ymd_and_hms(2021, 6, 7, 0, 0, 0).single().expect("valid date"),
            inactivity_years: 2,
            top_percent: Percent::whole(1).expect("valid"),
            popular_n: None,
            mean_maintainers: 1.7,
            rates: PlanRates::default(),
        }
    }
}

impl GenerationPlan {
    pub fn new(seed: u64, package_count: usize) -> Self {
        GenerationPlan { seed, package_count, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.package_count == 0 {
            return Err(PlanError::NoPackages);
        }
        for (name, value) in self.rates.named() {
            if !(0.0..=1.0).contains(&value) {
                return Err(PlanError::RateOutOfRange { name, value });
            }
        }
        if !(self.mean_maintainers >= 1.0 && self.mean_maintainers <= 5.0) {
            return Err(PlanError::MeanMaintainers(self.mean_maintainers));
        }
        if self.inactivity_years == 0 {
            return Err(PlanError::Infeasible("inactivity window must be positive".into()));
        }
        let r = &self.rates;
        if r.inactive_maintainer > r.inactive {
            return Err(PlanError::Infeasible(format!(
                "inactive_maintainer rate {} exceeds inactive rate {}",
                r.inactive_maintainer, r.inactive
            )));
        }
        if r.deprecated_inactive > r.inactive {
            return Err(PlanError::Infeasible("deprecated_inactive rate exceeds inactive rate".into()));
        }
        if r.multi_reason > r.deprecated_unused.min(r.no_repo_no_license) {
            return Err(PlanError::Infeasible("multi_reason exceeds a single-reason exclusion rate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("package count must be at least 1")]
    NoPackages,
    #[error("rate {name} = {value} is outside [0, 1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("mean maintainers per package must lie in [1, 5], got {0}")]
    MeanMaintainers(f64),
    #[error("infeasible plan: {0}")]
    Infeasible(String),
}

/// A generated corpus held in memory: serialized documents in name order,
/// fixture lines and the manifest.
pub struct Generated {
    pub documents: Vec<(String, String)>,
    pub domains: Vec<DomainFixtureLine>,
    pub domains_after: Vec<DomainFixtureLine>,
    pub downloads: Vec<DownloadFixtureLine>,
    pub manifest: CorpusManifest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Active,
    /// Inactive, with at least one maintainer active elsewhere.
    Mixed,
    /// Inactive, and so is every maintainer.
    Dormant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Holding {
    No,
    Phrase,
    PhraseAndTag,
    TagOnly,
}

struct Person {
    name: String,
    email: Option<String>,
    domain: Option<String>,
    active: bool,
    owned: Vec<usize>,
}

impl Person {
    fn key(&self) -> String {
        match &self.email {
            Some(e) => e.to_lowercase(),
            None => format!("name:{}", self.name.to_lowercase()),
        }
    }
}

struct Pkg {
    name: String,
    version: String,
    status: Status,
    last_modified: DateTime<Utc>,
    created: DateTime<Utc>,
    maintainers: Vec<usize>,
    contributors: usize,
    install: Option<(String, String)>,
    keyword: Option<ScriptCategory>,
    stale_install: bool,
    deprecated: bool,
    holding: Holding,
    no_repo_license: bool,
    deps: BTreeSet<usize>,
    downloads: Option<u64>,
    excluded: bool,
}

impl Pkg {
    fn new(name: String) -> Self {
        Pkg {
            name,
            version: String::new(),
            status: Status::Active,
            last_modified: DateTime::<Utc>::MIN_UTC,
            created: DateTime::<Utc>::MIN_UTC,
            maintainers: Vec::new(),
            contributors: 0,
            install: None,
            keyword: None,
            stale_install: false,
            deprecated: false,
            holding: Holding::No,
            no_repo_license: false,
            deps: BTreeSet::new(),
            downloads: None,
            excluded: false,
        }
    }

    fn reasons(&self) -> BTreeSet<ExclusionReason> {
        let mut r = BTreeSet::new();
        if self.holding != Holding::No {
            r.insert(ExclusionReason::SecurityHolding);
        }
        if self.deprecated {
            r.insert(ExclusionReason::DeprecatedUnused);
        }
        if self.no_repo_license {
            r.insert(ExclusionReason::NoRepoNoLicense);
        }
        r
    }
}

fn below<R: Rng>(rng: &mut R, n: usize) -> usize {
    if n == 0 {
        0
    } else {
        rng.gen_range(0..n as u64) as usize
    }
}

fn count(rate: f64, population: usize) -> usize {
    (rate * population as f64).round() as usize
}

fn base36(mut n: usize) -> String {
    const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";
    let mut out = Vec::new();
    loop {
        out.push(DIGITS[n % 36]);
        n /= 36;
        if n == 0 {
            break;
        }
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

fn shuffled<R: Rng>(rng: &mut R, mut v: Vec<usize>) -> Vec<usize> {
    v.shuffle(rng);
    v
}

/// Reuses an account already holding a slot in `slots` (preferential
/// attachment), or opens a new one.
fn pick_person<R: Rng>(
    rng: &mut R,
    persons: &mut Vec<Person>,
    slots: &mut Vec<usize>,
    taken: &[usize],
    active: bool,
    new_share: f64,
) -> usize {
    if !slots.is_empty() && !rng.gen_bool(new_share) {
        if let Some(id) = pick_existing(rng, slots, taken) {
            slots.push(id);
            return id;
        }
    }
    let id = persons.len();
    persons.push(Person { name: String::new(), email: None, domain: None, active, owned: Vec::new() });
    slots.push(id);
    id
}

fn pick_existing<R: Rng>(rng: &mut R, slots: &[usize], taken: &[usize]) -> Option<usize> {
    if slots.is_empty() {
        return None;
    }
    (0..8).map(|_| slots[below(rng, slots.len())]).find(|id| !taken.contains(id))
}

/// Members of the closed top-`k` by score: everything scoring at least the
/// k-th highest score.
fn closed_top<T: Ord + Copy>(scores: &[(usize, T)], k: usize) -> BTreeSet<usize> {
    if k == 0 || scores.is_empty() {
        return BTreeSet::new();
    }
    let mut values: Vec<T> = scores.iter().map(|s| s.1).collect();
    values.sort_by(|a, b| b.cmp(a));
    let threshold = values[k.min(values.len()) - 1];
    scores.iter().filter(|s| s.1 >= threshold).map(|s| s.0).collect()
}

/// Maintainer-to-contributor ratio ordered so that lower ratios rank higher.
#[derive(Clone, Copy, PartialEq, Eq)]
struct LowRatio(u64, u64);

impl Ord for LowRatio {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0 as u128 * self.1 as u128).cmp(&(self.0 as u128 * other.1 as u128))
    }
}

impl PartialOrd for LowRatio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn generate(plan: &GenerationPlan) -> Result<Generated, PlanError> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let rates = &plan.rates;
    let n = plan.package_count;
    let reference = plan.reference_time;
    let window_days = plan.inactivity_years as i64 * DAYS_PER_YEAR;

    let e_sec = count(rates.security_holding, n);
    let e_dep = count(rates.deprecated_unused, n);
    let e_nrl = count(rates.no_repo_no_license, n);
    let multi = count(rates.multi_reason, n).min(e_dep).min(e_nrl);
    let excluded_n = e_sec + e_dep + e_nrl - multi;
    if excluded_n >= n {
        return Err(PlanError::Infeasible(format!("{excluded_n} exclusions leave no package of {n}")));
    }
    let f = n - excluded_n;

    let mut pkgs: Vec<Pkg> = (0..n)
        .map(|i| {
            let name = if rng.gen_bool(0.08) {
                format!("@{}/{}-{}", pick(&mut rng, SCOPES), pick(&mut rng, NAME_WORDS), base36(i))
            } else {
                format!("{}-{}-{}", pick(&mut rng, NAME_WORDS), pick(&mut rng, NAME_WORDS), base36(i))
            };
            Pkg::new(name)
        })
        .collect();
    pkgs.shuffle(&mut rng);

    // activity classes
    let order = shuffled(&mut rng, (0..f).collect());
    let inactive_n = count(rates.inactive, f).min(f - 1);
    let dormant_n = count(rates.inactive_maintainer, f).min(inactive_n);
    for (rank, &p) in order.iter().enumerate() {
        pkgs[p].status = if rank < dormant_n {
            Status::Dormant
        } else if rank < inactive_n {
            Status::Mixed
        } else {
            Status::Active
        };
    }
    let pinned = order[inactive_n];

    // maintainer and contributor counts
    let perm = shuffled(&mut rng, (0..f).collect());
    let k4 = match rates.maintainer_outliers {
        Some(x) => count(x, f),
        None => plan.top_percent.cutoff(f),
    }
    .min(f);
    let contributors_n = count(rates.contributor_listing, f);
    let k5 = if contributors_n > 0 { plan.top_percent.cutoff(contributors_n) } else { 0 };
    if k4 + k5 > f {
        return Err(PlanError::Infeasible("maintainer outliers and contributor outliers exceed the corpus".into()));
    }
    let w4: Vec<usize> = perm[..k4].to_vec();
    let w5: Vec<usize> = perm[k4..k4 + k5].to_vec();
    let rest: Vec<usize> = perm[k4 + k5..].to_vec();
    let mut mcount = vec![1usize; f];
    for &p in &w4 {
        mcount[p] = 20 + below(&mut rng, 26);
    }
    let slots_target = (plan.mean_maintainers * f as f64).round() as usize;
    let used: usize = mcount.iter().sum();
    let mut extra = slots_target.saturating_sub(used).min(3 * rest.len());
    'fill: for _ in 0..3 {
        for &p in &rest {
            if extra == 0 {
                break 'fill;
            }
            mcount[p] += 1;
            extra -= 1;
        }
    }
    for &p in &w5 {
        pkgs[p].contributors = 40;
    }
    let others = shuffled(&mut rng, perm[..k4].iter().chain(&rest).copied().collect());
    for &p in others.iter().take(contributors_n - k5) {
        pkgs[p].contributors = 1 + below(&mut rng, 2 * mcount[p]);
    }

    // maintainer accounts
    let mut persons: Vec<Person> = Vec::new();
    let mut active_slots: Vec<usize> = Vec::new();
    let mut dormant_slots: Vec<usize> = Vec::new();
    let nm = rates.new_maintainer;
    for status in [Status::Active, Status::Dormant, Status::Mixed] {
        let members: Vec<usize> = order.iter().copied().filter(|&p| pkgs[p].status == status).collect();
        for p in members {
            let mut chosen: Vec<usize> = Vec::with_capacity(mcount[p]);
            for slot in 0..mcount[p] {
                let id = match status {
                    Status::Active => pick_person(&mut rng, &mut persons, &mut active_slots, &chosen, true, nm),
                    Status::Dormant => pick_person(&mut rng, &mut persons, &mut dormant_slots, &chosen, false, nm),
                    Status::Mixed => {
                        let reuse_active = slot == 0 || rng.gen_bool(0.5);
                        match reuse_active.then(|| pick_existing(&mut rng, &active_slots, &chosen)).flatten() {
                            Some(id) => {
                                active_slots.push(id);
                                id
                            }
                            None => pick_person(&mut rng, &mut persons, &mut dormant_slots, &chosen, false, nm),
                        }
                    }
                };
                chosen.push(id);
            }
            for &id in &chosen {
                persons[id].owned.push(p);
            }
            pkgs[p].maintainers = chosen;
        }
    }
    let m_f = persons.len();

    // expired-domain maintainers own only their own W1 packages
    let m1 = if rates.expired_domain_maintainers > 0.0 { count(rates.expired_domain_maintainers, m_f).max(1) } else { 0 };
    let cand_dormant = shuffled(&mut rng, (0..m_f).filter(|&i| !persons[i].active).collect());
    let cand_active = shuffled(&mut rng, (0..m_f).filter(|&i| persons[i].active).collect());
    let mut w1_people: Vec<usize> = Vec::new();
    let mut blocked: HashSet<usize> = HashSet::new();
    let (mut da, mut aa) = (cand_dormant.iter(), cand_active.iter());
    let mut turn_dormant = true;
    while w1_people.len() < m1 {
        let next = if turn_dormant { da.next().or_else(|| aa.next()) } else { aa.next().or_else(|| da.next()) };
        let Some(&id) = next else { break };
        turn_dormant = !turn_dormant;
        if persons[id].owned.iter().any(|p| blocked.contains(p)) {
            continue;
        }
        blocked.extend(persons[id].owned.iter().copied());
        w1_people.push(id);
    }
    let w1_set: HashSet<usize> = w1_people.iter().copied().collect();

    // overloaded maintainers, each with a single-owner hub package
    let k6 = match rates.overloaded_maintainers {
        Some(x) => count(x, m_f),
        None => plan.top_percent.cutoff(m_f),
    };
    let hub_of = |id: usize, pkgs: &[Pkg], persons: &[Person]| -> Vec<usize> {
        persons[id].owned.iter().copied().filter(|&p| pkgs[p].maintainers.len() == 1).collect()
    };
    let ranked_pool = |active: bool, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut pool = shuffled(
            rng,
            (0..m_f)
                .filter(|&i| persons[i].active == active && !w1_set.contains(&i) && !hub_of(i, &pkgs, &persons).is_empty())
                .collect(),
        );
        pool.sort_by(|a, b| persons[*b].owned.len().cmp(&persons[*a].owned.len()));
        pool
    };
    let dormant_pool = ranked_pool(false, &mut rng);
    let active_pool = ranked_pool(true, &mut rng);
    let want_dormant = k6.div_ceil(3).min(dormant_pool.len());
    let mut overloaded: Vec<usize> = dormant_pool[..want_dormant].to_vec();
    overloaded.extend(active_pool.iter().take(k6 - want_dormant));
    overloaded.extend(dormant_pool[want_dormant..].iter().take(k6 - overloaded.len()));
    if overloaded.len() < k6 {
        return Err(PlanError::Infeasible(format!(
            "{k6} overloaded maintainers requested but only {} own a single-owner package",
            overloaded.len()
        )));
    }
    let overloaded_set: HashSet<usize> = overloaded.iter().copied().collect();
    let hubs: Vec<(usize, usize)> = overloaded
        .iter()
        .map(|&id| {
            let own = hub_of(id, &pkgs, &persons);
            (id, own[below(&mut rng, own.len())])
        })
        .collect();
    let hub_pkgs: HashSet<usize> = hubs.iter().map(|h| h.1).collect();

    // popular sample size
    let default_n = ((f as f64 * 10_000.0 / 1_494_105.0).round() as usize).max(1);
    let n_pop = match plan.popular_n {
        Some(0) => return Err(PlanError::Infeasible("popular_n must be at least 1".into())),
        Some(x) if x < k6 => {
            return Err(PlanError::Infeasible(format!("popular_n {x} is below the {k6} overloaded maintainers")))
        }
        Some(x) => x,
        None => default_n.max(k6),
    }
    .min(f);

    // dependents per package
    let mut dcount = vec![0usize; f];
    let plant_popular = rates.dependent_share > 0.0 || k6 > 0;
    let non_hub = shuffled(&mut rng, (0..f).filter(|p| !hub_pkgs.contains(p)).collect());
    let mut popular_deps: BTreeSet<usize> = hub_pkgs.iter().copied().collect();
    if plant_popular {
        for &p in non_hub.iter().take(n_pop.saturating_sub(k6)) {
            dcount[p] = 3 + below(&mut rng, 10);
            popular_deps.insert(p);
        }
    }
    let d3_n = count(rates.deprecated_inactive, f);
    let d3: Vec<usize> =
        non_hub.iter().copied().filter(|&p| pkgs[p].status != Status::Active).rev().take(d3_n).collect();
    let d3_set: HashSet<usize> = d3.iter().copied().collect();
    let decoy_n = count(rates.decoys, f);
    let decoy_pool: Vec<usize> = non_hub.iter().copied().filter(|p| !d3_set.contains(p)).rev().collect();
    let dep_decoys: Vec<usize> =
        decoy_pool.iter().copied().filter(|&p| pkgs[p].status == Status::Active).take(decoy_n).collect();
    let other_decoys: Vec<usize> =
        decoy_pool.iter().copied().filter(|p| !dep_decoys.contains(p)).take(2 * decoy_n).collect();
    for &p in &d3 {
        pkgs[p].deprecated = true;
    }
    for &p in &dep_decoys {
        pkgs[p].deprecated = true;
    }
    for (i, &p) in other_decoys.iter().enumerate() {
        if i % 2 == 0 {
            pkgs[p].holding = Holding::Phrase;
        } else {
            pkgs[p].no_repo_license = true;
        }
    }
    for p in 0..f {
        if hub_pkgs.contains(&p) || dcount[p] > 0 {
            continue;
        }
        let must = !pkgs[p].reasons().is_empty();
        if must || rng.gen_bool(rates.dependent_share) {
            dcount[p] = 1 + below(&mut rng, 2);
        }
    }
    let bound = (0..m_f)
        .filter(|i| !overloaded_set.contains(i))
        .map(|i| persons[i].owned.iter().map(|&p| dcount[p]).sum::<usize>())
        .max()
        .unwrap_or(0);
    let base = bound.max(dcount.iter().copied().max().unwrap_or(0));
    for (j, &(owner, hub)) in hubs.iter().enumerate() {
        dcount[hub] = base + 1 + j;
        let available = f - persons[owner].owned.len();
        if dcount[hub] > available {
            return Err(PlanError::Infeasible(format!(
                "hub package needs {} dependents but only {available} packages can depend on it",
                dcount[hub]
            )));
        }
    }

    // dependency edges realizing the counts
    let owner_of_hub: BTreeMap<usize, usize> = hubs.iter().map(|&(o, h)| (h, o)).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); f];
    for t in 0..f {
        let need = dcount[t];
        if need == 0 {
            continue;
        }
        let forbidden: HashSet<usize> = match owner_of_hub.get(&t) {
            Some(&o) => persons[o].owned.iter().copied().collect(),
            None => [t].into_iter().collect(),
        };
        let available = f - forbidden.len();
        let sources: Vec<usize> = if need * 2 > available {
            let mut c: Vec<usize> = (0..f).filter(|s| !forbidden.contains(s)).collect();
            c.shuffle(&mut rng);
            c.truncate(need);
            c
        } else {
            let mut seen = HashSet::new();
            let mut v = Vec::with_capacity(need);
            while v.len() < need {
                let s = below(&mut rng, f);
                if !forbidden.contains(&s) && seen.insert(s) {
                    v.push(s);
                }
            }
            v
        };
        for s in sources {
            pkgs[s].deps.insert(t);
            dependents[t].push(s);
        }
    }

    // downloads
    let w1_inactive: Vec<usize> = w1_people
        .iter()
        .flat_map(|&id| persons[id].owned.iter().copied())
        .filter(|&p| pkgs[p].status != Status::Active && !popular_deps.contains(&p))
        .collect();
    let dep_list: Vec<usize> = popular_deps.iter().copied().collect();
    let outside_n = (n_pop - count(rates.popular_overlap, n_pop)).min(f - dep_list.len());
    let overlap_n = (n_pop - outside_n).min(dep_list.len());
    let forced: Vec<usize> = w1_inactive.iter().copied().take(3.min(outside_n)).collect();
    let mut outside: Vec<usize> = forced.clone();
    let pool = shuffled(&mut rng, (0..f).filter(|p| !popular_deps.contains(p) && !forced.contains(p)).collect());
    outside.extend(pool.into_iter().take(outside_n - forced.len()));
    let mut popular_dl: Vec<usize> = outside;
    popular_dl.extend(shuffled(&mut rng, dep_list).into_iter().take(overlap_n));
    popular_dl.shuffle(&mut rng);
    let popular_dl_set: HashSet<usize> = popular_dl.iter().copied().collect();
    for (i, &p) in popular_dl.iter().enumerate() {
        pkgs[p].downloads = Some(1_000_000 + i as u64 * 10_000 + below(&mut rng, 10_000) as u64);
    }
    for p in 0..f {
        if popular_dl_set.contains(&p) {
            continue;
        }
        if !rng.gen_bool(rates.unknown_downloads) {
            pkgs[p].downloads = Some(below(&mut rng, 900_000) as u64);
        }
    }

    // install scripts
    let w2_n = count(rates.install_script, f);
    let kw_n = count(rates.keyword_scripts, w2_n);
    let w2 = shuffled(&mut rng, (0..f).collect());
    for (i, &p) in w2.iter().take(w2_n).enumerate() {
        let key = pick(&mut rng, INSTALL_KEYS).to_string();
        let body = if i < kw_n {
            let cat = PLANTED_CATEGORIES[i % PLANTED_CATEGORIES.len()];
            pkgs[p].keyword = Some(cat);
            keyword_script(&mut rng, cat)
        } else {
            pick(&mut rng, BENIGN_INSTALL).to_string()
        };
        pkgs[p].install = Some((key, body));
    }
    for p in w2.iter().skip(w2_n).copied().collect::<Vec<_>>() {
        pkgs[p].stale_install = rng.gen_bool(0.03);
    }

    // timestamps and versions
    let day = 86_400usize;
    for p in 0..f {
        let last = match pkgs[p].status {
            _ if p == pinned => reference,
            Status::Active => reference - Duration::seconds(below(&mut rng, (window_days as usize - 30) * day) as i64),
            _ => {
                reference
                    - Duration::days(window_days + 30)
                    - Duration::seconds(below(&mut rng, 2000 * day) as i64)
            }
        };
        pkgs[p].last_modified = last;
        pkgs[p].created = last - Duration::seconds(below(&mut rng, 1500 * day) as i64);
        pkgs[p].version = format!("1.{}.{}", below(&mut rng, 20), below(&mut rng, 30));
    }

    // excluded packages
    let excluded_idx: Vec<usize> = (f..n).collect();
    let mut cursor = excluded_idx.iter();
    for i in 0..e_sec {
        let p = *cursor.next().expect("sized");
        pkgs[p].holding = [Holding::Phrase, Holding::PhraseAndTag, Holding::TagOnly][i % 3];
    }
    for _ in 0..multi {
        let p = *cursor.next().expect("sized");
        pkgs[p].deprecated = true;
        pkgs[p].no_repo_license = true;
    }
    for _ in 0..e_dep - multi {
        pkgs[*cursor.next().expect("sized")].deprecated = true;
    }
    for _ in 0..e_nrl - multi {
        pkgs[*cursor.next().expect("sized")].no_repo_license = true;
    }
    for &p in &excluded_idx {
        let pkg = &mut pkgs[p];
        pkg.excluded = true;
        pkg.last_modified = reference - Duration::seconds(below(&mut rng, 3000 * day) as i64);
        pkg.created = pkg.last_modified - Duration::seconds(below(&mut rng, 400 * day) as i64);
        pkg.version = if matches!(pkg.holding, Holding::PhraseAndTag | Holding::TagOnly) {
            "0.0.1-security".to_string()
        } else {
            format!("0.{}.{}", below(&mut rng, 10), below(&mut rng, 10))
        };
    }

    // identities
    let pool_size = (m_f / 8).max(1);
    let custom: Vec<String> = (0..pool_size)
        .map(|i| format!("{}{}{}.{}", pick(&mut rng, NAME_WORDS), pick(&mut rng, NAME_WORDS), base36(i), pick(&mut rng, TLDS)))
        .collect();
    let mut status_of: BTreeMap<String, bool> = BTreeMap::new(); // domain → available
    for d in WEBMAIL {
        status_of.insert(d.to_string(), false);
    }
    for (i, d) in custom.iter().enumerate() {
        if i % 20 != 19 {
            status_of.insert(d.clone(), false);
        }
    }
    for id in 0..m_f {
        let first = pick(&mut rng, FIRST_NAMES);
        let tag = base36(id);
        let mut cap = first.to_string();
        cap[..1].make_ascii_uppercase();
        persons[id].name = format!("{cap} {tag}");
        let domain = if w1_set.contains(&id) {
            let d = format!("{}{}-{}.{}", pick(&mut rng, NAME_WORDS), pick(&mut rng, NAME_WORDS), tag, pick(&mut rng, TLDS));
            status_of.insert(d.clone(), true);
            Some(d)
        } else {
            match below(&mut rng, 100) {
                0..=76 => Some(pick(&mut rng, WEBMAIL).to_string()),
                77..=96 => Some(custom[below(&mut rng, custom.len())].clone()),
                _ => None,
            }
        };
        persons[id].email = domain.as_ref().map(|d| format!("{first}.{tag}@{d}"));
        persons[id].domain = domain;
    }
    // one maintainer whose private domain lapses in the second fixture
    let flip_candidates: Vec<usize> = (0..m_f)
        .filter(|i| !w1_set.contains(i) && !overloaded_set.contains(i) && persons[*i].email.is_some())
        .collect();
    let flip_person = (!flip_candidates.is_empty()).then(|| flip_candidates[below(&mut rng, flip_candidates.len())]);
    if let Some(id) = flip_person {
        let tag = base36(id);
        let d = format!("flip-{}{}.dev", pick(&mut rng, NAME_WORDS), tag);
        persons[id].email = Some(format!("{}.{tag}@{d}", pick(&mut rng, FIRST_NAMES)));
        persons[id].domain = Some(d.clone());
        status_of.insert(d, false);
    }
    let renewed = w1_people.first().copied();

    // accounts for excluded packages never touch the filtered index
    let holder = persons.len();
    persons.push(Person {
        name: "npm".into(),
        email: Some("support@npmjs.com".into()),
        domain: Some("npmjs.com".into()),
        active: true,
        owned: Vec::new(),
    });
    status_of.insert("npmjs.com".into(), false);
    for &p in &excluded_idx {
        let id = if pkgs[p].holding != Holding::No {
            holder
        } else {
            let id = persons.len();
            let first = pick(&mut rng, FIRST_NAMES);
            let d = pick(&mut rng, WEBMAIL);
            persons.push(Person {
                name: format!("{first} x{}", base36(p)),
                email: Some(format!("{first}.x{}@{d}", base36(p))),
                domain: Some(d.to_string()),
                active: false,
                owned: Vec::new(),
            });
            id
        };
        persons[id].owned.push(p);
        pkgs[p].maintainers = vec![id];
    }

    // documents
    let mut documents: Vec<(String, String)> =
        (0..n).map(|p| (pkgs[p].name.clone(), document(&mut rng, p, &pkgs, &persons))).collect();
    documents.sort_by(|a, b| a.0.cmp(&b.0));

    let fixture = |flip: bool| -> Vec<DomainFixtureLine> {
        status_of
            .iter()
            .map(|(d, &avail)| {
                let flip_here = flip
                    && (flip_person.is_some_and(|id| persons[id].domain.as_deref() == Some(d))
                        || renewed.is_some_and(|id| persons[id].domain.as_deref() == Some(d)));
                let available = avail != flip_here;
                DomainFixtureLine {
                    domain: d.clone(),
                    status: if available { "available" } else { "registered" }.to_string(),
                }
            })
            .collect()
    };
    let domains = fixture(false);
    let domains_after = fixture(true);
    let mut downloads: Vec<DownloadFixtureLine> = (0..f)
        .filter_map(|p| pkgs[p].downloads.map(|d| DownloadFixtureLine { package: pkgs[p].name.clone(), downloads: d }))
        .collect();
    downloads.sort_by(|a, b| a.package.cmp(&b.package));

    let ctx = Model { plan, pkgs: &pkgs, persons: &persons, f, m_f, dependents: &dependents, n_pop, window_days };
    let available: BTreeSet<String> =
        domains.iter().filter(|l| l.status == "available").map(|l| l.domain.clone()).collect();
    let available_after: BTreeSet<String> =
        domains_after.iter().filter(|l| l.status == "available").map(|l| l.domain.clone()).collect();
    let manifest = ctx.manifest(&available, &available_after, downloads.len(), w2_n, contributors_n);
    Ok(Generated { documents, domains, domains_after, downloads, manifest })
}

fn person_value(p: &Person, id: usize) -> Value {
    match &p.email {
        Some(e) if id % 4 == 3 => Value::String(format!("{} <{}>", p.name, e)),
        Some(e) => json!({"name": p.name, "email": e}),
        None => json!({"name": p.name}),
    }
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn document<R: Rng>(rng: &mut R, idx: usize, pkgs: &[Pkg], persons: &[Person]) -> String {
    let p = &pkgs[idx];
    let people: Vec<Value> = p.maintainers.iter().map(|&id| person_value(&persons[id], id)).collect();
    let slug = p.name.trim_start_matches('@').replace('/', "-");
    let owner = persons[p.maintainers[0]].name.split(' ').next().unwrap_or("dev").to_lowercase();

    let description = match p.holding {
        Holding::Phrase | Holding::PhraseAndTag => {
            if p.excluded {
                "security holding package".to_string()
            } else {
                "Security holding package kept for existing dependents".to_string()
            }
        }
        Holding::TagOnly => "This package name is not currently in use".to_string(),
        Holding::No => format!("{} {} helpers", pick(rng, NAME_WORDS), pick(rng, NAME_WORDS)),
    };

    let mut scripts = Map::new();
    for _ in 0..1 + below(rng, 2) {
        let (k, v) = PLAIN_SCRIPTS[below(rng, PLAIN_SCRIPTS.len())];
        scripts.insert(k.to_string(), Value::String(v.to_string()));
    }
    if let Some((k, v)) = &p.install {
        scripts.insert(k.clone(), Value::String(v.clone()));
    }
    let mut deps = Map::new();
    for &t in &p.deps {
        deps.insert(pkgs[t].name.clone(), Value::String(format!("^{}", pkgs[t].version)));
    }
    if !p.excluded && rng.gen_bool(0.3) {
        deps.insert(pick(rng, EXTERNAL_DEPS).to_string(), Value::String("^4.0.0".into()));
    }
    let mut dev = Map::new();
    for _ in 0..below(rng, 3) {
        dev.insert(pick(rng, DEV_DEPS).to_string(), Value::String("^1.0.0".into()));
    }

    let mut latest = Map::new();
    latest.insert("name".into(), json!(p.name));
    latest.insert("version".into(), json!(p.version));
    latest.insert("description".into(), json!(description));
    latest.insert("scripts".into(), Value::Object(scripts));
    if !deps.is_empty() {
        latest.insert("dependencies".into(), Value::Object(deps));
    }
    if !dev.is_empty() {
        latest.insert("devDependencies".into(), Value::Object(dev));
    }
    latest.insert("maintainers".into(), Value::Array(people.clone()));
    if p.contributors > 0 {
        let list: Vec<Value> = (0..p.contributors)
            .map(|j| {
                let first = pick(rng, FIRST_NAMES);
                let email = format!("{first}.c{j}@{}", pick(rng, WEBMAIL));
                if j % 3 == 2 {
                    Value::String(format!("{first} <{email}>"))
                } else {
                    json!({"name": first, "email": email})
                }
            })
            .collect();
        latest.insert("contributors".into(), Value::Array(list));
    }
    if p.deprecated {
        let d = if idx % 2 == 0 { json!(true) } else { json!("This package is no longer maintained") };
        latest.insert("deprecated".into(), d);
    }
    latest.insert(
        "dist".into(),
        json!({
            "unpackedSize": 1_000 + below(rng, 500_000),
            "fileCount": 1 + below(rng, 200),
            "tarball": format!("https://registry.example/{}/-/{}-{}.tgz", p.name, slug, p.version),
        }),
    );
    let (repo, license) = if p.no_repo_license {
        (None, INVALID_LICENSES[below(rng, INVALID_LICENSES.len())].map(|l| json!(l)))
    } else {
        let repo = match idx % 3 {
            0 => json!(format!("github:{owner}/{slug}")),
            1 => json!({"type": "git", "url": format!("git+https://github.com/{owner}/{slug}.git")}),
            _ => json!(format!("{owner}/{slug}")),
        };
        let l = pick(rng, VALID_LICENSES);
        (Some(repo), Some(if idx % 10 == 0 { json!({"type": l}) } else { json!(l) }))
    };
    if let Some(r) = &repo {
        latest.insert("repository".into(), r.clone());
    }
    if let Some(l) = &license {
        latest.insert("license".into(), l.clone());
    }

    let mut versions = Map::new();
    let mut time = Map::new();
    time.insert("created".into(), json!(stamp(p.created)));
    time.insert("modified".into(), json!(stamp(p.last_modified)));
    if !p.excluded || p.holding == Holding::No {
        let old = format!("0.{}.0", 1 + below(rng, 9));
        let mut old_obj = Map::new();
        old_obj.insert("name".into(), json!(p.name));
        old_obj.insert("version".into(), json!(old));
        if p.stale_install {
            old_obj.insert("scripts".into(), json!({"postinstall": "node legacy-setup.js"}));
        }
        versions.insert(old.clone(), Value::Object(old_obj));
        time.insert(old, json!(stamp(p.created)));
    }
    versions.insert(p.version.clone(), Value::Object(latest));
    time.insert(p.version.clone(), json!(stamp(p.last_modified)));

    let mut doc = Map::new();
    doc.insert("_id".into(), json!(p.name));
    doc.insert("name".into(), json!(p.name));
    doc.insert("description".into(), json!(description));
    doc.insert("dist-tags".into(), json!({"latest": p.version}));
    doc.insert("versions".into(), Value::Object(versions));
    doc.insert("time".into(), Value::Object(time));
    if idx % 10 != 7 {
        doc.insert("maintainers".into(), Value::Array(people));
    }
    if let Some(r) = repo {
        doc.insert("repository".into(), r);
    }
    if let Some(l) = license {
        doc.insert("license".into(), l);
    }
    serde_json::to_string(&Value::Object(doc)).expect("document serializes")
}

struct Model<'a> {
    plan: &'a GenerationPlan,
    pkgs: &'a [Pkg],
    persons: &'a [Person],
    f: usize,
    m_f: usize,
    dependents: &'a [Vec<usize>],
    n_pop: usize,
    window_days: i64,
}

impl Model<'_> {
    fn inactive(&self, t: DateTime<Utc>) -> bool {
        (self.plan.reference_time - t).num_seconds() > self.window_days * 86_400
    }

    fn names(&self, idx: impl IntoIterator<Item = usize>) -> BTreeSet<String> {
        idx.into_iter().map(|p| self.pkgs[p].name.clone()).collect()
    }

    fn manifest(
        &self,
        available: &BTreeSet<String>,
        available_after: &BTreeSet<String>,
        downloads_entries: usize,
        w2_n: usize,
        contributors_n: usize,
    ) -> CorpusManifest {
        let (pkgs, persons, f) = (self.pkgs, self.persons, self.f);
        let top = self.plan.top_percent;

        let mut exclusions = ManifestExclusions::default();
        for p in pkgs {
            let reasons = p.reasons();
            if reasons.is_empty() {
                continue;
            }
            let id = format!("{}@{}", p.name, p.version);
            if p.excluded {
                exclusions.excluded.insert(id, reasons);
            } else {
                exclusions.retained_with_reason.insert(id, reasons);
            }
        }

        let last_activity: Vec<DateTime<Utc>> = (0..self.m_f)
            .map(|i| persons[i].owned.iter().map(|&p| pkgs[p].last_modified).max().expect("owns a package"))
            .collect();
        let person_inactive: Vec<bool> = last_activity.iter().map(|&t| self.inactive(t)).collect();

        let mut signals: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut put = |sig: Signal, members: BTreeSet<String>| {
            signals.insert(sig.as_str().to_string(), members);
        };
        let w1: BTreeSet<W1Entry> = (0..self.m_f)
            .filter(|&i| persons[i].domain.as_ref().is_some_and(|d| available.contains(d)))
            .flat_map(|i| {
                persons[i].owned.iter().map(move |&p| W1Entry {
                    package: pkgs[p].name.clone(),
                    maintainer_key: persons[i].key(),
                    domain: persons[i].domain.clone().expect("has domain"),
                })
            })
            .collect();
        let w1_after: BTreeSet<W1Entry> = (0..self.m_f)
            .filter(|&i| persons[i].domain.as_ref().is_some_and(|d| available_after.contains(d)))
            .flat_map(|i| {
                persons[i].owned.iter().map(move |&p| W1Entry {
                    package: pkgs[p].name.clone(),
                    maintainer_key: persons[i].key(),
                    domain: persons[i].domain.clone().expect("has domain"),
                })
            })
            .collect();
        put(Signal::W1, w1.iter().map(|e| e.package.clone()).collect());
        put(Signal::W2, self.names((0..f).filter(|&p| pkgs[p].install.is_some())));
        let inactive_pkgs: Vec<usize> = (0..f).filter(|&p| self.inactive(pkgs[p].last_modified)).collect();
        put(Signal::W3InactivePkg, self.names(inactive_pkgs.iter().copied()));
        put(
            Signal::W3InactiveMaintainer,
            self.names((0..f).filter(|&p| pkgs[p].maintainers.iter().all(|&m| person_inactive[m]))),
        );
        put(Signal::W3Deprecated, self.names(inactive_pkgs.iter().copied().filter(|&p| pkgs[p].deprecated)));

        let by_maintainers: Vec<(usize, usize)> = (0..f).map(|p| (p, pkgs[p].maintainers.len())).collect();
        put(Signal::W4, self.names(closed_top(&by_maintainers, top.cutoff(f))));
        let by_ratio: Vec<(usize, LowRatio)> = (0..f)
            .filter(|&p| pkgs[p].contributors > 0)
            .map(|p| (p, LowRatio(pkgs[p].maintainers.len() as u64, pkgs[p].contributors as u64)))
            .collect();
        put(Signal::W5, self.names(closed_top(&by_ratio, top.cutoff(by_ratio.len()))));

        let reach: Vec<(usize, usize)> = (0..self.m_f)
            .map(|i| {
                let mut u: HashSet<usize> = HashSet::new();
                for &p in &persons[i].owned {
                    u.extend(self.dependents[p].iter().copied());
                }
                (i, u.len())
            })
            .collect();
        let all_zero = reach.iter().all(|r| r.1 == 0);
        let w6_people: BTreeSet<usize> = closed_top(&reach, top.cutoff(self.m_f))
            .into_iter()
            .filter(|&i| all_zero || reach[i].1 > 0)
            .collect();
        put(Signal::W6, self.names(w6_people.iter().flat_map(|&i| persons[i].owned.iter().copied())));

        let by_deps: Vec<(usize, usize)> = (0..f).map(|p| (p, self.dependents[p].len())).collect();
        let by_dl: Vec<(usize, u64)> = (0..f).filter_map(|p| pkgs[p].downloads.map(|d| (p, d))).collect();
        let pop_deps = closed_top(&by_deps, self.n_pop);
        let pop_dl = closed_top(&by_dl, self.n_pop);
        let pop: BTreeSet<usize> = pop_deps.union(&pop_dl).copied().collect();
        let popular = ManifestPopular {
            n: self.n_pop,
            by_dependents: self.names(pop_deps.iter().copied()),
            by_downloads: self.names(pop_dl.iter().copied()),
            members: self.names(pop.iter().copied()),
        };

        let label_sets: Vec<(&str, &BTreeSet<String>)> = COMBINABLE
            .iter()
            .map(|&l| {
                let key = if l == "W3" { Signal::W3InactivePkg.as_str() } else { l };
                (l, &signals[key])
            })
            .collect();
        let mut intersections = BTreeMap::new();
        let mut pipelines = BTreeMap::new();
        for (scope_name, scope) in [("registry", None), ("popular", Some(&popular.members))] {
            let in_scope = |name: &String| scope.is_none_or(|s: &BTreeSet<String>| s.contains(name));
            let mut counts = BTreeMap::new();
            for i in 0..label_sets.len() {
                for j in i + 1..label_sets.len() {
                    for group in std::iter::once(vec![i, j]).chain((j + 1..label_sets.len()).map(|k| vec![i, j, k])) {
                        let labels: Vec<&str> = group.iter().map(|&g| label_sets[g].0).collect();
                        let c = (0..f)
                            .map(|p| &pkgs[p].name)
                            .filter(|name| in_scope(name) && group.iter().all(|&g| label_sets[g].1.contains(*name)))
                            .count();
                        counts.insert(combination_id(&labels), c);
                    }
                }
            }
            intersections.insert(scope_name.to_string(), counts);

            let inactive_names = &signals[Signal::W3InactivePkg.as_str()];
            let mut pipe = ManifestPipeline::default();
            for e in &w1 {
                if inactive_names.contains(&e.package) && in_scope(&e.package) {
                    pipe.hijackable.insert(e.package.clone());
                }
            }
            for &i in w6_people.iter().filter(|&&i| person_inactive[i]) {
                for &p in &persons[i].owned {
                    if in_scope(&pkgs[p].name) {
                        pipe.takeover_packages.insert(pkgs[p].name.clone());
                        pipe.takeover_maintainers.insert(persons[i].key());
                    }
                }
            }
            pipelines.insert(scope_name.to_string(), pipe);
        }

        let keyword_hunt =
            (0..f).filter_map(|p| pkgs[p].keyword.map(|c| (pkgs[p].name.clone(), c))).collect::<BTreeMap<_, _>>();
        let slots: usize = (0..f).map(|p| pkgs[p].maintainers.len()).sum();
        let r = &self.plan.rates;
        let rate = |target: f64, count: usize| PlannedRate { target, count, population: f };
        let mut rates = BTreeMap::new();
        rates.insert("install_script".to_string(), rate(r.install_script, w2_n));
        rates.insert("inactive".to_string(), rate(r.inactive, inactive_pkgs.len()));
        rates.insert("contributor_listing".to_string(), rate(r.contributor_listing, contributors_n));
        rates.insert(
            "inactive_maintainer".to_string(),
            rate(r.inactive_maintainer, signals[Signal::W3InactiveMaintainer.as_str()].len()),
        );

        CorpusManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            plan: self.plan.clone(),
            reference_time: self.plan.reference_time,
            counts: ManifestCounts {
                raw: pkgs.len(),
                excluded: exclusions.excluded.len(),
                filtered: f,
                maintainers: self.m_f,
                inactive_maintainers: person_inactive.iter().filter(|&&b| b).count(),
                maintainer_slots: slots,
                contributor_packages: contributors_n,
                install_script_packages: w2_n,
                inactive_packages: inactive_pkgs.len(),
            },
            rates,
            mean_maintainers: PlannedRate { target: self.plan.mean_maintainers, count: slots, population: f },
            exclusions,
            w6_maintainers: w6_people.iter().map(|&i| persons[i].key()).collect(),
            diff: ManifestDiff {
                added: w1_after.difference(&w1).cloned().collect(),
                removed: w1.difference(&w1_after).cloned().collect(),
            },
            w1,
            signals,
            popular,
            intersections,
            pipelines,
            keyword_hunt,
            available_domains: available.clone(),
            downloads_entries,
            files: ManifestFiles::default(),
        }
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes the snapshot in `layout`, the three fixtures and `manifest.json`
/// into `out`, recording relative file names in the manifest.
pub fn write_generated(generated: &mut Generated, out: &Path, layout: SnapshotLayout) -> io::Result<()> {
    fs::create_dir_all(out)?;
    let snapshot = match layout {
        SnapshotLayout::Ndjson => {
            let mut w = BufWriter::new(fs::File::create(out.join("snapshot.ndjson"))?);
            for (_, doc) in &generated.documents {
                w.write_all(doc.as_bytes())?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            "snapshot.ndjson"
        }
        SnapshotLayout::Bulk => {
            let mut w = BufWriter::new(fs::File::create(out.join("snapshot.json"))?);
            write!(w, "{{\"total_rows\":{},\"offset\":0,\"rows\":[", generated.documents.len())?;
            for (i, (name, doc)) in generated.documents.iter().enumerate() {
                if i > 0 {
                    w.write_all(b",")?;
                }
                let id = serde_json::to_string(name)?;
                write!(w, "\n{{\"id\":{id},\"key\":{id},\"value\":{{\"rev\":\"1-{:08x}\"}},\"doc\":{doc}}}", i)?;
            }
            w.write_all(b"\n]}\n")?;
            w.flush()?;
            "snapshot.json"
        }
        SnapshotLayout::Dir => {
            let root = out.join("snapshot");
            if root.exists() {
                fs::remove_dir_all(&root)?;
            }
            for (name, doc) in &generated.documents {
                let path = root.join(format!("{name}.json"));
                fs::create_dir_all(path.parent().expect("inside root"))?;
                fs::write(path, format!("{doc}\n"))?;
            }
            "snapshot"
        }
    };
    write_jsonl(&out.join("domains.jsonl"), &generated.domains)?;
    write_jsonl(&out.join("domains.after.jsonl"), &generated.domains_after)?;
    write_jsonl(&out.join("downloads.jsonl"), &generated.downloads)?;
    generated.manifest.files = ManifestFiles {
        snapshot: snapshot.to_string(),
        layout: Some(layout),
        domains_fixture: "domains.jsonl".into(),
        domains_after_fixture: "domains.after.jsonl".into(),
        downloads_fixture: "downloads.jsonl".into(),
    };
    let mut text = serde_json::to_string_pretty(&generated.manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)
}
