//! Registry document parsing and normalization into [`PackageRecord`]s.
//!
//! A registry document holds every published version of a package. Only the
//! latest version is kept: `dist-tags.latest` when present, otherwise the
//! highest version key.

mod layout;
mod person;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use layout::{detect_layout, load_corpus, Corpus, IngestError, IngestStats, SnapshotLayout};
pub use person::{extract_email_domain, parse_people, PersonRef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("document has no name")]
    NoName,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("document has no versions")]
    NoVersions,
    #[error("document has no usable timestamps")]
    NoTimestamps,
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Malformed(_) => "malformed",
            ParseError::NoName => "no_name",
        }
    }
}

impl SelectError {
    pub fn kind(&self) -> &'static str {
        match self {
            SelectError::NoVersions => "no_versions",
            SelectError::NoTimestamps => "no_timestamps",
        }
    }
}

/// `deprecated` is either a boolean flag or a message string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Deprecation {
    Flag(bool),
    Message(String),
}

/// One version object, with heterogeneous fields already normalized.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VersionObject {
    pub description: Option<String>,
    pub scripts: BTreeMap<String, String>,
    pub dependencies: BTreeMap<String, String>,
    pub dev_dependencies: BTreeMap<String, String>,
    pub peer_dependencies: BTreeMap<String, String>,
    pub optional_dependencies: BTreeMap<String, String>,
    pub maintainers: Vec<PersonRef>,
    pub contributors: Vec<PersonRef>,
    pub repository: Option<String>,
    pub license: Option<String>,
    pub deprecated: Option<Deprecation>,
    pub unpacked_size: Option<u64>,
    pub file_count: Option<u64>,
}

/// The parsed form of one package's registry document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistryDocument {
    pub name: String,
    pub dist_tags: BTreeMap<String, String>,
    pub versions: BTreeMap<String, VersionObject>,
    /// Raw `time` map; unparseable timestamps are dropped.
    pub time: BTreeMap<String, DateTime<Utc>>,
    pub description: Option<String>,
    pub maintainers: Vec<PersonRef>,
    pub contributors: Vec<PersonRef>,
    pub repository: Option<String>,
    pub license: Option<String>,
}

/// Normalized latest-version metadata of one package.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageRecord {
    pub package_id: String,
    pub name: String,
    pub version: String,
    pub last_modified: DateTime<Utc>,
    pub created: DateTime<Utc>,
    pub description: Option<String>,
    pub scripts: BTreeMap<String, String>,
    pub maintainers: Vec<PersonRef>,
    pub contributors: Vec<PersonRef>,
    pub dependencies: BTreeMap<String, String>,
    pub dev_dependencies: BTreeMap<String, String>,
    pub peer_dependencies: BTreeMap<String, String>,
    pub optional_dependencies: BTreeMap<String, String>,
    pub repository_present: bool,
    pub license_value: Option<String>,
    pub deprecated: Option<Deprecation>,
    /// `dist-tags` has the registry placeholder shape (`latest` on a
    /// `-security` pre-release).
    pub placeholder_dist_tags: bool,
    pub security_holding: bool,
    pub unpacked_size_bytes: Option<u64>,
    pub file_count: Option<u64>,
}

#[derive(Deserialize)]
struct RawDoc {
    name: Option<Value>,
    #[serde(rename = "dist-tags")]
    dist_tags: Option<Value>,
    versions: Option<Value>,
    time: Option<Value>,
    description: Option<Value>,
    maintainers: Option<Value>,
    contributors: Option<Value>,
    repository: Option<Value>,
    license: Option<Value>,
    licenses: Option<Value>,
}

pub fn parse_document(bytes: &[u8]) -> Result<RegistryDocument, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError::Malformed(e.to_string()))?;
    parse_document_str(text)
}

pub(crate) fn parse_document_str(text: &str) -> Result<RegistryDocument, ParseError> {
    if !text.trim_start().starts_with('{') {
        return Err(ParseError::Malformed("document is not a JSON object".into()));
    }
    let raw: RawDoc = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => return Err(ParseError::Malformed(e.to_string())),
    };
    let name = raw
        .name
        .as_ref()
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or(ParseError::NoName)?
        .to_string();

    let dist_tags = string_map(raw.dist_tags.as_ref());
    let versions: BTreeMap<String, VersionObject> = match raw.versions {
        Some(Value::Object(map)) => map
            .into_iter()
            .filter(|(k, _)| !k.trim().is_empty())
            .map(|(k, v)| (k, parse_version_object(&v)))
            .collect(),
        None | Some(Value::Null) => BTreeMap::new(),
        Some(_) => return Err(ParseError::Malformed("versions is not an object".into())),
    };
    if let Some(latest) = dist_tags.get("latest") {
        if !versions.contains_key(latest) {
            return Err(ParseError::Malformed(format!("dist-tags.latest {latest:?} is not a published version")));
        }
    }
    let time = raw
        .time
        .as_ref()
        .and_then(Value::as_object)
        .map(|m| {
            m.iter()
                .filter_map(|(k, v)| Some((k.clone(), parse_timestamp(v.as_str()?)?)))
                .collect()
        })
        .unwrap_or_default();

    let license = normalize_license(raw.license.as_ref()).or_else(|| normalize_license(raw.licenses.as_ref()));
    Ok(RegistryDocument {
        name,
        dist_tags,
        versions,
        time,
        description: non_empty_str(raw.description.as_ref()),
        maintainers: parse_people(raw.maintainers.as_ref()),
        contributors: parse_people(raw.contributors.as_ref()),
        repository: normalize_repository(raw.repository.as_ref()),
        license,
    })
}

fn parse_version_object(v: &Value) -> VersionObject {
    let Some(obj) = v.as_object() else {
        return VersionObject::default();
    };
    let dist = obj.get("dist").and_then(Value::as_object);
    VersionObject {
        description: non_empty_str(obj.get("description")),
        scripts: string_map(obj.get("scripts")),
        dependencies: string_map(obj.get("dependencies")),
        dev_dependencies: string_map(obj.get("devDependencies")),
        peer_dependencies: string_map(obj.get("peerDependencies")),
        optional_dependencies: string_map(obj.get("optionalDependencies")),
        maintainers: parse_people(obj.get("maintainers")),
        contributors: parse_people(obj.get("contributors")),
        repository: normalize_repository(obj.get("repository")),
        license: normalize_license(obj.get("license")).or_else(|| normalize_license(obj.get("licenses"))),
        deprecated: match obj.get("deprecated") {
            Some(Value::Bool(b)) => Some(Deprecation::Flag(*b)),
            Some(Value::String(s)) => Some(Deprecation::Message(s.clone())),
            _ => None,
        },
        unpacked_size: dist.and_then(|d| d.get("unpackedSize")).and_then(Value::as_u64),
        file_count: dist.and_then(|d| d.get("fileCount")).and_then(Value::as_u64),
    }
}

/// Keeps string-valued entries with non-empty keys; values are untouched.
fn string_map(v: Option<&Value>) -> BTreeMap<String, String> {
    v.and_then(Value::as_object)
        .map(|m: &Map<String, Value>| {
            m.iter()
                .filter(|(k, _)| !k.is_empty())
                .filter_map(|(k, v)| Some((k.clone(), v.as_str()?.to_string())))
                .collect()
        })
        .unwrap_or_default()
}

fn non_empty_str(v: Option<&Value>) -> Option<String> {
    v.and_then(Value::as_str).filter(|s| !s.trim().is_empty()).map(str::to_string)
}

/// String shorthand (`"github:u/r"`, `"u/r"`) or an object with a `url`.
fn normalize_repository(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.trim()).filter(|s| !s.is_empty()).map(str::to_string),
        Value::Object(map) => map
            .get("url")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string),
        _ => None,
    }
}

/// String, `{type}` object, or legacy array of either (first entry wins).
fn normalize_license(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Object(map) => map.get("type").and_then(Value::as_str).map(|s| s.trim().to_string()),
        Value::Array(items) => items.first().and_then(|first| normalize_license(Some(first))),
        _ => None,
    }
}

pub(crate) fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim()).ok().map(|t| t.with_timezone(&Utc))
}

fn parse_version_key(key: &str) -> Option<semver::Version> {
    let k = key.trim().trim_start_matches(['v', '=']);
    semver::Version::parse(k).ok()
}

/// Semver precedence; keys that do not parse sort below every valid
/// version and compare lexicographically among themselves.
pub fn compare_version_keys(a: &str, b: &str) -> Ordering {
    match (parse_version_key(a), parse_version_key(b)) {
        (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => a.cmp(b),
    }
}

fn is_placeholder_tag(dist_tags: &BTreeMap<String, String>) -> bool {
    dist_tags
        .get("latest")
        .and_then(|v| parse_version_key(v))
        .map(|v| v.pre.as_str().starts_with("security"))
        .unwrap_or(false)
}

pub fn select_latest(doc: &RegistryDocument) -> Result<PackageRecord, SelectError> {
    let version = match doc.dist_tags.get("latest").filter(|v| doc.versions.contains_key(*v)) {
        Some(v) => v.clone(),
        None => doc
            .versions
            .keys()
            .max_by(|a, b| compare_version_keys(a, b))
            .cloned()
            .ok_or(SelectError::NoVersions)?,
    };
    let vobj = &doc.versions[&version];

    let per_version = doc
        .time
        .iter()
        .filter(|(k, _)| doc.versions.contains_key(*k))
        .map(|(_, t)| *t);
    let last_modified = doc
        .time
        .get("modified")
        .copied()
        .or_else(|| per_version.clone().max())
        .ok_or(SelectError::NoTimestamps)?;
    let created = doc
        .time
        .get("created")
        .copied()
        .or_else(|| per_version.min())
        .unwrap_or(last_modified)
        .min(last_modified);

    let maintainers = if doc.maintainers.is_empty() { vobj.maintainers.clone() } else { doc.maintainers.clone() };
    let contributors = if vobj.contributors.is_empty() { doc.contributors.clone() } else { vobj.contributors.clone() };
    let repository = vobj.repository.as_ref().or(doc.repository.as_ref());
    let license_value = vobj.license.clone().or_else(|| doc.license.clone());
    let description = doc.description.clone().or_else(|| vobj.description.clone());

    let mut rec = PackageRecord {
        package_id: format!("{}@{}", doc.name, version),
        name: doc.name.clone(),
        version,
        last_modified,
        created,
        description,
        scripts: vobj.scripts.clone(),
        maintainers,
        contributors,
        dependencies: vobj.dependencies.clone(),
        dev_dependencies: vobj.dev_dependencies.clone(),
        peer_dependencies: vobj.peer_dependencies.clone(),
        optional_dependencies: vobj.optional_dependencies.clone(),
        repository_present: repository.is_some(),
        license_value,
        deprecated: vobj.deprecated.clone(),
        placeholder_dist_tags: is_placeholder_tag(&doc.dist_tags),
        security_holding: false,
        unpacked_size_bytes: vobj.unpacked_size,
        file_count: vobj.file_count,
    };
    rec.security_holding = crate::exclusion::is_security_holding(&rec);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(v: Value) -> RegistryDocument {
        parse_document(v.to_string().as_bytes()).unwrap()
    }

    const T0: &str = "2020-01-01T00:00:00.000Z";

    #[test]
    fn minimal_document() {
        let d = doc(json!({
            "name": "a", "dist-tags": {"latest": "1.0.0"}, "versions": {"1.0.0": {}},
            "time": {"created": T0, "modified": T0, "1.0.0": T0}
        }));
        assert_eq!(d.name, "a");
        let r = select_latest(&d).unwrap();
        assert_eq!(r.package_id, "a@1.0.0");
        assert_eq!(r.created, r.last_modified);
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(parse_document(b"not-a-doc"), Err(ParseError::Malformed(_))));
        assert!(matches!(parse_document(b"[1,2]"), Err(ParseError::Malformed(_))));
        assert!(matches!(parse_document(&[0xff, 0xfe]), Err(ParseError::Malformed(_))));
    }

    #[test]
    fn missing_or_blank_name() {
        assert_eq!(parse_document(br#"{"versions":{}}"#), Err(ParseError::NoName));
        assert_eq!(parse_document(br#"{"name":"   "}"#), Err(ParseError::NoName));
        assert_eq!(parse_document(br#"{"name":7}"#), Err(ParseError::NoName));
    }

    #[test]
    fn dangling_latest_tag_is_malformed() {
        let err = parse_document(br#"{"name":"a","dist-tags":{"latest":"9.9.9"},"versions":{"1.0.0":{}}}"#);
        assert!(matches!(err, Err(ParseError::Malformed(_))));
    }

    /// The three repository shapes, inspected by hand.
    #[test]
    fn repository_shapes() {
        let make = |repo: Option<Value>| {
            let mut v = json!({"name": "r", "versions": {"1.0.0": {}}, "time": {"modified": T0}});
            if let Some(repo) = repo {
                v["versions"]["1.0.0"]["repository"] = repo;
            }
            select_latest(&doc(v)).unwrap().repository_present
        };
        assert!(make(Some(json!("github:u/r"))));
        assert!(make(Some(json!({"type": "git", "url": "git+https://github.com/u/r.git"}))));
        assert!(!make(None));
        assert!(!make(Some(json!({"type": "git"}))));
        assert!(!make(Some(json!(""))));
    }

    #[test]
    fn explicit_latest_tag_wins() {
        let d = doc(json!({
            "name": "p", "dist-tags": {"latest": "2.0.0"},
            "versions": {"1.0.0": {}, "2.0.0": {}, "3.0.0-beta.1": {}},
            "time": {"modified": T0}
        }));
        assert_eq!(select_latest(&d).unwrap().version, "2.0.0");
    }

    /// Independent ordering oracle: numeric triple comparison with
    /// releases above their pre-releases.
    fn oracle_max(keys: &[&str]) -> String {
        fn key(v: &str) -> (u64, u64, u64, bool, String) {
            let (core, pre) = match v.split_once('-') {
                Some((c, p)) => (c, p.to_string()),
                None => (v, String::new()),
            };
            let parts: Vec<u64> = core.split('.').map(|p| p.parse().unwrap()).collect();
            (parts[0], parts[1], parts[2], pre.is_empty(), pre)
        }
        keys.iter().max_by_key(|k| key(k)).unwrap().to_string()
    }

    #[test]
    fn fallback_to_highest_semver() {
        let cases: [&[&str]; 4] = [
            &["1.0.0", "1.10.0", "1.2.0"],
            &["0.9.9", "0.10.0", "0.1.10"],
            &["2.0.0-rc.1", "1.9.9", "2.0.0-beta.3"],
            &["3.0.0-alpha", "3.0.0", "2.99.99"],
        ];
        for keys in cases {
            let versions: Map<String, Value> = keys.iter().map(|k| (k.to_string(), json!({}))).collect();
            let d = doc(json!({"name": "x", "versions": versions, "time": {"modified": T0}}));
            assert_eq!(select_latest(&d).unwrap().version, oracle_max(keys), "{keys:?}");
        }
    }

    #[test]
    fn empty_versions() {
        let d = doc(json!({"name": "x", "versions": {}, "time": {"modified": T0}}));
        assert_eq!(select_latest(&d), Err(SelectError::NoVersions));
    }

    #[test]
    fn modified_falls_back_to_version_times() {
        let d = doc(json!({
            "name": "x", "versions": {"1.0.0": {}, "1.1.0": {}},
            "time": {"1.0.0": "2019-01-01T00:00:00Z", "1.1.0": "2019-06-01T00:00:00Z", "unrelated": "2025-01-01T00:00:00Z"}
        }));
        let r = select_latest(&d).unwrap();
        assert_eq!(r.last_modified, parse_timestamp("2019-06-01T00:00:00Z").unwrap());
        assert_eq!(r.created, parse_timestamp("2019-01-01T00:00:00Z").unwrap());
        let none = doc(json!({"name": "x", "versions": {"1.0.0": {}}}));
        assert_eq!(select_latest(&none), Err(SelectError::NoTimestamps));
    }

    #[test]
    fn created_never_exceeds_modified() {
        let d = doc(json!({
            "name": "x", "versions": {"1.0.0": {}},
            "time": {"created": "2021-01-01T00:00:00Z", "modified": "2020-01-01T00:00:00Z"}
        }));
        let r = select_latest(&d).unwrap();
        assert!(r.created <= r.last_modified);
    }

    #[test]
    fn scoped_names_keep_their_at() {
        let d = doc(json!({"name": "@scope/pkg", "versions": {"1.2.3": {}}, "time": {"modified": T0}}));
        let r = select_latest(&d).unwrap();
        assert_eq!(r.package_id, "@scope/pkg@1.2.3");
        let (name, version) = r.package_id.rsplit_once('@').unwrap();
        assert_eq!((name, version), ("@scope/pkg", "1.2.3"));
    }

    #[test]
    fn heterogeneous_fields_normalize() {
        let d = doc(json!({
            "name": "h",
            "versions": {"1.0.0": {
                "contributors": ["A <a@a.io>", {"name": "B", "email": "b@b.io"}],
                "licenses": [{"type": "MIT", "url": "x"}],
                "deprecated": "use other",
                "scripts": {"postinstall": "node  setup.js\n", "bad": 3, "": "x"},
                "dependencies": {"dep": "^1.0.0", "weird": {"version": "1"}},
            }},
            "time": {"modified": T0}
        }));
        let r = select_latest(&d).unwrap();
        assert_eq!(r.contributors.len(), 2);
        assert_eq!(r.license_value.as_deref(), Some("MIT"));
        assert_eq!(r.deprecated, Some(Deprecation::Message("use other".into())));
        assert_eq!(r.scripts.len(), 1);
        assert_eq!(r.scripts["postinstall"], "node  setup.js\n");
        assert_eq!(r.dependencies.keys().collect::<Vec<_>>(), ["dep"]);
    }

    /// Each field carries a unique sentinel so its source location is
    /// unambiguous.
    #[test]
    fn fields_trace_to_one_location() {
        let d = doc(json!({
            "name": "sentinel-name",
            "description": "S-doc-description",
            "dist-tags": {"latest": "7.7.7"},
            "maintainers": [{"name": "S-doc-maint", "email": "s-doc-maint@s1.io"}],
            "contributors": [{"name": "S-doc-contrib"}],
            "repository": "S-doc-repo",
            "license": "S-doc-license",
            "time": {"created": "2001-01-01T00:00:00Z", "modified": "2002-02-02T00:00:00Z", "7.7.7": "2002-01-01T00:00:00Z"},
            "versions": {
                "1.0.0": {"scripts": {"install": "S-old-install"}, "license": "S-old-license"},
                "7.7.7": {
                    "description": "S-ver-description",
                    "scripts": {"S-script-key": "S-script-body"},
                    "dependencies": {"S-dep": "S-range"},
                    "devDependencies": {"S-dev": "S-dev-range"},
                    "peerDependencies": {"S-peer": "S-peer-range"},
                    "optionalDependencies": {"S-opt": "S-opt-range"},
                    "maintainers": [{"name": "S-ver-maint"}],
                    "contributors": [{"name": "S-ver-contrib"}],
                    "repository": {"url": "S-ver-repo"},
                    "license": "S-ver-license",
                    "deprecated": "S-ver-deprecated",
                    "dist": {"unpackedSize": 4242, "fileCount": 17}
                }
            }
        }));
        let r = select_latest(&d).unwrap();
        assert_eq!(r.package_id, "sentinel-name@7.7.7");
        assert_eq!(r.description.as_deref(), Some("S-doc-description"));
        assert_eq!(r.scripts, BTreeMap::from([("S-script-key".into(), "S-script-body".into())]));
        assert_eq!(r.dependencies["S-dep"], "S-range");
        assert_eq!(r.dev_dependencies["S-dev"], "S-dev-range");
        assert_eq!(r.peer_dependencies["S-peer"], "S-peer-range");
        assert_eq!(r.optional_dependencies["S-opt"], "S-opt-range");
        assert_eq!(r.maintainers[0].name.as_deref(), Some("S-doc-maint"));
        assert_eq!(r.contributors[0].name.as_deref(), Some("S-ver-contrib"));
        assert!(r.repository_present);
        assert_eq!(r.license_value.as_deref(), Some("S-ver-license"));
        assert_eq!(r.deprecated, Some(Deprecation::Message("S-ver-deprecated".into())));
        assert_eq!(r.created, parse_timestamp("2001-01-01T00:00:00Z").unwrap());
        assert_eq!(r.last_modified, parse_timestamp("2002-02-02T00:00:00Z").unwrap());
        assert_eq!(r.unpacked_size_bytes, Some(4242));
        assert_eq!(r.file_count, Some(17));
    }

    #[test]
    fn security_placeholder_detected_at_ingest() {
        let d = doc(json!({
            "name": "evil", "dist-tags": {"latest": "0.0.1-security"},
            "description": "security holding package", "repository": "npm/security-holder",
            "versions": {"0.0.1-security": {}}, "time": {"modified": T0}
        }));
        let r = select_latest(&d).unwrap();
        assert!(r.placeholder_dist_tags);
        assert!(r.security_holding);
    }

    proptest::proptest! {
        #[test]
        fn select_latest_ignores_key_order(mut keys in proptest::collection::vec((0u8..4, 0u8..12, 0u8..12), 1..8)) {
            let render = |ks: &[(u8, u8, u8)]| {
                let body: Vec<String> = ks.iter().map(|(a, b, c)| format!("\"{a}.{b}.{c}\":{{}}")).collect();
                format!(r#"{{"name":"p","versions":{{{}}},"time":{{"modified":"{T0}"}}}}"#, body.join(","))
            };
            let first = select_latest(&parse_document(render(&keys).as_bytes()).unwrap()).unwrap();
            keys.reverse();
            let second = select_latest(&parse_document(render(&keys).as_bytes()).unwrap()).unwrap();
            proptest::prop_assert_eq!(first, second);
        }
    }
}
