use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use super::{parse_document_str, select_latest, PackageRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read snapshot {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("unknown snapshot layout {0:?} (expected bulk, ndjson or dir)")]
    UnknownLayout(String),
    #[error("bulk export {path} is not valid JSON: {message}")]
    BulkEnvelope { path: PathBuf, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotLayout {
    /// `{"rows":[{"doc":{...}}]}` or a plain JSON array of documents.
    Bulk,
    /// One document per line.
    Ndjson,
    /// A directory tree of `.json` files, one per package.
    Dir,
}

impl FromStr for SnapshotLayout {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bulk" => Ok(SnapshotLayout::Bulk),
            "ndjson" | "jsonl" => Ok(SnapshotLayout::Ndjson),
            "dir" => Ok(SnapshotLayout::Dir),
            _ => Err(IngestError::UnknownLayout(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub total: u64,
    pub parsed: u64,
    pub skipped: u64,
    pub by_error: BTreeMap<String, u64>,
}

impl IngestStats {
    fn skip(&mut self, kind: &str) {
        self.skipped += 1;
        *self.by_error.entry(kind.to_string()).or_default() += 1;
    }
}

/// An immutable, name-ordered set of package records.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    records: Vec<PackageRecord>,
    by_name: HashMap<String, usize>,
    pub stats: IngestStats,
    /// SHA-256 over the snapshot bytes (and relative paths for directories).
    pub input_digest: String,
}

impl Corpus {
    /// Builds a corpus from records, keeping the first record per name in
    /// name order.
    pub fn from_records(mut records: Vec<PackageRecord>, stats: IngestStats, input_digest: String) -> Self {
        records.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.version.cmp(&b.version)));
        records.dedup_by(|b, a| a.name == b.name);
        let by_name = records.iter().enumerate().map(|(i, r)| (r.name.clone(), i)).collect();
        Corpus { records, by_name, stats, input_digest }
    }

    pub fn records(&self) -> &[PackageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&PackageRecord> {
        self.by_name.get(name).map(|&i| &self.records[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PackageRecord> {
        self.records.iter()
    }

    /// A new corpus holding only the records accepted by `keep`.
    pub fn retain_by(&self, mut keep: impl FnMut(&PackageRecord) -> bool) -> Corpus {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Corpus::from_records(records, self.stats.clone(), self.input_digest.clone())
    }

    /// One canonical JSON line per record.
    pub fn canonical_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn detect_layout(path: &Path) -> Result<SnapshotLayout, IngestError> {
    let meta = fs::metadata(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    if meta.is_dir() {
        return Ok(SnapshotLayout::Dir);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("ndjson") | Some("jsonl") => return Ok(SnapshotLayout::Ndjson),
        _ => {}
    }
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    Ok(sniff_text(&text))
}

fn sniff_text(text: &str) -> SnapshotLayout {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return SnapshotLayout::Bulk;
    }
    let first_line = trimmed.lines().next().unwrap_or("");
    match serde_json::from_str::<serde_json::Value>(first_line) {
        Ok(v) if v.get("rows").is_none() => SnapshotLayout::Ndjson,
        _ => SnapshotLayout::Bulk,
    }
}

#[derive(Deserialize)]
struct BulkEnvelope<'a> {
    #[serde(borrow, default)]
    rows: Vec<BulkRow<'a>>,
}

#[derive(Deserialize)]
struct BulkRow<'a> {
    #[serde(borrow, default)]
    doc: Option<&'a RawValue>,
}

enum Outcome {
    Record(Box<PackageRecord>),
    Skipped(&'static str),
}

fn process(text: &str) -> Outcome {
    match parse_document_str(text) {
        Err(e) => Outcome::Skipped(e.kind()),
        Ok(doc) => match select_latest(&doc) {
            Ok(rec) => Outcome::Record(Box::new(rec)),
            Err(e) => Outcome::Skipped(e.kind()),
        },
    }
}

/// Reads every document of a snapshot. Documents that fail to parse are
/// counted in the stats and skipped; only an unreadable source fails.
pub fn load_corpus(path: &Path, layout: Option<SnapshotLayout>) -> Result<Corpus, IngestError> {
    let layout = match layout {
        Some(l) => l,
        None => detect_layout(path)?,
    };
    let io_err = |source| IngestError::Io { path: path.to_path_buf(), source };
    let mut hasher = Sha256::new();
    let mut stats = IngestStats::default();
    let outcomes: Vec<Outcome> = match layout {
        SnapshotLayout::Dir => {
            if !path.is_dir() {
                return Err(io_err(io::Error::new(io::ErrorKind::NotADirectory, "expected a directory")));
            }
            let mut files: Vec<PathBuf> = WalkDir::new(path)
                .into_iter()
                .filter_map(Result::ok)
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
                .collect();
            files.sort();
            let contents: Vec<(PathBuf, io::Result<Vec<u8>>)> =
                files.into_iter().map(|p| { let c = fs::read(&p); (p, c) }).collect();
            for (p, c) in &contents {
                let rel = p.strip_prefix(path).unwrap_or(p);
                hasher.update(rel.to_string_lossy().as_bytes());
                hasher.update([0]);
                if let Ok(bytes) = c {
                    hasher.update(bytes);
                }
                hasher.update([0]);
            }
            contents
                .par_iter()
                .map(|(_, c)| match c {
                    Err(_) => Outcome::Skipped("io"),
                    Ok(bytes) => match std::str::from_utf8(bytes) {
                        Ok(text) => process(text),
                        Err(_) => Outcome::Skipped("malformed"),
                    },
                })
                .collect()
        }
        SnapshotLayout::Ndjson => {
            let bytes = fs::read(path).map_err(io_err)?;
            hasher.update(&bytes);
            let text = String::from_utf8_lossy(&bytes);
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            lines.par_iter().map(|l| process(l)).collect()
        }
        SnapshotLayout::Bulk => {
            let bytes = fs::read(path).map_err(io_err)?;
            hasher.update(&bytes);
            let text = std::str::from_utf8(&bytes).map_err(|e| IngestError::BulkEnvelope {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let docs: Vec<Option<&RawValue>> = if text.trim_start().starts_with('[') {
                serde_json::from_str::<Vec<&RawValue>>(text)
                    .map(|v| v.into_iter().map(Some).collect())
            } else {
                serde_json::from_str::<BulkEnvelope>(text).map(|env| env.rows.into_iter().map(|r| r.doc).collect())
            }
            .map_err(|e| IngestError::BulkEnvelope { path: path.to_path_buf(), message: e.to_string() })?;
            docs.par_iter()
                .map(|d| match d {
                    Some(raw) => process(raw.get()),
                    None => Outcome::Skipped("no_doc"),
                })
                .collect()
        }
    };

    let mut records = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        stats.total += 1;
        match o {
            Outcome::Record(r) => records.push(*r),
            Outcome::Skipped(kind) => stats.skip(kind),
        }
    }
    let before = records.len();
    // same name twice: keep the most recently modified document
    records.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| b.last_modified.cmp(&a.last_modified)).then_with(|| a.version.cmp(&b.version)));
    records.dedup_by(|b, a| a.name == b.name);
    for _ in records.len()..before {
        stats.skip("duplicate_name");
    }
    stats.parsed = records.len() as u64;
    let digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let digest = format!("sha256:{digest}");
    Ok(Corpus::from_records(records, stats, digest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(name: &str) -> String {
        format!(
            r#"{{"name":"{name}","dist-tags":{{"latest":"1.0.0"}},"versions":{{"1.0.0":{{}}}},"time":{{"modified":"2020-01-01T00:00:00Z"}}}}"#
        )
    }

    #[test]
    fn directory_with_garbage_file() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a", "b", "c"] {
            fs::write(dir.path().join(format!("{n}.json")), doc(n)).unwrap();
        }
        fs::write(dir.path().join("junk.json"), "not-a-doc").unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let c = load_corpus(dir.path(), None).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.stats.skipped, 1);
        assert_eq!(c.stats.total, 4);
        assert_eq!(c.stats.by_error["malformed"], 1);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_corpus(dir.path(), None).unwrap();
        assert_eq!((c.len(), c.stats.skipped), (0, 0));
    }

    #[test]
    fn missing_source_is_io_error() {
        let err = load_corpus(Path::new("/definitely/not/here"), None).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }

    #[test]
    fn layouts_are_detected_and_equivalent() {
        let dir = tempfile::tempdir().unwrap();
        let docs = [doc("x"), doc("y"), "{\"name\":\"\"}".to_string()];
        let bulk = format!(
            "{{\"total_rows\":3,\"rows\":[{}]}}",
            docs.iter().map(|d| format!("{{\"id\":\"i\",\"doc\":{d}}}")).collect::<Vec<_>>().join(",")
        );
        let bulk_path = dir.path().join("bulk.json");
        fs::write(&bulk_path, &bulk).unwrap();
        let nd_path = dir.path().join("snap.txt");
        fs::write(&nd_path, docs.join("\n") + "\n").unwrap();
        let arr_path = dir.path().join("arr.json");
        fs::write(&arr_path, format!("[{}]", docs.join(","))).unwrap();

        assert_eq!(detect_layout(&bulk_path).unwrap(), SnapshotLayout::Bulk);
        assert_eq!(detect_layout(&nd_path).unwrap(), SnapshotLayout::Ndjson);
        assert_eq!(detect_layout(&arr_path).unwrap(), SnapshotLayout::Bulk);
        let a = load_corpus(&bulk_path, None).unwrap();
        let b = load_corpus(&nd_path, None).unwrap();
        let c = load_corpus(&arr_path, None).unwrap();
        assert_eq!(a.canonical_lines(), b.canonical_lines());
        assert_eq!(a.canonical_lines(), c.canonical_lines());
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.stats.by_error["no_name"], 1);
    }

    #[test]
    fn duplicate_names_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.ndjson");
        fs::write(&p, format!("{}\n{}\n", doc("same"), doc("same"))).unwrap();
        let c = load_corpus(&p, None).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.stats.by_error["duplicate_name"], 1);
    }

    #[test]
    fn reload_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.ndjson");
        let body: String = (0..50).map(|i| doc(&format!("pkg-{i}")) + "\n").collect();
        fs::write(&p, body).unwrap();
        let a = load_corpus(&p, Some(SnapshotLayout::Ndjson)).unwrap();
        let b = load_corpus(&p, Some(SnapshotLayout::Ndjson)).unwrap();
        assert_eq!(a.canonical_lines(), b.canonical_lines());
        assert_eq!(a.input_digest, b.input_digest);
        let names: Vec<_> = a.iter().map(|r| r.name.clone()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }
}
