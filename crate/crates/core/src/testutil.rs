use chrono::{DateTime, Utc};

use crate::ingest::{PackageRecord, PersonRef};

pub fn at(s: &str) -> DateTime<Utc> {
    s.parse().expect("test timestamp")
}

/// A record that trips no signal and no exclusion rule.
pub fn record(name: &str) -> PackageRecord {
    PackageRecord {
        package_id: format!("{name}@1.0.0"),
        name: name.to_string(),
        version: "1.0.0".to_string(),
        last_modified: at("2021-06-01T00:00:00Z"),
        created: at("2020-01-01T00:00:00Z"),
        description: Some("test package".to_string()),
        scripts: Default::default(),
        maintainers: vec![PersonRef::new(Some("owner"), Some("owner@example.com")).expect("person")],
        contributors: Vec::new(),
        dependencies: Default::default(),
        dev_dependencies: Default::default(),
        peer_dependencies: Default::default(),
        optional_dependencies: Default::default(),
        repository_present: true,
        license_value: Some("MIT".to_string()),
        deprecated: None,
        placeholder_dist_tags: false,
        security_holding: false,
        unpacked_size_bytes: None,
        file_count: None,
    }
}

pub fn with_maintainers(mut rec: PackageRecord, emails: &[&str]) -> PackageRecord {
    rec.maintainers = emails.iter().map(|e| PersonRef::new(None, Some(e)).expect("person")).collect();
    rec
}
