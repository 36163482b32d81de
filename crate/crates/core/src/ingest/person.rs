use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A maintainer or contributor as listed in registry metadata.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PersonRef {
    pub name: Option<String>,
    pub email: Option<String>,
    pub email_domain: Option<String>,
    /// Lowercase email when present, otherwise `name:` + lowercase name.
    pub identity_key: String,
}

impl PersonRef {
    /// Builds a person from optional name and email. Returns `None` when
    /// neither carries any text, since such an entry has no identity.
    pub fn new(name: Option<&str>, email: Option<&str>) -> Option<Self> {
        let name = name.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
        let email = email.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
        let identity_key = match (&email, &name) {
            (Some(e), _) => e.to_lowercase(),
            (None, Some(n)) => format!("name:{}", n.to_lowercase()),
            (None, None) => return None,
        };
        let email_domain = email.as_deref().and_then(extract_email_domain);
        Some(PersonRef { name, email, email_domain, identity_key })
    }

    /// Accepts either an object `{name, email}` or the npm shorthand string
    /// `"Name <email> (url)"`.
    pub fn from_value(v: &Value) -> Option<Self> {
        match v {
            Value::Object(map) => {
                let name = map.get("name").and_then(Value::as_str);
                let email = map
                    .get("email")
                    .or_else(|| map.get("mail"))
                    .and_then(Value::as_str);
                Self::new(name, email)
            }
            Value::String(s) => {
                let (name, email) = split_person_string(s);
                Self::new(name, email)
            }
            _ => None,
        }
    }
}

fn split_person_string(s: &str) -> (Option<&str>, Option<&str>) {
    let mut rest = s;
    // strip trailing "(url)"
    if let Some(open) = rest.find('(') {
        rest = &rest[..open];
    }
    match (rest.find('<'), rest.find('>')) {
        (Some(l), Some(r)) if l < r => {
            let name = rest[..l].trim();
            let email = rest[l + 1..r].trim();
            (Some(name), Some(email))
        }
        _ => {
            let t = rest.trim();
            if t.contains('@') && !t.contains(' ') {
                (None, Some(t))
            } else {
                (Some(t), None)
            }
        }
    }
}

/// Domain part of an email: the text after the last `@`, trimmed and
/// lowercased. Absent when there is no `@`, the local part or the domain is
/// empty, or the domain contains whitespace.
pub fn extract_email_domain(email: &str) -> Option<String> {
    let email = email.trim();
    let at = email.rfind('@')?;
    let local = email[..at].trim();
    let domain = email[at + 1..].trim();
    if local.is_empty() || domain.is_empty() || domain.chars().any(char::is_whitespace) {
        return None;
    }
    Some(domain.to_lowercase())
}

/// Parses a person list field. Accepts an array of entries or a single entry;
/// anything else yields an empty list. Entries are deduplicated by
/// identity key, keeping the first occurrence.
pub fn parse_people(v: Option<&Value>) -> Vec<PersonRef> {
    let mut out: Vec<PersonRef> = Vec::new();
    let push = |p: PersonRef, out: &mut Vec<PersonRef>| {
        if !out.iter().any(|q| q.identity_key == p.identity_key) {
            out.push(p);
        }
    };
    match v {
        Some(Value::Array(items)) => {
            for item in items {
                if let Some(p) = PersonRef::from_value(item) {
                    push(p, &mut out);
                }
            }
        }
        Some(other) => {
            if let Some(p) = PersonRef::from_value(other) {
                push(p, &mut out);
            }
        }
        None => {}
    }
    out
}
