use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use weaklink_core::config::{Percent, ScanConfig};
use weaklink_core::ingest::SnapshotLayout;
use weaklink_core::providers::{
    CachedDomains, DomainStatusProvider, DownloadProvider, FixtureDomains, FixtureDownloads, LiveDomains,
    LiveDownloads, NoDomains, NoDownloads,
};
use weaklink_core::reach::DepKind;
use weaklink_core::report::{diff_findings, emit, write_reports, FINDINGS_FILE};
use weaklink_core::scan::scan_path;
use weaklink_core::synth::{generate, write_generated, GenerationPlan};

const EXIT_FATAL: u8 = 1;
const EXIT_DEGRADED: u8 = 2;

#[derive(Parser)]
#[command(name = "weaklink", version, about = "Weak link signals over npm-style registry metadata")]
struct Cli {
    /// Worker threads (default: logical CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a snapshot and write reports.
    Scan(ScanArgs),
    /// Generate a synthetic snapshot with a ground-truth manifest.
    Gen(GenArgs),
    /// Compare two findings files.
    Diff(DiffArgs),
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    input: PathBuf,
    /// Snapshot layout; detected when absent.
    #[arg(long)]
    format: Option<SnapshotLayout>,
    /// JSON file with analyzer and scan settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    domains_fixture: Option<PathBuf>,
    #[arg(long)]
    downloads_fixture: Option<PathBuf>,
    /// Query DNS and the downloads endpoint for anything without a fixture.
    #[arg(long)]
    live: bool,
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long)]
    downloads_endpoint: Option<String>,
    /// Resolver for live domain checks, as ip:port.
    #[arg(long)]
    dns_server: Option<SocketAddr>,
    #[arg(long)]
    top_percent: Option<Percent>,
    #[arg(long)]
    inactivity_years: Option<u32>,
    /// RFC 3339 reference instant; the newest modification time when absent.
    #[arg(long)]
    reference_time: Option<chrono::DateTime<chrono::Utc>>,
    #[arg(long)]
    popular_n: Option<usize>,
    /// Comma-separated: runtime, dev, peer, optional.
    #[arg(long, value_delimiter = ',')]
    dep_kinds: Option<Vec<DepKind>>,
    /// Rank W4, W5 and W6 inside the popular sample.
    #[arg(long)]
    sample_relative: bool,
    #[arg(long)]
    suppress_degenerate_rankings: bool,
    /// Also write every attack candidate row.
    #[arg(long)]
    unsafe_full_output: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    packages: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "ndjson")]
    format: SnapshotLayout,
    /// JSON generation plan; --seed and --packages override it.
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct DiffArgs {
    /// Findings file or report directory of the earlier scan.
    before: PathBuf,
    after: PathBuf,
    /// Write the diff here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fatal(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("weaklink: {msg}");
    ExitCode::from(EXIT_FATAL)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("invalid {}: {e}", path.display()))
}

fn scan_config(a: &ScanArgs) -> Result<ScanConfig, String> {
    let mut cfg: ScanConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ScanConfig::default(),
    };
    if let Some(v) = a.top_percent {
        cfg.analyzer.top_percent = v;
    }
    if let Some(v) = a.inactivity_years {
        cfg.analyzer.inactivity_years = v;
    }
    if let Some(v) = a.reference_time {
        cfg.analyzer.reference_time = Some(v);
    }
    if let Some(v) = a.popular_n {
        cfg.popular_n = v;
    }
    if let Some(v) = &a.dep_kinds {
        cfg.dep_kinds = v.clone();
    }
    if let Some(v) = a.rate_limit {
        cfg.providers.rate_limit = v;
    }
    if let Some(v) = &a.downloads_endpoint {
        cfg.providers.downloads_endpoint = v.clone();
    }
    if let Some(v) = a.dns_server {
        cfg.providers.dns_server = Some(v.to_string());
    }
    cfg.sample_relative |= a.sample_relative;
    cfg.analyzer.suppress_degenerate_rankings |= a.suppress_degenerate_rankings;
    cfg.unsafe_full_output |= a.unsafe_full_output;
    cfg.validate().map_err(|e| format!("invalid configuration: {e}"))?;
    Ok(cfg)
}

/// Fixture first, live lookups behind it when asked for, else nothing.
struct Layered<F, L> {
    fixture: Option<F>,
    live: L,
}

impl<F: DomainStatusProvider, L: DomainStatusProvider> DomainStatusProvider for Layered<F, L> {
    fn check_domain(&self, domain: &str) -> weaklink_core::providers::DomainStatus {
        if let Some(f) = &self.fixture {
            let s = f.check_domain(domain);
            if s.status != weaklink_core::providers::DomainState::Unknown {
                return s;
            }
        }
        self.live.check_domain(domain)
    }
}

impl<F: DownloadProvider, L: DownloadProvider> DownloadProvider for Layered<F, L> {
    fn fetch_downloads(
        &self,
        package: &str,
        window: &weaklink_core::providers::DownloadWindow,
    ) -> Result<weaklink_core::providers::DownloadStats, weaklink_core::providers::ProviderError> {
        if let Some(f) = &self.fixture {
            if let Ok(s) = f.fetch_downloads(package, window) {
                return Ok(s);
            }
        }
        self.live.fetch_downloads(package, window)
    }
}

fn domain_provider(a: &ScanArgs, cfg: &ScanConfig) -> Result<Box<dyn DomainStatusProvider>, String> {
    let fixture = a.domains_fixture.as_deref().map(FixtureDomains::load).transpose().map_err(|e| e.to_string())?;
    if !a.live {
        return Ok(match fixture {
            Some(f) => Box::new(f),
            None => Box::new(NoDomains),
        });
    }
    let server = cfg
        .providers
        .dns_server
        .as_deref()
        .map(|s| s.parse::<SocketAddr>().map_err(|e| format!("invalid dns server {s:?}: {e}")))
        .transpose()?;
    let live = LiveDomains::new(server, Duration::from_secs(cfg.providers.timeout_secs.max(1)))
        .map_err(|e| format!("cannot set up DNS resolver: {e}"))?;
    Ok(Box::new(Layered { fixture, live: CachedDomains::new(live) }))
}

fn download_provider(a: &ScanArgs, cfg: &ScanConfig) -> Result<Box<dyn DownloadProvider>, String> {
    let fixture =
        a.downloads_fixture.as_deref().map(FixtureDownloads::load).transpose().map_err(|e| e.to_string())?;
    if !a.live {
        return Ok(match fixture {
            Some(f) => Box::new(f),
            None => Box::new(NoDownloads),
        });
    }
    let live = LiveDownloads::new(&cfg.providers).map_err(|e| format!("cannot set up downloads client: {e}"))?;
    Ok(Box::new(Layered { fixture, live }))
}

fn cmd_scan(a: ScanArgs) -> ExitCode {
    let cfg = match scan_config(&a) {
        Ok(c) => c,
        Err(e) => return fatal(e),
    };
    let (domains, downloads) = match (domain_provider(&a, &cfg), download_provider(&a, &cfg)) {
        (Ok(d), Ok(l)) => (d, l),
        (Err(e), _) | (_, Err(e)) => return fatal(e),
    };
    let scan = match scan_path(&a.input, a.format, &cfg, domains.as_ref(), downloads.as_ref()) {
        Ok(s) => s,
        Err(e) => return fatal(e),
    };
    if let Err(e) = write_reports(&scan, &a.out) {
        return fatal(e);
    }
    eprintln!(
        "weaklink: {} packages scanned ({} excluded), {} findings, reports in {}",
        scan.raw_count,
        scan.raw_count - scan.corpus.len(),
        scan.findings.len(),
        a.out.display()
    );
    if scan.degraded() {
        eprintln!(
            "weaklink: degraded: {} domain lookups failed, {} download requests failed",
            scan.w1.lookup_errors, scan.download_warnings
        );
        return ExitCode::from(EXIT_DEGRADED);
    }
    ExitCode::SUCCESS
}

fn cmd_gen(a: GenArgs) -> ExitCode {
    let mut plan: GenerationPlan = match &a.plan {
        Some(p) => match read_json(p) {
            Ok(plan) => plan,
            Err(e) => return fatal(e),
        },
        None => GenerationPlan::default(),
    };
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    if let Some(n) = a.packages {
        plan.package_count = n;
    }
    let mut generated = match generate(&plan) {
        Ok(g) => g,
        Err(e) => return fatal(e),
    };
    if let Err(e) = write_generated(&mut generated, &a.out, a.format) {
        return fatal(format!("cannot write {}: {e}", a.out.display()));
    }
    let c = &generated.manifest.counts;
    eprintln!(
        "weaklink: generated {} packages ({} to be excluded) with seed {} in {}",
        c.raw,
        c.excluded,
        plan.seed,
        a.out.display()
    );
    ExitCode::SUCCESS
}

fn findings_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(FINDINGS_FILE)
    } else {
        p.to_path_buf()
    }
}

fn cmd_diff(a: DiffArgs) -> ExitCode {
    let diff = match diff_findings(&findings_path(&a.before), &findings_path(&a.after)) {
        Ok(d) => d,
        Err(e) => return fatal(e),
    };
    match emit(a.out.as_deref(), &diff.render()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fatal(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_FATAL);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("WEAKLINK_LOG"))
        .with_writer(std::io::stderr)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            return fatal(format!("cannot size worker pool: {e}"));
        }
    }
    match cli.command {
        Command::Scan(a) => cmd_scan(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Diff(a) => cmd_diff(a),
    }
}
