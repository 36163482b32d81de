use std::net::SocketAddr;
use std::time::Duration;

use chrono::Utc;
use hickory_resolver::config::{NameServerConfigGroup, ResolverConfig, ResolverOpts};
use hickory_resolver::error::ResolveErrorKind;
use hickory_resolver::proto::rr::RecordType;
use hickory_resolver::Resolver;

use super::{DomainState, DomainStatus, DomainStatusProvider, Source};

pub const DNS_METHOD: &str = "dns-ns-mx";

/// DNS evidence check. A domain with neither NS nor MX records is reported
/// as a candidate `Available`; any record means `Registered`. The candidate
/// status is advisory and says nothing about registrar availability.
pub struct LiveDomains {
    resolver: Resolver,
}

enum Probe {
    Records,
    Empty,
}

impl LiveDomains {
    /// Uses the system resolver configuration, or `server` (`ip:port`) when given.
    pub fn new(server: Option<SocketAddr>, timeout: Duration) -> std::io::Result<Self> {
        let mut opts = ResolverOpts::default();
        opts.timeout = timeout;
        opts.attempts = 1;
        let resolver = match server {
            Some(addr) => {
                let group = NameServerConfigGroup::from_ips_clear(&[addr.ip()], addr.port(), true);
                Resolver::new(ResolverConfig::from_parts(None, vec![], group), opts)?
            }
            None => {
                let (config, mut sys_opts) = hickory_resolver::system_conf::read_system_conf()?;
                sys_opts.timeout = timeout;
                sys_opts.attempts = 1;
                Resolver::new(config, sys_opts)?
            }
        };
        Ok(LiveDomains { resolver })
    }

    fn probe(&self, domain: &str, rtype: RecordType) -> Result<Probe, String> {
        // trailing dot keeps search domains out of the query
        let fqdn = format!("{}.", domain.trim_end_matches('.'));
        match self.resolver.lookup(fqdn.as_str(), rtype) {
            Ok(l) if l.record_iter().any(|r| r.record_type() == rtype) => Ok(Probe::Records),
            Ok(_) => Ok(Probe::Empty),
            Err(e) => match e.kind() {
                ResolveErrorKind::NoRecordsFound { .. } => Ok(Probe::Empty),
                _ => Err(e.to_string()),
            },
        }
    }
}

impl DomainStatusProvider for LiveDomains {
    fn check_domain(&self, domain: &str) -> DomainStatus {
        let domain = domain.trim().to_ascii_lowercase();
        let verdict = self
            .probe(&domain, RecordType::NS)
            .and_then(|ns| Ok((ns, self.probe(&domain, RecordType::MX)?)));
        let (status, error) = match verdict {
            Ok((Probe::Empty, Probe::Empty)) => (DomainState::Available, None),
            Ok(_) => (DomainState::Registered, None),
            Err(e) => (DomainState::Unknown, Some(e)),
        };
        DomainStatus {
            domain,
            status,
            checked_at: Utc::now(),
            source: Source::Live,
            method: DNS_METHOD.to_string(),
            error,
        }
    }
}
