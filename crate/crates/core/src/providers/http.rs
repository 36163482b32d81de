use std::time::Duration;

use serde::Deserialize;

use super::{DownloadProvider, DownloadStats, DownloadWindow, ProviderError, RateLimiter, Source};
use crate::config::ProviderConfig;

/// Point-download counts over HTTP: `GET {endpoint}/downloads/point/{period}/{package}`.
pub struct LiveDownloads {
    client: reqwest::blocking::Client,
    endpoint: String,
    limiter: RateLimiter,
    retries: u32,
}

#[derive(Deserialize)]
struct PointBody {
    downloads: u64,
}

impl LiveDownloads {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(cfg.user_agent.clone())
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(LiveDownloads {
            client,
            endpoint: cfg.downloads_endpoint.trim_end_matches('/').to_string(),
            limiter: RateLimiter::new(cfg.rate_limit, cfg.max_in_flight),
            retries: cfg.retries,
        })
    }

    fn url(&self, package: &str, window: &DownloadWindow) -> String {
        // scoped names keep their '@' but the slash must be escaped
        let encoded = package.replace('/', "%2F");
        format!("{}/downloads/point/{}/{}", self.endpoint, window.period, encoded)
    }

    fn attempt(&self, url: &str, package: &str) -> Result<u64, ProviderError> {
        let _permit = self.limiter.acquire();
        let resp = self.client.get(url).send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 404 {
            return Err(ProviderError::NotFound(package.to_string()));
        }
        if !status.is_success() {
            return Err(ProviderError::Http(status.as_u16()));
        }
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        serde_json::from_str::<PointBody>(&text)
            .map(|b| b.downloads)
            .map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

impl DownloadProvider for LiveDownloads {
    fn fetch_downloads(&self, package: &str, window: &DownloadWindow) -> Result<DownloadStats, ProviderError> {
        if package.trim().is_empty() {
            return Err(ProviderError::NotFound(String::new()));
        }
        let url = self.url(package, window);
        let attempts = self.retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            match self.attempt(&url, package) {
                Ok(count) => {
                    return Ok(DownloadStats {
                        package: package.to_string(),
                        window: window.clone(),
                        count,
                        source: Source::Live,
                    })
                }
                Err(e @ ProviderError::NotFound(_)) => return Err(e),
                Err(e) => {
                    tracing::debug!(package, error = %e, "download fetch failed");
                    last = Some(e);
                }
            }
        }
        Err(ProviderError::RetriesExhausted {
            attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }
}
