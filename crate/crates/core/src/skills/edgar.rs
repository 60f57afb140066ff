//! Minimal SEC EDGAR client: ticker → CIK → latest filing of a form type.
//!
//! All traffic goes through [`HttpTransport`], so tests can count requests
//! and serve canned bodies.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("HTTP {status} from {url}")]
    Status { url: String, status: u16 },
    #[error("request to {url} failed: {message}")]
    Network { url: String, message: String },
}

pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<String, TransportError>;
}

#[derive(Debug, Error)]
pub enum EdgarError {
    #[error("EDGAR has no company with ticker {0}")]
    UnknownTicker(String),
    #[error("no {form} filing found for {ticker}")]
    NoFiling { ticker: String, form: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("unexpected EDGAR response: {0}")]
    Parse(String),
}

impl EdgarError {
    /// Error tag used by the runner contract.
    pub fn kind(&self) -> &'static str {
        match self {
            EdgarError::UnknownTicker(_) => "unknown-ticker",
            EdgarError::NoFiling { .. } => "empty-fixture",
            EdgarError::Transport(_) | EdgarError::Parse(_) => "network-failure",
        }
    }
}

/// Blocking transport that sends a descriptive User-Agent and spaces requests
/// at least `min_interval` apart (200 ms, i.e. 5 requests per second, by default).
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl ReqwestTransport {
    /// `user_agent` should name the operator and a contact address.
    pub fn new(user_agent: &str) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(user_agent)
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| TransportError::Network {
                url: String::new(),
                message: e.to_string(),
            })?;
        Ok(Self {
            client,
            min_interval: Duration::from_millis(200),
            last: Mutex::new(None),
        })
    }

    pub fn with_max_rate(mut self, requests_per_second: f64) -> Self {
        self.min_interval = Duration::from_secs_f64(1.0 / requests_per_second.max(0.01));
        self
    }
}

impl HttpTransport for ReqwestTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        {
            let mut last = self.last.lock().expect("edgar pacing poisoned");
            if let Some(prev) = *last {
                let since = prev.elapsed();
                if since < self.min_interval {
                    std::thread::sleep(self.min_interval - since);
                }
            }
            *last = Some(Instant::now());
        }
        let network = |e: reqwest::Error| TransportError::Network {
            url: url.to_string(),
            message: e.to_string(),
        };
        let resp = self.client.get(url).send().map_err(network)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Status {
                url: url.to_string(),
                status: status.as_u16(),
            });
        }
        resp.text().map_err(network)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveFiling {
    pub cik: u64,
    pub company: String,
    pub form_type: String,
    pub accession: String,
    pub filed: String,
    pub period: String,
    pub url: String,
    pub body: String,
}

pub struct EdgarClient {
    transport: Arc<dyn HttpTransport>,
    www: String,
    data: String,
}

impl EdgarClient {
    pub fn new(transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            transport,
            www: "https://www.sec.gov".into(),
            data: "https://data.sec.gov".into(),
        }
    }

    /// Points both hosts at `base` (useful for mirrors and tests).
    pub fn with_base(mut self, base: &str) -> Self {
        let base = base.trim_end_matches('/').to_string();
        self.www = base.clone();
        self.data = base;
        self
    }

    fn get_json(&self, url: &str) -> Result<Value, EdgarError> {
        let body = self.transport.get(url)?;
        serde_json::from_str(&body).map_err(|e| EdgarError::Parse(format!("{url}: {e}")))
    }

    pub fn lookup_cik(&self, ticker: &str) -> Result<(u64, String), EdgarError> {
        let index = self.get_json(&format!("{}/files/company_tickers.json", self.www))?;
        let entries = index
            .as_object()
            .ok_or_else(|| EdgarError::Parse("company_tickers.json is not an object".into()))?;
        entries
            .values()
            .find(|e| {
                e.get("ticker")
                    .and_then(Value::as_str)
                    .is_some_and(|t| t.eq_ignore_ascii_case(ticker))
            })
            .and_then(|e| {
                let cik = e.get("cik_str").and_then(|c| {
                    c.as_u64()
                        .or_else(|| c.as_str().and_then(|s| s.parse().ok()))
                })?;
                let title = e.get("title").and_then(Value::as_str).unwrap_or_default();
                Some((cik, title.to_string()))
            })
            .ok_or_else(|| EdgarError::UnknownTicker(ticker.to_string()))
    }

    /// The most recent filing of `form` for `ticker`, body fetched verbatim.
    pub fn latest_filing(&self, ticker: &str, form: &str) -> Result<LiveFiling, EdgarError> {
        let (cik, title) = self.lookup_cik(ticker)?;
        let subs = self.get_json(&format!("{}/submissions/CIK{cik:010}.json", self.data))?;
        let recent = subs
            .pointer("/filings/recent")
            .ok_or_else(|| EdgarError::Parse("submissions lack filings.recent".into()))?;
        let column = |name: &str| -> Vec<String> {
            recent
                .get(name)
                .and_then(Value::as_array)
                .map(|a| {
                    a.iter()
                        .map(|v| v.as_str().unwrap_or_default().to_string())
                        .collect()
                })
                .unwrap_or_default()
        };
        let forms = column("form");
        let accessions = column("accessionNumber");
        let filed = column("filingDate");
        let periods = column("reportDate");
        let docs = column("primaryDocument");
        let i = forms
            .iter()
            .position(|f| f == form)
            .ok_or_else(|| EdgarError::NoFiling {
                ticker: ticker.to_string(),
                form: form.to_string(),
            })?;
        let accession = accessions
            .get(i)
            .cloned()
            .ok_or_else(|| EdgarError::Parse("accession column too short".into()))?;
        let doc = docs
            .get(i)
            .cloned()
            .ok_or_else(|| EdgarError::Parse("primaryDocument column too short".into()))?;
        let url = format!(
            "{}/Archives/edgar/data/{cik}/{}/{doc}",
            self.www,
            accession.replace('-', "")
        );
        let body = self.transport.get(&url)?;
        let company = subs
            .get("name")
            .and_then(Value::as_str)
            .map(String::from)
            .unwrap_or(title);
        Ok(LiveFiling {
            cik,
            company,
            form_type: form.to_string(),
            accession,
            filed: filed.get(i).cloned().unwrap_or_default(),
            period: periods.get(i).cloned().unwrap_or_default(),
            url,
            body,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Serves canned bodies keyed by URL suffix and counts requests.
    #[derive(Default)]
    pub struct CannedTransport {
        pub routes: BTreeMap<String, String>,
        pub hits: AtomicUsize,
    }

    impl HttpTransport for CannedTransport {
        fn get(&self, url: &str) -> Result<String, TransportError> {
            self.hits.fetch_add(1, Ordering::SeqCst);
            self.routes
                .iter()
                .find(|(k, _)| url.ends_with(k.as_str()))
                .map(|(_, v)| v.clone())
                .ok_or(TransportError::Status {
                    url: url.to_string(),
                    status: 404,
                })
        }
    }

    pub fn canned() -> CannedTransport {
        let mut routes = BTreeMap::new();
        routes.insert(
            "/files/company_tickers.json".into(),
            r#"{"0":{"cik_str":1045810,"ticker":"NVDA","title":"NVIDIA CORP"}}"#.into(),
        );
        routes.insert(
            "/submissions/CIK0001045810.json".into(),
            r#"{"name":"NVIDIA CORP","filings":{"recent":{"form":["8-K","10-K"],
            "accessionNumber":["0001045810-26-000030","0001045810-26-000021"],
            "filingDate":["2026-03-01","2026-02-25"],"reportDate":["","2026-01-25"],
            "primaryDocument":["x8k.htm","nvda-20260125.htm"]}}}"#
                .into(),
        );
        routes.insert(
            "/Archives/edgar/data/1045810/000104581026000021/nvda-20260125.htm".into(),
            "<html><body><p>Item 1. Business</p><p>We build accelerated computing platforms.</p>\
             <p>Item 1A. Risk Factors</p><p>Demand can shift quickly.</p>\
             <p>Item 7. Management&#8217;s Discussion and Analysis</p><p>Revenue grew.</p></body></html>"
                .into(),
        );
        CannedTransport {
            routes,
            hits: AtomicUsize::new(0),
        }
    }

    #[test]
    fn resolves_latest_ten_k() {
        let t = Arc::new(canned());
        let client = EdgarClient::new(t.clone());
        let f = client.latest_filing("nvda", "10-K").unwrap();
        assert_eq!(f.cik, 1045810);
        assert_eq!(f.accession, "0001045810-26-000021");
        assert!(f.url.ends_with("/000104581026000021/nvda-20260125.htm"));
        assert!(f.body.contains("Item 1A."));
        assert_eq!(t.hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn unknown_ticker_is_tagged() {
        let client = EdgarClient::new(Arc::new(canned()));
        let err = client.latest_filing("ZZZZ", "10-K").unwrap_err();
        assert_eq!(err.kind(), "unknown-ticker");
    }
}
