//! Client for Etherscan-compatible `getsourcecode` endpoints, with an offline
//! fixture backend so pipelines and tests run without network or API keys.

use std::path::PathBuf;
use std::time::Duration;

use serde_json::Value;

use super::{is_hex40, CorpusError, Origin, SourceFile};

/// Transport used to resolve verified sources.
#[derive(Debug, Clone)]
pub enum Backend {
    Http { base_url: String, api_key: String },
    /// Reads `<dir>/<address>.json` files that mirror the HTTP response body.
    Fixture { dir: PathBuf },
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub backend: Backend,
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl ClientConfig {
    pub fn http(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        ClientConfig {
            backend: Backend::Http {
                base_url: base_url.into(),
                api_key: api_key.into(),
            },
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn fixture(dir: impl Into<PathBuf>) -> Self {
        ClientConfig {
            backend: Backend::Fixture { dir: dir.into() },
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

/// Fetch the verified source for a 40-hex-char address (0x prefix accepted).
/// Rate limits and 5xx responses are retried `max_attempts` times with linear
/// backoff before surfacing as a retriable `RateLimited` error.
pub fn fetch_verified_source(
    cfg: &ClientConfig,
    address: &str,
) -> Result<SourceFile, CorpusError> {
    let addr = normalize_address(address)?;
    match &cfg.backend {
        Backend::Fixture { dir } => {
            let path = dir.join(format!("{addr}.json"));
            let body = std::fs::read_to_string(&path).map_err(|_| CorpusError::NotFound {
                address: addr.clone(),
            })?;
            parse_response(&addr, &body)
        }
        Backend::Http { base_url, api_key } => {
            let url = format!(
                "{base_url}?module=contract&action=getsourcecode&address=0x{addr}&apikey={api_key}"
            );
            let mut attempt = 0;
            loop {
                attempt += 1;
                match ureq::get(&url).call() {
                    Ok(mut resp) => {
                        let body = resp.body_mut().read_to_string().map_err(|e| {
                            CorpusError::Http {
                                address: addr.clone(),
                                message: e.to_string(),
                            }
                        })?;
                        match parse_response(&addr, &body) {
                            Err(CorpusError::RateLimited { .. }) if attempt < cfg.max_attempts => {
                                std::thread::sleep(cfg.backoff * attempt);
                            }
                            other => return other,
                        }
                    }
                    Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                        if attempt >= cfg.max_attempts {
                            return Err(CorpusError::RateLimited {
                                attempts: attempt,
                                backoff_hint: cfg.backoff * (attempt + 1),
                            });
                        }
                        std::thread::sleep(cfg.backoff * attempt);
                    }
                    Err(e) => {
                        return Err(CorpusError::Http {
                            address: addr.clone(),
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
    }
}

fn normalize_address(address: &str) -> Result<String, CorpusError> {
    let hex = address.strip_prefix("0x").unwrap_or(address);
    if !is_hex40(hex) {
        return Err(CorpusError::InvalidAddress {
            address: address.to_string(),
        });
    }
    Ok(hex.to_ascii_lowercase())
}

fn parse_response(address: &str, body: &str) -> Result<SourceFile, CorpusError> {
    let v: Value = serde_json::from_str(body).map_err(|e| CorpusError::Http {
        address: address.to_string(),
        message: format!("malformed response body: {e}"),
    })?;
    let status = v["status"].as_str().unwrap_or("");
    if status != "1" {
        let detail = v["result"]
            .as_str()
            .or_else(|| v["message"].as_str())
            .unwrap_or("");
        if detail.to_ascii_lowercase().contains("rate limit") {
            return Err(CorpusError::RateLimited {
                attempts: 1,
                backoff_hint: Duration::from_millis(250),
            });
        }
        return Err(CorpusError::NotFound {
            address: address.to_string(),
        });
    }
    let record = &v["result"][0];
    let source = record["SourceCode"].as_str().unwrap_or("");
    if source.is_empty() {
        // Etherscan answers status 1 with an empty SourceCode for
        // unverified contracts
        return Err(CorpusError::NotFound {
            address: address.to_string(),
        });
    }
    let name = record["ContractName"].as_str().unwrap_or("");
    let file_name = if name.is_empty() {
        format!("{address}.sol")
    } else {
        format!("{name}.sol")
    };
    Ok(SourceFile {
        address: address.to_string(),
        file_name,
        text: source.to_string(),
        origin: Origin::Remote,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    const ADDR: &str = "1234567890abcdef1234567890abcdef12345678";

    fn ok_body() -> String {
        serde_json::json!({
            "status": "1",
            "message": "OK",
            "result": [{
                "SourceCode": "contract Coin { uint x; }\n",
                "ContractName": "Coin"
            }]
        })
        .to_string()
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(format!("{ADDR}.json")), ok_body()).unwrap();
        let cfg = ClientConfig::fixture(dir.path());
        let file = fetch_verified_source(&cfg, &format!("0x{ADDR}")).unwrap();
        assert_eq!(file.origin, Origin::Remote);
        assert_eq!(file.address, ADDR);
        assert_eq!(file.file_name, "Coin.sol");
        assert!(file.text.contains("contract Coin"));
    }

    #[test]
    fn fixture_unknown_address_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ClientConfig::fixture(dir.path());
        assert!(matches!(
            fetch_verified_source(&cfg, ADDR),
            Err(CorpusError::NotFound { .. })
        ));
    }

    #[test]
    fn rejects_malformed_address() {
        let cfg = ClientConfig::fixture("/nonexistent");
        assert!(matches!(
            fetch_verified_source(&cfg, "0x1234"),
            Err(CorpusError::InvalidAddress { .. })
        ));
    }

    // one-shot HTTP server answering each connection with a fixed response
    fn spawn_server(
        responses: Vec<String>,
    ) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handle = std::thread::spawn(move || {
            for response in responses {
                let (mut stream, _) = listener.accept().unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut buf = [0u8; 4096];
                let _ = stream.read(&mut buf);
                stream.write_all(response.as_bytes()).unwrap();
            }
        });
        (base_url, hits, handle)
    }

    fn http_response(status_line: &str, body: &str) -> String {
        format!(
            "HTTP/1.1 {status_line}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
    }

    #[test]
    fn http_fetch_succeeds() {
        let (base_url, hits, handle) =
            spawn_server(vec![http_response("200 OK", &ok_body())]);
        let cfg = ClientConfig::http(base_url, "test-key");
        let file = fetch_verified_source(&cfg, ADDR).unwrap();
        handle.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        assert_eq!(file.file_name, "Coin.sol");
    }

    #[test]
    fn rate_limit_retries_three_times_then_errors() {
        let resp = http_response("429 Too Many Requests", "{}");
        let (base_url, hits, handle) = spawn_server(vec![resp.clone(), resp.clone(), resp]);
        let mut cfg = ClientConfig::http(base_url, "test-key");
        cfg.backoff = Duration::from_millis(1);
        let err = fetch_verified_source(&cfg, ADDR).unwrap_err();
        handle.join().unwrap();
        // oracle: the mock server counts exactly max_attempts requests
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        match err {
            CorpusError::RateLimited { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("expected RateLimited, got {other:?}"),
        }
    }

    #[test]
    fn unverified_contract_is_not_found() {
        let body = serde_json::json!({
            "status": "1",
            "message": "OK",
            "result": [{"SourceCode": "", "ContractName": ""}]
        })
        .to_string();
        let (base_url, _, handle) = spawn_server(vec![http_response("200 OK", &body)]);
        let cfg = ClientConfig::http(base_url, "test-key");
        let err = fetch_verified_source(&cfg, ADDR).unwrap_err();
        handle.join().unwrap();
        assert!(matches!(err, CorpusError::NotFound { .. }));
    }
}
