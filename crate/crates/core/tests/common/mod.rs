//! Shared fixtures for integration tests: a synthetic NVD 1.1 feed with
//! learnable structure and a small generated encoder.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use vulnclass::classify::Classifier;
use vulnclass::model::EncoderAssetsSpec;
use vulnclass::service;

/// One template family per default taxonomy entry: (CWE, phrases, typical severity).
const FAMILIES: [(&str, &[&str], usize); 10] = [
    ("CWE-787", &["heap-based buffer overflow in", "out-of-bounds write in", "stack overflow when parsing"], 2),
    ("CWE-94", &["remote code execution via", "arbitrary code injection in", "allows execution of arbitrary commands in"], 3),
    ("CWE-400", &["denial of service via crafted", "uncontrolled resource consumption in", "infinite loop causes a crash of"], 1),
    ("CWE-79", &["cross-site scripting in", "stored XSS allows script injection in", "reflected cross-site scripting via"], 1),
    ("CWE-89", &["SQL injection in", "blind SQL injection via the id parameter of", "unsanitized SQL query in"], 3),
    ("CWE-352", &["cross-site request forgery in", "CSRF allows attackers to change settings in", "missing CSRF token validation in"], 1),
    ("CWE-269", &["privilege escalation in", "local users can gain root privileges through", "improper privilege management in"], 2),
    ("CWE-200", &["information disclosure in", "exposure of sensitive information through", "leaks memory contents of"], 0),
    ("CWE-22", &["directory traversal in", "path traversal allows reading arbitrary files via", "dot dot slash sequences in"], 2),
    ("CWE-1021", &["clickjacking in", "improper restriction of rendered UI layers in", "missing frame options header in"], 0),
];

const PRODUCTS: [&str; 12] = [
    "the web console", "ImageKit", "the login handler", "OpenGate", "the upload servlet", "MailRelay",
    "the admin panel", "NetBridge", "the JSON parser", "CloudDesk", "the kernel driver", "PrintServe",
];

const SEVERITIES: [&str; 4] = ["LOW", "MEDIUM", "HIGH", "CRITICAL"];

fn item(id: &str, description: &str, severity: &str, cwes: &[&str]) -> Value {
    json!({
        "cve": {
            "CVE_data_meta": {"ID": id, "ASSIGNER": "cve@mitre.org"},
            "problemtype": {"problemtype_data": [{"description":
                cwes.iter().map(|c| json!({"lang": "en", "value": c})).collect::<Vec<_>>()}]},
            "description": {"description_data": [{"lang": "en", "value": description}]}
        },
        "impact": {"baseMetricV3": {"cvssV3": {"baseSeverity": severity, "baseScore": 5.0}}}
    })
}

/// `n` usable entries whose phrasing predicts both type and (mostly) severity.
pub fn synthetic_feed(n: usize, seed: u64) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<Value> = (0..n)
        .map(|i| {
            let fam = i % FAMILIES.len();
            let (cwe, phrases, typical) = FAMILIES[fam];
            let phrase = phrases[rng.random_range(0..phrases.len())];
            let product = PRODUCTS[rng.random_range(0..PRODUCTS.len())];
            let version = format!("{}.{}", rng.random_range(1..9), rng.random_range(0..20));
            let mut sev = typical;
            if rng.random_bool(0.15) {
                sev = rng.random_range(0..4);
            }
            let mut cwes = vec![cwe];
            let mut text = format!("A {phrase} {product} {version} allows remote attackers to compromise the host.");
            if rng.random_bool(0.2) {
                let (cwe2, phrases2, _) = FAMILIES[(fam + 1 + rng.random_range(0..9)) % FAMILIES.len()];
                cwes.push(cwe2);
                text.push_str(&format!(" It also involves {}", phrases2[0]));
                text.push_str(" the same component.");
            }
            item(&format!("CVE-2024-{:05}", 10000 + i), &text, SEVERITIES[sev], &cwes)
        })
        .collect();
    json!({"CVE_data_type": "CVE", "CVE_data_format": "MITRE", "CVE_Items": items})
}

pub fn write_synthetic_feed(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join("synthetic_feed.json");
    std::fs::write(&path, serde_json::to_vec(&synthetic_feed(n, seed)).unwrap()).unwrap();
    path
}

pub fn tiny_spec(dropout: f64) -> EncoderAssetsSpec {
    EncoderAssetsSpec {
        vocab_size: 400,
        hidden_size: 32,
        num_layers: 1,
        num_heads: 2,
        intermediate_size: 64,
        max_positions: 128,
        dropout,
        seed: 42,
    }
}

/// Writes encoder assets trained on the descriptions in `feed` to `dir`.
pub fn encoder_for_feed(feed: &Path, spec: &EncoderAssetsSpec, dir: &Path) {
    let (records, _) = vulnclass::ingest::parse_feed(feed).unwrap();
    vulnclass::model::init_encoder_assets(records.iter().map(|r| r.description.as_str()), spec, dir).unwrap();
}

pub fn golden_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_feed.json")
}

/// Router served on an ephemeral port from a background runtime; stops on drop.
pub struct Server {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    pub fn start(classifier: Option<Arc<Classifier>>, origins: &[String]) -> Server {
        let app = service::router(classifier, origins);
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = service::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        Server {
            addr: addr_rx.recv().unwrap(),
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

