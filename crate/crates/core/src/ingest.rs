//! NVD JSON 1.1 feed acquisition and parsing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use flate2::read::MultiGzDecoder;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::taxonomy::map_severity;
use crate::{Error, Result};

static CVE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap());
static CWE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CWE-\d+$").unwrap());

const DROPPED_PREFIXES: [&str; 2] = ["** REJECT **", "** RESERVED **"];

/// Where a feed comes from: an http(s)/file URI or a plain local path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedSource {
    location: String,
    compressed: bool,
}

enum Location<'a> {
    Remote(&'a str),
    Local(PathBuf),
}

impl FeedSource {
    pub fn new(location: impl Into<String>, compressed: bool) -> Result<Self> {
        let location = location.into();
        if location.trim().is_empty() {
            return Err(Error::InvalidConfig("feed location is empty".into()));
        }
        if let Some((scheme, _)) = location.split_once("://") {
            if !matches!(scheme, "http" | "https" | "file") {
                return Err(Error::InvalidConfig(format!("unsupported URI scheme {scheme:?}")));
            }
        }
        Ok(FeedSource {
            location,
            compressed,
        })
    }

    /// Infers `compressed` from a `.gz` suffix.
    pub fn detect(location: impl Into<String>) -> Result<Self> {
        let location = location.into();
        let compressed = location.ends_with(".gz");
        FeedSource::new(location, compressed)
    }

    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn compressed(&self) -> bool {
        self.compressed
    }

    fn resolve(&self) -> Location<'_> {
        if let Some(path) = self.location.strip_prefix("file://") {
            Location::Local(PathBuf::from(path))
        } else if self.location.contains("://") {
            Location::Remote(&self.location)
        } else {
            Location::Local(PathBuf::from(&self.location))
        }
    }
}

/// Retrieves a feed and returns the path of the (decompressed) JSON file.
///
/// An uncompressed local source is returned as-is without copying.
pub fn fetch_feed(source: &FeedSource, dest: &Path) -> Result<PathBuf> {
    match source.resolve() {
        Location::Local(path) => {
            if !path.is_file() {
                return Err(Error::io(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "feed file not found"),
                ));
            }
            if !source.compressed {
                return Ok(path);
            }
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            write_decompressed(file, dest)?;
        }
        Location::Remote(url) => {
            log::info!("downloading {url}");
            let response = ureq::get(url)
                .call()
                .map_err(|e| Error::Network(format!("{url}: {e}")))?;
            let reader = response.into_body().into_reader();
            if source.compressed {
                write_decompressed(reader, dest)?;
            } else {
                write_stream(reader, dest, |e| Error::Network(e.to_string()))?;
            }
        }
    }
    Ok(dest.to_path_buf())
}

fn write_decompressed(reader: impl Read, dest: &Path) -> Result<()> {
    write_stream(MultiGzDecoder::new(reader), dest, |e| {
        Error::Decompress(e.to_string())
    })
}

fn write_stream(
    mut reader: impl Read,
    dest: &Path,
    read_err: impl Fn(std::io::Error) -> Error,
) -> Result<()> {
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = dest.with_extension("partial");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut out = BufWriter::new(file);
    let mut buf = vec![0u8; 64 * 1024];
    let copied = (|| -> Result<()> {
        loop {
            let n = reader.read(&mut buf).map_err(&read_err)?;
            if n == 0 {
                break;
            }
            out.write_all(&buf[..n]).map_err(|e| Error::io(&tmp, e))?;
        }
        out.flush().map_err(|e| Error::io(&tmp, e))
    })();
    if let Err(e) = copied {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, dest).map_err(|e| Error::io(dest, e))
}

/// One usable NVD entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    pub description: String,
    pub severity_raw: String,
    pub cwe_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub total: usize,
    pub kept: usize,
    pub dropped_missing_severity: usize,
    pub dropped_missing_description: usize,
    pub dropped_rejected: usize,
    pub dropped_duplicate: usize,
    /// Malformed id or a severity label outside LOW/MEDIUM/HIGH/CRITICAL.
    pub dropped_malformed: usize,
}

impl IngestStats {
    pub fn dropped(&self) -> usize {
        self.dropped_missing_severity
            + self.dropped_missing_description
            + self.dropped_rejected
            + self.dropped_duplicate
            + self.dropped_malformed
    }
}

enum Drop {
    MissingSeverity,
    MissingDescription,
    Rejected,
    Malformed,
}

/// Parses a feed file; gzip input is recognised by its magic bytes.
pub fn parse_feed(path: &Path) -> Result<(Vec<CveRecord>, IngestStats)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut plain = Vec::new();
        MultiGzDecoder::new(bytes.as_slice())
            .read_to_end(&mut plain)
            .map_err(|e| Error::Decompress(format!("{}: {e}", path.display())))?;
        return parse_feed_bytes(&plain);
    }
    parse_feed_bytes(&bytes)
}

pub fn parse_feed_bytes(bytes: &[u8]) -> Result<(Vec<CveRecord>, IngestStats)> {
    let root: Value = serde_json::from_slice(bytes)?;
    let items = root
        .get("CVE_Items")
        .ok_or_else(|| Error::Schema("missing top-level key CVE_Items".into()))?
        .as_array()
        .ok_or_else(|| Error::Schema("CVE_Items is not a list".into()))?;

    let mut stats = IngestStats {
        total: items.len(),
        ..IngestStats::default()
    };
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for item in items {
        match parse_item(item) {
            Ok(record) => {
                if seen.insert(record.cve_id.clone()) {
                    records.push(record);
                } else {
                    stats.dropped_duplicate += 1;
                }
            }
            Err(Drop::MissingSeverity) => stats.dropped_missing_severity += 1,
            Err(Drop::MissingDescription) => stats.dropped_missing_description += 1,
            Err(Drop::Rejected) => stats.dropped_rejected += 1,
            Err(Drop::Malformed) => stats.dropped_malformed += 1,
        }
    }
    stats.kept = records.len();
    Ok((records, stats))
}

fn parse_item(item: &Value) -> Result<CveRecord, Drop> {
    let cve = &item["cve"];
    let cve_id = cve["CVE_data_meta"]["ID"]
        .as_str()
        .filter(|id| CVE_ID.is_match(id))
        .ok_or(Drop::Malformed)?;

    let description = cve["description"]["description_data"]
        .as_array()
        .and_then(|entries| entries.iter().find(|d| d["lang"] == "en"))
        .and_then(|d| d["value"].as_str())
        .filter(|text| !text.trim().is_empty())
        .ok_or(Drop::MissingDescription)?;
    let trimmed = description.trim_start();
    if DROPPED_PREFIXES.iter().any(|p| trimmed.starts_with(p)) {
        return Err(Drop::Rejected);
    }

    let severity = item["impact"]["baseMetricV3"]["cvssV3"]["baseSeverity"]
        .as_str()
        .ok_or(Drop::MissingSeverity)?;
    let severity = map_severity(severity).map_err(|_| Drop::Malformed)?;

    let mut cwe_ids: Vec<String> = Vec::new();
    let groups = cve["problemtype"]["problemtype_data"].as_array();
    for group in groups.into_iter().flatten() {
        for desc in group["description"].as_array().into_iter().flatten() {
            if let Some(value) = desc["value"].as_str() {
                if CWE_ID.is_match(value) && !cwe_ids.iter().any(|c| c == value) {
                    cwe_ids.push(value.to_string());
                }
            }
        }
    }

    Ok(CveRecord {
        cve_id: cve_id.to_string(),
        description: description.to_string(),
        severity_raw: severity.name().to_uppercase(),
        cwe_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn item(id: &str, desc: Option<&str>, severity: Option<&str>, cwes: &[&str]) -> Value {
        let mut v = json!({
            "cve": {
                "CVE_data_meta": {"ID": id},
                "problemtype": {"problemtype_data": [{"description":
                    cwes.iter().map(|c| json!({"lang": "en", "value": c})).collect::<Vec<_>>()}]},
                "description": {"description_data": []}
            },
            "impact": {}
        });
        if let Some(d) = desc {
            v["cve"]["description"]["description_data"] = json!([{"lang": "en", "value": d}]);
        }
        if let Some(s) = severity {
            v["impact"]["baseMetricV3"] = json!({"cvssV3": {"baseSeverity": s, "baseScore": 5.0}});
        }
        v
    }

    #[test]
    fn empty_feed() {
        let (records, stats) = parse_feed_bytes(br#"{"CVE_Items": []}"#).unwrap();
        assert!(records.is_empty());
        assert_eq!(stats, IngestStats::default());
    }

    #[test]
    fn schema_and_json_errors() {
        assert!(matches!(parse_feed_bytes(b"{\"CVE_Items\": "), Err(Error::Json(_))));
        assert!(matches!(parse_feed_bytes(b"{}"), Err(Error::Schema(_))));
        assert!(matches!(
            parse_feed_bytes(br#"{"CVE_Items": {"a": 1}}"#),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn drop_categories() {
        let feed = json!({"CVE_Items": [
            item("CVE-2025-0001", Some("ok"), Some("LOW"), &[]),
            item("CVE-2025-0001", Some("dup"), Some("LOW"), &[]),
            item("CVE-2025-0002", Some("** RESERVED ** pending"), None, &[]),
            item("CVE-2025-0003", None, Some("HIGH"), &[]),
            item("CVE-2025-0004", Some("   "), Some("HIGH"), &[]),
            item("CVE-25-1", Some("bad id"), Some("HIGH"), &[]),
            item("CVE-2025-0005", Some("none severity"), Some("NONE"), &[]),
        ]});
        let (records, stats) = parse_feed_bytes(feed.to_string().as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].description, "ok");
        assert_eq!(stats.dropped_duplicate, 1);
        assert_eq!(stats.dropped_rejected, 1);
        assert_eq!(stats.dropped_missing_description, 2);
        assert_eq!(stats.dropped_malformed, 2);
        assert_eq!(stats.kept + stats.dropped(), stats.total);
    }

    #[test]
    fn cwe_extraction_filters_placeholders() {
        let feed = json!({"CVE_Items": [item(
            "CVE-2025-1000",
            Some("x"),
            Some("critical"),
            &["NVD-CWE-noinfo", "CWE-79", "NVD-CWE-Other", "CWE-89", "CWE-79"],
        )]});
        let (records, _) = parse_feed_bytes(feed.to_string().as_bytes()).unwrap();
        assert_eq!(records[0].cwe_ids, vec!["CWE-79", "CWE-89"]);
        assert_eq!(records[0].severity_raw, "CRITICAL");
    }

    #[test]
    fn english_description_selected() {
        let mut v = item("CVE-2025-2000", None, Some("MEDIUM"), &[]);
        v["cve"]["description"]["description_data"] = json!([
            {"lang": "es", "value": "hola"},
            {"lang": "en", "value": "hello"},
            {"lang": "en", "value": "second"}
        ]);
        let feed = json!({ "CVE_Items": [v] });
        let (records, _) = parse_feed_bytes(feed.to_string().as_bytes()).unwrap();
        assert_eq!(records[0].description, "hello");
    }

    #[test]
    fn feed_source_validation() {
        assert!(FeedSource::new("", false).is_err());
        assert!(FeedSource::new("ftp://x/feed.json", false).is_err());
        assert!(FeedSource::new("https://x/feed.json.gz", true).is_ok());
        assert!(FeedSource::detect("feed.json.gz").unwrap().compressed());
        assert!(!FeedSource::detect("file:///tmp/feed.json").unwrap().compressed());
    }

    #[test]
    fn fetch_local_identity_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("feed.json");
        let body = br#"{"CVE_Items": []}"#.repeat(50);
        std::fs::write(&plain, &body).unwrap();
        let src = FeedSource::new(plain.to_str().unwrap(), false).unwrap();
        let out = fetch_feed(&src, &dir.path().join("unused.json")).unwrap();
        assert_eq!(out, plain);
        assert_eq!(std::fs::read(&out).unwrap(), body);

        let gz = dir.path().join("feed.json.gz");
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::best());
        enc.write_all(&body).unwrap();
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        let src = FeedSource::new(format!("file://{}", gz.display()), true).unwrap();
        let dest = dir.path().join("raw/out.json");
        let out = fetch_feed(&src, &dest).unwrap();
        assert_eq!(out, dest);
        let gz_len = std::fs::metadata(&gz).unwrap().len();
        assert!(std::fs::metadata(&out).unwrap().len() > gz_len);
        assert_eq!(std::fs::read(&out).unwrap(), body);
    }

    #[test]
    fn fetch_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json.gz");
        std::fs::write(&bad, b"definitely not gzip").unwrap();
        let src = FeedSource::new(bad.to_str().unwrap(), true).unwrap();
        let err = fetch_feed(&src, &dir.path().join("o.json")).unwrap_err();
        assert!(matches!(err, Error::Decompress(_)), "{err:?}");

        let src = FeedSource::new("https://127.0.0.1:1/nvdcve-1.1-recent.json.gz", true).unwrap();
        let err = fetch_feed(&src, &dir.path().join("o.json")).unwrap_err();
        assert!(matches!(err, Error::Network(_)), "{err:?}");

        let src = FeedSource::new(dir.path().join("missing.json").to_str().unwrap(), false).unwrap();
        assert!(matches!(fetch_feed(&src, dir.path()), Err(Error::Io { .. })));
    }

    fn arb_item() -> impl Strategy<Value = Value> {
        (
            0u32..40,
            prop::option::of("[a-zA-Z ]{0,30}"),
            prop::option::of(prop::sample::select(vec![
                "LOW", "MEDIUM", "HIGH", "CRITICAL", "NONE", "low",
            ])),
            prop::collection::vec(
                prop::sample::select(vec!["CWE-79", "CWE-22", "NVD-CWE-noinfo", "CWE-787"]),
                0..4,
            ),
            any::<bool>(),
        )
            .prop_map(|(n, desc, sev, cwes, reject)| {
                let desc = desc.map(|d| if reject { format!("** REJECT ** {d}") } else { d });
                item(&format!("CVE-2024-{n:05}"), desc.as_deref(), sev, &cwes)
            })
    }

    proptest! {
        #[test]
        fn parse_invariants(items in prop::collection::vec(arb_item(), 0..30)) {
            let bytes = json!({ "CVE_Items": items }).to_string();
            let (records, stats) = parse_feed_bytes(bytes.as_bytes()).unwrap();
            prop_assert_eq!(stats.kept + stats.dropped(), stats.total);
            prop_assert_eq!(stats.kept, records.len());
            let mut ids = HashSet::new();
            for r in &records {
                prop_assert!(CVE_ID.is_match(&r.cve_id));
                prop_assert!(!r.description.trim().is_empty());
                prop_assert!(["LOW", "MEDIUM", "HIGH", "CRITICAL"].contains(&r.severity_raw.as_str()));
                prop_assert!(r.cwe_ids.iter().all(|c| CWE_ID.is_match(c)));
                prop_assert!(ids.insert(r.cve_id.clone()));
            }
            let again = parse_feed_bytes(bytes.as_bytes()).unwrap();
            prop_assert_eq!(again.0, records);
        }
    }
}
