//! Labelled example construction, stratified splitting and JSONL persistence.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::CveRecord;
use crate::taxonomy::{map_cwes_to_types, map_severity, SeverityIndex, TypeTaxonomy, TypeVector, NUM_SEVERITIES};
use crate::tokenize::{TokenizedInput, TokenizerAssets};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const MANIFEST_SCHEMA_VERSION: u64 = 1;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub cve_id: String,
    pub tokens: TokenizedInput,
    pub severity: SeverityIndex,
    pub types: TypeVector,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
    pub seed: u64,
}

impl SplitDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Both partitions, train first.
    pub fn full(&self) -> Vec<LabeledExample> {
        self.train.iter().chain(self.validation.iter()).cloned().collect()
    }
}

pub fn build_example(
    record: &CveRecord,
    taxonomy: &TypeTaxonomy,
    max_len: usize,
    assets: &TokenizerAssets,
) -> Result<LabeledExample> {
    let attach = |source: Error| Error::Record {
        cve_id: record.cve_id.clone(),
        source: Box::new(source),
    };
    let tokens = assets.tokenize(&record.description, max_len).map_err(attach)?;
    let severity = map_severity(&record.severity_raw).map_err(attach)?;
    let mapping = map_cwes_to_types(&record.cwe_ids, taxonomy);
    if !mapping.unmapped.is_empty() {
        log::debug!("{}: unmapped CWE ids {:?}", record.cve_id, mapping.unmapped);
    }
    Ok(LabeledExample {
        cve_id: record.cve_id.clone(),
        tokens,
        severity,
        types: mapping.types,
        description: record.description.clone(),
    })
}

pub fn build_examples(
    records: &[CveRecord],
    taxonomy: &TypeTaxonomy,
    max_len: usize,
    assets: &TokenizerAssets,
) -> Result<Vec<LabeledExample>> {
    records
        .iter()
        .map(|r| build_example(r, taxonomy, max_len, assets))
        .collect()
}

/// Validation count for a stratum of `n` under round-half-up.
fn validation_count(n: usize, train_fraction: f64) -> usize {
    ((1.0 - train_fraction) * n as f64 + 0.5 + 1e-9).floor() as usize
}

/// Per-severity stratified split; each stratum is shuffled with a seeded RNG.
pub fn stratified_split(
    examples: &[LabeledExample],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut strata: [Vec<usize>; NUM_SEVERITIES] = Default::default();
    for (i, ex) in examples.iter().enumerate() {
        strata[ex.severity.index()].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_validation = vec![false; examples.len()];
    for (class, members) in strata.iter_mut().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        let n_val = validation_count(n, train_fraction);
        if n >= 2 && (n_val == 0 || n_val == n) {
            return Err(Error::DegenerateSplit { class, count: n });
        }
        members.shuffle(&mut rng);
        for &i in &members[..n_val] {
            in_validation[i] = true;
        }
    }
    let (validation, train): (Vec<_>, Vec<_>) = examples
        .iter()
        .cloned()
        .zip(in_validation)
        .partition(|(_, v)| *v);
    Ok(SplitDataset {
        train: train.into_iter().map(|(e, _)| e).collect(),
        validation: validation.into_iter().map(|(e, _)| e).collect(),
        seed,
    })
}

pub fn severity_histogram(examples: &[LabeledExample]) -> [usize; NUM_SEVERITIES] {
    let mut h = [0; NUM_SEVERITIES];
    for e in examples {
        h[e.severity.index()] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub train: usize,
    pub validation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityHistogram {
    pub train: [usize; NUM_SEVERITIES],
    pub validation: [usize; NUM_SEVERITIES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u64,
    pub counts: PartitionCounts,
    pub seed: u64,
    pub max_len: usize,
    pub taxonomy: Vec<String>,
    pub severity_histogram: SeverityHistogram,
}

fn write_jsonl(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl(path: &Path) -> Result<Vec<LabeledExample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes `train.jsonl`, `validation.jsonl` and `manifest.json` into `dir`.
pub fn persist(
    dataset: &SplitDataset,
    dir: &Path,
    taxonomy: &TypeTaxonomy,
    max_len: usize,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join(TRAIN_FILE), &dataset.train)?;
    write_jsonl(&dir.join(VALIDATION_FILE), &dataset.validation)?;
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        counts: PartitionCounts {
            train: dataset.train.len(),
            validation: dataset.validation.len(),
        },
        seed: dataset.seed,
        max_len,
        taxonomy: taxonomy.names().to_vec(),
        severity_histogram: SeverityHistogram {
            train: severity_histogram(&dataset.train),
            validation: severity_histogram(&dataset.validation),
        },
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Version {
            found: manifest.schema_version,
            expected: MANIFEST_SCHEMA_VERSION,
        });
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<SplitDataset> {
    let manifest = load_manifest(dir)?;
    let dataset = SplitDataset {
        train: read_jsonl(&dir.join(TRAIN_FILE))?,
        validation: read_jsonl(&dir.join(VALIDATION_FILE))?,
        seed: manifest.seed,
    };
    if dataset.train.len() != manifest.counts.train
        || dataset.validation.len() != manifest.counts.validation
    {
        return Err(Error::Data(format!(
            "{}: manifest counts disagree with partition files",
            dir.display()
        )));
    }
    Ok(dataset)
}

/// Checks that no cve_id is present in both partitions.
pub fn partitions_disjoint(dataset: &SplitDataset) -> bool {
    let train: HashMap<&str, ()> = dataset.train.iter().map(|e| (e.cve_id.as_str(), ())).collect();
    dataset.validation.iter().all(|e| !train.contains_key(e.cve_id.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::default_taxonomy;
    use crate::tokenize::tests::tiny_vocab;
    use proptest::prelude::*;

    fn example(i: usize, severity: usize) -> LabeledExample {
        LabeledExample {
            cve_id: format!("CVE-2025-{i:05}"),
            tokens: TokenizedInput {
                input_ids: vec![2, 3, 0, 0],
                attention_mask: vec![1, 1, 0, 0],
                segment_ids: vec![0; 4],
            },
            severity: SeverityIndex::new(severity).unwrap(),
            types: TypeVector::zeros(),
            description: format!("description {i}"),
        }
    }

    fn record(id: &str, severity: &str, cwes: &[&str]) -> CveRecord {
        CveRecord {
            cve_id: id.into(),
            description: "Buffer overflow in the kernel".into(),
            severity_raw: severity.into(),
            cwe_ids: cwes.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn build_examples_composes_mappings() {
        let t = default_taxonomy();
        let a = tiny_vocab();
        let records = vec![
            record("CVE-2025-0001", "LOW", &[]),
            record("CVE-2025-0002", "HIGH", &["CWE-22"]),
            record("CVE-2025-0003", "CRITICAL", &["CWE-9999"]),
        ];
        let ex = build_examples(&records, &t, 16, &a).unwrap();
        assert_eq!(ex.iter().map(|e| e.cve_id.as_str()).collect::<Vec<_>>(),
            ["CVE-2025-0001", "CVE-2025-0002", "CVE-2025-0003"]);
        assert_eq!(ex[1].severity.index(), 2);
        let dt = t.index_of("Directory Traversal").unwrap();
        assert!(ex[1].types.get(dt));
        assert_eq!(ex[1].types.count_ones(), 1);
        assert_eq!(ex[2].types, TypeVector::zeros());
        assert!(build_examples(&[], &t, 16, &a).unwrap().is_empty());
    }

    #[test]
    fn build_errors_carry_cve_id() {
        let mut bad = record("CVE-2025-0009", "NONE", &[]);
        let err = build_examples(&[bad.clone()], &default_taxonomy(), 16, &tiny_vocab()).unwrap_err();
        assert!(err.to_string().contains("CVE-2025-0009"));
        assert_eq!(err.kind(), "UnknownSeverityError");
        bad.severity_raw = "LOW".into();
        bad.description = " ".into();
        let err = build_examples(&[bad], &default_taxonomy(), 16, &tiny_vocab()).unwrap_err();
        assert_eq!(err.kind(), "EmptyTextError");
    }

    #[test]
    fn single_stratum_split() {
        let ex: Vec<_> = (0..10).map(|i| example(i, 0)).collect();
        let s = stratified_split(&ex, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (8, 2));
        assert!(partitions_disjoint(&s));
        let again = stratified_split(&ex, 0.8, 7).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn split_errors() {
        // round(0.2 * 2) = 0 leaves the validation side empty.
        let ex: Vec<_> = (0..2).map(|i| example(i, 1)).collect();
        assert!(matches!(stratified_split(&ex, 0.8, 1), Err(Error::DegenerateSplit { class: 1, count: 2 })));
        assert!(matches!(stratified_split(&ex, 1.0, 1), Err(Error::InvalidConfig(_))));
        assert!(matches!(stratified_split(&ex, 0.0, 1), Err(Error::InvalidConfig(_))));
        // A singleton stratum goes to train without error.
        let s = stratified_split(&[example(0, 3)], 0.8, 1).unwrap();
        assert_eq!(s.train.len(), 1);
    }

    #[test]
    fn round_half_up() {
        assert_eq!(validation_count(10, 0.8), 2);
        assert_eq!(validation_count(3, 0.5), 2);
        assert_eq!(validation_count(5, 0.5), 3);
        assert_eq!(validation_count(7, 0.8), 1);
        assert_eq!(validation_count(13, 0.8), 3);
    }

    #[test]
    fn persist_round_trip() {
        let ex: Vec<_> = (0..20).map(|i| example(i, i % 4)).collect();
        let s = stratified_split(&ex, 0.8, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = persist(&s, dir.path(), &default_taxonomy(), 4).unwrap();
        assert_eq!(load(dir.path()).unwrap(), s);
        let m = load_manifest(dir.path()).unwrap();
        assert_eq!(manifest_path, dir.path().join(MANIFEST_FILE));
        let total: usize = m.severity_histogram.train.iter().chain(&m.severity_histogram.validation).sum();
        assert_eq!(total, s.len());
        assert_eq!(m.taxonomy.len(), 10);
        assert_eq!(m.seed, 42);
    }

    #[test]
    fn persist_empty() {
        let s = SplitDataset { train: vec![], validation: vec![], seed: 42 };
        let dir = tempfile::tempdir().unwrap();
        persist(&s, dir.path(), &default_taxonomy(), 128).unwrap();
        assert_eq!(std::fs::read(dir.path().join(TRAIN_FILE)).unwrap(), b"");
        assert_eq!(load(dir.path()).unwrap(), s);
        assert_eq!(load_manifest(dir.path()).unwrap().counts, PartitionCounts { train: 0, validation: 0 });
    }

    #[test]
    fn jsonl_field_names() {
        let s = SplitDataset { train: vec![example(1, 2)], validation: vec![], seed: 0 };
        let dir = tempfile::tempdir().unwrap();
        persist(&s, dir.path(), &default_taxonomy(), 4).unwrap();
        let line = std::fs::read_to_string(dir.path().join(TRAIN_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        for key in ["cve_id", "tokens", "severity", "types", "description"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["severity"], 2);
        assert_eq!(v["tokens"]["attention_mask"], serde_json::json!([1, 1, 0, 0]));
    }

    proptest! {
        #[test]
        fn split_properties(
            sev in prop::collection::vec(0usize..4, 0..300),
            frac in 0.55f64..0.95,
            seed in any::<u64>(),
        ) {
            let ex: Vec<_> = sev.iter().enumerate().map(|(i, s)| example(i, *s)).collect();
            match stratified_split(&ex, frac, seed) {
                Ok(s) => {
                    prop_assert_eq!(s.len(), ex.len());
                    prop_assert!(partitions_disjoint(&s));
                    let hist = severity_histogram(&ex);
                    let vh = severity_histogram(&s.validation);
                    for c in 0..4 {
                        if hist[c] > 0 {
                            let f = vh[c] as f64 / hist[c] as f64;
                            prop_assert!((f - (1.0 - frac)).abs() <= 1.0 / hist[c] as f64 + 1e-12);
                        }
                    }
                }
                Err(Error::DegenerateSplit { count, .. }) => prop_assert!(count >= 2),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
