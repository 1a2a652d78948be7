//! Severity ordering and the 10-category vulnerability type taxonomy.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_SEVERITIES: usize = 4;
pub const NUM_TYPES: usize = 10;

/// Canonical severity names, index order.
pub const SEVERITY_NAMES: [&str; NUM_SEVERITIES] = ["Low", "Medium", "High", "Critical"];

/// Type names in their frozen index order.
pub const DEFAULT_TYPE_NAMES: [&str; NUM_TYPES] = [
    "Buffer Overflow",
    "RCE",
    "DoS",
    "XSS",
    "SQL Injection",
    "CSRF",
    "Privilege Escalation",
    "Information Disclosure",
    "Directory Traversal",
    "Clickjacking",
];

const DEFAULT_CWE_GROUPS: [&[u32]; NUM_TYPES] = [
    &[119, 120, 121, 122, 125, 787],
    &[94, 78, 77, 502],
    &[400, 770, 835],
    &[79],
    &[89],
    &[352],
    &[269, 264, 266, 274],
    &[200, 209, 532],
    &[22, 23, 36],
    &[1021],
];

/// Severity class index: 0=Low, 1=Medium, 2=High, 3=Critical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SeverityIndex(u8);

impl SeverityIndex {
    pub const LOW: SeverityIndex = SeverityIndex(0);
    pub const MEDIUM: SeverityIndex = SeverityIndex(1);
    pub const HIGH: SeverityIndex = SeverityIndex(2);
    pub const CRITICAL: SeverityIndex = SeverityIndex(3);

    pub fn new(value: usize) -> Result<Self> {
        if value < NUM_SEVERITIES {
            Ok(SeverityIndex(value as u8))
        } else {
            Err(Error::UnknownSeverity(value.to_string()))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        SEVERITY_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = SeverityIndex> {
        (0..NUM_SEVERITIES as u8).map(SeverityIndex)
    }
}

impl TryFrom<u8> for SeverityIndex {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        SeverityIndex::new(value as usize)
    }
}

impl From<SeverityIndex> for u8 {
    fn from(s: SeverityIndex) -> u8 {
        s.0
    }
}

impl fmt::Display for SeverityIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Case-insensitive mapping of a CVSS v3 severity label to its index.
pub fn map_severity(label: &str) -> Result<SeverityIndex> {
    SEVERITY_NAMES
        .iter()
        .position(|name| name.eq_ignore_ascii_case(label.trim()))
        .map(|i| SeverityIndex(i as u8))
        .ok_or_else(|| Error::UnknownSeverity(label.to_string()))
}

/// Multi-hot type indicator vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct TypeVector([bool; NUM_TYPES]);

impl TypeVector {
    pub fn zeros() -> Self {
        TypeVector([false; NUM_TYPES])
    }

    pub fn from_bits(bits: [bool; NUM_TYPES]) -> Self {
        TypeVector(bits)
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.0[index] = value;
    }

    pub fn bits(&self) -> &[bool; NUM_TYPES] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn union(&self, other: &TypeVector) -> TypeVector {
        let mut out = *self;
        for (o, b) in out.0.iter_mut().zip(other.0.iter()) {
            *o |= *b;
        }
        out
    }

    /// Bits as 0.0 / 1.0 targets.
    pub fn as_f32(&self) -> [f32; NUM_TYPES] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}

impl TryFrom<Vec<u8>> for TypeVector {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        if v.len() != NUM_TYPES {
            return Err(Error::Data(format!(
                "type vector must have {NUM_TYPES} elements, got {}",
                v.len()
            )));
        }
        let mut bits = [false; NUM_TYPES];
        for (b, x) in bits.iter_mut().zip(v) {
            *b = match x {
                0 => false,
                1 => true,
                other => return Err(Error::Data(format!("type bit must be 0 or 1, got {other}"))),
            };
        }
        Ok(TypeVector(bits))
    }
}

impl From<TypeVector> for Vec<u8> {
    fn from(t: TypeVector) -> Vec<u8> {
        t.0.iter().map(|b| *b as u8).collect()
    }
}

/// Ordered type names plus the CWE lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeTaxonomy {
    names: Vec<String>,
    cwe_map: BTreeMap<String, usize>,
}

impl TypeTaxonomy {
    pub fn new(names: Vec<String>, cwe_map: BTreeMap<String, usize>) -> Result<Self> {
        let taxonomy = TypeTaxonomy { names, cwe_map };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    fn validate(&self) -> Result<()> {
        if self.names.len() != NUM_TYPES {
            return Err(Error::InvalidConfig(format!(
                "taxonomy must list exactly {NUM_TYPES} names, got {}",
                self.names.len()
            )));
        }
        for (i, name) in self.names.iter().enumerate() {
            if self.names[..i].contains(name) {
                return Err(Error::InvalidConfig(format!("duplicate taxonomy name {name:?}")));
            }
        }
        if let Some((cwe, idx)) = self.cwe_map.iter().find(|(_, idx)| **idx >= NUM_TYPES) {
            return Err(Error::InvalidConfig(format!(
                "cwe_map entry {cwe} -> {idx} is outside [0, {}]",
                NUM_TYPES - 1
            )));
        }
        Ok(())
    }

    /// Reads `{"names": [...], "cwe_map": {"CWE-79": 3, ...}}`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let taxonomy: TypeTaxonomy = serde_json::from_slice(&bytes)?;
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn lookup(&self, cwe_id: &str) -> Option<usize> {
        self.cwe_map.get(cwe_id).copied()
    }
}

impl Default for TypeTaxonomy {
    fn default() -> Self {
        default_taxonomy()
    }
}

pub fn default_taxonomy() -> TypeTaxonomy {
    let names = DEFAULT_TYPE_NAMES.iter().map(|s| s.to_string()).collect();
    let cwe_map = DEFAULT_CWE_GROUPS
        .iter()
        .enumerate()
        .flat_map(|(idx, cwes)| cwes.iter().map(move |n| (format!("CWE-{n}"), idx)))
        .collect();
    TypeTaxonomy { names, cwe_map }
}

/// Result of mapping a record's CWE ids onto the taxonomy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeMapping {
    pub types: TypeVector,
    /// Input ids with no taxonomy entry, in input order (repeats kept).
    pub unmapped: Vec<String>,
}

pub fn map_cwes_to_types<S: AsRef<str>>(cwe_ids: &[S], taxonomy: &TypeTaxonomy) -> TypeMapping {
    let mut types = TypeVector::zeros();
    let mut unmapped = Vec::new();
    for id in cwe_ids {
        match taxonomy.lookup(id.as_ref()) {
            Some(idx) => types.set(idx, true),
            None => unmapped.push(id.as_ref().to_string()),
        }
    }
    TypeMapping { types, unmapped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn severity_labels() {
        assert_eq!(map_severity("LOW").unwrap().index(), 0);
        assert_eq!(map_severity("medium").unwrap().index(), 1);
        assert_eq!(map_severity("High").unwrap().index(), 2);
        assert_eq!(map_severity("Critical").unwrap().index(), 3);
        assert!(matches!(map_severity("NONE"), Err(Error::UnknownSeverity(_))));
        assert!(map_severity("").is_err());
    }

    #[test]
    fn severity_name_round_trip() {
        for s in SeverityIndex::all() {
            assert_eq!(map_severity(s.name()).unwrap(), s);
        }
    }

    #[test]
    fn default_order_is_frozen() {
        let t = default_taxonomy();
        assert_eq!(t.names()[0], "Buffer Overflow");
        assert_eq!(t.names()[9], "Clickjacking");
        assert_eq!(t.lookup("CWE-89"), t.index_of("SQL Injection"));
        assert_eq!(t.lookup("CWE-1021"), Some(9));
        assert_eq!(t.lookup("NVD-CWE-noinfo"), None);
    }

    #[test]
    fn cwe_mapping_examples() {
        let t = default_taxonomy();
        let xss = t.index_of("XSS").unwrap();
        let sqli = t.index_of("SQL Injection").unwrap();

        let m = map_cwes_to_types(&["CWE-79"], &t);
        let mut expected = TypeVector::zeros();
        expected.set(xss, true);
        assert_eq!(m.types, expected);

        let empty: [&str; 0] = [];
        assert_eq!(map_cwes_to_types(&empty, &t).types, TypeVector::zeros());

        let m = map_cwes_to_types(&["CWE-79", "CWE-89", "CWE-79"], &t);
        expected.set(sqli, true);
        assert_eq!(m.types, expected);
        assert!(m.unmapped.is_empty());

        let m = map_cwes_to_types(&["CWE-9999", "CWE-22"], &t);
        assert_eq!(m.unmapped, vec!["CWE-9999".to_string()]);
        assert_eq!(m.types.count_ones(), 1);
    }

    #[test]
    fn invalid_taxonomies_rejected() {
        let names: Vec<String> = (0..9).map(|i| format!("t{i}")).collect();
        assert!(TypeTaxonomy::new(names, BTreeMap::new()).is_err());
        let mut names: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        assert!(TypeTaxonomy::new(names.clone(), [("CWE-1".to_string(), 10)].into()).is_err());
        names[3] = "t0".into();
        assert!(TypeTaxonomy::new(names, BTreeMap::new()).is_err());
    }

    #[test]
    fn taxonomy_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("taxonomy.json");
        let names: Vec<String> = (0..10).map(|i| format!("T{i}")).collect();
        let json = serde_json::json!({"names": names, "cwe_map": {"CWE-79": 3}});
        std::fs::write(&path, json.to_string()).unwrap();
        let t = TypeTaxonomy::from_json_file(&path).unwrap();
        assert_eq!(t.lookup("CWE-79"), Some(3));
        assert_eq!(t.names()[0], "T0");

        std::fs::write(&path, r#"{"names": ["a"], "cwe_map": {}}"#).unwrap();
        assert!(TypeTaxonomy::from_json_file(&path).is_err());
    }

    #[test]
    fn type_vector_serde() {
        let mut v = TypeVector::zeros();
        v.set(2, true);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[0,0,1,0,0,0,0,0,0,0]");
        assert_eq!(serde_json::from_str::<TypeVector>(&s).unwrap(), v);
        assert!(serde_json::from_str::<TypeVector>("[0,1]").is_err());
        assert!(serde_json::from_str::<TypeVector>("[0,0,2,0,0,0,0,0,0,0]").is_err());
        assert!(serde_json::from_str::<SeverityIndex>("4").is_err());
    }

    fn cwe_list() -> impl Strategy<Value = Vec<String>> {
        let pool: Vec<String> = [
            79, 89, 22, 119, 787, 94, 400, 352, 269, 200, 1021, 20, 284, 401, 863,
        ]
        .iter()
        .map(|n| format!("CWE-{n}"))
        .collect();
        prop::collection::vec(prop::sample::select(pool), 0..8)
    }

    proptest! {
        #[test]
        fn mapping_is_union_homomorphism(a in cwe_list(), b in cwe_list()) {
            let t = default_taxonomy();
            let joined: Vec<String> = a.iter().chain(b.iter()).cloned().collect();
            let lhs = map_cwes_to_types(&joined, &t).types;
            let rhs = map_cwes_to_types(&a, &t).types.union(&map_cwes_to_types(&b, &t).types);
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(lhs.bits().len(), NUM_TYPES);
        }
    }
}
