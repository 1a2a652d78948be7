//! Vulnerability report classifier.
//!
//! Ingests NVD JSON 1.1 feeds, fine-tunes a dual-head transformer that
//! predicts CVSS v3 severity (4 classes, single label) and vulnerability
//! type (10 classes, multi label) from description text, evaluates it, and
//! serves predictions over HTTP.

pub mod classify;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod plot;
pub mod service;
pub mod taxonomy;
pub mod tokenize;
pub mod train;

pub use error::{Error, Result};
