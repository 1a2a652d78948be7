//! Dual-head classifier: a BERT encoder whose final-layer `[CLS]` state feeds
//! 4 severity logits and 10 type logits.

mod assets;
pub mod decode;
pub mod encoder;
pub mod loss;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Module, Tensor, Var};
use candle_nn::{Linear, VarBuilder, VarMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use assets::{init_encoder_assets, EncoderAssetsSpec};
pub use decode::{decode, sigmoid, softmax, Prediction};
pub use encoder::{BertEncoder, EncoderConfig, Mode};
pub use loss::{combined_loss, combined_loss_tensor, LossBreakdown};

use crate::taxonomy::{DEFAULT_TYPE_NAMES, NUM_SEVERITIES, NUM_TYPES};
use crate::tokenize::{TokenizedInput, TokenizerAssets};
use crate::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u64 = 1;
pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const DEFAULT_HEAD_SEED: u64 = 42;
const INIT_STD: f64 = 0.02;

/// How the 14 head outputs are produced from the summary embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadLayout {
    /// One `hidden -> 14` projection split 4/10.
    #[default]
    Shared,
    /// Separate `hidden -> 4` and `hidden -> 10` projections.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_name: String,
    pub hidden_size: usize,
    pub num_severity: usize,
    pub num_types: usize,
    pub type_threshold: f64,
    #[serde(default = "default_head_seed")]
    pub head_seed: u64,
    #[serde(default)]
    pub head_layout: HeadLayout,
}

fn default_head_seed() -> u64 {
    DEFAULT_HEAD_SEED
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_name: "bert-base-uncased".into(),
            hidden_size: 768,
            num_severity: NUM_SEVERITIES,
            num_types: NUM_TYPES,
            type_threshold: 0.5,
            head_seed: DEFAULT_HEAD_SEED,
            head_layout: HeadLayout::Shared,
        }
    }
}

impl ModelConfig {
    /// Default config sized for an encoder's hidden width.
    pub fn for_encoder(name: impl Into<String>, hidden_size: usize) -> Self {
        ModelConfig {
            encoder_name: name.into(),
            hidden_size,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_severity != NUM_SEVERITIES || self.num_types != NUM_TYPES {
            return Err(Error::InvalidConfig(format!(
                "heads are fixed at {NUM_SEVERITIES} severities and {NUM_TYPES} types"
            )));
        }
        if !(self.type_threshold > 0.0 && self.type_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "type_threshold must lie in (0, 1), got {}",
                self.type_threshold
            )));
        }
        Ok(())
    }
}

/// One sample's 14 head outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualLogits {
    pub severity_logits: [f64; NUM_SEVERITIES],
    pub type_logits: [f64; NUM_TYPES],
}

impl DualLogits {
    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != NUM_SEVERITIES + NUM_TYPES {
            return Err(Error::Shape(format!("expected 14 logits, got {}", row.len())));
        }
        let mut out = DualLogits {
            severity_logits: [0.0; NUM_SEVERITIES],
            type_logits: [0.0; NUM_TYPES],
        };
        out.severity_logits.copy_from_slice(&row[..NUM_SEVERITIES]);
        out.type_logits.copy_from_slice(&row[NUM_SEVERITIES..]);
        Ok(out)
    }

    pub fn concat(&self) -> Vec<f64> {
        self.severity_logits.iter().chain(self.type_logits.iter()).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.concat().iter().all(|x| x.is_finite())
    }
}

enum Head {
    Shared(Linear),
    Split { severity: Linear, types: Linear },
}

impl Head {
    fn new(layout: HeadLayout, hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(match layout {
            HeadLayout::Shared => Head::Shared(candle_nn::linear(
                hidden,
                NUM_SEVERITIES + NUM_TYPES,
                vb.pp("classifier"),
            )?),
            HeadLayout::Split => Head::Split {
                severity: candle_nn::linear(hidden, NUM_SEVERITIES, vb.pp("severity_head"))?,
                types: candle_nn::linear(hidden, NUM_TYPES, vb.pp("type_head"))?,
            },
        })
    }

    fn forward(&self, summary: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Head::Shared(l) => l.forward(summary)?,
            Head::Split { severity, types } => {
                Tensor::cat(&[severity.forward(summary)?, types.forward(summary)?], 1)?
            }
        })
    }
}

fn is_head_param(name: &str) -> bool {
    ["classifier.", "severity_head.", "type_head."]
        .iter()
        .any(|p| name.starts_with(p))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedConfig {
    schema_version: u64,
    model: ModelConfig,
    encoder: EncoderConfig,
    taxonomy: Vec<String>,
}

pub struct DualHeadModel {
    config: ModelConfig,
    encoder: BertEncoder,
    head: Head,
    vars: VarMap,
    tokenizer: TokenizerAssets,
    type_names: Vec<String>,
    device: Device,
    dtype: DType,
    version: String,
}

impl std::fmt::Debug for DualHeadModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DualHeadModel")
            .field("config", &self.config)
            .field("encoder", self.encoder.config())
            .field("version", &self.version)
            .finish()
    }
}

pub fn read_encoder_config(dir: &Path) -> Result<EncoderConfig> {
    let path = dir.join(CONFIG_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::Asset(format!("{}: {e}", path.display())))?;
    let config: EncoderConfig = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Asset(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Maps checkpoint key spellings onto this crate's names.
fn normalize_key(key: &str) -> String {
    let key = key.strip_prefix("bert.").unwrap_or(key);
    if let Some(stem) = key.strip_suffix(".gamma") {
        format!("{stem}.weight")
    } else if let Some(stem) = key.strip_suffix(".beta") {
        format!("{stem}.bias")
    } else {
        key.to_string()
    }
}

fn sorted_vars(vars: &VarMap) -> Vec<(String, Var)> {
    let data = vars.data().lock().expect("var map lock");
    let mut out: Vec<(String, Var)> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn init_var(name: &str, var: &Var, rng: &mut ChaCha8Rng) -> Result<()> {
    let n = var.elem_count();
    let values: Vec<f64> = if name.ends_with("LayerNorm.weight") {
        vec![1.0; n]
    } else if name.ends_with(".bias") {
        vec![0.0; n]
    } else {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        (0..n).map(|_| normal.sample(rng)).collect()
    };
    let t = Tensor::from_vec(values, var.shape(), var.device())?.to_dtype(var.dtype())?;
    var.set(&t)?;
    Ok(())
}

fn load_tensors(path: &Path, device: &Device) -> Result<HashMap<String, Tensor>> {
    let tensors = candle_core::safetensors::load(path, device)
        .map_err(|e| Error::Asset(format!("{}: {e}", path.display())))?;
    Ok(tensors.into_iter().map(|(k, v)| (normalize_key(&k), v)).collect())
}

fn assign(name: &str, var: &Var, tensors: &HashMap<String, Tensor>) -> Result<()> {
    let t = tensors
        .get(name)
        .ok_or_else(|| Error::Asset(format!("weights lack tensor {name}")))?;
    if t.dims() != var.dims() {
        return Err(Error::Asset(format!(
            "tensor {name} has shape {:?}, expected {:?}",
            t.dims(),
            var.dims()
        )));
    }
    var.set(&t.to_dtype(var.dtype())?)?;
    Ok(())
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

impl DualHeadModel {
    fn skeleton(
        config: ModelConfig,
        encoder_config: &EncoderConfig,
        tokenizer: TokenizerAssets,
        type_names: Vec<String>,
        dtype: DType,
    ) -> Result<Self> {
        config.validate()?;
        if config.hidden_size != encoder_config.hidden_size {
            return Err(Error::Dimension {
                configured: config.hidden_size,
                found: encoder_config.hidden_size,
            });
        }
        if tokenizer.vocab_size() > encoder_config.vocab_size {
            return Err(Error::Asset(format!(
                "tokenizer has {} entries but encoder embeds only {}",
                tokenizer.vocab_size(),
                encoder_config.vocab_size
            )));
        }
        if type_names.len() != NUM_TYPES {
            return Err(Error::InvalidConfig(format!("expected {NUM_TYPES} type names")));
        }
        let device = Device::Cpu;
        let vars = VarMap::new();
        let vb = VarBuilder::from_varmap(&vars, dtype, &device);
        let encoder = BertEncoder::new(encoder_config, vb.clone())?;
        let head = Head::new(config.head_layout, config.hidden_size, vb)?;
        Ok(DualHeadModel {
            config,
            encoder,
            head,
            vars,
            tokenizer,
            type_names,
            device,
            dtype,
            version: "untrained".into(),
        })
    }

    fn init_head(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.head_seed);
        for (name, var) in sorted_vars(&self.vars).iter().filter(|(n, _)| is_head_param(n)) {
            init_var(name, var, &mut rng)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn tokenizer(&self) -> &TokenizerAssets {
        &self.tokenizer
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn set_type_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != NUM_TYPES {
            return Err(Error::InvalidConfig(format!("expected {NUM_TYPES} type names")));
        }
        self.type_names = names;
        Ok(())
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        let mut config = self.config.clone();
        config.type_threshold = threshold;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Short content hash of the weights this model was loaded from.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Every trainable parameter, sorted by name.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        sorted_vars(&self.vars)
    }

    pub fn head_vars(&self) -> Vec<(String, Var)> {
        self.named_vars().into_iter().filter(|(n, _)| is_head_param(n)).collect()
    }

    /// `(batch, 14)` logits as a graph tensor.
    pub fn forward_tensors(
        &self,
        input_ids: &Tensor,
        attention_mask: &Tensor,
        segment_ids: &Tensor,
        mode: &mut Mode,
    ) -> Result<Tensor> {
        let hidden = self.encoder.forward(input_ids, attention_mask, segment_ids, mode)?;
        let summary = hidden.narrow(1, 0, 1)?.squeeze(1)?;
        self.head.forward(&summary)
    }

    pub fn forward_logits(&self, batch: &[&TokenizedInput], mode: &mut Mode) -> Result<Tensor> {
        let (ids, mask, seg) = encoder::batch_tensors(batch, &self.device)?;
        self.forward_tensors(&ids, &mask, &seg, mode)
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, batch: &[TokenizedInput]) -> Result<Vec<DualLogits>> {
        let refs: Vec<&TokenizedInput> = batch.iter().collect();
        self.forward_refs(&refs)
    }

    pub fn forward_refs(&self, batch: &[&TokenizedInput]) -> Result<Vec<DualLogits>> {
        let logits = self.forward_logits(batch, &mut Mode::Eval)?;
        let rows = logits.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        rows.iter().map(|r| DualLogits::from_row(r)).collect()
    }

    /// Tokenizes with this model's vocabulary.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<TokenizedInput> {
        self.tokenizer.tokenize(text, max_len)
    }

    /// Writes weights, config (with taxonomy) and tokenizer assets to `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let weights = dir.join(WEIGHTS_FILE);
        self.vars.save(&weights)?;
        self.tokenizer.save(dir)?;
        let saved = SavedConfig {
            schema_version: MODEL_SCHEMA_VERSION,
            model: self.config.clone(),
            encoder: self.encoder.config().clone(),
            taxonomy: self.type_names.clone(),
        };
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, serde_json::to_vec_pretty(&saved)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        DualHeadModel::load_with_dtype(dir, DType::F32)
    }

    pub fn load_with_dtype(dir: &Path, dtype: DType) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let raw: serde_json::Value = serde_json::from_slice(&bytes)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != MODEL_SCHEMA_VERSION {
            return Err(Error::Version {
                found,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let saved: SavedConfig = serde_json::from_value(raw)?;
        let tokenizer = TokenizerAssets::load(dir)?;
        let mut model = DualHeadModel::skeleton(saved.model, &saved.encoder, tokenizer, saved.taxonomy, dtype)?;
        let weights = dir.join(WEIGHTS_FILE);
        if !weights.is_file() {
            return Err(Error::io(
                &weights,
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing weights"),
            ));
        }
        let tensors = load_tensors(&weights, &model.device)?;
        for (name, var) in model.named_vars() {
            assign(&name, &var, &tensors)?;
        }
        model.version = file_digest(&weights)?;
        Ok(model)
    }
}

/// Pre-trained encoder from `assets` (config.json, vocab.txt, model.safetensors)
/// topped with a freshly initialised head seeded by `config.head_seed`.
pub fn build_model(config: &ModelConfig, assets: &Path) -> Result<DualHeadModel> {
    build_model_with_dtype(config, assets, DType::F32)
}

pub fn build_model_with_dtype(config: &ModelConfig, assets: &Path, dtype: DType) -> Result<DualHeadModel> {
    let encoder_config = read_encoder_config(assets)?;
    let tokenizer = TokenizerAssets::load(assets)?;
    let names = DEFAULT_TYPE_NAMES.iter().map(|s| s.to_string()).collect();
    let model = DualHeadModel::skeleton(config.clone(), &encoder_config, tokenizer, names, dtype)?;
    let weights = assets.join(WEIGHTS_FILE);
    let tensors = load_tensors(&weights, &model.device)?;
    for (name, var) in model.named_vars().iter().filter(|(n, _)| !is_head_param(n)) {
        assign(name, var, &tensors)?;
    }
    model.init_head()?;
    Ok(model)
}

pub fn save_model(model: &DualHeadModel, dir: &Path) -> Result<PathBuf> {
    model.save(dir)
}

pub fn load_model(dir: &Path) -> Result<DualHeadModel> {
    DualHeadModel::load(dir)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::tokenize::tests::tiny_vocab;

    /// Writes a miniature encoder asset directory and returns it.
    pub(crate) fn mini_assets(hidden: usize, dropout: f64) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let vocab = tiny_vocab();
        let mut cfg = EncoderConfig::miniature(vocab.vocab_size());
        cfg.hidden_size = hidden;
        cfg.intermediate_size = hidden * 2;
        cfg.hidden_dropout_prob = dropout;
        cfg.attention_probs_dropout_prob = dropout;
        assets::write_random_encoder(dir.path(), &cfg, &vocab, 5).unwrap();
        dir
    }

    fn batch(a: &TokenizerAssets) -> Vec<TokenizedInput> {
        ["buffer overflow in the kernel", "sql injection", "the", "unsafe kernel", "a buffer"]
            .iter()
            .map(|t| a.tokenize(t, 12).unwrap())
            .collect()
    }

    #[test]
    fn forward_shapes_and_errors() {
        let dir = mini_assets(32, 0.1);
        let model = build_model(&ModelConfig::for_encoder("mini", 32), dir.path()).unwrap();
        let b = batch(model.tokenizer());
        let out = model.forward(&b).unwrap();
        assert_eq!(out.len(), b.len());
        assert!(out.iter().all(|l| l.concat().len() == 14 && l.is_finite()));
        assert!(matches!(model.forward(&[]), Err(Error::Shape(_))));
        let mut bad = b.clone();
        bad[1] = model.tokenize("sql", 8).unwrap();
        assert!(matches!(model.forward(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn hidden_size_mismatch() {
        let dir = mini_assets(32, 0.1);
        let err = build_model(&ModelConfig::for_encoder("mini", 64), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Dimension { configured: 64, found: 32 }));
        let err = build_model(&ModelConfig::for_encoder("mini", 32), &dir.path().join("x")).unwrap_err();
        assert!(matches!(err, Error::Asset(_)));
    }

    #[test]
    fn seeded_head_is_reproducible() {
        let dir = mini_assets(32, 0.1);
        let cfg = ModelConfig::for_encoder("mini", 32);
        let a = build_model(&cfg, dir.path()).unwrap();
        let b = build_model(&cfg, dir.path()).unwrap();
        let c = build_model(&ModelConfig { head_seed: 7, ..cfg }, dir.path()).unwrap();
        let w = |m: &DualHeadModel| m.head_vars()[1].1.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a.head_vars()[1].0, "classifier.weight");
        assert_eq!(w(&a), w(&b));
        assert_ne!(w(&a), w(&c));
    }

    #[test]
    fn batch_independent_inference() {
        let dir = mini_assets(32, 0.1);
        let model = build_model(&ModelConfig::for_encoder("mini", 32), dir.path()).unwrap();
        let b = batch(model.tokenizer());
        let all = model.forward(&b).unwrap();
        for (i, input) in b.iter().enumerate() {
            let one = model.forward(std::slice::from_ref(input)).unwrap();
            for (x, y) in one[0].concat().iter().zip(all[i].concat()) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = mini_assets(32, 0.1);
        let cfg = ModelConfig {
            head_layout: HeadLayout::Split,
            ..ModelConfig::for_encoder("mini", 32)
        };
        let model = build_model(&cfg, dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        model.save(out.path()).unwrap();
        let loaded = load_model(out.path()).unwrap();
        assert_eq!(loaded.config(), model.config());
        assert_eq!(loaded.type_names().len(), 10);
        assert_eq!(loaded.version().len(), 12);
        let b = batch(model.tokenizer());
        for (x, y) in model.forward(&b).unwrap().iter().zip(loaded.forward(&b).unwrap()) {
            for (p, q) in x.concat().iter().zip(y.concat()) {
                assert!((p - q).abs() < 1e-6);
            }
        }
        let saved: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.path().join(CONFIG_FILE)).unwrap()).unwrap();
        assert_eq!(saved["schema_version"], 1);
        assert_eq!(saved["taxonomy"].as_array().unwrap().len(), 10);
    }

    #[test]
    fn load_errors() {
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_model(empty.path()), Err(Error::Io { .. })));
        std::fs::write(empty.path().join(CONFIG_FILE), r#"{"schema_version": 9}"#).unwrap();
        assert!(matches!(load_model(empty.path()), Err(Error::Version { found: 9, expected: 1 })));
    }

    #[test]
    fn checkpoint_key_spellings() {
        assert_eq!(normalize_key("bert.embeddings.LayerNorm.gamma"), "embeddings.LayerNorm.weight");
        assert_eq!(normalize_key("encoder.layer.0.output.LayerNorm.beta"), "encoder.layer.0.output.LayerNorm.bias");
        assert_eq!(normalize_key("classifier.weight"), "classifier.weight");
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        assert!(c.validate().is_ok());
        c.type_threshold = 1.0;
        assert!(c.validate().is_err());
        c.type_threshold = 0.5;
        c.num_types = 9;
        assert!(c.validate().is_err());
    }
}
