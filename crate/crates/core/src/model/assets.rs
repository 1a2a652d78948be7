//! Generation of encoder asset directories (vocabulary + seeded random weights).
//!
//! A Hugging Face BERT directory (`config.json`, `vocab.txt`, `model.safetensors`)
//! is consumed as-is; these helpers produce the same layout for a miniature
//! encoder when no published checkpoint is available.

use std::path::Path;

use candle_core::{DType, Device};
use candle_nn::{VarBuilder, VarMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoder::{BertEncoder, EncoderConfig};
use super::{init_var, sorted_vars, CONFIG_FILE, WEIGHTS_FILE};
use crate::tokenize::TokenizerAssets;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EncoderAssetsSpec {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for EncoderAssetsSpec {
    fn default() -> Self {
        let mini = EncoderConfig::miniature(8000);
        EncoderAssetsSpec {
            vocab_size: mini.vocab_size,
            hidden_size: mini.hidden_size,
            num_layers: mini.num_hidden_layers,
            num_heads: mini.num_attention_heads,
            intermediate_size: mini.intermediate_size,
            max_positions: mini.max_position_embeddings,
            dropout: mini.hidden_dropout_prob,
            seed: 42,
        }
    }
}

pub(crate) fn write_random_encoder(
    dir: &Path,
    config: &EncoderConfig,
    tokenizer: &TokenizerAssets,
    seed: u64,
) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vars = VarMap::new();
    let vb = VarBuilder::from_varmap(&vars, DType::F32, &Device::Cpu);
    BertEncoder::new(config, vb)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, var) in sorted_vars(&vars) {
        init_var(&name, &var, &mut rng)?;
    }
    vars.save(dir.join(WEIGHTS_FILE))?;
    tokenizer.save(dir)?;
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(config)?).map_err(|e| Error::io(&path, e))
}

/// Learns a WordPiece vocabulary from `texts` and writes a seeded, randomly
/// initialised encoder of the requested geometry to `dir`.
pub fn init_encoder_assets<I, S>(texts: I, spec: &EncoderAssetsSpec, dir: &Path) -> Result<EncoderConfig>
where
    I: Iterator<Item = S> + Send,
    S: AsRef<str> + Send,
{
    let tokenizer = TokenizerAssets::train(texts, spec.vocab_size)?;
    let config = EncoderConfig {
        vocab_size: tokenizer.vocab_size(),
        hidden_size: spec.hidden_size,
        num_hidden_layers: spec.num_layers,
        num_attention_heads: spec.num_heads,
        intermediate_size: spec.intermediate_size,
        max_position_embeddings: spec.max_positions,
        hidden_dropout_prob: spec.dropout,
        attention_probs_dropout_prob: spec.dropout,
        ..EncoderConfig::bert_base()
    };
    write_random_encoder(dir, &config, &tokenizer, spec.seed)?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};

    #[test]
    fn generated_assets_load_and_are_seeded() {
        let texts = ["heap buffer overflow in parser", "reflected XSS in search page", "path traversal in upload"];
        let spec = EncoderAssetsSpec {
            vocab_size: 120,
            hidden_size: 16,
            num_layers: 1,
            num_heads: 2,
            intermediate_size: 32,
            max_positions: 64,
            dropout: 0.0,
            seed: 9,
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = init_encoder_assets(texts.iter(), &spec, a.path()).unwrap();
        init_encoder_assets(texts.iter(), &spec, b.path()).unwrap();
        assert_eq!(
            std::fs::read(a.path().join(WEIGHTS_FILE)).unwrap(),
            std::fs::read(b.path().join(WEIGHTS_FILE)).unwrap()
        );
        let model = build_model(&ModelConfig::for_encoder("mini", 16), a.path()).unwrap();
        assert_eq!(model.encoder_config(), &cfg);
        let t = model.tokenize("buffer overflow", 16).unwrap();
        assert_eq!(model.forward(&[t]).unwrap().len(), 1);
    }
}
