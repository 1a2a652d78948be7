//! WordPiece tokenization compatible with BERT-style `vocab.txt` assets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tokenizers::models::wordpiece::{WordPiece, WordPieceTrainerBuilder};
use tokenizers::normalizers::bert::BertNormalizer;
use tokenizers::pre_tokenizers::bert::BertPreTokenizer;
use tokenizers::models::bpe::Vocab;
use tokenizers::models::TrainerWrapper;
use tokenizers::{AddedToken, Model, Tokenizer};

use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 128;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
const SPECIAL_TOKENS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const VOCAB_FILE: &str = "vocab.txt";
const TOKENIZER_CONFIG_FILE: &str = "tokenizer_config.json";

/// Fixed-length encoder input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub segment_ids: Vec<u8>,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Number of real (non-padding) positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().map(|m| *m as usize).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TokenizerConfig {
    #[serde(default = "yes")]
    do_lower_case: bool,
}

fn yes() -> bool {
    true
}

/// A loaded vocabulary plus the special-token ids the encoder expects.
#[derive(Clone)]
pub struct TokenizerAssets {
    tokenizer: Tokenizer,
    vocab: Vec<String>,
    lowercase: bool,
    cls_id: u32,
    sep_id: u32,
    pad_id: u32,
}

impl std::fmt::Debug for TokenizerAssets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenizerAssets")
            .field("vocab_size", &self.vocab.len())
            .field("lowercase", &self.lowercase)
            .finish()
    }
}

impl TokenizerAssets {
    pub fn from_vocab(vocab: Vec<String>, lowercase: bool) -> Result<Self> {
        let map: Vocab = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if map.len() != vocab.len() {
            return Err(Error::Asset("vocabulary contains duplicate tokens".into()));
        }
        let id = |tok: &str| {
            map.get(tok)
                .copied()
                .ok_or_else(|| Error::Asset(format!("vocabulary lacks special token {tok}")))
        };
        let (cls_id, sep_id, pad_id) = (id(CLS)?, id(SEP)?, id(PAD)?);
        id(UNK)?;
        let model = WordPiece::builder()
            .vocab(map.clone())
            .unk_token(UNK.to_string())
            .build()
            .map_err(|e| Error::Asset(e.to_string()))?;
        let mut tokenizer = Tokenizer::new(model);
        bert_pipeline(&mut tokenizer, lowercase);
        Ok(TokenizerAssets {
            tokenizer,
            vocab,
            lowercase,
            cls_id,
            sep_id,
            pad_id,
        })
    }

    /// Loads `vocab.txt` (and `tokenizer_config.json` if present) from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let vocab_path = dir.join(VOCAB_FILE);
        let text = std::fs::read_to_string(&vocab_path)
            .map_err(|e| Error::Asset(format!("{}: {e}", vocab_path.display())))?;
        let vocab: Vec<String> = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
        let config_path = dir.join(TOKENIZER_CONFIG_FILE);
        let lowercase = match std::fs::read(&config_path) {
            Ok(bytes) => serde_json::from_slice::<TokenizerConfig>(&bytes)?.do_lower_case,
            Err(_) => true,
        };
        TokenizerAssets::from_vocab(vocab, lowercase)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut text = self.vocab.join("\n");
        text.push('\n');
        let path = dir.join(VOCAB_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(TOKENIZER_CONFIG_FILE);
        let config = TokenizerConfig {
            do_lower_case: self.lowercase,
        };
        std::fs::write(&path, serde_json::to_vec_pretty(&config)?).map_err(|e| Error::io(&path, e))
    }

    /// Learns a WordPiece vocabulary of at most `vocab_size` entries from `texts`.
    pub fn train<I, S>(texts: I, vocab_size: usize) -> Result<Self>
    where
        I: Iterator<Item = S> + Send,
        S: AsRef<str> + Send,
    {
        let seed_vocab: Vocab = SPECIAL_TOKENS
            .iter()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i as u32))
            .collect();
        let model = WordPiece::builder()
            .vocab(seed_vocab)
            .unk_token(UNK.to_string())
            .build()
            .map_err(|e| Error::Asset(e.to_string()))?;
        let mut tokenizer = Tokenizer::new(model);
        bert_pipeline(&mut tokenizer, true);
        let trainer = WordPieceTrainerBuilder::new()
            .vocab_size(vocab_size)
            .min_frequency(1)
            .show_progress(false)
            .special_tokens(
                SPECIAL_TOKENS
                    .iter()
                    .map(|t| AddedToken::from(t.to_string(), true))
                    .collect(),
            )
            .build();
        let mut trainer = TrainerWrapper::from(trainer);
        tokenizer
            .train(&mut trainer, texts)
            .map_err(|e| Error::Asset(format!("vocabulary training failed: {e}")))?;
        let mut pairs: Vec<(String, u32)> = tokenizer.get_model().get_vocab().into_iter().collect();
        pairs.sort_by_key(|(_, id)| *id);
        TokenizerAssets::from_vocab(pairs.into_iter().map(|(t, _)| t).collect(), true)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    /// Subword ids of `text` without special tokens.
    pub fn subword_ids(&self, text: &str) -> Result<Vec<u32>> {
        let encoding = self
            .tokenizer
            .encode(text, false)
            .map_err(|e| Error::Asset(format!("tokenizer failure: {e}")))?;
        Ok(encoding.get_ids().to_vec())
    }

    /// `[CLS] subwords... [SEP]`, truncated to `max_len` and right-padded.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<TokenizedInput> {
        if max_len < 2 {
            return Err(Error::InvalidConfig(format!("max_len must be >= 2, got {max_len}")));
        }
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let subwords = self.subword_ids(text)?;
        let body = subwords.len().min(max_len - 2);
        let mut input_ids = Vec::with_capacity(max_len);
        input_ids.push(self.cls_id);
        input_ids.extend_from_slice(&subwords[..body]);
        input_ids.push(self.sep_id);
        let real = input_ids.len();
        input_ids.resize(max_len, self.pad_id);
        let mut attention_mask = vec![1u8; real];
        attention_mask.resize(max_len, 0);
        Ok(TokenizedInput {
            input_ids,
            attention_mask,
            segment_ids: vec![0; max_len],
        })
    }
}

pub fn tokenize(description: &str, max_len: usize, assets: &TokenizerAssets) -> Result<TokenizedInput> {
    assets.tokenize(description, max_len)
}

fn bert_pipeline(tokenizer: &mut Tokenizer, lowercase: bool) {
    tokenizer.with_normalizer(Some(BertNormalizer::new(true, true, None, lowercase)));
    tokenizer.with_pre_tokenizer(Some(BertPreTokenizer));
}
