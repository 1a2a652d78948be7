//! BERT-style bidirectional transformer encoder.
//!
//! Parameter names follow the Hugging Face `BertModel` layout
//! (`embeddings.word_embeddings.weight`, `encoder.layer.0.attention.self.query.weight`, ...)
//! so published checkpoints converted to safetensors load directly.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{Embedding, Linear, VarBuilder};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Subset of a Hugging Face `config.json` for BERT encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_dropout")]
    pub hidden_dropout_prob: f64,
    #[serde(default = "default_dropout")]
    pub attention_probs_dropout_prob: f64,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    #[serde(default = "default_model_type")]
    pub model_type: String,
}

fn default_type_vocab() -> usize {
    2
}
fn default_eps() -> f64 {
    1e-12
}
fn default_dropout() -> f64 {
    0.1
}
fn default_act() -> String {
    "gelu".into()
}
fn default_model_type() -> String {
    "bert".into()
}

impl EncoderConfig {
    /// bert-base-uncased geometry.
    pub fn bert_base() -> Self {
        EncoderConfig {
            vocab_size: 30522,
            hidden_size: 768,
            num_hidden_layers: 12,
            num_attention_heads: 12,
            intermediate_size: 3072,
            max_position_embeddings: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            hidden_dropout_prob: 0.1,
            attention_probs_dropout_prob: 0.1,
            hidden_act: default_act(),
            model_type: default_model_type(),
        }
    }

    /// Two layers, hidden size 128: small enough for CPU tests.
    pub fn miniature(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_size: 128,
            num_hidden_layers: 2,
            num_attention_heads: 2,
            intermediate_size: 512,
            max_position_embeddings: 512,
            ..EncoderConfig::bert_base()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_attention_heads == 0 || self.hidden_size % self.num_attention_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "hidden_size {} is not divisible by {} attention heads",
                self.hidden_size, self.num_attention_heads
            )));
        }
        for p in [self.hidden_dropout_prob, self.attention_probs_dropout_prob] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("dropout probability {p} outside [0, 1)")));
            }
        }
        if !matches!(self.hidden_act.as_str(), "gelu" | "gelu_new" | "relu") {
            return Err(Error::InvalidConfig(format!("unsupported activation {}", self.hidden_act)));
        }
        Ok(())
    }
}

/// Forward mode; training mode draws dropout masks from a caller-owned seeded RNG.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn dropout(&mut self, x: &Tensor, p: f64) -> Result<Tensor> {
        match self {
            Mode::Eval => Ok(x.clone()),
            Mode::Train(_) if p == 0.0 => Ok(x.clone()),
            Mode::Train(rng) => {
                let scale = (1.0 / (1.0 - p)) as f32;
                let mask: Vec<f32> = (0..x.elem_count())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
                    .collect();
                let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
                Ok(x.mul(&mask)?)
            }
        }
    }
}

/// Layer normalisation over the last dimension, written with differentiable primitives.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(size: usize, eps: f64, vb: VarBuilder) -> Result<Self> {
        Ok(LayerNorm {
            weight: vb.get_with_hints(size, "weight", candle_nn::Init::Const(1.0))?,
            bias: vb.get_with_hints(size, "bias", candle_nn::Init::Const(0.0))?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

struct Embeddings {
    word: Embedding,
    position: Embedding,
    token_type: Embedding,
    norm: LayerNorm,
    dropout: f64,
}

impl Embeddings {
    fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        Ok(Embeddings {
            word: candle_nn::embedding(cfg.vocab_size, cfg.hidden_size, vb.pp("word_embeddings"))?,
            position: candle_nn::embedding(
                cfg.max_position_embeddings,
                cfg.hidden_size,
                vb.pp("position_embeddings"),
            )?,
            token_type: candle_nn::embedding(
                cfg.type_vocab_size,
                cfg.hidden_size,
                vb.pp("token_type_embeddings"),
            )?,
            norm: LayerNorm::new(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("LayerNorm"))?,
            dropout: cfg.hidden_dropout_prob,
        })
    }

    fn forward(&self, input_ids: &Tensor, segment_ids: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        let (_, seq_len) = input_ids.dims2()?;
        let positions = Tensor::arange(0u32, seq_len as u32, input_ids.device())?.unsqueeze(0)?;
        let x = self
            .word
            .forward(input_ids)?
            .broadcast_add(&self.position.forward(&positions)?)?
            .add(&self.token_type.forward(segment_ids)?)?;
        let x = self.norm.forward(&x)?;
        mode.dropout(&x, self.dropout)
    }
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
    heads: usize,
    head_dim: usize,
    hidden_dropout: f64,
    attn_dropout: f64,
    act: String,
}

impl Layer {
    fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        let h = cfg.hidden_size;
        let attn = vb.pp("attention");
        let selfattn = attn.pp("self");
        Ok(Layer {
            query: candle_nn::linear(h, h, selfattn.pp("query"))?,
            key: candle_nn::linear(h, h, selfattn.pp("key"))?,
            value: candle_nn::linear(h, h, selfattn.pp("value"))?,
            attn_out: candle_nn::linear(h, h, attn.pp("output").pp("dense"))?,
            attn_norm: LayerNorm::new(h, cfg.layer_norm_eps, attn.pp("output").pp("LayerNorm"))?,
            intermediate: candle_nn::linear(h, cfg.intermediate_size, vb.pp("intermediate").pp("dense"))?,
            output: candle_nn::linear(cfg.intermediate_size, h, vb.pp("output").pp("dense"))?,
            out_norm: LayerNorm::new(h, cfg.layer_norm_eps, vb.pp("output").pp("LayerNorm"))?,
            heads: cfg.num_attention_heads,
            head_dim: h / cfg.num_attention_heads,
            hidden_dropout: cfg.hidden_dropout_prob,
            attn_dropout: cfg.attention_probs_dropout_prob,
            act: cfg.hidden_act.clone(),
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, s, _) = x.dims3()?;
        Ok(x.reshape((b, s, self.heads, self.head_dim))?.transpose(1, 2)?.contiguous()?)
    }

    fn forward(&self, x: &Tensor, mask_bias: &Tensor, mode: &mut Mode) -> Result<Tensor> {
        let (b, s, h) = x.dims3()?;
        let q = self.split_heads(&self.query.forward(x)?)?;
        let k = self.split_heads(&self.key.forward(x)?)?;
        let v = self.split_heads(&self.value.forward(x)?)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? / (self.head_dim as f64).sqrt())?;
        let scores = scores.broadcast_add(mask_bias)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let probs = mode.dropout(&probs, self.attn_dropout)?;
        let context = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, s, h))?;
        let attn = mode.dropout(&self.attn_out.forward(&context)?, self.hidden_dropout)?;
        let x = self.attn_norm.forward(&(attn + x)?)?;

        let inner = self.intermediate.forward(&x)?;
        let inner = match self.act.as_str() {
            "relu" => inner.relu()?,
            "gelu_new" => inner.gelu()?,
            _ => inner.gelu_erf()?,
        };
        let out = mode.dropout(&self.output.forward(&inner)?, self.hidden_dropout)?;
        self.out_norm.forward(&(out + x)?)
    }
}

pub struct BertEncoder {
    embeddings: Embeddings,
    layers: Vec<Layer>,
    config: EncoderConfig,
}

impl BertEncoder {
    pub fn new(config: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        config.validate()?;
        let embeddings = Embeddings::new(config, vb.pp("embeddings"))?;
        let layers = (0..config.num_hidden_layers)
            .map(|i| Layer::new(config, vb.pp("encoder").pp("layer").pp(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BertEncoder {
            embeddings,
            layers,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Final-layer hidden states, shape `(batch, seq, hidden)`.
    pub fn forward(
        &self,
        input_ids: &Tensor,
        attention_mask: &Tensor,
        segment_ids: &Tensor,
        mode: &mut Mode,
    ) -> Result<Tensor> {
        let (_, seq_len) = input_ids.dims2()?;
        if seq_len > self.config.max_position_embeddings {
            return Err(Error::Shape(format!(
                "sequence length {seq_len} exceeds {} positions",
                self.config.max_position_embeddings
            )));
        }
        let dtype = self.embeddings.norm.weight.dtype();
        // (batch, 1, 1, seq): 0 on real tokens, large negative on padding.
        let mask_bias = ((attention_mask.to_dtype(dtype)?.affine(1.0, -1.0)?) * 1e4)?
            .unsqueeze(1)?
            .unsqueeze(1)?;
        let mut x = self.embeddings.forward(input_ids, segment_ids, mode)?;
        for layer in &self.layers {
            x = layer.forward(&x, &mask_bias, mode)?;
        }
        Ok(x)
    }
}

/// Packs equal-length inputs into `(batch, seq)` id, mask and segment tensors.
pub fn batch_tensors(
    batch: &[&crate::tokenize::TokenizedInput],
    device: &Device,
) -> Result<(Tensor, Tensor, Tensor)> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Shape("empty batch".into()))?;
    let seq = first.len();
    if seq == 0 {
        return Err(Error::Shape("zero-length input".into()));
    }
    let mut ids = Vec::with_capacity(batch.len() * seq);
    let mut mask = Vec::with_capacity(batch.len() * seq);
    let mut seg = Vec::with_capacity(batch.len() * seq);
    for t in batch {
        if t.input_ids.len() != seq || t.attention_mask.len() != seq || t.segment_ids.len() != seq {
            return Err(Error::Shape(format!(
                "inconsistent sequence lengths in batch: expected {seq}"
            )));
        }
        ids.extend_from_slice(&t.input_ids);
        mask.extend(t.attention_mask.iter().map(|m| *m as u32));
        seg.extend(t.segment_ids.iter().map(|s| *s as u32));
    }
    let shape = (batch.len(), seq);
    Ok((
        Tensor::from_vec(ids, shape, device)?,
        Tensor::from_vec(mask, shape, device)?.to_dtype(DType::U32)?,
        Tensor::from_vec(seg, shape, device)?,
    ))
}
