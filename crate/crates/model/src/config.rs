//! Run configuration. Keys follow the hyper-parameter table of the reference
//! setup; every field has a default so partial JSON files are accepted.

use serde::{Deserialize, Serialize};

use scg_core::Variant;

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApeMode {
    #[default]
    Off,
    All,
    Token,
}

impl std::str::FromStr for ApeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(ApeMode::Off),
            "all" => Ok(ApeMode::All),
            "token" => Ok(ApeMode::Token),
            other => Err(format!("unknown APE mode {other:?} (expected off, all or token)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub num_layers: usize,
    /// Decoder depth; `None` uses `num_layers`.
    pub decoder_layers: Option<usize>,
    pub attention_heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_model: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub optimizer: Optimizer,
    pub initial_learning_rate: f64,
    /// Multiplicative learning-rate decay applied at every epoch boundary.
    pub decay_rate: f64,
    pub max_epochs: usize,
    pub early_stop_epochs: usize,
    pub batch_size: usize,
    pub beam_size: usize,
    pub max_src_vocab: usize,
    pub max_tgt_vocab: usize,
    pub max_code_len: usize,
    pub max_summary_len: usize,

    pub variant: Variant,
    pub ape: ApeMode,
    pub max_positions: usize,
    pub two_hop: bool,
    pub layer_norm: bool,
    pub length_normalization: bool,
    pub grad_clip: Option<f64>,
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            num_layers: 6,
            decoder_layers: None,
            attention_heads: 8,
            d_k: 64,
            d_v: 64,
            d_model: 512,
            ffn_hidden: 2048,
            dropout: 0.2,
            optimizer: Optimizer::Adam,
            initial_learning_rate: 1e-4,
            decay_rate: 0.99,
            max_epochs: 200,
            early_stop_epochs: 20,
            batch_size: 30,
            beam_size: 4,
            max_src_vocab: 50_000,
            max_tgt_vocab: 30_000,
            max_code_len: 150,
            max_summary_len: 50,
            variant: Variant::Standard,
            ape: ApeMode::Off,
            max_positions: 512,
            two_hop: false,
            layer_norm: true,
            length_normalization: false,
            grad_clip: None,
            max_steps: None,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl Config {
    /// A small model for tests and desk-scale runs: `d_model` split over two
    /// heads, feed-forward width `2 * d_model`.
    pub fn tiny(d_model: usize, layers: usize) -> Config {
        Config {
            num_layers: layers,
            attention_heads: 2,
            d_k: d_model / 2,
            d_v: d_model / 2,
            d_model,
            ffn_hidden: 2 * d_model,
            max_positions: 256,
            ..Config::default()
        }
    }

    pub fn decoder_depth(&self) -> usize {
        self.decoder_layers.unwrap_or(self.num_layers)
    }

    pub fn from_json(text: &str) -> Result<Config, ModelError> {
        let c: Config = serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("num_layers", self.num_layers),
            ("attention_heads", self.attention_heads),
            ("d_k", self.d_k),
            ("d_v", self.d_v),
            ("d_model", self.d_model),
            ("ffn_hidden", self.ffn_hidden),
            ("max_epochs", self.max_epochs),
            ("batch_size", self.batch_size),
            ("beam_size", self.beam_size),
            ("max_src_vocab", self.max_src_vocab),
            ("max_tgt_vocab", self.max_tgt_vocab),
            ("max_code_len", self.max_code_len),
            ("max_summary_len", self.max_summary_len),
            ("max_positions", self.max_positions),
            ("decoder_layers", self.decoder_depth()),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.param_count_f64() > (1u64 << 52) as f64 {
            return Err(ModelError::Config("model dimensions are too large".into()));
        }
        if self.early_stop_epochs > self.max_epochs {
            return Err(ModelError::Config("early_stop_epochs exceeds max_epochs".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config("dropout must lie in [0, 1)".into()));
        }
        let rates = [
            ("initial_learning_rate", self.initial_learning_rate),
            ("decay_rate", self.decay_rate),
            ("adam_eps", self.adam_eps),
        ];
        if let Some((name, _)) = rates.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(ModelError::Config(format!("{name} must be a positive number")));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(ModelError::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.grad_clip.is_some_and(|c| !(c.is_finite() && c > 0.0)) {
            return Err(ModelError::Config("grad_clip must be positive".into()));
        }
        if self.max_steps == Some(0) {
            return Err(ModelError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate used during epoch `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.initial_learning_rate * self.decay_rate.powi(epoch as i32)
    }

    /// Parameters of the encoder and decoder stacks, excluding every
    /// embedding table (token, AST type, target, positional) and the
    /// vocabulary projection.
    fn param_count_f64(&self) -> f64 {
        let [d, heads, dk, dv, ff] = [self.d_model, self.attention_heads, self.d_k, self.d_v, self.ffn_hidden].map(|x| x as f64);
        let mha = d * heads * (2.0 * dk + dv) + heads * dv * d;
        let block = 2.0 * mha + 2.0 * d * ff + ff + 7.0 * d;
        (self.num_layers as f64 + self.decoder_depth() as f64) * block
    }

    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let mha = d * self.attention_heads * (2 * self.d_k + self.d_v) + self.attention_heads * self.d_v * d;
        let ffn = 2 * d * self.ffn_hidden + self.ffn_hidden + d;
        let ln = if self.layer_norm { 2 * d } else { 0 };
        let hops = if self.two_hop { 2 } else { 1 };
        let encoder_block = hops * mha + ffn + 2 * ln;
        let decoder_layer = 2 * mha + ffn + 3 * ln;
        self.num_layers * encoder_block + self.decoder_depth() * decoder_layer
    }
}
