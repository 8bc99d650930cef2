//! Flat `key=value` training configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::converse::ConverseConfig;
use crate::error::{DicrError, Result};
use crate::kg::TransEConfig;
use crate::reasoner::{PolicyConfig, RecConfig, RewardTransform, RewardWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Rec,
    Imitation,
    Gen,
    Joint,
    All,
}

impl Stage {
    /// The four trainable stages in schedule order.
    pub const SEQUENCE: [Stage; 4] = [Stage::Rec, Stage::Imitation, Stage::Gen, Stage::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Rec => "rec",
            Stage::Imitation => "imitation",
            Stage::Gen => "gen",
            Stage::Joint => "joint",
            Stage::All => "all",
        }
    }

    /// Stage whose checkpoint must exist before this one runs.
    pub fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Imitation => Some(Stage::Rec),
            Stage::Gen => Some(Stage::Imitation),
            Stage::Joint => Some(Stage::Gen),
            Stage::Rec | Stage::All => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = DicrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rec" => Ok(Stage::Rec),
            "imitation" => Ok(Stage::Imitation),
            "gen" => Ok(Stage::Gen),
            "joint" => Ok(Stage::Joint),
            "all" => Ok(Stage::All),
            other => Err(DicrError::config(format!(
                "unknown stage `{other}` (expected rec, imitation, gen, joint or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub seed: u64,
    pub batch_size: usize,
    /// Reasoner learning rate.
    pub lr: f64,
    pub converse_lr: f64,
    pub clip_norm: f64,

    pub embed_dim: usize,
    pub embed_epochs: usize,
    pub embed_lr: f64,
    pub embed_margin: f64,

    pub rec_epochs: usize,
    pub imitation_epochs: usize,
    pub gen_epochs: usize,
    pub joint_epochs: usize,

    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub reward_transform: RewardTransform,
    pub entropy_weight: f64,
    pub discount: f64,

    /// Candidate paths handed to the generator.
    pub n_paths: usize,
    /// Beam width of the path search (also the ranking depth).
    pub beam_width: usize,
    pub history: usize,
    pub max_len: usize,
    pub cap: usize,
    pub policy_hidden: usize,
    pub disc_hidden: usize,

    pub word_dim: usize,
    pub enc_hidden: usize,
    pub enc_layers: usize,
    pub attn_dim: usize,
    pub dec_hidden: usize,
    pub mlp_hidden: usize,
    pub max_context: usize,
    pub max_response: usize,

    pub context_turns: usize,
    pub min_freq: usize,
    pub split_train: f64,
    pub split_valid: f64,
    pub split_test: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let conv = ConverseConfig::default();
        TrainConfig {
            stage: Stage::All,
            seed: 0,
            batch_size: 32,
            lr: 1e-4,
            converse_lr: 1e-4,
            clip_norm: 5.0,
            embed_dim: 128,
            embed_epochs: 100,
            embed_lr: 0.01,
            embed_margin: 1.0,
            rec_epochs: 20,
            imitation_epochs: 5,
            gen_epochs: 10,
            joint_epochs: 3,
            alpha: 0.006,
            beta: 0.001,
            gamma: 0.006,
            reward_transform: RewardTransform::Logit,
            entropy_weight: 0.01,
            discount: 1.0,
            n_paths: 10,
            beam_width: 25,
            history: 1,
            max_len: 3,
            cap: 250,
            policy_hidden: 512,
            disc_hidden: 256,
            word_dim: conv.word_dim,
            enc_hidden: conv.hidden,
            enc_layers: conv.layers,
            attn_dim: conv.attn_dim,
            dec_hidden: conv.dec_hidden,
            mlp_hidden: conv.mlp_hidden,
            max_context: conv.max_context,
            max_response: conv.max_response,
            context_turns: 5,
            min_freq: 1,
            split_train: 0.7,
            split_valid: 0.15,
            split_test: 0.15,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| DicrError::config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Small dimensions and faster learning rates for the synthetic world.
    pub fn toy() -> Self {
        let conv = ConverseConfig::toy();
        TrainConfig {
            seed: 7,
            lr: 1e-3,
            converse_lr: 3e-3,
            embed_dim: 32,
            rec_epochs: 20,
            imitation_epochs: 2,
            gen_epochs: 8,
            joint_epochs: 2,
            policy_hidden: 64,
            disc_hidden: 32,
            word_dim: conv.word_dim,
            enc_hidden: conv.hidden,
            enc_layers: conv.layers,
            attn_dim: conv.attn_dim,
            dec_hidden: conv.dec_hidden,
            mlp_hidden: conv.mlp_hidden,
            max_context: conv.max_context,
            max_response: conv.max_response,
            ..TrainConfig::default()
        }
    }

    /// Every field as `(key, value)` in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("stage", self.stage.to_string()),
            ("seed", self.seed.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("converse_lr", self.converse_lr.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("embed_epochs", self.embed_epochs.to_string()),
            ("embed_lr", self.embed_lr.to_string()),
            ("embed_margin", self.embed_margin.to_string()),
            ("rec_epochs", self.rec_epochs.to_string()),
            ("imitation_epochs", self.imitation_epochs.to_string()),
            ("gen_epochs", self.gen_epochs.to_string()),
            ("joint_epochs", self.joint_epochs.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            (
                "reward_transform",
                self.reward_transform.as_str().to_string(),
            ),
            ("entropy_weight", self.entropy_weight.to_string()),
            ("discount", self.discount.to_string()),
            ("n_paths", self.n_paths.to_string()),
            ("beam_width", self.beam_width.to_string()),
            ("history", self.history.to_string()),
            ("max_len", self.max_len.to_string()),
            ("cap", self.cap.to_string()),
            ("policy_hidden", self.policy_hidden.to_string()),
            ("disc_hidden", self.disc_hidden.to_string()),
            ("word_dim", self.word_dim.to_string()),
            ("enc_hidden", self.enc_hidden.to_string()),
            ("enc_layers", self.enc_layers.to_string()),
            ("attn_dim", self.attn_dim.to_string()),
            ("dec_hidden", self.dec_hidden.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("max_context", self.max_context.to_string()),
            ("max_response", self.max_response.to_string()),
            ("context_turns", self.context_turns.to_string()),
            ("min_freq", self.min_freq.to_string()),
            ("split_train", self.split_train.to_string()),
            ("split_valid", self.split_valid.to_string()),
            ("split_test", self.split_test.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "stage" => self.stage = v.parse()?,
            "seed" => self.seed = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "converse_lr" => self.converse_lr = parse_value(key, v)?,
            "clip_norm" => self.clip_norm = parse_value(key, v)?,
            "embed_dim" => self.embed_dim = parse_value(key, v)?,
            "embed_epochs" => self.embed_epochs = parse_value(key, v)?,
            "embed_lr" => self.embed_lr = parse_value(key, v)?,
            "embed_margin" => self.embed_margin = parse_value(key, v)?,
            "rec_epochs" => self.rec_epochs = parse_value(key, v)?,
            "imitation_epochs" => self.imitation_epochs = parse_value(key, v)?,
            "gen_epochs" => self.gen_epochs = parse_value(key, v)?,
            "joint_epochs" => self.joint_epochs = parse_value(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "beta" => self.beta = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "reward_transform" => self.reward_transform = RewardTransform::parse(v)?,
            "entropy_weight" => self.entropy_weight = parse_value(key, v)?,
            "discount" => self.discount = parse_value(key, v)?,
            "n_paths" => self.n_paths = parse_value(key, v)?,
            "beam_width" => self.beam_width = parse_value(key, v)?,
            "history" => self.history = parse_value(key, v)?,
            "max_len" => self.max_len = parse_value(key, v)?,
            "cap" => self.cap = parse_value(key, v)?,
            "policy_hidden" => self.policy_hidden = parse_value(key, v)?,
            "disc_hidden" => self.disc_hidden = parse_value(key, v)?,
            "word_dim" => self.word_dim = parse_value(key, v)?,
            "enc_hidden" => self.enc_hidden = parse_value(key, v)?,
            "enc_layers" => self.enc_layers = parse_value(key, v)?,
            "attn_dim" => self.attn_dim = parse_value(key, v)?,
            "dec_hidden" => self.dec_hidden = parse_value(key, v)?,
            "mlp_hidden" => self.mlp_hidden = parse_value(key, v)?,
            "max_context" => self.max_context = parse_value(key, v)?,
            "max_response" => self.max_response = parse_value(key, v)?,
            "context_turns" => self.context_turns = parse_value(key, v)?,
            "min_freq" => self.min_freq = parse_value(key, v)?,
            "split_train" => self.split_train = parse_value(key, v)?,
            "split_valid" => self.split_valid = parse_value(key, v)?,
            "split_test" => self.split_test = parse_value(key, v)?,
            other => return Err(DicrError::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| DicrError::Parse {
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DicrError::path(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| DicrError::path(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        let counts = [
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("embed_epochs", self.embed_epochs),
            ("rec_epochs", self.rec_epochs),
            ("imitation_epochs", self.imitation_epochs),
            ("gen_epochs", self.gen_epochs),
            ("joint_epochs", self.joint_epochs),
            ("n_paths", self.n_paths),
            ("beam_width", self.beam_width),
            ("history", self.history),
            ("max_len", self.max_len),
            ("cap", self.cap),
            ("policy_hidden", self.policy_hidden),
            ("disc_hidden", self.disc_hidden),
            ("context_turns", self.context_turns),
            ("min_freq", self.min_freq),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(DicrError::config(format!("`{k}` must be positive")));
        }
        if self.beam_width < self.n_paths {
            return Err(DicrError::config(format!(
                "beam_width {} is smaller than n_paths {}",
                self.beam_width, self.n_paths
            )));
        }
        for (k, v) in [
            ("lr", self.lr),
            ("converse_lr", self.converse_lr),
            ("embed_lr", self.embed_lr),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DicrError::config(format!(
                    "`{k}` must be a positive number"
                )));
            }
        }
        self.converse().validate()
    }

    pub fn split_ratios(&self) -> [f64; 3] {
        [self.split_train, self.split_valid, self.split_test]
    }

    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn transe(&self) -> TransEConfig {
        TransEConfig {
            dim: self.embed_dim,
            epochs: self.embed_epochs,
            margin: self.embed_margin,
            lr: self.embed_lr,
            seed: self.seed,
        }
    }

    pub fn policy(&self) -> PolicyConfig {
        PolicyConfig {
            dim: self.embed_dim,
            history: self.history,
            hidden: self.policy_hidden,
            disc_hidden: self.disc_hidden,
        }
    }

    pub fn rec(&self) -> RecConfig {
        RecConfig {
            epochs: self.rec_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            max_len: self.max_len,
            cap: self.cap,
            entropy_weight: self.entropy_weight,
            discount: self.discount,
            weights: self.weights(),
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }

    pub fn converse(&self) -> ConverseConfig {
        ConverseConfig {
            word_dim: self.word_dim,
            hidden: self.enc_hidden,
            layers: self.enc_layers,
            attn_dim: self.attn_dim,
            dec_hidden: self.dec_hidden,
            mlp_hidden: self.mlp_hidden,
            max_context: self.max_context,
            max_response: self.max_response,
        }
    }
}
