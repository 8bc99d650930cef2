use crate::error::{DicrError, Result};

/// Widths of the conversation model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverseConfig {
    pub word_dim: usize,
    /// Hidden width of one encoder direction; encodings are twice as wide.
    pub hidden: usize,
    pub layers: usize,
    pub attn_dim: usize,
    pub dec_hidden: usize,
    pub mlp_hidden: usize,
    /// Context tokens kept (the most recent ones); also the padded width of
    /// the context attention fed to the fusion gate.
    pub max_context: usize,
    pub max_response: usize,
}

impl Default for ConverseConfig {
    fn default() -> Self {
        ConverseConfig {
            word_dim: 300,
            hidden: 400,
            layers: 2,
            attn_dim: 400,
            dec_hidden: 800,
            mlp_hidden: 800,
            max_context: 256,
            max_response: 30,
        }
    }
}

impl ConverseConfig {
    /// Small widths for the synthetic world.
    pub fn toy() -> Self {
        ConverseConfig {
            word_dim: 32,
            hidden: 32,
            layers: 1,
            attn_dim: 32,
            dec_hidden: 64,
            mlp_hidden: 64,
            max_context: 64,
            max_response: 24,
        }
    }

    pub fn enc_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("attn_dim", self.attn_dim),
            ("dec_hidden", self.dec_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("max_context", self.max_context),
            ("max_response", self.max_response),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(DicrError::config(format!(
                    "converse {name} must be positive"
                )));
            }
        }
        Ok(())
    }
}
