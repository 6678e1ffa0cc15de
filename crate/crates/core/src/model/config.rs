//! Model sizes and modes.

use crate::grammar::InstantiationConfig;
use crate::lattice::LatticeConfig;

/// How a slot's representation is pooled from the question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionMode {
    /// Expected span alignment from the lattice marginals.
    Structured,
    /// Independent dot-product attention over all tokens.
    Standard,
}

impl AttentionMode {
    pub fn name(self) -> &'static str {
        match self {
            AttentionMode::Structured => "structured",
            AttentionMode::Standard => "standard",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "structured" => Some(AttentionMode::Structured),
            "standard" => Some(AttentionMode::Standard),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Trainable input embedding size.
    pub word_dim: usize,
    /// Linear projection applied to word embeddings.
    pub proj_dim: usize,
    /// In-table, column-type and column-indicator embedding sizes.
    pub feature_dim: usize,
    /// 0 disables the POS input.
    pub pos_dim: usize,
    pub rule_dim: usize,
    pub op_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub ap_hidden: usize,
    pub mlp_hidden: usize,
    pub enc_dropout: f64,
    pub ap_dropout: f64,
    pub mlp_dropout: f64,
    pub attention_mode: AttentionMode,
    pub beam: usize,
    pub max_decode_len: usize,
    pub instantiation: InstantiationConfig,
    pub lattice: LatticeConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale sizes.
    fn default() -> Self {
        Self {
            word_dim: 64,
            proj_dim: 64,
            feature_dim: 16,
            pos_dim: 0,
            rule_dim: 64,
            op_dim: 16,
            enc_hidden: 64,
            dec_hidden: 64,
            ap_hidden: 64,
            mlp_hidden: 128,
            enc_dropout: 0.2,
            ap_dropout: 0.2,
            mlp_dropout: 0.2,
            attention_mode: AttentionMode::Structured,
            beam: 6,
            max_decode_len: 20,
            instantiation: InstantiationConfig::default(),
            lattice: LatticeConfig::default(),
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Every size 4 and no dropout; used for gradient checks.
    pub fn micro() -> Self {
        Self {
            word_dim: 4,
            proj_dim: 4,
            feature_dim: 4,
            pos_dim: 0,
            rule_dim: 4,
            op_dim: 4,
            enc_hidden: 4,
            dec_hidden: 4,
            ap_hidden: 4,
            mlp_hidden: 4,
            enc_dropout: 0.0,
            ap_dropout: 0.0,
            mlp_dropout: 0.0,
            ..Self::default()
        }
    }

    /// Full-scale WikiTableQuestions sizes (POS on, OR filters).
    pub fn wtq_like() -> Self {
        Self {
            word_dim: 300,
            proj_dim: 256,
            feature_dim: 16,
            pos_dim: 64,
            rule_dim: 436,
            op_dim: 128,
            enc_hidden: 256,
            dec_hidden: 218,
            ap_hidden: 218,
            mlp_hidden: 436,
            enc_dropout: 0.45,
            ap_dropout: 0.25,
            mlp_dropout: 0.25,
            instantiation: InstantiationConfig { max_conditions: 2, enable_and: false, enable_or: true },
            ..Self::default()
        }
    }

    /// Full-scale WikiSQL sizes (no POS, AND filters).
    pub fn wsq_like() -> Self {
        Self {
            word_dim: 300,
            proj_dim: 256,
            feature_dim: 16,
            pos_dim: 0,
            rule_dim: 328,
            op_dim: 128,
            enc_hidden: 256,
            dec_hidden: 164,
            ap_hidden: 164,
            mlp_hidden: 328,
            enc_dropout: 0.35,
            ap_dropout: 0.25,
            mlp_dropout: 0.2,
            instantiation: InstantiationConfig { max_conditions: 2, enable_and: true, enable_or: false },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sizes = [
            ("word_dim", self.word_dim),
            ("proj_dim", self.proj_dim),
            ("feature_dim", self.feature_dim),
            ("rule_dim", self.rule_dim),
            ("op_dim", self.op_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("ap_hidden", self.ap_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("beam", self.beam),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        for (name, p) in [("enc_dropout", self.enc_dropout), ("ap_dropout", self.ap_dropout), ("mlp_dropout", self.mlp_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1), got {p}"));
            }
        }
        Ok(())
    }

    /// Size of a contextual token representation.
    pub fn token_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn slot_dim(&self) -> usize {
        2 * self.ap_hidden
    }

    pub fn column_dim(&self) -> usize {
        self.proj_dim + 2 * self.feature_dim
    }

    pub fn condition_dim(&self) -> usize {
        self.column_dim() + self.op_dim + self.token_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_presets() {
        let d = ModelConfig::default();
        assert_eq!(d.beam, 6);
        assert!(d.validate().is_ok());
        let w = ModelConfig::wtq_like();
        assert_eq!((w.enc_hidden, w.dec_hidden, w.mlp_hidden, w.enc_dropout), (256, 218, 436, 0.45));
        let s = ModelConfig::wsq_like();
        assert_eq!((s.dec_hidden, s.mlp_hidden, s.enc_dropout, s.pos_dim), (164, 328, 0.35, 0));
        assert!(ModelConfig { mlp_dropout: 1.0, ..d.clone() }.validate().is_err());
        assert!(ModelConfig { enc_hidden: 0, ..d }.validate().is_err());
    }
}
