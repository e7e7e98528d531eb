use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    /// Window length in samples.
    pub window: usize,
    pub temporal_filters: usize,
    pub ltl_kernel: usize,
    pub gsl_pool: usize,
    pub fusion_filters: Vec<usize>,
    pub fusion_kernel: usize,
    pub fusion_pool: usize,
    pub dropout: f64,
    /// Depths of the pyramid branches; empty disables the pyramid.
    pub hgp_depths: Vec<usize>,
    pub attn_heads: usize,
    pub attn_dim: usize,
    pub joints: usize,
    pub max_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 59,
            window: 243,
            temporal_filters: 25,
            ltl_kernel: 10,
            gsl_pool: 3,
            fusion_filters: vec![50, 100, 200],
            fusion_kernel: 10,
            fusion_pool: 3,
            dropout: 0.5,
            hgp_depths: vec![1, 2],
            attn_heads: 4,
            attn_dim: 50,
            joints: 6,
            max_norm: 0.25,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by the end-to-end gradient check.
    pub fn reduced() -> Self {
        ModelConfig {
            channels: 8,
            window: 81,
            temporal_filters: 4,
            fusion_filters: vec![8, 16, 32],
            attn_heads: 2,
            attn_dim: 16,
            ..Self::default()
        }
    }

    /// Width of the fused embedding entering the attention layer.
    pub fn embed_dim(&self) -> usize {
        *self.fusion_filters.last().unwrap_or(&self.temporal_filters)
    }

    /// Total temporal reduction of the pooling chain.
    pub fn pool_factor(&self) -> usize {
        self.gsl_pool * self.fusion_pool.pow(self.fusion_filters.len() as u32)
    }

    /// Number of attention tokens.
    pub fn tokens(&self) -> usize {
        self.window / self.pool_factor()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.channels == 0 || self.temporal_filters == 0 || self.joints == 0 {
            return bad("channels, temporal filters and joints must be positive".into());
        }
        if self.ltl_kernel == 0 || self.fusion_kernel == 0 {
            return bad("kernel widths must be positive".into());
        }
        if self.window < self.ltl_kernel {
            return bad(format!(
                "window {} is shorter than the temporal kernel {}",
                self.window, self.ltl_kernel
            ));
        }
        if self.gsl_pool == 0 || self.fusion_pool == 0 {
            return bad("pool widths must be positive".into());
        }
        if self.fusion_filters.is_empty() {
            return bad("at least one fusion block is required".into());
        }
        if self.fusion_filters.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("fusion filters {:?} must be strictly increasing", self.fusion_filters));
        }
        let factor = self.pool_factor();
        if self.window % factor != 0 {
            return bad(format!("window {} is not divisible by the pooling factor {factor}", self.window));
        }
        if self.attn_heads == 0 || self.attn_heads * self.attn_dim != self.embed_dim() {
            return bad(format!(
                "{} heads x {} dims does not factor the embedding width {}",
                self.attn_heads,
                self.attn_dim,
                self.embed_dim()
            ));
        }
        if self.hgp_depths.iter().any(|&d| d == 0) || self.hgp_depths.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("pyramid depths {:?} must be positive and strictly increasing", self.hgp_depths));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.max_norm > 0.0) {
            return bad(format!("max norm {} must be positive", self.max_norm));
        }
        Ok(())
    }
}
