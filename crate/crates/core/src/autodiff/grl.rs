use serde::{Deserialize, Serialize};

/// Weight of the gradient reversal as a function of training progress `p ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GrlCoefficient {
    Constant { lambda: f64 },
    /// `alpha · (2 / (1 + exp(-gamma·p)) - 1)`, rising from 0 towards `alpha`.
    Scheduled { alpha: f64, gamma: f64 },
}

impl Default for GrlCoefficient {
    fn default() -> Self {
        GrlCoefficient::Constant { lambda: 0.1 }
    }
}

impl GrlCoefficient {
    pub fn value(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        match *self {
            GrlCoefficient::Constant { lambda } => lambda,
            GrlCoefficient::Scheduled { alpha, gamma } => {
                alpha * (2.0 / (1.0 + (-gamma * p).exp()) - 1.0)
            }
        }
    }
}
