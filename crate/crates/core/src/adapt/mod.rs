//! Adversarial feature alignment: instance masking, domain discriminators,
//! the alignment losses and the training loop.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod disc;
mod loss;
mod mask;
mod train;

pub use disc::{Discriminators, Mlp, CELL_HIDDEN, INSTANCE_HIDDEN};
pub use loss::{combined_loss, conditional_loss, instance_weights, marginal_loss};
pub use mask::{box_vector, footprint_cells, mask_features, BOX_FEATURES};
pub use train::{
    batch_losses, discriminator_accuracy, domain_probabilities, epoch_order, evaluate_data, order_csv, select_instances,
    split_batches, train, train_log_csv, AugmentConfig, BatchLosses, DomainData, EpochLog, Monitor, OrderEntry, TrainConfig,
    TrainOutcome, UpdateOrder, CROP_MARGIN,
};

/// Which distributions are aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentMode {
    /// Class-conditional alignment of masked instance features.
    Conditional,
    /// Per-cell alignment of the whole feature map.
    Marginal,
    /// Both of the above through separate discriminators.
    Combined,
}

/// Instance discriminator layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscDesign {
    /// One discriminator, every instance weighted 1.
    A,
    /// One discriminator, instances weighted by their top confidence.
    B,
    /// One discriminator per class, weighted by each class confidence.
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub mode: AlignmentMode,
    pub design: DiscDesign,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self { mode: AlignmentMode::Conditional, design: DiscDesign::C }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == AlignmentMode::Marginal && self.design == DiscDesign::C {
            return Err(Error::Config(
                "class-wise discriminators need conditional or combined alignment".into(),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignmentMode::Conditional => "conditional",
            AlignmentMode::Marginal => "marginal",
            AlignmentMode::Combined => "combined",
        })
    }
}

impl FromStr for AlignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(AlignmentMode::Conditional),
            "marginal" => Ok(AlignmentMode::Marginal),
            "combined" => Ok(AlignmentMode::Combined),
            _ => Err(Error::Config(format!("unknown alignment mode '{s}'"))),
        }
    }
}

impl fmt::Display for DiscDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscDesign::A => "a",
            DiscDesign::B => "b",
            DiscDesign::C => "c",
        })
    }
}

impl FromStr for DiscDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(DiscDesign::A),
            "b" => Ok(DiscDesign::B),
            "c" => Ok(DiscDesign::C),
            _ => Err(Error::Config(format!("unknown discriminator design '{s}'"))),
        }
    }
}
