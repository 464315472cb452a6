//! The trained-model bundle: schema, fitted preprocessor, training
//! configuration (which fixes both diffusion schedules), and denoiser
//! weights. Serialized as one versioned container so a checkpoint is
//! sufficient to impute on any table matching the schema.

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::preprocess::Preprocessor;
use crate::schema::TableSchema;
use crate::train::{TrainConfig, ValScore};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub schema: TableSchema,
    pub schema_fingerprint: u64,
    pub preprocessor: Preprocessor,
    pub config: TrainConfig,
    pub denoiser: Denoiser,
    /// Step whose validation score selected these weights.
    pub selected_step: u64,
    pub validation: Option<ValScore>,
}

impl Checkpoint {
    pub fn new(
        schema: TableSchema,
        preprocessor: Preprocessor,
        config: TrainConfig,
        denoiser: Denoiser,
        selected_step: u64,
        validation: Option<ValScore>,
    ) -> Self {
        let schema_fingerprint = schema.fingerprint();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            schema,
            schema_fingerprint,
            preprocessor,
            config,
            denoiser,
            selected_step,
            validation,
        }
    }
}
