//! Numeric defaults of the reference pre-training and fine-tuning setup.
//!
//! Every stage reads its defaults from here; configuration files only
//! override them.

/// Target vocabulary size: 256 byte symbols, 5 specials and the merges.
pub const VOCAB_SIZE: usize = 52_009;

/// Positions per packed training sequence, including `<s>` and `</s>`.
pub const SEQUENCE_LENGTH: usize = 512;

/// Payload positions per sequence (sequence length minus `<s>` and `</s>`).
pub const PAYLOAD_LENGTH: usize = SEQUENCE_LENGTH - 2;

pub const MASK_PROB: f64 = 0.15;
pub const MASK_ACTION_PROB: f64 = 0.8;
pub const RANDOM_ACTION_PROB: f64 = 0.1;
pub const KEEP_ACTION_PROB: f64 = 0.1;

/// Label value for positions that carry no masked-LM target.
pub const IGNORE_SENTINEL: u32 = u32::MAX;

pub const WARMUP_STEPS: u64 = 10_000;
pub const PEAK_LR: f64 = 7e-4;
pub const TOTAL_STEPS: u64 = 100_000;
pub const END_LR: f64 = 0.0;
pub const DECAY_POWER: f64 = 1.0;

/// Sequences per optimizer update in pre-training.
pub const PRETRAIN_BATCH_SIZE: u64 = 8_192;

/// Fine-tuning grid.
pub const GRID_LEARNING_RATES: [f64; 6] = [5e-5, 2e-5, 1e-5, 7e-6, 5e-6, 1e-6];
pub const GRID_BATCH_SIZES: [u32; 4] = [16, 32, 48, 64];
pub const GRID_EPOCHS: u32 = 30;
pub const GRID_EPOCHS_NLI: u32 = 10;

/// Fraction of a training set held out for validation when a task ships
/// without a validation split.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Number of hash buckets used by the document shuffle.
pub const SHUFFLE_BUCKETS: u32 = 64;
