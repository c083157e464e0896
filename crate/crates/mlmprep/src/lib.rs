//! File formats, orchestration and the `mlmprep` command-line tool on top of
//! [`mlmprep_core`].

pub mod docs;
mod error;
pub mod grid;
pub mod logging;
pub mod manifest;
pub mod masking;
pub mod metrics_io;
pub mod pipeline;
pub mod shards;
pub mod shuffle;
pub mod tokenizer;

pub use error::{Error, Result};

/// Version of this tool.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tool, shard and tokenizer format versions.
pub fn version_info() -> serde_json::Value {
    serde_json::json!({
        "tool_version": TOOL_VERSION,
        "shard_format_version": mlmprep_core::packer::SHARD_FORMAT_VERSION,
        "tokenizer_format_version": mlmprep_core::bbpe::TOKENIZER_FORMAT_VERSION,
    })
}

/// Lower-case hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &std::path::Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
