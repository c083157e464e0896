//! Diagnostics on stderr, as plain text or as one JSON object per line.

use std::io::Write;

/// Installs the global logger. The level comes from `RUST_LOG` when set,
/// otherwise from `verbosity` (0 = warn, 1 = info, 2+ = debug).
pub fn init(json: bool, verbosity: u8) {
    let default = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default));
    builder.target(env_logger::Target::Stderr);
    if json {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str().to_lowercase(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    let _ = builder.try_init();
}
