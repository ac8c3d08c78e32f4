//! Minimal stderr logger controlled by the `AJ_LOG` environment variable
//! (`error`, `warn`, `info`, `debug`; default `warn`).

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Warn = 1,
    Info = 2,
    Debug = 3,
}

fn threshold() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| {
        match std::env::var("AJ_LOG")
            .unwrap_or_default()
            .to_lowercase()
            .as_str()
        {
            "error" => Level::Error,
            "info" => Level::Info,
            "debug" => Level::Debug,
            "warn" | "" => Level::Warn,
            other => {
                eprintln!("[warn] unknown AJ_LOG level {other:?}, using warn");
                Level::Warn
            }
        }
    })
}

pub fn log(level: Level, msg: &str) {
    if level <= threshold() {
        let tag = match level {
            Level::Error => "error",
            Level::Warn => "warn",
            Level::Info => "info",
            Level::Debug => "debug",
        };
        eprintln!("[{tag}] {msg}");
    }
}

pub fn warn(msg: &str) {
    log(Level::Warn, msg);
}

pub fn info(msg: &str) {
    log(Level::Info, msg);
}

pub fn debug(msg: &str) {
    log(Level::Debug, msg);
}
