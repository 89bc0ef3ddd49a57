//! Fuzz target: experiment config deserialization and validation. Config
//! files are text, so the bytes are interpreted lossily; any input must
//! produce either a validated config or a structured error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use vmulab::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let _ = ExperimentConfig::from_toml_str(&text);
});
