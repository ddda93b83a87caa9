#![no_main]

use libfuzzer_sys::fuzz_target;
use mollow_cli::{extract_settings, parse_settings, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(settings) = parse_settings(text) {
        // Validation only; nothing is simulated here.
        let _ = RunConfig::from_settings(&settings);
    }
    // Also covers CSV headers and JSON config blocks.
    let _ = extract_settings(text);
});
