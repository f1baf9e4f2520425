#![no_main]

use libfuzzer_sys::fuzz_target;
use xdc::config::ExperimentConfig;

// Covers both the key-value and the JSON syntax; the parser picks by the
// leading character.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::parse_str(text) {
        let again = ExperimentConfig::parse_str(&config.to_key_values()).expect("normalised config parses");
        assert_eq!(config, again);
    }
});
