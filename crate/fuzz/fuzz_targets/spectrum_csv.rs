#![no_main]

use libfuzzer_sys::fuzz_target;
use mollow::SpectrumSeries;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = SpectrumSeries::from_csv(text) {
        // Anything accepted must survive a write/read cycle.
        let back = SpectrumSeries::from_csv(&s.to_csv()).expect("re-read of written CSV");
        assert_eq!(back.omega, s.omega);
        assert_eq!(back.values, s.values);
    }
});
