#![no_main]

use libfuzzer_sys::fuzz_target;
use mollow::SpectrumSeries;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = SpectrumSeries::from_json(text) {
        let json = s.to_json().expect("serialize parsed spectrum");
        let back = SpectrumSeries::from_json(&json).expect("re-read of written JSON");
        assert_eq!(back.values, s.values);
    }
});
