#![no_main]

use libfuzzer_sys::fuzz_target;
use mollow::trajectory::{read_dump, write_dump};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rec) = read_dump(text) {
        let again = read_dump(&write_dump(&rec)).expect("re-read of written dump");
        assert_eq!(again.states, rec.states);
        assert_eq!(again.times, rec.times);
    }
});
