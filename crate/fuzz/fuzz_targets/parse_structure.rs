#![no_main]

use libfuzzer_sys::fuzz_target;
use smas::inference::Structure;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = Structure::parse(text) {
        assert_eq!(Structure::parse(&s.notation()).expect("notation parses"), s);
    }
});
