#![no_main]

use libfuzzer_sys::fuzz_target;
use smas::io::{parse_histories_str, write_histories, ParseOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for opts in [ParseOptions::default(), ParseOptions::with_states(3)] {
        if let Ok(parsed) = parse_histories_str(text, &opts) {
            let again = parse_histories_str(&write_histories(&parsed), &opts).expect("written histories parse");
            assert_eq!(parsed, again);
        }
    }
});
