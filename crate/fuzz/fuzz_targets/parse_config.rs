#![no_main]

use libfuzzer_sys::fuzz_target;
use smas::io::ModelConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ModelConfig::from_json_str(text) else {
        return;
    };
    let again = ModelConfig::from_json_str(&cfg.to_json()).expect("written config parses");
    assert_eq!(cfg.to_json(), again.to_json());
    if let Ok(t) = cfg.occasions(None) {
        if t <= 64 {
            let _ = cfg.parameter_map(t);
        }
    }
});
