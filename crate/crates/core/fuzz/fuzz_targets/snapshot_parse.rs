#![no_main]
use libfuzzer_sys::fuzz_target;
use windcast::snapshot::{parse_snapshot, to_json};

fuzz_target!(|data: &str| {
    if let Ok(model) = parse_snapshot(data) {
        if let Ok(text) = to_json(&model) {
            let again = parse_snapshot(&text).expect("serialized snapshot must parse");
            assert_eq!(to_json(&again).unwrap(), text);
        }
    }
});
