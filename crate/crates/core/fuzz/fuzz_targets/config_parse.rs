#![no_main]
use libfuzzer_sys::fuzz_target;
use windcast::config::RunConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = RunConfig::from_toml_str(data) {
        let text = cfg.to_toml_string();
        let again = RunConfig::from_toml_str(&text).expect("serialized config must parse");
        assert_eq!(again.to_toml_string(), text);
    }
});
