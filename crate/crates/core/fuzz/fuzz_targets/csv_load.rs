#![no_main]
use libfuzzer_sys::fuzz_target;
use windcast::config::RunConfig;
use windcast::data::read_csv;

fuzz_target!(|data: &[u8]| {
    let cfg = RunConfig::default();
    if let Ok(frame) = read_csv(data, &cfg) {
        let n = frame.timestamps.len();
        assert!(n > 0 && frame.speed.len() == n && frame.power.len() == n);
        assert!(frame.timestamps.windows(2).all(|w| w[0] < w[1]));
        assert!(frame.speed.iter().all(|s| s.is_finite() && *s > 0.0));
        assert!(frame.power.iter().all(|p| (0.0..=100.0).contains(p)));
    }
});
