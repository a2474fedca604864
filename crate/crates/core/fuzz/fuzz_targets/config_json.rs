#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::harness::ExperimentConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let _ = cfg.loop_config();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).expect("re-encoded config parses"), cfg);
    }
});
