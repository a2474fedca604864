#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::planner::StepConstants;

fuzz_target!(|text: &str| {
    if let Ok(c) = StepConstants::from_json(text) {
        assert_eq!(StepConstants::from_json(&c.to_json()).expect("re-encoded constants parse"), c);
    }
});
