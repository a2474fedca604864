#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::planner::PlannerModel;

fuzz_target!(|text: &str| {
    if let Ok(model) = PlannerModel::from_json(text) {
        let json = model.to_json();
        assert_eq!(PlannerModel::from_json(&json).expect("re-encoded planner parses").to_json(), json);
    }
});
