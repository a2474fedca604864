#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::detector::{ActivatedFeature, LandmarkDetector};

fuzz_target!(|text: &str| {
    if let Ok(det) = LandmarkDetector::from_json(text, 640) {
        let again = LandmarkDetector::from_json(&det.to_json(), 640).expect("re-encoded codebook parses");
        assert_eq!(again, det);
        let _ = det.codebook.quantize(&ActivatedFeature([0.5; 4]));
    }
});
