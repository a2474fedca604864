#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::sbow::SBoWIndex;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = SBoWIndex::from_bytes(data) {
        assert_eq!(index.to_bytes(), data);
    }
});
